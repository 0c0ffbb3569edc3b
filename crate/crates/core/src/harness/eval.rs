use std::collections::BTreeMap;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::manifest::CorpusManifest;
use super::noise::{mix_noise, NoiseBank};
use super::profile::{RealtimeReport, StageTimer};
use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Anything that maps an utterance to a vocabulary index.
pub trait WordClassifier<T: Real>: Sync {
    fn vocabulary(&self) -> Vec<String>;

    /// Classifies `audio`, adding the wall time of each processing stage
    /// to `timer`.
    fn classify_timed(&self, audio: &AudioSignal<T>, timer: &mut StageTimer) -> Result<usize>;

    fn classify(&self, audio: &AudioSignal<T>) -> Result<usize> {
        self.classify_timed(audio, &mut StageTimer::default())
    }
}

/// Report key of an SNR: `clean` for +∞, else the number in dB.
pub fn snr_key(snr_db: f64) -> String {
    if snr_db == f64::INFINITY {
        "clean".into()
    } else {
        format!("{snr_db}")
    }
}

/// Parses `-5,0,10,clean`.
pub fn parse_snr_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            if t.eq_ignore_ascii_case("clean") {
                Ok(f64::INFINITY)
            } else {
                t.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidInput(format!("bad SNR `{t}`")))
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseGrid {
    pub noises: Vec<String>,
    /// dB; `f64::INFINITY` is the clean condition.
    #[serde(with = "snr_list")]
    pub snrs: Vec<f64>,
}

mod snr_list {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| super::snr_key(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let keys = Vec::<String>::deserialize(d)?;
        super::parse_snr_list(&keys.join(",")).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub system: String,
    pub noise: String,
    pub snr: String,
    pub correct: usize,
    pub total: usize,
    pub rate: f64,
    /// Rows are true words, columns recognized words.
    pub confusion: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub vocabulary: Vec<String>,
    /// system → noise → snr → recognition rate in percent.
    pub rates: BTreeMap<String, BTreeMap<String, BTreeMap<String, f64>>>,
    pub cells: Vec<Cell>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub realtime: BTreeMap<String, RealtimeReport>,
}

impl EvaluationReport {
    pub fn rate(&self, system: &str, noise: &str, snr_db: f64) -> Option<f64> {
        self.rates.get(system)?.get(noise)?.get(&snr_key(snr_db)).copied()
    }

    fn push(&mut self, cell: Cell) {
        self.rates
            .entry(cell.system.clone())
            .or_default()
            .entry(cell.noise.clone())
            .or_default()
            .insert(cell.snr.clone(), cell.rate);
        self.cells.push(cell);
    }

    pub fn merge(&mut self, other: EvaluationReport) {
        if self.vocabulary.is_empty() {
            self.vocabulary = other.vocabulary;
        }
        for c in other.cells {
            self.push(c);
        }
        self.realtime.extend(other.realtime);
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["system", "noise", "snr", "correct", "total", "rate"])?;
        for c in &self.cells {
            w.write_record([
                c.system.clone(),
                c.noise.clone(),
                c.snr.clone(),
                c.correct.to_string(),
                c.total.to_string(),
                format!("{:.2}", c.rate),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn mix_seed(seed: u64, file: usize, noise: usize) -> u64 {
    seed ^ (file as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (noise as u64 + 1).wrapping_mul(0xC2B2_AE3D_27D4_EB4F)
}

/// Recognition rate of `classifier` on every (noise, SNR) cell of `grid`.
/// The clean condition is computed once and reported under every noise.
pub fn evaluate<T: Real, C: WordClassifier<T>>(
    system: &str,
    classifier: &C,
    test: &CorpusManifest,
    grid: &NoiseGrid,
    noises: &NoiseBank,
    seed: u64,
) -> Result<EvaluationReport> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let vocabulary = classifier.vocabulary();
    let truth = test
        .entries()
        .iter()
        .map(|e| {
            vocabulary
                .iter()
                .position(|v| *v == e.label)
                .ok_or_else(|| Error::InvalidInput(format!("test label `{}` is not in the model vocabulary", e.label)))
        })
        .collect::<Result<Vec<usize>>>()?;
    let speech = test
        .entries()
        .par_iter()
        .map(|e| test.load_audio::<T>(e, noises))
        .collect::<Result<Vec<_>>>()?;
    let noise_signals = grid
        .noises
        .iter()
        .map(|n| noises.get(n).map(|s| s.cast::<T>()))
        .collect::<Result<Vec<_>>>()?;

    // (noise index, snr); `None` noise is the clean pass.
    let mut conditions: Vec<(Option<usize>, f64)> = Vec::new();
    if grid.snrs.contains(&f64::INFINITY) {
        conditions.push((None, f64::INFINITY));
    }
    for n in 0..grid.noises.len() {
        for &snr in grid.snrs.iter().filter(|s| s.is_finite()) {
            conditions.push((Some(n), snr));
        }
    }
    let jobs: Vec<(usize, usize)> = (0..conditions.len())
        .flat_map(|c| (0..speech.len()).map(move |f| (c, f)))
        .collect();
    let predictions = jobs
        .par_iter()
        .map(|&(c, f)| {
            let (noise, snr) = conditions[c];
            match noise {
                None => classifier.classify(&speech[f]),
                Some(n) => {
                    let mixed = mix_noise(&speech[f], &noise_signals[n], snr, mix_seed(seed, f, n))?;
                    classifier.classify(&mixed.signal)
                }
            }
        })
        .collect::<Result<Vec<usize>>>()?;

    let mut report = EvaluationReport {
        vocabulary: vocabulary.clone(),
        ..Default::default()
    };
    let v = vocabulary.len();
    for (c, &(noise, snr)) in conditions.iter().enumerate() {
        let mut confusion = vec![vec![0usize; v]; v];
        for f in 0..speech.len() {
            confusion[truth[f]][predictions[c * speech.len() + f]] += 1;
        }
        let correct: usize = (0..v).map(|i| confusion[i][i]).sum();
        let total = speech.len();
        let names: Vec<String> = match noise {
            Some(n) => vec![grid.noises[n].clone()],
            None if grid.noises.is_empty() => vec!["none".into()],
            None => grid.noises.clone(),
        };
        for name in names {
            report.push(Cell {
                system: system.to_string(),
                noise: name,
                snr: snr_key(snr),
                correct,
                total,
                rate: 100.0 * correct as f64 / total as f64,
                confusion: confusion.clone(),
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{ManifestEntry, Split};

    struct Oracle(Vec<String>);

    impl WordClassifier<f64> for Oracle {
        fn vocabulary(&self) -> Vec<String> {
            self.0.clone()
        }

        fn classify_timed(&self, _: &AudioSignal<f64>, _: &mut StageTimer) -> Result<usize> {
            Ok(0)
        }
    }

    fn one_word_corpus(n: usize) -> (tempfile::TempDir, CorpusManifest) {
        let dir = tempfile::tempdir().unwrap();
        let mut entries = Vec::new();
        for i in 0..n {
            let a = AudioSignal::new((0..800).map(|k| 0.1 * ((k * (i + 3)) as f64 * 0.05).sin()).collect(), 16_000).unwrap();
            let path = format!("u{i}.wav");
            crate::audio::write_wav(dir.path().join(&path), &a).unwrap();
            entries.push(ManifestEntry { path: path.into(), label: "only".into(), speaker: "s".into(), split: Split::Test, mix: None });
        }
        let m = CorpusManifest::new(entries, dir.path()).unwrap();
        (dir, m)
    }

    #[test]
    fn perfect_recognizer_scores_100_everywhere() {
        let (_dir, m) = one_word_corpus(3);
        let grid = NoiseGrid { noises: vec!["white".into(), "babble".into()], snrs: parse_snr_list("-5,0,20,clean").unwrap() };
        let bank = NoiseBank::new(None, 16_000, 1);
        let r = evaluate("oracle", &Oracle(vec!["only".into()]), &m, &grid, &bank, 5).unwrap();
        assert_eq!(r.cells.len(), 8);
        for c in &r.cells {
            assert_eq!(c.rate, 100.0);
            assert_eq!(c.confusion[0][0], 3);
        }
        assert_eq!(r.rate("oracle", "babble", f64::INFINITY), Some(100.0));
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<EvaluationReport>(&json).unwrap(), r);
    }

    #[test]
    fn empty_or_unknown_labels_rejected() {
        let (_dir, m) = one_word_corpus(1);
        let grid = NoiseGrid { noises: vec![], snrs: vec![f64::INFINITY] };
        let bank = NoiseBank::new(None, 16_000, 1);
        let empty = m.with_entries(vec![]);
        assert!(evaluate("x", &Oracle(vec!["only".into()]), &empty, &grid, &bank, 0).is_err());
        assert!(evaluate("x", &Oracle(vec!["other".into()]), &m, &grid, &bank, 0).is_err());
    }

    #[test]
    fn snr_list_parsing() {
        assert_eq!(parse_snr_list("-5, 0,clean").unwrap(), vec![-5.0, 0.0, f64::INFINITY]);
        assert!(parse_snr_list("ten").is_err());
        assert_eq!(snr_key(20.0), "20");
    }
}
