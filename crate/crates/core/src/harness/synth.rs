//! Formant-synthesized pseudo-words standing in for a licensed isolated-word
//! corpus.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::manifest::{CorpusManifest, ManifestEntry, Split};
use crate::audio::{write_wav, AudioSignal};
use crate::error::{Error, Result};

type Formants = [f64; 3];

const I: Formants = [280.0, 2250.0, 2900.0];
const E: Formants = [450.0, 1950.0, 2600.0];
const A: Formants = [750.0, 1150.0, 2450.0];
const O: Formants = [500.0, 850.0, 2400.0];
const U: Formants = [320.0, 800.0, 2250.0];
const ER: Formants = [480.0, 1350.0, 1700.0];
const AE: Formants = [660.0, 1700.0, 2450.0];
const S: Formants = [4500.0, 5500.0, 6500.0];
const SH: Formants = [2500.0, 3300.0, 4200.0];
const K: Formants = [1800.0, 2600.0, 3500.0];

pub(crate) const VOWELS: [Formants; 7] = [I, E, A, O, U, ER, AE];

#[derive(Debug, Clone, Copy, PartialEq)]
enum Source {
    Voiced,
    Noise,
    Silence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Segment {
    source: Source,
    from: Formants,
    to: Formants,
    /// Seconds.
    dur: f64,
    amp: (f64, f64),
    /// Bandwidth multiplier.
    bw: f64,
}

fn vowel(from: Formants, to: Formants, dur: f64) -> Segment {
    Segment { source: Source::Voiced, from, to, dur, amp: (1.0, 1.0), bw: 1.0 }
}

fn noise(f: Formants, dur: f64, amp: f64) -> Segment {
    Segment { source: Source::Noise, from: f, to: f, dur, amp: (amp, amp), bw: 4.0 }
}

fn gap(dur: f64) -> Segment {
    Segment { source: Source::Silence, from: A, to: A, dur, amp: (0.0, 0.0), bw: 1.0 }
}

fn word(class: usize) -> Vec<Segment> {
    match class {
        0 => vec![vowel(A, A, 0.12), vowel(A, I, 0.18), vowel(I, I, 0.12)],
        1 => vec![vowel(I, I, 0.12), vowel(I, A, 0.18), vowel(A, A, 0.12)],
        2 => vec![vowel(U, U, 0.10), vowel(U, I, 0.20), vowel(I, I, 0.12)],
        3 => vec![noise(S, 0.14, 0.5), vowel(A, A, 0.28)],
        4 => vec![vowel(O, O, 0.12), vowel(O, E, 0.18), vowel(E, E, 0.12)],
        5 => vec![vowel(E, E, 0.12), vowel(E, U, 0.18), vowel(U, U, 0.12)],
        6 => vec![noise(K, 0.03, 1.0), gap(0.03), vowel(I, I, 0.12), vowel(I, U, 0.18)],
        7 => vec![vowel(A, U, 0.16), vowel(U, A, 0.16), vowel(A, A, 0.08)],
        8 => vec![noise(SH, 0.14, 0.5), vowel(O, O, 0.28)],
        9 => vec![vowel(ER, ER, 0.10), vowel(ER, I, 0.14), vowel(I, ER, 0.14)],
        _ => random_word(class),
    }
}

/// Classes beyond the fixed ten are random vowel walks.
fn random_word(class: usize) -> Vec<Segment> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5EED_0000 + class as u64);
    let n = rng.random_range(2..4);
    let mut prev = VOWELS[rng.random_range(0..VOWELS.len())];
    let mut segs = Vec::new();
    if rng.random_bool(0.3) {
        segs.push(noise(if rng.random_bool(0.5) { S } else { SH }, 0.12, 0.5));
    }
    for _ in 0..n {
        let next = VOWELS[rng.random_range(0..VOWELS.len())];
        segs.push(vowel(prev, next, rng.random_range(0.12..0.2)));
        prev = next;
    }
    segs
}

/// Two-pole resonator with unit gain at its centre frequency.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Resonator {
    y1: f64,
    y2: f64,
}

impl Resonator {
    pub(crate) fn step(&mut self, x: f64, freq: f64, bw: f64, sr: f64) -> f64 {
        let r = (-std::f64::consts::PI * bw / sr).exp();
        let theta = 2.0 * std::f64::consts::PI * freq.min(0.49 * sr) / sr;
        let gain = (1.0 - r) * (1.0 - 2.0 * r * (2.0 * theta).cos() + r * r).sqrt();
        let y = gain * x + 2.0 * r * theta.cos() * self.y1 - r * r * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Glottal pulse train followed by a formant cascade.
#[derive(Debug, Clone, Default)]
pub(crate) struct FormantVoice {
    phase: f64,
    glottal: f64,
    res: [Resonator; 3],
}

const BANDWIDTHS: [f64; 3] = [80.0, 100.0, 150.0];

impl FormantVoice {
    pub(crate) fn sample(&mut self, voiced: f64, noise: f64, f0: f64, formants: &Formants, bw: f64, sr: f64) -> f64 {
        self.phase += f0 / sr;
        let pulse = if self.phase >= 1.0 {
            self.phase -= 1.0;
            1.0
        } else {
            0.0
        };
        self.glottal = 0.9 * self.glottal + pulse;
        let mut x = voiced * self.glottal * (f0 / sr).sqrt() * 8.0 + noise;
        for (k, r) in self.res.iter_mut().enumerate() {
            x = r.step(x, formants[k], BANDWIDTHS[k] * bw, sr);
        }
        x
    }
}

#[derive(Debug, Clone, Copy)]
struct Speaker {
    scale: f64,
    f0: f64,
}

fn speaker(id: usize) -> Speaker {
    const FIXED: [(f64, f64); 4] = [(0.92, 115.0), (0.97, 135.0), (1.04, 185.0), (1.09, 225.0)];
    match FIXED.get(id) {
        Some(&(scale, f0)) => Speaker { scale, f0 },
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5BEA_0000 + id as u64);
            Speaker {
                scale: rng.random_range(0.9..1.1),
                f0: rng.random_range(100.0..240.0),
            }
        }
    }
}

fn lerp(a: f64, b: f64, x: f64) -> f64 {
    a + (b - a) * x
}

/// One utterance of `class` by `speaker`; `rng` drives the token-level
/// variation (timing, formant and pitch jitter, level, padding).
pub fn synth_utterance(class: usize, speaker_id: usize, sample_rate: u32, rng: &mut impl Rng) -> AudioSignal<f64> {
    let sr = sample_rate as f64;
    let spk = speaker(speaker_id);
    let tempo = rng.random_range(0.85..1.15);
    let f0_start = spk.f0 * rng.random_range(0.92..1.08);
    let f0_end = f0_start * rng.random_range(0.8..1.0);
    let mut jitter = || -> f64 { rng.random_range(0.96..1.04) };
    let segments: Vec<Segment> = word(class)
        .into_iter()
        .map(|mut s| {
            s.dur *= tempo;
            for k in 0..3 {
                let j = jitter();
                s.from[k] *= spk.scale * j;
                s.to[k] *= spk.scale * j;
            }
            s
        })
        .collect();
    let lead = (rng.random_range(0.04..0.12) * sr) as usize;
    let tail = (rng.random_range(0.04..0.12) * sr) as usize;
    let body: usize = segments.iter().map(|s| (s.dur * sr) as usize).sum();

    let mut out = vec![0.0; lead];
    let mut voice = FormantVoice::default();
    let mut done = 0usize;
    let ramp = (0.015 * sr) as usize;
    for s in &segments {
        let n = (s.dur * sr) as usize;
        for i in 0..n {
            let x = i as f64 / n as f64;
            let f: Formants = std::array::from_fn(|k| lerp(s.from[k], s.to[k], x));
            let f0 = lerp(f0_start, f0_end, (done + i) as f64 / body as f64);
            let amp = lerp(s.amp.0, s.amp.1, x);
            let (v, nz) = match s.source {
                Source::Voiced => (amp, 0.02 * rng.sample::<f64, _>(StandardNormal)),
                Source::Noise => (0.0, amp * rng.sample::<f64, _>(StandardNormal)),
                Source::Silence => (0.0, 0.0),
            };
            let mut y = voice.sample(v, nz, f0, &f, s.bw, sr);
            let pos = done + i;
            let edge = pos.min(body - 1 - pos.min(body - 1));
            if edge < ramp {
                y *= edge as f64 / ramp as f64;
            }
            out.push(y);
        }
        done += n;
    }
    out.extend(std::iter::repeat_n(0.0, tail));
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let level = rng.random_range(0.3..0.8) / peak;
    for v in out.iter_mut() {
        *v = *v * level + 1e-4 * rng.sample::<f64, _>(StandardNormal);
    }
    AudioSignal::new(out, sample_rate).expect("finite synthesis")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthCorpusConfig {
    pub classes: usize,
    pub speakers: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub sample_rate: u32,
    pub seed: u64,
}

impl Default for SynthCorpusConfig {
    fn default() -> Self {
        Self {
            classes: 10,
            speakers: 4,
            train_per_class: 20,
            test_per_class: 20,
            sample_rate: 16_000,
            seed: 7,
        }
    }
}

pub fn class_label(class: usize) -> String {
    format!("w{class:02}")
}

/// Utterances in manifest order, without touching the disk.
pub fn synth_entries(cfg: &SynthCorpusConfig) -> Result<Vec<(ManifestEntry, AudioSignal<f64>)>> {
    if cfg.classes == 0 || cfg.speakers == 0 || cfg.train_per_class + cfg.test_per_class == 0 {
        return Err(Error::Config("synthetic corpus needs classes, speakers and utterances".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for (split, count) in [(Split::Train, cfg.train_per_class), (Split::Test, cfg.test_per_class)] {
        let dir = if split == Split::Train { "train" } else { "test" };
        for class in 0..cfg.classes {
            for i in 0..count {
                let spk = i % cfg.speakers;
                let audio = synth_utterance(class, spk, cfg.sample_rate, &mut rng);
                let entry = ManifestEntry {
                    path: format!("{dir}/{}_s{spk}_{i:03}.wav", class_label(class)).into(),
                    label: class_label(class),
                    speaker: format!("s{spk}"),
                    split,
                    mix: None,
                };
                out.push((entry, audio));
            }
        }
    }
    Ok(out)
}

/// Writes the corpus as WAV files plus `manifest.json` under `dir`.
pub fn synth_corpus(cfg: &SynthCorpusConfig, dir: impl AsRef<Path>) -> Result<CorpusManifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir.join("train"))?;
    std::fs::create_dir_all(dir.join("test"))?;
    let mut entries = Vec::new();
    for (entry, audio) in synth_entries(cfg)? {
        write_wav(dir.join(&entry.path), &audio)?;
        entries.push(entry);
    }
    let manifest = CorpusManifest::new(entries, dir)?;
    manifest.save(dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn utterances_fit_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for class in 0..12 {
            let a = synth_utterance(class, class % 5, 16_000, &mut rng);
            assert!(a.duration_secs() > 0.3 && a.duration_secs() < 1.0);
            assert!(a.samples().iter().all(|v| v.abs() <= 1.0));
            assert!(a.power() > 1e-4);
        }
    }

    #[test]
    fn resonator_has_unit_peak_gain() {
        let sr = 16_000.0;
        let mut r = Resonator::default();
        let mut peak = 0.0f64;
        for n in 0..16_000 {
            let x = (2.0 * std::f64::consts::PI * 1000.0 * n as f64 / sr).sin();
            let y = r.step(x, 1000.0, 100.0, sr);
            if n > 8000 {
                peak = peak.max(y.abs());
            }
        }
        assert!((peak - 1.0).abs() < 0.02, "{peak}");
    }

    #[test]
    fn corpus_layout() {
        let cfg = SynthCorpusConfig { classes: 3, speakers: 2, train_per_class: 2, test_per_class: 1, ..Default::default() };
        let dir = tempfile::tempdir().unwrap();
        let m = synth_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(m.len(), 9);
        assert_eq!(m.split(Split::Train).len(), 6);
        let loaded = CorpusManifest::load(dir.path().join("manifest.json")).unwrap();
        assert_eq!(loaded.vocabulary(), ["w00", "w01", "w02"]);
    }
}
