use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::synth::{FormantVoice, Resonator, VOWELS};
use crate::audio::{read_wav, AudioSignal};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Seconds of noise generated for the built-in generators.
const GENERATED_SECS: f64 = 12.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub name: String,
    pub snr_db: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(name: impl Into<String>, snr_db: f64, seed: u64) -> Result<Self> {
        if !snr_db.is_finite() {
            return Err(Error::InvalidInput(format!("SNR {snr_db} dB is not finite")));
        }
        Ok(Self { name: name.into(), snr_db, seed })
    }
}

/// Result of [`mix_noise`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseMix<T> {
    pub signal: AudioSignal<T>,
    /// Factor applied to the noise segment to reach the SNR.
    pub noise_gain: f64,
    /// Factor applied to the sum to keep samples within [-1, 1].
    pub joint_gain: f64,
    /// Noise samples before scaling, aligned with the speech.
    pub noise_segment: Vec<T>,
}

/// Adds `noise` to `speech` at `snr_db` measured over the whole utterance.
/// The noise is read circularly from a seeded random offset. An infinite
/// SNR returns the speech untouched.
pub fn mix_noise<T: Real>(speech: &AudioSignal<T>, noise: &AudioSignal<T>, snr_db: f64, seed: u64) -> Result<NoiseMix<T>> {
    if snr_db == f64::INFINITY {
        return Ok(NoiseMix {
            signal: speech.clone(),
            noise_gain: 0.0,
            joint_gain: 1.0,
            noise_segment: vec![T::zero(); speech.len()],
        });
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidInput(format!("SNR {snr_db} dB")));
    }
    let resampled;
    let noise = if noise.sample_rate() != speech.sample_rate() {
        resampled = noise.resampled(speech.sample_rate())?;
        &resampled
    } else {
        noise
    };
    let ps = speech.power();
    let pn = noise.power();
    if ps == 0.0 {
        return Err(Error::InvalidInput("speech has zero power".into()));
    }
    if pn == 0.0 {
        return Err(Error::InvalidInput("noise has zero power".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let offset = rng.random_range(0..noise.len());
    let src = noise.samples();
    let segment: Vec<T> = (0..speech.len()).map(|i| src[(offset + i) % src.len()]).collect();
    let seg_power = segment.iter().map(|v| v.as_f64().powi(2)).sum::<f64>() / segment.len() as f64;
    if seg_power == 0.0 {
        return Err(Error::InvalidInput("noise segment has zero power".into()));
    }
    let gain = (ps / (seg_power * 10f64.powf(snr_db / 10.0))).sqrt();
    let g = T::lit(gain);
    let mut mixed: Vec<T> = speech.samples().iter().zip(&segment).map(|(&s, &n)| s + n * g).collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
    let joint = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    if joint < 1.0 {
        let j = T::lit(joint);
        mixed.iter_mut().for_each(|v| *v *= j);
    }
    Ok(NoiseMix {
        signal: AudioSignal::new(mixed, speech.sample_rate())?,
        noise_gain: gain,
        joint_gain: joint,
        noise_segment: segment,
    })
}

/// Resolves noise names to signals and caches them.
///
/// `file:<path>` reads a WAV file. Other names look for `<name>.wav` in the
/// noise directory first; `white`, `babble`, `volvo` and `destroyerengine`
/// fall back to seeded generators.
#[derive(Debug)]
pub struct NoiseBank {
    noise_dir: Option<PathBuf>,
    sample_rate: u32,
    seed: u64,
    cache: Mutex<HashMap<String, Arc<AudioSignal<f64>>>>,
}

pub const GENERATED_NOISES: [&str; 4] = ["white", "babble", "volvo", "destroyerengine"];

impl NoiseBank {
    pub fn new(noise_dir: Option<PathBuf>, sample_rate: u32, seed: u64) -> Self {
        Self {
            noise_dir,
            sample_rate,
            seed,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn get(&self, name: &str) -> Result<Arc<AudioSignal<f64>>> {
        if let Some(s) = self.cache.lock().expect("noise cache").get(name) {
            return Ok(s.clone());
        }
        let signal = Arc::new(self.resolve(name)?);
        self.cache.lock().expect("noise cache").insert(name.to_string(), signal.clone());
        Ok(signal)
    }

    fn resolve(&self, name: &str) -> Result<AudioSignal<f64>> {
        if let Some(path) = name.strip_prefix("file:") {
            return read_wav(Path::new(path));
        }
        if let Some(dir) = &self.noise_dir {
            let path = dir.join(format!("{name}.wav"));
            if path.is_file() {
                return read_wav(path);
            }
        }
        let mut h = self.seed;
        for b in name.bytes() {
            h = (h ^ b as u64).wrapping_mul(0x0100_0000_01B3);
        }
        generate_noise(name, self.sample_rate, GENERATED_SECS, h)
    }
}

/// Built-in noise generators, normalized to unit power.
pub fn generate_noise(name: &str, sample_rate: u32, secs: f64, seed: u64) -> Result<AudioSignal<f64>> {
    let n = (secs * sample_rate as f64) as usize;
    let sr = sample_rate as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gauss = move || -> f64 { rng.sample(StandardNormal) };
    let mut x: Vec<f64> = match name {
        "white" => (0..n).map(|_| gauss()).collect(),
        "babble" => babble(n, sr, seed),
        "volvo" => {
            // Car interior: strongly low-passed noise with a slow swell.
            let mut lp1 = 0.0;
            let mut lp2 = 0.0;
            let a = (-2.0 * std::f64::consts::PI * 120.0 / sr).exp();
            (0..n)
                .map(|i| {
                    lp1 = a * lp1 + (1.0 - a) * gauss();
                    lp2 = a * lp2 + (1.0 - a) * lp1;
                    lp2 * (1.0 + 0.3 * (2.0 * std::f64::consts::PI * 0.4 * i as f64 / sr).sin())
                })
                .collect()
        }
        "destroyerengine" => {
            // Engine room: drifting harmonic series over band-limited noise.
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE1);
            let phases: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            let mut res = Resonator::default();
            let mut phase = 0.0;
            (0..n)
                .map(|i| {
                    let t = i as f64 / sr;
                    phase += 62.0 * (1.0 + 0.01 * (2.0 * std::f64::consts::PI * 0.25 * t).sin()) / sr;
                    let hum: f64 = phases
                        .iter()
                        .enumerate()
                        .map(|(k, p)| ((k + 1) as f64 * std::f64::consts::TAU * phase + p).sin() / (k + 1) as f64)
                        .sum();
                    hum + 3.0 * res.step(gauss(), 2200.0, 1500.0, sr)
                })
                .collect()
        }
        other => return Err(Error::InvalidInput(format!("unknown noise `{other}` (no file and no generator)"))),
    };
    let p = x.iter().map(|v| v * v).sum::<f64>() / n.max(1) as f64;
    if p > 0.0 {
        let g = p.sqrt().recip();
        x.iter_mut().for_each(|v| *v *= g);
    }
    AudioSignal::new(x, sample_rate)
}

/// Several overlapping formant voices with syllabic gating.
fn babble(n: usize, sr: f64, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for talker in 0..6u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (talker + 1).wrapping_mul(0x9E37_79B9));
        let f0 = rng.random_range(100.0..240.0);
        let mut voice = FormantVoice::default();
        let mut i = 0;
        let mut current = VOWELS[rng.random_range(0..VOWELS.len())];
        while i < n {
            let len = (rng.random_range(0.12..0.3) * sr) as usize;
            let next = VOWELS[rng.random_range(0..VOWELS.len())];
            let level = rng.random_range(0.2..1.0);
            for j in 0..len.min(n - i) {
                let x = j as f64 / len as f64;
                let f: [f64; 3] = std::array::from_fn(|k| current[k] + (next[k] - current[k]) * x);
                let env = level * (std::f64::consts::PI * x).sin().powi(2);
                let pitch = f0 * (1.0 + 0.05 * (std::f64::consts::TAU * 3.0 * (i + j) as f64 / sr).sin());
                out[i + j] += voice.sample(env, 0.0, pitch, &f, 1.0, sr);
            }
            current = next;
            i += len;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn measured_snr(m: &NoiseMix<f64>, speech: &AudioSignal<f64>) -> f64 {
        let ps: f64 = speech.samples().iter().map(|v| (v * m.joint_gain).powi(2)).sum();
        let pn: f64 = m.noise_segment.iter().map(|v| (v * m.noise_gain * m.joint_gain).powi(2)).sum();
        10.0 * (ps / pn).log10()
    }

    #[test]
    fn generators_have_unit_power() {
        for name in GENERATED_NOISES {
            let s = generate_noise(name, 16_000, 1.0, 3).unwrap();
            assert!((s.power() - 1.0).abs() < 1e-9, "{name}");
        }
        assert!(generate_noise("nope", 16_000, 1.0, 3).is_err());
    }

    #[test]
    fn snr_hits_target() {
        let speech = generate_noise("babble", 16_000, 0.7, 1).unwrap().scaled(0.1);
        let noise = generate_noise("white", 16_000, 0.3, 2).unwrap();
        for snr in [-5.0, 0.0, 10.0, 20.0, 40.0] {
            let m = mix_noise(&speech, &noise, snr, 9).unwrap();
            assert!((measured_snr(&m, &speech) - snr).abs() < 0.1);
            assert!(m.signal.samples().iter().all(|v| v.abs() <= 1.0 + 1e-12));
        }
    }

    #[test]
    fn clean_is_identity_and_zero_power_rejected() {
        let speech = generate_noise("white", 16_000, 0.1, 1).unwrap().scaled(0.1);
        let silent = AudioSignal::new(vec![0.0; 100], 16_000).unwrap();
        assert_eq!(mix_noise(&speech, &silent, f64::INFINITY, 0).unwrap().signal, speech);
        assert!(mix_noise(&speech, &silent, 10.0, 0).is_err());
        assert!(mix_noise(&silent, &speech, 10.0, 0).is_err());
    }

    #[test]
    fn equal_power_at_zero_db_has_unit_gain() {
        let a = AudioSignal::new(vec![0.1, -0.1, 0.1, -0.1], 16_000).unwrap();
        let b = AudioSignal::new(vec![-0.1, 0.1, 0.1, -0.1], 16_000).unwrap();
        let m = mix_noise(&a, &b, 0.0, 4).unwrap();
        assert!((m.noise_gain - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bank_caches_and_prefers_files() {
        let dir = tempfile::tempdir().unwrap();
        let custom = AudioSignal::new(vec![0.5, -0.5, 0.25, -0.25], 16_000).unwrap();
        crate::audio::write_wav(dir.path().join("volvo.wav"), &custom).unwrap();
        let bank = NoiseBank::new(Some(dir.path().to_path_buf()), 16_000, 0);
        assert_eq!(bank.get("volvo").unwrap().len(), 4);
        assert_eq!(bank.get("white").unwrap().len(), 16_000 * 12);
        assert!(Arc::ptr_eq(&bank.get("white").unwrap(), &bank.get("white").unwrap()));
    }
}
