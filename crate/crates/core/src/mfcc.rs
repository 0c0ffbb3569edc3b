//! HTK-style MFCC front-end for the reference recognizer: log-energy,
//! c1..c12, deltas and delta-deltas.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::binio::*;
use crate::error::{Error, Result};
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"MFC1";
const LOG_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub pre_emphasis: f64,
    pub n_filters: usize,
    pub n_ceps: usize,
    pub lifter: f64,
    pub f_lo: f64,
    /// Upper filterbank edge; `None` means Nyquist.
    pub f_hi: Option<f64>,
    /// Cepstral mean normalization of c1..c12.
    pub cmn: bool,
    /// Regression half-window for deltas.
    pub delta_window: usize,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16_000,
            frame_ms: 25.0,
            hop_ms: 10.0,
            pre_emphasis: 0.97,
            n_filters: 26,
            n_ceps: 12,
            lifter: 22.0,
            f_lo: 0.0,
            f_hi: None,
            cmn: true,
            delta_window: 2,
        }
    }
}

impl MfccConfig {
    pub fn frame_len(&self) -> usize {
        (self.sample_rate as f64 * self.frame_ms / 1000.0).round() as usize
    }

    pub fn hop_len(&self) -> usize {
        (self.sample_rate as f64 * self.hop_ms / 1000.0).round() as usize
    }

    /// Static + delta + delta-delta.
    pub fn dim(&self) -> usize {
        3 * (self.n_ceps + 1)
    }

    pub fn frame_rate(&self) -> f64 {
        1000.0 / self.hop_ms
    }

    fn validate(&self) -> Result<()> {
        let nyquist = self.sample_rate as f64 / 2.0;
        let hi = self.f_hi.unwrap_or(nyquist);
        if self.frame_len() < 2 || self.hop_len() == 0 {
            return Err(Error::Config("MFCC frame and hop must be positive".into()));
        }
        if !(0.0 <= self.f_lo && self.f_lo < hi && hi <= nyquist) {
            return Err(Error::Config(format!("filterbank range [{}, {hi}] invalid", self.f_lo)));
        }
        if self.n_filters < 2 || self.n_ceps == 0 || self.n_ceps >= self.n_filters {
            return Err(Error::Config("need 0 < n_ceps < n_filters".into()));
        }
        Ok(())
    }
}

/// Frames x 39 feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MfccSequence<T> {
    frames: DMatrix<T>,
    frame_rate: f64,
}

impl<T: Real> MfccSequence<T> {
    pub fn new(frames: DMatrix<T>, frame_rate: f64) -> Result<Self> {
        if frames.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite MFCC value".into()));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidInput("frame rate must be positive".into()));
        }
        Ok(Self { frames, frame_rate })
    }

    pub fn frames(&self) -> &DMatrix<T> {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    /// One vector per frame, for the Gaussian HMMs.
    pub fn observations(&self) -> Vec<Vec<T>> {
        self.frames.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, self.dim() as u32)?;
        put_f32(w, self.frame_rate as f32)?;
        put_u32(w, self.len() as u32)?;
        for r in 0..self.len() {
            for c in 0..self.dim() {
                put_f32(w, self.frames[(r, c)].as_f64() as f32)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        expect_magic(r, MAGIC, "MFC1")?;
        let dim = get_count(r, 1 << 16, "MFC1", "dim")?;
        let rate = get_f32(r)? as f64;
        let n = get_count(r, 1 << 26, "MFC1", "frame count")?;
        let mut values = Vec::with_capacity((n * dim).min(1 << 24));
        for _ in 0..n * dim {
            values.push(T::lit(get_f32(r)? as f64));
        }
        Self::new(DMatrix::from_row_slice(n, dim, &values), rate).map_err(|e| Error::format("MFC1", e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

fn mel(f: f64) -> f64 {
    1127.0 * (1.0 + f / 700.0).ln()
}

/// Triangular Mel filters over FFT bins 1..=n_fft/2, weights n_filters x bins.
fn mel_filterbank(cfg: &MfccConfig, n_fft: usize) -> DMatrix<f64> {
    let sr = cfg.sample_rate as f64;
    let hi = cfg.f_hi.unwrap_or(sr / 2.0);
    let (mlo, mhi) = (mel(cfg.f_lo), mel(hi));
    let nf = cfg.n_filters;
    let centres: Vec<f64> = (0..nf + 2).map(|i| mlo + (mhi - mlo) * i as f64 / (nf + 1) as f64).collect();
    let bins = n_fft / 2;
    DMatrix::from_fn(nf, bins + 1, |j, k| {
        if k == 0 {
            return 0.0;
        }
        let m = mel(k as f64 * sr / n_fft as f64);
        let (l, c, r) = (centres[j], centres[j + 1], centres[j + 2]);
        if m > l && m <= c {
            (m - l) / (c - l)
        } else if m > c && m < r {
            (r - m) / (r - c)
        } else {
            0.0
        }
    })
}

/// Regression deltas over ±`window` frames with edge replication.
fn deltas(x: &DMatrix<f64>, window: usize) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let denom: f64 = 2.0 * (1..=window).map(|k| (k * k) as f64).sum::<f64>();
    DMatrix::from_fn(n, d, |t, j| {
        let mut acc = 0.0;
        for k in 1..=window {
            let fwd = (t + k).min(n - 1);
            let back = t.saturating_sub(k);
            acc += k as f64 * (x[(fwd, j)] - x[(back, j)]);
        }
        acc / denom
    })
}

/// MFCC features of `signal` (resampled to the configured rate first).
pub fn mfcc<T: Real>(signal: &AudioSignal<T>, cfg: &MfccConfig) -> Result<MfccSequence<T>> {
    cfg.validate()?;
    let owned;
    let signal = if signal.sample_rate() != cfg.sample_rate {
        owned = signal.resampled(cfg.sample_rate)?;
        &owned
    } else {
        signal
    };
    let x: Vec<f64> = signal.samples().iter().map(|v| v.as_f64()).collect();
    let (flen, hop) = (cfg.frame_len(), cfg.hop_len());
    if x.len() < flen {
        return Err(Error::InvalidInput(format!(
            "signal of {} samples is shorter than one {flen}-sample frame",
            x.len()
        )));
    }
    let n_frames = 1 + (x.len() - flen) / hop;
    let n_fft = flen.next_power_of_two();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let bank = mel_filterbank(cfg, n_fft);
    let window: Vec<f64> = (0..flen)
        .map(|i| 0.54 - 0.46 * (2.0 * std::f64::consts::PI * i as f64 / (flen - 1) as f64).cos())
        .collect();
    let nf = cfg.n_filters;
    let nc = cfg.n_ceps;
    let dct_scale = (2.0 / nf as f64).sqrt();

    let mut statics = DMatrix::zeros(n_frames, nc + 1);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut log_mel = vec![0.0; nf];
    for t in 0..n_frames {
        let frame = &x[t * hop..t * hop + flen];
        let energy: f64 = frame.iter().map(|v| v * v).sum();
        statics[(t, 0)] = energy.max(LOG_FLOOR).ln();

        buf.iter_mut().for_each(|c| *c = Complex::new(0.0, 0.0));
        for i in 0..flen {
            let prev = if i == 0 { frame[0] } else { frame[i - 1] };
            buf[i].re = (frame[i] - cfg.pre_emphasis * prev) * window[i];
        }
        fft.process(&mut buf);
        for (j, lm) in log_mel.iter_mut().enumerate() {
            let s: f64 = (1..=n_fft / 2).map(|k| bank[(j, k)] * buf[k].norm()).sum();
            *lm = s.max(LOG_FLOOR).ln();
        }
        for i in 1..=nc {
            let c: f64 = log_mel
                .iter()
                .enumerate()
                .map(|(j, m)| m * (std::f64::consts::PI * i as f64 * (j as f64 + 0.5) / nf as f64).cos())
                .sum();
            let lift = 1.0 + cfg.lifter / 2.0 * (std::f64::consts::PI * i as f64 / cfg.lifter).sin();
            statics[(t, i)] = dct_scale * c * lift;
        }
    }
    if cfg.cmn {
        for i in 1..=nc {
            let mean = statics.column(i).mean();
            statics.column_mut(i).add_scalar_mut(-mean);
        }
    }
    let d1 = deltas(&statics, cfg.delta_window);
    let d2 = deltas(&d1, cfg.delta_window);
    let width = nc + 1;
    let out = DMatrix::from_fn(n_frames, 3 * width, |t, j| {
        let v = match j / width {
            0 => statics[(t, j)],
            1 => d1[(t, j - width)],
            _ => d2[(t, j - 2 * width)],
        };
        T::lit(v)
    });
    MfccSequence::new(out, cfg.frame_rate())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(freq: f64, secs: f64, amp: f64) -> AudioSignal<f64> {
        let n = (16_000.0 * secs) as usize;
        let s = (0..n)
            .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / 16_000.0).sin())
            .collect();
        AudioSignal::new(s, 16_000).unwrap()
    }

    #[test]
    fn thirty_nine_dimensions() {
        let m = mfcc(&tone(440.0, 0.5, 0.3), &MfccConfig::default()).unwrap();
        assert_eq!(m.dim(), 39);
        assert_eq!(m.len(), 1 + (8000 - 400) / 160);
    }

    #[test]
    fn stationary_tone_has_flat_deltas() {
        // 500 Hz has exactly 8 periods per 10 ms hop, so every frame sees the same samples.
        let m = mfcc(&tone(500.0, 1.0, 0.3), &MfccConfig::default()).unwrap();
        let mid = m.len() / 2;
        for j in 13..39 {
            assert!(m.frames()[(mid, j)].abs() < 1e-3, "column {j}: {}", m.frames()[(mid, j)]);
        }
    }

    #[test]
    fn cepstral_mean_is_removed() {
        let mut s = tone(300.0, 0.6, 0.2).into_samples();
        for (i, v) in s.iter_mut().enumerate() {
            *v += 0.1 * ((i as f64) * 0.37).sin() * (i as f64 / 3000.0).cos();
        }
        let m = mfcc(&AudioSignal::new(s, 16_000).unwrap(), &MfccConfig::default()).unwrap();
        for j in 1..13 {
            assert!(m.frames().column(j).mean().abs() < 1e-9);
        }
    }

    #[test]
    fn one_hop_shift_moves_frames() {
        let cfg = MfccConfig { cmn: false, ..MfccConfig::default() };
        let base = tone(300.0, 0.5, 0.2).into_samples();
        let s: Vec<f64> = base.iter().enumerate().map(|(i, v)| v * (1.0 + 0.5 * (i as f64 / 900.0).sin())).collect();
        let mut shifted = vec![0.05; 160];
        shifted.extend_from_slice(&s);
        let a = mfcc(&AudioSignal::new(s, 16_000).unwrap(), &cfg).unwrap();
        let b = mfcc(&AudioSignal::new(shifted, 16_000).unwrap(), &cfg).unwrap();
        assert_eq!(b.len(), a.len() + 1);
        for t in 5..a.len() - 5 {
            for j in 0..39 {
                assert!((a.frames()[(t, j)] - b.frames()[(t + 1, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn gain_moves_only_energy() {
        let s = tone(800.0, 0.4, 0.1);
        let a = mfcc(&s, &MfccConfig::default()).unwrap();
        let b = mfcc(&s.scaled(4.0), &MfccConfig::default()).unwrap();
        for t in 0..a.len() {
            assert!(b.frames()[(t, 0)] > a.frames()[(t, 0)]);
            for j in 1..13 {
                assert!((a.frames()[(t, j)] - b.frames()[(t, j)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn too_short_rejected() {
        let s = AudioSignal::new(vec![0.1; 100], 16_000).unwrap();
        assert!(matches!(mfcc(&s, &MfccConfig::default()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn filterbank_rows_are_triangles() {
        let cfg = MfccConfig::default();
        let fb = mel_filterbank(&cfg, 512);
        for j in 0..cfg.n_filters {
            let row = fb.row(j);
            assert!(row.max() <= 1.0 && row.max() > 0.5, "filter {j}");
            assert!(row.iter().all(|&w| w >= 0.0));
        }
    }

    #[test]
    fn file_round_trip() {
        let m = mfcc(&tone(700.0, 0.3, 0.1), &MfccConfig::default()).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = MfccSequence::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), m.len());
        assert!((back.frames() - m.frames()).amax() < 1e-3);
    }
}
