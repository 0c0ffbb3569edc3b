//! Auditory front-end: pre-emphasis, gammatone filterbank and envelope
//! compression into a cochleogram (channels x frames at 1 kHz).

mod envelope;
mod filters;
mod gammatone;

use std::io::{Read, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use envelope::envelope_compress;
pub use filters::{pre_emphasize, PreEmphasis};
pub use gammatone::{
    erb_hz, gammatone_filterbank, hz_to_mel, mel_center_frequencies, mel_to_hz, FilterbankOutput,
    GammatoneBank,
};

use crate::audio::{AudioSignal, DEFAULT_SAMPLE_RATE};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FrontendConfig {
    pub sample_rate: u32,
    pub n_channels: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    /// Filter bandwidth in ERBs.
    pub bandwidth_factor: f64,
    pub pre_emphasis: PreEmphasis,
    pub envelope_cutoff_hz: f64,
    pub frame_rate: u32,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        Self {
            sample_rate: DEFAULT_SAMPLE_RATE,
            n_channels: 64,
            f_lo: 0.0,
            f_hi: 8_000.0,
            bandwidth_factor: 1.5,
            pre_emphasis: PreEmphasis::Midband,
            envelope_cutoff_hz: 40.0,
            frame_rate: 1_000,
        }
    }
}

/// Compressed envelope energy per channel and frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Cochleogram<T> {
    values: DMatrix<T>,
    frame_rate: f64,
    center_freqs: Vec<f64>,
}

impl<T: Real> Cochleogram<T> {
    pub fn new(values: DMatrix<T>, frame_rate: f64, center_freqs: Vec<f64>) -> Result<Self> {
        if values.nrows() != center_freqs.len() {
            return Err(Error::shape(
                format!("{} channels", center_freqs.len()),
                format!("{} rows", values.nrows()),
            ));
        }
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidInput("frame rate must be positive".into()));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput("cochleogram values must be finite and non-negative".into()));
        }
        Ok(Self {
            values,
            frame_rate,
            center_freqs,
        })
    }

    pub fn values(&self) -> &DMatrix<T> {
        &self.values
    }

    pub fn channels(&self) -> usize {
        self.values.nrows()
    }

    pub fn frames(&self) -> usize {
        self.values.ncols()
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn center_freqs(&self) -> &[f64] {
        &self.center_freqs
    }

    pub fn duration_secs(&self) -> f64 {
        self.frames() as f64 / self.frame_rate
    }

    /// `versioned binary: "CGRM", u32 version, u32 channels, u32 frames,
    /// f32 frame_rate, row-major f32 matrix` (all little-endian).
    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"CGRM")?;
        put_u32(w, 1)?;
        put_u32(w, self.channels() as u32)?;
        put_u32(w, self.frames() as u32)?;
        put_f32(w, self.frame_rate as f32)?;
        for r in 0..self.channels() {
            for c in 0..self.frames() {
                put_f32(w, self.values[(r, c)].as_f64() as f32)?;
            }
        }
        Ok(())
    }

    /// Reads a `CGRM` stream. Centre frequencies are not stored; they are
    /// reconstructed for the default 0-8 kHz Mel layout.
    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "cochleogram";
        expect_magic(r, b"CGRM", KIND)?;
        let version = get_u32(r)?;
        if version != 1 {
            return Err(Error::format(KIND, format!("unsupported version {version}")));
        }
        let channels = get_count(r, 4_096, KIND, "channels")?;
        let frames = get_count(r, 1 << 28, KIND, "frames")?;
        let frame_rate = get_f32(r)? as f64;
        let mut values = DMatrix::zeros(channels, frames);
        for row in 0..channels {
            for col in 0..frames {
                values[(row, col)] = T::lit(get_f32(r)? as f64);
            }
        }
        let freqs = mel_center_frequencies(channels, 0.0, 8_000.0);
        Self::new(values, frame_rate, freqs)
    }
}

/// Full front-end for one utterance. Audio at other rates is resampled to
/// `cfg.sample_rate` first.
pub fn cochleogram<T: Real>(signal: &AudioSignal<T>, cfg: &FrontendConfig) -> Result<Cochleogram<T>> {
    let bank = GammatoneBank::new(cfg.sample_rate, cfg.n_channels, cfg.f_lo, cfg.f_hi, cfg.bandwidth_factor)?;
    cochleogram_with_bank(signal, cfg, &bank)
}

/// As [`cochleogram`], reusing a prebuilt filterbank.
pub fn cochleogram_with_bank<T: Real>(
    signal: &AudioSignal<T>,
    cfg: &FrontendConfig,
    bank: &GammatoneBank<T>,
) -> Result<Cochleogram<T>> {
    let resampled;
    let signal = if signal.sample_rate() != cfg.sample_rate {
        resampled = signal.resampled(cfg.sample_rate)?;
        &resampled
    } else {
        signal
    };
    let emphasized = pre_emphasize(signal, cfg.pre_emphasis)?;
    let bank_out = bank.filter(&emphasized)?;
    envelope_compress(&bank_out, cfg.envelope_cutoff_hz, cfg.frame_rate)
}
