//! Fourth-order all-pole gammatone filterbank with Mel-spaced channels.
//!
//! Each channel is a cascade of four identical complex one-pole sections
//! (pole `λ·e^{iβ}` at the channel centre frequency). The real part of the
//! complex output is the channel signal; the modulus is its envelope.
//!
//! Channels are time-aligned: every channel is advanced by the sample index
//! at which its impulse-response envelope peaks, and its carrier phase is
//! rotated so the real part peaks there too. An impulse at sample `n`
//! therefore produces a response maximum at `n` in every channel.

use rustfft::num_complex::Complex;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Real;

const ORDER: usize = 4;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Equivalent rectangular bandwidth (Glasberg & Moore) in Hz.
pub fn erb_hz(fc: f64) -> f64 {
    24.7 + fc / 9.265
}

/// `n` centre frequencies uniformly spaced on the Mel scale strictly inside
/// `(f_lo, f_hi)`.
pub fn mel_center_frequencies(n: usize, f_lo: f64, f_hi: f64) -> Vec<f64> {
    let (m_lo, m_hi) = (hz_to_mel(f_lo), hz_to_mel(f_hi));
    let step = (m_hi - m_lo) / (n + 1) as f64;
    (1..=n).map(|i| mel_to_hz(m_lo + step * i as f64)).collect()
}

#[derive(Debug, Clone)]
struct Channel<T> {
    center_hz: f64,
    pole: Complex<T>,
    /// Input gain giving unit real-part gain at the centre frequency.
    gain: T,
    /// Envelope peak of the impulse response, in samples.
    peak_delay: usize,
    /// Rotation that brings the carrier phase at the peak to zero.
    phase: Complex<T>,
}

/// Per-channel real outputs of the filterbank at the audio rate.
#[derive(Debug, Clone)]
pub struct FilterbankOutput<T> {
    pub channels: Vec<Vec<T>>,
    pub center_freqs: Vec<f64>,
    pub sample_rate: u32,
}

#[derive(Debug, Clone)]
pub struct GammatoneBank<T> {
    channels: Vec<Channel<T>>,
    sample_rate: u32,
}

impl<T: Real> GammatoneBank<T> {
    /// Builds `n_channels` filters over `[f_lo, f_hi]`; bandwidths are
    /// `bandwidth_factor` ERBs.
    pub fn new(
        sample_rate: u32,
        n_channels: usize,
        f_lo: f64,
        f_hi: f64,
        bandwidth_factor: f64,
    ) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        if n_channels < 2 {
            return Err(Error::Config(format!("need at least 2 channels, got {n_channels}")));
        }
        if !(f_lo >= 0.0 && f_lo < f_hi && f_hi <= nyquist) {
            return Err(Error::Config(format!(
                "frequency range [{f_lo}, {f_hi}] Hz invalid for sample rate {sample_rate} Hz"
            )));
        }
        if !(bandwidth_factor > 0.0) {
            return Err(Error::Config("bandwidth factor must be positive".into()));
        }
        let fs = sample_rate as f64;
        // Scale between the -3 dB bandwidth parameter and the ERB of a
        // 4th-order gammatone: pi (2n-2)! 2^-(2n-2) / ((n-1)!)^2.
        let a_gamma = std::f64::consts::PI * 720.0 / 64.0 / 36.0;
        let channels = mel_center_frequencies(n_channels, f_lo, f_hi)
            .into_iter()
            .map(|fc| {
                let b = bandwidth_factor * erb_hz(fc) / a_gamma;
                let lambda = (-2.0 * std::f64::consts::PI * b / fs).exp();
                let beta = 2.0 * std::f64::consts::PI * fc / fs;
                let peak = impulse_envelope_peak(lambda);
                let phase = -(peak as f64) * beta;
                Channel {
                    center_hz: fc,
                    pole: Complex::new(T::lit(lambda * beta.cos()), T::lit(lambda * beta.sin())),
                    gain: T::lit(2.0 * (1.0 - lambda).powi(ORDER as i32)),
                    peak_delay: peak,
                    phase: Complex::new(T::lit(phase.cos()), T::lit(phase.sin())),
                }
            })
            .collect();
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn center_freqs(&self) -> Vec<f64> {
        self.channels.iter().map(|c| c.center_hz).collect()
    }

    pub fn peak_delays(&self) -> Vec<usize> {
        self.channels.iter().map(|c| c.peak_delay).collect()
    }

    /// Aligned complex outputs, one vector per channel, same length as input.
    fn analyze(&self, signal: &AudioSignal<T>) -> Result<Vec<Vec<Complex<T>>>> {
        if signal.sample_rate() != self.sample_rate {
            return Err(Error::InvalidInput(format!(
                "signal rate {} Hz does not match filterbank rate {} Hz",
                signal.sample_rate(),
                self.sample_rate
            )));
        }
        let x = signal.samples();
        let n = x.len();
        Ok(self
            .channels
            .iter()
            .map(|ch| {
                let mut state = [Complex::new(T::zero(), T::zero()); ORDER];
                let mut out = Vec::with_capacity(n);
                // Run `peak_delay` samples past the end so the advanced
                // output still spans the whole input.
                for t in 0..n + ch.peak_delay {
                    let mut v = Complex::new(if t < n { x[t] * ch.gain } else { T::zero() }, T::zero());
                    for s in state.iter_mut() {
                        *s = v + ch.pole * *s;
                        v = *s;
                    }
                    if t >= ch.peak_delay {
                        out.push(v * ch.phase);
                    }
                }
                out
            })
            .collect())
    }

    /// Real channel signals (the filterbank proper).
    pub fn filter(&self, signal: &AudioSignal<T>) -> Result<FilterbankOutput<T>> {
        let channels = self
            .analyze(signal)?
            .into_iter()
            .map(|c| c.into_iter().map(|v| v.re).collect())
            .collect();
        Ok(FilterbankOutput {
            channels,
            center_freqs: self.center_freqs(),
            sample_rate: self.sample_rate,
        })
    }

    /// Hilbert envelopes (modulus of the complex output) per channel.
    pub fn envelopes(&self, signal: &AudioSignal<T>) -> Result<Vec<Vec<T>>> {
        Ok(self
            .analyze(signal)?
            .into_iter()
            .map(|c| c.into_iter().map(|v| (v.re * v.re + v.im * v.im).sqrt()).collect())
            .collect())
    }
}

/// Index of the maximum of `C(n+3, 3) λ^n`, the envelope of the cascade's
/// impulse response.
fn impulse_envelope_peak(lambda: f64) -> usize {
    let mut n = 0usize;
    // h[n+1]/h[n] = λ (n + ORDER) / (n + 1)
    while lambda * (n + ORDER) as f64 > (n + 1) as f64 {
        n += 1;
    }
    n
}

/// Convenience wrapper: builds the bank and filters `signal`.
pub fn gammatone_filterbank<T: Real>(
    signal: &AudioSignal<T>,
    n_channels: usize,
    f_lo: f64,
    f_hi: f64,
    bandwidth_factor: f64,
) -> Result<FilterbankOutput<T>> {
    GammatoneBank::new(signal.sample_rate(), n_channels, f_lo, f_hi, bandwidth_factor)?.filter(signal)
}
