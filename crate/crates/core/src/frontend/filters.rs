//! Pre-emphasis and first-order IIR sections.

use serde::{Deserialize, Serialize};

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pre-emphasis applied ahead of the filterbank.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreEmphasis {
    /// Mid-frequency emphasis: first-order high-pass at 300 Hz cascaded with
    /// a first-order low-pass at 5 kHz.
    Midband,
    /// `y[t] = x[t] - alpha * x[t-1]`.
    FirstOrder { alpha: f64 },
    None,
}

const MIDBAND_HIGHPASS_HZ: f64 = 300.0;
const MIDBAND_LOWPASS_HZ: f64 = 5_000.0;

/// First-order IIR section `y = b0 x + b1 x[-1] - a1 y[-1]`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct OnePole<T> {
    b0: T,
    b1: T,
    a1: T,
}

impl<T: Real> OnePole<T> {
    /// Butterworth low-pass via the bilinear transform; unit DC gain.
    pub(crate) fn lowpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
        let b0 = k / (1.0 + k);
        Self {
            b0: T::lit(b0),
            b1: T::lit(b0),
            a1: T::lit((k - 1.0) / (k + 1.0)),
        }
    }

    /// Butterworth high-pass via the bilinear transform; unit gain at Nyquist.
    pub(crate) fn highpass(cutoff_hz: f64, sample_rate: f64) -> Self {
        let k = (std::f64::consts::PI * cutoff_hz / sample_rate).tan();
        let b0 = 1.0 / (1.0 + k);
        Self {
            b0: T::lit(b0),
            b1: T::lit(-b0),
            a1: T::lit((k - 1.0) / (k + 1.0)),
        }
    }

    pub(crate) fn fir_difference(alpha: f64) -> Self {
        Self {
            b0: T::one(),
            b1: T::lit(-alpha),
            a1: T::zero(),
        }
    }

    pub(crate) fn apply_in_place(&self, x: &mut [T]) {
        let (mut x1, mut y1) = (T::zero(), T::zero());
        for v in x.iter_mut() {
            let y = self.b0 * *v + self.b1 * x1 - self.a1 * y1;
            x1 = *v;
            y1 = y;
            *v = y;
        }
    }

    /// Magnitude response at `freq_hz`.
    #[cfg(test)]
    pub(crate) fn magnitude(&self, freq_hz: f64, sample_rate: f64) -> f64 {
        use rustfft::num_complex::Complex64;
        let w = 2.0 * std::f64::consts::PI * freq_hz / sample_rate;
        let z1 = Complex64::from_polar(1.0, -w);
        let num = Complex64::from(self.b0.as_f64()) + z1 * self.b1.as_f64();
        let den = Complex64::from(1.0) + z1 * self.a1.as_f64();
        (num / den).norm()
    }
}

/// Applies the selected pre-emphasis; output has the input's length and rate.
pub fn pre_emphasize<T: Real>(signal: &AudioSignal<T>, mode: PreEmphasis) -> Result<AudioSignal<T>> {
    if signal.is_empty() {
        return Err(Error::InvalidInput("cannot pre-emphasize an empty signal".into()));
    }
    let fs = signal.sample_rate() as f64;
    let mut out = signal.samples().to_vec();
    match mode {
        PreEmphasis::Midband => {
            OnePole::<T>::highpass(MIDBAND_HIGHPASS_HZ, fs).apply_in_place(&mut out);
            OnePole::<T>::lowpass(MIDBAND_LOWPASS_HZ.min(0.45 * fs), fs).apply_in_place(&mut out);
        }
        PreEmphasis::FirstOrder { alpha } => {
            OnePole::<T>::fir_difference(alpha).apply_in_place(&mut out);
        }
        PreEmphasis::None => {}
    }
    AudioSignal::new(out, signal.sample_rate())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rustfft::{num_complex::Complex64, FftPlanner};

    #[test]
    fn zero_signal_stays_zero() {
        let s = AudioSignal::new(vec![0.0_f64; 256], 16_000).unwrap();
        for mode in [PreEmphasis::Midband, PreEmphasis::FirstOrder { alpha: 0.97 }] {
            let y = pre_emphasize(&s, mode).unwrap();
            assert!(y.samples().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn first_order_on_constant() {
        let s = AudioSignal::new(vec![1.0_f64; 5], 16_000).unwrap();
        let y = pre_emphasize(&s, PreEmphasis::FirstOrder { alpha: 0.97 }).unwrap();
        let expected = [1.0, 0.03, 0.03, 0.03, 0.03];
        for (a, b) in y.samples().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_signal_is_rejected() {
        let s = AudioSignal::<f64>::new(vec![], 16_000).unwrap();
        assert!(matches!(
            pre_emphasize(&s, PreEmphasis::Midband),
            Err(Error::InvalidInput(_))
        ));
    }

    fn band_energy(x: &[f64], fs: f64, lo: f64, hi: f64) -> f64 {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
        let df = fs / buf.len() as f64;
        buf[..buf.len() / 2]
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * df;
                f >= lo && f < hi
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    }

    #[test]
    fn midband_raises_mid_over_low_energy_on_white_noise() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let x: Vec<f64> = (0..16_384).map(|_| rng.random_range(-0.5..0.5)).collect();
        let fs = 16_000.0;
        let s = AudioSignal::new(x.clone(), 16_000).unwrap();
        let y = pre_emphasize(&s, PreEmphasis::Midband).unwrap();
        let ratio = |v: &[f64]| band_energy(v, fs, 1_000.0, 4_000.0) / band_energy(v, fs, 0.0, 200.0);
        assert!(ratio(y.samples()) > 2.0 * ratio(&x));
    }

    #[test]
    fn butterworth_sections_have_expected_corner_gain() {
        let lp = OnePole::<f64>::lowpass(40.0, 16_000.0);
        assert!((lp.magnitude(0.0, 16_000.0) - 1.0).abs() < 1e-12);
        assert!((lp.magnitude(40.0, 16_000.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
        let hp = OnePole::<f64>::highpass(300.0, 16_000.0);
        assert!(hp.magnitude(0.0, 16_000.0) < 1e-12);
        assert!((hp.magnitude(300.0, 16_000.0) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    }
}
