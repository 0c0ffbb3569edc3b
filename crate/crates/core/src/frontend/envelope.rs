use nalgebra::DMatrix;

use super::filters::OnePole;
use super::gammatone::FilterbankOutput;
use super::Cochleogram;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Half-wave rectification, cube-root compression, first-order Butterworth
/// low-pass at `cutoff_hz`, then decimation to `frame_rate`.
///
/// The audio rate must be an integer multiple of `frame_rate`. Frame `k`
/// holds the smoothed value at audio sample `k * factor`.
pub fn envelope_compress<T: Real>(
    bank: &FilterbankOutput<T>,
    cutoff_hz: f64,
    frame_rate: u32,
) -> Result<Cochleogram<T>> {
    if frame_rate == 0 || bank.sample_rate % frame_rate != 0 {
        return Err(Error::Config(format!(
            "audio rate {} Hz is not a multiple of frame rate {frame_rate} Hz",
            bank.sample_rate
        )));
    }
    let factor = (bank.sample_rate / frame_rate) as usize;
    let n_samples = bank.channels.first().map_or(0, Vec::len);
    let n_frames = n_samples.div_ceil(factor);
    let lp = OnePole::<T>::lowpass(cutoff_hz, bank.sample_rate as f64);
    let third = T::lit(1.0 / 3.0);

    let mut values = DMatrix::zeros(bank.channels.len(), n_frames);
    let mut buf = Vec::with_capacity(n_samples);
    for (c, channel) in bank.channels.iter().enumerate() {
        buf.clear();
        buf.extend(channel.iter().map(|&x| {
            if x > T::zero() {
                x.powf(third)
            } else {
                T::zero()
            }
        }));
        lp.apply_in_place(&mut buf);
        for (k, v) in buf.iter().step_by(factor).enumerate() {
            // The low-pass has a positive impulse response, so only rounding
            // can push a value below zero.
            values[(c, k)] = v.max(T::zero());
        }
    }
    Cochleogram::new(values, frame_rate as f64, bank.center_freqs.clone())
}
