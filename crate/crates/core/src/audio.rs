//! Audio container, WAV input/output and sample-rate conversion.

use std::path::Path;

use rubato::{FftFixedInOut, Resampler};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Rate every front-end works at; other rates are converted on load.
pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// Mono audio, amplitudes nominally in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal<T> {
    samples: Vec<T>,
    sample_rate: u32,
}

impl<T: Real> AudioSignal<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if sample_rate == 0 {
            return Err(Error::InvalidInput("sample rate must be positive".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite sample at index {i}"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[T] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<T> {
        self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    /// Mean squared amplitude over the whole signal.
    pub fn power(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        self.samples
            .iter()
            .map(|s| {
                let v = s.as_f64();
                v * v
            })
            .sum::<f64>()
            / self.samples.len() as f64
    }

    /// Same samples relabelled with a new scalar type.
    pub fn cast<U: Real>(&self) -> AudioSignal<U> {
        AudioSignal {
            samples: self.samples.iter().map(|s| U::lit(s.as_f64())).collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn scaled(&self, gain: T) -> Self {
        Self {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }

    /// Converts to `target_rate` with an FFT-based synchronous resampler.
    /// Output length is `round(len * target / source)`.
    pub fn resampled(&self, target_rate: u32) -> Result<Self> {
        if target_rate == 0 {
            return Err(Error::InvalidInput("target sample rate must be positive".into()));
        }
        if target_rate == self.sample_rate || self.samples.is_empty() {
            return Ok(Self {
                samples: self.samples.clone(),
                sample_rate: target_rate,
            });
        }
        let input: Vec<f64> = self.samples.iter().map(|s| s.as_f64()).collect();
        let out = resample_f64(&input, self.sample_rate as usize, target_rate as usize)?;
        Ok(Self {
            samples: out.into_iter().map(T::lit).collect(),
            sample_rate: target_rate,
        })
    }
}

fn resample_f64(input: &[f64], from: usize, to: usize) -> Result<Vec<f64>> {
    let numeric = |e: &dyn std::fmt::Display| Error::Numeric(format!("resampler: {e}"));
    let mut resampler =
        FftFixedInOut::<f64>::new(from, to, 1024, 1).map_err(|e| numeric(&e))?;
    let delay = resampler.output_delay();
    let expected = ((input.len() as u128 * to as u128 + from as u128 / 2) / from as u128) as usize;

    let mut out = Vec::with_capacity(expected + delay + resampler.output_frames_max());
    let mut pos = 0;
    while out.len() < expected + delay {
        let need = resampler.input_frames_next();
        let chunk = if pos + need <= input.len() {
            let block = resampler
                .process(&[&input[pos..pos + need]], None)
                .map_err(|e| numeric(&e))?;
            pos += need;
            block
        } else {
            let tail = &input[pos.min(input.len())..];
            pos = input.len();
            let wave_in = [tail];
            // An empty slice would be rejected; `None` flushes with zeros.
            let arg = if tail.is_empty() { None } else { Some(&wave_in[..]) };
            resampler.process_partial(arg, None).map_err(|e| numeric(&e))?
        };
        out.extend_from_slice(&chunk[0]);
    }
    Ok(out[delay..delay + expected].to_vec())
}

/// Reads a 16-bit PCM (or float) WAV file; multi-channel input is downmixed by
/// averaging and the result is converted to [`DEFAULT_SAMPLE_RATE`].
pub fn read_wav<T: Real>(path: impl AsRef<Path>) -> Result<AudioSignal<T>> {
    let mut reader = hound::WavReader::open(path.as_ref())?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample.saturating_sub(1))) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<std::result::Result<_, _>>()?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
    };
    let mono: Vec<T> = interleaved
        .chunks(channels)
        .map(|frame| T::lit(frame.iter().sum::<f64>() / channels as f64))
        .collect();
    AudioSignal::new(mono, spec.sample_rate)?.resampled(DEFAULT_SAMPLE_RATE)
}

/// Writes mono 16-bit PCM, clamping to the representable range.
pub fn write_wav<T: Real>(path: impl AsRef<Path>, signal: &AudioSignal<T>) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path.as_ref(), spec)?;
    for &s in signal.samples() {
        let v = (s.as_f64().clamp(-1.0, 1.0) * 32767.0).round() as i16;
        writer.write_sample(v)?;
    }
    writer.finalize()?;
    Ok(())
}
