//! Corpus manifests, noise mixing, evaluation grids and real-time profiling.

mod eval;
mod manifest;
mod noise;
mod profile;
mod synth;

pub use eval::{evaluate, parse_snr_list, snr_key, Cell, EvaluationReport, NoiseGrid, WordClassifier};
pub use manifest::{CorpusManifest, ManifestEntry, MixAssignment, Split};
pub use noise::{generate_noise, mix_noise, NoiseBank, NoiseMix, NoiseSpec, GENERATED_NOISES};
pub use profile::{realtime_factor, timer_resolution, RealtimeFactor, RealtimeReport, StageTimer, StageTiming};
pub use synth::{class_label, synth_corpus, synth_entries, synth_utterance, SynthCorpusConfig};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Pairs every training entry with a noise drawn uniformly from `noises`,
/// to be mixed at `snr_db` when loaded. Test entries are dropped.
pub fn build_multicondition(train: &CorpusManifest, noises: &[String], snr_db: f64, seed: u64) -> Result<CorpusManifest> {
    if noises.is_empty() {
        return Err(Error::InvalidInput("multi-condition training needs at least one noise".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::InvalidInput(format!("SNR {snr_db} dB is not finite")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = train
        .entries()
        .iter()
        .filter(|e| e.split == Split::Train)
        .map(|e| {
            let mut e = e.clone();
            e.mix = Some(MixAssignment {
                noise: noises[rng.random_range(0..noises.len())].clone(),
                snr_db,
                seed: rng.random(),
            });
            e
        })
        .collect();
    Ok(train.with_entries(entries))
}

/// Runs `classifier` over `signals` one at a time on the calling thread and
/// reports real-time factors per stage.
pub fn profile<T: Real, C: WordClassifier<T>>(classifier: &C, signals: &[AudioSignal<T>]) -> Result<RealtimeReport> {
    let mut timer = StageTimer::default();
    for s in signals {
        classifier.classify_timed(s, &mut timer)?;
    }
    let audio: f64 = signals.iter().map(|s| s.duration_secs()).sum();
    realtime_factor(&timer.timings(), audio, timer_resolution())
}
