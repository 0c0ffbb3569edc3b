//! Sparse hierarchical auditory features for isolated-word recognition.
//!
//! The processing chain is: gammatone cochleogram ([`frontend`]),
//! ICA dictionaries learned level by level ([`ica`]), hierarchical
//! projection and top-p binarization ([`projection`]), then left-right HMMs
//! with Bernoulli mixture emissions ([`hmm`], [`mixtures`]). An HTK-style
//! MFCC front-end ([`mfcc`]) with Gaussian mixtures is the reference
//! system. [`harness`] mixes noise and scores recognizers; [`pipeline`]
//! ties the stages into cached experiments.
//!
//! Numeric code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar type.

pub mod audio;
mod binio;
pub mod error;
pub mod frontend;
pub mod harness;
pub mod hmm;
pub mod ica;
pub mod logmath;
pub mod mfcc;
pub mod mixtures;
pub mod pipeline;
pub mod projection;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

pub type AudioSignal64 = audio::AudioSignal<f64>;
pub type AudioSignal32 = audio::AudioSignal<f32>;
pub type Cochleogram64 = frontend::Cochleogram<f64>;
pub type Cochleogram32 = frontend::Cochleogram<f32>;
pub type Dictionary64 = ica::Dictionary<f64>;
pub type Dictionary32 = ica::Dictionary<f32>;
pub type DictionaryHierarchy64 = ica::DictionaryHierarchy<f64>;
pub type DictionaryHierarchy32 = ica::DictionaryHierarchy<f32>;
pub type BernoulliMixture64 = mixtures::BernoulliMixture<f64>;
pub type BernoulliMixture32 = mixtures::BernoulliMixture<f32>;
pub type GaussianMixture64 = mixtures::GaussianMixture<f64>;
pub type GaussianMixture32 = mixtures::GaussianMixture<f32>;
pub type MfccSequence64 = mfcc::MfccSequence<f64>;
pub type MfccSequence32 = mfcc::MfccSequence<f32>;
pub type SparseRecognizer64 = hmm::Recognizer<f64, BernoulliMixture64>;
pub type SparseRecognizer32 = hmm::Recognizer<f32, BernoulliMixture32>;
pub type MfccRecognizer64 = hmm::Recognizer<f64, GaussianMixture64>;
pub type MfccRecognizer32 = hmm::Recognizer<f32, GaussianMixture32>;
pub type System64 = pipeline::System<f64>;
pub type System32 = pipeline::System<f32>;
