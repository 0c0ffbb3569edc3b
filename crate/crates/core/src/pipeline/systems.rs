use rayon::prelude::*;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};
use crate::frontend::{cochleogram_with_bank, Cochleogram, FrontendConfig, GammatoneBank};
use crate::harness::{StageTimer, WordClassifier};
use crate::hmm::{train_word_models, AnyRecognizer, HmmConfig, Recognizer};
use crate::ica::{train_hierarchy, DictionaryHierarchy, HierarchyConfig};
use crate::mfcc::{mfcc, MfccConfig, MfccSequence};
use crate::mixtures::{BernoulliMixture, GaussianMixture};
use crate::projection::{sparse_features, BinarizePolicy, BinaryFeatureSequence};
use crate::scalar::Real;

/// Cochleogram, hierarchical projection and binarization.
#[derive(Debug, Clone)]
pub struct SparseFrontEnd<T> {
    pub frontend: FrontendConfig,
    pub hierarchy: DictionaryHierarchy<T>,
    pub policy: BinarizePolicy,
    bank: GammatoneBank<T>,
}

impl<T: Real> SparseFrontEnd<T> {
    pub fn new(frontend: FrontendConfig, hierarchy: DictionaryHierarchy<T>, policy: BinarizePolicy) -> Result<Self> {
        let bank = filterbank(&frontend)?;
        hierarchy.layout(frontend.n_channels)?;
        policy.validate()?;
        Ok(Self { frontend, hierarchy, policy, bank })
    }

    pub fn cochleogram(&self, audio: &AudioSignal<T>) -> Result<Cochleogram<T>> {
        cochleogram_with_bank(audio, &self.frontend, &self.bank)
    }

    pub fn extract(&self, audio: &AudioSignal<T>) -> Result<BinaryFeatureSequence> {
        sparse_features(&self.cochleogram(audio)?, &self.hierarchy, &self.policy)
    }
}

fn filterbank<T: Real>(cfg: &FrontendConfig) -> Result<GammatoneBank<T>> {
    GammatoneBank::new(cfg.sample_rate, cfg.n_channels, cfg.f_lo, cfg.f_hi, cfg.bandwidth_factor)
}

/// Cochleograms of every signal, in parallel.
pub fn cochleograms<T: Real>(audio: &[AudioSignal<T>], cfg: &FrontendConfig) -> Result<Vec<Cochleogram<T>>> {
    let bank = filterbank(cfg)?;
    audio.par_iter().map(|a| cochleogram_with_bank(a, cfg, &bank)).collect()
}

pub fn train_dictionary<T: Real>(
    audio: &[AudioSignal<T>],
    frontend: &FrontendConfig,
    hierarchy: &HierarchyConfig,
    seed: u64,
) -> Result<DictionaryHierarchy<T>> {
    let corpus = cochleograms(audio, frontend)?;
    train_hierarchy(&corpus, hierarchy, seed)
}

fn labeled_features<T: Real, O: Send>(
    labeled: &[(String, AudioSignal<T>)],
    extract: impl Fn(&AudioSignal<T>) -> Result<O> + Sync,
) -> Result<Vec<(String, O)>> {
    labeled
        .par_iter()
        .map(|(l, a)| Ok((l.clone(), extract(a)?)))
        .collect()
}

pub fn train_sparse_models<T: Real>(
    front: &SparseFrontEnd<T>,
    vocabulary: &[String],
    labeled: &[(String, AudioSignal<T>)],
    cfg: &HmmConfig,
    seed: u64,
) -> Result<Recognizer<T, BernoulliMixture<T>>> {
    let feats = labeled_features(labeled, |a| front.extract(a))?;
    let dim = feats.first().map(|(_, f)| f.dim()).ok_or_else(|| Error::InvalidInput("no training data".into()))?;
    let seqs: Vec<(String, Vec<Vec<u32>>)> = feats.into_iter().map(|(l, f)| (l, f.frames().to_vec())).collect();
    let m = cfg.n_components;
    let (models, _) = train_word_models(
        vocabulary,
        &seqs,
        cfg,
        |frames: &[Vec<u32>], s| BernoulliMixture::init_from_data(m, dim, frames, s),
        seed,
    )?;
    Recognizer::new(models)
}

pub fn train_mfcc_models<T: Real>(
    mfcc_cfg: &MfccConfig,
    vocabulary: &[String],
    labeled: &[(String, AudioSignal<T>)],
    cfg: &HmmConfig,
    seed: u64,
) -> Result<Recognizer<T, GaussianMixture<T>>> {
    let feats = labeled_features(labeled, |a| mfcc(a, mfcc_cfg))?;
    let seqs: Vec<(String, Vec<Vec<T>>)> = feats.into_iter().map(|(l, f)| (l, f.observations())).collect();
    let m = cfg.n_components;
    let (models, _) = train_word_models(
        vocabulary,
        &seqs,
        cfg,
        |frames: &[Vec<T>], s| GaussianMixture::init_from_data(m, frames, s),
        seed,
    )?;
    Recognizer::new(models)
}

/// Extracted features of either system.
#[derive(Debug, Clone, PartialEq)]
pub enum Features<T> {
    Binary(BinaryFeatureSequence),
    Real(MfccSequence<T>),
}

/// A complete recognizer: feature extraction plus word models.
#[derive(Debug, Clone)]
pub enum System<T> {
    Sparse {
        front: SparseFrontEnd<T>,
        recognizer: Recognizer<T, BernoulliMixture<T>>,
    },
    Mfcc {
        mfcc: MfccConfig,
        recognizer: Recognizer<T, GaussianMixture<T>>,
    },
}

impl<T: Real> System<T> {
    /// Pairs a model file with the feature extraction it was trained on.
    pub fn assemble(models: AnyRecognizer<T>, front: Option<SparseFrontEnd<T>>, mfcc_cfg: &MfccConfig) -> Result<Self> {
        match (models, front) {
            (AnyRecognizer::Binary(recognizer), Some(front)) => Ok(System::Sparse { front, recognizer }),
            (AnyRecognizer::Binary(_), None) => Err(Error::InvalidInput("binary-feature models need a dictionary".into())),
            (AnyRecognizer::Real(recognizer), _) => Ok(System::Mfcc { mfcc: mfcc_cfg.clone(), recognizer }),
        }
    }

    pub fn extract(&self, audio: &AudioSignal<T>) -> Result<Features<T>> {
        match self {
            System::Sparse { front, .. } => front.extract(audio).map(Features::Binary),
            System::Mfcc { mfcc: cfg, .. } => mfcc(audio, cfg).map(Features::Real),
        }
    }

    /// Log-likelihood of every word, in vocabulary order.
    pub fn scores(&self, features: &Features<T>) -> Result<Vec<T>> {
        match (self, features) {
            (System::Sparse { recognizer, .. }, Features::Binary(f)) => Ok(recognizer.recognize(f.frames())?.scores),
            (System::Mfcc { recognizer, .. }, Features::Real(f)) => Ok(recognizer.recognize(&f.observations())?.scores),
            _ => Err(Error::InvalidInput("features do not match the recognizer".into())),
        }
    }
}

impl<T: Real> WordClassifier<T> for System<T> {
    fn vocabulary(&self) -> Vec<String> {
        match self {
            System::Sparse { recognizer, .. } => recognizer.labels(),
            System::Mfcc { recognizer, .. } => recognizer.labels(),
        }
    }

    fn classify_timed(&self, audio: &AudioSignal<T>, timer: &mut StageTimer) -> Result<usize> {
        let features = timer.time("features", || self.extract(audio))?;
        let scores = timer.time("classification", || self.scores(&features))?;
        Ok(crate::hmm::argmax_first(&scores))
    }
}
