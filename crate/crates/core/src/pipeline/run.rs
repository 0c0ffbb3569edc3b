use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{hash_json, ExperimentConfig, SystemConfig, TrainingCondition};
use super::systems::{train_dictionary, train_mfcc_models, train_sparse_models, SparseFrontEnd, System};
use crate::audio::{AudioSignal, DEFAULT_SAMPLE_RATE};
use crate::error::{Error, Result};
use crate::harness::{build_multicondition, evaluate, CorpusManifest, EvaluationReport, NoiseBank, Split};
use crate::hmm::AnyRecognizer;
use crate::ica::DictionaryHierarchy;
use crate::scalar::Real;

/// Sidecar written next to every cached artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub stage: String,
    pub key: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub dictionary: Option<PathBuf>,
    pub models: PathBuf,
    pub report_json: PathBuf,
    pub report_csv: PathBuf,
    pub report: EvaluationReport,
    /// Stages served from the cache.
    pub cache_hits: Vec<&'static str>,
}

/// Stage-specific stream derived from the experiment seed.
pub fn stage_seed(seed: u64, stage: &str) -> u64 {
    let d = Sha256::digest(format!("{seed}:{stage}").as_bytes());
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Hash of the manifest entries and the bytes of every referenced file.
pub fn manifest_hash(manifest: &CorpusManifest) -> Result<String> {
    let files = manifest
        .entries()
        .par_iter()
        .map(|e| Ok(hex::encode(Sha256::digest(std::fs::read(manifest.resolve(e))?))))
        .collect::<Result<Vec<String>>>()?;
    Ok(hash_json(&(manifest.entries(), files)))
}

struct Cache<'a> {
    dir: &'a Path,
    config_hash: String,
    seed: u64,
}

impl Cache<'_> {
    fn path(&self, stage: &str, key: &str, ext: &str) -> PathBuf {
        self.dir.join(format!("{stage}-{}.{ext}", &key[..16]))
    }

    fn meta_path(artifact: &Path) -> PathBuf {
        let mut s = artifact.as_os_str().to_owned();
        s.push(".meta.json");
        PathBuf::from(s)
    }

    /// Path of a valid cached artifact, if any.
    fn lookup(&self, stage: &str, key: &str, ext: &str) -> Option<PathBuf> {
        let path = self.path(stage, key, ext);
        let meta: ArtifactMeta = serde_json::from_str(&std::fs::read_to_string(Self::meta_path(&path)).ok()?).ok()?;
        (meta.key == key && path.is_file()).then_some(path)
    }

    /// Writes through a temporary file, then records the sidecar.
    fn store(&self, stage: &str, key: &str, ext: &str, write: impl FnOnce(&Path) -> Result<()>) -> Result<PathBuf> {
        let path = self.path(stage, key, ext);
        let tmp = path.with_extension(format!("{ext}.tmp"));
        write(&tmp)?;
        std::fs::rename(&tmp, &path)?;
        let meta = ArtifactMeta {
            stage: stage.into(),
            key: key.into(),
            config_hash: self.config_hash.clone(),
            seed: self.seed,
            version: env!("CARGO_PKG_VERSION").into(),
        };
        std::fs::write(Self::meta_path(&path), serde_json::to_string_pretty(&meta)?)?;
        Ok(path)
    }
}

/// Training entries of the configured condition. Under multi-condition
/// training every file carries a noise assignment; the dictionary and the
/// word models both learn from this set.
pub fn training_set(config: &ExperimentConfig, manifest: &CorpusManifest) -> Result<CorpusManifest> {
    let train = manifest.split(Split::Train);
    match &config.training {
        TrainingCondition::Clean => Ok(train),
        TrainingCondition::Multicondition { noises, snr_db } => {
            build_multicondition(&train, noises, *snr_db, stage_seed(config.seed, "multicondition"))
        }
    }
}

fn load_all<T: Real>(manifest: &CorpusManifest, noises: &NoiseBank) -> Result<Vec<(String, AudioSignal<T>)>> {
    manifest
        .entries()
        .par_iter()
        .map(|e| Ok((e.label.clone(), manifest.load_audio(e, noises)?)))
        .collect()
}

/// train-dict → train-model → evaluate, caching each artifact under
/// `work_dir/cache` by the hash of everything it depends on.
pub fn run_pipeline<T: Real>(config: &ExperimentConfig, manifest: &CorpusManifest, work_dir: impl AsRef<Path>) -> Result<PipelineOutput> {
    config.validate()?;
    let work_dir = work_dir.as_ref();
    let cache_dir = work_dir.join("cache");
    std::fs::create_dir_all(&cache_dir)?;
    let cache = Cache {
        dir: &cache_dir,
        config_hash: config.hash(),
        seed: config.seed,
    };
    let noises = NoiseBank::new(config.noise_dir.clone(), DEFAULT_SAMPLE_RATE, stage_seed(config.seed, "noise"));
    let data_hash = manifest_hash(manifest)?;
    let test = manifest.split(Split::Test);
    if manifest.split(Split::Train).is_empty() || test.is_empty() {
        return Err(Error::InvalidInput("manifest needs both train and test entries".into()));
    }
    let mut hits = Vec::new();

    let train = training_set(config, manifest)?;
    let (dictionary, dict_path, dict_key) = match &config.system {
        SystemConfig::Sparse { frontend, hierarchy, .. } => {
            let key = hash_json(&("train-dict", frontend, hierarchy, &config.training, config.seed, &data_hash));
            let path = match cache.lookup("dict", &key, "dict") {
                Some(p) => {
                    hits.push("train-dict");
                    p
                }
                None => {
                    let audio: Vec<AudioSignal<T>> = load_all(&train, &noises)?.into_iter().map(|(_, a)| a).collect();
                    let dict = train_dictionary(&audio, frontend, hierarchy, stage_seed(config.seed, "train-dict"))
                        .map_err(|e| e.in_stage("train-dict"))?;
                    cache.store("dict", &key, "dict", |p| dict.save(p))?
                }
            };
            // Always use the stored form so cached and fresh runs agree bit for bit.
            let dict = DictionaryHierarchy::<T>::load(&path).map_err(|e| e.in_stage("train-dict"))?;
            (Some(dict), Some(path), key)
        }
        SystemConfig::Mfcc { .. } => (None, None, String::new()),
    };
    let front = match (&config.system, dictionary) {
        (SystemConfig::Sparse { frontend, binarize, .. }, Some(d)) => Some(SparseFrontEnd::new(frontend.clone(), d, *binarize)?),
        _ => None,
    };

    let model_key = hash_json(&("train-model", &config.system, &config.model, &config.training, config.seed, &data_hash, &dict_key));
    let model_path = match cache.lookup("model", &model_key, "whmm") {
        Some(p) => {
            hits.push("train-model");
            p
        }
        None => {
            let labeled = load_all::<T>(&train, &noises).map_err(|e| e.in_stage("train-model"))?;
            let vocab = manifest.vocabulary();
            let seed = stage_seed(config.seed, "train-model");
            let any = match (&config.system, &front) {
                (SystemConfig::Sparse { .. }, Some(front)) => {
                    AnyRecognizer::Binary(train_sparse_models(front, vocab, &labeled, &config.model, seed).map_err(|e| e.in_stage("train-model"))?)
                }
                (SystemConfig::Mfcc { mfcc }, _) => {
                    AnyRecognizer::Real(train_mfcc_models(mfcc, vocab, &labeled, &config.model, seed).map_err(|e| e.in_stage("train-model"))?)
                }
                _ => unreachable!("sparse systems always have a front end"),
            };
            cache.store("model", &model_key, "whmm", |p| any.save(p))?
        }
    };
    let models = AnyRecognizer::<T>::load(&model_path).map_err(|e| e.in_stage("train-model"))?;
    let mfcc_cfg = match &config.system {
        SystemConfig::Mfcc { mfcc } => mfcc.clone(),
        _ => Default::default(),
    };
    let system = System::assemble(models, front, &mfcc_cfg)?;

    let report_key = hash_json(&("evaluate", &model_key, &config.evaluation, &config.noise_dir, &config.name, config.seed));
    let report = match cache.lookup("report", &report_key, "json") {
        Some(p) => {
            hits.push("evaluate");
            EvaluationReport::load_json(p)?
        }
        None => {
            let r = evaluate(&config.name, &system, &test, &config.evaluation, &noises, stage_seed(config.seed, "evaluate"))
                .map_err(|e| e.in_stage("evaluate"))?;
            let p = cache.store("report", &report_key, "json", |p| r.save_json(p))?;
            EvaluationReport::load_json(p)?
        }
    };
    let report_json = work_dir.join(format!("{}-report.json", config.name));
    let report_csv = work_dir.join(format!("{}-report.csv", config.name));
    report.save_json(&report_json)?;
    report.save_csv(&report_csv)?;
    Ok(PipelineOutput {
        dictionary: dict_path,
        models: model_path,
        report_json,
        report_csv,
        report,
        cache_hits: hits,
    })
}
