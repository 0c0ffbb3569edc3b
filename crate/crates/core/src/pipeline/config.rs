use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::frontend::FrontendConfig;
use crate::harness::NoiseGrid;
use crate::hmm::HmmConfig;
use crate::ica::HierarchyConfig;
use crate::mfcc::MfccConfig;
use crate::projection::BinarizePolicy;

/// Feature extraction of one recognizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SystemConfig {
    Sparse {
        frontend: FrontendConfig,
        hierarchy: HierarchyConfig,
        binarize: BinarizePolicy,
    },
    Mfcc {
        mfcc: MfccConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "condition", rename_all = "lowercase")]
pub enum TrainingCondition {
    Clean,
    Multicondition { noises: Vec<String>, snr_db: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: u64,
    pub system: SystemConfig,
    pub model: HmmConfig,
    pub training: TrainingCondition,
    pub evaluation: NoiseGrid,
    /// Directory searched for `<noise>.wav` before the built-in generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_dir: Option<PathBuf>,
}

pub const PRESETS: [&str; 3] = ["sparse-exp2", "sparse-exp1", "mfcc-baseline"];

fn default_grid() -> NoiseGrid {
    NoiseGrid {
        noises: ["babble", "destroyerengine", "volvo", "white"].map(String::from).to_vec(),
        snrs: vec![-5.0, 0.0, 10.0, 20.0, 40.0, f64::INFINITY],
    }
}

impl ExperimentConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let sparse = |hierarchy| SystemConfig::Sparse {
            frontend: FrontendConfig::default(),
            hierarchy,
            binarize: BinarizePolicy::default(),
        };
        let (system, model) = match name {
            "sparse-exp2" => (sparse(HierarchyConfig::exp2()), HmmConfig::default()),
            "sparse-exp1" => (sparse(HierarchyConfig::exp1()), HmmConfig::default()),
            "mfcc-baseline" => (
                SystemConfig::Mfcc { mfcc: MfccConfig::default() },
                HmmConfig { n_components: 4, ..HmmConfig::default() },
            ),
            other => {
                return Err(Error::Config(format!("unknown preset `{other}`; expected one of {}", PRESETS.join(", "))))
            }
        };
        Ok(Self {
            name: name.to_string(),
            seed: 1,
            system,
            model,
            training: TrainingCondition::Clean,
            evaluation: default_grid(),
            noise_dir: None,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        match &self.system {
            SystemConfig::Sparse { frontend, hierarchy, binarize } => {
                if frontend.n_channels == 0 {
                    return Err(Error::Config("front-end needs channels".into()));
                }
                if hierarchy.levels.is_empty() {
                    return Err(Error::Config("hierarchy needs at least one level".into()));
                }
                hierarchy.validate(frontend.n_channels)?;
                binarize.validate()?;
            }
            SystemConfig::Mfcc { mfcc } => {
                if mfcc.n_ceps == 0 || mfcc.n_filters <= mfcc.n_ceps {
                    return Err(Error::Config("MFCC needs 0 < n_ceps < n_filters".into()));
                }
            }
        }
        if let TrainingCondition::Multicondition { noises, snr_db } = &self.training {
            if noises.is_empty() || !snr_db.is_finite() {
                return Err(Error::Config("multi-condition training needs noises and a finite SNR".into()));
            }
        }
        if self.evaluation.snrs.is_empty() {
            return Err(Error::Config("evaluation needs at least one SNR".into()));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let c: Self = serde_json::from_str(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        c.validate()?;
        Ok(c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.system, SystemConfig::Sparse { .. })
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }
}

pub(crate) fn hash_json<S: Serialize>(value: &S) -> String {
    let bytes = serde_json::to_vec(value).expect("serializable");
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in PRESETS {
            let c = ExperimentConfig::preset(name).unwrap();
            c.validate().unwrap();
            let back: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
        }
        assert!(ExperimentConfig::preset("nope").is_err());
    }

    #[test]
    fn preset_shapes() {
        let s = ExperimentConfig::preset("sparse-exp2").unwrap();
        let SystemConfig::Sparse { hierarchy, .. } = &s.system else { panic!() };
        assert_eq!(hierarchy.levels.iter().map(|l| l.k).collect::<Vec<_>>(), [64, 128, 256]);
        assert_eq!((s.model.n_states, s.model.n_components), (16, 8));
        let m = ExperimentConfig::preset("mfcc-baseline").unwrap();
        let SystemConfig::Mfcc { mfcc } = &m.system else { panic!() };
        assert_eq!(mfcc.dim(), 39);
        assert_eq!((m.model.n_states, m.model.n_components), (16, 4));
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = ExperimentConfig::preset("mfcc-baseline").unwrap();
        c.model.n_states = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::preset("sparse-exp2").unwrap();
        c.training = TrainingCondition::Multicondition { noises: vec![], snr_db: 20.0 };
        assert!(c.validate().is_err());
    }
}
