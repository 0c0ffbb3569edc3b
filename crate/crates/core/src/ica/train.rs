use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::dictionary::{Dictionary, DictionaryHierarchy};
use super::fastica::IcaOptions;
use super::whiten::TrainingBatch;
use crate::error::{Error, Result};
use crate::frontend::Cochleogram;
use crate::projection::{window_vector, BlockProjector, HierarchyLayout, WindowSpec};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelConfig {
    /// Number of bases K.
    pub k: usize,
    #[serde(flatten)]
    pub window: WindowSpec,
    pub max_examples: usize,
    /// Whitening dimension; defaults to K.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pca_dim: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyConfig {
    pub levels: Vec<LevelConfig>,
    #[serde(default)]
    pub ica: IcaOptions,
}

impl HierarchyConfig {
    /// Three levels of 64, 128 and 256 bases over 32-channel, 40 ms windows
    /// with half overlap; 2x2 concatenations with a quarter overlap.
    pub fn exp2() -> Self {
        Self {
            levels: vec![
                LevelConfig {
                    k: 64,
                    window: WindowSpec::window(32, 40, 0.5, 0.5),
                    max_examples: 25_000,
                    pca_dim: None,
                },
                LevelConfig {
                    k: 128,
                    window: WindowSpec::blocks(2, 2, 0.25, 0.25),
                    max_examples: 25_000,
                    pca_dim: None,
                },
                LevelConfig {
                    k: 256,
                    window: WindowSpec::blocks(2, 2, 0.25, 0.25),
                    max_examples: 25_000,
                    pca_dim: None,
                },
            ],
            ica: IcaOptions::default(),
        }
    }

    /// Three levels of 128, 256 and 256 bases over 16-channel, 40 ms
    /// windows without overlap; 2x3 concatenations.
    pub fn exp1() -> Self {
        Self {
            levels: vec![
                LevelConfig {
                    k: 128,
                    window: WindowSpec::window(16, 40, 0.0, 0.0),
                    max_examples: 100_000,
                    pca_dim: None,
                },
                LevelConfig {
                    k: 256,
                    window: WindowSpec::blocks(2, 3, 0.0, 0.0),
                    max_examples: 100_000,
                    pca_dim: None,
                },
                LevelConfig {
                    k: 256,
                    window: WindowSpec::blocks(2, 3, 0.0, 0.0),
                    max_examples: 50_000,
                    pca_dim: None,
                },
            ],
            ica: IcaOptions::default(),
        }
    }

    pub fn specs(&self) -> Vec<WindowSpec> {
        self.levels.iter().map(|l| l.window).collect()
    }

    pub fn validate(&self, n_channels: usize) -> Result<HierarchyLayout> {
        let layout = HierarchyLayout::new(&self.specs(), n_channels)?;
        for (h, lvl) in self.levels.iter().enumerate() {
            let n_in = self.input_dim(&layout, h);
            let pca = lvl.pca_dim.unwrap_or(lvl.k);
            if lvl.k == 0 || lvl.k > n_in {
                return Err(Error::Config(format!("level {h}: K={} must be in 1..={n_in}", lvl.k)));
            }
            if pca < lvl.k || pca > n_in {
                return Err(Error::Config(format!("level {h}: whitening dimension {pca} must be in {}..={n_in}", lvl.k)));
            }
            if lvl.max_examples == 0 {
                return Err(Error::Config(format!("level {h}: max_examples must be positive")));
            }
        }
        Ok(layout)
    }

    fn input_dim(&self, layout: &HierarchyLayout, h: usize) -> usize {
        let l = &layout.levels[h];
        if h == 0 {
            l.extent_channels * l.extent_frames
        } else {
            l.blocks_spectral * l.blocks_temporal * self.levels[h - 1].k
        }
    }
}

/// Independent stream for each purpose and level.
fn derive_seed(seed: u64, level: usize, purpose: u64) -> u64 {
    seed ^ (level as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

/// Draws up to `budget` of `total` positions without replacement, in
/// ascending order.
fn sample_positions(total: usize, budget: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    if budget >= total {
        return (0..total).collect();
    }
    let mut picked = index::sample(rng, total, budget).into_vec();
    picked.sort_unstable();
    picked
}

/// Splits flat indices into (file, local index) using per-file counts.
fn locate(picked: &[usize], counts: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); counts.len()];
    let mut file = 0;
    let mut start = 0;
    for &p in picked {
        while p >= start + counts[file] {
            start += counts[file];
            file += 1;
        }
        out[file].push(p - start);
    }
    out
}

/// Learns levels 0..H-1 in order; each level is trained on inputs built
/// from the projections of the levels already learned.
pub fn train_hierarchy<T: Real>(corpus: &[Cochleogram<T>], config: &HierarchyConfig, seed: u64) -> Result<DictionaryHierarchy<T>> {
    let first = corpus
        .first()
        .ok_or_else(|| Error::InvalidInput("empty training corpus".into()))?;
    let n_channels = first.channels();
    if corpus.iter().any(|c| c.channels() != n_channels) {
        return Err(Error::InvalidInput("cochleograms differ in channel count".into()));
    }
    let layout = config.validate(n_channels)?;

    let mut dicts: Vec<Dictionary<T>> = Vec::with_capacity(config.levels.len());
    for (h, lvl) in config.levels.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, h, 1));
        let l = layout.levels[h];
        let n_in = config.input_dim(&layout, h);

        // Level 0 windows may start at any channel and frame; higher levels
        // start on the base-stride lattice.
        let counts: Vec<(usize, usize)> = corpus
            .iter()
            .map(|c| {
                if h == 0 {
                    let ts = (c.frames() + 1).saturating_sub(l.extent_frames);
                    ((n_channels + 1 - l.extent_channels), ts)
                } else {
                    (layout.all_spectral_origins(h), layout.all_temporal_origins(h, c.frames()))
                }
            })
            .collect();
        let per_file: Vec<usize> = counts.iter().map(|(a, b)| a * b).collect();
        let total: usize = per_file.iter().sum();
        let required = lvl.pca_dim.unwrap_or(lvl.k) + 1;
        if total < required {
            return Err(Error::InsufficientExamples {
                level: h,
                required,
                available: total,
            });
        }
        let picked = sample_positions(total, lvl.max_examples, &mut rng);
        let by_file = locate(&picked, &per_file);

        let columns: Vec<Vec<T>> = corpus
            .par_iter()
            .zip(by_file.par_iter())
            .zip(counts.par_iter())
            .flat_map_iter(|((coch, local), &(_, nt))| {
                let mut proj = BlockProjector::new(&dicts, &layout, coch.values());
                local
                    .iter()
                    .map(|&i| {
                        let (a, b) = (i / nt, i % nt);
                        let v = if h == 0 {
                            window_vector(coch.values(), a, b, l.extent_channels, l.extent_frames)
                        } else {
                            proj.input(h, a, b)
                        };
                        v.as_slice().to_vec()
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        let flat: Vec<T> = columns.concat();
        let batch = TrainingBatch::new(DMatrix::from_vec(n_in, picked.len(), flat), h)?;

        let mut window = lvl.window;
        if h > 0 {
            window.blocks_spectral = l.blocks_spectral;
        }
        let pca = lvl.pca_dim.unwrap_or(lvl.k);
        let dict = Dictionary::learn(&batch, window, lvl.k, pca, &config.ica, derive_seed(seed, h, 2))?;
        if let Some(r) = dict.report() {
            log::info!(
                "level {h}: {} examples, K={}, converged={} after {} iterations",
                r.examples,
                lvl.k,
                r.converged,
                r.iterations
            );
        }
        dicts.push(dict);
    }
    DictionaryHierarchy::new(dicts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ica::{fast_ica, whiten};
    use rand::Rng;

    fn config(levels: Vec<LevelConfig>) -> HierarchyConfig {
        HierarchyConfig {
            levels,
            ica: IcaOptions::default(),
        }
    }

    fn noise_coch(channels: usize, frames: usize, seed: u64) -> Cochleogram<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = DMatrix::from_fn(channels, frames, |_, _| rng.random_range(0.0f64..1.0).powi(3));
        Cochleogram::new(v, 1000.0, (1..=channels).map(|c| c as f64 * 100.0).collect()).unwrap()
    }

    #[test]
    fn locate_splits_by_file() {
        assert_eq!(locate(&[0, 2, 3, 7], &[3, 0, 5]), vec![vec![0, 2], vec![], vec![0, 4]]);
    }

    #[test]
    fn one_level_equals_plain_ica() {
        // Two channels carrying independent uniform sources, one-frame windows.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mix = [[1.0, 0.4], [0.3, 1.0]];
        let frames = 3000;
        let s: Vec<[f64; 2]> = (0..frames).map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)]).collect();
        let v = DMatrix::from_fn(2, frames, |r, t| mix[r][0] * s[t][0] + mix[r][1] * s[t][1]);
        let coch = Cochleogram::new(v.clone(), 1000.0, vec![100.0, 200.0]).unwrap();
        let cfg = config(vec![LevelConfig {
            k: 2,
            window: WindowSpec::window(2, 1, 0.0, 0.0),
            max_examples: 10_000,
            pca_dim: None,
        }]);
        let h = train_hierarchy(&[coch], &cfg, 9).unwrap();

        let batch = TrainingBatch::new(v, 0).unwrap();
        let (z, white) = whiten(&batch, 2).unwrap();
        let ica = fast_ica(&z, 2, &IcaOptions::default(), derive_seed(9, 0, 2)).unwrap();
        let unmix = &ica.unmixing * &white.transform;
        // Same unmixing up to per-row scale: D⁺ rows are scaled copies.
        let pinv = h.levels()[0].pinv();
        for r in 0..2 {
            let a = pinv.row(r).normalize();
            let b = unmix.row(r).normalize();
            assert!((a.dot(&b).abs() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn dictionary_sizes_follow_config() {
        let corpus: Vec<_> = (0..4).map(|i| noise_coch(8, 400, i)).collect();
        let cfg = config(vec![
            LevelConfig {
                k: 6,
                window: WindowSpec::window(4, 4, 0.5, 0.5),
                max_examples: 2000,
                pca_dim: None,
            },
            LevelConfig {
                k: 10,
                window: WindowSpec::blocks(2, 2, 0.25, 0.25),
                max_examples: 2000,
                pca_dim: None,
            },
        ]);
        let h = train_hierarchy(&corpus, &cfg, 1).unwrap();
        assert_eq!(h.sizes(), vec![6, 10]);
        assert_eq!(h.levels()[1].input_dim(), 24);
        let again = train_hierarchy(&corpus, &cfg, 1).unwrap();
        assert_eq!(h, again);
    }

    #[test]
    fn insufficient_examples_reports_counts() {
        let corpus = vec![noise_coch(4, 6, 0)];
        let cfg = config(vec![LevelConfig {
            k: 8,
            window: WindowSpec::window(4, 4, 0.0, 0.0),
            max_examples: 100,
            pca_dim: None,
        }]);
        let err = train_hierarchy(&corpus, &cfg, 0).unwrap_err();
        assert!(matches!(err, Error::InsufficientExamples { level: 0, required: 9, available: 3 }), "{err}");
    }

    #[test]
    fn presets_validate_on_64_channels() {
        let l2 = HierarchyConfig::exp2().validate(64).unwrap();
        assert_eq!((l2.top().extent_channels, l2.top().extent_frames), (64, 160));
        let l1 = HierarchyConfig::exp1().validate(64).unwrap();
        assert_eq!((l1.top().extent_channels, l1.top().extent_frames), (64, 360));
        let sizes: Vec<usize> = HierarchyConfig::exp2().levels.iter().map(|l| l.k).collect();
        assert_eq!(sizes, vec![64, 128, 256]);
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = HierarchyConfig::exp2();
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<HierarchyConfig>(&s).unwrap(), c);
    }
}
