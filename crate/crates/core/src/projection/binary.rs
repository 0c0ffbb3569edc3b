use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{project_hierarchy, HierarchyProjection};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::frontend::Cochleogram;
use crate::ica::DictionaryHierarchy;
use crate::scalar::Real;

const MAGIC: &[u8; 4] = b"BFV1";

/// Per-level competition: keep the `top_p` fraction of largest |c|.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BinarizePolicy {
    pub top_p: f64,
    /// Output frame rate F_sous in Hz.
    pub frame_rate: f64,
}

impl Default for BinarizePolicy {
    fn default() -> Self {
        Self {
            top_p: 0.1,
            frame_rate: 100.0,
        }
    }
}

impl BinarizePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(Error::Config(format!("top_p {} must lie in (0, 1]", self.top_p)));
        }
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(Error::Config("feature frame rate must be positive".into()));
        }
        Ok(())
    }

    /// Number of entries kept in a level segment of length `len`.
    pub fn budget(&self, len: usize) -> usize {
        (self.top_p * len as f64 + 1e-9).floor() as usize
    }
}

/// Sparse binary frames: each frame lists its active indices in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryFeatureSequence {
    dim: usize,
    frame_rate: f64,
    frames: Vec<Vec<u32>>,
}

impl BinaryFeatureSequence {
    pub fn new(dim: usize, frame_rate: f64, frames: Vec<Vec<u32>>) -> Result<Self> {
        if !(frame_rate > 0.0) {
            return Err(Error::InvalidInput("frame rate must be positive".into()));
        }
        for (t, f) in frames.iter().enumerate() {
            if f.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::InvalidInput(format!("frame {t}: indices not strictly ascending")));
            }
            if let Some(&last) = f.last() {
                if last as usize >= dim {
                    return Err(Error::Index {
                        index: last as usize,
                        len: dim,
                    });
                }
            }
        }
        Ok(Self { dim, frame_rate, frames })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn frame_rate(&self) -> f64 {
        self.frame_rate
    }

    pub fn frames(&self) -> &[Vec<u32>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Fraction of active entries per frame.
    pub fn sparsity(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.len() as f64 / self.dim as f64).collect()
    }

    pub fn dense_frame(&self, t: usize) -> Vec<bool> {
        let mut v = vec![false; self.dim];
        for &i in &self.frames[t] {
            v[i as usize] = true;
        }
        v
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(MAGIC)?;
        put_u32(w, self.dim as u32)?;
        put_f32(w, self.frame_rate as f32)?;
        put_u32(w, self.frames.len() as u32)?;
        for f in &self.frames {
            put_u32(w, f.len() as u32)?;
            for &i in f {
                put_u32(w, i)?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        const KIND: &str = "BFV1";
        expect_magic(r, MAGIC, KIND)?;
        let dim = get_count(r, 1 << 24, KIND, "dim")?;
        let frame_rate = get_f32(r)? as f64;
        let n = get_count(r, 1 << 26, KIND, "frame count")?;
        let mut frames = Vec::with_capacity(n.min(1 << 16));
        for _ in 0..n {
            let count = get_count(r, dim, KIND, "active count")?;
            frames.push((0..count).map(|_| get_u32(r)).collect::<Result<Vec<_>>>()?);
        }
        Self::new(dim, frame_rate, frames).map_err(|e| Error::format(KIND, e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

impl<T: Real> HierarchyProjection<T> {
    /// Output frames: floor(duration x F_sous).
    pub fn frame_count(&self, policy: &BinarizePolicy) -> usize {
        (self.frames as f64 / self.frame_rate * policy.frame_rate + 1e-9).floor() as usize
    }

    /// Length of the concatenated frame vector of each level.
    pub fn level_dims(&self) -> Vec<usize> {
        self.maps.iter().map(|m| m.k() * m.spectral.len()).collect()
    }

    pub fn feature_dim(&self) -> usize {
        self.level_dims().iter().sum()
    }
}

/// Active indices of frame `t`. For each level the blocks nearest to the
/// frame centre (one per spectral position) are concatenated, and the
/// `top_p` fraction with the largest magnitude wins, lower index first on
/// ties. Exact zeros are never active.
pub fn assemble_and_binarize<T: Real>(proj: &HierarchyProjection<T>, t: usize, policy: &BinarizePolicy) -> Result<Vec<u32>> {
    policy.validate()?;
    let n = proj.frame_count(policy);
    if t >= n {
        return Err(Error::Index { index: t, len: n });
    }
    let padded = proj.frames + 2 * proj.pad;
    let centre = (t as f64 + 0.5) * proj.frame_rate / policy.frame_rate + proj.pad as f64;
    let mut active = Vec::new();
    let mut offset = 0usize;
    let mut values: Vec<f64> = Vec::new();
    let mut order: Vec<usize> = Vec::new();
    for (h, map) in proj.maps.iter().enumerate() {
        let ti = proj
            .layout
            .nearest_temporal(h, padded, centre)
            .ok_or_else(|| Error::Numeric(format!("level {h} has no blocks")))?;
        values.clear();
        for si in 0..map.spectral.len() {
            values.extend(map.vector(si, ti).iter().map(|v| v.as_f64().abs()));
        }
        order.clear();
        order.extend(0..values.len());
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        let keep = policy.budget(values.len());
        let start = active.len();
        active.extend(
            order
                .iter()
                .take(keep)
                .filter(|&&i| values[i] > 0.0)
                .map(|&i| (offset + i) as u32),
        );
        active[start..].sort_unstable();
        offset += values.len();
    }
    Ok(active)
}

/// Cochleogram to binary feature sequence.
pub fn sparse_features<T: Real>(
    coch: &Cochleogram<T>,
    hierarchy: &DictionaryHierarchy<T>,
    policy: &BinarizePolicy,
) -> Result<BinaryFeatureSequence> {
    policy.validate()?;
    let proj = project_hierarchy(coch, hierarchy)?;
    if proj.short_input {
        log::warn!(
            "utterance of {} frames is shorter than the {}-frame receptive field; edges replicated",
            proj.frames,
            proj.pad
        );
    }
    let frames = (0..proj.frame_count(policy))
        .map(|t| assemble_and_binarize(&proj, t, policy))
        .collect::<Result<Vec<_>>>()?;
    BinaryFeatureSequence::new(proj.feature_dim(), policy.frame_rate, frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::projection::{CoefficientMap, HierarchyLayout, WindowSpec};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_level(coefficients: DMatrix<f64>, frames: usize) -> HierarchyProjection<f64> {
        let layout = HierarchyLayout::new(&[WindowSpec::window(2, 10, 0.0, 0.0)], 2).unwrap();
        let temporal: Vec<usize> = (0..coefficients.ncols()).collect();
        HierarchyProjection {
            maps: vec![CoefficientMap {
                level: 0,
                spectral: vec![0],
                temporal,
                coefficients,
            }],
            layout,
            pad: 10,
            frames,
            frame_rate: 1000.0,
            short_input: false,
            projections: 0,
        }
    }

    #[test]
    fn zero_coefficients_give_empty_frame() {
        let p = single_level(DMatrix::zeros(20, 7), 50);
        assert!(assemble_and_binarize(&p, 2, &BinarizePolicy::default()).unwrap().is_empty());
    }

    #[test]
    fn full_budget_keeps_all_nonzero() {
        let mut c = DMatrix::from_element(5, 7, 1.0);
        c[(3, 2)] = 0.0;
        let p = single_level(c, 50);
        let policy = BinarizePolicy {
            top_p: 1.0,
            ..Default::default()
        };
        // Frame 1 centres at pixel 25, nearest block 2 (centre 25).
        assert_eq!(assemble_and_binarize(&p, 1, &policy).unwrap(), vec![0, 1, 2, 4]);
    }

    #[test]
    fn random_budget_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let c = DMatrix::from_fn(200, 7, |_, _| rng.random_range(-1.0..1.0));
        let p = single_level(c.clone(), 50);
        let active = assemble_and_binarize(&p, 0, &BinarizePolicy::default()).unwrap();
        assert_eq!(active.len(), 20);
        // Independent check: the kept entries dominate every dropped one.
        let col = c.column(1);
        let min_kept = active.iter().map(|&i| col[i as usize].abs()).fold(f64::INFINITY, f64::min);
        let dropped_max = (0..200)
            .filter(|i| !active.contains(&(*i as u32)))
            .map(|i| col[i].abs())
            .fold(0.0, f64::max);
        assert!(min_kept >= dropped_max);
    }

    #[test]
    fn ties_prefer_lower_index() {
        let p = single_level(DMatrix::from_element(10, 7, 2.0), 50);
        let policy = BinarizePolicy {
            top_p: 0.3,
            ..Default::default()
        };
        assert_eq!(assemble_and_binarize(&p, 0, &policy).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn frame_outside_utterance() {
        let p = single_level(DMatrix::zeros(4, 7), 50);
        assert!(matches!(
            assemble_and_binarize(&p, 5, &BinarizePolicy::default()),
            Err(Error::Index { index: 5, len: 5 })
        ));
    }

    #[test]
    fn bfv1_round_trip_and_validation() {
        let seq = BinaryFeatureSequence::new(10, 100.0, vec![vec![1, 4], vec![], vec![9]]).unwrap();
        let mut buf = Vec::new();
        seq.write_to(&mut buf).unwrap();
        assert_eq!(buf.len(), 16 + 4 * 3 + 4 * 3);
        assert_eq!(BinaryFeatureSequence::read_from(&mut buf.as_slice()).unwrap(), seq);
        assert!(BinaryFeatureSequence::new(10, 100.0, vec![vec![10]]).is_err());
        assert!(BinaryFeatureSequence::new(10, 100.0, vec![vec![3, 3]]).is_err());
    }
}
