//! Projection of cochleogram windows onto the dictionary hierarchy and
//! assembly of binary feature frames.

mod binary;
mod geometry;

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

pub use binary::{assemble_and_binarize, sparse_features, BinarizePolicy, BinaryFeatureSequence};
pub use geometry::{HierarchyLayout, LevelLayout, WindowSpec};

use crate::error::{Error, Result};
use crate::frontend::Cochleogram;
use crate::ica::DictionaryHierarchy;
use crate::scalar::Real;

/// Relative singular value cut-off for pseudo-inverses.
pub const PINV_RCOND: f64 = 1e-10;

/// Moore-Penrose pseudo-inverse by SVD.
pub fn pseudo_inverse<T: Real>(m: &DMatrix<T>) -> DMatrix<T> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, rows);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("requested U");
    let v_t = svd.v_t.expect("requested Vᵀ");
    let cutoff = svd.singular_values.max() * T::lit(PINV_RCOND);
    let mut v_scaled = v_t.transpose();
    for (j, s) in svd.singular_values.iter().enumerate() {
        let inv = if *s > cutoff { T::one() / *s } else { T::zero() };
        v_scaled.column_mut(j).scale_mut(inv);
    }
    v_scaled * u.transpose()
}

/// C = D⁺ S for a dictionary D (`bases`, N_in x K) and inputs S (N_in x n).
pub fn project<T: Real>(bases: &DMatrix<T>, inputs: &DMatrix<T>) -> Result<DMatrix<T>> {
    if inputs.nrows() != bases.nrows() {
        return Err(Error::shape(
            format!("{} x n inputs", bases.nrows()),
            format!("{} x {}", inputs.nrows(), inputs.ncols()),
        ));
    }
    Ok(pseudo_inverse(bases) * inputs)
}

/// Coefficient vectors of one level on its sampling grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMap<T> {
    pub level: usize,
    /// Spectral origins in base units.
    pub spectral: Vec<usize>,
    /// Temporal origins in base units.
    pub temporal: Vec<usize>,
    /// K x (spectral.len() * temporal.len()), spectral-major.
    pub coefficients: DMatrix<T>,
}

impl<T: Real> CoefficientMap<T> {
    pub fn k(&self) -> usize {
        self.coefficients.nrows()
    }

    pub fn vector(&self, spectral_index: usize, temporal_index: usize) -> nalgebra::DVectorView<'_, T> {
        self.coefficients.column(spectral_index * self.temporal.len() + temporal_index)
    }
}

/// All per-level maps of one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyProjection<T> {
    pub maps: Vec<CoefficientMap<T>>,
    pub layout: HierarchyLayout,
    /// Frames of edge replication added on each side.
    pub pad: usize,
    /// Frames of the original cochleogram.
    pub frames: usize,
    pub frame_rate: f64,
    /// Set when the utterance is shorter than the top-level receptive field.
    pub short_input: bool,
    /// Number of block projections performed.
    pub projections: usize,
}

/// Lazily projects blocks of a fixed cochleogram, computing each
/// (level, origin) at most once.
pub(crate) struct BlockProjector<'a, T: Real> {
    dicts: &'a [crate::ica::Dictionary<T>],
    layout: &'a HierarchyLayout,
    coch: &'a DMatrix<T>,
    memo: Vec<HashMap<(usize, usize), DVector<T>>>,
    pub(crate) projections: usize,
}

impl<'a, T: Real> BlockProjector<'a, T> {
    /// `dicts` may hold fewer levels than `layout`; `input` can then still
    /// build inputs for the first untrained level.
    pub(crate) fn new(dicts: &'a [crate::ica::Dictionary<T>], layout: &'a HierarchyLayout, coch: &'a DMatrix<T>) -> Self {
        Self {
            dicts,
            layout,
            coch,
            memo: vec![HashMap::new(); dicts.len()],
            projections: 0,
        }
    }

    /// Raw or concatenated input vector of block (level, uc, ut).
    pub(crate) fn input(&mut self, level: usize, uc: usize, ut: usize) -> DVector<T> {
        let l = self.layout.levels[level];
        if level == 0 {
            return window_vector(
                self.coch,
                uc * self.layout.stride_channels,
                ut * self.layout.stride_frames,
                l.extent_channels,
                l.extent_frames,
            );
        }
        let k = self.dicts[level - 1].k();
        let mut out = DVector::zeros(l.blocks_spectral * l.blocks_temporal * k);
        for i in 0..l.blocks_spectral {
            for j in 0..l.blocks_temporal {
                let key = (uc + i * l.child_step_spectral, ut + j * l.child_step_temporal);
                self.ensure(level - 1, key);
                let slot = i * l.blocks_temporal + j;
                out.rows_mut(slot * k, k).copy_from(&self.memo[level - 1][&key]);
            }
        }
        out
    }

    fn ensure(&mut self, level: usize, key: (usize, usize)) {
        if self.memo[level].contains_key(&key) {
            return;
        }
        let x = self.input(level, key.0, key.1);
        let c = self.dicts[level].encode(&x);
        self.projections += 1;
        self.memo[level].insert(key, c);
    }

    pub(crate) fn block(&mut self, level: usize, uc: usize, ut: usize) -> &DVector<T> {
        self.ensure(level, (uc, ut));
        &self.memo[level][&(uc, ut)]
    }
}

/// Channel-major flattening of `coch[c0..c0+lc, t0..t0+lt]`.
pub(crate) fn window_vector<T: Real>(coch: &DMatrix<T>, c0: usize, t0: usize, lc: usize, lt: usize) -> DVector<T> {
    DVector::from_fn(lc * lt, |i, _| coch[(c0 + i / lt, t0 + i % lt)])
}

/// Replicates the first and last columns `pad` times on each side.
pub(crate) fn replicate_pad<T: Real>(values: &DMatrix<T>, pad: usize) -> DMatrix<T> {
    let (rows, cols) = values.shape();
    DMatrix::from_fn(rows, cols + 2 * pad, |r, c| {
        let src = c.saturating_sub(pad).min(cols - 1);
        values[(r, src)]
    })
}

fn check_hierarchy<T: Real>(coch: &Cochleogram<T>, hierarchy: &DictionaryHierarchy<T>) -> Result<(HierarchyLayout, usize)> {
    if coch.frames() == 0 {
        return Err(Error::InvalidInput("empty cochleogram".into()));
    }
    let layout = hierarchy.layout(coch.channels())?;
    let pad = layout.receptive_field_frames();
    Ok((layout, pad))
}

/// Projects every grid block of every level. Lower-level blocks needed by
/// the concatenations are computed once and shared.
pub fn project_hierarchy<T: Real>(coch: &Cochleogram<T>, hierarchy: &DictionaryHierarchy<T>) -> Result<HierarchyProjection<T>> {
    let (layout, pad) = check_hierarchy(coch, hierarchy)?;
    let padded = replicate_pad(coch.values(), pad);
    let mut proj = BlockProjector::new(hierarchy.levels(), &layout, &padded);
    let maps = collect_maps(&layout, hierarchy, padded.ncols(), |h, uc, ut| proj.block(h, uc, ut).clone());
    let projections = proj.projections;
    Ok(HierarchyProjection {
        maps,
        short_input: coch.frames() < pad,
        pad,
        frames: coch.frames(),
        frame_rate: coch.frame_rate(),
        projections,
        layout,
    })
}

/// Reference implementation without sharing: every block recomputes its
/// whole subtree.
pub fn project_hierarchy_naive<T: Real>(coch: &Cochleogram<T>, hierarchy: &DictionaryHierarchy<T>) -> Result<HierarchyProjection<T>> {
    let (layout, pad) = check_hierarchy(coch, hierarchy)?;
    let padded = replicate_pad(coch.values(), pad);
    let mut projections = 0;
    let maps = collect_maps(&layout, hierarchy, padded.ncols(), |h, uc, ut| {
        naive_block(hierarchy, &layout, &padded, h, uc, ut, &mut projections)
    });
    Ok(HierarchyProjection {
        maps,
        short_input: coch.frames() < pad,
        pad,
        frames: coch.frames(),
        frame_rate: coch.frame_rate(),
        projections,
        layout,
    })
}

fn naive_block<T: Real>(
    hierarchy: &DictionaryHierarchy<T>,
    layout: &HierarchyLayout,
    coch: &DMatrix<T>,
    level: usize,
    uc: usize,
    ut: usize,
    count: &mut usize,
) -> DVector<T> {
    let l = layout.levels[level];
    let x = if level == 0 {
        window_vector(coch, uc * layout.stride_channels, ut * layout.stride_frames, l.extent_channels, l.extent_frames)
    } else {
        let parts: Vec<DVector<T>> = (0..l.blocks_spectral)
            .flat_map(|i| (0..l.blocks_temporal).map(move |j| (i, j)))
            .map(|(i, j)| {
                naive_block(
                    hierarchy,
                    layout,
                    coch,
                    level - 1,
                    uc + i * l.child_step_spectral,
                    ut + j * l.child_step_temporal,
                    count,
                )
            })
            .collect();
        let refs: Vec<_> = parts.iter().map(|p| p.as_slice()).collect();
        DVector::from_column_slice(&refs.concat())
    };
    *count += 1;
    hierarchy.levels()[level].encode(&x)
}

fn collect_maps<T: Real>(
    layout: &HierarchyLayout,
    hierarchy: &DictionaryHierarchy<T>,
    padded_frames: usize,
    mut block: impl FnMut(usize, usize, usize) -> DVector<T>,
) -> Vec<CoefficientMap<T>> {
    (0..layout.levels.len())
        .map(|h| {
            let spectral = layout.spectral_positions(h);
            let temporal = layout.temporal_positions(h, padded_frames);
            let k = hierarchy.levels()[h].k();
            let mut coefficients = DMatrix::zeros(k, spectral.len() * temporal.len());
            for (si, &uc) in spectral.iter().enumerate() {
                for (ti, &ut) in temporal.iter().enumerate() {
                    coefficients.set_column(si * temporal.len() + ti, &block(h, uc, ut));
                }
            }
            CoefficientMap {
                level: h,
                spectral,
                temporal,
                coefficients,
            }
        })
        .collect()
}

/// Mean over coefficient dimensions of the per-dimension excess kurtosis.
pub fn level_kurtosis<T: Real>(maps: &[&CoefficientMap<T>]) -> Option<f64> {
    let k = maps.first()?.k();
    let mut total = 0.0;
    let mut dims = 0;
    for d in 0..k {
        let values = maps.iter().flat_map(|m| m.coefficients.row(d).iter().map(|v| v.as_f64()).collect::<Vec<_>>());
        if let Some(v) = crate::ica::excess_kurtosis(values) {
            total += v;
            dims += 1;
        }
    }
    (dims > 0).then(|| total / dims as f64)
}
