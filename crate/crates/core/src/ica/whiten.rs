use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Training vectors for one hierarchy level, one example per column.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingBatch<T> {
    vectors: DMatrix<T>,
    level: usize,
}

impl<T: Real> TrainingBatch<T> {
    pub fn new(vectors: DMatrix<T>, level: usize) -> Result<Self> {
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("training batch contains non-finite values".into()));
        }
        if vectors.ncols() < 10 * vectors.nrows() {
            log::warn!(
                "level {level}: {} examples for dimension {} (fewer than 10 per dimension)",
                vectors.ncols(),
                vectors.nrows()
            );
        }
        Ok(Self { vectors, level })
    }

    pub fn vectors(&self) -> &DMatrix<T> {
        &self.vectors
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn dim(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn len(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.ncols() == 0
    }
}

/// Affine map `z = transform * (x - mean)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Whitening<T> {
    pub mean: DVector<T>,
    /// d x N_in.
    pub transform: DMatrix<T>,
    /// Retained covariance eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    /// Requested dimensions discarded because their variance was below the floor.
    pub dropped: usize,
}

impl<T: Real> Whitening<T> {
    pub fn out_dim(&self) -> usize {
        self.transform.nrows()
    }

    pub fn apply(&self, x: &DMatrix<T>) -> DMatrix<T> {
        let mut c = x.clone();
        for mut col in c.column_iter_mut() {
            col -= &self.mean;
        }
        &self.transform * c
    }
}

/// PCA whitening onto the `out_dim` leading principal directions.
pub fn whiten<T: Real>(batch: &TrainingBatch<T>, out_dim: usize) -> Result<(DMatrix<T>, Whitening<T>)> {
    let (dim, n) = batch.vectors.shape();
    if out_dim == 0 || out_dim > dim {
        return Err(Error::Config(format!("whitening dimension {out_dim} must be in 1..={dim}")));
    }
    if n <= out_dim {
        return Err(Error::InsufficientExamples {
            level: batch.level,
            required: out_dim + 1,
            available: n,
        });
    }

    let inv_n = T::one() / T::from_usize_lossy(n);
    let mean = batch.vectors.column_sum() * inv_n;
    let mut centered = batch.vectors.clone();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let cov = (&centered * centered.transpose()) * inv_n;
    let eig = cov.symmetric_eigen();

    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let max = eig.eigenvalues[order[0]].as_f64();
    if !(max > 0.0) {
        return Err(Error::Numeric(format!("level {}: training data has zero variance", batch.level)));
    }
    let floor = EIGEN_FLOOR * max;
    let kept: Vec<usize> = order
        .into_iter()
        .take(out_dim)
        .filter(|&i| eig.eigenvalues[i].as_f64() > floor)
        .collect();
    let dropped = out_dim - kept.len();
    if dropped > 0 {
        log::warn!(
            "level {}: dropped {dropped} whitening dimension(s) below eigenvalue floor",
            batch.level
        );
    }

    let mut transform = DMatrix::zeros(kept.len(), dim);
    for (r, &i) in kept.iter().enumerate() {
        let scale = T::one() / eig.eigenvalues[i].sqrt();
        for c in 0..dim {
            transform[(r, c)] = eig.eigenvectors[(c, i)] * scale;
        }
    }
    let z = &transform * centered;
    let eigenvalues = kept.iter().map(|&i| eig.eigenvalues[i].as_f64()).collect();
    Ok((
        z,
        Whitening {
            mean,
            transform,
            eigenvalues,
            dropped,
        },
    ))
}
