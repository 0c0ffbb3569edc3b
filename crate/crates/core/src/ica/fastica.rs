use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Non-quadratic contrast used to approximate negentropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Contrast {
    #[default]
    Logcosh,
    Exp,
    Kurtosis,
}

impl Contrast {
    /// Returns (g(u), g'(u)).
    #[inline]
    fn derivatives<T: Real>(self, u: T) -> (T, T) {
        match self {
            Contrast::Logcosh => {
                let t = u.tanh();
                (t, T::one() - t * t)
            }
            Contrast::Exp => {
                let e = (-u * u * T::lit(0.5)).exp();
                (u * e, (T::one() - u * u) * e)
            }
            Contrast::Kurtosis => (u * u * u, T::lit(3.0) * u * u),
        }
    }

    /// G(u), the integral of g.
    fn objective(self, u: f64) -> f64 {
        match self {
            Contrast::Logcosh => {
                // log cosh without overflow for large |u|.
                let a = u.abs();
                a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
            }
            Contrast::Exp => -(-0.5 * u * u).exp(),
            Contrast::Kurtosis => 0.25 * u.powi(4),
        }
    }

    /// E[G(v)] for a standard normal v.
    fn gaussian_reference(self) -> f64 {
        match self {
            Contrast::Logcosh => 0.374_567_207_491_438_1,
            Contrast::Exp => -std::f64::consts::FRAC_1_SQRT_2,
            Contrast::Kurtosis => 0.75,
        }
    }

    /// Negentropy below which a component is indistinguishable from
    /// Gaussian at a few thousand samples.
    pub fn negentropy_floor(self) -> f64 {
        match self {
            Contrast::Logcosh => 1e-4,
            Contrast::Exp => 2e-4,
            Contrast::Kurtosis => 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcaOptions {
    pub contrast: Contrast,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for IcaOptions {
    fn default() -> Self {
        Self {
            contrast: Contrast::Logcosh,
            max_iter: 400,
            tol: 1e-5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct IcaResult<T> {
    /// K x d, rows orthonormal.
    pub unmixing: DMatrix<T>,
    pub converged: bool,
    pub iterations: usize,
    /// max |1 - |<w_new, w_old>|| at the last iteration.
    pub last_change: f64,
    /// Per-component negentropy approximation (E G(y) - E G(v))^2.
    pub negentropy: Vec<f64>,
    pub contrast: Contrast,
}

impl<T: Real> IcaResult<T> {
    /// True when every component looks Gaussian, i.e. ICA found no structure.
    pub fn is_gaussian_like(&self) -> bool {
        let floor = self.contrast.negentropy_floor();
        self.negentropy.iter().all(|&j| j < floor)
    }
}

/// (W Wᵀ)^(-1/2) W.
pub(crate) fn symmetric_decorrelate<T: Real>(w: &DMatrix<T>) -> Result<DMatrix<T>> {
    let gram = w * w.transpose();
    let eig = gram.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(T::zero(), |m, &v| m.max(v));
    if !(max > T::zero()) || eig.eigenvalues.iter().any(|&v| !(v > max * T::machine_epsilon())) {
        return Err(Error::Numeric("singular matrix in symmetric decorrelation".into()));
    }
    let inv_sqrt = DVector::from_iterator(
        eig.eigenvalues.len(),
        eig.eigenvalues.iter().map(|&v| T::one() / v.sqrt()),
    );
    let mut scaled = eig.eigenvectors.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= inv_sqrt[j];
    }
    Ok(scaled * eig.eigenvectors.transpose() * w)
}

/// Symmetric fixed-point FastICA on whitened data `z` (d x n).
///
/// Non-convergence is not an error: the last iterate is returned with
/// `converged == false`.
pub fn fast_ica<T: Real>(z: &DMatrix<T>, k: usize, opts: &IcaOptions, seed: u64) -> Result<IcaResult<T>> {
    let (d, n) = z.shape();
    if k == 0 || k > d {
        return Err(Error::Config(format!("component count {k} must be in 1..={d}")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no samples".into()));
    }
    if !(opts.tol > 0.0) || opts.max_iter == 0 {
        return Err(Error::Config("ICA needs tol > 0 and max_iter > 0".into()));
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite whitened data".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = DMatrix::from_fn(k, d, |_, _| T::lit(StandardNormal.sample(&mut rng)));
    let mut w = symmetric_decorrelate(&init)?;

    let inv_n = T::one() / T::from_usize_lossy(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut gy = DMatrix::<T>::zeros(k, n);
    let mut gprime = vec![T::zero(); k];

    while iterations < opts.max_iter {
        iterations += 1;
        let y = &w * z;
        gprime.iter_mut().for_each(|v| *v = T::zero());
        for j in 0..n {
            for i in 0..k {
                let (g, dg) = opts.contrast.derivatives(y[(i, j)]);
                gy[(i, j)] = g;
                gprime[i] += dg;
            }
        }
        let mut next = &gy * z.transpose() * inv_n;
        for i in 0..k {
            let beta = gprime[i] * inv_n;
            for c in 0..d {
                next[(i, c)] -= beta * w[(i, c)];
            }
        }
        let next = symmetric_decorrelate(&next)?;

        let mut change = 0.0f64;
        for i in 0..k {
            let dot = next.row(i).dot(&w.row(i)).abs().as_f64();
            change = change.max((1.0 - dot).abs());
        }
        w = next;
        last_change = change;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!(
            "FastICA did not converge in {} iterations (last change {:.3e})",
            opts.max_iter,
            last_change
        );
    }

    let y = &w * z;
    let reference = opts.contrast.gaussian_reference();
    let negentropy: Vec<f64> = (0..k)
        .map(|i| {
            let mean = y.row(i).iter().map(|v| opts.contrast.objective(v.as_f64())).sum::<f64>() / n as f64;
            (mean - reference).powi(2)
        })
        .collect();

    let result = IcaResult {
        unmixing: w,
        converged,
        iterations,
        last_change,
        negentropy,
        contrast: opts.contrast,
    };
    if result.is_gaussian_like() {
        log::warn!("all independent components have near-zero negentropy; data looks Gaussian");
    }
    Ok(result)
}

/// Amari performance index of the product `P = W A`, normalized to [0, 1].
/// Zero means `P` is a scaled permutation.
pub fn amari_index<T: Real>(product: &DMatrix<T>) -> f64 {
    let n = product.nrows();
    assert_eq!(n, product.ncols(), "Amari index needs a square product");
    if n < 2 {
        return 0.0;
    }
    let a = product.map(|v| v.abs().as_f64());
    let mut total = 0.0;
    for i in 0..n {
        let row = a.row(i);
        let max = row.max();
        total += row.sum() / max - 1.0;
    }
    for j in 0..n {
        let col = a.column(j);
        let max = col.max();
        total += col.sum() / max - 1.0;
    }
    total / (2.0 * n as f64 * (n as f64 - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn uniform_sources(k: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = 3f64.sqrt();
        DMatrix::from_fn(k, n, |_, _| rng.random_range(-h..h))
    }

    #[test]
    fn decorrelated_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = DMatrix::from_fn(5, 7, |_, _| rng.random_range(-1.0..1.0));
        let o = symmetric_decorrelate(&w).unwrap();
        let g = &o * o.transpose();
        assert!((g - DMatrix::identity(5, 5)).amax() < 1e-12);
    }

    #[test]
    fn separates_two_uniform_sources() {
        // Sources are already unit-variance and independent, so a random
        // rotation keeps them white and the mixing is that rotation.
        let s = uniform_sources(2, 20_000, 11);
        let theta: f64 = 0.7;
        let a = DMatrix::from_row_slice(2, 2, &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()]);
        let z = &a * &s;
        let r = fast_ica(&z, 2, &IcaOptions::default(), 5).unwrap();
        assert!(r.converged);
        let amari = amari_index(&(&r.unmixing * &a));
        assert!(amari < 0.05, "amari {amari}");
        assert!(!r.is_gaussian_like());
    }

    #[test]
    fn all_contrasts_separate() {
        let s = uniform_sources(3, 10_000, 2);
        for contrast in [Contrast::Logcosh, Contrast::Exp, Contrast::Kurtosis] {
            let opts = IcaOptions { contrast, ..Default::default() };
            let r = fast_ica(&s, 3, &opts, 1).unwrap();
            assert!(amari_index(&r.unmixing) < 0.05, "{contrast:?}");
        }
    }

    #[test]
    fn gaussian_data_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let z = DMatrix::from_fn(4, 20_000, |_, _| StandardNormal.sample(&mut rng));
        let r: IcaResult<f64> = fast_ica(&z, 4, &IcaOptions::default(), 1).unwrap();
        assert!(!r.converged || r.is_gaussian_like(), "{:?}", r.negentropy);
    }

    #[test]
    fn single_component_is_unit_vector() {
        let z = uniform_sources(1, 1000, 4);
        let r = fast_ica(&z, 1, &IcaOptions::default(), 8).unwrap();
        assert!((r.unmixing[(0, 0)].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rows_orthonormal_and_reproducible() {
        let z = uniform_sources(6, 4000, 6);
        let a = fast_ica(&z, 4, &IcaOptions::default(), 77).unwrap();
        let b = fast_ica(&z, 4, &IcaOptions::default(), 77).unwrap();
        assert_eq!(a.unmixing, b.unmixing);
        let g = &a.unmixing * a.unmixing.transpose();
        assert!((g - DMatrix::identity(4, 4)).amax() < 1e-8);
    }

    #[test]
    fn rejects_too_many_components() {
        let z = uniform_sources(2, 100, 1);
        assert!(matches!(fast_ica(&z, 3, &IcaOptions::default(), 0), Err(Error::Config(_))));
    }

    #[test]
    fn amari_of_permutation_is_zero() {
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 5.0]);
        assert_eq!(amari_index(&p), 0.0);
        let full = DMatrix::from_element(3, 3, 1.0);
        assert!((amari_index(&full) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn logcosh_objective_matches_direct_formula() {
        for u in [-3.0, -0.2, 0.0, 1.5, 4.0] {
            let direct = f64::cosh(u).ln();
            assert!((Contrast::Logcosh.objective(u) - direct).abs() < 1e-12);
        }
    }
}
