use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{check_priors, priors_from_occupancy, EmissionKind, Mixture, Occupancy, UpdateOutcome, EMPTY_COMPONENT};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const VARIANCE_FLOOR: f64 = 1e-6;

/// Mixture of diagonal-covariance Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture<T> {
    log_priors: Vec<T>,
    /// M x N.
    means: DMatrix<T>,
    variances: DMatrix<T>,
    /// -0.5 Σ_n log(2π σ²_in).
    log_norm: Vec<T>,
}

#[derive(Debug, Clone)]
pub struct GaussianStats {
    pub occupancy: Occupancy<Vec<f64>>,
    pub sum: DMatrix<f64>,
    pub sum_sq: DMatrix<f64>,
}

impl<T: Real> GaussianMixture<T> {
    /// Variances below the floor are raised to it.
    pub fn new(priors: Vec<T>, means: DMatrix<T>, variances: DMatrix<T>) -> Result<Self> {
        check_priors(&priors)?;
        if means.nrows() != priors.len() || means.ncols() == 0 || variances.shape() != means.shape() {
            return Err(Error::shape(
                format!("{} x N means and variances", priors.len()),
                format!("{:?} and {:?}", means.shape(), variances.shape()),
            ));
        }
        if means.iter().chain(variances.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite Gaussian parameter".into()));
        }
        let floor = T::lit(VARIANCE_FLOOR);
        let mut out = Self {
            log_priors: priors.iter().map(|p| p.ln()).collect(),
            means,
            variances: variances.map(|v| v.max(floor)),
            log_norm: Vec::new(),
        };
        out.refresh();
        Ok(out)
    }

    /// Uniform priors, means at distinct random data points, every
    /// variance set to the global per-dimension variance.
    pub fn init_from_data(m: usize, data: &[Vec<T>], seed: u64) -> Result<Self> {
        let dim = data.first().map(Vec::len).unwrap_or(0);
        if m == 0 || dim == 0 || data.len() < m {
            return Err(Error::InvalidInput(format!("{} points of dimension {dim} for {m} components", data.len())));
        }
        if data.iter().any(|x| x.len() != dim) {
            return Err(Error::InvalidInput("data points differ in dimension".into()));
        }
        let n = data.len() as f64;
        let mut mean = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        for x in data {
            for (j, v) in x.iter().enumerate() {
                let v = v.as_f64();
                mean[j] += v;
                sq[j] += v * v;
            }
        }
        let var: Vec<f64> = (0..dim).map(|j| sq[j] / n - (mean[j] / n).powi(2)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let picks = index::sample(&mut rng, data.len(), m).into_vec();
        let means = DMatrix::from_fn(m, dim, |i, j| data[picks[i]][j]);
        let variances = DMatrix::from_fn(m, dim, |_, j| T::lit(var[j]));
        Self::new(vec![T::lit(1.0 / m as f64); m], means, variances)
    }

    fn refresh(&mut self) {
        let two_pi = T::two_pi();
        self.log_norm = (0..self.means.nrows())
            .map(|i| {
                self.variances
                    .row(i)
                    .iter()
                    .fold(T::zero(), |acc, &v| acc - T::lit(0.5) * (two_pi * v).ln())
            })
            .collect();
    }

    pub fn means(&self) -> &DMatrix<T> {
        &self.means
    }

    pub fn variances(&self) -> &DMatrix<T> {
        &self.variances
    }
}

impl<T: Real> Mixture<T> for GaussianMixture<T> {
    type Obs = Vec<T>;
    type Stats = GaussianStats;

    const KIND: EmissionKind = EmissionKind::Real;

    fn n_components(&self) -> usize {
        self.log_priors.len()
    }

    fn dim(&self) -> usize {
        self.means.ncols()
    }

    fn priors(&self) -> Vec<T> {
        self.log_priors.iter().map(|l| l.exp()).collect()
    }

    fn validate(&self, x: &Vec<T>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!("dimension {}", self.dim()), x.len()));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite observation".into()));
        }
        Ok(())
    }

    fn component_log_joint(&self, x: &Vec<T>, out: &mut [T]) {
        let half = T::lit(0.5);
        for (i, o) in out.iter_mut().enumerate() {
            let mut q = T::zero();
            for (n, &v) in x.iter().enumerate() {
                let d = v - self.means[(i, n)];
                q += d * d / self.variances[(i, n)];
            }
            *o = self.log_priors[i] + self.log_norm[i] - half * q;
        }
    }

    fn new_stats(&self) -> GaussianStats {
        let (m, n) = self.means.shape();
        GaussianStats {
            occupancy: Occupancy::new(m),
            sum: DMatrix::zeros(m, n),
            sum_sq: DMatrix::zeros(m, n),
        }
    }

    fn add_weighted(&self, stats: &mut GaussianStats, x: &Vec<T>, resp: &[T], weight: f64, log_like: f64) {
        let xf: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        stats.occupancy.observe(&xf, log_like, weight);
        for (i, r) in resp.iter().enumerate() {
            let w = weight * r.as_f64();
            if w == 0.0 {
                continue;
            }
            stats.occupancy.per_component[i] += w;
            for (n, &v) in xf.iter().enumerate() {
                stats.sum[(i, n)] += w * v;
                stats.sum_sq[(i, n)] += w * v * v;
            }
        }
    }

    fn merge_stats(into: &mut GaussianStats, other: GaussianStats) {
        into.occupancy.merge(other.occupancy);
        into.sum += other.sum;
        into.sum_sq += other.sum_sq;
    }

    fn update(&mut self, stats: &GaussianStats) -> UpdateOutcome {
        let occ = &stats.occupancy.per_component;
        let total = stats.occupancy.total();
        if !(total > EMPTY_COMPONENT) {
            return UpdateOutcome::NoData;
        }
        let dim = self.dim();
        let mut reseeded = Vec::new();
        for i in 0..self.n_components() {
            if occ[i] < EMPTY_COMPONENT {
                reseeded.push(i);
                for n in 0..dim {
                    let mu = stats.sum.column(n).sum() / total;
                    let var = stats.sum_sq.column(n).sum() / total - mu * mu;
                    let seed_point = stats.occupancy.worst.as_ref().map_or(mu, |(_, x)| x[n]);
                    self.means[(i, n)] = T::lit(seed_point);
                    self.variances[(i, n)] = T::lit(var.max(VARIANCE_FLOOR));
                }
            } else {
                for n in 0..dim {
                    let mu = stats.sum[(i, n)] / occ[i];
                    let var = stats.sum_sq[(i, n)] / occ[i] - mu * mu;
                    self.means[(i, n)] = T::lit(mu);
                    self.variances[(i, n)] = T::lit(var.max(VARIANCE_FLOOR));
                }
            }
        }
        self.log_priors = priors_from_occupancy::<T>(occ, &reseeded).into_iter().map(|p| p.ln()).collect();
        self.refresh();
        UpdateOutcome::Updated { reseeded }
    }

    fn write_to(&self, w: &mut dyn Write) -> Result<()> {
        let mut w = w;
        put_u32(&mut w, self.n_components() as u32)?;
        put_u32(&mut w, self.dim() as u32)?;
        for p in self.priors() {
            put_f64(&mut w, p.as_f64())?;
        }
        for m in [&self.means, &self.variances] {
            for i in 0..m.nrows() {
                for n in 0..m.ncols() {
                    put_f64(&mut w, m[(i, n)].as_f64())?;
                }
            }
        }
        Ok(())
    }

    fn read_from(r: &mut dyn Read) -> Result<Self> {
        let mut r = r;
        let m = get_count(&mut r, 1 << 12, "WHMM", "mixture components")?;
        let n = get_count(&mut r, 1 << 20, "WHMM", "mixture dimension")?;
        let priors = (0..m).map(|_| get_f64(&mut r).map(T::lit)).collect::<Result<Vec<T>>>()?;
        let mut mats = [DMatrix::zeros(m, n), DMatrix::zeros(m, n)];
        for mat in &mut mats {
            for i in 0..m {
                for j in 0..n {
                    mat[(i, j)] = T::lit(get_f64(&mut r)?);
                }
            }
        }
        let [means, variances] = mats;
        Self::new(priors, means, variances).map_err(|e| Error::format("WHMM", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::em_fit;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn standard_normal_at_mode() {
        let g = GaussianMixture::new(vec![1.0], DMatrix::zeros(1, 1), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let expected = -0.5 * (2.0 * std::f64::consts::PI).ln();
        assert!((g.log_pdf(&vec![0.0]) - expected).abs() < 1e-14);
    }

    #[test]
    fn variance_is_floored() {
        let g = GaussianMixture::new(vec![1.0], DMatrix::zeros(1, 2), DMatrix::zeros(1, 2)).unwrap();
        assert!(g.variances().iter().all(|&v| v == VARIANCE_FLOOR));
        assert!(g.log_pdf(&vec![1e3, -1e3]).is_finite());
    }

    #[test]
    fn recovers_two_separated_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let data: Vec<Vec<f64>> = (0..600)
            .map(|i| {
                let c = if i % 3 == 0 { 5.0 } else { -2.0 };
                let g: f64 = StandardNormal.sample(&mut rng);
                vec![c + 0.5 * g, rng.random_range(-1.0..1.0)]
            })
            .collect();
        let init = GaussianMixture::init_from_data(2, &data, 1).unwrap();
        let fit = em_fit(init, &data, 30).unwrap();
        let mut mus: Vec<(f64, f64)> = (0..2)
            .map(|i| (fit.mixture.means()[(i, 0)], fit.mixture.priors()[i]))
            .collect();
        mus.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((mus[0].0 + 2.0).abs() < 0.1 && (mus[1].0 - 5.0).abs() < 0.1, "{mus:?}");
        assert!((mus[1].1 - 1.0 / 3.0).abs() < 0.02);
        assert!(fit.log_likelihood.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn dimension_mismatch() {
        let g = GaussianMixture::new(vec![1.0], DMatrix::zeros(1, 2), DMatrix::from_element(1, 2, 1.0)).unwrap();
        assert!(g.validate(&vec![0.0]).is_err());
        assert!(em_fit(g, &[vec![1.0, 2.0, 3.0]], 1).is_err());
    }

    #[test]
    fn file_round_trip() {
        let g = GaussianMixture::new(
            vec![0.4, 0.6],
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 1.5, 2.5, 3.5]),
        )
        .unwrap();
        let mut buf = Vec::new();
        g.write_to(&mut buf).unwrap();
        let back = GaussianMixture::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.means(), g.means());
        assert_eq!(back.variances(), g.variances());
    }
}
