use std::io::{Read, Write};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_priors, priors_from_occupancy, EmissionKind, Mixture, Occupancy, UpdateOutcome, EMPTY_COMPONENT};
use crate::binio::*;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Bernoulli parameters are kept in [PROB_FLOOR, 1 - PROB_FLOOR].
pub const PROB_FLOOR: f64 = 1e-4;

/// Mixture of independent multivariate Bernoulli distributions. A binary
/// observation is the ascending list of its active dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct BernoulliMixture<T> {
    log_priors: Vec<T>,
    /// M x N.
    params: DMatrix<T>,
    /// Σ_n log(1 - p_in) per component.
    base: Vec<T>,
    /// log p_in - log(1 - p_in).
    logit: DMatrix<T>,
}

#[derive(Debug, Clone)]
pub struct BernoulliStats {
    pub occupancy: Occupancy<Vec<u32>>,
    /// Weighted activation counts, M x N.
    pub counts: DMatrix<f64>,
}

fn clamp_prob<T: Real>(p: T) -> T {
    let lo = T::lit(PROB_FLOOR);
    let hi = T::one() - lo;
    p.max(lo).min(hi)
}

impl<T: Real> BernoulliMixture<T> {
    /// Parameters outside [ε, 1-ε] are clamped into it.
    pub fn new(priors: Vec<T>, params: DMatrix<T>) -> Result<Self> {
        check_priors(&priors)?;
        if params.nrows() != priors.len() || params.ncols() == 0 {
            return Err(Error::shape(
                format!("{} x N parameters", priors.len()),
                format!("{} x {}", params.nrows(), params.ncols()),
            ));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidInput("non-finite Bernoulli parameter".into()));
        }
        let params = params.map(clamp_prob);
        let mut out = Self {
            log_priors: priors.iter().map(|p| p.ln()).collect(),
            base: Vec::new(),
            logit: DMatrix::zeros(0, 0),
            params,
        };
        out.refresh();
        Ok(out)
    }

    /// Uniform priors; each p_in is the data mean of dimension n plus
    /// seeded noise in ±0.05.
    pub fn init_from_data(m: usize, dim: usize, data: &[Vec<u32>], seed: u64) -> Result<Self> {
        if m == 0 || dim == 0 {
            return Err(Error::Config("Bernoulli mixture needs M > 0 and N > 0".into()));
        }
        let mut mean = vec![0.0f64; dim];
        for x in data {
            for &i in x {
                let i = i as usize;
                if i >= dim {
                    return Err(Error::Index { index: i, len: dim });
                }
                mean[i] += 1.0;
            }
        }
        let n = data.len().max(1) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = DMatrix::from_fn(m, dim, |_, c| T::lit(mean[c] / n + rng.random_range(-0.05..=0.05)));
        Self::new(vec![T::lit(1.0 / m as f64); m], params)
    }

    fn refresh(&mut self) {
        let (m, n) = self.params.shape();
        self.logit = DMatrix::from_fn(m, n, |i, j| {
            let p = self.params[(i, j)];
            p.ln() - (T::one() - p).ln()
        });
        self.base = (0..m)
            .map(|i| self.params.row(i).iter().fold(T::zero(), |acc, &p| acc + (T::one() - p).ln()))
            .collect();
    }

    pub fn params(&self) -> &DMatrix<T> {
        &self.params
    }

    /// Log mass of a dense 0/1 vector.
    pub fn log_pdf_dense(&self, x: &[T]) -> Result<T> {
        if x.len() != self.dim() {
            return Err(Error::shape(format!("dimension {}", self.dim()), x.len()));
        }
        let mut active = Vec::new();
        for (i, &v) in x.iter().enumerate() {
            if v == T::one() {
                active.push(i as u32);
            } else if v != T::zero() {
                return Err(Error::InvalidInput(format!("non-binary value at dimension {i}")));
            }
        }
        Ok(self.log_pdf(&active))
    }
}

impl<T: Real> Mixture<T> for BernoulliMixture<T> {
    type Obs = Vec<u32>;
    type Stats = BernoulliStats;

    const KIND: EmissionKind = EmissionKind::Binary;

    fn n_components(&self) -> usize {
        self.log_priors.len()
    }

    fn dim(&self) -> usize {
        self.params.ncols()
    }

    fn priors(&self) -> Vec<T> {
        self.log_priors.iter().map(|l| l.exp()).collect()
    }

    fn validate(&self, x: &Vec<u32>) -> Result<()> {
        if x.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput("active indices must be strictly ascending".into()));
        }
        match x.last() {
            Some(&i) if i as usize >= self.dim() => Err(Error::shape(
                format!("indices below {}", self.dim()),
                format!("index {i}"),
            )),
            _ => Ok(()),
        }
    }

    fn component_log_joint(&self, x: &Vec<u32>, out: &mut [T]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.log_priors[i] + self.base[i];
        }
        for &n in x {
            let col = self.logit.column(n as usize);
            for (o, &l) in out.iter_mut().zip(col.iter()) {
                *o += l;
            }
        }
    }

    fn new_stats(&self) -> BernoulliStats {
        BernoulliStats {
            occupancy: Occupancy::new(self.n_components()),
            counts: DMatrix::zeros(self.n_components(), self.dim()),
        }
    }

    fn add_weighted(&self, stats: &mut BernoulliStats, x: &Vec<u32>, resp: &[T], weight: f64, log_like: f64) {
        stats.occupancy.observe(x, log_like, weight);
        for (i, r) in resp.iter().enumerate() {
            let w = weight * r.as_f64();
            if w == 0.0 {
                continue;
            }
            stats.occupancy.per_component[i] += w;
            for &n in x {
                stats.counts[(i, n as usize)] += w;
            }
        }
    }

    fn merge_stats(into: &mut BernoulliStats, other: BernoulliStats) {
        into.occupancy.merge(other.occupancy);
        into.counts += other.counts;
    }

    fn update(&mut self, stats: &BernoulliStats) -> UpdateOutcome {
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
                let worst = stats.occupancy.worst.as_ref().map(|(_, x)| x.as_slice()).unwrap_or(&[]);
                for n in 0..dim {
                    let pooled = stats.counts.column(n).sum() / total;
                    let hit = if worst.binary_search(&(n as u32)).is_ok() { 1.0 } else { 0.0 };
                    self.params[(i, n)] = clamp_prob(T::lit(0.5 * (hit + pooled)));
                }
            } else {
                for n in 0..dim {
                    self.params[(i, n)] = clamp_prob(T::lit(stats.counts[(i, n)] / occ[i]));
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
        for i in 0..self.n_components() {
            for n in 0..self.dim() {
                put_f64(&mut w, self.params[(i, n)].as_f64())?;
            }
        }
        Ok(())
    }

    fn read_from(r: &mut dyn Read) -> Result<Self> {
        let mut r = r;
        let m = get_count(&mut r, 1 << 12, "WHMM", "mixture components")?;
        let n = get_count(&mut r, 1 << 24, "WHMM", "mixture dimension")?;
        let priors = (0..m).map(|_| get_f64(&mut r).map(T::lit)).collect::<Result<Vec<T>>>()?;
        let mut params = DMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                params[(i, j)] = T::lit(get_f64(&mut r)?);
            }
        }
        Self::new(priors, params).map_err(|e| Error::format("WHMM", e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::em_fit;

    #[test]
    fn uniform_bernoulli_mass() {
        let mix = BernoulliMixture::new(vec![1.0], DMatrix::from_element(1, 10, 0.5)).unwrap();
        for x in [vec![], vec![0, 3, 9], (0..10).collect::<Vec<u32>>()] {
            assert!((mix.log_pdf(&x) - 10.0 * 0.5f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn two_component_hand_value() {
        let e = PROB_FLOOR;
        let mix = BernoulliMixture::new(vec![0.5, 0.5], DMatrix::from_column_slice(2, 1, &[e, 1.0 - e])).unwrap();
        let expected = (0.5 * e + 0.5 * (1.0 - e)).ln();
        assert!((mix.log_pdf(&vec![0]) - expected).abs() < 1e-12);
    }

    #[test]
    fn parameters_are_clamped() {
        let mix = BernoulliMixture::new(vec![1.0], DMatrix::from_row_slice(1, 2, &[0.0, 1.0])).unwrap();
        assert_eq!(mix.params()[(0, 0)], PROB_FLOOR);
        assert_eq!(mix.params()[(0, 1)], 1.0 - PROB_FLOOR);
        assert!(mix.log_pdf(&vec![0]).is_finite());
    }

    #[test]
    fn rejects_bad_observations() {
        let mix = BernoulliMixture::<f64>::new(vec![1.0], DMatrix::from_element(1, 4, 0.3)).unwrap();
        assert!(mix.validate(&vec![4]).is_err());
        assert!(mix.validate(&vec![2, 1]).is_err());
        assert!(mix.log_pdf_dense(&[0.0, 0.5, 1.0, 0.0]).is_err());
        let dense = mix.log_pdf_dense(&[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert!((dense - mix.log_pdf(&vec![1, 2])).abs() < 1e-15);
    }

    #[test]
    fn single_component_fits_column_means() {
        let data = vec![vec![0, 1], vec![0], vec![0, 2], vec![0, 1, 2]];
        let init = BernoulliMixture::<f64>::init_from_data(1, 4, &data, 3).unwrap();
        let fit = em_fit(init, &data, 3).unwrap();
        let p = fit.mixture.params();
        let expected = [1.0 - PROB_FLOOR, 0.5, 0.5, PROB_FLOOR];
        for (n, e) in expected.iter().enumerate() {
            assert!((p[(0, n)] - e).abs() < 1e-12, "dim {n}: {}", p[(0, n)]);
        }
    }

    #[test]
    fn empty_component_is_reseeded() {
        // Component 1 explains nothing: its prior is tiny and it points the wrong way.
        let mix = BernoulliMixture::new(
            vec![1.0 - 1e-300, 1e-300],
            DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]),
        )
        .unwrap();
        let data = vec![vec![0], vec![1], vec![0, 1]];
        let mut stats = mix.new_stats();
        for x in &data {
            mix.accumulate(&mut stats, x, 1.0);
        }
        let mut m = mix.clone();
        match m.update(&stats) {
            UpdateOutcome::Updated { reseeded } => assert_eq!(reseeded, vec![1]),
            other => panic!("{other:?}"),
        }
        let priors = m.priors();
        assert!((priors.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(priors[1] > 0.1);
    }

    #[test]
    fn file_round_trip() {
        let mix = BernoulliMixture::new(vec![0.25, 0.75], DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 0.4, 0.5, 0.6])).unwrap();
        let mut buf = Vec::new();
        mix.write_to(&mut buf).unwrap();
        let back = BernoulliMixture::<f64>::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back.params(), mix.params());
        assert!((back.priors()[1] - 0.75).abs() < 1e-15);
    }
}
