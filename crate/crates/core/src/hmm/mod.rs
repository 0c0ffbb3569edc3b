//! Left-right whole-word HMMs with mixture emissions.

mod recognizer;
mod train;

use nalgebra::DMatrix;

pub use recognizer::{argmax_first, AnyRecognizer, Recognition, Recognizer};
pub use train::{baum_welch, train_word_models, HmmConfig};

use crate::error::{Error, Result};
use crate::logmath::{log_sum_exp, safe_ln};
use crate::mixtures::Mixture;
use crate::scalar::Real;

/// Strict step-or-stay left-right model starting in state 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WordHmm<T, E> {
    label: String,
    /// Row-stochastic, non-zero only on the diagonal and first superdiagonal.
    trans: DMatrix<T>,
    log_trans: DMatrix<T>,
    emissions: Vec<E>,
}

impl<T: Real, E: Mixture<T>> WordHmm<T, E> {
    pub fn new(label: impl Into<String>, trans: DMatrix<T>, emissions: Vec<E>) -> Result<Self> {
        let n = emissions.len();
        if n == 0 {
            return Err(Error::InvalidInput("HMM needs at least one state".into()));
        }
        if trans.shape() != (n, n) {
            return Err(Error::shape(format!("{n} x {n} transitions"), format!("{:?}", trans.shape())));
        }
        let dim = emissions[0].dim();
        if emissions.iter().any(|e| e.dim() != dim) {
            return Err(Error::InvalidInput("state emissions differ in dimension".into()));
        }
        for q in 0..n {
            let mut sum = 0.0;
            for r in 0..n {
                let a = trans[(q, r)];
                if !(a >= T::zero()) || !a.is_finite() {
                    return Err(Error::InvalidInput(format!("transition ({q},{r}) is not a probability")));
                }
                if a > T::zero() && r != q && r != q + 1 {
                    return Err(Error::InvalidInput(format!("transition ({q},{r}) violates the left-right mask")));
                }
                sum += a.as_f64();
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!("transition row {q} sums to {sum}")));
            }
        }
        let log_trans = trans.map(safe_ln);
        Ok(Self {
            label: label.into(),
            trans,
            log_trans,
            emissions,
        })
    }

    /// Transition matrix with the given self-loop probability; the last
    /// state loops with probability 1.
    pub fn left_right_transitions(n: usize, self_loop: f64) -> DMatrix<T> {
        DMatrix::from_fn(n, n, |q, r| {
            if q + 1 == n {
                T::lit(if r == q { 1.0 } else { 0.0 })
            } else if r == q {
                T::lit(self_loop)
            } else if r == q + 1 {
                T::lit(1.0 - self_loop)
            } else {
                T::zero()
            }
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn n_states(&self) -> usize {
        self.emissions.len()
    }

    pub fn dim(&self) -> usize {
        self.emissions[0].dim()
    }

    pub fn transitions(&self) -> &DMatrix<T> {
        &self.trans
    }

    pub fn emissions(&self) -> &[E] {
        &self.emissions
    }

    pub(crate) fn set_parameters(&mut self, trans: DMatrix<T>, emissions: Vec<E>) {
        self.log_trans = trans.map(safe_ln);
        self.trans = trans;
        self.emissions = emissions;
    }

    fn check_sequence(&self, seq: &[E::Obs]) -> Result<()> {
        if seq.is_empty() {
            return Err(Error::InvalidInput("empty observation sequence".into()));
        }
        for x in seq {
            self.emissions[0].validate(x)?;
        }
        Ok(())
    }

    /// log b_q(x_t), T x n.
    pub(crate) fn emission_table(&self, seq: &[E::Obs]) -> DMatrix<T> {
        DMatrix::from_fn(seq.len(), self.n_states(), |t, q| self.emissions[q].log_pdf(&seq[t]))
    }

    /// Forward log-probabilities α, T x n.
    pub(crate) fn forward_table(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let (len, n) = b.shape();
        let mut alpha = DMatrix::from_element(len, n, T::neg_infinity());
        alpha[(0, 0)] = b[(0, 0)];
        let mut terms = Vec::with_capacity(n);
        for t in 1..len {
            for r in 0..n {
                terms.clear();
                for q in 0..n {
                    let a = self.log_trans[(q, r)];
                    if a > T::neg_infinity() {
                        terms.push(alpha[(t - 1, q)] + a);
                    }
                }
                alpha[(t, r)] = log_sum_exp(&terms) + b[(t, r)];
            }
        }
        alpha
    }

    /// Backward log-probabilities β, T x n.
    pub(crate) fn backward_table(&self, b: &DMatrix<T>) -> DMatrix<T> {
        let (len, n) = b.shape();
        let mut beta = DMatrix::from_element(len, n, T::neg_infinity());
        for q in 0..n {
            beta[(len - 1, q)] = T::zero();
        }
        let mut terms = Vec::with_capacity(n);
        for t in (0..len - 1).rev() {
            for q in 0..n {
                terms.clear();
                for r in 0..n {
                    let a = self.log_trans[(q, r)];
                    if a > T::neg_infinity() {
                        terms.push(a + b[(t + 1, r)] + beta[(t + 1, r)]);
                    }
                }
                beta[(t, q)] = log_sum_exp(&terms);
            }
        }
        beta
    }

    /// log p(seq | model), summed over all state paths and end states.
    pub fn forward_log_likelihood(&self, seq: &[E::Obs]) -> Result<T> {
        self.check_sequence(seq)?;
        let b = self.emission_table(seq);
        let alpha = self.forward_table(&b);
        let last: Vec<T> = alpha.row(seq.len() - 1).iter().copied().collect();
        Ok(log_sum_exp(&last))
    }

    /// Most likely state path and its log-probability.
    pub fn viterbi(&self, seq: &[E::Obs]) -> Result<(T, Vec<usize>)> {
        self.check_sequence(seq)?;
        let b = self.emission_table(seq);
        let (len, n) = b.shape();
        let mut delta = DMatrix::from_element(len, n, T::neg_infinity());
        let mut back = vec![vec![0usize; n]; len];
        delta[(0, 0)] = b[(0, 0)];
        for t in 1..len {
            for r in 0..n {
                let mut best = (T::neg_infinity(), 0);
                for q in 0..n {
                    let v = delta[(t - 1, q)] + self.log_trans[(q, r)];
                    if v > best.0 {
                        best = (v, q);
                    }
                }
                delta[(t, r)] = best.0 + b[(t, r)];
                back[t][r] = best.1;
            }
        }
        let (mut state, mut score) = (0, T::neg_infinity());
        for q in 0..n {
            if delta[(len - 1, q)] > score {
                score = delta[(len - 1, q)];
                state = q;
            }
        }
        let mut path = vec![0; len];
        for t in (0..len).rev() {
            path[t] = state;
            if t > 0 {
                state = back[t][state];
            }
        }
        Ok((score, path))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixtures::BernoulliMixture;

    fn bern(p: &[f64]) -> BernoulliMixture<f64> {
        BernoulliMixture::new(vec![1.0], DMatrix::from_row_slice(1, p.len(), p)).unwrap()
    }

    #[test]
    fn single_state_sums_emissions() {
        let e = bern(&[0.2, 0.7]);
        let h = WordHmm::new("w", DMatrix::from_element(1, 1, 1.0), vec![e.clone()]).unwrap();
        let seq = vec![vec![0], vec![], vec![0, 1]];
        let direct: f64 = seq.iter().map(|x| e.log_pdf(x)).sum();
        assert!((h.forward_log_likelihood(&seq).unwrap() - direct).abs() < 1e-12);
    }

    #[test]
    fn mask_is_enforced() {
        let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.5, 0.5, 0.5]);
        assert!(WordHmm::new("w", t, vec![bern(&[0.5]), bern(&[0.5])]).is_err());
        let t = DMatrix::from_row_slice(2, 2, &[0.5, 0.4, 0.0, 1.0]);
        assert!(WordHmm::new("w", t, vec![bern(&[0.5]), bern(&[0.5])]).is_err());
    }

    #[test]
    fn empty_sequence_rejected() {
        let h = WordHmm::new("w", DMatrix::from_element(1, 1, 1.0), vec![bern(&[0.5])]).unwrap();
        assert!(matches!(h.forward_log_likelihood(&[]), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn viterbi_follows_emissions() {
        let t = WordHmm::<f64, BernoulliMixture<f64>>::left_right_transitions(2, 0.5);
        let h = WordHmm::new("w", t, vec![bern(&[0.99, 0.01]), bern(&[0.01, 0.99])]).unwrap();
        let seq = vec![vec![0], vec![0], vec![1], vec![1]];
        let (score, path) = h.viterbi(&seq).unwrap();
        assert_eq!(path, vec![0, 0, 1, 1]);
        assert!(score <= h.forward_log_likelihood(&seq).unwrap());
    }

    #[test]
    fn forward_backward_agree() {
        let t = WordHmm::<f64, BernoulliMixture<f64>>::left_right_transitions(3, 0.6);
        let h = WordHmm::new("w", t, vec![bern(&[0.9, 0.1]), bern(&[0.5, 0.5]), bern(&[0.2, 0.8])]).unwrap();
        let seq = vec![vec![0], vec![1], vec![0, 1], vec![1], vec![]];
        let b = h.emission_table(&seq);
        let alpha = h.forward_table(&b);
        let beta = h.backward_table(&b);
        let ll = h.forward_log_likelihood(&seq).unwrap();
        for t in 0..seq.len() {
            let row: Vec<f64> = (0..3).map(|q| alpha[(t, q)] + beta[(t, q)]).collect();
            assert!((log_sum_exp(&row) - ll).abs() < 1e-12);
        }
    }
}
