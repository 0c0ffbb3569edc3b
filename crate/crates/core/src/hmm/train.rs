use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::WordHmm;
use crate::error::{Error, Result};
use crate::mixtures::{em_fit, Mixture, UpdateOutcome};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HmmConfig {
    pub n_states: usize,
    /// Mixture components per state.
    pub n_components: usize,
    /// Baum-Welch iterations.
    pub iterations: usize,
    /// EM iterations per state during the flat start.
    pub init_em_iterations: usize,
    pub self_loop: f64,
}

impl Default for HmmConfig {
    fn default() -> Self {
        Self {
            n_states: 16,
            n_components: 8,
            iterations: 50,
            init_em_iterations: 5,
            self_loop: 0.6,
        }
    }
}

impl HmmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.n_components == 0 {
            return Err(Error::Config("HMM needs positive state and component counts".into()));
        }
        if !(self.self_loop > 0.0 && self.self_loop < 1.0) {
            return Err(Error::Config(format!("self-loop probability {} must lie in (0, 1)", self.self_loop)));
        }
        Ok(())
    }
}

struct Accumulator<S> {
    /// Expected transition counts q -> r.
    trans: DMatrix<f64>,
    emissions: Vec<S>,
    log_likelihood: f64,
}

impl<T: Real, E: Mixture<T>> WordHmm<T, E> {
    /// Uniform segmentation of each sequence across the states, then a few
    /// EM iterations per state on its frames.
    pub fn flat_start<F>(label: impl Into<String>, cfg: &HmmConfig, seqs: &[&[E::Obs]], init: F, seed: u64) -> Result<Self>
    where
        F: Fn(&[E::Obs], u64) -> Result<E>,
    {
        cfg.validate()?;
        let label = label.into();
        let n = cfg.n_states;
        let mut per_state: Vec<Vec<E::Obs>> = vec![Vec::new(); n];
        for seq in seqs {
            let len = seq.len();
            for (t, x) in seq.iter().enumerate() {
                per_state[t * n / len].push(x.clone());
            }
        }
        let all: Vec<E::Obs> = seqs.iter().flat_map(|s| s.iter().cloned()).collect();
        if all.len() < cfg.n_components {
            return Err(Error::InvalidInput(format!(
                "word `{label}`: {} frames for {} mixture components",
                all.len(),
                cfg.n_components
            )));
        }
        let mut emissions = Vec::with_capacity(n);
        for (q, frames) in per_state.iter().enumerate() {
            let data = if frames.len() >= cfg.n_components {
                frames.as_slice()
            } else {
                log::warn!("word `{label}`: state {q} has {} frames at flat start; using all frames", frames.len());
                all.as_slice()
            };
            let start = init(data, seed.wrapping_add(q as u64))?;
            emissions.push(em_fit(start, data, cfg.init_em_iterations)?.mixture);
        }
        Self::new(label, Self::left_right_transitions(n, cfg.self_loop), emissions)
    }

    fn accumulate(&self, seq: &[E::Obs]) -> Accumulator<E::Stats> {
        let n = self.n_states();
        let b = self.emission_table(seq);
        let alpha = self.forward_table(&b);
        let beta = self.backward_table(&b);
        let last: Vec<T> = alpha.row(seq.len() - 1).iter().copied().collect();
        let ll = crate::logmath::log_sum_exp(&last);

        let mut trans = DMatrix::zeros(n, n);
        let mut emissions: Vec<E::Stats> = self.emissions.iter().map(|e| e.new_stats()).collect();
        for t in 0..seq.len() {
            for q in 0..n {
                let gamma = (alpha[(t, q)] + beta[(t, q)] - ll).exp().as_f64();
                if gamma > 0.0 {
                    self.emissions[q].accumulate(&mut emissions[q], &seq[t], gamma);
                }
                if t + 1 < seq.len() {
                    for r in q..(q + 2).min(n) {
                        let a = self.log_trans[(q, r)];
                        if a > T::neg_infinity() {
                            let xi = alpha[(t, q)] + a + b[(t + 1, r)] + beta[(t + 1, r)] - ll;
                            trans[(q, r)] += xi.exp().as_f64();
                        }
                    }
                }
            }
        }
        Accumulator {
            trans,
            emissions,
            log_likelihood: ll.as_f64(),
        }
    }

    /// One Baum-Welch update; returns the total log-likelihood of `seqs`
    /// under the parameters before the update.
    pub fn reestimate(&mut self, seqs: &[&[E::Obs]]) -> Result<f64> {
        if seqs.is_empty() {
            return Err(Error::InvalidInput(format!("word `{}`: no training sequences", self.label)));
        }
        for s in seqs {
            self.check_sequence(s)?;
        }
        let parts: Vec<Accumulator<E::Stats>> = seqs.par_iter().map(|s| self.accumulate(s)).collect();
        let mut parts = parts.into_iter();
        let mut acc = parts.next().expect("at least one sequence");
        for p in parts {
            acc.trans += p.trans;
            acc.log_likelihood += p.log_likelihood;
            for (a, b) in acc.emissions.iter_mut().zip(p.emissions) {
                E::merge_stats(a, b);
            }
        }
        if !acc.log_likelihood.is_finite() {
            return Err(Error::Numeric(format!("word `{}`: non-finite training likelihood", self.label)));
        }

        let n = self.n_states();
        let mut trans = self.trans.clone();
        for q in 0..n.saturating_sub(1) {
            let stay = acc.trans[(q, q)];
            let step = acc.trans[(q, q + 1)];
            let total = stay + step;
            if total > 0.0 {
                trans[(q, q)] = T::lit(stay / total);
                trans[(q, q + 1)] = T::lit(step / total);
            }
        }
        let mut emissions = self.emissions.clone();
        for (q, (e, s)) in emissions.iter_mut().zip(&acc.emissions).enumerate() {
            match e.update(s) {
                UpdateOutcome::NoData => {
                    log::warn!("word `{}`: state {q} has zero occupancy; emission kept", self.label)
                }
                UpdateOutcome::Updated { reseeded } if !reseeded.is_empty() => {
                    log::warn!("word `{}`: state {q} reseeded components {reseeded:?}", self.label)
                }
                UpdateOutcome::Updated { .. } => {}
            }
        }
        self.set_parameters(trans, emissions);
        Ok(acc.log_likelihood)
    }

    /// Runs `iterations` updates. Sequences shorter than the state count are
    /// skipped. Returns the log-likelihood before each update and after the
    /// last one.
    pub fn baum_welch(&mut self, seqs: &[&[E::Obs]], iterations: usize) -> Result<Vec<f64>> {
        let usable: Vec<&[E::Obs]> = seqs
            .iter()
            .copied()
            .filter(|s| {
                let ok = s.len() >= self.n_states();
                if !ok {
                    log::warn!(
                        "word `{}`: skipping sequence of {} frames (< {} states)",
                        self.label,
                        s.len(),
                        self.n_states()
                    );
                }
                ok
            })
            .collect();
        if usable.is_empty() {
            return Err(Error::InvalidInput(format!("word `{}`: no usable training sequences", self.label)));
        }
        let mut history = Vec::with_capacity(iterations + 1);
        for _ in 0..iterations {
            history.push(self.reestimate(&usable)?);
        }
        let mut total = 0.0;
        for s in &usable {
            total += self.forward_log_likelihood(s)?.as_f64();
        }
        history.push(total);
        Ok(history)
    }
}

/// Trains one model per labelled word independently. `labeled` pairs a
/// label with a sequence; models keep the order of `models`.
pub fn baum_welch<T: Real, E: Mixture<T>>(
    models: Vec<WordHmm<T, E>>,
    labeled: &[(String, Vec<E::Obs>)],
    iterations: usize,
) -> Result<(Vec<WordHmm<T, E>>, Vec<Vec<f64>>)> {
    let results: Vec<Result<(WordHmm<T, E>, Vec<f64>)>> = models
        .into_par_iter()
        .map(|mut m| {
            let seqs: Vec<&[E::Obs]> = labeled
                .iter()
                .filter(|(l, _)| l == m.label())
                .map(|(_, s)| s.as_slice())
                .collect();
            let h = m.baum_welch(&seqs, iterations)?;
            Ok((m, h))
        })
        .collect();
    let mut models = Vec::new();
    let mut histories = Vec::new();
    for r in results {
        let (m, h) = r?;
        models.push(m);
        histories.push(h);
    }
    Ok((models, histories))
}

/// Flat start followed by Baum-Welch for every word in `vocabulary`.
pub fn train_word_models<T, E, F>(
    vocabulary: &[String],
    labeled: &[(String, Vec<E::Obs>)],
    cfg: &HmmConfig,
    init: F,
    seed: u64,
) -> Result<(Vec<WordHmm<T, E>>, Vec<Vec<f64>>)>
where
    T: Real,
    E: Mixture<T>,
    F: Fn(&[E::Obs], u64) -> Result<E> + Sync,
{
    cfg.validate()?;
    let models: Vec<Result<WordHmm<T, E>>> = vocabulary
        .par_iter()
        .enumerate()
        .map(|(w, label)| {
            let seqs: Vec<&[E::Obs]> = labeled
                .iter()
                .filter(|(l, s)| l == label && s.len() >= cfg.n_states)
                .map(|(_, s)| s.as_slice())
                .collect();
            if seqs.is_empty() {
                return Err(Error::InvalidInput(format!("word `{label}` has no usable training sequences")));
            }
            let word_seed = seed ^ (w as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            WordHmm::flat_start(label.clone(), cfg, &seqs, &init, word_seed)
        })
        .collect();
    let models = models.into_iter().collect::<Result<Vec<_>>>()?;
    baum_welch(models, labeled, cfg.iterations)
}
