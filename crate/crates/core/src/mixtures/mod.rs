//! Mixture emission densities with EM sufficient statistics.
//!
//! The same accumulators serve plain mixture EM and the emission update of
//! Baum-Welch, where each frame arrives with a state-posterior weight.

mod bernoulli;
mod gaussian;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use bernoulli::{BernoulliMixture, BernoulliStats, PROB_FLOOR};
pub use gaussian::{GaussianMixture, GaussianStats, VARIANCE_FLOOR};

use crate::error::{Error, Result};
use crate::logmath::normalize_log;
use crate::scalar::Real;

/// Components whose total responsibility falls below this are reseeded.
pub const EMPTY_COMPONENT: f64 = 1e-12;

/// Data points per parallel E-step chunk. Fixed so that reductions are
/// performed in the same order on every run.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmissionKind {
    Binary,
    Real,
}

impl EmissionKind {
    pub fn tag(self) -> u32 {
        match self {
            EmissionKind::Binary => 0,
            EmissionKind::Real => 1,
        }
    }
}

/// Result of an M-step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum UpdateOutcome {
    Updated { reseeded: Vec<usize> },
    /// No data weight reached this mixture; parameters unchanged.
    NoData,
}

/// Tracks occupancy and the worst-explained datum for reseeding.
#[derive(Debug, Clone)]
pub struct Occupancy<O> {
    pub per_component: Vec<f64>,
    pub worst: Option<(f64, O)>,
}

impl<O: Clone> Occupancy<O> {
    fn new(m: usize) -> Self {
        Self {
            per_component: vec![0.0; m],
            worst: None,
        }
    }

    fn observe(&mut self, x: &O, log_like: f64, weight: f64) {
        if weight > 0.0 && self.worst.as_ref().is_none_or(|(w, _)| log_like < *w) {
            self.worst = Some((log_like, x.clone()));
        }
    }

    fn merge(&mut self, other: Self) {
        for (a, b) in self.per_component.iter_mut().zip(other.per_component) {
            *a += b;
        }
        if let Some((l, x)) = other.worst {
            if self.worst.as_ref().is_none_or(|(w, _)| l < *w) {
                self.worst = Some((l, x));
            }
        }
    }

    pub fn total(&self) -> f64 {
        self.per_component.iter().sum()
    }
}

pub trait Mixture<T: Real>: Clone + Send + Sync + std::fmt::Debug {
    type Obs: Clone + Send + Sync;
    type Stats: Clone + Send;

    const KIND: EmissionKind;

    fn n_components(&self) -> usize;

    fn dim(&self) -> usize;

    fn priors(&self) -> Vec<T>;

    fn validate(&self, x: &Self::Obs) -> Result<()>;

    /// log p(i) + log p(x | i) for every component i.
    fn component_log_joint(&self, x: &Self::Obs, out: &mut [T]);

    fn log_pdf(&self, x: &Self::Obs) -> T {
        let mut buf = vec![T::zero(); self.n_components()];
        self.component_log_joint(x, &mut buf);
        crate::logmath::log_sum_exp(&buf)
    }

    /// Posterior component probabilities; returns them with log p(x).
    fn responsibilities(&self, x: &Self::Obs) -> (Vec<T>, T) {
        let mut buf = vec![T::zero(); self.n_components()];
        self.component_log_joint(x, &mut buf);
        let z = normalize_log(&mut buf);
        (buf, z)
    }

    fn new_stats(&self) -> Self::Stats;

    /// Adds `weight` times the responsibility-weighted statistics of `x`.
    fn add_weighted(&self, stats: &mut Self::Stats, x: &Self::Obs, resp: &[T], weight: f64, log_like: f64);

    fn merge_stats(into: &mut Self::Stats, other: Self::Stats);

    /// Computes responsibilities and accumulates; returns log p(x).
    fn accumulate(&self, stats: &mut Self::Stats, x: &Self::Obs, weight: f64) -> T {
        let (resp, z) = self.responsibilities(x);
        self.add_weighted(stats, x, &resp, weight, z.as_f64());
        z
    }

    /// M-step. Empty components are reseeded from the worst-explained datum.
    fn update(&mut self, stats: &Self::Stats) -> UpdateOutcome;

    fn write_to(&self, w: &mut dyn Write) -> Result<()>;

    fn read_from(r: &mut dyn Read) -> Result<Self>;
}

/// Mixture parameters after EM and the data log-likelihood before the
/// first update and after each one.
#[derive(Debug, Clone)]
pub struct EmFit<M> {
    pub mixture: M,
    pub log_likelihood: Vec<f64>,
}

fn e_step<T: Real, M: Mixture<T>>(mix: &M, data: &[M::Obs]) -> (M::Stats, f64) {
    let parts: Vec<(M::Stats, f64)> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut s = mix.new_stats();
            let ll = chunk.iter().map(|x| mix.accumulate(&mut s, x, 1.0).as_f64()).sum::<f64>();
            (s, ll)
        })
        .collect();
    let mut stats = mix.new_stats();
    let mut total = 0.0;
    for (s, ll) in parts {
        M::merge_stats(&mut stats, s);
        total += ll;
    }
    (stats, total)
}

/// Runs `iterations` EM steps from the given starting point.
pub fn em_fit<T: Real, M: Mixture<T>>(mix: M, data: &[M::Obs], iterations: usize) -> Result<EmFit<M>> {
    if data.len() < mix.n_components() {
        return Err(Error::InvalidInput(format!(
            "{} data points for {} components",
            data.len(),
            mix.n_components()
        )));
    }
    for x in data {
        mix.validate(x)?;
    }
    let mut mix = mix;
    let mut history = Vec::with_capacity(iterations + 1);
    for _ in 0..iterations {
        let (stats, ll) = e_step(&mix, data);
        history.push(ll);
        if let UpdateOutcome::Updated { reseeded } = mix.update(&stats) {
            if !reseeded.is_empty() {
                log::warn!("reseeded empty mixture components {reseeded:?}");
            }
        }
    }
    history.push(e_step(&mix, data).1);
    if history.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite log-likelihood during EM".into()));
    }
    Ok(EmFit {
        mixture: mix,
        log_likelihood: history,
    })
}

pub(crate) fn check_priors<T: Real>(priors: &[T]) -> Result<()> {
    if priors.is_empty() {
        return Err(Error::InvalidInput("mixture needs at least one component".into()));
    }
    if priors.iter().any(|p| !(*p > T::zero()) || !p.is_finite()) {
        return Err(Error::InvalidInput("mixture priors must be positive".into()));
    }
    let sum: f64 = priors.iter().map(|p| p.as_f64()).sum();
    if (sum - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("mixture priors sum to {sum}")));
    }
    Ok(())
}

/// Priors from occupancies, giving reseeded components an even share.
pub(crate) fn priors_from_occupancy<T: Real>(occ: &[f64], reseeded: &[usize]) -> Vec<T> {
    let m = occ.len() as f64;
    let total: f64 = occ.iter().sum();
    let mut p: Vec<f64> = occ.iter().map(|o| o / total).collect();
    for &i in reseeded {
        p[i] = 1.0 / m;
    }
    let s: f64 = p.iter().sum();
    p.into_iter().map(|v| T::lit(v / s)).collect()
}
