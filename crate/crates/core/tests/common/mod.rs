//! Brute-force reference implementations shared by the integration tests.
//! Nothing here calls into the library's own numerics.

#![allow(dead_code)]

use rand::Rng;

/// Amari index of a square matrix, normalized to [0, 1], from plain rows.
pub fn amari(p: &[Vec<f64>]) -> f64 {
    let n = p.len();
    let a: Vec<Vec<f64>> = p.iter().map(|r| r.iter().map(|v| v.abs()).collect()).collect();
    let mut rows = 0.0;
    for r in &a {
        let max = r.iter().cloned().fold(0.0, f64::max);
        rows += r.iter().map(|v| v / max).sum::<f64>() - 1.0;
    }
    let mut cols = 0.0;
    for j in 0..n {
        let max = (0..n).map(|i| a[i][j]).fold(0.0, f64::max);
        cols += (0..n).map(|i| a[i][j] / max).sum::<f64>() - 1.0;
    }
    (rows + cols) / (2.0 * n as f64 * (n as f64 - 1.0))
}

/// A Bernoulli mixture as plain vectors: priors and per-component
/// activation probabilities.
#[derive(Debug, Clone)]
pub struct PlainBernoulli {
    pub priors: Vec<f64>,
    pub params: Vec<Vec<f64>>,
}

impl PlainBernoulli {
    /// p(x) with x given as a list of active dimensions.
    pub fn prob(&self, active: &[u32]) -> f64 {
        let dim = self.params[0].len();
        let on: Vec<bool> = (0..dim).map(|n| active.contains(&(n as u32))).collect();
        self.priors
            .iter()
            .zip(&self.params)
            .map(|(w, p)| {
                w * p
                    .iter()
                    .zip(&on)
                    .map(|(&q, &x)| if x { q } else { 1.0 - q })
                    .product::<f64>()
            })
            .sum()
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Vec<u32> {
        let c = pick(&self.priors, rng);
        self.params[c]
            .iter()
            .enumerate()
            .filter(|(_, &q)| rng.random_bool(q))
            .map(|(n, _)| n as u32)
            .collect()
    }
}

fn pick(weights: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random::<f64>() * weights.iter().sum::<f64>();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.len() - 1
}

/// Sum over every state path that starts in state 0, with any end state.
pub fn enumerate_likelihood(trans: &[Vec<f64>], states: &[PlainBernoulli], seq: &[Vec<u32>]) -> f64 {
    let n = states.len();
    let len = seq.len();
    let mut total = 0.0;
    let mut path = vec![0usize; len];
    let paths = n.pow(len as u32 - 1);
    for code in 0..paths {
        let mut c = code;
        for slot in path.iter_mut().skip(1) {
            *slot = c % n;
            c /= n;
        }
        let mut p = states[0].prob(&seq[0]);
        for t in 1..len {
            p *= trans[path[t - 1]][path[t]] * states[path[t]].prob(&seq[t]);
            if p == 0.0 {
                break;
            }
        }
        total += p;
    }
    total
}

/// Draws a sequence of `len` frames starting in state 0.
pub fn sample_hmm(trans: &[Vec<f64>], states: &[PlainBernoulli], len: usize, rng: &mut impl Rng) -> Vec<Vec<u32>> {
    let mut q = 0;
    let mut out = Vec::with_capacity(len);
    for t in 0..len {
        if t > 0 {
            q = pick(&trans[q], rng);
        }
        out.push(states[q].sample(rng));
    }
    out
}

/// Responsibility-weighted mean of binary vectors, clamped like the model.
pub fn weighted_activation(data: &[Vec<u32>], weights: &[f64], dim: usize, floor: f64) -> Vec<f64> {
    let total: f64 = weights.iter().sum();
    (0..dim)
        .map(|n| {
            let hits: f64 = data
                .iter()
                .zip(weights)
                .filter(|(x, _)| x.contains(&(n as u32)))
                .map(|(_, w)| w)
                .sum();
            (hits / total).clamp(floor, 1.0 - floor)
        })
        .collect()
}

/// Ratio of signal power to the power of `mixed - signal`, in dB.
pub fn measured_snr_db(signal: &[f64], mixed: &[f64]) -> f64 {
    let ps: f64 = signal.iter().map(|v| v * v).sum();
    let pn: f64 = signal.iter().zip(mixed).map(|(s, m)| (m - s) * (m - s)).sum();
    10.0 * (ps / pn).log10()
}

pub fn excess_kurtosis(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let m2 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    m4 / (m2 * m2) - 3.0
}
