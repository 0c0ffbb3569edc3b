//! Log-domain helpers.

use crate::scalar::Real;

/// `log(exp(a) + exp(b))` without overflow; either argument may be `-inf`.
#[inline]
pub fn log_add<T: Real>(a: T, b: T) -> T {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == T::neg_infinity() {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `log Σ exp(x_i)`; `-inf` for an empty slice or when all terms are `-inf`.
pub fn log_sum_exp<T: Real>(xs: &[T]) -> T {
    let max = xs
        .iter()
        .copied()
        .fold(T::neg_infinity(), |m, x| if x > m { x } else { m });
    if max == T::neg_infinity() {
        return max;
    }
    let sum = xs.iter().fold(T::zero(), |acc, &x| acc + (x - max).exp());
    max + sum.ln()
}

/// Normalizes log weights in place into probabilities; returns the log normalizer.
pub fn normalize_log<T: Real>(xs: &mut [T]) -> T {
    let z = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = (*x - z).exp();
    }
    z
}

/// Natural log that maps 0 to `-inf` instead of NaN for tiny negatives.
#[inline]
pub fn safe_ln<T: Real>(x: T) -> T {
    if x <= T::zero() {
        T::neg_infinity()
    } else {
        x.ln()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [1.0_f64, 2.0, 3.0];
        let direct = (1f64.exp() + 2f64.exp() + 3f64.exp()).ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_handles_large_and_infinite_terms() {
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        assert_eq!(
            log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]),
            f64::NEG_INFINITY
        );
        let v = [1000.0_f64, 1000.0];
        assert!((log_sum_exp(&v) - (1000.0 + 2f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn log_add_is_symmetric() {
        assert!((log_add(-3.0_f64, -1.0) - log_add(-1.0, -3.0)).abs() < 1e-15);
        assert_eq!(log_add(f64::NEG_INFINITY, -2.0), -2.0);
        let r = log_add(0.5f32.ln(), 0.25f32.ln());
        assert!((r - 0.75f32.ln()).abs() < 1e-6);
    }

    #[test]
    fn normalize_log_produces_simplex() {
        let mut v = [-1.0_f64, -2.0, -0.5];
        normalize_log(&mut v);
        assert!((v.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
