//! Dictionary learning by FastICA, one level at a time.

mod dictionary;
mod fastica;
mod train;
mod whiten;

pub use dictionary::{Dictionary, DictionaryHierarchy, TrainingReport};
pub use fastica::{amari_index, fast_ica, Contrast, IcaOptions, IcaResult};
pub use train::{train_hierarchy, HierarchyConfig, LevelConfig};
pub use whiten::{whiten, TrainingBatch, Whitening, EIGEN_FLOOR};

/// Fourth standardized moment minus 3. `None` for fewer than two values or
/// zero variance.
pub fn excess_kurtosis(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.into_iter().collect();
    if v.len() < 2 {
        return None;
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (m2, m4) = v.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let (m2, m4) = (m2 / n, m4 / n);
    (m2 > 0.0).then(|| m4 / (m2 * m2) - 3.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kurtosis_of_simple_distributions() {
        // Two-point symmetric distribution: m4 / m2² = 1.
        assert!((excess_kurtosis([1.0, -1.0, 1.0, -1.0]).unwrap() + 2.0).abs() < 1e-12);
        // Sparse spike train is heavy tailed.
        let spikes = (0..100).map(|i| if i % 25 == 0 { 5.0 } else { 0.0 });
        assert!(excess_kurtosis(spikes).unwrap() > 5.0);
        assert_eq!(excess_kurtosis([3.0, 3.0]), None);
    }
}
