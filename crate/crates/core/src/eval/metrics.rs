use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::{ConditionClass, NUM_CLASSES};

/// Rows are the true class, columns the predicted class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn from_predictions(truth: &[ConditionClass], predicted: &[ConditionClass]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Metric(format!(
                "{} true labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            cm.counts[t.id()][p.id()] += 1;
        }
        Ok(cm)
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|c| self.counts[c][c]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub acc: f64,
    pub prec: f64,
    pub rec: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy plus macro-averaged precision, recall and F1. Classes that appear
/// neither in the truth nor in the predictions do not enter the averages.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<Metrics> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Metric("confusion matrix is empty".into()));
    }
    let (mut prec, mut rec, mut f1, mut present) = (0.0, 0.0, 0.0, 0usize);
    for c in 0..NUM_CLASSES {
        let tp = cm.counts[c][c];
        let row: u64 = cm.counts[c].iter().sum();
        let col: u64 = (0..NUM_CLASSES).map(|r| cm.counts[r][c]).sum();
        if row == 0 && col == 0 {
            continue;
        }
        present += 1;
        let p = ratio(tp, col);
        let r = ratio(tp, row);
        prec += p;
        rec += r;
        f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    }
    let n = present as f64;
    Ok(Metrics {
        acc: cm.trace() as f64 / total as f64,
        prec: prec / n,
        rec: rec / n,
        f1: f1 / n,
    })
}

/// Features per second for `feature_count` features sent every `interval_s`.
pub fn feature_throughput(feature_count: usize, interval_s: f64) -> Result<f64> {
    if !(interval_s > 0.0) || !interval_s.is_finite() {
        return Err(Error::Domain(format!("interval must be positive and finite, got {interval_s}")));
    }
    Ok(feature_count as f64 / interval_s)
}

/// Percentage by which `candidate` undercuts `baseline`.
pub fn throughput_reduction(baseline: f64, candidate: f64) -> f64 {
    100.0 * (1.0 - candidate / baseline)
}

/// Per-interval feature counts used in place of the extractor's own widths.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThroughputTable {
    pub counts: BTreeMap<usize, usize>,
}

impl ThroughputTable {
    /// Feature-set sizes of the reference deployment.
    pub fn paper() -> Self {
        ThroughputTable {
            counts: [
                (200, 9320),
                (400, 15476),
                (800, 27788),
                (1200, 40100),
                (1600, 52412),
                (4000, 126284),
                (8000, 249404),
            ]
            .into_iter()
            .collect(),
        }
    }

    pub fn get(&self, n_samples: usize) -> Option<usize> {
        self.counts.get(&n_samples).copied()
    }
}

impl Default for ThroughputTable {
    fn default() -> Self {
        Self::paper()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(v: u64) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for c in 0..NUM_CLASSES {
            cm.counts[c][c] = v;
        }
        cm
    }

    #[test]
    fn perfect_diagonal() {
        let m = compute_metrics(&diag(4)).unwrap();
        assert_eq!((m.acc, m.prec, m.rec, m.f1), (1.0, 1.0, 1.0, 1.0));
    }

    #[test]
    fn coin_flip_two_classes() {
        let mut cm = ConfusionMatrix::default();
        cm.counts[0] = [5, 5, 0, 0, 0, 0, 0];
        cm.counts[1] = [5, 5, 0, 0, 0, 0, 0];
        let m = compute_metrics(&cm).unwrap();
        assert_eq!((m.acc, m.prec, m.rec, m.f1), (0.5, 0.5, 0.5, 0.5));
    }

    #[test]
    fn predicted_only_class_counts_with_zero_recall() {
        // Class 1 never occurs in the truth but is predicted once.
        let mut cm = ConfusionMatrix::default();
        cm.counts[0][0] = 3;
        cm.counts[0][1] = 1;
        let m = compute_metrics(&cm).unwrap();
        assert_eq!(m.acc, 0.75);
        assert_eq!(m.prec, 0.5);
        assert_eq!(m.rec, 0.375);
    }

    #[test]
    fn empty_matrix_is_an_error() {
        assert!(matches!(compute_metrics(&ConfusionMatrix::default()), Err(Error::Metric(_))));
    }

    #[test]
    fn from_predictions_counts() {
        use ConditionClass::*;
        let cm = ConfusionMatrix::from_predictions(&[Normal, Normal, D3ClipHigh], &[Normal, D3ClipHigh, D3ClipHigh]).unwrap();
        assert_eq!(cm.counts[0][0], 1);
        assert_eq!(cm.counts[0][3], 1);
        assert_eq!(cm.counts[3][3], 1);
        assert_eq!(cm.total(), 3);
        assert!(ConfusionMatrix::from_predictions(&[Normal], &[]).is_err());
    }

    #[test]
    fn throughput_values() {
        assert_eq!(feature_throughput(9320, 0.25).unwrap(), 37_280.0);
        assert_eq!(feature_throughput(94, 5.0).unwrap(), 18.8);
        assert!(matches!(feature_throughput(1, 0.0), Err(Error::Domain(_))));
        assert!(matches!(feature_throughput(1, -2.0), Err(Error::Domain(_))));
        assert_eq!(throughput_reduction(7.0, 7.0), 0.0);
        assert_eq!(throughput_reduction(7.0, 0.0), 100.0);
    }

    #[test]
    fn random_matrices_have_bounded_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut cm = ConfusionMatrix::default();
            for r in 0..NUM_CLASSES {
                for c in 0..NUM_CLASSES {
                    if rng.random_bool(0.5) {
                        cm.counts[r][c] = rng.random_range(0..20);
                    }
                }
            }
            if cm.total() == 0 {
                continue;
            }
            let m = compute_metrics(&cm).unwrap();
            for v in [m.acc, m.prec, m.rec, m.f1] {
                assert!((0.0..=1.0).contains(&v));
            }
        }
    }
}
