use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{argmax_votes, Classifier};
use crate::simgen::{ConditionClass, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 5 }
    }
}

/// Brute-force Euclidean k-nearest neighbours with a plain majority vote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    k: usize,
    x: Array2<f64>,
    y: Vec<ConditionClass>,
}

impl KnnModel {
    pub fn fit(p: &KnnParams, x: ArrayView2<'_, f64>, y: &[ConditionClass]) -> Self {
        KnnModel {
            k: p.k.max(1),
            x: x.to_owned(),
            y: y.to_vec(),
        }
    }
}

impl Classifier for KnnModel {
    fn width(&self) -> usize {
        self.x.ncols()
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass {
        let mut dist: Vec<(f64, usize)> = self
            .x
            .rows()
            .into_iter()
            .enumerate()
            .map(|(i, r)| (r.iter().zip(row).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(), i))
            .collect();
        let k = self.k.min(dist.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < dist.len() {
            dist.select_nth_unstable_by(k - 1, cmp);
        }
        let mut votes = [0usize; NUM_CLASSES];
        for &(_, i) in &dist[..k] {
            votes[self.y[i].id()] += 1;
        }
        argmax_votes(&votes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{predict, Dataset};
    use ndarray::array;
    use proptest::prelude::*;
    use ConditionClass::{D1CrackHigh as B, Normal as A};

    #[test]
    fn majority_of_three() {
        let x = array![[0.0], [1.0], [2.0], [10.0]];
        let m = KnnModel::fit(&KnnParams { k: 3 }, x.view(), &[A, A, B, B]);
        assert_eq!(m.predict_row(array![0.5].view()), A);
    }

    #[test]
    fn k1_reproduces_training_labels() {
        let x = array![[0.0, 1.0], [3.0, 1.0], [0.5, -2.0], [9.0, 9.0]];
        let y = vec![A, B, ConditionClass::D5LateralHigh, A];
        let m = KnnModel::fit(&KnnParams { k: 1 }, x.view(), &y);
        assert_eq!(predict(&m, x.view()).unwrap(), y);
    }

    #[test]
    fn k_larger_than_training_set() {
        let x = array![[0.0], [1.0], [2.0]];
        let m = KnnModel::fit(&KnnParams { k: 10 }, x.view(), &[B, A, B]);
        assert_eq!(m.predict_row(array![100.0].view()), B);
    }

    proptest! {
        #[test]
        fn scaling_features_keeps_predictions(
            seed in any::<u64>(),
            scale in 0.01f64..100.0,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x = Array2::from_shape_fn((30, 4), |_| rng.random_range(-1.0..1.0));
            let q = Array2::from_shape_fn((10, 4), |_| rng.random_range(-1.0..1.0));
            let y: Vec<ConditionClass> = (0..30).map(|_| ConditionClass::ALL[rng.random_range(0..7)]).collect();
            let ds = Dataset::unlabeled_meta(x.clone(), y.clone()).unwrap();
            let base = KnnModel::fit(&KnnParams::default(), ds.x.view(), &ds.y);
            let scaled = KnnModel::fit(&KnnParams::default(), (&x * scale).view(), &y);
            prop_assert_eq!(predict(&base, q.view()).unwrap(), predict(&scaled, (&q * scale).view()).unwrap());
        }
    }
}
