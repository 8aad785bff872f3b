//! Linear one-vs-rest SVC trained by stochastic sub-gradient descent on the
//! hinge loss (Pegasos schedule).
//!
//! This is a linear stand-in for a kernel SVC; reports flag it as such.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Classifier;
use crate::par;
use crate::simgen::{ConditionClass, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvcParams {
    /// Regularization strength; the sub-gradient step uses λ = 1 / (C·n).
    pub c: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for SvcParams {
    fn default() -> Self {
        SvcParams {
            c: 1.0,
            epochs: 20,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvc {
    /// One row per class: `d` weights followed by the bias.
    weights: Array2<f64>,
    /// Classes seen during training; only these can be predicted.
    present: [bool; NUM_CLASSES],
}

fn train_binary(p: &SvcParams, x: ArrayView2<'_, f64>, target: &[f64], class: usize) -> Array1<f64> {
    let (n, d) = x.dim();
    let lambda = 1.0 / (p.c * n as f64);
    // w = scale · v keeps the per-step shrink O(1).
    let mut v = Array1::<f64>::zeros(d + 1);
    let mut scale = 1.0;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    rng.set_stream(class as u64);
    let mut t = 0usize;
    for _ in 0..p.epochs.max(1) {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = x.row(i);
            let margin = scale * (row.dot(&v.slice(ndarray::s![..d])) + v[d]);
            let shrink = 1.0 - eta * lambda;
            if shrink <= 0.0 {
                v.fill(0.0);
                scale = 1.0;
            } else {
                scale *= shrink;
            }
            if target[i] * margin < 1.0 {
                let step = eta * target[i] / scale;
                v.slice_mut(ndarray::s![..d]).scaled_add(step, &row);
                v[d] += step;
            }
            if scale < 1e-100 {
                v *= scale;
                scale = 1.0;
            }
        }
    }
    v * scale
}

impl LinearSvc {
    pub fn fit(p: &SvcParams, x: ArrayView2<'_, f64>, y: &[ConditionClass]) -> Self {
        let d = x.ncols();
        let mut present = [false; NUM_CLASSES];
        for l in y {
            present[l.id()] = true;
        }
        let rows = par::map_range(NUM_CLASSES, |c| {
            if !present[c] {
                return Array1::zeros(d + 1);
            }
            let target: Vec<f64> = y.iter().map(|l| if l.id() == c { 1.0 } else { -1.0 }).collect();
            train_binary(p, x, &target, c)
        });
        let mut weights = Array2::zeros((NUM_CLASSES, d + 1));
        for (c, w) in rows.into_iter().enumerate() {
            weights.row_mut(c).assign(&w);
        }
        LinearSvc { weights, present }
    }

    pub fn margins(&self, row: ArrayView1<'_, f64>) -> [f64; NUM_CLASSES] {
        let d = self.width();
        std::array::from_fn(|c| {
            let w = self.weights.row(c);
            w.slice(ndarray::s![..d]).dot(&row) + w[d]
        })
    }
}

impl Classifier for LinearSvc {
    fn width(&self) -> usize {
        self.weights.ncols() - 1
    }

    /// Arg-max margin over trained classes, lowest class id on ties.
    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass {
        let m = self.margins(row);
        let mut best: Option<usize> = None;
        for c in (0..NUM_CLASSES).filter(|&c| self.present[c]) {
            if best.is_none_or(|b| m[c] > m[b]) {
                best = Some(c);
            }
        }
        ConditionClass::ALL[best.unwrap_or(0)]
    }
}
