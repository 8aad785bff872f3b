use ndarray::{ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::tree::{DecisionTree, FeatureSampler, TreeParams};
use super::{argmax_votes, Classifier};
use crate::par;
use crate::simgen::{ConditionClass, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Features tried per split; `None` means ⌊√d⌋.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
    pub tree: TreeParams,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_trees: 100,
            max_features: None,
            bootstrap: true,
            seed: 0,
            tree: TreeParams::default(),
        }
    }
}

/// Bagged CART trees with per-split feature subsampling. Tree `t` draws all
/// of its randomness from stream `t` of the forest seed, so the result does
/// not depend on how trees are scheduled across threads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    width: usize,
}

impl RandomForest {
    pub fn fit(p: &ForestParams, x: ArrayView2<'_, f64>, y: &[ConditionClass]) -> Self {
        let n = y.len();
        let width = x.ncols();
        let max_features = p
            .max_features
            .unwrap_or_else(|| (width as f64).sqrt().floor() as usize)
            .clamp(1, width.max(1));
        let trees = par::map_range(p.n_trees.max(1), |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
            rng.set_stream(t as u64);
            let rows: Vec<usize> = if p.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let sampler = FeatureSampler {
                max_features,
                rng: &mut rng,
            };
            DecisionTree::fit_rows(&p.tree, x, y, rows, Some(sampler))
        });
        RandomForest { trees, width }
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn votes(&self, row: ArrayView1<'_, f64>) -> [usize; NUM_CLASSES] {
        let mut votes = [0; NUM_CLASSES];
        for t in &self.trees {
            votes[t.predict_row(row).id()] += 1;
        }
        votes
    }
}

impl Classifier for RandomForest {
    fn width(&self) -> usize {
        self.width
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass {
        argmax_votes(&self.votes(row))
    }
}
