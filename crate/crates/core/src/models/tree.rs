//! CART classification trees (gini impurity).

use ndarray::{ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax_votes, Classifier};
use crate::simgen::{ConditionClass, NUM_CLASSES};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_split: 2,
        }
    }
}

/// Arena node. Rows with `x[feature] <= threshold` go left.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        class: ConditionClass,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    width: usize,
}

/// Random feature subsampling used by forests.
pub(crate) struct FeatureSampler<'a> {
    pub max_features: usize,
    pub rng: &'a mut ChaCha8Rng,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [ConditionClass],
    params: TreeParams,
    nodes: Vec<Node>,
    // Scratch buffer for (value, class id) pairs.
    pairs: Vec<(f64, usize)>,
}

fn counts_of(y: &[ConditionClass], idx: &[usize]) -> [usize; NUM_CLASSES] {
    let mut c = [0; NUM_CLASSES];
    for &i in idx {
        c[y[i].id()] += 1;
    }
    c
}

/// Σ_k L_k²/n_L + Σ_k R_k²/n_R. Maximizing this minimizes the weighted gini
/// impurity of the children.
fn purity(left: &[usize; NUM_CLASSES], n_left: usize, right: &[usize; NUM_CLASSES], n_right: usize) -> f64 {
    let sq = |c: &[usize; NUM_CLASSES]| c.iter().map(|&v| (v * v) as f64).sum::<f64>();
    sq(left) / n_left as f64 + sq(right) / n_right as f64
}

impl<'a> Builder<'a> {
    /// Best threshold on one feature, lowest threshold on ties.
    fn best_on_feature(&mut self, idx: &[usize], feature: usize, total: &[usize; NUM_CLASSES]) -> Option<Candidate> {
        self.pairs.clear();
        self.pairs.extend(idx.iter().map(|&i| (self.x[[i, feature]], self.y[i].id())));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let n = self.pairs.len();
        let mut left = [0usize; NUM_CLASSES];
        let mut best: Option<Candidate> = None;
        for i in 1..n {
            left[self.pairs[i - 1].1] += 1;
            let (lo, hi) = (self.pairs[i - 1].0, self.pairs[i].0);
            if lo == hi {
                continue;
            }
            let right: [usize; NUM_CLASSES] = std::array::from_fn(|k| total[k] - left[k]);
            let score = purity(&left, i, &right, n - i);
            if best.as_ref().is_none_or(|b| score > b.score) {
                let mid = lo + (hi - lo) / 2.0;
                // Keep `hi` strictly right of the threshold.
                let threshold = if mid < hi { mid } else { lo };
                best = Some(Candidate {
                    feature,
                    threshold,
                    score,
                });
            }
        }
        best
    }

    fn best_split(&mut self, idx: &[usize], total: &[usize; NUM_CLASSES], sampler: Option<&mut FeatureSampler<'_>>) -> Option<Candidate> {
        let width = self.x.ncols();
        let pick = |this: &mut Self, features: &[usize], best: &mut Option<Candidate>| {
            for &f in features {
                if let Some(c) = this.best_on_feature(idx, f, total) {
                    if best.as_ref().is_none_or(|b| c.score > b.score) {
                        *best = Some(c);
                    }
                }
            }
        };
        let mut best = None;
        match sampler {
            None => {
                let all: Vec<usize> = (0..width).collect();
                pick(self, &all, &mut best);
            }
            Some(s) => {
                let mut order: Vec<usize> = (0..width).collect();
                order.shuffle(s.rng);
                let m = s.max_features.clamp(1, width);
                let mut first = order[..m].to_vec();
                first.sort_unstable();
                pick(self, &first, &mut best);
                // No valid partition among the sampled features: keep
                // drawing until one turns up.
                for &f in &order[m..] {
                    if best.is_some() {
                        break;
                    }
                    pick(self, &[f], &mut best);
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, sampler: &mut Option<FeatureSampler<'_>>) -> usize {
        let counts = counts_of(self.y, &idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf {
            class: argmax_votes(&counts),
        });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || idx.len() < self.params.min_samples_split.max(2) {
            return id;
        }
        let Some(split) = self.best_split(&idx, &counts, sampler.as_mut()) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[[i, split.feature]] <= split.threshold);
        let left = self.grow(l, depth + 1, sampler);
        let right = self.grow(r, depth + 1, sampler);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    pub fn fit(params: &TreeParams, x: ArrayView2<'_, f64>, y: &[ConditionClass]) -> Self {
        Self::fit_rows(params, x, y, (0..y.len()).collect(), None)
    }

    /// Grows a tree on `rows` (which may repeat, for bootstrap samples).
    pub(crate) fn fit_rows(
        params: &TreeParams,
        x: ArrayView2<'_, f64>,
        y: &[ConditionClass],
        rows: Vec<usize>,
        sampler: Option<FeatureSampler<'_>>,
    ) -> Self {
        let mut b = Builder {
            x,
            y,
            params: *params,
            nodes: Vec::new(),
            pairs: Vec::with_capacity(rows.len()),
        };
        let mut sampler = sampler;
        b.grow(rows, 0, &mut sampler);
        DecisionTree {
            nodes: b.nodes,
            width: x.ncols(),
        }
    }

    /// Builds a tree from explicit nodes; node 0 is the root.
    pub fn from_nodes(nodes: Vec<Node>, width: usize) -> Self {
        DecisionTree { nodes, width }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

impl Classifier for DecisionTree {
    fn width(&self) -> usize {
        self.width
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[feature] <= threshold { left } else { right },
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::predict;
    use ndarray::{array, Array2};
    use proptest::prelude::*;
    use ConditionClass::{D1CrackHigh as B, D2CrackLow as C, Normal as A};

    #[test]
    fn separable_toy_single_split() {
        let x = array![[0.0], [1.0], [10.0], [11.0]];
        let y = [A, A, B, B];
        let t = DecisionTree::fit(&TreeParams::default(), x.view(), &y);
        assert_eq!(t.depth(), 1);
        assert_eq!(
            t.nodes()[0],
            Node::Split {
                feature: 0,
                threshold: 5.5,
                left: 1,
                right: 2
            }
        );
        assert_eq!(predict(&t, x.view()).unwrap(), y);
    }

    #[test]
    fn tie_break_prefers_lowest_feature() {
        // Both features separate perfectly; feature 0 wins.
        let x = array![[0.0, 0.0], [1.0, 1.0], [5.0, 5.0], [6.0, 6.0]];
        let t = DecisionTree::fit(&TreeParams::default(), x.view(), &[A, A, B, B]);
        assert!(matches!(t.nodes()[0], Node::Split { feature: 0, .. }));
    }

    #[test]
    fn xor_needs_zero_gain_first_split() {
        let x = array![[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]];
        let y = [A, B, B, A];
        let t = DecisionTree::fit(&TreeParams::default(), x.view(), &y);
        assert_eq!(predict(&t, x.view()).unwrap(), y);
    }

    /// Path-trace oracle: walks a hand-built depth-2 tree with explicit
    /// comparisons and checks prediction agrees at every probe.
    #[test]
    fn hand_built_depth_two_trace() {
        let tree = DecisionTree::from_nodes(
            vec![
                Node::Split { feature: 1, threshold: 0.5, left: 1, right: 2 },
                Node::Split { feature: 0, threshold: -1.0, left: 3, right: 4 },
                Node::Split { feature: 0, threshold: 2.0, left: 5, right: 6 },
                Node::Leaf { class: A },
                Node::Leaf { class: B },
                Node::Leaf { class: C },
                Node::Leaf { class: A },
            ],
            2,
        );
        let trace = |x0: f64, x1: f64| {
            if x1 <= 0.5 {
                if x0 <= -1.0 { A } else { B }
            } else if x0 <= 2.0 {
                C
            } else {
                A
            }
        };
        for x0 in [-3.0, -1.0, -0.999, 0.0, 2.0, 2.001, 5.0] {
            for x1 in [-1.0, 0.5, 0.5001, 3.0] {
                assert_eq!(tree.predict_row(array![x0, x1].view()), trace(x0, x1), "({x0}, {x1})");
            }
        }
    }

    #[test]
    fn conflicting_duplicates_become_majority_leaf() {
        let x = array![[1.0], [1.0], [1.0]];
        let t = DecisionTree::fit(&TreeParams::default(), x.view(), &[B, A, B]);
        assert_eq!(t.nodes(), &[Node::Leaf { class: B }]);
    }

    #[test]
    fn depth_limit() {
        let x = Array2::from_shape_fn((16, 1), |(i, _)| i as f64);
        let y: Vec<ConditionClass> = (0..16).map(|i| ConditionClass::ALL[i % 7]).collect();
        let t = DecisionTree::fit(&TreeParams { max_depth: Some(2), ..Default::default() }, x.view(), &y);
        assert!(t.depth() <= 2);
    }

    #[test]
    fn adjacent_floats_split_cleanly() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let x = array![[lo], [hi]];
        let t = DecisionTree::fit(&TreeParams::default(), x.view(), &[A, B]);
        assert_eq!(predict(&t, x.view()).unwrap(), vec![A, B]);
    }

    proptest! {
        #[test]
        fn perfect_training_accuracy_on_consistent_data(
            raw in proptest::collection::vec((0i32..6, 0i32..6, 0usize..7), 1..60)
        ) {
            // Deduplicate x so the data is consistent.
            let mut seen = std::collections::BTreeMap::new();
            for (a, b, c) in raw {
                seen.entry((a, b)).or_insert(c);
            }
            let rows: Vec<_> = seen.into_iter().collect();
            let x = Array2::from_shape_fn((rows.len(), 2), |(i, j)| if j == 0 { rows[i].0.0 as f64 } else { rows[i].0.1 as f64 });
            let y: Vec<ConditionClass> = rows.iter().map(|r| ConditionClass::ALL[r.1]).collect();
            let t = DecisionTree::fit(&TreeParams::default(), x.view(), &y);
            prop_assert_eq!(predict(&t, x.view()).unwrap(), y);
        }
    }
}
