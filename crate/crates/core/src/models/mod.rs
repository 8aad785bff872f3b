//! From-scratch multi-class classifiers behind one train/predict contract.

mod forest;
mod knn;
mod split;
mod svc;
mod tree;

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::simgen::{ConditionClass, NUM_CLASSES};

pub use forest::{ForestParams, RandomForest};
pub use knn::{KnnModel, KnnParams};
pub use split::{stratified_split, stratified_split_indices, Split, SplitOptions};
pub use svc::{LinearSvc, SvcParams};
pub use tree::{DecisionTree, Node, TreeParams};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowMeta {
    pub trial_id: usize,
    pub window_index: usize,
}

/// Feature rows with their labels and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub x: Array2<f64>,
    pub y: Vec<ConditionClass>,
    pub meta: Vec<RowMeta>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Vec<ConditionClass>, meta: Vec<RowMeta>) -> Result<Self> {
        if x.nrows() != y.len() || y.len() != meta.len() {
            return Err(Error::Shape(format!(
                "{} rows, {} labels, {} metadata entries",
                x.nrows(),
                y.len(),
                meta.len()
            )));
        }
        Ok(Dataset { x, y, meta })
    }

    /// Rows without provenance; trial ids are set to the row index.
    pub fn unlabeled_meta(x: Array2<f64>, y: Vec<ConditionClass>) -> Result<Self> {
        let meta = (0..y.len())
            .map(|i| RowMeta {
                trial_id: i,
                window_index: 0,
            })
            .collect();
        Self::new(x, y, meta)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn width(&self) -> usize {
        self.x.ncols()
    }

    pub fn select(&self, rows: &[usize]) -> Dataset {
        Dataset {
            x: self.x.select(ndarray::Axis(0), rows),
            y: rows.iter().map(|&i| self.y[i]).collect(),
            meta: rows.iter().map(|&i| self.meta[i]).collect(),
        }
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut c = [0; NUM_CLASSES];
        for l in &self.y {
            c[l.id()] += 1;
        }
        c
    }
}

/// Algorithm family, in the order reports list them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ModelName {
    Svc,
    Knn,
    Dt,
    Rf,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [ModelName::Svc, ModelName::Knn, ModelName::Dt, ModelName::Rf];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::Svc => "SVC",
            ModelName::Knn => "KNN",
            ModelName::Dt => "DT",
            ModelName::Rf => "RF",
        }
    }

    /// Default hyperparameters, randomness drawn from `seed`.
    pub fn default_kind(self, seed: u64) -> ModelKind {
        match self {
            ModelName::Svc => ModelKind::Svc(SvcParams { seed, ..Default::default() }),
            ModelName::Knn => ModelKind::Knn(KnnParams::default()),
            ModelName::Dt => ModelKind::DecisionTree(TreeParams::default()),
            ModelName::Rf => ModelKind::RandomForest(ForestParams { seed, ..Default::default() }),
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svc" | "svm" => Ok(ModelName::Svc),
            "knn" => Ok(ModelName::Knn),
            "dt" | "tree" => Ok(ModelName::Dt),
            "rf" | "forest" => Ok(ModelName::Rf),
            other => Err(Error::config("models", format!("unknown model `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelKind {
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Svc(SvcParams),
}

impl ModelKind {
    pub fn name(&self) -> ModelName {
        match self {
            ModelKind::Knn(_) => ModelName::Knn,
            ModelKind::DecisionTree(_) => ModelName::Dt,
            ModelKind::RandomForest(_) => ModelName::Rf,
            ModelKind::Svc(_) => ModelName::Svc,
        }
    }
}

/// Per-row classification.
pub trait Classifier {
    fn width(&self) -> usize;
    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Knn(KnnModel),
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Svc(LinearSvc),
}

impl Classifier for Model {
    fn width(&self) -> usize {
        match self {
            Model::Knn(m) => m.width(),
            Model::DecisionTree(m) => m.width(),
            Model::RandomForest(m) => m.width(),
            Model::Svc(m) => m.width(),
        }
    }

    fn predict_row(&self, row: ArrayView1<'_, f64>) -> ConditionClass {
        match self {
            Model::Knn(m) => m.predict_row(row),
            Model::DecisionTree(m) => m.predict_row(row),
            Model::RandomForest(m) => m.predict_row(row),
            Model::Svc(m) => m.predict_row(row),
        }
    }
}

pub fn train(kind: &ModelKind, data: &Dataset) -> Result<Model> {
    if data.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if data.x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Training("training features contain NaN or infinite values".into()));
    }
    let x = data.x.view();
    Ok(match kind {
        ModelKind::Knn(p) => Model::Knn(KnnModel::fit(p, x, &data.y)),
        ModelKind::DecisionTree(p) => Model::DecisionTree(DecisionTree::fit(p, x, &data.y)),
        ModelKind::RandomForest(p) => Model::RandomForest(RandomForest::fit(p, x, &data.y)),
        ModelKind::Svc(p) => Model::Svc(LinearSvc::fit(p, x, &data.y)),
    })
}

pub fn predict<C: Classifier + Sync>(model: &C, rows: ArrayView2<'_, f64>) -> Result<Vec<ConditionClass>> {
    if rows.nrows() == 0 {
        return Ok(Vec::new());
    }
    if rows.ncols() != model.width() {
        return Err(Error::Dimension(format!(
            "model trained on {} features, rows have {}",
            model.width(),
            rows.ncols()
        )));
    }
    Ok(par::map_range(rows.nrows(), |i| model.predict_row(rows.row(i))))
}

/// Majority over per-class vote counts; ties go to the lowest class id.
pub(crate) fn argmax_votes(votes: &[usize; NUM_CLASSES]) -> ConditionClass {
    let mut best = 0;
    for c in 1..NUM_CLASSES {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    ConditionClass::ALL[best]
}
