//! Train-fitted z-score normalization and PCA.
//!
//! Everything here is fitted on training rows only; test rows go through the
//! fitted transforms. Three modes are supported: no reduction, PCA on the
//! STFT block with the 84 trailing features passed through normalized, and
//! PCA on the whole vector.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Features whose training standard deviation falls below this are constant.
pub const STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    /// Population standard deviation of each training column.
    pub std: Vec<f64>,
    pub constant: Vec<bool>,
}

pub fn fit_normalizer(train: ArrayView2<'_, f64>) -> Result<Normalizer> {
    let rows = train.nrows();
    if rows < 2 {
        return Err(Error::Fit(format!("normalizer needs at least 2 training rows, got {rows}")));
    }
    let n = rows as f64;
    let mean = train.sum_axis(Axis(0)) / n;
    let mut var = Array1::<f64>::zeros(train.ncols());
    for row in train.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            let d = x - m;
            *v += d * d;
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
    let constant = std.iter().map(|&s| !(s >= STD_FLOOR)).collect();
    Ok(Normalizer {
        mean: mean.to_vec(),
        std,
        constant,
    })
}

impl Normalizer {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!(
                "normalizer fitted on {} columns, got {}",
                self.dim(),
                x.ncols()
            )));
        }
        let mut out = x.to_owned();
        for mut row in out.rows_mut() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = if self.constant[j] { 0.0 } else { (*v - self.mean[j]) / self.std[j] };
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    /// `k × d`, orthonormal rows.
    pub components: Array2<f64>,
    /// Covariance eigenvalues of the components, non-increasing.
    pub explained_variance: Vec<f64>,
    /// Trace of the training covariance.
    pub total_variance: f64,
    pub mean: Vec<f64>,
}

impl PcaModel {
    pub fn k(&self) -> usize {
        self.components.nrows()
    }

    pub fn dim(&self) -> usize {
        self.components.ncols()
    }

    pub fn explained_variance_ratio(&self) -> Vec<f64> {
        self.explained_variance
            .iter()
            .map(|v| if self.total_variance > 0.0 { v / self.total_variance } else { 0.0 })
            .collect()
    }

    /// The leading `k` components of this model.
    pub fn truncate(&self, k: usize) -> Result<PcaModel> {
        if k == 0 || k > self.k() {
            return Err(Error::Dimension(format!("cannot keep {k} of {} components", self.k())));
        }
        Ok(PcaModel {
            components: self.components.slice(s![..k, ..]).to_owned(),
            explained_variance: self.explained_variance[..k].to_vec(),
            total_variance: self.total_variance,
            mean: self.mean.clone(),
        })
    }

    /// Scores `(x − mean) · componentsᵀ`.
    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.dim() {
            return Err(Error::Dimension(format!("PCA fitted on {} columns, got {}", self.dim(), x.ncols())));
        }
        let mean = Array1::from(self.mean.clone());
        let centered = &x - &mean;
        Ok(centered.dot(&self.components.t()))
    }

    /// Maps scores back to the input space.
    pub fn inverse_transform(&self, scores: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if scores.ncols() != self.k() {
            return Err(Error::Dimension(format!("expected {} score columns, got {}", self.k(), scores.ncols())));
        }
        let mean = Array1::from(self.mean.clone());
        Ok(scores.dot(&self.components) + &mean)
    }
}

fn symmetric_eigen(m: &Array2<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let dm = DMatrix::from_iterator(n, n, m.t().iter().copied());
    let eig = SymmetricEigen::new(dm);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Modified Gram–Schmidt over the rows of `v`. Rows that collapse (rank
/// deficiency) are replaced by the first standard basis vector that is not
/// already in their span.
fn orthonormalize_rows(v: &mut Array2<f64>) {
    let (k, d) = v.dim();
    for i in 0..k {
        let mut candidate = v.row(i).to_owned();
        let mut basis = 0;
        loop {
            for j in 0..i {
                let prev = v.row(j).to_owned();
                let proj = candidate.dot(&prev);
                candidate.scaled_add(-proj, &prev);
            }
            let norm = candidate.dot(&candidate).sqrt();
            if norm > 1e-6 || basis >= d {
                candidate /= norm.max(f64::MIN_POSITIVE);
                break;
            }
            candidate = Array1::zeros(d);
            candidate[basis] = 1.0;
            basis += 1;
        }
        v.row_mut(i).assign(&candidate);
    }
}

/// Flips each component so its largest-magnitude entry is positive (first
/// such entry on ties).
fn apply_sign_convention(v: &mut Array2<f64>) {
    for mut row in v.rows_mut() {
        let mut best = 0;
        for (j, x) in row.iter().enumerate() {
            if x.abs() > row[best].abs() {
                best = j;
            }
        }
        if row[best] < 0.0 {
            row.mapv_inplace(|x| -x);
        }
    }
}

/// Fits the top-`k` principal directions of the centered training matrix.
///
/// Uses the `d × d` covariance when there are at least as many rows as
/// columns, and the `r × r` Gram matrix otherwise (the wide case of long
/// aggregation intervals).
pub fn fit_pca(train: ArrayView2<'_, f64>, k: usize) -> Result<PcaModel> {
    let (rows, cols) = train.dim();
    let limit = rows.saturating_sub(1).min(cols);
    if k == 0 || k > limit {
        return Err(Error::Dimension(format!(
            "k = {k} components requested but 1 ≤ k ≤ min(rows − 1, cols) = min({}, {cols}) = {limit}",
            rows.saturating_sub(1)
        )));
    }
    let mean = train.mean_axis(Axis(0)).expect("rows > 0");
    let centered = &train - &mean;
    let scale = 1.0 / (rows as f64 - 1.0);

    let (values, mut components) = if cols <= rows {
        let cov = centered.t().dot(&centered) * scale;
        let (values, vectors) = symmetric_eigen(&cov);
        let comps = Array2::from_shape_fn((k, cols), |(i, j)| vectors[(j, i)]);
        (values, comps)
    } else {
        let gram = centered.dot(&centered.t()) * scale;
        let (values, vectors) = symmetric_eigen(&gram);
        let u = Array2::from_shape_fn((rows, k), |(r, i)| vectors[(r, i)]);
        // v_i = Xᵀ u_i / ‖Xᵀ u_i‖, normalized by Gram–Schmidt below.
        let comps = u.t().dot(&centered);
        (values, comps)
    };
    orthonormalize_rows(&mut components);
    apply_sign_convention(&mut components);

    let total_variance = centered.iter().map(|x| x * x).sum::<f64>() * scale;
    Ok(PcaModel {
        components,
        explained_variance: values[..k].iter().map(|v| v.max(0.0)).collect(),
        total_variance,
        mean: mean.to_vec(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReductionMode {
    None,
    StftOnly(usize),
    All(usize),
}

/// Component counts used by the STFT-block and whole-vector sweeps.
pub const STFT_COMPONENTS: [usize; 3] = [10, 15, 20];
pub const ALL_COMPONENTS: [usize; 5] = [2, 5, 10, 15, 20];

impl ReductionMode {
    pub fn components(self) -> Option<usize> {
        match self {
            ReductionMode::None => None,
            ReductionMode::StftOnly(k) | ReductionMode::All(k) => Some(k),
        }
    }

    pub fn family(self) -> &'static str {
        match self {
            ReductionMode::None => "none",
            ReductionMode::StftOnly(_) => "stft-pca",
            ReductionMode::All(_) => "all-pca",
        }
    }
}

impl fmt::Display for ReductionMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.components() {
            Some(k) => write!(f, "{}:{k}", self.family()),
            None => f.write_str(self.family()),
        }
    }
}

impl FromStr for ReductionMode {
    type Err = Error;

    /// `none`, `stft-pca:10`, `all-pca:2`.
    fn from_str(s: &str) -> Result<Self> {
        let (family, k) = match s.split_once(':') {
            Some((f, k)) => (
                f,
                Some(k.parse::<usize>().map_err(|e| Error::config("mode", format!("bad component count in `{s}`: {e}")))?),
            ),
            None => (s, None),
        };
        match (family, k) {
            ("none", None) => Ok(ReductionMode::None),
            ("stft-pca", Some(k)) if k > 0 => Ok(ReductionMode::StftOnly(k)),
            ("all-pca", Some(k)) if k > 0 => Ok(ReductionMode::All(k)),
            _ => Err(Error::config("mode", format!("cannot parse reduction mode `{s}`"))),
        }
    }
}

/// Everything needed to reduce a raw feature row at inference time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionModel {
    pub mode: ReductionMode,
    pub stft_len: usize,
    pub normalizer: Normalizer,
    pub pca: Option<PcaModel>,
}

impl ReductionModel {
    pub fn out_dim(&self) -> usize {
        match self.mode {
            ReductionMode::None => self.normalizer.dim(),
            ReductionMode::StftOnly(k) => k + self.normalizer.dim() - self.stft_len,
            ReductionMode::All(k) => k,
        }
    }

    /// Reduces already-normalized rows.
    pub fn reduce_normalized(&self, z: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        match (self.mode, &self.pca) {
            (ReductionMode::None, _) => Ok(z.to_owned()),
            (ReductionMode::All(_), Some(pca)) => pca.transform(z),
            (ReductionMode::StftOnly(_), Some(pca)) => {
                let scores = pca.transform(z.slice(s![.., ..self.stft_len]))?;
                let rest = z.slice(s![.., self.stft_len..]);
                Ok(ndarray::concatenate(Axis(1), &[scores.view(), rest]).expect("row counts agree"))
            }
            (mode, None) => Err(Error::Fit(format!("mode {mode} has no fitted PCA"))),
        }
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        let z = self.normalizer.transform(x)?;
        self.reduce_normalized(z.view())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Ok(serde_json::from_reader(f)?)
    }
}

#[derive(Clone, Debug)]
pub struct Reduced {
    pub train: Array2<f64>,
    pub test: Array2<f64>,
    pub out_dim: usize,
    pub model: ReductionModel,
}

/// Fits the reduction for `mode` on `train` and applies it to both sets.
pub fn apply_mode(
    train: ArrayView2<'_, f64>,
    test: ArrayView2<'_, f64>,
    stft_len: usize,
    mode: ReductionMode,
) -> Result<Reduced> {
    if train.ncols() != test.ncols() {
        return Err(Error::Dimension(format!(
            "train has {} columns, test has {}",
            train.ncols(),
            test.ncols()
        )));
    }
    if stft_len > train.ncols() {
        return Err(Error::Dimension(format!("stft_len {stft_len} exceeds width {}", train.ncols())));
    }
    let normalizer = fit_normalizer(train)?;
    let z_train = normalizer.transform(train)?;
    let pca = match mode {
        ReductionMode::None => None,
        ReductionMode::StftOnly(k) => Some(fit_pca(z_train.slice(s![.., ..stft_len]), k)?),
        ReductionMode::All(k) => Some(fit_pca(z_train.view(), k)?),
    };
    let model = ReductionModel {
        mode,
        stft_len,
        normalizer,
        pca,
    };
    let train_out = model.reduce_normalized(z_train.view())?;
    let test_out = model.transform(test)?;
    Ok(Reduced {
        out_dim: model.out_dim(),
        train: train_out,
        test: test_out,
        model,
    })
}
