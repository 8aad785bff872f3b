use std::collections::BTreeSet;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, feature_throughput, ConfusionMatrix, Metrics, ThroughputTable};
use crate::error::{Error, Result};
use crate::features::{extract_batch, feature_len, make_windows, AlignedStreams, StftParams, INTERVALS, NON_STFT_LEN};
use crate::models::{predict, stratified_split, train, Dataset, ModelName, RowMeta, SplitOptions};
use crate::par;
use crate::reduce::{fit_normalizer, fit_pca, PcaModel, ReductionMode, ReductionModel, ALL_COMPONENTS, STFT_COMPONENTS};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub intervals: Vec<usize>,
    pub modes: Vec<ReductionMode>,
    pub models: Vec<ModelName>,
    pub seeds: Vec<u64>,
}

impl SweepGrid {
    fn over(modes: Vec<ReductionMode>, seed: u64) -> Self {
        SweepGrid {
            intervals: INTERVALS.to_vec(),
            modes,
            models: ModelName::ALL.to_vec(),
            seeds: vec![seed],
        }
    }

    /// Every interval, no reduction, every model.
    pub fn no_pca(seed: u64) -> Self {
        Self::over(vec![ReductionMode::None], seed)
    }

    /// PCA on the STFT block with 10, 15 and 20 components.
    pub fn stft_pca(seed: u64) -> Self {
        Self::over(STFT_COMPONENTS.iter().map(|&k| ReductionMode::StftOnly(k)).collect(), seed)
    }

    /// PCA on the whole vector with 2, 5, 10, 15 and 20 components.
    pub fn all_pca(seed: u64) -> Self {
        Self::over(ALL_COMPONENTS.iter().map(|&k| ReductionMode::All(k)).collect(), seed)
    }

    pub fn len(&self) -> usize {
        self.intervals.len() * self.modes.len() * self.models.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self, paper_arithmetic: bool) -> Result<()> {
        for (field, empty) in [
            ("intervals", self.intervals.is_empty()),
            ("modes", self.modes.is_empty()),
            ("models", self.models.is_empty()),
            ("seeds", self.seeds.is_empty()),
        ] {
            if empty {
                return Err(Error::config(field, "grid axis is empty"));
            }
        }
        if self.intervals.contains(&0) {
            return Err(Error::config("intervals", "interval of 0 samples"));
        }
        if paper_arithmetic {
            if let Some(n) = self.intervals.iter().find(|n| !INTERVALS.contains(n)) {
                return Err(Error::config(
                    "intervals",
                    format!("{n} has no reference feature count; paper arithmetic needs one of {INTERVALS:?}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub stft: StftParams,
    pub test_fraction: f64,
    pub split_by_trial: bool,
    pub drop_gapped: bool,
    /// Report the reference feature counts for unreduced vectors instead of
    /// the extractor's own width.
    pub paper_arithmetic: bool,
    pub table: ThroughputTable,
    pub jobs: Option<usize>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            stft: StftParams::default(),
            test_fraction: 0.3,
            split_by_trial: false,
            drop_gapped: true,
            paper_arithmetic: false,
            table: ThroughputTable::paper(),
            jobs: None,
        }
    }
}

impl SweepOptions {
    /// Transmitted feature count of one window under `mode`.
    pub fn feature_count(&self, n_samples: usize, mode: ReductionMode) -> Result<usize> {
        Ok(match mode {
            ReductionMode::None if self.paper_arithmetic => self
                .table
                .get(n_samples)
                .ok_or_else(|| Error::config("intervals", format!("no reference feature count for {n_samples}")))?,
            ReductionMode::None => feature_len(n_samples, &self.stft).1,
            ReductionMode::StftOnly(k) => k + NON_STFT_LEN,
            ReductionMode::All(k) => k,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub model: ModelName,
    pub n_samples: usize,
    pub interval_s: f64,
    pub mode: ReductionMode,
    pub feature_count: usize,
    pub throughput: f64,
    pub metrics: Option<Metrics>,
    pub seed: u64,
    /// `ok`, or the reason the cell produced no metrics.
    pub status: String,
}

impl SweepRecord {
    pub fn is_ok(&self) -> bool {
        self.metrics.is_some()
    }

    fn sort_key(&self) -> (usize, ReductionMode, ModelName, u64) {
        (self.n_samples, self.mode, self.model, self.seed)
    }
}

/// Normalized features of one interval, split once and shared by every cell.
struct Prepared {
    stft_len: usize,
    train: Dataset,
    test: Dataset,
    normalizer: crate::reduce::Normalizer,
    z_train: Array2<f64>,
    z_test: Array2<f64>,
}

fn prepare(campaign: &[AlignedStreams], n: usize, seed: u64, opts: &SweepOptions) -> Result<Prepared> {
    let windows: Vec<_> = campaign
        .iter()
        .flat_map(|s| make_windows(s, n, opts.drop_gapped))
        .collect();
    if windows.is_empty() {
        return Err(Error::Shape(format!("no complete {n}-sample windows in the campaign")));
    }
    let rate = campaign[0].sample_rate_hz;
    let rows = extract_batch(&windows, &opts.stft, rate)?;
    let width = rows[0].values.len();
    let stft_len = rows[0].stft_len;
    let mut x = Array2::zeros((rows.len(), width));
    for (mut dst, r) in x.rows_mut().into_iter().zip(&rows) {
        dst.assign(&ndarray::ArrayView1::from(&r.values));
    }
    let y = rows.iter().map(|r| r.label).collect();
    let meta = rows
        .iter()
        .map(|r| RowMeta {
            trial_id: r.trial_id,
            window_index: r.window_index,
        })
        .collect();
    let ds = Dataset::new(x, y, meta)?;
    let (train, test) = stratified_split(
        &ds,
        &SplitOptions {
            test_fraction: opts.test_fraction,
            seed,
            by_trial: opts.split_by_trial,
        },
    )?;
    let normalizer = fit_normalizer(train.x.view())?;
    let z_train = normalizer.transform(train.x.view())?;
    let z_test = normalizer.transform(test.x.view())?;
    Ok(Prepared {
        stft_len,
        train,
        test,
        normalizer,
        z_train,
        z_test,
    })
}

/// One PCA per family, fitted at the largest component count the training
/// set supports; smaller counts are truncations of it.
fn family_pca(p: &Prepared, modes: &[ReductionMode], stft_block: bool) -> Option<Result<PcaModel>> {
    let kmax = modes
        .iter()
        .filter_map(|m| match (m, stft_block) {
            (ReductionMode::StftOnly(k), true) | (ReductionMode::All(k), false) => Some(*k),
            _ => None,
        })
        .max()?;
    let data = if stft_block {
        p.z_train.slice(s![.., ..p.stft_len])
    } else {
        p.z_train.view()
    };
    let limit = data.nrows().saturating_sub(1).min(data.ncols());
    Some(fit_pca(data, kmax.min(limit).max(1)))
}

fn run_cell(p: &Prepared, pca: Option<&Result<PcaModel>>, mode: ReductionMode, model: ModelName, seed: u64) -> Result<Metrics> {
    let pca = match (mode.components(), pca) {
        (None, _) => None,
        (Some(_), None) => unreachable!("family PCA is fitted for every reduced mode"),
        (Some(_), Some(Err(e))) => return Err(Error::Fit(format!("PCA for {mode}: {e}"))),
        (Some(k), Some(Ok(full))) => {
            if k > full.k() {
                return Err(Error::Dimension(format!(
                    "{k} components requested but the training set supports at most {}",
                    full.k()
                )));
            }
            Some(full.truncate(k)?)
        }
    };
    let reducer = ReductionModel {
        mode,
        stft_len: p.stft_len,
        normalizer: p.normalizer.clone(),
        pca,
    };
    let train_x = reducer.reduce_normalized(p.z_train.view())?;
    let test_x = reducer.reduce_normalized(p.z_test.view())?;
    let train_ds = Dataset {
        x: train_x,
        y: p.train.y.clone(),
        meta: p.train.meta.clone(),
    };
    let fitted = train(&model.default_kind(seed), &train_ds)?;
    let predicted = predict(&fitted, test_x.view())?;
    compute_metrics(&ConfusionMatrix::from_predictions(&p.test.y, &predicted)?)
}

/// Runs every cell of `grid` on `campaign`.
///
/// Within one interval and seed, all cells share the split, the normalizer
/// and the per-family PCA. Cell failures are recorded in `status`; only an
/// invalid grid aborts the sweep. Records come back sorted by interval,
/// mode, model and seed.
pub fn run_sweep(campaign: &[AlignedStreams], grid: &SweepGrid, opts: &SweepOptions) -> Result<Vec<SweepRecord>> {
    grid.validate(opts.paper_arithmetic)?;
    opts.stft.validate()?;
    if campaign.is_empty() {
        return Err(Error::Shape("campaign has no trials".into()));
    }
    let rate = campaign[0].sample_rate_hz;
    if campaign.iter().any(|s| s.sample_rate_hz != rate) {
        return Err(Error::Shape("trials differ in sample rate".into()));
    }
    let intervals: BTreeSet<usize> = grid.intervals.iter().copied().collect();
    let modes: BTreeSet<ReductionMode> = grid.modes.iter().copied().collect();
    let models: BTreeSet<ModelName> = grid.models.iter().copied().collect();
    let seeds: BTreeSet<u64> = grid.seeds.iter().copied().collect();
    let modes: Vec<ReductionMode> = modes.into_iter().collect();

    par::with_jobs(opts.jobs, || {
        let mut records = Vec::with_capacity(grid.len());
        for &n in &intervals {
            let interval_s = n as f64 / rate;
            for &seed in &seeds {
                log::info!("interval {n} samples ({interval_s} s), seed {seed}");
                let prepared = prepare(campaign, n, seed, opts);
                let (stft_pca, all_pca) = match &prepared {
                    Ok(p) => (family_pca(p, &modes, true), family_pca(p, &modes, false)),
                    Err(_) => (None, None),
                };
                let cells: Vec<(ReductionMode, ModelName)> = modes
                    .iter()
                    .flat_map(|&m| models.iter().map(move |&k| (m, k)))
                    .collect();
                let mut batch = par::map_slice(&cells, |&(mode, model)| {
                    let outcome = match &prepared {
                        Err(e) => Err(Error::Shape(format!("interval setup failed: {e}"))),
                        Ok(p) => {
                            let pca = match mode {
                                ReductionMode::None => None,
                                ReductionMode::StftOnly(_) => stft_pca.as_ref(),
                                ReductionMode::All(_) => all_pca.as_ref(),
                            };
                            run_cell(p, pca, mode, model, seed)
                        }
                    };
                    let feature_count = opts.feature_count(n, mode)?;
                    let (metrics, status) = match outcome {
                        Ok(m) => (Some(m), "ok".to_string()),
                        Err(e) => {
                            log::warn!("{model} at {n} samples, {mode}: {e}");
                            (None, format!("error: {e}"))
                        }
                    };
                    Ok(SweepRecord {
                        model,
                        n_samples: n,
                        interval_s,
                        mode,
                        feature_count,
                        throughput: feature_throughput(feature_count, interval_s)?,
                        metrics,
                        seed,
                        status,
                    })
                })
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
                records.append(&mut batch);
            }
        }
        records.sort_by_key(SweepRecord::sort_key);
        Ok(records)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simgen::{synthesize_campaign, SignalConfig};

    #[test]
    fn grid_sizes() {
        assert_eq!(SweepGrid::no_pca(0).len(), 28);
        assert_eq!(SweepGrid::stft_pca(0).len(), 84);
        assert_eq!(SweepGrid::all_pca(0).len(), 140);
    }

    #[test]
    fn paper_arithmetic_rejects_unknown_interval() {
        let mut g = SweepGrid::no_pca(0);
        g.intervals.push(300);
        assert!(g.validate(false).is_ok());
        assert!(matches!(g.validate(true), Err(Error::Config { field: "intervals", .. })));
    }

    #[test]
    fn feature_counts_per_mode() {
        let mut o = SweepOptions::default();
        assert_eq!(o.feature_count(200, ReductionMode::None).unwrap(), 708);
        assert_eq!(o.feature_count(4000, ReductionMode::StftOnly(10)).unwrap(), 94);
        assert_eq!(o.feature_count(8000, ReductionMode::All(2)).unwrap(), 2);
        o.paper_arithmetic = true;
        assert_eq!(o.feature_count(200, ReductionMode::None).unwrap(), 9320);
    }

    #[test]
    fn small_sweep_runs_and_records_oversized_pca() {
        let cfg = SignalConfig::default().with_seed(3).with_duration(10.0);
        let campaign: Vec<AlignedStreams> = synthesize_campaign(&cfg)
            .unwrap()
            .iter()
            .map(AlignedStreams::from_trial)
            .collect();
        // At 8000 samples each trial yields one window: 27 rows, 19 train
        // rows, so 20 components exceed the limit of 18.
        let grid = SweepGrid {
            intervals: vec![4000, 8000],
            modes: vec![ReductionMode::All(20), ReductionMode::StftOnly(10)],
            models: vec![ModelName::Knn, ModelName::Dt],
            seeds: vec![1],
        };
        let recs = run_sweep(&campaign, &grid, &SweepOptions::default()).unwrap();
        assert_eq!(recs.len(), 8);
        let keys: Vec<_> = recs.iter().map(SweepRecord::sort_key).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &recs {
            let count = r.feature_count as f64;
            assert!((r.throughput * r.interval_s - count).abs() <= count * f64::EPSILON);
            let oversized = r.n_samples == 8000 && r.mode == ReductionMode::All(20);
            assert_eq!(!r.is_ok(), oversized, "{r:?}");
        }
    }
}
