use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{feature_throughput, throughput_reduction, Metrics};
use super::sweep::{SweepOptions, SweepRecord};
use crate::error::{Error, Result};
use crate::reduce::ReductionMode;

/// Range of the rescaled component-count axis in the parallel-coordinates
/// export.
pub const PCA_AXIS_RANGE: (f64, f64) = (0.92, 1.00);

/// Flat record layout shared by the CSV and JSON exports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Row {
    model: String,
    n_samples: usize,
    interval_s: f64,
    mode: String,
    components: Option<usize>,
    feature_count: usize,
    throughput: f64,
    acc: Option<f64>,
    prec: Option<f64>,
    rec: Option<f64>,
    f1: Option<f64>,
    seed: u64,
    status: String,
}

impl From<&SweepRecord> for Row {
    fn from(r: &SweepRecord) -> Self {
        Row {
            model: r.model.to_string(),
            n_samples: r.n_samples,
            interval_s: r.interval_s,
            mode: r.mode.family().to_string(),
            components: r.mode.components(),
            feature_count: r.feature_count,
            throughput: r.throughput,
            acc: r.metrics.map(|m| m.acc),
            prec: r.metrics.map(|m| m.prec),
            rec: r.metrics.map(|m| m.rec),
            f1: r.metrics.map(|m| m.f1),
            seed: r.seed,
            status: r.status.clone(),
        }
    }
}

impl TryFrom<Row> for SweepRecord {
    type Error = Error;

    fn try_from(row: Row) -> Result<Self> {
        let mode: ReductionMode = match row.components {
            Some(k) => format!("{}:{k}", row.mode).parse()?,
            None => row.mode.parse()?,
        };
        let metrics = match (row.acc, row.prec, row.rec, row.f1) {
            (Some(acc), Some(prec), Some(rec), Some(f1)) => Some(Metrics { acc, prec, rec, f1 }),
            (None, None, None, None) => None,
            _ => return Err(Error::Shape(format!("record {} {} has partial metrics", row.model, row.n_samples))),
        };
        Ok(SweepRecord {
            model: row.model.parse()?,
            n_samples: row.n_samples,
            interval_s: row.interval_s,
            mode,
            feature_count: row.feature_count,
            throughput: row.throughput,
            metrics,
            seed: row.seed,
            status: row.status,
        })
    }
}

pub fn write_records_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(Row::from(r))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    csv::Reader::from_reader(input)
        .deserialize::<Row>()
        .map(|row| SweepRecord::try_from(row?))
        .collect()
}

pub fn write_records_json<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let rows: Vec<Row> = records.iter().map(Row::from).collect();
    serde_json::to_writer_pretty(out, &rows)?;
    Ok(())
}

pub fn read_records_json<R: Read>(input: R) -> Result<Vec<SweepRecord>> {
    let rows: Vec<Row> = serde_json::from_reader(input)?;
    rows.into_iter().map(SweepRecord::try_from).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct ParallelRow {
    model: String,
    n_samples: usize,
    interval_s: f64,
    mode: String,
    components: Option<usize>,
    pca_axis: Option<f64>,
    feature_count: usize,
    throughput: f64,
    acc: Option<f64>,
    prec: Option<f64>,
    rec: Option<f64>,
    f1: Option<f64>,
}

/// Component counts min-max scaled into [`PCA_AXIS_RANGE`] within each
/// (reduction family, interval) group. A group with a single distinct count
/// maps to the top of the range. Unreduced records get `None`.
pub fn pca_axis_values(records: &[SweepRecord]) -> Vec<Option<f64>> {
    let mut ranges: BTreeMap<(&str, usize), (usize, usize)> = BTreeMap::new();
    for r in records {
        if let Some(k) = r.mode.components() {
            let e = ranges.entry((r.mode.family(), r.n_samples)).or_insert((k, k));
            e.0 = e.0.min(k);
            e.1 = e.1.max(k);
        }
    }
    let (lo, hi) = PCA_AXIS_RANGE;
    records
        .iter()
        .map(|r| {
            let k = r.mode.components()?;
            let (min, max) = ranges[&(r.mode.family(), r.n_samples)];
            Some(if max == min {
                hi
            } else {
                lo + (hi - lo) * (k - min) as f64 / (max - min) as f64
            })
        })
        .collect()
}

pub fn write_parallel_coords<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (r, axis) in records.iter().zip(pca_axis_values(records)) {
        w.serialize(ParallelRow {
            model: r.model.to_string(),
            n_samples: r.n_samples,
            interval_s: r.interval_s,
            mode: r.mode.family().to_string(),
            components: r.mode.components(),
            pca_axis: axis,
            feature_count: r.feature_count,
            throughput: r.throughput,
            acc: r.metrics.map(|m| m.acc),
            prec: r.metrics.map(|m| m.prec),
            rec: r.metrics.map(|m| m.rec),
            f1: r.metrics.map(|m| m.f1),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Highest F1, then lowest throughput; earlier records win exact ties.
pub fn best_tradeoff(records: &[SweepRecord]) -> Option<&SweepRecord> {
    records
        .iter()
        .filter_map(|r| r.metrics.map(|m| (r, m.f1)))
        .fold(None::<(&SweepRecord, f64)>, |best, (r, f1)| match best {
            Some((b, bf1)) if bf1 > f1 || (bf1 == f1 && b.throughput <= r.throughput) => Some((b, bf1)),
            _ => Some((r, f1)),
        })
        .map(|(r, _)| r)
}

/// Throughput of unreduced vectors at one interval and how far the best
/// record undercuts it.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Baseline {
    pub n_samples: usize,
    pub throughput: f64,
    pub reduction_pct: Option<f64>,
}

/// The two no-reduction baselines the reduction figure is quoted against:
/// the 800-sample interval and the 8000-sample interval (the lowest
/// unreduced throughput).
pub const BASELINE_INTERVALS: [usize; 2] = [800, 8000];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub records: usize,
    pub failed: usize,
    pub best: Option<SweepRecord>,
    pub baselines: Vec<Baseline>,
}

pub fn summarize(records: &[SweepRecord], opts: &SweepOptions, sample_rate_hz: f64) -> Result<Summary> {
    let best = best_tradeoff(records).cloned();
    let baselines = BASELINE_INTERVALS
        .iter()
        .map(|&n| {
            let count = opts.feature_count(n, ReductionMode::None)?;
            let throughput = feature_throughput(count, n as f64 / sample_rate_hz)?;
            Ok(Baseline {
                n_samples: n,
                throughput,
                reduction_pct: best.as_ref().map(|b| throughput_reduction(throughput, b.throughput)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Summary {
        records: records.len(),
        failed: records.iter().filter(|r| !r.is_ok()).count(),
        best,
        baselines,
    })
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "records: {} ({} failed)", self.records, self.failed)?;
        match &self.best {
            Some(b) => {
                let m = b.metrics.expect("best record has metrics");
                writeln!(
                    f,
                    "best tradeoff: {} n={} ({} s) {} features={} throughput={}/s acc={:.4} prec={:.4} rec={:.4} f1={:.4}",
                    b.model, b.n_samples, b.interval_s, b.mode, b.feature_count, b.throughput, m.acc, m.prec, m.rec, m.f1
                )?;
            }
            None => writeln!(f, "best tradeoff: none (no successful records)")?,
        }
        for base in &self.baselines {
            match base.reduction_pct {
                Some(p) => writeln!(
                    f,
                    "throughput reduction vs unreduced n={} ({}/s): {p:.2}%",
                    base.n_samples, base.throughput
                )?,
                None => writeln!(f, "unreduced n={} throughput: {}/s", base.n_samples, base.throughput)?,
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportFiles {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub parallel: PathBuf,
    pub summary: PathBuf,
}

/// Writes `sweep.csv`, `sweep.json`, `parallel_coords.csv` and
/// `summary.txt` into `dir`.
pub fn emit_report(records: &[SweepRecord], summary: &Summary, dir: &Path) -> Result<ReportFiles> {
    if records.is_empty() {
        return Err(Error::Shape("no records to report".into()));
    }
    std::fs::create_dir_all(dir)?;
    let files = ReportFiles {
        csv: dir.join("sweep.csv"),
        json: dir.join("sweep.json"),
        parallel: dir.join("parallel_coords.csv"),
        summary: dir.join("summary.txt"),
    };
    let create = |p: &Path| Ok::<_, Error>(std::io::BufWriter::new(std::fs::File::create(p)?));
    write_records_csv(records, create(&files.csv)?)?;
    let mut json = create(&files.json)?;
    write_records_json(records, &mut json)?;
    json.flush()?;
    write_parallel_coords(records, create(&files.parallel)?)?;
    std::fs::write(&files.summary, summary.to_string())?;
    Ok(files)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ModelName;

    fn record(model: ModelName, n: usize, mode: ReductionMode, count: usize, f1: Option<f64>) -> SweepRecord {
        let interval_s = n as f64 / 800.0;
        SweepRecord {
            model,
            n_samples: n,
            interval_s,
            mode,
            feature_count: count,
            throughput: count as f64 / interval_s,
            metrics: f1.map(|f1| Metrics { acc: f1, prec: f1, rec: f1, f1 }),
            seed: 42,
            status: if f1.is_some() { "ok".into() } else { "error: too few rows, try again".into() },
        }
    }

    #[test]
    fn pca_axis_scaling() {
        let recs: Vec<_> = [10, 15, 20]
            .into_iter()
            .map(|k| record(ModelName::Rf, 4000, ReductionMode::StftOnly(k), k + 84, Some(1.0)))
            .chain([record(ModelName::Rf, 800, ReductionMode::None, 2580, Some(1.0))])
            .chain([record(ModelName::Rf, 800, ReductionMode::All(5), 5, Some(1.0))])
            .collect();
        let axis = pca_axis_values(&recs);
        let expected = [Some(0.92), Some(0.96), Some(1.0), None, Some(1.0)];
        for (a, e) in axis.iter().zip(expected) {
            match (a, e) {
                (Some(a), Some(e)) => assert!((a - e).abs() < 1e-12, "{a} vs {e}"),
                (a, e) => assert_eq!(*a, e),
            }
        }
    }

    #[test]
    fn best_prefers_f1_then_low_throughput() {
        let recs = vec![
            record(ModelName::Svc, 4000, ReductionMode::None, 12564, Some(1.0)),
            record(ModelName::Rf, 4000, ReductionMode::StftOnly(10), 94, Some(1.0)),
            record(ModelName::Knn, 4000, ReductionMode::All(2), 2, Some(0.9)),
            record(ModelName::Dt, 4000, ReductionMode::All(2), 2, None),
        ];
        let best = best_tradeoff(&recs).unwrap();
        assert_eq!((best.model, best.mode), (ModelName::Rf, ReductionMode::StftOnly(10)));
        assert!(best_tradeoff(&recs[3..]).is_none());
    }

    #[test]
    fn csv_and_json_round_trip() {
        let recs = vec![
            record(ModelName::Rf, 4000, ReductionMode::StftOnly(10), 94, Some(0.97)),
            record(ModelName::Dt, 8000, ReductionMode::All(20), 20, None),
            record(ModelName::Knn, 200, ReductionMode::None, 708, Some(1.0 / 3.0)),
        ];
        let mut csv = Vec::new();
        write_records_csv(&recs, &mut csv).unwrap();
        let text = String::from_utf8(csv.clone()).unwrap();
        assert!(text.starts_with("model,n_samples,interval_s,mode,components,feature_count,throughput,acc,prec,rec,f1,seed,status\n"));
        assert_eq!(read_records_csv(csv.as_slice()).unwrap(), recs);
        let mut json = Vec::new();
        write_records_json(&recs, &mut json).unwrap();
        assert_eq!(read_records_json(json.as_slice()).unwrap(), recs);
    }

    #[test]
    fn summary_baselines() {
        let recs = vec![record(ModelName::Rf, 4000, ReductionMode::StftOnly(10), 94, Some(1.0))];
        let opts = SweepOptions {
            paper_arithmetic: true,
            ..Default::default()
        };
        let s = summarize(&recs, &opts, 800.0).unwrap();
        assert_eq!(s.baselines[0].throughput, 27_788.0);
        assert_eq!(s.baselines[1].throughput, 24_940.4);
        let text = s.to_string();
        assert!(text.contains("99.93%"), "{text}");
        assert!(text.contains("99.92%"), "{text}");
    }

    #[test]
    fn emit_writes_all_files() {
        let dir = tempfile::tempdir().unwrap();
        let recs = vec![record(ModelName::Rf, 4000, ReductionMode::StftOnly(10), 94, Some(1.0))];
        let s = summarize(&recs, &SweepOptions::default(), 800.0).unwrap();
        let files = emit_report(&recs, &s, &dir.path().join("out")).unwrap();
        for p in [&files.csv, &files.json, &files.parallel, &files.summary] {
            assert!(p.exists());
        }
        assert!(emit_report(&[], &s, dir.path()).is_err());
    }
}
