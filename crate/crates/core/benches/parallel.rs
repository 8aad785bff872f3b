//! Single-thread pool versus the default rayon pool on the hot paths.
//!
//! Built without the `parallel` feature both variants run the same sequential
//! code, which is a useful sanity check on the overhead of the helpers.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ndarray::Array2;
use std::hint::black_box;

use uavcm::features::{extract_batch, make_windows, AlignedStreams, StftParams, Window};
use uavcm::models::{predict, ForestParams, KnnModel, KnnParams, RandomForest};
use uavcm::par;
use uavcm::simgen::{synthesize_campaign, ConditionClass, SignalConfig};

const POOLS: [(&str, Option<usize>); 2] = [("seq", Some(1)), ("par", None)];

fn campaign_windows(n_samples: usize) -> Vec<Window> {
    let cfg = SignalConfig::default().with_seed(11).with_duration(10.0);
    synthesize_campaign(&cfg)
        .unwrap()
        .iter()
        .flat_map(|t| make_windows(&AlignedStreams::from_trial(t), n_samples, true))
        .collect()
}

fn feature_matrix() -> (Array2<f64>, Vec<ConditionClass>) {
    let rows = extract_batch(&campaign_windows(800), &StftParams::default(), 800.0).unwrap();
    let x = Array2::from_shape_fn((rows.len(), rows[0].values.len()), |(i, j)| rows[i].values[j]);
    (x, rows.iter().map(|r| r.label).collect())
}

fn bench_synthesis(c: &mut Criterion) {
    let cfg = SignalConfig::default().with_seed(3).with_duration(5.0);
    let mut g = c.benchmark_group("synthesize_campaign");
    g.sample_size(10);
    for (name, jobs) in POOLS {
        g.bench_function(name, |b| b.iter(|| par::with_jobs(jobs, || synthesize_campaign(black_box(&cfg)).unwrap())));
    }
    g.finish();
}

fn bench_extract(c: &mut Criterion) {
    let mut g = c.benchmark_group("extract_batch");
    g.sample_size(10);
    for n in [800, 8000] {
        let windows = campaign_windows(n);
        for (name, jobs) in POOLS {
            g.bench_with_input(BenchmarkId::new(name, n), &windows, |b, w| {
                b.iter(|| par::with_jobs(jobs, || extract_batch(w, &StftParams::default(), 800.0).unwrap()))
            });
        }
    }
    g.finish();
}

fn bench_models(c: &mut Criterion) {
    let (x, y) = feature_matrix();

    let mut g = c.benchmark_group("random_forest_fit");
    g.sample_size(10);
    let params = ForestParams { n_trees: 20, ..ForestParams::default() };
    for (name, jobs) in POOLS {
        g.bench_function(name, |b| b.iter(|| par::with_jobs(jobs, || RandomForest::fit(&params, x.view(), &y))));
    }
    g.finish();

    let knn = KnnModel::fit(&KnnParams::default(), x.view(), &y);
    let mut g = c.benchmark_group("knn_predict");
    g.sample_size(10);
    for (name, jobs) in POOLS {
        g.bench_function(name, |b| b.iter(|| par::with_jobs(jobs, || predict(&knn, x.view()).unwrap())));
    }
    g.finish();
}

criterion_group!(benches, bench_synthesis, bench_extract, bench_models);
criterion_main!(benches);
