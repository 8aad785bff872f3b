use approx::assert_abs_diff_eq;
use ndarray::Array2;

use uavcm::features::{
    extract_batch, load_campaign, make_windows, read_feature_csv, write_feature_csv, AlignedStreams, StftParams,
};
use uavcm::models::{predict, train, Dataset, ModelName};
use uavcm::reduce::{apply_mode, ReductionMode, ReductionModel};
use uavcm::simgen::{synthesize_campaign, write_campaign, ConditionClass, SignalConfig};
use uavcm::wire::{packetize, reassemble};

fn small_campaign() -> (SignalConfig, Vec<uavcm::simgen::Trial>) {
    let cfg = SignalConfig::default().with_seed(5).with_duration(5.0);
    let trials = synthesize_campaign(&cfg).unwrap();
    (cfg, trials)
}

#[test]
fn campaign_directory_round_trip() {
    let (cfg, trials) = small_campaign();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_campaign(dir.path(), &cfg, &trials).unwrap();
    assert_eq!(manifest.trials.len(), 27);
    let loaded = load_campaign(dir.path()).unwrap();
    let direct: Vec<AlignedStreams> = trials.iter().map(AlignedStreams::from_trial).collect();
    assert_eq!(loaded, direct);
}

#[test]
fn features_survive_csv() {
    let (_, trials) = small_campaign();
    let streams = AlignedStreams::from_trial(&trials[9]);
    let windows = make_windows(&streams, 800, true);
    assert_eq!(windows.len(), 5);
    let rows = extract_batch(&windows, &StftParams::default(), 800.0).unwrap();
    let mut buf = Vec::new();
    write_feature_csv(&rows, &mut buf).unwrap();
    let back = read_feature_csv(buf.as_slice()).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in back.iter().zip(&rows) {
        assert_eq!((a.label, a.trial_id, a.window_index), (b.label, b.trial_id, b.window_index));
        assert_eq!(a.values, b.values);
    }
}

#[test]
fn lost_packets_drop_only_touched_windows() {
    let (_, trials) = small_campaign();
    let trial = &trials[0];
    let mut packets = packetize(trial, 100).unwrap();
    // Lose the sensor-2 packet carrying samples 1000..1100.
    packets.retain(|p| !(p.sensor_id == 2 && p.sequence == 10));
    let r = reassemble(packets, &[1, 2], 800.0);
    assert_eq!(r.gaps.len(), 1);
    let streams = AlignedStreams::from_reassembled(&r, trial.class, trial.trial_id, 800.0).unwrap();
    assert_eq!(streams.len(), 4000);
    let kept: Vec<usize> = make_windows(&streams, 800, true).iter().map(|w| w.window_index).collect();
    assert_eq!(kept, vec![0, 2, 3, 4]);
    assert_eq!(make_windows(&streams, 800, false).len(), 5);
}

#[test]
fn saved_reduction_reproduces_transform() {
    let (_, trials) = small_campaign();
    let windows: Vec<_> = trials
        .iter()
        .flat_map(|t| make_windows(&AlignedStreams::from_trial(t), 1600, true))
        .collect();
    let rows = extract_batch(&windows, &StftParams::default(), 800.0).unwrap();
    let width = rows[0].values.len();
    let x = Array2::from_shape_fn((rows.len(), width), |(i, j)| rows[i].values[j]);
    let y: Vec<ConditionClass> = rows.iter().map(|r| r.label).collect();
    let reduced = apply_mode(x.view(), x.view(), rows[0].stft_len, ReductionMode::StftOnly(10)).unwrap();
    assert_eq!(reduced.out_dim, 94);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("reduction.json");
    reduced.model.save_json(&path).unwrap();
    let again = ReductionModel::load_json(&path).unwrap().transform(x.view()).unwrap();
    assert_abs_diff_eq!(again, reduced.test, epsilon = 1e-9);

    let ds = Dataset::unlabeled_meta(reduced.train, y.clone()).unwrap();
    let model = train(&ModelName::Rf.default_kind(1), &ds).unwrap();
    let acc = predict(&model, again.view())
        .unwrap()
        .iter()
        .zip(&y)
        .filter(|(p, t)| p == t)
        .count() as f64
        / y.len() as f64;
    assert!(acc > 0.95, "{acc}");
}
