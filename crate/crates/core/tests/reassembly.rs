use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use uavcm::simgen::{synthesize_trial, ConditionClass, SignalConfig};
use uavcm::wire::{decode_packet, packetize, reassemble, Collector, TelemetryPacket};

fn packets() -> Vec<TelemetryPacket> {
    let cfg = SignalConfig::default().with_seed(2).with_duration(2.0);
    let trial = synthesize_trial(&cfg, ConditionClass::D5LateralHigh, 2).unwrap();
    packetize(&trial, 40).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn order_and_duplicates_do_not_matter(seed in any::<u64>(), dup_mask in proptest::collection::vec(any::<bool>(), 80)) {
        let base = packets();
        let expected = reassemble(base.clone(), &[1, 2], 800.0);
        let mut mixed = base.clone();
        mixed.extend(base.iter().zip(&dup_mask).filter(|(_, &d)| d).map(|(p, _)| p.clone()));
        mixed.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let got = reassemble(mixed, &[1, 2], 800.0);
        prop_assert_eq!(&got.streams, &expected.streams);
        prop_assert_eq!(got.stats.duplicates_dropped, dup_mask.iter().filter(|&&d| d).count() as u64);
    }

    #[test]
    fn missing_packets_become_gaps(drop in proptest::collection::btree_set(1usize..79, 1..6), seed in any::<u64>()) {
        let base = packets();
        let mut kept: Vec<TelemetryPacket> = base
            .iter()
            .enumerate()
            .filter(|(i, _)| !drop.contains(i))
            .map(|(_, p)| p.clone())
            .collect();
        kept.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let r = reassemble(kept, &[1, 2], 800.0);
        let lost: usize = r.streams.iter().map(|s| s.samples.iter().filter(|x| x.is_none()).count()).sum();
        prop_assert_eq!(lost, drop.len() * 40);
        prop_assert!(!r.gaps.is_empty());
    }
}

#[test]
fn collector_consumes_raw_datagrams() {
    let mut c = Collector::new([1, 2], 800.0);
    let base = packets();
    for p in &base {
        let bytes = p.encode().unwrap();
        assert_eq!(decode_packet(&bytes).unwrap(), *p);
        c.ingest_bytes(&bytes);
    }
    c.ingest_bytes(b"not a packet");
    let r = c.finish();
    assert_eq!(r.stats.packets_received as usize, base.len() + 1);
    assert_eq!(r.stats.truncated, 1);
    assert!(r.streams.iter().all(|s| s.complete()));
}
