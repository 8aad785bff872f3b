//! UDP telemetry protocol.
//!
//! Packet layout, all multi-byte fields little-endian:
//!
//! | offset | size | field                                  |
//! |-------:|-----:|----------------------------------------|
//! | 0      | 2    | magic `0x5643`                         |
//! | 2      | 1    | version `1`                            |
//! | 3      | 1    | sensor id (1 = center, 2 = outer)      |
//! | 4      | 4    | sequence, monotone per sensor          |
//! | 8      | 2    | sample count (1..=256)                 |
//! | 10     | 8    | timestamp of the first sample, µs      |
//! | 18     | 6·n  | samples, 3 × i16 raw counts each       |
//! | 18+6·n | 4    | CRC-32 (IEEE, reflected) of bytes 0..18+6·n |
//!
//! Raw counts are 3.9 mg per LSB.

use std::collections::{BTreeMap, BTreeSet};
use std::net::{SocketAddr, ToSocketAddrs, UdpSocket};
use std::sync::{Arc, RwLock};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::simgen::{Trial, NUM_AXES, NUM_SENSORS};

pub const MAGIC: u16 = 0x5643;
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 18;
pub const CRC_LEN: usize = 4;
pub const MAX_SAMPLES_PER_PACKET: usize = 256;
pub const MAX_PACKET_LEN: usize = HEADER_LEN + 6 * MAX_SAMPLES_PER_PACKET + CRC_LEN;
/// Accelerometer scale, g per raw count.
pub const G_PER_COUNT: f64 = 0.0039;

pub type RawSample = [i16; NUM_AXES];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TelemetryPacket {
    pub sensor_id: u8,
    pub sequence: u32,
    pub timestamp_us: u64,
    pub samples: Vec<RawSample>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("bad magic 0x{0:04x}")]
    BadMagic(u16),
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("truncated packet: expected {expected} bytes, got {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("checksum mismatch: computed 0x{computed:08x}, packet carries 0x{carried:08x}")]
    ChecksumMismatch { computed: u32, carried: u32 },
}

pub fn packet_len(sample_count: usize) -> usize {
    HEADER_LEN + 6 * sample_count + CRC_LEN
}

pub fn crc32(bytes: &[u8]) -> u32 {
    crc32fast::hash(bytes)
}

pub fn g_to_counts(g: f64) -> i16 {
    (g / G_PER_COUNT).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16
}

pub fn counts_to_g(counts: i16) -> f64 {
    counts as f64 * G_PER_COUNT
}

pub fn encode_packet(sensor_id: u8, sequence: u32, timestamp_us: u64, samples: &[RawSample]) -> Result<Vec<u8>> {
    if samples.is_empty() || samples.len() > MAX_SAMPLES_PER_PACKET {
        return Err(Error::Protocol(format!(
            "sample count {} outside 1..={MAX_SAMPLES_PER_PACKET}",
            samples.len()
        )));
    }
    let mut buf = Vec::with_capacity(packet_len(samples.len()));
    buf.extend_from_slice(&MAGIC.to_le_bytes());
    buf.push(VERSION);
    buf.push(sensor_id);
    buf.extend_from_slice(&sequence.to_le_bytes());
    buf.extend_from_slice(&(samples.len() as u16).to_le_bytes());
    buf.extend_from_slice(&timestamp_us.to_le_bytes());
    for s in samples {
        for c in s {
            buf.extend_from_slice(&c.to_le_bytes());
        }
    }
    let crc = crc32(&buf);
    buf.extend_from_slice(&crc.to_le_bytes());
    Ok(buf)
}

impl TelemetryPacket {
    pub fn encode(&self) -> Result<Vec<u8>> {
        encode_packet(self.sensor_id, self.sequence, self.timestamp_us, &self.samples)
    }
}

fn le_u16(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn le_u32(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().unwrap())
}

/// Parses a datagram.
///
/// The CRC is verified before any header field is trusted, so a corrupted
/// header is reported as a checksum mismatch rather than as bad magic or a
/// bad length.
pub fn decode_packet(bytes: &[u8]) -> Result<TelemetryPacket, DecodeError> {
    let min = packet_len(1);
    if bytes.len() < min {
        return Err(DecodeError::Truncated {
            expected: min,
            actual: bytes.len(),
        });
    }
    let body = &bytes[..bytes.len() - CRC_LEN];
    let carried = le_u32(bytes, body.len());
    let computed = crc32(body);
    if computed != carried {
        return Err(DecodeError::ChecksumMismatch { computed, carried });
    }
    let magic = le_u16(bytes, 0);
    if magic != MAGIC {
        return Err(DecodeError::BadMagic(magic));
    }
    if bytes[2] != VERSION {
        return Err(DecodeError::BadVersion(bytes[2]));
    }
    let count = le_u16(bytes, 8) as usize;
    let expected = packet_len(count);
    if count == 0 || count > MAX_SAMPLES_PER_PACKET || bytes.len() != expected {
        return Err(DecodeError::Truncated {
            expected,
            actual: bytes.len(),
        });
    }
    let samples = bytes[HEADER_LEN..HEADER_LEN + 6 * count]
        .chunks_exact(6)
        .map(|c| {
            [
                i16::from_le_bytes([c[0], c[1]]),
                i16::from_le_bytes([c[2], c[3]]),
                i16::from_le_bytes([c[4], c[5]]),
            ]
        })
        .collect();
    Ok(TelemetryPacket {
        sensor_id: bytes[3],
        sequence: le_u32(bytes, 4),
        timestamp_us: u64::from_le_bytes(bytes[10..18].try_into().unwrap()),
        samples,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollectorStats {
    pub packets_received: u64,
    pub duplicates_dropped: u64,
    pub checksum_failures: u64,
    pub gaps_detected: u64,
    pub bad_magic: u64,
    pub bad_version: u64,
    pub truncated: u64,
    /// Valid packets from sensors outside the collector's sensor set.
    pub foreign_sensor: u64,
}

/// A run of missing sequence numbers, inclusive on both ends.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub sensor_id: u8,
    pub first_seq: u32,
    pub last_seq: u32,
}

/// Reassembled stream of one sensor. `None` marks sample slots lost to gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct SensorStream {
    pub sensor_id: u8,
    pub samples: Vec<Option<[f64; NUM_AXES]>>,
}

impl SensorStream {
    pub fn complete(&self) -> bool {
        self.samples.iter().all(Option::is_some)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Reassembled {
    /// One stream per requested sensor, in ascending sensor id order, all the
    /// same length and sharing slot 0.
    pub streams: Vec<SensorStream>,
    pub gaps: Vec<Gap>,
    pub stats: CollectorStats,
    /// Timestamp of slot 0.
    pub base_timestamp_us: u64,
}

/// Deduplicating, checksum-verifying packet sink.
#[derive(Clone, Debug)]
pub struct Collector {
    sensors: BTreeSet<u8>,
    sample_rate_hz: f64,
    packets: BTreeMap<(u8, u32), TelemetryPacket>,
    stats: CollectorStats,
}

impl Collector {
    pub fn new(sensors: impl IntoIterator<Item = u8>, sample_rate_hz: f64) -> Self {
        Collector {
            sensors: sensors.into_iter().collect(),
            sample_rate_hz,
            packets: BTreeMap::new(),
            stats: CollectorStats::default(),
        }
    }

    pub fn stats(&self) -> CollectorStats {
        self.stats
    }

    /// Ingests one raw datagram. Malformed datagrams are counted, not fatal.
    pub fn ingest_bytes(&mut self, bytes: &[u8]) {
        match decode_packet(bytes) {
            Ok(p) => self.accept(p),
            Err(e) => {
                self.stats.packets_received += 1;
                match e {
                    DecodeError::BadMagic(_) => self.stats.bad_magic += 1,
                    DecodeError::BadVersion(_) => self.stats.bad_version += 1,
                    DecodeError::Truncated { .. } => self.stats.truncated += 1,
                    DecodeError::ChecksumMismatch { .. } => self.stats.checksum_failures += 1,
                }
            }
        }
    }

    pub fn ingest(&mut self, packet: TelemetryPacket) {
        self.accept(packet);
    }

    fn accept(&mut self, packet: TelemetryPacket) {
        self.stats.packets_received += 1;
        if !self.sensors.contains(&packet.sensor_id) {
            self.stats.foreign_sensor += 1;
            return;
        }
        let key = (packet.sensor_id, packet.sequence);
        if self.packets.contains_key(&key) {
            self.stats.duplicates_dropped += 1;
        } else {
            self.packets.insert(key, packet);
        }
    }

    /// Orders samples by sequence and places them on a common slot grid.
    ///
    /// Slots are derived from packet timestamps relative to the earliest
    /// packet across all sensors, so streams stay aligned even when one
    /// sensor loses its first packets. Sequences are expected to start at 0;
    /// missing sequences (including leading ones) are reported as gaps.
    pub fn finish(&self) -> Reassembled {
        let mut stats = self.stats;
        let mut gaps = Vec::new();
        let base = self.packets.values().map(|p| p.timestamp_us).min().unwrap_or(0);
        let slot_of = |ts: u64| ((ts - base) as f64 * self.sample_rate_hz / 1e6).round() as usize;

        let mut streams: Vec<SensorStream> = Vec::with_capacity(self.sensors.len());
        for &sensor in &self.sensors {
            let mut samples: Vec<Option<[f64; NUM_AXES]>> = Vec::new();
            let mut expected_seq: u32 = 0;
            for ((_, seq), p) in self.packets.range((sensor, 0)..=(sensor, u32::MAX)) {
                if *seq > expected_seq {
                    gaps.push(Gap {
                        sensor_id: sensor,
                        first_seq: expected_seq,
                        last_seq: seq - 1,
                    });
                }
                expected_seq = seq.saturating_add(1);
                let start = slot_of(p.timestamp_us);
                let end = start + p.samples.len();
                if samples.len() < end {
                    samples.resize(end, None);
                }
                for (slot, s) in samples[start..end].iter_mut().zip(&p.samples) {
                    *slot = Some(s.map(counts_to_g));
                }
            }
            streams.push(SensorStream {
                sensor_id: sensor,
                samples,
            });
        }
        let len = streams.iter().map(|s| s.samples.len()).max().unwrap_or(0);
        for s in &mut streams {
            s.samples.resize(len, None);
        }
        stats.gaps_detected = gaps.len() as u64;
        Reassembled {
            streams,
            gaps,
            stats,
            base_timestamp_us: base,
        }
    }
}

/// Pure reassembly of a packet multiset.
pub fn reassemble<I>(packets: I, sensors: &[u8], sample_rate_hz: f64) -> Reassembled
where
    I: IntoIterator<Item = TelemetryPacket>,
{
    let mut c = Collector::new(sensors.iter().copied(), sample_rate_hz);
    for p in packets {
        c.ingest(p);
    }
    c.finish()
}

/// Splits a trial into per-sensor packets, sensors interleaved chunk by
/// chunk, sequences starting at 0.
pub fn packetize(trial: &Trial, samples_per_packet: usize) -> Result<Vec<TelemetryPacket>> {
    if samples_per_packet == 0 || samples_per_packet > MAX_SAMPLES_PER_PACKET {
        return Err(Error::Protocol(format!(
            "samples per packet {samples_per_packet} outside 1..={MAX_SAMPLES_PER_PACKET}"
        )));
    }
    let n = trial.len();
    let mut packets = Vec::with_capacity(NUM_SENSORS * n.div_ceil(samples_per_packet));
    for (seq, start) in (0..n).step_by(samples_per_packet).enumerate() {
        let end = (start + samples_per_packet).min(n);
        for (s, axes) in trial.streams.iter().enumerate() {
            packets.push(TelemetryPacket {
                sensor_id: (s + 1) as u8,
                sequence: seq as u32,
                timestamp_us: trial.timestamp_us(start),
                samples: (start..end)
                    .map(|i| [g_to_counts(axes[0][i]), g_to_counts(axes[1][i]), g_to_counts(axes[2][i])])
                    .collect(),
            });
        }
    }
    Ok(packets)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Pacing {
    AsFastAsPossible,
    /// Sleep so samples leave at the trial's sample rate.
    Realtime,
    PacketsPerSecond(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmitOptions {
    pub samples_per_packet: usize,
    pub pacing: Pacing,
    /// Probability of sending a packet twice; a test-harness knob.
    pub duplicate_rate: f64,
    pub seed: u64,
}

impl Default for EmitOptions {
    fn default() -> Self {
        EmitOptions {
            samples_per_packet: 250,
            pacing: Pacing::AsFastAsPossible,
            duplicate_rate: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmitStats {
    pub packets_sent: u64,
    pub duplicates_sent: u64,
    pub bytes_sent: u64,
    pub samples_sent: u64,
}

/// Sends every sample of `trial` once per sensor, in sequence order.
pub fn emit_stream<A: ToSocketAddrs>(trial: &Trial, dest: A, opts: &EmitOptions) -> Result<EmitStats> {
    let packets = packetize(trial, opts.samples_per_packet)?;
    let dest: SocketAddr = dest
        .to_socket_addrs()
        .map_err(Error::Transport)?
        .next()
        .ok_or_else(|| Error::Transport(std::io::Error::other("destination resolved to no address")))?;
    let bind: SocketAddr = if dest.is_ipv4() {
        "0.0.0.0:0".parse().unwrap()
    } else {
        "[::]:0".parse().unwrap()
    };
    let socket = UdpSocket::bind(bind).map_err(Error::Transport)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut stats = EmitStats::default();
    let started = Instant::now();

    for (i, p) in packets.iter().enumerate() {
        match opts.pacing {
            Pacing::AsFastAsPossible => {}
            Pacing::Realtime => {
                let due = Duration::from_micros(p.timestamp_us);
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            Pacing::PacketsPerSecond(pps) if pps > 0.0 => {
                let due = Duration::from_secs_f64(i as f64 / pps);
                if let Some(wait) = due.checked_sub(started.elapsed()) {
                    std::thread::sleep(wait);
                }
            }
            Pacing::PacketsPerSecond(_) => {}
        }
        let bytes = p.encode()?;
        let copies = if opts.duplicate_rate > 0.0 && rng.random::<f64>() < opts.duplicate_rate {
            2
        } else {
            1
        };
        for _ in 0..copies {
            socket.send_to(&bytes, dest).map_err(Error::Transport)?;
            stats.bytes_sent += bytes.len() as u64;
            stats.packets_sent += 1;
        }
        stats.duplicates_sent += copies - 1;
        stats.samples_sent += p.samples.len() as u64;
    }
    Ok(stats)
}

/// Stop conditions for [`capture`].
#[derive(Clone, Debug, PartialEq)]
pub struct CaptureOptions {
    /// Stop after this long without a datagram, once one has arrived.
    pub idle_timeout: Duration,
    /// Hard wall-clock limit.
    pub max_duration: Option<Duration>,
    /// Stop as soon as this many datagrams were received.
    pub max_packets: Option<u64>,
}

impl Default for CaptureOptions {
    fn default() -> Self {
        CaptureOptions {
            idle_timeout: Duration::from_secs(2),
            max_duration: None,
            max_packets: None,
        }
    }
}

pub type SharedCollector = Arc<RwLock<Collector>>;

/// Receive loop: the only writer of `collector`. Other threads may read
/// stats through the lock while capture is running.
pub fn capture(socket: &UdpSocket, collector: &SharedCollector, opts: &CaptureOptions) -> Result<CollectorStats> {
    let poll = Duration::from_millis(50);
    socket.set_read_timeout(Some(poll)).map_err(Error::Transport)?;
    let started = Instant::now();
    let mut last_rx: Option<Instant> = None;
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        if opts.max_duration.is_some_and(|d| started.elapsed() >= d) {
            break;
        }
        if last_rx.is_some_and(|t| t.elapsed() >= opts.idle_timeout) {
            break;
        }
        match socket.recv_from(&mut buf) {
            Ok((len, _)) => {
                last_rx = Some(Instant::now());
                let mut c = collector.write().expect("collector lock poisoned");
                c.ingest_bytes(&buf[..len]);
                if opts.max_packets.is_some_and(|m| c.stats.packets_received >= m) {
                    break;
                }
            }
            Err(e) if matches!(e.kind(), std::io::ErrorKind::WouldBlock | std::io::ErrorKind::TimedOut) => {}
            Err(e) => return Err(Error::Transport(e)),
        }
    }
    let stats = collector.read().expect("collector lock poisoned").stats();
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(sensor: u8, seq: u32, n: usize) -> TelemetryPacket {
        TelemetryPacket {
            sensor_id: sensor,
            sequence: seq,
            timestamp_us: seq as u64 * n as u64 * 1250,
            samples: (0..n).map(|i| [seq as i16, i as i16, -(i as i16)]).collect(),
        }
    }

    /// Bitwise CRC-32 (reflected 0xEDB88320 = reflected 0x04C11DB7).
    fn crc32_reference(bytes: &[u8]) -> u32 {
        let mut crc = 0xFFFF_FFFFu32;
        for &b in bytes {
            crc ^= b as u32;
            for _ in 0..8 {
                crc = if crc & 1 != 0 { (crc >> 1) ^ 0xEDB8_8320 } else { crc >> 1 };
            }
        }
        crc ^ 0xFFFF_FFFF
    }

    #[test]
    fn crc_matches_reference_and_check_value() {
        assert_eq!(crc32(b"123456789"), 0xCBF4_3926);
        assert_eq!(crc32_reference(b"123456789"), 0xCBF4_3926);
        let bytes = pkt(2, 77, 40).encode().unwrap();
        assert_eq!(crc32(&bytes[..bytes.len() - 4]), crc32_reference(&bytes[..bytes.len() - 4]));
    }

    #[test]
    fn minimal_packet_layout() {
        let bytes = encode_packet(1, 0, 0, &[[0, 0, 0]]).unwrap();
        assert_eq!(bytes.len(), 28);
        assert_eq!(&bytes[..4], &[0x43, 0x56, 0x01, 0x01]);
        let crc = crc32_reference(&bytes[..24]);
        assert_eq!(&bytes[24..], &crc.to_le_bytes());
    }

    #[test]
    fn sample_count_bounds() {
        assert!(matches!(encode_packet(1, 0, 0, &[]), Err(Error::Protocol(_))));
        assert!(matches!(encode_packet(1, 0, 0, &vec![[0; 3]; 257]), Err(Error::Protocol(_))));
        assert_eq!(encode_packet(1, 0, 0, &vec![[0; 3]; 256]).unwrap().len(), MAX_PACKET_LEN);
    }

    #[test]
    fn decode_errors_are_distinct() {
        assert_eq!(
            decode_packet(&[]),
            Err(DecodeError::Truncated { expected: 28, actual: 0 })
        );
        let good = pkt(1, 3, 4).encode().unwrap();
        assert_eq!(decode_packet(&good).unwrap(), pkt(1, 3, 4));

        let mut zeroed = good.clone();
        let n = zeroed.len();
        zeroed[n - 4..].fill(0);
        assert!(matches!(decode_packet(&zeroed), Err(DecodeError::ChecksumMismatch { .. })));

        let reseal = |mut b: Vec<u8>| {
            let n = b.len() - 4;
            let crc = crc32(&b[..n]);
            b[n..].copy_from_slice(&crc.to_le_bytes());
            b
        };
        let mut magic = good.clone();
        magic[0] = 0x00;
        assert_eq!(decode_packet(&reseal(magic)), Err(DecodeError::BadMagic(0x5600)));
        let mut version = good.clone();
        version[2] = 9;
        assert_eq!(decode_packet(&reseal(version)), Err(DecodeError::BadVersion(9)));
        // Claim 5 samples while carrying 4.
        let mut count = good.clone();
        count[8] = 5;
        assert!(matches!(decode_packet(&reseal(count)), Err(DecodeError::Truncated { .. })));
    }

    #[test]
    fn payload_flip_fails_checksum() {
        let good = pkt(2, 9, 10).encode().unwrap();
        for i in HEADER_LEN..good.len() - 4 {
            let mut bad = good.clone();
            bad[i] ^= 0xFF;
            assert!(matches!(decode_packet(&bad), Err(DecodeError::ChecksumMismatch { .. })));
        }
    }

    #[test]
    fn reorder_dedup_and_gaps() {
        let in_order = reassemble([pkt(1, 0, 4), pkt(1, 1, 4), pkt(1, 2, 4)], &[1], 800.0);
        let shuffled = reassemble([pkt(1, 2, 4), pkt(1, 0, 4), pkt(1, 1, 4)], &[1], 800.0);
        assert_eq!(in_order, shuffled);
        assert!(in_order.streams[0].complete());
        assert_eq!(in_order.streams[0].samples.len(), 12);

        let dup = reassemble([pkt(1, 0, 4), pkt(1, 1, 4), pkt(1, 1, 4), pkt(1, 2, 4)], &[1], 800.0);
        assert_eq!(dup.stats.duplicates_dropped, 1);
        assert_eq!(dup.streams, in_order.streams);

        let gap = reassemble([pkt(1, 0, 4), pkt(1, 2, 4)], &[1], 800.0);
        assert_eq!(gap.stats.gaps_detected, 1);
        assert_eq!(gap.gaps, vec![Gap { sensor_id: 1, first_seq: 1, last_seq: 1 }]);
        let s = &gap.streams[0].samples;
        assert_eq!(s.len(), 12);
        assert!(s[4..8].iter().all(Option::is_none));
        assert!(s[..4].iter().chain(&s[8..]).all(Option::is_some));
    }

    #[test]
    fn leading_loss_keeps_sensors_aligned() {
        let r = reassemble([pkt(1, 1, 4), pkt(2, 0, 4), pkt(2, 1, 4)], &[1, 2], 800.0);
        assert_eq!(r.gaps, vec![Gap { sensor_id: 1, first_seq: 0, last_seq: 0 }]);
        assert_eq!(r.streams[0].samples.len(), 8);
        assert!(r.streams[0].samples[..4].iter().all(Option::is_none));
        assert_eq!(r.streams[0].samples[4..], r.streams[1].samples[4..]);
    }

    #[test]
    fn collector_counts_bad_datagrams() {
        let mut c = Collector::new([1, 2], 800.0);
        c.ingest_bytes(&pkt(1, 0, 2).encode().unwrap());
        c.ingest_bytes(&[1, 2, 3]);
        let mut bad = pkt(1, 1, 2).encode().unwrap();
        bad[20] ^= 1;
        c.ingest_bytes(&bad);
        c.ingest_bytes(&pkt(3, 0, 2).encode().unwrap());
        let s = c.stats();
        assert_eq!(s.packets_received, 4);
        assert_eq!(s.truncated, 1);
        assert_eq!(s.checksum_failures, 1);
        assert_eq!(s.foreign_sensor, 1);
        assert!(s.packets_received >= s.duplicates_dropped + s.checksum_failures);
    }

    #[test]
    fn quantization_within_half_lsb() {
        for i in -2000..2000 {
            let g = i as f64 * 0.00137;
            assert!((counts_to_g(g_to_counts(g)) - g).abs() <= G_PER_COUNT / 2.0 + 1e-15);
        }
    }

    #[test]
    fn packetize_rejects_oversized_packets() {
        let trial = crate::simgen::synthesize_trial(
            &crate::simgen::SignalConfig::default().with_duration(1.0),
            crate::ConditionClass::Normal,
            0,
        )
        .unwrap();
        assert!(matches!(packetize(&trial, 257), Err(Error::Protocol(_))));
        let opts = EmitOptions {
            samples_per_packet: 257,
            ..Default::default()
        };
        assert!(matches!(emit_stream(&trial, "127.0.0.1:9", &opts), Err(Error::Protocol(_))));
        let packets = packetize(&trial, 250).unwrap();
        assert_eq!(packets.len(), 2 * 4);
        assert_eq!(packets.last().unwrap().samples.len(), 50);
    }
}
