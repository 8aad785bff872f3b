//! Windowing and feature extraction.
//!
//! A feature vector is laid out as
//!
//! ```text
//! [ STFT magnitudes: 6 channels × frames × bins (frame-major per channel) ]
//! [ per channel: 4 level-2 WPT energies, 8 level-3 WPT energies,
//!   spectral centroid, spectral skewness ]                  (6 × 14 = 84)
//! ```
//!
//! `stft_len` marks the boundary between the two blocks. The trailing block
//! has the same width for every aggregation interval.

use std::io::{Read, Write};
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::simgen::{sample_timestamp_us, ConditionClass, Trial, NUM_AXES, NUM_SENSORS};
use crate::wire::Reassembled;

pub const NUM_CHANNELS: usize = NUM_SENSORS * NUM_AXES;
pub const WPT_FEATURES: usize = 12;
pub const NON_STFT_PER_CHANNEL: usize = WPT_FEATURES + 2;
pub const NON_STFT_LEN: usize = NUM_CHANNELS * NON_STFT_PER_CHANNEL;

/// Aggregation intervals (samples per window) of the benchmark grid.
pub const INTERVALS: [usize; 7] = [200, 400, 800, 1200, 1600, 4000, 8000];

/// Six time-aligned channels of one recording (sensor 1 x/y/z, sensor 2
/// x/y/z), with an optional validity mask for slots lost in transit.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignedStreams {
    pub trial_id: usize,
    pub label: ConditionClass,
    pub sample_rate_hz: f64,
    pub channels: Vec<Vec<f64>>,
    /// `None` means every slot is valid.
    pub valid: Option<Vec<bool>>,
}

impl AlignedStreams {
    pub fn from_trial(trial: &Trial) -> Self {
        AlignedStreams {
            trial_id: trial.trial_id,
            label: trial.class,
            sample_rate_hz: trial.sample_rate_hz,
            channels: trial.channels().map(<[f64]>::to_vec).collect(),
            valid: None,
        }
    }

    /// Builds streams from reassembled sensors 1 and 2. Gap slots are zero
    /// and marked invalid.
    pub fn from_reassembled(r: &Reassembled, label: ConditionClass, trial_id: usize, sample_rate_hz: f64) -> Result<Self> {
        if r.streams.len() != NUM_SENSORS {
            return Err(Error::Shape(format!(
                "expected {NUM_SENSORS} sensor streams, got {}",
                r.streams.len()
            )));
        }
        let len = r.streams[0].samples.len();
        let mut channels = vec![Vec::with_capacity(len); NUM_CHANNELS];
        let mut valid = vec![true; len];
        for (s, stream) in r.streams.iter().enumerate() {
            for (i, sample) in stream.samples.iter().enumerate() {
                match sample {
                    Some(xyz) => {
                        for a in 0..NUM_AXES {
                            channels[s * NUM_AXES + a].push(xyz[a]);
                        }
                    }
                    None => {
                        valid[i] = false;
                        for a in 0..NUM_AXES {
                            channels[s * NUM_AXES + a].push(0.0);
                        }
                    }
                }
            }
        }
        let valid = if valid.iter().all(|&v| v) { None } else { Some(valid) };
        Ok(AlignedStreams {
            trial_id,
            label,
            sample_rate_hz,
            channels,
            valid,
        })
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Reads the `t_us,sensor_id,ax_g,ay_g,az_g` trial format. Slots missing
    /// for either sensor become gaps.
    pub fn read_csv<R: std::io::Read>(input: R, label: ConditionClass, trial_id: usize, sample_rate_hz: f64) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let mut rows: Vec<(u64, u8, [f64; NUM_AXES])> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Shape(format!("trial csv row has {} fields", rec.len())));
            let parse_f = |i: usize| -> Result<f64> {
                field(i)?.trim().parse().map_err(|e| Error::Shape(format!("bad number in column {i}: {e}")))
            };
            let t: u64 = field(0)?.trim().parse().map_err(|e| Error::Shape(format!("bad t_us: {e}")))?;
            let sensor: u8 = field(1)?.trim().parse().map_err(|e| Error::Shape(format!("bad sensor_id: {e}")))?;
            if !(1..=NUM_SENSORS as u8).contains(&sensor) {
                return Err(Error::Shape(format!("sensor_id {sensor} out of range")));
            }
            rows.push((t, sensor, [parse_f(2)?, parse_f(3)?, parse_f(4)?]));
        }
        let base = rows.iter().map(|r| r.0).min().unwrap_or(0);
        let slot = |t: u64| ((t - base) as f64 * sample_rate_hz / 1e6).round() as usize;
        let len = rows.iter().map(|r| slot(r.0) + 1).max().unwrap_or(0);
        let mut channels = vec![vec![0.0; len]; NUM_CHANNELS];
        let mut seen = vec![[false; NUM_SENSORS]; len];
        for (t, sensor, xyz) in rows {
            let i = slot(t);
            let s = sensor as usize - 1;
            seen[i][s] = true;
            for a in 0..NUM_AXES {
                channels[s * NUM_AXES + a][i] = xyz[a];
            }
        }
        let valid: Vec<bool> = seen.iter().map(|s| s.iter().all(|&v| v)).collect();
        let valid = if valid.iter().all(|&v| v) { None } else { Some(valid) };
        Ok(AlignedStreams {
            trial_id,
            label,
            sample_rate_hz,
            channels,
            valid,
        })
    }

    /// Writes valid slots in the trial CSV format, timestamps starting at
    /// `base_timestamp_us`.
    pub fn write_csv<W: Write>(&self, out: W, base_timestamp_us: u64) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_us", "sensor_id", "ax_g", "ay_g", "az_g"])?;
        for i in 0..self.len() {
            if self.valid.as_ref().is_some_and(|v| !v[i]) {
                continue;
            }
            let t = (base_timestamp_us + sample_timestamp_us(i, self.sample_rate_hz)).to_string();
            for s in 0..NUM_SENSORS {
                let c = |a: usize| self.channels[s * NUM_AXES + a][i].to_string();
                w.write_record([t.clone(), (s + 1).to_string(), c(0), c(1), c(2)])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Reads every trial listed in a campaign directory's manifest.
pub fn load_campaign(dir: &std::path::Path) -> Result<Vec<AlignedStreams>> {
    let manifest = crate::simgen::CampaignManifest::load(dir)?;
    let load = |e: &crate::simgen::ManifestEntry| {
        let f = std::fs::File::open(dir.join(&e.file))?;
        AlignedStreams::read_csv(std::io::BufReader::new(f), e.class, e.trial_id, manifest.sample_rate_hz)
    };
    par::map_slice(&manifest.trials, load).into_iter().collect()
}

/// One aggregation interval of six channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub n_samples: usize,
    pub channels: Vec<Vec<f64>>,
    pub label: ConditionClass,
    pub trial_id: usize,
    pub window_index: usize,
}

/// Cuts consecutive non-overlapping windows of `n_samples`.
///
/// Windows touching a gap are dropped when `drop_gapped` is set; otherwise
/// gap slots contribute their zero fill. `window_index` is the position in
/// the stream, so dropped windows leave holes in the numbering.
pub fn make_windows(streams: &AlignedStreams, n_samples: usize, drop_gapped: bool) -> Vec<Window> {
    let len = streams.len();
    if n_samples == 0 || len < n_samples {
        log::warn!(
            "trial {}: stream of {len} samples is shorter than the {n_samples}-sample interval; no windows",
            streams.trial_id
        );
        return Vec::new();
    }
    (0..len / n_samples)
        .filter(|&k| {
            !drop_gapped
                || streams
                    .valid
                    .as_ref()
                    .is_none_or(|v| v[k * n_samples..(k + 1) * n_samples].iter().all(|&ok| ok))
        })
        .map(|k| Window {
            n_samples,
            channels: streams
                .channels
                .iter()
                .map(|c| c[k * n_samples..(k + 1) * n_samples].to_vec())
                .collect(),
            label: streams.label,
            trial_id: streams.trial_id,
            window_index: k,
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum WindowFn {
    #[default]
    Rectangular,
    /// Periodic Hann.
    Hann,
}

impl WindowFn {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowFn::Rectangular => vec![1.0; len],
            WindowFn::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (std::f64::consts::TAU * i as f64 / len as f64).cos())
                .collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StftParams {
    pub window_len: usize,
    pub hop: usize,
    pub window_fn: WindowFn,
}

impl Default for StftParams {
    fn default() -> Self {
        StftParams {
            window_len: 50,
            hop: 50,
            window_fn: WindowFn::Rectangular,
        }
    }
}

impl StftParams {
    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        if len < self.window_len || self.hop == 0 {
            0
        } else {
            (len - self.window_len) / self.hop + 1
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window_len == 0 || self.hop == 0 || self.hop > self.window_len {
            return Err(Error::Shape(format!(
                "STFT needs 0 < hop ≤ window_len, got hop {} window {}",
                self.hop, self.window_len
            )));
        }
        Ok(())
    }
}

fn forward_fft(len: usize) -> Arc<dyn Fft<f64>> {
    FftPlanner::new().plan_fft_forward(len)
}

fn magnitudes_with<'b>(
    fft: &dyn Fft<f64>,
    frame: impl Iterator<Item = f64>,
    bins: usize,
    buf: &'b mut Vec<Complex<f64>>,
) -> impl Iterator<Item = f64> + 'b {
    buf.clear();
    buf.extend(frame.map(|x| Complex::new(x, 0.0)));
    fft.process(buf);
    buf[..bins].iter().map(|c| c.norm())
}

/// STFT magnitude matrix, `frames × (window_len/2 + 1)`.
pub fn stft_magnitudes(channel: &[f64], p: &StftParams) -> Result<Array2<f64>> {
    p.validate()?;
    if channel.len() < p.window_len {
        return Err(Error::Shape(format!(
            "channel of {} samples is shorter than the STFT window {}",
            channel.len(),
            p.window_len
        )));
    }
    let fft = forward_fft(p.window_len);
    stft_with(fft.as_ref(), channel, p)
}

fn stft_with(fft: &dyn Fft<f64>, channel: &[f64], p: &StftParams) -> Result<Array2<f64>> {
    let frames = p.frames(channel.len());
    let bins = p.bins();
    let win = p.window_fn.coefficients(p.window_len);
    let mut out = Array2::zeros((frames, bins));
    let mut buf = Vec::with_capacity(p.window_len);
    for (f, mut row) in out.rows_mut().into_iter().enumerate() {
        let start = f * p.hop;
        let frame = channel[start..start + p.window_len].iter().zip(&win).map(|(x, w)| x * w);
        for (dst, m) in row.iter_mut().zip(magnitudes_with(fft, frame, bins, &mut buf)) {
            *dst = m;
        }
    }
    Ok(out)
}

fn haar_split(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    x.chunks_exact(2).map(|p| ((p[0] + p[1]) * s, (p[0] - p[1]) * s)).unzip()
}

/// Haar wavelet packet node energies: the 4 level-2 nodes followed by the
/// 8 level-3 nodes, each level ordered by frequency band (lowest first).
///
/// Packet nodes are produced in natural order (approximation branch first);
/// natural index `g` of frequency band `f` is the Gray code `f ^ (f >> 1)`.
pub fn wpt_energies(channel: &[f64]) -> Result<[f64; WPT_FEATURES]> {
    if channel.is_empty() || channel.len() % 8 != 0 {
        return Err(Error::Shape(format!(
            "wavelet packet depth 3 needs a length divisible by 8, got {}",
            channel.len()
        )));
    }
    let mut level = vec![channel.to_vec()];
    let mut energies = [0.0; WPT_FEATURES];
    for depth in 1..=3 {
        level = level
            .iter()
            .flat_map(|node| {
                let (a, d) = haar_split(node);
                [a, d]
            })
            .collect();
        let offset = match depth {
            2 => 0,
            3 => 4,
            _ => continue,
        };
        for f in 0..level.len() {
            let node = &level[f ^ (f >> 1)];
            energies[offset + f] = node.iter().map(|c| c * c).sum();
        }
    }
    Ok(energies)
}

/// One-sided magnitude spectrum of the whole channel.
pub fn one_sided_magnitudes(channel: &[f64]) -> Vec<f64> {
    if channel.is_empty() {
        return Vec::new();
    }
    let fft = forward_fft(channel.len());
    let mut buf = Vec::with_capacity(channel.len());
    magnitudes_with(fft.as_ref(), channel.iter().copied(), channel.len() / 2 + 1, &mut buf).collect()
}

/// Centroid, spread and skewness of a magnitude spectrum with bins spaced
/// `bin_hz` apart. Empty or all-zero spectra give zeros; a spread below a
/// billionth of a bin gives zero skewness.
pub fn spectral_moments(mags: &[f64], bin_hz: f64) -> (f64, f64, f64) {
    let total: f64 = mags.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return (0.0, 0.0, 0.0);
    }
    let freq = |i: usize| i as f64 * bin_hz;
    let centroid = mags.iter().enumerate().map(|(i, m)| freq(i) * m).sum::<f64>() / total;
    let (mut m2, mut m3) = (0.0, 0.0);
    for (i, m) in mags.iter().enumerate() {
        let p = m / total;
        let d = freq(i) - centroid;
        m2 += p * d * d;
        m3 += p * d * d * d;
    }
    let spread = m2.sqrt();
    let skew = if spread <= 1e-9 * bin_hz { 0.0 } else { m3 / spread.powi(3) };
    (centroid, spread, skew)
}

/// Magnitude-weighted mean frequency (Hz) of the full-window spectrum.
pub fn spectral_centroid(channel: &[f64], sample_rate_hz: f64) -> f64 {
    if channel.is_empty() {
        return 0.0;
    }
    spectral_moments(&one_sided_magnitudes(channel), sample_rate_hz / channel.len() as f64).0
}

/// Third standardized moment of the magnitude-weighted frequency
/// distribution of the full-window spectrum.
pub fn spectral_skewness(channel: &[f64], sample_rate_hz: f64) -> f64 {
    if channel.is_empty() {
        return 0.0;
    }
    spectral_moments(&one_sided_magnitudes(channel), sample_rate_hz / channel.len() as f64).2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub stft_len: usize,
    pub label: ConditionClass,
    pub trial_id: usize,
    pub window_index: usize,
    pub n_samples: usize,
}

impl FeatureVector {
    pub fn stft_block(&self) -> &[f64] {
        &self.values[..self.stft_len]
    }

    pub fn non_stft_block(&self) -> &[f64] {
        &self.values[self.stft_len..]
    }
}

/// `(stft_len, total_len)` of the extractor output for `n_samples`.
pub fn feature_len(n_samples: usize, p: &StftParams) -> (usize, usize) {
    let stft = NUM_CHANNELS * p.frames(n_samples) * p.bins();
    (stft, stft + NON_STFT_LEN)
}

/// Extracts the feature vector of one window.
pub fn extract(window: &Window, p: &StftParams, sample_rate_hz: f64) -> Result<FeatureVector> {
    p.validate()?;
    if window.channels.len() != NUM_CHANNELS {
        return Err(Error::Shape(format!(
            "window has {} channels, expected {NUM_CHANNELS}",
            window.channels.len()
        )));
    }
    if window.channels.iter().any(|c| c.len() != window.n_samples) {
        return Err(Error::Shape("window channels differ in length".into()));
    }
    if window.n_samples < p.window_len {
        return Err(Error::Shape(format!(
            "window of {} samples is shorter than the STFT window {}",
            window.n_samples, p.window_len
        )));
    }
    let (stft_len, total) = feature_len(window.n_samples, p);
    let mut values = Vec::with_capacity(total);
    let stft_fft = forward_fft(p.window_len);
    for c in &window.channels {
        values.extend(stft_with(stft_fft.as_ref(), c, p)?.iter());
    }
    let bin_hz = sample_rate_hz / window.n_samples as f64;
    for c in &window.channels {
        values.extend_from_slice(&wpt_energies(c)?);
        let (centroid, _, skew) = spectral_moments(&one_sided_magnitudes(c), bin_hz);
        values.push(centroid);
        values.push(skew);
    }
    debug_assert_eq!(values.len(), total);
    Ok(FeatureVector {
        values,
        stft_len,
        label: window.label,
        trial_id: window.trial_id,
        window_index: window.window_index,
        n_samples: window.n_samples,
    })
}

pub fn extract_batch(windows: &[Window], p: &StftParams, sample_rate_hz: f64) -> Result<Vec<FeatureVector>> {
    par::map_slice(windows, |w| extract(w, p, sample_rate_hz)).into_iter().collect()
}

/// Feature CSV: `label,trial_id,window_index,f0..fK`.
pub fn write_feature_csv<W: Write>(rows: &[FeatureVector], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let width = rows.first().map_or(0, |r| r.values.len());
    let mut header = vec!["label".to_string(), "trial_id".into(), "window_index".into()];
    header.extend((0..width).map(|i| format!("f{i}")));
    w.write_record(&header)?;
    for r in rows {
        if r.values.len() != width {
            return Err(Error::Shape("feature rows differ in width".into()));
        }
        let mut rec = vec![r.label.name().to_string(), r.trial_id.to_string(), r.window_index.to_string()];
        rec.extend(r.values.iter().map(f64::to_string));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_feature_csv<R: std::io::Read>(input: R) -> Result<Vec<FeatureVector>> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 3 {
            return Err(Error::Shape("feature csv row too short".into()));
        }
        let label: ConditionClass = rec[0].parse()?;
        let int = |s: &str| s.parse::<usize>().map_err(|e| Error::Shape(e.to_string()));
        let values = rec
            .iter()
            .skip(3)
            .map(|s| s.parse::<f64>().map_err(|e| Error::Shape(e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        let stft_len = values.len().saturating_sub(NON_STFT_LEN);
        rows.push(FeatureVector {
            n_samples: 0,
            stft_len,
            label,
            trial_id: int(&rec[1])?,
            window_index: int(&rec[2])?,
            values,
        });
    }
    Ok(rows)
}

/// Binary rows: `label id, trial_id, window_index, values...`, all
/// little-endian f64.
pub fn write_feature_binary<W: Write>(rows: &[FeatureVector], mut out: W) -> Result<()> {
    for r in rows {
        for v in [r.label.id() as f64, r.trial_id as f64, r.window_index as f64]
            .into_iter()
            .chain(r.values.iter().copied())
        {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_feature_binary<R: Read>(mut input: R, width: usize) -> Result<Vec<FeatureVector>> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let row_bytes = (width + 3) * 8;
    if row_bytes == 0 || bytes.len() % row_bytes != 0 {
        return Err(Error::Shape(format!("{} bytes is not a whole number of {width}-wide rows", bytes.len())));
    }
    bytes
        .chunks_exact(row_bytes)
        .map(|row| {
            let v: Vec<f64> = row.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
            let label = ConditionClass::from_id(v[0] as usize).ok_or_else(|| Error::Shape(format!("bad label {}", v[0])))?;
            Ok(FeatureVector {
                values: v[3..].to_vec(),
                stft_len: width.saturating_sub(NON_STFT_LEN),
                label,
                trial_id: v[1] as usize,
                window_index: v[2] as usize,
                n_samples: 0,
            })
        })
        .collect()
}
