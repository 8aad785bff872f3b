//! Deterministic synthetic vibration campaigns.
//!
//! Each trial carries two 3-axis accelerometers (center body and the outer
//! arm holding the test blade) sampled at a fixed rate. A trial signal is a
//! sum of rotor harmonics, class-specific sidebands around the rotor
//! frequency, and white Gaussian noise. Defect components are amplified on
//! the outer sensor.

use std::f64::consts::TAU;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

pub const NUM_CLASSES: usize = 7;
pub const NUM_SENSORS: usize = 2;
pub const NUM_AXES: usize = 3;
pub const NUM_HARMONICS: usize = 5;

/// Relative amplitude of each axis (x, y, z).
pub const AXIS_GAINS: [f64; NUM_AXES] = [1.0, 0.7, 0.45];

/// Blade condition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ConditionClass {
    Normal = 0,
    #[serde(rename = "D1_CrackHigh")]
    D1CrackHigh = 1,
    #[serde(rename = "D2_CrackLow")]
    D2CrackLow = 2,
    #[serde(rename = "D3_ClipHigh")]
    D3ClipHigh = 3,
    #[serde(rename = "D4_ClipLow")]
    D4ClipLow = 4,
    #[serde(rename = "D5_LateralHigh")]
    D5LateralHigh = 5,
    #[serde(rename = "D6_LateralLow")]
    D6LateralLow = 6,
}

impl ConditionClass {
    pub const ALL: [ConditionClass; NUM_CLASSES] = [
        ConditionClass::Normal,
        ConditionClass::D1CrackHigh,
        ConditionClass::D2CrackLow,
        ConditionClass::D3ClipHigh,
        ConditionClass::D4ClipLow,
        ConditionClass::D5LateralHigh,
        ConditionClass::D6LateralLow,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            ConditionClass::Normal => "Normal",
            ConditionClass::D1CrackHigh => "D1_CrackHigh",
            ConditionClass::D2CrackLow => "D2_CrackLow",
            ConditionClass::D3ClipHigh => "D3_ClipHigh",
            ConditionClass::D4ClipLow => "D4_ClipLow",
            ConditionClass::D5LateralHigh => "D5_LateralHigh",
            ConditionClass::D6LateralLow => "D6_LateralLow",
        }
    }

    pub fn is_defect(self) -> bool {
        self != ConditionClass::Normal
    }
}

impl fmt::Display for ConditionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConditionClass {
    type Err = Error;

    /// Accepts the class name (`D3_ClipHigh`), a short alias (`d3`) or the
    /// numeric id.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Ok(id) = s.parse::<usize>() {
            return Self::from_id(id).ok_or_else(|| Error::config("class", format!("no class with id {id}")));
        }
        Self::ALL
            .iter()
            .copied()
            .find(|c| {
                c.name().eq_ignore_ascii_case(s)
                    || c.name()
                        .split('_')
                        .next()
                        .is_some_and(|short| short.eq_ignore_ascii_case(s))
            })
            .ok_or_else(|| Error::config("class", format!("unknown class `{s}`")))
    }
}

/// Spectral signature of one blade condition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    /// Amplitudes (g) of rotor harmonics 1..=5 on the center sensor.
    pub harmonics_g: [f64; NUM_HARMONICS],
    pub sideband_offset_hz: f64,
    /// Amplitude (g) of each of the two sidebands at rotor ± offset.
    pub sideband_amp_g: f64,
    /// Multiplier applied to defect components on the outer sensor.
    pub outer_gain: f64,
}

const NORMAL_HARMONICS: [f64; NUM_HARMONICS] = [0.30, 0.10, 0.05, 0.03, 0.02];
const CRACK_DELTA: [f64; NUM_HARMONICS] = [0.0, 0.12, 0.0, 0.06, 0.0];
const CLIP_DELTA: [f64; NUM_HARMONICS] = [0.20, 0.0, 0.0, 0.0, 0.03];
const LATERAL_DELTA: [f64; NUM_HARMONICS] = [0.0, 0.0, 0.10, 0.0, 0.08];
const HIGH_SEVERITY: f64 = 1.0;
const LOW_SEVERITY: f64 = 0.5;
const DEFECT_OUTER_GAIN: f64 = 2.5;

impl Signature {
    fn defect(delta: [f64; NUM_HARMONICS], severity: f64, offset_hz: f64, sideband_g: f64) -> Self {
        let mut harmonics_g = NORMAL_HARMONICS;
        for (h, d) in harmonics_g.iter_mut().zip(delta) {
            *h += severity * d;
        }
        Signature {
            harmonics_g,
            sideband_offset_hz: offset_hz,
            sideband_amp_g: severity * sideband_g,
            outer_gain: DEFECT_OUTER_GAIN,
        }
    }

    /// Built-in signature table. Severity is a scale factor on the defect
    /// perturbation, so D1 > D2, D3 > D4 and D5 > D6.
    pub fn default_for(class: ConditionClass) -> Self {
        use ConditionClass::*;
        match class {
            Normal => Signature {
                harmonics_g: NORMAL_HARMONICS,
                sideband_offset_hz: 10.0,
                sideband_amp_g: 0.0,
                outer_gain: 1.0,
            },
            D1CrackHigh => Self::defect(CRACK_DELTA, HIGH_SEVERITY, 8.0, 0.10),
            D2CrackLow => Self::defect(CRACK_DELTA, LOW_SEVERITY, 8.0, 0.10),
            D3ClipHigh => Self::defect(CLIP_DELTA, HIGH_SEVERITY, 15.0, 0.06),
            D4ClipLow => Self::defect(CLIP_DELTA, LOW_SEVERITY, 15.0, 0.06),
            D5LateralHigh => Self::defect(LATERAL_DELTA, HIGH_SEVERITY, 24.0, 0.08),
            D6LateralLow => Self::defect(LATERAL_DELTA, LOW_SEVERITY, 24.0, 0.08),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignalConfig {
    pub sample_rate_hz: f64,
    pub trial_duration_s: f64,
    pub rotor_freq_hz: f64,
    pub noise_sigma_g: f64,
    pub seed: u64,
    /// Indexed by [`ConditionClass::id`].
    pub signatures: [Signature; NUM_CLASSES],
}

impl Default for SignalConfig {
    fn default() -> Self {
        SignalConfig {
            sample_rate_hz: 800.0,
            trial_duration_s: 60.0,
            rotor_freq_hz: 120.0,
            noise_sigma_g: 0.05,
            seed: 0,
            signatures: ConditionClass::ALL.map(Signature::default_for),
        }
    }
}

impl SignalConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_duration(mut self, seconds: f64) -> Self {
        self.trial_duration_s = seconds;
        self
    }

    pub fn signature(&self, class: ConditionClass) -> &Signature {
        &self.signatures[class.id()]
    }

    /// Samples per sensor per axis.
    pub fn sample_count(&self) -> usize {
        (self.sample_rate_hz * self.trial_duration_s).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |field: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(field, format!("must be positive and finite, got {v}")))
            }
        };
        positive("sample_rate_hz", self.sample_rate_hz)?;
        positive("trial_duration_s", self.trial_duration_s)?;
        positive("rotor_freq_hz", self.rotor_freq_hz)?;
        if !(self.noise_sigma_g.is_finite() && self.noise_sigma_g >= 0.0) {
            return Err(Error::config(
                "noise_sigma_g",
                format!("must be non-negative, got {}", self.noise_sigma_g),
            ));
        }
        let n = self.sample_rate_hz * self.trial_duration_s;
        if (n - n.round()).abs() > 1e-9 * n.max(1.0) {
            return Err(Error::config(
                "trial_duration_s",
                format!("sample_rate_hz × trial_duration_s = {n} is not an integer sample count"),
            ));
        }
        if self.rotor_freq_hz >= self.sample_rate_hz / 2.0 {
            return Err(Error::config(
                "rotor_freq_hz",
                format!(
                    "{} Hz is not below the Nyquist frequency {} Hz",
                    self.rotor_freq_hz,
                    self.sample_rate_hz / 2.0
                ),
            ));
        }
        for sig in &self.signatures {
            let amps = sig.harmonics_g.iter().chain([&sig.sideband_amp_g, &sig.outer_gain]);
            if amps.clone().any(|a| !(a.is_finite() && *a >= 0.0)) {
                return Err(Error::config("signatures", "amplitudes and gains must be non-negative"));
            }
            if !sig.sideband_offset_hz.is_finite() || sig.sideband_offset_hz < 0.0 {
                return Err(Error::config("signatures", "sideband offset must be non-negative"));
            }
        }
        Ok(())
    }
}

/// One sinusoid of a synthesized channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Component {
    pub freq_hz: f64,
    pub amp_g: f64,
    pub phase: f64,
}

/// Sinusoidal components of every channel of a trial, indexed
/// `[sensor][axis]`. Phases are drawn from the trial seed.
pub fn trial_components(
    cfg: &SignalConfig,
    class: ConditionClass,
    trial_seed: u64,
) -> [[Vec<Component>; NUM_AXES]; NUM_SENSORS] {
    let sig = cfg.signature(class);
    let normal = cfg.signature(ConditionClass::Normal);
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
    rng.set_stream(0);

    std::array::from_fn(|sensor| {
        // Defect energy is amplified on the outer arm (sensor index 1).
        let gain = if sensor == 1 { sig.outer_gain } else { 1.0 };
        std::array::from_fn(|axis| {
            let axis_gain = AXIS_GAINS[axis];
            let mut comps = Vec::with_capacity(NUM_HARMONICS + 2);
            for h in 0..NUM_HARMONICS {
                let base = normal.harmonics_g[h];
                let amp = base + gain * (sig.harmonics_g[h] - base);
                comps.push(Component {
                    freq_hz: cfg.rotor_freq_hz * (h + 1) as f64,
                    amp_g: axis_gain * amp,
                    phase: rng.random::<f64>() * TAU,
                });
            }
            for side in [-1.0, 1.0] {
                comps.push(Component {
                    freq_hz: cfg.rotor_freq_hz + side * sig.sideband_offset_hz,
                    amp_g: axis_gain * gain * sig.sideband_amp_g,
                    phase: rng.random::<f64>() * TAU,
                });
            }
            comps
        })
    })
}

/// One recorded experiment: `streams[sensor][axis][sample]` in g.
#[derive(Clone, Debug, PartialEq)]
pub struct Trial {
    pub trial_id: usize,
    pub class: ConditionClass,
    pub sample_rate_hz: f64,
    pub streams: [[Vec<f64>; NUM_AXES]; NUM_SENSORS],
}

impl Trial {
    pub fn len(&self) -> usize {
        self.streams[0][0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn timestamp_us(&self, index: usize) -> u64 {
        sample_timestamp_us(index, self.sample_rate_hz)
    }

    /// Channels in window order: sensor 1 x/y/z, then sensor 2 x/y/z.
    pub fn channels(&self) -> impl Iterator<Item = &[f64]> {
        self.streams.iter().flat_map(|s| s.iter().map(Vec::as_slice))
    }

    /// Writes `t_us,sensor_id,ax_g,ay_g,az_g`, one row per sample per sensor.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_us", "sensor_id", "ax_g", "ay_g", "az_g"])?;
        for i in 0..self.len() {
            let t = self.timestamp_us(i).to_string();
            for (s, axes) in self.streams.iter().enumerate() {
                w.write_record([
                    t.clone(),
                    (s + 1).to_string(),
                    axes[0][i].to_string(),
                    axes[1][i].to_string(),
                    axes[2][i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn sample_timestamp_us(index: usize, sample_rate_hz: f64) -> u64 {
    (index as f64 * 1e6 / sample_rate_hz).round() as u64
}

/// Synthesizes one trial. Deterministic in `(cfg, class, trial_seed)`.
pub fn synthesize_trial(cfg: &SignalConfig, class: ConditionClass, trial_seed: u64) -> Result<Trial> {
    cfg.validate()?;
    let n = cfg.sample_count();
    let comps = trial_components(cfg, class, trial_seed);
    let noise = Normal::new(0.0, cfg.noise_sigma_g).map_err(|e| Error::config("noise_sigma_g", e.to_string()))?;
    let dt = 1.0 / cfg.sample_rate_hz;

    let streams = std::array::from_fn(|sensor| {
        std::array::from_fn(|axis| {
            // Each channel draws noise from its own stream so the first k
            // samples do not depend on the trial duration.
            let mut rng = ChaCha8Rng::seed_from_u64(trial_seed);
            rng.set_stream(1 + (sensor * NUM_AXES + axis) as u64);
            let channel = &comps[sensor][axis];
            (0..n)
                .map(|i| {
                    let t = i as f64 * dt;
                    let clean: f64 = channel
                        .iter()
                        .filter(|c| c.amp_g != 0.0)
                        .map(|c| c.amp_g * (TAU * c.freq_hz * t + c.phase).sin())
                        .sum();
                    let e = if cfg.noise_sigma_g > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    clean + e
                })
                .collect()
        })
    });

    Ok(Trial {
        trial_id: 0,
        class,
        sample_rate_hz: cfg.sample_rate_hz,
        streams,
    })
}

/// Trial composition of the campaign: 8 normal, 4 high-severity cracks and
/// 3 of each remaining defect, 27 in total.
pub const CAMPAIGN_SCHEDULE: [(ConditionClass, usize); NUM_CLASSES] = [
    (ConditionClass::Normal, 8),
    (ConditionClass::D1CrackHigh, 4),
    (ConditionClass::D2CrackLow, 3),
    (ConditionClass::D3ClipHigh, 3),
    (ConditionClass::D4ClipLow, 3),
    (ConditionClass::D5LateralHigh, 3),
    (ConditionClass::D6LateralLow, 3),
];

pub fn campaign_classes() -> Vec<ConditionClass> {
    CAMPAIGN_SCHEDULE
        .iter()
        .flat_map(|&(c, k)| std::iter::repeat_n(c, k))
        .collect()
}

/// Synthesizes the full campaign; trial `i` uses seed `cfg.seed + i`.
pub fn synthesize_campaign(cfg: &SignalConfig) -> Result<Vec<Trial>> {
    cfg.validate()?;
    let classes = campaign_classes();
    par::map_range(classes.len(), |i| {
        let mut trial = synthesize_trial(cfg, classes[i], cfg.seed.wrapping_add(i as u64))?;
        trial.trial_id = i;
        Ok(trial)
    })
    .into_iter()
    .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub trial_id: usize,
    pub class: ConditionClass,
    pub file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CampaignManifest {
    pub seed: u64,
    pub sample_rate_hz: f64,
    pub trial_duration_s: f64,
    pub trials: Vec<ManifestEntry>,
}

impl CampaignManifest {
    pub const FILE_NAME: &'static str = "manifest.json";

    pub fn load(dir: &Path) -> Result<Self> {
        let file = File::open(dir.join(Self::FILE_NAME))?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Writes one CSV per trial plus `manifest.json` into `dir`.
pub fn write_campaign(dir: &Path, cfg: &SignalConfig, trials: &[Trial]) -> Result<CampaignManifest> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(trials.len());
    for trial in trials {
        let file = format!("trial_{:03}.csv", trial.trial_id);
        trial.write_csv(BufWriter::new(File::create(dir.join(&file))?))?;
        entries.push(ManifestEntry {
            trial_id: trial.trial_id,
            class: trial.class,
            file,
        });
    }
    let manifest = CampaignManifest {
        seed: cfg.seed,
        sample_rate_hz: cfg.sample_rate_hz,
        trial_duration_s: cfg.trial_duration_s,
        trials: entries,
    };
    let mut out = BufWriter::new(File::create(dir.join(CampaignManifest::FILE_NAME))?);
    serde_json::to_writer_pretty(&mut out, &manifest)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(manifest)
}
