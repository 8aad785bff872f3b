use std::net::UdpSocket;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use uavcm::eval::{self, SweepGrid, SweepOptions};
use uavcm::features::{self, AlignedStreams, StftParams, WindowFn, INTERVALS};
use uavcm::models::ModelName;
use uavcm::reduce::{ReductionMode, ALL_COMPONENTS, STFT_COMPONENTS};
use uavcm::simgen::{self, ConditionClass, SignalConfig};
use uavcm::wire::{self, CaptureOptions, Collector, EmitOptions, Pacing};

const DEFAULT_OUT: &str = "uavcm-out";

#[derive(Parser, Debug)]
#[command(name = "uavcm", version, about = "Vibration condition-monitoring benchmark pipeline")]
struct Cli {
    /// JSON file with default values; flags take precedence
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for data-parallel stages (default: all cores)
    #[arg(long, short = 'j', global = true, value_parser = parse_positive)]
    jobs: Option<usize>,

    /// Increase log verbosity (-v info, -vv debug)
    #[arg(long, short = 'v', global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthesize a campaign and write one CSV per trial plus a manifest
    Generate(GenerateArgs),
    /// Send one synthesized trial as UDP telemetry
    Stream(StreamArgs),
    /// Receive UDP telemetry and write the reassembled trial CSV
    Capture(CaptureArgs),
    /// Window a campaign and write its feature vectors
    Extract(ExtractArgs),
    /// Run the interval × reduction × model grid and write reports
    Sweep(SweepArgs),
    /// Re-emit reports from saved sweep records
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct CampaignArgs {
    /// Campaign seed
    #[arg(long)]
    seed: Option<u64>,

    /// Trial duration in seconds
    #[arg(long, value_name = "SECONDS")]
    duration: Option<f64>,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[command(flatten)]
    campaign: CampaignArgs,

    /// Output directory
    #[arg(long, env = "UAVCM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct StreamArgs {
    #[command(flatten)]
    campaign: CampaignArgs,

    /// Collector address
    #[arg(long, default_value = "127.0.0.1:9000")]
    dest: String,

    /// Campaign trial to send (0-26)
    #[arg(long, default_value_t = 0)]
    trial: usize,

    #[arg(long, default_value_t = 250, value_parser = parse_positive)]
    samples_per_packet: usize,

    /// Pace packets to the sensor's sample rate
    #[arg(long, conflicts_with = "pps")]
    realtime: bool,

    /// Fixed packet rate
    #[arg(long)]
    pps: Option<f64>,

    /// Probability of sending a packet twice
    #[arg(long, default_value_t = 0.0)]
    duplicate_rate: f64,
}

#[derive(Args, Debug)]
struct CaptureArgs {
    /// Address to listen on
    #[arg(long, default_value = "0.0.0.0:9000")]
    listen: String,

    /// Sensor ids to accept
    #[arg(long, value_delimiter = ',', default_value = "1,2")]
    sensors: Vec<u8>,

    /// Sample rate of the incoming streams in Hz
    #[arg(long, default_value_t = 800.0)]
    rate: f64,

    /// Condition label recorded for the captured trial
    #[arg(long, default_value = "Normal")]
    label: ConditionClass,

    #[arg(long, default_value_t = 0)]
    trial_id: usize,

    /// Seconds of silence that end the capture
    #[arg(long, default_value_t = 2.0)]
    idle_timeout: f64,

    /// Hard limit in seconds
    #[arg(long)]
    max_duration: Option<f64>,

    #[arg(long)]
    max_packets: Option<u64>,

    /// Output directory
    #[arg(long, env = "UAVCM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct StftArgs {
    /// STFT frame length in samples
    #[arg(long, default_value_t = 50, value_parser = parse_positive)]
    stft_window: usize,

    /// STFT hop in samples
    #[arg(long, default_value_t = 50, value_parser = parse_positive)]
    stft_hop: usize,

    /// Use a periodic Hann window instead of a rectangular one
    #[arg(long)]
    hann: bool,

    /// Keep windows that overlap transmission gaps (gaps read as zeros)
    #[arg(long)]
    keep_gapped: bool,
}

impl StftArgs {
    fn params(&self) -> StftParams {
        StftParams {
            window_len: self.stft_window,
            hop: self.stft_hop,
            window_fn: if self.hann { WindowFn::Hann } else { WindowFn::Rectangular },
        }
    }
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Campaign directory (default: the output directory)
    #[arg(long)]
    campaign: Option<PathBuf>,

    /// Samples per window
    #[arg(long, default_value_t = 4000, value_parser = parse_positive)]
    interval: usize,

    /// Feature file (default: <out>/features_<interval>.csv)
    #[arg(long)]
    output: Option<PathBuf>,

    /// Write little-endian f64 rows instead of CSV
    #[arg(long)]
    binary: bool,

    #[command(flatten)]
    stft: StftArgs,

    /// Output directory
    #[arg(long, env = "UAVCM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    campaign: CampaignArgs,

    /// Read trials from a campaign directory instead of synthesizing them
    #[arg(long, value_name = "DIR")]
    campaign_dir: Option<PathBuf>,

    /// Reduction families: none, stft-pca, all-pca
    #[arg(long, value_delimiter = ',', value_parser = ["none", "stft-pca", "all-pca"])]
    mode: Vec<String>,

    /// PCA component counts applied to every reduced family
    #[arg(long, value_delimiter = ',', value_parser = parse_positive)]
    components: Vec<usize>,

    /// `all` or a comma list of samples per window
    #[arg(long, value_parser = parse_intervals)]
    intervals: Option<Intervals>,

    /// `all` or a comma list of svc, knn, dt, rf
    #[arg(long, value_parser = parse_models)]
    models: Option<Models>,

    /// Report reference feature counts for unreduced vectors
    #[arg(long)]
    paper_arithmetic: bool,

    /// Keep whole trials on one side of the train/test split
    #[arg(long)]
    split_by_trial: bool,

    #[command(flatten)]
    stft: StftArgs,

    /// Output directory
    #[arg(long, env = "UAVCM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReportArgs {
    /// Saved records (sweep.json or sweep.csv)
    #[arg(long)]
    records: PathBuf,

    /// Baselines use reference feature counts
    #[arg(long)]
    paper_arithmetic: bool,

    /// Sample rate the records were produced at
    #[arg(long, default_value_t = 800.0)]
    rate: f64,

    #[command(flatten)]
    stft: StftArgs,

    /// Output directory
    #[arg(long, env = "UAVCM_OUT_DIR")]
    out: Option<PathBuf>,
}

#[derive(Clone, Debug)]
struct Intervals(Vec<usize>);

#[derive(Clone, Debug)]
struct Models(Vec<ModelName>);

fn parse_positive(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(format!("`{s}`: {e}")),
    }
}

fn parse_intervals(s: &str) -> Result<Intervals, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Intervals(INTERVALS.to_vec()));
    }
    s.split(',').map(parse_positive).collect::<Result<_, _>>().map(Intervals)
}

fn parse_models(s: &str) -> Result<Models, String> {
    if s.eq_ignore_ascii_case("all") {
        return Ok(Models(ModelName::ALL.to_vec()));
    }
    s.split(',')
        .map(|m| m.parse::<ModelName>().map_err(|e| e.to_string()))
        .collect::<Result<_, _>>()
        .map(Models)
}

/// Defaults read from `--config`.
#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct FileConfig {
    seed: Option<u64>,
    duration: Option<f64>,
    out_dir: Option<PathBuf>,
    jobs: Option<usize>,
    modes: Option<Vec<String>>,
    components: Option<Vec<usize>>,
    intervals: Option<Vec<usize>>,
    models: Option<Vec<String>>,
    paper_arithmetic: Option<bool>,
    split_by_trial: Option<bool>,
}

impl FileConfig {
    fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else { return Ok(Self::default()) };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| usage(format!("config {}: {e}", path.display())))
    }
}

/// Invalid invocation detected after argument parsing; exits with status 2.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

struct Ctx {
    file: FileConfig,
}

impl Ctx {
    fn out_dir(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.file.out_dir.clone())
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }

    fn signal(&self, args: &CampaignArgs) -> anyhow::Result<SignalConfig> {
        let cfg = SignalConfig::default()
            .with_seed(args.seed.or(self.file.seed).unwrap_or(42))
            .with_duration(args.duration.or(self.file.duration).unwrap_or(60.0));
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

fn print_json<T: serde::Serialize>(v: &T) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn generate(ctx: &Ctx, args: GenerateArgs) -> anyhow::Result<()> {
    let cfg = ctx.signal(&args.campaign)?;
    let dir = ctx.out_dir(args.out);
    let trials = simgen::synthesize_campaign(&cfg)?;
    let manifest = simgen::write_campaign(&dir, &cfg, &trials)?;
    println!("wrote {} trials to {}", manifest.trials.len(), dir.display());
    Ok(())
}

fn stream(ctx: &Ctx, args: StreamArgs) -> anyhow::Result<()> {
    let cfg = ctx.signal(&args.campaign)?;
    let classes = simgen::campaign_classes();
    let Some(&class) = classes.get(args.trial) else {
        return Err(usage(format!("--trial must be below {}", classes.len())));
    };
    if !(0.0..=1.0).contains(&args.duplicate_rate) {
        return Err(usage("--duplicate-rate must lie in [0, 1]"));
    }
    let mut trial = simgen::synthesize_trial(&cfg, class, cfg.seed + args.trial as u64)?;
    trial.trial_id = args.trial;
    let pacing = match (args.realtime, args.pps) {
        (true, _) => Pacing::Realtime,
        (false, Some(p)) if p > 0.0 => Pacing::PacketsPerSecond(p),
        (false, Some(p)) => return Err(usage(format!("--pps must be positive, got {p}"))),
        (false, None) => Pacing::AsFastAsPossible,
    };
    let opts = EmitOptions {
        samples_per_packet: args.samples_per_packet,
        pacing,
        duplicate_rate: args.duplicate_rate,
        seed: cfg.seed,
    };
    let stats = wire::emit_stream(&trial, args.dest.as_str(), &opts)?;
    print_json(&stats)
}

fn capture(ctx: &Ctx, args: CaptureArgs) -> anyhow::Result<()> {
    let socket = UdpSocket::bind(&args.listen).with_context(|| format!("binding {}", args.listen))?;
    log::info!("listening on {}", socket.local_addr()?);
    let collector = Arc::new(RwLock::new(Collector::new(args.sensors.iter().copied(), args.rate)));
    let secs = |s: f64, flag: &str| {
        Duration::try_from_secs_f64(s).map_err(|_| usage(format!("{flag} must be a non-negative number of seconds")))
    };
    let opts = CaptureOptions {
        idle_timeout: secs(args.idle_timeout, "--idle-timeout")?,
        max_duration: args.max_duration.map(|s| secs(s, "--max-duration")).transpose()?,
        max_packets: args.max_packets,
    };
    wire::capture(&socket, &collector, &opts)?;
    let reassembled = collector.read().expect("collector lock poisoned").finish();
    let streams = AlignedStreams::from_reassembled(&reassembled, args.label, args.trial_id, args.rate)?;
    let dir = ctx.out_dir(args.out);
    std::fs::create_dir_all(&dir)?;
    let path = dir.join(format!("trial_{:03}.csv", args.trial_id));
    streams.write_csv(
        std::io::BufWriter::new(std::fs::File::create(&path)?),
        reassembled.base_timestamp_us,
    )?;
    print_json(&serde_json::json!({
        "file": path,
        "samples": streams.len(),
        "gaps": reassembled.gaps.len(),
        "stats": reassembled.stats,
    }))
}

fn extract(ctx: &Ctx, args: ExtractArgs) -> anyhow::Result<()> {
    let p = args.stft.params();
    p.validate().map_err(|e| usage(e.to_string()))?;
    let out = ctx.out_dir(args.out);
    let campaign_dir = args.campaign.unwrap_or_else(|| out.clone());
    let campaign = features::load_campaign(&campaign_dir)
        .with_context(|| format!("loading campaign from {}", campaign_dir.display()))?;
    let windows: Vec<_> = campaign
        .iter()
        .flat_map(|s| features::make_windows(s, args.interval, !args.stft.keep_gapped))
        .collect();
    if windows.is_empty() {
        bail!("no complete {}-sample windows in the campaign", args.interval);
    }
    let rate = campaign[0].sample_rate_hz;
    let rows = features::extract_batch(&windows, &p, rate)?;
    let ext = if args.binary { "bin" } else { "csv" };
    let path = args
        .output
        .unwrap_or_else(|| out.join(format!("features_{}.{ext}", args.interval)));
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let file = std::io::BufWriter::new(std::fs::File::create(&path)?);
    if args.binary {
        features::write_feature_binary(&rows, file)?;
    } else {
        features::write_feature_csv(&rows, file)?;
    }
    println!(
        "wrote {} feature vectors of width {} to {}",
        rows.len(),
        rows[0].values.len(),
        path.display()
    );
    Ok(())
}

fn grid_modes(families: &[String], components: &[usize]) -> anyhow::Result<Vec<ReductionMode>> {
    let mut modes = Vec::new();
    for family in families {
        let ks: Vec<usize> = match family.as_str() {
            "none" => {
                modes.push(ReductionMode::None);
                continue;
            }
            "stft-pca" if components.is_empty() => STFT_COMPONENTS.to_vec(),
            "all-pca" if components.is_empty() => ALL_COMPONENTS.to_vec(),
            "stft-pca" | "all-pca" => components.to_vec(),
            other => return Err(usage(format!("unknown reduction family `{other}`"))),
        };
        for k in ks {
            modes.push(format!("{family}:{k}").parse().map_err(|e: uavcm::Error| usage(e.to_string()))?);
        }
    }
    if modes.is_empty() {
        return Err(usage("no reduction modes selected"));
    }
    if !components.is_empty() && modes.iter().all(|m| m.components().is_none()) {
        return Err(usage("--components needs a stft-pca or all-pca mode"));
    }
    Ok(modes)
}

fn sweep(ctx: &Ctx, args: SweepArgs) -> anyhow::Result<()> {
    let file = &ctx.file;
    let families = if !args.mode.is_empty() {
        args.mode.clone()
    } else {
        file.modes
            .clone()
            .unwrap_or_else(|| vec!["none".into(), "stft-pca".into(), "all-pca".into()])
    };
    let components = if args.components.is_empty() {
        file.components.clone().unwrap_or_default()
    } else {
        args.components.clone()
    };
    if components.contains(&0) {
        return Err(usage("component counts must be at least 1"));
    }
    let models = match (&args.models, &file.models) {
        (Some(m), _) => m.0.clone(),
        (None, Some(names)) => parse_models(&names.join(",")).map_err(usage)?.0,
        (None, None) => ModelName::ALL.to_vec(),
    };
    let cfg = ctx.signal(&args.campaign)?;
    let grid = SweepGrid {
        intervals: args
            .intervals
            .map(|i| i.0)
            .or_else(|| file.intervals.clone())
            .unwrap_or_else(|| INTERVALS.to_vec()),
        modes: grid_modes(&families, &components)?,
        models,
        seeds: vec![cfg.seed],
    };
    let opts = SweepOptions {
        stft: args.stft.params(),
        split_by_trial: args.split_by_trial || file.split_by_trial.unwrap_or(false),
        drop_gapped: !args.stft.keep_gapped,
        paper_arithmetic: args.paper_arithmetic || file.paper_arithmetic.unwrap_or(false),
        jobs: None,
        ..SweepOptions::default()
    };
    grid.validate(opts.paper_arithmetic).map_err(|e| usage(e.to_string()))?;
    opts.stft.validate().map_err(|e| usage(e.to_string()))?;

    let campaign: Vec<AlignedStreams> = match &args.campaign_dir {
        Some(dir) => features::load_campaign(dir).with_context(|| format!("loading campaign from {}", dir.display()))?,
        None => simgen::synthesize_campaign(&cfg)?
            .iter()
            .map(AlignedStreams::from_trial)
            .collect(),
    };
    log::info!("sweeping {} cells over {} trials", grid.len(), campaign.len());
    let records = eval::run_sweep(&campaign, &grid, &opts)?;
    let summary = eval::summarize(&records, &opts, campaign[0].sample_rate_hz)?;
    let dir = ctx.out_dir(args.out);
    let files = eval::emit_report(&records, &summary, &dir)?;
    print!("{summary}");
    println!("records: {}", files.csv.display());
    Ok(())
}

fn report(ctx: &Ctx, args: ReportArgs) -> anyhow::Result<()> {
    let f = std::fs::File::open(&args.records).with_context(|| format!("opening {}", args.records.display()))?;
    let reader = std::io::BufReader::new(f);
    let records = match args.records.extension().and_then(|e| e.to_str()) {
        Some("csv") => eval::read_records_csv(reader)?,
        _ => eval::read_records_json(reader)?,
    };
    let opts = SweepOptions {
        stft: args.stft.params(),
        paper_arithmetic: args.paper_arithmetic || ctx.file.paper_arithmetic.unwrap_or(false),
        ..SweepOptions::default()
    };
    let summary = eval::summarize(&records, &opts, args.rate)?;
    let dir = ctx.out_dir(args.out);
    eval::emit_report(&records, &summary, &dir)?;
    print!("{summary}");
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    let jobs = cli.jobs.or(file.jobs);
    let ctx = Ctx { file };
    uavcm::par::with_jobs(jobs, move || match cli.command {
        Command::Generate(a) => generate(&ctx, a),
        Command::Stream(a) => stream(&ctx, a),
        Command::Capture(a) => capture(&ctx, a),
        Command::Extract(a) => extract(&ctx, a),
        Command::Sweep(a) => sweep(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let usage_error = e.downcast_ref::<UsageError>().is_some()
                || matches!(e.downcast_ref::<uavcm::Error>(), Some(uavcm::Error::Config { .. }));
            eprintln!("uavcm: {e:#}");
            if usage_error {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
