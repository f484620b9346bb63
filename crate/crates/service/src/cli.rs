//! The `sts` command line.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input, 3 accuracy gate
//! not met.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, IsTerminal, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use sts_core::acquisition::{assemble_trial, run_samplers_threaded, SamplerConfig};
use sts_core::classifier::{distance_matrix, evaluate, leave_one_out, ChannelMode, EvalReport, LabeledSeries};
use sts_core::pipeline::{analyze_packet, estimate_body_weight, total_load};
use sts_core::plot::emit_plot;
use sts_core::sensor::SimulatedChair;
use sts_core::synth::{generate_cohort, generate_profile, profile_to_load_curves, CohortConfig, CohortManifest};
use sts_core::wire::{self, canonical_json};
use sts_core::{Calibration, ChairGeometry, ChannelId, Mode, PerChannel, Strength, TrialMeta, TrialPacket};
use uuid::Uuid;

use crate::client::{Client, ClientError};
use crate::config::{Config, ConfigError, ConfigLayer};
use crate::device::{Device, DEFAULT_CALIBRATION_SAMPLES};

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn failure(msg: impl Into<String>) -> Self {
        Self {
            code: 1,
            message: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: msg.into(),
        }
    }

    pub fn gate(msg: impl Into<String>) -> Self {
        Self {
            code: 3,
            message: msg.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::validation(e.to_string())
    }
}

impl From<ClientError> for CliError {
    fn from(e: ClientError) -> Self {
        match e.status() {
            Some(s) if (400..500).contains(&s) => Self::validation(e.to_string()),
            _ => Self::failure(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::failure(e.to_string())
    }
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    Mode::parse(s).ok_or_else(|| format!("{s:?}: expected train or test"))
}

fn parse_channel_mode(s: &str) -> Result<ChannelMode, String> {
    match s {
        "raw" => Ok(ChannelMode::Raw),
        "with_total" => Ok(ChannelMode::WithTotal),
        _ => Err(format!("{s:?}: expected raw or with_total")),
    }
}

#[derive(Debug, Parser)]
#[command(name = "sts", version, about = "Sit-to-stand chair: ingestion service, simulated device, scoring, and classification")]
pub struct Cli {
    /// Config file of `key = value` lines (TOML).
    #[arg(long, global = true, value_name = "FILE", help_heading = "Settings")]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings that may also come from the config file or environment.
#[derive(Debug, Default, Args)]
#[command(next_help_heading = "Settings")]
struct Overrides {
    /// Listen address for `serve`; server address for clients [env: STS_ADDR] [default: 127.0.0.1:8080]
    #[arg(long, global = true, value_name = "HOST:PORT")]
    addr: Option<String>,
    /// Store directory for `serve` [env: STS_STORE] [default: sts-store]
    #[arg(long, global = true, value_name = "DIR")]
    store: Option<PathBuf>,
    /// Device sampling rate in Hz, 10 or 80 [default: 10]
    #[arg(long, global = true, value_name = "HZ")]
    rate: Option<u32>,
    /// Trial duration in seconds [default: 30]
    #[arg(long, global = true, value_name = "SECONDS")]
    duration: Option<f64>,
    /// Seated threshold as a fraction of body weight [default: 0.6]
    #[arg(long, global = true, value_name = "FRACTION")]
    seated_fraction: Option<f64>,
    /// Standing threshold as a fraction of body weight [default: 0.15]
    #[arg(long, global = true, value_name = "FRACTION")]
    standing_fraction: Option<f64>,
    /// Time a posture must persist before it counts [default: 300]
    #[arg(long, global = true, value_name = "MS")]
    dwell_ms: Option<f64>,
    /// Neighbors consulted by the classifier [default: 1]
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Sakoe-Chiba band as a fraction of series length [default: 0.1]
    #[arg(long, global = true, value_name = "FRACTION")]
    band: Option<f64>,
    /// Classifier input columns: raw or with_total [default: with_total]
    #[arg(long, global = true, value_parser = parse_channel_mode, value_name = "MODE")]
    channel_mode: Option<ChannelMode>,
    /// Seed for every random draw [default: 1]
    #[arg(long, global = true)]
    seed: Option<u64>,
}

impl Overrides {
    fn layer(&self) -> ConfigLayer {
        ConfigLayer {
            addr: self.addr.clone(),
            store: self.store.clone(),
            rate_hz: self.rate,
            duration_s: self.duration,
            seated_fraction: self.seated_fraction,
            standing_fraction: self.standing_fraction,
            dwell_ms: self.dwell_ms,
            k: self.k,
            band_fraction: self.band,
            channel_mode: self.channel_mode,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the ingestion service until interrupted.
    Serve,
    /// Simulated device operations.
    #[command(subcommand)]
    Device(DeviceCommand),
    /// Synthetic cohort operations.
    #[command(subcommand)]
    Cohort(CohortCommand),
    /// Score a trial: repetitions in 30 s and five-repetition time.
    Score(ScoreArgs),
    /// Pull trials and run DTW nearest-neighbor classification.
    Classify(ClassifyArgs),
    /// Tare and known-mass calibration of the four corners.
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Subcommand)]
enum DeviceCommand {
    /// Simulate trials on the chair and POST them to the service.
    Run(DeviceRunArgs),
}

#[derive(Debug, Subcommand)]
enum CohortCommand {
    /// Generate a labeled synthetic cohort.
    Generate(CohortArgs),
}

#[derive(Debug, Args)]
struct ServerArg {
    /// Service base URL [default: http://<addr>]
    #[arg(long, value_name = "URL")]
    server: Option<String>,
}

#[derive(Debug, Args)]
struct DeviceRunArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Number of simulated users
    #[arg(long, default_value_t = 1)]
    users: usize,
    /// Trials per user
    #[arg(long, default_value_t = 1)]
    trials: usize,
    /// Service the trials are posted to: train or test
    #[arg(long, default_value = "train", value_parser = parse_mode)]
    mode: Mode,
    /// Label attached to train trials
    #[arg(long)]
    label: Option<String>,
    /// Strength class of the simulated users: weak, moderate, strong
    #[arg(long, default_value = "moderate")]
    strength: Strength,
    /// Prefix for generated user ids
    #[arg(long, default_value = "U")]
    user_prefix: String,
}

#[derive(Debug, Args)]
struct CohortArgs {
    /// Number of users
    #[arg(long, default_value_t = 4)]
    users: usize,
    /// Trials per user
    #[arg(long, default_value_t = 3)]
    trials: usize,
    /// Comma-separated classes assigned to users in turn
    #[arg(long, default_value = "weak,moderate,strong", value_delimiter = ',')]
    classes: Vec<Strength>,
    /// The last N trials of each user go to the test service without labels
    #[arg(long, default_value_t = 0)]
    test_trials: usize,
    /// POST every trial to the service
    #[arg(long)]
    post: bool,
    #[command(flatten)]
    server: ServerArg,
    /// Write each trial envelope to DIR/<trial_id>.json
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Manifest path [default: DIR/manifest.json with --out]
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScoreArgs {
    /// Trial id (fetched from the service) or path to an envelope file
    trial: String,
    #[command(flatten)]
    server: ServerArg,
    /// Resampling grid in Hz [default: the trial's nominal rate]
    #[arg(long, value_name = "HZ")]
    grid_hz: Option<f64>,
    /// Body weight for the thresholds [default: 95th percentile of total load]
    #[arg(long, value_name = "KG")]
    body_weight: Option<f64>,
    /// Write an SVG plot of the aligned trial
    #[arg(long, value_name = "FILE")]
    plot: Option<PathBuf>,
    /// Write the aligned trial as CSV
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
enum Target {
    User,
    Label,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    #[command(flatten)]
    server: ServerArg,
    /// Read envelope files from DIR instead of the service
    #[arg(long, value_name = "DIR")]
    from: Option<PathBuf>,
    /// Leave-one-out over the training trials instead of train/test evaluation
    #[arg(long)]
    loo: bool,
    /// What to predict [default: user with --loo, label otherwise]
    #[arg(long, value_enum)]
    target: Option<Target>,
    /// Cohort manifest supplying true labels
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
    /// Exit with code 3 when accuracy is below this
    #[arg(long, default_value_t = 0.0, value_name = "FRACTION")]
    min_accuracy: f64,
    /// Write the report as canonical JSON
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Calibrate the service's simulated device instead of a local one
    #[arg(long, value_name = "URL")]
    server: Option<String>,
    /// Known mass placed on each corner in turn
    #[arg(long, default_value_t = 10.0, value_name = "KG")]
    mass: f64,
    /// Readings averaged per step
    #[arg(long, default_value_t = DEFAULT_CALIBRATION_SAMPLES)]
    samples: usize,
    /// Store the result on the service's device (with --server)
    #[arg(long)]
    apply: bool,
    /// Do not wait for confirmation between steps
    #[arg(long)]
    yes: bool,
}

fn server_url(arg: &ServerArg, config: &Config) -> String {
    arg.server.clone().unwrap_or_else(|| config.server_url())
}

pub fn main() -> ExitCode {
    let env = |k: &str| std::env::var(k).ok();
    let mut out = std::io::stdout();
    match run(std::env::args_os(), &mut out, &env) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = out.flush();
            eprintln!("sts: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

/// Runs one invocation, writing results to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write, env: &dyn Fn(&str) -> Option<String>) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}")?;
            return Ok(());
        }
        Err(e) => return Err(CliError::validation(e.to_string())),
    };
    let file = cli.config.as_deref().map(ConfigLayer::from_file).transpose()?;
    let config = Config::resolve(&ConfigLayer::from_env(env), file.as_ref(), &cli.overrides.layer())?;
    match cli.command {
        Command::Serve => serve(&config),
        Command::Device(DeviceCommand::Run(a)) => device_run(&config, &a, out),
        Command::Cohort(CohortCommand::Generate(a)) => cohort_generate(&config, &a, out),
        Command::Score(a) => score(&config, &a, out),
        Command::Classify(a) => classify(&config, &a, out),
        Command::Calibrate(a) => calibrate(&config, &a, out),
    }
}

fn serve(config: &Config) -> Result<(), CliError> {
    let _ = tracing_subscriber::fmt()
        .with_writer(std::io::stdout)
        .with_target(false)
        .try_init();
    let store = crate::store::Store::open(&config.store).map_err(|e| CliError::failure(e.to_string()))?;
    let state = crate::api::AppState::new(store, Device::new(config.seed));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async {
        let listener = tokio::net::TcpListener::bind(config.addr).await?;
        tracing::info!(addr = %listener.local_addr()?, store = %config.store.display(), "listening");
        crate::api::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(())
}

fn mix(seed: u64, a: u64, b: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.rotate_left(32));
    rng.random()
}

/// Simulates one trial with the channel samplers on separate threads.
pub fn simulate_trial(
    strength: Strength,
    body_weight_kg: f64,
    meta: TrialMeta,
    config: &Config,
    seed: u64,
) -> TrialPacket {
    let cohort = CohortConfig {
        rate: config.rate,
        duration_s: config.duration_s,
        ..CohortConfig::default()
    };
    let profile = generate_profile(strength, body_weight_kg, seed);
    let chair = SimulatedChair::new(
        profile_to_load_curves(profile, ChairGeometry::default()),
        meta.calibration,
        cohort.drift,
    );
    let capture = run_samplers_threaded(&chair, &SamplerConfig::jittered(config.rate, seed), config.duration_s, seed);
    let end_ms = (config.duration_s * 1000.0).ceil() as u64;
    assemble_trial(&capture.corrected, meta, (0, end_ms)).expect("simulated capture fills the window")
}

fn device_run(config: &Config, a: &DeviceRunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if a.mode == Mode::Test && a.label.is_some() {
        return Err(CliError::validation("test trials cannot carry a label"));
    }
    if a.users == 0 || a.trials == 0 {
        return Err(CliError::validation("--users and --trials must be at least 1"));
    }
    let client = Client::new(server_url(&a.server, config));
    let (wlo, whi) = CohortConfig::default().body_weight_range_kg;
    for u in 0..a.users {
        let weight = ChaCha8Rng::seed_from_u64(mix(config.seed, u as u64 + 1, 0)).random_range(wlo..whi);
        for k in 0..a.trials {
            let seed = mix(config.seed, u as u64 + 1, k as u64 + 1);
            let meta = TrialMeta {
                trial_id: uuid::Builder::from_random_bytes(ChaCha8Rng::seed_from_u64(seed).random()).into_uuid(),
                user_id: format!("{}{}", a.user_prefix, u + 1),
                mode: a.mode,
                label: a.label.clone(),
                started_at: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                nominal_rate: config.rate,
                calibration: PerChannel([Calibration::default(); 4]),
            };
            let packet = simulate_trial(a.strength, weight, meta, config, seed);
            let (status, revision) = client.submit(&packet)?;
            writeln!(
                out,
                "{} {} {} samples={} status={status} revision={revision}",
                packet.trial_id,
                packet.user_id,
                packet.mode,
                packet.sample_count()
            )?;
        }
    }
    Ok(())
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::failure(format!("writing {}: {e}", path.display())))
}

fn cohort_generate(config: &Config, a: &CohortArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !a.post && a.out.is_none() && a.manifest.is_none() {
        return Err(CliError::validation("nothing to do: pass --post, --out, or --manifest"));
    }
    if a.users == 0 || a.trials == 0 {
        return Err(CliError::validation("--users and --trials must be at least 1"));
    }
    if a.test_trials > a.trials {
        return Err(CliError::validation("--test-trials exceeds --trials"));
    }
    if a.classes.is_empty() {
        return Err(CliError::validation("--classes is empty"));
    }
    let cohort_config = CohortConfig {
        rate: config.rate,
        duration_s: config.duration_s,
        test_trials_per_user: a.test_trials,
        ..CohortConfig::default()
    };
    let cohort = generate_cohort(a.users, a.trials, &a.classes, config.seed, &cohort_config);
    if let Some(dir) = &a.out {
        std::fs::create_dir_all(dir).map_err(|e| CliError::failure(format!("creating {}: {e}", dir.display())))?;
        for p in &cohort.packets {
            let text = wire::canonical_json(&wire::envelope_value(p));
            write_file(&dir.join(format!("{}.json", p.trial_id)), &text)?;
        }
    }
    let manifest_path = a.manifest.clone().or_else(|| a.out.as_ref().map(|d| d.join("manifest.json")));
    if let Some(path) = &manifest_path {
        write_file(path, &cohort.manifest.to_canonical_json())?;
    }
    if a.post {
        let client = Client::new(server_url(&a.server, config));
        for p in &cohort.packets {
            let (status, _) = client.submit(p)?;
            writeln!(out, "{} {} {} status={status}", p.trial_id, p.user_id, p.mode)?;
        }
    }
    writeln!(
        out,
        "generated {} trials ({} users x {}), seed {}{}",
        cohort.packets.len(),
        a.users,
        a.trials,
        config.seed,
        manifest_path
            .map(|p| format!(", manifest {}", p.display()))
            .unwrap_or_default()
    )?;
    Ok(())
}

fn read_packet_file(path: &Path) -> Result<TrialPacket, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::validation(format!("reading {}: {e}", path.display())))?;
    wire::parse(&bytes).map_err(|e| CliError::validation(format!("{}: {e}", path.display())))
}

fn score(config: &Config, a: &ScoreArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let packet = match Uuid::parse_str(&a.trial) {
        Ok(id) => Client::new(server_url(&a.server, config)).find(id)?.packet,
        Err(_) => read_packet_file(Path::new(&a.trial))?,
    };
    let grid = a.grid_hz.unwrap_or(f64::from(packet.nominal_rate.hz()));
    if !(grid > 0.0 && grid.is_finite()) {
        return Err(CliError::validation(format!("--grid-hz {grid} is not positive")));
    }
    let (at, events, score) = analyze_packet(&packet, grid, a.body_weight, &config.detector)
        .map_err(|e| CliError::validation(e.to_string()))?;
    let w = a.body_weight.unwrap_or_else(|| estimate_body_weight(&total_load(&at)));
    if let Some(path) = &a.plot {
        emit_plot(&at, path).map_err(|e| CliError::failure(e.to_string()))?;
    }
    if let Some(path) = &a.csv {
        write_file(path, &at.to_csv())?;
    }
    let report = json!({
        "trial_id": packet.trial_id.to_string(),
        "user_id": packet.user_id,
        "grid_rate_hz": grid,
        "body_weight_kg": w,
        "reps_30s": score.reps_30s,
        "five_reps_time_s": score.five_reps_time_s,
        "transition_durations_ms": score.transition_durations_ms,
        "events": events.iter().map(|e| json!({
            "kind": format!("{:?}", e.kind),
            "t_start_ms": e.t_start_ms,
            "t_end_ms": e.t_end_ms,
        })).collect::<Vec<_>>(),
    });
    writeln!(out, "{}", canonical_json(&report))?;
    Ok(())
}

fn load_trials(config: &Config, a: &ClassifyArgs) -> Result<(Vec<TrialPacket>, Vec<TrialPacket>), CliError> {
    if let Some(dir) = &a.from {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| CliError::validation(format!("reading {}: {e}", dir.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json") && p.file_name().is_some_and(|n| n != "manifest.json"))
            .collect();
        paths.sort();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for p in paths {
            let packet = read_packet_file(&p)?;
            match packet.mode {
                Mode::Train => train.push(packet),
                Mode::Test => test.push(packet),
            }
        }
        return Ok((train, test));
    }
    let client = Client::new(server_url(&a.server, config));
    let train = client.pull_all(Mode::Train)?.into_iter().map(|t| t.packet).collect();
    let test = client.pull_all(Mode::Test)?.into_iter().map(|t| t.packet).collect();
    Ok((train, test))
}

fn classify(config: &Config, a: &ClassifyArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&a.min_accuracy) {
        return Err(CliError::validation("--min-accuracy must be within [0, 1]"));
    }
    let target = a.target.unwrap_or(if a.loo { Target::User } else { Target::Label });
    let manifest = a
        .manifest
        .as_deref()
        .map(|p| {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::validation(format!("reading {}: {e}", p.display())))?;
            CohortManifest::from_json(&text).map_err(|e| CliError::validation(format!("{}: {e}", p.display())))
        })
        .transpose()?;
    let true_label = |p: &TrialPacket| -> Option<String> {
        match target {
            Target::User => Some(p.user_id.clone()),
            Target::Label => manifest
                .as_ref()
                .and_then(|m| m.entry(&p.trial_id))
                .map(|e| e.true_label.clone())
                .or_else(|| p.label.clone()),
        }
    };
    let (train, test) = load_trials(config, a)?;
    let features = |p: &TrialPacket| {
        config
            .features
            .extract(p)
            .map_err(|e| CliError::validation(format!("trial {}: {e}", p.trial_id)))
    };
    let mut labeled = Vec::new();
    for p in &train {
        let label = match target {
            Target::User => Some(p.user_id.clone()),
            Target::Label => p.label.clone().or_else(|| true_label(p)),
        };
        if let Some(label) = label {
            labeled.push(LabeledSeries {
                id: p.trial_id.to_string(),
                label,
                series: features(p)?,
            });
        }
    }
    let classifier_err = |e: sts_core::classifier::ClassifierError| CliError::validation(e.to_string());
    let report: EvalReport = if a.loo {
        let (report, matrix) = leave_one_out(&labeled, &config.knn).map_err(classifier_err)?;
        let groups: Vec<String> = labeled.iter().map(|l| l.label.clone()).collect();
        let (within, between) = matrix.within_between_means(&groups);
        writeln!(
            out,
            "distance matrix {n}x{n}, symmetric with zero diagonal: {}; mean within {within:.4}, between {between:.4}",
            matrix.is_symmetric_with_zero_diagonal(),
            n = matrix.len()
        )?;
        report
    } else {
        let mut truth = BTreeMap::new();
        let mut queries = Vec::new();
        for p in &test {
            let id = p.trial_id.to_string();
            let label = true_label(p).ok_or_else(|| {
                CliError::validation(format!("no true label for test trial {id}; pass --manifest"))
            })?;
            truth.insert(id.clone(), label);
            queries.push((id, features(p)?));
        }
        let all: Vec<(String, _)> = labeled.iter().map(|l| (l.id.clone(), l.series.clone())).collect();
        if all.len() >= 2 {
            let groups: Vec<String> = labeled.iter().map(|l| l.label.clone()).collect();
            let m = distance_matrix(&all, config.knn.band_fraction, config.knn.dtw_mode).map_err(classifier_err)?;
            let (within, between) = m.within_between_means(&groups);
            writeln!(out, "training set: mean within-class {within:.4}, between-class {between:.4}")?;
        }
        evaluate(&labeled, &queries, &truth, &config.knn).map_err(classifier_err)?
    };
    write!(out, "{}", report.to_text_table())?;
    if let Some(path) = &a.report {
        write_file(path, &report.to_canonical_json())?;
    }
    if report.accuracy < a.min_accuracy {
        return Err(CliError::gate(format!(
            "accuracy {:.4} below --min-accuracy {}",
            report.accuracy, a.min_accuracy
        )));
    }
    Ok(())
}

fn confirm(prompt: &str, skip: bool) -> Result<(), CliError> {
    let stdin = std::io::stdin();
    if skip || !stdin.is_terminal() {
        return Ok(());
    }
    eprint!("{prompt} [Enter] ");
    let _ = std::io::stderr().flush();
    let mut line = String::new();
    stdin.lock().read_line(&mut line)?;
    Ok(())
}

fn calibrate(config: &Config, a: &CalibrateArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.mass > 0.0 && a.mass.is_finite()) {
        return Err(CliError::validation("--mass must be positive"));
    }
    let local = a.server.is_none().then(|| Device::new(config.seed));
    let client = a.server.as_ref().map(|s| Client::new(s.clone()));
    let acq = |e: sts_core::acquisition::AcquisitionError| CliError::validation(e.to_string());

    confirm("Unload the chair.", a.yes)?;
    let tare = match (&local, &client) {
        (Some(d), _) => d.measure_tare(a.samples, config.seed).map_err(acq)?,
        (_, Some(c)) => c.measure_tare(a.samples, config.seed)?,
        _ => unreachable!(),
    };
    let mut cal = PerChannel([Calibration::default(); 4]);
    for c in ChannelId::ALL {
        confirm(&format!("Place {} kg on the {} corner.", a.mass, c.key()), a.yes)?;
        let seed = config.seed.wrapping_add(c.index() as u64 + 1);
        let scale = match (&local, &client) {
            (Some(d), _) => d.measure_scale(c, tare[c], a.mass, a.samples, seed).map_err(acq)?,
            (_, Some(cl)) => cl.measure_scale(c, tare[c], a.mass, a.samples, seed)?,
            _ => unreachable!(),
        };
        cal[c] = Calibration::new(tare[c], scale).map_err(|e| CliError::validation(e.to_string()))?;
    }
    if let Some(d) = &local {
        let factory = d.factory();
        for c in ChannelId::ALL {
            let rel = cal[c].scale_counts_per_kg / factory[c].scale_counts_per_kg - 1.0;
            writeln!(
                out,
                "{:<11} tare {:>8} (true {:>8})  scale {:>12.2} (true {:>12.2}, {:+.3}%)",
                c.key(),
                cal[c].tare_counts,
                factory[c].tare_counts,
                cal[c].scale_counts_per_kg,
                factory[c].scale_counts_per_kg,
                rel * 100.0
            )?;
        }
    }
    if a.apply {
        match &client {
            Some(c) => c.set_calibration(&cal)?,
            None => return Err(CliError::validation("--apply needs --server")),
        }
    }
    let mut map = serde_json::Map::new();
    for (c, k) in cal.iter() {
        map.insert(c.key().into(), serde_json::to_value(k).expect("serializable"));
    }
    writeln!(out, "{}", canonical_json(&Value::Object(map)))?;
    Ok(())
}
