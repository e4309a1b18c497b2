//! `whichcountry` command line.

use std::io::Write;
use std::net::{IpAddr, SocketAddr};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use whichcountry_core::engine::{Engine, EngineConfig, ProviderSpec};
use whichcountry_core::evalkit::{collect_evidence, dev_items, run_ablation, run_evaluation, DatasetManifest};
use whichcountry_core::evidence::freqlist::FrequencyKind;
use whichcountry_core::fusion::{mean_truth_rank, optimize_weights, OptimizerConfig, WeightVector};
use whichcountry_core::imaging::RgbImage;
use whichcountry_core::synth::{generate, SynthConfig, SynthSignals};
use whichcountry_core::training::{
    build_color_profiles, build_configured_profiles, build_frequency_profiles, build_language_profiles,
    write_color_profiles, write_frequency_profiles,
};

use crate::catalog::Catalog;
use crate::error::{ErrorKind, GatewayError};
use crate::fetch::{
    api_key_from_env, fetch_streetview, FetchRecord, FetchRequest, HttpClient, RecordingClient, ReplayClient,
    UreqClient, DEFAULT_ENDPOINT,
};
use crate::game::GameStore;
use crate::http::{serve, AppState};
use crate::report::GuessResponse;

pub const CONFIG_ENV: &str = "WHICHCOUNTRY_CONFIG";

/// Ranks candidate countries for street-level 360° panoramas.
///
/// Exit codes: 0 success, 1 other failure, 2 usage, 3 configuration,
/// 4 image decode, 5 inference provider, 6 remote service, 7 file I/O,
/// 8 invalid manifest or dataset.
#[derive(Debug, Parser)]
#[command(name = "whichcountry", version)]
pub struct Cli {
    /// Engine configuration (TOML).
    #[arg(long, global = true, env = CONFIG_ENV, default_value = "engine.toml")]
    pub config: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank countries for one panorama.
    Guess(GuessArgs),
    /// Build offline profiles.
    #[command(subcommand)]
    Profiles(ProfilesCommand),
    /// Evaluate over a labelled manifest.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Tune fusion weights.
    #[command(subcommand)]
    Weights(WeightsCommand),
    /// Run the HTTP API and game server.
    Serve(ServeArgs),
    /// Download one Street View panorama.
    Fetch(FetchArgs),
    /// Render a synthetic labelled corpus with fixtures and configuration.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct GuessArgs {
    /// PNG or JPEG equirectangular panorama.
    pub path: PathBuf,
    /// Degrees; azimuth of the panorama's first column relative to north.
    #[arg(long, allow_negative_numbers = true)]
    pub north_offset: Option<f64>,
    /// Fusion weights document overriding the configured one.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Show per-module contributions and notes.
    #[arg(long)]
    pub explain: bool,
    /// Print the full report as JSON.
    #[arg(long)]
    pub json: bool,
    /// Rows of the ranked table.
    #[arg(long, default_value_t = 10)]
    pub top: usize,
}

#[derive(Debug, Subcommand)]
pub enum ProfilesCommand {
    Build(ProfilesBuildArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    Color,
    Caption,
    Object,
    Language,
    /// Every kind with an output directory in the configuration.
    All,
}

#[derive(Debug, Args)]
pub struct ProfilesBuildArgs {
    #[arg(long, value_enum)]
    pub kind: ProfileKind,
    /// Labelled training manifest (color, caption, object, all).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of `<lang>.txt` samples (language).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    /// Output directory or file; defaults to the configured profile path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum EvalCommand {
    /// Rank every item and summarize the rank of the truth.
    Run(EvalRunArgs),
    /// Cumulative module removal.
    Ablate(EvalAblateArgs),
}

#[derive(Debug, Args)]
pub struct EvalRunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Write the machine-readable report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalAblateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Modules in removal order, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub order: Vec<String>,
    #[arg(long)]
    pub weights: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum WeightsCommand {
    Optimize(WeightsOptimizeArgs),
}

#[derive(Debug, Args)]
pub struct WeightsOptimizeArgs {
    /// Development manifest.
    #[arg(long)]
    pub manifest: PathBuf,
    /// Output weights document; defaults to the configured weights path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = OptimizerConfig::default().steps)]
    pub steps: u32,
    #[arg(long, default_value_t = OptimizerConfig::default().max_sweeps)]
    pub max_sweeps: u32,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    /// Fixture provider directory answering OCR, caption and object requests.
    #[arg(long)]
    pub fixtures: Option<PathBuf>,
    /// Labelled panoramas offered for guessing by id and for games.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Built client assets served at `/`.
    #[arg(long)]
    pub assets: Option<PathBuf>,
    /// Idle lifetime of game sessions, seconds.
    #[arg(long, default_value_t = 3600)]
    pub session_ttl: u64,
    /// Seed for round selection and session ids.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FetchArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub lat: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub lon: f64,
    /// Output PNG; a `.json` sidecar with the metadata is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = crate::fetch::MAX_FACE_SIZE)]
    pub face_size: u32,
    #[arg(long, default_value_t = 2048)]
    pub width: u32,
    #[arg(long, default_value = DEFAULT_ENDPOINT)]
    pub endpoint: String,
    /// Answer requests from a recorded directory instead of the network.
    #[arg(long, conflicts_with = "record")]
    pub replay: Option<PathBuf>,
    /// Record every response into this directory.
    #[arg(long)]
    pub record: Option<PathBuf>,
    #[arg(long, default_value_t = 30)]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalsArg {
    Full,
    ColorOnly,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = SynthConfig::default().seed)]
    pub seed: u64,
    #[arg(long, default_value_t = SynthConfig::default().width)]
    pub width: u32,
    #[arg(long, default_value_t = SynthConfig::default().train_per_country)]
    pub train: usize,
    #[arg(long, default_value_t = SynthConfig::default().query_per_country)]
    pub query: usize,
    #[arg(long, default_value_t = SynthConfig::default().dev_per_country)]
    pub dev: usize,
    #[arg(long, value_enum, default_value = "full")]
    pub signals: SignalsArg,
    /// Also build every profile kind from the train split.
    #[arg(long)]
    pub build_profiles: bool,
}

fn load_config(path: &Path) -> Result<EngineConfig, GatewayError> {
    if !path.exists() {
        return Err(GatewayError::config(format!(
            "configuration file {} not found (set --config or {CONFIG_ENV})",
            path.display()
        )));
    }
    Ok(EngineConfig::load(path)?)
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, GatewayError> {
    Ok(DatasetManifest::load(path)?)
}

fn engine_with_weights(config: &EngineConfig, weights: &Option<PathBuf>) -> Result<Engine, GatewayError> {
    let mut config = config.clone();
    if let Some(w) = weights {
        config.weights = Some(w.clone());
    }
    Ok(Engine::from_config(&config)?)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), GatewayError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| GatewayError::io(parent, e))?;
    }
    std::fs::write(path, contents).map_err(|e| GatewayError::io(path, e))
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), GatewayError> {
    out.write_all(text.as_bytes())
        .map_err(|e| GatewayError::new(ErrorKind::Io, format!("stdout: {e}")))
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<(), GatewayError> {
    match cli.command {
        Command::Guess(args) => guess(&cli.config, args, out),
        Command::Profiles(ProfilesCommand::Build(args)) => profiles_build(&cli.config, args, out),
        Command::Eval(EvalCommand::Run(args)) => eval_run(&cli.config, args, out),
        Command::Eval(EvalCommand::Ablate(args)) => eval_ablate(&cli.config, args, out),
        Command::Weights(WeightsCommand::Optimize(args)) => weights_optimize(&cli.config, args, out),
        Command::Serve(args) => serve_cmd(&cli.config, args),
        Command::Fetch(args) => fetch(args, out),
        Command::Synth(args) => synth(args, out),
    }
}

fn guess(config: &Path, args: GuessArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = load_config(config)?;
    let bytes = std::fs::read(&args.path).map_err(|e| GatewayError::io(&args.path, e))?;
    let engine = engine_with_weights(&config, &args.weights)?;
    let report = engine.guess_bytes(&bytes, args.north_offset)?;
    if args.json {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        emit(out, &text)
    } else {
        let view = GuessResponse::from_report(&report, engine.registry());
        emit(out, &view.render(args.top, args.explain))
    }
}

fn require_manifest(args: &ProfilesBuildArgs) -> Result<DatasetManifest, GatewayError> {
    let path = args
        .manifest
        .as_ref()
        .ok_or_else(|| GatewayError::usage("--manifest is required for this profile kind"))?;
    load_manifest(path)
}

fn output_path(out: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf, GatewayError> {
    out.clone()
        .or_else(|| configured.clone())
        .ok_or_else(|| GatewayError::config(format!("no output path: pass --out or configure profiles.{what}")))
}

fn profiles_build(config_path: &Path, args: ProfilesBuildArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = load_config(config_path)?;
    match args.kind {
        ProfileKind::Color => {
            let manifest = require_manifest(&args)?;
            let dir = output_path(&args.out, &config.profiles.color, "color")?;
            let built = build_color_profiles(&manifest)?;
            write_color_profiles(&built.profiles, &dir)?;
            emit(
                out,
                &format!(
                    "wrote {} color profiles to {} ({} unreadable items)\n",
                    built.profiles.len(),
                    dir.display(),
                    built.failures.len()
                ),
            )
        }
        ProfileKind::Caption | ProfileKind::Object => {
            let manifest = require_manifest(&args)?;
            let (kind, configured, name) = if args.kind == ProfileKind::Caption {
                (FrequencyKind::CaptionWords, &config.profiles.caption, "caption")
            } else {
                (FrequencyKind::ObjectLabels, &config.profiles.object, "object")
            };
            let dir = output_path(&args.out, configured, name)?;
            let engine = Engine::from_config(&config)?;
            let available = match kind {
                FrequencyKind::CaptionWords => engine.captioner().is_some(),
                FrequencyKind::ObjectLabels => engine.detector().is_some(),
            };
            if !available {
                return Err(GatewayError::config(format!("no {name} provider configured")));
            }
            let built = build_frequency_profiles(&manifest, kind, &engine)?;
            write_frequency_profiles(&built.profiles, &dir)?;
            emit(
                out,
                &format!(
                    "wrote {} {name} profiles to {} ({} unreadable items)\n",
                    built.profiles.len(),
                    dir.display(),
                    built.failures.len()
                ),
            )
        }
        ProfileKind::Language => {
            let corpus = args
                .corpus
                .as_ref()
                .ok_or_else(|| GatewayError::usage("--corpus is required for language profiles"))?;
            let path = output_path(&args.out, &config.profiles.language, "language")?;
            let set = build_language_profiles(corpus)?;
            write_file(&path, set.to_json())?;
            let n = set.languages().count();
            emit(out, &format!("wrote {n} language profiles to {}\n", path.display()))
        }
        ProfileKind::All => {
            let manifest = require_manifest(&args)?;
            let summary = build_configured_profiles(&config, &manifest)?;
            emit(
                out,
                &format!(
                    "built {} color, {} caption, {} object profiles ({} unreadable items)\n",
                    summary.color, summary.caption, summary.object, summary.failures
                ),
            )
        }
    }
}

fn eval_run(config: &Path, args: EvalRunArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = load_config(config)?;
    let manifest = load_manifest(&args.manifest)?;
    let engine = engine_with_weights(&config, &args.weights)?;
    let report = run_evaluation(&manifest, &engine)?;
    if let Some(path) = &args.report {
        write_file(path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    }
    emit(out, &report.render_table())
}

fn eval_ablate(config: &Path, args: EvalAblateArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = load_config(config)?;
    let manifest = load_manifest(&args.manifest)?;
    let engine = engine_with_weights(&config, &args.weights)?;
    let order: Vec<&str> = args.order.iter().map(|s| s.trim()).filter(|s| !s.is_empty()).collect();
    let table = run_ablation(&manifest, &engine, &order)?;
    if let Some(path) = &args.report {
        write_file(path, serde_json::to_string_pretty(&table).expect("table serializes"))?;
    }
    emit(out, &table.render_table())
}

fn weights_optimize(config: &Path, args: WeightsOptimizeArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = load_config(config)?;
    let manifest = load_manifest(&args.manifest)?;
    if manifest.is_empty() {
        return Err(GatewayError::new(ErrorKind::Data, "development manifest is empty"));
    }
    let target = output_path(&args.out, &config.weights, "weights")
        .map_err(|_| GatewayError::config("no output path: pass --out or configure weights"))?;
    let mut base = config.clone();
    base.weights = None;
    let engine = Engine::from_config(&base)?;
    manifest.validate_against(engine.registry())?;
    let evidence = collect_evidence(&manifest, &engine);
    let dev = dev_items(&evidence);
    if dev.is_empty() {
        return Err(GatewayError::new(ErrorKind::Data, "no readable development items"));
    }
    let universe = engine.registry().codes();
    let optimizer = OptimizerConfig {
        steps: args.steps,
        max_sweeps: args.max_sweeps,
    };
    let result = optimize_weights(&dev, &universe, &optimizer)?;
    let uniform = WeightVector::uniform(result.weights.modules())?;
    let baseline = mean_truth_rank(&dev, &uniform, &universe)?;
    write_file(&target, result.weights.to_json())?;
    let mut text = format!(
        "{} development items ({} unreadable)\nmean rank: uniform {:.3}, optimized {:.3} after {} sweeps\n",
        dev.len(),
        evidence.len() - dev.len(),
        baseline,
        result.objective,
        result.sweeps
    );
    for (m, w) in result.weights.iter() {
        text.push_str(&format!("  {m:<10} {w:.4}\n"));
    }
    text.push_str(&format!("wrote {}\n", target.display()));
    emit(out, &text)
}

fn serve_cmd(config: &Path, args: ServeArgs) -> Result<(), GatewayError> {
    let mut config = load_config(config)?;
    if let Some(dir) = &args.fixtures {
        let spec = Some(ProviderSpec::Fixtures { fixtures: dir.clone() });
        config.providers.ocr = spec.clone();
        config.providers.caption = spec.clone();
        config.providers.objects = spec;
    }
    let engine = Engine::from_config(&config)?;
    let catalog = match &args.manifest {
        Some(path) => Catalog::from_manifest(&load_manifest(path)?, engine.registry())?,
        None => Catalog::default(),
    };
    if let Some(dir) = &args.assets {
        if !dir.is_dir() {
            return Err(GatewayError::config(format!("assets directory {} not found", dir.display())));
        }
    }
    let games = GameStore::new(Duration::from_secs(args.session_ttl));
    let state = Arc::new(AppState::new(engine, catalog, games, args.seed, args.assets.clone()));
    let runtime = tokio::runtime::Runtime::new()
        .map_err(|e| GatewayError::new(ErrorKind::Internal, format!("cannot start runtime: {e}")))?;
    let addr = SocketAddr::new(args.host, args.port);
    runtime
        .block_on(serve(state, addr))
        .map_err(|e| GatewayError::new(ErrorKind::Io, format!("{addr}: {e}")))
}

fn fetch(args: FetchArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let key = api_key_from_env()?;
    let req = FetchRequest {
        lat: args.lat,
        lon: args.lon,
        face_size: args.face_size,
        width: args.width,
    };
    let fetched = if let Some(dir) = &args.replay {
        let client = ReplayClient::load(dir)?;
        fetch_streetview(&client, &args.endpoint, &key, &req)?
    } else {
        let live = UreqClient::new(Duration::from_secs(args.timeout_secs));
        match &args.record {
            Some(dir) => {
                let client = RecordingClient::new(live);
                let result = fetch_streetview(&client, &args.endpoint, &key, &req);
                client.save(dir)?;
                result?
            }
            None => fetch_streetview(&live as &dyn HttpClient, &args.endpoint, &key, &req)?,
        }
    };
    write_file(&args.out, fetched.panorama.to_png())?;
    let record = FetchRecord {
        path: args.out.clone(),
        pano_id: fetched.pano_id,
        lat: fetched.lat,
        lon: fetched.lon,
        date: fetched.date,
        north_offset_deg: fetched.panorama.north_offset_deg(),
    };
    let json = serde_json::to_string_pretty(&record).expect("record serializes");
    write_file(&args.out.with_extension("json"), &json)?;
    emit(out, &format!("{json}\n"))
}

fn synth(args: SynthArgs, out: &mut dyn Write) -> Result<(), GatewayError> {
    let config = SynthConfig {
        seed: args.seed,
        width: args.width,
        train_per_country: args.train,
        query_per_country: args.query,
        dev_per_country: args.dev,
        signals: match args.signals {
            SignalsArg::Full => SynthSignals::Full,
            SignalsArg::ColorOnly => SynthSignals::ColorOnly,
        },
        ..SynthConfig::default()
    };
    let corpus = generate(&args.out, &config)?;
    let mut text = format!(
        "config {}\ntrain {}\nquery {}\ndev {}\n",
        corpus.config.display(),
        corpus.train.display(),
        corpus.query.display(),
        corpus.dev.display()
    );
    if args.build_profiles {
        let engine_config = load_config(&corpus.config)?;
        let summary = build_configured_profiles(&engine_config, &load_manifest(&corpus.train)?)?;
        text.push_str(&format!(
            "built {} color, {} caption, {} object profiles\n",
            summary.color, summary.caption, summary.object
        ));
    }
    emit(out, &text)
}
