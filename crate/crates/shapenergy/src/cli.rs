//! The `shapenergy` command line.
//!
//! Every flag can also come from `--config <file.json>`: either a flat object keyed by
//! long flag names or a `run.json`, whose `options` are used. Flags given on the command
//! line override the file.

use std::ffi::OsString;
use std::fmt::Display;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use shapenergy_core::dataset::{generate, DatasetConfig, Sample};
use shapenergy_core::geometry::ShapeParams;
use shapenergy_core::train::{evaluate, grid_search, kfold, train_model, ModelFamily, TrainConfig};

use crate::checkpoint::{load_checkpoint, new_checkpoint, save_checkpoint, Checkpoint, ModelChoice};
use crate::error::{self, Error, Result};
use crate::report::{self, RunWriter};
use crate::store::{self, Context, WeatherSpec};
use crate::{serve, StdClock};

#[derive(Parser, Debug)]
#[command(name = "shapenergy", version, about = "Annual building energy from footprint shape")]
pub struct Cli {
    /// JSON file of flag values (a flat object or a previous run.json).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample shapes, draw and simulate them, and write a dataset directory.
    #[command(args_override_self = true)]
    Generate(GenerateArgs),
    /// Train one model and write its checkpoint, history and test metrics.
    #[command(args_override_self = true)]
    Train(TrainArgs),
    /// Score a checkpoint on a dataset's test split.
    #[command(args_override_self = true)]
    Eval(EvalArgs),
    /// Predict (and simulate) one shape.
    #[command(args_override_self = true)]
    Predict(PredictArgs),
    /// Train, score and time one model per depth.
    #[command(args_override_self = true)]
    Gridsearch(GridArgs),
    /// k-fold cross-validation on the training split.
    #[command(args_override_self = true)]
    Cv(CvArgs),
    /// HTTP API for the shape explorer.
    #[command(args_override_self = true)]
    Serve(ServeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Generate(_) => "generate",
            Self::Train(_) => "train",
            Self::Eval(_) => "eval",
            Self::Predict(_) => "predict",
            Self::Gridsearch(_) => "gridsearch",
            Self::Cv(_) => "cv",
            Self::Serve(_) => "serve",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GenerateArgs {
    /// Number of samples.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory.
    #[arg(long)]
    pub out: PathBuf,
    /// `synthetic` or `epw:<path>`.
    #[arg(long, default_value = "synthetic")]
    pub weather: String,
    /// Fraction of samples in the training split.
    #[arg(long, default_value_t = 0.8)]
    pub split: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Dnn,
    Cnn,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// Filters per convolution (cnn only).
    #[arg(long, default_value_t = 2)]
    pub filters: usize,
    /// Convolution kernel size (cnn only).
    #[arg(long, default_value_t = 3)]
    pub kernel: usize,
    /// Max-pool size (cnn only).
    #[arg(long, default_value_t = 2)]
    pub pool: usize,
}

impl ModelArgs {
    fn choice(&self, depth: usize) -> ModelChoice {
        match self.model {
            ModelKind::Dnn => ModelChoice::Dnn { depth },
            ModelKind::Cnn => ModelChoice::Cnn { depth, filters: self.filters, kernel: self.kernel, pool: self.pool },
        }
    }

    fn family(&self) -> ModelFamily {
        match self.model {
            ModelKind::Dnn => ModelFamily::Dnn,
            ModelKind::Cnn => ModelFamily::Cnn { filters: self.filters, kernel: self.kernel, pool: self.pool },
        }
    }

    fn name(&self) -> &'static str {
        match self.model {
            ModelKind::Dnn => "dnn",
            ModelKind::Cnn => "cnn",
        }
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    /// Seeds initialization and shuffling.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl FitArgs {
    fn config(&self) -> Result<TrainConfig> {
        let cfg = TrainConfig { epochs: self.epochs, batch_size: self.batch, lr: self.lr, seed: self.seed, shuffle: true };
        cfg.validate().map_err(usage)?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct TrainArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Dense layers (dnn) or convolutions (cnn).
    #[arg(long)]
    pub depth: usize,
    /// Dataset directory.
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory [default: runs/<model><depth>-seed<seed>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct EvalArgs {
    /// Checkpoint directory.
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Also write metrics, predictions and run.json here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct PredictArgs {
    /// Shape offsets `x1,x2,x3,x4` in meters.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    /// Dense-model checkpoint directory.
    #[arg(long)]
    pub dnn: Option<PathBuf>,
    /// Convolutional-model checkpoint directory.
    #[arg(long)]
    pub cnn: Option<PathBuf>,
    /// Dataset directory whose geometry, building and weather the simulation uses.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Print the heating/cooling/lighting breakdown too.
    #[arg(long)]
    pub simulate: bool,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct GridArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Comma-separated depths.
    #[arg(long, value_delimiter = ',', required = true)]
    pub depths: Vec<usize>,
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory [default: runs/grid-<model>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct CvArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub depth: usize,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Run directory [default: runs/cv-<model><depth>].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
#[serde(rename_all = "kebab-case")]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Dense-model checkpoint directory.
    #[arg(long)]
    pub dnn: Option<PathBuf>,
    /// Convolutional-model checkpoint directory.
    #[arg(long)]
    pub cnn: Option<PathBuf>,
    /// Dataset directory whose geometry, building and weather the API uses.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Directory of UI assets served at `/`.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

fn usage(e: impl Display) -> Error {
    Error::Usage(e.to_string())
}

/// Parses `x1,x2,x3,x4`; anything malformed or out of range is a usage error.
pub fn parse_shape(text: &str) -> Result<ShapeParams> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>().map_err(|_| usage(format!("--x: {:?} is not a number", v.trim()))))
        .collect::<Result<_>>()?;
    let x: [f64; 4] =
        values.try_into().map_err(|v: Vec<f64>| usage(format!("--x needs 4 comma-separated values, got {}", v.len())))?;
    ShapeParams::from_array(x).map_err(|e| usage(format!("--x: {e}")))
}

/// Flag tokens for a flat JSON object of options.
fn config_tokens(path: &Path, options: &serde_json::Map<String, serde_json::Value>) -> Result<Vec<OsString>> {
    use serde_json::Value;
    let scalar = |key: &str, v: &Value| -> Result<String> {
        match v {
            Value::String(s) => Ok(s.clone()),
            Value::Number(n) => Ok(n.to_string()),
            _ => Err(Error::format(path, format!("option {key:?} must be a string, number or list of them"))),
        }
    };
    let mut tokens = Vec::new();
    for (key, value) in options {
        let flag = OsString::from(format!("--{key}"));
        match value {
            Value::Null | Value::Bool(false) => {}
            Value::Bool(true) => tokens.push(flag),
            Value::Array(items) => {
                let parts = items.iter().map(|v| scalar(key, v)).collect::<Result<Vec<_>>>()?;
                tokens.extend([flag, parts.join(",").into()]);
            }
            other => tokens.extend([flag, scalar(key, other)?.into()]),
        }
    }
    Ok(tokens)
}

/// Replaces `--config FILE` with the file's options, placed right after the subcommand
/// so that explicit flags still win.
pub fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        match arg.to_str() {
            Some("--config") => {
                config = Some(PathBuf::from(iter.next().ok_or_else(|| usage("--config needs a file"))?))
            }
            Some(a) if a.starts_with("--config=") => config = Some(PathBuf::from(&a["--config=".len()..])),
            _ => rest.push(arg),
        }
    }
    let Some(path) = config else { return Ok(rest) };

    let value: serde_json::Value = error::read_json(&path)?;
    let (subcommand, options) = match (value.get("subcommand"), value.get("options")) {
        (Some(serde_json::Value::String(s)), Some(o)) => (Some(s.clone()), o.clone()),
        _ => (None, value),
    };
    let options = options.as_object().ok_or_else(|| Error::format(&path, "expected a JSON object of options"))?;
    let tokens = config_tokens(&path, options)?;

    // the only flag allowed before the subcommand is --config itself
    let position = rest.get(1).filter(|a| !a.to_string_lossy().starts_with('-')).map(|_| 1);
    let insert_at = match (position, subcommand) {
        (Some(p), Some(sub)) if rest[p] != *sub => {
            return Err(usage(format!(
                "{} was written by `{sub}`, not `{}`",
                path.display(),
                rest[p].to_string_lossy()
            )))
        }
        (Some(p), _) => p + 1,
        (None, Some(sub)) => {
            rest.insert(1.min(rest.len()), sub.into());
            2.min(rest.len())
        }
        (None, None) => return Err(usage("--config needs a subcommand")),
    };
    rest.splice(insert_at..insert_at, tokens);
    Ok(rest)
}

fn options_of<T: Serialize>(args: &T) -> serde_json::Value {
    serde_json::to_value(args).expect("options serialize")
}

fn print_json<T: Serialize>(value: &T) {
    let mut out = std::io::stdout().lock();
    let _ = serde_json::to_writer_pretty(&mut out, value);
    let _ = writeln!(out);
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut cfg = DatasetConfig::new(args.n, args.seed);
    cfg.split_ratio = args.split;
    cfg.validate().map_err(usage)?;
    let weather_spec = WeatherSpec::from_flag(&args.weather)?;
    let weather = weather_spec.load()?;
    let dataset = generate(&cfg, &weather)?;
    let manifest = store::save_dataset(&args.out, &dataset, &weather_spec)?;

    let mut run = RunWriter::new(&args.out)?;
    run.record_file(store::LABELS_FILE)?;
    run.record_file(store::MANIFEST_FILE)?;
    run.finish("generate", options_of(args), serde_json::to_value(&manifest.config).expect("serializable"))?;
    println!(
        "wrote {} samples ({} train / {} test) to {}",
        dataset.samples.len(),
        dataset.train_ids.len(),
        dataset.test_ids.len(),
        args.out.display()
    );
    Ok(())
}

#[derive(Serialize)]
struct Resolved<'a> {
    train: &'a TrainConfig,
    model: Option<ModelChoice>,
    dataset_labels_sha256: &'a str,
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let cfg = args.fit.config()?;
    let choice = args.model.choice(args.depth);
    let (dataset, manifest) = store::load_dataset(&args.data)?;
    let spec = choice.build(&dataset.config.raster).map_err(usage)?;
    let out = args.out.clone().unwrap_or_else(|| {
        PathBuf::from(format!("runs/{}{}-seed{}", choice.name(), choice.depth(), cfg.seed))
    });
    let args = TrainArgs { out: Some(out.clone()), ..args.clone() };

    let (state, history) = train_model(&spec, &dataset, &cfg, &StdClock::new())?;
    let test: Vec<&Sample> = dataset.test().collect();
    let metrics = evaluate(&state, &test, &dataset.normalizer)?;
    let checkpoint = new_checkpoint(
        choice,
        state,
        cfg,
        dataset.normalizer,
        dataset.config.clone(),
        manifest.weather.clone(),
        manifest.labels_sha256.clone(),
    );

    let mut run = RunWriter::new(&out)?;
    save_checkpoint(&out.join("checkpoint"), &checkpoint)?;
    run.record_file("checkpoint/checkpoint.json")?;
    run.record_file("checkpoint/params.bin")?;
    run.write("history.csv", report::history_csv(&history))?;
    run.write("timing.csv", report::timing_csv(&history))?;
    run.write_json("metrics.json", &metrics)?;
    run.write(&format!("predictions_{}.csv", choice.name()), report::predictions_csv(&metrics.predictions))?;
    let resolved = Resolved { train: &cfg, model: Some(choice), dataset_labels_sha256: &manifest.labels_sha256 };
    run.finish("train", options_of(&args), serde_json::to_value(&resolved).expect("serializable"))?;
    println!(
        "{}({}) {} parameters: test mse {} rmse {} kWh r2 {} -> {}",
        choice.name(),
        choice.depth(),
        checkpoint.manifest.param_count,
        metrics.mse,
        metrics.rmse_kwh,
        metrics.r2,
        out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let checkpoint = load_checkpoint(&args.checkpoint)?;
    let (dataset, _) = store::load_dataset(&args.data)?;
    let test: Vec<&Sample> = dataset.test().collect();
    let metrics = evaluate(&checkpoint.state, &test, &checkpoint.manifest.normalizer)?;
    print_json(&metrics);
    if let Some(out) = &args.out {
        let mut run = RunWriter::new(out)?;
        run.write_json("metrics.json", &metrics)?;
        let name = format!("predictions_{}.csv", checkpoint.manifest.model.name());
        run.write(&name, report::predictions_csv(&metrics.predictions))?;
        let resolved = Resolved {
            train: &checkpoint.manifest.train,
            model: Some(checkpoint.manifest.model),
            dataset_labels_sha256: &checkpoint.manifest.dataset_labels_sha256,
        };
        run.finish("eval", options_of(args), serde_json::to_value(&resolved).expect("serializable"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct PredictOutput {
    x: [f64; 4],
    dnn_kwh: Option<f64>,
    cnn_kwh: Option<f64>,
    simulated_total_kwh: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    simulated: Option<shapenergy_core::energy::EnergyBreakdown>,
}

fn load_family(path: Option<&PathBuf>, family: &str) -> Result<Option<Checkpoint>> {
    let Some(path) = path else { return Ok(None) };
    let checkpoint = load_checkpoint(path)?;
    if checkpoint.manifest.model.name() != family {
        return Err(usage(format!("{} holds a {} model, not a {family}", path.display(), checkpoint.manifest.model.name())));
    }
    Ok(Some(checkpoint))
}

fn cmd_predict(args: &PredictArgs) -> Result<()> {
    let params = parse_shape(&args.x)?;
    let dnn = load_family(args.dnn.as_ref(), "dnn")?;
    let cnn = load_family(args.cnn.as_ref(), "cnn")?;
    let loaded: Vec<&Checkpoint> = dnn.iter().chain(cnn.iter()).collect();
    let context = Context::resolve(args.data.as_deref(), &loaded)?;
    let weather = context.weather.load()?;
    let breakdown = context.simulate(&params, &weather)?;
    let output = PredictOutput {
        x: params.as_array(),
        dnn_kwh: dnn.as_ref().map(|c| c.predict_kwh(&params)).transpose()?,
        cnn_kwh: cnn.as_ref().map(|c| c.predict_kwh(&params)).transpose()?,
        simulated_total_kwh: breakdown.total_kwh,
        simulated: args.simulate.then_some(breakdown),
    };
    print_json(&output);
    Ok(())
}

fn cmd_gridsearch(args: &GridArgs) -> Result<()> {
    let cfg = args.fit.config()?;
    if args.depths.contains(&0) {
        return Err(usage("--depths must be positive"));
    }
    let (dataset, manifest) = store::load_dataset(&args.data)?;
    let family = args.model.family();
    for &depth in &args.depths {
        family.build(depth, dataset.config.raster.height_px, dataset.config.raster.width_px).map_err(usage)?;
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/grid-{}", args.model.name())));
    let args = GridArgs { out: Some(out.clone()), ..args.clone() };
    let rows = grid_search(family, &args.depths, &dataset, &cfg, &StdClock::new())?;
    let mut run = RunWriter::new(&out)?;
    let name = format!("grid_{}.csv", args.model.name());
    let csv = report::grid_csv(&rows);
    run.write(&name, &csv)?;
    let resolved = Resolved { train: &cfg, model: None, dataset_labels_sha256: &manifest.labels_sha256 };
    run.finish("gridsearch", options_of(&args), serde_json::to_value(&resolved).expect("serializable"))?;
    print!("{csv}");
    Ok(())
}

fn cmd_cv(args: &CvArgs) -> Result<()> {
    let cfg = args.fit.config()?;
    let choice = args.model.choice(args.depth);
    let (dataset, manifest) = store::load_dataset(&args.data)?;
    let spec = choice.build(&dataset.config.raster).map_err(usage)?;
    if args.k < 2 || args.k > dataset.train_ids.len() {
        return Err(usage(format!("--k must lie in 2..={}", dataset.train_ids.len())));
    }
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/cv-{}{}", choice.name(), choice.depth())));
    let args = CvArgs { out: Some(out.clone()), ..args.clone() };
    let cv = kfold(&spec, &dataset, args.k, &cfg, &StdClock::new())?;
    let mut run = RunWriter::new(&out)?;
    run.write(&format!("cv_{}.csv", choice.name()), report::cv_csv(&cv))?;
    let resolved = Resolved { train: &cfg, model: Some(choice), dataset_labels_sha256: &manifest.labels_sha256 };
    run.finish("cv", options_of(&args), serde_json::to_value(&resolved).expect("serializable"))?;
    println!("{}({}) {}-fold mse {} ± {}", choice.name(), choice.depth(), cv.k, cv.mean_mse, cv.std_mse);
    Ok(())
}

fn cmd_serve(args: &ServeArgs) -> Result<()> {
    let state = serve::AppState::load(args.dnn.as_deref(), args.cnn.as_deref(), args.data.as_deref(), args.static_dir.clone())?;
    let runtime = tokio::runtime::Runtime::new().map_err(|source| Error::Io { path: PathBuf::from("<runtime>"), source })?;
    let addr = format!("{}:{}", args.host, args.port);
    runtime.block_on(async {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|source| Error::Io { path: PathBuf::from(&addr), source })?;
        eprintln!("listening on http://{}", listener.local_addr().map(|a| a.to_string()).unwrap_or(addr.clone()));
        serve::serve(listener, state, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|source| Error::Io { path: PathBuf::from(&addr), source })
    })
}

pub fn dispatch(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Gridsearch(a) => cmd_gridsearch(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Serve(a) => cmd_serve(a),
    }
}

/// Runs the command line and returns the process exit code: 0 on success, 2 for
/// usage errors, 1 for everything else.
pub fn run(args: impl IntoIterator<Item = impl Into<OsString>>) -> i32 {
    let args = match expand_config(args.into_iter().map(Into::into).collect()) {
        Ok(args) => args,
        Err(e) => return report_error(&e, None),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => report_error(&e, Some(cli.command.name())),
    }
}

fn report_error(e: &Error, subcommand: Option<&str>) -> i32 {
    eprintln!("error: {e}");
    if let (Error::Usage(_), Some(sub)) = (e, subcommand) {
        eprintln!("\nFor more information, try `shapenergy {sub} --help`.");
    }
    e.exit_code()
}
