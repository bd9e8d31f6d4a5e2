//! `lbdmids` command-line front end. Every subcommand is also callable as a
//! function so it can be driven from tests.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 data error,
//! 3 training error, 4 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lbdmids::config::{preset_by_name, ConfigError, ModelConfig, Variant, DEFAULT_BATCH_SIZE, DEFAULT_PATIENCE, PRESET_NAMES};
use lbdmids::container::{write_atomic, ContainerError};
use lbdmids::data::{
    ingest_many, numerize, prepare, DataError, DatasetFile, DatasetSchema, SchemaKind, WindowedDataset,
    DEFAULT_TIMESTEPS,
};
use lbdmids::metrics::{self, render_report, table_notes, ClassificationReport, MetricsError, ReportFormat};
use lbdmids::model_io::{load_model, save_model, ModelIoError};
use lbdmids::synth::{generate_to_file, parse_counts, ProfileSet, SynthError};
use lbdmids::train::{train_model, TrainError, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitKind {
    Usage = 1,
    Data = 2,
    Training = 3,
    Io = 4,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ExitKind,
    pub message: String,
}

impl CliError {
    fn new(kind: ExitKind, message: impl Into<String>) -> Self {
        Self {
            kind,
            message: message.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.kind as i32
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn data_kind(e: &DataError) -> ExitKind {
    match e {
        DataError::Io { .. } => ExitKind::Io,
        DataError::InvalidFraction(_) | DataError::Config(_) | DataError::UnknownSchema(_) => ExitKind::Usage,
        DataError::Container(c) => container_kind(c),
        DataError::InFile { source, .. } => data_kind(source),
        _ => ExitKind::Data,
    }
}

fn container_kind(e: &ContainerError) -> ExitKind {
    match e {
        ContainerError::Io { .. } => ExitKind::Io,
        _ => ExitKind::Data,
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        Self::new(data_kind(&e), e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        Self::new(ExitKind::Usage, e.to_string())
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let kind = match e {
            SynthError::Io { .. } => ExitKind::Io,
            _ => ExitKind::Usage,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let kind = match e {
            TrainError::Config(_) => ExitKind::Usage,
            TrainError::Data(_)
            | TrainError::Shape(_)
            | TrainError::SchemaMismatch { .. }
            | TrainError::StatsMismatch(_) => ExitKind::Data,
            TrainError::NonFinite { .. } | TrainError::Nn(_) | TrainError::Loss(_) | TrainError::Metrics(_) => {
                ExitKind::Training
            }
        };
        Self::new(kind, e.to_string())
    }
}

impl From<ModelIoError> for CliError {
    fn from(e: ModelIoError) -> Self {
        let kind = match &e {
            ModelIoError::Container(c) => container_kind(c),
            ModelIoError::Write { .. } => ExitKind::Io,
            _ => ExitKind::Data,
        };
        Self::new(kind, e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        Self::new(ExitKind::Data, e.to_string())
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::new(ExitKind::Io, format!("{}: {e}", path.display()))
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| io_error(path, e))
}

fn emit(w: &mut dyn Write, text: &str) -> Result<(), CliError> {
    w.write_all(text.as_bytes())
        .map_err(|e| CliError::new(ExitKind::Io, format!("cannot write output: {e}")))
}

#[derive(Debug, Parser)]
#[command(name = "lbdmids", version, about = "LSTM-based flow intrusion detection: generate, preprocess, train, evaluate")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic labeled flow CSV.
    Generate(GenerateArgs),
    /// Clean, split, normalize and window flow CSVs into dataset files.
    Preprocess(PreprocessArgs),
    /// Train a model on preprocessed dataset files.
    Train(TrainArgs),
    /// Score a model on a dataset file or labeled CSV and print a per-class report.
    Evaluate(EvaluateArgs),
    /// Write per-window predictions and class probabilities.
    Predict(PredictArgs),
    /// Re-render a saved structured report.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProfileKind {
    /// Every class well separated on every feature.
    Separated,
    /// Separated, except the second and third classes overlap.
    Overlap,
    /// The first two classes share marginals and differ only in autocorrelation.
    Temporal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Csv,
    Structured,
}

impl From<OutputFormat> for ReportFormat {
    fn from(f: OutputFormat) -> Self {
        match f {
            OutputFormat::Table => ReportFormat::Table,
            OutputFormat::Csv => ReportFormat::Csv,
            OutputFormat::Structured => ReportFormat::Structured,
        }
    }
}

#[derive(Debug, Args)]
pub struct SchemaArgs {
    /// Built-in schema: unsw_nb15 or bot_iot.
    #[arg(long, default_value = "bot_iot")]
    pub schema: String,
    /// TOML schema definition; overrides --schema.
    #[arg(long)]
    pub schema_file: Option<PathBuf>,
}

impl SchemaArgs {
    fn load(&self) -> Result<DatasetSchema, CliError> {
        match &self.schema_file {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| io_error(p, e))?;
                Ok(DatasetSchema::from_toml(&text).map_err(|e| e.in_file(p))?)
            }
            None => Ok(DatasetSchema::builtin(self.schema.parse::<SchemaKind>()?)?),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Rows per class, e.g. Normal=1000,DDoS=1000.
    #[arg(long)]
    pub counts: String,
    /// Random seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Built-in class profiles.
    #[arg(long, value_enum, default_value_t = ProfileKind::Separated)]
    pub profile: ProfileKind,
    /// TOML profile set; overrides --profile.
    #[arg(long)]
    pub profile_file: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Input flow CSV; repeat for several files.
    #[arg(long = "input", required = true, num_args = 1..)]
    pub inputs: Vec<PathBuf>,
    #[command(flatten)]
    pub schema: SchemaArgs,
    /// Rows per window.
    #[arg(long, default_value_t = DEFAULT_TIMESTEPS)]
    pub timesteps: usize,
    /// Share of each class sent to the training partition, in (0, 1).
    #[arg(long, default_value_t = 0.75)]
    pub train_fraction: f64,
    /// Split seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Directory for train.lbdd, validation.lbdd and summary.json.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Training dataset file from `preprocess`.
    #[arg(long)]
    pub train: PathBuf,
    /// Validation dataset file from `preprocess`.
    #[arg(long)]
    pub validation: PathBuf,
    /// Published configuration: unsw-stacked, unsw-bilstm, botiot-stacked or botiot-bilstm.
    #[arg(long)]
    pub preset: Option<String>,
    /// stacked or bidirectional [default: stacked, or the preset's].
    #[arg(long)]
    pub variant: Option<Variant>,
    /// Cells per layer, bottom first, e.g. 32,32.
    #[arg(long, value_delimiter = ',')]
    pub layers: Option<Vec<usize>>,
    /// Maximum number of epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adam learning rate.
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Windows per minibatch [default: 32].
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Window length [default: the dataset's].
    #[arg(long)]
    pub timesteps: Option<usize>,
    /// Seed for initialization and shuffling [default: 42].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Clip gradients to this global L2 norm [default: off].
    #[arg(long)]
    pub clip_norm: Option<f64>,
    /// Epochs without validation-loss improvement before stopping [default: 5].
    #[arg(long)]
    pub patience: Option<usize>,
    /// Run every epoch regardless of validation loss.
    #[arg(long, conflicts_with = "patience")]
    pub no_early_stop: bool,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Epoch-history CSV [default: next to the model, `<stem>.history.csv`].
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file (.lbdd) prepared with this model's statistics, or a labeled flow CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML schema for CSV input when the model uses a custom schema.
    #[arg(long)]
    pub schema_file: Option<PathBuf>,
    /// Report format on standard output.
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
    /// Also write the structured report to this file.
    #[arg(long)]
    pub report_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Model file from `train`.
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset file (.lbdd) or labeled flow CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// TOML schema for CSV input when the model uses a custom schema.
    #[arg(long)]
    pub schema_file: Option<PathBuf>,
    /// Output CSV [default: standard output].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Structured report written by `evaluate --report-out`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output format.
    #[arg(long, value_enum, default_value_t = OutputFormat::Table)]
    pub format: OutputFormat,
}

/// Parses `args` (program name first) and runs the subcommand. Returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let text = e.render().to_string();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = out.write_all(text.as_bytes());
                    0
                }
                _ => {
                    let _ = err.write_all(text.as_bytes());
                    ExitKind::Usage as i32
                }
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(&a, err),
        Command::Preprocess(a) => cmd_preprocess(&a, err),
        Command::Train(a) => cmd_train(&a, err),
        Command::Evaluate(a) => cmd_evaluate(&a, out, err),
        Command::Predict(a) => cmd_predict(&a, out),
        Command::Report(a) => cmd_report(&a, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.code()
        }
    }
}

/// Caps rayon's worker threads from `LBDMIDS_THREADS`, if set.
pub fn configure_threads() -> Result<Option<usize>, CliError> {
    let Ok(v) = std::env::var("LBDMIDS_THREADS") else {
        return Ok(None);
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::new(ExitKind::Usage, format!("LBDMIDS_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::new(ExitKind::Usage, format!("cannot size thread pool: {e}")))?;
    Ok(Some(n))
}

pub fn cmd_generate(a: &GenerateArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let schema = a.schema.load()?;
    let counts = parse_counts(&a.counts)?;
    let profiles = match &a.profile_file {
        Some(p) => ProfileSet::from_toml(&std::fs::read_to_string(p).map_err(|e| io_error(p, e))?)?,
        None => match a.profile {
            ProfileKind::Separated => ProfileSet::separated(&schema),
            ProfileKind::Overlap => ProfileSet::with_overlap(&schema),
            ProfileKind::Temporal => {
                if counts.len() < 2 {
                    return Err(CliError::new(ExitKind::Usage, "temporal profiles need two classes in --counts"));
                }
                ProfileSet::temporal_only(&schema, &counts[0].0, &counts[1].0)
            }
        },
    };
    let g = generate_to_file(&a.out, &schema, &profiles, &counts, a.seed)?;
    emit(err, &format!("wrote {} rows to {}\n", g.records.len(), a.out.display()))
}

pub fn cmd_preprocess(a: &PreprocessArgs, err: &mut dyn Write) -> Result<(), CliError> {
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(DataError::InvalidFraction(a.train_fraction).into());
    }
    if a.timesteps == 0 {
        return Err(CliError::new(ExitKind::Usage, "--timesteps must be at least 1"));
    }
    let schema = a.schema.load()?;
    let ingested = ingest_many(&a.inputs, &schema)?;
    for d in ingested.diagnostics.iter().take(10) {
        emit(err, &format!("skipped {d}\n"))?;
    }
    let p = prepare(&ingested, &schema, a.train_fraction, a.timesteps, a.seed)?;
    for d in p.summary.numerize.diagnostics.iter().take(10) {
        emit(err, &format!("dropped {d}\n"))?;
    }
    for w in &p.summary.warnings {
        emit(err, &format!("warning: {w}\n"))?;
    }
    std::fs::create_dir_all(&a.out_dir).map_err(|e| io_error(&a.out_dir, e))?;
    let summary = serde_json::to_string_pretty(&p.summary).expect("summary serializes") + "\n";
    let train_path = a.out_dir.join("train.lbdd");
    let val_path = a.out_dir.join("validation.lbdd");
    write_out(&train_path, &p.train.to_bytes()?)?;
    write_out(&val_path, &p.validation.to_bytes()?)?;
    write_out(&a.out_dir.join("summary.json"), summary.as_bytes())?;
    emit(
        err,
        &format!(
            "kept {} of {} rows; {} training and {} validation windows of {} rows\n",
            p.summary.rows_kept,
            p.summary.records_ingested,
            p.summary.train_windows,
            p.summary.validation_windows,
            a.timesteps
        ),
    )
}

/// Preset (if any) overlaid with explicit flags. Without a preset, layers, epochs
/// and learning rate must be given.
pub fn resolve_config(a: &TrainArgs, dataset_timesteps: usize) -> Result<ModelConfig, CliError> {
    let mut missing = Vec::new();
    let mut config = match &a.preset {
        Some(name) => preset_by_name(name).ok_or_else(|| {
            CliError::new(
                ExitKind::Usage,
                format!("unknown preset {name:?}; choose one of {}", PRESET_NAMES.join(", ")),
            )
        })?,
        None => {
            for (flag, present) in [
                ("--layers", a.layers.is_some()),
                ("--epochs", a.epochs.is_some()),
                ("--learning-rate", a.learning_rate.is_some()),
            ] {
                if !present {
                    missing.push(format!("{flag} is required without --preset"));
                }
            }
            ModelConfig::new(Variant::Stacked, Vec::new(), 0, 0.0)
        }
    };
    config.timesteps = dataset_timesteps;
    if let Some(v) = a.variant {
        config.variant = v;
    }
    if let Some(l) = &a.layers {
        config.layer_cells = l.clone();
    }
    if let Some(e) = a.epochs {
        config.epochs = e;
    }
    if let Some(lr) = a.learning_rate {
        config.learning_rate = lr;
    }
    if let Some(b) = a.batch_size {
        config.batch_size = b;
    }
    if let Some(t) = a.timesteps {
        config.timesteps = t;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if a.clip_norm.is_some() {
        config.clip_global_norm = a.clip_norm;
    }
    if let Some(p) = a.patience {
        config.early_stop_patience = Some(p);
    }
    if a.no_early_stop {
        config.early_stop_patience = None;
    }
    if !missing.is_empty() {
        return Err(CliError::new(
            ExitKind::Usage,
            format!("invalid model configuration: {}", missing.join("; ")),
        ));
    }
    config.validate()?;
    Ok(config)
}

pub fn default_history_path(model: &Path) -> PathBuf {
    let stem = model.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
    model.with_file_name(format!("{stem}.history.csv"))
}

pub fn cmd_train(a: &TrainArgs, err: &mut dyn Write) -> Result<(), CliError> {
    let train = DatasetFile::load(&a.train)?;
    let validation = DatasetFile::load(&a.validation)?;
    let config = resolve_config(a, train.data.timesteps)?;
    emit(
        err,
        &format!(
            "defaults for unpublished knobs: batch_size={DEFAULT_BATCH_SIZE} timesteps={DEFAULT_TIMESTEPS} patience={DEFAULT_PATIENCE}\nconfig: {config}\n"
        ),
    )?;
    let model = train_model(&train, &validation, &config)?;
    let history_path = a.history.clone().unwrap_or_else(|| default_history_path(&a.out));
    save_model(&model, &a.out)?;
    write_out(&history_path, model.history.to_csv().as_bytes())?;
    let best = model.history.best().expect("training ran at least one epoch");
    emit(
        err,
        &format!(
            "trained {} epochs; kept epoch {} (val_loss {:.4}, val_acc {:.4}); wrote {} and {}\n",
            model.history.len(),
            best.epoch,
            best.val_loss,
            best.val_accuracy,
            a.out.display(),
            history_path.display()
        ),
    )
}

fn is_dataset_file(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("lbdd"))
}

/// Windows ready for the model, from either a dataset file or a raw labeled CSV.
fn load_windows(model: &TrainedModel, data: &Path, schema_file: Option<&PathBuf>) -> Result<WindowedDataset, CliError> {
    if is_dataset_file(data) {
        let file = DatasetFile::load(data)?;
        model.check_dataset(&file)?;
        return Ok(file.data);
    }
    let schema = match schema_file {
        Some(p) => SchemaArgs {
            schema: String::new(),
            schema_file: Some(p.clone()),
        }
        .load()?,
        None => DatasetSchema::builtin(model.schema)?,
    };
    let ingested = ingest_many(std::slice::from_ref(&data.to_path_buf()), &schema).map_err(|e| match e {
        DataError::MissingColumn { .. } => CliError::new(
            ExitKind::Data,
            format!("schema mismatch: model expects {} data; {e}", model.schema.as_str()),
        ),
        e => e.into(),
    })?;
    let num = numerize(&ingested.records, &schema).map_err(|e| e.in_file(data))?;
    Ok(model.prepare_raw(&schema, &num.features, &num.labels)?)
}

pub fn cmd_evaluate(a: &EvaluateArgs, out: &mut dyn Write, err: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let ds = load_windows(&model, &a.data, a.schema_file.as_ref())?;
    let start = Instant::now();
    let predictions = model.predict(&ds)?;
    let elapsed = start.elapsed().as_secs_f64();
    let cm = metrics::confusion_named(&ds.labels, &predictions.labels, model.class_names.clone())?;
    let report = metrics::report(&cm)?;
    if let Some(p) = &a.report_out {
        write_out(p, render_report(&report, ReportFormat::Structured).as_bytes())?;
    }
    let timing = format!(
        "{} windows scored in {:.3} s ({:.4} ms/sample)\n",
        ds.len(),
        elapsed,
        1e3 * elapsed / ds.len() as f64
    );
    emit(out, &render_report(&report, a.format.into()))?;
    if a.format == OutputFormat::Table {
        emit(out, &table_notes(&report))?;
        emit(out, &timing)
    } else {
        emit(err, &timing)
    }
}

pub fn cmd_predict(a: &PredictArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let model = load_model(&a.model)?;
    let ds = load_windows(&model, &a.data, a.schema_file.as_ref())?;
    let p = model.predict(&ds)?;
    let mut text = String::from("window,predicted,actual");
    for c in &model.class_names {
        text += &format!(",p_{c}");
    }
    text.push('\n');
    for (i, (label, probs)) in p.labels.iter().zip(&p.probabilities).enumerate() {
        text += &format!("{i},{},{}", model.class_names[*label], model.class_names[ds.labels[i]]);
        for v in probs {
            text += &format!(",{v}");
        }
        text.push('\n');
    }
    match &a.out {
        Some(path) => write_out(path, text.as_bytes()),
        None => emit(out, &text),
    }
}

pub fn cmd_report(a: &ReportArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = std::fs::read_to_string(&a.input).map_err(|e| io_error(&a.input, e))?;
    let report: ClassificationReport = serde_json::from_str(&text)
        .map_err(|e| CliError::new(ExitKind::Data, format!("{}: not a structured report: {e}", a.input.display())))?;
    emit(out, &render_report(&report, a.format.into()))?;
    if a.format == OutputFormat::Table {
        emit(out, &table_notes(&report))?;
    }
    Ok(())
}
