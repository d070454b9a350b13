//! Batch runner: gradient checks, training, evaluation, dataset generation
//! and augmentation dumps driven by a JSON configuration.
//!
//! Exit codes: 0 success, 1 numeric or check failure, 2 usage, configuration
//! or I/O error.

pub mod config;

use std::ffi::OsString;
use std::fmt::{self, Write as _};
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use nlcnn_core::augment::apply_pipeline;
use nlcnn_core::dataset::{gen_synthetic, load_tep_dir, read_windows_csv, write_windows_csv, WindowedDataset};
use nlcnn_core::gradients::{check_suite, SuiteSummary};
use nlcnn_core::model::{load_model, save_model};
use nlcnn_core::training::{evaluate, history_csv, train, Metrics, Network};
use nlcnn_core::{SeededRng, VariantKind};

use config::DataSource;
pub use config::RunConfig;

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Config(String),
    Io(String),
    Numeric(String),
    Check(String),
}

impl CliError {
    pub fn config(e: impl fmt::Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Numeric(_) | CliError::Check(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
            CliError::Check(m) => write!(f, "check failed: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<nlcnn_core::Error> for CliError {
    fn from(e: nlcnn_core::Error) -> Self {
        use nlcnn_core::Error as E;
        match e {
            E::NonFinite(_) | E::NonFiniteLoss { .. } | E::ConstraintViolation { .. } => {
                CliError::Numeric(e.to_string())
            }
            E::Io(_) | E::Parse { .. } | E::RowCount { .. } => CliError::Io(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "nlcnn",
    version,
    about = "Nonlinear CNN gradient checks, training and data tools"
)]
pub struct Cli {
    /// JSON run configuration; defaults apply when omitted
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Overrides train.seed
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Overrides output.dir
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compare analytic gradients with finite differences on random instances
    Gradcheck {
        /// Variant to check, or `all`
        #[arg(long, default_value = "all")]
        variant: String,
        #[arg(long, default_value_t = 1e-6)]
        tol: f64,
        /// Instances per variant and kernel shape, starting at --seed
        #[arg(long, default_value_t = 50)]
        seeds: u64,
    },
    /// Train a network; writes metrics.csv, model.txt and config.json
    Train,
    /// Evaluate a saved model on the configured test set
    Eval {
        #[arg(long, value_name = "PATH")]
        model: PathBuf,
    },
    /// Write the configured train and test windows as CSV
    Synth,
    /// Apply the configured augmentations and write augmented.csv
    Augment {
        /// Windows CSV to augment instead of the configured training set
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let rendered = e.render().to_string();
            let _ = if code == 0 {
                stdout.write_all(rendered.as_bytes())
            } else {
                stderr.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, stdout) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "{e}");
            e.exit_code()
        }
    }
}

/// Loads the configuration and applies the global overrides.
pub fn effective_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<(), CliError> {
    let cfg = effective_config(cli)?;
    match &cli.command {
        Command::Gradcheck { variant, tol, seeds } => cmd_gradcheck(&cfg, variant, *tol, *seeds, stdout),
        Command::Train => cmd_train(&cfg, stdout),
        Command::Eval { model } => cmd_eval(&cfg, model, stdout),
        Command::Synth => cmd_synth(&cfg, stdout),
        Command::Augment { input } => cmd_augment(&cfg, input.as_deref(), stdout),
    }
}

fn out_line(stdout: &mut dyn Write, text: &str) -> Result<(), CliError> {
    stdout
        .write_all(text.as_bytes())
        .map_err(|e| CliError::Io(format!("stdout: {e}")))
}

/// Creates the output directory and writes `config.json` into it.
fn prepare_output(cfg: &RunConfig) -> Result<PathBuf, CliError> {
    let dir = cfg.output.dir.clone();
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let path = dir.join("config.json");
    fs::write(&path, cfg.to_json()).map_err(|e| io_err(&path, e))?;
    Ok(dir)
}

pub fn cmd_gradcheck(
    cfg: &RunConfig,
    variant: &str,
    tol: f64,
    seeds: u64,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    if tol.is_nan() || tol < 0.0 {
        return Err(CliError::Config(format!("--tol must be >= 0, got {tol}")));
    }
    if seeds == 0 {
        return Err(CliError::Config("--seeds must be >= 1".into()));
    }
    let kinds: Vec<VariantKind> = if variant == "all" {
        VariantKind::ALL.to_vec()
    } else {
        vec![variant.parse().map_err(CliError::config)?]
    };
    let start = cfg.train.seed;
    let end = start
        .checked_add(seeds)
        .ok_or_else(|| CliError::Config("seed range overflows".into()))?;
    let cases = check_suite(&kinds, start..end, tol)?;
    let summary = SuiteSummary::from_cases(&cases, tol);
    let mut text = summary.to_string();
    if let Some(worst) = cases
        .iter()
        .filter(|c| !c.report.pass())
        .max_by(|a, b| a.report.max_rel_error().total_cmp(&b.report.max_rel_error()))
    {
        let _ = writeln!(
            text,
            "\nworst instance: {} {}x{} seed {}\n{}",
            worst.kind, worst.k_h, worst.k_w, worst.seed, worst.report
        );
    }
    out_line(stdout, &text)?;
    if summary.pass() {
        Ok(())
    } else {
        Err(CliError::Check(format!(
            "max relative error {:e} exceeds {tol:e}",
            summary.max_rel_error()
        )))
    }
}

/// Train and test windows plus the label space.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub train: WindowedDataset,
    pub test: WindowedDataset,
    pub classes: usize,
}

impl PreparedData {
    pub fn input_dims(&self) -> Result<(usize, usize), CliError> {
        let first = self
            .train
            .windows
            .first()
            .or_else(|| self.test.windows.first())
            .ok_or_else(|| CliError::Config("dataset has no windows".into()))?;
        Ok(first.data.dims2()?)
    }
}

const INIT_STREAM: u64 = 3;
const TRAIN_DATA_STREAM: u64 = 4;
const TEST_DATA_STREAM: u64 = 5;
const AUGMENT_DUMP_STREAM: u64 = 6;

pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData, CliError> {
    let d = &cfg.data;
    match d.source {
        DataSource::Synthetic => {
            let base = SeededRng::new(cfg.train.seed);
            let train_seed = base.derive(TRAIN_DATA_STREAM).next_u64();
            let test_seed = base.derive(TEST_DATA_STREAM).next_u64();
            let train = gen_synthetic(d.synthetic.params(d.synthetic.train_count, train_seed))?.dataset;
            let test = gen_synthetic(d.synthetic.params(d.synthetic.test_count, test_seed))?.dataset;
            Ok(PreparedData {
                train,
                test,
                classes: 2,
            })
        }
        DataSource::Tep => {
            let path = d.path.as_ref().expect("validated");
            let tep = load_tep_dir(path, &d.faults, d.win_len, d.stride)?;
            Ok(PreparedData {
                train: tep.train,
                test: tep.test,
                classes: tep.classes.len(),
            })
        }
    }
}

pub fn format_metrics(m: &Metrics) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
    let mut s = String::new();
    let _ = writeln!(s, "accuracy     {:.4}", m.accuracy);
    let _ = writeln!(s, "false_alarm  {}", opt(m.false_alarm));
    let _ = writeln!(s, "mean_loss    {:.6}", m.mean_loss);
    for (k, r) in m.detection_rate.iter().enumerate() {
        let _ = writeln!(s, "detection[{k}] {}", opt(*r));
    }
    let _ = writeln!(s, "confusion (rows: true, cols: predicted)");
    for row in &m.confusion {
        let cells: Vec<String> = row.iter().map(|c| format!("{c:>6}")).collect();
        let _ = writeln!(s, "{}", cells.join(""));
    }
    s
}

pub fn cmd_train(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let data = prepare_data(cfg)?;
    let (rows, cols) = data.input_dims()?;
    let policy = cfg.constraints.policy()?;
    let mut init = SeededRng::new(cfg.train.seed).derive(INIT_STREAM);
    let mut net = Network::new(rows, cols, &cfg.layer_specs()?, data.classes, policy, &mut init)?;
    let train_cfg = cfg.train_config()?;
    let eval = (!data.test.is_empty()).then_some(&data.test);
    let dir = prepare_output(cfg)?;
    let history = train(&mut net, &data.train, eval, &train_cfg)?;

    let metrics_path = dir.join("metrics.csv");
    fs::write(&metrics_path, history_csv(&history, data.classes)).map_err(|e| io_err(&metrics_path, e))?;
    let model_path = dir.join("model.txt");
    save_model(&net, &model_path).map_err(|e| io_err(&model_path, e))?;

    let mut text = format!(
        "trained {} epochs on {} windows ({} classes)\n",
        train_cfg.epochs,
        data.train.len(),
        data.classes
    );
    if let Some(m) = history.iter().rev().find_map(|r| r.metrics.as_ref()) {
        text.push_str(&format_metrics(m));
    }
    let _ = writeln!(text, "wrote {} and {}", metrics_path.display(), model_path.display());
    out_line(stdout, &text)
}

pub fn cmd_eval(cfg: &RunConfig, model: &Path, stdout: &mut dyn Write) -> Result<(), CliError> {
    let net = load_model(model).map_err(|e| io_err(model, e))?;
    let data = prepare_data(cfg)?;
    let (rows, cols) = data.input_dims()?;
    if (rows, cols) != (net.input_rows, net.input_cols) || data.classes != net.classes() {
        return Err(CliError::Config(format!(
            "model expects {}x{} windows and {} classes; data has {rows}x{cols} and {}",
            net.input_rows,
            net.input_cols,
            net.classes(),
            data.classes
        )));
    }
    prepare_output(cfg)?;
    let set = if data.test.is_empty() { &data.train } else { &data.test };
    let m = evaluate(&net, set)?;
    out_line(
        stdout,
        &format!("evaluated {} windows\n{}", set.len(), format_metrics(&m)),
    )
}

pub fn cmd_synth(cfg: &RunConfig, stdout: &mut dyn Write) -> Result<(), CliError> {
    let data = prepare_data(cfg)?;
    let dir = prepare_output(cfg)?;
    let train_path = dir.join("train.csv");
    let test_path = dir.join("test.csv");
    write_windows_csv(&data.train, &train_path).map_err(|e| io_err(&train_path, e))?;
    write_windows_csv(&data.test, &test_path).map_err(|e| io_err(&test_path, e))?;
    out_line(
        stdout,
        &format!(
            "wrote {} train and {} test windows to {}\n",
            data.train.len(),
            data.test.len(),
            dir.display()
        ),
    )
}

pub fn cmd_augment(cfg: &RunConfig, input: Option<&Path>, stdout: &mut dyn Write) -> Result<(), CliError> {
    let mut ds = match input {
        Some(path) => read_windows_csv(path, cfg.data.stride).map_err(|e| io_err(path, e))?,
        None => prepare_data(cfg)?.train,
    };
    let specs = cfg.train_config()?.augment;
    let mut rng = SeededRng::new(cfg.train.seed).derive(AUGMENT_DUMP_STREAM);
    for w in &mut ds.windows {
        w.data = apply_pipeline(&w.data, &specs, &mut rng)?;
    }
    let dir = prepare_output(cfg)?;
    let path = dir.join("augmented.csv");
    write_windows_csv(&ds, &path).map_err(|e| io_err(&path, e))?;
    out_line(
        stdout,
        &format!("wrote {} augmented windows to {}\n", ds.len(), path.display()),
    )
}
