use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use rulelattice::binarize::BinarizeError;
use rulelattice::config::{ConfigError, RunConfig};
use rulelattice::data::{binarize_labels, load_csv, read_feature_rows, synth_generate, DataError};
use rulelattice::ensemble::EnsembleError;
use rulelattice::eval::{bench_scaling, run_cv, write_bench, write_table};
use rulelattice::model::{ModelError, RuleSet};
use rulelattice::pipeline::{train, PipelineError};
use rulelattice::selection::SelectionError;
use rulelattice::synthesis::Heuristic;

#[derive(Parser)]
#[command(
    name = "rulelattice",
    version,
    about = "Learn interpretable rule sets from tabular data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a rule set and save the model.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Model file to write.
        #[arg(long)]
        model: Option<PathBuf>,
        /// Training log to write (default: stderr).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Classify the rows of a CSV file with a saved model.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Predictions CSV (default: stdout).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Stratified cross-validation.
    Eval {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        folds: Option<usize>,
        /// JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Per-fold results table (CSV).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Time training on synthetic data over sizes, widths and ratios.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        /// Timing table (CSV, default: stdout).
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Write a synthetic dataset.
    Synth {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        n_records: Option<usize>,
        #[arg(long)]
        n_features: Option<usize>,
        #[arg(long)]
        ratio: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// The config file plus command-line overrides.
#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Dataset CSV, overriding `data.path`.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    n_estimators: Option<usize>,
    #[arg(long)]
    n_features: Option<usize>,
    /// H1 (coverage first) or H2 (distance first).
    #[arg(long, value_parser = parse_heuristic)]
    heuristic: Option<Heuristic>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    max_rules: Option<usize>,
    #[arg(long)]
    min_weight: Option<f64>,
    #[arg(long)]
    parallelism: Option<usize>,
}

fn parse_heuristic(s: &str) -> Result<Heuristic, String> {
    match s {
        "H1" | "h1" => Ok(Heuristic::CoverageFirst),
        "H2" | "h2" => Ok(Heuristic::DistanceFirst),
        _ => Err(format!("unknown heuristic `{s}` (expected H1 or H2)")),
    }
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, ConfigError> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(p) = &self.data {
            cfg.data.path = Some(p.clone());
        } else if let Some(p) = &cfg.data.path {
            // relative data paths are relative to the config file
            if p.is_relative() {
                if let Some(dir) = self.config.parent() {
                    cfg.data.path = Some(dir.join(p));
                }
            }
        }
        let e = &mut cfg.ensemble;
        e.seed = self.seed.unwrap_or(e.seed);
        e.n_estimators = self.n_estimators.unwrap_or(e.n_estimators);
        e.n_features = self.n_features.or(e.n_features);
        e.heuristic = self.heuristic.unwrap_or(e.heuristic);
        e.parallelism = self.parallelism.unwrap_or(e.parallelism);
        let s = &mut cfg.selection;
        s.alpha = self.alpha.unwrap_or(s.alpha);
        s.top_k = self.top_k.or(s.top_k);
        s.max_rules = self.max_rules.or(s.max_rules);
        s.min_weight = self.min_weight.unwrap_or(s.min_weight);
        cfg.discretization.threshold = self.threshold.unwrap_or(cfg.discretization.threshold);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug)]
enum Failure {
    Validation(String),
    Data(String),
    Internal(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Data(_) => 2,
            Failure::Internal(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Data(m) | Failure::Internal(m) => m,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match e {
            ConfigError::Io { .. } => Failure::Data(format!("config: {e}")),
            _ => Failure::Validation(format!("config: {e}")),
        }
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Data(format!("data: {e}"))
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { .. }
            | ModelError::Malformed(_)
            | ModelError::Version { .. }
            | ModelError::Inconsistent(_) => Failure::Data(format!("model: {e}")),
            ModelError::RowLength { .. } => Failure::Data(format!("model: {e}")),
            ModelError::Rule { .. } => Failure::Internal(format!("model: {e}")),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Config(c) => c.into(),
            PipelineError::Data(d) => d.into(),
            PipelineError::Model(m) => m.into(),
            PipelineError::Binarize(BinarizeError::InvalidCuts(_) | BinarizeError::NegativeThreshold(_)) => {
                Failure::Validation(e.to_string())
            }
            PipelineError::Binarize(BinarizeError::KindMismatch { .. }) => Failure::Data(e.to_string()),
            PipelineError::Ensemble(EnsembleError::NoEstimators | EnsembleError::FeatureCount { .. }) => {
                Failure::Validation(e.to_string())
            }
            PipelineError::Selection(SelectionError::Alpha(_) | SelectionError::TopK) => {
                Failure::Validation(e.to_string())
            }
            PipelineError::Eval(_) => Failure::Data(e.to_string()),
            _ => Failure::Internal(e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: io::Error) -> Failure {
    Failure::Data(format!("cannot write {}: {e}", path.display()))
}

/// Opens `path` for writing, or stdout when absent.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| io_failure(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| io_failure(path, e))
}

fn load_data(cfg: &RunConfig) -> Result<(rulelattice::RawDataset, Vec<bool>), Failure> {
    let path = cfg
        .data
        .path
        .as_ref()
        .ok_or_else(|| Failure::Validation("no dataset: set data.path or pass --data".into()))?;
    let ds = load_csv(path, &cfg.data.schema)?;
    let labels = binarize_labels(&ds);
    Ok((ds, labels))
}

fn cmd_train(run: &RunArgs, model: Option<&Path>, log: Option<&Path>) -> Result<(), Failure> {
    let cfg = run.load()?;
    let (ds, labels) = load_data(&cfg)?;
    let out = train(&ds, &labels, &cfg)?;
    let model_path = model
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.model.clone())
        .unwrap_or_else(|| PathBuf::from("model.json"));
    out.model.save(&model_path)?;
    let mut text = format!("config_sha256={}\n", cfg.fingerprint());
    text.push_str(&out.log());
    match log.map(Path::to_path_buf).or_else(|| cfg.output.log.clone()) {
        Some(p) => write_file(&p, &text)?,
        None => eprint!("{text}"),
    }
    print!("{}", out.model.render());
    Ok(())
}

fn cmd_predict(model: &Path, data: &Path, output: Option<&Path>) -> Result<(), Failure> {
    let rs = RuleSet::load(model)?;
    let file = File::open(data).map_err(|e| Failure::Data(format!("cannot read {}: {e}", data.display())))?;
    let empty = file.metadata().map(|m| m.len() == 0).unwrap_or(false);
    let mut out = sink(output)?;
    let fail = |e: io::Error| Failure::Data(format!("cannot write predictions: {e}"));
    if empty {
        return out.flush().map_err(fail);
    }
    let rows = read_feature_rows(file, &rs.schema.features)?;
    let negative = rs.schema.negative_label();
    let mut w = csv::Writer::from_writer(out);
    let csv_fail = |e: csv::Error| Failure::Data(format!("cannot write predictions: {e}"));
    w.write_record(["row_id", "prediction", "fired_rules"])
        .map_err(csv_fail)?;
    for (i, row) in rows.iter().enumerate() {
        let p = rs.predict(row)?;
        let label = if p.positive { &rs.schema.target_class } else { &negative };
        let fired: Vec<String> = p.fired.iter().map(usize::to_string).collect();
        w.write_record([i.to_string(), label.clone(), fired.join(";")])
            .map_err(csv_fail)?;
    }
    w.flush().map_err(fail)
}

fn cmd_eval(run: &RunArgs, folds: Option<usize>, report: Option<&Path>, table: Option<&Path>) -> Result<(), Failure> {
    let mut cfg = run.load()?;
    if let Some(k) = folds {
        cfg.eval.folds = k;
        cfg.validate()?;
    }
    let (ds, labels) = load_data(&cfg)?;
    if cfg.eval.dataset.is_none() {
        cfg.eval.dataset = cfg
            .data
            .path
            .as_ref()
            .and_then(|p| p.file_stem())
            .map(|s| s.to_string_lossy().into_owned());
    }
    let rep = run_cv(&ds, &labels, &cfg, cfg.eval.folds)?;
    print!("{}", rep.text());
    if let Some(p) = report.map(Path::to_path_buf).or_else(|| cfg.output.report.clone()) {
        let mut meta = cfg.clone();
        meta.output = Default::default();
        let json = serde_json::json!({
            "config_sha256": meta.fingerprint(),
            "config": meta,
            "report": rep,
        });
        let mut text = serde_json::to_string_pretty(&json).map_err(|e| Failure::Internal(e.to_string()))?;
        text.push('\n');
        write_file(&p, &text)?;
    }
    if let Some(p) = table.map(Path::to_path_buf).or_else(|| cfg.output.table.clone()) {
        write_table(&[rep], sink(Some(&p))?)?;
    }
    Ok(())
}

fn cmd_bench(run: &RunArgs, table: Option<&Path>) -> Result<(), Failure> {
    let cfg = run.load()?;
    let b = &cfg.bench;
    let rows = bench_scaling(&b.sizes, &b.features, &b.ratios, b.repeats, &cfg)?;
    let path = table.map(Path::to_path_buf).or_else(|| cfg.output.table.clone());
    write_bench(&rows, sink(path.as_deref())?)?;
    Ok(())
}

fn cmd_synth(
    config: Option<&Path>,
    n_records: Option<usize>,
    n_features: Option<usize>,
    ratio: Option<f64>,
    seed: Option<u64>,
    output: Option<&Path>,
) -> Result<(), Failure> {
    let (mut s, out_cfg) = match config {
        Some(p) => {
            let cfg = RunConfig::load(p)?;
            (cfg.synth.clone(), cfg.output.data.clone())
        }
        None => (Default::default(), None),
    };
    s.n_records = n_records.unwrap_or(s.n_records);
    s.n_features = n_features.unwrap_or(s.n_features);
    s.imbalance_ratio = ratio.unwrap_or(s.imbalance_ratio);
    s.seed = seed.unwrap_or(s.seed);
    let (ds, _) = synth_generate(s.n_records, s.n_features, s.imbalance_ratio, s.seed)
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let path = output.map(Path::to_path_buf).or(out_cfg);
    ds.write_csv(sink(path.as_deref())?)?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Train { run, model, log } => cmd_train(run, model.as_deref(), log.as_deref()),
        Command::Predict { model, data, output } => cmd_predict(model, data, output.as_deref()),
        Command::Eval {
            run,
            folds,
            report,
            table,
        } => cmd_eval(run, *folds, report.as_deref(), table.as_deref()),
        Command::Bench { run, table } => cmd_bench(run, table.as_deref()),
        Command::Synth {
            config,
            n_records,
            n_features,
            ratio,
            seed,
            output,
        } => cmd_synth(
            config.as_deref(),
            *n_records,
            *n_features,
            *ratio,
            *seed,
            output.as_deref(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
