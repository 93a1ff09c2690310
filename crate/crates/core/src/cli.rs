//! The `pass` command line.
//!
//! Every command writes into a run directory (`--out`, default `run`) and
//! leaves a `manifest.json` there with the command, resolved configuration,
//! SHA-256 digests of everything read and written, and the wall time.
//! Failures print one line, `error[E_CODE]: message`, and exit nonzero.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    generate_synthetic, identity_halves, read_descriptors, read_descriptors_csv, write_descriptors,
    AttributeSpec, DataError, DescriptorSet, SynthSpec, DESCRIPTOR_VERSION,
};
use crate::experiment::{sweep, ExperimentError, ExperimentSpec, SweepParam, SweepRow};
use crate::metrics::{
    evaluate, leakage_probe, verification_pairs, BiasReport, BpcReport, EvalOptions,
    MetricsError, PairList, PairProtocol, ProbeConfig,
};
use crate::pass::{
    read_checkpoint, train_multipass, train_pass, write_checkpoint, PassConfig, PassError,
    Schedule, CHECKPOINT_VERSION,
};

/// A failure with a stable machine-readable code.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into().replace('\n', " "),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self.code {
            "E_USAGE" => 2,
            "E_CONFIG" => 3,
            "E_DATA" | "E_SPEC" | "E_DIM" => 4,
            "E_IO" => 5,
            "E_PROTOCOL" => 6,
            "E_CHECKPOINT" => 7,
            "E_SWEEP" => 8,
            _ => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message)
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        let code = match e {
            DataError::Io { .. } => "E_IO",
            DataError::Spec(_) => "E_SPEC",
            _ => "E_DATA",
        };
        CliError::new(code, e.to_string())
    }
}

impl From<PassError> for CliError {
    fn from(e: PassError) -> Self {
        match e {
            PassError::Data(d) => d.into(),
            PassError::Config { .. } => CliError::new("E_CONFIG", e.to_string()),
            PassError::Checkpoint(_) => CliError::new("E_CHECKPOINT", e.to_string()),
            PassError::Io { .. } => CliError::new("E_IO", e.to_string()),
            PassError::InputDim { .. } => CliError::new("E_DIM", e.to_string()),
            PassError::Nn(_) => CliError::new("E_INTERNAL", e.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Data(d) => d.into(),
            MetricsError::Io { .. } => CliError::new("E_IO", e.to_string()),
            MetricsError::Nn(_) => CliError::new("E_INTERNAL", e.to_string()),
            _ => CliError::new("E_PROTOCOL", e.to_string()),
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Data(d) => d.into(),
            ExperimentError::Pass(p) => p.into(),
            ExperimentError::Metrics(m) => m.into(),
            ExperimentError::Sweep(_) => CliError::new("E_SWEEP", e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "pass", version, about = "Adversarial attribute suppression for face descriptors")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Flat TOML file overriding profile values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory for outputs and the manifest.
    #[arg(long, global = true, default_value = "run")]
    pub out: PathBuf,
    /// Base hyperparameter profile.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic descriptor file.
    Generate(GenerateArgs),
    /// Train PASS or MultiPASS on a descriptor file.
    Train(TrainArgs),
    /// Apply a trained generator to a descriptor file.
    Transform(TransformArgs),
    /// Measure attribute leakage with a freshly trained probe.
    Probe(ProbeArgs),
    /// Verification TPR, bias, group spread and BPC.
    Evaluate(EvaluateArgs),
    /// Repeat the synthetic pipeline over values of one setting and several seeds.
    Sweep(SweepArgs),
    /// Tabulate the reports of finished runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 100)]
    pub identities: usize,
    #[arg(long = "per-id", default_value_t = 20)]
    pub per_id: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    /// `name:categories:leak`, repeatable.
    #[arg(long = "attr", value_parser = parse_attr)]
    pub attrs: Vec<AttributeSpec>,
    #[arg(long, default_value_t = 0.07)]
    pub spread: f64,
    /// Output file (default `<out>/descriptors.bin`).
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
    /// Also report a leakage probe on the raw descriptors for every attribute.
    #[arg(long)]
    pub probe_check: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pass,
    Multipass,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleArg {
    Oat,
    Aet,
}

impl From<ScheduleArg> for Schedule {
    fn from(s: ScheduleArg) -> Self {
        match s {
            ScheduleArg::Oat => Schedule::Oat,
            ScheduleArg::Aet => Schedule::Aet,
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// PASSDESC file (or `.csv`).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Pass)]
    pub mode: Mode,
    #[arg(long, value_enum)]
    pub schedule: Option<ScheduleArg>,
}

#[derive(Debug, Args)]
pub struct TransformArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    /// Output file (default `<out>/transformed.bin`).
    #[arg(short = 'o', long = "output")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    /// Probe training data; split 50/50 by identity when `--test` is absent.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long)]
    pub attr: String,
    #[arg(long, default_value_t = 5000)]
    pub iterations: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 256)]
    pub batch: usize,
    /// Train on raw rather than standardized features.
    #[arg(long)]
    pub no_standardize: bool,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Pair CSV (`i,j,genuine,group`); drawn from the data when absent.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// Attribute tagging drawn pairs by group.
    #[arg(long)]
    pub group_attr: Option<String>,
    #[arg(long, default_value_t = 2000)]
    pub genuine: usize,
    #[arg(long, default_value_t = 8000)]
    pub impostor: usize,
    #[arg(long, value_delimiter = ',', default_values_t = vec![1e-3, 1e-2, 1e-1])]
    pub fprs: Vec<f64>,
    /// Two group tags whose TPR gap is the bias.
    #[arg(long, value_delimiter = ',', num_args = 2)]
    pub bias_groups: Option<Vec<String>>,
    /// A previous `report.json` to compute BPC against.
    #[arg(long)]
    pub baseline: Option<PathBuf>,
    /// Keep the full ROC curve in the report.
    #[arg(long)]
    pub roc: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// `lambda`, `K`, `leak_strength` or `schedule`.
    #[arg(long)]
    pub param: String,
    #[arg(long, value_delimiter = ',', required = true)]
    pub values: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![0u64])]
    pub seeds: Vec<u64>,
    #[arg(long, value_enum, default_value_t = Mode::Pass)]
    pub mode: Mode,
    /// Concurrent sub-runs (capped by `PASS_THREADS`).
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 100)]
    pub identities: usize,
    #[arg(long = "per-id", default_value_t = 20)]
    pub per_id: usize,
    #[arg(long, default_value_t = 0.7)]
    pub leak: f64,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories containing `report.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
}

fn parse_attr(s: &str) -> Result<AttributeSpec, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [name, cats, leak] = parts.as_slice() else {
        return Err(format!("expected name:categories:leak, got {s:?}"));
    };
    let categories = cats
        .parse()
        .map_err(|_| format!("bad category count {cats:?}"))?;
    let leak = leak.parse().map_err(|_| format!("bad leak strength {leak:?}"))?;
    Ok(AttributeSpec::balanced(*name, categories, leak))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_s: f64,
    pub versions: BTreeMap<String, String>,
}

fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::new("E_IO", format!("{}: {e}", path.display()))
}

fn digest_file(path: &Path) -> Result<FileDigest, CliError> {
    let bytes = std::fs::read(path).map_err(|e| io_err(path, e))?;
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex::encode(Sha256::digest(&bytes)),
    })
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| io_err(path, e))
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

fn load_data(path: &Path) -> Result<DescriptorSet, CliError> {
    let is_csv = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    Ok(if is_csv {
        read_descriptors_csv(path)?
    } else {
        read_descriptors(path)?
    })
}

/// Collects digests and writes the manifest when the command finishes.
struct Run {
    command: &'static str,
    args: Vec<String>,
    seed: u64,
    out: PathBuf,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
    config: serde_json::Value,
    started: Instant,
}

impl Run {
    fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    fn output(&mut self, path: PathBuf) -> PathBuf {
        self.outputs.push(path.clone());
        path
    }

    fn finish(self) -> Result<(), CliError> {
        let mut versions = BTreeMap::new();
        versions.insert("pass_core".into(), env!("CARGO_PKG_VERSION").into());
        versions.insert("checkpoint_format".into(), CHECKPOINT_VERSION.to_string());
        versions.insert("descriptor_format".into(), DESCRIPTOR_VERSION.to_string());
        let manifest = RunManifest {
            command: self.command.into(),
            args: self.args,
            seed: self.seed,
            config: self.config,
            inputs: self
                .inputs
                .iter()
                .map(|p| digest_file(p))
                .collect::<Result<_, _>>()?,
            outputs: self
                .outputs
                .iter()
                .map(|p| digest_file(p))
                .collect::<Result<_, _>>()?,
            wall_time_s: self.started.elapsed().as_secs_f64(),
            versions,
        };
        write_file(&self.out.join("manifest.json"), to_json(&manifest))
    }
}

/// Resolves profile, config file, seed and schedule into a training config.
pub fn resolve_config(
    profile: Option<&str>,
    config_file: Option<&Path>,
    mode: Mode,
    schedule: Option<Schedule>,
    seed: u64,
) -> Result<PassConfig, CliError> {
    let default = match mode {
        Mode::Pass => "desk",
        Mode::Multipass => "desk-multipass",
    };
    let mut cfg = PassConfig::profile(profile.unwrap_or(default))?;
    let wanted = if mode == Mode::Pass { 1 } else { 2 };
    if cfg.adversaries.len() != wanted {
        return Err(CliError::new(
            "E_CONFIG",
            format!(
                "profile {:?} has {} adversaries but --mode {} needs {wanted}",
                profile.unwrap_or(default),
                cfg.adversaries.len(),
                if mode == Mode::Pass { "pass" } else { "multipass" }
            ),
        ));
    }
    if let Some(path) = config_file {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        cfg.apply_toml(&text)?;
    }
    if let Some(s) = schedule {
        cfg.schedule = s;
    }
    cfg.seed = seed;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return Ok(());
            }
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ");
            return Err(CliError::new("E_USAGE", line));
        }
    };
    std::fs::create_dir_all(&cli.out).map_err(|e| io_err(&cli.out, e))?;
    let mut run = Run {
        command: match cli.command {
            Command::Generate(_) => "generate",
            Command::Train(_) => "train",
            Command::Transform(_) => "transform",
            Command::Probe(_) => "probe",
            Command::Evaluate(_) => "evaluate",
            Command::Sweep(_) => "sweep",
            Command::Report(_) => "report",
        },
        args: args
            .iter()
            .skip(1)
            .map(|a| a.to_string_lossy().into_owned())
            .collect(),
        seed: cli.seed,
        out: cli.out.clone(),
        inputs: Vec::new(),
        outputs: Vec::new(),
        config: serde_json::Value::Null,
        started: Instant::now(),
    };
    if let Some(c) = &cli.config {
        run.input(c);
    }
    match &cli.command {
        Command::Generate(a) => generate(&cli, a, &mut run)?,
        Command::Train(a) => cmd_train(&cli, a, &mut run)?,
        Command::Transform(a) => transform(&cli, a, &mut run)?,
        Command::Probe(a) => probe(&cli, a, &mut run)?,
        Command::Evaluate(a) => cmd_evaluate(&cli, a, &mut run)?,
        Command::Sweep(a) => {
            let failed = cmd_sweep(&cli, a, &mut run)?;
            run.finish()?;
            if failed > 0 {
                return Err(CliError::new(
                    "E_SWEEP",
                    format!("{failed} sub-runs failed; see aggregate.csv"),
                ));
            }
            return Ok(());
        }
        Command::Report(a) => report(&cli, a, &mut run)?,
    }
    run.finish()
}

/// Entry point for the binary: runs and converts failures into an exit code.
pub fn main_exit_code() -> i32 {
    match run_cli(std::env::args_os()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}

fn generate(cli: &Cli, a: &GenerateArgs, run: &mut Run) -> Result<(), CliError> {
    let attributes = if a.attrs.is_empty() {
        vec![AttributeSpec::balanced("gender", 2, 0.7)]
    } else {
        a.attrs.clone()
    };
    let spec = SynthSpec {
        n_identities: a.identities,
        samples_per_identity: a.per_id,
        dim: a.dim,
        attributes,
        cluster_spread: a.spread,
        seed: cli.seed,
    };
    let set = generate_synthetic(&spec)?;
    let path = run.output(a.output.clone().unwrap_or_else(|| cli.out.join("descriptors.bin")));
    write_descriptors(&set, &path)?;
    run.config = serde_json::json!({
        "identities": a.identities,
        "per_id": a.per_id,
        "dim": a.dim,
        "spread": a.spread,
        "attributes": spec.attributes.iter().map(|s| serde_json::json!({
            "name": s.name, "categories": s.categories, "leak_strength": s.leak_strength,
        })).collect::<Vec<_>>(),
    });
    println!(
        "wrote {}: N={} D={} attributes=[{}]",
        path.display(),
        set.len(),
        set.dim(),
        set.attributes()
            .iter()
            .map(|c| format!("{}:{}", c.name, c.categories))
            .collect::<Vec<_>>()
            .join(", ")
    );
    if a.probe_check {
        let (train, test) = identity_halves(&set, 0.5, cli.seed)?;
        let cfg = ProbeConfig {
            seed: cli.seed,
            ..ExperimentSpec::synthetic_desk().probe
        };
        let mut reports = Vec::new();
        for name in set.attribute_names() {
            let r = leakage_probe(&train, &test, &name, &cfg)?;
            println!("baseline probe {name}: {:.4}", r.accuracy);
            reports.push(r);
        }
        write_file(&run.output(cli.out.join("report.json")), to_json(&reports))?;
    }
    Ok(())
}

fn cmd_train(cli: &Cli, a: &TrainArgs, run: &mut Run) -> Result<(), CliError> {
    let cfg = resolve_config(
        cli.profile.as_deref(),
        cli.config.as_deref(),
        a.mode,
        a.schedule.map(Into::into),
        cli.seed,
    )?;
    run.input(&a.data);
    let data = load_data(&a.data)?;
    let (model, log) = match a.mode {
        Mode::Pass => train_pass(&data, &cfg)?,
        Mode::Multipass => train_multipass(&data, &cfg)?,
    };
    run.config = serde_json::to_value(&cfg).expect("config serializes");
    write_checkpoint(&run.output(cli.out.join("checkpoint.bin")), &model, &cfg)?;
    log.write_csv(&run.output(cli.out.join("trainlog.csv")))?;
    write_file(&run.output(cli.out.join("stages.json")), to_json(&log.stages))?;
    write_file(&run.output(cli.out.join("config.toml")), cfg.to_toml())?;
    println!(
        "trained {} episodes; checkpoint at {}",
        cfg.n_ep,
        cli.out.join("checkpoint.bin").display()
    );
    Ok(())
}

fn transform(cli: &Cli, a: &TransformArgs, run: &mut Run) -> Result<(), CliError> {
    run.input(&a.checkpoint);
    run.input(&a.data);
    let (model, cfg) = read_checkpoint(&a.checkpoint)?;
    let data = load_data(&a.data)?;
    let out = model.transform(&data)?;
    let path = run.output(a.output.clone().unwrap_or_else(|| cli.out.join("transformed.bin")));
    write_descriptors(&out, &path)?;
    run.config = serde_json::to_value(&cfg).expect("config serializes");
    println!("wrote {}: N={} D={}", path.display(), out.len(), out.dim());
    Ok(())
}

fn probe(cli: &Cli, a: &ProbeArgs, run: &mut Run) -> Result<(), CliError> {
    run.input(&a.data);
    let data = load_data(&a.data)?;
    data.attribute(&a.attr)?;
    let (train, test) = match &a.test {
        Some(t) => {
            run.input(t);
            (data, load_data(t)?)
        }
        None => identity_halves(&data, 0.5, cli.seed)?,
    };
    let cfg = ProbeConfig {
        iterations: a.iterations,
        learning_rate: a.lr,
        batch_size: a.batch,
        standardize: !a.no_standardize,
        seed: cli.seed,
        ..ProbeConfig::default()
    };
    run.config = serde_json::to_value(&cfg).expect("config serializes");
    let report = leakage_probe(&train, &test, &a.attr, &cfg)?;
    write_file(&run.output(cli.out.join("report.json")), to_json(&report))?;
    println!("probe {}: accuracy {:.4}", report.attribute, report.accuracy);
    Ok(())
}

/// Contents of an `evaluate` report file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationFile {
    pub bias: BiasReport,
    pub bpc: Option<BpcReport>,
}

fn cmd_evaluate(cli: &Cli, a: &EvaluateArgs, run: &mut Run) -> Result<(), CliError> {
    run.input(&a.data);
    let data = load_data(&a.data)?;
    let pairs = match &a.pairs {
        Some(p) => {
            run.input(p);
            PairList::read_csv(p)?
        }
        None => {
            let list = verification_pairs(
                &data,
                &PairProtocol {
                    genuine: a.genuine,
                    impostor: a.impostor,
                    group_attribute: a.group_attr.clone(),
                    seed: cli.seed,
                },
            )?;
            list.write_csv(&run.output(cli.out.join("pairs.csv")))?;
            list
        }
    };
    let baseline = match &a.baseline {
        Some(p) => {
            run.input(p);
            let text = std::fs::read_to_string(p).map_err(|e| io_err(p, e))?;
            let file: EvaluationFile = serde_json::from_str(&text)
                .map_err(|e| CliError::new("E_DATA", format!("{}: {e}", p.display())))?;
            Some(file.bias)
        }
        None => None,
    };
    let options = EvalOptions {
        fprs: a.fprs.clone(),
        bias_groups: a
            .bias_groups
            .as_ref()
            .map(|g| [g[0].clone(), g[1].clone()]),
        include_roc: a.roc,
    };
    run.config = serde_json::to_value(&options).expect("options serialize");
    let (bias, bpc) = evaluate(data.features_f64().view(), &pairs, &options, baseline.as_ref())?;
    write_file(&run.output(cli.out.join("report.csv")), bias.to_csv(bpc.as_ref()))?;
    let file = EvaluationFile { bias, bpc };
    write_file(&run.output(cli.out.join("report.json")), to_json(&file))?;
    for e in &file.bias.entries {
        let bias = e.bias.map_or("-".to_string(), |b| format!("{b:.4}"));
        println!("FPR {:e}: TPR {:.4} bias {bias}", e.fpr, e.tpr_overall);
    }
    Ok(())
}

fn threads_for(jobs: usize) -> usize {
    let cap = std::env::var("PASS_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0);
    cap.map_or(jobs, |c| jobs.min(c)).max(1)
}

/// Flat table of sweep rows; failed rows carry their error message.
pub fn aggregate_csv(rows: &[SweepRow]) -> String {
    let ok: Vec<_> = rows.iter().filter_map(|r| r.outcome.as_ref().ok()).collect();
    let attrs: Vec<String> = ok
        .first()
        .map(|s| s.probe.keys().cloned().collect())
        .unwrap_or_default();
    let fprs: Vec<f64> = ok
        .first()
        .map(|s| s.report.entries.iter().map(|e| e.fpr).collect())
        .unwrap_or_default();
    let mut out = String::from("param,value,seed,status");
    for a in &attrs {
        let _ = write!(out, ",probe:{a}");
    }
    for f in &fprs {
        let _ = write!(out, ",tpr@{f},bias@{f},bpc@{f}");
    }
    out.push_str(",error\n");
    for r in rows {
        let _ = write!(out, "{},{},{}", r.param.name(), r.value, r.seed);
        match &r.outcome {
            Ok(s) => {
                out.push_str(",ok");
                for a in &attrs {
                    let _ = write!(out, ",{}", s.probe.get(a).map_or(String::new(), f64::to_string));
                }
                for f in &fprs {
                    let e = s.report.entries.iter().find(|e| e.fpr == *f);
                    let bpc = s
                        .bpc
                        .as_ref()
                        .and_then(|b| b.entries.iter().find(|e| e.fpr == *f))
                        .map_or("undefined".to_string(), |e| {
                            e.bpc.map_or("undefined".into(), |v| v.to_string())
                        });
                    let _ = write!(
                        out,
                        ",{},{},{bpc}",
                        e.map_or(String::new(), |e| e.tpr_overall.to_string()),
                        e.and_then(|e| e.bias).map_or(String::new(), |b| b.to_string()),
                    );
                }
                out.push_str(",\n");
            }
            Err(msg) => {
                out.push_str(",failed");
                for _ in 0..attrs.len() + 3 * fprs.len() {
                    out.push(',');
                }
                let _ = writeln!(out, ",\"{}\"", msg.replace('"', "'"));
            }
        }
    }
    out
}

fn cmd_sweep(cli: &Cli, a: &SweepArgs, run: &mut Run) -> Result<usize, CliError> {
    let param: SweepParam = a
        .param
        .parse()
        .map_err(|e: String| CliError::new("E_SWEEP", e))?;
    let cfg = resolve_config(
        cli.profile.as_deref(),
        cli.config.as_deref(),
        a.mode,
        None,
        cli.seed,
    )?;
    let mut spec = match a.mode {
        Mode::Pass => ExperimentSpec::synthetic_desk(),
        Mode::Multipass => ExperimentSpec::synthetic_desk_multipass(),
    };
    spec.synth.n_identities = a.identities;
    spec.synth.samples_per_identity = a.per_id;
    for attr in &mut spec.synth.attributes {
        attr.leak_strength = a.leak;
    }
    spec.synth.attributes.truncate(cfg.adversaries.len());
    for (attr, adv) in spec.synth.attributes.iter_mut().zip(&cfg.adversaries) {
        attr.name = adv.attribute.clone();
    }
    spec.pair_groups = Some(cfg.adversaries[0].attribute.clone());
    spec.pass = cfg;
    run.config = serde_json::json!({
        "param": param.name(),
        "values": a.values,
        "seeds": a.seeds,
        "pass": spec.pass,
    });
    let rows = sweep(&spec, param, &a.values, &a.seeds, threads_for(a.jobs))?;
    for r in &rows {
        let dir = cli
            .out
            .join("runs")
            .join(format!("{}={}", param.name(), r.value))
            .join(format!("seed{}", r.seed));
        std::fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
        write_file(&dir.join("report.json"), to_json(r))?;
        let sub = Run {
            command: "sweep-run",
            args: vec![format!("{}={}", param.name(), r.value)],
            seed: r.seed,
            out: dir.clone(),
            inputs: Vec::new(),
            outputs: vec![dir.join("report.json")],
            config: param
                .apply(&spec, &r.value)
                .map_or(serde_json::Value::Null, |s| {
                    serde_json::to_value(s.pass).expect("config serializes")
                }),
            started: Instant::now(),
        };
        sub.finish()?;
    }
    write_file(&run.output(cli.out.join("aggregate.csv")), aggregate_csv(&rows))?;
    write_file(&run.output(cli.out.join("report.json")), to_json(&rows))?;
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    println!(
        "{} sub-runs, {failed} failed; table at {}",
        rows.len(),
        cli.out.join("aggregate.csv").display()
    );
    Ok(failed)
}

fn report(cli: &Cli, a: &ReportArgs, run: &mut Run) -> Result<(), CliError> {
    let mut out = String::from("run,kind,key,value\n");
    for dir in &a.runs {
        let path = if dir.is_dir() { dir.join("report.json") } else { dir.clone() };
        run.input(&path);
        let text = std::fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::new("E_DATA", format!("{}: {e}", path.display())))?;
        let name = dir.display().to_string();
        if let Ok(file) = serde_json::from_value::<EvaluationFile>(value.clone()) {
            for line in file.bias.to_csv(file.bpc.as_ref()).lines().skip(1) {
                let (fpr, rest) = line.split_once(',').unwrap_or((line, ""));
                let (metric, v) = rest.split_once(',').unwrap_or((rest, ""));
                let _ = writeln!(out, "{name},verification,{metric}@{fpr},{v}");
            }
        } else if let Ok(p) = serde_json::from_value::<crate::metrics::ProbeReport>(value.clone()) {
            let _ = writeln!(out, "{name},probe,{},{}", p.attribute, p.accuracy);
        } else if let Ok(rows) = serde_json::from_value::<Vec<SweepRow>>(value) {
            for line in aggregate_csv(&rows).lines().skip(1) {
                let _ = writeln!(out, "{name},sweep,row,\"{line}\"");
            }
        } else {
            return Err(CliError::new(
                "E_DATA",
                format!("{}: not a probe, evaluation or sweep report", path.display()),
            ));
        }
    }
    write_file(&run.output(cli.out.join("summary.csv")), &out)?;
    print!("{out}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attr_flag_parses() {
        let a = parse_attr("gender:2:1.5").unwrap();
        assert_eq!((a.name.as_str(), a.categories, a.leak_strength), ("gender", 2, 1.5));
        assert!(parse_attr("gender:2").is_err());
        assert!(parse_attr("gender:x:1").is_err());
    }

    #[test]
    fn error_line_format() {
        let e = CliError::new("E_CONFIG", "field K:\nmust be >= 1");
        assert_eq!(e.to_string(), "error[E_CONFIG]: field K: must be >= 1");
        assert_eq!(e.exit_code(), 3);
    }

    #[test]
    fn multipass_mode_rejects_single_profile() {
        let err = resolve_config(Some("desk"), None, Mode::Multipass, None, 0).unwrap_err();
        assert_eq!(err.code, "E_CONFIG");
        let cfg = resolve_config(None, None, Mode::Multipass, Some(Schedule::Aet), 9).unwrap();
        assert_eq!((cfg.adversaries.len(), cfg.schedule, cfg.seed), (2, Schedule::Aet, 9));
    }
}
