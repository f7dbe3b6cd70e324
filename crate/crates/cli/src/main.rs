//! `mia`: command-line front end for the membership-inference toolkit.
//!
//! Commands compose through files: `mock-dataset` writes a manifest, `probe`
//! turns a manifest into a run file, and `stats`, `train` and `eval` read
//! run files.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use mia_core::backend::{Generator, MemoryError, MockBackend, MockModelMemory, RemoteBackend};
use mia_core::classifier::{auc, evaluate_splits, fit, roc_metrics, ClassifierError, EvalConfig, FitConfig, LabelMap};
use mia_core::manifest::{load_manifest, ManifestError, Orientation};
use mia_core::metric::{MetricDescriptor, DEFAULT_EMBED_SIDE};
use mia_core::mock_data::{make_mock_dataset, MockDataError, MockDatasetConfig, DEFAULT_EXPOSURE};
use mia_core::probe::{probe_dataset, read_run, write_run, ProbeConfig, ProbeError, RunFileError, RunHeader};
use mia_core::stats::{StatsError, StatsReport};
use mia_core::{builtin_schedule, BuiltinSchedule, Group, MembershipModel, Metric, ProbeRecord, StrengthSchedule};

#[derive(Parser)]
#[command(name = "mia", version, about = "Black-box membership inference for image-to-image generators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset: PNGs, manifest.json and memory.json.
    MockDataset(MockDatasetArgs),
    /// Probe every manifest record across a strength schedule.
    Probe(ProbeArgs),
    /// Per-strength t-tests, effect sizes and density plot data for two groups.
    Stats(StatsArgs),
    /// Fit a membership classifier on a run.
    Train(TrainArgs),
    /// Evaluate a saved model on a run, or self-evaluate with random splits.
    Eval(EvalArgs),
}

#[derive(Args)]
struct MockDatasetArgs {
    /// Number of in/out pairs.
    #[arg(long, default_value_t = 100)]
    pairs: usize,
    /// Image side in pixels.
    #[arg(long, default_value_t = 64)]
    side: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out_dir: PathBuf,
    /// How strongly in-training images were learned, in [0, 1].
    #[arg(long, default_value_t = DEFAULT_EXPOSURE)]
    exposure: f64,
    /// Also emit in_training_alt_caption and out_of_training_generated records.
    #[arg(long)]
    four_groups: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Mock,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricChoice {
    Lowfreq,
    Remote,
}

#[derive(Clone, Copy, ValueEnum)]
enum OrientationArg {
    ZeroIsSeedIdentical,
    ZeroIsSeedIgnored,
}

#[derive(Args)]
struct ProbeArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, value_enum, default_value = "mock")]
    backend: BackendKind,
    /// Generation sidecar URL for `--backend remote`.
    #[arg(long, env = "MIA_BACKEND_URL")]
    backend_url: Option<String>,
    /// Mock model memory; defaults to memory.json next to the manifest.
    #[arg(long)]
    memory: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "lowfreq")]
    metric: MetricChoice,
    /// Distance sidecar URL for `--metric remote`.
    #[arg(long)]
    metric_url: Option<String>,
    /// Thumbnail side for the lowfreq metric.
    #[arg(long, default_value_t = DEFAULT_EMBED_SIDE)]
    embed_side: usize,
    /// `sd`, `midjourney`, or a comma-separated strength list.
    #[arg(long, default_value = "sd")]
    schedule: String,
    /// Orientation of a custom strength list.
    #[arg(long, value_enum, default_value = "zero-is-seed-identical")]
    orientation: OrientationArg,
    /// Samples per strength.
    #[arg(short = 'n', long = "samples", default_value_t = 10)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = mia_core::probe::DEFAULT_CONCURRENCY)]
    concurrency: usize,
    /// Skip failing records instead of failing the run.
    #[arg(long)]
    lenient: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value = "in_training")]
    group_a: Group,
    #[arg(long, default_value = "out_of_training")]
    group_b: Group,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// CSV of fitted log-densities on a 200-point grid over [0, 1].
    #[arg(long)]
    plot_data: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    run: PathBuf,
    /// JSON object mapping group names to "in" or "out".
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    run: PathBuf,
    /// Model from `mia train`; scores every labelled record of the run.
    #[arg(long, conflicts_with = "self_eval", required_unless_present = "self_eval")]
    model: Option<PathBuf>,
    /// Repeated stratified train/test splits of the run itself.
    #[arg(long)]
    self_eval: bool,
    #[arg(long)]
    label_map: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    fpr: f64,
    #[arg(long, default_value_t = 100)]
    splits: usize,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Report JSON; printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit code.
#[derive(Debug)]
enum Failure {
    Io(String),
    Usage(String),
    Remote(String),
    Validation(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
            Failure::Remote(_) => 3,
            Failure::Validation(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::Usage(m) | Failure::Remote(m) | Failure::Validation(m) => m,
        }
    }
}

fn validation(e: impl Display) -> Failure {
    Failure::Validation(e.to_string())
}

impl From<ManifestError> for Failure {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Io { .. } => Failure::Io(e.to_string()),
            _ => validation(e),
        }
    }
}

impl From<RunFileError> for Failure {
    fn from(e: RunFileError) -> Self {
        match e {
            RunFileError::Io { .. } => Failure::Io(e.to_string()),
            _ => validation(e),
        }
    }
}

impl From<ClassifierError> for Failure {
    fn from(e: ClassifierError) -> Self {
        match e {
            ClassifierError::Io { .. } => Failure::Io(e.to_string()),
            _ => validation(e),
        }
    }
}

impl From<MemoryError> for Failure {
    fn from(e: MemoryError) -> Self {
        match e {
            MemoryError::Io { .. } => Failure::Io(e.to_string()),
            _ => validation(e),
        }
    }
}

impl From<MockDataError> for Failure {
    fn from(e: MockDataError) -> Self {
        match e {
            MockDataError::NoPairs | MockDataError::ZeroSide => Failure::Usage(e.to_string()),
            MockDataError::Io { .. } => Failure::Io(e.to_string()),
            _ => validation(e),
        }
    }
}

impl From<StatsError> for Failure {
    fn from(e: StatsError) -> Self {
        validation(e)
    }
}

impl From<ProbeError> for Failure {
    fn from(e: ProbeError) -> Self {
        if e.is_remote_failure() {
            Failure::Remote(e.to_string())
        } else {
            validation(e)
        }
    }
}

fn write_file(path: &Path, contents: &str) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure::Io(format!("cannot write {path:?}: {e}")))
}

fn read_file(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Io(format!("cannot read {path:?}: {e}")))
}

fn emit_json(value: &impl Serialize, out: Option<&Path>) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).expect("report serializes");
    text.push('\n');
    match out {
        Some(path) => write_file(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn parse_schedule(spec: &str, orientation: OrientationArg) -> Result<StrengthSchedule, Failure> {
    match spec {
        "sd" => return Ok(builtin_schedule(BuiltinSchedule::StableDiffusion)),
        "midjourney" => return Ok(builtin_schedule(BuiltinSchedule::Midjourney)),
        _ => {}
    }
    let values = spec
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::Usage(format!("--schedule {spec:?}: {e}")))?;
    let orientation = match orientation {
        OrientationArg::ZeroIsSeedIdentical => Orientation::ZeroIsSeedIdentical,
        OrientationArg::ZeroIsSeedIgnored => Orientation::ZeroIsSeedIgnored,
    };
    let label = format!("custom[{}]", values.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
    StrengthSchedule::new(values, orientation, label).map_err(|e| Failure::Usage(e.to_string()))
}

fn load_label_map(path: Option<&Path>) -> Result<LabelMap, Failure> {
    match path {
        Some(p) => Ok(LabelMap::from_json(&read_file(p)?)?),
        None => Ok(LabelMap::default()),
    }
}

fn mock_dataset(args: MockDatasetArgs) -> Result<(), Failure> {
    let cfg = MockDatasetConfig {
        exposure: args.exposure,
        four_groups: args.four_groups,
        ..MockDatasetConfig::new(args.pairs, args.side, args.seed)
    };
    let mut ds = make_mock_dataset(&cfg)?;
    ds.write_to(&args.out_dir)?;
    // Self-check through the same loader `probe` uses.
    let manifest = load_manifest(&args.out_dir.join("manifest.json"))?;
    eprintln!("wrote {} records to {}", manifest.records.len(), args.out_dir.display());
    Ok(())
}

fn probe(args: ProbeArgs) -> Result<(), Failure> {
    let manifest = load_manifest(&args.manifest)?;
    let schedule = parse_schedule(&args.schedule, args.orientation)?;
    if args.n == 0 || args.concurrency == 0 {
        return Err(Failure::Usage("-n and --concurrency must be at least 1".into()));
    }

    let backend: Box<dyn Generator> = match args.backend {
        BackendKind::Mock => {
            let path = args.memory.clone().unwrap_or_else(|| manifest.base_dir.join("memory.json"));
            Box::new(MockBackend::new(MockModelMemory::load(&path)?))
        }
        BackendKind::Remote => {
            let url = args
                .backend_url
                .as_deref()
                .ok_or_else(|| Failure::Usage("--backend remote needs --backend-url or MIA_BACKEND_URL".into()))?;
            let remote = RemoteBackend::new(url, args.concurrency);
            remote.health().map_err(|e| Failure::Remote(e.to_string()))?;
            Box::new(remote)
        }
    };
    let descriptor = match args.metric {
        MetricChoice::Lowfreq => MetricDescriptor::lowfreq(args.embed_side),
        MetricChoice::Remote => MetricDescriptor::remote(
            args.metric_url
                .as_deref()
                .ok_or_else(|| Failure::Usage("--metric remote needs --metric-url".into()))?,
        ),
    };
    let metric = Metric::from_descriptor(&descriptor, args.concurrency).map_err(Failure::Usage)?;

    let cfg = ProbeConfig {
        concurrency: args.concurrency,
        lenient: args.lenient,
        ..ProbeConfig::new(schedule, args.n, args.seed)
    };
    let total = manifest.records.len();
    let done = AtomicUsize::new(0);
    let progress = |id: &str| {
        let k = done.fetch_add(1, Ordering::Relaxed) + 1;
        eprintln!("[{k}/{total}] {id}");
    };
    let run = probe_dataset(backend.as_ref(), &metric, &manifest, &cfg, Some(&progress))?;
    for skipped in &run.skipped {
        eprintln!("skipped: {skipped}");
    }
    write_run(&args.out, &run.header, &run.records)?;
    eprintln!("wrote {} records to {}", run.records.len(), args.out.display());
    Ok(())
}

fn stats(args: StatsArgs) -> Result<(), Failure> {
    let (header, records) = read_run(&args.run)?;
    let report = StatsReport::build(&header.schedule_label, &records, args.group_a, args.group_b)?;
    if let Some(path) = &args.plot_data {
        write_file(path, &report.density_csv())?;
    }
    emit_json(&report, args.out.as_deref())
}

fn labelled(records: &[ProbeRecord], labels: &LabelMap) -> Result<(Vec<Vec<f64>>, Vec<bool>), Failure> {
    let (x, y) = labels.dataset(records);
    if x.is_empty() {
        return Err(validation("no run records match the label map"));
    }
    Ok((x, y))
}

fn train(args: TrainArgs) -> Result<(), Failure> {
    let (header, records) = read_run(&args.run)?;
    let (x, y) = labelled(&records, &load_label_map(args.label_map.as_deref())?)?;
    let model = fit(&x, &y, &header.schedule_label, &FitConfig::default())?;
    model.save(&args.out)?;
    eprintln!("trained on {} vectors; wrote {}", x.len(), args.out.display());
    Ok(())
}

/// Scores from a fixed model on every labelled record of a run.
#[derive(Serialize)]
struct ModelEvalReport {
    schedule_label: String,
    n_in: usize,
    n_out: usize,
    eer: f64,
    accuracy_at_eer: f64,
    tpr_at_fpr: f64,
    fpr_target: f64,
    auc: f64,
}

fn eval(args: EvalArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.fpr) {
        return Err(Failure::Usage(format!("--fpr {} outside [0,1]", args.fpr)));
    }
    let (header, records) = read_run(&args.run)?;
    let (x, y) = labelled(&records, &load_label_map(args.label_map.as_deref())?)?;
    match &args.model {
        Some(path) => {
            let model = MembershipModel::load(path)?;
            eval_model(&model, &header, &x, &y, args.fpr, args.out.as_deref())
        }
        None => {
            let cfg = EvalConfig {
                n_splits: args.splits,
                train_fraction: args.train_fraction,
                fpr_target: args.fpr,
                rng_seed: args.seed,
                fit: FitConfig::default(),
            };
            let summary = evaluate_splits(&x, &y, &header.schedule_label, &cfg)?;
            emit_json(&summary, args.out.as_deref())
        }
    }
}

fn eval_model(
    model: &MembershipModel,
    header: &RunHeader,
    x: &[Vec<f64>],
    y: &[bool],
    fpr: f64,
    out: Option<&Path>,
) -> Result<(), Failure> {
    model.check_schedule(&header.schedule_label, x[0].len())?;
    let (mut s_in, mut s_out) = (Vec::new(), Vec::new());
    for (v, &label) in x.iter().zip(y) {
        let s = model.score(v)?;
        if label {
            s_in.push(s);
        } else {
            s_out.push(s);
        }
    }
    let roc = roc_metrics(&s_in, &s_out, fpr)?;
    let report = ModelEvalReport {
        schedule_label: header.schedule_label.clone(),
        n_in: s_in.len(),
        n_out: s_out.len(),
        eer: roc.eer,
        accuracy_at_eer: roc.accuracy_at_eer,
        tpr_at_fpr: roc.tpr_at_fpr,
        fpr_target: fpr,
        auc: auc(&s_in, &s_out),
    };
    emit_json(&report, out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::MockDataset(a) => mock_dataset(a),
        Command::Probe(a) => probe(a),
        Command::Stats(a) => stats(a),
        Command::Train(a) => train(a),
        Command::Eval(a) => eval(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
