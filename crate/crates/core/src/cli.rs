//! The `emgds` command line.
//!
//! Exit codes: 0 on success, 1 on runtime or data errors, 2 on usage errors.
//! Machine-readable artifacts go to files; standard output gets a short
//! human summary.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{ArgAction, Args, Parser, Subcommand};
use serde::Serialize;

use crate::data::{self, ActivityClass, SplitProtocol, SynthConfig, Window};
use crate::features::{self, FeatureConfig, FeatureTable};
use crate::grouping::{self, DendrogramFormat, Linkage};
use crate::pca::{fit_pca, Retain};
use crate::pipeline::{
    self, EvalReport, Hyper, ModelDocument, SplitDescriptor, TrainedModel, REPORT_FORMAT_VERSION,
};
use crate::svm::{Gamma, KernelSpec, SmoParams};

#[derive(Debug, Parser)]
#[command(name = "emgds", version, about = "Dual-stage sEMG grasp classification")]
pub struct Cli {
    /// Master seed for synthesis, splitting and SMO.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a seeded synthetic two-channel corpus.
    Synth(SynthArgs),
    /// Extract feature vectors from a corpus CSV.
    Features(FeaturesArgs),
    /// Train a single- or dual-stage model on the train split.
    Train(TrainArgs),
    /// Evaluate a model on its held-out split.
    Evaluate(EvaluateArgs),
    /// Cluster the class means and export the dendrogram.
    Dendrogram(DendrogramArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub subjects: usize,
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
    /// Seconds per recording.
    #[arg(long, default_value_t = 6.0)]
    pub duration: f64,
    /// Power-group RMS level relative to the precision group.
    #[arg(long, default_value_t = 3.0)]
    pub power_scale: f64,
}

#[derive(Debug, Args)]
pub struct FeaturesArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub ar_order: usize,
    /// `full` or `sliding:LEN:STEP` (samples).
    #[arg(long, default_value = "full")]
    pub window: Window,
    /// Sampling rate of the corpus, Hz.
    #[arg(long, default_value_t = 500.0)]
    pub rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Mode {
    Single,
    Dual,
}

#[derive(Debug, Args)]
pub struct RetainArgs {
    /// Keep the fewest components reaching this explained-variance fraction.
    #[arg(long, conflicts_with = "pca_dims")]
    pub pca_var: Option<f64>,
    /// Keep exactly this many components.
    #[arg(long)]
    pub pca_dims: Option<usize>,
}

impl RetainArgs {
    fn retain(&self) -> Retain {
        match (self.pca_var, self.pca_dims) {
            (_, Some(l)) => Retain::ComponentCount(l),
            (Some(f), None) => Retain::VarianceFraction(f),
            (None, None) => Retain::default(),
        }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long, value_enum, default_value = "dual")]
    pub mode: Mode,
    /// Output model file.
    #[arg(long)]
    pub model: PathBuf,
    /// Training report; defaults to the model path with a `.train.json` suffix.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// `rbf`, `linear` or `poly:DEGREE[:COEF0]`.
    #[arg(long, default_value = "rbf")]
    pub kernel: String,
    #[arg(long, default_value_t = 1.0)]
    pub c: f64,
    /// RBF width: `auto` or a positive number.
    #[arg(long, default_value = "auto")]
    pub gamma: String,
    #[command(flatten)]
    pub retain: RetainArgs,
    /// Fraction of each (subject, activity) cell used for training.
    #[arg(long, default_value_t = 0.7, conflicts_with = "kfold")]
    pub split: f64,
    /// Use k-fold partitioning instead of a holdout split.
    #[arg(long)]
    pub kfold: Option<usize>,
    /// Held-out fold under `--kfold`.
    #[arg(long, default_value_t = 0, requires = "kfold")]
    pub fold: usize,
    /// Restrict to one subject's rows.
    #[arg(long)]
    pub subject: Option<String>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// A second model of the other mode, evaluated side by side.
    #[arg(long)]
    pub compare: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DendrogramArgs {
    #[arg(long)]
    pub features: PathBuf,
    #[command(flatten)]
    pub retain: RetainArgs,
    #[arg(long, default_value = "single")]
    pub linkage: Linkage,
    /// JSON document with the tree and the distance matrix.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub dot: Option<PathBuf>,
    #[arg(long)]
    pub newick: Option<PathBuf>,
}

/// Failure of a command, split by exit code.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        CliError::Runtime(e.into())
    }
}

type CmdResult = Result<(), CliError>;

/// Parses `args` and runs the command; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();

    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a, cli.seed),
        Command::Features(a) => cmd_features(a),
        Command::Train(a) => cmd_train(a, cli.seed),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Dendrogram(a) => cmd_dendrogram(a),
    };
    match result {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}

// ---------------------------------------------------------------------------
// Helpers

fn write_json<T: Serialize>(value: &T, path: &Path) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn write_text(text: &str, path: &Path) -> anyhow::Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_features(path: &Path) -> anyhow::Result<FeatureTable> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    features::read_features_csv(BufReader::new(file)).with_context(|| format!("reading {}", path.display()))
}

/// Report timestamp from `SOURCE_DATE_EPOCH`; absent otherwise so reruns stay byte-identical.
fn report_timestamp() -> Option<String> {
    let secs: i64 = std::env::var("SOURCE_DATE_EPOCH").ok()?.trim().parse().ok()?;
    Some(rfc3339_utc(secs))
}

/// Civil UTC date-time for a Unix timestamp.
fn rfc3339_utc(secs: i64) -> String {
    let days = secs.div_euclid(86_400);
    let rem = secs.rem_euclid(86_400);
    // days-from-civil inverse, proleptic Gregorian
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}T{:02}:{:02}:{:02}Z", rem / 3600, rem % 3600 / 60, rem % 60)
}

fn parse_kernel(kernel: &str, gamma: &str) -> Result<KernelSpec, CliError> {
    let usage = |m: String| CliError::Usage(m);
    let mut parts = kernel.split(':');
    match parts.next().unwrap_or_default() {
        "linear" if parts.next().is_none() => Ok(KernelSpec::Linear),
        "rbf" if parts.next().is_none() => {
            let gamma = match gamma {
                "auto" => Gamma::Auto,
                g => {
                    let v: f64 = g.parse().map_err(|_| usage(format!("invalid --gamma `{g}`")))?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(usage(format!("--gamma must be positive, got {g}")));
                    }
                    Gamma::Value(v)
                }
            };
            Ok(KernelSpec::Rbf { gamma })
        }
        "poly" => {
            let degree = parts
                .next()
                .unwrap_or("3")
                .parse::<u32>()
                .ok()
                .filter(|d| *d >= 1)
                .ok_or_else(|| usage(format!("invalid polynomial degree in `{kernel}`")))?;
            let coef0 = match parts.next() {
                Some(c) => c.parse::<f64>().map_err(|_| usage(format!("invalid coef0 in `{kernel}`")))?,
                None => 1.0,
            };
            if parts.next().is_some() {
                return Err(usage(format!("invalid --kernel `{kernel}`")));
            }
            Ok(KernelSpec::Polynomial { degree, coef0 })
        }
        _ => Err(usage(format!("invalid --kernel `{kernel}` (expected rbf, linear or poly:DEGREE[:COEF0])"))),
    }
}

fn check_retain(retain: Retain) -> Result<(), CliError> {
    match retain {
        Retain::VarianceFraction(f) if !(f > 0.0 && f <= 1.0) => {
            Err(CliError::Usage(format!("--pca-var must lie in (0, 1], got {f}")))
        }
        Retain::ComponentCount(0) => Err(CliError::Usage("--pca-dims must be at least 1".into())),
        _ => Ok(()),
    }
}

// ---------------------------------------------------------------------------
// Commands

fn cmd_synth(a: &SynthArgs, seed: u64) -> CmdResult {
    let cfg = SynthConfig {
        subjects: a.subjects,
        reps_per_activity: a.reps,
        rate_hz: a.rate,
        duration_s: a.duration,
        seed,
        power_rms_scale: a.power_scale,
    };
    if let Err(e) = cfg.validate() {
        return Err(CliError::Usage(e.to_string()));
    }
    let corpus = data::synth_corpus(&cfg)?;
    data::write_csv_file(&corpus, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let per = cfg.samples_per_channel();
    println!(
        "wrote {} recordings ({} samples per channel, {} rows) to {}",
        corpus.len(),
        per,
        corpus.len() * per,
        a.out.display()
    );
    Ok(())
}

fn cmd_features(a: &FeaturesArgs) -> CmdResult {
    let cfg = FeatureConfig::with_ar_order(a.ar_order).map_err(|e| CliError::Usage(e.to_string()))?;
    if !(a.rate > 0.0 && a.rate.is_finite()) {
        return Err(CliError::Usage(format!("--rate must be positive, got {}", a.rate)));
    }
    let corpus = data::ingest_csv(&a.input, a.rate).with_context(|| format!("reading {}", a.input.display()))?;
    let vectors = features::extract_all(corpus.recordings(), &cfg, a.window)?;
    let file = File::create(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut w = BufWriter::new(file);
    features::write_features_csv(&vectors, &cfg, &mut w)?;
    w.flush()?;
    println!(
        "wrote {} feature rows x {} columns ({} meta + {} features) to {}",
        vectors.len(),
        features::FEATURE_META_COLUMNS.len() + cfg.dimension(),
        features::FEATURE_META_COLUMNS.len(),
        cfg.dimension(),
        a.out.display()
    );
    Ok(())
}

#[derive(Debug, Serialize)]
struct StageSummary {
    stage: &'static str,
    input_dim: usize,
    retained_dim: usize,
    explained_variance: f64,
    support_vectors: Vec<usize>,
}

#[derive(Debug, Serialize)]
struct TrainReport<'a> {
    format_version: u32,
    mode: &'static str,
    features: String,
    hyper: Hyper,
    split: &'a SplitDescriptor,
    train_size: usize,
    test_size: usize,
    training_accuracy: f64,
    stage1_training_accuracy: Option<f64>,
    stages: Vec<StageSummary>,
}

fn stage_summaries(model: &TrainedModel) -> Vec<StageSummary> {
    let summary = |stage, pca: &crate::pca::PcaModel, svs: Vec<usize>| StageSummary {
        stage,
        input_dim: pca.input_dim(),
        retained_dim: pca.output_dim(),
        explained_variance: pca.explained_variance_fraction(),
        support_vectors: svs,
    };
    let counts = |m: &crate::svm::MulticlassSvmModel<ActivityClass>| m.models.iter().map(|s| s.n_support()).collect();
    match model {
        TrainedModel::Single(m) => vec![summary("single", &m.pca, counts(&m.svm))],
        TrainedModel::Dual(m) => vec![
            summary("stage1", &m.stage1.pca, vec![m.stage1.svm.n_support()]),
            summary("stage2_power", &m.stage2_power.pca, counts(&m.stage2_power.svm)),
            summary("stage2_precision", &m.stage2_precision.pca, counts(&m.stage2_precision.svm)),
        ],
    }
}

fn cmd_train(a: &TrainArgs, seed: u64) -> CmdResult {
    let retain = a.retain.retain();
    check_retain(retain)?;
    let kernel = parse_kernel(&a.kernel, &a.gamma)?;
    if !(a.c > 0.0 && a.c.is_finite()) {
        return Err(CliError::Usage(format!("--c must be positive, got {}", a.c)));
    }
    let (protocol, fold) = match a.kfold {
        Some(k) if k < 2 => return Err(CliError::Usage(format!("--kfold must be at least 2, got {k}"))),
        Some(k) if a.fold >= k => return Err(CliError::Usage(format!("--fold must be below {k}, got {}", a.fold))),
        Some(k) => (SplitProtocol::KFold { k, seed }, Some(a.fold)),
        None if !(a.split > 0.0 && a.split < 1.0) => {
            return Err(CliError::Usage(format!("--split must lie in (0, 1), got {}", a.split)))
        }
        None => (SplitProtocol::Holdout { train_fraction: a.split, seed }, None),
    };
    let split = SplitDescriptor { protocol, fold, subject: a.subject.clone() };
    let hyper = Hyper { retain, kernel, smo: SmoParams { c: a.c, seed, ..SmoParams::default() } };

    let table = load_features(&a.features)?;
    let (train, test) = pipeline::split_vectors(&table.vectors, &split)?;
    let model = match a.mode {
        Mode::Single => TrainedModel::Single(pipeline::train_single(&train, &hyper)?),
        Mode::Dual => TrainedModel::Dual(pipeline::train_dual(&train, &hyper)?),
    };
    let fit = pipeline::evaluate(&model, &train)?;

    let mut doc = ModelDocument::new(model);
    doc.hyper = Some(hyper);
    doc.split = Some(split.clone());
    pipeline::save_model(&doc, &a.model).with_context(|| format!("writing {}", a.model.display()))?;

    let report = TrainReport {
        format_version: REPORT_FORMAT_VERSION,
        mode: doc.model.mode(),
        features: a.features.display().to_string(),
        hyper,
        split: &split,
        train_size: train.len(),
        test_size: test.len(),
        training_accuracy: fit.accuracy,
        stage1_training_accuracy: fit.stages.as_ref().map(|s| s.stage1_accuracy),
        stages: stage_summaries(&doc.model),
    };
    let report_path = a.report.clone().unwrap_or_else(|| {
        let mut p = a.model.clone().into_os_string();
        p.push(".train.json");
        PathBuf::from(p)
    });
    write_json(&report, &report_path)?;

    println!("trained {} model on {} vectors ({} held out)", doc.model.mode(), train.len(), test.len());
    for s in &report.stages {
        println!("  {}: {} -> {} dims, support vectors {:?}", s.stage, s.input_dim, s.retained_dim, s.support_vectors);
    }
    println!("training accuracy {:.4}", fit.accuracy);
    if let Some(s1) = report.stage1_training_accuracy {
        println!("stage-1 training accuracy {s1:.4}");
    }
    println!("model: {}", a.model.display());
    Ok(())
}

/// EvalReport plus the inputs that produced it.
#[derive(Debug, Serialize)]
struct EvalDocument<'a> {
    #[serde(flatten)]
    report: &'a EvalReport,
    model: String,
    features: String,
    hyper: Option<Hyper>,
}

fn evaluate_model(doc: &ModelDocument, table: &FeatureTable) -> Result<EvalReport, CliError> {
    let Some(split) = &doc.split else {
        return Err(CliError::Runtime(anyhow::anyhow!("model file carries no split descriptor")));
    };
    if doc.model.feature_config() != &table.config {
        return Err(pipeline::PipelineError::LayoutMismatch(format!(
            "model expects {} features, file has {}",
            doc.model.feature_config().dimension(),
            table.config.dimension()
        ))
        .into());
    }
    let (_, test) = pipeline::split_vectors(&table.vectors, split)?;
    let mut report = pipeline::evaluate(&doc.model, &test)?;
    report.split = Some(split.clone());
    report.seed = Some(match split.protocol {
        SplitProtocol::Holdout { seed, .. } | SplitProtocol::KFold { seed, .. } => seed,
    });
    report.timestamp = report_timestamp();
    Ok(report)
}

fn print_report(report: &EvalReport) {
    println!("{} accuracy {:.4} ({} / {} test vectors)", report.mode, report.accuracy, report.trace(), report.total());
    if let Some(s) = &report.stages {
        let fmt = |v: Option<f64>| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"));
        println!("  stage-1 (power vs precision) accuracy {:.4}", s.stage1_accuracy);
        println!(
            "  stage-2 power: {} routed, {} over group",
            fmt(s.power_routed_accuracy),
            fmt(s.power_group_accuracy)
        );
        println!(
            "  stage-2 precision: {} routed, {} over group",
            fmt(s.precision_routed_accuracy),
            fmt(s.precision_group_accuracy)
        );
    }
}

fn cmd_evaluate(a: &EvaluateArgs) -> CmdResult {
    let doc = pipeline::load_model(&a.model).with_context(|| format!("loading {}", a.model.display()))?;
    let other = match &a.compare {
        Some(p) => {
            let o = pipeline::load_model(p).with_context(|| format!("loading {}", p.display()))?;
            if o.model.mode() == doc.model.mode() {
                return Err(CliError::Usage(format!(
                    "--compare needs one single and one dual model, both are {}",
                    o.model.mode()
                )));
            }
            Some(o)
        }
        None => None,
    };
    let table = load_features(&a.features)?;
    let report = evaluate_model(&doc, &table)?;
    if let Some(path) = &a.report {
        let out = EvalDocument {
            report: &report,
            model: a.model.display().to_string(),
            features: a.features.display().to_string(),
            hyper: doc.hyper,
        };
        write_json(&out, path)?;
    }
    print_report(&report);

    if let Some(o) = other {
        let other_report = evaluate_model(&o, &table)?;
        print_report(&other_report);
        let (single, dual) = if report.mode == "single" { (&report, &other_report) } else { (&other_report, &report) };
        println!(
            "single {:.4} | dual {:.4} | difference {:+.2} points",
            single.accuracy,
            dual.accuracy,
            100.0 * (dual.accuracy - single.accuracy)
        );
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct DendrogramDocument<'a> {
    format_version: u32,
    linkage: Linkage,
    retain: Retain,
    retained_dim: usize,
    class_order: &'a [ActivityClass],
    distances: &'a [Vec<f64>],
    regularized: bool,
    root_height_ratio: Option<f64>,
    tree: &'a grouping::Dendrogram<ActivityClass>,
}

fn braces(classes: &[ActivityClass]) -> String {
    let codes: Vec<String> = classes.iter().map(ToString::to_string).collect();
    format!("{{{}}}", codes.join(","))
}

fn cmd_dendrogram(a: &DendrogramArgs) -> CmdResult {
    let retain = a.retain.retain();
    check_retain(retain)?;
    let table = load_features(&a.features)?;
    let labels: Vec<ActivityClass> = table
        .vectors
        .iter()
        .map(|v| v.label.context("feature row without an activity label"))
        .collect::<anyhow::Result<_>>()?;
    let pca = fit_pca(&table.vectors, retain)?;
    let reduced = pca.project_all(&table.vectors)?;
    let sep = grouping::class_separation(&labels, &reduced)?;
    let tree = grouping::linkage(&sep, a.linkage)?;

    if let Some(path) = &a.out {
        let doc = DendrogramDocument {
            format_version: REPORT_FORMAT_VERSION,
            linkage: a.linkage,
            retain,
            retained_dim: pca.output_dim(),
            class_order: &sep.class_order,
            distances: &sep.distances,
            regularized: sep.regularized,
            root_height_ratio: tree.root_height_ratio(),
            tree: &tree,
        };
        write_json(&doc, path)?;
    }
    if let Some(path) = &a.dot {
        write_text(&grouping::export_dendrogram(&tree, DendrogramFormat::Dot), path)?;
    }
    if let Some(path) = &a.newick {
        write_text(&grouping::export_dendrogram(&tree, DendrogramFormat::Newick), path)?;
    }

    println!("reduced to {} dims, {:?} linkage", pca.output_dim(), a.linkage);
    if let Some((l, r)) = tree.root_split() {
        print!("root split: {} | {} at height {:.6}", braces(&l), braces(&r), tree.height());
        match tree.root_height_ratio() {
            Some(ratio) if ratio.is_finite() => println!(" (ratio {ratio:.3})"),
            _ => println!(),
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kernel_flags() {
        assert_eq!(parse_kernel("rbf", "auto").unwrap(), KernelSpec::Rbf { gamma: Gamma::Auto });
        assert_eq!(parse_kernel("rbf", "0.5").unwrap(), KernelSpec::Rbf { gamma: Gamma::Value(0.5) });
        assert_eq!(parse_kernel("poly:2:0", "auto").unwrap(), KernelSpec::Polynomial { degree: 2, coef0: 0.0 });
        assert!(matches!(parse_kernel("sigmoid", "auto"), Err(CliError::Usage(_))));
        assert!(matches!(parse_kernel("rbf", "-1"), Err(CliError::Usage(_))));
    }

    #[test]
    fn timestamps() {
        assert_eq!(rfc3339_utc(0), "1970-01-01T00:00:00Z");
        assert_eq!(rfc3339_utc(951_782_400), "2000-02-29T00:00:00Z");
        assert_eq!(rfc3339_utc(1_700_000_000), "2023-11-14T22:13:20Z");
    }
}
