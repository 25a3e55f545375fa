//! `eegodl` command-line front end.
//!
//! Exit codes: 0 success, 1 other failure, 2 I/O, 3 invalid data or
//! inconsistent inputs, 4 numeric failure (non-finite values), 64 usage.

mod exit;

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use eegodl::dataset::{
    ingest_corpus, make_splits, Catalog, ClassMap, EpochStore, IngestOptions, Montage, Protocol, SplitOptions,
    SplitPlan, TrialPolicy,
};
use eegodl::harness::{
    emit_report, load_subjects, run_bench, run_degradation_eval, run_online_experiment, Averaging, ExperimentReport,
    ExperimentSpec, ReportBody, ReportFormat,
};
use eegodl::model::{self, footprint, ConfigId, ModelConfig};
use eegodl::online::{write_event_log, OnlineEngine};
use eegodl::{ModelWeights, OnlineHyperparams};

use exit::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "eegodl",
    version,
    about = "EEG motor-imagery inference and online adaptation"
)]
struct Cli {
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    json: bool,
    /// Progress messages on stderr (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract balanced, montage-selected epochs from an EDF corpus into an epoch store.
    Ingest(IngestArgs),
    /// Classify a subject's stored epochs.
    Infer(InferArgs),
    /// Activate the online engine and adapt the classifier to one subject.
    Adapt(AdaptArgs),
    /// Run the degradation or online-adaptation experiment.
    Eval(EvalArgs),
    /// Time forward and classifier-update latency.
    Bench(BenchArgs),
    /// Print a weight container's config, tensor table and checksum.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Corpus root (searched recursively for S###R##.edf).
    #[arg(long)]
    data: PathBuf,
    /// Output epoch-store directory.
    #[arg(long)]
    out: PathBuf,
    /// 64ch, 19ch, 8ch or a montage JSON file.
    #[arg(long, default_value = "64ch")]
    montage: String,
    /// Window length in seconds.
    #[arg(long, default_value_t = 3.0)]
    window: f64,
    #[arg(long, default_value_t = 21)]
    trials_per_class: usize,
    /// Only these subject ids (comma separated).
    #[arg(long, value_delimiter = ',')]
    subjects: Option<Vec<u32>>,
    /// Seed for the split plans written next to the store.
    #[arg(long)]
    seed: Option<u64>,
    /// Lowest-id subjects reserved for offline training.
    #[arg(long, default_value_t = 15)]
    offline_subjects: usize,
    /// Fraction of each online subject used for adaptation.
    #[arg(long, default_value_t = 0.5)]
    online_rate: f64,
}

#[derive(Debug, Args)]
struct InferArgs {
    #[arg(long)]
    container: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    subject: u32,
    /// Classify only the first N epochs.
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Debug, Args, Clone)]
struct HyperArgs {
    /// Learning rate.
    #[arg(long, default_value_t = 0.01)]
    lr: f32,
    /// EMA coefficient.
    #[arg(long, default_value_t = 0.9)]
    beta: f32,
    #[arg(long, default_value_t = 1)]
    epochs_per_sample: usize,
}

impl HyperArgs {
    fn to_hyper(&self) -> OnlineHyperparams {
        OnlineHyperparams {
            learning_rate: self.lr,
            ema_coefficient: self.beta,
            epochs_per_sample: self.epochs_per_sample,
        }
    }
}

#[derive(Debug, Args)]
struct AdaptArgs {
    #[arg(long)]
    container: PathBuf,
    #[arg(long)]
    store: PathBuf,
    #[arg(long)]
    subject: u32,
    /// Adapted container path.
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines event log (default: `<out>.events.jsonl`).
    #[arg(long)]
    events: Option<PathBuf>,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Adapt on every stored epoch in stored order instead of the seeded adaptation half.
    #[arg(long)]
    all: bool,
    #[arg(long, default_value_t = 0.5)]
    online_rate: f64,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EvalProtocol {
    Online,
    Degradation,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
        }
    }
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    protocol: EvalProtocol,
    /// Experiment spec (JSON or TOML); flags below are ignored when given.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    store: Option<PathBuf>,
    /// Backbone container for the online protocol.
    #[arg(long)]
    container: Option<PathBuf>,
    /// LOUO fold containers, in fold order (repeat the flag).
    #[arg(long)]
    louo: Vec<PathBuf>,
    /// LOSO fold containers, in fold order (repeat the flag).
    #[arg(long)]
    loso: Vec<PathBuf>,
    /// Split plan file (online plan, or LOUO plan for degradation).
    #[arg(long)]
    plan: Option<PathBuf>,
    /// LOSO split plan file for degradation.
    #[arg(long)]
    loso_plan: Option<PathBuf>,
    /// Model config; defaults to the one recorded in the container.
    #[arg(long)]
    config: Option<ConfigId>,
    #[command(flatten)]
    hyper: HyperArgs,
    #[arg(long, default_value_t = 0.5)]
    online_rate: f64,
    #[arg(long, default_value_t = 15)]
    offline_subjects: usize,
    /// Pool instances instead of averaging per-subject accuracies.
    #[arg(long)]
    instance_averaged: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Report output file.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Configs to time (repeat; default all three).
    #[arg(long)]
    config: Vec<ConfigId>,
    /// Time this container instead of seeded random weights (one config only).
    #[arg(long)]
    container: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    reps: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

#[derive(Debug, Args)]
struct InspectArgs {
    container: PathBuf,
}

struct Ctx {
    json: bool,
    verbose: u8,
}

impl Ctx {
    fn log(&self, level: u8, msg: impl AsRef<str>) {
        if self.verbose >= level {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Resolve the seed, announcing it when it was chosen here.
    fn seed(&self, given: Option<u64>) -> u64 {
        given.unwrap_or_else(|| {
            let s: u64 = rand::random();
            eprintln!("seed: {s}");
            s
        })
    }

    fn emit(&self, value: &serde_json::Value, human: impl FnOnce() -> String) -> Result<()> {
        let mut out = std::io::stdout().lock();
        if self.json {
            serde_json::to_writer_pretty(&mut out, value)?;
            writeln!(out)?;
        } else {
            write!(out, "{}", human())?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let ctx = Ctx {
        json: cli.json,
        verbose: cli.verbose,
    };
    let result = match cli.command {
        Command::Ingest(a) => cmd_ingest(&ctx, a),
        Command::Infer(a) => cmd_infer(&ctx, a),
        Command::Adapt(a) => cmd_adapt(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Bench(a) => cmd_bench(&ctx, a),
        Command::Inspect(a) => cmd_inspect(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit::code_for(&e))
        }
    }
}

fn cmd_ingest(ctx: &Ctx, a: IngestArgs) -> Result<()> {
    let montage = Montage::resolve(&a.montage)?;
    if a.window.is_nan() || a.window <= 0.0 {
        return Err(UsageError(format!("--window must be positive, got {}", a.window)).into());
    }
    let opts = IngestOptions {
        montage,
        window_seconds: a.window,
        class_map: ClassMap::default(),
        policy: TrialPolicy {
            trials_per_class: a.trials_per_class,
            ..TrialPolicy::default()
        },
        subjects: a.subjects.clone(),
    };
    ctx.log(1, format!("ingesting {}", a.data.display()));
    let summary = ingest_corpus(&a.data, &a.out, &opts)?;
    for ex in &summary.excluded {
        eprintln!("excluded subject {}: {}", ex.subject, ex.reason);
    }
    if summary.kept.is_empty() {
        bail!(exit::DataError(format!(
            "no subjects kept from {} ({} files read)",
            a.data.display(),
            summary.files_read
        )));
    }

    let seed = ctx.seed(a.seed);
    let store = EpochStore::open(&a.out)?;
    let plans = write_plans(ctx, &store, seed, a.offline_subjects, a.online_rate)?;

    let value = serde_json::json!({ "summary": summary, "seed": seed, "plans": plans });
    ctx.emit(&value, || {
        let mut s = format!(
            "files read: {}\nsubjects kept: {}\nsubjects excluded: {}\n",
            summary.files_read,
            summary.kept.len(),
            summary.excluded.len()
        );
        for k in &summary.kept {
            let counts: Vec<String> = k.class_counts.iter().map(|(c, n)| format!("{c}={n}")).collect();
            s += &format!("  S{:03}: {} epochs ({})\n", k.subject, k.instances, counts.join(" "));
        }
        s += &format!("seed: {seed}\n");
        s
    })
}

/// Write the LOUO/LOSO plans over the offline subjects and the online plan
/// over the rest, skipping any that do not apply to this store.
fn write_plans(ctx: &Ctx, store: &EpochStore, seed: u64, offline: usize, rate: f64) -> Result<Vec<PathBuf>> {
    let dir = store.root().join("splits");
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let (off, on) = store.catalog().partition(offline);
    let opts = SplitOptions {
        online_rate: rate,
        ..SplitOptions::default()
    };
    let mut written = Vec::new();
    for (cat, protocol, name) in [
        (&off, Protocol::Louo, "louo.json"),
        (&off, Protocol::Loso, "loso.json"),
        (&on, Protocol::Online, "online.json"),
    ] {
        match make_splits(cat, protocol, &opts, seed) {
            Ok(plan) => {
                let p = dir.join(name);
                plan.save(&p)?;
                written.push(p);
            }
            Err(e) => ctx.log(1, format!("skipping {name}: {e}")),
        }
    }
    Ok(written)
}

fn open_store(path: &Path) -> Result<EpochStore> {
    Ok(EpochStore::open(path)?)
}

fn cmd_infer(ctx: &Ctx, a: InferArgs) -> Result<()> {
    let (weights, config) = model::load_weights(&a.container)?;
    let store = open_store(&a.store)?;
    let epochs = store.load_subject(a.subject)?;
    let n = a.limit.unwrap_or(epochs.len()).min(epochs.len());
    let mut rows = Vec::with_capacity(n);
    let mut correct = 0;
    for (i, e) in epochs.iter().take(n).enumerate() {
        let out = model::forward(&weights, &config, e)?;
        let pred = out.predicted();
        correct += usize::from(pred == e.label.index());
        rows.push(serde_json::json!({
            "index": i,
            "label": e.label,
            "predicted": eegodl::MiClass::from_index(pred),
            "probabilities": out.probabilities,
        }));
    }
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let value = serde_json::json!({
        "subject": a.subject, "epochs": n, "correct": correct, "accuracy": accuracy, "predictions": rows,
    });
    ctx.emit(&value, || {
        let mut s = String::new();
        for r in &rows {
            s += &format!("{:4}  label {}  predicted {}\n", r["index"], r["label"], r["predicted"]);
        }
        s += &format!("accuracy: {correct}/{n} = {accuracy:.4}\n");
        s
    })
}

fn cmd_adapt(ctx: &Ctx, a: AdaptArgs) -> Result<()> {
    let hyper = a.hyper.to_hyper();
    hyper.validate()?;
    let (weights, config) = model::load_weights(&a.container)?;
    let store = open_store(&a.store)?;
    let epochs = store.load_subject(a.subject)?;

    let (order, seed) = if a.all {
        ((0..epochs.len()).collect::<Vec<_>>(), None)
    } else {
        let seed = ctx.seed(a.seed);
        let cat = Catalog::new([(a.subject, epochs.len())]);
        let opts = SplitOptions {
            online_rate: a.online_rate,
            ..SplitOptions::default()
        };
        let plan = make_splits(&cat, Protocol::Online, &opts, seed)?;
        (plan.online().expect("online plan")[0].adapt.clone(), Some(seed))
    };
    if order.is_empty() {
        bail!(exit::DataError(format!(
            "subject {} has no adaptation samples",
            a.subject
        )));
    }

    let mut engine = OnlineEngine::new(weights, config.clone(), hyper)?;
    engine.activate();
    let mut events = Vec::with_capacity(order.len());
    let events_path = a
        .events
        .clone()
        .unwrap_or_else(|| PathBuf::from(format!("{}.events.jsonl", a.out.display())));
    let mut failure = None;
    for &i in &order {
        let e = &epochs[i];
        match engine.adapt(e, e.label.index()) {
            Ok(ev) => events.push(ev),
            Err(err) => {
                failure = Some(err);
                break;
            }
        }
    }
    let file = std::fs::File::create(&events_path).with_context(|| format!("creating {}", events_path.display()))?;
    write_event_log(std::io::BufWriter::new(file), &events)
        .with_context(|| format!("writing {}", events_path.display()))?;
    if let Some(err) = failure {
        return Err(anyhow::Error::from(err).context(format!("adaptation aborted after {} samples", events.len())));
    }
    let weights = engine.into_weights();
    model::save_weights(&weights, &config, &a.out)?;

    let correct = events.iter().filter(|e| e.correct()).count();
    let mean_loss = events.iter().map(|e| e.loss as f64).sum::<f64>() / events.len() as f64;
    let value = serde_json::json!({
        "subject": a.subject,
        "samples": events.len(),
        "streaming_accuracy": correct as f64 / events.len() as f64,
        "mean_loss": mean_loss,
        "seed": seed,
        "container": a.out,
        "events": events_path,
        "hyperparams": hyper,
    });
    ctx.emit(&value, || {
        format!(
            "adapted subject {} on {} samples (streaming accuracy {:.4}, mean loss {:.4})\nwrote {}\nwrote {}\n",
            a.subject,
            events.len(),
            correct as f64 / events.len() as f64,
            mean_loss,
            a.out.display(),
            events_path.display()
        )
    })
}

fn spec_from_flags(a: &EvalArgs, seed: u64) -> Result<ExperimentSpec> {
    let config = match (a.config, &a.container, a.louo.first()) {
        (Some(c), _, _) => c,
        (None, Some(p), _) | (None, None, Some(p)) => container_config_id(p)?,
        (None, None, None) => {
            return Err(UsageError("eval needs --config, --container or --louo".into()).into());
        }
    };
    let mut spec = ExperimentSpec::new(config, seed);
    spec.container = a.container.clone();
    spec.louo_containers = a.louo.clone();
    spec.loso_containers = a.loso.clone();
    spec.store = a.store.clone();
    spec.split_plan = a.plan.clone();
    spec.online = a.hyper.to_hyper();
    spec.online_rate = a.online_rate;
    spec.averaging = if a.instance_averaged {
        Averaging::Instance
    } else {
        Averaging::Subject
    };
    spec.offline_subjects = a.offline_subjects;
    spec.output = a.out.clone();
    Ok(spec)
}

fn container_config_id(path: &Path) -> Result<ConfigId> {
    let (_, config) = model::load_weights(path)?;
    config.id().ok_or_else(|| {
        exit::DataError(format!(
            "{} holds a non-preset config ({}); pass --config",
            path.display(),
            config.describe()
        ))
        .into()
    })
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> Result<()> {
    let spec = match &a.spec {
        Some(p) => ExperimentSpec::load(p)?,
        None => {
            let seed = ctx.seed(a.seed);
            spec_from_flags(&a, seed)?
        }
    };
    let config = spec.config.config();
    let store_path = spec
        .store
        .clone()
        .ok_or_else(|| UsageError("eval needs a store (--store or spec.store)".into()))?;
    let store = open_store(&store_path)?;
    let (offline, online) = store.catalog().partition(spec.offline_subjects);

    let body = match a.protocol {
        EvalProtocol::Online => {
            let path = spec
                .container
                .clone()
                .ok_or_else(|| UsageError("online eval needs a backbone container".into()))?;
            let weights = spec.load_container(&path)?;
            let plan = match &spec.split_plan {
                Some(p) => SplitPlan::load(p)?,
                None => {
                    if online.subjects.is_empty() {
                        bail!(exit::DataError(format!(
                            "store has no subjects beyond the first {} offline ones",
                            spec.offline_subjects
                        )));
                    }
                    let opts = SplitOptions {
                        online_rate: spec.online_rate,
                        ..SplitOptions::default()
                    };
                    make_splits(&online, Protocol::Online, &opts, spec.seed)?
                }
            };
            let ids: Vec<u32> = plan
                .online()
                .map_or_else(Vec::new, |s| s.iter().map(|x| x.subject).collect());
            ctx.log(1, format!("adapting {} subjects", ids.len()));
            let data = load_subjects(&store, Some(&ids))?;
            ReportBody::Online(run_online_experiment(
                &weights,
                &config,
                &spec.online,
                &plan,
                &data,
                spec.averaging,
            )?)
        }
        EvalProtocol::Degradation => {
            let load_all = |paths: &[PathBuf]| -> Result<Vec<ModelWeights>> {
                paths.iter().map(|p| Ok(spec.load_container(p)?)).collect()
            };
            let louo_w = load_all(&spec.louo_containers)?;
            let loso_w = load_all(&spec.loso_containers)?;
            if louo_w.is_empty() || loso_w.is_empty() {
                return Err(UsageError("degradation eval needs --louo and --loso containers".into()).into());
            }
            let opts = SplitOptions::default();
            let louo_plan = match &spec.split_plan {
                Some(p) => SplitPlan::load(p)?,
                None => make_splits(&offline, Protocol::Louo, &opts, spec.seed)?,
            };
            let loso_plan = match &a.loso_plan {
                Some(p) => SplitPlan::load(p)?,
                None => make_splits(&offline, Protocol::Loso, &opts, spec.seed)?,
            };
            let ids = offline.ids();
            let data = load_subjects(&store, Some(&ids))?;
            ReportBody::Degradation(run_degradation_eval(
                &config,
                &louo_w,
                &loso_w,
                &louo_plan,
                &loso_plan,
                &data,
                spec.averaging,
            )?)
        }
    };
    let report = ExperimentReport::new(Some(spec.config), spec.seed, body);
    finish_report(ctx, &report, spec.output.as_deref(), a.format.into())
}

fn finish_report(ctx: &Ctx, report: &ExperimentReport, out: Option<&Path>, format: ReportFormat) -> Result<()> {
    if let Some(p) = out {
        emit_report(report, format, p)?;
        ctx.log(1, format!("wrote {}", p.display()));
    }
    let value: serde_json::Value = serde_json::from_str(&report.to_json())?;
    ctx.emit(&value, || human_report(report))
}

fn human_report(r: &ExperimentReport) -> String {
    let pct = |v: f64| format!("{:.2}%", v * 100.0);
    match &r.body {
        ReportBody::Online(o) => {
            let mut s = String::from("subject  pre      post     gain\n");
            for x in &o.subjects {
                s += &format!(
                    "S{:03}     {:8} {:8} {}\n",
                    x.subject,
                    pct(x.pre_accuracy),
                    pct(x.post_accuracy),
                    pct(x.gain)
                );
            }
            s += &format!(
                "mean     {:8} {:8} {}\n",
                pct(o.mean_pre),
                pct(o.mean_post),
                pct(o.mean_gain)
            );
            s
        }
        ReportBody::Degradation(d) => format!(
            "LOUO {}  LOSO {}  degradation {}\n",
            pct(d.louo_mean),
            pct(d.loso_mean),
            pct(d.degradation)
        ),
        ReportBody::Bench(entries) => {
            let mut s = String::from("config    forward p50/p95 (us)    update p50/p95 (us)    MACs\n");
            for e in entries {
                s += &format!(
                    "{:9} {:>10.1} / {:<10.1} {:>8.2} / {:<8.2}     {}\n",
                    e.config.as_str(),
                    e.forward.p50_us,
                    e.forward.p95_us,
                    e.update.p50_us,
                    e.update.p95_us,
                    e.footprint.total_macs
                );
            }
            s
        }
    }
}

fn cmd_bench(ctx: &Ctx, a: BenchArgs) -> Result<()> {
    if a.reps == 0 {
        return Err(UsageError("--reps must be at least 1".into()).into());
    }
    let seed = ctx.seed(a.seed);
    let configs = if a.config.is_empty() {
        ConfigId::ALL.to_vec()
    } else {
        a.config.clone()
    };
    let mut entries = Vec::new();
    if let Some(path) = &a.container {
        let (weights, config) = model::load_weights(path)?;
        let id = match config.id() {
            Some(id) => id,
            None => bail!(exit::DataError(format!("{} holds a non-preset config", path.display()))),
        };
        if !a.config.is_empty() && a.config != [id] {
            return Err(UsageError(format!(
                "--container holds {id}; it cannot be benchmarked as other configs"
            ))
            .into());
        }
        entries.push(run_bench(id, &weights, a.reps, seed)?);
    } else {
        for id in configs {
            ctx.log(1, format!("timing {id}"));
            let c: ModelConfig = id.config();
            entries.push(run_bench(id, &ModelWeights::random(&c, seed), a.reps, seed)?);
        }
    }
    let report = ExperimentReport::new(None, seed, ReportBody::Bench(entries));
    finish_report(ctx, &report, a.out.as_deref(), a.format.into())
}

fn cmd_inspect(ctx: &Ctx, a: InspectArgs) -> Result<()> {
    let summary = model::inspect_container(&a.container)?;
    let fp = footprint(&summary.config);
    let value = serde_json::json!({ "container": summary, "footprint": fp });
    ctx.emit(&value, || {
        let mut s = format!(
            "config: {} ({})\nfeature_dim: {}\nversion: {}\ncrc32: {}\nfile bytes: {}\n",
            summary.config_id.as_deref().unwrap_or("custom"),
            summary.config.describe(),
            summary.feature_dim,
            summary.version,
            summary.crc32,
            summary.file_bytes
        );
        s += "tensor                              shape            params  bytes\n";
        for t in &summary.tensors {
            s += &format!(
                "{:35} {:16} {:7} {}..{}\n",
                t.name,
                format!("{:?}", t.shape),
                t.params,
                t.byte_start,
                t.byte_end
            );
        }
        s += &format!(
            "total params: {} (dense {})\nMACs: {}\n",
            summary.total_params, summary.dense_params, fp.total_macs
        );
        s
    })
}
