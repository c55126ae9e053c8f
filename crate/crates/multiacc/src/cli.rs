//! Command-line surface: generate data, train the base model, audit and
//! boost, evaluate, diagnose, and train baselines. Every command writes its
//! outputs plus a manifest that pins the resolved configuration, input
//! digests, and seed, so runs are reproducible byte for byte.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::audit::{AuditorConfig, SetDescription};
use crate::baselines::{self, ModelKind, TrainConfig};
use crate::boost::{self, BatchStrategy, BoostConfig, StopReason};
use crate::data::{self, Dataset, Schema, SynthSpec};
use crate::error::{Error, Result};
use crate::metrics::{self, GroupSpec};
use crate::model::{self, BoostedModel, Predictor, DEFAULT_CLAMP_EPS};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Parser, Debug)]
#[command(name = "multiacc", version, about = "Audit and post-process black-box binary scorers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Directory all outputs are written into.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output rendering for report-style commands.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
    /// Seed shared by all seeded steps of the command.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Json,
    Table,
    Both,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset (subgroup-polynomial labels), or a
    /// planted-bias fixture with --adversarial.
    Synth(SynthArgs),
    /// Train the initial model on a dataset CSV.
    TrainF0(TrainArgs),
    /// Audit a scorer and post-process it into a boosted model.
    Boost(BoostArgs),
    /// Per-group error table and bias certificates for one or more scorers.
    Evaluate(EvaluateArgs),
    /// Rank rows by the magnitude of one boosting round's hypothesis.
    Diagnose(DiagnoseArgs),
    /// Train a comparison baseline (rt = continue training on audit data,
    /// ss = one model per subgroup).
    Baseline(BaselineArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 40_000)]
    pub n: usize,
    #[arg(long, default_value_t = 60)]
    pub d: usize,
    /// Group mix proportions, comma separated, summing to 1.
    #[arg(long, value_delimiter = ',')]
    pub proportions: Option<Vec<f64>>,
    /// Polynomial orders per group, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub orders: Option<Vec<usize>>,
    /// Emit the planted-bias fixture (dataset + scores file) instead.
    #[arg(long)]
    pub adversarial: bool,
    #[arg(long, default_value_t = 0.1)]
    pub group_mass: f64,
    #[arg(long, default_value_t = 1.0)]
    pub flip_rate: f64,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Mlp2)]
    pub kind: KindArg,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    /// Hidden widths for the mlp2 kind.
    #[arg(long, value_delimiter = ',', default_values_t = [32, 16])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "f0.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Logistic,
    Mlp2,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> ModelKind {
        match k {
            KindArg::Logistic => ModelKind::Logistic,
            KindArg::Mlp2 => ModelKind::Mlp2,
        }
    }
}

#[derive(Args, Debug)]
pub struct BoostArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Row-aligned scores CSV for the base model.
    #[arg(long, conflicts_with = "model")]
    pub scores: Option<PathBuf>,
    /// Predictor JSON for the base model.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Step size; defaults to alpha / 4.
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long, value_enum, default_value_t = AuditorArg::Ridge)]
    pub auditor: AuditorArg,
    #[arg(long, default_value_t = 5)]
    pub tree_depth: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ridge_lambda: f64,
    /// JSON file with the set collection for the sets auditor.
    #[arg(long)]
    pub sets_file: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub max_iter: usize,
    /// "full" for a single batch, or a fold count k for fresh folds.
    #[arg(long, default_value = "full")]
    pub batch: String,
    /// Rank partitions by the unrestricted correlation (comparison mode).
    #[arg(long)]
    pub unrestricted_argmax: bool,
    #[arg(long, default_value = "boosted.json")]
    pub out_model: PathBuf,
    #[arg(long, default_value = "trace.jsonl")]
    pub out_trace: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AuditorArg {
    Ridge,
    Tree,
    Gradient,
    Sets,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Models as name=path.json, repeatable.
    #[arg(long = "model", value_parser = parse_named_path)]
    pub models: Vec<(String, PathBuf)>,
    /// Score files as name=path.csv, repeatable.
    #[arg(long = "scores", value_parser = parse_named_path)]
    pub scores: Vec<(String, PathBuf)>,
    /// Group names to report; defaults to every group-column value plus all
    /// pairwise conjunctions.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value = "report.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    /// Boosted model JSON.
    #[arg(long)]
    pub model: PathBuf,
    /// 1-based update index to inspect.
    #[arg(long, default_value_t = 1)]
    pub round: usize,
    #[arg(long, default_value_t = 10)]
    pub top: usize,
    #[arg(long, default_value = "diagnose.json")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BaselineArgs {
    #[arg(long, value_enum)]
    pub kind: BaselineKind,
    /// Initial model (rt only).
    #[arg(long)]
    pub f0: Option<PathBuf>,
    /// Audit dataset CSV the baseline trains on.
    #[arg(long)]
    pub audit: PathBuf,
    /// Dataset whose rows the ss baseline scores.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = KindArg::Mlp2)]
    pub model_kind: KindArg,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.0)]
    pub l2: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [32, 16])]
    pub hidden: Vec<usize>,
    #[arg(long, default_value = "baseline.json")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineKind {
    Rt,
    Ss,
}

fn parse_named_path(s: &str) -> std::result::Result<(String, PathBuf), String> {
    match s.split_once('=') {
        Some((name, path)) if !name.is_empty() => Ok((name.to_string(), PathBuf::from(path))),
        _ => Err(format!("expected name=path, got '{s}'")),
    }
}

/// Manifest emitted next to each command's outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

fn digest_file(path: &Path) -> Result<FileDigest> {
    let bytes = std::fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
    Ok(FileDigest {
        path: path.display().to_string(),
        sha256: hex,
    })
}

fn write_manifest(
    out_dir: &Path,
    command: &str,
    seed: u64,
    config: serde_json::Value,
    inputs: &[&Path],
    outputs: &[&Path],
) -> Result<()> {
    let manifest = RunManifest {
        command: command.to_string(),
        tool_version: TOOL_VERSION.to_string(),
        seed,
        config,
        inputs: inputs
            .iter()
            .map(|p| digest_file(p))
            .collect::<Result<Vec<_>>>()?,
        outputs: outputs.iter().map(|p| p.display().to_string()).collect(),
    };
    let path = out_dir.join(format!("{command}-manifest.json"));
    std::fs::write(path, serde_json::to_vec_pretty(&manifest)?)?;
    Ok(())
}

fn load_schema(path: &Option<PathBuf>) -> Result<Schema> {
    match path {
        Some(p) => Schema::load(p),
        None => Ok(Schema::default()),
    }
}

fn load_dataset(data: &Path, schema: &Option<PathBuf>) -> Result<(Dataset, Schema)> {
    let schema = load_schema(schema)?;
    let ds = data::load_csv(data, &schema)?;
    Ok((ds, schema))
}

/// Declared groups: every distinct value of every group column, plus every
/// pairwise conjunction across different columns, capped at conjunction
/// width 2 for auto-declaration.
pub fn auto_groups(dataset: &Dataset) -> Vec<GroupSpec> {
    let mut groups = Vec::new();
    let mut columns: Vec<(String, Vec<String>)> = Vec::new();
    for g in &dataset.groups {
        let distinct: BTreeSet<String> = g.values.iter().cloned().collect();
        columns.push((g.name.clone(), distinct.into_iter().collect()));
    }
    for (col, values) in &columns {
        for v in values {
            groups.push(GroupSpec::equals(v.clone(), col.clone(), v.clone()));
        }
    }
    for a in 0..columns.len() {
        for b in a + 1..columns.len() {
            for va in &columns[a].1 {
                for vb in &columns[b].1 {
                    groups.push(GroupSpec::conjunction(
                        format!("{va}{vb}"),
                        vec![
                            (columns[a].0.clone(), va.clone()),
                            (columns[b].0.clone(), vb.clone()),
                        ],
                    ));
                }
            }
        }
    }
    groups
}

pub fn run(cli: Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(&cli, args),
        Command::TrainF0(args) => cmd_train_f0(&cli, args),
        Command::Boost(args) => cmd_boost(&cli, args),
        Command::Evaluate(args) => cmd_evaluate(&cli, args),
        Command::Diagnose(args) => cmd_diagnose(&cli, args),
        Command::Baseline(args) => cmd_baseline(&cli, args),
    }
}

fn cmd_synth(cli: &Cli, args: &SynthArgs) -> Result<()> {
    let out_dir = &cli.out_dir;
    let schema = Schema::default();
    if args.adversarial {
        let fx = data::generate_adversarial(args.n, args.d, args.group_mass, args.flip_rate, cli.seed)?;
        let data_path = out_dir.join("data.csv");
        let schema_path = out_dir.join("schema.json");
        let scores_path = out_dir.join("scores.csv");
        let set_path = out_dir.join("group_set.json");
        data::write_csv(&fx.dataset, &schema, &data_path)?;
        schema.save(&schema_path)?;
        let scores = match &fx.predictor {
            Predictor::Scores { scores } => scores.clone(),
            _ => unreachable!("fixture predictor is a scores file"),
        };
        model::write_scores_csv(&scores, &scores_path)?;
        std::fs::write(&set_path, serde_json::to_vec_pretty(&vec![fx.group_set.clone()])?)?;
        write_manifest(
            out_dir,
            "synth",
            cli.seed,
            serde_json::json!({
                "adversarial": true, "n": args.n, "d": args.d,
                "group_mass": args.group_mass, "flip_rate": args.flip_rate,
            }),
            &[],
            &[&data_path, &schema_path, &scores_path, &set_path],
        )?;
        println!(
            "wrote planted fixture: {} rows, hidden group mass {}, flip rate {}",
            args.n, args.group_mass, args.flip_rate
        );
        return Ok(());
    }

    let mut spec = SynthSpec {
        n: args.n,
        d: args.d,
        seed: cli.seed,
        ..SynthSpec::default()
    };
    if let Some(props) = &args.proportions {
        if props.len() != spec.groups.len() {
            return Err(Error::invalid(format!(
                "--proportions needs {} values, got {}",
                spec.groups.len(),
                props.len()
            )));
        }
        let total: f64 = props.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "--proportions must sum to 1, got {total}"
            )));
        }
        for (g, &p) in spec.groups.iter_mut().zip(props) {
            g.proportion = p;
        }
    }
    if let Some(orders) = &args.orders {
        if orders.len() != spec.groups.len() {
            return Err(Error::invalid(format!(
                "--orders needs {} values, got {}",
                spec.groups.len(),
                orders.len()
            )));
        }
        for (g, &o) in spec.groups.iter_mut().zip(orders) {
            g.order = o;
        }
    }
    let ds = data::generate_semisynth(&spec)?;
    let data_path = out_dir.join("data.csv");
    let schema_path = out_dir.join("schema.json");
    data::write_csv(&ds, &schema, &data_path)?;
    schema.save(&schema_path)?;
    write_manifest(
        out_dir,
        "synth",
        cli.seed,
        serde_json::to_value(&spec)?,
        &[],
        &[&data_path, &schema_path],
    )?;
    println!("wrote {} rows x {} features to {}", ds.n(), ds.d(), data_path.display());
    Ok(())
}

fn train_config(kind: KindArg, lr: f64, epochs: usize, l2: f64, hidden: &[usize], seed: u64) -> Result<TrainConfig> {
    if hidden.len() != 2 {
        return Err(Error::invalid("--hidden needs exactly two widths"));
    }
    Ok(TrainConfig {
        kind: kind.into(),
        learning_rate: lr,
        epochs,
        l2,
        hidden: (hidden[0], hidden[1]),
        clamp_eps: DEFAULT_CLAMP_EPS,
        seed,
    })
}

fn cmd_train_f0(cli: &Cli, args: &TrainArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.data, &args.schema)?;
    let cfg = train_config(
        args.kind,
        args.learning_rate,
        args.epochs,
        args.l2,
        &args.hidden,
        cli.seed,
    )?;
    let f0 = baselines::train_f0(&ds, &cfg)?;
    let out = cli.out_dir.join(&args.out);
    model::save_predictor(&f0, &out)?;
    let scores = f0.scores_for(&ds.features)?;
    let err = metrics::classification_error(&scores, &ds.labels, &vec![true; ds.n()])?;
    write_manifest(
        &cli.out_dir,
        "train-f0",
        cli.seed,
        serde_json::to_value(&cfg)?,
        &[&args.data],
        &[&out],
    )?;
    println!("trained {:?} on {} rows; training error {:.3}", cfg.kind, ds.n(), err);
    Ok(())
}

fn base_predictor(args: &BoostArgs) -> Result<Predictor> {
    match (&args.scores, &args.model) {
        (Some(p), None) => Ok(Predictor::Scores {
            scores: model::read_scores_csv(p)?,
        }),
        (None, Some(p)) => model::load_predictor(p),
        _ => Err(Error::invalid("provide exactly one of --scores or --model")),
    }
}

fn auditor_config(args: &BoostArgs, alpha: f64) -> Result<AuditorConfig> {
    let mut cfg = match args.auditor {
        AuditorArg::Ridge => AuditorConfig::ridge(alpha),
        AuditorArg::Tree => AuditorConfig::tree(alpha),
        AuditorArg::Gradient => AuditorConfig::gradient(alpha),
        AuditorArg::Sets => {
            let path = args
                .sets_file
                .as_ref()
                .ok_or_else(|| Error::invalid("--sets-file is required for the sets auditor"))?;
            let sets: Vec<SetDescription> = serde_json::from_slice(&std::fs::read(path)?)?;
            AuditorConfig::sets(alpha, sets)
        }
    };
    cfg.tree_max_depth = args.tree_depth;
    cfg.ridge_lambda = args.ridge_lambda;
    Ok(cfg)
}

fn cmd_boost(cli: &Cli, args: &BoostArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.data, &args.schema)?;
    let base = base_predictor(args)?;
    let auditor = auditor_config(args, args.alpha)?;
    let batch_strategy = if args.batch == "full" {
        BatchStrategy::SingleBatch
    } else {
        let k: usize = args
            .batch
            .parse()
            .map_err(|_| Error::invalid(format!("--batch must be 'full' or a fold count, got '{}'", args.batch)))?;
        BatchStrategy::FreshFolds { k }
    };
    let mut config = BoostConfig::new(args.alpha, auditor);
    if let Some(eta) = args.eta {
        config.eta = eta;
    }
    config.max_iterations = args.max_iter;
    config.batch_strategy = batch_strategy;
    config.seed = cli.seed;
    config.unrestricted_argmax = args.unrestricted_argmax;

    let (model_out, trace) = boost::run_boost(&base, &ds, &config)?;

    println!("{:>4} {:>5} {:>12} {:>12} {:>12}", "t", "part", "corr", "xent_before", "xent_after");
    for r in &trace.rounds {
        println!(
            "{:>4} {:>5} {:>12.6} {:>12.6} {:>12.6}",
            r.t,
            r.partition.label(),
            r.correlation,
            r.xent_before,
            r.xent_after
        );
    }
    match trace.reason {
        StopReason::Converged => println!(
            "converged at t={} (max correlation {:.6} <= alpha {})",
            trace.final_batch.unwrap_or(trace.iterations()),
            trace.final_max_correlation.unwrap_or(f64::NAN),
            config.alpha
        ),
        StopReason::MaxIterations => {
            println!("stopped at max iterations ({})", config.max_iterations)
        }
    }

    let model_path = cli.out_dir.join(&args.out_model);
    let trace_path = cli.out_dir.join(&args.out_trace);
    model_out.save(&model_path)?;
    std::fs::write(&trace_path, trace.to_jsonl()?)?;

    let mut inputs: Vec<&Path> = vec![args.data.as_path()];
    if let Some(p) = &args.scores {
        inputs.push(p);
    }
    if let Some(p) = &args.model {
        inputs.push(p);
    }
    write_manifest(
        &cli.out_dir,
        "boost",
        cli.seed,
        serde_json::to_value(&config)?,
        &inputs,
        &[&model_path, &trace_path],
    )?;
    Ok(())
}

fn resolve_groups(dataset: &Dataset, requested: &Option<Vec<String>>) -> Result<Vec<GroupSpec>> {
    let all = auto_groups(dataset);
    match requested {
        None => Ok(all),
        Some(names) => {
            let mut out = Vec::new();
            for name in names {
                let g = all
                    .iter()
                    .find(|g| &g.name == name)
                    .ok_or_else(|| Error::invalid(format!("unknown group '{name}'")))?;
                out.push(g.clone());
            }
            Ok(out)
        }
    }
}

fn cmd_evaluate(cli: &Cli, args: &EvaluateArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.data, &args.schema)?;
    if args.models.is_empty() && args.scores.is_empty() {
        return Err(Error::invalid("provide at least one --model or --scores"));
    }
    let mut scored: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, path) in &args.models {
        let p = model::load_predictor(path)?;
        scored.push((name.clone(), p.scores_for(&ds.features)?));
    }
    for (name, path) in &args.scores {
        let s = model::read_scores_csv(path)?;
        if s.len() != ds.n() {
            return Err(Error::invalid(format!(
                "scores file '{}' has {} rows but dataset has {}",
                path.display(),
                s.len(),
                ds.n()
            )));
        }
        scored.push((name.clone(), s));
    }
    let groups = resolve_groups(&ds, &args.groups)?;
    let report = metrics::build_report(&ds, &scored, &groups, args.alpha, DEFAULT_CLAMP_EPS)?;

    if matches!(cli.format, OutputFormat::Table | OutputFormat::Both) {
        print!("{}", report.render_table());
    }
    let out = cli.out_dir.join(&args.out);
    std::fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
    if matches!(cli.format, OutputFormat::Json) {
        println!("{}", serde_json::to_string(&report)?);
    }
    let mut inputs: Vec<&Path> = vec![args.data.as_path()];
    for (_, p) in &args.models {
        inputs.push(p);
    }
    for (_, p) in &args.scores {
        inputs.push(p);
    }
    write_manifest(
        &cli.out_dir,
        "evaluate",
        cli.seed,
        serde_json::json!({"alpha": args.alpha, "groups": report.groups}),
        &inputs,
        &[&out],
    )?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct DiagnoseRow {
    row: usize,
    effect: f64,
    score: f64,
    groups: Vec<String>,
}

#[derive(Debug, Serialize)]
struct DiagnoseReport {
    round: usize,
    partition: String,
    top: Vec<DiagnoseRow>,
    bottom: Vec<DiagnoseRow>,
}

fn cmd_diagnose(cli: &Cli, args: &DiagnoseArgs) -> Result<()> {
    let (ds, _) = load_dataset(&args.data, &args.schema)?;
    let boosted = BoostedModel::load(&args.model)?;
    if args.round == 0 || args.round > boosted.updates.len() {
        return Err(Error::invalid(format!(
            "round {} out of range: model has {} updates",
            args.round,
            boosted.updates.len()
        )));
    }
    let update = &boosted.updates[args.round - 1];
    let mut effects: Vec<(usize, f64)> = (0..ds.n())
        .map(|i| {
            crate::audit::evaluate_hypothesis(&update.hypothesis, ds.features.row(i))
                .map(|v| (i, v))
        })
        .collect::<Result<Vec<_>>>()?;
    // Sort by |h| descending; stable on row order for equal magnitudes.
    effects.sort_by(|a, b| {
        b.1.abs()
            .partial_cmp(&a.1.abs())
            .expect("finite effects")
            .then(a.0.cmp(&b.0))
    });
    let k = args.top.min(ds.n());
    let make_row = |&(i, v): &(usize, f64)| DiagnoseRow {
        row: i,
        effect: v,
        score: f64::NAN,
        groups: ds.groups.iter().map(|g| format!("{}={}", g.name, g.values[i])).collect(),
    };
    let mut top: Vec<DiagnoseRow> = effects.iter().take(k).map(make_row).collect();
    let mut bottom: Vec<DiagnoseRow> = effects.iter().rev().take(k).map(make_row).collect();
    let scores = boosted.scores_for(&ds.features)?;
    for r in top.iter_mut().chain(bottom.iter_mut()) {
        r.score = scores[r.row];
    }

    println!("round {} ({} partition): top-{k} |h| rows", args.round, update.partition.label());
    for r in &top {
        println!("  row {:>6}  h = {:+.4}  score = {:.4}  {}", r.row, r.effect, r.score, r.groups.join(" "));
    }
    println!("least-affected {k} rows:");
    for r in &bottom {
        println!("  row {:>6}  h = {:+.4}  score = {:.4}  {}", r.row, r.effect, r.score, r.groups.join(" "));
    }

    let report = DiagnoseReport {
        round: args.round,
        partition: update.partition.label().to_string(),
        top,
        bottom,
    };
    let out = cli.out_dir.join(&args.out);
    std::fs::write(&out, serde_json::to_vec_pretty(&report)?)?;
    write_manifest(
        &cli.out_dir,
        "diagnose",
        cli.seed,
        serde_json::json!({"round": args.round, "top": args.top}),
        &[&args.data, &args.model],
        &[&out],
    )?;
    Ok(())
}

fn cmd_baseline(cli: &Cli, args: &BaselineArgs) -> Result<()> {
    let (audit, _) = load_dataset(&args.audit, &args.schema)?;
    let cfg = train_config(
        args.model_kind,
        args.learning_rate,
        args.epochs,
        args.l2,
        &args.hidden,
        cli.seed,
    )?;
    match args.kind {
        BaselineKind::Rt => {
            let f0_path = args
                .f0
                .as_ref()
                .ok_or_else(|| Error::invalid("--f0 is required for the rt baseline"))?;
            let f0 = model::load_predictor(f0_path)?;
            let rt = baselines::retrain_baseline(&f0, &audit, &cfg)?;
            let out = cli.out_dir.join(&args.out);
            model::save_predictor(&rt, &out)?;
            write_manifest(
                &cli.out_dir,
                "baseline",
                cli.seed,
                serde_json::json!({"kind": "rt", "train": cfg}),
                &[&args.audit, f0_path],
                &[&out],
            )?;
            println!("wrote rt baseline to {}", out.display());
        }
        BaselineKind::Ss => {
            let eval_path = args
                .eval
                .as_ref()
                .ok_or_else(|| Error::invalid("--eval is required for the ss baseline"))?;
            let (eval_ds, _) = load_dataset(eval_path, &args.schema)?;
            // Partition by the conjunction of all group columns.
            let groups = subgroup_partition(&audit)?;
            let ss = baselines::subgroup_specific_baseline(&audit, &groups, &cfg)?;
            let scores = ss.scores_for(&eval_ds)?;
            let out = cli.out_dir.join(&args.out);
            model::write_scores_csv(&scores, &out)?;
            write_manifest(
                &cli.out_dir,
                "baseline",
                cli.seed,
                serde_json::json!({
                    "kind": "ss", "train": cfg,
                    "note": "requires sensitive group columns at inference",
                }),
                &[&args.audit, eval_path],
                &[&out],
            )?;
            println!(
                "wrote ss baseline scores ({} subgroups) to {}; group columns required at inference",
                ss.parts.len(),
                out.display()
            );
        }
    }
    Ok(())
}

/// The finest partition expressible by the dataset's group columns: one part
/// per observed combination of values.
pub fn subgroup_partition(dataset: &Dataset) -> Result<Vec<GroupSpec>> {
    if dataset.groups.is_empty() {
        return Err(Error::invalid("dataset has no group columns"));
    }
    let mut combos: BTreeSet<Vec<String>> = BTreeSet::new();
    for i in 0..dataset.n() {
        combos.insert(dataset.groups.iter().map(|g| g.values[i].clone()).collect());
    }
    Ok(combos
        .into_iter()
        .map(|vals| {
            let name = vals.join("");
            GroupSpec::conjunction(
                name,
                dataset
                    .groups
                    .iter()
                    .zip(&vals)
                    .map(|(g, v)| (g.name.clone(), v.clone()))
                    .collect(),
            )
        })
        .collect())
}

/// Exit code mapping: 2 for usage/input problems, 3 for runtime failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Format { .. } | Error::EmptyGroup(_)
        | Error::UnsupportedBaseline(_) => 2,
        Error::Training { .. } | Error::Io(_) => 3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn named_path_parsing() {
        assert!(parse_named_path("f0=path/to.json").is_ok());
        assert!(parse_named_path("nopath").is_err());
        assert!(parse_named_path("=x").is_err());
    }

    #[test]
    fn auto_groups_cover_marginals_and_pairs() {
        let spec = SynthSpec {
            n: 400,
            d: 14,
            seed: 1,
            ..SynthSpec::default()
        };
        let ds = data::generate_semisynth(&spec).unwrap();
        let groups = auto_groups(&ds);
        let names: Vec<&str> = groups.iter().map(|g| g.name.as_str()).collect();
        for expect in ["F", "M", "O", "Y", "FO", "FY", "MO", "MY"] {
            assert!(names.contains(&expect), "missing group {expect}: {names:?}");
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::invalid("x")), 2);
        assert_eq!(
            exit_code(&Error::Training {
                epoch: 1,
                message: "nan".into()
            }),
            3
        );
    }
}
