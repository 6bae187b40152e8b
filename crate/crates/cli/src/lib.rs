//! `dsqa` command-line runner.
//!
//! Every run-producing command resolves its configuration first (file, then
//! `--set` overrides, then the seed), validates it, and only then touches the
//! filesystem. Runs land in `<out>/runs/<run_id>/` with the resolved config next
//! to their checkpoints and reports.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use dsqa_core::data::{load_corpus, save_corpus, split, Corpus};
use dsqa_core::evaluation::{self, write_json, write_results_csv, EvalReport, Level, ResultRow};
use dsqa_core::model::{AdaptorNet, HeadKind};
use dsqa_core::pipeline::{
    self, ablation_configs, build_stage2_corpus, constant_label, history_metrics, improvement_pct,
    load_checkpoint, load_experiment_data, pseudo_label, run_experiment, save_checkpoint, save_experiment_data,
    stage2_metrics, Checkpoint, ExperimentData, RunConfig, StageTag, Strategy, SyntheticSuite, TAU_GRID,
};

pub const RUN_ROOT_ENV: &str = "DSQA_RUN_ROOT";

#[derive(Debug, Parser)]
#[command(name = "dsqa", version, about = "Three-stage dysarthric severity training on frame features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ConfigArgs {
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set stage2.tau.coarse=50`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Comma-separated seeds; defaults to the configured seed.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Directory written by `gen-data`.
    #[arg(long)]
    pub data: PathBuf,
    /// Experiment directory; defaults to $DSQA_RUN_ROOT, then `runs`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub config: ConfigArgs,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum LevelArg {
    Utterance,
    Speaker,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic labeled/unlabeled/typical/cross-domain corpora.
    GenData {
        #[arg(long)]
        out: PathBuf,
        /// JSON suite description; the built-in suite when omitted.
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Multiply every corpus size by this factor.
        #[arg(long)]
        scale: Option<f64>,
    },
    /// Train the Stage-1 regressor on the labeled training split.
    Stage1(RunArgs),
    /// Label an unlabeled corpus with a Stage-1 checkpoint.
    PseudoLabel {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Contrastive pretraining on labeled + pseudo-labeled + typical data.
    Stage2 {
        #[command(flatten)]
        run: RunArgs,
        /// Pseudo-labeled corpus from `pseudo-label`.
        #[arg(long)]
        pseudo: Option<PathBuf>,
    },
    /// Fine-tune a regressor initialised from a Stage-2 encoder.
    Stage3 {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        encoder: PathBuf,
    },
    /// All stages for every seed, with evaluation.
    RunAll(RunArgs),
    /// Score a regression checkpoint on a corpus.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long, value_enum, default_value = "utterance")]
        level: LevelArg,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// One run per temperature, compared against the baseline.
    SweepTau {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',')]
        grid: Vec<f64>,
    },
    /// The full model and each single-factor ablation.
    Ablate(RunArgs),
    /// Write post-pooling embeddings in the DSQE format.
    DumpEmbeddings {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

/// Failure classes, mapped to exit codes 1 and 2.
#[derive(Debug)]
pub enum Failure {
    Validation(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Validation(_) => 1,
            Failure::Runtime(_) => 2,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Validation(e) => write!(f, "invalid input: {e:#}"),
            Failure::Runtime(e) => write!(f, "run failed: {e:#}"),
        }
    }
}

type Outcome<T> = std::result::Result<T, Failure>;

trait Classify<T> {
    fn invalid(self) -> Outcome<T>;
    fn runtime(self) -> Outcome<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for std::result::Result<T, E> {
    fn invalid(self) -> Outcome<T> {
        self.map_err(|e| Failure::Validation(e.into()))
    }
    fn runtime(self) -> Outcome<T> {
        self.map_err(|e| Failure::Runtime(e.into()))
    }
}

/// Parses arguments and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {f}");
            f.exit_code()
        }
    }
}

pub fn run(command: Command) -> Outcome<()> {
    match command {
        Command::GenData { out, suite, seed, scale } => gen_data(&out, suite.as_deref(), seed, scale),
        Command::Stage1(run) => stage1(&run),
        Command::PseudoLabel { checkpoint, corpus, output } => pseudo_label_cmd(&checkpoint, &corpus, &output),
        Command::Stage2 { run, pseudo } => stage2(&run, pseudo.as_deref()),
        Command::Stage3 { run, encoder } => stage3(&run, &encoder),
        Command::RunAll(run) => run_all(&run),
        Command::Evaluate {
            checkpoint,
            corpus,
            level,
            output,
        } => evaluate_cmd(&checkpoint, &corpus, level, output.as_deref()),
        Command::SweepTau { run, grid } => sweep_tau(&run, &grid),
        Command::Ablate(run) => ablate(&run),
        Command::DumpEmbeddings {
            checkpoint,
            corpus,
            output,
        } => dump_embeddings(&checkpoint, &corpus, &output),
    }
}

/// File config, then overrides, then validation.
pub fn resolve_config(args: &ConfigArgs) -> anyhow::Result<RunConfig> {
    let mut cfg = match &args.config {
        Some(p) => {
            let text = fs::read(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_slice(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => RunConfig::default(),
    };
    for o in &args.overrides {
        cfg.apply_override(o)?;
    }
    cfg.validate()?;
    Ok(cfg)
}

/// One resolved config per requested seed.
pub fn seeded_configs(args: &ConfigArgs) -> anyhow::Result<Vec<RunConfig>> {
    let cfg = resolve_config(args)?;
    if args.seeds.is_empty() {
        return Ok(vec![cfg]);
    }
    Ok(args
        .seeds
        .iter()
        .map(|&seed| RunConfig { seed, ..cfg.clone() })
        .collect())
}

/// Hash of the resolved configuration (which includes the seed).
pub fn run_id(cfg: &RunConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serialises");
    Sha256::digest(&bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn out_root(out: Option<&Path>) -> PathBuf {
    match out {
        Some(p) => p.to_path_buf(),
        None => std::env::var_os(RUN_ROOT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs")),
    }
}

fn run_dir(root: &Path, cfg: &RunConfig) -> Outcome<PathBuf> {
    let dir = root.join("runs").join(run_id(cfg));
    fs::create_dir_all(&dir).runtime()?;
    write_json(dir.join("config.json"), cfg).runtime()?;
    Ok(dir)
}

fn load_data(dir: &Path) -> Outcome<ExperimentData> {
    load_experiment_data(dir)
        .with_context(|| format!("loading experiment data from {}", dir.display()))
        .invalid()
}

fn gen_data(out: &Path, suite: Option<&Path>, seed: Option<u64>, scale: Option<f64>) -> Outcome<()> {
    let mut spec: SyntheticSuite = match suite {
        Some(p) => serde_json::from_slice(&fs::read(p).invalid()?).invalid()?,
        None => SyntheticSuite::default(),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    if let Some(f) = scale {
        if !(f > 0.0) {
            return Err(Failure::Validation(anyhow!("--scale must be positive, got {f}")));
        }
        spec = spec.scaled(f);
    }
    let data = spec.generate().invalid()?;
    save_experiment_data(out, &data).runtime()?;
    write_json(out.join("suite.json"), &spec).runtime()?;
    eprintln!(
        "wrote {} labeled, {} unlabeled, {} typical, {} cross-domain sets to {}",
        data.labeled.len(),
        data.unlabeled.as_ref().map_or(0, Corpus::len),
        data.typical.as_ref().map_or(0, Corpus::len),
        data.cross.len(),
        out.display()
    );
    Ok(())
}

fn single_config(args: &ConfigArgs) -> Outcome<RunConfig> {
    let mut cfgs = seeded_configs(args).invalid()?;
    if cfgs.len() != 1 {
        return Err(Failure::Validation(anyhow!("this command takes a single seed")));
    }
    Ok(cfgs.remove(0))
}

fn stage1(run: &RunArgs) -> Outcome<()> {
    let cfg = single_config(&run.config)?;
    let data = load_data(&run.data)?;
    let dir = run_dir(&out_root(run.out.as_deref()), &cfg)?;
    let (train, val, test) = split(&data.labeled, cfg.data.split, cfg.data.split_seed).runtime()?;
    let trained = pipeline::train_stage1(&train, &val, &cfg).runtime()?;
    let ckpt = Checkpoint::from_model(&trained.model, StageTag::Stage1, &cfg, history_metrics(&trained.history));
    save_checkpoint(dir.join("stage1.dsqc"), &ckpt).runtime()?;
    let reports = pipeline::evaluate_suite(&trained.model, &test, &data.cross).runtime()?;
    write_json(dir.join("stage1_history.json"), &trained.history).runtime()?;
    write_json(dir.join("stage1_report.json"), &reports).runtime()?;
    print_reports("stage1", &reports);
    println!("{}", dir.display());
    Ok(())
}

fn pseudo_label_cmd(checkpoint: &Path, corpus: &Path, output: &Path) -> Outcome<()> {
    let model = load_regressor(checkpoint)?;
    let unlabeled = load_corpus(corpus).invalid()?;
    let p = pseudo_label(&model, &unlabeled).runtime()?;
    save_corpus(output, &p.corpus).runtime()?;
    write_json(output.join("histogram.json"), &p.histogram).runtime()?;
    println!("pseudo-label histogram (bins 1..7): {:?}", p.histogram);
    Ok(())
}

fn stage2(run: &RunArgs, pseudo: Option<&Path>) -> Outcome<()> {
    let cfg = single_config(&run.config)?;
    let data = load_data(&run.data)?;
    let pseudo = match pseudo {
        Some(p) => Some(load_corpus(p).invalid()?),
        None => None,
    };
    let dir = run_dir(&out_root(run.out.as_deref()), &cfg)?;
    let (train, _, _) = split(&data.labeled, cfg.data.split, cfg.data.split_seed).runtime()?;
    let pseudo = match (pseudo, &data.unlabeled) {
        (Some(p), _) => Some(p),
        (None, Some(u)) => Some(constant_label(u, cfg.ablation.unlabeled_label).runtime()?),
        (None, None) => None,
    };
    let pseudo = pseudo.filter(|_| cfg.data.use_unlabeled);
    let typical = data.typical.as_ref().filter(|_| cfg.data.use_typical);
    let (mixed, counts) = build_stage2_corpus(&train, pseudo.as_ref(), typical).runtime()?;
    let enc = pipeline::train_stage2(&mixed, &cfg).runtime()?;
    let ckpt = Checkpoint::from_model(&enc.model, StageTag::Stage2, &cfg, stage2_metrics(&enc.history));
    save_checkpoint(dir.join("stage2.dsqc"), &ckpt).runtime()?;
    write_json(dir.join("stage2_history.json"), &enc.history).runtime()?;
    write_json(dir.join("stage2_counts.json"), &counts).runtime()?;
    println!("{}", dir.display());
    Ok(())
}

fn stage3(run: &RunArgs, encoder: &Path) -> Outcome<()> {
    let cfg = single_config(&run.config)?;
    let data = load_data(&run.data)?;
    let enc = load_checkpoint(encoder).invalid()?;
    let dir = run_dir(&out_root(run.out.as_deref()), &cfg)?;
    let (train, val, test) = split(&data.labeled, cfg.data.split, cfg.data.split_seed).runtime()?;
    let trained = pipeline::train_stage3(&train, &val, &enc, &cfg).runtime()?;
    let ckpt = Checkpoint::from_model(&trained.model, StageTag::Stage3, &cfg, history_metrics(&trained.history));
    save_checkpoint(dir.join("stage3.dsqc"), &ckpt).runtime()?;
    let reports = pipeline::evaluate_suite(&trained.model, &test, &data.cross).runtime()?;
    write_json(dir.join("stage3_report.json"), &reports).runtime()?;
    print_reports("stage3", &reports);
    println!("{}", dir.display());
    Ok(())
}

/// Runs one configuration end to end and persists everything under its run directory.
struct Executed {
    rows: Vec<ResultRow>,
    stage2_losses: Vec<f64>,
}

fn execute(root: &Path, data: &ExperimentData, cfg: &RunConfig) -> Outcome<Executed> {
    let dir = run_dir(root, cfg)?;
    let id = run_id(cfg);
    eprintln!("[{id}] {} seed {}", cfg.run_label(), cfg.seed);
    let outcome = run_experiment(data, cfg).runtime()?;
    if let Some(s1) = &outcome.stage1 {
        let c = Checkpoint::from_model(&s1.model, StageTag::Stage1, cfg, history_metrics(&s1.history));
        save_checkpoint(dir.join("stage1.dsqc"), &c).runtime()?;
    }
    if let Some(s2) = &outcome.stage2 {
        let c = Checkpoint::from_model(&s2.model, StageTag::Stage2, cfg, stage2_metrics(&s2.history));
        save_checkpoint(dir.join("stage2.dsqc"), &c).runtime()?;
    }
    let tag = if cfg.strategy == Strategy::Baseline {
        StageTag::Stage1
    } else {
        StageTag::Stage3
    };
    let c = Checkpoint::from_model(&outcome.model.model, tag, cfg, history_metrics(&outcome.model.history));
    save_checkpoint(dir.join("final.dsqc"), &c).runtime()?;
    write_json(dir.join("report.json"), &outcome.summary()).runtime()?;
    let rows: Vec<ResultRow> = outcome
        .reports
        .iter()
        .map(|r| ResultRow::new(&id, &outcome.label, cfg.seed, r))
        .collect();
    write_results_csv(dir.join("results.csv"), &rows).runtime()?;
    print_reports(&outcome.label, &outcome.reports);
    let stage2_losses = outcome
        .stage2
        .iter()
        .flat_map(|e| e.history.epochs.iter().map(|x| x.loss))
        .collect();
    Ok(Executed { rows, stage2_losses })
}

fn print_reports(label: &str, reports: &[EvalReport]) {
    for r in reports {
        match (r.srcc, r.pcc) {
            (Some(s), Some(p)) => eprintln!("  {label:<28} {:<16} {:<9} srcc {s:.4} pcc {p:.4} n {}", r.dataset, r.level.as_str(), r.n),
            _ => eprintln!("  {label:<28} {:<16} {:<9} undefined ({})", r.dataset, r.level.as_str(), r.error.as_deref().unwrap_or("")),
        }
    }
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2.0 })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedSummary {
    pub strategy: String,
    pub dataset: String,
    pub level: Level,
    pub seeds: Vec<u64>,
    pub srcc: Vec<Option<f64>>,
    pub pcc: Vec<Option<f64>>,
    pub median_srcc: Option<f64>,
    pub median_pcc: Option<f64>,
}

/// Per-seed values and medians for every (strategy, dataset) pair, in first-seen order.
pub fn summarize(rows: &[ResultRow]) -> Vec<SeedSummary> {
    let mut order: Vec<(String, String)> = Vec::new();
    let mut groups: BTreeMap<(String, String), SeedSummary> = BTreeMap::new();
    for r in rows {
        let key = (r.strategy.clone(), r.dataset.clone());
        let e = groups.entry(key.clone()).or_insert_with(|| {
            order.push(key);
            SeedSummary {
                strategy: r.strategy.clone(),
                dataset: r.dataset.clone(),
                level: r.level,
                seeds: Vec::new(),
                srcc: Vec::new(),
                pcc: Vec::new(),
                median_srcc: None,
                median_pcc: None,
            }
        });
        e.seeds.push(r.seed);
        e.srcc.push(r.srcc);
        e.pcc.push(r.pcc);
    }
    order
        .into_iter()
        .map(|k| {
            let mut s = groups.remove(&k).expect("grouped");
            // a seed with an undefined correlation leaves the median undefined
            let all = |v: &[Option<f64>]| v.iter().copied().collect::<Option<Vec<f64>>>().and_then(median);
            s.median_srcc = all(&s.srcc);
            s.median_pcc = all(&s.pcc);
            s
        })
        .collect()
}

fn write_outputs(root: &Path, rows: &[ResultRow]) -> Outcome<Vec<SeedSummary>> {
    write_results_csv(root.join("results.csv"), rows).runtime()?;
    let summary = summarize(rows);
    write_json(root.join("summary.json"), &summary).runtime()?;
    Ok(summary)
}

fn run_all(run: &RunArgs) -> Outcome<()> {
    let cfgs = seeded_configs(&run.config).invalid()?;
    let data = load_data(&run.data)?;
    let root = out_root(run.out.as_deref());
    let mut rows = Vec::new();
    for cfg in &cfgs {
        rows.extend(execute(&root, &data, cfg)?.rows);
    }
    for s in write_outputs(&root, &rows)? {
        eprintln!("median {:<26} {:<16} srcc {}", s.strategy, s.dataset, fmt_opt(s.median_srcc));
    }
    println!("{}", root.join("results.csv").display());
    Ok(())
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |x| format!("{x:.4}"))
}

fn ablate(run: &RunArgs) -> Outcome<()> {
    let cfgs = seeded_configs(&run.config).invalid()?;
    if cfgs[0].strategy == Strategy::Baseline {
        return Err(Failure::Validation(anyhow!("ablations need a contrastive strategy, not baseline")));
    }
    let data = load_data(&run.data)?;
    let root = out_root(run.out.as_deref());
    let mut rows = Vec::new();
    for cfg in &cfgs {
        let base = RunConfig {
            strategy: Strategy::Baseline,
            ..cfg.clone()
        };
        rows.extend(execute(&root, &data, &base)?.rows);
        for variant in ablation_configs(cfg) {
            rows.extend(execute(&root, &data, &variant)?.rows);
        }
    }
    for s in write_outputs(&root, &rows)? {
        eprintln!("median {:<26} {:<16} srcc {}", s.strategy, s.dataset, fmt_opt(s.median_srcc));
    }
    println!("{}", root.join("results.csv").display());
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub tau: f64,
    pub strategy: String,
    pub dataset: String,
    pub median_srcc: Option<f64>,
    pub baseline_median_srcc: Option<f64>,
    pub srcc_improvement_pct: Option<f64>,
    pub median_pcc: Option<f64>,
    pub baseline_median_pcc: Option<f64>,
    pub pcc_improvement_pct: Option<f64>,
    /// Largest mean Stage-2 epoch loss over all seeds.
    pub max_stage2_loss: f64,
}

pub const SWEEP_HEADER: &str = "tau,strategy,dataset,median_srcc,baseline_median_srcc,srcc_improvement_pct,median_pcc,baseline_median_pcc,pcc_improvement_pct,max_stage2_loss";

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let o = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    let mut s = format!("{SWEEP_HEADER}\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            r.tau,
            r.strategy,
            r.dataset,
            o(r.median_srcc),
            o(r.baseline_median_srcc),
            o(r.srcc_improvement_pct),
            o(r.median_pcc),
            o(r.baseline_median_pcc),
            o(r.pcc_improvement_pct),
            r.max_stage2_loss
        ));
    }
    s
}

fn sweep_tau(run: &RunArgs, grid: &[f64]) -> Outcome<()> {
    let cfgs = seeded_configs(&run.config).invalid()?;
    let pairing = cfgs[0]
        .strategy
        .pairing()
        .ok_or_else(|| Failure::Validation(anyhow!("sweep-tau needs a contrastive strategy, not baseline")))?;
    let grid: Vec<f64> = if grid.is_empty() { TAU_GRID.to_vec() } else { grid.to_vec() };
    if let Some(bad) = grid.iter().find(|t| !(**t > 0.0) || !t.is_finite()) {
        return Err(Failure::Validation(anyhow!("temperature {bad} must be positive and finite")));
    }
    let data = load_data(&run.data)?;
    let root = out_root(run.out.as_deref());

    let mut rows = Vec::new();
    for cfg in &cfgs {
        let base = RunConfig {
            strategy: Strategy::Baseline,
            ..cfg.clone()
        };
        rows.extend(execute(&root, &data, &base)?.rows);
    }
    let baseline = summarize(&rows);
    let mut table = Vec::new();
    for &tau in &grid {
        let mut tau_rows = Vec::new();
        let mut max_loss = f64::NEG_INFINITY;
        for cfg in &cfgs {
            let mut c = cfg.clone();
            c.stage2.tau.set(pairing, tau);
            let done = execute(&root, &data, &c)?;
            for l in done.stage2_losses {
                if !l.is_finite() {
                    return Err(Failure::Runtime(anyhow!("stage-2 loss overflowed at tau {tau} (seed {})", c.seed)));
                }
                max_loss = max_loss.max(l);
            }
            tau_rows.extend(done.rows);
        }
        for s in summarize(&tau_rows) {
            let b = baseline.iter().find(|b| b.dataset == s.dataset);
            let bs = b.and_then(|b| b.median_srcc);
            let bp = b.and_then(|b| b.median_pcc);
            table.push(SweepRow {
                tau,
                strategy: cfgs[0].strategy.as_str().to_string(),
                dataset: s.dataset.clone(),
                median_srcc: s.median_srcc,
                baseline_median_srcc: bs,
                srcc_improvement_pct: s.median_srcc.zip(bs).map(|(v, b)| improvement_pct(v, b)),
                median_pcc: s.median_pcc,
                baseline_median_pcc: bp,
                pcc_improvement_pct: s.median_pcc.zip(bp).map(|(v, b)| improvement_pct(v, b)),
                max_stage2_loss: max_loss,
            });
        }
        rows.extend(tau_rows);
    }
    write_outputs(&root, &rows)?;
    evaluation::write_atomic(&root.join("tau_sweep.csv"), sweep_csv(&table).as_bytes()).runtime()?;
    write_json(root.join("tau_sweep.json"), &table).runtime()?;
    println!("{:>7}  {:<16} {:>9} {:>9} {:>8}", "tau", "dataset", "srcc", "baseline", "gain %");
    for r in &table {
        println!(
            "{:>7}  {:<16} {:>9} {:>9} {:>8}",
            r.tau,
            r.dataset,
            fmt_opt(r.median_srcc),
            fmt_opt(r.baseline_median_srcc),
            r.srcc_improvement_pct.map_or_else(|| "-".into(), |v| format!("{v:+.2}"))
        );
    }
    Ok(())
}

fn load_regressor(checkpoint: &Path) -> Outcome<AdaptorNet> {
    let model = load_checkpoint(checkpoint).invalid()?.to_model().invalid()?;
    if model.head_kind != HeadKind::Regression {
        return Err(Failure::Validation(anyhow!(
            "{} holds a projection encoder, not a regressor",
            checkpoint.display()
        )));
    }
    Ok(model)
}

fn evaluate_cmd(checkpoint: &Path, corpus: &Path, level: LevelArg, output: Option<&Path>) -> Outcome<()> {
    let model = load_regressor(checkpoint)?;
    let corpus = load_corpus(corpus).invalid()?;
    let level = match level {
        LevelArg::Utterance => Level::Utterance,
        LevelArg::Speaker => Level::Speaker,
    };
    let report = evaluation::evaluate(&model, &corpus, level).runtime()?;
    if let Some(p) = output {
        write_json(p, &report).runtime()?;
    }
    println!("{}", serde_json::to_string_pretty(&report).runtime()?);
    Ok(())
}

fn dump_embeddings(checkpoint: &Path, corpus: &Path, output: &Path) -> Outcome<()> {
    let model = load_checkpoint(checkpoint).invalid()?.to_model().invalid()?;
    let corpus = load_corpus(corpus).invalid()?;
    evaluation::dump_embeddings(&model, &corpus, output).runtime()?;
    eprintln!("{} embeddings of dimension {} -> {}", corpus.len(), model.pooled_dim(), output.display());
    Ok(())
}
