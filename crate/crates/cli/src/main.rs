//! Operator entry point wiring ingestion, training, evaluation, grid search,
//! and synthetic data generation.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage error. Machine-readable
//! output goes to stdout and files; progress and diagnostics go to stderr.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use obctr_core::baselines::{OctrConfig, OnlineLdaConfig, PaIConfig, SgdPmfConfig};
use obctr_core::checkpoint::{self, Checkpoint};
use obctr_core::eval::{grid_search, paper_grid, predictive_log_likelihood, TraceCsvWriter};
use obctr_core::ingest::{
    build_corpus, parse_ratings, split_stream, Corpus, CorpusOptions, ParseMode, StreamSplit,
    Vocabulary,
};
use obctr_core::model::{HyperParams, RatingEvent};
use obctr_core::run::{test_rmse, train_stream, AlgoConfig, AlgorithmKind, TrainOptions};
use obctr_core::synth::{generate_synthetic, SynthConfig};

use config::{resolve, resolve_opt, ConfigFile};

const SUMMARY_FORMAT_VERSION: u32 = 1;
const DATA_DIR_ENV: &str = "OBCTR_DATA_DIR";

#[derive(Parser)]
#[command(
    name = "obctr",
    version,
    about = "Streaming collaborative topic regression: train, evaluate, grid-search, and generate synthetic data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one algorithm with a single pass over the rating stream.
    Train(Box<TrainArgs>),
    /// Evaluate a checkpoint on a rating file.
    Eval(EvalArgs),
    /// Grid-search hyperparameters, ranking by validation RMSE.
    Grid(Box<GridArgs>),
    /// Sample a synthetic dataset from the generative model.
    Synth(SynthArgs),
}

#[derive(Args, Default)]
struct TrainArgs {
    /// Key-value config file; explicit flags win over file values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Algorithm: obctr, octr, pa-i, sgd-pmf, or online-lda.
    #[arg(long)]
    algo: Option<String>,
    /// Rating file (user::item::rating::timestamp).
    #[arg(long)]
    ratings: Option<String>,
    /// Item text TSV (item_id<TAB>text); required by text-using algorithms.
    #[arg(long)]
    docs: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Root seed for every random choice in the run.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    sigma_u2: Option<f64>,
    #[arg(long)]
    sigma_v2: Option<f64>,
    #[arg(long)]
    sigma_eps2: Option<f64>,
    #[arg(long)]
    sigma_r2: Option<f64>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    /// Passes of the sweep/user/item cycle per event.
    #[arg(long)]
    inner_iters: Option<usize>,
    /// Update factors without the tether when an item has no text instead of
    /// rejecting the event.
    #[arg(long)]
    pmf_only_fallback: bool,
    /// Passive-aggressive cap.
    #[arg(long)]
    c: Option<f64>,
    /// Passive-aggressive insensitivity margin.
    #[arg(long)]
    eps: Option<f64>,
    /// SGD learning rate.
    #[arg(long)]
    eta: Option<f64>,
    /// SGD regularization.
    #[arg(long)]
    lam: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    kappa: Option<f64>,
    #[arg(long)]
    init_scale_user: Option<f64>,
    #[arg(long)]
    init_scale_item: Option<f64>,
    /// Test-set evaluation cadence in events (0 = final only).
    #[arg(long)]
    eval_every: Option<u64>,
    /// Progress line to stderr every N events (0 = silent).
    #[arg(long)]
    progress_every: Option<u64>,
    /// Fail on the first malformed rating line instead of skipping.
    #[arg(long)]
    strict_ratings: bool,
    #[arg(long)]
    min_df: Option<usize>,
    #[arg(long)]
    max_vocab: Option<usize>,
    #[arg(long)]
    min_token_len: Option<usize>,
    /// Keep stopwords during corpus construction.
    #[arg(long)]
    keep_stopwords: bool,
    /// TSV of held-out documents scored for predictive likelihood at every
    /// evaluation point.
    #[arg(long)]
    heldout_docs: Option<String>,
    #[arg(long)]
    pred_ll_seed: Option<u64>,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test rating file.
    #[arg(long)]
    ratings: String,
    #[arg(long)]
    strict_ratings: bool,
    /// Optional held-out document TSV for predictive likelihood.
    #[arg(long)]
    heldout_docs: Option<String>,
    #[arg(long)]
    pred_ll_seed: Option<u64>,
    /// Also write the metrics as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Use the published search ranges for the chosen algorithm.
    #[arg(long)]
    paper_ranges: bool,
    /// Comma-separated tether standard deviations (squared into the engine).
    #[arg(long)]
    sigma_eps_list: Option<String>,
    /// Comma-separated rating-noise standard deviations.
    #[arg(long)]
    sigma_r_list: Option<String>,
    /// Comma-separated passive-aggressive caps.
    #[arg(long)]
    c_list: Option<String>,
    /// Comma-separated SGD learning rates.
    #[arg(long)]
    rho_list: Option<String>,
    /// Comma-separated model sizes.
    #[arg(long)]
    k_list: Option<String>,
    /// Parallel grid workers (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    users: usize,
    #[arg(long, default_value_t = 100)]
    items: usize,
    #[arg(long, default_value_t = 5)]
    k: usize,
    #[arg(long, default_value_t = 60)]
    docs_len: usize,
    #[arg(long, default_value_t = 120)]
    vocab_size: usize,
    #[arg(long, default_value_t = 20_000)]
    ratings_count: usize,
    #[arg(long, default_value_t = 30)]
    heldout_docs_count: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Rating noise standard deviation.
    #[arg(long, default_value_t = 0.3)]
    noise_std: f64,
    /// Item offset standard deviation around the topic proportions.
    #[arg(long, default_value_t = 0.2)]
    offset_std: f64,
    /// User factor standard deviation.
    #[arg(long, default_value_t = 1.0)]
    user_std: f64,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long, default_value = "out")]
    out_dir: PathBuf,
}

enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(err: anyhow::Error) -> Self {
        CliError::Runtime(err)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(args) => cmd_train(*args).map(|_| ()),
        Command::Eval(args) => cmd_eval(args),
        Command::Grid(args) => cmd_grid(*args),
        Command::Synth(args) => cmd_synth(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(err)) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

/// Resolve a data path against OBCTR_DATA_DIR when it is relative.
fn data_path(raw: &str) -> PathBuf {
    let path = PathBuf::from(raw);
    if path.is_relative() {
        if let Ok(base) = std::env::var(DATA_DIR_ENV) {
            if !base.is_empty() {
                return PathBuf::from(base).join(path);
            }
        }
    }
    path
}

struct TrainPlan {
    algo: AlgorithmKind,
    config: AlgoConfig,
    ratings: PathBuf,
    docs: Option<PathBuf>,
    out_dir: PathBuf,
    seed: u64,
    corpus_options: CorpusOptions,
    eval_every: u64,
    progress_every: u64,
    strict: bool,
    heldout_docs: Option<PathBuf>,
    pred_ll_seed: u64,
}

/// Everything that defines a run, echoed verbatim into each output artifact.
#[derive(Serialize)]
struct RunEcho {
    summary_format_version: u32,
    command: String,
    algorithm: String,
    seed: u64,
    config: AlgoConfig,
    ratings: String,
    docs: Option<String>,
    corpus_options: Option<CorpusOptions>,
    eval_every: u64,
}

fn resolve_plan(args: &TrainArgs) -> Result<TrainPlan, CliError> {
    let file = match &args.config {
        Some(path) => ConfigFile::load(path).map_err(usage)?,
        None => ConfigFile::default(),
    };
    let merge = |err: String| usage(err);

    let algo_raw =
        resolve_opt(&args.algo, &file, "algo").map_err(merge)?.ok_or_else(|| {
            usage("--algo is required (obctr, octr, pa-i, sgd-pmf, online-lda)")
        })?;
    let algo = AlgorithmKind::from_str(&algo_raw).map_err(usage)?;

    let ratings = resolve_opt(&args.ratings, &file, "ratings")
        .map_err(merge)?
        .ok_or_else(|| usage("--ratings is required"))?;
    let docs = resolve_opt(&args.docs, &file, "docs").map_err(merge)?;
    let out_dir = resolve(&args.out_dir, &file, "out_dir", "out".to_owned()).map_err(merge)?;
    let seed = resolve(&args.seed, &file, "seed", 0).map_err(merge)?;
    let k = resolve(&args.k, &file, "k", 10).map_err(merge)?;

    let needs_docs = matches!(
        algo,
        AlgorithmKind::Obctr | AlgorithmKind::Octr | AlgorithmKind::OnlineLda
    );
    if needs_docs && docs.is_none() {
        return Err(usage(format!("--docs is required for algorithm {algo}")));
    }

    let mut hp = HyperParams::new(k);
    hp.alpha = resolve(&args.alpha, &file, "alpha", hp.alpha).map_err(merge)?;
    hp.beta = resolve(&args.beta, &file, "beta", hp.beta).map_err(merge)?;
    hp.sigma_u2 = resolve(&args.sigma_u2, &file, "sigma_u2", hp.sigma_u2).map_err(merge)?;
    hp.sigma_v2 = resolve(&args.sigma_v2, &file, "sigma_v2", hp.sigma_v2).map_err(merge)?;
    hp.sigma_eps2 = resolve(&args.sigma_eps2, &file, "sigma_eps2", hp.sigma_eps2).map_err(merge)?;
    hp.sigma_r2 = resolve(&args.sigma_r2, &file, "sigma_r2", hp.sigma_r2).map_err(merge)?;
    hp.sweeps = resolve(&args.sweeps, &file, "sweeps", hp.sweeps).map_err(merge)?;
    hp.burn_in = resolve(&args.burn_in, &file, "burn_in", hp.burn_in).map_err(merge)?;
    hp.validate()
        .map_err(|e| usage(format!("invalid hyperparameters: {e}")))?;

    let eta = resolve(&args.eta, &file, "eta", 0.1).map_err(merge)?;
    let lam = resolve(&args.lam, &file, "lam", 0.01).map_err(merge)?;
    let c = resolve(&args.c, &file, "c", 0.1).map_err(merge)?;
    let eps = resolve(&args.eps, &file, "eps", 0.0).map_err(merge)?;
    let tau0 = resolve(&args.tau0, &file, "tau0", 1.0).map_err(merge)?;
    let kappa = resolve(&args.kappa, &file, "kappa", 0.7).map_err(merge)?;
    let init_scale_user =
        resolve(&args.init_scale_user, &file, "init_scale_user", 0.1).map_err(merge)?;
    let init_scale_item =
        resolve(&args.init_scale_item, &file, "init_scale_item", 0.1).map_err(merge)?;
    let inner_iters = resolve(&args.inner_iters, &file, "inner_iters", 1).map_err(merge)?;
    let pmf_only_fallback = args.pmf_only_fallback
        || file
            .get::<bool>("pmf_only_fallback")
            .map_err(merge)?
            .unwrap_or(false);

    // Vocabulary-sized fields are aligned to the corpus when the model is
    // built; placeholders here.
    let lda_config = |k: usize| -> OnlineLdaConfig {
        let mut cfg = OnlineLdaConfig::new(k, 1, 1);
        cfg.alpha = hp.alpha;
        cfg.eta = hp.beta;
        cfg.tau0 = tau0;
        cfg.kappa = kappa;
        cfg
    };
    let config = match algo {
        AlgorithmKind::Obctr => AlgoConfig::Obctr {
            hp: hp.clone(),
            pmf_only_fallback,
            inner_iters,
        },
        AlgorithmKind::Octr => {
            let mut cfg = OctrConfig::new(lda_config(k), eta);
            cfg.lam = lam;
            cfg.init_scale_user = init_scale_user;
            cfg.init_scale_offset = init_scale_item;
            AlgoConfig::Octr { cfg }
        }
        AlgorithmKind::PaI => {
            let mut cfg = PaIConfig::new(k, c);
            cfg.eps = eps;
            cfg.init_scale_user = init_scale_user;
            cfg.init_scale_item = init_scale_item;
            AlgoConfig::PaI { cfg }
        }
        AlgorithmKind::SgdPmf => {
            let mut cfg = SgdPmfConfig::new(k, eta);
            cfg.lam = lam;
            cfg.init_scale_user = init_scale_user;
            cfg.init_scale_item = init_scale_item;
            AlgoConfig::SgdPmf { cfg }
        }
        AlgorithmKind::OnlineLda => AlgoConfig::OnlineLda { cfg: lda_config(k) },
    };

    let corpus_options = CorpusOptions {
        min_token_len: resolve(&args.min_token_len, &file, "min_token_len", 2).map_err(merge)?,
        remove_stopwords: !(args.keep_stopwords
            || file
                .get::<bool>("keep_stopwords")
                .map_err(merge)?
                .unwrap_or(false)),
        min_df: resolve(&args.min_df, &file, "min_df", 2).map_err(merge)?,
        max_vocab: resolve(&args.max_vocab, &file, "max_vocab", 8000).map_err(merge)?,
    };

    Ok(TrainPlan {
        algo,
        config,
        ratings: data_path(&ratings),
        docs: docs.as_deref().map(data_path),
        out_dir: PathBuf::from(out_dir),
        seed,
        corpus_options,
        eval_every: resolve(&args.eval_every, &file, "eval_every", 50_000).map_err(merge)?,
        progress_every: resolve(&args.progress_every, &file, "progress_every", 10_000)
            .map_err(merge)?,
        strict: args.strict_ratings
            || file
                .get::<bool>("strict_ratings")
                .map_err(merge)?
                .unwrap_or(false),
        heldout_docs: resolve_opt(&args.heldout_docs, &file, "heldout_docs")
            .map_err(merge)?
            .as_deref()
            .map(data_path),
        pred_ll_seed: resolve(&args.pred_ll_seed, &file, "pred_ll_seed", 0).map_err(merge)?,
    })
}

fn load_corpus(plan: &TrainPlan) -> Result<Corpus, CliError> {
    match &plan.docs {
        Some(path) => Ok(build_corpus(path, &plan.corpus_options)
            .with_context(|| format!("building corpus from {}", path.display()))?),
        None => Ok(Corpus::from_token_docs(
            Vocabulary::default(),
            Default::default(),
        )),
    }
}

fn load_split(plan: &TrainPlan) -> Result<(StreamSplit, usize), CliError> {
    let mode = if plan.strict {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let parsed = parse_ratings(&plan.ratings, mode)
        .with_context(|| format!("parsing ratings from {}", plan.ratings.display()))?;
    if parsed.skipped_lines > 0 {
        eprintln!("skipped {} malformed rating lines", parsed.skipped_lines);
    }
    let split = split_stream(&parsed.events, plan.seed).context("splitting the stream")?;
    Ok((split, parsed.skipped_lines))
}

fn read_heldout_docs(
    path: &Path,
    corpus: &Corpus,
    options: &CorpusOptions,
) -> Result<Vec<Vec<usize>>, CliError> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading held-out docs from {}", path.display()))?;
    let mut docs = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        let content = line.split_once('\t').map(|(_, t)| t).unwrap_or(line);
        let tokens = corpus.tokenize_with_vocabulary(content, options);
        if tokens.len() >= 2 {
            docs.push(tokens);
        }
    }
    Ok(docs)
}

fn write_ratings_file(path: &Path, events: &[RatingEvent]) -> Result<(), CliError> {
    let mut out = String::new();
    for ev in events {
        out.push_str(&format!(
            "{}::{}::{}::{}\n",
            ev.user_id, ev.item_id, ev.rating, ev.order_key
        ));
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn echo_for(plan: &TrainPlan, command: &str) -> RunEcho {
    RunEcho {
        summary_format_version: SUMMARY_FORMAT_VERSION,
        command: command.to_owned(),
        algorithm: plan.algo.to_string(),
        seed: plan.seed,
        config: plan.config.clone(),
        ratings: plan.ratings.display().to_string(),
        docs: plan.docs.as_ref().map(|p| p.display().to_string()),
        corpus_options: plan.docs.as_ref().map(|_| plan.corpus_options.clone()),
        eval_every: plan.eval_every,
    }
}

fn cmd_train(args: TrainArgs) -> Result<serde_json::Value, CliError> {
    let plan = resolve_plan(&args)?;
    std::fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))?;
    let corpus = load_corpus(&plan)?;
    let (split, skipped_lines) = load_split(&plan)?;

    write_ratings_file(&plan.out_dir.join("test_split.dat"), &split.test)?;
    write_ratings_file(&plan.out_dir.join("validation_split.dat"), &split.validation)?;
    if plan.docs.is_some() {
        std::fs::write(
            plan.out_dir.join("corpus_manifest.json"),
            corpus.manifest_json(&plan.corpus_options),
        )
        .context("writing corpus manifest")?;
    }

    let heldout_docs = match &plan.heldout_docs {
        Some(path) => read_heldout_docs(path, &corpus, &plan.corpus_options)?,
        None => Vec::new(),
    };
    let echo = echo_for(&plan, "train");
    let echo_json = serde_json::to_string(&echo).expect("echo serializes");

    let opts = TrainOptions {
        eval_every: plan.eval_every,
        progress_every: plan.progress_every,
        heldout_docs,
        pred_ll_seed: plan.pred_ll_seed,
        abort_on_non_finite: true,
    };
    let mut writer = TraceCsvWriter::create(
        &plan.out_dir.join("trace.csv"),
        &plan.algo.to_string(),
        &echo_json,
    )
    .context("creating trace.csv")?;
    let outcome = train_stream(
        &plan.config,
        &corpus,
        &split,
        plan.seed,
        &opts,
        Some(&mut writer),
    )
    .context("training run failed")?;

    let checkpoint = Checkpoint::new(
        plan.config.clone(),
        corpus,
        outcome.model,
        plan.seed,
    );
    checkpoint::save(&plan.out_dir.join("checkpoint.json"), &checkpoint)
        .context("writing checkpoint")?;

    let summary = serde_json::json!({
        "echo": echo,
        "events_processed": outcome.events_processed,
        "rejected_events": outcome.rejected_events,
        "skipped_rating_lines": skipped_lines,
        "train_events": split.train.len(),
        "validation_events": split.validation.len(),
        "test_events": split.test.len(),
        "final_test_rmse": outcome.final_test_rmse,
        "final_progressive_rmse": outcome.final_progressive_rmse,
        "final_pred_ll": outcome.final_pred_ll,
        "wall_time_s": outcome.wall_time_s,
        "trace": outcome.trace,
    });
    let summary_text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    std::fs::write(plan.out_dir.join("summary.json"), &summary_text)
        .context("writing summary")?;
    println!("{summary_text}");
    Ok(summary)
}

fn cmd_eval(args: EvalArgs) -> Result<(), CliError> {
    let checkpoint = checkpoint::load(&args.checkpoint)
        .with_context(|| format!("loading checkpoint {}", args.checkpoint.display()))?;
    let mode = if args.strict_ratings {
        ParseMode::Strict
    } else {
        ParseMode::Lenient
    };
    let parsed = parse_ratings(&data_path(&args.ratings), mode)
        .with_context(|| format!("parsing ratings from {}", args.ratings))?;
    if parsed.events.is_empty() {
        return Err(CliError::Runtime(anyhow!("empty test set")));
    }

    let mut model = checkpoint.model;
    let rmse = test_rmse(&model, &parsed.events, &checkpoint.corpus);
    let pred_ll = match &args.heldout_docs {
        Some(path) => {
            let docs = read_heldout_docs(
                Path::new(&data_path(path)),
                &checkpoint.corpus,
                &CorpusOptions::default(),
            )?;
            model.topic_snapshot().and_then(|snapshot| {
                predictive_log_likelihood(&snapshot, &docs, args.pred_ll_seed.unwrap_or(0)).ok()
            })
        }
        None => None,
    };

    let report = serde_json::json!({
        "algorithm": checkpoint.algorithm,
        "checkpoint_seed": checkpoint.seed,
        "config": checkpoint.config,
        "events": parsed.events.len(),
        "skipped_rating_lines": parsed.skipped_lines,
        "rmse": rmse,
        "pred_ll": pred_ll,
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&report).expect("report serializes")
    );
    if let Some(out) = &args.out {
        let mut csv = String::from("metric,value\n");
        if let Some(r) = rmse {
            csv.push_str(&format!("rmse,{r}\n"));
        }
        if let Some(ll) = pred_ll {
            csv.push_str(&format!("pred_ll,{ll}\n"));
        }
        std::fs::write(out, csv).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn parse_list<T: FromStr>(raw: &Option<String>, flag: &str) -> Result<Option<Vec<T>>, CliError>
where
    T::Err: std::fmt::Display,
{
    match raw {
        None => Ok(None),
        Some(text) => text
            .split(',')
            .map(|part| {
                part.trim()
                    .parse::<T>()
                    .map_err(|e| usage(format!("{flag}: bad entry {part:?}: {e}")))
            })
            .collect::<Result<Vec<T>, CliError>>()
            .map(Some),
    }
}

fn custom_grid(args: &GridArgs, base: &AlgoConfig) -> Result<Vec<AlgoConfig>, CliError> {
    let k_values: Vec<usize> =
        parse_list(&args.k_list, "--k-list")?.unwrap_or_else(|| vec![base.k()]);
    let mut cells = Vec::new();
    match base {
        AlgoConfig::Obctr {
            hp,
            pmf_only_fallback,
            inner_iters,
        } => {
            let eps_values: Vec<f64> = parse_list(&args.sigma_eps_list, "--sigma-eps-list")?
                .unwrap_or_else(|| vec![hp.sigma_eps2.sqrt()]);
            let r_values: Vec<f64> = parse_list(&args.sigma_r_list, "--sigma-r-list")?
                .unwrap_or_else(|| vec![hp.sigma_r2.sqrt()]);
            for &sigma_eps in &eps_values {
                for &sigma_r in &r_values {
                    for &k in &k_values {
                        let mut hp = hp.clone();
                        let rescale = hp.alpha == 1.0 / hp.k as f64;
                        hp.k = k;
                        if rescale {
                            hp.alpha = 1.0 / k as f64;
                            hp.beta = 1.0 / k as f64;
                        }
                        hp.sigma_eps2 = sigma_eps * sigma_eps;
                        hp.sigma_r2 = sigma_r * sigma_r;
                        cells.push(AlgoConfig::Obctr {
                            hp,
                            pmf_only_fallback: *pmf_only_fallback,
                            inner_iters: *inner_iters,
                        });
                    }
                }
            }
        }
        AlgoConfig::PaI { cfg } => {
            let c_values: Vec<f64> =
                parse_list(&args.c_list, "--c-list")?.unwrap_or_else(|| vec![cfg.c]);
            for &c in &c_values {
                for &k in &k_values {
                    let mut cfg = cfg.clone();
                    cfg.k = k;
                    cfg.c = c;
                    cells.push(AlgoConfig::PaI { cfg });
                }
            }
        }
        AlgoConfig::SgdPmf { cfg } => {
            let rho_values: Vec<f64> =
                parse_list(&args.rho_list, "--rho-list")?.unwrap_or_else(|| vec![cfg.eta]);
            for &rho in &rho_values {
                for &k in &k_values {
                    let mut cfg = cfg.clone();
                    cfg.k = k;
                    cfg.eta = rho;
                    cells.push(AlgoConfig::SgdPmf { cfg });
                }
            }
        }
        AlgoConfig::Octr { cfg } => {
            let rho_values: Vec<f64> =
                parse_list(&args.rho_list, "--rho-list")?.unwrap_or_else(|| vec![cfg.eta]);
            for &rho in &rho_values {
                for &k in &k_values {
                    let mut config = AlgoConfig::Octr { cfg: cfg.clone() }.with_k(k);
                    if let AlgoConfig::Octr { cfg } = &mut config {
                        cfg.eta = rho;
                    }
                    cells.push(config);
                }
            }
        }
        AlgoConfig::OnlineLda { .. } => {
            return Err(usage(
                "grid search minimizes rating RMSE; online-lda has no rating predictions",
            ));
        }
    }
    Ok(cells)
}

fn cmd_grid(args: GridArgs) -> Result<(), CliError> {
    let plan = resolve_plan(&args.train)?;
    std::fs::create_dir_all(&plan.out_dir)
        .with_context(|| format!("creating {}", plan.out_dir.display()))?;
    let corpus = load_corpus(&plan)?;
    let (split, _) = load_split(&plan)?;

    let cells = if args.paper_ranges {
        paper_grid(plan.algo, corpus.vocabulary.len(), corpus.docs.len().max(1))
            .map_err(|e| usage(e.to_string()))?
    } else {
        custom_grid(&args, &plan.config)?
    };
    eprintln!("grid: {} cells, {} jobs", cells.len(), args.jobs);

    let outcome = grid_search(&cells, &corpus, &split, plan.seed, args.jobs)
        .context("grid search failed")?;
    if outcome.cells.iter().all(|c| c.error.is_some()) {
        return Err(CliError::Runtime(anyhow!("every grid cell failed")));
    }

    std::fs::write(plan.out_dir.join("grid.csv"), outcome.to_csv())
        .context("writing grid.csv")?;
    let best = outcome.best();
    let report = serde_json::json!({
        "echo": echo_for(&plan, "grid"),
        "cells": outcome.cells.len(),
        "failed_cells": outcome.cells.iter().filter(|c| c.error.is_some()).count(),
        "best": best,
    });
    let text = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(plan.out_dir.join("grid_best.json"), &text).context("writing grid_best")?;
    println!("{text}");
    Ok(())
}

fn cmd_synth(args: SynthArgs) -> Result<(), CliError> {
    let mut hp = HyperParams::new(args.k);
    if let Some(alpha) = args.alpha {
        hp.alpha = alpha;
    }
    if let Some(beta) = args.beta {
        hp.beta = beta;
    }
    hp.sigma_u2 = args.user_std * args.user_std;
    hp.sigma_eps2 = args.offset_std * args.offset_std;
    hp.sigma_r2 = args.noise_std * args.noise_std;
    let config = SynthConfig {
        users: args.users,
        items: args.items,
        docs_len: args.docs_len,
        vocab_size: args.vocab_size,
        ratings_count: args.ratings_count,
        heldout_docs: args.heldout_docs_count,
        seed: args.seed,
    };
    let data = generate_synthetic(&hp, &config)
        .map_err(|e| usage(format!("invalid synthetic configuration: {e}")))?;

    std::fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_ratings_file(&args.out_dir.join("ratings.dat"), &data.events)?;

    let mut docs_tsv = String::new();
    for (item_id, tokens) in &data.corpus.docs {
        let words: Vec<&str> = tokens
            .iter()
            .map(|&w| data.corpus.vocabulary.word(w))
            .collect();
        docs_tsv.push_str(&format!("{item_id}\t{}\n", words.join(" ")));
    }
    std::fs::write(args.out_dir.join("docs.tsv"), docs_tsv).context("writing docs.tsv")?;

    let mut heldout_tsv = String::new();
    for (i, tokens) in data.heldout_tokens.iter().enumerate() {
        let words: Vec<&str> = tokens
            .iter()
            .map(|&w| data.corpus.vocabulary.word(w))
            .collect();
        heldout_tsv.push_str(&format!(
            "{}\t{}\n",
            args.items as u64 + i as u64,
            words.join(" ")
        ));
    }
    std::fs::write(args.out_dir.join("heldout.tsv"), heldout_tsv)
        .context("writing heldout.tsv")?;

    let truth = serde_json::json!({
        "format_version": SUMMARY_FORMAT_VERSION,
        "config": data.config,
        "hp": data.hp,
        "truth": data.truth,
    });
    std::fs::write(
        args.out_dir.join("ground_truth.json"),
        serde_json::to_string(&truth).expect("truth serializes"),
    )
    .context("writing ground_truth.json")?;

    let summary = serde_json::json!({
        "users": config.users,
        "items": config.items,
        "ratings": data.events.len(),
        "vocab_size": data.corpus.vocabulary.len(),
        "heldout_docs": data.heldout_tokens.len(),
        "out_dir": args.out_dir.display().to_string(),
    });
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("summary serializes")
    );
    Ok(())
}
