//! Metrics and experiment protocol: streaming RMSE, per-word predictive
//! log-likelihood, grid search over hyperparameter ranges, and runtime
//! profiling across model sizes.
//!
//! Evaluation never mutates model state; grid cells own their model
//! instances and may run in parallel.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, StreamSplit};
use crate::run::{test_rmse, train_stream, AlgoConfig, TrainOptions};
use crate::seeding::{derive_seed, tag};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("empty input")]
    EmptyInput,
    #[error("every held-out document needs at least 2 tokens")]
    HeldOutTooShort,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Read-only topic-model view used by evaluation: smoothed topic-word point
/// estimates plus the proportion prior.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicSnapshot {
    pub k: usize,
    pub vocab_size: usize,
    /// Flattened `K x D` matrix, row-major.
    pub phi: Vec<f64>,
    pub alpha: f64,
}

impl TopicSnapshot {
    pub fn phi(&self, topic: usize, word: usize) -> f64 {
        self.phi[topic * self.vocab_size + word]
    }
}

/// Root mean square error over (prediction, rating) pairs.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let sum_sq: f64 = pairs.iter().map(|(p, r)| (p - r) * (p - r)).sum();
    Ok((sum_sq / pairs.len() as f64).sqrt())
}

/// Per-word predictive log-likelihood of held-out documents.
///
/// The first half of each document is observed to estimate its topic
/// proportions (20 sweeps of the plain collapsed conditional against the
/// snapshot's word distributions), and the second half is scored as
/// `log sum_k theta_k phi_kw`, averaged over all held-out tokens. The result
/// is never positive.
pub fn predictive_log_likelihood(
    snapshot: &TopicSnapshot,
    heldout_docs: &[Vec<usize>],
    seed: u64,
) -> Result<f64, EvalError> {
    const THETA_SWEEPS: usize = 20;
    if heldout_docs.is_empty() || heldout_docs.iter().all(|d| d.len() < 2) {
        return Err(EvalError::EmptyInput);
    }
    if heldout_docs.iter().any(|d| d.len() < 2) {
        return Err(EvalError::HeldOutTooShort);
    }
    let k = snapshot.k;
    let mut total_ll = 0.0;
    let mut total_words = 0usize;
    for (doc_idx, tokens) in heldout_docs.iter().enumerate() {
        let split = tokens.len().div_ceil(2);
        let (observed, held) = tokens.split_at(split);

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
            seed,
            tag::HOLDOUT_GIBBS,
            doc_idx as u64,
        ));
        let mut z: Vec<usize> = observed.iter().map(|_| rng.random_range(0..k)).collect();
        let mut counts = vec![0u32; k];
        for &zi in &z {
            counts[zi] += 1;
        }
        let mut weights = vec![0.0; k];
        for _ in 0..THETA_SWEEPS {
            for (pos, &w) in observed.iter().enumerate() {
                counts[z[pos]] -= 1;
                let mut total = 0.0;
                for (topic, weight) in weights.iter_mut().enumerate() {
                    *weight = (snapshot.alpha + counts[topic] as f64) * snapshot.phi(topic, w);
                    total += *weight;
                }
                let draw: f64 = rng.random::<f64>() * total;
                let mut cum = 0.0;
                let mut picked = k - 1;
                for (topic, &weight) in weights.iter().enumerate() {
                    cum += weight;
                    if draw < cum {
                        picked = topic;
                        break;
                    }
                }
                z[pos] = picked;
                counts[picked] += 1;
            }
        }
        let denom = observed.len() as f64 + k as f64 * snapshot.alpha;
        let theta: Vec<f64> = counts
            .iter()
            .map(|&c| (c as f64 + snapshot.alpha) / denom)
            .collect();

        for &w in held {
            let p: f64 = (0..k).map(|topic| theta[topic] * snapshot.phi(topic, w)).sum();
            total_ll += p.max(1e-300).ln();
            total_words += 1;
        }
    }
    Ok((total_ll / total_words as f64).min(0.0))
}

// ---------------------------------------------------------------------------
// Metric traces
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub events_seen: u64,
    pub rmse_test: Option<f64>,
    pub rmse_progressive: Option<f64>,
    pub pred_ll: Option<f64>,
    /// Seconds since the run started. Kept out of the CSV so traces from
    /// identical runs stay byte-identical.
    pub wall_time_s: f64,
}

/// Append-only metric trace of one run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricTrace {
    pub algorithm: String,
    pub points: Vec<TracePoint>,
}

impl MetricTrace {
    pub fn new(algorithm: impl Into<String>) -> Self {
        MetricTrace {
            algorithm: algorithm.into(),
            points: Vec::new(),
        }
    }

    /// Push a point; `events_seen` must be strictly increasing and RMSE
    /// values non-negative.
    pub fn push(&mut self, point: TracePoint) {
        if let Some(last) = self.points.last() {
            assert!(
                point.events_seen > last.events_seen,
                "events_seen must be strictly increasing"
            );
        }
        for value in [point.rmse_test, point.rmse_progressive] {
            if let Some(v) = value {
                assert!(v >= 0.0, "rmse must be non-negative");
            }
        }
        self.points.push(point);
    }

    /// Plot-ready CSV with the run configuration echoed in comment lines.
    /// Wall time is excluded; identical runs render identical bytes.
    pub fn to_csv(&self, config_echo_json: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# algorithm: {}\n", self.algorithm));
        out.push_str(&format!("# config: {config_echo_json}\n"));
        out.push_str(TRACE_CSV_HEADER);
        for point in &self.points {
            out.push_str(&trace_csv_row(point));
        }
        out
    }
}

const TRACE_CSV_HEADER: &str = "events_seen,rmse_test,rmse_progressive,pred_ll\n";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn trace_csv_row(point: &TracePoint) -> String {
    format!(
        "{},{},{},{}\n",
        point.events_seen,
        fmt_opt(point.rmse_test),
        fmt_opt(point.rmse_progressive),
        fmt_opt(point.pred_ll),
    )
}

/// Incremental CSV writer: header and config echo up front, one flushed row
/// per evaluation point, so a crash leaves usable partial results.
pub struct TraceCsvWriter {
    file: std::io::BufWriter<std::fs::File>,
}

impl TraceCsvWriter {
    pub fn create(path: &Path, algorithm: &str, config_echo_json: &str) -> std::io::Result<Self> {
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(
            file,
            "# algorithm: {algorithm}\n# config: {config_echo_json}\n{TRACE_CSV_HEADER}"
        )?;
        file.flush()?;
        Ok(TraceCsvWriter { file })
    }

    pub fn append(&mut self, point: &TracePoint) -> std::io::Result<()> {
        self.file.write_all(trace_csv_row(point).as_bytes())?;
        self.file.flush()
    }
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridCellResult {
    pub index: usize,
    pub config: AlgoConfig,
    pub validation_rmse: Option<f64>,
    pub test_rmse: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridOutcome {
    pub cells: Vec<GridCellResult>,
    /// Index of the cell with the lowest finite validation RMSE; ties go to
    /// the earlier cell in grid order.
    pub best_index: Option<usize>,
}

impl GridOutcome {
    pub fn best(&self) -> Option<&GridCellResult> {
        self.best_index.map(|i| &self.cells[i])
    }

    /// Full grid table as CSV: config columns plus validation and test RMSE.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str("index,algorithm,k,params,validation_rmse,test_rmse,error\n");
        for cell in &self.cells {
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                cell.index,
                cell.config.kind(),
                cell.config.k(),
                cell.config.param_summary(),
                fmt_opt(cell.validation_rmse),
                fmt_opt(cell.test_rmse),
                cell.error.clone().unwrap_or_default(),
            ));
        }
        out
    }
}

/// The published hyperparameter search ranges per algorithm. Values named
/// `sigma_*` enumerate standard deviations and are squared into the model's
/// variance parameters; `rho` values are SGD learning rates; `c` values are
/// passive-aggressive caps.
pub fn paper_grid(
    kind: crate::run::AlgorithmKind,
    vocab_size: usize,
    corpus_size: usize,
) -> Result<Vec<AlgoConfig>, EvalError> {
    use crate::baselines::{OctrConfig, OnlineLdaConfig, PaIConfig, SgdPmfConfig};
    use crate::model::HyperParams;
    use crate::run::AlgorithmKind::*;

    const SIGMA: [f64; 7] = [0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0];
    const C: [f64; 5] = [0.01, 0.1, 0.2, 0.5, 1.0];
    const RHO: [f64; 5] = [0.01, 0.05, 0.1, 0.2, 0.5];
    const K: [usize; 3] = [5, 10, 20];

    let cells = match kind {
        Obctr => {
            let mut cells = Vec::new();
            for &sigma_eps in &SIGMA {
                for &sigma_r in &SIGMA {
                    for &k in &K {
                        let mut hp = HyperParams::new(k);
                        hp.sigma_eps2 = sigma_eps * sigma_eps;
                        hp.sigma_r2 = sigma_r * sigma_r;
                        cells.push(AlgoConfig::Obctr {
                            hp,
                            pmf_only_fallback: false,
                            inner_iters: 1,
                        });
                    }
                }
            }
            cells
        }
        PaI => {
            let mut cells = Vec::new();
            for &c in &C {
                for &k in &K {
                    cells.push(AlgoConfig::PaI {
                        cfg: PaIConfig::new(k, c),
                    });
                }
            }
            cells
        }
        SgdPmf => {
            let mut cells = Vec::new();
            for &rho in &RHO {
                for &k in &K {
                    cells.push(AlgoConfig::SgdPmf {
                        cfg: SgdPmfConfig::new(k, rho),
                    });
                }
            }
            cells
        }
        Octr => {
            let mut cells = Vec::new();
            for &rho in &RHO {
                for &k in &K {
                    let lda = OnlineLdaConfig::new(k, vocab_size, corpus_size);
                    cells.push(AlgoConfig::Octr {
                        cfg: OctrConfig::new(lda, rho),
                    });
                }
            }
            cells
        }
        OnlineLda => {
            return Err(EvalError::InvalidGrid(
                "grid search minimizes rating RMSE; the topic-only model has no rating predictions"
                    .into(),
            ));
        }
    };
    Ok(cells)
}

/// Train each configuration on the training split and rank by validation
/// RMSE. Failed cells are recorded and skipped. `jobs = 0` uses all cores.
pub fn grid_search(
    cells: &[AlgoConfig],
    corpus: &Corpus,
    split: &StreamSplit,
    seed: u64,
    jobs: usize,
) -> Result<GridOutcome, EvalError> {
    if cells.is_empty() {
        return Err(EvalError::InvalidGrid("no grid cells".into()));
    }
    if split.validation.is_empty() {
        return Err(EvalError::InvalidGrid("validation split is empty".into()));
    }
    let run_cell = |(index, config): (usize, &AlgoConfig)| -> GridCellResult {
        let opts = TrainOptions {
            eval_every: 0,
            progress_every: 0,
            ..TrainOptions::default()
        };
        match train_stream(config, corpus, split, seed, &opts, None) {
            Ok(outcome) => {
                let validation_rmse = test_rmse(&outcome.model, &split.validation, corpus);
                let test = test_rmse(&outcome.model, &split.test, corpus);
                GridCellResult {
                    index,
                    config: config.clone(),
                    validation_rmse,
                    test_rmse: test,
                    error: None,
                }
            }
            Err(err) => GridCellResult {
                index,
                config: config.clone(),
                validation_rmse: None,
                test_rmse: None,
                error: Some(err.to_string()),
            },
        }
    };

    let mut results: Vec<GridCellResult> = if jobs == 1 {
        cells.iter().enumerate().map(run_cell).collect()
    } else {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| EvalError::InvalidGrid(format!("thread pool: {e}")))?;
        pool.install(|| cells.par_iter().enumerate().map(run_cell).collect())
    };
    results.sort_by_key(|cell| cell.index);

    let mut best_index = None;
    let mut best_rmse = f64::INFINITY;
    for cell in &results {
        if let Some(v) = cell.validation_rmse {
            if v.is_finite() && v < best_rmse {
                best_rmse = v;
                best_index = Some(cell.index);
            }
        }
    }
    Ok(GridOutcome {
        cells: results,
        best_index,
    })
}

// ---------------------------------------------------------------------------
// Runtime profiling
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProfilePoint {
    pub k: usize,
    pub seconds: f64,
    /// Wall time divided by the smallest-K wall time.
    pub ratio: f64,
}

/// Train the same stream once per model size and report wall-time ratios
/// against the smallest size.
pub fn runtime_profile(
    base: &AlgoConfig,
    k_values: &[usize],
    corpus: &Corpus,
    split: &StreamSplit,
    seed: u64,
) -> Result<Vec<ProfilePoint>, EvalError> {
    if k_values.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let mut ks = k_values.to_vec();
    ks.sort_unstable();
    ks.dedup();
    let opts = TrainOptions {
        eval_every: 0,
        progress_every: 0,
        ..TrainOptions::default()
    };
    let mut timed = Vec::with_capacity(ks.len());
    for &k in &ks {
        let config = base.with_k(k);
        let start = Instant::now();
        train_stream(&config, corpus, split, seed, &opts, None)
            .map_err(|e| EvalError::InvalidGrid(format!("profile run failed: {e}")))?;
        timed.push((k, start.elapsed().as_secs_f64()));
    }
    let base_time = timed[0].1.max(1e-12);
    Ok(timed
        .into_iter()
        .map(|(k, seconds)| ProfilePoint {
            k,
            seconds,
            ratio: seconds / base_time,
        })
        .collect())
}
