//! Single-pass training harness: builds a model from a configuration, feeds
//! it the training stream in order, and produces a metric trace with
//! progressive and test-set RMSE plus optional held-out likelihood.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::{
    BaselineError, OctrConfig, OctrModel, OnlineLda, OnlineLdaConfig, PaIConfig, PaIModel,
    SgdPmfConfig, SgdPmfModel,
};
use crate::engine::{EngineError, ObctrEngine};
use crate::eval::{
    predictive_log_likelihood, rmse, MetricTrace, TopicSnapshot, TraceCsvWriter, TracePoint,
};
use crate::ingest::{Corpus, StreamSplit};
use crate::model::{HyperParams, RatingEvent};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error("non-finite prediction after {events_seen} events; aborting")]
    NonFinite { events_seen: u64 },
    #[error("trace io error: {0}")]
    TraceIo(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlgorithmKind {
    Obctr,
    Octr,
    PaI,
    SgdPmf,
    OnlineLda,
}

impl fmt::Display for AlgorithmKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlgorithmKind::Obctr => "obctr",
            AlgorithmKind::Octr => "octr",
            AlgorithmKind::PaI => "pa-i",
            AlgorithmKind::SgdPmf => "sgd-pmf",
            AlgorithmKind::OnlineLda => "online-lda",
        })
    }
}

impl FromStr for AlgorithmKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "obctr" => Ok(AlgorithmKind::Obctr),
            "octr" => Ok(AlgorithmKind::Octr),
            "pa-i" => Ok(AlgorithmKind::PaI),
            "sgd-pmf" => Ok(AlgorithmKind::SgdPmf),
            "online-lda" => Ok(AlgorithmKind::OnlineLda),
            other => Err(format!(
                "unknown algorithm {other:?} (expected obctr, octr, pa-i, sgd-pmf, online-lda)"
            )),
        }
    }
}

/// Full configuration of one training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "kebab-case")]
pub enum AlgoConfig {
    Obctr {
        hp: HyperParams,
        pmf_only_fallback: bool,
        inner_iters: usize,
    },
    Octr {
        cfg: OctrConfig,
    },
    PaI {
        cfg: PaIConfig,
    },
    SgdPmf {
        cfg: SgdPmfConfig,
    },
    OnlineLda {
        cfg: OnlineLdaConfig,
    },
}

impl AlgoConfig {
    pub fn kind(&self) -> AlgorithmKind {
        match self {
            AlgoConfig::Obctr { .. } => AlgorithmKind::Obctr,
            AlgoConfig::Octr { .. } => AlgorithmKind::Octr,
            AlgoConfig::PaI { .. } => AlgorithmKind::PaI,
            AlgoConfig::SgdPmf { .. } => AlgorithmKind::SgdPmf,
            AlgoConfig::OnlineLda { .. } => AlgorithmKind::OnlineLda,
        }
    }

    pub fn k(&self) -> usize {
        match self {
            AlgoConfig::Obctr { hp, .. } => hp.k,
            AlgoConfig::Octr { cfg } => cfg.lda.k,
            AlgoConfig::PaI { cfg } => cfg.k,
            AlgoConfig::SgdPmf { cfg } => cfg.k,
            AlgoConfig::OnlineLda { cfg } => cfg.k,
        }
    }

    /// Same configuration at a different model size. Priors that default to
    /// `1/K` are rescaled.
    pub fn with_k(&self, k: usize) -> AlgoConfig {
        let mut out = self.clone();
        match &mut out {
            AlgoConfig::Obctr { hp, .. } => {
                let rescale = hp.alpha == 1.0 / hp.k as f64;
                hp.k = k;
                if rescale {
                    hp.alpha = 1.0 / k as f64;
                    hp.beta = 1.0 / k as f64;
                }
            }
            AlgoConfig::Octr { cfg } => {
                cfg.lda.k = k;
                cfg.lda.alpha = 1.0 / k as f64;
                cfg.lda.eta = 1.0 / k as f64;
            }
            AlgoConfig::PaI { cfg } => cfg.k = k,
            AlgoConfig::SgdPmf { cfg } => cfg.k = k,
            AlgoConfig::OnlineLda { cfg } => {
                cfg.k = k;
                cfg.alpha = 1.0 / k as f64;
                cfg.eta = 1.0 / k as f64;
            }
        }
        out
    }

    /// Deterministic `key=value` summary of the non-structural parameters,
    /// used in grid tables.
    pub fn param_summary(&self) -> String {
        match self {
            AlgoConfig::Obctr { hp, .. } => format!(
                "sigma_eps2={};sigma_r2={};sigma_u2={};sigma_v2={};alpha={};beta={};sweeps={};burn_in={}",
                hp.sigma_eps2, hp.sigma_r2, hp.sigma_u2, hp.sigma_v2, hp.alpha, hp.beta,
                hp.sweeps, hp.burn_in
            ),
            AlgoConfig::Octr { cfg } => format!(
                "eta={};lam={};tau0={};kappa={}",
                cfg.eta, cfg.lam, cfg.lda.tau0, cfg.lda.kappa
            ),
            AlgoConfig::PaI { cfg } => format!("c={};eps={}", cfg.c, cfg.eps),
            AlgoConfig::SgdPmf { cfg } => format!("eta={};lam={}", cfg.eta, cfg.lam),
            AlgoConfig::OnlineLda { cfg } => format!(
                "alpha={};eta={};tau0={};kappa={}",
                cfg.alpha, cfg.eta, cfg.tau0, cfg.kappa
            ),
        }
    }
}

/// A built model of any algorithm, unified for the training loop and the
/// checkpoint format. Externally tagged so integer-keyed maps inside the
/// states survive JSON round trips.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Model {
    Obctr(ObctrEngine),
    Octr(OctrModel),
    PaI(PaIModel),
    SgdPmf(SgdPmfModel),
    OnlineLda(OnlineLda),
}

/// Result of feeding one event to a model.
#[derive(Debug, Clone, Copy)]
pub struct StepOutcome {
    /// Pre-update prediction; absent for the topic-only model.
    pub prediction: Option<f64>,
    /// Event diverted to the rejected-events diagnostic stream (an item
    /// without registered text on a text-requiring algorithm).
    pub rejected: bool,
}

impl Model {
    /// Build a model against a corpus. Vocabulary-sized configurations are
    /// aligned to the corpus dimensions; the engine registers every corpus
    /// document up front.
    pub fn build(config: &AlgoConfig, corpus: &Corpus, seed: u64) -> Result<Model, RunError> {
        match config {
            AlgoConfig::Obctr {
                hp,
                pmf_only_fallback,
                inner_iters,
            } => {
                let mut engine = ObctrEngine::new(hp.clone(), corpus.vocabulary.len(), seed)?;
                engine.pmf_only_fallback = *pmf_only_fallback;
                engine.inner_iters = (*inner_iters).max(1);
                for (&item_id, tokens) in &corpus.docs {
                    engine.register_document(item_id, tokens.clone())?;
                }
                Ok(Model::Obctr(engine))
            }
            AlgoConfig::Octr { cfg } => {
                let mut cfg = cfg.clone();
                cfg.lda.vocab_size = corpus.vocabulary.len();
                cfg.lda.corpus_size = corpus.docs.len().max(1);
                Ok(Model::Octr(OctrModel::new(cfg, seed)?))
            }
            AlgoConfig::PaI { cfg } => Ok(Model::PaI(PaIModel::new(cfg.clone(), seed)?)),
            AlgoConfig::SgdPmf { cfg } => Ok(Model::SgdPmf(SgdPmfModel::new(cfg.clone(), seed)?)),
            AlgoConfig::OnlineLda { cfg } => {
                let mut cfg = cfg.clone();
                cfg.vocab_size = corpus.vocabulary.len();
                cfg.corpus_size = corpus.docs.len().max(1);
                Ok(Model::OnlineLda(OnlineLda::new(cfg, seed)?))
            }
        }
    }

    pub fn kind(&self) -> AlgorithmKind {
        match self {
            Model::Obctr(_) => AlgorithmKind::Obctr,
            Model::Octr(_) => AlgorithmKind::Octr,
            Model::PaI(_) => AlgorithmKind::PaI,
            Model::SgdPmf(_) => AlgorithmKind::SgdPmf,
            Model::OnlineLda(_) => AlgorithmKind::OnlineLda,
        }
    }

    /// Read-only prediction. `None` when the model cannot score the event
    /// (topic-only model, or a text-requiring model without the item's
    /// document).
    pub fn predict_event(&self, ev: &RatingEvent, corpus: &Corpus) -> Option<f64> {
        match self {
            Model::Obctr(engine) => Some(engine.predict_event(ev)),
            Model::Octr(model) => corpus
                .tokens(ev.item_id)
                .and_then(|tokens| model.predict_event(ev, tokens).ok()),
            Model::PaI(model) => Some(model.predict_event(ev)),
            Model::SgdPmf(model) => Some(model.predict_event(ev)),
            Model::OnlineLda(_) => None,
        }
    }

    /// Feed one event, returning the progressive prediction or a rejection.
    pub fn step(&mut self, ev: &RatingEvent, corpus: &Corpus) -> Result<StepOutcome, RunError> {
        match self {
            Model::Obctr(engine) => match engine.process_event(ev) {
                Ok(processed) => Ok(StepOutcome {
                    prediction: Some(processed.prediction),
                    rejected: false,
                }),
                Err(EngineError::MissingDocument { .. }) => Ok(StepOutcome {
                    prediction: None,
                    rejected: true,
                }),
                Err(err) => Err(err.into()),
            },
            Model::Octr(model) => match corpus.tokens(ev.item_id) {
                Some(tokens) => Ok(StepOutcome {
                    prediction: Some(model.process_event(ev, tokens)?),
                    rejected: false,
                }),
                None => Ok(StepOutcome {
                    prediction: None,
                    rejected: true,
                }),
            },
            Model::PaI(model) => Ok(StepOutcome {
                prediction: Some(model.process_event(ev)),
                rejected: false,
            }),
            Model::SgdPmf(model) => Ok(StepOutcome {
                prediction: Some(model.process_event(ev)),
                rejected: false,
            }),
            Model::OnlineLda(model) => match corpus.tokens(ev.item_id) {
                Some(tokens) => {
                    model.step(tokens)?;
                    Ok(StepOutcome {
                        prediction: None,
                        rejected: false,
                    })
                }
                None => Ok(StepOutcome {
                    prediction: None,
                    rejected: true,
                }),
            },
        }
    }

    pub fn topic_snapshot(&mut self) -> Option<TopicSnapshot> {
        match self {
            Model::Obctr(engine) => Some(engine.topic_snapshot()),
            Model::Octr(model) => Some(model.topic_snapshot()),
            Model::OnlineLda(model) => Some(model.topic_snapshot()),
            Model::PaI(_) | Model::SgdPmf(_) => None,
        }
    }

    /// Rebuild derived caches and id indexes after deserialization.
    pub fn after_load(&mut self) {
        match self {
            Model::Obctr(engine) => engine.after_load(),
            Model::Octr(model) => {
                model.rebuild_indexes();
                model.refresh_caches();
            }
            Model::PaI(model) => model.rebuild_indexes(),
            Model::SgdPmf(model) => model.rebuild_indexes(),
            Model::OnlineLda(model) => model.refresh_elog_beta(),
        }
    }
}

/// RMSE of read-only predictions over an event set; `None` when nothing was
/// predictable.
pub fn test_rmse(model: &Model, events: &[RatingEvent], corpus: &Corpus) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = events
        .iter()
        .filter_map(|ev| model.predict_event(ev, corpus).map(|p| (p, ev.rating)))
        .collect();
    rmse(&pairs).ok()
}

#[derive(Debug, Clone)]
pub struct TrainOptions {
    /// Evaluate on the test split every this many events (0 = only at the
    /// end of the stream).
    pub eval_every: u64,
    /// Progress line to stderr every this many events (0 = silent).
    pub progress_every: u64,
    /// Held-out token sequences for per-word predictive likelihood at each
    /// evaluation point (empty = skip).
    pub heldout_docs: Vec<Vec<usize>>,
    pub pred_ll_seed: u64,
    /// Abort with an error when a prediction turns non-finite.
    pub abort_on_non_finite: bool,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            eval_every: 50_000,
            progress_every: 0,
            heldout_docs: Vec::new(),
            pred_ll_seed: 0,
            abort_on_non_finite: true,
        }
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: Model,
    pub trace: MetricTrace,
    pub events_processed: u64,
    pub rejected_events: u64,
    pub final_test_rmse: Option<f64>,
    pub final_progressive_rmse: Option<f64>,
    pub final_pred_ll: Option<f64>,
    pub wall_time_s: f64,
}

/// Run the training stream once, evaluating on the test split at the
/// configured cadence and always once at the end.
pub fn train_stream(
    config: &AlgoConfig,
    corpus: &Corpus,
    split: &StreamSplit,
    seed: u64,
    opts: &TrainOptions,
    mut trace_writer: Option<&mut TraceCsvWriter>,
) -> Result<TrainOutcome, RunError> {
    let start = Instant::now();
    let mut model = Model::build(config, corpus, seed)?;
    let mut trace = MetricTrace::new(config.kind().to_string());

    let mut sum_sq = 0.0;
    let mut scored: u64 = 0;
    let mut rejected: u64 = 0;
    let mut events_seen: u64 = 0;
    let mut last_eval_at: Option<u64> = None;
    let mut final_point: Option<TracePoint> = None;

    let evaluate = |model: &mut Model,
                    events_seen: u64,
                    sum_sq: f64,
                    scored: u64,
                    start: &Instant|
     -> TracePoint {
        let rmse_test = test_rmse(model, &split.test, corpus);
        let rmse_progressive = if scored > 0 {
            Some((sum_sq / scored as f64).sqrt())
        } else {
            None
        };
        let pred_ll = if opts.heldout_docs.is_empty() {
            None
        } else {
            model.topic_snapshot().and_then(|snapshot| {
                predictive_log_likelihood(&snapshot, &opts.heldout_docs, opts.pred_ll_seed).ok()
            })
        };
        TracePoint {
            events_seen,
            rmse_test,
            rmse_progressive,
            pred_ll,
            wall_time_s: start.elapsed().as_secs_f64(),
        }
    };

    for ev in &split.train {
        let outcome = model.step(ev, corpus)?;
        events_seen += 1;
        if outcome.rejected {
            rejected += 1;
        } else if let Some(p) = outcome.prediction {
            if !p.is_finite() {
                if opts.abort_on_non_finite {
                    return Err(RunError::NonFinite { events_seen });
                }
            } else {
                sum_sq += (p - ev.rating) * (p - ev.rating);
                scored += 1;
            }
        }
        if opts.progress_every > 0 && events_seen % opts.progress_every == 0 {
            eprintln!(
                "[{}] {events_seen}/{} events ({rejected} rejected)",
                config.kind(),
                split.train.len()
            );
        }
        if opts.eval_every > 0 && events_seen % opts.eval_every == 0 {
            let point = evaluate(&mut model, events_seen, sum_sq, scored, &start);
            if let Some(writer) = trace_writer.as_deref_mut() {
                writer.append(&point)?;
            }
            trace.push(point.clone());
            last_eval_at = Some(events_seen);
            final_point = Some(point);
        }
    }
    if last_eval_at != Some(events_seen) {
        let point = evaluate(&mut model, events_seen, sum_sq, scored, &start);
        if let Some(writer) = trace_writer.as_deref_mut() {
            writer.append(&point)?;
        }
        trace.push(point.clone());
        final_point = Some(point);
    }

    let final_point = final_point.expect("at least one evaluation point");
    Ok(TrainOutcome {
        model,
        trace,
        events_processed: events_seen,
        rejected_events: rejected,
        final_test_rmse: final_point.rmse_test,
        final_progressive_rmse: final_point.rmse_progressive,
        final_pred_ll: final_point.pred_ll,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
