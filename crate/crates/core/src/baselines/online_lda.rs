//! Stochastic variational inference for LDA: per-document E-step to local
//! convergence, then a decaying-step-size blend of the global variational
//! parameters toward the corpus-scaled sufficient statistics.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::digamma;

use super::BaselineError;
use crate::eval::TopicSnapshot;
use crate::seeding::{derive_seed, tag};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnlineLdaConfig {
    pub k: usize,
    pub vocab_size: usize,
    /// Dirichlet prior on topic proportions.
    pub alpha: f64,
    /// Dirichlet prior on topic-word distributions.
    pub eta: f64,
    /// Learning-rate offset; step size is `(tau0 + t)^(-kappa)`.
    pub tau0: f64,
    /// Learning-rate decay exponent in `[0, 1]`.
    pub kappa: f64,
    /// Population size the per-document statistics are scaled to.
    pub corpus_size: usize,
    pub e_step_max_iters: usize,
    pub e_step_mean_change_tol: f64,
}

impl OnlineLdaConfig {
    pub fn new(k: usize, vocab_size: usize, corpus_size: usize) -> Self {
        let kf = k.max(1) as f64;
        OnlineLdaConfig {
            k,
            vocab_size,
            alpha: 1.0 / kf,
            eta: 1.0 / kf,
            tau0: 1.0,
            kappa: 0.7,
            corpus_size,
            e_step_max_iters: 50,
            e_step_mean_change_tol: 1e-4,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.k < 1 || self.vocab_size < 1 || self.corpus_size < 1 {
            return Err(BaselineError::InvalidConfig(
                "k, vocab_size, and corpus_size must be >= 1".into(),
            ));
        }
        if !(self.alpha > 0.0 && self.eta > 0.0) {
            return Err(BaselineError::InvalidConfig(
                "alpha and eta must be positive".into(),
            ));
        }
        if !(self.tau0 >= 1.0) {
            return Err(BaselineError::InvalidConfig("tau0 must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return Err(BaselineError::InvalidConfig(
                "kappa must lie in [0, 1]".into(),
            ));
        }
        if self.e_step_max_iters < 1 {
            return Err(BaselineError::InvalidConfig(
                "e_step_max_iters must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Online variational LDA state: the `K x D` Dirichlet parameters over the
/// topic-word distributions plus the step-size schedule.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OnlineLda {
    pub cfg: OnlineLdaConfig,
    /// Flattened `K x D` variational Dirichlet parameters, entry-wise > 0.
    lambda: Vec<f64>,
    /// Update counter.
    t: u64,
    /// Step size used by the most recent update, in `(0, 1]`.
    rho: f64,
    #[serde(skip)]
    elog_beta: Vec<f64>,
}

impl OnlineLda {
    /// Seeded initialization: lambda entries drawn from Gamma(100, 0.01) to
    /// break topic symmetry, as is conventional for stochastic variational
    /// LDA.
    pub fn new(cfg: OnlineLdaConfig, seed: u64) -> Result<Self, BaselineError> {
        cfg.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, tag::TOPIC_INIT, 0));
        let gamma = Gamma::<f64>::new(100.0, 0.01).expect("valid shape/scale");
        let lambda: Vec<f64> = (0..cfg.k * cfg.vocab_size)
            .map(|_| gamma.sample(&mut rng).max(1e-12))
            .collect();
        let mut lda = OnlineLda {
            cfg,
            lambda,
            t: 0,
            rho: 1.0,
            elog_beta: Vec::new(),
        };
        lda.refresh_elog_beta();
        Ok(lda)
    }

    /// Test/diagnostic constructor with explicit lambda.
    pub fn with_lambda(cfg: OnlineLdaConfig, lambda: Vec<f64>) -> Result<Self, BaselineError> {
        cfg.validate()?;
        if lambda.len() != cfg.k * cfg.vocab_size {
            return Err(BaselineError::InvalidConfig(
                "lambda must be K x D".into(),
            ));
        }
        if !lambda.iter().all(|&x| x > 0.0 && x.is_finite()) {
            return Err(BaselineError::InvalidConfig(
                "lambda entries must be positive".into(),
            ));
        }
        let mut lda = OnlineLda {
            cfg,
            lambda,
            t: 0,
            rho: 1.0,
            elog_beta: Vec::new(),
        };
        lda.refresh_elog_beta();
        Ok(lda)
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }

    pub fn updates_seen(&self) -> u64 {
        self.t
    }

    pub fn current_step_size(&self) -> f64 {
        self.rho
    }

    pub fn refresh_elog_beta(&mut self) {
        let (k, d) = (self.cfg.k, self.cfg.vocab_size);
        self.elog_beta = vec![0.0; k * d];
        for topic in 0..k {
            let row = &self.lambda[topic * d..(topic + 1) * d];
            let total: f64 = row.iter().sum();
            let dig_total = digamma(total);
            for w in 0..d {
                self.elog_beta[topic * d + w] = digamma(row[w]) - dig_total;
            }
        }
    }

    /// Variational E-step on one document's bag of words. Returns the
    /// document's Dirichlet parameters and the per-word responsibilities
    /// needed for the sufficient statistics.
    fn e_step(&self, ids: &[usize], counts: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let k = self.cfg.k;
        let d = self.cfg.vocab_size;
        let mut gamma = vec![1.0; k];
        let mut exp_elog_theta: Vec<f64> = dirichlet_expectation(&gamma)
            .into_iter()
            .map(f64::exp)
            .collect();
        let exp_elog_beta: Vec<f64> = ids
            .iter()
            .flat_map(|&w| (0..k).map(move |topic| self.elog_beta[topic * d + w].exp()))
            .collect();
        let phinorm = |exp_theta: &[f64]| -> Vec<f64> {
            (0..ids.len())
                .map(|wi| {
                    let mut s = 1e-100;
                    for topic in 0..k {
                        s += exp_theta[topic] * exp_elog_beta[wi * k + topic];
                    }
                    s
                })
                .collect()
        };
        let mut norm = phinorm(&exp_elog_theta);
        for _ in 0..self.cfg.e_step_max_iters {
            let last = gamma.clone();
            for topic in 0..k {
                let mut acc = 0.0;
                for wi in 0..ids.len() {
                    acc += counts[wi] / norm[wi] * exp_elog_beta[wi * k + topic];
                }
                gamma[topic] = self.cfg.alpha + exp_elog_theta[topic] * acc;
            }
            exp_elog_theta = dirichlet_expectation(&gamma)
                .into_iter()
                .map(f64::exp)
                .collect();
            norm = phinorm(&exp_elog_theta);
            let mean_change: f64 = gamma
                .iter()
                .zip(&last)
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                / k as f64;
            if mean_change < self.cfg.e_step_mean_change_tol {
                break;
            }
        }
        (gamma, exp_elog_theta, norm)
    }

    /// One online update from a single document. Returns the document's
    /// variational topic proportions (normalized gamma).
    pub fn step(&mut self, tokens: &[usize]) -> Result<Vec<f64>, BaselineError> {
        if tokens.is_empty() {
            return Err(BaselineError::EmptyDocument);
        }
        if let Some(&bad) = tokens.iter().find(|&&w| w >= self.cfg.vocab_size) {
            return Err(BaselineError::TokenOutOfRange {
                token: bad,
                vocab: self.cfg.vocab_size,
            });
        }
        let (ids, counts) = bag_of_words(tokens);
        let (gamma, exp_elog_theta, norm) = self.e_step(&ids, &counts);

        self.rho = (self.cfg.tau0 + self.t as f64).powf(-self.cfg.kappa);
        let k = self.cfg.k;
        let d = self.cfg.vocab_size;
        let scale = self.cfg.corpus_size as f64;
        let keep = 1.0 - self.rho;
        // Blend every entry toward the prior, then add the corpus-scaled
        // statistics of the observed words.
        for x in &mut self.lambda {
            *x = keep * *x + self.rho * self.cfg.eta;
        }
        for (wi, &w) in ids.iter().enumerate() {
            let weight = counts[wi] / norm[wi];
            for (topic, &ee_theta) in exp_elog_theta.iter().enumerate() {
                let sstat = ee_theta * weight * self.elog_beta[topic * d + w].exp();
                self.lambda[topic * d + w] += self.rho * scale * sstat;
            }
        }
        debug_assert!(self.lambda.iter().all(|&x| x > 0.0));
        self.t += 1;
        self.refresh_elog_beta();

        let total: f64 = gamma.iter().sum();
        let _ = k;
        Ok(gamma.into_iter().map(|g| g / total).collect())
    }

    /// Topic proportions of a document under the current state, without
    /// updating anything.
    pub fn infer_proportions(&self, tokens: &[usize]) -> Result<Vec<f64>, BaselineError> {
        if tokens.is_empty() {
            return Err(BaselineError::EmptyDocument);
        }
        let (ids, counts) = bag_of_words(tokens);
        let (gamma, _, _) = self.e_step(&ids, &counts);
        let total: f64 = gamma.iter().sum();
        Ok(gamma.into_iter().map(|g| g / total).collect())
    }

    /// Point-estimate view: normalized lambda rows.
    pub fn topic_snapshot(&self) -> TopicSnapshot {
        let (k, d) = (self.cfg.k, self.cfg.vocab_size);
        let mut phi = vec![0.0; k * d];
        for topic in 0..k {
            let row = &self.lambda[topic * d..(topic + 1) * d];
            let total: f64 = row.iter().sum();
            for w in 0..d {
                phi[topic * d + w] = row[w] / total;
            }
        }
        TopicSnapshot {
            k,
            vocab_size: d,
            phi,
            alpha: self.cfg.alpha,
        }
    }
}

fn bag_of_words(tokens: &[usize]) -> (Vec<usize>, Vec<f64>) {
    let mut ids: Vec<usize> = tokens.to_vec();
    ids.sort_unstable();
    ids.dedup();
    let mut counts = vec![0.0; ids.len()];
    for &t in tokens {
        let pos = ids.binary_search(&t).expect("token present");
        counts[pos] += 1.0;
    }
    (ids, counts)
}

fn dirichlet_expectation(gamma: &[f64]) -> Vec<f64> {
    let dig_total = digamma(gamma.iter().sum());
    gamma.iter().map(|&g| digamma(g) - dig_total).collect()
}
