//! Shared domain types: hyperparameters, Gaussian factor posteriors, and
//! rating events, plus prior initialization and rating prediction.
//!
//! A note on the variance convention: the generative story writes priors in a
//! precision-style notation, yet the closed-form posterior updates divide by
//! `sigma_r2` and `sigma_eps2` exactly where an observation *variance*
//! belongs. We therefore treat every `sigma_*2` field uniformly as a variance
//! (prior variance for `sigma_u2`/`sigma_v2`, observation variance for
//! `sigma_r2`, tether variance for `sigma_eps2`), which makes the factor
//! updates the standard conjugate Gaussian rank-one update and lets them be
//! verified against an exact oracle.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Variance floor preventing numerical underflow in posterior updates.
pub const VAR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperParams(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("factor variance must be strictly positive and finite")]
    NonPositiveVariance,
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("token id {token} out of vocabulary range (D = {vocab})")]
    TokenOutOfRange { token: usize, vocab: usize },
    #[error("need more than {burn_in} sweep snapshots to discard {burn_in} burn-in sweeps, got {got}")]
    NotEnoughSweeps { burn_in: usize, got: usize },
}

/// Model hyperparameters shared by the engine, the baselines, and the
/// synthetic generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    /// Number of topics; equals the latent factor dimension.
    pub k: usize,
    /// Symmetric Dirichlet prior on per-document topic proportions.
    pub alpha: f64,
    /// Symmetric Dirichlet prior on topic-word distributions.
    pub beta: f64,
    /// Prior variance of user factor components.
    pub sigma_u2: f64,
    /// Prior variance of item factor components.
    pub sigma_v2: f64,
    /// Variance of the tether between an item factor and its empirical
    /// topic-frequency vector.
    pub sigma_eps2: f64,
    /// Rating observation noise variance.
    pub sigma_r2: f64,
    /// Gibbs sweeps per event.
    pub sweeps: usize,
    /// Leading sweeps discarded before estimating topic frequencies.
    pub burn_in: usize,
}

impl HyperParams {
    /// Defaults for a given dimension: `alpha = beta = 1/K`, unit variances,
    /// 4 sweeps with 2 discarded.
    pub fn new(k: usize) -> Self {
        let kf = k.max(1) as f64;
        HyperParams {
            k,
            alpha: 1.0 / kf,
            beta: 1.0 / kf,
            sigma_u2: 1.0,
            sigma_v2: 1.0,
            sigma_eps2: 1.0,
            sigma_r2: 1.0,
            sweeps: 4,
            burn_in: 2,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let pos = |name: &str, v: f64| -> Result<(), ModelError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ModelError::InvalidHyperParams(format!(
                    "{name} must be strictly positive and finite, got {v}"
                )))
            }
        };
        if self.k < 1 {
            return Err(ModelError::InvalidHyperParams("k must be >= 1".into()));
        }
        pos("alpha", self.alpha)?;
        pos("beta", self.beta)?;
        pos("sigma_u2", self.sigma_u2)?;
        pos("sigma_v2", self.sigma_v2)?;
        pos("sigma_eps2", self.sigma_eps2)?;
        pos("sigma_r2", self.sigma_r2)?;
        if self.sweeps < 1 {
            return Err(ModelError::InvalidHyperParams("sweeps must be >= 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(ModelError::InvalidHyperParams(format!(
                "burn_in ({}) must be < sweeps ({})",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }
}

/// Diagonal-Gaussian posterior over one latent factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianFactor {
    pub mean: Vec<f64>,
    /// Diagonal of the covariance; every component strictly positive.
    pub var: Vec<f64>,
}

impl GaussianFactor {
    pub fn new(mean: Vec<f64>, var: Vec<f64>) -> Result<Self, ModelError> {
        if mean.len() != var.len() {
            return Err(ModelError::DimensionMismatch {
                expected: mean.len(),
                got: var.len(),
            });
        }
        if !mean.iter().all(|m| m.is_finite()) {
            return Err(ModelError::InvalidHyperParams(
                "factor mean components must be finite".into(),
            ));
        }
        if !var.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(ModelError::NonPositiveVariance);
        }
        Ok(GaussianFactor { mean, var })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// One (user, item, rating) observation from the stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingEvent {
    pub user_id: u64,
    pub item_id: u64,
    pub rating: f64,
    /// Monotone stream position (timestamp or sequence number).
    pub order_key: u64,
}

/// Zero-mean user prior with per-component variance `sigma_u2`.
pub fn init_user_factor(hp: &HyperParams) -> Result<GaussianFactor, ModelError> {
    hp.validate()?;
    GaussianFactor::new(vec![0.0; hp.k], vec![hp.sigma_u2; hp.k])
}

/// Zero-mean item prior with per-component variance `sigma_v2`.
pub fn init_item_factor(hp: &HyperParams) -> Result<GaussianFactor, ModelError> {
    hp.validate()?;
    GaussianFactor::new(vec![0.0; hp.k], vec![hp.sigma_v2; hp.k])
}

/// Expected rating under independent factor posteriors: the dot product of
/// the two posterior means.
pub fn predict(u: &GaussianFactor, v: &GaussianFactor) -> Result<f64, ModelError> {
    if u.dim() != v.dim() {
        return Err(ModelError::DimensionMismatch {
            expected: u.dim(),
            got: v.dim(),
        });
    }
    Ok(dot(&u.mean, &v.mean))
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
