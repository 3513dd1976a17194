//! Online comparison systems: passive-aggressive collaborative filtering,
//! SGD matrix factorization, stochastic variational LDA, and the loosely
//! coupled topic-regression composition.
//!
//! All of them learn point estimates — the factors the Bayesian engine
//! generalizes — and share the same single-writer contract: one owner applies
//! events in stream order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

use crate::seeding::derive_seed;

pub mod octr;
pub mod online_lda;
pub mod pa_i;
pub mod sgd_pmf;

pub use octr::{OctrConfig, OctrModel};
pub use online_lda::{OnlineLda, OnlineLdaConfig};
pub use pa_i::{pa_i_update, PaIConfig, PaIModel};
pub use sgd_pmf::{sgd_pmf_update, SgdPmfConfig, SgdPmfModel};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("document has no tokens")]
    EmptyDocument,
    #[error("token id {token} out of vocabulary range (D = {vocab})")]
    TokenOutOfRange { token: usize, vocab: usize },
}

/// Point estimate of one latent factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFactor {
    pub vec: Vec<f64>,
}

impl PointFactor {
    pub fn zeros(k: usize) -> Self {
        PointFactor { vec: vec![0.0; k] }
    }

    pub fn is_finite(&self) -> bool {
        self.vec.iter().all(|x| x.is_finite())
    }
}

/// Deterministic Gaussian initialization keyed by entity id, so factor values
/// do not depend on arrival order.
pub fn seeded_point_init(root_seed: u64, tag: u64, id: u64, k: usize, scale: f64) -> PointFactor {
    if scale == 0.0 {
        return PointFactor::zeros(k);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(root_seed, tag, id));
    let norm = Normal::new(0.0, scale).expect("positive scale");
    PointFactor {
        vec: (0..k).map(|_| norm.sample(&mut rng)).collect(),
    }
}

/// Dense re-indexed storage of point factors with lazy seeded creation.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PointTable {
    external: Vec<u64>,
    factors: Vec<PointFactor>,
    #[serde(skip)]
    index: HashMap<u64, usize>,
}

impl PointTable {
    pub fn get(&self, external_id: u64) -> Option<&PointFactor> {
        self.index.get(&external_id).map(|&i| &self.factors[i])
    }

    pub fn get_or_insert_with(
        &mut self,
        external_id: u64,
        init: impl FnOnce() -> PointFactor,
    ) -> &mut PointFactor {
        let idx = *self.index.entry(external_id).or_insert_with(|| {
            self.external.push(external_id);
            self.factors.push(init());
            self.factors.len() - 1
        });
        &mut self.factors[idx]
    }

    pub fn set(&mut self, external_id: u64, factor: PointFactor) {
        let idx = self.index[&external_id];
        self.factors[idx] = factor;
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .external
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
