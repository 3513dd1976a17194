//! Stochastic-gradient matrix factorization over point factors.

use serde::{Deserialize, Serialize};

use super::{dot, seeded_point_init, BaselineError, PointFactor, PointTable};
use crate::model::RatingEvent;
use crate::seeding::tag;

/// One simultaneous SGD step on both factors: with residual `e = r - u'v`,
/// `u' = u + eta (e v - lam u)` and `v' = v + eta (e u - lam v)`, both using
/// the pre-update values.
pub fn sgd_pmf_update(
    u: &PointFactor,
    v: &PointFactor,
    rating: f64,
    eta: f64,
    lam: f64,
) -> (PointFactor, PointFactor) {
    let e = rating - dot(&u.vec, &v.vec);
    let u_new = u
        .vec
        .iter()
        .zip(&v.vec)
        .map(|(ui, vi)| ui + eta * (e * vi - lam * ui))
        .collect();
    let v_new = v
        .vec
        .iter()
        .zip(&u.vec)
        .map(|(vi, ui)| vi + eta * (e * ui - lam * vi))
        .collect();
    (PointFactor { vec: u_new }, PointFactor { vec: v_new })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdPmfConfig {
    pub k: usize,
    /// Learning rate.
    pub eta: f64,
    /// L2 regularization weight.
    pub lam: f64,
    pub init_scale_user: f64,
    pub init_scale_item: f64,
}

impl SgdPmfConfig {
    pub fn new(k: usize, eta: f64) -> Self {
        SgdPmfConfig {
            k,
            eta,
            lam: 0.01,
            init_scale_user: 0.1,
            init_scale_item: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.k < 1 {
            return Err(BaselineError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(BaselineError::InvalidConfig("eta must be positive".into()));
        }
        if !(self.lam >= 0.0 && self.lam.is_finite()) {
            return Err(BaselineError::InvalidConfig(
                "lam must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Streaming SGD matrix-factorization model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SgdPmfModel {
    pub cfg: SgdPmfConfig,
    seed: u64,
    users: PointTable,
    items: PointTable,
}

impl SgdPmfModel {
    pub fn new(cfg: SgdPmfConfig, seed: u64) -> Result<Self, BaselineError> {
        cfg.validate()?;
        Ok(SgdPmfModel {
            cfg,
            seed,
            users: PointTable::default(),
            items: PointTable::default(),
        })
    }

    fn user_init(&self, id: u64) -> PointFactor {
        seeded_point_init(
            self.seed,
            tag::USER_FACTOR,
            id,
            self.cfg.k,
            self.cfg.init_scale_user,
        )
    }

    fn item_init(&self, id: u64) -> PointFactor {
        seeded_point_init(
            self.seed,
            tag::ITEM_FACTOR,
            id,
            self.cfg.k,
            self.cfg.init_scale_item,
        )
    }

    pub fn predict_event(&self, ev: &RatingEvent) -> f64 {
        let u = self
            .users
            .get(ev.user_id)
            .cloned()
            .unwrap_or_else(|| self.user_init(ev.user_id));
        let v = self
            .items
            .get(ev.item_id)
            .cloned()
            .unwrap_or_else(|| self.item_init(ev.item_id));
        dot(&u.vec, &v.vec)
    }

    /// Predict, then apply the SGD step. Returns the pre-update prediction.
    pub fn process_event(&mut self, ev: &RatingEvent) -> f64 {
        let init_u = self.user_init(ev.user_id);
        let init_v = self.item_init(ev.item_id);
        let u = self
            .users
            .get_or_insert_with(ev.user_id, || init_u)
            .clone();
        let v = self
            .items
            .get_or_insert_with(ev.item_id, || init_v)
            .clone();
        let prediction = dot(&u.vec, &v.vec);
        let (u_new, v_new) = sgd_pmf_update(&u, &v, ev.rating, self.cfg.eta, self.cfg.lam);
        self.users.set(ev.user_id, u_new);
        self.items.set(ev.item_id, v_new);
        prediction
    }

    pub fn rebuild_indexes(&mut self) {
        self.users.rebuild_index();
        self.items.rebuild_index();
    }
}
