//! Passive-aggressive online collaborative filtering (first clipped variant)
//! with an epsilon-insensitive regression loss.

use serde::{Deserialize, Serialize};

use super::{dot, seeded_point_init, BaselineError, PointFactor, PointTable};
use crate::model::RatingEvent;
use crate::seeding::tag;

/// One alternating PA-I step on both factors.
///
/// With loss `l = max(0, |r - u'v| - eps)`: if `l = 0` nothing changes;
/// otherwise the user factor moves by `min(c, l / ||v||^2) * sign(residual) * v`,
/// then the item factor takes the symmetric step against the updated user.
/// A zero-norm partner skips its half-step.
pub fn pa_i_update(
    u: &PointFactor,
    v: &PointFactor,
    rating: f64,
    c: f64,
    eps: f64,
) -> (PointFactor, PointFactor) {
    let step = |fixed: &[f64], moving: &[f64]| -> Option<Vec<f64>> {
        let residual = rating - dot(fixed, moving);
        let loss = (residual.abs() - eps).max(0.0);
        if loss == 0.0 {
            return None;
        }
        let norm_sq = dot(fixed, fixed);
        if norm_sq == 0.0 {
            return None;
        }
        let tau = (loss / norm_sq).min(c) * residual.signum();
        Some(
            moving
                .iter()
                .zip(fixed)
                .map(|(m, f)| m + tau * f)
                .collect(),
        )
    };
    let u_new = step(&v.vec, &u.vec)
        .map(|vec| PointFactor { vec })
        .unwrap_or_else(|| u.clone());
    let v_new = step(&u_new.vec, &v.vec)
        .map(|vec| PointFactor { vec })
        .unwrap_or_else(|| v.clone());
    (u_new, v_new)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PaIConfig {
    pub k: usize,
    /// Aggressiveness cap on the step size.
    pub c: f64,
    /// Insensitivity margin of the regression loss.
    pub eps: f64,
    /// Standard deviation of the seeded factor initialization.
    pub init_scale_user: f64,
    pub init_scale_item: f64,
}

impl PaIConfig {
    pub fn new(k: usize, c: f64) -> Self {
        PaIConfig {
            k,
            c,
            eps: 0.0,
            init_scale_user: 0.1,
            init_scale_item: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        if self.k < 1 {
            return Err(BaselineError::InvalidConfig("k must be >= 1".into()));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(BaselineError::InvalidConfig("c must be positive".into()));
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return Err(BaselineError::InvalidConfig(
                "eps must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

/// Streaming PA-I model over lazily created user and item factors.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PaIModel {
    pub cfg: PaIConfig,
    seed: u64,
    users: PointTable,
    items: PointTable,
}

impl PaIModel {
    pub fn new(cfg: PaIConfig, seed: u64) -> Result<Self, BaselineError> {
        cfg.validate()?;
        Ok(PaIModel {
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

    /// Read-only prediction; unseen entities use their would-be seeded
    /// initialization.
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

    /// Predict, then apply the PA-I update. Returns the pre-update
    /// prediction.
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
        let (u_new, v_new) = pa_i_update(&u, &v, ev.rating, self.cfg.c, self.cfg.eps);
        self.users.set(ev.user_id, u_new);
        self.items.set(ev.item_id, v_new);
        prediction
    }

    pub fn rebuild_indexes(&mut self) {
        self.users.rebuild_index();
        self.items.rebuild_index();
    }
}
