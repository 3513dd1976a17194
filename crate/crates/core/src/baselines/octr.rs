//! Loosely coupled online composition: variational LDA supplies topic
//! proportions one-way to an SGD matrix-factorization step.
//!
//! The item vector is parameterized as proportions plus a learned offset,
//! `v_j = theta_j + eps_j`; gradient steps touch only the offset and the user
//! factor, never the topic state, so ratings cannot influence the topics.

use serde::{Deserialize, Serialize};

use super::{dot, seeded_point_init, BaselineError, OnlineLda, OnlineLdaConfig, PointFactor,
    PointTable};
use crate::eval::TopicSnapshot;
use crate::model::RatingEvent;
use crate::seeding::tag;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctrConfig {
    pub lda: OnlineLdaConfig,
    /// SGD learning rate.
    pub eta: f64,
    /// L2 regularization weight.
    pub lam: f64,
    pub init_scale_user: f64,
    pub init_scale_offset: f64,
}

impl OctrConfig {
    pub fn new(lda: OnlineLdaConfig, eta: f64) -> Self {
        OctrConfig {
            lda,
            eta,
            lam: 0.01,
            init_scale_user: 0.1,
            init_scale_offset: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), BaselineError> {
        self.lda.validate()?;
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

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OctrModel {
    pub cfg: OctrConfig,
    seed: u64,
    lda: OnlineLda,
    users: PointTable,
    /// Learned per-item offsets from the topic proportions.
    offsets: PointTable,
}

impl OctrModel {
    pub fn new(cfg: OctrConfig, seed: u64) -> Result<Self, BaselineError> {
        cfg.validate()?;
        let lda = OnlineLda::new(cfg.lda.clone(), seed)?;
        Ok(OctrModel {
            cfg,
            seed,
            lda,
            users: PointTable::default(),
            offsets: PointTable::default(),
        })
    }

    pub fn lda(&self) -> &OnlineLda {
        &self.lda
    }

    fn user_init(&self, id: u64) -> PointFactor {
        seeded_point_init(
            self.seed,
            tag::USER_FACTOR,
            id,
            self.cfg.lda.k,
            self.cfg.init_scale_user,
        )
    }

    fn offset_init(&self, id: u64) -> PointFactor {
        seeded_point_init(
            self.seed,
            tag::ITEM_FACTOR,
            id,
            self.cfg.lda.k,
            self.cfg.init_scale_offset,
        )
    }

    /// Read-only prediction: proportions inferred from the current topic
    /// state plus the item offset, dotted with the user factor.
    pub fn predict_event(&self, ev: &RatingEvent, tokens: &[usize]) -> Result<f64, BaselineError> {
        let theta = self.lda.infer_proportions(tokens)?;
        let u = self
            .users
            .get(ev.user_id)
            .cloned()
            .unwrap_or_else(|| self.user_init(ev.user_id));
        let eps = self
            .offsets
            .get(ev.item_id)
            .cloned()
            .unwrap_or_else(|| self.offset_init(ev.item_id));
        let v_eff: Vec<f64> = theta.iter().zip(&eps.vec).map(|(t, e)| t + e).collect();
        Ok(dot(&u.vec, &v_eff))
    }

    /// LDA-only exposure to a document, with no rating attached. The
    /// factor tables are untouched.
    pub fn observe_document(&mut self, tokens: &[usize]) -> Result<Vec<f64>, BaselineError> {
        self.lda.step(tokens)
    }

    /// Process one rating event: one topic-state update on the item's
    /// document yields proportions, then an SGD step moves the user factor
    /// and the item offset. Returns the pre-update prediction.
    pub fn process_event(
        &mut self,
        ev: &RatingEvent,
        tokens: &[usize],
    ) -> Result<f64, BaselineError> {
        // The proportions come out of the E-step against the pre-update
        // topic state, so the prediction below is still progressive even
        // though the topic update has already been applied.
        let theta = self.lda.step(tokens)?;

        let init_u = self.user_init(ev.user_id);
        let init_eps = self.offset_init(ev.item_id);
        let u = self
            .users
            .get_or_insert_with(ev.user_id, || init_u)
            .clone();
        let eps = self
            .offsets
            .get_or_insert_with(ev.item_id, || init_eps)
            .clone();
        let v_eff: Vec<f64> = theta.iter().zip(&eps.vec).map(|(t, e)| t + e).collect();
        let prediction = dot(&u.vec, &v_eff);

        let e = ev.rating - prediction;
        let eta = self.cfg.eta;
        let lam = self.cfg.lam;
        let u_new: Vec<f64> = u
            .vec
            .iter()
            .zip(&v_eff)
            .map(|(ui, vi)| ui + eta * (e * vi - lam * ui))
            .collect();
        let eps_new: Vec<f64> = eps
            .vec
            .iter()
            .zip(&u.vec)
            .map(|(ei, ui)| ei + eta * (e * ui - lam * ei))
            .collect();
        self.users.set(ev.user_id, PointFactor { vec: u_new });
        self.offsets.set(ev.item_id, PointFactor { vec: eps_new });
        Ok(prediction)
    }

    pub fn topic_snapshot(&self) -> TopicSnapshot {
        self.lda.topic_snapshot()
    }

    pub fn rebuild_indexes(&mut self) {
        self.users.rebuild_index();
        self.offsets.rebuild_index();
    }

    pub fn refresh_caches(&mut self) {
        self.lda.refresh_elog_beta();
    }
}
