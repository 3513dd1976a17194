//! The jointly optimized streaming engine: per-event Gibbs sampling of topic
//! assignments, closed-form diagonal-Gaussian factor updates, and count-based
//! refreshes of the topic-word point estimates.
//!
//! Per event the engine (1) predicts the rating before touching any state
//! (progressive validation), (2) resamples the item's topic assignments for a
//! fixed number of sweeps holding the global word distributions and the item
//! mean fixed, (3) folds the rating into the user posterior, (4) folds the
//! rating and the estimated topic-frequency vector into the item posterior,
//! and (5) applies the assignment deltas to the global topic-word table.
//!
//! Mutation is single-writer: one owner applies events strictly in stream
//! order. Clones serve as read-only snapshots for concurrent evaluation.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    dot, init_item_factor, init_user_factor, GaussianFactor, HyperParams, ModelError, RatingEvent,
    VAR_FLOOR,
};
use crate::seeding::{derive_seed, tag};
use crate::topics::{theta_from_counts, Document, TopicState};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("no document registered for item {item_id}")]
    MissingDocument { item_id: u64 },
    #[error("document for item {item_id} already registered")]
    DuplicateDocument { item_id: u64 },
    #[error("rating must be finite, got {0}")]
    NonFiniteRating(f64),
}

/// Conjugate update of a user factor from one rating observation.
///
/// Posterior precision gains the rank-one term `m_v m_v' / sigma_r2`; only
/// the diagonal of the resulting covariance is retained, computed exactly via
/// the rank-one downdate `var_k - (var_k v_k)^2 / (sigma_r2 + v' diag(var) v)`.
/// The mean uses the full rank-one formula, which needs no off-diagonals when
/// the prior covariance is diagonal.
pub fn update_user(
    prior: &GaussianFactor,
    v: &GaussianFactor,
    rating: f64,
    hp: &HyperParams,
) -> Result<GaussianFactor, ModelError> {
    let k = prior.dim();
    if v.dim() != k {
        return Err(ModelError::DimensionMismatch {
            expected: k,
            got: v.dim(),
        });
    }
    if !prior.var.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return Err(ModelError::NonPositiveVariance);
    }
    let s = hp.sigma_r2;
    let quad: f64 = prior
        .var
        .iter()
        .zip(&v.mean)
        .map(|(var, m)| var * m * m)
        .sum();
    let denom = s + quad;
    let gain = (rating - dot(&v.mean, &prior.mean)) / denom;
    let mut mean = Vec::with_capacity(k);
    let mut var = Vec::with_capacity(k);
    for i in 0..k {
        let sv = prior.var[i] * v.mean[i];
        mean.push(prior.mean[i] + gain * sv);
        var.push((prior.var[i] - sv * sv / denom).max(VAR_FLOOR));
    }
    GaussianFactor::new(mean, var)
}

/// Conjugate update of an item factor from one rating observation plus the
/// Gaussian tether to the document's topic-frequency vector.
///
/// The tether acts as a pseudo-observation of the factor at `zbar` with
/// variance `sigma_eps2`: the prior is first multiplied with
/// `N(zbar, sigma_eps2 I)` (the "mix" distribution), then the rating is
/// folded in as a rank-one update, retaining the covariance diagonal.
pub fn update_item(
    prior: &GaussianFactor,
    u: &GaussianFactor,
    zbar: &[f64],
    rating: f64,
    hp: &HyperParams,
) -> Result<GaussianFactor, ModelError> {
    let k = prior.dim();
    if u.dim() != k {
        return Err(ModelError::DimensionMismatch {
            expected: k,
            got: u.dim(),
        });
    }
    if zbar.len() != k {
        return Err(ModelError::DimensionMismatch {
            expected: k,
            got: zbar.len(),
        });
    }
    if !prior.var.iter().all(|&x| x > 0.0 && x.is_finite()) {
        return Err(ModelError::NonPositiveVariance);
    }
    let eps2 = hp.sigma_eps2;
    let mut mix = Vec::with_capacity(k);
    let mut m_mix = Vec::with_capacity(k);
    for i in 0..k {
        let precision = 1.0 / prior.var[i] + 1.0 / eps2;
        let var = 1.0 / precision;
        mix.push(var);
        m_mix.push(var * (prior.mean[i] / prior.var[i] + zbar[i] / eps2));
    }
    let quad: f64 = mix.iter().zip(&u.mean).map(|(var, m)| var * m * m).sum();
    let denom = hp.sigma_r2 + quad;
    let gain = (rating - dot(&u.mean, &m_mix)) / denom;
    let mut mean = Vec::with_capacity(k);
    let mut var = Vec::with_capacity(k);
    for i in 0..k {
        let su = mix[i] * u.mean[i];
        mean.push(m_mix[i] + gain * su);
        var.push((mix[i] - su * su / denom).max(VAR_FLOOR));
    }
    GaussianFactor::new(mean, var)
}

/// Unnormalized log weight of assigning topic `topic` to position `pos`,
/// with `excl` the per-topic counts excluding that position.
#[inline]
fn site_log_weight(
    topic: usize,
    word: usize,
    excl: f64,
    n: f64,
    item_mean: &[f64],
    topics: &TopicState,
    hp: &HyperParams,
) -> f64 {
    let tether = 1.0 / (2.0 * hp.sigma_eps2 * n) * (2.0 * item_mean[topic] - (1.0 + 2.0 * excl) / n);
    (hp.alpha + excl).ln() + topics.log_phi(topic, word) + tether
}

fn conditional_into(
    probs: &mut Vec<f64>,
    doc: &Document,
    pos: usize,
    item_mean: &[f64],
    topics: &TopicState,
    hp: &HyperParams,
) {
    let k = topics.k();
    let word = doc.tokens[pos];
    let current = doc.z[pos];
    let n = doc.len() as f64;
    probs.clear();
    let mut max = f64::NEG_INFINITY;
    for topic in 0..k {
        let excl = doc.topic_counts[topic] as f64 - if topic == current { 1.0 } else { 0.0 };
        let lw = site_log_weight(topic, word, excl, n, item_mean, topics, hp);
        if lw > max {
            max = lw;
        }
        probs.push(lw);
    }
    let mut total = 0.0;
    for p in probs.iter_mut() {
        *p = (*p - max).exp();
        total += *p;
    }
    for p in probs.iter_mut() {
        *p /= total;
    }
}

/// Full-conditional distribution of one topic assignment given all others,
/// the item factor mean, and the current topic-word estimates. Returns a
/// length-K probability vector summing to one.
pub fn gibbs_conditional(
    doc: &Document,
    pos: usize,
    v: &GaussianFactor,
    topics: &TopicState,
    hp: &HyperParams,
) -> Result<Vec<f64>, ModelError> {
    if doc.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    if pos >= doc.len() {
        return Err(ModelError::DimensionMismatch {
            expected: doc.len(),
            got: pos,
        });
    }
    let word = doc.tokens[pos];
    if word >= topics.vocab_size() {
        return Err(ModelError::TokenOutOfRange {
            token: word,
            vocab: topics.vocab_size(),
        });
    }
    if v.dim() != topics.k() {
        return Err(ModelError::DimensionMismatch {
            expected: topics.k(),
            got: v.dim(),
        });
    }
    let mut probs = Vec::with_capacity(topics.k());
    conditional_into(&mut probs, doc, pos, &v.mean, topics, hp);
    Ok(probs)
}

/// One sequential sweep: every position resampled once from its full
/// conditional, with the document counts decremented and incremented around
/// each draw. Draws come from the document's own stream.
pub fn gibbs_sweep(
    doc: &mut Document,
    v: &GaussianFactor,
    topics: &TopicState,
    hp: &HyperParams,
) -> Result<(), ModelError> {
    if doc.is_empty() {
        return Err(ModelError::EmptyDocument);
    }
    if let Some(&bad) = doc.tokens.iter().find(|&&w| w >= topics.vocab_size()) {
        return Err(ModelError::TokenOutOfRange {
            token: bad,
            vocab: topics.vocab_size(),
        });
    }
    if v.dim() != topics.k() {
        return Err(ModelError::DimensionMismatch {
            expected: topics.k(),
            got: v.dim(),
        });
    }
    let mut probs = Vec::with_capacity(topics.k());
    for pos in 0..doc.len() {
        conditional_into(&mut probs, doc, pos, &v.mean, topics, hp);
        let draw: f64 = doc.rng.random();
        let mut cum = 0.0;
        let mut picked = probs.len() - 1;
        for (topic, &p) in probs.iter().enumerate() {
            cum += p;
            if draw < cum {
                picked = topic;
                break;
            }
        }
        let old = doc.z[pos];
        if picked != old {
            doc.topic_counts[old] -= 1;
            doc.topic_counts[picked] += 1;
            doc.z[pos] = picked;
        }
    }
    Ok(())
}

/// Average the post-burn-in sweep snapshots of the empirical topic-frequency
/// vector.
pub fn estimate_zbar(snapshots: &[Vec<f64>], burn_in: usize) -> Result<Vec<f64>, ModelError> {
    if snapshots.len() <= burn_in {
        return Err(ModelError::NotEnoughSweeps {
            burn_in,
            got: snapshots.len(),
        });
    }
    let kept = &snapshots[burn_in..];
    let k = kept[0].len();
    let mut mean = vec![0.0; k];
    for snap in kept {
        for (m, &s) in mean.iter_mut().zip(snap) {
            *m += s;
        }
    }
    let count = kept.len() as f64;
    for m in &mut mean {
        *m /= count;
    }
    Ok(mean)
}

/// Apply a document's assignment change to the global table and refresh the
/// affected point-estimate rows. Returns the document's smoothed topic
/// proportions.
pub fn update_topics(
    state: &mut TopicState,
    doc: &Document,
    old_z: &[usize],
    hp: &HyperParams,
) -> Vec<f64> {
    let mut changed = BTreeSet::new();
    for ((&w, &new), &old) in doc.tokens.iter().zip(&doc.z).zip(old_z) {
        if state.reassign(w, old, new) {
            changed.insert(old);
            changed.insert(new);
        }
    }
    for topic in changed {
        state.refresh_row(topic);
    }
    theta_from_counts(&doc.topic_counts, hp.alpha)
}

/// Dense re-indexing of sparse external ids with the factor storage.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct FactorTable {
    external: Vec<u64>,
    factors: Vec<GaussianFactor>,
    #[serde(skip)]
    index: HashMap<u64, usize>,
}

impl FactorTable {
    pub fn get(&self, external_id: u64) -> Option<&GaussianFactor> {
        self.index.get(&external_id).map(|&i| &self.factors[i])
    }

    pub fn get_or_insert_with(
        &mut self,
        external_id: u64,
        init: impl FnOnce() -> GaussianFactor,
    ) -> &mut GaussianFactor {
        let idx = *self.index.entry(external_id).or_insert_with(|| {
            self.external.push(external_id);
            self.factors.push(init());
            self.factors.len() - 1
        });
        &mut self.factors[idx]
    }

    pub fn set(&mut self, external_id: u64, factor: GaussianFactor) {
        let idx = self.index[&external_id];
        self.factors[idx] = factor;
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u64, &GaussianFactor)> {
        self.external.iter().copied().zip(self.factors.iter())
    }

    /// Rebuild the id index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .external
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect();
    }
}

/// Counters exposed for diagnostics and provenance.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineStats {
    pub events_processed: u64,
    pub rejected_missing_doc: u64,
    pub pmf_fallback_events: u64,
}

/// Outcome of one processed event.
#[derive(Debug, Clone)]
pub struct ProcessedEvent {
    /// Prediction made before any state was updated.
    pub prediction: f64,
    /// Smoothed topic proportions of the event's document after the update;
    /// empty on the factor-only fallback path.
    pub theta: Vec<f64>,
}

/// Streaming engine state: factor posteriors, topic state, and per-item
/// documents.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObctrEngine {
    hp: HyperParams,
    seed: u64,
    users: FactorTable,
    items: FactorTable,
    topics: TopicState,
    docs: BTreeMap<u64, Document>,
    stats: EngineStats,
    /// Allow events whose item has no document to update both factors
    /// without the tether instead of being rejected.
    pub pmf_only_fallback: bool,
    /// Passes of the sweep/user/item cycle per event.
    pub inner_iters: usize,
    #[serde(skip)]
    phi_stale: bool,
}

impl ObctrEngine {
    pub fn new(hp: HyperParams, vocab_size: usize, seed: u64) -> Result<Self, EngineError> {
        hp.validate()?;
        let topics = TopicState::new(hp.k, vocab_size, hp.beta);
        Ok(ObctrEngine {
            hp,
            seed,
            users: FactorTable::default(),
            items: FactorTable::default(),
            topics,
            docs: BTreeMap::new(),
            stats: EngineStats::default(),
            pmf_only_fallback: false,
            inner_iters: 1,
            phi_stale: false,
        })
    }

    pub fn hyper_params(&self) -> &HyperParams {
        &self.hp
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn topics(&self) -> &TopicState {
        &self.topics
    }

    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn document(&self, item_id: u64) -> Option<&Document> {
        self.docs.get(&item_id)
    }

    pub fn user_factor(&self, user_id: u64) -> Option<&GaussianFactor> {
        self.users.get(user_id)
    }

    pub fn item_factor(&self, item_id: u64) -> Option<&GaussianFactor> {
        self.items.get(item_id)
    }

    /// Register an item's tokenized text. Assignments are initialized from a
    /// stream derived from the engine seed and the item id, and immediately
    /// counted into the global table.
    pub fn register_document(&mut self, item_id: u64, tokens: Vec<usize>) -> Result<(), EngineError> {
        if self.docs.contains_key(&item_id) {
            return Err(EngineError::DuplicateDocument { item_id });
        }
        let doc = Document::new(
            item_id,
            tokens,
            self.hp.k,
            self.topics.vocab_size(),
            derive_seed(self.seed, tag::DOCUMENT, item_id),
        )?;
        self.topics.add_document(&doc);
        self.docs.insert(item_id, doc);
        self.phi_stale = true;
        Ok(())
    }

    /// Predict a rating without touching any state. Unseen users or items
    /// fall back to their zero-mean priors, so the prediction is zero.
    pub fn predict_event(&self, ev: &RatingEvent) -> f64 {
        match (self.users.get(ev.user_id), self.items.get(ev.item_id)) {
            (Some(u), Some(v)) => dot(&u.mean, &v.mean),
            _ => 0.0,
        }
    }

    /// Rebuild derived caches after deserialization.
    pub fn after_load(&mut self) {
        self.users.rebuild_index();
        self.items.rebuild_index();
        self.topics.refresh_all_rows();
        self.phi_stale = false;
    }

    fn ensure_phi_fresh(&mut self) {
        if self.phi_stale {
            self.topics.refresh_all_rows();
            self.phi_stale = false;
        }
    }

    /// Topic-model view for evaluation: point estimates plus the smoothing
    /// prior.
    pub fn topic_snapshot(&mut self) -> crate::eval::TopicSnapshot {
        self.ensure_phi_fresh();
        crate::eval::TopicSnapshot {
            k: self.hp.k,
            vocab_size: self.topics.vocab_size(),
            phi: self.topics.phi_matrix(),
            alpha: self.hp.alpha,
        }
    }

    /// Process one event: predict, resample the document, update the user
    /// and item posteriors, and fold the assignment deltas into the global
    /// topic table.
    pub fn process_event(&mut self, ev: &RatingEvent) -> Result<ProcessedEvent, EngineError> {
        if !ev.rating.is_finite() {
            return Err(EngineError::NonFiniteRating(ev.rating));
        }
        if !self.docs.contains_key(&ev.item_id) {
            if self.pmf_only_fallback {
                self.stats.pmf_fallback_events += 1;
                return self.process_factors_only(ev);
            }
            self.stats.rejected_missing_doc += 1;
            return Err(EngineError::MissingDocument { item_id: ev.item_id });
        }
        self.ensure_phi_fresh();

        let hp = self.hp.clone();
        let u_prior = self
            .users
            .get_or_insert_with(ev.user_id, || init_user_factor(&hp).expect("validated"))
            .clone();
        let v_prior = self
            .items
            .get_or_insert_with(ev.item_id, || init_item_factor(&hp).expect("validated"))
            .clone();
        let prediction = dot(&u_prior.mean, &v_prior.mean);

        let mut doc = self.docs.remove(&ev.item_id).expect("checked above");
        let old_z = doc.z.clone();

        let iters = self.inner_iters.max(1);
        let mut v_current = v_prior.clone();
        let mut u_new = u_prior.clone();
        let mut v_new = v_prior.clone();
        let mut zbar = doc.zbar.clone();
        let mut snapshots: Vec<Vec<f64>> = Vec::with_capacity(hp.sweeps);
        for _ in 0..iters {
            snapshots.clear();
            for _ in 0..hp.sweeps {
                gibbs_sweep(&mut doc, &v_current, &self.topics, &hp)?;
                snapshots.push(doc.frequency_vector());
            }
            zbar = estimate_zbar(&snapshots, hp.burn_in)?;
            u_new = update_user(&u_prior, &v_current, ev.rating, &hp)?;
            v_new = update_item(&v_prior, &u_new, &zbar, ev.rating, &hp)?;
            v_current = v_new.clone();
        }

        let theta = update_topics(&mut self.topics, &doc, &old_z, &hp);
        doc.zbar = zbar;
        self.docs.insert(ev.item_id, doc);
        self.users.set(ev.user_id, u_new);
        self.items.set(ev.item_id, v_new);
        self.stats.events_processed += 1;
        Ok(ProcessedEvent { prediction, theta })
    }

    /// Fallback path for items without text: conjugate rating updates on
    /// both factors, no tether, no topic activity.
    fn process_factors_only(&mut self, ev: &RatingEvent) -> Result<ProcessedEvent, EngineError> {
        let hp = self.hp.clone();
        let u_prior = self
            .users
            .get_or_insert_with(ev.user_id, || init_user_factor(&hp).expect("validated"))
            .clone();
        let v_prior = self
            .items
            .get_or_insert_with(ev.item_id, || init_item_factor(&hp).expect("validated"))
            .clone();
        let prediction = dot(&u_prior.mean, &v_prior.mean);
        let u_new = update_user(&u_prior, &v_prior, ev.rating, &hp)?;
        let v_new = update_user(&v_prior, &u_new, ev.rating, &hp)?;
        self.users.set(ev.user_id, u_new);
        self.items.set(ev.item_id, v_new);
        self.stats.events_processed += 1;
        Ok(ProcessedEvent {
            prediction,
            theta: Vec::new(),
        })
    }

    /// Global counts must equal the aggregation of the per-document counts.
    pub fn topic_counts_consistent(&self) -> bool {
        self.topics.consistent_with(self.docs.values())
    }

    #[cfg(test)]
    fn force_document_assignments(&mut self, item_id: u64, z: Vec<usize>) {
        let doc = self.docs.get_mut(&item_id).unwrap();
        assert_eq!(z.len(), doc.len());
        self.topics.remove_document(doc);
        let mut counts = vec![0u32; self.hp.k];
        for &zi in &z {
            counts[zi] += 1;
        }
        doc.z = z;
        doc.topic_counts = counts;
        doc.zbar = doc.frequency_vector();
        self.topics.add_document(doc);
        self.phi_stale = true;
    }
}
