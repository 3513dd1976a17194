//! Synthetic data sampled from the generative model, plus brute-force and
//! high-precision oracles used by tests and the acceptance suite.
//!
//! The oracles deliberately share no numerical kernels with the engine: the
//! posterior oracle works on dense covariance matrices with explicit
//! Gauss-Jordan inversion, and the assignment oracle enumerates the joint
//! instead of sampling it.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Gamma, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{Corpus, Vocabulary};
use crate::model::{GaussianFactor, HyperParams, ModelError, RatingEvent};
use crate::topics::{Document, TopicState};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("sizes must be positive: {0}")]
    InvalidSize(String),
    #[error("dimension mismatch across oracle inputs: {0}")]
    DimensionMismatch(String),
    #[error("prior covariance must be symmetric")]
    AsymmetricCovariance,
    #[error("singular precision matrix")]
    SingularPrecision,
    #[error("assignment space too large: {states} states exceeds {limit}")]
    StateSpaceTooLarge { states: u64, limit: u64 },
    #[error("oracle supports at most dimension {max}, got {got}")]
    DimensionTooLarge { max: usize, got: usize },
}

// ---------------------------------------------------------------------------
// Dense linear algebra (oracle-only)
// ---------------------------------------------------------------------------

/// Gauss-Jordan inversion with partial pivoting. Returns `None` when a pivot
/// collapses below `1e-300`.
fn invert(matrix: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = matrix.len();
    let mut aug: Vec<Vec<f64>> = matrix
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| if i == j { 1.0 } else { 0.0 }));
            r
        })
        .collect();
    for col in 0..n {
        let pivot_row = (col..n)
            .max_by(|&a, &b| aug[a][col].abs().partial_cmp(&aug[b][col].abs()).unwrap())?;
        if aug[pivot_row][col].abs() < 1e-300 {
            return None;
        }
        aug.swap(col, pivot_row);
        let pivot = aug[col][col];
        for x in &mut aug[col] {
            *x /= pivot;
        }
        for row in 0..n {
            if row != col {
                let factor = aug[row][col];
                if factor != 0.0 {
                    for j in 0..2 * n {
                        let sub = factor * aug[col][j];
                        aug[row][j] -= sub;
                    }
                }
            }
        }
    }
    Some(aug.into_iter().map(|row| row[n..].to_vec()).collect())
}

fn one_norm(matrix: &[Vec<f64>]) -> f64 {
    let n = matrix.len();
    (0..n)
        .map(|j| matrix.iter().map(|row| row[j].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn mat_vec(matrix: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    matrix
        .iter()
        .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
        .collect()
}

// ---------------------------------------------------------------------------
// Canonical Gaussian posterior oracle
// ---------------------------------------------------------------------------

/// Exact complete-the-square posterior for a Gaussian prior observed through
/// scalar projections: precision `P = S0^-1 + sum_m a_m a_m^T / s_m`, mean
/// `P^-1 (S0^-1 m0 + sum_m r_m a_m / s_m)`. Dense, full covariance.
pub fn gaussian_posterior_oracle(
    prior_mean: &[f64],
    prior_cov: &[Vec<f64>],
    obs_vectors: &[Vec<f64>],
    obs_values: &[f64],
    obs_vars: &[f64],
) -> Result<(Vec<f64>, Vec<Vec<f64>>), SynthError> {
    let k = prior_mean.len();
    const MAX_DIM: usize = 8;
    if k > MAX_DIM {
        return Err(SynthError::DimensionTooLarge { max: MAX_DIM, got: k });
    }
    if prior_cov.len() != k || prior_cov.iter().any(|row| row.len() != k) {
        return Err(SynthError::DimensionMismatch(format!(
            "prior covariance must be {k}x{k}"
        )));
    }
    for i in 0..k {
        for j in (i + 1)..k {
            if (prior_cov[i][j] - prior_cov[j][i]).abs() > 1e-9 {
                return Err(SynthError::AsymmetricCovariance);
            }
        }
    }
    if obs_vectors.len() != obs_values.len() || obs_vectors.len() != obs_vars.len() {
        return Err(SynthError::DimensionMismatch(
            "observation arrays must have equal length".into(),
        ));
    }
    if obs_vectors.is_empty() {
        return Ok((prior_mean.to_vec(), prior_cov.to_vec()));
    }
    for a in obs_vectors {
        if a.len() != k {
            return Err(SynthError::DimensionMismatch(format!(
                "observation vector length {} != {k}",
                a.len()
            )));
        }
    }

    let prior_precision = invert(prior_cov).ok_or(SynthError::SingularPrecision)?;
    let mut precision = prior_precision.clone();
    for (m, a) in obs_vectors.iter().enumerate() {
        let s = obs_vars[m];
        for i in 0..k {
            for j in 0..k {
                precision[i][j] += a[i] * a[j] / s;
            }
        }
    }
    let mut info = mat_vec(&prior_precision, prior_mean);
    for (m, a) in obs_vectors.iter().enumerate() {
        for i in 0..k {
            info[i] += obs_values[m] * a[i] / obs_vars[m];
        }
    }
    let cov = invert(&precision).ok_or(SynthError::SingularPrecision)?;
    let condition = one_norm(&precision) * one_norm(&cov);
    if condition > 1e10 {
        log::warn!("posterior oracle precision is ill-conditioned (kappa_1 ~ {condition:.3e})");
    }
    let mean = mat_vec(&cov, &info);
    Ok((mean, cov))
}

// ---------------------------------------------------------------------------
// Exhaustive assignment-vector oracle
// ---------------------------------------------------------------------------

/// Flat index of an assignment vector, position 0 most significant.
pub fn assignment_index(z: &[usize], k: usize) -> usize {
    z.iter().fold(0, |acc, &zi| acc * k + zi)
}

/// Exact stationary distribution over all `K^N` assignment vectors of one
/// document, holding the item mean and the topic-word estimates fixed.
///
/// Each assignment is scored by the collapsed joint the sweep targets: the
/// rising-factorial term from the integrated topic proportions, the
/// topic-word log estimates, and the quadratic coupling between the item mean
/// and the empirical topic frequencies.
pub fn gibbs_enumeration_oracle(
    doc: &Document,
    v: &GaussianFactor,
    topics: &TopicState,
    hp: &HyperParams,
) -> Result<Vec<f64>, SynthError> {
    if doc.is_empty() {
        return Err(ModelError::EmptyDocument.into());
    }
    let k = topics.k();
    let n = doc.len();
    const LIMIT: u64 = 1_000_000;
    let states = (k as u64).checked_pow(n as u32).filter(|&s| s <= LIMIT);
    let states = states.ok_or(SynthError::StateSpaceTooLarge {
        states: (k as f64).powi(n as i32) as u64,
        limit: LIMIT,
    })? as usize;
    if v.dim() != k {
        return Err(SynthError::DimensionMismatch(format!(
            "item factor dimension {} != {k}",
            v.dim()
        )));
    }

    let n_f = n as f64;
    let mut log_weights = Vec::with_capacity(states);
    let mut z = vec![0usize; n];
    let mut max = f64::NEG_INFINITY;
    loop {
        let mut counts = vec![0u32; k];
        let mut lw = 0.0;
        for (pos, &zi) in z.iter().enumerate() {
            counts[zi] += 1;
            lw += topics.log_phi(zi, doc.tokens[pos]);
        }
        for &c in &counts {
            for i in 0..c {
                lw += (hp.alpha + i as f64).ln();
            }
        }
        let mut coupling = 0.0;
        for (topic, &c) in counts.iter().enumerate() {
            let freq = c as f64 / n_f;
            coupling += 2.0 * v.mean[topic] * freq - freq * freq;
        }
        lw += coupling / (2.0 * hp.sigma_eps2);
        if lw > max {
            max = lw;
        }
        log_weights.push(lw);

        // Odometer increment, position n-1 least significant.
        let mut pos = n;
        loop {
            if pos == 0 {
                break;
            }
            pos -= 1;
            z[pos] += 1;
            if z[pos] < k {
                break;
            }
            z[pos] = 0;
        }
        if z.iter().all(|&zi| zi == 0) {
            break;
        }
    }

    let mut total = 0.0;
    for lw in &mut log_weights {
        *lw = (*lw - max).exp();
        total += *lw;
    }
    for w in &mut log_weights {
        *w /= total;
    }
    Ok(log_weights)
}

// ---------------------------------------------------------------------------
// Generative sampler
// ---------------------------------------------------------------------------

/// Shape of a synthetic dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    /// Tokens per document.
    pub docs_len: usize,
    pub vocab_size: usize,
    pub ratings_count: usize,
    /// Extra documents generated from fresh topic proportions but never
    /// attached to an item; used for held-out likelihood evaluation.
    pub heldout_docs: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 200,
            items: 100,
            docs_len: 60,
            vocab_size: 120,
            ratings_count: 20_000,
            heldout_docs: 30,
            seed: 1,
        }
    }
}

/// Every latent drawn during generation, serializable as a test fixture.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruth {
    /// `K x D` topic-word distributions.
    pub phi: Vec<Vec<f64>>,
    /// Per-item topic proportions.
    pub theta: Vec<Vec<f64>>,
    /// Per-item token topic assignments.
    pub z: Vec<Vec<usize>>,
    pub user_factors: Vec<Vec<f64>>,
    pub item_factors: Vec<Vec<f64>>,
    pub item_offsets: Vec<Vec<f64>>,
    /// Topic proportions of the held-out documents.
    pub heldout_theta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub config: SynthConfig,
    pub hp: HyperParams,
    pub corpus: Corpus,
    pub events: Vec<RatingEvent>,
    pub heldout_tokens: Vec<Vec<usize>>,
    pub truth: GroundTruth,
}

fn sample_dirichlet(rng: &mut ChaCha20Rng, alpha: f64, dim: usize) -> Vec<f64> {
    let gamma = Gamma::<f64>::new(alpha, 1.0).expect("positive shape");
    loop {
        let draws: Vec<f64> = (0..dim).map(|_| gamma.sample(rng).max(1e-300)).collect();
        let total: f64 = draws.iter().sum();
        if total.is_finite() && total > 0.0 {
            return draws.into_iter().map(|x| x / total).collect();
        }
    }
}

fn sample_categorical(rng: &mut ChaCha20Rng, probs: &[f64]) -> usize {
    let draw: f64 = rng.random();
    let mut cum = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        cum += p;
        if draw < cum {
            return i;
        }
    }
    probs.len() - 1
}

/// Sample a full dataset from the generative model: topic-word distributions,
/// per-item proportions and tokens, Gaussian user factors, item factors
/// offset from the proportions, and noisy inner-product ratings. All the
/// `sigma_*2` hyperparameters are used as variances.
pub fn generate_synthetic(
    hp: &HyperParams,
    config: &SynthConfig,
) -> Result<SyntheticDataset, SynthError> {
    hp.validate()?;
    if config.users == 0 || config.items == 0 || config.docs_len == 0 || config.vocab_size == 0 {
        return Err(SynthError::InvalidSize(
            "users, items, docs_len, and vocab_size must be positive".into(),
        ));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(config.seed);
    let k = hp.k;
    let d = config.vocab_size;

    let phi: Vec<Vec<f64>> = (0..k)
        .map(|_| sample_dirichlet(&mut rng, hp.beta, d))
        .collect();

    let mut theta = Vec::with_capacity(config.items);
    let mut z_all = Vec::with_capacity(config.items);
    let mut docs: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for j in 0..config.items {
        let theta_j = sample_dirichlet(&mut rng, hp.alpha, k);
        let mut tokens = Vec::with_capacity(config.docs_len);
        let mut z_j = Vec::with_capacity(config.docs_len);
        for _ in 0..config.docs_len {
            let topic = sample_categorical(&mut rng, &theta_j);
            let word = sample_categorical(&mut rng, &phi[topic]);
            z_j.push(topic);
            tokens.push(word);
        }
        docs.insert(j as u64, tokens);
        theta.push(theta_j);
        z_all.push(z_j);
    }

    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let sigma_u = hp.sigma_u2.sqrt();
    let user_factors: Vec<Vec<f64>> = (0..config.users)
        .map(|_| (0..k).map(|_| sigma_u * std_normal.sample(&mut rng)).collect())
        .collect();

    let sigma_eps = hp.sigma_eps2.sqrt();
    let mut item_offsets = Vec::with_capacity(config.items);
    let mut item_factors = Vec::with_capacity(config.items);
    for theta_j in &theta {
        let eps: Vec<f64> = (0..k)
            .map(|_| sigma_eps * std_normal.sample(&mut rng))
            .collect();
        let v: Vec<f64> = theta_j.iter().zip(&eps).map(|(t, e)| t + e).collect();
        item_offsets.push(eps);
        item_factors.push(v);
    }

    let sigma_r = hp.sigma_r2.sqrt();
    let mut events = Vec::with_capacity(config.ratings_count);
    for t in 0..config.ratings_count {
        let i = rng.random_range(0..config.users);
        let j = rng.random_range(0..config.items);
        let mean: f64 = user_factors[i]
            .iter()
            .zip(&item_factors[j])
            .map(|(a, b)| a * b)
            .sum();
        let rating = mean + sigma_r * std_normal.sample(&mut rng);
        events.push(RatingEvent {
            user_id: i as u64,
            item_id: j as u64,
            rating,
            order_key: t as u64,
        });
    }

    let mut heldout_theta = Vec::with_capacity(config.heldout_docs);
    let mut heldout_tokens = Vec::with_capacity(config.heldout_docs);
    for _ in 0..config.heldout_docs {
        let theta_h = sample_dirichlet(&mut rng, hp.alpha, k);
        let tokens: Vec<usize> = (0..config.docs_len)
            .map(|_| {
                let topic = sample_categorical(&mut rng, &theta_h);
                sample_categorical(&mut rng, &phi[topic])
            })
            .collect();
        heldout_theta.push(theta_h);
        heldout_tokens.push(tokens);
    }

    let width = (d.saturating_sub(1)).to_string().len().max(1);
    let words: Vec<String> = (0..d).map(|w| format!("w{w:0width$}")).collect();
    let corpus = Corpus::from_token_docs(Vocabulary::from_ordered_words(words), docs);

    Ok(SyntheticDataset {
        config: config.clone(),
        hp: hp.clone(),
        corpus,
        events,
        heldout_tokens,
        truth: GroundTruth {
            phi,
            theta,
            z: z_all,
            user_factors,
            item_factors,
            item_offsets,
            heldout_theta,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::gibbs_conditional;

    #[test]
    fn oracle_with_no_observations_returns_prior() {
        let mean = vec![1.0, -2.0];
        let cov = vec![vec![2.0, 0.3], vec![0.3, 1.0]];
        let (m, c) = gaussian_posterior_oracle(&mean, &cov, &[], &[], &[]).unwrap();
        assert_eq!(m, mean);
        assert_eq!(c, cov);
    }

    #[test]
    fn oracle_textbook_one_dimensional_update() {
        // Prior N(0, 1), observation a = 1, r = 2, s = 1 -> posterior N(1, 0.5).
        let (m, c) =
            gaussian_posterior_oracle(&[0.0], &[vec![1.0]], &[vec![1.0]], &[2.0], &[1.0]).unwrap();
        assert!((m[0] - 1.0).abs() < 1e-14);
        assert!((c[0][0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn oracle_rejects_bad_inputs() {
        assert!(matches!(
            gaussian_posterior_oracle(
                &[0.0; 9],
                &vec![vec![0.0; 9]; 9],
                &[],
                &[],
                &[]
            ),
            Err(SynthError::DimensionTooLarge { .. })
        ));
        let asym = vec![vec![1.0, 0.5], vec![0.1, 1.0]];
        assert!(matches!(
            gaussian_posterior_oracle(&[0.0, 0.0], &asym, &[], &[], &[]),
            Err(SynthError::AsymmetricCovariance)
        ));
        let singular = vec![vec![1.0, 1.0], vec![1.0, 1.0]];
        assert!(matches!(
            gaussian_posterior_oracle(&[0.0, 0.0], &singular, &[vec![1.0, 0.0]], &[1.0], &[1.0]),
            Err(SynthError::SingularPrecision)
        ));
    }

    // Dual path: the Gauss-Jordan oracle must agree with an LU linear solve
    // from an unrelated implementation.
    #[test]
    fn oracle_matches_independent_linear_solve() {
        use nalgebra::{DMatrix, DVector};
        let mut rng = ChaCha20Rng::seed_from_u64(31);
        let norm = Normal::new(0.0, 1.0).unwrap();
        for _ in 0..50 {
            let k = 3;
            // Random SPD prior: A A^T + I.
            let a = DMatrix::from_fn(k, k, |_, _| norm.sample(&mut rng));
            let spd = &a * a.transpose() + DMatrix::identity(k, k);
            let prior_cov: Vec<Vec<f64>> =
                (0..k).map(|i| (0..k).map(|j| spd[(i, j)]).collect()).collect();
            let prior_mean: Vec<f64> = (0..k).map(|_| norm.sample(&mut rng)).collect();
            let obs: Vec<Vec<f64>> = (0..2)
                .map(|_| (0..k).map(|_| norm.sample(&mut rng)).collect())
                .collect();
            let vals = vec![norm.sample(&mut rng), norm.sample(&mut rng)];
            let vars = vec![0.5 + rng.random::<f64>(), 0.5 + rng.random::<f64>()];

            let (mean, cov) =
                gaussian_posterior_oracle(&prior_mean, &prior_cov, &obs, &vals, &vars).unwrap();

            let prior_inv = spd.clone().try_inverse().unwrap();
            let mut precision = prior_inv.clone();
            let mut info = &prior_inv * DVector::from_vec(prior_mean.clone());
            for (m, a_vec) in obs.iter().enumerate() {
                let av = DVector::from_vec(a_vec.clone());
                precision += &av * av.transpose() / vars[m];
                info += av * (vals[m] / vars[m]);
            }
            let lu = precision.clone().lu();
            let mean_ref = lu.solve(&info).unwrap();
            for i in 0..k {
                assert!((mean[i] - mean_ref[i]).abs() < 1e-12);
                let col = DVector::from_fn(k, |r, _| if r == i { 1.0 } else { 0.0 });
                let cov_col = lu.solve(&col).unwrap();
                for j in 0..k {
                    assert!((cov[j][i] - cov_col[j]).abs() < 1e-12);
                }
            }
        }
    }

    fn doc_with_assignments(tokens: Vec<usize>, z: Vec<usize>, k: usize, vocab: usize) -> Document {
        let mut doc = Document::new(1, tokens, k, vocab, 5).unwrap();
        let mut counts = vec![0u32; k];
        for &zi in &z {
            counts[zi] += 1;
        }
        doc.z = z;
        doc.topic_counts = counts;
        doc.zbar = doc.frequency_vector();
        doc
    }

    #[test]
    fn enumeration_single_site_equals_conditional() {
        let mut hp = HyperParams::new(3);
        hp.alpha = 0.4;
        hp.sigma_eps2 = 0.6;
        let mut topics = TopicState::new(3, 4, hp.beta);
        let seed_doc = doc_with_assignments(vec![0, 1, 2, 3, 1], vec![0, 1, 2, 0, 1], 3, 4);
        topics.add_document(&seed_doc);
        topics.refresh_all_rows();
        let doc = doc_with_assignments(vec![2], vec![0], 3, 4);
        let v = GaussianFactor::new(vec![0.8, -0.1, 0.3], vec![1.0; 3]).unwrap();

        let joint = gibbs_enumeration_oracle(&doc, &v, &topics, &hp).unwrap();
        let conditional = gibbs_conditional(&doc, 0, &v, &topics, &hp).unwrap();
        assert_eq!(joint.len(), 3);
        for (a, b) in joint.iter().zip(&conditional) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn enumeration_symmetric_state_has_uniform_site_marginals() {
        let mut hp = HyperParams::new(2);
        hp.alpha = 0.3;
        hp.sigma_eps2 = 0.9;
        // Empty topic table: uniform word estimates; equal item mean.
        let topics = TopicState::new(2, 3, hp.beta);
        let doc = doc_with_assignments(vec![0, 1, 2], vec![0, 1, 0], 2, 3);
        let v = GaussianFactor::new(vec![0.2, 0.2], vec![1.0, 1.0]).unwrap();
        let joint = gibbs_enumeration_oracle(&doc, &v, &topics, &hp).unwrap();
        let total: f64 = joint.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);

        // Marginal of each site must be uniform over topics.
        let n = doc.len();
        let k = 2usize;
        for pos in 0..n {
            let mut marginal = vec![0.0; k];
            for (idx, &p) in joint.iter().enumerate() {
                let digit = (idx / k.pow((n - 1 - pos) as u32)) % k;
                marginal[digit] += p;
            }
            for m in &marginal {
                assert!((m - 0.5).abs() < 1e-12, "site {pos}: {marginal:?}");
            }
        }
    }

    #[test]
    fn enumeration_rejects_huge_state_spaces() {
        let hp = HyperParams::new(8);
        let topics = TopicState::new(8, 4, hp.beta);
        let doc = Document::new(1, vec![0; 12], 8, 4, 3).unwrap();
        let v = GaussianFactor::new(vec![0.0; 8], vec![1.0; 8]).unwrap();
        assert!(matches!(
            gibbs_enumeration_oracle(&doc, &v, &topics, &hp),
            Err(SynthError::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn synthetic_item_factor_collapses_to_theta_when_offset_vanishes() {
        let mut hp = HyperParams::new(3);
        hp.sigma_eps2 = 1e-18;
        let config = SynthConfig {
            users: 5,
            items: 8,
            docs_len: 10,
            vocab_size: 12,
            ratings_count: 20,
            heldout_docs: 0,
            seed: 3,
        };
        let data = generate_synthetic(&hp, &config).unwrap();
        for (v, theta) in data.truth.item_factors.iter().zip(&data.truth.theta) {
            for (a, b) in v.iter().zip(theta) {
                assert!((a - b).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn synthetic_rating_noise_is_centered() {
        let hp = HyperParams::new(4);
        let config = SynthConfig {
            users: 50,
            items: 40,
            docs_len: 5,
            vocab_size: 30,
            ratings_count: 100_000,
            heldout_docs: 0,
            seed: 11,
        };
        let data = generate_synthetic(&hp, &config).unwrap();
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for ev in &data.events {
            let mean: f64 = data.truth.user_factors[ev.user_id as usize]
                .iter()
                .zip(&data.truth.item_factors[ev.item_id as usize])
                .map(|(a, b)| a * b)
                .sum();
            let resid = ev.rating - mean;
            sum += resid;
            sum_sq += resid * resid;
        }
        let n = data.events.len() as f64;
        let mean_resid = sum / n;
        let se = (sum_sq / n - mean_resid * mean_resid).sqrt() / n.sqrt();
        assert!(
            mean_resid.abs() < 4.0 * se,
            "residual mean {mean_resid} vs se {se}"
        );
    }

    // Distributional check: per-document word frequencies must match the
    // mixture theta' Phi within a generous multinomial band.
    #[test]
    fn synthetic_word_marginals_match_mixture() {
        let mut hp = HyperParams::new(3);
        hp.alpha = 0.5;
        hp.beta = 0.5;
        let config = SynthConfig {
            users: 2,
            items: 2,
            docs_len: 60_000,
            vocab_size: 10,
            ratings_count: 4,
            heldout_docs: 0,
            seed: 17,
        };
        let data = generate_synthetic(&hp, &config).unwrap();
        for j in 0..config.items {
            let tokens = data.corpus.tokens(j as u64).unwrap();
            let mut observed = vec![0.0; config.vocab_size];
            for &w in tokens {
                observed[w] += 1.0;
            }
            let n = tokens.len() as f64;
            for w in 0..config.vocab_size {
                let expected: f64 = (0..hp.k)
                    .map(|k| data.truth.theta[j][k] * data.truth.phi[k][w])
                    .sum();
                let freq = observed[w] / n;
                let band = 5.0 * (expected * (1.0 - expected) / n).sqrt() + 1e-4;
                assert!(
                    (freq - expected).abs() < band,
                    "doc {j} word {w}: freq {freq} expected {expected} band {band}"
                );
            }
        }
    }

    #[test]
    fn synthetic_rejects_zero_sizes() {
        let hp = HyperParams::new(2);
        let config = SynthConfig {
            users: 0,
            ..SynthConfig::default()
        };
        assert!(generate_synthetic(&hp, &config).is_err());
    }
}
