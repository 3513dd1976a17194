//! Topic-model state: per-item documents with hard topic assignments and the
//! global topic-word count table with its smoothed point estimates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ModelError;

/// Tokenized item text with its current topic assignments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub item_id: u64,
    /// Word ids in `[0, D)`.
    pub tokens: Vec<usize>,
    /// Topic assignment per token, in `[0, K)`.
    pub z: Vec<usize>,
    /// Per-topic assignment counts; sums to `tokens.len()`.
    pub topic_counts: Vec<u32>,
    /// Latest estimate of the empirical topic-frequency vector.
    pub zbar: Vec<f64>,
    /// Private sampling stream. Keeping the stream per document makes events
    /// on disjoint documents commute.
    pub rng: ChaCha8Rng,
}

impl Document {
    /// Register a document with uniformly random initial assignments drawn
    /// from its own seeded stream.
    pub fn new(
        item_id: u64,
        tokens: Vec<usize>,
        k: usize,
        vocab_size: usize,
        seed: u64,
    ) -> Result<Self, ModelError> {
        if tokens.is_empty() {
            return Err(ModelError::EmptyDocument);
        }
        if let Some(&bad) = tokens.iter().find(|&&w| w >= vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                token: bad,
                vocab: vocab_size,
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z: Vec<usize> = tokens.iter().map(|_| rng.random_range(0..k)).collect();
        let mut topic_counts = vec![0u32; k];
        for &zi in &z {
            topic_counts[zi] += 1;
        }
        let n = tokens.len() as f64;
        let zbar = topic_counts.iter().map(|&c| c as f64 / n).collect();
        Ok(Document {
            item_id,
            tokens,
            z,
            topic_counts,
            zbar,
            rng,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Current empirical topic-frequency vector computed from the counts.
    pub fn frequency_vector(&self) -> Vec<f64> {
        let n = self.len() as f64;
        self.topic_counts.iter().map(|&c| c as f64 / n).collect()
    }

    /// Counts must aggregate the assignments exactly.
    pub fn counts_consistent(&self) -> bool {
        let mut counts = vec![0u32; self.topic_counts.len()];
        for &zi in &self.z {
            if zi >= counts.len() {
                return false;
            }
            counts[zi] += 1;
        }
        counts == self.topic_counts
    }
}

/// Global topic-word counts and the smoothed point estimates derived from
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicState {
    k: usize,
    vocab_size: usize,
    beta: f64,
    /// Flattened `K x D` count matrix, row-major.
    word_topic_counts: Vec<u32>,
    /// Per-topic totals, consistent with the row sums.
    topic_totals: Vec<u64>,
    /// Smoothed point estimate of the topic-word distributions, `K x D`.
    phi: Vec<f64>,
    /// Element-wise log of `phi`.
    log_phi: Vec<f64>,
}

impl TopicState {
    pub fn new(k: usize, vocab_size: usize, beta: f64) -> Self {
        let mut state = TopicState {
            k,
            vocab_size,
            beta,
            word_topic_counts: vec![0; k * vocab_size],
            topic_totals: vec![0; k],
            phi: vec![0.0; k * vocab_size],
            log_phi: vec![0.0; k * vocab_size],
        };
        state.refresh_all_rows();
        state
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn count(&self, topic: usize, word: usize) -> u32 {
        self.word_topic_counts[topic * self.vocab_size + word]
    }

    pub fn topic_total(&self, topic: usize) -> u64 {
        self.topic_totals[topic]
    }

    pub fn phi(&self, topic: usize, word: usize) -> f64 {
        self.phi[topic * self.vocab_size + word]
    }

    pub fn phi_row(&self, topic: usize) -> &[f64] {
        &self.phi[topic * self.vocab_size..(topic + 1) * self.vocab_size]
    }

    pub fn log_phi(&self, topic: usize, word: usize) -> f64 {
        self.log_phi[topic * self.vocab_size + word]
    }

    /// Flat `K x D` copy of the point estimates.
    pub fn phi_matrix(&self) -> Vec<f64> {
        self.phi.clone()
    }

    /// Add a document's assignment counts (registration).
    pub fn add_document(&mut self, doc: &Document) {
        for (&w, &zi) in doc.tokens.iter().zip(&doc.z) {
            self.word_topic_counts[zi * self.vocab_size + w] += 1;
            self.topic_totals[zi] += 1;
        }
    }

    /// Remove a document's assignment counts.
    pub fn remove_document(&mut self, doc: &Document) {
        for (&w, &zi) in doc.tokens.iter().zip(&doc.z) {
            self.word_topic_counts[zi * self.vocab_size + w] -= 1;
            self.topic_totals[zi] -= 1;
        }
    }

    /// Move one token's count from `old_topic` to `new_topic`. Returns
    /// whether anything changed.
    pub fn reassign(&mut self, word: usize, old_topic: usize, new_topic: usize) -> bool {
        if old_topic == new_topic {
            return false;
        }
        self.word_topic_counts[old_topic * self.vocab_size + word] -= 1;
        self.topic_totals[old_topic] -= 1;
        self.word_topic_counts[new_topic * self.vocab_size + word] += 1;
        self.topic_totals[new_topic] += 1;
        true
    }

    /// Recompute `phi` and `log_phi` for one topic row from the counts:
    /// `phi[k][w] = (C_k^w + beta) / (sum_w C_k^w + D*beta)`.
    pub fn refresh_row(&mut self, topic: usize) {
        let denom = self.topic_totals[topic] as f64 + self.vocab_size as f64 * self.beta;
        let row = topic * self.vocab_size;
        for w in 0..self.vocab_size {
            let p = (self.word_topic_counts[row + w] as f64 + self.beta) / denom;
            self.phi[row + w] = p;
            self.log_phi[row + w] = p.ln();
        }
    }

    pub fn refresh_all_rows(&mut self) {
        for topic in 0..self.k {
            self.refresh_row(topic);
        }
    }

    /// Totals must equal row sums; counts of the provided documents must
    /// aggregate to the global table.
    pub fn consistent_with<'a>(&self, docs: impl Iterator<Item = &'a Document>) -> bool {
        let mut expect = vec![0u64; self.k * self.vocab_size];
        for doc in docs {
            for (&w, &zi) in doc.tokens.iter().zip(&doc.z) {
                expect[zi * self.vocab_size + w] += 1;
            }
        }
        for (i, &c) in self.word_topic_counts.iter().enumerate() {
            if expect[i] != c as u64 {
                return false;
            }
        }
        for topic in 0..self.k {
            let row_sum: u64 = self.word_topic_counts
                [topic * self.vocab_size..(topic + 1) * self.vocab_size]
                .iter()
                .map(|&c| c as u64)
                .sum();
            if row_sum != self.topic_totals[topic] {
                return false;
            }
        }
        true
    }
}

/// Smoothed topic proportions from per-document counts:
/// `theta[k] = (C_j^k + alpha) / (N_j + K*alpha)`.
pub fn theta_from_counts(topic_counts: &[u32], alpha: f64) -> Vec<f64> {
    let n: u64 = topic_counts.iter().map(|&c| c as u64).sum();
    let denom = n as f64 + topic_counts.len() as f64 * alpha;
    topic_counts
        .iter()
        .map(|&c| (c as f64 + alpha) / denom)
        .collect()
}
