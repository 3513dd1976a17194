//! Data ingestion: rating files, item text corpora, vocabulary construction,
//! and shuffled train/validation/test stream splits.
//!
//! Formats:
//! - ratings: `user::item::rating::timestamp`, one event per line;
//! - documents: UTF-8 TSV `item_id<TAB>text`, one item per line;
//! - corpus manifest: JSON with a `format_version` field.
//!
//! Ingestion is pure and deterministic: identical inputs and options produce
//! byte-identical outputs (vocabulary ties break lexicographically).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::RatingEvent;

pub const MANIFEST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("duplicate item id {0} in document file")]
    DuplicateItem(u64),
    #[error("corpus is empty after filtering")]
    EmptyCorpus,
    #[error("need at least {min} events to split, got {got}")]
    TooFewEvents { min: usize, got: usize },
}

/// Compact English stopword list applied before vocabulary selection.
pub const STOPWORDS: &[&str] = &[
    "a", "about", "above", "after", "again", "against", "all", "am", "an", "and", "any", "are",
    "as", "at", "be", "because", "been", "before", "being", "below", "between", "both", "but",
    "by", "can", "cannot", "could", "did", "do", "does", "doing", "down", "during", "each",
    "few", "for", "from", "further", "had", "has", "have", "having", "he", "her", "here", "hers",
    "herself", "him", "himself", "his", "how", "i", "if", "in", "into", "is", "it", "its",
    "itself", "just", "me", "more", "most", "my", "myself", "no", "nor", "not", "now", "of",
    "off", "on", "once", "only", "or", "other", "our", "ours", "ourselves", "out", "over", "own",
    "same", "she", "should", "so", "some", "such", "than", "that", "the", "their", "theirs",
    "them", "themselves", "then", "there", "these", "they", "this", "those", "through", "to",
    "too", "under", "until", "up", "very", "was", "we", "were", "what", "when", "where", "which",
    "while", "who", "whom", "why", "will", "with", "would", "you", "your", "yours", "yourself",
    "yourselves",
];

/// Text preprocessing options. Tokenization lowercases and splits on
/// non-alphanumeric characters; the remaining knobs control filtering and
/// vocabulary trimming.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusOptions {
    /// Minimum token length kept after lowercasing.
    pub min_token_len: usize,
    /// Drop tokens from the embedded stopword list.
    pub remove_stopwords: bool,
    /// Drop words appearing in fewer than this many documents.
    pub min_df: usize,
    /// Keep at most this many words, ranked by tf-idf with lexicographic
    /// tie-breaking.
    pub max_vocab: usize,
}

impl Default for CorpusOptions {
    fn default() -> Self {
        CorpusOptions {
            min_token_len: 2,
            remove_stopwords: true,
            min_df: 2,
            max_vocab: 8000,
        }
    }
}

/// Dense word <-> id bijection; ids are assigned in lexicographic word order.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Vocabulary {
    words: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_words(mut words: Vec<String>) -> Self {
        words.sort();
        words.dedup();
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    /// Synthetic corpora name words by id; the ordering is preserved as-is.
    pub fn from_ordered_words(words: Vec<String>) -> Self {
        let index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Vocabulary { words, index }
    }

    pub fn id(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn rebuild_index(&mut self) {
        self.index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub vocab_size: usize,
    pub total_tokens: u64,
    /// Documents dropped because nothing survived filtering.
    pub dropped_empty_docs: usize,
    pub mean_doc_len: f64,
}

/// Tokenized item corpus with its vocabulary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Corpus {
    pub vocabulary: Vocabulary,
    pub docs: BTreeMap<u64, Vec<usize>>,
    pub stats: CorpusStats,
}

impl Corpus {
    /// Assemble a corpus from already-tokenized documents (synthetic data).
    pub fn from_token_docs(vocabulary: Vocabulary, docs: BTreeMap<u64, Vec<usize>>) -> Self {
        let total_tokens: u64 = docs.values().map(|d| d.len() as u64).sum();
        let stats = CorpusStats {
            documents: docs.len(),
            vocab_size: vocabulary.len(),
            total_tokens,
            dropped_empty_docs: 0,
            mean_doc_len: if docs.is_empty() {
                0.0
            } else {
                total_tokens as f64 / docs.len() as f64
            },
        };
        Corpus {
            vocabulary,
            docs,
            stats,
        }
    }

    pub fn tokens(&self, item_id: u64) -> Option<&[usize]> {
        self.docs.get(&item_id).map(|v| v.as_slice())
    }

    /// JSON manifest describing the corpus and the options that produced it.
    pub fn manifest_json(&self, options: &CorpusOptions) -> String {
        let options_json = serde_json::to_string(options).expect("options serialize");
        let mut hasher = Sha256::new();
        hasher.update(options_json.as_bytes());
        let options_hash: String = hasher
            .finalize()
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect();
        let manifest = serde_json::json!({
            "format_version": MANIFEST_FORMAT_VERSION,
            "options": options,
            "options_sha256": options_hash,
            "stats": self.stats,
            "vocabulary": self.vocabulary.words(),
        });
        serde_json::to_string_pretty(&manifest).expect("manifest serialize")
    }

    /// Tokenize free text against this corpus's fixed vocabulary.
    pub fn tokenize_with_vocabulary(&self, text: &str, options: &CorpusOptions) -> Vec<usize> {
        tokenize(text, options)
            .into_iter()
            .filter_map(|w| self.vocabulary.id(&w))
            .collect()
    }
}

fn tokenize(text: &str, options: &CorpusOptions) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.len() >= options.min_token_len)
        .filter(|t| !options.remove_stopwords || !STOPWORDS.contains(t))
        .map(str::to_owned)
        .collect()
}

/// Parsing mode for rating files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseMode {
    /// Count and skip malformed lines.
    Lenient,
    /// Fail on the first malformed line, reporting its number.
    Strict,
}

#[derive(Debug, Clone, Default)]
pub struct ParsedRatings {
    pub events: Vec<RatingEvent>,
    pub skipped_lines: usize,
}

/// Parse a `user::item::rating::timestamp` rating file in file order.
pub fn parse_ratings(path: &Path, mode: ParseMode) -> Result<ParsedRatings, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut out = ParsedRatings::default();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_rating_line(&line) {
            Some(event) => out.events.push(event),
            None => {
                if mode == ParseMode::Strict {
                    return Err(IngestError::Parse {
                        line: line_no,
                        message: format!("malformed rating line: {line:?}"),
                    });
                }
                out.skipped_lines += 1;
            }
        }
    }
    Ok(out)
}

fn parse_rating_line(line: &str) -> Option<RatingEvent> {
    let mut parts = line.split("::");
    let user_id = parts.next()?.trim().parse::<u64>().ok()?;
    let item_id = parts.next()?.trim().parse::<u64>().ok()?;
    let rating = parts.next()?.trim().parse::<f64>().ok()?;
    let order_key = parts.next()?.trim().parse::<u64>().ok()?;
    if parts.next().is_some() || !rating.is_finite() {
        return None;
    }
    Some(RatingEvent {
        user_id,
        item_id,
        rating,
        order_key,
    })
}

/// Build a corpus from a TSV document file.
pub fn build_corpus(path: &Path, options: &CorpusOptions) -> Result<Corpus, IngestError> {
    let file = std::fs::File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let reader = BufReader::new(file);
    let mut raw_docs: Vec<(u64, String)> = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|source| IngestError::Io {
            path: path.display().to_string(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let (id_part, text) = line.split_once('\t').ok_or_else(|| IngestError::Parse {
            line: line_no,
            message: "expected item_id<TAB>text".into(),
        })?;
        let item_id = id_part
            .trim()
            .parse::<u64>()
            .map_err(|e| IngestError::Parse {
                line: line_no,
                message: format!("bad item id {id_part:?}: {e}"),
            })?;
        raw_docs.push((item_id, text.to_owned()));
    }
    corpus_from_texts(raw_docs, options)
}

/// Corpus construction from in-memory (item, text) pairs.
pub fn corpus_from_texts(
    raw_docs: Vec<(u64, String)>,
    options: &CorpusOptions,
) -> Result<Corpus, IngestError> {
    let mut tokenized: BTreeMap<u64, Vec<String>> = BTreeMap::new();
    for (item_id, text) in raw_docs {
        if tokenized.contains_key(&item_id) {
            return Err(IngestError::DuplicateItem(item_id));
        }
        tokenized.insert(item_id, tokenize(&text, options));
    }

    // Document frequency and total counts over the filtered tokens.
    let mut df: BTreeMap<&str, usize> = BTreeMap::new();
    let mut tf: BTreeMap<&str, u64> = BTreeMap::new();
    for tokens in tokenized.values() {
        let mut seen = BTreeSet::new();
        for t in tokens {
            *tf.entry(t).or_insert(0) += 1;
            if seen.insert(t.as_str()) {
                *df.entry(t).or_insert(0) += 1;
            }
        }
    }
    let doc_count = tokenized.len().max(1) as f64;
    let mut candidates: Vec<(&str, f64)> = df
        .iter()
        .filter(|(_, &d)| d >= options.min_df)
        .map(|(&w, &d)| {
            let idf = (doc_count / d as f64).ln();
            (w, tf[w] as f64 * idf)
        })
        .collect();
    if candidates.len() > options.max_vocab {
        // Highest tf-idf first, lexicographic word order on ties.
        candidates.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(b.0)));
        candidates.truncate(options.max_vocab);
    }
    let vocabulary =
        Vocabulary::from_words(candidates.into_iter().map(|(w, _)| w.to_owned()).collect());

    let mut docs: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut dropped_empty = 0usize;
    for (item_id, tokens) in &tokenized {
        let ids: Vec<usize> = tokens.iter().filter_map(|t| vocabulary.id(t)).collect();
        if ids.is_empty() {
            dropped_empty += 1;
            log::debug!("dropping item {item_id}: empty after filtering");
        } else {
            docs.insert(*item_id, ids);
        }
    }
    if docs.is_empty() {
        return Err(IngestError::EmptyCorpus);
    }
    let total_tokens: u64 = docs.values().map(|d| d.len() as u64).sum();
    let stats = CorpusStats {
        documents: docs.len(),
        vocab_size: vocabulary.len(),
        total_tokens,
        dropped_empty_docs: dropped_empty,
        mean_doc_len: total_tokens as f64 / docs.len() as f64,
    };
    Ok(Corpus {
        vocabulary,
        docs,
        stats,
    })
}

/// Shuffled stream split: 90% training pool and 10% test, with 5% of the
/// pool drawn off as the validation set (train and validation are disjoint).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StreamSplit {
    pub train: Vec<RatingEvent>,
    pub validation: Vec<RatingEvent>,
    pub test: Vec<RatingEvent>,
    pub seed: u64,
}

impl StreamSplit {
    pub fn total_events(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// Deterministically shuffle and split a rating stream.
pub fn split_stream(events: &[RatingEvent], seed: u64) -> Result<StreamSplit, IngestError> {
    const MIN_EVENTS: usize = 20;
    if events.len() < MIN_EVENTS {
        return Err(IngestError::TooFewEvents {
            min: MIN_EVENTS,
            got: events.len(),
        });
    }
    let mut shuffled = events.to_vec();
    let mut rng = ChaCha20Rng::seed_from_u64(crate::seeding::derive_seed(
        seed,
        crate::seeding::tag::SHUFFLE,
        0,
    ));
    shuffled.shuffle(&mut rng);

    let n = shuffled.len();
    let n_test = ((n as f64) * 0.10).round() as usize;
    let pool = n - n_test;
    let n_val = ((pool as f64) * 0.05).round() as usize;

    let test = shuffled.split_off(pool);
    let validation = shuffled.split_off(pool - n_val);
    Ok(StreamSplit {
        train: shuffled,
        validation,
        test,
        seed,
    })
}
