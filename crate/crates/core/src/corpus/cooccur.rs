use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{CorpusError, TokenizedCorpus};
use crate::parallel;

/// Frequency-ordered vocabulary (descending count, then lexicographic).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, u32>,
    min_count: u64,
}

impl Vocabulary {
    pub fn from_counts(mut pairs: Vec<(String, u64)>, min_count: u64) -> Result<Self, CorpusError> {
        pairs.retain(|(_, c)| *c >= min_count);
        if pairs.is_empty() {
            return Err(CorpusError::EmptyVocabulary(min_count));
        }
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let index = pairs
            .iter()
            .enumerate()
            .map(|(i, (t, _))| (t.clone(), i as u32))
            .collect();
        let (tokens, counts) = pairs.into_iter().unzip();
        Ok(Vocabulary {
            tokens,
            counts,
            index,
            min_count,
        })
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn min_count(&self) -> u64 {
        self.min_count
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }
}

pub fn build_vocab(corpus: &TokenizedCorpus, min_count: u64) -> Result<Vocabulary, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for t in corpus.documents.iter().flatten() {
        *counts.entry(t.as_str()).or_default() += 1;
    }
    let pairs = counts.into_iter().map(|(t, c)| (t.to_string(), c)).collect();
    Vocabulary::from_counts(pairs, min_count)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    InverseDistance,
    Flat,
}

/// Sparse symmetric co-occurrence weights, sorted by (row, column).
#[derive(Debug, Clone)]
pub struct CooccurrenceTable {
    vocab: Vocabulary,
    entries: Vec<(u32, u32, f64)>,
}

impl CooccurrenceTable {
    /// Builds a table from explicit entries; weights must be positive and
    /// indices inside the vocabulary.
    pub fn from_entries(vocab: Vocabulary, mut entries: Vec<(u32, u32, f64)>) -> Result<Self, CorpusError> {
        let n = vocab.len() as u32;
        if let Some(bad) = entries
            .iter()
            .find(|(i, j, w)| *i >= n || *j >= n || w.is_nan() || *w <= 0.0)
        {
            return Err(CorpusError::InvalidConfig(format!(
                "bad co-occurrence entry {bad:?}"
            )));
        }
        entries.sort_by_key(|&(i, j, _)| (i, j));
        entries.dedup_by(|later, earlier| {
            let same = (later.0, later.1) == (earlier.0, earlier.1);
            if same {
                earlier.2 += later.2;
            }
            same
        });
        Ok(CooccurrenceTable { vocab, entries })
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn entries(&self) -> &[(u32, u32, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.entries
            .binary_search_by_key(&(i, j), |&(a, b, _)| (a, b))
            .map_or(0.0, |k| self.entries[k].2)
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.2).sum()
    }
}

// Documents per counting shard, independent of the worker count.
const SHARD_DOCS: usize = 512;

fn count_shard(
    docs: &[Vec<String>],
    vocab: &Vocabulary,
    window: usize,
    weighting: Weighting,
) -> HashMap<(u32, u32), f64> {
    let mut counts = HashMap::new();
    let mut ids = Vec::new();
    for doc in docs {
        ids.clear();
        ids.extend(doc.iter().filter_map(|t| vocab.get(t)));
        for (p, &left) in ids.iter().enumerate() {
            for (dist, &right) in ids[p + 1..].iter().take(window).enumerate() {
                let w = match weighting {
                    Weighting::InverseDistance => 1.0 / (dist + 1) as f64,
                    Weighting::Flat => 1.0,
                };
                *counts.entry((left, right)).or_insert(0.0) += w;
                *counts.entry((right, left)).or_insert(0.0) += w;
            }
        }
    }
    counts
}

/// Counts every pair of in-vocabulary tokens at most `window` positions apart
/// (out-of-vocabulary tokens are removed first) in both orders.
pub fn count_cooccurrence(
    corpus: &TokenizedCorpus,
    vocab: &Vocabulary,
    window: usize,
    weighting: Weighting,
) -> Result<CooccurrenceTable, CorpusError> {
    if window == 0 {
        return Err(CorpusError::InvalidWindow);
    }
    let shards: Vec<&[Vec<String>]> = corpus.documents.chunks(SHARD_DOCS).collect();
    let partial = parallel::map(&shards, |docs| count_shard(docs, vocab, window, weighting));
    let mut merged: HashMap<(u32, u32), f64> = HashMap::new();
    for shard in partial {
        for (key, w) in shard {
            *merged.entry(key).or_insert(0.0) += w;
        }
    }
    let mut entries: Vec<(u32, u32, f64)> = merged.into_iter().map(|((i, j), w)| (i, j, w)).collect();
    entries.sort_by_key(|&(i, j, _)| (i, j));
    Ok(CooccurrenceTable {
        vocab: vocab.clone(),
        entries,
    })
}
