use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::chunk::DocChunk;
use super::tokenize::terms;
use super::KnowledgeError;

pub const DEFAULT_K1: f64 = 1.2;
pub const DEFAULT_B: f64 = 0.75;

/// Immutable BM25 index over a set of chunks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Index {
    chunks: Vec<DocChunk>,
    doc_freq: BTreeMap<String, u32>,
    avg_chunk_length: f64,
    k1: f64,
    b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub chunk_id: String,
    pub score: f64,
}

impl Index {
    pub fn build(chunks: Vec<DocChunk>) -> Result<Self, KnowledgeError> {
        let mut seen = BTreeSet::new();
        let mut doc_freq = BTreeMap::new();
        for chunk in &chunks {
            if !seen.insert(chunk.chunk_id.as_str()) {
                return Err(KnowledgeError::DuplicateChunkId(chunk.chunk_id.clone()));
            }
            for term in chunk.term_counts.keys() {
                *doc_freq.entry(term.clone()).or_insert(0) += 1;
            }
        }
        let total: u64 = chunks.iter().map(|c| u64::from(c.length_terms)).sum();
        let avg_chunk_length = if chunks.is_empty() {
            0.0
        } else {
            total as f64 / chunks.len() as f64
        };
        Ok(Self {
            chunks,
            doc_freq,
            avg_chunk_length,
            k1: DEFAULT_K1,
            b: DEFAULT_B,
        })
    }

    pub fn chunks(&self) -> &[DocChunk] {
        &self.chunks
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn chunk(&self, chunk_id: &str) -> Option<&DocChunk> {
        self.chunks.iter().find(|c| c.chunk_id == chunk_id)
    }

    pub fn doc_freq(&self, term: &str) -> u32 {
        self.doc_freq.get(term).copied().unwrap_or(0)
    }

    pub fn avg_chunk_length(&self) -> f64 {
        self.avg_chunk_length
    }

    pub fn k1(&self) -> f64 {
        self.k1
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// `ln(1 + (N - df + 0.5) / (df + 0.5))`, never negative.
    pub fn idf(&self, term: &str) -> f64 {
        let n = self.chunks.len() as f64;
        let df = f64::from(self.doc_freq(term));
        (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
    }

    /// Okapi BM25 of the chunk at `position` for the given query terms.
    /// Repeated query terms count once per occurrence.
    pub fn bm25_score<S: AsRef<str>>(&self, query_terms: &[S], position: usize) -> f64 {
        let chunk = &self.chunks[position];
        let norm = self.k1 * (1.0 - self.b + self.b * f64::from(chunk.length_terms) / self.avg_chunk_length);
        query_terms
            .iter()
            .map(|t| {
                let tf = f64::from(chunk.tf(t.as_ref()));
                if tf == 0.0 {
                    0.0
                } else {
                    self.idf(t.as_ref()) * (self.k1 + 1.0) * tf / (tf + norm)
                }
            })
            .sum()
    }

    /// Top `k` chunks by BM25, best first, ties by ascending chunk id.
    /// Chunks scoring zero are never returned.
    pub fn retrieve(&self, query: &str, k: usize) -> Vec<Hit> {
        let query_terms = terms(query);
        if query_terms.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut candidates: BTreeSet<usize> = BTreeSet::new();
        for (pos, chunk) in self.chunks.iter().enumerate() {
            if query_terms.iter().any(|t| chunk.term_counts.contains_key(t)) {
                candidates.insert(pos);
            }
        }
        let mut hits: Vec<Hit> = candidates
            .into_iter()
            .map(|pos| Hit {
                chunk_id: self.chunks[pos].chunk_id.clone(),
                score: self.bm25_score(&query_terms, pos),
            })
            .filter(|h| h.score > 0.0)
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.chunk_id.cmp(&b.chunk_id)));
        hits.truncate(k);
        hits
    }
}
