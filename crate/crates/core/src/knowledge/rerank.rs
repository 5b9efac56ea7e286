use super::{Hit, Index};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("embedding provider failed: {0}")]
pub struct EmbedError(pub String);

/// Text-to-vector service used for the optional rerank stage.
pub trait Embedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<Vec<f64>>, EmbedError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reranked {
    pub hits: Vec<Hit>,
    /// Set when the provider failed and the BM25 order was kept.
    pub degraded: bool,
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Stable reorder of `candidates` by descending cosine similarity to the
/// query. Fails open: any provider problem returns the input order with
/// `degraded` set.
pub fn embed_rerank(index: &Index, query: &str, candidates: &[Hit], provider: &dyn Embedder) -> Reranked {
    let fallback = || Reranked {
        hits: candidates.to_vec(),
        degraded: true,
    };
    let mut texts = vec![query];
    for hit in candidates {
        match index.chunk(&hit.chunk_id) {
            Some(c) => texts.push(c.text.as_str()),
            None => return fallback(),
        }
    }
    let vectors = match provider.embed(&texts) {
        Ok(v) if v.len() == texts.len() => v,
        _ => return fallback(),
    };
    let mut scored: Vec<(f64, &Hit)> = candidates
        .iter()
        .zip(&vectors[1..])
        .map(|(h, v)| (cosine(&vectors[0], v), h))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    Reranked {
        hits: scored.into_iter().map(|(_, h)| h.clone()).collect(),
        degraded: false,
    }
}
