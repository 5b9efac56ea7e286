//! Knowledge retrieval: markdown chunking, a BM25 index and an optional
//! embedding rerank stage.

mod chunk;
mod index;
mod rerank;
mod tokenize;

use std::path::Path;

pub use chunk::{chunk_document, window_starts, DocChunk, OVERLAP_TERMS, WINDOW_TERMS};
pub use index::{Hit, Index, DEFAULT_B, DEFAULT_K1};
pub use rerank::{cosine, embed_rerank, EmbedError, Embedder, Reranked};
pub use tokenize::{terms, tokenize, Token};

/// Doc id of the operations manual compiled into the crate.
pub const SHIPPED_MANUAL_ID: &str = "troubleshooting.md";
const SHIPPED_MANUAL: &str = include_str!("../../assets/knowledge/troubleshooting.md");

#[derive(Debug, thiserror::Error)]
pub enum KnowledgeError {
    #[error("document {0} has no terms")]
    EmptyDocument(String),
    #[error("duplicate chunk id {0}")]
    DuplicateChunkId(String),
    #[error("failed to read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed index file: {0}")]
    Format(String),
}

pub fn shipped_manual() -> &'static str {
    SHIPPED_MANUAL
}

/// Index over the compiled-in operations manual.
pub fn shipped_index() -> Index {
    let chunks = chunk_document(SHIPPED_MANUAL_ID, SHIPPED_MANUAL).expect("shipped manual is not empty");
    Index::build(chunks).expect("chunk ids are unique")
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> KnowledgeError + '_ {
    move |source| KnowledgeError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn collect_files(dir: &Path, out: &mut Vec<std::path::PathBuf>) -> Result<(), KnowledgeError> {
    let mut entries = std::fs::read_dir(dir)
        .map_err(io_err(dir))?
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err(dir))?;
    entries.sort_by_key(|e| e.file_name());
    for entry in entries {
        let path = entry.path();
        if path.is_dir() {
            collect_files(&path, out)?;
        } else if matches!(
            path.extension().and_then(|e| e.to_str()),
            Some("md" | "markdown" | "txt")
        ) {
            out.push(path);
        }
    }
    Ok(())
}

/// Chunks every markdown / text file under `root`. Doc ids are paths
/// relative to `root` with `/` separators; files are visited in sorted order.
/// Files without any terms are skipped.
pub fn ingest_dir(root: impl AsRef<Path>) -> Result<Vec<DocChunk>, KnowledgeError> {
    let root = root.as_ref();
    let mut files = Vec::new();
    collect_files(root, &mut files)?;
    let mut chunks = Vec::new();
    for path in files {
        let text = std::fs::read_to_string(&path).map_err(io_err(&path))?;
        let rel = path.strip_prefix(root).unwrap_or(&path);
        let doc_id = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        match chunk_document(&doc_id, &text) {
            Ok(mut c) => chunks.append(&mut c),
            Err(KnowledgeError::EmptyDocument(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(chunks)
}

impl Index {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), KnowledgeError> {
        let path = path.as_ref();
        let json = serde_json::to_vec(self).map_err(|e| KnowledgeError::Format(e.to_string()))?;
        std::fs::write(path, json).map_err(io_err(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, KnowledgeError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(io_err(path))?;
        serde_json::from_slice(&bytes).map_err(|e| KnowledgeError::Format(e.to_string()))
    }
}
