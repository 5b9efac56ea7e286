use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tokenize::{tokenize, Token};
use super::KnowledgeError;

pub const WINDOW_TERMS: usize = 256;
pub const OVERLAP_TERMS: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocChunk {
    pub doc_id: String,
    pub chunk_id: String,
    pub heading_path: Vec<String>,
    pub text: String,
    pub term_counts: BTreeMap<String, u32>,
    pub length_terms: u32,
}

impl DocChunk {
    pub fn new(doc_id: &str, ordinal: usize, heading_path: Vec<String>, text: String) -> Self {
        let mut term_counts = BTreeMap::new();
        let mut length_terms = 0;
        for tok in tokenize(&text) {
            *term_counts.entry(tok.term).or_insert(0) += 1;
            length_terms += 1;
        }
        Self {
            doc_id: doc_id.to_string(),
            chunk_id: format!("{doc_id}#{ordinal}"),
            heading_path,
            text,
            term_counts,
            length_terms,
        }
    }

    pub fn tf(&self, term: &str) -> u32 {
        self.term_counts.get(term).copied().unwrap_or(0)
    }
}

struct Segment {
    heading_path: Vec<String>,
    start: usize,
    end: usize,
}

fn heading(line: &str) -> Option<(usize, &str)> {
    let trimmed = line.trim_start();
    let level = trimmed.bytes().take_while(|&b| b == b'#').count();
    (level > 0).then(|| (level, trimmed[level..].trim()))
}

fn segments(text: &str) -> Vec<Segment> {
    let mut out = Vec::new();
    let mut stack: Vec<(usize, String)> = Vec::new();
    let mut seg_start = 0;
    let mut path: Vec<String> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((level, title)) = heading(line) {
            if offset > seg_start {
                out.push(Segment {
                    heading_path: path.clone(),
                    start: seg_start,
                    end: offset,
                });
            }
            while stack.last().is_some_and(|(l, _)| *l >= level) {
                stack.pop();
            }
            stack.push((level, title.to_string()));
            path = stack.iter().map(|(_, t)| t.clone()).collect();
            seg_start = offset;
        }
        offset += line.len();
    }
    if offset > seg_start {
        out.push(Segment {
            heading_path: path,
            start: seg_start,
            end: offset,
        });
    }
    out
}

/// Start offsets (in terms) of the windows covering `n` terms.
pub fn window_starts(n: usize) -> Vec<usize> {
    let stride = WINDOW_TERMS - OVERLAP_TERMS;
    let mut starts = vec![0];
    while starts.last().unwrap() + WINDOW_TERMS < n {
        starts.push(starts.last().unwrap() + stride);
    }
    starts
}

/// Splits a document at `#` headings, then windows any section longer than
/// [`WINDOW_TERMS`] terms with [`OVERLAP_TERMS`] terms of overlap.
///
/// Window texts are exact slices of the source, from the first term of the
/// window to the end of its last term.
pub fn chunk_document(doc_id: &str, text: &str) -> Result<Vec<DocChunk>, KnowledgeError> {
    if tokenize(text).is_empty() {
        return Err(KnowledgeError::EmptyDocument(doc_id.to_string()));
    }
    let mut chunks = Vec::new();
    for seg in segments(text) {
        let body = &text[seg.start..seg.end];
        let tokens: Vec<Token> = tokenize(body);
        if tokens.is_empty() {
            continue;
        }
        if tokens.len() <= WINDOW_TERMS {
            chunks.push(DocChunk::new(doc_id, chunks.len(), seg.heading_path, body.trim().to_string()));
            continue;
        }
        for start in window_starts(tokens.len()) {
            let end = (start + WINDOW_TERMS).min(tokens.len());
            let slice = &body[tokens[start].start..tokens[end - 1].end];
            chunks.push(DocChunk::new(doc_id, chunks.len(), seg.heading_path.clone(), slice.to_string()));
        }
    }
    Ok(chunks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::tokenize::terms;

    fn words(n: usize) -> String {
        (0..n).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ")
    }

    #[test]
    fn short_document_is_one_chunk() {
        let chunks = chunk_document("a.md", &words(10)).unwrap();
        assert_eq!(chunks.len(), 1);
        assert!(chunks[0].heading_path.is_empty());
        assert_eq!(chunks[0].length_terms, 10);
        assert_eq!(chunks[0].chunk_id, "a.md#0");
    }

    #[test]
    fn long_document_windows() {
        assert_eq!(window_starts(600), vec![0, 224, 448]);
        assert_eq!(window_starts(256), vec![0]);
        assert_eq!(window_starts(257), vec![0, 224]);
        let chunks = chunk_document("a.md", &words(600)).unwrap();
        assert_eq!(chunks.len(), 3);
        let first_terms: Vec<String> = chunks.iter().map(|c| terms(&c.text)[0].clone()).collect();
        assert_eq!(first_terms, vec!["w0", "w224", "w448"]);
        assert_eq!(chunks[2].length_terms, 152);
    }

    #[test]
    fn headings_split_and_nest() {
        let doc = "intro line\n# Radio\nbody one\n## Sync\nbody two\n# Core\nbody three\n";
        let chunks = chunk_document("m.md", doc).unwrap();
        let paths: Vec<Vec<String>> = chunks.iter().map(|c| c.heading_path.clone()).collect();
        assert_eq!(
            paths,
            vec![
                vec![],
                vec!["Radio".to_string()],
                vec!["Radio".to_string(), "Sync".to_string()],
                vec!["Core".to_string()],
            ]
        );
        assert!(chunks[2].text.starts_with("## Sync"));
    }

    #[test]
    fn empty_document_rejected() {
        assert!(matches!(chunk_document("e.md", " \n--\n"), Err(KnowledgeError::EmptyDocument(_))));
    }
}
