mod common;

use cellx_core::knowledge::{chunk_document, terms, window_starts, DocChunk, Index, OVERLAP_TERMS, WINDOW_TERMS};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn toy() -> Index {
    let texts = ["cell start failure power", "power amplifier gain", "cell bandwidth configuration"];
    Index::build(
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| DocChunk::new("toy", i, vec![], t.to_string()))
            .collect(),
    )
    .unwrap()
}

#[test]
fn toy_corpus_ranking_by_hand() {
    let idx = toy();
    // N=3, df(power)=2: idf = ln(1 + 1.5/2.5) = ln 1.6. avgdl = 10/3.
    let idf = 1.6f64.ln();
    let avg = 10.0 / 3.0;
    let score = |len: f64| idf * 2.2 / (1.0 + 1.2 * (0.25 + 0.75 * len / avg));
    let hits = idx.retrieve("power", 2);
    assert_eq!(hits[0].chunk_id, "toy#1");
    assert_eq!(hits[1].chunk_id, "toy#0");
    assert!((hits[0].score - score(3.0)).abs() < 1e-12);
    assert!((hits[1].score - score(4.0)).abs() < 1e-12);
    assert!(hits[0].score > hits[1].score);
}

#[test]
fn retrieve_matches_full_scan_on_random_corpora() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..40 {
        let corpus = common::random_corpus(&mut rng, 50);
        let idx = Index::build(common::as_chunks(&corpus)).unwrap();
        for _ in 0..10 {
            let q = common::random_query(&mut rng);
            let k = rand::Rng::random_range(&mut rng, 1..=8);
            let got: Vec<(String, f64)> = idx.retrieve(&q, k).into_iter().map(|h| (h.chunk_id, h.score)).collect();
            let want = common::bm25_full_scan(&corpus, &q, k);
            assert_eq!(got.len(), want.len(), "query {q:?}");
            for ((gi, gs), (wi, ws)) in got.iter().zip(&want) {
                assert_eq!(gi, wi, "query {q:?}");
                assert!((gs - ws).abs() < 1e-9);
            }
        }
    }
}

#[test]
fn window_example_600_terms() {
    assert_eq!(window_starts(600), vec![0, 224, 448]);
    let doc: Vec<String> = (0..600).map(|i| format!("w{i}")).collect();
    let chunks = chunk_document("long", &doc.join(" ")).unwrap();
    assert_eq!(chunks.len(), 3);
    assert!(chunks[0].text.starts_with("w0 ") && chunks[1].text.starts_with("w224 "));
    assert_eq!(chunks[2].length_terms, 600 - 448);
}

fn arb_doc() -> impl Strategy<Value = String> {
    let line = prop_oneof![
        3 => prop::collection::vec("[a-z]{1,6}", 0..40).prop_map(|w| w.join(" ")),
        1 => "#{1,3} [A-Za-z ]{1,12}",
    ];
    prop::collection::vec(line, 1..40).prop_map(|l| l.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn chunk_invariants(doc in arb_doc()) {
        prop_assume!(!doc.trim().is_empty());
        let chunks = chunk_document("d", &doc).unwrap();
        for (i, c) in chunks.iter().enumerate() {
            prop_assert_eq!(&c.chunk_id, &format!("d#{i}"));
            prop_assert_eq!(c.length_terms as usize, c.term_counts.values().map(|&n| n as usize).sum::<usize>());
            prop_assert!(c.length_terms as usize <= WINDOW_TERMS);
            prop_assert!(doc.contains(c.text.as_str()));
        }
        // Every term of the document lands in some chunk, in order, once
        // overlaps are removed.
        let mut rebuilt: Vec<String> = Vec::new();
        let mut prev_len = 0usize;
        let mut prev_path: Option<Vec<String>> = None;
        for c in &chunks {
            let t = terms(&c.text);
            let overlap = if prev_path.as_ref() == Some(&c.heading_path) && prev_len == WINDOW_TERMS {
                OVERLAP_TERMS.min(t.len())
            } else {
                0
            };
            rebuilt.extend(t[overlap..].iter().cloned());
            prev_len = t.len();
            prev_path = Some(c.heading_path.clone());
        }
        prop_assert_eq!(rebuilt, terms(&doc));
    }

    #[test]
    fn scoring_properties(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let corpus = common::random_corpus(&mut rng, 20);
        let idx = Index::build(common::as_chunks(&corpus)).unwrap();
        for t in common::VOCAB {
            prop_assert!(idx.idf(t) >= 0.0);
            prop_assert!(idx.doc_freq(t) as usize <= idx.len());
        }
        let mean = idx.chunks().iter().map(|c| c.length_terms as f64).sum::<f64>() / idx.len() as f64;
        prop_assert!((idx.avg_chunk_length() - mean).abs() < 1e-12);
        let empty: [&str; 0] = [];
        for pos in 0..idx.len() {
            prop_assert_eq!(idx.bm25_score(&empty, pos), 0.0);
            prop_assert!(idx.bm25_score(&["zzz"], pos) == 0.0);
        }
    }

    #[test]
    fn score_grows_with_term_frequency(extra in 1usize..6, filler in 1usize..10) {
        // Same length, more occurrences of the query term: higher score.
        let base: Vec<&str> = std::iter::once("power").chain(std::iter::repeat_n("gain", filler + extra)).collect();
        let more: Vec<&str> = std::iter::repeat_n("power", 1 + extra).chain(std::iter::repeat_n("gain", filler)).collect();
        let idx = Index::build(vec![
            DocChunk::new("m", 0, vec![], base.join(" ")),
            DocChunk::new("m", 1, vec![], more.join(" ")),
            DocChunk::new("m", 2, vec![], "cell reset".into()),
        ])
        .unwrap();
        prop_assert!(idx.bm25_score(&["power"], 1) > idx.bm25_score(&["power"], 0));
    }
}
