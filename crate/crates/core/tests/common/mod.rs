//! Independent oracles and generators shared by the integration suites.
//! Nothing here calls into the code under test except to build inputs.

#![allow(dead_code)]

use std::collections::{BTreeMap, HashSet};

use cellx_core::agent::{AuditRecord, ProviderResponse};
use cellx_core::calculus::{CellConfig, ConflictKind, PciConflict};
use cellx_core::knowledge::DocChunk;
use cellx_core::station::Lifecycle;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::{json, Value};

/// Raw band rows re-read from the fixture text, bypassing `BandTable`.
pub fn fixture_bands() -> Vec<(i64, i64, i64, i64, i64)> {
    let text = include_str!("../../assets/bands.toml");
    let v: toml::Table = toml::from_str(text).unwrap();
    v["band"]
        .as_array()
        .unwrap()
        .iter()
        .map(|b| {
            let g = |k: &str| b[k].as_integer().unwrap();
            (g("band"), g("f_dl_low_tenths_mhz"), g("n_offs_dl"), g("n_dl_min"), g("n_dl_max"))
        })
        .collect()
}

pub fn pci_conflicts_oracle(pci: i64, neighbors: &[i64]) -> Vec<PciConflict> {
    let mut out = Vec::new();
    for &n in neighbors {
        if n == pci {
            out.push(PciConflict {
                neighbor: n,
                kind: ConflictKind::Collision,
            });
        } else if n.rem_euclid(3) == pci.rem_euclid(3) {
            out.push(PciConflict {
                neighbor: n,
                kind: ConflictKind::Mod3,
            });
        }
    }
    out
}

/// Lowercase alphanumeric runs, written out independently of the tokenizer.
pub fn oracle_terms(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            cur.extend(ch.to_lowercase());
        } else if !cur.is_empty() {
            out.push(std::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

/// Full-scan Okapi BM25 over raw texts: scores every chunk, drops zeros,
/// sorts by score descending then id ascending, keeps `k`.
pub fn bm25_full_scan(chunks: &[(String, String)], query: &str, k: usize) -> Vec<(String, f64)> {
    const K1: f64 = 1.2;
    const B: f64 = 0.75;
    let docs: Vec<(String, Vec<String>)> = chunks.iter().map(|(id, t)| (id.clone(), oracle_terms(t))).collect();
    let n = docs.len() as f64;
    let avg = docs.iter().map(|(_, t)| t.len() as f64).sum::<f64>() / n;
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for (_, terms) in &docs {
        let uniq: HashSet<&str> = terms.iter().map(String::as_str).collect();
        for t in uniq {
            *df.entry(t).or_default() += 1.0;
        }
    }
    let q = oracle_terms(query);
    let mut scored: Vec<(String, f64)> = docs
        .iter()
        .map(|(id, terms)| {
            let len = terms.len() as f64;
            let mut s = 0.0;
            for qt in &q {
                let tf = terms.iter().filter(|t| *t == qt).count() as f64;
                if tf == 0.0 {
                    continue;
                }
                let d = df[qt.as_str()];
                let idf = (1.0 + (n - d + 0.5) / (d + 0.5)).ln();
                s += idf * (K1 + 1.0) * tf / (tf + K1 * (1.0 - B + B * len / avg));
            }
            (id.clone(), s)
        })
        .filter(|(_, s)| *s > 0.0)
        .collect();
    scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

pub const VOCAB: [&str; 14] = [
    "power", "amplifier", "gain", "cell", "start", "failure", "bandwidth", "sync", "loss", "backhaul", "pci",
    "earfcn", "alarm", "reset",
];

/// Random corpus of 1..=max chunks, each 1..=20 words from a small
/// vocabulary so terms repeat and document frequencies vary.
pub fn random_corpus(rng: &mut impl Rng, max: usize) -> Vec<(String, String)> {
    let n = rng.random_range(1..=max);
    (0..n)
        .map(|i| {
            let len = rng.random_range(1..=20);
            let words: Vec<&str> = (0..len).map(|_| *VOCAB.choose(rng).unwrap()).collect();
            (format!("doc#{i}"), words.join(" "))
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng) -> String {
    let len = rng.random_range(1..=4);
    (0..len)
        .map(|_| if rng.random_bool(0.1) { "zzz" } else { *VOCAB.choose(rng).unwrap() })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn as_chunks(corpus: &[(String, String)]) -> Vec<DocChunk> {
    corpus
        .iter()
        .enumerate()
        .map(|(i, (_, text))| DocChunk::new("doc", i, vec![], text.clone()))
        .collect()
}

pub fn band3() -> CellConfig {
    CellConfig {
        band: 3,
        earfcn_dl: 1575,
        bandwidth_mhz: 10.0,
        pci: 301,
        tx_power_dbm: 30.0,
        plmn: "00101".into(),
        tac: 7,
        cell_identity: 0x1A2B,
        neighbor_pcis: vec![300, 302],
    }
}

/// Expected lifecycle after an operation, from the enumerated edge list.
/// `None` means the operation must be refused with the state unchanged.
#[derive(Debug, Clone, Copy)]
pub enum Op {
    Apply { valid: bool },
    Start,
    Stop,
    Reset,
    Inject,
    Tick,
}

pub fn legal_edge(from: Lifecycle, has_config: bool, op: Op) -> Option<Lifecycle> {
    use Lifecycle::*;
    match (op, from) {
        (Op::Apply { valid: true }, Stopped | Configured) => Some(Configured),
        (Op::Apply { .. }, _) => None,
        (Op::Start, Configured) => Some(Running),
        (Op::Start, Stopped) if has_config => Some(Running),
        (Op::Start, _) => None,
        (Op::Stop, Running | Fault) => Some(Stopped),
        (Op::Stop, _) => None,
        (Op::Reset, _) => Some(Stopped),
        (Op::Inject, Running) => Some(Fault),
        (Op::Inject, _) => None,
        (Op::Tick, s) => Some(s),
    }
}

/// A pool of configs: two distinct valid ones and one invalid.
pub fn config_pool() -> Vec<CellConfig> {
    let a = band3();
    let mut b = band3();
    b.earfcn_dl = 1300;
    b.tx_power_dbm = 20.0;
    let mut bad = band3();
    bad.pci = 504;
    vec![a, b, bad]
}

/// Random model response for guardrail fuzzing, weighted towards the
/// mutating tools.
pub fn random_response(rng: &mut impl Rng, pool: &[CellConfig]) -> ProviderResponse {
    let cfg = |rng: &mut dyn rand::RngCore| json!({ "config": pool.choose(rng).unwrap() });
    match rng.random_range(0..10) {
        0 | 1 => ProviderResponse::tool("config.validate", cfg(rng)),
        2..=4 => ProviderResponse::tool("station.apply_config", cfg(rng)),
        5 => ProviderResponse::tool("station.start", json!({})),
        6 => ProviderResponse::tool("station.stop", json!({})),
        7 => ProviderResponse::tool("station.read_kpi", json!({"ticks": rng.random_range(1..=3)})),
        8 => ProviderResponse::tool("station.get_state", json!({})),
        _ => ProviderResponse::final_text("done"),
    }
}

/// Random script mixing lone calls with validate-then-apply pairs, so both
/// guarded and unguarded applies show up often.
pub fn random_script(rng: &mut impl Rng, pool: &[CellConfig], len: usize) -> Vec<ProviderResponse> {
    let mut out = Vec::new();
    while out.len() < len {
        match rng.random_range(0..4) {
            0 => {
                let cfg = json!({ "config": pool.choose(rng).unwrap() });
                if rng.random_bool(0.5) {
                    out.push(ProviderResponse::tool("station.stop", json!({})));
                }
                out.push(ProviderResponse::tool("config.validate", cfg.clone()));
                out.push(ProviderResponse::tool("station.apply_config", cfg));
            }
            _ => out.push(random_response(rng, pool)),
        }
    }
    out
}

/// Scans the audit trail and returns every successful apply that lacks an
/// earlier same-turn validate with valid=true on an identical config.
pub fn unguarded_applies(records: &[AuditRecord]) -> Vec<u64> {
    let mut validated: BTreeMap<(String, String), HashSet<String>> = BTreeMap::new();
    let mut bad = Vec::new();
    for r in records {
        if r.payload["executed"] != true {
            continue;
        }
        let key = (r.session_id.clone(), r.turn_id.clone());
        let ok = &r.payload["result"]["ok"];
        let canon = |args: &Value| serde_json::from_value::<CellConfig>(args["config"].clone()).ok().map(|c| {
            // Canonical form independent of the crate's fingerprint helper.
            serde_json::to_string(&serde_json::to_value(c).unwrap()).unwrap()
        });
        match r.payload["tool"].as_str() {
            Some("config.validate") if ok["valid"] == true => {
                if let Some(c) = canon(&r.payload["args"]) {
                    validated.entry(key).or_default().insert(c);
                }
            }
            Some("station.apply_config") if !ok.is_null() => {
                let c = canon(&r.payload["args"]);
                if !c.is_some_and(|c| validated.get(&key).is_some_and(|s| s.contains(&c))) {
                    bad.push(r.seq);
                }
            }
            _ => {}
        }
    }
    bad
}
