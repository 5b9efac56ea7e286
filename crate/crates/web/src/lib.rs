//! WebAssembly bindings for the static demo page in `www/`. Every export
//! takes and returns a JSON string so the same functions run natively in
//! tests. Failures come back as `{"error": "..."}`.

use cellx_core::calculus::{pci_decompose, prb_for_bandwidth, validate_config, BandTable, CellConfig};
use cellx_core::knowledge::{chunk_document, shipped_index, Index};
use cellx_core::station::{FaultKind, KpiSummary, Station, KPI_RING_CAPACITY};
use serde::Deserialize;
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

fn error(msg: impl std::fmt::Display) -> String {
    json!({ "error": msg.to_string() }).to_string()
}

fn respond(r: Result<Value, String>) -> String {
    match r {
        Ok(v) => v.to_string(),
        Err(e) => error(e),
    }
}

fn parse<T: for<'de> Deserialize<'de>>(text: &str) -> Result<T, String> {
    serde_json::from_str(text).map_err(|e| format!("request: {e}"))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FaultAt {
    tick: u32,
    kind: FaultKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct KpiRequest {
    seed: u64,
    config: CellConfig,
    ticks: u32,
    #[serde(default = "one_second")]
    dt_s: f64,
    #[serde(default)]
    faults: Vec<FaultAt>,
    /// Tick at which the cell is stopped and started again.
    #[serde(default)]
    restart_at: Option<u32>,
}

fn one_second() -> f64 {
    1.0
}

fn kpi_series(req: KpiRequest) -> Result<Value, String> {
    if req.ticks == 0 || req.ticks as usize > KPI_RING_CAPACITY {
        return Err(format!("ticks must be in 1..={KPI_RING_CAPACITY}"));
    }
    let mut st = Station::new(req.seed);
    st.apply_config(req.config).map_err(|e| e.to_string())?;
    st.start().map_err(|e| e.to_string())?;
    let mut samples = Vec::with_capacity(req.ticks as usize);
    let mut events = Vec::new();
    for t in 0..req.ticks {
        for f in req.faults.iter().filter(|f| f.tick == t) {
            let what = match st.inject_fault(f.kind) {
                Ok(()) => format!("inject {}", f.kind.as_str()),
                Err(e) => format!("inject {} refused: {e}", f.kind.as_str()),
            };
            events.push(json!({ "tick": t, "what": what }));
        }
        if req.restart_at == Some(t) {
            let r = st.stop().and_then(|_| st.start());
            let what = match r {
                Ok(()) => "stop + start".to_string(),
                Err(e) => format!("restart refused: {e}"),
            };
            events.push(json!({ "tick": t, "what": what }));
        }
        samples.push(st.tick(req.dt_s).map_err(|e| e.to_string())?);
    }
    Ok(json!({
        "samples": samples,
        "summary": KpiSummary::from_samples(&samples),
        "events": events,
    }))
}

/// Runs a seeded station on `config` for `ticks` steps and returns the KPI
/// samples, with optional fault injections and a restart along the way.
///
/// Request: `{seed, config, ticks, dt_s?, faults?: [{tick, kind}], restart_at?}`.
#[wasm_bindgen]
pub fn kpi_curves(request: &str) -> String {
    respond(parse(request).and_then(kpi_series))
}

fn derived(config: &CellConfig) -> Value {
    let freq = BandTable::shipped()
        .earfcn_to_freq(config.band, config.earfcn_dl)
        .ok()
        .map(|f| f.mhz());
    let pci = pci_decompose(config.pci).ok();
    json!({
        "dl_freq_mhz": freq,
        "prb": prb_for_bandwidth(config.bandwidth_mhz).ok(),
        "pci_group": pci.map(|p| p.group_id),
        "pci_sector": pci.map(|p| p.sector_id),
    })
}

/// Validation report for a cell config, plus the downlink frequency, PRB
/// count and PCI split wherever those are computable.
#[wasm_bindgen]
pub fn validate(config: &str) -> String {
    respond(parse::<CellConfig>(config).map(|c| json!({ "report": validate_config(&c), "derived": derived(&c) })))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    doc_id: String,
    text: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchRequest {
    query: String,
    #[serde(default = "three")]
    k: usize,
    /// Searched instead of the shipped manual when present.
    #[serde(default)]
    documents: Option<Vec<Document>>,
}

fn three() -> usize {
    3
}

fn run_search(req: SearchRequest) -> Result<Value, String> {
    if !(1..=20).contains(&req.k) {
        return Err("k must be in 1..=20".into());
    }
    let index = match req.documents {
        None => shipped_index(),
        Some(docs) => {
            let mut chunks = Vec::new();
            for d in docs {
                chunks.extend(chunk_document(&d.doc_id, &d.text).map_err(|e| e.to_string())?);
            }
            Index::build(chunks).map_err(|e| e.to_string())?
        }
    };
    let results: Vec<Value> = index
        .retrieve(&req.query, req.k)
        .into_iter()
        .filter_map(|hit| {
            let c = index.chunk(&hit.chunk_id)?;
            Some(json!({
                "chunk_id": hit.chunk_id,
                "score": hit.score,
                "heading_path": c.heading_path,
                "text": c.text,
            }))
        })
        .collect();
    Ok(json!({ "chunks": index.len(), "results": results }))
}

/// BM25 search over the shipped manual or caller-supplied documents.
///
/// Request: `{query, k?, documents?: [{doc_id, text}]}`.
#[wasm_bindgen]
pub fn search(request: &str) -> String {
    respond(parse(request).and_then(run_search))
}
