//! The closed tool registry the agent can call, with argument schemas and
//! dispatch into the station, the config calculus and the knowledge index.

use std::fmt;
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::audit::AuditKind;
use super::provider::ToolSchema;
use super::Rig;
use crate::calculus::{validate_config_with, CellConfig};
use crate::station::{classify_fault, FaultKind, KpiSummary, StationError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToolName {
    KbSearch,
    GetState,
    GetConfig,
    Validate,
    ApplyConfig,
    Start,
    Stop,
    ReadKpi,
}

impl ToolName {
    pub const ALL: [ToolName; 8] = [
        ToolName::KbSearch,
        ToolName::GetState,
        ToolName::GetConfig,
        ToolName::Validate,
        ToolName::ApplyConfig,
        ToolName::Start,
        ToolName::Stop,
        ToolName::ReadKpi,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::KbSearch => "kb.search",
            ToolName::GetState => "station.get_state",
            ToolName::GetConfig => "station.get_config",
            ToolName::Validate => "config.validate",
            ToolName::ApplyConfig => "station.apply_config",
            ToolName::Start => "station.start",
            ToolName::Stop => "station.stop",
            ToolName::ReadKpi => "station.read_kpi",
        }
    }

    /// Read-only tools never change the station.
    pub fn is_read_only(self) -> bool {
        !matches!(self, ToolName::ApplyConfig | ToolName::Start | ToolName::Stop | ToolName::ReadKpi)
    }

    fn description(self) -> &'static str {
        match self {
            ToolName::KbSearch => "Search the operations manual. Returns ranked chunks with their chunk_id.",
            ToolName::GetState => "Lifecycle, active config, active fault and simulated time of the station.",
            ToolName::GetConfig => "The active cell configuration, or null when none is applied.",
            ToolName::Validate => "Validate a cell configuration. Must succeed with valid=true before it can be applied.",
            ToolName::ApplyConfig => "Apply a validated configuration. The cell must be STOPPED or CONFIGURED.",
            ToolName::Start => "Start transmitting on the applied configuration.",
            ToolName::Stop => "Stop the cell. Clears any active fault.",
            ToolName::ReadKpi => {
                "Advance the station by `ticks` steps of `dt_s` seconds and return the KPI samples, a summary and a suspected_fault hint."
            }
        }
    }

    fn parameters(self) -> Value {
        let empty = json!({"type": "object", "properties": {}, "additionalProperties": false});
        match self {
            ToolName::KbSearch => json!({
                "type": "object",
                "properties": {
                    "query": {"type": "string"},
                    "k": {"type": "integer", "minimum": 1, "maximum": 20, "default": 3}
                },
                "required": ["query"],
                "additionalProperties": false
            }),
            ToolName::Validate | ToolName::ApplyConfig => json!({
                "type": "object",
                "properties": {"config": cell_config_schema()},
                "required": ["config"],
                "additionalProperties": false
            }),
            ToolName::ReadKpi => json!({
                "type": "object",
                "properties": {
                    "ticks": {"type": "integer", "minimum": 1, "maximum": 60, "default": 5},
                    "dt_s": {"type": "number", "exclusiveMinimum": 0, "default": 1.0}
                },
                "additionalProperties": false
            }),
            ToolName::GetState | ToolName::GetConfig | ToolName::Start | ToolName::Stop => empty,
        }
    }

    pub fn schema(self) -> ToolSchema {
        ToolSchema {
            name: self.as_str().to_string(),
            description: self.description().to_string(),
            parameters: self.parameters(),
        }
    }
}

impl fmt::Display for ToolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolName {
    type Err = ToolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolName::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ToolError::UnknownTool(s.to_string()))
    }
}

fn cell_config_schema() -> Value {
    json!({
        "type": "object",
        "properties": {
            "band": {"type": "integer"},
            "earfcn_dl": {"type": "integer"},
            "bandwidth_mhz": {"type": "number", "enum": [1.4, 3, 5, 10, 15, 20]},
            "pci": {"type": "integer", "minimum": 0, "maximum": 503},
            "tx_power_dbm": {"type": "number", "minimum": 0, "maximum": 46},
            "plmn": {"type": "string", "pattern": "^[0-9]{5,6}$"},
            "tac": {"type": "integer", "minimum": 0, "maximum": 65535},
            "cell_identity": {"type": "integer", "minimum": 0, "maximum": 268435455},
            "neighbor_pcis": {"type": "array", "items": {"type": "integer"}}
        },
        "required": ["band", "earfcn_dl", "bandwidth_mhz", "pci", "tx_power_dbm", "plmn", "tac", "cell_identity"],
        "additionalProperties": false
    })
}

pub fn tool_schemas() -> Vec<ToolSchema> {
    ToolName::ALL.iter().map(|t| t.schema()).collect()
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ToolError {
    #[error("unknown tool {0:?}")]
    UnknownTool(String),
    #[error("{tool}: arguments do not match schema: {message}")]
    SchemaViolation { tool: ToolName, message: String },
    #[error("{tool}: {message}")]
    Downstream { tool: ToolName, kind: String, message: String },
    #[error("{tool}: refused by guardrail: {message}")]
    Guardrail { tool: ToolName, message: String },
    #[error("{tool}: rejected by operator")]
    Rejected { tool: ToolName },
}

impl ToolError {
    pub fn kind(&self) -> &str {
        match self {
            ToolError::UnknownTool(_) => "unknown_tool",
            ToolError::SchemaViolation { .. } => "schema_violation",
            ToolError::Downstream { kind, .. } => kind,
            ToolError::Guardrail { .. } => "guardrail",
            ToolError::Rejected { .. } => "rejected",
        }
    }

    fn station(tool: ToolName, err: StationError) -> Self {
        let kind = match &err {
            StationError::InvalidConfig(_) => "invalid_config",
            StationError::WrongState { .. } => "wrong_state",
            StationError::NonPositiveDt(_) => "non_positive_dt",
        };
        let message = match &err {
            StationError::InvalidConfig(report) => {
                format!("{err}: {}", serde_json::to_string(&report.issues).unwrap_or_default())
            }
            _ => err.to_string(),
        };
        ToolError::Downstream {
            tool,
            kind: kind.to_string(),
            message,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolResult {
    Ok(Value),
    Error { kind: String, message: String },
}

impl ToolResult {
    pub fn is_ok(&self) -> bool {
        matches!(self, ToolResult::Ok(_))
    }

    pub fn ok_value(&self) -> Option<&Value> {
        match self {
            ToolResult::Ok(v) => Some(v),
            ToolResult::Error { .. } => None,
        }
    }

    /// What the provider sees as the tool's output.
    pub fn to_content(&self) -> Value {
        serde_json::to_value(self).expect("tool result serializes")
    }
}

impl From<Result<Value, ToolError>> for ToolResult {
    fn from(r: Result<Value, ToolError>) -> Self {
        match r {
            Ok(v) => ToolResult::Ok(v),
            Err(e) => ToolResult::Error {
                kind: e.kind().to_string(),
                message: e.to_string(),
            },
        }
    }
}

/// One executed (or refused) tool invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub call_id: String,
    pub name: String,
    pub args: Value,
    pub result: ToolResult,
    pub latency_ms: u64,
}

/// Why a call happened: requested by the model, or issued by the loop itself.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Provider,
    Verification,
    Rollback,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoArgs {}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchArgs {
    query: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    3
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub(crate) struct ConfigArgs {
    pub(crate) config: CellConfig,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ReadKpiArgs {
    #[serde(default = "default_ticks")]
    ticks: u32,
    #[serde(default = "default_dt")]
    dt_s: f64,
}

fn default_ticks() -> u32 {
    5
}

fn default_dt() -> f64 {
    1.0
}

pub(crate) fn parse_args<T: DeserializeOwned>(tool: ToolName, args: &Value) -> Result<T, ToolError> {
    let args = if args.is_null() { json!({}) } else { args.clone() };
    serde_json::from_value(args).map_err(|e| ToolError::SchemaViolation {
        tool,
        message: e.to_string(),
    })
}

fn execute(tool: ToolName, args: &Value, rig: &Rig) -> Result<Value, ToolError> {
    let schema_err = |message: &str| ToolError::SchemaViolation {
        tool,
        message: message.to_string(),
    };
    match tool {
        ToolName::KbSearch => {
            let a: SearchArgs = parse_args(tool, args)?;
            if !(1..=20).contains(&a.k) {
                return Err(schema_err("k must be in 1..=20"));
            }
            let index = rig.index.current();
            let results: Vec<Value> = index
                .retrieve(&a.query, a.k)
                .into_iter()
                .map(|hit| {
                    let chunk = index.chunk(&hit.chunk_id).expect("hit comes from this index");
                    json!({
                        "chunk_id": hit.chunk_id,
                        "score": hit.score,
                        "heading_path": chunk.heading_path,
                        "text": chunk.text,
                    })
                })
                .collect();
            Ok(json!({ "results": results }))
        }
        ToolName::GetState => {
            parse_args::<NoArgs>(tool, args)?;
            Ok(serde_json::to_value(rig.station.lock().unwrap().snapshot()).unwrap())
        }
        ToolName::GetConfig => {
            parse_args::<NoArgs>(tool, args)?;
            let station = rig.station.lock().unwrap();
            Ok(json!({ "config": station.active_config() }))
        }
        ToolName::Validate => {
            let a: ConfigArgs = parse_args(tool, args)?;
            let bands = rig.station.lock().unwrap().bands().clone();
            Ok(serde_json::to_value(validate_config_with(&bands, &a.config)).unwrap())
        }
        ToolName::ApplyConfig => {
            let a: ConfigArgs = parse_args(tool, args)?;
            let mut station = rig.station.lock().unwrap();
            station.apply_config(a.config).map_err(|e| ToolError::station(tool, e))?;
            Ok(serde_json::to_value(station.snapshot()).unwrap())
        }
        ToolName::Start | ToolName::Stop => {
            parse_args::<NoArgs>(tool, args)?;
            let mut station = rig.station.lock().unwrap();
            let r = if tool == ToolName::Start { station.start() } else { station.stop() };
            r.map_err(|e| ToolError::station(tool, e))?;
            Ok(serde_json::to_value(station.snapshot()).unwrap())
        }
        ToolName::ReadKpi => {
            let a: ReadKpiArgs = parse_args(tool, args)?;
            if !(1..=60).contains(&a.ticks) {
                return Err(schema_err("ticks must be in 1..=60"));
            }
            let mut station = rig.station.lock().unwrap();
            let samples = (0..a.ticks)
                .map(|_| station.tick(a.dt_s))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| ToolError::station(tool, e))?;
            let summary = KpiSummary::from_samples(&samples);
            let suspected = station
                .active_config()
                .and_then(|c| classify_fault(&samples, c.tx_power_dbm))
                .map(FaultKind::as_str);
            Ok(json!({ "samples": samples, "summary": summary, "suspected_fault": suspected }))
        }
    }
}

/// Identifies the turn a call belongs to in the audit trail.
#[derive(Debug, Clone, Copy)]
pub struct CallContext<'a> {
    pub session_id: &'a str,
    pub turn_id: &'a str,
    pub call_id: &'a str,
    pub origin: Origin,
}

/// Writes the audit record for a finished call.
pub(crate) fn audit_call(rig: &Rig, ctx: CallContext<'_>, call: &ToolCall, executed: bool) {
    rig.audit.append(
        ctx.session_id,
        ctx.turn_id,
        AuditKind::ToolCall,
        json!({
            "call_id": call.call_id,
            "tool": call.name,
            "args": call.args,
            "origin": ctx.origin,
            "executed": executed,
            "result": call.result,
            "latency_ms": call.latency_ms,
        }),
    );
}

/// Resolves, executes and audits one tool call. Errors come back inside the
/// [`ToolCall`] result; nothing here aborts the turn.
pub fn execute_tool(rig: &Rig, ctx: CallContext<'_>, name: &str, args: &Value) -> ToolCall {
    let start = rig.audit.clock().now_ms();
    let (result, executed) = match name.parse::<ToolName>() {
        Ok(tool) => (execute(tool, args, rig), true),
        Err(e) => (Err(e), false),
    };
    let call = ToolCall {
        call_id: ctx.call_id.to_string(),
        name: name.to_string(),
        args: args.clone(),
        result: result.into(),
        latency_ms: rig.audit.clock().now_ms().saturating_sub(start),
    };
    audit_call(rig, ctx, &call, executed);
    call
}

/// Records a call that was refused before execution.
pub(crate) fn refuse(rig: &Rig, ctx: CallContext<'_>, name: &str, args: &Value, err: ToolError) -> ToolCall {
    let call = ToolCall {
        call_id: ctx.call_id.to_string(),
        name: name.to_string(),
        args: args.clone(),
        result: Err(err).into(),
        latency_ms: 0,
    };
    audit_call(rig, ctx, &call, false);
    call
}
