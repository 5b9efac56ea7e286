//! The operations agent: a bounded tool-calling loop over the station,
//! grounded by retrieval and guarded by validation, approval and KPI
//! verification with automatic rollback.

mod audit;
mod diff;
mod policy;
mod provider;
mod tools;
mod turn;

use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

pub use audit::{AuditKind, AuditLog, AuditRecord, Clock, ManualClock, SystemClock};
pub use diff::{diff_against, diff_configs, FieldChange};
pub use policy::{Policy, PolicyError, PolicyOverrides};
pub use provider::{
    ContextChunk, Message, Provider, ProviderError, ProviderRequest, ProviderResponse, ScriptedProvider, ToolSchema,
};
pub use tools::{execute_tool, tool_schemas, CallContext, Origin, ToolCall, ToolError, ToolName, ToolResult};
pub use turn::{
    AgentSession, AgentTurn, Approval, Decision, Outcome, ProposedDiff, SessionError, TurnEvent, TurnStatus,
};

use crate::knowledge::Index;
use crate::station::Station;

pub const SYSTEM_PROMPT: &str = include_str!("../../assets/prompts/system_v1.txt");
pub const SYSTEM_PROMPT_VERSION: &str = "v1";

/// The knowledge index behind a lock so a re-ingest can swap it in whole.
#[derive(Clone)]
pub struct SharedIndex(Arc<RwLock<Arc<Index>>>);

impl SharedIndex {
    pub fn new(index: Index) -> Self {
        Self(Arc::new(RwLock::new(Arc::new(index))))
    }

    pub fn current(&self) -> Arc<Index> {
        Arc::clone(&self.0.read().unwrap())
    }

    pub fn replace(&self, index: Index) {
        *self.0.write().unwrap() = Arc::new(index);
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Everything a turn operates on: the one station, the knowledge index and
/// the audit trail. Cheap to clone; all parts are shared.
#[derive(Clone)]
pub struct Rig {
    pub station: Arc<Mutex<Station>>,
    pub index: SharedIndex,
    pub audit: Arc<AuditLog>,
    sleeper: Sleeper,
}

impl Rig {
    pub fn new(station: Station, index: Index, audit: AuditLog) -> Self {
        Self {
            station: Arc::new(Mutex::new(station)),
            index: SharedIndex::new(index),
            audit: Arc::new(audit),
            sleeper: Arc::new(|d: Duration| {
                if !d.is_zero() {
                    std::thread::sleep(d)
                }
            }),
        }
    }

    /// Replaces how provider retry backoff waits.
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Arc::new(sleeper);
        self
    }

    pub(crate) fn sleep(&self, d: Duration) {
        (self.sleeper)(d)
    }
}
