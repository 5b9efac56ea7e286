//! Shared service state: the one station rig, the session table and the
//! per-session turn bookkeeping behind the HTTP layer.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use cellx_core::agent::{
    AgentSession, AgentTurn, Approval, AuditLog, Clock, Decision, Policy, PolicyOverrides, ProposedDiff, Provider,
    ProviderError, Rig, ScriptedProvider, SystemClock, TurnEvent, TurnStatus,
};
use cellx_core::calculus::BandTable;
use cellx_core::knowledge::{ingest_dir, shipped_index, Index};
use cellx_core::scenario::Scenario;
use cellx_core::station::Station;
use futures::channel::mpsc::{unbounded, UnboundedReceiver, UnboundedSender};
use serde::Serialize;

use crate::config::{ProviderConfig, ServiceConfig};
use crate::error::ApiError;
use crate::llm::ChatCompletionsProvider;

pub type ProviderFactory = Arc<dyn Fn() -> Result<Box<dyn Provider>, ProviderError> + Send + Sync>;

#[derive(Debug, thiserror::Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("knowledge: {0}")]
    Knowledge(String),
    #[error("band table: {0}")]
    Bands(String),
    #[error("audit log: {0}")]
    Audit(std::io::Error),
    #[error("provider: {0}")]
    Provider(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TurnPhase {
    Running,
    AwaitingApproval,
    Finished,
}

#[derive(Debug, Clone, Serialize)]
pub struct PendingApproval {
    pub call_id: String,
    pub diff: ProposedDiff,
}

/// Polling view of one turn, kept current from the event stream.
#[derive(Debug, Clone, Serialize)]
pub struct TurnView {
    pub session_id: String,
    pub phase: TurnPhase,
    pub pending_approval: Option<PendingApproval>,
    pub turn: AgentTurn,
}

#[derive(Debug, Clone, Serialize)]
pub struct SessionRecord {
    pub session_id: String,
    pub created_at: u64,
    pub transcript: Vec<AgentTurn>,
    pub policy: Policy,
}

#[derive(Debug, Clone, Serialize)]
pub struct ApprovalAck {
    pub session_id: String,
    pub turn_id: String,
    pub decision: Decision,
}

struct Core {
    session: AgentSession,
    provider: Box<dyn Provider>,
    /// Stream of the suspended turn, handed to whoever resumes it.
    stream: Option<UnboundedSender<TurnEvent>>,
}

#[derive(Default)]
struct Views {
    turns: Vec<TurnView>,
    in_flight: bool,
}

struct Slot {
    id: String,
    created_at: u64,
    policy: Policy,
    core: Mutex<Core>,
    views: Mutex<Views>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Slot {
    fn observe(&self, event: &TurnEvent) {
        let mut v = lock(&self.views);
        match event {
            TurnEvent::TurnStarted { turn_id, user_message, .. } => v.turns.push(TurnView {
                session_id: self.id.clone(),
                phase: TurnPhase::Running,
                pending_approval: None,
                turn: AgentTurn {
                    turn_id: turn_id.clone(),
                    user_message: user_message.clone(),
                    iterations: Vec::new(),
                    rollback_calls: Vec::new(),
                    retrieved_citations: Vec::new(),
                    proposed_diff: None,
                    approval: Approval::NotRequired,
                    final_answer: String::new(),
                    outcome: None,
                },
            }),
            TurnEvent::ToolCall { turn_id, call } => {
                if let Some(t) = v.turns.iter_mut().rev().find(|t| &t.turn.turn_id == turn_id) {
                    t.turn.iterations.push(call.clone());
                }
            }
            TurnEvent::ApprovalRequired { turn_id, call_id, diff } => {
                if let Some(t) = v.turns.iter_mut().rev().find(|t| &t.turn.turn_id == turn_id) {
                    t.phase = TurnPhase::AwaitingApproval;
                    t.turn.approval = Approval::Pending;
                    t.turn.proposed_diff = Some(diff.clone());
                    t.pending_approval = Some(PendingApproval {
                        call_id: call_id.clone(),
                        diff: diff.clone(),
                    });
                }
            }
            TurnEvent::TurnFinished { turn } => {
                if let Some(t) = v.turns.iter_mut().rev().find(|t| t.turn.turn_id == turn.turn_id) {
                    t.phase = TurnPhase::Finished;
                    t.pending_approval = None;
                    t.turn = turn.clone();
                }
            }
        }
    }

    /// Replaces the partial view with the session's own copy of the
    /// suspended turn.
    fn sync_pending(&self, session: &AgentSession) {
        if let Some(p) = session.pending_turn() {
            let mut v = lock(&self.views);
            if let Some(t) = v.turns.iter_mut().rev().find(|t| t.turn.turn_id == p.turn_id) {
                t.turn = p.clone();
            }
        }
    }

    fn record(&self) -> SessionRecord {
        let v = lock(&self.views);
        SessionRecord {
            session_id: self.id.clone(),
            created_at: self.created_at,
            transcript: v
                .turns
                .iter()
                .filter(|t| t.phase == TurnPhase::Finished)
                .map(|t| t.turn.clone())
                .collect(),
            policy: self.policy.clone(),
        }
    }
}

/// Clears the in-flight mark when a blocking turn task ends, even by panic.
struct InFlight<'a>(&'a Slot);

impl Drop for InFlight<'_> {
    fn drop(&mut self) {
        lock(&self.0.views).in_flight = false;
    }
}

pub struct Service {
    rig: Rig,
    defaults: Policy,
    providers: ProviderFactory,
    clock: Arc<dyn Clock>,
    sessions: RwLock<BTreeMap<String, Arc<Slot>>>,
    next_session: AtomicU64,
}

impl Service {
    pub fn new(rig: Rig, defaults: Policy, providers: ProviderFactory) -> Self {
        let clock = Arc::clone(rig.audit.clock());
        Self {
            rig,
            defaults,
            providers,
            clock,
            sessions: RwLock::default(),
            next_session: AtomicU64::new(1),
        }
    }

    /// Builds the rig and provider factory described by `cfg`. A live
    /// provider is constructed once up front so a missing credential fails
    /// here rather than on the first message.
    pub fn from_config(cfg: &ServiceConfig) -> Result<Self, StartupError> {
        let defaults = Policy::default()
            .with_overrides(&cfg.policy)
            .map_err(|e| StartupError::Config(crate::config::ConfigError::Invalid(e.to_string())))?;
        let index = match (&cfg.knowledge_index, &cfg.knowledge_dir) {
            (Some(path), _) => Index::load(path).map_err(|e| StartupError::Knowledge(e.to_string()))?,
            (None, Some(dir)) => ingest_dir(dir)
                .and_then(Index::build)
                .map_err(|e| StartupError::Knowledge(e.to_string()))?,
            (None, None) => shipped_index(),
        };
        let station = match &cfg.band_table {
            Some(path) => {
                let bands = BandTable::load(path).map_err(|e| StartupError::Bands(e.to_string()))?;
                Station::with_bands(cfg.station_seed, Arc::new(bands))
            }
            None => Station::new(cfg.station_seed),
        };
        let clock: Arc<dyn Clock> = Arc::new(SystemClock);
        let audit = match &cfg.audit_path {
            Some(path) => AuditLog::with_file(clock, path).map_err(StartupError::Audit)?,
            None => AuditLog::in_memory(clock),
        };
        let providers = provider_factory(&cfg.provider)?;
        providers().map_err(|e| StartupError::Provider(e.to_string()))?;
        Ok(Self::new(Rig::new(station, index, audit), defaults, providers))
    }

    pub fn rig(&self) -> &Rig {
        &self.rig
    }

    pub fn defaults(&self) -> &Policy {
        &self.defaults
    }

    fn slot(&self, id: &str) -> Result<Arc<Slot>, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|e| e.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    pub fn create_session(&self, overrides: &PolicyOverrides) -> Result<SessionRecord, ApiError> {
        let policy = self
            .defaults
            .with_overrides(overrides)
            .map_err(|e| ApiError::InvalidPolicyOverride(e.to_string()))?;
        let provider = (self.providers)().map_err(|e| ApiError::ProviderUnavailable(e.to_string()))?;
        let id = format!("s-{}", self.next_session.fetch_add(1, Ordering::SeqCst));
        let slot = Arc::new(Slot {
            id: id.clone(),
            created_at: self.clock.now_ms(),
            policy: policy.clone(),
            core: Mutex::new(Core {
                session: AgentSession::new(id.clone(), policy),
                provider,
                stream: None,
            }),
            views: Mutex::default(),
        });
        let record = slot.record();
        self.sessions.write().unwrap_or_else(|e| e.into_inner()).insert(id, slot);
        Ok(record)
    }

    pub fn session(&self, id: &str) -> Result<SessionRecord, ApiError> {
        Ok(self.slot(id)?.record())
    }

    pub fn turn(&self, id: &str, turn_id: &str) -> Result<TurnView, ApiError> {
        let slot = self.slot(id)?;
        let v = lock(&slot.views);
        v.turns
            .iter()
            .find(|t| t.turn.turn_id == turn_id)
            .cloned()
            .ok_or_else(|| ApiError::UnknownTurn(turn_id.to_string()))
    }

    /// Starts a turn on a blocking worker and returns its event stream. The
    /// stream ends after turn_finished; while the turn waits for approval it
    /// stays open.
    pub fn post_message(self: &Arc<Self>, id: &str, text: &str) -> Result<UnboundedReceiver<TurnEvent>, ApiError> {
        let slot = self.slot(id)?;
        {
            let mut v = lock(&slot.views);
            let unfinished = v.turns.last().filter(|t| t.phase != TurnPhase::Finished);
            if let Some(t) = unfinished {
                return Err(ApiError::BusySession(t.turn.turn_id.clone()));
            }
            if v.in_flight {
                return Err(ApiError::BusySession("a turn is starting".into()));
            }
            v.in_flight = true;
        }
        let (tx, rx) = unbounded();
        let svc = Arc::clone(self);
        let text = text.to_string();
        tokio::task::spawn_blocking(move || {
            let _guard = InFlight(&slot);
            let mut core = lock(&slot.core);
            let Core { session, provider, stream } = &mut *core;
            let mut sink = |e: TurnEvent| {
                slot.observe(&e);
                let _ = tx.unbounded_send(e);
            };
            match session.run_turn(&svc.rig, provider.as_mut(), &text, &mut sink) {
                Ok(TurnStatus::AwaitingApproval { .. }) => {
                    slot.sync_pending(session);
                    *stream = Some(tx);
                }
                Ok(TurnStatus::Finished(_)) => {}
                Err(e) => tracing::warn!(session = %slot.id, error = %e, "turn refused"),
            }
        });
        Ok(rx)
    }

    /// Records the decision and resumes the suspended turn in the background.
    /// Its events continue on the stream that opened the turn.
    pub fn resolve_approval(self: &Arc<Self>, id: &str, turn_id: &str, decision: Decision) -> Result<ApprovalAck, ApiError> {
        let slot = self.slot(id)?;
        {
            let mut v = lock(&slot.views);
            let t = v
                .turns
                .iter_mut()
                .find(|t| t.turn.turn_id == turn_id && t.phase == TurnPhase::AwaitingApproval)
                .ok_or(ApiError::NoPendingApproval)?;
            t.phase = TurnPhase::Running;
            t.pending_approval = None;
            v.in_flight = true;
        }
        let svc = Arc::clone(self);
        let tid = turn_id.to_string();
        let worker = Arc::clone(&slot);
        tokio::task::spawn_blocking(move || {
            let slot = worker;
            let _guard = InFlight(&slot);
            let mut core = lock(&slot.core);
            let Core { session, provider, stream } = &mut *core;
            let tx = stream.take();
            let mut sink = |e: TurnEvent| {
                slot.observe(&e);
                if let Some(tx) = &tx {
                    let _ = tx.unbounded_send(e);
                }
            };
            match session.resolve_approval(&svc.rig, provider.as_mut(), &tid, decision, &mut sink) {
                Ok(TurnStatus::AwaitingApproval { .. }) => {
                    slot.sync_pending(session);
                    *stream = tx;
                }
                Ok(TurnStatus::Finished(_)) => {}
                Err(e) => tracing::warn!(session = %slot.id, error = %e, "approval not applied"),
            }
        });
        Ok(ApprovalAck {
            session_id: id.to_string(),
            turn_id: turn_id.to_string(),
            decision,
        })
    }
}

pub fn provider_factory(cfg: &ProviderConfig) -> Result<ProviderFactory, StartupError> {
    match cfg {
        ProviderConfig::Scripted { scenario } => {
            let script = match scenario {
                Some(path) => Scenario::load(path)
                    .map_err(|e| StartupError::Provider(e.to_string()))?
                    .script()
                    .to_vec(),
                None => Vec::new(),
            };
            Ok(Arc::new(move || Ok(Box::new(ScriptedProvider::new(script.clone())) as Box<dyn Provider>)))
        }
        ProviderConfig::ChatCompletions {
            endpoint,
            model,
            api_key_env,
            ..
        } => {
            let (endpoint, model, env) = (endpoint.clone(), model.clone(), api_key_env.clone());
            let timeout = cfg.timeout().expect("live providers have a timeout");
            Ok(Arc::new(move || {
                ChatCompletionsProvider::from_env(&endpoint, &model, &env, timeout).map(|p| Box::new(p) as Box<dyn Provider>)
            }))
        }
    }
}
