use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::audit::AuditKind;
use super::diff::{diff_against, FieldChange};
use super::policy::Policy;
use super::provider::{ContextChunk, Message, Provider, ProviderError, ProviderRequest, ProviderResponse};
use super::tools::{execute_tool, parse_args, refuse, tool_schemas, CallContext, ConfigArgs, Origin, ToolCall, ToolError, ToolName};
use super::{Rig, SYSTEM_PROMPT};
use crate::calculus::CellConfig;
use crate::station::{KpiSample, KpiSummary, Lifecycle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approval {
    NotRequired,
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approved,
    Rejected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Completed,
    RolledBack,
    IterationLimit,
    ProviderError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedDiff {
    pub old: Option<CellConfig>,
    pub new: CellConfig,
    pub changes: Vec<FieldChange>,
}

/// Full trace of one user request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentTurn {
    pub turn_id: String,
    pub user_message: String,
    /// Calls requested by the model plus any verification read the loop
    /// added, never more than `max_iterations`.
    pub iterations: Vec<ToolCall>,
    /// Calls the loop issued itself to restore the pre-turn config.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rollback_calls: Vec<ToolCall>,
    pub retrieved_citations: Vec<String>,
    pub proposed_diff: Option<ProposedDiff>,
    pub approval: Approval,
    pub final_answer: String,
    /// `None` while the turn is still running or awaiting approval.
    pub outcome: Option<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TurnEvent {
    TurnStarted {
        session_id: String,
        turn_id: String,
        user_message: String,
    },
    ToolCall {
        turn_id: String,
        call: ToolCall,
    },
    ApprovalRequired {
        turn_id: String,
        call_id: String,
        diff: ProposedDiff,
    },
    TurnFinished {
        turn: AgentTurn,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnStatus {
    Finished(AgentTurn),
    AwaitingApproval {
        turn_id: String,
        call_id: String,
        diff: ProposedDiff,
    },
}

impl TurnStatus {
    pub fn finished(self) -> Option<AgentTurn> {
        match self {
            TurnStatus::Finished(t) => Some(t),
            TurnStatus::AwaitingApproval { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SessionError {
    #[error("turn {0} is still in flight")]
    Busy(String),
    #[error("no turn is waiting for approval")]
    NoPendingApproval,
}

struct PendingApply {
    call_id: String,
    args: Value,
}

struct TurnState {
    turn: AgentTurn,
    conversation: Vec<Message>,
    context: Vec<ContextChunk>,
    pre_turn_config: Option<CellConfig>,
    baseline: Option<KpiSummary>,
    /// Fingerprints of configs that validated clean during this turn.
    validated: Vec<String>,
    applied: bool,
    /// Set once an applied config is started and cleared by the next KPI read.
    awaiting_verification: bool,
    pending: Option<PendingApply>,
}

impl TurnState {
    fn cite(&mut self, chunk_id: &str) {
        if !self.turn.retrieved_citations.iter().any(|c| c == chunk_id) {
            self.turn.retrieved_citations.push(chunk_id.to_string());
        }
    }

    fn next_call_id(&self) -> String {
        format!("{}-c{}", self.turn.turn_id, self.turn.iterations.len() + 1)
    }
}

/// Trailing run of RUNNING samples, at most `n` of them.
fn running_tail(samples: &[KpiSample], n: usize) -> Vec<KpiSample> {
    let mut tail: Vec<KpiSample> = samples
        .iter()
        .rev()
        .take_while(|s| s.lifecycle == Lifecycle::Running)
        .take(n)
        .cloned()
        .collect();
    tail.reverse();
    tail
}

fn relative_drop(before: f64, after: f64) -> f64 {
    (before - after) / before
}

/// Describes the regression if either attach success rate or throughput fell
/// by more than `threshold` relative to the baseline.
pub(crate) fn regression(baseline: &KpiSummary, after: &KpiSummary, threshold: f64) -> Option<String> {
    if let (Some(b), Some(a)) = (baseline.attach_success_rate, after.attach_success_rate) {
        if b > 0.0 && relative_drop(b, a) > threshold {
            return Some(format!("attach success rate fell from {b:.2} to {a:.2}"));
        }
    }
    let (b, a) = (baseline.mean_throughput_mbps, after.mean_throughput_mbps);
    if b > 0.0 && relative_drop(b, a) > threshold {
        return Some(format!("downlink throughput fell from {b:.1} to {a:.1} Mbps"));
    }
    None
}

/// One conversation with the agent, bound to the rig's station.
pub struct AgentSession {
    id: String,
    policy: Policy,
    transcript: Vec<AgentTurn>,
    pending: Option<TurnState>,
    turns_started: u64,
}

type Sink<'a> = &'a mut dyn FnMut(TurnEvent);

impl AgentSession {
    pub fn new(id: impl Into<String>, policy: Policy) -> Self {
        Self {
            id: id.into(),
            policy,
            transcript: Vec::new(),
            pending: None,
            turns_started: 0,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn policy(&self) -> &Policy {
        &self.policy
    }

    /// Finished turns, oldest first.
    pub fn transcript(&self) -> &[AgentTurn] {
        &self.transcript
    }

    /// The turn currently suspended for approval, as it stands.
    pub fn pending_turn(&self) -> Option<&AgentTurn> {
        self.pending.as_ref().map(|s| &s.turn)
    }

    pub fn run_turn(
        &mut self,
        rig: &Rig,
        provider: &mut dyn Provider,
        user_message: &str,
        sink: Sink<'_>,
    ) -> Result<TurnStatus, SessionError> {
        if let Some(p) = &self.pending {
            return Err(SessionError::Busy(p.turn.turn_id.clone()));
        }
        self.turns_started += 1;
        let turn_id = format!("turn-{}", self.turns_started);
        sink(TurnEvent::TurnStarted {
            session_id: self.id.clone(),
            turn_id: turn_id.clone(),
            user_message: user_message.to_string(),
        });

        let (pre_turn_config, tail) = {
            let station = rig.station.lock().unwrap();
            let history: Vec<KpiSample> = station.history().last_n(self.policy.verify_ticks as usize);
            (station.active_config().cloned(), running_tail(&history, self.policy.verify_ticks as usize))
        };
        let baseline = (!tail.is_empty()).then(|| KpiSummary::from_samples(&tail));

        let index = rig.index.current();
        let context: Vec<ContextChunk> = index
            .retrieve(user_message, self.policy.retrieval_k)
            .into_iter()
            .filter_map(|hit| index.chunk(&hit.chunk_id))
            .map(|c| ContextChunk {
                chunk_id: c.chunk_id.clone(),
                heading_path: c.heading_path.clone(),
                text: c.text.clone(),
            })
            .collect();

        let mut conversation = Vec::new();
        for past in &self.transcript {
            conversation.push(Message::User {
                content: past.user_message.clone(),
            });
            conversation.push(Message::Assistant {
                content: past.final_answer.clone(),
            });
        }
        conversation.push(Message::User {
            content: user_message.to_string(),
        });

        let mut state = TurnState {
            turn: AgentTurn {
                turn_id,
                user_message: user_message.to_string(),
                iterations: Vec::new(),
                rollback_calls: Vec::new(),
                retrieved_citations: Vec::new(),
                proposed_diff: None,
                approval: Approval::NotRequired,
                final_answer: String::new(),
                outcome: None,
            },
            conversation,
            context,
            pre_turn_config,
            baseline,
            validated: Vec::new(),
            applied: false,
            awaiting_verification: false,
            pending: None,
        };
        for chunk_id in state.context.iter().map(|c| c.chunk_id.clone()).collect::<Vec<_>>() {
            state.cite(&chunk_id);
        }
        Ok(self.drive(rig, provider, state, sink))
    }

    /// Delivers the operator's decision on the suspended apply and resumes
    /// the turn.
    pub fn resolve_approval(
        &mut self,
        rig: &Rig,
        provider: &mut dyn Provider,
        turn_id: &str,
        decision: Decision,
        sink: Sink<'_>,
    ) -> Result<TurnStatus, SessionError> {
        if self.pending.as_ref().map(|s| s.turn.turn_id.as_str()) != Some(turn_id) {
            return Err(SessionError::NoPendingApproval);
        }
        let mut state = self.pending.take().expect("checked above");
        let apply = state.pending.take().expect("suspended turns hold an apply");
        rig.audit.append(
            &self.id,
            turn_id,
            AuditKind::Approval,
            json!({ "call_id": apply.call_id, "decision": decision }),
        );
        let ctx = CallContext {
            session_id: &self.id,
            turn_id,
            call_id: &apply.call_id,
            origin: Origin::Provider,
        };
        let name = ToolName::ApplyConfig.as_str();
        let call = match decision {
            Decision::Approved => {
                state.turn.approval = Approval::Approved;
                execute_tool(rig, ctx, name, &apply.args)
            }
            Decision::Rejected => {
                state.turn.approval = Approval::Rejected;
                refuse(rig, ctx, name, &apply.args, ToolError::Rejected { tool: ToolName::ApplyConfig })
            }
        };
        if let Some(reason) = self.after_call(&mut state, call, sink) {
            return Ok(self.roll_back(rig, state, reason, sink));
        }
        Ok(self.drive(rig, provider, state, sink))
    }

    fn drive(&mut self, rig: &Rig, provider: &mut dyn Provider, mut state: TurnState, sink: Sink<'_>) -> TurnStatus {
        let max = self.policy.max_iterations;
        loop {
            let request = ProviderRequest {
                system_prompt: SYSTEM_PROMPT.to_string(),
                conversation: state.conversation.clone(),
                tool_schemas: tool_schemas(),
                retrieved_context: state.context.clone(),
            };
            let response = match self.ask(rig, provider, &state.turn.turn_id, &request) {
                Ok(r) => r,
                Err(e) => {
                    let answer = format!("The model provider failed and the turn was abandoned: {e}");
                    return self.finish(state, Outcome::ProviderError, answer, sink);
                }
            };

            let (name, args) = match response {
                ProviderResponse::Final { text } => {
                    if state.awaiting_verification && state.turn.iterations.len() < max {
                        let args = json!({ "ticks": self.policy.verify_ticks, "dt_s": self.policy.verify_dt_s });
                        let call_id = state.next_call_id();
                        let ctx = self.ctx(&state, &call_id, Origin::Verification);
                        let call = execute_tool(rig, ctx, ToolName::ReadKpi.as_str(), &args);
                        if let Some(reason) = self.after_call(&mut state, call, sink) {
                            return self.roll_back(rig, state, reason, sink);
                        }
                    }
                    return self.finish(state, Outcome::Completed, text, sink);
                }
                ProviderResponse::ToolCall { name, args } => (name, args),
            };

            if state.turn.iterations.len() >= max {
                let answer = format!(
                    "I stopped after {max} tool calls without reaching an answer. No further changes were made; please narrow the request."
                );
                return self.finish(state, Outcome::IterationLimit, answer, sink);
            }

            let call_id = state.next_call_id();
            if name == ToolName::ApplyConfig.as_str() {
                if let Ok(ConfigArgs { config }) = parse_args::<ConfigArgs>(ToolName::ApplyConfig, &args) {
                    if !state.validated.contains(&config.fingerprint()) {
                        let err = ToolError::Guardrail {
                            tool: ToolName::ApplyConfig,
                            message: "apply requires a config.validate with valid=true on this exact config earlier in the turn".into(),
                        };
                        let call = refuse(rig, self.ctx(&state, &call_id, Origin::Provider), &name, &args, err);
                        if let Some(reason) = self.after_call(&mut state, call, sink) {
                            return self.roll_back(rig, state, reason, sink);
                        }
                        continue;
                    }
                    let old = rig.station.lock().unwrap().active_config().cloned();
                    let diff = ProposedDiff {
                        changes: diff_against(old.as_ref(), &config),
                        old,
                        new: config,
                    };
                    state.turn.proposed_diff = Some(diff.clone());
                    if self.policy.require_approval {
                        return self.suspend(rig, state, call_id, args, diff, sink);
                    }
                }
            }

            let call = execute_tool(rig, self.ctx(&state, &call_id, Origin::Provider), &name, &args);
            if let Some(reason) = self.after_call(&mut state, call, sink) {
                return self.roll_back(rig, state, reason, sink);
            }
        }
    }

    fn ctx<'a>(&'a self, state: &'a TurnState, call_id: &'a str, origin: Origin) -> CallContext<'a> {
        CallContext {
            session_id: &self.id,
            turn_id: &state.turn.turn_id,
            call_id,
            origin,
        }
    }

    fn suspend(
        &mut self,
        rig: &Rig,
        mut state: TurnState,
        call_id: String,
        args: Value,
        diff: ProposedDiff,
        sink: Sink<'_>,
    ) -> TurnStatus {
        state.turn.approval = Approval::Pending;
        rig.audit.append(
            &self.id,
            &state.turn.turn_id,
            AuditKind::Approval,
            json!({ "call_id": call_id, "decision": "pending", "diff": diff }),
        );
        let turn_id = state.turn.turn_id.clone();
        sink(TurnEvent::ApprovalRequired {
            turn_id: turn_id.clone(),
            call_id: call_id.clone(),
            diff: diff.clone(),
        });
        state.pending = Some(PendingApply {
            call_id: call_id.clone(),
            args,
        });
        self.pending = Some(state);
        TurnStatus::AwaitingApproval { turn_id, call_id, diff }
    }

    fn ask(
        &self,
        rig: &Rig,
        provider: &mut dyn Provider,
        turn_id: &str,
        request: &ProviderRequest,
    ) -> Result<ProviderResponse, ProviderError> {
        let mut attempt = 0;
        loop {
            match provider.ask(request) {
                Ok(response) => {
                    rig.audit.append(
                        &self.id,
                        turn_id,
                        AuditKind::Provider,
                        json!({ "attempt": attempt, "response": response }),
                    );
                    return Ok(response);
                }
                Err(e) => {
                    rig.audit.append(
                        &self.id,
                        turn_id,
                        AuditKind::Provider,
                        json!({ "attempt": attempt, "error": e.to_string() }),
                    );
                    if attempt >= self.policy.max_retries {
                        return Err(e);
                    }
                    rig.sleep(Duration::from_millis(self.policy.backoff_base_ms << attempt.min(16)));
                    attempt += 1;
                }
            }
        }
    }

    /// Books a finished call into the turn. Returns the regression reason when
    /// the call was a verification read that calls for a rollback.
    fn after_call(&self, state: &mut TurnState, call: ToolCall, sink: Sink<'_>) -> Option<String> {
        let tool = call.name.parse::<ToolName>().ok();
        let mut regressed = None;
        if let Some(value) = call.result.ok_value() {
            match tool {
                Some(ToolName::KbSearch) => {
                    let ids: Vec<String> = value["results"]
                        .as_array()
                        .into_iter()
                        .flatten()
                        .filter_map(|r| r["chunk_id"].as_str().map(str::to_string))
                        .collect();
                    for id in ids {
                        state.cite(&id);
                    }
                }
                Some(ToolName::Validate) if value["valid"] == json!(true) => {
                    if let Ok(ConfigArgs { config }) = parse_args::<ConfigArgs>(ToolName::Validate, &call.args) {
                        state.validated.push(config.fingerprint());
                    }
                }
                Some(ToolName::ApplyConfig) => {
                    state.applied = true;
                    state.awaiting_verification = false;
                }
                Some(ToolName::Start) if state.applied => state.awaiting_verification = true,
                Some(ToolName::ReadKpi) if state.awaiting_verification => {
                    state.awaiting_verification = false;
                    let after: Option<KpiSummary> = serde_json::from_value(value["summary"].clone()).ok();
                    if let (Some(baseline), Some(after)) = (&state.baseline, after) {
                        regressed = regression(baseline, &after, self.policy.regression_threshold);
                    }
                }
                _ => {}
            }
        }

        state.conversation.push(Message::ToolCall {
            call_id: call.call_id.clone(),
            name: call.name.clone(),
            args: call.args.clone(),
        });
        state.conversation.push(Message::ToolResult {
            call_id: call.call_id.clone(),
            name: call.name.clone(),
            content: call.result.to_content(),
        });
        sink(TurnEvent::ToolCall {
            turn_id: state.turn.turn_id.clone(),
            call: call.clone(),
        });
        state.turn.iterations.push(call);

        regressed.filter(|_| state.pre_turn_config.is_some())
    }

    fn roll_back(&mut self, rig: &Rig, mut state: TurnState, reason: String, sink: Sink<'_>) -> TurnStatus {
        let old = state.pre_turn_config.clone().expect("rollback needs a pre-turn config");
        let on_air = rig.station.lock().unwrap().lifecycle().on_air();
        let mut steps = vec![(ToolName::Validate, json!({ "config": old }))];
        if on_air {
            steps.push((ToolName::Stop, json!({})));
        }
        steps.push((ToolName::ApplyConfig, json!({ "config": old })));
        steps.push((ToolName::Start, json!({})));

        let mut failed = None;
        for (tool, args) in steps {
            let call_id = format!("{}-r{}", state.turn.turn_id, state.turn.rollback_calls.len() + 1);
            let ctx = self.ctx(&state, &call_id, Origin::Rollback);
            let call = execute_tool(rig, ctx, tool.as_str(), &args);
            let ok = call.result.is_ok();
            state.turn.rollback_calls.push(call);
            if !ok {
                failed = Some(tool);
                break;
            }
        }
        let answer = match failed {
            None => format!("The change regressed the cell ({reason}), so the previous configuration was restored."),
            Some(tool) => format!("The change regressed the cell ({reason}) and restoring the previous configuration failed at {tool}."),
        };
        self.finish(state, Outcome::RolledBack, answer, sink)
    }

    fn finish(&mut self, mut state: TurnState, outcome: Outcome, answer: String, sink: Sink<'_>) -> TurnStatus {
        state.turn.outcome = Some(outcome);
        state.turn.final_answer = answer;
        let turn = state.turn;
        self.transcript.push(turn.clone());
        sink(TurnEvent::TurnFinished { turn: turn.clone() });
        TurnStatus::Finished(turn)
    }
}
