//! Scenario files: a scripted conversation against a seeded station, with
//! machine-checked expectations along the way.
//!
//! ```toml
//! name = "example"
//! station_seed = 7
//!
//! [policy]
//! require_approval = false
//!
//! [provider]
//! kind = "scripted"
//!
//! [configs.band3]
//! band = 3
//! # ...
//!
//! [[script]]
//! tool = "config.validate"
//! config = "band3"
//!
//! [[script]]
//! final = "Validated."
//!
//! [[steps]]
//! say = "Check the band 3 config"
//!
//! [[steps]]
//! expect = { outcome = "completed", tool_calls_at_most = 1 }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::agent::{
    AgentSession, AgentTurn, AuditLog, Clock, Decision, Outcome, Policy, PolicyOverrides, Provider, ProviderResponse,
    Rig, ScriptedProvider, TurnStatus,
};
use crate::calculus::CellConfig;
use crate::knowledge::{ingest_dir, shipped_index, Index};
use crate::station::{FaultKind, KpiSummary, Lifecycle, Station};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing scenario: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("scenario needs a live provider but none was supplied")]
    NoLiveProvider,
    #[error("loading knowledge: {0}")]
    Knowledge(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    Scripted,
    Live,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSpec {
    pub kind: ProviderKind,
}

/// One scripted model response: either a tool call or a final answer.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub args: Option<toml::Table>,
    /// Names an entry of `configs`; shorthand for `args = { config = ... }`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<String>,
    #[serde(default, rename = "final", skip_serializing_if = "Option::is_none")]
    pub final_text: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
pub enum CmpOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
}

impl CmpOp {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            CmpOp::Gt => a > b,
            CmpOp::Ge => a >= b,
            CmpOp::Lt => a < b,
            CmpOp::Le => a <= b,
            CmpOp::Eq => a == b,
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Eq => "==",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KpiMetric {
    AttachSuccessRate,
    AttachAttempts,
    AttachSuccesses,
    MeanConnectedUes,
    MeanThroughputMbps,
    MeanRsrpDbm,
}

impl KpiMetric {
    fn of(self, s: &KpiSummary) -> Option<f64> {
        match self {
            KpiMetric::AttachSuccessRate => s.attach_success_rate,
            KpiMetric::AttachAttempts => Some(f64::from(s.attach_attempts)),
            KpiMetric::AttachSuccesses => Some(f64::from(s.attach_successes)),
            KpiMetric::MeanConnectedUes => Some(s.mean_connected_ues),
            KpiMetric::MeanThroughputMbps => Some(s.mean_throughput_mbps),
            KpiMetric::MeanRsrpDbm => Some(s.mean_rsrp_dbm),
        }
    }
}

/// Predicate over the station's KPI history.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct KpiExpect {
    pub metric: KpiMetric,
    pub op: CmpOp,
    pub value: f64,
    /// Samples newer than `now - window_s` are summarised.
    pub window_s: f64,
}

/// Expectations checked at one point in the scenario. Every field that is
/// set becomes one row of the result table.
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    pub lifecycle: Option<Lifecycle>,
    /// Active fault, or "none".
    pub fault: Option<String>,
    pub outcome: Option<Outcome>,
    pub approval: Option<crate::agent::Approval>,
    pub answer_contains: Option<String>,
    pub citation: Option<String>,
    /// Some cited chunk has a heading containing this text, ignoring case.
    pub cited_heading: Option<String>,
    pub called: Option<String>,
    pub tool_calls_at_most: Option<usize>,
    pub kpi: Option<KpiExpect>,
    pub config_equals_pre_turn: Option<bool>,
    /// Fields the active config must have, by name.
    pub config: Option<toml::Table>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Step {
    pub say: Option<String>,
    pub inject_fault: Option<FaultKind>,
    pub tick: Option<u32>,
    pub dt_s: Option<f64>,
    pub approve: Option<bool>,
    pub reject: Option<bool>,
    pub expect: Option<Expect>,
}

enum Action<'a> {
    Say(&'a str),
    Fault(FaultKind),
    Tick(u32, f64),
    Resolve(Decision),
    Expect(&'a Expect),
}

impl Step {
    fn action(&self) -> Result<Action<'_>, String> {
        let mut found = Vec::new();
        if let Some(s) = &self.say {
            found.push(Action::Say(s));
        }
        if let Some(f) = self.inject_fault {
            found.push(Action::Fault(f));
        }
        if let Some(n) = self.tick {
            found.push(Action::Tick(n, self.dt_s.unwrap_or(1.0)));
        } else if self.dt_s.is_some() {
            return Err("dt_s only goes with tick".into());
        }
        if self.approve == Some(true) {
            found.push(Action::Resolve(Decision::Approved));
        }
        if self.reject == Some(true) {
            found.push(Action::Resolve(Decision::Rejected));
        }
        if let Some(e) = &self.expect {
            found.push(Action::Expect(e));
        }
        match found.len() {
            1 => Ok(found.pop().unwrap()),
            0 => Err("step has no action".into()),
            _ => Err("step has more than one action".into()),
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub station_seed: u64,
    #[serde(default)]
    pub policy: PolicyOverrides,
    pub provider: ProviderSpec,
    /// Knowledge directory, relative to the scenario file. The shipped
    /// manual is used when absent.
    #[serde(default)]
    pub knowledge_dir: Option<PathBuf>,
    #[serde(default)]
    pub configs: BTreeMap<String, CellConfig>,
    #[serde(default)]
    pub script: Vec<ScriptEntry>,
    pub steps: Vec<Step>,
}

/// A parsed and checked scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub file: ScenarioFile,
    pub base_dir: PathBuf,
    script: Vec<ProviderResponse>,
}

impl Scenario {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        Self::from_file(file, base_dir.into())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, base)
    }

    fn from_file(file: ScenarioFile, base_dir: PathBuf) -> Result<Self, ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        for (i, step) in file.steps.iter().enumerate() {
            if let Err(m) = step.action() {
                return invalid(format!("steps[{i}]: {m}"));
            }
        }
        let expects: usize = file
            .steps
            .iter()
            .filter_map(|s| s.expect.as_ref())
            .map(|e| predicates(e).len())
            .sum();
        if expects == 0 {
            return invalid("scenario has no expectations".into());
        }
        if let Some((i, _)) = file
            .steps
            .iter()
            .enumerate()
            .find(|(_, s)| s.expect.as_ref().is_some_and(|e| predicates(e).is_empty()))
        {
            return invalid(format!("steps[{i}]: empty expect"));
        }
        Policy::default()
            .with_overrides(&file.policy)
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;

        let mut script = Vec::new();
        for (i, entry) in file.script.iter().enumerate() {
            script.push(resolve_entry(entry, &file.configs).map_err(|m| ScenarioError::Invalid(format!("script[{i}]: {m}")))?);
        }
        if file.provider.kind == ProviderKind::Live && !script.is_empty() {
            return invalid("a live provider takes no script".into());
        }
        Ok(Self { file, base_dir, script })
    }

    pub fn name(&self) -> &str {
        &self.file.name
    }

    pub fn policy(&self) -> Policy {
        Policy::default().with_overrides(&self.file.policy).expect("checked at load")
    }

    pub fn provider_kind(&self) -> ProviderKind {
        self.file.provider.kind
    }

    /// The resolved model responses, in order.
    pub fn script(&self) -> &[ProviderResponse] {
        &self.script
    }

    pub fn scripted_provider(&self) -> ScriptedProvider {
        ScriptedProvider::new(self.script.clone())
    }

    /// The knowledge index this scenario runs against.
    pub fn index(&self) -> Result<Index, ScenarioError> {
        match &self.file.knowledge_dir {
            None => Ok(shipped_index()),
            Some(dir) => ingest_dir(self.base_dir.join(dir))
                .and_then(Index::build)
                .map_err(|e| ScenarioError::Knowledge(e.to_string())),
        }
    }

    /// Builds a fresh rig and runs every step. A live scenario needs
    /// `live`; a scripted one ignores it.
    pub fn run(
        &self,
        clock: Arc<dyn Clock>,
        policy: Policy,
        live: Option<Box<dyn Provider>>,
    ) -> Result<ScenarioRun, ScenarioError> {
        let mut provider: Box<dyn Provider> = match (self.file.provider.kind, live) {
            (ProviderKind::Scripted, _) => Box::new(self.scripted_provider()),
            (ProviderKind::Live, Some(p)) => p,
            (ProviderKind::Live, None) => return Err(ScenarioError::NoLiveProvider),
        };
        let rig = Rig::new(Station::new(self.file.station_seed), self.index()?, AuditLog::in_memory(clock))
            .with_sleeper(|_| {});
        Ok(self.run_on(&rig, policy, provider.as_mut()))
    }

    /// Runs the steps against an existing rig.
    pub fn run_on(&self, rig: &Rig, policy: Policy, provider: &mut dyn Provider) -> ScenarioRun {
        let started = Instant::now();
        let mut runner = Runner {
            rig,
            session: AgentSession::new(format!("scenario-{}", self.file.name), policy),
            pre_turn_config: None,
            rows: Vec::new(),
            halted: None,
        };
        for (i, step) in self.file.steps.iter().enumerate() {
            let action = step.action().expect("checked at load");
            if let Some(reason) = &runner.halted {
                if let Action::Expect(e) = action {
                    for (name, expected) in predicates(e) {
                        runner.rows.push(Row::fail(i, name, expected, format!("not reached: {reason}")));
                    }
                }
                continue;
            }
            runner.step(i, action, provider);
        }
        ScenarioRun {
            name: self.file.name.clone(),
            rows: runner.rows,
            turns: runner.session.transcript().to_vec(),
            elapsed: started.elapsed(),
        }
    }
}

fn resolve_entry(entry: &ScriptEntry, configs: &BTreeMap<String, CellConfig>) -> Result<ProviderResponse, String> {
    match (&entry.tool, &entry.final_text) {
        (Some(_), Some(_)) => Err("an entry is either a tool call or a final answer".into()),
        (None, None) => Err("entry needs tool or final".into()),
        (None, Some(text)) => {
            if entry.args.is_some() || entry.config.is_some() {
                return Err("final entries take no arguments".into());
            }
            Ok(ProviderResponse::final_text(text))
        }
        (Some(tool), None) => {
            let mut args = match &entry.args {
                Some(t) => serde_json::to_value(t).map_err(|e| e.to_string())?,
                None => json!({}),
            };
            if let Some(name) = &entry.config {
                let cfg = configs.get(name).ok_or_else(|| format!("unknown config {name:?}"))?;
                if args.get("config").is_some() {
                    return Err("config given twice".into());
                }
                args["config"] = serde_json::to_value(cfg).expect("config serializes");
            }
            Ok(ProviderResponse::tool(tool, args))
        }
    }
}

/// The predicates an expect block names, with their expected value rendered.
fn predicates(e: &Expect) -> Vec<(&'static str, String)> {
    let mut out = Vec::new();
    if let Some(v) = e.lifecycle {
        out.push(("lifecycle", v.to_string()));
    }
    if let Some(v) = &e.fault {
        out.push(("fault", v.clone()));
    }
    if let Some(v) = e.outcome {
        out.push(("outcome", json_str(&v)));
    }
    if let Some(v) = e.approval {
        out.push(("approval", json_str(&v)));
    }
    if let Some(v) = &e.answer_contains {
        out.push(("answer_contains", format!("{v:?}")));
    }
    if let Some(v) = &e.citation {
        out.push(("citation", v.clone()));
    }
    if let Some(v) = &e.cited_heading {
        out.push(("cited_heading", format!("{v:?}")));
    }
    if let Some(v) = &e.called {
        out.push(("called", v.clone()));
    }
    if let Some(v) = e.tool_calls_at_most {
        out.push(("tool_calls_at_most", v.to_string()));
    }
    if let Some(k) = &e.kpi {
        out.push(("kpi", format!("{} {} {} over {}s", json_str(&k.metric), k.op.as_str(), k.value, k.window_s)));
    }
    if let Some(v) = e.config_equals_pre_turn {
        out.push(("config_equals_pre_turn", v.to_string()));
    }
    if let Some(t) = &e.config {
        out.push(("config", t.to_string().trim().replace('\n', ", ")));
    }
    out
}

fn json_str<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        Ok(other) => other.to_string(),
        Err(_) => String::new(),
    }
}

/// One evaluated predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Row {
    pub step: usize,
    pub predicate: String,
    pub expected: String,
    pub actual: String,
    pub pass: bool,
}

impl Row {
    fn fail(step: usize, predicate: &str, expected: String, actual: String) -> Self {
        Self {
            step,
            predicate: predicate.to_string(),
            expected,
            actual,
            pass: false,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioRun {
    pub name: String,
    pub rows: Vec<Row>,
    pub turns: Vec<AgentTurn>,
    #[serde(serialize_with = "as_millis")]
    pub elapsed: Duration,
}

fn as_millis<S: serde::Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_u64(d.as_millis() as u64)
}

impl ScenarioRun {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    /// The result table without timing, stable across identical runs.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let w = self.rows.iter().map(|r| r.predicate.len()).max().unwrap_or(9).max(9);
        out.push_str(&format!("scenario {}\n", self.name));
        for r in &self.rows {
            let mark = if r.pass { "PASS" } else { "FAIL" };
            out.push_str(&format!(
                "  {mark}  step {:>2}  {:<w$}  expected {}  actual {}\n",
                r.step, r.predicate, r.expected, r.actual
            ));
        }
        let passed = self.rows.iter().filter(|r| r.pass).count();
        out.push_str(&format!("{passed}/{} expectations passed\n", self.rows.len()));
        out
    }
}

impl fmt::Display for ScenarioRun {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.table())
    }
}

struct Runner<'a> {
    rig: &'a Rig,
    session: AgentSession,
    /// Active config when the most recent `say` began.
    pre_turn_config: Option<Option<CellConfig>>,
    rows: Vec<Row>,
    /// Set when a step could not run; later expects are reported unreached.
    halted: Option<String>,
}

impl Runner<'_> {
    fn step(&mut self, i: usize, action: Action<'_>, provider: &mut dyn Provider) {
        let result = match action {
            Action::Say(text) => {
                self.pre_turn_config = Some(self.rig.station.lock().unwrap().active_config().cloned());
                self.session
                    .run_turn(self.rig, provider, text, &mut |_| {})
                    .map(|_| ())
                    .map_err(|e| e.to_string())
            }
            Action::Resolve(decision) => match self.session.pending_turn().map(|t| t.turn_id.clone()) {
                None => Err("no turn is waiting for approval".to_string()),
                Some(turn_id) => self
                    .session
                    .resolve_approval(self.rig, provider, &turn_id, decision, &mut |_| {})
                    .map(|_: TurnStatus| ())
                    .map_err(|e| e.to_string()),
            },
            Action::Fault(kind) => self
                .rig
                .station
                .lock()
                .unwrap()
                .inject_fault(kind)
                .map_err(|e| e.to_string()),
            Action::Tick(n, dt) => {
                let mut station = self.rig.station.lock().unwrap();
                (0..n).try_for_each(|_| station.tick(dt).map(|_| ())).map_err(|e| e.to_string())
            }
            Action::Expect(e) => {
                self.expect(i, e);
                Ok(())
            }
        };
        if let Err(m) = result {
            self.rows.push(Row::fail(i, "step", "runs".into(), m.clone()));
            self.halted = Some(format!("step {i} failed"));
        }
    }

    fn last_turn(&self) -> Option<&AgentTurn> {
        self.session.pending_turn().or(self.session.transcript().last())
    }

    fn expect(&mut self, i: usize, e: &Expect) {
        for (name, expected) in predicates(e) {
            let (pass, actual) = self.check(name, e);
            self.rows.push(Row {
                step: i,
                predicate: name.to_string(),
                expected,
                actual,
                pass,
            });
        }
    }

    fn check(&self, name: &str, e: &Expect) -> (bool, String) {
        let station = self.rig.station.lock().unwrap();
        let turn = self.last_turn();
        let no_turn = || (false, "no turn yet".to_string());
        match name {
            "lifecycle" => {
                let got = station.lifecycle();
                (Some(got) == e.lifecycle, got.to_string())
            }
            "fault" => {
                let got = station.active_fault().map_or("none".to_string(), |f| f.to_string());
                (got.eq_ignore_ascii_case(e.fault.as_deref().unwrap_or_default()), got)
            }
            "outcome" => match turn {
                None => no_turn(),
                Some(t) => (t.outcome == e.outcome, t.outcome.map_or("pending".into(), |o| json_str(&o))),
            },
            "approval" => match turn {
                None => no_turn(),
                Some(t) => (Some(t.approval) == e.approval, json_str(&t.approval)),
            },
            "answer_contains" => match turn {
                None => no_turn(),
                Some(t) => {
                    let want = e.answer_contains.as_deref().unwrap_or_default();
                    (t.final_answer.contains(want), format!("{:?}", clip(&t.final_answer, 60)))
                }
            },
            "citation" => match turn {
                None => no_turn(),
                Some(t) => {
                    let want = e.citation.as_deref().unwrap_or_default();
                    (t.retrieved_citations.iter().any(|c| c == want), t.retrieved_citations.join(" "))
                }
            },
            "cited_heading" => match turn {
                None => no_turn(),
                Some(t) => {
                    let want = e.cited_heading.as_deref().unwrap_or_default().to_lowercase();
                    let index = self.rig.index.current();
                    let hit = t.retrieved_citations.iter().find(|id| {
                        index
                            .chunk(id)
                            .is_some_and(|c| c.heading_path.iter().any(|h| h.to_lowercase().contains(&want)))
                    });
                    match hit {
                        Some(id) => (true, id.clone()),
                        None => (false, t.retrieved_citations.join(" ")),
                    }
                }
            },
            "called" => match turn {
                None => no_turn(),
                Some(t) => {
                    let want = e.called.as_deref().unwrap_or_default();
                    let ok = t.iterations.iter().any(|c| c.name == want && c.result.is_ok());
                    let names: Vec<&str> = t.iterations.iter().map(|c| c.name.as_str()).collect();
                    (ok, names.join(" "))
                }
            },
            "tool_calls_at_most" => match turn {
                None => no_turn(),
                Some(t) => {
                    let n = t.iterations.len();
                    (Some(n) <= e.tool_calls_at_most, n.to_string())
                }
            },
            "kpi" => {
                let k = e.kpi.as_ref().expect("named only when set");
                let summary = KpiSummary::from_samples(&station.history().window(k.window_s));
                match k.metric.of(&summary) {
                    None => (false, "n/a (no attach attempts)".into()),
                    Some(v) => (k.op.holds(v, k.value), format!("{v:.3}")),
                }
            }
            "config_equals_pre_turn" => match &self.pre_turn_config {
                None => no_turn(),
                Some(before) => {
                    let now = station.active_config();
                    let same = now.map(CellConfig::fingerprint) == before.as_ref().map(CellConfig::fingerprint);
                    (Some(same) == e.config_equals_pre_turn, same.to_string())
                }
            },
            "config" => {
                let want = e.config.as_ref().expect("named only when set");
                match station.active_config() {
                    None => (false, "no config".into()),
                    Some(cfg) => {
                        let have = serde_json::to_value(cfg).expect("config serializes");
                        let mut mismatches = Vec::new();
                        for (field, v) in want {
                            let v = serde_json::to_value(v).unwrap_or(Value::Null);
                            if !json_eq(&have[field.as_str()], &v) {
                                mismatches.push(format!("{field}={}", have[field.as_str()]));
                            }
                        }
                        if mismatches.is_empty() {
                            (true, "match".into())
                        } else {
                            (false, mismatches.join(", "))
                        }
                    }
                }
            }
            other => unreachable!("unknown predicate {other}"),
        }
    }
}

fn clip(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}

/// Equality that treats integer and float encodings of the same number alike.
fn json_eq(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}
