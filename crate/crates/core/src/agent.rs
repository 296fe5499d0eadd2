//! Single-agent runtime: prompt rendering, control policies, the
//! invoke/skip step loop and the parse-retry protocol.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::backend::{invoke, BackendDescriptor, BackendKind, ChatMessage, InvocationRequest, Registry, UsageRecord};
use crate::bench::{Series, Table, TaskInstance, TaskKind};
use crate::error::AgentError;
use crate::interface::{adapt_response, compile_query, DEFAULT_ADAPTER_BUDGET};
use crate::trace::{AgentTrace, ContextEntry, SystemTrace};

/// Reasoning steps allowed per answer attempt.
pub const MAX_STEPS: usize = 8;
/// Retries after the first attempt.
pub const MAX_RETRIES: u32 = 2;
pub const RETRY_NOTICE: &str = "Your previous output could not be parsed. Reply with only the required format.";

/// A modality payload extracted from a task's input.
#[derive(Debug, Clone, PartialEq)]
pub enum ModalityPayload {
    Series(Series),
    Table(Table),
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub task: TaskInstance,
    pub context_entries: Vec<ContextEntry>,
    pub attempt: u32,
    pub parsed_payloads: Vec<ModalityPayload>,
}

impl AgentState {
    pub fn new(task: TaskInstance) -> Self {
        let payload = match task.task {
            TaskKind::Forecast => task.series().ok().map(ModalityPayload::Series),
            TaskKind::Classification | TaskKind::Regression => task.table().ok().map(ModalityPayload::Table),
            TaskKind::Qa => None,
        }
        .unwrap_or_else(|| ModalityPayload::Text(task.input.clone()));
        AgentState {
            task,
            context_entries: Vec::new(),
            attempt: 0,
            parsed_payloads: vec![payload],
        }
    }

    pub fn push(&mut self, entry: ContextEntry) {
        self.context_entries.push(entry);
    }

    pub fn messages(&self) -> Vec<ChatMessage> {
        self.context_entries
            .iter()
            .map(|e| ChatMessage {
                role: e.role().to_string(),
                content: e.content(),
            })
            .collect()
    }

    pub fn last_entry(&self) -> Option<&ContextEntry> {
        self.context_entries.last()
    }

    fn has_tool_result(&self) -> bool {
        self.context_entries.iter().any(|e| matches!(e, ContextEntry::Tool { .. }))
    }

    /// Whether `fm` can consume one of the state's payloads.
    pub fn compatible_with(&self, fm: &BackendDescriptor) -> bool {
        fm.kind.is_foundation_model() && fm.supports(self.task.task) && compile_query(self, fm).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub task_label: String,
    pub mcp_server_description: String,
    pub additional_instructions: String,
    pub input_tag: String,
    pub input_data: String,
    pub output_size: String,
    pub output_format: String,
}

/// Instantiates the unified prompt. Empty optional fields drop their line.
pub fn render_prompt(b: &PromptBundle) -> String {
    let mut out = format!("You are an expert in {}.", b.task_label);
    if !b.mcp_server_description.is_empty() {
        out.push('\n');
        out.push_str(&b.mcp_server_description);
        out.push('.');
    }
    if !b.additional_instructions.is_empty() {
        out.push('\n');
        out.push_str(&b.additional_instructions);
    }
    out.push_str(&format!(
        "\n\n<{tag}>\n{data}\n</{tag}>\n\n<output_size>\n{size}\n</output_size>\n\n{format}",
        tag = b.input_tag,
        data = b.input_data,
        size = b.output_size,
        format = b.output_format,
    ));
    out
}

pub fn task_label(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Qa => "scientific question answering",
        TaskKind::Forecast => "time-series forecasting",
        TaskKind::Classification => "tabular classification",
        TaskKind::Regression => "tabular regression",
    }
}

pub fn input_tag(kind: TaskKind) -> &'static str {
    match kind {
        TaskKind::Qa => "question",
        TaskKind::Forecast => "time_series",
        TaskKind::Classification | TaskKind::Regression => "table",
    }
}

fn output_format(task: &TaskInstance) -> String {
    match task.task {
        TaskKind::Qa if task.output_size > 0 => "Answer in plain text, at most output_size characters.".into(),
        TaskKind::Qa => "Answer in plain text.".into(),
        TaskKind::Forecast => "Answer as timestamp,value CSV.".into(),
        TaskKind::Classification | TaskKind::Regression => {
            let target = task.table().map(|t| t.target_column).unwrap_or_else(|_| "target".into());
            format!("Predict each __MASK__ cell of `{target}`. Answer with one value per line, in row order.")
        }
    }
}

/// The full payload as prompt text: the language-only access path.
pub fn serialize_input(task: &TaskInstance) -> String {
    match task.task {
        TaskKind::Forecast => task.series().map(|s| s.to_csv()).unwrap_or_else(|_| task.input.clone()),
        TaskKind::Classification | TaskKind::Regression => {
            task.table().map(|t| t.to_csv()).unwrap_or_else(|_| task.input.clone())
        }
        TaskKind::Qa => task.input.clone(),
    }
}

/// A fixed-size stand-in for a payload that the foundation model receives.
fn compact_reference(state: &AgentState, fm: &BackendDescriptor) -> String {
    match state.parsed_payloads.first() {
        Some(ModalityPayload::Series(s)) => {
            let first = s.points.first().map(|p| p.0.as_str()).unwrap_or("");
            let last = s.points.last().map(|p| p.0.as_str()).unwrap_or("");
            format!("{} points from {first} to {last}, passed in full to {}", s.len(), fm.backend_id)
        }
        Some(ModalityPayload::Table(t)) => format!(
            "{} rows with columns {}; {} masked `{}` cells; passed in full to {}",
            t.rows.len(),
            t.columns.join(","),
            t.masked_rows.len(),
            t.target_column,
            fm.backend_id
        ),
        _ => serialize_input(&state.task),
    }
}

fn tool_description(fm: &BackendDescriptor) -> String {
    let what = match fm.kind {
        BackendKind::TsFm => "time-series forecasting model",
        BackendKind::TabFm => "tabular prediction model",
        BackendKind::ChatLlm => "language model",
    };
    format!(
        "Tool {id} is a {what} that receives the full input. Reply with the single line `CALL {id}` to run it; its output is returned to you",
        id = fm.backend_id
    )
}

/// Prompt bundle for an agent; `exposed_fm` switches the input block to a
/// compact reference and describes the tool.
pub fn prompt_bundle(state: &AgentState, exposed_fm: Option<&BackendDescriptor>, role_prompt: &str) -> PromptBundle {
    let task = &state.task;
    let mut instructions = task.description.clone();
    if !role_prompt.is_empty() {
        if !instructions.is_empty() {
            instructions.push('\n');
        }
        instructions.push_str(role_prompt);
    }
    PromptBundle {
        task_label: task_label(task.task).into(),
        mcp_server_description: exposed_fm.map(tool_description).unwrap_or_default(),
        additional_instructions: instructions,
        input_tag: input_tag(task.task).into(),
        input_data: match exposed_fm {
            Some(fm) => compact_reference(state, fm),
            None => serialize_input(task),
        },
        output_size: task.output_size.to_string(),
        output_format: output_format(task),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Invoke,
    Skip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlDecision {
    pub action: Action,
    pub target: Option<String>,
}

impl ControlDecision {
    pub fn skip() -> Self {
        ControlDecision {
            action: Action::Skip,
            target: None,
        }
    }

    pub fn invoke(target: impl Into<String>) -> Self {
        ControlDecision {
            action: Action::Invoke,
            target: Some(target.into()),
        }
    }
}

/// Finds the first line of the form `CALL <backend_id>`.
pub fn parse_call_marker(text: &str) -> Option<&str> {
    text.lines().find_map(|line| {
        let mut parts = line.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some("CALL"), Some(id), None) => Some(id),
            _ => None,
        }
    })
}

/// Chooses between invoking a foundation model and asking the chat model.
/// `fm` is the agent's bound foundation model, if any.
pub trait ControlPolicy: Send {
    fn name(&self) -> String;

    /// False when the policy can never invoke; such agents see no tool.
    fn may_invoke(&self) -> bool;

    fn decide(&mut self, state: &AgentState, fm: Option<&BackendDescriptor>) -> ControlDecision;
}

pub struct AlwaysSkip;

impl ControlPolicy for AlwaysSkip {
    fn name(&self) -> String {
        "always-skip".into()
    }

    fn may_invoke(&self) -> bool {
        false
    }

    fn decide(&mut self, _: &AgentState, _: Option<&BackendDescriptor>) -> ControlDecision {
        ControlDecision::skip()
    }
}

/// Invokes the bound model once, as soon as a compatible payload exists.
pub struct AlwaysInvoke {
    pub target: Option<String>,
}

impl ControlPolicy for AlwaysInvoke {
    fn name(&self) -> String {
        match &self.target {
            Some(t) => format!("always-invoke:{t}"),
            None => "always-invoke".into(),
        }
    }

    fn may_invoke(&self) -> bool {
        true
    }

    fn decide(&mut self, state: &AgentState, fm: Option<&BackendDescriptor>) -> ControlDecision {
        let target = self.target.clone().or_else(|| fm.map(|f| f.backend_id.clone()));
        match (target, fm) {
            (Some(t), Some(f)) if !state.has_tool_result() && state.compatible_with(f) => ControlDecision::invoke(t),
            (Some(t), None) if !state.has_tool_result() => ControlDecision::invoke(t),
            _ => ControlDecision::skip(),
        }
    }
}

/// Invokes whatever the chat model's last reply names with `CALL <id>`.
pub struct LlmInduced;

impl ControlPolicy for LlmInduced {
    fn name(&self) -> String {
        "llm-induced".into()
    }

    fn may_invoke(&self) -> bool {
        true
    }

    fn decide(&mut self, state: &AgentState, _: Option<&BackendDescriptor>) -> ControlDecision {
        match state.last_entry() {
            Some(ContextEntry::Reply { text, .. }) => match parse_call_marker(text) {
                Some(id) => ControlDecision::invoke(id),
                None => ControlDecision::skip(),
            },
            _ => ControlDecision::skip(),
        }
    }
}

/// Replays a fixed decision list, then skips.
pub struct Scripted {
    steps: Vec<ControlDecision>,
    cursor: usize,
}

impl Scripted {
    pub fn new(steps: Vec<ControlDecision>) -> Self {
        Scripted { steps, cursor: 0 }
    }

    /// `invoke`, `invoke=<id>` or `skip`, comma-separated.
    pub fn parse(spec: &str) -> Result<Self, String> {
        let steps = spec
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| match s.split_once('=') {
                None if s == "skip" => Ok(ControlDecision::skip()),
                None if s == "invoke" => Ok(ControlDecision {
                    action: Action::Invoke,
                    target: None,
                }),
                Some(("invoke", id)) => Ok(ControlDecision::invoke(id)),
                _ => Err(format!("bad scripted step `{s}`")),
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scripted::new(steps))
    }
}

impl ControlPolicy for Scripted {
    fn name(&self) -> String {
        let steps: Vec<String> = self
            .steps
            .iter()
            .map(|d| match (&d.action, &d.target) {
                (Action::Skip, _) => "skip".to_string(),
                (Action::Invoke, None) => "invoke".to_string(),
                (Action::Invoke, Some(t)) => format!("invoke={t}"),
            })
            .collect();
        format!("scripted:{}", steps.join(","))
    }

    fn may_invoke(&self) -> bool {
        self.steps.iter().any(|d| d.action == Action::Invoke)
    }

    fn decide(&mut self, _: &AgentState, fm: Option<&BackendDescriptor>) -> ControlDecision {
        let Some(step) = self.steps.get(self.cursor) else {
            return ControlDecision::skip();
        };
        self.cursor += 1;
        match (step.action, &step.target) {
            (Action::Invoke, None) => match fm {
                Some(f) => ControlDecision::invoke(&f.backend_id),
                None => ControlDecision::skip(),
            },
            _ => step.clone(),
        }
    }
}

pub type PolicyFactory = Box<dyn Fn(Option<&str>) -> Result<Box<dyn ControlPolicy>, String> + Send + Sync>;

/// Name -> policy factory. A policy spec is `name` or `name:arg`.
pub struct PolicyCatalog {
    factories: BTreeMap<String, PolicyFactory>,
}

impl Default for PolicyCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PolicyCatalog {
    pub fn builtin() -> Self {
        let mut c = PolicyCatalog {
            factories: BTreeMap::new(),
        };
        c.register("always-skip", |_| Ok(Box::new(AlwaysSkip)));
        c.register("always-invoke", |arg| {
            Ok(Box::new(AlwaysInvoke {
                target: arg.map(str::to_string),
            }))
        });
        c.register("llm-induced", |_| Ok(Box::new(LlmInduced)));
        c.register("scripted", |arg| Ok(Box::new(Scripted::parse(arg.unwrap_or(""))?)));
        c
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(Option<&str>) -> Result<Box<dyn ControlPolicy>, String> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn create(&self, spec: &str) -> Result<Box<dyn ControlPolicy>, AgentError> {
        let (name, arg) = match spec.split_once(':') {
            Some((n, a)) => (n, Some(a)),
            None => (spec, None),
        };
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| AgentError::UnknownPolicy(spec.to_string()))?;
        factory(arg).map_err(|_| AgentError::UnknownPolicy(spec.to_string()))
    }
}

fn builtin_policies() -> Arc<PolicyCatalog> {
    static CATALOG: OnceLock<Arc<PolicyCatalog>> = OnceLock::new();
    CATALOG.get_or_init(|| Arc::new(PolicyCatalog::builtin())).clone()
}

pub const DEFAULT_POLICY: &str = "llm-induced";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub agent_id: String,
    #[serde(default)]
    pub role_prompt: String,
    pub chat_backend: String,
    pub eywa: bool,
    #[serde(default)]
    pub fm_backend: Option<String>,
    #[serde(default = "default_policy")]
    pub control_policy: String,
}

fn default_policy() -> String {
    DEFAULT_POLICY.to_string()
}

impl AgentSpec {
    pub fn llm(agent_id: impl Into<String>, chat_backend: impl Into<String>) -> Self {
        AgentSpec {
            agent_id: agent_id.into(),
            role_prompt: String::new(),
            chat_backend: chat_backend.into(),
            eywa: false,
            fm_backend: None,
            control_policy: "always-skip".into(),
        }
    }

    pub fn with_fm(
        agent_id: impl Into<String>,
        chat_backend: impl Into<String>,
        fm_backend: impl Into<String>,
        control_policy: impl Into<String>,
    ) -> Self {
        AgentSpec {
            agent_id: agent_id.into(),
            role_prompt: String::new(),
            chat_backend: chat_backend.into(),
            eywa: true,
            fm_backend: Some(fm_backend.into()),
            control_policy: control_policy.into(),
        }
    }

    pub fn with_role(mut self, role_prompt: impl Into<String>) -> Self {
        self.role_prompt = role_prompt.into();
        self
    }
}

#[derive(Clone)]
pub struct RuntimeOptions {
    pub adapter_budget: usize,
    pub policies: Arc<PolicyCatalog>,
}

impl Default for RuntimeOptions {
    fn default() -> Self {
        RuntimeOptions {
            adapter_budget: DEFAULT_ADAPTER_BUDGET,
            policies: builtin_policies(),
        }
    }
}

impl std::fmt::Debug for RuntimeOptions {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RuntimeOptions")
            .field("adapter_budget", &self.adapter_budget)
            .field("policies", &self.policies.names())
            .finish()
    }
}

/// Validates `decision` against the registry.
pub fn decide(
    state: &AgentState,
    policy: &mut dyn ControlPolicy,
    fm: Option<&BackendDescriptor>,
    registry: &Registry,
) -> Result<ControlDecision, AgentError> {
    let decision = policy.decide(state, fm);
    if decision.action == Action::Invoke {
        let target = decision.target.as_deref().unwrap_or_default();
        let desc = registry
            .descriptor(target)
            .ok_or_else(|| AgentError::Unregistered(target.to_string()))?;
        if !desc.kind.is_foundation_model() {
            return Err(AgentError::WrongKind {
                id: target.to_string(),
                kind: desc.kind.label(),
                expected: "foundation model",
            });
        }
    }
    Ok(decision)
}

/// A failed backend call inside a step; the state is left unchanged.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StepFailure {
    pub backend_id: String,
    pub code: String,
    pub message: String,
}

impl std::fmt::Display for StepFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} ({}): {}", self.backend_id, self.code, self.message)
    }
}

/// Applies one decision: skip appends the chat reply, invoke appends the
/// adapted foundation-model output. Every backend call is recorded in `usage`.
pub fn step(
    state: &mut AgentState,
    decision: &ControlDecision,
    chat_backend: &str,
    registry: &Registry,
    budget: usize,
    usage: &mut Vec<UsageRecord>,
) -> Result<(), StepFailure> {
    let fail = |backend_id: &str, code: &str, message: String| StepFailure {
        backend_id: backend_id.to_string(),
        code: code.to_string(),
        message,
    };
    match decision.action {
        Action::Skip => {
            let request = InvocationRequest::chat(chat_backend, state.messages());
            let result = invoke(&request, registry);
            usage.push(result.usage.clone());
            match (result.text(), &result.error) {
                (Some(text), _) if result.is_ok() => {
                    state.push(ContextEntry::Reply {
                        backend_id: chat_backend.to_string(),
                        text: text.to_string(),
                    });
                    Ok(())
                }
                (_, Some(e)) => Err(fail(chat_backend, &e.code, e.message.clone())),
                _ => Err(fail(chat_backend, crate::backend::codes::BACKEND, "chat reply is not text".into())),
            }
        }
        Action::Invoke => {
            let target = decision.target.as_deref().unwrap_or_default();
            let desc = registry
                .descriptor(target)
                .ok_or_else(|| fail(target, crate::backend::codes::UNKNOWN_BACKEND, "not registered".into()))?;
            let request = compile_query(state, desc)
                .map_err(|e| fail(target, crate::backend::codes::BAD_REQUEST, e.to_string()))?;
            let result = invoke(&request, registry);
            usage.push(result.usage.clone());
            if let Some(e) = &result.error {
                return Err(fail(target, &e.code, e.message.clone()));
            }
            let context = adapt_response(&request, &result, budget)
                .map_err(|e| fail(target, crate::backend::codes::BACKEND, e.to_string()))?;
            state.push(ContextEntry::Tool { context });
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Ok,
    ParseFailed,
    BackendFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub final_answer: String,
    pub trace: SystemTrace,
    pub status: EpisodeStatus,
    /// Answer attempts of the answering agent.
    pub attempts: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cause: Option<String>,
}

/// How one answering run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum AnswerResult {
    Ok(String),
    ParseFailed { last_reply: String, reason: String },
    BackendFailed(StepFailure),
}

/// A live agent bound to one task.
pub struct Agent {
    pub spec: AgentSpec,
    pub state: AgentState,
    policy: Box<dyn ControlPolicy>,
    fm: Option<BackendDescriptor>,
    budget: usize,
}

impl Agent {
    /// Validates the agent spec against the registry and renders the task prompt
    /// as the first context entry.
    pub fn new(task: &TaskInstance, spec: &AgentSpec, registry: &Registry, options: &RuntimeOptions) -> Result<Agent, AgentError> {
        let chat = registry
            .descriptor(&spec.chat_backend)
            .ok_or_else(|| AgentError::Unregistered(spec.chat_backend.clone()))?;
        if chat.kind != BackendKind::ChatLlm {
            return Err(AgentError::WrongKind {
                id: spec.chat_backend.clone(),
                kind: chat.kind.label(),
                expected: BackendKind::ChatLlm.label(),
            });
        }
        if spec.eywa != spec.fm_backend.is_some() {
            return Err(AgentError::FmBinding(spec.agent_id.clone()));
        }
        let fm = match &spec.fm_backend {
            Some(id) => {
                let d = registry.descriptor(id).ok_or_else(|| AgentError::Unregistered(id.clone()))?;
                if !d.kind.is_foundation_model() {
                    return Err(AgentError::WrongKind {
                        id: id.clone(),
                        kind: d.kind.label(),
                        expected: "foundation model",
                    });
                }
                Some(d.clone())
            }
            None => None,
        };
        let policy = if spec.eywa {
            options.policies.create(&spec.control_policy)?
        } else {
            Box::new(AlwaysSkip)
        };
        let mut state = AgentState::new(task.clone());
        let exposed = fm.as_ref().filter(|f| policy.may_invoke() && state.compatible_with(f));
        let prompt = render_prompt(&prompt_bundle(&state, exposed, &spec.role_prompt));
        state.push(ContextEntry::Prompt { text: prompt });
        Ok(Agent {
            spec: spec.clone(),
            state,
            policy,
            fm,
            budget: options.adapter_budget,
        })
    }

    /// Runs decide/step until the chat model gives a reply without a call
    /// marker after a skip. `Ok(None)` when the step limit is reached.
    pub fn run_until_reply(&mut self, registry: &Registry, usage: &mut Vec<UsageRecord>) -> Result<Option<String>, StepFailure> {
        for _ in 0..MAX_STEPS {
            let decision = decide(&self.state, self.policy.as_mut(), self.fm.as_ref(), registry).map_err(|e| StepFailure {
                backend_id: self.spec.agent_id.clone(),
                code: crate::backend::codes::BAD_REQUEST.into(),
                message: e.to_string(),
            })?;
            step(&mut self.state, &decision, &self.spec.chat_backend, registry, self.budget, usage)?;
            if decision.action == Action::Skip {
                if let Some(ContextEntry::Reply { text, .. }) = self.state.last_entry() {
                    if parse_call_marker(text).is_none() {
                        return Ok(Some(text.clone()));
                    }
                }
            }
        }
        Ok(None)
    }

    /// Produces a final answer under the task's output contract, with up to
    /// [`MAX_RETRIES`] re-prompts.
    pub fn answer(&mut self, registry: &Registry, usage: &mut Vec<UsageRecord>) -> AnswerResult {
        let mut last_reply = String::new();
        let mut reason = String::new();
        for attempt in 1..=MAX_RETRIES + 1 {
            self.state.attempt = attempt;
            if attempt > 1 {
                self.state.push(ContextEntry::Notice {
                    text: RETRY_NOTICE.to_string(),
                });
            }
            match self.run_until_reply(registry, usage) {
                Err(f) => return AnswerResult::BackendFailed(f),
                Ok(None) => reason = format!("no final answer within {MAX_STEPS} steps"),
                Ok(Some(reply)) => match self.state.task.parse_answer(&reply) {
                    Ok(_) => return AnswerResult::Ok(reply),
                    Err(e) => {
                        last_reply = reply;
                        reason = e;
                    }
                },
            }
        }
        AnswerResult::ParseFailed { last_reply, reason }
    }

    pub fn trace(&self) -> AgentTrace {
        AgentTrace {
            agent_id: self.spec.agent_id.clone(),
            chat_backend: self.spec.chat_backend.clone(),
            eywa: self.spec.eywa,
            fm_backend: self.spec.fm_backend.clone(),
            entries: self.state.context_entries.clone(),
            attempts: self.state.attempt,
        }
    }

    pub fn policy_name(&self) -> String {
        self.policy.name()
    }

    pub fn exposed_fm(&self) -> Option<&BackendDescriptor> {
        self.fm.as_ref()
    }
}

/// Converts an answering result plus a trace into an episode outcome.
pub(crate) fn finish_episode(result: AnswerResult, attempts: u32, mut trace: SystemTrace) -> EpisodeOutcome {
    let (final_answer, status, cause) = match result {
        AnswerResult::Ok(a) => (a, EpisodeStatus::Ok, None),
        AnswerResult::ParseFailed { last_reply, reason } => (last_reply, EpisodeStatus::ParseFailed, Some(reason)),
        AnswerResult::BackendFailed(f) => (String::new(), EpisodeStatus::BackendFailed, Some(f.to_string())),
    };
    if status == EpisodeStatus::Ok {
        trace.final_answer = Some(final_answer.clone());
    }
    EpisodeOutcome {
        final_answer,
        trace,
        status,
        attempts,
        cause,
    }
}

pub fn run_episode(task: &TaskInstance, spec: &AgentSpec, registry: &Registry) -> Result<EpisodeOutcome, AgentError> {
    run_episode_with(task, spec, registry, &RuntimeOptions::default())
}

pub fn run_episode_with(
    task: &TaskInstance,
    spec: &AgentSpec,
    registry: &Registry,
    options: &RuntimeOptions,
) -> Result<EpisodeOutcome, AgentError> {
    let mut agent = Agent::new(task, spec, registry, options)?;
    let mut usage = Vec::new();
    let result = agent.answer(registry, &mut usage);
    let trace = SystemTrace {
        agents: vec![agent.trace()],
        rounds: Vec::new(),
        usage,
        notes: Vec::new(),
        final_answer: None,
    };
    Ok(finish_episode(result, agent.state.attempt, trace))
}
