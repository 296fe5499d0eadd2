//! Backend invocation protocol.
//!
//! Every backend, whether a chat model or a foundation model, sits behind
//! [`Backend`] and is addressed through a [`Registry`] by id. Requests and
//! results are plain serde types; the same JSON shapes travel over HTTP
//! (`POST /v1/invoke`, `GET /v1/describe`).

pub mod catalog;
pub mod mock;
pub mod remote;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bench::{Series, Table, TaskKind};
use crate::error::RegistryError;

pub use catalog::{BackendCatalog, BackendSpec, RegistryDefaults, RegistryFile};

pub mod codes {
    pub const UNKNOWN_BACKEND: &str = "unknown_backend";
    pub const TRANSPORT: &str = "transport";
    pub const BACKEND: &str = "backend";
    pub const BAD_REQUEST: &str = "bad_request";
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BackendKind {
    ChatLlm,
    TsFm,
    TabFm,
}

impl BackendKind {
    pub fn label(self) -> &'static str {
        match self {
            BackendKind::ChatLlm => "chat-llm",
            BackendKind::TsFm => "ts-fm",
            BackendKind::TabFm => "tab-fm",
        }
    }

    /// Task types a backend of this kind may serve.
    pub fn default_capabilities(self) -> BTreeSet<TaskKind> {
        match self {
            BackendKind::ChatLlm => TaskKind::ALL.into_iter().collect(),
            BackendKind::TsFm => [TaskKind::Forecast].into_iter().collect(),
            BackendKind::TabFm => [TaskKind::Classification, TaskKind::Regression].into_iter().collect(),
        }
    }

    pub fn is_foundation_model(self) -> bool {
        !matches!(self, BackendKind::ChatLlm)
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub backend_id: String,
    pub kind: BackendKind,
    pub capabilities: BTreeSet<TaskKind>,
    #[serde(default)]
    pub endpoint: Option<String>,
}

impl BackendDescriptor {
    pub fn new(backend_id: impl Into<String>, kind: BackendKind) -> Self {
        BackendDescriptor {
            backend_id: backend_id.into(),
            kind,
            capabilities: kind.default_capabilities(),
            endpoint: None,
        }
    }

    pub fn supports(&self, task: TaskKind) -> bool {
        self.capabilities.contains(&task)
    }

    fn check(&self) -> Result<(), String> {
        let allowed = self.kind.default_capabilities();
        if self.capabilities.is_empty() {
            return Err("no capabilities".into());
        }
        if let Some(extra) = self.capabilities.iter().find(|c| !allowed.contains(c)) {
            return Err(format!("a {} backend cannot serve `{extra}` tasks", self.kind));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskType {
    Forecast,
    Tabular,
    Chat,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "user".into(),
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: "assistant".into(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Payload {
    Series(Series),
    Table(Table),
    Messages(Vec<ChatMessage>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Series(Series),
    Values(Vec<String>),
    Text(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationRequest {
    pub backend_id: String,
    pub task_type: TaskType,
    pub payload: Payload,
    #[serde(default)]
    pub config: BTreeMap<String, Value>,
}

impl InvocationRequest {
    pub fn chat(backend_id: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        InvocationRequest {
            backend_id: backend_id.into(),
            task_type: TaskType::Chat,
            payload: Payload::Messages(messages),
            config: BTreeMap::new(),
        }
    }

    pub fn forecast(backend_id: impl Into<String>, series: Series, horizon: usize) -> Self {
        let mut config = BTreeMap::new();
        config.insert("horizon".to_string(), Value::from(horizon));
        InvocationRequest {
            backend_id: backend_id.into(),
            task_type: TaskType::Forecast,
            payload: Payload::Series(series),
            config,
        }
    }

    pub fn tabular(backend_id: impl Into<String>, table: Table, kind: Option<TaskKind>) -> Self {
        let mut config = BTreeMap::new();
        config.insert("target_column".to_string(), Value::from(table.target_column.clone()));
        if let Some(kind) = kind {
            config.insert("kind".to_string(), Value::from(kind.label()));
        }
        InvocationRequest {
            backend_id: backend_id.into(),
            task_type: TaskType::Tabular,
            payload: Payload::Table(table),
            config,
        }
    }

    pub fn horizon(&self) -> Option<usize> {
        self.config.get("horizon").and_then(Value::as_u64).map(|h| h as usize)
    }

    /// Schema checks shared by every backend: payload modality matches the
    /// task type, horizon >= 1, at least one chat message.
    pub fn validate(&self) -> Result<(), String> {
        match (&self.task_type, &self.payload) {
            (TaskType::Forecast, Payload::Series(s)) => {
                if s.is_empty() {
                    return Err("empty series".into());
                }
                match self.config.get("horizon") {
                    Some(h) => match h.as_u64() {
                        Some(h) if h >= 1 => Ok(()),
                        _ => Err("horizon must be an integer >= 1".into()),
                    },
                    None => Err("missing config `horizon`".into()),
                }
            }
            (TaskType::Tabular, Payload::Table(t)) => {
                t.check().map_err(|e| e.to_string())?;
                if let Some(target) = self.config.get("target_column") {
                    if target.as_str() != Some(t.target_column.as_str()) {
                        return Err("config `target_column` disagrees with the table".into());
                    }
                }
                Ok(())
            }
            (TaskType::Chat, Payload::Messages(m)) => {
                if m.is_empty() {
                    Err("chat payload needs at least one message".into())
                } else {
                    Ok(())
                }
            }
            _ => Err("payload modality does not match task_type".into()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

impl ErrorInfo {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        ErrorInfo {
            code: code.to_string(),
            message: message.into(),
        }
    }
}

/// Token counts as carried on the wire.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Usage of one backend call as recorded by the caller.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub backend_id: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_clock_ms: u64,
}

impl UsageRecord {
    pub fn total_tokens(&self) -> u64 {
        self.input_tokens + self.output_tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvocationResult {
    pub status: Status,
    pub output: Option<Output>,
    pub usage: UsageRecord,
    pub error: Option<ErrorInfo>,
}

impl InvocationResult {
    pub fn is_ok(&self) -> bool {
        self.status == Status::Ok
    }

    pub fn to_wire(&self) -> InvokeResponse {
        InvokeResponse {
            status: self.status,
            output: self.output.clone(),
            usage: TokenUsage {
                input_tokens: self.usage.input_tokens,
                output_tokens: self.usage.output_tokens,
            },
            error: self.error.clone(),
        }
    }

    pub fn from_wire(resp: InvokeResponse, backend_id: &str, wall_clock_ms: u64) -> Self {
        InvocationResult {
            status: resp.status,
            output: resp.output,
            usage: UsageRecord {
                backend_id: backend_id.to_string(),
                input_tokens: resp.usage.input_tokens,
                output_tokens: resp.usage.output_tokens,
                wall_clock_ms,
            },
            error: resp.error,
        }
    }

    /// Equality on everything except timing.
    pub fn same_except_timing(&self, other: &InvocationResult) -> bool {
        let mut a = self.clone();
        let mut b = other.clone();
        a.usage.wall_clock_ms = 0;
        b.usage.wall_clock_ms = 0;
        a == b
    }

    pub fn text(&self) -> Option<&str> {
        match &self.output {
            Some(Output::Text(t)) => Some(t),
            _ => None,
        }
    }
}

/// `POST /v1/invoke` response body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvokeResponse {
    pub status: Status,
    pub output: Option<Output>,
    pub usage: TokenUsage,
    pub error: Option<ErrorInfo>,
}

impl InvokeResponse {
    pub fn error(code: &str, message: impl Into<String>) -> Self {
        InvokeResponse {
            status: Status::Error,
            output: None,
            usage: TokenUsage::default(),
            error: Some(ErrorInfo::new(code, message)),
        }
    }
}

/// What a backend hands back for one request. `tokens = None` lets the
/// caller fill usage from the local tokenizer.
#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub outcome: Result<Output, ErrorInfo>,
    pub tokens: Option<TokenUsage>,
}

impl BackendReply {
    pub fn ok(output: Output, tokens: TokenUsage) -> Self {
        BackendReply {
            outcome: Ok(output),
            tokens: Some(tokens),
        }
    }

    pub fn failed(code: &str, message: impl Into<String>) -> Self {
        BackendReply {
            outcome: Err(ErrorInfo::new(code, message)),
            tokens: None,
        }
    }
}

/// A chat model or foundation model reachable by id.
pub trait Backend: Send + Sync {
    fn descriptor(&self) -> &BackendDescriptor;

    /// Serves a request already validated against the shared schema.
    fn call(&self, request: &InvocationRequest) -> BackendReply;
}

/// Immutable id -> backend map, in registration order.
#[derive(Clone, Default)]
pub struct Registry {
    backends: BTreeMap<String, Arc<dyn Backend>>,
    order: Vec<String>,
}

impl fmt::Debug for Registry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Registry").field("backends", &self.order).finish()
    }
}

#[derive(Default)]
pub struct RegistryBuilder {
    backends: Vec<Arc<dyn Backend>>,
}

impl RegistryBuilder {
    pub fn register(mut self, backend: impl Backend + 'static) -> Self {
        self.backends.push(Arc::new(backend));
        self
    }

    pub fn register_arc(mut self, backend: Arc<dyn Backend>) -> Self {
        self.backends.push(backend);
        self
    }

    pub fn build(self) -> Result<Registry, RegistryError> {
        let mut registry = Registry::default();
        for backend in self.backends {
            let desc = backend.descriptor().clone();
            desc.check().map_err(|reason| RegistryError::Invalid {
                id: desc.backend_id.clone(),
                reason,
            })?;
            if registry.backends.contains_key(&desc.backend_id) {
                return Err(RegistryError::Duplicate(desc.backend_id));
            }
            registry.order.push(desc.backend_id.clone());
            registry.backends.insert(desc.backend_id, backend);
        }
        Ok(registry)
    }
}

impl Registry {
    pub fn builder() -> RegistryBuilder {
        RegistryBuilder::default()
    }

    pub fn get(&self, id: &str) -> Option<&dyn Backend> {
        self.backends.get(id).map(|b| b.as_ref())
    }

    pub fn descriptor(&self, id: &str) -> Option<&BackendDescriptor> {
        self.get(id).map(Backend::descriptor)
    }

    pub fn descriptors(&self) -> Vec<BackendDescriptor> {
        self.order.iter().map(|id| self.backends[id].descriptor().clone()).collect()
    }

    pub fn ids_of_kind(&self, kind: BackendKind) -> Vec<String> {
        self.order
            .iter()
            .filter(|id| self.backends[*id].descriptor().kind == kind)
            .cloned()
            .collect()
    }

    /// Ids of foundation models that can serve `task`, in registration order.
    pub fn foundation_models_for(&self, task: TaskKind) -> Vec<String> {
        self.order
            .iter()
            .filter(|id| {
                let d = self.backends[*id].descriptor();
                d.kind.is_foundation_model() && d.supports(task)
            })
            .cloned()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }
}

/// Number of maximal non-whitespace runs.
pub fn count_tokens_mock(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

fn local_token_estimate(request: &InvocationRequest, reply: &BackendReply) -> TokenUsage {
    match (&request.payload, &reply.outcome) {
        (Payload::Messages(messages), outcome) => TokenUsage {
            input_tokens: messages.iter().map(|m| count_tokens_mock(&m.content)).sum(),
            output_tokens: match outcome {
                Ok(Output::Text(t)) => count_tokens_mock(t),
                _ => 0,
            },
        },
        // Foundation-model calls spend no language tokens.
        _ => TokenUsage::default(),
    }
}

/// Dispatches a request through the registry. Always yields exactly one
/// usage record, including on failure.
pub fn invoke(request: &InvocationRequest, registry: &Registry) -> InvocationResult {
    let started = Instant::now();
    let finish = |reply: BackendReply| {
        let tokens = reply.tokens.unwrap_or_else(|| local_token_estimate(request, &reply));
        let usage = UsageRecord {
            backend_id: request.backend_id.clone(),
            input_tokens: tokens.input_tokens,
            output_tokens: tokens.output_tokens,
            wall_clock_ms: started.elapsed().as_millis() as u64,
        };
        match reply.outcome {
            Ok(output) => InvocationResult {
                status: Status::Ok,
                output: Some(output),
                usage,
                error: None,
            },
            Err(error) => InvocationResult {
                status: Status::Error,
                output: None,
                usage,
                error: Some(error),
            },
        }
    };
    let Some(backend) = registry.get(&request.backend_id) else {
        return finish(BackendReply {
            outcome: Err(ErrorInfo::new(
                codes::UNKNOWN_BACKEND,
                format!("unknown backend `{}`", request.backend_id),
            )),
            tokens: Some(TokenUsage::default()),
        });
    };
    if let Err(reason) = request.validate() {
        return finish(BackendReply {
            outcome: Err(ErrorInfo::new(codes::BAD_REQUEST, reason)),
            tokens: Some(TokenUsage::default()),
        });
    }
    let desc = backend.descriptor();
    let kind_ok = match request.task_type {
        TaskType::Chat => desc.kind == BackendKind::ChatLlm,
        TaskType::Forecast => desc.kind == BackendKind::TsFm,
        TaskType::Tabular => desc.kind == BackendKind::TabFm,
    };
    if !kind_ok {
        return finish(BackendReply {
            outcome: Err(ErrorInfo::new(
                codes::BAD_REQUEST,
                format!("backend `{}` ({}) cannot serve {:?} requests", desc.backend_id, desc.kind, request.task_type),
            )),
            tokens: Some(TokenUsage::default()),
        });
    }
    let mut reply = backend.call(request);
    if let (Ok(Output::Series(s)), Some(h)) = (&reply.outcome, request.horizon()) {
        if s.len() != h {
            reply = BackendReply::failed(
                codes::BACKEND,
                format!("forecast has {} points, requested horizon is {h}", s.len()),
            );
        }
    }
    finish(reply)
}
