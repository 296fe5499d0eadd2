//! HTTP-backed backends.

use std::time::Duration;

use serde::Deserialize;
use serde_json::{json, Value};

use super::{
    codes, Backend, BackendDescriptor, BackendKind, BackendReply, InvocationRequest, InvokeResponse, Output, Payload,
    Status, TokenUsage,
};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);
pub const LLM_BASE_URL_VAR: &str = "EYWA_LLM_BASE_URL";
pub const LLM_API_KEY_VAR: &str = "EYWA_LLM_API_KEY";

fn http_agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

fn join_url(base: &str, path: &str) -> String {
    format!("{}/{}", base.trim_end_matches('/'), path.trim_start_matches('/'))
}

/// A backend served by another process speaking `/v1/invoke`.
pub struct RemoteBackend {
    desc: BackendDescriptor,
    remote_id: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    /// `remote_id` is the id the server knows the backend by.
    pub fn new(
        id: impl Into<String>,
        kind: BackendKind,
        endpoint: impl Into<String>,
        remote_id: Option<String>,
        timeout: Duration,
    ) -> Self {
        let mut desc = BackendDescriptor::new(id, kind);
        desc.endpoint = Some(endpoint.into());
        let remote_id = remote_id.unwrap_or_else(|| desc.backend_id.clone());
        RemoteBackend {
            desc,
            remote_id,
            agent: http_agent(timeout),
        }
    }

    fn endpoint(&self) -> &str {
        self.desc.endpoint.as_deref().unwrap_or_default()
    }
}

impl Backend for RemoteBackend {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let mut wire = request.clone();
        wire.backend_id = self.remote_id.clone();
        let url = join_url(self.endpoint(), "/v1/invoke");
        let mut resp = match self.agent.post(&url).send_json(&wire) {
            Ok(r) => r,
            Err(e) => return BackendReply::failed(codes::TRANSPORT, format!("POST {url}: {e}")),
        };
        let body: InvokeResponse = match resp.body_mut().read_json() {
            Ok(b) => b,
            Err(e) => return BackendReply::failed(codes::TRANSPORT, format!("bad response from {url}: {e}")),
        };
        let outcome = match (body.status, body.output, body.error) {
            (Status::Ok, Some(output), _) => Ok(output),
            (Status::Ok, None, _) => Err(super::ErrorInfo::new(codes::BACKEND, "ok response without output")),
            (Status::Error, _, Some(err)) => Err(err),
            (Status::Error, _, None) => Err(super::ErrorInfo::new(codes::BACKEND, "error response without detail")),
        };
        BackendReply {
            outcome,
            tokens: Some(body.usage),
        }
    }
}

/// Fetches `GET /v1/describe` from a server.
pub fn fetch_descriptors(endpoint: &str, timeout: Duration) -> Result<Vec<BackendDescriptor>, String> {
    let url = join_url(endpoint, "/v1/describe");
    let mut resp = http_agent(timeout).get(&url).call().map_err(|e| format!("GET {url}: {e}"))?;
    if resp.status().as_u16() != 200 {
        return Err(format!("GET {url}: HTTP {}", resp.status().as_u16()));
    }
    resp.body_mut().read_json().map_err(|e| format!("bad describe response: {e}"))
}

/// Chat model behind an OpenAI-compatible `/chat/completions` endpoint.
/// Base URL and key come from the environment at construction time.
pub struct OpenAiChat {
    desc: BackendDescriptor,
    model: String,
    base_url: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<CompletionUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChoiceMessage,
}

#[derive(Deserialize)]
struct ChoiceMessage {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct CompletionUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

impl OpenAiChat {
    pub fn from_env(id: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, String> {
        let base_url = std::env::var(LLM_BASE_URL_VAR).map_err(|_| format!("{LLM_BASE_URL_VAR} is not set"))?;
        let api_key = std::env::var(LLM_API_KEY_VAR).ok().filter(|k| !k.is_empty());
        Ok(Self::new(id, model, base_url, api_key, timeout))
    }

    pub fn new(
        id: impl Into<String>,
        model: impl Into<String>,
        base_url: impl Into<String>,
        api_key: Option<String>,
        timeout: Duration,
    ) -> Self {
        let base_url = base_url.into();
        let mut desc = BackendDescriptor::new(id, BackendKind::ChatLlm);
        desc.endpoint = Some(base_url.clone());
        OpenAiChat {
            desc,
            model: model.into(),
            base_url,
            api_key,
            agent: http_agent(timeout),
        }
    }
}

impl Backend for OpenAiChat {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let Payload::Messages(messages) = &request.payload else {
            return BackendReply::failed(codes::BAD_REQUEST, "chat model needs messages");
        };
        let msgs: Vec<Value> = messages
            .iter()
            .map(|m| {
                let role = match m.role.as_str() {
                    "system" | "assistant" => m.role.as_str(),
                    _ => "user",
                };
                json!({"role": role, "content": m.content})
            })
            .collect();
        let body = json!({"model": self.model, "messages": msgs, "temperature": 0});
        let url = join_url(&self.base_url, "/chat/completions");
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = match req.send_json(&body) {
            Ok(r) => r,
            Err(e) => return BackendReply::failed(codes::TRANSPORT, format!("POST {url}: {e}")),
        };
        let status = resp.status().as_u16();
        if status != 200 {
            let detail = resp.body_mut().read_to_string().unwrap_or_default();
            return BackendReply::failed(codes::BACKEND, format!("HTTP {status}: {detail}"));
        }
        let completion: Completion = match resp.body_mut().read_json() {
            Ok(c) => c,
            Err(e) => return BackendReply::failed(codes::TRANSPORT, format!("bad completion: {e}")),
        };
        let Some(text) = completion.choices.into_iter().next().and_then(|c| c.message.content) else {
            return BackendReply::failed(codes::BACKEND, "completion has no content");
        };
        BackendReply {
            outcome: Ok(Output::Text(text)),
            tokens: completion.usage.map(|u| TokenUsage {
                input_tokens: u.prompt_tokens,
                output_tokens: u.completion_tokens,
            }),
        }
    }
}
