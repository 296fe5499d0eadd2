//! Translation between an agent's state and a backend's structured
//! input/output: [`compile_query`] builds the request, [`adapt_response`]
//! renders the result back into bounded text.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agent::{AgentState, ModalityPayload};
use crate::backend::{BackendDescriptor, BackendKind, ChatMessage, InvocationRequest, InvocationResult, Output};
use crate::bench::TaskKind;
use crate::error::InterfaceError;

pub const DEFAULT_ADAPTER_BUDGET: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub backend_id: String,
    pub request_digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdaptedContext {
    pub text_block: String,
    pub provenance: Provenance,
}

/// First 16 hex digits of the SHA-256 of the request's JSON encoding.
pub fn request_digest(request: &InvocationRequest) -> String {
    let bytes = serde_json::to_vec(request).expect("requests always serialize");
    let hash = Sha256::digest(&bytes);
    hash.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

pub fn compile_query(state: &AgentState, target: &BackendDescriptor) -> Result<InvocationRequest, InterfaceError> {
    let id = target.backend_id.clone();
    let none = || InterfaceError::NoCompatiblePayload {
        backend_id: target.backend_id.clone(),
    };
    match target.kind {
        BackendKind::TsFm => {
            let series = state
                .parsed_payloads
                .iter()
                .find_map(|p| match p {
                    ModalityPayload::Series(s) => Some(s),
                    _ => None,
                })
                .ok_or_else(none)?;
            let horizon = state.task.output_size as usize;
            if horizon == 0 {
                return Err(InterfaceError::MissingConfig("horizon"));
            }
            Ok(InvocationRequest::forecast(id, series.clone(), horizon))
        }
        BackendKind::TabFm => {
            let table = state
                .parsed_payloads
                .iter()
                .find_map(|p| match p {
                    ModalityPayload::Table(t) => Some(t),
                    _ => None,
                })
                .ok_or_else(none)?;
            let kind = Some(state.task.task).filter(|k| k.is_tabular()).or(Some(TaskKind::Regression));
            Ok(InvocationRequest::tabular(id, table.clone(), kind))
        }
        BackendKind::ChatLlm => {
            let text = state
                .parsed_payloads
                .iter()
                .find_map(|p| match p {
                    ModalityPayload::Text(t) => Some(t),
                    _ => None,
                })
                .ok_or_else(none)?;
            Ok(InvocationRequest::chat(id, vec![ChatMessage::user(text.clone())]))
        }
    }
}

fn truncation_marker(k: usize) -> String {
    format!("…[truncated {k} chars]")
}

/// Cuts `text` to at most `budget` characters, marker included.
pub fn truncate_to_budget(text: &str, budget: usize) -> String {
    let total = text.chars().count();
    if total <= budget {
        return text.to_string();
    }
    // The marker length depends on the number of dropped characters; take
    // the longest prefix that still fits with its marker.
    let min_marker = truncation_marker(1).chars().count();
    let mut keep = budget.saturating_sub(min_marker).min(total);
    loop {
        let marker = truncation_marker(total - keep);
        if keep + marker.chars().count() <= budget || keep == 0 {
            let mut out: String = text.chars().take(keep).collect();
            out.push_str(&marker);
            return out.chars().take(budget).collect();
        }
        keep -= 1;
    }
}

pub fn render_output(output: &Output) -> String {
    match output {
        Output::Series(s) => s.to_csv(),
        Output::Values(v) => v.join("\n"),
        Output::Text(t) => t.clone(),
    }
}

pub fn adapt_response(
    request: &InvocationRequest,
    result: &InvocationResult,
    budget: usize,
) -> Result<AdaptedContext, InterfaceError> {
    let output = match (&result.output, result.is_ok()) {
        (Some(o), true) => o,
        _ => return Err(InterfaceError::FailedInvocation),
    };
    Ok(AdaptedContext {
        text_block: truncate_to_budget(&render_output(output), budget),
        provenance: Provenance {
            backend_id: result.usage.backend_id.clone(),
            request_digest: request_digest(request),
        },
    })
}
