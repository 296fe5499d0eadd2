//! Execution traces shared by single agents, multi-agent systems and the
//! orchestrator.

use serde::{Deserialize, Serialize};

use crate::backend::UsageRecord;
use crate::interface::AdaptedContext;

/// One item of an agent's append-only context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ContextEntry {
    /// The rendered task prompt.
    Prompt { text: String },
    /// A chat-model reply.
    Reply { backend_id: String, text: String },
    /// An adapted foundation-model result.
    Tool { context: AdaptedContext },
    /// A message received from another agent.
    Inbox { from: usize, round: usize, body: String },
    /// Harness instruction: retry notice or synthesis request.
    Notice { text: String },
}

impl ContextEntry {
    pub fn role(&self) -> &'static str {
        match self {
            ContextEntry::Reply { .. } => "assistant",
            _ => "user",
        }
    }

    pub fn content(&self) -> String {
        match self {
            ContextEntry::Prompt { text } | ContextEntry::Notice { text } => text.clone(),
            ContextEntry::Reply { text, .. } => text.clone(),
            ContextEntry::Tool { context } => context.text_block.clone(),
            ContextEntry::Inbox { from, round, body } => format!("Message from agent {from} (round {round}):\n{body}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageEnvelope {
    pub from: usize,
    pub to: usize,
    pub round: usize,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentTrace {
    pub agent_id: String,
    pub chat_backend: String,
    pub eywa: bool,
    pub fm_backend: Option<String>,
    pub entries: Vec<ContextEntry>,
    /// Final-answer attempts made (0 for agents that never answered).
    pub attempts: u32,
}

impl AgentTrace {
    /// The conversation as JSON; equal transcripts mean equal conversations.
    pub fn transcript(&self) -> String {
        serde_json::to_string(&self.entries).expect("entries serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub envelopes: Vec<MessageEnvelope>,
    /// Context length of each agent at the end of the round.
    pub state_lens: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aborted: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemTrace {
    pub agents: Vec<AgentTrace>,
    pub rounds: Vec<RoundRecord>,
    pub usage: Vec<UsageRecord>,
    pub notes: Vec<String>,
    pub final_answer: Option<String>,
}

impl SystemTrace {
    pub fn total_tokens(&self) -> u64 {
        self.usage.iter().map(UsageRecord::total_tokens).sum()
    }

    pub fn input_tokens(&self) -> u64 {
        self.usage.iter().map(|u| u.input_tokens).sum()
    }

    pub fn output_tokens(&self) -> u64 {
        self.usage.iter().map(|u| u.output_tokens).sum()
    }

    /// Tokens spent on calls to the given backends.
    pub fn tokens_for(&self, ids: &[&str]) -> u64 {
        self.usage
            .iter()
            .filter(|u| ids.contains(&u.backend_id.as_str()))
            .map(UsageRecord::total_tokens)
            .sum()
    }

    /// JSON with all timing zeroed; identical for reproducible runs.
    pub fn canonical_json(&self) -> String {
        let mut t = self.clone();
        for u in &mut t.usage {
            u.wall_clock_ms = 0;
        }
        serde_json::to_string(&t).expect("trace serializes")
    }
}
