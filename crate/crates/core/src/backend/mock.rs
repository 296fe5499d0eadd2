//! Deterministic in-process backends.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{codes, Backend, BackendDescriptor, BackendKind, BackendReply, InvocationRequest, Output, Payload, TokenUsage};
use crate::bench::{format_number, Cell, Series, Table, TaskKind};

/// One reply list, optionally selected by a substring of the first message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatScript {
    #[serde(default, rename = "match")]
    pub trigger: Option<String>,
    pub replies: Vec<String>,
}

/// Chat model that replays scripted replies in order.
///
/// `{{last}}` in a reply expands to the content of the request's last
/// message, `{{context}}` to every message after the first, newline-joined.
/// An exhausted script fails with a `backend` error unless `cycle` is set.
pub struct ScriptedChat {
    desc: BackendDescriptor,
    scripts: Vec<ChatScript>,
    cycle: bool,
    cursors: Mutex<Vec<usize>>,
}

impl ScriptedChat {
    pub fn new(id: impl Into<String>, replies: Vec<String>) -> Self {
        Self::with_scripts(id, vec![ChatScript { trigger: None, replies }], false)
    }

    pub fn with_scripts(id: impl Into<String>, scripts: Vec<ChatScript>, cycle: bool) -> Self {
        let n = scripts.len();
        ScriptedChat {
            desc: BackendDescriptor::new(id, BackendKind::ChatLlm),
            scripts,
            cycle,
            cursors: Mutex::new(vec![0; n]),
        }
    }

    fn select(&self, first: &str) -> Option<usize> {
        self.scripts
            .iter()
            .position(|s| s.trigger.as_deref().is_some_and(|t| first.contains(t)))
            .or_else(|| self.scripts.iter().position(|s| s.trigger.is_none()))
    }
}

impl Backend for ScriptedChat {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let Payload::Messages(messages) = &request.payload else {
            return BackendReply::failed(codes::BAD_REQUEST, "chat model needs messages");
        };
        let first = messages.first().map(|m| m.content.as_str()).unwrap_or("");
        let Some(idx) = self.select(first) else {
            return BackendReply::failed(codes::BACKEND, "no script matches the request");
        };
        let script = &self.scripts[idx].replies;
        let reply = {
            let mut cursors = self.cursors.lock().unwrap_or_else(|e| e.into_inner());
            let pos = cursors[idx];
            if script.is_empty() || (pos >= script.len() && !self.cycle) {
                return BackendReply::failed(codes::BACKEND, format!("script exhausted after {pos} replies"));
            }
            cursors[idx] = pos + 1;
            script[pos % script.len()].clone()
        };
        let last = messages.last().map(|m| m.content.as_str()).unwrap_or("");
        let mut text = reply.replace("{{last}}", last);
        if text.contains("{{context}}") {
            let rest: Vec<&str> = messages.iter().skip(1).map(|m| m.content.as_str()).collect();
            text = text.replace("{{context}}", &rest.join("\n"));
        }
        let input_tokens = messages.iter().map(|m| super::count_tokens_mock(&m.content)).sum();
        let output_tokens = super::count_tokens_mock(&text);
        BackendReply::ok(
            Output::Text(text),
            TokenUsage {
                input_tokens,
                output_tokens,
            },
        )
    }
}

fn forecast_input(request: &InvocationRequest) -> Result<(&Series, usize), BackendReply> {
    match (&request.payload, request.horizon()) {
        (Payload::Series(s), Some(h)) if !s.is_empty() && h > 0 => Ok((s, h)),
        _ => Err(BackendReply::failed(codes::BAD_REQUEST, "forecast needs a series and horizon")),
    }
}

fn forecast_reply(series: &Series, values: Vec<f64>) -> BackendReply {
    let stamps = series.future_timestamps(values.len());
    BackendReply::ok(
        Output::Series(Series::new(stamps.into_iter().zip(values).collect())),
        TokenUsage::default(),
    )
}

/// Repeats the last observed value.
pub struct LastValue {
    desc: BackendDescriptor,
}

impl LastValue {
    pub fn new(id: impl Into<String>) -> Self {
        LastValue {
            desc: BackendDescriptor::new(id, BackendKind::TsFm),
        }
    }

    pub fn descriptor_mut(&mut self) -> &mut BackendDescriptor {
        &mut self.desc
    }
}

impl Backend for LastValue {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let (series, h) = match forecast_input(request) {
            Ok(x) => x,
            Err(reply) => return reply,
        };
        let last = series.points[series.len() - 1].1;
        forecast_reply(series, vec![last; h])
    }
}

/// Repeats the last full season of length `period` (shortened to the
/// series length when the series is shorter).
pub struct SeasonalNaive {
    desc: BackendDescriptor,
    period: usize,
}

impl SeasonalNaive {
    pub fn new(id: impl Into<String>, period: usize) -> Self {
        SeasonalNaive {
            desc: BackendDescriptor::new(id, BackendKind::TsFm),
            period: period.max(1),
        }
    }
}

impl Backend for SeasonalNaive {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let (series, h) = match forecast_input(request) {
            Ok(x) => x,
            Err(reply) => return reply,
        };
        let values = series.values();
        let n = values.len();
        let p = self.period.min(n);
        forecast_reply(series, (0..h).map(|k| values[n - p + k % p]).collect())
    }
}

/// Fills masked targets from observed rows with identical features,
/// falling back to the whole table: majority class (ties broken by the
/// smallest label) for classification, mean for regression.
pub struct LookupTabular {
    desc: BackendDescriptor,
}

impl LookupTabular {
    pub fn new(id: impl Into<String>) -> Self {
        LookupTabular {
            desc: BackendDescriptor::new(id, BackendKind::TabFm),
        }
    }
}

fn features(row: &[Cell], target: usize) -> Vec<String> {
    row.iter()
        .enumerate()
        .filter(|(j, _)| *j != target)
        .map(|(_, c)| c.render())
        .collect()
}

fn predict(rows: &[&Vec<Cell>], target: usize, regression: bool) -> Option<String> {
    if rows.is_empty() {
        return None;
    }
    if regression {
        let vals: Vec<f64> = rows.iter().filter_map(|r| r[target].as_number()).collect();
        if vals.is_empty() {
            return None;
        }
        return Some(format_number(vals.iter().sum::<f64>() / vals.len() as f64));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for r in rows {
        *counts.entry(r[target].render()).or_default() += 1;
    }
    let best = counts.values().copied().max()?;
    counts.into_iter().find(|(_, c)| *c == best).map(|(k, _)| k)
}

fn infer_regression(request: &InvocationRequest, table: &Table) -> bool {
    match request.config.get("kind").and_then(|v| v.as_str()).and_then(|k| k.parse::<TaskKind>().ok()) {
        Some(kind) => kind == TaskKind::Regression,
        None => {
            let t = table.target_index();
            table.observed_rows().all(|(_, r)| matches!(r[t], Cell::Number(_)))
        }
    }
}

impl Backend for LookupTabular {
    fn descriptor(&self) -> &BackendDescriptor {
        &self.desc
    }

    fn call(&self, request: &InvocationRequest) -> BackendReply {
        let Payload::Table(table) = &request.payload else {
            return BackendReply::failed(codes::BAD_REQUEST, "tabular model needs a table");
        };
        let t = table.target_index();
        let regression = infer_regression(request, table);
        let observed: Vec<&Vec<Cell>> = table.observed_rows().map(|(_, r)| r).collect();
        let mut out = Vec::with_capacity(table.masked_rows.len());
        for &m in &table.masked_rows {
            let key = features(&table.rows[m], t);
            let matching: Vec<&Vec<Cell>> = observed.iter().copied().filter(|r| features(r, t) == key).collect();
            match predict(&matching, t, regression).or_else(|| predict(&observed, t, regression)) {
                Some(v) => out.push(v),
                None => return BackendReply::failed(codes::BACKEND, "no observed rows to learn from"),
            }
        }
        BackendReply::ok(Output::Values(out), TokenUsage::default())
    }
}
