//! Planner-driven system selection: the planner prompt, strict validation
//! of the returned configuration, instantiation and execution, and a
//! brute-force oracle over a finite configuration space.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::agent::{run_episode_with, AgentSpec, EpisodeOutcome, EpisodeStatus, RuntimeOptions, DEFAULT_POLICY, RETRY_NOTICE};
use crate::backend::{invoke, BackendKind, ChatMessage, InvocationRequest, Registry, UsageRecord};
use crate::bench::TaskInstance;
use crate::error::{ConfigViolation, MasError, OrchestraError, RegistryError};
use crate::mas::{build_topology, run_mas_with, TopologyCatalog, TopologySpec, DEFAULT_TOPOLOGY_POOL};
use crate::metrics::score_answer;

pub const CONFIG_FIELDS: [&str; 6] = ["eywa", "setting", "model", "multi_agent_type", "foundation_model", "agents"];
pub const AGENT_FIELDS: [&str; 5] = ["agent_id", "role_prompt", "model", "eywa", "foundation_model"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Setting {
    #[serde(rename = "single-agent")]
    SingleAgent,
    #[serde(rename = "multi-agent")]
    MultiAgent,
}

/// One entry of `agents` in a planner configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlannedAgent {
    pub agent_id: String,
    pub role_prompt: String,
    pub model: String,
    pub eywa: bool,
    pub foundation_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrchestraConfig {
    pub eywa: bool,
    pub setting: Setting,
    pub model: Option<String>,
    pub multi_agent_type: Option<String>,
    pub foundation_model: Option<String>,
    pub agents: Vec<PlannedAgent>,
}

impl OrchestraConfig {
    pub fn single(eywa: bool, model: impl Into<String>, fm: Option<String>) -> Self {
        OrchestraConfig {
            eywa,
            setting: Setting::SingleAgent,
            model: Some(model.into()),
            multi_agent_type: None,
            foundation_model: fm,
            agents: Vec::new(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigSpace {
    pub llm_pool: Vec<String>,
    pub fm_pool: Vec<String>,
    pub topology_pool: Vec<String>,
    /// Explicit candidates; when absent, `enumerate` generates them.
    #[serde(default)]
    pub candidates: Option<Vec<OrchestraConfig>>,
}

impl ConfigSpace {
    pub fn new(llm_pool: Vec<String>, fm_pool: Vec<String>, topology_pool: Vec<String>) -> Self {
        ConfigSpace {
            llm_pool,
            fm_pool,
            topology_pool,
            candidates: None,
        }
    }

    /// Every chat model and foundation model in the registry, default
    /// topology pool.
    pub fn from_registry(registry: &Registry) -> Self {
        let mut fms = registry.ids_of_kind(BackendKind::TsFm);
        fms.extend(registry.ids_of_kind(BackendKind::TabFm));
        ConfigSpace::new(
            registry.ids_of_kind(BackendKind::ChatLlm),
            fms,
            DEFAULT_TOPOLOGY_POOL.iter().map(|s| s.to_string()).collect(),
        )
    }

    pub fn with_candidates(mut self, candidates: Vec<OrchestraConfig>) -> Self {
        self.candidates = Some(candidates);
        self
    }

    /// Deterministic, finite list of configurations: single agents over
    /// every model (plain, then with each foundation model), then each
    /// topology at its default size with homogeneous agents.
    pub fn enumerate(&self) -> Vec<OrchestraConfig> {
        if let Some(c) = &self.candidates {
            return c.clone();
        }
        let catalog = TopologyCatalog::shared();
        let fm_choices: Vec<Option<&String>> = std::iter::once(None).chain(self.fm_pool.iter().map(Some)).collect();
        let mut out = Vec::new();
        for model in &self.llm_pool {
            for fm in &fm_choices {
                out.push(OrchestraConfig::single(fm.is_some(), model, fm.cloned()));
            }
        }
        for topo in &self.topology_pool {
            let Ok(generator) = catalog.get(topo) else { continue };
            let n = generator.default_agents();
            for model in &self.llm_pool {
                for fm in &fm_choices {
                    let agents = (0..n)
                        .map(|i| PlannedAgent {
                            agent_id: format!("agent-{i}"),
                            role_prompt: generator.role(i, n),
                            model: model.clone(),
                            eywa: fm.is_some(),
                            foundation_model: fm.cloned(),
                        })
                        .collect();
                    out.push(OrchestraConfig {
                        eywa: fm.is_some(),
                        setting: Setting::MultiAgent,
                        model: None,
                        multi_agent_type: Some(topo.clone()),
                        foundation_model: fm.cloned(),
                        agents,
                    });
                }
            }
        }
        out
    }

    fn check_pools(&self) -> Result<(), OrchestraError> {
        if self.llm_pool.is_empty() {
            return Err(OrchestraError::EmptyPool("LLM"));
        }
        if self.topology_pool.is_empty() {
            return Err(OrchestraError::EmptyPool("topology"));
        }
        Ok(())
    }
}

fn fm_line(registry: &Registry, id: &str) -> String {
    match registry.descriptor(id) {
        Some(d) => {
            let caps: Vec<&str> = d.capabilities.iter().map(|c| c.label()).collect();
            let what = match d.kind {
                BackendKind::TsFm => "time-series foundation model",
                BackendKind::TabFm => "tabular foundation model",
                BackendKind::ChatLlm => "language model",
            };
            format!("- {id}: {what} for {} tasks", caps.join(", "))
        }
        None => format!("- {id}"),
    }
}

pub fn render_planner_prompt(task: &TaskInstance, space: &ConfigSpace, registry: &Registry) -> Result<String, OrchestraError> {
    space.check_pools()?;
    let catalog = TopologyCatalog::shared();
    let llms: Vec<String> = space.llm_pool.iter().map(|id| format!("- {id}: chat language model")).collect();
    let fms: Vec<String> = if space.fm_pool.is_empty() {
        vec!["- (none)".to_string()]
    } else {
        space.fm_pool.iter().map(|id| fm_line(registry, id)).collect()
    };
    let topologies: Vec<String> = space
        .topology_pool
        .iter()
        .map(|t| match catalog.get(t) {
            Ok(g) => format!("- {t}: {}", g.description()),
            Err(_) => format!("- {t}"),
        })
        .collect();
    Ok(format!(
        r#"You are an orchestration planner for the Eywa Agentic System.

Your job is to choose an execution configuration for a single task.

Available LLM models and descriptions:
{llms}

Available foundation models and descriptions:
{fms}

Supported multi-agent topology pool:
{topologies}

Input task:
- Task Description: {description}
- Domain: {domain}
- Task Type: {task_type}

Hard constraints:
- Output must be valid JSON only (no markdown, no code fence, no extra text).
- All six fields of the output format must be present.
- "eywa" enables foundation-model calls; "setting" is "single-agent" or "multi-agent".
- An agent spec is {{"agent_id": <text>, "role_prompt": <text>, "model": <llm_model>, "eywa": true or false, "foundation_model": <foundation_model> or null}}; "foundation_model" is non-null exactly when "eywa" is true.
- The number of agents must suit the chosen topology.
- If "setting" is "single-agent":
  - "model" must be a valid model string.
  - "multi_agent_type" must be null.
  - "foundation_model" should be in the available foundation models or null.
  - "agents" must be an empty list [].
- If "setting" is "multi-agent":
  - "model" must be null.
  - "multi_agent_type" must be in the topology pool.
  - "foundation_model" should be in the available foundation models or null.
  - "agents" must be a non-empty list of valid agent specs.

Output format:
{{
  "eywa": true or false,
  "setting": "single-agent" or "multi-agent",
  "model": <llm_model> or null,
  "multi_agent_type": <multi_agent_topology> or null,
  "foundation_model": <foundation_model> or null,
  "agents": [<agent_spec_1>, <agent_spec_2>, ...] or []
}}"#,
        llms = llms.join("\n"),
        fms = fms.join("\n"),
        topologies = topologies.join("\n"),
        description = task.description,
        domain = task.domain.label(),
        task_type = task.task.label(),
    ))
}

/// Removes one surrounding Markdown code fence, if present.
fn strip_fence(text: &str) -> Option<&str> {
    let rest = text.strip_prefix("```")?;
    let body_start = rest.find('\n')? + 1;
    let body = rest[body_start..].trim_end().strip_suffix("```")?;
    Some(body)
}

/// A parsed configuration and whether a code fence had to be removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedConfig {
    pub config: OrchestraConfig,
    pub fence_stripped: bool,
}

fn violation(rule: impl Into<String>) -> ConfigViolation {
    ConfigViolation::new(rule)
}

fn opt_string(obj: &Map<String, Value>, key: &str, ctx: &str) -> Result<Option<String>, ConfigViolation> {
    match &obj[key] {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(s.clone())),
        _ => Err(violation(format!("{ctx}{key} must be a string or null"))),
    }
}

fn check_fields(obj: &Map<String, Value>, fields: &[&str], ctx: &str) -> Result<(), ConfigViolation> {
    if let Some(missing) = fields.iter().find(|f| !obj.contains_key(**f)) {
        return Err(violation(format!("{ctx}missing field {missing}")));
    }
    if let Some(extra) = obj.keys().find(|k| !fields.contains(&k.as_str())) {
        return Err(violation(format!("{ctx}unexpected field {extra}")));
    }
    Ok(())
}

fn parse_agent(v: &Value, space: &ConfigSpace, idx: usize) -> Result<PlannedAgent, ConfigViolation> {
    let ctx = format!("agents[{idx}]: ");
    let obj = v.as_object().ok_or_else(|| violation(format!("{ctx}agent spec must be an object")))?;
    check_fields(obj, &AGENT_FIELDS, &ctx)?;
    let agent_id = obj["agent_id"]
        .as_str()
        .ok_or_else(|| violation(format!("{ctx}agent_id must be a string")))?;
    let role_prompt = obj["role_prompt"]
        .as_str()
        .ok_or_else(|| violation(format!("{ctx}role_prompt must be a string")))?;
    let model = obj["model"]
        .as_str()
        .filter(|m| space.llm_pool.iter().any(|p| p == m))
        .ok_or_else(|| violation(format!("{ctx}model must be a valid model string")))?;
    let eywa = obj["eywa"]
        .as_bool()
        .ok_or_else(|| violation(format!("{ctx}eywa must be true or false")))?;
    let fm = opt_string(obj, "foundation_model", &ctx)?;
    if let Some(f) = &fm {
        if !space.fm_pool.contains(f) {
            return Err(violation(format!(
                "{ctx}foundation_model should be in the available foundation models or null"
            )));
        }
    }
    if eywa != fm.is_some() {
        return Err(violation(format!(
            "{ctx}foundation_model must be non-null exactly when eywa is true"
        )));
    }
    Ok(PlannedAgent {
        agent_id: agent_id.to_string(),
        role_prompt: role_prompt.to_string(),
        model: model.to_string(),
        eywa,
        foundation_model: fm,
    })
}

/// Parses a planner reply and enforces every configuration constraint.
pub fn parse_and_validate_config(reply: &str, space: &ConfigSpace) -> Result<ParsedConfig, ConfigViolation> {
    let trimmed = reply.trim();
    let (body, fence_stripped) = match strip_fence(trimmed) {
        Some(inner) => (inner.trim(), true),
        None => (trimmed, false),
    };
    let value: Value =
        serde_json::from_str(body).map_err(|_| violation("output must be valid JSON only"))?;
    let obj = value
        .as_object()
        .ok_or_else(|| violation("output must be a single JSON object"))?;
    check_fields(obj, &CONFIG_FIELDS, "")?;
    let eywa = obj["eywa"].as_bool().ok_or_else(|| violation("eywa must be true or false"))?;
    let setting = match obj["setting"].as_str() {
        Some("single-agent") => Setting::SingleAgent,
        Some("multi-agent") => Setting::MultiAgent,
        _ => return Err(violation("setting must be single-agent or multi-agent")),
    };
    let model = opt_string(obj, "model", "")?;
    let topo = opt_string(obj, "multi_agent_type", "")?;
    let fm = opt_string(obj, "foundation_model", "")?;
    let agents_raw = obj["agents"]
        .as_array()
        .ok_or_else(|| violation("agents must be a list"))?;
    if let Some(f) = &fm {
        if !space.fm_pool.contains(f) {
            return Err(violation("foundation_model should be in the available foundation models or null"));
        }
    }
    match setting {
        Setting::SingleAgent => {
            if !model.as_ref().is_some_and(|m| space.llm_pool.contains(m)) {
                return Err(violation("model must be a valid model string"));
            }
            if topo.is_some() {
                return Err(violation("multi_agent_type must be null"));
            }
            if !agents_raw.is_empty() {
                return Err(violation("agents must be an empty list"));
            }
        }
        Setting::MultiAgent => {
            if model.is_some() {
                return Err(violation("model must be null"));
            }
            let Some(t) = topo.as_ref().filter(|t| space.topology_pool.contains(t)) else {
                return Err(violation("multi_agent_type must be in the topology pool"));
            };
            if agents_raw.is_empty() {
                return Err(violation("agents must be a non-empty list of valid agent specs"));
            }
            let generator = TopologyCatalog::shared()
                .get(t)
                .map_err(|_| violation("multi_agent_type must be in the topology pool"))?;
            if let Err(reason) = generator.generate(agents_raw.len()) {
                return Err(violation(format!("the number of agents must suit the topology: {reason}")));
            }
        }
    }
    let agents = agents_raw
        .iter()
        .enumerate()
        .map(|(i, a)| parse_agent(a, space, i))
        .collect::<Result<Vec<_>, _>>()?;
    let ids: BTreeSet<&str> = agents.iter().map(|a| a.agent_id.as_str()).collect();
    if ids.len() != agents.len() {
        return Err(violation("agent ids must be distinct"));
    }
    Ok(ParsedConfig {
        config: OrchestraConfig {
            eywa,
            setting,
            model,
            multi_agent_type: topo,
            foundation_model: fm,
            agents,
        },
        fence_stripped,
    })
}

/// A configuration bound to concrete agents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecutableSystem {
    Single(AgentSpec),
    Multi { topology: TopologySpec, agents: Vec<AgentSpec> },
}

impl ExecutableSystem {
    pub fn run(&self, task: &TaskInstance, registry: &Registry, options: &RuntimeOptions) -> Result<EpisodeOutcome, MasError> {
        match self {
            ExecutableSystem::Single(spec) => Ok(run_episode_with(task, spec, registry, options)?),
            ExecutableSystem::Multi { topology, agents } => run_mas_with(task, topology, agents, registry, options),
        }
    }
}

/// Builds the system a validated configuration describes. Foundation
/// models are used only when the top-level `eywa` flag is set; FM-bound agents
/// follow `control_policy`.
pub fn instantiate(config: &OrchestraConfig, control_policy: &str) -> Result<ExecutableSystem, OrchestraError> {
    match config.setting {
        Setting::SingleAgent => {
            let model = config.model.clone().ok_or_else(|| violation("model must be a valid model string"))?;
            let spec = match (&config.foundation_model, config.eywa) {
                (Some(fm), true) => AgentSpec::with_fm("agent-0", model, fm.clone(), control_policy),
                _ => AgentSpec::llm("agent-0", model),
            };
            Ok(ExecutableSystem::Single(spec))
        }
        Setting::MultiAgent => {
            let name = config
                .multi_agent_type
                .as_deref()
                .ok_or_else(|| violation("multi_agent_type must be in the topology pool"))?;
            let generator = TopologyCatalog::shared().get(name)?;
            let topology = build_topology(name, config.agents.len(), generator.default_rounds())?;
            let agents = config
                .agents
                .iter()
                .map(|a| {
                    let spec = match (&a.foundation_model, a.eywa && config.eywa) {
                        (Some(fm), true) => AgentSpec::with_fm(&a.agent_id, &a.model, fm.clone(), control_policy),
                        _ => AgentSpec::llm(&a.agent_id, &a.model),
                    };
                    spec.with_role(a.role_prompt.clone())
                })
                .collect();
            Ok(ExecutableSystem::Multi { topology, agents })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConductorDecision {
    pub raw_planner_reply: String,
    pub config: OrchestraConfig,
    /// Planner calls summed into one record.
    pub planner_usage: UsageRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestraOutcome {
    pub outcome: EpisodeOutcome,
    pub decision: ConductorDecision,
    pub planner_attempts: u32,
    pub fallback: bool,
}

#[derive(Debug, Clone)]
pub struct OrchestraOptions {
    /// Control policy of instantiated FM-bound agents.
    pub control_policy: String,
    pub runtime: RuntimeOptions,
}

impl Default for OrchestraOptions {
    fn default() -> Self {
        OrchestraOptions {
            control_policy: DEFAULT_POLICY.to_string(),
            runtime: RuntimeOptions::default(),
        }
    }
}

/// Configuration used when the planner never produces a valid one.
pub fn fallback_config(space: &ConfigSpace) -> Result<OrchestraConfig, OrchestraError> {
    let model = space.llm_pool.first().ok_or(OrchestraError::EmptyPool("LLM"))?;
    Ok(OrchestraConfig::single(false, model, None))
}

pub fn run_orchestra(
    task: &TaskInstance,
    space: &ConfigSpace,
    planner_backend: &str,
    registry: &Registry,
) -> Result<OrchestraOutcome, OrchestraError> {
    run_orchestra_with(task, space, planner_backend, registry, &OrchestraOptions::default())
}

pub fn run_orchestra_with(
    task: &TaskInstance,
    space: &ConfigSpace,
    planner_backend: &str,
    registry: &Registry,
    options: &OrchestraOptions,
) -> Result<OrchestraOutcome, OrchestraError> {
    let planner = registry
        .descriptor(planner_backend)
        .ok_or_else(|| crate::error::AgentError::Unregistered(planner_backend.to_string()))?;
    if planner.kind != BackendKind::ChatLlm {
        return Err(crate::error::AgentError::WrongKind {
            id: planner_backend.to_string(),
            kind: planner.kind.label(),
            expected: BackendKind::ChatLlm.label(),
        }
        .into());
    }
    let prompt = render_planner_prompt(task, space, registry)?;
    let mut messages = vec![ChatMessage::user(prompt)];
    let mut usage: Vec<UsageRecord> = Vec::new();
    let mut notes = Vec::new();
    let mut chosen: Option<(String, OrchestraConfig)> = None;
    let mut last_reply = String::new();
    let mut attempts = 0;
    for attempt in 1..=crate::agent::MAX_RETRIES + 1 {
        attempts = attempt;
        let result = invoke(&InvocationRequest::chat(planner_backend, messages.clone()), registry);
        usage.push(result.usage.clone());
        let Some(reply) = result.text().map(str::to_string) else {
            let e = result.error.map(|e| format!("{}: {}", e.code, e.message)).unwrap_or_default();
            notes.push(format!("planner call failed: {e}"));
            break;
        };
        match parse_and_validate_config(&reply, space) {
            Ok(parsed) => {
                if parsed.fence_stripped {
                    notes.push("planner reply was wrapped in a code fence; fence removed".into());
                }
                chosen = Some((reply, parsed.config));
                break;
            }
            Err(v) => {
                notes.push(format!("planner attempt {attempt}: {v}"));
                messages.push(ChatMessage::assistant(reply.clone()));
                messages.push(ChatMessage::user(RETRY_NOTICE));
                last_reply = reply;
            }
        }
    }
    let fallback = chosen.is_none();
    let (raw, config) = match chosen {
        Some(c) => c,
        None => {
            notes.push("planner fallback: LLM-only single agent with the first pool model".into());
            (last_reply, fallback_config(space)?)
        }
    };
    notes.push(format!("config: {}", config.to_json()));
    let system = instantiate(&config, &options.control_policy)?;
    let mut outcome = system.run(task, registry, &options.runtime)?;
    let planner_usage = UsageRecord {
        backend_id: planner_backend.to_string(),
        input_tokens: usage.iter().map(|u| u.input_tokens).sum(),
        output_tokens: usage.iter().map(|u| u.output_tokens).sum(),
        wall_clock_ms: usage.iter().map(|u| u.wall_clock_ms).sum(),
    };
    usage.append(&mut outcome.trace.usage);
    outcome.trace.usage = usage;
    notes.append(&mut outcome.trace.notes);
    outcome.trace.notes = notes;
    Ok(OrchestraOutcome {
        outcome,
        decision: ConductorDecision {
            raw_planner_reply: raw,
            config,
            planner_usage,
        },
        planner_attempts: attempts,
        fallback,
    })
}

/// Loss of an episode: 1 - utility, with failed episodes at loss 1.
pub fn utility_loss(task: &TaskInstance, outcome: &EpisodeOutcome) -> f64 {
    if outcome.status != EpisodeStatus::Ok {
        return 1.0;
    }
    score_answer(task, &outcome.final_answer).map(|s| 1.0 - s.value).unwrap_or(1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub configs: Vec<OrchestraConfig>,
    /// `losses[c][t]`: loss of config `c` on task `t`.
    pub losses: Vec<Vec<f64>>,
    /// Per task, the index of the first config with minimal loss.
    pub best_config: Vec<usize>,
    pub oracle_mean_loss: f64,
    pub fixed_mean_losses: Vec<f64>,
}

impl OracleReport {
    pub fn best_fixed_mean_loss(&self) -> f64 {
        self.fixed_mean_losses.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Runs every configuration on every task (twice, to check determinism),
/// then compares per-task selection against every fixed configuration.
/// `make_registry` must return a fresh registry for each episode.
pub fn oracle_conductor<R, S>(
    tasks: &[TaskInstance],
    space: &ConfigSpace,
    make_registry: R,
    scorer: S,
    options: &OrchestraOptions,
) -> Result<OracleReport, OrchestraError>
where
    R: Fn() -> Result<Registry, RegistryError> + Sync,
    S: Fn(&TaskInstance, &EpisodeOutcome) -> f64 + Sync,
{
    let configs = space.enumerate();
    if configs.is_empty() {
        return Err(OrchestraError::EmptyPool("configuration"));
    }
    let systems = configs
        .iter()
        .map(|c| instantiate(c, &options.control_policy))
        .collect::<Result<Vec<_>, _>>()?;
    let cells: Vec<(usize, usize)> = (0..configs.len()).flat_map(|c| (0..tasks.len()).map(move |t| (c, t))).collect();
    let run_cell = |c: usize, t: usize| -> Result<EpisodeOutcome, OrchestraError> {
        let registry = make_registry().map_err(|e| OrchestraError::Config(violation(e.to_string())))?;
        Ok(systems[c].run(&tasks[t], &registry, &options.runtime)?)
    };
    let results: Vec<Result<f64, OrchestraError>> = cells
        .par_iter()
        .map(|&(c, t)| {
            let first = run_cell(c, t)?;
            let second = run_cell(c, t)?;
            if first.final_answer != second.final_answer || first.trace.canonical_json() != second.trace.canonical_json() {
                return Err(OrchestraError::NonDeterministic { config: c, task: t });
            }
            Ok(scorer(&tasks[t], &first))
        })
        .collect();
    let mut losses = vec![vec![0.0; tasks.len()]; configs.len()];
    for ((c, t), r) in cells.into_iter().zip(results) {
        losses[c][t] = r?;
    }
    let n = tasks.len().max(1) as f64;
    let fixed_mean_losses: Vec<f64> = losses.iter().map(|row| row.iter().sum::<f64>() / n).collect();
    let best_config: Vec<usize> = (0..tasks.len())
        .map(|t| {
            (0..configs.len()).fold(0, |best, c| if losses[c][t] < losses[best][t] { c } else { best })
        })
        .collect();
    let oracle_mean_loss = best_config.iter().enumerate().map(|(t, &c)| losses[c][t]).sum::<f64>() / n;
    Ok(OracleReport {
        configs,
        losses,
        best_config,
        oracle_mean_loss,
        fixed_mean_losses,
    })
}
