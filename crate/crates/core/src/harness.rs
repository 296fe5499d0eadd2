//! Batch execution over a benchmark, scoring, per-domain reports, the
//! mock protocol server and benchmark conversion.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agent::{run_episode_with, AgentSpec, EpisodeOutcome, EpisodeStatus, RuntimeOptions, DEFAULT_POLICY};
use crate::backend::mock::{ChatScript, LastValue, LookupTabular, ScriptedChat, SeasonalNaive};
use crate::backend::{
    codes, invoke, BackendCatalog, BackendKind, InvocationRequest, InvokeResponse, Registry, RegistryFile,
    UsageRecord,
};
use crate::bench::{convert_csv, load_benchmark, parse_benchmark_jsonl, BenchmarkSet, Domain, ParentDomain, TaskInstance, TaskKind};
use crate::error::{HarnessError, MasError, OrchestraError};
use crate::mas::{build_topology, default_agent_specs, run_mas_with, TopologyCatalog};
use crate::metrics::{score_answer, summarize, SliceSummary, UtilityScore};
use crate::orchestra::{run_orchestra_with, ConfigSpace, OrchestraConfig, OrchestraOptions};

/// The bundled 12-instance desk benchmark.
pub const DESK_BENCHMARK: &str = include_str!("../data/desk_bench.jsonl");
/// Scripted registry whose chat replies solve [`DESK_BENCHMARK`].
pub const DESK_REGISTRY: &str = include_str!("../data/desk_registry.json");

pub fn desk_benchmark() -> BenchmarkSet {
    BenchmarkSet {
        instances: parse_benchmark_jsonl(DESK_BENCHMARK).expect("bundled benchmark is valid"),
        source_path: "<desk>".into(),
    }
}

pub fn desk_registry() -> RegistryFile {
    RegistryFile::parse(DESK_REGISTRY).expect("bundled registry is valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SystemSelector {
    Llm,
    FmAgent,
    Mas(String),
    Orchestra,
}

impl FromStr for SystemSelector {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "llm" => Ok(SystemSelector::Llm),
            "eywa-agent" => Ok(SystemSelector::FmAgent),
            "orchestra" => Ok(SystemSelector::Orchestra),
            other => match other.strip_prefix("mas:") {
                Some(t) if TopologyCatalog::shared().get(t).is_ok() => Ok(SystemSelector::Mas(t.to_string())),
                _ => Err(HarnessError::BadSystem(s.to_string())),
            },
        }
    }
}

impl fmt::Display for SystemSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SystemSelector::Llm => f.write_str("llm"),
            SystemSelector::FmAgent => f.write_str("eywa-agent"),
            SystemSelector::Mas(t) => write!(f, "mas:{t}"),
            SystemSelector::Orchestra => f.write_str("orchestra"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub bench: PathBuf,
    pub system: SystemSelector,
    pub registry: PathBuf,
    pub workers: usize,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub repeats: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Ok,
    ParseFailed,
    BackendFailed,
    SystemError,
    MissingPrediction,
}

impl From<EpisodeStatus> for RecordStatus {
    fn from(s: EpisodeStatus) -> Self {
        match s {
            EpisodeStatus::Ok => RecordStatus::Ok,
            EpisodeStatus::ParseFailed => RecordStatus::ParseFailed,
            EpisodeStatus::BackendFailed => RecordStatus::BackendFailed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceRecord {
    pub index: usize,
    pub repeat: usize,
    pub system: String,
    pub domain: Domain,
    pub task: TaskKind,
    pub final_answer: String,
    /// 0 for failed or unscorable instances.
    pub utility: f64,
    pub score: Option<UtilityScore>,
    pub status: RecordStatus,
    pub cause: Option<String>,
    pub retries: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub total_tokens: u64,
    pub wall_clock_ms: u64,
    pub usage: Vec<UsageRecord>,
    pub orchestra_config: Option<OrchestraConfig>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SliceLevel {
    SubDomain,
    Parent,
    Overall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceRow {
    pub level: SliceLevel,
    pub name: String,
    pub utility: Option<SliceSummary>,
    pub time_ms: Option<SliceSummary>,
    pub tokens: Option<SliceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportHeader {
    pub system: String,
    pub benchmark: String,
    pub registry: String,
    pub workers: usize,
    pub seed: u64,
    pub repeats: usize,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub header: ReportHeader,
    pub records: Vec<InstanceRecord>,
    /// Nine sub-domains, three parents, then overall.
    pub slices: Vec<SliceRow>,
    /// Mean utility of each repeat.
    pub repeat_means: Vec<f64>,
}

fn slice_row(level: SliceLevel, name: &str, records: &[&InstanceRecord]) -> SliceRow {
    let stat = |f: &dyn Fn(&InstanceRecord) -> f64| summarize(&records.iter().map(|r| f(r)).collect::<Vec<_>>()).ok();
    SliceRow {
        level,
        name: name.to_string(),
        utility: stat(&|r| r.utility),
        time_ms: stat(&|r| r.wall_clock_ms as f64),
        tokens: stat(&|r| r.total_tokens as f64),
    }
}

impl RunReport {
    pub fn assemble(header: ReportHeader, mut records: Vec<InstanceRecord>) -> RunReport {
        records.sort_by_key(|r| (r.repeat, r.index));
        let mut slices = Vec::new();
        for d in Domain::ALL {
            let rs: Vec<_> = records.iter().filter(|r| r.domain == d).collect();
            slices.push(slice_row(SliceLevel::SubDomain, d.label(), &rs));
        }
        for p in ParentDomain::ALL {
            let rs: Vec<_> = records.iter().filter(|r| r.domain.parent() == p).collect();
            slices.push(slice_row(SliceLevel::Parent, p.label(), &rs));
        }
        let all: Vec<_> = records.iter().collect();
        slices.push(slice_row(SliceLevel::Overall, "overall", &all));
        let mut by_repeat: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &records {
            by_repeat.entry(r.repeat).or_default().push(r.utility);
        }
        let repeat_means = by_repeat.values().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect();
        RunReport {
            header,
            records,
            slices,
            repeat_means,
        }
    }

    pub fn slice(&self, name: &str) -> Option<&SliceRow> {
        self.slices.iter().find(|s| s.name == name)
    }

    pub fn overall(&self) -> &SliceRow {
        self.slices.last().expect("assembled reports have an overall row")
    }

    pub fn total_tokens(&self) -> u64 {
        self.records.iter().map(|r| r.total_tokens).sum()
    }

    /// The report with every timing field zeroed.
    pub fn without_timing(&self) -> RunReport {
        let records = self
            .records
            .iter()
            .cloned()
            .map(|mut r| {
                r.wall_clock_ms = 0;
                r.usage.iter_mut().for_each(|u| u.wall_clock_ms = 0);
                r
            })
            .collect();
        RunReport::assemble(self.header.clone(), records)
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(&self.without_timing()).expect("report serializes")
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

fn io_err(path: &Path, e: impl fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

pub fn load_report(path: impl AsRef<Path>) -> Result<RunReport, HarnessError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: not a run report: {e}", path.display())))
}

pub fn write_report(report: &RunReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    fs::write(path, report.to_json_pretty()).map_err(|e| io_err(path, e))
}

/// A resolved system plus the registry recipe it runs against.
pub struct Runner {
    selector: SystemSelector,
    file: RegistryFile,
    catalog: BackendCatalog,
    chat: String,
    policy: String,
    options: RuntimeOptions,
    space: Option<ConfigSpace>,
    planner: Option<String>,
}

impl Runner {
    pub fn new(selector: SystemSelector, file: RegistryFile) -> Result<Runner, HarnessError> {
        Self::with_catalog(selector, file, BackendCatalog::builtin())
    }

    pub fn with_catalog(selector: SystemSelector, file: RegistryFile, catalog: BackendCatalog) -> Result<Runner, HarnessError> {
        let registry = catalog.build(&file.backends)?;
        let defaults = &file.defaults;
        let chats = registry.ids_of_kind(BackendKind::ChatLlm);
        let chat = match &defaults.chat {
            Some(c) => c.clone(),
            None => chats
                .first()
                .cloned()
                .ok_or_else(|| HarnessError::Config("registry has no chat backend".into()))?,
        };
        let check_chat = |id: &str| match registry.descriptor(id) {
            Some(d) if d.kind == BackendKind::ChatLlm => Ok(()),
            Some(_) => Err(HarnessError::Config(format!("`{id}` is not a chat backend"))),
            None => Err(HarnessError::Config(format!("unknown backend `{id}`"))),
        };
        check_chat(&chat)?;
        let policy = defaults.control_policy.clone().unwrap_or_else(|| DEFAULT_POLICY.to_string());
        let mut options = RuntimeOptions::default();
        options.policies.create(&policy).map_err(|e| HarnessError::Config(e.to_string()))?;
        if let Some(b) = defaults.adapter_budget {
            options.adapter_budget = b;
        }
        let has_fm = registry.descriptors().iter().any(|d| d.kind.is_foundation_model());
        if matches!(selector, SystemSelector::FmAgent) && !has_fm {
            return Err(HarnessError::Config("eywa-agent needs at least one foundation model".into()));
        }
        let (space, planner) = if selector == SystemSelector::Orchestra {
            let planner = defaults
                .planner
                .clone()
                .ok_or_else(|| HarnessError::Config("orchestra needs `defaults.planner`".into()))?;
            check_chat(&planner)?;
            let mut space = ConfigSpace::from_registry(&registry);
            match &defaults.llm_pool {
                Some(p) => space.llm_pool = p.clone(),
                None if space.llm_pool.len() > 1 => space.llm_pool.retain(|id| *id != planner),
                None => {}
            }
            if let Some(p) = &defaults.fm_pool {
                space.fm_pool = p.clone();
            }
            for id in &space.llm_pool {
                check_chat(id)?;
            }
            for id in &space.fm_pool {
                match registry.descriptor(id) {
                    Some(d) if d.kind.is_foundation_model() => {}
                    _ => return Err(HarnessError::Config(format!("`{id}` is not a foundation model"))),
                }
            }
            if space.llm_pool.is_empty() {
                return Err(HarnessError::Config("empty LLM pool".into()));
            }
            (Some(space), Some(planner))
        } else {
            (None, None)
        };
        Ok(Runner {
            selector,
            file,
            catalog,
            chat,
            policy,
            options,
            space,
            planner,
        })
    }

    pub fn selector(&self) -> &SystemSelector {
        &self.selector
    }

    /// A registry with fresh backend state.
    pub fn fresh_registry(&self) -> Result<Registry, HarnessError> {
        Ok(self.catalog.build(&self.file.backends)?)
    }

    fn fm_for(&self, task: &TaskInstance, registry: &Registry) -> Option<String> {
        let pool = self.file.defaults.fm_pool.clone();
        let allowed = |id: &String| pool.as_ref().is_none_or(|p| p.contains(id));
        registry
            .foundation_models_for(task.task)
            .into_iter()
            .find(|id| allowed(id))
            .or_else(|| {
                let mut all = registry.ids_of_kind(BackendKind::TsFm);
                all.extend(registry.ids_of_kind(BackendKind::TabFm));
                all.into_iter().find(|id| allowed(id))
            })
    }

    fn execute(
        &self,
        task: &TaskInstance,
        registry: &Registry,
    ) -> Result<(EpisodeOutcome, Option<OrchestraConfig>), OrchestraError> {
        match &self.selector {
            SystemSelector::Llm => {
                let spec = AgentSpec::llm("agent-0", &self.chat);
                Ok((run_episode_with(task, &spec, registry, &self.options).map_err(MasError::from)?, None))
            }
            SystemSelector::FmAgent => {
                let fm = self.fm_for(task, registry).unwrap_or_default();
                let spec = AgentSpec::with_fm("agent-0", &self.chat, fm, &self.policy);
                Ok((run_episode_with(task, &spec, registry, &self.options).map_err(MasError::from)?, None))
            }
            SystemSelector::Mas(name) => {
                let generator = TopologyCatalog::shared().get(name)?;
                let topology = build_topology(name, generator.default_agents(), generator.default_rounds())?;
                let fm = self.fm_for(task, registry);
                let specs = default_agent_specs(&topology, &self.chat, fm.as_deref().map(|f| (f, self.policy.as_str())))?;
                Ok((run_mas_with(task, &topology, &specs, registry, &self.options)?, None))
            }
            SystemSelector::Orchestra => {
                let space = self.space.as_ref().expect("orchestra runner has a space");
                let planner = self.planner.as_deref().expect("orchestra runner has a planner");
                let options = OrchestraOptions {
                    control_policy: self.policy.clone(),
                    runtime: self.options.clone(),
                };
                let out = run_orchestra_with(task, space, planner, registry, &options)?;
                Ok((out.outcome, Some(out.decision.config)))
            }
        }
    }

    /// Runs one instance on a fresh registry. Failures become records.
    pub fn run_instance(&self, index: usize, repeat: usize, task: &TaskInstance) -> InstanceRecord {
        let started = Instant::now();
        let result = self
            .fresh_registry()
            .map_err(|e| e.to_string())
            .and_then(|reg| self.execute(task, &reg).map_err(|e| e.to_string()));
        let wall_clock_ms = (started.elapsed().as_secs_f64() * 1000.0).round() as u64;
        let mut record = InstanceRecord {
            index,
            repeat,
            system: self.selector.to_string(),
            domain: task.domain,
            task: task.task,
            final_answer: String::new(),
            utility: 0.0,
            score: None,
            status: RecordStatus::SystemError,
            cause: None,
            retries: 0,
            input_tokens: 0,
            output_tokens: 0,
            total_tokens: 0,
            wall_clock_ms,
            usage: Vec::new(),
            orchestra_config: None,
            notes: Vec::new(),
        };
        match result {
            Err(e) => record.cause = Some(e),
            Ok((outcome, config)) => {
                record.status = outcome.status.into();
                record.cause = outcome.cause.clone();
                record.retries = outcome.attempts.saturating_sub(1);
                record.input_tokens = outcome.trace.input_tokens();
                record.output_tokens = outcome.trace.output_tokens();
                record.total_tokens = outcome.trace.total_tokens();
                record.usage = outcome.trace.usage.clone();
                record.notes = outcome.trace.notes.clone();
                record.orchestra_config = config;
                record.final_answer = outcome.final_answer.clone();
                if outcome.status == EpisodeStatus::Ok {
                    apply_score(&mut record, task);
                }
            }
        }
        record
    }

    /// Runs every instance `repeats` times on a pool of `workers` threads.
    pub fn run_set(&self, instances: &[TaskInstance], workers: usize, repeats: usize) -> Result<Vec<InstanceRecord>, HarnessError> {
        if workers == 0 {
            return Err(HarnessError::Config("worker count must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let jobs: Vec<(usize, usize)> = (0..repeats.max(1)).flat_map(|r| (0..instances.len()).map(move |i| (r, i))).collect();
        Ok(pool.install(|| {
            jobs.par_iter()
                .map(|&(r, i)| {
                    log::debug!("instance {i} repeat {r}");
                    self.run_instance(i, r, &instances[i])
                })
                .collect()
        }))
    }
}

fn apply_score(record: &mut InstanceRecord, task: &TaskInstance) {
    match score_answer(task, &record.final_answer) {
        Ok(s) => {
            record.utility = s.value;
            record.score = Some(s);
        }
        Err(reason) => {
            record.utility = 0.0;
            record.cause = Some(format!("unscorable answer: {reason}"));
        }
    }
}

pub fn run(config: &RunConfig) -> Result<RunReport, HarnessError> {
    let bench = load_benchmark(&config.bench)?;
    let file = RegistryFile::load(&config.registry)?;
    let runner = Runner::new(config.system.clone(), file)?;
    let repeats = config.repeats.max(1);
    log::info!(
        "running {} on {} instances ({} workers, {} repeats)",
        config.system,
        bench.len(),
        config.workers,
        repeats
    );
    let records = runner.run_set(&bench.instances, config.workers, repeats)?;
    let header = ReportHeader {
        system: config.system.to_string(),
        benchmark: config.bench.display().to_string(),
        registry: config.registry.display().to_string(),
        workers: config.workers,
        seed: config.seed,
        repeats,
        instances: bench.len(),
    };
    let report = RunReport::assemble(header, records);
    if let Some(out) = &config.out {
        write_report(&report, out)?;
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub index: usize,
    pub prediction: String,
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, HarnessError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| HarnessError::Config(format!("prediction line {}: {e}", n + 1))))
        .collect()
}

/// Scores predictions against a benchmark. Missing instances score 0.
pub fn score_predictions(bench: &BenchmarkSet, predictions: &[Prediction]) -> Result<RunReport, HarnessError> {
    let mut by_index: BTreeMap<usize, &str> = BTreeMap::new();
    for p in predictions {
        if p.index >= bench.len() {
            return Err(HarnessError::Config(format!("prediction index {} out of range", p.index)));
        }
        if by_index.insert(p.index, &p.prediction).is_some() {
            return Err(HarnessError::Config(format!("duplicate prediction for index {}", p.index)));
        }
    }
    let records = bench
        .instances
        .iter()
        .enumerate()
        .map(|(i, task)| {
            let mut r = InstanceRecord {
                index: i,
                repeat: 0,
                system: "predictions".into(),
                domain: task.domain,
                task: task.task,
                final_answer: String::new(),
                utility: 0.0,
                score: None,
                status: RecordStatus::MissingPrediction,
                cause: None,
                retries: 0,
                input_tokens: 0,
                output_tokens: 0,
                total_tokens: 0,
                wall_clock_ms: 0,
                usage: Vec::new(),
                orchestra_config: None,
                notes: Vec::new(),
            };
            if let Some(p) = by_index.get(&i) {
                r.status = RecordStatus::Ok;
                r.final_answer = p.to_string();
                apply_score(&mut r, task);
            }
            r
        })
        .collect();
    let header = ReportHeader {
        system: "predictions".into(),
        benchmark: bench.source_path.clone(),
        registry: String::new(),
        workers: 1,
        seed: 0,
        repeats: 1,
        instances: bench.len(),
    };
    Ok(RunReport::assemble(header, records))
}

pub fn score(pred: impl AsRef<Path>, bench: impl AsRef<Path>) -> Result<RunReport, HarnessError> {
    let pred = pred.as_ref();
    let text = fs::read_to_string(pred).map_err(|e| io_err(pred, e))?;
    let bench = load_benchmark(bench)?;
    score_predictions(&bench, &parse_predictions(&text)?)
}

pub const EMPTY_CELL: &str = "—";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportTable {
    pub text: String,
    pub csv: String,
}

fn table_columns() -> Vec<&'static str> {
    Domain::ALL.iter().map(|d| d.label()).chain(std::iter::once("overall")).collect()
}

/// Metric lines per system: utility, time (ms) and tokens, each a mean over
/// the nine sub-domains and overall.
pub fn report_table(reports: &[RunReport]) -> ReportTable {
    type Pick = fn(&SliceRow) -> Option<SliceSummary>;
    let metrics: [(&str, Pick, usize); 3] = [
        ("utility", |s| s.utility, 4),
        ("time_ms", |s| s.time_ms, 1),
        ("tokens", |s| s.tokens, 1),
    ];
    let columns = table_columns();
    let mut rows: Vec<Vec<String>> = Vec::new();
    let mut csv_rows: Vec<Vec<String>> = Vec::new();
    for report in reports {
        for (metric, pick, digits) in metrics {
            let mut row = vec![report.header.system.clone(), metric.to_string()];
            let mut csv_row = row.clone();
            for col in &columns {
                let value = report.slice(col).and_then(pick).map(|s| s.mean);
                row.push(value.map_or_else(|| EMPTY_CELL.to_string(), |v| format!("{v:.digits$}")));
                csv_row.push(value.map_or_else(String::new, |v| format!("{v:.4}")));
            }
            rows.push(row);
            csv_rows.push(csv_row);
        }
    }
    let header: Vec<String> = ["system", "metric"].iter().copied().chain(columns.iter().copied()).map(String::from).collect();
    let widths: Vec<usize> = (0..header.len())
        .map(|i| {
            std::iter::once(&header)
                .chain(rows.iter())
                .map(|r| r[i].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let fmt_row = |r: &Vec<String>| {
        r.iter()
            .enumerate()
            .map(|(i, c)| {
                let pad = widths[i] - c.chars().count();
                if i < 2 {
                    format!("{c}{}", " ".repeat(pad))
                } else {
                    format!("{}{c}", " ".repeat(pad))
                }
            })
            .collect::<Vec<_>>()
            .join("  ")
            .trim_end()
            .to_string()
    };
    let mut text = fmt_row(&header);
    text.push('\n');
    text.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    text.push('\n');
    for r in &rows {
        text.push_str(&fmt_row(r));
        text.push('\n');
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(&header).expect("in-memory csv");
    for r in &csv_rows {
        writer.write_record(r).expect("in-memory csv");
    }
    let csv = String::from_utf8(writer.into_inner().expect("in-memory csv")).expect("utf-8 csv");
    ReportTable { text, csv }
}

/// The registry hosted by [`serve_mock`].
pub fn mock_registry() -> Registry {
    let echo = ChatScript {
        trigger: None,
        replies: vec!["{{last}}".into()],
    };
    Registry::builder()
        .register(ScriptedChat::with_scripts("scripted-llm", vec![echo], true))
        .register(LastValue::new("last-value"))
        .register(SeasonalNaive::new("seasonal-naive", 2))
        .register(LookupTabular::new("lookup-tab"))
        .build()
        .expect("mock registry is valid")
}

/// A running protocol server. Dropping it shuts it down.
pub struct MockServer {
    server: Arc<tiny_http::Server>,
    port: u16,
    handle: Option<JoinHandle<()>>,
}

impl MockServer {
    pub fn port(&self) -> u16 {
        self.port
    }

    pub fn url(&self) -> String {
        format!("http://127.0.0.1:{}", self.port)
    }

    /// Blocks until the server stops.
    pub fn wait(mut self) {
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }

    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.server.unblock();
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

impl Drop for MockServer {
    fn drop(&mut self) {
        self.stop();
    }
}

fn json_response(status: u16, body: String) -> tiny_http::Response<std::io::Cursor<Vec<u8>>> {
    let header = tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).expect("static header");
    tiny_http::Response::from_string(body).with_status_code(status).with_header(header)
}

fn handle_request(mut req: tiny_http::Request, registry: &Registry) {
    let method = req.method().clone();
    let url = req.url().split('?').next().unwrap_or_default().to_string();
    let (status, body) = match (method, url.as_str()) {
        (tiny_http::Method::Get, "/v1/describe") => (200, serde_json::to_string(&registry.descriptors()).expect("descriptors serialize")),
        (tiny_http::Method::Get, "/healthz") => (200, r#"{"status":"ok"}"#.to_string()),
        (tiny_http::Method::Post, "/v1/invoke") => {
            let mut text = String::new();
            let parsed = req
                .as_reader()
                .read_to_string(&mut text)
                .map_err(|e| e.to_string())
                .and_then(|_| serde_json::from_str::<InvocationRequest>(&text).map_err(|e| e.to_string()));
            match parsed {
                Ok(request) => (200, serde_json::to_string(&invoke(&request, registry).to_wire()).expect("response serializes")),
                Err(e) => (
                    400,
                    serde_json::to_string(&InvokeResponse::error(codes::BAD_REQUEST, format!("malformed request: {e}")))
                        .expect("response serializes"),
                ),
            }
        }
        _ => (404, r#"{"error":"not found"}"#.to_string()),
    };
    if let Err(e) = req.respond(json_response(status, body)) {
        log::warn!("response failed: {e}");
    }
}

/// Serves [`mock_registry`] on `127.0.0.1:port` (0 picks a free port).
pub fn serve_mock(port: u16) -> Result<MockServer, HarnessError> {
    serve_registry(port, mock_registry())
}

pub fn serve_registry(port: u16, registry: Registry) -> Result<MockServer, HarnessError> {
    let server = tiny_http::Server::http(("127.0.0.1", port)).map_err(|e| HarnessError::Io(format!("port {port}: {e}")))?;
    let port = server
        .server_addr()
        .to_ip()
        .map(|a| a.port())
        .ok_or_else(|| HarnessError::Io("server has no IP address".into()))?;
    let server = Arc::new(server);
    let worker = Arc::clone(&server);
    let handle = std::thread::spawn(move || {
        for req in worker.incoming_requests() {
            handle_request(req, &registry);
        }
    });
    log::info!("mock backends listening on 127.0.0.1:{port}");
    Ok(MockServer {
        server,
        port,
        handle: Some(handle),
    })
}

/// Converts a CSV benchmark to JSON-Lines; returns the instance count.
pub fn convert(csv_path: impl AsRef<Path>, out: impl AsRef<Path>) -> Result<usize, HarnessError> {
    let (csv_path, out) = (csv_path.as_ref(), out.as_ref());
    let file = fs::File::open(csv_path).map_err(|e| io_err(csv_path, e))?;
    let instances = convert_csv(file)?;
    let set = BenchmarkSet {
        instances,
        source_path: csv_path.display().to_string(),
    };
    fs::write(out, set.to_jsonl()).map_err(|e| io_err(out, e))?;
    Ok(set.len())
}
