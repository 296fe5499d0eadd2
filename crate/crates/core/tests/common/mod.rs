#![allow(dead_code)]

pub mod oracle;

use std::time::{Duration, Instant};

use fmbridge_core::agent::{run_episode, run_episode_with, AgentSpec, EpisodeStatus, RuntimeOptions};
use fmbridge_core::backend::mock::{ChatScript, LastValue, LookupTabular, ScriptedChat, SeasonalNaive};
use fmbridge_core::backend::{invoke, BackendCatalog, BackendKind, BackendSpec, InvocationRequest, Registry};
use fmbridge_core::bench::{composition_stats, Axis, Domain, Series, TaskInstance, TaskKind};
use fmbridge_core::harness::{desk_benchmark, desk_registry, mock_registry, serve_mock, Runner, SystemSelector};
use fmbridge_core::mas::{build_topology, MasSystem, TopologyCatalog, DEFAULT_TOPOLOGY_POOL};
use fmbridge_core::metrics::{score_natural_language, score_series_values, score_tabular, TabularKind};
use fmbridge_core::orchestra::{
    oracle_conductor, parse_and_validate_config, utility_loss, ConfigSpace, OrchestraConfig, OrchestraOptions,
};
use fmbridge_core::trace::ContextEntry;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type Check = Result<String, String>;

pub fn timed(limit: Duration, f: impl FnOnce() -> Check) -> Check {
    let start = Instant::now();
    let out = f()?;
    let took = start.elapsed();
    if took > limit {
        return Err(format!("{out}; took {took:?}, limit {limit:?}"));
    }
    Ok(format!("{out}; {took:.2?}"))
}

// ---------------------------------------------------------------- metrics

pub const ORACLE_TOL: f64 = 1e-12;

pub enum Case {
    Nl(String, String),
    Series(Vec<f64>, Vec<f64>),
    Class(Vec<String>, Vec<String>),
    Regr(Vec<f64>, Vec<f64>),
}

const PIECES: [&str; 24] = [
    "alpha", "beta", "gamma", "x", "y", "42", "3.14", "-7", "+2", "\\frac", "+", "(", ")", "\u{201C}", "\u{201D}", "'",
    "\"", "\u{2013}", "\u{00D7}", "\u{00A0}", "km", "1e3", "0.5", "Fe",
];
const SEPS: [&str; 5] = [" ", "", "  ", "\t", " - "];

fn random_text(rng: &mut ChaCha8Rng) -> String {
    let n = rng.gen_range(0..7);
    let mut s = String::new();
    for i in 0..n {
        if i > 0 {
            s.push_str(SEPS[rng.gen_range(0..SEPS.len())]);
        }
        s.push_str(PIECES[rng.gen_range(0..PIECES.len())]);
    }
    s
}

fn random_number_text(rng: &mut ChaCha8Rng) -> String {
    match rng.gen_range(0..4) {
        0 => format!("{}", rng.gen_range(-1000i64..1000)),
        1 => format!("{:.3}", rng.gen_range(-50.0..50.0)),
        2 => format!("{}e{}", rng.gen_range(1..9), rng.gen_range(-3..4)),
        _ => "0".to_string(),
    }
}

fn random_values(rng: &mut ChaCha8Rng, h: usize) -> Vec<f64> {
    (0..h)
        .map(|_| match rng.gen_range(0..5) {
            0 => 0.0,
            1 => rng.gen_range(-0.02..0.02),
            2 => rng.gen_range(-100.0..100.0),
            3 => rng.gen_range(0..10) as f64,
            _ => rng.gen_range(1e3..1e5),
        })
        .collect()
}

pub fn random_cases(seed: u64, n: usize) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| match i % 4 {
            0 => {
                let gold = random_text(&mut rng);
                let pred = match rng.gen_range(0..4) {
                    0 => gold.clone(),
                    1 => format!(" \"{gold}\" "),
                    2 => random_number_text(&mut rng),
                    _ => random_text(&mut rng),
                };
                let gold = if rng.gen_bool(0.2) { random_number_text(&mut rng) } else { gold };
                Case::Nl(pred, gold)
            }
            1 => {
                let h = rng.gen_range(1..25);
                let gold = random_values(&mut rng, h);
                let pred = if rng.gen_bool(0.1) { gold.clone() } else { random_values(&mut rng, h) };
                Case::Series(pred, gold)
            }
            2 => {
                let labels = ["A", "B", "c", " A ", "\u{201C}B\u{201D}"];
                let h = rng.gen_range(1..12);
                let mut pick = || labels[rng.gen_range(0..labels.len())].to_string();
                let gold: Vec<String> = (0..h).map(|_| pick()).collect();
                let pred: Vec<String> = (0..h).map(|_| pick()).collect();
                Case::Class(pred, gold)
            }
            _ => {
                let h = rng.gen_range(1..12);
                Case::Regr(random_values(&mut rng, h), random_values(&mut rng, h))
            }
        })
        .collect()
}

/// `(library, oracle)` utilities for one case.
pub fn evaluate(case: &Case) -> (f64, f64) {
    match case {
        Case::Nl(p, g) => (score_natural_language(p, g).value, oracle::nl(p, g)),
        Case::Series(p, g) => (score_series_values(p, g).unwrap().value, oracle::series(p, g)),
        Case::Class(p, g) => (
            score_tabular(p, g, TabularKind::Classification).unwrap().value,
            oracle::accuracy(p, g),
        ),
        Case::Regr(p, g) => {
            let ps: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let gs: Vec<String> = g.iter().map(|v| v.to_string()).collect();
            (
                score_tabular(&ps, &gs, TabularKind::Regression).unwrap().value,
                oracle::series(p, g),
            )
        }
    }
}

/// Hand-derived fixture values: `(name, library, expected)`.
pub fn metric_fixtures() -> Vec<(&'static str, f64, f64)> {
    vec![
        ("numeric 1.1 vs 1.0", score_natural_language("1.1", "1.0").value, 0.9048374180359595),
        ("series [2,2] vs [1,1]", score_series_values(&[2.0, 2.0], &[1.0, 1.0]).unwrap().value, 7.0 / 12.0),
        ("series [1] vs [0]", score_series_values(&[1.0], &[0.0]).unwrap().value, 0.5),
        (
            "lexical alpha beta",
            score_natural_language("alpha beta", "alpha gamma").value,
            0.5666666666666667,
        ),
        (
            "regression [2,2] vs [1,1]",
            score_tabular(&["2", "2"], &["1", "1"], TabularKind::Regression).unwrap().value,
            7.0 / 12.0,
        ),
    ]
}

pub fn check_metric_oracle() -> Check {
    let cases = random_cases(0x5eed, 1000);
    let mut worst = 0.0f64;
    for (i, c) in cases.iter().enumerate() {
        let (lib, ora) = evaluate(c);
        let d = (lib - ora).abs();
        if d > ORACLE_TOL {
            return Err(format!("case {i}: library {lib} vs oracle {ora}"));
        }
        worst = worst.max(d);
    }
    for (name, lib, expected) in metric_fixtures() {
        if (lib - expected).abs() > ORACLE_TOL {
            return Err(format!("fixture {name}: {lib} vs {expected}"));
        }
    }
    Ok(format!("1000 cases + 5 fixtures, max |diff| {worst:.1e}"))
}

// ------------------------------------------------------------ composition

/// `(domain, NL, forecast, tabular)` counts of the 200-instance benchmark.
pub const BENCH_COMPOSITION: [(Domain, usize, usize, usize); 9] = [
    (Domain::Material, 14, 4, 6),
    (Domain::Energy, 5, 16, 4),
    (Domain::Space, 8, 5, 2),
    (Domain::Biology, 10, 4, 6),
    (Domain::Clinic, 10, 4, 6),
    (Domain::Drug, 10, 6, 4),
    (Domain::Economy, 5, 17, 4),
    (Domain::Business, 8, 10, 4),
    (Domain::Infrastructure, 8, 16, 4),
];

pub const ENTROPY_TOL: f64 = 0.001;

fn stub(domain: Domain, task: TaskKind) -> TaskInstance {
    TaskInstance {
        domain,
        task,
        description: String::new(),
        output_size: 1,
        input: String::new(),
        label: String::new(),
    }
}

pub fn composition_instances() -> Vec<TaskInstance> {
    let mut out = Vec::new();
    for (d, nl, ts, tab) in BENCH_COMPOSITION {
        out.extend((0..nl).map(|_| stub(d, TaskKind::Qa)));
        out.extend((0..ts).map(|_| stub(d, TaskKind::Forecast)));
        out.extend((0..tab).map(|_| stub(d, TaskKind::Regression)));
    }
    out
}

pub fn check_composition() -> Check {
    let inst = composition_instances();
    let mut got = Vec::new();
    for (axis, expected) in [(Axis::ParentDomain, 0.995), (Axis::SubDomain, 0.993), (Axis::Modality, 0.960)] {
        let h = composition_stats(&inst, axis).map_err(|e| e.to_string())?.normalized_entropy;
        if (h - expected).abs() > ENTROPY_TOL {
            return Err(format!("{axis:?}: {h:.5} vs {expected}"));
        }
        got.push(format!("{h:.5}"));
    }
    Ok(format!("H_n = {}", got.join(" / ")))
}

// ------------------------------------------------------ config validation

pub fn matrix_space() -> ConfigSpace {
    ConfigSpace::new(
        vec!["gpt-mock".into()],
        vec!["tabpfn-mock".into()],
        vec!["single".into(), "debate".into()],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IdChoice {
    Valid,
    Unknown,
    Null,
}

pub const ID_CHOICES: [IdChoice; 3] = [IdChoice::Valid, IdChoice::Unknown, IdChoice::Null];

pub struct MatrixCell {
    pub json: String,
    pub legal: bool,
}

fn id_value(choice: IdChoice, valid: &str, unknown: &str) -> serde_json::Value {
    match choice {
        IdChoice::Valid => valid.into(),
        IdChoice::Unknown => unknown.into(),
        IdChoice::Null => serde_json::Value::Null,
    }
}

/// Every combination of setting, eywa flag, the three id fields and
/// empty/non-empty agents, with its legality under the constraint table.
pub fn validation_matrix() -> Vec<MatrixCell> {
    let agents: Vec<serde_json::Value> = (0..3)
        .map(|i| {
            serde_json::json!({"agent_id": format!("a{i}"), "role_prompt": "", "model": "gpt-mock", "eywa": false, "foundation_model": null})
        })
        .collect();
    let mut out = Vec::new();
    for setting in ["single-agent", "multi-agent"] {
        for eywa in [false, true] {
            for model in ID_CHOICES {
                for topo in ID_CHOICES {
                    for fm in ID_CHOICES {
                        for non_empty in [false, true] {
                            let cfg = serde_json::json!({
                                "eywa": eywa,
                                "setting": setting,
                                "model": id_value(model, "gpt-mock", "nope-llm"),
                                "multi_agent_type": id_value(topo, "debate", "ring"),
                                "foundation_model": id_value(fm, "tabpfn-mock", "nope-fm"),
                                "agents": if non_empty { agents.clone() } else { vec![] },
                            });
                            let fm_ok = fm != IdChoice::Unknown;
                            let legal = if setting == "single-agent" {
                                model == IdChoice::Valid && topo == IdChoice::Null && fm_ok && !non_empty
                            } else {
                                model == IdChoice::Null && topo == IdChoice::Valid && fm_ok && non_empty
                            };
                            out.push(MatrixCell {
                                json: cfg.to_string(),
                                legal,
                            });
                        }
                    }
                }
            }
        }
    }
    out
}

pub fn check_validation_matrix() -> Check {
    let space = matrix_space();
    let cells = validation_matrix();
    let (mut false_accept, mut false_reject, mut legal) = (0, 0, 0);
    for c in &cells {
        let ok = parse_and_validate_config(&c.json, &space).is_ok();
        legal += c.legal as usize;
        match (ok, c.legal) {
            (true, false) => false_accept += 1,
            (false, true) => false_reject += 1,
            _ => {}
        }
    }
    if false_accept + false_reject > 0 {
        return Err(format!("{false_accept} false accepts, {false_reject} false rejects over {} cells", cells.len()));
    }
    Ok(format!("{} cells, {legal} legal, 0 false accepts, 0 false rejects", cells.len()))
}

// --------------------------------------------------------- oracle conductor

pub fn forecast_task(values: &[f64], gold: &[f64]) -> TaskInstance {
    TaskInstance {
        domain: Domain::Energy,
        task: TaskKind::Forecast,
        description: "Forecast the series.".into(),
        output_size: gold.len() as u64,
        input: Series::from_values(0, values).to_csv(),
        label: Series::from_values(values.len() as i64, gold).to_csv(),
    }
}

/// Constant with a level shift on the last step; the new level persists.
pub fn level_task(base: f64, level: f64) -> TaskInstance {
    let mut v = vec![base; 7];
    v.push(level);
    forecast_task(&v, &[level; 3])
}

/// Period-2 alternation continuing into the horizon.
pub fn alternating_task(a: f64, b: f64) -> TaskInstance {
    forecast_task(&[a, b, a, b, a, b], &[a, b, a])
}

pub fn conductor_registry() -> Result<Registry, fmbridge_core::error::RegistryError> {
    let echo = ChatScript {
        trigger: None,
        replies: vec!["{{last}}".into()],
    };
    Registry::builder()
        .register(ScriptedChat::with_scripts("echo-llm", vec![echo], true))
        .register(LastValue::new("last-value"))
        .register(SeasonalNaive::new("seasonal-naive", 2))
        .build()
}

pub fn fm_config(fm: &str) -> OrchestraConfig {
    OrchestraConfig::single(true, "echo-llm", Some(fm.to_string()))
}

pub fn conductor_space(fms: &[&str]) -> ConfigSpace {
    ConfigSpace::new(
        vec!["echo-llm".into()],
        fms.iter().map(|s| s.to_string()).collect(),
        vec!["single".into()],
    )
    .with_candidates(fms.iter().map(|f| fm_config(f)).collect())
}

pub fn conductor_options() -> OrchestraOptions {
    OrchestraOptions {
        control_policy: "always-invoke".into(),
        ..OrchestraOptions::default()
    }
}

pub fn heterogeneous_tasks() -> Vec<TaskInstance> {
    vec![
        level_task(2.0, 6.0),
        level_task(10.0, 4.0),
        level_task(1.0, 3.0),
        alternating_task(1.0, 3.0),
        alternating_task(5.0, 9.0),
        alternating_task(2.0, 8.0),
    ]
}

pub fn check_oracle_dominance() -> Check {
    let options = conductor_options();
    let space = conductor_space(&["last-value", "seasonal-naive"]);
    let mixed = oracle_conductor(&heterogeneous_tasks(), &space, conductor_registry, utility_loss, &options)
        .map_err(|e| e.to_string())?;
    for (i, fixed) in mixed.fixed_mean_losses.iter().enumerate() {
        if mixed.oracle_mean_loss >= *fixed {
            return Err(format!("oracle {} not below fixed config {i} ({fixed})", mixed.oracle_mean_loss));
        }
    }
    let uniform: Vec<TaskInstance> = (1..=4).map(|k| alternating_task(k as f64, 2.0 * k as f64 + 1.0)).collect();
    let degenerate = oracle_conductor(&uniform, &space, conductor_registry, utility_loss, &options).map_err(|e| e.to_string())?;
    if (degenerate.oracle_mean_loss - degenerate.best_fixed_mean_loss()).abs() > 1e-12 {
        return Err(format!(
            "degenerate set: oracle {} vs best fixed {}",
            degenerate.oracle_mean_loss,
            degenerate.best_fixed_mean_loss()
        ));
    }
    Ok(format!(
        "mixed: oracle {:.4} < fixed {:?}; single-winner: oracle = best fixed = {:.4}",
        mixed.oracle_mean_loss,
        mixed.fixed_mean_losses.iter().map(|l| format!("{l:.4}")).collect::<Vec<_>>(),
        degenerate.oracle_mean_loss
    ))
}

// -------------------------------------------------------------- propagation

pub const SENTINEL: &str = "SENTINEL-7f3a";

pub fn qa_task() -> TaskInstance {
    TaskInstance {
        domain: Domain::Space,
        task: TaskKind::Qa,
        description: "Answer the question.".into(),
        output_size: 0,
        input: "What is the brightest star?".into(),
        label: "Sirius".into(),
    }
}

fn propagation_registry() -> Registry {
    let script = |reply: &str| ChatScript {
        trigger: None,
        replies: vec![reply.to_string()],
    };
    Registry::builder()
        .register(ScriptedChat::with_scripts("inject-llm", vec![script(&format!("{SENTINEL} {{{{context}}}}"))], true))
        .register(ScriptedChat::with_scripts("relay-llm", vec![script("relay {{context}}")], true))
        .build()
        .expect("valid registry")
}

/// Whether the sentinel reaches the final node's pre-answer state.
pub fn propagates(name: &str, n: usize, rounds: usize, injector: usize) -> Result<bool, String> {
    let topology = build_topology(name, n, rounds).map_err(|e| e.to_string())?;
    let registry = propagation_registry();
    let specs: Vec<AgentSpec> = (0..n)
        .map(|i| {
            if i == injector {
                AgentSpec::llm(format!("a{i}"), "inject-llm").with_role(format!("Your code is {SENTINEL}."))
            } else {
                AgentSpec::llm(format!("a{i}"), "relay-llm")
            }
        })
        .collect();
    let options = RuntimeOptions::default();
    let mut system = MasSystem::new(&qa_task(), &topology, &specs, &registry, &options).map_err(|e| e.to_string())?;
    if !topology.edges.is_empty() {
        for _ in 0..rounds {
            system.execute_round(&registry).map_err(|e| e.to_string())?;
        }
    }
    system.prepare_answer();
    let state = &system.agents[topology.final_node].state;
    Ok(state.context_entries.iter().any(|e| e.content().contains(SENTINEL)))
}

/// `(topology, n, rounds, injector)` for every pool topology with n <= 5,
/// rounds in {diameter, diameter + 1} (at least 1) and every injector.
pub fn propagation_cases() -> Vec<(String, usize, usize, usize)> {
    let catalog = TopologyCatalog::shared();
    let mut out = Vec::new();
    for name in DEFAULT_TOPOLOGY_POOL {
        let generator = catalog.get(name).expect("pool topologies exist");
        for n in 1..=5 {
            if generator.generate(n).is_err() {
                continue;
            }
            let diameter = build_topology(name, n, 1).expect("valid size").diameter;
            for rounds in [diameter.max(1), diameter + 1] {
                for injector in 0..n {
                    out.push((name.to_string(), n, rounds, injector));
                }
            }
        }
    }
    out
}

pub fn check_propagation() -> Check {
    let cases = propagation_cases();
    for (name, n, rounds, injector) in &cases {
        if !propagates(name, *n, *rounds, *injector)? {
            return Err(format!("{name}(n={n}, rounds={rounds}) from {injector}: sentinel lost"));
        }
    }
    Ok(format!("{}/{} cases", cases.len(), cases.len()))
}

// ------------------------------------------------------------------- retries

pub const VALID_FORECAST: &str = "timestamp,value\n3,5\n4,5\n5,5";
pub const BAD_REPLY: &str = "I think it will stay about the same.";

pub fn retry_task() -> TaskInstance {
    forecast_task(&[5.0, 5.0, 5.0], &[5.0, 5.0, 5.0])
}

/// Runs a scripted LLM-only episode; returns (status, attempts, chat calls).
pub fn retry_run(replies: &[&str]) -> (EpisodeStatus, u32, usize) {
    let registry = Registry::builder()
        .register(ScriptedChat::new("llm", replies.iter().map(|s| s.to_string()).collect()))
        .build()
        .expect("valid registry");
    let out = run_episode(&retry_task(), &AgentSpec::llm("a", "llm"), &registry).expect("valid spec");
    let calls = out.trace.usage.iter().filter(|u| u.backend_id == "llm").count();
    (out.status, out.attempts, calls)
}

pub fn check_retry_protocol() -> Check {
    let cases: [(&[&str], EpisodeStatus, u32); 4] = [
        (&[VALID_FORECAST], EpisodeStatus::Ok, 1),
        (&[BAD_REPLY, VALID_FORECAST], EpisodeStatus::Ok, 2),
        (&[BAD_REPLY, BAD_REPLY, VALID_FORECAST], EpisodeStatus::Ok, 3),
        (&[BAD_REPLY, BAD_REPLY, BAD_REPLY, VALID_FORECAST], EpisodeStatus::ParseFailed, 3),
    ];
    let mut seen = Vec::new();
    for (replies, status, attempts) in cases {
        let (s, a, calls) = retry_run(replies);
        if s != status || a != attempts || calls as u32 != attempts {
            return Err(format!("{} replies: got {s:?} after {a} attempts and {calls} calls", replies.len()));
        }
        seen.push(format!("{s:?}/{a}"));
    }
    Ok(seen.join(", "))
}

// ------------------------------------------------------------------ tokens

pub const HORIZON: usize = 5;

pub fn token_task(n: usize) -> TaskInstance {
    let values: Vec<f64> = (0..n).map(|i| (i % 7) as f64 + 10.0).collect();
    let gold = vec![12.0; HORIZON];
    TaskInstance {
        description: "Forecast the load.".into(),
        ..forecast_task(&values, &gold)
    }
}

/// Chat-model tokens of one episode on a series of length `n`.
pub fn llm_tokens(n: usize, eywa: bool) -> u64 {
    let task = token_task(n);
    let answer = Series::from_values(n as i64, &[12.0; HORIZON]).to_csv();
    let chat = if eywa {
        ScriptedChat::new("llm", vec!["CALL last-value".into(), "{{last}}".into()])
    } else {
        ScriptedChat::new("llm", vec![answer])
    };
    let registry = Registry::builder()
        .register(chat)
        .register(LastValue::new("last-value"))
        .build()
        .expect("valid registry");
    let spec = if eywa {
        AgentSpec::with_fm("a", "llm", "last-value", "llm-induced")
    } else {
        AgentSpec::llm("a", "llm")
    };
    let out = run_episode_with(&task, &spec, &registry, &RuntimeOptions::default()).expect("valid spec");
    assert_eq!(out.status, EpisodeStatus::Ok, "{:?}", out.cause);
    out.trace.tokens_for(&["llm"])
}

pub const FM_AGENT_GROWTH_MAX: f64 = 1.2;
pub const BASELINE_GROWTH_MIN: f64 = 8.0;

pub fn check_token_separation() -> Check {
    let eywa = llm_tokens(1000, true) as f64 / llm_tokens(100, true) as f64;
    let base = llm_tokens(1000, false) as f64 / llm_tokens(100, false) as f64;
    if eywa > FM_AGENT_GROWTH_MAX || base < BASELINE_GROWTH_MIN {
        return Err(format!("eywa x{eywa:.3} (max {FM_AGENT_GROWTH_MAX}), baseline x{base:.3} (min {BASELINE_GROWTH_MIN})"));
    }
    Ok(format!("n 100 -> 1000: eywa x{eywa:.3}, baseline x{base:.3}"))
}

// -------------------------------------------------------------- subsumption

/// Transcripts of the LLM-only baseline and an always-skip FM-bound agent.
pub fn subsumption_pair(task: &TaskInstance) -> (String, String) {
    let file = desk_registry();
    let runner = Runner::new(SystemSelector::Llm, file.clone()).expect("desk registry resolves");
    let fresh = || runner.fresh_registry().expect("desk registry builds");
    let reg = fresh();
    let fm = reg
        .foundation_models_for(task.task)
        .into_iter()
        .next()
        .unwrap_or_else(|| reg.ids_of_kind(BackendKind::TsFm)[0].clone());
    let options = RuntimeOptions::default();
    let base = run_episode_with(task, &AgentSpec::llm("agent-0", "desk-llm"), &fresh(), &options).expect("valid spec");
    let skip = AgentSpec::with_fm("agent-0", "desk-llm", fm, "always-skip");
    let eywa = run_episode_with(task, &skip, &fresh(), &options).expect("valid spec");
    (base.trace.agents[0].transcript(), eywa.trace.agents[0].transcript())
}

pub fn check_subsumption() -> Check {
    let bench = desk_benchmark();
    for (i, task) in bench.instances.iter().enumerate() {
        let (a, b) = subsumption_pair(task);
        if a != b {
            return Err(format!("instance {i}: transcripts differ"));
        }
    }
    Ok(format!("{}/{} transcripts byte-identical", bench.len(), bench.len()))
}

// ------------------------------------------------------------- conformance

/// Requests covering every mock, both success and error paths.
pub fn conformance_requests() -> Vec<InvocationRequest> {
    use fmbridge_core::backend::ChatMessage;
    use fmbridge_core::bench::parse_table_csv;
    let series = Series::from_values(0, &[1.0, 4.0, 2.0, 5.0, 3.0, 6.0]);
    let class = parse_table_csv("a,b,y\n1,x,p\n2,y,q\n1,x,p\n2,y,__MASK__\n3,z,__MASK__", "y", "__MASK__").unwrap();
    let regr = parse_table_csv("a,y\n1,2.5\n2,4\n1,__MASK__", "y", "__MASK__").unwrap();
    let mut out = Vec::new();
    for fm in ["last-value", "seasonal-naive"] {
        for h in [1, 3, 7] {
            out.push(InvocationRequest::forecast(fm, series.clone(), h));
        }
    }
    out.push(InvocationRequest::tabular("lookup-tab", class.clone(), Some(TaskKind::Classification)));
    out.push(InvocationRequest::tabular("lookup-tab", regr.clone(), Some(TaskKind::Regression)));
    out.push(InvocationRequest::tabular("lookup-tab", regr, None));
    out.push(InvocationRequest::chat("scripted-llm", vec![ChatMessage::user("hello there")]));
    out.push(InvocationRequest::chat(
        "scripted-llm",
        vec![ChatMessage::user("q"), ChatMessage::assistant("a"), ChatMessage::user("echo me")],
    ));
    out.push(InvocationRequest::chat("last-value", vec![ChatMessage::user("wrong kind")]));
    out.push(InvocationRequest::forecast("lookup-tab", series.clone(), 2));
    out.push(InvocationRequest::tabular("last-value", class, None));
    out.push(InvocationRequest::forecast("no-such-backend", series.clone(), 2));
    let mut bad_horizon = InvocationRequest::forecast("last-value", series, 2);
    bad_horizon.config.insert("horizon".into(), serde_json::json!(0));
    out.push(bad_horizon);
    out
}

/// Registry whose backends forward to `url` under the same ids.
pub fn remote_registry(url: &str) -> Registry {
    let spec = |id: &str, kind: BackendKind| BackendSpec {
        kind: Some(kind),
        endpoint: Some(url.to_string()),
        ..BackendSpec::new(id, "remote")
    };
    BackendCatalog::builtin()
        .build(&[
            spec("scripted-llm", BackendKind::ChatLlm),
            spec("last-value", BackendKind::TsFm),
            spec("seasonal-naive", BackendKind::TsFm),
            spec("lookup-tab", BackendKind::TabFm),
        ])
        .expect("valid remote registry")
}

/// Posts a request straight to `/v1/invoke`.
pub fn post_raw(url: &str, body: &str) -> (u16, fmbridge_core::backend::InvokeResponse) {
    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let mut resp = agent
        .post(&format!("{url}/v1/invoke"))
        .header("Content-Type", "application/json")
        .send(body)
        .expect("server reachable");
    let status = resp.status().as_u16();
    (status, resp.body_mut().read_json().expect("JSON response"))
}

pub fn check_conformance() -> Check {
    let server = serve_mock(0).map_err(|e| e.to_string())?;
    let url = server.url();
    let local = mock_registry();
    let remote = remote_registry(&url);
    let requests = conformance_requests();
    for (i, req) in requests.iter().enumerate() {
        let expected = invoke(req, &local);
        let via_client = invoke(req, &remote);
        if !expected.same_except_timing(&via_client) {
            return Err(format!("request {i} via client: {expected:?} vs {via_client:?}"));
        }
        let (status, wire) = post_raw(&url, &serde_json::to_string(req).unwrap());
        let raw = fmbridge_core::backend::InvocationResult::from_wire(wire, &req.backend_id, 0);
        if status != 200 || !expected.same_except_timing(&raw) {
            return Err(format!("request {i} raw HTTP {status}: {expected:?} vs {raw:?}"));
        }
    }
    let (status, wire) = post_raw(&url, "{not json");
    let code = wire.error.as_ref().map(|e| e.code.as_str()).unwrap_or("");
    if status != 400 || code != "bad_request" {
        return Err(format!("malformed body: HTTP {status}, code `{code}`"));
    }
    server.shutdown();
    Ok(format!("{} request pairs identical over HTTP; malformed body -> 400 bad_request", requests.len()))
}

/// Final-node pre-answer state entries, for diagnostics.
pub fn describe_entries(entries: &[ContextEntry]) -> Vec<&'static str> {
    entries
        .iter()
        .map(|e| match e {
            ContextEntry::Prompt { .. } => "prompt",
            ContextEntry::Reply { .. } => "reply",
            ContextEntry::Tool { .. } => "tool",
            ContextEntry::Inbox { .. } => "inbox",
            ContextEntry::Notice { .. } => "notice",
        })
        .collect()
}

pub fn lookup_registry() -> Registry {
    Registry::builder()
        .register(LookupTabular::new("lookup-tab"))
        .build()
        .expect("valid registry")
}
