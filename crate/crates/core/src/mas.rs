//! Multi-agent execution over fixed communication topologies with
//! synchronous message rounds.

use std::collections::{BTreeMap, VecDeque};
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};

use crate::agent::{finish_episode, Agent, AgentSpec, AnswerResult, EpisodeOutcome, RuntimeOptions, StepFailure};
use crate::backend::{Registry, UsageRecord};
use crate::bench::TaskInstance;
use crate::error::{MasError, TopologyError};
use crate::trace::{ContextEntry, MessageEnvelope, RoundRecord, SystemTrace};

/// Directed edges and the final node.
pub type Graph = (Vec<(usize, usize)>, usize);

/// Graph shape for a named topology.
pub trait TopologyGenerator: Send + Sync {
    fn name(&self) -> &'static str;
    /// One-line summary shown to the planner.
    fn description(&self) -> &'static str;
    fn default_agents(&self) -> usize;
    fn default_rounds(&self) -> usize;
    /// Edges and final node for `n` agents.
    fn generate(&self, n: usize) -> Result<Graph, &'static str>;
    /// Role prompt of agent `i` when none is configured.
    fn role(&self, _i: usize, _n: usize) -> String {
        String::new()
    }
    /// Instruction given to the final node before it answers.
    fn synthesis_notice(&self) -> &'static str {
        "Combine the messages you received into your final answer."
    }
}

pub struct Single;

impl TopologyGenerator for Single {
    fn name(&self) -> &'static str {
        "single"
    }
    fn description(&self) -> &'static str {
        "one agent answers alone"
    }
    fn default_agents(&self) -> usize {
        1
    }
    fn default_rounds(&self) -> usize {
        1
    }
    fn generate(&self, n: usize) -> Result<Graph, &'static str> {
        if n != 1 {
            return Err("single needs exactly 1 agent");
        }
        Ok((Vec::new(), 0))
    }
}

/// Author (0) and critic (1) exchanging drafts and reviews.
pub struct Refine;

impl TopologyGenerator for Refine {
    fn name(&self) -> &'static str {
        "refine"
    }
    fn description(&self) -> &'static str {
        "an author and a critic exchange drafts and reviews; exactly 2 agents, the author answers"
    }
    fn default_agents(&self) -> usize {
        2
    }
    fn default_rounds(&self) -> usize {
        2
    }
    fn generate(&self, n: usize) -> Result<Graph, &'static str> {
        if n != 2 {
            return Err("refine needs exactly 2 agents (author, critic)");
        }
        Ok((vec![(0, 1), (1, 0)], 0))
    }
    fn role(&self, i: usize, _n: usize) -> String {
        if i == 0 {
            "You are the author: draft the answer and revise it after feedback.".into()
        } else {
            "You are the critic: point out errors in the author's draft.".into()
        }
    }
    fn synthesis_notice(&self) -> &'static str {
        "Revise your draft using the critic's feedback and give the final answer."
    }
}

/// Complete digraph; the lowest index answers.
pub struct Debate;

impl TopologyGenerator for Debate {
    fn name(&self) -> &'static str {
        "debate"
    }
    fn description(&self) -> &'static str {
        "every agent messages every other agent each round; at least 2 agents, agent 0 answers"
    }
    fn default_agents(&self) -> usize {
        3
    }
    fn default_rounds(&self) -> usize {
        2
    }
    fn generate(&self, n: usize) -> Result<Graph, &'static str> {
        if n < 2 {
            return Err("debate needs at least 2 agents");
        }
        let edges = (0..n).flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j))).collect();
        Ok((edges, 0))
    }
    fn role(&self, i: usize, _n: usize) -> String {
        format!("You are debater {i}: give your answer and respond to the other debaters.")
    }
    fn synthesis_notice(&self) -> &'static str {
        "Synthesize your peers' latest messages into a final answer."
    }
}

/// Workers 0..n-1 each report to the aggregator n-1.
pub struct Star;

impl TopologyGenerator for Star {
    fn name(&self) -> &'static str {
        "star"
    }
    fn description(&self) -> &'static str {
        "workers send answers to one aggregator, the last agent; at least 2 agents"
    }
    fn default_agents(&self) -> usize {
        4
    }
    fn default_rounds(&self) -> usize {
        1
    }
    fn generate(&self, n: usize) -> Result<Graph, &'static str> {
        if n < 2 {
            return Err("star needs at least 2 agents");
        }
        Ok(((0..n - 1).map(|i| (i, n - 1)).collect(), n - 1))
    }
    fn role(&self, i: usize, n: usize) -> String {
        if i + 1 == n {
            "You are the aggregator: merge the workers' answers.".into()
        } else {
            format!("You are worker {i}: answer independently.")
        }
    }
    fn synthesis_notice(&self) -> &'static str {
        "Aggregate the workers' answers into a final answer."
    }
}

/// Path 0 -> 1 -> ... -> n-1; the last agent answers.
pub struct Chain;

impl TopologyGenerator for Chain {
    fn name(&self) -> &'static str {
        "chain"
    }
    fn description(&self) -> &'static str {
        "each agent passes its answer to the next; the last agent answers"
    }
    fn default_agents(&self) -> usize {
        3
    }
    fn default_rounds(&self) -> usize {
        2
    }
    fn generate(&self, n: usize) -> Result<Graph, &'static str> {
        if n == 0 {
            return Err("chain needs at least 1 agent");
        }
        Ok(((0..n - 1).map(|i| (i, i + 1)).collect(), n - 1))
    }
    fn synthesis_notice(&self) -> &'static str {
        "Refine the previous agent's answer into the final answer."
    }
}

/// Name -> topology generator.
pub struct TopologyCatalog {
    generators: BTreeMap<&'static str, Arc<dyn TopologyGenerator>>,
}

impl Default for TopologyCatalog {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TopologyCatalog {
    pub fn builtin() -> Self {
        let mut c = TopologyCatalog {
            generators: BTreeMap::new(),
        };
        c.register(Arc::new(Single));
        c.register(Arc::new(Refine));
        c.register(Arc::new(Debate));
        c.register(Arc::new(Star));
        c.register(Arc::new(Chain));
        c
    }

    pub fn shared() -> Arc<TopologyCatalog> {
        static CATALOG: OnceLock<Arc<TopologyCatalog>> = OnceLock::new();
        CATALOG.get_or_init(|| Arc::new(TopologyCatalog::builtin())).clone()
    }

    pub fn register(&mut self, generator: Arc<dyn TopologyGenerator>) {
        self.generators.insert(generator.name(), generator);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn TopologyGenerator>, TopologyError> {
        self.generators
            .get(name)
            .cloned()
            .ok_or_else(|| TopologyError::Unknown(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.generators.keys().copied().collect()
    }
}

/// Topologies offered to the planner by default.
pub const DEFAULT_TOPOLOGY_POOL: [&str; 4] = ["single", "refine", "debate", "star"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub name: String,
    pub n_agents: usize,
    pub rounds: usize,
    pub edges: Vec<(usize, usize)>,
    pub final_node: usize,
    /// Longest shortest-path distance from any agent to the final node.
    pub diameter: usize,
}

impl TopologySpec {
    pub fn out_edges(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |(a, _)| *a == i).map(|(_, b)| *b)
    }

    /// BFS distances from `from`; `None` for unreachable nodes.
    pub fn distances_from(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_agents];
        if from >= self.n_agents {
            return dist;
        }
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for v in self.out_edges(u) {
                if dist[v].is_none() {
                    dist[v] = Some(d + 1);
                    queue.push_back(v);
                }
            }
        }
        dist
    }
}

pub fn build_topology(name: &str, n_agents: usize, rounds: usize) -> Result<TopologySpec, TopologyError> {
    build_topology_in(&TopologyCatalog::shared(), name, n_agents, rounds)
}

pub fn build_topology_in(
    catalog: &TopologyCatalog,
    name: &str,
    n_agents: usize,
    rounds: usize,
) -> Result<TopologySpec, TopologyError> {
    let generator = catalog.get(name)?;
    if rounds == 0 {
        return Err(TopologyError::ZeroRounds);
    }
    let (edges, final_node) = generator.generate(n_agents).map_err(|reason| TopologyError::Incompatible {
        name: name.to_string(),
        n_agents,
        reason,
    })?;
    let mut spec = TopologySpec {
        name: name.to_string(),
        n_agents,
        rounds,
        edges,
        final_node,
        diameter: 0,
    };
    let mut diameter = 0;
    for i in 0..n_agents {
        match spec.distances_from(i)[final_node] {
            Some(d) => diameter = diameter.max(d),
            None => {
                return Err(TopologyError::Incompatible {
                    name: name.to_string(),
                    n_agents,
                    reason: "final node unreachable from some agent",
                })
            }
        }
    }
    spec.diameter = diameter;
    Ok(spec)
}

/// Rounds needed for the injector's first message to reach the final node.
pub fn reachability_check(topology: &TopologySpec, injector: usize) -> Result<usize, TopologyError> {
    if injector >= topology.n_agents {
        return Err(TopologyError::BadIndex(injector));
    }
    topology.distances_from(injector)[topology.final_node].ok_or(TopologyError::Unreachable {
        from: injector,
        to: topology.final_node,
    })
}

/// Default agent specs for a topology: one chat model everywhere,
/// optionally FM-bound agents bound to `fm`.
pub fn default_agent_specs(
    topology: &TopologySpec,
    chat_backend: &str,
    fm: Option<(&str, &str)>,
) -> Result<Vec<AgentSpec>, TopologyError> {
    let generator = TopologyCatalog::shared().get(&topology.name)?;
    Ok((0..topology.n_agents)
        .map(|i| {
            let role = generator.role(i, topology.n_agents);
            let spec = match fm {
                Some((fm, policy)) => AgentSpec::with_fm(format!("agent-{i}"), chat_backend, fm, policy),
                None => AgentSpec::llm(format!("agent-{i}"), chat_backend),
            };
            spec.with_role(role)
        })
        .collect())
}

/// A running multi-agent system on one task.
pub struct MasSystem {
    pub topology: TopologySpec,
    pub agents: Vec<Agent>,
    generator: Arc<dyn TopologyGenerator>,
    pending: Vec<MessageEnvelope>,
    rounds: Vec<RoundRecord>,
    usage: Vec<UsageRecord>,
    completed_rounds: usize,
}

impl MasSystem {
    pub fn new(
        task: &TaskInstance,
        topology: &TopologySpec,
        specs: &[AgentSpec],
        registry: &Registry,
        options: &RuntimeOptions,
    ) -> Result<MasSystem, MasError> {
        if specs.len() != topology.n_agents {
            return Err(TopologyError::AgentCount {
                expected: topology.n_agents,
                got: specs.len(),
            }
            .into());
        }
        let generator = TopologyCatalog::shared().get(&topology.name)?;
        let agents = specs
            .iter()
            .map(|s| Agent::new(task, s, registry, options))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MasSystem {
            topology: topology.clone(),
            agents,
            generator,
            pending: Vec::new(),
            rounds: Vec::new(),
            usage: Vec::new(),
            completed_rounds: 0,
        })
    }

    fn deliver_pending(&mut self) {
        for env in std::mem::take(&mut self.pending) {
            self.agents[env.to].state.push(ContextEntry::Inbox {
                from: env.from,
                round: env.round,
                body: env.body,
            });
        }
    }

    /// One synchronous round: deliver the previous round's messages, then
    /// every agent with outgoing edges replies once and its reply goes to
    /// each out-neighbour. Messages become visible only next round.
    pub fn execute_round(&mut self, registry: &Registry) -> Result<(), StepFailure> {
        let round = self.completed_rounds + 1;
        self.deliver_pending();
        let mut envelopes = Vec::new();
        for i in 0..self.agents.len() {
            let targets: Vec<usize> = self.topology.out_edges(i).collect();
            if targets.is_empty() {
                continue;
            }
            let reply = match self.agents[i].run_until_reply(registry, &mut self.usage) {
                Ok(r) => r.unwrap_or_else(|| last_reply(&self.agents[i])),
                Err(f) => {
                    self.rounds.push(RoundRecord {
                        round,
                        envelopes,
                        state_lens: self.state_lens(),
                        aborted: Some(f.to_string()),
                    });
                    return Err(f);
                }
            };
            envelopes.extend(targets.into_iter().map(|to| MessageEnvelope {
                from: i,
                to,
                round,
                body: reply.clone(),
            }));
        }
        self.pending = envelopes.clone();
        self.rounds.push(RoundRecord {
            round,
            envelopes,
            state_lens: self.state_lens(),
            aborted: None,
        });
        self.completed_rounds = round;
        Ok(())
    }

    fn state_lens(&self) -> Vec<usize> {
        self.agents.iter().map(|a| a.state.context_entries.len()).collect()
    }

    /// Delivers the last round's messages and, when the topology has
    /// edges, asks the final node for a synthesis.
    pub fn prepare_answer(&mut self) {
        self.deliver_pending();
        if !self.topology.edges.is_empty() {
            let notice = self.generator.synthesis_notice().to_string();
            self.agents[self.topology.final_node].state.push(ContextEntry::Notice { text: notice });
        }
    }

    /// [`Self::prepare_answer`], then the final node answers.
    pub fn conclude(&mut self, registry: &Registry) -> AnswerResult {
        self.prepare_answer();
        let final_node = self.topology.final_node;
        self.agents[final_node].answer(registry, &mut self.usage)
    }

    pub fn trace(&self) -> SystemTrace {
        SystemTrace {
            agents: self.agents.iter().map(Agent::trace).collect(),
            rounds: self.rounds.clone(),
            usage: self.usage.clone(),
            notes: Vec::new(),
            final_answer: None,
        }
    }

    pub fn run(mut self, registry: &Registry) -> EpisodeOutcome {
        // Without edges a round does nothing; skip it so a one-node system
        // traces exactly like a lone agent.
        let rounds = if self.topology.edges.is_empty() { 0 } else { self.topology.rounds };
        for _ in 0..rounds {
            if let Err(f) = self.execute_round(registry) {
                return finish_episode(AnswerResult::BackendFailed(f), 0, self.trace());
            }
        }
        let result = self.conclude(registry);
        let attempts = self.agents[self.topology.final_node].state.attempt;
        finish_episode(result, attempts, self.trace())
    }
}

fn last_reply(agent: &Agent) -> String {
    agent
        .state
        .context_entries
        .iter()
        .rev()
        .find_map(|e| match e {
            ContextEntry::Reply { text, .. } => Some(text.clone()),
            _ => None,
        })
        .unwrap_or_default()
}

pub fn run_mas(
    task: &TaskInstance,
    topology: &TopologySpec,
    specs: &[AgentSpec],
    registry: &Registry,
) -> Result<EpisodeOutcome, MasError> {
    run_mas_with(task, topology, specs, registry, &RuntimeOptions::default())
}

pub fn run_mas_with(
    task: &TaskInstance,
    topology: &TopologySpec,
    specs: &[AgentSpec],
    registry: &Registry,
    options: &RuntimeOptions,
) -> Result<EpisodeOutcome, MasError> {
    Ok(MasSystem::new(task, topology, specs, registry, options)?.run(registry))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agent::{run_episode, EpisodeStatus};
    use crate::backend::mock::{LastValue, ScriptedChat};
    use crate::bench::{Domain, Series, TaskKind};

    const VALID: &str = "timestamp,value\n3,5\n4,5\n5,5";

    fn task() -> TaskInstance {
        TaskInstance {
            domain: Domain::Energy,
            task: TaskKind::Forecast,
            description: "Forecast the load.".into(),
            output_size: 3,
            input: Series::from_values(0, &[1.0, 2.0, 5.0]).to_csv(),
            label: VALID.into(),
        }
    }

    fn echo_registry() -> Registry {
        Registry::builder()
            .register(ScriptedChat::with_scripts(
                "llm",
                vec![crate::backend::mock::ChatScript {
                    trigger: None,
                    replies: vec![VALID.into()],
                }],
                true,
            ))
            .register(LastValue::new("lv"))
            .build()
            .unwrap()
    }

    #[test]
    fn generators() {
        let d = build_topology("debate", 3, 2).unwrap();
        assert_eq!(d.edges.len(), 6);
        assert_eq!(d.diameter, 1);
        let r = build_topology("refine", 2, 2).unwrap();
        assert_eq!(r.edges, vec![(0, 1), (1, 0)]);
        assert_eq!((r.final_node, r.diameter), (0, 1));
        let s = build_topology("star", 4, 1).unwrap();
        assert_eq!(s.final_node, 3);
        assert_eq!(s.edges.len(), 3);
        assert!(matches!(build_topology("star", 1, 1), Err(TopologyError::Incompatible { .. })));
        assert!(matches!(build_topology("ring", 3, 1), Err(TopologyError::Unknown(_))));
        assert!(matches!(build_topology("debate", 3, 0), Err(TopologyError::ZeroRounds)));
        assert_eq!(build_topology("single", 1, 1).unwrap().diameter, 0);
    }

    #[test]
    fn reachability() {
        for n in 2..=5 {
            let d = build_topology("debate", n, 1).unwrap();
            for i in 1..n {
                assert_eq!(reachability_check(&d, i).unwrap(), 1);
            }
        }
        let c = build_topology("chain", 4, 3).unwrap();
        assert_eq!(reachability_check(&c, 0).unwrap(), 3);
        assert_eq!(reachability_check(&c, 3).unwrap(), 0);
        let pair = TopologySpec {
            name: "custom".into(),
            n_agents: 2,
            rounds: 1,
            edges: vec![],
            final_node: 1,
            diameter: 0,
        };
        assert_eq!(reachability_check(&pair, 0).unwrap_err().to_string(), "unreachable: agent 0 cannot reach agent 1");
    }

    #[test]
    fn debate_round_emits_one_envelope_per_edge() {
        let reg = echo_registry();
        let topo = build_topology("debate", 3, 1).unwrap();
        let specs = default_agent_specs(&topo, "llm", None).unwrap();
        let mut sys = MasSystem::new(&task(), &topo, &specs, &reg, &RuntimeOptions::default()).unwrap();
        sys.execute_round(&reg).unwrap();
        assert_eq!(sys.trace().rounds[0].envelopes.len(), 6);
    }

    #[test]
    fn single_topology_matches_episode() {
        let topo = build_topology("single", 1, 1).unwrap();
        let spec = AgentSpec::llm("a", "llm");
        let a = run_mas(&task(), &topo, std::slice::from_ref(&spec), &echo_registry()).unwrap();
        let b = run_episode(&task(), &spec, &echo_registry()).unwrap();
        assert_eq!(a.trace.canonical_json(), b.trace.canonical_json());
        assert_eq!(a.final_answer, b.final_answer);
    }

    #[test]
    fn agent_count_checked() {
        let topo = build_topology("debate", 3, 1).unwrap();
        let err = run_mas(&task(), &topo, &[AgentSpec::llm("a", "llm")], &echo_registry()).unwrap_err();
        assert_eq!(err, MasError::Topology(TopologyError::AgentCount { expected: 3, got: 1 }));
    }

    #[test]
    fn backend_failure_aborts_round() {
        let reg = Registry::builder()
            .register(ScriptedChat::new("llm", vec!["only one".into()]))
            .build()
            .unwrap();
        let topo = build_topology("debate", 3, 1).unwrap();
        let specs = default_agent_specs(&topo, "llm", None).unwrap();
        let out = run_mas(&task(), &topo, &specs, &reg).unwrap();
        assert_eq!(out.status, EpisodeStatus::BackendFailed);
        let round = &out.trace.rounds[0];
        assert!(round.aborted.is_some());
        assert_eq!(round.envelopes.len(), 2);
    }
}
