mod common;

use common::*;
use fmbridge_core::backend::{ChatMessage, InvocationRequest};
use fmbridge_core::bench::Series;
use fmbridge_core::metrics::{
    char_similarity, normalize_text, score_natural_language, smape_maape, summarize, token_f1, tokenize_answer,
};
use fmbridge_core::orchestra::{oracle_conductor, utility_loss};
use proptest::prelude::*;

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![Just(0.0), -1e4..1e4f64, -0.05..0.05f64]
}

fn paired(max: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..max).prop_flat_map(|h| (prop::collection::vec(finite(), h), prop::collection::vec(finite(), h)))
}

proptest! {
    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,30}") {
        let once = normalize_text(&s);
        prop_assert_eq!(normalize_text(&once), once);
    }

    #[test]
    fn nl_score_is_bounded_and_exact_on_self(p in "[a-z0-9 .\\-]{0,20}", g in "[a-z0-9 .\\-]{0,20}") {
        let u = score_natural_language(&p, &g).value;
        prop_assert!((0.0..=1.0).contains(&u));
        prop_assert_eq!(score_natural_language(&g, &g).value, 1.0);
    }

    #[test]
    fn similarity_bounded_and_f1_symmetric(a in "[a-c ]{0,12}", b in "[a-c ]{0,12}") {
        // Greedy longest-match similarity depends on argument order; only bounds hold.
        let sim = char_similarity(&a, &b);
        prop_assert!((0.0..=1.0).contains(&sim));
        prop_assert_eq!(sim, common::oracle::ratcliff(&a, &b));
        prop_assert_eq!(char_similarity(&a, &a), 1.0);
        let (ta, tb) = (tokenize_answer(&a), tokenize_answer(&b));
        prop_assert_eq!(token_f1(&ta, &tb), token_f1(&tb, &ta));
    }

    #[test]
    fn smape_is_symmetric_and_bounded((p, g) in paired(20)) {
        let (s1, m) = smape_maape(&p, &g).unwrap();
        let (s2, _) = smape_maape(&g, &p).unwrap();
        prop_assert!((s1 - s2).abs() < 1e-12);
        prop_assert!((0.0..=2.0 + 1e-12).contains(&s1));
        prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(&m));
    }

    #[test]
    fn series_score_matches_oracle((p, g) in paired(20)) {
        let lib = fmbridge_core::metrics::score_series_values(&p, &g).unwrap().value;
        prop_assert!((lib - common::oracle::series(&p, &g)).abs() <= ORACLE_TOL);
    }

    #[test]
    fn summary_is_permutation_invariant(mut v in prop::collection::vec(0.0..1.0f64, 1..30), seed in any::<u64>()) {
        let a = summarize(&v).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        rand::seq::SliceRandom::shuffle(v.as_mut_slice(), &mut rng);
        let b = summarize(&v).unwrap();
        prop_assert!((a.mean - b.mean).abs() < 1e-12);
        prop_assert!((a.sample_std - b.sample_std).abs() < 1e-12);
        prop_assert!(a.mean >= 0.0 && a.mean <= 1.0);
    }

    #[test]
    fn request_round_trips(values in prop::collection::vec(-1e6..1e6f64, 1..20), h in 1usize..10, text in "\\PC{0,40}") {
        for req in [
            InvocationRequest::forecast("fm", Series::from_values(0, &values), h),
            InvocationRequest::chat("llm", vec![ChatMessage::user(text.clone()), ChatMessage::assistant("ok")]),
        ] {
            let json = serde_json::to_string(&req).unwrap();
            let back: InvocationRequest = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back, req);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn oracle_never_loses_to_a_fixed_config(
        specs in prop::collection::vec((any::<bool>(), 1.0..20.0f64, 1.0..20.0f64), 1..6)
    ) {
        let tasks: Vec<_> = specs
            .iter()
            .map(|&(level, a, b)| if level { level_task(a.round(), b.round()) } else { alternating_task(a.round(), b.round()) })
            .collect();
        let space = conductor_space(&["last-value", "seasonal-naive"]);
        let report = oracle_conductor(&tasks, &space, conductor_registry, utility_loss, &conductor_options()).unwrap();
        for fixed in &report.fixed_mean_losses {
            prop_assert!(report.oracle_mean_loss <= fixed + 1e-12);
        }
    }

    #[test]
    fn mas_state_is_append_only(n in 2usize..5, rounds in 1usize..4, injector in 0usize..4) {
        use fmbridge_core::agent::RuntimeOptions;
        use fmbridge_core::mas::{build_topology, MasSystem};
        let injector = injector % n;
        let topology = build_topology("debate", n, rounds).unwrap();
        let registry = propagation_test_registry();
        let specs: Vec<_> = (0..n)
            .map(|i| fmbridge_core::agent::AgentSpec::llm(format!("a{i}"), if i == injector { "inject-llm" } else { "relay-llm" }))
            .collect();
        let mut system = MasSystem::new(&qa_task(), &topology, &specs, &registry, &RuntimeOptions::default()).unwrap();
        let mut before: Vec<Vec<String>> = Vec::new();
        for _ in 0..rounds {
            let now: Vec<Vec<String>> = system
                .agents
                .iter()
                .map(|a| a.state.context_entries.iter().map(|e| e.content()).collect())
                .collect();
            for (old, new) in before.iter().zip(&now) {
                prop_assert!(new.len() >= old.len());
                prop_assert_eq!(&new[..old.len()], &old[..]);
            }
            before = now;
            system.execute_round(&registry).unwrap();
        }
    }
}

fn propagation_test_registry() -> fmbridge_core::backend::Registry {
    use fmbridge_core::backend::mock::{ChatScript, ScriptedChat};
    let script = |r: &str| ChatScript { trigger: None, replies: vec![r.to_string()] };
    fmbridge_core::backend::Registry::builder()
        .register(ScriptedChat::with_scripts("inject-llm", vec![script("S {{context}}")], true))
        .register(ScriptedChat::with_scripts("relay-llm", vec![script("relay")], true))
        .build()
        .unwrap()
}
