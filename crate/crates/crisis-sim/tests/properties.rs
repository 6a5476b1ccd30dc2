use std::sync::Arc;

use crisis::order::OrderCone;
use crisis::{FixedWeight, LamportGraph, Params, PowWeight, Replica, Weight, WeightSystem};
use crisis_sim::oracle::{
    check_causality, check_k_reachability, check_kahn, check_order_consistency, check_past_invariance,
    check_round_semantics,
};
use crisis_sim::sim;
use crisis_sim::workload::{causal_shuffle, protocol_messages, random_messages, WorkloadShape};
use crisis_sim::SimConfig;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn shape(messages: usize, ids: usize, fork_chance: f64) -> WorkloadShape {
    WorkloadShape {
        messages,
        ids,
        fork_chance,
        ..WorkloadShape::default()
    }
}

fn graph(weights: Arc<dyn WeightSystem>, seed: u64, shape: &WorkloadShape) -> LamportGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = LamportGraph::new(weights);
    for m in random_messages(&mut rng, shape) {
        g.extend(m).unwrap();
    }
    g
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn causality_matches_closure(seed in any::<u64>(), n in 1usize..40, ids in 1usize..8, fork in 0.0..0.3) {
        let g = graph(Arc::new(FixedWeight::new(1, Weight::zero())), seed, &shape(n, ids, fork));
        prop_assert_eq!(check_causality(&g), Ok(()));
    }

    #[test]
    fn k_reachability_matches_all_paths(seed in any::<u64>(), n in 1usize..20, ids in 1usize..5) {
        let g = graph(Arc::new(PowWeight::new(Weight::zero())), seed, &shape(n, ids, 0.1));
        prop_assert_eq!(check_k_reachability(&g), Ok(()));
    }

    #[test]
    fn kahn_matches_oracle(seed in any::<u64>(), n in 1usize..40, ids in 1usize..8, cut in any::<prop::sample::Index>()) {
        let g = graph(Arc::new(PowWeight::new(Weight::zero())), seed, &shape(n, ids, 0.1));
        let all: Vec<_> = g.vertices().map(|v| *v.digest()).collect();
        let leader = *all.last().unwrap();
        let mut members = g.past(&leader).unwrap();
        let earlier = all[cut.index(all.len())];
        if earlier != leader {
            for d in g.past(&earlier).unwrap() {
                members.remove(&d);
            }
        }
        prop_assert_eq!(check_kahn(&g, &OrderCone { leader, members }), Ok(()));
    }

    #[test]
    fn random_graphs_keep_round_semantics(seed in any::<u64>(), n in 1usize..120, ids in 1usize..10, fork in 0.0..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = Params::new(Weight::zero(), Weight::units(1), 8);
        let mut r = Replica::new(Arc::new(FixedWeight::new(1, Weight::zero())), params);
        for m in random_messages(&mut rng, &shape(n, ids, fork)) {
            r.receive(m).unwrap();
        }
        prop_assert_eq!(check_round_semantics(r.graph()), Ok(()));
        prop_assert_eq!(check_order_consistency(r.graph()), Ok(()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn delivery_order_does_not_matter(seed in any::<u64>(), processes in 4usize..10, mutate in any::<bool>()) {
        let (config, messages) = protocol_messages(seed, processes, mutate, 120);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let orders = vec![messages.clone(), causal_shuffle(&mut rng, &messages), causal_shuffle(&mut rng, &messages)];
        let coverage = check_past_invariance(sim::weight_system(&config), &sim::params(&config), &orders);
        prop_assert!(coverage.is_ok(), "{:?}", coverage);
    }

    #[test]
    fn scenarios_round_trip_through_toml(seed in any::<u64>(), processes in 1usize..20, difficulty in 1u64..100, time in 1.0..500.0) {
        let mut config = SimConfig::from_toml("schema_version = 1").unwrap();
        config.seed = seed;
        config.network.processes = processes;
        config.protocol.difficulty = difficulty;
        config.duration.time = time;
        prop_assert_eq!(SimConfig::from_toml(&config.to_toml()).unwrap(), config);
    }
}
