//! The eleven acceptance criteria, one PASS/FAIL line each. Exits nonzero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use crisis::dump::dump_graph;
use crisis::leader::long_chain;
use crisis::order::OrderCone;
use crisis::{FixedWeight, LamportGraph, LeaderStream, LeaderValue, Message, Params, PowWeight, Replica, Weight};
use crisis_sim::oracle::{
    check_causality, check_k_reachability, check_kahn, check_order_consistency, check_past_invariance,
    check_round_semantics, check_stream_shape, Coverage,
};
use crisis_sim::sim;
use crisis_sim::workload::{causal_shuffle, protocol_messages, random_messages, WorkloadShape};
use crisis_sim::{SimConfig, SimReport, Summary};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BOUNDED: &str = include_str!("../scenarios/honest-bounded.scenario");
const LONG: &str = include_str!("../scenarios/honest-long.scenario");
const MUTATE: &str = include_str!("../scenarios/mutate.scenario");
const TIME_TRAVEL: &str = include_str!("../scenarios/time-travel.scenario");

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn graph_of(weights: Arc<dyn crisis::WeightSystem>, messages: &[Message]) -> LamportGraph {
    let mut g = LamportGraph::new(weights);
    for m in messages {
        g.extend(m.clone()).expect("workload messages pass integrity");
    }
    g
}

fn replica_of(params: &Params, messages: &[Message]) -> Replica {
    let mut r = Replica::new(Arc::new(FixedWeight::new(1, Weight::zero())), params.clone());
    for m in messages {
        r.receive(m.clone()).expect("workload messages pass integrity");
    }
    r
}

/// Unit weights with difficulty 2: patterns need 7 to 12 last vertices.
fn workload_params() -> Params {
    Params::new(Weight::units(1), Weight::units(2), 9)
}

fn run(text: &str) -> Result<SimReport, String> {
    let config = SimConfig::from_toml(text).map_err(|e| e.to_string())?;
    crisis_sim::run(config).map_err(|e| e.to_string())
}

fn invariance() -> Outcome {
    let mut total = Coverage::default();
    for seed in 0..100 {
        let mut rng = rng(seed);
        let processes = rng.random_range(4..=15);
        let (config, messages) = protocol_messages(seed, processes, seed % 2 == 1, 200);
        let orders = vec![causal_shuffle(&mut rng, &messages), causal_shuffle(&mut rng, &messages)];
        let c = check_past_invariance(sim::weight_system(&config), &sim::params(&config), &orders)
            .map_err(|e| format!("set {seed}: {e}"))?;
        total.vertices += c.vertices;
        total.last_vertices += c.last_vertices;
        total.with_pattern += c.with_pattern;
        total.votes += c.votes;
    }
    ensure(total.with_pattern > 0 && total.votes > 0, || {
        format!("comparison never reached patterns or votes: {total:?}")
    })?;
    Ok(format!(
        "100 sets, {} vertices, {} last, {} with patterns, {} votes compared",
        total.vertices, total.last_vertices, total.with_pattern, total.votes
    ))
}

fn causality() -> Outcome {
    for seed in 0..50 {
        let mut rng = rng(1000 + seed);
        let shape = WorkloadShape {
            messages: rng.random_range(1..=50),
            ids: rng.random_range(1..=8),
            ..WorkloadShape::default()
        };
        let g = graph_of(Arc::new(FixedWeight::new(1, Weight::zero())), &random_messages(&mut rng, &shape));
        check_causality(&g).map_err(|e| format!("graph {seed}: {e}"))?;
    }
    Ok("50 graphs match the transitive closure".into())
}

fn k_reachability() -> Outcome {
    for seed in 0..30 {
        let mut rng = rng(2000 + seed);
        let shape = WorkloadShape {
            messages: rng.random_range(1..=25),
            ids: rng.random_range(1..=6),
            ..WorkloadShape::default()
        };
        let g = graph_of(Arc::new(PowWeight::new(Weight::zero())), &random_messages(&mut rng, &shape));
        check_k_reachability(&g).map_err(|e| format!("graph {seed}: {e}"))?;
    }
    Ok("30 graphs match the all-paths oracle for every whole k".into())
}

fn round_semantics(sim_graphs: &[LamportGraph]) -> Outcome {
    let params = workload_params();
    let mut checked = 0;
    for seed in 0..100 {
        let mut rng = rng(seed);
        let shape = WorkloadShape {
            messages: rng.random_range(100..=200),
            ids: rng.random_range(4..=16),
            ..WorkloadShape::default()
        };
        let r = replica_of(&params, &random_messages(&mut rng, &shape));
        check_round_semantics(r.graph()).map_err(|e| format!("workload {seed}: {e}"))?;
        checked += 1;
    }
    for (i, g) in sim_graphs.iter().enumerate() {
        check_round_semantics(g).map_err(|e| format!("simulated graph {i}: {e}"))?;
        checked += 1;
    }
    Ok(format!("{checked} graphs, zero violations"))
}

fn longest_chain() -> Outcome {
    let leader = |n: u64| {
        let m = Message::new(crisis::Nonce::from_u64(n), crisis::VirtualId::from_index(n), vec![], vec![])
            .expect("no references");
        LeaderValue::Message(Arc::new(m))
    };
    let (l, m) = (leader(1), leader(2));
    let cases = [
        (BTreeSet::new(), 5, BTreeSet::from([(5, m.clone())])),
        (BTreeSet::from([(3, l.clone())]), 5, BTreeSet::from([(5, m.clone())])),
        (BTreeSet::from([(5, l.clone())]), 3, BTreeSet::from([(5, l.clone())])),
        (BTreeSet::from([(5, l.clone())]), 5, BTreeSet::from([(5, l.clone()), (5, m.clone())])),
    ];
    for (i, (set, deciding, expected)) in cases.into_iter().enumerate() {
        let got = long_chain(&set, m.clone(), deciding);
        ensure(got == expected, || format!("example {i}: got {got:?}"))?;
    }
    let mut rng = rng(3000);
    let leaders: Vec<LeaderValue> = (0..6).map(leader).chain([LeaderValue::Nil]).collect();
    for seq in 0..1000 {
        let mut stream = LeaderStream::new();
        for _ in 0..rng.random_range(1..60) {
            let round = rng.random_range(0..8);
            let deciding = round + rng.random_range(0..6);
            let l = leaders.choose(&mut rng).expect("nonempty").clone();
            stream.apply(round, l, deciding);
            check_stream_shape(&stream).map_err(|e| format!("sequence {seq}: {e}"))?;
        }
    }
    Ok("4 examples, 1000 random sequences keep one deciding round per set".into())
}

fn kahn() -> Outcome {
    for seed in 0..50 {
        let mut rng = rng(4000 + seed);
        let shape = WorkloadShape {
            messages: rng.random_range(1..=40),
            ids: rng.random_range(1..=8),
            ..WorkloadShape::default()
        };
        let messages = random_messages(&mut rng, &shape);
        let g = graph_of(Arc::new(PowWeight::new(Weight::zero())), &messages);
        let leader = *messages.last().expect("at least one message").digest();
        let earlier = *messages.choose(&mut rng).expect("nonempty").digest();
        let mut members = g.past(&leader).expect("present");
        if earlier != leader {
            for d in g.past(&earlier).expect("present") {
                members.remove(&d);
            }
        }
        check_kahn(&g, &OrderCone { leader, members }).map_err(|e| format!("cone {seed}: {e}"))?;
    }
    Ok("50 cones match the oracle and respect causality".into())
}

fn violations(s: &Summary) -> u64 {
    s.quorum_intersection_violations + s.graded_agreement_violations + s.agreement_stability_violations
}

fn common_safety(s: &Summary) -> Result<(), String> {
    ensure(violations(s) == 0, || format!("{} runtime assertions fired", violations(s)))?;
    ensure(s.agreement_ratio == 1.0, || format!("agreement ratio {}", s.agreement_ratio))?;
    ensure(s.consistency_failures == 0, || {
        format!("{} orders break causality", s.consistency_failures)
    })?;
    ensure(s.finalized_rewrites == 0 && s.finalized_shrinks == 0, || {
        format!("{} rewrites, {} shrinks", s.finalized_rewrites, s.finalized_shrinks)
    })?;
    ensure(s.honest_mutation_pairs == 0, || format!("{} honest mutations", s.honest_mutation_pairs))
}

fn min_finalized_rounds(s: &Summary) -> u64 {
    s.finalized_rounds.iter().copied().min().unwrap_or(0)
}

fn bounded(report: &SimReport) -> Outcome {
    let s = &report.summary;
    common_safety(s)?;
    ensure(min_finalized_rounds(s) >= 30, || {
        format!("only {} finalized rounds", min_finalized_rounds(s))
    })?;
    ensure(s.band.below == 0 && s.band.above == 0 && s.band.rounds > 0, || {
        format!("rounds outside (3D, 6D]: {:?}", s.band)
    })?;
    ensure(s.max_candidate_set <= 1, || format!("a candidate set held {}", s.max_candidate_set))?;
    ensure(s.candidate_growth_after_decision == 0, || {
        format!("{} candidate sets grew after a decision", s.candidate_growth_after_decision)
    })?;
    Ok(format!(
        "{} finalized rounds, {} rounds in band, max candidate set {}, agreement {}",
        min_finalized_rounds(s),
        s.band.rounds,
        s.max_candidate_set,
        s.agreement_ratio
    ))
}

fn mutator(report: &SimReport) -> Outcome {
    let s = &report.summary;
    common_safety(s)?;
    ensure(s.mutation_pairs > 0, || "the adversary produced no mutations".into())?;
    ensure(min_finalized_rounds(s) >= 20, || {
        format!("only {} finalized rounds", min_finalized_rounds(s))
    })?;
    Ok(format!(
        "{} spacelike same-id pairs, {} finalized rounds, agreement {}",
        s.mutation_pairs,
        min_finalized_rounds(s),
        s.agreement_ratio
    ))
}

fn time_travel(report: &SimReport) -> Outcome {
    let s = &report.summary;
    common_safety(s)?;
    let injections: Vec<&crisis_sim::metrics::Record> =
        report.records.iter().filter(|r| r.metric == "injection").collect();
    ensure(!injections.is_empty() && s.injected_messages > 0, || "no injection happened".into())?;
    for r in &injections {
        let rounds = r.value["finalized_rounds"].as_u64().unwrap_or(0);
        ensure(rounds >= 20, || format!("injection after only {rounds} finalized rounds"))?;
    }
    for p in report.honest() {
        for d in &report.injected {
            let v = p
                .replica
                .graph()
                .vertex(d)
                .ok_or_else(|| format!("process {} never received injected {d}", p.index))?;
            ensure(v.round() == Some(0), || format!("injected {d} is not in round 0"))?;
        }
    }
    Ok(format!(
        "{} sinks injected into round 0 at {:.1}, {} finalized positions changed",
        s.injected_messages, injections[0].t, s.finalized_rewrites
    ))
}

fn termination(report: &SimReport) -> Outcome {
    let s = &report.summary;
    common_safety(s)?;
    ensure(min_finalized_rounds(s) >= 60, || {
        format!("only {} finalized rounds", min_finalized_rounds(s))
    })?;
    ensure(report.config.metrics.straggler_round >= 30, || "straggler bound below round 30".into())?;
    ensure(s.stragglers == 0, || format!("{} stragglers", s.stragglers))?;
    ensure(s.undelivered == 0, || format!("{} undelivered messages", s.undelivered))?;
    Ok(format!(
        "{} finalized rounds, prefix never shrank, all {} messages from rounds below {} placed",
        min_finalized_rounds(s),
        s.honest_messages,
        report.config.metrics.straggler_round
    ))
}

fn artifacts(report: &SimReport) -> Vec<String> {
    let mut out = vec![report.metrics_jsonl()];
    for p in &report.processes {
        out.push(dump_graph(p.replica.graph()));
        out.push(p.replica.stream().dump());
        out.push(p.replica.order().dump());
    }
    out
}

fn determinism(first: &[(&str, &SimReport)]) -> Outcome {
    for (name, report) in first {
        let again = crisis_sim::run(report.config.clone()).map_err(|e| e.to_string())?;
        ensure(artifacts(report) == artifacts(&again), || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} scenarios re-run byte-identically", first.len()))
}

fn consistent(report: &SimReport) -> Result<(), String> {
    for p in report.honest() {
        check_order_consistency(p.replica.graph()).map_err(|e| format!("process {}: {e}", p.index))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |n: usize, name: &str, start: Instant, outcome: Outcome| {
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {n:>2} {name} ({secs:.1}s): {why}");
            }
        }
    };

    let t = Instant::now();
    report(1, "invariance of the past", t, invariance());
    let t = Instant::now();
    report(2, "causality oracle", t, causality());
    let t = Instant::now();
    report(3, "k-reachability oracle", t, k_reachability());

    let t = Instant::now();
    let runs: Vec<(&str, Result<SimReport, String>)> = [
        ("honest-bounded", BOUNDED),
        ("mutate", MUTATE),
        ("time-travel", TIME_TRAVEL),
        ("honest-long", LONG),
    ]
    .into_iter()
    .map(|(name, text)| (name, run(text).and_then(|r| consistent(&r).map(|()| r))))
    .collect();
    let sim_time = t.elapsed();
    let get = |name: &str| -> Result<&SimReport, String> {
        let (_, r) = runs.iter().find(|(n, _)| *n == name).expect("scenario is listed");
        r.as_ref().map_err(|e| format!("{name}: {e}"))
    };
    let sim_graphs: Vec<LamportGraph> = runs
        .iter()
        .filter_map(|(_, r)| r.as_ref().ok())
        .flat_map(|r| r.honest().map(|p| p.replica.graph().clone()))
        .collect();

    let t = Instant::now();
    report(4, "round semantics", t, round_semantics(&sim_graphs));
    let t = Instant::now();
    report(5, "longest chain rule", t, longest_chain());
    let t = Instant::now();
    report(6, "kahn ordering", t, kahn());
    let t = Instant::now() - sim_time;
    report(7, "bounded-weight convergence", t, get("honest-bounded").and_then(bounded));
    let t = Instant::now();
    report(8, "byzantine safety", t, get("mutate").and_then(mutator));
    let t = Instant::now();
    report(9, "time-travel immunity", t, get("time-travel").and_then(time_travel));
    let t = Instant::now();
    report(10, "termination proxy", t, get("honest-long").and_then(termination));
    let t = Instant::now();
    let outcome = ["honest-bounded", "mutate", "time-travel"]
        .into_iter()
        .map(|n| get(n).map(|r| (n, r)))
        .collect::<Result<Vec<_>, _>>()
        .and_then(|rs| determinism(&rs));
    report(11, "determinism", t, outcome);

    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
