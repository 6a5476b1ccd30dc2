//! Omniscient metrics: one JSON record per (time, metric, value), and a
//! summary at the end of the run.

use std::collections::{BTreeMap, BTreeSet};

use crisis::dump::diff_orders;
use crisis::{Digest, LeaderValue, ViolationKind, Weight};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::config::{self, SimConfig};
use crate::oracle::check_order_consistency;
use crate::sim::Process;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub t: f64,
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub process: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub round: Option<u64>,
    pub value: Value,
}

/// Per-round last-vertex weight of one graph against the (3d, 6d] band.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Band {
    /// Rounds checked: all but the two most recent, which may still grow.
    pub rounds: u64,
    pub below: u64,
    pub above: u64,
    /// Sum over rounds of last-vertex weight divided by difficulty.
    pub difficulty_sum: f64,
    /// `6 * (max round + 1)`.
    pub difficulty_bound: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub seed: u64,
    pub events: u64,
    pub virtual_time: f64,
    pub honest_processes: usize,
    pub byzantine_processes: usize,
    pub honest_messages: usize,
    pub injected_messages: usize,
    /// Highest round in each honest graph.
    pub max_round: Vec<u64>,
    /// Leading final rounds per honest process.
    pub finalized_rounds: Vec<u64>,
    /// Finalized order length per honest process.
    pub finalized_len: Vec<usize>,
    /// Smallest pairwise share of agreeing positions over finalized prefixes.
    pub agreement_ratio: f64,
    /// Largest candidate set any honest process ever held.
    pub max_candidate_set: usize,
    /// Times a candidate set grew after its round had been decided.
    pub candidate_growth_after_decision: u64,
    /// Times a finalized position changed.
    pub finalized_rewrites: u64,
    /// Times a finalized prefix got shorter.
    pub finalized_shrinks: u64,
    pub quorum_intersection_violations: u64,
    pub graded_agreement_violations: u64,
    pub agreement_stability_violations: u64,
    /// Honest graphs whose order breaks causality somewhere.
    pub consistency_failures: usize,
    /// Spacelike same-id pairs in the first honest graph.
    pub mutation_pairs: usize,
    /// Of those, pairs whose id belongs to an honest process.
    pub honest_mutation_pairs: usize,
    /// Honest messages missing from some honest graph at the end.
    pub undelivered: usize,
    /// Honest messages below `straggler_round` without a final position in
    /// some honest process.
    pub stragglers: usize,
    /// Liveness windows in which no honest process reached a new round.
    pub stalled_windows: u64,
    pub band: Band,
}

struct Tracker {
    finalized: Vec<Digest>,
    decided: BTreeSet<u64>,
    candidates: BTreeMap<u64, usize>,
    max_round: Option<u64>,
    violations: usize,
}

pub struct Recorder {
    records: Vec<Record>,
    trackers: BTreeMap<usize, Tracker>,
    max_candidate_set: usize,
    growth_after_decision: u64,
    rewrites: u64,
    shrinks: u64,
    violations: BTreeMap<&'static str, u64>,
    /// `(time, round)` whenever the highest honest round rose.
    progress: Vec<(u64, u64)>,
}

fn kind_name(kind: &ViolationKind) -> &'static str {
    match kind {
        ViolationKind::QuorumIntersection => "quorum_intersection",
        ViolationKind::GradedAgreement => "graded_agreement",
        ViolationKind::AgreementStability => "agreement_stability",
    }
}

impl Recorder {
    pub fn new(_config: &SimConfig, honest: usize) -> Self {
        Recorder {
            records: Vec::new(),
            trackers: (0..honest)
                .map(|i| {
                    (
                        i,
                        Tracker {
                            finalized: Vec::new(),
                            decided: BTreeSet::new(),
                            candidates: BTreeMap::new(),
                            max_round: None,
                            violations: 0,
                        },
                    )
                })
                .collect(),
            max_candidate_set: 0,
            growth_after_decision: 0,
            rewrites: 0,
            shrinks: 0,
            violations: BTreeMap::new(),
            progress: Vec::new(),
        }
    }

    fn record(&mut self, now: u64, metric: &str, process: Option<usize>, round: Option<u64>, value: Value) {
        self.records.push(Record {
            t: config::units(now),
            metric: metric.to_string(),
            process,
            round,
            value,
        });
    }

    pub fn injection(&mut self, now: u64, process: usize, count: usize, finalized_rounds: u64) {
        self.record(
            now,
            "injection",
            Some(process),
            None,
            json!({ "messages": count, "finalized_rounds": finalized_rounds }),
        );
    }

    /// Diffs an honest process's state against what was last seen.
    pub fn observe(&mut self, now: u64, p: &Process) {
        let r = &p.replica;
        let mut t = self.trackers.remove(&p.index).expect("honest processes are tracked");

        let max_round = r.graph().max_round();
        if max_round > t.max_round {
            t.max_round = max_round;
            let round = max_round.expect("greater than None");
            self.record(now, "max_round", Some(p.index), None, json!(round));
            if self.progress.last().is_none_or(|(_, best)| round > *best) {
                self.progress.push((now, round));
            }
        }

        for (round, set) in r.stream().rounds() {
            let size = set.len();
            let old = t.candidates.insert(round, size);
            if old != Some(size) || old.is_none() {
                if old.is_some_and(|o| size > o) && t.decided.contains(&round) {
                    self.growth_after_decision += 1;
                }
                self.max_candidate_set = self.max_candidate_set.max(size);
                let leaders: Vec<String> = set.iter().map(|(s, l)| format!("{s}:{l}")).collect();
                self.record(now, "candidates", Some(p.index), Some(round), json!(leaders));
            }
            if r.stream().is_decided(round) && t.decided.insert(round) {
                let (deciding, leader) = set.iter().next().expect("decided sets are singletons");
                let leader = match leader {
                    LeaderValue::Nil => "NONE".to_string(),
                    l => l.to_string(),
                };
                self.record(
                    now,
                    "decided",
                    Some(p.index),
                    Some(round),
                    json!({ "deciding_round": deciding, "leader": leader }),
                );
            }
        }

        let finalized = r.finalized_order();
        if finalized != t.finalized.as_slice() {
            let common = finalized.len().min(t.finalized.len());
            if finalized[..common] != t.finalized[..common] {
                self.rewrites += 1;
                self.record(now, "finalized_rewrite", Some(p.index), None, json!(common));
            }
            if finalized.len() < t.finalized.len() {
                self.shrinks += 1;
            }
            self.record(now, "finalized_len", Some(p.index), None, json!(finalized.len()));
            t.finalized = finalized.to_vec();
        }

        for v in &r.violations()[t.violations..] {
            let name = kind_name(&v.kind);
            *self.violations.entry(name).or_default() += 1;
            self.record(now, "violation", Some(p.index), Some(v.round), json!(name));
        }
        t.violations = r.violations().len();

        self.trackers.insert(p.index, t);
    }

    pub fn into_records(self) -> Vec<Record> {
        self.records
    }

    fn stalled_windows(&self, config: &SimConfig) -> u64 {
        let window = config::ticks(config.metrics.liveness_window);
        let end = config::ticks(config.duration.time);
        let mut stalled = 0;
        let mut start = 0;
        while start + window <= end {
            let rose = self.progress.iter().any(|(t, _)| *t > start && *t <= start + window);
            stalled += u64::from(!rose);
            start += window;
        }
        stalled
    }

    pub fn finish(
        &self,
        config: &SimConfig,
        processes: &[Process],
        generated: &BTreeMap<usize, Vec<Digest>>,
        injected: &[Digest],
        now: u64,
        events: u64,
    ) -> Summary {
        let honest: Vec<&Process> = processes.iter().filter(|p| p.is_honest()).collect();
        let finals: Vec<&[Digest]> = honest.iter().map(|p| p.replica.finalized_order()).collect();
        let mut agreement: f64 = 1.0;
        for (i, a) in finals.iter().enumerate() {
            for b in &finals[i + 1..] {
                agreement = agreement.min(diff_orders(a, b).agreement);
            }
        }
        let honest_digests: Vec<&Digest> = generated.values().flatten().collect();
        let undelivered = honest_digests
            .iter()
            .filter(|d| honest.iter().any(|p| !p.replica.graph().contains(d)))
            .count();

        let first = honest.first().map(|p| p.replica.graph());
        let honest_ids: BTreeSet<_> = honest.iter().map(|p| p.id()).collect();
        let (mut mutation_pairs, mut honest_mutation_pairs) = (0, 0);
        if let Some(g) = first {
            for id in g.ids() {
                let n = g.detect_mutations(id).pairs.len();
                mutation_pairs += n;
                if honest_ids.contains(id) {
                    honest_mutation_pairs += n;
                }
            }
        }

        let straggler_round = config.metrics.straggler_round;
        let stragglers = honest_digests
            .iter()
            .filter(|d| {
                honest.iter().any(|p| {
                    let v = p.replica.graph().vertex(d);
                    let early = v.is_none_or(|v| v.round().is_some_and(|r| r < straggler_round));
                    let placed = v
                        .and_then(|v| v.total_position())
                        .is_some_and(|pos| (pos as usize) < p.replica.finalized_len());
                    early && !placed
                })
            })
            .count();

        let mut band = Band::default();
        if let Some(g) = first {
            let d = Weight::units(config.protocol.difficulty);
            let max = g.max_round().unwrap_or(0);
            band.difficulty_bound = 6.0 * (max + 1) as f64;
            for s in 0..=max {
                let w: Weight = g.last_vertices(s).map(|v| v.weight()).sum();
                band.difficulty_sum += w.as_units_f64() / d.as_units_f64();
                if s + 2 > max {
                    continue;
                }
                band.rounds += 1;
                if w <= &d * 3 {
                    band.below += 1;
                } else if w > &d * 6 {
                    band.above += 1;
                }
            }
        }

        let count = |name: &str| self.violations.get(name).copied().unwrap_or(0);
        Summary {
            schema_version: config::SCHEMA_VERSION,
            seed: config.seed,
            events,
            virtual_time: config::units(now),
            honest_processes: honest.len(),
            byzantine_processes: processes.len() - honest.len(),
            honest_messages: honest_digests.len(),
            injected_messages: injected.len(),
            max_round: honest.iter().map(|p| p.replica.graph().max_round().unwrap_or(0)).collect(),
            finalized_rounds: honest
                .iter()
                .map(|p| p.replica.order().finalized_rounds(p.replica.stream()))
                .collect(),
            finalized_len: honest.iter().map(|p| p.replica.finalized_len()).collect(),
            agreement_ratio: agreement,
            max_candidate_set: self.max_candidate_set,
            candidate_growth_after_decision: self.growth_after_decision,
            finalized_rewrites: self.rewrites,
            finalized_shrinks: self.shrinks,
            quorum_intersection_violations: count("quorum_intersection"),
            graded_agreement_violations: count("graded_agreement"),
            agreement_stability_violations: count("agreement_stability"),
            consistency_failures: honest
                .iter()
                .filter(|p| check_order_consistency(p.replica.graph()).is_err())
                .count(),
            mutation_pairs,
            honest_mutation_pairs,
            undelivered,
            stragglers,
            stalled_windows: self.stalled_windows(config),
            band,
        }
    }
}

pub fn to_jsonl(records: &[Record], summary: &Summary) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
        out.push('\n');
    }
    let last = json!({
        "t": records.last().map_or(0.0, |r| r.t).max(summary.virtual_time),
        "metric": "summary",
        "value": summary,
    });
    out.push_str(&serde_json::to_string(&last).expect("summary serializes"));
    out.push('\n');
    out
}
