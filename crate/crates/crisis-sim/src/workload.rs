//! Random message sets that satisfy integrity, and random causal
//! delivery orders of them.
//!
//! [`random_messages`] is structural noise: it rarely gets past round 0.
//! [`protocol_messages`] records what simulated processes actually send, so
//! rounds, patterns and votes show up.

use std::collections::BTreeSet;
use std::sync::Arc;

use crisis::{Digest, LamportGraph, Message, Nonce, UnitWeight, VirtualId};

use crate::config::{SimConfig, Strategy};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

#[derive(Clone, Debug)]
pub struct WorkloadShape {
    pub messages: usize,
    pub ids: usize,
    /// Most references to other ids per message.
    pub max_refs: usize,
    /// Chance that a message extends an older vertex of its id instead of the tip.
    pub fork_chance: f64,
    /// References are drawn from this many most recent vertices.
    pub window: usize,
}

impl Default for WorkloadShape {
    fn default() -> Self {
        WorkloadShape {
            messages: 200,
            ids: 16,
            max_refs: 6,
            fork_chance: 0.05,
            window: 40,
        }
    }
}

/// Messages in generation order, which is a causal order.
pub fn random_messages<R: Rng>(rng: &mut R, shape: &WorkloadShape) -> Vec<Message> {
    let mut g = LamportGraph::new(Arc::new(UnitWeight::new(1)));
    let mut order: Vec<Digest> = Vec::new();
    let mut out = Vec::with_capacity(shape.messages);
    while out.len() < shape.messages {
        let id = VirtualId::from_index(rng.random_range(0..shape.ids as u64));
        let own_vertices: Vec<Digest> = order
            .iter()
            .filter(|d| g.vertex(d).is_some_and(|v| v.id() == &id))
            .copied()
            .collect();
        let own = if own_vertices.is_empty() {
            None
        } else if rng.random_bool(shape.fork_chance) {
            own_vertices.choose(rng).copied()
        } else {
            g.tip(&id).map(|v| *v.digest())
        };
        let mut refs: Vec<Digest> = own.into_iter().collect();
        let mut used: BTreeSet<VirtualId> = BTreeSet::from([id]);
        let start = order.len().saturating_sub(shape.window);
        let mut recent: Vec<Digest> = order[start..].to_vec();
        recent.shuffle(rng);
        let wanted = rng.random_range(0..=shape.max_refs);
        for d in recent {
            if refs.len() > wanted {
                break;
            }
            let v = g.vertex(&d).expect("recorded vertices exist");
            if used.contains(v.id()) {
                continue;
            }
            if own.is_some_and(|o| g.happened_before(&d, &o).expect("both present")) {
                continue;
            }
            used.insert(*v.id());
            refs.push(d);
        }
        let payload: Vec<u8> = (0..rng.random_range(0..4)).map(|_| rng.random()).collect();
        let m = Message::new(Nonce::from_u64(rng.random()), id, refs, payload).expect("distinct references");
        if g.integrity(&m) {
            order.push(*m.digest());
            g.extend(m.clone()).expect("integrity was checked");
            out.push(m);
        }
    }
    out
}

/// A uniformly chosen ready message at every step: a random linear
/// extension of the causal order.
pub fn causal_shuffle<R: Rng>(rng: &mut R, messages: &[Message]) -> Vec<Message> {
    let present: BTreeSet<Digest> = messages.iter().map(|m| *m.digest()).collect();
    let mut done: BTreeSet<Digest> = BTreeSet::new();
    let mut rest: Vec<&Message> = messages.iter().collect();
    let mut out = Vec::with_capacity(messages.len());
    while !rest.is_empty() {
        let ready: Vec<usize> = (0..rest.len())
            .filter(|&i| {
                rest[i]
                    .digests()
                    .iter()
                    .all(|d| done.contains(d) || !present.contains(d))
            })
            .collect();
        let pick = *ready.choose(rng).expect("a causal set always has a ready message");
        let m = rest.swap_remove(pick);
        done.insert(*m.digest());
        out.push(m.clone());
    }
    out
}

/// A short simulation with `processes` honest processes (plus one mutator if
/// `mutate`), with difficulty scaled so that a round in which about two
/// thirds of the processes finish is heavy enough. Returns the config and
/// the first `limit` messages of the first process's graph, a causal prefix.
pub fn protocol_messages(seed: u64, processes: usize, mutate: bool, limit: usize) -> (SimConfig, Vec<Message>) {
    let mut config = SimConfig::from_toml("schema_version = 1").expect("defaults are valid");
    config.seed = seed;
    config.network.processes = processes;
    config.network.view_size = processes;
    config.network.gossip_fanout = 2;
    let total = processes as u64 * config.protocol.weight_units;
    config.protocol.difficulty = (total * 2).div_ceil(9);
    config.protocol.quorum_size = processes + 1;
    config.duration.time = (limit as f64 / processes as f64).ceil() + 2.0;
    config.duration.settle = 1.0;
    if mutate {
        config.adversary.strategy = Strategy::Mutate;
    }
    let report = crate::run(config.clone()).expect("generated configs are valid");
    let messages = report.processes[0]
        .replica
        .graph()
        .vertices()
        .take(limit)
        .map(|v| v.message().as_ref().clone())
        .collect();
    (config, messages)
}
