//! Brute-force reference implementations and whole-graph property checks.
//! Each check returns the first counterexample it finds.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crisis::leader::LeaderStream;
use crisis::order::{kahn_order, OrderCone};
use crisis::{Digest, LamportGraph, Message, Params, Replica, Vertex, Weight, WeightSystem};

/// `closure[a][b]` iff vertex `a` happened before vertex `b`, indices in
/// `g.vertices()` order. Computed with Floyd–Warshall over direct edges.
#[allow(clippy::needless_range_loop)]
pub fn transitive_closure(g: &LamportGraph) -> (Vec<Digest>, Vec<Vec<bool>>) {
    let digests: Vec<Digest> = g.vertices().map(|v| *v.digest()).collect();
    let index: BTreeMap<Digest, usize> = digests.iter().enumerate().map(|(i, d)| (*d, i)).collect();
    let n = digests.len();
    let mut reach = vec![vec![false; n]; n];
    for (b, v) in g.vertices().enumerate() {
        reach[b][b] = true;
        for c in v.digests() {
            reach[index[c]][b] = true;
        }
    }
    for via in 0..n {
        for a in 0..n {
            if reach[a][via] {
                for b in 0..n {
                    if reach[via][b] {
                        reach[a][b] = true;
                    }
                }
            }
        }
    }
    (digests, reach)
}

#[allow(clippy::needless_range_loop)]
pub fn check_causality(g: &LamportGraph) -> Result<(), String> {
    let (digests, closure) = transitive_closure(g);
    let n = digests.len();
    let hb = |a: usize, b: usize| g.happened_before(&digests[a], &digests[b]).expect("vertices are present");
    for a in 0..n {
        for b in 0..n {
            if hb(a, b) != closure[a][b] {
                return Err(format!("happened_before({}, {}) disagrees with the closure", digests[a], digests[b]));
            }
        }
    }
    for a in 0..n {
        if !closure[a][a] {
            return Err(format!("{} is not reflexive", digests[a]));
        }
        for b in 0..n {
            if a != b && closure[a][b] && closure[b][a] {
                return Err(format!("{} and {} precede each other", digests[a], digests[b]));
            }
            if closure[a][b] {
                for c in 0..n {
                    if closure[b][c] && !closure[a][c] {
                        return Err(format!("transitivity fails at {}", digests[b]));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Weight of the union of the vertices on every acknowledgement path from
/// `from` down to `to`, found by enumerating the paths.
pub fn path_union_weight(g: &LamportGraph, from: &Digest, to: &Digest) -> Weight {
    fn walk(g: &LamportGraph, at: &Digest, to: &Digest, path: &mut Vec<Digest>, union: &mut BTreeSet<Digest>) {
        path.push(*at);
        if at == to {
            union.extend(path.iter().copied());
        } else {
            for c in g.vertex(at).expect("causes are present").digests() {
                walk(g, c, to, path, union);
            }
        }
        path.pop();
    }
    let mut union = BTreeSet::new();
    walk(g, from, to, &mut Vec::new(), &mut union);
    union.iter().map(|d| g.vertex(d).expect("present").weight()).sum()
}

/// Compares `k_reachable` with the path oracle for every ordered pair and
/// every whole-unit `k` from 0 to the graph's total weight.
pub fn check_k_reachability(g: &LamportGraph) -> Result<(), String> {
    let total: Weight = g.vertices().map(Vertex::weight).sum();
    let max_k = total.as_units_f64().ceil() as u64;
    let digests: Vec<Digest> = g.vertices().map(|v| *v.digest()).collect();
    for from in &digests {
        for to in &digests {
            let oracle = path_union_weight(g, from, to);
            if g.path_weight(from, to).expect("present") != oracle {
                return Err(format!("path weight {from} -> {to} disagrees with the path oracle"));
            }
            for k in 0..=max_k {
                let k = Weight::units(k);
                let got = g.k_reachable(from, to, &k).expect("present");
                if got != (oracle > k) {
                    return Err(format!("k_reachable({from}, {to}, {k}) = {got} disagrees with the path oracle"));
                }
            }
        }
    }
    Ok(())
}

/// Round monotonicity, last-vertex separation and previous-round existence
/// over every comparable pair.
pub fn check_round_semantics(g: &LamportGraph) -> Result<(), String> {
    let (digests, closure) = transitive_closure(g);
    let vertices: Vec<&Vertex> = digests.iter().map(|d| g.vertex(d).expect("present")).collect();
    let n = digests.len();
    for b in 0..n {
        let rb = vertices[b].round().ok_or_else(|| format!("{} has no round", digests[b]))?;
        let mut last_rounds = BTreeSet::new();
        for a in 0..n {
            if !closure[a][b] {
                continue;
            }
            let ra = vertices[a].round().ok_or_else(|| format!("{} has no round", digests[a]))?;
            if ra > rb {
                return Err(format!("round monotonicity: {} (round {ra}) precedes {} (round {rb})", digests[a], digests[b]));
            }
            if a != b && vertices[a].is_last() == Some(true) {
                if rb <= ra {
                    return Err(format!("last-vertex separation: last {} (round {ra}) precedes {} (round {rb})", digests[a], digests[b]));
                }
                last_rounds.insert(ra);
            }
        }
        if let Some(missing) = (0..rb).find(|s| !last_rounds.contains(s)) {
            return Err(format!("{} (round {rb}) has no last round-{missing} vertex in its past", digests[b]));
        }
    }
    Ok(())
}

/// Repeatedly takes the heaviest member whose in-cone causes are all taken,
/// ties to the smaller digest.
pub fn kahn_oracle(g: &LamportGraph, members: &BTreeSet<Digest>) -> Vec<Digest> {
    let mut taken: BTreeSet<Digest> = BTreeSet::new();
    let mut out = Vec::with_capacity(members.len());
    while out.len() < members.len() {
        let next = members
            .iter()
            .filter(|d| !taken.contains(*d))
            .map(|d| g.vertex(d).expect("present"))
            .filter(|v| v.digests().iter().all(|c| taken.contains(c) || !members.contains(c)))
            .max_by(|a, b| a.weight().cmp(b.weight()).then_with(|| b.digest().cmp(a.digest())))
            .expect("a finite DAG always has a minimal element");
        taken.insert(*next.digest());
        out.push(*next.digest());
    }
    out
}

pub fn check_kahn(g: &LamportGraph, cone: &OrderCone) -> Result<(), String> {
    let got = kahn_order(g, cone, 0).map_err(|e| e.to_string())?;
    let expected = kahn_oracle(g, &cone.members);
    let positions: Vec<Digest> = got.iter().map(|(d, _)| *d).collect();
    if positions != expected {
        return Err(format!("kahn order of the cone under {} differs from the oracle", cone.leader));
    }
    if got.iter().enumerate().any(|(i, (_, p))| *p != i as u64) {
        return Err("positions are not compact".into());
    }
    let position: BTreeMap<&Digest, usize> = positions.iter().enumerate().map(|(i, d)| (d, i)).collect();
    for a in &positions {
        for b in &positions {
            if g.happened_before(a, b).expect("present") && position[a] > position[b] {
                return Err(format!("{a} precedes {b} but is ordered after it"));
            }
        }
    }
    Ok(())
}

/// Causality respects positions across the whole order of a replica.
pub fn check_order_consistency(g: &LamportGraph) -> Result<(), String> {
    let placed: Vec<&Vertex> = g.vertices().filter(|v| v.total_position().is_some()).collect();
    for a in &placed {
        for b in &placed {
            if a.total_position() > b.total_position() && g.happened_before(a.digest(), b.digest()).expect("present") {
                return Err(format!("{} precedes {} but is ordered after it", a.digest(), b.digest()));
            }
        }
    }
    Ok(())
}

/// All candidates of a set share one deciding round, and leaders are distinct.
pub fn check_stream_shape(stream: &LeaderStream) -> Result<(), String> {
    for (round, set) in stream.rounds() {
        let deciding: BTreeSet<u64> = set.iter().map(|(s, _)| *s).collect();
        if deciding.len() > 1 {
            return Err(format!("round {round} holds deciding rounds {deciding:?}"));
        }
        let leaders: BTreeSet<_> = set.iter().map(|(_, l)| l).collect();
        if leaders.len() != set.len() {
            return Err(format!("round {round} repeats a leader"));
        }
    }
    Ok(())
}

/// How much of the protocol state a comparison actually exercised.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Coverage {
    pub vertices: usize,
    pub last_vertices: usize,
    pub with_pattern: usize,
    pub votes: usize,
}

/// Builds one replica per delivery order and compares every vertex's past,
/// round, last flag, pattern sequence and votes, then the streams and orders.
pub fn check_past_invariance(
    weights: Arc<dyn WeightSystem>,
    params: &Params,
    orders: &[Vec<Message>],
) -> Result<Coverage, String> {
    let replicas: Vec<Replica> = orders
        .iter()
        .map(|order| {
            let mut r = Replica::new(weights.clone(), params.clone());
            for m in order {
                r.receive(m.clone()).map_err(|e| e.to_string())?;
            }
            Ok(r)
        })
        .collect::<Result<_, String>>()?;
    let first = &replicas[0];
    let mut coverage = Coverage::default();
    for v in first.graph().vertices() {
        coverage.vertices += 1;
        coverage.last_vertices += usize::from(v.is_last() == Some(true));
        coverage.with_pattern += usize::from(v.svp().is_some_and(|s| !s.is_empty()));
        coverage.votes += v.votes().len();
        let past = first.graph().past(v.digest()).expect("present");
        for other in &replicas[1..] {
            let w = other
                .graph()
                .vertex(v.digest())
                .ok_or_else(|| format!("{} is missing from another build", v.digest()))?;
            if other.graph().past(w.digest()).expect("present") != past {
                return Err(format!("past of {} differs", v.digest()));
            }
            if (v.round(), v.is_last()) != (w.round(), w.is_last()) {
                return Err(format!("round of {} differs", v.digest()));
            }
            if v.svp() != w.svp() {
                return Err(format!("pattern sequence of {} differs", v.digest()));
            }
            if v.votes() != w.votes() {
                return Err(format!("votes of {} differ", v.digest()));
            }
        }
    }
    for other in &replicas[1..] {
        if other.stream() != first.stream() {
            return Err("leader streams differ".into());
        }
        if other.order().sequence() != first.order().sequence() {
            return Err("total orders differ".into());
        }
    }
    Ok(coverage)
}
