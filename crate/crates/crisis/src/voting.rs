use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use crate::graph::{GraphError, LamportGraph};
use crate::message::{Bit, Digest, LeaderValue, VirtualId, Vote};
use crate::rounds::DifficultyOracle;
use crate::vertex::Vertex;
use crate::weight::Weight;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum VotingError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("round {requested} is not below the observer's round {observer}")]
    InvalidRound { requested: u64, observer: u64 },
    #[error("{0} or part of its past has not been processed")]
    PastNotProcessed(Digest),
    #[error("round {0} is not in the pattern sequence")]
    NotMember(u64),
}

/// Quotient of a round past by id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct KnowledgeGraph {
    pub members: BTreeMap<VirtualId, BTreeSet<Digest>>,
    pub weights: BTreeMap<VirtualId, Weight>,
    /// `(a, b)` when some member of `a` directly acknowledges a member of `b`.
    pub edges: BTreeSet<(VirtualId, VirtualId)>,
}

impl KnowledgeGraph {
    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Weakly connected components as sets of ids.
    pub fn components(&self) -> Vec<BTreeSet<VirtualId>> {
        let mut neighbours: BTreeMap<&VirtualId, Vec<&VirtualId>> =
            self.members.keys().map(|id| (id, Vec::new())).collect();
        for (a, b) in &self.edges {
            neighbours.entry(a).or_default().push(b);
            neighbours.entry(b).or_default().push(a);
        }
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for start in self.members.keys() {
            if !seen.insert(*start) {
                continue;
            }
            let mut component = BTreeSet::from([*start]);
            let mut queue = VecDeque::from([start]);
            while let Some(id) = queue.pop_front() {
                for next in &neighbours[id] {
                    if seen.insert(**next) {
                        component.insert(**next);
                        queue.push_back(next);
                    }
                }
            }
            out.push(component);
        }
        out
    }
}

/// The observer's round-`s` voting set.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VotingSet {
    pub observer: Digest,
    pub round: u64,
    /// Sorted by digest.
    pub members: Vec<Digest>,
    pub weight: Weight,
}

fn observer_round(g: &LamportGraph, i: usize) -> Result<u64, VotingError> {
    let v = &g.node(i).vertex;
    v.round.ok_or(VotingError::PastNotProcessed(*v.digest()))
}

fn check_round(g: &LamportGraph, i: usize, s: u64) -> Result<u64, VotingError> {
    let r = observer_round(g, i)?;
    if s >= r {
        return Err(VotingError::InvalidRound {
            requested: s,
            observer: r,
        });
    }
    Ok(r)
}

pub(crate) fn round_past_indices(g: &LamportGraph, i: usize, s: u64) -> Vec<usize> {
    g.round_indices(s).iter().copied().filter(|&x| g.le(x, i)).collect()
}

/// Round-`s` vertices in the past of `v`.
pub fn round_past<'g>(g: &'g LamportGraph, v: &Digest, s: u64) -> Result<Vec<&'g Vertex>, VotingError> {
    let i = g.index_of(v)?;
    check_round(g, i, s)?;
    Ok(round_past_indices(g, i, s)
        .into_iter()
        .map(|x| &g.node(x).vertex)
        .collect())
}

pub(crate) fn knowledge_graph_indices(g: &LamportGraph, i: usize, s: u64) -> KnowledgeGraph {
    let mut kg = KnowledgeGraph::default();
    for x in round_past_indices(g, i, s) {
        let node = g.node(x);
        let id = *node.vertex.id();
        kg.members.entry(id).or_default().insert(*node.vertex.digest());
        *kg.weights.entry(id).or_default() += node.vertex.weight();
        for &c in &node.causes {
            let cause = &g.node(c).vertex;
            if cause.round == Some(s) {
                kg.edges.insert((id, *cause.id()));
            }
        }
    }
    kg
}

pub fn knowledge_graph(g: &LamportGraph, v: &Digest, s: u64) -> Result<KnowledgeGraph, VotingError> {
    let i = g.index_of(v)?;
    check_round(g, i, s)?;
    Ok(knowledge_graph_indices(g, i, s))
}

/// Heaviest weakly connected component, then its `size` heaviest ids.
///
/// A graph where no edge joins two different ids carries no partition
/// information and counts as one component. Round 0 always looks like this,
/// since its vertices are sinks.
pub fn quorum(kg: &KnowledgeGraph, size: usize) -> BTreeSet<VirtualId> {
    let components = if kg.edges.iter().all(|(a, b)| a == b) {
        vec![kg.members.keys().copied().collect()]
    } else {
        kg.components()
    };
    let best = components
        .into_iter()
        .map(|c| {
            let weight: Weight = c.iter().map(|id| &kg.weights[id]).sum();
            let smallest = c
                .iter()
                .flat_map(|id| kg.members[id].iter())
                .min()
                .copied()
                .unwrap_or_default();
            (weight, smallest, c)
        })
        .max_by(|a, b| a.0.cmp(&b.0).then_with(|| b.1.cmp(&a.1)));
    let Some((_, _, component)) = best else {
        return BTreeSet::new();
    };
    let mut ranked: Vec<&VirtualId> = component.iter().collect();
    ranked.sort_by(|a, b| kg.weights[*b].cmp(&kg.weights[*a]).then_with(|| a.cmp(b)));
    ranked.into_iter().take(size).copied().collect()
}

pub(crate) fn voting_set_indices(
    g: &LamportGraph,
    i: usize,
    r: u64,
    s: u64,
    k: &Weight,
    quorum_size: usize,
) -> Vec<usize> {
    let q = quorum(&knowledge_graph_indices(g, i, s), quorum_size);
    let threshold = k * (r - s);
    let mut members: Vec<usize> = g
        .last_indices(s)
        .iter()
        .copied()
        .filter(|&x| q.contains(g.node(x).vertex.id()) && g.reaches(i, x, &threshold))
        .collect();
    members.sort_by(|a, b| g.node(*a).vertex.digest().cmp(g.node(*b).vertex.digest()));
    members
}

pub(crate) fn weight_of(g: &LamportGraph, members: &[usize]) -> Weight {
    members.iter().map(|&x| g.node(x).vertex.weight()).sum()
}

pub fn voting_set(
    g: &LamportGraph,
    v: &Digest,
    s: u64,
    k: &Weight,
    quorum_size: usize,
) -> Result<VotingSet, VotingError> {
    let i = g.index_of(v)?;
    let r = check_round(g, i, s)?;
    let members = voting_set_indices(g, i, r, s, k, quorum_size);
    Ok(VotingSet {
        observer: *v,
        round: s,
        weight: weight_of(g, &members),
        members: members.iter().map(|&x| *g.node(x).vertex.digest()).collect(),
    })
}

/// Round-`t` vote weights received from a set of vertices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Tally {
    by_vote: BTreeMap<Vote, Weight>,
    by_bit: BTreeMap<Bit, Weight>,
    by_leader: BTreeMap<LeaderValue, Weight>,
}

impl Tally {
    pub fn of<'a>(voters: impl IntoIterator<Item = &'a Vertex>, t: u64) -> Self {
        let mut tally = Tally::default();
        for x in voters {
            if let Some(vote) = x.vote(t) {
                *tally.by_vote.entry(vote.clone()).or_default() += x.weight();
                *tally.by_bit.entry(vote.bit).or_default() += x.weight();
                *tally.by_leader.entry(vote.leader.clone()).or_default() += x.weight();
            }
        }
        tally
    }

    pub(crate) fn of_indices(g: &LamportGraph, members: &[usize], t: u64) -> Self {
        Tally::of(members.iter().map(|&x| &g.node(x).vertex), t)
    }

    /// Weight of members voting exactly `(leader, bit)`.
    pub fn vote(&self, leader: &LeaderValue, bit: Bit) -> Weight {
        self.by_vote
            .get(&Vote::new(leader.clone(), bit))
            .cloned()
            .unwrap_or_default()
    }

    /// Weight of members voting `bit` for any leader.
    pub fn bit(&self, bit: Bit) -> Weight {
        self.by_bit.get(&bit).cloned().unwrap_or_default()
    }

    /// Leader value with the most weight across all bits; ties to the smaller value.
    pub fn heaviest_leader(&self) -> Option<&LeaderValue> {
        self.by_leader
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then_with(|| b.0.cmp(a.0)))
            .map(|(l, _)| l)
    }

    fn votes(&self) -> impl Iterator<Item = &Vote> {
        self.by_vote.keys()
    }
}

fn svp_of(g: &LamportGraph, x: usize) -> Result<&BTreeSet<u64>, VotingError> {
    let v = &g.node(x).vertex;
    v.svp.as_ref().ok_or(VotingError::PastNotProcessed(*v.digest()))
}

/// Outcome of the pattern search for one vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub(crate) struct PatternSearch {
    pub(crate) svp: BTreeSet<u64>,
    pub(crate) members: Vec<usize>,
}

pub(crate) fn search_pattern(
    g: &LamportGraph,
    i: usize,
    k: &Weight,
    d: &dyn DifficultyOracle,
    quorum_size: usize,
) -> Result<PatternSearch, VotingError> {
    let v = &g.node(i).vertex;
    let (Some(r), Some(last)) = (v.round, v.is_last) else {
        return Err(VotingError::PastNotProcessed(*v.digest()));
    };
    if !last {
        return Ok(PatternSearch::default());
    }
    for s in (0..r).rev() {
        let members = voting_set_indices(g, i, r, s, k, quorum_size);
        let weight = weight_of(g, &members);
        let ds = d.difficulty(s);
        if weight <= &ds * 3 || weight > &ds * 6 {
            continue;
        }
        let first = svp_of(g, members[0])?;
        let mut equal = true;
        for &x in &members[1..] {
            if svp_of(g, x)? != first {
                equal = false;
                break;
            }
        }
        if !equal {
            continue;
        }
        if first.is_empty() && s != 0 {
            continue;
        }
        if first.last().is_some_and(|&t| t >= s) {
            continue;
        }
        if !close_enough(g, &members, first, d) {
            continue;
        }
        let mut svp = first.clone();
        svp.insert(s);
        return Ok(PatternSearch { svp, members });
    }
    Ok(PatternSearch::default())
}

/// Members' own patterns must report similar vote weights on every earlier round.
fn close_enough(g: &LamportGraph, members: &[usize], member_svp: &BTreeSet<u64>, d: &dyn DifficultyOracle) -> bool {
    let Some(&t) = member_svp.last() else {
        return true;
    };
    let dt = d.difficulty(t);
    let earlier: Vec<u64> = member_svp.range(..t).copied().collect();
    let tallies: Vec<Vec<Tally>> = members
        .iter()
        .map(|&x| {
            earlier
                .iter()
                .map(|&u| Tally::of_indices(g, &g.node(x).pattern, u))
                .collect()
        })
        .collect();
    for (a, ta) in tallies.iter().enumerate() {
        for tb in &tallies[a + 1..] {
            for (x, y) in ta.iter().zip(tb) {
                for vote in x.votes().chain(y.votes()) {
                    if vote.bit == Bit::Undecided {
                        let diff = (&x.vote(&vote.leader, Bit::Undecided) - &y.vote(&vote.leader, Bit::Undecided)).abs();
                        if diff > dt {
                            return false;
                        }
                    }
                }
                for bit in [Bit::Zero, Bit::One] {
                    if (&x.bit(bit) - &y.bit(bit)).abs() >= dt {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Computes and stores the safe voting pattern sequence of `v`.
pub fn compute_svp(
    g: &mut LamportGraph,
    v: &Digest,
    k: &Weight,
    d: &dyn DifficultyOracle,
    quorum_size: usize,
) -> Result<BTreeSet<u64>, VotingError> {
    let i = g.index_of(v)?;
    if let Some(svp) = &g.node(i).vertex.svp {
        return Ok(svp.clone());
    }
    let found = search_pattern(g, i, k, d, quorum_size)?;
    let node = g.node_mut(i);
    node.vertex.svp = Some(found.svp.clone());
    node.pattern = found.members;
    Ok(found.svp)
}

/// Digests of the members of `v`'s safe voting pattern, sorted.
pub fn pattern_members(g: &LamportGraph, v: &Digest) -> Result<Vec<Digest>, VotingError> {
    let i = g.index_of(v)?;
    Ok(g.node(i)
        .pattern
        .iter()
        .map(|&x| *g.node(x).vertex.digest())
        .collect())
}

/// Zero for equal rounds, otherwise one more than the number of elements
/// strictly between them.
pub fn svp_distance(svp: &BTreeSet<u64>, r: u64, t: u64) -> Result<usize, VotingError> {
    for x in [r, t] {
        if !svp.contains(&x) {
            return Err(VotingError::NotMember(x));
        }
    }
    if r == t {
        return Ok(0);
    }
    let (lo, hi) = if r < t { (r, t) } else { (t, r) };
    Ok(svp.range(lo + 1..hi).count() + 1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_examples() {
        let svp = BTreeSet::from([0, 2, 5]);
        assert_eq!(svp_distance(&svp, 5, 5), Ok(0));
        assert_eq!(svp_distance(&svp, 5, 2), Ok(1));
        assert_eq!(svp_distance(&svp, 5, 0), Ok(2));
        assert_eq!(svp_distance(&svp, 5, 3), Err(VotingError::NotMember(3)));
        let svp = BTreeSet::from([0, 2, 5, 7, 9]);
        assert_eq!(svp_distance(&svp, 9, 2), Ok(3));
        assert_eq!(svp_distance(&svp, 2, 9), Ok(3));
    }

    fn kg(weights: &[(u64, u64)], edges: &[(u64, u64)]) -> KnowledgeGraph {
        let mut kg = KnowledgeGraph::default();
        for &(id, w) in weights {
            let id = VirtualId::from_index(id);
            kg.members
                .insert(id, BTreeSet::from([crate::message::hash(id.as_bytes())]));
            kg.weights.insert(id, Weight::units(w));
        }
        for &(a, b) in edges {
            kg.edges.insert((VirtualId::from_index(a), VirtualId::from_index(b)));
        }
        kg
    }

    #[test]
    fn quorum_takes_heaviest_ids() {
        let g = kg(&[(1, 3), (2, 5), (3, 4)], &[(1, 2), (3, 2)]);
        assert_eq!(
            quorum(&g, 2),
            BTreeSet::from([VirtualId::from_index(2), VirtualId::from_index(3)])
        );
        assert_eq!(quorum(&g, 10).len(), 3);
    }

    #[test]
    fn quorum_stays_in_heaviest_component() {
        let g = kg(&[(1, 6), (2, 4), (3, 7)], &[(1, 2)]);
        assert_eq!(
            quorum(&g, 3),
            BTreeSet::from([VirtualId::from_index(1), VirtualId::from_index(2)])
        );
    }

    #[test]
    fn edgeless_graph_is_one_component() {
        let g = kg(&[(1, 6), (2, 4), (3, 7)], &[(2, 2)]);
        assert_eq!(quorum(&g, 2), BTreeSet::from([VirtualId::from_index(1), VirtualId::from_index(3)]));
    }
}
