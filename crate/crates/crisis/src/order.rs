use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::graph::{GraphError, LamportGraph};
use crate::leader::LeaderStream;
use crate::message::{Digest, LeaderValue};
use crate::weight::Weight;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OrderError {
    #[error("round {0} has no candidates")]
    EmptyCandidateSet(u64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Smallest candidate by digest, with `Nil` last.
pub fn choose_leader(stream: &LeaderStream, round: u64) -> Result<LeaderValue, OrderError> {
    stream
        .candidates(round)
        .and_then(|set| set.iter().map(|(_, l)| l).min())
        .cloned()
        .ok_or(OrderError::EmptyCandidateSet(round))
}

/// Vertices to be sorted under one leader.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OrderCone {
    pub leader: Digest,
    pub members: BTreeSet<Digest>,
}

#[derive(PartialEq, Eq)]
struct Ready<'a> {
    weight: &'a Weight,
    digest: Reverse<&'a Digest>,
    index: usize,
}

impl Ord for Ready<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.weight
            .cmp(other.weight)
            .then_with(|| self.digest.cmp(&other.digest))
    }
}

impl PartialOrd for Ready<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Topologically sorts `cone` causes-first, always taking the heaviest ready
/// vertex (ties to the smaller digest). Positions start at `first`.
pub(crate) fn kahn_indices(g: &LamportGraph, cone: &FixedBitSet, first: u64) -> Vec<(usize, u64)> {
    let members: Vec<usize> = cone.ones().collect();
    let mut pending = vec![0usize; g.node_count()];
    let mut effects: Vec<Vec<usize>> = vec![Vec::new(); g.node_count()];
    let mut heap = BinaryHeap::new();
    for &x in &members {
        let inside: Vec<usize> = g.node(x).causes.iter().copied().filter(|&c| cone.contains(c)).collect();
        pending[x] = inside.len();
        for c in inside {
            effects[c].push(x);
        }
    }
    let ready = |x: usize| {
        let v = &g.node(x).vertex;
        Ready {
            weight: v.weight(),
            digest: Reverse(v.digest()),
            index: x,
        }
    };
    for &x in &members {
        if pending[x] == 0 {
            heap.push(ready(x));
        }
    }
    let mut out = Vec::with_capacity(members.len());
    while let Some(Ready { index, .. }) = heap.pop() {
        out.push((index, first + out.len() as u64));
        for &e in &effects[index] {
            pending[e] -= 1;
            if pending[e] == 0 {
                heap.push(ready(e));
            }
        }
    }
    out
}

pub fn kahn_order(g: &LamportGraph, cone: &OrderCone, first: u64) -> Result<Vec<(Digest, u64)>, OrderError> {
    let mut bits = FixedBitSet::with_capacity(g.node_count());
    for d in &cone.members {
        bits.insert(g.index_of(d)?);
    }
    Ok(kahn_indices(g, &bits, first)
        .into_iter()
        .map(|(x, p)| (*g.node(x).vertex.digest(), p))
        .collect())
}

/// Incrementally maintained total order of one graph.
#[derive(Clone, Debug, Default)]
pub struct TotalOrder {
    /// Chosen leader for each round of the contiguous prefix of nonempty rounds.
    chosen: Vec<LeaderValue>,
    /// Digests by position.
    positions: Vec<Digest>,
    /// Number of positions covered once rounds `0..=t` are ordered.
    covered_after: Vec<usize>,
}

impl TotalOrder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn chosen(&self) -> &[LeaderValue] {
        &self.chosen
    }

    /// Digests in order of position.
    pub fn sequence(&self) -> &[Digest] {
        &self.positions
    }

    /// Positions covered by the cones of rounds `0..round`.
    pub fn covered_before(&self, round: u64) -> usize {
        match round {
            0 => 0,
            r => self.covered_after.get(r as usize - 1).copied().unwrap_or(self.positions.len()),
        }
    }

    /// Recomputes the order from the first round whose chosen leader changed.
    /// Returns that round, if any.
    pub fn update(&mut self, g: &mut LamportGraph, stream: &LeaderStream) -> Option<u64> {
        let mut next = Vec::new();
        let mut round = 0u64;
        while let Ok(l) = choose_leader(stream, round) {
            next.push(l);
            round += 1;
        }
        let first_change = self
            .chosen
            .iter()
            .zip(&next)
            .position(|(a, b)| a != b)
            .or_else(|| (self.chosen.len() != next.len()).then(|| self.chosen.len().min(next.len())))?;
        self.chosen = next;
        self.rebuild(g, first_change as u64);
        Some(first_change as u64)
    }

    /// Reassigns positions for cones of rounds `from..`, leaving earlier cones alone.
    pub fn rebuild(&mut self, g: &mut LamportGraph, from: u64) {
        let from = (from as usize).min(self.chosen.len());
        let keep = if from == 0 { 0 } else { self.covered_after.get(from - 1).copied().unwrap_or(0) };
        for d in self.positions.drain(keep..) {
            let i = g.index_of(&d).expect("ordered vertices stay in the graph");
            g.node_mut(i).vertex.total_position = None;
        }
        self.covered_after.truncate(from);
        let mut covered = FixedBitSet::with_capacity(g.node_count());
        for d in &self.positions {
            covered.insert(g.index_of(d).expect("ordered vertices stay in the graph"));
        }
        for t in from..self.chosen.len() {
            if let Some(digest) = self.chosen[t].digest() {
                let leader = g.index_of(digest).expect("leaders are vertices of the graph");
                let mut cone = g.node(leader).past.clone();
                cone.grow(g.node_count());
                cone.difference_with(&covered);
                for (x, p) in kahn_indices(g, &cone, self.positions.len() as u64) {
                    g.node_mut(x).vertex.total_position = Some(p);
                    self.positions.push(*g.node(x).vertex.digest());
                    covered.insert(x);
                }
            }
            self.covered_after.push(self.positions.len());
        }
    }

    /// Length of the order prefix that no longer depends on undecided rounds.
    pub fn finalized_len(&self, stream: &LeaderStream) -> usize {
        let decided = (0..self.chosen.len() as u64)
            .take_while(|&t| stream.is_decided(t))
            .count();
        self.covered_before(decided as u64)
    }

    /// Number of leading rounds whose candidate sets are decided singletons.
    pub fn finalized_rounds(&self, stream: &LeaderStream) -> u64 {
        (0..self.chosen.len() as u64).take_while(|&t| stream.is_decided(t)).count() as u64
    }

    /// One line per position: `position digest`.
    pub fn dump(&self) -> String {
        self.positions
            .iter()
            .enumerate()
            .map(|(p, d)| format!("{p}\t{d}\n"))
            .collect()
    }
}
