use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::sync::Arc;

use fixedbitset::FixedBitSet;
use thiserror::Error;

use crate::leader::ElectionRecord;
use crate::message::{Digest, Message, Nonce, VirtualId};
use crate::vertex::Vertex;
use crate::weight::{Weight, WeightSystem};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IntegrityError {
    #[error("weight does not exceed the minimum")]
    TooLight,
    #[error("payload rejected")]
    PayloadRejected,
    #[error("message already present")]
    AlreadyPresent,
    #[error("unknown digest {0}")]
    UnknownDigest(Digest),
    #[error("two referenced vertices share id {0}")]
    DuplicateReferencedId(VirtualId),
    #[error("no vertex of the message's own id is referenced")]
    MissingOwnReference,
    #[error("referenced vertex {0} lies in the past of the own-id reference")]
    ReferenceInOwnPast(Digest),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("vertex {0} is not in the graph")]
    VertexNotInGraph(Digest),
    #[error("integrity violation: {0}")]
    IntegrityViolation(#[from] IntegrityError),
}

pub type PayloadPredicate = Arc<dyn Fn(&[u8]) -> bool + Send + Sync>;

/// Spacelike pairs of vertices that share an id.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MutationReport {
    pub id: VirtualId,
    /// Each pair is stored with the smaller digest first.
    pub pairs: BTreeSet<(Digest, Digest)>,
}

impl MutationReport {
    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

#[derive(Clone)]
pub(crate) struct Node {
    pub(crate) vertex: Vertex,
    pub(crate) causes: Vec<usize>,
    /// Indices of every vertex in the past, self included.
    pub(crate) past: FixedBitSet,
    /// Members of this vertex's safe voting pattern, if it has one.
    pub(crate) pattern: Vec<usize>,
    pub(crate) election: Option<ElectionRecord>,
}

/// Append-only, past-closed DAG of vertices keyed by message digest.
#[derive(Clone)]
pub struct LamportGraph {
    weights: Arc<dyn WeightSystem>,
    payload_ok: Option<PayloadPredicate>,
    nodes: Vec<Node>,
    index: HashMap<Digest, usize>,
    by_id: BTreeMap<VirtualId, Vec<usize>>,
    tips: BTreeMap<VirtualId, BTreeSet<usize>>,
    by_round: BTreeMap<u64, Vec<usize>>,
    last_by_round: BTreeMap<u64, Vec<usize>>,
}

impl fmt::Debug for LamportGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LamportGraph")
            .field("vertices", &self.nodes.len())
            .field("ids", &self.by_id.len())
            .finish()
    }
}

impl LamportGraph {
    pub fn new(weights: Arc<dyn WeightSystem>) -> Self {
        LamportGraph {
            weights,
            payload_ok: None,
            nodes: Vec::new(),
            index: HashMap::new(),
            by_id: BTreeMap::new(),
            tips: BTreeMap::new(),
            by_round: BTreeMap::new(),
            last_by_round: BTreeMap::new(),
        }
    }

    pub fn with_payload_predicate(mut self, predicate: PayloadPredicate) -> Self {
        self.payload_ok = Some(predicate);
        self
    }

    pub fn weight_system(&self) -> &Arc<dyn WeightSystem> {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, digest: &Digest) -> bool {
        self.index.contains_key(digest)
    }

    pub fn vertex(&self, digest: &Digest) -> Option<&Vertex> {
        self.index.get(digest).map(|&i| &self.nodes[i].vertex)
    }

    /// Vertices in insertion order, which is a topological order.
    pub fn vertices(&self) -> impl Iterator<Item = &Vertex> + '_ {
        self.nodes.iter().map(|n| &n.vertex)
    }

    pub fn ids(&self) -> impl Iterator<Item = &VirtualId> + '_ {
        self.by_id.keys()
    }

    /// Direct causes of a vertex.
    pub fn causes(&self, digest: &Digest) -> Result<Vec<&Vertex>, GraphError> {
        let i = self.index_of(digest)?;
        Ok(self.nodes[i].causes.iter().map(|&c| &self.nodes[c].vertex).collect())
    }

    pub fn integrity(&self, m: &Message) -> bool {
        self.check_integrity(m).is_ok()
    }

    /// Like [`integrity`](Self::integrity) but says which rule failed.
    pub fn check_integrity(&self, m: &Message) -> Result<(), IntegrityError> {
        if self.weights.weight(m) <= *self.weights.min_weight() {
            return Err(IntegrityError::TooLight);
        }
        if let Some(ok) = &self.payload_ok {
            if !ok(m.payload()) {
                return Err(IntegrityError::PayloadRejected);
            }
        }
        if self.contains(m.digest()) {
            return Err(IntegrityError::AlreadyPresent);
        }
        let mut referenced = Vec::with_capacity(m.digests().len());
        let mut seen_ids = BTreeSet::new();
        for d in m.digests() {
            let i = *self.index.get(d).ok_or(IntegrityError::UnknownDigest(*d))?;
            let id = self.nodes[i].vertex.id();
            if !seen_ids.insert(*id) {
                return Err(IntegrityError::DuplicateReferencedId(*id));
            }
            referenced.push(i);
        }
        if self.by_id.contains_key(m.id()) {
            let own = referenced
                .iter()
                .copied()
                .find(|&i| self.nodes[i].vertex.id() == m.id())
                .ok_or(IntegrityError::MissingOwnReference)?;
            for &i in &referenced {
                if i != own && self.nodes[own].past.contains(i) {
                    return Err(IntegrityError::ReferenceInOwnPast(*self.nodes[i].vertex.digest()));
                }
            }
        }
        Ok(())
    }

    /// Adds the message as a new vertex after checking integrity.
    pub fn extend(&mut self, m: Message) -> Result<&Vertex, GraphError> {
        self.check_integrity(&m)?;
        let weight = self.weights.weight(&m);
        let i = self.insert_unchecked(Vertex::new(Arc::new(m), weight));
        Ok(&self.nodes[i].vertex)
    }

    fn insert_unchecked(&mut self, vertex: Vertex) -> usize {
        let i = self.nodes.len();
        let causes: Vec<usize> = vertex.digests().iter().map(|d| self.index[d]).collect();
        let mut past = FixedBitSet::with_capacity(i + 1);
        past.insert(i);
        for &c in &causes {
            past.union_with(&self.nodes[c].past);
        }
        let id = *vertex.id();
        let tips = self.tips.entry(id).or_default();
        tips.retain(|&t| !past.contains(t));
        tips.insert(i);
        self.by_id.entry(id).or_default().push(i);
        self.index.insert(*vertex.digest(), i);
        if let Some(round) = vertex.round {
            self.by_round.entry(round).or_default().push(i);
            if vertex.is_last == Some(true) {
                self.last_by_round.entry(round).or_default().push(i);
            }
        }
        self.nodes.push(Node {
            vertex,
            causes,
            past,
            pattern: Vec::new(),
            election: None,
        });
        i
    }

    pub(crate) fn index_of(&self, digest: &Digest) -> Result<usize, GraphError> {
        self.index
            .get(digest)
            .copied()
            .ok_or(GraphError::VertexNotInGraph(*digest))
    }

    pub(crate) fn node(&self, i: usize) -> &Node {
        &self.nodes[i]
    }

    pub(crate) fn node_mut(&mut self, i: usize) -> &mut Node {
        &mut self.nodes[i]
    }

    pub(crate) fn node_count(&self) -> usize {
        self.nodes.len()
    }

    /// Whether `a ≤ b`, i.e. `a` is `b` or one of its causes.
    pub fn happened_before(&self, a: &Digest, b: &Digest) -> Result<bool, GraphError> {
        let a = self.index_of(a)?;
        let b = self.index_of(b)?;
        Ok(self.nodes[b].past.contains(a))
    }

    pub(crate) fn le(&self, a: usize, b: usize) -> bool {
        self.nodes[b].past.contains(a)
    }

    /// Digests of the past of `v` (including `v`), sorted.
    pub fn past(&self, digest: &Digest) -> Result<BTreeSet<Digest>, GraphError> {
        let i = self.index_of(digest)?;
        Ok(self.nodes[i]
            .past
            .ones()
            .map(|j| *self.nodes[j].vertex.digest())
            .collect())
    }

    /// The past of `v` as a graph in its own right, vertex state included.
    pub fn past_graph(&self, digest: &Digest) -> Result<LamportGraph, GraphError> {
        let i = self.index_of(digest)?;
        let mut sub = LamportGraph::new(self.weights.clone());
        sub.payload_ok = self.payload_ok.clone();
        for j in self.nodes[i].past.ones() {
            sub.insert_unchecked(self.nodes[j].vertex.clone());
        }
        Ok(sub)
    }

    /// Weight of `{u : to ≤ u ≤ from}`; zero when `to` is not in the past of `from`.
    pub fn path_weight(&self, from: &Digest, to: &Digest) -> Result<Weight, GraphError> {
        let from = self.index_of(from)?;
        let to = self.index_of(to)?;
        Ok(self.between_weight(from, to, None))
    }

    pub fn k_reachable(&self, from: &Digest, to: &Digest, k: &Weight) -> Result<bool, GraphError> {
        let from = self.index_of(from)?;
        let to = self.index_of(to)?;
        Ok(self.reaches(from, to, k))
    }

    pub(crate) fn reaches(&self, from: usize, to: usize, k: &Weight) -> bool {
        self.le(to, from) && self.between_weight(from, to, Some(k)) > *k
    }

    /// Union of the pasts of `causes`: the strict past a new vertex with
    /// those direct causes would have.
    pub(crate) fn union_past(&self, causes: &[usize]) -> FixedBitSet {
        let mut past = FixedBitSet::with_capacity(self.nodes.len());
        for &c in causes {
            past.union_with(&self.nodes[c].past);
        }
        past
    }

    /// [`reaches`](Self::reaches) for a vertex not yet inserted, given its
    /// strict past and its own weight.
    pub(crate) fn reaches_from(&self, strict_past: &FixedBitSet, own: &Weight, to: usize, k: &Weight) -> bool {
        if !strict_past.contains(to) {
            return false;
        }
        let mut total = own.clone();
        for u in strict_past.ones().rev() {
            if total > *k || u < to {
                break;
            }
            if self.nodes[u].past.contains(to) {
                total += self.nodes[u].vertex.weight();
            }
        }
        total > *k
    }

    /// Sums weights of vertices between `to` and `from`, stopping early once
    /// the running total exceeds `cap`.
    fn between_weight(&self, from: usize, to: usize, cap: Option<&Weight>) -> Weight {
        let mut total = Weight::zero();
        if !self.le(to, from) {
            return total;
        }
        for u in self.nodes[from].past.ones().rev() {
            if u < to {
                break;
            }
            if self.nodes[u].past.contains(to) {
                total += self.nodes[u].vertex.weight();
                if cap.is_some_and(|k| total > *k) {
                    break;
                }
            }
        }
        total
    }

    /// All spacelike pairs among the vertices with this id.
    pub fn detect_mutations(&self, id: &VirtualId) -> MutationReport {
        let mut report = MutationReport {
            id: *id,
            pairs: BTreeSet::new(),
        };
        let members = self.by_id.get(id).map(Vec::as_slice).unwrap_or(&[]);
        for (n, &a) in members.iter().enumerate() {
            for &b in &members[n + 1..] {
                if !self.le(a, b) && !self.le(b, a) {
                    let (x, y) = (*self.nodes[a].vertex.digest(), *self.nodes[b].vertex.digest());
                    report.pairs.insert(if x < y { (x, y) } else { (y, x) });
                }
            }
        }
        report
    }

    /// Vertices of `id` that are not in the past of another vertex of `id`.
    pub fn tips(&self, id: &VirtualId) -> Vec<&Vertex> {
        self.tips
            .get(id)
            .map(|t| t.iter().map(|&i| &self.nodes[i].vertex).collect())
            .unwrap_or_default()
    }

    /// The tip of `id` with the largest past, ties to the smaller digest.
    pub fn tip(&self, id: &VirtualId) -> Option<&Vertex> {
        self.tip_index(id).map(|i| &self.nodes[i].vertex)
    }

    fn tip_index(&self, id: &VirtualId) -> Option<usize> {
        self.tips.get(id)?.iter().copied().max_by(|&a, &b| {
            let (na, nb) = (&self.nodes[a], &self.nodes[b]);
            na.past
                .count_ones(..)
                .cmp(&nb.past.count_ones(..))
                .then_with(|| nb.vertex.digest().cmp(na.vertex.digest()))
        })
    }

    /// Builds a message for `id` that acknowledges its own tip plus the tip of
    /// every other known id that is not already in that tip's past.
    pub fn generate_message(&self, id: VirtualId, nonce: Nonce, payload: Vec<u8>) -> Message {
        let own = self.tip_index(&id);
        self.message_after(own, id, nonce, payload)
    }

    /// Like [`generate_message`](Self::generate_message) but extends the given
    /// vertex of `id` (or starts fresh with `None`). Extending anything but the
    /// tip produces a mutation.
    pub fn generate_message_after(
        &self,
        own: Option<&Digest>,
        id: VirtualId,
        nonce: Nonce,
        payload: Vec<u8>,
    ) -> Result<Message, GraphError> {
        let own = own.map(|d| self.index_of(d)).transpose()?;
        Ok(self.message_after(own, id, nonce, payload))
    }

    fn message_after(&self, own: Option<usize>, id: VirtualId, nonce: Nonce, payload: Vec<u8>) -> Message {
        let mut digests = Vec::new();
        if let Some(o) = own {
            digests.push(*self.nodes[o].vertex.digest());
        }
        for other in self.tips.keys().filter(|&k| *k != id) {
            let t = self.tip_index(other).expect("tip sets are never empty");
            if own.is_none_or(|o| !self.le(t, o)) {
                digests.push(*self.nodes[t].vertex.digest());
            }
        }
        Message::new(nonce, id, digests, payload).expect("digests are distinct by construction")
    }

    pub(crate) fn record_round(&mut self, i: usize, round: u64, is_last: bool) {
        let v = &mut self.nodes[i].vertex;
        v.round = Some(round);
        v.is_last = Some(is_last);
        self.by_round.entry(round).or_default().push(i);
        if is_last {
            self.last_by_round.entry(round).or_default().push(i);
        }
    }

    pub(crate) fn round_indices(&self, round: u64) -> &[usize] {
        self.by_round.get(&round).map(Vec::as_slice).unwrap_or(&[])
    }

    pub(crate) fn last_indices(&self, round: u64) -> &[usize] {
        self.last_by_round.get(&round).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every vertex assigned to `round`.
    pub fn round_vertices(&self, round: u64) -> impl Iterator<Item = &Vertex> + '_ {
        self.round_indices(round).iter().map(|&i| &self.nodes[i].vertex)
    }

    /// Last vertices of `round`.
    pub fn last_vertices(&self, round: u64) -> impl Iterator<Item = &Vertex> + '_ {
        self.last_indices(round).iter().map(|&i| &self.nodes[i].vertex)
    }

    pub fn max_round(&self) -> Option<u64> {
        self.by_round.keys().next_back().copied()
    }
}
