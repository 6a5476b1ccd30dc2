use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::message::{Digest, Message, VirtualId, Vote};
use crate::weight::Weight;

/// A message together with the voting state derived from its past.
#[derive(Clone, Debug)]
pub struct Vertex {
    message: Arc<Message>,
    weight: Weight,
    pub(crate) round: Option<u64>,
    pub(crate) is_last: Option<bool>,
    pub(crate) svp: Option<BTreeSet<u64>>,
    pub(crate) votes: BTreeMap<u64, Vote>,
    pub(crate) total_position: Option<u64>,
}

impl Vertex {
    pub fn new(message: Arc<Message>, weight: Weight) -> Self {
        Vertex {
            message,
            weight,
            round: None,
            is_last: None,
            svp: None,
            votes: BTreeMap::new(),
            total_position: None,
        }
    }

    pub fn message(&self) -> &Arc<Message> {
        &self.message
    }

    pub fn digest(&self) -> &Digest {
        self.message.digest()
    }

    pub fn id(&self) -> &VirtualId {
        self.message.id()
    }

    pub fn digests(&self) -> &[Digest] {
        self.message.digests()
    }

    pub fn payload(&self) -> &[u8] {
        self.message.payload()
    }

    pub fn weight(&self) -> &Weight {
        &self.weight
    }

    pub fn round(&self) -> Option<u64> {
        self.round
    }

    pub fn is_last(&self) -> Option<bool> {
        self.is_last
    }

    pub fn svp(&self) -> Option<&BTreeSet<u64>> {
        self.svp.as_ref()
    }

    pub fn vote(&self, round: u64) -> Option<&Vote> {
        self.votes.get(&round)
    }

    pub fn votes(&self) -> &BTreeMap<u64, Vote> {
        &self.votes
    }

    pub fn total_position(&self) -> Option<u64> {
        self.total_position
    }

    /// Two vertices are equivalent when they carry the same message.
    pub fn equivalent(&self, other: &Vertex) -> bool {
        self.message == other.message
    }
}
