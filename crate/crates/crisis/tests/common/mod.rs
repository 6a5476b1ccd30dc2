#![allow(dead_code)]

use std::sync::Arc;

use crisis::{Digest, Message, Nonce, Params, Replica, UnitWeight, VirtualId, Weight, WeightSystem};

pub fn id(n: u64) -> VirtualId {
    VirtualId::from_index(n)
}

pub fn msg(id_index: u64, nonce: u64, refs: &[Digest]) -> Message {
    Message::new(Nonce::from_u64(nonce), id(id_index), refs.to_vec(), Vec::new()).unwrap()
}

pub fn msg_with_payload(id_index: u64, nonce: u64, refs: &[Digest], payload: Vec<u8>) -> Message {
    Message::new(Nonce::from_u64(nonce), id(id_index), refs.to_vec(), payload).unwrap()
}

/// Weighs a message at its first payload byte in whole units.
#[derive(Debug)]
pub struct PayloadWeight {
    min: Weight,
}

impl PayloadWeight {
    pub fn new() -> Self {
        PayloadWeight { min: Weight::zero() }
    }
}

impl WeightSystem for PayloadWeight {
    fn weight(&self, message: &Message) -> Weight {
        Weight::units(u64::from(message.payload().first().copied().unwrap_or(1)))
    }

    fn min_weight(&self) -> &Weight {
        &self.min
    }
}

/// Replica with unit weights, `k` and `d` in units.
pub fn unit_replica(k: u64, d: u64, quorum: usize) -> Replica {
    Replica::new(
        Arc::new(UnitWeight::new(1)),
        Params::new(Weight::units(k), Weight::units(d), quorum),
    )
}

pub fn insert(r: &mut Replica, m: Message) -> Digest {
    r.receive(m).unwrap().digest
}
