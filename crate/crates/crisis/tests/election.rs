//! Hand-traced election on four unit-weight ids with d = 1 and k = 1, where
//! every id acknowledges the whole previous layer in lockstep.

mod common;

use std::collections::BTreeSet;

use common::{id, unit_replica};
use crisis::leader::vote_weight;
use crisis::message::{Bit, LeaderValue, Nonce};
use crisis::voting::pattern_members;
use crisis::{Digest, Replica};

const IDS: u64 = 4;

fn lockstep(layers: usize) -> (Replica, Vec<Vec<Digest>>) {
    let mut r = unit_replica(1, 1, IDS as usize);
    let mut out: Vec<Vec<Digest>> = Vec::new();
    for layer in 0..layers {
        let msgs: Vec<_> = (0..IDS)
            .map(|i| r.graph().generate_message(id(i), Nonce::from_u64(layer as u64), Vec::new()))
            .collect();
        out.push(msgs.iter().map(|m| *m.digest()).collect());
        for m in msgs {
            r.receive(m).unwrap();
        }
    }
    (r, out)
}

/// The heaviest member under unit weights is the one with the smallest digest.
fn proposal(layer: &[Digest]) -> Digest {
    *layer.iter().min().unwrap()
}

#[test]
fn every_layer_is_a_last_round() {
    let (r, layers) = lockstep(6);
    for (n, layer) in layers.iter().enumerate() {
        for d in layer {
            let v = r.graph().vertex(d).unwrap();
            assert_eq!(v.round(), Some(n as u64));
            assert_eq!(v.is_last(), Some(true));
            let expected: BTreeSet<u64> = (0..n as u64).collect();
            assert_eq!(v.svp(), Some(&expected));
        }
    }
}

#[test]
fn patterns_are_the_previous_layer() {
    let (r, layers) = lockstep(4);
    for n in 1..4 {
        for d in &layers[n] {
            let mut expected = layers[n - 1].clone();
            expected.sort();
            assert_eq!(pattern_members(r.graph(), d).unwrap(), expected);
        }
    }
}

#[test]
fn votes_follow_the_stage_schedule() {
    let (r, layers) = lockstep(6);
    for (n, layer) in layers.iter().enumerate().skip(1) {
        let s = n as u64 - 1;
        for d in layer {
            let v = r.graph().vertex(d).unwrap();
            for t in 0..=s {
                let leader = LeaderValue::Message(
                    r.graph().vertex(&proposal(&layers[t as usize])).unwrap().message().clone(),
                );
                let expected_bit = match s - t {
                    0 | 1 => Bit::Undecided,
                    _ => Bit::Zero,
                };
                let vote = v.vote(t).unwrap();
                assert_eq!(vote.leader, leader, "layer {n} round {t}");
                assert_eq!(vote.bit, expected_bit, "layer {n} round {t}");
            }
        }
    }
}

#[test]
fn decision_at_first_coin_fixed_zero_stage() {
    let (r, layers) = lockstep(6);
    let stream = r.stream();
    for t in 0..2u64 {
        let leader = LeaderValue::Message(
            r.graph().vertex(&proposal(&layers[t as usize])).unwrap().message().clone(),
        );
        assert_eq!(stream.candidates(t).unwrap(), &BTreeSet::from([(t + 3, leader)]));
        assert!(stream.is_decided(t));
    }
    // Rounds 2..5 have patterns on every vertex, so no placeholder was ever
    // inserted and nothing has been decided yet.
    for t in 2..6 {
        assert!(stream.candidates(t).is_none());
    }
    let layer4 = &layers[4][0];
    let unanimous = vote_weight(
        r.graph(),
        layer4,
        0,
        &LeaderValue::Message(r.graph().vertex(&proposal(&layers[0])).unwrap().message().clone()),
        Bit::Zero,
    )
    .unwrap();
    assert_eq!(unanimous, crisis::Weight::units(4));
}

#[test]
fn order_follows_the_two_decided_cones() {
    let (r, layers) = lockstep(6);
    let l0 = proposal(&layers[0]);
    let l1 = proposal(&layers[1]);
    let mut sinks_without_l0: Vec<Digest> = layers[0].iter().copied().filter(|d| *d != l0).collect();
    sinks_without_l0.sort();
    let mut expected = vec![l0];
    expected.extend(sinks_without_l0);
    expected.push(l1);
    assert_eq!(r.order().sequence(), expected.as_slice());
    assert_eq!(r.finalized_len(), 5);
    for (p, d) in expected.iter().enumerate() {
        assert_eq!(r.graph().vertex(d).unwrap().total_position(), Some(p as u64));
    }
    assert!(r.violations().is_empty());
}
