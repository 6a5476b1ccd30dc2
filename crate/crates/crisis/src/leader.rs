use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use crate::graph::LamportGraph;
use crate::message::{Bit, Digest, LeaderValue, Message, Vote};
use crate::rounds::DifficultyOracle;
use crate::vertex::Vertex;
use crate::voting::{svp_distance, Tally, VotingError};
use crate::weight::Weight;

/// Candidate set entry: `(deciding round, leader)`.
pub type Candidate = (u64, LeaderValue);

/// Picks the proposal of a pattern; must depend only on the vertices' messages.
pub trait InitialVote: fmt::Debug + Send + Sync {
    fn choose(&self, members: &[&Vertex]) -> Arc<Message>;
}

/// Proposes the message of the heaviest member, ties to the smaller digest.
#[derive(Clone, Copy, Debug, Default)]
pub struct HeaviestMember;

impl InitialVote for HeaviestMember {
    fn choose(&self, members: &[&Vertex]) -> Arc<Message> {
        heaviest(members.iter().copied())
            .expect("patterns are never empty")
            .message()
            .clone()
    }
}

fn heaviest<'a>(members: impl Iterator<Item = &'a Vertex>) -> Option<&'a Vertex> {
    members.max_by(|a, b| a.weight().cmp(b.weight()).then_with(|| b.digest().cmp(a.digest())))
}

/// Keeps only the candidates with the highest deciding round.
pub fn long_chain(set: &BTreeSet<Candidate>, leader: LeaderValue, deciding: u64) -> BTreeSet<Candidate> {
    if set.iter().any(|(t, _)| *t > deciding) {
        return set.clone();
    }
    let mut out: BTreeSet<Candidate> = set.iter().filter(|(t, _)| *t >= deciding).cloned().collect();
    out.insert((deciding, leader));
    out
}

/// Candidate sets per round.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LeaderStream {
    rounds: BTreeMap<u64, BTreeSet<Candidate>>,
}

impl LeaderStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn candidates(&self, round: u64) -> Option<&BTreeSet<Candidate>> {
        self.rounds.get(&round)
    }

    pub fn rounds(&self) -> impl Iterator<Item = (u64, &BTreeSet<Candidate>)> + '_ {
        self.rounds.iter().map(|(r, s)| (*r, s))
    }

    pub fn max_round(&self) -> Option<u64> {
        self.rounds.keys().next_back().copied()
    }

    /// Applies the longest chain rule to one round; returns whether it changed.
    pub fn apply(&mut self, round: u64, leader: LeaderValue, deciding: u64) -> bool {
        let entry = self.rounds.entry(round).or_default();
        let next = long_chain(entry, leader, deciding);
        if next == *entry {
            return false;
        }
        *entry = next;
        true
    }

    /// Round is settled: a single candidate decided after the round itself.
    pub fn is_decided(&self, round: u64) -> bool {
        matches!(self.rounds.get(&round), Some(set) if set.len() == 1 && set.iter().all(|(s, _)| *s > round))
    }

    /// One line per candidate: `round deciding_round leader`.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        for (round, set) in &self.rounds {
            for (s, l) in set {
                out.push_str(&format!("{round}\t{s}\t{l}\n"));
            }
        }
        out
    }
}

/// A local decision made while electing a vertex.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Decision {
    pub round: u64,
    pub deciding_round: u64,
    pub leader: LeaderValue,
}

/// What a vertex observed about each round it voted on.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ElectionRecord {
    /// Stage per voted round.
    pub stage: BTreeMap<u64, usize>,
    /// Bit with aggregate super-majority in the pattern, per round.
    pub super_majority: BTreeMap<u64, Bit>,
    /// Bit the whole pattern voted for, per round, at stages three and up.
    pub unanimous: BTreeMap<u64, Bit>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ElectionOutcome {
    pub votes: BTreeMap<u64, Vote>,
    pub decisions: Vec<Decision>,
    /// Rounds whose candidate set changed.
    pub changed: BTreeSet<u64>,
}

fn coin(g: &LamportGraph, members: &[usize]) -> Bit {
    let x = heaviest(members.iter().map(|&x| &g.node(x).vertex)).expect("patterns are never empty");
    if x.digest().least_significant_bit() {
        Bit::One
    } else {
        Bit::Zero
    }
}

/// Runs the virtual election for `v`, stores its votes and feeds decisions
/// into the stream.
pub fn elect(
    g: &mut LamportGraph,
    v: &Digest,
    d: &dyn DifficultyOracle,
    initial: &dyn InitialVote,
    stream: &mut LeaderStream,
) -> Result<ElectionOutcome, VotingError> {
    let i = g.index_of(v)?;
    let vertex = &g.node(i).vertex;
    let (Some(round), Some(svp)) = (vertex.round, vertex.svp.clone()) else {
        return Err(VotingError::PastNotProcessed(*v));
    };
    let mut outcome = ElectionOutcome::default();
    let Some(&s) = svp.last() else {
        if stream.apply(round, LeaderValue::Nil, round) {
            outcome.changed.insert(round);
        }
        g.node_mut(i).election = Some(ElectionRecord::default());
        return Ok(outcome);
    };
    let members = g.node(i).pattern.clone();
    let n = crate::voting::weight_of(g, &members);
    let ds = d.difficulty(s);
    let super_line = &n - &ds;
    let mut record = ElectionRecord::default();

    for &t in &svp {
        let stage = svp_distance(&svp, s, t)?;
        record.stage.insert(t, stage);
        if stage == 0 {
            let refs: Vec<&Vertex> = members.iter().map(|&x| &g.node(x).vertex).collect();
            let proposal = initial.choose(&refs);
            outcome
                .votes
                .insert(t, Vote::new(LeaderValue::Message(proposal), Bit::Undecided));
            continue;
        }
        let tally = Tally::of_indices(g, &members, t);
        for bit in [Bit::Zero, Bit::One] {
            if tally.bit(bit) > super_line {
                record.super_majority.insert(t, bit);
            }
            if stage >= 3 && tally.bit(bit) == n {
                record.unanimous.insert(t, bit);
            }
        }
        let l = tally.heaviest_leader().cloned().unwrap_or(LeaderValue::Nil);
        let vote = match stage {
            1 => {
                if tally.vote(&l, Bit::Undecided) > super_line {
                    Vote::new(l, Bit::Undecided)
                } else {
                    Vote::new(LeaderValue::Nil, Bit::Undecided)
                }
            }
            2 => {
                let w = tally.vote(&l, Bit::Undecided);
                if !l.is_nil() && w > super_line {
                    Vote::new(l, Bit::Zero)
                } else if !l.is_nil() && w > ds {
                    Vote::new(l, Bit::One)
                } else {
                    Vote::new(LeaderValue::Nil, Bit::One)
                }
            }
            _ if stage % 3 == 0 => {
                let zeros = tally.vote(&l, Bit::Zero);
                if zeros > super_line {
                    if zeros == n {
                        outcome.decisions.push(Decision {
                            round: t,
                            deciding_round: s,
                            leader: l.clone(),
                        });
                    }
                    Vote::new(l, Bit::Zero)
                } else if tally.vote(&l, Bit::One) > super_line {
                    Vote::new(l, Bit::One)
                } else {
                    Vote::new(l, Bit::Zero)
                }
            }
            _ if stage % 3 == 1 => {
                let ones = tally.vote(&l, Bit::One);
                if ones > super_line {
                    if ones == n {
                        outcome.decisions.push(Decision {
                            round: t,
                            deciding_round: s,
                            leader: LeaderValue::Nil,
                        });
                    }
                    Vote::new(LeaderValue::Nil, Bit::One)
                } else if tally.vote(&l, Bit::Zero) > super_line {
                    Vote::new(l, Bit::Zero)
                } else {
                    Vote::new(l, Bit::One)
                }
            }
            _ => {
                if tally.vote(&l, Bit::Zero) > super_line {
                    Vote::new(l, Bit::Zero)
                } else if tally.vote(&l, Bit::One) > super_line {
                    Vote::new(l, Bit::One)
                } else {
                    Vote::new(l, coin(g, &members))
                }
            }
        };
        outcome.votes.insert(t, vote);
    }

    for decision in &outcome.decisions {
        if stream.apply(decision.round, decision.leader.clone(), decision.deciding_round) {
            outcome.changed.insert(decision.round);
        }
    }
    let node = g.node_mut(i);
    node.vertex.votes = outcome.votes.clone();
    node.election = Some(record);
    Ok(outcome)
}

/// Which runtime safety property a vertex's pattern broke.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ViolationKind {
    QuorumIntersection,
    GradedAgreement,
    AgreementStability,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub kind: ViolationKind,
    pub vertex: Digest,
    pub round: u64,
}

/// Checks the agreement properties that must hold across the members of the
/// pattern of `v`. Requires `v` to have been elected.
pub fn check_pattern(g: &LamportGraph, v: &Digest) -> Result<Vec<Violation>, VotingError> {
    let i = g.index_of(v)?;
    let node = g.node(i);
    let Some(record) = &node.election else {
        return Err(VotingError::PastNotProcessed(*v));
    };
    let mut out = Vec::new();
    let members: Vec<&crate::graph::Node> = node.pattern.iter().map(|&x| g.node(x)).collect();
    let violation = |kind, round| Violation {
        kind,
        vertex: *v,
        round,
    };
    for (&t, &stage) in &record.stage {
        let mut bits = BTreeSet::new();
        for m in &members {
            if let Some(b) = m.election.as_ref().and_then(|e| e.super_majority.get(&t)) {
                bits.insert(*b);
            }
        }
        if bits.len() > 1 {
            out.push(violation(ViolationKind::QuorumIntersection, t));
        }
        if stage == 3 {
            let leaders: BTreeSet<&LeaderValue> = members
                .iter()
                .filter_map(|m| m.vertex.vote(t))
                .map(|vote| &vote.leader)
                .filter(|l| !l.is_nil())
                .collect();
            if leaders.len() > 1 {
                out.push(violation(ViolationKind::GradedAgreement, t));
            }
        }
        let settled: BTreeSet<Bit> = members
            .iter()
            .filter_map(|m| m.election.as_ref().and_then(|e| e.unanimous.get(&t)).copied())
            .collect();
        if let Some(own) = node.vertex.vote(t) {
            if settled.iter().any(|b| *b != own.bit) {
                out.push(violation(ViolationKind::AgreementStability, t));
            }
        }
    }
    Ok(out)
}

/// Total weight of pattern members whose round-`t` vote is `(leader, bit)`.
pub fn vote_weight(g: &LamportGraph, v: &Digest, t: u64, leader: &LeaderValue, bit: Bit) -> Result<Weight, VotingError> {
    let i = g.index_of(v)?;
    Ok(Tally::of_indices(g, &g.node(i).pattern, t).vote(leader, bit))
}
