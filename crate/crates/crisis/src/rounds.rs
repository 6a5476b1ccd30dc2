use std::fmt;

use thiserror::Error;

use crate::graph::{GraphError, LamportGraph};
use crate::message::{Digest, Message};
use crate::weight::Weight;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RoundError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("a cause of {0} has no round yet")]
    PastNotProcessed(Digest),
}

/// Per-round estimate of honest voting weight.
pub trait DifficultyOracle: fmt::Debug + Send + Sync {
    fn difficulty(&self, round: u64) -> Weight;
}

#[derive(Clone, Debug)]
pub struct ConstantDifficulty(Weight);

impl ConstantDifficulty {
    pub fn new(d: Weight) -> Self {
        assert!(d.is_positive(), "difficulty must be positive");
        ConstantDifficulty(d)
    }
}

impl DifficultyOracle for ConstantDifficulty {
    fn difficulty(&self, _round: u64) -> Weight {
        self.0.clone()
    }
}

/// Round number and last-vertex flag of `v`, from its direct causes.
pub fn compute_round(
    g: &LamportGraph,
    v: &Digest,
    k: &Weight,
    d: &dyn DifficultyOracle,
) -> Result<(u64, bool), RoundError> {
    let i = g.index_of(v)?;
    round_from(g, &g.node(i).causes, |x| g.reaches(i, x, k), d).ok_or(RoundError::PastNotProcessed(*v))
}

/// Round number and last-vertex flag that `m` would get if it were inserted
/// into `g` now. Leaves `g` untouched.
pub fn preview_round(
    g: &LamportGraph,
    m: &Message,
    k: &Weight,
    d: &dyn DifficultyOracle,
) -> Result<(u64, bool), RoundError> {
    let causes = m
        .digests()
        .iter()
        .map(|c| g.index_of(c))
        .collect::<Result<Vec<_>, _>>()?;
    let past = g.union_past(&causes);
    let own = g.weight_system().weight(m);
    round_from(g, &causes, |x| g.reaches_from(&past, &own, x, k), d).ok_or(RoundError::PastNotProcessed(*m.digest()))
}

/// `None` if a cause has no round yet.
fn round_from(
    g: &LamportGraph,
    causes: &[usize],
    reaches: impl Fn(usize) -> bool,
    d: &dyn DifficultyOracle,
) -> Option<(u64, bool)> {
    let mut max_round = None::<u64>;
    let mut last_in_max = false;
    for &c in causes {
        let cause = &g.node(c).vertex;
        let (r, last) = (cause.round?, cause.is_last?);
        match max_round {
            Some(m) if r < m => {}
            Some(m) if r == m => last_in_max |= last,
            _ => {
                max_round = Some(r);
                last_in_max = last;
            }
        }
    }
    let round = match max_round {
        None => return Some((0, true)),
        Some(r) if last_in_max => r + 1,
        Some(r) => r,
    };
    if round == 0 {
        return Some((0, true));
    }
    let threshold = &d.difficulty(round) * 3;
    let mut seen = Weight::zero();
    for &x in g.last_indices(round - 1) {
        if reaches(x) {
            seen += g.node(x).vertex.weight();
            if seen > threshold {
                return Some((round, true));
            }
        }
    }
    Some((round, false))
}

/// Computes and stores the round of `v`; a no-op if already assigned.
pub fn assign_round(
    g: &mut LamportGraph,
    v: &Digest,
    k: &Weight,
    d: &dyn DifficultyOracle,
) -> Result<(u64, bool), RoundError> {
    let i = g.index_of(v)?;
    if let (Some(r), Some(l)) = (g.node(i).vertex.round, g.node(i).vertex.is_last) {
        return Ok((r, l));
    }
    let (round, last) = compute_round(g, v, k, d)?;
    g.record_round(i, round, last);
    Ok((round, last))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::message::{Message, Nonce, VirtualId};
    use crate::weight::UnitWeight;
    use std::sync::Arc;

    fn add(g: &mut LamportGraph, id: u64, causes: &[Digest], d: &ConstantDifficulty) -> (Digest, u64, bool) {
        let m = Message::new(Nonce::default(), VirtualId::from_index(id), causes.to_vec(), vec![]).unwrap();
        let digest = *g.extend(m).unwrap().digest();
        let (r, l) = assign_round(g, &digest, &Weight::zero(), d).unwrap();
        (digest, r, l)
    }

    #[test]
    fn sink_is_last_round_zero() {
        let d = ConstantDifficulty::new(Weight::units(1));
        let mut g = LamportGraph::new(Arc::new(UnitWeight::new(1)));
        let (_, r, l) = add(&mut g, 0, &[], &d);
        assert_eq!((r, l), (0, true));
    }

    #[test]
    fn four_round_zero_lasts_make_a_round_one_last() {
        let d = ConstantDifficulty::new(Weight::units(1));
        let mut g = LamportGraph::new(Arc::new(UnitWeight::new(1)));
        let sinks: Vec<Digest> = (0..4).map(|i| add(&mut g, i, &[], &d).0).collect();
        // Three sinks are not enough: weight 3 is not above 3.
        let (a, r, l) = add(&mut g, 0, &sinks[..1].iter().chain(&sinks[1..3]).copied().collect::<Vec<_>>(), &d);
        assert_eq!((r, l), (1, false));
        let (_, r, l) = add(&mut g, 3, &[sinks[3], a], &d);
        assert_eq!((r, l), (1, true));
    }

    #[test]
    fn unprocessed_cause_is_reported() {
        let d = ConstantDifficulty::new(Weight::units(1));
        let mut g = LamportGraph::new(Arc::new(UnitWeight::new(1)));
        let a = Message::new(Nonce::default(), VirtualId::from_index(0), vec![], vec![]).unwrap();
        let a = *g.extend(a).unwrap().digest();
        let b = Message::new(Nonce::default(), VirtualId::from_index(1), vec![a], vec![]).unwrap();
        let b = *g.extend(b).unwrap().digest();
        assert_eq!(compute_round(&g, &b, &Weight::zero(), &d), Err(RoundError::PastNotProcessed(b)));
    }

    #[test]
    fn preview_matches_insertion() {
        let d = ConstantDifficulty::new(Weight::units(1));
        let k = Weight::units(2);
        let mut g = LamportGraph::new(Arc::new(UnitWeight::new(1)));
        let sinks: Vec<Digest> = (0..5).map(|i| add(&mut g, i, &[], &d).0).collect();
        let mut tips = sinks.clone();
        let mut seen = Vec::new();
        for step in 0..12u64 {
            let id = step % 5;
            let causes: Vec<Digest> = (0..5)
                .filter(|&j| j == id || (step + j) % 3 != 0)
                .map(|j| tips[j as usize])
                .collect();
            let m = Message::new(Nonce::default(), VirtualId::from_index(id), causes, vec![]).unwrap();
            let preview = preview_round(&g, &m, &k, &d).unwrap();
            let digest = *g.extend(m).unwrap().digest();
            assert_eq!(assign_round(&mut g, &digest, &k, &d).unwrap(), preview);
            tips[id as usize] = digest;
            seen.push(preview);
        }
        assert!(seen.iter().any(|&(r, l)| r >= 1 && l), "{seen:?}");
        assert!(seen.iter().any(|&(r, l)| r >= 1 && !l), "{seen:?}");
    }
}
