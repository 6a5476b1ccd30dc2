use std::sync::Arc;

use thiserror::Error;

use crate::graph::{GraphError, LamportGraph};
use crate::leader::{self, Decision, HeaviestMember, InitialVote, LeaderStream, Violation};
use crate::message::{Digest, Message};
use crate::order::TotalOrder;
use crate::rounds::{self, ConstantDifficulty, DifficultyOracle, RoundError};
use crate::voting::{self, VotingError};
use crate::weight::{Weight, WeightSystem};

/// Protocol constants shared by every stage of the pipeline.
#[derive(Clone, Debug)]
pub struct Params {
    /// Connectivity `k` used for reachability thresholds.
    pub k: Weight,
    pub difficulty: Arc<dyn DifficultyOracle>,
    pub quorum_size: usize,
    pub initial_vote: Arc<dyn InitialVote>,
}

impl Params {
    pub fn new(k: Weight, difficulty: Weight, quorum_size: usize) -> Self {
        Params {
            k,
            difficulty: Arc::new(ConstantDifficulty::new(difficulty)),
            quorum_size,
            initial_vote: Arc::new(HeaviestMember),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ReplicaError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Round(#[from] RoundError),
    #[error(transparent)]
    Voting(#[from] VotingError),
}

/// What inserting one message did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Insertion {
    pub digest: Digest,
    pub round: u64,
    pub is_last: bool,
    pub decisions: Vec<Decision>,
    /// First round whose chosen leader changed, if the order was rebuilt.
    pub reordered_from: Option<u64>,
}

/// One process's view: its graph, leader stream and total order, updated
/// eagerly as messages arrive in causal order.
#[derive(Clone, Debug)]
pub struct Replica {
    graph: LamportGraph,
    params: Params,
    stream: LeaderStream,
    order: TotalOrder,
    violations: Vec<Violation>,
}

impl Replica {
    pub fn new(weights: Arc<dyn WeightSystem>, params: Params) -> Self {
        Self::with_graph(LamportGraph::new(weights), params)
    }

    /// Starts from an empty graph carrying custom settings such as a payload rule.
    pub fn with_graph(graph: LamportGraph, params: Params) -> Self {
        assert!(graph.is_empty(), "replicas start from an empty graph");
        Replica {
            graph,
            params,
            stream: LeaderStream::new(),
            order: TotalOrder::new(),
            violations: Vec::new(),
        }
    }

    pub fn graph(&self) -> &LamportGraph {
        &self.graph
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    pub fn stream(&self) -> &LeaderStream {
        &self.stream
    }

    pub fn order(&self) -> &TotalOrder {
        &self.order
    }

    /// Safety-property violations observed so far.
    pub fn violations(&self) -> &[Violation] {
        &self.violations
    }

    pub fn finalized_len(&self) -> usize {
        self.order.finalized_len(&self.stream)
    }

    pub fn finalized_order(&self) -> &[Digest] {
        &self.order.sequence()[..self.finalized_len()]
    }

    /// Integrity check, extension, then rounds, patterns, election and order.
    pub fn receive(&mut self, m: Message) -> Result<Insertion, ReplicaError> {
        let digest = *self.graph.extend(m)?.digest();
        let p = &self.params;
        let (round, is_last) = rounds::assign_round(&mut self.graph, &digest, &p.k, p.difficulty.as_ref())?;
        voting::compute_svp(&mut self.graph, &digest, &p.k, p.difficulty.as_ref(), p.quorum_size)?;
        let outcome = leader::elect(
            &mut self.graph,
            &digest,
            p.difficulty.as_ref(),
            p.initial_vote.as_ref(),
            &mut self.stream,
        )?;
        self.violations.extend(leader::check_pattern(&self.graph, &digest)?);
        let reordered_from = if outcome.changed.is_empty() {
            None
        } else {
            self.order.update(&mut self.graph, &self.stream)
        };
        Ok(Insertion {
            digest,
            round,
            is_last,
            decisions: outcome.decisions,
            reordered_from,
        })
    }
}
