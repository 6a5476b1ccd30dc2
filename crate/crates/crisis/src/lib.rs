//! Leaderless total ordering of messages over a weighted Lamport graph.
//!
//! Messages reference earlier messages by digest. Each replica sorts the
//! graph it has seen into rounds, runs a virtual vote inside the graph to
//! elect one leader per round, and derives a total order from the leaders'
//! causal pasts. No message is sent for the vote itself.

pub mod dump;
pub mod graph;
pub mod leader;
pub mod message;
pub mod order;
pub mod replica;
pub mod rounds;
pub mod vertex;
pub mod voting;
pub mod weight;

pub use graph::{GraphError, IntegrityError, LamportGraph};
pub use leader::{LeaderStream, Violation, ViolationKind};
pub use message::{Bit, Digest, LeaderValue, Message, MessageError, Nonce, VirtualId, Vote};
pub use order::TotalOrder;
pub use replica::{Insertion, Params, Replica, ReplicaError};
pub use rounds::{ConstantDifficulty, DifficultyOracle};
pub use vertex::Vertex;
pub use weight::{FixedWeight, PowWeight, UnitWeight, Weight, WeightSystem};
