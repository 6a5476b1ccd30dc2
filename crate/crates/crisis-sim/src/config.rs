//! Scenario files: TOML with a `schema_version` key.
//!
//! Times are virtual time units and rates are events per unit. Weights,
//! difficulty and `k` are whole weight units. Every key except
//! `schema_version` has a default:
//!
//! ```toml
//! schema_version = 1
//! seed = 0
//!
//! [network]
//! processes = 8          # honest processes, one virtual id each
//! view_size = 8          # peers each process knows at start
//! delay_min = 0.01       # delivery delay, uniform in [delay_min, delay_max]
//! delay_max = 0.05
//! discovery_rate = 0.5   # peer-exchange ticks per process
//! discovery_sample = 3   # peers sent per exchange
//! gossip_rate = 20.0     # push ticks per process
//! gossip_fanout = 1      # peers pushed to per tick
//!
//! [protocol]
//! weight = "fixed"       # or "pow"
//! weight_units = 16      # base weight for "fixed"
//! min_weight = 0         # messages must weigh strictly more
//! difficulty = 26        # constant d
//! k = 40                 # connectivity
//! quorum_size = 9
//! payload_size = 8
//! references = "round_keeping"  # or "all_tips"
//!
//! [generation]
//! rate = 1.0             # message generation ticks per honest process
//!
//! [duration]
//! time = 100.0           # generation stops here
//! settle = 10.0          # gossip continues this much longer
//! max_events = 5000000   # hard cap on processed events
//!
//! [adversary]
//! strategy = "none"      # "mutate", "strategic" or "time_travel"
//! count = 1
//! rate = 1.0             # adversary generation ticks
//! targets = 1            # strategic: peers that receive its messages
//! after_round = 20       # time_travel: finalized rounds before the bomb
//! bombs = 4              # time_travel: fresh-id sinks injected
//!
//! [metrics]
//! straggler_round = 30   # honest messages below this round must end finalized
//! liveness_window = 10.0
//! ```

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

/// Virtual time ticks per time unit.
pub const TICKS_PER_UNIT: f64 = 1_000_000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported schema_version {0}, expected {SCHEMA_VERSION}")]
    Schema(u32),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub network: Network,
    #[serde(default)]
    pub protocol: Protocol,
    #[serde(default)]
    pub generation: Generation,
    #[serde(default)]
    pub duration: Duration,
    #[serde(default)]
    pub adversary: Adversary,
    #[serde(default)]
    pub metrics: Metrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Network {
    pub processes: usize,
    pub view_size: usize,
    pub delay_min: f64,
    pub delay_max: f64,
    pub discovery_rate: f64,
    pub discovery_sample: usize,
    pub gossip_rate: f64,
    pub gossip_fanout: usize,
}

impl Default for Network {
    fn default() -> Self {
        Network {
            processes: 8,
            view_size: 8,
            delay_min: 0.01,
            delay_max: 0.05,
            discovery_rate: 0.5,
            discovery_sample: 3,
            gossip_rate: 20.0,
            gossip_fanout: 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightChoice {
    Fixed,
    Pow,
}

/// Which vertices an honest message acknowledges.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum References {
    /// The newest vertex of every other id.
    AllTips,
    /// The newest vertex of every other id that does not move the message
    /// past the round in which it can still be a last vertex.
    #[default]
    RoundKeeping,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Protocol {
    pub weight: WeightChoice,
    pub weight_units: u64,
    pub min_weight: u64,
    pub difficulty: u64,
    pub k: u64,
    pub quorum_size: usize,
    pub payload_size: usize,
    pub references: References,
}

impl Default for Protocol {
    fn default() -> Self {
        Protocol {
            weight: WeightChoice::Fixed,
            weight_units: 16,
            min_weight: 0,
            difficulty: 26,
            k: 40,
            quorum_size: 9,
            payload_size: 8,
            references: References::RoundKeeping,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Generation {
    pub rate: f64,
}

impl Default for Generation {
    fn default() -> Self {
        Generation { rate: 1.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Duration {
    pub time: f64,
    pub settle: f64,
    pub max_events: u64,
}

impl Default for Duration {
    fn default() -> Self {
        Duration {
            time: 100.0,
            settle: 10.0,
            max_events: 5_000_000,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    None,
    Mutate,
    Strategic,
    TimeTravel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Adversary {
    pub strategy: Strategy,
    pub count: usize,
    pub rate: f64,
    pub targets: usize,
    pub after_round: u64,
    pub bombs: usize,
}

impl Default for Adversary {
    fn default() -> Self {
        Adversary {
            strategy: Strategy::None,
            count: 1,
            rate: 1.0,
            targets: 1,
            after_round: 20,
            bombs: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Metrics {
    pub straggler_round: u64,
    pub liveness_window: f64,
}

impl Default for Metrics {
    fn default() -> Self {
        Metrics {
            straggler_round: 30,
            liveness_window: 10.0,
        }
    }
}

impl SimConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let config: SimConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs always serialize")
    }

    /// Number of byzantine processes actually started.
    pub fn byzantine(&self) -> usize {
        match self.adversary.strategy {
            Strategy::None => 0,
            _ => self.adversary.count,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        let invalid = |what: &str| Err(ConfigError::Invalid(what.to_string()));
        let n = &self.network;
        if n.processes == 0 {
            return invalid("network.processes must be positive");
        }
        for (name, rate) in [
            ("network.discovery_rate", n.discovery_rate),
            ("network.gossip_rate", n.gossip_rate),
            ("generation.rate", self.generation.rate),
        ] {
            if !(rate.is_finite() && rate > 0.0) {
                return invalid(&format!("{name} must be positive"));
            }
        }
        if !(n.delay_min >= 0.0 && n.delay_min <= n.delay_max && n.delay_max.is_finite()) {
            return invalid("network delays must satisfy 0 <= delay_min <= delay_max");
        }
        if n.gossip_fanout == 0 {
            return invalid("network.gossip_fanout must be positive");
        }
        let p = &self.protocol;
        if p.difficulty == 0 {
            return invalid("protocol.difficulty must be positive");
        }
        if p.quorum_size == 0 {
            return invalid("protocol.quorum_size must be positive");
        }
        if p.weight == WeightChoice::Fixed && p.weight_units <= p.min_weight {
            return invalid("protocol.weight_units must exceed protocol.min_weight");
        }
        let d = &self.duration;
        if !(d.time.is_finite() && d.time > 0.0 && d.settle.is_finite() && d.settle >= 0.0) {
            return invalid("duration.time must be positive and duration.settle non-negative");
        }
        if self.byzantine() > 0 && !(self.adversary.rate.is_finite() && self.adversary.rate > 0.0) {
            return invalid("adversary.rate must be positive");
        }
        if !(self.metrics.liveness_window.is_finite() && self.metrics.liveness_window > 0.0) {
            return invalid("metrics.liveness_window must be positive");
        }
        Ok(())
    }
}

pub fn ticks(time: f64) -> u64 {
    (time * TICKS_PER_UNIT).round() as u64
}

pub fn units(ticks: u64) -> f64 {
    ticks as f64 / TICKS_PER_UNIT
}
