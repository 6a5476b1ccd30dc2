//! Single-threaded discrete-event gossip simulation.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap};
use std::sync::Arc;

use crisis::{
    Digest, FixedWeight, LamportGraph, Message, Nonce, Params, PowWeight, Replica, Vertex, VirtualId, Weight,
    WeightSystem,
};
use rand::seq::{IndexedRandom, IteratorRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::config::{self, References, SimConfig, Strategy, WeightChoice};
use crate::metrics::{Recorder, Summary};

/// Ids of injected time-travel sinks start here.
const BOMB_ID_BASE: u64 = 1 << 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Tick {
    Discovery,
    Gossip,
    Generate,
}

#[derive(Clone, Debug)]
enum Data {
    Peers(Vec<usize>),
    Push(Vec<Arc<Message>>),
    Request(Vec<Digest>),
}

#[derive(Clone, Debug)]
enum Event {
    Tick(usize, Tick),
    Deliver { to: usize, from: usize, data: Data },
}

struct Scheduled {
    at: u64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

/// How a process behaves.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Role {
    Honest,
    /// Alternates two forks of its own id, each sent to half the peers, at
    /// most one message per round of its view.
    Mutator {
        branches: [Option<Digest>; 2],
        next: usize,
        last_round: Option<u64>,
    },
    /// Sends its messages to a few targets only, relays nothing and answers
    /// pulls from its targets only.
    Strategic { targets: Vec<usize> },
    /// Passive until enough rounds are final, then injects fresh-id sinks.
    TimeTraveller { fired: bool },
}

/// One simulated process.
pub struct Process {
    pub index: usize,
    pub role: Role,
    pub replica: Replica,
    pub view: BTreeSet<usize>,
    rng: ChaCha8Rng,
    pending: BTreeMap<Digest, Message>,
    requested: BTreeSet<(usize, Digest)>,
}

impl Process {
    pub fn is_honest(&self) -> bool {
        self.role == Role::Honest
    }

    pub fn id(&self) -> VirtualId {
        VirtualId::from_index(self.index as u64)
    }
}

/// Everything a finished run produced.
pub struct SimReport {
    pub config: SimConfig,
    pub processes: Vec<Process>,
    pub records: Vec<crate::metrics::Record>,
    pub summary: Summary,
    /// Digests each honest process generated, by process.
    pub generated: BTreeMap<usize, Vec<Digest>>,
    /// Digests injected by adversaries.
    pub injected: Vec<Digest>,
}

impl SimReport {
    pub fn honest(&self) -> impl Iterator<Item = &Process> + '_ {
        self.processes.iter().filter(|p| p.is_honest())
    }

    /// Metrics as JSON lines, summary last.
    pub fn metrics_jsonl(&self) -> String {
        crate::metrics::to_jsonl(&self.records, &self.summary)
    }
}

pub fn weight_system(config: &SimConfig) -> Arc<dyn WeightSystem> {
    let p = &config.protocol;
    let min = Weight::units(p.min_weight);
    match p.weight {
        WeightChoice::Fixed => Arc::new(FixedWeight::new(p.weight_units, min)),
        WeightChoice::Pow => Arc::new(PowWeight::new(min)),
    }
}

pub fn params(config: &SimConfig) -> Params {
    let p = &config.protocol;
    Params::new(Weight::units(p.k), Weight::units(p.difficulty), p.quorum_size)
}

pub struct Simulation {
    config: SimConfig,
    processes: Vec<Process>,
    queue: BinaryHeap<Reverse<Scheduled>>,
    seq: u64,
    now: u64,
    events: u64,
    recorder: Recorder,
    generated: BTreeMap<usize, Vec<Digest>>,
    injected: Vec<Digest>,
}

/// References for an honest message extending `own`.
///
/// A process's first message is a sink, so everyone starts from a common set
/// of genesis messages. Afterwards the message acknowledges `own` and the
/// newest vertex of every other id. Under [`References::RoundKeeping`] that is
/// the newest vertex that does not carry the message past the round in which
/// `own`'s successor can still be a last vertex. Referencing every tip
/// instead drops a process into the next round as a non-last vertex whenever
/// anyone else finished the round first, and the round then closes with too
/// little last-vertex weight for the one after it.
fn honest_refs(g: &LamportGraph, own: Option<Digest>, id: &VirtualId, policy: References) -> Vec<Digest> {
    let Some(own) = own else {
        return Vec::new();
    };
    let o = g.vertex(&own).expect("own predecessor is in the graph");
    let round = o.round().expect("inserted vertices have rounds");
    let target = if o.is_last() == Some(true) { round + 1 } else { round };
    let keeps = |v: &Vertex| {
        let r = v.round().expect("inserted vertices have rounds");
        policy == References::AllTips || r < target || (r == target && v.is_last() == Some(false))
    };
    let mut refs = vec![own];
    for other in g.ids().filter(|&x| x != id) {
        let mut v = g.tip(other).expect("known ids have tips");
        while !keeps(v) {
            let previous = g
                .causes(v.digest())
                .expect("tips are in the graph")
                .into_iter()
                .find(|c| c.id() == other);
            match previous {
                Some(p) => v = p,
                None => break,
            }
        }
        let in_own_past = g.happened_before(v.digest(), &own).expect("both are in the graph");
        if keeps(v) && !in_own_past {
            refs.push(*v.digest());
        }
    }
    refs
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, config::ConfigError> {
        config.validate()?;
        let weights = weight_system(&config);
        let params = params(&config);
        let honest = config.network.processes;
        let total = honest + config.byzantine();
        let mut processes = Vec::with_capacity(total);
        for index in 0..total {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(index as u64);
            let others: Vec<usize> = (0..total).filter(|&j| j != index).collect();
            let view: BTreeSet<usize> = others
                .choose_multiple(&mut rng, config.network.view_size.min(others.len()))
                .copied()
                .collect();
            let role = if index < honest {
                Role::Honest
            } else {
                match config.adversary.strategy {
                    Strategy::Mutate => Role::Mutator {
                        branches: [None, None],
                        next: 0,
                        last_round: None,
                    },
                    Strategy::Strategic => Role::Strategic {
                        targets: (0..honest).choose_multiple(&mut rng, config.adversary.targets.min(honest)),
                    },
                    Strategy::TimeTravel => Role::TimeTraveller { fired: false },
                    Strategy::None => unreachable!("no byzantine processes without a strategy"),
                }
            };
            processes.push(Process {
                index,
                role,
                replica: Replica::new(weights.clone(), params.clone()),
                view,
                rng,
                pending: BTreeMap::new(),
                requested: BTreeSet::new(),
            });
        }
        let recorder = Recorder::new(&config, honest);
        let mut sim = Simulation {
            config,
            processes,
            queue: BinaryHeap::new(),
            seq: 0,
            now: 0,
            events: 0,
            recorder,
            generated: BTreeMap::new(),
            injected: Vec::new(),
        };
        for index in 0..total {
            for tick in [Tick::Discovery, Tick::Gossip, Tick::Generate] {
                sim.schedule_tick(index, tick);
            }
        }
        Ok(sim)
    }

    fn generation_end(&self) -> u64 {
        config::ticks(self.config.duration.time)
    }

    fn run_end(&self) -> u64 {
        config::ticks(self.config.duration.time + self.config.duration.settle)
    }

    fn rate(&self, index: usize, tick: Tick) -> f64 {
        let c = &self.config;
        match tick {
            Tick::Discovery => c.network.discovery_rate,
            Tick::Gossip => c.network.gossip_rate,
            Tick::Generate if self.processes[index].is_honest() => c.generation.rate,
            Tick::Generate => c.adversary.rate,
        }
    }

    fn push(&mut self, at: u64, event: Event) {
        self.seq += 1;
        self.queue.push(Reverse(Scheduled {
            at,
            seq: self.seq,
            event,
        }));
    }

    fn schedule_tick(&mut self, index: usize, tick: Tick) {
        let rate = self.rate(index, tick);
        let gap = Exp::new(rate).expect("rates are validated").sample(&mut self.processes[index].rng);
        let at = self.now + config::ticks(gap).max(1);
        let end = if tick == Tick::Generate {
            self.generation_end()
        } else {
            self.run_end()
        };
        if at <= end {
            self.push(at, Event::Tick(index, tick));
        }
    }

    fn send(&mut self, from: usize, to: usize, data: Data) {
        let n = &self.config.network;
        let delay = self.processes[from].rng.random_range(n.delay_min..=n.delay_max);
        let at = self.now + config::ticks(delay).max(1);
        self.push(at, Event::Deliver { to, from, data });
    }

    /// Runs to completion and returns the report.
    pub fn run(mut self) -> SimReport {
        while let Some(Reverse(next)) = self.queue.pop() {
            if self.events >= self.config.duration.max_events {
                break;
            }
            self.events += 1;
            self.now = next.at;
            match next.event {
                Event::Tick(index, tick) => {
                    self.on_tick(index, tick);
                    self.schedule_tick(index, tick);
                }
                Event::Deliver { to, from, data } => self.on_deliver(to, from, data),
            }
        }
        let summary = self.recorder.finish(
            &self.config,
            &self.processes,
            &self.generated,
            &self.injected,
            self.now,
            self.events,
        );
        SimReport {
            config: self.config,
            processes: self.processes,
            records: self.recorder.into_records(),
            summary,
            generated: self.generated,
            injected: self.injected,
        }
    }

    fn on_tick(&mut self, index: usize, tick: Tick) {
        match tick {
            Tick::Discovery => self.discover(index),
            Tick::Gossip => self.gossip(index),
            Tick::Generate => self.generate(index),
        }
    }

    fn discover(&mut self, index: usize) {
        let sample_size = self.config.network.discovery_sample;
        let p = &mut self.processes[index];
        let Some(&peer) = p.view.iter().choose(&mut p.rng) else {
            return;
        };
        let mut known: Vec<usize> = p.view.iter().copied().filter(|&j| j != peer).collect();
        known.push(index);
        let sample: Vec<usize> = known.choose_multiple(&mut p.rng, sample_size).copied().collect();
        self.send(index, peer, Data::Peers(sample));
    }

    fn gossip(&mut self, index: usize) {
        let fanout = self.config.network.gossip_fanout;
        let p = &mut self.processes[index];
        let (peers, batch): (Vec<usize>, Vec<Arc<Message>>) = match &p.role {
            Role::Honest => {
                let peers = p.view.iter().copied().choose_multiple(&mut p.rng, fanout);
                let batch = p
                    .replica
                    .graph()
                    .vertices()
                    .filter(|v| v.total_position().is_none())
                    .map(|v| v.message().clone())
                    .collect();
                (peers, batch)
            }
            Role::Strategic { targets } => {
                let own = p.id();
                let batch = p
                    .replica
                    .graph()
                    .vertices()
                    .filter(|v| v.id() == &own && v.total_position().is_none())
                    .map(|v| v.message().clone())
                    .collect();
                (targets.clone(), batch)
            }
            Role::Mutator { .. } | Role::TimeTraveller { .. } => return,
        };
        if batch.is_empty() {
            return;
        }
        for peer in peers {
            self.send(index, peer, Data::Push(batch.clone()));
        }
    }

    fn fresh_message(&mut self, index: usize, own: Option<Digest>, id: VirtualId) -> Option<Message> {
        let payload_size = self.config.protocol.payload_size;
        let p = &mut self.processes[index];
        let refs = honest_refs(p.replica.graph(), own, &id, self.config.protocol.references);
        // Nonce grinding stands in for proof of work; bounded so a bad
        // configuration cannot stall the run.
        for _ in 0..256 {
            let nonce = Nonce::from_u64(p.rng.random());
            let payload: Vec<u8> = (0..payload_size).map(|_| p.rng.random()).collect();
            let m = Message::new(nonce, id, refs.clone(), payload).expect("one reference per id");
            if p.replica.graph().integrity(&m) {
                return Some(m);
            }
        }
        None
    }

    /// Extends `own` while keeping the other fork out of the message's past,
    /// so the two forks stay spacelike.
    fn fork_message(&mut self, index: usize, own: Option<Digest>, id: VirtualId) -> Option<Message> {
        let payload_size = self.config.protocol.payload_size;
        let p = &mut self.processes[index];
        let g = p.replica.graph();
        let before = |a: &Digest, b: &Digest| g.happened_before(a, b).expect("both are in the graph");
        let other_fork: Vec<Digest> = g
            .vertices()
            .filter(|v| v.id() == &id && own.is_none_or(|o| !before(v.digest(), &o)))
            .map(|v| *v.digest())
            .collect();
        let mut refs: Vec<Digest> = own.into_iter().collect();
        for other in g.ids().filter(|&x| *x != id) {
            let t = *g.tip(other).expect("known ids have tips").digest();
            if own.is_some_and(|o| before(&t, &o)) || other_fork.iter().any(|f| before(f, &t)) {
                continue;
            }
            refs.push(t);
        }
        for _ in 0..256 {
            let nonce = Nonce::from_u64(p.rng.random());
            let payload: Vec<u8> = (0..payload_size).map(|_| p.rng.random()).collect();
            let m = Message::new(nonce, id, refs.clone(), payload).expect("one reference per id");
            if p.replica.graph().integrity(&m) {
                return Some(m);
            }
        }
        None
    }

    fn generate(&mut self, index: usize) {
        match self.processes[index].role.clone() {
            Role::Honest => {
                let id = self.processes[index].id();
                let tip = self.processes[index].replica.graph().tip(&id).map(|v| *v.digest());
                if let Some(m) = self.fresh_message(index, tip, id) {
                    self.generated.entry(index).or_default().push(*m.digest());
                    self.accept(index, vec![m]);
                }
            }
            Role::Strategic { targets } => {
                let id = self.processes[index].id();
                let tip = self.processes[index].replica.graph().tip(&id).map(|v| *v.digest());
                if let Some(m) = self.fresh_message(index, tip, id) {
                    let shared = Arc::new(m.clone());
                    self.accept(index, vec![m]);
                    for t in targets {
                        self.send(index, t, Data::Push(vec![shared.clone()]));
                    }
                }
            }
            Role::Mutator {
                branches,
                next,
                last_round,
            } => {
                let round = self.processes[index].replica.graph().max_round();
                if round.is_some() && round == last_round {
                    return;
                }
                let id = self.processes[index].id();
                // The first message is the common root of both forks.
                let (own, branch) = match branches[next] {
                    None => (None, None),
                    Some(d) => (Some(d), Some(next)),
                };
                let Some(m) = self.fork_message(index, own, id) else {
                    return;
                };
                let digest = *m.digest();
                let shared = Arc::new(m.clone());
                self.accept(index, vec![m]);
                let mut new_branches = branches;
                let recipients: Vec<usize> = match branch {
                    None => {
                        new_branches = [Some(digest), Some(digest)];
                        self.processes[index].view.iter().copied().collect()
                    }
                    Some(b) => {
                        new_branches[b] = Some(digest);
                        self.processes[index].view.iter().copied().filter(|j| j % 2 == b).collect()
                    }
                };
                for peer in recipients {
                    self.send(index, peer, Data::Push(vec![shared.clone()]));
                }
                self.processes[index].role = Role::Mutator {
                    branches: new_branches,
                    next: if branch.is_none() { 0 } else { 1 - next },
                    last_round: round,
                };
            }
            Role::TimeTraveller { fired } => {
                if fired {
                    return;
                }
                let p = &self.processes[index];
                let finalized = p.replica.order().finalized_rounds(p.replica.stream());
                if finalized < self.config.adversary.after_round {
                    return;
                }
                let bombs: Vec<Message> = (0..self.config.adversary.bombs)
                    .filter_map(|b| {
                        let id = VirtualId::from_index(BOMB_ID_BASE + (index * 1000 + b) as u64);
                        self.fresh_message(index, None, id)
                    })
                    .collect();
                self.injected.extend(bombs.iter().map(|m| *m.digest()));
                self.recorder.injection(self.now, index, bombs.len(), finalized);
                let shared: Vec<Arc<Message>> = bombs.iter().cloned().map(Arc::new).collect();
                self.accept(index, bombs);
                let everyone: Vec<usize> = (0..self.processes.len()).filter(|&j| j != index).collect();
                for peer in everyone {
                    self.send(index, peer, Data::Push(shared.clone()));
                }
                self.processes[index].role = Role::TimeTraveller { fired: true };
            }
        }
    }

    fn on_deliver(&mut self, to: usize, from: usize, data: Data) {
        match data {
            Data::Peers(peers) => {
                let p = &mut self.processes[to];
                p.view.extend(peers.into_iter().filter(|&j| j != to));
            }
            Data::Push(batch) => {
                let p = &mut self.processes[to];
                p.view.insert(from);
                let fresh: Vec<Message> = batch
                    .iter()
                    .filter(|m| !p.replica.graph().contains(m.digest()) && !p.pending.contains_key(m.digest()))
                    .map(|m| (**m).clone())
                    .collect();
                if fresh.is_empty() {
                    return;
                }
                self.accept(to, fresh);
                let p = &mut self.processes[to];
                let mut missing = BTreeSet::new();
                for m in p.pending.values() {
                    for d in m.digests() {
                        if !p.replica.graph().contains(d) && !p.pending.contains_key(d) && !p.requested.contains(&(from, *d)) {
                            missing.insert(*d);
                        }
                    }
                }
                if !missing.is_empty() {
                    p.requested.extend(missing.iter().map(|d| (from, *d)));
                    self.send(to, from, Data::Request(missing.into_iter().collect()));
                }
            }
            Data::Request(digests) => {
                let p = &self.processes[to];
                let willing = match &p.role {
                    Role::Strategic { targets } => targets.contains(&from),
                    _ => true,
                };
                if !willing {
                    return;
                }
                let found: Vec<Arc<Message>> = digests
                    .iter()
                    .filter_map(|d| p.replica.graph().vertex(d))
                    .map(|v| v.message().clone())
                    .collect();
                if !found.is_empty() {
                    self.send(to, from, Data::Push(found));
                }
            }
        }
    }

    /// Queues messages and inserts every one whose causes are all present,
    /// repeating until nothing more fits.
    fn accept(&mut self, index: usize, messages: Vec<Message>) {
        let p = &mut self.processes[index];
        for m in messages {
            p.pending.insert(*m.digest(), m);
        }
        let mut inserted = false;
        loop {
            let ready: Vec<Digest> = p
                .pending
                .values()
                .filter(|m| m.digests().iter().all(|d| p.replica.graph().contains(d)))
                .map(|m| *m.digest())
                .collect();
            if ready.is_empty() {
                break;
            }
            for d in ready {
                let m = p.pending.remove(&d).expect("ready messages are pending");
                // Integrity failures are dropped, as faulty messages are.
                if p.replica.receive(m).is_ok() {
                    inserted = true;
                }
            }
        }
        if inserted && p.is_honest() {
            self.recorder.observe(self.now, p);
        }
    }
}

pub fn run(config: SimConfig) -> Result<SimReport, config::ConfigError> {
    Ok(Simulation::new(config)?.run())
}
