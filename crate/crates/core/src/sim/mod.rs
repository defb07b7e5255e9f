//! Discrete-event simulation of managed flooding over a relay assignment.
//!
//! Barrels originate application packets at a fixed rate; each packet is
//! broadcast `repeats` times on a random advertising channel. Relays re-send
//! every packet they have not seen before (once, with TTL decremented) and the
//! sink records the first copy of every `(source, seq)`. Each node sends one
//! frame at a time from a FIFO, waiting a random advertising delay before each
//! frame.
//!
//! Time is kept in integer microseconds. Events are totally ordered by
//! `(time, insertion sequence)` and all randomness comes from one seeded
//! generator, so a run is a pure function of its inputs.

pub mod channel;
pub mod config;
mod result;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use channel::{AirFrame, Outcome};
pub use config::{ChannelConfig, ReceptionModel, RepeatPolicy, ScenarioConfig};
pub use result::{EventKind, EventRecord, NodeStats, PacketKey, SimResult};

use crate::relay::{validate_assignment, RelayAssignment};
use crate::topology::{NodeId, Topology};
use crate::Scalar;

/// Hard cap on processed events per run.
pub const MAX_EVENTS: u64 = 100_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
    #[error("assignment does not fit topology: {0}")]
    InvalidAssignment(String),
    #[error("scenario range {config} m differs from topology range {topology} m")]
    RangeMismatch { config: f64, topology: f64 },
    #[error("event queue exceeded {limit} events at t = {time_us} us")]
    EventOverflow { limit: u64, time_us: u64 },
}

/// Network-layer copies each node originates per application packet,
/// indexed by node id. The sink gets zero.
pub fn plan_transmissions<T: Scalar>(topology: &Topology<T>, config: &ScenarioConfig) -> Vec<u32> {
    topology
        .nodes()
        .map(|n| {
            if n == topology.sink() {
                return 0;
            }
            match config.repeat_policy {
                RepeatPolicy::Fixed(k) => k,
                RepeatPolicy::DistanceScaled => {
                    let d = topology.distance_to_sink(n).to_f64().unwrap_or(0.0);
                    ((d / config.range_m).ceil() as u32).max(1)
                }
            }
        })
        .collect()
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    Generate(NodeId),
    TxStart(NodeId),
    TxEnd(usize),
}

#[derive(Copy, Clone, Debug)]
struct Pending {
    key: PacketKey,
    ttl: u8,
    hops: u8,
    forward: bool,
}

#[derive(Copy, Clone, Debug)]
struct Frame {
    air: AirFrame,
    key: PacketKey,
    ttl: u8,
    hops: u8,
}

#[derive(Default)]
struct NodeState {
    queue: VecDeque<Pending>,
    busy: bool,
    next_seq: u32,
    seen: HashSet<PacketKey>,
    tx_us: u64,
    listen_us: u64,
}

struct Engine<'a, T> {
    topology: &'a Topology<T>,
    config: &'a ScenarioConfig,
    is_relay: Vec<bool>,
    repeats: Vec<u32>,
    end_us: u64,
    jitter_us: u64,
    rng: ChaCha8Rng,
    heap: BinaryHeap<Reverse<(u64, u64, Event)>>,
    event_seq: u64,
    processed: u64,
    state: Vec<NodeState>,
    stats: Vec<NodeStats>,
    frames: Vec<Frame>,
    /// Indices into `frames` that may still overlap a frame under evaluation.
    recent: VecDeque<usize>,
    packet_tx: BTreeMap<PacketKey, u32>,
    max_hops: u8,
    log: Option<Vec<EventRecord>>,
    log_limit: usize,
    log_truncated: bool,
}

/// Runs one simulation. Isolated barrels are allowed; they simply never
/// deliver.
pub fn run<T: Scalar>(
    topology: &Topology<T>,
    assignment: &RelayAssignment<T>,
    config: &ScenarioConfig,
) -> Result<SimResult, SimError> {
    config.validate()?;
    let report = validate_assignment(topology, assignment);
    if !report.violations.is_empty() {
        return Err(SimError::InvalidAssignment(format!("{:?}", report.violations)));
    }
    let topo_range = topology.range().to_f64().unwrap_or(f64::NAN);
    if (topo_range - config.range_m).abs() > 1e-6 * config.range_m.max(1.0) {
        return Err(SimError::RangeMismatch { config: config.range_m, topology: topo_range });
    }
    Engine::new(topology, assignment, config).execute()
}

impl<'a, T: Scalar> Engine<'a, T> {
    fn new(topology: &'a Topology<T>, assignment: &RelayAssignment<T>, config: &'a ScenarioConfig) -> Self {
        let n = topology.len();
        Self {
            topology,
            config,
            is_relay: assignment.is_relay.clone(),
            repeats: plan_transmissions(topology, config),
            end_us: config.sim_time_us(),
            jitter_us: config.channel.jitter_us(),
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            heap: BinaryHeap::new(),
            event_seq: 0,
            processed: 0,
            state: (0..n).map(|_| NodeState::default()).collect(),
            stats: vec![NodeStats::default(); n],
            frames: Vec::new(),
            recent: VecDeque::new(),
            packet_tx: BTreeMap::new(),
            max_hops: 0,
            log: config.event_log_limit.map(|_| Vec::new()),
            log_limit: config.event_log_limit.unwrap_or(0),
            log_truncated: false,
        }
    }

    /// Relays and the sink listen continuously; other barrels only around
    /// their own transmissions and never act on what they hear.
    fn always_listening(&self, node: NodeId) -> bool {
        node == self.topology.sink() || self.is_relay[node.0]
    }

    fn schedule(&mut self, time: u64, event: Event) {
        self.heap.push(Reverse((time, self.event_seq, event)));
        self.event_seq += 1;
    }

    fn record(&mut self, time_us: u64, node: NodeId, kind: EventKind, key: PacketKey, channel: Option<u8>) {
        if let Some(log) = self.log.as_mut() {
            if log.len() < self.log_limit {
                log.push(EventRecord { time_us, node, kind, source: key.source, seq: key.seq, channel });
            } else {
                self.log_truncated = true;
            }
        }
    }

    fn execute(mut self) -> Result<SimResult, SimError> {
        let period_us = ((1e6 / self.config.app_rate).round() as u64).max(1);
        let sources: Vec<NodeId> = self.topology.barrels().collect();
        for &b in &sources {
            let phase = self.rng.gen_range(0..period_us);
            if phase < self.end_us {
                self.schedule(phase, Event::Generate(b));
            }
        }

        while let Some(Reverse((time, _, event))) = self.heap.pop() {
            if time >= self.end_us {
                break;
            }
            self.processed += 1;
            if self.processed > MAX_EVENTS {
                return Err(SimError::EventOverflow { limit: MAX_EVENTS, time_us: time });
            }
            match event {
                Event::Generate(node) => {
                    self.on_generate(time, node);
                    let next = time + period_us;
                    if next < self.end_us {
                        self.schedule(next, Event::Generate(node));
                    }
                }
                Event::TxStart(node) => self.on_tx_start(time, node),
                Event::TxEnd(fi) => self.on_tx_end(time, fi),
            }
        }
        Ok(self.finish())
    }

    fn on_generate(&mut self, now: u64, node: NodeId) {
        let st = &mut self.state[node.0];
        let key = PacketKey { source: node, seq: st.next_seq };
        st.next_seq += 1;
        st.seen.insert(key);
        self.stats[node.0].app_sent += 1;
        for _ in 0..self.repeats[node.0] {
            self.state[node.0].queue.push_back(Pending { key, ttl: self.config.ttl, hops: 0, forward: false });
        }
        self.record(now, node, EventKind::Generate, key, None);
        self.kick(now, node);
    }

    /// Starts the advertising delay for the next queued frame if the radio is idle.
    fn kick(&mut self, now: u64, node: NodeId) {
        let st = &self.state[node.0];
        if st.busy || st.queue.is_empty() {
            return;
        }
        let delay = if self.jitter_us == 0 { 0 } else { self.rng.gen_range(0..=self.jitter_us) };
        let start = now + delay;
        if !self.always_listening(node) {
            self.state[node.0].listen_us += start.min(self.end_us) - now.min(self.end_us);
        }
        self.state[node.0].busy = true;
        self.schedule(start, Event::TxStart(node));
    }

    fn on_tx_start(&mut self, now: u64, node: NodeId) {
        let Some(p) = self.state[node.0].queue.pop_front() else {
            self.state[node.0].busy = false;
            return;
        };
        let channel = self.rng.gen_range(0..self.config.channel.n_adv_channels);
        let end = now + self.config.channel.frame_duration_us;
        let air = AirFrame { transmitter: node, channel, start_us: now, end_us: end };
        self.state[node.0].tx_us += end.min(self.end_us) - now;
        let s = &mut self.stats[node.0];
        s.net_transmissions += 1;
        if p.forward {
            s.relayed += 1;
        }
        *self.packet_tx.entry(p.key).or_insert(0) += 1;
        self.max_hops = self.max_hops.max(p.hops);
        let fi = self.frames.len();
        self.frames.push(Frame { air, key: p.key, ttl: p.ttl, hops: p.hops });
        self.recent.push_back(fi);
        self.record(now, node, EventKind::TxStart, p.key, Some(channel));
        self.schedule(end, Event::TxEnd(fi));
    }

    fn on_tx_end(&mut self, now: u64, fi: usize) {
        let dur = self.config.channel.frame_duration_us;
        while let Some(&front) = self.recent.front() {
            if self.frames[front].air.end_us + dur <= now {
                self.recent.pop_front();
            } else {
                break;
            }
        }
        let frame = self.frames[fi];
        let nearby: Vec<AirFrame> = self.recent.iter().map(|&i| self.frames[i].air).collect();
        let receivers: Vec<NodeId> = self.topology.neighbors(frame.air.transmitter).collect();
        for v in receivers {
            if !self.always_listening(v) {
                continue;
            }
            let outcome = channel::resolve_at(&frame.air, &nearby, v, self.topology);
            let outcome = channel::apply_loss(outcome, &self.config.channel.reception, &mut self.rng);
            match outcome {
                Outcome::Delivered => self.on_receive(now, v, &frame),
                Outcome::Collided => {
                    self.stats[v.0].collisions += 1;
                    self.record(now, v, EventKind::Collision, frame.key, Some(frame.air.channel));
                }
                Outcome::Busy | Outcome::Lost => {
                    self.stats[v.0].missed += 1;
                    self.record(now, v, EventKind::Missed, frame.key, Some(frame.air.channel));
                }
            }
        }
        let tx = frame.air.transmitter;
        self.state[tx.0].busy = false;
        self.kick(now, tx);
    }

    fn on_receive(&mut self, now: u64, node: NodeId, frame: &Frame) {
        self.stats[node.0].receptions += 1;
        if !self.state[node.0].seen.insert(frame.key) {
            return;
        }
        self.record(now, node, EventKind::Receive, frame.key, Some(frame.air.channel));
        if node == self.topology.sink() {
            self.stats[frame.key.source.0].delivered += 1;
            self.record(now, node, EventKind::Deliver, frame.key, Some(frame.air.channel));
        } else if self.is_relay[node.0] && frame.ttl > 1 {
            self.state[node.0].queue.push_back(Pending {
                key: frame.key,
                ttl: frame.ttl - 1,
                hops: frame.hops + 1,
                forward: true,
            });
            self.kick(now, node);
        }
    }

    fn finish(self) -> SimResult {
        let total = self.end_us;
        let mut nodes = self.stats;
        for (i, st) in self.state.iter().enumerate() {
            let node = NodeId(i);
            let tx = st.tx_us.min(total);
            let listen = if node == self.topology.sink() || self.is_relay[i] {
                total - tx
            } else {
                st.listen_us.min(total - tx)
            };
            let sleep = total - tx - listen;
            let s = &mut nodes[i];
            s.tx_fraction = tx as f64 / total as f64;
            s.listen_fraction = listen as f64 / total as f64;
            s.sleep_fraction = sleep as f64 / total as f64;
        }
        SimResult {
            sink: self.topology.sink(),
            is_relay: self.is_relay,
            repeats: self.repeats,
            sim_time_us: total,
            nodes,
            packet_transmissions: self.packet_tx,
            max_hops: self.max_hops,
            events_processed: self.processed,
            event_log: self.log,
            event_log_truncated: self.log_truncated,
        }
    }
}
