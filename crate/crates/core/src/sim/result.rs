use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use crate::topology::NodeId;

/// Network-wide packet identity.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PacketKey {
    pub source: NodeId,
    pub seq: u32,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeStats {
    /// Application packets originated.
    pub app_sent: u32,
    /// Frames put on air (originations, repeats and forwards).
    pub net_transmissions: u32,
    /// Forwarded frames put on air.
    pub relayed: u32,
    /// Distinct packets from this source that reached the sink.
    pub delivered: u32,
    /// Clean frame receptions, duplicates included.
    pub receptions: u32,
    pub collisions: u32,
    /// Receptions missed while transmitting or to random loss.
    pub missed: u32,
    pub tx_fraction: f64,
    pub listen_fraction: f64,
    pub sleep_fraction: f64,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum EventKind {
    Generate,
    TxStart,
    Receive,
    Collision,
    Missed,
    Deliver,
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EventKind::Generate => "generate",
            EventKind::TxStart => "tx_start",
            EventKind::Receive => "receive",
            EventKind::Collision => "collision",
            EventKind::Missed => "missed",
            EventKind::Deliver => "deliver",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct EventRecord {
    pub time_us: u64,
    pub node: NodeId,
    pub kind: EventKind,
    pub source: NodeId,
    pub seq: u32,
    pub channel: Option<u8>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimResult {
    pub sink: NodeId,
    pub is_relay: Vec<bool>,
    /// Originations per application packet, per node.
    pub repeats: Vec<u32>,
    pub sim_time_us: u64,
    pub nodes: Vec<NodeStats>,
    /// Frames on air per packet.
    pub packet_transmissions: BTreeMap<PacketKey, u32>,
    /// Largest hop count of any frame put on air.
    pub max_hops: u8,
    pub events_processed: u64,
    pub event_log: Option<Vec<EventRecord>>,
    pub event_log_truncated: bool,
}

impl SimResult {
    pub fn sources(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.nodes.len()).map(NodeId).filter(move |&n| n != self.sink)
    }

    pub fn total_sent(&self) -> u64 {
        self.sources().map(|n| self.nodes[n.0].app_sent as u64).sum()
    }

    pub fn total_delivered(&self) -> u64 {
        self.sources().map(|n| self.nodes[n.0].delivered as u64).sum()
    }

    pub fn total_relayed(&self) -> u64 {
        self.nodes.iter().map(|s| s.relayed as u64).sum()
    }

    /// Writes the event log as comma-separated lines
    /// `time_us,node,event_kind,source,seq,channel`.
    pub fn write_event_log<W: Write>(&self, mut out: W) -> io::Result<()> {
        let Some(log) = &self.event_log else { return Ok(()) };
        for e in log {
            let ch = e.channel.map(|c| c.to_string()).unwrap_or_default();
            writeln!(out, "{},{},{},{},{},{}", e.time_us, e.node, e.kind, e.source, e.seq, ch)?;
        }
        Ok(())
    }
}
