//! Delivery ratio, relay-load balance and average radio current.
//!
//! Ratios that would divide by zero come back as `None` ("no data") rather
//! than `0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::relay::RelayAssignment;
use crate::sim::SimResult;
use crate::topology::NodeId;
use crate::Scalar;

/// State fractions must sum to one within this tolerance.
pub const FRACTION_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("node {node}: state fractions sum to {sum}, expected 1")]
    FractionsDoNotClose { node: NodeId, sum: f64 },
    #[error("power profile currents must be non-negative")]
    NegativeCurrent,
}

/// Radio currents in milliamps.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerProfile {
    pub i_tx_ma: f64,
    pub i_listen_ma: f64,
    pub i_sleep_ma: f64,
}

impl Default for PowerProfile {
    /// Representative low-energy radio figures at high transmit power.
    fn default() -> Self {
        Self { i_tx_ma: 16.0, i_listen_ma: 6.0, i_sleep_ma: 0.003 }
    }
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), MetricsError> {
        if self.i_tx_ma < 0.0 || self.i_listen_ma < 0.0 || self.i_sleep_ma < 0.0 {
            return Err(MetricsError::NegativeCurrent);
        }
        Ok(())
    }

    /// True when `i_tx >= i_listen >= i_sleep`; a profile breaking the order is
    /// still usable but probably mistyped.
    pub fn is_ordered(&self) -> bool {
        self.i_tx_ma >= self.i_listen_ma && self.i_listen_ma >= self.i_sleep_ma
    }

    /// Average current for the given time fractions.
    pub fn average_current(&self, tx: f64, listen: f64, sleep: f64) -> f64 {
        tx * self.i_tx_ma + listen * self.i_listen_ma + sleep * self.i_sleep_ma
    }
}

/// Delivered over sent, summed over destinations and sources. With a single
/// sink the destination sum has one term.
pub fn network_pdr(result: &SimResult) -> Option<f64> {
    let received = result.total_delivered();
    let sent = result.total_sent();
    (sent > 0).then(|| received as f64 / sent as f64)
}

/// Percentage of each source's packets that reached the sink, indexed by node
/// id. The sink and sources that sent nothing are `None`.
pub fn per_node_pdr(result: &SimResult) -> Vec<Option<f64>> {
    result
        .nodes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if NodeId(i) == result.sink || s.app_sent == 0 {
                None
            } else {
                Some(s.delivered as f64 * 100.0 / s.app_sent as f64)
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayLoadStats {
    /// Forwarded frames per relay, ascending relay id.
    pub loads: Vec<(NodeId, u64)>,
    pub mean: f64,
    /// Population standard deviation over mean; zero when all loads are equal.
    pub cv: f64,
}

pub fn coefficient_of_variation(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var == 0.0 {
        Some(0.0)
    } else {
        Some(var.sqrt() / mean)
    }
}

pub fn relay_load_stats<T: Scalar>(result: &SimResult, assignment: &RelayAssignment<T>) -> Option<RelayLoadStats> {
    let loads: Vec<(NodeId, u64)> =
        assignment.relays().into_iter().map(|r| (r, result.nodes[r.0].relayed as u64)).collect();
    let values: Vec<f64> = loads.iter().map(|&(_, l)| l as f64).collect();
    let cv = coefficient_of_variation(&values)?;
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Some(RelayLoadStats { loads, mean, cv })
}

/// Average current per node in milliamps, weighting each state's current by
/// the fraction of simulated time spent in it.
pub fn power(result: &SimResult, profile: &PowerProfile) -> Result<Vec<f64>, MetricsError> {
    profile.validate()?;
    result
        .nodes
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let sum = s.tx_fraction + s.listen_fraction + s.sleep_fraction;
            if (sum - 1.0).abs() > FRACTION_TOLERANCE {
                return Err(MetricsError::FractionsDoNotClose { node: NodeId(i), sum });
            }
            Ok(profile.average_current(s.tx_fraction, s.listen_fraction, s.sleep_fraction))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub network_pdr: Option<f64>,
    pub per_node_pdr: Vec<Option<f64>>,
    pub relay_loads: Option<RelayLoadStats>,
    pub power_ma: Vec<f64>,
    pub is_relay: Vec<bool>,
    pub sink: NodeId,
    pub app_sent: Vec<u32>,
    pub delivered: Vec<u32>,
    pub relayed: Vec<u32>,
}

impl MetricsReport {
    pub fn compute<T: Scalar>(
        result: &SimResult,
        assignment: &RelayAssignment<T>,
        profile: &PowerProfile,
    ) -> Result<Self, MetricsError> {
        Ok(Self {
            network_pdr: network_pdr(result),
            per_node_pdr: per_node_pdr(result),
            relay_loads: relay_load_stats(result, assignment),
            power_ma: power(result, profile)?,
            is_relay: assignment.is_relay.clone(),
            sink: result.sink,
            app_sent: result.nodes.iter().map(|s| s.app_sent).collect(),
            delivered: result.nodes.iter().map(|s| s.delivered).collect(),
            relayed: result.nodes.iter().map(|s| s.relayed).collect(),
        })
    }

    pub fn relay_load_cv(&self) -> Option<f64> {
        self.relay_loads.as_ref().map(|l| l.cv)
    }

    /// Mean average current over relays; `None` without relays.
    pub fn mean_relay_power_ma(&self) -> Option<f64> {
        let relay: Vec<f64> = self.power_ma.iter().zip(&self.is_relay).filter(|(_, &r)| r).map(|(&p, _)| p).collect();
        (!relay.is_empty()).then(|| relay.iter().sum::<f64>() / relay.len() as f64)
    }

    pub fn role(&self, node: NodeId) -> &'static str {
        if node == self.sink {
            "sink"
        } else if self.is_relay[node.0] {
            "relay"
        } else {
            "barrel"
        }
    }

    /// One row per node plus a trailing summary row. Missing values are empty
    /// cells.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node_id", "role", "app_sent", "delivered", "pdr_pct", "relayed", "power_ma"]).unwrap();
        for i in 0..self.power_ma.len() {
            w.write_record([
                i.to_string(),
                self.role(NodeId(i)).to_string(),
                self.app_sent[i].to_string(),
                self.delivered[i].to_string(),
                fmt_opt(self.per_node_pdr[i], 4),
                self.relayed[i].to_string(),
                format!("{:.6}", self.power_ma[i]),
            ])
            .unwrap();
        }
        w.write_record(["network_pdr", "relay_load_cv", "mean_relay_power_ma", "", "", "", ""]).unwrap();
        w.write_record([
            fmt_opt(self.network_pdr, 6),
            fmt_opt(self.relay_load_cv(), 6),
            fmt_opt(self.mean_relay_power_ma(), 6),
            String::new(),
            String::new(),
            String::new(),
            String::new(),
        ])
        .unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

pub(crate) fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}
