//! Relay-node selection.
//!
//! [`crns_select`] is the clustering-based scheme: every barrel outside sink
//! range picks, in ascending id order, the neighbor with the best
//! `degree - uses - distance / R` score, and each pick costs the chosen relay
//! one point of score. [`all_relays`], [`random_relays`] and [`knn_relays`]
//! are the comparison baselines.

use std::collections::{BTreeMap, VecDeque};
use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::topology::{NodeId, Topology};
use crate::Scalar;

/// Absolute tolerance under which two adjusted scores count as tied.
pub const TIE_TOLERANCE: f64 = 1e-9;

/// Round cap for the k-means refinement used by [`knn_relays`].
pub const KNN_MAX_ROUNDS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RelayError {
    #[error("requested {requested} relays but the topology has only {barrels} barrels")]
    CountExceedsBarrels { requested: usize, barrels: usize },
    #[error("k must be in 1..={barrels}, got {k}")]
    InvalidK { k: usize, barrels: usize },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Crns,
    All,
    Random,
    Knn,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Crns, Algorithm::All, Algorithm::Random, Algorithm::Knn];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Crns => "crns",
            Algorithm::All => "all",
            Algorithm::Random => "random",
            Algorithm::Knn => "knn",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "crns" => Ok(Algorithm::Crns),
            "all" => Ok(Algorithm::All),
            "random" => Ok(Algorithm::Random),
            "knn" => Ok(Algorithm::Knn),
            other => Err(format!("unknown algorithm `{other}` (expected crns, all, random or knn)")),
        }
    }
}

/// How the distance term enters the clustering score.
#[derive(Copy, Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrnsVariant {
    /// Distance penalty applies only to the current selecting node's
    /// comparison; only the per-pick decrement persists.
    #[default]
    Transient,
    /// Distance penalty is subtracted from the shared score of every
    /// candidate and persists across selecting nodes.
    Persistent,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RelayAssignment<T> {
    pub algorithm: Algorithm,
    pub is_relay: Vec<bool>,
    pub chosen_relay: Vec<Option<NodeId>>,
    /// Persistent scores after selection; only set for the clustering scheme.
    pub final_scores: Option<Vec<T>>,
}

impl<T: Scalar> RelayAssignment<T> {
    fn empty(algorithm: Algorithm, n: usize) -> Self {
        Self { algorithm, is_relay: vec![false; n], chosen_relay: vec![None; n], final_scores: None }
    }

    pub fn relays(&self) -> Vec<NodeId> {
        self.is_relay.iter().enumerate().filter(|(_, &r)| r).map(|(i, _)| NodeId(i)).collect()
    }

    pub fn relay_count(&self) -> usize {
        self.is_relay.iter().filter(|&&r| r).count()
    }

    pub fn is_relay(&self, node: NodeId) -> bool {
        self.is_relay[node.0]
    }

    /// CSV table with columns `node_id,is_relay,chosen_relay,final_score`.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["node_id", "is_relay", "chosen_relay", "final_score"]).unwrap();
        for i in 0..self.is_relay.len() {
            let chosen = self.chosen_relay[i].map(|r| r.to_string()).unwrap_or_default();
            let score = self
                .final_scores
                .as_ref()
                .map(|s| format!("{:.6}", s[i].to_f64().unwrap_or(f64::NAN)))
                .unwrap_or_default();
            w.write_record([i.to_string(), (self.is_relay[i] as u8).to_string(), chosen, score]).unwrap();
        }
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }
}

/// Lowest id among the candidates whose score is within [`TIE_TOLERANCE`]
/// of the maximum.
pub fn argmax_lowest_id<T: Scalar>(candidates: &[(NodeId, T)]) -> Option<NodeId> {
    let max = candidates.iter().map(|&(_, s)| s).reduce(T::max)?;
    let floor = max - T::lit(TIE_TOLERANCE);
    candidates.iter().filter(|&&(_, s)| s >= floor).map(|&(id, _)| id).min()
}

/// Clustering-based relay selection with transient distance adjustment.
pub fn crns_select<T: Scalar>(topology: &Topology<T>) -> RelayAssignment<T> {
    crns_select_with(topology, CrnsVariant::Transient)
}

pub fn crns_select_with<T: Scalar>(topology: &Topology<T>, variant: CrnsVariant) -> RelayAssignment<T> {
    let n = topology.len();
    let range = topology.range();
    let mut out = RelayAssignment::empty(Algorithm::Crns, n);
    let mut score: Vec<T> = topology.neighbor_degrees().into_iter().map(|d| T::from_usize(d).unwrap()).collect();
    let mut candidates = Vec::new();

    for i in topology.barrels() {
        if topology.in_sink_range(i) {
            continue;
        }
        candidates.clear();
        for j in topology.neighbors(i) {
            let penalty = topology.distance(i, j) / range;
            let adjusted = match variant {
                CrnsVariant::Transient => score[j.0] - penalty,
                CrnsVariant::Persistent => {
                    score[j.0] = score[j.0] - penalty;
                    score[j.0]
                }
            };
            candidates.push((j, adjusted));
        }
        if let Some(r) = argmax_lowest_id(&candidates) {
            out.is_relay[r.0] = true;
            out.chosen_relay[i.0] = Some(r);
            score[r.0] = score[r.0] - T::one();
        }
    }
    out.final_scores = Some(score);
    out
}

/// Every barrel relays.
pub fn all_relays<T: Scalar>(topology: &Topology<T>) -> RelayAssignment<T> {
    let mut out = RelayAssignment::empty(Algorithm::All, topology.len());
    for b in topology.barrels() {
        out.is_relay[b.0] = true;
    }
    attach_nearest(topology, &mut out);
    out
}

/// `count` distinct barrels drawn uniformly with a seeded generator.
pub fn random_relays<T: Scalar>(
    topology: &Topology<T>,
    count: usize,
    seed: u64,
) -> Result<RelayAssignment<T>, RelayError> {
    let barrels: Vec<NodeId> = topology.barrels().collect();
    if count > barrels.len() {
        return Err(RelayError::CountExceedsBarrels { requested: count, barrels: barrels.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = RelayAssignment::empty(Algorithm::Random, topology.len());
    for idx in index::sample(&mut rng, barrels.len(), count).into_iter() {
        out.is_relay[barrels[idx].0] = true;
    }
    attach_nearest(topology, &mut out);
    Ok(out)
}

/// Position clustering into `k` groups; the barrel closest to each cluster
/// centroid relays for its cluster.
pub fn knn_relays<T: Scalar>(topology: &Topology<T>, k: usize, seed: u64) -> Result<RelayAssignment<T>, RelayError> {
    let barrels: Vec<NodeId> = topology.barrels().collect();
    if k == 0 || k > barrels.len() {
        return Err(RelayError::InvalidK { k, barrels: barrels.len() });
    }
    let clusters = kmeans(topology, &barrels, k, seed);

    let mut out = RelayAssignment::empty(Algorithm::Knn, topology.len());
    let mut head: Vec<Option<NodeId>> = vec![None; k];
    for (c, centroid) in clusters.centroids.iter().enumerate() {
        let mut best: Option<(NodeId, T)> = None;
        for (bi, &b) in barrels.iter().enumerate() {
            if clusters.membership[bi] != c {
                continue;
            }
            let p = topology.position(b);
            let d = (p.x - centroid.0).hypot(p.y - centroid.1);
            // barrels are visited in ascending id, so strict `<` keeps the lowest id on ties
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((b, d));
            }
        }
        if let Some((b, _)) = best {
            head[c] = Some(b);
            out.is_relay[b.0] = true;
        }
    }

    for (bi, &b) in barrels.iter().enumerate() {
        if topology.in_sink_range(b) {
            continue;
        }
        out.chosen_relay[b.0] = match head[clusters.membership[bi]] {
            Some(h) if topology.is_neighbor(b, h) => Some(h),
            _ => nearest_relay(topology, &out.is_relay, b),
        };
    }
    Ok(out)
}

struct Clusters<T> {
    centroids: Vec<(T, T)>,
    /// Cluster index per barrel, aligned with the barrel list.
    membership: Vec<usize>,
}

fn kmeans<T: Scalar>(topology: &Topology<T>, barrels: &[NodeId], k: usize, seed: u64) -> Clusters<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seeds: Vec<usize> = index::sample(&mut rng, barrels.len(), k).into_vec();
    seeds.sort_unstable();
    let points: Vec<(T, T)> = barrels
        .iter()
        .map(|&b| {
            let p = topology.position(b);
            (p.x, p.y)
        })
        .collect();
    let mut centroids: Vec<(T, T)> = seeds.iter().map(|&s| points[s]).collect();
    let mut membership = vec![usize::MAX; points.len()];

    for _ in 0..KNN_MAX_ROUNDS {
        let mut changed = false;
        for (pi, p) in points.iter().enumerate() {
            let mut best = 0;
            let mut best_d = T::infinity();
            for (c, q) in centroids.iter().enumerate() {
                let d = (p.0 - q.0).hypot(p.1 - q.1);
                if d < best_d {
                    best = c;
                    best_d = d;
                }
            }
            if membership[pi] != best {
                membership[pi] = best;
                changed = true;
            }
        }
        if !changed {
            break;
        }
        let mut sums = vec![(T::zero(), T::zero(), 0usize); k];
        for (pi, p) in points.iter().enumerate() {
            let s = &mut sums[membership[pi]];
            s.0 = s.0 + p.0;
            s.1 = s.1 + p.1;
            s.2 += 1;
        }
        for (c, (sx, sy, cnt)) in sums.into_iter().enumerate() {
            // empty clusters keep their previous centroid
            if cnt > 0 {
                let cnt = T::from_usize(cnt).unwrap();
                centroids[c] = (sx / cnt, sy / cnt);
            }
        }
    }
    Clusters { centroids, membership }
}

fn nearest_relay<T: Scalar>(topology: &Topology<T>, is_relay: &[bool], node: NodeId) -> Option<NodeId> {
    let mut best: Option<(NodeId, T)> = None;
    for j in topology.neighbors(node) {
        if !is_relay[j.0] {
            continue;
        }
        let d = topology.distance(node, j);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((j, d));
        }
    }
    best.map(|(j, _)| j)
}

/// Out-of-sink-range barrels attach to their nearest in-range relay.
fn attach_nearest<T: Scalar>(topology: &Topology<T>, out: &mut RelayAssignment<T>) {
    for b in topology.barrels() {
        if !topology.in_sink_range(b) {
            out.chosen_relay[b.0] = nearest_relay(topology, &out.is_relay, b);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    SinkIsRelay,
    SinkChoseRelay,
    InRangeNodeChoseRelay(NodeId),
    ChosenNotNeighbor { node: NodeId, relay: NodeId },
    ChosenNotRelay { node: NodeId, relay: NodeId },
    SizeMismatch { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ValidationReport {
    /// Barrels with no path to the sink over hops that end at a relay or the sink.
    pub isolated: Vec<NodeId>,
    pub relay_count: usize,
    /// Direct clients per relay (nodes whose `chosen_relay` is that relay).
    pub clients: BTreeMap<NodeId, Vec<NodeId>>,
    /// Structural inconsistencies; empty for a well-formed assignment.
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_connected(&self) -> bool {
        self.isolated.is_empty()
    }
}

pub fn validate_assignment<T: Scalar>(topology: &Topology<T>, assignment: &RelayAssignment<T>) -> ValidationReport {
    let n = topology.len();
    let sink = topology.sink();
    let mut violations = Vec::new();
    if assignment.is_relay.len() != n || assignment.chosen_relay.len() != n {
        violations.push(Violation::SizeMismatch {
            expected: n,
            got: assignment.is_relay.len().min(assignment.chosen_relay.len()),
        });
        return ValidationReport {
            isolated: topology.barrels().collect(),
            relay_count: 0,
            clients: BTreeMap::new(),
            violations,
        };
    }
    if assignment.is_relay[sink.0] {
        violations.push(Violation::SinkIsRelay);
    }
    if assignment.chosen_relay[sink.0].is_some() {
        violations.push(Violation::SinkChoseRelay);
    }

    let mut clients: BTreeMap<NodeId, Vec<NodeId>> = assignment.relays().into_iter().map(|r| (r, Vec::new())).collect();
    for node in topology.barrels() {
        let Some(r) = assignment.chosen_relay[node.0] else { continue };
        if topology.in_sink_range(node) {
            violations.push(Violation::InRangeNodeChoseRelay(node));
        }
        if r.0 >= n || !topology.is_neighbor(node, r) {
            violations.push(Violation::ChosenNotNeighbor { node, relay: r });
        }
        if r.0 >= n || !assignment.is_relay[r.0] {
            violations.push(Violation::ChosenNotRelay { node, relay: r });
        }
        clients.entry(r).or_default().push(node);
    }

    // reverse search from the sink over edges u -> v with v a relay or the sink
    let mut reached = vec![false; n];
    reached[sink.0] = true;
    let mut queue = VecDeque::from([sink]);
    while let Some(v) = queue.pop_front() {
        if v != sink && !assignment.is_relay[v.0] {
            continue;
        }
        for u in topology.neighbors(v) {
            if !reached[u.0] {
                reached[u.0] = true;
                queue.push_back(u);
            }
        }
    }
    let isolated = topology.barrels().filter(|b| !reached[b.0]).collect();

    ValidationReport { isolated, relay_count: assignment.relay_count(), clients, violations }
}
