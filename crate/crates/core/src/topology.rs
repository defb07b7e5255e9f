//! Barrel layouts and the range-limited neighbor graph.
//!
//! Barrels are placed along the roadway axis (`x`) at cumulative chainage;
//! ids follow placement order and the sink always takes the last id.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Meters per international foot.
pub const FOOT: f64 = 0.3048;

/// Tolerance (meters) used when deciding whether a barrel already sits on a
/// segment boundary.
const BOUNDARY_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TopologyError {
    #[error("communication range must be positive and finite")]
    InvalidRange,
    #[error("node {0} has a non-finite coordinate")]
    NonFinite(usize),
    #[error("nodes {0} and {1} share identical coordinates")]
    Coincident(usize, usize),
    #[error("sink index {sink} out of bounds for {len} nodes")]
    SinkOutOfBounds { sink: usize, len: usize },
    #[error("segment {index} ({kind}): spacing must be positive, got {spacing}")]
    NonPositiveSpacing { index: usize, kind: SegmentKind, spacing: f64 },
    #[error("segment {index} ({kind}): length must be non-negative and finite, got {length}")]
    InvalidLength { index: usize, kind: SegmentKind, length: f64 },
    #[error("unknown layout preset `{0}`")]
    UnknownPreset(String),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position<T> {
    pub x: T,
    pub y: T,
}

impl<T: Scalar> Position<T> {
    pub fn new(x: T, y: T) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Self) -> T {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    Taper,
    Buffer,
    Work,
}

impl fmt::Display for SegmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SegmentKind::Taper => "taper",
            SegmentKind::Buffer => "buffer",
            SegmentKind::Work => "work",
        })
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment<T> {
    pub kind: SegmentKind,
    /// Segment length in meters.
    pub length: T,
    /// Barrel spacing in meters.
    pub spacing: T,
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SinkPlacement<T> {
    /// Upstream end of the first segment.
    Start,
    /// Downstream end of the last segment.
    End,
    /// Arbitrary chainage in meters.
    Chainage(T),
}

/// Longitudinal lane-closure geometry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct LayoutSpec<T> {
    pub segments: Vec<Segment<T>>,
    #[serde(default = "default_sink")]
    pub sink: SinkPlacement<T>,
    /// Lateral offset of the sink from the barrel line, meters.
    #[serde(default = "default_offset")]
    pub lateral_offset: T,
}

fn default_sink<T>() -> SinkPlacement<T> {
    SinkPlacement::Start
}

fn default_offset<T: Scalar>() -> T {
    T::lit(DEFAULT_SINK_OFFSET)
}

/// Default lateral sink offset. A zero offset would put a `Start` sink on top
/// of the first barrel.
pub const DEFAULT_SINK_OFFSET: f64 = 3.0;

impl<T: Scalar> LayoutSpec<T> {
    pub fn new(segments: Vec<Segment<T>>, sink: SinkPlacement<T>) -> Self {
        Self { segments, sink, lateral_offset: default_offset() }
    }

    /// 45 mph lane closure over 1140 ft: a 540 ft taper at 36 ft spacing,
    /// a 360 ft buffer at 40 ft and a 240 ft work area at 48 ft. Yields 30
    /// barrels; the sink sits at the upstream end of the taper.
    pub fn fdot_45mph() -> Self {
        let ft = |v: f64| T::lit(v * FOOT);
        Self::new(
            vec![
                Segment { kind: SegmentKind::Taper, length: ft(540.0), spacing: ft(36.0) },
                Segment { kind: SegmentKind::Buffer, length: ft(360.0), spacing: ft(40.0) },
                Segment { kind: SegmentKind::Work, length: ft(240.0), spacing: ft(48.0) },
            ],
            SinkPlacement::Start,
        )
    }

    pub fn preset(name: &str) -> Result<Self, TopologyError> {
        match name {
            "fdot_45mph" => Ok(Self::fdot_45mph()),
            other => Err(TopologyError::UnknownPreset(other.to_string())),
        }
    }

    pub fn total_length(&self) -> T {
        self.segments.iter().fold(T::zero(), |acc, s| acc + s.length)
    }

    pub fn validate(&self) -> Result<(), TopologyError> {
        for (index, seg) in self.segments.iter().enumerate() {
            if !(seg.length.is_finite() && seg.length >= T::zero()) {
                return Err(TopologyError::InvalidLength {
                    index,
                    kind: seg.kind,
                    length: seg.length.to_f64().unwrap_or(f64::NAN),
                });
            }
            if !(seg.spacing.is_finite() && seg.spacing > T::zero()) {
                return Err(TopologyError::NonPositiveSpacing {
                    index,
                    kind: seg.kind,
                    spacing: seg.spacing.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        Ok(())
    }

    /// Barrel chainages in placement order.
    pub fn barrel_chainages(&self) -> Result<Vec<T>, TopologyError> {
        self.validate()?;
        let eps = T::lit(BOUNDARY_EPS);
        let mut xs: Vec<T> = Vec::new();
        let mut start = T::zero();
        for seg in &self.segments {
            if seg.length > T::zero() {
                let steps = (seg.length / seg.spacing + T::lit(1e-9)).floor();
                let steps = steps.to_usize().unwrap_or(0);
                for k in 0..=steps {
                    let x = start + seg.spacing * T::from_usize(k).unwrap();
                    if k == 0 && xs.last().is_some_and(|&last| (last - x).abs() < eps) {
                        continue;
                    }
                    xs.push(x);
                }
            }
            start = start + seg.length;
        }
        Ok(xs)
    }
}

/// Builds the barrel topology described by `spec` with communication range
/// `range` (meters). Barrels get ids `0..n` in chainage order; the sink is `n`.
pub fn build_layout<T: Scalar>(spec: &LayoutSpec<T>, range: T) -> Result<Topology<T>, TopologyError> {
    let xs = spec.barrel_chainages()?;
    let sink_x = match spec.sink {
        SinkPlacement::Start => T::zero(),
        SinkPlacement::End => spec.total_length(),
        SinkPlacement::Chainage(c) => c,
    };
    let mut positions: Vec<Position<T>> = xs.into_iter().map(|x| Position::new(x, T::zero())).collect();
    let sink = positions.len();
    positions.push(Position::new(sink_x, spec.lateral_offset));
    Topology::new(positions, NodeId(sink), range)
}

/// Node positions, the sink and the derived unit-disk adjacency.
#[derive(Clone, Debug, PartialEq)]
pub struct Topology<T> {
    positions: Vec<Position<T>>,
    sink: NodeId,
    range: T,
    distance: Vec<T>,
    adjacency: Vec<bool>,
}

impl<T: Scalar> Topology<T> {
    /// Two nodes are neighbors iff `0 < distance < range`.
    pub fn new(positions: Vec<Position<T>>, sink: NodeId, range: T) -> Result<Self, TopologyError> {
        if !(range.is_finite() && range > T::zero()) {
            return Err(TopologyError::InvalidRange);
        }
        let n = positions.len();
        if sink.0 >= n {
            return Err(TopologyError::SinkOutOfBounds { sink: sink.0, len: n });
        }
        if let Some(i) = positions.iter().position(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(TopologyError::NonFinite(i));
        }
        let mut distance = vec![T::zero(); n * n];
        let mut adjacency = vec![false; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = positions[i].distance(&positions[j]);
                if d == T::zero() {
                    return Err(TopologyError::Coincident(i, j));
                }
                let linked = d > T::zero() && d < range;
                distance[i * n + j] = d;
                distance[j * n + i] = d;
                adjacency[i * n + j] = linked;
                adjacency[j * n + i] = linked;
            }
        }
        Ok(Self { positions, sink, range, distance, adjacency })
    }

    /// Barrels at the given `(x, y)` coordinates with the sink appended last.
    pub fn from_coords(barrels: &[(T, T)], sink: (T, T), range: T) -> Result<Self, TopologyError> {
        let mut positions: Vec<Position<T>> = barrels.iter().map(|&(x, y)| Position::new(x, y)).collect();
        let id = positions.len();
        positions.push(Position::new(sink.0, sink.1));
        Self::new(positions, NodeId(id), range)
    }

    /// Same positions and sink with a different communication range.
    pub fn with_range(&self, range: T) -> Result<Self, TopologyError> {
        Self::new(self.positions.clone(), self.sink, range)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn sink(&self) -> NodeId {
        self.sink
    }

    pub fn range(&self) -> T {
        self.range
    }

    pub fn positions(&self) -> &[Position<T>] {
        &self.positions
    }

    pub fn position(&self, id: NodeId) -> Position<T> {
        self.positions[id.0]
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.len()).map(NodeId)
    }

    /// Every node except the sink, ascending id.
    pub fn barrels(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |&n| n != self.sink)
    }

    pub fn barrel_count(&self) -> usize {
        self.len() - 1
    }

    #[inline]
    pub fn distance(&self, a: NodeId, b: NodeId) -> T {
        self.distance[a.0 * self.len() + b.0]
    }

    #[inline]
    pub fn is_neighbor(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency[a.0 * self.len() + b.0]
    }

    /// Neighbors of `node` in ascending id order.
    pub fn neighbors(&self, node: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        let n = self.len();
        let row = &self.adjacency[node.0 * n..(node.0 + 1) * n];
        row.iter().enumerate().filter(|(_, &linked)| linked).map(|(j, _)| NodeId(j))
    }

    pub fn distance_to_sink(&self, node: NodeId) -> T {
        self.distance(node, self.sink)
    }

    /// A barrel is in sink range when it is strictly closer than `range`.
    pub fn in_sink_range(&self, node: NodeId) -> bool {
        node != self.sink && self.distance_to_sink(node) < self.range
    }

    /// Number of in-range neighbors per node (sink included), indexed by id.
    pub fn neighbor_degrees(&self) -> Vec<usize> {
        let n = self.len();
        self.adjacency.chunks(n).map(|row| row.iter().filter(|&&b| b).count()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64], r: f64) -> Topology<f64> {
        let positions = xs.iter().map(|&x| Position::new(x, 0.0)).collect();
        Topology::new(positions, NodeId(xs.len() - 1), r).unwrap()
    }

    #[test]
    fn pair_in_range() {
        let t = line(&[0.0, 90.0], 100.0);
        assert_eq!(t.neighbor_degrees(), vec![1, 1]);
        assert!(!t.is_neighbor(NodeId(0), NodeId(0)));
    }

    #[test]
    fn four_on_a_line() {
        let t = line(&[0.0, 90.0, 180.0, 270.0], 100.0);
        assert_eq!(t.neighbor_degrees(), vec![1, 2, 2, 1]);
    }

    #[test]
    fn range_boundary_is_exclusive() {
        let t = line(&[0.0, 100.0], 100.0);
        assert_eq!(t.neighbor_degrees(), vec![0, 0]);
    }

    #[test]
    fn coincident_nodes_rejected() {
        let err = Topology::new(vec![Position::new(1.0, 1.0), Position::new(1.0, 1.0)], NodeId(1), 10.0);
        assert_eq!(err.unwrap_err(), TopologyError::Coincident(0, 1));
    }

    #[test]
    fn bad_range_and_sink() {
        let p = vec![Position::new(0.0, 0.0), Position::new(1.0, 0.0)];
        assert_eq!(Topology::new(p.clone(), NodeId(1), 0.0).unwrap_err(), TopologyError::InvalidRange);
        assert!(matches!(Topology::new(p, NodeId(2), 5.0), Err(TopologyError::SinkOutOfBounds { .. })));
    }

    #[test]
    fn single_segment_layout() {
        let spec = LayoutSpec::new(
            vec![Segment { kind: SegmentKind::Work, length: 100.0, spacing: 10.0 }],
            SinkPlacement::Start,
        );
        let t = build_layout(&spec, 100.0).unwrap();
        assert_eq!(t.barrel_count(), 11);
        assert_eq!(t.sink(), NodeId(11));
        for (i, p) in t.positions()[..11].iter().enumerate() {
            assert!((p.x - 10.0 * i as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_length_segment_leaves_only_sink() {
        let spec = LayoutSpec::new(
            vec![Segment { kind: SegmentKind::Taper, length: 0.0, spacing: 10.0 }],
            SinkPlacement::Start,
        );
        let t = build_layout(&spec, 100.0).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.sink(), NodeId(0));
    }

    #[test]
    fn non_positive_spacing_rejected() {
        let spec = LayoutSpec::new(
            vec![Segment { kind: SegmentKind::Buffer, length: 10.0, spacing: 0.0 }],
            SinkPlacement::Start,
        );
        assert!(matches!(build_layout(&spec, 100.0), Err(TopologyError::NonPositiveSpacing { index: 0, .. })));
    }

    #[test]
    fn shared_boundaries_not_duplicated() {
        let spec = LayoutSpec::new(
            vec![
                Segment { kind: SegmentKind::Taper, length: 20.0, spacing: 10.0 },
                Segment { kind: SegmentKind::Buffer, length: 15.0, spacing: 5.0 },
            ],
            SinkPlacement::End,
        );
        let xs = spec.barrel_chainages().unwrap();
        assert_eq!(xs, vec![0.0, 10.0, 20.0, 25.0, 30.0, 35.0]);
        // the end sink lands on x = 35 but is laterally offset
        assert!(build_layout(&spec, 50.0).is_ok());
    }

    #[test]
    fn unaligned_boundary_still_gets_a_barrel() {
        let spec = LayoutSpec::new(
            vec![
                Segment { kind: SegmentKind::Taper, length: 25.0, spacing: 10.0 },
                Segment { kind: SegmentKind::Work, length: 10.0, spacing: 10.0 },
            ],
            SinkPlacement::Start,
        );
        assert_eq!(spec.barrel_chainages().unwrap(), vec![0.0, 10.0, 20.0, 25.0, 35.0]);
    }

    #[test]
    fn fdot_preset_has_thirty_barrels() {
        let spec = LayoutSpec::<f64>::fdot_45mph();
        assert!((spec.total_length() - 1140.0 * FOOT).abs() < 1e-9);
        let t = build_layout(&spec, 100.0).unwrap();
        assert_eq!(t.barrel_count(), 30);
        assert_eq!(t.len(), 31);
        assert_eq!(t.sink(), NodeId(30));
        let t32 = build_layout(&LayoutSpec::<f32>::fdot_45mph(), 100.0).unwrap();
        assert_eq!(t32.len(), 31);
    }

    #[test]
    fn unknown_preset() {
        assert!(LayoutSpec::<f64>::preset("nope").is_err());
    }
}
