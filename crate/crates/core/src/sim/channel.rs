//! Broadcast channel: unit-disk reach, half-duplex radios and same-channel
//! collisions between time-overlapping frames.

use rand::Rng;

use super::config::ReceptionModel;
use crate::topology::{NodeId, Topology};
use crate::Scalar;

/// One frame on air over `[start_us, end_us)`.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct AirFrame {
    pub transmitter: NodeId,
    pub channel: u8,
    pub start_us: u64,
    pub end_us: u64,
}

impl AirFrame {
    #[inline]
    pub fn overlaps(&self, other: &AirFrame) -> bool {
        self.start_us < other.end_us && other.start_us < self.end_us
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub enum Outcome {
    Delivered,
    /// Another in-range frame overlapped on the same channel.
    Collided,
    /// The receiver was itself transmitting.
    Busy,
    /// Dropped by the random loss model.
    Lost,
}

/// Outcome of `frame` at `receiver` before random loss. `others` may contain
/// `frame` itself and frames that do not overlap; both are ignored.
pub fn resolve_at<T: Scalar>(
    frame: &AirFrame,
    others: &[AirFrame],
    receiver: NodeId,
    topology: &Topology<T>,
) -> Outcome {
    let mut collided = false;
    for g in others {
        if g == frame || !g.overlaps(frame) {
            continue;
        }
        if g.transmitter == receiver {
            return Outcome::Busy;
        }
        if g.channel == frame.channel && topology.is_neighbor(g.transmitter, receiver) {
            collided = true;
        }
    }
    if collided {
        Outcome::Collided
    } else {
        Outcome::Delivered
    }
}

/// Applies the random part of the reception model to a collision-free outcome.
pub fn apply_loss<R: Rng>(outcome: Outcome, model: &ReceptionModel, rng: &mut R) -> Outcome {
    match (outcome, model) {
        (Outcome::Delivered, ReceptionModel::CollisionPlusLoss(p)) if *p > 0.0 && rng.gen::<f64>() < *p => {
            Outcome::Lost
        }
        (o, _) => o,
    }
}

/// Resolves every frame in `frames` at every in-range node. Results are
/// `(frame index, receiver, outcome)` in frame order, then receiver id order.
pub fn resolve_receptions<T: Scalar, R: Rng>(
    frames: &[AirFrame],
    topology: &Topology<T>,
    model: &ReceptionModel,
    rng: &mut R,
) -> Vec<(usize, NodeId, Outcome)> {
    let mut out = Vec::new();
    for (fi, f) in frames.iter().enumerate() {
        for v in topology.neighbors(f.transmitter) {
            let o = resolve_at(f, frames, v, topology);
            out.push((fi, v, apply_loss(o, model, rng)));
        }
    }
    out
}
