use serde::{Deserialize, Serialize};

use super::SimError;

/// How many network-layer copies a source broadcasts per application packet.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepeatPolicy {
    /// `max(1, ceil(distance_to_sink / R))` copies: farther sources transmit more often.
    DistanceScaled,
    Fixed(u32),
}

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReceptionModel {
    CollisionOnly,
    /// Collisions plus independent loss with the given probability.
    CollisionPlusLoss(f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelConfig {
    pub n_adv_channels: u8,
    /// Air time of one advertising frame, microseconds.
    pub frame_duration_us: u64,
    /// Upper bound of the random delay before each frame, milliseconds.
    pub adv_jitter_ms: f64,
    pub reception: ReceptionModel,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        Self {
            n_adv_channels: 3,
            frame_duration_us: 400,
            adv_jitter_ms: 10.0,
            reception: ReceptionModel::CollisionOnly,
        }
    }
}

impl ChannelConfig {
    pub fn jitter_us(&self) -> u64 {
        (self.adv_jitter_ms * 1000.0).round() as u64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub sim_time_s: f64,
    pub ttl: u8,
    /// Application packets per second per barrel.
    pub app_rate: f64,
    /// Communication range, meters.
    pub range_m: f64,
    /// Informational only; reception is decided by range.
    pub tx_power_dbm: f64,
    pub repeat_policy: RepeatPolicy,
    pub channel: ChannelConfig,
    pub seed: u64,
    /// Keep at most this many event records; `None` disables the log.
    pub event_log_limit: Option<usize>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            sim_time_s: 20.0,
            ttl: 127,
            app_rate: 1.0,
            range_m: 100.0,
            tx_power_dbm: 20.0,
            repeat_policy: RepeatPolicy::DistanceScaled,
            channel: ChannelConfig::default(),
            seed: 1,
            event_log_limit: None,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |what: &str| Err(SimError::InvalidConfig(what.to_string()));
        if !(self.sim_time_s.is_finite() && self.sim_time_s > 0.0) {
            return bad("sim_time_s must be positive");
        }
        if self.ttl < 1 {
            return bad("ttl must be at least 1");
        }
        if !(self.app_rate.is_finite() && self.app_rate > 0.0) {
            return bad("app_rate must be positive");
        }
        if !(self.range_m.is_finite() && self.range_m > 0.0) {
            return bad("range_m must be positive");
        }
        if let RepeatPolicy::Fixed(0) = self.repeat_policy {
            return bad("fixed repeat count must be at least 1");
        }
        let ch = &self.channel;
        if ch.n_adv_channels < 1 {
            return bad("n_adv_channels must be at least 1");
        }
        if ch.frame_duration_us == 0 {
            return bad("frame_duration_us must be positive");
        }
        if !(ch.adv_jitter_ms.is_finite() && ch.adv_jitter_ms >= 0.0) {
            return bad("adv_jitter_ms must be non-negative");
        }
        if let ReceptionModel::CollisionPlusLoss(p) = ch.reception {
            if !(0.0..=1.0).contains(&p) {
                return bad("loss probability must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn sim_time_us(&self) -> u64 {
        (self.sim_time_s * 1e6).round() as u64
    }
}
