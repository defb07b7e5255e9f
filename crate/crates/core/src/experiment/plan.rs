//! Experiment plans and their TOML configuration schema.
//!
//! ```toml
//! [layout]
//! preset = "fdot_45mph"            # or an explicit segment list:
//! # segments = [{ kind = "taper", length = "540ft", spacing = "36ft" }]
//! # sink = "start" | "end" | { chainage = "100m" }
//! # lateral_offset = "3m"
//!
//! [scenario]
//! sim_time_s = 20
//! ttl = 127
//! range = "100m"
//! tx_power_dbm = 20
//! repeat_policy = "distance_scaled"  # or { fixed = 2 }
//!
//! [channel]
//! n_adv_channels = 3
//! frame_duration_us = 2000
//! adv_jitter_ms = 1.0
//! reception = "collision_only"       # or { collision_plus_loss = 0.05 }
//!
//! [power]
//! i_tx_ma = 16.0
//! i_listen_ma = 6.0
//! i_sleep_ma = 0.003
//!
//! [plan]
//! algorithms = ["crns", "all", "random", "knn"]
//! rates = [1, 4]
//! seeds = { base = 1, count = 20 }   # or an explicit list
//! output_dir = "out"
//! workers = 4
//! [plan.overrides.all]
//! range = "150m"
//! ```
//!
//! Lengths accept plain numbers (meters) or strings with an `m` or `ft`
//! suffix. Omitted keys take the values of the `paper` preset.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::de::{self, Deserializer};
use serde::Deserialize;

use super::PlanError;
use crate::metrics::PowerProfile;
use crate::relay::{Algorithm, CrnsVariant};
use crate::sim::{ChannelConfig, RepeatPolicy, ScenarioConfig};
use crate::topology::{LayoutSpec, Segment, SegmentKind, SinkPlacement, FOOT};

/// Channel parameters of the `paper` preset, fitted by least squares to the
/// target delivery ratios in `examples/calibrate.rs`.
pub fn calibrated_channel() -> ChannelConfig {
    ChannelConfig { frame_duration_us: 2000, adv_jitter_ms: 1.0, ..ChannelConfig::default() }
}

pub const PRESETS: &[(&str, &str)] = &[
    ("paper", "30 barrels + sink over 1140 ft, 4 algorithms, rates 1 and 4 pkt/s, 20 seeds, all-relays at 150 m"),
    ("smoke", "paper layout, crns and all only, 1 pkt/s, 2 seeds, 5 s runs"),
];

/// A length in meters; deserializes from a number (meters) or a string with
/// an `m`/`ft` suffix.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Meters(pub f64);

impl Meters {
    pub fn parse(text: &str) -> Result<Self, String> {
        let t = text.trim();
        let (num, scale) = if let Some(v) = t.strip_suffix("ft") {
            (v, FOOT)
        } else if let Some(v) = t.strip_suffix("feet") {
            (v, FOOT)
        } else if let Some(v) = t.strip_suffix('m') {
            (v, 1.0)
        } else {
            return Err(format!("length `{t}` needs a unit suffix (m or ft)"));
        };
        let v: f64 = num.trim().parse().map_err(|_| format!("invalid length `{t}`"))?;
        Ok(Meters(v * scale))
    }
}

impl<'de> Deserialize<'de> for Meters {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Meters(v)),
            Raw::Int(v) => Ok(Meters(v as f64)),
            Raw::Text(s) => Meters::parse(&s).map_err(de::Error::custom),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SeedSpec {
    List(Vec<u64>),
    Range { base: u64, count: u64 },
}

impl SeedSpec {
    /// Seeds are `base + index` so that extending the count keeps old runs.
    pub fn seeds(&self) -> Vec<u64> {
        match self {
            SeedSpec::List(v) => v.clone(),
            SeedSpec::Range { base, count } => (0..*count).map(|i| base + i).collect(),
        }
    }
}

impl<'de> Deserialize<'de> for SeedSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            List(Vec<u64>),
            Range { base: u64, count: u64 },
        }
        Ok(match Raw::deserialize(d)? {
            Raw::List(v) => SeedSpec::List(v),
            Raw::Range { base, count } => SeedSpec::Range { base, count },
        })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AlgorithmOverrides {
    pub range_m: Option<f64>,
    pub repeat_policy: Option<RepeatPolicy>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentPlan {
    /// Preset name or `custom`.
    pub layout_name: String,
    pub layout: LayoutSpec<f64>,
    /// Base scenario; rate, range, repeat policy and seed are set per cell.
    pub scenario: ScenarioConfig,
    pub power: PowerProfile,
    pub algorithms: Vec<Algorithm>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    pub overrides: BTreeMap<Algorithm, AlgorithmOverrides>,
    pub crns_variant: CrnsVariant,
    /// Relay budget for the random baseline; defaults to the C-RNS relay count.
    pub random_count: Option<usize>,
    /// Cluster count for the KNN baseline; defaults to the C-RNS relay count.
    pub knn_k: Option<usize>,
    pub output_dir: PathBuf,
    pub workers: usize,
}

impl ExperimentPlan {
    pub fn paper() -> Self {
        let mut overrides = BTreeMap::new();
        overrides.insert(Algorithm::All, AlgorithmOverrides { range_m: Some(150.0), repeat_policy: None });
        Self {
            layout_name: "fdot_45mph".into(),
            layout: LayoutSpec::fdot_45mph(),
            scenario: ScenarioConfig {
                sim_time_s: 20.0,
                ttl: 127,
                range_m: 100.0,
                tx_power_dbm: 20.0,
                channel: calibrated_channel(),
                ..ScenarioConfig::default()
            },
            power: PowerProfile::default(),
            algorithms: Algorithm::ALL.to_vec(),
            rates: vec![1.0, 4.0],
            seeds: SeedSpec::Range { base: 1, count: 20 }.seeds(),
            overrides,
            crns_variant: CrnsVariant::Transient,
            random_count: None,
            knn_k: None,
            output_dir: PathBuf::from("out"),
            workers: 1,
        }
    }

    pub fn preset(name: &str) -> Result<Self, PlanError> {
        match name {
            "paper" => Ok(Self::paper()),
            "smoke" => {
                let mut p = Self::paper();
                p.algorithms = vec![Algorithm::Crns, Algorithm::All];
                p.rates = vec![1.0];
                p.seeds = vec![1, 2];
                p.scenario.sim_time_s = 5.0;
                Ok(p)
            }
            other => Err(PlanError::invalid("preset", format!("unknown preset `{other}`"))),
        }
    }

    pub fn range_for(&self, algorithm: Algorithm) -> f64 {
        self.overrides.get(&algorithm).and_then(|o| o.range_m).unwrap_or(self.scenario.range_m)
    }

    pub fn repeat_policy_for(&self, algorithm: Algorithm) -> RepeatPolicy {
        self.overrides.get(&algorithm).and_then(|o| o.repeat_policy).unwrap_or(self.scenario.repeat_policy)
    }

    /// Scenario for one matrix cell.
    pub fn cell_config(&self, algorithm: Algorithm, rate: f64, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            app_rate: rate,
            range_m: self.range_for(algorithm),
            repeat_policy: self.repeat_policy_for(algorithm),
            seed,
            ..self.scenario.clone()
        }
    }

    /// Replaces the seed list with `count` seeds starting at `base`.
    pub fn rebase_seeds(&mut self, base: u64) {
        let count = self.seeds.len() as u64;
        self.seeds = SeedSpec::Range { base, count }.seeds();
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.algorithms.is_empty() {
            return Err(PlanError::invalid("plan.algorithms", "must not be empty"));
        }
        if self.rates.is_empty() {
            return Err(PlanError::invalid("plan.rates", "must not be empty"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
            return Err(PlanError::invalid("plan.rates", format!("rates must be positive, got {r}")));
        }
        if self.seeds.is_empty() {
            return Err(PlanError::invalid("plan.seeds", "must not be empty"));
        }
        if self.workers == 0 {
            return Err(PlanError::invalid("plan.workers", "must be at least 1"));
        }
        if self.layout.segments.is_empty() {
            return Err(PlanError::invalid("layout.segments", "must not be empty"));
        }
        self.layout.validate().map_err(|e| PlanError::invalid("layout.segments", e.to_string()))?;
        for alg in &self.algorithms {
            let range = self.range_for(*alg);
            let cfg = ScenarioConfig { range_m: range, ..self.cell_config(*alg, self.rates[0], self.seeds[0]) };
            cfg.validate().map_err(|e| PlanError::invalid("scenario", e.to_string()))?;
        }
        self.power.validate().map_err(|e| PlanError::invalid("power", e.to_string()))?;
        Ok(())
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct PlanDoc {
    preset: Option<String>,
    layout: Option<LayoutDoc>,
    scenario: Option<ScenarioDoc>,
    channel: Option<ChannelConfig>,
    power: Option<PowerProfile>,
    plan: Option<PlanSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LayoutDoc {
    preset: Option<String>,
    segments: Option<Vec<SegmentDoc>>,
    sink: Option<SinkDoc>,
    lateral_offset: Option<Meters>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentDoc {
    kind: SegmentKind,
    length: Meters,
    spacing: Meters,
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum SinkDoc {
    Start,
    End,
    Chainage(Meters),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioDoc {
    sim_time_s: Option<f64>,
    ttl: Option<u8>,
    range: Option<Meters>,
    tx_power_dbm: Option<f64>,
    repeat_policy: Option<RepeatPolicy>,
    crns_variant: Option<CrnsVariant>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlanSection {
    algorithms: Option<Vec<Algorithm>>,
    rates: Option<Vec<f64>>,
    seeds: Option<SeedSpec>,
    output_dir: Option<PathBuf>,
    workers: Option<usize>,
    random_count: Option<usize>,
    knn_k: Option<usize>,
    overrides: Option<BTreeMap<Algorithm, OverrideDoc>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct OverrideDoc {
    range: Option<Meters>,
    repeat_policy: Option<RepeatPolicy>,
}

/// Parses a TOML plan document, filling omitted keys from the `paper` preset
/// (or the preset named by a top-level `preset` key).
pub fn parse_plan(text: &str) -> Result<ExperimentPlan, PlanError> {
    let doc: PlanDoc = toml::from_str(text).map_err(|e| PlanError::Parse(e.to_string()))?;
    let mut plan = match &doc.preset {
        Some(name) => ExperimentPlan::preset(name)?,
        None => ExperimentPlan::paper(),
    };

    if let Some(layout) = doc.layout {
        if let Some(name) = layout.preset {
            plan.layout = LayoutSpec::preset(&name).map_err(|e| PlanError::invalid("layout.preset", e.to_string()))?;
            plan.layout_name = name;
        }
        if let Some(segments) = layout.segments {
            plan.layout.segments = segments
                .into_iter()
                .map(|s| Segment { kind: s.kind, length: s.length.0, spacing: s.spacing.0 })
                .collect();
            plan.layout_name = "custom".into();
        }
        if let Some(sink) = layout.sink {
            plan.layout.sink = match sink {
                SinkDoc::Start => SinkPlacement::Start,
                SinkDoc::End => SinkPlacement::End,
                SinkDoc::Chainage(m) => SinkPlacement::Chainage(m.0),
            };
        }
        if let Some(off) = layout.lateral_offset {
            plan.layout.lateral_offset = off.0;
        }
    }

    if let Some(s) = doc.scenario {
        let sc = &mut plan.scenario;
        sc.sim_time_s = s.sim_time_s.unwrap_or(sc.sim_time_s);
        sc.ttl = s.ttl.unwrap_or(sc.ttl);
        sc.range_m = s.range.map(|m| m.0).unwrap_or(sc.range_m);
        sc.tx_power_dbm = s.tx_power_dbm.unwrap_or(sc.tx_power_dbm);
        sc.repeat_policy = s.repeat_policy.unwrap_or(sc.repeat_policy);
        if let Some(v) = s.crns_variant {
            plan.crns_variant = v;
        }
    }
    if let Some(ch) = doc.channel {
        plan.scenario.channel = ch;
    }
    if let Some(p) = doc.power {
        plan.power = p;
    }
    if let Some(p) = doc.plan {
        if let Some(a) = p.algorithms {
            plan.algorithms = a;
        }
        if let Some(r) = p.rates {
            plan.rates = r;
        }
        if let Some(s) = p.seeds {
            plan.seeds = s.seeds();
        }
        if let Some(o) = p.output_dir {
            plan.output_dir = o;
        }
        if let Some(w) = p.workers {
            plan.workers = w;
        }
        plan.random_count = p.random_count.or(plan.random_count);
        plan.knn_k = p.knn_k.or(plan.knn_k);
        if let Some(ov) = p.overrides {
            for (alg, o) in ov {
                let entry = plan.overrides.entry(alg).or_default();
                if let Some(r) = o.range {
                    entry.range_m = Some(r.0);
                }
                if let Some(rp) = o.repeat_policy {
                    entry.repeat_policy = Some(rp);
                }
            }
        }
    }
    plan.validate()?;
    Ok(plan)
}

impl fmt::Display for ExperimentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let algs: Vec<&str> = self.algorithms.iter().map(|a| a.as_str()).collect();
        write!(
            f,
            "layout {} | algorithms {} | rates {:?} | {} seeds | {} s",
            self.layout_name,
            algs.join(","),
            self.rates,
            self.seeds.len(),
            self.scenario.sim_time_s
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::build_layout;

    #[test]
    fn paper_preset_resolves() {
        let plan = parse_plan("preset = \"paper\"").unwrap();
        let topo = build_layout(&plan.layout, plan.range_for(Algorithm::Crns)).unwrap();
        assert_eq!(topo.len(), 31);
        assert_eq!(plan.algorithms.len(), 4);
        assert_eq!(plan.rates, vec![1.0, 4.0]);
        assert_eq!(plan.seeds.len(), 20);
        assert_eq!(plan.range_for(Algorithm::All), 150.0);
        for a in [Algorithm::Crns, Algorithm::Random, Algorithm::Knn] {
            assert_eq!(plan.range_for(a), 100.0);
        }
        assert_eq!(parse_plan("").unwrap(), plan);
    }

    #[test]
    fn empty_algorithms_rejected() {
        let err = parse_plan("[plan]\nalgorithms = []\n").unwrap_err();
        assert!(err.to_string().contains("plan.algorithms"), "{err}");
    }

    #[test]
    fn zero_rate_rejected() {
        let err = parse_plan("[plan]\nrates = [0]\n").unwrap_err();
        assert!(err.to_string().contains("plan.rates"), "{err}");
    }

    #[test]
    fn unknown_key_reports_location() {
        let err = parse_plan("[scenario]\nttl = 3\nbogus = 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("bogus") && msg.contains("line 3"), "{msg}");
    }

    #[test]
    fn feet_suffix_and_custom_layout() {
        let text = r#"
[layout]
segments = [{ kind = "work", length = "100ft", spacing = "10 ft" }]
sink = { chainage = "50m" }
lateral_offset = 2

[scenario]
range = "328.084ft"
repeat_policy = { fixed = 2 }

[channel]
reception = { collision_plus_loss = 0.1 }

[plan]
algorithms = ["crns"]
seeds = [7, 9]
[plan.overrides.crns]
range = "120m"
"#;
        let plan = parse_plan(text).unwrap();
        assert_eq!(plan.layout_name, "custom");
        assert!((plan.layout.segments[0].length - 30.48).abs() < 1e-9);
        assert!((plan.scenario.range_m - 100.0).abs() < 1e-5);
        assert_eq!(plan.layout.sink, SinkPlacement::Chainage(50.0));
        assert_eq!(plan.seeds, vec![7, 9]);
        assert_eq!(plan.range_for(Algorithm::Crns), 120.0);
        assert_eq!(plan.repeat_policy_for(Algorithm::Crns), RepeatPolicy::Fixed(2));
    }

    #[test]
    fn bare_length_string_rejected() {
        assert!(Meters::parse("12").is_err());
        assert_eq!(Meters::parse("10m").unwrap(), Meters(10.0));
    }

    #[test]
    fn seed_range_is_base_plus_index() {
        assert_eq!(SeedSpec::Range { base: 5, count: 3 }.seeds(), vec![5, 6, 7]);
        let mut p = ExperimentPlan::paper();
        p.rebase_seeds(100);
        assert_eq!(p.seeds.first(), Some(&100));
        assert_eq!(p.seeds.len(), 20);
    }
}
