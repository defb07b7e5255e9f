#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use barrelnet::metrics::{self, MetricsReport, PowerProfile};
use barrelnet::relay::{self, Algorithm};
use barrelnet::sim::{self, ChannelConfig, EventKind, PacketKey, ReceptionModel, ScenarioConfig, SimResult};
use barrelnet::RelayAssignment;
use barrelnet::{NodeId, Topology};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

#[derive(Clone, Debug)]
pub struct Scene {
    pub barrels: Vec<(f64, f64)>,
    pub sink: (f64, f64),
    pub range: f64,
}

impl Scene {
    pub fn topology(&self) -> Option<Topology> {
        Topology::from_coords(&self.barrels, self.sink, self.range).ok()
    }
}

/// Barrels and sink scattered over `extent` x 60 m with a random range.
pub fn scene(max_barrels: usize, extent: f64) -> impl Strategy<Value = Scene> {
    (1..=max_barrels, 20.0..200.0f64)
        .prop_flat_map(move |(n, range)| {
            let pt = (0.0..extent, -30.0..30.0f64);
            (proptest::collection::vec(pt.clone(), n), pt, Just(range))
        })
        .prop_map(|(barrels, sink, range)| Scene { barrels, sink, range })
}

/// A roughly linear chain: random gaps, small lateral jitter, sink near the start.
pub fn chain(max_barrels: usize) -> impl Strategy<Value = Scene> {
    (1..=max_barrels, 60.0..150.0f64)
        .prop_flat_map(|(n, range)| {
            (proptest::collection::vec((20.0..120.0f64, -5.0..5.0f64), n), -20.0..20.0f64, Just(range))
        })
        .prop_map(|(gaps, sink_y, range)| {
            let mut x = 0.0;
            let barrels = gaps
                .into_iter()
                .map(|(g, y)| {
                    x += g;
                    (x, y)
                })
                .collect();
            Scene { barrels, sink: (0.0, sink_y), range }
        })
}

pub fn algorithm() -> impl Strategy<Value = Algorithm> {
    prop_oneof![Just(Algorithm::Crns), Just(Algorithm::All), Just(Algorithm::Random), Just(Algorithm::Knn)]
}

/// Relay assignment for `alg`; baselines get the C-RNS relay budget (at least one).
pub fn assign(t: &Topology, alg: Algorithm, seed: u64) -> RelayAssignment {
    let budget = relay::crns_select(t).relay_count().max(1).min(t.barrel_count());
    match alg {
        Algorithm::Crns => relay::crns_select(t),
        Algorithm::All => relay::all_relays(t),
        Algorithm::Random => relay::random_relays(t, budget, seed).unwrap(),
        Algorithm::Knn => relay::knn_relays(t, budget, seed).unwrap(),
    }
}

#[derive(Clone, Debug)]
pub struct SimCase {
    pub scene: Scene,
    pub algorithm: Algorithm,
    pub config: ScenarioConfig,
}

pub fn sim_case() -> impl Strategy<Value = SimCase> {
    (
        chain(8),
        algorithm(),
        prop_oneof![Just(0.5), Just(1.0), Just(2.0), Just(4.0)],
        any::<u64>(),
        1.0..4.0f64,
        prop_oneof![3 => Just(127u8), 1 => 1u8..6],
        prop_oneof![3 => Just(0.0), 1 => 0.0..0.5f64],
        prop_oneof![Just(400u64), Just(2000u64)],
        prop_oneof![Just(1.0), Just(10.0)],
    )
        .prop_map(|(scene, algorithm, rate, seed, sim_time_s, ttl, loss, frame, jitter)| {
            let reception =
                if loss > 0.0 { ReceptionModel::CollisionPlusLoss(loss) } else { ReceptionModel::CollisionOnly };
            let config = ScenarioConfig {
                sim_time_s,
                ttl,
                app_rate: rate,
                range_m: scene.range,
                seed,
                channel: ChannelConfig {
                    frame_duration_us: frame,
                    adv_jitter_ms: jitter,
                    reception,
                    ..Default::default()
                },
                event_log_limit: Some(usize::MAX),
                ..ScenarioConfig::default()
            };
            SimCase { scene, algorithm, config }
        })
}

pub struct Run {
    pub topology: Topology,
    pub assignment: RelayAssignment,
    pub config: ScenarioConfig,
    pub result: SimResult,
}

pub fn execute(case: &SimCase) -> Option<Run> {
    let topology = case.scene.topology()?;
    let assignment = assign(&topology, case.algorithm, case.config.seed);
    let result = sim::run(&topology, &assignment, &case.config).expect("valid case");
    Some(Run { topology, assignment, config: case.config.clone(), result })
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(TestCaseError::fail(format!($($fmt)+)));
        }
    };
}

pub type Check = Result<(), TestCaseError>;

/// Brute-force relay selection written directly from the algorithm's prose:
/// score = neighbor count (sink included), each out-of-range barrel in id
/// order compares score(j) - d(i,j)/R over its neighbors, picks the maximum
/// (ties within 1e-9 to the lowest id) and the pick loses one point.
pub struct OracleOutcome {
    pub relays: BTreeSet<usize>,
    pub chosen: Vec<Option<usize>>,
    pub scores: Vec<f64>,
}

#[allow(clippy::needless_range_loop)]
pub fn crns_oracle(scene: &Scene) -> OracleOutcome {
    let mut pts = scene.barrels.clone();
    pts.push(scene.sink);
    let n = pts.len();
    let sink = n - 1;
    let r = scene.range;
    let d = |a: usize, b: usize| ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
    let near = |a: usize, b: usize| a != b && d(a, b) < r;

    let mut scores: Vec<f64> = (0..n).map(|j| (0..n).filter(|&k| near(j, k)).count() as f64).collect();
    let mut relays = BTreeSet::new();
    let mut chosen = vec![None; n];
    for i in 0..sink {
        if d(i, sink) < r {
            continue;
        }
        let options: Vec<(usize, f64)> = (0..n).filter(|&j| near(i, j)).map(|j| (j, scores[j] - d(i, j) / r)).collect();
        if options.is_empty() {
            continue;
        }
        let top = options.iter().map(|o| o.1).fold(f64::NEG_INFINITY, f64::max);
        let pick = options.iter().filter(|o| o.1 >= top - 1e-9).map(|o| o.0).min().unwrap();
        relays.insert(pick);
        chosen[i] = Some(pick);
        scores[pick] -= 1.0;
    }
    OracleOutcome { relays, chosen, scores }
}

pub fn check_oracle(scene: &Scene) -> Check {
    let Some(t) = scene.topology() else { return Ok(()) };
    let got = relay::crns_select(&t);
    let want = crns_oracle(scene);
    let relays: BTreeSet<usize> = got.relays().iter().map(|r| r.0).collect();
    ensure!(relays == want.relays, "relays {relays:?} vs oracle {:?}", want.relays);
    let chosen: Vec<Option<usize>> = got.chosen_relay.iter().map(|c| c.map(|r| r.0)).collect();
    ensure!(chosen == want.chosen, "chosen {chosen:?} vs oracle {:?}", want.chosen);
    let scores = got.final_scores.unwrap();
    ensure!(scores == want.scores, "scores {scores:?} vs oracle {:?}", want.scores);
    Ok(())
}

pub fn check_adjacency(scene: &Scene) -> Check {
    let Some(t) = scene.topology() else { return Ok(()) };
    for a in t.nodes() {
        ensure!(!t.is_neighbor(a, a), "self loop at {a}");
        for b in t.nodes() {
            ensure!(t.is_neighbor(a, b) == t.is_neighbor(b, a), "asymmetric {a}-{b}");
        }
    }
    Ok(())
}

pub fn check_range_monotone(scene: &Scene, grow: f64) -> Check {
    let Some(small) = scene.topology() else { return Ok(()) };
    let big = small.with_range(scene.range + grow).unwrap();
    for a in small.nodes() {
        for b in small.nodes() {
            ensure!(!small.is_neighbor(a, b) || big.is_neighbor(a, b), "edge {a}-{b} lost when R grew");
        }
    }
    Ok(())
}

pub fn check_score_conservation(scene: &Scene) -> Check {
    let Some(t) = scene.topology() else { return Ok(()) };
    let a = relay::crns_select(&t);
    let deg = t.neighbor_degrees();
    let scores = a.final_scores.as_ref().unwrap();
    for j in t.nodes() {
        let picked = a.chosen_relay.iter().filter(|c| **c == Some(j)).count();
        ensure!(deg[j.0] as f64 - scores[j.0] == picked as f64, "node {j}: degree {} score {}", deg[j.0], scores[j.0]);
    }
    Ok(())
}

pub fn check_locality_and_exclusion(scene: &Scene, alg: Algorithm, seed: u64) -> Check {
    let Some(t) = scene.topology() else { return Ok(()) };
    let a = assign(&t, alg, seed);
    ensure!(!a.is_relay(t.sink()), "sink is a relay");
    for i in t.nodes() {
        if let Some(r) = a.chosen_relay[i.0] {
            ensure!(t.distance(i, r) < t.range(), "{alg}: {i} chose distant {r}");
            ensure!(a.is_relay(r), "{alg}: {i} chose non-relay {r}");
            ensure!(!t.in_sink_range(i), "{alg}: in-range {i} chose {r}");
        }
    }
    ensure!(relay::validate_assignment(&t, &a).violations.is_empty(), "{alg}: violations");
    Ok(())
}

pub fn check_baseline_equivalence(scene: &Scene, seed: u64) -> Check {
    let Some(t) = scene.topology() else { return Ok(()) };
    let all = relay::all_relays(&t).relays();
    let n = t.barrel_count();
    ensure!(relay::random_relays(&t, n, seed).unwrap().relays() == all, "random(n) differs from all");
    ensure!(relay::knn_relays(&t, n, seed).unwrap().relays() == all, "knn(n) differs from all");
    Ok(())
}

pub fn check_cache_safety(run: &Run) -> Check {
    let relays = run.assignment.relay_count() as u32;
    for (key, &tx) in &run.result.packet_transmissions {
        let bound = run.result.repeats[key.source.0] + relays;
        ensure!(tx <= bound, "{key:?}: {tx} frames > {bound}");
    }
    let log = run.result.event_log.as_ref().unwrap();
    let mut per_node: BTreeMap<(NodeId, PacketKey), u32> = BTreeMap::new();
    for e in log.iter().filter(|e| e.kind == EventKind::TxStart) {
        *per_node.entry((e.node, PacketKey { source: e.source, seq: e.seq })).or_default() += 1;
    }
    for ((node, key), count) in per_node {
        let allowed = if node == key.source { run.result.repeats[node.0] } else { 1 };
        ensure!(count <= allowed, "{node} sent {key:?} {count} times");
    }
    Ok(())
}

pub fn check_ttl_bound(run: &Run) -> Check {
    let hops = run.result.max_hops as u32;
    ensure!(hops < run.config.ttl as u32, "max hops {hops} with ttl {}", run.config.ttl);
    ensure!(hops <= run.assignment.relay_count() as u32, "max hops {hops} exceeds relay count");
    Ok(())
}

pub fn check_state_closure(run: &Run) -> Check {
    for (i, s) in run.result.nodes.iter().enumerate() {
        let sum = s.tx_fraction + s.listen_fraction + s.sleep_fraction;
        ensure!((sum - 1.0).abs() <= 1e-9, "node {i}: fractions sum {sum}");
        ensure!(s.tx_fraction >= 0.0 && s.listen_fraction >= 0.0 && s.sleep_fraction >= 0.0, "node {i}: negative");
    }
    Ok(())
}

pub fn check_counting(run: &Run) -> Check {
    let r = &run.result;
    ensure!(!r.event_log_truncated, "log truncated");
    let log = r.event_log.as_ref().unwrap();
    let n = r.nodes.len();
    let mut generated = vec![0u32; n];
    let mut sent = vec![0u32; n];
    let mut delivered: BTreeSet<PacketKey> = BTreeSet::new();
    let mut deliver_events = 0;
    for e in log {
        match e.kind {
            EventKind::Generate => generated[e.node.0] += 1,
            EventKind::TxStart => sent[e.node.0] += 1,
            EventKind::Deliver => {
                deliver_events += 1;
                delivered.insert(PacketKey { source: e.source, seq: e.seq });
            }
            _ => {}
        }
    }
    ensure!(deliver_events == delivered.len(), "duplicate deliver events");
    for (i, s) in r.nodes.iter().enumerate() {
        ensure!(s.app_sent == generated[i], "node {i}: app_sent {} vs log {}", s.app_sent, generated[i]);
        ensure!(s.net_transmissions == sent[i], "node {i}: tx {} vs log {}", s.net_transmissions, sent[i]);
        let d = delivered.iter().filter(|k| k.source.0 == i).count() as u32;
        ensure!(s.delivered == d, "node {i}: delivered {} vs log {d}", s.delivered);
    }
    let frames: u32 = r.packet_transmissions.values().sum();
    ensure!(frames == r.nodes.iter().map(|s| s.net_transmissions).sum::<u32>(), "frame totals differ");
    Ok(())
}

pub fn check_metrics(run: &Run) -> Check {
    let profile = PowerProfile::default();
    let m = MetricsReport::compute(&run.result, &run.assignment, &profile).unwrap();

    let sent: f64 = run.result.sources().map(|s| run.result.nodes[s.0].app_sent as f64).sum();
    if let Some(pdr) = m.network_pdr {
        ensure!((0.0..=1.0).contains(&pdr), "pdr {pdr}");
        let weighted: f64 = run
            .result
            .sources()
            .filter_map(|s| m.per_node_pdr[s.0].map(|p| p / 100.0 * run.result.nodes[s.0].app_sent as f64))
            .sum();
        ensure!((pdr - weighted / sent).abs() <= 1e-9, "network {pdr} vs weighted {}", weighted / sent);
    } else {
        ensure!(sent == 0.0, "missing pdr with {sent} sent");
    }
    for p in m.per_node_pdr.iter().flatten() {
        ensure!((0.0..=100.0).contains(p), "per-node pdr {p}");
    }

    let total_relayed = run.result.total_relayed();
    let loads: u64 = m.relay_loads.as_ref().map(|l| l.loads.iter().map(|x| x.1).sum()).unwrap_or(0);
    ensure!(loads == total_relayed, "relay loads {loads} vs engine {total_relayed}");
    if let Some(l) = &m.relay_loads {
        for (r, _) in &l.loads {
            ensure!(run.assignment.is_relay(*r), "load key {r} not a relay");
        }
    }

    for (i, &c) in m.power_ma.iter().enumerate() {
        ensure!(
            c >= profile.i_sleep_ma - 1e-12 && c <= profile.i_tx_ma + 1e-12,
            "node {i}: current {c} outside [{}, {}]",
            profile.i_sleep_ma,
            profile.i_tx_ma
        );
    }
    ensure!(metrics::power(&run.result, &profile).unwrap() == m.power_ma, "power differs");
    Ok(())
}

pub fn check_determinism(case: &SimCase) -> Check {
    let (Some(a), Some(b)) = (execute(case), execute(case)) else { return Ok(()) };
    ensure!(a.result == b.result, "results differ");
    let bits = |r: &SimResult| -> Vec<u64> {
        r.nodes
            .iter()
            .flat_map(|s| [s.tx_fraction.to_bits(), s.listen_fraction.to_bits(), s.sleep_fraction.to_bits()])
            .collect()
    };
    ensure!(bits(&a.result) == bits(&b.result), "fraction bits differ");
    let p = PowerProfile::default();
    let csv_a = MetricsReport::compute(&a.result, &a.assignment, &p).unwrap().to_csv();
    let csv_b = MetricsReport::compute(&b.result, &b.assignment, &p).unwrap().to_csv();
    ensure!(csv_a == csv_b, "metrics csv differs");
    ensure!(a.assignment.to_csv() == b.assignment.to_csv(), "assignment csv differs");
    Ok(())
}

/// Every simulation invariant on one generated case.
pub fn check_sim_invariants(case: &SimCase) -> Check {
    let Some(run) = execute(case) else { return Ok(()) };
    check_cache_safety(&run)?;
    check_ttl_bound(&run)?;
    check_state_closure(&run)?;
    check_counting(&run)?;
    check_metrics(&run)
}
