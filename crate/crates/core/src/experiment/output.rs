use super::{CellKey, CellOutcome, ExperimentPlan, MatrixContext, PlanError};
use crate::metrics::{fmt_opt, MetricsReport};
use crate::relay::Algorithm;
use crate::topology::NodeId;

const PDR_BINS: usize = 10;
const LOAD_BINS: u64 = 10;

/// Mean and sample standard deviation across seeds.
#[derive(Copy, Clone, Debug, PartialEq)]
pub struct Spread {
    pub mean: f64,
    pub std: f64,
}

impl Spread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        Some(Self { mean, std })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub algorithm: Algorithm,
    pub rate: f64,
    pub runs: usize,
    pub failed: usize,
    pub relay_count_mean: f64,
    pub isolated_max: usize,
    /// Network delivery ratio as a fraction.
    pub pdr: Option<Spread>,
    pub relay_load_cv: Option<Spread>,
    pub relay_power_ma: Option<Spread>,
    /// Median per-node delivery percentage, pooled over seeds.
    pub node_pdr_median: Option<f64>,
    /// (seed, node) pairs with zero deliveries.
    pub zero_pdr_nodes: usize,
    /// Per-node delivery percentages, pooled over seeds in seed order.
    pub node_pdrs: Vec<f64>,
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[m - 1] + v[m]) / 2.0 } else { v[m] })
}

fn reports<'a>(
    outcomes: &'a [CellOutcome],
    algorithm: Algorithm,
    rate: f64,
) -> impl Iterator<Item = &'a CellOutcome> + 'a {
    outcomes.iter().filter(move |o| o.key.algorithm == algorithm && o.key.rate == rate)
}

pub fn summarize(plan: &ExperimentPlan, outcomes: &[CellOutcome]) -> Vec<CellSummary> {
    let mut out = Vec::new();
    for &algorithm in &plan.algorithms {
        for &rate in &plan.rates {
            let cell: Vec<&CellOutcome> = reports(outcomes, algorithm, rate).collect();
            let ok: Vec<&MetricsReport> = cell.iter().filter_map(|o| o.report.as_ref().ok()).collect();
            let collect =
                |f: &dyn Fn(&MetricsReport) -> Option<f64>| ok.iter().filter_map(|r| f(r)).collect::<Vec<_>>();
            let node_pdrs: Vec<f64> = ok.iter().flat_map(|r| r.per_node_pdr.iter().flatten().copied()).collect();
            out.push(CellSummary {
                algorithm,
                rate,
                runs: cell.len(),
                failed: cell.len() - ok.len(),
                relay_count_mean: if cell.is_empty() {
                    0.0
                } else {
                    cell.iter().map(|o| o.relay_count as f64).sum::<f64>() / cell.len() as f64
                },
                isolated_max: cell.iter().map(|o| o.isolated).max().unwrap_or(0),
                pdr: Spread::of(&collect(&|r| r.network_pdr)),
                relay_load_cv: Spread::of(&collect(&|r| r.relay_load_cv())),
                relay_power_ma: Spread::of(&collect(&|r| r.mean_relay_power_ma())),
                node_pdr_median: median(&node_pdrs),
                zero_pdr_nodes: node_pdrs.iter().filter(|&&p| p == 0.0).count(),
                node_pdrs,
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonRow {
    pub algorithm: Algorithm,
    pub rate: f64,
    pub pdr_mean: Option<f64>,
    /// Relative change of mean delivery ratio against all-relays, percent.
    pub pct_change_vs_all: Option<f64>,
}

/// Percent change of each algorithm's mean delivery ratio relative to the
/// all-relays baseline at the same rate.
pub fn emit_comparison(summaries: &[CellSummary]) -> Result<Vec<ComparisonRow>, PlanError> {
    let mut rows = Vec::new();
    for s in summaries {
        let base = summaries
            .iter()
            .find(|b| b.algorithm == Algorithm::All && b.rate == s.rate)
            .ok_or(PlanError::MissingBaseline { rate: s.rate })?;
        let pdr_mean = s.pdr.map(|p| p.mean);
        let base_mean = base.pdr.map(|p| p.mean).filter(|&b| b > 0.0);
        let pct = match (pdr_mean, base_mean) {
            (Some(p), Some(b)) => Some((p - b) / b * 100.0),
            _ => None,
        };
        rows.push(ComparisonRow { algorithm: s.algorithm, rate: s.rate, pdr_mean, pct_change_vs_all: pct });
    }
    Ok(rows)
}

fn finish(w: csv::Writer<Vec<u8>>) -> String {
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv output is utf-8")
}

/// Per-node metrics of one run, each row tagged with its cell.
pub(crate) fn run_csv(key: &CellKey, report: &MetricsReport) -> String {
    let mut out = String::new();
    let tag = format!("{},{},{},", key.algorithm, key.rate, key.seed);
    for (i, line) in report.to_csv().lines().enumerate() {
        if i == 0 {
            out.push_str("algorithm,rate,seed,");
        } else {
            out.push_str(&tag);
        }
        out.push_str(line);
        out.push('\n');
    }
    out
}

fn spread_cells(s: Option<Spread>, digits: usize) -> [String; 2] {
    [fmt_opt(s.map(|v| v.mean), digits), fmt_opt(s.map(|v| v.std), digits)]
}

pub(crate) fn summary_csv(summaries: &[CellSummary]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "algorithm",
        "rate",
        "runs",
        "failed",
        "relay_count_mean",
        "isolated_max",
        "pdr_mean",
        "pdr_std",
        "relay_load_cv_mean",
        "relay_load_cv_std",
        "relay_power_ma_mean",
        "relay_power_ma_std",
        "node_pdr_median_pct",
        "zero_pdr_nodes",
    ])
    .unwrap();
    for s in summaries {
        let [pm, ps] = spread_cells(s.pdr, 6);
        let [cm, cs] = spread_cells(s.relay_load_cv, 6);
        let [wm, ws] = spread_cells(s.relay_power_ma, 6);
        w.write_record([
            s.algorithm.to_string(),
            s.rate.to_string(),
            s.runs.to_string(),
            s.failed.to_string(),
            format!("{:.3}", s.relay_count_mean),
            s.isolated_max.to_string(),
            pm,
            ps,
            cm,
            cs,
            wm,
            ws,
            fmt_opt(s.node_pdr_median, 4),
            s.zero_pdr_nodes.to_string(),
        ])
        .unwrap();
    }
    finish(w)
}

pub(crate) fn comparison_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "rate", "pdr_mean", "pct_change_vs_all"]).unwrap();
    for r in rows {
        w.write_record([
            r.algorithm.to_string(),
            r.rate.to_string(),
            fmt_opt(r.pdr_mean, 6),
            fmt_opt(r.pct_change_vs_all, 3),
        ])
        .unwrap();
    }
    finish(w)
}

pub(crate) fn errors_csv(outcomes: &[CellOutcome]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "rate", "seed", "error"]).unwrap();
    for o in outcomes {
        if let Err(e) = &o.report {
            w.write_record([o.key.algorithm.to_string(), o.key.rate.to_string(), o.key.seed.to_string(), e.clone()])
                .unwrap();
        }
    }
    finish(w)
}

pub(crate) fn metadata_csv(plan: &ExperimentPlan, ctx: &MatrixContext) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["key", "value"]).unwrap();
    let t = ctx.topology(Algorithm::Crns);
    let relays: Vec<String> = ctx.crns.relays().iter().map(NodeId::to_string).collect();
    let ch = &plan.scenario.channel;
    let mut rows: Vec<(String, String)> = vec![
        ("layout".into(), plan.layout_name.clone()),
        ("barrels".into(), t.barrel_count().to_string()),
        ("sink".into(), t.sink().to_string()),
        ("crns_variant".into(), format!("{:?}", plan.crns_variant).to_lowercase()),
        ("crns_relays".into(), relays.join(" ")),
        ("relay_budget".into(), ctx.crns.relay_count().to_string()),
        ("random_count".into(), ctx.random_count.to_string()),
        ("knn_k".into(), ctx.knn_k.to_string()),
        ("sim_time_s".into(), plan.scenario.sim_time_s.to_string()),
        ("ttl".into(), plan.scenario.ttl.to_string()),
        ("n_adv_channels".into(), ch.n_adv_channels.to_string()),
        ("frame_duration_us".into(), ch.frame_duration_us.to_string()),
        ("adv_jitter_ms".into(), ch.adv_jitter_ms.to_string()),
        ("reception".into(), format!("{:?}", ch.reception)),
        ("seeds".into(), plan.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(" ")),
    ];
    for &alg in &plan.algorithms {
        rows.push((format!("range_m.{alg}"), plan.range_for(alg).to_string()));
        rows.push((format!("repeat_policy.{alg}"), format!("{:?}", plan.repeat_policy_for(alg))));
    }
    for (k, v) in rows {
        w.write_record([k, v]).unwrap();
    }
    finish(w)
}

/// Histogram of per-node delivery percentages in ten 10-point bins, the last
/// bin closed. Density integrates to one over [0, 100].
pub(crate) fn pdr_density_csv(plan: &ExperimentPlan, outcomes: &[CellOutcome]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "rate", "bin_lo", "bin_hi", "count", "density"]).unwrap();
    let width = 100.0 / PDR_BINS as f64;
    for &alg in &plan.algorithms {
        for &rate in &plan.rates {
            let mut counts = [0usize; PDR_BINS];
            for o in reports(outcomes, alg, rate) {
                if let Ok(r) = &o.report {
                    for p in r.per_node_pdr.iter().flatten() {
                        let bin = ((p / width) as usize).min(PDR_BINS - 1);
                        counts[bin] += 1;
                    }
                }
            }
            let total: usize = counts.iter().sum();
            for (b, &c) in counts.iter().enumerate() {
                let density = if total == 0 { 0.0 } else { c as f64 / (total as f64 * width) };
                w.write_record([
                    alg.to_string(),
                    rate.to_string(),
                    format!("{}", b as f64 * width),
                    format!("{}", (b + 1) as f64 * width),
                    c.to_string(),
                    format!("{density:.6}"),
                ])
                .unwrap();
            }
        }
    }
    finish(w)
}

/// Histogram of per-relay forwarded-frame counts. Bins are shared by all
/// algorithms at a rate.
pub(crate) fn relay_load_hist_csv(plan: &ExperimentPlan, outcomes: &[CellOutcome]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "rate", "bin_lo", "bin_hi", "count"]).unwrap();
    let loads = |o: &CellOutcome| -> Vec<u64> {
        match &o.report {
            Ok(r) => r.relay_loads.as_ref().map(|l| l.loads.iter().map(|&(_, v)| v).collect()).unwrap_or_default(),
            Err(_) => Vec::new(),
        }
    };
    for &rate in &plan.rates {
        let max = outcomes.iter().filter(|o| o.key.rate == rate).flat_map(loads).max().unwrap_or(0);
        let width = (max / LOAD_BINS + 1).max(1);
        for &alg in &plan.algorithms {
            let mut counts = [0usize; LOAD_BINS as usize];
            for o in reports(outcomes, alg, rate) {
                for l in loads(o) {
                    counts[((l / width) as usize).min(LOAD_BINS as usize - 1)] += 1;
                }
            }
            for (b, &c) in counts.iter().enumerate() {
                let lo = b as u64 * width;
                w.write_record([
                    alg.to_string(),
                    rate.to_string(),
                    lo.to_string(),
                    (lo + width).to_string(),
                    c.to_string(),
                ])
                .unwrap();
            }
        }
    }
    finish(w)
}

/// One point per run: delivery ratio against mean relay current.
pub(crate) fn power_vs_pdr_csv(outcomes: &[CellOutcome]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["algorithm", "rate", "seed", "network_pdr", "mean_relay_power_ma"]).unwrap();
    for o in outcomes {
        if let Ok(r) = &o.report {
            w.write_record([
                o.key.algorithm.to_string(),
                o.key.rate.to_string(),
                o.key.seed.to_string(),
                fmt_opt(r.network_pdr, 6),
                fmt_opt(r.mean_relay_power_ma(), 6),
            ])
            .unwrap();
        }
    }
    finish(w)
}
