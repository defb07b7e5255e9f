//! Experiment matrix: every (algorithm, rate, seed) cell of a plan is
//! simulated independently and summarized into CSV tables.

mod output;
mod plan;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

pub use output::{emit_comparison, summarize, CellSummary, ComparisonRow};
pub use plan::{calibrated_channel, parse_plan, AlgorithmOverrides, ExperimentPlan, Meters, SeedSpec, PRESETS};

use crate::metrics::MetricsReport;
use crate::relay::{self, Algorithm, RelayAssignment, RelayError};
use crate::sim;
use crate::topology::{build_layout, Topology, TopologyError};

/// Per-run event logs are capped at this many records.
pub const EVENT_LOG_LIMIT: usize = 2_000_000;

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid `{key}`: {reason}")]
    Invalid { key: String, reason: String },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("cannot write {path}")]
    Io { path: PathBuf, source: io::Error },
    #[error("comparison needs the all-relays baseline at rate {rate}")]
    MissingBaseline { rate: f64 },
}

impl PlanError {
    pub(crate) fn invalid(key: &str, reason: impl Into<String>) -> Self {
        PlanError::Invalid { key: key.to_string(), reason: reason.into() }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        PlanError::Io { path: path.to_path_buf(), source }
    }
}

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct CellKey {
    pub algorithm: Algorithm,
    pub rate: f64,
    pub seed: u64,
}

impl CellKey {
    /// File stem `<algorithm>_<rate>_<seed>`.
    pub fn stem(&self) -> String {
        format!("{}_{}_{}", self.algorithm, self.rate, self.seed)
    }
}

#[derive(Clone, Debug)]
pub struct CellOutcome {
    pub key: CellKey,
    pub relay_count: usize,
    /// Barrels without a relay path to the sink.
    pub isolated: usize,
    pub report: Result<MetricsReport, String>,
}

/// Topologies and relay budgets shared by every cell of a plan.
#[derive(Clone, Debug)]
pub struct MatrixContext {
    pub topologies: BTreeMap<Algorithm, Topology<f64>>,
    /// C-RNS assignment at the C-RNS range; its relay count is the default
    /// budget of the random and KNN baselines.
    pub crns: RelayAssignment<f64>,
    pub random_count: usize,
    pub knn_k: usize,
}

impl MatrixContext {
    pub fn new(plan: &ExperimentPlan) -> Result<Self, PlanError> {
        let mut topologies = BTreeMap::new();
        for alg in Algorithm::ALL {
            topologies.insert(alg, build_layout(&plan.layout, plan.range_for(alg))?);
        }
        let crns = relay::crns_select_with(&topologies[&Algorithm::Crns], plan.crns_variant);
        let budget = crns.relay_count();
        Ok(Self {
            topologies,
            random_count: plan.random_count.unwrap_or(budget),
            knn_k: plan.knn_k.unwrap_or(budget),
            crns,
        })
    }

    pub fn topology(&self, algorithm: Algorithm) -> &Topology<f64> {
        &self.topologies[&algorithm]
    }

    /// Relay assignment for one cell; randomized baselines use the run seed.
    pub fn assignment(&self, algorithm: Algorithm, seed: u64) -> Result<RelayAssignment<f64>, RelayError> {
        let t = self.topology(algorithm);
        match algorithm {
            Algorithm::Crns => Ok(self.crns.clone()),
            Algorithm::All => Ok(relay::all_relays(t)),
            Algorithm::Random => relay::random_relays(t, self.random_count, seed),
            Algorithm::Knn => relay::knn_relays(t, self.knn_k, seed),
        }
    }
}

pub fn cells(plan: &ExperimentPlan) -> Vec<CellKey> {
    let mut out = Vec::with_capacity(plan.algorithms.len() * plan.rates.len() * plan.seeds.len());
    for &algorithm in &plan.algorithms {
        for &rate in &plan.rates {
            for &seed in &plan.seeds {
                out.push(CellKey { algorithm, rate, seed });
            }
        }
    }
    out
}

/// Runs one cell. With `events_dir` set, the event log is written there as
/// `<stem>.events.csv`.
pub fn run_cell(plan: &ExperimentPlan, ctx: &MatrixContext, key: CellKey, events_dir: Option<&Path>) -> CellOutcome {
    let topology = ctx.topology(key.algorithm);
    let assignment = match ctx.assignment(key.algorithm, key.seed) {
        Ok(a) => a,
        Err(e) => return CellOutcome { key, relay_count: 0, isolated: 0, report: Err(e.to_string()) },
    };
    let validation = relay::validate_assignment(topology, &assignment);
    let mut cfg = plan.cell_config(key.algorithm, key.rate, key.seed);
    if events_dir.is_some() {
        cfg.event_log_limit = Some(EVENT_LOG_LIMIT);
    }
    let report = sim::run(topology, &assignment, &cfg).map_err(|e| e.to_string()).and_then(|result| {
        if let Some(dir) = events_dir {
            let path = dir.join(format!("{}.events.csv", key.stem()));
            write_events(&path, &result).map_err(|e| format!("{}: {e}", path.display()))?;
        }
        MetricsReport::compute(&result, &assignment, &plan.power).map_err(|e| e.to_string())
    });
    CellOutcome { key, relay_count: assignment.relay_count(), isolated: validation.isolated.len(), report }
}

fn write_events(path: &Path, result: &sim::SimResult) -> io::Result<()> {
    let mut buf = b"time_us,node,event_kind,source,seq,channel\n".to_vec();
    result.write_event_log(&mut buf)?;
    fs::write(path, buf)
}

/// Runs every cell of the plan on `plan.workers` threads. Results come back
/// in matrix order regardless of scheduling.
pub fn execute(
    plan: &ExperimentPlan,
    ctx: &MatrixContext,
    events_dir: Option<&Path>,
) -> Result<Vec<CellOutcome>, PlanError> {
    let keys = cells(plan);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(plan.workers)
        .build()
        .map_err(|e| PlanError::invalid("plan.workers", e.to_string()))?;
    Ok(pool.install(|| keys.par_iter().map(|&k| run_cell(plan, ctx, k, events_dir)).collect()))
}

#[derive(Clone, Debug)]
pub struct MatrixReport {
    pub outcomes: Vec<CellOutcome>,
    pub summaries: Vec<CellSummary>,
    /// `None` when the plan does not include the all-relays baseline.
    pub comparison: Option<Vec<ComparisonRow>>,
    pub relay_budget: usize,
}

impl MatrixReport {
    pub fn failures(&self) -> impl Iterator<Item = &CellOutcome> {
        self.outcomes.iter().filter(|o| o.report.is_err())
    }
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub emit_events: bool,
}

/// Validates the plan, checks that the output directory is writable, runs
/// the matrix and writes `runs/`, `summary.csv`, `comparison.csv`,
/// `errors.csv`, `metadata.csv` and `plotdata/`.
pub fn run_matrix(plan: &ExperimentPlan, opts: &RunOptions) -> Result<MatrixReport, PlanError> {
    plan.validate()?;
    let out = &plan.output_dir;
    let runs = out.join("runs");
    let plots = out.join("plotdata");
    for dir in [out, &runs, &plots] {
        fs::create_dir_all(dir).map_err(|e| PlanError::io(dir, e))?;
    }
    let probe = out.join(".write_check");
    fs::write(&probe, b"").map_err(|e| PlanError::io(&probe, e))?;
    fs::remove_file(&probe).map_err(|e| PlanError::io(&probe, e))?;

    let ctx = MatrixContext::new(plan)?;
    let outcomes = execute(plan, &ctx, opts.emit_events.then_some(runs.as_path()))?;

    for o in &outcomes {
        if let Ok(report) = &o.report {
            let path = runs.join(format!("{}.csv", o.key.stem()));
            write(&path, output::run_csv(&o.key, report))?;
        }
    }
    let summaries = summarize(plan, &outcomes);
    write(&out.join("summary.csv"), output::summary_csv(&summaries))?;
    let comparison = if plan.algorithms.contains(&Algorithm::All) {
        let rows = emit_comparison(&summaries)?;
        write(&out.join("comparison.csv"), output::comparison_csv(&rows))?;
        Some(rows)
    } else {
        None
    };
    write(&out.join("errors.csv"), output::errors_csv(&outcomes))?;
    write(&out.join("metadata.csv"), output::metadata_csv(plan, &ctx))?;
    write(&plots.join("pdr_density.csv"), output::pdr_density_csv(plan, &outcomes))?;
    write(&plots.join("relay_load_hist.csv"), output::relay_load_hist_csv(plan, &outcomes))?;
    write(&plots.join("power_vs_pdr.csv"), output::power_vs_pdr_csv(&outcomes))?;

    Ok(MatrixReport { outcomes, summaries, comparison, relay_budget: ctx.crns.relay_count() })
}

fn write(path: &Path, contents: String) -> Result<(), PlanError> {
    fs::write(path, contents).map_err(|e| PlanError::io(path, e))
}
