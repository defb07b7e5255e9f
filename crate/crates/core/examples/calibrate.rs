//! Channel calibration: grid search over frame air time and advertising
//! jitter on the `paper` preset, scoring each point by the squared error of
//! mean network PDR (percent) against target delivery ratios.
//!
//! ```text
//! cargo run --release -p barrelnet --example calibrate
//! ```

use barrelnet::experiment::{execute, summarize, ExperimentPlan, MatrixContext};
use barrelnet::relay::Algorithm;

const FRAMES_US: [u64; 5] = [400, 1000, 1500, 2000, 3000];
const JITTERS_MS: [f64; 5] = [1.0, 2.0, 3.0, 5.0, 10.0];

/// Target network PDR in percent, per (algorithm, rate).
const REFERENCE: [(Algorithm, f64, f64); 8] = [
    (Algorithm::All, 1.0, 77.0),
    (Algorithm::Random, 1.0, 62.0),
    (Algorithm::Knn, 1.0, 62.0),
    (Algorithm::Crns, 1.0, 82.0),
    (Algorithm::All, 4.0, 58.0),
    (Algorithm::Random, 4.0, 66.0),
    (Algorithm::Knn, 4.0, 63.0),
    (Algorithm::Crns, 4.0, 81.0),
];

fn main() {
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    println!("frame_us,jitter_ms,sse,all_1,random_1,knn_1,crns_1,all_4,random_4,knn_4,crns_4");
    let mut best: Option<(f64, u64, f64)> = None;
    for frame in FRAMES_US {
        for jitter in JITTERS_MS {
            let mut plan = ExperimentPlan::paper();
            plan.workers = workers;
            plan.scenario.channel.frame_duration_us = frame;
            plan.scenario.channel.adv_jitter_ms = jitter;
            let ctx = MatrixContext::new(&plan).expect("paper preset builds");
            let outcomes = execute(&plan, &ctx, None).expect("thread pool");
            let summaries = summarize(&plan, &outcomes);
            let mut sse = 0.0;
            let mut cells = Vec::new();
            for (alg, rate, reference) in REFERENCE {
                let s = summaries.iter().find(|s| s.algorithm == alg && s.rate == rate).unwrap();
                let pdr = s.pdr.map(|p| p.mean * 100.0).unwrap_or(0.0);
                sse += (pdr - reference).powi(2);
                cells.push(format!("{pdr:.1}"));
            }
            println!("{frame},{jitter},{sse:.1},{}", cells.join(","));
            if best.is_none_or(|(b, _, _)| sse < b) {
                best = Some((sse, frame, jitter));
            }
        }
    }
    if let Some((sse, frame, jitter)) = best {
        println!("best: frame_duration_us = {frame}, adv_jitter_ms = {jitter} (sse {sse:.1})");
    }
}
