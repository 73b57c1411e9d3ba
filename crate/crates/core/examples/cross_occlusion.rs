//! Cross-part voting on three-joint chains with the middle joint erased.
//! Neighbouring joints vote for it along the chain; the baseline only has
//! its own confidence map.
//!
//! cargo run --release --example cross_occlusion -- [steps] [seed]

use std::time::Instant;

use mdn::config::{ExperimentConfig, Supervision, Task, CROSS_STEPS};
use mdn::toynet::train;

fn main() -> mdn::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(Ok(CROSS_STEPS), |s| s.parse()).expect("steps");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");
    for supervision in [Supervision::Baseline, Supervision::Mdn] {
        let mut cfg = ExperimentConfig::for_task(Task::Cross);
        cfg.supervision = supervision;
        cfg.train.steps = steps;
        cfg.train.seed = seed;
        let t = Instant::now();
        let out = train(&cfg)?;
        let e = &out.eval;
        println!(
            "{supervision:?}: middle-joint error c={:.2} m={:.2}  all-joint pck c={:.3} m={:.3} ({:.1}s)",
            e.joint_err_c[1],
            e.joint_err_m[1],
            e.pck_c,
            e.pck_m,
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
