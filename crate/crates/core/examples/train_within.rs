//! Trains the toy network on the single-blob task and compares the
//! confidence argmax with the voted argmax on held-out scenes.
//!
//! cargo run --release --example train_within -- [steps] [seed]

use std::time::Instant;

use mdn::config::{ExperimentConfig, Supervision};
use mdn::toynet::train;

fn main() -> mdn::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(Ok(1500), |s| s.parse()).expect("steps");
    let seed = args.next().map_or(Ok(0), |s| s.parse()).expect("seed");
    for supervision in [Supervision::Baseline, Supervision::Mdn] {
        let mut cfg = ExperimentConfig::default();
        cfg.supervision = supervision;
        cfg.train.steps = steps;
        cfg.train.seed = seed;
        let t = Instant::now();
        let out = train(&cfg)?;
        println!(
            "{supervision:?}: pck(c)={:.3} pck(m)={:.3} err(c)={:.2} err(m)={:.2} final loss={:.4} ({:.1}s)",
            out.eval.pck_c,
            out.eval.pck_m,
            out.eval.joint_err_c[0],
            out.eval.joint_err_m[0],
            out.log.last().map_or(f64::NAN, |r| r.loss),
            t.elapsed().as_secs_f64()
        );
    }
    Ok(())
}
