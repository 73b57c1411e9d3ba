//! Analytic backward pass against central differences on random 8x8
//! instances, for every mode and kernel.
//!
//! cargo run --release --example gradient_check -- [seed]

use mdn::experiments::gradcheck::{all_kernels, run_gradcheck};
use mdn::VoteMode;

fn main() -> mdn::Result<()> {
    let seed = std::env::args().nth(1).map_or(Ok(42), |s| s.parse()).expect("seed");
    let r = run_gradcheck(&VoteMode::ALL, &all_kernels(), seed)?;
    println!("{:<9} {:<11} {:>11} {:>11} {:>8}", "mode", "kernel", "rel err", "abs err", "skipped");
    for c in &r.cases {
        let f = &c.report;
        println!(
            "{:<9} {:<11} {:>11.3e} {:>11.3e} {:>8}{}",
            c.mode.name(),
            c.kernel,
            f.max_rel_err,
            f.max_abs_err,
            f.skipped.len(),
            if f.passed { "" } else { "  <- above tolerance" }
        );
    }
    println!("max rel err {:.3e} in {:.2}s", r.max_rel_err, r.seconds);
    Ok(())
}
