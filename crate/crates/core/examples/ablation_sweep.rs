//! No-voting vs post-hoc voting vs end-to-end voting on the within-part
//! task, averaged over seeds.
//!
//! cargo run --release --example ablation_sweep -- [steps] [seeds]

use mdn::experiments::ablate::{run_ablation, AblationConfig};

fn main() -> mdn::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps = args.next().map_or(Ok(300), |s| s.parse()).expect("steps");
    let seeds: u64 = args.next().map_or(Ok(2), |s| s.parse()).expect("seeds");
    let mut cfg = AblationConfig::default();
    cfg.experiment.train.steps = steps;
    cfg.seeds = (0..seeds).collect();
    let res = run_ablation(&cfg, |r| {
        eprintln!("seed {} {} {}: pck {:.3}", r.seed, r.method.name(), r.kernel.as_deref().unwrap_or("-"), r.pck)
    })?;
    println!("{:<10} {:<10} {:>9} {:>9} {:>9}", "method", "kernel", "pck", "std", "err px");
    for r in &res.rows {
        println!("{:<10} {:<10} {:>9.4} {:>9.4} {:>9.3}", r.method, r.kernel, r.pck_mean, r.pck_std, r.err_mean);
    }
    Ok(())
}
