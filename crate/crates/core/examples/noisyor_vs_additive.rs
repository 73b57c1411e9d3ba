//! Every pixel of a 9x9 grid votes for the centre with full confidence.
//! Additive mass grows with the number of voters; noisy-OR saturates below
//! one and max keeps the single strongest vote.
//!
//! cargo run --example noisyor_vs_additive

use mdn::{DisplacementField, KernelSpec, ScalarField, VoteGraph, VoteMode, Voting};

fn main() -> mdn::Result<()> {
    let n = 9;
    let centre = (n / 2) as f64;
    let ox = ScalarField::from_fn(n, n, 1, |_, _, x| centre - x as f64)?;
    let oy = ScalarField::from_fn(n, n, 1, |_, y, _| centre - y as f64)?;
    let o = DisplacementField::new(ox, oy)?;
    let graph = VoteGraph::within_part(1);
    let kernel = KernelSpec::gaussian(5)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "c", "additive", "noisy-or", "max");
    for conf in [0.01, 0.05, 0.2, 0.5, 1.0] {
        let c = ScalarField::new(n, n, 1, conf)?;
        let peak = |mode| -> mdn::Result<f64> {
            let (m, _) = Voting::new(kernel, mode, graph.clone()).forward(&c, &o)?;
            Ok(m.get(0, n / 2, n / 2))
        };
        println!(
            "{conf:>6} {:>12.6} {:>12.6} {:>12.6}",
            peak(VoteMode::Additive)?,
            peak(VoteMode::NoisyOr)?,
            peak(VoteMode::Max)?
        );
    }
    Ok(())
}
