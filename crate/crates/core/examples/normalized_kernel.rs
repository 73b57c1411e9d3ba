//! Unit-mass Gaussian kernels spread a certain vote thin: a single vote with
//! confidence 1 peaks at `1 / (2 pi sigma^2)`, so the voted map can never be
//! confident. Unnormalized kernels keep a peak of 1.
//!
//! cargo run --example normalized_kernel

use mdn::{DisplacementField, KernelSpec, ScalarField, VoteGraph, VoteMode, Voting};

fn main() -> mdn::Result<()> {
    let n = 15;
    let mut c = vec![0.0; n * n];
    c[(n / 2) * n + n / 2] = 1.0;
    let c = ScalarField::from_vec(n, n, 1, c)?;
    let o = DisplacementField::zeros(n, n, 1)?;
    let graph = VoteGraph::within_part(1);

    println!("{:>4} {:>6} {:>14} {:>14}", "kf", "sigma", "peak (norm.)", "peak (unnorm.)");
    for kf in [3, 5, 7, 9, 11, 13] {
        let k = KernelSpec::gaussian(kf)?;
        let peak = |spec: KernelSpec| -> mdn::Result<f64> {
            let (m, _) = Voting::new(spec, VoteMode::NoisyOr, graph.clone()).forward(&c, &o)?;
            Ok(m.get(0, n / 2, n / 2))
        };
        println!(
            "{kf:>4} {:>6.2} {:>14.6} {:>14.6}",
            k.sigma(),
            peak(k.with_normalized(true))?,
            peak(k.with_normalized(false))?
        );
    }
    let unit = KernelSpec::gaussian_with_sigma(5, 1.0)?.with_normalized(true);
    let (m, _) = Voting::new(unit, VoteMode::Additive, graph).forward(&c, &o)?;
    println!(
        "sigma=1 normalized peak {:.12} vs 1/(2 pi) {:.12}",
        m.get(0, n / 2, n / 2),
        1.0 / (2.0 * std::f64::consts::PI)
    );
    Ok(())
}
