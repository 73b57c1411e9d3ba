//! One pixel voting two pixels to the right, under each accumulation mode.
//!
//! cargo run --example voting_basics

use mdn::{DisplacementField, KernelSpec, ScalarField, VoteGraph, VoteMode, Voting};

fn main() -> mdn::Result<()> {
    let (h, w) = (5, 7);
    let mut c = vec![0.0; h * w];
    c[2 * w + 2] = 0.8;
    let c = ScalarField::from_vec(h, w, 1, c)?;
    let o = DisplacementField::new(ScalarField::new(h, w, 1, 2.0)?, ScalarField::new(h, w, 1, 0.0)?)?;
    let graph = VoteGraph::within_part(1);

    for kernel in [KernelSpec::bilinear(), KernelSpec::gaussian(3)?] {
        for mode in VoteMode::ALL {
            let (m, _) = Voting::new(kernel, mode, graph.clone()).forward(&c, &o)?;
            println!("{} / {mode}: argmax {:?}, total mass {:.4}", kernel.label(), m.argmax(0)?, m.sum());
            for y in 0..h {
                let row: Vec<String> = (0..w).map(|x| format!("{:.3}", m.get(0, y, x))).collect();
                println!("  {}", row.join(" "));
            }
        }
    }
    Ok(())
}
