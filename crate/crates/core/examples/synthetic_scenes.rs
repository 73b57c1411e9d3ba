//! Generates a few within-part and cross-part scenes and exports them with
//! their keypoints.
//!
//! cargo run --example synthetic_scenes -- [out_dir]

use std::path::PathBuf;

use mdn::synth::{gen_cross, gen_within};

fn main() -> mdn::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("scenes_out"), PathBuf::from);
    for seed in 0..3 {
        let s = gen_within(seed);
        s.export(&out, &format!("within_{seed}"))?;
        println!("within {seed}: {:?}", s.keypoints.points());
        for occlude in [false, true] {
            let s = gen_cross(seed, occlude);
            s.export(&out, &format!("cross_{seed}_{}", if occlude { "occluded" } else { "clear" }))?;
        }
        let kps: Vec<(f64, f64)> = gen_cross(seed, false).keypoints.points().iter().map(|p| (p.x, p.y)).collect();
        println!("cross {seed}: {kps:?}");
    }
    println!("wrote {}", out.display());
    Ok(())
}
