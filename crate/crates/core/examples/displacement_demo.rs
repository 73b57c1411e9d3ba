//! Renders the point, line, curve and transfer demos and writes the
//! confidence, displacement and voted maps as PGM and MDNF files.
//!
//! cargo run --example displacement_demo -- [out_dir]

use std::path::PathBuf;

use mdn::experiments::demo::{bright_support, render_demo, DemoShape};

fn main() -> mdn::Result<()> {
    let out = std::env::args().nth(1).map_or_else(|| PathBuf::from("demo_out"), PathBuf::from);
    for shape in DemoShape::ALL {
        let d = render_demo(shape)?;
        d.write(&out)?;
        println!(
            "{:<8} bright pixels: c={:>4} m={:>4}  argmax(m)={:?}",
            shape.name(),
            bright_support(&d.c),
            bright_support(&d.m),
            d.m.argmax(0)?
        );
    }
    println!("wrote {}", out.display());
    Ok(())
}
