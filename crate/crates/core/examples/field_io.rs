//! Round-trips a field through the MDNF binary format and exports a PGM
//! preview.
//!
//! cargo run --example field_io

use mdn::field::{export_pgm, load_mdnf, read_mdnf, save_mdnf, write_mdnf};
use mdn::ScalarField;

fn main() -> mdn::Result<()> {
    let f = ScalarField::from_fn(32, 48, 2, |c, y, x| ((x + y * (c + 1)) as f64 * 0.1).sin().abs())?;

    let mut bytes = Vec::new();
    write_mdnf(&f, &mut bytes)?;
    let back = read_mdnf(bytes.as_slice())?;
    println!("{} bytes, identical after round trip: {}", bytes.len(), back == f);

    let dir = std::env::temp_dir().join("mdn_field_io");
    std::fs::create_dir_all(&dir)?;
    save_mdnf(&f, dir.join("field.mdnf"))?;
    assert_eq!(load_mdnf(dir.join("field.mdnf"))?, f);
    export_pgm(&f, 1, dir.join("channel1.pgm"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
