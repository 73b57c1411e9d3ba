//! MDNF binary field files and PGM (P5) export.
//!
//! MDNF layout: the four bytes `MDNF`, little-endian `u32` height, width and
//! channels, then `height*width*channels` little-endian `f64` values in the
//! field's native order (row-major, channel-outermost).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::ScalarField;
use crate::error::{MdnError, Result};

pub const MDNF_MAGIC: [u8; 4] = *b"MDNF";

const HEADER_LEN: usize = 16;

pub fn write_mdnf<W: Write>(field: &ScalarField, mut out: W) -> Result<()> {
    let dim = |v: usize, name: &str| {
        u32::try_from(v).map_err(|_| MdnError::Format(format!("{name} {v} does not fit in u32")))
    };
    let mut header = [0u8; HEADER_LEN];
    header[..4].copy_from_slice(&MDNF_MAGIC);
    header[4..8].copy_from_slice(&dim(field.height(), "height")?.to_le_bytes());
    header[8..12].copy_from_slice(&dim(field.width(), "width")?.to_le_bytes());
    header[12..16].copy_from_slice(&dim(field.channels(), "channels")?.to_le_bytes());
    out.write_all(&header)?;
    let mut payload = Vec::with_capacity(field.len() * 8);
    for v in field.data() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn read_mdnf<R: Read>(mut input: R) -> Result<ScalarField> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < HEADER_LEN {
        return Err(MdnError::Format(format!(
            "file is {} bytes, shorter than the {HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    if bytes[..4] != MDNF_MAGIC {
        return Err(MdnError::Format(format!(
            "bad magic {:?}, expected \"MDNF\"",
            &bytes[..4]
        )));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap()) as usize;
    let (height, width, channels) = (word(4), word(8), word(12));
    let count = height
        .checked_mul(width)
        .and_then(|n| n.checked_mul(channels))
        .filter(|n| n.checked_mul(8).is_some())
        .ok_or_else(|| {
            MdnError::Format(format!(
                "header dimensions {height}x{width}x{channels} overflow"
            ))
        })?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != count * 8 {
        return Err(MdnError::Format(format!(
            "header declares {height}x{width}x{channels} ({count} values) but payload holds {} bytes",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    ScalarField::from_vec(height, width, channels, data)
        .map_err(|e| MdnError::Format(e.to_string()))
}

pub fn save_mdnf(field: &ScalarField, path: impl AsRef<Path>) -> Result<()> {
    write_mdnf(field, BufWriter::new(File::create(path)?))
}

pub fn load_mdnf(path: impl AsRef<Path>) -> Result<ScalarField> {
    read_mdnf(BufReader::new(File::open(path)?))
}

/// Grey levels for one channel, linearly mapped from the channel's
/// `[min, max]` onto `[0, 255]`. A constant channel maps to all zeros.
pub fn pgm_levels(field: &ScalarField, channel: usize) -> Result<Vec<u8>> {
    field.check_channel(channel)?;
    let plane = field.plane(channel);
    let (lo, hi) = plane
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Ok(vec![0; plane.len()]);
    }
    let scale = 255.0 / (hi - lo);
    Ok(plane
        .iter()
        .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect())
}

pub fn export_pgm(field: &ScalarField, channel: usize, path: impl AsRef<Path>) -> Result<()> {
    let levels = pgm_levels(field, channel)?;
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "P5\n{} {}\n255\n", field.width(), field.height())?;
    out.write_all(&levels)?;
    out.flush()?;
    Ok(())
}
