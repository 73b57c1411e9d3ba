//! Hand-built confidence and displacement fields that show what voting
//! does to mass: collapse to a point, onto a line, onto a curve, or
//! transfer to another place.

use std::path::Path;
use std::str::FromStr;

use crate::error::{MdnError, Result};
use crate::field::{export_pgm, save_mdnf, DisplacementField, ScalarField};
use crate::kernel::KernelSpec;
use crate::vote::{VoteGraph, VoteMode, Voting};

pub const DEMO_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemoShape {
    Point,
    Line,
    Curve,
    Transfer,
}

impl DemoShape {
    pub const ALL: [DemoShape; 4] = [
        DemoShape::Point,
        DemoShape::Line,
        DemoShape::Curve,
        DemoShape::Transfer,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            DemoShape::Point => "point",
            DemoShape::Line => "line",
            DemoShape::Curve => "curve",
            DemoShape::Transfer => "transfer",
        }
    }
}

impl FromStr for DemoShape {
    type Err = MdnError;

    fn from_str(s: &str) -> Result<Self> {
        DemoShape::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| MdnError::Config(format!("unknown demo shape {s:?}")))
    }
}

#[derive(Debug, Clone)]
pub struct Demo {
    pub shape: DemoShape,
    pub c: ScalarField,
    pub o: DisplacementField,
    pub m: ScalarField,
}

impl Demo {
    /// Writes `<shape>_{c,ox,oy,m}` as PGM and MDNF files.
    pub fn write(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut written = Vec::new();
        for (tag, f) in [
            ("c", &self.c),
            ("ox", self.o.ox()),
            ("oy", self.o.oy()),
            ("m", &self.m),
        ] {
            let stem = format!("{}_{tag}", self.shape.name());
            let pgm = dir.join(format!("{stem}.pgm"));
            export_pgm(f, 0, &pgm)?;
            save_mdnf(f, dir.join(format!("{stem}.mdnf")))?;
            written.push(pgm);
        }
        Ok(written)
    }
}

/// Number of pixels at or above half the channel maximum.
pub fn bright_support(f: &ScalarField) -> usize {
    let max = f.plane(0).iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0;
    }
    f.plane(0).iter().filter(|&&v| v >= 0.5 * max).count()
}

fn fields(shape: DemoShape) -> Result<(ScalarField, ScalarField, ScalarField)> {
    let n = DEMO_SIZE;
    let mid = (n / 2) as f64;
    let at = |x: usize, y: usize| (x as f64, y as f64);
    match shape {
        DemoShape::Point => {
            let inside = move |x: usize, y: usize| {
                let (x, y) = at(x, y);
                (x - mid).powi(2) + (y - mid).powi(2) <= 64.0
            };
            Ok((
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { 0.6 } else { 0.0 })?,
                ScalarField::from_fn(
                    n,
                    n,
                    1,
                    |_, y, x| if inside(x, y) { mid - x as f64 } else { 0.0 },
                )?,
                ScalarField::from_fn(
                    n,
                    n,
                    1,
                    |_, y, x| if inside(x, y) { mid - y as f64 } else { 0.0 },
                )?,
            ))
        }
        DemoShape::Line => {
            let inside =
                move |x: usize, y: usize| (8..56).contains(&x) && (y as f64 - mid).abs() <= 6.0;
            Ok((
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { 0.6 } else { 0.0 })?,
                ScalarField::new(n, n, 1, 0.0)?,
                ScalarField::from_fn(
                    n,
                    n,
                    1,
                    |_, y, x| if inside(x, y) { mid - y as f64 } else { 0.0 },
                )?,
            ))
        }
        DemoShape::Curve => {
            let radius = 18.0;
            let polar = move |x: usize, y: usize| {
                let (x, y) = at(x, y);
                let (dx, dy) = (x - mid, y - mid);
                let r = (dx * dx + dy * dy).sqrt();
                (dx, dy, r)
            };
            let inside = move |x: usize, y: usize| (polar(x, y).2 - radius).abs() <= 6.0;
            let pull = move |x: usize, y: usize, d: f64| {
                let (_, _, r) = polar(x, y);
                d * (radius - r) / r
            };
            Ok((
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { 0.6 } else { 0.0 })?,
                ScalarField::from_fn(n, n, 1, |_, y, x| {
                    if inside(x, y) {
                        pull(x, y, polar(x, y).0)
                    } else {
                        0.0
                    }
                })?,
                ScalarField::from_fn(n, n, 1, |_, y, x| {
                    if inside(x, y) {
                        pull(x, y, polar(x, y).1)
                    } else {
                        0.0
                    }
                })?,
            ))
        }
        DemoShape::Transfer => {
            let (ax, ay, bx, by) = (16.0, 16.0, 44.0, 40.0);
            let inside = move |x: usize, y: usize| {
                let (x, y) = at(x, y);
                (x - ax).powi(2) + (y - ay).powi(2) <= 25.0
            };
            Ok((
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { 0.6 } else { 0.0 })?,
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { bx - ax } else { 0.0 })?,
                ScalarField::from_fn(n, n, 1, |_, y, x| if inside(x, y) { by - ay } else { 0.0 })?,
            ))
        }
    }
}

/// Builds the fields for `shape` and votes them with a noisy-OR Gaussian.
pub fn render_demo(shape: DemoShape) -> Result<Demo> {
    let (c, ox, oy) = fields(shape)?;
    let o = DisplacementField::new(ox, oy)?;
    let voting = Voting::new(
        KernelSpec::gaussian(5)?,
        VoteMode::NoisyOr,
        VoteGraph::within_part(1),
    );
    let (m, _) = voting.forward(&c, &o)?;
    Ok(Demo { shape, c, o, m })
}
