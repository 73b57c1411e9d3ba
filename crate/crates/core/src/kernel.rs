//! Vote dilation kernels.
//!
//! A vote landing at the continuous point `t` supports output pixel `q` with
//! weight `K(q - t)`. Gaussian kernels are truncated to a `kf x kf` window
//! centred on the rounded target; bilinear kernels touch the (at most) four
//! integer neighbours of `t`.

use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};

/// Gaussian support sizes accepted by [`KernelSpec::gaussian`].
pub const GAUSSIAN_SUPPORTS: [usize; 6] = [3, 5, 7, 9, 11, 13];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelFamily {
    Gaussian,
    Bilinear,
}

impl std::str::FromStr for KernelFamily {
    type Err = MdnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "bilinear" => Ok(Self::Bilinear),
            other => Err(MdnError::Config(format!("unknown kernel family {other:?}"))),
        }
    }
}

/// Serialized form of a [`KernelSpec`]; `sigma` defaults to `kf / 4`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub family: KernelFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kf: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub normalized: bool,
}

/// Kernel family, support and bandwidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KernelConfig", into = "KernelConfig")]
pub struct KernelSpec {
    family: KernelFamily,
    kf: usize,
    sigma: f64,
    normalized: bool,
}

impl TryFrom<KernelConfig> for KernelSpec {
    type Error = MdnError;

    fn try_from(cfg: KernelConfig) -> Result<Self> {
        let spec = match cfg.family {
            KernelFamily::Bilinear => {
                if let Some(kf) = cfg.kf.filter(|&k| k != 2) {
                    return Err(MdnError::Config(format!(
                        "bilinear kernel has fixed support 2, got kf={kf}"
                    )));
                }
                Self::bilinear()
            }
            KernelFamily::Gaussian => {
                let kf = cfg
                    .kf
                    .ok_or_else(|| MdnError::Config("gaussian kernel needs kf".into()))?;
                match cfg.sigma {
                    Some(sigma) => Self::gaussian_with_sigma(kf, sigma)?,
                    None => Self::gaussian(kf)?,
                }
            }
        };
        Ok(spec.with_normalized(cfg.normalized))
    }
}

impl From<KernelSpec> for KernelConfig {
    fn from(spec: KernelSpec) -> Self {
        match spec.family {
            KernelFamily::Bilinear => KernelConfig {
                family: spec.family,
                kf: Some(2),
                sigma: None,
                normalized: spec.normalized,
            },
            KernelFamily::Gaussian => KernelConfig {
                family: spec.family,
                kf: Some(spec.kf),
                sigma: Some(spec.sigma),
                normalized: spec.normalized,
            },
        }
    }
}

/// Inclusive-exclusive pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelRect {
    pub x0: usize,
    pub x1: usize,
    pub y0: usize,
    pub y1: usize,
}

impl PixelRect {
    pub const EMPTY: PixelRect = PixelRect {
        x0: 0,
        x1: 0,
        y0: 0,
        y1: 0,
    };

    pub fn is_empty(&self) -> bool {
        self.x0 >= self.x1 || self.y0 >= self.y1
    }

    pub fn len(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (self.x1 - self.x0) * (self.y1 - self.y0)
        }
    }

    /// Pixels `(x, y)` in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let (x0, x1) = (self.x0, self.x1);
        (self.y0..self.y1).flat_map(move |y| (x0..x1).map(move |x| (x, y)))
    }
}

/// Clips the inclusive float range `[lo, hi]` to `[0, n)`.
fn clip_axis(lo: f64, hi: f64, n: usize) -> Option<(usize, usize)> {
    let lo = lo.max(0.0);
    let hi = hi.min(n as f64 - 1.0);
    if lo > hi {
        None
    } else {
        Some((lo as usize, hi as usize + 1))
    }
}

impl KernelSpec {
    /// Unnormalized Gaussian with the default bandwidth `sigma = kf / 4`.
    pub fn gaussian(kf: usize) -> Result<Self> {
        Self::gaussian_with_sigma(kf, kf as f64 / 4.0)
    }

    pub fn gaussian_with_sigma(kf: usize, sigma: f64) -> Result<Self> {
        if !GAUSSIAN_SUPPORTS.contains(&kf) {
            return Err(MdnError::Config(format!(
                "gaussian support kf={kf} not in {GAUSSIAN_SUPPORTS:?}"
            )));
        }
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(MdnError::Config(format!(
                "sigma must be positive, got {sigma}"
            )));
        }
        Ok(Self {
            family: KernelFamily::Gaussian,
            kf,
            sigma,
            normalized: false,
        })
    }

    pub fn bilinear() -> Self {
        Self {
            family: KernelFamily::Bilinear,
            kf: 2,
            sigma: 0.0,
            normalized: false,
        }
    }

    /// Toggles the `1 / (2 pi sigma^2)` prefactor. Only meaningful for the
    /// Gaussian family.
    pub fn with_normalized(mut self, normalized: bool) -> Self {
        self.normalized = normalized && self.family == KernelFamily::Gaussian;
        self
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn kf(&self) -> usize {
        self.kf
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Half-width of the truncated Gaussian window (0 for bilinear).
    pub fn radius(&self) -> usize {
        match self.family {
            KernelFamily::Gaussian => self.kf / 2,
            KernelFamily::Bilinear => 0,
        }
    }

    /// Short label such as `gaussian5` or `bilinear`.
    pub fn label(&self) -> String {
        match self.family {
            KernelFamily::Gaussian => format!("gaussian{}", self.kf),
            KernelFamily::Bilinear => "bilinear".to_string(),
        }
    }

    /// `K(d)` for a displacement `d = q - t`.
    #[inline]
    pub fn weight(&self, dx: f64, dy: f64) -> f64 {
        self.axis_weight(dx) * self.axis_weight(dy) * self.scale()
    }

    /// One-axis factor of the separable kernel, without normalization.
    #[inline]
    pub fn axis_weight(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => (-d * d / (2.0 * self.sigma * self.sigma)).exp(),
            KernelFamily::Bilinear => (1.0 - d.abs()).max(0.0),
        }
    }

    /// Constant factor applied on top of the axis factors.
    #[inline]
    pub fn scale(&self) -> f64 {
        match self.family {
            KernelFamily::Gaussian if self.normalized => {
                1.0 / (2.0 * std::f64::consts::PI * self.sigma * self.sigma)
            }
            _ => 1.0,
        }
    }

    /// `(dK/ddx, dK/ddy)`. Bilinear kinks at `|d| in {0, 1}` use subgradient 0.
    #[inline]
    pub fn grad(&self, dx: f64, dy: f64) -> (f64, f64) {
        let (ax, ay) = (self.axis_weight(dx), self.axis_weight(dy));
        let s = self.scale();
        (self.axis_slope(dx) * ay * s, ax * self.axis_slope(dy) * s)
    }

    /// Derivative of `axis_weight`.
    #[inline]
    pub fn axis_slope(&self, d: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => -d / (self.sigma * self.sigma) * self.axis_weight(d),
            KernelFamily::Bilinear => {
                let a = d.abs();
                if a > 0.0 && a < 1.0 {
                    -d.signum()
                } else {
                    0.0
                }
            }
        }
    }

    /// Output pixels supported by a vote landing at `(tx, ty)` on a
    /// `height x width` grid, clipped to the grid.
    #[inline]
    pub fn support_rect(&self, tx: f64, ty: f64, height: usize, width: usize) -> PixelRect {
        let (xr, yr) = match self.family {
            KernelFamily::Gaussian => {
                let r = self.radius() as f64;
                let cx = (tx + 0.5).floor();
                let cy = (ty + 0.5).floor();
                ((cx - r, cx + r), (cy - r, cy + r))
            }
            KernelFamily::Bilinear => ((tx.floor(), tx.ceil()), (ty.floor(), ty.ceil())),
        };
        match (clip_axis(xr.0, xr.1, width), clip_axis(yr.0, yr.1, height)) {
            (Some((x0, x1)), Some((y0, y1))) => PixelRect { x0, x1, y0, y1 },
            _ => PixelRect::EMPTY,
        }
    }

    /// List form of [`support_rect`](Self::support_rect): pixels `(x, y)`.
    pub fn support_window(
        &self,
        tx: f64,
        ty: f64,
        height: usize,
        width: usize,
    ) -> Vec<(usize, usize)> {
        self.support_rect(tx, ty, height, width).pixels().collect()
    }
}
