//! Stride-1, same-padded 2-D cross-correlation on channel-major planes.
//!
//! Weights are laid out `[out][in][ky][kx]`. Both passes unfold the input
//! into patches and hand the products to `matrixmultiply`.

use std::cell::RefCell;

use crate::error::{MdnError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub height: usize,
    pub width: usize,
}

impl ConvDims {
    pub fn validate(&self, input_len: usize, weight_len: usize) -> Result<()> {
        if self.kernel % 2 == 0 {
            return Err(MdnError::Shape(format!(
                "conv kernel must be odd, got {}",
                self.kernel
            )));
        }
        let plane = self.height * self.width;
        if input_len != self.in_channels * plane {
            return Err(MdnError::Shape(format!(
                "conv input has {input_len} values, expected {}x{}x{}",
                self.in_channels, self.height, self.width
            )));
        }
        let expected = self.out_channels * self.in_channels * self.kernel * self.kernel;
        if weight_len != expected {
            return Err(MdnError::Shape(format!(
                "conv weights have {weight_len} values, expected {expected}"
            )));
        }
        Ok(())
    }

    fn plane(&self) -> usize {
        self.height * self.width
    }

    /// Output rows and columns touched by tap offset `(dy, dx)` and the
    /// matching input column start.
    fn tap(
        &self,
        ky: usize,
        kx: usize,
    ) -> (std::ops::Range<usize>, std::ops::Range<usize>, isize, isize) {
        let r = (self.kernel / 2) as isize;
        let (dy, dx) = (ky as isize - r, kx as isize - r);
        let rows = clip(dy, self.height);
        let cols = clip(dx, self.width);
        (rows, cols, dy, dx)
    }
}

// output positions p with 0 <= p + d < n
fn clip(d: isize, n: usize) -> std::ops::Range<usize> {
    let lo = (-d).max(0) as usize;
    let hi = (n as isize - d).clamp(0, n as isize) as usize;
    lo.min(hi)..hi
}

thread_local! {
    // patch matrices run to megabytes; reusing them avoids a fresh mapping per call
    static COLS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
    static GRAD_COLS: RefCell<Vec<f64>> = const { RefCell::new(Vec::new()) };
}

/// Unfolds the input into a `[in * k * k][plane]` patch matrix in `cols`;
/// out-of-frame taps are zero.
fn im2col(input: &[f64], dims: ConvDims, cols: &mut Vec<f64>) {
    let (k, w, plane) = (dims.kernel, dims.width, dims.plane());
    // every entry is written below, so stale contents need no clearing
    cols.resize(dims.in_channels * k * k * plane, 0.0);
    for ci in 0..dims.in_channels {
        let x = &input[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((ci * k + ky) * k + kx) * plane..][..plane];
                let (rows, c, dy, dx) = dims.tap(ky, kx);
                let xs = (c.start as isize + dx) as usize;
                row[..rows.start * w].fill(0.0);
                row[rows.end * w..].fill(0.0);
                for y in rows {
                    let r = &mut row[y * w..(y + 1) * w];
                    let src = ((y as isize + dy) as usize) * w + xs;
                    r[..c.start].fill(0.0);
                    r[c.start..c.end].copy_from_slice(&x[src..src + c.len()]);
                    r[c.end..].fill(0.0);
                }
            }
        }
    }
}

// inverse of im2col: sums every patch entry back onto its source pixel
fn col2im(cols: &[f64], dims: ConvDims) -> Vec<f64> {
    let (k, w, plane) = (dims.kernel, dims.width, dims.plane());
    let mut out = vec![0.0; dims.in_channels * plane];
    for ci in 0..dims.in_channels {
        let x = &mut out[ci * plane..(ci + 1) * plane];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((ci * k + ky) * k + kx) * plane..][..plane];
                let (rows, c, dy, dx) = dims.tap(ky, kx);
                let xs = (c.start as isize + dx) as usize;
                for y in rows {
                    let src = ((y as isize + dy) as usize) * w + xs;
                    for (d, s) in x[src..src + c.len()]
                        .iter_mut()
                        .zip(&row[y * w + c.start..y * w + c.end])
                    {
                        *d += s;
                    }
                }
            }
        }
    }
    out
}

/// `c = a * b` (or its transposes) for row-major operands.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_trans: bool,
    b: &[f64],
    b_trans: bool,
    c: &mut [f64],
) {
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements whose presence is asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub fn conv2d_forward(input: &[f64], weights: &[f64], dims: ConvDims) -> Vec<f64> {
    let plane = dims.plane();
    let taps = dims.in_channels * dims.kernel * dims.kernel;
    let mut out = vec![0.0; dims.out_channels * plane];
    if dims.kernel == 1 {
        gemm(dims.out_channels, taps, plane, weights, false, input, false, &mut out);
    } else {
        COLS.with_borrow_mut(|cols| {
            im2col(input, dims, cols);
            gemm(dims.out_channels, taps, plane, weights, false, cols, false, &mut out);
        });
    }
    out
}

/// Returns `(grad_input, grad_weights)`; the input gradient is skipped when
/// `need_input` is false.
pub fn conv2d_backward(
    input: &[f64],
    weights: &[f64],
    grad_out: &[f64],
    dims: ConvDims,
    need_input: bool,
) -> (Option<Vec<f64>>, Vec<f64>) {
    let plane = dims.plane();
    let taps = dims.in_channels * dims.kernel * dims.kernel;
    COLS.with_borrow_mut(|owned| {
        let cols = if dims.kernel == 1 {
            input
        } else {
            im2col(input, dims, owned);
            owned.as_slice()
        };
        let mut grad_w = vec![0.0; weights.len()];
        gemm(dims.out_channels, plane, taps, grad_out, false, cols, true, &mut grad_w);
        let grad_in = need_input.then(|| {
            if dims.kernel == 1 {
                let mut gi = vec![0.0; taps * plane];
                gemm(taps, dims.out_channels, plane, weights, true, grad_out, false, &mut gi);
                return gi;
            }
            GRAD_COLS.with_borrow_mut(|gc| {
                // beta is 0, so dgemm overwrites every entry
                gc.resize(taps * plane, 0.0);
                gemm(taps, dims.out_channels, plane, weights, true, grad_out, false, gc);
                col2im(gc, dims)
            })
        });
        (grad_in, grad_w)
    })
}
