//! The mass-displacement voting operator.
//!
//! Every input pixel `x` of source joint `j` casts, for each edge `(j, k)`,
//! a vote at `x' = x + o_{jk}(x)`. The vote is dilated by the kernel and
//! lands on output channel `k` with contribution `w = K(x_o - x') c_j(x)`.
//! Contributions are combined per output pixel by summation, noisy-OR
//! (`1 - prod(1 - w)`, accumulated as a log-survival sum) or maximum.
//!
//! The forward pass scatters (input pixels write into their output windows);
//! the backward pass is the matching gather, so each input pixel reads the
//! gradient of the outputs it touched.

mod graph;
mod parallel;

pub use graph::{Edge, VoteGraph};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};
use crate::field::{DisplacementField, GradSignal, ScalarField, Shape};
use crate::kernel::{KernelSpec, PixelRect};

/// Upper bound applied to each contribution before `log1p(-w c)` so a
/// certain vote yields a finite log-survival.
pub const CONTRIBUTION_CLAMP: f64 = 1.0 - 1e-12;

/// How contributions landing on the same output pixel are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum VoteMode {
    #[serde(rename = "additive")]
    Additive,
    #[serde(rename = "noisyor", alias = "noisy_or")]
    NoisyOr,
    #[serde(rename = "max")]
    Max,
}

impl VoteMode {
    pub const ALL: [VoteMode; 3] = [VoteMode::Additive, VoteMode::NoisyOr, VoteMode::Max];

    pub fn name(&self) -> &'static str {
        match self {
            VoteMode::Additive => "additive",
            VoteMode::NoisyOr => "noisyor",
            VoteMode::Max => "max",
        }
    }

    /// Whether outputs are probabilities (and inputs must be).
    pub fn is_probabilistic(&self) -> bool {
        !matches!(self, VoteMode::Additive)
    }
}

impl std::fmt::Display for VoteMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VoteMode {
    type Err = MdnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "additive" => Ok(VoteMode::Additive),
            "noisyor" | "noisy_or" | "noisy-or" => Ok(VoteMode::NoisyOr),
            "max" => Ok(VoteMode::Max),
            other => Err(MdnError::Config(format!("unknown vote mode {other:?}"))),
        }
    }
}

/// The input pixel and edge that won a max-mode output pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Contributor {
    pub edge: usize,
    pub pixel: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum ContextState {
    Additive,
    NoisyOr {
        log_survival: Vec<f64>,
        survival: Vec<f64>,
    },
    Max { winners: Vec<Option<Contributor>> },
}

/// State cached by the forward pass for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteContext {
    mode: VoteMode,
    output_shape: Shape,
    num_edges: usize,
    state: ContextState,
}

impl VoteContext {
    pub fn mode(&self) -> VoteMode {
        self.mode
    }

    pub fn output_shape(&self) -> Shape {
        self.output_shape
    }

    /// Per-output-pixel `S(x_o) = sum log(1 - w c)` (noisy-OR only).
    pub fn log_survival(&self) -> Option<&[f64]> {
        match &self.state {
            ContextState::NoisyOr { log_survival, .. } => Some(log_survival),
            _ => None,
        }
    }

    fn survival(&self) -> Option<&[f64]> {
        match &self.state {
            ContextState::NoisyOr { survival, .. } => Some(survival),
            _ => None,
        }
    }

    /// Per-output-pixel argmax record (max mode only).
    pub fn winners(&self) -> Option<&[Option<Contributor>]> {
        match &self.state {
            ContextState::Max { winners } => Some(winners),
            _ => None,
        }
    }
}

/// Gradients of a loss with respect to the operator inputs.
#[derive(Debug, Clone, PartialEq)]
pub struct VoteGrads {
    pub c: GradSignal,
    pub ox: GradSignal,
    pub oy: GradSignal,
}

/// Per-worker accumulation buffer for the scatter pass.
#[derive(Debug, Clone)]
pub(crate) enum Accum {
    /// Plain sums (additive) or log-survival sums (noisy-OR).
    Sum(Vec<f64>),
    Max {
        best: Vec<f64>,
        winners: Vec<Option<Contributor>>,
    },
}

/// A configured voting operator.
#[derive(Debug, Clone, PartialEq)]
pub struct Voting {
    pub kernel: KernelSpec,
    pub mode: VoteMode,
    pub graph: VoteGraph,
}

/// Geometry of one vote, shared by the forward and backward passes.
struct Vote {
    source: usize,
    target: usize,
    conf: f64,
    tx: f64,
    ty: f64,
    rect: PixelRect,
}

impl Voting {
    pub fn new(kernel: KernelSpec, mode: VoteMode, graph: VoteGraph) -> Self {
        Self {
            kernel,
            mode,
            graph,
        }
    }

    fn validate(&self, c: &ScalarField, o: &DisplacementField) -> Result<()> {
        if c.channels() != self.graph.num_joints() {
            return Err(MdnError::Shape(format!(
                "confidence has {} channels but the graph has {} joints",
                c.channels(),
                self.graph.num_joints()
            )));
        }
        if o.edge_count() != self.graph.num_edges() {
            return Err(MdnError::Shape(format!(
                "displacement has {} channels but the graph has {} edges",
                o.edge_count(),
                self.graph.num_edges()
            )));
        }
        if (o.shape().height, o.shape().width) != (c.height(), c.width()) {
            return Err(MdnError::Shape(format!(
                "displacement grid {} does not match confidence grid {}",
                o.shape(),
                c.shape()
            )));
        }
        if self.mode.is_probabilistic() {
            c.ensure_unit_interval("confidence")?;
        }
        Ok(())
    }

    fn output_shape(&self, c: &ScalarField) -> Shape {
        c.shape().with_channels(self.graph.num_joints())
    }

    /// Number of scatter work items: one per (edge, input pixel).
    fn work_items(&self, c: &ScalarField) -> usize {
        self.graph.num_edges() * c.height() * c.width()
    }

    #[inline]
    fn vote(&self, c: &ScalarField, o: &DisplacementField, item: usize) -> Vote {
        let (h, w) = (c.height(), c.width());
        let hw = h * w;
        let (e, p) = (item / hw, item % hw);
        let edge = self.graph.edges()[e];
        let tx = (p % w) as f64 + o.ox().data()[item];
        let ty = (p / w) as f64 + o.oy().data()[item];
        Vote {
            source: edge.source,
            target: edge.target,
            conf: c.data()[edge.source * hw + p],
            tx,
            ty,
            rect: self.kernel.support_rect(tx, ty, h, w),
        }
    }

    pub(crate) fn new_accum(&self, len: usize) -> Accum {
        match self.mode {
            VoteMode::Additive | VoteMode::NoisyOr => Accum::Sum(vec![0.0; len]),
            VoteMode::Max => Accum::Max {
                best: vec![0.0; len],
                winners: vec![None; len],
            },
        }
    }

    /// Scatters the work items in `items` (in increasing order) into `acc`.
    pub(crate) fn scatter(
        &self,
        c: &ScalarField,
        o: &DisplacementField,
        items: Range<usize>,
        acc: &mut Accum,
    ) {
        let (h, w) = (c.height(), c.width());
        let hw = h * w;
        let scale = self.kernel.scale();
        let mut wx = Vec::new();
        for item in items {
            let v = self.vote(c, o, item);
            let base = v.target * hw;
            let r = v.rect;
            // the kernel is separable: one row of x factors per vote
            wx.clear();
            wx.extend((r.x0..r.x1).map(|qx| self.kernel.axis_weight(qx as f64 - v.tx)));
            for qy in r.y0..r.y1 {
                let wy = self.kernel.axis_weight(qy as f64 - v.ty) * scale * v.conf;
                for (qx, &kx) in (r.x0..r.x1).zip(&wx) {
                    let contrib = kx * wy;
                    let out = base + qy * w + qx;
                    match acc {
                        Accum::Sum(buf) => match self.mode {
                            VoteMode::NoisyOr => {
                                buf[out] += (-contrib.min(CONTRIBUTION_CLAMP)).ln_1p()
                            }
                            _ => buf[out] += contrib,
                        },
                        Accum::Max { best, winners } => {
                            if winners[out].is_none() || contrib > best[out] {
                                best[out] = contrib;
                                winners[out] = Some(Contributor {
                                    edge: item / hw,
                                    pixel: item % hw,
                                });
                            }
                        }
                    }
                }
            }
        }
    }

    pub(crate) fn finish(&self, c: &ScalarField, acc: Accum) -> Result<(ScalarField, VoteContext)> {
        let shape = self.output_shape(c);
        let (values, state) = match (self.mode, acc) {
            (VoteMode::Additive, Accum::Sum(buf)) => (buf, ContextState::Additive),
            (VoteMode::NoisyOr, Accum::Sum(log_survival)) => (
                // written as a subtraction so an empty pixel reads +0, not -0
                log_survival.iter().map(|&s| 0.0 - s.exp_m1()).collect(),
                ContextState::NoisyOr {
                    survival: log_survival.iter().map(|s| s.exp()).collect(),
                    log_survival,
                },
            ),
            (VoteMode::Max, Accum::Max { best, winners }) => (best, ContextState::Max { winners }),
            _ => unreachable!("accumulator does not match vote mode"),
        };
        let m = ScalarField::from_shape_vec(shape, values)?;
        Ok((
            m,
            VoteContext {
                mode: self.mode,
                output_shape: shape,
                num_edges: self.graph.num_edges(),
                state,
            },
        ))
    }

    /// Single-threaded reference forward pass.
    pub fn forward(
        &self,
        c: &ScalarField,
        o: &DisplacementField,
    ) -> Result<(ScalarField, VoteContext)> {
        self.validate(c, o)?;
        let mut acc = self.new_accum(self.output_shape(c).len());
        self.scatter(c, o, 0..self.work_items(c), &mut acc);
        self.finish(c, acc)
    }

    /// Forward pass split over `threads` workers with an ordered reduction.
    /// `threads <= 1` runs the reference path.
    pub fn forward_threads(
        &self,
        c: &ScalarField,
        o: &DisplacementField,
        threads: usize,
    ) -> Result<(ScalarField, VoteContext)> {
        if threads <= 1 {
            return self.forward(c, o);
        }
        self.validate(c, o)?;
        let acc = parallel::scatter(self, c, o, threads);
        self.finish(c, acc)
    }

    fn validate_backward(
        &self,
        grad_m: &GradSignal,
        c: &ScalarField,
        o: &DisplacementField,
        ctx: &VoteContext,
    ) -> Result<()> {
        self.validate(c, o)?;
        let shape = self.output_shape(c);
        if ctx.mode != self.mode
            || ctx.output_shape != shape
            || ctx.num_edges != self.graph.num_edges()
        {
            return Err(MdnError::Context(format!(
                "context from a {} forward over {} with {} edges cannot serve a {} backward over {} with {} edges",
                ctx.mode,
                ctx.output_shape,
                ctx.num_edges,
                self.mode,
                shape,
                self.graph.num_edges()
            )));
        }
        if grad_m.shape() != shape {
            return Err(MdnError::Shape(format!(
                "output gradient {} does not match output {}",
                grad_m.shape(),
                shape
            )));
        }
        Ok(())
    }

    /// Gathers gradients for the work items in `items`.
    ///
    /// `grad_ox`/`grad_oy` are the slices for exactly those items; confidence
    /// gradients are added into the full-size `grad_c`.
    pub(crate) fn gather(
        &self,
        grad_m: &GradSignal,
        c: &ScalarField,
        o: &DisplacementField,
        ctx: &VoteContext,
        items: Range<usize>,
        grad_c: &mut [f64],
        grad_ox: &mut [f64],
        grad_oy: &mut [f64],
    ) {
        let (h, w) = (c.height(), c.width());
        let hw = h * w;
        let delta = grad_m.data();
        let survival = ctx.survival();
        let scale = self.kernel.scale();
        let start = items.start;
        let (mut ax, mut sx) = (Vec::new(), Vec::new());
        for item in items {
            let v = self.vote(c, o, item);
            let base = v.target * hw;
            let r = v.rect;
            ax.clear();
            sx.clear();
            for qx in r.x0..r.x1 {
                let d = qx as f64 - v.tx;
                ax.push(self.kernel.axis_weight(d));
                sx.push(self.kernel.axis_slope(d));
            }
            let (mut gc, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for qy in r.y0..r.y1 {
                let d = qy as f64 - v.ty;
                let ay = self.kernel.axis_weight(d) * scale;
                let sy = self.kernel.axis_slope(d) * scale;
                let row = base + qy * w;
                for (i, qx) in (r.x0..r.x1).enumerate() {
                    let out = row + qx;
                    let g = delta[out];
                    if g == 0.0 {
                        continue;
                    }
                    let wt = ax[i] * ay;
                    // dm/dc and dm/dw for this (input, output) pair
                    let (dm_dc, dm_dw) = match survival {
                        None => (wt, v.conf),
                        Some(s) => {
                            let p = wt * v.conf;
                            if p >= CONTRIBUTION_CLAMP {
                                (0.0, 0.0)
                            } else {
                                let others = s[out] / (1.0 - p);
                                (wt * others, v.conf * others)
                            }
                        }
                    };
                    gc += g * dm_dc;
                    // d = x_o - x - o(x), so dw/do = -dK/dd
                    gx -= g * dm_dw * sx[i] * ay;
                    gy -= g * dm_dw * ax[i] * sy;
                }
            }
            grad_c[v.source * hw + item % hw] += gc;
            grad_ox[item - start] += gx;
            grad_oy[item - start] += gy;
        }
    }

    fn backward_max(
        &self,
        grad_m: &GradSignal,
        c: &ScalarField,
        o: &DisplacementField,
        winners: &[Option<Contributor>],
    ) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let (h, w) = (c.height(), c.width());
        let hw = h * w;
        let mut grad_c = vec![0.0; c.len()];
        let mut grad_ox = vec![0.0; self.work_items(c)];
        let mut grad_oy = vec![0.0; self.work_items(c)];
        for (out, winner) in winners.iter().enumerate() {
            let (Some(win), d) = (winner, grad_m.data()[out]) else {
                continue;
            };
            if d == 0.0 {
                continue;
            }
            let item = win.edge * hw + win.pixel;
            let v = self.vote(c, o, item);
            let q = out % hw;
            let (dx, dy) = ((q % w) as f64 - v.tx, (q / w) as f64 - v.ty);
            let (kx, ky) = self.kernel.grad(dx, dy);
            grad_c[v.source * hw + win.pixel] += d * self.kernel.weight(dx, dy);
            grad_ox[item] -= d * v.conf * kx;
            grad_oy[item] -= d * v.conf * ky;
        }
        (grad_c, grad_ox, grad_oy)
    }

    fn package(&self, c: &ScalarField, parts: (Vec<f64>, Vec<f64>, Vec<f64>)) -> Result<VoteGrads> {
        let edges_shape = c.shape().with_channels(self.graph.num_edges());
        Ok(VoteGrads {
            c: ScalarField::from_shape_vec(c.shape(), parts.0)?,
            ox: ScalarField::from_shape_vec(edges_shape, parts.1)?,
            oy: ScalarField::from_shape_vec(edges_shape, parts.2)?,
        })
    }

    /// Single-threaded reference backward pass.
    pub fn backward(
        &self,
        grad_m: &GradSignal,
        c: &ScalarField,
        o: &DisplacementField,
        ctx: &VoteContext,
    ) -> Result<VoteGrads> {
        self.validate_backward(grad_m, c, o, ctx)?;
        if let Some(winners) = ctx.winners() {
            return self.package(c, self.backward_max(grad_m, c, o, winners));
        }
        let n = self.work_items(c);
        let mut grad_c = vec![0.0; c.len()];
        let mut grad_ox = vec![0.0; n];
        let mut grad_oy = vec![0.0; n];
        self.gather(
            grad_m,
            c,
            o,
            ctx,
            0..n,
            &mut grad_c,
            &mut grad_ox,
            &mut grad_oy,
        );
        self.package(c, (grad_c, grad_ox, grad_oy))
    }

    /// Backward pass split over `threads` workers. Max mode routes each
    /// output to a single contributor and always runs the reference path.
    pub fn backward_threads(
        &self,
        grad_m: &GradSignal,
        c: &ScalarField,
        o: &DisplacementField,
        ctx: &VoteContext,
        threads: usize,
    ) -> Result<VoteGrads> {
        if threads <= 1 || self.mode == VoteMode::Max {
            return self.backward(grad_m, c, o, ctx);
        }
        self.validate_backward(grad_m, c, o, ctx)?;
        let parts = parallel::gather(self, grad_m, c, o, ctx, threads);
        self.package(c, parts)
    }
}

/// Forward voting; see [`Voting::forward`].
pub fn vote_forward(
    c: &ScalarField,
    o: &DisplacementField,
    kernel: &KernelSpec,
    mode: VoteMode,
    graph: &VoteGraph,
) -> Result<(ScalarField, VoteContext)> {
    Voting::new(*kernel, mode, graph.clone()).forward(c, o)
}

/// Backward voting; see [`Voting::backward`].
pub fn vote_backward(
    grad_m: &GradSignal,
    c: &ScalarField,
    o: &DisplacementField,
    kernel: &KernelSpec,
    mode: VoteMode,
    graph: &VoteGraph,
    ctx: &VoteContext,
) -> Result<VoteGrads> {
    Voting::new(*kernel, mode, graph.clone()).backward(grad_m, c, o, ctx)
}

#[cfg(test)]
mod tests;
