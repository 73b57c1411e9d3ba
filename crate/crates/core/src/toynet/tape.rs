//! A small reverse-mode tape over dense channel-major fields.
//!
//! Nodes are appended in evaluation order, so a reverse sweep visits every
//! node after all of its consumers.

use std::sync::Arc;

use crate::error::{MdnError, Result};
use crate::field::{DisplacementField, ScalarField};
use crate::supervision::{bce_loss, huber_loss_masked, mse_loss};
use crate::vote::{VoteContext, Voting};

use super::conv::{conv2d_backward, conv2d_forward, ConvDims};
use super::params::{ParamId, ParamStore};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Bce,
    Huber { delta: f64 },
    Mse,
}

#[derive(Debug, Clone)]
pub enum OpKind {
    Input,
    Conv2d {
        weight: ParamId,
        dims: ConvDims,
    },
    Bias {
        bias: ParamId,
    },
    Relu,
    Sigmoid,
    /// Per-channel multiplication by a learnable scale.
    Scale {
        scale: ParamId,
    },
    MdnVote {
        voting: Arc<Voting>,
        ctx: VoteContext,
        threads: usize,
    },
    Loss {
        kind: LossKind,
        weight: f64,
        grad: ScalarField,
    },
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::Input => "input",
            OpKind::Conv2d { .. } => "conv2d",
            OpKind::Bias { .. } => "bias",
            OpKind::Relu => "relu",
            OpKind::Sigmoid => "sigmoid",
            OpKind::Scale { .. } => "scale",
            OpKind::MdnVote { .. } => "mdn_vote",
            OpKind::Loss { .. } => "loss",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TapeNode {
    pub op: OpKind,
    pub inputs: Vec<NodeId>,
    /// Loss nodes hold a 1x1x1 field with the unweighted loss.
    pub value: ScalarField,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<TapeNode>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn nodes(&self) -> &[TapeNode] {
        &self.nodes
    }

    pub fn value(&self, id: NodeId) -> &ScalarField {
        &self.nodes[id].value
    }

    fn push(
        &mut self,
        op: OpKind,
        inputs: Vec<NodeId>,
        value: ScalarField,
        requires_grad: bool,
    ) -> NodeId {
        self.nodes.push(TapeNode {
            op,
            inputs,
            value,
            requires_grad,
        });
        self.nodes.len() - 1
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id].requires_grad
    }

    pub fn input(&mut self, field: ScalarField) -> NodeId {
        self.push(OpKind::Input, vec![], field, false)
    }

    pub fn conv2d(
        &mut self,
        x: NodeId,
        weight: ParamId,
        out_channels: usize,
        kernel: usize,
        params: &ParamStore,
    ) -> Result<NodeId> {
        let v = &self.nodes[x].value;
        let dims = ConvDims {
            in_channels: v.channels(),
            out_channels,
            kernel,
            height: v.height(),
            width: v.width(),
        };
        dims.validate(v.len(), params.value(weight).len())?;
        let out = conv2d_forward(v.data(), params.value(weight), dims);
        let value = ScalarField::from_vec(dims.height, dims.width, out_channels, out)?;
        Ok(self.push(OpKind::Conv2d { weight, dims }, vec![x], value, true))
    }

    pub fn bias(&mut self, x: NodeId, bias: ParamId, params: &ParamStore) -> Result<NodeId> {
        let value = self.per_channel(x, params.value(bias), |v, b| v + b)?;
        Ok(self.push(OpKind::Bias { bias }, vec![x], value, true))
    }

    pub fn scale(&mut self, x: NodeId, scale: ParamId, params: &ParamStore) -> Result<NodeId> {
        let value = self.per_channel(x, params.value(scale), |v, s| v * s)?;
        Ok(self.push(OpKind::Scale { scale }, vec![x], value, true))
    }

    fn per_channel(
        &self,
        x: NodeId,
        p: &[f64],
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<ScalarField> {
        let v = &self.nodes[x].value;
        if p.len() != v.channels() {
            return Err(MdnError::Shape(format!(
                "per-channel parameter has {} values for {} channels",
                p.len(),
                v.channels()
            )));
        }
        let plane = v.shape().plane_len();
        let data = v
            .data()
            .iter()
            .enumerate()
            .map(|(i, &a)| f(a, p[i / plane]))
            .collect();
        ScalarField::from_shape_vec(v.shape(), data)
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.nodes[x].value.map(|v| v.max(0.0))?;
        let rg = self.needs(x);
        Ok(self.push(OpKind::Relu, vec![x], value, rg))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> Result<NodeId> {
        let value = self.nodes[x].value.map(|v| 1.0 / (1.0 + (-v).exp()))?;
        let rg = self.needs(x);
        Ok(self.push(OpKind::Sigmoid, vec![x], value, rg))
    }

    pub fn mdn_vote(
        &mut self,
        c: NodeId,
        ox: NodeId,
        oy: NodeId,
        voting: Arc<Voting>,
        threads: usize,
    ) -> Result<NodeId> {
        let o = DisplacementField::new(self.nodes[ox].value.clone(), self.nodes[oy].value.clone())?;
        let (m, ctx) = voting.forward_threads(&self.nodes[c].value, &o, threads)?;
        let rg = self.needs(c) || self.needs(ox) || self.needs(oy);
        Ok(self.push(
            OpKind::MdnVote {
                voting,
                ctx,
                threads,
            },
            vec![c, ox, oy],
            m,
            rg,
        ))
    }

    /// Appends a loss term; its gradient is scaled by `weight` on backward.
    pub fn loss(
        &mut self,
        x: NodeId,
        kind: LossKind,
        target: &ScalarField,
        mask: Option<&ScalarField>,
        weight: f64,
    ) -> Result<NodeId> {
        let pred = &self.nodes[x].value;
        let (value, grad) = match (kind, mask) {
            (LossKind::Bce, None) => bce_loss(pred, target)?,
            (LossKind::Mse, None) => mse_loss(pred, target)?,
            (LossKind::Huber { delta }, Some(mask)) => {
                huber_loss_masked(pred, target, mask, delta)?
            }
            (LossKind::Huber { .. }, None) => {
                return Err(MdnError::Config("huber loss needs a mask".into()))
            }
            (_, Some(_)) => {
                return Err(MdnError::Config("only the huber loss takes a mask".into()))
            }
        };
        let rg = self.needs(x);
        let value = ScalarField::new(1, 1, 1, value)?;
        Ok(self.push(OpKind::Loss { kind, weight, grad }, vec![x], value, rg))
    }

    /// Weighted sum of all loss nodes.
    pub fn total_loss(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                OpKind::Loss { weight, .. } => Some(weight * n.value.data()[0]),
                _ => None,
            })
            .sum()
    }

    /// Accumulates d(total loss)/d(param) into `params` and returns the total
    /// loss.
    pub fn backward(&self, params: &mut ParamStore) -> Result<f64> {
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let add = |grads: &mut Vec<Option<Vec<f64>>>, id: NodeId, g: Vec<f64>| match &mut grads[id]
        {
            Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
            slot @ None => *slot = Some(g),
        };
        for id in (0..self.nodes.len()).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            if let OpKind::Loss { weight, grad, .. } = &node.op {
                add(
                    &mut grads,
                    node.inputs[0],
                    grad.data().iter().map(|g| weight * g).collect(),
                );
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            let x = node.inputs.first().copied();
            match &node.op {
                OpKind::Input | OpKind::Loss { .. } => {}
                OpKind::Conv2d { weight, dims } => {
                    let x = x.expect("conv input");
                    let (gi, gw) = conv2d_backward(
                        self.nodes[x].value.data(),
                        params.value(*weight),
                        &g,
                        *dims,
                        self.needs(x),
                    );
                    params.accumulate(*weight, &gw);
                    if let Some(gi) = gi {
                        add(&mut grads, x, gi);
                    }
                }
                OpKind::Bias { bias } => {
                    let plane = node.value.shape().plane_len();
                    let gb: Vec<f64> = g.chunks(plane).map(|c| c.iter().sum()).collect();
                    params.accumulate(*bias, &gb);
                    let x = x.expect("bias input");
                    if self.needs(x) {
                        add(&mut grads, x, g);
                    }
                }
                OpKind::Scale { scale } => {
                    let x = x.expect("scale input");
                    let plane = node.value.shape().plane_len();
                    let input = self.nodes[x].value.data();
                    let gs: Vec<f64> = g
                        .chunks(plane)
                        .zip(input.chunks(plane))
                        .map(|(gc, xc)| gc.iter().zip(xc).map(|(a, b)| a * b).sum())
                        .collect();
                    if self.needs(x) {
                        let s = params.value(*scale);
                        let gi = g
                            .iter()
                            .enumerate()
                            .map(|(i, v)| v * s[i / plane])
                            .collect();
                        add(&mut grads, x, gi);
                    }
                    params.accumulate(*scale, &gs);
                }
                OpKind::Relu => {
                    let x = x.expect("relu input");
                    let gi = g
                        .iter()
                        .zip(self.nodes[x].value.data())
                        .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                        .collect();
                    add(&mut grads, x, gi);
                }
                OpKind::Sigmoid => {
                    let gi = g
                        .iter()
                        .zip(node.value.data())
                        .map(|(g, &s)| g * s * (1.0 - s))
                        .collect();
                    add(&mut grads, x.expect("sigmoid input"), gi);
                }
                OpKind::MdnVote {
                    voting,
                    ctx,
                    threads,
                } => {
                    let (c, ox, oy) = (node.inputs[0], node.inputs[1], node.inputs[2]);
                    let o = DisplacementField::new(
                        self.nodes[ox].value.clone(),
                        self.nodes[oy].value.clone(),
                    )?;
                    let grad_m = ScalarField::from_shape_vec(node.value.shape(), g)?;
                    let vg = voting.backward_threads(
                        &grad_m,
                        &self.nodes[c].value,
                        &o,
                        ctx,
                        *threads,
                    )?;
                    for (input, gi) in [(c, vg.c), (ox, vg.ox), (oy, vg.oy)] {
                        if self.needs(input) {
                            add(&mut grads, input, gi.into_vec());
                        }
                    }
                }
            }
        }
        Ok(self.total_loss())
    }
}
