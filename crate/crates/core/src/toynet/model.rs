//! The toy keypoint network: a small conv trunk, a sigmoid confidence head,
//! two linear offset heads with a learnable per-edge scale, and a voting
//! layer on top.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::config::{ExperimentConfig, ModelConfig, Supervision, Task};
use crate::error::Result;
use crate::field::ScalarField;
use crate::supervision::{make_disk_target, make_gaussian_target, make_offset_target, KeypointSet};
use crate::synth::SCENE_SIZE;
use crate::vote::{VoteGraph, VoteMode, Voting};

use super::params::{ParamId, ParamStore};
use super::tape::{LossKind, NodeId, Tape};

/// Initial confidence-head bias; starts every pixel near `sigmoid(-4)` so
/// that noisy-OR voting does not saturate before training.
const CONF_BIAS_INIT: f64 = -4.0;
const HEAD_WEIGHT_STD: f64 = 0.01;

#[derive(Debug, Clone, Copy)]
struct Layer {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Debug, Clone)]
pub struct ToyNet {
    pub params: ParamStore,
    model: ModelConfig,
    trunk: Vec<Layer>,
    conf: Layer,
    off_x: Layer,
    off_y: Layer,
    scale: ParamId,
    voting: Arc<Voting>,
    normalizer: f64,
    threads: usize,
}

/// Node ids of the network outputs on a tape.
#[derive(Debug, Clone, Copy)]
pub struct Heads {
    pub c: NodeId,
    /// Offsets in normalized units, as supervised.
    pub ox_hat: NodeId,
    pub oy_hat: NodeId,
    /// Offsets in pixels, as fed to voting.
    pub ox: NodeId,
    pub oy: NodeId,
    pub m: NodeId,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub conf: f64,
    pub offset: f64,
    pub final_map: f64,
}

pub fn task_graph(task: Task) -> VoteGraph {
    match task {
        Task::Within => VoteGraph::within_part(1),
        Task::Cross => VoteGraph::chain(3).expect("three joints form a chain"),
    }
}

/// Offset normalizer `d`: `eps_c - 1` within a part, the grid size across parts.
pub fn task_normalizer(cfg: &ExperimentConfig) -> f64 {
    match cfg.task {
        Task::Within => cfg.loss.within_part_normalizer(),
        Task::Cross => SCENE_SIZE as f64,
    }
}

fn layer(
    params: &mut ParamStore,
    rng: &mut ChaCha8Rng,
    name: &str,
    fan_in: usize,
    out: usize,
    std: f64,
    bias: f64,
) -> Layer {
    let normal = Normal::new(0.0, std).expect("positive std");
    let w = (0..fan_in * out).map(|_| normal.sample(rng)).collect();
    Layer {
        weight: params.add(format!("{name}.w"), w),
        bias: params.add(format!("{name}.b"), vec![bias; out]),
    }
}

impl ToyNet {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let graph = task_graph(cfg.task);
        let (joints, edges) = (graph.num_joints(), graph.num_edges());
        let m = cfg.model;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
        let mut params = ParamStore::new();
        let mut trunk = Vec::with_capacity(m.layers);
        let mut cin = 1;
        for i in 0..m.layers {
            let fan_in = cin * m.kernel * m.kernel;
            let he = (2.0 / fan_in as f64).sqrt();
            trunk.push(layer(
                &mut params,
                &mut rng,
                &format!("trunk{i}"),
                fan_in,
                m.channels,
                he,
                0.0,
            ));
            cin = m.channels;
        }
        let conf = layer(
            &mut params,
            &mut rng,
            "conf",
            cin,
            joints,
            HEAD_WEIGHT_STD,
            CONF_BIAS_INIT,
        );
        let off_x = layer(
            &mut params,
            &mut rng,
            "offset_x",
            cin,
            edges,
            HEAD_WEIGHT_STD,
            0.0,
        );
        let off_y = layer(
            &mut params,
            &mut rng,
            "offset_y",
            cin,
            edges,
            HEAD_WEIGHT_STD,
            0.0,
        );
        let normalizer = task_normalizer(cfg);
        let scale = params.add("offset_scale", vec![normalizer; edges]);
        Ok(Self {
            params,
            model: m,
            trunk,
            conf,
            off_x,
            off_y,
            scale,
            voting: Arc::new(Voting::new(cfg.kernel, cfg.mode, graph)),
            normalizer,
            threads: cfg.train.threads.max(1),
        })
    }

    pub fn voting(&self) -> &Voting {
        &self.voting
    }

    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Same weights with a different voting layer, for post-hoc evaluation.
    pub fn with_voting(&self, voting: Voting) -> Self {
        Self {
            voting: Arc::new(voting),
            ..self.clone()
        }
    }

    pub fn forward(&self, tape: &mut Tape, image: &ScalarField) -> Result<Heads> {
        let p = &self.params;
        let mut h = tape.input(image.clone());
        for l in &self.trunk {
            h = tape.conv2d(h, l.weight, self.model.channels, self.model.kernel, p)?;
            h = tape.bias(h, l.bias, p)?;
            h = tape.relu(h)?;
        }
        let joints = self.voting.graph.num_joints();
        let edges = self.voting.graph.num_edges();
        let c = tape.conv2d(h, self.conf.weight, joints, 1, p)?;
        let c = tape.bias(c, self.conf.bias, p)?;
        let c = tape.sigmoid(c)?;
        let ox_hat = tape.conv2d(h, self.off_x.weight, edges, 1, p)?;
        let ox_hat = tape.bias(ox_hat, self.off_x.bias, p)?;
        let oy_hat = tape.conv2d(h, self.off_y.weight, edges, 1, p)?;
        let oy_hat = tape.bias(oy_hat, self.off_y.bias, p)?;
        let ox = tape.scale(ox_hat, self.scale, p)?;
        let oy = tape.scale(oy_hat, self.scale, p)?;
        let m = tape.mdn_vote(c, ox, oy, Arc::clone(&self.voting), self.threads)?;
        Ok(Heads {
            c,
            ox_hat,
            oy_hat,
            ox,
            oy,
            m,
        })
    }

    /// Builds the training graph for one image, runs backward, and leaves the
    /// gradients accumulated in `self.params`.
    pub fn forward_backward(
        &mut self,
        image: &ScalarField,
        kps: &KeypointSet,
        cfg: &ExperimentConfig,
    ) -> Result<LossBreakdown> {
        let mut tape = Tape::new();
        let heads = self.forward(&mut tape, image)?;
        let losses = self.attach_losses(&mut tape, &heads, kps, cfg)?;
        self.params.zero_grads();
        tape.backward(&mut self.params)?;
        Ok(losses)
    }

    pub fn attach_losses(
        &self,
        tape: &mut Tape,
        heads: &Heads,
        kps: &KeypointSet,
        cfg: &ExperimentConfig,
    ) -> Result<LossBreakdown> {
        let (h, w) = (image_height(tape, heads), image_width(tape, heads));
        let lp = &cfg.loss;
        let wt = &cfg.weights;
        let mut out = LossBreakdown::default();
        let use_heads = cfg.supervision != Supervision::FinalOnly;
        let use_final = cfg.supervision != Supervision::Baseline;
        if use_heads {
            let disk = make_disk_target(kps, lp.eps_c, h, w)?;
            let n = tape.loss(heads.c, LossKind::Bce, &disk, None, wt.conf)?;
            out.conf = tape.value(n).data()[0];
            let t = make_offset_target(kps, &self.voting.graph, lp.eps_c, self.normalizer, h, w)?;
            let huber = LossKind::Huber {
                delta: lp.huber_delta,
            };
            let nx = tape.loss(heads.ox_hat, huber, &t.ox, Some(&t.mask), wt.offset)?;
            let ny = tape.loss(heads.oy_hat, huber, &t.oy, Some(&t.mask), wt.offset)?;
            out.offset = tape.value(nx).data()[0] + tape.value(ny).data()[0];
        }
        if use_final {
            let n = match self.voting.mode {
                VoteMode::Additive => {
                    let t = make_gaussian_target(kps, lp.gaussian_target_sigma, h, w)?;
                    tape.loss(heads.m, LossKind::Mse, &t, None, wt.final_map)?
                }
                VoteMode::NoisyOr | VoteMode::Max => {
                    let t = make_disk_target(kps, lp.eps_m, h, w)?;
                    tape.loss(heads.m, LossKind::Bce, &t, None, wt.final_map)?
                }
            };
            out.final_map = tape.value(n).data()[0];
        }
        out.total = tape.total_loss();
        Ok(out)
    }

    /// Confidence map and voted map for one image.
    pub fn predict(&self, image: &ScalarField) -> Result<Prediction> {
        let mut tape = Tape::new();
        let heads = self.forward(&mut tape, image)?;
        Ok(Prediction {
            c: tape.value(heads.c).clone(),
            ox: tape.value(heads.ox).clone(),
            oy: tape.value(heads.oy).clone(),
            m: tape.value(heads.m).clone(),
        })
    }
}

fn image_height(tape: &Tape, heads: &Heads) -> usize {
    tape.value(heads.c).height()
}

fn image_width(tape: &Tape, heads: &Heads) -> usize {
    tape.value(heads.c).width()
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub c: ScalarField,
    pub ox: ScalarField,
    pub oy: ScalarField,
    pub m: ScalarField,
}
