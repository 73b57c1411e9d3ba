//! Training loop and held-out evaluation.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::Result;
use crate::supervision::localization_errors;
use crate::synth::{gen_cross, gen_within, Scene, HELDOUT_SEEDS, TRAIN_SEEDS};

use super::model::{LossBreakdown, ToyNet};
use super::params::RmsPropState;

pub const PCK_TOLERANCE: f64 = 2.0;

/// One metrics-log row. Losses are means over the rows' logging window;
/// held-out columns are empty on rows without an evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub step: usize,
    pub loss: f64,
    pub loss_conf: f64,
    pub loss_offset: f64,
    pub loss_final: f64,
    pub heldout_pck_c: Option<f64>,
    pub heldout_pck_m: Option<f64>,
}

/// Held-out scores of the confidence map (`c`) and the voted map (`m`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalMetrics {
    pub scenes: usize,
    pub pck_c: f64,
    pub pck_m: f64,
    /// Mean argmax distance per joint.
    pub joint_err_c: Vec<f64>,
    pub joint_err_m: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: ToyNet,
    pub log: Vec<MetricsRow>,
    pub eval: EvalMetrics,
}

impl TrainOutcome {
    pub fn write_log(&self, path: impl AsRef<Path>) -> Result<()> {
        write_metrics_csv(&self.log, path)
    }
}

pub fn write_metrics_csv(rows: &[MetricsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn training_scene(task: Task, seed: u64, occlude: bool) -> Scene {
    match task {
        Task::Within => gen_within(seed),
        Task::Cross => gen_cross(seed, occlude),
    }
}

/// Held-out scenes; cross-task scenes have the middle joint occluded.
pub fn heldout_scenes(task: Task, count: usize) -> Vec<Scene> {
    HELDOUT_SEEDS
        .take(count)
        .map(|s| training_scene(task, s, true))
        .collect()
}

pub fn evaluate(net: &ToyNet, scenes: &[Scene]) -> Result<EvalMetrics> {
    let joints = net.voting().graph.num_joints();
    let mut sum_c = vec![0.0; joints];
    let mut sum_m = vec![0.0; joints];
    let mut counts = vec![0usize; joints];
    let (mut hit_c, mut hit_m, mut total) = (0usize, 0usize, 0usize);
    for scene in scenes {
        let p = net.predict(&scene.image)?;
        let ec = localization_errors(&p.c, &scene.keypoints)?;
        let em = localization_errors(&p.m, &scene.keypoints)?;
        for (j, (a, b)) in ec.into_iter().zip(em).enumerate() {
            if let (Some(a), Some(b)) = (a, b) {
                sum_c[j] += a;
                sum_m[j] += b;
                counts[j] += 1;
                total += 1;
                hit_c += usize::from(a <= PCK_TOLERANCE);
                hit_m += usize::from(b <= PCK_TOLERANCE);
            }
        }
    }
    let frac = |hits: usize| {
        if total == 0 {
            f64::NAN
        } else {
            hits as f64 / total as f64
        }
    };
    let mean = |s: Vec<f64>| s.iter().zip(&counts).map(|(s, &n)| s / n as f64).collect();
    Ok(EvalMetrics {
        scenes: scenes.len(),
        pck_c: frac(hit_c),
        pck_m: frac(hit_m),
        joint_err_c: mean(sum_c),
        joint_err_m: mean(sum_m),
    })
}

pub fn train(cfg: &ExperimentConfig) -> Result<TrainOutcome> {
    let mut net = ToyNet::new(cfg)?;
    let mut opt = RmsPropState::new(cfg.train.optimizer(), &net.params);
    let heldout = heldout_scenes(cfg.task, cfg.train.heldout);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    data_rng.set_stream(1);
    let mut log = Vec::new();
    let mut window = (LossBreakdown::default(), 0usize);
    let steps = cfg.train.steps;
    for step in 1..=steps {
        let seed = data_rng.random_range(TRAIN_SEEDS);
        let occlude = data_rng.random_bool(cfg.train.occlusion_prob);
        let scene = training_scene(cfg.task, seed, occlude);
        let l = net.forward_backward(&scene.image, &scene.keypoints, cfg)?;
        opt.step(&mut net.params)?;
        let w = &mut window.0;
        w.total += l.total;
        w.conf += l.conf;
        w.offset += l.offset;
        w.final_map += l.final_map;
        window.1 += 1;
        let eval_now =
            cfg.train.eval_every > 0 && step % cfg.train.eval_every == 0 && step != steps;
        if step % cfg.train.log_every.max(1) == 0 || step == steps || eval_now {
            let n = window.1 as f64;
            let e = if eval_now {
                Some(evaluate(&net, &heldout)?)
            } else {
                None
            };
            log.push(MetricsRow {
                step,
                loss: window.0.total / n,
                loss_conf: window.0.conf / n,
                loss_offset: window.0.offset / n,
                loss_final: window.0.final_map / n,
                heldout_pck_c: e.as_ref().map(|e| e.pck_c),
                heldout_pck_m: e.as_ref().map(|e| e.pck_m),
            });
            window = (LossBreakdown::default(), 0);
        }
    }
    let eval = evaluate(&net, &heldout)?;
    match log.last_mut() {
        Some(row) if row.step == steps => {
            row.heldout_pck_c = Some(eval.pck_c);
            row.heldout_pck_m = Some(eval.pck_m);
        }
        _ => log.push(MetricsRow {
            step: steps,
            loss: f64::NAN,
            loss_conf: f64::NAN,
            loss_offset: f64::NAN,
            loss_final: f64::NAN,
            heldout_pck_c: Some(eval.pck_c),
            heldout_pck_m: Some(eval.pck_m),
        }),
    }
    Ok(TrainOutcome { net, log, eval })
}
