//! Experiment configuration, read from JSON.

use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};
use crate::kernel::KernelSpec;
use crate::supervision::LossParams;
use crate::toynet::params::RmsPropConfig;
use crate::vote::VoteMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// One joint voting for itself.
    Within,
    /// Three joints on a chain voting along the chain; the middle one is
    /// occluded at evaluation.
    Cross,
}

impl FromStr for Task {
    type Err = MdnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "within" => Ok(Task::Within),
            "cross" => Ok(Task::Cross),
            _ => Err(MdnError::Config(format!("unknown task {s:?}"))),
        }
    }
}

/// Which loss terms drive training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Supervision {
    /// Confidence, offset and voted-map losses, backpropagated through voting.
    Mdn,
    /// Confidence and offset losses only; voting is applied at evaluation.
    Baseline,
    /// Only the voted-map loss.
    FinalOnly,
}

impl FromStr for Supervision {
    type Err = MdnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mdn" => Ok(Supervision::Mdn),
            "baseline" => Ok(Supervision::Baseline),
            "final_only" | "final-only" => Ok(Supervision::FinalOnly),
            _ => Err(MdnError::Config(format!("unknown supervision {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub channels: usize,
    pub layers: usize,
    pub kernel: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 16,
            layers: 3,
            kernel: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub conf: f64,
    pub offset: f64,
    #[serde(rename = "final")]
    pub final_map: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            conf: 1.0,
            offset: 1.0,
            final_map: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainParams {
    pub steps: usize,
    pub lr: f64,
    pub decay: f64,
    pub seed: u64,
    /// Held-out evaluation period in steps; 0 evaluates only at the end.
    pub eval_every: usize,
    pub log_every: usize,
    /// Number of held-out scenes used for evaluation.
    pub heldout: usize,
    /// Probability of occluding the middle joint in cross-task training scenes.
    pub occlusion_prob: f64,
    pub threads: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        Self {
            steps: 1500,
            lr: 0.0025,
            decay: 0.99,
            seed: 0,
            eval_every: 0,
            log_every: 50,
            heldout: 200,
            occlusion_prob: 0.5,
            threads: 1,
        }
    }
}

impl TrainParams {
    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            lr: self.lr,
            decay: self.decay,
            ..RmsPropConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: Task,
    pub mode: VoteMode,
    pub kernel: KernelSpec,
    pub supervision: Supervision,
    pub loss: LossParams,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub train: TrainParams,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: Task::Within,
            mode: VoteMode::NoisyOr,
            kernel: KernelSpec::gaussian(5).expect("supported support"),
            supervision: Supervision::Mdn,
            loss: LossParams::default(),
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            train: TrainParams::default(),
        }
    }
}

/// Offset-loss weight for the cross-part task. Cross-edge offsets span a
/// whole bone, so their normalized targets are small and need a larger
/// weight to be learned against the confidence loss.
pub const CROSS_OFFSET_WEIGHT: f64 = 20.0;
/// Voted-map loss weight for the cross-part task. Only end-to-end training
/// sees this term.
pub const CROSS_FINAL_WEIGHT: f64 = 5.0;
pub const CROSS_STEPS: usize = 4000;

impl ExperimentConfig {
    /// Defaults for `task`; the cross-part task trains longer with heavier
    /// offset and voted-map losses.
    pub fn for_task(task: Task) -> Self {
        let mut cfg = Self {
            task,
            ..Self::default()
        };
        if task == Task::Cross {
            cfg.weights.offset = CROSS_OFFSET_WEIGHT;
            cfg.weights.final_map = CROSS_FINAL_WEIGHT;
            cfg.train.steps = CROSS_STEPS;
        }
        cfg
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.train.optimizer().validate()?;
        let m = &self.model;
        if m.channels == 0 || m.layers == 0 || m.kernel % 2 == 0 {
            return Err(MdnError::Config(format!("invalid model {m:?}")));
        }
        if !(0.0..=1.0).contains(&self.train.occlusion_prob) {
            return Err(MdnError::Config("occlusion_prob must lie in [0, 1]".into()));
        }
        if self.train.heldout == 0 {
            return Err(MdnError::Config("heldout must be positive".into()));
        }
        let w = &self.weights;
        if [w.conf, w.offset, w.final_map]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err(MdnError::Config(format!(
                "loss weights must be non-negative: {w:?}"
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::KernelFamily;

    #[test]
    fn partial_json_fills_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"task": "cross", "mode": "additive",
                "kernel": {"family": "bilinear"},
                "loss": {"eps_c": 3},
                "train": {"steps": 10, "seed": 4}}"#,
        )
        .unwrap();
        assert_eq!(cfg.task, Task::Cross);
        assert_eq!(cfg.mode, VoteMode::Additive);
        assert_eq!(cfg.kernel.family(), KernelFamily::Bilinear);
        assert_eq!(cfg.loss.eps_c, 3.0);
        assert_eq!(cfg.loss.eps_m, 1.0);
        assert_eq!(
            (cfg.train.steps, cfg.train.seed, cfg.train.lr),
            (10, 4, 0.0025)
        );
        assert_eq!(cfg.model.channels, 16);
    }

    #[test]
    fn round_trips_through_json() {
        let cfg = ExperimentConfig::default();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"loss": {"eps_m": 9}}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"train": {"decay": 1.5}}"#).is_err());
        assert!(
            ExperimentConfig::from_json(r#"{"kernel": {"family": "gaussian", "kf": 4}}"#).is_err()
        );
        assert!(ExperimentConfig::from_json(r#"{"task": "sideways"}"#).is_err());
    }
}
