//! No-voting vs post-hoc voting vs end-to-end voting, over seeds and kernels.
//!
//! The baseline is trained on the confidence and offset losses only. Its
//! confidence argmax is the no-voting score; voting its frozen heads at
//! evaluation gives the post-hoc score. The end-to-end network is trained
//! with the voted-map loss as well, once per kernel.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Supervision};
use crate::error::{MdnError, Result};
use crate::kernel::KernelSpec;
use crate::toynet::{evaluate, heldout_scenes, train, EvalMetrics};
use crate::vote::Voting;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    NoVoting,
    PostHoc,
    Mdn,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::NoVoting => "no_voting",
            Method::PostHoc => "post_hoc",
            Method::Mdn => "mdn",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AblationConfig {
    pub experiment: ExperimentConfig,
    pub seeds: Vec<u64>,
    pub kernels: Vec<KernelSpec>,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            experiment: ExperimentConfig::default(),
            seeds: (0..5).collect(),
            kernels: vec![
                KernelSpec::bilinear(),
                KernelSpec::gaussian(5).expect("supported support"),
            ],
        }
    }
}

impl AblationConfig {
    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.seeds.is_empty() || self.kernels.is_empty() {
            return Err(MdnError::Config(
                "ablation needs at least one seed and one kernel".into(),
            ));
        }
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: Self = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Score of one method on one seed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunResult {
    pub seed: u64,
    pub method: Method,
    /// `None` for the no-voting baseline.
    pub kernel: Option<String>,
    pub pck: f64,
    pub joint_err: Vec<f64>,
}

/// One row of the summary table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub method: &'static str,
    pub kernel: String,
    pub mode: String,
    pub seeds: usize,
    pub pck_mean: f64,
    pub pck_std: f64,
    pub err_mean: f64,
    /// Mean error per joint, `;`-separated.
    pub err_by_joint: String,
}

#[derive(Debug, Clone)]
pub struct AblationResult {
    pub runs: Vec<RunResult>,
    pub rows: Vec<AblationRow>,
}

impl AblationResult {
    pub fn row(&self, method: Method, kernel: Option<&str>) -> Option<&AblationRow> {
        let kernel = kernel.unwrap_or("-");
        self.rows
            .iter()
            .find(|r| r.method == method.name() && r.kernel == kernel)
    }

    /// Per-seed results of one method, in seed order.
    pub fn runs_of(&self, method: Method, kernel: Option<&str>) -> Vec<&RunResult> {
        self.runs
            .iter()
            .filter(|r| r.method == method && r.kernel.as_deref() == kernel)
            .collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn result(
    seed: u64,
    method: Method,
    kernel: Option<String>,
    e: &EvalMetrics,
    use_c: bool,
) -> RunResult {
    RunResult {
        seed,
        method,
        kernel,
        pck: if use_c { e.pck_c } else { e.pck_m },
        joint_err: if use_c {
            e.joint_err_c.clone()
        } else {
            e.joint_err_m.clone()
        },
    }
}

fn summarize(cfg: &AblationConfig, runs: &[RunResult]) -> Vec<AblationRow> {
    let mut keys: Vec<(Method, Option<String>)> = vec![(Method::NoVoting, None)];
    for method in [Method::PostHoc, Method::Mdn] {
        keys.extend(cfg.kernels.iter().map(|k| (method, Some(k.label()))));
    }
    keys.into_iter()
        .map(|(method, kernel)| {
            let sel: Vec<&RunResult> = runs
                .iter()
                .filter(|r| r.method == method && r.kernel == kernel)
                .collect();
            let n = sel.len() as f64;
            let mean = sel.iter().map(|r| r.pck).sum::<f64>() / n;
            let var = sel.iter().map(|r| (r.pck - mean).powi(2)).sum::<f64>() / n;
            let joints = sel.first().map_or(0, |r| r.joint_err.len());
            let per_joint: Vec<f64> = (0..joints)
                .map(|j| sel.iter().map(|r| r.joint_err[j]).sum::<f64>() / n)
                .collect();
            AblationRow {
                method: method.name(),
                kernel: kernel.unwrap_or_else(|| "-".into()),
                mode: cfg.experiment.mode.name().into(),
                seeds: sel.len(),
                pck_mean: mean,
                pck_std: var.sqrt(),
                err_mean: per_joint.iter().sum::<f64>() / joints.max(1) as f64,
                err_by_joint: per_joint
                    .iter()
                    .map(|e| format!("{e:.4}"))
                    .collect::<Vec<_>>()
                    .join(";"),
            }
        })
        .collect()
}

/// Runs the sweep; `on_run` sees every result as soon as it is available.
pub fn run_ablation(
    cfg: &AblationConfig,
    mut on_run: impl FnMut(&RunResult),
) -> Result<AblationResult> {
    cfg.validate()?;
    let scenes = heldout_scenes(cfg.experiment.task, cfg.experiment.train.heldout);
    let mut runs = Vec::new();
    let mut push = |r: RunResult, runs: &mut Vec<RunResult>| {
        on_run(&r);
        runs.push(r);
    };
    for &seed in &cfg.seeds {
        let mut base = cfg.experiment.clone();
        base.train.seed = seed;
        base.supervision = Supervision::Baseline;
        let baseline = train(&base)?;
        push(
            result(seed, Method::NoVoting, None, &baseline.eval, true),
            &mut runs,
        );
        for kernel in &cfg.kernels {
            let graph = baseline.net.voting().graph.clone();
            let posthoc = baseline
                .net
                .with_voting(Voting::new(*kernel, base.mode, graph));
            let e = evaluate(&posthoc, &scenes)?;
            push(
                result(seed, Method::PostHoc, Some(kernel.label()), &e, false),
                &mut runs,
            );
        }
        for kernel in &cfg.kernels {
            let mut mdn = cfg.experiment.clone();
            mdn.train.seed = seed;
            mdn.supervision = Supervision::Mdn;
            mdn.kernel = *kernel;
            let out = train(&mdn)?;
            push(
                result(seed, Method::Mdn, Some(kernel.label()), &out.eval, false),
                &mut runs,
            );
        }
    }
    let rows = summarize(cfg, &runs);
    Ok(AblationResult { runs, rows })
}
