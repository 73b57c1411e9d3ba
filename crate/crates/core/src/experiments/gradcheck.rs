//! Finite-difference sweep over voting modes and kernels.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::field::ScalarField;
use crate::kernel::{KernelSpec, GAUSSIAN_SUPPORTS};
use crate::verify::{check_vote_gradients, random_vote_instance_scaled, FdOptions, FdReport};
use crate::vote::{VoteGraph, VoteMode, Voting};

pub const GRADCHECK_SIZE: usize = 8;
/// Offsets are drawn from `[-MAX_OFFSET, MAX_OFFSET]` pixels.
pub const MAX_OFFSET: f64 = 2.5;

#[derive(Debug, Clone, Serialize)]
pub struct CaseReport {
    pub mode: VoteMode,
    pub kernel: String,
    pub report: FdReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub seed: u64,
    pub size: usize,
    pub options: FdOptions,
    pub cases: Vec<CaseReport>,
    pub max_rel_err: f64,
    pub passed: bool,
    pub seconds: f64,
}

/// Every Gaussian support plus the bilinear kernel.
pub fn all_kernels() -> Vec<KernelSpec> {
    GAUSSIAN_SUPPORTS
        .iter()
        .map(|&kf| KernelSpec::gaussian(kf).expect("supported support"))
        .chain([KernelSpec::bilinear()])
        .collect()
}

/// Two joints voting for themselves and each other, so both self and cross
/// edges are exercised.
pub fn gradcheck_graph() -> VoteGraph {
    VoteGraph::chain(2).expect("two joints form a chain")
}

/// Expected vote mass arriving at a pixel. Light overlap keeps noisy-OR away
/// from saturation, where `m` sits too close to 1 for a central difference
/// to resolve, and keeps the rounding noise of every mode small.
pub const TARGET_VOTE_MASS: f64 = 0.3;

/// Sum of unnormalized kernel weights over a window centred on a pixel.
pub fn kernel_mass(kernel: &KernelSpec) -> f64 {
    let r = kernel.radius() as i32;
    (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .map(|(dx, dy)| {
            kernel
                .with_normalized(false)
                .weight(f64::from(dx), f64::from(dy))
        })
        .sum()
}

/// Confidence scale so that the mean confidence times the vote mass
/// arriving at a pixel is about [`TARGET_VOTE_MASS`]. Max voting keeps full
/// confidences: a small spread between candidates would let the winner
/// change inside one finite-difference step.
pub fn confidence_scale(mode: VoteMode, kernel: &KernelSpec, graph: &VoteGraph) -> f64 {
    if mode == VoteMode::Max {
        return 1.0;
    }
    let incoming = graph.num_edges() as f64 / graph.num_joints() as f64;
    (TARGET_VOTE_MASS / (0.5 * incoming * kernel_mass(kernel))).min(1.0)
}

/// Output gradient `1 + a (x - mid) + b (y - mid)` per channel with random
/// slopes `0.06 <= |a|, |b| <= 0.12`.
///
/// A positive field keeps the terms of each confidence gradient from
/// cancelling, and the slope gives each offset gradient a definite sign. A
/// derivative that cancels to near zero would otherwise sit below the
/// rounding noise of a central difference.
pub fn ramp_gradient<R: Rng>(rng: &mut R, size: usize, channels: usize) -> Result<ScalarField> {
    let mid = (size as f64 - 1.0) / 2.0;
    let slopes: Vec<(f64, f64)> = (0..channels)
        .map(|_| {
            let mut slope =
                || rng.random_range(0.06..0.12) * if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            (slope(), slope())
        })
        .collect();
    ScalarField::from_fn(size, size, channels, |j, y, x| {
        let (a, b) = slopes[j];
        1.0 + a * (x as f64 - mid) + b * (y as f64 - mid)
    })
}

/// Runs one random instance per (mode, kernel) pair. Case `i` draws its
/// instance from `seed + i`.
pub fn run_gradcheck(
    modes: &[VoteMode],
    kernels: &[KernelSpec],
    seed: u64,
) -> Result<GradcheckReport> {
    let start = Instant::now();
    let graph = gradcheck_graph();
    let options = FdOptions::default();
    let mut cases = Vec::new();
    for &mode in modes {
        for kernel in kernels {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(cases.len() as u64));
            let scale = confidence_scale(mode, kernel, &graph);
            let mut inst = random_vote_instance_scaled(
                &mut rng,
                GRADCHECK_SIZE,
                GRADCHECK_SIZE,
                &graph,
                MAX_OFFSET,
                scale,
            )?;
            inst.grad_m = ramp_gradient(&mut rng, GRADCHECK_SIZE, graph.num_joints())?;
            let voting = Voting::new(*kernel, mode, graph.clone());
            cases.push(CaseReport {
                mode,
                kernel: kernel.label(),
                report: check_vote_gradients(&voting, &inst, options)?,
            });
        }
    }
    let max_rel_err = cases
        .iter()
        .map(|c| c.report.max_rel_err)
        .fold(0.0, f64::max);
    Ok(GradcheckReport {
        seed,
        size: GRADCHECK_SIZE,
        options,
        passed: cases.iter().all(|c| c.report.passed),
        cases,
        max_rel_err,
        seconds: start.elapsed().as_secs_f64(),
    })
}
