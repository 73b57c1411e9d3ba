//! Independent oracles for the voting operator.
//!
//! Nothing here calls the scatter/gather code in [`crate::vote`]; the
//! oracles re-derive the operator from the kernel definition alone so that
//! they can be compared against it.

use rand::Rng;
use serde::Serialize;

use crate::error::{MdnError, Result};
use crate::field::{DisplacementField, ScalarField};
use crate::kernel::{KernelFamily, KernelSpec};
use crate::vote::{VoteGraph, Voting, CONTRIBUTION_CLAMP};

/// Largest grid accepted by [`exhaustive_noisyor_oracle`].
pub const ORACLE_MAX_SIDE: usize = 16;

/// Distance from a bilinear kink below which coordinates are not probed.
pub const KINK_MARGIN: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdOptions {
    pub step: f64,
    pub tolerance: f64,
    /// Floor on the relative-error denominator.
    pub rel_floor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            tolerance: 1e-5,
            rel_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FdReport {
    pub max_rel_err: f64,
    pub worst_index: Option<usize>,
    pub analytic_at_worst: f64,
    pub numeric_at_worst: f64,
    /// Largest `|analytic - numeric|` over all probed coordinates.
    pub max_abs_err: f64,
    /// Largest `|analytic|` over all probed coordinates.
    pub max_abs_grad: f64,
    pub checked: usize,
    pub skipped: Vec<usize>,
    pub tolerance: f64,
    pub passed: bool,
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Norm-wise relative difference `max|a - b| / max|b|`.
pub fn relative_linf_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|v| v.abs()).fold(0.0, f64::max);
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(f64::MIN_POSITIVE)
    }
}

/// Compares `analytic` against central differences of `f` at `x`.
///
/// Coordinates for which `skip` returns true are not probed and are listed
/// in the report.
pub fn finite_diff_check<F, S>(
    mut f: F,
    x: &[f64],
    analytic: &[f64],
    skip: S,
    opts: FdOptions,
) -> Result<FdReport>
where
    F: FnMut(&[f64]) -> Result<f64>,
    S: Fn(usize) -> bool,
{
    if x.len() != analytic.len() {
        return Err(MdnError::Shape(format!(
            "{} inputs but {} analytic partials",
            x.len(),
            analytic.len()
        )));
    }
    let mut probe = x.to_vec();
    let mut report = FdReport {
        max_rel_err: 0.0,
        worst_index: None,
        analytic_at_worst: 0.0,
        numeric_at_worst: 0.0,
        max_abs_err: 0.0,
        max_abs_grad: 0.0,
        checked: 0,
        skipped: Vec::new(),
        tolerance: opts.tolerance,
        passed: true,
    };
    for i in 0..x.len() {
        if skip(i) {
            report.skipped.push(i);
            continue;
        }
        probe[i] = x[i] + opts.step;
        let plus = f(&probe)?;
        probe[i] = x[i] - opts.step;
        let minus = f(&probe)?;
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() || !analytic[i].is_finite() {
            return Err(MdnError::Diagnostic(format!(
                "non-finite evaluation at coordinate {i}: f(+h)={plus}, f(-h)={minus}, analytic={}",
                analytic[i]
            )));
        }
        let numeric = (plus - minus) / (2.0 * opts.step);
        let err = relative_error(analytic[i], numeric, opts.rel_floor);
        report.checked += 1;
        report.max_abs_err = report.max_abs_err.max((analytic[i] - numeric).abs());
        report.max_abs_grad = report.max_abs_grad.max(analytic[i].abs());
        if report.worst_index.is_none() || err > report.max_rel_err {
            report.max_rel_err = err;
            report.worst_index = Some(i);
            report.analytic_at_worst = analytic[i];
            report.numeric_at_worst = numeric;
        }
    }
    report.passed = report.max_rel_err < opts.tolerance;
    Ok(report)
}

/// Random operator inputs plus a random output gradient.
#[derive(Debug, Clone)]
pub struct VoteInstance {
    pub c: ScalarField,
    pub o: DisplacementField,
    pub grad_m: ScalarField,
}

/// Confidences in `[0.05, 0.95]`, offsets in `[-max_offset, max_offset]`,
/// output gradient in `[-1, 1]`.
pub fn random_vote_instance<R: Rng>(
    rng: &mut R,
    height: usize,
    width: usize,
    graph: &VoteGraph,
    max_offset: f64,
) -> Result<VoteInstance> {
    random_vote_instance_scaled(rng, height, width, graph, max_offset, 1.0)
}

/// As [`random_vote_instance`] with confidences multiplied by `c_scale`.
pub fn random_vote_instance_scaled<R: Rng>(
    rng: &mut R,
    height: usize,
    width: usize,
    graph: &VoteGraph,
    max_offset: f64,
    c_scale: f64,
) -> Result<VoteInstance> {
    if !(c_scale > 0.0 && c_scale <= 1.0) {
        return Err(MdnError::Domain(format!(
            "confidence scale {c_scale} outside (0, 1]"
        )));
    }
    let (j, e) = (graph.num_joints(), graph.num_edges());
    let c = ScalarField::from_fn(height, width, j, |_, _, _| {
        c_scale * rng.random_range(0.05..0.95)
    })?;
    let ox = ScalarField::from_fn(height, width, e, |_, _, _| {
        rng.random_range(-max_offset..max_offset)
    })?;
    let oy = ScalarField::from_fn(height, width, e, |_, _, _| {
        rng.random_range(-max_offset..max_offset)
    })?;
    let grad_m = ScalarField::from_fn(height, width, j, |_, _, _| rng.random_range(-1.0..1.0))?;
    Ok(VoteInstance {
        c,
        o: DisplacementField::new(ox, oy)?,
        grad_m,
    })
}

fn near_integer(v: f64) -> bool {
    (v - v.round()).abs() < KINK_MARGIN
}

/// Checks the analytic backward pass of `voting` on `inst` against central
/// differences of the scalar `sum(grad_m * m)`.
///
/// Offset coordinates whose vote lands within [`KINK_MARGIN`] of a bilinear
/// kink are skipped.
pub fn check_vote_gradients(
    voting: &Voting,
    inst: &VoteInstance,
    opts: FdOptions,
) -> Result<FdReport> {
    let (h, w) = (inst.c.height(), inst.c.width());
    let hw = h * w;
    let (nc, ne) = (inst.c.len(), inst.o.ox().len());
    let (m, ctx) = voting.forward(&inst.c, &inst.o)?;
    debug_assert_eq!(m.shape(), inst.grad_m.shape());
    let grads = voting.backward(&inst.grad_m, &inst.c, &inst.o, &ctx)?;

    let mut x = Vec::with_capacity(nc + 2 * ne);
    x.extend_from_slice(inst.c.data());
    x.extend_from_slice(inst.o.ox().data());
    x.extend_from_slice(inst.o.oy().data());
    let mut analytic = Vec::with_capacity(x.len());
    analytic.extend_from_slice(grads.c.data());
    analytic.extend_from_slice(grads.ox.data());
    analytic.extend_from_slice(grads.oy.data());

    let shape_c = inst.c.shape();
    let shape_o = inst.o.shape();
    // measured against m at the base point so the sum carries only the
    // perturbation, not the full output magnitude
    let objective = |v: &[f64]| -> Result<f64> {
        let c = ScalarField::from_shape_vec(shape_c, v[..nc].to_vec())?;
        let o = DisplacementField::new(
            ScalarField::from_shape_vec(shape_o, v[nc..nc + ne].to_vec())?,
            ScalarField::from_shape_vec(shape_o, v[nc + ne..].to_vec())?,
        )?;
        let (mv, _) = voting.forward(&c, &o)?;
        Ok(mv
            .data()
            .iter()
            .zip(m.data())
            .zip(inst.grad_m.data())
            .map(|((a, a0), g)| (a - a0) * g)
            .sum())
    };

    let bilinear = voting.kernel.family() == KernelFamily::Bilinear;
    let ox = inst.o.ox().data();
    let oy = inst.o.oy().data();
    let skip = |i: usize| {
        if !bilinear || i < nc {
            return false;
        }
        let item = (i - nc) % ne;
        let p = item % hw;
        let tx = (p % w) as f64 + ox[item];
        let ty = (p / w) as f64 + oy[item];
        near_integer(tx) || near_integer(ty)
    };
    finite_diff_check(objective, &x, &analytic, skip, opts)
}

/// Noisy-OR voting evaluated pair by pair: for every output pixel, the
/// product of `1 - w c` over all (input pixel, edge) pairs.
///
/// Uses the same kernel truncation rule as the operator (Gaussian window of
/// half-width `kf/2` around the rounded target) and the same contribution
/// clamp, but no scatter or log-domain accumulation.
pub fn exhaustive_noisyor_oracle(
    c: &ScalarField,
    o: &DisplacementField,
    kernel: &KernelSpec,
    graph: &VoteGraph,
) -> Result<ScalarField> {
    let (h, w) = (c.height(), c.width());
    if h > ORACLE_MAX_SIDE || w > ORACLE_MAX_SIDE {
        return Err(MdnError::Size(format!(
            "exhaustive oracle supports grids up to {ORACLE_MAX_SIDE}x{ORACLE_MAX_SIDE}, got {h}x{w}"
        )));
    }
    if c.channels() != graph.num_joints() || o.edge_count() != graph.num_edges() {
        return Err(MdnError::Shape(
            "oracle inputs do not match the vote graph".into(),
        ));
    }
    let r = kernel.radius() as f64;
    let in_window = |qx: f64, qy: f64, tx: f64, ty: f64| match kernel.family() {
        KernelFamily::Gaussian => {
            (qx - (tx + 0.5).floor()).abs() <= r && (qy - (ty + 0.5).floor()).abs() <= r
        }
        KernelFamily::Bilinear => true,
    };
    ScalarField::from_fn(h, w, graph.num_joints(), |k, qy, qx| {
        let mut survival = 1.0;
        for (e, edge) in graph.edges().iter().enumerate() {
            if edge.target != k {
                continue;
            }
            for py in 0..h {
                for px in 0..w {
                    let tx = px as f64 + o.ox().get(e, py, px);
                    let ty = py as f64 + o.oy().get(e, py, px);
                    let (fx, fy) = (qx as f64, qy as f64);
                    let wt = if in_window(fx, fy, tx, ty) {
                        kernel.weight(fx - tx, fy - ty)
                    } else {
                        0.0
                    };
                    let p = (wt * c.get(edge.source, py, px)).min(CONTRIBUTION_CLAMP);
                    survival *= 1.0 - p;
                }
            }
        }
        1.0 - survival
    })
}

/// Direct 2-D convolution of every channel with the truncated kernel image;
/// the zero-offset special case of additive voting.
pub fn brute_conv_oracle(c: &ScalarField, kernel: &KernelSpec) -> Result<ScalarField> {
    let r = match kernel.family() {
        KernelFamily::Gaussian => kernel.radius() as isize,
        KernelFamily::Bilinear => 1,
    };
    let side = (2 * r + 1) as usize;
    let mut image = vec![0.0; side * side];
    for dy in -r..=r {
        for dx in -r..=r {
            image[((dy + r) as usize) * side + (dx + r) as usize] =
                kernel.weight(dx as f64, dy as f64);
        }
    }
    let (h, w) = (c.height() as isize, c.width() as isize);
    ScalarField::from_fn(c.height(), c.width(), c.channels(), |ch, y, x| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let (sy, sx) = (y as isize - dy, x as isize - dx);
                if sy < 0 || sy >= h || sx < 0 || sx >= w {
                    continue;
                }
                acc += image[((dy + r) as usize) * side + (dx + r) as usize]
                    * c.get(ch, sy as usize, sx as usize);
            }
        }
        acc
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vote::VoteMode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn linear_map_has_exact_derivative() {
        let x = [0.3, -1.2, 4.0];
        let r = finite_diff_check(
            |v| Ok(3.0 * v.iter().sum::<f64>()),
            &x,
            &[3.0; 3],
            |_| false,
            FdOptions::default(),
        )
        .unwrap();
        assert!(r.passed);
        assert!(r.max_rel_err < 1e-9);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn doubled_gradient_is_detected() {
        let x = [0.3, -1.2, 4.0];
        let r = finite_diff_check(
            |v| Ok(3.0 * v.iter().sum::<f64>()),
            &x,
            &[6.0; 3],
            |_| false,
            FdOptions::default(),
        )
        .unwrap();
        assert!(!r.passed);
        // |6 - 3| / max(6, 3)
        assert!((r.max_rel_err - 0.5).abs() < 1e-8);
    }

    #[test]
    fn non_finite_evaluation_is_a_diagnostic() {
        let r = finite_diff_check(
            |_| Ok(f64::NAN),
            &[1.0],
            &[0.0],
            |_| false,
            FdOptions::default(),
        );
        assert!(matches!(r, Err(MdnError::Diagnostic(_))));
    }

    #[test]
    fn skipped_coordinates_are_reported() {
        let r = finite_diff_check(
            |v| Ok(v[0] * v[1]),
            &[2.0, 3.0],
            &[3.0, 999.0],
            |i| i == 1,
            FdOptions::default(),
        )
        .unwrap();
        assert!(r.passed);
        assert_eq!(r.skipped, vec![1]);
    }

    #[test]
    fn oracle_rejects_large_grids() {
        let g = VoteGraph::within_part(1);
        let c = ScalarField::new(17, 4, 1, 0.5).unwrap();
        let o = DisplacementField::zeros(17, 4, 1).unwrap();
        assert!(matches!(
            exhaustive_noisyor_oracle(&c, &o, &KernelSpec::bilinear(), &g),
            Err(MdnError::Size(_))
        ));
    }

    #[test]
    fn single_vote_oracle_is_w_times_c() {
        let g = VoteGraph::within_part(1);
        let c = ScalarField::from_fn(4, 4, 1, |_, y, x| if (x, y) == (1, 1) { 0.6 } else { 0.0 })
            .unwrap();
        let o = DisplacementField::new(
            ScalarField::new(4, 4, 1, 0.25).unwrap(),
            ScalarField::new(4, 4, 1, 0.0).unwrap(),
        )
        .unwrap();
        let m = exhaustive_noisyor_oracle(&c, &o, &KernelSpec::bilinear(), &g).unwrap();
        assert!((m.get(0, 1, 1) - 0.75 * 0.6).abs() < 1e-15);
        assert!((m.get(0, 1, 2) - 0.25 * 0.6).abs() < 1e-15);
    }

    #[test]
    fn certain_votes_share_the_clamp() {
        let g = VoteGraph::within_part(1);
        let c = ScalarField::new(4, 4, 1, 1.0).unwrap();
        let o = DisplacementField::zeros(4, 4, 1).unwrap();
        let kernel = KernelSpec::gaussian(3).unwrap();
        let oracle = exhaustive_noisyor_oracle(&c, &o, &kernel, &g).unwrap();
        let (fast, _) = Voting::new(kernel, VoteMode::NoisyOr, g)
            .forward(&c, &o)
            .unwrap();
        assert!(oracle.max_abs_diff(&fast).unwrap() < 1e-12);
    }

    #[test]
    fn conv_oracle_impulse_response_is_kernel_image() {
        let kernel = KernelSpec::gaussian(5).unwrap();
        let c = ScalarField::from_fn(7, 7, 1, |_, y, x| if (x, y) == (3, 3) { 1.0 } else { 0.0 })
            .unwrap();
        let m = brute_conv_oracle(&c, &kernel).unwrap();
        for y in 0..7 {
            for x in 0..7 {
                let (dx, dy) = (x as f64 - 3.0, y as f64 - 3.0);
                let want = if dx.abs() <= 2.0 && dy.abs() <= 2.0 {
                    kernel.weight(dx, dy)
                } else {
                    0.0
                };
                assert_eq!(m.get(0, y, x), want);
            }
        }
    }

    #[test]
    fn conv_oracle_constant_interior() {
        let kernel = KernelSpec::gaussian(3).unwrap();
        let c = ScalarField::new(6, 6, 1, 0.5).unwrap();
        let m = brute_conv_oracle(&c, &kernel).unwrap();
        let mut ksum = 0.0;
        for dy in -1..=1 {
            for dx in -1..=1 {
                ksum += kernel.weight(dx as f64, dy as f64);
            }
        }
        assert!((m.get(0, 2, 3) - 0.5 * ksum).abs() < 1e-15);
    }

    #[test]
    fn additive_gaussian_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let graph = VoteGraph::within_part(1);
        let inst = random_vote_instance(&mut rng, 8, 8, &graph, 2.0).unwrap();
        let voting = Voting::new(KernelSpec::gaussian(5).unwrap(), VoteMode::Additive, graph);
        let r = check_vote_gradients(&voting, &inst, FdOptions::default()).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn corrupted_vote_gradient_is_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let graph = VoteGraph::within_part(1);
        let inst = random_vote_instance(&mut rng, 6, 6, &graph, 1.5).unwrap();
        let voting = Voting::new(KernelSpec::gaussian(3).unwrap(), VoteMode::NoisyOr, graph);
        let (_, ctx) = voting.forward(&inst.c, &inst.o).unwrap();
        let g = voting
            .backward(&inst.grad_m, &inst.c, &inst.o, &ctx)
            .unwrap();
        let doubled: Vec<f64> = g.c.data().iter().map(|v| 2.0 * v).collect();
        let shape = inst.c.shape();
        let r = finite_diff_check(
            |v| {
                let c = ScalarField::from_shape_vec(shape, v.to_vec())?;
                let (m, _) = voting.forward(&c, &inst.o)?;
                Ok(m.data()
                    .iter()
                    .zip(inst.grad_m.data())
                    .map(|(a, b)| a * b)
                    .sum())
            },
            inst.c.data(),
            &doubled,
            |_| false,
            FdOptions::default(),
        )
        .unwrap();
        assert!(!r.passed);
        assert!(r.max_rel_err > 0.4);
    }
}
