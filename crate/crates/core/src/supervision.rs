//! Training targets and losses for the confidence, offset and voted maps.
//!
//! Offset targets point from a pixel to the joint it votes for, scaled by a
//! normalizer `d`: a pixel `x_i` near joint `j` voting for joint `k` gets
//! `(x_k - x_i) / d`, so that `x_i + d * target` lands exactly on joint `k`.

use serde::{Deserialize, Serialize};

use crate::error::{MdnError, Result};
use crate::field::{ScalarField, Shape};
use crate::vote::VoteGraph;

/// Probabilities are clamped into `[BCE_EPS, 1 - BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub visible: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            visible: true,
        }
    }

    pub fn hidden(x: f64, y: f64) -> Self {
        Self {
            x,
            y,
            visible: false,
        }
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        ((self.x - x).powi(2) + (self.y - y).powi(2)).sqrt()
    }
}

/// Ground-truth joint positions in output-grid pixels, one per channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeypointSet {
    points: Vec<Keypoint>,
}

impl KeypointSet {
    pub fn new(points: Vec<Keypoint>) -> Result<Self> {
        if let Some(p) = points.iter().find(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(MdnError::Domain(format!("keypoint {p:?} is not finite")));
        }
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Keypoint] {
        &self.points
    }

    pub fn get(&self, joint: usize) -> Option<&Keypoint> {
        self.points.get(joint)
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Self {
        Self {
            points: self
                .points
                .iter()
                .map(|p| Keypoint {
                    x: p.x + dx,
                    y: p.y + dy,
                    visible: p.visible,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossParams {
    /// Half-width of the confidence disk and of the offset-supervision box.
    pub eps_c: f64,
    /// Half-width of the final-map disk.
    pub eps_m: f64,
    pub huber_delta: f64,
    /// Bandwidth of the Gaussian final-map target (additive voting).
    pub gaussian_target_sigma: f64,
}

impl Default for LossParams {
    fn default() -> Self {
        Self {
            eps_c: 4.0,
            eps_m: 1.0,
            huber_delta: 1.0,
            gaussian_target_sigma: 1.0,
        }
    }
}

impl LossParams {
    pub fn validate(&self) -> Result<()> {
        let all_positive = [
            self.eps_c,
            self.eps_m,
            self.huber_delta,
            self.gaussian_target_sigma,
        ]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
        if !all_positive {
            return Err(MdnError::Config(format!(
                "loss parameters must be positive: {self:?}"
            )));
        }
        if self.eps_m > self.eps_c {
            return Err(MdnError::Config(format!(
                "eps_m ({}) must not exceed eps_c ({})",
                self.eps_m, self.eps_c
            )));
        }
        Ok(())
    }

    /// Offset normalizer for within-part voting, `eps_c - 1`.
    pub fn within_part_normalizer(&self) -> f64 {
        self.eps_c - 1.0
    }
}

#[inline]
fn in_box(x: f64, y: f64, kp: &Keypoint, eps: f64) -> bool {
    (x - kp.x).abs() <= eps && (y - kp.y).abs() <= eps
}

/// Channel `j` is 1 inside the box `|x - x_j| <= eps, |y - y_j| <= eps`.
pub fn make_disk_target(
    kps: &KeypointSet,
    eps: f64,
    height: usize,
    width: usize,
) -> Result<ScalarField> {
    ScalarField::from_fn(height, width, kps.len(), |j, y, x| {
        let kp = &kps.points[j];
        if kp.visible && in_box(x as f64, y as f64, kp, eps) {
            1.0
        } else {
            0.0
        }
    })
}

/// `exp(-|x - x_j|^2 / 2 sigma^2)` per channel.
pub fn make_gaussian_target(
    kps: &KeypointSet,
    sigma: f64,
    height: usize,
    width: usize,
) -> Result<ScalarField> {
    if !(sigma > 0.0) {
        return Err(MdnError::Domain(format!(
            "sigma must be positive, got {sigma}"
        )));
    }
    ScalarField::from_fn(height, width, kps.len(), |j, y, x| {
        let kp = &kps.points[j];
        if !kp.visible {
            return 0.0;
        }
        let r2 = (x as f64 - kp.x).powi(2) + (y as f64 - kp.y).powi(2);
        (-r2 / (2.0 * sigma * sigma)).exp()
    })
}

/// Offset regression targets for every edge of a vote graph.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetTarget {
    pub ox: ScalarField,
    pub oy: ScalarField,
    /// 1 where the offset loss applies, 0 elsewhere.
    pub mask: ScalarField,
    pub normalizer: f64,
}

impl OffsetTarget {
    /// Largest deviation of `x + d * target` from the voted-for joint over
    /// all masked pixels.
    pub fn consistency_error(&self, kps: &KeypointSet, graph: &VoteGraph) -> f64 {
        let (h, w) = (self.ox.height(), self.ox.width());
        let mut worst: f64 = 0.0;
        for (e, edge) in graph.edges().iter().enumerate() {
            let kp = &kps.points[edge.target];
            for y in 0..h {
                for x in 0..w {
                    if self.mask.get(e, y, x) == 0.0 {
                        continue;
                    }
                    let tx = x as f64 + self.normalizer * self.ox.get(e, y, x);
                    let ty = y as f64 + self.normalizer * self.oy.get(e, y, x);
                    worst = worst.max((tx - kp.x).abs()).max((ty - kp.y).abs());
                }
            }
        }
        worst
    }
}

/// Offset targets for edge `(j, k)` at pixels inside the `eps_c` box around
/// joint `j`: `((x_k - x) / d, (y_k - y) / d)`. Edges touching an invisible
/// joint are left unsupervised.
pub fn make_offset_target(
    kps: &KeypointSet,
    graph: &VoteGraph,
    eps_c: f64,
    normalizer: f64,
    height: usize,
    width: usize,
) -> Result<OffsetTarget> {
    if !(normalizer > 0.0) {
        return Err(MdnError::Domain(format!(
            "normalizer must be positive, got {normalizer}"
        )));
    }
    if graph.num_joints() != kps.len() {
        return Err(MdnError::Shape(format!(
            "graph has {} joints but {} keypoints were given",
            graph.num_joints(),
            kps.len()
        )));
    }
    let e = graph.num_edges();
    let active = |edge: usize, y: usize, x: usize| {
        let ed = graph.edges()[edge];
        let (src, dst) = (&kps.points[ed.source], &kps.points[ed.target]);
        src.visible && dst.visible && in_box(x as f64, y as f64, src, eps_c)
    };
    let mask = ScalarField::from_fn(height, width, e, |ed, y, x| {
        f64::from(u8::from(active(ed, y, x)))
    })?;
    let ox = ScalarField::from_fn(height, width, e, |ed, y, x| {
        if active(ed, y, x) {
            (kps.points[graph.edges()[ed].target].x - x as f64) / normalizer
        } else {
            0.0
        }
    })?;
    let oy = ScalarField::from_fn(height, width, e, |ed, y, x| {
        if active(ed, y, x) {
            (kps.points[graph.edges()[ed].target].y - y as f64) / normalizer
        } else {
            0.0
        }
    })?;
    Ok(OffsetTarget {
        ox,
        oy,
        mask,
        normalizer,
    })
}

/// Mean pixelwise binary cross-entropy and its gradient.
pub fn bce_loss(pred: &ScalarField, target: &ScalarField) -> Result<(f64, ScalarField)> {
    pred.ensure_same_shape(target, "bce_loss")?;
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let mut grad = Vec::with_capacity(pred.len());
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        loss -= t * p.ln() + (1.0 - t) * (-p).ln_1p();
        grad.push((p - t) / (p * (1.0 - p)) / n);
    }
    Ok((loss / n, ScalarField::from_shape_vec(pred.shape(), grad)?))
}

/// Huber loss averaged over pixels where `mask` is non-zero.
pub fn huber_loss_masked(
    pred: &ScalarField,
    target: &ScalarField,
    mask: &ScalarField,
    delta: f64,
) -> Result<(f64, ScalarField)> {
    pred.ensure_same_shape(target, "huber_loss_masked")?;
    pred.ensure_same_shape(mask, "huber_loss_masked mask")?;
    let count = mask.data().iter().filter(|&&m| m != 0.0).count();
    if count == 0 {
        return Ok((0.0, ScalarField::zeros(pred.shape())?));
    }
    let n = count as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; pred.len()];
    for (i, ((&p, &t), &m)) in pred
        .data()
        .iter()
        .zip(target.data())
        .zip(mask.data())
        .enumerate()
    {
        if m == 0.0 {
            continue;
        }
        let r = p - t;
        if r.abs() <= delta {
            loss += 0.5 * r * r;
            grad[i] = r / n;
        } else {
            loss += delta * (r.abs() - 0.5 * delta);
            grad[i] = delta * r.signum() / n;
        }
    }
    Ok((loss / n, ScalarField::from_shape_vec(pred.shape(), grad)?))
}

/// Mean squared error and its gradient.
pub fn mse_loss(pred: &ScalarField, target: &ScalarField) -> Result<(f64, ScalarField)> {
    pred.ensure_same_shape(target, "mse_loss")?;
    let n = pred.len() as f64;
    let loss = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| (p - t).powi(2))
        .sum::<f64>()
        / n;
    let grad = pred.zip_map(target, |p, t| 2.0 * (p - t) / n)?;
    Ok((loss, grad))
}

/// Euclidean distance from each visible joint to the argmax of its channel.
pub fn localization_errors(pred: &ScalarField, kps: &KeypointSet) -> Result<Vec<Option<f64>>> {
    if pred.channels() != kps.len() {
        return Err(MdnError::Shape(format!(
            "prediction has {} channels for {} keypoints",
            pred.channels(),
            kps.len()
        )));
    }
    kps.points
        .iter()
        .enumerate()
        .map(|(j, kp)| {
            if !kp.visible {
                return Ok(None);
            }
            let (x, y) = pred.argmax(j)?;
            Ok(Some(kp.distance_to(x as f64, y as f64)))
        })
        .collect()
}

/// Fraction of visible joints whose argmax lies within `tol` pixels of the
/// truth; NaN when no joint is visible.
pub fn pck_metric(pred: &ScalarField, kps: &KeypointSet, tol: f64) -> Result<f64> {
    let errs: Vec<f64> = localization_errors(pred, kps)?
        .into_iter()
        .flatten()
        .collect();
    if errs.is_empty() {
        return Ok(f64::NAN);
    }
    Ok(errs.iter().filter(|&&e| e <= tol).count() as f64 / errs.len() as f64)
}

/// Shape helper for targets that mirror a prediction.
pub fn target_shape(height: usize, width: usize, kps: &KeypointSet) -> Shape {
    Shape::new(height, width, kps.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::{finite_diff_check, FdOptions};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(x: f64, y: f64) -> KeypointSet {
        KeypointSet::new(vec![Keypoint::new(x, y)]).unwrap()
    }

    #[test]
    fn degenerate_disk_is_single_pixel() {
        let t = make_disk_target(&one(10.0, 10.0), 0.0, 32, 32).unwrap();
        assert_eq!(t.sum(), 1.0);
        assert_eq!(t.get(0, 10, 10), 1.0);
    }

    #[test]
    fn disk_of_four_covers_nine_by_nine() {
        let t = make_disk_target(&one(10.0, 10.0), 4.0, 32, 32).unwrap();
        // enumeration: |dx| <= 4 and |dy| <= 4 over integer offsets
        let expected = (-4..=4).flat_map(|a| (-4..=4).map(move |b| (a, b))).count();
        assert_eq!(expected, 81);
        assert_eq!(t.sum(), expected as f64);
    }

    #[test]
    fn invisible_keypoint_gives_empty_channel() {
        let kps = KeypointSet::new(vec![Keypoint::hidden(5.0, 5.0)]).unwrap();
        assert_eq!(make_disk_target(&kps, 4.0, 16, 16).unwrap().sum(), 0.0);
        assert_eq!(make_gaussian_target(&kps, 1.0, 16, 16).unwrap().sum(), 0.0);
    }

    #[test]
    fn within_part_offsets() {
        let kps = one(10.0, 10.0);
        let g = VoteGraph::within_part(1);
        let t = make_offset_target(&kps, &g, 4.0, 3.0, 32, 32).unwrap();
        assert_eq!(t.ox.get(0, 10, 10), 0.0);
        assert_eq!(t.oy.get(0, 10, 10), 0.0);
        // three pixels right of the keypoint points back by -3 / 3
        assert_eq!(t.ox.get(0, 10, 13), -1.0);
        assert_eq!(t.mask.sum(), 81.0);
        assert_eq!(t.mask.get(0, 10, 15), 0.0);
        assert!(t.consistency_error(&kps, &g) < 1e-12);
    }

    #[test]
    fn cross_part_offsets() {
        let kps =
            KeypointSet::new(vec![Keypoint::new(10.0, 10.0), Keypoint::new(20.0, 10.0)]).unwrap();
        let g = VoteGraph::chain(2).unwrap();
        let t = make_offset_target(&kps, &g, 4.0, 64.0, 32, 32).unwrap();
        let e01 = g
            .edges()
            .iter()
            .position(|e| (e.source, e.target) == (0, 1))
            .unwrap();
        assert_eq!(t.ox.get(e01, 10, 10), 10.0 / 64.0);
        assert!(t.consistency_error(&kps, &g) < 1e-12);
    }

    #[test]
    fn offsets_skip_edges_with_hidden_joints() {
        let kps = KeypointSet::new(vec![
            Keypoint::new(10.0, 10.0),
            Keypoint::hidden(20.0, 10.0),
        ])
        .unwrap();
        let g = VoteGraph::chain(2).unwrap();
        let t = make_offset_target(&kps, &g, 4.0, 64.0, 32, 32).unwrap();
        // only the 0 -> 0 self edge is supervised
        assert_eq!(t.mask.sum(), 81.0);
    }

    #[test]
    fn gaussian_target_values() {
        let t = make_gaussian_target(&one(5.0, 5.0), 1.0, 12, 12).unwrap();
        assert_eq!(t.get(0, 5, 5), 1.0);
        assert!((t.get(0, 5, 6) - (-0.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn bce_closed_forms() {
        let p = ScalarField::new(4, 4, 1, 0.5).unwrap();
        let t = ScalarField::new(4, 4, 1, 0.0).unwrap();
        let (l, _) = bce_loss(&p, &t).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let disk = make_disk_target(&one(2.0, 2.0), 1.0, 4, 4).unwrap();
        let perfect = disk
            .map(|v| if v > 0.5 { 1.0 - 1e-12 } else { 1e-12 })
            .unwrap();
        assert!(bce_loss(&perfect, &disk).unwrap().0 < 1e-6);
    }

    #[test]
    fn huber_closed_forms() {
        let t = ScalarField::new(1, 2, 1, 0.0).unwrap();
        let mask = ScalarField::from_vec(1, 2, 1, vec![1.0, 0.0]).unwrap();
        let (l0, g0) = huber_loss_masked(&t, &t, &mask, 1.0).unwrap();
        assert_eq!(l0, 0.0);
        assert_eq!(g0.sum(), 0.0);
        let delta = 0.7;
        let p = ScalarField::from_vec(1, 2, 1, vec![2.0 * delta, 99.0]).unwrap();
        let (l, g) = huber_loss_masked(&p, &t, &mask, delta).unwrap();
        assert!((l - 1.5 * delta * delta).abs() < 1e-15);
        assert_eq!(g.data(), &[delta, 0.0]);
        let empty = ScalarField::new(1, 2, 1, 0.0).unwrap();
        assert_eq!(huber_loss_masked(&p, &t, &empty, delta).unwrap().0, 0.0);
    }

    #[test]
    fn mse_closed_forms() {
        let p = ScalarField::new(1, 1, 1, 1.0).unwrap();
        let t = ScalarField::new(1, 1, 1, 0.0).unwrap();
        let (l, g) = mse_loss(&p, &t).unwrap();
        assert_eq!((l, g.data()[0]), (1.0, 2.0));
        assert_eq!(mse_loss(&p, &p).unwrap().0, 0.0);
    }

    fn fd_loss(
        loss: impl Fn(&ScalarField) -> (f64, ScalarField),
        x: &ScalarField,
        skip: impl Fn(usize) -> bool,
    ) {
        let (_, g) = loss(x);
        let shape = x.shape();
        let r = finite_diff_check(
            |v| Ok(loss(&ScalarField::from_shape_vec(shape, v.to_vec())?).0),
            x.data(),
            g.data(),
            skip,
            FdOptions {
                tolerance: 1e-6,
                ..FdOptions::default()
            },
        )
        .unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = ScalarField::from_fn(5, 5, 2, |_, _, _| rng.random_range(0.05..0.95)).unwrap();
        let t = ScalarField::from_fn(5, 5, 2, |_, _, _| f64::from(u8::from(rng.random_bool(0.3))))
            .unwrap();
        fd_loss(|x| bce_loss(x, &t).unwrap(), &p, |_| false);
        let tr = ScalarField::from_fn(5, 5, 2, |_, _, _| rng.random_range(-1.0..1.0)).unwrap();
        fd_loss(|x| mse_loss(x, &tr).unwrap(), &p, |_| false);
        let mask =
            ScalarField::from_fn(5, 5, 2, |_, _, _| f64::from(u8::from(rng.random_bool(0.6))))
                .unwrap();
        let delta = 0.5;
        let pd = ScalarField::from_fn(5, 5, 2, |_, _, _| rng.random_range(-2.0..2.0)).unwrap();
        let kink = |i: usize| ((pd.data()[i] - tr.data()[i]).abs() - delta).abs() < 1e-4;
        fd_loss(
            |x| huber_loss_masked(x, &tr, &mask, delta).unwrap(),
            &pd,
            kink,
        );
    }

    #[test]
    fn pck_perfect_and_constant() {
        let kps = KeypointSet::new(vec![Keypoint::new(3.0, 4.0), Keypoint::new(1.0, 0.0)]).unwrap();
        let delta = make_disk_target(&kps, 0.0, 8, 8).unwrap();
        assert_eq!(pck_metric(&delta, &kps, 0.5).unwrap(), 1.0);
        let flat = ScalarField::new(8, 8, 2, 0.3).unwrap();
        assert_eq!(pck_metric(&flat, &kps, 2.0).unwrap(), 0.5);
        let hidden = KeypointSet::new(vec![Keypoint::hidden(1.0, 1.0)]).unwrap();
        assert!(
            pck_metric(&ScalarField::new(4, 4, 1, 0.0).unwrap(), &hidden, 1.0)
                .unwrap()
                .is_nan()
        );
    }

    #[test]
    fn pck_matches_brute_force_recount() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let kps = KeypointSet::new(
                (0..4)
                    .map(|_| Keypoint {
                        x: rng.random_range(0.0..16.0),
                        y: rng.random_range(0.0..16.0),
                        visible: rng.random_bool(0.8),
                    })
                    .collect(),
            )
            .unwrap();
            let pred =
                ScalarField::from_fn(16, 16, 4, |_, _, _| rng.random_range(0.0..1.0)).unwrap();
            let tol = 3.0;
            // brute force: scan every pixel for the maximum, no argmax helper
            let (mut hits, mut total) = (0, 0);
            for (j, kp) in kps.points().iter().enumerate() {
                if !kp.visible {
                    continue;
                }
                total += 1;
                let mut best = (f64::NEG_INFINITY, 0usize, 0usize);
                for y in 0..16 {
                    for x in 0..16 {
                        if pred.get(j, y, x) > best.0 {
                            best = (pred.get(j, y, x), x, y);
                        }
                    }
                }
                let d = ((best.1 as f64 - kp.x).powi(2) + (best.2 as f64 - kp.y).powi(2)).sqrt();
                hits += usize::from(d <= tol);
            }
            let got = pck_metric(&pred, &kps, tol).unwrap();
            if total == 0 {
                assert!(got.is_nan());
            } else {
                assert_eq!(got, hits as f64 / total as f64);
            }
        }
    }

    #[test]
    fn loss_params_validation() {
        assert!(LossParams::default().validate().is_ok());
        assert_eq!(LossParams::default().within_part_normalizer(), 3.0);
        let bad = LossParams {
            eps_m: 5.0,
            ..LossParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
