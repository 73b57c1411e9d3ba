//! Deterministic synthetic scenes for the within-part and cross-part tasks.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::Result;
use crate::field::ScalarField;
use crate::field::{export_pgm, save_mdnf};
use crate::supervision::{Keypoint, KeypointSet};

pub const SCENE_SIZE: usize = 64;
/// Keypoints stay at least this many pixels away from every border.
pub const MARGIN: f64 = 4.0;
pub const NOISE_SIGMA: f64 = 0.05;
pub const BONE_LENGTH: f64 = 12.0;
/// Bone lengths are drawn from `BONE_LENGTH * [1 - BONE_JITTER, 1 + BONE_JITTER]`.
pub const BONE_JITTER: f64 = 0.15;
pub const ANGLE_JITTER_DEG: f64 = 30.0;
/// Radius of the region erased around the middle joint.
pub const OCCLUSION_RADIUS: f64 = 7.0;

pub const TRAIN_SEEDS: std::ops::Range<u64> = 0..5000;
pub const HELDOUT_SEEDS: std::ops::Range<u64> = 10000..10200;

// per joint: (amplitude, blob sigma)
const CROSS_BLOBS: [(f64, f64); 3] = [(1.0, 2.0), (0.8, 1.5), (0.65, 1.2)];
const LIMB_AMPLITUDE: f64 = 0.5;
const LIMB_SIGMA: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub image: ScalarField,
    pub keypoints: KeypointSet,
    pub seed: u64,
}

impl Scene {
    /// Writes `<stem>.mdnf` and `<stem>.pgm` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        save_mdnf(&self.image, dir.join(format!("{stem}.mdnf")))?;
        export_pgm(&self.image, 0, dir.join(format!("{stem}.pgm")))
    }
}

fn noise(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let normal = Normal::new(0.0, NOISE_SIGMA).expect("valid noise sigma");
    (0..SCENE_SIZE * SCENE_SIZE)
        .map(|_| normal.sample(rng))
        .collect()
}

fn blob(x: f64, y: f64, cx: f64, cy: f64, amplitude: f64, sigma: f64) -> f64 {
    let r2 = (x - cx).powi(2) + (y - cy).powi(2);
    amplitude * (-r2 / (2.0 * sigma * sigma)).exp()
}

fn segment_distance(px: f64, py: f64, a: &Keypoint, b: &Keypoint) -> f64 {
    let (vx, vy) = (b.x - a.x, b.y - a.y);
    let len2 = vx * vx + vy * vy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((px - a.x) * vx + (py - a.y) * vy) / len2).clamp(0.0, 1.0)
    };
    ((px - a.x - t * vx).powi(2) + (py - a.y - t * vy).powi(2)).sqrt()
}

fn compose(signal: impl Fn(f64, f64) -> f64, noise: &[f64]) -> Result<ScalarField> {
    ScalarField::from_fn(SCENE_SIZE, SCENE_SIZE, 1, |_, y, x| {
        (signal(x as f64, y as f64) + noise[y * SCENE_SIZE + x]).clamp(0.0, 1.0)
    })
}

fn in_frame(v: f64) -> bool {
    (MARGIN..=SCENE_SIZE as f64 - 1.0 - MARGIN).contains(&v)
}

fn random_coord(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(MARGIN as usize..=SCENE_SIZE - 1 - MARGIN as usize) as f64
}

/// One Gaussian blob whose centre is the single keypoint.
pub fn gen_within(seed: u64) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cx, cy) = (random_coord(&mut rng), random_coord(&mut rng));
    let sigma = rng.random_range(2.0..=4.0);
    let amplitude = rng.random_range(0.6..=1.0);
    let n = noise(&mut rng);
    let image = compose(|x, y| blob(x, y, cx, cy, amplitude, sigma), &n).expect("fixed scene size");
    Scene {
        image,
        keypoints: KeypointSet::new(vec![Keypoint::new(cx, cy)]).expect("finite keypoint"),
        seed,
    }
}

/// Three joints on a jittered chain, joined by faint limbs. With `occlude`
/// everything within `OCCLUSION_RADIUS` of the middle joint is erased down to
/// the noise floor; the middle keypoint stays in the ground truth.
pub fn gen_cross(seed: u64, occlude: bool) -> Scene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let joints = loop {
        let (x0, y0) = (random_coord(&mut rng), random_coord(&mut rng));
        let heading = rng.random_range(0.0..2.0 * PI);
        let bend = rng
            .random_range(-ANGLE_JITTER_DEG..=ANGLE_JITTER_DEG)
            .to_radians();
        let l1 = BONE_LENGTH * rng.random_range(1.0 - BONE_JITTER..=1.0 + BONE_JITTER);
        let l2 = BONE_LENGTH * rng.random_range(1.0 - BONE_JITTER..=1.0 + BONE_JITTER);
        let x1 = (x0 + l1 * heading.cos()).round();
        let y1 = (y0 + l1 * heading.sin()).round();
        let x2 = (x1 + l2 * (heading + bend).cos()).round();
        let y2 = (y1 + l2 * (heading + bend).sin()).round();
        if [x1, y1, x2, y2].into_iter().all(in_frame) {
            break [
                Keypoint::new(x0, y0),
                Keypoint::new(x1, y1),
                Keypoint::new(x2, y2),
            ];
        }
    };
    let n = noise(&mut rng);
    let mid = joints[1];
    let signal = |x: f64, y: f64| {
        if occlude && mid.distance_to(x, y) <= OCCLUSION_RADIUS {
            return 0.0;
        }
        let limbs = joints
            .windows(2)
            .map(|w| {
                let d = segment_distance(x, y, &w[0], &w[1]);
                LIMB_AMPLITUDE * (-d * d / (2.0 * LIMB_SIGMA * LIMB_SIGMA)).exp()
            })
            .fold(0.0, f64::max);
        joints
            .iter()
            .zip(CROSS_BLOBS)
            .map(|(j, (a, s))| blob(x, y, j.x, j.y, a, s))
            .fold(limbs, f64::max)
    };
    let image = compose(signal, &n).expect("fixed scene size");
    Scene {
        image,
        keypoints: KeypointSet::new(joints.to_vec()).expect("finite keypoints"),
        seed,
    }
}
