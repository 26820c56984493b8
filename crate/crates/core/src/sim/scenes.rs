use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{stream, stream_rng};
use crate::augmentation::Scene;
use crate::error::{invalid, Error, Result};
use crate::geometry::{local_to_world, Box3, Dims, Point3};

const MAX_PLACEMENT_ATTEMPTS: usize = 1000;

/// Synthetic target-domain layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneGenConfig {
    pub n_scenes: usize,
    /// Inclusive `[min, max]` box count per scene.
    pub boxes_per_scene: [usize; 2],
    /// Box centers fall in `[-extent, extent]^2`.
    pub extent: f64,
    pub size_mean: [f64; 3],
    pub size_std: [f64; 3],
    /// Minimum BEV distance between box centers.
    pub min_separation: f64,
    pub points_per_box: usize,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        Self {
            n_scenes: 50,
            boxes_per_scene: [4, 10],
            extent: 40.0,
            size_mean: [3.9, 1.6, 1.56],
            size_std: [0.3, 0.1, 0.1],
            min_separation: 6.0,
            points_per_box: 64,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.extent.is_finite() && self.extent > 0.0) {
            return Err(invalid("scene extent must be positive"));
        }
        if self.size_mean.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
            return Err(invalid("mean box size must be positive"));
        }
        if self.size_std.iter().any(|&v| !(v.is_finite() && v >= 0.0)) {
            return Err(invalid("box size std must be non-negative"));
        }
        if !(self.min_separation.is_finite() && self.min_separation >= 0.0) {
            return Err(invalid("min separation must be non-negative"));
        }
        if self.boxes_per_scene[0] > self.boxes_per_scene[1] {
            return Err(invalid(
                "boxes_per_scene must be [min, max] with min <= max",
            ));
        }
        Ok(())
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Uniform sample on the surface of a `size` box in its local frame.
fn surface_point<R: Rng + ?Sized>(size: &Dims<f64>, rng: &mut R) -> Point3<f64> {
    let (l, w, h) = (size.l, size.w, size.h);
    let faces = [w * h, w * h, l * h, l * h, l * w, l * w];
    let total: f64 = faces.iter().sum();
    let mut pick = rng.random::<f64>() * total;
    let mut face = 5;
    for (i, a) in faces.iter().enumerate() {
        if pick < *a {
            face = i;
            break;
        }
        pick -= a;
    }
    let mut u = |half: f64| (rng.random::<f64>() * 2.0 - 1.0) * half;
    let (hl, hw, hh) = (l / 2.0, w / 2.0, h / 2.0);
    match face {
        0 => Point3::new(hl, u(hw), u(hh)),
        1 => Point3::new(-hl, u(hw), u(hh)),
        2 => Point3::new(u(hl), hw, u(hh)),
        3 => Point3::new(u(hl), -hw, u(hh)),
        4 => Point3::new(u(hl), u(hw), hh),
        _ => Point3::new(u(hl), u(hw), -hh),
    }
}

/// One scene: boxes on the ground plane placed by rejection sampling, and
/// `points_per_box` surface points per box.
pub fn generate_scene<R: Rng + ?Sized>(
    cfg: &SceneGenConfig,
    index: usize,
    rng: &mut R,
) -> Result<Scene<f64>> {
    cfg.validate()?;
    let [lo, hi] = cfg.boxes_per_scene;
    let n_boxes = if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    };
    let mut boxes: Vec<Box3<f64>> = Vec::with_capacity(n_boxes);
    for b in 0..n_boxes {
        let mut placed = None;
        for _ in 0..MAX_PLACEMENT_ATTEMPTS {
            let x = rng.random_range(-cfg.extent..=cfg.extent);
            let y = rng.random_range(-cfg.extent..=cfg.extent);
            let clear = boxes.iter().all(|o| {
                let c = o.center();
                (c.x - x).hypot(c.y - y) >= cfg.min_separation
            });
            if clear {
                placed = Some((x, y));
                break;
            }
        }
        let (x, y) = placed.ok_or(Error::Placement {
            scene: index,
            index: b,
            attempts: MAX_PLACEMENT_ATTEMPTS,
        })?;
        let dims: Vec<f64> = (0..3)
            .map(|k| {
                (cfg.size_mean[k] + cfg.size_std[k] * normal(rng)).max(0.25 * cfg.size_mean[k])
            })
            .collect();
        let size = Dims::new(dims[0], dims[1], dims[2]);
        let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
        boxes.push(Box3::new(Point3::new(x, y, size.h / 2.0), size, yaw)?);
    }
    let mut points = Vec::with_capacity(n_boxes * cfg.points_per_box);
    for b in &boxes {
        let local: Vec<Point3<f64>> = (0..cfg.points_per_box)
            .map(|_| surface_point(&b.size(), rng))
            .collect();
        points.extend(local_to_world(&local, b));
    }
    Scene::new(format!("scene_{index:04}"), points, boxes)
}

/// All scenes of a run; scene `i` draws from its own stream of `seed`.
pub fn generate_scenes(cfg: &SceneGenConfig, seed: u64) -> Result<Vec<Scene<f64>>> {
    (0..cfg.n_scenes)
        .into_par_iter()
        .map(|i| generate_scene(cfg, i, &mut stream_rng(seed, &[stream::SCENES, i as u64])))
        .collect()
}
