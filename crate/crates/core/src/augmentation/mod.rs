//! Point-cloud and label augmentations.
//!
//! Per-object transforms move only the points inside the target box and
//! keep the box center fixed; world transforms act on every point and box
//! of a scene. [`curriculum`] schedules their intensities over training.

pub mod curriculum;

pub use curriculum::{
    augment_scene, cda_intensity, cda_range, stage_of_epoch, AugIntensity, CdaSchedule,
    SamplingRange,
};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{local_to_world, points_in_box, world_to_local, Box3, Dims, Point3};
use crate::scalar::Scalar;

/// A point cloud together with its box labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene<T> {
    pub id: String,
    pub points: Vec<Point3<T>>,
    pub boxes: Vec<Box3<T>>,
}

impl<T: Scalar> Scene<T> {
    pub fn new(id: impl Into<String>, points: Vec<Point3<T>>, boxes: Vec<Box3<T>>) -> Result<Self> {
        let id = id.into();
        if id.is_empty() {
            return Err(invalid("scene id must be non-empty"));
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(invalid(format!("scene {id}: non-finite point {p:?}")));
        }
        Ok(Self { id, points, boxes })
    }
}

/// Per-axis object scale factors `(r_l, r_w, r_h)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleFactors<T> {
    pub l: T,
    pub w: T,
    pub h: T,
}

impl<T: Scalar> ScaleFactors<T> {
    pub fn new(l: T, w: T, h: T) -> Result<Self> {
        let ok = |v: T| v.is_finite() && v > T::zero();
        if !(ok(l) && ok(w) && ok(h)) {
            return Err(invalid(format!(
                "scale factors must be positive: ({l}, {w}, {h})"
            )));
        }
        Ok(Self { l, w, h })
    }

    pub fn uniform(r: T) -> Result<Self> {
        Self::new(r, r, r)
    }
}

/// Object scaling sampling interval; defaults to `[0.75, 1.1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaleRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for ScaleRange {
    fn default() -> Self {
        Self { lo: 0.75, hi: 1.1 }
    }
}

impl ScaleRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && lo <= hi) {
            return Err(invalid(format!(
                "scaling range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { lo, hi })
    }

    pub(crate) fn sample<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        T::lit(if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..=self.hi)
        })
    }
}

fn check_index<T>(scene: &Scene<T>, index: usize) -> Result<()> {
    if index >= scene.boxes.len() {
        return Err(invalid(format!(
            "box index {index} out of range for scene {} with {} boxes",
            scene.id,
            scene.boxes.len()
        )));
    }
    Ok(())
}

/// Rewrites the points inside box `index` through `f` applied in the box
/// frame, and replaces the box with `new_box`.
fn transform_object<T: Scalar>(
    scene: &Scene<T>,
    index: usize,
    new_box: Box3<T>,
    f: impl Fn(Point3<T>) -> Point3<T>,
) -> Scene<T> {
    let bbox = scene.boxes[index];
    let mask = points_in_box(&scene.points, &bbox);
    let inside: Vec<Point3<T>> = scene
        .points
        .iter()
        .zip(&mask)
        .filter(|(_, m)| **m)
        .map(|(p, _)| *p)
        .collect();
    let local: Vec<Point3<T>> = world_to_local(&inside, &bbox).into_iter().map(f).collect();
    let moved = local_to_world(&local, &new_box);
    let mut out = scene.clone();
    let mut it = moved.into_iter();
    for (p, m) in out.points.iter_mut().zip(&mask) {
        if *m {
            *p = it.next().expect("one moved point per member");
        }
    }
    out.boxes[index] = new_box;
    out
}

/// Scales box `index` and the points inside it along the box axes.
pub fn apply_object_scaling<T: Scalar>(
    scene: &Scene<T>,
    index: usize,
    f: ScaleFactors<T>,
) -> Result<Scene<T>> {
    check_index(scene, index)?;
    let b = scene.boxes[index];
    let s = b.size();
    let new_box = b.with_size(Dims::new(s.l * f.l, s.w * f.w, s.h * f.h))?;
    Ok(transform_object(scene, index, new_box, |q| {
        Point3::new(q.x * f.l, q.y * f.w, q.z * f.h)
    }))
}

/// Rotates box `index` about its own center, carrying its points rigidly.
pub fn apply_object_rotation<T: Scalar>(
    scene: &Scene<T>,
    index: usize,
    angle: T,
) -> Result<Scene<T>> {
    check_index(scene, index)?;
    if !angle.is_finite() {
        return Err(invalid("rotation angle not finite"));
    }
    let b = scene.boxes[index];
    let new_box = b.with_yaw(b.yaw() + angle)?;
    Ok(transform_object(scene, index, new_box, |q| q))
}

/// Random object scaling: independent uniform factors per axis and per box.
pub fn random_object_scaling<T: Scalar, R: Rng + ?Sized>(
    scene: &Scene<T>,
    range: ScaleRange,
    rng: &mut R,
) -> Result<Scene<T>> {
    let range = ScaleRange::new(range.lo, range.hi)?;
    let mut out = scene.clone();
    for i in 0..scene.boxes.len() {
        let f = ScaleFactors::new(range.sample(rng), range.sample(rng), range.sample(rng))?;
        out = apply_object_scaling(&out, i, f)?;
    }
    Ok(out)
}

/// Rescales every object so its size equals `target`.
pub fn size_normalization<T: Scalar>(scene: &Scene<T>, target: Dims<T>) -> Result<Scene<T>> {
    if !target.is_valid() {
        return Err(invalid(format!("target size must be positive: {target:?}")));
    }
    let mut out = scene.clone();
    for i in 0..scene.boxes.len() {
        let s = scene.boxes[i].size();
        let f = ScaleFactors::new(target.l / s.l, target.w / s.w, target.h / s.h)?;
        out = apply_object_scaling(&out, i, f)?;
        // pin the size exactly; l * (t / l) can be off by one ulp
        out.boxes[i] = out.boxes[i].with_size(target)?;
    }
    Ok(out)
}

/// Augmentation families that the curriculum scheduler knows about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugKind {
    WorldRotation,
    WorldScaling,
    WorldFlipX,
    ObjectRotation,
    ObjectScaling,
}

impl AugKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, AugKind::WorldRotation | AugKind::ObjectRotation)
    }

    pub fn is_scaling(self) -> bool {
        matches!(self, AugKind::WorldScaling | AugKind::ObjectScaling)
    }
}

/// Applies a scene-wide transform.
///
/// `WorldRotation` takes an angle in `[-pi, pi]`, `WorldScaling` a positive
/// factor, and `WorldFlipX` a flag that must be `0` (no-op) or `1` (mirror
/// `y -> -y`). Per-object kinds are rejected here.
pub fn apply_world_transform<T: Scalar>(
    scene: &Scene<T>,
    kind: AugKind,
    magnitude: T,
) -> Result<Scene<T>> {
    if !magnitude.is_finite() {
        return Err(invalid("augmentation magnitude not finite"));
    }
    let mut out = scene.clone();
    match kind {
        AugKind::WorldRotation => {
            if magnitude.abs() > T::PI() {
                return Err(invalid(format!(
                    "world rotation {magnitude} outside [-pi, pi]"
                )));
            }
            let (s, c) = magnitude.sin_cos();
            let rot = |p: Point3<T>| Point3::new(p.x * c - p.y * s, p.x * s + p.y * c, p.z);
            out.points.iter_mut().for_each(|p| *p = rot(*p));
            for b in out.boxes.iter_mut() {
                *b = Box3::new(rot(b.center()), b.size(), b.yaw() + magnitude)?;
            }
        }
        AugKind::WorldScaling => {
            if magnitude <= T::zero() {
                return Err(invalid(format!(
                    "world scaling factor must be positive, got {magnitude}"
                )));
            }
            let m = magnitude;
            out.points
                .iter_mut()
                .for_each(|p| *p = Point3::new(p.x * m, p.y * m, p.z * m));
            for b in out.boxes.iter_mut() {
                let c = b.center();
                let s = b.size();
                *b = Box3::new(
                    Point3::new(c.x * m, c.y * m, c.z * m),
                    Dims::new(s.l * m, s.w * m, s.h * m),
                    b.yaw(),
                )?;
            }
        }
        AugKind::WorldFlipX => {
            if magnitude == T::zero() {
                return Ok(out);
            }
            if magnitude != T::one() {
                return Err(invalid(format!(
                    "flip flag must be 0 or 1, got {magnitude}"
                )));
            }
            out.points.iter_mut().for_each(|p| p.y = -p.y);
            for b in out.boxes.iter_mut() {
                let c = b.center();
                *b = Box3::new(Point3::new(c.x, -c.y, c.z), b.size(), -b.yaw())?;
            }
        }
        AugKind::ObjectRotation | AugKind::ObjectScaling => {
            return Err(invalid(format!("{kind:?} is a per-object augmentation")));
        }
    }
    Ok(out)
}
