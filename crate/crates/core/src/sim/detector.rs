//! Parametric stand-in for a trained detector.
//!
//! Each ground-truth box is found with probability `p_det` and perturbed by
//! Gaussian noise; its predicted IoU is the true IoU plus noise. False
//! positives arrive as a Poisson process with Beta-distributed scores.
//! Retraining is modelled by [`apply_feedback`], which moves every noise
//! parameter from its base value toward a floor (or ceiling, for `p_det`)
//! in proportion to the previous round's pseudo-label F1.

use rand::Rng;
use rand_distr::{Beta, Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{stream, stream_rng};
use crate::augmentation::Scene;
use crate::error::{invalid, Result};
use crate::geometry::{iou_3d, nms, Box3, Detection, Dims, Point3, ScoreField};

/// NMS threshold the detector applies before returning.
pub const DETECTOR_NMS_IOU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    pub p_det: f64,
    /// Expected false positives per scene.
    pub fp_rate: f64,
    pub sigma_xy: f64,
    pub sigma_z: f64,
    /// Relative size noise.
    pub sigma_size: f64,
    pub sigma_yaw: f64,
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_det) {
            return Err(invalid(format!("p_det {} outside [0, 1]", self.p_det)));
        }
        let sig = [
            self.fp_rate,
            self.sigma_xy,
            self.sigma_z,
            self.sigma_size,
            self.sigma_yaw,
        ];
        if sig.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(invalid("detector noise parameters must be non-negative"));
        }
        Ok(())
    }

    pub fn noiseless() -> Self {
        Self {
            p_det: 1.0,
            fp_rate: 0.0,
            sigma_xy: 0.0,
            sigma_z: 0.0,
            sigma_size: 0.0,
            sigma_yaw: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorModel {
    /// Noise of the source-trained detector.
    pub base: NoiseParams,
    /// Best reachable noise; its `p_det` is a ceiling.
    pub floor: NoiseParams,
    /// Parameters in effect for the next round.
    pub current: NoiseParams,
    /// Noise on the predicted IoU.
    pub sigma_u: f64,
    /// Beta shape of false-positive scores.
    pub fp_score_beta: [f64; 2],
    /// Per-round relative fluctuation of `p_det` and `fp_rate`.
    pub jitter: f64,
    /// Feedback gain in `[0, 1]`.
    pub feedback_gain: f64,
    /// False positives land uniformly in `[-fp_extent, fp_extent]^2`.
    pub fp_extent: f64,
    pub fp_size_mean: [f64; 3],
    /// Jitter stream; filled in from the experiment seed.
    #[serde(skip)]
    pub seed: u64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        let base = NoiseParams {
            p_det: 0.7,
            fp_rate: 2.0,
            sigma_xy: 0.2,
            sigma_z: 0.08,
            sigma_size: 0.06,
            sigma_yaw: 0.06,
        };
        Self {
            base,
            floor: NoiseParams {
                p_det: 0.85,
                fp_rate: 0.5,
                sigma_xy: 0.1,
                sigma_z: 0.04,
                sigma_size: 0.03,
                sigma_yaw: 0.03,
            },
            current: base,
            sigma_u: 0.08,
            fp_score_beta: [2.0, 8.0],
            jitter: 0.3,
            feedback_gain: 0.8,
            fp_extent: 40.0,
            fp_size_mean: [3.9, 1.6, 1.56],
            seed: 0,
        }
    }
}

impl DetectorModel {
    pub fn noiseless() -> Self {
        let n = NoiseParams::noiseless();
        Self {
            base: n,
            floor: n,
            current: n,
            sigma_u: 0.0,
            jitter: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        self.floor.validate()?;
        self.current.validate()?;
        if !(self.sigma_u.is_finite() && self.sigma_u >= 0.0) {
            return Err(invalid("sigma_u must be non-negative"));
        }
        if self
            .fp_score_beta
            .iter()
            .any(|v| !(v.is_finite() && *v > 0.0))
        {
            return Err(invalid("fp_score_beta shapes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.jitter) {
            return Err(invalid("jitter must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.feedback_gain) {
            return Err(invalid("feedback_gain must lie in [0, 1]"));
        }
        if !(self.fp_extent.is_finite() && self.fp_extent > 0.0)
            || !self.fp_size_mean.iter().all(|v| *v > 0.0)
        {
            return Err(invalid("false-positive extent and size must be positive"));
        }
        Ok(())
    }

    /// `(p_det, fp_rate)` for `round` after the shared per-round fluctuation.
    pub fn jittered(&self, round: u32) -> (f64, f64) {
        if self.jitter == 0.0 {
            return (self.current.p_det, self.current.fp_rate);
        }
        let mut rng = stream_rng(self.seed, &[stream::JITTER, round as u64]);
        let a: f64 = rng.random_range(-1.0..=1.0);
        let b: f64 = rng.random_range(-1.0..=1.0);
        let p = (self.current.p_det * (1.0 + self.jitter * a)).clamp(0.0, 1.0);
        let l = (self.current.fp_rate * (1.0 + self.jitter * b)).max(0.0);
        (p, l)
    }
}

fn gauss<R: Rng + ?Sized>(rng: &mut R, sigma: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    sigma * z
}

fn positive_scale(v: f64, rel: f64) -> f64 {
    (v * (1.0 + rel)).max(0.1 * v)
}

/// One round of detections for a scene, NMS-filtered at 0.1 on the IoU score.
pub fn simulate_detector<R: Rng + ?Sized>(
    scene: &Scene<f64>,
    model: &DetectorModel,
    round: u32,
    rng: &mut R,
) -> Result<Vec<Detection<f64>>> {
    model.validate()?;
    let n = model.current;
    let (p_det, fp_rate) = model.jittered(round);
    let mut dets = Vec::new();
    for gt in &scene.boxes {
        if !rng.random_bool(p_det) {
            continue;
        }
        let c = gt.center();
        let s = gt.size();
        let bbox = Box3::new(
            Point3::new(
                c.x + gauss(rng, n.sigma_xy),
                c.y + gauss(rng, n.sigma_xy),
                c.z + gauss(rng, n.sigma_z),
            ),
            Dims::new(
                positive_scale(s.l, gauss(rng, n.sigma_size)),
                positive_scale(s.w, gauss(rng, n.sigma_size)),
                positive_scale(s.h, gauss(rng, n.sigma_size)),
            ),
            gt.yaw() + gauss(rng, n.sigma_yaw),
        )?;
        let true_iou = iou_3d(&bbox, gt);
        let u = (true_iou + gauss(rng, model.sigma_u)).clamp(0.0, 1.0);
        let cls = (0.5 + 0.5 * true_iou + gauss(rng, 0.1)).clamp(0.0, 1.0);
        dets.push(Detection::new(bbox, cls, u)?);
    }
    if fp_rate > 0.0 {
        let count = Poisson::new(fp_rate)
            .map_err(|e| invalid(e.to_string()))?
            .sample(rng) as usize;
        let beta = Beta::new(model.fp_score_beta[0], model.fp_score_beta[1])
            .map_err(|e| invalid(e.to_string()))?;
        let e = model.fp_extent;
        let [ml, mw, mh] = model.fp_size_mean;
        for _ in 0..count {
            let size = Dims::new(
                positive_scale(ml, gauss(rng, n.sigma_size)),
                positive_scale(mw, gauss(rng, n.sigma_size)),
                positive_scale(mh, gauss(rng, n.sigma_size)),
            );
            let center = Point3::new(
                rng.random_range(-e..=e),
                rng.random_range(-e..=e),
                size.h / 2.0,
            );
            let yaw = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            let u: f64 = beta.sample(rng);
            let cls: f64 = beta.sample(rng);
            dets.push(Detection::new(Box3::new(center, size, yaw)?, cls, u)?);
        }
    }
    Ok(nms(&dets, DETECTOR_NMS_IOU, ScoreField::Iou))
}

/// Moves `current` from `base` toward `floor` by `gain * f1`.
pub fn apply_feedback_with_gain(
    model: &DetectorModel,
    f1_prev: f64,
    gain: f64,
) -> Result<DetectorModel> {
    if !(0.0..=1.0).contains(&f1_prev) {
        return Err(invalid(format!("f1 {f1_prev} outside [0, 1]")));
    }
    if !(0.0..=1.0).contains(&gain) {
        return Err(invalid(format!("feedback gain {gain} outside [0, 1]")));
    }
    let keep = 1.0 - gain * f1_prev;
    let (b, f) = (model.base, model.floor);
    let toward = |base: f64, floor: f64| floor + (base - floor) * keep;
    let current = NoiseParams {
        p_det: toward(b.p_det, f.p_det),
        fp_rate: toward(b.fp_rate, f.fp_rate),
        sigma_xy: toward(b.sigma_xy, f.sigma_xy),
        sigma_z: toward(b.sigma_z, f.sigma_z),
        sigma_size: toward(b.sigma_size, f.sigma_size),
        sigma_yaw: toward(b.sigma_yaw, f.sigma_yaw),
    };
    Ok(DetectorModel {
        current,
        ..model.clone()
    })
}

/// [`apply_feedback_with_gain`] at the model's own gain.
pub fn apply_feedback(model: &DetectorModel, f1_prev: f64) -> Result<DetectorModel> {
    apply_feedback_with_gain(model, f1_prev, model.feedback_gain)
}
