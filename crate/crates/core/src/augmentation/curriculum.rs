//! Curriculum data augmentation: a multi-step intensity scheduler.
//!
//! Training epochs are split into `E` stages; at stage `s` every
//! augmentation runs at `eps0 * alpha^(s - 1)`. Rotations sample from
//! `[-eps, eps]` and scalings from `[1 - eps, 1 + eps]`. Flips are not
//! scheduled and fire with probability one half.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{
    apply_object_rotation, apply_object_scaling, apply_world_transform, AugKind, ScaleFactors,
    Scene,
};
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// `eps0 * alpha^(stage - 1)`.
pub fn cda_intensity<T: Scalar>(eps0: T, alpha: T, stage: u32) -> Result<T> {
    if stage < 1 {
        return Err(invalid("curriculum stage is 1-based"));
    }
    if !(eps0.is_finite() && alpha.is_finite()) || eps0 < T::zero() {
        return Err(invalid(format!(
            "bad intensity parameters eps0={eps0}, alpha={alpha}"
        )));
    }
    Ok(eps0 * alpha.powi(stage as i32 - 1))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SamplingRange<T> {
    Interval { lo: T, hi: T },
    Bernoulli { p: T },
}

impl<T: Scalar> SamplingRange<T> {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        match *self {
            SamplingRange::Interval { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    T::lit(rng.random_range(lo.to_f64_lossy()..=hi.to_f64_lossy()))
                }
            }
            SamplingRange::Bernoulli { p } => {
                if rng.random_bool(p.to_f64_lossy()) {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

/// Sampling range of one augmentation at intensity `eps`.
pub fn cda_range<T: Scalar>(eps: T, kind: AugKind) -> Result<SamplingRange<T>> {
    if !eps.is_finite() || eps < T::zero() {
        return Err(invalid(format!(
            "intensity must be non-negative, got {eps}"
        )));
    }
    if kind.is_rotation() {
        Ok(SamplingRange::Interval { lo: -eps, hi: eps })
    } else if kind.is_scaling() {
        if eps >= T::one() {
            return Err(invalid(format!(
                "scaling intensity {eps} would allow non-positive scales"
            )));
        }
        Ok(SamplingRange::Interval {
            lo: T::one() - eps,
            hi: T::one() + eps,
        })
    } else {
        Ok(SamplingRange::Bernoulli { p: T::lit(0.5) })
    }
}

/// 1-based stage of a 0-based epoch. Stages are `ceil(total / E)` epochs
/// long; the last one absorbs any remainder.
pub fn stage_of_epoch(epoch: u32, total_epochs: u32, stages: u32) -> Result<u32> {
    if stages == 0 || total_epochs == 0 {
        return Err(invalid("stage and epoch counts must be positive"));
    }
    if epoch >= total_epochs {
        return Err(invalid(format!(
            "epoch {epoch} outside [0, {total_epochs})"
        )));
    }
    let per_stage = total_epochs.div_ceil(stages);
    Ok((epoch / per_stage + 1).min(stages))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AugIntensity {
    pub kind: AugKind,
    pub eps0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdaSchedule {
    pub eps0: Vec<AugIntensity>,
    pub alpha: f64,
    pub stages: u32,
    pub total_epochs: u32,
}

impl Default for CdaSchedule {
    fn default() -> Self {
        use AugKind::*;
        let eps0 = [
            (WorldRotation, std::f64::consts::FRAC_PI_4 / 1.2_f64.powi(5)),
            (WorldScaling, 0.05 / 1.2_f64.powi(5)),
            (WorldFlipX, 0.0),
            (ObjectRotation, 0.1),
            (ObjectScaling, 0.05),
        ]
        .into_iter()
        .map(|(kind, eps0)| AugIntensity { kind, eps0 })
        .collect();
        Self {
            eps0,
            alpha: 1.2,
            stages: 6,
            total_epochs: 30,
        }
    }
}

impl CdaSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha > 1.0) {
            return Err(invalid(format!("alpha must exceed 1, got {}", self.alpha)));
        }
        if self.stages == 0 || self.total_epochs == 0 {
            return Err(invalid("stages and total_epochs must be positive"));
        }
        for a in &self.eps0 {
            if !(a.eps0.is_finite() && a.eps0 >= 0.0) {
                return Err(invalid(format!(
                    "{:?}: intensity must be non-negative",
                    a.kind
                )));
            }
            let last = cda_intensity(a.eps0, self.alpha, self.stages)?;
            if a.kind.is_rotation() && last >= std::f64::consts::PI {
                return Err(invalid(format!(
                    "{:?}: final-stage rotation {last} reaches pi",
                    a.kind
                )));
            }
            if a.kind.is_scaling() && last >= 1.0 {
                return Err(invalid(format!(
                    "{:?}: final-stage scaling {last} reaches 1",
                    a.kind
                )));
            }
        }
        Ok(())
    }

    pub fn stage_of_epoch(&self, epoch: u32) -> Result<u32> {
        stage_of_epoch(epoch, self.total_epochs, self.stages)
    }

    pub fn intensity(&self, kind: AugKind, stage: u32) -> Result<f64> {
        let a = self
            .eps0
            .iter()
            .find(|a| a.kind == kind)
            .ok_or_else(|| invalid(format!("{kind:?} is not scheduled")))?;
        cda_intensity(a.eps0, self.alpha, stage)
    }

    pub fn ranges(&self, stage: u32) -> Result<Vec<(AugKind, SamplingRange<f64>)>> {
        self.eps0
            .iter()
            .map(|a| {
                Ok((
                    a.kind,
                    cda_range(cda_intensity(a.eps0, self.alpha, stage)?, a.kind)?,
                ))
            })
            .collect()
    }
}

/// Draws every scheduled augmentation at `stage` and applies it in the
/// schedule's order. Per-object kinds draw independently for each box.
pub fn augment_scene<T: Scalar, R: Rng + ?Sized>(
    scene: &Scene<T>,
    schedule: &CdaSchedule,
    stage: u32,
    rng: &mut R,
) -> Result<Scene<T>> {
    schedule.validate()?;
    let mut out = scene.clone();
    for (kind, range) in schedule.ranges(stage)? {
        let range = match range {
            SamplingRange::Interval { lo, hi } => SamplingRange::Interval {
                lo: T::lit(lo),
                hi: T::lit(hi),
            },
            SamplingRange::Bernoulli { p } => SamplingRange::Bernoulli { p: T::lit(p) },
        };
        match kind {
            AugKind::ObjectRotation => {
                for i in 0..out.boxes.len() {
                    let angle = range.sample(rng);
                    out = apply_object_rotation(&out, i, angle)?;
                }
            }
            AugKind::ObjectScaling => {
                for i in 0..out.boxes.len() {
                    let f =
                        ScaleFactors::new(range.sample(rng), range.sample(rng), range.sample(rng))?;
                    out = apply_object_scaling(&out, i, f)?;
                }
            }
            _ => {
                let m = range.sample(rng);
                out = apply_world_transform(&out, kind, m)?;
            }
        }
    }
    Ok(out)
}
