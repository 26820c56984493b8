//! Proxy pseudo labels from raw detections.
//!
//! Boxes are scored by their predicted IoU `u`, never by classification
//! confidence, and split three ways: `u >= T_pos` is kept as positive,
//! `T_neg <= u < T_pos` is kept but ignored during training, anything
//! below `T_neg` is dropped.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::{Box3, Detection};
use crate::scalar::Scalar;

const LOG_CLAMP: f64 = 1e-7;

/// Binary cross entropy between a predicted IoU `u` and its target `u_hat`.
/// `u` is clamped to `[1e-7, 1 - 1e-7]` before taking logs.
pub fn iou_bce_loss<T: Scalar>(u: T, u_hat: T) -> Result<T> {
    let unit = |v: T| v >= T::zero() && v <= T::one();
    if !unit(u) || !unit(u_hat) {
        return Err(invalid(format!(
            "IoU loss inputs must lie in [0, 1]: u={u}, u_hat={u_hat}"
        )));
    }
    let m = T::lit(LOG_CLAMP);
    let u = u.max(m).min(T::one() - m);
    Ok(-(u_hat * u.ln()) - (T::one() - u_hat) * (T::one() - u).ln())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TripletThresholds<T> {
    pub t_neg: T,
    pub t_pos: T,
}

impl<T: Scalar> Default for TripletThresholds<T> {
    fn default() -> Self {
        Self {
            t_neg: T::lit(0.25),
            t_pos: T::lit(0.6),
        }
    }
}

impl<T: Scalar> TripletThresholds<T> {
    pub fn new(t_neg: T, t_pos: T) -> Result<Self> {
        let t = Self { t_neg, t_pos };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(T::zero() <= self.t_neg && self.t_neg <= self.t_pos && self.t_pos <= T::one()) {
            return Err(invalid(format!(
                "triplet thresholds need 0 <= t_neg <= t_pos <= 1, got ({}, {})",
                self.t_neg, self.t_pos
            )));
        }
        Ok(())
    }

    /// Tier of a score; `None` means the box is discarded.
    pub fn classify(&self, u: T) -> Option<BoxState> {
        if u >= self.t_pos {
            Some(BoxState::Positive)
        } else if u >= self.t_neg {
            Some(BoxState::Ignored)
        } else {
            None
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxState {
    Positive,
    Ignored,
}

/// A pseudo box with its score, state and unmatched-round counter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoBox<T> {
    pub bbox: Box3<T>,
    pub u: T,
    pub state: BoxState,
    pub cnt: u32,
}

/// Per-round detector output after partitioning; same shape as a memory entry.
pub type ProxyLabel<T> = PseudoBox<T>;

impl<T: Scalar> PseudoBox<T> {
    pub fn new(bbox: Box3<T>, u: T, state: BoxState, cnt: u32) -> Result<Self> {
        if !(u >= T::zero() && u <= T::one()) {
            return Err(invalid(format!(
                "pseudo box score must lie in [0, 1], got {u}"
            )));
        }
        Ok(Self {
            bbox,
            u,
            state,
            cnt,
        })
    }

    pub fn is_positive(&self) -> bool {
        self.state == BoxState::Positive
    }
}

/// Splits detections into stored positive/ignored labels, preserving order.
pub fn triplet_partition<T: Scalar>(
    dets: &[Detection<T>],
    t: &TripletThresholds<T>,
) -> Vec<ProxyLabel<T>> {
    dets.iter()
        .filter_map(|d| {
            t.classify(d.iou_score).map(|state| PseudoBox {
                bbox: d.bbox,
                u: d.iou_score,
                state,
                cnt: 0,
            })
        })
        .collect()
}
