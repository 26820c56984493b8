//! Detection and pseudo-label quality metrics.
//!
//! True positives are assigned greedily in descending prediction score:
//! each prediction claims the still-free ground truth with the highest IoU,
//! provided that IoU reaches the threshold. AP samples the interpolated
//! precision at `N` evenly spaced recall positions `1/N, ..., 1`.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Box3, IouKind};
use crate::pseudo_label::PseudoBox;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub iou_kind: IouKind,
    pub recall_positions: u32,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_threshold: 0.7,
            iou_kind: IouKind::ThreeD,
            recall_positions: 40,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(invalid(format!(
                "IoU threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        if self.recall_positions == 0 {
            return Err(invalid("recall_positions must be positive"));
        }
        Ok(())
    }
}

/// A prediction with the score that ranks it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredBox<T> {
    pub bbox: Box3<T>,
    pub score: T,
}

fn desc_order<T: Scalar>(preds: &[ScoredBox<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// One-to-one `(pred_index, gt_index)` pairs in the order they were made.
pub fn match_tp<T: Scalar>(
    preds: &[ScoredBox<T>],
    gts: &[Box3<T>],
    cfg: &EvalConfig,
) -> Vec<(usize, usize)> {
    let thresh = T::lit(cfg.iou_threshold);
    let mut gt_taken = vec![false; gts.len()];
    let mut pairs = Vec::new();
    for p in desc_order(preds) {
        let mut best: Option<(usize, T)> = None;
        for (g, gt) in gts.iter().enumerate() {
            if gt_taken[g] {
                continue;
            }
            let iou = cfg.iou_kind.eval(&preds[p].bbox, gt);
            if iou >= thresh && best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        if let Some((g, _)) = best {
            gt_taken[g] = true;
            pairs.push((p, g));
        }
    }
    pairs
}

/// Average precision over `cfg.recall_positions` recall samples, pooling
/// predictions of all scenes. Fails when no scene has ground truth.
pub fn ap_recall_positions<T: Scalar>(
    preds: &[Vec<ScoredBox<T>>],
    gts: &[Vec<Box3<T>>],
    cfg: &EvalConfig,
) -> Result<T> {
    cfg.validate()?;
    if preds.len() != gts.len() {
        return Err(invalid(format!(
            "{} prediction scenes vs {} ground-truth scenes",
            preds.len(),
            gts.len()
        )));
    }
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    if n_gt == 0 {
        return Err(Error::Undefined(
            "AP needs at least one ground-truth box".into(),
        ));
    }
    // (score, scene, index, is_tp)
    let mut flat: Vec<(T, usize, usize, bool)> = Vec::new();
    for (s, (p, g)) in preds.iter().zip(gts).enumerate() {
        let mut tp = vec![false; p.len()];
        for (pi, _) in match_tp(p, g, cfg) {
            tp[pi] = true;
        }
        flat.extend(p.iter().enumerate().map(|(i, b)| (b.score, s, i, tp[i])));
    }
    flat.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let total = T::from_usize(n_gt).unwrap();
    let mut curve: Vec<(T, T)> = Vec::with_capacity(flat.len());
    let mut tp = 0usize;
    for (k, e) in flat.iter().enumerate() {
        if e.3 {
            tp += 1;
        }
        let t = T::from_usize(tp).unwrap();
        curve.push((t / total, t / T::from_usize(k + 1).unwrap()));
    }
    // suffix maximum of precision gives the interpolated curve
    let mut interp = vec![T::zero(); curve.len()];
    let mut run = T::zero();
    for i in (0..curve.len()).rev() {
        run = run.max(curve[i].1);
        interp[i] = run;
    }
    let n = cfg.recall_positions as usize;
    let mut sum = T::zero();
    let mut cursor = 0usize;
    for r in 1..=n {
        let level = T::from_usize(r).unwrap() / T::from_usize(n).unwrap();
        while cursor < curve.len() && curve[cursor].0 < level {
            cursor += 1;
        }
        if cursor < curve.len() {
            sum = sum + interp[cursor];
        }
    }
    Ok(sum / T::from_usize(n).unwrap())
}

/// BEV center distance.
pub fn translation_error<T: Scalar>(pred: &Box3<T>, gt: &Box3<T>) -> T {
    let (a, b) = (pred.center(), gt.center());
    (a.x - b.x).hypot(a.y - b.y)
}

/// `1 - IoU` of the two sizes once centers and headings are aligned.
pub fn scale_error<T: Scalar>(pred: &Box3<T>, gt: &Box3<T>) -> T {
    let (a, b) = (pred.size(), gt.size());
    let inter = a.l.min(b.l) * a.w.min(b.w) * a.h.min(b.h);
    let union = a.volume() + b.volume() - inter;
    (T::one() - inter / union).max(T::zero()).min(T::one())
}

/// Smallest absolute heading difference, in `[0, pi]`.
pub fn orientation_error<T: Scalar>(pred: &Box3<T>, gt: &Box3<T>) -> T {
    let two_pi = T::PI() + T::PI();
    let mut d = (pred.yaw() - gt.yaw()).abs() % two_pi;
    if d > T::PI() {
        d = two_pi - d;
    }
    d
}

/// Share of the source-only to oracle gap recovered by a model, in percent.
pub fn closed_gap<T: Scalar>(ap_model: T, ap_source: T, ap_oracle: T) -> Result<T> {
    let denom = ap_oracle - ap_source;
    if denom == T::zero() || !denom.is_finite() {
        return Err(Error::Undefined(
            "closed gap needs oracle AP != source AP".into(),
        ));
    }
    Ok((ap_model - ap_source) / denom * T::lit(100.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityReport<T> {
    pub tp_count: usize,
    pub fp_count: usize,
    pub fn_count: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
    pub ate: T,
    pub ase: T,
    pub aoe: T,
}

/// Counts and mean true-positive errors over a set of scenes.
pub fn quality_report<'a, T: Scalar>(
    scenes: impl IntoIterator<Item = (&'a [ScoredBox<T>], &'a [Box3<T>])>,
    cfg: &EvalConfig,
) -> QualityReport<T> {
    let (mut tp, mut n_pred, mut n_gt) = (0usize, 0usize, 0usize);
    let (mut ate, mut ase, mut aoe) = (T::zero(), T::zero(), T::zero());
    for (preds, gts) in scenes {
        n_pred += preds.len();
        n_gt += gts.len();
        for (p, g) in match_tp(preds, gts, cfg) {
            tp += 1;
            ate = ate + translation_error(&preds[p].bbox, &gts[g]);
            ase = ase + scale_error(&preds[p].bbox, &gts[g]);
            aoe = aoe + orientation_error(&preds[p].bbox, &gts[g]);
        }
    }
    let ratio = |num: usize, den: usize| {
        if den == 0 {
            T::zero()
        } else {
            T::from_usize(num).unwrap() / T::from_usize(den).unwrap()
        }
    };
    let precision = ratio(tp, n_pred);
    let recall = ratio(tp, n_gt);
    let f1 = if precision + recall > T::zero() {
        T::lit(2.0) * precision * recall / (precision + recall)
    } else {
        T::zero()
    };
    let mean = |s: T| {
        if tp == 0 {
            T::zero()
        } else {
            s / T::from_usize(tp).unwrap()
        }
    };
    QualityReport {
        tp_count: tp,
        fp_count: n_pred - tp,
        fn_count: n_gt - tp,
        precision,
        recall,
        f1,
        ate: mean(ate),
        ase: mean(ase),
        aoe: mean(aoe),
    }
}

/// Scores the positive entries of each scene's pseudo labels against its
/// ground truth; ignored entries do not count as predictions.
pub fn pseudo_label_quality<'a, T: Scalar>(
    scenes: impl IntoIterator<Item = (&'a [PseudoBox<T>], &'a [Box3<T>])>,
    cfg: &EvalConfig,
) -> QualityReport<T> {
    let scored: Vec<_> = scenes
        .into_iter()
        .map(|(entries, gts)| {
            let preds = entries
                .iter()
                .filter(|e| e.is_positive())
                .map(|e| ScoredBox {
                    bbox: e.bbox,
                    score: e.u,
                });
            (preds.collect::<Vec<_>>(), gts)
        })
        .collect();
    quality_report(scored.iter().map(|(p, g)| (p.as_slice(), *g)), cfg)
}
