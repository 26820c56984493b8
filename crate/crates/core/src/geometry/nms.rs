use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{iou_3d, Detection};
use crate::scalar::Scalar;

/// Which detection score ranks boxes during suppression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreField {
    Cls,
    Iou,
}

impl ScoreField {
    pub fn of<T: Scalar>(self, d: &Detection<T>) -> T {
        match self {
            ScoreField::Cls => d.cls_score,
            ScoreField::Iou => d.iou_score,
        }
    }
}

/// Bookkeeping of one greedy NMS pass.
#[derive(Debug, Clone, PartialEq)]
pub struct NmsOutcome<T> {
    /// Survivors in descending score order.
    pub kept: Vec<usize>,
    /// For every input, the survivor that removed it and their IoU.
    pub suppressed_by: Vec<Option<(usize, T)>>,
}

/// Descending score, then ascending index.
pub(crate) fn score_order<T: Scalar>(scores: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Greedy 3D-IoU suppression over arbitrary boxes and scores. Boxes whose
/// IoU with an earlier survivor exceeds `iou_thresh` are removed.
pub(crate) fn greedy_suppress<T: Scalar>(
    boxes: &[super::Box3<T>],
    scores: &[T],
    iou_thresh: T,
) -> NmsOutcome<T> {
    let order = score_order(scores);
    let mut suppressed_by = vec![None; boxes.len()];
    let mut kept = Vec::new();
    for (rank, &i) in order.iter().enumerate() {
        if suppressed_by[i].is_some() {
            continue;
        }
        kept.push(i);
        for &j in &order[rank + 1..] {
            if suppressed_by[j].is_some() {
                continue;
            }
            let iou = iou_3d(&boxes[i], &boxes[j]);
            if iou > iou_thresh {
                suppressed_by[j] = Some((i, iou));
            }
        }
    }
    NmsOutcome {
        kept,
        suppressed_by,
    }
}

pub fn nms_indices<T: Scalar>(
    dets: &[Detection<T>],
    iou_thresh: T,
    field: ScoreField,
) -> NmsOutcome<T> {
    let boxes: Vec<_> = dets.iter().map(|d| d.bbox).collect();
    let scores: Vec<_> = dets.iter().map(|d| field.of(d)).collect();
    greedy_suppress(&boxes, &scores, iou_thresh)
}

/// Greedy NMS; the survivors come back sorted by score.
pub fn nms<T: Scalar>(
    dets: &[Detection<T>],
    iou_thresh: T,
    field: ScoreField,
) -> Vec<Detection<T>> {
    nms_indices(dets, iou_thresh, field)
        .kept
        .into_iter()
        .map(|i| dets[i])
        .collect()
}
