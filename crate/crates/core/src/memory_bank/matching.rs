//! The three ways of pairing memory entries with proxy labels.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::assignment::min_cost_assignment;
use crate::geometry::{greedy_suppress, pairwise_iou_matrix, Box3};
use crate::pseudo_label::PseudoBox;
use crate::scalar::Scalar;

/// Pairs with a 3D IoU below this are never matched.
pub const MATCH_IOU: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnsembleVariant {
    #[default]
    Consistency,
    Nms,
    Bipartite,
}

impl std::str::FromStr for EnsembleVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "consistency" | "c" => Ok(Self::Consistency),
            "nms" | "n" => Ok(Self::Nms),
            "bipartite" | "b" => Ok(Self::Bipartite),
            other => Err(format!("unknown ensemble variant {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair<T> {
    pub memory: usize,
    pub proxy: usize,
    pub iou: T,
}

/// Outcome of matching; every memory and proxy index appears in exactly
/// one of the lists. `removed_*` only fills under the NMS variant, for
/// boxes suppressed by a survivor of their own pool.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult<T> {
    pub matched: Vec<MatchPair<T>>,
    pub unmatched_memory: Vec<usize>,
    pub unmatched_proxy: Vec<usize>,
    pub removed_memory: Vec<usize>,
    pub removed_proxy: Vec<usize>,
}

impl<T: Scalar> MatchResult<T> {
    fn from_pairs(n_memory: usize, n_proxy: usize, mut matched: Vec<MatchPair<T>>) -> Self {
        matched.sort_by_key(|p| p.memory);
        let mut mem_used = vec![false; n_memory];
        let mut prx_used = vec![false; n_proxy];
        for p in &matched {
            mem_used[p.memory] = true;
            prx_used[p.proxy] = true;
        }
        Self {
            unmatched_memory: (0..n_memory).filter(|&i| !mem_used[i]).collect(),
            unmatched_proxy: (0..n_proxy).filter(|&i| !prx_used[i]).collect(),
            matched,
            removed_memory: Vec::new(),
            removed_proxy: Vec::new(),
        }
    }

    pub fn total_iou(&self) -> T {
        self.matched.iter().fold(T::zero(), |acc, p| acc + p.iou)
    }
}

fn boxes<T: Scalar>(entries: &[PseudoBox<T>]) -> Vec<Box3<T>> {
    entries.iter().map(|e| e.bbox).collect()
}

/// Each memory box proposes its best-IoU proxy box; conflicts go to the
/// higher IoU (then lower memory index, then lower proxy index).
pub fn consistency_match<T: Scalar>(
    memory: &[PseudoBox<T>],
    proxy: &[PseudoBox<T>],
) -> MatchResult<T> {
    let iou = pairwise_iou_matrix(&boxes(memory), &boxes(proxy));
    let cutoff = T::lit(MATCH_IOU);
    let mut candidates: Vec<MatchPair<T>> = Vec::new();
    for j in 0..iou.rows() {
        let row = iou.row(j);
        let mut best: Option<usize> = None;
        for (v, &a) in row.iter().enumerate() {
            if best.is_none_or(|b| a > row[b]) {
                best = Some(v);
            }
        }
        if let Some(v) = best {
            if row[v] >= cutoff {
                candidates.push(MatchPair {
                    memory: j,
                    proxy: v,
                    iou: row[v],
                });
            }
        }
    }
    candidates.sort_by(|a, b| {
        b.iou
            .partial_cmp(&a.iou)
            .unwrap_or(Ordering::Equal)
            .then(a.memory.cmp(&b.memory))
            .then(a.proxy.cmp(&b.proxy))
    });
    let mut taken = vec![false; proxy.len()];
    let mut matched = Vec::new();
    for c in candidates {
        if !taken[c.proxy] {
            taken[c.proxy] = true;
            matched.push(c);
        }
    }
    MatchResult::from_pairs(memory.len(), proxy.len(), matched)
}

/// Optimal assignment maximising the summed IoU of qualifying pairs.
///
/// Pairs below the cutoff cost nothing, so the solver never trades a
/// qualifying pair for one that would be demoted afterwards.
pub fn bipartite_match<T: Scalar>(
    memory: &[PseudoBox<T>],
    proxy: &[PseudoBox<T>],
) -> MatchResult<T> {
    let iou = pairwise_iou_matrix(&boxes(memory), &boxes(proxy));
    let cutoff = T::lit(MATCH_IOU);
    let gated = |r: usize, c: usize| {
        let a = iou.get(r, c);
        if a >= cutoff {
            -a
        } else {
            T::zero()
        }
    };
    let matched = min_cost_assignment(memory.len(), proxy.len(), gated)
        .into_iter()
        .filter(|&(r, c)| iou.get(r, c) >= cutoff)
        .map(|(r, c)| MatchPair {
            memory: r,
            proxy: c,
            iou: iou.get(r, c),
        })
        .collect();
    MatchResult::from_pairs(memory.len(), proxy.len(), matched)
}

/// Greedy NMS at the match cutoff over the union of both pools.
///
/// The union lists proxy labels first so that score ties resolve to the
/// newer box. A survivor is paired with the highest-IoU box it suppressed
/// from the other pool; further cross-pool victims are left unmatched and
/// same-pool victims are removed.
pub fn nms_match<T: Scalar>(memory: &[PseudoBox<T>], proxy: &[PseudoBox<T>]) -> MatchResult<T> {
    let np = proxy.len();
    let all: Vec<PseudoBox<T>> = proxy.iter().chain(memory.iter()).copied().collect();
    let scores: Vec<T> = all.iter().map(|e| e.u).collect();
    let outcome = greedy_suppress(&boxes(&all), &scores, T::lit(MATCH_IOU));
    let is_proxy = |i: usize| i < np;

    let mut result = MatchResult::default();
    let mut victims: Vec<Vec<(usize, T)>> = vec![Vec::new(); all.len()];
    for (i, s) in outcome.suppressed_by.iter().enumerate() {
        if let Some((keeper, iou)) = *s {
            victims[keeper].push((i, iou));
        }
    }
    let mut matched_survivor = vec![false; all.len()];
    for &k in &outcome.kept {
        let mut cross: Vec<(usize, T)> = victims[k]
            .iter()
            .copied()
            .filter(|&(i, _)| is_proxy(i) != is_proxy(k))
            .collect();
        cross.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        for (rank, &(i, iou)) in cross.iter().enumerate() {
            if rank == 0 {
                matched_survivor[k] = true;
                let (m, p) = if is_proxy(k) {
                    (i - np, k)
                } else {
                    (k - np, i)
                };
                result.matched.push(MatchPair {
                    memory: m,
                    proxy: p,
                    iou,
                });
            } else if is_proxy(i) {
                result.unmatched_proxy.push(i);
            } else {
                result.unmatched_memory.push(i - np);
            }
        }
        for &(i, _) in victims[k]
            .iter()
            .filter(|&&(i, _)| is_proxy(i) == is_proxy(k))
        {
            if is_proxy(i) {
                result.removed_proxy.push(i);
            } else {
                result.removed_memory.push(i - np);
            }
        }
        if !matched_survivor[k] {
            if is_proxy(k) {
                result.unmatched_proxy.push(k);
            } else {
                result.unmatched_memory.push(k - np);
            }
        }
    }
    result.matched.sort_by_key(|p| p.memory);
    for v in [
        &mut result.unmatched_memory,
        &mut result.unmatched_proxy,
        &mut result.removed_memory,
        &mut result.removed_proxy,
    ] {
        v.sort_unstable();
    }
    result
}

/// Dispatches on `variant`.
pub fn match_entries<T: Scalar>(
    variant: EnsembleVariant,
    memory: &[PseudoBox<T>],
    proxy: &[PseudoBox<T>],
) -> MatchResult<T> {
    match variant {
        EnsembleVariant::Consistency => consistency_match(memory, proxy),
        EnsembleVariant::Nms => nms_match(memory, proxy),
        EnsembleVariant::Bipartite => bipartite_match(memory, proxy),
    }
}
