//! Quality-aware memory bank with ensemble matching and unmatched-box voting.
//!
//! One update round takes the previous memory of a scene and the newly
//! partitioned proxy labels, then:
//!
//! 1. matches the two sets (consistency, NMS or bipartite ensemble);
//! 2. merges every matched pair, keeping the entry with the higher score
//!    and resetting its counter;
//! 3. votes on the rest: new boxes start at `cnt = 0`, stale memory boxes
//!    get `cnt + 1`, and the counter decides between cache, ignore and
//!    discard.

mod assignment;
mod matching;
mod snapshot;

pub use assignment::min_cost_assignment;
pub use matching::{
    bipartite_match, consistency_match, match_entries, nms_match, EnsembleVariant, MatchPair,
    MatchResult, MATCH_IOU,
};
pub use snapshot::{load_snapshot, parse_snapshot, render_snapshot, save_snapshot, FORMAT_VERSION};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{Box3, Dims, Point3};
use crate::pseudo_label::{BoxState, PseudoBox};
use crate::scalar::Scalar;

/// Counter thresholds for unmatched boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VotingThresholds {
    pub t_ign: u32,
    pub t_rm: u32,
}

impl Default for VotingThresholds {
    fn default() -> Self {
        Self { t_ign: 2, t_rm: 3 }
    }
}

impl VotingThresholds {
    pub fn new(t_ign: u32, t_rm: u32) -> Result<Self> {
        let t = Self { t_ign, t_rm };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0 < self.t_ign && self.t_ign <= self.t_rm) {
            return Err(invalid(format!(
                "voting thresholds need 0 < t_ign <= t_rm, got ({}, {})",
                self.t_ign, self.t_rm
            )));
        }
        Ok(())
    }
}

/// How matched pairs collapse into one box.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MergeStrategy {
    /// Keep the higher-scoring entry whole.
    #[default]
    Max,
    /// Score-weighted average of the two geometries (ablation only).
    Avg,
}

impl std::str::FromStr for MergeStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(Self::Max),
            "avg" | "average" => Ok(Self::Avg),
            other => Err(format!("unknown merge strategy {other:?}")),
        }
    }
}

/// Pseudo labels of one scene after `round` updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneMemory<T> {
    pub scene_id: String,
    pub round: u32,
    pub entries: Vec<PseudoBox<T>>,
}

impl<T: Scalar> SceneMemory<T> {
    pub fn empty(scene_id: impl Into<String>) -> Self {
        Self {
            scene_id: scene_id.into(),
            round: 0,
            entries: Vec::new(),
        }
    }

    pub fn positives(&self) -> impl Iterator<Item = &PseudoBox<T>> {
        self.entries.iter().filter(|e| e.is_positive())
    }

    pub fn validate(&self, t: &VotingThresholds) -> Result<()> {
        if self.round == 0 && !self.entries.is_empty() {
            return Err(invalid(format!(
                "scene {}: round 0 memory must be empty",
                self.scene_id
            )));
        }
        for e in &self.entries {
            if e.cnt >= t.t_rm {
                return Err(invalid(format!(
                    "scene {}: entry with cnt {} >= t_rm {}",
                    self.scene_id, e.cnt, t.t_rm
                )));
            }
            if !(e.u >= T::zero() && e.u <= T::one()) {
                return Err(invalid(format!(
                    "scene {}: score {} outside [0, 1]",
                    self.scene_id, e.u
                )));
            }
        }
        Ok(())
    }
}

/// Keeps whichever entry scores higher, ties to the proxy, with `cnt = 0`.
pub fn merge_matched<T: Scalar>(memory: &PseudoBox<T>, proxy: &PseudoBox<T>) -> PseudoBox<T> {
    let winner = if memory.u <= proxy.u { proxy } else { memory };
    PseudoBox { cnt: 0, ..*winner }
}

/// Score-weighted average of centers and sizes, circular mean of yaws.
pub fn weighted_avg_merge<T: Scalar>(memory: &PseudoBox<T>, proxy: &PseudoBox<T>) -> PseudoBox<T> {
    let (wm, wl) = if memory.u + proxy.u > T::zero() {
        (memory.u, proxy.u)
    } else {
        (T::one(), T::one())
    };
    let total = wm + wl;
    let avg = |a: T, b: T| (a * wm + b * wl) / total;
    let (a, b) = (memory.bbox, proxy.bbox);
    let (ca, cb) = (a.center(), b.center());
    let (sa, sb) = (a.size(), b.size());
    let (sin_a, cos_a) = a.yaw().sin_cos();
    let (sin_b, cos_b) = b.yaw().sin_cos();
    let yaw = (sin_a * wm + sin_b * wl).atan2(cos_a * wm + cos_b * wl);
    let bbox = Box3::new(
        Point3::new(avg(ca.x, cb.x), avg(ca.y, cb.y), avg(ca.z, cb.z)),
        Dims::new(avg(sa.l, sb.l), avg(sa.w, sb.w), avg(sa.h, sb.h)),
        yaw,
    )
    .expect("average of valid boxes is valid");
    let state = merge_matched(memory, proxy).state;
    PseudoBox {
        bbox,
        u: memory.u.max(proxy.u),
        state,
        cnt: 0,
    }
}

fn merge_pair<T: Scalar>(
    strategy: MergeStrategy,
    memory: &PseudoBox<T>,
    proxy: &PseudoBox<T>,
) -> PseudoBox<T> {
    match strategy {
        MergeStrategy::Max => merge_matched(memory, proxy),
        MergeStrategy::Avg => weighted_avg_merge(memory, proxy),
    }
}

/// Counter update and cache/ignore/discard decision for one unmatched
/// entry. Returns `None` when the entry is discarded.
pub fn vote<T: Scalar>(
    entry: &PseudoBox<T>,
    from_memory: bool,
    t: &VotingThresholds,
) -> Option<PseudoBox<T>> {
    let cnt = if from_memory { entry.cnt + 1 } else { 0 };
    if cnt >= t.t_rm {
        None
    } else if cnt >= t.t_ign {
        Some(PseudoBox {
            cnt,
            state: BoxState::Ignored,
            ..*entry
        })
    } else {
        Some(PseudoBox { cnt, ..*entry })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoteOutcome<T> {
    pub cached: Vec<PseudoBox<T>>,
    pub ignored: Vec<PseudoBox<T>>,
    pub discarded: usize,
}

/// Memory voting over all unmatched entries of a round.
pub fn memory_voting<T: Scalar>(
    unmatched_memory: &[PseudoBox<T>],
    unmatched_proxy: &[PseudoBox<T>],
    t: &VotingThresholds,
) -> VoteOutcome<T> {
    let mut out = VoteOutcome {
        cached: Vec::new(),
        ignored: Vec::new(),
        discarded: 0,
    };
    let flagged = unmatched_memory
        .iter()
        .map(|e| (e, true))
        .chain(unmatched_proxy.iter().map(|e| (e, false)));
    for (e, from_memory) in flagged {
        match vote(e, from_memory, t) {
            None => out.discarded += 1,
            Some(v) if v.cnt >= t.t_ign => out.ignored.push(v),
            Some(v) => out.cached.push(v),
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UpdateOptions {
    pub variant: EnsembleVariant,
    pub merge: MergeStrategy,
    pub voting: VotingThresholds,
}

/// One memory ensemble-and-voting round for a scene.
///
/// Output order: entries descending from memory in memory order (merged or
/// voted), then new proxy boxes in proxy order.
pub fn update_memory<T: Scalar>(
    memory: &SceneMemory<T>,
    scene_id: &str,
    proxy: &[PseudoBox<T>],
    opts: &UpdateOptions,
) -> Result<SceneMemory<T>> {
    if memory.scene_id != scene_id {
        return Err(Error::SceneMismatch {
            memory: memory.scene_id.clone(),
            batch: scene_id.to_string(),
        });
    }
    opts.voting.validate()?;
    let result = match_entries(opts.variant, &memory.entries, proxy);

    let mut mem_slot: Vec<Option<PseudoBox<T>>> = vec![None; memory.entries.len()];
    for p in &result.matched {
        mem_slot[p.memory] = Some(merge_pair(
            opts.merge,
            &memory.entries[p.memory],
            &proxy[p.proxy],
        ));
    }
    for &i in &result.unmatched_memory {
        mem_slot[i] = vote(&memory.entries[i], true, &opts.voting);
    }
    let mut entries: Vec<PseudoBox<T>> = mem_slot.into_iter().flatten().collect();
    entries.extend(
        result
            .unmatched_proxy
            .iter()
            .filter_map(|&i| vote(&proxy[i], false, &opts.voting)),
    );
    Ok(SceneMemory {
        scene_id: memory.scene_id.clone(),
        round: memory.round + 1,
        entries,
    })
}

/// All scene memories plus the settings they were produced with.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryBank<T> {
    pub round: u32,
    pub voting: VotingThresholds,
    pub variant: EnsembleVariant,
    pub merge: MergeStrategy,
    pub scenes: BTreeMap<String, SceneMemory<T>>,
}

impl<T: Scalar> MemoryBank<T> {
    pub fn new(opts: UpdateOptions) -> Self {
        Self {
            round: 0,
            voting: opts.voting,
            variant: opts.variant,
            merge: opts.merge,
            scenes: BTreeMap::new(),
        }
    }

    pub fn options(&self) -> UpdateOptions {
        UpdateOptions {
            variant: self.variant,
            merge: self.merge,
            voting: self.voting,
        }
    }

    pub fn scene(&self, id: &str) -> Option<&SceneMemory<T>> {
        self.scenes.get(id)
    }

    /// Updates one scene, creating an empty memory for unseen ids.
    pub fn update_scene(
        &mut self,
        scene_id: &str,
        proxy: &[PseudoBox<T>],
    ) -> Result<&SceneMemory<T>> {
        let opts = self.options();
        let prev = self
            .scenes
            .remove(scene_id)
            .unwrap_or_else(|| SceneMemory::empty(scene_id));
        let next = update_memory(&prev, scene_id, proxy, &opts)?;
        self.round = self.round.max(next.round);
        self.scenes.insert(scene_id.to_string(), next);
        Ok(&self.scenes[scene_id])
    }

    pub fn validate(&self) -> Result<()> {
        self.voting.validate()?;
        for (id, s) in &self.scenes {
            if id != &s.scene_id {
                return Err(invalid(format!("bank key {id} holds scene {}", s.scene_id)));
            }
            if s.round > self.round {
                return Err(invalid(format!(
                    "scene {id} is at round {} past bank round {}",
                    s.round, self.round
                )));
            }
            s.validate(&self.voting)?;
        }
        Ok(())
    }

    pub fn positive_count(&self) -> usize {
        self.scenes.values().map(|s| s.positives().count()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn entry(x: f64, u: f64, state: BoxState, cnt: u32) -> PseudoBox<f64> {
        let b = Box3::from_array([x, 0.0, 0.0, 4.0, 2.0, 1.5, 0.0]).unwrap();
        PseudoBox::new(b, u, state, cnt).unwrap()
    }

    #[test]
    fn merge_keeps_higher_score() {
        let m = entry(0.0, 0.5, BoxState::Positive, 1);
        let l = entry(0.2, 0.8, BoxState::Positive, 0);
        let r = merge_matched(&m, &l);
        assert_eq!((r.bbox, r.u, r.cnt), (l.bbox, 0.8, 0));

        let m = entry(0.0, 0.9, BoxState::Positive, 2);
        let l = entry(0.2, 0.4, BoxState::Ignored, 0);
        let r = merge_matched(&m, &l);
        assert_eq!(
            (r.bbox, r.u, r.state, r.cnt),
            (m.bbox, 0.9, BoxState::Positive, 0)
        );

        let m = entry(0.0, 0.6, BoxState::Positive, 0);
        let l = entry(0.2, 0.6, BoxState::Positive, 0);
        assert_eq!(merge_matched(&m, &l).bbox, l.bbox);
    }

    #[test]
    fn merge_promotes_ignored_memory() {
        let m = entry(0.0, 0.4, BoxState::Ignored, 1);
        let l = entry(0.1, 0.7, BoxState::Positive, 0);
        assert_eq!(merge_matched(&m, &l).state, BoxState::Positive);
    }

    #[test]
    fn weighted_average_cases() {
        let a = entry(0.0, 0.5, BoxState::Positive, 0);
        assert_eq!(weighted_avg_merge(&a, &a).bbox, a.bbox);

        let with_yaw = |yaw: f64| {
            let b = Box3::from_array([0.0, 0.0, 0.0, 4.0, 2.0, 1.5, yaw]).unwrap();
            PseudoBox::new(b, 0.7, BoxState::Positive, 0).unwrap()
        };
        let r = weighted_avg_merge(&with_yaw(0.0), &with_yaw(FRAC_PI_2));
        assert!((r.bbox.yaw() - FRAC_PI_4).abs() < 1e-12);
        let r = weighted_avg_merge(&with_yaw(PI - 0.05), &with_yaw(-PI + 0.05));
        assert!((r.bbox.yaw().abs() - PI).abs() < 1e-9);
        assert_eq!(r.cnt, 0);
    }

    #[test]
    fn voting_examples() {
        let t = VotingThresholds::default();
        let fresh = entry(0.0, 0.8, BoxState::Positive, 0);
        let v = memory_voting(&[], &[fresh], &t);
        assert_eq!(v.cached.len(), 1);
        assert_eq!(v.cached[0].cnt, 0);

        let once = entry(0.0, 0.8, BoxState::Positive, 1);
        let v = memory_voting(&[once], &[], &t);
        assert_eq!(v.ignored.len(), 1);
        assert_eq!(
            (v.ignored[0].cnt, v.ignored[0].state),
            (2, BoxState::Ignored)
        );

        let twice = entry(0.0, 0.8, BoxState::Ignored, 2);
        let v = memory_voting(&[twice], &[], &t);
        assert_eq!((v.cached.len(), v.ignored.len(), v.discarded), (0, 0, 1));

        let zero = entry(0.0, 0.8, BoxState::Positive, 0);
        let v = memory_voting(&[zero], &[], &t);
        assert_eq!(
            (v.cached[0].cnt, v.cached[0].state),
            (1, BoxState::Positive)
        );

        assert!(VotingThresholds::new(0, 3).is_err());
        assert!(VotingThresholds::new(4, 3).is_err());
    }

    #[test]
    fn update_bootstrap_and_mismatch() {
        let proxy = vec![
            entry(0.0, 0.8, BoxState::Positive, 0),
            entry(10.0, 0.4, BoxState::Ignored, 0),
        ];
        let m0 = SceneMemory::empty("a");
        let m1 = update_memory(&m0, "a", &proxy, &UpdateOptions::default()).unwrap();
        assert_eq!(m1.round, 1);
        assert_eq!(m1.entries, proxy);
        assert!(matches!(
            update_memory(&m0, "b", &proxy, &UpdateOptions::default()),
            Err(Error::SceneMismatch { .. })
        ));
    }

    #[test]
    fn box_dropped_after_three_misses() {
        let opts = UpdateOptions::default();
        let mut m = SceneMemory::empty("s");
        m = update_memory(&m, "s", &[entry(0.0, 0.9, BoxState::Positive, 0)], &opts).unwrap();
        let states: Vec<_> = (0..3)
            .map(|_| {
                m = update_memory(&m, "s", &[], &opts).unwrap();
                m.entries
                    .iter()
                    .map(|e| (e.cnt, e.state))
                    .collect::<Vec<_>>()
            })
            .collect();
        assert_eq!(states[0], vec![(1, BoxState::Positive)]);
        assert_eq!(states[1], vec![(2, BoxState::Ignored)]);
        assert!(states[2].is_empty());
    }

    #[test]
    fn single_miss_survives() {
        let opts = UpdateOptions::default();
        let seen = [entry(0.0, 0.9, BoxState::Positive, 0)];
        let mut m = SceneMemory::empty("s");
        for proxy in [&seen[..], &seen[..], &[], &seen[..], &seen[..]] {
            m = update_memory(&m, "s", proxy, &opts).unwrap();
            assert_eq!(m.entries.len(), 1);
        }
        assert_eq!(m.entries[0].cnt, 0);
    }

    #[test]
    fn bank_creates_scenes_and_validates() {
        let mut bank = MemoryBank::<f64>::new(UpdateOptions::default());
        bank.update_scene("x", &[entry(0.0, 0.9, BoxState::Positive, 0)])
            .unwrap();
        bank.update_scene("y", &[]).unwrap();
        assert_eq!(bank.round, 1);
        assert_eq!(bank.positive_count(), 1);
        bank.validate().unwrap();
        bank.scenes.get_mut("x").unwrap().entries[0].cnt = 3;
        assert!(bank.validate().is_err());
    }
}
