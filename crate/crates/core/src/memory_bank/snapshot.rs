//! Versioned JSON snapshots of a memory bank.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EnsembleVariant, MemoryBank, MergeStrategy, SceneMemory, VotingThresholds};
use crate::error::{Error, Result};
use crate::geometry::Box3;
use crate::io::write_atomic;
use crate::pseudo_label::{BoxState, PseudoBox};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryDoc<T> {
    cx: T,
    cy: T,
    cz: T,
    l: T,
    w: T,
    h: T,
    yaw: T,
    u: T,
    state: BoxState,
    cnt: u32,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneDoc<T> {
    id: String,
    round: u32,
    entries: Vec<EntryDoc<T>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SnapshotDoc<T> {
    format_version: u32,
    round: u32,
    voting_thresholds: VotingThresholds,
    variant: EnsembleVariant,
    #[serde(default)]
    merge: MergeStrategy,
    scenes: Vec<SceneDoc<T>>,
}

/// Serializes a bank; scenes appear in id order.
pub fn render_snapshot<T: Scalar>(bank: &MemoryBank<T>) -> String {
    let doc = SnapshotDoc {
        format_version: FORMAT_VERSION,
        round: bank.round,
        voting_thresholds: bank.voting,
        variant: bank.variant,
        merge: bank.merge,
        scenes: bank
            .scenes
            .values()
            .map(|s| SceneDoc {
                id: s.scene_id.clone(),
                round: s.round,
                entries: s
                    .entries
                    .iter()
                    .map(|e| {
                        let [cx, cy, cz, l, w, h, yaw] = e.bbox.to_array();
                        EntryDoc {
                            cx,
                            cy,
                            cz,
                            l,
                            w,
                            h,
                            yaw,
                            u: e.u,
                            state: e.state,
                            cnt: e.cnt,
                        }
                    })
                    .collect(),
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("snapshot serializes");
    text.push('\n');
    text
}

/// Parses and validates a snapshot document.
pub fn parse_snapshot<T: Scalar>(text: &str) -> Result<MemoryBank<T>> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    match value.get("format_version") {
        Some(v) if v.as_u64() == Some(FORMAT_VERSION as u64) => {}
        Some(v) => {
            return Err(Error::Version {
                found: v.to_string(),
                expected: FORMAT_VERSION,
            })
        }
        None => {
            return Err(Error::Version {
                found: "<missing>".into(),
                expected: FORMAT_VERSION,
            })
        }
    }
    let doc: SnapshotDoc<T> =
        serde_json::from_value(value).map_err(|e| Error::Malformed(e.to_string()))?;
    let mut scenes = BTreeMap::new();
    for s in doc.scenes {
        let entries = s
            .entries
            .into_iter()
            .map(|e| {
                let bbox = Box3::from_array([e.cx, e.cy, e.cz, e.l, e.w, e.h, e.yaw])?;
                PseudoBox::new(bbox, e.u, e.state, e.cnt)
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::Malformed(format!("scene {}: {e}", s.id)))?;
        let mem = SceneMemory {
            scene_id: s.id.clone(),
            round: s.round,
            entries,
        };
        if scenes.insert(s.id.clone(), mem).is_some() {
            return Err(Error::Malformed(format!("duplicate scene id {}", s.id)));
        }
    }
    let bank = MemoryBank {
        round: doc.round,
        voting: doc.voting_thresholds,
        variant: doc.variant,
        merge: doc.merge,
        scenes,
    };
    bank.validate()
        .map_err(|e| Error::Malformed(e.to_string()))?;
    Ok(bank)
}

pub fn save_snapshot<T: Scalar>(bank: &MemoryBank<T>, path: &Path) -> Result<()> {
    write_atomic(path, render_snapshot(bank).as_bytes())
}

pub fn load_snapshot<T: Scalar>(path: &Path) -> Result<MemoryBank<T>> {
    parse_snapshot(&std::fs::read_to_string(path)?)
}
