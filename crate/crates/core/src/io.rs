//! Line-oriented interchange formats and the document-level update API.
//!
//! * Scene files: JSON Lines, `{id, boxes: [{cx,cy,cz,l,w,h,yaw}], points: [[x,y,z], ...]}`.
//! * Detection files: JSON Lines, `{id, detections: [{cx,cy,cz,l,w,h,yaw,cls_score,iou_score}]}`.
//! * Snapshots: see [`crate::memory_bank::render_snapshot`].

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::augmentation::Scene;
use crate::error::{invalid, Error, Result};
use crate::geometry::{pairwise_iou_matrix_with, Box3, Detection, IouKind, Point3};
use crate::memory_bank::{parse_snapshot, render_snapshot, MemoryBank, UpdateOptions};
use crate::pseudo_label::{triplet_partition, TripletThresholds};

/// Writes to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let file_name = path
        .file_name()
        .ok_or_else(|| invalid(format!("not a file path: {}", path.display())))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxRecord {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
}

impl BoxRecord {
    pub fn from_box(b: &Box3<f64>) -> Self {
        let [cx, cy, cz, l, w, h, yaw] = b.to_array();
        Self {
            cx,
            cy,
            cz,
            l,
            w,
            h,
            yaw,
        }
    }

    pub fn to_box(&self) -> Result<Box3<f64>> {
        if !(self.yaw > -std::f64::consts::PI && self.yaw <= std::f64::consts::PI) {
            return Err(invalid(format!("yaw {} outside (-pi, pi]", self.yaw)));
        }
        Box3::from_array([self.cx, self.cy, self.cz, self.l, self.w, self.h, self.yaw])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub id: String,
    pub boxes: Vec<BoxRecord>,
    #[serde(default)]
    pub points: Vec<[f64; 3]>,
}

impl SceneRecord {
    pub fn from_scene(s: &Scene<f64>) -> Self {
        Self {
            id: s.id.clone(),
            boxes: s.boxes.iter().map(BoxRecord::from_box).collect(),
            points: s.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
        }
    }

    pub fn to_scene(&self) -> Result<Scene<f64>> {
        let boxes = self
            .boxes
            .iter()
            .map(BoxRecord::to_box)
            .collect::<Result<Vec<_>>>()?;
        let points = self
            .points
            .iter()
            .map(|p| Point3::new(p[0], p[1], p[2]))
            .collect();
        Scene::new(self.id.clone(), points, boxes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub cx: f64,
    pub cy: f64,
    pub cz: f64,
    pub l: f64,
    pub w: f64,
    pub h: f64,
    pub yaw: f64,
    pub cls_score: f64,
    pub iou_score: f64,
}

impl DetectionRecord {
    pub fn from_detection(d: &Detection<f64>) -> Self {
        let b = BoxRecord::from_box(&d.bbox);
        Self {
            cx: b.cx,
            cy: b.cy,
            cz: b.cz,
            l: b.l,
            w: b.w,
            h: b.h,
            yaw: b.yaw,
            cls_score: d.cls_score,
            iou_score: d.iou_score,
        }
    }

    pub fn to_detection(&self) -> Result<Detection<f64>> {
        let b = BoxRecord {
            cx: self.cx,
            cy: self.cy,
            cz: self.cz,
            l: self.l,
            w: self.w,
            h: self.h,
            yaw: self.yaw,
        }
        .to_box()?;
        Detection::new(b, self.cls_score, self.iou_score)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionSetRecord {
    pub id: String,
    pub detections: Vec<DetectionRecord>,
}

impl DetectionSetRecord {
    pub fn to_detections(&self) -> Result<Vec<Detection<f64>>> {
        self.detections
            .iter()
            .map(DetectionRecord::to_detection)
            .collect()
    }
}

/// Parses JSON Lines, skipping blank lines. Errors carry the 1-based line.
pub fn parse_jsonl<R: for<'de> Deserialize<'de>>(text: &str) -> Result<Vec<R>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Malformed(format!("line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn render_jsonl<R: Serialize>(records: &[R]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("record serializes"));
        out.push('\n');
    }
    out
}

pub fn read_scenes(path: &Path) -> Result<Vec<Scene<f64>>> {
    let records: Vec<SceneRecord> = parse_jsonl(&std::fs::read_to_string(path)?)?;
    records
        .iter()
        .map(|r| {
            r.to_scene()
                .map_err(|e| Error::Malformed(format!("scene {}: {e}", r.id)))
        })
        .collect()
}

pub fn write_scenes(path: &Path, scenes: &[Scene<f64>]) -> Result<()> {
    let records: Vec<SceneRecord> = scenes.iter().map(SceneRecord::from_scene).collect();
    write_atomic(path, render_jsonl(&records).as_bytes())
}

pub fn read_detections(path: &Path) -> Result<Vec<(String, Vec<Detection<f64>>)>> {
    parse_detections(&std::fs::read_to_string(path)?)
}

pub fn parse_detections(text: &str) -> Result<Vec<(String, Vec<Detection<f64>>)>> {
    let records: Vec<DetectionSetRecord> = parse_jsonl(text)?;
    records
        .iter()
        .map(|r| {
            let dets = r
                .to_detections()
                .map_err(|e| Error::Malformed(format!("scene {}: {e}", r.id)))?;
            Ok((r.id.clone(), dets))
        })
        .collect()
}

/// Options of a document-level memory update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UpdateDocOptions {
    pub variant: crate::memory_bank::EnsembleVariant,
    pub merge: crate::memory_bank::MergeStrategy,
    pub t_neg: f64,
    pub t_pos: f64,
    pub t_ign: u32,
    pub t_rm: u32,
}

impl Default for UpdateDocOptions {
    fn default() -> Self {
        let t = TripletThresholds::<f64>::default();
        let v = crate::memory_bank::VotingThresholds::default();
        Self {
            variant: Default::default(),
            merge: Default::default(),
            t_neg: t.t_neg,
            t_pos: t.t_pos,
            t_ign: v.t_ign,
            t_rm: v.t_rm,
        }
    }
}

/// Failure of a document-level call, tagged with a stable code.
#[derive(Debug, thiserror::Error)]
#[error("{code}: {source}")]
pub struct DocError {
    pub code: &'static str,
    #[source]
    pub source: Error,
}

/// Per-scene tallies produced by [`update_bank`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SceneUpdateCounts {
    pub id: String,
    pub detections: usize,
    pub positive: usize,
    pub ignored: usize,
}

/// Partitions each detection set and folds it into `bank`. Unknown scene
/// ids start from an empty memory.
pub fn update_bank(
    bank: &mut MemoryBank<f64>,
    detections: &[(String, Vec<Detection<f64>>)],
    thresholds: &TripletThresholds<f64>,
) -> Result<Vec<SceneUpdateCounts>> {
    thresholds.validate()?;
    let mut counts = Vec::with_capacity(detections.len());
    for (id, dets) in detections {
        let proxy = triplet_partition(dets, thresholds);
        let mem = bank.update_scene(id, &proxy)?;
        let positive = mem.positives().count();
        counts.push(SceneUpdateCounts {
            id: id.clone(),
            detections: dets.len(),
            positive,
            ignored: mem.entries.len() - positive,
        });
    }
    Ok(counts)
}

/// Snapshot text + detection text + options JSON -> new snapshot text.
/// An empty snapshot document starts a fresh bank with the given options.
pub fn update_memory_documents(
    snapshot_doc: &str,
    detections_doc: &str,
    options_doc: &str,
) -> std::result::Result<String, DocError> {
    let opts: UpdateDocOptions = if options_doc.trim().is_empty() {
        UpdateDocOptions::default()
    } else {
        serde_json::from_str(options_doc).map_err(|e| DocError {
            code: "bad_options",
            source: Error::Malformed(e.to_string()),
        })?
    };
    update_documents(snapshot_doc, detections_doc, &opts).map(|(doc, _)| doc)
}

/// [`update_memory_documents`] with parsed options, also returning the
/// per-scene tallies.
pub fn update_documents(
    snapshot_doc: &str,
    detections_doc: &str,
    opts: &UpdateDocOptions,
) -> std::result::Result<(String, Vec<SceneUpdateCounts>), DocError> {
    let thresholds = TripletThresholds::new(opts.t_neg, opts.t_pos).map_err(|e| DocError {
        code: "bad_options",
        source: e,
    })?;
    let voting =
        crate::memory_bank::VotingThresholds::new(opts.t_ign, opts.t_rm).map_err(|e| DocError {
            code: "bad_options",
            source: e,
        })?;
    let update = UpdateOptions {
        variant: opts.variant,
        merge: opts.merge,
        voting,
    };
    let mut bank = if snapshot_doc.trim().is_empty() {
        MemoryBank::new(update)
    } else {
        let mut b = parse_snapshot(snapshot_doc).map_err(|e| DocError {
            code: "bad_snapshot",
            source: e,
        })?;
        b.variant = update.variant;
        b.merge = update.merge;
        b.voting = update.voting;
        b
    };
    let dets = parse_detections(detections_doc).map_err(|e| DocError {
        code: "bad_detections",
        source: e,
    })?;
    let counts = update_bank(&mut bank, &dets, &thresholds).map_err(|e| DocError {
        code: "update_failed",
        source: e,
    })?;
    Ok((render_snapshot(&bank), counts))
}

/// Row-major `|a| x |b|` IoU matrix over flat `(cx,cy,cz,l,w,h,yaw)` arrays.
pub fn batch_iou(a: &[f64], b: &[f64], kind: IouKind) -> Result<Vec<f64>> {
    let parse = |flat: &[f64], name: &str| -> Result<Vec<Box3<f64>>> {
        if !flat.len().is_multiple_of(7) {
            return Err(invalid(format!(
                "{name}: length {} is not a multiple of 7",
                flat.len()
            )));
        }
        flat.chunks_exact(7)
            .map(|c| Box3::from_array([c[0], c[1], c[2], c[3], c[4], c[5], c[6]]))
            .collect()
    };
    let (a, b) = (parse(a, "a")?, parse(b, "b")?);
    Ok(pairwise_iou_matrix_with(&a, &b, kind).as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;

    const DETS: &str = r#"{"id":"s0","detections":[{"cx":0,"cy":0,"cz":0.75,"l":4,"w":2,"h":1.5,"yaw":0.1,"cls_score":0.9,"iou_score":0.8},{"cx":10,"cy":0,"cz":0.75,"l":4,"w":2,"h":1.5,"yaw":0,"cls_score":0.9,"iou_score":0.3}]}
{"id":"s1","detections":[]}
"#;

    #[test]
    fn document_update_bootstraps_and_is_fixed_point() {
        let first = update_memory_documents("", DETS, "").unwrap();
        let bank: MemoryBank<f64> = parse_snapshot(&first).unwrap();
        assert_eq!(bank.scenes["s0"].entries.len(), 2);
        let second = update_memory_documents(&first, DETS, "").unwrap();
        let bank2: MemoryBank<f64> = parse_snapshot(&second).unwrap();
        let geo = |b: &MemoryBank<f64>| -> Vec<_> {
            b.scenes["s0"].entries.iter().map(|e| e.bbox).collect()
        };
        assert_eq!(geo(&bank), geo(&bank2));
        assert!(bank2.scenes["s0"].entries.iter().all(|e| e.cnt == 0));
    }

    #[test]
    fn document_errors_carry_codes() {
        assert_eq!(
            update_memory_documents("", DETS, "{bad").unwrap_err().code,
            "bad_options"
        );
        assert_eq!(
            update_memory_documents("", DETS, r#"{"t_neg":0.7,"t_pos":0.6}"#)
                .unwrap_err()
                .code,
            "bad_options"
        );
        assert_eq!(
            update_memory_documents("{}", DETS, "").unwrap_err().code,
            "bad_snapshot"
        );
        assert_eq!(
            update_memory_documents("", "{", "").unwrap_err().code,
            "bad_detections"
        );
    }

    #[test]
    fn flat_iou_shapes() {
        let one = [0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0];
        assert_eq!(batch_iou(&one, &one, IouKind::ThreeD).unwrap(), vec![1.0]);
        assert!(batch_iou(&[], &one, IouKind::Bev).unwrap().is_empty());
        assert!(batch_iou(&one[..6], &one, IouKind::Bev).is_err());
    }

    #[test]
    fn jsonl_reports_line_numbers() {
        let err = parse_detections("{\"id\":\"a\",\"detections\":[]}\n\nnope\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
