//! The alternating label/retrain loop.

use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::detector::{apply_feedback_with_gain, simulate_detector, DetectorModel};
use super::scenes::{generate_scenes, SceneGenConfig};
use super::{stream, stream_rng};
use crate::augmentation::{CdaSchedule, Scene};
use crate::error::{invalid, Error, Result};
use crate::geometry::Detection;
use crate::memory_bank::{
    EnsembleVariant, MemoryBank, MergeStrategy, SceneMemory, UpdateOptions, VotingThresholds,
};
use crate::metrics::{
    ap_recall_positions, pseudo_label_quality, quality_report, EvalConfig, QualityReport, ScoredBox,
};
use crate::pseudo_label::{triplet_partition, ProxyLabel, TripletThresholds};

/// Which pseudo-label policy the loop runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pipeline {
    /// Labels replaced wholesale each round by detections with `u >= t_pos`.
    NaiveSt,
    /// Triplet partition fused into the memory bank.
    #[default]
    Mev,
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive_st" => Ok(Self::NaiveSt),
            "mev" => Ok(Self::Mev),
            other => Err(invalid(format!(
                "unknown pipeline {other:?} (expected naive_st or mev)"
            ))),
        }
    }
}

/// Curriculum hook: with CDA on, the feedback gain at stage `s` is
/// `min(1, beta * alpha^(s-1))`, so later stages let retraining close more
/// of the gap to the detector floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdaConfig {
    pub enabled: bool,
    pub schedule: CdaSchedule,
}

impl Default for CdaConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            schedule: CdaSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub scene_gen: SceneGenConfig,
    pub detector: DetectorModel,
    pub pipeline: Pipeline,
    pub ensemble: EnsembleVariant,
    pub merge: MergeStrategy,
    pub triplet: TripletThresholds<f64>,
    pub voting: VotingThresholds,
    pub rounds: u32,
    /// Training epochs between two pseudo-label updates.
    pub update_period: u32,
    pub cda: CdaConfig,
    pub eval: EvalConfig,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scene_gen: SceneGenConfig::default(),
            detector: DetectorModel::default(),
            pipeline: Pipeline::default(),
            ensemble: EnsembleVariant::default(),
            merge: MergeStrategy::default(),
            triplet: TripletThresholds::default(),
            voting: VotingThresholds::default(),
            rounds: 15,
            update_period: 2,
            cda: CdaConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(invalid("rounds must be at least 1"));
        }
        if self.update_period == 0 {
            return Err(invalid("update_period must be at least 1"));
        }
        self.scene_gen.validate()?;
        self.detector.validate()?;
        self.triplet.validate()?;
        self.voting.validate()?;
        self.cda.schedule.validate()?;
        self.eval.validate()
    }

    pub fn update_options(&self) -> UpdateOptions {
        UpdateOptions {
            variant: self.ensemble,
            merge: self.merge,
            voting: self.voting,
        }
    }

    /// Training epoch at which round `k` (1-based) is labelled, clamped to
    /// the schedule's last epoch.
    pub fn epoch_of_round(&self, k: u32) -> u32 {
        let last = self.cda.schedule.total_epochs.saturating_sub(1);
        (k.saturating_sub(1).saturating_mul(self.update_period)).min(last)
    }

    fn feedback_gain(&self, stage: u32) -> f64 {
        let beta = self.detector.feedback_gain;
        if self.cda.enabled {
            (beta * self.cda.schedule.alpha.powi(stage as i32 - 1)).min(1.0)
        } else {
            beta
        }
    }
}

/// Everything that carries over from one round to the next.
#[derive(Debug, Clone, PartialEq)]
pub struct RunState {
    /// Last completed round; 0 before the first.
    pub round: u32,
    pub bank: MemoryBank<f64>,
    pub model: DetectorModel,
    /// Target scenes with their hidden ground truth.
    pub scenes: Vec<Scene<f64>>,
}

impl RunState {
    pub fn init(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let scenes = generate_scenes(&cfg.scene_gen, cfg.seed)?;
        let model = DetectorModel {
            current: cfg.detector.base,
            seed: cfg.seed,
            ..cfg.detector.clone()
        };
        Ok(Self {
            round: 0,
            bank: MemoryBank::new(cfg.update_options()),
            model,
            scenes,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub round: u32,
    pub epoch: u32,
    pub stage: u32,
    pub feedback_gain: f64,
    /// Effective detection rate and FP rate after jitter.
    pub p_det: f64,
    pub fp_rate: f64,
    pub detections: usize,
    pub positive_count: usize,
    pub ignored_count: usize,
    /// Positive pseudo labels against ground truth.
    pub pseudo: QualityReport<f64>,
    /// Raw detector output against ground truth.
    pub detection: QualityReport<f64>,
    pub pseudo_ap: f64,
    pub detection_ap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub pipeline: Pipeline,
    pub seed: u64,
    pub rounds: u32,
    pub final_f1: f64,
    pub final_pseudo_ap: f64,
    pub final_detection_ap: f64,
    pub positive_counts: Vec<usize>,
    /// Population variance of `positive_counts`.
    pub positive_count_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rounds: Vec<RoundReport>,
    pub summary: Summary,
    pub state: RunState,
}

fn scored(dets: &[Detection<f64>]) -> Vec<ScoredBox<f64>> {
    dets.iter()
        .map(|d| ScoredBox {
            bbox: d.bbox,
            score: d.iou_score,
        })
        .collect()
}

fn ap_or_zero(
    preds: &[Vec<ScoredBox<f64>>],
    gts: &[Vec<crate::geometry::Box3<f64>>],
    cfg: &EvalConfig,
) -> Result<f64> {
    match ap_recall_positions(preds, gts, cfg) {
        Err(Error::Undefined(_)) => Ok(0.0),
        other => other,
    }
}

/// Labels every scene once, updates the bank, scores the labels and feeds
/// the F1 back into the detector.
pub fn self_training_round(
    state: RunState,
    cfg: &ExperimentConfig,
) -> Result<(RunState, RoundReport)> {
    let k = state.round + 1;
    let epoch = cfg.epoch_of_round(k);
    let stage = cfg.cda.schedule.stage_of_epoch(epoch)?;
    let gain = cfg.feedback_gain(stage);
    let (p_det, fp_rate) = state.model.jittered(k);

    let dets: Vec<Vec<Detection<f64>>> = state
        .scenes
        .par_iter()
        .enumerate()
        .map(|(i, scene)| {
            let mut rng = stream_rng(cfg.seed, &[stream::DETECTOR, k as u64, i as u64]);
            simulate_detector(scene, &state.model, k, &mut rng)
        })
        .collect::<Result<_>>()?;

    let RunState {
        mut bank,
        model,
        scenes,
        ..
    } = state;
    let proxies: Vec<Vec<ProxyLabel<f64>>> = match cfg.pipeline {
        Pipeline::Mev => dets
            .iter()
            .map(|d| triplet_partition(d, &cfg.triplet))
            .collect(),
        Pipeline::NaiveSt => {
            let binary = TripletThresholds {
                t_neg: cfg.triplet.t_pos,
                t_pos: cfg.triplet.t_pos,
            };
            dets.iter().map(|d| triplet_partition(d, &binary)).collect()
        }
    };
    match cfg.pipeline {
        Pipeline::Mev => {
            for (scene, proxy) in scenes.iter().zip(&proxies) {
                bank.update_scene(&scene.id, proxy)?;
            }
        }
        Pipeline::NaiveSt => {
            for (scene, proxy) in scenes.iter().zip(proxies) {
                let memory = SceneMemory {
                    scene_id: scene.id.clone(),
                    round: k,
                    entries: proxy,
                };
                bank.scenes.insert(scene.id.clone(), memory);
            }
            bank.round = k;
        }
    }
    bank.validate()?;

    let gts: Vec<Vec<_>> = scenes.iter().map(|s| s.boxes.clone()).collect();
    let labels: Vec<&[ProxyLabel<f64>]> = scenes
        .iter()
        .map(|s| bank.scene(&s.id).map_or(&[][..], |m| m.entries.as_slice()))
        .collect();
    let pseudo = pseudo_label_quality(
        labels.iter().copied().zip(gts.iter().map(Vec::as_slice)),
        &cfg.eval,
    );
    let det_scored: Vec<Vec<ScoredBox<f64>>> = dets.iter().map(|d| scored(d)).collect();
    let detection = quality_report(
        det_scored
            .iter()
            .map(Vec::as_slice)
            .zip(gts.iter().map(Vec::as_slice)),
        &cfg.eval,
    );
    let pseudo_scored: Vec<Vec<ScoredBox<f64>>> = labels
        .iter()
        .map(|entries| {
            entries
                .iter()
                .filter(|e| e.is_positive())
                .map(|e| ScoredBox {
                    bbox: e.bbox,
                    score: e.u,
                })
                .collect()
        })
        .collect();
    let pseudo_ap = ap_or_zero(&pseudo_scored, &gts, &cfg.eval)?;
    let detection_ap = ap_or_zero(&det_scored, &gts, &cfg.eval)?;
    let positive_count = bank.positive_count();
    let ignored_count =
        bank.scenes.values().map(|s| s.entries.len()).sum::<usize>() - positive_count;

    let model = apply_feedback_with_gain(&model, pseudo.f1, gain)?;
    let report = RoundReport {
        round: k,
        epoch,
        stage,
        feedback_gain: gain,
        p_det,
        fp_rate,
        detections: dets.iter().map(Vec::len).sum(),
        positive_count,
        ignored_count,
        pseudo,
        detection,
        pseudo_ap,
        detection_ap,
    };
    let next = RunState {
        round: k,
        bank,
        model,
        scenes,
    };
    Ok((next, report))
}

fn population_variance(xs: &[usize]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n;
    xs.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / n
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let mut state = RunState::init(cfg)?;
    let mut rounds = Vec::with_capacity(cfg.rounds as usize);
    for _ in 0..cfg.rounds {
        let (next, report) = self_training_round(state, cfg)?;
        log::debug!(
            "round {} stage {} f1 {:.4} positives {}",
            report.round,
            report.stage,
            report.pseudo.f1,
            report.positive_count
        );
        state = next;
        rounds.push(report);
    }
    let last = rounds.last().expect("rounds >= 1");
    let positive_counts: Vec<usize> = rounds.iter().map(|r| r.positive_count).collect();
    let summary = Summary {
        pipeline: cfg.pipeline,
        seed: cfg.seed,
        rounds: cfg.rounds,
        final_f1: last.pseudo.f1,
        final_pseudo_ap: last.pseudo_ap,
        final_detection_ap: last.detection_ap,
        positive_count_variance: population_variance(&positive_counts),
        positive_counts,
    };
    Ok(ExperimentReport {
        rounds,
        summary,
        state,
    })
}
