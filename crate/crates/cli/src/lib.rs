//! Command implementations behind the `pseudobox` binary.
//!
//! Exit codes: 0 on success, 1 when a computation fails, 2 when arguments
//! or input files cannot be read or parsed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use pseudobox::geometry::{iou_3d, iou_bev, Box3, IouKind};
use pseudobox::io::{
    read_detections, read_scenes, render_jsonl, update_documents, write_atomic, write_scenes,
    UpdateDocOptions,
};
use pseudobox::memory_bank::{load_snapshot, render_snapshot, EnsembleVariant, MergeStrategy};
use pseudobox::metrics::{
    ap_recall_positions, closed_gap, quality_report, EvalConfig, QualityReport, ScoredBox,
};
use pseudobox::sim::{run_experiment, ExperimentConfig, Pipeline};
use serde::Serialize;

/// Environment variable holding the log filter.
pub const LOG_ENV: &str = "PSEUDOBOX_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "pseudobox",
    version,
    about = "Pseudo-label engine for 3D box self-training"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a simulated self-training experiment.
    Simulate(SimulateArgs),
    /// Fold one round of detections into a memory snapshot.
    Update(UpdateArgs),
    /// Score predictions or a snapshot against ground-truth scenes.
    Eval(EvalArgs),
    /// Print BEV and 3D IoU of two boxes.
    Iou(IouArgs),
    /// Summarize a memory snapshot.
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Experiment configuration (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured pipeline (`mev` or `naive_st`).
    #[arg(long)]
    pub pipeline: Option<Pipeline>,
}

#[derive(Debug, Args)]
pub struct UpdateArgs {
    /// Detection file (JSON Lines).
    #[arg(long)]
    pub detections: PathBuf,
    /// Previous snapshot; omit to bootstrap an empty bank.
    #[arg(long)]
    pub snapshot_in: Option<PathBuf>,
    #[arg(long)]
    pub snapshot_out: PathBuf,
    #[arg(long, default_value = "consistency")]
    pub variant: EnsembleVariant,
    #[arg(long, default_value = "max")]
    pub merge: MergeStrategy,
    #[arg(long, default_value_t = 0.25)]
    pub t_neg: f64,
    #[arg(long, default_value_t = 0.6)]
    pub t_pos: f64,
    #[arg(long, default_value_t = 2)]
    pub t_ign: u32,
    #[arg(long, default_value_t = 3)]
    pub t_rm: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Bev,
    #[value(name = "3d")]
    ThreeD,
}

impl From<KindArg> for IouKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Bev => IouKind::Bev,
            KindArg::ThreeD => IouKind::ThreeD,
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Memory snapshot; its positive entries are scored by `u`.
    #[arg(
        long,
        conflicts_with = "predictions",
        required_unless_present = "predictions"
    )]
    pub snapshot: Option<PathBuf>,
    /// Detection file; detections are scored by `iou_score`.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Ground-truth scene file (JSON Lines).
    #[arg(long)]
    pub gt: PathBuf,
    #[arg(long, default_value_t = 0.7)]
    pub iou: f64,
    #[arg(long, value_enum, default_value = "3d")]
    pub kind: KindArg,
    /// Also report the closed gap for AP values `MODEL SOURCE ORACLE`.
    #[arg(long, num_args = 3, value_names = ["MODEL", "SOURCE", "ORACLE"], allow_negative_numbers = true)]
    pub closed_gap: Option<Vec<f64>>,
    /// Where to write the JSON summary.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct IouArgs {
    /// `cx,cy,cz,l,w,h,yaw`
    #[arg(long, allow_hyphen_values = true)]
    pub a: String,
    /// `cx,cy,cz,l,w,h,yaw`
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    pub snapshot: PathBuf,
}

/// A command failure with its exit-code class.
#[derive(Debug)]
pub enum Failure {
    /// Unreadable or malformed input; exit code 2.
    Input(anyhow::Error),
    /// Failure while computing; exit code 1.
    Runtime(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Input(e) | Failure::Runtime(e) => e,
        }
    }
}

type CmdResult = Result<String, Failure>;

fn input<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Input(e.into())
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(input)
}

fn pretty_json<S: Serialize>(v: &S) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime)?;
    s.push('\n');
    Ok(s)
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    write_atomic(path, text.as_bytes())
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

/// Runs a parsed command; on success returns the text for stdout.
pub fn execute(cmd: &Command) -> CmdResult {
    match cmd {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Update(a) => cmd_update(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Iou(a) => cmd_iou(a),
        Command::Inspect(a) => cmd_inspect(a),
    }
}

/// Parses `args`, runs the command and reports like the binary does.
pub fn run<I, S>(args: I) -> ExitCode
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code())
        }
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> CmdResult {
    let text = read_text(&a.config)?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", a.config.display()))
        .map_err(input)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(p) = a.pipeline {
        cfg.pipeline = p;
    }
    cfg.validate()
        .context("invalid configuration")
        .map_err(input)?;
    log::info!(
        "simulating {} scenes for {} rounds",
        cfg.scene_gen.n_scenes,
        cfg.rounds
    );
    let report = run_experiment(&cfg).map_err(runtime)?;

    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(runtime)?;
    write_file(&a.out.join("config.json"), &pretty_json(&cfg)?)?;
    write_file(&a.out.join("rounds.jsonl"), &render_jsonl(&report.rounds))?;
    write_file(&a.out.join("summary.json"), &pretty_json(&report.summary)?)?;
    write_file(
        &a.out.join("snapshot.json"),
        &render_snapshot(&report.state.bank),
    )?;
    write_scenes(&a.out.join("scenes.jsonl"), &report.state.scenes).map_err(runtime)?;

    let mut out = format!(
        "{:>5} {:>5} {:>7} {:>9} {:>7} {:>9} {:>7} {:>7} {:>9}\n",
        "round", "stage", "p_det", "positive", "ignored", "precision", "recall", "f1", "pseudo_ap"
    );
    for r in &report.rounds {
        let _ = writeln!(
            out,
            "{:>5} {:>5} {:>7.4} {:>9} {:>7} {:>9.4} {:>7.4} {:>7.4} {:>9.4}",
            r.round,
            r.stage,
            r.p_det,
            r.positive_count,
            r.ignored_count,
            r.pseudo.precision,
            r.pseudo.recall,
            r.pseudo.f1,
            r.pseudo_ap
        );
    }
    let _ = writeln!(
        out,
        "final f1 {:.4}, positive-count variance {:.2}",
        report.summary.final_f1, report.summary.positive_count_variance
    );
    Ok(out)
}

pub fn cmd_update(a: &UpdateArgs) -> CmdResult {
    let snapshot = match &a.snapshot_in {
        Some(p) => read_text(p)?,
        None => String::new(),
    };
    let detections = read_text(&a.detections)?;
    let opts = UpdateDocOptions {
        variant: a.variant,
        merge: a.merge,
        t_neg: a.t_neg,
        t_pos: a.t_pos,
        t_ign: a.t_ign,
        t_rm: a.t_rm,
    };
    let (doc, counts) = update_documents(&snapshot, &detections, &opts).map_err(|e| {
        if e.code == "update_failed" {
            runtime(e)
        } else {
            input(e)
        }
    })?;
    write_file(&a.snapshot_out, &doc)?;
    let mut out = format!(
        "{:<24} {:>10} {:>8} {:>8}\n",
        "scene", "detections", "positive", "ignored"
    );
    for c in &counts {
        let _ = writeln!(
            out,
            "{:<24} {:>10} {:>8} {:>8}",
            c.id, c.detections, c.positive, c.ignored
        );
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
struct EvalSummary {
    iou_threshold: f64,
    iou_kind: IouKind,
    scenes: usize,
    quality: QualityReport<f64>,
    ap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_gap: Option<f64>,
}

pub fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let cfg = EvalConfig {
        iou_threshold: a.iou,
        iou_kind: a.kind.into(),
        ..EvalConfig::default()
    };
    cfg.validate().map_err(input)?;
    let gt = read_scenes(&a.gt)
        .with_context(|| format!("reading {}", a.gt.display()))
        .map_err(input)?;
    if gt.iter().all(|s| s.boxes.is_empty()) {
        return Err(input(anyhow!(
            "{} holds no ground-truth boxes",
            a.gt.display()
        )));
    }

    let by_scene: Vec<(String, Vec<ScoredBox<f64>>)> = if let Some(path) = &a.snapshot {
        let bank = load_snapshot(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(input)?;
        bank.scenes
            .values()
            .map(|m| {
                let preds = m
                    .positives()
                    .map(|e| ScoredBox {
                        bbox: e.bbox,
                        score: e.u,
                    })
                    .collect();
                (m.scene_id.clone(), preds)
            })
            .collect()
    } else {
        let path = a.predictions.as_ref().expect("clap requires one input");
        read_detections(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(input)?
            .into_iter()
            .map(|(id, dets)| {
                let preds = dets
                    .iter()
                    .map(|d| ScoredBox {
                        bbox: d.bbox,
                        score: d.iou_score,
                    })
                    .collect();
                (id, preds)
            })
            .collect()
    };
    for (id, _) in &by_scene {
        if !gt.iter().any(|s| &s.id == id) {
            return Err(input(anyhow!(
                "scene {id} has predictions but no ground truth"
            )));
        }
    }
    let preds: Vec<Vec<ScoredBox<f64>>> = gt
        .iter()
        .map(|s| {
            by_scene
                .iter()
                .filter(|(id, _)| id == &s.id)
                .flat_map(|(_, p)| p.iter().copied())
                .collect()
        })
        .collect();
    let gts: Vec<Vec<Box3<f64>>> = gt.iter().map(|s| s.boxes.clone()).collect();

    let quality = quality_report(
        preds
            .iter()
            .map(Vec::as_slice)
            .zip(gts.iter().map(Vec::as_slice)),
        &cfg,
    );
    let ap = ap_recall_positions(&preds, &gts, &cfg).map_err(runtime)?;
    let gap = match &a.closed_gap {
        Some(v) => Some(closed_gap(v[0], v[1], v[2]).map_err(input)?),
        None => None,
    };
    let summary = EvalSummary {
        iou_threshold: cfg.iou_threshold,
        iou_kind: cfg.iou_kind,
        scenes: gt.len(),
        quality,
        ap,
        closed_gap: gap,
    };
    if let Some(path) = &a.out {
        write_file(path, &pretty_json(&summary)?)?;
    }

    let q = &summary.quality;
    let mut out = String::new();
    let rows: [(&str, String); 10] = [
        ("tp", q.tp_count.to_string()),
        ("fp", q.fp_count.to_string()),
        ("fn", q.fn_count.to_string()),
        ("precision", format!("{:.4}", q.precision)),
        ("recall", format!("{:.4}", q.recall)),
        ("f1", format!("{:.4}", q.f1)),
        ("ate", format!("{:.4}", q.ate)),
        ("ase", format!("{:.4}", q.ase)),
        ("aoe", format!("{:.4}", q.aoe)),
        ("ap40", format!("{:.4}", summary.ap)),
    ];
    for (k, v) in rows {
        let _ = writeln!(out, "{k:<10} {v:>10}");
    }
    if let Some(g) = summary.closed_gap {
        let _ = writeln!(out, "{:<10} {:>10}", "closed_gap", format!("{g:.2}"));
    }
    Ok(out)
}

fn parse_box(text: &str) -> Result<Box3<f64>, Failure> {
    let nums: Vec<f64> = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .with_context(|| format!("malformed box {text:?}"))
        .map_err(input)?;
    let arr: [f64; 7] = nums
        .try_into()
        .map_err(|v: Vec<f64>| input(anyhow!("expected 7 numbers, got {}", v.len())))?;
    Box3::from_array(arr).map_err(input)
}

pub fn cmd_iou(a: &IouArgs) -> CmdResult {
    let (x, y) = (parse_box(&a.a)?, parse_box(&a.b)?);
    Ok(format!(
        "bev {:.6}\n3d  {:.6}\n",
        iou_bev(&x, &y),
        iou_3d(&x, &y)
    ))
}

pub fn cmd_inspect(a: &InspectArgs) -> CmdResult {
    let bank = load_snapshot::<f64>(&a.snapshot)
        .with_context(|| format!("reading {}", a.snapshot.display()))
        .map_err(input)?;
    let mut out = format!(
        "round {}, variant {:?}, merge {:?}, t_ign {}, t_rm {}\n",
        bank.round, bank.variant, bank.merge, bank.voting.t_ign, bank.voting.t_rm
    );
    let _ = writeln!(
        out,
        "{:<24} {:>5} {:>8} {:>8} {:>8}",
        "scene", "round", "entries", "positive", "max_cnt"
    );
    for m in bank.scenes.values() {
        let _ = writeln!(
            out,
            "{:<24} {:>5} {:>8} {:>8} {:>8}",
            m.scene_id,
            m.round,
            m.entries.len(),
            m.positives().count(),
            m.entries.iter().map(|e| e.cnt).max().unwrap_or(0)
        );
    }
    let total: usize = bank.scenes.values().map(|m| m.entries.len()).sum();
    let _ = writeln!(
        out,
        "{} scenes, {} entries, {} positive",
        bank.scenes.len(),
        total,
        bank.positive_count()
    );
    Ok(out)
}
