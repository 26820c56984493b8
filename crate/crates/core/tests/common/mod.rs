//! Independent reference implementations used by the property and
//! acceptance suites. Nothing here calls into the geometry kernels it is
//! meant to check.
#![allow(dead_code)]

use pseudobox::geometry::Box3;
use pseudobox::metrics::{EvalConfig, ScoredBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[cx, cy, cz, l, w, h, yaw]`
pub type Raw = [f64; 7];

fn to_local(b: &Raw, x: f64, y: f64, z: f64) -> (f64, f64, f64) {
    let (s, c) = b[6].sin_cos();
    let (dx, dy) = (x - b[0], y - b[1]);
    (dx * c + dy * s, -dx * s + dy * c, z - b[2])
}

fn inside_bev(b: &Raw, x: f64, y: f64) -> bool {
    let (u, v, _) = to_local(b, x, y, b[2]);
    u.abs() <= b[3] / 2.0 && v.abs() <= b[4] / 2.0
}

fn inside_3d(b: &Raw, x: f64, y: f64, z: f64) -> bool {
    let (u, v, w) = to_local(b, x, y, z);
    u.abs() <= b[3] / 2.0 && v.abs() <= b[4] / 2.0 && w.abs() <= b[5] / 2.0
}

/// Monte-Carlo `(bev, 3d)` IoU: `n` uniform samples inside the smaller box
/// estimate the fraction of it covered by the other; volumes are exact.
pub fn mc_iou<R: Rng>(a: &Raw, b: &Raw, n: usize, rng: &mut R) -> (f64, f64) {
    let vol = |r: &Raw| r[3] * r[4] * r[5];
    let (s, o) = if vol(a) <= vol(b) { (a, b) } else { (b, a) };
    let (sin, cos) = s[6].sin_cos();
    let (mut hit_bev, mut hit_3d) = (0usize, 0usize);
    for _ in 0..n {
        let u = (rng.random::<f64>() - 0.5) * s[3];
        let v = (rng.random::<f64>() - 0.5) * s[4];
        let w = (rng.random::<f64>() - 0.5) * s[5];
        let x = s[0] + u * cos - v * sin;
        let y = s[1] + u * sin + v * cos;
        let z = s[2] + w;
        if inside_bev(o, x, y) {
            hit_bev += 1;
            if inside_3d(o, x, y, z) {
                hit_3d += 1;
            }
        }
    }
    let iou = |frac: f64, ss: f64, so: f64| {
        let inter = frac * ss;
        inter / (ss + so - inter)
    };
    let (fb, f3) = (hit_bev as f64 / n as f64, hit_3d as f64 / n as f64);
    (iou(fb, s[3] * s[4], o[3] * o[4]), iou(f3, vol(s), vol(o)))
}

/// A box near `anchor` so that most pairs overlap.
pub fn random_box<R: Rng>(rng: &mut R, anchor: (f64, f64), spread: f64) -> Raw {
    use std::f64::consts::PI;
    [
        anchor.0 + rng.random_range(-spread..=spread),
        anchor.1 + rng.random_range(-spread..=spread),
        rng.random_range(-0.5..=0.5),
        rng.random_range(0.5..=5.0),
        rng.random_range(0.5..=3.0),
        rng.random_range(0.5..=2.5),
        rng.random_range(-PI + 1e-9..=PI),
    ]
}

/// Best total of `score(r, c)` over all one-to-one partial assignments,
/// by exhaustive search.
pub fn brute_force_assignment(
    rows: usize,
    cols: usize,
    score: &dyn Fn(usize, usize) -> f64,
) -> f64 {
    fn go(
        r: usize,
        rows: usize,
        cols: usize,
        used: &mut Vec<bool>,
        score: &dyn Fn(usize, usize) -> f64,
    ) -> f64 {
        if r == rows {
            return 0.0;
        }
        let mut best = go(r + 1, rows, cols, used, score);
        for c in 0..cols {
            if !used[c] {
                used[c] = true;
                best = best.max(score(r, c) + go(r + 1, rows, cols, used, score));
                used[c] = false;
            }
        }
        best
    }
    go(0, rows, cols, &mut vec![false; cols], score)
}

/// Average precision sampled at `n_pos` recall positions, computed from
/// the full precision/recall curve at every score cutoff.
///
/// `iou(scene, pred, gt)` gives overlaps; a prediction is a true positive
/// when, taken in descending score order within its scene, it finds a
/// not-yet-claimed ground truth at IoU >= `thresh` (highest IoU wins).
pub fn brute_force_ap(
    scores: &[Vec<f64>],
    n_gts: &[usize],
    iou: &dyn Fn(usize, usize, usize) -> f64,
    thresh: f64,
    n_pos: usize,
) -> f64 {
    let mut flagged: Vec<(f64, bool)> = Vec::new();
    for (s, sc) in scores.iter().enumerate() {
        let mut order: Vec<usize> = (0..sc.len()).collect();
        order.sort_by(|&a, &b| sc[b].partial_cmp(&sc[a]).unwrap().then(a.cmp(&b)));
        let mut claimed = vec![false; n_gts[s]];
        for p in order {
            let best = (0..n_gts[s])
                .filter(|&g| !claimed[g] && iou(s, p, g) >= thresh)
                .max_by(|&a, &b| {
                    iou(s, p, a)
                        .partial_cmp(&iou(s, p, b))
                        .unwrap()
                        .then(b.cmp(&a))
                });
            if let Some(g) = best {
                claimed[g] = true;
            }
            flagged.push((sc[p], best.is_some()));
        }
    }
    flagged.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
    let total: usize = n_gts.iter().sum();
    let points: Vec<(f64, f64)> = (1..=flagged.len())
        .map(|k| {
            let tp = flagged[..k].iter().filter(|f| f.1).count() as f64;
            (tp / total as f64, tp / k as f64)
        })
        .collect();
    let mut sum = 0.0;
    for i in 1..=n_pos {
        let r = i as f64 / n_pos as f64;
        let p = points
            .iter()
            .filter(|(rec, _)| *rec >= r)
            .map(|(_, prec)| *prec)
            .fold(0.0, f64::max);
        sum += p;
    }
    sum / n_pos as f64
}

/// Per-scene predictions and ground truth.
pub type ApInstance = (Vec<Vec<ScoredBox<f64>>>, Vec<Vec<Box3<f64>>>);

/// Up to `max_scenes` scenes of ground truth on a sparse grid, with
/// predictions that are noisy copies, duplicates or strays.
pub fn ap_instance(seed: u64, max_scenes: usize, max_boxes: usize) -> ApInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_scenes = rng.random_range(1..=max_scenes);
    let mut preds = Vec::new();
    let mut gts = Vec::new();
    for _ in 0..n_scenes {
        let n_gt = rng.random_range(0..=max_boxes);
        let gt: Vec<Box3<f64>> = (0..n_gt)
            .map(|i| {
                let x = (i % 4) as f64 * 8.0;
                let y = (i / 4) as f64 * 8.0;
                Box3::from_array([x, y, 0.75, 4.0, 1.8, 1.5, rng.random_range(-3.0..3.0)]).unwrap()
            })
            .collect();
        let mut p = Vec::new();
        for g in &gt {
            for _ in 0..rng.random_range(0..=2) {
                let mut a = g.to_array();
                a[0] += rng.random_range(-0.4..0.4);
                a[1] += rng.random_range(-0.4..0.4);
                a[6] += rng.random_range(-0.1..0.1);
                a[6] = a[6].clamp(-3.1, 3.1);
                p.push(ScoredBox {
                    bbox: Box3::from_array(a).unwrap(),
                    score: rng.random(),
                });
            }
        }
        for _ in 0..rng.random_range(0..=3) {
            let raw = random_box(&mut rng, (12.0, 4.0), 14.0);
            p.push(ScoredBox {
                bbox: Box3::from_array(raw).unwrap(),
                score: rng.random(),
            });
        }
        preds.push(p);
        gts.push(gt);
    }
    (preds, gts)
}

pub fn oracle_ap(preds: &[Vec<ScoredBox<f64>>], gts: &[Vec<Box3<f64>>], cfg: &EvalConfig) -> f64 {
    let scores: Vec<Vec<f64>> = preds
        .iter()
        .map(|p| p.iter().map(|b| b.score).collect())
        .collect();
    let n_gts: Vec<usize> = gts.iter().map(Vec::len).collect();
    let iou = |s: usize, p: usize, g: usize| cfg.iou_kind.eval(&preds[s][p].bbox, &gts[s][g]);
    brute_force_ap(
        &scores,
        &n_gts,
        &iou,
        cfg.iou_threshold,
        cfg.recall_positions as usize,
    )
}
