//! Object keypoint similarity and COCO-style AP/AR aggregation.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::codec::PersonInstance;
use crate::decode::PoseGroup;
use crate::error::{Error, Result};

/// Standard COCO per-keypoint sigmas. The falloff constant is `k = 2 sigma`.
pub const COCO_SIGMAS: [f64; 17] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072, 0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
];

pub const SYNTHETIC_K: f64 = 0.1;
pub const MAX_DETECTIONS: usize = 20;
pub const RECALL_POINTS: usize = 101;

/// OKS thresholds 0.50, 0.55, ..., 0.95.
pub fn oks_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OksParams {
    pub k_consts: Vec<f64>,
    pub medium_area_range: (f64, f64),
    pub large_area_min: f64,
}

impl OksParams {
    pub fn new(k_consts: Vec<f64>) -> Result<Self> {
        if k_consts.is_empty() || k_consts.iter().any(|k| !(k.is_finite() && *k > 0.0)) {
            return Err(Error::invalid("k_consts", "every constant must be finite and > 0"));
        }
        Ok(OksParams {
            k_consts,
            medium_area_range: (32.0 * 32.0, 96.0 * 96.0),
            large_area_min: 96.0 * 96.0,
        })
    }

    pub fn coco() -> Self {
        Self::new(COCO_SIGMAS.iter().map(|s| 2.0 * s).collect()).expect("constants are positive")
    }

    pub fn uniform(channels: usize, k: f64) -> Result<Self> {
        Self::new(vec![k; channels])
    }

    fn area_ranges(&self) -> [(f64, f64); 3] {
        [(0.0, f64::INFINITY), self.medium_area_range, (self.large_area_min, f64::INFINITY)]
    }
}

/// `sum_i exp(-d_i^2 / (2 s^2 k_i^2)) / #visible` over the visible gt
/// keypoints, with `s^2` the gt area. Empty prediction slots score 0.
pub fn oks(pred: &PoseGroup, gt: &PersonInstance, params: &OksParams) -> Result<f64> {
    let k = gt.keypoints.len();
    if pred.keypoints.len() != k {
        return Err(Error::KeypointCount {
            expected: k,
            found: pred.keypoints.len(),
        });
    }
    if params.k_consts.len() != k {
        return Err(Error::KeypointCount {
            expected: k,
            found: params.k_consts.len(),
        });
    }
    let mut num = 0.0;
    let mut visible = 0usize;
    for ((g, p), kc) in gt.keypoints.iter().zip(&pred.keypoints).zip(&params.k_consts) {
        if !g.is_labeled() {
            continue;
        }
        visible += 1;
        if let Some(d) = p {
            let d2 = (d.x - g.x).powi(2) + (d.y - g.y).powi(2);
            num += (-d2 / (2.0 * gt.area * kc * kc)).exp();
        }
    }
    if visible == 0 {
        return Err(Error::invalid("gt", "OKS is undefined for an instance with no labeled keypoints"));
    }
    Ok(num / visible as f64)
}

/// Area of the tight box around a pose's present keypoints.
pub fn pose_area(pose: &PoseGroup) -> f64 {
    let pts: Vec<_> = pose.keypoints.iter().flatten().collect();
    if pts.is_empty() {
        return 0.0;
    }
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for d in pts {
        x0 = x0.min(d.x);
        x1 = x1.max(d.x);
        y0 = y0.min(d.y);
        y1 = y1.max(d.y);
    }
    (x1 - x0) * (y1 - y0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

/// Greedy matching of one image at one threshold. `oks[d][g]` is indexed by
/// detections already sorted by descending score. Each detection takes the
/// unmatched gt with the highest OKS at or above `threshold`, preferring
/// non-ignored gts.
pub fn greedy_match(oks: &[Vec<f64>], gt_ignore: &[bool], dt_out_of_range: &[bool], threshold: f64) -> Vec<Outcome> {
    let mut order: Vec<usize> = (0..gt_ignore.len()).collect();
    order.sort_by_key(|&g| gt_ignore[g]);
    let mut taken = vec![false; gt_ignore.len()];
    oks.iter()
        .enumerate()
        .map(|(d, row)| {
            let mut best = threshold.min(1.0 - 1e-10);
            let mut m: Option<usize> = None;
            for &g in &order {
                if taken[g] {
                    continue;
                }
                if matches!(m, Some(mg) if !gt_ignore[mg]) && gt_ignore[g] {
                    break;
                }
                if row[g] < best {
                    continue;
                }
                best = row[g];
                m = Some(g);
            }
            match m {
                Some(g) => {
                    taken[g] = true;
                    if gt_ignore[g] {
                        Outcome::Ignored
                    } else {
                        Outcome::TruePositive
                    }
                }
                None if dt_out_of_range[d] => Outcome::Ignored,
                None => Outcome::FalsePositive,
            }
        })
        .collect()
}

/// Precision interpolated at 101 recall points and the final recall, from
/// outcomes already sorted by descending score. `None` when there is no gt.
pub fn interpolated_precision(outcomes: &[Outcome], gt_count: usize) -> Option<(f64, f64)> {
    if gt_count == 0 {
        return None;
    }
    let mut tp = 0.0;
    let mut fp = 0.0;
    let mut recall = Vec::new();
    let mut precision = Vec::new();
    for o in outcomes {
        match o {
            Outcome::TruePositive => tp += 1.0,
            Outcome::FalsePositive => fp += 1.0,
            Outcome::Ignored => continue,
        }
        recall.push(tp / gt_count as f64);
        precision.push(tp / (tp + fp));
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let mut sum = 0.0;
    for j in 0..RECALL_POINTS {
        let r = j as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&rc| rc < r);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    Some((sum / RECALL_POINTS as f64, recall.last().copied().unwrap_or(0.0)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdResult {
    pub threshold: f64,
    pub ap: Option<f64>,
    pub recall: Option<f64>,
}

/// `None` fields mean the metric is undefined (no gt in that split).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar: Option<f64>,
    pub per_threshold: Vec<ThresholdResult>,
    pub gt_count: usize,
    pub pred_count: usize,
}

impl ApReport {
    pub fn ap_at(&self, threshold: f64) -> Option<f64> {
        self.per_threshold
            .iter()
            .find(|r| (r.threshold - threshold).abs() < 1e-9)
            .and_then(|r| r.ap)
    }
}

fn mean(values: &[Option<f64>]) -> Option<f64> {
    let v: Option<Vec<f64>> = values.iter().copied().collect();
    v.filter(|v| !v.is_empty()).map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

struct ImageData {
    oks: Vec<Vec<f64>>,
    gt_area: Vec<f64>,
    gt_unlabeled: Vec<bool>,
    dt_area: Vec<f64>,
    scores: Vec<f64>,
}

fn prepare(preds: &[PoseGroup], gts: &[PersonInstance], params: &OksParams) -> Result<ImageData> {
    let mut dts: Vec<&PoseGroup> = preds.iter().collect();
    dts.sort_by(|a, b| b.group_score.partial_cmp(&a.group_score).unwrap_or(std::cmp::Ordering::Equal));
    dts.truncate(MAX_DETECTIONS);
    let gt_unlabeled: Vec<bool> = gts.iter().map(|g| g.labeled_count() == 0).collect();
    let oks = dts
        .iter()
        .map(|d| {
            gts.iter()
                .zip(&gt_unlabeled)
                .map(|(g, &skip)| if skip { Ok(0.0) } else { oks(d, g, params) })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(ImageData {
        oks,
        gt_area: gts.iter().map(|g| g.area).collect(),
        gt_unlabeled,
        dt_area: dts.iter().map(|d| pose_area(d)).collect(),
        scores: dts.iter().map(|d| d.group_score).collect(),
    })
}

fn split_result(images: &[ImageData], range: (f64, f64), threshold: f64) -> Option<(f64, f64)> {
    let outside = |a: f64| a < range.0 || a > range.1;
    let mut scored: Vec<(f64, Outcome)> = Vec::new();
    let mut gt_count = 0;
    for img in images {
        let gt_ignore: Vec<bool> = img.gt_area.iter().zip(&img.gt_unlabeled).map(|(&a, &u)| u || outside(a)).collect();
        gt_count += gt_ignore.iter().filter(|i| !**i).count();
        let dt_out: Vec<bool> = img.dt_area.iter().map(|&a| outside(a)).collect();
        let outcomes = greedy_match(&img.oks, &gt_ignore, &dt_out, threshold);
        scored.extend(img.scores.iter().copied().zip(outcomes));
    }
    // stable: equal scores keep image order
    scored.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap_or(std::cmp::Ordering::Equal));
    let outcomes: Vec<Outcome> = scored.into_iter().map(|(_, o)| o).collect();
    interpolated_precision(&outcomes, gt_count)
}

/// AP over scenes. `preds[i]` and `gts[i]` belong to the same scene.
pub fn average_precision(preds: &[Vec<PoseGroup>], gts: &[Vec<PersonInstance>], params: &OksParams) -> Result<ApReport> {
    if preds.len() != gts.len() {
        return Err(Error::dimension(format!("{} scenes of predictions", gts.len()), preds.len()));
    }
    let images = preds.iter().zip(gts).map(|(p, g)| prepare(p, g, params)).collect::<Result<Vec<_>>>()?;
    let thresholds = oks_thresholds();
    let [all, medium, large] = params.area_ranges();

    let per_threshold: Vec<ThresholdResult> = thresholds
        .iter()
        .map(|&t| {
            let r = split_result(&images, all, t);
            ThresholdResult {
                threshold: t,
                ap: r.map(|x| x.0),
                recall: r.map(|x| x.1),
            }
        })
        .collect();
    let split_ap = |range| {
        mean(
            &thresholds
                .iter()
                .map(|&t| split_result(&images, range, t).map(|x| x.0))
                .collect::<Vec<_>>(),
        )
    };
    let aps: Vec<Option<f64>> = per_threshold.iter().map(|r| r.ap).collect();
    let recalls: Vec<Option<f64>> = per_threshold.iter().map(|r| r.recall).collect();

    Ok(ApReport {
        ap: mean(&aps),
        ap50: per_threshold[0].ap,
        ap75: per_threshold[5].ap,
        ap_m: split_ap(medium),
        ap_l: split_ap(large),
        ar: mean(&recalls),
        gt_count: images.iter().map(|i| i.gt_unlabeled.iter().filter(|u| !**u).count()).sum(),
        pred_count: preds.iter().map(Vec::len).sum(),
        per_threshold,
    })
}

/// Fixed-width table with the usual column set.
pub fn format_table(report: &ApReport) -> String {
    let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{:.1}", 100.0 * x));
    let mut s = String::new();
    let _ = writeln!(s, "{:>7}{:>7}{:>7}{:>7}{:>7}{:>7}", "AP", "AP50", "AP75", "AP_M", "AP_L", "AR");
    let _ = writeln!(
        s,
        "{:>7}{:>7}{:>7}{:>7}{:>7}{:>7}",
        cell(report.ap),
        cell(report.ap50),
        cell(report.ap75),
        cell(report.ap_m),
        cell(report.ap_l),
        cell(report.ar)
    );
    s
}
