use serde::{Deserialize, Serialize};

use super::matching::ImageEval;
use super::{Bucket, EvalConfig};
use crate::resolver::desc;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdAp {
    pub iou: f64,
    pub ap: Option<f64>,
}

/// AP summary. `None` (JSON `null`) marks a value with no ground truth to
/// measure against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub per_threshold: Vec<ThresholdAp>,
}

/// Interpolated AP of one category at threshold index `t`, restricted to `bucket`.
fn threshold_ap(evals: &[ImageEval], t: usize, bucket: Bucket, cfg: &EvalConfig) -> Option<f64> {
    let sizes = &cfg.size_buckets;
    let npos: usize = evals
        .iter()
        .map(|e| e.gt_areas.iter().filter(|&&a| bucket.contains(a, sizes)).count())
        .sum();
    if npos == 0 {
        return None;
    }
    // (score, is_tp); image order then rank order, so a stable sort keeps
    // ties deterministic.
    let mut dets: Vec<(f64, bool)> = Vec::new();
    for e in evals {
        for (rank, m) in e.matches[t].iter().enumerate() {
            match *m {
                Some(g) if bucket.contains(e.gt_areas[g], sizes) => dets.push((e.scores[rank], true)),
                Some(_) => {}
                None if bucket.contains(e.pred_areas[rank], sizes) => dets.push((e.scores[rank], false)),
                None => {}
            }
        }
    }
    dets.sort_by(|a, b| desc(a.0, b.0));

    let mut recall = Vec::with_capacity(dets.len());
    let mut precision = Vec::with_capacity(dets.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for &(_, hit) in &dets {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        recall.push(tp as f64 / npos as f64);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (1..precision.len()).rev() {
        if precision[i] > precision[i - 1] {
            precision[i - 1] = precision[i];
        }
    }
    let steps = cfg.recall_points - 1;
    let total: f64 = (0..cfg.recall_points)
        .map(|k| {
            let r = k as f64 / steps as f64;
            let idx = recall.partition_point(|&x| x < r);
            precision.get(idx).copied().unwrap_or(0.0)
        })
        .sum();
    Some(total / cfg.recall_points as f64)
}

fn mean_defined(values: impl IntoIterator<Item = Option<f64>>) -> Option<f64> {
    let (sum, n) = values
        .into_iter()
        .flatten()
        .fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Single-category AP report.
pub fn accumulate(evals: &[ImageEval], cfg: &EvalConfig) -> ApReport {
    accumulate_groups(&[evals], cfg)
}

/// AP averaged over categories: at each threshold and bucket the defined
/// per-category values are averaged, then thresholds are averaged.
pub fn accumulate_categories(groups: &[Vec<ImageEval>], cfg: &EvalConfig) -> ApReport {
    let slices: Vec<&[ImageEval]> = groups.iter().map(Vec::as_slice).collect();
    accumulate_groups(&slices, cfg)
}

fn accumulate_groups(groups: &[&[ImageEval]], cfg: &EvalConfig) -> ApReport {
    let table: Vec<[Option<f64>; 4]> = (0..cfg.iou_thresholds.len())
        .map(|t| Bucket::ALL.map(|b| mean_defined(groups.iter().map(|g| threshold_ap(g, t, b, cfg)))))
        .collect();
    let over_thresholds = |bi: usize| mean_defined(table.iter().map(|row| row[bi]));
    let at = |v: f64| cfg.threshold_index(v).and_then(|t| table[t][0]);
    ApReport {
        ap: over_thresholds(0),
        ap50: at(0.5),
        ap75: at(0.75),
        ap_s: over_thresholds(1),
        ap_m: over_thresholds(2),
        ap_l: over_thresholds(3),
        per_threshold: cfg
            .iou_thresholds
            .iter()
            .zip(&table)
            .map(|(&iou, row)| ThresholdAp { iou, ap: row[0] })
            .collect(),
    }
}
