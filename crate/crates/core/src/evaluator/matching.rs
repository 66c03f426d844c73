use crate::error::{Error, Result};
use crate::mask::{mask_area, mask_iou, BinaryMask};
use crate::resolver::{rank_by_score, ScoredEntity};

use super::EvalConfig;

/// Prediction-by-ground-truth IoU table, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IouMatrix {
    preds: usize,
    gts: usize,
    values: Vec<f64>,
}

impl IouMatrix {
    pub fn new(preds: usize, gts: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != preds * gts {
            return Err(Error::Shape(format!(
                "IoU table {preds}x{gts} needs {} values, got {}",
                preds * gts,
                values.len()
            )));
        }
        Ok(Self { preds, gts, values })
    }

    pub fn from_fn(preds: usize, gts: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(preds * gts);
        for p in 0..preds {
            for g in 0..gts {
                values.push(f(p, g));
            }
        }
        Self { preds, gts, values }
    }

    pub fn get(&self, pred: usize, gt: usize) -> f64 {
        self.values[pred * self.gts + gt]
    }

    pub fn preds(&self) -> usize {
        self.preds
    }

    pub fn gts(&self) -> usize {
        self.gts
    }
}

/// Greedy assignment of `ranked` predictions at one threshold.
///
/// Each prediction takes the still-unmatched GT with the highest IoU among
/// those at or above `threshold`; equal IoUs go to the lower GT index.
fn greedy(ious: &IouMatrix, ranked: &[usize], threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; ious.gts];
    ranked
        .iter()
        .map(|&p| {
            let mut best: Option<(usize, f64)> = None;
            for (g, used) in taken.iter().enumerate() {
                if *used {
                    continue;
                }
                let iou = ious.get(p, g);
                if iou >= threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchPair {
    pub pred: usize,
    pub gt: usize,
    pub iou: f64,
}

/// Matching outcome at one IoU threshold. Indices refer to input order.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchSet {
    pub threshold: f64,
    pub pairs: Vec<MatchPair>,
    pub unmatched_preds: Vec<usize>,
    pub unmatched_gts: Vec<usize>,
}

/// Matches scored masks against ground truth at one threshold; void pixels
/// are removed from predictions before IoU.
pub fn match_image(
    preds: &[ScoredEntity],
    gts: &[BinaryMask],
    threshold: f64,
    void: Option<&BinaryMask>,
) -> Result<MatchSet> {
    let mut values = Vec::with_capacity(preds.len() * gts.len());
    for p in preds {
        for g in gts {
            values.push(mask_iou(&p.mask, g, void)?);
        }
    }
    let ious = IouMatrix::new(preds.len(), gts.len(), values)?;
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let ranked = rank_by_score(&scores);
    let assigned = greedy(&ious, &ranked, threshold);

    let mut pairs = Vec::new();
    let mut unmatched_preds = Vec::new();
    let mut gt_used = vec![false; gts.len()];
    for (&p, m) in ranked.iter().zip(&assigned) {
        match *m {
            Some(g) => {
                gt_used[g] = true;
                pairs.push(MatchPair {
                    pred: p,
                    gt: g,
                    iou: ious.get(p, g),
                });
            }
            None => unmatched_preds.push(p),
        }
    }
    unmatched_preds.sort_unstable();
    let unmatched_gts = (0..gts.len()).filter(|&g| !gt_used[g]).collect();
    Ok(MatchSet {
        threshold,
        pairs,
        unmatched_preds,
        unmatched_gts,
    })
}

/// Per-image matching state for every threshold.
///
/// Predictions are stored in rank order after the `max_dets` cut.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEval {
    pub scores: Vec<f64>,
    pub pred_areas: Vec<u64>,
    pub gt_areas: Vec<u64>,
    /// `matches[t][rank]` is the GT index matched at threshold `t`.
    pub matches: Vec<Vec<Option<usize>>>,
}

impl ImageEval {
    /// `scores` and `pred_areas` follow the row order of `ious`; `gt_areas`
    /// its column order.
    pub fn build(
        scores: &[f64],
        pred_areas: &[u64],
        gt_areas: Vec<u64>,
        ious: &IouMatrix,
        cfg: &EvalConfig,
    ) -> Result<Self> {
        if scores.len() != ious.preds || pred_areas.len() != ious.preds || gt_areas.len() != ious.gts {
            return Err(Error::Shape("IoU table does not match prediction/GT counts".into()));
        }
        let mut ranked = rank_by_score(scores);
        ranked.truncate(cfg.max_dets_per_image);
        let matches = cfg.iou_thresholds.iter().map(|&t| greedy(ious, &ranked, t)).collect();
        Ok(Self {
            scores: ranked.iter().map(|&p| scores[p]).collect(),
            pred_areas: ranked.iter().map(|&p| pred_areas[p]).collect(),
            gt_areas,
            matches,
        })
    }

    /// Mask variant that computes areas and IoUs from dense masks.
    pub fn from_masks(
        preds: &[ScoredEntity],
        gts: &[BinaryMask],
        void: Option<&BinaryMask>,
        cfg: &EvalConfig,
    ) -> Result<Self> {
        let mut values = Vec::with_capacity(preds.len() * gts.len());
        for p in preds {
            for g in gts {
                values.push(mask_iou(&p.mask, g, void)?);
            }
        }
        let ious = IouMatrix::new(preds.len(), gts.len(), values)?;
        let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
        let pred_areas: Vec<u64> = preds.iter().map(|p| mask_area(&p.mask)).collect();
        Self::build(&scores, &pred_areas, gts.iter().map(mask_area).collect(), &ious, cfg)
    }
}
