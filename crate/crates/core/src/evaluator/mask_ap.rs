use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;

use super::matching::{ImageEval, IouMatrix};
use super::{accumulate, ApReport, EvalConfig, EvalMode};
use crate::annotation::{EntityDataset, ImageRecord};
use crate::error::{Error, Result};
use crate::mask::{ratio, rle_decode, BinaryMask, EntityMap};
use crate::resolver::{validate_prediction, ResolvedPrediction, ScoredEntity};

const ABSENT: u32 = u32::MAX;

/// Maps entity IDs to 1-based slots; slot 0 stands for ID 0.
enum IdLookup {
    Dense(Vec<u32>),
    Sparse(HashMap<u32, u32>),
}

impl IdLookup {
    fn new(ids: &[u32]) -> Self {
        let max = ids.iter().copied().max().unwrap_or(0);
        if max <= 1 << 20 {
            let mut table = vec![ABSENT; max as usize + 1];
            table[0] = 0;
            for (k, &id) in ids.iter().enumerate() {
                table[id as usize] = k as u32 + 1;
            }
            IdLookup::Dense(table)
        } else {
            let mut table: HashMap<u32, u32> = ids.iter().enumerate().map(|(k, &id)| (id, k as u32 + 1)).collect();
            table.insert(0, 0);
            IdLookup::Sparse(table)
        }
    }

    #[inline]
    fn slot(&self, id: u32) -> u32 {
        match self {
            IdLookup::Dense(t) => t.get(id as usize).copied().unwrap_or(ABSENT),
            IdLookup::Sparse(t) => t.get(&id).copied().unwrap_or(ABSENT),
        }
    }
}

/// Pixel co-occurrence counts between two ID maps.
///
/// Row 0 collects pixels with no prediction; column 0 collects GT void.
pub(crate) struct JointCounts {
    gts: usize,
    counts: Vec<u64>,
}

impl JointCounts {
    pub(crate) fn new(pred_map: &EntityMap, pred_ids: &[u32], gt_map: &EntityMap, gt_ids: &[u32]) -> Result<Self> {
        if pred_map.height() != gt_map.height() || pred_map.width() != gt_map.width() {
            return Err(Error::Shape(format!(
                "prediction is {}x{}, ground truth is {}x{}",
                pred_map.height(),
                pred_map.width(),
                gt_map.height(),
                gt_map.width()
            )));
        }
        let (plut, glut) = (IdLookup::new(pred_ids), IdLookup::new(gt_ids));
        let cols = gt_ids.len() + 1;
        let mut counts = vec![0u64; (pred_ids.len() + 1) * cols];
        let mut add = |pid: u32, gid: u32, n: u64| {
            let (p, g) = (plut.slot(pid), glut.slot(gid));
            if p == ABSENT {
                return Err(Error::Validation {
                    id: pid,
                    message: "id in prediction map has no score entry".into(),
                });
            }
            if g == ABSENT {
                return Err(Error::Integrity(format!("unknown ground-truth id {gid}")));
            }
            counts[p as usize * cols + g as usize] += n;
            Ok(())
        };
        // Both maps are mostly constant along rows; count runs of equal pairs.
        let pairs = pred_map.ids().iter().zip(gt_map.ids());
        let mut current: Option<(u32, u32)> = None;
        let mut run = 0u64;
        for (&pid, &gid) in pairs {
            if current == Some((pid, gid)) {
                run += 1;
                continue;
            }
            if let Some((p, g)) = current {
                add(p, g, run)?;
            }
            current = Some((pid, gid));
            run = 1;
        }
        if let Some((p, g)) = current {
            add(p, g, run)?;
        }
        Ok(Self {
            gts: gt_ids.len(),
            counts,
        })
    }

    /// Shared pixels of 1-based slots; slot 0 on either side means none / void.
    pub(crate) fn get(&self, pred: usize, gt: usize) -> u64 {
        self.counts[pred * (self.gts + 1) + gt]
    }

    pub(crate) fn pred_area(&self, pred: usize) -> u64 {
        (0..=self.gts).map(|g| self.get(pred, g)).sum()
    }

    pub(crate) fn gt_area(&self, gt: usize, preds: usize) -> u64 {
        (0..=preds).map(|p| self.get(p, gt)).sum()
    }

    /// IoU with the prediction's void pixels removed.
    pub(crate) fn iou(&self, pred: usize, gt: usize, pred_area: u64, gt_area: u64) -> f64 {
        let inter = self.get(pred, gt);
        let kept = pred_area - self.get(pred, 0);
        ratio(inter, kept + gt_area - inter)
    }
}

/// Evaluates one non-overlapping prediction against one GT image.
///
/// IoUs come from a single joint pass over both ID maps. Prediction rows are
/// the IDs present in the map, ascending; GT columns follow `gt.entities`.
pub fn evaluate_entity_image(
    pred: Option<&ResolvedPrediction>,
    gt: &ImageRecord,
    cfg: &EvalConfig,
) -> Result<ImageEval> {
    let gt_ids: Vec<u32> = gt.entities.iter().map(|e| e.entity_id).collect();
    let Some(pred) = pred else {
        let ious = IouMatrix::new(0, gt_ids.len(), Vec::new())?;
        let areas = gt.entities.iter().map(|e| e.area).collect();
        return ImageEval::build(&[], &[], areas, &ious, cfg);
    };
    evaluate_entity_map(pred, &gt.entity_map()?, &gt_ids, cfg)
}

/// [`evaluate_entity_image`] against a GT ID map whose entity columns are `gt_ids`.
pub fn evaluate_entity_map(
    pred: &ResolvedPrediction,
    gt_map: &EntityMap,
    gt_ids: &[u32],
    cfg: &EvalConfig,
) -> Result<ImageEval> {
    let listed: Vec<u32> = pred.scores.keys().copied().filter(|&id| id != 0).collect();
    let joint = JointCounts::new(&pred.map, &listed, gt_map, gt_ids)?;

    // Score entries without pixels are not predictions.
    let rows: Vec<(usize, u64)> = (1..=listed.len())
        .map(|slot| (slot, joint.pred_area(slot)))
        .filter(|&(_, area)| area > 0)
        .collect();
    let gt_areas: Vec<u64> = (1..=gt_ids.len()).map(|g| joint.gt_area(g, listed.len())).collect();
    let ious = IouMatrix::from_fn(rows.len(), gt_ids.len(), |r, g| {
        let (slot, area) = rows[r];
        joint.iou(slot, g + 1, area, gt_areas[g])
    });
    let scores: Vec<f64> = rows.iter().map(|&(slot, _)| pred.scores[&listed[slot - 1]]).collect();
    let pred_areas: Vec<u64> = rows.iter().map(|&(_, a)| a).collect();
    ImageEval::build(&scores, &pred_areas, gt_areas, &ious, cfg)
}

fn check_known_images<T>(predictions: &BTreeMap<u64, T>, gts: &EntityDataset) -> Result<()> {
    for id in predictions.keys() {
        if gts.image(*id).is_none() {
            return Err(Error::Format(format!(
                "prediction for image {id} which is not in the ground truth"
            )));
        }
    }
    Ok(())
}

fn collect_in_order(results: Vec<Result<ImageEval>>) -> Result<Vec<ImageEval>> {
    results.into_iter().collect()
}

/// Strict entity AP: predictions are non-overlapping by type.
///
/// Images absent from `predictions` count as having no predictions.
pub fn ap_entity(
    predictions: &BTreeMap<u64, ResolvedPrediction>,
    gts: &EntityDataset,
    cfg: &EvalConfig,
) -> Result<ApReport> {
    cfg.validate()?;
    if cfg.mode != EvalMode::CategoryAgnostic {
        return Err(Error::Config("entity AP is category-agnostic only".into()));
    }
    check_known_images(predictions, gts)?;
    for (image_id, pred) in predictions {
        validate_prediction(pred).map_err(|e| match e {
            Error::Validation { id, message } => Error::Validation {
                id,
                message: format!("image {image_id}: {message}"),
            },
            other => other,
        })?;
    }
    let evals = gts
        .images
        .par_iter()
        .map(|im| evaluate_entity_image(predictions.get(&im.image_id), im, cfg))
        .collect();
    Ok(accumulate(&collect_in_order(evals)?, cfg))
}

/// Strict entity AP on raw scored masks: any two masks sharing a pixel
/// reject the whole evaluation, naming the image.
pub fn ap_entity_from_scored(
    predictions: &BTreeMap<u64, Vec<ScoredEntity>>,
    gts: &EntityDataset,
    cfg: &EvalConfig,
) -> Result<ApReport> {
    check_known_images(predictions, gts)?;
    let mut resolved = BTreeMap::new();
    for (&image_id, preds) in predictions {
        let gt = gts.image(image_id).expect("checked above");
        resolved.insert(
            image_id,
            ResolvedPrediction::from_disjoint(image_id, preds, gt.height, gt.width)?,
        );
    }
    ap_entity(&resolved, gts, cfg)
}

pub fn evaluate_tolerant_image(preds: &[ScoredEntity], gt: &ImageRecord, cfg: &EvalConfig) -> Result<ImageEval> {
    let gt_masks: Vec<BinaryMask> = gt.entities.iter().map(|e| rle_decode(&e.mask)).collect::<Result<_>>()?;
    ImageEval::from_masks(preds, &gt_masks, Some(&gt.void_mask), cfg)
}

/// Overlap-tolerant mask AP: same machinery as [`ap_entity`], masks may overlap.
pub fn ap_overlap_tolerant(
    predictions: &BTreeMap<u64, Vec<ScoredEntity>>,
    gts: &EntityDataset,
    cfg: &EvalConfig,
) -> Result<ApReport> {
    cfg.validate()?;
    check_known_images(predictions, gts)?;
    let evals = gts
        .images
        .par_iter()
        .map(|im| {
            let preds = predictions.get(&im.image_id).map(Vec::as_slice).unwrap_or(&[]);
            evaluate_tolerant_image(preds, im, cfg)
        })
        .collect();
    Ok(accumulate(&collect_in_order(evals)?, cfg))
}
