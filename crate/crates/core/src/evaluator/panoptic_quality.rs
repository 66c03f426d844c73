use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::mask_ap::JointCounts;
use crate::annotation::{EntityDataset, ImageRecord};
use crate::error::{Error, Result};
use crate::resolver::{validate_prediction, ResolvedPrediction};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CategoryPq {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Panoptic quality averaged over categories with at least one TP, FP or FN.
///
/// `pq == sq * rq` holds per category; the averaged columns are averaged
/// independently.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PqReport {
    pub pq: f64,
    pub sq: f64,
    pub rq: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub per_category: BTreeMap<i64, CategoryPq>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    iou_sum: f64,
    tp: u64,
    fp: u64,
    fn_: u64,
}

fn image_tallies(pred: Option<&ResolvedPrediction>, gt: &ImageRecord) -> Result<Vec<(i64, Tally)>> {
    let gt_ids: Vec<u32> = gt.entities.iter().map(|e| e.entity_id).collect();
    let gt_cats: Vec<i64> = gt
        .entities
        .iter()
        .map(|e| {
            e.source_category.ok_or_else(|| {
                Error::Config(format!(
                    "image {}: entity {} has no category; PQ needs categories, use entity AP instead",
                    gt.image_id, e.entity_id
                ))
            })
        })
        .collect::<Result<_>>()?;
    let mut out: Vec<(i64, Tally)> = Vec::new();
    let mut gt_matched = vec![false; gt_ids.len()];
    if let Some(pred) = pred {
        let listed: Vec<u32> = pred.scores.keys().copied().filter(|&id| id != 0).collect();
        let joint = JointCounts::new(&pred.map, &listed, &gt.entity_map()?, &gt_ids)?;
        let gt_areas: Vec<u64> = (1..=gt_ids.len()).map(|g| joint.gt_area(g, listed.len())).collect();
        for (k, &id) in listed.iter().enumerate() {
            let slot = k + 1;
            let area = joint.pred_area(slot);
            if area == 0 {
                continue;
            }
            let cat = *pred.categories.get(&id).ok_or_else(|| {
                Error::Config(format!(
                    "image {}: predicted entity {id} has no category; PQ needs categories, use entity AP instead",
                    gt.image_id
                ))
            })?;
            let mut matched = false;
            for (g, &gcat) in gt_cats.iter().enumerate() {
                if gcat != cat || joint.get(slot, g + 1) == 0 {
                    continue;
                }
                let iou = joint.iou(slot, g + 1, area, gt_areas[g]);
                if iou > 0.5 {
                    gt_matched[g] = true;
                    matched = true;
                    out.push((
                        cat,
                        Tally {
                            iou_sum: iou,
                            tp: 1,
                            ..Tally::default()
                        },
                    ));
                    break;
                }
            }
            // Mostly-void predictions are neither right nor wrong.
            if !matched && joint.get(slot, 0) * 2 <= area {
                out.push((
                    cat,
                    Tally {
                        fp: 1,
                        ..Tally::default()
                    },
                ));
            }
        }
    }
    for (g, &cat) in gt_cats.iter().enumerate() {
        if !gt_matched[g] {
            out.push((
                cat,
                Tally {
                    fn_: 1,
                    ..Tally::default()
                },
            ));
        }
    }
    Ok(out)
}

/// Panoptic quality. Matches need equal categories and IoU strictly above 0.5.
pub fn pq(predictions: &BTreeMap<u64, ResolvedPrediction>, gts: &EntityDataset) -> Result<PqReport> {
    for (image_id, pred) in predictions {
        if gts.image(*image_id).is_none() {
            return Err(Error::Format(format!(
                "prediction for image {image_id} which is not in the ground truth"
            )));
        }
        validate_prediction(pred)?;
    }
    let per_image = gts
        .images
        .par_iter()
        .map(|im| image_tallies(predictions.get(&im.image_id), im))
        .collect::<Vec<_>>();
    let mut tallies: BTreeMap<i64, Tally> = BTreeMap::new();
    for result in per_image {
        for (cat, t) in result? {
            let acc = tallies.entry(cat).or_default();
            acc.iou_sum += t.iou_sum;
            acc.tp += t.tp;
            acc.fp += t.fp;
            acc.fn_ += t.fn_;
        }
    }
    let per_category: BTreeMap<i64, CategoryPq> = tallies
        .into_iter()
        .filter(|(_, t)| t.tp + t.fp + t.fn_ > 0)
        .map(|(cat, t)| {
            let denom = t.tp as f64 + 0.5 * t.fp as f64 + 0.5 * t.fn_ as f64;
            let sq = if t.tp > 0 { t.iou_sum / t.tp as f64 } else { 0.0 };
            let rq = t.tp as f64 / denom;
            (
                cat,
                CategoryPq {
                    pq: t.iou_sum / denom,
                    sq,
                    rq,
                    tp: t.tp,
                    fp: t.fp,
                    fn_: t.fn_,
                },
            )
        })
        .collect();
    let n = per_category.len().max(1) as f64;
    let mean = |f: fn(&CategoryPq) -> f64| per_category.values().map(f).sum::<f64>() / n;
    Ok(PqReport {
        pq: mean(|c| c.pq),
        sq: mean(|c| c.sq),
        rq: mean(|c| c.rq),
        tp: per_category.values().map(|c| c.tp).sum(),
        fp: per_category.values().map(|c| c.fp).sum(),
        fn_: per_category.values().map(|c| c.fn_).sum(),
        per_category,
    })
}
