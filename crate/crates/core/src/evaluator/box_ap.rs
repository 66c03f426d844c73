use std::collections::BTreeSet;

use rayon::prelude::*;

use super::matching::{ImageEval, IouMatrix};
use super::{accumulate, accumulate_categories, ApReport, EvalConfig, EvalMode};
use crate::annotation::EntityDataset;
use crate::error::{Error, Result};
use crate::mask::{box_iou, Bbox};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxPrediction {
    pub bbox: Bbox,
    pub score: f64,
    pub category_id: Option<i64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoxGroundTruth {
    pub bbox: Bbox,
    pub category_id: Option<i64>,
}

/// Per-image GT boxes from entity records, with their source categories.
pub fn box_ground_truth(dataset: &EntityDataset) -> Vec<Vec<BoxGroundTruth>> {
    dataset
        .images
        .iter()
        .map(|im| {
            im.entities
                .iter()
                .map(|e| BoxGroundTruth {
                    bbox: e.bbox,
                    category_id: e.source_category,
                })
                .collect()
        })
        .collect()
}

fn image_eval(preds: &[&BoxPrediction], gts: &[&BoxGroundTruth], cfg: &EvalConfig) -> Result<ImageEval> {
    let ious = IouMatrix::from_fn(preds.len(), gts.len(), |p, g| box_iou(&preds[p].bbox, &gts[g].bbox));
    let scores: Vec<f64> = preds.iter().map(|p| p.score).collect();
    let pred_areas: Vec<u64> = preds.iter().map(|p| p.bbox.area()).collect();
    ImageEval::build(
        &scores,
        &pred_areas,
        gts.iter().map(|g| g.bbox.area()).collect(),
        &ious,
        cfg,
    )
}

/// Box AP. `detections[i]` and `gts[i]` describe the same image.
///
/// Agnostic mode ignores categories. Oriented mode matches only within a
/// category, computes AP per category, and averages the categories that have
/// ground truth. Size buckets use GT box area.
pub fn ap_box(detections: &[Vec<BoxPrediction>], gts: &[Vec<BoxGroundTruth>], cfg: &EvalConfig) -> Result<ApReport> {
    cfg.validate()?;
    if detections.len() != gts.len() {
        return Err(Error::Shape(format!(
            "{} detection lists for {} ground-truth images",
            detections.len(),
            gts.len()
        )));
    }
    match cfg.mode {
        EvalMode::CategoryAgnostic => {
            let evals = detections
                .par_iter()
                .zip(gts.par_iter())
                .map(|(d, g)| {
                    let d: Vec<&BoxPrediction> = d.iter().collect();
                    let g: Vec<&BoxGroundTruth> = g.iter().collect();
                    image_eval(&d, &g, cfg)
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(accumulate(&evals, cfg))
        }
        EvalMode::CategoryOriented => {
            let missing = detections.iter().flatten().any(|d| d.category_id.is_none())
                || gts.iter().flatten().any(|g| g.category_id.is_none());
            if missing {
                return Err(Error::Config(
                    "category-oriented box AP needs a category on every box".into(),
                ));
            }
            let categories: BTreeSet<i64> = detections
                .iter()
                .flatten()
                .map(|d| d.category_id)
                .chain(gts.iter().flatten().map(|g| g.category_id))
                .flatten()
                .collect();
            let groups = categories
                .par_iter()
                .map(|&c| {
                    detections
                        .iter()
                        .zip(gts)
                        .map(|(d, g)| {
                            let d: Vec<&BoxPrediction> = d.iter().filter(|x| x.category_id == Some(c)).collect();
                            let g: Vec<&BoxGroundTruth> = g.iter().filter(|x| x.category_id == Some(c)).collect();
                            image_eval(&d, &g, cfg)
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Vec<_>>()
                .into_iter()
                .collect::<Result<Vec<_>>>()?;
            Ok(accumulate_categories(&groups, cfg))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(mislabel: bool) -> (Vec<Vec<BoxPrediction>>, Vec<Vec<BoxGroundTruth>>) {
        let boxes = [Bbox::new(0, 0, 4, 4), Bbox::new(10, 10, 5, 5)];
        let gts = vec![boxes
            .iter()
            .enumerate()
            .map(|(i, &b)| BoxGroundTruth {
                bbox: b,
                category_id: Some(i as i64),
            })
            .collect()];
        let dets = vec![boxes
            .iter()
            .enumerate()
            .map(|(i, &b)| BoxPrediction {
                bbox: b,
                score: 0.9 - 0.1 * i as f64,
                category_id: Some(if mislabel && i == 1 { 0 } else { i as i64 }),
            })
            .collect()];
        (dets, gts)
    }

    fn oriented() -> EvalConfig {
        EvalConfig {
            mode: EvalMode::CategoryOriented,
            ..EvalConfig::default()
        }
    }

    #[test]
    fn perfect_boxes() {
        let (d, g) = setup(false);
        assert_eq!(ap_box(&d, &g, &EvalConfig::default()).unwrap().ap, Some(1.0));
        assert_eq!(ap_box(&d, &g, &oriented()).unwrap().ap, Some(1.0));
    }

    #[test]
    fn mislabeled_box() {
        let (d, g) = setup(true);
        assert_eq!(ap_box(&d, &g, &EvalConfig::default()).unwrap().ap, Some(1.0));
        // category 0: TP then FP -> 1.0; category 1: FN only -> 0.0
        assert_eq!(ap_box(&d, &g, &oriented()).unwrap().ap, Some(0.5));
    }

    #[test]
    fn oriented_needs_categories() {
        let (mut d, g) = setup(false);
        d[0][0].category_id = None;
        assert!(matches!(ap_box(&d, &g, &oriented()), Err(Error::Config(_))));
        assert!(ap_box(&d, &g, &EvalConfig::default()).is_ok());
    }

    #[test]
    fn length_mismatch() {
        let (d, _) = setup(false);
        assert!(ap_box(&d, &[], &EvalConfig::default()).is_err());
    }
}
