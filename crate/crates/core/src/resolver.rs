//! Inference-side postprocessing: score aggregation, box NMS, and per-pixel
//! fusion of overlapping masks into a non-overlapping entity map.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};
use crate::mask::{box_iou, entity_map_decompose, Bbox, BinaryMask, EntityMap};

/// Box IoU at or above which NMS suppresses a lower-ranked detection.
pub const DEFAULT_NMS_IOU: f64 = 0.6;

/// Ranking score `sqrt(entityness * centerness)`.
pub fn aggregate_score(entityness: f64, centerness: f64) -> Result<f64> {
    for (name, v) in [("entityness", entityness), ("centerness", centerness)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::Domain(format!("{name} {v} outside [0, 1]")));
        }
    }
    Ok((entityness * centerness).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Detection {
    pub bbox: Bbox,
    pub entityness: f64,
    pub centerness: f64,
    pub aggregated_score: f64,
}

impl Detection {
    pub fn new(bbox: Bbox, entityness: f64, centerness: f64) -> Result<Self> {
        Ok(Self {
            bbox,
            entityness,
            centerness,
            aggregated_score: aggregate_score(entityness, centerness)?,
        })
    }
}

/// Indices ranked by score descending, ties by index ascending.
pub(crate) fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| desc(scores[a], scores[b]).then(a.cmp(&b)));
    order
}

pub(crate) fn desc(a: f64, b: f64) -> Ordering {
    b.partial_cmp(&a).unwrap_or(Ordering::Equal)
}

/// Greedy NMS over parallel `boxes` / `scores`; returns kept indices in rank order.
pub fn nms_indices(boxes: &[Bbox], scores: &[f64], iou_threshold: f64) -> Result<Vec<usize>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::Config(format!("NMS threshold {iou_threshold} outside (0, 1]")));
    }
    if boxes.len() != scores.len() {
        return Err(Error::Shape("boxes and scores differ in length".into()));
    }
    let mut kept: Vec<usize> = Vec::new();
    for i in rank_by_score(scores) {
        if kept.iter().all(|&k| box_iou(&boxes[i], &boxes[k]) < iou_threshold) {
            kept.push(i);
        }
    }
    Ok(kept)
}

pub fn box_nms(detections: &[Detection], iou_threshold: f64) -> Result<Vec<Detection>> {
    let boxes: Vec<Bbox> = detections.iter().map(|d| d.bbox).collect();
    let scores: Vec<f64> = detections.iter().map(|d| d.aggregated_score).collect();
    Ok(nms_indices(&boxes, &scores, iou_threshold)?
        .into_iter()
        .map(|i| detections[i])
        .collect())
}

/// A predicted entity before overlap resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredEntity {
    pub entity_id: u32,
    pub mask: BinaryMask,
    pub score: f64,
    /// Dense row-major per-pixel probabilities; only values on the mask
    /// support are read.
    pub pixel_probs: Option<Vec<f64>>,
    pub category_id: Option<i64>,
}

impl ScoredEntity {
    pub fn new(entity_id: u32, mask: BinaryMask, score: f64) -> Self {
        Self {
            entity_id,
            mask,
            score,
            pixel_probs: None,
            category_id: None,
        }
    }

    fn check(&self, height: usize, width: usize) -> Result<()> {
        if self.mask.height() != height || self.mask.width() != width {
            return Err(Error::Shape(format!(
                "entity {} mask is {}x{}, expected {height}x{width}",
                self.entity_id,
                self.mask.height(),
                self.mask.width()
            )));
        }
        if self.entity_id == 0 {
            return Err(Error::Validation {
                id: 0,
                message: "entity id 0 is reserved for void".into(),
            });
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::Validation {
                id: self.entity_id,
                message: format!("score {} outside [0, 1]", self.score),
            });
        }
        if self.mask.is_empty() {
            return Err(Error::Validation {
                id: self.entity_id,
                message: "mask is empty".into(),
            });
        }
        if let Some(probs) = &self.pixel_probs {
            if probs.len() != height * width {
                return Err(Error::Shape(format!(
                    "entity {} has {} pixel probabilities for {} pixels",
                    self.entity_id,
                    probs.len(),
                    height * width
                )));
            }
            if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::Validation {
                    id: self.entity_id,
                    message: "pixel probability outside [0, 1]".into(),
                });
            }
        }
        Ok(())
    }
}

/// A non-overlapping prediction: the ID map plus the score table.
///
/// The score table always carries the reserved entry `0 -> 0.0`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedPrediction {
    pub map: EntityMap,
    pub scores: BTreeMap<u32, f64>,
    pub categories: BTreeMap<u32, i64>,
}

impl ResolvedPrediction {
    /// Builds a prediction from masks that must already be disjoint; any shared
    /// pixel is a constraint violation attributed to `image_id`.
    pub fn from_disjoint(image_id: u64, entities: &[ScoredEntity], height: usize, width: usize) -> Result<Self> {
        for e in entities {
            e.check(height, width)?;
        }
        check_unique_ids(entities)?;
        let map = EntityMap::from_masks(height, width, entities.iter().map(|e| (e.entity_id, &e.mask))).map_err(
            |e| match e {
                Error::Integrity(message) => Error::Constraint { image_id, message },
                other => other,
            },
        )?;
        let mut scores = BTreeMap::from([(0, 0.0)]);
        let mut categories = BTreeMap::new();
        for e in entities {
            scores.insert(e.entity_id, e.score);
            if let Some(c) = e.category_id {
                categories.insert(e.entity_id, c);
            }
        }
        Ok(Self {
            map,
            scores,
            categories,
        })
    }

    /// Decomposes back into one scored mask per ID present in the map.
    pub fn to_scored_entities(&self) -> Vec<ScoredEntity> {
        entity_map_decompose(&self.map)
            .into_iter()
            .map(|(id, mask)| ScoredEntity {
                entity_id: id,
                mask,
                score: self.scores.get(&id).copied().unwrap_or(0.0),
                pixel_probs: None,
                category_id: self.categories.get(&id).copied(),
            })
            .collect()
    }
}

fn check_unique_ids(entities: &[ScoredEntity]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for e in entities {
        if !seen.insert(e.entity_id) {
            return Err(Error::Validation {
                id: e.entity_id,
                message: "duplicate entity id".into(),
            });
        }
    }
    Ok(())
}

/// Assigns each pixel to the entity with the highest confidence
/// `score * pixel_prob` (pixel_prob is 1 on the support when absent).
///
/// Ties go to the lower entity id. Uncovered pixels become void, and entities
/// left without pixels are dropped from the score table.
pub fn resolve_overlaps(entities: &[ScoredEntity], height: usize, width: usize) -> Result<ResolvedPrediction> {
    for e in entities {
        e.check(height, width)?;
    }
    check_unique_ids(entities)?;
    let mut order: Vec<&ScoredEntity> = entities.iter().collect();
    order.sort_by_key(|e| e.entity_id);

    let n = height * width;
    let mut best = vec![f64::NEG_INFINITY; n];
    let mut ids = vec![0u32; n];
    for e in &order {
        let bits = e.mask.bits();
        match &e.pixel_probs {
            Some(probs) => {
                for p in 0..n {
                    if bits[p] {
                        let conf = e.score * probs[p];
                        if conf > best[p] {
                            best[p] = conf;
                            ids[p] = e.entity_id;
                        }
                    }
                }
            }
            None => {
                for p in 0..n {
                    if bits[p] && e.score > best[p] {
                        best[p] = e.score;
                        ids[p] = e.entity_id;
                    }
                }
            }
        }
    }
    let map = EntityMap::new(height, width, ids)?;
    let present: BTreeSet<u32> = map.entity_ids().into_iter().collect();
    let mut scores = BTreeMap::from([(0, 0.0)]);
    let mut categories = BTreeMap::new();
    for e in order {
        if present.contains(&e.entity_id) {
            scores.insert(e.entity_id, e.score);
            if let Some(c) = e.category_id {
                categories.insert(e.entity_id, c);
            }
        }
    }
    Ok(ResolvedPrediction {
        map,
        scores,
        categories,
    })
}

/// Checks the score table against the map.
pub fn validate_prediction(pred: &ResolvedPrediction) -> Result<()> {
    match pred.scores.get(&0) {
        Some(&s) if s == 0.0 => {}
        _ => {
            return Err(Error::Validation {
                id: 0,
                message: "index 0 must be reserved with score 0".into(),
            })
        }
    }
    for (&id, &s) in &pred.scores {
        if !(0.0..=1.0).contains(&s) {
            return Err(Error::Validation {
                id,
                message: format!("score {s} outside [0, 1]"),
            });
        }
    }
    for id in pred.map.entity_ids() {
        if !pred.scores.contains_key(&id) {
            return Err(Error::Validation {
                id,
                message: "no score entry".into(),
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(b: Bbox, s: f64) -> Detection {
        Detection {
            bbox: b,
            entityness: s,
            centerness: 1.0,
            aggregated_score: s,
        }
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_score(1.0, 1.0).unwrap(), 1.0);
        assert_eq!(aggregate_score(0.0, 0.37).unwrap(), 0.0);
        assert!((aggregate_score(0.81, 0.49).unwrap() - 0.63).abs() < 1e-12);
        assert!(matches!(aggregate_score(1.2, 0.5), Err(Error::Domain(_))));
        assert!(aggregate_score(f64::NAN, 0.5).is_err());
        let d = Detection::new(Bbox::new(0, 0, 1, 1), 0.81, 0.49).unwrap();
        assert!((d.aggregated_score - (0.81f64 * 0.49).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn nms_examples() {
        let a = Bbox::new(0, 0, 4, 4);
        let kept = box_nms(&[det(a, 0.8), det(a, 0.9)], 0.6).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].aggregated_score, 0.9);

        let kept = box_nms(&[det(a, 0.8), det(Bbox::new(9, 9, 2, 2), 0.9)], 0.6).unwrap();
        assert_eq!(kept.len(), 2);

        let kept = box_nms(&[det(a, 0.8), det(Bbox::new(2, 0, 4, 4), 0.9)], 0.6).unwrap();
        assert_eq!(kept.len(), 2);
        // IoU 1/3 is suppressed once the threshold drops below it
        let kept = box_nms(&[det(a, 0.8), det(Bbox::new(2, 0, 4, 4), 0.9)], 0.3).unwrap();
        assert_eq!(kept.len(), 1);

        assert!(box_nms(&[], 0.0).is_err());
        assert!(box_nms(&[], 1.5).is_err());
    }

    #[test]
    fn nms_ties_prefer_lower_index() {
        let a = Bbox::new(0, 0, 4, 4);
        let kept = nms_indices(&[a, a], &[0.5, 0.5], 0.6).unwrap();
        assert_eq!(kept, vec![0]);
    }

    fn line(cols: &[usize]) -> BinaryMask {
        BinaryMask::from_pixels(1, 3, &cols.iter().map(|&c| (0, c)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn resolve_examples() {
        let a = ScoredEntity::new(1, line(&[0, 1]), 0.9);
        let b = ScoredEntity::new(2, line(&[1, 2]), 0.7);
        let r = resolve_overlaps(&[a.clone(), b], 1, 3).unwrap();
        assert_eq!(r.map.ids(), &[1, 1, 2]);

        let r = resolve_overlaps(&[a.clone()], 1, 3).unwrap();
        assert_eq!(r.map.ids(), &[1, 1, 0]);
        assert_eq!(r.scores, BTreeMap::from([(0, 0.0), (1, 0.9)]));

        let big = ScoredEntity::new(2, line(&[0, 1, 2]), 0.95);
        let r = resolve_overlaps(&[a, big], 1, 3).unwrap();
        assert_eq!(r.map.ids(), &[2, 2, 2]);
        assert!(!r.scores.contains_key(&1));
        validate_prediction(&r).unwrap();
    }

    #[test]
    fn resolve_uses_pixel_probs_and_breaks_ties_low() {
        let mut a = ScoredEntity::new(1, line(&[0, 1, 2]), 0.9);
        a.pixel_probs = Some(vec![1.0, 0.5, 0.1]);
        let b = ScoredEntity::new(2, line(&[0, 1, 2]), 0.45);
        let r = resolve_overlaps(&[b, a], 1, 3).unwrap();
        // 0.9 vs 0.45 | 0.45 vs 0.45 (tie -> id 1) | 0.09 vs 0.45
        assert_eq!(r.map.ids(), &[1, 1, 2]);
    }

    #[test]
    fn resolve_rejects_bad_inputs() {
        let a = ScoredEntity::new(1, line(&[0]), 0.9);
        assert!(matches!(resolve_overlaps(&[a.clone()], 2, 3), Err(Error::Shape(_))));
        assert!(resolve_overlaps(&[a.clone(), a.clone()], 1, 3).is_err());
        let mut bad = a;
        bad.score = 1.5;
        assert!(resolve_overlaps(&[bad], 1, 3).is_err());
    }

    #[test]
    fn validation_errors_name_the_id() {
        let map = EntityMap::new(1, 2, vec![3, 0]).unwrap();
        let pred = ResolvedPrediction {
            map: map.clone(),
            scores: BTreeMap::from([(0, 0.0)]),
            categories: BTreeMap::new(),
        };
        assert!(matches!(
            validate_prediction(&pred),
            Err(Error::Validation { id: 3, .. })
        ));
        let pred = ResolvedPrediction {
            map,
            scores: BTreeMap::from([(0, 0.0), (3, 1.2)]),
            categories: BTreeMap::new(),
        };
        assert!(matches!(
            validate_prediction(&pred),
            Err(Error::Validation { id: 3, .. })
        ));
    }

    #[test]
    fn from_disjoint_flags_overlap_with_image() {
        let a = ScoredEntity::new(1, line(&[0, 1]), 0.9);
        let b = ScoredEntity::new(2, line(&[1, 2]), 0.7);
        let err = ResolvedPrediction::from_disjoint(42, &[a.clone(), b], 1, 3).unwrap_err();
        assert!(matches!(err, Error::Constraint { image_id: 42, .. }));
        let c = ScoredEntity::new(2, line(&[2]), 0.7);
        let ok = ResolvedPrediction::from_disjoint(42, &[a, c], 1, 3).unwrap();
        assert_eq!(ok.map.ids(), &[1, 1, 2]);
        assert_eq!(ok.to_scored_entities().len(), 2);
    }
}
