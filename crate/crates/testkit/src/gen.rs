//! Seeded random fixtures.

use std::collections::{BTreeMap, BTreeSet};

use entseg::annotation::{EntityDataset, ImageRecord, SourceLabel};
use entseg::evaluator::{BoxGroundTruth, BoxPrediction};
use entseg::resolver::{ResolvedPrediction, ScoredEntity};
use entseg::rng::SeededRng;
use entseg::{Bbox, BinaryMask, EntityMap};

use crate::oracle::{distinct_ids, pixels_of, pixels_of_bits, rect_iou, set_bbox, set_iou, OracleImage, RawEntity};

pub const TAG: &str = "fixture";

/// Scores in `(0, 1]`, drawn from a coarse grid some of the time so ties occur.
pub fn random_score(rng: &mut SeededRng) -> f64 {
    if rng.bernoulli(0.3) {
        (1 + rng.below(5)) as f64 / 5.0
    } else {
        1.0 - rng.unit()
    }
}

fn random_rect(rng: &mut SeededRng, h: usize, w: usize) -> (usize, usize, usize, usize) {
    let r0 = rng.below(h as u64) as usize;
    let c0 = rng.below(w as u64) as usize;
    let r1 = r0 + 1 + rng.below((h - r0) as u64) as usize;
    let c1 = c0 + 1 + rng.below((w - c0) as u64) as usize;
    (r0, r1, c0, c1)
}

fn paint(ids: &mut [u32], w: usize, rect: (usize, usize, usize, usize), id: u32) {
    for r in rect.0..rect.1 {
        for c in rect.2..rect.3 {
            ids[r * w + c] = id;
        }
    }
}

fn distinct_random_ids(rng: &mut SeededRng, n: usize, max: u64) -> Vec<u32> {
    let mut set = BTreeSet::new();
    while set.len() < n {
        set.insert(1 + rng.below(max) as u32);
    }
    let mut v: Vec<u32> = set.into_iter().collect();
    rng.shuffle(&mut v);
    v
}

/// A GT map with up to `max_entities` rectangles painted over each other.
pub fn random_gt_map(rng: &mut SeededRng, h: usize, w: usize, max_entities: usize) -> EntityMap {
    let n = 1 + rng.below(max_entities as u64) as usize;
    let ids = distinct_random_ids(rng, n, 60);
    let mut map = vec![0u32; h * w];
    for &id in &ids {
        let rect = random_rect(rng, h, w);
        paint(&mut map, w, rect, id);
    }
    EntityMap::new(h, w, map).unwrap()
}

/// A non-overlapping prediction loosely following `gt`.
pub fn random_disjoint_prediction(rng: &mut SeededRng, gt: &EntityMap, max_entities: usize) -> ResolvedPrediction {
    let (h, w) = (gt.height(), gt.width());
    let gt_ids = gt.entity_ids();
    let relabel = distinct_random_ids(rng, gt_ids.len(), 200);
    let lut: BTreeMap<u32, u32> = gt_ids.iter().copied().zip(relabel.iter().copied()).collect();
    let mut ids: Vec<u32> = gt.ids().iter().map(|v| if *v == 0 { 0 } else { lut[v] }).collect();
    let mut pool: Vec<u32> = relabel.clone();
    let extra = rng.below(4) as usize;
    for _ in 0..extra {
        let id = if rng.bernoulli(0.5) || pool.is_empty() {
            201 + rng.below(50) as u32
        } else if rng.bernoulli(0.2) {
            0
        } else {
            pool[rng.below(pool.len() as u64) as usize]
        };
        if id != 0 {
            pool.push(id);
        }
        let rect = random_rect(rng, h, w);
        paint(&mut ids, w, rect, id);
    }
    let noise = rng.unit() * 0.15;
    for v in ids.iter_mut() {
        if rng.bernoulli(noise) {
            *v = if pool.is_empty() || rng.bernoulli(0.3) {
                0
            } else {
                pool[rng.below(pool.len() as u64) as usize]
            };
        }
    }
    let mut present = distinct_ids(&ids);
    // keep the entity count bounded by merging surplus ids into void
    while present.len() > max_entities {
        let drop = present.pop().unwrap();
        for v in ids.iter_mut() {
            if *v == drop {
                *v = 0;
            }
        }
    }
    let map = EntityMap::new(h, w, ids).unwrap();
    let mut scores = BTreeMap::from([(0, 0.0)]);
    for id in map.entity_ids() {
        scores.insert(id, random_score(rng));
    }
    ResolvedPrediction {
        map,
        scores,
        categories: BTreeMap::new(),
    }
}

/// Possibly overlapping scored masks, some near GT entities, some random.
pub fn random_scored_masks(rng: &mut SeededRng, gt: &EntityMap, max_entities: usize) -> Vec<ScoredEntity> {
    let (h, w) = (gt.height(), gt.width());
    let gt_ids = gt.entity_ids();
    let n = rng.below(max_entities as u64 + 1) as usize;
    let ids = distinct_random_ids(rng, n, 300);
    let mut out = Vec::new();
    for id in ids {
        let mut bits: Vec<bool> = if !gt_ids.is_empty() && rng.bernoulli(0.6) {
            let g = gt_ids[rng.below(gt_ids.len() as u64) as usize];
            gt.ids().iter().map(|&v| v == g).collect()
        } else {
            vec![false; h * w]
        };
        if rng.bernoulli(0.5) {
            let (r0, r1, c0, c1) = random_rect(rng, h, w);
            let on = rng.bernoulli(0.7);
            for r in r0..r1 {
                for c in c0..c1 {
                    bits[r * w + c] = on;
                }
            }
        }
        let flip = rng.unit() * 0.1;
        for b in bits.iter_mut() {
            if rng.bernoulli(flip) {
                *b = !*b;
            }
        }
        if !bits.iter().any(|&b| b) {
            bits[rng.below((h * w) as u64) as usize] = true;
        }
        let mask = BinaryMask::new(h, w, bits).unwrap();
        out.push(ScoredEntity::new(id, mask, random_score(rng)));
    }
    out
}

/// One random evaluation instance.
pub struct Instance {
    pub gt: EntityDataset,
    pub gt_maps: Vec<EntityMap>,
    pub gt_categories: Vec<BTreeMap<u32, i64>>,
    pub disjoint: BTreeMap<u64, ResolvedPrediction>,
    pub overlapping: BTreeMap<u64, Vec<ScoredEntity>>,
    pub boxes: Vec<Vec<BoxPrediction>>,
}

/// `images` images of `h x w` with up to `max_entities` entities each.
pub fn random_instance(seed: u64, images: usize, h: usize, w: usize, max_entities: usize) -> Instance {
    let mut rng = SeededRng::new(seed);
    let mut records = Vec::new();
    let mut gt_maps = Vec::new();
    let mut gt_categories = Vec::new();
    let mut disjoint = BTreeMap::new();
    let mut overlapping = BTreeMap::new();
    let mut boxes = Vec::new();
    for i in 0..images {
        let image_id = 10 + 3 * i as u64;
        let gt = random_gt_map(&mut rng, h, w, max_entities);
        let cats: BTreeMap<u32, i64> = gt
            .entity_ids()
            .into_iter()
            .map(|id| (id, 1 + rng.below(3) as i64))
            .collect();
        records.push(ImageRecord::from_entity_map(image_id, &gt, TAG, |id| SourceLabel {
            category: Some(cats[&id]),
            is_thing: None,
        }));
        if rng.bernoulli(0.9) {
            disjoint.insert(image_id, random_disjoint_prediction(&mut rng, &gt, max_entities));
        }
        let masks = random_scored_masks(&mut rng, &gt, max_entities);
        boxes.push(
            masks
                .iter()
                .map(|m| {
                    let b = set_bbox(&pixels_of_bits(m.mask.bits(), w));
                    BoxPrediction {
                        bbox: Bbox::new(b[0], b[1], b[2], b[3]),
                        score: m.score,
                        category_id: Some(1 + rng.below(3) as i64),
                    }
                })
                .collect(),
        );
        overlapping.insert(image_id, masks);
        gt_maps.push(gt);
        gt_categories.push(cats);
    }
    Instance {
        gt: EntityDataset::new(records, TAG).unwrap(),
        gt_maps,
        gt_categories,
        disjoint,
        overlapping,
        boxes,
    }
}

/// Reference image for strict entity AP: prediction rows are the map's ids
/// ascending, GT columns the GT ids ascending.
pub fn oracle_entity_image(pred: Option<&ResolvedPrediction>, gt: &EntityMap) -> OracleImage {
    let w = gt.width();
    let void = pixels_of(gt.ids(), w, 0);
    let gsets: Vec<_> = distinct_ids(gt.ids())
        .into_iter()
        .map(|g| pixels_of(gt.ids(), w, g))
        .collect();
    let mut img = OracleImage {
        scores: vec![],
        pred_areas: vec![],
        gt_areas: gsets.iter().map(|s| s.len() as u64).collect(),
        iou: vec![],
    };
    if let Some(pred) = pred {
        for pid in distinct_ids(pred.map.ids()) {
            let ps = pixels_of(pred.map.ids(), w, pid);
            img.scores.push(pred.scores[&pid]);
            img.pred_areas.push(ps.len() as u64);
            img.iou.push(gsets.iter().map(|g| set_iou(&ps, g, &void)).collect());
        }
    }
    img
}

/// Reference image for overlap-tolerant AP, predictions in list order.
pub fn oracle_tolerant_image(preds: &[ScoredEntity], gt: &EntityMap) -> OracleImage {
    let w = gt.width();
    let void = pixels_of(gt.ids(), w, 0);
    let gsets: Vec<_> = distinct_ids(gt.ids())
        .into_iter()
        .map(|g| pixels_of(gt.ids(), w, g))
        .collect();
    let mut img = OracleImage {
        scores: vec![],
        pred_areas: vec![],
        gt_areas: gsets.iter().map(|s| s.len() as u64).collect(),
        iou: vec![],
    };
    for p in preds {
        let ps = pixels_of_bits(p.mask.bits(), w);
        img.scores.push(p.score);
        img.pred_areas.push(ps.len() as u64);
        img.iou.push(gsets.iter().map(|g| set_iou(&ps, g, &void)).collect());
    }
    img
}

/// GT boxes from an ID map, ascending id, with categories.
pub fn oracle_gt_boxes(gt: &EntityMap, cats: &BTreeMap<u32, i64>) -> Vec<([u32; 4], i64)> {
    distinct_ids(gt.ids())
        .into_iter()
        .map(|g| (set_bbox(&pixels_of(gt.ids(), gt.width(), g)), cats[&g]))
        .collect()
}

/// Reference image for box AP, optionally restricted to one category.
pub fn oracle_box_image(preds: &[BoxPrediction], gts: &[([u32; 4], i64)], category: Option<i64>) -> OracleImage {
    let keep_p: Vec<&BoxPrediction> = preds
        .iter()
        .filter(|p| category.is_none() || p.category_id == category)
        .collect();
    let keep_g: Vec<&([u32; 4], i64)> = gts.iter().filter(|g| category.is_none_or(|c| g.1 == c)).collect();
    let arr = |b: &Bbox| [b.x_min, b.y_min, b.width, b.height];
    OracleImage {
        scores: keep_p.iter().map(|p| p.score).collect(),
        pred_areas: keep_p
            .iter()
            .map(|p| u64::from(p.bbox.width) * u64::from(p.bbox.height))
            .collect(),
        gt_areas: keep_g.iter().map(|g| u64::from(g.0[2]) * u64::from(g.0[3])).collect(),
        iou: keep_p
            .iter()
            .map(|p| keep_g.iter().map(|g| rect_iou(arr(&p.bbox), g.0)).collect())
            .collect(),
    }
}

/// Library-side GT boxes built from the dataset, for `ap_box`.
pub fn library_gt_boxes(inst: &Instance) -> Vec<Vec<BoxGroundTruth>> {
    entseg::evaluator::box_ground_truth(&inst.gt)
}

/// Up to six overlapping scored masks with distinct ids; some carry pixel
/// probabilities.
pub fn random_entities(rng: &mut SeededRng, h: usize, w: usize) -> Vec<ScoredEntity> {
    let n = rng.below(7) as usize;
    let mut ids: Vec<u32> = (1..40).collect();
    rng.shuffle(&mut ids);
    (0..n)
        .map(|k| {
            let density = rng.unit();
            let mut bits: Vec<bool> = (0..h * w).map(|_| rng.bernoulli(density)).collect();
            if !bits.iter().any(|&b| b) {
                bits[0] = true;
            }
            let mut e = ScoredEntity::new(ids[k], BinaryMask::new(h, w, bits).unwrap(), random_score(rng));
            if rng.bernoulli(0.4) {
                e.pixel_probs = Some((0..h * w).map(|_| rng.unit()).collect());
            }
            e
        })
        .collect()
}

pub fn as_raw(entities: &[ScoredEntity]) -> Vec<RawEntity<'_>> {
    entities
        .iter()
        .map(|e| RawEntity {
            id: e.entity_id,
            bits: e.mask.bits(),
            score: e.score,
            probs: e.pixel_probs.as_deref(),
        })
        .collect()
}
