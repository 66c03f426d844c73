//! Prediction files built from ground truth, for end-to-end command tests.

use entseg::annotation::{EntityDataset, ImageRecord, SourceLabel};
use entseg::predictions::{ImagePredictions, PredictionFile, PredictionRecord};
use entseg::EntityMap;

use crate::gen::TAG;

fn record(entity_id: u32, rle: entseg::RleMask, score: f64) -> PredictionRecord {
    PredictionRecord {
        entity_id,
        rle: Some(rle),
        bbox: None,
        score: Some(score),
        entityness: None,
        centerness: None,
        pixel_probs: None,
        category_id: None,
    }
}

/// Every GT entity predicted exactly, with distinct scores and its source
/// category.
pub fn gt_as_prediction(ds: &EntityDataset) -> PredictionFile {
    let images = ds
        .images
        .iter()
        .map(|im| ImagePredictions {
            image_id: im.image_id,
            entities: im
                .entities
                .iter()
                .enumerate()
                .map(|(k, e)| PredictionRecord {
                    category_id: e.source_category,
                    ..record(e.entity_id, e.mask.clone(), 1.0 - k as f64 / 64.0)
                })
                .collect(),
        })
        .collect();
    PredictionFile { images }
}

/// Two GT entities; the prediction repeats the first one as an overlapping
/// duplicate ranked above the second.
pub fn duplicated_fixture() -> (EntityDataset, PredictionFile) {
    let gt = EntityMap::new(4, 4, vec![1, 1, 0, 0, 1, 1, 0, 0, 0, 0, 2, 2, 0, 0, 2, 2]).unwrap();
    let record_1 = ImageRecord::from_entity_map(1, &gt, TAG, |_| SourceLabel::default());
    let masks: Vec<_> = record_1.entities.iter().map(|e| e.mask.clone()).collect();
    let ds = EntityDataset::new(vec![record_1], TAG).unwrap();
    let pred = PredictionFile {
        images: vec![ImagePredictions {
            image_id: 1,
            entities: vec![
                record(1, masks[0].clone(), 0.9),
                record(2, masks[0].clone(), 0.8),
                record(3, masks[1].clone(), 0.7),
            ],
        }],
    };
    (ds, pred)
}
