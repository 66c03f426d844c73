//! Prediction files.
//!
//! Scored predictions are one JSON document:
//!
//! ```json
//! {"images": [{"image_id": 1, "entities": [
//!     {"entity_id": 1, "rle": {"size": [h, w], "counts": [...]}, "score": 0.9}
//! ]}]}
//! ```
//!
//! An entity may give `entityness` and `centerness` instead of `score`, plus
//! optional `pixel_probs` (row-major, one value per pixel), `category_id` and
//! `bbox`. Box-only entities omit `rle` and give `bbox`.
//!
//! Resolved predictions are a directory holding one ID PNG per image and a
//! [`SCORES_FILE`] with the score table of every image.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotation::EntityDataset;
use crate::error::{Error, Result};
use crate::evaluator::BoxPrediction;
use crate::idpng;
use crate::mask::{bbox_of, rle_decode, rle_encode, Bbox, RleMask};
use crate::resolver::{aggregate_score, ResolvedPrediction, ScoredEntity};

pub const SCORES_FILE: &str = "scores.json";

/// Largest disagreement tolerated between a given `score` and the aggregate
/// of the given `entityness` and `centerness`.
const SCORE_AGREEMENT: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionRecord {
    pub entity_id: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rle: Option<RleMask>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<Bbox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entityness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centerness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel_probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_id: Option<i64>,
}

impl PredictionRecord {
    /// `score`, or the aggregate of `entityness` and `centerness`.
    pub fn effective_score(&self) -> Result<f64> {
        let invalid = |message: String| Error::Validation {
            id: self.entity_id,
            message,
        };
        let aggregated = match (self.entityness, self.centerness) {
            (Some(e), Some(c)) => Some(aggregate_score(e, c).map_err(|e| invalid(e.to_string()))?),
            (None, None) => None,
            _ => return Err(invalid("entityness and centerness must be given together".into())),
        };
        match (self.score, aggregated) {
            (Some(s), Some(a)) if (s - a).abs() > SCORE_AGREEMENT => {
                Err(invalid(format!("score {s} disagrees with the aggregated score {a}")))
            }
            (Some(s), _) => Ok(s),
            (None, Some(a)) => Ok(a),
            (None, None) => Err(invalid("no score".into())),
        }
    }

    fn to_scored_entity(&self) -> Result<ScoredEntity> {
        let rle = self.rle.as_ref().ok_or_else(|| Error::Validation {
            id: self.entity_id,
            message: "mask metrics need an rle".into(),
        })?;
        Ok(ScoredEntity {
            entity_id: self.entity_id,
            mask: rle_decode(rle)?,
            score: self.effective_score()?,
            pixel_probs: self.pixel_probs.clone(),
            category_id: self.category_id,
        })
    }

    fn to_box(&self) -> Result<BoxPrediction> {
        let bbox = match (self.bbox, &self.rle) {
            (Some(b), _) => b,
            (None, Some(rle)) => bbox_of(&rle_decode(rle)?)?,
            (None, None) => {
                return Err(Error::Validation {
                    id: self.entity_id,
                    message: "needs a bbox or an rle".into(),
                })
            }
        };
        Ok(BoxPrediction {
            bbox,
            score: self.effective_score()?,
            category_id: self.category_id,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImagePredictions {
    pub image_id: u64,
    pub entities: Vec<PredictionRecord>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PredictionFile {
    pub images: Vec<ImagePredictions>,
}

impl PredictionFile {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        let mut seen = BTreeSet::new();
        for im in &file.images {
            if !seen.insert(im.image_id) {
                return Err(Error::Format(format!("image {} is listed more than once", im.image_id)));
            }
        }
        Ok(file)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()?).map_err(|e| Error::io(path, e))
    }

    /// Scored masks per image; every entity needs an `rle`.
    pub fn scored_entities(&self) -> Result<BTreeMap<u64, Vec<ScoredEntity>>> {
        self.images
            .iter()
            .map(|im| {
                let entities = im
                    .entities
                    .iter()
                    .map(PredictionRecord::to_scored_entity)
                    .collect::<Result<Vec<_>>>()
                    .map_err(|e| in_image(im.image_id, e))?;
                Ok((im.image_id, entities))
            })
            .collect()
    }

    /// Box predictions aligned with the images of `gts`.
    pub fn box_predictions(&self, gts: &EntityDataset) -> Result<Vec<Vec<BoxPrediction>>> {
        let mut by_image = BTreeMap::new();
        for im in &self.images {
            if gts.image(im.image_id).is_none() {
                return Err(Error::Format(format!(
                    "prediction for image {} which is not in the ground truth",
                    im.image_id
                )));
            }
            let boxes = im
                .entities
                .iter()
                .map(PredictionRecord::to_box)
                .collect::<Result<Vec<_>>>()
                .map_err(|e| in_image(im.image_id, e))?;
            by_image.insert(im.image_id, boxes);
        }
        Ok(gts
            .images
            .iter()
            .map(|im| by_image.remove(&im.image_id).unwrap_or_default())
            .collect())
    }

    /// Scored masks written back as records, in image-id order.
    pub fn from_scored(predictions: &BTreeMap<u64, Vec<ScoredEntity>>) -> Self {
        let images = predictions
            .iter()
            .map(|(&image_id, entities)| ImagePredictions {
                image_id,
                entities: entities
                    .iter()
                    .map(|e| PredictionRecord {
                        entity_id: e.entity_id,
                        rle: Some(rle_encode(&e.mask)),
                        bbox: None,
                        score: Some(e.score),
                        entityness: None,
                        centerness: None,
                        pixel_probs: e.pixel_probs.clone(),
                        category_id: e.category_id,
                    })
                    .collect(),
            })
            .collect();
        Self { images }
    }
}

fn in_image(image_id: u64, e: Error) -> Error {
    match e {
        Error::Validation { id, message } => Error::Validation {
            id,
            message: format!("image {image_id}: {message}"),
        },
        other => other,
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreEntry {
    entity_id: u32,
    score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    category_id: Option<i64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreImage {
    image_id: u64,
    file_name: String,
    entities: Vec<ScoreEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScoreTable {
    images: Vec<ScoreImage>,
}

pub fn resolved_png_name(image_id: u64) -> String {
    format!("{image_id}.png")
}

/// Writes `<image_id>.png` per image plus [`SCORES_FILE`] into `dir`,
/// creating it if needed.
pub fn save_resolved(dir: &Path, predictions: &BTreeMap<u64, ResolvedPrediction>) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut images = Vec::with_capacity(predictions.len());
    for (&image_id, pred) in predictions {
        let file_name = resolved_png_name(image_id);
        idpng::write_id_png(&pred.map, &dir.join(&file_name))?;
        images.push(ScoreImage {
            image_id,
            file_name,
            entities: pred
                .scores
                .iter()
                .filter(|(&id, _)| id != 0)
                .map(|(&id, &score)| ScoreEntry {
                    entity_id: id,
                    score,
                    category_id: pred.categories.get(&id).copied(),
                })
                .collect(),
        });
    }
    let path = dir.join(SCORES_FILE);
    let text = serde_json::to_string(&ScoreTable { images })?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Reads a directory written by [`save_resolved`].
pub fn load_resolved(dir: &Path) -> Result<BTreeMap<u64, ResolvedPrediction>> {
    let path = dir.join(SCORES_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let table: ScoreTable = serde_json::from_str(&text)?;
    let mut out = BTreeMap::new();
    for im in table.images {
        let map = idpng::read_id_png(&dir.join(&im.file_name)).map_err(|e| Error::Ingestion {
            image: format!("{} ({})", im.image_id, im.file_name),
            message: e.to_string(),
        })?;
        let mut scores = BTreeMap::from([(0, 0.0)]);
        let mut categories = BTreeMap::new();
        for e in im.entities {
            if e.entity_id == 0 || scores.insert(e.entity_id, e.score).is_some() {
                return Err(Error::Format(format!(
                    "image {}: invalid or repeated entity id {}",
                    im.image_id, e.entity_id
                )));
            }
            if let Some(c) = e.category_id {
                categories.insert(e.entity_id, c);
            }
        }
        let pred = ResolvedPrediction {
            map,
            scores,
            categories,
        };
        if out.insert(im.image_id, pred).is_some() {
            return Err(Error::Format(format!("image {} is listed more than once", im.image_id)));
        }
    }
    Ok(out)
}
