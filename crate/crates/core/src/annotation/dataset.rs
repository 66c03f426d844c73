//! Categoryless entity datasets: records, the on-disk JSON form, merging and
//! presampling.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{Bbox, BinaryMask, EntityMap, RleMask};
use crate::rng::SeededRng;

/// One entity of a ground-truth image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntityRecord {
    pub entity_id: u32,
    #[serde(rename = "rle")]
    pub mask: RleMask,
    pub area: u64,
    pub bbox: Bbox,
    /// Kept only for PQ and category-oriented comparisons.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_category: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_is_thing: Option<bool>,
}

/// Source-side labels attached to an entity when building a record.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SourceLabel {
    pub category: Option<i64>,
    pub is_thing: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: u64,
    /// Image id in the dataset the record was converted from; survives merges
    /// and presampling.
    pub original_image_id: u64,
    pub height: usize,
    pub width: usize,
    pub entities: Vec<EntityRecord>,
    pub void_mask: BinaryMask,
    pub source_dataset: String,
}

impl ImageRecord {
    /// Builds records for every nonzero ID of `map`, keeping its IDs.
    pub fn from_entity_map(
        image_id: u64,
        map: &EntityMap,
        source_dataset: &str,
        mut label: impl FnMut(u32) -> SourceLabel,
    ) -> Self {
        let bboxes = map.bboxes();
        let entities = map
            .encode_entities()
            .into_iter()
            .map(|(id, rle)| {
                let l = label(id);
                EntityRecord {
                    entity_id: id,
                    area: rle.area(),
                    bbox: bboxes[&id],
                    mask: rle,
                    source_category: l.category,
                    source_is_thing: l.is_thing,
                }
            })
            .collect();
        Self {
            image_id,
            original_image_id: image_id,
            height: map.height(),
            width: map.width(),
            entities,
            void_mask: map.void_mask(),
            source_dataset: source_dataset.to_owned(),
        }
    }

    /// Paints the entities into a dense ID map.
    pub fn entity_map(&self) -> Result<EntityMap> {
        EntityMap::from_rle(
            self.height,
            self.width,
            self.entities.iter().map(|e| (e.entity_id, &e.mask)),
        )
    }

    pub fn void_area(&self) -> u64 {
        self.void_mask.area()
    }

    fn from_json(raw: ImageJson) -> Result<Self> {
        let image = raw.image_id;
        let ctx = |message: String| Error::Ingestion {
            image: image.to_string(),
            message,
        };
        let mut seen = BTreeSet::new();
        for e in &raw.entities {
            if e.entity_id == 0 || !seen.insert(e.entity_id) {
                return Err(ctx(format!("invalid or duplicate entity id {}", e.entity_id)));
            }
        }
        let map = EntityMap::from_rle(
            raw.height,
            raw.width,
            raw.entities.iter().map(|e| (e.entity_id, &e.mask)),
        )
        .map_err(|e| ctx(e.to_string()))?;
        let bboxes = map.bboxes();
        for e in &raw.entities {
            let area = e.mask.area();
            if area == 0 {
                return Err(ctx(format!("entity {} is empty", e.entity_id)));
            }
            if area != e.area {
                return Err(ctx(format!(
                    "entity {} declares area {} but its mask has {area}",
                    e.entity_id, e.area
                )));
            }
            if bboxes[&e.entity_id] != e.bbox {
                return Err(ctx(format!("entity {} bbox does not match its mask", e.entity_id)));
            }
        }
        Ok(Self {
            image_id: raw.image_id,
            original_image_id: raw.original_image_id.unwrap_or(raw.image_id),
            height: raw.height,
            width: raw.width,
            void_mask: map.void_mask(),
            entities: raw.entities,
            source_dataset: raw.source_dataset,
        })
    }

    fn to_json(&self) -> ImageJson {
        ImageJson {
            image_id: self.image_id,
            original_image_id: Some(self.original_image_id),
            height: self.height,
            width: self.width,
            source_dataset: self.source_dataset.clone(),
            entities: self.entities.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
struct ImageJson {
    image_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    original_image_id: Option<u64>,
    height: usize,
    width: usize,
    source_dataset: String,
    entities: Vec<EntityRecord>,
}

/// Where a block of merged images came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub source_dataset: String,
    /// Added to the source's image ids during merging.
    pub image_id_offset: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EntityDataset {
    pub images: Vec<ImageRecord>,
    pub provenance: Vec<ProvenanceEntry>,
}

#[derive(Serialize, Deserialize)]
struct DatasetJson {
    provenance: Vec<ProvenanceEntry>,
    images: Vec<ImageJson>,
}

impl EntityDataset {
    pub fn new(images: Vec<ImageRecord>, source_dataset: &str) -> Result<Self> {
        let ds = Self {
            images,
            provenance: vec![ProvenanceEntry {
                source_dataset: source_dataset.to_owned(),
                image_id_offset: 0,
            }],
        };
        ds.check_unique_ids()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, image_id: u64) -> Option<&ImageRecord> {
        self.images.iter().find(|im| im.image_id == image_id)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for im in &self.images {
            if !seen.insert(im.image_id) {
                return Err(Error::Integrity(format!(
                    "image id {} appears more than once",
                    im.image_id
                )));
            }
        }
        Ok(())
    }

    pub fn to_json_string(&self) -> Result<String> {
        let raw = DatasetJson {
            provenance: self.provenance.clone(),
            images: self.images.iter().map(ImageRecord::to_json).collect(),
        };
        Ok(serde_json::to_string(&raw)?)
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: DatasetJson = serde_json::from_str(text)?;
        let images = raw
            .images
            .into_iter()
            .map(ImageRecord::from_json)
            .collect::<Result<Vec<_>>>()?;
        let ds = Self {
            images,
            provenance: raw.provenance,
        };
        ds.check_unique_ids()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = self.to_json_string()?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }
}

/// Concatenates datasets without touching categories or entity IDs.
///
/// Image ids of the k-th input are shifted by one past the largest id already
/// emitted (0 for the first input); each provenance entry records its shift.
pub fn merge_datasets(datasets: &[EntityDataset]) -> Result<EntityDataset> {
    if datasets.is_empty() {
        return Err(Error::Config("merge needs at least one dataset".into()));
    }
    let mut out = EntityDataset::default();
    let mut next_free: Option<u64> = None;
    for ds in datasets {
        let offset = next_free.unwrap_or(0);
        for p in &ds.provenance {
            out.provenance.push(ProvenanceEntry {
                source_dataset: p.source_dataset.clone(),
                image_id_offset: p.image_id_offset + offset,
            });
        }
        for im in &ds.images {
            let mut im = im.clone();
            im.image_id += offset;
            next_free = Some(next_free.unwrap_or(0).max(im.image_id + 1));
            out.images.push(im);
        }
    }
    out.check_unique_ids()?;
    Ok(out)
}

/// Sample order used by [`presample`]: concatenated independent shuffles of
/// `0..len`, truncated to `n`. Every index appears `floor(n/len)` or
/// `ceil(n/len)` times.
pub fn presample_indices(len: usize, n: usize, seed: u64) -> Vec<usize> {
    let mut rng = SeededRng::new(seed);
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let mut epoch: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut epoch);
        let take = (n - order.len()).min(len);
        order.extend_from_slice(&epoch[..take]);
    }
    order
}

/// Draws `n` images deterministically from `(dataset, n, seed)`.
///
/// Without replacement when `n <= len`; otherwise whole shuffled passes are
/// repeated. Sampled images are renumbered `1..=n` in sample order and keep
/// their `source_dataset` and `original_image_id`.
pub fn presample(dataset: &EntityDataset, n: usize, seed: u64) -> Result<EntityDataset> {
    if dataset.is_empty() {
        return Err(Error::Config("cannot presample an empty dataset".into()));
    }
    if n == 0 {
        return Err(Error::Config("presample count must be at least 1".into()));
    }
    let images = presample_indices(dataset.len(), n, seed)
        .into_iter()
        .enumerate()
        .map(|(pos, idx)| {
            let mut im = dataset.images[idx].clone();
            im.image_id = pos as u64 + 1;
            im
        })
        .collect();
    Ok(EntityDataset {
        images,
        provenance: dataset.provenance.clone(),
    })
}

/// Multiset of `(source_dataset, original_image_id)` origins.
pub fn origins(dataset: &EntityDataset) -> BTreeMap<(String, u64), usize> {
    let mut out = BTreeMap::new();
    for im in &dataset.images {
        *out.entry((im.source_dataset.clone(), im.original_image_id))
            .or_insert(0) += 1;
    }
    out
}
