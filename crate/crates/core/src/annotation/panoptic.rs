//! COCO-panoptic ingestion and the transformation into categoryless entities.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Deserializer};

use super::dataset::{EntityDataset, ImageRecord, SourceLabel};
use crate::error::{Error, Result};
use crate::idpng;
use crate::mask::EntityMap;

#[derive(Debug, Clone, Deserialize)]
pub struct PanopticJson {
    #[serde(default)]
    pub images: Vec<PanopticImageInfo>,
    #[serde(default)]
    pub annotations: Vec<PanopticAnnotation>,
    #[serde(default)]
    pub categories: Vec<PanopticCategory>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PanopticImageInfo {
    pub id: u64,
    #[serde(default)]
    pub file_name: String,
    pub height: usize,
    pub width: usize,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PanopticAnnotation {
    pub image_id: u64,
    pub file_name: String,
    pub segments_info: Vec<SegmentInfo>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SegmentInfo {
    pub id: u32,
    pub category_id: i64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct PanopticCategory {
    pub id: i64,
    #[serde(default)]
    pub name: String,
    #[serde(deserialize_with = "bool_or_int")]
    pub isthing: bool,
}

fn bool_or_int<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Flag {
        B(bool),
        I(i64),
    }
    Ok(match Flag::deserialize(d)? {
        Flag::B(b) => b,
        Flag::I(i) => i != 0,
    })
}

impl PanopticJson {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A source segment before transformation. `area` is counted from the PNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PanopticSegment {
    pub segment_id: u32,
    pub category_id: i64,
    pub is_thing: bool,
    pub area: u64,
}

/// One decoded panoptic image: segment metadata plus the raw segment-ID map.
#[derive(Debug, Clone, PartialEq)]
pub struct PanopticImage {
    pub image_id: u64,
    pub file_name: String,
    pub segments: Vec<PanopticSegment>,
    pub map: EntityMap,
}

/// Checks one annotation against its decoded ID map.
pub fn parse_panoptic_image(
    info: &PanopticImageInfo,
    ann: &PanopticAnnotation,
    categories: &BTreeMap<i64, bool>,
    map: EntityMap,
) -> Result<PanopticImage> {
    let fail = |message: String| Error::Ingestion {
        image: format!("{} ({})", info.id, ann.file_name),
        message,
    };
    if map.height() != info.height || map.width() != info.width {
        return Err(fail(format!(
            "PNG is {}x{} but the image record says {}x{}",
            map.height(),
            map.width(),
            info.height,
            info.width
        )));
    }
    let areas = map.areas();
    let declared: BTreeSet<u32> = ann.segments_info.iter().map(|s| s.id).collect();
    if let Some(unknown) = areas.keys().find(|id| !declared.contains(id)) {
        return Err(fail(format!("PNG contains segment id {unknown} absent from JSON")));
    }
    let mut segments = Vec::with_capacity(ann.segments_info.len());
    for s in &ann.segments_info {
        if s.id == 0 {
            return Err(fail("segment id 0 is reserved for void".into()));
        }
        let area = *areas
            .get(&s.id)
            .ok_or_else(|| fail(format!("segment {} does not appear in the PNG", s.id)))?;
        let is_thing = *categories
            .get(&s.category_id)
            .ok_or_else(|| fail(format!("unknown category {}", s.category_id)))?;
        segments.push(PanopticSegment {
            segment_id: s.id,
            category_id: s.category_id,
            is_thing,
            area,
        });
    }
    Ok(PanopticImage {
        image_id: info.id,
        file_name: ann.file_name.clone(),
        segments,
        map,
    })
}

/// Reads the annotation JSON and every referenced ID PNG under `png_dir`.
///
/// Images are decoded in parallel; the result (and the first error, if any)
/// follows annotation order.
pub fn parse_panoptic(json_path: &Path, png_dir: &Path) -> Result<Vec<PanopticImage>> {
    let doc = PanopticJson::load(json_path)?;
    parse_panoptic_doc(&doc, png_dir)
}

pub fn parse_panoptic_doc(doc: &PanopticJson, png_dir: &Path) -> Result<Vec<PanopticImage>> {
    let categories: BTreeMap<i64, bool> = doc.categories.iter().map(|c| (c.id, c.isthing)).collect();
    let infos: HashMap<u64, &PanopticImageInfo> = doc.images.iter().map(|im| (im.id, im)).collect();
    let results: Vec<Result<PanopticImage>> = doc
        .annotations
        .par_iter()
        .map(|ann| {
            let info = infos.get(&ann.image_id).ok_or_else(|| Error::Ingestion {
                image: format!("{} ({})", ann.image_id, ann.file_name),
                message: "no matching entry in \"images\"".into(),
            })?;
            let map = idpng::read_id_png(&png_dir.join(&ann.file_name)).map_err(|e| Error::Ingestion {
                image: format!("{} ({})", ann.image_id, ann.file_name),
                message: e.to_string(),
            })?;
            parse_panoptic_image(info, ann, &categories, map)
        })
        .collect();
    results.into_iter().collect()
}

/// Turns every thing and stuff segment into one entity.
///
/// Entity IDs are dense `1..=N`, assigned by descending area with ties broken
/// by ascending source segment id. Category labels survive only as metadata.
pub fn to_entity_format(image: &PanopticImage, source_dataset: &str) -> Result<ImageRecord> {
    let mut seen = BTreeSet::new();
    for s in &image.segments {
        if !seen.insert(s.segment_id) {
            return Err(Error::Integrity(format!(
                "image {}: segment {} is declared more than once",
                image.image_id, s.segment_id
            )));
        }
    }
    let mut order: Vec<&PanopticSegment> = image.segments.iter().collect();
    order.sort_by(|a, b| b.area.cmp(&a.area).then(a.segment_id.cmp(&b.segment_id)));

    let mut remap: HashMap<u32, u32> = HashMap::with_capacity(order.len());
    let mut labels: Vec<SourceLabel> = Vec::with_capacity(order.len());
    for (k, s) in order.iter().enumerate() {
        remap.insert(s.segment_id, k as u32 + 1);
        labels.push(SourceLabel {
            category: Some(s.category_id),
            is_thing: Some(s.is_thing),
        });
    }
    let ids = image
        .map
        .ids()
        .iter()
        .map(|&id| {
            if id == 0 {
                Ok(0)
            } else {
                remap.get(&id).copied().ok_or_else(|| Error::Ingestion {
                    image: image.image_id.to_string(),
                    message: format!("pixel id {id} has no segment"),
                })
            }
        })
        .collect::<Result<Vec<u32>>>()?;
    let map = EntityMap::new(image.map.height(), image.map.width(), ids)?;
    Ok(ImageRecord::from_entity_map(
        image.image_id,
        &map,
        source_dataset,
        |id| labels[id as usize - 1],
    ))
}

/// Parses and transforms a whole panoptic dataset.
pub fn convert_panoptic(json_path: &Path, png_dir: &Path, source_dataset: &str) -> Result<EntityDataset> {
    let images = parse_panoptic(json_path, png_dir)?;
    let records = images
        .par_iter()
        .map(|im| to_entity_format(im, source_dataset))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    EntityDataset::new(records, source_dataset)
}
