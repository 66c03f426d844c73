//! Annotation ingestion, entity-format transformation and dataset assembly.

mod dataset;
mod panoptic;

pub use dataset::{
    merge_datasets, origins, presample, presample_indices, EntityDataset, EntityRecord, ImageRecord, ProvenanceEntry,
    SourceLabel,
};
pub use panoptic::{
    convert_panoptic, parse_panoptic, parse_panoptic_doc, parse_panoptic_image, to_entity_format, PanopticAnnotation,
    PanopticCategory, PanopticImage, PanopticImageInfo, PanopticJson, PanopticSegment, SegmentInfo,
};
