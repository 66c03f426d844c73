//! Segmentation and detection metrics.
//!
//! * [`ap_entity`]: strict mask AP over non-overlapping predictions.
//! * [`ap_overlap_tolerant`]: the same AP machinery on raw, possibly
//!   overlapping masks.
//! * [`ap_box`]: box AP in category-agnostic or category-oriented mode.
//! * [`pq`]: panoptic quality on resolved, categorized predictions.
//!
//! All AP variants share one pipeline: per-image IoU matrices are matched
//! greedily at every threshold ([`ImageEval`]), then detections are pooled
//! dataset-wide and turned into 101-point interpolated precision
//! ([`accumulate`]). Per-image work runs on the rayon pool; pooling is a
//! stable sort over `(score desc, image order, rank)` so results do not
//! depend on the thread count.

mod accumulate;
mod box_ap;
mod mask_ap;
mod matching;
mod panoptic_quality;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use accumulate::{accumulate, accumulate_categories, ApReport, ThresholdAp};
pub use box_ap::{ap_box, box_ground_truth, BoxGroundTruth, BoxPrediction};
pub use mask_ap::{
    ap_entity, ap_entity_from_scored, ap_overlap_tolerant, evaluate_entity_image, evaluate_entity_map,
    evaluate_tolerant_image,
};
pub use matching::{match_image, ImageEval, IouMatrix, MatchPair, MatchSet};
pub use panoptic_quality::{pq, CategoryPq, PqReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    #[default]
    CategoryAgnostic,
    CategoryOriented,
}

/// Area buckets in px²: small `< small_max`, medium `small_max..=large_min`,
/// large `> large_min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeBuckets {
    pub small_max: u64,
    pub large_min: u64,
}

impl Default for SizeBuckets {
    fn default() -> Self {
        Self {
            small_max: 32 * 32,
            large_min: 96 * 96,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Bucket {
    All,
    Small,
    Medium,
    Large,
}

impl Bucket {
    pub(crate) const ALL: [Bucket; 4] = [Bucket::All, Bucket::Small, Bucket::Medium, Bucket::Large];

    pub(crate) fn contains(self, area: u64, buckets: &SizeBuckets) -> bool {
        match self {
            Bucket::All => true,
            Bucket::Small => area < buckets.small_max,
            Bucket::Medium => area >= buckets.small_max && area <= buckets.large_min,
            Bucket::Large => area > buckets.large_min,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub iou_thresholds: Vec<f64>,
    pub recall_points: usize,
    pub max_dets_per_image: usize,
    pub size_buckets: SizeBuckets,
    pub mode: EvalMode,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            iou_thresholds: default_iou_thresholds(),
            recall_points: 101,
            max_dets_per_image: 100,
            size_buckets: SizeBuckets::default(),
            mode: EvalMode::CategoryAgnostic,
        }
    }
}

/// `0.50, 0.55, ..., 0.95`, each computed as `k / 100` so the values are the
/// nearest doubles to their decimal spelling.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| f64::from(50 + 5 * i) / 100.0).collect()
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::Config("at least one IoU threshold is required".into()));
        }
        for (i, &t) in self.iou_thresholds.iter().enumerate() {
            if !(t > 0.0 && t <= 1.0) {
                return Err(Error::Config(format!("IoU threshold {t} outside (0, 1]")));
            }
            if i > 0 && t <= self.iou_thresholds[i - 1] {
                return Err(Error::Config("IoU thresholds must be strictly increasing".into()));
            }
        }
        if self.recall_points < 2 {
            return Err(Error::Config("recall_points must be at least 2".into()));
        }
        if self.max_dets_per_image == 0 {
            return Err(Error::Config("max_dets_per_image must be at least 1".into()));
        }
        if self.size_buckets.small_max > self.size_buckets.large_min {
            return Err(Error::Config("size buckets must satisfy small_max <= large_min".into()));
        }
        Ok(())
    }

    pub(crate) fn threshold_index(&self, value: f64) -> Option<usize> {
        self.iou_thresholds.iter().position(|&t| (t - value).abs() < 1e-9)
    }
}
