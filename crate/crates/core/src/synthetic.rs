//! Seeded synthetic GT/prediction pairs for benchmarking and stress tests.
//!
//! Each image is a partition of the canvas into row bands, each band cut into
//! rectangles by random column cuts. Some cells are left unannotated. The
//! prediction reuses the layout with jittered cuts, occasionally drops a cell
//! or merges it into its left neighbour, and draws a random score per entity.
//! Image `i` uses stream `i` of the seed, so any image can be generated alone.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::annotation::{EntityDataset, ImageRecord, SourceLabel};
use crate::error::{Error, Result};
use crate::evaluator::{accumulate, evaluate_entity_image, ApReport, EvalConfig};
use crate::mask::EntityMap;
use crate::resolver::ResolvedPrediction;
use crate::rng::SeededRng;

pub const SYNTHETIC_TAG: &str = "synthetic";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SyntheticConfig {
    pub images: usize,
    pub height: usize,
    pub width: usize,
    /// Mean entity count per image; the actual count varies by up to 2.
    pub entities: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            images: 5000,
            height: 480,
            width: 640,
            entities: 12,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        if self.images == 0 {
            return Err(Error::Config("synthetic benchmark needs at least one image".into()));
        }
        if self.entities == 0 {
            return Err(Error::Config("synthetic images need at least one entity".into()));
        }
        if self.height < 8 || self.width < 8 {
            return Err(Error::Config("synthetic images must be at least 8x8".into()));
        }
        let cells = self.entities + 2;
        if cells > self.width.min(self.height) * 2 {
            return Err(Error::Config(format!(
                "{} entities do not fit a {}x{} image",
                self.entities, self.height, self.width
            )));
        }
        Ok(())
    }
}

/// `k` distinct sorted cut positions strictly inside `1..len`.
fn cuts(rng: &mut SeededRng, len: usize, k: usize) -> Vec<usize> {
    let k = k.min(len - 1);
    let mut set = BTreeSet::new();
    while set.len() < k {
        set.insert(rng.range_inclusive(1, len as u64 - 1) as usize);
    }
    set.into_iter().collect()
}

/// Moves interior cuts by up to `amount` while keeping them strictly increasing.
fn jitter(rng: &mut SeededRng, cuts: &[usize], len: usize, amount: usize) -> Vec<usize> {
    let mut out = Vec::with_capacity(cuts.len());
    let mut prev = 0;
    for (i, &c) in cuts.iter().enumerate() {
        let delta = rng.below(2 * amount as u64 + 1) as i64 - amount as i64;
        let hi = len - (cuts.len() - i);
        let moved = (c as i64 + delta).clamp(prev as i64 + 1, hi as i64) as usize;
        out.push(moved);
        prev = moved;
    }
    out
}

fn bounds(cuts: &[usize], len: usize) -> Vec<(usize, usize)> {
    let mut edges = Vec::with_capacity(cuts.len() + 2);
    edges.push(0);
    edges.extend_from_slice(cuts);
    edges.push(len);
    edges.windows(2).map(|w| (w[0], w[1])).collect()
}

struct Layout {
    row_cuts: Vec<usize>,
    col_cuts: Vec<Vec<usize>>,
}

impl Layout {
    fn paint(&self, h: usize, w: usize, ids: &[Vec<u32>]) -> Vec<u32> {
        let mut out = vec![0u32; h * w];
        for (band, (r0, r1)) in bounds(&self.row_cuts, h).into_iter().enumerate() {
            let cols = bounds(&self.col_cuts[band], w);
            for r in r0..r1 {
                let row = &mut out[r * w..(r + 1) * w];
                for (cell, &(c0, c1)) in cols.iter().enumerate() {
                    row[c0..c1].fill(ids[band][cell]);
                }
            }
        }
        out
    }
}

/// GT map and prediction for image `index` (0-based).
pub fn synthetic_pair(cfg: &SyntheticConfig, index: usize) -> Result<(EntityMap, ResolvedPrediction)> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let mut rng = SeededRng::with_stream(cfg.seed, index as u64);
    let lo = cfg.entities.saturating_sub(2).max(1);
    let k = rng.range_inclusive(lo as u64, cfg.entities as u64 + 2) as usize;
    let bands = if k >= 6 {
        3
    } else if k >= 2 {
        2
    } else {
        1
    };
    let layout = Layout {
        row_cuts: cuts(&mut rng, h, bands - 1),
        col_cuts: (0..bands)
            .map(|b| {
                let cells = k / bands + usize::from(b < k % bands);
                cuts(&mut rng, w, cells - 1)
            })
            .collect(),
    };
    let mut next = 0u32;
    let mut gt_ids: Vec<Vec<u32>> = layout
        .col_cuts
        .iter()
        .map(|c| {
            (0..=c.len())
                .map(|_| {
                    next += 1;
                    if rng.bernoulli(0.1) {
                        0
                    } else {
                        next
                    }
                })
                .collect()
        })
        .collect();
    if gt_ids.iter().flatten().all(|&id| id == 0) {
        gt_ids[0][0] = 1;
    }

    let pred_layout = Layout {
        row_cuts: jitter(&mut rng, &layout.row_cuts, h, h / 40),
        col_cuts: layout.col_cuts.iter().map(|c| jitter(&mut rng, c, w, w / 40)).collect(),
    };
    let mut next = 0u32;
    let mut pred_ids: Vec<Vec<u32>> = Vec::with_capacity(bands);
    for c in &layout.col_cuts {
        let mut band = Vec::with_capacity(c.len() + 1);
        for cell in 0..=c.len() {
            next += 1;
            let roll = rng.unit();
            let id = if roll < 0.08 {
                0
            } else if roll < 0.16 && cell > 0 {
                band[cell - 1]
            } else {
                next
            };
            band.push(id);
        }
        pred_ids.push(band);
    }

    let gt = EntityMap::new(h, w, layout.paint(h, w, &gt_ids))?;
    let map = EntityMap::new(h, w, pred_layout.paint(h, w, &pred_ids))?;
    let mut scores = BTreeMap::from([(0, 0.0)]);
    for id in map.entity_ids() {
        scores.insert(id, 1.0 - rng.unit());
    }
    let pred = ResolvedPrediction {
        map,
        scores,
        categories: BTreeMap::new(),
    };
    Ok((gt, pred))
}

/// Image record (id `index + 1`) and prediction for image `index`.
pub fn synthetic_image(cfg: &SyntheticConfig, index: usize) -> Result<(ImageRecord, ResolvedPrediction)> {
    let (gt, pred) = synthetic_pair(cfg, index)?;
    let record = ImageRecord::from_entity_map(index as u64 + 1, &gt, SYNTHETIC_TAG, |_| SourceLabel::default());
    Ok((record, pred))
}

/// The whole synthetic dataset in memory; meant for small configurations.
pub fn synthetic_dataset(cfg: &SyntheticConfig) -> Result<(EntityDataset, BTreeMap<u64, ResolvedPrediction>)> {
    let pairs = (0..cfg.images)
        .into_par_iter()
        .map(|i| synthetic_image(cfg, i))
        .collect::<Result<Vec<_>>>()?;
    let mut images = Vec::with_capacity(pairs.len());
    let mut preds = BTreeMap::new();
    for (record, pred) in pairs {
        preds.insert(record.image_id, pred);
        images.push(record);
    }
    Ok((EntityDataset::new(images, SYNTHETIC_TAG)?, preds))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchSummary {
    pub images: usize,
    pub pixels: u64,
    pub gt_entities: u64,
    pub pred_entities: u64,
    pub report: ApReport,
}

/// Generates and evaluates the synthetic dataset image by image, so memory
/// stays flat. Each GT image goes through its stored record form before
/// evaluation, as it would when read from disk.
pub fn run_synthetic_benchmark(cfg: &SyntheticConfig, eval: &EvalConfig) -> Result<BenchSummary> {
    cfg.validate()?;
    eval.validate()?;
    let per_image = (0..cfg.images)
        .into_par_iter()
        .map(|i| {
            let (record, pred) = synthetic_image(cfg, i)?;
            let e = evaluate_entity_image(Some(&pred), &record, eval)?;
            Ok((record.entities.len() as u64, pred.scores.len() as u64 - 1, e))
        })
        .collect::<Result<Vec<_>>>()?;
    let gt_entities = per_image.iter().map(|x| x.0).sum();
    let pred_entities = per_image.iter().map(|x| x.1).sum();
    let evals: Vec<_> = per_image.into_iter().map(|x| x.2).collect();
    Ok(BenchSummary {
        images: cfg.images,
        pixels: (cfg.images * cfg.height * cfg.width) as u64,
        gt_entities,
        pred_entities,
        report: accumulate(&evals, eval),
    })
}
