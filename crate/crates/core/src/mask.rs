//! Mask representations and the geometric kernels shared by every other module.
//!
//! Pixel coordinates are `(row, col)` with the origin at the top-left corner.
//! Dense grids are stored row-major; run-length encodings walk the grid
//! column-major and always start with a background run, following the COCO
//! uncompressed RLE convention.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense per-pixel foreground bitmap for one entity.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        check_dims(height, width)?;
        if bits.len() != height * width {
            return Err(Error::Shape(format!(
                "mask of {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self { height, width, bits })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![false; height * width])
    }

    pub fn ones(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![true; height * width])
    }

    /// Builds a mask with the given `(row, col)` pixels set.
    pub fn from_pixels(height: usize, width: usize, pixels: &[(usize, usize)]) -> Result<Self> {
        let mut mask = Self::zeros(height, width)?;
        for &(r, c) in pixels {
            if r >= height || c >= width {
                return Err(Error::Shape(format!("pixel ({r},{c}) outside {height}x{width}")));
            }
            mask.bits[r * width + c] = true;
        }
        Ok(mask)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: bool) {
        self.bits[row * self.width + col] = value;
    }

    pub fn same_shape(&self, other: &BinaryMask) -> bool {
        self.height == other.height && self.width == other.width
    }

    pub fn area(&self) -> u64 {
        mask_area(self)
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }
}

/// Column-major run-length encoding of a [`BinaryMask`].
///
/// Serializes as `{"size": [height, width], "counts": [...]}`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RleJson", into = "RleJson")]
pub struct RleMask {
    height: usize,
    width: usize,
    counts: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
struct RleJson {
    size: [usize; 2],
    counts: Vec<u32>,
}

impl TryFrom<RleJson> for RleMask {
    type Error = Error;

    fn try_from(value: RleJson) -> Result<Self> {
        RleMask::new(value.size[0], value.size[1], value.counts)
    }
}

impl From<RleMask> for RleJson {
    fn from(value: RleMask) -> Self {
        RleJson {
            size: [value.height, value.width],
            counts: value.counts,
        }
    }
}

impl RleMask {
    /// Validates the run sum and the no-interior-zero rule.
    pub fn new(height: usize, width: usize, counts: Vec<u32>) -> Result<Self> {
        check_dims(height, width).map_err(|e| Error::Format(e.to_string()))?;
        let total: u64 = counts.iter().map(|&c| u64::from(c)).sum();
        if total != (height * width) as u64 {
            return Err(Error::Format(format!(
                "RLE counts sum to {total}, expected {} for {height}x{width}",
                height * width
            )));
        }
        if let Some(pos) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(Error::Format(format!(
                "RLE has a zero-length run at position {}",
                pos + 1
            )));
        }
        Ok(Self { height, width, counts })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Foreground pixel count, read directly from the odd runs.
    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).map(|&c| u64::from(c)).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("RLE serialization is infallible")
    }
}

/// Axis-aligned box; `x_min..x_min + width` by `y_min..y_min + height`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 4]", into = "[u32; 4]")]
pub struct Bbox {
    pub x_min: u32,
    pub y_min: u32,
    pub width: u32,
    pub height: u32,
}

impl From<[u32; 4]> for Bbox {
    fn from(v: [u32; 4]) -> Self {
        Bbox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<Bbox> for [u32; 4] {
    fn from(b: Bbox) -> Self {
        [b.x_min, b.y_min, b.width, b.height]
    }
}

impl Bbox {
    pub const fn new(x_min: u32, y_min: u32, width: u32, height: u32) -> Self {
        Self {
            x_min,
            y_min,
            width,
            height,
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }

    fn x_max(&self) -> u64 {
        u64::from(self.x_min) + u64::from(self.width)
    }

    fn y_max(&self) -> u64 {
        u64::from(self.y_min) + u64::from(self.height)
    }
}

/// Pixel-wise entity ID map. ID 0 is reserved for void / unannotated pixels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EntityMap {
    height: usize,
    width: usize,
    ids: Vec<u32>,
}

impl EntityMap {
    pub fn new(height: usize, width: usize, ids: Vec<u32>) -> Result<Self> {
        check_dims(height, width)?;
        if ids.len() != height * width {
            return Err(Error::Shape(format!(
                "entity map of {height}x{width} needs {} ids, got {}",
                height * width,
                ids.len()
            )));
        }
        Ok(Self { height, width, ids })
    }

    pub fn zeros(height: usize, width: usize) -> Result<Self> {
        Self::new(height, width, vec![0; height * width])
    }

    /// Paints masks in order; fails if any two masks share a pixel.
    pub fn from_masks<'a, I>(height: usize, width: usize, masks: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, &'a BinaryMask)>,
    {
        let mut map = Self::zeros(height, width)?;
        for (id, mask) in masks {
            if id == 0 {
                return Err(Error::Format("entity id 0 is reserved for void".into()));
            }
            if mask.height != height || mask.width != width {
                return Err(Error::Shape(format!(
                    "mask {}x{} does not fit map {height}x{width}",
                    mask.height, mask.width
                )));
            }
            for (slot, &bit) in map.ids.iter_mut().zip(&mask.bits) {
                if bit {
                    if *slot != 0 {
                        return Err(Error::Integrity(format!("entities {} and {id} overlap", *slot)));
                    }
                    *slot = id;
                }
            }
        }
        Ok(map)
    }

    /// Paints run-length encoded entities directly, without materializing
    /// per-entity bitmaps. Fails on overlap or size mismatch.
    pub fn from_rle<'a, I>(height: usize, width: usize, entities: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u32, &'a RleMask)>,
    {
        let mut map = Self::zeros(height, width)?;
        for (id, rle) in entities {
            if id == 0 {
                return Err(Error::Format("entity id 0 is reserved for void".into()));
            }
            if rle.height != height || rle.width != width {
                return Err(Error::Shape(format!(
                    "RLE {}x{} does not fit map {height}x{width}",
                    rle.height, rle.width
                )));
            }
            let mut pos = 0usize;
            for (i, &c) in rle.counts.iter().enumerate() {
                let c = c as usize;
                if i % 2 == 1 {
                    let (mut row, mut col) = (pos % height, pos / height);
                    for _ in 0..c {
                        let slot = &mut map.ids[row * width + col];
                        if *slot != 0 {
                            return Err(Error::Integrity(format!("entities {} and {id} overlap", *slot)));
                        }
                        *slot = id;
                        row += 1;
                        if row == height {
                            row = 0;
                            col += 1;
                        }
                    }
                }
                pos += c;
            }
        }
        Ok(map)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// Tight box per nonzero ID, in one pass.
    pub fn bboxes(&self) -> BTreeMap<u32, Bbox> {
        // (min_row, max_row, min_col, max_col)
        let mut extents: BTreeMap<u32, (usize, usize, usize, usize)> = BTreeMap::new();
        for (row, line) in self.ids.chunks_exact(self.width).enumerate() {
            for (start, end, id) in runs(line) {
                if id == 0 {
                    continue;
                }
                let e = extents.entry(id).or_insert((row, row, start, end - 1));
                e.1 = row;
                e.2 = e.2.min(start);
                e.3 = e.3.max(end - 1);
            }
        }
        extents
            .into_iter()
            .map(|(id, (r0, r1, c0, c1))| {
                (
                    id,
                    Bbox::new(c0 as u32, r0 as u32, (c1 - c0 + 1) as u32, (r1 - r0 + 1) as u32),
                )
            })
            .collect()
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn get(&self, row: usize, col: usize) -> u32 {
        self.ids[row * self.width + col]
    }

    /// Distinct nonzero IDs, ascending.
    pub fn entity_ids(&self) -> Vec<u32> {
        let mut seen = BTreeSet::new();
        for (_, _, id) in runs(&self.ids) {
            if id != 0 {
                seen.insert(id);
            }
        }
        seen.into_iter().collect()
    }

    /// Pixel count per nonzero ID.
    pub fn areas(&self) -> BTreeMap<u32, u64> {
        let mut areas = BTreeMap::new();
        for (start, end, id) in runs(&self.ids) {
            if id != 0 {
                *areas.entry(id).or_insert(0) += (end - start) as u64;
            }
        }
        areas
    }

    pub fn void_mask(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.ids.iter().map(|&id| id == 0).collect(),
        }
    }

    /// The IDs in column-major order.
    pub(crate) fn column_major(&self) -> Vec<u32> {
        const BLOCK: usize = 32;
        let (h, w) = (self.height, self.width);
        let mut out = vec![0u32; h * w];
        for r0 in (0..h).step_by(BLOCK) {
            for c0 in (0..w).step_by(BLOCK) {
                for r in r0..(r0 + BLOCK).min(h) {
                    for c in c0..(c0 + BLOCK).min(w) {
                        out[c * h + r] = self.ids[r * w + c];
                    }
                }
            }
        }
        out
    }

    /// Encodes every entity in a single column-major pass.
    ///
    /// Equivalent to decomposing and calling [`rle_encode`] on each mask, but
    /// touches each pixel once regardless of the entity count.
    pub fn encode_entities(&self) -> Vec<(u32, RleMask)> {
        struct Runs {
            end: usize,
            counts: Vec<u32>,
        }
        let (h, w) = (self.height, self.width);
        let mut encoded: BTreeMap<u32, Runs> = BTreeMap::new();
        for (start, end, id) in runs(&self.column_major()) {
            if id == 0 {
                continue;
            }
            let entry = encoded.entry(id).or_insert(Runs {
                end: 0,
                counts: Vec::new(),
            });
            entry.counts.push((start - entry.end) as u32);
            entry.counts.push((end - start) as u32);
            entry.end = end;
        }
        let total = h * w;
        encoded
            .into_iter()
            .map(|(id, mut r)| {
                if r.end < total {
                    r.counts.push((total - r.end) as u32);
                }
                (
                    id,
                    RleMask {
                        height: h,
                        width: w,
                        counts: r.counts,
                    },
                )
            })
            .collect()
    }
}

/// Maximal runs of equal values as `(start, end, value)`.
pub(crate) fn runs(values: &[u32]) -> impl Iterator<Item = (usize, usize, u32)> + '_ {
    let mut start = 0;
    std::iter::from_fn(move || {
        let &v = values.get(start)?;
        let len = values[start..].iter().take_while(|&&x| x == v).count();
        let run = (start, start + len, v);
        start += len;
        Some(run)
    })
}

fn check_dims(height: usize, width: usize) -> Result<()> {
    if height == 0 || width == 0 {
        return Err(Error::Shape(format!(
            "dimensions must be positive, got {height}x{width}"
        )));
    }
    Ok(())
}

pub fn rle_encode(mask: &BinaryMask) -> RleMask {
    let (h, w) = (mask.height, mask.width);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u32;
    for col in 0..w {
        for row in 0..h {
            let bit = mask.bits[row * w + col];
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    counts.push(run);
    RleMask {
        height: h,
        width: w,
        counts,
    }
}

pub fn rle_decode(rle: &RleMask) -> Result<BinaryMask> {
    let (h, w) = (rle.height, rle.width);
    let total: u64 = rle.counts.iter().map(|&c| u64::from(c)).sum();
    if total != (h * w) as u64 {
        return Err(Error::Format(format!("RLE counts sum to {total}, expected {}", h * w)));
    }
    let mut bits = vec![false; h * w];
    let mut pos = 0usize;
    for (i, &c) in rle.counts.iter().enumerate() {
        let c = c as usize;
        if i % 2 == 1 {
            for p in pos..pos + c {
                bits[(p % h) * w + p / h] = true;
            }
        }
        pos += c;
    }
    BinaryMask::new(h, w, bits)
}

pub fn mask_area(mask: &BinaryMask) -> u64 {
    mask.bits.iter().filter(|&&b| b).count() as u64
}

/// Intersection-over-union with void pixels removed from `pred` only.
///
/// Returns 0 when the union is empty.
pub fn mask_iou(pred: &BinaryMask, gt: &BinaryMask, void: Option<&BinaryMask>) -> Result<f64> {
    if !pred.same_shape(gt) {
        return Err(Error::Shape(format!(
            "IoU operands {}x{} vs {}x{}",
            pred.height, pred.width, gt.height, gt.width
        )));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    match void {
        Some(v) => {
            if !v.same_shape(pred) {
                return Err(Error::Shape("void mask dimensions differ".into()));
            }
            for ((&a, &b), &vd) in pred.bits.iter().zip(&gt.bits).zip(&v.bits) {
                let a = a && !vd;
                inter += u64::from(a && b);
                union += u64::from(a || b);
            }
        }
        None => {
            for (&a, &b) in pred.bits.iter().zip(&gt.bits) {
                inter += u64::from(a && b);
                union += u64::from(a || b);
            }
        }
    }
    Ok(ratio(inter, union))
}

/// `num / den` as a ratio, 0 when `den` is 0.
pub(crate) fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn bbox_of(mask: &BinaryMask) -> Result<Bbox> {
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for row in 0..mask.height {
        let line = &mask.bits[row * mask.width..(row + 1) * mask.width];
        if let Some(first) = line.iter().position(|&b| b) {
            let last = line.iter().rposition(|&b| b).unwrap();
            r0 = r0.min(row);
            r1 = row;
            c0 = c0.min(first);
            c1 = c1.max(last);
        }
    }
    if r0 == usize::MAX {
        return Err(Error::EmptyMask);
    }
    Ok(Bbox::new(
        c0 as u32,
        r0 as u32,
        (c1 - c0 + 1) as u32,
        (r1 - r0 + 1) as u32,
    ))
}

pub fn box_iou(a: &Bbox, b: &Bbox) -> f64 {
    let ix = a.x_max().min(b.x_max()).saturating_sub(u64::from(a.x_min.max(b.x_min)));
    let iy = a.y_max().min(b.y_max()).saturating_sub(u64::from(a.y_min.max(b.y_min)));
    let inter = ix * iy;
    ratio(inter, a.area() + b.area() - inter)
}

/// One mask per distinct nonzero ID, ascending by ID. Disconnected parts of
/// an ID stay in the same mask.
pub fn entity_map_decompose(map: &EntityMap) -> Vec<(u32, BinaryMask)> {
    map.entity_ids()
        .into_iter()
        .map(|id| {
            let bits = map.ids.iter().map(|&v| v == id).collect();
            (
                id,
                BinaryMask {
                    height: map.height,
                    width: map.width,
                    bits,
                },
            )
        })
        .collect()
}
