//! Brute-force references written without any of the library's internals.

use std::collections::{BTreeMap, BTreeSet, HashSet};

pub type PixelSet = HashSet<(usize, usize)>;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub thresholds: Vec<f64>,
    pub recall_points: usize,
    pub max_dets: usize,
    pub small_max: u64,
    pub large_min: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            thresholds: vec![0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95],
            recall_points: 101,
            max_dets: 100,
            small_max: 1024,
            large_min: 9216,
        }
    }
}

/// One image for the reference AP: predictions in input order.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleImage {
    pub scores: Vec<f64>,
    pub pred_areas: Vec<u64>,
    pub gt_areas: Vec<u64>,
    /// `iou[p][g]`
    pub iou: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleReport {
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap75: Option<f64>,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
}

#[derive(Clone, Copy)]
enum Range {
    All,
    Small,
    Medium,
    Large,
}

fn in_range(r: Range, area: u64, cfg: &OracleConfig) -> bool {
    match r {
        Range::All => true,
        Range::Small => area < cfg.small_max,
        Range::Medium => cfg.small_max <= area && area <= cfg.large_min,
        Range::Large => area > cfg.large_min,
    }
}

/// Prediction indices by descending score, ties by input position.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    // insertion sort keeps the comparison explicit
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && scores[idx[j]] > scores[idx[j - 1]] {
            idx.swap(j, j - 1);
            j -= 1;
        }
    }
    idx
}

/// For each ranked prediction, the GT it claims at threshold `t`.
fn greedy_match(img: &OracleImage, ranked: &[usize], t: f64) -> Vec<Option<usize>> {
    let mut used = vec![false; img.gt_areas.len()];
    let mut out = Vec::new();
    for &p in ranked {
        let mut choice: Option<usize> = None;
        for g in 0..img.gt_areas.len() {
            if used[g] || img.iou[p][g] < t {
                continue;
            }
            match choice {
                Some(c) if img.iou[p][g] <= img.iou[p][c] => {}
                _ => choice = Some(g),
            }
        }
        if let Some(g) = choice {
            used[g] = true;
        }
        out.push(choice);
    }
    out
}

fn single_ap(images: &[OracleImage], t: f64, range: Range, cfg: &OracleConfig) -> Option<f64> {
    let npos: usize = images
        .iter()
        .map(|im| im.gt_areas.iter().filter(|&&a| in_range(range, a, cfg)).count())
        .sum();
    if npos == 0 {
        return None;
    }
    // (score, image, rank, hit)
    let mut pool: Vec<(f64, usize, usize, bool)> = Vec::new();
    for (i, im) in images.iter().enumerate() {
        let mut ranked = ranking(&im.scores);
        ranked.truncate(cfg.max_dets);
        let matched = greedy_match(im, &ranked, t);
        for (rank, (&p, m)) in ranked.iter().zip(&matched).enumerate() {
            match m {
                Some(g) => {
                    if in_range(range, im.gt_areas[*g], cfg) {
                        pool.push((im.scores[p], i, rank, true));
                    }
                }
                None => {
                    if in_range(range, im.pred_areas[p], cfg) {
                        pool.push((im.scores[p], i, rank, false));
                    }
                }
            }
        }
    }
    pool.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut prec = Vec::new();
    let mut rec = Vec::new();
    let mut hits = 0.0;
    for (k, d) in pool.iter().enumerate() {
        if d.3 {
            hits += 1.0;
        }
        prec.push(hits / (k as f64 + 1.0));
        rec.push(hits / npos as f64);
    }
    // precision envelope: best precision at this recall or beyond
    let mut envelope = prec.clone();
    for k in 0..envelope.len() {
        envelope[k] = prec[k..].iter().cloned().fold(0.0, f64::max);
    }
    let n = cfg.recall_points;
    let mut sum = 0.0;
    for j in 0..n {
        let level = j as f64 / (n - 1) as f64;
        let mut p = 0.0;
        for k in 0..rec.len() {
            if rec[k] >= level {
                p = envelope[k];
                break;
            }
        }
        sum += p;
    }
    Some(sum / n as f64)
}

fn mean(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}

/// Reference AP over category groups: per threshold and size range the
/// defined category values are averaged, then thresholds are averaged.
pub fn oracle_ap_groups(groups: &[Vec<OracleImage>], cfg: &OracleConfig) -> OracleReport {
    let per = |t: f64, r: Range| {
        let v: Vec<Option<f64>> = groups.iter().map(|g| single_ap(g, t, r, cfg)).collect();
        mean(&v)
    };
    let over = |r: Range| {
        let v: Vec<Option<f64>> = cfg.thresholds.iter().map(|&t| per(t, r)).collect();
        mean(&v)
    };
    let at = |x: f64| {
        cfg.thresholds
            .iter()
            .find(|&&t| (t - x).abs() < 1e-9)
            .and_then(|&t| per(t, Range::All))
    };
    OracleReport {
        ap: over(Range::All),
        ap50: at(0.5),
        ap75: at(0.75),
        ap_s: over(Range::Small),
        ap_m: over(Range::Medium),
        ap_l: over(Range::Large),
    }
}

pub fn oracle_ap(images: &[OracleImage], cfg: &OracleConfig) -> OracleReport {
    oracle_ap_groups(&[images.to_vec()], cfg)
}

/// Pixels of `ids` equal to `id`.
pub fn pixels_of(ids: &[u32], width: usize, id: u32) -> PixelSet {
    ids.iter()
        .enumerate()
        .filter(|(_, &v)| v == id)
        .map(|(i, _)| (i / width, i % width))
        .collect()
}

pub fn pixels_of_bits(bits: &[bool], width: usize) -> PixelSet {
    bits.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| (i / width, i % width))
        .collect()
}

/// IoU with the prediction's void pixels dropped first.
pub fn set_iou(pred: &PixelSet, gt: &PixelSet, void: &PixelSet) -> f64 {
    let kept: PixelSet = pred.difference(void).copied().collect();
    let inter = kept.intersection(gt).count();
    let union = kept.union(gt).count();
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `[x, y, w, h]` of a non-empty pixel set.
pub fn set_bbox(s: &PixelSet) -> [u32; 4] {
    let r0 = s.iter().map(|p| p.0).min().unwrap();
    let r1 = s.iter().map(|p| p.0).max().unwrap();
    let c0 = s.iter().map(|p| p.1).min().unwrap();
    let c1 = s.iter().map(|p| p.1).max().unwrap();
    [c0 as u32, r0 as u32, (c1 - c0 + 1) as u32, (r1 - r0 + 1) as u32]
}

pub fn rect_iou(a: [u32; 4], b: [u32; 4]) -> f64 {
    let cells = |r: [u32; 4]| -> PixelSet {
        let mut s = PixelSet::new();
        for y in r[1]..r[1] + r[3] {
            for x in r[0]..r[0] + r[2] {
                s.insert((y as usize, x as usize));
            }
        }
        s
    };
    let (sa, sb) = (cells(a), cells(b));
    let union = sa.union(&sb).count();
    if union == 0 {
        0.0
    } else {
        sa.intersection(&sb).count() as f64 / union as f64
    }
}

/// Run lengths over the column-major pixel sequence, starting with a
/// (possibly empty) background run.
pub fn naive_rle(bits: &[bool], height: usize, width: usize) -> Vec<u32> {
    let mut seq = Vec::new();
    for c in 0..width {
        for r in 0..height {
            seq.push(bits[r * width + c]);
        }
    }
    let mut counts = Vec::new();
    let mut value = false;
    let mut len = 0u32;
    for b in seq {
        if b == value {
            len += 1;
        } else {
            counts.push(len);
            value = b;
            len = 1;
        }
    }
    counts.push(len);
    counts
}

/// A raw entity for the argmax reference.
pub struct RawEntity<'a> {
    pub id: u32,
    pub bits: &'a [bool],
    pub score: f64,
    pub probs: Option<&'a [f64]>,
}

/// Per pixel, the covering entity with the largest confidence, ties to the
/// smaller id; 0 where nothing covers.
pub fn argmax_resolve(entities: &[RawEntity], pixels: usize) -> Vec<u32> {
    (0..pixels)
        .map(|p| {
            let mut best: Option<(f64, u32)> = None;
            for e in entities.iter().filter(|e| e.bits[p]) {
                let conf = e.score * e.probs.map_or(1.0, |pr| pr[p]);
                best = match best {
                    None => Some((conf, e.id)),
                    Some((c, id)) if conf > c || (conf == c && e.id < id) => Some((conf, e.id)),
                    keep => keep,
                };
            }
            best.map_or(0, |b| b.1)
        })
        .collect()
}

/// Distinct nonzero values, ascending.
pub fn distinct_ids(ids: &[u32]) -> Vec<u32> {
    ids.iter()
        .copied()
        .filter(|&v| v != 0)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Reference panoptic quality on ID maps with per-id categories.
///
/// Returns `(pq, sq, rq)` averaged over categories that have any TP/FP/FN.
pub fn oracle_pq(
    images: &[(Vec<u32>, BTreeMap<u32, i64>, Vec<u32>, BTreeMap<u32, i64>)],
    width: usize,
) -> (f64, f64, f64) {
    // category -> (iou sum, tp, fp, fn)
    let mut stats: BTreeMap<i64, (f64, u64, u64, u64)> = BTreeMap::new();
    for (pred, pcat, gt, gcat) in images {
        let void = pixels_of(gt, width, 0);
        let gt_ids = distinct_ids(gt);
        let mut gt_hit = vec![false; gt_ids.len()];
        for pid in distinct_ids(pred) {
            let ps = pixels_of(pred, width, pid);
            let c = pcat[&pid];
            let mut matched = false;
            for (gi, &gid) in gt_ids.iter().enumerate() {
                if gcat[&gid] != c {
                    continue;
                }
                let gs = pixels_of(gt, width, gid);
                let iou = set_iou(&ps, &gs, &void);
                if iou > 0.5 {
                    let e = stats.entry(c).or_default();
                    e.0 += iou;
                    e.1 += 1;
                    gt_hit[gi] = true;
                    matched = true;
                }
            }
            let on_void = ps.intersection(&void).count();
            if !matched && on_void * 2 <= ps.len() {
                stats.entry(c).or_default().2 += 1;
            }
        }
        for (gi, &gid) in gt_ids.iter().enumerate() {
            if !gt_hit[gi] {
                stats.entry(gcat[&gid]).or_default().3 += 1;
            }
        }
    }
    let n = stats.len().max(1) as f64;
    let (mut pq, mut sq, mut rq) = (0.0, 0.0, 0.0);
    for (s, tp, fp, fn_) in stats.values() {
        let tp = *tp as f64;
        let denom = tp + 0.5 * *fp as f64 + 0.5 * *fn_ as f64;
        pq += s / denom;
        sq += if tp > 0.0 { s / tp } else { 0.0 };
        rq += tp / denom;
    }
    (pq / n, sq / n, rq / n)
}
