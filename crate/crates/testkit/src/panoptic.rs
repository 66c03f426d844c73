//! Small COCO-panoptic datasets written to disk, with their expected entity
//! layout computed independently of the library.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use entseg::rng::SeededRng;
use serde_json::json;

/// Categories of every fixture: `(id, isthing)`.
pub const CATEGORIES: [(i64, bool); 4] = [(1, true), (2, true), (50, false), (51, false)];

#[derive(Debug, Clone)]
pub struct FixtureImage {
    pub id: u64,
    pub height: usize,
    pub width: usize,
    /// Row-major source segment ids; 0 is void.
    pub segments: Vec<u32>,
    pub categories: BTreeMap<u32, i64>,
}

impl FixtureImage {
    /// Expected dense entity ids: by descending area, then ascending segment id.
    pub fn expected_entities(&self) -> Vec<u32> {
        let mut area: BTreeMap<u32, u64> = BTreeMap::new();
        for &s in &self.segments {
            if s != 0 {
                *area.entry(s).or_insert(0) += 1;
            }
        }
        let mut order: Vec<(u32, u64)> = area.into_iter().collect();
        order.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let rank: BTreeMap<u32, u32> = order.iter().enumerate().map(|(k, (s, _))| (*s, k as u32 + 1)).collect();
        self.segments
            .iter()
            .map(|s| if *s == 0 { 0 } else { rank[s] })
            .collect()
    }

    pub fn segment_count(&self) -> usize {
        self.categories.len()
    }
}

#[derive(Debug, Clone)]
pub struct PanopticFixture {
    pub json_path: PathBuf,
    pub png_dir: PathBuf,
    pub images: Vec<FixtureImage>,
}

fn write_png(path: &Path, h: usize, w: usize, ids: &[u32]) {
    let mut enc = png::Encoder::new(BufWriter::new(File::create(path).unwrap()), w as u32, h as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut data = Vec::with_capacity(ids.len() * 3);
    for &id in ids {
        data.extend_from_slice(&[(id % 256) as u8, (id / 256 % 256) as u8, (id / 65536) as u8]);
    }
    enc.write_header().unwrap().write_image_data(&data).unwrap();
}

fn random_image(rng: &mut SeededRng, id: u64) -> FixtureImage {
    let (h, w) = (rng.range_inclusive(6, 24) as usize, rng.range_inclusive(6, 24) as usize);
    let mut segments = vec![0u32; h * w];
    // a stuff background that may leave void holes
    let background = 1 + rng.below((1 << 24) - 1) as u32;
    for s in segments.iter_mut() {
        if !rng.bernoulli(0.1) {
            *s = background;
        }
    }
    for _ in 0..rng.below(7) {
        let seg = 1 + rng.below((1 << 24) - 1) as u32;
        let (r0, c0) = (rng.below(h as u64) as usize, rng.below(w as u64) as usize);
        let (r1, c1) = (
            rng.range_inclusive(r0 as u64 + 1, h as u64) as usize,
            rng.range_inclusive(c0 as u64 + 1, w as u64) as usize,
        );
        for r in r0..r1 {
            for c in c0..c1 {
                segments[r * w + c] = seg;
            }
        }
    }
    let present: BTreeSet<u32> = segments.iter().copied().filter(|&s| s != 0).collect();
    let categories = present
        .into_iter()
        .map(|s| {
            let cat = if s == background {
                CATEGORIES[2 + rng.below(2) as usize].0
            } else {
                CATEGORIES[rng.below(4) as usize].0
            };
            (s, cat)
        })
        .collect();
    FixtureImage {
        id,
        height: h,
        width: w,
        segments,
        categories,
    }
}

/// Writes `images` random panoptic images (ids `100 + 7k`) under `dir`.
pub fn write_panoptic_fixture(dir: &Path, seed: u64, images: usize) -> PanopticFixture {
    let mut rng = SeededRng::new(seed);
    let png_dir = dir.join("pngs");
    std::fs::create_dir_all(&png_dir).unwrap();
    let images: Vec<FixtureImage> = (0..images)
        .map(|k| random_image(&mut rng, 100 + 7 * k as u64))
        .collect();
    let mut image_entries = Vec::new();
    let mut annotations = Vec::new();
    for im in &images {
        let file = format!("{:012}.png", im.id);
        write_png(&png_dir.join(&file), im.height, im.width, &im.segments);
        image_entries.push(
            json!({"id": im.id, "file_name": format!("{:012}.jpg", im.id), "height": im.height, "width": im.width}),
        );
        // reversed declaration order, so the converter cannot rely on it
        let segs: Vec<_> = im
            .categories
            .iter()
            .rev()
            .map(|(s, c)| json!({"id": s, "category_id": c, "iscrowd": 0}))
            .collect();
        annotations.push(json!({"image_id": im.id, "file_name": file, "segments_info": segs}));
    }
    let cats: Vec<_> = CATEGORIES
        .iter()
        .map(|(id, thing)| json!({"id": id, "name": format!("c{id}"), "isthing": u8::from(*thing)}))
        .collect();
    let doc = json!({"images": image_entries, "annotations": annotations, "categories": cats});
    let json_path = dir.join("panoptic.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    PanopticFixture {
        json_path,
        png_dir,
        images,
    }
}
