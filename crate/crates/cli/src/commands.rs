use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use entseg::annotation::{convert_panoptic, merge_datasets, presample, EntityDataset};
use entseg::evaluator::{
    ap_box, ap_entity, ap_entity_from_scored, ap_overlap_tolerant, box_ground_truth, pq, ApReport, BoxPrediction,
    EvalConfig, EvalMode, PqReport,
};
use entseg::loss::{run_loss_checks, LossCheck, LossConfig};
use entseg::mask::bbox_of;
use entseg::predictions::{load_resolved, save_resolved, PredictionFile};
use entseg::resolver::{nms_indices, resolve_overlaps, ResolvedPrediction, ScoredEntity};
use entseg::synthetic::{run_synthetic_benchmark, BenchSummary, SyntheticConfig};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{BenchArgs, ConvertArgs, EvalArgs, LosscheckArgs, MergeArgs, Metric, PresampleArgs, ResolveArgs};
use crate::error::{CliError, CliResult};
use crate::report::{ap_table, check_table, pq_table, Report};

/// Runs `f` on a dedicated pool of `threads` workers, or on the global pool
/// (one worker per available core) when `threads` is `None`.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> CliResult<T> + Send) -> CliResult<T> {
    match threads {
        None => f(),
        Some(0) => Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(f),
    }
}

fn entity_count(ds: &EntityDataset) -> usize {
    ds.images.iter().map(|im| im.entities.len()).sum()
}

pub fn cmd_convert(args: &ConvertArgs, out: &mut dyn Write) -> CliResult<EntityDataset> {
    let tag = match &args.source_dataset {
        Some(t) => t.clone(),
        None => args
            .panoptic_json
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "panoptic".into()),
    };
    let ds = convert_panoptic(&args.panoptic_json, &args.png_dir, &tag)?;
    ds.save(&args.out)?;
    writeln!(
        out,
        "converted {} images, {} entities -> {}",
        ds.len(),
        entity_count(&ds),
        args.out.display()
    )?;
    Ok(ds)
}

pub fn cmd_merge(args: &MergeArgs, out: &mut dyn Write) -> CliResult<EntityDataset> {
    if args.inputs.is_empty() {
        return Err(CliError::Usage("merge needs at least one --in dataset".into()));
    }
    let inputs = args
        .inputs
        .iter()
        .map(|p| EntityDataset::load(p))
        .collect::<Result<Vec<_>, _>>()?;
    let merged = merge_datasets(&inputs)?;
    merged.save(&args.out)?;
    for p in &merged.provenance {
        writeln!(out, "  {:<24} image id offset {}", p.source_dataset, p.image_id_offset)?;
    }
    writeln!(
        out,
        "merged {} datasets: {} images, {} entities -> {}",
        inputs.len(),
        merged.len(),
        entity_count(&merged),
        args.out.display()
    )?;
    Ok(merged)
}

pub fn cmd_presample(args: &PresampleArgs, out: &mut dyn Write) -> CliResult<EntityDataset> {
    let ds = EntityDataset::load(&args.input)?;
    let sampled = presample(&ds, args.n, args.seed)?;
    sampled.save(&args.out)?;
    writeln!(
        out,
        "sampled {} of {} images (seed {}) -> {}",
        sampled.len(),
        ds.len(),
        args.seed,
        args.out.display()
    )?;
    Ok(sampled)
}

/// Box NMS on mask extents, then the per-pixel argmax. `None` when the image
/// has no entities, since its size is then unknown.
pub fn resolve_image(entities: &[ScoredEntity], nms_iou: Option<f64>) -> entseg::Result<Option<ResolvedPrediction>> {
    let Some(first) = entities.first() else {
        return Ok(None);
    };
    let (h, w) = (first.mask.height(), first.mask.width());
    let kept: Vec<ScoredEntity> = match nms_iou {
        None => entities.to_vec(),
        Some(t) => {
            let boxes = entities
                .iter()
                .map(|e| bbox_of(&e.mask))
                .collect::<entseg::Result<Vec<_>>>()?;
            let scores: Vec<f64> = entities.iter().map(|e| e.score).collect();
            nms_indices(&boxes, &scores, t)?
                .into_iter()
                .map(|i| entities[i].clone())
                .collect()
        }
    };
    resolve_overlaps(&kept, h, w).map(Some)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResolveSummary {
    pub images: usize,
    pub entities_in: usize,
    pub entities_out: usize,
}

/// Scored JSON input goes through NMS (unless disabled) and the argmax.
/// A resolved directory is already non-overlapping and is only re-resolved,
/// so running the command on its own output reproduces it.
pub fn cmd_resolve(args: &ResolveArgs, out: &mut dyn Write) -> CliResult<ResolveSummary> {
    let resolved = with_threads(args.threads, || {
        let (inputs, nms) = if args.pred.is_dir() {
            let preds = load_resolved(&args.pred)?;
            let inputs: Vec<(u64, Vec<ScoredEntity>, (usize, usize))> = preds
                .iter()
                .map(|(&id, p)| (id, p.to_scored_entities(), (p.map.height(), p.map.width())))
                .collect();
            (inputs, None)
        } else {
            let file = PredictionFile::load(&args.pred)?;
            let inputs = file
                .scored_entities()?
                .into_iter()
                .map(|(id, e)| (id, e, (0, 0)))
                .collect();
            (inputs, (!args.no_nms).then_some(args.nms_iou))
        };
        let entities_in = inputs.iter().map(|x| x.1.len()).sum::<usize>();
        let results = inputs
            .par_iter()
            .map(|(id, entities, (h, w))| {
                let pred = if entities.is_empty() && *h > 0 {
                    Some(resolve_overlaps(&[], *h, *w)?)
                } else {
                    resolve_image(entities, nms)?
                };
                Ok(pred.map(|p| (*id, p)))
            })
            .collect::<Vec<entseg::Result<_>>>();
        let mut map = BTreeMap::new();
        for r in results {
            if let Some((id, p)) = r? {
                map.insert(id, p);
            }
        }
        Ok((map, entities_in))
    })?;
    let (preds, entities_in) = resolved;
    save_resolved(&args.out, &preds)?;
    let summary = ResolveSummary {
        images: preds.len(),
        entities_in,
        entities_out: preds.values().map(|p| p.scores.len() - 1).sum(),
    };
    writeln!(
        out,
        "resolved {} images: {} entities in, {} out -> {}",
        summary.images,
        summary.entities_in,
        summary.entities_out,
        args.out.display()
    )?;
    Ok(summary)
}

/// Inputs to one evaluation, independent of the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRunConfig {
    pub metric: Metric,
    /// Absent for PQ, which has no tunable protocol.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum EvalResult {
    Ap(ApReport),
    Pq(PqReport),
}

pub fn eval_config(args: &EvalArgs) -> CliResult<EvalRunConfig> {
    let mut cfg = EvalConfig::default();
    if let Some(t) = &args.iou_thresholds {
        cfg.iou_thresholds = t.clone();
    }
    if let Some(m) = args.max_dets {
        cfg.max_dets_per_image = m;
    }
    if let Some(r) = args.recall_points {
        cfg.recall_points = r;
    }
    if let Some(s) = args.small_max {
        cfg.size_buckets.small_max = s;
    }
    if let Some(l) = args.large_min {
        cfg.size_buckets.large_min = l;
    }
    if let Some(mode) = args.mode {
        cfg.mode = mode.into();
    }
    if cfg.mode != EvalMode::CategoryAgnostic && args.metric != Metric::Box {
        return Err(CliError::Usage("--mode applies to --metric box only".into()));
    }
    cfg.validate()?;
    let tunable = [
        args.iou_thresholds.is_some(),
        args.max_dets.is_some(),
        args.recall_points.is_some(),
        args.small_max.is_some(),
        args.large_min.is_some(),
    ];
    if args.metric == Metric::Pq {
        if tunable.iter().any(|&b| b) {
            return Err(CliError::Usage("--metric pq takes no AP protocol flags".into()));
        }
        return Ok(EvalRunConfig {
            metric: Metric::Pq,
            eval: None,
        });
    }
    Ok(EvalRunConfig {
        metric: args.metric,
        eval: Some(cfg),
    })
}

enum PredSource {
    Resolved(BTreeMap<u64, ResolvedPrediction>),
    Scored(PredictionFile),
}

fn load_predictions(path: &Path) -> entseg::Result<PredSource> {
    if path.is_dir() {
        load_resolved(path).map(PredSource::Resolved)
    } else {
        PredictionFile::load(path).map(PredSource::Scored)
    }
}

fn disjoint(file: &PredictionFile, gts: &EntityDataset) -> entseg::Result<BTreeMap<u64, ResolvedPrediction>> {
    let scored = file.scored_entities()?;
    let mut out = BTreeMap::new();
    for (id, entities) in scored {
        let gt = gts.image(id).ok_or_else(|| {
            entseg::Error::Format(format!("prediction for image {id} which is not in the ground truth"))
        })?;
        out.insert(
            id,
            ResolvedPrediction::from_disjoint(id, &entities, gt.height, gt.width)?,
        );
    }
    Ok(out)
}

fn resolved_boxes(preds: &BTreeMap<u64, ResolvedPrediction>, gts: &EntityDataset) -> Vec<Vec<BoxPrediction>> {
    gts.images
        .iter()
        .map(|im| match preds.get(&im.image_id) {
            None => Vec::new(),
            Some(p) => p
                .map
                .bboxes()
                .into_iter()
                .map(|(id, bbox)| BoxPrediction {
                    bbox,
                    score: p.scores.get(&id).copied().unwrap_or(0.0),
                    category_id: p.categories.get(&id).copied(),
                })
                .collect(),
        })
        .collect()
}

/// Evaluates predictions at `pred` (JSON file or resolved directory) against
/// the entity dataset at `gt`.
pub fn evaluate_paths(pred: &Path, gt: &Path, cfg: &EvalRunConfig) -> entseg::Result<EvalResult> {
    let gts = EntityDataset::load(gt)?;
    let preds = load_predictions(pred)?;
    let default_cfg = EvalConfig::default();
    let ecfg = cfg.eval.as_ref().unwrap_or(&default_cfg);
    Ok(match (cfg.metric, preds) {
        (Metric::Entity, PredSource::Resolved(p)) => EvalResult::Ap(ap_entity(&p, &gts, ecfg)?),
        (Metric::Entity, PredSource::Scored(f)) => {
            EvalResult::Ap(ap_entity_from_scored(&f.scored_entities()?, &gts, ecfg)?)
        }
        (Metric::Tolerant, PredSource::Resolved(p)) => {
            let scored = p.iter().map(|(&id, r)| (id, r.to_scored_entities())).collect();
            EvalResult::Ap(ap_overlap_tolerant(&scored, &gts, ecfg)?)
        }
        (Metric::Tolerant, PredSource::Scored(f)) => {
            EvalResult::Ap(ap_overlap_tolerant(&f.scored_entities()?, &gts, ecfg)?)
        }
        (Metric::Pq, PredSource::Resolved(p)) => EvalResult::Pq(pq(&p, &gts)?),
        (Metric::Pq, PredSource::Scored(f)) => EvalResult::Pq(pq(&disjoint(&f, &gts)?, &gts)?),
        (Metric::Box, source) => {
            let boxes = match source {
                PredSource::Resolved(p) => {
                    for id in p.keys() {
                        if gts.image(*id).is_none() {
                            return Err(entseg::Error::Format(format!(
                                "prediction for image {id} which is not in the ground truth"
                            )));
                        }
                    }
                    resolved_boxes(&p, &gts)
                }
                PredSource::Scored(f) => f.box_predictions(&gts)?,
            };
            EvalResult::Ap(ap_box(&boxes, &box_ground_truth(&gts), ecfg)?)
        }
    })
}

#[derive(Debug, Serialize)]
pub struct EvalInputs {
    pub pred: String,
    pub gt: String,
}

pub type EvalReport = Report<EvalRunConfig, EvalResult>;

pub fn cmd_eval(args: &EvalArgs, out: &mut dyn Write) -> CliResult<EvalReport> {
    let cfg = eval_config(args)?;
    let result = with_threads(args.threads, || Ok(evaluate_paths(&args.pred, &args.gt, &cfg)?))?;
    let title = match cfg.metric {
        Metric::Entity => "entity mask AP (non-overlapping)",
        Metric::Tolerant => "overlap-tolerant mask AP",
        Metric::Box => "box AP",
        Metric::Pq => "",
    };
    match &result {
        EvalResult::Ap(r) => write!(out, "{}", ap_table(title, r))?,
        EvalResult::Pq(r) => write!(out, "{}", pq_table(r))?,
    }
    let report = Report::new("eval", cfg, result)?;
    if let Some(path) = &args.out {
        report.write(path)?;
    }
    writeln!(out, "config hash {}", report.config_hash)?;
    Ok(report)
}

#[derive(Debug, Serialize)]
pub struct LosscheckConfig {
    pub seed: u64,
    pub fixtures: usize,
    pub dice_eps: f64,
    pub overlap_activation: entseg::loss::Activation,
    /// Path weights in column order 111, 110, 101, 100, 011, 010, 001.
    pub path_weights: [f64; 7],
}

pub fn cmd_losscheck(args: &LosscheckArgs, out: &mut dyn Write) -> CliResult<Vec<LossCheck>> {
    if args.fixtures == 0 {
        return Err(CliError::Usage("--fixtures must be at least 1".into()));
    }
    let cfg = match &args.config {
        Some(p) => LossConfig::load(p)?,
        None => LossConfig::default(),
    };
    let checks = run_loss_checks(&cfg, args.seed, args.fixtures);
    let weights = cfg.path_weights.columns();
    writeln!(
        out,
        "path weights (111 110 101 100 011 010 001): {}",
        weights.map(|w| w.to_string()).join(" ")
    )?;
    write!(out, "{}", check_table(&checks))?;
    let failed: Vec<String> = checks.iter().filter(|c| !c.passed).map(|c| c.name.to_owned()).collect();
    let config = LosscheckConfig {
        seed: args.seed,
        fixtures: args.fixtures,
        dice_eps: cfg.dice_eps,
        overlap_activation: cfg.overlap_activation,
        path_weights: weights,
    };
    if let Some(path) = &args.out {
        Report::new("losscheck", config, &checks)?.write(path)?;
    }
    if failed.is_empty() {
        Ok(checks)
    } else {
        Err(CliError::ChecksFailed(failed))
    }
}

#[derive(Debug, Serialize)]
pub struct BenchConfig {
    pub synthetic: SyntheticConfig,
    pub eval: EvalConfig,
}

#[derive(Debug, Serialize)]
pub struct BenchResult {
    pub summary: BenchSummary,
    pub threads: usize,
    pub seconds: f64,
    pub images_per_second: f64,
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult<BenchResult> {
    if args.images == 0 {
        return Err(CliError::Usage("--images must be at least 1".into()));
    }
    let synthetic = SyntheticConfig {
        images: args.images,
        height: args.height,
        width: args.width,
        entities: args.entities,
        seed: args.seed,
    };
    synthetic.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let eval = EvalConfig::default();
    let result = with_threads(args.threads, || {
        let start = Instant::now();
        let summary = run_synthetic_benchmark(&synthetic, &eval)?;
        let seconds = start.elapsed().as_secs_f64();
        Ok(BenchResult {
            images_per_second: summary.images as f64 / seconds.max(f64::MIN_POSITIVE),
            summary,
            threads: rayon::current_num_threads(),
            seconds,
        })
    })?;
    writeln!(
        out,
        "{} images of {}x{}, {} GT / {} predicted entities, {} threads",
        result.summary.images,
        args.width,
        args.height,
        result.summary.gt_entities,
        result.summary.pred_entities,
        result.threads
    )?;
    writeln!(
        out,
        "{:.3} s, {:.1} images/s, {:.1} Mpx/s",
        result.seconds,
        result.images_per_second,
        result.summary.pixels as f64 / 1e6 / result.seconds.max(f64::MIN_POSITIVE)
    )?;
    write!(
        out,
        "{}",
        ap_table("entity mask AP (synthetic)", &result.summary.report)
    )?;
    let report = Report::new("bench", BenchConfig { synthetic, eval }, result)?;
    if let Some(path) = &args.out {
        report.write(path)?;
    }
    Ok(report.result)
}
