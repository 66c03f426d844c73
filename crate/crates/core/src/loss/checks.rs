//! Randomized self-checks of the loss references.

use serde::Serialize;

use crate::mask::{BinaryMask, EntityMap};
use crate::rng::SeededRng;

use super::bank::{kernel_bank_loss, representative_kernels, single_path_loss, KernelSet, LossConfig};
use super::gradcheck::{grad_check, DiceObjective, OverlapObjective};
use super::head::{Conv1x1, MaskHeadWeights};
use super::overlap::softmax_channels;
use super::DenseMap;

pub const GRAD_STEP: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-4;
pub const EXACT_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossCheck {
    pub name: &'static str,
    pub fixtures: usize,
    /// Worst observed discrepancy.
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
}

fn uniform(rng: &mut SeededRng, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.unit()
}

fn random_map(rng: &mut SeededRng, h: usize, w: usize, c: usize, lo: f64, hi: f64) -> DenseMap {
    let values = (0..h * w * c).map(|_| uniform(rng, lo, hi)).collect();
    DenseMap::new(h, w, c, values).expect("positive dimensions and finite values")
}

fn random_size(rng: &mut SeededRng) -> (usize, usize) {
    (rng.range_inclusive(2, 8) as usize, rng.range_inclusive(2, 8) as usize)
}

fn random_target(rng: &mut SeededRng, h: usize, w: usize) -> EntityMap {
    let k = rng.range_inclusive(1, 4) as u32;
    let mut ids: Vec<u32> = (0..h * w)
        .map(|_| {
            if rng.bernoulli(0.15) {
                0
            } else {
                1 + rng.below(u64::from(k)) as u32
            }
        })
        .collect();
    if ids.iter().all(|&v| v == 0) {
        ids[0] = 1;
    }
    EntityMap::new(h, w, ids).expect("matching size")
}

fn random_conv(rng: &mut SeededRng, i: usize, o: usize) -> Conv1x1 {
    let w = (0..i * o).map(|_| uniform(rng, -1.5, 1.5)).collect();
    let b = (0..o).map(|_| uniform(rng, -0.5, 0.5)).collect();
    Conv1x1::new(i, o, w, b).expect("sizes agree")
}

fn random_head(rng: &mut SeededRng, c: usize, hidden: usize) -> MaskHeadWeights {
    MaskHeadWeights::new([
        random_conv(rng, c, hidden),
        random_conv(rng, hidden, hidden),
        random_conv(rng, hidden, 1),
    ])
}

/// Features with `extra` random channels followed by the two relative
/// coordinate channels.
fn features_with_coords(rng: &mut SeededRng, h: usize, w: usize, extra: usize) -> DenseMap {
    let c = extra + 2;
    let mut values = Vec::with_capacity(h * w * c);
    let (cy, cx) = (rng.below(h as u64) as f64, rng.below(w as u64) as f64);
    for r in 0..h {
        for col in 0..w {
            for _ in 0..extra {
                values.push(uniform(rng, -1.0, 1.0));
            }
            values.push((r as f64 - cy) / h as f64);
            values.push((col as f64 - cx) / w as f64);
        }
    }
    DenseMap::new(h, w, c, values).expect("sizes agree")
}

fn finish(name: &'static str, fixtures: usize, worst: f64, tolerance: f64) -> LossCheck {
    LossCheck {
        name,
        fixtures,
        worst,
        tolerance,
        passed: worst <= tolerance,
    }
}

/// Runs the gradient, decomposition, softmax and representative-kernel checks
/// on `fixtures` random fixtures each.
pub fn run_loss_checks(cfg: &LossConfig, seed: u64, fixtures: usize) -> Vec<LossCheck> {
    let mut out = Vec::new();

    let mut rng = SeededRng::with_stream(seed, 0);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let (h, w) = random_size(&mut rng);
        let p = random_map(&mut rng, h, w, 1, 0.05, 0.95);
        let bits = (0..h * w).map(|_| rng.bernoulli(0.5)).collect();
        let y = BinaryMask::new(h, w, bits).expect("sizes agree");
        let f = DiceObjective {
            target: &y,
            eps: cfg.dice_eps,
        };
        worst = worst.max(grad_check(&f, &p, GRAD_STEP));
    }
    out.push(finish("dice_gradient", fixtures, worst, GRAD_TOLERANCE));

    let mut rng = SeededRng::with_stream(seed, 1);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let (h, w) = random_size(&mut rng);
        let target = random_target(&mut rng, h, w);
        let k = target.entity_ids().len();
        let z = random_map(&mut rng, h, w, k, -3.0, 3.0);
        let f = OverlapObjective {
            target: &target,
            activation: cfg.overlap_activation,
            eps: cfg.dice_eps,
        };
        worst = worst.max(grad_check(&f, &z, GRAD_STEP));
    }
    out.push(finish("overlap_gradient", fixtures, worst, GRAD_TOLERANCE));

    let mut rng = SeededRng::with_stream(seed, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let (h, w) = random_size(&mut rng);
        let extra = rng.range_inclusive(1, 3) as usize;
        let hidden = rng.range_inclusive(1, 4) as usize;
        let features = features_with_coords(&mut rng, h, w, extra);
        let dynamic = random_head(&mut rng, extra + 2, hidden);
        let static_ = random_head(&mut rng, extra + 2, hidden);
        let bits = (0..h * w).map(|_| rng.bernoulli(0.4)).collect();
        let y = BinaryMask::new(h, w, bits).expect("sizes agree");
        let bank = kernel_bank_loss(&features, &dynamic, &static_, &y, &cfg.path_weights, cfg.dice_eps)
            .expect("fixture shapes agree");
        let mut sum = 0.0;
        for (path, weight) in cfg.path_weights.iter() {
            let d =
                single_path_loss(&features, &dynamic, &static_, &y, path, cfg.dice_eps).expect("fixture shapes agree");
            sum += weight * d;
        }
        worst = worst.max((bank.total - sum).abs());
    }
    out.push(finish("bank_decomposition", fixtures, worst, EXACT_TOLERANCE));

    let mut rng = SeededRng::with_stream(seed, 3);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let (h, w) = random_size(&mut rng);
        let k = rng.range_inclusive(1, 6) as usize;
        let z = random_map(&mut rng, h, w, k, -30.0, 30.0);
        let q = softmax_channels(&z);
        for p in 0..q.pixels() {
            worst = worst.max((q.pixel(p).iter().sum::<f64>() - 1.0).abs());
        }
    }
    out.push(finish("softmax_sum", fixtures, worst, EXACT_TOLERANCE));

    let mut rng = SeededRng::with_stream(seed, 4);
    let mut worst: f64 = 0.0;
    for _ in 0..fixtures {
        let n = rng.range_inclusive(1, 4) as usize;
        let dim = rng.range_inclusive(1, 6) as usize;
        let mut assignment: Vec<usize> = (1..=n).collect();
        for _ in 0..rng.below(6) {
            assignment.push(1 + rng.below(n as u64) as usize);
        }
        let kernels: Vec<Vec<f64>> = assignment
            .iter()
            .map(|_| (0..dim).map(|_| uniform(&mut rng, -2.0, 2.0)).collect())
            .collect();
        let set = KernelSet { kernels, assignment };
        let reps = representative_kernels(&set).expect("every entity has a kernel");
        let mut order: Vec<usize> = (0..set.kernels.len()).collect();
        rng.shuffle(&mut order);
        let shuffled = KernelSet {
            kernels: order.iter().map(|&i| set.kernels[i].clone()).collect(),
            assignment: order.iter().map(|&i| set.assignment[i]).collect(),
        };
        let again = representative_kernels(&shuffled).expect("same groups");
        let idem = representative_kernels(&KernelSet {
            kernels: reps.clone(),
            assignment: (1..=n).collect(),
        })
        .expect("one kernel per entity");
        for ((a, b), c) in reps
            .iter()
            .flatten()
            .zip(again.iter().flatten())
            .zip(idem.iter().flatten())
        {
            worst = worst.max((a - b).abs()).max((a - c).abs());
        }
    }
    out.push(finish("representative_mean", fixtures, worst, 0.0));

    out
}
