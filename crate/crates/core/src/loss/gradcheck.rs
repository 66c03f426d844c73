//! Central finite-difference checks of analytic gradients.

use crate::mask::{BinaryMask, EntityMap};

use super::dice::{dice_grad_unchecked, dice_unchecked};
use super::overlap::{overlap_suppression_grad, overlap_value_unchecked, Activation};
use super::DenseMap;

/// Gradient scale below which differences are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-8;

/// A scalar function of a dense map with a hand-written gradient.
pub trait Differentiable {
    fn value(&self, x: &DenseMap) -> f64;
    fn gradient(&self, x: &DenseMap) -> DenseMap;
}

/// Dice loss against a fixed target.
pub struct DiceObjective<'a> {
    pub target: &'a BinaryMask,
    pub eps: f64,
}

impl Differentiable for DiceObjective<'_> {
    fn value(&self, x: &DenseMap) -> f64 {
        dice_unchecked(x, self.target, self.eps)
    }

    fn gradient(&self, x: &DenseMap) -> DenseMap {
        dice_grad_unchecked(x, self.target, self.eps)
    }
}

/// Overlap-suppression loss against a fixed target, as a function of the logits.
pub struct OverlapObjective<'a> {
    pub target: &'a EntityMap,
    pub activation: Activation,
    pub eps: f64,
}

impl Differentiable for OverlapObjective<'_> {
    fn value(&self, x: &DenseMap) -> f64 {
        overlap_value_unchecked(x, self.target, self.activation, self.eps)
    }

    fn gradient(&self, x: &DenseMap) -> DenseMap {
        overlap_suppression_grad(x, self.target, self.activation, self.eps)
            .expect("objective inputs were validated by the caller")
    }
}

/// Relative discrepancy `|a - b| / max(|a|, |b|, GRAD_FLOOR)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    let diff = (a - b).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / a.abs().max(b.abs()).max(GRAD_FLOOR)
}

/// Largest coordinate discrepancy between the analytic gradient of `f` at
/// `point` and central differences with the given step, relative to the
/// larger max-norm of the two gradients.
pub fn grad_check(f: &dyn Differentiable, point: &DenseMap, step: f64) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    let analytic = f.gradient(point);
    let mut x = point.clone();
    let mut numeric = Vec::with_capacity(x.values().len());
    for i in 0..x.values().len() {
        let orig = x.values()[i];
        x.values_mut()[i] = orig + step;
        let up = f.value(&x);
        x.values_mut()[i] = orig - step;
        let down = f.value(&x);
        x.values_mut()[i] = orig;
        numeric.push((up - down) / (2.0 * step));
    }
    let norm = |v: &[f64]| v.iter().fold(0.0f64, |m, g| m.max(g.abs()));
    let diff = analytic
        .values()
        .iter()
        .zip(&numeric)
        .fold(0.0f64, |m, (a, n)| m.max((a - n).abs()));
    relative_error_scaled(diff, norm(analytic.values()).max(norm(&numeric)))
}

fn relative_error_scaled(diff: f64, scale: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        diff / scale.max(GRAD_FLOOR)
    }
}
