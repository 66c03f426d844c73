use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::DenseMap;

pub const DEFAULT_DICE_EPS: f64 = 1e-5;

/// Numerator `2·Σpy + ε` and denominator `Σp² + Σy² + ε` over the pixels
/// where `include` holds.
pub(crate) fn dice_terms(
    probs: impl Iterator<Item = f64>,
    target: impl Iterator<Item = bool>,
    include: impl Iterator<Item = bool>,
    eps: f64,
) -> (f64, f64) {
    let (mut py, mut pp, mut yy) = (0.0, 0.0, 0.0);
    for ((p, y), keep) in probs.zip(target).zip(include) {
        if !keep {
            continue;
        }
        pp += p * p;
        if y {
            py += p;
            yy += 1.0;
        }
    }
    (2.0 * py + eps, pp + yy + eps)
}

/// `∂(1 - N/D)/∂p = (2pN - 2yD) / D²`.
#[inline]
pub(crate) fn dice_partial(p: f64, y: bool, num: f64, den: f64) -> f64 {
    let y = if y { 1.0 } else { 0.0 };
    (2.0 * p * num - 2.0 * y * den) / (den * den)
}

fn check(probs: &DenseMap, target: &BinaryMask, eps: f64) -> Result<()> {
    if probs.channels() != 1 || probs.height() != target.height() || probs.width() != target.width() {
        return Err(Error::Shape(format!(
            "probabilities {}x{}x{} vs target {}x{}",
            probs.height(),
            probs.width(),
            probs.channels(),
            target.height(),
            target.width()
        )));
    }
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("dice epsilon must be positive, got {eps}")));
    }
    if probs.values().iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::Domain("probabilities must lie in [0, 1]".into()));
    }
    Ok(())
}

/// Squared-denominator Dice loss `1 - (2Σpy + ε) / (Σp² + Σy² + ε)`.
pub fn dice_loss(probs: &DenseMap, target: &BinaryMask, eps: f64) -> Result<f64> {
    check(probs, target, eps)?;
    Ok(dice_unchecked(probs, target, eps))
}

pub(crate) fn dice_unchecked(probs: &DenseMap, target: &BinaryMask, eps: f64) -> f64 {
    let (num, den) = dice_terms(
        probs.values().iter().copied(),
        target.bits().iter().copied(),
        std::iter::repeat(true),
        eps,
    );
    1.0 - num / den
}

/// Analytic gradient of [`dice_loss`] with respect to the probabilities.
pub fn dice_loss_grad(probs: &DenseMap, target: &BinaryMask, eps: f64) -> Result<DenseMap> {
    check(probs, target, eps)?;
    Ok(dice_grad_unchecked(probs, target, eps))
}

pub(crate) fn dice_grad_unchecked(probs: &DenseMap, target: &BinaryMask, eps: f64) -> DenseMap {
    let (num, den) = dice_terms(
        probs.values().iter().copied(),
        target.bits().iter().copied(),
        std::iter::repeat(true),
        eps,
    );
    let grad = probs
        .values()
        .iter()
        .zip(target.bits())
        .map(|(&p, &y)| dice_partial(p, y, num, den))
        .collect();
    DenseMap::from_parts_unchecked(probs.height(), probs.width(), 1, grad)
}
