//! Overlap-suppression loss over per-entity logit channels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::EntityMap;

use super::bank::sigmoid;
use super::dice::{dice_partial, dice_terms};
use super::DenseMap;

/// Squashing applied across the entity channels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Softmax,
    Sigmoid,
    /// Half softmax loss plus half sigmoid loss.
    Mixed,
}

/// Softmax across channels at every pixel, max-shifted.
pub fn softmax_channels(logits: &DenseMap) -> DenseMap {
    let k = logits.channels();
    let mut out = Vec::with_capacity(logits.values().len());
    for p in 0..logits.pixels() {
        let z = logits.pixel(p);
        let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut sum = 0.0;
        for &v in z {
            let e = (v - m).exp();
            sum += e;
            out.push(e);
        }
        for v in &mut out[start..start + k] {
            *v /= sum;
        }
    }
    DenseMap::from_parts_unchecked(logits.height(), logits.width(), k, out)
}

fn squash(logits: &DenseMap, act: Activation) -> DenseMap {
    match act {
        Activation::Softmax | Activation::Mixed => softmax_channels(logits),
        Activation::Sigmoid => {
            let values = logits.values().iter().map(|&v| sigmoid(v)).collect();
            DenseMap::from_parts_unchecked(logits.height(), logits.width(), logits.channels(), values)
        }
    }
}

struct Prepared {
    /// Channel index per pixel, `None` on void.
    labels: Vec<Option<usize>>,
    channels: usize,
}

fn prepare(logits: &DenseMap, target: &EntityMap) -> Result<Option<Prepared>> {
    if logits.height() != target.height() || logits.width() != target.width() {
        return Err(Error::Shape(format!(
            "logits {}x{} vs target {}x{}",
            logits.height(),
            logits.width(),
            target.height(),
            target.width()
        )));
    }
    let ids = target.entity_ids();
    if ids.is_empty() {
        return Ok(None);
    }
    if logits.channels() != ids.len() {
        return Err(Error::Shape(format!(
            "{} logit channels for {} ground-truth entities",
            logits.channels(),
            ids.len()
        )));
    }
    let labels = target
        .ids()
        .iter()
        .map(|&id| if id == 0 { None } else { ids.binary_search(&id).ok() })
        .collect();
    Ok(Some(Prepared {
        labels,
        channels: ids.len(),
    }))
}

/// Per-channel Dice numerator and denominator over non-void pixels.
fn channel_terms(q: &DenseMap, prep: &Prepared, eps: f64) -> Vec<(f64, f64)> {
    (0..prep.channels)
        .map(|c| {
            dice_terms(
                (0..q.pixels()).map(|p| q.pixel(p)[c]),
                prep.labels.iter().map(|l| *l == Some(c)),
                prep.labels.iter().map(Option::is_some),
                eps,
            )
        })
        .collect()
}

fn loss_single(logits: &DenseMap, prep: &Prepared, act: Activation, eps: f64) -> f64 {
    let q = squash(logits, act);
    let terms = channel_terms(&q, prep, eps);
    terms.iter().map(|(n, d)| 1.0 - n / d).sum::<f64>() / prep.channels as f64
}

fn grad_single(logits: &DenseMap, prep: &Prepared, act: Activation, eps: f64, scale: f64, out: &mut [f64]) {
    let q = squash(logits, act);
    let terms = channel_terms(&q, prep, eps);
    let k = prep.channels;
    let inv_k = scale / k as f64;
    let mut g = vec![0.0; k];
    for (p, label) in prep.labels.iter().enumerate() {
        if label.is_none() {
            continue;
        }
        let qp = q.pixel(p);
        for c in 0..k {
            g[c] = inv_k * dice_partial(qp[c], *label == Some(c), terms[c].0, terms[c].1);
        }
        let slot = &mut out[p * k..(p + 1) * k];
        match act {
            Activation::Sigmoid => {
                for c in 0..k {
                    slot[c] += g[c] * qp[c] * (1.0 - qp[c]);
                }
            }
            _ => {
                let dot: f64 = g.iter().zip(qp).map(|(a, b)| a * b).sum();
                for c in 0..k {
                    slot[c] += qp[c] * (g[c] - dot);
                }
            }
        }
    }
}

/// Mean over entities of the Dice between each squashed channel and that
/// entity's indicator. Channel `k` belongs to the `k`-th smallest target id.
/// Void pixels are left out of every sum; a target with no entities has loss 0.
pub fn overlap_suppression_loss(logits: &DenseMap, target: &EntityMap, act: Activation, eps: f64) -> Result<f64> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("dice epsilon must be positive, got {eps}")));
    }
    let Some(prep) = prepare(logits, target)? else {
        return Ok(0.0);
    };
    Ok(overlap_value(logits, &prep, act, eps))
}

fn overlap_value(logits: &DenseMap, prep: &Prepared, act: Activation, eps: f64) -> f64 {
    match act {
        Activation::Mixed => {
            0.5 * loss_single(logits, prep, Activation::Softmax, eps)
                + 0.5 * loss_single(logits, prep, Activation::Sigmoid, eps)
        }
        a => loss_single(logits, prep, a, eps),
    }
}

/// Analytic gradient of [`overlap_suppression_loss`] with respect to the logits.
pub fn overlap_suppression_grad(logits: &DenseMap, target: &EntityMap, act: Activation, eps: f64) -> Result<DenseMap> {
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("dice epsilon must be positive, got {eps}")));
    }
    let mut out = vec![0.0; logits.values().len()];
    if let Some(prep) = prepare(logits, target)? {
        match act {
            Activation::Mixed => {
                grad_single(logits, &prep, Activation::Softmax, eps, 0.5, &mut out);
                grad_single(logits, &prep, Activation::Sigmoid, eps, 0.5, &mut out);
            }
            a => grad_single(logits, &prep, a, eps, 1.0, &mut out),
        }
    }
    Ok(DenseMap::from_parts_unchecked(
        logits.height(),
        logits.width(),
        logits.channels(),
        out,
    ))
}

/// Loss value with inputs already validated; used by finite differencing.
pub(crate) fn overlap_value_unchecked(logits: &DenseMap, target: &EntityMap, act: Activation, eps: f64) -> f64 {
    match prepare(logits, target) {
        Ok(Some(prep)) => overlap_value(logits, &prep, act, eps),
        _ => 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_two_entities_is_one_third() {
        let target = EntityMap::new(2, 4, vec![1, 1, 2, 2, 1, 1, 2, 2]).unwrap();
        let logits = DenseMap::filled(2, 4, 2, 0.0).unwrap();
        let l = overlap_suppression_loss(&logits, &target, Activation::Softmax, 1e-5).unwrap();
        let a = 4.0;
        let eps = 1e-5;
        let each = 1.0 - (2.0 * 0.5 * a + eps) / (0.25 * 2.0 * a + a + eps);
        assert!((l - each).abs() < 1e-15);
        assert!((l - 1.0 / 3.0).abs() < 1e-5);
    }

    #[test]
    fn saturated_single_entity() {
        let target = EntityMap::new(1, 3, vec![4, 4, 0]).unwrap();
        let logits = DenseMap::filled(1, 3, 1, 50.0).unwrap();
        for act in [Activation::Softmax, Activation::Sigmoid, Activation::Mixed] {
            let l = overlap_suppression_loss(&logits, &target, act, 1e-5).unwrap();
            assert!(l.abs() < 1e-10, "{act:?}: {l}");
        }
    }

    #[test]
    fn fully_void_target_is_zero() {
        let target = EntityMap::zeros(2, 2).unwrap();
        let logits = DenseMap::new(2, 2, 3, (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(
            overlap_suppression_loss(&logits, &target, Activation::Softmax, 1e-5).unwrap(),
            0.0
        );
        let g = overlap_suppression_grad(&logits, &target, Activation::Softmax, 1e-5).unwrap();
        assert!(g.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn channel_count_must_match() {
        let target = EntityMap::new(1, 2, vec![1, 2]).unwrap();
        let logits = DenseMap::filled(1, 2, 3, 0.0).unwrap();
        assert!(matches!(
            overlap_suppression_loss(&logits, &target, Activation::Softmax, 1e-5),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = DenseMap::new(1, 2, 3, vec![1000.0, -3.0, 2.0, 0.1, 0.2, 0.3]).unwrap();
        let q = softmax_channels(&logits);
        for p in 0..2 {
            assert!((q.pixel(p).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn void_pixels_do_not_matter() {
        let target = EntityMap::new(1, 3, vec![1, 2, 0]).unwrap();
        let a = DenseMap::new(1, 3, 2, vec![0.5, -0.5, 1.0, 2.0, 9.0, -9.0]).unwrap();
        let b = DenseMap::new(1, 3, 2, vec![0.5, -0.5, 1.0, 2.0, -4.0, 4.0]).unwrap();
        let la = overlap_suppression_loss(&a, &target, Activation::Mixed, 1e-5).unwrap();
        let lb = overlap_suppression_loss(&b, &target, Activation::Mixed, 1e-5).unwrap();
        assert_eq!(la, lb);
    }
}
