//! Kernel-bank path losses, representative kernels and the total objective.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

use super::dice::dice_unchecked;
use super::head::{mask_head_forward, MaskHeadWeights, PathSpec};
use super::overlap::Activation;
use super::DenseMap;

const DEFAULT_CONFIG: &str = include_str!("../../configs/kernel_bank.toml");

/// One nonnegative weight per path.
///
/// Tuples are written in column order `111, 110, 101, 100, 011, 010, 001`,
/// so `(1, 0, 0, 0, 0, 0, 0)` weights only the all-dynamic path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathWeights {
    by_index: [f64; 7],
}

impl PathWeights {
    pub fn from_columns(columns: [f64; 7]) -> Result<Self> {
        let mut by_index = [0.0; 7];
        for (j, &w) in columns.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!("path weight {w} must be finite and nonnegative")));
            }
            by_index[6 - j] = w;
        }
        Ok(Self { by_index })
    }

    pub fn columns(&self) -> [f64; 7] {
        std::array::from_fn(|j| self.by_index[6 - j])
    }

    pub fn get(&self, path: PathSpec) -> f64 {
        self.by_index[usize::from(path.index()) - 1]
    }

    /// Paths in column order with their weights.
    pub fn iter(&self) -> impl Iterator<Item = (PathSpec, f64)> + '_ {
        (1..=7u8)
            .rev()
            .map(|r| PathSpec::new(r).expect("1..=7 is a valid path index"))
            .map(|p| (p, self.get(p)))
    }

    fn from_codes(map: &BTreeMap<String, f64>) -> Result<Self> {
        let mut by_index = [None; 7];
        for (code, &w) in map {
            let path = PathSpec::from_code(code)?;
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "path {code}: weight {w} must be finite and nonnegative"
                )));
            }
            by_index[usize::from(path.index()) - 1] = Some(w);
        }
        let mut out = [0.0; 7];
        for (i, w) in by_index.iter().enumerate() {
            out[i] = w.ok_or_else(|| {
                let p = PathSpec::new(i as u8 + 1).expect("valid index");
                Error::Config(format!("path_weights is missing path {p}"))
            })?;
        }
        Ok(Self { by_index: out })
    }

    fn to_codes(self) -> BTreeMap<String, f64> {
        self.iter().map(|(p, w)| (p.code(), w)).collect()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LossConfigToml {
    dice_eps: f64,
    overlap_activation: Activation,
    path_weights: BTreeMap<String, f64>,
}

/// Loss-reference settings, loaded from TOML.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub path_weights: PathWeights,
    pub dice_eps: f64,
    pub overlap_activation: Activation,
}

impl LossConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: LossConfigToml = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if !(raw.dice_eps > 0.0) || !raw.dice_eps.is_finite() {
            return Err(Error::Config(format!(
                "dice_eps must be positive, got {}",
                raw.dice_eps
            )));
        }
        Ok(Self {
            path_weights: PathWeights::from_codes(&raw.path_weights)?,
            dice_eps: raw.dice_eps,
            overlap_activation: raw.overlap_activation,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        let raw = LossConfigToml {
            dice_eps: self.dice_eps,
            overlap_activation: self.overlap_activation,
            path_weights: self.path_weights.to_codes(),
        };
        toml::to_string(&raw).expect("loss config serializes")
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self::from_toml_str(DEFAULT_CONFIG).expect("bundled loss config is valid")
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn check_target(features: &DenseMap, target: &BinaryMask) -> Result<()> {
    if features.height() != target.height() || features.width() != target.width() {
        return Err(Error::Shape(format!(
            "features {}x{} vs target {}x{}",
            features.height(),
            features.width(),
            target.height(),
            target.width()
        )));
    }
    Ok(())
}

/// Dice loss of one path: forward, logistic squashing, Dice against `target`.
pub fn single_path_loss(
    features: &DenseMap,
    dynamic: &MaskHeadWeights,
    static_: &MaskHeadWeights,
    target: &BinaryMask,
    path: PathSpec,
    eps: f64,
) -> Result<f64> {
    check_target(features, target)?;
    if !(eps > 0.0) {
        return Err(Error::Domain(format!("dice epsilon must be positive, got {eps}")));
    }
    let mut probs = mask_head_forward(features, dynamic, static_, path)?;
    for v in probs.values_mut() {
        *v = sigmoid(*v);
    }
    Ok(dice_unchecked(&probs, target, eps))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PathLoss {
    pub path: PathSpec,
    pub weight: f64,
    pub dice: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BankLoss {
    pub total: f64,
    /// Paths with positive weight, in column order.
    pub per_path: Vec<PathLoss>,
}

/// `Σ_r λ_r · dice_r` over the paths with positive weight.
pub fn kernel_bank_loss(
    features: &DenseMap,
    dynamic: &MaskHeadWeights,
    static_: &MaskHeadWeights,
    target: &BinaryMask,
    weights: &PathWeights,
    eps: f64,
) -> Result<BankLoss> {
    let mut per_path = Vec::new();
    let mut total = 0.0;
    for (path, weight) in weights.iter() {
        if weight == 0.0 {
            continue;
        }
        let dice = single_path_loss(features, dynamic, static_, target, path, eps)?;
        total += weight * dice;
        per_path.push(PathLoss { path, weight, dice });
    }
    Ok(BankLoss { total, per_path })
}

/// Flat kernels and the entity (`1..=N`) each one belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub kernels: Vec<Vec<f64>>,
    pub assignment: Vec<usize>,
}

/// Per-entity mean of the assigned kernels; entry `n - 1` belongs to entity `n`.
///
/// Each coordinate is summed in sorted order so the result does not depend on
/// kernel order.
pub fn representative_kernels(set: &KernelSet) -> Result<Vec<Vec<f64>>> {
    if set.kernels.len() != set.assignment.len() {
        return Err(Error::Assignment(format!(
            "{} kernels but {} assignments",
            set.kernels.len(),
            set.assignment.len()
        )));
    }
    let dim = match set.kernels.first() {
        Some(k) => k.len(),
        None => return Ok(Vec::new()),
    };
    if set.kernels.iter().any(|k| k.len() != dim) {
        return Err(Error::Assignment("kernels have different lengths".into()));
    }
    if set.assignment.contains(&0) {
        return Err(Error::Assignment("entity indices start at 1".into()));
    }
    let n = *set.assignment.iter().max().expect("non-empty");
    let mut members: Vec<Vec<&[f64]>> = vec![Vec::new(); n];
    for (k, &e) in set.kernels.iter().zip(&set.assignment) {
        members[e - 1].push(k);
    }
    let mut out = Vec::with_capacity(n);
    let mut column = Vec::new();
    for (i, group) in members.iter().enumerate() {
        if group.is_empty() {
            return Err(Error::Assignment(format!("entity {} has no kernels", i + 1)));
        }
        let count = group.len() as f64;
        let mean = (0..dim)
            .map(|d| {
                column.clear();
                column.extend(group.iter().map(|k| k[d]));
                column.sort_by(f64::total_cmp);
                column.iter().sum::<f64>() / count
            })
            .collect();
        out.push(mean);
    }
    Ok(out)
}

/// One logit channel per representative kernel, each from the all-dynamic path.
pub fn representative_logits(
    features: &DenseMap,
    representatives: &[Vec<f64>],
    layout: [(usize, usize); 3],
) -> Result<DenseMap> {
    let maps = representatives
        .iter()
        .map(|theta| {
            let head = MaskHeadWeights::from_flat(layout, theta)?;
            mask_head_forward(features, &head, &head, PathSpec::ALL_DYNAMIC)
        })
        .collect::<Result<Vec<_>>>()?;
    DenseMap::stack(&maps)
}

/// `L_det + L_o + L_R`, with the detection term supplied by the caller.
pub fn total_loss(det_loss: f64, o_loss: f64, r_loss: f64) -> Result<f64> {
    if !(det_loss.is_finite() && o_loss.is_finite() && r_loss.is_finite()) {
        return Err(Error::Domain("loss terms must be finite".into()));
    }
    Ok(det_loss + o_loss + r_loss)
}
