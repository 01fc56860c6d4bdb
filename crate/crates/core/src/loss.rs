//! Boundary loss, partial cross-entropy and their weighted combination.
//!
//! Probabilities are inputs; nothing here computes a softmax. Double sums use
//! pairwise summation in a fixed order, so results are deterministic.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{LabelVolume, ProbabilityVolume, SignedDistanceMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the boundary loss in the combined objective.
    pub alpha: f64,
    /// Sum over foreground classes only (class 0 excluded).
    pub foreground_only: bool,
    /// Lower clamp applied to probabilities inside the log.
    pub ce_clamp_eps: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            foreground_only: true,
            ce_clamp_eps: 1e-10,
        }
    }
}

impl LossConfig {
    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::InvalidConfig(format!("alpha {} must be ≥ 0", self.alpha)));
        }
        if !(self.ce_clamp_eps > 0.0 && self.ce_clamp_eps < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "log clamp {} must lie in (0, 1)",
                self.ce_clamp_eps
            )));
        }
        Ok(())
    }

    fn first_class(&self) -> u32 {
        u32::from(self.foreground_only)
    }
}

const PAIRWISE_BLOCK: usize = 64;

/// Pairwise summation of `term(i)` for `i` in `0..n`.
pub(crate) fn pairwise_sum(n: usize, term: &impl Fn(usize) -> f64) -> f64 {
    fn go(lo: usize, hi: usize, term: &impl Fn(usize) -> f64) -> f64 {
        if hi - lo <= PAIRWISE_BLOCK {
            return (lo..hi).map(term).sum();
        }
        let mid = lo + (hi - lo) / 2;
        go(lo, mid, term) + go(mid, hi, term)
    }
    go(0, n, term)
}

fn check_maps(probs: &ProbabilityVolume, maps: &[SignedDistanceMap], cfg: &LossConfig) -> Result<()> {
    cfg.validate()?;
    let first = cfg.first_class();
    let expected = probs.num_classes() as u32 - first;
    if maps.len() != expected as usize {
        return Err(Error::ShapeMismatch(format!(
            "expected {expected} signed maps, got {}",
            maps.len()
        )));
    }
    for (j, map) in maps.iter().enumerate() {
        let k = first + j as u32;
        if map.class_id() != k {
            return Err(Error::ShapeMismatch(format!(
                "map {j} is for class {} but class {k} was expected",
                map.class_id()
            )));
        }
        map.shape().ensure_same(probs.shape(), "signed map vs probabilities")?;
        check_finite(map)?;
    }
    Ok(())
}

fn check_finite(map: &SignedDistanceMap) -> Result<()> {
    if let Some(i) = map.data().iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidValue(format!(
            "non-finite value in signed map of class {} at voxel {i}",
            map.class_id()
        )));
    }
    Ok(())
}

/// `Σ_k Σ_i s(i, k) · φ_k(i)` over the classes covered by `signed_maps`.
///
/// `signed_maps` holds one map per summed class in ascending class order:
/// classes `1..=K` by default, `0..=K` when `foreground_only` is off.
pub fn boundary_loss(
    probs: &ProbabilityVolume,
    signed_maps: &[SignedDistanceMap],
    cfg: &LossConfig,
) -> Result<f64> {
    check_maps(probs, signed_maps, cfg)?;
    let per_class = |j: usize| {
        let map = &signed_maps[j];
        let s = probs.class(map.class_id() as usize);
        let phi = map.data();
        pairwise_sum(phi.len(), &|i| s[i] * phi[i])
    };
    Ok(pairwise_sum(signed_maps.len(), &per_class))
}

/// Gradient of [`boundary_loss`] with respect to the probabilities: the maps
/// themselves, one vector per map.
pub fn boundary_loss_grad(signed_maps: &[SignedDistanceMap]) -> Result<Vec<Vec<f64>>> {
    if let Some(first) = signed_maps.first() {
        for map in signed_maps {
            map.shape().ensure_same(first.shape(), "signed maps")?;
        }
    }
    signed_maps
        .iter()
        .map(|m| {
            check_finite(m)?;
            Ok(m.data().to_vec())
        })
        .collect()
}

/// `Σ -log(max(s(i, k), eps))` over voxels `i` annotated with class `k`.
///
/// Label 0 means "not annotated" unless `foreground_only` is off, in which
/// case background-labelled voxels are included as well.
pub fn partial_cross_entropy(
    probs: &ProbabilityVolume,
    weak_labels: &LabelVolume,
    cfg: &LossConfig,
) -> Result<f64> {
    cfg.validate()?;
    probs
        .shape()
        .ensure_same(weak_labels.shape(), "probabilities vs weak labels")?;
    if probs.num_classes() != weak_labels.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "{} probability classes vs {} label classes",
            probs.num_classes(),
            weak_labels.num_classes()
        )));
    }
    let first = cfg.first_class();
    let labels = weak_labels.data();
    let eps = cfg.ce_clamp_eps;
    Ok(pairwise_sum(labels.len(), &|i| {
        let k = labels[i];
        if k < first {
            0.0
        } else {
            -probs.class(k as usize)[i].max(eps).ln()
        }
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub total: f64,
    pub ce_term: f64,
    pub bl_term: f64,
}

/// Partial cross-entropy plus `alpha` times the boundary loss.
pub fn combined_objective(
    probs: &ProbabilityVolume,
    weak_labels: &LabelVolume,
    signed_maps: &[SignedDistanceMap],
    cfg: &LossConfig,
) -> Result<Objective> {
    let ce_term = partial_cross_entropy(probs, weak_labels, cfg)?;
    let bl_term = boundary_loss(probs, signed_maps, cfg)?;
    Ok(Objective {
        total: ce_term + cfg.alpha * bl_term,
        ce_term,
        bl_term,
    })
}
