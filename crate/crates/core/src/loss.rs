//! Hybrid multi-label objective: a λ-weighted mix of binary cross-entropy and
//! α-balanced focal loss, summed over labels and averaged over samples.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HybridLossConfig {
    /// Weight on positive labels in the focal term.
    pub alpha: f64,
    /// Focusing exponent.
    pub gamma: f64,
    /// Share of the BCE term; the focal term gets `1 - lambda_bce`.
    pub lambda_bce: f64,
    /// Probabilities are clamped to `[clip_eps, 1 - clip_eps]`.
    pub clip_eps: f64,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        HybridLossConfig {
            alpha: 0.35,
            gamma: 2.0,
            lambda_bce: 0.5,
            clip_eps: 1e-7,
        }
    }
}

impl HybridLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::param(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::param(format!("gamma {} must be >= 0", self.gamma)));
        }
        if !(0.0..=1.0).contains(&self.lambda_bce) {
            return Err(Error::param(format!("lambda_bce {} outside [0, 1]", self.lambda_bce)));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps <= 0.01) {
            return Err(Error::param(format!("clip_eps {} outside (0, 0.01]", self.clip_eps)));
        }
        Ok(())
    }
}

fn check_inputs(probs: &Matrix, targets: &Matrix, cfg: &HybridLossConfig) -> Result<()> {
    cfg.validate()?;
    probs.ensure_same_shape(targets, "hybrid_loss")?;
    if let Some(bad) = targets.as_slice().iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::param(format!("target value {bad} is not 0 or 1")));
    }
    if probs.rows() == 0 {
        return Err(Error::param("empty batch"));
    }
    Ok(())
}

/// Loss of one (probability, target) cell before batch averaging.
#[inline]
fn cell_loss(p: f64, y: f64, cfg: &HybridLossConfig) -> f64 {
    let p = p.clamp(cfg.clip_eps, 1.0 - cfg.clip_eps);
    let HybridLossConfig {
        alpha,
        gamma,
        lambda_bce,
        ..
    } = *cfg;
    if y == 1.0 {
        let log_p = p.ln();
        let bce = -log_p;
        let focal = -alpha * (1.0 - p).powf(gamma) * log_p;
        lambda_bce * bce + (1.0 - lambda_bce) * focal
    } else {
        let log_q = (1.0 - p).ln();
        let bce = -log_q;
        let focal = -(1.0 - alpha) * p.powf(gamma) * log_q;
        lambda_bce * bce + (1.0 - lambda_bce) * focal
    }
}

/// d(cell_loss)/dp; zero where the clamp is active.
#[inline]
fn cell_grad(p: f64, y: f64, cfg: &HybridLossConfig) -> f64 {
    if p < cfg.clip_eps || p > 1.0 - cfg.clip_eps {
        return 0.0;
    }
    let HybridLossConfig {
        alpha,
        gamma,
        lambda_bce,
        ..
    } = *cfg;
    if y == 1.0 {
        let q = 1.0 - p;
        // focal = -α q^γ ln p
        let d_focal = -alpha * (q.powf(gamma) / p - gamma * pow_minus_one(q, gamma) * p.ln());
        lambda_bce * (-1.0 / p) + (1.0 - lambda_bce) * d_focal
    } else {
        let q = 1.0 - p;
        // focal = -(1-α) p^γ ln q
        let d_focal = -(1.0 - alpha) * (gamma * pow_minus_one(p, gamma) * q.ln() - p.powf(gamma) / q);
        lambda_bce * (1.0 / q) + (1.0 - lambda_bce) * d_focal
    }
}

/// `x^(γ-1)`, taken as 0 when γ = 0 (the term is multiplied by γ).
#[inline]
fn pow_minus_one(x: f64, gamma: f64) -> f64 {
    if gamma == 0.0 {
        0.0
    } else {
        x.powf(gamma - 1.0)
    }
}

pub fn hybrid_loss(probs: &Matrix, targets: &Matrix, cfg: &HybridLossConfig) -> Result<f64> {
    check_inputs(probs, targets, cfg)?;
    let total: f64 = probs
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(&p, &y)| cell_loss(p, y, cfg))
        .sum();
    Ok(total / probs.rows() as f64)
}

/// Gradient of [`hybrid_loss`] with respect to the probabilities, including
/// the `1/n` batch factor.
pub fn hybrid_loss_grad(probs: &Matrix, targets: &Matrix, cfg: &HybridLossConfig) -> Result<Matrix> {
    check_inputs(probs, targets, cfg)?;
    let scale = 1.0 / probs.rows() as f64;
    probs.zip_map(targets, "hybrid_loss_grad", |p, y| cell_grad(p, y, cfg) * scale)
}

/// Plain multi-label BCE with the same clamp and reduction.
pub fn bce_loss(probs: &Matrix, targets: &Matrix, clip_eps: f64) -> Result<f64> {
    let cfg = HybridLossConfig {
        lambda_bce: 1.0,
        clip_eps,
        ..HybridLossConfig::default()
    };
    hybrid_loss(probs, targets, &cfg)
}
