use std::f64::consts::PI;

use super::Matrix;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Per-parameter AdamW moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamWState {
    pub step_count: u64,
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamWState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamWState {
            step_count: 0,
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn like(param: &Matrix) -> Self {
        Self::new(param.rows(), param.cols())
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.first_moment.rows(), self.first_moment.cols());
    }
}

/// One AdamW update: decoupled decay `param *= 1 - lr*wd`, then the
/// bias-corrected Adam step.
pub fn adamw_step(
    param: &mut Matrix,
    grad: &Matrix,
    state: &mut AdamWState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    param.ensure_same_shape(grad, "adamw_step")?;
    param.ensure_same_shape(&state.first_moment, "adamw_step state")?;
    if !grad.is_finite() {
        return Err(Error::Numeric("adamw gradient".into()));
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let decay = 1.0 - lr * weight_decay;

    let m = state.first_moment.as_mut_slice();
    let v = state.second_moment.as_mut_slice();
    for (((p, &g), m), v) in param
        .as_mut_slice()
        .iter_mut()
        .zip(grad.as_slice())
        .zip(m.iter_mut())
        .zip(v.iter_mut())
    {
        *p *= decay;
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Cosine annealing from `lr_max` at `t = 0` to `lr_min` at `t = total`.
pub fn cosine_lr(t: usize, total: usize, lr_max: f64, lr_min: f64) -> Result<f64> {
    if total == 0 {
        return Err(Error::param("cosine schedule needs at least one epoch"));
    }
    if t > total {
        return Err(Error::param(format!("epoch {t} beyond schedule length {total}")));
    }
    let phase = PI * t as f64 / total as f64;
    Ok(lr_min + 0.5 * (lr_max - lr_min) * (1.0 + phase.cos()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decay_only_step() {
        let mut p = Matrix::filled(1, 1, 1.0);
        let mut s = AdamWState::like(&p);
        adamw_step(&mut p, &Matrix::zeros(1, 1), &mut s, 1e-3, 1e-5).unwrap();
        assert_eq!(p.get(0, 0), 1.0 - 1e-8);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn zero_grad_zero_decay_is_identity() {
        let mut p = Matrix::from_rows(&[[0.3, -2.0]]);
        let before = p.clone();
        let mut s = AdamWState::like(&p);
        adamw_step(&mut p, &Matrix::zeros(1, 2), &mut s, 1e-3, 0.0).unwrap();
        assert_eq!(p, before);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_is_sign_sized() {
        // At t = 1, m̂ = g and v̂ = g², so Δ = -lr·g/(|g| + eps).
        for g in [0.5, -3.0, 1e-3] {
            let mut p = Matrix::zeros(1, 1);
            let mut s = AdamWState::like(&p);
            adamw_step(&mut p, &Matrix::filled(1, 1, g), &mut s, 1e-3, 0.0).unwrap();
            let expected = -1e-3 * g / (g.abs() + ADAM_EPS);
            assert!((p.get(0, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn non_finite_gradient_rejected_without_mutation() {
        let mut p = Matrix::filled(1, 2, 1.0);
        let mut s = AdamWState::like(&p);
        let g = Matrix::from_rows(&[[1.0, f64::NAN]]);
        assert!(matches!(adamw_step(&mut p, &g, &mut s, 1e-3, 0.0), Err(Error::Numeric(_))));
        assert_eq!(s.step_count, 0);
        assert_eq!(p, Matrix::filled(1, 2, 1.0));
    }

    #[test]
    fn cosine_endpoints() {
        assert_eq!(cosine_lr(0, 20, 1e-3, 0.0).unwrap(), 1e-3);
        assert!(cosine_lr(20, 20, 1e-3, 0.0).unwrap().abs() < 1e-18);
        assert!((cosine_lr(10, 20, 1e-3, 1e-4).unwrap() - 5.5e-4).abs() < 1e-15);
        assert!(cosine_lr(21, 20, 1e-3, 0.0).is_err());
        assert!(cosine_lr(0, 0, 1e-3, 0.0).is_err());
    }
}
