//! Forward and backward passes for the fixed layer set: affine maps, ReLU and
//! sigmoid activations, inverted dropout and batch normalization.

use rand::Rng;

use super::Matrix;
use crate::error::{Error, Result};

/// Train or eval behaviour for dropout and batch normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

pub const BATCHNORM_EPS: f64 = 1e-5;
pub const BATCHNORM_MOMENTUM: f64 = 0.1;

/// `x · w + b` with `b` broadcast over rows.
pub fn affine(x: &Matrix, w: &Matrix, b: &[f64]) -> Result<Matrix> {
    if b.len() != w.cols() {
        return Err(Error::Dimension {
            op: "affine bias",
            left: w.shape(),
            right: (1, b.len()),
        });
    }
    if x.cols() != w.rows() {
        return Err(Error::Dimension {
            op: "affine",
            left: x.shape(),
            right: w.shape(),
        });
    }
    let mut out = x.matmul(w)?;
    for r in 0..out.rows() {
        for (o, &bias) in out.row_mut(r).iter_mut().zip(b) {
            *o += bias;
        }
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct AffineGrads {
    pub dx: Matrix,
    pub dw: Matrix,
    pub db: Vec<f64>,
}

pub fn affine_backward(x: &Matrix, w: &Matrix, grad_out: &Matrix) -> Result<AffineGrads> {
    if grad_out.rows() != x.rows() || grad_out.cols() != w.cols() {
        return Err(Error::Dimension {
            op: "affine_backward",
            left: (x.rows(), w.cols()),
            right: grad_out.shape(),
        });
    }
    Ok(AffineGrads {
        dx: grad_out.matmul_t(w)?,
        dw: x.t_matmul(grad_out)?,
        db: grad_out.col_sums(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
}

impl Activation {
    pub fn forward(self, x: &Matrix) -> Matrix {
        match self {
            Activation::Relu => relu(x),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Backward pass from the cached forward *output*.
    pub fn backward(self, output: &Matrix, grad: &Matrix) -> Result<Matrix> {
        match self {
            Activation::Relu => relu_backward(output, grad),
            Activation::Sigmoid => sigmoid_backward(output, grad),
        }
    }
}

pub fn relu(x: &Matrix) -> Matrix {
    x.map(|v| v.max(0.0))
}

pub fn relu_backward(output: &Matrix, grad: &Matrix) -> Result<Matrix> {
    output.zip_map(grad, "relu_backward", |o, g| if o > 0.0 { g } else { 0.0 })
}

/// Largest `f64` strictly below one.
const ONE_BELOW: f64 = 1.0 - f64::EPSILON / 2.0;

/// Logistic function, kept strictly inside (0, 1) for every finite input.
#[inline]
pub fn sigmoid_scalar(x: f64) -> f64 {
    let s = if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    };
    s.clamp(f64::MIN_POSITIVE, ONE_BELOW)
}

pub fn sigmoid(x: &Matrix) -> Matrix {
    x.map(sigmoid_scalar)
}

pub fn sigmoid_backward(output: &Matrix, grad: &Matrix) -> Result<Matrix> {
    output.zip_map(grad, "sigmoid_backward", |s, g| g * s * (1.0 - s))
}

/// Inverted dropout. Returns the output and, in train mode with `p > 0`, the
/// scale mask (entries `0` or `1/(1-p)`) needed by [`dropout_backward`].
pub fn dropout<R: Rng + ?Sized>(
    x: &Matrix,
    p: f64,
    mode: Mode,
    rng: &mut R,
) -> Result<(Matrix, Option<Matrix>)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::param(format!("dropout probability {p} outside [0, 1)")));
    }
    if mode == Mode::Eval || p == 0.0 {
        return Ok((x.clone(), None));
    }
    let keep = 1.0 / (1.0 - p);
    let mask = Matrix::from_vec(
        x.rows(),
        x.cols(),
        (0..x.len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect(),
    )?;
    let out = x.hadamard(&mask)?;
    Ok((out, Some(mask)))
}

pub fn dropout_backward(mask: Option<&Matrix>, grad: &Matrix) -> Result<Matrix> {
    match mask {
        Some(m) => m.hadamard(grad),
        None => Ok(grad.clone()),
    }
}

/// Running mean/variance tracked by a batch-norm layer.
#[derive(Clone, Debug, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl RunningStats {
    pub fn new(width: usize) -> Self {
        RunningStats {
            mean: vec![0.0; width],
            var: vec![1.0; width],
        }
    }

    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Clone, Debug)]
pub struct BatchNormCache {
    x_hat: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct BatchNormGrads {
    pub dx: Matrix,
    pub dscale: Vec<f64>,
    pub dshift: Vec<f64>,
}

fn check_bn_shapes(x: &Matrix, scale: &[f64], shift: &[f64], stats: &RunningStats) -> Result<()> {
    let h = x.cols();
    if scale.len() != h || shift.len() != h || stats.width() != h {
        return Err(Error::Dimension {
            op: "batchnorm",
            left: x.shape(),
            right: (1, scale.len().min(shift.len()).min(stats.width())),
        });
    }
    Ok(())
}

/// Batch normalization. Train mode normalizes with the batch statistics
/// (population variance) and folds them into `stats`; eval mode uses `stats`.
pub fn batchnorm(
    x: &Matrix,
    scale: &[f64],
    shift: &[f64],
    stats: &mut RunningStats,
    mode: Mode,
) -> Result<(Matrix, Option<BatchNormCache>)> {
    match mode {
        Mode::Eval => Ok((batchnorm_eval(x, scale, shift, stats)?, None)),
        Mode::Train => {
            let (out, cache) = batchnorm_train(x, scale, shift, stats)?;
            Ok((out, Some(cache)))
        }
    }
}

pub fn batchnorm_train(
    x: &Matrix,
    scale: &[f64],
    shift: &[f64],
    stats: &mut RunningStats,
) -> Result<(Matrix, BatchNormCache)> {
    check_bn_shapes(x, scale, shift, stats)?;
    let (n, h) = x.shape();
    if n < 2 {
        return Err(Error::BatchSize(n));
    }
    let nf = n as f64;
    let mean: Vec<f64> = x.col_sums().into_iter().map(|s| s / nf).collect();
    let mut var = vec![0.0; h];
    for r in 0..n {
        for ((v, &xv), &m) in var.iter_mut().zip(x.row(r)).zip(&mean) {
            *v += (xv - m) * (xv - m);
        }
    }
    var.iter_mut().for_each(|v| *v /= nf);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();

    let mut x_hat = Matrix::zeros(n, h);
    let mut out = Matrix::zeros(n, h);
    for r in 0..n {
        for j in 0..h {
            let xh = (x.get(r, j) - mean[j]) * inv_std[j];
            x_hat.set(r, j, xh);
            out.set(r, j, xh * scale[j] + shift[j]);
        }
    }
    for j in 0..h {
        stats.mean[j] = (1.0 - BATCHNORM_MOMENTUM) * stats.mean[j] + BATCHNORM_MOMENTUM * mean[j];
        stats.var[j] = (1.0 - BATCHNORM_MOMENTUM) * stats.var[j] + BATCHNORM_MOMENTUM * var[j];
    }
    Ok((out, BatchNormCache { x_hat, inv_std }))
}

pub fn batchnorm_eval(x: &Matrix, scale: &[f64], shift: &[f64], stats: &RunningStats) -> Result<Matrix> {
    check_bn_shapes(x, scale, shift, stats)?;
    let (n, h) = x.shape();
    let inv_std: Vec<f64> = stats.var.iter().map(|v| 1.0 / (v + BATCHNORM_EPS).sqrt()).collect();
    let mut out = Matrix::zeros(n, h);
    for r in 0..n {
        for j in 0..h {
            out.set(
                r,
                j,
                (x.get(r, j) - stats.mean[j]) * inv_std[j] * scale[j] + shift[j],
            );
        }
    }
    Ok(out)
}

pub fn batchnorm_backward(cache: &BatchNormCache, scale: &[f64], grad: &Matrix) -> Result<BatchNormGrads> {
    cache.x_hat.ensure_same_shape(grad, "batchnorm_backward")?;
    let (n, h) = grad.shape();
    let nf = n as f64;
    let mut dscale = vec![0.0; h];
    let mut dshift = vec![0.0; h];
    for r in 0..n {
        for j in 0..h {
            let g = grad.get(r, j);
            dshift[j] += g;
            dscale[j] += g * cache.x_hat.get(r, j);
        }
    }
    // With dxhat = g·scale: Σdxhat = scale·dshift and Σdxhat·x̂ = scale·dscale.
    let mut dx = Matrix::zeros(n, h);
    for r in 0..n {
        for j in 0..h {
            let dxhat = grad.get(r, j) * scale[j];
            let v = cache.inv_std[j] / nf
                * (nf * dxhat - scale[j] * dshift[j] - cache.x_hat.get(r, j) * scale[j] * dscale[j]);
            dx.set(r, j, v);
        }
    }
    Ok(BatchNormGrads { dx, dscale, dshift })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn affine_identity_and_hand_product() {
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let out = affine(&x, &Matrix::identity(2), &[0.0, 0.0]).unwrap();
        assert_eq!(out, x);

        let x = Matrix::identity(2);
        let w = Matrix::from_rows(&[[2.0, 0.0], [0.0, 3.0]]);
        let out = affine(&x, &w, &[1.0, 1.0]).unwrap();
        assert_eq!(out, Matrix::from_rows(&[[3.0, 1.0], [1.0, 4.0]]));
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let err = affine(&Matrix::zeros(2, 3), &Matrix::zeros(4, 5), &[0.0; 5]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(2, 3)") && msg.contains("(4, 5)"), "{msg}");
    }

    #[test]
    fn affine_backward_of_sum() {
        // L = Σ out for x = [[1, 2]], W: 2x3.
        let x = Matrix::from_rows(&[[1.0, 2.0]]);
        let w = Matrix::zeros(2, 3);
        let g = affine_backward(&x, &w, &Matrix::filled(1, 3, 1.0)).unwrap();
        assert_eq!(g.dw, Matrix::from_rows(&[[1.0, 1.0, 1.0], [2.0, 2.0, 2.0]]));
        assert_eq!(g.db, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn activations() {
        let x = Matrix::row_vector(&[-1.0, 0.0, 2.0]);
        assert_eq!(relu(&x).as_slice(), &[0.0, 0.0, 2.0]);
        assert_eq!(sigmoid_scalar(0.0), 0.5);
        assert!((sigmoid_scalar(3f64.ln()) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn sigmoid_never_saturates() {
        for x in [-1e308, -800.0, -40.0, 40.0, 800.0, 1e308] {
            let s = sigmoid_scalar(x);
            assert!(s > 0.0 && s < 1.0, "sigmoid({x}) = {s}");
        }
    }

    #[test]
    fn dropout_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Matrix::from_rows(&[[1.0, -2.0], [3.0, 4.0]]);
        assert_eq!(dropout(&x, 0.5, Mode::Eval, &mut rng).unwrap().0, x);
        assert_eq!(dropout(&x, 0.0, Mode::Train, &mut rng).unwrap().0, x);
        assert!(dropout(&x, 1.0, Mode::Train, &mut rng).is_err());
        assert!(dropout(&x, -0.1, Mode::Train, &mut rng).is_err());
    }

    #[test]
    fn dropout_preserves_mean_within_three_sigma() {
        // Each entry is 0 or 2 with equal odds: variance 1 per entry.
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let x = Matrix::filled(1, n, 1.0);
        let (out, _) = dropout(&x, 0.5, Mode::Train, &mut rng).unwrap();
        let mean = out.sum() / n as f64;
        let sigma = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
    }

    #[test]
    fn batchnorm_two_point_batch() {
        let x = Matrix::from_rows(&[[1.0], [3.0]]);
        let mut stats = RunningStats::new(1);
        let (out, _) = batchnorm(&x, &[1.0], &[0.0], &mut stats, Mode::Train).unwrap();
        assert!((out.get(0, 0) + 1.0).abs() < 1e-5);
        assert!((out.get(1, 0) - 1.0).abs() < 1e-5);
        // running stats moved 10% toward mean 2, var 1
        assert!((stats.mean[0] - 0.2).abs() < 1e-15);
        assert!((stats.var[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn batchnorm_eval_with_unit_stats_is_identity() {
        let x = Matrix::from_rows(&[[0.5, -1.0], [2.0, 3.0]]);
        let mut stats = RunningStats::new(2);
        let (out, cache) = batchnorm(&x, &[1.0, 1.0], &[0.0, 0.0], &mut stats, Mode::Eval).unwrap();
        assert!(cache.is_none());
        assert!(out.max_abs_diff(&x) < 1e-4);
    }

    #[test]
    fn batchnorm_rejects_single_row_in_train() {
        let mut stats = RunningStats::new(2);
        let err = batchnorm_train(&Matrix::zeros(1, 2), &[1.0; 2], &[0.0; 2], &mut stats).unwrap_err();
        assert!(matches!(err, Error::BatchSize(1)));
    }

    #[test]
    fn batchnorm_train_output_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = Matrix::from_vec(16, 3, (0..48).map(|_| rng.random::<f64>() * 10.0).collect()).unwrap();
        let mut stats = RunningStats::new(3);
        let (out, _) = batchnorm_train(&x, &[1.0; 3], &[0.0; 3], &mut stats).unwrap();
        for j in 0..3 {
            let col: Vec<f64> = (0..16).map(|r| out.get(r, j)).collect();
            let mean = col.iter().sum::<f64>() / 16.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 16.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-5);
        }
    }
}
