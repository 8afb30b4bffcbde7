use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-feature mean and population standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StandardizerParams {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

pub fn fit_standardizer(x_train: &Matrix) -> Result<StandardizerParams> {
    let (n, d) = x_train.shape();
    if n < 2 {
        return Err(Error::TooFewSamples { needed: 2, got: n });
    }
    let nf = n as f64;
    let mean: Vec<f64> = x_train.col_sums().into_iter().map(|s| s / nf).collect();
    let mut var = vec![0.0; d];
    for r in 0..n {
        for ((v, &x), &m) in var.iter_mut().zip(x_train.row(r)).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var.into_iter().map(|v| (v / nf).sqrt().max(STD_FLOOR)).collect();
    Ok(StandardizerParams { mean, std })
}

fn check_dim(x: &Matrix, params: &StandardizerParams) -> Result<()> {
    if x.cols() != params.mean.len() || params.std.len() != params.mean.len() {
        return Err(Error::Dimension {
            op: "standardizer",
            left: x.shape(),
            right: (1, params.mean.len()),
        });
    }
    Ok(())
}

pub fn apply_standardizer(x: &Matrix, params: &StandardizerParams) -> Result<Matrix> {
    check_dim(x, params)?;
    let mut out = x.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&params.mean).zip(&params.std) {
            *v = (*v - m) / s;
        }
    }
    Ok(out)
}

pub fn invert_standardizer(z: &Matrix, params: &StandardizerParams) -> Result<Matrix> {
    check_dim(z, params)?;
    let mut out = z.clone();
    for r in 0..out.rows() {
        for ((v, m), s) in out.row_mut(r).iter_mut().zip(&params.mean).zip(&params.std) {
            *v = *v * s + m;
        }
    }
    Ok(out)
}
