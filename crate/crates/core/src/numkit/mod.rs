//! Dense linear algebra and layer primitives with analytic backward passes.

mod gradcheck;
mod layers;
mod matrix;
mod optim;

pub use gradcheck::{grad_check, numeric_gradient, relative_error};
pub use layers::{
    affine, affine_backward, batchnorm, batchnorm_backward, batchnorm_eval, batchnorm_train, dropout,
    dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, sigmoid_scalar, Activation,
    AffineGrads, BatchNormCache, BatchNormGrads, Mode, RunningStats, BATCHNORM_EPS, BATCHNORM_MOMENTUM,
};
pub use matrix::Matrix;
pub use optim::{adamw_step, cosine_lr, AdamWState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
