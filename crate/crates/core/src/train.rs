//! Mini-batch training with cosine-scheduled AdamW, and evaluation.

use std::ops::Range;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::EmbeddingDataset;
use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::loss::{hybrid_loss, hybrid_loss_grad, HybridLossConfig};
use crate::metrics::{compute_report, threshold_predictions, MetricsReport, DEFAULT_THRESHOLD};
use crate::models::Model;
use crate::numkit::{cosine_lr, Matrix, Mode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr_max: f64,
    pub lr_min: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub loss: HybridLossConfig,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_max: 1e-3,
            lr_min: 0.0,
            weight_decay: 1e-5,
            epochs: 20,
            batch_size: 64,
            loss: HybridLossConfig::default(),
            threshold: DEFAULT_THRESHOLD,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.lr_max.is_finite() && self.lr_max >= self.lr_min && self.lr_min >= 0.0) {
            return Err(Error::Config("need lr_max >= lr_min >= 0".into()));
        }
        if self.weight_decay.is_nan() || self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::Config("threshold outside [0, 1]".into()));
        }
        self.loss.validate().map_err(|e| Error::Config(e.to_string()))
    }
}

/// Standardized inputs with their multi-hot targets.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledData {
    pub x: Matrix,
    pub y: Matrix,
}

impl LabeledData {
    pub fn new(x: Matrix, y: Matrix) -> Result<Self> {
        if x.rows() != y.rows() {
            return Err(Error::Dimension {
                op: "labeled data",
                left: x.shape(),
                right: y.shape(),
            });
        }
        Ok(LabeledData { x, y })
    }

    pub fn from_dataset(ds: &EmbeddingDataset) -> Self {
        LabeledData {
            x: ds.x().clone(),
            y: ds.label_matrix(),
        }
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn subset(&self, indices: &[usize]) -> LabeledData {
        LabeledData {
            x: self.x.select_rows(indices),
            y: self.y.select_rows(indices),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub lr: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val: Option<MetricsReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_loss: Option<f64>,
}

/// Which slice of a longer cosine schedule a call covers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochWindow {
    pub first: usize,
    pub count: usize,
    pub total: usize,
}

impl EpochWindow {
    pub fn whole(epochs: usize) -> Self {
        EpochWindow {
            first: 0,
            count: epochs,
            total: epochs,
        }
    }
}

/// Consecutive batch ranges; a trailing single-row batch joins its
/// predecessor.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<Range<usize>> {
    let mut out: Vec<Range<usize>> = (0..n)
        .step_by(batch_size.max(1))
        .map(|s| s..(s + batch_size).min(n))
        .collect();
    if out.len() > 1 && out.last().is_some_and(|r| r.len() == 1) {
        let last = out.pop().expect("non-empty");
        out.last_mut().expect("has predecessor").end = last.end;
    }
    out
}

fn check_dims(model: &Model, data: &LabeledData) -> Result<()> {
    let spec = model.spec();
    if data.x.cols() != spec.input_dim || data.y.cols() != spec.output_dim {
        return Err(Error::Dimension {
            op: "training data vs model",
            left: (data.x.cols(), data.y.cols()),
            right: (spec.input_dim, spec.output_dim),
        });
    }
    Ok(())
}

/// Trains for `cfg.epochs` epochs.
pub fn train_model(
    model: &mut Model,
    train: &LabeledData,
    val: Option<&LabeledData>,
    cfg: &TrainConfig,
) -> Result<Vec<EpochLog>> {
    train_epochs(model, train, val, cfg, EpochWindow::whole(cfg.epochs))
}

/// Runs the epochs in `window`. Epoch `t` shuffles and draws dropout masks
/// from a stream seeded by `(cfg.seed, t)` and uses the cosine rate for `t`
/// within `window.total`, so a run split into windows matches one long run.
pub fn train_epochs(
    model: &mut Model,
    train: &LabeledData,
    val: Option<&LabeledData>,
    cfg: &TrainConfig,
    window: EpochWindow,
) -> Result<Vec<EpochLog>> {
    cfg.validate()?;
    check_dims(model, train)?;
    if let Some(v) = val {
        check_dims(model, v)?;
    }
    if window.count == 0 {
        return Ok(Vec::new());
    }
    if train.is_empty() {
        return Err(Error::EmptyDataset("training split".into()));
    }
    let mut logs = Vec::with_capacity(window.count);
    for epoch in window.first..window.first + window.count {
        let lr = cosine_lr(epoch, window.total, cfg.lr_max, cfg.lr_min)?;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[epoch as u64]));
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut rng);

        let batches = batch_ranges(order.len(), cfg.batch_size);
        let mut loss_sum = 0.0;
        for (b, range) in batches.iter().enumerate() {
            let idx = &order[range.clone()];
            let x = train.x.select_rows(idx);
            let y = train.y.select_rows(idx);
            let (probs, cache) = model.forward(&x, Mode::Train, &mut rng)?;
            let loss = hybrid_loss(&probs, &y, &cfg.loss)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, batch: b });
            }
            let grad = hybrid_loss_grad(&probs, &y, &cfg.loss)?;
            model.backward(&cache.expect("train mode caches"), &grad)?;
            model
                .step(lr, cfg.weight_decay)
                .map_err(|_| Error::Divergence { epoch, batch: b })?;
            loss_sum += loss;
        }
        let (val_report, val_loss) = match val {
            Some(v) => {
                let (r, l) = evaluate_model(model, v, cfg.threshold, &cfg.loss)?;
                (Some(r), Some(l))
            }
            None => (None, None),
        };
        logs.push(EpochLog {
            epoch,
            mean_loss: loss_sum / batches.len() as f64,
            lr,
            val: val_report,
            val_loss,
        });
    }
    Ok(logs)
}

/// Eval-mode metrics and mean loss. Never mutates the model.
pub fn evaluate_model(
    model: &Model,
    data: &LabeledData,
    threshold: f64,
    loss_cfg: &HybridLossConfig,
) -> Result<(MetricsReport, f64)> {
    check_dims(model, data)?;
    if data.is_empty() {
        return Err(Error::EmptyDataset("evaluation split".into()));
    }
    let probs = model.predict(&data.x)?;
    let loss = hybrid_loss(&probs, &data.y, loss_cfg)?;
    let report = compute_report(&data.y, &threshold_predictions(&probs, threshold)?)?;
    Ok((report, loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_model, ModelSpec};

    fn toy(n: usize) -> LabeledData {
        let x = Matrix::from_vec(n, 3, (0..n * 3).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect()).unwrap();
        let y = Matrix::from_vec(n, 2, (0..n * 2).map(|i| ((i * 7 % 5) < 2) as u8 as f64).collect()).unwrap();
        LabeledData::new(x, y).unwrap()
    }

    #[test]
    fn batches_merge_trailing_singleton() {
        assert_eq!(batch_ranges(10, 4), vec![0..4, 4..8, 8..10]);
        assert_eq!(batch_ranges(9, 4), vec![0..4, 4..9]);
        assert_eq!(batch_ranges(1, 4), vec![0..1]);
        assert!(batch_ranges(0, 4).is_empty());
    }

    #[test]
    fn zero_epochs_leaves_model_untouched() {
        let mut m = build_model(&ModelSpec::mlp(3, 4, 2), 0).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            epochs: 0,
            ..Default::default()
        };
        assert!(train_model(&mut m, &toy(9), None, &cfg).unwrap().is_empty());
        assert_eq!(m, before);
    }

    #[test]
    fn logged_lr_follows_schedule() {
        let mut m = build_model(&ModelSpec::deep_mlp(3, [4, 4, 4], 2), 0).unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 4,
            ..Default::default()
        };
        let logs = train_model(&mut m, &toy(9), Some(&toy(5)), &cfg).unwrap();
        for log in &logs {
            assert_eq!(log.lr, cosine_lr(log.epoch, 4, 1e-3, 0.0).unwrap());
            assert!(log.val.is_some());
        }
    }

    #[test]
    fn split_windows_match_single_run() {
        let spec = ModelSpec::deep_res_mlp(3, 4, 1, 2);
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 3,
            ..Default::default()
        };
        let data = toy(11);
        let mut a = build_model(&spec, 5).unwrap();
        train_model(&mut a, &data, None, &cfg).unwrap();
        let mut b = build_model(&spec, 5).unwrap();
        train_epochs(&mut b, &data, None, &cfg, EpochWindow { first: 0, count: 2, total: 4 }).unwrap();
        train_epochs(&mut b, &data, None, &cfg, EpochWindow { first: 2, count: 2, total: 4 }).unwrap();
        assert_eq!(a.flat_state(), b.flat_state());
    }

    #[test]
    fn dimension_mismatch() {
        let mut m = build_model(&ModelSpec::mlp(4, 4, 2), 0).unwrap();
        let err = train_model(&mut m, &toy(6), None, &TrainConfig::default()).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn divergence_is_reported() {
        let mut m = build_model(&ModelSpec::mlp(3, 4, 2), 0).unwrap();
        let mut data = toy(6);
        data.x.set(0, 0, f64::NAN);
        let cfg = TrainConfig {
            epochs: 1,
            batch_size: 64,
            ..Default::default()
        };
        let err = train_model(&mut m, &data, None, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { epoch: 0, batch: 0 }), "{err}");
    }
}
