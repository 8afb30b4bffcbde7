//! Multi-label precision, recall and F1: per-label, macro, micro, and
//! micro-averaged reports restricted to the most frequent labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// `1` where `prob >= threshold`, else `0`.
pub fn threshold_predictions(probs: &Matrix, threshold: f64) -> Result<Matrix> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::param(format!("threshold {threshold} outside [0, 1]")));
    }
    Ok(probs.map(|p| if p >= threshold { 1.0 } else { 0.0 }))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        harmonic(self.precision(), self.recall())
    }

    fn merge(self, o: ConfusionCounts) -> ConfusionCounts {
        ConfusionCounts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn harmonic(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub n_samples: usize,
    /// Label ids the report covers, in column order of `per_label`.
    pub labels: Vec<usize>,
    pub per_label: Vec<ConfusionCounts>,
}

impl MetricsReport {
    /// The six headline metrics in wire order: macro P/R/F1 then micro P/R/F1.
    pub fn headline(&self) -> [f64; 6] {
        [
            self.macro_precision,
            self.macro_recall,
            self.macro_f1,
            self.micro_precision,
            self.micro_recall,
            self.micro_f1,
        ]
    }

    pub const HEADLINE_KEYS: [&'static str; 6] = [
        "macro_precision",
        "macro_recall",
        "macro_f1",
        "micro_precision",
        "micro_recall",
        "micro_f1",
    ];

    /// `key=value` lines with four decimals.
    pub fn to_key_values(&self, prefix: &str) -> String {
        let mut out = String::new();
        for (k, v) in Self::HEADLINE_KEYS.iter().zip(self.headline()) {
            out.push_str(&format!("{prefix}{k}={v:.4}\n"));
        }
        out.push_str(&format!("{prefix}n_samples={}\n", self.n_samples));
        out.push_str(&format!("{prefix}n_labels={}\n", self.labels.len()));
        out
    }

    fn from_counts(labels: Vec<usize>, per_label: Vec<ConfusionCounts>, n_samples: usize) -> Self {
        let c = per_label.len().max(1) as f64;
        let (mut mp, mut mr, mut mf) = (0.0, 0.0, 0.0);
        for k in &per_label {
            mp += k.precision();
            mr += k.recall();
            mf += k.f1();
        }
        let pooled = per_label.iter().fold(ConfusionCounts::default(), |a, &b| a.merge(b));
        MetricsReport {
            macro_precision: mp / c,
            macro_recall: mr / c,
            macro_f1: mf / c,
            micro_precision: pooled.precision(),
            micro_recall: pooled.recall(),
            micro_f1: pooled.f1(),
            n_samples,
            labels,
            per_label,
        }
    }
}

fn check_binary(y_true: &Matrix, y_pred: &Matrix) -> Result<()> {
    y_true.ensure_same_shape(y_pred, "compute_report")?;
    if let Some(v) = y_true
        .as_slice()
        .iter()
        .chain(y_pred.as_slice())
        .find(|&&v| v != 0.0 && v != 1.0)
    {
        return Err(Error::param(format!("expected binary matrices, found {v}")));
    }
    Ok(())
}

fn counts_for(y_true: &Matrix, y_pred: &Matrix, labels: &[usize]) -> Vec<ConfusionCounts> {
    let mut counts = vec![ConfusionCounts::default(); labels.len()];
    for r in 0..y_true.rows() {
        let (t, p) = (y_true.row(r), y_pred.row(r));
        for (k, &l) in counts.iter_mut().zip(labels) {
            match (t[l] == 1.0, p[l] == 1.0) {
                (true, true) => k.tp += 1,
                (false, true) => k.fp += 1,
                (true, false) => k.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts
}

/// Per-label counts with macro and micro averages over all columns.
pub fn compute_report(y_true: &Matrix, y_pred: &Matrix) -> Result<MetricsReport> {
    check_binary(y_true, y_pred)?;
    let labels: Vec<usize> = (0..y_true.cols()).collect();
    let counts = counts_for(y_true, y_pred, &labels);
    Ok(MetricsReport::from_counts(labels, counts, y_true.rows()))
}

/// The `k` labels with the highest training support, ties to the lower id.
pub fn top_k_labels(train_label_frequencies: &[usize], k: usize) -> Result<Vec<usize>> {
    if k > train_label_frequencies.len() {
        return Err(Error::param(format!(
            "top-{k} requested over {} labels",
            train_label_frequencies.len()
        )));
    }
    let mut ids: Vec<usize> = (0..train_label_frequencies.len()).collect();
    ids.sort_by(|&a, &b| train_label_frequencies[b].cmp(&train_label_frequencies[a]).then(a.cmp(&b)));
    ids.truncate(k);
    ids.sort_unstable();
    Ok(ids)
}

/// Report restricted to the `k` most frequent training labels. The micro
/// block is the Top-K figure; the macro block covers the same subset.
pub fn topk_report(
    y_true: &Matrix,
    y_pred: &Matrix,
    train_label_frequencies: &[usize],
    k: usize,
) -> Result<MetricsReport> {
    check_binary(y_true, y_pred)?;
    if train_label_frequencies.len() != y_true.cols() {
        return Err(Error::Dimension {
            op: "topk_report",
            left: y_true.shape(),
            right: (1, train_label_frequencies.len()),
        });
    }
    let labels = top_k_labels(train_label_frequencies, k)?;
    let counts = counts_for(y_true, y_pred, &labels);
    Ok(MetricsReport::from_counts(labels, counts, y_true.rows()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn example() -> (Matrix, Matrix) {
        (
            Matrix::from_rows(&[[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]]),
            Matrix::from_rows(&[[1.0, 1.0, 0.0], [0.0, 1.0, 0.0]]),
        )
    }

    #[test]
    fn thresholding() {
        let p = Matrix::row_vector(&[0.5, 0.49, 0.0]);
        assert_eq!(threshold_predictions(&p, 0.5).unwrap().as_slice(), &[1.0, 0.0, 0.0]);
        assert_eq!(threshold_predictions(&p, 0.0).unwrap().as_slice(), &[1.0, 1.0, 1.0]);
        assert!(threshold_predictions(&Matrix::zeros(2, 2), 0.5).unwrap().as_slice().iter().all(|&v| v == 0.0));
        assert!(threshold_predictions(&p, 1.5).is_err());
    }

    #[test]
    fn worked_example() {
        let (y, yhat) = example();
        let r = compute_report(&y, &yhat).unwrap();
        for v in [r.micro_precision, r.micro_recall, r.micro_f1] {
            assert!((v - 2.0 / 3.0).abs() < 1e-12);
        }
        assert!((r.macro_f1 - 0.5556).abs() < 1e-4);
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let (y, _) = example();
        let r = compute_report(&y, &y).unwrap();
        assert!(r.headline().iter().all(|&v| v == 1.0));
        let r = compute_report(&y, &Matrix::zeros(2, 3)).unwrap();
        assert_eq!((r.micro_precision, r.micro_recall, r.micro_f1), (0.0, 0.0, 0.0));
        assert_eq!((r.macro_precision, r.macro_recall), (0.0, 0.0));
    }

    #[test]
    fn topk_subset() {
        let (y, yhat) = example();
        assert_eq!(top_k_labels(&[5, 3, 1], 2).unwrap(), vec![0, 1]);
        let r = topk_report(&y, &yhat, &[5, 3, 1], 2).unwrap();
        assert!((r.micro_precision - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.micro_recall, 1.0);
        assert!((r.micro_f1 - 0.8).abs() < 1e-12);
        let full = compute_report(&y, &yhat).unwrap();
        let all = topk_report(&y, &yhat, &[5, 3, 1], 3).unwrap();
        assert_eq!(all.headline()[3..], full.headline()[3..]);
        assert!(topk_report(&y, &yhat, &[5, 3, 1], 4).is_err());
    }

    #[test]
    fn ties_go_to_lower_id() {
        assert_eq!(top_k_labels(&[2, 7, 7, 1], 2).unwrap(), vec![1, 2]);
        assert_eq!(top_k_labels(&[4, 4, 4], 1).unwrap(), vec![0]);
    }

    #[test]
    fn shape_mismatch() {
        assert!(compute_report(&Matrix::zeros(2, 3), &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn key_value_form() {
        let (y, yhat) = example();
        let kv = compute_report(&y, &yhat).unwrap().to_key_values("test.");
        assert!(kv.contains("test.micro_f1=0.6667\n"));
        assert!(kv.contains("test.macro_f1=0.5556\n"));
    }
}
