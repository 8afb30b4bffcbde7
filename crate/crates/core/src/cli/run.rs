//! Executes experiments and writes run directories.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_dataset, partition_clients};
use crate::error::{Error, Result};
use crate::fedsim::run_federated;
use crate::metrics::{threshold_predictions, topk_report, MetricsReport};
use crate::models::{build_model, save_checkpoint, Family, Model};
use crate::synthgen::generate;
use crate::train::{evaluate_model, train_model, LabeledData, TrainConfig};

use super::config::{DataSource, ExperimentConfig};
use super::pipeline::{prepare, write_json, PreparedData, DATASET_FILE};
use super::Console;

pub const CONFIG_FILE: &str = "config.json";
pub const EPOCH_LOG_FILE: &str = "epochs.jsonl";
pub const ROUND_LOG_FILE: &str = "rounds.jsonl";
pub const CHECKPOINT_FILE: &str = "model.ftck";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TEXT: &str = "report.txt";
pub const SUMMARY_JSON: &str = "summary.json";
pub const SUMMARY_TEXT: &str = "summary.txt";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKReport {
    pub k: usize,
    pub report: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_samples: usize,
    pub n_labels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loss: Option<f64>,
    pub metrics: MetricsReport,
    pub topk: Vec<TopKReport>,
}

impl EvalReport {
    pub fn build(
        model: &Model,
        data: &LabeledData,
        train_support: &[usize],
        topk: &[usize],
        cfg: &TrainConfig,
    ) -> Result<Self> {
        let (metrics, loss) = evaluate_model(model, data, cfg.threshold, &cfg.loss)?;
        let predicted = threshold_predictions(&model.predict(&data.x)?, cfg.threshold)?;
        let topk = topk
            .iter()
            .map(|&k| {
                Ok(TopKReport {
                    k,
                    report: topk_report(&data.y, &predicted, train_support, k)?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(EvalReport {
            n_samples: data.len(),
            n_labels: data.y.cols(),
            loss: Some(loss),
            metrics,
            topk,
        })
    }

    /// Flat `(name, value)` pairs used for ablation summaries.
    pub fn scalars(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = MetricsReport::HEADLINE_KEYS
            .iter()
            .zip(self.metrics.headline())
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        for t in &self.topk {
            for (k, v) in MetricsReport::HEADLINE_KEYS.iter().zip(t.report.headline()) {
                out.push((format!("top{}.{k}", t.k), v));
            }
        }
        out
    }

    pub fn render(&self) -> String {
        let mut s = format!("samples={} labels={}\n", self.n_samples, self.n_labels);
        if let Some(l) = self.loss {
            s.push_str(&format!("loss={l:.4}\n"));
        }
        s.push_str(&self.metrics.to_key_values(""));
        for t in &self.topk {
            s.push_str(&format!("[top{}]\n", t.k));
            s.push_str(&t.report.to_key_values(""));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub mode: String,
    pub family: Family,
    pub parameters: usize,
    pub n_train: usize,
    pub n_val: usize,
    pub unknown_labels: usize,
    pub checksum: u64,
    pub test: EvalReport,
}

impl RunReport {
    pub fn render(&self) -> String {
        format!(
            "mode={} family={:?} parameters={} train={} val={} checksum={:016x}\n[test]\n{}",
            self.mode,
            self.family,
            self.parameters,
            self.n_train,
            self.n_val,
            self.checksum,
            self.test.render()
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub metric: String,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RepeatSummary {
    pub runs: usize,
    pub rows: Vec<SummaryRow>,
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl RepeatSummary {
    pub fn from_reports(reports: &[RunReport]) -> Self {
        let per_run: Vec<Vec<(String, f64)>> = reports.iter().map(|r| r.test.scalars()).collect();
        let rows = per_run[0]
            .iter()
            .enumerate()
            .map(|(i, (name, _))| {
                let values: Vec<f64> = per_run.iter().map(|r| r[i].1).collect();
                let (mean, std) = mean_std(&values);
                SummaryRow {
                    metric: name.clone(),
                    mean,
                    std,
                }
            })
            .collect();
        RepeatSummary {
            runs: reports.len(),
            rows,
        }
    }

    pub fn render(&self) -> String {
        let mut s = format!("runs={}\n", self.runs);
        for r in &self.rows {
            s.push_str(&format!("{} = {:.4} ± {:.4}\n", r.metric, r.mean, r.std));
        }
        s
    }
}

fn load_prepared(cfg: &ExperimentConfig, repeat: usize) -> Result<PreparedData> {
    let seed = cfg.seeds(repeat).split;
    let (ratios, min_count) = (cfg.split.ratios, cfg.split.min_count);
    match &cfg.data {
        DataSource::Prepared(dir) if cfg.n_repeats == 1 => PreparedData::load(dir),
        DataSource::Prepared(dir) => prepare(&load_dataset(dir.join(DATASET_FILE))?, ratios, min_count, seed),
        DataSource::Dataset(path) => prepare(&load_dataset(path)?, ratios, min_count, seed),
        DataSource::Synth(s) => prepare(&generate(s)?, ratios, min_count, seed),
    }
}

fn write_lines<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for item in items {
        writeln!(w, "{}", serde_json::to_string(item).expect("record serializes"))?;
    }
    w.flush()?;
    Ok(())
}

/// One training run written to `dir`.
pub fn run_once(cfg: &ExperimentConfig, repeat: usize, dir: &Path, console: &Console) -> Result<RunReport> {
    fs::create_dir_all(dir)?;
    let seeds = cfg.seeds(repeat);
    let prepared = load_prepared(cfg, repeat)?;
    let splits = prepared.splits()?;
    if splits.unknown_labels > 0 {
        console.warn(&format!(
            "{} val/test label occurrences are missing from the training vocabulary",
            splits.unknown_labels
        ));
    }
    let spec = cfg.model.spec(splits.train.x.cols(), splits.train.y.cols())?;
    let initial = build_model(&spec, seeds.model)?;
    let train_cfg = TrainConfig {
        seed: seeds.train,
        ..cfg.train.clone()
    };

    let model = match &cfg.federated {
        None => {
            let mut model = initial;
            let logs = train_model(&mut model, &splits.train, Some(&splits.val), &train_cfg)?;
            for l in &logs {
                let f1 = l.val.as_ref().map_or(f64::NAN, |r| r.micro_f1);
                console.say(&format!("epoch {:>3} loss={:.4} lr={:.2e} val_micro_f1={f1:.4}", l.epoch, l.mean_loss, l.lr));
            }
            write_lines(&dir.join(EPOCH_LOG_FILE), &logs)?;
            model
        }
        Some(fed) => {
            let fed = crate::fedsim::FedConfig {
                seed: seeds.federation,
                execution: cfg.execution,
                ..fed.clone()
            };
            let train_idx: Vec<usize> = (0..splits.train.len()).collect();
            let partition = partition_clients(&train_idx, fed.n_clients, seeds.partition)?;
            let mut log = BufWriter::new(File::create(dir.join(ROUND_LOG_FILE))?);
            let run = run_federated(&fed, &train_cfg, initial, &splits.train, &partition, &splits.val, |r| {
                writeln!(log, "{}", serde_json::to_string(r).expect("record serializes"))?;
                log.flush()?;
                console.say(&format!(
                    "round {:>3} loss={:.4} eval_micro_f1={:.4}",
                    r.round, r.train_loss, r.eval.micro_f1
                ));
                Ok(())
            })?;
            run.model
        }
    };

    fs::write(dir.join(CHECKPOINT_FILE), save_checkpoint(&model))?;
    let test = EvalReport::build(&model, &splits.test, &prepared.binarizer.train_support, &cfg.topk, &train_cfg)?;
    let report = RunReport {
        mode: if cfg.is_federated() { "federated" } else { "centralized" }.into(),
        family: spec.family,
        parameters: model.parameter_count(),
        n_train: splits.train.len(),
        n_val: splits.val.len(),
        unknown_labels: splits.unknown_labels,
        checksum: model.checksum(),
        test,
    };
    write_json(&dir.join(REPORT_JSON), &report)?;
    fs::write(dir.join(REPORT_TEXT), report.render())?;
    Ok(report)
}

/// Runs every repeat of `cfg` under `out`. A single run writes straight into
/// `out`; repeats go to `out/repeat_XX` with a summary alongside.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path, console: &Console) -> Result<Vec<RunReport>> {
    fs::create_dir_all(out)?;
    fs::write(out.join(CONFIG_FILE), cfg.to_json() + "\n")?;
    if cfg.n_repeats == 1 {
        let report = run_once(cfg, 0, out, console)?;
        console.say(&report.render());
        return Ok(vec![report]);
    }
    let mut reports = Vec::with_capacity(cfg.n_repeats);
    for i in 0..cfg.n_repeats {
        console.say(&format!("repeat {}/{} (split seed {})", i + 1, cfg.n_repeats, cfg.seeds(i).split));
        reports.push(run_once(cfg, i, &repeat_dir(out, i), console)?);
    }
    let summary = RepeatSummary::from_reports(&reports);
    write_json(&out.join(SUMMARY_JSON), &summary)?;
    fs::write(out.join(SUMMARY_TEXT), summary.render())?;
    console.say(&summary.render());
    Ok(reports)
}

pub fn repeat_dir(out: &Path, repeat: usize) -> PathBuf {
    out.join(format!("repeat_{repeat:02}"))
}

pub(crate) fn no_output_dir() -> Error {
    Error::Config("no output directory: pass --out or set output_dir".into())
}
