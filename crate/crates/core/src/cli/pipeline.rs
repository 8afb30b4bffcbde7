//! Filtering, splitting and fitting of preprocessing artifacts.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_standardizer, filter_rare_labels, fit_standardizer, load_dataset, save_dataset, stratified_split,
    EmbeddingDataset, LabelVocabulary, SplitIndices, StandardizerParams,
};
use crate::error::{Error, Result};
use crate::train::LabeledData;

pub const DATASET_FILE: &str = "dataset.femb";
pub const SPLITS_FILE: &str = "splits.json";
pub const STANDARDIZER_FILE: &str = "standardizer.json";
pub const VOCAB_FILE: &str = "vocab.json";

/// Label vocabulary fitted on the training split, with its per-label
/// training support (used to pick Top-K labels).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelBinarizer {
    pub codes: Vec<String>,
    pub train_support: Vec<usize>,
}

impl LabelBinarizer {
    pub fn vocab(&self) -> Result<LabelVocabulary> {
        if self.codes.len() != self.train_support.len() {
            return Err(Error::Config("vocabulary codes and support lengths differ".into()));
        }
        LabelVocabulary::from_sorted(self.codes.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFile {
    pub seed: u64,
    pub ratios: [f64; 3],
    pub min_count: usize,
    #[serde(flatten)]
    pub indices: SplitIndices,
}

pub struct PreparedData {
    /// The dataset after rare-label filtering; split indices point into it.
    pub dataset: EmbeddingDataset,
    pub split: SplitFile,
    pub standardizer: StandardizerParams,
    pub binarizer: LabelBinarizer,
}

pub struct Splits {
    pub train: LabeledData,
    pub val: LabeledData,
    pub test: LabeledData,
    /// Label occurrences in val/test that the training vocabulary lacks.
    pub unknown_labels: usize,
}

pub fn prepare(raw: &EmbeddingDataset, ratios: [f64; 3], min_count: usize, seed: u64) -> Result<PreparedData> {
    let dataset = filter_rare_labels(raw, min_count)?;
    let indices = stratified_split(&dataset, ratios, seed)?;
    let train = dataset.subset(&indices.train);
    let support = train.label_support();
    let (codes, train_support): (Vec<String>, Vec<usize>) = dataset
        .vocab()
        .codes()
        .iter()
        .zip(support)
        .filter(|(_, s)| *s > 0)
        .map(|(c, s)| (c.clone(), s))
        .unzip();
    let standardizer = fit_standardizer(train.x())?;
    Ok(PreparedData {
        dataset,
        split: SplitFile {
            seed,
            ratios,
            min_count,
            indices,
        },
        standardizer,
        binarizer: LabelBinarizer { codes, train_support },
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("artifact serializes");
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

impl PreparedData {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        save_dataset(&self.dataset, dir.join(DATASET_FILE))?;
        write_json(&dir.join(SPLITS_FILE), &self.split)?;
        write_json(&dir.join(STANDARDIZER_FILE), &self.standardizer)?;
        write_json(&dir.join(VOCAB_FILE), &self.binarizer)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let dataset = load_dataset(dir.join(DATASET_FILE))?;
        let split: SplitFile = read_json(&dir.join(SPLITS_FILE))?;
        let n = dataset.len();
        let idx = &split.indices;
        if idx.train.iter().chain(&idx.val).chain(&idx.test).any(|&i| i >= n) {
            return Err(Error::Config(format!("split indices exceed the {n}-sample dataset")));
        }
        Ok(PreparedData {
            dataset,
            split,
            standardizer: read_json(&dir.join(STANDARDIZER_FILE))?,
            binarizer: read_json(&dir.join(VOCAB_FILE))?,
        })
    }

    pub fn splits(&self) -> Result<Splits> {
        let vocab = self.binarizer.vocab()?;
        let mut unknown_labels = 0;
        let mut part = |indices: &[usize]| -> Result<LabeledData> {
            let (ds, unknown) = self.dataset.subset(indices).remap_labels(&vocab);
            unknown_labels += unknown;
            let x = apply_standardizer(ds.x(), &self.standardizer)?;
            LabeledData::new(x, ds.label_matrix())
        };
        let idx = &self.split.indices;
        let train = part(&idx.train)?;
        let val = part(&idx.val)?;
        let test = part(&idx.test)?;
        Ok(Splits {
            train,
            val,
            test,
            unknown_labels,
        })
    }
}
