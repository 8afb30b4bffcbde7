//! Embedding datasets and the preprocessing protocol: label vocabulary,
//! rare-label filtering, train-only standardization, iterative stratified
//! splitting and client partitioning.

mod codec;
mod split;
mod standardize;

pub use codec::{decode_dataset, encode_dataset, import_text, load_dataset, save_dataset, FEMB_MAGIC, FEMB_VERSION};
pub use split::{partition_clients, stratified_split, ClientPartition, SplitIndices, DEFAULT_RATIOS};
pub use standardize::{apply_standardizer, fit_standardizer, invert_standardizer, StandardizerParams};

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::Matrix;

/// Sorted list of unique label codes; a code's id is its position.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVocabulary {
    codes: Vec<String>,
}

impl LabelVocabulary {
    pub fn from_codes<I, S>(codes: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set: BTreeSet<String> = codes.into_iter().map(Into::into).collect();
        LabelVocabulary {
            codes: set.into_iter().collect(),
        }
    }

    /// Accepts an already ordered code list, rejecting duplicates or disorder.
    pub fn from_sorted(codes: Vec<String>) -> Result<Self> {
        if codes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("vocabulary must be strictly sorted and unique".into()));
        }
        Ok(LabelVocabulary { codes })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn codes(&self) -> &[String] {
        &self.codes
    }

    pub fn code(&self, id: u32) -> &str {
        &self.codes[id as usize]
    }

    pub fn id(&self, code: &str) -> Option<u32> {
        self.codes.binary_search_by(|c| c.as_str().cmp(code)).ok().map(|i| i as u32)
    }
}

/// Vocabulary of every code seen in the training label sets.
pub fn build_vocabulary<'a, I, L, S>(label_sets: I) -> LabelVocabulary
where
    I: IntoIterator<Item = L>,
    L: IntoIterator<Item = &'a S>,
    S: AsRef<str> + 'a + ?Sized,
{
    LabelVocabulary::from_codes(
        label_sets
            .into_iter()
            .flat_map(|set| set.into_iter().map(|c| c.as_ref().to_string())),
    )
}

/// Multi-hot encodes `codes`. Codes missing from `vocab` are dropped and
/// counted in the returned tally.
pub fn binarize<S: AsRef<str>>(codes: &[S], vocab: &LabelVocabulary) -> (Vec<f64>, usize) {
    let mut row = vec![0.0; vocab.len()];
    let mut unknown = 0;
    for c in codes {
        match vocab.id(c.as_ref()) {
            Some(id) => row[id as usize] = 1.0,
            None => unknown += 1,
        }
    }
    (row, unknown)
}

/// Dense embeddings with per-sample label-id sets.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingDataset {
    sample_ids: Vec<String>,
    x: Matrix,
    labels: Vec<Vec<u32>>,
    vocab: LabelVocabulary,
}

impl EmbeddingDataset {
    pub fn new(sample_ids: Vec<String>, x: Matrix, labels: Vec<Vec<u32>>, vocab: LabelVocabulary) -> Result<Self> {
        let n = sample_ids.len();
        if x.rows() != n || labels.len() != n {
            return Err(Error::Config(format!(
                "{n} sample ids, {} embedding rows, {} label lists",
                x.rows(),
                labels.len()
            )));
        }
        for (i, set) in labels.iter().enumerate() {
            if set.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("labels of sample {i} are not strictly increasing")));
            }
            if set.last().is_some_and(|&l| l as usize >= vocab.len()) {
                return Err(Error::Config(format!("sample {i} has a label outside the vocabulary")));
            }
        }
        Ok(EmbeddingDataset {
            sample_ids,
            x,
            labels,
            vocab,
        })
    }

    /// Builds a dataset from per-sample code lists, deriving the vocabulary.
    pub fn from_codes<S: AsRef<str>>(sample_ids: Vec<String>, x: Matrix, codes: &[Vec<S>]) -> Result<Self> {
        let vocab = build_vocabulary(codes.iter().map(|c| c.iter()));
        let labels = codes
            .iter()
            .map(|set| {
                let mut ids: Vec<u32> = set.iter().filter_map(|c| vocab.id(c.as_ref())).collect();
                ids.sort_unstable();
                ids.dedup();
                ids
            })
            .collect();
        Self::new(sample_ids, x, labels, vocab)
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn n_labels(&self) -> usize {
        self.vocab.len()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.sample_ids
    }

    pub fn x(&self) -> &Matrix {
        &self.x
    }

    pub fn labels(&self) -> &[Vec<u32>] {
        &self.labels
    }

    pub fn vocab(&self) -> &LabelVocabulary {
        &self.vocab
    }

    /// Per-label positive counts.
    pub fn label_support(&self) -> Vec<usize> {
        let mut counts = vec![0; self.vocab.len()];
        for set in &self.labels {
            for &l in set {
                counts[l as usize] += 1;
            }
        }
        counts
    }

    /// Multi-hot target matrix, n × vocabulary size.
    pub fn label_matrix(&self) -> Matrix {
        let c = self.vocab.len();
        let mut m = Matrix::zeros(self.len(), c);
        for (i, set) in self.labels.iter().enumerate() {
            for &l in set {
                m.set(i, l as usize, 1.0);
            }
        }
        m
    }

    /// Rows at `indices`, in order, sharing this dataset's vocabulary.
    pub fn subset(&self, indices: &[usize]) -> EmbeddingDataset {
        EmbeddingDataset {
            sample_ids: indices.iter().map(|&i| self.sample_ids[i].clone()).collect(),
            x: self.x.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i].clone()).collect(),
            vocab: self.vocab.clone(),
        }
    }

    /// Same samples with embeddings replaced (e.g. after standardization).
    pub fn with_x(&self, x: Matrix) -> Result<EmbeddingDataset> {
        if x.rows() != self.len() {
            return Err(Error::Dimension {
                op: "with_x",
                left: self.x.shape(),
                right: x.shape(),
            });
        }
        Ok(EmbeddingDataset { x, ..self.clone() })
    }

    /// Re-expresses labels against `vocab`. Codes it lacks are dropped and
    /// counted in the returned tally.
    pub fn remap_labels(&self, vocab: &LabelVocabulary) -> (EmbeddingDataset, usize) {
        let translate: Vec<Option<u32>> = self.vocab.codes().iter().map(|c| vocab.id(c)).collect();
        let mut unknown = 0;
        let labels = self
            .labels
            .iter()
            .map(|set| {
                let mut ids: Vec<u32> = set
                    .iter()
                    .filter_map(|&l| {
                        let t = translate[l as usize];
                        if t.is_none() {
                            unknown += 1;
                        }
                        t
                    })
                    .collect();
                ids.sort_unstable();
                ids
            })
            .collect();
        let ds = EmbeddingDataset {
            sample_ids: self.sample_ids.clone(),
            x: self.x.clone(),
            labels,
            vocab: vocab.clone(),
        };
        (ds, unknown)
    }
}

/// Drops labels with fewer than `min_count` positives, then drops samples
/// left without labels. `min_count = 0` returns the dataset unchanged.
pub fn filter_rare_labels(ds: &EmbeddingDataset, min_count: usize) -> Result<EmbeddingDataset> {
    if min_count == 0 {
        return Ok(ds.clone());
    }
    let support = ds.label_support();
    let kept: Vec<usize> = (0..ds.n_labels()).filter(|&l| support[l] >= min_count).collect();
    let mut new_id = vec![None; ds.n_labels()];
    for (new, &old) in kept.iter().enumerate() {
        new_id[old] = Some(new as u32);
    }
    let vocab = LabelVocabulary {
        codes: kept.iter().map(|&l| ds.vocab.codes[l].clone()).collect(),
    };
    let mut keep_rows = Vec::new();
    let mut labels = Vec::new();
    for (i, set) in ds.labels.iter().enumerate() {
        let mapped: Vec<u32> = set.iter().filter_map(|&l| new_id[l as usize]).collect();
        if !mapped.is_empty() {
            keep_rows.push(i);
            labels.push(mapped);
        }
    }
    if keep_rows.is_empty() {
        return Err(Error::EmptyDataset(format!("filtering labels below {min_count} samples")));
    }
    Ok(EmbeddingDataset {
        sample_ids: keep_rows.iter().map(|&i| ds.sample_ids[i].clone()).collect(),
        x: ds.x.select_rows(&keep_rows),
        labels,
        vocab,
    })
}

#[cfg(test)]
mod tests;
