#![allow(dead_code)]

use fedcode::dataset::EmbeddingDataset;
use fedcode::models::{build_model, Model, ModelSpec};
use fedcode::numkit::Matrix;
use fedcode::train::LabeledData;

/// Multi-hot targets with a fixed pattern; each label is on for under 90%
/// of rows.
pub fn pattern_targets(n: usize, c: usize) -> Matrix {
    let data = (0..n * c)
        .map(|i| {
            let (r, l) = (i / c, i % c);
            (((r * 31 + l * 17) % 7) < 3 || r % c == l) as u8 as f64
        })
        .collect();
    Matrix::from_vec(n, c, data).unwrap()
}

/// Inputs `2y - 1`, so every input column is +1 exactly when its label is on.
pub fn signed_inputs(y: &Matrix) -> Matrix {
    y.map(|v| 2.0 * v - 1.0)
}

/// An mlp that reproduces its targets: ReLU keeps the positive (label-on)
/// inputs and the head maps them far past either side of 0.5.
pub fn oracle_model(c: usize) -> Model {
    let mut m = build_model(&ModelSpec::mlp(c, c, c).with_dropout(0.0), 0).unwrap();
    let mut flat = Vec::new();
    flat.extend(Matrix::identity(c).into_vec());
    flat.extend(vec![0.0; c]);
    flat.extend(Matrix::identity(c).map(|v| 40.0 * v).into_vec());
    flat.extend(vec![-20.0; c]);
    m.load_flat_params(&flat).unwrap();
    m
}

pub fn oracle_data(n: usize, c: usize) -> LabeledData {
    let y = pattern_targets(n, c);
    LabeledData::new(signed_inputs(&y), y).unwrap()
}

pub fn oracle_dataset(n: usize, c: usize) -> EmbeddingDataset {
    let y = pattern_targets(n, c);
    let codes: Vec<Vec<String>> = (0..n)
        .map(|r| (0..c).filter(|&l| y.get(r, l) == 1.0).map(|l| format!("C{l:02}")).collect())
        .collect();
    let ids = (0..n).map(|r| format!("r{r}")).collect();
    EmbeddingDataset::from_codes(ids, signed_inputs(&y), &codes).unwrap()
}
