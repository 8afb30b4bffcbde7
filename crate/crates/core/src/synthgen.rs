//! Seeded synthetic embedding datasets: each label owns a random unit
//! prototype, each sample averages the prototypes of its labels and adds
//! Gaussian noise. Label popularity follows a power law in the label index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingDataset, LabelVocabulary};
use crate::error::{Error, Result};
use crate::numkit::Matrix;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub dim: usize,
    pub n_labels: usize,
    /// Label `l` is drawn with weight `(l + 1)^-freq_exponent`.
    #[serde(default = "default_exponent")]
    pub freq_exponent: f64,
    /// Mean labels per sample; sizes are `1 + Poisson(mean - 1)`.
    #[serde(default = "default_cardinality")]
    pub mean_cardinality: f64,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_exponent() -> f64 {
    1.0
}

fn default_cardinality() -> f64 {
    1.5
}

fn default_noise() -> f64 {
    0.05
}

impl SynthConfig {
    pub fn new(n_samples: usize, dim: usize, n_labels: usize) -> Self {
        SynthConfig {
            n_samples,
            dim,
            n_labels,
            freq_exponent: default_exponent(),
            mean_cardinality: default_cardinality(),
            noise_sigma: default_noise(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_labels == 0 || self.dim == 0 {
            return Err(Error::Config("n_labels and dim must be >= 1".into()));
        }
        if !(self.freq_exponent >= 0.0 && self.freq_exponent.is_finite()) {
            return Err(Error::Config("freq_exponent must be >= 0".into()));
        }
        if !(self.mean_cardinality >= 1.0 && self.mean_cardinality.is_finite()) {
            return Err(Error::Config("mean_cardinality must be >= 1".into()));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config("noise_sigma must be >= 0".into()));
        }
        Ok(())
    }
}

fn padded(prefix: char, i: usize, count: usize) -> String {
    let width = count.saturating_sub(1).to_string().len();
    format!("{prefix}{i:0width$}")
}

/// Unit-norm Gaussian prototypes, one row per label.
pub fn prototypes(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Matrix {
    let mut protos = Matrix::zeros(cfg.n_labels, cfg.dim);
    for l in 0..cfg.n_labels {
        let row = protos.row_mut(l);
        for v in row.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
        row.iter_mut().for_each(|v| *v /= norm);
    }
    protos
}

/// Draws `k` distinct labels with probability proportional to `weights`.
fn weighted_without_replacement(weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut w = weights.to_vec();
    let mut chosen = Vec::with_capacity(k);
    for _ in 0..k {
        let total: f64 = w.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = w.iter().rposition(|&v| v > 0.0).expect("weight left");
        for (l, &v) in w.iter().enumerate() {
            if v <= 0.0 {
                continue;
            }
            if u < v {
                pick = l;
                break;
            }
            u -= v;
        }
        chosen.push(pick as u32);
        w[pick] = 0.0;
    }
    chosen.sort_unstable();
    chosen
}

pub fn generate(cfg: &SynthConfig) -> Result<EmbeddingDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let protos = prototypes(cfg, &mut rng);
    let weights: Vec<f64> = (0..cfg.n_labels)
        .map(|l| ((l + 1) as f64).powf(-cfg.freq_exponent))
        .collect();
    let extra = (cfg.mean_cardinality > 1.0)
        .then(|| Poisson::new(cfg.mean_cardinality - 1.0))
        .transpose()
        .map_err(|e| Error::Config(format!("cardinality: {e}")))?;

    let mut x = Matrix::zeros(cfg.n_samples, cfg.dim);
    let mut labels = Vec::with_capacity(cfg.n_samples);
    for i in 0..cfg.n_samples {
        let k = 1 + extra.as_ref().map_or(0, |p| p.sample(&mut rng) as usize);
        let set = weighted_without_replacement(&weights, k.min(cfg.n_labels), &mut rng);
        let row = x.row_mut(i);
        for &l in &set {
            for (v, p) in row.iter_mut().zip(protos.row(l as usize)) {
                *v += p;
            }
        }
        let inv = 1.0 / set.len() as f64;
        for v in row.iter_mut() {
            let noise: f64 = rng.sample(StandardNormal);
            *v = *v * inv + cfg.noise_sigma * noise;
        }
        labels.push(set);
    }
    let vocab = LabelVocabulary::from_sorted((0..cfg.n_labels).map(|l| padded('L', l, cfg.n_labels)).collect())?;
    let ids = (0..cfg.n_samples).map(|i| padded('s', i, cfg.n_samples)).collect();
    EmbeddingDataset::new(ids, x, labels, vocab)
}
