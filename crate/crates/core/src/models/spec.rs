use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Mlp,
    DeepMlp,
    DeepResMlp,
}

impl Family {
    pub fn code(self) -> u8 {
        match self {
            Family::Mlp => 0,
            Family::DeepMlp => 1,
            Family::DeepResMlp => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Family::Mlp),
            1 => Some(Family::DeepMlp),
            2 => Some(Family::DeepResMlp),
            _ => None,
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mlp" => Ok(Family::Mlp),
            "deep_mlp" => Ok(Family::DeepMlp),
            "deep_res_mlp" => Ok(Family::DeepResMlp),
            other => Err(Error::Config(format!("unknown model family {other:?}"))),
        }
    }
}

pub const DEFAULT_DROPOUT: f64 = 0.1;
pub const DEFAULT_MLP_HIDDEN: usize = 896;
pub const DEFAULT_DEEP_MLP_HIDDEN: [usize; 3] = [1280, 320, 512];
pub const DEFAULT_RES_WIDTH: usize = 1024;
pub const DEFAULT_RES_BLOCKS: usize = 2;

/// Architecture description.
///
/// `hidden` holds one width for `mlp`, three for `deep_mlp`, and
/// `[width, residual_blocks]` for `deep_res_mlp`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub input_dim: usize,
    pub output_dim: usize,
    pub hidden: Vec<usize>,
    #[serde(default = "default_dropout")]
    pub dropout_p: f64,
}

fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl ModelSpec {
    pub fn new(family: Family, input_dim: usize, output_dim: usize, hidden: Vec<usize>) -> Self {
        ModelSpec {
            family,
            input_dim,
            output_dim,
            hidden,
            dropout_p: DEFAULT_DROPOUT,
        }
    }

    /// Family defaults sized against the published parameter budgets.
    pub fn with_defaults(family: Family, input_dim: usize, output_dim: usize) -> Self {
        let hidden = match family {
            Family::Mlp => vec![DEFAULT_MLP_HIDDEN],
            Family::DeepMlp => DEFAULT_DEEP_MLP_HIDDEN.to_vec(),
            Family::DeepResMlp => vec![DEFAULT_RES_WIDTH, DEFAULT_RES_BLOCKS],
        };
        Self::new(family, input_dim, output_dim, hidden)
    }

    pub fn mlp(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        Self::new(Family::Mlp, input_dim, output_dim, vec![hidden])
    }

    pub fn deep_mlp(input_dim: usize, hidden: [usize; 3], output_dim: usize) -> Self {
        Self::new(Family::DeepMlp, input_dim, output_dim, hidden.to_vec())
    }

    pub fn deep_res_mlp(input_dim: usize, width: usize, blocks: usize, output_dim: usize) -> Self {
        Self::new(Family::DeepResMlp, input_dim, output_dim, vec![width, blocks])
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout_p = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::Config("input_dim and output_dim must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_p) {
            return Err(Error::Config(format!("dropout_p {} outside [0, 1)", self.dropout_p)));
        }
        let arity = match self.family {
            Family::Mlp => 1,
            Family::DeepMlp => 3,
            Family::DeepResMlp => 2,
        };
        if self.hidden.len() != arity {
            return Err(Error::Config(format!(
                "{:?} expects {arity} hidden entries, got {}",
                self.family,
                self.hidden.len()
            )));
        }
        let widths_ok = match self.family {
            Family::DeepResMlp => self.hidden[0] >= 1,
            _ => self.hidden.iter().all(|&h| h >= 1),
        };
        if !widths_ok {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        if self.hidden.len() > u8::MAX as usize || self.hidden.iter().any(|&h| h > u32::MAX as usize) {
            return Err(Error::Config("hidden sizes exceed the checkpoint range".into()));
        }
        Ok(())
    }

    /// Widths of the batch-normalized layers, in build order.
    pub(crate) fn norm_widths(&self) -> Vec<usize> {
        match self.family {
            Family::Mlp => vec![],
            Family::DeepMlp => self.hidden.clone(),
            Family::DeepResMlp => vec![self.hidden[0]; 1 + self.hidden[1]],
        }
    }
}

/// Trainable scalars of `spec`: weights, biases and batch-norm scale/shift.
/// Running statistics are not counted.
pub fn count_parameters(spec: &ModelSpec) -> usize {
    let dense = |i: usize, o: usize| (i + 1) * o;
    let (d, c) = (spec.input_dim, spec.output_dim);
    match spec.family {
        Family::Mlp => dense(d, spec.hidden[0]) + dense(spec.hidden[0], c),
        Family::DeepMlp => {
            let mut total = 0;
            let mut prev = d;
            for &h in &spec.hidden {
                total += dense(prev, h) + 2 * h;
                prev = h;
            }
            total + dense(prev, c)
        }
        Family::DeepResMlp => {
            let (w, blocks) = (spec.hidden[0], spec.hidden[1]);
            dense(d, w) + 2 * w + blocks * (dense(w, w) + 2 * w) + dense(w, c)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_counts() {
        assert_eq!(count_parameters(&ModelSpec::mlp(1, 1, 1)), 4);
        assert_eq!(count_parameters(&ModelSpec::mlp(768, 896, 1085)), 1_662_269);
        assert_eq!(count_parameters(&ModelSpec::deep_mlp(768, [1024, 512, 512], 1085)), 2_135_613);
        assert_eq!(count_parameters(&ModelSpec::deep_res_mlp(768, 1024, 2, 1085)), 4_004_925);
    }

    #[test]
    fn arity_is_checked() {
        assert!(ModelSpec::new(Family::Mlp, 4, 2, vec![3, 3]).validate().is_err());
        assert!(ModelSpec::new(Family::DeepMlp, 4, 2, vec![3]).validate().is_err());
        assert!(ModelSpec::new(Family::DeepResMlp, 4, 2, vec![3, 0]).validate().is_ok());
        assert!(ModelSpec::mlp(0, 3, 2).validate().is_err());
        assert!(ModelSpec::mlp(4, 3, 2).with_dropout(1.0).validate().is_err());
    }
}
