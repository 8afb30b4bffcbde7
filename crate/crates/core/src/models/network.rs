use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::spec::{count_parameters, Family, ModelSpec};
use crate::error::{Error, Result};
use crate::numkit::{
    adamw_step, affine, affine_backward, batchnorm_backward, batchnorm_eval, batchnorm_train, dropout,
    dropout_backward, relu, relu_backward, sigmoid, sigmoid_backward, AdamWState, BatchNormCache,
    Matrix, Mode, RunningStats,
};

/// A trainable tensor with its gradient buffer and optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Matrix,
    pub grad: Matrix,
    pub opt: AdamWState,
}

impl Param {
    fn new(value: Matrix) -> Self {
        let (r, c) = value.shape();
        Param {
            grad: Matrix::zeros(r, c),
            opt: AdamWState::new(r, c),
            value,
        }
    }
}

/// A shaped block of `f64` values; the unit of parameter exchange.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(dims.iter().product::<usize>(), data.len());
        Tensor { dims, data }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    weight: Param,
    bias: Param,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        // Sampled in f32 so freshly built models survive the f32 checkpoint.
        let w = (0..fan_in * fan_out)
            .map(|_| rng.random_range(-bound as f32..bound as f32) as f64)
            .collect();
        Dense {
            weight: Param::new(Matrix::from_vec(fan_in, fan_out, w).expect("sized")),
            bias: Param::new(Matrix::zeros(1, fan_out)),
        }
    }

    fn kaiming(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::init(fan_in, fan_out, (6.0 / fan_in as f64).sqrt(), rng)
    }

    fn xavier(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        Self::init(fan_in, fan_out, (6.0 / (fan_in + fan_out) as f64).sqrt(), rng)
    }

    fn forward(&self, x: &Matrix) -> Result<Matrix> {
        affine(x, &self.weight.value, self.bias.value.as_slice())
    }

    /// Stores parameter gradients and returns the input gradient.
    fn backward(&mut self, x: &Matrix, grad: &Matrix) -> Result<Matrix> {
        let g = affine_backward(x, &self.weight.value, grad)?;
        self.weight.grad = g.dw;
        self.bias.grad = Matrix::row_vector(&g.db);
        Ok(g.dx)
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Norm {
    scale: Param,
    shift: Param,
    stats: RunningStats,
}

impl Norm {
    fn new(width: usize) -> Self {
        Norm {
            scale: Param::new(Matrix::filled(1, width, 1.0)),
            shift: Param::new(Matrix::zeros(1, width)),
            stats: RunningStats::new(width),
        }
    }

    fn train(&mut self, x: &Matrix) -> Result<(Matrix, BatchNormCache)> {
        batchnorm_train(x, self.scale.value.as_slice(), self.shift.value.as_slice(), &mut self.stats)
    }

    fn eval(&self, x: &Matrix) -> Result<Matrix> {
        batchnorm_eval(x, self.scale.value.as_slice(), self.shift.value.as_slice(), &self.stats)
    }

    fn backward(&mut self, cache: &BatchNormCache, grad: &Matrix) -> Result<Matrix> {
        let g = batchnorm_backward(cache, self.scale.value.as_slice(), grad)?;
        self.scale.grad = Matrix::row_vector(&g.dscale);
        self.shift.grad = Matrix::row_vector(&g.dshift);
        Ok(g.dx)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Block {
    /// affine [+ batchnorm] + ReLU + dropout
    Hidden { dense: Dense, norm: Option<Norm> },
    /// y = ReLU(x + dropout(batchnorm(affine(x))))
    Residual { dense: Dense, norm: Norm },
}

#[derive(Clone, Debug)]
enum BlockCache {
    Hidden {
        input: Matrix,
        norm: Option<BatchNormCache>,
        activated: Matrix,
        mask: Option<Matrix>,
    },
    Residual {
        input: Matrix,
        norm: BatchNormCache,
        mask: Option<Matrix>,
        output: Matrix,
    },
}

/// Activations recorded by a train-mode forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    version: u64,
    blocks: Vec<BlockCache>,
    head_input: Matrix,
    probs: Matrix,
}

impl ForwardCache {
    pub fn probs(&self) -> &Matrix {
        &self.probs
    }
}

/// A classifier: hidden blocks followed by an affine head and sigmoid.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    spec: ModelSpec,
    blocks: Vec<Block>,
    head: Dense,
    version: u64,
}

/// Builds a model with seeded Kaiming/Xavier-uniform weights and zero biases.
pub fn build_model(spec: &ModelSpec, seed: u64) -> Result<Model> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = spec.input_dim;
    let mut blocks = Vec::new();
    let last = match spec.family {
        Family::Mlp => {
            let h = spec.hidden[0];
            blocks.push(Block::Hidden {
                dense: Dense::kaiming(d, h, &mut rng),
                norm: None,
            });
            h
        }
        Family::DeepMlp => {
            let mut prev = d;
            for &h in &spec.hidden {
                blocks.push(Block::Hidden {
                    dense: Dense::kaiming(prev, h, &mut rng),
                    norm: Some(Norm::new(h)),
                });
                prev = h;
            }
            prev
        }
        Family::DeepResMlp => {
            let (w, n_blocks) = (spec.hidden[0], spec.hidden[1]);
            blocks.push(Block::Hidden {
                dense: Dense::kaiming(d, w, &mut rng),
                norm: Some(Norm::new(w)),
            });
            for _ in 0..n_blocks {
                blocks.push(Block::Residual {
                    dense: Dense::kaiming(w, w, &mut rng),
                    norm: Norm::new(w),
                });
            }
            w
        }
    };
    let head = Dense::xavier(last, spec.output_dim, &mut rng);
    Ok(Model {
        spec: spec.clone(),
        blocks,
        head,
        version: 0,
    })
}

impl Model {
    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn has_batchnorm(&self) -> bool {
        self.spec.family != Family::Mlp
    }

    fn check_input(&self, x: &Matrix) -> Result<()> {
        if x.cols() != self.spec.input_dim {
            return Err(Error::Dimension {
                op: "model input",
                left: x.shape(),
                right: (x.rows(), self.spec.input_dim),
            });
        }
        Ok(())
    }

    /// Eval-mode forward pass: no dropout, batch norm from running stats.
    pub fn predict(&self, x: &Matrix) -> Result<Matrix> {
        self.check_input(x)?;
        let mut h = x.clone();
        for block in &self.blocks {
            h = match block {
                Block::Hidden { dense, norm } => {
                    let mut z = dense.forward(&h)?;
                    if let Some(norm) = norm {
                        z = norm.eval(&z)?;
                    }
                    relu(&z)
                }
                Block::Residual { dense, norm } => {
                    let z = norm.eval(&dense.forward(&h)?)?;
                    relu(&h.add(&z)?)
                }
            };
        }
        Ok(sigmoid(&self.head.forward(&h)?))
    }

    /// Forward pass in either mode. Train mode updates batch-norm running
    /// statistics, draws dropout masks from `rng` and returns a cache for
    /// [`Model::backward`].
    pub fn forward<R: Rng + ?Sized>(
        &mut self,
        x: &Matrix,
        mode: Mode,
        rng: &mut R,
    ) -> Result<(Matrix, Option<ForwardCache>)> {
        if mode == Mode::Eval {
            return Ok((self.predict(x)?, None));
        }
        self.check_input(x)?;
        if self.has_batchnorm() && x.rows() < 2 {
            return Err(Error::BatchSize(x.rows()));
        }
        let p = self.spec.dropout_p;
        let mut caches = Vec::with_capacity(self.blocks.len());
        let mut h = x.clone();
        for block in &mut self.blocks {
            let (out, cache) = match block {
                Block::Hidden { dense, norm } => {
                    let mut z = dense.forward(&h)?;
                    let norm_cache = match norm {
                        Some(norm) => {
                            let (zn, c) = norm.train(&z)?;
                            z = zn;
                            Some(c)
                        }
                        None => None,
                    };
                    let activated = relu(&z);
                    let (out, mask) = dropout(&activated, p, Mode::Train, rng)?;
                    let cache = BlockCache::Hidden {
                        input: h,
                        norm: norm_cache,
                        activated,
                        mask,
                    };
                    (out, cache)
                }
                Block::Residual { dense, norm } => {
                    let (zn, norm_cache) = norm.train(&dense.forward(&h)?)?;
                    let (zd, mask) = dropout(&zn, p, Mode::Train, rng)?;
                    let output = relu(&h.add(&zd)?);
                    let cache = BlockCache::Residual {
                        input: h,
                        norm: norm_cache,
                        mask,
                        output: output.clone(),
                    };
                    (output, cache)
                }
            };
            caches.push(cache);
            h = out;
        }
        let probs = sigmoid(&self.head.forward(&h)?);
        let cache = ForwardCache {
            version: self.version,
            blocks: caches,
            head_input: h,
            probs: probs.clone(),
        };
        Ok((probs, Some(cache)))
    }

    /// Backpropagates `loss_grad` (d loss / d probs) through the cached pass,
    /// overwriting every parameter gradient. Returns d loss / d input.
    pub fn backward(&mut self, cache: &ForwardCache, loss_grad: &Matrix) -> Result<Matrix> {
        if cache.version != self.version || cache.blocks.len() != self.blocks.len() {
            return Err(Error::StaleCache);
        }
        cache.probs.ensure_same_shape(loss_grad, "model backward")?;
        let g_logits = sigmoid_backward(&cache.probs, loss_grad)?;
        let mut g = self.head.backward(&cache.head_input, &g_logits)?;
        for (block, bc) in self.blocks.iter_mut().zip(&cache.blocks).rev() {
            g = match (block, bc) {
                (
                    Block::Hidden { dense, norm },
                    BlockCache::Hidden {
                        input,
                        norm: norm_cache,
                        activated,
                        mask,
                    },
                ) => {
                    let g_act = dropout_backward(mask.as_ref(), &g)?;
                    let mut g_z = relu_backward(activated, &g_act)?;
                    match (norm, norm_cache) {
                        (Some(norm), Some(c)) => g_z = norm.backward(c, &g_z)?,
                        (None, None) => {}
                        _ => return Err(Error::StaleCache),
                    }
                    dense.backward(input, &g_z)?
                }
                (
                    Block::Residual { dense, norm },
                    BlockCache::Residual {
                        input,
                        norm: norm_cache,
                        mask,
                        output,
                    },
                ) => {
                    let g_sum = relu_backward(output, &g)?;
                    let g_norm = dropout_backward(mask.as_ref(), &g_sum)?;
                    let g_pre = norm.backward(norm_cache, &g_norm)?;
                    dense.backward(input, &g_pre)?.add(&g_sum)?
                }
                _ => return Err(Error::StaleCache),
            };
        }
        Ok(g)
    }

    pub fn params(&self) -> Vec<&Param> {
        let mut out = Vec::new();
        for block in &self.blocks {
            let (dense, norm) = match block {
                Block::Hidden { dense, norm } => (dense, norm.as_ref()),
                Block::Residual { dense, norm } => (dense, Some(norm)),
            };
            out.push(&dense.weight);
            out.push(&dense.bias);
            if let Some(n) = norm {
                out.push(&n.scale);
                out.push(&n.shift);
            }
        }
        out.push(&self.head.weight);
        out.push(&self.head.bias);
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let mut out = Vec::new();
        for block in &mut self.blocks {
            let (dense, norm) = match block {
                Block::Hidden { dense, norm } => (dense, norm.as_mut()),
                Block::Residual { dense, norm } => (dense, Some(norm)),
            };
            out.push(&mut dense.weight);
            out.push(&mut dense.bias);
            if let Some(n) = norm {
                out.push(&mut n.scale);
                out.push(&mut n.shift);
            }
        }
        out.push(&mut self.head.weight);
        out.push(&mut self.head.bias);
        out
    }

    pub fn running_stats(&self) -> Vec<&RunningStats> {
        self.blocks
            .iter()
            .filter_map(|b| match b {
                Block::Hidden { norm, .. } => norm.as_ref().map(|n| &n.stats),
                Block::Residual { norm, .. } => Some(&norm.stats),
            })
            .collect()
    }

    fn running_stats_mut(&mut self) -> Vec<&mut RunningStats> {
        self.blocks
            .iter_mut()
            .filter_map(|b| match b {
                Block::Hidden { norm, .. } => norm.as_mut().map(|n| &mut n.stats),
                Block::Residual { norm, .. } => Some(&mut norm.stats),
            })
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.grad.as_mut_slice().fill(0.0);
        }
    }

    /// Applies one AdamW update to every parameter. Invalidates outstanding
    /// forward caches.
    pub fn step(&mut self, lr: f64, weight_decay: f64) -> Result<()> {
        if self.params().iter().any(|p| !p.grad.is_finite()) {
            return Err(Error::Numeric("model gradient".into()));
        }
        for p in self.params_mut() {
            adamw_step(&mut p.value, &p.grad, &mut p.opt, lr, weight_decay)?;
        }
        self.version += 1;
        Ok(())
    }

    pub fn reset_optimizer(&mut self) {
        for p in self.params_mut() {
            p.opt.reset();
        }
    }

    /// Trainable parameters flattened in build order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|p| p.value.as_slice().iter().copied())
            .collect()
    }

    /// Running means and variances flattened in build order.
    pub fn flat_running_stats(&self) -> Vec<f64> {
        self.running_stats()
            .iter()
            .flat_map(|s| s.mean.iter().chain(&s.var).copied())
            .collect()
    }

    /// Full model state exchanged during federation: every parameter, then
    /// every batch-norm mean and variance.
    pub fn state_tensors(&self) -> Vec<Tensor> {
        let mut out: Vec<Tensor> = self
            .params()
            .iter()
            .map(|p| {
                let dims = if p.value.rows() == 1 {
                    vec![p.value.cols()]
                } else {
                    vec![p.value.rows(), p.value.cols()]
                };
                Tensor::new(dims, p.value.as_slice().to_vec())
            })
            .collect();
        for s in self.running_stats() {
            out.push(Tensor::new(vec![s.width()], s.mean.clone()));
            out.push(Tensor::new(vec![s.width()], s.var.clone()));
        }
        out
    }

    pub fn flat_state(&self) -> Vec<f64> {
        let mut v = self.flat_params();
        v.extend(self.flat_running_stats());
        v
    }

    pub fn flat_state_len(&self) -> usize {
        count_parameters(&self.spec) + 2 * self.spec.norm_widths().iter().sum::<usize>()
    }

    /// Overwrites parameters and running stats from a flat state vector,
    /// leaving optimizer moments untouched.
    pub fn load_flat_state(&mut self, state: &[f64]) -> Result<()> {
        let n_params = count_parameters(&self.spec);
        if state.len() != self.flat_state_len() {
            return Err(Error::Dimension {
                op: "load_flat_state",
                left: (self.flat_state_len(), 1),
                right: (state.len(), 1),
            });
        }
        self.load_flat_params(&state[..n_params])?;
        self.load_flat_running_stats(&state[n_params..])
    }

    pub fn load_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let expected = count_parameters(&self.spec);
        if flat.len() != expected {
            return Err(Error::Dimension {
                op: "load_flat_params",
                left: (expected, 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let n = p.value.len();
            p.value.as_mut_slice().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        self.version += 1;
        Ok(())
    }

    pub fn load_flat_running_stats(&mut self, flat: &[f64]) -> Result<()> {
        let expected = 2 * self.spec.norm_widths().iter().sum::<usize>();
        if flat.len() != expected {
            return Err(Error::Dimension {
                op: "load_flat_running_stats",
                left: (expected, 1),
                right: (flat.len(), 1),
            });
        }
        let mut offset = 0;
        for s in self.running_stats_mut() {
            let w = s.width();
            s.mean.copy_from_slice(&flat[offset..offset + w]);
            s.var.copy_from_slice(&flat[offset + w..offset + 2 * w]);
            offset += 2 * w;
        }
        Ok(())
    }

    /// FNV-1a over the bit patterns of the flat state.
    pub fn checksum(&self) -> u64 {
        state_checksum(&self.flat_state())
    }
}

pub fn state_checksum(state: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in state {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    }
    h
}
