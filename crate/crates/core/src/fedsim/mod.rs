//! FedAvg simulation: client sampling, weighted averaging, and the round loop.

mod client;
mod wire;

#[cfg(test)]
mod tests;

use std::cmp::Ordering;
use std::sync::Arc;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::ClientPartition;
use crate::error::{Error, Result};
use crate::exec::{derive_seed, map_mut, Execution};
use crate::models::{state_checksum, Model, Tensor};
use crate::train::{LabeledData, TrainConfig};

pub use client::{client_seed, serve, FederatedClient, LocalClient, RemoteClient};
pub use wire::{decode_message, encode_message, read_message, write_message, Message, MAX_FRAME_LEN};

const FIT_STREAM: u64 = 0xF17;
const EVAL_STREAM: u64 = 0xE7A1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FedConfig {
    pub n_clients: usize,
    pub rounds: usize,
    pub fraction_fit: f64,
    pub fraction_evaluate: f64,
    pub min_available_clients: usize,
    pub min_fit_clients: usize,
    pub min_evaluate_clients: usize,
    pub local_epochs: usize,
    /// Zero the client optimizer moments at the start of every round.
    pub reset_optimizer: bool,
    /// Evaluate on each client's own partition instead of the shared
    /// validation split.
    pub evaluate_on_local: bool,
    pub execution: Execution,
    pub seed: u64,
}

impl Default for FedConfig {
    fn default() -> Self {
        FedConfig {
            n_clients: 20,
            rounds: 100,
            fraction_fit: 1.0,
            fraction_evaluate: 0.5,
            min_available_clients: 10,
            min_fit_clients: 10,
            min_evaluate_clients: 5,
            local_epochs: 1,
            reset_optimizer: false,
            evaluate_on_local: false,
            execution: Execution::default(),
            seed: 0,
        }
    }
}

impl FedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_clients == 0 {
            return Err(Error::Config("n_clients must be >= 1".into()));
        }
        for (name, f) in [("fraction_fit", self.fraction_fit), ("fraction_evaluate", self.fraction_evaluate)] {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0, 1]")));
            }
        }
        if self.min_fit_clients == 0 {
            return Err(Error::Config("min_fit_clients must be >= 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be >= 1".into()));
        }
        if self.rounds > u32::MAX as usize {
            return Err(Error::Config("too many rounds".into()));
        }
        Ok(())
    }

    fn check_availability(&self, available: usize) -> Result<()> {
        let required = self
            .min_available_clients
            .max(self.min_fit_clients)
            .max(self.min_evaluate_clients);
        if available < required {
            return Err(Error::Availability { available, required });
        }
        Ok(())
    }
}

/// Picks `max(minimum, round(fraction * n_clients))` distinct clients,
/// returned in ascending id order.
pub fn sample_clients<R: Rng + ?Sized>(
    n_clients: usize,
    fraction: f64,
    minimum: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::param(format!("fraction {fraction} outside [0, 1]")));
    }
    let k = minimum.max((fraction * n_clients as f64).round() as usize);
    if k > n_clients {
        return Err(Error::Availability {
            available: n_clients,
            required: k,
        });
    }
    let mut ids = index::sample(rng, n_clients, k).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

fn round_rng(seed: u64, stream: u64, round: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, &[stream, round as u64]))
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or_else(|| a.len().cmp(&b.len()))
}

/// Sample-weighted mean of flat parameter vectors.
///
/// Updates are put in a canonical order and averaged as offsets from the
/// first one, so the result does not depend on arrival order, a lone update
/// comes back unchanged, and identical updates average to themselves.
pub fn federated_average(updates: &[(&[f64], u64)]) -> Result<Vec<f64>> {
    let Some(first) = updates.first() else {
        return Err(Error::param("no updates to average"));
    };
    let len = first.0.len();
    if let Some((p, _)) = updates.iter().find(|(p, _)| p.len() != len) {
        return Err(Error::Dimension {
            op: "federated_average",
            left: (len, 1),
            right: (p.len(), 1),
        });
    }
    let total: u64 = updates.iter().map(|(_, n)| n).sum();
    if total == 0 {
        return Err(Error::param("updates carry zero samples"));
    }
    let mut order: Vec<&(&[f64], u64)> = updates.iter().collect();
    order.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| lexicographic(a.0, b.0)));

    let anchor = order[0].0;
    let mut out = anchor.to_vec();
    for (params, n) in &order {
        if *n == 0 {
            continue;
        }
        let w = *n as f64 / total as f64;
        for ((o, p), a) in out.iter_mut().zip(params.iter()).zip(anchor) {
            *o += w * (p - a);
        }
    }
    Ok(out)
}

/// Sample-weighted mean of per-client scalars, order independent.
pub fn aggregate_weighted_metrics(values: &[(f64, u64)]) -> Result<f64> {
    let total: u64 = values.iter().map(|(_, n)| n).sum();
    if values.is_empty() {
        return Err(Error::param("no values to aggregate"));
    }
    if total == 0 {
        return Err(Error::param("weighted mean over zero samples"));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.1.cmp(&b.1).then_with(|| a.0.total_cmp(&b.0)));
    Ok(sorted.iter().map(|(v, n)| v * *n as f64).sum::<f64>() / total as f64)
}

/// Weighted metrics from evaluated clients, keyed like a metrics report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregatedMetrics {
    pub n_samples: u64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
}

impl AggregatedMetrics {
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
}

/// Applies [`aggregate_weighted_metrics`] to each of the six headline metrics.
pub fn aggregate_metric_sets(results: &[([f64; 6], u64)]) -> Result<AggregatedMetrics> {
    let mut m = [0.0; 6];
    for (k, slot) in m.iter_mut().enumerate() {
        let column: Vec<(f64, u64)> = results.iter().map(|(v, n)| (v[k], *n)).collect();
        *slot = aggregate_weighted_metrics(&column)?;
    }
    Ok(AggregatedMetrics {
        n_samples: results.iter().map(|(_, n)| n).sum(),
        macro_precision: m[0],
        macro_recall: m[1],
        macro_f1: m[2],
        micro_precision: m[3],
        micro_recall: m[4],
        micro_f1: m[5],
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub fit_clients: Vec<usize>,
    pub train_loss: f64,
    pub eval_clients: Vec<usize>,
    pub eval: AggregatedMetrics,
    pub checksum: u64,
}

fn flatten(tensors: &[Tensor]) -> Vec<f64> {
    tensors.iter().flat_map(|t| t.data.iter().copied()).collect()
}

fn expect_round(msg_round: u32, round: usize) -> Result<()> {
    if msg_round as usize != round {
        return Err(Error::param(format!("client answered round {msg_round} during round {round}")));
    }
    Ok(())
}

/// Drives `cfg.rounds` rounds of FedAvg over `clients`, where client `i`
/// sits at index `i`. `global` is updated in place; `on_round` sees every
/// record as soon as it is complete.
pub fn run_rounds(
    cfg: &FedConfig,
    global: &mut Model,
    clients: &mut [Box<dyn FederatedClient>],
    mut on_round: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<Vec<RoundRecord>> {
    cfg.validate()?;
    cfg.check_availability(clients.len())?;
    let mut records = Vec::with_capacity(cfg.rounds);
    for round in 0..cfg.rounds {
        let fit_ids = sample_clients(
            clients.len(),
            cfg.fraction_fit,
            cfg.min_fit_clients,
            &mut round_rng(cfg.seed, FIT_STREAM, round),
        )?;
        let request = Message::GlobalModel {
            round: round as u32,
            tensors: global.state_tensors(),
        };
        let fits = dispatch(cfg.execution, clients, &fit_ids, &request)?;

        let mut states = Vec::with_capacity(fits.len());
        let mut losses = Vec::with_capacity(fits.len());
        for msg in fits {
            match msg {
                Message::FitResult {
                    round: r,
                    tensors,
                    n_samples,
                    loss,
                } => {
                    expect_round(r, round)?;
                    states.push((flatten(&tensors), n_samples));
                    losses.push((loss, n_samples));
                }
                other => return Err(Error::param(format!("expected a fit result, got {}", other.kind()))),
            }
        }
        let views: Vec<(&[f64], u64)> = states.iter().map(|(s, n)| (s.as_slice(), *n)).collect();
        let averaged = federated_average(&views)?;
        global.load_flat_state(&averaged)?;
        let train_loss = aggregate_weighted_metrics(&losses)?;

        let eval_ids = sample_clients(
            clients.len(),
            cfg.fraction_evaluate,
            cfg.min_evaluate_clients.max(1),
            &mut round_rng(cfg.seed, EVAL_STREAM, round),
        )?;
        let request = Message::EvalRequest {
            round: round as u32,
            tensors: global.state_tensors(),
        };
        let mut evals = Vec::with_capacity(eval_ids.len());
        for msg in dispatch(cfg.execution, clients, &eval_ids, &request)? {
            match msg {
                Message::EvalResult {
                    round: r,
                    n_samples,
                    metrics,
                    ..
                } => {
                    expect_round(r, round)?;
                    evals.push((metrics, n_samples));
                }
                other => return Err(Error::param(format!("expected an eval result, got {}", other.kind()))),
            }
        }
        let record = RoundRecord {
            round,
            fit_clients: fit_ids,
            train_loss,
            eval_clients: eval_ids,
            eval: aggregate_metric_sets(&evals)?,
            checksum: state_checksum(&averaged),
        };
        on_round(&record)?;
        records.push(record);
    }
    Ok(records)
}

/// Sends `msg` to the clients in `ids` (ascending) and returns their replies
/// in the same order.
fn dispatch(
    exec: Execution,
    clients: &mut [Box<dyn FederatedClient>],
    ids: &[usize],
    msg: &Message,
) -> Result<Vec<Message>> {
    let mut chosen: Vec<&mut Box<dyn FederatedClient>> = clients
        .iter_mut()
        .enumerate()
        .filter(|(i, _)| ids.binary_search(i).is_ok())
        .map(|(_, c)| c)
        .collect();
    map_mut(exec, &mut chosen, |c| c.handle(msg)).into_iter().collect()
}

pub struct FederatedRun {
    pub model: Model,
    pub rounds: Vec<RoundRecord>,
}

/// One in-process client per partition slice of `train`. Clients evaluate on
/// `val` unless `cfg.evaluate_on_local` is set.
pub fn build_clients(
    cfg: &FedConfig,
    train_cfg: &TrainConfig,
    initial: &Model,
    train: &LabeledData,
    partition: &ClientPartition,
    val: &LabeledData,
) -> Result<Vec<LocalClient>> {
    if partition.n_clients() != cfg.n_clients {
        return Err(Error::Config(format!(
            "partition has {} clients, configuration asks for {}",
            partition.n_clients(),
            cfg.n_clients
        )));
    }
    let shared = (!cfg.evaluate_on_local).then(|| Arc::new(val.clone()));
    partition
        .clients
        .iter()
        .enumerate()
        .map(|(id, idx)| LocalClient::new(id, train.subset(idx), shared.clone(), initial, train_cfg, cfg))
        .collect()
}

/// Federated training over in-process clients, starting from `initial`.
/// `train_cfg.epochs` is ignored; each round runs `cfg.local_epochs`.
pub fn run_federated(
    cfg: &FedConfig,
    train_cfg: &TrainConfig,
    initial: Model,
    train: &LabeledData,
    partition: &ClientPartition,
    val: &LabeledData,
    on_round: impl FnMut(&RoundRecord) -> Result<()>,
) -> Result<FederatedRun> {
    cfg.validate()?;
    train_cfg.validate()?;
    cfg.check_availability(partition.n_clients())?;
    let mut clients: Vec<Box<dyn FederatedClient>> = build_clients(cfg, train_cfg, &initial, train, partition, val)?
        .into_iter()
        .map(|c| Box::new(c) as Box<dyn FederatedClient>)
        .collect();
    let mut model = initial;
    let rounds = run_rounds(cfg, &mut model, &mut clients, on_round)?;
    Ok(FederatedRun { model, rounds })
}
