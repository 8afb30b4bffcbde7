//! Client endpoints: an in-process trainer and a stream-backed proxy.

use std::io::{Read, Write};
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::exec::derive_seed;
use crate::models::{Model, Tensor};
use crate::train::{evaluate_model, train_epochs, EpochWindow, LabeledData, TrainConfig};

use super::wire::{read_message, write_message, Message};
use super::{flatten, FedConfig};

const CLIENT_STREAM: u64 = 0xC11E;

/// Seed a client trains with under federation seed `seed`.
pub fn client_seed(seed: u64, client: usize) -> u64 {
    derive_seed(seed, &[CLIENT_STREAM, client as u64])
}

/// Anything that answers server messages.
pub trait FederatedClient: Send {
    fn handle(&mut self, msg: &Message) -> Result<Message>;
}

/// A client holding its partition and a persistent local model, so optimizer
/// moments carry over between rounds unless reset.
pub struct LocalClient {
    data: LabeledData,
    eval_data: Option<Arc<LabeledData>>,
    model: Model,
    shapes: Vec<Vec<usize>>,
    train: TrainConfig,
    local_epochs: usize,
    total_epochs: usize,
    reset_optimizer: bool,
}

impl LocalClient {
    /// `train.seed` is replaced by the client's derived seed. Without
    /// `eval_data` the client evaluates on its own partition.
    pub fn new(
        id: usize,
        data: LabeledData,
        eval_data: Option<Arc<LabeledData>>,
        initial: &Model,
        train: &TrainConfig,
        fed: &FedConfig,
    ) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyDataset(format!("partitioning (client {id})")));
        }
        let mut model = initial.clone();
        model.reset_optimizer();
        let shapes = model.state_tensors().into_iter().map(|t| t.dims).collect();
        Ok(LocalClient {
            data,
            eval_data,
            model,
            shapes,
            train: TrainConfig {
                seed: client_seed(fed.seed, id),
                ..train.clone()
            },
            local_epochs: fed.local_epochs,
            total_epochs: fed.rounds * fed.local_epochs,
            reset_optimizer: fed.reset_optimizer,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn n_samples(&self) -> usize {
        self.data.len()
    }

    fn load(&mut self, tensors: &[Tensor]) -> Result<()> {
        let dims: Vec<&Vec<usize>> = tensors.iter().map(|t| &t.dims).collect();
        if dims.len() != self.shapes.len() || dims.iter().zip(&self.shapes).any(|(a, b)| *a != b) {
            return Err(Error::param("global model tensors do not match the client architecture"));
        }
        self.model.load_flat_state(&flatten(tensors))
    }

    fn fit(&mut self, round: u32, tensors: &[Tensor]) -> Result<Message> {
        self.load(tensors)?;
        if self.reset_optimizer {
            self.model.reset_optimizer();
        }
        let window = EpochWindow {
            first: round as usize * self.local_epochs,
            count: self.local_epochs,
            total: self.total_epochs.max((round as usize + 1) * self.local_epochs),
        };
        let logs = train_epochs(&mut self.model, &self.data, None, &self.train, window)?;
        let loss = logs.iter().map(|l| l.mean_loss).sum::<f64>() / logs.len() as f64;
        Ok(Message::FitResult {
            round,
            tensors: self.model.state_tensors(),
            n_samples: self.data.len() as u64,
            loss,
        })
    }

    fn evaluate(&mut self, round: u32, tensors: &[Tensor]) -> Result<Message> {
        self.load(tensors)?;
        let data = self.eval_data.as_deref().unwrap_or(&self.data);
        let (report, _) = evaluate_model(&self.model, data, self.train.threshold, &self.train.loss)?;
        Ok(Message::EvalResult {
            round,
            tensors: Vec::new(),
            n_samples: data.len() as u64,
            metrics: report.headline(),
        })
    }
}

impl FederatedClient for LocalClient {
    fn handle(&mut self, msg: &Message) -> Result<Message> {
        match msg {
            Message::GlobalModel { round, tensors } => self.fit(*round, tensors),
            Message::EvalRequest { round, tensors } => self.evaluate(*round, tensors),
            other => Err(Error::param(format!("client cannot handle a {}", other.kind()))),
        }
    }
}

/// Server-side proxy for a client reached over a byte stream.
pub struct RemoteClient<S> {
    stream: S,
}

impl<S: Read + Write + Send> RemoteClient<S> {
    pub fn new(stream: S) -> Self {
        RemoteClient { stream }
    }
}

impl<S: Read + Write + Send> FederatedClient for RemoteClient<S> {
    fn handle(&mut self, msg: &Message) -> Result<Message> {
        write_message(&mut self.stream, msg)?;
        read_message(&mut self.stream)?
            .ok_or_else(|| Error::Io(std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "client hung up")))
    }
}

/// Answers framed requests on `stream` until the peer closes it.
pub fn serve<C: FederatedClient + ?Sized, S: Read + Write>(client: &mut C, stream: &mut S) -> Result<()> {
    while let Some(msg) = read_message(stream)? {
        let reply = client.handle(&msg)?;
        write_message(stream, &reply)?;
    }
    Ok(())
}
