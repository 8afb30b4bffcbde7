use std::os::unix::net::UnixStream;
use std::thread;

use fedcode::dataset::partition_clients;
use fedcode::exec::Execution;
use fedcode::fedsim::{build_clients, run_federated, run_rounds, serve, FedConfig, FederatedClient, RemoteClient};
use fedcode::models::{build_model, ModelSpec};
use fedcode::numkit::Matrix;
use fedcode::train::{LabeledData, TrainConfig};

fn problem() -> (LabeledData, LabeledData) {
    let n = 160;
    let x: Vec<f64> = (0..n * 5).map(|i| (((i * 104729) % 37) as f64 - 18.0) / 9.0).collect();
    let x = Matrix::from_vec(n, 5, x).unwrap();
    let y: Vec<f64> = (0..n)
        .flat_map(|r| {
            let v = x.row(r);
            [v[0] + v[1] > 0.0, v[2] > 0.3, v[3] - v[4] < 0.0]
        })
        .map(|b| b as u8 as f64)
        .collect();
    let data = LabeledData::new(x, Matrix::from_vec(n, 3, y).unwrap()).unwrap();
    let val = data.subset(&(120..160).collect::<Vec<_>>());
    (data.subset(&(0..120).collect::<Vec<_>>()), val)
}

fn config() -> FedConfig {
    FedConfig {
        n_clients: 3,
        rounds: 3,
        min_available_clients: 3,
        min_fit_clients: 3,
        min_evaluate_clients: 2,
        fraction_evaluate: 0.6,
        execution: Execution::Sequential,
        seed: 21,
        ..Default::default()
    }
}

fn socket_run() -> (Vec<fedcode::fedsim::RoundRecord>, Vec<f64>) {
    let (train, val) = problem();
    let cfg = config();
    let tcfg = TrainConfig {
        batch_size: 16,
        ..Default::default()
    };
    let partition = partition_clients(&(0..train.len()).collect::<Vec<_>>(), 3, 5).unwrap();
    let init = build_model(&ModelSpec::deep_mlp(5, [8, 8, 8], 3), 6).unwrap();
    let locals = build_clients(&cfg, &tcfg, &init, &train, &partition, &val).unwrap();

    let mut remotes: Vec<Box<dyn FederatedClient>> = Vec::new();
    let mut workers = Vec::new();
    for mut local in locals {
        let (server_end, mut client_end) = UnixStream::pair().unwrap();
        workers.push(thread::spawn(move || serve(&mut local, &mut client_end)));
        remotes.push(Box::new(RemoteClient::new(server_end)));
    }
    let mut global = init;
    let records = run_rounds(&cfg, &mut global, &mut remotes, |_| Ok(())).unwrap();
    drop(remotes);
    for w in workers {
        w.join().unwrap().unwrap();
    }
    (records, global.flat_state())
}

#[test]
fn socket_transport_tracks_loopback_within_f32_rounding() {
    let (records, state) = socket_run();
    assert_eq!(records.len(), 3);

    let (train, val) = problem();
    let tcfg = TrainConfig {
        batch_size: 16,
        ..Default::default()
    };
    let partition = partition_clients(&(0..train.len()).collect::<Vec<_>>(), 3, 5).unwrap();
    let init = build_model(&ModelSpec::deep_mlp(5, [8, 8, 8], 3), 6).unwrap();
    let loop_run = run_federated(&config(), &tcfg, init, &train, &partition, &val, |_| Ok(())).unwrap();

    for (a, b) in records.iter().zip(&loop_run.rounds) {
        assert_eq!(a.fit_clients, b.fit_clients);
        assert_eq!(a.eval_clients, b.eval_clients);
        assert!((a.train_loss - b.train_loss).abs() < 1e-3, "{} vs {}", a.train_loss, b.train_loss);
    }
    let max_diff = state
        .iter()
        .zip(loop_run.model.flat_state())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(max_diff < 1e-3, "max |diff| = {max_diff}");
}

#[test]
fn socket_transport_is_deterministic() {
    assert_eq!(socket_run(), socket_run());
}
