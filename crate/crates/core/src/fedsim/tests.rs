use super::*;
use crate::dataset::partition_clients;
use crate::models::{build_model, ModelSpec};
use crate::numkit::Matrix;
use crate::train::train_model;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn sample_sizes_follow_fraction_and_minimum() {
    assert_eq!(sample_clients(20, 1.0, 10, &mut rng(0)).unwrap(), (0..20).collect::<Vec<_>>());
    assert_eq!(sample_clients(20, 0.5, 5, &mut rng(0)).unwrap().len(), 10);
    assert_eq!(sample_clients(20, 0.1, 5, &mut rng(0)).unwrap().len(), 5);
    let ids = sample_clients(20, 0.5, 5, &mut rng(3)).unwrap();
    assert!(ids.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(ids, sample_clients(20, 0.5, 5, &mut rng(3)).unwrap());
    assert!(matches!(
        sample_clients(4, 0.5, 5, &mut rng(0)),
        Err(Error::Availability { available: 4, required: 5 })
    ));
}

fn brute_average(updates: &[(Vec<f64>, u64)]) -> Vec<f64> {
    let total: f64 = updates.iter().map(|(_, n)| *n as f64).sum();
    (0..updates[0].0.len())
        .map(|j| updates.iter().map(|(p, n)| *n as f64 * p[j]).sum::<f64>() / total)
        .collect()
}

#[test]
fn average_matches_direct_formula() {
    let updates = vec![
        (vec![1.0, -2.0, 0.5], 10),
        (vec![3.0, 4.0, -0.25], 30),
        (vec![-1.5, 0.0, 2.0], 60),
    ];
    let views: Vec<(&[f64], u64)> = updates.iter().map(|(p, n)| (p.as_slice(), *n)).collect();
    let got = federated_average(&views).unwrap();
    for (g, e) in got.iter().zip(brute_average(&updates)) {
        assert!((g - e).abs() <= 1e-12 * e.abs().max(1.0));
    }
    let mut reversed = views.clone();
    reversed.reverse();
    assert_eq!(federated_average(&reversed).unwrap(), got);
}

#[test]
fn average_edge_cases_are_exact() {
    let p = vec![0.1, 0.2, 0.3];
    assert_eq!(federated_average(&[(&p, 7)]).unwrap(), p);
    assert_eq!(federated_average(&[(&p, 7), (&p, 3), (&p, 11)]).unwrap(), p);
    assert!(federated_average(&[]).is_err());
    assert!(federated_average(&[(&p, 0)]).is_err());
    assert!(matches!(
        federated_average(&[(&p, 1), (&p[..2], 1)]),
        Err(Error::Dimension { .. })
    ));
}

#[test]
fn aggregate_weighted_metrics_and_metrics() {
    assert_eq!(aggregate_weighted_metrics(&[(1.0, 1), (4.0, 3)]).unwrap(), 3.25);
    let agg = aggregate_metric_sets(&[([1.0; 6], 1), ([0.0; 6], 3)]).unwrap();
    assert_eq!(agg.n_samples, 4);
    assert_eq!(agg.headline(), [0.25; 6]);
}

fn sample_tensors() -> Vec<Tensor> {
    vec![
        Tensor::new(vec![2, 3], vec![0.5, -1.0, 2.25, 0.0, 1.0 / 1024.0, -7.5]),
        Tensor::new(vec![3], vec![1.0, 2.0, 3.0]),
        Tensor::new(vec![], vec![4.0]),
    ]
}

fn all_messages() -> Vec<Message> {
    vec![
        Message::GlobalModel {
            round: 3,
            tensors: sample_tensors(),
        },
        Message::FitResult {
            round: 4,
            tensors: sample_tensors(),
            n_samples: 123,
            loss: 0.123456789,
        },
        Message::EvalRequest {
            round: 5,
            tensors: vec![],
        },
        Message::EvalResult {
            round: 6,
            tensors: vec![],
            n_samples: 9,
            metrics: [0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
        },
    ]
}

#[test]
fn messages_round_trip() {
    for msg in all_messages() {
        let frame = encode_message(&msg).unwrap();
        assert_eq!(u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize, frame.len() - 5);
        assert_eq!(decode_message(&frame).unwrap(), msg);
        let mut cursor = std::io::Cursor::new(frame);
        assert_eq!(read_message(&mut cursor).unwrap(), Some(msg));
        assert_eq!(read_message(&mut cursor).unwrap(), None);
    }
}

#[test]
fn tensor_values_narrow_to_f32() {
    let msg = Message::GlobalModel {
        round: 0,
        tensors: vec![Tensor::new(vec![1], vec![0.1])],
    };
    match decode_message(&encode_message(&msg).unwrap()).unwrap() {
        Message::GlobalModel { tensors, .. } => assert_eq!(tensors[0].data[0], 0.1f32 as f64),
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_frames_are_typed() {
    let frame = encode_message(&all_messages()[1]).unwrap();

    let mut bad_type = frame.clone();
    bad_type[4] = 0x09;
    assert!(matches!(decode_message(&bad_type), Err(Error::Format { .. })));

    assert!(matches!(decode_message(&frame[..3]), Err(Error::Length { .. })));
    assert!(matches!(decode_message(&frame[..frame.len() - 1]), Err(Error::Length { .. })));

    let mut longer = frame.clone();
    longer.push(0);
    assert!(matches!(decode_message(&longer), Err(Error::Length { .. })));

    // Consistent header, payload one byte short of the trailer.
    let mut short = frame[..frame.len() - 1].to_vec();
    let len = (short.len() - 5) as u32;
    short[..4].copy_from_slice(&len.to_be_bytes());
    assert!(matches!(decode_message(&short), Err(Error::Corruption { .. })));

    // Payload with an extra byte that no field claims.
    let mut padded = frame.clone();
    padded.push(0);
    let len = (padded.len() - 5) as u32;
    padded[..4].copy_from_slice(&len.to_be_bytes());
    assert!(matches!(decode_message(&padded), Err(Error::Corruption { .. })));

    // First tensor dim inflated far past the payload.
    let mut dims = frame.clone();
    dims[12..16].copy_from_slice(&u32::MAX.to_le_bytes());
    assert!(matches!(decode_message(&dims), Err(Error::Corruption { .. })));

    let mut huge = frame.clone();
    huge[..4].copy_from_slice(&u32::MAX.to_be_bytes());
    assert!(matches!(decode_message(&huge), Err(Error::Length { .. })));

    let mut cursor = std::io::Cursor::new(frame[..frame.len() - 2].to_vec());
    assert!(matches!(read_message(&mut cursor), Err(Error::Length { .. })));
}

fn toy_problem(n: usize, clients: usize) -> (LabeledData, LabeledData, ClientPartition) {
    let x: Vec<f64> = (0..n * 4).map(|i| (((i * 7919) % 23) as f64 - 11.0) / 6.0).collect();
    let x = Matrix::from_vec(n, 4, x).unwrap();
    let y = Matrix::from_vec(
        n,
        3,
        (0..n)
            .flat_map(|r| {
                let row = x.row(r).to_vec();
                [row[0] > 0.0, row[1] + row[2] > 0.0, row[3] < -0.5]
            })
            .map(|b| b as u8 as f64)
            .collect(),
    )
    .unwrap();
    let data = LabeledData::new(x, y).unwrap();
    let idx: Vec<usize> = (0..n).collect();
    let partition = partition_clients(&idx[..n * 3 / 4], clients, 1).unwrap();
    let val = data.subset(&idx[n * 3 / 4..]);
    (data, val, partition)
}

fn small_fed(n_clients: usize, rounds: usize) -> FedConfig {
    FedConfig {
        n_clients,
        rounds,
        min_available_clients: 1,
        min_fit_clients: 1,
        min_evaluate_clients: 1,
        seed: 11,
        ..Default::default()
    }
}

fn small_train() -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        lr_max: 1e-2,
        ..Default::default()
    }
}

#[test]
fn federated_runs_are_deterministic_across_execution_modes() {
    let (data, val, partition) = toy_problem(96, 4);
    let spec = ModelSpec::deep_mlp(4, [8, 6, 5], 3);
    let init = build_model(&spec, 2).unwrap();
    let mut cfg = small_fed(4, 3);
    cfg.fraction_evaluate = 0.5;
    let run = |exec| {
        let cfg = FedConfig { execution: exec, ..cfg.clone() };
        run_federated(&cfg, &small_train(), init.clone(), &data, &partition, &val, |_| Ok(())).unwrap()
    };
    let a = run(Execution::Parallel);
    let b = run(Execution::Sequential);
    assert_eq!(a.rounds, b.rounds);
    assert_eq!(a.model.flat_state(), b.model.flat_state());
    assert_eq!(a.rounds.len(), 3);
    assert!(a.rounds.iter().all(|r| r.eval_clients.len() == 2 && r.fit_clients.len() == 4));
    assert_ne!(a.model.flat_state(), init.flat_state());
}

#[test]
fn single_client_matches_centralized_training() {
    let (data, val, partition) = toy_problem(64, 1);
    let spec = ModelSpec::deep_res_mlp(4, 6, 1, 3);
    let init = build_model(&spec, 9).unwrap();
    let cfg = FedConfig {
        local_epochs: 2,
        ..small_fed(1, 3)
    };
    let fed = run_federated(&cfg, &small_train(), init.clone(), &data, &partition, &val, |_| Ok(())).unwrap();

    let mut central = init;
    let tcfg = TrainConfig {
        epochs: 6,
        seed: client_seed(cfg.seed, 0),
        ..small_train()
    };
    train_model(&mut central, &data.subset(&partition.clients[0]), None, &tcfg).unwrap();
    assert_eq!(fed.model.flat_state(), central.flat_state());
}

#[test]
fn too_few_clients_is_an_availability_error() {
    let (data, val, partition) = toy_problem(40, 3);
    let init = build_model(&ModelSpec::mlp(4, 4, 3), 0).unwrap();
    let cfg = FedConfig {
        n_clients: 3,
        ..Default::default()
    };
    let err = run_federated(&cfg, &small_train(), init, &data, &partition, &val, |_| Ok(()))
        .err()
        .unwrap();
    assert!(matches!(err, Error::Availability { available: 3, required: 10 }));
}

#[test]
fn local_evaluation_uses_partition_sizes() {
    let (data, val, partition) = toy_problem(80, 4);
    let init = build_model(&ModelSpec::mlp(4, 4, 3), 0).unwrap();
    let cfg = FedConfig {
        evaluate_on_local: true,
        fraction_evaluate: 1.0,
        ..small_fed(4, 1)
    };
    let run = run_federated(&cfg, &small_train(), init, &data, &partition, &val, |_| Ok(())).unwrap();
    assert_eq!(run.rounds[0].eval.n_samples, 60);
}

#[test]
fn identical_clients_average_to_a_single_local_result() {
    let (data, val, _) = toy_problem(48, 1);
    let spec = ModelSpec::deep_mlp(4, [6, 5, 4], 3);
    let init = build_model(&spec, 4).unwrap();
    let cfg = small_fed(20, 1);
    let make = || LocalClient::new(0, data.clone(), Some(Arc::new(val.clone())), &init, &small_train(), &cfg).unwrap();

    let mut clients: Vec<Box<dyn FederatedClient>> = (0..20).map(|_| Box::new(make()) as Box<dyn FederatedClient>).collect();
    let mut global = init.clone();
    run_rounds(&cfg, &mut global, &mut clients, |_| Ok(())).unwrap();

    let mut alone = make();
    let reply = alone
        .handle(&Message::GlobalModel {
            round: 0,
            tensors: init.state_tensors(),
        })
        .unwrap();
    assert!(matches!(reply, Message::FitResult { .. }));
    assert_eq!(global.flat_state(), alone.model().flat_state());
}

#[test]
fn zero_rounds_return_the_initial_model() {
    let (data, val, partition) = toy_problem(40, 2);
    let init = build_model(&ModelSpec::mlp(4, 4, 3), 1).unwrap();
    let run = run_federated(&small_fed(2, 0), &small_train(), init.clone(), &data, &partition, &val, |_| Ok(())).unwrap();
    assert!(run.rounds.is_empty());
    assert_eq!(run.model, init);
}
