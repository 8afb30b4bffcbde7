mod common;

use fedcode::dataset::{apply_standardizer, fit_standardizer};
use fedcode::loss::HybridLossConfig;
use fedcode::models::{build_model, ModelSpec};
use fedcode::synthgen::{generate, SynthConfig};
use fedcode::train::{evaluate_model, train_model, LabeledData, TrainConfig};

fn synth_data() -> LabeledData {
    let ds = generate(&SynthConfig {
        seed: 4,
        ..SynthConfig::new(2000, 64, 16)
    })
    .unwrap();
    let std = fit_standardizer(ds.x()).unwrap();
    LabeledData::new(apply_standardizer(ds.x(), &std).unwrap(), ds.label_matrix()).unwrap()
}

#[test]
fn loss_trends_down_on_synthetic_data() {
    let data = synth_data();
    let mut model = build_model(&ModelSpec::with_defaults(fedcode::models::Family::DeepMlp, 64, 16), 1).unwrap();
    let cfg = TrainConfig {
        epochs: 10,
        seed: 2,
        ..Default::default()
    };
    let logs = train_model(&mut model, &data, None, &cfg).unwrap();
    assert_eq!(logs.len(), 10);
    assert!(logs[9].mean_loss < logs[0].mean_loss, "{} vs {}", logs[9].mean_loss, logs[0].mean_loss);
}

#[test]
fn same_seeds_give_identical_parameters() {
    let data = synth_data();
    let spec = ModelSpec::deep_res_mlp(64, 32, 2, 16);
    let cfg = TrainConfig {
        epochs: 2,
        seed: 9,
        ..Default::default()
    };
    let run = || {
        let mut m = build_model(&spec, 3).unwrap();
        train_model(&mut m, &data, None, &cfg).unwrap();
        m.flat_state()
    };
    assert_eq!(run(), run());
}

#[test]
fn full_batch_training_ignores_row_order() {
    let data = synth_data().subset(&(0..300).collect::<Vec<_>>());
    let mut order: Vec<usize> = (0..300).collect();
    order.reverse();
    order.rotate_left(77);
    let shuffled = data.subset(&order);
    let spec = ModelSpec::deep_mlp(64, [24, 12, 16], 16).with_dropout(0.0);
    let cfg = TrainConfig {
        epochs: 3,
        batch_size: 300,
        seed: 5,
        ..Default::default()
    };
    let mut a = build_model(&spec, 8).unwrap();
    let mut b = build_model(&spec, 8).unwrap();
    train_model(&mut a, &data, None, &cfg).unwrap();
    train_model(&mut b, &shuffled, None, &cfg).unwrap();
    let diff = a
        .flat_state()
        .iter()
        .zip(b.flat_state())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    // Same batch, different summation order: equal up to rounding.
    assert!(diff < 1e-9, "max |diff| = {diff}");
}

#[test]
fn evaluation_is_pure_and_repeatable() {
    let data = synth_data();
    let mut model = build_model(&ModelSpec::deep_mlp(64, [32, 16, 16], 16), 0).unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..Default::default()
    };
    train_model(&mut model, &data, None, &cfg).unwrap();
    let before = model.clone();
    let loss_cfg = HybridLossConfig::default();
    let first = evaluate_model(&model, &data, 0.5, &loss_cfg).unwrap();
    let second = evaluate_model(&model, &data, 0.5, &loss_cfg).unwrap();
    assert_eq!(first, second);
    assert_eq!(model, before);
}

#[test]
fn untrained_model_scores_strictly_inside_unit_interval() {
    let data = synth_data();
    let model = build_model(&ModelSpec::mlp(64, 64, 16), 0).unwrap();
    let (report, _) = evaluate_model(&model, &data, 0.5, &HybridLossConfig::default()).unwrap();
    assert!(report.micro_f1 > 0.0 && report.micro_f1 < 1.0, "{}", report.micro_f1);
}

#[test]
fn exact_model_scores_perfectly_with_tiny_loss() {
    let data = common::oracle_data(40, 6);
    let model = common::oracle_model(6);
    let (report, loss) = evaluate_model(&model, &data, 0.5, &HybridLossConfig::default()).unwrap();
    assert_eq!(report.headline(), [1.0; 6]);
    assert!(loss < 1e-5, "{loss}");
}
