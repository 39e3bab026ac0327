use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rrforge_nn::graph::Graph;
use rrforge_nn::optim::{Adam, AdamConfig};
use rrforge_nn::params::{ParamKind, ParamStore};
use rrforge_nn::serialize::{load_file, save_file};
use rrforge_nn::train::{evaluate_mae, train, Example, TrainConfig};
use rrforge_nn::{Error, ModelConfig, RrModel, Tensor};

fn small_config() -> ModelConfig {
    ModelConfig { input_length: 128, max_filters: 32, head_hidden: 16, ..ModelConfig::default() }
}

/// Sinusoids whose frequency follows the label, as a rate-like toy task.
fn examples(subject_prefix: &str, subjects: usize, per: usize, seed: u64, label: impl Fn(&mut ChaCha8Rng) -> f64) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for s in 0..subjects {
        for k in 0..per {
            let rr = label(&mut rng);
            let phase: f64 = rng.random_range(0.0..6.28);
            let mut input = Vec::with_capacity(3 * 128);
            for c in 0..3 {
                for t in 0..128 {
                    let v = (2.0 * std::f64::consts::PI * rr / 60.0 * t as f64 / 4.0 + phase + c as f64).sin();
                    input.push((0.9 * v + 0.05 * rng.random_range(-1.0..1.0)) as f32);
                }
            }
            out.push(Example { subject_id: format!("{subject_prefix}{s:02}"), segment_id: format!("{s:02}_{k:03}"), input, label: rr });
        }
    }
    out
}

fn uniform_rr(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(8.0..25.0)
}

#[test]
fn two_layer_network_overfits_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rand_t = |shape: &[usize], rng: &mut ChaCha8Rng, scale: f64| {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| scale * rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    let x = rand_t(&[16, 8], &mut rng, 1.0);
    let y: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut store = ParamStore::new();
    let w1 = store.add("w1", ParamKind::Trainable, rand_t(&[32, 8], &mut rng, 0.5));
    let b1 = store.add("b1", ParamKind::Trainable, Tensor::zeros(&[32]));
    let w2 = store.add("w2", ParamKind::Trainable, rand_t(&[1, 32], &mut rng, 0.2));
    let b2 = store.add("b2", ParamKind::Trainable, Tensor::zeros(&[1]));
    let mut adam = Adam::new(AdamConfig::default(), &store);
    let mut last = f64::INFINITY;
    for _ in 0..2000 {
        let mut g = Graph::new();
        let xv = g.input(x.clone()).unwrap();
        let (a, b, c, d) = (g.param(&store, w1).unwrap(), g.param(&store, b1).unwrap(), g.param(&store, w2).unwrap(), g.param(&store, b2).unwrap());
        let h = g.dense(xv, a, b).unwrap();
        let h = g.leaky_relu(h, 0.2).unwrap();
        let out = g.dense(h, c, d).unwrap();
        let loss = g.smooth_l1(out, &y).unwrap();
        last = g.value(loss).data[0];
        if last < 1e-3 {
            break;
        }
        g.backward(loss).unwrap();
        store.zero_grads();
        g.accumulate_param_grads(&mut store);
        adam.step(&mut store, 1e-2);
    }
    assert!(last < 1e-3, "final loss {last}");
}

#[test]
fn overlapping_subjects_are_rejected() {
    let train_set = examples("s", 3, 4, 1, uniform_rr);
    let mut val = examples("v", 1, 4, 2, uniform_rr);
    val[2].subject_id = "s01".into();
    let mut m = RrModel::build(&small_config(), 0).unwrap();
    let err = train(&mut m, &train_set, &val, &TrainConfig::default()).unwrap_err();
    assert!(matches!(err, Error::InvalidSplit(ref msg) if msg.contains("s01")), "{err}");
    assert!(matches!(train(&mut m, &[], &val, &TrainConfig::default()), Err(Error::InvalidArgument(_))));
}

#[test]
fn without_patience_runs_every_step() {
    let train_set = examples("s", 2, 4, 1, uniform_rr);
    let val = examples("v", 1, 2, 2, uniform_rr);
    let mut m = RrModel::build(&small_config(), 0).unwrap();
    let cfg = TrainConfig { epochs: 3, steps_per_epoch: 4, batch_size: 4, early_stop_patience: None, ..TrainConfig::default() };
    let out = train(&mut m, &train_set, &val, &cfg).unwrap();
    assert_eq!(out.steps, 12);
    assert_eq!(out.history.len(), 3);
}

#[test]
fn seeded_training_is_reproducible_and_order_free() {
    let train_set = examples("s", 3, 5, 1, uniform_rr);
    let val = examples("v", 1, 4, 2, uniform_rr);
    let cfg = TrainConfig { epochs: 3, steps_per_epoch: 5, batch_size: 6, seed: 42, ..TrainConfig::default() };
    let run = |set: &[Example]| {
        let mut m = RrModel::build(&small_config(), 7).unwrap();
        let out = train(&mut m, set, &val, &cfg).unwrap();
        (out.history, m.store)
    };
    let (h1, p1) = run(&train_set);
    let (h2, p2) = run(&train_set);
    assert_eq!(h1, h2);
    assert_eq!(p1, p2);
    let mut shuffled = train_set.clone();
    shuffled.reverse();
    shuffled.swap(0, 7);
    let (h3, _) = run(&shuffled);
    assert_eq!(h1, h3);
}

#[test]
fn constant_labels_are_learned_in_brpm() {
    let train_set = examples("s", 2, 8, 3, |_| 17.0);
    let val = examples("v", 1, 4, 4, |_| 17.0);
    let mut m = RrModel::build(&small_config(), 1).unwrap();
    let cfg = TrainConfig { epochs: 20, steps_per_epoch: 15, batch_size: 8, lr0: 1e-2, init_output_bias: false, ..TrainConfig::default() };
    train(&mut m, &train_set, &val, &cfg).unwrap();
    let inputs: Vec<&[f32]> = val.iter().map(|e| e.input.as_slice()).collect();
    for p in m.predict(&inputs, 4).unwrap() {
        assert!((p - 17.0).abs() < 0.1, "{p}");
    }
}

#[test]
fn overfits_sixteen_segments() {
    let train_set = examples("s", 4, 4, 5, uniform_rr);
    // Same windows under other subject names, so the split check passes.
    let val: Vec<Example> = train_set.iter().map(|e| Example { subject_id: format!("copy-{}", e.subject_id), ..e.clone() }).collect();
    let mut m = RrModel::build(&small_config(), 2).unwrap();
    let cfg = TrainConfig { epochs: 30, steps_per_epoch: 20, batch_size: 8, lr0: 3e-3, early_stop_patience: None, ..TrainConfig::default() };
    let out = train(&mut m, &train_set, &val, &cfg).unwrap();
    assert!(out.best_val_mae < 0.5, "best val MAE {}", out.best_val_mae);
    assert!((evaluate_mae(&m, &val, 8).unwrap() - out.best_val_mae).abs() < 1e-12);
    assert!(out.history[0].train_loss > out.history.last().unwrap().train_loss);
}

#[test]
fn model_file_round_trip() {
    let m = RrModel::build(&small_config(), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.bin");
    save_file(&path, &m.store).unwrap();
    let mut other = RrModel::build(&small_config(), 4).unwrap();
    assert_ne!(other.store, m.store);
    load_file(&path, &mut other.store).unwrap();
    assert_eq!(other.store, m.store);
}

#[test]
fn parameter_counts() {
    let dense_head = 64 + 1;
    let conv = 3 * 8 * 3 + 8;
    assert_eq!((dense_head, conv), (65, 80));
    for cfg in [
        small_config(),
        ModelConfig::desk(),
        ModelConfig { input_length: 64, max_filters: 16, ..ModelConfig::default() },
        ModelConfig::default(),
    ] {
        let m = RrModel::build(&cfg, 0).unwrap();
        let w = cfg.stem_filters;
        let nb = cfg.branch_kernels.len();
        let branches: usize = cfg.branch_kernels.iter().map(|k| cfg.input_channels * w * k + w + 2 * w).sum();
        let project = nb * w * cfg.input_channels + cfg.input_channels;
        let stages: usize = cfg.stage_plan().unwrap().iter().map(|s| s.in_channels * s.out_channels * cfg.conv_kernel + 3 * s.out_channels).sum();
        let last = cfg.stage_plan().unwrap().last().unwrap().out_channels;
        let head = last * cfg.head_hidden + cfg.head_hidden + cfg.head_hidden + 1;
        assert_eq!(m.count_params(), branches + project + stages + head, "{cfg:?}");
    }
}
