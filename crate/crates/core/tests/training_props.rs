use nlcnn_core::constraints::{ConstraintPolicy, EnforceMode, ReparamKind};
use nlcnn_core::dataset::{gen_synthetic, SyntheticParams};
use nlcnn_core::model::{format_model, parse_model};
use nlcnn_core::training::{check_constraints, evaluate, train, LayerSpec, Network, Optimizer, Stepper, TrainConfig};
use nlcnn_core::{Activation, SeededRng, Tensor, VariantKind};

fn spec(variant: VariantKind, k_h: usize, k_w: usize, m: usize, activation: Activation) -> LayerSpec {
    LayerSpec {
        variant,
        k_h,
        k_w,
        stride_t: 1,
        stride_c: 1,
        out_channels: m,
        activation,
    }
}

fn modes() -> Vec<EnforceMode> {
    vec![
        EnforceMode::ClipParams,
        EnforceMode::ProjectAfterStep,
        EnforceMode::Reparam(ReparamKind::ScaledSigmoid),
        EnforceMode::Reparam(ReparamKind::ScaledTanh),
        EnforceMode::Reparam(ReparamKind::HardSigmoidClip),
    ]
}

#[test]
fn adam_on_random_objective_keeps_exponents_in_bounds() {
    for mode in modes() {
        let policy = ConstraintPolicy::new(-2.0, 4.0, mode).unwrap();
        let specs = [
            spec(VariantKind::Elementwise, 2, 2, 2, Activation::Tanh),
            spec(VariantKind::Bilinear, 2, 2, 1, Activation::Tanh),
        ];
        let mut rng = SeededRng::new(1);
        let mut net = Network::new(6, 3, &specs, 2, policy, &mut rng).unwrap();
        let x = Tensor::matrix(6, 3, rng.uniform_vec(18, 0.5, 2.0)).unwrap();
        let (_, mut grads) = net.loss_and_grad(&x, 0).unwrap();
        let n = grads.flat().len();
        let mut stepper = Stepper::new(Optimizer::adam(), 0.05);
        // a drifting linear objective: long pushes in one direction, then the other
        for step in 0..1000 {
            let bias = if (step / 250) % 2 == 0 { 1.0 } else { -1.0 };
            let g: Vec<f64> = (0..n).map(|_| bias + rng.normal()).collect();
            grads.set_flat(&g).unwrap();
            stepper.step(&mut net, &mut grads).unwrap();
        }
        let exps = net.exponents().unwrap();
        assert!(exps.iter().all(|&v| (-2.0..=4.0).contains(&v)), "{mode}");
        check_constraints(&net).unwrap();
        if !policy.is_reparam() {
            // the final stretch pushes every exponent upward
            assert!(exps.contains(&4.0), "{mode}: bound never reached");
        }
    }
}

#[test]
fn training_keeps_bounds_under_every_mode() {
    let task = gen_synthetic(SyntheticParams {
        count: 80,
        ..Default::default()
    })
    .unwrap();
    for mode in modes() {
        let policy = ConstraintPolicy::new(-2.0, 4.0, mode).unwrap();
        let mut net = Network::new(
            8,
            2,
            &[spec(VariantKind::FullMatrix, 2, 2, 2, Activation::Relu)],
            2,
            policy,
            &mut SeededRng::new(2),
        )
        .unwrap();
        let config = TrainConfig {
            epochs: 5,
            batch_size: 8,
            lr: 0.1,
            ..Default::default()
        };
        let history = train(&mut net, &task.dataset, None, &config).unwrap();
        assert_eq!(history.len(), 5);
        assert!(
            net.exponents().unwrap().iter().all(|&v| (-2.0..=4.0).contains(&v)),
            "{mode}"
        );
    }
}

#[test]
fn synthetic_loss_trends_down() {
    let task = gen_synthetic(SyntheticParams::default()).unwrap();
    let mut net = Network::new(
        8,
        2,
        &[spec(VariantKind::Elementwise, 1, 1, 1, Activation::Identity)],
        2,
        ConstraintPolicy::default(),
        &mut SeededRng::new(3),
    )
    .unwrap();
    let config = TrainConfig {
        epochs: 20,
        lr: 0.03,
        ..Default::default()
    };
    let history = train(&mut net, &task.dataset, None, &config).unwrap();
    let smooth = |r: std::ops::Range<usize>| history[r].iter().map(|h| h.train_loss).sum::<f64>() / 5.0;
    assert!(smooth(15..20) < smooth(0..5));
    assert!(history.last().unwrap().metrics.as_ref().unwrap().accuracy > 0.9);
}

#[test]
fn exponent_recovered_on_a_few_seeds() {
    let mut exps = Vec::new();
    for seed in 0..5 {
        let train_set = gen_synthetic(SyntheticParams {
            seed: 1000 + seed,
            ..Default::default()
        })
        .unwrap();
        let mut net = Network::new(
            8,
            2,
            &[spec(VariantKind::Elementwise, 1, 1, 1, Activation::Identity)],
            2,
            ConstraintPolicy::default(),
            &mut SeededRng::new(seed),
        )
        .unwrap();
        let config = TrainConfig {
            epochs: 60,
            lr: 0.03,
            seed,
            ..Default::default()
        };
        train(&mut net, &train_set.dataset, None, &config).unwrap();
        exps.push(net.exponents().unwrap()[0]);
    }
    exps.sort_by(f64::total_cmp);
    assert!((1.8..=2.2).contains(&exps[2]), "{exps:?}");
}

#[test]
fn trained_model_round_trips_and_evaluates_identically() {
    let task = gen_synthetic(SyntheticParams {
        count: 60,
        ..Default::default()
    })
    .unwrap();
    let policy = ConstraintPolicy::new(-2.0, 4.0, EnforceMode::Reparam(ReparamKind::ScaledSigmoid)).unwrap();
    let specs = [
        spec(VariantKind::RowShared, 3, 2, 2, Activation::Tanh),
        spec(VariantKind::ColShared, 2, 2, 2, Activation::Relu),
    ];
    let mut net = Network::new(8, 2, &specs, 2, policy, &mut SeededRng::new(4)).unwrap();
    train(
        &mut net,
        &task.dataset,
        None,
        &TrainConfig {
            epochs: 2,
            ..Default::default()
        },
    )
    .unwrap();
    let back = parse_model(&format_model(&net)).unwrap();
    assert_eq!(
        evaluate(&back, &task.dataset).unwrap(),
        evaluate(&net, &task.dataset).unwrap()
    );
}

#[test]
fn untrained_network_is_near_chance_on_balanced_data() {
    let task = gen_synthetic(SyntheticParams {
        count: 400,
        ..Default::default()
    })
    .unwrap();
    let mut net = Network::new(
        8,
        2,
        &[spec(VariantKind::Standard, 2, 2, 2, Activation::Tanh)],
        2,
        ConstraintPolicy::default(),
        &mut SeededRng::new(5),
    )
    .unwrap();
    net.head.weights = Tensor::zeros(net.head.weights.shape());
    let m = evaluate(&net, &task.dataset).unwrap();
    // all logits tie, so argmax picks class 0 everywhere
    assert_eq!(m.accuracy, 0.5);
    assert!((m.mean_loss - 2f64.ln()).abs() < 1e-12);
}
