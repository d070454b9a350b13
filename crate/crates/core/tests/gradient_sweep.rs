use nlcnn_core::gradients::{
    check_suite, finite_diff, group_values, layer_backward, random_instance, LossReduction, ParamGroup, SuiteSummary,
    DEFAULT_FD_STEP,
};
use nlcnn_core::nlconv::layer_forward;
use nlcnn_core::numerics::DEFAULT_EPS;
use nlcnn_core::{Activation, LayerParams, SeededRng, Tensor, VariantKind};

#[test]
fn single_field_sweep_meets_tight_tolerance() {
    let cases = check_suite(&VariantKind::ALL, 0..50, 1e-6).unwrap();
    let summary = SuiteSummary::from_cases(&cases, 1e-6);
    assert_eq!(summary.cases, 6 * 3 * 50);
    assert!(summary.pass(), "{summary}");
}

#[test]
fn every_group_is_covered() {
    let cases = check_suite(&VariantKind::ALL, 0..1, 1e-6).unwrap();
    let summary = SuiteSummary::from_cases(&cases, 1e-6);
    let groups = |k: VariantKind| {
        summary
            .rows
            .iter()
            .filter(|r| r.0 == k)
            .map(|r| r.1.as_str())
            .collect::<Vec<_>>()
    };
    assert_eq!(groups(VariantKind::Standard), ["w1", "bias", "input"]);
    assert_eq!(groups(VariantKind::Elementwise), ["w1", "bias", "w2", "input"]);
    assert_eq!(groups(VariantKind::RowShared), ["w1", "bias", "w2_row", "input"]);
    assert_eq!(groups(VariantKind::ColShared), ["w1", "bias", "w2_col", "input"]);
    assert_eq!(groups(VariantKind::Bilinear), ["w1", "bias", "w3", "w4", "input"]);
    assert_eq!(groups(VariantKind::FullMatrix), ["w1", "bias", "w5", "input"]);
}

#[test]
fn zero_tolerance_fails() {
    let cases = check_suite(&[VariantKind::Elementwise], 0..3, 0.0).unwrap();
    assert!(!SuiteSummary::from_cases(&cases, 0.0).pass());
}

fn set_group(params: &mut LayerParams, x: &mut Tensor, group: ParamGroup, values: &[f64]) {
    let mut it = values.iter().copied();
    let mut fill = |t: &mut Tensor| t.data_mut().iter_mut().for_each(|v| *v = it.next().unwrap());
    match group {
        ParamGroup::W1 => params.channels.iter_mut().for_each(|c| fill(&mut c.w1)),
        ParamGroup::Bias => params.channels.iter_mut().zip(values).for_each(|(c, &b)| c.bias = b),
        ParamGroup::Exponent(slot) => params.channels.iter_mut().for_each(|c| fill(c.ewm.tensors_mut()[slot])),
        ParamGroup::Input => fill(x),
    }
}

/// Multi-position layers with several channels, strides and tanh. Patch
/// contributions can cancel, so coordinates are compared with an absolute
/// floor at the finite-difference resolution.
#[test]
fn strided_multichannel_layers_agree() {
    for kind in VariantKind::ALL {
        for seed in 0..10 {
            let mut rng = SeededRng::new(seed).derive(kind as u64);
            let (mut params, _) = random_instance(kind, 2, 2, &mut rng).unwrap();
            let (extra, _) = random_instance(kind, 2, 2, &mut rng).unwrap();
            params.channels.extend(extra.channels);
            params.stride_t = 2;
            params.activation = Activation::Tanh;
            let data = (0..7 * 3)
                .map(|_| rng.uniform(0.1, 3.0) * if rng.unit() < 0.5 { -1.0 } else { 1.0 })
                .collect();
            let x = Tensor::matrix(7, 3, data).unwrap();
            let out = layer_forward(&x, &params, DEFAULT_EPS).unwrap();
            assert_eq!(out.dims(), (3, 2, 2));
            let loss = LossReduction::Weighted(Tensor::new(vec![3, 2, 2], rng.uniform_vec(12, -1.0, 1.0)).unwrap());
            let bundle = layer_backward(&x, &params, &out, &loss.gradient(&out), DEFAULT_EPS).unwrap();
            for group in ParamGroup::all_for(&params) {
                let analytic: Vec<f64> = match group {
                    ParamGroup::W1 => bundle.channels.iter().flat_map(|c| c.dw1.data().to_vec()).collect(),
                    ParamGroup::Bias => bundle.channels.iter().map(|c| c.db).collect(),
                    ParamGroup::Exponent(slot) => bundle
                        .channels
                        .iter()
                        .flat_map(|c| c.dewm.tensors()[slot].data().to_vec())
                        .collect(),
                    ParamGroup::Input => bundle.d_input.data().to_vec(),
                };
                let theta = group_values(&params, &x, group);
                let numeric = finite_diff(
                    |th| {
                        let (mut p, mut xx) = (params.clone(), x.clone());
                        set_group(&mut p, &mut xx, group, th.data());
                        loss.value(&layer_forward(&xx, &p, DEFAULT_EPS).unwrap())
                    },
                    &theta,
                    DEFAULT_FD_STEP,
                )
                .unwrap();
                for (a, n) in analytic.iter().zip(numeric.data()) {
                    assert!(
                        (a - n).abs() <= 1e-6 * a.abs().max(n.abs()) + 1e-9,
                        "{kind} seed {seed} {}: {a} vs {n}",
                        group.label(&params)
                    );
                }
            }
        }
    }
}

#[test]
fn backward_is_linear_in_upstream() {
    let mut rng = SeededRng::new(3);
    for kind in VariantKind::ALL {
        let (params, x) = random_instance(kind, 3, 2, &mut rng).unwrap();
        let out = layer_forward(&x, &params, DEFAULT_EPS).unwrap();
        let g1 = layer_backward(&x, &params, &out, &Tensor::filled(out.tensor.shape(), 1.0), DEFAULT_EPS).unwrap();
        let g3 = layer_backward(&x, &params, &out, &Tensor::filled(out.tensor.shape(), 3.0), DEFAULT_EPS).unwrap();
        for (a, b) in g1.d_input.data().iter().zip(g3.d_input.data()) {
            assert!((3.0 * a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }
    assert_eq!(DEFAULT_FD_STEP, 1e-5);
}
