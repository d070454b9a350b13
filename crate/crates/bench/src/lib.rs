//! Fixtures shared by the benchmarks.

use nlcnn_core::constraints::ConstraintPolicy;
use nlcnn_core::training::{LayerSpec, Network};
use nlcnn_core::{Activation, LayerParams, SeededRng, Tensor, VariantKind};

/// A single-layer network over a `rows x cols` input with exponents nudged
/// off the neutral point so every variant does real work.
pub fn layer(
    variant: VariantKind,
    k_h: usize,
    k_w: usize,
    out_channels: usize,
    rows: usize,
    cols: usize,
) -> LayerParams {
    let spec = LayerSpec {
        variant,
        k_h,
        k_w,
        stride_t: 1,
        stride_c: 1,
        out_channels,
        activation: Activation::Tanh,
    };
    let mut rng = SeededRng::new(7);
    let mut net =
        Network::new(rows, cols, &[spec], 2, ConstraintPolicy::default(), &mut rng).expect("valid bench shape");
    let mut params = net.layers.swap_remove(0).params;
    for ch in &mut params.channels {
        for t in ch.ewm.tensors_mut() {
            t.data_mut().iter_mut().for_each(|v| *v += rng.uniform(-0.05, 0.05));
        }
    }
    params
}

pub fn input(rows: usize, cols: usize, seed: u64) -> Tensor {
    let mut rng = SeededRng::new(seed);
    Tensor::matrix(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).expect("finite input")
}
