use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use nlcnn_bench::{input, layer};
use nlcnn_core::gradients::layer_backward;
use nlcnn_core::nlconv::layer_forward;
use nlcnn_core::numerics::DEFAULT_EPS;
use nlcnn_core::{Tensor, VariantKind};

const ROWS: usize = 40;
const COLS: usize = 52;

fn forward(c: &mut Criterion) {
    let mut group = c.benchmark_group("layer_forward");
    let x = input(ROWS, COLS, 1);
    for variant in VariantKind::ALL {
        let params = layer(variant, 4, 4, 4, ROWS, COLS);
        group.bench_with_input(BenchmarkId::from_parameter(variant), &params, |b, p| {
            b.iter(|| layer_forward(black_box(&x), p, DEFAULT_EPS).unwrap())
        });
    }
    group.finish();
}

fn backward(c: &mut Criterion) {
    let mut group = c.benchmark_group("layer_backward");
    let x = input(ROWS, COLS, 2);
    for variant in VariantKind::ALL {
        let params = layer(variant, 4, 4, 4, ROWS, COLS);
        let out = layer_forward(&x, &params, DEFAULT_EPS).unwrap();
        let upstream = Tensor::filled(out.tensor.shape(), 1.0);
        group.bench_with_input(BenchmarkId::from_parameter(variant), &params, |b, p| {
            b.iter(|| layer_backward(black_box(&x), p, &out, &upstream, DEFAULT_EPS).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, forward, backward);
criterion_main!(benches);
