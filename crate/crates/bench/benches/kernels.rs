use criterion::{black_box, criterion_group, criterion_main, Criterion};

use shiftfast_core::graph::Graph;
use shiftfast_core::layers::Mode;
use shiftfast_core::models::{build_model, ModelConfig};
use shiftfast_core::ops;
use shiftfast_core::rng;
use shiftfast_core::tensor::Tensor;
use shiftfast_core::video::{tsm_shift_tensor, ShiftSpec};

fn rand_tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    t.fill_uniform(&mut rng::stream(seed, "bench", &[]), -1.0, 1.0);
    t
}

fn bench_conv2d(c: &mut Criterion) {
    let x = rand_tensor(&[128, 8, 24, 24], 1);
    let w = rand_tensor(&[8, 8, 3, 3], 2);
    c.bench_function("conv2d fwd 128x8x24x24", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xn = g.leaf(black_box(x.clone()));
            let wn = g.leaf(w.clone());
            ops::conv2d(&mut g, xn, wn, None, [1, 1], [1, 1]).unwrap()
        })
    });
    c.bench_function("conv2d fwd+bwd 128x8x24x24", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xn = g.leaf(black_box(x.clone()).with_grad());
            let wn = g.leaf(w.clone().with_grad());
            let out = ops::conv2d(&mut g, xn, wn, None, [1, 1], [1, 1]).unwrap();
            let probe = vec![0.5; g.value(out).len()];
            let s = ops::probe_sum(&mut g, out, probe).unwrap();
            g.backward(s).unwrap();
        })
    });
}

fn bench_conv3d(c: &mut Criterion) {
    let x = rand_tensor(&[8, 8, 16, 12, 12], 3);
    let w = rand_tensor(&[8, 8, 3, 3, 3], 4);
    c.bench_function("conv3d fwd 8x8x16x12x12", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let xn = g.leaf(black_box(x.clone()));
            let wn = g.leaf(w.clone());
            ops::conv3d(&mut g, xn, wn, None, [1, 1, 1], [1, 1, 1]).unwrap()
        })
    });
}

fn bench_shift(c: &mut Criterion) {
    let x = rand_tensor(&[8, 32, 16, 24, 24], 5);
    let spec = ShiftSpec::default();
    c.bench_function("tsm_shift 8x32x16x24x24", |b| {
        b.iter(|| tsm_shift_tensor(black_box(&x), &spec, None).unwrap())
    });
}

fn bench_model_forward(c: &mut Criterion) {
    let mut cfg = ModelConfig::tsm_micro();
    cfg.stem_channels = 8;
    cfg.stage_blocks = vec![1, 1];
    cfg.clip_len = 16;
    let model = build_model(&cfg, 7).unwrap();
    let input = rand_tensor(&[8, 3, 16, 24, 24], 6);
    c.bench_function("tsm forward batch8 T16 24px", |b| {
        b.iter(|| {
            let mut g = Graph::new();
            let x = g.leaf(black_box(input.clone()));
            model.forward(&mut g, x, Mode::Train, &mut Vec::new()).unwrap()
        })
    });
}

criterion_group!(benches, bench_conv2d, bench_conv3d, bench_shift, bench_model_forward);
criterion_main!(benches);
