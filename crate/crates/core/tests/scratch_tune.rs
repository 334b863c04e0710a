//! Scratch tuning harness (ignored by default): timing and learnability
//! probes for the synthetic-task training runs.

use std::time::Instant;

use shiftfast_core::data::{generate_synthetic, AugmentConfig, SyntheticSpec};
use shiftfast_core::models::{InputMode, ModelConfig, ModelKind};
use shiftfast_core::optim::OptimConfig;
use shiftfast_core::train::{train, StageSpec, TrainPlan};
use shiftfast_core::video::{Frac, ShiftSpec};

fn dataset() -> shiftfast_core::data::Dataset {
    let t0 = Instant::now();
    let ds = generate_synthetic(&SyntheticSpec::default()).unwrap();
    eprintln!("dataset generated in {:.1}s", t0.elapsed().as_secs_f64());
    ds
}

fn tsm_config(shift: bool) -> ModelConfig {
    let mut cfg = ModelConfig::tsm_micro();
    cfg.stem_channels = 8;
    cfg.stage_blocks = vec![1, 1];
    cfg.clip_len = 16;
    cfg.shift = if shift { ShiftSpec::default() } else { ShiftSpec::none() };
    cfg
}

fn augment(crop: usize) -> AugmentConfig {
    AugmentConfig {
        base_size: 32,
        scale_range: (1.0, 1.0),
        crop_size: crop,
        horizontal_flip_prob: 0.0,
        lighting_jitter: 0.05,
        contrast_jitter: 0.1,
        corner_crop: false,
        reverse_prob: 0.0,
        stride_choices: vec![1],
        seed: 42,
    }
}

fn plan(dir: std::path::PathBuf, epochs: usize, seed: u64, lr: f64, crop: usize, promote: Option<f64>) -> TrainPlan {
    TrainPlan {
        stages: vec![StageSpec {
            clip_len: 16,
            shift_enabled: true,
            epochs,
            optim: OptimConfig {
                learning_rate: lr,
                momentum: 0.9,
                weight_decay: 0.0001,
                lr_decay_factor: 0.5,
                lr_decay_every_epochs: 20,
            },
            augment: augment(crop),
            promotion_threshold: promote,
        }],
        eval_every: 1,
        checkpoint_dir: dir,
        seed,
        batch_size: 16,
    }
}

#[test]
#[ignore]
fn tune_tsm_shift() {
    let ds = dataset();
    for lr in [0.05] {
        for crop in [20usize, 24] {
            let dir = tempfile::tempdir().unwrap();
            let t0 = Instant::now();
            let out = train(
                &plan(dir.path().to_path_buf(), 15, 1, lr, crop, Some(0.95)),
                &tsm_config(true),
                &ds,
                None,
            )
            .unwrap();
            let curve: Vec<String> = out
                .metrics
                .iter()
                .map(|m| format!("{}:{:.2}/{:.2}", m.epoch, m.loss, m.val_acc.unwrap_or(-1.0)))
                .collect();
            eprintln!(
                "lr={lr} crop={crop}: {:.1}s ({:.1}s/epoch) curve {}",
                t0.elapsed().as_secs_f64(),
                t0.elapsed().as_secs_f64() / out.metrics.len() as f64,
                curve.join(" ")
            );
        }
    }
}

#[test]
#[ignore]
fn tune_tsm_noshift() {
    let ds = dataset();
    let dir = tempfile::tempdir().unwrap();
    let t0 = Instant::now();
    let out = train(
        &plan(dir.path().to_path_buf(), 20, 1, 0.05, 24, None),
        &tsm_config(false),
        &ds,
        None,
    )
    .unwrap();
    let curve: Vec<String> = out
        .metrics
        .iter()
        .map(|m| format!("{}:{:.2}/{:.2}", m.epoch, m.loss, m.val_acc.unwrap_or(-1.0)))
        .collect();
    eprintln!(
        "no-shift: {:.1}s ({:.1}s/epoch) curve {}",
        t0.elapsed().as_secs_f64(),
        t0.elapsed().as_secs_f64() / out.metrics.len() as f64,
        curve.join(" ")
    );
}

#[test]
#[ignore]
fn tune_slowfast() {
    let ds = dataset();
    for mode in [InputMode::Rgb, InputMode::Diff] {
        let mut cfg = ModelConfig::slowfast_micro();
        cfg.kind = ModelKind::SlowFast;
        cfg.stem_channels = 8;
        cfg.stage_blocks = vec![1, 1];
        cfg.clip_len = 16;
        cfg.alpha = 4;
        cfg.beta = Frac { num: 1, den: 4 };
        cfg.input_mode = mode;
        let dir = tempfile::tempdir().unwrap();
        let t0 = Instant::now();
        let out = train(
            &plan(dir.path().to_path_buf(), 15, 1, 0.05, 24, Some(0.95)),
            &cfg,
            &ds,
            None,
        )
        .unwrap();
        let curve: Vec<String> = out
            .metrics
            .iter()
            .map(|m| format!("{}:{:.2}/{:.2}", m.epoch, m.loss, m.val_acc.unwrap_or(-1.0)))
            .collect();
        eprintln!(
            "slowfast {mode:?}: {:.1}s ({:.1}s/epoch) curve {}",
            t0.elapsed().as_secs_f64(),
            t0.elapsed().as_secs_f64() / out.metrics.len() as f64,
            curve.join(" ")
        );
    }
}

#[test]
#[ignore]
fn profile_ops() {
    use shiftfast_core::graph::Graph;
    use shiftfast_core::ops;
    use shiftfast_core::tensor::Tensor;
    use shiftfast_core::rng;

    let reps = 20;
    let time = |label: &str, f: &mut dyn FnMut()| {
        let t0 = Instant::now();
        for _ in 0..reps {
            f();
        }
        eprintln!("{label}: {:.2} ms/op", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);
    };

    let mut x = Tensor::zeros(&[128, 3, 24, 24]);
    x.fill_uniform(&mut rng::stream(0, "p", &[]), -1.0, 1.0);
    let mut w = Tensor::zeros(&[8, 3, 3, 3]);
    w.fill_uniform(&mut rng::stream(1, "p", &[]), -0.3, 0.3);
    let mut a8 = Tensor::zeros(&[128, 8, 24, 24]);
    a8.fill_uniform(&mut rng::stream(2, "p", &[]), -1.0, 1.0);
    let g8 = a8.clone();

    time("stem conv2d fwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(x.clone());
        let wn = g.leaf(w.clone());
        ops::conv2d(&mut g, xn, wn, None, [1, 1], [1, 1]).unwrap();
    });
    time("stem conv2d fwd+bwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(x.clone().with_grad());
        let wn = g.leaf(w.clone().with_grad());
        let out = ops::conv2d(&mut g, xn, wn, None, [1, 1], [1, 1]).unwrap();
        let probe = vec![0.5; g.value(out).len()];
        let s = ops::probe_sum(&mut g, out, probe).unwrap();
        g.backward(s).unwrap();
    });
    let mut w2 = Tensor::zeros(&[8, 8, 3, 3]);
    w2.fill_uniform(&mut rng::stream(3, "p", &[]), -0.3, 0.3);
    let mut a12 = Tensor::zeros(&[128, 8, 12, 12]);
    a12.fill_uniform(&mut rng::stream(4, "p", &[]), -1.0, 1.0);
    time("stage conv2d 8->8 @12 fwd+bwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(a12.clone().with_grad());
        let wn = g.leaf(w2.clone().with_grad());
        let out = ops::conv2d(&mut g, xn, wn, None, [1, 1], [1, 1]).unwrap();
        let probe = vec![0.5; g.value(out).len()];
        let s = ops::probe_sum(&mut g, out, probe).unwrap();
        g.backward(s).unwrap();
    });
    time("maxpool2d @24 fwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(a8.clone());
        ops::maxpool2d(&mut g, xn, [2, 2], [2, 2]).unwrap();
    });
    time("batchnorm train fwd+bwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(a8.clone().with_grad());
        let ga = g.leaf(Tensor::filled(&[8], 1.0).with_grad());
        let be = g.leaf(Tensor::zeros(&[8]).with_grad());
        let (out, _, _) = ops::batchnorm_train(&mut g, xn, ga, be, 1e-5).unwrap();
        let probe = vec![0.5; g.value(out).len()];
        let s = ops::probe_sum(&mut g, out, probe).unwrap();
        g.backward(s).unwrap();
    });
    time("elu fwd", &mut || {
        let mut g = Graph::new();
        let xn = g.leaf(a8.clone());
        ops::elu(&mut g, xn, 1.0).unwrap();
    });
    time("tensor clone 128x8x24x24", &mut || {
        let c = g8.clone();
        std::hint::black_box(&c);
    });
}

#[test]
#[ignore]
fn profile_bn_detail() {
    use shiftfast_core::graph::Graph;
    use shiftfast_core::ops;
    use shiftfast_core::tensor::Tensor;
    use shiftfast_core::rng;

    let reps = 30;
    let mut a8 = Tensor::zeros(&[128, 8, 24, 24]);
    a8.fill_uniform(&mut rng::stream(2, "p", &[]), -1.0, 1.0);

    let t0 = Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xn = g.leaf(a8.clone());
        let ga = g.leaf(Tensor::filled(&[8], 1.0));
        let be = g.leaf(Tensor::zeros(&[8]));
        ops::batchnorm_train(&mut g, xn, ga, be, 1e-5).unwrap();
    }
    eprintln!("bn fwd only: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    let t0 = Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xn = g.leaf(a8.clone().with_grad());
        let ga = g.leaf(Tensor::filled(&[8], 1.0).with_grad());
        let be = g.leaf(Tensor::zeros(&[8]).with_grad());
        let (out, _, _) = ops::batchnorm_train(&mut g, xn, ga, be, 1e-5).unwrap();
        let probe = vec![0.5; g.value(out).len()];
        let s = ops::probe_sum(&mut g, out, probe).unwrap();
        g.backward(s).unwrap();
    }
    eprintln!("bn fwd+probe+bwd: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);

    // Raw passes for comparison.
    let x = a8.data().to_vec();
    let t0 = Instant::now();
    for _ in 0..reps {
        let mut sums = vec![0.0; 8];
        for ci in 0..8 {
            let mut s = 0.0;
            for ni in 0..128 {
                let base = (ni * 8 + ci) * 576;
                s += x[base..base + 576].iter().sum::<f64>();
            }
            sums[ci] = s;
        }
        std::hint::black_box(&sums);
    }
    eprintln!("raw mean pass: {:.2} ms", t0.elapsed().as_secs_f64() * 1000.0 / reps as f64);
}
