use ndarray::Array2;
use nmqd_neural::encode::Sample;
use nmqd_neural::gradcheck::gradient_check;
use nmqd_neural::train::{batch_loss_grad, train, AdamW, TrainConfig};
use nmqd_neural::{ArchConfig, Model, ModelParams};
use num_complex::Complex64 as C64;

fn probe_arch() -> ArchConfig {
    ArchConfig {
        block_depths: vec![1, 2],
        latent_dim: 4,
        n_modes: 8,
        projection_depth: 2,
        projection_hidden: 8,
        seq_len: 32,
        in_channels: 7,
        out_channels: 8,
    }
}

fn sample(k: usize) -> Sample {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let psi0 = vec![C64::new(r, 0.0), C64::new(0.0, r)];
    let input = Array2::from_shape_fn((7, 32), |(c, t)| match c {
        0 => (t + 1) as f64 / 32.0,
        1 | 2 => ((t * (c + k)) as f64 * 0.37).sin(),
        3 | 6 => r,
        _ => 0.0,
    });
    let target = (0..64).map(|i| C64::from_polar(r, 0.1 * (i + k) as f64)).collect();
    Sample { input, target, psi0 }
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let arch = probe_arch();
    let model = Model::new(&arch).unwrap();
    let params = ModelParams::init(&arch, 7).unwrap();
    let samples = [sample(0), sample(1)];
    let batch: Vec<&Sample> = samples.iter().collect();
    let checks = gradient_check(&model, &params.theta, &batch, 100, 1e-5, 3).unwrap();
    assert_eq!(checks.len(), 100);
    let worst = checks.iter().map(|c| c.relative_error(1e-5)).fold(0.0, f64::max);
    assert!(worst < 1e-5, "worst relative error {worst:e}");
}

#[test]
fn detached_slices_have_zero_gradient() {
    let arch = probe_arch();
    let model = Model::new(&arch).unwrap();
    let mut params = ModelParams::init(&arch, 1).unwrap();
    let last = *model.layout.p_out.last().unwrap();
    params.theta[last.weight..last.weight + last.fan_in * last.fan_out].fill(0.0);
    let s = sample(2);
    let (_, grad) = batch_loss_grad(&model, &params.theta, &[&s]).unwrap();
    assert!(grad[..last.weight].iter().all(|&g| g == 0.0));
    assert!(grad[last.bias..last.bias + last.fan_out].iter().any(|&g| g != 0.0));
}

#[test]
fn output_depends_on_noise() {
    let arch = probe_arch();
    let model = Model::new(&arch).unwrap();
    let params = ModelParams::init(&arch, 4).unwrap();
    let s = sample(0);
    let mut doubled = s.input.clone();
    doubled.row_mut(1).mapv_inplace(|v| 2.0 * v);
    doubled.row_mut(2).mapv_inplace(|v| 2.0 * v);
    let a = model.forward(&params.theta, s.input.view()).unwrap();
    let b = model.forward(&params.theta, doubled.view()).unwrap();
    assert!((&a - &b).iter().map(|x| x * x).sum::<f64>() > 0.0);
}

#[test]
fn new_zero_modes_leave_the_function_unchanged() {
    let arch = probe_arch();
    let params = ModelParams::init(&arch, 8).unwrap();
    let wide = params.extend_modes(12).unwrap();
    let s = sample(1);
    let a = Model::new(&arch).unwrap().forward(&params.theta, s.input.view()).unwrap();
    let b = Model::new(&wide.arch).unwrap().forward(&wide.theta, s.input.view()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(params.extend_modes(4).is_err());
}

#[test]
fn overfitting_one_sample_drives_the_loss_down() {
    let arch = probe_arch();
    let model = Model::new(&arch).unwrap();
    let params = ModelParams::init(&arch, 5).unwrap();
    let s = [sample(3)];
    let loss = |p: &[f64]| batch_loss_grad(&model, p, &[&s[0]]).unwrap().0;
    let l0 = loss(&params.theta);
    let cfg = TrainConfig { lr: 3e-3, epochs: 1500, batch_size: 1, weight_decay: 0.0, ..TrainConfig::default() };
    let out = train(&model, params.clone(), AdamW::new(params.count()), &s, &[], &cfg, |_, _, _| Ok(())).unwrap();
    let l1 = loss(&out.params.theta);
    assert!(l1 < 0.05 * l0, "loss {l0} -> {l1}");
}

#[test]
fn training_is_reproducible() {
    let arch = probe_arch();
    let model = Model::new(&arch).unwrap();
    let params = ModelParams::init(&arch, 6).unwrap();
    let samples: Vec<Sample> = (0..9).map(sample).collect();
    let cfg = TrainConfig { lr: 1e-3, epochs: 3, batch_size: 4, seed: 12, ..TrainConfig::default() };
    let run = || train(&model, params.clone(), AdamW::new(params.count()), &samples, &samples[..2], &cfg, |_, _, _| Ok(())).unwrap();
    let (a, b) = (run(), run());
    assert_eq!(a.params.theta, b.params.theta);
    assert_eq!(a.log, b.log);
    assert_ne!(a.params.theta, params.theta);
}

