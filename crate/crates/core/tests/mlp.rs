use heteroreg::domain::*;
use heteroreg::mlp::*;
use heteroreg::regprofile::ExampleWeights;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small(act: Activation, seed: u64) -> MlpModel {
    MlpModel::init(&MlpConfig { hidden: vec![5, 4], activation: act, input_scale: 3.0 }, seed).unwrap()
}

fn fd_gradient(model: &MlpModel, f: impl Fn(&MlpModel) -> f64, h: f64) -> Vec<f64> {
    let mut m = model.clone();
    let p0 = model.params().to_vec();
    (0..p0.len())
        .map(|k| {
            let mut p = p0.clone();
            p[k] = p0[k] + h;
            m.set_params(&p).unwrap();
            let a = f(&m);
            p[k] = p0[k] - h;
            m.set_params(&p).unwrap();
            let b = f(&m);
            (a - b) / (2.0 * h)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let den: f64 = b.iter().map(|y| y * y).sum::<f64>().sqrt();
    num / den.max(1e-12)
}

#[test]
fn penalty_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for trial in 0..20 {
        let task = if trial % 2 == 0 { Task::Regression } else { Task::BinaryClassification };
        let model = small(Activation::Tanh, trial);
        let x: f64 = rng.random();
        let y = match task {
            Task::Regression => 2.0 * rng.random::<f64>() - 1.0,
            Task::BinaryClassification => if rng.random::<bool>() { 1.0 } else { -1.0 },
        };
        let mut with = vec![0.0; model.num_params()];
        let mut without = vec![0.0; model.num_params()];
        example_gradient(&model, task, JacobianTarget::Loss, x, y, 1.0, &mut with);
        example_gradient(&model, task, JacobianTarget::Loss, x, y, 0.0, &mut without);
        let analytic: Vec<f64> = with.iter().zip(&without).map(|(a, b)| a - b).collect();
        let fd = fd_gradient(&model, |m| jacobian_reg(m, task, x, y).r_value, 1e-5);
        assert!(rel_err(&analytic, &fd) < 1e-4, "trial {trial}: {}", rel_err(&analytic, &fd));
    }
}

#[test]
fn full_objective_gradient_relu_away_from_kinks() {
    let spec = figure3_spec();
    let ds = spec.sample_dataset(10, 1).unwrap();
    let w = ExampleWeights::new((0..10).map(|i| 0.5 + 0.1 * i as f64).collect()).unwrap();
    let model = small(Activation::ReLU, 3);
    let f = |m: &MlpModel| objective(m, &ds, &w, 0.7, JacobianTarget::Loss).unwrap().objective;
    let g = objective_gradient(&model, &ds, &w, 0.7, JacobianTarget::Loss).unwrap();
    let fd = fd_gradient(&model, f, 1e-7);
    assert!(rel_err(&g, &fd) < 1e-3, "{}", rel_err(&g, &fd));
}

#[test]
fn output_jacobian_gradient() {
    let spec = hetero_classification_spec();
    let ds = spec.sample_dataset(8, 2).unwrap();
    let w = ExampleWeights::uniform(8);
    let model = small(Activation::Tanh, 5);
    let f = |m: &MlpModel| objective(m, &ds, &w, 0.4, JacobianTarget::Output).unwrap().objective;
    let g = objective_gradient(&model, &ds, &w, 0.4, JacobianTarget::Output).unwrap();
    assert!(rel_err(&g, &fd_gradient(&model, f, 1e-6)) < 1e-5);
}

#[test]
fn r_is_sqrt_of_layer_sum() {
    let model = small(Activation::Tanh, 9);
    let rep = jacobian_reg(&model, Task::Regression, 0.4, 3.0);
    let sum: f64 = rep.layer_sq_norms.iter().sum();
    assert!((rep.r_value * rep.r_value - sum).abs() < 1e-12 * sum.max(1.0));
    assert!(rep.layer_sq_norms.iter().all(|&v| v >= 0.0 && rep.r_value >= v.sqrt()));
}

#[test]
fn one_hidden_layer_last_term_formula() {
    // last hidden layer: ∂ℓ/∂h = (pred - y) W_out, so its norm is |pred - y| ‖W_out‖
    let model = MlpModel::init(&MlpConfig { hidden: vec![6], activation: Activation::Tanh, input_scale: 2.0 }, 2).unwrap();
    let (x, y) = (0.3, -0.8);
    let pred = model.predict(x);
    let w_norm = (0..6).map(|i| model.weight(1, 0, i).powi(2)).sum::<f64>().sqrt();
    let rep = jacobian_reg(&model, Task::Regression, x, y);
    assert!((rep.layer_sq_norms[0].sqrt() - (pred - y).abs() * w_norm).abs() < 1e-12);
}

#[test]
fn penalty_invariant_under_hidden_permutation() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let model = MlpModel::init(&MlpConfig { hidden: vec![6, 5], activation: Activation::Tanh, input_scale: 4.0 }, 4).unwrap();
    for _ in 0..10 {
        // permute the first hidden layer's units
        let mut perm: Vec<usize> = (0..6).collect();
        perm.shuffle(&mut rng);
        let mut p = model.clone();
        for (new, &old) in perm.iter().enumerate() {
            *p.weight_mut(0, new, 0) = model.weight(0, old, 0);
            *p.bias_mut(0, new) = model.params()[6 + old];
            for o in 0..5 {
                *p.weight_mut(1, o, new) = model.weight(1, o, old);
            }
        }
        let x: f64 = rng.random();
        let a = jacobian_reg(&model, Task::Regression, x, 0.5).r_value;
        let b = jacobian_reg(&p, Task::Regression, x, 0.5).r_value;
        assert!((a - b).abs() < 1e-10);
        assert!((model.predict(x) - p.predict(x)).abs() < 1e-12);
    }
}

#[test]
fn zero_lambda_is_plain_sgd() {
    let ds = figure3_spec().sample_dataset(64, 4).unwrap();
    let model = small(Activation::Tanh, 1);
    let cfg = SgdConfig { epochs: 20, seed: 3, ..Default::default() };
    let weighted = ExampleWeights::new((0..64).map(|i| 1.0 + i as f64).collect()).unwrap();
    let a = train(&model, &ds, &weighted, 0.0, &cfg).unwrap();
    let b = train_uniform(&model, &ds, 0.0, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    for (x, y) in a.curve.iter().zip(&b.curve) {
        assert!((x.objective - y.objective).abs() <= 1e-12);
        assert_eq!(x.reg, 0.0);
    }
}

#[test]
fn equal_tau_matches_uniform_trainer() {
    let ds = figure3_spec().sample_dataset(64, 5).unwrap();
    let model = small(Activation::Tanh, 2);
    let cfg = SgdConfig { epochs: 15, seed: 7, ..Default::default() };
    let a = train(&model, &ds, &ExampleWeights::uniform(64), 0.05, &cfg).unwrap();
    let b = train_uniform(&model, &ds, 0.05, &cfg).unwrap();
    let sa: Vec<u64> = a.curve.iter().map(|c| c.objective.to_bits()).collect();
    let sb: Vec<u64> = b.curve.iter().map(|c| c.objective.to_bits()).collect();
    assert_eq!(sa, sb);
}

#[test]
fn training_is_deterministic_and_logs_curve() {
    let ds = hetero_classification_spec().sample_dataset(50, 1).unwrap();
    let model = small(Activation::Tanh, 6);
    let cfg = SgdConfig { epochs: 10, seed: 1, batch_size: 8, ..Default::default() };
    let a = train_uniform(&model, &ds, 0.1, &cfg).unwrap();
    let b = train_uniform(&model, &ds, 0.1, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.curve.len(), 10);
    assert_eq!(a.curve.last().unwrap().step, 10 * 7);
    let mut buf = Vec::new();
    a.write_curve_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("step,loss,reg,objective\n"));
    assert_eq!(text.lines().count(), 11);
}

#[test]
fn divergence_is_reported() {
    let ds = figure3_spec().sample_dataset(32, 1).unwrap();
    let model = small(Activation::Tanh, 1);
    let cfg = SgdConfig { epochs: 50, step: 1e6, ..Default::default() };
    match train_uniform(&model, &ds, 0.0, &cfg) {
        Err(heteroreg::Error::Diverged { last_finite, .. }) => {
            assert!(last_finite.params().iter().all(|p| p.is_finite()));
        }
        other => panic!("expected divergence, got {:?}", other.map(|o| o.curve.len())),
    }
}

#[test]
fn misaligned_weights_rejected() {
    let ds = figure3_spec().sample_dataset(10, 1).unwrap();
    let model = small(Activation::Tanh, 1);
    assert!(train(&model, &ds, &ExampleWeights::uniform(9), 0.1, &SgdConfig::default()).is_err());
}
