use occgame::net::{CriticConfig, NetworkKind, NetworkSpec};
use occgame::rng::substream;
use occgame::tensor::{Graph, Tensor};
use occgame::train::{
    critic_loss, gradient_penalty_grad, interpolate, record_critic_loss, record_gradient_penalty, GanLossConfig,
};
use rand::Rng;

use crate::common::{rand_tensor, rel_err, subset_grad_check, ConstantCritic, LinearCritic, QuadraticCritic};

fn batch(rng: &mut impl Rng) -> (Tensor, Tensor, Vec<f64>) {
    let b = rng.random_range(1..5);
    let c = rng.random_range(1..4);
    let s = rng.random_range(2..9);
    let real = rand_tensor(rng, &[b, c, s, s], -1.0, 1.0);
    let fake = rand_tensor(rng, &[b, c, s, s], -1.0, 1.0);
    let u = (0..b).map(|_| rng.random()).collect();
    (real, fake, u)
}

fn per_sample(t: &Tensor, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let b = t.shape()[0];
    t.data().chunks(t.len() / b).map(f).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn unit_slope_linear_has_no_penalty() {
    for seed in 0..100 {
        let mut rng = substream(seed, "c4-linear", 0);
        let (real, fake, u) = batch(&mut rng);
        let raw = rand_tensor(&mut rng, real.shape(), -1.0, 1.0);
        let norms = per_sample(&raw, |s| s.iter().map(|v| v * v).sum::<f64>().sqrt());
        let inner = raw.len() / norms.len();
        let direction = Tensor::from_fn(raw.shape(), |i| raw.data()[i] / norms[i / inner]);
        let critic = LinearCritic { direction: direction.clone() };
        let mut g = Graph::new();
        let terms = record_critic_loss(&mut g, &critic, &[], &real, &fake, &u, 10.0).unwrap();
        assert!(terms.penalty <= 1e-24, "linear critic penalty {:e}", terms.penalty);
        let dot = |t: &Tensor| per_sample(&t.zip_map(&direction, |a, b| a * b).unwrap(), |s| s.iter().sum());
        let expected = mean(&dot(&fake)) - mean(&dot(&real));
        assert!((terms.wasserstein - expected).abs() <= 1e-12);
    }
}

fn constant_critic_costs_lambda() {
    for seed in 0..100 {
        let mut rng = substream(seed, "c4-constant", 0);
        let (real, fake, u) = batch(&mut rng);
        let lambda = [10.0, 1.0, 3.5][seed as usize % 3];
        let cfg = GanLossConfig {
            lambda_gp: lambda,
            ..GanLossConfig::default()
        };
        let critic = ConstantCritic { value: rng.random_range(-5.0..5.0) };
        let loss = critic_loss(&critic, &[], &real, &fake, &u, &cfg).unwrap();
        assert_eq!(loss, lambda, "constant critic loss");
    }
}

/// For `φ(x) = ½c‖x‖²`, `∇φ(x̂) = c·x̂`, so every term has a closed form.
fn quadratic_closed_form() {
    for seed in 0..100 {
        let mut rng = substream(seed, "c4-quadratic", 0);
        let (real, fake, u) = batch(&mut rng);
        let c = rng.random_range(0.1..3.0);
        let critic = QuadraticCritic { c };
        let cfg = GanLossConfig::default();
        let sq = |t: &Tensor| per_sample(t, |s| s.iter().map(|v| v * v).sum::<f64>());
        let y_hat = interpolate(&real, &fake, &u).unwrap();
        let pen = mean(&sq(&y_hat).iter().map(|n2| (c * n2.sqrt() - 1.0).powi(2)).collect::<Vec<_>>());
        let expected = 0.5 * c * (mean(&sq(&fake)) - mean(&sq(&real))) + cfg.lambda_gp * pen;
        let loss = critic_loss(&critic, &[], &real, &fake, &u, &cfg).unwrap();
        assert!(
            (loss - expected).abs() <= 1e-8 * expected.abs().max(1.0),
            "quadratic critic: {loss} vs {expected}"
        );
        let mut g = Graph::new();
        let p = record_gradient_penalty(&mut g, &critic, &[], &y_hat).unwrap();
        assert!((g.value(p).item() - pen).abs() <= 1e-8 * pen.max(1.0));
    }
}

/// Parameter gradients of the full objective and of the penalty alone for
/// both toy critics, at random coordinates.
fn toy_critic_gradients() {
    let cfg = GanLossConfig::default();
    for seed in 0..4 {
        for (config, kind) in [
            (CriticConfig::global_toy(8), NetworkKind::GlobalCritic),
            (CriticConfig::patch_toy(8), NetworkKind::PatchCritic),
        ] {
            let spec = NetworkSpec::critic(&config, kind).unwrap();
            let state = spec.init(seed);
            let mut rng = substream(seed, "c4-toy", 0);
            let real = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
            let fake = rand_tensor(&mut rng, &[2, 3, 8, 8], -1.0, 1.0);
            let u: Vec<f64> = (0..2).map(|_| rng.random()).collect();
            let err = subset_grad_check(seed, &state.params, 24, |g, p| {
                Ok(record_critic_loss(g, &spec, p, &real, &fake, &u, cfg.lambda_gp)?.total)
            });
            assert!(err <= 1e-4, "{kind:?} critic loss gradient rel err {err:e}");

            let y_hat = interpolate(&real, &fake, &u).unwrap();
            let analytic = gradient_penalty_grad(&spec, &state.params, &real, &fake, &u, &cfg).unwrap();
            let mut g = Graph::new();
            let p: Vec<_> = state.params.iter().map(|t| g.param(t.clone()).unwrap()).collect();
            let pen = record_gradient_penalty(&mut g, &spec, &p, &y_hat).unwrap();
            let scaled = g.scale(pen, cfg.lambda_gp);
            let grads = g.backward(scaled).unwrap();
            for (k, a) in analytic.iter().enumerate() {
                assert!(rel_err(a.data(), grads.of(p[k]).data()) <= 1e-12);
            }
            let err = subset_grad_check(seed + 100, &state.params, 24, |g, p| {
                let pen = record_gradient_penalty(g, &spec, p, &y_hat)?;
                Ok(g.scale(pen, cfg.lambda_gp))
            });
            assert!(err <= 1e-4, "{kind:?} penalty gradient rel err {err:e}");
        }
    }
}

pub fn run() {
    unit_slope_linear_has_no_penalty();
    constant_critic_costs_lambda();
    quadratic_closed_form();
    toy_critic_gradients();
}
