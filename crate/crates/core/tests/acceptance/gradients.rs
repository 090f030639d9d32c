use occgame::error::Result;
use occgame::gated::{gated_conv, partial_conv, GatePlacement};
use occgame::net::{self, ConvVariant, CriticConfig, GeneratorConfig, NetworkKind, NetworkSpec};
use occgame::rng::substream;
use occgame::tensor::{ConvGeometry, Graph, Tensor, Var};
use occgame::train::{record_critic_loss, record_generator_loss, record_generator_objective, GanLossConfig};

use crate::common::{grad_check, rand_tensor, subset_grad_check, TinyConvCritic};

const SEEDS: u64 = 10;
const FIRST_ORDER_TOL: f64 = 1e-6;
const LOSS_TOL: f64 = 1e-4;

type Case = (&'static str, fn(u64) -> f64, f64);

fn pointwise(seed: u64, op: fn(&mut Graph, Var) -> Var, lo: f64, hi: f64) -> f64 {
    let mut rng = substream(seed, "c1-pointwise", 0);
    let x = rand_tensor(&mut rng, &[1, 4, 4, 4], lo, hi);
    grad_check(seed, &[x], |g, v| Ok(op(g, v[0])))
}

fn conv(seed: u64, x_shape: [usize; 4], w_shape: [usize; 4], geom: ConvGeometry) -> f64 {
    let mut rng = substream(seed, "c1-conv", 0);
    let x = rand_tensor(&mut rng, &x_shape, -1.0, 1.0);
    let w = rand_tensor(&mut rng, &w_shape, -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[w_shape[0]], -1.0, 1.0);
    grad_check(seed, &[x, w, b], |g, v| g.conv2d(v[0], v[1], Some(v[2]), geom))
}

fn gated(seed: u64, placement: GatePlacement) -> f64 {
    let mut rng = substream(seed, "c1-gated", 0);
    let x = rand_tensor(&mut rng, &[1, 2, 4, 4], -1.0, 1.0);
    let ws: Vec<Tensor> = (0..2)
        .flat_map(|_| [rand_tensor(&mut rng, &[2, 2, 3, 3], -0.7, 0.7), rand_tensor(&mut rng, &[2], -0.5, 0.5)])
        .collect();
    let inputs = [x, ws[0].clone(), ws[1].clone(), ws[2].clone(), ws[3].clone()];
    grad_check(seed, &inputs, |g, v| {
        gated_conv(g, v[0], v[1], v[2], v[3], v[4], ConvGeometry::new(1, 1, 1), placement)
    })
}

fn partial(seed: u64, geom: ConvGeometry) -> f64 {
    let mut rng = substream(seed, "c1-partial", 0);
    let x = rand_tensor(&mut rng, &[1, 2, 5, 5], -1.0, 1.0);
    let w = rand_tensor(&mut rng, &[2, 2, 3, 3], -1.0, 1.0);
    let b = rand_tensor(&mut rng, &[2], -1.0, 1.0);
    let mask = Tensor::from_fn(&[1, 1, 5, 5], |_| if rand::Rng::random_bool(&mut rng, 0.6) { 1.0 } else { 0.0 });
    grad_check(seed, &[x, w, b], |g, v| Ok(partial_conv(g, v[0], v[1], v[2], &mask, geom)?.0))
}

fn l1(seed: u64) -> f64 {
    let mut rng = substream(seed, "c1-l1", 0);
    let x = rand_tensor(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
    let y = rand_tensor(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
    grad_check(seed, &[x], |g, v| {
        let y = g.constant(y.clone())?;
        let d = g.sub(v[0], y)?;
        let a = g.abs(d);
        Ok(g.mean(a))
    })
}

fn critic_with_penalty(seed: u64) -> f64 {
    let mut rng = substream(seed, "c1-critic", 0);
    let real = rand_tensor(&mut rng, &[2, 1, 4, 4], -1.0, 1.0);
    let fake = rand_tensor(&mut rng, &[2, 1, 4, 4], -1.0, 1.0);
    let u: Vec<f64> = (0..2).map(|_| rand::Rng::random(&mut rng)).collect();
    let params = TinyConvCritic::params(&mut rng, 1, 2);
    grad_check(seed, &params, |g, p| {
        Ok(record_critic_loss(g, &TinyConvCritic, p, &real, &fake, &u, 10.0)?.total)
    })
}

fn generator_objective(seed: u64) -> f64 {
    let mut rng = substream(seed, "c1-gen", 0);
    let completed = rand_tensor(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
    let target = rand_tensor(&mut rng, &[1, 3, 4, 4], -1.0, 1.0);
    let masks = Tensor::from_fn(&[1, 1, 4, 4], |i| if i % 3 == 0 { 0.0 } else { 1.0 });
    let pg = TinyConvCritic::params(&mut rng, 3, 2);
    let pp = TinyConvCritic::params(&mut rng, 3, 2);
    let cfg = GanLossConfig::default();
    grad_check(seed, &[completed], |g, v| {
        let pg: Vec<Var> = pg.iter().map(|t| g.constant(t.clone())).collect::<Result<_>>()?;
        let pp: Vec<Var> = pp.iter().map(|t| g.constant(t.clone())).collect::<Result<_>>()?;
        let terms = record_generator_objective(g, v[0], &target, &masks, (&TinyConvCritic, &pg), (&TinyConvCritic, &pp), &cfg)?;
        Ok(terms.total)
    })
}

/// Full generator loss of an 8×8 toy network, at random parameter coordinates.
fn generator_network(seed: u64) -> f64 {
    let variant = ConvVariant::ALL[seed as usize % 3];
    let gen = NetworkSpec::generator(&GeneratorConfig::toy(8), variant).unwrap();
    let dg = NetworkSpec::critic(&CriticConfig::global_toy(8), NetworkKind::GlobalCritic).unwrap();
    let dl = NetworkSpec::critic(&CriticConfig::patch_toy(8), NetworkKind::PatchCritic).unwrap();
    let (gs, dgs, dls) = (gen.init(seed), dg.init(seed + 1), dl.init(seed + 2));
    let images = crate::common::toy_faces(seed, 2, 8);
    let masks = crate::common::toy_masks(seed, 2, 8);
    let cfg = GanLossConfig::default();
    subset_grad_check(seed, &gs.params, 16, |g, p| {
        let dgp = net::constants(g, &dgs)?;
        let dlp = net::constants(g, &dls)?;
        Ok(record_generator_loss(g, (&gen, p), (&dg, &dgp), (&dl, &dlp), &images, &masks, &cfg)?.total)
    })
}

pub fn run() {
    let cases: &[Case] = &[
        ("conv2d stride 2", |s| conv(s, [1, 2, 5, 5], [2, 2, 3, 3], ConvGeometry::new(2, 1, 1)), FIRST_ORDER_TOL),
        ("conv2d dilation 2", |s| conv(s, [1, 1, 7, 7], [2, 1, 3, 3], ConvGeometry::new(1, 2, 2)), FIRST_ORDER_TOL),
        ("conv2d k4 s2 unpadded", |s| conv(s, [2, 1, 6, 6], [1, 1, 4, 4], ConvGeometry::new(2, 1, 0)), FIRST_ORDER_TOL),
        ("elu", |s| pointwise(s, |g, x| g.elu(x, 1.0), -2.0, 2.0), FIRST_ORDER_TOL),
        ("leaky relu", |s| pointwise(s, |g, x| g.leaky_relu(x, 0.2), -2.0, 2.0), FIRST_ORDER_TOL),
        ("sigmoid", |s| pointwise(s, |g, x| g.sigmoid(x), -3.0, 3.0), FIRST_ORDER_TOL),
        ("tanh", |s| pointwise(s, |g, x| g.tanh(x), -3.0, 3.0), FIRST_ORDER_TOL),
        ("exp", |s| pointwise(s, |g, x| g.exp(x), -2.0, 2.0), FIRST_ORDER_TOL),
        ("sqrt", |s| pointwise(s, |g, x| g.sqrt(x), 0.5, 2.0), FIRST_ORDER_TOL),
        ("recip", |s| pointwise(s, |g, x| g.recip(x), 0.5, 2.0), FIRST_ORDER_TOL),
        ("instance norm", |s| {
            let mut rng = substream(s, "c1-in", 0);
            let x = rand_tensor(&mut rng, &[2, 2, 4, 4], -1.0, 1.0);
            grad_check(s, &[x], |g, v| g.instance_norm(v[0], 1e-5))
        }, FIRST_ORDER_TOL),
        ("upsample", |s| {
            let mut rng = substream(s, "c1-up", 0);
            let x = rand_tensor(&mut rng, &[1, 2, 3, 3], -1.0, 1.0);
            grad_check(s, &[x], |g, v| g.upsample_nearest(v[0], 2))
        }, FIRST_ORDER_TOL),
        ("gated conv, elu on features", |s| gated(s, GatePlacement::FeatureElu), FIRST_ORDER_TOL),
        ("gated conv, elu on gate", |s| gated(s, GatePlacement::GateElu), FIRST_ORDER_TOL),
        ("partial conv", |s| partial(s, ConvGeometry::new(1, 1, 1)), FIRST_ORDER_TOL),
        ("partial conv stride 2", |s| partial(s, ConvGeometry::new(2, 1, 1)), FIRST_ORDER_TOL),
        ("l1", l1, FIRST_ORDER_TOL),
        ("critic loss with gradient penalty", critic_with_penalty, LOSS_TOL),
        ("generator objective", generator_objective, LOSS_TOL),
        ("generator loss through toy network", generator_network, LOSS_TOL),
    ];
    let mut bad = Vec::new();
    for (name, check, tol) in cases {
        let worst = (0..SEEDS).map(check).fold(0.0, f64::max);
        println!("    {name:<36} worst rel err {worst:.2e} (tol {tol:.0e})");
        if !(worst <= *tol) {
            bad.push(*name);
        }
    }
    assert!(bad.is_empty(), "gradient mismatch: {bad:?}");
}
