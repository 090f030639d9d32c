#![allow(dead_code)]

use occgame::error::Result;
use occgame::imageio::{resize_rgb, rgb_to_tensor};
use occgame::masks::{sample_mask, LandmarkSet, MaskFamilyParams};
use occgame::rng::substream;
use occgame::synth::{render_face, Capture, Identity};
use occgame::tensor::{ConvGeometry, Graph, Tensor, Var};
use occgame::train::Critic;
use occgame::gated::{mask_batch, MaskImage};
use rand::Rng;

pub const FD_STEP: f64 = 1e-5;

pub fn rand_tensor(rng: &mut impl Rng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
    Tensor::from_fn(shape, |_| rng.random_range(lo..hi))
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or the absolute norm when both are tiny.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale < 1e-8 {
        diff
    } else {
        diff / scale
    }
}

/// Compares reverse-mode gradients of `Σ f(inputs) ⊙ R` (fixed random `R`)
/// with central differences over every input element. Returns the worst
/// relative error across inputs.
pub fn grad_check(
    seed: u64,
    inputs: &[Tensor],
    f: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> f64 {
    let weights = {
        let mut g = Graph::new();
        let vs: Vec<Var> = inputs.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let out = f(&mut g, &vs).unwrap();
        let mut rng = substream(seed, "fd-weights", 0);
        rand_tensor(&mut rng, g.shape(out), -1.0, 1.0)
    };
    let objective = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vs: Vec<Var> = vals.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let out = f(&mut g, &vs).unwrap();
        g.value(out).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
    };

    let mut g = Graph::new();
    let vs: Vec<Var> = inputs.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = f(&mut g, &vs).unwrap();
    let r = g.constant(weights.clone()).unwrap();
    let prod = g.mul(out, r).unwrap();
    let total = g.sum(prod);
    let grads = g.backward(total).unwrap();

    let mut worst = 0.0f64;
    for (k, v) in vs.iter().enumerate() {
        let analytic = grads.of(*v).data().to_vec();
        let mut numeric = vec![0.0; inputs[k].len()];
        let mut vals = inputs.to_vec();
        for (i, slot) in numeric.iter_mut().enumerate() {
            let x0 = inputs[k].data()[i];
            vals[k].data_mut()[i] = x0 + FD_STEP;
            let up = objective(&vals);
            vals[k].data_mut()[i] = x0 - FD_STEP;
            let down = objective(&vals);
            vals[k].data_mut()[i] = x0;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        worst = worst.max(rel_err(&analytic, &numeric));
    }
    worst
}

/// Direct-loop convolution with zero padding.
pub fn naive_conv(x: &Tensor, w: &Tensor, bias: Option<&Tensor>, geom: ConvGeometry) -> Tensor {
    let [b, cin, h, wd] = x.dims4().unwrap();
    let [cout, _, k, _] = w.dims4().unwrap();
    let span = (k - 1) * geom.dilation + 1;
    let ho = (h + 2 * geom.padding - span) / geom.stride + 1;
    let wo = (wd + 2 * geom.padding - span) / geom.stride + 1;
    let mut out = Tensor::zeros(&[b, cout, ho, wo]);
    for n in 0..b {
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = bias.map_or(0.0, |t| t.data()[o]);
                    for c in 0..cin {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.padding as isize;
                                let ix = (ox * geom.stride + kx * geom.dilation) as isize - geom.padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.at4(n, c, iy as usize, ix as usize) * w.at4(o, c, ky, kx);
                            }
                        }
                    }
                    out.data_mut()[((n * cout + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

/// `Σ_pixels x ⊙ a` per sample.
pub struct LinearCritic {
    pub direction: Tensor,
}

impl Critic for LinearCritic {
    fn score(&self, g: &mut Graph, _params: &[Var], x: Var) -> Result<Var> {
        let a = g.constant(self.direction.clone())?;
        let p = g.mul(x, a)?;
        g.sum_per_sample(p)
    }
}

/// Ignores its input and returns `value` for every sample.
pub struct ConstantCritic {
    pub value: f64,
}

impl Critic for ConstantCritic {
    fn score(&self, g: &mut Graph, _params: &[Var], x: Var) -> Result<Var> {
        let s = g.sum_per_sample(x)?;
        let zero = g.scale(s, 0.0);
        Ok(g.shift(zero, self.value))
    }
}

/// `½·c·‖x‖²` per sample.
pub struct QuadraticCritic {
    pub c: f64,
}

impl Critic for QuadraticCritic {
    fn score(&self, g: &mut Graph, _params: &[Var], x: Var) -> Result<Var> {
        let sq = g.square(x);
        let s = g.sum_per_sample(sq)?;
        Ok(g.scale(s, 0.5 * self.c))
    }
}

/// conv(3×3) → leaky ReLU → conv(3×3) → mean, with params `[w1, b1, w2]`.
pub struct TinyConvCritic;

impl TinyConvCritic {
    pub fn params(rng: &mut impl Rng, cin: usize, hidden: usize) -> Vec<Tensor> {
        vec![
            rand_tensor(rng, &[hidden, cin, 3, 3], -0.5, 0.5),
            rand_tensor(rng, &[hidden], -0.2, 0.2),
            rand_tensor(rng, &[1, hidden, 3, 3], -0.5, 0.5),
        ]
    }
}

impl Critic for TinyConvCritic {
    fn score(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let h = g.conv2d(x, params[0], Some(params[1]), ConvGeometry::new(1, 1, 1))?;
        let h = g.leaky_relu(h, 0.2);
        let o = g.conv2d(h, params[2], None, ConvGeometry::new(2, 1, 1))?;
        g.mean_per_sample(o)
    }
}

/// `count` synthetic faces at `size`×`size` as one `[count,3,size,size]` batch.
pub fn toy_faces(seed: u64, count: usize, size: usize) -> Tensor {
    let items: Vec<Tensor> = (0..count as u64)
        .map(|i| {
            let img = render_face(&Identity::sample(seed, i), &Capture::sample(seed, i, 1));
            rgb_to_tensor(&resize_rgb(&img, size, size))
        })
        .collect();
    Tensor::concat_batch(&items).unwrap()
}

/// One mask per image from the default family mix, resized to `size`.
pub fn toy_masks(seed: u64, count: usize, size: usize) -> Tensor {
    let lms = LandmarkSet::template();
    let params = MaskFamilyParams::default();
    let mut rng = substream(seed, "fixed-masks", 0);
    let masks: Vec<MaskImage> = (0..count)
        .map(|_| sample_mask(&lms, &mut rng, &params).unwrap().1.resize_nearest(size, size))
        .collect();
    mask_batch(&masks).unwrap()
}

/// Central differences of a scalar `loss` at `picks` random coordinates of
/// `params`, against the reverse-mode gradient at the same coordinates.
pub fn subset_grad_check(
    seed: u64,
    params: &[Tensor],
    picks: usize,
    loss: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
) -> f64 {
    let value = |vals: &[Tensor]| -> f64 {
        let mut g = Graph::new();
        let vs: Vec<Var> = vals.iter().map(|t| g.constant(t.clone()).unwrap()).collect();
        let out = loss(&mut g, &vs).unwrap();
        g.value(out).item()
    };
    let mut g = Graph::new();
    let vs: Vec<Var> = params.iter().map(|t| g.param(t.clone()).unwrap()).collect();
    let out = loss(&mut g, &vs).unwrap();
    let grads = g.backward(out).unwrap();

    let mut rng = substream(seed, "fd-coords", 0);
    let mut vals = params.to_vec();
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for _ in 0..picks {
        let k = rng.random_range(0..params.len());
        let i = rng.random_range(0..params[k].len());
        analytic.push(grads.of(vs[k]).data()[i]);
        let x0 = params[k].data()[i];
        vals[k].data_mut()[i] = x0 + FD_STEP;
        let up = value(&vals);
        vals[k].data_mut()[i] = x0 - FD_STEP;
        let down = value(&vals);
        vals[k].data_mut()[i] = x0;
        numeric.push((up - down) / (2.0 * FD_STEP));
    }
    rel_err(&analytic, &numeric)
}
