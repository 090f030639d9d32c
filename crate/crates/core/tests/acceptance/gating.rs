use occgame::gated::{gated_conv, mask_shrinkage_batch, partial_conv, GatePlacement};
use occgame::rng::substream;
use occgame::tensor::{ConvGeometry, Graph, Tensor};
use rand::Rng;

use crate::common::{naive_conv, rand_tensor};

fn partial_matches_plain_conv() {
    for seed in 0..10 {
        let mut rng = substream(seed, "c2-partial", 0);
        for geom in [ConvGeometry::new(1, 1, 1), ConvGeometry::new(2, 1, 1), ConvGeometry::new(1, 2, 2)] {
            let x = rand_tensor(&mut rng, &[2, 3, 9, 9], -1.0, 1.0);
            let w = rand_tensor(&mut rng, &[4, 3, 3, 3], -1.0, 1.0);
            let b = rand_tensor(&mut rng, &[4], -1.0, 1.0);
            let expected = naive_conv(&x, &w, Some(&b), geom);
            let mut g = Graph::new();
            let (xv, wv, bv) = (g.constant(x).unwrap(), g.constant(w).unwrap(), g.constant(b).unwrap());
            let (out, updated) = partial_conv(&mut g, xv, wv, bv, &Tensor::ones(&[2, 1, 9, 9]), geom).unwrap();
            let diff = g.value(out).max_abs_diff(&expected);
            assert!(diff <= 1e-12, "partial conv vs conv differs by {diff:e} at {geom:?}");
            assert!(updated.data().iter().all(|&m| m == 1.0));
        }
    }
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// With the gate pre-activation pushed to ±40, each placement collapses to
/// a closed form of the feature branch.
fn saturated_gates() {
    let geom = ConvGeometry::new(1, 1, 1);
    for seed in 0..10 {
        let mut rng = substream(seed, "c2-gated", 0);
        let x = rand_tensor(&mut rng, &[1, 2, 6, 6], -1.0, 1.0);
        let wf = rand_tensor(&mut rng, &[3, 2, 3, 3], -0.3, 0.3);
        let bf = rand_tensor(&mut rng, &[3], -0.5, 0.5);
        let wg = rand_tensor(&mut rng, &[3, 2, 3, 3], -0.3, 0.3);
        let f = naive_conv(&x, &wf, Some(&bf), geom);
        for (bias, placement, limit) in [
            (40.0, GatePlacement::FeatureElu, elu as fn(f64) -> f64),
            (-40.0, GatePlacement::FeatureElu, |_| 0.0),
            (40.0, GatePlacement::GateElu, |v| v),
            (-40.0, GatePlacement::GateElu, |v| v * sigmoid(-1.0)),
        ] {
            let mut g = Graph::new();
            let vars = [x.clone(), wf.clone(), bf.clone(), wg.clone(), Tensor::full(&[3], bias)]
                .map(|t| g.constant(t).unwrap());
            let out = gated_conv(&mut g, vars[0], vars[1], vars[2], vars[3], vars[4], geom, placement).unwrap();
            let diff = g.value(out).max_abs_diff(&f.map(limit));
            assert!(diff <= 1e-10, "{placement:?} with gate bias {bias}: off by {diff:e}");
        }
    }
}

/// Valid iff the window has a valid in-frame tap or reaches into the
/// padding (padding taps count as valid).
fn window_oracle(mask: &[u8], h: usize, w: usize, geom: ConvGeometry, k: usize) -> Vec<f64> {
    let span = (k - 1) * geom.dilation + 1;
    let ho = (h + 2 * geom.padding - span) / geom.stride + 1;
    let wo = (w + 2 * geom.padding - span) / geom.stride + 1;
    let mut out = Vec::with_capacity(ho * wo);
    for oy in 0..ho {
        for ox in 0..wo {
            let mut valid = false;
            for ky in 0..k {
                for kx in 0..k {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.padding as isize;
                    let ix = (ox * geom.stride + kx * geom.dilation) as isize - geom.padding as isize;
                    let inside = iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize;
                    valid |= !inside || mask[iy as usize * w + ix as usize] == 1;
                }
            }
            out.push(if valid { 1.0 } else { 0.0 });
        }
    }
    out
}

fn check_shrinkage(mask: &[u8], geom: ConvGeometry) {
    let t = Tensor::from_fn(&[1, 1, 7, 7], |i| mask[i] as f64);
    let got = mask_shrinkage_batch(&t, 3, geom).unwrap();
    assert_eq!(got.data(), window_oracle(mask, 7, 7, geom, 3).as_slice(), "mask {mask:?} at {geom:?}");
}

/// Every 3×3 window pattern at every output position of a 7×7 mask, over
/// several backgrounds, plus random whole masks at other geometries.
fn shrinkage_exhaustive() {
    let geom = ConvGeometry::new(1, 1, 1);
    let mut rng = substream(0, "c2-shrink", 0);
    let mut backgrounds = vec![[0u8; 49], [1u8; 49]];
    for _ in 0..4 {
        backgrounds.push(std::array::from_fn(|_| rng.random_range(0..2)));
    }
    for cy in 0..7usize {
        for cx in 0..7usize {
            let taps: Vec<usize> = (cy.saturating_sub(1)..(cy + 2).min(7))
                .flat_map(|y| (cx.saturating_sub(1)..(cx + 2).min(7)).map(move |x| y * 7 + x))
                .collect();
            for bg in &backgrounds {
                for pattern in 0u32..1 << taps.len() {
                    let mut m = *bg;
                    for (bit, &p) in taps.iter().enumerate() {
                        m[p] = ((pattern >> bit) & 1) as u8;
                    }
                    check_shrinkage(&m, geom);
                }
            }
        }
    }
    for geom in [ConvGeometry::new(2, 1, 1), ConvGeometry::new(1, 2, 2), ConvGeometry::new(1, 1, 0), ConvGeometry::new(2, 2, 1)] {
        for _ in 0..20_000 {
            let density = rng.random_range(0.0..1.0);
            let m: [u8; 49] = std::array::from_fn(|_| rng.random_bool(density) as u8);
            check_shrinkage(&m, geom);
        }
    }
}

pub fn run() {
    partial_matches_plain_conv();
    saturated_gates();
    shrinkage_exhaustive();
}
