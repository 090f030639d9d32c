//! ℓ1 reconstruction plus Wasserstein critics with gradient penalty.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{self, NetworkSpec};
use crate::tensor::{Graph, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanLossConfig {
    pub lambda_gp: f64,
    pub l1_weight: f64,
    pub adv_global_weight: f64,
    pub adv_patch_weight: f64,
    /// Average the ℓ1 term over hole pixels only instead of all pixels.
    #[serde(default)]
    pub hole_weighted_l1: bool,
}

impl Default for GanLossConfig {
    fn default() -> Self {
        GanLossConfig {
            lambda_gp: 10.0,
            l1_weight: 1.0,
            adv_global_weight: 0.05,
            adv_patch_weight: 0.05,
            hole_weighted_l1: false,
        }
    }
}

impl GanLossConfig {
    pub fn validate(&self) -> Result<()> {
        let weights = [self.l1_weight, self.adv_global_weight, self.adv_patch_weight];
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("loss weights must be finite and non-negative"));
        }
        if !(self.lambda_gp.is_finite() && self.lambda_gp > 0.0) {
            return Err(Error::invalid("lambda_gp must be positive"));
        }
        Ok(())
    }
}

/// Anything that maps an image batch to per-sample scores `[B]`.
pub trait Critic {
    fn score(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var>;
}

impl Critic for NetworkSpec {
    fn score(&self, g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        net::record_critic_score(g, self, params, x)
    }
}

/// Recorded critic objective and its parts.
#[derive(Clone, Copy, Debug)]
pub struct CriticTerms {
    pub total: Var,
    /// `E[φ(ỹ)] − E[φ(y)]`.
    pub wasserstein: f64,
    /// `E[(‖∇φ(ŷ)‖₂ − 1)²]`, before weighting by λ.
    pub penalty: f64,
}

/// `u·y + (1−u)·ỹ` with one `u` per sample.
pub fn interpolate(y_real: &Tensor, y_fake: &Tensor, u: &[f64]) -> Result<Tensor> {
    if y_real.shape() != y_fake.shape() {
        return Err(Error::shape(format!(
            "real batch {:?} vs fake batch {:?}",
            y_real.shape(),
            y_fake.shape()
        )));
    }
    let b = y_real.shape()[0];
    if u.len() != b {
        return Err(Error::shape(format!("{} interpolation weights for batch {b}", u.len())));
    }
    let inner = y_real.len() / b;
    Ok(Tensor::from_fn(y_real.shape(), |i| {
        let t = u[i / inner];
        t * y_real.data()[i] + (1.0 - t) * y_fake.data()[i]
    }))
}

/// Records the gradient-penalty term `E[(‖∇ₓφ(ŷ)‖₂ − 1)²]` through a
/// differentiable input-gradient, so its parameter gradient is exact.
pub fn record_gradient_penalty<C: Critic + ?Sized>(
    g: &mut Graph,
    critic: &C,
    params: &[Var],
    y_hat: &Tensor,
) -> Result<Var> {
    let b = y_hat.shape()[0];
    let x = g.param(y_hat.clone())?;
    let scores = critic.score(g, params, x)?;
    if g.shape(scores) != [b] {
        return Err(Error::shape(format!(
            "critic returned {:?} for batch {b}",
            g.shape(scores)
        )));
    }
    let total = g.sum(scores);
    let gx = g.grad(total, &[x])?[0];
    let sq = g.square(gx);
    let norm2 = g.sum_per_sample(sq)?;
    let norm = g.sqrt(norm2);
    let dev = g.shift(norm, -1.0);
    let dev2 = g.square(dev);
    Ok(g.mean(dev2))
}

/// Records `E[φ(ỹ)] − E[φ(y)] + λ·E[(‖∇φ(ŷ)‖₂ − 1)²]`.
pub fn record_critic_loss<C: Critic + ?Sized>(
    g: &mut Graph,
    critic: &C,
    params: &[Var],
    y_real: &Tensor,
    y_fake: &Tensor,
    u: &[f64],
    lambda_gp: f64,
) -> Result<CriticTerms> {
    let y_hat = interpolate(y_real, y_fake, u)?;
    let fake = g.constant(y_fake.clone())?;
    let real = g.constant(y_real.clone())?;
    let s_fake = critic.score(g, params, fake)?;
    let s_real = critic.score(g, params, real)?;
    let m_fake = g.mean(s_fake);
    let m_real = g.mean(s_real);
    let w = g.sub(m_fake, m_real)?;
    let pen = record_gradient_penalty(g, critic, params, &y_hat)?;
    let weighted = g.scale(pen, lambda_gp);
    let total = g.add(w, weighted)?;
    Ok(CriticTerms {
        total,
        wasserstein: g.value(w).item(),
        penalty: g.value(pen).item(),
    })
}

/// Critic loss value for fixed parameter tensors.
pub fn critic_loss<C: Critic + ?Sized>(
    critic: &C,
    params: &[Tensor],
    y_real: &Tensor,
    y_fake: &Tensor,
    u: &[f64],
    cfg: &GanLossConfig,
) -> Result<f64> {
    let mut g = Graph::new();
    let p = params.iter().map(|t| g.constant(t.clone())).collect::<Result<Vec<_>>>()?;
    let terms = record_critic_loss(&mut g, critic, &p, y_real, y_fake, u, cfg.lambda_gp)?;
    Ok(g.value(terms.total).item())
}

/// Parameter gradient of `λ·E[(‖∇φ(ŷ)‖₂ − 1)²]`.
pub fn gradient_penalty_grad<C: Critic + ?Sized>(
    critic: &C,
    params: &[Tensor],
    y_real: &Tensor,
    y_fake: &Tensor,
    u: &[f64],
    cfg: &GanLossConfig,
) -> Result<Vec<Tensor>> {
    let y_hat = interpolate(y_real, y_fake, u)?;
    let mut g = Graph::new();
    let p = params.iter().map(|t| g.param(t.clone())).collect::<Result<Vec<_>>>()?;
    let pen = record_gradient_penalty(&mut g, critic, &p, &y_hat)?;
    let weighted = g.scale(pen, cfg.lambda_gp);
    let grads = g.backward(weighted)?;
    Ok(p.iter().map(|v| grads.of(*v).clone()).collect())
}

/// Recorded generator objective and its parts.
#[derive(Clone, Copy, Debug)]
pub struct GeneratorTerms {
    pub total: Var,
    pub l1: f64,
    pub adv_global: f64,
    pub adv_patch: f64,
}

/// Records `w₁·ℓ1(composite, y) − w_g·E[φ_g(composite)] − w_p·E[φ_p(composite)]`
/// where `completed` is the composited generator output.
#[allow(clippy::too_many_arguments)]
pub fn record_generator_objective<G: Critic + ?Sized, P: Critic + ?Sized>(
    g: &mut Graph,
    completed: Var,
    target: &Tensor,
    masks: &Tensor,
    global: (&G, &[Var]),
    patch: (&P, &[Var]),
    cfg: &GanLossConfig,
) -> Result<GeneratorTerms> {
    let y = g.constant(target.clone())?;
    let diff = g.sub(completed, y)?;
    let abs = g.abs(diff);
    let l1 = if cfg.hole_weighted_l1 {
        let holes = masks.data().iter().filter(|&&m| m == 0.0).count() * target.shape()[1];
        let s = g.sum(abs);
        g.scale(s, 1.0 / holes.max(1) as f64)
    } else {
        g.mean(abs)
    };
    let mut total = g.scale(l1, cfg.l1_weight);
    let mut adv = [0.0; 2];
    let critics: [(&dyn Fn(&mut Graph) -> Result<Var>, f64); 2] = [
        (&|g: &mut Graph| global.0.score(g, global.1, completed), cfg.adv_global_weight),
        (&|g: &mut Graph| patch.0.score(g, patch.1, completed), cfg.adv_patch_weight),
    ];
    for (slot, (score, weight)) in critics.iter().enumerate() {
        if *weight == 0.0 {
            continue;
        }
        let s = score(g)?;
        let m = g.mean(s);
        let neg = g.neg(m);
        adv[slot] = g.value(neg).item();
        let weighted = g.scale(neg, *weight);
        total = g.add(total, weighted)?;
    }
    Ok(GeneratorTerms {
        total,
        l1: g.value(l1).item(),
        adv_global: adv[0],
        adv_patch: adv[1],
    })
}

/// Full generator loss: runs the generator, composites, and scores with both critics.
#[allow(clippy::too_many_arguments)]
pub fn record_generator_loss(
    g: &mut Graph,
    generator: (&NetworkSpec, &[Var]),
    global: (&NetworkSpec, &[Var]),
    patch: (&NetworkSpec, &[Var]),
    images: &Tensor,
    masks: &Tensor,
    cfg: &GanLossConfig,
) -> Result<GeneratorTerms> {
    let out = net::record_generator(g, generator.0, generator.1, images, masks)?;
    let completed = net::record_composite(g, out, images, masks)?;
    record_generator_objective(g, completed, images, masks, global, patch, cfg)
}
