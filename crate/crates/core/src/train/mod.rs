//! Adversarial training of the completion generator against a global and a
//! patch critic.

mod losses;
mod state;

pub use losses::{
    critic_loss, gradient_penalty_grad, interpolate, record_critic_loss, record_generator_loss,
    record_generator_objective, record_gradient_penalty, Critic, CriticTerms, GanLossConfig,
    GeneratorTerms,
};
pub use state::{decode_train_state, encode_train_state, read_train_state, write_train_state};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{self, ConvVariant, CriticConfig, GeneratorConfig, NetworkKind, NetworkSpec, NetworkState};
use crate::rng::{substream, Rng};
use crate::tensor::{Graph, Tensor};

/// Triangular cyclical learning rate, shared phase for both players.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LrSchedule {
    pub base_generator: f64,
    pub base_critic: f64,
    /// Peak rate as a multiple of the base rate.
    pub peak_factor: f64,
    /// Steps per full cycle.
    pub period: u64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            base_generator: 1e-4,
            base_critic: 2.5e-5,
            peak_factor: 4.0,
            period: 2000,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base_critic > 0.0 && self.base_generator > self.base_critic) {
            return Err(Error::invalid(
                "learning rates must satisfy 0 < base_critic < base_generator",
            ));
        }
        if !(self.peak_factor.is_finite() && self.peak_factor >= 1.0) {
            return Err(Error::invalid("peak_factor must be >= 1"));
        }
        if self.period < 2 {
            return Err(Error::invalid("period must be at least 2"));
        }
        Ok(())
    }

    /// Fraction of the way from base to peak at `step`: 0 at cycle start,
    /// 1 at mid-cycle.
    pub fn phase(&self, step: u64) -> f64 {
        let pos = (step % self.period) as f64 / self.period as f64;
        1.0 - (2.0 * pos - 1.0).abs()
    }

    /// `(lr_generator, lr_critic)` at `step`.
    pub fn rates(&self, step: u64) -> (f64, f64) {
        let f = self.phase(step);
        let at = |base: f64| base + (base * self.peak_factor - base) * f;
        (at(self.base_generator), at(self.base_critic))
    }
}

/// Free-function form of [`LrSchedule::rates`].
pub fn cyclical_lr(step: u64, schedule: &LrSchedule) -> (f64, f64) {
    schedule.rates(step)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for one parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub t: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(params: &[Tensor]) -> Self {
        let zeros = |p: &Tensor| Tensor::zeros(p.shape());
        Adam {
            t: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    pub fn step(&mut self, cfg: &AdamConfig, lr: f64, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::shape("optimizer state does not match parameters"));
        }
        self.t += 1;
        let c1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let c2 = 1.0 - cfg.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!("gradient {:?} for parameter {:?}", g.shape(), p.shape())));
            }
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, (pi, &gi)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                md[i] = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
                vd[i] = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
                *pi -= lr * (md[i] / c1) / ((vd[i] / c2).sqrt() + cfg.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: ConvVariant,
    pub generator: GeneratorConfig,
    pub global_critic: CriticConfig,
    pub patch_critic: CriticConfig,
    #[serde(default)]
    pub loss: GanLossConfig,
    #[serde(default)]
    pub schedule: LrSchedule,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub seed: u64,
}

impl TrainConfig {
    /// 128×128 networks with the default schedule.
    pub fn full(variant: ConvVariant, seed: u64) -> Self {
        TrainConfig {
            variant,
            generator: GeneratorConfig::full(),
            global_critic: CriticConfig::global_full(),
            patch_critic: CriticConfig::patch_full(),
            loss: GanLossConfig::default(),
            schedule: LrSchedule::default(),
            adam: AdamConfig::default(),
            critic_steps: 1,
            seed,
        }
    }

    /// Small networks with a faster schedule for short runs.
    pub fn toy(variant: ConvVariant, resolution: usize, seed: u64) -> Self {
        TrainConfig {
            variant,
            generator: GeneratorConfig::toy(resolution),
            global_critic: CriticConfig::global_toy(resolution),
            patch_critic: CriticConfig::patch_toy(resolution),
            loss: GanLossConfig::default(),
            schedule: LrSchedule {
                base_generator: 1e-3,
                base_critic: 2.5e-4,
                peak_factor: 4.0,
                period: 400,
            },
            adam: AdamConfig::default(),
            critic_steps: 1,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.schedule.validate()?;
        if self.critic_steps == 0 {
            return Err(Error::invalid("critic_steps must be at least 1"));
        }
        let res = self.generator.resolution;
        if self.global_critic.resolution != res || self.patch_critic.resolution != res {
            return Err(Error::invalid("critics and generator disagree on resolution"));
        }
        Ok(())
    }
}

/// One network with its optimizer moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Player {
    pub spec: NetworkSpec,
    pub state: NetworkState,
    pub adam: Adam,
}

impl Player {
    fn new(spec: NetworkSpec, seed: u64) -> Self {
        let state = spec.init(seed);
        let adam = Adam::new(&state.params);
        Player { spec, state, adam }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: u64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub l1: f64,
    pub adv_g: f64,
    pub adv_p: f64,
    /// Sum of both critic losses, penalty included.
    pub critic: f64,
    /// Sum of both unweighted gradient penalties.
    pub gp: f64,
}

/// Everything needed to resume training bit-exactly.
#[derive(Clone, Debug)]
pub struct TrainState {
    pub config: TrainConfig,
    pub generator: Player,
    pub global_critic: Player,
    pub patch_critic: Player,
    pub step: u64,
    pub rng: Rng,
}

impl PartialEq for TrainState {
    fn eq(&self, o: &Self) -> bool {
        self.config == o.config
            && self.generator == o.generator
            && self.global_critic == o.global_critic
            && self.patch_critic == o.patch_critic
            && self.step == o.step
            && self.rng.get_seed() == o.rng.get_seed()
            && self.rng.get_stream() == o.rng.get_stream()
            && self.rng.get_word_pos() == o.rng.get_word_pos()
    }
}

/// A batch of `[B,3,H,W]` images in `[-1,1]` with `[B,1,H,W]` binary masks.
#[derive(Clone, Debug)]
pub struct TrainBatch {
    pub images: Tensor,
    pub masks: Tensor,
}

impl TrainBatch {
    pub fn new(images: Tensor, masks: Tensor) -> Result<Self> {
        let [b, c, h, w] = images.dims4()?;
        if c != 3 || masks.shape() != [b, 1, h, w] {
            return Err(Error::shape(format!(
                "images {:?} with masks {:?}",
                images.shape(),
                masks.shape()
            )));
        }
        images.ensure_finite("training images")?;
        if let Some(&v) = masks.data().iter().find(|&&m| m != 0.0 && m != 1.0) {
            return Err(Error::NonBinaryMask { index: 0, value: v });
        }
        Ok(TrainBatch { images, masks })
    }
}

impl TrainState {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let gen = NetworkSpec::generator(&config.generator, config.variant)?;
        let dg = NetworkSpec::critic(&config.global_critic, NetworkKind::GlobalCritic)?;
        let dl = NetworkSpec::critic(&config.patch_critic, NetworkKind::PatchCritic)?;
        let s = config.seed;
        Ok(TrainState {
            generator: Player::new(gen, s),
            global_critic: Player::new(dg, s.wrapping_add(1)),
            patch_critic: Player::new(dl, s.wrapping_add(2)),
            step: 0,
            rng: substream(s, "train", 0),
            config,
        })
    }

    /// Composited generator output for `batch` under the current weights.
    pub fn complete(&self, batch: &TrainBatch) -> Result<Tensor> {
        let g = &self.generator;
        let out = g.spec.evaluate(&g.state, &net::generator_input(&batch.images, &batch.masks)?, Some(&batch.masks))?;
        net::composite(&out, &batch.images, &batch.masks)
    }

    /// One critic phase followed by one generator update. On a non-finite
    /// loss or gradient the state is left untouched and an error returned.
    pub fn train_step(&mut self, batch: &TrainBatch) -> Result<StepMetrics> {
        let [b, _, h, _] = batch.images.dims4()?;
        if h != self.generator.spec.input_size {
            return Err(Error::shape(format!(
                "batch is {h}px, networks are {}px",
                self.generator.spec.input_size
            )));
        }
        let cfg = &self.config;
        let (lr_g, lr_d) = cfg.schedule.rates(self.step);
        let mut rng = self.rng.clone();
        let mut dg = self.global_critic.clone();
        let mut dl = self.patch_critic.clone();
        let mut critic_total = 0.0;
        let mut gp_total = 0.0;

        for _ in 0..cfg.critic_steps {
            let fake = self.complete(batch)?;
            for player in [&mut dg, &mut dl] {
                let u: Vec<f64> = (0..b).map(|_| rng.random::<f64>()).collect();
                let mut g = Graph::new();
                let params = net::params_as_leaves(&mut g, &player.state)?;
                let terms = record_critic_loss(
                    &mut g,
                    &player.spec,
                    &params,
                    &batch.images,
                    &fake,
                    &u,
                    cfg.loss.lambda_gp,
                )?;
                let loss = g.value(terms.total).item();
                let grads = g.backward(terms.total)?;
                let grads: Vec<Tensor> = params.iter().map(|v| grads.of(*v).clone()).collect();
                check_finite(loss, &grads, "critic")?;
                critic_total += loss;
                gp_total += terms.penalty;
                player.adam.step(&cfg.adam, lr_d, &mut player.state.params, &grads)?;
            }
        }

        let mut gen = self.generator.clone();
        let mut g = Graph::new();
        let gp = net::params_as_leaves(&mut g, &gen.state)?;
        let dgp = net::constants(&mut g, &dg.state)?;
        let dlp = net::constants(&mut g, &dl.state)?;
        let terms = record_generator_loss(
            &mut g,
            (&gen.spec, &gp),
            (&dg.spec, &dgp),
            (&dl.spec, &dlp),
            &batch.images,
            &batch.masks,
            &cfg.loss,
        )?;
        let loss = g.value(terms.total).item();
        let grads = g.backward(terms.total)?;
        let grads: Vec<Tensor> = gp.iter().map(|v| grads.of(*v).clone()).collect();
        check_finite(loss, &grads, "generator")?;
        gen.adam.step(&cfg.adam, lr_g, &mut gen.state.params, &grads)?;
        if gen.state.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("generator parameters after update".into()));
        }

        let metrics = StepMetrics {
            step: self.step,
            lr_g,
            lr_d,
            l1: terms.l1,
            adv_g: terms.adv_global,
            adv_p: terms.adv_patch,
            critic: critic_total,
            gp: gp_total,
        };
        self.generator = gen;
        self.global_critic = dg;
        self.patch_critic = dl;
        self.rng = rng;
        self.step += 1;
        Ok(metrics)
    }
}

fn check_finite(loss: f64, grads: &[Tensor], who: &str) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("{who} loss is {loss}")));
    }
    if grads.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite(format!("{who} gradient")));
    }
    Ok(())
}
