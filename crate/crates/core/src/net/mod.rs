//! Declarative encoder-decoder generator and the two critics.
//!
//! A [`NetworkSpec`] is a flat list of layers; a [`NetworkState`] holds the
//! parameter tensors in layer order (`[w, b]` for regular and partial
//! convolutions, `[wf, bf, wg, bg]` for gated ones).

pub(crate) mod checkpoint;

pub use checkpoint::{decode_network, encode_network, read_network, write_network};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated::{self, GatePlacement, MaskImage, ELU_ALPHA};
use crate::rng::substream;
use crate::tensor::{ConvGeometry, Graph, Tensor, Var};

pub const LEAKY_SLOPE: f64 = 0.2;
pub const INSTANCE_NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvVariant {
    Regular,
    Partial,
    Gated,
}

impl ConvVariant {
    pub const ALL: [ConvVariant; 3] = [ConvVariant::Regular, ConvVariant::Partial, ConvVariant::Gated];

    pub fn name(self) -> &'static str {
        match self {
            ConvVariant::Regular => "regular",
            ConvVariant::Partial => "partial",
            ConvVariant::Gated => "gated",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "regular" | "unet" => Ok(ConvVariant::Regular),
            "partial" => Ok(ConvVariant::Partial),
            "gated" => Ok(ConvVariant::Gated),
            other => Err(Error::invalid(format!("unknown convolution variant `{other}`"))),
        }
    }

    pub(crate) fn tag(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_tag(t: u8) -> Result<Self> {
        Self::ALL
            .get(t as usize)
            .copied()
            .ok_or_else(|| Error::format("checkpoint", format!("variant tag {t}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Identity,
    Elu,
    LeakyRelu,
    Tanh,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub variant: ConvVariant,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub dilation: usize,
    pub padding: usize,
    pub activation: Activation,
    pub instance_norm: bool,
    /// Layer whose convolution type follows the network variant.
    pub substitutable: bool,
}

impl ConvSpec {
    pub fn geometry(&self) -> ConvGeometry {
        ConvGeometry::new(self.stride, self.dilation, self.padding)
    }

    fn param_shapes(&self) -> Vec<Vec<usize>> {
        let w = vec![self.out_channels, self.in_channels, self.kernel, self.kernel];
        let b = vec![self.out_channels];
        match self.variant {
            ConvVariant::Gated => vec![w.clone(), b.clone(), w, b],
            _ => vec![w, b],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerSpec {
    Conv(ConvSpec),
    Upsample(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkKind {
    Generator,
    GlobalCritic,
    PatchCritic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub kind: NetworkKind,
    pub variant: ConvVariant,
    pub input_size: usize,
    pub input_channels: usize,
    pub gate_placement: GatePlacement,
    pub layers: Vec<LayerSpec>,
}

/// Parameter values for a [`NetworkSpec`].
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    pub seed: u64,
    pub params: Vec<Tensor>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EncoderBlock {
    pub channels: usize,
    pub stride: usize,
}

/// Channel/stride table of the generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub resolution: usize,
    pub encoder: Vec<EncoderBlock>,
    /// Channels of the dilation-2 encoder blocks.
    pub dilated: Vec<usize>,
    /// Channels of the decoder convolutions; each is preceded by a ×2 upsample.
    pub decoder: Vec<usize>,
    pub kernel: usize,
    #[serde(default)]
    pub gate_placement: GatePlacement,
}

impl GeneratorConfig {
    /// 128×128 table: 64/128/256/256 (strides 2/2/2/1), four dilated 256
    /// blocks, decoder 128/64/32, 3×3 kernels.
    pub fn full() -> Self {
        let e = |channels, stride| EncoderBlock { channels, stride };
        GeneratorConfig {
            resolution: 128,
            encoder: vec![e(64, 2), e(128, 2), e(256, 2), e(256, 1)],
            dilated: vec![256; 4],
            decoder: vec![128, 64, 32],
            kernel: 3,
            gate_placement: GatePlacement::FeatureElu,
        }
    }

    /// Reduced-depth table for desk-scale training at `resolution`.
    pub fn toy(resolution: usize) -> Self {
        let e = |channels, stride| EncoderBlock { channels, stride };
        GeneratorConfig {
            resolution,
            encoder: vec![e(16, 2), e(32, 2), e(32, 1)],
            dilated: vec![32; 2],
            decoder: vec![32, 16],
            kernel: 3,
            gate_placement: GatePlacement::FeatureElu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticLayer {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticConfig {
    pub resolution: usize,
    /// LeakyReLU convolutions.
    pub hidden: Vec<CriticLayer>,
    /// Final linear one-channel convolution. `None` means a dense head over
    /// the whole remaining feature map (global critic).
    pub head: Option<CriticLayer>,
}

impl CriticConfig {
    /// Five k4/s2 convolutions (64→512) and a dense scalar head.
    pub fn global_full() -> Self {
        let l = |channels| CriticLayer {
            channels,
            kernel: 4,
            stride: 2,
            padding: 1,
        };
        CriticConfig {
            resolution: 128,
            hidden: vec![l(64), l(128), l(256), l(512), l(512)],
            head: None,
        }
    }

    /// k4 s2, k4 s2, k5 s2, k4 s1: receptive field 50, 16×16 score map at 128.
    pub fn patch_full() -> Self {
        let l = |channels, kernel, stride, padding| CriticLayer {
            channels,
            kernel,
            stride,
            padding,
        };
        CriticConfig {
            resolution: 128,
            hidden: vec![l(64, 4, 2, 1), l(128, 4, 2, 2), l(256, 5, 2, 2)],
            head: Some(l(1, 4, 1, 1)),
        }
    }

    pub fn global_toy(resolution: usize) -> Self {
        let l = |channels| CriticLayer {
            channels,
            kernel: 4,
            stride: 2,
            padding: 1,
        };
        CriticConfig {
            resolution,
            hidden: vec![l(16), l(32), l(32)],
            head: None,
        }
    }

    pub fn patch_toy(resolution: usize) -> Self {
        let l = |channels, kernel, stride, padding| CriticLayer {
            channels,
            kernel,
            stride,
            padding,
        };
        CriticConfig {
            resolution,
            hidden: vec![l(16, 4, 2, 1), l(32, 4, 2, 1)],
            head: Some(l(1, 3, 1, 1)),
        }
    }
}

impl NetworkSpec {
    pub fn generator(config: &GeneratorConfig, variant: ConvVariant) -> Result<Self> {
        let k = config.kernel;
        if k.is_multiple_of(2) {
            return Err(Error::invalid("generator kernel must be odd"));
        }
        let pad = k / 2;
        let block = |cin, cout, stride, dilation| {
            LayerSpec::Conv(ConvSpec {
                variant,
                in_channels: cin,
                out_channels: cout,
                kernel: k,
                stride,
                dilation,
                padding: pad * dilation,
                activation: if variant == ConvVariant::Gated {
                    Activation::Identity
                } else {
                    Activation::Elu
                },
                instance_norm: true,
                substitutable: true,
            })
        };
        let mut layers = Vec::new();
        let mut ch = 4;
        let mut downs = 0;
        for b in &config.encoder {
            if b.stride != 1 && b.stride != 2 {
                return Err(Error::invalid(format!("encoder stride {} not in {{1,2}}", b.stride)));
            }
            layers.push(block(ch, b.channels, b.stride, 1));
            downs += usize::from(b.stride == 2);
            ch = b.channels;
        }
        for &c in &config.dilated {
            layers.push(block(ch, c, 1, 2));
            ch = c;
        }
        if config.decoder.len() != downs {
            return Err(Error::invalid(format!(
                "decoder has {} upsampling stages but the encoder downsamples {downs} times",
                config.decoder.len()
            )));
        }
        if !config.resolution.is_multiple_of(1 << downs) {
            return Err(Error::invalid(format!(
                "resolution {} not divisible by {}",
                config.resolution,
                1 << downs
            )));
        }
        for &c in &config.decoder {
            layers.push(LayerSpec::Upsample(2));
            layers.push(block(ch, c, 1, 1));
            ch = c;
        }
        layers.push(LayerSpec::Conv(ConvSpec {
            variant: ConvVariant::Regular,
            in_channels: ch,
            out_channels: 3,
            kernel: k,
            stride: 1,
            dilation: 1,
            padding: pad,
            activation: Activation::Tanh,
            instance_norm: false,
            substitutable: false,
        }));
        let spec = NetworkSpec {
            kind: NetworkKind::Generator,
            variant,
            input_size: config.resolution,
            input_channels: 4,
            gate_placement: config.gate_placement,
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn critic(config: &CriticConfig, kind: NetworkKind) -> Result<Self> {
        let mut layers = Vec::new();
        let mut ch = 3;
        let mut size = config.resolution;
        let conv = |cin, l: &CriticLayer, activation| ConvSpec {
            variant: ConvVariant::Regular,
            in_channels: cin,
            out_channels: l.channels,
            kernel: l.kernel,
            stride: l.stride,
            dilation: 1,
            padding: l.padding,
            activation,
            instance_norm: false,
            substitutable: false,
        };
        for l in &config.hidden {
            let c = conv(ch, l, Activation::LeakyRelu);
            size = c.geometry().output_extent(size, c.kernel)?;
            layers.push(LayerSpec::Conv(c));
            ch = l.channels;
        }
        let head = match (&config.head, kind) {
            (Some(h), NetworkKind::PatchCritic) => conv(ch, h, Activation::Identity),
            (None, NetworkKind::GlobalCritic) => conv(
                ch,
                &CriticLayer {
                    channels: 1,
                    kernel: size,
                    stride: 1,
                    padding: 0,
                },
                Activation::Identity,
            ),
            _ => return Err(Error::invalid(format!("critic head does not match {kind:?}"))),
        };
        if head.out_channels != 1 {
            return Err(Error::invalid("critic head must produce one channel"));
        }
        layers.push(LayerSpec::Conv(head));
        let spec = NetworkSpec {
            kind,
            variant: ConvVariant::Regular,
            input_size: config.resolution,
            input_channels: 3,
            gate_placement: GatePlacement::default(),
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks channel chaining and spatial arithmetic; returns the output `[C,H,W]`.
    pub fn validate(&self) -> Result<[usize; 3]> {
        let (mut ch, mut size) = (self.input_channels, self.input_size);
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv(c) => {
                    if c.in_channels != ch {
                        return Err(Error::shape(format!(
                            "layer {i} expects {} channels, previous layer gives {ch}",
                            c.in_channels
                        )));
                    }
                    size = c.geometry().output_extent(size, c.kernel)?;
                    ch = c.out_channels;
                }
                LayerSpec::Upsample(f) => {
                    if *f < 2 {
                        return Err(Error::invalid(format!("upsample factor {f}")));
                    }
                    size *= f;
                }
            }
        }
        if self.kind == NetworkKind::Generator && (ch != 3 || size != self.input_size || self.input_channels != 4) {
            return Err(Error::shape(format!(
                "generator maps {}ch to {ch}ch at {size}px",
                self.input_channels
            )));
        }
        Ok([ch, size, size])
    }

    pub fn conv_layers(&self) -> impl Iterator<Item = &ConvSpec> {
        self.layers.iter().filter_map(|l| match l {
            LayerSpec::Conv(c) => Some(c),
            LayerSpec::Upsample(_) => None,
        })
    }

    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        self.conv_layers().flat_map(ConvSpec::param_shapes).collect()
    }

    pub fn param_count(&self) -> usize {
        self.param_shapes()
            .iter()
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    /// Filter and bias count of the variant-dependent convolution layers.
    pub fn substitutable_param_count(&self) -> usize {
        self.conv_layers()
            .filter(|c| c.substitutable)
            .flat_map(ConvSpec::param_shapes)
            .map(|s| s.iter().product::<usize>())
            .sum()
    }

    pub fn max_channels(&self) -> usize {
        self.conv_layers().map(|c| c.out_channels).max().unwrap_or(0)
    }

    /// Glorot-uniform filters and zero biases from a seeded stream.
    pub fn init(&self, seed: u64) -> NetworkState {
        let mut rng = substream(seed, "net-init", 0);
        let params = self
            .param_shapes()
            .into_iter()
            .map(|shape| {
                if shape.len() == 4 {
                    let fan_in = shape[1] * shape[2] * shape[3];
                    let fan_out = shape[0] * shape[2] * shape[3];
                    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
                } else {
                    Tensor::zeros(&shape)
                }
            })
            .collect();
        NetworkState { seed, params }
    }

    pub fn check_state(&self, state: &NetworkState) -> Result<()> {
        let shapes = self.param_shapes();
        if shapes.len() != state.params.len() {
            return Err(Error::shape(format!(
                "network expects {} parameter tensors, state has {}",
                shapes.len(),
                state.params.len()
            )));
        }
        for (i, (s, p)) in shapes.iter().zip(&state.params).enumerate() {
            if p.shape() != s.as_slice() {
                return Err(Error::shape(format!(
                    "parameter {i}: expected {s:?}, got {:?}",
                    p.shape()
                )));
            }
            p.ensure_finite("network parameter")?;
        }
        Ok(())
    }

    /// Records the forward pass. `mask` (`[B,1,H,W]`) drives the partial
    /// convolutions and is tracked through upsampling.
    pub fn forward(&self, g: &mut Graph, params: &[Var], x: Var, mask: Option<&Tensor>) -> Result<Var> {
        let [_, c, h, w] = g.value(x).dims4()?;
        if c != self.input_channels || h != self.input_size || w != self.input_size {
            return Err(Error::shape(format!(
                "network expects [B,{},{},{}], got {:?}",
                self.input_channels,
                self.input_size,
                self.input_size,
                g.shape(x)
            )));
        }
        let mut mask = match self.variant {
            ConvVariant::Partial => mask.cloned(),
            _ => None,
        };
        let mut cur = x;
        let mut p = params.iter().copied();
        let mut next = || p.next().ok_or_else(|| Error::shape("too few parameters"));
        for layer in &self.layers {
            match *layer {
                LayerSpec::Upsample(f) => {
                    cur = g.upsample_nearest(cur, f)?;
                    if let Some(m) = &mask {
                        let mut mg = Graph::new();
                        let mv = mg.constant(m.clone())?;
                        let up = mg.upsample_nearest(mv, f)?;
                        mask = Some(mg.value(up).clone());
                    }
                }
                LayerSpec::Conv(spec) => {
                    let geom = spec.geometry();
                    cur = match spec.variant {
                        ConvVariant::Regular => {
                            let (wv, bv) = (next()?, next()?);
                            g.conv2d(cur, wv, Some(bv), geom)?
                        }
                        ConvVariant::Partial => {
                            let (wv, bv) = (next()?, next()?);
                            let m = mask
                                .as_ref()
                                .ok_or_else(|| Error::invalid("partial convolution needs a mask"))?;
                            let (out, updated) = gated::partial_conv(g, cur, wv, bv, m, geom)?;
                            mask = Some(updated);
                            out
                        }
                        ConvVariant::Gated => {
                            let (wf, bf, wg, bg) = (next()?, next()?, next()?, next()?);
                            gated::gated_conv(g, cur, wf, bf, wg, bg, geom, self.gate_placement)?
                        }
                    };
                    cur = match spec.activation {
                        Activation::Identity => cur,
                        Activation::Elu => g.elu(cur, ELU_ALPHA),
                        Activation::LeakyRelu => g.leaky_relu(cur, LEAKY_SLOPE),
                        Activation::Tanh => g.tanh(cur),
                    };
                    if spec.instance_norm {
                        cur = g.instance_norm(cur, INSTANCE_NORM_EPS)?;
                    }
                }
            }
        }
        Ok(cur)
    }

    /// Evaluates the network on plain tensors.
    pub fn evaluate(&self, state: &NetworkState, x: &Tensor, mask: Option<&Tensor>) -> Result<Tensor> {
        self.check_state(state)?;
        let mut g = Graph::new();
        let params = constants(&mut g, state)?;
        let xv = g.constant(x.clone())?;
        let out = self.forward(&mut g, &params, xv, mask)?;
        Ok(g.value(out).clone())
    }
}

/// Pushes every parameter as a differentiable leaf.
pub fn params_as_leaves(g: &mut Graph, state: &NetworkState) -> Result<Vec<Var>> {
    state.params.iter().map(|p| g.param(p.clone())).collect()
}

/// Pushes every parameter as fixed data.
pub fn constants(g: &mut Graph, state: &NetworkState) -> Result<Vec<Var>> {
    state.params.iter().map(|p| g.constant(p.clone())).collect()
}

pub fn build_generator(variant: ConvVariant, seed: u64) -> Result<(NetworkSpec, NetworkState)> {
    build_generator_with(&GeneratorConfig::full(), variant, seed)
}

pub fn build_generator_with(
    config: &GeneratorConfig,
    variant: ConvVariant,
    seed: u64,
) -> Result<(NetworkSpec, NetworkState)> {
    let spec = NetworkSpec::generator(config, variant)?;
    let state = spec.init(seed);
    Ok((spec, state))
}

pub fn build_global_discriminator(seed: u64) -> Result<(NetworkSpec, NetworkState)> {
    let spec = NetworkSpec::critic(&CriticConfig::global_full(), NetworkKind::GlobalCritic)?;
    let state = spec.init(seed);
    Ok((spec, state))
}

pub fn build_patch_discriminator(seed: u64) -> Result<(NetworkSpec, NetworkState)> {
    let spec = NetworkSpec::critic(&CriticConfig::patch_full(), NetworkKind::PatchCritic)?;
    let state = spec.init(seed);
    Ok((spec, state))
}

/// Generator input: the image with holes zeroed, concatenated with the mask.
pub fn generator_input(image: &Tensor, masks: &Tensor) -> Result<Tensor> {
    let [b, c, h, w] = image.dims4()?;
    if c != 3 || masks.shape() != [b, 1, h, w] {
        return Err(Error::shape(format!(
            "image {:?} with masks {:?}",
            image.shape(),
            masks.shape()
        )));
    }
    let m3 = gated::broadcast_channels(masks, 3)?;
    let known = image.zip_map(&m3, |x, m| x * m)?;
    Tensor::concat_channels(&known, masks)
}

/// Records the generator on `g` for a `[B,3,H,W]` image batch and `[B,1,H,W]` masks.
pub fn record_generator(
    g: &mut Graph,
    spec: &NetworkSpec,
    params: &[Var],
    image: &Tensor,
    masks: &Tensor,
) -> Result<Var> {
    if spec.kind != NetworkKind::Generator {
        return Err(Error::invalid("not a generator spec"));
    }
    let input = g.constant(generator_input(image, masks)?)?;
    spec.forward(g, params, input, Some(masks))
}

/// Generator forward pass on a single image in `[-1,1]`.
pub fn generator_forward(
    spec: &NetworkSpec,
    state: &NetworkState,
    image: &Tensor,
    mask: &MaskImage,
) -> Result<Tensor> {
    let [b, _, h, w] = image.dims4()?;
    if h != spec.input_size || w != spec.input_size {
        return Err(Error::shape(format!(
            "generator is fixed at {0}x{0}, got {h}x{w}",
            spec.input_size
        )));
    }
    if mask.height() != h || mask.width() != w {
        return Err(Error::shape("mask not aligned with image"));
    }
    let masks = gated::mask_batch(&vec![mask.clone(); b])?;
    spec.check_state(state)?;
    let mut g = Graph::new();
    let params = constants(&mut g, state)?;
    let out = record_generator(&mut g, spec, &params, image, &masks)?;
    Ok(g.value(out).clone())
}

/// `mask ⊙ input + (1 − mask) ⊙ generated`, masks broadcast over channels.
pub fn composite(generated: &Tensor, input: &Tensor, masks: &Tensor) -> Result<Tensor> {
    let c = generated.dims4()?[1];
    let m = gated::broadcast_channels(masks, c)?;
    let known = input.zip_map(&m, |x, m| x * m)?;
    let fill = generated.zip_map(&m, |x, m| x * (1.0 - m))?;
    known.zip_map(&fill, |a, b| a + b)
}

/// Graph form of [`composite`] with `input` and `masks` as fixed data.
pub fn record_composite(g: &mut Graph, generated: Var, input: &Tensor, masks: &Tensor) -> Result<Var> {
    let c = g.value(generated).dims4()?[1];
    let m = gated::broadcast_channels(masks, c)?;
    let known = g.constant(input.zip_map(&m, |x, m| x * m)?)?;
    let inv = g.constant(m.map(|m| 1.0 - m))?;
    let fill = g.mul(generated, inv)?;
    g.add(fill, known)
}

/// Per-sample critic score: the scalar output of a global critic, or the
/// mean of a patch critic's score map. Shape `[B]`.
pub fn record_critic_score(g: &mut Graph, spec: &NetworkSpec, params: &[Var], x: Var) -> Result<Var> {
    let out = spec.forward(g, params, x, None)?;
    match spec.kind {
        NetworkKind::GlobalCritic | NetworkKind::PatchCritic => g.mean_per_sample(out),
        NetworkKind::Generator => Err(Error::invalid("generator used as critic")),
    }
}

/// Bounding box `(height, width)` of input pixels whose gradient magnitude
/// from output unit `(channel, y, x)` exceeds 1e-12.
pub fn receptive_field_probe(
    spec: &NetworkSpec,
    state: &NetworkState,
    unit: (usize, usize, usize),
) -> Result<(usize, usize)> {
    spec.check_state(state)?;
    let n = spec.input_size;
    let shape = [1, spec.input_channels, n, n];
    let mut rng = substream(0x5eed, "rf-probe", 0);
    let input = Tensor::from_fn(&shape, |_| rng.random_range(-1.0..1.0));
    let mask = Tensor::ones(&[1, 1, n, n]);
    let mut g = Graph::new();
    let params = constants(&mut g, state)?;
    let x = g.param(input)?;
    let out = spec.forward(&mut g, &params, x, Some(&mask))?;
    let [_, oc, oh, ow] = g.value(out).dims4()?;
    let (c, y, xx) = unit;
    if c >= oc || y >= oh || xx >= ow {
        return Err(Error::invalid(format!("output unit {unit:?} outside [{oc},{oh},{ow}]")));
    }
    let select = Tensor::from_fn(&[1, oc, oh, ow], |i| if i == (c * oh + y) * ow + xx { 1.0 } else { 0.0 });
    let sel = g.constant(select)?;
    let picked = g.mul(out, sel)?;
    let s = g.sum(picked);
    let grads = g.backward(s)?;
    let gx = grads.of(x);
    let (mut y0, mut y1, mut x0, mut x1) = (usize::MAX, 0, usize::MAX, 0);
    for ch in 0..spec.input_channels {
        for i in 0..n {
            for j in 0..n {
                if gx.at4(0, ch, i, j).abs() > 1e-12 {
                    y0 = y0.min(i);
                    y1 = y1.max(i);
                    x0 = x0.min(j);
                    x1 = x1.max(j);
                }
            }
        }
    }
    if y0 == usize::MAX {
        return Ok((0, 0));
    }
    Ok((y1 - y0 + 1, x1 - x0 + 1))
}
