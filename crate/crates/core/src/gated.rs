//! Conditioned convolutions: hard gating (partial convolution with mask
//! update) and soft gating (sigmoid-gated feature maps).

use crate::error::{Error, Result};
use crate::tensor::{ConvGeometry, Graph, Tensor, Var};

/// Default ELU slope parameter.
pub const ELU_ALPHA: f64 = 1.0;

/// Single-channel validity map: `1` marks a known pixel, `0` a hole.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskImage {
    values: Tensor,
}

impl MaskImage {
    /// Wraps a `[1,1,H,W]` tensor, rejecting anything that is not 0 or 1.
    pub fn new(values: Tensor) -> Result<Self> {
        let [b, c, _, _] = values.dims4()?;
        if b != 1 || c != 1 {
            return Err(Error::shape(format!(
                "mask must be [1,1,H,W], got {:?}",
                values.shape()
            )));
        }
        check_binary(&values)?;
        Ok(MaskImage { values })
    }

    pub fn ones(height: usize, width: usize) -> Self {
        MaskImage {
            values: Tensor::ones(&[1, 1, height, width]),
        }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        MaskImage {
            values: Tensor::zeros(&[1, 1, height, width]),
        }
    }

    /// Builds a mask from a predicate returning `true` for valid pixels.
    pub fn from_fn(height: usize, width: usize, mut valid: impl FnMut(usize, usize) -> bool) -> Self {
        let values = Tensor::from_fn(&[1, 1, height, width], |i| {
            if valid(i / width, i % width) {
                1.0
            } else {
                0.0
            }
        });
        MaskImage { values }
    }

    pub fn height(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn width(&self) -> usize {
        self.values.shape()[3]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.values.data()[y * self.width() + x] == 1.0
    }

    pub fn set(&mut self, y: usize, x: usize, valid: bool) {
        let w = self.width();
        self.values.data_mut()[y * w + x] = if valid { 1.0 } else { 0.0 };
    }

    pub fn tensor(&self) -> &Tensor {
        &self.values
    }

    pub fn hole_count(&self) -> usize {
        self.values.data().iter().filter(|&&v| v == 0.0).count()
    }

    pub fn hole_fraction(&self) -> f64 {
        self.hole_count() as f64 / self.values.len() as f64
    }

    pub fn is_all_valid(&self) -> bool {
        self.hole_count() == 0
    }

    /// 8-bit form: 255 for valid, 0 for hole.
    pub fn to_gray_u8(&self) -> Vec<u8> {
        self.values
            .data()
            .iter()
            .map(|&v| if v == 1.0 { 255 } else { 0 })
            .collect()
    }

    /// Inverse of [`MaskImage::to_gray_u8`]; any value other than 0 or 255 is rejected.
    pub fn from_gray_u8(height: usize, width: usize, pixels: &[u8]) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::shape(format!(
                "{} mask pixels for {height}x{width}",
                pixels.len()
            )));
        }
        let mut data = Vec::with_capacity(pixels.len());
        for (index, &p) in pixels.iter().enumerate() {
            data.push(match p {
                255 => 1.0,
                0 => 0.0,
                other => {
                    return Err(Error::NonBinaryMask {
                        index,
                        value: other as f64,
                    })
                }
            });
        }
        Ok(MaskImage {
            values: Tensor::new(&[1, 1, height, width], data)?,
        })
    }

    /// Nearest-neighbour resampling to another square-or-not extent.
    pub fn resize_nearest(&self, height: usize, width: usize) -> MaskImage {
        let (h0, w0) = (self.height(), self.width());
        MaskImage::from_fn(height, width, |y, x| {
            self.is_valid(y * h0 / height, x * w0 / width)
        })
    }
}

fn check_binary(t: &Tensor) -> Result<()> {
    match t.data().iter().position(|&v| v != 0.0 && v != 1.0) {
        Some(index) => Err(Error::NonBinaryMask {
            index,
            value: t.data()[index],
        }),
        None => Ok(()),
    }
}

/// Stacks masks into a `[B,1,H,W]` batch tensor.
pub fn mask_batch(masks: &[MaskImage]) -> Result<Tensor> {
    let items: Vec<Tensor> = masks.iter().map(|m| m.values.clone()).collect();
    Tensor::concat_batch(&items)
}

/// Repeats a `[B,1,H,W]` mask over `channels`.
pub fn broadcast_channels(mask: &Tensor, channels: usize) -> Result<Tensor> {
    let [b, c, h, w] = mask.dims4()?;
    if c != 1 {
        return Err(Error::shape(format!("mask batch must have one channel, got {c}")));
    }
    let plane = h * w;
    let src = mask.data();
    Tensor::new(
        &[b, channels, h, w],
        (0..b * channels * plane)
            .map(|i| src[(i / (channels * plane)) * plane + i % plane])
            .collect(),
    )
}

/// Per-output-window count of valid taps. Taps falling in the zero padding
/// count as valid, so an all-valid mask reproduces a plain convolution.
fn window_counts(mask: &Tensor, kernel: usize, geom: ConvGeometry) -> Result<(Vec<usize>, [usize; 4])> {
    let [b, _, h, w] = mask.dims4()?;
    let ho = geom.output_extent(h, kernel)?;
    let wo = geom.output_extent(w, kernel)?;
    let m = mask.data();
    let mut counts = vec![0usize; b * ho * wo];
    for n in 0..b {
        for oy in 0..ho {
            for ox in 0..wo {
                let mut count = 0;
                for ky in 0..kernel {
                    let iy = (oy * geom.stride + ky * geom.dilation) as isize - geom.padding as isize;
                    for kx in 0..kernel {
                        let ix = (ox * geom.stride + kx * geom.dilation) as isize
                            - geom.padding as isize;
                        let inside = iy >= 0 && iy < h as isize && ix >= 0 && ix < w as isize;
                        if !inside || m[(n * h + iy as usize) * w + ix as usize] == 1.0 {
                            count += 1;
                        }
                    }
                }
                counts[(n * ho + oy) * wo + ox] = count;
            }
        }
    }
    Ok((counts, [b, 1, ho, wo]))
}

/// Updated mask after one partial-convolution layer of the given geometry:
/// an output position stays valid iff its window sees at least one valid tap.
pub fn mask_shrinkage_batch(mask: &Tensor, kernel: usize, geom: ConvGeometry) -> Result<Tensor> {
    check_binary(mask)?;
    let (counts, shape) = window_counts(mask, kernel, geom)?;
    Tensor::new(
        &shape,
        counts.iter().map(|&c| if c > 0 { 1.0 } else { 0.0 }).collect(),
    )
}

pub fn mask_shrinkage(mask: &MaskImage, kernel: usize, geom: ConvGeometry) -> Result<MaskImage> {
    Ok(MaskImage {
        values: mask_shrinkage_batch(&mask.values, kernel, geom)?,
    })
}

/// Records a partial convolution on the graph. `mask` is a `[B,1,H,W]`
/// binary tensor treated as non-differentiable data. Returns the output and
/// the updated mask.
pub fn partial_conv(
    g: &mut Graph,
    x: Var,
    w: Var,
    bias: Var,
    mask: &Tensor,
    geom: ConvGeometry,
) -> Result<(Var, Tensor)> {
    check_binary(mask)?;
    let [b, cin, h, wd] = g.value(x).dims4()?;
    let [mb, _, mh, mw] = mask.dims4()?;
    if (mb, mh, mw) != (b, h, wd) {
        return Err(Error::shape(format!(
            "mask {:?} not aligned with input {:?}",
            mask.shape(),
            g.shape(x)
        )));
    }
    let wshape = g.shape(w).to_vec();
    if wshape.len() != 4 {
        return Err(Error::shape(format!("weights {wshape:?}")));
    }
    let (cout, k) = (wshape[0], wshape[2]);
    let window = (k * k) as f64;

    let (counts, [_, _, ho, wo]) = window_counts(mask, k, geom)?;
    let plane = ho * wo;
    let ratio = Tensor::from_fn(&[b, cout, ho, wo], |i| {
        let c = counts[(i / (cout * plane)) * plane + i % plane];
        if c > 0 {
            window / c as f64
        } else {
            0.0
        }
    });
    let updated = Tensor::from_fn(&[b, 1, ho, wo], |i| if counts[i] > 0 { 1.0 } else { 0.0 });

    let m_in = g.constant(broadcast_channels(mask, cin)?)?;
    let masked = g.mul(x, m_in)?;
    let raw = g.conv2d(masked, w, None, geom)?;
    let ratio = g.constant(ratio)?;
    let scaled = g.mul(raw, ratio)?;
    let biased = g.add_channel_bias(scaled, bias)?;
    let m_out = g.constant(broadcast_channels(&updated, cout)?)?;
    let out = g.mul(biased, m_out)?;
    Ok((out, updated))
}

/// Where the ELU sits in a soft-gated convolution.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatePlacement {
    /// `elu(w_f x) ⊙ σ(w_g x)`.
    #[default]
    FeatureElu,
    /// `(w_f x) ⊙ σ(elu(w_g x))`.
    GateElu,
}

/// Records a soft-gated convolution on the graph.
#[allow(clippy::too_many_arguments)]
pub fn gated_conv(
    g: &mut Graph,
    x: Var,
    wf: Var,
    bf: Var,
    wg: Var,
    bg: Var,
    geom: ConvGeometry,
    placement: GatePlacement,
) -> Result<Var> {
    if g.shape(wf) != g.shape(wg) {
        return Err(Error::shape(format!(
            "feature filters {:?} and gating filters {:?} differ",
            g.shape(wf),
            g.shape(wg)
        )));
    }
    let feat = g.conv2d(x, wf, Some(bf), geom)?;
    let gate = g.conv2d(x, wg, Some(bg), geom)?;
    let (feat, gate) = match placement {
        GatePlacement::FeatureElu => (g.elu(feat, ELU_ALPHA), gate),
        GatePlacement::GateElu => (feat, g.elu(gate, ELU_ALPHA)),
    };
    let gate = g.sigmoid(gate);
    g.mul(feat, gate)
}

fn glorot(shape: [usize; 4], rng: &mut impl rand::Rng) -> Tensor {
    let [cout, cin, k, _] = shape;
    let limit = (6.0 / ((cin + cout) * k * k) as f64).sqrt();
    Tensor::from_fn(&shape, |_| rng.random_range(-limit..limit))
}

/// Soft-gated convolution layer with its own parameters.
#[derive(Clone, Debug)]
pub struct GatedConvLayer {
    pub wf: Tensor,
    pub wg: Tensor,
    pub bias_f: Tensor,
    pub bias_g: Tensor,
    pub geom: ConvGeometry,
    pub placement: GatePlacement,
}

impl GatedConvLayer {
    pub fn new(wf: Tensor, wg: Tensor, bias_f: Tensor, bias_g: Tensor, geom: ConvGeometry) -> Result<Self> {
        if wf.shape() != wg.shape() {
            return Err(Error::shape(format!(
                "wf {:?} vs wg {:?}",
                wf.shape(),
                wg.shape()
            )));
        }
        let cout = wf.shape()[0];
        if bias_f.shape() != [cout] || bias_g.shape() != [cout] {
            return Err(Error::shape("gated biases must have one entry per output channel"));
        }
        Ok(GatedConvLayer {
            wf,
            wg,
            bias_f,
            bias_g,
            geom,
            placement: GatePlacement::default(),
        })
    }

    /// Glorot-uniform filters, zero biases.
    pub fn random(cin: usize, cout: usize, k: usize, geom: ConvGeometry, rng: &mut impl rand::Rng) -> Self {
        let shape = [cout, cin, k, k];
        GatedConvLayer {
            wf: glorot(shape, rng),
            wg: glorot(shape, rng),
            bias_f: Tensor::zeros(&[cout]),
            bias_g: Tensor::zeros(&[cout]),
            geom,
            placement: GatePlacement::default(),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone())?;
        let wf = g.constant(self.wf.clone())?;
        let bf = g.constant(self.bias_f.clone())?;
        let wg = g.constant(self.wg.clone())?;
        let bg = g.constant(self.bias_g.clone())?;
        let out = gated_conv(&mut g, xv, wf, bf, wg, bg, self.geom, self.placement)?;
        Ok(g.value(out).clone())
    }
}

/// Partial convolution layer with its own parameters.
#[derive(Clone, Debug)]
pub struct PartialConvLayer {
    pub w: Tensor,
    pub bias: Tensor,
    pub geom: ConvGeometry,
}

impl PartialConvLayer {
    pub fn new(w: Tensor, bias: Tensor, geom: ConvGeometry) -> Result<Self> {
        if w.shape().len() != 4 || bias.shape() != [w.shape()[0]] {
            return Err(Error::shape(format!(
                "weights {:?} with bias {:?}",
                w.shape(),
                bias.shape()
            )));
        }
        Ok(PartialConvLayer { w, bias, geom })
    }

    pub fn random(cin: usize, cout: usize, k: usize, geom: ConvGeometry, rng: &mut impl rand::Rng) -> Self {
        PartialConvLayer {
            w: glorot([cout, cin, k, k], rng),
            bias: Tensor::zeros(&[cout]),
            geom,
        }
    }

    pub fn kernel(&self) -> usize {
        self.w.shape()[2]
    }

    pub fn forward(&self, x: &Tensor, mask: &MaskImage) -> Result<(Tensor, MaskImage)> {
        let mut g = Graph::new();
        let xv = g.constant(x.clone())?;
        let w = g.constant(self.w.clone())?;
        let b = g.constant(self.bias.clone())?;
        let batch = x.shape()[0];
        let masks = mask_batch(&vec![mask.clone(); batch])?;
        let (out, updated) = partial_conv(&mut g, xv, w, b, &masks, self.geom)?;
        let first = updated.batch_item(0);
        Ok((g.value(out).clone(), MaskImage { values: first }))
    }
}
