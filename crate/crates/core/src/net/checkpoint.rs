//! Binary network container.
//!
//! ```text
//! magic "OCCGNET\0" | version u32 | kind u8 | variant u8 | gate u8 | 0u8
//! input_size u32 | input_channels u32 | seed u64 | layer_count u32
//! layers: tag u8 (0 conv, 1 upsample)
//!   conv:     variant u8 | activation u8 | norm u8 | substitutable u8 |
//!             in u32 | out u32 | kernel u32 | stride u32 | dilation u32 | padding u32
//!   upsample: factor u32
//! param_count u32
//! params: rank u32 | dims u32 × rank | f64 × product(dims)
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use super::{Activation, ConvSpec, ConvVariant, LayerSpec, NetworkKind, NetworkSpec, NetworkState};
use crate::error::{Error, Result};
use crate::gated::GatePlacement;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"OCCGNET\0";
const VERSION: u32 = 1;

pub(crate) struct Writer(pub Vec<u8>);

impl Writer {
    pub fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    pub fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    pub fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    pub fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    pub fn tensor(&mut self, t: &Tensor) {
        self.u32(t.shape().len());
        for &d in t.shape() {
            self.u32(d);
        }
        self.f64s(t.data());
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8], what: &'static str) -> Self {
        Reader { buf, pos: 0, what }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::format(self.what, format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    pub fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    pub fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub fn tensor(&mut self) -> Result<Tensor> {
        let rank = self.u32()?;
        if rank == 0 || rank > 8 {
            return Err(Error::format(self.what, format!("tensor rank {rank}")));
        }
        let shape = (0..rank).map(|_| self.u32()).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        if n.saturating_mul(8) > self.buf.len() - self.pos {
            return Err(Error::format(self.what, format!("tensor {shape:?} exceeds remaining bytes")));
        }
        let data = (0..n).map(|_| self.f64()).collect::<Result<Vec<_>>>()?;
        Tensor::new(&shape, data)
    }
    pub fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::format(
                self.what,
                format!("{} trailing bytes", self.buf.len() - self.pos),
            ));
        }
        Ok(())
    }
}

fn kind_tag(k: NetworkKind) -> u8 {
    match k {
        NetworkKind::Generator => 0,
        NetworkKind::GlobalCritic => 1,
        NetworkKind::PatchCritic => 2,
    }
}

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Identity => 0,
        Activation::Elu => 1,
        Activation::LeakyRelu => 2,
        Activation::Tanh => 3,
    }
}

fn gate_tag(p: GatePlacement) -> u8 {
    match p {
        GatePlacement::FeatureElu => 0,
        GatePlacement::GateElu => 1,
    }
}

fn bad(detail: String) -> Error {
    Error::format("network checkpoint", detail)
}

pub fn encode_network(spec: &NetworkSpec, state: &NetworkState) -> Result<Vec<u8>> {
    spec.check_state(state)?;
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u8(kind_tag(spec.kind));
    w.u8(spec.variant.tag());
    w.u8(gate_tag(spec.gate_placement));
    w.u8(0);
    w.u32(spec.input_size);
    w.u32(spec.input_channels);
    w.u64(state.seed);
    w.u32(spec.layers.len());
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv(c) => {
                w.u8(0);
                w.u8(c.variant.tag());
                w.u8(activation_tag(c.activation));
                w.u8(c.instance_norm as u8);
                w.u8(c.substitutable as u8);
                for v in [c.in_channels, c.out_channels, c.kernel, c.stride, c.dilation, c.padding] {
                    w.u32(v);
                }
            }
            LayerSpec::Upsample(f) => {
                w.u8(1);
                w.u32(*f);
            }
        }
    }
    w.u32(state.params.len());
    for p in &state.params {
        w.tensor(p);
    }
    Ok(w.0)
}

pub fn decode_network(bytes: &[u8]) -> Result<(NetworkSpec, NetworkState)> {
    let mut r = Reader::new(bytes, "network checkpoint");
    if r.take(8)? != MAGIC {
        return Err(bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(bad(format!("unsupported version {version}")));
    }
    let kind = match r.u8()? {
        0 => NetworkKind::Generator,
        1 => NetworkKind::GlobalCritic,
        2 => NetworkKind::PatchCritic,
        t => return Err(bad(format!("kind tag {t}"))),
    };
    let variant = ConvVariant::from_tag(r.u8()?)?;
    let gate_placement = match r.u8()? {
        0 => GatePlacement::FeatureElu,
        1 => GatePlacement::GateElu,
        t => return Err(bad(format!("gate tag {t}"))),
    };
    r.u8()?;
    let input_size = r.u32()?;
    let input_channels = r.u32()?;
    let seed = r.u64()?;
    let n_layers = r.u32()?;
    let mut layers = Vec::with_capacity(n_layers.min(1024));
    for _ in 0..n_layers {
        match r.u8()? {
            0 => {
                let variant = ConvVariant::from_tag(r.u8()?)?;
                let activation = match r.u8()? {
                    0 => Activation::Identity,
                    1 => Activation::Elu,
                    2 => Activation::LeakyRelu,
                    3 => Activation::Tanh,
                    t => return Err(bad(format!("activation tag {t}"))),
                };
                let instance_norm = r.u8()? != 0;
                let substitutable = r.u8()? != 0;
                let mut v = [0usize; 6];
                for slot in &mut v {
                    *slot = r.u32()?;
                }
                layers.push(LayerSpec::Conv(ConvSpec {
                    variant,
                    in_channels: v[0],
                    out_channels: v[1],
                    kernel: v[2],
                    stride: v[3],
                    dilation: v[4],
                    padding: v[5],
                    activation,
                    instance_norm,
                    substitutable,
                }));
            }
            1 => layers.push(LayerSpec::Upsample(r.u32()?)),
            t => return Err(bad(format!("layer tag {t}"))),
        }
    }
    let n_params = r.u32()?;
    let params = (0..n_params).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    let spec = NetworkSpec {
        kind,
        variant,
        input_size,
        input_channels,
        gate_placement,
        layers,
    };
    spec.validate()?;
    let state = NetworkState { seed, params };
    spec.check_state(&state)?;
    Ok((spec, state))
}

pub fn write_network(path: &Path, spec: &NetworkSpec, state: &NetworkState) -> Result<()> {
    let bytes = encode_network(spec, state)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_network(path: &Path) -> Result<(NetworkSpec, NetworkState)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_network(&bytes)
}
