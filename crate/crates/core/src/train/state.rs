//! Training checkpoint.
//!
//! ```text
//! magic "OCCGTRN\0" | version u32 | step u64
//! rng: seed [u8; 32] | stream u64 | word_pos u128
//! config: length u32 | JSON bytes
//! 3 × (generator, global critic, patch critic):
//!   network: length u32 | network checkpoint bytes
//!   adam: t u64 | count u32 | m tensors | v tensors
//! ```

use std::path::Path;

use rand_chacha::rand_core::SeedableRng;

use super::{Adam, Player, TrainConfig, TrainState};
use crate::error::{Error, Result};
use crate::net::checkpoint::{decode_network, encode_network, Reader, Writer};
use crate::rng::Rng;

const MAGIC: &[u8; 8] = b"OCCGTRN\0";
const VERSION: u32 = 1;
const WHAT: &str = "training checkpoint";

fn write_player(w: &mut Writer, p: &Player) -> Result<()> {
    let net = encode_network(&p.spec, &p.state)?;
    w.u32(net.len());
    w.0.extend_from_slice(&net);
    w.u64(p.adam.t);
    w.u32(p.adam.m.len());
    for t in p.adam.m.iter().chain(&p.adam.v) {
        w.tensor(t);
    }
    Ok(())
}

fn read_player(r: &mut Reader) -> Result<Player> {
    let len = r.u32()?;
    let (spec, state) = decode_network(r.take(len)?)?;
    let t = r.u64()?;
    let n = r.u32()?;
    if n != state.params.len() {
        return Err(Error::format(WHAT, format!("{n} moment tensors for {} parameters", state.params.len())));
    }
    let m = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    let v = (0..n).map(|_| r.tensor()).collect::<Result<Vec<_>>>()?;
    for (i, p) in state.params.iter().enumerate() {
        if m[i].shape() != p.shape() || v[i].shape() != p.shape() {
            return Err(Error::format(WHAT, format!("moment shape mismatch at parameter {i}")));
        }
    }
    Ok(Player {
        spec,
        state,
        adam: Adam { t, m, v },
    })
}

pub fn encode_train_state(s: &TrainState) -> Result<Vec<u8>> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(MAGIC);
    w.u32(VERSION as usize);
    w.u64(s.step);
    w.0.extend_from_slice(&s.rng.get_seed());
    w.u64(s.rng.get_stream());
    w.0.extend_from_slice(&s.rng.get_word_pos().to_le_bytes());
    let cfg = serde_json::to_vec(&s.config).map_err(|e| Error::format(WHAT, e.to_string()))?;
    w.u32(cfg.len());
    w.0.extend_from_slice(&cfg);
    for p in [&s.generator, &s.global_critic, &s.patch_critic] {
        write_player(&mut w, p)?;
    }
    Ok(w.0)
}

pub fn decode_train_state(bytes: &[u8]) -> Result<TrainState> {
    let mut r = Reader::new(bytes, WHAT);
    if r.take(8)? != MAGIC {
        return Err(Error::format(WHAT, "bad magic"));
    }
    let version = r.u32()?;
    if version != VERSION as usize {
        return Err(Error::format(WHAT, format!("unsupported version {version}")));
    }
    let step = r.u64()?;
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
    let mut rng = Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let len = r.u32()?;
    let config: TrainConfig =
        serde_json::from_slice(r.take(len)?).map_err(|e| Error::format(WHAT, e.to_string()))?;
    config.validate()?;
    let generator = read_player(&mut r)?;
    let global_critic = read_player(&mut r)?;
    let patch_critic = read_player(&mut r)?;
    r.finish()?;
    if generator.spec.variant != config.variant {
        return Err(Error::format(WHAT, "generator variant disagrees with config"));
    }
    Ok(TrainState {
        config,
        generator,
        global_critic,
        patch_critic,
        step,
        rng,
    })
}

pub fn write_train_state(path: &Path, s: &TrainState) -> Result<()> {
    std::fs::write(path, encode_train_state(s)?).map_err(|e| Error::io(path, e))
}

pub fn read_train_state(path: &Path) -> Result<TrainState> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_train_state(&bytes)
}
