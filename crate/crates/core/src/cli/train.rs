//! Training and inference subcommands.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated::{mask_batch, MaskImage};
use crate::imageio::{list_images, read_mask, read_rgb, resize_rgb, rgb_to_tensor, tensor_to_rgb, write_rgb};
use crate::masks::{sample_mask, LandmarkSet, MaskFamilyParams};
use crate::net::{decode_network, generator_input, write_network, ConvVariant, NetworkSpec, NetworkState};
use crate::rng::substream;
use crate::tensor::Tensor;
use crate::train::{
    decode_train_state, read_train_state, write_train_state, AdamConfig, GanLossConfig, LrSchedule, TrainBatch,
    TrainConfig, TrainState,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// Small networks at any resolution with a faster schedule.
    #[default]
    Toy,
    /// 128×128 networks.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainCmdConfig {
    pub seed: u64,
    pub images: PathBuf,
    pub variant: ConvVariant,
    pub preset: Preset,
    pub resolution: usize,
    /// Total steps; a resumed run continues up to this count.
    pub steps: u64,
    pub batch_size: usize,
    /// One mask per image for the whole run instead of fresh masks per step.
    pub fixed_masks: bool,
    pub checkpoint_every: u64,
    pub resume: Option<PathBuf>,
    pub landmarks: Option<PathBuf>,
    pub masks: MaskFamilyParams,
    pub loss: GanLossConfig,
    /// Preset schedule when absent.
    pub schedule: Option<LrSchedule>,
    pub adam: AdamConfig,
}

impl Default for TrainCmdConfig {
    fn default() -> Self {
        TrainCmdConfig {
            seed: 0,
            images: "faces".into(),
            variant: ConvVariant::Gated,
            preset: Preset::Toy,
            resolution: 32,
            steps: 200,
            batch_size: 10,
            fixed_masks: true,
            checkpoint_every: 0,
            resume: None,
            landmarks: None,
            masks: MaskFamilyParams::default(),
            loss: GanLossConfig::default(),
            schedule: None,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainCmdConfig {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut tc = match self.preset {
            Preset::Toy => TrainConfig::toy(self.variant, self.resolution, self.seed),
            Preset::Full => {
                if self.resolution != crate::masks::FRAME {
                    return Err(Error::invalid(format!(
                        "the full preset runs at {0}x{0}",
                        crate::masks::FRAME
                    )));
                }
                TrainConfig::full(self.variant, self.seed)
            }
        };
        tc.loss = self.loss.clone();
        if let Some(s) = &self.schedule {
            tc.schedule = s.clone();
        }
        tc.adam = self.adam.clone();
        tc.validate()?;
        Ok(tc)
    }
}

/// Masks sampled in the 128×128 landmark frame, then resized.
fn draw_masks(
    rng: &mut impl rand::Rng,
    n: usize,
    lms: &LandmarkSet,
    params: &MaskFamilyParams,
    res: usize,
) -> Result<Vec<MaskImage>> {
    (0..n)
        .map(|_| Ok(sample_mask(lms, rng, params)?.1.resize_nearest(res, res)))
        .collect()
}

fn load_training_images(dir: &Path, res: usize) -> Result<Vec<Tensor>> {
    let files = list_images(dir)?;
    if files.is_empty() {
        return Err(Error::invalid(format!("no images in {}", dir.display())));
    }
    files
        .par_iter()
        .map(|p| Ok(rgb_to_tensor(&resize_rgb(&read_rgb(p)?, res, res))))
        .collect()
}

/// Runs up to `steps`, writing `metrics.log` (one line per step),
/// `train_state.bin`, `generator.bin` and optional numbered checkpoints.
pub fn train(cfg: &TrainCmdConfig, out: &Path) -> Result<()> {
    cfg.masks.validate()?;
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    let tc = cfg.train_config()?;
    let res = tc.generator.resolution;
    let images = load_training_images(&cfg.images, res)?;
    let n = images.len();
    let lms = match &cfg.landmarks {
        Some(p) => LandmarkSet::read(p)?,
        None => LandmarkSet::template(),
    };
    let fixed = if cfg.fixed_masks {
        let mut rng = substream(cfg.seed, "train-masks-fixed", 0);
        Some(draw_masks(&mut rng, n, &lms, &cfg.masks, res)?)
    } else {
        None
    };

    let mut state = match &cfg.resume {
        Some(p) => {
            let s = read_train_state(p)?;
            if s.config != tc {
                return Err(Error::Protocol(format!(
                    "{} was trained with different settings",
                    p.display()
                )));
            }
            if s.step > cfg.steps {
                return Err(Error::invalid(format!("checkpoint is at step {}, past {}", s.step, cfg.steps)));
            }
            s
        }
        None => TrainState::new(tc)?,
    };

    let ckpt_dir = out.join("checkpoints");
    if cfg.checkpoint_every > 0 {
        std::fs::create_dir_all(&ckpt_dir).map_err(|e| Error::io(&ckpt_dir, e))?;
    }
    let log_path = out.join("metrics.log");
    let mut log = std::fs::OpenOptions::new()
        .create(true)
        .write(true)
        .append(cfg.resume.is_some())
        .truncate(cfg.resume.is_none())
        .open(&log_path)
        .map_err(|e| Error::io(&log_path, e))?;

    while state.step < cfg.steps {
        let step = state.step;
        let picked: Vec<usize> = if cfg.batch_size >= n {
            (0..n).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut substream(cfg.seed, "train-batch", step), n, cfg.batch_size)
                .into_vec();
            idx.sort_unstable();
            idx
        };
        let masks = match &fixed {
            Some(f) => picked.iter().map(|&i| f[i].clone()).collect(),
            None => draw_masks(
                &mut substream(cfg.seed, "train-masks", step),
                picked.len(),
                &lms,
                &cfg.masks,
                res,
            )?,
        };
        let batch_images: Vec<Tensor> = picked.iter().map(|&i| images[i].clone()).collect();
        let batch = TrainBatch::new(Tensor::concat_batch(&batch_images)?, mask_batch(&masks)?)?;
        let m = state.train_step(&batch)?;
        writeln!(
            log,
            "step={} lr_g={} lr_d={} l1={} adv_g={} adv_p={} critic={} gp={}",
            m.step, m.lr_g, m.lr_d, m.l1, m.adv_g, m.adv_p, m.critic, m.gp
        )
        .map_err(|e| Error::io(&log_path, e))?;
        if cfg.checkpoint_every > 0 && state.step % cfg.checkpoint_every == 0 {
            write_train_state(&ckpt_dir.join(format!("step_{:06}.bin", state.step)), &state)?;
        }
    }
    write_train_state(&out.join("train_state.bin"), &state)?;
    write_network(&out.join("generator.bin"), &state.generator.spec, &state.generator.state)
}

/// Parses one `metrics.log` line into `(key, value)` pairs.
pub fn parse_metrics_line(line: &str) -> Result<Vec<(String, f64)>> {
    line.split_whitespace()
        .map(|kv| {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::format("metrics log", format!("bad field {kv:?}")))?;
            let v = v
                .parse()
                .map_err(|_| Error::format("metrics log", format!("bad value {kv:?}")))?;
            Ok((k.to_string(), v))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InpaintConfig {
    pub seed: u64,
    /// Generator file or training state.
    pub checkpoint: PathBuf,
    pub images: PathBuf,
    /// Directory of `<stem>.png` masks matching the images.
    pub masks: PathBuf,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        InpaintConfig {
            seed: 0,
            checkpoint: "generator.bin".into(),
            images: "occluded".into(),
            masks: "masks".into(),
        }
    }
}

fn load_generator(path: &Path) -> Result<(NetworkSpec, NetworkState)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (spec, state) = match decode_network(&bytes) {
        Ok(g) => g,
        Err(net_err) => match decode_train_state(&bytes) {
            Ok(s) => (s.generator.spec, s.generator.state),
            Err(_) => return Err(net_err),
        },
    };
    if spec.kind != crate::net::NetworkKind::Generator {
        return Err(Error::invalid(format!("{} does not hold a generator", path.display())));
    }
    Ok((spec, state))
}

/// A low-resolution pixel is a hole if any pixel mapping onto it is.
fn shrink_mask(mask: &MaskImage, res: usize) -> MaskImage {
    let (h, w) = (mask.height(), mask.width());
    let mut out = MaskImage::ones(res, res);
    for y in 0..h {
        for x in 0..w {
            if !mask.is_valid(y, x) {
                out.set(y * res / h, x * res / w, false);
            }
        }
    }
    out
}

/// Completes `image` where `mask` is 0: the generator runs at its own
/// resolution, its output is resized back, and known pixels are kept as is.
pub fn inpaint_image(spec: &NetworkSpec, state: &NetworkState, image: &RgbImage, mask: &MaskImage) -> Result<RgbImage> {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if mask.height() != h || mask.width() != w {
        return Err(Error::shape(format!(
            "{}x{} mask for a {w}x{h} image",
            mask.width(),
            mask.height()
        )));
    }
    if mask.is_all_valid() {
        return Ok(image.clone());
    }
    let r = spec.input_size;
    let x = rgb_to_tensor(&resize_rgb(image, r, r));
    let m = mask_batch(&[shrink_mask(mask, r)])?;
    let generated = spec.evaluate(state, &generator_input(&x, &m)?, Some(&m))?;
    let fill = resize_rgb(&tensor_to_rgb(&generated, 0)?, w, h);
    Ok(RgbImage::from_fn(w as u32, h as u32, |px, py| {
        if mask.is_valid(py as usize, px as usize) {
            *image.get_pixel(px, py)
        } else {
            *fill.get_pixel(px, py)
        }
    }))
}

/// Writes `completed/<stem>.png` for every image.
pub fn inpaint(cfg: &InpaintConfig, out: &Path) -> Result<()> {
    let (spec, state) = load_generator(&cfg.checkpoint)?;
    spec.check_state(&state)?;
    let dir = out.join("completed");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    list_images(&cfg.images)?.par_iter().try_for_each(|p| {
        let name = p.file_name().expect("listed files have names");
        let stem = Path::new(name).with_extension("");
        let mask = read_mask(&cfg.masks.join(stem.with_extension("png")))?;
        let done = inpaint_image(&spec, &state, &read_rgb(p)?, &mask)?;
        write_rgb(&dir.join(stem.with_extension("png")), &done)
    })
}
