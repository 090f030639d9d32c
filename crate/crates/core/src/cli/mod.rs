//! Command-line surface. Every subcommand merges defaults, an optional TOML
//! file and flags (flags win), writes the merged settings to
//! `<out-dir>/config.toml`, then runs.

mod data;
mod eval;
mod train;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub use data::{
    gen_masks, make_toy_faces, render_occlusions, toy_embed, GenMasksConfig, MaskEntry, MaskManifest, ModelFile,
    OcclusionEntry, PlacedOccluder, RenderOcclusionsConfig, ToyEmbedConfig, ToyFacesConfig,
};
pub use eval::{eval_openset, eval_verify, Condition, EvalOpenSetConfig, EvalVerifyConfig, OpenSetReport, VerificationReportFile};
pub use train::{inpaint, inpaint_image, parse_metrics_line, train, InpaintConfig, Preset, TrainCmdConfig};

#[derive(Parser, Debug)]
#[command(name = "occgame", version, about = "Occlusion synthesis, face completion and recognition evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// Seed for every random draw of the run.
    #[arg(long)]
    pub seed: Option<u64>,
    /// TOML settings file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Directory receiving all outputs.
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample hole masks from the six mask families.
    GenMasks {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        count: Option<usize>,
        /// Landmark file (`index x y visible` per line); template if absent.
        #[arg(long)]
        landmarks: Option<PathBuf>,
    },
    /// Render randomized 3D occluders onto face images.
    RenderOcclusions {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        faces: Option<PathBuf>,
        /// Pose file shared by all faces, or a directory of `<stem>.pose` files.
        #[arg(long)]
        poses: Option<PathBuf>,
        /// Comma-separated categories to draw from; `none` leaves faces untouched.
        #[arg(long, value_delimiter = ',')]
        categories: Option<Vec<String>>,
        /// Occluders drawn per face.
        #[arg(long)]
        instances: Option<usize>,
    },
    /// Train a completion network against global and patch critics.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        images: Option<PathBuf>,
        /// regular, partial or gated.
        #[arg(long)]
        variant: Option<String>,
        /// toy or full.
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// Keep one mask per image for the whole run.
        #[arg(long)]
        fixed_masks: Option<bool>,
        /// Write a numbered checkpoint every N steps (0 disables).
        #[arg(long)]
        checkpoint_every: Option<u64>,
        /// Training state to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Fill masked regions of images with a trained generator.
    Inpaint {
        #[command(flatten)]
        common: Common,
        /// Generator or training-state file.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        images: Option<PathBuf>,
        /// Directory of `<stem>.png` masks (255 known, 0 hole).
        #[arg(long)]
        masks: Option<PathBuf>,
    },
    /// Verification metrics (1−EER, accuracy, AUC) per condition.
    EvalVerify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: Option<PathBuf>,
        /// `NAME=PATH`, repeatable; the first set is the clean reference.
        #[arg(long = "embeddings")]
        embeddings: Vec<String>,
        /// `NAME=PATH` with mirrored-image embeddings for condition NAME.
        #[arg(long = "flip")]
        flips: Vec<String>,
        #[arg(long)]
        pca_dim: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Open-set identification (DIR at FAR) per condition.
    EvalOpenset {
        #[command(flatten)]
        common: Common,
        /// Split manifest with train/gallery/mated/nonmated entries.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// `NAME=PATH`, repeatable; the first set provides the gallery.
        #[arg(long = "embeddings")]
        embeddings: Vec<String>,
        #[arg(long = "flip")]
        flips: Vec<String>,
        /// Comma-separated FAR operating points.
        #[arg(long, value_delimiter = ',')]
        fars: Option<Vec<f64>>,
        #[arg(long)]
        pca_dim: Option<usize>,
        #[arg(long)]
        alpha: Option<f64>,
    },
    /// Write a procedural identity dataset with pairs and open-set manifests.
    MakeToyFaces {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        identities: Option<usize>,
        #[arg(long)]
        images_per_identity: Option<usize>,
        /// Extra identities used only for PCA training.
        #[arg(long)]
        train_identities: Option<usize>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        splits: Option<usize>,
    },
    /// Embed `<label>_<index>` images with the fixed toy encoder.
    ToyEmbed {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        images: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        block: Option<usize>,
        /// Also embed mirrored images.
        #[arg(long)]
        flip: Option<bool>,
    },
}

/// Flag values layered over the TOML settings.
#[derive(Default)]
struct Overrides(toml::Table);

impl Overrides {
    fn set<T: Serialize>(&mut self, key: &str, value: Option<T>) -> Result<()> {
        let Some(v) = value else { return Ok(()) };
        let v = toml::Value::try_from(v).map_err(|e| Error::format("config", format!("{key}: {e}")))?;
        let mut parts: Vec<&str> = key.split('.').collect();
        let last = parts.pop().expect("non-empty key");
        let mut table = &mut self.0;
        for p in parts {
            table = table
                .entry(p)
                .or_insert_with(|| toml::Value::Table(toml::Table::new()))
                .as_table_mut()
                .expect("nested override keys are tables");
        }
        table.insert(last.into(), v);
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn resolve<C: DeserializeOwned + Serialize>(common: &Common, mut over: Overrides) -> Result<C> {
    let mut table = match &common.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            text.parse::<toml::Table>()
                .map_err(|e| Error::format("config", format!("{}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    over.set("seed", common.seed)?;
    merge(&mut table, over.0);
    toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| Error::format("config", e.to_string()))
}

fn prepare_out_dir<C: Serialize>(out: &Path, config: &C) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let text = toml::to_string(config).map_err(|e| Error::format("config", e.to_string()))?;
    let path = out.join("config.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.to_string_lossy().into_owned())
}

fn parse_named(items: &[String], what: &str) -> Result<Vec<(String, PathBuf)>> {
    items
        .iter()
        .map(|s| {
            let (n, p) = s
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("{what} {s:?} is not NAME=PATH")))?;
            if n.is_empty() || p.is_empty() {
                return Err(Error::invalid(format!("{what} {s:?} is not NAME=PATH")));
            }
            Ok((n.to_string(), PathBuf::from(p)))
        })
        .collect()
}

fn conditions(embeddings: &[String], flips: &[String]) -> Result<Option<Vec<Condition>>> {
    if embeddings.is_empty() {
        if !flips.is_empty() {
            return Err(Error::invalid("--flip given without --embeddings"));
        }
        return Ok(None);
    }
    let mut out: Vec<Condition> = parse_named(embeddings, "--embeddings")?
        .into_iter()
        .map(|(name, embeddings)| Condition {
            name,
            embeddings,
            flip: None,
        })
        .collect();
    for (name, path) in parse_named(flips, "--flip")? {
        let c = out
            .iter_mut()
            .find(|c| c.name == name)
            .ok_or_else(|| Error::invalid(format!("--flip for unknown condition {name:?}")))?;
        c.flip = Some(path);
    }
    Ok(Some(out))
}

fn run_with<C: DeserializeOwned + Serialize>(
    common: &Common,
    over: Overrides,
    body: impl FnOnce(&C, &Path) -> Result<()>,
) -> Result<()> {
    let cfg: C = resolve(common, over)?;
    prepare_out_dir(&common.out_dir, &cfg)?;
    body(&cfg, &common.out_dir)
}

pub fn run(cli: Cli) -> Result<()> {
    let mut o = Overrides::default();
    match cli.command {
        Command::GenMasks {
            common,
            count,
            landmarks,
        } => {
            o.set("count", count)?;
            o.set("landmarks", path_str(landmarks))?;
            run_with(&common, o, gen_masks)
        }
        Command::RenderOcclusions {
            common,
            faces,
            poses,
            categories,
            instances,
        } => {
            o.set("faces", path_str(faces))?;
            o.set("poses", path_str(poses))?;
            o.set("categories", categories)?;
            o.set("instances", instances)?;
            run_with(&common, o, render_occlusions)
        }
        Command::Train {
            common,
            images,
            variant,
            preset,
            resolution,
            steps,
            batch_size,
            fixed_masks,
            checkpoint_every,
            resume,
        } => {
            o.set("images", path_str(images))?;
            o.set("variant", variant)?;
            o.set("preset", preset)?;
            o.set("resolution", resolution)?;
            o.set("steps", steps)?;
            o.set("batch_size", batch_size)?;
            o.set("fixed_masks", fixed_masks)?;
            o.set("checkpoint_every", checkpoint_every)?;
            o.set("resume", path_str(resume))?;
            run_with(&common, o, train)
        }
        Command::Inpaint {
            common,
            checkpoint,
            images,
            masks,
        } => {
            o.set("checkpoint", path_str(checkpoint))?;
            o.set("images", path_str(images))?;
            o.set("masks", path_str(masks))?;
            run_with(&common, o, inpaint)
        }
        Command::EvalVerify {
            common,
            pairs,
            embeddings,
            flips,
            pca_dim,
            alpha,
        } => {
            o.set("pairs", path_str(pairs))?;
            o.set("conditions", conditions(&embeddings, &flips)?)?;
            o.set("pipeline.pca_dim", pca_dim)?;
            o.set("pipeline.alpha", alpha)?;
            run_with(&common, o, eval_verify)
        }
        Command::EvalOpenset {
            common,
            manifest,
            embeddings,
            flips,
            fars,
            pca_dim,
            alpha,
        } => {
            o.set("manifest", path_str(manifest))?;
            o.set("conditions", conditions(&embeddings, &flips)?)?;
            o.set("fars", fars)?;
            o.set("pipeline.pca_dim", pca_dim)?;
            o.set("pipeline.alpha", alpha)?;
            run_with(&common, o, eval_openset)
        }
        Command::MakeToyFaces {
            common,
            identities,
            images_per_identity,
            train_identities,
            folds,
            splits,
        } => {
            o.set("identities", identities)?;
            o.set("images_per_identity", images_per_identity)?;
            o.set("train_identities", train_identities)?;
            o.set("folds", folds)?;
            o.set("splits", splits)?;
            run_with(&common, o, make_toy_faces)
        }
        Command::ToyEmbed {
            common,
            images,
            dim,
            block,
            flip,
        } => {
            o.set("images", path_str(images))?;
            o.set("dim", dim)?;
            o.set("block", block)?;
            o.set("flip", flip)?;
            run_with(&common, o, toy_embed)
        }
    }
}

fn error_line(kind: &str, message: &str) -> String {
    serde_json::json!({ "error": kind, "message": message }).to_string()
}

/// Parses `args`, runs, and returns the process exit code. Failures print a
/// single JSON line `{"error": kind, "message": ...}` on stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_line("usage", e.to_string().trim()));
            return 2;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{}", error_line(e.kind(), &e.to_string()));
            1
        }
    }
}
