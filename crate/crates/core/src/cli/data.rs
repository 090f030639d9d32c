//! Data-producing subcommands: masks, rendered occlusions, toy faces and
//! toy embeddings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use image::RgbImage;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated::MaskImage;
use crate::imageio::{list_images, read_rgb, write_mask, write_rgb};
use crate::masks::{sample_mask, LandmarkSet, MaskFamily, MaskFamilyParams};
use crate::recog::{format_open_set, format_pairs, EmbeddingSet, ImageRef, OpenSetSplit, VerificationPair};
use crate::render::{
    bundled_models, read_obj, read_pose, render_occlusion, sample_instance, template_pose, AugmentationRanges,
    Category, HeadPose, OccluderModel, RenderConfig, Texture,
};
use crate::rng::substream;
use crate::synth::{face_stem, parse_stem, render_face, Capture, Identity, ToyEncoder};

fn create_dir(p: &Path) -> Result<PathBuf> {
    std::fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    Ok(p.to_path_buf())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn stem_of(p: &Path) -> Result<String> {
    p.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| Error::invalid(format!("unusable file name {}", p.display())))
}

fn load_landmarks(p: &Option<PathBuf>) -> Result<LandmarkSet> {
    match p {
        Some(p) => LandmarkSet::read(p),
        None => Ok(LandmarkSet::template()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenMasksConfig {
    pub seed: u64,
    pub count: usize,
    pub landmarks: Option<PathBuf>,
    pub masks: MaskFamilyParams,
}

impl Default for GenMasksConfig {
    fn default() -> Self {
        GenMasksConfig {
            seed: 0,
            count: 16,
            landmarks: None,
            masks: MaskFamilyParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskEntry {
    pub file: String,
    pub family: String,
    pub hole_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskManifest {
    pub count: usize,
    /// Masks drawn per family.
    pub histogram: BTreeMap<String, usize>,
    /// Expected count per family under the configured weights.
    pub expected: BTreeMap<String, f64>,
    pub masks: Vec<MaskEntry>,
}

/// Writes `masks/mask_NNNNN.png` and `manifest.json`. Mask `i` draws from
/// its own substream, so the set does not depend on thread scheduling.
pub fn gen_masks(cfg: &GenMasksConfig, out: &Path) -> Result<()> {
    cfg.masks.validate()?;
    let lms = load_landmarks(&cfg.landmarks)?;
    let dir = create_dir(&out.join("masks"))?;
    let drawn: Vec<(MaskFamily, MaskImage)> = (0..cfg.count)
        .into_par_iter()
        .map(|i| sample_mask(&lms, &mut substream(cfg.seed, "masks", i as u64), &cfg.masks))
        .collect::<Result<_>>()?;
    let entries: Vec<MaskEntry> = drawn
        .par_iter()
        .enumerate()
        .map(|(i, (family, mask))| {
            let file = format!("mask_{i:05}.png");
            write_mask(&dir.join(&file), mask)?;
            Ok(MaskEntry {
                file: format!("masks/{file}"),
                family: family.name().into(),
                hole_fraction: mask.hole_fraction(),
            })
        })
        .collect::<Result<_>>()?;
    let total: f64 = cfg.masks.weights.iter().sum();
    let mut histogram = BTreeMap::new();
    let mut expected = BTreeMap::new();
    for (f, w) in MaskFamily::ALL.iter().zip(cfg.masks.weights) {
        histogram.insert(f.name().to_string(), drawn.iter().filter(|(d, _)| d == f).count());
        expected.insert(f.name().to_string(), cfg.count as f64 * w / total);
    }
    write_json(
        &out.join("manifest.json"),
        &MaskManifest {
            count: cfg.count,
            histogram,
            expected,
            masks: entries,
        },
    )
}

/// An extra occluder loaded from an OBJ file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub name: String,
    pub category: Category,
    pub obj: PathBuf,
    pub texture: Option<PathBuf>,
    #[serde(default)]
    pub double_sided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderOcclusionsConfig {
    pub seed: u64,
    pub faces: PathBuf,
    /// A pose file shared by every face, or a directory of `<stem>.pose`
    /// files. Absent: the template pose scaled to the image width.
    pub poses: Option<PathBuf>,
    /// Category names drawn uniformly per occluder; `none` draws nothing.
    pub categories: Vec<String>,
    pub instances: usize,
    pub augment: AugmentationRanges,
    pub render: RenderConfig,
    /// Added to the bundled model pool.
    pub models: Vec<ModelFile>,
}

impl Default for RenderOcclusionsConfig {
    fn default() -> Self {
        RenderOcclusionsConfig {
            seed: 0,
            faces: "faces".into(),
            poses: None,
            categories: Category::ALL.iter().map(|c| c.name().to_string()).collect(),
            instances: 1,
            augment: AugmentationRanges::default(),
            render: RenderConfig::default(),
            models: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedOccluder {
    pub model: String,
    pub category: Category,
    pub scale: f64,
    pub euler: [f64; 3],
    pub translation: [f64; 3],
    pub brightness: f64,
    pub hue: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OcclusionEntry {
    pub source: String,
    pub image: String,
    pub mask: String,
    pub occluders: Vec<PlacedOccluder>,
    pub hole_fraction: f64,
}

fn load_models(extra: &[ModelFile]) -> Result<Vec<Arc<OccluderModel>>> {
    let mut pool = bundled_models();
    for m in extra {
        let texture = match &m.texture {
            Some(p) => Texture::from_image(&read_rgb(p)?),
            None => Texture::solid([128, 128, 128]),
        };
        pool.push(Arc::new(OccluderModel::new(&m.name, m.category, read_obj(&m.obj)?, texture, m.double_sided)?));
    }
    Ok(pool)
}

fn pose_for(poses: &Option<PathBuf>, stem: &str, face: &RgbImage) -> Result<HeadPose> {
    match poses {
        Some(p) if p.is_dir() => read_pose(&p.join(format!("{stem}.pose"))),
        Some(p) => read_pose(p),
        None => {
            let mut pose = template_pose();
            let k = face.width() as f64 / crate::masks::FRAME as f64;
            pose.focal *= k;
            pose.cx *= k;
            pose.cy *= face.height() as f64 / crate::masks::FRAME as f64;
            Ok(pose)
        }
    }
}

/// Writes `occluded/<stem>.png`, `masks/<stem>.png` and `manifest.json`.
pub fn render_occlusions(cfg: &RenderOcclusionsConfig, out: &Path) -> Result<()> {
    cfg.augment.validate()?;
    if cfg.categories.is_empty() {
        return Err(Error::invalid("no occluder categories given"));
    }
    let cats: Vec<Option<Category>> = cfg
        .categories
        .iter()
        .map(|c| if c == "none" { Ok(None) } else { Category::parse(c).map(Some) })
        .collect::<Result<_>>()?;
    let pool = load_models(&cfg.models)?;
    for c in cats.iter().flatten() {
        if !pool.iter().any(|m| m.category == *c) {
            return Err(Error::invalid(format!("no models in category {}", c.name())));
        }
    }
    let files = list_images(&cfg.faces)?;
    let img_dir = create_dir(&out.join("occluded"))?;
    let mask_dir = create_dir(&out.join("masks"))?;
    let entries: Vec<OcclusionEntry> = files
        .par_iter()
        .enumerate()
        .map(|(i, path)| {
            let stem = stem_of(path)?;
            let face = read_rgb(path)?;
            let pose = pose_for(&cfg.poses, &stem, &face)?;
            let mut rng = substream(cfg.seed, "occlusions", i as u64);
            let mut instances = Vec::new();
            for _ in 0..cfg.instances {
                let Some(cat) = cats[rng.random_range(0..cats.len())] else { continue };
                let models: Vec<&Arc<OccluderModel>> = pool.iter().filter(|m| m.category == cat).collect();
                let model = models[rng.random_range(0..models.len())].clone();
                instances.push(sample_instance(model, &mut rng, &cfg.augment)?);
            }
            let (img, mask) = render_occlusion(&face, &pose, &instances, &cfg.render)?;
            let name = format!("{stem}.png");
            write_rgb(&img_dir.join(&name), &img)?;
            write_mask(&mask_dir.join(&name), &mask)?;
            Ok(OcclusionEntry {
                source: path.to_string_lossy().into_owned(),
                image: format!("occluded/{name}"),
                mask: format!("masks/{name}"),
                occluders: instances
                    .iter()
                    .map(|o| PlacedOccluder {
                        model: o.model.name.clone(),
                        category: o.model.category,
                        scale: o.scale,
                        euler: o.euler,
                        translation: [o.translation.x, o.translation.y, o.translation.z],
                        brightness: o.brightness,
                        hue: o.hue,
                    })
                    .collect(),
                hole_fraction: mask.hole_fraction(),
            })
        })
        .collect::<Result<_>>()?;
    write_json(&out.join("manifest.json"), &entries)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyFacesConfig {
    pub seed: u64,
    /// Identities used in the evaluation protocols.
    pub identities: usize,
    pub images_per_identity: usize,
    /// Identities reserved for PCA training in the open-set manifest.
    pub train_identities: usize,
    pub folds: usize,
    pub splits: usize,
}

impl Default for ToyFacesConfig {
    fn default() -> Self {
        ToyFacesConfig {
            seed: 0,
            identities: 24,
            images_per_identity: 4,
            train_identities: 12,
            folds: 2,
            splits: 2,
        }
    }
}

/// Pairs per fold: every `(1, j)` genuine pair of the fold's identities,
/// truncated to the smallest fold, plus as many random impostor pairs.
fn toy_pairs(cfg: &ToyFacesConfig) -> (Vec<VerificationPair>, usize) {
    let m = cfg.images_per_identity;
    let fold_ids: Vec<Vec<u64>> = (0..cfg.folds)
        .map(|f| (0..cfg.identities as u64).filter(|i| *i as usize % cfg.folds == f).collect())
        .collect();
    let per = fold_ids.iter().map(|ids| ids.len() * (m - 1)).min().unwrap_or(0);
    let mut pairs = Vec::new();
    for (f, ids) in fold_ids.iter().enumerate() {
        let genuine = ids.iter().flat_map(|&id| (2..=m).map(move |j| (id, j)));
        for (id, j) in genuine.take(per) {
            pairs.push(VerificationPair {
                a: (label_of(id), 1),
                b: (label_of(id), j),
                genuine: true,
                fold: f,
            });
        }
        let mut rng = substream(cfg.seed, "toy-pairs", f as u64);
        for _ in 0..per {
            let a = rng.random_range(0..ids.len());
            let b = (a + rng.random_range(1..ids.len())) % ids.len();
            pairs.push(VerificationPair {
                a: (label_of(ids[a]), rng.random_range(1..=m)),
                b: (label_of(ids[b]), rng.random_range(1..=m)),
                genuine: false,
                fold: f,
            });
        }
    }
    (pairs, per)
}

fn label_of(id: u64) -> String {
    parse_stem(&face_stem(id, 1)).expect("stems parse").0
}

fn toy_open_set(cfg: &ToyFacesConfig) -> Vec<OpenSetSplit> {
    let m = cfg.images_per_identity;
    let all = |id: u64| -> Vec<ImageRef> { (1..=m).map(|j| (label_of(id), j)).collect() };
    let train: Vec<ImageRef> = (0..cfg.train_identities as u64)
        .flat_map(|k| all(cfg.identities as u64 + k))
        .collect();
    (0..cfg.splits)
        .map(|s| {
            let mut ids: Vec<u64> = (0..cfg.identities as u64).collect();
            rand::seq::SliceRandom::shuffle(ids.as_mut_slice(), &mut substream(cfg.seed, "toy-openset", s as u64));
            let (enrolled, others) = ids.split_at(cfg.identities / 2);
            let mut enrolled = enrolled.to_vec();
            enrolled.sort_unstable();
            let mut others = others.to_vec();
            others.sort_unstable();
            OpenSetSplit {
                train: train.clone(),
                gallery: enrolled.iter().map(|&id| (label_of(id), 1)).collect(),
                mated: enrolled.iter().flat_map(|&id| (2..=m).map(move |j| (label_of(id), j))).collect(),
                non_mated: others.iter().flat_map(|&id| all(id)).collect(),
            }
        })
        .collect()
}

/// Writes `faces/<label>_<index>.png`, `pairs.txt` and `openset.txt`.
pub fn make_toy_faces(cfg: &ToyFacesConfig, out: &Path) -> Result<()> {
    if cfg.images_per_identity < 2 || cfg.folds == 0 || cfg.splits == 0 || cfg.identities < 2 * cfg.folds.max(2) {
        return Err(Error::invalid(
            "need at least two images per identity and two identities per fold and per open-set side",
        ));
    }
    let dir = create_dir(&out.join("faces"))?;
    let total = (cfg.identities + cfg.train_identities) as u64;
    let jobs: Vec<(u64, u64)> = (0..total)
        .flat_map(|id| (1..=cfg.images_per_identity as u64).map(move |j| (id, j)))
        .collect();
    jobs.par_iter().try_for_each(|&(id, j)| {
        let img = render_face(&Identity::sample(cfg.seed, id), &Capture::sample(cfg.seed, id, j));
        write_rgb(&dir.join(format!("{}.png", face_stem(id, j))), &img)
    })?;
    let (pairs, per) = toy_pairs(cfg);
    let path = out.join("pairs.txt");
    std::fs::write(&path, format_pairs(&pairs, Some((cfg.folds, per)))).map_err(|e| Error::io(&path, e))?;
    let path = out.join("openset.txt");
    std::fs::write(&path, format_open_set(&toy_open_set(cfg))).map_err(|e| Error::io(&path, e))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToyEmbedConfig {
    /// Also selects the encoder weights: compare only sets embedded with
    /// the same seed.
    pub seed: u64,
    pub images: PathBuf,
    pub dim: usize,
    pub block: usize,
    pub flip: bool,
}

impl Default for ToyEmbedConfig {
    fn default() -> Self {
        ToyEmbedConfig {
            seed: 0,
            images: "faces".into(),
            dim: 64,
            block: 8,
            flip: true,
        }
    }
}

/// Writes `embeddings.bin` (and `embeddings_flip.bin`), rows sorted by
/// label then index. Each label's indices must run 1..k.
pub fn toy_embed(cfg: &ToyEmbedConfig, out: &Path) -> Result<()> {
    if cfg.dim == 0 || cfg.block == 0 || !ToyEncoder::INPUT.is_multiple_of(cfg.block) {
        return Err(Error::invalid(format!(
            "block {} must divide {} and dim must be positive",
            cfg.block,
            ToyEncoder::INPUT
        )));
    }
    let mut items: Vec<(String, usize, PathBuf)> = list_images(&cfg.images)?
        .into_iter()
        .map(|p| {
            let stem = stem_of(&p)?;
            let (label, idx) =
                parse_stem(&stem).ok_or_else(|| Error::invalid(format!("{stem:?} is not <label>_<index>")))?;
            Ok((label, idx, p))
        })
        .collect::<Result<_>>()?;
    items.sort();
    let mut expect: BTreeMap<&str, usize> = BTreeMap::new();
    for (label, idx, _) in &items {
        let next = expect.entry(label).or_insert(1);
        if *idx != *next {
            return Err(Error::Protocol(format!("images of {label} must be numbered 1..k without gaps")));
        }
        *next += 1;
    }
    let enc = ToyEncoder::new(cfg.seed, cfg.dim, cfg.block);
    let rows: Vec<(Vec<f64>, Option<Vec<f64>>)> = items
        .par_iter()
        .map(|(_, _, p)| {
            let img = read_rgb(p)?;
            let flipped = cfg.flip.then(|| enc.embed(&image::imageops::flip_horizontal(&img)));
            Ok((enc.embed(&img), flipped))
        })
        .collect::<Result<_>>()?;
    let labels: Vec<String> = items.iter().map(|(l, _, _)| l.clone()).collect();
    let (plain, flipped): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    EmbeddingSet::new(plain, labels.clone())?.write(&out.join("embeddings.bin"))?;
    if cfg.flip {
        EmbeddingSet::new(flipped.into_iter().flatten().collect(), labels)?.write(&out.join("embeddings_flip.bin"))?;
    }
    Ok(())
}
