//! Recognition evaluation subcommands.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::recog::{
    aggregate_mu_minus_sigma, cosine_similarity, curves_svg, dir_at_far, encode_final, fit_pca,
    format_open_set_table, format_verification_table, open_set_scores, parse_open_set, parse_pairs,
    verification_metrics, write_curve_csv, EmbeddingSet, ImageRef, OpenSetRow, PcaModel, PipelineConfig,
    VerificationPair, VerificationReport, VerificationRow, TABLE_FARS,
};

/// A named embedding set, optionally with mirrored-image embeddings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Condition {
    pub name: String,
    pub embeddings: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flip: Option<PathBuf>,
}

struct LoadedSet {
    set: EmbeddingSet,
    flip: Option<EmbeddingSet>,
}

impl LoadedSet {
    fn load(c: &Condition) -> Result<Self> {
        let set = EmbeddingSet::read(&c.embeddings)?;
        let flip = c.flip.as_deref().map(EmbeddingSet::read).transpose()?;
        if let Some(f) = &flip {
            if f.labels() != set.labels() || f.dim() != set.dim() {
                return Err(Error::Protocol(format!("flip embeddings of {} do not line up", c.name)));
            }
        }
        Ok(LoadedSet { set, flip })
    }

    fn row(&self, r: &ImageRef) -> Result<usize> {
        self.set
            .find(&r.0, r.1)
            .ok_or_else(|| Error::Protocol(format!("no embedding for {} #{}", r.0, r.1)))
    }

    fn raw(&self, r: &ImageRef) -> Result<(&[f64], &[f64])> {
        let i = self.row(r)?;
        let v = &self.set.vectors()[i];
        Ok((v, self.flip.as_ref().map_or(v, |f| &f.vectors()[i])))
    }

    /// Flip-averaged vector, the PCA training input.
    fn averaged(&self, r: &ImageRef) -> Result<Vec<f64>> {
        let (a, b) = self.raw(r)?;
        Ok(a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
    }

    fn descriptor(&self, r: &ImageRef, pca: &PcaModel, alpha: f64) -> Result<Vec<f64>> {
        let (a, b) = self.raw(r)?;
        encode_final(a, b, pca, alpha)
    }
}

fn load_conditions(conditions: &[Condition]) -> Result<Vec<LoadedSet>> {
    if conditions.is_empty() {
        return Err(Error::invalid("no embedding sets given"));
    }
    let mut names = BTreeSet::new();
    for c in conditions {
        if !names.insert(c.name.as_str()) {
            return Err(Error::invalid(format!("condition {:?} given twice", c.name)));
        }
    }
    let sets: Vec<LoadedSet> = conditions.iter().map(LoadedSet::load).collect::<Result<_>>()?;
    if sets.iter().any(|s| s.set.dim() != sets[0].set.dim()) {
        return Err(Error::shape("embedding sets differ in dimension"));
    }
    Ok(sets)
}

fn fit_on(reference: &LoadedSet, refs: &BTreeSet<ImageRef>, pipeline: &PipelineConfig) -> Result<PcaModel> {
    let train: Vec<Vec<f64>> = refs.iter().map(|r| reference.averaged(r)).collect::<Result<_>>()?;
    fit_pca(&train, pipeline.pca_dim)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e.to_string()))?;
    text.push('\n');
    write_text(path, &text)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalVerifyConfig {
    pub seed: u64,
    pub pairs: PathBuf,
    /// The first condition is the clean reference: every pair's first image
    /// comes from it, the second from the condition being scored.
    pub conditions: Vec<Condition>,
    pub pipeline: PipelineConfig,
}

impl Default for EvalVerifyConfig {
    fn default() -> Self {
        EvalVerifyConfig {
            seed: 0,
            pairs: "pairs.txt".into(),
            conditions: Vec::new(),
            pipeline: PipelineConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReportFile {
    pub rows: Vec<VerificationRow>,
    pub details: BTreeMap<String, VerificationReport>,
}

/// Scores every pair per condition. Each fold's PCA is fit on the
/// reference images of the other folds (all folds when there is one).
fn verification_scores(
    pairs: &[VerificationPair],
    reference: &LoadedSet,
    probe: &LoadedSet,
    pipeline: &PipelineConfig,
) -> Result<Vec<f64>> {
    let folds: BTreeSet<usize> = pairs.iter().map(|p| p.fold).collect();
    let mut pcas = BTreeMap::new();
    for &f in &folds {
        let refs: BTreeSet<ImageRef> = pairs
            .iter()
            .filter(|p| folds.len() == 1 || p.fold != f)
            .flat_map(|p| [p.a.clone(), p.b.clone()])
            .collect();
        pcas.insert(f, fit_on(reference, &refs, pipeline)?);
    }
    pairs
        .iter()
        .map(|p| {
            let pca = &pcas[&p.fold];
            let a = reference.descriptor(&p.a, pca, pipeline.alpha)?;
            let b = probe.descriptor(&p.b, pca, pipeline.alpha)?;
            Ok(cosine_similarity(&a, &b))
        })
        .collect()
}

/// Writes `verification.json` and `verification.txt`.
pub fn eval_verify(cfg: &EvalVerifyConfig, out: &Path) -> Result<()> {
    let text = std::fs::read_to_string(&cfg.pairs).map_err(|e| Error::io(&cfg.pairs, e))?;
    let pairs = parse_pairs(&text)?;
    if pairs.is_empty() {
        return Err(Error::Protocol("pairs file lists no comparisons".into()));
    }
    let sets = load_conditions(&cfg.conditions)?;
    let genuine: Vec<bool> = pairs.iter().map(|p| p.genuine).collect();
    let folds: Vec<usize> = pairs.iter().map(|p| p.fold).collect();
    let mut rows = Vec::new();
    let mut details = BTreeMap::new();
    for (c, set) in cfg.conditions.iter().zip(&sets) {
        let scores = verification_scores(&pairs, &sets[0], set, &cfg.pipeline)?;
        let report = verification_metrics(&scores, &genuine, &folds)?;
        rows.push(VerificationRow {
            condition: c.name.clone(),
            one_minus_eer: report.one_minus_eer,
            accuracy: report.accuracy,
            auc: report.auc,
        });
        details.insert(c.name.clone(), report);
    }
    write_text(&out.join("verification.txt"), &format_verification_table(&rows))?;
    write_json(&out.join("verification.json"), &VerificationReportFile { rows, details })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalOpenSetConfig {
    pub seed: u64,
    pub manifest: PathBuf,
    /// The first condition provides the gallery and the clean probes.
    pub conditions: Vec<Condition>,
    pub pipeline: PipelineConfig,
    /// Table operating points.
    pub fars: Vec<f64>,
    /// Log-spaced FAR samples per plotted curve.
    pub curve_points: usize,
    /// Smallest plotted FAR.
    pub curve_min_far: f64,
}

impl Default for EvalOpenSetConfig {
    fn default() -> Self {
        EvalOpenSetConfig {
            seed: 0,
            manifest: "openset.txt".into(),
            conditions: Vec::new(),
            pipeline: PipelineConfig::default(),
            fars: TABLE_FARS.to_vec(),
            curve_points: 31,
            curve_min_far: 1e-3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSetReport {
    pub rows: Vec<OpenSetRow>,
    /// μ−σ DIR over splits at each plotted FAR, per condition.
    pub curves: BTreeMap<String, Vec<(f64, f64)>>,
}

fn file_safe(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Writes `openset.json`, `openset.txt`, `curve_<condition>.csv` and
/// `curves.svg`. Each split's PCA is fit on its training images, or on its
/// gallery when it lists none.
pub fn eval_openset(cfg: &EvalOpenSetConfig, out: &Path) -> Result<()> {
    if cfg.fars.is_empty() || cfg.fars.iter().any(|f| !(*f > 0.0)) {
        return Err(Error::invalid("FAR points must be positive"));
    }
    if cfg.curve_points < 2 || !(cfg.curve_min_far > 0.0 && cfg.curve_min_far < 1.0) {
        return Err(Error::invalid("curves need at least two points and a minimum FAR in (0, 1)"));
    }
    let text = std::fs::read_to_string(&cfg.manifest).map_err(|e| Error::io(&cfg.manifest, e))?;
    let splits = parse_open_set(&text)?;
    if splits.is_empty() {
        return Err(Error::Protocol("manifest defines no splits".into()));
    }
    let sets = load_conditions(&cfg.conditions)?;
    let reference = &sets[0];
    let lo = cfg.curve_min_far.log10();
    let grid: Vec<f64> = (0..cfg.curve_points)
        .map(|k| 10f64.powf(lo * (1.0 - k as f64 / (cfg.curve_points - 1) as f64)))
        .collect();

    let mut prepared = Vec::new();
    for s in &splits {
        s.validate()?;
        let train: BTreeSet<ImageRef> = if s.train.is_empty() { &s.gallery } else { &s.train }
            .iter()
            .cloned()
            .collect();
        let pca = fit_on(reference, &train, &cfg.pipeline)?;
        let gallery: Vec<(String, Vec<f64>)> = s
            .gallery
            .iter()
            .map(|r| Ok((r.0.clone(), reference.descriptor(r, &pca, cfg.pipeline.alpha)?)))
            .collect::<Result<_>>()?;
        prepared.push((pca, gallery));
    }

    let mut rows = Vec::new();
    let mut curves = BTreeMap::new();
    let mut plotted = Vec::new();
    for (c, set) in cfg.conditions.iter().zip(&sets) {
        let mut per_split = Vec::new();
        let mut per_split_curve = Vec::new();
        for (s, (pca, gallery)) in splits.iter().zip(&prepared) {
            let probes = |refs: &[ImageRef]| -> Result<Vec<(String, Vec<f64>)>> {
                refs.iter()
                    .map(|r| Ok((r.0.clone(), set.descriptor(r, pca, cfg.pipeline.alpha)?)))
                    .collect()
            };
            let scores = open_set_scores(gallery, &probes(&s.mated)?, &probes(&s.non_mated)?)?;
            per_split.push(cfg.fars.iter().map(|&f| dir_at_far(&scores, f)).collect::<Result<Vec<_>>>()?);
            per_split_curve.push(grid.iter().map(|&f| dir_at_far(&scores, f)).collect::<Result<Vec<_>>>()?);
        }
        let column = |table: &[Vec<f64>], k: usize| -> Result<f64> {
            aggregate_mu_minus_sigma(&table.iter().map(|r| r[k]).collect::<Vec<_>>())
        };
        let dir = (0..cfg.fars.len()).map(|k| column(&per_split, k)).collect::<Result<_>>()?;
        let curve: Vec<(f64, f64)> = grid
            .iter()
            .enumerate()
            .map(|(k, &f)| Ok((f, column(&per_split_curve, k)?)))
            .collect::<Result<_>>()?;
        write_curve_csv(&out.join(format!("curve_{}.csv", file_safe(&c.name))), &curve)?;
        plotted.push((c.name.clone(), curve.clone()));
        curves.insert(c.name.clone(), curve);
        rows.push(OpenSetRow {
            condition: c.name.clone(),
            fars: cfg.fars.clone(),
            dir_mu_minus_sigma: dir,
            per_split,
        });
    }
    write_text(&out.join("curves.svg"), &curves_svg(&plotted))?;
    write_text(&out.join("openset.txt"), &format_open_set_table(&rows))?;
    write_json(&out.join("openset.json"), &OpenSetReport { rows, curves })
}
