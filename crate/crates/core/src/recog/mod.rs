//! Embedding post-processing and face recognition metrics.

mod metrics;
mod protocol;

pub use metrics::*;
pub use protocol::*;

use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"OCCGEMB\0";
const VERSION: u32 = 1;

/// Labeled feature vectors of uniform dimension.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    labels: Vec<String>,
}

impl EmbeddingSet {
    pub fn new(vectors: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::shape(format!("{} vectors, {} labels", vectors.len(), labels.len())));
        }
        let dim = vectors.first().map_or(0, Vec::len);
        for (i, v) in vectors.iter().enumerate() {
            if v.len() != dim {
                return Err(Error::shape(format!("vector {i} has dimension {}, expected {dim}", v.len())));
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite(format!("embedding {i}")));
            }
            if v.iter().all(|&x| x == 0.0) {
                return Err(Error::invalid(format!("embedding {i} is all zeros")));
            }
        }
        if vectors.is_empty() || dim == 0 {
            return Err(Error::invalid("empty embedding set"));
        }
        Ok(EmbeddingSet { dim, vectors, labels })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Row of the `index`-th (1-based) entry carrying `label`, in file order.
    pub fn find(&self, label: &str, index: usize) -> Option<usize> {
        if index == 0 {
            return None;
        }
        self.labels.iter().enumerate().filter(|(_, l)| *l == label).nth(index - 1).map(|(i, _)| i)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        EmbeddingSet::new(
            self.vectors.iter().map(|v| v.iter().map(|x| x * c).collect()).collect(),
            self.labels.clone(),
        )
    }

    /// ```text
    /// magic "OCCGEMB\0" | version u32 | n u32 | d u32
    /// n × d f32 | n × (length u32 | UTF-8 label)
    /// ```
    /// Little-endian throughout.
    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(20 + self.len() * (4 * self.dim + 12));
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&VERSION.to_le_bytes());
        b.extend_from_slice(&(self.len() as u32).to_le_bytes());
        b.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in &self.vectors {
            for &x in v {
                b.extend_from_slice(&(x as f32).to_le_bytes());
            }
        }
        for l in &self.labels {
            b.extend_from_slice(&(l.len() as u32).to_le_bytes());
            b.extend_from_slice(l.as_bytes());
        }
        b
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let bad = |d: String| Error::format("embedding file", d);
        let mut pos = 0usize;
        let mut take = |n: usize| -> Result<&[u8]> {
            let s = bytes
                .get(pos..pos + n)
                .ok_or_else(|| Error::format("embedding file", format!("truncated at byte {pos}")))?;
            pos += n;
            Ok(s)
        };
        if take(8)? != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap()) as usize;
        let version = u32_at(take(4)?);
        if version != VERSION as usize {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = u32_at(take(4)?);
        let d = u32_at(take(4)?);
        if n.saturating_mul(d).saturating_mul(4) > bytes.len() {
            return Err(bad(format!("{n}×{d} vectors exceed file size")));
        }
        let mut vectors = Vec::with_capacity(n);
        for _ in 0..n {
            let raw = take(4 * d)?;
            vectors.push(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                    .collect(),
            );
        }
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let len = u32_at(take(4)?);
            let s = std::str::from_utf8(take(len)?).map_err(|e| bad(e.to_string()))?;
            labels.push(s.to_string());
        }
        if pos != bytes.len() {
            return Err(bad(format!("{} trailing bytes", bytes.len() - pos)));
        }
        EmbeddingSet::new(vectors, labels)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        EmbeddingSet::decode(&bytes)
    }
}

/// Mean and leading principal directions of a training set.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    /// `d × d'`, orthonormal columns in descending eigenvalue order.
    pub components: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
}

impl PcaModel {
    pub fn retained(&self) -> usize {
        self.components.ncols()
    }

    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.mean.len() {
            return Err(Error::shape(format!("vector of {} for PCA of {}", v.len(), self.mean.len())));
        }
        let x = DVector::from_column_slice(v) - &self.mean;
        Ok((self.components.transpose() * x).iter().copied().collect())
    }
}

/// Centered covariance eigendecomposition, keeping `retain` components
/// (`None` keeps `min(d, n − 1)`, or fewer if the data has lower rank).
/// Each component's largest-magnitude entry is made positive.
pub fn fit_pca(train: &[Vec<f64>], retain: Option<usize>) -> Result<PcaModel> {
    let n = train.len();
    if n < 2 {
        return Err(Error::invalid("PCA needs at least two training vectors"));
    }
    let d = train[0].len();
    if d == 0 || train.iter().any(|v| v.len() != d) {
        return Err(Error::shape("PCA training vectors differ in dimension"));
    }
    let limit = d.min(n - 1);
    if retain.is_some_and(|k| k == 0 || k > limit) {
        let keep = retain.unwrap();
        return Err(Error::invalid(format!(
            "cannot retain {keep} components from {n} vectors of dimension {d} (max {limit})"
        )));
    }
    let x = DMatrix::from_fn(n, d, |i, j| train[i][j]);
    let mean = DVector::from_fn(d, |j, _| x.column(j).sum() / n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| x[(i, j)] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let rank = order
        .iter()
        .filter(|&&k| eig.eigenvalues[k] > 1e-10 * top.max(f64::MIN_POSITIVE))
        .count();
    let keep = retain.unwrap_or(limit.min(rank)).max(1);
    if keep > rank {
        return Err(Error::invalid(format!(
            "cannot retain {keep} components: training data has rank {rank}"
        )));
    }
    let mut components = DMatrix::zeros(d, keep);
    for (c, &k) in order.iter().take(keep).enumerate() {
        let mut col = eig.eigenvectors.column(k).clone_owned();
        let lead = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if lead < 0.0 {
            col = -col;
        }
        components.set_column(c, &col);
    }
    Ok(PcaModel {
        mean,
        components,
        eigenvalues: order.iter().take(keep).map(|&k| eig.eigenvalues[k]).collect(),
    })
}

/// `sign(x)·|x|^alpha` elementwise, then unit ℓ2 norm.
pub fn power_normalize(v: &[f64], alpha: f64) -> Result<Vec<f64>> {
    let p: Vec<f64> = v.iter().map(|&x| x.signum() * x.abs().powf(alpha)).collect();
    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::invalid("cannot normalize a zero or non-finite vector"));
    }
    Ok(p.into_iter().map(|x| x / norm).collect())
}

/// Average with the flipped-image vector, project, power-normalize.
pub fn encode_final(emb: &[f64], emb_flip: &[f64], pca: &PcaModel, alpha: f64) -> Result<Vec<f64>> {
    if emb.len() != emb_flip.len() {
        return Err(Error::shape("flip embedding dimension differs"));
    }
    let avg: Vec<f64> = emb.iter().zip(emb_flip).map(|(a, b)| 0.5 * (a + b)).collect();
    power_normalize(&pca.project(&avg)?, alpha)
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Settings of the descriptor pipeline.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub alpha: f64,
    /// Retained PCA dimension; `None` keeps `min(d, n_train − 1)` capped at
    /// the training rank.
    pub pca_dim: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            alpha: 0.5,
            pca_dim: None,
        }
    }
}

/// Final descriptors for every row of `set`; `flip` holds the mirrored-image
/// embeddings in the same order, or `None` to use `set` itself.
pub fn encode_set(set: &EmbeddingSet, flip: Option<&EmbeddingSet>, pca: &PcaModel, alpha: f64) -> Result<Vec<Vec<f64>>> {
    if let Some(f) = flip {
        if f.labels() != set.labels() {
            return Err(Error::Protocol("flip embeddings do not line up with the originals".into()));
        }
    }
    set.vectors()
        .iter()
        .enumerate()
        .map(|(i, v)| encode_final(v, flip.map_or(v, |f| &f.vectors()[i]), pca, alpha))
        .collect()
}
