//! Verification and open-set identification metrics.
//!
//! A comparison is accepted when its score is `>= τ`.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use super::cosine_similarity;
use crate::error::{Error, Result};

/// Ascending unique values.
fn unique_sorted(scores: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = scores.into_iter().collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Error rates at each candidate threshold: every unique score in ascending
/// order, then `+∞`. Entries are `(τ, FMR, FNMR)`.
pub fn error_rates(scores: &[f64], genuine: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    check_pairs(scores, genuine)?;
    let n_gen = genuine.iter().filter(|&&g| g).count();
    let n_imp = genuine.len() - n_gen;
    if n_gen == 0 || n_imp == 0 {
        return Err(Error::Protocol("need both genuine and impostor comparisons".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut out = Vec::new();
    // below = counts of items with score < τ.
    let (mut gen_below, mut imp_below) = (0usize, 0usize);
    let mut k = 0;
    while k < idx.len() {
        let t = scores[idx[k]];
        out.push((t, (n_imp - imp_below) as f64 / n_imp as f64, gen_below as f64 / n_gen as f64));
        while k < idx.len() && scores[idx[k]] == t {
            if genuine[idx[k]] {
                gen_below += 1;
            } else {
                imp_below += 1;
            }
            k += 1;
        }
    }
    out.push((f64::INFINITY, 0.0, 1.0));
    Ok(out)
}

fn check_pairs(scores: &[f64], genuine: &[bool]) -> Result<()> {
    if scores.len() != genuine.len() {
        return Err(Error::shape(format!("{} scores, {} labels", scores.len(), genuine.len())));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("comparison score".into()));
    }
    Ok(())
}

/// Rate where FMR meets FNMR, interpolated linearly between the adjacent
/// thresholds that bracket the crossing.
pub fn equal_error_rate(scores: &[f64], genuine: &[bool]) -> Result<f64> {
    let rates = error_rates(scores, genuine)?;
    for w in rates.windows(2) {
        let (_, fa, na) = w[0];
        let (_, fb, nb) = w[1];
        let (da, db) = (fa - na, fb - nb);
        if da == 0.0 {
            return Ok(fa);
        }
        if da > 0.0 && db <= 0.0 {
            let t = da / (da - db);
            return Ok(fa + t * (fb - fa));
        }
    }
    unreachable!("FMR − FNMR runs from 1 to −1")
}

/// Area under the ROC curve (true-match rate against FMR), trapezoidal.
pub fn roc_auc(scores: &[f64], genuine: &[bool]) -> Result<f64> {
    let rates = error_rates(scores, genuine)?;
    let mut area = 0.0;
    for w in rates.windows(2) {
        let (_, fa, na) = w[0];
        let (_, fb, nb) = w[1];
        area += (fa - fb) * ((1.0 - na) + (1.0 - nb)) / 2.0;
    }
    Ok(area)
}

/// Fraction of correct accept/reject decisions at `tau`.
pub fn accuracy_at(scores: &[f64], genuine: &[bool], tau: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(genuine)
        .filter(|&(&s, &g)| (s >= tau) == g)
        .count();
    correct as f64 / scores.len() as f64
}

/// Threshold with the best accuracy among `−∞`, the midpoints between
/// consecutive unique scores, and `+∞`; the lowest such threshold on ties.
pub fn select_threshold(scores: &[f64], genuine: &[bool]) -> Result<f64> {
    check_pairs(scores, genuine)?;
    if scores.is_empty() {
        return Err(Error::Protocol("no comparisons to choose a threshold from".into()));
    }
    let mut best = (f64::NEG_INFINITY, f64::INFINITY);
    let uniq = unique_sorted(scores.iter().copied());
    let mut cands = vec![f64::NEG_INFINITY];
    cands.extend(uniq.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    cands.push(f64::INFINITY);
    // Sweep ascending: accuracy(τ) from counts.
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let n_gen = genuine.iter().filter(|&&g| g).count();
    let (mut gen_below, mut imp_below) = (0usize, 0usize);
    let mut k = 0;
    for &t in &cands {
        while k < idx.len() && scores[idx[k]] < t {
            if genuine[idx[k]] {
                gen_below += 1;
            } else {
                imp_below += 1;
            }
            k += 1;
        }
        let acc = ((n_gen - gen_below) + imp_below) as f64 / scores.len() as f64;
        if acc > best.0 {
            best = (acc, t);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd { mean, std: var.sqrt() }
    }
}

/// Mean minus population standard deviation.
pub fn aggregate_mu_minus_sigma(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("no values to aggregate"));
    }
    let m = MeanStd::of(values);
    Ok(m.mean - m.std)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub eer: f64,
    pub auc: f64,
    pub accuracy: f64,
    /// Threshold chosen on the other folds.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub one_minus_eer: MeanStd,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
    pub folds: Vec<FoldMetrics>,
}

/// Per-fold 1−EER, accuracy and AUC. Each fold's accuracy uses the threshold
/// selected on all other folds; with a single fold it is selected on the
/// fold itself.
pub fn verification_metrics(scores: &[f64], genuine: &[bool], folds: &[usize]) -> Result<VerificationReport> {
    check_pairs(scores, genuine)?;
    if folds.len() != scores.len() {
        return Err(Error::shape(format!("{} fold ids for {} scores", folds.len(), scores.len())));
    }
    let mut by_fold: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &f) in folds.iter().enumerate() {
        by_fold.entry(f).or_default().push(i);
    }
    if by_fold.is_empty() {
        return Err(Error::Protocol("no comparisons".into()));
    }
    let pick = |idx: &[usize]| -> (Vec<f64>, Vec<bool>) {
        (idx.iter().map(|&i| scores[i]).collect(), idx.iter().map(|&i| genuine[i]).collect())
    };
    let mut out = Vec::new();
    for (&f, idx) in &by_fold {
        let (s, g) = pick(idx);
        if g.iter().all(|&x| x) || g.iter().all(|&x| !x) {
            return Err(Error::Protocol(format!("fold {f} contains a single class")));
        }
        let others: Vec<usize> = if by_fold.len() == 1 {
            idx.clone()
        } else {
            (0..scores.len()).filter(|&i| folds[i] != f).collect()
        };
        let (ts, tg) = pick(&others);
        let threshold = select_threshold(&ts, &tg)?;
        out.push(FoldMetrics {
            eer: equal_error_rate(&s, &g)?,
            auc: roc_auc(&s, &g)?,
            accuracy: accuracy_at(&s, &g, threshold),
            threshold,
        });
    }
    let col = |f: fn(&FoldMetrics) -> f64| out.iter().map(f).collect::<Vec<_>>();
    Ok(VerificationReport {
        one_minus_eer: MeanStd::of(&col(|m| 1.0 - m.eer)),
        accuracy: MeanStd::of(&col(|m| m.accuracy)),
        auc: MeanStd::of(&col(|m| m.auc)),
        folds: out,
    })
}

/// Best gallery match of one probe.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TopMatch {
    pub score: f64,
    pub correct: bool,
}

/// Top-1 search results of an open-set trial.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenSetScores {
    pub mated: Vec<TopMatch>,
    /// Top gallery score of each non-mated probe.
    pub non_mated: Vec<f64>,
}

/// Highest score per gallery identity, then the best identity overall.
/// Ties go to the lexicographically first identity.
fn top_match(gallery: &[(&str, &[f64])], probe: &[f64]) -> (f64, String) {
    let mut per_id: BTreeMap<&str, f64> = BTreeMap::new();
    for (id, g) in gallery {
        let s = cosine_similarity(g, probe);
        per_id.entry(id).and_modify(|m| *m = m.max(s)).or_insert(s);
    }
    let mut best = (f64::NEG_INFINITY, String::new());
    for (id, s) in per_id {
        if s > best.0 {
            best = (s, id.to_string());
        }
    }
    best
}

/// Searches every probe against the gallery by cosine similarity.
pub fn open_set_scores(
    gallery: &[(String, Vec<f64>)],
    mated: &[(String, Vec<f64>)],
    non_mated: &[(String, Vec<f64>)],
) -> Result<OpenSetScores> {
    if gallery.is_empty() || mated.is_empty() || non_mated.is_empty() {
        return Err(Error::Protocol("gallery, mated and non-mated sets must be non-empty".into()));
    }
    let ids: HashSet<&str> = gallery.iter().map(|(l, _)| l.as_str()).collect();
    if let Some((l, _)) = non_mated.iter().find(|(l, _)| ids.contains(l.as_str())) {
        return Err(Error::Protocol(format!("non-mated probe identity {l:?} is enrolled in the gallery")));
    }
    if let Some((l, _)) = mated.iter().find(|(l, _)| !ids.contains(l.as_str())) {
        return Err(Error::Protocol(format!("mated probe identity {l:?} is not enrolled")));
    }
    let g: Vec<(&str, &[f64])> = gallery.iter().map(|(l, v)| (l.as_str(), v.as_slice())).collect();
    Ok(OpenSetScores {
        mated: mated
            .iter()
            .map(|(l, v)| {
                let (score, id) = top_match(&g, v);
                TopMatch {
                    score,
                    correct: id == *l,
                }
            })
            .collect(),
        non_mated: non_mated.iter().map(|(_, v)| top_match(&g, v).0).collect(),
    })
}

/// `(τ, FAR, DIR)` at every unique top score, from `+∞` down.
pub fn dir_far_points(s: &OpenSetScores) -> Vec<(f64, f64, f64)> {
    let (nm, m) = (s.non_mated.len() as f64, s.mated.len() as f64);
    let mut taus = unique_sorted(s.non_mated.iter().copied().chain(s.mated.iter().map(|t| t.score)));
    taus.reverse();
    let mut pts = vec![(f64::INFINITY, 0.0, 0.0)];
    for t in taus {
        let far = s.non_mated.iter().filter(|&&x| x >= t).count() as f64 / nm;
        let dir = s.mated.iter().filter(|x| x.correct && x.score >= t).count() as f64 / m;
        pts.push((t, far, dir));
    }
    pts
}

pub fn rank1_rate(s: &OpenSetScores) -> f64 {
    s.mated.iter().filter(|t| t.correct).count() as f64 / s.mated.len() as f64
}

/// DIR at the requested FAR: the last curve point with FAR ≤ `far`, linearly
/// interpolated towards the next one. `far >= 1` is rank-1 (τ = −∞).
pub fn dir_at_far(s: &OpenSetScores, far: f64) -> Result<f64> {
    if !(far > 0.0) {
        return Err(Error::invalid(format!("FAR {far} must be positive")));
    }
    if far >= 1.0 {
        return Ok(rank1_rate(s));
    }
    let pts = dir_far_points(s);
    let k = pts.iter().rposition(|p| p.1 <= far).expect("τ = +∞ has FAR 0");
    let (_, fa, da) = pts[k];
    if fa == far || k + 1 == pts.len() {
        return Ok(da);
    }
    let (_, fb, db) = pts[k + 1];
    Ok(da + (far - fa) / (fb - fa) * (db - da))
}

/// `(FAR, DIR)` for each requested operating point.
pub fn dir_far_curve(s: &OpenSetScores, far_points: &[f64]) -> Result<Vec<(f64, f64)>> {
    far_points.iter().map(|&f| Ok((f, dir_at_far(s, f)?))).collect()
}

/// FAR operating points of the standard open-set table.
pub const TABLE_FARS: [f64; 4] = [1.0, 0.1, 0.01, 0.001];
