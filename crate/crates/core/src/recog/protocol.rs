//! Protocol files, curve files and report tables.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::MeanStd;
use crate::error::{Error, Result};

/// An image reference: subject name and 1-based index within that subject.
pub type ImageRef = (String, usize);

#[derive(Clone, Debug, PartialEq)]
pub struct VerificationPair {
    pub a: ImageRef,
    pub b: ImageRef,
    pub genuine: bool,
    pub fold: usize,
}

fn parse_ref(name: &str, idx: &str, bad: &dyn Fn(&str) -> Error) -> Result<ImageRef> {
    let i: usize = idx.parse().map_err(|_| bad("bad image index"))?;
    if i == 0 {
        return Err(bad("image indices are 1-based"));
    }
    Ok((name.to_string(), i))
}

/// LFW-style pairs: an optional `folds per_fold` header, then
/// `name i j` (same subject) or `name1 i name2 j` (different subjects).
/// With a header, consecutive blocks of `2·per_fold` lines form folds;
/// without one, all pairs are fold 0.
pub fn parse_pairs(text: &str) -> Result<Vec<VerificationPair>> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .peekable();
    let mut block = None;
    if let Some(&(_, first)) = lines.peek() {
        let f: Vec<&str> = first.split_whitespace().collect();
        if f.len() == 2 {
            let folds: usize = f[0].parse().map_err(|_| Error::format("pairs file", "bad header"))?;
            let per: usize = f[1].parse().map_err(|_| Error::format("pairs file", "bad header"))?;
            if folds == 0 || per == 0 {
                return Err(Error::format("pairs file", "header counts must be positive"));
            }
            block = Some((folds, 2 * per));
            lines.next();
        }
    }
    let mut pairs = Vec::new();
    for (lineno, line) in lines {
        let bad = |d: &str| Error::format("pairs file", format!("line {lineno}: {d}"));
        let f: Vec<&str> = line.split_whitespace().collect();
        let (a, b, genuine) = match f.len() {
            3 => (parse_ref(f[0], f[1], &bad)?, parse_ref(f[0], f[2], &bad)?, true),
            4 => {
                if f[0] == f[2] {
                    return Err(bad("different-subject pair names the same subject"));
                }
                (parse_ref(f[0], f[1], &bad)?, parse_ref(f[2], f[3], &bad)?, false)
            }
            _ => return Err(bad("expected 3 or 4 fields")),
        };
        let fold = block.map_or(0, |(_, size)| pairs.len() / size);
        pairs.push(VerificationPair { a, b, genuine, fold });
    }
    if let Some((folds, size)) = block {
        if pairs.len() != folds * size {
            return Err(Error::format(
                "pairs file",
                format!("header promises {} pairs, found {}", folds * size, pairs.len()),
            ));
        }
    }
    Ok(pairs)
}

pub fn format_pairs(pairs: &[VerificationPair], header: Option<(usize, usize)>) -> String {
    let mut s = String::new();
    if let Some((f, p)) = header {
        let _ = writeln!(s, "{f} {p}");
    }
    for p in pairs {
        if p.genuine {
            let _ = writeln!(s, "{} {} {}", p.a.0, p.a.1, p.b.1);
        } else {
            let _ = writeln!(s, "{} {} {} {}", p.a.0, p.a.1, p.b.0, p.b.1);
        }
    }
    s
}

/// One open-set split: PCA training images, enrolled gallery, and probes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OpenSetSplit {
    pub train: Vec<ImageRef>,
    pub gallery: Vec<ImageRef>,
    pub mated: Vec<ImageRef>,
    pub non_mated: Vec<ImageRef>,
}

impl OpenSetSplit {
    pub fn validate(&self) -> Result<()> {
        let ids: HashSet<&str> = self.gallery.iter().map(|r| r.0.as_str()).collect();
        if let Some(r) = self.non_mated.iter().find(|r| ids.contains(r.0.as_str())) {
            return Err(Error::Protocol(format!("non-mated probe {r:?} shares an identity with the gallery")));
        }
        if let Some(r) = self.mated.iter().find(|r| !ids.contains(r.0.as_str())) {
            return Err(Error::Protocol(format!("mated probe {r:?} has no gallery entry")));
        }
        if self.gallery.is_empty() || self.mated.is_empty() || self.non_mated.is_empty() {
            return Err(Error::Protocol("every split needs gallery, mated and non-mated entries".into()));
        }
        Ok(())
    }
}

/// Manifest lines `split K`, then `train|gallery|mated|nonmated NAME IDX`.
/// Entries before the first `split` line belong to split 0.
pub fn parse_open_set(text: &str) -> Result<Vec<OpenSetSplit>> {
    let mut splits: Vec<OpenSetSplit> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |d: &str| Error::format("open-set manifest", format!("line {}: {d}", lineno + 1));
        let f: Vec<&str> = line.split_whitespace().collect();
        if f[0] == "split" {
            if f.len() != 2 || f[1].parse::<usize>().map_err(|_| bad("bad split id"))? != splits.len() {
                return Err(bad("splits must be numbered 0, 1, 2, … in order"));
            }
            splits.push(OpenSetSplit::default());
            continue;
        }
        if f.len() != 3 {
            return Err(bad("expected `role NAME IDX`"));
        }
        if splits.is_empty() {
            splits.push(OpenSetSplit::default());
        }
        let r = parse_ref(f[1], f[2], &bad)?;
        let cur = splits.last_mut().unwrap();
        match f[0] {
            "train" => cur.train.push(r),
            "gallery" => cur.gallery.push(r),
            "mated" => cur.mated.push(r),
            "nonmated" => cur.non_mated.push(r),
            _ => return Err(bad("role must be train, gallery, mated or nonmated")),
        }
    }
    if splits.is_empty() {
        return Err(Error::format("open-set manifest", "no entries"));
    }
    for s in &splits {
        s.validate()?;
    }
    Ok(splits)
}

pub fn format_open_set(splits: &[OpenSetSplit]) -> String {
    let mut s = String::new();
    for (k, sp) in splits.iter().enumerate() {
        let _ = writeln!(s, "split {k}");
        for (role, refs) in [
            ("train", &sp.train),
            ("gallery", &sp.gallery),
            ("mated", &sp.mated),
            ("nonmated", &sp.non_mated),
        ] {
            for (n, i) in refs {
                let _ = writeln!(s, "{role} {n} {i}");
            }
        }
    }
    s
}

pub fn write_curve_csv(path: &Path, curve: &[(f64, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(["far", "dir"]).map_err(|e| csv_err(path, e))?;
    for (f, d) in curve {
        w.write_record([f.to_string(), d.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["far", "dir"] {
        return Err(Error::format("curve CSV", "header must be far,dir"));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let num = |i: usize| {
                rec.get(i)
                    .and_then(|s| s.parse::<f64>().ok())
                    .ok_or_else(|| Error::format("curve CSV", format!("bad row {rec:?}")))
            };
            Ok((num(0)?, num(1)?))
        })
        .collect()
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::format("curve CSV", format!("{}: {e}", path.display()))
}

/// DIR against log-scaled FAR, one polyline per named curve.
pub fn curves_svg(curves: &[(String, Vec<(f64, f64)>)]) -> String {
    const W: f64 = 480.0;
    const H: f64 = 320.0;
    const M: f64 = 48.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];
    let lo = curves
        .iter()
        .flat_map(|(_, c)| c.iter().map(|p| p.0))
        .fold(1.0f64, f64::min)
        .max(1e-6)
        .log10()
        .floor()
        .min(-1.0);
    let sx = |far: f64| M + (far.max(1e-6).log10() - lo) / (0.0 - lo) * (W - 2.0 * M);
    let sy = |dir: f64| H - M - dir.clamp(0.0, 1.0) * (H - 2.0 * M);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{M} {M} V{} H{}" fill="none" stroke="black"/>"#,
        H - M,
        W - M
    );
    let mut e = lo as i32;
    while e <= 0 {
        let x = sx(10f64.powi(e));
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, H - M + 16.0);
        e += 1;
    }
    for k in 0..=4 {
        let d = k as f64 / 4.0;
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{d:.2}</text>"#, M - 6.0, sy(d) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">FAR</text>"#, W / 2.0, H - 8.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">DIR</text>"#, H / 2.0, H / 2.0);
    for (i, (name, c)) in curves.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts: Vec<(f64, f64)> = c.clone();
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let path: Vec<String> = pts.iter().map(|&(f, d)| format!("{:.2},{:.2}", sx(f), sy(d))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            M + 8.0,
            M + 14.0 * (i as f64 + 1.0),
            xml_escape(name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Open-set table row: DIR at each FAR, aggregated over splits as μ−σ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpenSetRow {
    pub condition: String,
    pub fars: Vec<f64>,
    pub dir_mu_minus_sigma: Vec<f64>,
    /// `per_split[s][k]` is DIR at `fars[k]` in split `s`.
    pub per_split: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationRow {
    pub condition: String,
    pub one_minus_eer: MeanStd,
    pub accuracy: MeanStd,
    pub auc: MeanStd,
}

pub fn format_open_set_table(rows: &[OpenSetRow]) -> String {
    let mut s = String::new();
    let Some(first) = rows.first() else { return s };
    let _ = write!(s, "{:<16}", "condition");
    for f in &first.fars {
        let _ = write!(s, " {:>12}", format!("DIR@{}%", f * 100.0));
    }
    s.push('\n');
    for r in rows {
        let _ = write!(s, "{:<16}", r.condition);
        for d in &r.dir_mu_minus_sigma {
            let _ = write!(s, " {:>12.2}", d * 100.0);
        }
        s.push('\n');
    }
    s
}

pub fn format_verification_table(rows: &[VerificationRow]) -> String {
    let mut s = format!("{:<16} {:>16} {:>16} {:>16}\n", "condition", "1-EER", "Acc.", "AUC");
    for r in rows {
        let cell = |m: &MeanStd| format!("{:.2}±{:.2}", m.mean * 100.0, m.std * 100.0);
        let _ = writeln!(
            s,
            "{:<16} {:>16} {:>16} {:>16}",
            r.condition,
            cell(&r.one_minus_eer),
            cell(&r.accuracy),
            cell(&r.auc)
        );
    }
    s
}
