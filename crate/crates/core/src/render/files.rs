//! Mesh and pose text formats.

use std::collections::HashMap;
use std::path::Path;

use nalgebra::Matrix3;

use super::{HeadPose, Mesh, Vec3};
use crate::error::{Error, Result};

/// Reads `v`, `vt` and `f` records of a Wavefront OBJ; other records are
/// ignored. Polygons are fanned into triangles. Texture `v` is flipped so
/// that 0 is the top image row.
pub fn parse_obj(text: &str) -> Result<Mesh> {
    let mut pos: Vec<Vec3> = Vec::new();
    let mut tex: Vec<(f64, f64)> = Vec::new();
    let mut mesh = Mesh::default();
    let mut corners: HashMap<(usize, Option<usize>), usize> = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let bad = |d: String| Error::format("OBJ mesh", format!("line {}: {d}", lineno + 1));
        let mut f = line.split_whitespace();
        let nums = |f: std::str::SplitWhitespace, n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = f
                .take(n)
                .map(|s| s.parse::<f64>().map_err(|_| bad(format!("bad number {s:?}"))))
                .collect::<Result<_>>()?;
            if v.len() < n {
                return Err(bad(format!("expected {n} numbers")));
            }
            Ok(v)
        };
        match f.next() {
            Some("v") => {
                let v = nums(f, 3)?;
                pos.push(Vec3::new(v[0], v[1], v[2]));
            }
            Some("vt") => {
                let v = nums(f, 2)?;
                tex.push((v[0], 1.0 - v[1]));
            }
            Some("f") => {
                let mut idx = Vec::new();
                for corner in f {
                    let mut parts = corner.split('/');
                    let resolve = |s: &str, n: usize| -> Result<usize> {
                        let i: i64 = s.parse().map_err(|_| bad(format!("bad index {s:?}")))?;
                        let k = if i > 0 { i - 1 } else { n as i64 + i };
                        if k < 0 || k as usize >= n {
                            return Err(bad(format!("index {i} out of range")));
                        }
                        Ok(k as usize)
                    };
                    let vi = resolve(parts.next().unwrap_or(""), pos.len())?;
                    let ti = match parts.next() {
                        Some(s) if !s.is_empty() => Some(resolve(s, tex.len())?),
                        _ => None,
                    };
                    let id = *corners.entry((vi, ti)).or_insert_with(|| {
                        mesh.vertices.push(pos[vi]);
                        mesh.uvs.push(ti.map_or((0.0, 0.0), |t| tex[t]));
                        mesh.vertices.len() - 1
                    });
                    idx.push(id);
                }
                if idx.len() < 3 {
                    return Err(bad("face with fewer than 3 corners".into()));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    mesh.validate()?;
    Ok(mesh)
}

pub fn read_obj(path: &Path) -> Result<Mesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_obj(&text)
}

/// `fx cx cy; r11 r12 … r33; tx ty tz`. Groups may also be separated by newlines.
pub fn parse_pose(text: &str) -> Result<HeadPose> {
    let groups: Vec<Vec<f64>> = text
        .split([';', '\n'])
        .map(str::trim)
        .filter(|g| !g.is_empty() && !g.starts_with('#'))
        .map(|g| {
            g.split_whitespace()
                .map(|s| s.parse::<f64>().map_err(|_| Error::format("pose file", format!("bad number {s:?}"))))
                .collect()
        })
        .collect::<Result<_>>()?;
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    if sizes != [3, 9, 3] {
        return Err(Error::format("pose file", format!("expected groups of 3, 9, 3 numbers, got {sizes:?}")));
    }
    let r = Matrix3::from_row_slice(&groups[1]);
    HeadPose::new(
        groups[0][0],
        groups[0][1],
        groups[0][2],
        r,
        Vec3::new(groups[2][0], groups[2][1], groups[2][2]),
    )
}

pub fn read_pose(path: &Path) -> Result<HeadPose> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pose(&text)
}

pub fn write_pose(path: &Path, pose: &HeadPose) -> Result<()> {
    let r = pose.rotation;
    let rows: Vec<String> = (0..3)
        .flat_map(|i| (0..3).map(move |j| r[(i, j)].to_string()))
        .collect();
    let t = pose.translation;
    let text = format!(
        "{} {} {};\n{};\n{} {} {}\n",
        pose.focal,
        pose.cx,
        pose.cy,
        rows.join(" "),
        t.x,
        t.y,
        t.z
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
