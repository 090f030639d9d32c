//! 68-point facial landmarks in the aligned face frame.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

pub const LANDMARK_COUNT: usize = 68;
/// Side of the aligned face frame in pixels.
pub const FRAME: usize = 128;

pub const JAW: std::ops::Range<usize> = 0..17;
pub const RIGHT_BROW: std::ops::Range<usize> = 17..22;
pub const LEFT_BROW: std::ops::Range<usize> = 22..27;
pub const NOSE_BRIDGE: std::ops::Range<usize> = 27..31;
pub const NOSTRILS: std::ops::Range<usize> = 31..36;
pub const RIGHT_EYE: std::ops::Range<usize> = 36..42;
pub const LEFT_EYE: std::ops::Range<usize> = 42..48;
pub const OUTER_MOUTH: std::ops::Range<usize> = 48..60;
pub const INNER_MOUTH: std::ops::Range<usize> = 60..68;
/// Nose tip within the bridge group.
pub const NOSE_TIP: usize = 30;

/// Pixel coordinates `(x, y)`; integer coordinates are pixel centers.
#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkSet {
    points: Vec<(f64, f64)>,
    visible: Vec<bool>,
}

impl LandmarkSet {
    pub fn new(points: Vec<(f64, f64)>, visible: Vec<bool>) -> Result<Self> {
        if points.len() != LANDMARK_COUNT || visible.len() != LANDMARK_COUNT {
            return Err(Error::invalid(format!(
                "expected {LANDMARK_COUNT} landmarks, got {} points / {} flags",
                points.len(),
                visible.len()
            )));
        }
        let lim = FRAME as f64;
        if let Some((i, p)) = points
            .iter()
            .enumerate()
            .find(|(_, (x, y))| !(x.is_finite() && y.is_finite() && (0.0..lim).contains(x) && (0.0..lim).contains(y)))
        {
            return Err(Error::invalid(format!("landmark {i} at {p:?} outside [0,{FRAME})")));
        }
        Ok(LandmarkSet { points, visible })
    }

    /// Generic frontal face layout in the 128×128 frame.
    pub fn template() -> Self {
        use std::f64::consts::PI;
        let mut p = Vec::with_capacity(LANDMARK_COUNT);
        for i in 0..17 {
            let t = i as f64 * PI / 16.0;
            p.push((64.0 - 44.0 * t.cos(), 58.0 + 50.0 * t.sin()));
        }
        for x0 in [30.0, 72.0] {
            for k in 0..5 {
                let t = k as f64 / 4.0;
                p.push((x0 + 26.0 * t, 40.0 - 5.0 * (t * PI).sin()));
            }
        }
        for k in 0..4 {
            p.push((64.0, 50.0 + 7.0 * k as f64));
        }
        for (k, y) in [76.0, 78.0, 79.0, 78.0, 76.0].into_iter().enumerate() {
            p.push((54.0 + 5.0 * k as f64, y));
        }
        for cx in [44.0, 84.0] {
            for (dx, dy) in [(-10.0, 0.0), (-5.0, -4.0), (5.0, -4.0), (10.0, 0.0), (5.0, 3.0), (-5.0, 3.0)] {
                p.push((cx + dx, 54.0 + dy));
            }
        }
        for k in 0..12 {
            let t = k as f64 * PI / 6.0;
            p.push((64.0 - 17.0 * t.cos(), 92.0 - 8.0 * t.sin()));
        }
        for k in 0..8 {
            let t = k as f64 * PI / 4.0;
            p.push((64.0 - 11.0 * t.cos(), 92.0 - 3.0 * t.sin()));
        }
        LandmarkSet::new(p, vec![true; LANDMARK_COUNT]).expect("template inside frame")
    }

    /// Every landmark at the same point.
    pub fn collapsed(x: f64, y: f64) -> Result<Self> {
        LandmarkSet::new(vec![(x, y); LANDMARK_COUNT], vec![true; LANDMARK_COUNT])
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn point(&self, i: usize) -> (f64, f64) {
        self.points[i]
    }

    pub fn visible(&self, i: usize) -> bool {
        self.visible[i]
    }

    pub fn centroid(&self, indices: impl IntoIterator<Item = usize>) -> (f64, f64) {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0.0);
        for i in indices {
            sx += self.points[i].0;
            sy += self.points[i].1;
            n += 1.0;
        }
        (sx / n, sy / n)
    }

    /// Parses 68 lines of `index x y visible`; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut points = vec![None; LANDMARK_COUNT];
        let mut visible = vec![true; LANDMARK_COUNT];
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = |d: &str| Error::format("landmark file", format!("line {}: {d}", lineno + 1));
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 4 {
                return Err(bad("expected `index x y visible`"));
            }
            let i: usize = f[0].parse().map_err(|_| bad("bad index"))?;
            if i >= LANDMARK_COUNT {
                return Err(bad("index out of range"));
            }
            if points[i].is_some() {
                return Err(bad("duplicate index"));
            }
            let x: f64 = f[1].parse().map_err(|_| bad("bad x"))?;
            let y: f64 = f[2].parse().map_err(|_| bad("bad y"))?;
            visible[i] = match f[3] {
                "1" | "true" => true,
                "0" | "false" => false,
                _ => return Err(bad("visible must be 0 or 1")),
            };
            points[i] = Some((x, y));
        }
        let points = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| p.ok_or_else(|| Error::format("landmark file", format!("landmark {i} missing"))))
            .collect::<Result<Vec<_>>>()?;
        LandmarkSet::new(points, visible)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, (x, y)) in self.points.iter().enumerate() {
            let _ = writeln!(s, "{i} {x} {y} {}", self.visible[i] as u8);
        }
        s
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        LandmarkSet::parse(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
