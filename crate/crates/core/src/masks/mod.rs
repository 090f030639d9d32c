//! Synthetic occlusion masks: six families, landmark driven where relevant.
//!
//! All masks are `FRAME`×`FRAME` with 1 = known pixel, 0 = hole.

mod landmarks;

pub use landmarks::*;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated::MaskImage;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFamily {
    SquareCrop,
    LandmarkPoly,
    RandomWalk,
    Boundary,
    Holes,
    ErodedCrop,
}

impl MaskFamily {
    pub const ALL: [MaskFamily; 6] = [
        MaskFamily::SquareCrop,
        MaskFamily::LandmarkPoly,
        MaskFamily::RandomWalk,
        MaskFamily::Boundary,
        MaskFamily::Holes,
        MaskFamily::ErodedCrop,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MaskFamily::SquareCrop => "square_crop",
            MaskFamily::LandmarkPoly => "landmark_poly",
            MaskFamily::RandomWalk => "random_walk",
            MaskFamily::Boundary => "boundary",
            MaskFamily::Holes => "holes",
            MaskFamily::ErodedCrop => "eroded_crop",
        }
    }
}

/// Inclusive range.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Span<T> {
    pub min: T,
    pub max: T,
}

impl<T: PartialOrd + Copy + std::fmt::Debug> Span<T> {
    pub const fn new(min: T, max: T) -> Self {
        Span { min, max }
    }

    pub(crate) fn check(&self, what: &str) -> Result<()> {
        if self.min > self.max {
            return Err(Error::invalid(format!("{what}: min {:?} > max {:?}", self.min, self.max)));
        }
        Ok(())
    }
}

impl Span<usize> {
    pub(crate) fn sample(&self, rng: &mut impl Rng) -> usize {
        rng.random_range(self.min..=self.max)
    }
}

impl Span<f64> {
    pub(crate) fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.min == self.max {
            self.min
        } else {
            rng.random_range(self.min..=self.max)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WalkParams {
    pub strokes: Span<usize>,
    pub steps: Span<usize>,
    pub step_length: Span<f64>,
    pub brush_width: Span<usize>,
    /// Maximum heading change per step, radians.
    pub turn_jitter: f64,
    /// Accepted hole fraction; draws outside it are redrawn.
    pub hole_fraction: Span<f64>,
    pub max_attempts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MaskFamilyParams {
    pub square_side: usize,
    /// Extra distance around the landmark hull, pixels.
    pub poly_margin: Span<f64>,
    pub walk: WalkParams,
    pub boundary_fraction: Span<f64>,
    pub hole_count: Span<usize>,
    pub hole_radius: Span<f64>,
    pub erosion_iterations: Span<usize>,
    /// Sampling weights in [`MaskFamily::ALL`] order.
    pub weights: [f64; 6],
}

impl Default for WalkParams {
    fn default() -> Self {
        MaskFamilyParams::default().walk
    }
}

impl Default for MaskFamilyParams {
    fn default() -> Self {
        MaskFamilyParams {
            square_side: 50,
            poly_margin: Span::new(2.0, 6.0),
            walk: WalkParams {
                strokes: Span::new(1, 4),
                steps: Span::new(20, 60),
                step_length: Span::new(2.0, 6.0),
                brush_width: Span::new(6, 14),
                turn_jitter: 0.6,
                hole_fraction: Span::new(0.05, 0.35),
                max_attempts: 1000,
            },
            boundary_fraction: Span::new(0.1, 0.5),
            hole_count: Span::new(1, 8),
            hole_radius: Span::new(8.0, 16.0),
            erosion_iterations: Span::new(1, 5),
            weights: [1.0 / 6.0; 6],
        }
    }
}

impl MaskFamilyParams {
    pub fn validate(&self) -> Result<()> {
        if self.square_side == 0 {
            return Err(Error::invalid("square_side must be positive"));
        }
        self.poly_margin.check("poly_margin")?;
        if self.poly_margin.min < 1.0 {
            return Err(Error::invalid("poly_margin must be at least 1 pixel"));
        }
        let w = &self.walk;
        w.strokes.check("walk.strokes")?;
        w.steps.check("walk.steps")?;
        w.step_length.check("walk.step_length")?;
        w.brush_width.check("walk.brush_width")?;
        w.hole_fraction.check("walk.hole_fraction")?;
        if w.brush_width.min == 0 || w.step_length.min <= 0.0 || w.max_attempts == 0 {
            return Err(Error::invalid("walk brush, step length and attempts must be positive"));
        }
        self.boundary_fraction.check("boundary_fraction")?;
        if self.boundary_fraction.min < 0.0 || self.boundary_fraction.max > 0.5 {
            return Err(Error::invalid("boundary_fraction must lie in [0, 0.5]"));
        }
        self.hole_count.check("hole_count")?;
        self.hole_radius.check("hole_radius")?;
        if self.hole_radius.min < 0.0 {
            return Err(Error::invalid("hole_radius must be non-negative"));
        }
        self.erosion_iterations.check("erosion_iterations")?;
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0))
            || (self.weights.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(Error::invalid("family weights must be non-negative and sum to 1"));
        }
        Ok(())
    }

    /// All weight on one family.
    pub fn only(mut self, family: MaskFamily) -> Self {
        self.weights = MaskFamily::ALL.map(|f| if f == family { 1.0 } else { 0.0 });
        self
    }
}

/// Landmark index groups for the hull family, drawn uniformly.
pub fn landmark_pool() -> Vec<Vec<usize>> {
    let cat = |rs: &[std::ops::Range<usize>]| rs.iter().flat_map(|r| r.clone()).collect::<Vec<_>>();
    vec![
        cat(&[RIGHT_EYE]),
        cat(&[LEFT_EYE]),
        cat(&[RIGHT_BROW, LEFT_BROW, RIGHT_EYE, LEFT_EYE]),
        cat(&[NOSE_TIP..NOSE_TIP + 1, NOSTRILS]),
        cat(&[OUTER_MOUTH, INNER_MOUTH]),
        cat(&[RIGHT_EYE, LEFT_EYE, NOSE_BRIDGE, NOSTRILS]),
    ]
}

/// `side`×`side` hole centered on the pixel nearest `(cx, cy)`, clipped to the frame.
pub fn square_hole(cx: f64, cy: f64, side: usize, frame: usize) -> MaskImage {
    let x0 = cx.round() as i64 - (side / 2) as i64;
    let y0 = cy.round() as i64 - (side / 2) as i64;
    let inside = |v: usize, lo: i64| (v as i64) >= lo && (v as i64) < lo + side as i64;
    MaskImage::from_fn(frame, frame, |y, x| !(inside(y, y0) && inside(x, x0)))
}

pub fn square_crop_mask(lms: &LandmarkSet, rng: &mut impl Rng, params: &MaskFamilyParams) -> MaskImage {
    let (x, y) = lms.point(rng.random_range(0..LANDMARK_COUNT));
    square_hole(x, y, params.square_side, FRAME)
}

fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).unwrap());
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0);
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    ((p.0 - a.0 - t * dx).powi(2) + (p.1 - a.1 - t * dy).powi(2)).sqrt()
}

/// Hole = filled convex hull of `points` grown by `margin` pixels.
pub fn hull_hole(points: &[(f64, f64)], margin: f64, frame: usize) -> MaskImage {
    let hull = convex_hull(points);
    let n = hull.len();
    MaskImage::from_fn(frame, frame, |y, x| {
        let p = (x as f64, y as f64);
        let inside = n >= 3
            && (0..n).all(|i| {
                let (a, b) = (hull[i], hull[(i + 1) % n]);
                (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0) >= 0.0
            });
        let near = (0..n).any(|i| segment_distance(p, hull[i], hull[(i + 1) % n]) <= margin);
        !(inside || near)
    })
}

pub fn landmark_poly_mask(lms: &LandmarkSet, rng: &mut impl Rng, params: &MaskFamilyParams) -> MaskImage {
    let pool = landmark_pool();
    let group = &pool[rng.random_range(0..pool.len())];
    let margin = params.poly_margin.sample(rng);
    let pts: Vec<(f64, f64)> = group.iter().map(|&i| lms.point(i)).collect();
    hull_hole(&pts, margin, FRAME)
}

/// Zeroes a `width`×`width` square brush dragged along `path`.
pub fn stroke_mask(frame: usize, paths: &[Vec<(f64, f64)>], width: usize) -> MaskImage {
    let mut m = MaskImage::ones(frame, frame);
    let half = width as f64 / 2.0;
    let stamp = |m: &mut MaskImage, (px, py): (f64, f64)| {
        let x0 = (px - half + 0.5).floor() as i64;
        let y0 = (py - half + 0.5).floor() as i64;
        for y in y0.max(0)..(y0 + width as i64).min(frame as i64) {
            for x in x0.max(0)..(x0 + width as i64).min(frame as i64) {
                m.set(y as usize, x as usize, false);
            }
        }
    };
    for path in paths {
        if let Some(&first) = path.first() {
            stamp(&mut m, first);
        }
        for w in path.windows(2) {
            let (a, b) = (w[0], w[1]);
            let len = ((b.0 - a.0).powi(2) + (b.1 - a.1).powi(2)).sqrt();
            let n = (len * 2.0).ceil().max(1.0) as usize;
            for k in 1..=n {
                let t = k as f64 / n as f64;
                stamp(&mut m, (a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1)));
            }
        }
    }
    m
}

/// One unfiltered random-walk draw.
pub fn random_walk_draw(rng: &mut impl Rng, walk: &WalkParams, frame: usize) -> MaskImage {
    let n_strokes = walk.strokes.sample(rng);
    let width = walk.brush_width.sample(rng);
    let lim = (frame - 1) as f64;
    let paths: Vec<Vec<(f64, f64)>> = (0..n_strokes)
        .map(|_| {
            let mut p = (rng.random_range(0.0..=lim), rng.random_range(0.0..=lim));
            let mut heading = rng.random_range(0.0..std::f64::consts::TAU);
            let steps = walk.steps.sample(rng);
            let mut path = vec![p];
            for _ in 0..steps {
                heading += walk.turn_jitter * rng.random_range(-1.0..=1.0);
                let len = walk.step_length.sample(rng);
                let mut next = (p.0 + len * heading.cos(), p.1 + len * heading.sin());
                if !(0.0..=lim).contains(&next.0) {
                    heading = std::f64::consts::PI - heading;
                    next.0 = next.0.clamp(0.0, lim);
                }
                if !(0.0..=lim).contains(&next.1) {
                    heading = -heading;
                    next.1 = next.1.clamp(0.0, lim);
                }
                p = next;
                path.push(p);
            }
            path
        })
        .collect();
    stroke_mask(frame, &paths, width)
}

/// Random-walk strokes, redrawn until the hole fraction is in range.
pub fn random_walk_mask(rng: &mut impl Rng, params: &MaskFamilyParams) -> Result<MaskImage> {
    let w = &params.walk;
    let ok = |m: &MaskImage| {
        let f = m.hole_fraction();
        f >= w.hole_fraction.min && f <= w.hole_fraction.max
    };
    for _ in 0..w.max_attempts {
        let m = random_walk_draw(rng, w, FRAME);
        if ok(&m) || w.strokes.max == 0 {
            return Ok(m);
        }
    }
    Err(Error::invalid(format!(
        "no random walk within hole fraction [{}, {}] after {} attempts",
        w.hole_fraction.min, w.hole_fraction.max, w.max_attempts
    )))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Edge {
    Top,
    Bottom,
    Left,
    Right,
}

/// Band of depth `round(fraction·frame)` along `edge`.
pub fn boundary_band(edge: Edge, fraction: f64, frame: usize) -> MaskImage {
    let depth = (fraction * frame as f64).round() as usize;
    MaskImage::from_fn(frame, frame, |y, x| {
        let d = match edge {
            Edge::Top => y,
            Edge::Bottom => frame - 1 - y,
            Edge::Left => x,
            Edge::Right => frame - 1 - x,
        };
        d >= depth
    })
}

pub fn boundary_mask(rng: &mut impl Rng, params: &MaskFamilyParams) -> MaskImage {
    let edge = [Edge::Top, Edge::Bottom, Edge::Left, Edge::Right][rng.random_range(0..4)];
    let f = params.boundary_fraction.sample(rng);
    boundary_band(edge, f, FRAME)
}

/// Zeroes every pixel whose center is within `r` of a disk center.
pub fn disk_holes(disks: &[((f64, f64), f64)], frame: usize) -> MaskImage {
    MaskImage::from_fn(frame, frame, |y, x| {
        !disks
            .iter()
            .any(|&((cx, cy), r)| (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r)
    })
}

/// Draws the disk centers and radii used by [`holes_mask`].
pub fn sample_disks(rng: &mut impl Rng, params: &MaskFamilyParams) -> Vec<((f64, f64), f64)> {
    let k = params.hole_count.sample(rng);
    let lim = FRAME as f64;
    (0..k)
        .map(|_| {
            let c = (rng.random_range(0.0..lim), rng.random_range(0.0..lim));
            (c, params.hole_radius.sample(rng))
        })
        .collect()
}

pub fn holes_mask(rng: &mut impl Rng, params: &MaskFamilyParams) -> MaskImage {
    disk_holes(&sample_disks(rng, params), FRAME)
}

/// Erodes the hole region with a 3×3 cross, `iterations` times. Pixels
/// outside the frame count as hole, so the frame edge does not erode.
pub fn erode_holes(mask: &MaskImage, iterations: usize) -> MaskImage {
    let (h, w) = (mask.height(), mask.width());
    let mut m = mask.clone();
    for _ in 0..iterations {
        let prev = m.clone();
        let hole = |y: i64, x: i64| {
            y < 0 || x < 0 || y >= h as i64 || x >= w as i64 || !prev.is_valid(y as usize, x as usize)
        };
        m = MaskImage::from_fn(h, w, |y, x| {
            let (y, x) = (y as i64, x as i64);
            !(hole(y, x) && hole(y - 1, x) && hole(y + 1, x) && hole(y, x - 1) && hole(y, x + 1))
        });
    }
    m
}

pub fn eroded_crop_mask(lms: &LandmarkSet, rng: &mut impl Rng, params: &MaskFamilyParams) -> MaskImage {
    let crop = square_crop_mask(lms, rng, params);
    let it = params.erosion_iterations.sample(rng);
    erode_holes(&crop, it)
}

/// Draws a family by weight and delegates to it.
pub fn sample_mask(
    lms: &LandmarkSet,
    rng: &mut impl Rng,
    params: &MaskFamilyParams,
) -> Result<(MaskFamily, MaskImage)> {
    params.validate()?;
    let dist = WeightedIndex::new(params.weights).map_err(|e| Error::invalid(e.to_string()))?;
    let family = MaskFamily::ALL[dist.sample(rng)];
    let mask = match family {
        MaskFamily::SquareCrop => square_crop_mask(lms, rng, params),
        MaskFamily::LandmarkPoly => landmark_poly_mask(lms, rng, params),
        MaskFamily::RandomWalk => random_walk_mask(rng, params)?,
        MaskFamily::Boundary => boundary_mask(rng, params),
        MaskFamily::Holes => holes_mask(rng, params),
        MaskFamily::ErodedCrop => eroded_crop_mask(lms, rng, params),
    };
    Ok((family, mask))
}
