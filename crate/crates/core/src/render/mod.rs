//! Textured occluder meshes rasterized onto aligned face images.
//!
//! Model coordinates are millimetres in the generic head frame: origin at the
//! head center, x right, y down, z away from the camera.

mod models;
mod files;

pub use files::{parse_obj, parse_pose, read_obj, read_pose, write_pose};
pub use models::{bundled_models, template_pose};

use std::sync::Arc;

use image::RgbImage;
use nalgebra::{Matrix3, Rotation3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gated::MaskImage;
use crate::masks::Span;

pub type Vec3 = Vector3<f64>;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Sunglasses,
    Eyeglasses,
    Microphone,
    Hand,
    Cap,
}

impl Category {
    pub const ALL: [Category; 5] = [
        Category::Sunglasses,
        Category::Eyeglasses,
        Category::Microphone,
        Category::Hand,
        Category::Cap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Category::Sunglasses => "sunglasses",
            Category::Eyeglasses => "eyeglasses",
            Category::Microphone => "microphone",
            Category::Hand => "hand",
            Category::Cap => "cap",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Category::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown occluder category {s:?}")))
    }

    /// Larger ranks are drawn behind smaller ones wherever they overlap.
    pub fn depth_rank(self) -> u32 {
        match self {
            Category::Hand => 4,
            Category::Cap => 3,
            Category::Microphone => 2,
            Category::Sunglasses | Category::Eyeglasses => 1,
        }
    }
}

/// RGB texture, row-major, `v = 0` at the top row.
#[derive(Clone, Debug, PartialEq)]
pub struct Texture {
    pub width: usize,
    pub height: usize,
    pub texels: Vec<[u8; 3]>,
}

impl Texture {
    pub fn solid(rgb: [u8; 3]) -> Self {
        Texture {
            width: 1,
            height: 1,
            texels: vec![rgb],
        }
    }

    pub fn checker(size: usize, cells: usize, a: [u8; 3], b: [u8; 3]) -> Self {
        let texels = (0..size * size)
            .map(|i| {
                let (y, x) = (i / size, i % size);
                if (x * cells / size + y * cells / size).is_multiple_of(2) {
                    a
                } else {
                    b
                }
            })
            .collect();
        Texture {
            width: size,
            height: size,
            texels,
        }
    }

    pub fn from_image(img: &RgbImage) -> Self {
        Texture {
            width: img.width() as usize,
            height: img.height() as usize,
            texels: img.pixels().map(|p| p.0).collect(),
        }
    }

    /// Nearest texel.
    pub fn sample(&self, u: f64, v: f64) -> [u8; 3] {
        let x = ((u.clamp(0.0, 1.0) * self.width as f64) as usize).min(self.width - 1);
        let y = ((v.clamp(0.0, 1.0) * self.height as f64) as usize).min(self.height - 1);
        self.texels[y * self.width + x]
    }
}

/// Triangle mesh with one UV per vertex.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Vec3>,
    pub uvs: Vec<(f64, f64)>,
    pub triangles: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn validate(&self) -> Result<()> {
        if self.uvs.len() != self.vertices.len() {
            return Err(Error::invalid("one UV per vertex required"));
        }
        if self.vertices.iter().any(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::NonFinite("mesh vertex".into()));
        }
        if self.uvs.iter().any(|&(u, v)| !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v))) {
            return Err(Error::invalid("UV outside [0,1]"));
        }
        if let Some(t) = self.triangles.iter().find(|t| t.iter().any(|&i| i >= self.vertices.len())) {
            return Err(Error::invalid(format!("triangle {t:?} indexes past {} vertices", self.vertices.len())));
        }
        Ok(())
    }

    pub fn append(&mut self, other: Mesh) {
        let base = self.vertices.len();
        self.vertices.extend(other.vertices);
        self.uvs.extend(other.uvs);
        self.triangles
            .extend(other.triangles.into_iter().map(|t| t.map(|i| i + base)));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OccluderModel {
    pub name: String,
    pub category: Category,
    pub mesh: Mesh,
    pub texture: Texture,
    /// Skip back-face culling.
    pub double_sided: bool,
}

impl OccluderModel {
    pub fn new(name: &str, category: Category, mesh: Mesh, texture: Texture, double_sided: bool) -> Result<Self> {
        mesh.validate()?;
        if mesh.triangles.is_empty() {
            return Err(Error::invalid(format!("model {name} has no triangles")));
        }
        Ok(OccluderModel {
            name: name.into(),
            category,
            mesh,
            texture,
            double_sided,
        })
    }
}

/// A placed, recolored occluder.
#[derive(Clone, Debug, PartialEq)]
pub struct OccluderInstance {
    pub model: Arc<OccluderModel>,
    pub scale: f64,
    /// Rotation angles about x, y, z (radians), applied x first.
    pub euler: [f64; 3],
    pub translation: Vec3,
    pub brightness: f64,
    /// Hue rotation about the grey axis, radians.
    pub hue: f64,
}

impl OccluderInstance {
    pub fn identity(model: Arc<OccluderModel>) -> Self {
        OccluderInstance {
            model,
            scale: 1.0,
            euler: [0.0; 3],
            translation: Vec3::zeros(),
            brightness: 1.0,
            hue: 0.0,
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        Rotation3::from_euler_angles(self.euler[0], self.euler[1], self.euler[2]).into_inner()
    }

    /// `s·R·v + t`.
    pub fn place(&self, v: &Vec3) -> Vec3 {
        self.scale * (self.rotation() * v) + self.translation
    }

    pub fn recolor(&self, rgb: [u8; 3]) -> [u8; 3] {
        let (s, c) = self.hue.sin_cos();
        let k = (1.0 - c) / 3.0;
        let r3 = s / 3f64.sqrt();
        let m = [
            [c + k, k - r3, k + r3],
            [k + r3, c + k, k - r3],
            [k - r3, k + r3, c + k],
        ];
        let x = rgb.map(|v| v as f64);
        std::array::from_fn(|i| {
            let v = (m[i][0] * x[0] + m[i][1] * x[1] + m[i][2] * x[2]) * self.brightness;
            v.round().clamp(0.0, 255.0) as u8
        })
    }
}

/// Uniform augmentation ranges for [`sample_instance`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationRanges {
    pub scale: Span<f64>,
    /// Per-axis rotation bound, radians.
    pub angle: Span<f64>,
    /// Per-axis translation bound, millimetres.
    pub translation: Span<f64>,
    pub brightness: Span<f64>,
    pub hue: Span<f64>,
}

impl Default for AugmentationRanges {
    fn default() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        AugmentationRanges {
            scale: Span::new(0.9, 1.15),
            angle: Span::new(-10.0 * deg, 10.0 * deg),
            translation: Span::new(-8.0, 8.0),
            brightness: Span::new(0.8, 1.2),
            hue: Span::new(-0.3, 0.3),
        }
    }
}

impl AugmentationRanges {
    /// Every range collapsed to the identity transform.
    pub fn identity() -> Self {
        AugmentationRanges {
            scale: Span::new(1.0, 1.0),
            angle: Span::new(0.0, 0.0),
            translation: Span::new(0.0, 0.0),
            brightness: Span::new(1.0, 1.0),
            hue: Span::new(0.0, 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scale.check("scale")?;
        self.angle.check("angle")?;
        self.translation.check("translation")?;
        self.brightness.check("brightness")?;
        self.hue.check("hue")?;
        if self.scale.min <= 0.0 || self.brightness.min < 0.0 {
            return Err(Error::invalid("scale must be positive and brightness non-negative"));
        }
        Ok(())
    }
}

pub fn sample_instance(
    model: Arc<OccluderModel>,
    rng: &mut impl Rng,
    ranges: &AugmentationRanges,
) -> Result<OccluderInstance> {
    ranges.validate()?;
    let scale = ranges.scale.sample(rng);
    let euler = std::array::from_fn(|_| ranges.angle.sample(rng));
    let translation = Vec3::from_fn(|_, _| ranges.translation.sample(rng));
    Ok(OccluderInstance {
        model,
        scale,
        euler,
        translation,
        brightness: ranges.brightness.sample(rng),
        hue: ranges.hue.sample(rng),
    })
}

/// Head-to-camera transform plus pinhole intrinsics.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadPose {
    pub focal: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: Matrix3<f64>,
    pub translation: Vec3,
}

impl HeadPose {
    pub fn new(focal: f64, cx: f64, cy: f64, rotation: Matrix3<f64>, translation: Vec3) -> Result<Self> {
        let pose = HeadPose {
            focal,
            cx,
            cy,
            rotation,
            translation,
        };
        pose.validate()?;
        Ok(pose)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.focal.is_finite() && self.focal > 0.0 && self.cx.is_finite() && self.cy.is_finite()) {
            return Err(Error::invalid("focal length must be positive"));
        }
        let err = (self.rotation.transpose() * self.rotation - Matrix3::identity()).norm();
        if !(err <= 1e-6) {
            return Err(Error::invalid(format!("rotation not orthonormal (‖RᵀR − I‖ = {err:e})")));
        }
        if !(self.translation.z > 0.0) {
            return Err(Error::invalid("head center must lie in front of the camera"));
        }
        Ok(())
    }

    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RenderConfig {
    /// Depth added per category rank, millimetres.
    pub rank_spacing: f64,
    /// Triangles with any vertex nearer than this are culled.
    pub near: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            rank_spacing: 10_000.0,
            near: 1.0,
        }
    }
}

/// Pixel position and depth of a model vertex; depth is camera z plus the
/// category rank offset.
pub fn project(v: &Vec3, inst: &OccluderInstance, pose: &HeadPose, rank_spacing: f64) -> (f64, f64, f64) {
    let c = pose.to_camera(&inst.place(v));
    (
        pose.focal * c.x / c.z + pose.cx,
        pose.focal * c.y / c.z + pose.cy,
        c.z + inst.model.category.depth_rank() as f64 * rank_spacing,
    )
}

/// Color, depth and coverage buffers for one frame.
#[derive(Clone, Debug)]
pub struct FrameBuffers {
    pub width: usize,
    pub height: usize,
    pub color: Vec<Option<[u8; 3]>>,
    pub depth: Vec<f64>,
}

impl FrameBuffers {
    pub fn new(width: usize, height: usize) -> Self {
        FrameBuffers {
            width,
            height,
            color: vec![None; width * height],
            depth: vec![f64::INFINITY; width * height],
        }
    }

    /// 0 where a fragment was written.
    pub fn coverage(&self) -> MaskImage {
        MaskImage::from_fn(self.height, self.width, |y, x| self.color[y * self.width + x].is_none())
    }
}

/// A screen-space vertex: pixel position, inverse camera depth, and
/// attributes pre-divided by camera depth.
#[derive(Clone, Copy, Debug)]
pub struct ScreenVertex {
    pub x: f64,
    pub y: f64,
    pub inv_z: f64,
    pub u_over_z: f64,
    pub v_over_z: f64,
}

/// Top-left fill rule for pixel centers on an edge (y down, clockwise-positive area).
fn is_top_left(a: (f64, f64), b: (f64, f64)) -> bool {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

/// Scan-converts one triangle. `emit(x, y, inv_z, u, v)` is called for every
/// covered pixel center. Returns false when culled or degenerate.
pub fn scan_triangle(
    tri: [ScreenVertex; 3],
    width: usize,
    height: usize,
    cull_back: bool,
    mut emit: impl FnMut(usize, usize, f64, f64, f64),
) -> bool {
    let p = tri.map(|v| (v.x, v.y));
    let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[1].1 - p[0].1) * (p[2].0 - p[0].0);
    if area == 0.0 || !area.is_finite() {
        return false;
    }
    if cull_back && area < 0.0 {
        return false;
    }
    // Orient clockwise-on-screen (positive area) so all edge functions agree.
    let (p, tri) = if area < 0.0 {
        ([p[0], p[2], p[1]], [tri[0], tri[2], tri[1]])
    } else {
        (p, tri)
    };
    let area = area.abs();
    let edge = |a: (f64, f64), b: (f64, f64), q: (f64, f64)| (b.0 - a.0) * (q.1 - a.1) - (b.1 - a.1) * (q.0 - a.0);
    let x0 = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let x1 = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).floor().min(width as f64 - 1.0);
    let y0 = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).ceil().max(0.0);
    let y1 = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).floor().min(height as f64 - 1.0);
    if x0 > x1 || y0 > y1 {
        return true;
    }
    let tl = [is_top_left(p[1], p[2]), is_top_left(p[2], p[0]), is_top_left(p[0], p[1])];
    for y in y0 as usize..=y1 as usize {
        for x in x0 as usize..=x1 as usize {
            let q = (x as f64, y as f64);
            let w = [edge(p[1], p[2], q), edge(p[2], p[0], q), edge(p[0], p[1], q)];
            if (0..3).any(|i| w[i] < 0.0 || (w[i] == 0.0 && !tl[i])) {
                continue;
            }
            let b = w.map(|wi| wi / area);
            let lerp = |f: fn(&ScreenVertex) -> f64| b[0] * f(&tri[0]) + b[1] * f(&tri[1]) + b[2] * f(&tri[2]);
            let inv_z = lerp(|v| v.inv_z);
            let u = lerp(|v| v.u_over_z) / inv_z;
            let v = lerp(|v| v.v_over_z) / inv_z;
            emit(x, y, inv_z, u, v);
        }
    }
    true
}

/// Z-buffers one instance into `buf`.
pub fn rasterize_into(buf: &mut FrameBuffers, inst: &OccluderInstance, pose: &HeadPose, cfg: &RenderConfig) {
    let model = &inst.model;
    let offset = model.category.depth_rank() as f64 * cfg.rank_spacing;
    let cam: Vec<Vec3> = model.mesh.vertices.iter().map(|v| pose.to_camera(&inst.place(v))).collect();
    let (w, h) = (buf.width, buf.height);
    for t in &model.mesh.triangles {
        if t.iter().any(|&i| !(cam[i].z > cfg.near)) {
            continue;
        }
        let sv = t.map(|i| {
            let c = cam[i];
            let (u, v) = model.mesh.uvs[i];
            ScreenVertex {
                x: pose.focal * c.x / c.z + pose.cx,
                y: pose.focal * c.y / c.z + pose.cy,
                inv_z: 1.0 / c.z,
                u_over_z: u / c.z,
                v_over_z: v / c.z,
            }
        });
        scan_triangle(sv, w, h, !model.double_sided, |x, y, inv_z, u, v| {
            let d = 1.0 / inv_z + offset;
            let k = y * w + x;
            if d < buf.depth[k] {
                buf.depth[k] = d;
                buf.color[k] = Some(inst.recolor(model.texture.sample(u, v)));
            }
        });
    }
}

/// Renders one instance on an empty frame.
pub fn rasterize(inst: &OccluderInstance, pose: &HeadPose, width: usize, height: usize, cfg: &RenderConfig) -> FrameBuffers {
    let mut buf = FrameBuffers::new(width, height);
    rasterize_into(&mut buf, inst, pose, cfg);
    buf
}

/// Draws all instances over `face`; the mask is 0 exactly where any
/// occluder fragment landed.
pub fn render_occlusion(
    face: &RgbImage,
    pose: &HeadPose,
    instances: &[OccluderInstance],
    cfg: &RenderConfig,
) -> Result<(RgbImage, MaskImage)> {
    pose.validate()?;
    let (w, h) = (face.width() as usize, face.height() as usize);
    let mut buf = FrameBuffers::new(w, h);
    for inst in instances {
        rasterize_into(&mut buf, inst, pose, cfg);
    }
    let mut out = face.clone();
    for (k, c) in buf.color.iter().enumerate() {
        if let Some(rgb) = c {
            out.put_pixel((k % w) as u32, (k / w) as u32, image::Rgb(*rgb));
        }
    }
    Ok((out, buf.coverage()))
}
