//! Built-in occluder pool made from parametric primitives, placed on the
//! generic head.

use std::f64::consts::{PI, TAU};
use std::sync::Arc;

use nalgebra::Matrix3;

use super::{Category, HeadPose, Mesh, OccluderModel, Texture, Vec3};

const SEGMENTS: usize = 24;

/// Frontal head pose for 128×128 aligned faces.
pub fn template_pose() -> HeadPose {
    HeadPose {
        focal: 500.0,
        cx: 64.0,
        cy: 64.0,
        rotation: Matrix3::identity(),
        translation: Vec3::new(0.0, 0.0, 880.0),
    }
}

fn planar_uv(points: &[Vec3]) -> Vec<(f64, f64)> {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for k in 0..2 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let norm = |v: f64, k: usize| if hi[k] > lo[k] { (v - lo[k]) / (hi[k] - lo[k]) } else { 0.5 };
    points.iter().map(|p| (norm(p.x, 0), norm(p.y, 1))).collect()
}

/// Convex polygon in the plane of its points, triangulated as a fan.
fn fan(outline: Vec<Vec3>) -> Mesh {
    let n = outline.len();
    let center = outline.iter().sum::<Vec3>() / n as f64;
    let mut vertices = vec![center];
    vertices.extend(outline);
    let uvs = planar_uv(&vertices);
    let triangles = (0..n).map(|i| [0, 1 + i, 1 + (i + 1) % n]).collect();
    Mesh {
        vertices,
        uvs,
        triangles,
    }
}

fn ellipse(c: Vec3, rx: f64, ry: f64) -> Vec<Vec3> {
    (0..SEGMENTS)
        .map(|k| {
            let t = TAU * k as f64 / SEGMENTS as f64;
            c + Vec3::new(rx * t.cos(), ry * t.sin(), 0.0)
        })
        .collect()
}

fn disc(c: Vec3, rx: f64, ry: f64) -> Mesh {
    fan(ellipse(c, rx, ry))
}

/// Band between two outlines with matching vertex counts.
fn band(inner: Vec<Vec3>, outer: Vec<Vec3>) -> Mesh {
    let n = inner.len();
    let mut vertices = inner;
    vertices.extend(outer);
    let uvs = planar_uv(&vertices);
    let mut triangles = Vec::with_capacity(2 * n);
    for i in 0..n {
        let j = (i + 1) % n;
        triangles.push([i, j, n + j]);
        triangles.push([i, n + j, n + i]);
    }
    Mesh {
        vertices,
        uvs,
        triangles,
    }
}

fn ring(c: Vec3, r_in: (f64, f64), r_out: (f64, f64)) -> Mesh {
    band(ellipse(c, r_in.0, r_in.1), ellipse(c, r_out.0, r_out.1))
}

fn rect_outline(c: Vec3, w: f64, h: f64) -> Vec<Vec3> {
    let (a, b) = (w / 2.0, h / 2.0);
    [(-a, -b), (a, -b), (a, b), (-a, b)]
        .iter()
        .map(|&(x, y)| c + Vec3::new(x, y, 0.0))
        .collect()
}

fn quad(corners: [Vec3; 4]) -> Mesh {
    Mesh {
        uvs: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        vertices: corners.to_vec(),
        triangles: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// Flat strip of `width` from `a` to `b`, widened along `side`.
fn strip(a: Vec3, b: Vec3, side: Vec3, width: f64) -> Mesh {
    let o = side.normalize() * (width / 2.0);
    quad([a - o, b - o, b + o, a + o])
}

/// Surface of revolution around `axis` through `base`; `profile` lists
/// (distance along axis, radius) pairs.
fn lathe(base: Vec3, axis: Vec3, profile: &[(f64, f64)]) -> Mesh {
    let a = axis.normalize();
    let helper = if a.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = a.cross(&helper).normalize();
    let e2 = a.cross(&e1);
    let ring_n = SEGMENTS + 1;
    let mut mesh = Mesh::default();
    for (pi, &(along, r)) in profile.iter().enumerate() {
        for k in 0..ring_n {
            let t = TAU * k as f64 / SEGMENTS as f64;
            mesh.vertices.push(base + a * along + (e1 * t.cos() + e2 * t.sin()) * r);
            mesh.uvs.push((k as f64 / SEGMENTS as f64, pi as f64 / (profile.len() - 1).max(1) as f64));
        }
    }
    for p in 0..profile.len().saturating_sub(1) {
        for k in 0..SEGMENTS {
            let i = p * ring_n + k;
            mesh.triangles.push([i, i + 1, i + ring_n + 1]);
            mesh.triangles.push([i, i + ring_n + 1, i + ring_n]);
        }
    }
    mesh
}

fn dome_profile(radius: f64, rings: usize) -> Vec<(f64, f64)> {
    (0..=rings)
        .map(|i| {
            let th = PI / 2.0 * i as f64 / rings as f64;
            (radius * th.sin(), radius * th.cos())
        })
        .collect()
}

fn capsule(a: Vec3, b: Vec3, r: f64) -> Mesh {
    let len = (b - a).norm();
    let mut prof: Vec<(f64, f64)> = (0..=6)
        .map(|i| {
            let th = PI / 2.0 * (1.0 - i as f64 / 6.0);
            (-r * th.sin(), r * th.cos())
        })
        .collect();
    prof.extend((0..=6).map(|i| {
        let th = PI / 2.0 * i as f64 / 6.0;
        (len + r * th.sin(), r * th.cos())
    }));
    lathe(a, b - a, &prof)
}

fn ellipsoid(c: Vec3, r: Vec3) -> Mesh {
    let prof: Vec<(f64, f64)> = (0..=12)
        .map(|i| {
            let th = PI * i as f64 / 12.0;
            (-th.cos(), th.sin())
        })
        .collect();
    let mut m = lathe(Vec3::zeros(), Vec3::y(), &prof);
    for v in &mut m.vertices {
        *v = c + Vec3::new(v.x * r.x, v.y * r.y, v.z * r.z);
    }
    m
}

fn merge(parts: Vec<Mesh>) -> Mesh {
    let mut m = Mesh::default();
    for p in parts {
        m.append(p);
    }
    m
}

const EYE_Y: f64 = -16.0;
const EYE_X: f64 = 32.0;
const LENS_Z: f64 = -100.0;

fn temples(half_span: f64) -> Vec<Mesh> {
    [-1.0, 1.0]
        .iter()
        .map(|&s| {
            strip(
                Vec3::new(s * half_span, EYE_Y, LENS_Z),
                Vec3::new(s * (half_span + 8.0), EYE_Y, -10.0),
                Vec3::y(),
                4.0,
            )
        })
        .collect()
}

fn bridge(y: f64, half_gap: f64) -> Mesh {
    strip(Vec3::new(-half_gap, y, LENS_Z), Vec3::new(half_gap, y, LENS_Z), Vec3::y(), 4.0)
}

fn eye_centers(dy: f64) -> [Vec3; 2] {
    [Vec3::new(-EYE_X, EYE_Y + dy, LENS_Z), Vec3::new(EYE_X, EYE_Y + dy, LENS_Z)]
}

fn hand_silhouette(palm_center: Vec3) -> Mesh {
    let c = palm_center;
    let mut parts = vec![fan(rect_outline(c, 70.0, 60.0))];
    for (i, len) in [62.0, 70.0, 66.0, 52.0].into_iter().enumerate() {
        let x = c.x - 26.0 + 17.5 * i as f64;
        let top = c.y - 30.0;
        parts.push(fan(rect_outline(Vec3::new(x, top - len / 2.0, c.z), 15.0, len)));
    }
    parts.push(strip(
        Vec3::new(c.x - 30.0, c.y + 10.0, c.z),
        Vec3::new(c.x - 70.0, c.y - 20.0, c.z),
        Vec3::new(1.0, -1.3, 0.0),
        18.0,
    ));
    merge(parts)
}

fn model(name: &str, category: Category, mesh: Mesh, texture: Texture) -> Arc<OccluderModel> {
    Arc::new(OccluderModel::new(name, category, mesh, texture, true).expect("built-in model is valid"))
}

/// Twelve built-in occluders across the five categories.
pub fn bundled_models() -> Vec<Arc<OccluderModel>> {
    let dark = Texture::checker(8, 2, [20, 20, 28], [40, 36, 44]);
    let gold = Texture::checker(8, 4, [180, 150, 60], [140, 110, 40]);
    let black = Texture::solid([15, 15, 15]);
    let tortoise = Texture::checker(16, 4, [110, 60, 20], [60, 30, 10]);
    let metal = Texture::checker(8, 4, [90, 90, 95], [60, 60, 66]);
    let skin = Texture::checker(8, 2, [214, 170, 140], [200, 156, 128]);
    let red = Texture::checker(16, 2, [180, 30, 35], [150, 20, 25]);
    let navy = Texture::checker(16, 8, [30, 40, 90], [20, 30, 70]);
    let wool = Texture::checker(16, 8, [60, 120, 70], [50, 100, 60]);

    let [l, r] = eye_centers(0.0);
    let [la, ra] = eye_centers(4.0);
    vec![
        model(
            "sunglasses_round",
            Category::Sunglasses,
            merge(
                [disc(l, 22.0, 20.0), disc(r, 22.0, 20.0), bridge(EYE_Y - 4.0, 12.0)]
                    .into_iter()
                    .chain(temples(54.0))
                    .collect(),
            ),
            dark.clone(),
        ),
        model(
            "sunglasses_aviator",
            Category::Sunglasses,
            merge(
                [disc(la, 26.0, 22.0), disc(ra, 26.0, 22.0), bridge(EYE_Y - 10.0, 8.0)]
                    .into_iter()
                    .chain(temples(58.0))
                    .collect(),
            ),
            gold,
        ),
        model(
            "eyeglasses_round",
            Category::Eyeglasses,
            merge(
                [ring(l, (19.0, 19.0), (23.0, 23.0)), ring(r, (19.0, 19.0), (23.0, 23.0)), bridge(EYE_Y - 4.0, 10.0)]
                    .into_iter()
                    .chain(temples(55.0))
                    .collect(),
            ),
            black.clone(),
        ),
        model(
            "eyeglasses_rect",
            Category::Eyeglasses,
            merge(
                [
                    band(rect_outline(l, 42.0, 26.0), rect_outline(l, 50.0, 32.0)),
                    band(rect_outline(r, 42.0, 26.0), rect_outline(r, 50.0, 32.0)),
                    bridge(EYE_Y - 4.0, 8.0),
                ]
                .into_iter()
                .chain(temples(57.0))
                .collect(),
            ),
            tortoise,
        ),
        model(
            "eyeglasses_thick",
            Category::Eyeglasses,
            merge(
                [ring(l, (17.0, 15.0), (25.0, 22.0)), ring(r, (17.0, 15.0), (25.0, 22.0)), bridge(EYE_Y - 2.0, 8.0)]
                    .into_iter()
                    .chain(temples(57.0))
                    .collect(),
            ),
            black,
        ),
        model(
            "microphone_handheld",
            Category::Microphone,
            merge(vec![
                ellipsoid(Vec3::new(12.0, 58.0, -135.0), Vec3::new(20.0, 20.0, 20.0)),
                capsule(Vec3::new(16.0, 80.0, -132.0), Vec3::new(30.0, 180.0, -120.0), 11.0),
            ]),
            metal.clone(),
        ),
        model(
            "microphone_headset",
            Category::Microphone,
            merge(vec![
                capsule(Vec3::new(24.0, 46.0, -100.0), Vec3::new(34.0, 42.0, -98.0), 7.0),
                strip(Vec3::new(30.0, 44.0, -98.0), Vec3::new(78.0, 4.0, -20.0), Vec3::new(0.6, 0.8, 0.0), 4.0),
            ]),
            metal,
        ),
        model("hand_flat", Category::Hand, hand_silhouette(Vec3::new(8.0, 70.0, -140.0)), skin.clone()),
        model(
            "hand_fist",
            Category::Hand,
            merge(vec![
                ellipsoid(Vec3::new(28.0, 76.0, -125.0), Vec3::new(42.0, 36.0, 30.0)),
                capsule(Vec3::new(40.0, 100.0, -115.0), Vec3::new(60.0, 190.0, -100.0), 26.0),
            ]),
            skin,
        ),
        model(
            "cap_baseball",
            Category::Cap,
            merge(vec![
                lathe(Vec3::new(0.0, -40.0, 0.0), -Vec3::y(), &dome_profile(102.0, 8)),
                quad([
                    Vec3::new(-80.0, -40.0, -60.0),
                    Vec3::new(80.0, -40.0, -60.0),
                    Vec3::new(70.0, -28.0, -175.0),
                    Vec3::new(-70.0, -28.0, -175.0),
                ]),
            ]),
            red,
        ),
        model(
            "hat_wide",
            Category::Cap,
            merge(vec![
                lathe(Vec3::new(0.0, -45.0, 0.0), -Vec3::y(), &dome_profile(98.0, 8)),
                lathe(Vec3::new(0.0, -45.0, 0.0), -Vec3::y(), &[(0.0, 98.0), (0.0, 160.0)]),
            ]),
            navy,
        ),
        model(
            "beanie",
            Category::Cap,
            lathe(Vec3::new(0.0, -28.0, 0.0), -Vec3::y(), &dome_profile(104.0, 8)),
            wool,
        ),
    ]
}
