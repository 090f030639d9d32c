use std::sync::Arc;

use image::RgbImage;
use nalgebra::Matrix3;
use occgame::render::{
    bundled_models, rasterize, rasterize_into, render_occlusion, sample_instance, template_pose, AugmentationRanges,
    Category, FrameBuffers, HeadPose, Mesh, OccluderInstance, OccluderModel, RenderConfig, Texture, Vec3,
};
use occgame::rng::substream;
use rand::Rng;

const SIZE: usize = 64;
/// Barycentric margin below which a pixel center counts as on an edge.
const EDGE_EPS: f64 = 1e-9;

fn triangle_model(category: Category, verts: [Vec3; 3], rgb: [u8; 3]) -> Arc<OccluderModel> {
    let mesh = Mesh {
        vertices: verts.to_vec(),
        uvs: vec![(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)],
        triangles: vec![[0, 1, 2]],
    };
    Arc::new(OccluderModel::new("tri", category, mesh, Texture::solid(rgb), true).unwrap())
}

/// Camera depth where the ray through pixel center `(px, py)` meets the
/// triangle, with the smallest barycentric coordinate, or `None` on a miss.
fn ray_hit(pose: &HeadPose, cam: &[Vec3; 3], px: f64, py: f64) -> Option<(f64, f64)> {
    let dir = Vec3::new((px - pose.cx) / pose.focal, (py - pose.cy) / pose.focal, 1.0);
    let (e1, e2) = (cam[1] - cam[0], cam[2] - cam[0]);
    let p = dir.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-12 {
        return None;
    }
    let s = -cam[0];
    let u = s.dot(&p) / det;
    let q = s.cross(&e1);
    let v = dir.dot(&q) / det;
    let t = e2.dot(&q) / det;
    let margin = u.min(v).min(1.0 - u - v);
    (margin > -EDGE_EPS).then_some((t, margin))
}

fn random_triangle_pairs() {
    let pose = HeadPose::new(200.0, 32.0, 32.0, Matrix3::identity(), Vec3::new(0.0, 0.0, 100.0)).unwrap();
    let cfg = RenderConfig::default();
    let colors = [[220, 20, 20], [20, 20, 220]];
    let (mut compared, mut contested) = (0usize, 0usize);
    for pair in 0..500u64 {
        let mut rng = substream(pair, "c7-triangles", 0);
        let mut vert = || Vec3::new(rng.random_range(-15.0..15.0), rng.random_range(-15.0..15.0), rng.random_range(-30.0..30.0));
        let tris: [[Vec3; 3]; 2] = [[vert(), vert(), vert()], [vert(), vert(), vert()]];
        let cats = [0, 1].map(|_| Category::ALL[rng.random_range(0..5)]);
        let insts = [0, 1].map(|k| OccluderInstance::identity(triangle_model(cats[k], tris[k], colors[k])));
        let mut buf = FrameBuffers::new(SIZE, SIZE);
        let order = if rng.random_bool(0.5) { [0, 1] } else { [1, 0] };
        for k in order {
            rasterize_into(&mut buf, &insts[k], &pose, &cfg);
        }
        let cams = tris.map(|t| t.map(|v| pose.to_camera(&v)));
        for y in 0..SIZE {
            for x in 0..SIZE {
                let hits: Vec<Option<(f64, f64)>> =
                    (0..2).map(|k| ray_hit(&pose, &cams[k], x as f64, y as f64)).collect();
                if hits.iter().flatten().any(|h| h.1 < EDGE_EPS) {
                    continue;
                }
                let depth = |k: usize| hits[k].map(|h| h.0 + cats[k].depth_rank() as f64 * cfg.rank_spacing);
                let winner = match (depth(0), depth(1)) {
                    (None, None) => None,
                    (Some(_), None) => Some(0),
                    (None, Some(_)) => Some(1),
                    (Some(a), Some(b)) => {
                        contested += 1;
                        if (a - b).abs() <= 1e-9 * a.abs() {
                            continue;
                        }
                        Some(if a < b { 0 } else { 1 })
                    }
                };
                let i = y * SIZE + x;
                compared += 1;
                match winner {
                    None => assert!(buf.color[i].is_none(), "pair {pair}: ({x},{y}) drawn but no triangle covers it"),
                    Some(k) => {
                        assert_eq!(buf.color[i], Some(colors[k]), "pair {pair}: wrong winner at ({x},{y})");
                        let want = depth(k).unwrap();
                        assert!((buf.depth[i] - want).abs() <= 1e-9 * want, "pair {pair}: depth at ({x},{y})");
                    }
                }
            }
        }
    }
    assert!(contested > 10_000, "too few overlapping pixels exercised ({contested})");
    println!("    {compared} pixels compared, {contested} with both triangles covering");
}

fn flat_face(rgb: [u8; 3]) -> RgbImage {
    RgbImage::from_pixel(128, 128, image::Rgb(rgb))
}

/// A pixel was written iff its output differs from the face on a black or on
/// a white background.
fn mask_is_modified_set() {
    let models = bundled_models();
    let pose = template_pose();
    let cfg = RenderConfig::default();
    let (black, white) = (flat_face([0; 3]), flat_face([255; 3]));
    for seed in 0..50 {
        let mut rng = substream(seed, "c7-scenes", 0);
        let n = rng.random_range(1..4);
        let insts: Vec<_> = (0..n)
            .map(|_| {
                let m = models[rng.random_range(0..models.len())].clone();
                sample_instance(m, &mut rng, &AugmentationRanges::default()).unwrap()
            })
            .collect();
        let (ob, mb) = render_occlusion(&black, &pose, &insts, &cfg).unwrap();
        let (ow, mw) = render_occlusion(&white, &pose, &insts, &cfg).unwrap();
        assert_eq!(mb, mw);
        assert!(mb.hole_count() > 0, "scene {seed} drew nothing");
        for (x, y, p) in ob.enumerate_pixels() {
            let modified = p.0 != [0; 3] || ow.get_pixel(x, y).0 != [255; 3];
            assert_eq!(modified, !mb.is_valid(y as usize, x as usize), "scene {seed}: ({x},{y})");
        }
    }
}

fn quad(z: f64, x0: f64, x1: f64, y0: f64, y1: f64) -> Mesh {
    Mesh {
        vertices: vec![Vec3::new(x0, y0, z), Vec3::new(x1, y0, z), Vec3::new(x1, y1, z), Vec3::new(x0, y1, z)],
        uvs: vec![(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)],
        triangles: vec![[0, 1, 2], [0, 2, 3]],
    }
}

/// Overlap pixels of a hand and sunglasses scene, and the sunglasses-only
/// colors there. Checked in both drawing orders.
fn assert_glasses_win(hand: &OccluderInstance, glasses: &OccluderInstance, pose: &HeadPose, cfg: &RenderConfig) -> usize {
    let alone_h = rasterize(hand, pose, 128, 128, cfg);
    let alone_g = rasterize(glasses, pose, 128, 128, cfg);
    let face = flat_face([128; 3]);
    let mut overlap = 0;
    for order in [[hand, glasses], [glasses, hand]] {
        let insts: Vec<OccluderInstance> = order.iter().map(|&i| i.clone()).collect();
        let (out, _) = render_occlusion(&face, pose, &insts, cfg).unwrap();
        overlap = 0;
        for k in 0..128 * 128 {
            if let (Some(_), Some(g)) = (alone_h.color[k], alone_g.color[k]) {
                overlap += 1;
                assert_eq!(out.get_pixel((k % 128) as u32, (k / 128) as u32).0, g, "hand drawn over sunglasses");
            }
        }
    }
    overlap
}

fn hand_behind_sunglasses() {
    let pose = template_pose();
    let cfg = RenderConfig::default();
    // Flat stand-ins: the hand sits 80 mm nearer the camera than the lenses.
    let hand = Arc::new(OccluderModel::new("h", Category::Hand, quad(-150.0, -40.0, 20.0, -30.0, 30.0), Texture::solid([210, 160, 130]), true).unwrap());
    let glasses = Arc::new(OccluderModel::new("g", Category::Sunglasses, quad(-70.0, -10.0, 50.0, -20.0, 10.0), Texture::solid([10, 10, 10]), true).unwrap());
    let (h, g) = (OccluderInstance::identity(hand), OccluderInstance::identity(glasses));
    assert!(assert_glasses_win(&h, &g, &pose, &cfg) > 100);
    // Without rank offsets plain z-order applies and the nearer hand wins.
    let flat_cfg = RenderConfig { rank_spacing: 0.0, ..cfg.clone() };
    let (out, _) = render_occlusion(&flat_face([128; 3]), &pose, &[g.clone(), h.clone()], &flat_cfg).unwrap();
    let column = (pose.focal * 5.0 / (pose.translation.z - 150.0) + pose.cx).round() as u32;
    assert_eq!(out.get_pixel(column, 64).0, [210, 160, 130]);

    // Bundled meshes: slide each hand up over the eyes and towards the camera.
    let models = bundled_models();
    let sunglasses: Vec<_> = models.iter().filter(|m| m.category == Category::Sunglasses).collect();
    let hands: Vec<_> = models.iter().filter(|m| m.category == Category::Hand).collect();
    assert!(!sunglasses.is_empty() && !hands.is_empty());
    for hm in &hands {
        for sm in &sunglasses {
            let glasses = OccluderInstance::identity((*sm).clone());
            let mut hand = OccluderInstance::identity((*hm).clone());
            hand.translation = Vec3::new(0.0, 0.0, -60.0);
            let mut best = 0;
            for step in 0..30 {
                hand.translation.y = -5.0 * step as f64;
                best = assert_glasses_win(&hand, &glasses, &pose, &cfg);
                if best >= 200 {
                    break;
                }
            }
            assert!(best >= 200, "{} never overlapped {}", hm.name, sm.name);
        }
    }
}

pub fn run() {
    random_triangle_pairs();
    mask_is_modified_set();
    hand_behind_sunglasses();
}
