//! Procedural identity faces and a fixed random-projection encoder, for
//! exercising the pipeline without real imagery.

use image::RgbImage;
use rand::Rng;

use crate::masks::{LandmarkSet, FRAME, LEFT_EYE, NOSE_TIP, OUTER_MOUTH, RIGHT_EYE};
use crate::rng::substream;

/// Identity-level appearance.
#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub skin: [f64; 3],
    pub hair: [f64; 3],
    pub iris: [f64; 3],
    pub lips: [f64; 3],
    pub hairline: f64,
    pub eye_radius: f64,
    pub eye_offset: f64,
    pub brow_thickness: f64,
    pub mouth_width: f64,
    pub face_width: f64,
    /// Low-frequency cheek pattern: (fx, fy, phase, amplitude).
    pub pattern: [f64; 4],
}

impl Identity {
    pub fn sample(seed: u64, id: u64) -> Self {
        let mut r = substream(seed, "toy-identity", id);
        let mut rgb = |lo: [f64; 3], hi: [f64; 3]| -> [f64; 3] { std::array::from_fn(|k| r.random_range(lo[k]..hi[k])) };
        let skin = rgb([140.0, 90.0, 60.0], [240.0, 200.0, 180.0]);
        let hair = rgb([10.0, 10.0, 10.0], [200.0, 160.0, 110.0]);
        let iris = rgb([20.0, 20.0, 20.0], [120.0, 160.0, 200.0]);
        let lips = rgb([120.0, 40.0, 40.0], [220.0, 120.0, 120.0]);
        Identity {
            skin,
            hair,
            iris,
            lips,
            hairline: r.random_range(16.0..32.0),
            eye_radius: r.random_range(3.5..6.5),
            eye_offset: r.random_range(-4.0..4.0),
            brow_thickness: r.random_range(1.5..4.0),
            mouth_width: r.random_range(11.0..21.0),
            face_width: r.random_range(40.0..50.0),
            pattern: [
                r.random_range(0.03..0.12),
                r.random_range(0.03..0.12),
                r.random_range(0.0..std::f64::consts::TAU),
                r.random_range(10.0..30.0),
            ],
        }
    }
}

/// Image-level nuisance: brightness, shift and per-pixel noise.
#[derive(Clone, Debug, PartialEq)]
pub struct Capture {
    pub brightness: f64,
    pub dx: f64,
    pub dy: f64,
    pub noise: f64,
    pub noise_seed: u64,
}

impl Capture {
    pub fn sample(seed: u64, id: u64, index: u64) -> Self {
        let mut r = substream(seed, "toy-capture", id * 1_000_003 + index);
        Capture {
            brightness: r.random_range(0.85..1.15),
            dx: r.random_range(-2.0..2.0),
            dy: r.random_range(-2.0..2.0),
            noise: 8.0,
            noise_seed: r.random(),
        }
    }
}

fn blend(px: &mut [f64; 3], c: [f64; 3], a: f64) {
    for k in 0..3 {
        px[k] = px[k] * (1.0 - a) + c[k] * a;
    }
}

/// Soft coverage of a signed distance (negative inside), one-pixel ramp.
fn cover(d: f64) -> f64 {
    (0.5 - d).clamp(0.0, 1.0)
}

/// Renders a `FRAME`×`FRAME` face laid out on the landmark template.
pub fn render_face(id: &Identity, cap: &Capture) -> RgbImage {
    let lm = LandmarkSet::template();
    let eye_r = lm.centroid(RIGHT_EYE);
    let eye_l = lm.centroid(LEFT_EYE);
    let nose = lm.point(NOSE_TIP);
    let mouth = lm.centroid(OUTER_MOUTH);
    let eyes = [
        (eye_r.0 - id.eye_offset, eye_r.1),
        (eye_l.0 + id.eye_offset, eye_l.1),
    ];
    let mut noise = substream(cap.noise_seed, "toy-noise", 0);
    RgbImage::from_fn(FRAME as u32, FRAME as u32, |xi, yi| {
        let x = xi as f64 - cap.dx;
        let y = yi as f64 - cap.dy;
        let mut px = [90.0, 100.0, 110.0];
        let face_d = ((x - 64.0) / id.face_width).powi(2) + ((y - 66.0) / 56.0).powi(2);
        let face_a = cover((face_d.sqrt() - 1.0) * 45.0);
        let shade = id.pattern[3] * (id.pattern[0] * x + id.pattern[1] * y + id.pattern[2]).sin();
        blend(&mut px, id.skin.map(|c| c + shade), face_a);
        if y < id.hairline + 0.15 * (x - 64.0).abs() && face_d < 1.3 {
            blend(&mut px, id.hair, cover(y - id.hairline - 0.15 * (x - 64.0).abs()).max(0.0));
        }
        for (ex, ey) in eyes {
            let brow = ((y - (ey - 10.0)).abs() - id.brow_thickness).max((x - ex).abs() - 10.0);
            blend(&mut px, id.hair, cover(brow));
            let d = ((x - ex).powi(2) + ((y - ey) * 1.6).powi(2)).sqrt();
            blend(&mut px, [245.0, 245.0, 240.0], cover(d - 8.5));
            blend(&mut px, id.iris, cover(((x - ex).powi(2) + (y - ey).powi(2)).sqrt() - id.eye_radius));
            blend(&mut px, [10.0, 10.0, 10.0], cover(((x - ex).powi(2) + (y - ey).powi(2)).sqrt() - 1.5));
        }
        let nose_d = ((x - nose.0).abs() - 3.0).max((y - (nose.1 - 10.0)).abs() - 10.0);
        blend(&mut px, id.skin.map(|c| c * 0.8), cover(nose_d) * 0.7);
        let mouth_d = (((x - mouth.0) / id.mouth_width).powi(2) + ((y - mouth.1) / 5.0).powi(2)).sqrt();
        blend(&mut px, id.lips, cover((mouth_d - 1.0) * 5.0));
        std::array::from_fn::<u8, 3, _>(|k| {
            (px[k] * cap.brightness + noise.random_range(-cap.noise..=cap.noise))
                .round()
                .clamp(0.0, 255.0) as u8
        })
        .into()
    })
}

/// `label_index` file stem of image `index` (1-based) of identity `id`.
pub fn face_stem(id: u64, index: u64) -> String {
    format!("s{id:04}_{index:04}")
}

/// Splits a `label_index` stem.
pub fn parse_stem(stem: &str) -> Option<(String, usize)> {
    let (label, idx) = stem.rsplit_once('_')?;
    Some((label.to_string(), idx.parse().ok()?))
}

/// Block-average pooling followed by a fixed random projection.
#[derive(Clone, Debug)]
pub struct ToyEncoder {
    pub block: usize,
    pub projection: Vec<Vec<f64>>,
}

impl ToyEncoder {
    pub const INPUT: usize = FRAME;

    pub fn new(seed: u64, dim: usize, block: usize) -> Self {
        let cells = (Self::INPUT / block).pow(2) * 3;
        let mut r = substream(seed, "toy-encoder", 0);
        let projection = (0..dim)
            .map(|_| (0..cells).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        ToyEncoder { block, projection }
    }

    pub fn pooled(&self, img: &RgbImage) -> Vec<f64> {
        let img = crate::imageio::resize_rgb(img, Self::INPUT, Self::INPUT);
        let g = Self::INPUT / self.block;
        let mut out = vec![0.0; g * g * 3];
        for (x, y, p) in img.enumerate_pixels() {
            let cell = (y as usize / self.block) * g + x as usize / self.block;
            for k in 0..3 {
                out[cell * 3 + k] += p[k] as f64 / 255.0 - 0.5;
            }
        }
        let n = (self.block * self.block) as f64;
        out.iter_mut().for_each(|v| *v /= n);
        out
    }

    pub fn embed(&self, img: &RgbImage) -> Vec<f64> {
        let f = self.pooled(img);
        self.projection
            .iter()
            .map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>())
            .collect()
    }
}
