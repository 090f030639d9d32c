use occgame::gated::MaskImage;
use occgame::masks::{
    disk_holes, erode_holes, holes_mask, landmark_pool, sample_disks, sample_mask, LandmarkSet, MaskFamily, MaskFamilyParams,
    FRAME, LANDMARK_COUNT,
};
use occgame::rng::substream;
use rand::Rng as _;

const SEEDS: u64 = 100;

fn jittered_landmarks(seed: u64) -> LandmarkSet {
    let mut rng = substream(seed, "c6-landmarks", 0);
    let t = LandmarkSet::template();
    let pts = t.points().iter().map(|&(x, y)| (x + rng.random_range(-4.0..4.0), y + rng.random_range(-4.0..4.0))).collect();
    LandmarkSet::new(pts, vec![true; LANDMARK_COUNT]).unwrap()
}

fn holes(m: &MaskImage) -> Vec<(usize, usize)> {
    (0..m.height()).flat_map(|y| (0..m.width()).map(move |x| (y, x))).filter(|&(y, x)| !m.is_valid(y, x)).collect()
}

fn assert_binary_frame(m: &MaskImage) {
    assert_eq!((m.height(), m.width()), (FRAME, FRAME));
    assert!(m.tensor().data().iter().all(|&v| v == 0.0 || v == 1.0));
}

/// Hole iff the pixel lies in the `side`-pixel square starting `side/2`
/// before the pixel nearest `p`.
fn in_square(p: (f64, f64), side: usize, y: usize, x: usize) -> bool {
    let lo = |c: f64| c.round() as i64 - (side / 2) as i64;
    let inside = |v: usize, lo: i64| (lo..lo + side as i64).contains(&(v as i64));
    inside(x, lo(p.0)) && inside(y, lo(p.1))
}

fn square_at_some_landmark(m: &MaskImage, lms: &LandmarkSet, side: usize) -> bool {
    lms.points().iter().any(|&p| {
        (0..FRAME).all(|y| (0..FRAME).all(|x| m.is_valid(y, x) != in_square(p, side, y, x)))
    })
}

fn draw(family: MaskFamily, seed: u64, params: &MaskFamilyParams) -> (LandmarkSet, MaskImage) {
    let lms = jittered_landmarks(seed);
    let mut rng = substream(seed, "c6-mask", family as u64);
    let (f, m) = sample_mask(&lms, &mut rng, &params.clone().only(family)).unwrap();
    assert_eq!(f, family);
    assert_binary_frame(&m);
    (lms, m)
}

fn components(m: &MaskImage) -> usize {
    let mut seen = vec![false; FRAME * FRAME];
    let mut count = 0;
    for (y, x) in holes(m) {
        if seen[y * FRAME + x] {
            continue;
        }
        count += 1;
        let mut stack = vec![(y, x)];
        seen[y * FRAME + x] = true;
        while let Some((cy, cx)) = stack.pop() {
            let nbrs = [(cy.wrapping_sub(1), cx), (cy + 1, cx), (cy, cx.wrapping_sub(1)), (cy, cx + 1)];
            for (ny, nx) in nbrs {
                if ny < FRAME && nx < FRAME && !m.is_valid(ny, nx) && !seen[ny * FRAME + nx] {
                    seen[ny * FRAME + nx] = true;
                    stack.push((ny, nx));
                }
            }
        }
    }
    count
}

pub fn run() {
    let params = MaskFamilyParams::default();
    let side = params.square_side;
    assert_eq!(side, 50);
    for seed in 0..SEEDS {
        let (lms, m) = draw(MaskFamily::SquareCrop, seed, &params);
        assert!(square_at_some_landmark(&m, &lms, side), "seed {seed}: square not at a landmark");

        let (lms, m) = draw(MaskFamily::LandmarkPoly, seed, &params);
        let hs = holes(&m);
        let margin = params.poly_margin.max;
        let fits = landmark_pool().iter().any(|group| {
            let pts: Vec<(f64, f64)> = group.iter().map(|&i| lms.point(i)).collect();
            let (x0, x1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.0), b.max(p.0)));
            let (y0, y1) = pts.iter().fold((f64::MAX, f64::MIN), |(a, b), p| (a.min(p.1), b.max(p.1)));
            let covers = pts.iter().all(|p| !m.is_valid(p.1.round() as usize, p.0.round() as usize));
            let bounded = hs.iter().all(|&(y, x)| {
                let (x, y) = (x as f64, y as f64);
                x >= x0 - margin && x <= x1 + margin && y >= y0 - margin && y <= y1 + margin
            });
            covers && bounded
        });
        assert!(fits, "seed {seed}: hull hole does not match any landmark group");

        let (_, m) = draw(MaskFamily::RandomWalk, seed, &params);
        let f = m.hole_fraction();
        assert!(params.walk.hole_fraction.min <= f && f <= params.walk.hole_fraction.max, "walk fraction {f}");
        assert!(components(&m) <= params.walk.strokes.max, "walk has more pieces than strokes");

        let (_, m) = draw(MaskFamily::Boundary, seed, &params);
        let n = m.hole_count();
        assert_eq!(n % FRAME, 0, "band is not whole rows or columns");
        let depth = n / FRAME;
        let lo = (params.boundary_fraction.min * FRAME as f64).round() as usize;
        let hi = (params.boundary_fraction.max * FRAME as f64).round() as usize;
        assert!((lo..=hi).contains(&depth), "band depth {depth}");
        let edge_dist: [fn(usize, usize) -> usize; 4] =
            [|y, _| y, |y, _| FRAME - 1 - y, |_, x| x, |_, x| FRAME - 1 - x];
        assert!(
            edge_dist.iter().any(|d| holes(&m).iter().all(|&(y, x)| d(y, x) < depth)),
            "seed {seed}: holes do not form an edge band"
        );

        draw(MaskFamily::Holes, seed, &params);
        let mut rng = substream(seed, "c6-disks", 0);
        let m = holes_mask(&mut rng.clone(), &params);
        let disks = sample_disks(&mut rng, &params);
        assert!((params.hole_count.min..=params.hole_count.max).contains(&disks.len()));
        let union = MaskImage::from_fn(FRAME, FRAME, |y, x| {
            !disks.iter().any(|&((cx, cy), r)| (x as f64 - cx).hypot(y as f64 - cy) <= r)
        });
        assert_eq!(m, union, "seed {seed}: hole mask is not the union of its disks");
        for &((cx, cy), r) in &disks {
            let centered = ((FRAME / 2) as f64 + cx.fract(), (FRAME / 2) as f64 + cy.fract());
            let area = disk_holes(&[(centered, r)], FRAME).hole_count() as f64;
            let ideal = std::f64::consts::PI * r * r;
            assert!((area / ideal - 1.0).abs() <= 0.05, "disk r={r:.2}: {area} px vs {ideal:.1}");
        }

        let (lms, m) = draw(MaskFamily::ErodedCrop, seed, &params);
        assert!(m.hole_count() > 0 && m.hole_count() < side * side);
        let inside_some_square = lms.points().iter().any(|&p| holes(&m).iter().all(|&(y, x)| in_square(p, side, y, x)));
        assert!(inside_some_square, "seed {seed}: eroded crop escapes its square");
        let crop = MaskImage::from_fn(FRAME, FRAME, |y, x| !in_square(lms.point(seed as usize % LANDMARK_COUNT), side, y, x));
        let mut prev = crop.clone();
        for it in 1..=8 {
            let next = erode_holes(&crop, it);
            assert!(holes(&next).iter().all(|&(y, x)| !prev.is_valid(y, x)), "erosion grew the hole");
            assert!(next.hole_count() < prev.hole_count() || prev.hole_count() == 0);
            prev = next;
        }
    }
}
