use occgame::recog::{
    accuracy_at, aggregate_mu_minus_sigma, cosine_similarity, dir_at_far, encode_set, equal_error_rate, fit_pca,
    open_set_scores, rank1_rate, roc_auc, select_threshold, EmbeddingSet, OpenSetScores, TABLE_FARS,
};
use occgame::rng::substream;
use rand::Rng;

const SETS: u64 = 50;
const TOL: f64 = 1e-12;

/// Scores on a coarse grid so ties are common, with a class shift.
fn score_set(seed: u64) -> (Vec<f64>, Vec<bool>) {
    let mut rng = substream(seed, "c8-scores", 0);
    let n = rng.random_range(10..80);
    let grid: f64 = [4.0, 16.0, 1000.0][seed as usize % 3];
    let mut genuine: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
    genuine[0] = true;
    genuine[1] = false;
    let scores = genuine
        .iter()
        .map(|&g| ((rng.random_range(-1.0..1.0) + if g { 0.6 } else { 0.0 }) * grid).round() / grid)
        .collect();
    (scores, genuine)
}

/// `(FMR, FNMR)` at threshold `t` by direct counting.
fn rates_at(scores: &[f64], genuine: &[bool], t: f64) -> (f64, f64) {
    let count = |want: bool, accepted: bool| {
        scores.iter().zip(genuine).filter(|&(&s, &g)| g == want && (s >= t) == accepted).count() as f64
    };
    let (n_gen, n_imp) = (count(true, true) + count(true, false), count(false, true) + count(false, false));
    (count(false, true) / n_imp, count(true, false) / n_gen)
}

fn thresholds(scores: &[f64]) -> Vec<f64> {
    let mut t = scores.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(f64::INFINITY);
    t
}

/// Crossing of the FMR and FNMR polylines over every threshold.
fn eer_oracle(scores: &[f64], genuine: &[bool]) -> f64 {
    let pts: Vec<(f64, f64)> = thresholds(scores).iter().map(|&t| rates_at(scores, genuine, t)).collect();
    for w in pts.windows(2) {
        let ((fa, na), (fb, nb)) = (w[0], w[1]);
        if fa == na {
            return fa;
        }
        if fa > na && fb <= nb {
            let t = (fa - na) / ((fa - na) - (fb - nb));
            return fa + t * (fb - fa);
        }
    }
    panic!("no crossing");
}

/// Probability that a genuine score beats an impostor one, ties counted half.
fn auc_oracle(scores: &[f64], genuine: &[bool]) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0.0);
    for (&sg, _) in scores.iter().zip(genuine).filter(|p| *p.1) {
        for (&si, _) in scores.iter().zip(genuine).filter(|p| !*p.1) {
            pairs += 1.0;
            wins += if sg > si { 1.0 } else if sg == si { 0.5 } else { 0.0 };
        }
    }
    wins / pairs
}

fn best_accuracy_oracle(scores: &[f64], genuine: &[bool]) -> f64 {
    let mut cands = thresholds(scores);
    cands.push(f64::NEG_INFINITY);
    cands
        .iter()
        .map(|&t| scores.iter().zip(genuine).filter(|&(&s, &g)| (s >= t) == g).count() as f64 / scores.len() as f64)
        .fold(0.0, f64::max)
}

fn verification_oracles() {
    for seed in 0..SETS {
        let (s, g) = score_set(seed);
        let eer = equal_error_rate(&s, &g).unwrap();
        assert!((eer - eer_oracle(&s, &g)).abs() <= TOL, "set {seed}: EER");
        assert!((roc_auc(&s, &g).unwrap() - auc_oracle(&s, &g)).abs() <= TOL, "set {seed}: AUC");
        let tau = select_threshold(&s, &g).unwrap();
        assert_eq!(accuracy_at(&s, &g, tau), best_accuracy_oracle(&s, &g), "set {seed}: accuracy");
    }
}

type Labelled = Vec<(String, Vec<f64>)>;

fn open_set_trial(seed: u64) -> (Labelled, Labelled, Labelled) {
    let mut rng = substream(seed, "c8-openset", 0);
    let ids = rng.random_range(3..10);
    let mut vec_near = |c: &[f64], noise: f64| -> Vec<f64> { c.iter().map(|v| v + rng.random_range(-noise..noise)).collect() };
    let centers: Vec<Vec<f64>> = (0..ids + 5).map(|_| vec_near(&[0.0; 6], 1.0)).collect();
    let noise = [0.3, 0.8, 1.5][seed as usize % 3];
    let mut gallery = Vec::new();
    for (i, c) in centers.iter().take(ids).enumerate() {
        for _ in 0..1 + i % 2 {
            gallery.push((format!("id{i}"), vec_near(c, 0.2)));
        }
    }
    let mated = (0..ids * 3).map(|k| (format!("id{}", k % ids), vec_near(&centers[k % ids], noise))).collect();
    let non_mated = (0..12).map(|k| (format!("x{k}"), vec_near(&centers[ids + k % 5], noise))).collect();
    (gallery, mated, non_mated)
}

/// Brute-force DIR at a FAR target: among all thresholds with FAR ≤ target,
/// the lowest one, interpolated towards the next lower threshold.
fn dir_oracle(s: &OpenSetScores, far: f64) -> f64 {
    let far_at = |t: f64| s.non_mated.iter().filter(|&&x| x >= t).count() as f64 / s.non_mated.len() as f64;
    let dir_at = |t: f64| s.mated.iter().filter(|m| m.correct && m.score >= t).count() as f64 / s.mated.len() as f64;
    let all: Vec<f64> = s.non_mated.iter().copied().chain(s.mated.iter().map(|m| m.score)).collect();
    let mut ts = thresholds(&all);
    ts.reverse();
    let k = ts.iter().rposition(|&t| far_at(t) <= far).unwrap();
    let (fa, da) = (far_at(ts[k]), dir_at(ts[k]));
    if fa == far || k + 1 == ts.len() {
        return da;
    }
    let (fb, db) = (far_at(ts[k + 1]), dir_at(ts[k + 1]));
    da + (far - fa) / (fb - fa) * (db - da)
}

/// Best single gallery vector by cosine, ignoring identity grouping.
fn rank1_oracle(gallery: &Labelled, mated: &Labelled) -> f64 {
    let hits = mated
        .iter()
        .filter(|(label, v)| {
            let best = gallery
                .iter()
                .max_by(|a, b| cosine_similarity(&a.1, v).total_cmp(&cosine_similarity(&b.1, v)))
                .unwrap();
            &best.0 == label
        })
        .count();
    hits as f64 / mated.len() as f64
}

fn open_set_oracles() {
    let grid: Vec<f64> = (0..=40).map(|k| 10f64.powf(-3.0 + 3.0 * k as f64 / 40.0)).collect();
    for seed in 0..SETS {
        let (gallery, mated, non_mated) = open_set_trial(seed);
        let s = open_set_scores(&gallery, &mated, &non_mated).unwrap();
        for &far in TABLE_FARS[1..].iter().chain(&grid[..grid.len() - 1]) {
            let got = dir_at_far(&s, far).unwrap();
            assert!((got - dir_oracle(&s, far)).abs() <= TOL, "set {seed}: DIR@{far}");
        }
        let curve: Vec<f64> = grid.iter().map(|&f| dir_at_far(&s, f).unwrap()).collect();
        assert!(curve.windows(2).all(|w| w[0] <= w[1] + TOL), "set {seed}: DIR not monotone in FAR");
        let r1 = rank1_oracle(&gallery, &mated);
        assert_eq!(dir_at_far(&s, 1.0).unwrap(), r1, "set {seed}: DIR@100%");
        assert_eq!(rank1_rate(&s), r1);
    }
}

fn mu_minus_sigma() {
    for seed in 0..SETS {
        let mut rng = substream(seed, "c8-agg", 0);
        let v: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(0.0..1.0)).collect();
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let sd = (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n).sqrt();
        assert!((aggregate_mu_minus_sigma(&v).unwrap() - (m - sd)).abs() <= TOL);
    }
}

/// Flip-average, PCA, signed power and cosine, end to end, for a set
/// scaled by `c`.
fn pipeline_scores(base: &[Vec<f64>], flip: &[Vec<f64>], c: f64) -> Vec<f64> {
    let scale = |vs: &[Vec<f64>]| vs.iter().map(|v| v.iter().map(|x| x * c).collect()).collect::<Vec<Vec<f64>>>();
    let labels: Vec<String> = (0..base.len()).map(|i| format!("p{}", i / 2)).collect();
    let set = EmbeddingSet::new(scale(base), labels.clone()).unwrap();
    let fset = EmbeddingSet::new(scale(flip), labels).unwrap();
    let avg: Vec<Vec<f64>> = set
        .vectors()
        .iter()
        .zip(fset.vectors())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect())
        .collect();
    let pca = fit_pca(&avg[..20], Some(6)).unwrap();
    let enc = encode_set(&set, Some(&fset), &pca, 0.5).unwrap();
    (0..enc.len()).flat_map(|i| (0..i).map(move |j| (i, j))).map(|(i, j)| cosine_similarity(&enc[i], &enc[j])).collect()
}

fn scale_invariance() {
    for seed in 0..10 {
        let mut rng = substream(seed, "c8-scale", 0);
        let mut draw = || (0..30).map(|_| (0..12).map(|_| rng.random_range(-1.0..1.0)).collect()).collect::<Vec<Vec<f64>>>();
        let (base, flip) = (draw(), draw());
        let reference = pipeline_scores(&base, &flip, 1.0);
        for c in [1e-3, 0.37, 7.5, 1e4] {
            let scaled = pipeline_scores(&base, &flip, c);
            let worst = reference.iter().zip(&scaled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            assert!(worst <= 1e-10, "scale {c}: scores move by {worst:e}");
        }
    }
}

pub fn run() {
    verification_oracles();
    open_set_oracles();
    mu_minus_sigma();
    scale_invariance();
}
