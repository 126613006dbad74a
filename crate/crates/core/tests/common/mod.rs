//! Independent oracles shared by the oracle suite and the acceptance run.
//! Each check draws its own seeded instances and returns how many it
//! verified, or the first disagreement.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use grfface::admm::{run_admm, train_distributed, AdmmConfig, Topology, TrainOutcome};
use grfface::evalharness::{roc, tpr_at_fpr};
use grfface::pairengine::{svm_objective, train_svm, SampleSet};
use grfface::grfbank::{channel_half_width, compute_maps, compute_maps_naive, enumerate_full_bank, ReceptiveMaps};
use grfface::imgcore::{convolve, BorderPolicy, ImagePlane, Kernel2D};
use grfface::lda::{accumulate_scatter, accumulate_scatter_all, fit_projection};
use grfface::pairs::all_pairs;
use grfface::patchpool::PatchSpec;
use grfface::pooling::{build_tables, channel_meta_feature, pool_patch, t2_cell, PoolingKind};

pub type Check = Result<usize, String>;

pub const INSTANCES: u64 = 100;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_plane(r: &mut ChaCha8Rng, w: usize, h: usize) -> ImagePlane {
    ImagePlane::from_fn(w, h, |_, _| r.random_range(-100.0..100.0))
}

fn close(a: f64, b: f64, scale: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * scale.max(1.0)
}

fn border_index(i: isize, n: usize, border: BorderPolicy) -> usize {
    let n = n as isize;
    let j = match border {
        BorderPolicy::Replicate => i.max(0).min(n - 1),
        BorderPolicy::Reflect => {
            if i < 0 {
                (-i - 1).min(n - 1)
            } else if i >= n {
                (2 * n - 1 - i).max(0)
            } else {
                i
            }
        }
    };
    j as usize
}

/// `sum K(dx,dy) I(x-dx, y-dy)` by the definition.
fn naive_convolution(img: &ImagePlane, k: &Kernel2D, border: BorderPolicy) -> ImagePlane {
    let r = k.half_width() as isize;
    ImagePlane::from_fn(img.width(), img.height(), |x, y| {
        let mut acc = 0.0;
        for dy in -r..=r {
            for dx in -r..=r {
                let sx = border_index(x as isize - dx, img.width(), border);
                let sy = border_index(y as isize - dy, img.height(), border);
                acc += k.tap(dx, dy) * img.get(sx, sy);
            }
        }
        acc
    })
}

/// Separable path, direct path and the definition agree within 1e-10 of
/// the response scale.
pub fn convolution() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let mut r = rng(seed);
        let (w, h) = (r.random_range(9..40), r.random_range(9..40));
        let img = random_plane(&mut r, w, h);
        let len = |r: &mut ChaCha8Rng| 2 * r.random_range(0..5usize) + 1;
        let (lh, lv) = (len(&mut r), len(&mut r));
        let hf: Vec<f64> = (0..lh).map(|_| r.random_range(-1.0..1.0)).collect();
        let vf: Vec<f64> = (0..lv).map(|_| r.random_range(-1.0..1.0)).collect();
        let k = Kernel2D::separable(hf, vf).map_err(|e| e.to_string())?;
        let border = if seed % 2 == 0 { BorderPolicy::Replicate } else { BorderPolicy::Reflect };
        let sep = convolve(&img, &k, border).map_err(|e| e.to_string())?;
        let direct = convolve(&img, &k.without_factors(), border).map_err(|e| e.to_string())?;
        let oracle = naive_convolution(&img, &k, border);
        let scale = k.abs_sum() * 100.0;
        for i in 0..oracle.values().len() {
            let o = oracle.values()[i];
            if !close(sep.values()[i], o, scale, 1e-10) || !close(direct.values()[i], o, scale, 1e-10) {
                return Err(format!(
                    "seed {seed} pixel {i}: separable {} direct {} oracle {o}",
                    sep.values()[i],
                    direct.values()[i]
                ));
            }
        }
        n += 1;
    }
    Ok(n)
}

/// Shared smoothing then per-channel stencils against one composed kernel
/// per channel, on random channel subsets. Clamped borders make the two
/// orders differ near the edge, so only pixels at least the composite half
/// width inside are compared.
pub fn bank_maps() -> Check {
    let mut n = 0;
    for seed in 0..20 {
        let mut r = rng(500 + seed);
        let face = ImagePlane::from_fn(48, 48, |_, _| r.random_range(0.0..255.0));
        let mut bank = enumerate_full_bank();
        let picks: Vec<usize> = (0..4).map(|_| r.random_range(0..bank.len())).collect();
        bank.activate_only(&picks).map_err(|e| e.to_string())?;
        let fast = compute_maps(&face, &bank).map_err(|e| e.to_string())?;
        let slow = compute_maps_naive(&face, &bank).map_err(|e| e.to_string())?;
        for ((a, b), &ch) in fast.planes.iter().zip(&slow.planes).zip(&fast.channels) {
            let r = channel_half_width(&bank.specs()[ch]);
            let scale = b.values().iter().map(|v| v.abs()).fold(0.0, f64::max);
            for y in r..48 - r {
                for x in r..48 - r {
                    if !close(a.get(x, y), b.get(x, y), scale, 1e-10) {
                        return Err(format!("seed {seed} channel {ch} at ({x},{y}): {} vs {}", a.get(x, y), b.get(x, y)));
                    }
                }
            }
        }
        n += 1;
    }
    Ok(n)
}

/// Near-equal spans with the remainder on the trailing spans.
fn spans(len: usize) -> Vec<(usize, usize)> {
    let (base, rem) = (len / 4, len % 4);
    let mut at = 0;
    (0..4)
        .map(|i| {
            let s = base + usize::from(i >= 4 - rem);
            at += s;
            (at - s, at)
        })
        .collect()
}

/// Per-pixel statistics of one cell `[x0,x1) x [y0,y1)`.
fn naive_cell(map: &ImagePlane, x0: usize, x1: usize, y0: usize, y1: usize, kind: PoolingKind) -> Vec<f64> {
    let mut v = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            v.push((x, y, map.get(x, y)));
        }
    }
    let n = v.len() as f64;
    let mean = v.iter().map(|t| t.2).sum::<f64>() / n;
    match kind {
        PoolingKind::Max => vec![v.iter().map(|t| t.2).fold(f64::NEG_INFINITY, f64::max)],
        PoolingKind::Mu => vec![mean],
        PoolingKind::Sigma => vec![(v.iter().map(|t| (t.2 - mean).powi(2)).sum::<f64>() / n).sqrt()],
        PoolingKind::Moment => {
            let xc = v.iter().map(|t| t.0 as f64).sum::<f64>() / n;
            let yc = v.iter().map(|t| t.1 as f64).sum::<f64>() / n;
            vec![v.iter().map(|t| (t.0 as f64 - xc) * (t.1 as f64 - yc) * t.2).sum()]
        }
        PoolingKind::T2 => vec![
            v.iter().map(|t| t.2.abs() + t.2).sum::<f64>() / n,
            v.iter().map(|t| t.2.abs() - t.2).sum::<f64>() / n,
        ],
    }
}

/// Integral-image pooling against per-pixel loops, every statistic, within
/// 1e-9 of the magnitude scale of the cell.
pub fn pooling() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let mut r = rng(1000 + seed);
        let (w, h) = (r.random_range(16..60), r.random_range(16..60));
        let planes: Vec<ImagePlane> = (0..r.random_range(1..4)).map(|_| random_plane(&mut r, w, h)).collect();
        let maps = ReceptiveMaps {
            source: String::new(),
            channels: (0..planes.len()).collect(),
            planes,
        };
        let (pw, ph) = (r.random_range(4..=w), r.random_range(4..=h));
        let patch = PatchSpec {
            x: r.random_range(0..=w - pw),
            y: r.random_range(0..=h - ph),
            w: pw,
            h: ph,
        };
        let tables = build_tables(&maps, &PoolingKind::ALL);
        for kind in PoolingKind::ALL {
            let got = pool_patch(&maps, &patch, kind, &tables).map_err(|e| e.to_string())?;
            let mut want = Vec::new();
            let mut scale = Vec::new();
            for plane in &maps.planes {
                for &(y0, y1) in &spans(ph) {
                    for &(x0, x1) in &spans(pw) {
                        let (ax, ay) = (patch.x + x0, patch.y + y0);
                        let (bx, by) = (patch.x + x1, patch.y + y1);
                        let vals = naive_cell(plane, ax, bx, ay, by, kind);
                        let s = match kind {
                            PoolingKind::Moment => {
                                let reach = ((bx - ax) * (by - ay)) as f64;
                                100.0 * reach * reach
                            }
                            _ => 100.0,
                        };
                        scale.extend(std::iter::repeat_n(s, vals.len()));
                        want.extend(vals);
                    }
                }
            }
            if got.len() != want.len() {
                return Err(format!("seed {seed} {kind}: {} values, oracle {}", got.len(), want.len()));
            }
            for i in 0..want.len() {
                if !close(got[i], want[i], scale[i], 1e-9) {
                    return Err(format!("seed {seed} {kind} value {i}: {} vs oracle {}", got[i], want[i]));
                }
            }
        }
        n += 1;
    }
    Ok(n)
}

/// T2 identities: `pos + neg = 2 sum|v|`, `pos - neg = 2 sum v`, both
/// non-negative; the meta feature's top cells are the sums of their
/// sub-cells and its total reproduces the map sums.
pub fn t2_identities() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let mut r = rng(2000 + seed);
        let v: Vec<f64> = (0..r.random_range(1..50)).map(|_| r.random_range(-10.0..10.0)).collect();
        let (pos, neg) = t2_cell(&v).map_err(|e| e.to_string())?;
        let (sa, s) = (v.iter().map(|x| x.abs()).sum::<f64>(), v.iter().sum::<f64>());
        let scale = 2.0 * sa;
        if pos < 0.0 || neg < 0.0 || !close(pos + neg, 2.0 * sa, scale, 1e-12) || !close(pos - neg, 2.0 * s, scale, 1e-12) {
            return Err(format!("seed {seed}: t2 ({pos}, {neg}) for sum {s}, abs sum {sa}"));
        }
        let (w, h) = (r.random_range(16..70), r.random_range(16..70));
        let map = random_plane(&mut r, w, h);
        let meta = channel_meta_feature(&map).map_err(|e| e.to_string())?;
        if meta.len() != 544 {
            return Err(format!("seed {seed}: meta feature of {} values", meta.len()));
        }
        let total_abs: f64 = map.values().iter().map(|x| x.abs()).sum();
        let total: f64 = map.values().iter().sum();
        let sc = 2.0 * total_abs;
        for cell in 0..16 {
            let sub = &meta[32 + cell * 32..32 + cell * 32 + 32];
            let (p, q) = (sub.iter().step_by(2).sum::<f64>(), sub.iter().skip(1).step_by(2).sum::<f64>());
            if !close(meta[2 * cell], p, sc, 1e-12) || !close(meta[2 * cell + 1], q, sc, 1e-12) {
                return Err(format!("seed {seed} cell {cell}: top level differs from its sub-cells"));
            }
        }
        let (p, q) = (meta[..32].iter().step_by(2).sum::<f64>(), meta[..32].iter().skip(1).step_by(2).sum::<f64>());
        if !close(p + q, 2.0 * total_abs, sc, 1e-12) || !close(p - q, 2.0 * total, sc, 1e-12) {
            return Err(format!("seed {seed}: meta totals disagree with the map"));
        }
        n += 1;
    }
    Ok(n)
}

struct ScatterCase {
    d: usize,
    descs: Vec<Vec<f64>>,
    subjects: Vec<u32>,
}

fn scatter_case(seed: u64, min_faces_per_dim: usize) -> ScatterCase {
    let mut r = rng(seed);
    let d = r.random_range(2..7);
    let subjects_n = r.random_range(2..6);
    let per = r.random_range(2..5).max((min_faces_per_dim * d).div_ceil(subjects_n));
    let mut subjects = Vec::new();
    for s in 0..subjects_n as u32 {
        subjects.extend(std::iter::repeat_n(s, per));
    }
    let centres: Vec<Vec<f64>> = (0..subjects_n).map(|_| (0..d).map(|_| r.random_range(-3.0..3.0)).collect()).collect();
    let descs = subjects
        .iter()
        .map(|&s| centres[s as usize].iter().map(|c| c + r.random_range(-1.0..1.0)).collect())
        .collect();
    ScatterCase { d, descs, subjects }
}

/// `(sw, sb)` by the double loop over every pair.
fn naive_scatter(c: &ScatterCase) -> (Vec<f64>, Vec<f64>) {
    let d = c.d;
    let (mut sw, mut sb) = (vec![0.0; d * d], vec![0.0; d * d]);
    for a in 0..c.descs.len() {
        for b in a + 1..c.descs.len() {
            let m = if c.subjects[a] == c.subjects[b] { &mut sw } else { &mut sb };
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] += (c.descs[a][i] - c.descs[b][i]) * (c.descs[a][j] - c.descs[b][j]);
                }
            }
        }
    }
    (sw, sb)
}

/// Closed-form all-pairs and explicit-pair accumulation against the naive
/// double loop, within 1e-12 of the entry scale.
pub fn scatter() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let c = scatter_case(3000 + seed, 0);
        let (sw, sb) = naive_scatter(&c);
        let closed = accumulate_scatter_all(&c.descs, &c.subjects).map_err(|e| e.to_string())?;
        let pairs: Vec<_> = all_pairs(&c.subjects).collect();
        let listed = accumulate_scatter(&c.descs, &pairs).map_err(|e| e.to_string())?;
        let scale = sw.iter().chain(&sb).map(|v| v.abs()).fold(0.0, f64::max);
        for got in [&closed, &listed] {
            for i in 0..sw.len() {
                if !close(got.sw[i], sw[i], scale, 1e-12) || !close(got.sb[i], sb[i], scale, 1e-12) {
                    return Err(format!("seed {seed} entry {i}: scatter differs from the double loop"));
                }
            }
        }
        let intra = pairs.iter().filter(|p| p.same).count() as u64;
        if closed.intra_pairs != intra || closed.extra_pairs != pairs.len() as u64 - intra {
            return Err(format!("seed {seed}: pair counts"));
        }
        n += 1;
    }
    Ok(n)
}

fn quad(m: &[f64], d: usize, w: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += w[i] * m[i * d + j] * w[j];
        }
    }
    s
}

/// The leading projection column maximises the Rayleigh quotient: no
/// direction among 10,000 random ones does better (1e-9 relative), and its
/// quotient equals the top of the whitened spectrum.
pub fn rayleigh() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let c = scatter_case(4000 + seed, 3);
        let s = accumulate_scatter_all(&c.descs, &c.subjects).map_err(|e| e.to_string())?;
        let e = fit_projection(&s, 1.0).map_err(|e| e.to_string())?;
        if e.sw_degenerate {
            return Err(format!("seed {seed}: within-class scatter unexpectedly degenerate"));
        }
        let j = |w: &[f64]| quad(&s.sb, c.d, w) / quad(&s.sw, c.d, w);
        let best = j(e.column(0));
        if !close(best, e.spectrum[0], best.abs(), 1e-9) {
            return Err(format!("seed {seed}: J(w1) = {best}, top eigenvalue {}", e.spectrum[0]));
        }
        let mut r = rng(5000 + seed);
        for k in 0..10_000 {
            let w: Vec<f64> = (0..c.d).map(|_| r.random_range(-1.0..1.0)).collect();
            let jr = j(&w);
            if jr > best * (1.0 + 1e-9) {
                return Err(format!("seed {seed} direction {k}: J = {jr} beats J(w1) = {best}"));
            }
        }
        n += 1;
    }
    Ok(n)
}

/// Random scored pairs with ties.
pub fn scored(seed: u64) -> Vec<(f64, bool)> {
    let mut r = rng(seed);
    let len = r.random_range(2..300);
    let levels = r.random_range(2..40) as f64;
    let mut v: Vec<(f64, bool)> = (0..len)
        .map(|_| ((r.random_range(0.0..1.0) * levels).floor() / levels, r.random_bool(0.3)))
        .collect();
    v[0].1 = true;
    v[1].1 = false;
    v
}

/// Every operating point by direct counting, thresholds descending, the
/// accept-nothing point first.
fn scan(scores: &[(f64, bool)]) -> Vec<(f64, f64)> {
    let pos = scores.iter().filter(|s| s.1).count() as f64;
    let neg = scores.len() as f64 - pos;
    let mut ts: Vec<f64> = scores.iter().map(|s| s.0).collect();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let mut out = vec![(0.0, 0.0)];
    for t in ts {
        let tp = scores.iter().filter(|s| s.1 && s.0 >= t).count() as f64;
        let fp = scores.iter().filter(|s| !s.1 && s.0 >= t).count() as f64;
        out.push((fp / neg, tp / pos));
    }
    out
}

/// ROC points, TPR@FPR and AUC against exhaustive scans and the pairwise
/// AUC count, within 1e-10.
pub fn roc_scan() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let s = scored(6000 + seed);
        let curve = roc(&s).map_err(|e| e.to_string())?;
        let pts = scan(&s);
        let got = curve.points();
        if got.len() != pts.len() || got.iter().zip(&pts).any(|(a, b)| !close(a.0, b.0, 1.0, 1e-12) || !close(a.1, b.1, 1.0, 1e-12)) {
            return Err(format!("seed {seed}: curve points differ from the scan"));
        }
        for f in [0.0, 0.001, 0.01, 0.05, 0.1, 0.3, 0.5, 1.0] {
            let want = pts.iter().filter(|p| p.0 <= f).map(|p| p.1).fold(0.0, f64::max);
            if !close(tpr_at_fpr(&curve, f), want, 1.0, 1e-12) {
                return Err(format!("seed {seed} fpr {f}: tpr {} vs scan {want}", tpr_at_fpr(&curve, f)));
            }
        }
        let (p, q): (Vec<f64>, Vec<f64>) = (
            s.iter().filter(|x| x.1).map(|x| x.0).collect(),
            s.iter().filter(|x| !x.1).map(|x| x.0).collect(),
        );
        let mut wins = 0.0;
        for a in &p {
            for b in &q {
                wins += if a > b { 1.0 } else if a == b { 0.5 } else { 0.0 };
            }
        }
        let auc = wins / (p.len() * q.len()) as f64;
        if !close(curve.auc(), auc, 1.0, 1e-10) {
            return Err(format!("seed {seed}: auc {} vs pairwise {auc}", curve.auc()));
        }
        n += 1;
    }
    Ok(n)
}

/// Dense Newton on `1/2 |w|^2 + C sum max(1 - y w.x, 0)^2` with the full
/// Hessian factored by Cholesky and a halving line search.
pub fn newton_oracle(samples: &SampleSet, c: f64) -> Vec<f64> {
    let d = samples.dim();
    let mut w = vec![0.0; d];
    let f = |w: &[f64]| svm_objective(w, samples, c);
    for _ in 0..100 {
        let mut g = w.clone();
        let mut h = vec![0.0; d * d];
        for i in 0..d {
            h[i * d + i] = 1.0;
        }
        for n in 0..samples.len() {
            let (x, y) = (samples.row(n), samples.label(n));
            let m = 1.0 - y * x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
            if m > 0.0 {
                for i in 0..d {
                    g[i] -= 2.0 * c * y * m * x[i];
                    for j in 0..d {
                        h[i * d + j] += 2.0 * c * x[i] * x[j];
                    }
                }
            }
        }
        if g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-11 {
            break;
        }
        let step = cholesky_solve(&h, &g, d);
        let f0 = f(&w);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = w.iter().zip(&step).map(|(a, b)| a - t * b).collect();
            if f(&cand) <= f0 || t < 1e-12 {
                w = cand;
                break;
            }
            t *= 0.5;
        }
    }
    w
}

fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Vec<f64> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let s: f64 = a[i * d + j] - (0..j).map(|k| l[i * d + k] * l[j * d + k]).sum::<f64>();
            l[i * d + j] = if i == j { s.sqrt() } else { s / l[j * d + j] };
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        y[i] = (b[i] - (0..i).map(|k| l[i * d + k] * y[k]).sum::<f64>()) / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        x[i] = (y[i] - (i + 1..d).map(|k| l[k * d + i] * x[k]).sum::<f64>()) / l[i * d + i];
    }
    x
}

/// Two overlapping Gaussian classes along a random direction.
pub fn svm_samples(seed: u64, n: usize, dim: usize) -> SampleSet {
    use rand_distr::{Distribution, StandardNormal};
    let mut r = rng(seed);
    let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut r)).collect();
    let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut s = SampleSet::new(dim);
    for i in 0..n {
        let y = if i % 3 == 0 { 1.0 } else { -1.0 };
        let x: Vec<f64> = (0..dim)
            .map(|k| { let v: f64 = StandardNormal.sample(&mut r); v } + 1.5 * y * dir[k] / norm)
            .collect();
        s.push(&x, y).expect("dimension");
    }
    s
}

/// The Newton-CG trainer reaches the dense oracle's objective (1e-9
/// relative) on small random problems.
pub fn svm_newton() -> Check {
    let mut n = 0;
    for seed in 0..INSTANCES {
        let mut r = rng(7000 + seed);
        let (len, dim) = (r.random_range(10..80), r.random_range(1..12));
        let c = [0.01, 0.1, 1.0, 10.0][r.random_range(0..4)];
        let s = svm_samples(7500 + seed, len, dim);
        let want = svm_objective(&newton_oracle(&s, c), &s, c);
        let got = svm_objective(&train_svm(&s, c).map_err(|e| e.to_string())?, &s, c);
        if got > want * (1.0 + 1e-9) + 1e-12 {
            return Err(format!("seed {seed}: objective {got} above oracle {want}"));
        }
        n += 1;
    }
    Ok(n)
}

/// Consecutive, equal-size blocks of `samples`.
pub fn split_blocks(samples: &SampleSet, m: usize) -> Vec<SampleSet> {
    let per = samples.len() / m;
    (0..m)
        .map(|j| samples.subset(&(j * per..if j + 1 == m { samples.len() } else { (j + 1) * per }).collect::<Vec<_>>()))
        .collect()
}

pub struct ConsensusRun {
    pub oracle: f64,
    pub objective: f64,
    pub outcome: TrainOutcome,
}

impl ConsensusRun {
    pub fn relative_gap(&self) -> f64 {
        (self.objective - self.oracle).abs() / self.oracle
    }
}

/// ADMM on `m` blocks of `samples`; the consensus `z` is scored by the
/// whole-set objective and compared with the dense oracle.
pub fn consensus(samples: &SampleSet, m: usize, config: &AdmmConfig, topology: Option<Topology>) -> Result<ConsensusRun, String> {
    let blocks = split_blocks(samples, m);
    let config = AdmmConfig { blocks: m, ..config.clone() };
    let outcome = match topology {
        None => run_admm(&blocks, &config, &mut |_| {}),
        Some(t) => train_distributed(&blocks, &config, t, &mut |_| {}),
    }
    .map_err(|e| e.to_string())?;
    Ok(ConsensusRun {
        oracle: svm_objective(&newton_oracle(samples, config.c), samples, config.c),
        objective: svm_objective(outcome.z(), samples, config.c),
        outcome,
    })
}

/// Consensus ADMM over 1 to 4 blocks lands within 1e-3 of the dense
/// oracle's objective on small problems.
pub fn admm_small() -> Check {
    let mut n = 0;
    for seed in 0..20 {
        let s = svm_samples(8000 + seed, 120, 6);
        let config = AdmmConfig {
            c: 0.1,
            eps_abs: 1e-6,
            eps_rel: 1e-5,
            max_rounds: 300,
            ..AdmmConfig::default()
        };
        for m in 1..=4 {
            let run = consensus(&s, m, &config, None)?;
            if run.relative_gap() > 1e-3 {
                return Err(format!("seed {seed} m {m}: objective {} oracle {}", run.objective, run.oracle));
            }
            n += 1;
        }
    }
    Ok(n)
}

/// All oracle families in order, with their names.
pub fn all() -> Vec<(&'static str, fn() -> Check)> {
    vec![
        ("separable vs direct convolution", convolution as fn() -> Check),
        ("bank maps vs naive filtering", bank_maps),
        ("integral pooling vs per-pixel loops", pooling),
        ("T2 identities", t2_identities),
        ("scatter vs double loop", scatter),
        ("Rayleigh dominance over 10,000 directions", rayleigh),
        ("ROC vs exhaustive scan and pairwise AUC", roc_scan),
        ("Newton-CG vs dense Newton", svm_newton),
        ("consensus ADMM vs dense Newton", admm_small),
    ]
}
