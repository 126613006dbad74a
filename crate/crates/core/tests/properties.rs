use proptest::prelude::*;

use grfface::admm::protocol::Frame;
use grfface::admm::z_update;
use grfface::evalharness::{
    balanced_accuracy, best_threshold, fuse_scores, kfold_indices, roc, tpr_at_fpr,
};
use grfface::grfbank::{build_kernel, enumerate_full_bank};
use grfface::imgcore::ImagePlane;
use grfface::lda::energy_dimension;
use grfface::pairengine::{pair_rep, PairKind};
use grfface::pairs::{all_pairs, pair_count};
use grfface::patchpool::{split_span, PatchSpec};
use grfface::pipeline::PipelineConfig;
use grfface::pooling::{build_tables, normalize_sift, pool_patch, PoolingKind};
use grfface::grfbank::ReceptiveMaps;

fn scored() -> impl Strategy<Value = Vec<(f64, bool)>> {
    prop::collection::vec((0u8..20, any::<bool>()), 2..200).prop_map(|mut v| {
        v[0].1 = true;
        v[1].1 = false;
        v.into_iter().map(|(s, l)| (s as f64 / 4.0, l)).collect()
    })
}

fn subjects() -> impl Strategy<Value = Vec<u32>> {
    prop::collection::vec(0u32..12, 4..80)
}

fn maps_of(plane: ImagePlane) -> ReceptiveMaps {
    ReceptiveMaps {
        source: String::new(),
        channels: vec![0],
        planes: vec![plane],
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn roc_runs_from_origin_to_one_monotonically(s in scored()) {
        let c = roc(&s).unwrap();
        let p = c.points();
        prop_assert_eq!(p[0], (0.0, 0.0));
        prop_assert_eq!(*p.last().unwrap(), (1.0, 1.0));
        for w in p.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
        prop_assert!((0.0..=1.0).contains(&c.auc()));
    }

    #[test]
    fn tpr_at_fpr_is_monotone(s in scored(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let c = roc(&s).unwrap();
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(tpr_at_fpr(&c, lo) <= tpr_at_fpr(&c, hi));
        prop_assert_eq!(tpr_at_fpr(&c, 1.0), 1.0);
    }

    #[test]
    fn roc_is_invariant_under_monotone_rescaling(s in scored(), k in 0.1f64..10.0, t in -5.0f64..5.0) {
        let moved: Vec<(f64, bool)> = s.iter().map(|&(v, l)| (k * v + t, l)).collect();
        prop_assert_eq!(roc(&s).unwrap().points(), roc(&moved).unwrap().points());
    }

    #[test]
    fn best_threshold_reports_its_balanced_accuracy(s in scored()) {
        let (t, ba) = best_threshold(&s).unwrap();
        prop_assert!(ba >= 0.5);
        if t.is_finite() {
            prop_assert!((balanced_accuracy(&s, t).unwrap() - ba).abs() < 1e-12);
        }
        let c = roc(&s).unwrap();
        for &(f, tp) in &c.points() {
            prop_assert!(0.5 * (tp + 1.0 - f) <= ba + 1e-12);
        }
    }

    #[test]
    fn fusion_is_a_linear_sum(a in prop::collection::vec(-5.0f64..5.0, 1..40), k in 0.1f64..4.0) {
        let b: Vec<f64> = a.iter().map(|v| v * k).collect();
        let f = fuse_scores(&[a.clone(), b]).unwrap();
        for (x, y) in f.iter().zip(&a) {
            prop_assert!((x - y * (1.0 + k)).abs() < 1e-9);
        }
        prop_assert!(fuse_scores(&[a.clone(), a[1..].to_vec()]).is_err());
    }

    #[test]
    fn folds_partition_faces_by_subject(s in subjects(), k in 2usize..4, seed in any::<u64>()) {
        let distinct = { let mut d = s.clone(); d.sort(); d.dedup(); d.len() };
        prop_assume!(distinct >= k);
        let folds = kfold_indices(&s, k, seed).unwrap();
        let mut all: Vec<usize> = folds.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..s.len()).collect::<Vec<_>>());
        for (i, f) in folds.iter().enumerate() {
            prop_assert!(!f.is_empty());
            for g in &folds[i + 1..] {
                prop_assert!(f.iter().all(|&a| g.iter().all(|&b| s[a] != s[b])));
            }
        }
    }

    #[test]
    fn pair_enumeration_is_complete(s in subjects()) {
        let p: Vec<_> = all_pairs(&s).collect();
        prop_assert_eq!(p.len() as u64, pair_count(s.len()));
        prop_assert!(p.iter().all(|q| q.a < q.b && q.same == (s[q.a] == s[q.b])));
    }

    #[test]
    fn pair_representations_are_symmetric(
        ab in prop::collection::vec((-9.0f64..9.0, -9.0f64..9.0), 1..30),
        p in 0.1f64..2.0,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = ab.into_iter().unzip();
        for kind in [PairKind::AbsDiff, PairKind::Product] {
            let x = pair_rep(&a, &b, kind, p).unwrap();
            prop_assert_eq!(&x, &pair_rep(&b, &a, kind, p).unwrap());
            prop_assert!(x.iter().all(|v| *v >= 0.0));
        }
        let self_diff = pair_rep(&a, &a, PairKind::AbsDiff, p).unwrap();
        prop_assert!(self_diff.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn spans_cover_and_stay_near_equal(len in 4usize..500, parts in 1usize..8) {
        let b = split_span(len, parts);
        prop_assert_eq!(b.len(), parts + 1);
        prop_assert_eq!((b[0], b[parts]), (0, len));
        let sizes: Vec<usize> = b.windows(2).map(|w| w[1] - w[0]).collect();
        let (lo, hi) = (*sizes.iter().min().unwrap(), *sizes.iter().max().unwrap());
        prop_assert!(hi - lo <= 1);
        prop_assert!(sizes.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn constant_cells_have_no_spread_or_moment(w in 4usize..40, h in 4usize..40, v in -50.0f64..50.0) {
        let maps = maps_of(ImagePlane::filled(w, h, v));
        let patch = PatchSpec { x: 0, y: 0, w, h };
        let tables = build_tables(&maps, &PoolingKind::ALL);
        for kind in [PoolingKind::Sigma, PoolingKind::Moment] {
            prop_assert!(pool_patch(&maps, &patch, kind, &tables).unwrap().iter().all(|x| *x == 0.0));
        }
        for kind in [PoolingKind::Mu, PoolingKind::Max] {
            prop_assert!(pool_patch(&maps, &patch, kind, &tables).unwrap().iter().all(|x| (x - v).abs() <= 1e-9 * v.abs().max(1.0)));
        }
    }

    #[test]
    fn pooled_statistics_are_ordered(seed in any::<u64>(), w in 8usize..40, h in 8usize..40) {
        let mut state = seed;
        let plane = ImagePlane::from_fn(w, h, |_, _| {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 33) as f64 / (1u64 << 31) as f64) * 20.0 - 10.0
        });
        let maps = maps_of(plane);
        let patch = PatchSpec { x: 0, y: 0, w, h };
        let tables = build_tables(&maps, &PoolingKind::ALL);
        let get = |k| pool_patch(&maps, &patch, k, &tables).unwrap();
        let (max, mu, sigma, t2) = (get(PoolingKind::Max), get(PoolingKind::Mu), get(PoolingKind::Sigma), get(PoolingKind::T2));
        for c in 0..16 {
            prop_assert!(max[c] >= mu[c] - 1e-9);
            prop_assert!(sigma[c] >= 0.0);
            prop_assert!(t2[2 * c] >= -1e-12 && t2[2 * c + 1] >= -1e-12);
            prop_assert!((t2[2 * c] - t2[2 * c + 1] - 2.0 * mu[c]).abs() < 1e-9);
        }
    }

    #[test]
    fn sift_normalisation_is_unit_and_clipped(v in prop::collection::vec(-10.0f64..10.0, 1..64), clip in 0.05f64..1.0) {
        let mut x = v.clone();
        normalize_sift(&mut x, clip);
        let n = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        if v.iter().all(|a| *a == 0.0) {
            prop_assert_eq!(n, 0.0);
        } else {
            prop_assert!((n - 1.0).abs() < 1e-9);
        }
        let mut again = x.clone();
        normalize_sift(&mut again, clip);
        prop_assert!(x.iter().zip(&again).all(|(a, b)| (a - b).abs() < 1e-9) || x.iter().any(|a| a.abs() > clip));
    }

    #[test]
    fn energy_dimension_grows_with_energy(mut v in prop::collection::vec(0.0f64..10.0, 1..50), a in 0.0f64..1.0, b in 0.0f64..1.0) {
        v.sort_by(|x, y| y.total_cmp(x));
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (p, q) = (energy_dimension(&v, lo), energy_dimension(&v, hi));
        prop_assert!(p <= q && q <= v.len() && p >= 1);
    }

    #[test]
    fn z_update_minimises_its_objective(
        w in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..5),
        du in -1.0f64..1.0,
        rho in 0.1f64..5.0,
        probe in prop::collection::vec(-0.1f64..0.1, 4),
    ) {
        let u: Vec<Vec<f64>> = w.iter().map(|wj| wj.iter().map(|x| x * du).collect()).collect();
        let f = |z: &[f64]| {
            0.5 * z.iter().map(|v| v * v).sum::<f64>()
                + rho * w.iter().zip(&u).map(|(wj, uj)| (0..4).map(|k| (wj[k] - z[k] + uj[k]).powi(2)).sum::<f64>()).sum::<f64>()
        };
        let z = z_update(&w, &u, rho);
        let moved: Vec<f64> = z.iter().zip(&probe).map(|(a, b)| a + b).collect();
        prop_assert!(f(&z) <= f(&moved) + 1e-12);
    }

    #[test]
    fn frames_round_trip(round in any::<u32>(), z in prop::collection::vec(-1e6f64..1e6, 0..64), obj in -1e6f64..1e6) {
        for f in [
            Frame::RoundZ { round, z: z.clone() },
            Frame::LocalW { round, w: z.clone(), local_objective: obj },
            Frame::Done { rounds: round },
        ] {
            prop_assert_eq!(Frame::decode(&f.encode()).unwrap(), f);
        }
    }

    #[test]
    fn config_text_round_trips(seed in any::<u64>(), channels in 1usize..12, patches in 1usize..300, c in 1e-4f64..10.0) {
        let mut cfg = PipelineConfig { seed, channels, patches, c, ..PipelineConfig::default() };
        cfg.seed = seed;
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn odd_order_kernels_sum_to_zero() {
    for spec in enumerate_full_bank().specs() {
        let k = build_kernel(spec).unwrap();
        if spec.order() % 2 == 1 {
            assert!(k.sum().abs() < 1e-9 * k.abs_sum(), "{spec:?}");
        }
    }
}
