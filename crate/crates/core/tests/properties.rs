mod common;

use common::{brute_force_fps, max_abs, random_set, random_vector, series_exp, KINDS};
use lgcn_core::data::{self, LabeledDataset};
use lgcn_core::lie::{self, GroupElement};
use lgcn_core::network::checkpoint;
use lgcn_core::rng::Xorshift64Star;
use lgcn_core::sampling::{self, Metric};
use lgcn_core::{
    AlgebraVector, GroupKind, KernelArgument, KernelNet, Model, ModelConfig, PixelGrid,
};
use proptest::prelude::*;

fn kind_strategy() -> impl Strategy<Value = GroupKind> {
    prop::sample::select(KINDS.to_vec())
}

fn element(kind: GroupKind, seed: u64) -> GroupElement {
    let mut rng = Xorshift64Star::new(seed);
    lie::exp_map(&random_vector(kind, 1.5, 2.0, &mut rng))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn log_inverts_exp(kind in kind_strategy(), seed in any::<u64>()) {
        let mut rng = Xorshift64Star::new(seed);
        let v = random_vector(kind, 4.0, std::f64::consts::PI - 0.01, &mut rng);
        let back = lie::log_map(&lie::exp_map(&v)).unwrap();
        prop_assert!(back.max_abs_diff(&v) < 1e-9, "{v:?} -> {back:?}");
    }

    #[test]
    fn closed_form_matches_series(kind in kind_strategy(), seed in any::<u64>()) {
        let mut rng = Xorshift64Star::new(seed);
        let v = random_vector(kind, 2.0, 2.0, &mut rng);
        let dev = max_abs(&lie::exp_map(&v).matrix(), &series_exp(&v, 40));
        prop_assert!(dev < 1e-10, "{v:?}: {dev}");
    }

    #[test]
    fn coefficients_are_continuous_at_the_origin(theta in -1e-4f64..1e-4, lambda in -1e-4f64..1e-4) {
        let v = AlgebraVector::sim2(0.7, -0.3, theta, lambda);
        let dev = max_abs(&lie::exp_map(&v).matrix(), &series_exp(&v, 40));
        prop_assert!(dev < 1e-12);
    }

    #[test]
    fn composition_is_associative(kind in kind_strategy(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (g1, g2, g3) = (element(kind, a), element(kind, b), element(kind, c));
        let left = lie::compose(&lie::compose(&g1, &g2).unwrap(), &g3).unwrap();
        let right = lie::compose(&g1, &lie::compose(&g2, &g3).unwrap()).unwrap();
        prop_assert!(max_abs(&left.matrix(), &right.matrix()) < 1e-10);
    }

    #[test]
    fn inverse_composes_to_identity(kind in kind_strategy(), a in any::<u64>()) {
        let g = element(kind, a);
        let e = lie::compose(&g, &lie::inverse(&g)).unwrap();
        prop_assert!(max_abs(&e.matrix(), &GroupElement::identity(kind).matrix()) < 1e-12);
    }

    #[test]
    fn distance_is_left_invariant_and_symmetric(kind in kind_strategy(), a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let (g1, g2, g3) = (element(kind, a), element(kind, b), element(kind, c));
        let (Ok(moved1), Ok(moved2)) = (lie::compose(&g3, &g1), lie::compose(&g3, &g2)) else {
            return Ok(());
        };
        let (Ok(d), Ok(dm), Ok(ds)) = (lie::distance(&g1, &g2), lie::distance(&moved1, &moved2), lie::distance(&g2, &g1)) else {
            return Ok(());
        };
        prop_assert!((d - dm).abs() < 1e-9);
        prop_assert!((d - ds).abs() < 1e-9);
    }

    #[test]
    fn action_is_a_homomorphism(a in any::<u64>(), b in any::<u64>(), x in -1.0f64..1.0, y in -1.0f64..1.0) {
        let (g1, g2) = (element(GroupKind::Sim2, a), element(GroupKind::Sim2, b));
        let composed = lie::act_on_point(&lie::compose(&g1, &g2).unwrap(), [x, y]);
        let sequential = lie::act_on_point(&g1, lie::act_on_point(&g2, [x, y]));
        prop_assert!((composed[0] - sequential[0]).abs() < 1e-10);
        prop_assert!((composed[1] - sequential[1]).abs() < 1e-10);
    }

    #[test]
    fn similarity_round_trip(a in any::<u64>()) {
        let g = element(GroupKind::Sim2, a);
        let back = lie::from_similarity(&lie::to_similarity(&g).unwrap()).unwrap();
        prop_assert!(max_abs(&back.matrix(), &g.matrix()) < 1e-12);
    }

    #[test]
    fn fps_matches_brute_force(kind in kind_strategy(), seed in any::<u64>(), n in 2usize..40, exact in any::<bool>()) {
        let mut rng = Xorshift64Star::new(seed);
        let set = random_set(kind, n, 1, &mut rng);
        let metric = if exact { Metric::Exact } else { Metric::AlgebraDiff };
        let dm = sampling::distance_matrix(&set, metric).unwrap();
        let p = 1 + (seed as usize) % n;
        let start = (seed as usize / 7) % n;
        prop_assert_eq!(sampling::fps_with_matrix(&dm, p, start).unwrap(), brute_force_fps(&dm, p, start));
        prop_assert_eq!(sampling::fps(&set, p, metric, start).unwrap(), brute_force_fps(&dm, p, start));
    }

    #[test]
    fn knn_is_sorted_by_distance(seed in any::<u64>(), n in 2usize..30) {
        let mut rng = Xorshift64Star::new(seed);
        let set = random_set(GroupKind::Se2, n, 1, &mut rng);
        let dm = sampling::distance_matrix(&set, Metric::Exact).unwrap();
        let k = 1 + (seed as usize) % n;
        let q = (seed as usize / 3) % n;
        let nb = sampling::knn(&dm, q, k).unwrap();
        prop_assert_eq!(nb.indices[0], q);
        let d: Vec<f64> = nb.indices.iter().map(|&j| dm.get(q, j)).collect();
        prop_assert!(d.windows(2).all(|w| w[0] <= w[1] + sampling::TIE_TOLERANCE));
        let kth = *d.last().unwrap();
        let outside = (0..n).filter(|j| !nb.indices.contains(j)).all(|j| dm.get(q, j) >= kth - sampling::TIE_TOLERANCE);
        prop_assert!(outside);
    }

    #[test]
    fn group_conv_is_linear_in_features(seed in any::<u64>(), alpha in -2.0f64..2.0) {
        let mut rng = Xorshift64Star::new(seed);
        let a = random_set(GroupKind::Sim2, 12, 2, &mut rng);
        let b = a.with_features(random_set(GroupKind::Sim2, 12, 2, &mut rng).features().clone()).unwrap();
        let combined = a.with_features(a.features() * alpha + b.features()).unwrap();
        let kn = KernelNet::init(GroupKind::Sim2, &[6], 2, 3, 4, &mut rng);
        let dm = sampling::distance_matrix(&a, Metric::Exact).unwrap();
        let queries: Vec<usize> = (0..12).collect();
        let nbs = sampling::knn_all(&dm, &queries, 4).unwrap();
        let conv = |s| lgcn_core::network::conv::group_conv(s, &queries, &nbs, &kn, KernelArgument::Exact).unwrap();
        let expected = conv(&a) * alpha + conv(&b);
        let got = conv(&combined);
        prop_assert!((got - expected).iter().all(|d| d.abs() < 1e-10));
    }

    #[test]
    fn idx_round_trip_is_bit_exact(seed in any::<u64>(), h in 1usize..6, w in 1usize..6, n in 1usize..5) {
        let mut rng = Xorshift64Star::new(seed);
        let images: Vec<PixelGrid> = (0..n)
            .map(|_| PixelGrid::from_fn(h, w, 1, |_| rng.below(256) as f64 / 255.0).unwrap())
            .collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(10) as usize).collect();
        let names = (0..10).map(|d| d.to_string()).collect();
        let ds = LabeledDataset::new(images, labels, names, "prop").unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = (dir.path().join("i"), dir.path().join("l"));
        data::write_idx(&ds, &ip, &lp).unwrap();
        let back = data::read_idx(&ip, &lp).unwrap();
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert!(back.images.iter().zip(&ds.images).all(|(a, b)| a.data() == b.data()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn checkpoint_round_trip_is_bit_exact(seed in any::<u64>()) {
        let cfg = ModelConfig { channels: vec![3], downsample: vec![true], kernel_hidden: vec![4], lift_width: 3, ..ModelConfig::default() };
        let model = Model::new(cfg, seed).unwrap();
        let bytes = checkpoint::to_bytes(&model.config, &model.params);
        let (cfg, params) = checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&cfg, &model.config);
        prop_assert_eq!(&params, &model.params);
        prop_assert_eq!(checkpoint::to_bytes(&cfg, &params), bytes);
    }
}
