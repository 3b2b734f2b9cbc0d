//! Invariants checked over generated inputs.

use latentgeo_core::analysis::{
    kmedoids, normalized_margin, pairwise_f_score, residual_cross_correlation, DistanceMatrix, MetricKind,
};
use latentgeo_core::data::{encode_idx, parse_idx, train_test_split, IdxArray, LabeledDataset, Provenance};
use latentgeo_core::geometry::{
    geodesic, metric_tensor, principal_angles_between, riemannian_distance, GeodesicOptions, SmoothMap,
};
use latentgeo_core::models::kl_gaussian;
use latentgeo_core::network::{Activation, FeedForwardNet};
use latentgeo_core::numerics::{dist, dot, numerical_rank, svd};
use latentgeo_core::{Matrix, SeededRng};
use proptest::prelude::*;

fn matrix(max_r: usize, max_c: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_r, 1..=max_c).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c).prop_map(move |v| Matrix::from_vec(r, c, v).unwrap())
    })
}

fn orthonormal(n: usize, p: usize, seed: u64) -> Matrix {
    svd(&SeededRng::new(seed).normal_matrix(n, p)).unwrap().u
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn svd_reconstructs(a in matrix(24, 24)) {
        let s = svd(&a).unwrap();
        let scale = a.frobenius_norm().max(1e-300);
        prop_assert!(s.reconstruct().sub(&a).unwrap().frobenius_norm() / scale < 1e-8);
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        let utu = s.u.transpose().matmul(&s.u).unwrap();
        prop_assert!(utu.sub(&Matrix::identity(utu.rows())).unwrap().max_abs() < 1e-10);
        let vvt = s.vt.matmul(&s.vt.transpose()).unwrap();
        prop_assert!(vvt.sub(&Matrix::identity(vvt.rows())).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn rank_is_monotone_in_tolerance(mut s in prop::collection::vec(0.0f64..1e3, 1..12), t1 in 1e-12f64..0.999, t2 in 1e-12f64..0.999) {
        s.sort_by(|a, b| b.total_cmp(a));
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        prop_assert!(numerical_rank(&s, lo) >= numerical_rank(&s, hi));
    }

    #[test]
    fn rng_streams_are_reproducible(seed in any::<u64>()) {
        let mut a = SeededRng::new(seed);
        let mut b = SeededRng::new(seed);
        for _ in 0..32 {
            prop_assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            prop_assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
    }

    #[test]
    fn metric_quadratic_form_is_jv_squared(seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let net = FeedForwardNet::init(&[4, 12, 9], Activation::ELU, Activation::Identity, &mut rng).unwrap();
        let z = rng.normal_vec(4);
        let m = metric_tensor(&net, &z).unwrap();
        let j = net.jacobian(&z).unwrap();
        for _ in 0..10 {
            let v = rng.normal_vec(4);
            let jv = j.matvec(&v).unwrap();
            let q = m.quadratic_form(&v);
            prop_assert!((q - dot(&jv, &jv)).abs() <= 1e-10 * q.max(1.0));
        }
        // PSD
        let e = latentgeo_core::numerics::symmetric_eigen(&m.m).unwrap();
        prop_assert!(e.values.iter().all(|&v| v >= -1e-10));
    }

    #[test]
    fn principal_angles_ignore_basis_rotation(seed in 0u64..1000) {
        let u1 = orthonormal(8, 3, seed);
        let u2 = orthonormal(8, 3, seed + 10_000);
        let q = orthonormal(3, 3, seed + 20_000);
        let a = principal_angles_between(&u1, &u2).unwrap();
        let b = principal_angles_between(&u1.matmul(&q).unwrap(), &u2).unwrap();
        let c = principal_angles_between(&u1, &u2.matmul(&q).unwrap()).unwrap();
        for i in 0..3 {
            prop_assert!((a[i] - b[i]).abs() < 1e-10);
            prop_assert!((a[i] - c[i]).abs() < 1e-10);
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-15).contains(&a[i]));
        }
    }

    #[test]
    fn c_hat_affine_invariance(v in prop::collection::vec(0.0f64..10.0, 10), w in prop::collection::vec(0.0f64..10.0, 10), scale in 0.01f64..100.0, shift in 0.0f64..10.0) {
        let a = DistanceMatrix::from_upper(5, MetricKind::Euclidean, v.clone()).unwrap();
        let b = DistanceMatrix::from_upper(5, MetricKind::RiemannianGraph, w.clone()).unwrap();
        let b2 = DistanceMatrix::from_upper(5, MetricKind::RiemannianGraph, w.iter().map(|x| scale * x + shift).collect()).unwrap();
        if let (Ok(c1), Ok(c2)) = (residual_cross_correlation(&a, &b), residual_cross_correlation(&a, &b2)) {
            prop_assert!((c1 - c2).abs() < 1e-9);
            prop_assert!((0.0..=2.0).contains(&c1));
        }
        if residual_cross_correlation(&a, &a).is_ok() {
            prop_assert_eq!(residual_cross_correlation(&a, &a).unwrap(), 0.0);
        }
    }

    #[test]
    fn margin_is_isometry_invariant(seed in 0u64..1000, shift in prop::collection::vec(-5.0f64..5.0, 3)) {
        let mut rng = SeededRng::new(seed);
        let pts = rng.normal_matrix(12, 3);
        let labels: Vec<usize> = (0..12).map(|i| i % 3).collect();
        let q = orthonormal(3, 3, seed + 1);
        let moved = pts.matmul(&q.transpose()).unwrap();
        let moved = Matrix::from_fn(12, 3, |i, j| moved.get(i, j) + shift[j]);
        let a = normalized_margin(&pts, &labels).unwrap();
        let b = normalized_margin(&moved, &labels).unwrap();
        for (x, y) in a.margins.iter().zip(&b.margins) {
            prop_assert!((x.unwrap() - y.unwrap()).abs() < 1e-10);
            prop_assert!(x.unwrap() <= 1.0);
        }
    }

    #[test]
    fn f_score_ignores_cluster_ids(assign in prop::collection::vec(0usize..4, 12), labels in prop::collection::vec(0usize..3, 12), perm_seed in any::<u64>()) {
        let mut perm: Vec<usize> = (0..4).collect();
        SeededRng::new(perm_seed).shuffle(&mut perm);
        let renamed: Vec<usize> = assign.iter().map(|&a| perm[a]).collect();
        let f1 = pairwise_f_score(&assign, &labels).unwrap();
        let f2 = pairwise_f_score(&renamed, &labels).unwrap();
        prop_assert_eq!(f1, f2);
        prop_assert!((0.0..=100.0).contains(&f1));
    }

    #[test]
    fn kmedoids_cost_never_increases(seed in 0u64..500, k in 1usize..6) {
        let pts = SeededRng::new(seed).normal_matrix(20, 2);
        let d = DistanceMatrix::euclidean(&pts);
        let r = kmedoids(&d, k, seed, 200).unwrap();
        prop_assert!(r.cost_history.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(r.converged);
        prop_assert_eq!(r.medoids.len(), k);
    }

    #[test]
    fn kl_is_nonnegative(mu in prop::collection::vec(-5.0f64..5.0, 1..6), lv in prop::collection::vec(-5.0f64..5.0, 6)) {
        let lv = &lv[..mu.len()];
        let kl = kl_gaussian(&mu, lv);
        prop_assert!(kl >= -1e-12);
        if mu.iter().chain(lv).any(|v| v.abs() > 1e-3) {
            prop_assert!(kl > 0.0);
        }
    }

    #[test]
    fn idx_round_trip(dims in prop::collection::vec(1usize..5, 1..4), seed in any::<u64>()) {
        let n: usize = dims.iter().product();
        let mut rng = SeededRng::new(seed);
        let arr = IdxArray { dims: dims.clone(), data: (0..n).map(|_| rng.below(256) as u8).collect() };
        let bytes = encode_idx(&arr).unwrap();
        prop_assert_eq!(parse_idx(&bytes).unwrap(), arr);
        prop_assert_eq!(encode_idx(&parse_idx(&bytes).unwrap()).unwrap(), bytes);
    }

    #[test]
    fn split_is_stratified(counts in prop::collection::vec(1usize..30, 2..5), frac in 0.0f64..1.0, seed in any::<u64>()) {
        let labels: Vec<usize> = counts.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat(c).take(n)).collect();
        let n = labels.len();
        let ds = LabeledDataset::new(Matrix::zeros(n, 1), Some(labels), Provenance::Derived("t".into())).unwrap();
        let (train, test) = train_test_split(&ds, frac, seed).unwrap();
        prop_assert_eq!(train.len() + test.len(), n);
        for (c, &nc) in counts.iter().enumerate() {
            let got = test.labels().unwrap().iter().filter(|&&l| l == c).count() as f64;
            prop_assert!((got - frac * nc as f64).abs() <= 1.0);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn geodesic_descends_and_respects_the_chord(seed in 0u64..1000) {
        let mut rng = SeededRng::new(seed);
        let net = FeedForwardNet::init(&[2, 16, 5], Activation::Tanh, Activation::Identity, &mut rng).unwrap();
        let a = rng.normal_vec(2);
        let b = rng.normal_vec(2);
        let opts = GeodesicOptions { max_iters: 100, ..GeodesicOptions::default() };
        let c = geodesic(&net, &a, &b, &opts).unwrap();
        prop_assert!(c.energy <= c.initial_energy + 1e-12);
        prop_assert!(c.length >= dist(&net.eval(&a), &net.eval(&b)) - 1e-9);
        prop_assert!(c.length * c.length <= c.energy * (1.0 + 1e-12) + 1e-300);
        let back = riemannian_distance(&net, &b, &a, &opts).unwrap();
        prop_assert!((back.value - c.length).abs() <= 1e-3 * c.length.max(1e-12));
    }
}

#[test]
fn svd_of_a_512_square_reconstructs() {
    let a = SeededRng::new(1).normal_matrix(512, 512);
    let s = svd(&a).unwrap();
    let err = s.reconstruct().sub(&a).unwrap().frobenius_norm() / a.frobenius_norm();
    assert!(err < 1e-8, "{err:e}");
}

#[test]
fn seeded_training_is_bitwise_reproducible() {
    use latentgeo_core::models::{train_vae, TrainConfig};
    let mut rng = SeededRng::new(1);
    let ds = LabeledDataset::new(rng.normal_matrix(40, 6), None, Provenance::Derived("t".into())).unwrap();
    let cfg = TrainConfig {
        latent_dim: 2,
        encoder_hidden: vec![8],
        decoder_hidden: vec![8],
        epochs: 3,
        batch_size: 8,
        ..TrainConfig::default()
    };
    let (a, ha) = train_vae(&ds, &cfg, 5).unwrap();
    let (b, hb) = train_vae(&ds, &cfg, 5).unwrap();
    assert_eq!(ha, hb);
    let pa: Vec<u64> = a.decoder.params().iter().map(|v| v.to_bits()).collect();
    let pb: Vec<u64> = b.decoder.params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(pa, pb);
}
