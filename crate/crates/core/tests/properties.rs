use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use subflow::ambient::Geometry;
use subflow::geodesics::{integrate, IntegrationOptions, Scheme};
use subflow::moments::{local_mean, second_moment, second_moment_manifold, tensor_coordinates, weights, KernelConfig, MomentMode};
use subflow::subbundle::{FixedFrame, FrameProvider, PrincipalSubbundle, SubbundleConfig};
use subflow::submanifold::{combine, generate};
use subflow::PointCloud;

fn cloud_strategy(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, (8 * d)..(40 * d)).prop_map(move |mut v| {
        v.truncate(v.len() / d * d);
        v
    })
}

fn mode_strategy() -> impl Strategy<Value = MomentMode> {
    prop_oneof![
        Just(MomentMode::CenteredCheap),
        Just(MomentMode::CenteredRecomputed),
        Just(MomentMode::Uncentered)
    ]
}

fn orthogonal(seed: &[f64]) -> DMatrix<f64> {
    let n = (seed.len() as f64).sqrt() as usize;
    DMatrix::from_column_slice(n, n, seed).qr().q()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_are_a_distribution(pts in cloud_strategy(3), alpha in 0.1..2.0f64, p in prop::array::uniform3(-1.0..1.0f64)) {
        let c = PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap();
        let w = weights(&c, &DVector::from_row_slice(&p), &KernelConfig::gaussian(alpha)).unwrap();
        prop_assert!(w.iter().all(|&x| x >= 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cometric_is_an_orthogonal_projector(
        pts in cloud_strategy(3),
        alpha in 0.2..2.0f64,
        k in 1usize..=3,
        mode in mode_strategy(),
    ) {
        let c = PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap();
        let p = c.point_vec(0);
        let cfg = SubbundleConfig::new(k, KernelConfig::gaussian(alpha)).with_mode(mode);
        if let Ok(f) = PrincipalSubbundle::new(&c, cfg).unwrap().frame(&p) {
            let g = f.cometric().0;
            prop_assert!((&g * &g - &g).abs().max() < 1e-10);
            prop_assert!((&g - g.transpose()).abs().max() < 1e-12);
            prop_assert!((g.trace() - k as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn frames_are_equivariant_under_rigid_motions(
        pts in cloud_strategy(3),
        alpha in 0.3..2.0f64,
        q in prop::collection::vec(-1.0..1.0f64, 9),
        shift in prop::array::uniform3(-2.0..2.0f64),
    ) {
        let c = PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap();
        let q = orthogonal(&q);
        let t = DVector::from_row_slice(&shift);
        let moved: Vec<f64> = c.points().flat_map(|x| (&q * DVector::from_row_slice(x) + &t).iter().copied().collect::<Vec<_>>()).collect();
        let mc = PointCloud::from_flat(Geometry::Euclidean(3), moved).unwrap();
        let cfg = SubbundleConfig::new(2, KernelConfig::gaussian(alpha));
        let p = c.point_vec(0);
        if let Ok(f) = PrincipalSubbundle::new(&c, cfg).unwrap().frame(&p) {
            // Only well-separated spectra determine the subspace stably.
            prop_assume!(f.gap > 1e-3 * f.eigvals[0]);
            let g = f.cometric().0;
            let fm = PrincipalSubbundle::new(&mc, cfg).unwrap().frame(&(&q * &p + &t)).unwrap();
            let err = (fm.cometric().0 - &q * g * q.transpose()).abs().max();
            prop_assert!(err < 1e-6 * f.eigvals[0] / f.gap, "err {}", err);
        }
    }

    #[test]
    fn euclidean_specialization(pts in cloud_strategy(4), alpha in 0.2..2.0f64, mode in mode_strategy(), p in prop::array::uniform4(-1.0..1.0f64)) {
        let c = PointCloud::from_flat(Geometry::Euclidean(4), pts).unwrap();
        let p = DVector::from_row_slice(&p);
        let k = KernelConfig::gaussian(alpha);
        let (a, b) = (second_moment(&c, &p, &k, mode), second_moment_manifold(&c, &p, &k, mode));
        prop_assert_eq!(a.is_ok(), b.is_ok());
        if let (Ok(a), Ok(b)) = (a, b) {
            prop_assert!((a.second_moment - b.second_moment).abs().max() < 1e-12);
            prop_assert!((a.mean - b.mean).abs().max() < 1e-12);
            prop_assert!((a.center - b.center).abs().max() < 1e-12);
        }
    }

    #[test]
    fn tensor_coordinates_change_basis(
        v in prop::collection::vec(-1.0..1.0f64, 3),
        u in prop::collection::vec(-1.0..1.0f64, 3),
        l in prop::collection::vec(-1.0..1.0f64, 9),
        q in prop::collection::vec(-1.0..1.0f64, 9),
    ) {
        let (v, u) = (DVector::from_vec(v), DVector::from_vec(u));
        let l = DMatrix::from_vec(3, 3, l) + DMatrix::identity(3, 3) * 2.0;
        let h = &l * l.transpose();
        let q = DMatrix::from_vec(3, 3, q) + DMatrix::identity(3, 3) * 3.0;
        let qi = q.clone().try_inverse().unwrap();
        let a = tensor_coordinates(&v, &u, &h).unwrap();
        let b = tensor_coordinates(&(&q * &v), &(&q * &u), &(qi.transpose() * &h * &qi)).unwrap();
        let scale = 1.0 + a.abs().max() * q.abs().max() * qi.abs().max();
        prop_assert!((b - &q * a * &qi).abs().max() < 1e-10 * scale);
    }

    #[test]
    fn sphere_log_inverts_exp(a in prop::array::uniform3(-1.0..1.0f64), v in prop::array::uniform3(-1.0..1.0f64)) {
        let g = Geometry::Hypersphere(2);
        let mut p = DVector::from_row_slice(&a);
        prop_assume!(p.norm() > 1e-3);
        p /= p.norm();
        let mut t = DVector::from_row_slice(&v);
        g.project_tangent(&p, &mut t);
        prop_assume!(t.norm() < 3.0);
        let q = g.exp(&p, &t).unwrap();
        prop_assert!((q.norm() - 1.0).abs() < 1e-12);
        prop_assert!((g.log(&p, &q).unwrap() - &t).norm() < 1e-9);
        prop_assert!((g.distance(&p, &q).unwrap() - t.norm()).abs() < 1e-9);
    }

    #[test]
    fn sphere_local_mean_is_on_the_sphere(pts in prop::collection::vec(-1.0..1.0f64, 30..90), alpha in 0.2..2.0f64) {
        let pts: Vec<DVector<f64>> = pts
            .chunks_exact(3)
            .map(DVector::from_row_slice)
            .filter(|x| x.norm() > 1e-3 && x[2] > 0.0)
            .map(|x| &x / x.norm())
            .collect();
        prop_assume!(!pts.is_empty());
        let c = PointCloud::from_points(Geometry::Hypersphere(2), &pts).unwrap();
        if let Ok(m) = local_mean(&c, &pts[0], &KernelConfig::gaussian(alpha)) {
            prop_assert!((m.norm() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn fixed_frame_geodesics_are_straight(
        eta in prop::array::uniform3(-1.0..1.0f64),
        t in 0.05..1.0f64,
        semi in any::<bool>(),
    ) {
        let f = FixedFrame::new(Geometry::Euclidean(3), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let eta = DVector::from_row_slice(&eta);
        let p0 = DVector::from_row_slice(&[0.1, 0.2, 0.3]);
        let scheme = if semi { Scheme::SemiImplicitEuler } else { Scheme::Euler };
        let path = integrate(&f, &p0, &eta, t, 0.01, &IntegrationOptions::default().with_scheme(scheme)).unwrap();
        let v = DVector::from_row_slice(&[eta[0], eta[1], 0.0]);
        for (j, s) in path.states.iter().enumerate() {
            prop_assert!((&s.p - (&p0 + &v * (j as f64 * 0.01))).norm() < 1e-12);
            prop_assert!((&s.eta - &eta).norm() < 1e-12);
        }
        prop_assert!(path.relative_drift() < 1e-12);
    }

    #[test]
    fn submanifold_point_count_and_radial_isometry(r in 0.01..0.5f64, l in 1usize..12, delta in 0.005..0.05f64) {
        prop_assume!(r >= delta);
        let f = FixedFrame::new(Geometry::Euclidean(3), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let mu = DVector::zeros(3);
        let sub = generate(&f, &mu, r, l, delta, &IntegrationOptions::default()).unwrap();
        let s = (r / delta + 1e-9).floor() as usize;
        prop_assert_eq!(sub.len(), s * l + 1);
        for sp in &sub.points {
            prop_assert!((sp.chart.norm() - sp.arclen).abs() < 1e-12);
            prop_assert!((sp.arclen - sp.j as f64 * delta).abs() < 1e-12);
            prop_assert!(((&sp.point - &mu).norm() - sp.arclen).abs() < 1e-12);
        }
    }

    #[test]
    fn combine_stays_in_the_hull_of_projections(x in prop::array::uniform3(-0.2..0.2f64), h in 0.01..0.2f64) {
        // Two parallel planes z = 0 and z = h: the combined point must lie on
        // the segment between the two projections.
        let f = FixedFrame::new(Geometry::Euclidean(3), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap();
        let opts = IntegrationOptions::default();
        let a = generate(&f, &DVector::zeros(3), 0.4, 16, 0.02, &opts).unwrap();
        let b = generate(&f, &DVector::from_row_slice(&[0.01, 0.0, h]), 0.35, 12, 0.02, &opts).unwrap();
        let x = DVector::from_row_slice(&x);
        let out = combine(&[a.clone(), b.clone()], &x, 10.0, None).unwrap();
        let pa = subflow::submanifold::project_discrete(&x, &a).unwrap().point;
        let pb = subflow::submanifold::project_discrete(&x, &b).unwrap().point;
        let lam = out[2] / h;
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&lam));
        prop_assert!((&out - (&pa * (1.0 - lam) + &pb * lam)).norm() < 1e-10);
    }
}
