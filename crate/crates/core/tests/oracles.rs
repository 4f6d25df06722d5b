use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use subflow::ambient::Geometry;
use subflow::geodesics::{integrate, sr_exp, GradientMethod, IntegrationOptions};
use subflow::io::{decode_submanifold, encode_submanifold};
use subflow::logmap::{sr_distance, sr_log, LogOptions, SearchSpace};
use subflow::moments::KernelConfig;
use subflow::subbundle::{ExactSphereFrames, FixedFrame, FrameProvider, PrincipalSubbundle, SubbundleConfig};
use subflow::submanifold::{generate, project_continuous};
use subflow::PointCloud;

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn grid_plane(n: usize, half: f64) -> PointCloud {
    let mut pts = Vec::with_capacity(3 * n * n);
    for i in 0..n {
        for j in 0..n {
            let a = -half + 2.0 * half * i as f64 / (n - 1) as f64;
            let b = -half + 2.0 * half * j as f64 / (n - 1) as f64;
            pts.extend_from_slice(&[a, b, 0.0]);
        }
    }
    PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap()
}

#[test]
fn planar_cloud_submanifold_is_the_plane() {
    let cloud = grid_plane(41, 2.0);
    let provider = PrincipalSubbundle::new(&cloud, SubbundleConfig::new(2, KernelConfig::gaussian(0.3))).unwrap();
    let mu = v(&[0.05, -0.03, 0.0]);
    let sub = generate(&provider, &mu, 0.5, 8, 0.01, &IntegrationOptions::default()).unwrap();
    assert!(sub.truncated.is_empty());
    for sp in &sub.points {
        assert!(sp.point[2].abs() < 1e-12);
        // Flat data: geodesics are straight lines, so arc length is the chord length.
        assert!(((&sp.point - &mu).norm() - sp.arclen).abs() < 1e-6, "{}", sp.arclen);
    }
}

#[test]
fn exact_sphere_geodesics_match_great_circles() {
    let provider = ExactSphereFrames { dim: 2 };
    let g = Geometry::Hypersphere(2);
    let p = v(&[0.0, 0.0, 1.0]);
    let delta = 1e-3;
    for eta in [v(&[1.0, 0.0, 0.0]), v(&[0.6, -0.8, 0.0])] {
        let path = integrate(&provider, &p, &eta, PI / 2.0, delta, &IntegrationOptions::default()).unwrap();
        for (j, s) in path.states.iter().enumerate() {
            let exact = g.exp(&p, &(&eta * (j as f64 * delta))).unwrap();
            assert!((&s.p - &exact).norm() < 10.0 * delta, "step {j}");
        }
    }
}

#[test]
fn dual_log_inverts_exp_on_a_dense_plane() {
    let cloud = grid_plane(61, 2.0);
    let provider = PrincipalSubbundle::new(&cloud, SubbundleConfig::new(2, KernelConfig::gaussian(0.3))).unwrap();
    let opts = LogOptions::default();
    let p = v(&[0.1, 0.0, 0.0]);
    for eta0 in [v(&[0.3, 0.0, 0.0]), v(&[-0.18, 0.24, 0.0])] {
        let y = sr_exp(&provider, &p, &eta0, opts.final_step, &opts.integration).unwrap();
        let r = sr_log(&provider, &p, &y, SearchSpace::DualSubbundle, &opts).unwrap();
        assert!((&r.eta_hat - &eta0).norm() < 1e-3, "{}", r.eta_hat);
        assert!(r.residual < 1e-4);
    }
}

#[test]
fn continuous_projection_recovers_generating_coordinates() {
    let cloud = grid_plane(61, 2.0);
    let provider = PrincipalSubbundle::new(&cloud, SubbundleConfig::new(2, KernelConfig::gaussian(0.3))).unwrap();
    let opts = LogOptions::default();
    let mu = v(&[0.0, 0.1, 0.0]);
    let frame = provider.frame(&mu).unwrap();
    let c = v(&[0.2, -0.1]);
    let x = sr_exp(&provider, &mu, &(&frame.frame * &c), opts.final_step, &opts.integration).unwrap();
    let proj = project_continuous(&provider, &x, &mu, &opts).unwrap();
    assert!((&proj.chart - &c).norm() < 1e-3, "{}", proj.chart);
    assert!(proj.residual < 1e-3);
    let at_mu = project_continuous(&provider, &mu, &mu, &opts).unwrap();
    assert_eq!(at_mu.chart.norm(), 0.0);
}

#[test]
fn flat_distance_is_euclidean() {
    let f = FixedFrame::new(Geometry::Euclidean(3), DMatrix::identity(3, 3)).unwrap();
    let (x, y) = (v(&[0.0, 0.0, 0.0]), v(&[0.3, 0.4, 0.0]));
    let d = sr_distance(&f, &x, &y, &LogOptions::default(), true).unwrap();
    // The Hamiltonian weight shrinks the covector by 1 / (1 + w / 2).
    let w = LogOptions::default().hamiltonian_weight;
    assert!((d - 0.5 / (1.0 + 0.5 * w)).abs() < 1e-7, "{d}");
}

#[test]
fn analytic_and_difference_gradients_give_the_same_geodesic() {
    let pts: Vec<f64> = (0..400)
        .flat_map(|i| {
            let a = 2.0 * PI * i as f64 / 400.0;
            let b = ((i * 7) % 20) as f64 / 20.0 - 0.5;
            [a.cos(), a.sin(), 0.3 * b]
        })
        .collect();
    let cloud = PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap();
    let provider = PrincipalSubbundle::new(&cloud, SubbundleConfig::new(2, KernelConfig::gaussian(0.3).with_cutoff(0.0))).unwrap();
    let p = v(&[1.0, 0.0, 0.0]);
    let eta = v(&[0.0, 1.0, 0.2]);
    let fd = integrate(&provider, &p, &eta, 0.5, 1e-2, &IntegrationOptions::default()).unwrap();
    let an = integrate(&provider, &p, &eta, 0.5, 1e-2, &IntegrationOptions::default().with_gradient(GradientMethod::Analytic)).unwrap();
    assert!((fd.endpoint() - an.endpoint()).norm() < 1e-7);
}

#[test]
fn binary_cache_roundtrip() {
    let sub = generate(&ExactSphereFrames { dim: 2 }, &v(&[0.0, 1.0, 0.0]), 0.2, 5, 0.05, &IntegrationOptions::default()).unwrap();
    let back = decode_submanifold(&encode_submanifold(&sub)).unwrap();
    assert_eq!(back.points, sub.points);
    assert_eq!(back.mu, sub.mu);
    assert_eq!(back.frame_mu, sub.frame_mu);
}
