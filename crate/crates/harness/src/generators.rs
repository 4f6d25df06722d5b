//! Synthetic datasets.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use subflow::{Error, Geometry, PointCloud, Result};

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Points of an S-shaped surface of unit height, width and depth, padded with
/// zeros to `d_embed` coordinates, plus isotropic Gaussian noise of standard
/// deviation `sigma` on every coordinate.
pub struct SSurface {
    pub cloud: PointCloud,
    /// Position along the S profile, in `[-3 pi / 2, 3 pi / 2]`.
    pub profile: Vec<f64>,
    /// Position across the surface, in `[0, 1]`.
    pub width: Vec<f64>,
}

pub fn s_surface_point(t: f64, w: f64) -> [f64; 3] {
    let sign = if t < 0.0 { -1.0 } else { 1.0 };
    [(t.sin() + 1.0) / 2.0, w, (sign * (t.cos() - 1.0) + 2.0) / 4.0]
}

pub fn gen_s_surface(n: usize, sigma: f64, d_embed: usize, seed: u64) -> Result<SSurface> {
    if d_embed < 3 {
        return Err(Error::InvalidArgument("the S-surface needs at least 3 coordinates".into()));
    }
    check_noise(sigma)?;
    let mut rng = rng(seed);
    let mut data = Vec::with_capacity(n * d_embed);
    let mut profile = Vec::with_capacity(n);
    let mut width = Vec::with_capacity(n);
    for _ in 0..n {
        let t = 3.0 * std::f64::consts::PI * (rng.gen::<f64>() - 0.5);
        let w = rng.gen::<f64>();
        let y = s_surface_point(t, w);
        for c in 0..d_embed {
            let base = if c < 3 { y[c] } else { 0.0 };
            data.push(base + sigma * normal(&mut rng));
        }
        profile.push(t);
        width.push(w);
    }
    Ok(SSurface {
        cloud: PointCloud::from_flat(Geometry::Euclidean(d_embed), data)?,
        profile,
        width,
    })
}

fn check_noise(sigma: f64) -> Result<()> {
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidArgument(format!("noise level must be non-negative, got {sigma}")));
    }
    Ok(())
}

/// Uniform points on the unit `k_true`-sphere spanned by the first
/// `k_true + 1` coordinates of `R^d`, plus Gaussian noise of standard
/// deviation `sigma` on all coordinates.
pub fn gen_sphere_cloud(n: usize, k_true: usize, d: usize, sigma: f64, seed: u64) -> Result<PointCloud> {
    if k_true + 1 > d {
        return Err(Error::InvalidArgument(format!("a {k_true}-sphere does not fit in R^{d}")));
    }
    check_noise(sigma)?;
    let mut rng = rng(seed);
    let mut data = Vec::with_capacity(n * d);
    let mut z = vec![0.0; k_true + 1];
    for _ in 0..n {
        let norm = loop {
            z.iter_mut().for_each(|x| *x = normal(&mut rng));
            let nz = z.iter().map(|x| x * x).sum::<f64>().sqrt();
            if nz > 1e-12 {
                break nz;
            }
        };
        for c in 0..d {
            let base = if c <= k_true { z[c] / norm } else { 0.0 };
            data.push(base + sigma * normal(&mut rng));
        }
    }
    PointCloud::from_flat(Geometry::Euclidean(d), data)
}

/// Noisy observations around a random polynomial curve on `S^2`.
pub struct SphereCurveDataset {
    pub cloud: PointCloud,
    pub roots: [f64; 4],
    /// Noise-free curve points `z_i`.
    pub curve: Vec<DVector<f64>>,
}

pub const SPHERE_CURVE_POINTS: usize = 100;
pub const SPHERE_CURVE_VARIANCE: f64 = 5e-4;

pub fn north_pole() -> DVector<f64> {
    DVector::from_row_slice(&[0.0, 0.0, 1.0])
}

fn quartic(roots: &[f64; 4], t: f64) -> f64 {
    roots.iter().map(|a| t - a).product()
}

/// Point of the polynomial curve at parameter `t`, mapped from the tangent
/// plane at the north pole.
pub fn sphere_curve_point(roots: &[f64; 4], t: f64) -> DVector<f64> {
    let v = DVector::from_row_slice(&[t, quartic(roots, t), 0.0]);
    Geometry::Hypersphere(2).exp(&north_pole(), &v).expect("dimensions match")
}

/// Roots `a1, a2 ~ U(-1, 0)`, `a3, a4 ~ U(0, 1)`; 100 evenly spaced parameters
/// in `[-1, 1]`; tangent noise with marginal variance `variance`.
pub fn gen_sphere_curve_dataset_with(seed: u64, n: usize, variance: f64) -> Result<SphereCurveDataset> {
    check_noise(variance)?;
    let geom = Geometry::Hypersphere(2);
    let mut rng = rng(seed);
    let roots = [
        -rng.gen::<f64>(),
        -rng.gen::<f64>(),
        rng.gen::<f64>(),
        rng.gen::<f64>(),
    ];
    let sd = variance.sqrt();
    let mut points = Vec::with_capacity(n);
    let mut curve = Vec::with_capacity(n);
    for i in 0..n {
        let t = if n == 1 { 0.0 } else { -1.0 + 2.0 * i as f64 / (n - 1) as f64 };
        let z = sphere_curve_point(&roots, t);
        let basis = geom.tangent_basis(&z);
        let v = basis.column(0) * (sd * normal(&mut rng)) + basis.column(1) * (sd * normal(&mut rng));
        points.push(geom.exp(&z, &v)?);
        curve.push(z);
    }
    Ok(SphereCurveDataset {
        cloud: PointCloud::from_points(geom, &points)?,
        roots,
        curve,
    })
}

pub fn gen_sphere_curve_dataset(seed: u64) -> Result<SphereCurveDataset> {
    gen_sphere_curve_dataset_with(seed, SPHERE_CURVE_POINTS, SPHERE_CURVE_VARIANCE)
}

/// Radius of the synthetic bumpy sphere in direction `u` (unit vector).
pub fn bumpy_radius(u: &[f64]) -> f64 {
    1.0 + 0.1 * (3.0 * u[0]).sin() * (2.0 * u[1]).cos() + 0.05 * u[2] * u[2]
}

/// Noisy samples of a smooth star-shaped surface in `R^3`.
pub fn gen_bumpy_sphere(n: usize, sigma: f64, seed: u64) -> Result<PointCloud> {
    check_noise(sigma)?;
    let mut rng = rng(seed);
    let mut data = Vec::with_capacity(3 * n);
    for _ in 0..n {
        let mut u = [0.0; 3];
        let nu = loop {
            u.iter_mut().for_each(|x| *x = normal(&mut rng));
            let nu = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
            if nu > 1e-12 {
                break nu;
            }
        };
        u.iter_mut().for_each(|x| *x /= nu);
        let rad = bumpy_radius(&u);
        for x in u {
            data.push(rad * x + sigma * normal(&mut rng));
        }
    }
    PointCloud::from_flat(Geometry::Euclidean(3), data)
}

/// Distance from `p` to the bumpy sphere along the ray through `p`.
pub fn bumpy_radial_error(p: &[f64]) -> f64 {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    let u = [p[0] / n, p[1] / n, p[2] / n];
    (n - bumpy_radius(&u)).abs()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_s_surface_is_padded_with_zeros() {
        let s = gen_s_surface(200, 0.0, 10, 1).unwrap();
        for p in s.cloud.points() {
            assert!(p[3..].iter().all(|&x| x == 0.0));
            assert!(p[..3].iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn s_surface_spans_unit_box() {
        let s = gen_s_surface(5000, 0.0, 3, 2).unwrap();
        for c in 0..3 {
            let (lo, hi) = s.cloud.points().fold((f64::MAX, f64::MIN), |(lo, hi), p| (lo.min(p[c]), hi.max(p[c])));
            assert!(lo < 0.02 && hi > 0.98, "axis {c}: [{lo}, {hi}]");
        }
    }

    #[test]
    fn noiseless_sphere_has_unit_norms() {
        let c = gen_sphere_cloud(500, 2, 3, 0.0, 3).unwrap();
        assert!(c.points().all(|p| (p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn sphere_noise_matches_sigma() {
        let sigma = 0.05;
        let n = 4000;
        let c = gen_sphere_cloud(n, 2, 6, sigma, 4).unwrap();
        // Coordinates beyond the sphere carry pure noise.
        let xs: Vec<f64> = c.points().flat_map(|p| p[3..].to_vec()).collect();
        let m = xs.len() as f64;
        let var = xs.iter().map(|x| x * x).sum::<f64>() / m;
        let se = sigma * sigma * (2.0 / m).sqrt();
        assert!((var - sigma * sigma).abs() < 3.0 * se, "{var}");
    }

    #[test]
    fn sphere_curve_dataset_shape() {
        let ds = gen_sphere_curve_dataset(5).unwrap();
        assert_eq!(ds.cloud.len(), 100);
        assert!(ds.roots[0] < 0.0 && ds.roots[1] < 0.0 && ds.roots[2] > 0.0 && ds.roots[3] > 0.0);
        assert!(ds.roots.iter().all(|a| a.abs() < 1.0));
        let (a, b) = (&ds.curve[0], &ds.cloud.point_vec(0));
        assert!((a - b).norm() < 0.2);
    }
}
