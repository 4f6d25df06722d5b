//! Ambient Riemannian geometries: Euclidean space and the unit hypersphere.
//!
//! Hypersphere points and tangent vectors are stored extrinsically, so a point
//! of `S^d` is a unit vector in `R^{d+1}` and a tangent vector at `p` is any
//! vector orthogonal to `p`. In this representation the metric matrix is the
//! identity. [`SphericalChart`] provides a non-orthonormal chart on `S^2` for
//! code paths that need a non-trivial metric matrix.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `<p, q>` used to detect antipodal points on the sphere.
pub const ANTIPODAL_TOL: f64 = 1e-9;

const ZERO_NORM: f64 = 1e-14;

/// The ambient geometry a point cloud lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "dim", rename_all = "snake_case")]
pub enum Geometry {
    /// `R^d` with the standard inner product.
    Euclidean(usize),
    /// The unit sphere `S^d`, represented in `R^{d+1}`.
    Hypersphere(usize),
}

impl Geometry {
    /// Length of coordinate vectors (points and tangent vectors).
    pub fn ambient_dim(&self) -> usize {
        match *self {
            Geometry::Euclidean(d) => d,
            Geometry::Hypersphere(d) => d + 1,
        }
    }

    /// Dimension of the manifold itself.
    pub fn intrinsic_dim(&self) -> usize {
        match *self {
            Geometry::Euclidean(d) | Geometry::Hypersphere(d) => d,
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self, Geometry::Euclidean(_))
    }

    pub fn check_dim(&self, len: usize) -> Result<()> {
        let expected = self.ambient_dim();
        if len != expected {
            return Err(Error::DimensionMismatch {
                expected,
                found: len,
            });
        }
        Ok(())
    }

    /// Riemannian exponential `exp_p(v)`.
    pub fn exp(&self, p: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(p.len())?;
        self.check_dim(v.len())?;
        let mut out = DVector::zeros(p.len());
        self.exp_into(p.as_slice(), v.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Riemannian logarithm `log_p(q)`.
    pub fn log(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_dim(p.len())?;
        self.check_dim(q.len())?;
        let mut out = DVector::zeros(p.len());
        self.log_into(p.as_slice(), q.as_slice(), out.as_mut_slice())?;
        Ok(out)
    }

    /// Geodesic distance between two points.
    pub fn distance(&self, p: &DVector<f64>, q: &DVector<f64>) -> Result<f64> {
        self.check_dim(p.len())?;
        self.check_dim(q.len())?;
        Ok(self.distance_slices(p.as_slice(), q.as_slice()))
    }

    /// Parallel transport of `v` from `T_x` to `T_y` along the minimizing geodesic.
    pub fn parallel_transport(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        v: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        self.check_dim(x.len())?;
        self.check_dim(y.len())?;
        self.check_dim(v.len())?;
        match self {
            Geometry::Euclidean(_) => Ok(v.clone()),
            Geometry::Hypersphere(_) => {
                let u = self.log(x, y)?;
                let theta = u.norm();
                if theta < ZERO_NORM {
                    return Ok(v.clone());
                }
                let u = u / theta;
                let uv = u.dot(v);
                Ok(v + ((theta.cos() - 1.0) * &u - theta.sin() * x) * uv)
            }
        }
    }

    /// Matrix of the metric in the working basis. Both supported geometries use
    /// orthonormal ambient coordinates, so this is the identity.
    pub fn metric_matrix(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_dim(p.len())?;
        Ok(DMatrix::identity(p.len(), p.len()))
    }

    /// Map an arbitrary ambient vector onto the manifold (identity for `R^d`).
    pub fn project_point(&self, p: &mut DVector<f64>) {
        if let Geometry::Hypersphere(_) = self {
            let n = p.norm();
            if n > 0.0 {
                *p /= n;
            }
        }
    }

    /// Remove the component of `v` normal to the manifold at `p`.
    pub fn project_tangent(&self, p: &DVector<f64>, v: &mut DVector<f64>) {
        if let Geometry::Hypersphere(_) = self {
            let pp = p.norm_squared();
            if pp > 0.0 {
                let c = p.dot(v) / pp;
                v.axpy(-c, p, 1.0);
            }
        }
    }

    /// An orthonormal basis of `T_p` as the columns of an
    /// `ambient_dim x intrinsic_dim` matrix.
    pub fn tangent_basis(&self, p: &DVector<f64>) -> DMatrix<f64> {
        match self {
            Geometry::Euclidean(d) => DMatrix::identity(*d, *d),
            Geometry::Hypersphere(d) => orthonormal_complement(p, *d),
        }
    }

    pub(crate) fn exp_into(&self, p: &[f64], v: &[f64], out: &mut [f64]) {
        match self {
            Geometry::Euclidean(_) => {
                for ((o, a), b) in out.iter_mut().zip(p).zip(v) {
                    *o = a + b;
                }
            }
            Geometry::Hypersphere(_) => {
                let n = dot(v, v).sqrt();
                if n < ZERO_NORM {
                    out.copy_from_slice(p);
                    return;
                }
                let (s, c) = n.sin_cos();
                for ((o, a), b) in out.iter_mut().zip(p).zip(v) {
                    *o = c * a + s * b / n;
                }
            }
        }
    }

    /// Writes `log_p(q)` into `out` and returns its length.
    pub(crate) fn log_into(&self, p: &[f64], q: &[f64], out: &mut [f64]) -> Result<f64> {
        match self {
            Geometry::Euclidean(_) => {
                let mut n2 = 0.0;
                for ((o, a), b) in out.iter_mut().zip(p).zip(q) {
                    *o = b - a;
                    n2 += *o * *o;
                }
                Ok(n2.sqrt())
            }
            Geometry::Hypersphere(_) => {
                let c = dot(p, q);
                if c <= -1.0 + ANTIPODAL_TOL {
                    return Err(Error::CutLocus { inner: c });
                }
                let mut n2 = 0.0;
                for ((o, a), b) in out.iter_mut().zip(p).zip(q) {
                    *o = b - c * a;
                    n2 += *o * *o;
                }
                let s = n2.sqrt();
                let theta = s.atan2(c);
                if s < ZERO_NORM {
                    out.iter_mut().for_each(|o| *o = 0.0);
                    return Ok(0.0);
                }
                let scale = theta / s;
                out.iter_mut().for_each(|o| *o *= scale);
                Ok(theta)
            }
        }
    }

    pub(crate) fn distance_slices(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            Geometry::Euclidean(_) => sq_dist(p, q).sqrt(),
            Geometry::Hypersphere(_) => {
                let c = dot(p, q);
                let s2: f64 = p
                    .iter()
                    .zip(q)
                    .map(|(a, b)| {
                        let w = b - c * a;
                        w * w
                    })
                    .sum();
                s2.sqrt().atan2(c)
            }
        }
    }
}

/// Coordinate chart `(theta, phi) -> (sin t cos f, sin t sin f, cos t)` on `S^2`,
/// with `theta` the polar angle. Its metric is `diag(1, sin^2 theta)`; the poles
/// are excluded.
#[derive(Clone, Copy, Debug, Default)]
pub struct SphericalChart;

impl SphericalChart {
    const POLE_TOL: f64 = 1e-12;

    fn check(&self, coords: &DVector<f64>) -> Result<()> {
        if coords.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: coords.len(),
            });
        }
        let theta = coords[0];
        if !(theta > Self::POLE_TOL && theta < std::f64::consts::PI - Self::POLE_TOL) {
            return Err(Error::ChartDomain(format!(
                "polar angle {theta} outside (0, pi)"
            )));
        }
        Ok(())
    }

    pub fn metric_matrix(&self, coords: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(coords)?;
        let s = coords[0].sin();
        Ok(DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, s * s])))
    }

    pub fn embed(&self, coords: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(coords)?;
        let (st, ct) = coords[0].sin_cos();
        let (sf, cf) = coords[1].sin_cos();
        Ok(DVector::from_vec(vec![st * cf, st * sf, ct]))
    }

    /// Jacobian of [`Self::embed`]: maps chart tangent vectors to extrinsic ones.
    pub fn jacobian(&self, coords: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check(coords)?;
        let (st, ct) = coords[0].sin_cos();
        let (sf, cf) = coords[1].sin_cos();
        Ok(DMatrix::from_row_slice(
            3,
            2,
            &[ct * cf, -st * sf, ct * sf, st * cf, -st, 0.0],
        ))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Orthonormal basis (as columns) of the orthogonal complement of `p`.
fn orthonormal_complement(p: &DVector<f64>, cols: usize) -> DMatrix<f64> {
    let n = p.len();
    let pn = p.normalize();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(cols);
    // Gram-Schmidt over the standard basis, starting with the axes least aligned with p.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| pn[a].abs().total_cmp(&pn[b].abs()));
    for &axis in &order {
        if basis.len() == cols {
            break;
        }
        let mut e = DVector::zeros(n);
        e[axis] = 1.0;
        e.axpy(-pn.dot(&e), &pn, 1.0);
        for b in &basis {
            let c = b.dot(&e);
            e.axpy(-c, b, 1.0);
        }
        let norm = e.norm();
        if norm > 1e-8 {
            basis.push(e / norm);
        }
    }
    DMatrix::from_columns(&basis)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn euclidean_exp_of_zero() {
        let g = Geometry::Euclidean(2);
        assert_eq!(g.exp(&v(&[1.0, 2.0]), &v(&[0.0, 0.0])).unwrap(), v(&[1.0, 2.0]));
    }

    #[test]
    fn sphere_quarter_circle() {
        let g = Geometry::Hypersphere(2);
        let q = g.exp(&v(&[0.0, 0.0, 1.0]), &v(&[PI / 2.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(q, v(&[1.0, 0.0, 0.0]), epsilon = 1e-15);
        let l = g.log(&v(&[0.0, 0.0, 1.0]), &v(&[1.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(l, v(&[PI / 2.0, 0.0, 0.0]), epsilon = 1e-15);
    }

    #[test]
    fn sphere_exp_is_periodic() {
        let g = Geometry::Hypersphere(2);
        let p = v(&[0.0, 0.6, 0.8]);
        let t = v(&[1.0, 0.0, 0.0]) * (2.0 * PI);
        assert_relative_eq!(g.exp(&p, &t).unwrap(), p, epsilon = 1e-8);
    }

    #[test]
    fn log_of_self_is_zero() {
        for g in [Geometry::Euclidean(3), Geometry::Hypersphere(2)] {
            let p = v(&[0.0, 0.6, 0.8]);
            assert_eq!(g.log(&p, &p).unwrap().norm(), 0.0);
        }
        let g = Geometry::Euclidean(2);
        assert_eq!(g.log(&v(&[1.0, 1.0]), &v(&[3.0, -1.0])).unwrap(), v(&[2.0, -2.0]));
    }

    #[test]
    fn antipodal_log_is_cut_locus() {
        let g = Geometry::Hypersphere(2);
        let err = g.log(&v(&[0.0, 0.0, 1.0]), &v(&[0.0, 0.0, -1.0])).unwrap_err();
        assert!(matches!(err, Error::CutLocus { .. }));
        assert!(g
            .parallel_transport(&v(&[0.0, 0.0, 1.0]), &v(&[0.0, 0.0, -1.0]), &v(&[1.0, 0.0, 0.0]))
            .is_err());
    }

    #[test]
    fn dimension_mismatch() {
        let g = Geometry::Euclidean(3);
        assert!(matches!(
            g.exp(&v(&[1.0, 2.0]), &v(&[0.0, 0.0])),
            Err(Error::DimensionMismatch { expected: 3, found: 2 })
        ));
    }

    #[test]
    fn euclidean_transport_is_identity() {
        let g = Geometry::Euclidean(3);
        let w = v(&[1.0, -2.0, 0.5]);
        assert_eq!(g.parallel_transport(&v(&[0.0; 3]), &v(&[4.0, 1.0, 2.0]), &w).unwrap(), w);
    }

    #[test]
    fn transport_of_geodesic_velocity() {
        let g = Geometry::Hypersphere(2);
        let x = v(&[0.0, 0.0, 1.0]);
        let y = v(&[0.6, 0.0, 0.8]);
        let u = g.log(&x, &y).unwrap();
        let moved = g.parallel_transport(&x, &y, &u).unwrap();
        // Terminal velocity of t -> exp_x(t u) at t = 1 equals -log_y(x).
        let back = -g.log(&y, &x).unwrap();
        assert_relative_eq!(moved, back, epsilon = 1e-12);
        // Normal to the great-circle plane: unchanged.
        let n = v(&[0.0, 1.0, 0.0]);
        assert_relative_eq!(g.parallel_transport(&x, &y, &n).unwrap(), n, epsilon = 1e-15);
    }

    #[test]
    fn metric_matrices() {
        assert_eq!(
            Geometry::Euclidean(3).metric_matrix(&v(&[0.0; 3])).unwrap(),
            DMatrix::identity(3, 3)
        );
        let chart = SphericalChart;
        assert_relative_eq!(
            chart.metric_matrix(&v(&[PI / 2.0, 0.3])).unwrap(),
            DMatrix::identity(2, 2),
            epsilon = 1e-15
        );
        let h = chart.metric_matrix(&v(&[PI / 4.0, 0.0])).unwrap();
        assert_relative_eq!(h[(1, 1)], 0.5, epsilon = 1e-15);
        assert!(matches!(
            chart.metric_matrix(&v(&[0.0, 0.0])),
            Err(Error::ChartDomain(_))
        ));
    }

    #[test]
    fn chart_metric_is_pullback() {
        let chart = SphericalChart;
        let c = v(&[1.1, -0.4]);
        let j = chart.jacobian(&c).unwrap();
        assert_relative_eq!(j.transpose() * &j, chart.metric_matrix(&c).unwrap(), epsilon = 1e-14);
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        let g = Geometry::Hypersphere(3);
        let p = v(&[0.5, 0.5, 0.5, 0.5]);
        let b = g.tangent_basis(&p);
        assert_eq!(b.shape(), (4, 3));
        assert_relative_eq!(b.transpose() * &b, DMatrix::identity(3, 3), epsilon = 1e-12);
        assert!((b.transpose() * &p).norm() < 1e-12);
    }

    fn unit(dim: usize) -> impl Strategy<Value = DVector<f64>> {
        prop::collection::vec(-1.0f64..1.0, dim)
            .prop_filter("non-degenerate", |x| x.iter().map(|a| a * a).sum::<f64>() > 1e-2)
            .prop_map(|x| DVector::from_vec(x).normalize())
    }

    proptest! {
        #[test]
        fn sphere_exp_log_roundtrip(p in unit(4), q in unit(4)) {
            let g = Geometry::Hypersphere(3);
            prop_assume!(g.distance(&p, &q).unwrap() < PI - 0.1);
            let l = g.log(&p, &q).unwrap();
            prop_assert!((g.exp(&p, &l).unwrap() - &q).norm() < 1e-8);
            prop_assert!((l.norm() - p.dot(&q).clamp(-1.0, 1.0).acos()).abs() < 1e-9);
            prop_assert!(l.dot(&p).abs() < 1e-9);
        }

        #[test]
        fn sphere_transport_is_isometric(
            x in unit(3), y in unit(3),
            a in prop::collection::vec(-1.0f64..1.0, 3),
            b in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let g = Geometry::Hypersphere(2);
            prop_assume!(x.dot(&y) > -0.99);
            let mut va = DVector::from_vec(a);
            let mut vb = DVector::from_vec(b);
            g.project_tangent(&x, &mut va);
            g.project_tangent(&x, &mut vb);
            let ta = g.parallel_transport(&x, &y, &va).unwrap();
            let tb = g.parallel_transport(&x, &y, &vb).unwrap();
            prop_assert!((ta.dot(&tb) - va.dot(&vb)).abs() < 1e-9);
            prop_assert!(ta.dot(&y).abs() < 1e-9);
        }
    }
}
