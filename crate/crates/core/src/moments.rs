//! Kernel-weighted local moments of a point cloud.
//!
//! At a query point `p` every observation receives a normalized kernel weight
//! `w_i(p)`. The weights define the local mean `m(p)` and a local second moment,
//! either centered at `m(p)` or (for principal flows) at `p` itself. On the
//! sphere the differences `x_i - p` are replaced by Riemannian logarithms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::{sq_dist, Geometry};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};

/// Default threshold below which normalized weights are dropped.
pub const DEFAULT_CUTOFF: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Gaussian density with standard deviation `alpha`.
    Gaussian,
    /// Constant kernel, the `alpha -> infinity` limit.
    Constant,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub kind: KernelKind,
    /// Kernel range.
    pub alpha: f64,
    /// Normalized weights below this value are set to zero.
    pub cutoff: f64,
}

impl KernelConfig {
    pub fn gaussian(alpha: f64) -> Self {
        Self {
            kind: KernelKind::Gaussian,
            alpha,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn constant() -> Self {
        Self {
            kind: KernelKind::Constant,
            alpha: f64::INFINITY,
            cutoff: 0.0,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = cutoff;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::invalid(format!("kernel range must be positive, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(Error::invalid(format!("cutoff must lie in [0, 1), got {}", self.cutoff)));
        }
        Ok(())
    }

    /// Kernel value as a function of the squared distance.
    #[inline]
    pub fn eval_sq(&self, t2: f64) -> f64 {
        match self.kind {
            KernelKind::Gaussian => (-t2 / (2.0 * self.alpha * self.alpha)).exp(),
            KernelKind::Constant => 1.0,
        }
    }

    /// `d/dp K(|x - p|) = K(|x - p|) * (x - p) * factor`; returns `factor`.
    #[inline]
    pub(crate) fn log_derivative_factor(&self) -> f64 {
        match self.kind {
            KernelKind::Gaussian => 1.0 / (self.alpha * self.alpha),
            KernelKind::Constant => 0.0,
        }
    }
}

/// Which second moment to build at a query point `p`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentMode {
    /// Centered at `m(p)` with the weights recomputed at `m(p)`.
    CenteredRecomputed,
    /// Centered at `m(p)`, reusing the weights `w_i(p)`.
    CenteredCheap,
    /// Centered at `p` itself (principal flow).
    Uncentered,
}

/// Non-zero entries of a normalized weight vector.
#[derive(Clone, Debug, Default)]
pub(crate) struct SparseWeights {
    pub idx: Vec<usize>,
    pub w: Vec<f64>,
}

impl SparseWeights {
    fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for (&i, &w) in self.idx.iter().zip(&self.w) {
            out[i] = w;
        }
        out
    }
}

/// Output of [`second_moment`].
#[derive(Clone, Debug)]
pub struct MomentResult {
    /// Weights used in the second moment (`w(m(p))` in recomputed mode).
    pub weights: Vec<f64>,
    /// The local mean `m(p)`.
    pub mean: DVector<f64>,
    /// Point whose tangent space holds the second moment: `m(p)`, or `p` in
    /// uncentered mode.
    pub center: DVector<f64>,
    pub second_moment: DMatrix<f64>,
}

pub(crate) fn normalize_weights(raw: &[f64], cutoff: f64) -> Result<SparseWeights> {
    let total: f64 = raw.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::EmptyNeighborhood);
    }
    let mut sw = SparseWeights::default();
    let threshold = cutoff * total;
    let mut kept = 0.0;
    for (i, &r) in raw.iter().enumerate() {
        if r > 0.0 && r >= threshold {
            sw.idx.push(i);
            sw.w.push(r);
            kept += r;
        }
    }
    if sw.idx.is_empty() || !(kept > 0.0) {
        return Err(Error::EmptyNeighborhood);
    }
    sw.w.iter_mut().for_each(|w| *w /= kept);
    Ok(sw)
}

/// Weights of a Euclidean cloud at `p` computed from squared distances.
pub(crate) fn euclidean_weights(
    cloud: &PointCloud,
    p: &[f64],
    kernel: &KernelConfig,
) -> Result<SparseWeights> {
    let raw: Vec<f64> = cloud.points().map(|x| kernel.eval_sq(sq_dist(x, p))).collect();
    normalize_weights(&raw, kernel.cutoff)
}

/// Riemannian logarithms of every observation at `p`, row-major, plus lengths.
pub(crate) fn logs_at(cloud: &PointCloud, p: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let geom = cloud.geometry();
    let d = cloud.dim();
    let mut logs = vec![0.0; cloud.len() * d];
    let mut lens = Vec::with_capacity(cloud.len());
    for (x, out) in cloud.points().zip(logs.chunks_exact_mut(d)) {
        lens.push(geom.log_into(p, x, out)?);
    }
    Ok((logs, lens))
}

fn weights_from_lengths(lens: &[f64], kernel: &KernelConfig) -> Result<SparseWeights> {
    let raw: Vec<f64> = lens.iter().map(|t| kernel.eval_sq(t * t)).collect();
    normalize_weights(&raw, kernel.cutoff)
}

/// Normalized kernel weights `w_i(p)`, with distances measured by the cloud's geometry.
pub fn weights(cloud: &PointCloud, p: &DVector<f64>, kernel: &KernelConfig) -> Result<Vec<f64>> {
    kernel.validate()?;
    cloud.geometry().check_dim(p.len())?;
    let sw = match cloud.geometry() {
        Geometry::Euclidean(_) => euclidean_weights(cloud, p.as_slice(), kernel)?,
        Geometry::Hypersphere(_) => {
            let (_, lens) = logs_at(cloud, p.as_slice())?;
            weights_from_lengths(&lens, kernel)?
        }
    };
    Ok(sw.to_dense(cloud.len()))
}

/// Local mean `m(p)`: the weighted average in `R^d`, and `exp_p(sum_i w_i log_p x_i)`
/// on the sphere.
pub fn local_mean(cloud: &PointCloud, p: &DVector<f64>, kernel: &KernelConfig) -> Result<DVector<f64>> {
    kernel.validate()?;
    cloud.geometry().check_dim(p.len())?;
    match cloud.geometry() {
        Geometry::Euclidean(_) => {
            let sw = euclidean_weights(cloud, p.as_slice(), kernel)?;
            Ok(weighted_mean(cloud, &sw))
        }
        Geometry::Hypersphere(_) => manifold_mean(cloud, p.as_slice(), kernel).map(|(m, ..)| m),
    }
}

/// Local second moment at `p`. Euclidean clouds use the direct formulas; sphere
/// clouds go through [`second_moment_manifold`].
pub fn second_moment(
    cloud: &PointCloud,
    p: &DVector<f64>,
    kernel: &KernelConfig,
    mode: MomentMode,
) -> Result<MomentResult> {
    kernel.validate()?;
    cloud.geometry().check_dim(p.len())?;
    match cloud.geometry() {
        Geometry::Euclidean(_) => Ok(euclidean_moment(cloud, p.as_slice(), kernel, mode)?.into_result(cloud.len())),
        Geometry::Hypersphere(_) => second_moment_manifold(cloud, p, kernel, mode),
    }
}

/// Internal Euclidean moment with sparse weights, reused by the frame builder.
pub(crate) struct EuclideanMoment {
    /// Columns `x_i - center` for the observations with non-zero weight.
    pub centered: DMatrix<f64>,
    pub weights: SparseWeights,
    pub mean: DVector<f64>,
    pub center: DVector<f64>,
    pub sigma: DMatrix<f64>,
}

impl EuclideanMoment {
    fn into_result(self, n: usize) -> MomentResult {
        MomentResult {
            weights: self.weights.to_dense(n),
            mean: self.mean,
            center: self.center,
            second_moment: self.sigma,
        }
    }
}

pub(crate) fn euclidean_moment(
    cloud: &PointCloud,
    p: &[f64],
    kernel: &KernelConfig,
    mode: MomentMode,
) -> Result<EuclideanMoment> {
    let wp = euclidean_weights(cloud, p, kernel)?;
    let mean = weighted_mean(cloud, &wp);
    let (weights, center) = match mode {
        MomentMode::CenteredCheap => (wp, mean.clone()),
        MomentMode::CenteredRecomputed => (euclidean_weights(cloud, mean.as_slice(), kernel)?, mean.clone()),
        MomentMode::Uncentered => (wp, DVector::from_row_slice(p)),
    };
    let centered = centered_columns(cloud, &weights.idx, center.as_slice());
    let mut scaled = centered.clone();
    for (mut col, &w) in scaled.column_iter_mut().zip(&weights.w) {
        col *= w;
    }
    let sigma = gram(&centered, &scaled);
    Ok(EuclideanMoment {
        weights,
        mean,
        center,
        sigma,
        centered,
    })
}

/// Matrix whose columns are `x_i - c` for the listed observations.
pub(crate) fn centered_columns(cloud: &PointCloud, idx: &[usize], c: &[f64]) -> DMatrix<f64> {
    let mut t = DMatrix::zeros(cloud.dim(), idx.len());
    for (mut col, &i) in t.column_iter_mut().zip(idx) {
        for ((o, x), ck) in col.iter_mut().zip(cloud.point(i)).zip(c) {
            *o = x - ck;
        }
    }
    t
}

/// Symmetric `a b^T` for `d x n` matrices `a`, `b` whose product is symmetric
/// (`b` is `a` with rescaled columns).
pub(crate) fn gram(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, n) = a.shape();
    assert_eq!(b.shape(), (d, n));
    let mut out = DMatrix::zeros(d, d);
    if n > 0 && d > 0 {
        // SAFETY: all three buffers are column-major with the shapes and strides
        // given here: a is d x n (row stride 1, column stride d), b^T is read as
        // n x d with row stride d and column stride 1, and out is d x d.
        unsafe {
            matrixmultiply::dgemm(
                d,
                n,
                d,
                1.0,
                a.as_ptr(),
                1,
                d as isize,
                b.as_ptr(),
                d as isize,
                1,
                0.0,
                out.as_mut_ptr(),
                1,
                d as isize,
            );
        }
    }
    out.fill_lower_triangle_with_upper_triangle();
    out
}

fn weighted_mean(cloud: &PointCloud, sw: &SparseWeights) -> DVector<f64> {
    let mut m = DVector::zeros(cloud.dim());
    for (&i, &w) in sw.idx.iter().zip(&sw.w) {
        for (mk, xk) in m.iter_mut().zip(cloud.point(i)) {
            *mk += w * xk;
        }
    }
    m
}

/// `m(p) = exp_p(sum_i w_i(p) log_p x_i)`, together with the logs at `p`, their
/// lengths and the weights.
fn manifold_mean(
    cloud: &PointCloud,
    p: &[f64],
    kernel: &KernelConfig,
) -> Result<(DVector<f64>, Vec<f64>, SparseWeights)> {
    let geom = cloud.geometry();
    let d = cloud.dim();
    let (logs, lens) = logs_at(cloud, p)?;
    let wp = weights_from_lengths(&lens, kernel)?;
    let mut v = vec![0.0; d];
    for (&i, &w) in wp.idx.iter().zip(&wp.w) {
        for (vk, lk) in v.iter_mut().zip(&logs[i * d..(i + 1) * d]) {
            *vk += w * lk;
        }
    }
    let mut m = DVector::zeros(d);
    geom.exp_into(p, &v, m.as_mut_slice());
    Ok((m, logs, wp))
}

/// Second moment through Riemannian `log`/`exp` and coordinate tensors
/// `v v^T h`, valid for any supported geometry (including `R^d`).
pub fn second_moment_manifold(
    cloud: &PointCloud,
    p: &DVector<f64>,
    kernel: &KernelConfig,
    mode: MomentMode,
) -> Result<MomentResult> {
    kernel.validate()?;
    let geom = cloud.geometry();
    geom.check_dim(p.len())?;
    let d = cloud.dim();
    let (mean, logs_p, wp) = manifold_mean(cloud, p.as_slice(), kernel)?;
    let (weights, center, logs) = match mode {
        MomentMode::Uncentered => (wp, p.clone(), logs_p),
        MomentMode::CenteredCheap => {
            let (logs_m, _) = logs_at(cloud, mean.as_slice())?;
            (wp, mean.clone(), logs_m)
        }
        MomentMode::CenteredRecomputed => {
            let (logs_m, lens_m) = logs_at(cloud, mean.as_slice())?;
            (weights_from_lengths(&lens_m, kernel)?, mean.clone(), logs_m)
        }
    };
    let mut acc = vec![0.0; d * d];
    for (&i, &w) in weights.idx.iter().zip(&weights.w) {
        accumulate_outer(&mut acc, d, w, &logs[i * d..(i + 1) * d]);
    }
    let h = geom.metric_matrix(&center)?;
    let second_moment = symmetric_from_upper(&acc, d) * h;
    Ok(MomentResult {
        weights: weights.to_dense(cloud.len()),
        mean,
        center,
        second_moment,
    })
}

/// Euclidean moments of the logarithms `log_p x_i`, computed at the origin of
/// `T_p`: the single-tangent-space approximation of the manifold construction.
pub fn tangent_space_moment(
    cloud: &PointCloud,
    p: &DVector<f64>,
    kernel: &KernelConfig,
    mode: MomentMode,
) -> Result<MomentResult> {
    kernel.validate()?;
    let geom = cloud.geometry();
    geom.check_dim(p.len())?;
    let d = cloud.dim();
    let (logs, _) = logs_at(cloud, p.as_slice())?;
    let tangent = PointCloud::from_flat(Geometry::Euclidean(d), logs)?;
    let origin = vec![0.0; d];
    let m = euclidean_moment(&tangent, &origin, kernel, mode)?;
    let h = geom.metric_matrix(p)?;
    Ok(MomentResult {
        weights: m.weights.to_dense(cloud.len()),
        mean: m.mean,
        center: p.clone(),
        second_moment: m.sigma * h,
    })
}

/// Coordinate matrix `v u^T h` of the tensor `v (x) u` in a basis where the
/// metric has matrix `h`.
pub fn tensor_coordinates(v: &DVector<f64>, u: &DVector<f64>, h: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = v.len();
    if u.len() != n {
        return Err(Error::DimensionMismatch { expected: n, found: u.len() });
    }
    if h.nrows() != n || h.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, found: h.nrows().max(h.ncols()) });
    }
    Ok(v * u.transpose() * h)
}

#[inline]
pub(crate) fn accumulate_outer(acc: &mut [f64], d: usize, w: f64, c: &[f64]) {
    for a in 0..d {
        let wa = w * c[a];
        if wa == 0.0 {
            continue;
        }
        let row = &mut acc[a * d..(a + 1) * d];
        for b in a..d {
            row[b] += wa * c[b];
        }
    }
}

pub(crate) fn symmetric_from_upper(acc: &[f64], d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| if i <= j { acc[i * d + j] } else { acc[j * d + i] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn line_cloud(xs: &[f64]) -> PointCloud {
        PointCloud::from_flat(Geometry::Euclidean(1), xs.to_vec()).unwrap()
    }

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn constant_kernel_gives_uniform_weights() {
        let c = line_cloud(&[0.0, 1.0, 5.0, -2.0]);
        let w = weights(&c, &v(&[100.0]), &KernelConfig::constant()).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
    }

    #[test]
    fn single_point_has_unit_weight() {
        let c = line_cloud(&[3.0]);
        let w = weights(&c, &v(&[0.5]), &KernelConfig::gaussian(1.0)).unwrap();
        assert_eq!(w, vec![1.0]);
    }

    #[test]
    fn narrow_kernel_concentrates_on_the_query_observation() {
        // Gaps of at least 1 and alpha = 0.2: a neighbour's ratio is exp(-12.5) ~ 3.7e-6.
        let c = line_cloud(&[0.0, 1.0, 2.5, 4.0, 5.5]);
        let kernel = KernelConfig::gaussian(0.2).with_cutoff(0.0);
        let w = weights(&c, &v(&[2.5]), &kernel).unwrap();
        let neighbour = (-(1.5f64 * 1.5) / (2.0 * 0.04)).exp();
        let expected = 1.0 / (1.0 + 2.0 * neighbour + 2.0 * (-(3.0f64 * 3.0) / 0.08).exp());
        assert_relative_eq!(w[2], expected, epsilon = 1e-14);
        assert!(w[2] > 0.99);
    }

    #[test]
    fn underflow_is_empty_neighborhood() {
        let c = line_cloud(&[0.0, 1.0]);
        let err = weights(&c, &v(&[1e6]), &KernelConfig::gaussian(0.1)).unwrap_err();
        assert!(matches!(err, Error::EmptyNeighborhood));
    }

    #[test]
    fn cutoff_drops_and_renormalizes() {
        let c = line_cloud(&[0.0, 0.1, 10.0]);
        let w = weights(&c, &v(&[0.0]), &KernelConfig::gaussian(1.0)).unwrap();
        assert_eq!(w[2], 0.0);
        assert_relative_eq!(w[0] + w[1], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn invalid_kernels_are_rejected() {
        let c = line_cloud(&[0.0]);
        assert!(weights(&c, &v(&[0.0]), &KernelConfig::gaussian(0.0)).is_err());
        assert!(weights(&c, &v(&[0.0]), &KernelConfig::gaussian(1.0).with_cutoff(1.0)).is_err());
    }

    #[test]
    fn constant_kernel_mean_and_covariance_are_the_sample_ones() {
        let pts = [1.0, 2.0, 0.0, 1.0, 3.0, 5.0, -1.0, 0.5];
        let c = PointCloud::from_flat(Geometry::Euclidean(2), pts.to_vec()).unwrap();
        let k = KernelConfig::constant();
        let m = local_mean(&c, &v(&[7.0, 7.0]), &k).unwrap();
        assert_relative_eq!(m, v(&[0.75, 2.125]), epsilon = 1e-15);
        let r = second_moment(&c, &v(&[7.0, 7.0]), &k, MomentMode::CenteredRecomputed).unwrap();
        let mut cov = DMatrix::zeros(2, 2);
        for x in pts.chunks(2) {
            let dx = v(x) - &m;
            cov += &dx * dx.transpose() / 4.0;
        }
        assert_relative_eq!(r.second_moment, cov, epsilon = 1e-14);
    }

    #[test]
    fn identical_observations() {
        let c = PointCloud::from_flat(Geometry::Euclidean(2), vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0]).unwrap();
        let k = KernelConfig::gaussian(1.0);
        assert_relative_eq!(local_mean(&c, &v(&[1.2, -0.9]), &k).unwrap(), v(&[1.0, -1.0]));
        let r = second_moment(&c, &v(&[1.0, -1.0]), &k, MomentMode::CenteredCheap).unwrap();
        assert!(r.second_moment.norm() < 1e-15);
    }

    #[test]
    fn planar_cloud_has_zero_third_row() {
        let pts: Vec<f64> = (0..20)
            .flat_map(|i| {
                let t = i as f64 * 0.37;
                [t.cos() * (1.0 + 0.1 * i as f64), (2.0 * t).sin(), 0.0]
            })
            .collect();
        let c = PointCloud::from_flat(Geometry::Euclidean(3), pts).unwrap();
        for mode in [MomentMode::CenteredCheap, MomentMode::CenteredRecomputed] {
            let r = second_moment(&c, &v(&[0.2, 0.1, 0.0]), &KernelConfig::gaussian(1.0), mode).unwrap();
            for j in 0..3 {
                assert_eq!(r.second_moment[(2, j)], 0.0);
                assert_eq!(r.second_moment[(j, 2)], 0.0);
            }
        }
        // Off the plane, the uncentered moment picks up the offset.
        let r = second_moment(&c, &v(&[0.2, 0.1, 0.5]), &KernelConfig::gaussian(1.0), MomentMode::Uncentered).unwrap();
        assert!(r.second_moment[(2, 2)] > 0.2);
    }

    #[test]
    fn sphere_midpoint() {
        let c = PointCloud::from_flat(Geometry::Hypersphere(2), vec![1.0, 0.0, 0.0, 0.0, 1.0, 0.0]).unwrap();
        let m = local_mean(&c, &v(&[0.6, 0.8, 0.0]), &KernelConfig::constant()).unwrap();
        let h = 0.5f64.sqrt();
        // exp_p(0.5 log_p a + 0.5 log_p b) with p on the arc equals the arc midpoint.
        assert_relative_eq!(m, v(&[h, h, 0.0]), epsilon = 1e-12);
    }

    #[test]
    fn tensor_coordinate_examples() {
        let h = DMatrix::from_diagonal(&v(&[1.0, 0.5]));
        let t = tensor_coordinates(&v(&[1.0, 0.0]), &v(&[0.0, 1.0]), &h).unwrap();
        assert_eq!(t, DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.0, 0.0]));
        let a = v(&[1.0, 2.0]);
        let b = v(&[-1.0, 3.0]);
        assert_eq!(
            tensor_coordinates(&a, &b, &DMatrix::identity(2, 2)).unwrap(),
            &a * b.transpose()
        );
        assert!(tensor_coordinates(&a, &v(&[1.0]), &h).is_err());
    }
}
