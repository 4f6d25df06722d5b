//! Principal subbundle frames and the induced cometric.
//!
//! At a query point the top-`k` eigenvectors of the local second moment span a
//! `k`-dimensional subspace. On the sphere the eigenvectors are computed in the
//! tangent space at the local mean and transported back to the query point.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::ambient::Geometry;
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::moments::{
    centered_columns, euclidean_moment, euclidean_weights, second_moment_manifold, tangent_space_moment,
    KernelConfig, MomentMode,
};

/// Default relative eigen-gap tolerance: a point is singular when
/// `lambda_k - lambda_{k+1} <= DEFAULT_GAP_TOL * lambda_1`.
pub const DEFAULT_GAP_TOL: f64 = 1e-10;

/// Orthonormal frame of the subbundle at a base point.
#[derive(Clone, Debug)]
pub struct SubbundleFrame {
    pub base: DVector<f64>,
    /// `n x k` matrix with orthonormal columns.
    pub frame: DMatrix<f64>,
    /// Eigenvalues of the second moment in decreasing order.
    pub eigvals: Vec<f64>,
    /// `lambda_k - lambda_{k+1}`, with `lambda_{d+1} = 0` when `k = d`.
    pub gap: f64,
    pub k: usize,
}

impl SubbundleFrame {
    pub fn cometric(&self) -> Cometric {
        cometric(self)
    }

    /// Coefficients `F^T eta`.
    pub fn coefficients(&self, eta: &DVector<f64>) -> DVector<f64> {
        self.frame.tr_mul(eta)
    }

    /// `F F^T eta`, the cometric applied to `eta`.
    pub fn project(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.frame * self.coefficients(eta)
    }
}

/// The projection matrix `F F^T`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cometric(pub DMatrix<f64>);

impl Cometric {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn apply(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.0 * eta
    }
}

pub fn cometric(frame: &SubbundleFrame) -> Cometric {
    Cometric(&frame.frame * frame.frame.transpose())
}

/// Parameters of the principal subbundle construction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubbundleConfig {
    pub k: usize,
    pub kernel: KernelConfig,
    pub mode: MomentMode,
    /// Relative eigen-gap tolerance.
    pub gap_tol: f64,
    /// On the sphere, use the Euclidean pipeline on `log_p x_i` in a single
    /// tangent space instead of moving to the local mean.
    pub tangent_approx: bool,
}

impl SubbundleConfig {
    pub fn new(k: usize, kernel: KernelConfig) -> Self {
        Self {
            k,
            kernel,
            mode: MomentMode::CenteredCheap,
            gap_tol: DEFAULT_GAP_TOL,
            tangent_approx: false,
        }
    }

    pub fn with_mode(mut self, mode: MomentMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self, geom: Geometry) -> Result<()> {
        self.kernel.validate()?;
        if self.k == 0 || self.k > geom.intrinsic_dim() {
            return Err(Error::invalid(format!(
                "rank {} outside 1..={}",
                self.k,
                geom.intrinsic_dim()
            )));
        }
        if !(self.gap_tol >= 0.0) {
            return Err(Error::invalid("gap tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Symmetric eigendecomposition with eigenpairs sorted by decreasing eigenvalue.
pub(crate) fn sorted_eigen(sigma: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>) {
    let n = sigma.nrows();
    let eig = SymmetricEigen::new(sigma);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let u = DMatrix::from_fn(n, n, |i, j| eig.eigenvectors[(i, order[j])]);
    let lam = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    (u, lam)
}

fn spectral_gap(lam: &[f64], k: usize, gap_tol: f64) -> Result<f64> {
    let next = lam.get(k).copied().unwrap_or(0.0);
    let gap = lam[k - 1] - next;
    let scale = lam[0].max(0.0);
    if !(gap > gap_tol * scale) || !(gap > 0.0) {
        return Err(Error::SingularPoint { gap, step: None });
    }
    Ok(gap)
}

/// Flip each column so that its largest-magnitude entry is positive; ties go to
/// the lowest index.
pub fn apply_sign_convention(frame: &mut DMatrix<f64>) {
    for mut col in frame.column_iter_mut() {
        let mut best = 0;
        for (i, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Principal subbundle frame at `p`.
pub fn principal_frame(cloud: &PointCloud, p: &DVector<f64>, cfg: &SubbundleConfig) -> Result<SubbundleFrame> {
    let geom = cloud.geometry();
    cfg.validate(geom)?;
    geom.check_dim(p.len())?;
    match geom {
        Geometry::Euclidean(_) => euclidean_frame(cloud, p, cfg).map(|(f, _)| f),
        Geometry::Hypersphere(_) => sphere_frame(cloud, p, cfg),
    }
}

/// Frame of the uncentered second moment at `p` (principal flow).
pub fn principal_flow_frame(
    cloud: &PointCloud,
    p: &DVector<f64>,
    k: usize,
    kernel: &KernelConfig,
) -> Result<SubbundleFrame> {
    let cfg = SubbundleConfig::new(k, *kernel).with_mode(MomentMode::Uncentered);
    principal_frame(cloud, p, &cfg)
}

struct EuclideanSpectrum {
    moment: crate::moments::EuclideanMoment,
    u: DMatrix<f64>,
    lam: Vec<f64>,
}

fn euclidean_frame(
    cloud: &PointCloud,
    p: &DVector<f64>,
    cfg: &SubbundleConfig,
) -> Result<(SubbundleFrame, EuclideanSpectrum)> {
    let moment = euclidean_moment(cloud, p.as_slice(), &cfg.kernel, cfg.mode)?;
    let (u, lam) = sorted_eigen(moment.sigma.clone());
    let gap = spectral_gap(&lam, cfg.k, cfg.gap_tol)?;
    let mut frame = u.columns(0, cfg.k).into_owned();
    apply_sign_convention(&mut frame);
    let f = SubbundleFrame {
        base: p.clone(),
        frame,
        eigvals: lam.clone(),
        gap,
        k: cfg.k,
    };
    Ok((f, EuclideanSpectrum { moment, u, lam }))
}

fn sphere_frame(cloud: &PointCloud, p: &DVector<f64>, cfg: &SubbundleConfig) -> Result<SubbundleFrame> {
    let geom = cloud.geometry();
    let moment = if cfg.tangent_approx {
        tangent_space_moment(cloud, p, &cfg.kernel, cfg.mode)?
    } else {
        second_moment_manifold(cloud, p, &cfg.kernel, cfg.mode)?
    };
    let center = moment.center;
    let basis = geom.tangent_basis(&center);
    let restricted = basis.tr_mul(&(&moment.second_moment * &basis));
    let restricted = (&restricted + restricted.transpose()) * 0.5;
    let (u, lam) = sorted_eigen(restricted);
    let gap = spectral_gap(&lam, cfg.k, cfg.gap_tol)?;
    let top = &basis * u.columns(0, cfg.k);
    let mut frame = DMatrix::zeros(p.len(), cfg.k);
    for (a, col) in top.column_iter().enumerate() {
        let col = col.into_owned();
        let moved = if cfg.tangent_approx || cfg.mode == MomentMode::Uncentered {
            col
        } else {
            geom.parallel_transport(&center, p, &col)?
        };
        frame.set_column(a, &moved);
    }
    apply_sign_convention(&mut frame);
    Ok(SubbundleFrame {
        base: p.clone(),
        frame,
        eigvals: lam,
        gap,
        k: cfg.k,
    })
}

/// Analytic derivative of `H(p, eta) = |F(p)^T eta|^2 / 2` with respect to `p`
/// for Gaussian-weighted Euclidean moments, obtained by first-order
/// perturbation of the top-`k` eigenprojector.
#[derive(Clone, Debug)]
pub struct FrameDerivative {
    factor: f64,
    k: usize,
    u: DMatrix<f64>,
    lam: Vec<f64>,
    omega: DVector<f64>,
    /// Vectors entering the moment, one column per weighted observation.
    e: DMatrix<f64>,
    /// `ue[(a, i)] = u_a . e_i` for the top-`k` eigenvectors.
    ue: DMatrix<f64>,
    /// `sum_i omega_i e_i`, the first moment about the center.
    b: Option<DVector<f64>>,
    /// Weights and centered observations of the local mean, used to pull the
    /// gradient back through `m(p)` in recomputed mode.
    pullback: Option<(DVector<f64>, DMatrix<f64>)>,
}

impl FrameDerivative {
    fn build(cloud: &PointCloud, p: &[f64], cfg: &SubbundleConfig, spec: EuclideanSpectrum) -> Result<Self> {
        let d = cloud.dim();
        let k = cfg.k;
        let factor = cfg.kernel.log_derivative_factor();
        let EuclideanSpectrum { moment, u, lam } = spec;
        let center = moment.center.as_slice();
        let ws = &moment.weights;
        // The weights' own query point is p (cheap, uncentered) or m(p)
        // (recomputed); their gradient points along x_i minus the weighted
        // mean, which is e_i - b with b the first moment about the center.
        let mut weight_mean = DVector::<f64>::zeros(d);
        for (&i, &w) in ws.idx.iter().zip(&ws.w) {
            for (mk, xk) in weight_mean.iter_mut().zip(cloud.point(i)) {
                *mk += w * xk;
            }
        }
        let b = match cfg.mode {
            MomentMode::CenteredCheap => None,
            _ => Some(DVector::from_iterator(
                d,
                weight_mean.iter().zip(center).map(|(a, c)| a - c),
            )),
        };
        let pullback = if cfg.mode == MomentMode::CenteredRecomputed {
            let wp = euclidean_weights(cloud, p, &cfg.kernel)?;
            let m = &moment.mean;
            let c = centered_columns(cloud, &wp.idx, m.as_slice());
            Some((DVector::from_vec(wp.w), c))
        } else {
            None
        };
        let e = moment.centered;
        let ue = u.columns(0, k).transpose() * &e;
        Ok(Self {
            factor,
            k,
            u,
            lam,
            omega: DVector::from_vec(moment.weights.w),
            e,
            ue,
            b,
            pullback,
        })
    }

    /// `dH/dp` at the linearization point for covector `eta`.
    pub fn dh_dp(&self, eta: &DVector<f64>) -> DVector<f64> {
        let d = self.u.nrows();
        let k = self.k;
        let proj = self.u.tr_mul(eta);
        // v_a = sum_{j > k} s_a t_j / (lambda_a - lambda_j) u_j
        let mut coef = DMatrix::<f64>::zeros(d - k, k);
        for a in 0..k {
            for j in k..d {
                coef[(j - k, a)] = proj[a] * proj[j] / (self.lam[a] - self.lam[j]);
            }
        }
        let v = self.u.columns(k, d - k) * coef;
        let mut grad = DVector::zeros(d);
        if self.factor != 0.0 {
            let ve = v.transpose() * &self.e;
            let s = DVector::from_fn(self.omega.len(), |i, _| {
                let q = ve.column(i).dot(&self.ue.column(i));
                self.factor * self.omega[i] * q
            });
            grad.gemv(1.0, &self.e, &s, 0.0);
            if let Some(b) = &self.b {
                grad.axpy(-s.sum(), b, 1.0);
            }
        }
        if let Some(b) = &self.b {
            for a in 0..k {
                let ua = self.u.column(a);
                let va = v.column(a);
                let bu = b.dot(&ua);
                let vb = b.dot(&va);
                grad.axpy(-bu, &va, 1.0);
                grad.axpy(-vb, &ua, 1.0);
            }
        }
        if let Some((w, c)) = &self.pullback {
            let t = c.tr_mul(&grad).component_mul(w) * self.factor;
            grad = c * t;
        }
        grad
    }
}

/// Source of subbundle frames along a trajectory.
pub trait FrameProvider: Sync {
    fn geometry(&self) -> Geometry;

    fn rank(&self) -> usize;

    fn frame(&self, p: &DVector<f64>) -> Result<SubbundleFrame>;

    /// Center and radius of the data support, for divergence detection.
    fn support(&self) -> Option<(DVector<f64>, f64)> {
        None
    }

    /// Frame together with an analytic `dH/dp`, when the provider supports it.
    fn frame_with_derivative(&self, _p: &DVector<f64>) -> Option<Result<(SubbundleFrame, FrameDerivative)>> {
        None
    }
}

/// Frames from kernel-weighted local PCA of a point cloud.
#[derive(Clone, Debug)]
pub struct PrincipalSubbundle<'a> {
    cloud: &'a PointCloud,
    cfg: SubbundleConfig,
    support: (DVector<f64>, f64),
}

impl<'a> PrincipalSubbundle<'a> {
    pub fn new(cloud: &'a PointCloud, cfg: SubbundleConfig) -> Result<Self> {
        cfg.validate(cloud.geometry())?;
        if cloud.is_empty() {
            return Err(Error::invalid("empty point cloud"));
        }
        let support = cloud.bounding_ball();
        Ok(Self { cloud, cfg, support })
    }

    pub fn cloud(&self) -> &'a PointCloud {
        self.cloud
    }

    pub fn config(&self) -> &SubbundleConfig {
        &self.cfg
    }
}

impl FrameProvider for PrincipalSubbundle<'_> {
    fn geometry(&self) -> Geometry {
        self.cloud.geometry()
    }

    fn rank(&self) -> usize {
        self.cfg.k
    }

    fn frame(&self, p: &DVector<f64>) -> Result<SubbundleFrame> {
        principal_frame(self.cloud, p, &self.cfg)
    }

    fn support(&self) -> Option<(DVector<f64>, f64)> {
        Some(self.support.clone())
    }

    fn frame_with_derivative(&self, p: &DVector<f64>) -> Option<Result<(SubbundleFrame, FrameDerivative)>> {
        if !self.cloud.geometry().is_euclidean() {
            return None;
        }
        Some((|| {
            self.cloud.geometry().check_dim(p.len())?;
            let (frame, spec) = euclidean_frame(self.cloud, p, &self.cfg)?;
            let der = FrameDerivative::build(self.cloud, p.as_slice(), &self.cfg, spec)?;
            Ok((frame, der))
        })())
    }
}

/// Exact tangent spaces of the unit sphere `S^d`, posed in `R^{d+1}`: the
/// frame at `p` spans the orthogonal complement of `p`.
#[derive(Clone, Copy, Debug)]
pub struct ExactSphereFrames {
    pub dim: usize,
}

impl FrameProvider for ExactSphereFrames {
    fn geometry(&self) -> Geometry {
        Geometry::Euclidean(self.dim + 1)
    }

    fn rank(&self) -> usize {
        self.dim
    }

    fn frame(&self, p: &DVector<f64>) -> Result<SubbundleFrame> {
        self.geometry().check_dim(p.len())?;
        let n = p.norm();
        if n == 0.0 {
            return Err(Error::SingularPoint { gap: 0.0, step: None });
        }
        let mut frame = Geometry::Hypersphere(self.dim).tangent_basis(&(p / n));
        apply_sign_convention(&mut frame);
        let mut eigvals = vec![1.0; self.dim];
        eigvals.push(0.0);
        Ok(SubbundleFrame {
            base: p.clone(),
            frame,
            eigvals,
            gap: 1.0,
            k: self.dim,
        })
    }
}

/// The same frame at every point.
#[derive(Clone, Debug)]
pub struct FixedFrame {
    geometry: Geometry,
    frame: DMatrix<f64>,
}

impl FixedFrame {
    /// `frame` is orthonormalized; its columns must be linearly independent.
    pub fn new(geometry: Geometry, frame: DMatrix<f64>) -> Result<Self> {
        geometry.check_dim(frame.nrows())?;
        if !geometry.is_euclidean() {
            return Err(Error::invalid("a fixed frame requires a Euclidean geometry"));
        }
        let qr = frame.clone().qr();
        let mut q = qr.q().columns(0, frame.ncols()).into_owned();
        if qr.r().diagonal().iter().any(|x| x.abs() < 1e-12) {
            return Err(Error::invalid("frame columns are linearly dependent"));
        }
        apply_sign_convention(&mut q);
        Ok(Self { geometry, frame: q })
    }
}

impl FrameProvider for FixedFrame {
    fn geometry(&self) -> Geometry {
        self.geometry
    }

    fn rank(&self) -> usize {
        self.frame.ncols()
    }

    fn frame(&self, p: &DVector<f64>) -> Result<SubbundleFrame> {
        self.geometry.check_dim(p.len())?;
        let k = self.frame.ncols();
        let mut eigvals = vec![1.0; k];
        eigvals.resize(p.len(), 0.0);
        Ok(SubbundleFrame {
            base: p.clone(),
            frame: self.frame.clone(),
            eigvals,
            gap: 1.0,
            k,
        })
    }
}
