//! Principal submanifolds: unions of normal geodesics launched from a base
//! point by unit covectors in the dual subbundle.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::ambient::{sq_dist, Geometry};
use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::geodesics::{integrate, sr_exp, IntegrationOptions};
use crate::logmap::{sr_distance, sr_log, LogOptions, SearchSpace};
use crate::moments::{local_mean, KernelConfig};
use crate::subbundle::FrameProvider;

/// Seed of the random covector grid used for `k >= 4`.
pub const COVECTOR_SEED: u64 = 0;

/// A stored point of a principal submanifold.
#[derive(Clone, Debug, PartialEq)]
pub struct SubmanifoldPoint {
    /// Geodesic index; the base point is stored once with `i = j = 0`.
    pub i: usize,
    /// Step index along the geodesic.
    pub j: usize,
    /// Arc length `j * delta` from the base point.
    pub arclen: f64,
    pub point: DVector<f64>,
    /// Chart coordinates `j * delta * c_i` in the basis `F_mu`.
    pub chart: DVector<f64>,
}

/// A geodesic dropped from the grid because integration failed.
#[derive(Clone, Debug, PartialEq)]
pub struct TruncatedGeodesic {
    pub i: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct PrincipalSubmanifold {
    pub geometry: Geometry,
    pub mu: DVector<f64>,
    pub r: f64,
    pub k: usize,
    pub delta: f64,
    /// Orthonormal frame `F_mu` of the subbundle at the base point.
    pub frame_mu: DMatrix<f64>,
    /// Unit coefficient vectors `c_i`; the initial covectors are `F_mu c_i`.
    pub coefficients: Vec<DVector<f64>>,
    pub points: Vec<SubmanifoldPoint>,
    pub truncated: Vec<TruncatedGeodesic>,
}

impl PrincipalSubmanifold {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of steps per geodesic, `floor(r / delta)`.
    pub fn steps(&self) -> usize {
        steps_for(self.r, self.delta)
    }

    /// Initial covector `eta_i = F_mu c_i`.
    pub fn covector(&self, i: usize) -> DVector<f64> {
        &self.frame_mu * &self.coefficients[i]
    }
}

fn steps_for(r: f64, delta: f64) -> usize {
    (r / delta + 1e-9).floor() as usize
}

/// Unit vectors of `R^k` at which geodesics are launched.
///
/// `k = 1`: `+1` then `-1` (at most two). `k = 2`: angles `2 pi i / L`.
/// `k = 3`: Fibonacci spiral. `k >= 4`: normalized Gaussian draws, seed 0.
pub fn unit_coefficients(k: usize, l: usize) -> Result<Vec<DVector<f64>>> {
    if k == 0 || l == 0 {
        return Err(Error::invalid("need k >= 1 and at least one geodesic"));
    }
    match k {
        1 => {
            if l > 2 {
                return Err(Error::invalid("rank one admits at most two unit covectors"));
            }
            Ok([1.0, -1.0][..l].iter().map(|&s| DVector::from_element(1, s)).collect())
        }
        2 => Ok((0..l)
            .map(|i| {
                let a = 2.0 * std::f64::consts::PI * i as f64 / l as f64;
                DVector::from_row_slice(&[a.cos(), a.sin()])
            })
            .collect()),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            Ok((0..l)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / l as f64;
                    let rho = (1.0 - z * z).max(0.0).sqrt();
                    let phi = golden * i as f64;
                    DVector::from_row_slice(&[rho * phi.cos(), rho * phi.sin(), z])
                })
                .collect())
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(COVECTOR_SEED);
            let mut out = Vec::with_capacity(l);
            while out.len() < l {
                let z = DVector::<f64>::from_fn(k, |_, _| StandardNormal.sample(&mut rng));
                let n = z.norm();
                if n > 1e-12 {
                    out.push(z / n);
                }
            }
            Ok(out)
        }
    }
}

/// Generate the point set of `M_mu(r)` from `L` unit-speed geodesics of step `delta`.
pub fn generate(
    provider: &dyn FrameProvider,
    mu: &DVector<f64>,
    r: f64,
    l: usize,
    delta: f64,
    opts: &IntegrationOptions,
) -> Result<PrincipalSubmanifold> {
    let geom = provider.geometry();
    geom.check_dim(mu.len())?;
    if !(r > 0.0) || !(delta > 0.0) {
        return Err(Error::invalid("radius and step must be positive"));
    }
    let s = steps_for(r, delta);
    if s == 0 {
        return Err(Error::invalid("radius shorter than one step"));
    }
    let mut mu = mu.clone();
    geom.project_point(&mut mu);
    let frame = provider.frame(&mu)?;
    let coefficients = unit_coefficients(frame.k, l)?;

    let paths: Vec<Result<Vec<DVector<f64>>>> = coefficients
        .par_iter()
        .map(|c| {
            let eta = &frame.frame * c;
            integrate(provider, &mu, &eta, s as f64 * delta, delta, opts)
                .map(|path| path.states.into_iter().map(|st| st.p).collect())
        })
        .collect();

    let k = frame.k;
    let mut points = Vec::with_capacity(s * l + 1);
    points.push(SubmanifoldPoint {
        i: 0,
        j: 0,
        arclen: 0.0,
        point: mu.clone(),
        chart: DVector::zeros(k),
    });
    let mut truncated = Vec::new();
    for (i, (path, c)) in paths.into_iter().zip(&coefficients).enumerate() {
        match path {
            Ok(ps) => {
                for (j, p) in ps.into_iter().enumerate().skip(1) {
                    let arclen = j as f64 * delta;
                    points.push(SubmanifoldPoint {
                        i,
                        j,
                        arclen,
                        point: p,
                        chart: c * arclen,
                    });
                }
            }
            Err(e) if e.is_numerical() => truncated.push(TruncatedGeodesic {
                i,
                reason: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    Ok(PrincipalSubmanifold {
        geometry: geom,
        mu,
        r,
        k,
        delta,
        frame_mu: frame.frame,
        coefficients,
        points,
        truncated,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteProjection {
    /// Position in `PrincipalSubmanifold::points`.
    pub index: usize,
    pub point: DVector<f64>,
    pub chart: DVector<f64>,
    /// Euclidean distance in the ambient coordinates.
    pub distance: f64,
}

/// Nearest stored point by ambient Euclidean distance. Ties go to the point
/// stored first, which is the lowest `(i, j)`.
pub fn project_discrete(x: &DVector<f64>, sub: &PrincipalSubmanifold) -> Result<DiscreteProjection> {
    sub.geometry.check_dim(x.len())?;
    let (index, d2) = sub
        .points
        .iter()
        .enumerate()
        .map(|(n, sp)| (n, sq_dist(sp.point.as_slice(), x.as_slice())))
        .fold(None, |best: Option<(usize, f64)>, cur| match best {
            Some(b) if b.1 <= cur.1 => Some(b),
            _ => Some(cur),
        })
        .ok_or_else(|| Error::invalid("empty submanifold"))?;
    let sp = &sub.points[index];
    Ok(DiscreteProjection {
        index,
        point: sp.point.clone(),
        chart: sp.chart.clone(),
        distance: d2.sqrt(),
    })
}

#[derive(Clone, Debug)]
pub struct ContinuousProjection {
    pub point: DVector<f64>,
    /// Coefficients of the recovered covector in the frame at the base point.
    pub chart: DVector<f64>,
    /// Distance between the input and its projection.
    pub residual: f64,
}

/// Project `x` onto `M_mu` by shooting the dual-subbundle logarithm of `x`.
pub fn project_continuous(
    provider: &dyn FrameProvider,
    x: &DVector<f64>,
    mu: &DVector<f64>,
    opts: &LogOptions,
) -> Result<ContinuousProjection> {
    let frame = provider.frame(mu)?;
    let log = sr_log(provider, mu, x, SearchSpace::DualSubbundle, opts)?;
    let point = sr_exp(provider, mu, &log.eta_hat, opts.final_step, &opts.integration)?;
    Ok(ContinuousProjection {
        residual: (&point - x).norm(),
        chart: frame.coefficients(&log.eta_hat),
        point,
    })
}

/// Distance used to select a within-sample Fréchet mean.
pub enum BaseMetric<'a> {
    /// Geodesic distance of the ambient geometry.
    Ambient,
    /// Learned sub-Riemannian distance estimate.
    SubRiemannian {
        provider: &'a dyn FrameProvider,
        opts: LogOptions,
    },
}

#[derive(Clone, Debug)]
pub struct FrechetBase {
    pub index: usize,
    pub observation: DVector<f64>,
    /// Local mean around the observation, when a kernel was supplied.
    pub local_mean: Option<DVector<f64>>,
}

impl FrechetBase {
    /// The local mean when available, else the observation itself.
    pub fn point(&self) -> &DVector<f64> {
        self.local_mean.as_ref().unwrap_or(&self.observation)
    }
}

/// Observation minimizing the mean distance to all others (lowest index on
/// ties), optionally followed by a local mean around it.
pub fn frechet_base_point(
    cloud: &PointCloud,
    metric: &BaseMetric,
    kernel: Option<&KernelConfig>,
) -> Result<FrechetBase> {
    if cloud.is_empty() {
        return Err(Error::invalid("empty point cloud"));
    }
    let geom = cloud.geometry();
    let n = cloud.len();
    let scores: Vec<Result<f64>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let pa = cloud.point(a);
            let mut total = 0.0;
            for b in 0..n {
                if a == b {
                    continue;
                }
                total += match metric {
                    BaseMetric::Ambient => geom.distance_slices(pa, cloud.point(b)),
                    BaseMetric::SubRiemannian { provider, opts } => {
                        sr_distance(*provider, &cloud.point_vec(a), &cloud.point_vec(b), opts, false)?
                    }
                };
            }
            Ok(total / n as f64)
        })
        .collect();
    let mut best: Option<(usize, f64)> = None;
    for (i, s) in scores.into_iter().enumerate() {
        let s = s?;
        if best.map_or(true, |(_, b)| s < b) {
            best = Some((i, s));
        }
    }
    let (index, _) = best.expect("non-empty cloud");
    let observation = cloud.point_vec(index);
    let local_mean = kernel.map(|k| local_mean(cloud, &observation, k)).transpose()?;
    Ok(FrechetBase {
        index,
        observation,
        local_mean,
    })
}

/// Weighted average of the projections of `x` onto several submanifolds.
///
/// Submanifolds whose projection lies farther than `epsilon` from `x` are
/// ignored; `epsilon` should be comparable to the noise level of the data.
/// `sigma` defaults to the largest radius.
pub fn combine(
    submanifolds: &[PrincipalSubmanifold],
    x: &DVector<f64>,
    epsilon: f64,
    sigma: Option<f64>,
) -> Result<DVector<f64>> {
    if submanifolds.is_empty() {
        return Err(Error::invalid("no submanifolds to combine"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::invalid("epsilon must be positive"));
    }
    let sigma = sigma.unwrap_or_else(|| submanifolds.iter().map(|s| s.r).fold(0.0, f64::max));
    if !(sigma > 0.0) {
        return Err(Error::invalid("sigma must be positive"));
    }
    let mut kept = Vec::new();
    for sub in submanifolds {
        let proj = project_discrete(x, sub)?;
        if proj.distance < epsilon {
            let d = sub.points[proj.index].arclen;
            let scale = (1.0 - d / sub.r).max(1e-12);
            kept.push((proj.point, d, d / scale));
        }
    }
    if kept.is_empty() {
        return Err(Error::NoSubmanifoldInRange);
    }
    let star = kept
        .iter()
        .enumerate()
        .min_by(|a, b| a.1 .1.total_cmp(&b.1 .1).then(a.0.cmp(&b.0)))
        .map(|(n, _)| n)
        .expect("non-empty");
    let d_star = kept[star].2;
    let mut total = 0.0;
    let mut acc = DVector::zeros(x.len());
    for (point, _, dt) in &kept {
        let w = (-(dt - d_star).powi(2) / (2.0 * sigma)).exp();
        acc.axpy(w, point, 1.0);
        total += w;
    }
    Ok(acc / total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::subbundle::FixedFrame;
    use approx::assert_relative_eq;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn flat_plane() -> FixedFrame {
        FixedFrame::new(Geometry::Euclidean(3), DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0])).unwrap()
    }

    #[test]
    fn coefficient_grids_are_unit() {
        for (k, l) in [(1, 2), (2, 7), (3, 20), (5, 9)] {
            let cs = unit_coefficients(k, l).unwrap();
            assert_eq!(cs.len(), l);
            assert!(cs.iter().all(|c| (c.norm() - 1.0).abs() < 1e-12 && c.len() == k));
        }
        assert!(unit_coefficients(1, 3).is_err());
        assert_eq!(unit_coefficients(5, 4).unwrap(), unit_coefficients(5, 4).unwrap());
    }

    #[test]
    fn point_count_is_s_l_plus_one() {
        let f = FixedFrame::new(Geometry::Euclidean(2), DMatrix::from_row_slice(2, 1, &[1.0, 0.0])).unwrap();
        let sub = generate(&f, &v(&[0.0, 0.0]), 0.5, 2, 0.1, &IntegrationOptions::default()).unwrap();
        assert_eq!(sub.len(), 11);
        assert_eq!(sub.points[0].i, 0);
        assert_eq!(sub.points[0].j, 0);
    }

    #[test]
    fn flat_submanifold_stays_in_plane() {
        let sub = generate(&flat_plane(), &v(&[0.1, 0.2, 0.0]), 0.3, 8, 0.01, &IntegrationOptions::default()).unwrap();
        for sp in &sub.points {
            assert!(sp.point[2].abs() < 1e-12);
            let offset = &sp.point.rows(0, 2) - v(&[0.1, 0.2]);
            assert!((offset - &sp.chart).norm() < 1e-12);
            assert_relative_eq!(sp.chart.norm(), sp.arclen, epsilon = 1e-12);
        }
    }

    #[test]
    fn discrete_projection_rules() {
        let sub = generate(&flat_plane(), &v(&[0.0, 0.0, 0.0]), 0.2, 4, 0.1, &IntegrationOptions::default()).unwrap();
        let stored = sub.points[3].point.clone();
        let p = project_discrete(&stored, &sub).unwrap();
        assert_eq!(p.index, 3);
        assert_eq!(p.distance, 0.0);
        let near_mu = project_discrete(&v(&[1e-6, -1e-6, 1e-6]), &sub).unwrap();
        assert_eq!(near_mu.index, 0);
        // (0.05, 0, 0) is equidistant from mu and (0.1, 0, 0); mu comes first.
        let tie = project_discrete(&v(&[0.05, 0.0, 0.0]), &sub).unwrap();
        assert_eq!(tie.index, 0);
    }

    #[test]
    fn frechet_examples() {
        let a = PointCloud::from_flat(Geometry::Euclidean(2), vec![-1.0, 2.0, 1.0, -2.0]).unwrap();
        assert_eq!(frechet_base_point(&a, &BaseMetric::Ambient, None).unwrap().index, 0);
        let b = PointCloud::from_flat(Geometry::Euclidean(1), vec![0.0, 2.0, 1.0]).unwrap();
        let base = frechet_base_point(&b, &BaseMetric::Ambient, Some(&KernelConfig::constant())).unwrap();
        assert_eq!(base.index, 2);
        assert_relative_eq!(base.point()[0], 1.0, epsilon = 1e-15);
    }

    #[test]
    fn combine_rules() {
        let one = generate(&flat_plane(), &v(&[0.0, 0.0, 0.0]), 0.5, 16, 0.01, &IntegrationOptions::default()).unwrap();
        let x = v(&[0.2, 0.0, 0.001]);
        let single = combine(std::slice::from_ref(&one), &x, 0.1, None).unwrap();
        assert_eq!(single, project_discrete(&x, &one).unwrap().point);
        let two = generate(&flat_plane(), &v(&[0.4, 0.0, 0.0]), 0.5, 16, 0.01, &IntegrationOptions::default()).unwrap();
        let both = combine(&[one.clone(), two.clone()], &x, 0.1, None).unwrap();
        let mean = (project_discrete(&x, &one).unwrap().point + project_discrete(&x, &two).unwrap().point) / 2.0;
        assert_relative_eq!(both, mean, epsilon = 1e-12);
        let far = combine(&[one, two], &v(&[0.2, 0.0, 1.0]), 0.1, None).unwrap_err();
        assert!(matches!(far, Error::NoSubmanifoldInRange));
    }
}
