//! Reference curves and curve-fit error.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use subflow::{Error, Geometry, PointCloud, Result};

/// Number of points used to discretize fitted curves before measuring SSE.
pub const CURVE_RESOLUTION: usize = 2000;

/// First principal geodesic from tangent PCA at `base`.
///
/// The observations are mapped to `T_base` by the Riemannian logarithm, the
/// leading eigenvector `v` of their second moment about the origin is found,
/// and `t -> exp_base(t v)` is sampled for `t` between the smallest and largest
/// projection of the logs onto `v`.
pub fn tangent_pca_geodesic(cloud: &PointCloud, base: &DVector<f64>, resolution: usize) -> Result<Vec<DVector<f64>>> {
    let geom = cloud.geometry();
    geom.check_dim(base.len())?;
    if cloud.is_empty() || resolution < 2 {
        return Err(Error::InvalidArgument("need observations and at least two curve points".into()));
    }
    let logs = cloud
        .points()
        .map(|x| geom.log(base, &DVector::from_row_slice(x)))
        .collect::<Result<Vec<_>>>()?;
    let d = base.len();
    let mut sigma = DMatrix::zeros(d, d);
    for v in &logs {
        sigma.ger(1.0 / logs.len() as f64, v, v, 1.0);
    }
    let eig = SymmetricEigen::new(sigma);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let (l1, l2) = (eig.eigenvalues[order[0]], eig.eigenvalues.get(order.get(1).copied().unwrap_or(0)).copied().unwrap_or(0.0));
    let scale = logs.iter().map(|v| v.norm_squared()).fold(0.0, f64::max);
    if !(l1 > 1e-14 * scale.max(f64::MIN_POSITIVE)) || !(l1 - l2 > 1e-12 * l1) {
        return Err(Error::SingularPoint { gap: l1 - l2, step: None });
    }
    let v: DVector<f64> = eig.eigenvectors.column(order[0]).into_owned();
    let ts: Vec<f64> = logs.iter().map(|u| u.dot(&v)).collect();
    let lo = ts.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ts.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..resolution)
        .map(|n| {
            let t = lo + (hi - lo) * n as f64 / (resolution - 1) as f64;
            geom.exp(base, &(&v * t))
        })
        .collect()
}

/// Sum over observations of the squared geodesic distance to the nearest
/// curve point.
pub fn sse_to_curve(cloud: &PointCloud, curve: &[DVector<f64>], geom: Geometry) -> Result<f64> {
    if curve.is_empty() {
        return Err(Error::InvalidArgument("empty curve".into()));
    }
    let mut total = 0.0;
    for x in cloud.points() {
        let x = DVector::from_row_slice(x);
        let mut best = f64::INFINITY;
        for c in curve {
            best = best.min(geom.distance(&x, c)?);
        }
        total += best * best;
    }
    Ok(total)
}

/// Resample a polyline to `n` points evenly spaced in geodesic arc length.
pub fn resample(curve: &[DVector<f64>], n: usize, geom: Geometry) -> Result<Vec<DVector<f64>>> {
    if curve.is_empty() || n == 0 {
        return Err(Error::InvalidArgument("cannot resample an empty curve".into()));
    }
    if curve.len() == 1 || n == 1 {
        return Ok(vec![curve[0].clone(); n]);
    }
    let mut cum = Vec::with_capacity(curve.len());
    cum.push(0.0);
    for w in curve.windows(2) {
        let last = *cum.last().unwrap();
        cum.push(last + geom.distance(&w[0], &w[1])?);
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for m in 0..n {
        let s = total * m as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let len = cum[seg + 1] - cum[seg];
        let f = if len > 0.0 { ((s - cum[seg]) / len).clamp(0.0, 1.0) } else { 0.0 };
        let dir = geom.log(&curve[seg], &curve[seg + 1])?;
        out.push(geom.exp(&curve[seg], &(dir * f))?);
    }
    Ok(out)
}

/// Join two curves launched from a common base point in opposite directions
/// into one polyline running from the end of `back` through the base to the
/// end of `forward`.
pub fn join_branches(back: &[DVector<f64>], forward: &[DVector<f64>]) -> Vec<DVector<f64>> {
    let mut out: Vec<DVector<f64>> = back.iter().rev().cloned().collect();
    let skip = usize::from(!out.is_empty() && !forward.is_empty() && out.last() == forward.first());
    out.extend(forward.iter().skip(skip).cloned());
    out
}
