//! Experiment runners. Each takes a validated configuration and returns the
//! report plus CSV tables.

use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use subflow::geodesics::{integrate_partial, GeodesicPath, Scheme};
use subflow::io::write_submanifold_csv;
use subflow::logmap::{sr_log, SearchSpace};
use subflow::moments::{local_mean, MomentMode};
use subflow::subbundle::{FrameProvider, PrincipalSubbundle};
use subflow::submanifold::{
    combine, frechet_base_point, generate, project_discrete, unit_coefficients, BaseMetric, PrincipalSubmanifold,
};
use subflow::{Error, PointCloud, Result};

use crate::baselines::{join_branches, resample, sse_to_curve, tangent_pca_geodesic, CURVE_RESOLUTION};
use crate::config::{BaseChoice, BaseSpec, ExperimentConfig, ExperimentId};
use crate::data::{load_data, replicate_seed, Dataset, Truth};
use crate::generators::bumpy_radial_error;
use crate::report::*;
use crate::stats::{mean, median, sd, spearman};

/// Run the experiment described by `cfg`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let start = Instant::now();
    let (metrics, artifacts) = match cfg.experiment {
        ExperimentId::SphereGeodesics | ExperimentId::Integrators => sphere_geodesics(cfg)?,
        ExperimentId::Distance => distance(cfg)?,
        ExperimentId::SphereCurves => sphere_curves(cfg)?,
        ExperimentId::SSurface => s_surface(cfg)?,
        ExperimentId::SurfaceSmoke | ExperimentId::Reconstruct => surface(cfg)?,
    };
    Ok(RunOutput {
        report: RunReport {
            config: cfg.clone(),
            wall_clock_s: start.elapsed().as_secs_f64(),
            metrics,
        },
        artifacts,
    })
}

type Artifacts = Vec<(String, Vec<u8>)>;

fn dataset(cfg: &ExperimentConfig, replicate: usize) -> Result<Dataset> {
    let data = load_data(&cfg.data, replicate_seed(cfg.seed, replicate))?;
    if data.cloud.is_empty() {
        return Err(crate::data::empty_cloud());
    }
    Ok(data)
}

/// Resolve a configured base to a point of the ambient geometry.
pub fn resolve_base(cloud: &PointCloud, spec: &BaseSpec, cfg: &ExperimentConfig) -> Result<DVector<f64>> {
    let geom = cloud.geometry();
    let point = match &spec.choice {
        BaseChoice::Point { coords } => {
            geom.check_dim(coords.len())?;
            let mut p = DVector::from_column_slice(coords);
            geom.project_point(&mut p);
            p
        }
        BaseChoice::Observation { index } => {
            if *index >= cloud.len() {
                return Err(Error::InvalidArgument(format!(
                    "observation {index} out of range for {} points",
                    cloud.len()
                )));
            }
            cloud.point_vec(*index)
        }
        BaseChoice::Frechet => frechet_base_point(cloud, &BaseMetric::Ambient, None)?.observation,
    };
    if spec.local_mean {
        local_mean(cloud, &point, &cfg.subbundle.kernel())
    } else {
        Ok(point)
    }
}

fn csv_row(out: &mut String, fields: impl IntoIterator<Item = String>) {
    let row: Vec<String> = fields.into_iter().collect();
    out.push_str(&row.join(","));
    out.push('\n');
}

fn scheme_name(s: Scheme) -> &'static str {
    match s {
        Scheme::Euler => "euler",
        Scheme::SemiImplicitEuler => "semi_implicit_euler",
    }
}

fn sphere_geodesics(cfg: &ExperimentConfig) -> Result<(Metrics, Artifacts)> {
    let data = dataset(cfg, 0)?;
    let cloud = &data.cloud;
    let provider = PrincipalSubbundle::new(cloud, cfg.subbundle.to_config())?;
    let spec = &cfg.numeric.bases[0];
    let mu = resolve_base(cloud, spec, cfg)?;
    let target = -&mu / mu.norm();
    let frame = provider.frame(&mu)?;
    let covectors: Vec<DVector<f64>> = unit_coefficients(cfg.subbundle.k, cfg.numeric.geodesics)?
        .iter()
        .map(|c| &frame.frame * c)
        .collect();

    let mut schemes = Vec::new();
    let mut trace = String::new();
    let n = cloud.dim();
    let mut header = vec!["scheme".to_string(), "i".into(), "j".into(), "t".into()];
    header.extend((0..n).map(|c| format!("x{c}")));
    header.push("h".into());
    csv_row(&mut trace, header);
    for &scheme in &cfg.numeric.schemes {
        let opts = cfg.numeric.integration(scheme);
        let clock = Instant::now();
        let paths: Vec<Result<(GeodesicPath, Option<Error>)>> = covectors
            .par_iter()
            .map(|eta| integrate_partial(&provider, &mu, eta, spec.radius, cfg.numeric.delta, &opts))
            .collect();
        let seconds = clock.elapsed().as_secs_f64();
        let mut norms = Vec::new();
        let mut endpoint = Vec::new();
        let mut drift = Vec::new();
        let mut truncated = 0;
        for (i, path) in paths.into_iter().enumerate() {
            let (path, err) = path?;
            if err.is_some() {
                truncated += 1;
            }
            norms.extend(path.positions().map(|p| p.norm()));
            endpoint.push((path.endpoint() - &target).norm());
            drift.push(path.relative_drift());
            for (j, (s, h)) in path.states.iter().zip(&path.hamiltonian_trace).enumerate() {
                let mut row = vec![
                    scheme_name(scheme).to_string(),
                    i.to_string(),
                    j.to_string(),
                    format!("{:?}", j as f64 * path.step),
                ];
                row.extend(s.p.iter().map(|x| format!("{x:?}")));
                row.push(format!("{h:?}"));
                csv_row(&mut trace, row);
            }
        }
        schemes.push(SchemeSummary {
            scheme,
            mean_norm: mean(&norms),
            sd_norm: sd(&norms),
            mean_endpoint_distance: mean(&endpoint),
            mean_relative_drift: mean(&drift),
            max_relative_drift: drift.iter().copied().fold(0.0, f64::max),
            geodesics: covectors.len(),
            truncated,
            seconds,
        });
    }
    Ok((Metrics::Geodesics { schemes }, vec![("geodesics.csv".into(), trace.into_bytes())]))
}

fn distance(cfg: &ExperimentConfig) -> Result<(Metrics, Artifacts)> {
    let (p, q) = cfg.numeric.endpoints.clone().expect("validated");
    let p = DVector::from_vec(p);
    let q = DVector::from_vec(q);
    let mut log = cfg.numeric.log;
    log.integration = cfg.numeric.integration(cfg.numeric.schemes[0]);
    log.final_step = cfg.numeric.delta;
    let mut rows = Vec::with_capacity(cfg.replicates);
    for replicate in 0..cfg.replicates {
        let data = dataset(cfg, replicate)?;
        let provider = PrincipalSubbundle::new(&data.cloud, cfg.subbundle.to_config())?;
        let r = sr_log(&provider, &p, &q, SearchSpace::FullCotangent, &log)?;
        rows.push(DistanceRow {
            replicate,
            distance: (2.0 * r.hamiltonian).sqrt(),
            residual: r.residual,
            converged: r.converged,
        });
    }
    let ds: Vec<f64> = rows.iter().map(|r| r.distance).collect();
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch { expected: p.len(), found: q.len() });
    }
    // Great-circle distance of the two endpoints on the true sphere.
    let target = (p.dot(&q) / (p.norm() * q.norm())).clamp(-1.0, 1.0).acos();
    let mut table = String::from("replicate,distance,residual,converged\n");
    for r in &rows {
        writeln!(table, "{},{:?},{:?},{}", r.replicate, r.distance, r.residual, r.converged).unwrap();
    }
    let m = mean(&ds);
    Ok((
        Metrics::Distance(DistanceSummary {
            target,
            mean: m,
            sd: sd(&ds),
            relative_error: (m - target).abs() / target,
            rows,
        }),
        vec![("distances.csv".into(), table.into_bytes())],
    ))
}

/// Curve through `mu` traced by the two unit geodesics of a rank-one subbundle.
fn subbundle_curve(
    provider: &dyn FrameProvider,
    mu: &DVector<f64>,
    radius: f64,
    cfg: &ExperimentConfig,
) -> Result<Vec<DVector<f64>>> {
    let frame = provider.frame(mu)?;
    let eta = frame.frame.column(0).into_owned();
    let opts = cfg.numeric.integration(cfg.numeric.schemes[0]);
    let mut branches = Vec::with_capacity(2);
    for sign in [-1.0, 1.0] {
        let (path, _) = integrate_partial(provider, mu, &(&eta * sign), radius, cfg.numeric.delta, &opts)?;
        branches.push(path.positions().cloned().collect::<Vec<_>>());
    }
    let joined = join_branches(&branches[0], &branches[1]);
    resample(&joined, CURVE_RESOLUTION, provider.geometry())
}

fn sphere_curves(cfg: &ExperimentConfig) -> Result<(Metrics, Artifacts)> {
    if cfg.subbundle.k != 1 {
        return Err(Error::InvalidArgument("curve fits need k = 1".into()));
    }
    let spec = &cfg.numeric.bases[0];
    let rows: Vec<Result<(CurveRow, String)>> = (0..cfg.replicates)
        .into_par_iter()
        .map(|replicate| {
            let data = dataset(cfg, replicate)?;
            let cloud = &data.cloud;
            let geom = cloud.geometry();
            let fre = frechet_base_point(cloud, &BaseMetric::Ambient, None)?;
            let mu = resolve_base(cloud, spec, cfg)?;
            let extent = (0..cloud.len())
                .map(|i| geom.distance(&mu, &cloud.point_vec(i)))
                .collect::<Result<Vec<f64>>>()?
                .into_iter()
                .fold(0.0, f64::max);
            let radius = extent.min(spec.radius);
            let mut failures = Vec::new();
            let mut curves = String::new();
            let mut fit = |name: &str, curve: Result<Vec<DVector<f64>>>| -> Option<f64> {
                match curve.and_then(|c| sse_to_curve(cloud, &c, geom).map(|s| (c, s))) {
                    Ok((c, s)) => {
                        for (j, x) in c.iter().enumerate() {
                            writeln!(curves, "{replicate},{name},{j},{:?},{:?},{:?}", x[0], x[1], x[2]).unwrap();
                        }
                        Some(s)
                    }
                    Err(e) => {
                        failures.push(format!("{name}: {e}"));
                        None
                    }
                }
            };
            let mut fit_mode = |name: &str, mode: MomentMode| {
                let mut sb = cfg.subbundle.clone();
                sb.mode = mode;
                let curve = PrincipalSubbundle::new(cloud, sb.to_config())
                    .and_then(|prov| subbundle_curve(&prov, &mu, radius, cfg));
                fit(name, curve)
            };
            let sse_centered = fit_mode("centered", MomentMode::CenteredRecomputed);
            let sse_uncentered = fit_mode("uncentered", MomentMode::Uncentered);
            let sse_tangent_pca = fit("tangent_pca", tangent_pca_geodesic(cloud, &mu, CURVE_RESOLUTION));
            Ok((
                CurveRow {
                    replicate,
                    base_index: fre.index,
                    radius,
                    sse_centered,
                    sse_uncentered,
                    sse_tangent_pca,
                    failures,
                },
                curves,
            ))
        })
        .collect();
    let mut table = String::from("replicate,base_index,radius,sse_centered,sse_uncentered,sse_tangent_pca\n");
    let mut curves = String::from("replicate,method,j,x0,x1,x2\n");
    let mut out = Vec::with_capacity(rows.len());
    for r in rows {
        let (row, c) = r?;
        let f = |x: Option<f64>| x.map_or("".to_string(), |v| format!("{v:?}"));
        writeln!(
            table,
            "{},{},{:?},{},{},{}",
            row.replicate,
            row.base_index,
            row.radius,
            f(row.sse_centered),
            f(row.sse_uncentered),
            f(row.sse_tangent_pca)
        )
        .unwrap();
        curves.push_str(&c);
        out.push(row);
    }
    let med = |get: fn(&CurveRow) -> Option<f64>| median(&out.iter().filter_map(get).collect::<Vec<_>>());
    Ok((
        Metrics::Curves(CurveSummary {
            median_centered: med(|r| r.sse_centered),
            median_uncentered: med(|r| r.sse_uncentered),
            median_tangent_pca: med(|r| r.sse_tangent_pca),
            rows: out,
        }),
        vec![("sse.csv".into(), table.into_bytes()), ("curves.csv".into(), curves.into_bytes())],
    ))
}

fn surface_error(truth: &Truth, p: &[f64]) -> Option<f64> {
    match truth {
        Truth::UnitSphere => Some((p.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs()),
        Truth::BumpySphere => Some(bumpy_radial_error(p)),
        _ => None,
    }
}

fn summarize(sub: &PrincipalSubmanifold, truth: &Truth) -> SubmanifoldSummary {
    let errs: Option<Vec<f64>> = sub.points.iter().map(|sp| surface_error(truth, sp.point.as_slice())).collect();
    SubmanifoldSummary {
        base: sub.mu.iter().copied().collect(),
        radius: sub.r,
        points: sub.len(),
        truncated: sub.truncated.len(),
        mean_surface_error: errs.map(|e| mean(&e)),
    }
}

fn submanifold_csv(sub: &PrincipalSubmanifold) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_submanifold_csv(sub, &mut buf)?;
    Ok(buf)
}

fn s_surface(cfg: &ExperimentConfig) -> Result<(Metrics, Artifacts)> {
    let data = dataset(cfg, 0)?;
    let Truth::SProfile(profile) = &data.truth else {
        return Err(Error::InvalidArgument("the S-surface experiment needs S-surface data".into()));
    };
    let cloud = &data.cloud;
    let provider = PrincipalSubbundle::new(cloud, cfg.subbundle.to_config())?;
    let spec = &cfg.numeric.bases[0];
    let mu = resolve_base(cloud, spec, cfg)?;
    let opts = cfg.numeric.integration(cfg.numeric.schemes[0]);
    let sub = generate(&provider, &mu, spec.radius, cfg.numeric.geodesics, cfg.numeric.delta, &opts)?;
    let proj: Vec<_> = (0..cloud.len())
        .into_par_iter()
        .map(|i| project_discrete(&cloud.point_vec(i), &sub))
        .collect::<Result<_>>()?;
    let spearman_by_axis = (0..sub.k)
        .map(|a| spearman(&proj.iter().map(|p| p.chart[a]).collect::<Vec<_>>(), profile))
        .collect();
    let mut chart = String::from("index,profile");
    for a in 0..sub.k {
        write!(chart, ",c{a}").unwrap();
    }
    chart.push('\n');
    for (i, p) in proj.iter().enumerate() {
        write!(chart, "{i},{:?}", profile[i]).unwrap();
        for c in p.chart.iter() {
            write!(chart, ",{c:?}").unwrap();
        }
        chart.push('\n');
    }
    Ok((
        Metrics::Chart(ChartSummary {
            submanifold: summarize(&sub, &data.truth),
            spearman: spearman_by_axis,
            mean_projection_distance: mean(&proj.iter().map(|p| p.distance).collect::<Vec<_>>()),
        }),
        vec![
            ("submanifold.csv".into(), submanifold_csv(&sub)?),
            ("chart.csv".into(), chart.into_bytes()),
        ],
    ))
}

fn surface(cfg: &ExperimentConfig) -> Result<(Metrics, Artifacts)> {
    let data = dataset(cfg, 0)?;
    let cloud = &data.cloud;
    let provider = PrincipalSubbundle::new(cloud, cfg.subbundle.to_config())?;
    let opts = cfg.numeric.integration(cfg.numeric.schemes[0]);
    let mut subs = Vec::with_capacity(cfg.numeric.bases.len());
    let mut artifacts = Vec::new();
    for (b, spec) in cfg.numeric.bases.iter().enumerate() {
        let mu = resolve_base(cloud, spec, cfg)?;
        let sub = generate(&provider, &mu, spec.radius, cfg.numeric.geodesics, cfg.numeric.delta, &opts)?;
        artifacts.push((format!("submanifold_{b}.csv"), submanifold_csv(&sub)?));
        subs.push(sub);
    }
    let mut combined = 0;
    let mut out_of_range = 0;
    let mut errors = Vec::new();
    if let Some(eps) = cfg.numeric.epsilon {
        let est: Vec<Result<DVector<f64>>> = (0..cloud.len())
            .into_par_iter()
            .map(|i| combine(&subs, &cloud.point_vec(i), eps, None))
            .collect();
        let mut table = String::from("index");
        for c in 0..cloud.dim() {
            write!(table, ",x{c}").unwrap();
        }
        table.push('\n');
        for (i, e) in est.into_iter().enumerate() {
            match e {
                Ok(x) => {
                    combined += 1;
                    errors.extend(surface_error(&data.truth, x.as_slice()));
                    write!(table, "{i}").unwrap();
                    for v in x.iter() {
                        write!(table, ",{v:?}").unwrap();
                    }
                    table.push('\n');
                }
                Err(Error::NoSubmanifoldInRange) => out_of_range += 1,
                Err(e) => return Err(e),
            }
        }
        artifacts.push(("combined.csv".into(), table.into_bytes()));
    }
    Ok((
        Metrics::Surface(SurfaceSummary {
            submanifolds: subs.iter().map(|s| summarize(s, &data.truth)).collect(),
            combined,
            out_of_range,
            mean_combined_error: (!errors.is_empty()).then(|| mean(&errors)),
        }),
        artifacts,
    ))
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GapRow {
    pub alpha: f64,
    /// Mean of `(lambda_k - lambda_{k+1}) / lambda_1` over the sampled observations.
    pub mean_relative_gap: f64,
    /// Observations where the frame could not be computed at all.
    pub failures: usize,
}

/// Eigen-gap diagnostics for choosing the kernel range: one row per `alpha`,
/// averaged over up to `sample` observations drawn with `seed`.
pub fn eigen_gap_report(
    cloud: &PointCloud,
    k: usize,
    alphas: &[f64],
    sample: usize,
    seed: u64,
) -> Result<Vec<GapRow>> {
    use rand::seq::index;
    if cloud.is_empty() {
        return Err(crate::data::empty_cloud());
    }
    let mut rng = crate::generators::rng(seed);
    let mut idx = index::sample(&mut rng, cloud.len(), sample.min(cloud.len())).into_vec();
    idx.sort_unstable();
    alphas
        .iter()
        .map(|&alpha| {
            let mut cfg = subflow::subbundle::SubbundleConfig::new(
                k,
                subflow::moments::KernelConfig::gaussian(alpha).with_cutoff(0.0),
            );
            cfg.gap_tol = 0.0;
            cfg.validate(cloud.geometry())?;
            let gaps: Vec<Option<f64>> = idx
                .par_iter()
                .map(|&i| match subflow::subbundle::principal_frame(cloud, &cloud.point_vec(i), &cfg) {
                    Ok(f) if f.eigvals[0] > 0.0 => Some(f.gap / f.eigvals[0]),
                    Ok(_) => None,
                    Err(Error::SingularPoint { .. }) => Some(0.0),
                    Err(_) => None,
                })
                .collect();
            let ok: Vec<f64> = gaps.iter().flatten().copied().collect();
            Ok(GapRow {
                alpha,
                mean_relative_gap: mean(&ok),
                failures: gaps.len() - ok.len(),
            })
        })
        .collect()
}
