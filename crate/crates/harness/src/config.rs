//! Experiment configuration: a fully serializable description of one run.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use subflow::geodesics::{GradientMethod, IntegrationOptions, Scheme};
use subflow::logmap::LogOptions;
use subflow::moments::{KernelConfig, MomentMode};
use subflow::subbundle::{SubbundleConfig, DEFAULT_GAP_TOL};
use subflow::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentId {
    /// Geodesics through a (noisy) sphere cloud in `R^3`.
    SphereGeodesics,
    /// The sphere-geodesic run repeated for each integration scheme.
    Integrators,
    /// Learned distance between two fixed points of a sphere in `R^d`.
    Distance,
    /// Curve fits to noisy polynomial curves on `S^2`.
    SphereCurves,
    /// 2D chart of the S-surface embedded in `R^d`.
    SSurface,
    /// Surface reconstruction on a synthetic bumpy sphere.
    SurfaceSmoke,
    /// Surface reconstruction from an external point cloud file.
    Reconstruct,
}

impl ExperimentId {
    pub const ALL: [ExperimentId; 7] = [
        ExperimentId::SphereGeodesics,
        ExperimentId::Integrators,
        ExperimentId::Distance,
        ExperimentId::SphereCurves,
        ExperimentId::SSurface,
        ExperimentId::SurfaceSmoke,
        ExperimentId::Reconstruct,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentId::SphereGeodesics => "sphere_geodesics",
            ExperimentId::Integrators => "integrators",
            ExperimentId::Distance => "distance",
            ExperimentId::SphereCurves => "sphere_curves",
            ExperimentId::SSurface => "s_surface",
            ExperimentId::SurfaceSmoke => "surface_smoke",
            ExperimentId::Reconstruct => "reconstruct",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|id| id.name() == s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Csv,
    Ply,
}

impl FileFormat {
    /// Guess from the file extension; CSV unless it ends in `.ply`.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("ply") => FileFormat::Ply,
            _ => FileFormat::Csv,
        }
    }
}

/// Where the observations come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataSource {
    /// Uniform points on a `k_true`-sphere in `R^d` plus Gaussian noise of
    /// standard deviation `sigma`.
    SphereCloud { n: usize, k_true: usize, d: usize, sigma: f64 },
    /// The S-surface padded to `d` coordinates, noise standard deviation `sigma`.
    SSurface { n: usize, sigma: f64, d: usize },
    /// Noisy polynomial curves on `S^2`; `variance` is the marginal tangent variance.
    SphereCurves { n: usize, variance: f64 },
    /// Star-shaped bumpy sphere in `R^3`.
    BumpySphere { n: usize, sigma: f64 },
    /// Point cloud file; `sphere` reinterprets rows as points of the unit sphere.
    File {
        path: PathBuf,
        format: Option<FileFormat>,
        #[serde(default)]
        sphere: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubbundleParams {
    pub k: usize,
    /// Gaussian kernel range; `None` selects the constant kernel.
    pub alpha: Option<f64>,
    /// Relative weight cutoff.
    pub cutoff: f64,
    pub mode: MomentMode,
    #[serde(default = "default_gap_tol")]
    pub gap_tol: f64,
    #[serde(default)]
    pub tangent_approx: bool,
}

fn default_gap_tol() -> f64 {
    DEFAULT_GAP_TOL
}

impl SubbundleParams {
    pub fn kernel(&self) -> KernelConfig {
        let k = match self.alpha {
            Some(a) => KernelConfig::gaussian(a),
            None => KernelConfig::constant(),
        };
        k.with_cutoff(self.cutoff)
    }

    pub fn to_config(&self) -> SubbundleConfig {
        let mut cfg = SubbundleConfig::new(self.k, self.kernel()).with_mode(self.mode);
        cfg.gap_tol = self.gap_tol;
        cfg.tangent_approx = self.tangent_approx;
        cfg
    }
}

/// How to pick the base point of a principal submanifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BaseChoice {
    /// A fixed ambient point.
    Point { coords: Vec<f64> },
    /// A given observation.
    Observation { index: usize },
    /// Within-sample Fréchet mean under the ambient geodesic distance.
    Frechet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseSpec {
    pub choice: BaseChoice,
    /// Replace the chosen point by the kernel-weighted local mean around it.
    #[serde(default)]
    pub local_mean: bool,
    /// Radius `r` (or integration time `T`) of the geodesics from this base.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericParams {
    /// Integration step `Delta`.
    pub delta: f64,
    /// Number of geodesics `L`.
    pub geodesics: usize,
    pub schemes: Vec<Scheme>,
    pub gradient: GradientMethod,
    #[serde(default = "default_divergence")]
    pub divergence_factor: f64,
    #[serde(default)]
    pub bases: Vec<BaseSpec>,
    /// Endpoints of the distance experiment.
    #[serde(default)]
    pub endpoints: Option<(Vec<f64>, Vec<f64>)>,
    #[serde(default)]
    pub log: LogOptions,
    /// Threshold of the multi-submanifold combination; no combination when absent.
    #[serde(default)]
    pub epsilon: Option<f64>,
}

fn default_divergence() -> f64 {
    IntegrationOptions::default().divergence_factor
}

impl NumericParams {
    pub fn integration(&self, scheme: Scheme) -> IntegrationOptions {
        IntegrationOptions {
            scheme,
            gradient: self.gradient,
            divergence_factor: self.divergence_factor,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub seed: u64,
    #[serde(default = "one")]
    pub replicates: usize,
    pub data: DataSource,
    pub subbundle: SubbundleParams,
    pub numeric: NumericParams,
    /// Directory receiving the report and CSV artifacts.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Parse {
            location: format!("line {}, column {}", e.line(), e.column()),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs are always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if !(self.numeric.delta > 0.0) || !self.numeric.delta.is_finite() {
            return bad("delta must be positive");
        }
        if self.numeric.schemes.is_empty() {
            return bad("at least one integration scheme is required");
        }
        if self.numeric.geodesics == 0 {
            return bad("geodesics must be at least 1");
        }
        if let Some(e) = self.numeric.epsilon {
            if !(e > 0.0) {
                return bad("epsilon must be positive");
            }
        }
        for b in &self.numeric.bases {
            if !(b.radius > 0.0) || !b.radius.is_finite() {
                return bad("base radius must be positive");
            }
        }
        self.subbundle.kernel().validate()?;
        if self.subbundle.k == 0 {
            return bad("k must be at least 1");
        }
        let needs_bases = matches!(
            self.experiment,
            ExperimentId::SphereGeodesics
                | ExperimentId::Integrators
                | ExperimentId::SSurface
                | ExperimentId::SurfaceSmoke
                | ExperimentId::Reconstruct
        );
        if needs_bases && self.numeric.bases.is_empty() {
            return bad("this experiment needs at least one base point");
        }
        if self.experiment == ExperimentId::Distance && self.numeric.endpoints.is_none() {
            return bad("the distance experiment needs endpoints");
        }
        Ok(())
    }

    /// Settings of each experiment at the scale used in its original setting.
    pub fn preset(id: ExperimentId) -> Self {
        let cfg = match id {
            ExperimentId::SphereGeodesics | ExperimentId::Integrators => Self {
                experiment: id,
                seed: 0,
                replicates: 1,
                data: DataSource::SphereCloud {
                    n: 2000,
                    k_true: 2,
                    d: 3,
                    sigma: 0.0,
                },
                subbundle: SubbundleParams {
                    k: 2,
                    alpha: Some(0.25),
                    cutoff: 0.0,
                    mode: MomentMode::CenteredCheap,
                    gap_tol: DEFAULT_GAP_TOL,
                    tangent_approx: false,
                },
                numeric: NumericParams {
                    delta: 1e-3,
                    geodesics: 75,
                    schemes: if id == ExperimentId::Integrators {
                        vec![Scheme::Euler, Scheme::SemiImplicitEuler]
                    } else {
                        vec![Scheme::Euler]
                    },
                    gradient: GradientMethod::Analytic,
                    divergence_factor: default_divergence(),
                    bases: vec![BaseSpec {
                        choice: BaseChoice::Point {
                            coords: vec![0.0, -1.0, 0.0],
                        },
                        local_mean: false,
                        radius: std::f64::consts::PI,
                    }],
                    endpoints: None,
                    log: LogOptions::default(),
                    epsilon: None,
                },
                output_dir: None,
            },
            ExperimentId::Distance => {
                let d = 50;
                let mut p = vec![0.0; d];
                p[0] = 1.0;
                let mut q = vec![0.0; d];
                q[0] = -(0.5f64).sqrt();
                q[1] = -(0.5f64).sqrt();
                Self {
                    experiment: id,
                    seed: 0,
                    replicates: 20,
                    data: DataSource::SphereCloud {
                        n: 10000,
                        k_true: 4,
                        d,
                        sigma: 0.01,
                    },
                    subbundle: SubbundleParams {
                        k: 4,
                        alpha: Some(0.3),
                        cutoff: 0.0,
                        mode: MomentMode::CenteredCheap,
                        gap_tol: DEFAULT_GAP_TOL,
                        tangent_approx: false,
                    },
                    numeric: NumericParams {
                        delta: 1e-3,
                        geodesics: 1,
                        schemes: vec![Scheme::Euler],
                        gradient: GradientMethod::Analytic,
                        divergence_factor: default_divergence(),
                        bases: Vec::new(),
                        endpoints: Some((p, q)),
                        // A dual-subbundle warm start followed by a short
                        // full-cotangent refinement; see `LogOptions`.
                        log: LogOptions {
                            warm_start_iter: 100,
                            deterministic_starts: false,
                            random_starts: 0,
                            max_iter: 2,
                            ..LogOptions::default()
                        },
                        epsilon: None,
                    },
                    output_dir: None,
                }
            }
            ExperimentId::SphereCurves => Self {
                experiment: id,
                seed: 0,
                replicates: 20,
                data: DataSource::SphereCurves {
                    n: 100,
                    variance: 5e-4,
                },
                subbundle: SubbundleParams {
                    k: 1,
                    alpha: Some(0.045),
                    cutoff: 0.0,
                    mode: MomentMode::CenteredRecomputed,
                    gap_tol: DEFAULT_GAP_TOL,
                    tangent_approx: false,
                },
                numeric: NumericParams {
                    delta: 1e-3,
                    geodesics: 2,
                    schemes: vec![Scheme::Euler],
                    gradient: GradientMethod::default(),
                    divergence_factor: default_divergence(),
                    bases: vec![BaseSpec {
                        choice: BaseChoice::Frechet,
                        local_mean: false,
                        radius: 3.0,
                    }],
                    endpoints: None,
                    log: LogOptions::default(),
                    epsilon: None,
                },
                output_dir: None,
            },
            ExperimentId::SSurface => Self {
                experiment: id,
                seed: 0,
                replicates: 1,
                data: DataSource::SSurface {
                    n: 3000,
                    sigma: 0.025,
                    d: 100,
                },
                subbundle: SubbundleParams {
                    k: 2,
                    alpha: Some(0.01),
                    cutoff: 0.0,
                    mode: MomentMode::CenteredCheap,
                    gap_tol: DEFAULT_GAP_TOL,
                    tangent_approx: false,
                },
                numeric: NumericParams {
                    delta: 1e-2,
                    geodesics: 64,
                    schemes: vec![Scheme::Euler],
                    gradient: GradientMethod::Analytic,
                    divergence_factor: default_divergence(),
                    bases: vec![BaseSpec {
                        choice: BaseChoice::Frechet,
                        local_mean: true,
                        radius: 1.8,
                    }],
                    endpoints: None,
                    log: LogOptions::default(),
                    epsilon: None,
                },
                output_dir: None,
            },
            ExperimentId::SurfaceSmoke | ExperimentId::Reconstruct => Self {
                experiment: id,
                seed: 0,
                replicates: 1,
                data: if id == ExperimentId::SurfaceSmoke {
                    DataSource::BumpySphere { n: 3000, sigma: 0.005 }
                } else {
                    DataSource::File {
                        path: PathBuf::from("cloud.ply"),
                        format: None,
                        sphere: false,
                    }
                },
                subbundle: SubbundleParams {
                    k: 2,
                    alpha: Some(if id == ExperimentId::SurfaceSmoke { 0.1 } else { 0.001 }),
                    cutoff: 0.0,
                    mode: MomentMode::CenteredCheap,
                    gap_tol: DEFAULT_GAP_TOL,
                    tangent_approx: false,
                },
                numeric: NumericParams {
                    delta: if id == ExperimentId::SurfaceSmoke { 1e-2 } else { 1e-3 },
                    geodesics: if id == ExperimentId::SurfaceSmoke { 48 } else { 2500 },
                    schemes: vec![Scheme::Euler],
                    gradient: GradientMethod::Analytic,
                    divergence_factor: default_divergence(),
                    bases: if id == ExperimentId::SurfaceSmoke {
                        vec![
                            BaseSpec {
                                choice: BaseChoice::Observation { index: 0 },
                                local_mean: true,
                                radius: 0.3,
                            },
                            BaseSpec {
                                choice: BaseChoice::Observation { index: 1 },
                                local_mean: true,
                                radius: 0.25,
                            },
                        ]
                    } else {
                        vec![
                            BaseSpec {
                                choice: BaseChoice::Frechet,
                                local_mean: true,
                                radius: 0.3,
                            },
                            BaseSpec {
                                choice: BaseChoice::Observation { index: 0 },
                                local_mean: true,
                                radius: 0.25,
                            },
                        ]
                    },
                    endpoints: None,
                    log: LogOptions::default(),
                    epsilon: Some(if id == ExperimentId::SurfaceSmoke { 0.05 } else { 0.01 }),
                },
                output_dir: None,
            },
        };
        debug_assert!(cfg.validate().is_ok());
        cfg
    }
}
