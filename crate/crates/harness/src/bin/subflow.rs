//! Command-line front end for the subflow experiments and primitives.

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use subflow::geodesics::{integrate, GradientMethod, IntegrationOptions, Scheme};
use subflow::io::{encode_submanifold, write_csv, write_submanifold_csv};
use subflow::logmap::{sr_distance, sr_log, LogOptions, SearchSpace};
use subflow::moments::{KernelConfig, MomentMode, DEFAULT_CUTOFF};
use subflow::subbundle::{FrameProvider, PrincipalSubbundle, SubbundleConfig};
use subflow::submanifold::generate;
use subflow::{Error, PointCloud, Result};
use subflow_harness::config::{ExperimentConfig, ExperimentId, FileFormat};
use subflow_harness::data::load_cloud;
use subflow_harness::experiments::{eigen_gap_report, run_experiment};
use subflow_harness::generators::{gen_bumpy_sphere, gen_s_surface, gen_sphere_cloud, gen_sphere_curve_dataset_with};

#[derive(Parser)]
#[command(name = "subflow", version, about = "Sub-Riemannian geometry learned from point clouds")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic point cloud as CSV.
    Gen(GenArgs),
    /// Principal subbundle frame at a point.
    Frame {
        #[command(flatten)]
        sb: SubbundleArgs,
        /// Comma-separated coordinates.
        #[arg(long)]
        point: String,
    },
    /// Integrate one normal geodesic and print its trajectory as CSV.
    Geodesic {
        #[command(flatten)]
        sb: SubbundleArgs,
        #[command(flatten)]
        integ: IntegrationArgs,
        #[arg(long)]
        point: String,
        #[arg(long)]
        covector: String,
        /// Integration time `T`.
        #[arg(long)]
        time: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a principal submanifold point set.
    Submanifold {
        #[command(flatten)]
        sb: SubbundleArgs,
        #[command(flatten)]
        integ: IntegrationArgs,
        /// Base point `mu`.
        #[arg(long)]
        point: String,
        #[arg(long)]
        radius: f64,
        /// Number of geodesics `L`.
        #[arg(long)]
        geodesics: usize,
        /// CSV output (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Binary cache output.
        #[arg(long)]
        cache: Option<PathBuf>,
    },
    /// Approximate the sub-Riemannian logarithm between two points.
    Log {
        #[command(flatten)]
        sb: SubbundleArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        #[arg(long, value_enum, default_value_t = SpaceArg::Dual)]
        space: SpaceArg,
    },
    /// Learned distance between two points.
    Distance {
        #[command(flatten)]
        sb: SubbundleArgs,
        #[command(flatten)]
        log: LogArgs,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
        /// Average the estimates of both directions.
        #[arg(long)]
        symmetric: bool,
    },
    /// Run a named experiment from its preset or a JSON configuration.
    Experiment {
        /// One of: sphere_geodesics, integrators, distance, sphere_curves, s_surface, surface_smoke, reconstruct.
        id: String,
        #[arg(long)]
        seed: u64,
        /// JSON configuration replacing the preset.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        replicates: Option<usize>,
        /// Output directory for the report and CSV tables.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the effective configuration and exit.
        #[arg(long)]
        print_config: bool,
    },
    /// Mean relative eigen-gap per kernel range.
    GapReport {
        #[command(flatten)]
        cloud: CloudArgs,
        #[arg(long)]
        k: usize,
        /// Comma-separated kernel ranges.
        #[arg(long)]
        alphas: String,
        /// Number of sampled observations.
        #[arg(long, default_value_t = 200)]
        sample: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Args)]
struct GenArgs {
    #[arg(value_enum)]
    kind: GenKind,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    n: usize,
    /// Noise standard deviation (marginal variance for sphere curves).
    #[arg(long, default_value_t = 0.0)]
    sigma: f64,
    /// Ambient dimension.
    #[arg(long, default_value_t = 3)]
    d: usize,
    /// Dimension of the generating sphere.
    #[arg(long, default_value_t = 2)]
    k_true: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum GenKind {
    SphereCloud,
    SSurface,
    SphereCurves,
    BumpySphere,
}

#[derive(Args)]
struct CloudArgs {
    /// Point cloud file (CSV or ASCII PLY).
    #[arg(long)]
    cloud: PathBuf,
    /// Treat rows as points of the unit sphere.
    #[arg(long)]
    sphere: bool,
}

impl CloudArgs {
    fn load(&self) -> Result<PointCloud> {
        load_cloud(&self.cloud, FileFormat::from_path(&self.cloud), self.sphere)
    }
}

#[derive(Args)]
struct SubbundleArgs {
    #[command(flatten)]
    cloud: CloudArgs,
    #[arg(long)]
    k: usize,
    /// Gaussian kernel range; the constant kernel when absent.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::CenteredCheap)]
    mode: ModeArg,
}

impl SubbundleArgs {
    fn config(&self) -> SubbundleConfig {
        let kernel = match self.alpha {
            Some(a) => KernelConfig::gaussian(a),
            None => KernelConfig::constant(),
        };
        SubbundleConfig::new(self.k, kernel.with_cutoff(self.cutoff)).with_mode(self.mode.into())
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    CenteredCheap,
    CenteredRecomputed,
    Uncentered,
}

impl From<ModeArg> for MomentMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::CenteredCheap => MomentMode::CenteredCheap,
            ModeArg::CenteredRecomputed => MomentMode::CenteredRecomputed,
            ModeArg::Uncentered => MomentMode::Uncentered,
        }
    }
}

#[derive(Args)]
struct IntegrationArgs {
    /// Step size `Delta`.
    #[arg(long, default_value_t = 1e-3)]
    delta: f64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Euler)]
    scheme: SchemeArg,
    /// Use the eigenprojector gradient instead of finite differences.
    #[arg(long)]
    analytic: bool,
}

impl IntegrationArgs {
    fn options(&self) -> IntegrationOptions {
        let opts = IntegrationOptions::default().with_scheme(match self.scheme {
            SchemeArg::Euler => Scheme::Euler,
            SchemeArg::SemiImplicitEuler => Scheme::SemiImplicitEuler,
        });
        if self.analytic {
            opts.with_gradient(GradientMethod::Analytic)
        } else {
            opts
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Euler,
    SemiImplicitEuler,
}

#[derive(Clone, Copy, ValueEnum)]
enum SpaceArg {
    Full,
    Dual,
}

#[derive(Args)]
struct LogArgs {
    #[command(flatten)]
    integ: IntegrationArgs,
    /// Seed of the random initial covectors.
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    random_starts: Option<usize>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    warm_start_iter: Option<usize>,
}

impl LogArgs {
    fn options(&self) -> LogOptions {
        let d = LogOptions::default();
        LogOptions {
            seed: self.seed,
            random_starts: self.random_starts.unwrap_or(d.random_starts),
            max_iter: self.max_iter.unwrap_or(d.max_iter),
            warm_start_iter: self.warm_start_iter.unwrap_or(d.warm_start_iter),
            final_step: self.integ.delta,
            integration: self.integ.options(),
            ..d
        }
    }
}

fn parse_vec(s: &str) -> Result<DVector<f64>> {
    let xs = s
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("not a number: {t:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DVector::from_vec(xs))
}

fn fmt_vec(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

fn sink(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("values serialize"));
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Gen(g) => {
            let cloud = match g.kind {
                GenKind::SphereCloud => gen_sphere_cloud(g.n, g.k_true, g.d, g.sigma, g.seed)?,
                GenKind::SSurface => gen_s_surface(g.n, g.sigma, g.d, g.seed)?.cloud,
                GenKind::SphereCurves => gen_sphere_curve_dataset_with(g.seed, g.n, g.sigma)?.cloud,
                GenKind::BumpySphere => gen_bumpy_sphere(g.n, g.sigma, g.seed)?,
            };
            write_csv(&cloud, sink(&g.out)?)
        }
        Cmd::Frame { sb, point } => {
            let cloud = sb.cloud.load()?;
            let provider = PrincipalSubbundle::new(&cloud, sb.config())?;
            let f = provider.frame(&parse_vec(&point)?)?;
            let cols: Vec<Vec<f64>> = f.frame.column_iter().map(|c| c.iter().copied().collect()).collect();
            print_json(&serde_json::json!({ "frame": cols, "eigvals": f.eigvals, "gap": f.gap }));
            Ok(())
        }
        Cmd::Geodesic {
            sb,
            integ,
            point,
            covector,
            time,
            out,
        } => {
            let cloud = sb.cloud.load()?;
            let provider = PrincipalSubbundle::new(&cloud, sb.config())?;
            let path = integrate(
                &provider,
                &parse_vec(&point)?,
                &parse_vec(&covector)?,
                time,
                integ.delta,
                &integ.options(),
            )?;
            let mut w = sink(&out)?;
            let n = cloud.dim();
            let mut header = vec!["j".to_string(), "t".into()];
            header.extend((0..n).map(|c| format!("x{c}")));
            header.extend((0..n).map(|c| format!("eta{c}")));
            header.push("h".into());
            writeln!(w, "{}", header.join(","))?;
            for (j, (s, h)) in path.states.iter().zip(&path.hamiltonian_trace).enumerate() {
                let mut row = vec![j.to_string(), format!("{:?}", j as f64 * path.step)];
                row.extend(s.p.iter().chain(s.eta.iter()).map(|x| format!("{x:?}")));
                row.push(format!("{h:?}"));
                writeln!(w, "{}", row.join(","))?;
            }
            Ok(())
        }
        Cmd::Submanifold {
            sb,
            integ,
            point,
            radius,
            geodesics,
            out,
            cache,
        } => {
            let cloud = sb.cloud.load()?;
            let provider = PrincipalSubbundle::new(&cloud, sb.config())?;
            let sub = generate(&provider, &parse_vec(&point)?, radius, geodesics, integ.delta, &integ.options())?;
            for t in &sub.truncated {
                eprintln!("geodesic {} truncated: {}", t.i, t.reason);
            }
            if let Some(c) = cache {
                std::fs::write(c, encode_submanifold(&sub))?;
            }
            write_submanifold_csv(&sub, sink(&out)?)
        }
        Cmd::Log {
            sb,
            log,
            from,
            to,
            space,
        } => {
            let cloud = sb.cloud.load()?;
            let provider = PrincipalSubbundle::new(&cloud, sb.config())?;
            let space = match space {
                SpaceArg::Full => SearchSpace::FullCotangent,
                SpaceArg::Dual => SearchSpace::DualSubbundle,
            };
            let r = sr_log(&provider, &parse_vec(&from)?, &parse_vec(&to)?, space, &log.options())?;
            print_json(&serde_json::json!({
                "eta": fmt_vec(&r.eta_hat),
                "residual": r.residual,
                "hamiltonian": r.hamiltonian,
                "objective": r.objective,
                "converged": r.converged,
            }));
            Ok(())
        }
        Cmd::Distance {
            sb,
            log,
            from,
            to,
            symmetric,
        } => {
            let cloud = sb.cloud.load()?;
            let provider = PrincipalSubbundle::new(&cloud, sb.config())?;
            let d = sr_distance(&provider, &parse_vec(&from)?, &parse_vec(&to)?, &log.options(), symmetric)?;
            println!("{d:?}");
            Ok(())
        }
        Cmd::Experiment {
            id,
            seed,
            config,
            replicates,
            out,
            print_config,
        } => {
            let id = ExperimentId::parse(&id).ok_or_else(|| Error::InvalidArgument(format!("unknown experiment {id:?}")))?;
            let mut cfg = match config {
                Some(p) => {
                    let cfg = ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?;
                    if cfg.experiment != id {
                        return Err(Error::InvalidArgument(format!(
                            "configuration is for {}, not {}",
                            cfg.experiment.name(),
                            id.name()
                        )));
                    }
                    cfg
                }
                None => ExperimentConfig::preset(id),
            };
            cfg.seed = seed;
            if let Some(r) = replicates {
                cfg.replicates = r;
            }
            if out.is_some() {
                cfg.output_dir = out;
            }
            cfg.validate()?;
            if print_config {
                println!("{}", cfg.to_json());
                return Ok(());
            }
            let output = run_experiment(&cfg)?;
            if let Some(dir) = &cfg.output_dir {
                output.write_to(dir)?;
            }
            println!("{}", serde_json::to_string_pretty(&output.report).expect("reports serialize"));
            Ok(())
        }
        Cmd::GapReport {
            cloud,
            k,
            alphas,
            sample,
            seed,
        } => {
            let cloud = cloud.load()?;
            let alphas: Vec<f64> = parse_vec(&alphas)?.iter().copied().collect();
            println!("alpha,mean_relative_gap,failures");
            for row in eigen_gap_report(&cloud, k, &alphas, sample, seed)? {
                println!("{:?},{:?},{}", row.alpha, row.mean_relative_gap, row.failures);
            }
            Ok(())
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => 4,
        e if e.is_numerical() => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
