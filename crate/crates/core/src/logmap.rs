//! Approximate sub-Riemannian logarithm and distance.
//!
//! `sr_log(p, y)` looks for the covector `eta` minimizing
//! `|exp(p, eta) - y|^2 + w H(p, eta)` with a quasi-Newton method. Objective
//! gradients are obtained from a central-difference Jacobian of the shooting map.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geodesics::{sr_exp, IntegrationOptions};
use crate::subbundle::{FrameProvider, SubbundleFrame};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchSpace {
    /// Every covector at `p`.
    FullCotangent,
    /// Covectors `F_p c` in the dual of the subbundle.
    DualSubbundle,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogOptions {
    /// Shooting step while optimizing.
    pub coarse_step: f64,
    /// Shooting step of the reported residual.
    pub final_step: f64,
    /// Relative central-difference step for the shooting Jacobian.
    pub fd_step: f64,
    /// Convergence when `|grad| < grad_tol * (1 + objective)`.
    pub grad_tol: f64,
    pub max_iter: usize,
    /// Weight of the Hamiltonian term. It selects the shortest among geodesics
    /// with comparable endpoint error; larger values trade endpoint accuracy for
    /// shorter covectors.
    pub hamiltonian_weight: f64,
    /// Number of random initial covectors, in addition to the two deterministic ones.
    pub random_starts: usize,
    /// Full-cotangent searches only: when non-zero, first solve the much
    /// cheaper dual-subbundle problem with this iteration budget and add its
    /// solution as an extra (first) start.
    pub warm_start_iter: usize,
    /// Include the near-zero and chord-projection starts.
    pub deterministic_starts: bool,
    pub seed: u64,
    pub integration: IntegrationOptions,
}

impl Default for LogOptions {
    fn default() -> Self {
        Self {
            coarse_step: 1e-2,
            final_step: 1e-3,
            fd_step: 1e-4,
            grad_tol: 1e-6,
            max_iter: 200,
            hamiltonian_weight: 1e-4,
            random_starts: 4,
            warm_start_iter: 0,
            deterministic_starts: true,
            seed: 0,
            integration: IntegrationOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct LogResult {
    pub eta_hat: DVector<f64>,
    /// `|exp(p, eta_hat) - y|` at the final step size.
    pub residual: f64,
    pub hamiltonian: f64,
    /// Objective at the coarse step size.
    pub objective: f64,
    pub converged: bool,
    pub restarts_used: usize,
    /// Index of the winning start.
    pub best_start: usize,
}

struct Shooter<'a> {
    provider: &'a dyn FrameProvider,
    p: &'a DVector<f64>,
    y: &'a DVector<f64>,
    basis: DMatrix<f64>,
    /// `w B^T F F^T B`, the Hessian of the weighted `H` in search coordinates.
    h_quad: DMatrix<f64>,
    max_step: f64,
    opts: &'a LogOptions,
}

#[derive(Clone)]
struct Eval {
    f: f64,
    r: DVector<f64>,
}

impl<'a> Shooter<'a> {
    fn new(
        provider: &'a dyn FrameProvider,
        p: &'a DVector<f64>,
        y: &'a DVector<f64>,
        frame: &SubbundleFrame,
        space: SearchSpace,
        opts: &'a LogOptions,
    ) -> Self {
        let basis = match space {
            SearchSpace::DualSubbundle => frame.frame.clone(),
            SearchSpace::FullCotangent => provider.geometry().tangent_basis(p),
        };
        let ft_b = frame.frame.tr_mul(&basis);
        let h_quad = ft_b.tr_mul(&ft_b) * opts.hamiltonian_weight;
        Self {
            provider,
            p,
            y,
            basis,
            h_quad,
            max_step: (y - p).norm().max(f64::MIN_POSITIVE),
            opts,
        }
    }

    fn eta(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.basis * c
    }

    fn ham(&self, c: &DVector<f64>) -> f64 {
        0.5 * c.dot(&(&self.h_quad * c))
    }

    fn shoot(&self, c: &DVector<f64>, step: f64) -> Result<DVector<f64>> {
        sr_exp(self.provider, self.p, &self.eta(c), step, &self.opts.integration)
    }

    fn eval(&self, c: &DVector<f64>) -> Result<Eval> {
        let r = self.shoot(c, self.opts.coarse_step)? - self.y;
        Ok(Eval {
            f: r.norm_squared() + self.ham(c),
            r,
        })
    }

    fn jacobian(&self, c: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = c.len();
        let h = self.opts.fd_step * c.norm().max(1.0);
        let mut j = DMatrix::zeros(self.p.len(), m);
        for l in 0..m {
            let mut a = c.clone();
            let mut b = c.clone();
            a[l] += h;
            b[l] -= h;
            let col = (self.shoot(&a, self.opts.coarse_step)? - self.shoot(&b, self.opts.coarse_step)?) / (2.0 * h);
            j.set_column(l, &col);
        }
        Ok(j)
    }

    fn gradient(&self, c: &DVector<f64>, e: &Eval, j: &DMatrix<f64>) -> DVector<f64> {
        j.tr_mul(&e.r) * 2.0 + &self.h_quad * c
    }

    /// Inverse of the Gauss-Newton Hessian `2 J^T J + w B^T F F^T B`, damped by
    /// a fraction of its mean diagonal so that weakly observed directions
    /// (normal covector components) do not receive huge steps.
    fn gn_inverse(&self, j: &DMatrix<f64>) -> DMatrix<f64> {
        let m = j.ncols();
        let mut hess = j.tr_mul(j) * 2.0 + &self.h_quad;
        let scale = (hess.trace() / m as f64).max(1e-12);
        for i in 0..m {
            hess[(i, i)] += GN_DAMPING * scale;
        }
        match hess.clone().cholesky() {
            Some(ch) => ch.inverse(),
            None => DMatrix::identity(m, m) / scale,
        }
    }
}

const GN_DAMPING: f64 = 1e-3;

struct StartOutcome {
    c: DVector<f64>,
    f: f64,
    converged: bool,
}

/// Damped BFGS from `c0`. Returns `None` when no step could be accepted from a
/// non-stationary start.
fn minimize(sh: &Shooter, c0: DVector<f64>) -> Option<StartOutcome> {
    let opts = sh.opts;
    let mut c = c0;
    let mut e = sh.eval(&c).ok()?;
    let mut j = sh.jacobian(&c).ok()?;
    let mut g = sh.gradient(&c, &e, &j);
    let mut hinv = sh.gn_inverse(&j);
    let mut accepted_any = false;
    let mut converged = false;
    let mut reset_pending = false;
    for _ in 0..opts.max_iter {
        if g.norm() < opts.grad_tol * (1.0 + e.f) {
            converged = true;
            break;
        }
        let mut d = -(&hinv * &g);
        let mut slope = g.dot(&d);
        if !(slope < 0.0) {
            hinv = sh.gn_inverse(&j);
            d = -(&hinv * &g);
            slope = g.dot(&d);
            if !(slope < 0.0) {
                d = -g.clone();
                slope = -g.norm_squared();
            }
        }
        // Cap the trial step at the chord length |y - p|.
        let dn = d.norm();
        if dn > sh.max_step {
            d *= sh.max_step / dn;
            slope *= sh.max_step / dn;
        }
        let mut t = 1.0;
        let mut next = None;
        while t > 1e-10 {
            let cand = &c + &d * t;
            if let Ok(en) = sh.eval(&cand) {
                if en.f <= e.f + 1e-4 * t * slope {
                    next = Some((cand, en));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cn, en)) = next else {
            if reset_pending {
                break;
            }
            // Retry once from a fresh Gauss-Newton model before giving up.
            hinv = sh.gn_inverse(&j);
            reset_pending = true;
            continue;
        };
        reset_pending = false;
        let Ok(jn) = sh.jacobian(&cn) else {
            break;
        };
        let gn = sh.gradient(&cn, &en, &jn);
        let s = &cn - &c;
        let yv = &gn - &g;
        let sy = s.dot(&yv);
        if sy > 1e-12 * s.norm() * yv.norm() {
            let rho = 1.0 / sy;
            let m = s.len();
            let left = DMatrix::identity(m, m) - &s * yv.transpose() * rho;
            hinv = &left * &hinv * left.transpose() + &s * s.transpose() * rho;
        }
        let progressed = en.f < e.f;
        c = cn;
        e = en;
        j = jn;
        g = gn;
        accepted_any = true;
        if !progressed {
            break;
        }
    }
    if !accepted_any && !converged {
        return None;
    }
    Some(StartOutcome { c, f: e.f, converged })
}

/// Approximate `log_p(y)` of the sub-Riemannian exponential.
pub fn sr_log(
    provider: &dyn FrameProvider,
    p: &DVector<f64>,
    y: &DVector<f64>,
    space: SearchSpace,
    opts: &LogOptions,
) -> Result<LogResult> {
    let geom = provider.geometry();
    geom.check_dim(p.len())?;
    geom.check_dim(y.len())?;
    if y.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite target"));
    }
    if !(opts.coarse_step > 0.0 && opts.final_step > 0.0 && opts.fd_step > 0.0) {
        return Err(Error::invalid("log step sizes must be positive"));
    }
    if !(opts.hamiltonian_weight >= 0.0) {
        return Err(Error::invalid("Hamiltonian weight must be non-negative"));
    }
    let frame = provider.frame(p)?;
    let sh = Shooter::new(provider, p, y, &frame, space, opts);
    let m = sh.basis.ncols();
    let chord = y - p;
    let dist = chord.norm();
    if dist == 0.0 {
        return Ok(LogResult {
            eta_hat: DVector::zeros(p.len()),
            residual: 0.0,
            hamiltonian: 0.0,
            objective: 0.0,
            converged: true,
            restarts_used: 0,
            best_start: 0,
        });
    }

    let mut starts = Vec::with_capacity(3 + opts.random_starts);
    if opts.warm_start_iter > 0 && space == SearchSpace::FullCotangent {
        let dual = LogOptions {
            warm_start_iter: 0,
            deterministic_starts: true,
            max_iter: opts.warm_start_iter,
            ..*opts
        };
        let warm = sr_log(provider, p, y, SearchSpace::DualSubbundle, &dual)?;
        starts.push(sh.basis.tr_mul(&warm.eta_hat));
    }
    if opts.deterministic_starts {
        starts.push(DVector::from_element(m, 1e-4 * dist / (m as f64).sqrt()));
        starts.push(sh.basis.tr_mul(&frame.project(&chord)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        let z = DVector::from_fn(m, |_, _| StandardNormal.sample(&mut rng));
        let n: f64 = z.norm();
        starts.push(if n > 0.0 { z * (dist / n) } else { z });
    }

    if starts.is_empty() {
        return Err(Error::invalid("no initial covectors: enable a start strategy"));
    }
    let outcomes: Vec<Option<StartOutcome>> = starts.into_par_iter().map(|c0| minimize(&sh, c0)).collect();
    let restarts_used = outcomes.len();
    let (best_start, best) = outcomes
        .into_iter()
        .enumerate()
        .filter_map(|(i, o)| o.map(|o| (i, o)))
        .min_by(|a, b| a.1.f.total_cmp(&b.1.f).then(a.0.cmp(&b.0)))
        .ok_or(Error::NoDescent)?;

    let eta_hat = sh.eta(&best.c);
    let end = sr_exp(provider, p, &eta_hat, opts.final_step, &opts.integration)?;
    Ok(LogResult {
        residual: (end - y).norm(),
        hamiltonian: 0.5 * frame.coefficients(&eta_hat).norm_squared(),
        objective: best.f,
        converged: best.converged,
        restarts_used,
        best_start,
        eta_hat,
    })
}

/// Sub-Riemannian distance estimate `sqrt(2 H(x, eta_hat))` from a
/// full-cotangent logarithm; `symmetric` averages both directions.
pub fn sr_distance(
    provider: &dyn FrameProvider,
    x: &DVector<f64>,
    y: &DVector<f64>,
    opts: &LogOptions,
    symmetric: bool,
) -> Result<f64> {
    let one = |a: &DVector<f64>, b: &DVector<f64>| -> Result<f64> {
        let r = sr_log(provider, a, b, SearchSpace::FullCotangent, opts)?;
        Ok((2.0 * r.hamiltonian).sqrt())
    };
    let forward = one(x, y)?;
    if !symmetric {
        return Ok(forward);
    }
    Ok(0.5 * (forward + one(y, x)?))
}
