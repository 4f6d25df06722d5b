//! Normal geodesics of the learned sub-Riemannian structure.
//!
//! The Hamiltonian is `H(p, eta) = |F(p)^T eta|^2 / 2`, so `dH/deta = F F^T eta`
//! in closed form, while `dH/dp` comes from central differences of `H(., eta)`
//! or, for Euclidean principal subbundles, from eigenprojector perturbation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::Geometry;
use crate::error::{Error, Result};
use crate::subbundle::{FrameDerivative, FrameProvider, SubbundleFrame};

/// Default relative step of the central differences for `dH/dp`.
pub const DEFAULT_FD_STEP: f64 = 1e-5;

/// Trajectories farther than this multiple of the support radius are aborted.
pub const DEFAULT_DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct CotangentState {
    pub p: DVector<f64>,
    pub eta: DVector<f64>,
}

impl CotangentState {
    pub fn new(p: DVector<f64>, eta: DVector<f64>) -> Self {
        Self { p, eta }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Explicit Euler on both `p` and `eta`.
    Euler,
    /// Symplectic Euler: `eta` is updated implicitly, then `p` explicitly.
    SemiImplicitEuler,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum GradientMethod {
    /// Central differences with step `rel_step * max(1, |p|)`.
    FiniteDifference { rel_step: f64 },
    /// Eigenprojector perturbation; requires provider support.
    Analytic,
}

impl Default for GradientMethod {
    fn default() -> Self {
        GradientMethod::FiniteDifference {
            rel_step: DEFAULT_FD_STEP,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntegrationOptions {
    pub scheme: Scheme,
    pub gradient: GradientMethod,
    pub divergence_factor: f64,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        Self {
            scheme: Scheme::Euler,
            gradient: GradientMethod::default(),
            divergence_factor: DEFAULT_DIVERGENCE_FACTOR,
        }
    }
}

impl IntegrationOptions {
    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_gradient(mut self, gradient: GradientMethod) -> Self {
        self.gradient = gradient;
        self
    }
}

#[derive(Clone, Debug)]
pub struct GeodesicPath {
    pub states: Vec<CotangentState>,
    pub step: f64,
    /// `H` at every stored state.
    pub hamiltonian_trace: Vec<f64>,
    /// Largest deviation `| |p| - 1 |` seen before renormalization (sphere only).
    pub constraint_drift: f64,
}

impl GeodesicPath {
    pub fn endpoint(&self) -> &DVector<f64> {
        &self.states.last().expect("paths hold at least one state").p
    }

    pub fn positions(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.states.iter().map(|s| &s.p)
    }

    /// `max_n |H_n - H_0| / H_0`; zero when `H_0 = 0`.
    pub fn relative_drift(&self) -> f64 {
        let h0 = self.hamiltonian_trace[0];
        if h0 == 0.0 {
            return 0.0;
        }
        self.hamiltonian_trace
            .iter()
            .map(|h| (h - h0).abs())
            .fold(0.0, f64::max)
            / h0
    }
}

fn check_state(geom: Geometry, state: &CotangentState) -> Result<()> {
    geom.check_dim(state.p.len())?;
    geom.check_dim(state.eta.len())?;
    if state.p.iter().chain(state.eta.iter()).any(|x| !x.is_finite()) {
        return Err(Error::invalid("non-finite state"));
    }
    Ok(())
}

pub fn hamiltonian(provider: &dyn FrameProvider, state: &CotangentState) -> Result<f64> {
    check_state(provider.geometry(), state)?;
    let f = provider.frame(&state.p)?;
    Ok(0.5 * f.coefficients(&state.eta).norm_squared())
}

/// Frame at a point plus everything needed to evaluate `dH/dp` for any covector.
pub(crate) struct LocalJet {
    pub frame: SubbundleFrame,
    kind: JetKind,
}

enum JetKind {
    Stencil {
        h: f64,
        plus: Vec<DMatrix<f64>>,
        minus: Vec<DMatrix<f64>>,
    },
    Analytic(FrameDerivative),
}

impl LocalJet {
    pub fn build(provider: &dyn FrameProvider, p: &DVector<f64>, method: GradientMethod) -> Result<Self> {
        match method {
            GradientMethod::Analytic => match provider.frame_with_derivative(p) {
                Some(r) => {
                    let (frame, der) = r?;
                    Ok(Self {
                        frame,
                        kind: JetKind::Analytic(der),
                    })
                }
                None => Err(Error::invalid("frame provider has no analytic derivative")),
            },
            GradientMethod::FiniteDifference { rel_step } => {
                if !(rel_step > 0.0) {
                    return Err(Error::invalid("finite-difference step must be positive"));
                }
                let geom = provider.geometry();
                let frame = provider.frame(p)?;
                let h = rel_step * p.norm().max(1.0);
                let n = p.len();
                let mut plus = Vec::with_capacity(n);
                let mut minus = Vec::with_capacity(n);
                for l in 0..n {
                    for (sign, out) in [(1.0, &mut plus), (-1.0, &mut minus)] {
                        let mut q = p.clone();
                        q[l] += sign * h;
                        geom.project_point(&mut q);
                        out.push(provider.frame(&q)?.frame);
                    }
                }
                Ok(Self {
                    frame,
                    kind: JetKind::Stencil { h, plus, minus },
                })
            }
        }
    }

    pub fn hamiltonian(&self, eta: &DVector<f64>) -> f64 {
        0.5 * self.frame.coefficients(eta).norm_squared()
    }

    pub fn dh_deta(&self, eta: &DVector<f64>) -> DVector<f64> {
        self.frame.project(eta)
    }

    pub fn dh_dp(&self, eta: &DVector<f64>) -> DVector<f64> {
        match &self.kind {
            JetKind::Analytic(der) => der.dh_dp(eta),
            JetKind::Stencil { h, plus, minus } => DVector::from_iterator(
                eta.len(),
                plus.iter().zip(minus).map(|(fp, fm)| {
                    let hp = fp.tr_mul(eta).norm_squared();
                    let hm = fm.tr_mul(eta).norm_squared();
                    0.25 * (hp - hm) / h
                }),
            ),
        }
    }
}

/// `(dH/dp, dH/deta)` at a state.
pub fn hamiltonian_gradients(
    provider: &dyn FrameProvider,
    state: &CotangentState,
    method: GradientMethod,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_state(provider.geometry(), state)?;
    let jet = LocalJet::build(provider, &state.p, method)?;
    Ok((jet.dh_dp(&state.eta), jet.dh_deta(&state.eta)))
}

/// Number of steps of size `delta` that fit in `[0, t]`.
pub fn step_count(t: f64, delta: f64) -> Result<usize> {
    if !(t > 0.0) || !(delta > 0.0) || !t.is_finite() || !delta.is_finite() {
        return Err(Error::invalid(format!("need T > 0 and step > 0, got T={t}, step={delta}")));
    }
    let n = (t / delta + 1e-9).floor();
    if n < 1.0 {
        return Err(Error::invalid("integration time shorter than one step"));
    }
    Ok(n as usize)
}

const FIXED_POINT_MAX_ITER: usize = 100;

/// Integrate the Hamiltonian equations from `(p0, eta0)` for `floor(T / delta)` steps.
pub fn integrate(
    provider: &dyn FrameProvider,
    p0: &DVector<f64>,
    eta0: &DVector<f64>,
    t: f64,
    delta: f64,
    opts: &IntegrationOptions,
) -> Result<GeodesicPath> {
    match integrate_partial(provider, p0, eta0, t, delta, opts)? {
        (path, None) => Ok(path),
        (_, Some(e)) => Err(e),
    }
}

/// Like [`integrate`], but a numerical failure part way (singular point,
/// empty neighbourhood, divergence) returns the path computed so far together
/// with the error. Invalid arguments and a failure at the start are still errors.
pub fn integrate_partial(
    provider: &dyn FrameProvider,
    p0: &DVector<f64>,
    eta0: &DVector<f64>,
    t: f64,
    delta: f64,
    opts: &IntegrationOptions,
) -> Result<(GeodesicPath, Option<Error>)> {
    let geom = provider.geometry();
    let start = CotangentState::new(p0.clone(), eta0.clone());
    check_state(geom, &start)?;
    let steps = step_count(t, delta)?;
    let sphere = !geom.is_euclidean();
    let guard = provider
        .support()
        .map(|(c, r)| (c, opts.divergence_factor * r.max(f64::MIN_POSITIVE)));

    let mut p = p0.clone();
    let mut eta = eta0.clone();
    geom.project_point(&mut p);
    geom.project_tangent(&p, &mut eta);
    let mut path = GeodesicPath {
        states: Vec::with_capacity(steps + 1),
        step: delta,
        hamiltonian_trace: Vec::with_capacity(steps + 1),
        constraint_drift: 0.0,
    };
    path.states.push(CotangentState::new(p.clone(), eta.clone()));

    for n in 0..steps {
        let jet = match LocalJet::build(provider, &p, opts.gradient) {
            Ok(jet) => jet,
            Err(e) if n > 0 && e.is_numerical() => return Ok((path, Some(e.at_step(n)))),
            Err(e) => return Err(e.at_step(n)),
        };
        path.hamiltonian_trace.push(jet.hamiltonian(&eta));
        match opts.scheme {
            Scheme::Euler => {
                let dp = jet.dh_deta(&eta);
                let deta = jet.dh_dp(&eta);
                p.axpy(delta, &dp, 1.0);
                eta.axpy(-delta, &deta, 1.0);
            }
            Scheme::SemiImplicitEuler => {
                let mut next = &eta - jet.dh_dp(&eta) * delta;
                let scale = 1.0 + eta.norm();
                for _ in 0..FIXED_POINT_MAX_ITER {
                    let candidate = &eta - jet.dh_dp(&next) * delta;
                    let change = (&candidate - &next).norm();
                    next = candidate;
                    if change <= 1e-14 * scale {
                        break;
                    }
                }
                let dp = jet.dh_deta(&next);
                p.axpy(delta, &dp, 1.0);
                eta = next;
            }
        }
        if p.iter().chain(eta.iter()).any(|x| !x.is_finite()) {
            path.hamiltonian_trace.pop();
            let e = Error::Diverged {
                step: n + 1,
                distance: f64::INFINITY,
            };
            return Ok((path, Some(e)));
        }
        if sphere {
            path.constraint_drift = path.constraint_drift.max((p.norm() - 1.0).abs());
            geom.project_point(&mut p);
            geom.project_tangent(&p, &mut eta);
        }
        if let Some((c, bound)) = &guard {
            let dist = (&p - c).norm();
            if dist > *bound {
                path.hamiltonian_trace.pop();
                return Ok((path, Some(Error::Diverged { step: n + 1, distance: dist })));
            }
        }
        path.states.push(CotangentState::new(p.clone(), eta.clone()));
    }
    match provider.frame(&p) {
        Ok(last) => path.hamiltonian_trace.push(0.5 * last.coefficients(&eta).norm_squared()),
        Err(e) if e.is_numerical() => {
            path.states.pop();
            return Ok((path, Some(e.at_step(steps))));
        }
        Err(e) => return Err(e.at_step(steps)),
    }
    Ok((path, None))
}

/// Sub-Riemannian exponential: the time-1 position of the normal geodesic.
pub fn sr_exp(
    provider: &dyn FrameProvider,
    p: &DVector<f64>,
    eta: &DVector<f64>,
    delta: f64,
    opts: &IntegrationOptions,
) -> Result<DVector<f64>> {
    let geom = provider.geometry();
    geom.check_dim(p.len())?;
    geom.check_dim(eta.len())?;
    if eta.iter().all(|&x| x == 0.0) {
        let mut q = p.clone();
        geom.project_point(&mut q);
        return Ok(q);
    }
    let path = integrate(provider, p, eta, 1.0, delta, opts)?;
    Ok(path.endpoint().clone())
}
