//! Quasi-Newton minimization with bounded parameters and Hessian errors.
//!
//! The minimizer works in an unbounded internal space. Doubly-bounded
//! parameters use `ext = lo + (hi - lo) (sin(int) + 1) / 2`; one-sided bounds
//! use the square-root maps. Gradients are central finite differences.
//! Convergence is declared when `EDM = g^T H^-1 g / 2 < edm_tol`, with the
//! BFGS inverse-Hessian estimate standing in for `H^-1`.
//!
//! Uncertainties come from a separate finite-difference Hessian taken in
//! external coordinates ([`hesse`]). The objective is a negative
//! log-likelihood, so the one-sigma level is `errdef = 0.5` and the
//! covariance is `2 * errdef * H^-1 = H^-1`.

use std::time::{Duration, Instant};

use log::{debug, info};
use nalgebra::{DMatrix, DVector};

use crate::dataset::DataSet;
use crate::distributed::{self, ShardPlan};
use crate::engine::{check_coverage, Backend, Engine};
use crate::error::{Error, Result};
use crate::pdf::{PdfId, PdfTree};
use crate::variable::{Registry, VarId, Variable};

/// Objective change that defines a one-sigma interval for an NLL.
pub const ERRDEF: f64 = 0.5;

const ARMIJO_C: f64 = 1e-4;
const LINE_SEARCH_SHRINK: f64 = 0.5;
const LINE_SEARCH_STEPS: usize = 40;

/// Something to minimize, evaluated at a vector of external parameter values
/// (one entry per parameter passed to [`minimize`], fixed ones included).
pub trait Fcn {
    fn value(&mut self, x: &[f64]) -> Result<f64>;
}

impl<F: FnMut(&[f64]) -> Result<f64>> Fcn for F {
    fn value(&mut self, x: &[f64]) -> Result<f64> {
        self(x)
    }
}

/// Wraps an [`Fcn`] with a call counter and a call limit.
pub struct FcnHandle<'a> {
    fcn: &'a mut dyn Fcn,
    calls: u64,
    max_calls: u64,
}

impl<'a> FcnHandle<'a> {
    pub fn new(fcn: &'a mut dyn Fcn, max_calls: u64) -> Self {
        Self {
            fcn,
            calls: 0,
            max_calls,
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls
    }

    pub fn call(&mut self, x: &[f64]) -> Result<f64> {
        if self.calls >= self.max_calls {
            return Err(Error::MaxCallsExceeded(self.max_calls));
        }
        self.calls += 1;
        let v = self.fcn.value(x)?;
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(Error::NonFiniteObjective(v));
        }
        Ok(v)
    }
}

/// Map between a bounded external value and an unbounded internal one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundTransform {
    Unbounded,
    Both { lower: f64, upper: f64 },
    Lower(f64),
    Upper(f64),
}

impl BoundTransform {
    pub fn for_bounds(lower: f64, upper: f64) -> Self {
        match (lower.is_finite(), upper.is_finite()) {
            (true, true) => Self::Both { lower, upper },
            (true, false) => Self::Lower(lower),
            (false, true) => Self::Upper(upper),
            (false, false) => Self::Unbounded,
        }
    }

    pub fn to_external(self, int: f64) -> f64 {
        match self {
            Self::Unbounded => int,
            Self::Both { lower, upper } => {
                let v = lower + (upper - lower) * (int.sin() + 1.0) / 2.0;
                v.clamp(lower, upper)
            }
            Self::Lower(lo) => lo - 1.0 + (int * int + 1.0).sqrt(),
            Self::Upper(hi) => hi + 1.0 - (int * int + 1.0).sqrt(),
        }
    }

    pub fn to_internal(self, ext: f64) -> f64 {
        match self {
            Self::Unbounded => ext,
            Self::Both { lower, upper } => {
                let y = 2.0 * (ext - lower) / (upper - lower) - 1.0;
                y.clamp(-1.0, 1.0).asin()
            }
            Self::Lower(lo) => {
                let t = ext - lo + 1.0;
                (t * t - 1.0).max(0.0).sqrt()
            }
            Self::Upper(hi) => {
                let t = hi - ext + 1.0;
                (t * t - 1.0).max(0.0).sqrt()
            }
        }
    }

    /// `d ext / d int`.
    pub fn derivative(self, int: f64) -> f64 {
        match self {
            Self::Unbounded => 1.0,
            Self::Both { lower, upper } => (upper - lower) * int.cos() / 2.0,
            Self::Lower(_) => int / (int * int + 1.0).sqrt(),
            Self::Upper(_) => -int / (int * int + 1.0).sqrt(),
        }
    }

    fn max_internal_step(self) -> f64 {
        match self {
            Self::Both { .. } => 1.0,
            _ => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FitStatus {
    Converged,
    MaxCalls,
    Failed,
}

impl FitStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            FitStatus::Converged => "converged",
            FitStatus::MaxCalls => "max_calls",
            FitStatus::Failed => "failed",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub edm_tol: f64,
    /// Objective call limit; `None` uses `200 + 100 n + 5 n^2` for `n` free
    /// parameters.
    pub max_calls: Option<u64>,
    /// Skip the Hessian error step.
    pub skip_hesse: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            edm_tol: 1e-6,
            max_calls: None,
            skip_hesse: false,
        }
    }
}

/// Wall-clock breakdown of a fit.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FitTiming {
    pub normalization: Duration,
    pub minimization: Duration,
    pub hesse: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub status: FitStatus,
    pub nll_min: f64,
    pub names: Vec<String>,
    pub values: Vec<f64>,
    pub errors: Vec<f64>,
    pub fixed: Vec<bool>,
    pub at_limit: Vec<bool>,
    /// Full-size matrix; rows and columns of fixed parameters are zero.
    pub covariance: DMatrix<f64>,
    pub edm: f64,
    pub n_calls: u64,
    pub n_gradients: u64,
    pub wall_time_s: f64,
    /// Objective value at every accepted point, starting point first.
    pub trace: Vec<f64>,
    pub timing: FitTiming,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.values[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.errors[i])
    }
}

struct Problem {
    transforms: Vec<BoundTransform>,
    free: Vec<usize>,
    base: Vec<f64>,
}

impl Problem {
    fn new(params: &[Variable]) -> Result<Self> {
        let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].is_fixed()).collect();
        if free.is_empty() {
            return Err(Error::NoFreeParameters);
        }
        for p in params {
            if !p.contains(p.value()) {
                return Err(Error::OutOfBounds {
                    name: p.name().to_string(),
                    value: p.value(),
                    lower: p.lower(),
                    upper: p.upper(),
                });
            }
        }
        Ok(Self {
            transforms: params
                .iter()
                .map(|p| BoundTransform::for_bounds(p.lower(), p.upper()))
                .collect(),
            free,
            base: params.iter().map(Variable::value).collect(),
        })
    }

    fn external(&self, int: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (k, &i) in self.free.iter().enumerate() {
            x[i] = self.transforms[i].to_external(int[k]);
        }
        x
    }

    fn internal(&self, ext: &[f64]) -> Vec<f64> {
        self.free
            .iter()
            .map(|&i| self.transforms[i].to_internal(ext[i]))
            .collect()
    }
}

fn eval_internal(h: &mut FcnHandle<'_>, prob: &Problem, int: &[f64]) -> Result<f64> {
    h.call(&prob.external(int))
}

struct Gradient {
    g: DVector<f64>,
    g2: DVector<f64>,
}

/// Central-difference gradient in internal space. Steps adapt so the
/// second-difference sagitta sits near `sqrt(eps) * (|f| + errdef)`; a step
/// whose objective change drowns in rounding is doubled.
fn gradient(
    h: &mut FcnHandle<'_>,
    prob: &Problem,
    x: &[f64],
    f0: f64,
    steps: &mut [f64],
) -> Result<Gradient> {
    let n = x.len();
    let mut g = DVector::zeros(n);
    let mut g2 = DVector::zeros(n);
    let aimsag = f64::EPSILON.sqrt() * (f0.abs() + ERRDEF);
    let noise = 64.0 * f64::EPSILON * f0.abs().max(1.0);
    let mut xs = x.to_vec();
    for i in 0..n {
        let cap = prob.transforms[prob.free[i]].max_internal_step();
        let mut attempts = 0;
        loop {
            let step = steps[i];
            xs[i] = x[i] + step;
            let fp = eval_internal(h, prob, &xs);
            xs[i] = x[i] - step;
            let fm = eval_internal(h, prob, &xs);
            xs[i] = x[i];
            let (fp, fm) = match (fp, fm) {
                (Ok(a), Ok(b)) => (a, b),
                (Err(e), _) | (_, Err(e)) => {
                    if e.is_domain() && attempts < 10 {
                        steps[i] *= 0.5;
                        attempts += 1;
                        continue;
                    }
                    return Err(e);
                }
            };
            let change = (fp - f0).abs().max((fm - f0).abs());
            if change < noise && step < cap && attempts < 10 {
                steps[i] = (2.0 * step).min(cap);
                attempts += 1;
                continue;
            }
            g[i] = (fp - fm) / (2.0 * step);
            g2[i] = (fp + fm - 2.0 * f0) / (step * step);
            if g2[i] > 0.0 {
                let opt = (2.0 * aimsag / g2[i]).sqrt();
                steps[i] = opt.clamp(step * 0.1, (step * 10.0).min(cap));
            }
            break;
        }
    }
    Ok(Gradient { g, g2 })
}

fn seed_inverse_hessian(grad: &Gradient, steps: &[f64]) -> DMatrix<f64> {
    let n = steps.len();
    let mut h = DMatrix::zeros(n, n);
    for i in 0..n {
        let g2 = grad.g2[i];
        h[(i, i)] = if g2 > 0.0 && g2.is_finite() {
            1.0 / g2
        } else {
            steps[i] * steps[i]
        };
    }
    h
}

fn edm(g: &DVector<f64>, hinv: &DMatrix<f64>) -> f64 {
    (0.5 * g.dot(&(hinv * g))).max(0.0)
}

/// Minimizes `fcn` over the free entries of `params`, then (unless
/// disabled) estimates errors with [`hesse`].
/// Status, minimum, internal point, EDM and accepted-value trace.
type Descent = (FitStatus, f64, Vec<f64>, f64, Vec<f64>);

pub fn minimize(fcn: &mut dyn Fcn, params: &[Variable], opts: &FitOptions) -> Result<FitResult> {
    let start_time = Instant::now();
    let prob = Problem::new(params)?;
    let n = prob.free.len();
    let max_calls = opts
        .max_calls
        .unwrap_or(200 + 100 * n as u64 + 5 * (n * n) as u64);
    let mut handle = FcnHandle::new(fcn, max_calls);

    let mut x = prob.internal(&prob.base);
    let mut steps: Vec<f64> = prob
        .free
        .iter()
        .zip(&x)
        .map(|(&i, &xi)| {
            let t = prob.transforms[i];
            let d = t.derivative(xi).abs();
            let s = if d > 1e-3 { params[i].step() / d } else { 0.1 };
            s.min(t.max_internal_step())
        })
        .collect();

    let mut n_grad = 0u64;
    let outcome = (|| -> Result<Descent> {
        let mut f = eval_internal(&mut handle, &prob, &x)?;
        if !f.is_finite() {
            return Err(Error::NonFiniteObjective(f));
        }
        let mut trace = vec![f];
        let mut grad = gradient(&mut handle, &prob, &x, f, &mut steps)?;
        n_grad += 1;
        let mut hinv = seed_inverse_hessian(&grad, &steps);
        let mut reset_used = false;
        let mut current_edm = edm(&grad.g, &hinv);
        let mut iteration = 0;
        loop {
            debug!("iteration {iteration}: f = {f}, edm = {current_edm:.3e}");
            if current_edm < opts.edm_tol {
                return Ok((FitStatus::Converged, f, x.clone(), current_edm, trace));
            }
            iteration += 1;
            let p = -(&hinv * &grad.g);
            let slope = grad.g.dot(&p);
            if !(slope < 0.0) {
                if reset_used {
                    return Err(Error::SingularHessianApprox);
                }
                debug!("search direction is not descending; resetting Hessian approximation");
                hinv = DMatrix::identity(n, n);
                reset_used = true;
                current_edm = edm(&grad.g, &hinv);
                continue;
            }
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..LINE_SEARCH_STEPS {
                let trial: Vec<f64> = x.iter().zip(p.iter()).map(|(a, b)| a + alpha * b).collect();
                match eval_internal(&mut handle, &prob, &trial) {
                    Ok(ft) if ft.is_finite() && ft <= f + ARMIJO_C * alpha * slope => {
                        accepted = Some((trial, ft));
                        break;
                    }
                    Ok(_) => {}
                    Err(e) if e.is_domain() => {}
                    Err(e) => return Err(e),
                }
                alpha *= LINE_SEARCH_SHRINK;
            }
            let Some((x_new, f_new)) = accepted else {
                if !reset_used {
                    debug!("line search failed; resetting Hessian approximation");
                    hinv = seed_inverse_hessian(&grad, &steps);
                    if hinv.iter().all(|v| *v == 0.0) {
                        hinv = DMatrix::identity(n, n);
                    }
                    reset_used = true;
                    continue;
                }
                return Ok((FitStatus::Failed, f, x.clone(), current_edm, trace));
            };
            let new_grad = gradient(&mut handle, &prob, &x_new, f_new, &mut steps)?;
            n_grad += 1;
            let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
            let y = &new_grad.g - &grad.g;
            let sy = s.dot(&y);
            if sy > 0.0 {
                let rho = 1.0 / sy;
                let hy = &hinv * &y;
                let yhy = y.dot(&hy);
                // H+ = H - rho (s (Hy)^T + (Hy) s^T) + (rho^2 yHy + rho) s s^T
                hinv -= (&s * hy.transpose() + &hy * s.transpose()) * rho;
                hinv += (&s * s.transpose()) * (rho * rho * yhy + rho);
            }
            x = x_new;
            f = f_new;
            grad = new_grad;
            trace.push(f);
            current_edm = edm(&grad.g, &hinv);
        }
    })();

    let (status, f_min, x_min, final_edm, trace) = match outcome {
        Ok(v) => v,
        Err(Error::MaxCallsExceeded(_)) => {
            let f = f64::NAN;
            (FitStatus::MaxCalls, f, x.clone(), f64::NAN, Vec::new())
        }
        Err(e) => return Err(e),
    };
    let values = prob.external(&x_min);
    let minimization = start_time.elapsed();

    let mut covariance = DMatrix::zeros(params.len(), params.len());
    let mut errors = vec![0.0; params.len()];
    let mut hesse_time = Duration::ZERO;
    if status == FitStatus::Converged && !opts.skip_hesse {
        let t0 = Instant::now();
        let (cov, errs) = hesse_with(&mut handle, params, &values)?;
        covariance = cov;
        errors = errs;
        hesse_time = t0.elapsed();
    }
    let at_limit = params
        .iter()
        .zip(&values)
        .map(|(p, &v)| {
            if p.is_fixed() {
                return false;
            }
            let span = if p.lower().is_finite() && p.upper().is_finite() {
                p.upper() - p.lower()
            } else {
                1.0
            };
            let tol = 1e-4 * span;
            (p.lower().is_finite() && v - p.lower() <= tol) || (p.upper().is_finite() && p.upper() - v <= tol)
        })
        .collect();

    let result = FitResult {
        status,
        nll_min: f_min,
        names: params.iter().map(|p| p.name().to_string()).collect(),
        values,
        errors,
        fixed: params.iter().map(Variable::is_fixed).collect(),
        at_limit,
        covariance,
        edm: final_edm,
        n_calls: handle.calls(),
        n_gradients: n_grad,
        wall_time_s: start_time.elapsed().as_secs_f64(),
        trace,
        timing: FitTiming {
            normalization: Duration::ZERO,
            minimization,
            hesse: hesse_time,
        },
    };
    info!(
        "fit {}: nll = {}, edm = {:.3e}, {} calls",
        status.as_str(),
        result.nll_min,
        result.edm,
        result.n_calls
    );
    Ok(result)
}

/// Covariance and errors from a central finite-difference Hessian of `fcn`
/// in external coordinates at `at`. Stencils near a bound are shifted inward
/// so every evaluation stays inside the parameter bounds.
pub fn hesse(fcn: &mut dyn Fcn, params: &[Variable], at: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut handle = FcnHandle::new(fcn, u64::MAX);
    hesse_with(&mut handle, params, at)
}

fn hesse_with(h: &mut FcnHandle<'_>, params: &[Variable], at: &[f64]) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let free: Vec<usize> = (0..params.len()).filter(|&i| !params[i].is_fixed()).collect();
    if free.is_empty() {
        return Err(Error::NoFreeParameters);
    }
    let n = free.len();
    let f_at = h.call(at)?;
    let aimsag = f64::EPSILON.sqrt() * (f_at.abs() + ERRDEF);

    let mut steps = vec![0.0; n];
    let mut center = at.to_vec();
    for (k, &i) in free.iter().enumerate() {
        let p = &params[i];
        let room = p.upper() - p.lower();
        let mut step = p.step().min(room / 4.0);
        for _ in 0..6 {
            let c = at[i].clamp(p.lower() + step, p.upper() - step);
            let mut x = at.to_vec();
            x[i] = c;
            let fc = if c == at[i] { f_at } else { h.call(&x)? };
            x[i] = c + step;
            let fp = h.call(&x)?;
            x[i] = c - step;
            let fm = h.call(&x)?;
            let d2 = (fp + fm - 2.0 * fc) / (step * step);
            if !(d2 > 0.0) {
                break;
            }
            let next = (2.0 * aimsag / d2).sqrt().min(room / 4.0);
            let converged = (next / step - 1.0).abs() < 0.1;
            step = next;
            if converged {
                break;
            }
        }
        steps[k] = step;
        center[i] = at[i].clamp(p.lower() + step, p.upper() - step);
    }

    let f_c = if center == at { f_at } else { h.call(&center)? };
    let mut hess = DMatrix::zeros(n, n);
    let mut x = center.clone();
    for a in 0..n {
        let (i, hi) = (free[a], steps[a]);
        x[i] = center[i] + hi;
        let fp = h.call(&x)?;
        x[i] = center[i] - hi;
        let fm = h.call(&x)?;
        x[i] = center[i];
        hess[(a, a)] = (fp + fm - 2.0 * f_c) / (hi * hi);
        for b in 0..a {
            let (j, hj) = (free[b], steps[b]);
            let mut corner = |si: f64, sj: f64| -> Result<f64> {
                let mut y = center.clone();
                y[i] += si * hi;
                y[j] += sj * hj;
                h.call(&y)
            };
            let v = (corner(1.0, 1.0)? - corner(1.0, -1.0)? - corner(-1.0, 1.0)? + corner(-1.0, -1.0)?)
                / (4.0 * hi * hj);
            hess[(a, b)] = v;
            hess[(b, a)] = v;
        }
    }

    let inv = match hess.clone().cholesky() {
        Some(ch) => ch.inverse() * (2.0 * ERRDEF),
        None => {
            let eigenvalues = hess.symmetric_eigen().eigenvalues.iter().copied().collect();
            return Err(Error::NonPositiveDefinite { eigenvalues });
        }
    };
    let mut cov = DMatrix::zeros(params.len(), params.len());
    let mut errors = vec![0.0; params.len()];
    for a in 0..n {
        for b in 0..n {
            // Mirror the lower triangle so the result is exactly symmetric.
            let (r, c) = if a >= b { (a, b) } else { (b, a) };
            cov[(free[a], free[b])] = inv[(r, c)];
        }
        errors[free[a]] = inv[(a, a)].sqrt();
    }
    Ok((cov, errors))
}

/// Central-difference gradient of `fcn` in external coordinates with fixed
/// per-parameter steps.
pub fn numerical_gradient(fcn: &mut dyn Fcn, at: &[f64], steps: &[f64]) -> Result<Vec<f64>> {
    let mut x = at.to_vec();
    let mut g = Vec::with_capacity(at.len());
    for i in 0..at.len() {
        x[i] = at[i] + steps[i];
        let fp = fcn.value(&x)?;
        x[i] = at[i] - steps[i];
        let fm = fcn.value(&x)?;
        x[i] = at[i];
        g.push((fp - fm) / (2.0 * steps[i]));
    }
    Ok(g)
}

/// Binds a model to a dataset and runs the fit, writing results back into
/// the registry.
#[derive(Debug, Clone)]
pub struct FitManager<'a> {
    tree: &'a PdfTree,
    root: PdfId,
    data: &'a DataSet,
    backend: Backend,
    options: FitOptions,
    workers: usize,
}

impl<'a> FitManager<'a> {
    pub fn new(tree: &'a PdfTree, root: PdfId, data: &'a DataSet) -> Self {
        Self {
            tree,
            root,
            data,
            backend: Backend::serial(),
            options: FitOptions::default(),
            workers: 1,
        }
    }

    pub fn backend(mut self, backend: Backend) -> Self {
        self.backend = backend;
        self
    }

    pub fn options(mut self, options: FitOptions) -> Self {
        self.options = options;
        self
    }

    /// Evaluate the unbinned NLL as `workers` static shards.
    pub fn workers(mut self, workers: usize) -> Self {
        self.workers = workers.max(1);
        self
    }

    pub fn parameters(&self) -> Vec<VarId> {
        self.tree.parameters(self.root)
    }

    /// Runs the fit. On a converged fit every free variable gets the fitted
    /// value and error; otherwise the registry values are restored.
    pub fn run(&self, registry: &mut Registry) -> Result<FitResult> {
        check_coverage(self.tree, self.root, self.data.observable_ids())?;
        let ids = self.parameters();
        let vars: Vec<Variable> = ids.iter().map(|&id| registry.get(id).clone()).collect();
        if vars.iter().all(Variable::is_fixed) {
            return Err(Error::NoFreeParameters);
        }
        let originals: Vec<f64> = vars.iter().map(Variable::value).collect();
        let mut engine = Engine::new(self.backend.clone());
        let plan = match self.data {
            DataSet::Unbinned(ds) if self.workers > 1 => {
                Some(ShardPlan::new(ds.len(), self.workers, self.backend.block()))
            }
            _ => None,
        };

        let outcome = {
            let mut objective = |x: &[f64]| -> Result<f64> {
                for (&id, &v) in ids.iter().zip(x) {
                    registry.set_value(id, v)?;
                }
                let snap = registry.snapshot();
                match (&plan, self.data) {
                    (Some(plan), DataSet::Unbinned(ds)) => {
                        if ds.is_empty() {
                            return Err(Error::EmptyDataSet);
                        }
                        let prepared = engine.prepare(self.tree, self.root, ds, &snap)?;
                        let eval = prepared.evaluator(self.tree, &snap);
                        let partials =
                            distributed::evaluate_shards(&eval, self.root, ds, plan, &self.backend)?;
                        distributed::reduce(partials)
                    }
                    _ => engine.objective(self.tree, self.root, self.data, &snap),
                }
            };
            minimize(&mut objective, &vars, &self.options)
        };

        let restore = |registry: &mut Registry| {
            for (&id, &v) in ids.iter().zip(&originals) {
                let _ = registry.set_value(id, v);
            }
        };
        let mut result = match outcome {
            Ok(r) => r,
            Err(e) => {
                restore(registry);
                return Err(e);
            }
        };
        result.timing.normalization = engine.store().stats().normalization_time;
        if result.status == FitStatus::Converged {
            for (k, &id) in ids.iter().enumerate() {
                if vars[k].is_fixed() {
                    continue;
                }
                registry.set_value(id, result.values[k])?;
                let err = (!self.options.skip_hesse).then_some(result.errors[k]);
                registry.get_mut(id).set_error(err);
            }
        } else {
            restore(registry);
        }
        Ok(result)
    }
}
