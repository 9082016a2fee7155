//! Dirichlet problem for the λ-approximating minimal surface equation, with
//! continuation in λ.
//!
//! At each λ the discrete equation
//! `F(u) = [u_xx (ε + q²) − 2 u_xy p q + u_yy (ε + p²)] / (2ε + p² + q²) = 0`,
//! `ε = 1/λ²`, is solved at the interior nodes by damped Newton with an
//! analytic Jacobian and a sparse LU factorisation.

use std::sync::{Arc, OnceLock};

use faer::prelude::*;
use faer::sparse::linalg::solvers::{Lu, SymbolicLu};
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Par};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, energy, msl_terms, Lambda};
use crate::grid::{GridDomain, GridFunction};
use crate::stencil::{interior_stencils, NodeStencil};

/// Name of the linear solver, echoed in every report.
pub const LINEAR_SOLVER: &str = "faer sparse LU (partial pivoting, sequential)";

fn default_schedule() -> Vec<f64> {
    (0..=14).map(|k| 2f64.powi(k)).collect()
}
fn default_newton_tol() -> f64 {
    1e-10
}
fn default_max_newton_iters() -> usize {
    50
}
fn default_damping() -> f64 {
    0.5
}
fn default_min_step() -> f64 {
    2f64.powi(-20)
}
fn default_max_substeps() -> usize {
    4
}
fn default_max_principle_tol() -> f64 {
    1e-8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    #[serde(default = "default_schedule")]
    pub lambda_schedule: Vec<f64>,
    /// Target for the max-norm of the scaled residual.
    #[serde(default = "default_newton_tol")]
    pub newton_tol: f64,
    #[serde(default = "default_max_newton_iters")]
    pub max_newton_iters: usize,
    /// Backtracking factor of the line search.
    #[serde(default = "default_damping")]
    pub damping: f64,
    /// Smallest Newton step before divergence is declared.
    #[serde(default = "default_min_step")]
    pub min_step: f64,
    /// Grid spacing; informational for the solver, used by front ends.
    #[serde(default)]
    pub h: Option<f64>,
    /// How many times a failed λ step may be bisected (geometrically).
    #[serde(default = "default_max_substeps")]
    pub max_substeps: usize,
    #[serde(default = "default_max_principle_tol")]
    pub max_principle_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda_schedule: default_schedule(),
            newton_tol: default_newton_tol(),
            max_newton_iters: default_max_newton_iters(),
            damping: default_damping(),
            min_step: default_min_step(),
            h: None,
            max_substeps: default_max_substeps(),
            max_principle_tol: default_max_principle_tol(),
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if self.lambda_schedule.is_empty() {
            return bad("lambda schedule is empty".into());
        }
        if self.lambda_schedule.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
            return bad("lambda values must be finite and > 0".into());
        }
        if self.lambda_schedule.windows(2).any(|w| !(w[1] > w[0])) {
            return bad("lambda schedule must increase strictly".into());
        }
        if !(self.newton_tol > 0.0) || self.max_newton_iters == 0 {
            return bad("newton_tol and max_newton_iters must be positive".into());
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            return bad(format!("damping must lie in (0, 1), got {}", self.damping));
        }
        if !(self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad(format!("min_step must lie in (0, 1], got {}", self.min_step));
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return bad(format!("h must be > 0, got {h}"));
            }
        }
        Ok(())
    }
}

/// Dirichlet data: a value at every boundary node of a domain.
#[derive(Clone, Debug)]
pub struct BoundaryData {
    domain: Arc<GridDomain>,
    values: Vec<f64>,
}

impl BoundaryData {
    /// `values` holds one entry per lattice node; only boundary entries are
    /// read and each must be finite.
    pub fn from_values(domain: Arc<GridDomain>, values: Vec<f64>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::InvalidGrid(format!(
                "{} boundary values for a lattice of {} nodes",
                values.len(),
                domain.len()
            )));
        }
        for &k in domain.boundary_nodes() {
            if !values[k].is_finite() {
                let (i, j) = domain.ij(k);
                return Err(Error::MissingBoundary { i, j });
            }
        }
        Ok(Self { domain, values })
    }

    pub fn from_fn(domain: Arc<GridDomain>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = vec![f64::NAN; domain.len()];
        for &k in domain.boundary_nodes() {
            let (x, y) = domain.coords(k);
            values[k] = f(x, y);
        }
        Self::from_values(domain, values)
    }

    /// Trace of a grid function.
    pub fn from_grid_function(u: &GridFunction) -> Result<Self> {
        Self::from_values(u.domain_arc().clone(), u.values().to_vec())
    }

    /// `φ(θ)` at each boundary node, `θ` its polar angle about `(cx, cy)`.
    pub fn angular(domain: Arc<GridDomain>, cx: f64, cy: f64, phi: impl Fn(f64) -> f64) -> Result<Self> {
        Self::from_fn(domain, |x, y| phi((y - cy).atan2(x - cx)))
    }

    pub fn domain(&self) -> &Arc<GridDomain> {
        &self.domain
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.values[idx]
    }

    fn range(&self) -> (f64, f64) {
        self.domain
            .boundary_nodes()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &k| {
                (lo.min(self.values[k]), hi.max(self.values[k]))
            })
    }
}

/// Boundary curve of the non-uniqueness example, `cos²θ + sinθ cosθ`.
pub fn nonunique_trace(theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    c * c + s * c
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaRecord {
    pub lambda: f64,
    pub iterations: usize,
    pub final_residual: f64,
    pub e_lambda: f64,
    pub e: f64,
    /// `e_lambda − e`
    pub gap: f64,
    /// Interior values stay within the boundary range (up to tolerance).
    pub max_principle: bool,
    /// True for intermediate λ inserted after a failed continuation step.
    pub substep: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolverReport {
    pub records: Vec<LambdaRecord>,
    #[serde(skip)]
    pub limit_candidate: Option<GridFunction>,
    pub converged: bool,
    /// `E_λ(u_λ) − E(u_λ)` at the last solved λ.
    pub energy_gap: f64,
    /// `‖u_K − u_{K−1}‖∞` between the last two scheduled λ.
    pub last_increment: Option<f64>,
    /// Scheduled λ skipped because `Area/λ` fell below `newton_tol`.
    pub skipped_lambdas: Vec<f64>,
    pub area: f64,
    pub linear_solver: String,
    /// Set when Newton failed; the records hold the partial schedule.
    pub failure: Option<String>,
}

impl SolverReport {
    pub fn max_principle_ok(&self) -> bool {
        self.records.iter().all(|r| r.max_principle)
    }
}

/// Discretised operator on a fixed domain.
struct Problem {
    domain: Arc<GridDomain>,
    stencils: Vec<NodeStencil>,
    /// lattice index -> unknown index (interior nodes only)
    unknown: Vec<Option<usize>>,
    /// Jacobians share one sparsity pattern, so one symbolic factorisation
    symbolic: OnceLock<SymbolicLu<usize>>,
}

impl Problem {
    fn new(domain: Arc<GridDomain>) -> Result<Self> {
        let stencils = interior_stencils(&domain)?;
        let mut unknown = vec![None; domain.len()];
        for (n, &k) in domain.interior_nodes().iter().enumerate() {
            unknown[k] = Some(n);
        }
        Ok(Self {
            domain,
            stencils,
            unknown,
            symbolic: OnceLock::new(),
        })
    }

    fn n(&self) -> usize {
        self.stencils.len()
    }

    fn residual(&self, vals: &[f64], eps: f64) -> Vec<f64> {
        self.stencils
            .par_iter()
            .map(|st| {
                let t = msl_terms(&self.domain, st, vals, eps);
                t.value / (2.0 * eps + t.p * t.p + t.q * t.q)
            })
            .collect()
    }

    fn jacobian(&self, vals: &[f64], eps: f64) -> Result<SparseColMat<usize, f64>> {
        let rows: Vec<Vec<Triplet<usize, usize, f64>>> = self
            .stencils
            .par_iter()
            .enumerate()
            .map(|(row, st)| {
                let t = msl_terms(&self.domain, st, vals, eps);
                let tt = 2.0 * eps + t.p * t.p + t.q * t.q;
                let f = t.value / tt;
                let cx = (2.0 * t.p * t.uyy - 2.0 * t.q * t.uxy - 2.0 * f * t.p) / tt;
                let cy = (2.0 * t.q * t.uxx - 2.0 * t.p * t.uxy - 2.0 * f * t.q) / tt;
                let parts = [
                    (&st.dxx, (eps + t.q * t.q) / tt),
                    (&st.dyy, (eps + t.p * t.p) / tt),
                    (&st.dxy, -2.0 * t.p * t.q / tt),
                    (&st.dx, cx),
                    (&st.dy, cy),
                ];
                let mut out = Vec::with_capacity(16);
                for (w, c) in parts {
                    for &(k, wk) in w.iter() {
                        if let Some(col) = self.unknown[k] {
                            out.push(Triplet::new(row, col, c * wk));
                        }
                    }
                }
                out
            })
            .collect();
        let triplets: Vec<_> = rows.into_iter().flatten().collect();
        SparseColMat::try_new_from_triplets(self.n(), self.n(), &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))
    }

    fn solve_jacobian(&self, a: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<Vec<f64>> {
        let symbolic = match self.symbolic.get() {
            Some(s) => s.clone(),
            None => {
                let s = SymbolicLu::try_new(a.symbolic())
                    .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
                self.symbolic.get_or_init(|| s).clone()
            }
        };
        let lu = Lu::try_new_with_symbolic(symbolic, a.as_ref())
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        finish_solve(lu.solve(&Col::from_fn(rhs.len(), |i| rhs[i])))
    }

    fn solve_linear(&self, a: &SparseColMat<usize, f64>, rhs: &[f64]) -> Result<Vec<f64>> {
        let lu = a.sp_lu().map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        finish_solve(lu.solve(&Col::from_fn(rhs.len(), |i| rhs[i])))
    }


    /// Discrete harmonic extension of the boundary values (five-point Laplacian).
    fn harmonic_extension(&self, bd: &BoundaryData) -> Result<Vec<f64>> {
        let d = &self.domain;
        let mut vals = vec![f64::NAN; d.len()];
        for &k in d.boundary_nodes() {
            vals[k] = bd.value(k);
        }
        let (ax, ay) = (1.0 / (d.hx() * d.hx()), 1.0 / (d.hy() * d.hy()));
        let mut triplets = Vec::with_capacity(5 * self.n());
        let mut rhs = vec![0.0; self.n()];
        for (row, &k) in d.interior_nodes().iter().enumerate() {
            triplets.push(Triplet::new(row, row, -2.0 * (ax + ay)));
            for (di, dj, c) in [(1, 0, ax), (-1, 0, ax), (0, 1, ay), (0, -1, ay)] {
                let nb = d.offset(k, di, dj).expect("interior node has 4 neighbours");
                match self.unknown[nb] {
                    Some(col) => triplets.push(Triplet::new(row, col, c)),
                    None => rhs[row] -= c * bd.value(nb),
                }
            }
        }
        let a = SparseColMat::try_new_from_triplets(self.n(), self.n(), &triplets)
            .map_err(|e| Error::LinearSolve(format!("{e:?}")))?;
        let x = self.solve_linear(&a, &rhs)?;
        for (n, &k) in d.interior_nodes().iter().enumerate() {
            vals[k] = x[n];
        }
        Ok(vals)
    }
}

fn finish_solve(x: Col<f64>) -> Result<Vec<f64>> {
    let out: Vec<f64> = (0..x.nrows()).map(|i| x[i]).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::LinearSolve("singular linear system".into()));
    }
    Ok(out)
}

fn max_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

struct NewtonOutcome {
    iterations: usize,
    residual: f64,
}

/// Newton gives up when the residual fails to halve over this many iterations.
const STAGNATION_WINDOW: usize = 8;

/// Damped Newton at fixed `eps`, updating `vals` in place on success.
fn newton(prob: &Problem, vals: &mut [f64], eps: f64, lambda: f64, cfg: &SolverConfig) -> Result<NewtonOutcome> {
    let interior = prob.domain.interior_nodes();
    let mut f = prob.residual(vals, eps);
    let mut res = max_norm(&f);
    let mut trial = vals.to_vec();
    let mut history = vec![res];
    for it in 0..cfg.max_newton_iters {
        if res <= cfg.newton_tol {
            return Ok(NewtonOutcome {
                iterations: it,
                residual: res,
            });
        }
        if it >= STAGNATION_WINDOW && res > 0.5 * history[it - STAGNATION_WINDOW] {
            return Err(Error::NewtonDivergence {
                lambda,
                iterations: it,
                residual: res,
            });
        }
        let jac = prob.jacobian(vals, eps)?;
        let neg: Vec<f64> = f.iter().map(|v| -v).collect();
        let step = prob.solve_jacobian(&jac, &neg)?;
        let mut t = 1.0;
        loop {
            for (n, &k) in interior.iter().enumerate() {
                trial[k] = vals[k] + t * step[n];
            }
            let ft = prob.residual(&trial, eps);
            let rt = max_norm(&ft);
            if rt.is_finite() && rt < res {
                vals.copy_from_slice(&trial);
                f = ft;
                res = rt;
                history.push(res);
                break;
            }
            t *= cfg.damping;
            if t < cfg.min_step {
                return Err(Error::NewtonDivergence {
                    lambda,
                    iterations: it + 1,
                    residual: res,
                });
            }
        }
    }
    if res <= cfg.newton_tol {
        Ok(NewtonOutcome {
            iterations: cfg.max_newton_iters,
            residual: res,
        })
    } else {
        Err(Error::NewtonDivergence {
            lambda,
            iterations: cfg.max_newton_iters,
            residual: res,
        })
    }
}

struct Recorder {
    lo: f64,
    hi: f64,
    tol: f64,
}

impl Recorder {
    fn record(&self, prob: &Problem, vals: &[f64], lambda: f64, o: &NewtonOutcome, substep: bool) -> Result<LambdaRecord> {
        let u = GridFunction::new(prob.domain.clone(), vals.to_vec())?;
        let e_lambda = energy(&u, Lambda::Finite(lambda));
        let e = energy(&u, Lambda::Infinity);
        let max_principle = prob
            .domain
            .interior_nodes()
            .iter()
            .all(|&k| vals[k] >= self.lo - self.tol && vals[k] <= self.hi + self.tol);
        Ok(LambdaRecord {
            lambda,
            iterations: o.iterations,
            final_residual: o.residual,
            e_lambda,
            e,
            gap: e_lambda - e,
            max_principle,
            substep,
        })
    }
}

/// Solves at `lambda` starting from the solution at `prev`; on failure the
/// step is split at the geometric mean, up to `depth` times.
#[allow(clippy::too_many_arguments)]
fn continuation_step(
    prob: &Problem,
    vals: &mut Vec<f64>,
    prev: Option<f64>,
    lambda: f64,
    depth: usize,
    substep: bool,
    cfg: &SolverConfig,
    rec: &Recorder,
    out: &mut Vec<LambdaRecord>,
) -> Result<()> {
    let eps = 1.0 / (lambda * lambda);
    let mut attempt = vals.clone();
    match newton(prob, &mut attempt, eps, lambda, cfg) {
        Ok(o) => {
            *vals = attempt;
            out.push(rec.record(prob, vals, lambda, &o, substep)?);
            Ok(())
        }
        Err(err @ Error::NewtonDivergence { .. }) => {
            let Some(lo) = prev.filter(|_| depth > 0) else {
                return Err(err);
            };
            let mid = (lo * lambda).sqrt();
            continuation_step(prob, vals, prev, mid, depth - 1, true, cfg, rec, out)?;
            continuation_step(prob, vals, Some(mid), lambda, depth - 1, substep, cfg, rec, out)
        }
        Err(e) => Err(e),
    }
}

/// Solves `H_λ(u) = 0` with the given boundary values for each λ of the
/// schedule, warm-starting every λ from the previous solution.
///
/// Newton divergence is reported in `failure` together with the records of
/// the λ values that did converge.
pub fn solve_dirichlet(boundary: &BoundaryData, cfg: &SolverConfig) -> Result<SolverReport> {
    cfg.validate()?;
    faer::set_global_parallelism(Par::Seq);
    let domain = boundary.domain().clone();
    let prob = Problem::new(domain.clone())?;
    let area = domain.area();
    let (lo, hi) = boundary.range();
    let rec = Recorder {
        lo,
        hi,
        tol: cfg.max_principle_tol,
    };

    let mut schedule = Vec::new();
    let mut skipped = Vec::new();
    for &l in &cfg.lambda_schedule {
        // beyond this point the energy gap is below the Newton tolerance
        if area / l < cfg.newton_tol && !schedule.is_empty() {
            skipped.push(l);
        } else {
            schedule.push(l);
        }
    }

    let mut vals = prob.harmonic_extension(boundary)?;
    let mut records = Vec::new();
    let mut prev_vals: Option<Vec<f64>> = None;
    let mut last_increment = None;
    let mut failure = None;
    let mut prev_lambda = None;
    let mut solved = 0usize;

    for &lambda in &schedule {
        let before = vals.clone();
        let outcome = continuation_step(
            &prob,
            &mut vals,
            prev_lambda,
            lambda,
            cfg.max_substeps,
            false,
            cfg,
            &rec,
            &mut records,
        );
        match outcome {
            Ok(()) => {}
            Err(e @ Error::NewtonDivergence { .. }) => {
                failure = Some(e.to_string());
                vals = before;
                break;
            }
            Err(e) => return Err(e),
        }
        solved += 1;
        if let Some(p) = &prev_vals {
            last_increment = Some(
                domain
                    .interior_nodes()
                    .iter()
                    .map(|&k| (vals[k] - p[k]).abs())
                    .fold(0.0, f64::max),
            );
        }
        prev_vals = Some(vals.clone());
        prev_lambda = Some(lambda);
    }

    let limit = GridFunction::new(domain.clone(), vals)?;
    let energy_gap = records
        .iter()
        .rev()
        .find(|r| !r.substep)
        .map_or(f64::NAN, |r| r.gap);
    let all_ok = failure.is_none()
        && solved == schedule.len()
        && records.iter().all(|r| r.final_residual <= cfg.newton_tol);
    let converged = all_ok
        && match (last_increment, schedule.len()) {
            (_, 1) => true,
            (Some(inc), n) => inc <= 10.0 * cfg.newton_tol.sqrt() / schedule[n - 2],
            (None, _) => false,
        };
    Ok(SolverReport {
        records,
        limit_candidate: Some(limit),
        converged,
        energy_gap,
        last_increment,
        skipped_lambdas: skipped,
        area,
        linear_solver: LINEAR_SOLVER.to_string(),
        failure,
    })
}

/// Outcome of [`verify_cmc_limit`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CmcLimitReport {
    /// `|κ_n|` is nonincreasing.
    pub kappa_monotone: bool,
    pub kappa_last: f64,
    /// Max-norm of `div n0` of the last surface (off the characteristic set).
    pub final_residual: f64,
    pub energies: Vec<f64>,
    /// Energies nonincreasing within `energy_tol`.
    pub energies_nonincreasing: bool,
    pub energy_tol: f64,
    pub max_boundary_gap: f64,
    pub passed: bool,
}

/// Checks a sequence of surfaces with mean curvatures `κ_n` tending to zero.
///
/// `boundary_tol` bounds the allowed difference of boundary traces; the
/// energy tolerance is `1e-6 + energy_h2_const * h²`.
pub fn verify_cmc_limit(
    surfaces: &[GridFunction],
    kappas: &[f64],
    boundary_tol: f64,
    energy_h2_const: f64,
    residual_tol: f64,
) -> Result<CmcLimitReport> {
    if surfaces.is_empty() || surfaces.len() != kappas.len() {
        return Err(Error::InvalidParameter(
            "need one curvature per surface and at least one surface".into(),
        ));
    }
    if kappas.iter().any(|k| !k.is_finite()) {
        return Err(Error::InvalidParameter("curvatures must be finite".into()));
    }
    let first = &surfaces[0];
    let mut max_gap = 0.0f64;
    for s in &surfaces[1..] {
        let gap = first.boundary_gap(s)?;
        max_gap = max_gap.max(gap);
        if gap > boundary_tol {
            return Err(Error::BoundaryMismatch {
                gap,
                tol: boundary_tol,
            });
        }
    }
    let kappa_monotone = kappas.windows(2).all(|w| w[1].abs() <= w[0].abs());
    let last = surfaces.last().unwrap();
    let final_residual = geometry::mse_residual(last, None)?.max_abs();
    let energies: Vec<f64> = surfaces.iter().map(|s| energy(s, Lambda::Infinity)).collect();
    let h = first.domain().h();
    let energy_tol = 1e-6 + energy_h2_const * h * h;
    let energies_nonincreasing = energies.windows(2).all(|w| w[1] <= w[0] + energy_tol);
    let kappa_last = kappas.last().unwrap().abs();
    Ok(CmcLimitReport {
        kappa_monotone,
        kappa_last,
        final_residual,
        passed: kappa_monotone && energies_nonincreasing && final_residual <= residual_tol,
        energies,
        energies_nonincreasing,
        energy_tol,
        max_boundary_gap: max_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(h: f64) -> Arc<GridDomain> {
        Arc::new(GridDomain::rectangle(0.0, 1.0, 0.0, 1.0, h).unwrap())
    }

    fn short(cfg_lambdas: &[f64]) -> SolverConfig {
        SolverConfig {
            lambda_schedule: cfg_lambdas.to_vec(),
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(short(&[]).validate().is_err());
        assert!(short(&[1.0, 1.0]).validate().is_err());
        assert!(short(&[-1.0]).validate().is_err());
        let cfg: SolverConfig = serde_json::from_str(r#"{"lambda_schedule":[1,2,4],"h":0.1}"#).unwrap();
        assert_eq!(cfg.max_newton_iters, 50);
        assert_eq!(cfg.h, Some(0.1));
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let d = Arc::new(GridDomain::disk(0.0, 0.0, 1.0, 0.25).unwrap());
        let prob = Problem::new(d.clone()).unwrap();
        let u = GridFunction::from_fn(d.clone(), |x, y| x * x - 0.3 * x * y + (2.0 * y).sin()).unwrap();
        let vals = u.values().to_vec();
        let eps = 0.37;
        let jac = prob.jacobian(&vals, eps).unwrap();
        let dense = jac.to_dense();
        let f0 = prob.residual(&vals, eps);
        let step = 1e-6;
        for (col, &k) in d.interior_nodes().iter().enumerate().step_by(3) {
            let mut v = vals.clone();
            v[k] += step;
            let fp = prob.residual(&v, eps);
            v[k] -= 2.0 * step;
            let fm = prob.residual(&v, eps);
            for row in 0..prob.n() {
                let fd = (fp[row] - fm[row]) / (2.0 * step);
                assert!((fd - dense[(row, col)]).abs() < 1e-5 * (1.0 + fd.abs()), "({row},{col})");
            }
            let _ = f0[col];
        }
    }

    #[test]
    fn harmonic_extension_reproduces_linear_data() {
        let d = square(0.1);
        let prob = Problem::new(d.clone()).unwrap();
        let bd = BoundaryData::from_fn(d.clone(), |x, y| 2.0 * x - y + 3.0).unwrap();
        let v = prob.harmonic_extension(&bd).unwrap();
        for &k in d.interior_nodes() {
            let (x, y) = d.coords(k);
            assert!((v[k] - (2.0 * x - y + 3.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn plane_is_recovered() {
        let d = square(1.0 / 16.0);
        let bd = BoundaryData::from_fn(d.clone(), |x, y| 2.0 * x - y + 3.0).unwrap();
        let rep = solve_dirichlet(&bd, &short(&[1.0, 4.0, 16.0])).unwrap();
        let u = rep.limit_candidate.unwrap();
        let exact = GridFunction::from_fn(d, |x, y| 2.0 * x - y + 3.0).unwrap();
        assert!(u.max_abs_diff(&exact).unwrap() < 1e-10);
        assert!(rep.converged);
        assert!(rep.records.iter().all(|r| r.max_principle));
    }

    #[test]
    fn sandwich_holds_per_lambda() {
        let d = square(1.0 / 16.0);
        let bd = BoundaryData::from_fn(d.clone(), |x, y| (3.0 * x).sin() * y).unwrap();
        let rep = solve_dirichlet(&bd, &short(&[1.0, 2.0, 4.0, 8.0])).unwrap();
        for r in &rep.records {
            assert!(r.gap >= 0.0 && r.gap <= rep.area / r.lambda + 1e-14, "{r:?}");
            assert!(r.final_residual <= 1e-10);
        }
    }

    #[test]
    fn missing_boundary_value() {
        let d = square(0.25);
        let vals = vec![f64::NAN; d.len()];
        assert!(matches!(
            BoundaryData::from_values(d, vals),
            Err(Error::MissingBoundary { .. })
        ));
    }

    #[test]
    fn cmc_limit_checks() {
        let d = square(1.0 / 16.0);
        let plane = GridFunction::from_fn(d.clone(), |x, y| x + y).unwrap();
        let rep = verify_cmc_limit(&[plane.clone(), plane.clone()], &[0.0, 0.0], 1e-12, 1.0, 1e-2).unwrap();
        assert!(rep.passed);
        assert_eq!(rep.energies[0], rep.energies[1]);
        let shifted = GridFunction::from_fn(d, |x, y| x + y + 1.0).unwrap();
        assert!(matches!(
            verify_cmc_limit(&[plane, shifted], &[0.0, 0.0], 1e-6, 1.0, 1e-2),
            Err(Error::BoundaryMismatch { .. })
        ));
    }
}
