//! Adapter to the Clarabel interior-point solver.
//!
//! Clarabel solves `min ½xᵀPx + qᵀx  s.t.  Ax + s = b, s ∈ K`. PSD blocks map to
//! the packed upper-triangle cone, which scales off-diagonal entries by √2.

use std::sync::Once;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolution, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use serde::Serialize;
use thiserror::Error;

use super::{ConicProgram, IrError, LinExpr, Sense};

// Linked for its BLAS/LAPACK symbols.
extern crate openblas_src as _;

extern "C" {
    fn openblas_set_num_threads(n: std::os::raw::c_int);
}

static BLAS_THREADS: Once = Once::new();

/// Pins the BLAS backend to one thread so repeated solves are bitwise reproducible.
fn pin_blas_threads() {
    BLAS_THREADS.call_once(|| unsafe { openblas_set_num_threads(1) });
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalLimit,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveSettings {
    pub feas_tol: f64,
    pub gap_tol: f64,
    /// Seconds; infinite means no limit.
    pub time_limit: f64,
    pub max_iter: u32,
}

impl SolveSettings {
    pub fn with_tolerance(tol: f64) -> Self {
        SolveSettings { feas_tol: tol, gap_tol: tol, time_limit: f64::INFINITY, max_iter: 500 }
    }

    /// Lagrangian subproblems.
    pub fn subproblem() -> Self {
        Self::with_tolerance(1e-4)
    }

    /// Whole-network relaxations.
    pub fn monolithic() -> Self {
        Self::with_tolerance(1e-6)
    }
}

impl Default for SolveSettings {
    fn default() -> Self {
        Self::subproblem()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub status: SolveStatus,
    /// Primal objective, including the constant term.
    pub objective: f64,
    /// Dual objective when the backend certifies it (converged or nearly converged).
    pub dual_objective: Option<f64>,
    /// Present iff the status is `Optimal` or `NumericalLimit`.
    pub primal: Option<Vec<f64>>,
    pub solve_time: f64,
    pub iterations: u32,
    /// Backend termination code, for diagnostics.
    pub backend_status: String,
}

impl Solution {
    pub fn has_primal(&self) -> bool {
        self.primal.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("invalid program: {0}")]
    InvalidProgram(#[from] IrError),
    #[error("solver backend failure: {0}")]
    BackendFailure(String),
}

#[derive(Default)]
struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
}

impl Triplets {
    /// Appends the row `scale·(terms)·x + s = rhs`.
    fn push(&mut self, e: &LinExpr, scale: f64, rhs: f64) {
        let r = self.b.len();
        for &(v, c) in &e.terms {
            self.rows.push(r);
            self.cols.push(v);
            self.vals.push(scale * c);
        }
        self.b.push(rhs);
    }

    /// Appends a cone slot `s = e`.
    fn push_slot(&mut self, e: &LinExpr, scale: f64) {
        self.push(e, -scale, scale * e.constant);
    }
}

struct Assembled {
    a: CscMatrix<f64>,
    b: Vec<f64>,
    cones: Vec<SupportedConeT<f64>>,
}

fn assemble(p: &ConicProgram) -> Assembled {
    let n = p.n_vars();
    let mut t = Triplets::default();
    let mut cones = Vec::new();

    let start = t.b.len();
    for r in p.rows.iter().filter(|r| r.sense == Sense::Eq) {
        t.push(&r.expr, 1.0, r.rhs - r.expr.constant);
    }
    for j in 0..n {
        if p.lower[j] == p.upper[j] {
            t.push(&LinExpr::var(j), 1.0, p.lower[j]);
        }
    }
    if t.b.len() > start {
        cones.push(SupportedConeT::ZeroConeT(t.b.len() - start));
    }

    let start = t.b.len();
    for r in &p.rows {
        match r.sense {
            Sense::Le => t.push(&r.expr, 1.0, r.rhs - r.expr.constant),
            Sense::Ge => t.push(&r.expr, -1.0, r.expr.constant - r.rhs),
            Sense::Eq => {}
        }
    }
    for j in 0..n {
        if p.lower[j] == p.upper[j] {
            continue;
        }
        if p.upper[j].is_finite() {
            t.push(&LinExpr::var(j), 1.0, p.upper[j]);
        }
        if p.lower[j].is_finite() {
            t.push(&LinExpr::var(j), -1.0, -p.lower[j]);
        }
    }
    if t.b.len() > start {
        cones.push(SupportedConeT::NonnegativeConeT(t.b.len() - start));
    }

    for c in &p.socs {
        let entries = c.standard_entries();
        for e in &entries {
            t.push_slot(e, 1.0);
        }
        cones.push(SupportedConeT::SecondOrderConeT(entries.len()));
    }

    for blk in &p.psds {
        for i in 0..blk.dim {
            for j in 0..=i {
                let scale = if i == j { 1.0 } else { std::f64::consts::SQRT_2 };
                t.push_slot(blk.entry(i, j), scale);
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(blk.dim));
    }

    let m = t.b.len();
    Assembled { a: CscMatrix::new_from_triplets(m, n, t.rows, t.cols, t.vals), b: t.b, cones }
}

fn map_status(s: SolverStatus) -> (SolveStatus, bool) {
    use SolverStatus as S;
    match s {
        S::Solved => (SolveStatus::Optimal, true),
        S::AlmostSolved => (SolveStatus::NumericalLimit, true),
        S::InsufficientProgress | S::NumericalError => (SolveStatus::NumericalLimit, false),
        S::PrimalInfeasible | S::AlmostPrimalInfeasible => (SolveStatus::Infeasible, false),
        S::DualInfeasible | S::AlmostDualInfeasible => (SolveStatus::Unbounded, false),
        _ => (SolveStatus::IterationLimit, false),
    }
}

/// Solves `program` single-threaded. Solver statuses are returned, not raised.
pub fn solve(program: &ConicProgram, settings: &SolveSettings) -> Result<Solution, SolveError> {
    program.validate()?;
    pin_blas_threads();
    let n = program.n_vars();
    let Assembled { a, b, cones } = assemble(program);

    let mut q = vec![0.0; n];
    for &(v, c) in &program.objective.terms {
        q[v] += c;
    }
    let mut diag = vec![0.0; n];
    for &(v, c) in &program.quadratic {
        diag[v] += 2.0 * c;
    }
    // the backend is sensitive to objective magnitude; solve a normalized copy
    let sigma = q.iter().chain(&diag).fold(1.0f64, |m, v| m.max(v.abs()));
    q.iter_mut().for_each(|v| *v /= sigma);
    diag.iter_mut().for_each(|v| *v /= sigma);
    let (pi, pv): (Vec<usize>, Vec<f64>) = diag.iter().enumerate().filter(|d| *d.1 != 0.0).map(|(i, &v)| (i, v)).unzip();
    let pmat = CscMatrix::new_from_triplets(n, n, pi.clone(), pi, pv);

    let mut sol = run_backend(&pmat, &q, &a, &b, &cones, settings, REGULARIZATION[0])?;
    // stalls near a rank-deficient optimum usually clear with a stiffer regularization
    if !matches!(sol.status, SolverStatus::Solved | SolverStatus::PrimalInfeasible | SolverStatus::DualInfeasible) {
        let retry = run_backend(&pmat, &q, &a, &b, &cones, settings, REGULARIZATION[1])?;
        if retry.status == SolverStatus::Solved {
            sol = DefaultSolution { solve_time: sol.solve_time + retry.solve_time, ..retry };
        }
    }
    let (status, certified) = map_status(sol.status);
    let k = program.objective.constant;
    let has_primal = matches!(status, SolveStatus::Optimal | SolveStatus::NumericalLimit);
    Ok(Solution {
        status,
        objective: sigma * sol.obj_val + k,
        dual_objective: certified.then_some(sigma * sol.obj_val_dual + k),
        primal: has_primal.then_some(sol.x),
        solve_time: sol.solve_time,
        iterations: sol.iterations,
        backend_status: format!("{:?}", sol.status),
    })
}

/// Static KKT regularization: first attempt, then the retry.
const REGULARIZATION: [f64; 2] = [1e-7, 1e-6];

fn run_backend(
    pmat: &CscMatrix<f64>,
    q: &[f64],
    a: &CscMatrix<f64>,
    b: &[f64],
    cones: &[SupportedConeT<f64>],
    settings: &SolveSettings,
    regularization: f64,
) -> Result<DefaultSolution<f64>, SolveError> {
    let tol = settings.feas_tol;
    let gap = settings.gap_tol;
    let opts = DefaultSettingsBuilder::default()
        .static_regularization_constant(regularization)
        .direct_solve_method("faer".into())
        .verbose(std::env::var("NETDEC_SOLVER_VERBOSE").is_ok())
        .max_iter(settings.max_iter)
        .time_limit(settings.time_limit)
        .tol_feas(tol)
        .tol_gap_abs(gap)
        .tol_gap_rel(gap)
        .reduced_tol_feas(tol.max(1e-4) * 10.0)
        .reduced_tol_gap_abs(gap.max(5e-5) * 10.0)
        .reduced_tol_gap_rel(gap.max(5e-5) * 10.0)
        .max_threads(1)
        .chordal_decomposition_enable(false)
        .build()
        .map_err(|e| SolveError::BackendFailure(e.to_string()))?;
    let mut solver = DefaultSolver::new(pmat, q, a, b, cones, opts)
        .map_err(|e| SolveError::BackendFailure(e.to_string()))?;
    solver.solve();
    Ok(solver.solution)
}
