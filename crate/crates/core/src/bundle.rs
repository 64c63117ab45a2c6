//! Proximal bundle maximization of the Lagrangian dual over `Σₖ λₖ = 0`.
//!
//! Multipliers are parameterized by one vector μ with four entries per cut line;
//! the part holding the from-bus sees `+μ`, the other part `−μ`. Since
//! `‖λ − λʳ‖² = 2‖μ − μʳ‖²`, the master maximizes `Σₖθₖ − u‖μ − μʳ‖²`.

use std::sync::Mutex;
use std::time::Instant;

use log::{debug, warn};
use serde::Serialize;
use thiserror::Error;

use crate::conic::{solve, ConicProgram, LinExpr, Sense, SolveError, SolveSettings, SolveStatus};
use crate::model::SubModel;
use crate::partition::Partition;
use crate::relax::{evaluate_dual_function, DualEvaluation, DualSettings, RelaxError};

/// Per-part multipliers `λₖ`, ordered like that part's coupling slots.
pub fn project_multipliers(mu: &[f64], partition: &Partition) -> Result<Vec<Vec<f64>>, RelaxError> {
    let dim = partition.coupling_dimension();
    if mu.len() != dim {
        return Err(RelaxError::DimensionMismatch { expected: dim, found: mu.len() });
    }
    Ok((0..partition.num_parts())
        .map(|k| {
            partition
                .part_cuts(k)
                .flat_map(|(cut, c)| (0..4).map(move |comp| if c.plus == k { mu[4 * cut + comp] } else { -mu[4 * cut + comp] }))
                .collect()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleCut {
    pub part: usize,
    pub value: f64,
    pub subgradient_mu: Vec<f64>,
    pub anchor_mu: Vec<f64>,
    pub birth: usize,
}

impl BundleCut {
    pub fn eval(&self, mu: &[f64]) -> f64 {
        self.value + self.subgradient_mu.iter().zip(mu.iter().zip(&self.anchor_mu)).map(|(g, (m, a))| g * (m - a)).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleParams {
    pub eps: f64,
    pub m_l: f64,
    pub u0: f64,
    pub u_min: f64,
    pub u_max: f64,
    pub max_iter: usize,
    pub max_cuts: usize,
    /// Keep every cut (no eviction).
    pub strict_bundle: bool,
    /// Backend tolerance for the master QP.
    pub master_tol: f64,
}

impl Default for BundleParams {
    fn default() -> Self {
        BundleParams {
            eps: 1e-4,
            m_l: 0.1,
            u0: 1.0,
            u_min: 1e-6,
            u_max: 1e9,
            max_iter: 200,
            max_cuts: 100,
            strict_bundle: false,
            master_tol: 1e-9,
        }
    }
}

impl BundleParams {
    pub fn validate(&self) -> Result<(), BundleError> {
        let bad = |what: &str| Err(BundleError::InvalidParams(what.into()));
        if !(self.eps > 0.0) {
            return bad("eps must be positive");
        }
        if !(self.m_l > 0.0 && self.m_l < 0.5) {
            return bad("m_L must lie in (0, 1/2)");
        }
        if !(self.u0 > 0.0 && self.u_min > 0.0 && self.u_min <= self.u_max) {
            return bad("proximal weights must be positive with u_min <= u_max");
        }
        if self.max_cuts < 2 {
            return bad("max_cuts must be at least 2");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BundleError {
    #[error("invalid bundle parameters: {0}")]
    InvalidParams(String),
    #[error("master problem ended with status {0:?}")]
    MasterFailed(SolveStatus),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Serious,
    Null,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub r: usize,
    pub l: usize,
    pub step: StepKind,
    pub d_center: f64,
    pub d_trial: f64,
    pub m: f64,
    pub v: f64,
    pub u: f64,
    pub master_time: f64,
    pub part_times: Vec<f64>,
    pub wall_time: f64,
}

/// Receives one record per trial; shared across threads.
pub trait IterationSink: Send + Sync {
    fn record(&self, rec: &IterationRecord);
}

/// Collects records in memory.
#[derive(Debug, Default)]
pub struct MemorySink(pub Mutex<Vec<IterationRecord>>);

impl IterationSink for MemorySink {
    fn record(&self, rec: &IterationRecord) {
        self.0.lock().expect("sink poisoned").push(rec.clone());
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BundleState {
    pub center_mu: Vec<f64>,
    /// Evaluated D̂ at the center.
    pub center_value: f64,
    /// Per-part center values, lowered where needed so no cut lies below them at the center.
    pub center_parts: Vec<f64>,
    pub cuts: Vec<Vec<BundleCut>>,
    pub u: f64,
    pub r: usize,
    pub l: usize,
    pub null_streak: usize,
    /// Trial evaluations so far.
    pub iter: usize,
}

impl BundleState {
    pub fn new(first: &DualEvaluation, u0: f64) -> Self {
        let mut s = BundleState {
            center_mu: first.mu.clone(),
            center_value: first.total,
            center_parts: first.per_part.clone(),
            cuts: vec![Vec::new(); first.per_part.len()],
            u: u0,
            r: 0,
            l: 0,
            null_streak: 0,
            iter: 0,
        };
        s.add_cuts(first);
        s
    }

    /// Model value used for predicted increases: the adjusted per-part center values.
    pub fn model_center(&self) -> f64 {
        self.center_parts.iter().sum()
    }

    /// `m(μ) = Σₖ minᵢ cutₖᵢ(μ)`.
    pub fn model_value(&self, mu: &[f64]) -> f64 {
        self.cuts.iter().map(|cs| cs.iter().map(|c| c.eval(mu)).fold(f64::INFINITY, f64::min)).sum()
    }

    fn add_cuts(&mut self, ev: &DualEvaluation) {
        for (k, (value, g)) in ev.per_part.iter().zip(&ev.part_subgradients).enumerate() {
            let cut = BundleCut { part: k, value: *value, subgradient_mu: g.clone(), anchor_mu: ev.mu.clone(), birth: self.iter };
            let at_center = cut.eval(&self.center_mu);
            if at_center < self.center_parts[k] {
                self.center_parts[k] = at_center;
            }
            self.cuts[k].push(cut);
        }
    }

    /// Drops the oldest cuts that were inactive at `mu` while a part holds `max_cuts` or more.
    fn evict(&mut self, mu: &[f64], max_cuts: usize) {
        for cs in &mut self.cuts {
            if cs.len() < max_cuts {
                continue;
            }
            let vals: Vec<f64> = cs.iter().map(|c| c.eval(mu)).collect();
            let min = vals.iter().copied().fold(f64::INFINITY, f64::min);
            let slack = 1e-9 * (1.0 + min.abs());
            let newest = cs.iter().map(|c| c.birth).max().unwrap_or(0);
            let mut keep = vec![true; cs.len()];
            let mut excess = cs.len() + 1 - max_cuts;
            for i in 0..cs.len() {
                if excess == 0 {
                    break;
                }
                let c = &cs[i];
                if vals[i] > min + slack && c.birth != newest && c.anchor_mu != self.center_mu {
                    keep[i] = false;
                    excess -= 1;
                }
            }
            let mut it = keep.iter();
            cs.retain(|_| *it.next().unwrap());
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MasterSolution {
    pub mu: Vec<f64>,
    /// Exact model value at `mu`.
    pub m: f64,
    pub solve_time: f64,
}

/// Maximizes `m(μ) − u‖μ − μʳ‖²` over the bundle.
pub fn solve_master(state: &BundleState, tol: f64) -> Result<MasterSolution, BundleError> {
    let dim = state.center_mu.len();
    let mut p = ConicProgram::new();
    let d: Vec<usize> = (0..dim).map(|j| p.free_var(format!("d_{j}"))).collect();
    let tau: Vec<usize> = (0..state.cuts.len()).map(|k| p.free_var(format!("tau_{k}"))).collect();
    p.quadratic = d.iter().map(|&v| (v, state.u)).collect();
    p.objective = LinExpr::from_terms(tau.iter().map(|&t| (t, -1.0)));
    for (k, cs) in state.cuts.iter().enumerate() {
        let shift = state.center_parts[k];
        for (i, c) in cs.iter().enumerate() {
            let mut e = LinExpr::var(tau[k]);
            for (j, &g) in c.subgradient_mu.iter().enumerate() {
                e.add(d[j], -g);
            }
            p.add_row(format!("cut_{k}_{i}"), e, Sense::Le, c.eval(&state.center_mu) - shift);
        }
    }
    let sol = solve(&p, &SolveSettings::with_tolerance(tol))?;
    let x = match (sol.status, &sol.primal) {
        (SolveStatus::Optimal | SolveStatus::NumericalLimit, Some(x)) => x,
        (status, _) => return Err(BundleError::MasterFailed(status)),
    };
    let mut mu: Vec<f64> = state.center_mu.iter().zip(&d).map(|(c, &v)| c + x[v]).collect();
    let mut m = state.model_value(&mu);
    let prox = state.u * mu.iter().zip(&state.center_mu).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
    let at_center = state.model_value(&state.center_mu);
    if m - prox < at_center {
        // backend returned a point no better than the center
        mu = state.center_mu.clone();
        m = at_center;
    }
    Ok(MasterSolution { mu, m, solve_time: sol.solve_time })
}

/// `v = m − D̂(μʳ)` before clamping.
pub fn predicted_increase(state: &BundleState, m: f64) -> f64 {
    m - state.model_center()
}

/// Serious iff `trial ≥ center + m_L·v`.
pub fn classify_step(center: f64, trial: f64, v: f64, m_l: f64) -> StepKind {
    if trial >= center + m_l * v {
        StepKind::Serious
    } else {
        StepKind::Null
    }
}

/// Applies the step rule and proximity control; returns the step taken.
/// `trial_value` is the evaluated D̂ at `trial_mu`; `trial_parts` are its per-part values
/// already lowered to the bundle model.
pub fn step_decision(
    state: &mut BundleState,
    trial_mu: &[f64],
    trial_value: f64,
    trial_parts: &[f64],
    v: f64,
    params: &BundleParams,
) -> StepKind {
    let center = state.model_center();
    let trial: f64 = trial_parts.iter().sum();
    let step = classify_step(center, trial, v, params.m_l);
    match step {
        StepKind::Serious => {
            if trial - center >= 0.5 * v {
                state.u = (state.u / 2.0).max(params.u_min);
            }
            state.center_mu = trial_mu.to_vec();
            state.center_value = trial_value;
            state.center_parts = trial_parts.to_vec();
            state.r += 1;
            state.l = 0;
            state.null_streak = 0;
        }
        StepKind::Null => {
            state.u = (state.u * 2.0).min(params.u_max);
            state.l += 1;
            state.null_streak += 1;
        }
    }
    step
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Converged,
    /// No coupling constraints, so the first evaluation is optimal.
    NoCoupling,
    MaxIter,
    SubproblemFailed { message: String },
    MasterFailed { message: String },
}

impl Termination {
    pub fn is_failure(&self) -> bool {
        matches!(self, Termination::SubproblemFailed { .. } | Termination::MasterFailed { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleReport {
    /// D̂(0), or `None` if the first evaluation failed.
    pub initial_value: Option<f64>,
    pub trajectory: Vec<IterationRecord>,
    /// Evaluated D̂ at each accepted center, starting with μ = 0.
    pub center_values: Vec<f64>,
    pub ld_final: Option<f64>,
    pub final_mu: Vec<f64>,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub termination: Termination,
    /// Smallest predicted increase before clamping.
    pub min_v: f64,
    /// Iterations whose predicted increase fell below −1e-6·(1+|D̂|).
    pub consistency_warnings: usize,
    pub master_time: f64,
    pub subproblem_time: f64,
    pub wall_time: f64,
}

/// Runs the proximal bundle method from μ = 0.
pub fn run_bundle(
    models: &[SubModel],
    partition: &Partition,
    params: &BundleParams,
    dual: &DualSettings,
    sink: Option<&dyn IterationSink>,
) -> Result<BundleReport, BundleError> {
    params.validate()?;
    let started = Instant::now();
    let dim = partition.coupling_dimension();
    let mut report = BundleReport {
        initial_value: None,
        trajectory: Vec::new(),
        center_values: Vec::new(),
        ld_final: None,
        final_mu: vec![0.0; dim],
        serious_steps: 0,
        null_steps: 0,
        termination: Termination::Converged,
        min_v: f64::INFINITY,
        consistency_warnings: 0,
        master_time: 0.0,
        subproblem_time: 0.0,
        wall_time: 0.0,
    };
    let finish = |mut report: BundleReport, termination: Termination| {
        report.termination = termination;
        report.ld_final = report.center_values.iter().copied().reduce(f64::max);
        report.wall_time = started.elapsed().as_secs_f64();
        report
    };

    // without coupling the lone subproblem is the whole-network SDP, so it gets the same tolerance
    let first_settings = if dim == 0 {
        let tol = SolveSettings::monolithic();
        let solve = SolveSettings {
            feas_tol: dual.solve.feas_tol.min(tol.feas_tol),
            gap_tol: dual.solve.gap_tol.min(tol.gap_tol),
            ..dual.solve
        };
        DualSettings { solve, ..dual.clone() }
    } else {
        dual.clone()
    };
    let first = match evaluate_dual_function(models, partition, &vec![0.0; dim], &first_settings) {
        Ok(ev) => ev,
        Err(e) => return Ok(finish(report, Termination::SubproblemFailed { message: e.to_string() })),
    };
    report.subproblem_time += first.part_times.iter().sum::<f64>();
    report.initial_value = Some(first.total);
    report.center_values.push(first.total);
    debug!("initial dual value {:.6}", first.total);
    if dim == 0 {
        return Ok(finish(report, Termination::NoCoupling));
    }

    let mut state = BundleState::new(&first, params.u0);
    loop {
        let master = match solve_master(&state, params.master_tol) {
            Ok(m) => m,
            Err(e) => return Ok(finish(report, Termination::MasterFailed { message: e.to_string() })),
        };
        report.master_time += master.solve_time;
        let center = state.model_center();
        let raw_v = predicted_increase(&state, master.m);
        report.min_v = report.min_v.min(raw_v);
        if raw_v < -1e-6 * (1.0 + center.abs()) {
            report.consistency_warnings += 1;
            warn!("negative predicted increase {raw_v:.3e} at iteration {}", state.iter + 1);
        }
        let v = raw_v.max(0.0);
        if v <= params.eps * (1.0 + center.abs()) {
            return Ok(finish(report, Termination::Converged));
        }
        if state.iter >= params.max_iter {
            return Ok(finish(report, Termination::MaxIter));
        }

        let trial = match evaluate_dual_function(models, partition, &master.mu, dual) {
            Ok(ev) => ev,
            Err(e) => return Ok(finish(report, Termination::SubproblemFailed { message: e.to_string() })),
        };
        report.subproblem_time += trial.part_times.iter().sum::<f64>();
        state.iter += 1;

        // keep the trial consistent with the cuts already in the bundle
        let trial_parts: Vec<f64> = trial
            .per_part
            .iter()
            .zip(&state.cuts)
            .map(|(&val, cs)| cs.iter().map(|c| c.eval(&master.mu)).fold(val, f64::min))
            .collect();

        if !params.strict_bundle {
            state.evict(&master.mu, params.max_cuts);
        }
        let u_used = state.u;
        let d_center = state.center_value;
        let (r, l) = (state.r, state.l);
        let step = step_decision(&mut state, &master.mu, trial.total, &trial_parts, v, params);
        match step {
            StepKind::Serious => {
                report.serious_steps += 1;
                report.center_values.push(trial.total);
            }
            StepKind::Null => report.null_steps += 1,
        }
        state.add_cuts(&trial);

        let rec = IterationRecord {
            iter: state.iter,
            r,
            l,
            step,
            d_center,
            d_trial: trial.total,
            m: master.m,
            v,
            u: u_used,
            master_time: master.solve_time,
            part_times: trial.part_times.clone(),
            wall_time: started.elapsed().as_secs_f64(),
        };
        debug!(
            "iter {} {:?} trial {:.6} center {:.6} v {:.3e} u {:.3e}",
            rec.iter, rec.step, rec.d_trial, rec.d_center, rec.v, rec.u
        );
        if let Some(s) = sink {
            s.record(&rec);
        }
        report.trajectory.push(rec);
        report.final_mu = state.center_mu.clone();
    }
}
