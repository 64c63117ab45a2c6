//! Monolithic SOC/SDP bounds, Lagrangian subproblems and a grid-search AC oracle.

use std::collections::{BTreeMap, VecDeque};
use std::time::Instant;

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::bundle::project_multipliers;
use crate::case::{admittance_parameters, NetworkCase};
use crate::conic::{solve, ConicProgram, SolveError, SolveSettings, SolveStatus};
use crate::model::{build_fullmodel, sdp_program, soc_program, ModelError, SubModel};
use crate::partition::Partition;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoundKind {
    Soc,
    Sdp,
    LdIter,
    LdFinal,
    OracleUb,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub kind: BoundKind,
    pub status: SolveStatus,
    pub solve_time: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RelaxError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("expected {expected} multipliers, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("subproblem {} ended with status {status:?}", part + 1)]
    SubproblemFailed { part: usize, status: SolveStatus },
    #[error("brute-force oracle supports at most 3 buses, case has {0}")]
    TooLarge(usize),
}

fn relaxation_bound(program: &ConicProgram, kind: BoundKind, settings: &SolveSettings) -> Result<Bound, RelaxError> {
    let sol = solve(program, settings)?;
    let value = if sol.has_primal() { sol.objective } else { f64::NAN };
    Ok(Bound { value, kind, status: sol.status, solve_time: sol.solve_time })
}

pub fn soc_relaxation_bound(case: &NetworkCase) -> Result<Bound, RelaxError> {
    soc_relaxation_bound_with(case, &SolveSettings::monolithic())
}

pub fn soc_relaxation_bound_with(case: &NetworkCase, settings: &SolveSettings) -> Result<Bound, RelaxError> {
    let m = build_fullmodel(case)?;
    relaxation_bound(&soc_program(&m), BoundKind::Soc, settings)
}

pub fn sdp_relaxation_bound(case: &NetworkCase) -> Result<Bound, RelaxError> {
    sdp_relaxation_bound_with(case, &SolveSettings::monolithic())
}

pub fn sdp_relaxation_bound_with(case: &NetworkCase, settings: &SolveSettings) -> Result<Bound, RelaxError> {
    let m = build_fullmodel(case)?;
    relaxation_bound(&sdp_program(&m), BoundKind::Sdp, settings)
}

/// SDP-relaxed subproblem with objective `fₖ − λₖᵀyₖ`; `lambda_k` follows `model.coupling_slots`.
pub fn build_dual_subproblem(model: &SubModel, lambda_k: &[f64]) -> Result<ConicProgram, RelaxError> {
    if lambda_k.len() != model.coupling_slots.len() {
        return Err(RelaxError::DimensionMismatch { expected: model.coupling_slots.len(), found: lambda_k.len() });
    }
    let mut p = sdp_program(model);
    for (slot, &l) in model.coupling_slots.iter().zip(lambda_k) {
        p.objective.add(slot.var, -l);
    }
    Ok(p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualSettings {
    pub solve: SolveSettings,
    pub threads: usize,
}

impl Default for DualSettings {
    fn default() -> Self {
        DualSettings { solve: SolveSettings::subproblem(), threads: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DualEvaluation {
    pub mu: Vec<f64>,
    /// Σₖ D̂ₖ(λₖ(μ)) from the primal objectives.
    pub total: f64,
    pub per_part: Vec<f64>,
    /// Supergradient of D̂ at `mu`.
    pub subgradient: Vec<f64>,
    /// Optimal coupling flows per part, ordered as the part's coupling slots.
    pub flows: Vec<Vec<f64>>,
    /// Per-part supergradient contributions in μ coordinates.
    pub part_subgradients: Vec<Vec<f64>>,
    /// Sum of backend-certified dual objectives, when every part certifies one.
    pub certified_total: Option<f64>,
    pub statuses: Vec<SolveStatus>,
    pub part_times: Vec<f64>,
    pub wall_time: f64,
}

struct PartResult {
    value: f64,
    dual: Option<f64>,
    flows: Vec<f64>,
    status: SolveStatus,
    time: f64,
}

fn solve_part(model: &SubModel, lambda: &[f64], settings: &SolveSettings) -> Result<PartResult, RelaxError> {
    let program = build_dual_subproblem(model, lambda)?;
    let started = Instant::now();
    let sol = solve(&program, settings)?;
    let time = started.elapsed().as_secs_f64();
    let usable = match sol.status {
        SolveStatus::Optimal => true,
        SolveStatus::NumericalLimit => sol.dual_objective.is_some(),
        _ => false,
    };
    if !usable {
        return Err(RelaxError::SubproblemFailed { part: model.part, status: sol.status });
    }
    let x = sol.primal.as_ref().expect("primal present for usable statuses");
    let flows = model.coupling_slots.iter().map(|s| x[s.var]).collect();
    Ok(PartResult { value: sol.objective, dual: sol.dual_objective, flows, status: sol.status, time })
}

/// Evaluates D̂ at `mu`. Part `k` is solved by worker `k mod threads`; results are
/// assembled in part order, so the output does not depend on the thread count.
pub fn evaluate_dual_function(
    models: &[SubModel],
    partition: &Partition,
    mu: &[f64],
    settings: &DualSettings,
) -> Result<DualEvaluation, RelaxError> {
    let dim = partition.coupling_dimension();
    let lambdas = project_multipliers(mu, partition)?;
    let started = Instant::now();
    let threads = settings.threads.max(1).min(models.len().max(1));

    let mut results: Vec<Option<Result<PartResult, RelaxError>>> = (0..models.len()).map(|_| None).collect();
    if threads == 1 {
        for (k, m) in models.iter().enumerate() {
            results[k] = Some(solve_part(m, &lambdas[k], &settings.solve));
        }
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..threads)
                .map(|w| {
                    let lambdas = &lambdas;
                    scope.spawn(move || {
                        (w..models.len())
                            .step_by(threads)
                            .map(|k| (k, solve_part(&models[k], &lambdas[k], &settings.solve)))
                            .collect::<Vec<_>>()
                    })
                })
                .collect();
            for h in handles {
                for (k, r) in h.join().expect("subproblem worker panicked") {
                    results[k] = Some(r);
                }
            }
        });
    }

    let mut per_part = Vec::with_capacity(models.len());
    let mut flows = Vec::with_capacity(models.len());
    let mut part_subgradients = Vec::with_capacity(models.len());
    let mut statuses = Vec::with_capacity(models.len());
    let mut part_times = Vec::with_capacity(models.len());
    let mut certified = Some(0.0);
    let mut subgradient = vec![0.0; dim];
    for (k, r) in results.into_iter().enumerate() {
        let r = r.expect("every part evaluated")?;
        let mut g = vec![0.0; dim];
        for (slot, &y) in models[k].coupling_slots.iter().zip(&r.flows) {
            g[4 * slot.cut + slot.component] -= slot.sign * y;
        }
        for (acc, gi) in subgradient.iter_mut().zip(&g) {
            *acc += gi;
        }
        per_part.push(r.value);
        certified = certified.zip(r.dual).map(|(a, b)| a + b);
        flows.push(r.flows);
        part_subgradients.push(g);
        statuses.push(r.status);
        part_times.push(r.time);
    }
    Ok(DualEvaluation {
        mu: mu.to_vec(),
        total: per_part.iter().sum(),
        per_part,
        subgradient,
        flows,
        part_subgradients,
        certified_total: certified,
        statuses,
        part_times,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

/// Grid points from `lo` to `hi` with step `res`, always including both ends and 0 when inside.
fn grid(lo: f64, hi: f64, res: f64) -> Vec<f64> {
    if hi - lo <= res * 1e-9 {
        return vec![0.5 * (lo + hi)];
    }
    let anchor = if lo < 0.0 && hi > 0.0 { 0.0 } else { lo };
    let margin = res * 1e-6;
    let up = ((hi - anchor) / res).ceil() as i64;
    let down = ((anchor - lo) / res).ceil() as i64;
    let mut pts = vec![lo, hi];
    pts.extend((-down..=up).map(|i| anchor + i as f64 * res).filter(|&x| x > lo + margin && x < hi - margin));
    pts.sort_by(f64::total_cmp);
    pts
}

/// Cheapest split of `total` among generators `(pmin, pmax, cost)` by bisection on the marginal cost.
fn economic_dispatch(gens: &[(f64, f64, crate::case::CostPoly)], total: f64) -> f64 {
    if gens.len() == 1 {
        return gens[0].2.eval(total.clamp(gens[0].0, gens[0].1));
    }
    let output = |lambda: f64| -> Vec<f64> {
        gens.iter()
            .map(|&(lo, hi, c)| ((lambda - c.c1) / (2.0 * c.c2.max(1e-9))).clamp(lo, hi))
            .collect()
    };
    let (mut a, mut b) = (-1e12, 1e12);
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if output(mid).iter().sum::<f64>() < total {
            a = mid;
        } else {
            b = mid;
        }
    }
    let p = output(b);
    gens.iter().zip(&p).map(|(g, &x)| g.2.eval(x)).sum()
}

/// Exhaustive search over voltage magnitudes and spanning-tree angle differences.
///
/// The reference bus angle is fixed at 0. Grid points lie inside their bounds and the
/// dispatch follows from the balance, so every remaining limit is checked exactly; any
/// slack there would let the search return a cost below the true optimum.
/// Each bus's generators cover its net injection at least cost.
pub fn brute_force_acopf(case: &NetworkCase, resolution: f64) -> Result<Bound, RelaxError> {
    let started = Instant::now();
    let buses = case.active_bus_ids();
    if buses.len() > 3 {
        return Err(RelaxError::TooLarge(buses.len()));
    }
    // rounding only: reconstructed angle differences can land an ulp past a grid end
    let tol = 1e-12;
    let branches = case.active_branches();
    let adm: Vec<_> = branches
        .iter()
        .map(|&l| admittance_parameters(&case.branches[l]))
        .collect::<Result<_, _>>()
        .map_err(ModelError::from)?;
    let pos: BTreeMap<usize, usize> = buses.iter().enumerate().map(|(i, &b)| (b, i)).collect();

    let reference = buses
        .iter()
        .copied()
        .find(|&b| case.bus(b).unwrap().bus_type == crate::case::BusType::Ref)
        .unwrap_or(buses[0]);

    // spanning tree: (child position, parent position, angle-difference range of child − parent)
    let mut tree: Vec<(usize, usize, f64, f64)> = Vec::new();
    let mut seen = vec![false; buses.len()];
    seen[pos[&reference]] = true;
    let mut queue = VecDeque::from([reference]);
    while let Some(b) = queue.pop_front() {
        for &l in &branches {
            let br = &case.branches[l];
            let (other, range) = if br.from_bus == b {
                (br.to_bus, (-br.angmax, -br.angmin))
            } else if br.to_bus == b {
                (br.from_bus, (br.angmin, br.angmax))
            } else {
                continue;
            };
            if !seen[pos[&other]] {
                seen[pos[&other]] = true;
                tree.push((pos[&other], pos[&b], range.0, range.1));
                queue.push_back(other);
            }
        }
    }

    let vgrids: Vec<Vec<f64>> = buses
        .iter()
        .map(|&b| {
            let bus = case.bus(b).unwrap();
            grid(bus.vmin, bus.vmax, resolution)
        })
        .collect();
    let agrids: Vec<Vec<f64>> = tree.iter().map(|&(_, _, lo, hi)| grid(lo, hi, resolution)).collect();
    let dims: Vec<usize> = vgrids.iter().chain(&agrids).map(Vec::len).collect();

    let mut gens_at: Vec<Vec<(f64, f64, crate::case::CostPoly)>> = vec![Vec::new(); buses.len()];
    let mut qrange = vec![(0.0, 0.0); buses.len()];
    for g in case.active_generators() {
        let gen = &case.generators[g];
        let i = pos[&gen.bus];
        gens_at[i].push((gen.pmin, gen.pmax, gen.cost));
        qrange[i].0 += gen.qmin;
        qrange[i].1 += gen.qmax;
    }
    let prange: Vec<(f64, f64)> =
        gens_at.iter().map(|g| g.iter().fold((0.0, 0.0), |acc, x| (acc.0 + x.0, acc.1 + x.1))).collect();

    let mut best = f64::INFINITY;
    let mut idx = vec![0usize; dims.len()];
    let nb = buses.len();
    let mut v = vec![Complex64::new(0.0, 0.0); nb];
    let mut theta = vec![0.0; nb];
    'outer: loop {
        for (t, &(child, parent, _, _)) in tree.iter().enumerate() {
            theta[child] = theta[parent] + agrids[t][idx[nb + t]];
        }
        for i in 0..nb {
            v[i] = Complex64::from_polar(vgrids[i][idx[i]], theta[i]);
        }
        let mut inj: Vec<Complex64> = buses
            .iter()
            .enumerate()
            .map(|(i, &b)| {
                let bus = case.bus(b).unwrap();
                let m2 = v[i].norm_sqr();
                Complex64::new(bus.pd + bus.gs * m2, bus.qd - bus.bs * m2)
            })
            .collect();
        let mut feasible = true;
        for (n, &l) in branches.iter().enumerate() {
            let br = &case.branches[l];
            let (f, t) = (pos[&br.from_bus], pos[&br.to_bus]);
            let y = &adm[n];
            let sf = v[f] * (y.y_ff * v[f] + y.y_ft * v[t]).conj();
            let st = v[t] * (y.y_tf * v[f] + y.y_tt * v[t]).conj();
            let d = theta[f] - theta[t];
            if d < br.angmin - tol || d > br.angmax + tol {
                feasible = false;
                break;
            }
            if br.s_max > 0.0 && (sf.norm() > br.s_max + tol || st.norm() > br.s_max + tol) {
                feasible = false;
                break;
            }
            inj[f] += sf;
            inj[t] += st;
        }
        if feasible {
            let mut cost = 0.0;
            for i in 0..nb {
                let (p, q) = (inj[i].re, inj[i].im);
                if p < prange[i].0 - tol || p > prange[i].1 + tol || q < qrange[i].0 - tol || q > qrange[i].1 + tol {
                    feasible = false;
                    break;
                }
                if !gens_at[i].is_empty() {
                    cost += economic_dispatch(&gens_at[i], p);
                }
            }
            if feasible && cost < best {
                best = cost;
            }
        }
        for d in 0..dims.len() {
            idx[d] += 1;
            if idx[d] < dims[d] {
                continue 'outer;
            }
            idx[d] = 0;
        }
        break;
    }
    let status = if best.is_finite() { SolveStatus::Optimal } else { SolveStatus::Infeasible };
    Ok(Bound { value: best, kind: BoundKind::OracleUb, status, solve_time: started.elapsed().as_secs_f64() })
}
