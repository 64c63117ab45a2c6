//! End-to-end pipelines: parse, partition, build, bound, report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bundle::{run_bundle, BundleError, BundleParams, IterationRecord, IterationSink, Termination};
use crate::case::{parse_matpower, validate_case, Diagnostic, NetworkCase, ParseError};
use crate::model::{build_submodel, ModelError};
use crate::partition::{load_partition, partition_greedy, partition_stats, Partition, PartitionError, PartitionFlags};
use crate::relax::{brute_force_acopf, sdp_relaxation_bound, soc_relaxation_bound, Bound, DualSettings, RelaxError};

pub const SCHEMA_VERSION: u32 = 1;

const REFERENCE_OBJECTIVES: &str = include_str!("../data/reference_objectives.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    RelaxSoc,
    RelaxSdp,
    Bound,
    Oracle,
    Partition,
    Parse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OutputFormat {
    #[default]
    Structured,
    Csv,
}

#[derive(Debug, Clone, PartialEq)]
pub enum PartSpec {
    Parts(usize),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub case_path: PathBuf,
    pub mode: Mode,
    pub parts: PartSpec,
    pub seed: u64,
    pub bundle: BundleParams,
    pub threads: usize,
    /// Overrides the shipped reference objective.
    pub ref_objective: Option<f64>,
    pub with_baselines: bool,
    /// Oracle grid step.
    pub resolution: f64,
    pub out: Option<PathBuf>,
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn new(case_path: impl Into<PathBuf>, mode: Mode) -> Self {
        RunConfig {
            case_path: case_path.into(),
            mode,
            parts: PartSpec::Parts(2),
            seed: 0,
            bundle: BundleParams::default(),
            threads: 1,
            ref_objective: None,
            with_baselines: false,
            resolution: 1e-3,
            out: None,
            format: OutputFormat::Structured,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        self.bundle.validate()?;
        if self.threads == 0 {
            return Err(RunError::Config("threads must be at least 1".into()));
        }
        if !(self.resolution > 0.0 && self.resolution.is_finite()) {
            return Err(RunError::Config(format!("resolution must be positive, got {}", self.resolution)));
        }
        if let PartSpec::Parts(0) = self.parts {
            return Err(RunError::Config("parts must be at least 1".into()));
        }
        if let Some(r) = self.ref_objective {
            if !r.is_finite() {
                return Err(RunError::Config(format!("reference objective must be finite, got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Parse { path: PathBuf, source: ParseError },
    #[error("case fails validation: {0:?}")]
    InvalidCase(Vec<Diagnostic>),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Relax(#[from] RelaxError),
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error("reference objective is zero; gaps are undefined")]
    ZeroReference,
    #[error("report serialization failed: {0}")]
    Serialize(String),
}

/// Gap in percent, `100·(ref − bound)/|ref|`.
pub fn compute_gap(bound: f64, reference: f64) -> Result<f64, RunError> {
    if reference == 0.0 {
        return Err(RunError::ZeroReference);
    }
    Ok(100.0 * (reference - bound) / reference.abs())
}

#[derive(Deserialize)]
struct ReferenceFile {
    objectives: BTreeMap<String, f64>,
}

/// Shipped AC objective for a PGLib case name, with or without the `pglib_opf_` prefix.
pub fn reference_objective(case_name: &str) -> Option<f64> {
    let file: ReferenceFile = serde_json::from_str(REFERENCE_OBJECTIVES).expect("embedded reference file is valid");
    let key = case_name.strip_prefix("pglib_opf_").unwrap_or(case_name);
    file.objectives.get(key).copied()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceSource {
    Flag,
    PglibMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Reference {
    pub value: f64,
    pub source: ReferenceSource,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseInfo {
    pub name: String,
    pub buses: usize,
    pub branches: usize,
    pub generators: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionInfo {
    pub parts: usize,
    pub sizes: Vec<usize>,
    pub cut_lines: usize,
    pub coupling_dimension: usize,
    pub flags: PartitionFlags,
    /// Bus id → part (1-based).
    pub assignment: BTreeMap<usize, usize>,
}

impl PartitionInfo {
    fn of(p: &Partition) -> Self {
        let stats = partition_stats(p);
        PartitionInfo {
            parts: p.num_parts(),
            sizes: stats.sizes,
            cut_lines: stats.cut_count,
            coupling_dimension: stats.coupling_dimension,
            flags: p.flags.clone(),
            assignment: p.assignment().iter().map(|(&b, &k)| (b, k + 1)).collect(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Bounds {
    pub soc: Option<Bound>,
    pub sdp: Option<Bound>,
    /// D̂ at μ = 0.
    pub ld_initial: Option<f64>,
    pub ld_final: Option<f64>,
    pub ld_trajectory: Vec<IterationRecord>,
    pub oracle: Option<Bound>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Gaps {
    pub soc: Option<f64>,
    pub sdp: Option<f64>,
    pub ld_initial: Option<f64>,
    pub ld_final: Option<f64>,
    pub oracle: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BundleSummary {
    pub termination: Termination,
    pub iterations: usize,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub min_v: f64,
    pub consistency_warnings: usize,
    pub final_mu: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OrderingStatus {
    Ok,
    Warning,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub tol: f64,
    pub status: OrderingStatus,
    pub messages: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Timings {
    pub soc: f64,
    pub sdp: f64,
    pub oracle: f64,
    /// Summed solve time per part over all dual evaluations.
    pub per_part: Vec<f64>,
    pub subproblem_total: f64,
    pub master_total: f64,
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub case: CaseInfo,
    pub partition: Option<PartitionInfo>,
    pub reference: Option<Reference>,
    pub bounds: Bounds,
    pub gaps: Option<Gaps>,
    pub bundle: Option<BundleSummary>,
    pub ordering: Option<OrderingCheck>,
    pub diagnostics: Vec<Diagnostic>,
    pub timings: Timings,
}

impl BoundReport {
    /// Copy with every wall-clock field zeroed, for run-to-run comparison.
    pub fn without_timings(&self) -> BoundReport {
        let mut r = self.clone();
        r.timings = Timings::default();
        for b in [&mut r.bounds.soc, &mut r.bounds.sdp, &mut r.bounds.oracle].into_iter().flatten() {
            b.solve_time = 0.0;
        }
        for it in &mut r.bounds.ld_trajectory {
            it.master_time = 0.0;
            it.wall_time = 0.0;
            it.part_times.iter_mut().for_each(|t| *t = 0.0);
        }
        r
    }

    /// True when some bound ordering is broken beyond the warning band.
    pub fn has_ordering_violation(&self) -> bool {
        self.ordering.as_ref().is_some_and(|o| o.status == OrderingStatus::Violation)
    }
}

/// `z_soc − tol ≤ ld_final ≤ z_sdp + tol` and `z_soc ≤ z_sdp + tol`, with a warning band up to 2·tol.
/// In oracle runs every bound must also stay below the oracle value.
pub fn check_ordering(bounds: &Bounds) -> Option<OrderingCheck> {
    let soc = bounds.soc.map(|b| b.value).filter(|v| v.is_finite());
    let sdp = bounds.sdp.map(|b| b.value).filter(|v| v.is_finite());
    let ld = bounds.ld_final;
    let oracle = bounds.oracle.map(|b| b.value).filter(|v| v.is_finite());
    let scale = sdp.or(oracle).or(ld).or(soc)?;
    let tol = 1e-3 * scale.abs().max(1.0);

    // (lower, upper, label): lower ≤ upper is expected
    let mut pairs: Vec<(f64, f64, String)> = Vec::new();
    if let (Some(s), Some(l)) = (soc, ld) {
        pairs.push((s, l, "z_soc <= ld_final".into()));
    }
    if let (Some(l), Some(d)) = (ld, sdp) {
        pairs.push((l, d, "ld_final <= z_sdp".into()));
    }
    if let (Some(s), Some(d)) = (soc, sdp) {
        pairs.push((s, d, "z_soc <= z_sdp".into()));
    }
    if let Some(o) = oracle {
        for (name, v) in [("z_soc", soc), ("z_sdp", sdp), ("ld_final", ld)] {
            if let Some(v) = v {
                pairs.push((v, o, format!("{name} <= oracle")));
            }
        }
        for it in &bounds.ld_trajectory {
            pairs.push((it.d_trial, o, format!("ld iterate {} <= oracle", it.iter)));
        }
    }
    if pairs.is_empty() {
        return None;
    }
    let mut status = OrderingStatus::Ok;
    let mut messages = Vec::new();
    for (lo, hi, label) in pairs {
        let excess = lo - hi;
        if excess > 2.0 * tol {
            status = OrderingStatus::Violation;
            messages.push(format!("violation: {label} fails by {excess:.6e}"));
        } else if excess > tol {
            if status == OrderingStatus::Ok {
                status = OrderingStatus::Warning;
            }
            messages.push(format!("warning: {label} fails by {excess:.6e}"));
        }
    }
    Some(OrderingCheck { tol, status, messages })
}

fn read_case(path: &Path) -> Result<NetworkCase, RunError> {
    let text = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.into(), source })?;
    parse_matpower(&text).map_err(|source| RunError::Parse { path: path.into(), source })
}

fn resolve_partition(config: &RunConfig, case: &NetworkCase) -> Result<Partition, RunError> {
    match &config.parts {
        PartSpec::Parts(k) => Ok(partition_greedy(case, *k, config.seed)?),
        PartSpec::File(path) => {
            let doc = std::fs::read_to_string(path).map_err(|source| RunError::Io { path: path.clone(), source })?;
            Ok(load_partition(&doc, case)?)
        }
    }
}

struct LogSink;

impl IterationSink for LogSink {
    fn record(&self, it: &IterationRecord) {
        info!(
            "iter {} {:?} center {:.6} trial {:.6} v {:.3e} u {:.3e}",
            it.iter, it.step, it.d_center, it.d_trial, it.v, it.u
        );
    }
}

/// Executes the configured mode. Module errors abort; subproblem or master failures inside the
/// bundle loop end the run with a partial report whose termination says why.
pub fn run(config: &RunConfig) -> Result<BoundReport, RunError> {
    config.validate()?;
    let started = Instant::now();
    let case = read_case(&config.case_path)?;
    let diagnostics = validate_case(&case);
    let case_info = CaseInfo {
        name: case.name.clone(),
        buses: case.active_bus_ids().len(),
        branches: case.active_branches().len(),
        generators: case.active_generators().len(),
    };
    let mut report = BoundReport {
        schema_version: SCHEMA_VERSION,
        mode: config.mode,
        case: case_info,
        partition: None,
        reference: None,
        bounds: Bounds::default(),
        gaps: None,
        bundle: None,
        ordering: None,
        diagnostics: diagnostics.clone(),
        timings: Timings::default(),
    };
    if config.mode == Mode::Parse {
        report.timings.total = started.elapsed().as_secs_f64();
        return Ok(report);
    }
    if !diagnostics.is_empty() {
        return Err(RunError::InvalidCase(diagnostics));
    }

    report.reference = match config.ref_objective {
        Some(value) => Some(Reference { value, source: ReferenceSource::Flag }),
        None => reference_objective(&case.name).map(|value| Reference { value, source: ReferenceSource::PglibMetadata }),
    };

    let baselines = config.with_baselines || matches!(config.mode, Mode::RelaxSoc | Mode::RelaxSdp);
    if matches!(config.mode, Mode::RelaxSoc) || (baselines && config.mode != Mode::RelaxSdp) {
        let b = soc_relaxation_bound(&case)?;
        report.timings.soc = b.solve_time;
        report.bounds.soc = Some(b);
    }
    if matches!(config.mode, Mode::RelaxSdp) || (baselines && config.mode != Mode::RelaxSoc) {
        let b = sdp_relaxation_bound(&case)?;
        report.timings.sdp = b.solve_time;
        report.bounds.sdp = Some(b);
    }

    match config.mode {
        Mode::Partition => {
            let p = resolve_partition(config, &case)?;
            report.partition = Some(PartitionInfo::of(&p));
        }
        Mode::Bound => {
            let p = resolve_partition(config, &case)?;
            report.partition = Some(PartitionInfo::of(&p));
            if !p.flags.disconnected_parts.is_empty() || p.flags.imbalanced {
                warn!("partition flags: {:?}", p.flags);
            }
            let models = (0..p.num_parts()).map(|k| build_submodel(&case, &p, k)).collect::<Result<Vec<_>, _>>()?;
            let dual = DualSettings { threads: config.threads, ..DualSettings::default() };
            let rep = run_bundle(&models, &p, &config.bundle, &dual, Some(&LogSink))?;
            if rep.termination.is_failure() {
                warn!("bundle stopped early: {:?}", rep.termination);
            }
            let mut per_part = vec![0.0; p.num_parts()];
            for it in &rep.trajectory {
                for (acc, t) in per_part.iter_mut().zip(&it.part_times) {
                    *acc += t;
                }
            }
            report.timings.per_part = per_part;
            report.timings.subproblem_total = rep.subproblem_time;
            report.timings.master_total = rep.master_time;
            report.bounds.ld_initial = rep.initial_value;
            report.bounds.ld_final = rep.ld_final;
            report.bundle = Some(BundleSummary {
                termination: rep.termination.clone(),
                iterations: rep.trajectory.len(),
                serious_steps: rep.serious_steps,
                null_steps: rep.null_steps,
                min_v: rep.min_v,
                consistency_warnings: rep.consistency_warnings,
                final_mu: rep.final_mu.clone(),
            });
            report.bounds.ld_trajectory = rep.trajectory;
        }
        Mode::Oracle => {
            let b = brute_force_acopf(&case, config.resolution)?;
            report.timings.oracle = b.solve_time;
            report.bounds.oracle = Some(b);
        }
        Mode::RelaxSoc | Mode::RelaxSdp | Mode::Parse => {}
    }

    if let Some(r) = report.reference {
        let gap = |v: Option<f64>| v.filter(|x| x.is_finite()).map(|x| compute_gap(x, r.value)).transpose();
        report.gaps = Some(Gaps {
            soc: gap(report.bounds.soc.map(|b| b.value))?,
            sdp: gap(report.bounds.sdp.map(|b| b.value))?,
            ld_initial: gap(report.bounds.ld_initial)?,
            ld_final: gap(report.bounds.ld_final)?,
            oracle: gap(report.bounds.oracle.map(|b| b.value))?,
        });
        for it in &report.bounds.ld_trajectory {
            if it.d_trial > r.value + 1e-6 * r.value.abs() {
                warn!("iterate {} value {:.6} exceeds the reference {}", it.iter, it.d_trial, r.value);
            }
        }
    }
    report.ordering = check_ordering(&report.bounds);
    if let Some(o) = &report.ordering {
        for m in &o.messages {
            warn!("{m}");
        }
    }
    report.timings.total = started.elapsed().as_secs_f64();
    Ok(report)
}

const TRAJECTORY_COLUMNS: [&str; 12] =
    ["iter", "r", "l", "step", "d_center", "d_trial", "m", "v", "u", "master_time", "part_times", "wall_time"];

/// Serializes the report: pretty JSON, or for CSV the trajectory (bound mode), the assignment
/// (partition mode) or one row per bound (other modes).
pub fn render_report(report: &BoundReport, format: OutputFormat) -> Result<Vec<u8>, RunError> {
    let ser = |e: &dyn std::fmt::Display| RunError::Serialize(e.to_string());
    match format {
        OutputFormat::Structured => {
            let mut out = serde_json::to_vec_pretty(report).map_err(|e| ser(&e))?;
            out.push(b'\n');
            Ok(out)
        }
        OutputFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            match (report.mode, &report.partition) {
                (Mode::Bound, _) => {
                    w.write_record(TRAJECTORY_COLUMNS).map_err(|e| ser(&e))?;
                    for it in &report.bounds.ld_trajectory {
                        let times: Vec<String> = it.part_times.iter().map(|t| t.to_string()).collect();
                        let step = match it.step {
                            crate::bundle::StepKind::Serious => "serious",
                            crate::bundle::StepKind::Null => "null",
                        };
                        w.write_record([
                            it.iter.to_string(),
                            it.r.to_string(),
                            it.l.to_string(),
                            step.to_string(),
                            it.d_center.to_string(),
                            it.d_trial.to_string(),
                            it.m.to_string(),
                            it.v.to_string(),
                            it.u.to_string(),
                            it.master_time.to_string(),
                            times.join(";"),
                            it.wall_time.to_string(),
                        ])
                        .map_err(|e| ser(&e))?;
                    }
                }
                (Mode::Partition, Some(p)) => {
                    w.write_record(["bus", "part"]).map_err(|e| ser(&e))?;
                    for (b, k) in &p.assignment {
                        w.write_record([b.to_string(), k.to_string()]).map_err(|e| ser(&e))?;
                    }
                }
                _ => {
                    w.write_record(["kind", "value", "status", "gap"]).map_err(|e| ser(&e))?;
                    let gaps = report.gaps.clone().unwrap_or_default();
                    let rows = [(report.bounds.soc, gaps.soc), (report.bounds.sdp, gaps.sdp), (report.bounds.oracle, gaps.oracle)];
                    for (b, g) in rows {
                        if let Some(b) = b {
                            let kind = serde_json::to_value(b.kind).map_err(|e| ser(&e))?;
                            let status = serde_json::to_value(b.status).map_err(|e| ser(&e))?;
                            w.write_record([
                                kind.as_str().unwrap_or_default().to_string(),
                                b.value.to_string(),
                                status.as_str().unwrap_or_default().to_string(),
                                g.map(|g| g.to_string()).unwrap_or_default(),
                            ])
                            .map_err(|e| ser(&e))?;
                        }
                    }
                }
            }
            w.into_inner().map_err(|e| ser(&e))
        }
    }
}

/// Writes the rendered report to `path`, or stdout when `None`.
pub fn emit_report(report: &BoundReport, format: OutputFormat, path: Option<&Path>) -> Result<(), RunError> {
    let bytes = render_report(report, format)?;
    match path {
        Some(p) => std::fs::write(p, &bytes).map_err(|source| RunError::Io { path: p.into(), source }),
        None => std::io::stdout()
            .lock()
            .write_all(&bytes)
            .map_err(|source| RunError::Io { path: PathBuf::from("<stdout>"), source }),
    }
}
