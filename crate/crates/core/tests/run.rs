mod common;

use netdec::bundle::BundleParams;
use netdec::conic::SolveStatus;
use netdec::relax::{Bound, BoundKind};
use netdec::run::{
    check_ordering, compute_gap, emit_report, reference_objective, render_report, run, Bounds, Mode, OrderingStatus,
    OutputFormat, PartSpec, RunConfig, RunError, SCHEMA_VERSION,
};

use common::*;

fn bound(kind: BoundKind, value: f64) -> Option<Bound> {
    Some(Bound { value, kind, status: SolveStatus::Optimal, solve_time: 0.0 })
}

#[test]
fn gap_arithmetic() {
    assert_eq!(compute_gap(5.0, 5.0).unwrap(), 0.0);
    assert!((compute_gap(90.0, 100.0).unwrap() - 10.0).abs() < 1e-12);
    assert!((compute_gap(-110.0, -100.0).unwrap() - 10.0).abs() < 1e-12);
    assert!(matches!(compute_gap(1.0, 0.0), Err(RunError::ZeroReference)));
}

#[test]
fn shipped_references() {
    assert_eq!(reference_objective("pglib_opf_case5_pjm"), Some(17552.0));
    assert_eq!(reference_objective("case14_ieee__api"), Some(5999.4));
    assert_eq!(reference_objective("pglib_opf_case30_ieee"), Some(8208.5));
    assert_eq!(reference_objective("two_bus"), None);
}

#[test]
fn ordering_bands() {
    let mk = |soc: f64, ld: f64, sdp: f64| Bounds {
        soc: bound(BoundKind::Soc, soc),
        sdp: bound(BoundKind::Sdp, sdp),
        ld_final: Some(ld),
        ..Bounds::default()
    };
    // tol = 1e-3·1000 = 1
    assert_eq!(check_ordering(&mk(900.0, 950.0, 1000.0)).unwrap().status, OrderingStatus::Ok);
    assert_eq!(check_ordering(&mk(900.0, 1000.9, 1000.0)).unwrap().status, OrderingStatus::Ok);
    assert_eq!(check_ordering(&mk(900.0, 1001.5, 1000.0)).unwrap().status, OrderingStatus::Warning);
    assert_eq!(check_ordering(&mk(900.0, 1002.5, 1000.0)).unwrap().status, OrderingStatus::Violation);
    assert_eq!(check_ordering(&mk(900.0, 898.5, 1000.0)).unwrap().status, OrderingStatus::Warning);
    assert!(check_ordering(&Bounds::default()).is_none());
}

#[test]
fn oracle_ordering_uses_iterates() {
    let b = Bounds { oracle: bound(BoundKind::OracleUb, 100.0), soc: bound(BoundKind::Soc, 99.0), ..Bounds::default() };
    assert_eq!(check_ordering(&b).unwrap().status, OrderingStatus::Ok);
    let b = Bounds { oracle: bound(BoundKind::OracleUb, 100.0), soc: bound(BoundKind::Soc, 101.0), ..Bounds::default() };
    assert_eq!(check_ordering(&b).unwrap().status, OrderingStatus::Violation);
}

fn case5(mode: Mode) -> RunConfig {
    RunConfig::new(data_path("pglib/pglib_opf_case5_pjm.m"), mode)
}

#[test]
fn bound_mode_report() {
    let mut cfg = case5(Mode::Bound);
    cfg.with_baselines = true;
    let r = run(&cfg).unwrap();
    assert_eq!(r.schema_version, SCHEMA_VERSION);
    assert_eq!((r.case.buses, r.case.branches), (5, 6));
    let p = r.partition.as_ref().unwrap();
    assert_eq!(p.parts, 2);
    assert_eq!(p.coupling_dimension, 4 * p.cut_lines);
    let gaps = r.gaps.as_ref().unwrap();
    assert!(gaps.soc.is_some() && gaps.sdp.is_some() && gaps.ld_final.is_some());
    let b = r.bundle.as_ref().unwrap();
    assert_eq!(b.iterations, r.bounds.ld_trajectory.len());
    assert!(r.ordering.is_some());
    assert!(!r.has_ordering_violation());
    // re-rendering is byte-identical
    let a = render_report(&r, OutputFormat::Structured).unwrap();
    assert_eq!(a, render_report(&r, OutputFormat::Structured).unwrap());
    let doc: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(doc["schema_version"], SCHEMA_VERSION);
    assert_eq!(doc["mode"], "bound");
}

#[test]
fn repeated_runs_agree_without_timings() {
    let cfg = case5(Mode::Bound);
    let a = run(&cfg).unwrap().without_timings();
    let b = run(&cfg).unwrap().without_timings();
    assert_eq!(
        render_report(&a, OutputFormat::Structured).unwrap(),
        render_report(&b, OutputFormat::Structured).unwrap()
    );
}

#[test]
fn trajectory_csv_has_one_row_per_trial() {
    let r = run(&case5(Mode::Bound)).unwrap();
    let text = String::from_utf8(render_report(&r, OutputFormat::Csv).unwrap()).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "iter,r,l,step,d_center,d_trial,m,v,u,master_time,part_times,wall_time");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), r.bounds.ld_trajectory.len());
    assert!(rows[0].starts_with("1,0,0,"));
}

#[test]
fn emit_writes_file() {
    let r = run(&case5(Mode::RelaxSoc)).unwrap();
    assert!(r.bounds.sdp.is_none());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("r.json");
    emit_report(&r, OutputFormat::Structured, Some(&path)).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), render_report(&r, OutputFormat::Structured).unwrap());
    let csv = String::from_utf8(render_report(&r, OutputFormat::Csv).unwrap()).unwrap();
    assert!(csv.starts_with("kind,value,status,gap\nSOC,"));
    let missing = dir.path().join("no/such/dir/r.json");
    assert!(matches!(emit_report(&r, OutputFormat::Structured, Some(&missing)), Err(RunError::Io { .. })));
}

#[test]
fn partition_mode_with_file() {
    let dir = tempfile::tempdir().unwrap();
    let doc = dir.path().join("p.txt");
    std::fs::write(&doc, "1 1\n2 1\n3 1\n4 2\n5 2\n").unwrap();
    let mut cfg = case5(Mode::Partition);
    cfg.parts = PartSpec::File(doc);
    let r = run(&cfg).unwrap();
    let p = r.partition.unwrap();
    assert_eq!(p.sizes, vec![3, 2]);
    assert_eq!(p.cut_lines, 3);
    assert!(r.bounds.ld_trajectory.is_empty());
}

#[test]
fn parse_mode_reports_diagnostics_without_failing() {
    let r = run(&RunConfig::new(data_path("malformed/disconnected.m"), Mode::Parse)).unwrap();
    assert_eq!(r.diagnostics.len(), 1);
    let err = run(&RunConfig::new(data_path("malformed/disconnected.m"), Mode::RelaxSoc)).unwrap_err();
    assert!(matches!(err, RunError::InvalidCase(_)));
}

#[test]
fn oracle_mode_checks_baselines() {
    let mut cfg = RunConfig::new(data_path("cases/two_bus.m"), Mode::Oracle);
    cfg.with_baselines = true;
    cfg.ref_objective = Some(1000.0);
    let r = run(&cfg).unwrap();
    assert!(r.bounds.oracle.is_some() && r.bounds.soc.is_some() && r.bounds.sdp.is_some());
    assert_eq!(r.ordering.unwrap().status, OrderingStatus::Ok);
    assert!(r.gaps.unwrap().oracle.is_some());
}

#[test]
fn errors_carry_context() {
    let err = run(&RunConfig::new(data_path("malformed/bad_number.m"), Mode::Parse)).unwrap_err();
    assert!(err.to_string().contains("bad_number.m"), "{err}");
    assert!(matches!(run(&RunConfig::new("/no/such/case.m", Mode::Parse)), Err(RunError::Io { .. })));
    let mut cfg = case5(Mode::Bound);
    cfg.bundle = BundleParams { eps: 0.0, ..BundleParams::default() };
    assert!(run(&cfg).is_err());
    let mut cfg = case5(Mode::Bound);
    cfg.ref_objective = Some(0.0);
    assert!(matches!(run(&cfg), Err(RunError::ZeroReference)));
}
