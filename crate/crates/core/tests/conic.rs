use netdec::conic::{
    check_solution, solve, to_cbf, ConeKind, ConicProgram, LinExpr, PsdBlock, Sense, SolveSettings, SolveStatus,
};

#[test]
fn lower_bounded_scalar() {
    let mut p = ConicProgram::new();
    let x = p.free_var("x");
    p.objective = LinExpr::var(x);
    p.add_row("x_ge_3", LinExpr::var(x), Sense::Ge, 3.0);
    let s = solve(&p, &SolveSettings::monolithic()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.objective - 3.0).abs() < 1e-6);
    assert!(s.dual_objective.is_some());
}

#[test]
fn unbounded_ray() {
    let mut p = ConicProgram::new();
    let x = p.add_var("x", 0.0, f64::INFINITY);
    p.objective = LinExpr::from_terms([(x, -1.0)]);
    let s = solve(&p, &SolveSettings::monolithic()).unwrap();
    assert_eq!(s.status, SolveStatus::Unbounded);
    assert!(s.primal.is_none());
}

#[test]
fn negative_psd_diagonal_is_infeasible() {
    let mut p = ConicProgram::new();
    let c = p.free_var("c");
    p.objective = LinExpr::var(c);
    p.add_row("force", LinExpr::var(c), Sense::Eq, -1.0);
    let mut m = PsdBlock::zeros("diag", 2);
    *m.entry_mut(0, 0) = LinExpr::constant(1.0);
    *m.entry_mut(1, 1) = LinExpr::var(c);
    p.add_psd(m);
    let s = solve(&p, &SolveSettings::monolithic()).unwrap();
    assert_eq!(s.status, SolveStatus::Infeasible);
}

#[test]
fn quadratic_and_rotated_cone_agree() {
    // min (x-2)^2 two ways: diagonal quadratic, and epigraph t ≥ (x-2)^2
    let mut a = ConicProgram::new();
    let x = a.free_var("x");
    a.quadratic.push((x, 1.0));
    a.objective = LinExpr::from_terms([(x, -4.0)]).plus(4.0);
    let sa = solve(&a, &SolveSettings::monolithic()).unwrap();

    let mut b = ConicProgram::new();
    let x = b.free_var("x");
    let t = b.add_var("t", 0.0, f64::INFINITY);
    b.objective = LinExpr::var(t);
    b.add_soc(
        "epi",
        ConeKind::Rotated,
        vec![LinExpr::var(t), LinExpr::constant(1.0), LinExpr::var(x).plus(-2.0)],
    );
    let sb = solve(&b, &SolveSettings::monolithic()).unwrap();
    assert_eq!(sa.status, SolveStatus::Optimal);
    assert_eq!(sb.status, SolveStatus::Optimal);
    assert!(sa.objective.abs() < 1e-6);
    assert!(sb.objective.abs() < 1e-5);
    assert!((sa.primal.unwrap()[0] - 2.0).abs() < 1e-3);
}

#[test]
fn psd_off_diagonal_scaling() {
    // max x s.t. [[1, x], [x, 1]] ⪰ 0  →  x = 1
    let mut p = ConicProgram::new();
    let x = p.free_var("x");
    p.objective = LinExpr::from_terms([(x, -1.0)]);
    let mut m = PsdBlock::zeros("m", 2);
    *m.entry_mut(0, 0) = LinExpr::constant(1.0);
    *m.entry_mut(1, 0) = LinExpr::var(x);
    *m.entry_mut(1, 1) = LinExpr::constant(1.0);
    p.add_psd(m);
    let s = solve(&p, &SolveSettings::monolithic()).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let xv = s.primal.as_ref().unwrap();
    assert!((xv[0] - 1.0).abs() < 1e-5);
    assert!(check_solution(&p, xv).within(1e-6));
}

fn small_feasible_program() -> ConicProgram {
    let mut p = ConicProgram::new();
    let x = p.add_var("x", 0.0, 5.0);
    let y = p.free_var("y");
    p.add_row("sum", LinExpr::var(x).with(y, 2.0), Sense::Eq, 4.0);
    p.add_soc("cone", ConeKind::Standard, vec![LinExpr::var(x), LinExpr::var(y)]);
    p.objective = LinExpr::var(x);
    p
}

#[test]
fn residuals_at_analytic_point() {
    let p = small_feasible_program();
    let ok = check_solution(&p, &[2.0, 1.0]);
    assert!(ok.within(1e-12));
    let bad = check_solution(&p, &[2.0, 2.0]);
    assert!((bad.linear - 2.0).abs() < 1e-12);
}

#[test]
fn residuals_after_solve_are_scaled_by_data() {
    let p = small_feasible_program();
    let settings = SolveSettings::subproblem();
    let s = solve(&p, &settings).unwrap();
    assert_eq!(s.status, SolveStatus::Optimal);
    let r = check_solution(&p, s.primal.as_ref().unwrap());
    assert!(r.within(settings.feas_tol * (1.0 + p.data_norm())));
}

#[test]
fn repeated_solves_are_identical() {
    let p = small_feasible_program();
    let a = solve(&p, &SolveSettings::subproblem()).unwrap();
    let b = solve(&p, &SolveSettings::subproblem()).unwrap();
    assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    assert_eq!(a.primal, b.primal);
}

#[test]
fn cbf_export_lists_cones() {
    let mut p = small_feasible_program();
    let mut m = PsdBlock::zeros("m", 2);
    *m.entry_mut(0, 0) = LinExpr::var(0);
    *m.entry_mut(1, 1) = LinExpr::constant(1.0);
    p.add_psd(m);
    let text = to_cbf(&p).unwrap();
    assert!(text.contains("VAR\n2 1\nF 2"));
    assert!(text.contains("L= 1"));
    assert!(text.contains("L+ 2"));
    assert!(text.contains("Q 2"));
    assert!(text.contains("PSDCON\n1\n2"));
    p.quadratic.push((0, 1.0));
    assert!(to_cbf(&p).is_err());
}
