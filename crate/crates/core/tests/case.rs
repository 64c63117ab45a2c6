mod common;

use netdec::case::{parse_matpower, validate_case, DiagnosticCode, NetworkCase, ParseError, SemanticError};
use proptest::prelude::*;

use common::*;

fn parse_file(rel: &str) -> Result<NetworkCase, ParseError> {
    parse_matpower(&std::fs::read_to_string(data_path(rel)).unwrap())
}

#[test]
fn gating_cases_match_published_sizes() {
    for (name, buses, branches) in [("case5_pjm", 5, 6), ("case14_ieee__api", 14, 20), ("case30_ieee", 30, 41)] {
        let c = pglib(name);
        assert_eq!(c.buses.len(), buses, "{name}");
        assert_eq!(c.branches.len(), branches, "{name}");
        assert!(validate_case(&c).is_empty(), "{name}");
    }
}

#[test]
fn every_shipped_case_parses_and_validates() {
    for entry in std::fs::read_dir(data_path("pglib")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "m") {
            let c = parse_matpower(&std::fs::read_to_string(&path).unwrap()).unwrap();
            assert!(validate_case(&c).is_empty(), "{}", path.display());
        }
    }
}

#[test]
fn malformed_corpus_syntax_errors() {
    for (file, line) in [("bad_number", 20), ("ragged_rows", 9), ("unterminated", 23)] {
        match parse_file(&format!("malformed/{file}.m")) {
            Err(ParseError::Syntax { line: l, .. }) => assert_eq!(l, line, "{file}"),
            other => panic!("{file}: {other:?}"),
        }
    }
}

#[test]
fn malformed_corpus_semantic_errors() {
    use SemanticError::*;
    let cases: Vec<(&str, fn(&SemanticError) -> bool)> = vec![
        ("bus_only", |e| matches!(e, MissingSection(_))),
        ("missing_gencost", |e| matches!(e, MissingSection("gencost"))),
        ("dangling_gen", |e| matches!(e, DanglingBusRef { section: "gen", bus: 9, .. })),
        ("dangling_branch", |e| matches!(e, DanglingBusRef { section: "branch", bus: 7, .. })),
        ("gencost_rows", |e| matches!(e, RowCountMismatch { gen: 2, gencost: 1 })),
        ("piecewise_cost", |e| matches!(e, UnsupportedCostModel { row: 1, .. })),
        ("cubic_cost", |e| matches!(e, CostDegree { row: 1, n: 4 })),
        ("duplicate_bus", |e| matches!(e, DuplicateBus(1))),
        ("zero_base", |e| matches!(e, BaseMva(_))),
        ("bad_bus_type", |e| matches!(e, InvalidBusType { row: 2, .. })),
        ("short_branch", |e| matches!(e, TooFewColumns { section: "branch", found: 10, .. })),
    ];
    for (file, check) in cases {
        match parse_file(&format!("malformed/{file}.m")) {
            Err(ParseError::Semantic(e)) => assert!(check(&e), "{file}: {e:?}"),
            other => panic!("{file}: {other:?}"),
        }
    }
}

#[test]
fn malformed_corpus_validation_diagnostics() {
    for (file, code) in [
        ("disconnected", DiagnosticCode::DisconnectedGraph),
        ("zero_impedance", DiagnosticCode::ZeroImpedance),
        ("inverted_voltage", DiagnosticCode::InvalidVoltageBounds),
    ] {
        let c = parse_file(&format!("malformed/{file}.m")).unwrap();
        let codes: Vec<_> = validate_case(&c).into_iter().map(|d| d.code).collect();
        assert_eq!(codes, vec![code], "{file}");
    }
}

#[test]
fn bus_only_names_branch_section() {
    let e = parse_file("malformed/bus_only.m").unwrap_err();
    assert_eq!(e.to_string(), "missing branch section");
}

/// Raw MW column of the bus matrix, read without the parser.
fn raw_pd(text: &str) -> Vec<f64> {
    let start = text.find("mpc.bus = [").unwrap();
    let body = &text[start..text[start..].find("];").unwrap() + start];
    body.lines()
        .skip(1)
        .filter_map(|l| {
            let cols: Vec<&str> = l.split_whitespace().collect();
            (cols.len() >= 13).then(|| cols[2].trim_end_matches(';').parse().unwrap())
        })
        .collect()
}

#[test]
fn per_unit_loads_match_raw_megawatts() {
    for name in ["case5_pjm", "case14_ieee__api", "case30_ieee", "case118_ieee__api"] {
        let text = std::fs::read_to_string(data_path(&format!("pglib/pglib_opf_{name}.m"))).unwrap();
        let c = parse_matpower(&text).unwrap();
        let raw = raw_pd(&text);
        assert_eq!(raw.len(), c.buses.len());
        for (b, mw) in c.buses.iter().zip(raw) {
            let back = b.pd * c.base_mva;
            assert!((back - mw).abs() <= 1e-12 * mw.abs().max(1.0), "{name} bus {}: {back} vs {mw}", b.id);
        }
    }
}

#[test]
fn round_trip_shipped_cases() {
    for name in ["case5_pjm", "case14_ieee__api", "case30_ieee", "case24_ieee_rts__api"] {
        let c = pglib(name);
        let again = parse_matpower(&c.to_matpower()).unwrap();
        assert_eq!(again, c, "{name}");
    }
}

/// Numeric fields of a case in a fixed order; ids, types and status flags are compared separately.
fn numbers(c: &NetworkCase) -> Vec<f64> {
    let mut v = vec![c.base_mva];
    for b in &c.buses {
        v.extend([b.pd, b.qd, b.gs, b.bs, b.vmin, b.vmax]);
    }
    for g in &c.generators {
        v.extend([g.pmin, g.pmax, g.qmin, g.qmax, g.cost.c2, g.cost.c1, g.cost.c0]);
    }
    for br in &c.branches {
        v.extend([br.r, br.x, br.b_charge, br.tap, br.shift, br.s_max, br.angmin, br.angmax]);
    }
    v
}

fn structure(c: &NetworkCase) -> String {
    let buses: Vec<_> = c.buses.iter().map(|b| (b.id, b.bus_type)).collect();
    let gens: Vec<_> = c.generators.iter().map(|g| (g.bus, g.in_service)).collect();
    let branches: Vec<_> = c.branches.iter().map(|b| (b.from_bus, b.to_bus, b.in_service)).collect();
    format!("{} {buses:?} {gens:?} {branches:?}", c.name)
}

/// Three-bus file text with the given raw (MW, MVAr, $/MW²) entries.
fn three_bus_text(loads: &[(f64, f64)], x: f64, c2: f64, tap: f64, base: f64) -> String {
    let mut t = std::fs::read_to_string(data_path("cases/three_bus.m")).unwrap();
    t = t.replace("mpc.baseMVA = 100;", &format!("mpc.baseMVA = {base};"));
    let c = parse_matpower(&t).unwrap();
    let mut out = c.clone();
    for (b, &(p, q)) in out.buses.iter_mut().zip(loads) {
        b.pd = p / base;
        b.qd = q / base;
    }
    for br in &mut out.branches {
        br.x = x;
        br.tap = tap;
    }
    out.generators[0].cost.c2 = c2 * base * base;
    out.to_matpower()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn parse_write_parse_is_stable(
        loads in proptest::collection::vec((-200.0f64..200.0, -100.0f64..100.0), 3),
        x in 0.01f64..1.0,
        c2 in 0.0f64..0.05,
        tap in prop_oneof![Just(0.0), 0.9f64..1.1],
        base in prop_oneof![Just(100.0), 1.0f64..1000.0],
    ) {
        let first = parse_matpower(&three_bus_text(&loads, x, c2, tap, base)).unwrap();
        let again = parse_matpower(&first.to_matpower()).unwrap();
        prop_assert_eq!(structure(&again), structure(&first));
        // per-unit scaling may move the last bit
        for (a, b) in numbers(&again).into_iter().zip(numbers(&first)) {
            prop_assert!((a - b).abs() <= 1e-14 * a.abs().max(b.abs()), "{} vs {}", a, b);
        }
    }
}
