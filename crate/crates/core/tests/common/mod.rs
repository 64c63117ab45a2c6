#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::PathBuf;

use netdec::case::{admittance_parameters, parse_matpower, NetworkCase};
use num_complex::Complex64;

pub fn data_path(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

pub fn load(rel: &str) -> NetworkCase {
    let text = std::fs::read_to_string(data_path(rel)).unwrap();
    parse_matpower(&text).unwrap()
}

pub fn pglib(name: &str) -> NetworkCase {
    load(&format!("pglib/pglib_opf_{name}.m"))
}

/// Net complex injection needed at each bus for the given phasors.
pub fn injections(case: &NetworkCase, v: &BTreeMap<usize, Complex64>) -> BTreeMap<usize, Complex64> {
    let mut s: BTreeMap<usize, Complex64> = v.keys().map(|&b| (b, Complex64::new(0.0, 0.0))).collect();
    for br in case.branches.iter().filter(|b| b.in_service) {
        let y = admittance_parameters(br).unwrap();
        let (vf, vt) = (v[&br.from_bus], v[&br.to_bus]);
        *s.get_mut(&br.from_bus).unwrap() += vf * (y.y_ff * vf + y.y_ft * vt).conj();
        *s.get_mut(&br.to_bus).unwrap() += vt * (y.y_tf * vf + y.y_tt * vt).conj();
    }
    for bus in &case.buses {
        let m2 = v[&bus.id].norm_sqr();
        *s.get_mut(&bus.id).unwrap() += Complex64::new(bus.pd + bus.gs * m2, bus.qd - bus.bs * m2);
    }
    s
}

/// Dispatch for cases with exactly one generator per bus: each generator supplies its bus injection.
pub fn single_gen_dispatch(case: &NetworkCase, v: &BTreeMap<usize, Complex64>) -> BTreeMap<usize, (f64, f64)> {
    let s = injections(case, v);
    case.generators.iter().enumerate().map(|(g, gen)| (g, (s[&gen.bus].re, s[&gen.bus].im))).collect()
}
