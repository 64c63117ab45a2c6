use std::collections::{BTreeMap, HashMap, HashSet};
use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use super::NetworkCase;

/// Where a diagnostic applies. Generator and branch locations are row indices (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Location {
    Case,
    Bus(usize),
    Generator(usize),
    Branch(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DiagnosticCode {
    NonPositiveBaseMva,
    EmptyNetwork,
    DuplicateBusId(usize),
    InvalidVoltageBounds,
    DanglingBusRef(usize),
    InvalidGeneratorLimits,
    NegativeQuadraticCost,
    ZeroImpedance,
    InvalidAngleBounds,
    NonFiniteValue,
    DisconnectedGraph,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Diagnostic {
    pub code: DiagnosticCode,
    pub location: Location,
}

impl Diagnostic {
    fn new(code: DiagnosticCode, location: Location) -> Self {
        Diagnostic { code, location }
    }
}

/// Checks model invariants and in-service connectivity. An empty result means the case is usable.
pub fn validate_case(case: &NetworkCase) -> Vec<Diagnostic> {
    use DiagnosticCode::*;
    let mut out = Vec::new();
    if !(case.base_mva > 0.0 && case.base_mva.is_finite()) {
        out.push(Diagnostic::new(NonPositiveBaseMva, Location::Case));
    }
    let mut seen = HashSet::new();
    for b in &case.buses {
        if !seen.insert(b.id) {
            out.push(Diagnostic::new(DuplicateBusId(b.id), Location::Bus(b.id)));
        }
        if !(b.vmin > 0.0 && b.vmin <= b.vmax) {
            out.push(Diagnostic::new(InvalidVoltageBounds, Location::Bus(b.id)));
        }
        if ![b.pd, b.qd, b.gs, b.bs, b.vmin, b.vmax].iter().all(|v| v.is_finite()) {
            out.push(Diagnostic::new(NonFiniteValue, Location::Bus(b.id)));
        }
    }
    let lookup = case.bus_lookup();
    for (i, g) in case.generators.iter().enumerate() {
        if !lookup.contains_key(&g.bus) {
            out.push(Diagnostic::new(DanglingBusRef(g.bus), Location::Generator(i)));
        }
        if !(g.pmin <= g.pmax && g.qmin <= g.qmax) {
            out.push(Diagnostic::new(InvalidGeneratorLimits, Location::Generator(i)));
        }
        if g.cost.c2 < 0.0 {
            out.push(Diagnostic::new(NegativeQuadraticCost, Location::Generator(i)));
        }
        let vals = [g.pmin, g.pmax, g.qmin, g.qmax, g.cost.c2, g.cost.c1, g.cost.c0];
        if !vals.iter().all(|v| v.is_finite()) {
            out.push(Diagnostic::new(NonFiniteValue, Location::Generator(i)));
        }
    }
    for (i, br) in case.branches.iter().enumerate() {
        for bus in [br.from_bus, br.to_bus] {
            if !lookup.contains_key(&bus) {
                out.push(Diagnostic::new(DanglingBusRef(bus), Location::Branch(i)));
            }
        }
        if br.in_service && br.r * br.r + br.x * br.x <= 0.0 {
            out.push(Diagnostic::new(ZeroImpedance, Location::Branch(i)));
        }
        if !(-FRAC_PI_2 < br.angmin && br.angmin <= br.angmax && br.angmax < FRAC_PI_2) {
            out.push(Diagnostic::new(InvalidAngleBounds, Location::Branch(i)));
        }
        let vals = [br.r, br.x, br.b_charge, br.tap, br.shift, br.s_max];
        if !vals.iter().all(|v| v.is_finite()) {
            out.push(Diagnostic::new(NonFiniteValue, Location::Branch(i)));
        }
    }
    let active = case.active_bus_ids();
    if active.is_empty() {
        out.push(Diagnostic::new(EmptyNetwork, Location::Case));
    } else if !is_connected(case, &active, &lookup) {
        out.push(Diagnostic::new(DisconnectedGraph, Location::Case));
    }
    out
}

fn is_connected(case: &NetworkCase, active: &[usize], lookup: &HashMap<usize, usize>) -> bool {
    let mut adj: BTreeMap<usize, Vec<usize>> = active.iter().map(|&b| (b, Vec::new())).collect();
    for br in &case.branches {
        if !br.in_service || !lookup.contains_key(&br.from_bus) || !lookup.contains_key(&br.to_bus) {
            continue;
        }
        if adj.contains_key(&br.from_bus) && adj.contains_key(&br.to_bus) {
            adj.get_mut(&br.from_bus).unwrap().push(br.to_bus);
            adj.get_mut(&br.to_bus).unwrap().push(br.from_bus);
        }
    }
    let mut seen = HashSet::from([active[0]]);
    let mut stack = vec![active[0]];
    while let Some(b) = stack.pop() {
        for &n in &adj[&b] {
            if seen.insert(n) {
                stack.push(n);
            }
        }
    }
    seen.len() == active.len()
}
