//! Per-unit network model and MATPOWER ingestion.

mod admittance;
mod parse;
mod validate;
mod write;

use std::collections::HashMap;

use serde::Serialize;

pub use admittance::{admittance_parameters, BranchAdmittance, ZeroImpedance};
pub use parse::{parse_matpower, ParseError, SemanticError};
pub use validate::{validate_case, Diagnostic, DiagnosticCode, Location};

/// MATPOWER bus type codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BusType {
    Pq,
    Pv,
    Ref,
    Isolated,
}

impl BusType {
    pub fn from_code(code: i64) -> Option<BusType> {
        match code {
            1 => Some(BusType::Pq),
            2 => Some(BusType::Pv),
            3 => Some(BusType::Ref),
            4 => Some(BusType::Isolated),
            _ => None,
        }
    }

    pub fn code(self) -> i64 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Ref => 3,
            BusType::Isolated => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    pub bus_type: BusType,
    /// Active demand, p.u.
    pub pd: f64,
    /// Reactive demand, p.u.
    pub qd: f64,
    /// Shunt conductance (p.u. active power consumed at 1 p.u. voltage).
    pub gs: f64,
    /// Shunt susceptance (p.u. reactive power injected at 1 p.u. voltage).
    pub bs: f64,
    pub vmin: f64,
    pub vmax: f64,
}

impl Bus {
    pub fn is_active(&self) -> bool {
        self.bus_type != BusType::Isolated
    }
}

/// Polynomial generation cost `c2 p² + c1 p + c0` with `p` in p.u. and cost in $/hr.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CostPoly {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostPoly {
    pub fn eval(&self, p: f64) -> f64 {
        (self.c2 * p + self.c1) * p + self.c0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    pub bus: usize,
    pub pmin: f64,
    pub pmax: f64,
    pub qmin: f64,
    pub qmax: f64,
    pub cost: CostPoly,
    pub in_service: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
    /// Total line-charging susceptance.
    pub b_charge: f64,
    /// Off-nominal turns ratio; 0 means 1.
    pub tap: f64,
    /// Phase shift, radians.
    pub shift: f64,
    /// Apparent power limit; 0 means unlimited.
    pub s_max: f64,
    /// Angle-difference bounds, radians, clamped into (-π/2, π/2).
    pub angmin: f64,
    pub angmax: f64,
    pub in_service: bool,
}

impl Branch {
    /// Effective tap ratio under the zero-means-one convention.
    pub fn ratio(&self) -> f64 {
        if self.tap == 0.0 {
            1.0
        } else {
            self.tap
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
}

impl NetworkCase {
    /// Map from bus id to its position in `buses`.
    pub fn bus_lookup(&self) -> HashMap<usize, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Ids of buses taking part in any formulation, ascending.
    pub fn active_bus_ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self.buses.iter().filter(|b| b.is_active()).map(|b| b.id).collect();
        ids.sort_unstable();
        ids
    }

    fn bus_active(&self, lookup: &HashMap<usize, usize>, id: usize) -> bool {
        lookup.get(&id).is_some_and(|&i| self.buses[i].is_active())
    }

    /// Indices of in-service branches whose endpoints both exist and are active.
    pub fn active_branches(&self) -> Vec<usize> {
        let lookup = self.bus_lookup();
        self.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| {
                br.in_service
                    && self.bus_active(&lookup, br.from_bus)
                    && self.bus_active(&lookup, br.to_bus)
            })
            .map(|(i, _)| i)
            .collect()
    }

    /// Indices of in-service generators at active buses.
    pub fn active_generators(&self) -> Vec<usize> {
        let lookup = self.bus_lookup();
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service && self.bus_active(&lookup, g.bus))
            .map(|(i, _)| i)
            .collect()
    }

    /// Serialize back to MATPOWER text (raw units). Parsing the result
    /// reproduces this case up to floating-point rescaling.
    pub fn to_matpower(&self) -> String {
        write::to_matpower(self)
    }
}
