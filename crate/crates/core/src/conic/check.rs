use nalgebra::DMatrix;
use serde::Serialize;

use super::{ConicProgram, Sense};

/// Worst violation per constraint class at a primal point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct ResidualReport {
    pub linear: f64,
    pub bounds: f64,
    pub soc: f64,
    /// Negated smallest eigenvalue over all PSD blocks, floored at 0.
    pub psd: f64,
}

impl ResidualReport {
    pub fn max(&self) -> f64 {
        self.linear.max(self.bounds).max(self.soc).max(self.psd)
    }

    pub fn within(&self, tol: f64) -> bool {
        self.max() <= tol
    }
}

pub fn check_solution(program: &ConicProgram, x: &[f64]) -> ResidualReport {
    let mut r = ResidualReport::default();
    for row in &program.rows {
        let lhs = row.expr.eval(x);
        let v = match row.sense {
            Sense::Eq => (lhs - row.rhs).abs(),
            Sense::Le => (lhs - row.rhs).max(0.0),
            Sense::Ge => (row.rhs - lhs).max(0.0),
        };
        r.linear = r.linear.max(v);
    }
    for (j, &xj) in x.iter().enumerate().take(program.n_vars()) {
        let v = (program.lower[j] - xj).max(xj - program.upper[j]).max(0.0);
        r.bounds = r.bounds.max(v);
    }
    for c in &program.socs {
        let e = c.standard_entries();
        let head = e[0].eval(x);
        let tail = e[1..].iter().map(|t| t.eval(x).powi(2)).sum::<f64>().sqrt();
        r.soc = r.soc.max(tail - head);
    }
    for blk in &program.psds {
        if blk.dim == 0 {
            continue;
        }
        let m = DMatrix::from_row_slice(blk.dim, blk.dim, &blk.eval(x));
        let min = m.symmetric_eigenvalues().min();
        r.psd = r.psd.max(-min);
    }
    r
}
