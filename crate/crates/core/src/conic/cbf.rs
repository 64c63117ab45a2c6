//! Export to the Conic Benchmark Format (CBF, version 3) for cross-checking with other solvers.

use std::fmt::Write;

use thiserror::Error;

use super::{ConicProgram, LinExpr, Sense};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CbfError {
    #[error("CBF cannot express a quadratic objective")]
    QuadraticObjective,
}

struct Chunk {
    cone: &'static str,
    exprs: Vec<LinExpr>,
}

pub fn to_cbf(p: &ConicProgram) -> Result<String, CbfError> {
    if !p.quadratic.is_empty() {
        return Err(CbfError::QuadraticObjective);
    }
    let n = p.n_vars();
    let mut chunks: Vec<Chunk> = Vec::new();

    let mut eq = Vec::new();
    let mut ge = Vec::new();
    for r in &p.rows {
        let mut e = r.expr.clone();
        e.constant -= r.rhs;
        match r.sense {
            Sense::Eq => eq.push(e),
            Sense::Ge => ge.push(e),
            Sense::Le => ge.push(negate(&e)),
        }
    }
    for j in 0..n {
        if p.lower[j] == p.upper[j] {
            eq.push(LinExpr::var(j).plus(-p.lower[j]));
            continue;
        }
        if p.lower[j].is_finite() {
            ge.push(LinExpr::var(j).plus(-p.lower[j]));
        }
        if p.upper[j].is_finite() {
            ge.push(LinExpr::from_terms([(j, -1.0)]).plus(p.upper[j]));
        }
    }
    if !eq.is_empty() {
        chunks.push(Chunk { cone: "L=", exprs: eq });
    }
    if !ge.is_empty() {
        chunks.push(Chunk { cone: "L+", exprs: ge });
    }
    for c in &p.socs {
        chunks.push(Chunk { cone: "Q", exprs: c.standard_entries() });
    }

    let mut s = String::new();
    writeln!(s, "VER\n3\n").unwrap();
    writeln!(s, "OBJSENSE\nMIN\n").unwrap();
    writeln!(s, "VAR\n{n} 1\nF {n}\n").unwrap();

    if !p.psds.is_empty() {
        writeln!(s, "PSDCON\n{}", p.psds.len()).unwrap();
        for b in &p.psds {
            writeln!(s, "{}", b.dim).unwrap();
        }
        writeln!(s).unwrap();
    }

    let m: usize = chunks.iter().map(|c| c.exprs.len()).sum();
    writeln!(s, "CON\n{m} {}", chunks.len()).unwrap();
    for c in &chunks {
        writeln!(s, "{} {}", c.cone, c.exprs.len()).unwrap();
    }
    writeln!(s).unwrap();

    let obj: Vec<_> = p.objective.terms.iter().collect();
    writeln!(s, "OBJACOORD\n{}", obj.len()).unwrap();
    for (j, v) in obj {
        writeln!(s, "{j} {v:?}").unwrap();
    }
    writeln!(s).unwrap();
    if p.objective.constant != 0.0 {
        writeln!(s, "OBJBCOORD\n{:?}\n", p.objective.constant).unwrap();
    }

    let mut acoord = Vec::new();
    let mut bcoord = Vec::new();
    let rows = chunks.iter().flat_map(|c| c.exprs.iter());
    for (i, e) in rows.enumerate() {
        for &(j, v) in &e.terms {
            acoord.push(format!("{i} {j} {v:?}"));
        }
        if e.constant != 0.0 {
            bcoord.push(format!("{i} {:?}", e.constant));
        }
    }
    writeln!(s, "ACOORD\n{}\n{}\n", acoord.len(), acoord.join("\n")).unwrap();
    writeln!(s, "BCOORD\n{}\n{}\n", bcoord.len(), bcoord.join("\n")).unwrap();

    if !p.psds.is_empty() {
        let mut h = Vec::new();
        let mut d = Vec::new();
        for (k, b) in p.psds.iter().enumerate() {
            for i in 0..b.dim {
                for j in 0..=i {
                    let e = b.entry(i, j);
                    for &(v, c) in &e.terms {
                        h.push(format!("{k} {v} {i} {j} {c:?}"));
                    }
                    if e.constant != 0.0 {
                        d.push(format!("{k} {i} {j} {:?}", e.constant));
                    }
                }
            }
        }
        writeln!(s, "HCOORD\n{}\n{}\n", h.len(), h.join("\n")).unwrap();
        writeln!(s, "DCOORD\n{}\n{}\n", d.len(), d.join("\n")).unwrap();
    }
    Ok(s)
}

fn negate(e: &LinExpr) -> LinExpr {
    LinExpr { terms: e.terms.iter().map(|&(v, c)| (v, -c)).collect(), constant: -e.constant }
}
