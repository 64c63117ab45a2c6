//! Solver-agnostic conic programs.
//!
//! A program minimizes `cᵀx + c₀ + Σ qᵢxᵢ²` over box-bounded variables subject to
//! linear rows, second-order cones and PSD blocks whose entries are affine in `x`.

mod backend;
mod cbf;
mod check;

use std::fmt::Write;

use thiserror::Error;

pub use backend::{solve, SolveError, SolveSettings, Solution, SolveStatus};
pub use cbf::{to_cbf, CbfError};
pub use check::{check_solution, ResidualReport};

/// Sparse affine expression `Σ coef·x[var] + constant`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LinExpr {
    pub terms: Vec<(usize, f64)>,
    pub constant: f64,
}

impl LinExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn var(v: usize) -> Self {
        LinExpr { terms: vec![(v, 1.0)], constant: 0.0 }
    }

    pub fn constant(c: f64) -> Self {
        LinExpr { terms: Vec::new(), constant: c }
    }

    pub fn from_terms(terms: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut e = LinExpr::new();
        for (v, c) in terms {
            e.add(v, c);
        }
        e
    }

    /// Adds `coef·x[var]`; zero coefficients are dropped.
    pub fn add(&mut self, var: usize, coef: f64) -> &mut Self {
        if coef != 0.0 {
            self.terms.push((var, coef));
        }
        self
    }

    pub fn with(mut self, var: usize, coef: f64) -> Self {
        self.add(var, coef);
        self
    }

    pub fn plus(mut self, c: f64) -> Self {
        self.constant += c;
        self
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, c)| c * x[v]).sum::<f64>() + self.constant
    }

    pub fn coefficient(&self, var: usize) -> f64 {
        self.terms.iter().filter(|t| t.0 == var).map(|t| t.1).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty() && self.constant == 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Eq,
    Le,
    Ge,
}

impl Sense {
    fn symbol(self) -> &'static str {
        match self {
            Sense::Eq => "=",
            Sense::Le => "<=",
            Sense::Ge => ">=",
        }
    }
}

/// `expr sense rhs`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub label: String,
    pub expr: LinExpr,
    pub sense: Sense,
    pub rhs: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConeKind {
    /// `e₀ ≥ ‖(e₁, …)‖`
    Standard,
    /// `e₀·e₁ ≥ ‖(e₂, …)‖²`, `e₀, e₁ ≥ 0`
    Rotated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SocBlock {
    pub label: String,
    pub kind: ConeKind,
    pub entries: Vec<LinExpr>,
}

impl SocBlock {
    /// Entries of the equivalent standard cone.
    pub fn standard_entries(&self) -> Vec<LinExpr> {
        match self.kind {
            ConeKind::Standard => self.entries.clone(),
            ConeKind::Rotated => {
                let x = &self.entries[0];
                let y = &self.entries[1];
                let mut out = vec![combine(x, 1.0, y, 1.0), combine(x, 1.0, y, -1.0)];
                out.extend(self.entries[2..].iter().map(|z| combine(z, 2.0, &LinExpr::new(), 0.0)));
                out
            }
        }
    }
}

fn combine(a: &LinExpr, ca: f64, b: &LinExpr, cb: f64) -> LinExpr {
    let mut e = LinExpr::constant(ca * a.constant + cb * b.constant);
    for &(v, c) in &a.terms {
        e.add(v, ca * c);
    }
    for &(v, c) in &b.terms {
        e.add(v, cb * c);
    }
    e
}

/// Symmetric affine matrix `M(x) ⪰ 0`, stored as the lower triangle packed row by row:
/// `(0,0), (1,0), (1,1), (2,0), …`. Entries are unscaled.
#[derive(Debug, Clone, PartialEq)]
pub struct PsdBlock {
    pub label: String,
    pub dim: usize,
    pub entries: Vec<LinExpr>,
}

impl PsdBlock {
    pub fn zeros(label: impl Into<String>, dim: usize) -> Self {
        PsdBlock { label: label.into(), dim, entries: vec![LinExpr::new(); dim * (dim + 1) / 2] }
    }

    pub fn packed_index(i: usize, j: usize) -> usize {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        i * (i + 1) / 2 + j
    }

    pub fn entry(&self, i: usize, j: usize) -> &LinExpr {
        &self.entries[Self::packed_index(i, j)]
    }

    pub fn entry_mut(&mut self, i: usize, j: usize) -> &mut LinExpr {
        &mut self.entries[Self::packed_index(i, j)]
    }

    /// Dense symmetric matrix at `x`, row-major.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut m = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let v = self.entry(i, j).eval(x);
                m[i * n + j] = v;
                m[j * n + i] = v;
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IrError {
    #[error("{what} references variable {var} but the program has {n} variables")]
    VarOutOfRange { what: String, var: usize, n: usize },
    #[error("non-finite coefficient in {0}")]
    NonFinite(String),
    #[error("PSD block {label} has {found} packed entries, expected {expected}")]
    PsdShape { label: String, found: usize, expected: usize },
    #[error("cone {label} has too few entries")]
    ConeShape { label: String },
    #[error("variable {0} has lower bound above upper bound")]
    EmptyBox(usize),
    #[error("negative quadratic coefficient on variable {0}")]
    NonConvexQuadratic(usize),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConicProgram {
    pub var_names: Vec<String>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub objective: LinExpr,
    /// Diagonal quadratic objective terms `q·x[var]²`.
    pub quadratic: Vec<(usize, f64)>,
    pub rows: Vec<Row>,
    pub socs: Vec<SocBlock>,
    pub psds: Vec<PsdBlock>,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn n_vars(&self) -> usize {
        self.var_names.len()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.var_names.push(name.into());
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.len() - 1
    }

    pub fn free_var(&mut self, name: impl Into<String>) -> usize {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_row(&mut self, label: impl Into<String>, expr: LinExpr, sense: Sense, rhs: f64) {
        self.rows.push(Row { label: label.into(), expr, sense, rhs });
    }

    pub fn add_soc(&mut self, label: impl Into<String>, kind: ConeKind, entries: Vec<LinExpr>) {
        self.socs.push(SocBlock { label: label.into(), kind, entries });
    }

    pub fn add_psd(&mut self, block: PsdBlock) {
        self.psds.push(block);
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x) + self.quadratic.iter().map(|&(v, q)| q * x[v] * x[v]).sum::<f64>()
    }

    /// Largest absolute coefficient, bound or constant in the program data.
    pub fn data_norm(&self) -> f64 {
        let mut m: f64 = 0.0;
        let mut see = |e: &LinExpr| {
            m = m.max(e.constant.abs());
            for t in &e.terms {
                m = m.max(t.1.abs());
            }
        };
        see(&self.objective);
        for r in &self.rows {
            see(&r.expr);
        }
        for c in &self.socs {
            c.entries.iter().for_each(&mut see);
        }
        for p in &self.psds {
            p.entries.iter().for_each(&mut see);
        }
        for r in &self.rows {
            m = m.max(r.rhs.abs());
        }
        for v in self.lower.iter().chain(&self.upper).filter(|v| v.is_finite()) {
            m = m.max(v.abs());
        }
        m
    }

    pub fn validate(&self) -> Result<(), IrError> {
        let n = self.n_vars();
        let check = |what: &str, e: &LinExpr| -> Result<(), IrError> {
            if !e.constant.is_finite() {
                return Err(IrError::NonFinite(what.into()));
            }
            for &(v, c) in &e.terms {
                if v >= n {
                    return Err(IrError::VarOutOfRange { what: what.into(), var: v, n });
                }
                if !c.is_finite() {
                    return Err(IrError::NonFinite(what.into()));
                }
            }
            Ok(())
        };
        check("objective", &self.objective)?;
        for &(v, q) in &self.quadratic {
            if v >= n {
                return Err(IrError::VarOutOfRange { what: "quadratic objective".into(), var: v, n });
            }
            if !q.is_finite() {
                return Err(IrError::NonFinite("quadratic objective".into()));
            }
            if q < 0.0 {
                return Err(IrError::NonConvexQuadratic(v));
            }
        }
        for (j, (&l, &u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if l.is_nan() || u.is_nan() {
                return Err(IrError::NonFinite(format!("bounds of {}", self.var_names[j])));
            }
            if l > u {
                return Err(IrError::EmptyBox(j));
            }
        }
        for r in &self.rows {
            check(&r.label, &r.expr)?;
            if !r.rhs.is_finite() {
                return Err(IrError::NonFinite(r.label.clone()));
            }
        }
        for c in &self.socs {
            let min = if c.kind == ConeKind::Standard { 1 } else { 2 };
            if c.entries.len() < min {
                return Err(IrError::ConeShape { label: c.label.clone() });
            }
            for e in &c.entries {
                check(&c.label, e)?;
            }
        }
        for p in &self.psds {
            let expected = p.dim * (p.dim + 1) / 2;
            if p.entries.len() != expected {
                return Err(IrError::PsdShape { label: p.label.clone(), found: p.entries.len(), expected });
            }
            for e in &p.entries {
                check(&p.label, e)?;
            }
        }
        Ok(())
    }

    /// Human-readable listing of variables, objective, rows and cones.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let name = |v: usize| self.var_names[v].as_str();
        let expr = |e: &LinExpr| {
            let mut t = String::new();
            for &(v, c) in &e.terms {
                write!(t, " {c:+} {}", name(v)).unwrap();
            }
            if e.constant != 0.0 || e.terms.is_empty() {
                write!(t, " {:+}", e.constant).unwrap();
            }
            t
        };
        writeln!(s, "variables {}", self.n_vars()).unwrap();
        for j in 0..self.n_vars() {
            writeln!(s, "  {} in [{}, {}]", name(j), self.lower[j], self.upper[j]).unwrap();
        }
        write!(s, "minimize{}", expr(&self.objective)).unwrap();
        for &(v, q) in &self.quadratic {
            write!(s, " {q:+} {}^2", name(v)).unwrap();
        }
        writeln!(s).unwrap();
        writeln!(s, "rows {}", self.rows.len()).unwrap();
        for r in &self.rows {
            writeln!(s, "  {}:{} {} {}", r.label, expr(&r.expr), r.sense.symbol(), r.rhs).unwrap();
        }
        writeln!(s, "socs {}", self.socs.len()).unwrap();
        for c in &self.socs {
            let kind = if c.kind == ConeKind::Standard { "soc" } else { "rsoc" };
            let parts: Vec<String> = c.entries.iter().map(|e| format!("({} )", expr(e))).collect();
            writeln!(s, "  {}: {kind} {}", c.label, parts.join(" ")).unwrap();
        }
        writeln!(s, "psds {}", self.psds.len()).unwrap();
        for p in &self.psds {
            writeln!(s, "  {}: dim {}", p.label, p.dim).unwrap();
            for i in 0..p.dim {
                for j in 0..=i {
                    let e = p.entry(i, j);
                    if !e.is_zero() {
                        writeln!(s, "    [{i},{j}]{}", expr(e)).unwrap();
                    }
                }
            }
        }
        s
    }
}
