//! Reader for the MATPOWER `.m` subset used by PGLib-OPF.

use std::collections::{HashMap, HashSet};
use std::f64::consts::PI;

use thiserror::Error;

use super::{Branch, Bus, BusType, CostPoly, Generator, NetworkCase};

/// Angle-difference bounds are clamped to this magnitude (degrees).
pub(crate) const ANGLE_CLAMP_DEG: f64 = 89.9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error(transparent)]
    Semantic(#[from] SemanticError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SemanticError {
    #[error("missing {0} section")]
    MissingSection(&'static str),
    #[error("invalid baseMVA {0}")]
    BaseMva(f64),
    #[error("{section} row {row}: expected at least {required} columns, found {found}")]
    TooFewColumns { section: &'static str, row: usize, required: usize, found: usize },
    #[error("{section} row {row}: invalid bus id {value}")]
    InvalidBusId { section: &'static str, row: usize, value: f64 },
    #[error("bus row {row}: unknown bus type {code}")]
    InvalidBusType { row: usize, code: f64 },
    #[error("duplicate bus id {0}")]
    DuplicateBus(usize),
    #[error("{section} row {row} references missing bus {bus}")]
    DanglingBusRef { section: &'static str, row: usize, bus: usize },
    #[error("gencost has {gencost} rows but gen has {gen}")]
    RowCountMismatch { gen: usize, gencost: usize },
    #[error("gencost row {row}: cost model {model} is not supported (polynomial only)")]
    UnsupportedCostModel { row: usize, model: f64 },
    #[error("gencost row {row}: polynomial of {n} coefficients exceeds degree 2")]
    CostDegree { row: usize, n: usize },
    #[error("field {0} must be a scalar")]
    NotScalar(&'static str),
    #[error("field {0} must be a matrix")]
    NotMatrix(&'static str),
}

#[derive(Debug, Clone)]
enum Value {
    Scalar(f64),
    Text,
    Matrix(Matrix),
}

#[derive(Debug, Clone)]
struct Matrix {
    rows: Vec<Vec<f64>>,
}

struct Cursor {
    chars: Vec<char>,
    pos: usize,
    line: usize,
}

impl Cursor {
    fn new(src: &str) -> Self {
        Cursor { chars: strip_comments(src).chars().collect(), pos: 0, line: 1 }
    }

    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.peek()?;
        self.pos += 1;
        if c == '\n' {
            self.line += 1;
        }
        Some(c)
    }

    fn skip_ws(&mut self, newlines: bool) {
        while let Some(c) = self.peek() {
            if c == ' ' || c == '\t' || c == '\r' || (newlines && c == '\n') || c == '.' && self.ellipsis() {
                if c == '.' {
                    // `...` continuation: skip to end of line
                    while let Some(c) = self.bump() {
                        if c == '\n' {
                            break;
                        }
                    }
                } else {
                    self.bump();
                }
            } else {
                break;
            }
        }
    }

    fn ellipsis(&self) -> bool {
        self.chars[self.pos..].starts_with(&['.', '.', '.'])
    }

    fn word(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c.is_alphanumeric() || c == '_' || c == '.' {
                s.push(c);
                self.bump();
            } else {
                break;
            }
        }
        s
    }

    fn syntax<T>(&self, message: impl Into<String>) -> Result<T, ParseError> {
        Err(ParseError::Syntax { line: self.line, message: message.into() })
    }

    fn rest_of_line(&mut self) -> String {
        let mut s = String::new();
        while let Some(c) = self.peek() {
            if c == '\n' {
                break;
            }
            s.push(c);
            self.bump();
        }
        s
    }
}

/// Removes `%` comments, leaving quoted strings intact and preserving line structure.
fn strip_comments(src: &str) -> String {
    let mut out = String::with_capacity(src.len());
    for line in src.lines() {
        let mut in_str = false;
        for c in line.chars() {
            match c {
                '\'' => {
                    in_str = !in_str;
                    out.push(c);
                }
                '%' if !in_str => break,
                _ => out.push(c),
            }
        }
        out.push('\n');
    }
    out
}

fn parse_number(token: &str) -> Option<f64> {
    token.parse::<f64>().ok()
}

fn parse_matrix(cur: &mut Cursor) -> Result<Matrix, ParseError> {
    let start = cur.line;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut row: Vec<f64> = Vec::new();
    let mut width: Option<usize> = None;
    let mut finish_row = |row: &mut Vec<f64>, rows: &mut Vec<Vec<f64>>, line: usize| {
        if row.is_empty() {
            return Ok(());
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(ParseError::Syntax {
                    line,
                    message: format!("ragged matrix row: expected {} entries, found {}", w, row.len()),
                })
            }
            _ => {}
        }
        rows.push(std::mem::take(row));
        Ok(())
    };
    loop {
        cur.skip_ws(false);
        match cur.peek() {
            None => {
                return Err(ParseError::Syntax {
                    line: start,
                    message: "unterminated matrix literal".into(),
                })
            }
            Some(']') => {
                let line = cur.line;
                cur.bump();
                finish_row(&mut row, &mut rows, line)?;
                return Ok(Matrix { rows });
            }
            Some(';') | Some('\n') => {
                let line = cur.line;
                cur.bump();
                finish_row(&mut row, &mut rows, line)?;
            }
            Some(',') => {
                cur.bump();
            }
            Some(_) => {
                let mut tok = String::new();
                while let Some(c) = cur.peek() {
                    if c.is_whitespace() || c == ';' || c == ',' || c == ']' {
                        break;
                    }
                    tok.push(c);
                    cur.bump();
                }
                match parse_number(&tok) {
                    Some(v) => row.push(v),
                    None => return cur.syntax(format!("invalid numeric literal '{tok}'")),
                }
            }
        }
    }
}

fn skip_cell(cur: &mut Cursor) -> Result<(), ParseError> {
    let start = cur.line;
    let mut in_str = false;
    while let Some(c) = cur.bump() {
        match c {
            '\'' => in_str = !in_str,
            '}' if !in_str => return Ok(()),
            _ => {}
        }
    }
    Err(ParseError::Syntax { line: start, message: "unterminated cell literal".into() })
}

fn parse_fields(src: &str) -> Result<(Option<String>, HashMap<String, Value>), ParseError> {
    let mut cur = Cursor::new(src);
    let mut name = None;
    let mut fields = HashMap::new();
    loop {
        cur.skip_ws(true);
        if cur.peek().is_none() {
            break;
        }
        if cur.peek() == Some(';') {
            cur.bump();
            continue;
        }
        let word = cur.word();
        if word.is_empty() {
            let c = cur.peek().unwrap_or(' ');
            return cur.syntax(format!("unexpected character '{c}'"));
        }
        match word.as_str() {
            "function" => {
                let rest = cur.rest_of_line();
                let fname = rest.rsplit('=').next().unwrap_or("").trim().trim_end_matches(';').trim();
                if !fname.is_empty() {
                    name = Some(fname.to_string());
                }
                continue;
            }
            "end" | "return" => continue,
            _ => {}
        }
        let Some((_, field)) = word.split_once('.') else {
            return cur.syntax(format!("unexpected statement '{word}'"));
        };
        let field = field.to_string();
        cur.skip_ws(false);
        if cur.peek() != Some('=') {
            return cur.syntax(format!("expected '=' after '{word}'"));
        }
        cur.bump();
        cur.skip_ws(false);
        let value = match cur.peek() {
            Some('[') => {
                cur.bump();
                Value::Matrix(parse_matrix(&mut cur)?)
            }
            Some('{') => {
                cur.bump();
                skip_cell(&mut cur)?;
                Value::Text
            }
            Some('\'') => {
                cur.bump();
                let line = cur.line;
                loop {
                    match cur.bump() {
                        Some('\'') => break,
                        Some('\n') | None => {
                            return Err(ParseError::Syntax { line, message: "unterminated string".into() })
                        }
                        _ => {}
                    }
                }
                Value::Text
            }
            _ => {
                let tok: String = cur.rest_of_line();
                let tok = tok.trim().trim_end_matches(';').trim();
                match parse_number(tok) {
                    Some(v) => Value::Scalar(v),
                    None => return cur.syntax(format!("invalid value '{tok}' for field {field}")),
                }
            }
        };
        cur.skip_ws(false);
        if cur.peek() == Some(';') {
            cur.bump();
        }
        fields.insert(field, value);
    }
    Ok((name, fields))
}

fn matrix<'m>(fields: &'m HashMap<String, Value>, key: &'static str) -> Result<&'m Matrix, SemanticError> {
    match fields.get(key) {
        None => Err(SemanticError::MissingSection(key)),
        Some(Value::Matrix(m)) => Ok(m),
        Some(_) => Err(SemanticError::NotMatrix(key)),
    }
}

fn check_width(m: &Matrix, section: &'static str, required: usize) -> Result<(), SemanticError> {
    for (i, r) in m.rows.iter().enumerate() {
        if r.len() < required {
            return Err(SemanticError::TooFewColumns { section, row: i + 1, required, found: r.len() });
        }
    }
    Ok(())
}

fn bus_id(value: f64, section: &'static str, row: usize) -> Result<usize, SemanticError> {
    if value >= 1.0 && value.fract() == 0.0 && value.is_finite() {
        Ok(value as usize)
    } else {
        Err(SemanticError::InvalidBusId { section, row, value })
    }
}

/// Converts a MATPOWER angle-difference bound (degrees) into radians.
/// Zero and |value| ≥ 360 mean unbounded; everything is clamped to ±89.9°.
fn angle_bound(deg: f64, lower: bool) -> f64 {
    let unbounded = deg == 0.0 || deg.abs() >= 360.0 || !deg.is_finite();
    let d = if unbounded {
        if lower {
            -ANGLE_CLAMP_DEG
        } else {
            ANGLE_CLAMP_DEG
        }
    } else {
        deg.clamp(-ANGLE_CLAMP_DEG, ANGLE_CLAMP_DEG)
    };
    d * PI / 180.0
}

/// Parses MATPOWER case text into a per-unit [`NetworkCase`].
pub fn parse_matpower(text: &str) -> Result<NetworkCase, ParseError> {
    let (name, fields) = parse_fields(text)?;

    let bus_m = matrix(&fields, "bus")?;
    let branch_m = matrix(&fields, "branch")?;
    let gen_m = matrix(&fields, "gen")?;
    let cost_m = matrix(&fields, "gencost")?;
    let base_mva = match fields.get("baseMVA") {
        None => return Err(SemanticError::MissingSection("baseMVA").into()),
        Some(Value::Scalar(v)) => *v,
        Some(_) => return Err(SemanticError::NotScalar("baseMVA").into()),
    };
    if !(base_mva > 0.0 && base_mva.is_finite()) {
        return Err(SemanticError::BaseMva(base_mva).into());
    }

    check_width(bus_m, "bus", 13)?;
    check_width(gen_m, "gen", 10)?;
    check_width(branch_m, "branch", 11)?;
    check_width(cost_m, "gencost", 4)?;

    let mut buses = Vec::with_capacity(bus_m.rows.len());
    let mut seen = HashSet::new();
    for (i, r) in bus_m.rows.iter().enumerate() {
        let id = bus_id(r[0], "bus", i + 1)?;
        if !seen.insert(id) {
            return Err(SemanticError::DuplicateBus(id).into());
        }
        let bus_type = (r[1].fract() == 0.0)
            .then(|| BusType::from_code(r[1] as i64))
            .flatten()
            .ok_or(SemanticError::InvalidBusType { row: i + 1, code: r[1] })?;
        buses.push(Bus {
            id,
            bus_type,
            pd: r[2] / base_mva,
            qd: r[3] / base_mva,
            gs: r[4] / base_mva,
            bs: r[5] / base_mva,
            vmax: r[11],
            vmin: r[12],
        });
    }

    if cost_m.rows.len() != gen_m.rows.len() {
        return Err(SemanticError::RowCountMismatch { gen: gen_m.rows.len(), gencost: cost_m.rows.len() }.into());
    }

    let mut generators = Vec::with_capacity(gen_m.rows.len());
    for (i, (r, c)) in gen_m.rows.iter().zip(&cost_m.rows).enumerate() {
        let bus = bus_id(r[0], "gen", i + 1)?;
        if !seen.contains(&bus) {
            return Err(SemanticError::DanglingBusRef { section: "gen", row: i + 1, bus }.into());
        }
        let cost = cost_poly(c, i + 1, base_mva)?;
        generators.push(Generator {
            bus,
            qmax: r[3] / base_mva,
            qmin: r[4] / base_mva,
            in_service: r[7] > 0.0,
            pmax: r[8] / base_mva,
            pmin: r[9] / base_mva,
            cost,
        });
    }

    let mut branches = Vec::with_capacity(branch_m.rows.len());
    for (i, r) in branch_m.rows.iter().enumerate() {
        let from_bus = bus_id(r[0], "branch", i + 1)?;
        let to_bus = bus_id(r[1], "branch", i + 1)?;
        for bus in [from_bus, to_bus] {
            if !seen.contains(&bus) {
                return Err(SemanticError::DanglingBusRef { section: "branch", row: i + 1, bus }.into());
            }
        }
        let (angmin, angmax) = if r.len() >= 13 {
            (angle_bound(r[11], true), angle_bound(r[12], false))
        } else {
            (angle_bound(-360.0, true), angle_bound(360.0, false))
        };
        branches.push(Branch {
            from_bus,
            to_bus,
            r: r[2],
            x: r[3],
            b_charge: r[4],
            s_max: r[5] / base_mva,
            tap: r[8],
            shift: r[9] * PI / 180.0,
            in_service: r[10] > 0.0,
            angmin,
            angmax,
        });
    }

    Ok(NetworkCase { name: name.unwrap_or_default(), base_mva, buses, generators, branches })
}

fn cost_poly(row: &[f64], index: usize, base_mva: f64) -> Result<CostPoly, SemanticError> {
    if row[0] != 2.0 {
        return Err(SemanticError::UnsupportedCostModel { row: index, model: row[0] });
    }
    let n = row[3];
    if n < 0.0 || n.fract() != 0.0 {
        return Err(SemanticError::CostDegree { row: index, n: 0 });
    }
    let n = n as usize;
    if row.len() < 4 + n {
        return Err(SemanticError::TooFewColumns { section: "gencost", row: index, required: 4 + n, found: row.len() });
    }
    // coefficients are listed highest degree first
    let coeffs = &row[4..4 + n];
    if n > 3 && coeffs[..n - 3].iter().any(|&c| c != 0.0) {
        return Err(SemanticError::CostDegree { row: index, n });
    }
    let coef = |degree: usize| if degree < n { coeffs[n - 1 - degree] } else { 0.0 };
    Ok(CostPoly { c2: coef(2) * base_mva * base_mva, c1: coef(1) * base_mva, c0: coef(0) })
}
