//! W-space ACOPF feasible sets for a part of the network.
//!
//! `W = v·vᴴ` is represented by `Wʳᵢᵢ` per bus and a pair `(Wʳᵢⱼ, Wⁱᵢⱼ)` per connected
//! bus pair, stored for the orientation of increasing position in the bus set.
//! Rank-one membership is never imposed; [`soc_program`] and [`sdp_program`] add the
//! two relaxations.

use std::collections::BTreeMap;
use std::fmt::Write;

use num_complex::Complex64;
use thiserror::Error;

use crate::case::{admittance_parameters, validate_case, Diagnostic, NetworkCase, ZeroImpedance};
use crate::conic::{ConeKind, ConicProgram, LinExpr, PsdBlock, Sense};
use crate::partition::{trivial_partition, Partition, FLOW_COMPONENTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("case fails validation: {0:?}")]
    InvalidCase(Vec<Diagnostic>),
    #[error("part {k} out of range for {parts} parts")]
    InvalidPart { k: usize, parts: usize },
    #[error(transparent)]
    ZeroImpedance(#[from] ZeroImpedance),
}

/// Positions of the W entries among model variables.
#[derive(Debug, Clone, PartialEq)]
pub struct WIndex {
    /// Bus ids, ascending: the part's buses plus their neighbours.
    pub bus_set: Vec<usize>,
    /// Variable of `Wʳᵢᵢ` per bus-set position.
    pub diag: Vec<usize>,
    /// `(a, b)` positions with `a < b` → variables of `(Wʳ_ab, Wⁱ_ab)`.
    pub pairs: BTreeMap<(usize, usize), (usize, usize)>,
}

impl WIndex {
    pub fn position(&self, bus: usize) -> Option<usize> {
        self.bus_set.binary_search(&bus).ok()
    }

    /// `(Wʳ_ab, Wⁱ_ab)` as expressions for any ordered pair of positions, if materialized.
    pub fn entry(&self, a: usize, b: usize) -> Option<(LinExpr, LinExpr)> {
        if a == b {
            return Some((LinExpr::var(self.diag[a]), LinExpr::new()));
        }
        let (lo, hi, sign) = if a < b { (a, b, 1.0) } else { (b, a, -1.0) };
        self.pairs
            .get(&(lo, hi))
            .map(|&(r, i)| (LinExpr::var(r), LinExpr::from_terms([(i, sign)])))
    }
}

/// One component of one cut-line flow, as seen by a part.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingSlot {
    /// Position of the cut line in [`Partition::cut_lines`].
    pub cut: usize,
    pub branch: usize,
    /// Index into [`FLOW_COMPONENTS`].
    pub component: usize,
    pub var: usize,
    /// +1 when this part owns the line (holds its from-bus).
    pub sign: f64,
}

/// Flow variables `[pf, pt, qf, qt]` of one line.
pub type FlowVars = [usize; 4];

#[derive(Debug, Clone, PartialEq)]
pub struct SubModel {
    pub part: usize,
    pub interior: Vec<usize>,
    pub windex: WIndex,
    /// Linear rows, bounds, thermal and cost cones; no relaxation cone yet.
    pub program: ConicProgram,
    /// Branch index → flow variables.
    pub lines: BTreeMap<usize, FlowVars>,
    /// Generator index → `(pg, qg)` variables.
    pub generators: BTreeMap<usize, (usize, usize)>,
    /// Sorted by cut line, then component.
    pub coupling_slots: Vec<CouplingSlot>,
}

impl SubModel {
    pub fn is_interior(&self, bus: usize) -> bool {
        self.interior.binary_search(&bus).is_ok()
    }

    pub fn dump(&self) -> String {
        let mut s = String::new();
        writeln!(s, "part {}", self.part + 1).unwrap();
        writeln!(s, "interior {:?}", self.interior).unwrap();
        writeln!(s, "bus_set {:?}", self.windex.bus_set).unwrap();
        writeln!(s, "coupling {}", self.coupling_slots.len()).unwrap();
        for c in &self.coupling_slots {
            let name = &self.program.var_names[c.var];
            writeln!(s, "  cut {} branch {} {} {} sign {:+}", c.cut, c.branch, FLOW_COMPONENTS[c.component], name, c.sign)
                .unwrap();
        }
        s.push_str(&self.program.dump());
        s
    }
}

/// Builds the feasible set of part `k`: balance rows at its buses, flow, angle and
/// thermal constraints on every line touching it, voltage bounds on the whole bus set.
pub fn build_submodel(case: &NetworkCase, partition: &Partition, k: usize) -> Result<SubModel, ModelError> {
    let diags = validate_case(case);
    if !diags.is_empty() {
        return Err(ModelError::InvalidCase(diags));
    }
    if k >= partition.num_parts() {
        return Err(ModelError::InvalidPart { k, parts: partition.num_parts() });
    }
    let interior = partition.part_buses(k);
    let line_ids = partition.part_lines(k).to_vec();

    let mut bus_set = interior.clone();
    for &l in &line_ids {
        bus_set.push(case.branches[l].from_bus);
        bus_set.push(case.branches[l].to_bus);
    }
    bus_set.sort_unstable();
    bus_set.dedup();

    let mut p = ConicProgram::new();
    let diag: Vec<usize> = bus_set
        .iter()
        .map(|&b| {
            let bus = case.bus(b).expect("validated");
            p.add_var(format!("Wr_{b}_{b}"), bus.vmin * bus.vmin, bus.vmax * bus.vmax)
        })
        .collect();
    let pos = |b: usize| bus_set.binary_search(&b).expect("bus in set");
    let mut pair_keys: Vec<(usize, usize)> = line_ids
        .iter()
        .map(|&l| {
            let (a, b) = (pos(case.branches[l].from_bus), pos(case.branches[l].to_bus));
            (a.min(b), a.max(b))
        })
        .filter(|(a, b)| a != b)
        .collect();
    pair_keys.sort_unstable();
    pair_keys.dedup();
    let mut pairs = BTreeMap::new();
    for (a, b) in pair_keys {
        let (ba, bb) = (bus_set[a], bus_set[b]);
        let r = p.add_var(format!("Wr_{ba}_{bb}"), 0.0, f64::INFINITY);
        let i = p.free_var(format!("Wi_{ba}_{bb}"));
        pairs.insert((a, b), (r, i));
    }
    let windex = WIndex { bus_set: bus_set.clone(), diag, pairs };

    let mut lines = BTreeMap::new();
    for &l in &line_ids {
        let br = &case.branches[l];
        let y = admittance_parameters(br)?;
        let vars: FlowVars = FLOW_COMPONENTS.map(|c| p.free_var(format!("{c}_{l}")));
        let [pf, pt, qf, qt] = vars;
        let (a, b) = (pos(br.from_bus), pos(br.to_bus));
        let wii = LinExpr::var(windex.diag[a]);
        let wjj = LinExpr::var(windex.diag[b]);
        let (re, im) = windex.entry(a, b).expect("line pair materialized");
        let lin = |terms: &[(&LinExpr, f64)], flow: usize| {
            let mut e = LinExpr::from_terms([(flow, 1.0)]);
            for (x, c) in terms {
                for &(v, w) in &x.terms {
                    e.add(v, -c * w);
                }
            }
            e
        };
        let (gff, bff) = (y.y_ff.re, y.y_ff.im);
        let (gft, bft) = (y.y_ft.re, y.y_ft.im);
        let (gtf, btf) = (y.y_tf.re, y.y_tf.im);
        let (gtt, btt) = (y.y_tt.re, y.y_tt.im);
        p.add_row(format!("pf_def_{l}"), lin(&[(&wii, gff), (&re, gft), (&im, bft)], pf), Sense::Eq, 0.0);
        p.add_row(format!("qf_def_{l}"), lin(&[(&wii, -bff), (&im, gft), (&re, -bft)], qf), Sense::Eq, 0.0);
        p.add_row(format!("pt_def_{l}"), lin(&[(&wjj, gtt), (&re, gtf), (&im, -btf)], pt), Sense::Eq, 0.0);
        p.add_row(format!("qt_def_{l}"), lin(&[(&wjj, -btt), (&im, -gtf), (&re, -btf)], qt), Sense::Eq, 0.0);

        if a != b {
            let angle = |t: f64| {
                let mut e = im.clone();
                for &(v, w) in &re.terms {
                    e.add(v, -t * w);
                }
                e
            };
            p.add_row(format!("ang_lo_{l}"), angle(br.angmin.tan()), Sense::Ge, 0.0);
            p.add_row(format!("ang_hi_{l}"), angle(br.angmax.tan()), Sense::Le, 0.0);
        }
        if br.s_max > 0.0 {
            let head = LinExpr::constant(br.s_max);
            p.add_soc(format!("thermal_f_{l}"), ConeKind::Standard, vec![head.clone(), LinExpr::var(pf), LinExpr::var(qf)]);
            p.add_soc(format!("thermal_t_{l}"), ConeKind::Standard, vec![head, LinExpr::var(pt), LinExpr::var(qt)]);
        }
        lines.insert(l, vars);
    }

    let mut generators = BTreeMap::new();
    let mut objective = LinExpr::new();
    for g in case.active_generators() {
        let gen = &case.generators[g];
        if interior.binary_search(&gen.bus).is_err() {
            continue;
        }
        let pg = p.add_var(format!("pg_{g}"), gen.pmin, gen.pmax);
        let qg = p.add_var(format!("qg_{g}"), gen.qmin, gen.qmax);
        let c = gen.cost;
        if c.c2 > 0.0 {
            // epigraph of pg² rather than of the whole cost: keeps the variable O(1) in
            // per-unit, where a $/h-sized value would loosen the solver's relative residuals
            let t = p.free_var(format!("pgsq_{g}"));
            p.add_soc(
                format!("cost_epi_{g}"),
                ConeKind::Rotated,
                vec![LinExpr::var(t), LinExpr::constant(1.0), LinExpr::var(pg)],
            );
            objective.add(t, c.c2);
        }
        objective.add(pg, c.c1);
        objective.constant += c.c0;
        generators.insert(g, (pg, qg));
    }
    p.objective = objective;

    for &b in &interior {
        let bus = case.bus(b).expect("validated");
        let w = windex.diag[pos(b)];
        let mut pe = LinExpr::new();
        let mut qe = LinExpr::new();
        for (&g, &(pg, qg)) in &generators {
            if case.generators[g].bus == b {
                pe.add(pg, 1.0);
                qe.add(qg, 1.0);
            }
        }
        pe.add(w, -bus.gs);
        qe.add(w, bus.bs);
        for (&l, &[pf, pt, qf, qt]) in &lines {
            let br = &case.branches[l];
            if br.from_bus == b {
                pe.add(pf, -1.0);
                qe.add(qf, -1.0);
            }
            if br.to_bus == b {
                pe.add(pt, -1.0);
                qe.add(qt, -1.0);
            }
        }
        p.add_row(format!("p_bal_{b}"), pe, Sense::Eq, bus.pd);
        p.add_row(format!("q_bal_{b}"), qe, Sense::Eq, bus.qd);
    }

    let mut coupling_slots = Vec::new();
    for (cut, c) in partition.part_cuts(k) {
        let sign = if c.plus == k { 1.0 } else { -1.0 };
        for (component, &var) in lines[&c.branch].iter().enumerate() {
            coupling_slots.push(CouplingSlot { cut, branch: c.branch, component, var, sign });
        }
    }

    Ok(SubModel { part: k, interior, windex, program: p, lines, generators, coupling_slots })
}

/// The whole network as a single part.
pub fn build_fullmodel(case: &NetworkCase) -> Result<SubModel, ModelError> {
    build_submodel(case, &trivial_partition(case), 0)
}

/// Appends `[[Wʳ, −Wⁱ], [Wⁱ, Wʳ]]` over the bus set to `program` and returns it.
/// Bus pairs without a line get fresh variables that appear only in this block.
pub fn real_embedding(windex: &WIndex, program: &mut ConicProgram) -> PsdBlock {
    let n = windex.bus_set.len();
    let mut full = windex.clone();
    for a in 0..n {
        for b in a + 1..n {
            if let std::collections::btree_map::Entry::Vacant(e) = full.pairs.entry((a, b)) {
                let (ba, bb) = (windex.bus_set[a], windex.bus_set[b]);
                let r = program.free_var(format!("Wr_{ba}_{bb}"));
                let i = program.free_var(format!("Wi_{ba}_{bb}"));
                e.insert((r, i));
            }
        }
    }
    let mut blk = PsdBlock::zeros("W_psd", 2 * n);
    for a in 0..n {
        for b in 0..=a {
            let (re, im) = full.entry(a, b).expect("complete index");
            *blk.entry_mut(a, b) = re.clone();
            *blk.entry_mut(a + n, b + n) = re;
            *blk.entry_mut(a + n, b) = im.clone();
            if a != b {
                // lower-left block is Wⁱ, so (b + n, a) holds Wⁱ_ba = −Wⁱ_ab
                let (_, im_ba) = full.entry(b, a).unwrap();
                *blk.entry_mut(b + n, a) = im_ba;
            }
        }
    }
    blk
}

/// Base model plus per-pair rotated cones `(Wʳᵢⱼ)² + (Wⁱᵢⱼ)² ≤ Wʳᵢᵢ·Wʳⱼⱼ`.
pub fn soc_program(model: &SubModel) -> ConicProgram {
    let mut p = model.program.clone();
    for (&(a, b), &(r, i)) in &model.windex.pairs {
        let (ba, bb) = (model.windex.bus_set[a], model.windex.bus_set[b]);
        p.add_soc(
            format!("soc_{ba}_{bb}"),
            ConeKind::Rotated,
            vec![
                LinExpr::var(model.windex.diag[a]),
                LinExpr::var(model.windex.diag[b]),
                LinExpr::var(r),
                LinExpr::var(i),
            ],
        );
    }
    p
}

/// Base model plus the PSD constraint on the real embedding.
pub fn sdp_program(model: &SubModel) -> ConicProgram {
    let mut p = model.program.clone();
    let blk = real_embedding(&model.windex, &mut p);
    p.add_psd(blk);
    p
}

/// Variable values realizing the operating point `voltages` (bus id → phasor) in `model`,
/// with flows computed from the phasors and generator outputs taken from `dispatch`
/// (generator index → (pg, qg)). Cost epigraph variables are set to their cost.
pub fn point_from_phasors(
    case: &NetworkCase,
    model: &SubModel,
    program: &ConicProgram,
    voltages: &BTreeMap<usize, Complex64>,
    dispatch: &BTreeMap<usize, (f64, f64)>,
) -> Vec<f64> {
    let mut x = vec![0.0; program.n_vars()];
    let w = |a: usize, b: usize| voltages[&a] * voltages[&b].conj();
    let set = &model.windex.bus_set;
    for (pos, &v) in model.windex.diag.iter().enumerate() {
        x[v] = w(set[pos], set[pos]).re;
    }
    for (j, name) in program.var_names.iter().enumerate() {
        let mut it = name.split('_');
        let tag = it.next();
        if matches!(tag, Some("Wr") | Some("Wi")) {
            let a: usize = it.next().unwrap().parse().unwrap();
            let b: usize = it.next().unwrap().parse().unwrap();
            let z = w(a, b);
            x[j] = if tag == Some("Wr") { z.re } else { z.im };
        }
    }
    for (&l, vars) in &model.lines {
        let br = &case.branches[l];
        let y = admittance_parameters(br).unwrap();
        let (vf, vt) = (voltages[&br.from_bus], voltages[&br.to_bus]);
        let sf = vf * (y.y_ff * vf + y.y_ft * vt).conj();
        let st = vt * (y.y_tf * vf + y.y_tt * vt).conj();
        let [pf, pt, qf, qt] = *vars;
        x[pf] = sf.re;
        x[qf] = sf.im;
        x[pt] = st.re;
        x[qt] = st.im;
    }
    for (&g, &(pg, qg)) in &model.generators {
        let (pv, qv) = dispatch[&g];
        x[pg] = pv;
        x[qg] = qv;
    }
    for (j, name) in program.var_names.iter().enumerate() {
        if let Some(g) = name.strip_prefix("pgsq_") {
            let g: usize = g.parse().unwrap();
            x[j] = dispatch[&g].0.powi(2);
        }
    }
    x
}
