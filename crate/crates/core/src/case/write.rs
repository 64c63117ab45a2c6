use std::fmt::Write;

use super::NetworkCase;

// Shortest round-trip float formatting.
fn num(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "Inf".into() } else { "-Inf".into() }
    } else {
        format!("{v:?}")
    }
}

pub(super) fn to_matpower(case: &NetworkCase) -> String {
    let base = case.base_mva;
    let mut s = String::new();
    let name = if case.name.is_empty() { "case" } else { &case.name };
    writeln!(s, "function mpc = {name}").unwrap();
    writeln!(s, "mpc.version = '2';").unwrap();
    writeln!(s, "mpc.baseMVA = {};", num(base)).unwrap();

    writeln!(s, "mpc.bus = [").unwrap();
    for b in &case.buses {
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{}\t1\t1.0\t0.0\t1.0\t1\t{}\t{};",
            b.id,
            b.bus_type.code(),
            num(b.pd * base),
            num(b.qd * base),
            num(b.gs * base),
            num(b.bs * base),
            num(b.vmax),
            num(b.vmin)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();

    writeln!(s, "mpc.gen = [").unwrap();
    for g in &case.generators {
        writeln!(
            s,
            "\t{}\t0.0\t0.0\t{}\t{}\t1.0\t{}\t{}\t{}\t{};",
            g.bus,
            num(g.qmax * base),
            num(g.qmin * base),
            num(base),
            u8::from(g.in_service),
            num(g.pmax * base),
            num(g.pmin * base)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();

    writeln!(s, "mpc.gencost = [").unwrap();
    for g in &case.generators {
        writeln!(
            s,
            "\t2\t0.0\t0.0\t3\t{}\t{}\t{};",
            num(g.cost.c2 / (base * base)),
            num(g.cost.c1 / base),
            num(g.cost.c0)
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();

    writeln!(s, "mpc.branch = [").unwrap();
    for br in &case.branches {
        let rate = num(br.s_max * base);
        writeln!(
            s,
            "\t{}\t{}\t{}\t{}\t{}\t{rate}\t{rate}\t{rate}\t{}\t{}\t{}\t{}\t{};",
            br.from_bus,
            br.to_bus,
            num(br.r),
            num(br.x),
            num(br.b_charge),
            num(br.tap),
            num(br.shift.to_degrees()),
            u8::from(br.in_service),
            num(br.angmin.to_degrees()),
            num(br.angmax.to_degrees())
        )
        .unwrap();
    }
    writeln!(s, "];").unwrap();
    s
}
