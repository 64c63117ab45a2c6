use num_complex::Complex64;
use thiserror::Error;

use super::Branch;

/// Two-port admittances of the branch π-model, including tap and phase shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("branch {from_bus}-{to_bus} has zero series impedance")]
pub struct ZeroImpedance {
    pub from_bus: usize,
    pub to_bus: usize,
}

pub fn admittance_parameters(branch: &Branch) -> Result<BranchAdmittance, ZeroImpedance> {
    let z = Complex64::new(branch.r, branch.x);
    if z.norm_sqr() == 0.0 {
        return Err(ZeroImpedance { from_bus: branch.from_bus, to_bus: branch.to_bus });
    }
    let y = z.inv();
    let charging = Complex64::new(0.0, branch.b_charge / 2.0);
    let t = Complex64::from_polar(branch.ratio(), branch.shift);
    Ok(BranchAdmittance {
        y_ff: (y + charging) / t.norm_sqr(),
        y_ft: -y / t.conj(),
        y_tf: -y / t,
        y_tt: y + charging,
    })
}
