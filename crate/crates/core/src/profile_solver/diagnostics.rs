//! Empirical constant of the `L²` estimate
//! `d/dx_d ⟨U,U⟩ ≤ C⟨F,F⟩ + C(1 + ‖V‖)⟨U,U⟩`.

use serde::Serialize;

use super::field::{incoming_inner_product, ProfileField};
use crate::error::{Error, Result};

/// Increases of the energy below this fraction of its maximum are noise.
pub const ENERGY_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    /// `⟨U,U⟩` per slab.
    pub energy: Vec<f64>,
    /// Finite-difference `d/dx_d ⟨U,U⟩`.
    pub derivative: Vec<f64>,
    /// `⟨F,F⟩` per slab.
    pub forcing: Vec<f64>,
    /// `sup_{t,y} Σ |V_{mode,λ}|` over both signs of `λ`, per slab.
    pub coefficient_norm: Vec<f64>,
    /// Smallest per-slab constant satisfying the estimate.
    pub constant: f64,
    pub pass: bool,
}

fn sup_norm(v: &ProfileField, i: usize) -> f64 {
    let plane = v.grid.plane();
    let pairs = if v.real { 2.0 } else { 1.0 };
    let slab = v.slab(i);
    (0..plane)
        .map(|p| pairs * slab.iter().skip(p).step_by(plane).map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn energy_diagnostic(u: &ProfileField, v: Option<&ProfileField>, f: Option<&ProfileField>) -> Result<EnergyReport> {
    for other in [v, f].into_iter().flatten() {
        if other.grid != u.grid {
            return Err(Error::GridMismatch("energy diagnostic needs a common grid".into()));
        }
    }
    let g = &u.grid;
    let energy = (0..g.nx)
        .map(|i| incoming_inner_product(u, u, i))
        .collect::<Result<Vec<_>>>()?;
    let forcing = match f {
        Some(f) => (0..g.nx)
            .map(|i| incoming_inner_product(f, f, i))
            .collect::<Result<Vec<_>>>()?,
        None => vec![0.0; g.nx],
    };
    let coefficient_norm: Vec<f64> = match v {
        Some(v) => (0..g.nx).map(|i| sup_norm(v, i)).collect(),
        None => vec![0.0; g.nx],
    };
    let derivative: Vec<f64> = (0..g.nx)
        .map(|i| match i {
            0 => (energy[1] - energy[0]) / g.dx,
            i if i == g.nx - 1 => (energy[i] - energy[i - 1]) / g.dx,
            i => (energy[i + 1] - energy[i - 1]) / (2.0 * g.dx),
        })
        .collect();
    let scale = energy.iter().chain(&forcing).copied().fold(0.0, f64::max);
    let floor = ENERGY_FLOOR * scale;
    let mut constant: f64 = 0.0;
    for i in 0..g.nx {
        let excess = derivative[i] - floor;
        if excess <= 0.0 {
            continue;
        }
        let denom = forcing[i] + (1.0 + coefficient_norm[i]) * energy[i];
        constant = constant.max(if denom > 0.0 { excess / denom } else { f64::INFINITY });
    }
    Ok(EnergyReport {
        pass: constant.is_finite(),
        energy,
        derivative,
        forcing,
        coefficient_norm,
        constant,
    })
}

/// Constants of a refinement sequence agree with the finest one within
/// `rel`; constants all below `abs` count as agreeing.
pub fn refinement_stable(constants: &[f64], rel: f64, abs: f64) -> bool {
    let Some(last) = constants.last() else {
        return true;
    };
    if constants.iter().all(|c| c.abs() <= abs) {
        return true;
    }
    constants
        .iter()
        .all(|c| c.is_finite() && (c - last).abs() <= rel * last.abs())
}
