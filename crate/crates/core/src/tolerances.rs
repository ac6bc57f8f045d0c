//! Numerical thresholds shared by the analysis modules.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Relative Frobenius tolerance for matrix identities.
    pub matrix: f64,
    /// `|det A_d| < singular * ‖A_d‖^N` counts as singular.
    pub singular: f64,
    /// Minimal relative eigenvalue gap for strict hyperbolicity.
    pub gap: f64,
    /// Imaginary parts of the interior spectrum above this (relative) are rejected.
    pub complex: f64,
    /// Relative distance to a branch below which a frequency is characteristic.
    pub characteristic: f64,
    /// `|∂_ξτ|` below this on the unit sphere is glancing.
    pub glancing: f64,
    /// Upper edge of the near-glancing band reported by diagnostics.
    pub near_glancing: f64,
    /// Relative imaginary part below which a boundary root is treated as real.
    pub real_root: f64,
    /// Relative distance below which boundary roots are clustered together.
    pub cluster: f64,
    /// Singular-value threshold when resolving generalized eigenspaces.
    pub defect: f64,
    /// Resonance residual threshold.
    pub resonance: f64,
    /// Lower bound on the Lopatinskii determinant.
    pub lopatinskii: f64,
    /// Finite-difference step for differentials.
    pub fd_step: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            matrix: 1e-10,
            singular: 1e-12,
            gap: 1e-8,
            complex: 1e-9,
            characteristic: 1e-9,
            glancing: 1e-8,
            near_glancing: 1e-5,
            real_root: 1e-9,
            cluster: 1e-7,
            defect: 1e-8,
            resonance: 1e-9,
            lopatinskii: 1e-3,
            fd_step: 1e-6,
        }
    }
}
