//! Evanescent part `χ(x_d) e^{ψ_d 𝒜(n·ζ)} Π^e_−(n·ζ) w_n` of the leading
//! profile.

use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::traces::{BoundaryTraces, ForcingProfile};
use crate::boundary_spectral::{evanescent_propagator, StableDecomposition};
use crate::error::{Error, Result};
use crate::linalg::CVector;

type C = Complex64;

#[derive(Debug, Clone, Serialize)]
pub struct EvanescentComponent {
    pub n0: Vec<i64>,
    pub lambda: i64,
    pub profile: ForcingProfile,
    /// `Π^e_− w_n`, the double trace at `x_d = ψ_d = 0`.
    pub trace: CVector,
    /// `e^{λψ 𝒜(n_0·ζ)} Π^e_− w_n` at every sample of `psi`.
    pub values: Vec<CVector>,
    /// `λ · min Im ξ` over the stable elliptic roots.
    pub decay: Option<f64>,
    #[serde(skip)]
    pub decomposition: Arc<StableDecomposition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvanescentField {
    pub chi_support: f64,
    pub psi: Vec<f64>,
    pub components: Vec<EvanescentComponent>,
}

/// Direct evaluation of the evanescent profiles on the `ψ_d` samples.
pub fn assemble_evanescent(traces: &BoundaryTraces, chi_support: f64, psi: &[f64]) -> Result<EvanescentField> {
    if !(chi_support > 0.0) {
        return Err(Error::ParameterOutOfRange("χ support must be positive".into()));
    }
    if psi.iter().any(|p| !(*p >= 0.0)) {
        return Err(Error::ParameterOutOfRange("ψ_d samples must be nonnegative".into()));
    }
    let components = traces
        .components
        .iter()
        .map(|c| {
            let values = psi
                .iter()
                .map(|p| Ok(evanescent_propagator(&c.decomposition, c.lambda as f64 * p)? * &c.evanescent))
                .collect::<Result<Vec<_>>>()?;
            Ok(EvanescentComponent {
                n0: c.n0.clone(),
                lambda: c.lambda,
                profile: c.profile,
                trace: c.evanescent.clone(),
                values,
                decay: c.decomposition.decay_rate().map(|mu| mu * c.lambda as f64),
                decomposition: c.decomposition.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvanescentField {
        chi_support,
        psi: psi.to_vec(),
        components,
    })
}

fn smooth_part(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

impl EvanescentField {
    /// `C^∞` cutoff, 1 on `[0, s/2]` and 0 on `[s, ∞)`.
    pub fn chi(&self, x: f64) -> f64 {
        let s = (2.0 * x / self.chi_support - 1.0).max(0.0);
        let (a, b) = (smooth_part(1.0 - s), smooth_part(s));
        a / (a + b)
    }

    /// Component `c` at an arbitrary point.
    pub fn evaluate(&self, c: usize, t: f64, y: f64, x: f64, psi: f64) -> Result<CVector> {
        let comp = &self.components[c];
        let e = evanescent_propagator(&comp.decomposition, comp.lambda as f64 * psi)? * &comp.trace;
        Ok(e * C::new(self.chi(x) * comp.profile.eval(t, y), 0.0))
    }

    pub fn decay_fits(&self) -> Vec<DecayFit> {
        self.components.iter().map(|c| decay_fit(c, &self.psi)).collect()
    }
}

/// Exponential rate fitted to `‖U^ev(ψ)‖` against the smallest elliptic decay.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayFit {
    pub n0: Vec<i64>,
    pub lambda: i64,
    pub fitted: f64,
    pub predicted: Option<f64>,
    pub pass: bool,
}

fn decay_fit(c: &EvanescentComponent, psi: &[f64]) -> DecayFit {
    let pts: Vec<(f64, f64)> = psi
        .iter()
        .zip(&c.values)
        .filter(|(_, v)| v.norm() > 1e-300)
        .map(|(p, v)| (*p, v.norm().ln()))
        .collect();
    let fitted = if pts.len() >= 2 {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        if sxx > 0.0 {
            -sxy / sxx
        } else {
            f64::NAN
        }
    } else {
        f64::NAN
    };
    let pass = match c.decay {
        Some(mu) if c.trace.norm() > 0.0 => fitted >= 0.95 * mu,
        _ => true,
    };
    DecayFit {
        n0: c.n0.clone(),
        lambda: c.lambda,
        fitted,
        predicted: c.decay,
        pass,
    }
}
