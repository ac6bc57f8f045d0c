//! Two-dimensional isentropic Euler equations in `(v, u_1, u_2)` variables
//! around the subsonic incoming state `V_0 = (v_0, 0, u_0)`, with the closed
//! forms used as oracles by the generic modules.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::system_model::{Coefficients, HyperbolicSystem};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EulerParams {
    pub v0: f64,
    pub u0: f64,
    pub c0: f64,
    /// Exponent of the sound-speed law `c(v) = c_0 (v_0/v)^κ`.
    pub kappa: f64,
    pub eta0: f64,
    pub delta: f64,
}

impl Default for EulerParams {
    fn default() -> Self {
        Self {
            v0: 1.0,
            u0: 3f64.sqrt() / 2.0,
            c0: 1.0,
            kappa: 1.0,
            eta0: 1.0,
            delta: 2f64.powf(1.0 / 7.0),
        }
    }
}

impl EulerParams {
    pub fn with_mach(mach: f64) -> Self {
        let base = Self::default();
        Self {
            u0: mach * base.c0,
            ..base
        }
    }

    pub fn mach(&self) -> f64 {
        self.u0 / self.c0
    }

    /// `c'(v_0) = −κ c_0 / v_0`.
    pub fn cprime0(&self) -> f64 {
        -self.kappa * self.c0 / self.v0
    }

    /// Slope `√(c_0² − u_0²)` of the glancing lines `|τ| = slope·|η|`.
    pub fn glancing_slope(&self) -> f64 {
        (self.c0 * self.c0 - self.u0 * self.u0).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::ParameterOutOfRange(what.to_string()));
        if !(self.v0 > 0.0) {
            return bad("v0 must be positive");
        }
        if !(self.c0 > 0.0) {
            return bad("c0 must be positive");
        }
        if !(self.u0 > 0.0 && self.u0 < self.c0) {
            return bad("need 0 < u0 < c0");
        }
        if !(self.delta > 1.0) {
            return bad("delta must exceed 1");
        }
        if !(self.eta0 > 0.0) {
            return bad("eta0 must be positive");
        }
        if !self.kappa.is_finite() {
            return bad("kappa must be finite");
        }
        Ok(())
    }

    /// Boundary frequencies `ζ¹ = (c_0η_0, η_0)` and `ζ^δ = (c_0δη_0, η_0)`.
    pub fn zetas(&self) -> Vec<DVector<f64>> {
        vec![
            DVector::from_vec(vec![self.c0 * self.eta0, self.eta0]),
            DVector::from_vec(vec![self.c0 * self.delta * self.eta0, self.eta0]),
        ]
    }

    /// `ζ_{p,q} = p ζ¹ + q ζ^δ`.
    pub fn zeta_pq(&self, p: i64, q: i64) -> [f64; 2] {
        let (p, q) = (p as f64, q as f64);
        [self.c0 * self.eta0 * (p + self.delta * q), self.eta0 * (p + q)]
    }

    pub fn boundary_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 3, &[0.0, self.v0, 0.0, -self.u0, 0.0, self.v0])
    }

    /// Friedrichs symmetrizer `S(V_0) = diag(c_0², v_0², v_0²)`.
    pub fn symmetrizer(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_vec(vec![
            self.c0 * self.c0,
            self.v0 * self.v0,
            self.v0 * self.v0,
        ]))
    }

    /// Generator `(v_0, 0, u_0)` of `ker B`.
    pub fn boundary_kernel(&self) -> DVector<f64> {
        DVector::from_vec(vec![self.v0, 0.0, self.u0])
    }
}

/// Coefficients `A_1(V_0 + u)`, `A_2(V_0 + u)`.
#[derive(Debug, Clone)]
pub struct EulerCoefficients {
    params: EulerParams,
}

impl EulerCoefficients {
    fn sound_speed(&self, v: f64) -> f64 {
        let p = &self.params;
        p.c0 * (p.v0 / v).powf(p.kappa)
    }
}

impl Coefficients for EulerCoefficients {
    fn matrix(&self, i: usize, u: &DVector<f64>) -> DMatrix<f64> {
        let p = &self.params;
        let v = p.v0 + u[0];
        let (u1, u2) = (u[1], p.u0 + u[2]);
        let c = self.sound_speed(v);
        let k = -c * c / v;
        match i {
            1 => DMatrix::from_row_slice(3, 3, &[u1, -v, 0.0, k, u1, 0.0, 0.0, 0.0, u1]),
            2 => DMatrix::from_row_slice(3, 3, &[u2, 0.0, -v, 0.0, u2, 0.0, k, 0.0, u2]),
            _ => panic!("Euler system has two space directions, got index {i}"),
        }
    }

    fn differential(&self, i: usize, w: &DVector<f64>) -> Option<DMatrix<f64>> {
        let p = &self.params;
        // d(−c²/v)/dv at v_0 for c = c_0 (v_0/v)^κ
        let dk = (2.0 * p.kappa + 1.0) * p.c0 * p.c0 / (p.v0 * p.v0) * w[0];
        let (wv, w1, w2) = (w[0], w[1], w[2]);
        Some(match i {
            1 => DMatrix::from_row_slice(3, 3, &[w1, -wv, 0.0, dk, w1, 0.0, 0.0, 0.0, w1]),
            2 => DMatrix::from_row_slice(3, 3, &[w2, 0.0, -wv, 0.0, w2, 0.0, dk, 0.0, w2]),
            _ => return None,
        })
    }
}

pub fn build_euler(params: &EulerParams) -> Result<HyperbolicSystem> {
    params.validate()?;
    build_euler_unchecked(params)
}

/// Same as [`build_euler`] without the subsonic range check; used to study
/// regimes where the structural assumptions fail.
pub fn build_euler_unchecked(params: &EulerParams) -> Result<HyperbolicSystem> {
    HyperbolicSystem::new(
        2,
        3,
        Arc::new(EulerCoefficients { params: *params }),
        params.boundary_matrix(),
        params.zetas(),
    )
}

/// `(τ_1, τ_2, τ_3)(η, ξ)`.
pub fn closed_form_tau(params: &EulerParams, eta: f64, xi: f64) -> Result<[f64; 3]> {
    if eta == 0.0 && xi == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let r = eta.hypot(xi);
    let base = -params.u0 * xi;
    Ok([base - params.c0 * r, base, base + params.c0 * r])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EulerRegion {
    /// All three roots real; carries the sign of `τ`.
    Hyperbolic {
        tau_positive: bool,
    },
    Glancing,
    Mixed,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerRoots {
    pub region: EulerRegion,
    pub xi: [Complex64; 3],
}

/// Roots `ξ_1, ξ_2, ξ_3` of the boundary symbol at `(τ, η)`.
pub fn closed_form_xi(params: &EulerParams, tau: f64, eta: f64) -> Result<EulerRoots> {
    if tau == 0.0 && eta == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let (u0, c0) = (params.u0, params.c0);
    let den = c0 * c0 - u0 * u0;
    let disc = tau * tau - eta * eta * den;
    let sgn = tau.signum();
    let xi3 = Complex64::new(-tau / u0, 0.0);
    let scale = tau * tau + eta * eta;
    let (region, xi1, xi2) = if disc.abs() <= 1e-14 * scale {
        let x = Complex64::new(tau * u0 / den, 0.0);
        (EulerRegion::Glancing, x, x)
    } else if disc > 0.0 {
        let s = sgn * c0 * disc.sqrt();
        (
            EulerRegion::Hyperbolic {
                tau_positive: tau > 0.0,
            },
            Complex64::new((tau * u0 + s) / den, 0.0),
            Complex64::new((tau * u0 - s) / den, 0.0),
        )
    } else {
        let s = sgn * c0 * (-disc).sqrt();
        (
            EulerRegion::Mixed,
            Complex64::new(tau * u0 / den, s / den),
            Complex64::new(tau * u0 / den, -s / den),
        )
    };
    Ok(EulerRoots {
        region,
        xi: [xi1, xi2, xi3],
    })
}

/// Ratios `(K_−, K_+)` with `p/q = K_±` the glancing lattice lines.
pub fn glancing_ratios(params: &EulerParams) -> (f64, f64) {
    let s = (1.0 - params.mach().powi(2)).sqrt();
    let d = params.delta;
    ((s - d) / (1.0 - s), (-s - d) / (1.0 + s))
}

/// Region of `ζ_{p,q}` from the position of `p/q` relative to `K_±`.
///
/// `ζ_{p,q}` is mixed exactly when `K_− < p/q < K_+`; outside that interval
/// it is hyperbolic with the sign of `τ` set by the side and the sign of `q`.
pub fn region_classify(params: &EulerParams, p: i64, q: i64) -> Result<EulerRegion> {
    if p == 0 && q == 0 {
        return Err(Error::ZeroFrequency);
    }
    if q == 0 {
        return Ok(EulerRegion::Hyperbolic { tau_positive: p > 0 });
    }
    let (km, kp) = glancing_ratios(params);
    let x = p as f64 / q as f64;
    for k in [km, kp] {
        if (x - k).abs() <= 4.0 * f64::EPSILON * k.abs().max(1.0) {
            return Err(Error::ExactGlancing { p, q });
        }
    }
    let upper = q > 0;
    Ok(if x > kp {
        EulerRegion::Hyperbolic { tau_positive: upper }
    } else if x < km {
        EulerRegion::Hyperbolic { tau_positive: !upper }
    } else {
        EulerRegion::Mixed
    })
}

/// Polarization `(0, ξ_3, −η)/|(η, ξ_3)|` of the `α_3` family at `ζ = (τ, η)`.
pub fn alpha3_polarization(params: &EulerParams, zeta: [f64; 2]) -> DVector<f64> {
    let xi = -zeta[0] / params.u0;
    let r = zeta[1].hypot(xi);
    DVector::from_vec(vec![0.0, xi / r, -zeta[1] / r])
}

/// Closed-form `α_3` interaction coefficient for boundary frequencies `a`
/// (carrying the polarization) and `b` (carrying the derivative).
pub fn euler_gamma_frequencies(params: &EulerParams, a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    let u0 = params.u0;
    let s = [a[0] + b[0], a[1] + b[1]];
    let norm = |z: [f64; 2]| (z[1] * z[1] + z[0] * z[0] / (u0 * u0)).sqrt();
    let (na, nb, ns) = (norm(a), norm(b), norm(s));
    if na == 0.0 || nb == 0.0 || ns == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let cross = a[0] * b[1] - b[0] * a[1];
    let second = s[0] * b[0] + u0 * u0 * s[1] * b[1];
    Ok(-cross * second / (u0.powi(4) * na * nb * ns))
}

/// `Γ((p,q),(r,s))` on the `α_3` family.
pub fn euler_gamma(params: &EulerParams, p: i64, q: i64, r: i64, s: i64) -> Result<f64> {
    euler_gamma_frequencies(params, params.zeta_pq(p, q), params.zeta_pq(r, s))
}

/// Distance from `ζ = (τ, η)` to the glancing lines `τ = ±√(c_0²−u_0²) η`.
pub fn glancing_line_distance(params: &EulerParams, zeta: [f64; 2]) -> f64 {
    let s = params.glancing_slope();
    let den = (1.0 + s * s).sqrt();
    ((zeta[0] - s * zeta[1]).abs() / den).min((zeta[0] + s * zeta[1]).abs() / den)
}

pub fn euler_glancing_distance(params: &EulerParams, p: i64, q: i64) -> f64 {
    glancing_line_distance(params, params.zeta_pq(p, q))
}
