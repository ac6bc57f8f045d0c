//! Superposition `u^app(z) = ε U_1(z, z'·ζ/ε, x_d/ε)` sampled on the slow
//! grid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Serialize;

use super::evanescent::EvanescentField;
use super::field::ProfileField;
use super::grid::SlowGrid;
use super::traces::BoundaryForcing;
use crate::boundary_spectral::evanescent_propagator;
use crate::error::{Error, Result};
use crate::linalg::CVector;

type C = Complex64;

/// Real samples laid out `[x_d][t][y][component]`.
#[derive(Debug, Clone, Serialize)]
pub struct SampledProfile {
    pub grid: SlowGrid,
    pub n: usize,
    pub epsilon: f64,
    pub values: Vec<f64>,
    /// Largest imaginary part met while summing conjugate pairs.
    pub max_imag: f64,
}

impl SampledProfile {
    pub fn at(&self, i: usize, j: usize, k: usize) -> &[f64] {
        let off = ((i * self.grid.nt + j) * self.grid.ny + k) * self.n;
        &self.values[off..off + self.n]
    }
}

/// Largest phase increment between neighbouring samples.
fn phase_step(tangential: &[f64], xi: f64, lambda: u64, grid: &SlowGrid, epsilon: f64) -> f64 {
    let l = lambda as f64;
    let st = tangential[0].abs() * grid.dt;
    let sy = tangential.get(1).map_or(0.0, |e| e.abs() * grid.dy);
    l * st.max(sy).max(xi.abs() * grid.dx) / epsilon
}

/// Evaluates `ε(Σ σ_λ e^{iλφ} E + U^ev)` at every grid point, with phases
/// `φ = (n_0·ζ)·z'/ε + ξ_0 x_d/ε`.
pub fn assemble_leading_profile(
    oscillating: &[&ProfileField],
    evanescent: Option<&EvanescentField>,
    grid: &SlowGrid,
    n: usize,
    epsilon: f64,
) -> Result<SampledProfile> {
    if !(epsilon > 0.0) {
        return Err(Error::ParameterOutOfRange("epsilon must be positive".into()));
    }
    if oscillating.iter().any(|f| f.grid != *grid) {
        return Err(Error::GridMismatch("profile fields live on different grids".into()));
    }
    let mut step: f64 = 0.0;
    for f in oscillating {
        let lmax = f.harmonics.iter().map(|l| l.unsigned_abs()).max().unwrap_or(0);
        for m in &f.modes {
            step = step.max(phase_step(&m.dir.zeta, m.xi0, lmax, grid, epsilon));
        }
    }
    if let Some(ev) = evanescent {
        for c in &ev.components {
            let zeta = &c.decomposition.zeta;
            step = step.max(phase_step(zeta, 0.0, c.lambda.unsigned_abs(), grid, epsilon));
        }
    }
    if step > PI {
        return Err(Error::EpsilonTooSmallForGrid { epsilon, step });
    }

    let plane = grid.plane();
    let mut acc = vec![C::new(0.0, 0.0); grid.nx * plane * n];
    for f in oscillating {
        if f.modes.iter().any(|m| m.e.len() != n) {
            return Err(Error::DimensionMismatch("polarization length differs from N".into()));
        }
        for (mi, m) in f.modes.iter().enumerate() {
            let lambdas: Vec<i64> = if f.real {
                f.harmonics.iter().flat_map(|&l| [l, -l]).collect()
            } else {
                f.harmonics.clone()
            };
            for &l in &lambdas {
                let lf = l as f64 / epsilon;
                for i in 0..grid.nx {
                    for j in 0..grid.nt {
                        for k in 0..grid.ny {
                            let s = f.harmonic(mi, l, j, k, i);
                            if s == C::new(0.0, 0.0) {
                                continue;
                            }
                            let phi = lf
                                * (m.dir.zeta[0] * grid.t(j)
                                    + m.dir.zeta.get(1).map_or(0.0, |e| e * grid.y(k))
                                    + m.xi0 * grid.x(i));
                            let a = s * C::from_polar(1.0, phi);
                            let off = ((i * grid.nt + j) * grid.ny + k) * n;
                            for (o, e) in acc[off..off + n].iter_mut().zip(m.e.iter()) {
                                *o += a * e;
                            }
                        }
                    }
                }
            }
        }
    }
    if let Some(ev) = evanescent {
        for c in &ev.components {
            let zeta = &c.decomposition.zeta;
            let lf = c.lambda as f64 / epsilon;
            let prof = c.profile.sample(grid);
            for i in 0..grid.nx {
                let chi = ev.chi(grid.x(i));
                if chi == 0.0 {
                    continue;
                }
                let v: CVector = evanescent_propagator(&c.decomposition, lf * grid.x(i))? * &c.trace;
                for j in 0..grid.nt {
                    for k in 0..grid.ny {
                        let w = chi * prof[j * grid.ny + k];
                        if w == 0.0 {
                            continue;
                        }
                        let phi = lf * (zeta[0] * grid.t(j) + zeta.get(1).map_or(0.0, |e| e * grid.y(k)));
                        let a = C::from_polar(w, phi);
                        let off = ((i * grid.nt + j) * grid.ny + k) * n;
                        for (o, e) in acc[off..off + n].iter_mut().zip(v.iter()) {
                            let z = a * e;
                            *o += z + z.conj();
                        }
                    }
                }
            }
        }
    }
    let max_imag = epsilon * acc.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    Ok(SampledProfile {
        grid: *grid,
        n,
        epsilon,
        values: acc.iter().map(|z| epsilon * z.re).collect(),
        max_imag,
    })
}

/// `max |B u^app(·, 0) − ε g^ε| / ε` on the boundary samples, with
/// `g^ε(z') = Σ_n G_n(z') e^{i n·ζ·z'/ε}`.
pub fn boundary_residual(
    profile: &SampledProfile,
    b: &DMatrix<f64>,
    forcing: &BoundaryForcing,
    zetas: &[nalgebra::DVector<f64>],
) -> Result<f64> {
    let g = &profile.grid;
    if b.ncols() != profile.n {
        return Err(Error::DimensionMismatch("B does not act on the profile".into()));
    }
    let eps = profile.epsilon;
    let mut worst: f64 = 0.0;
    for j in 0..g.nt {
        for k in 0..g.ny {
            let (t, y) = (g.t(j), g.y(k));
            let mut data = vec![0.0; b.nrows()];
            for term in &forcing.terms {
                let mut zeta = [0.0; 2];
                for (c, z) in term.n.iter().zip(zetas) {
                    zeta[0] += *c as f64 * z[0];
                    zeta[1] += *c as f64 * z.get(1).copied().unwrap_or(0.0);
                }
                let e = C::from_polar(term.profile.eval(t, y), (zeta[0] * t + zeta[1] * y) / eps);
                for (d, a) in data.iter_mut().zip(&term.amplitude) {
                    *d += 2.0 * (a * e).re;
                }
            }
            let u = profile.at(0, j, k);
            for (r, d) in data.iter().enumerate() {
                let bu: f64 = (0..profile.n).map(|c| b[(r, c)] * u[c]).sum();
                worst = worst.max((bu - eps * d).abs() / eps);
            }
        }
    }
    Ok(worst)
}
