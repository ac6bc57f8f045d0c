//! Scalar Burgers profiles `X̃S + Γ S ∂_Θ S = 0` of non-resonant modes.

use std::sync::Arc;

use num_complex::Complex64;

use super::field::ProfileField;
use super::grid::{cutoff_beta, SlowGrid};
use super::transport::{MarchSettings, MarchStats, Marcher, Source, ThetaProducts, Transport};
use crate::error::{Error, Result};
use crate::lattice_resonance::ModeKey;

type C = Complex64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub picard_tol: f64,
    pub max_iter: usize,
    pub cfl: f64,
    /// Forces the number of marching substeps per `dx`.
    pub substeps: Option<usize>,
    /// Group velocity bound used by the cutoff `β_T` and the guards.
    pub vstar: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            picard_tol: 1e-10,
            max_iter: 50,
            cfl: 1.0,
            substeps: None,
            vstar: 2.0,
        }
    }
}

/// Substeps honouring `h ≤ cfl · min|∂_ξτ| · dt`.
pub fn march_settings(grid: &SlowGrid, transports: &[Transport], opts: &SolverOptions) -> Result<MarchSettings> {
    let min_speed = transports.iter().map(Transport::speed).fold(f64::INFINITY, f64::min);
    let substeps = match opts.substeps {
        Some(n) => {
            grid.check_substeps(n, min_speed, opts.cfl)?;
            n
        }
        None => grid.substeps(min_speed, opts.cfl),
    };
    Ok(MarchSettings {
        substeps,
        tol: opts.picard_tol,
        max_iter: opts.max_iter,
    })
}

/// Guard value `Λ · max|σ| · |Γ| · (𝒱*T − x_d)_+`.
pub fn shock_indicator(bound: usize, max_sigma: f64, gamma: f64, vstar: f64, t_final: f64, x: f64) -> f64 {
    bound as f64 * max_sigma * gamma.abs() * (vstar * t_final - x).max(0.0)
}

pub const SHOCK_LIMIT: f64 = 0.5;

struct BurgersSource<'a, B: Fn(f64) -> f64> {
    products: &'a ThetaProducts,
    gamma: f64,
    bound: usize,
    plane: usize,
    beta: B,
    buf: Vec<C>,
    a: Vec<C>,
    b: Vec<C>,
    sa: Vec<C>,
    sb: Vec<C>,
}

impl<B: Fn(f64) -> f64> Source for BurgersSource<'_, B> {
    fn eval(&mut self, mid: &[C], x: f64, out: &mut [C]) -> Result<()> {
        let coef = -self.gamma * (self.beta)(x);
        if coef == 0.0 {
            return Ok(());
        }
        let (nb, plane) = (self.bound, self.plane);
        let mut p = 0;
        while p < plane {
            let q = (p + 1).min(plane - 1);
            let mut active = false;
            for l in 0..nb {
                self.a[l] = mid[l * plane + p];
                self.b[l] = if q != p { mid[l * plane + q] } else { C::new(0.0, 0.0) };
                active |= self.a[l] != C::new(0.0, 0.0) || self.b[l] != C::new(0.0, 0.0);
            }
            if !active {
                p += 2;
                continue;
            }
            self.products
                .square_pair(&self.a, &self.b, &mut self.sa, &mut self.sb, &mut self.buf);
            for l in 0..nb {
                // Γ S ∂_Θ S = (Γ/2) ∂_Θ (S²)
                let d = C::new(0.0, 0.5 * (l + 1) as f64 * coef);
                out[l * plane + p] = d * self.sa[l];
                if q != p {
                    out[l * plane + q] = d * self.sb[l];
                }
            }
            p += 2;
        }
        Ok(())
    }
}

/// Marches the Burgers profile of `mode` from the boundary harmonics `h`
/// (layout `[λ−1][t][y]`, `λ = 1..=bound`) and hands every physical slab to
/// `observer`.
#[allow(clippy::too_many_arguments)]
pub fn solve_burgers_mode_with(
    mode: &ModeKey,
    gamma_self: f64,
    h: &[C],
    grid: &SlowGrid,
    bound: usize,
    opts: &SolverOptions,
    mut observer: impl FnMut(usize, &[C]) -> Result<()>,
) -> Result<MarchStats> {
    if mode.dxitau >= 0.0 {
        return Err(Error::ParameterOutOfRange(
            "Burgers profiles need an incoming mode".into(),
        ));
    }
    let tr = Transport::of(mode);
    let settings = march_settings(grid, &[tr], opts)?;
    let marcher = Marcher::new(*grid, vec![tr], bound, settings);
    let products = ThetaProducts::new(bound);
    let plane = grid.plane();
    let mut source = BurgersSource {
        buf: vec![C::new(0.0, 0.0); products.size()],
        products: &products,
        gamma: gamma_self,
        bound,
        plane,
        beta: cutoff_beta(grid.t_final, opts.vstar),
        a: vec![C::new(0.0, 0.0); bound],
        b: vec![C::new(0.0, 0.0); bound],
        sa: vec![C::new(0.0, 0.0); bound],
        sb: vec![C::new(0.0, 0.0); bound],
    };
    let guard = |i: usize, slab: &[C]| -> Result<()> {
        let max = slab.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let value = shock_indicator(bound, max, gamma_self, opts.vstar, grid.t_final, grid.x(i));
        if value > SHOCK_LIMIT {
            return Err(Error::ShockProximity {
                value,
                limit: SHOCK_LIMIT,
            });
        }
        Ok(())
    };
    let src: Option<&mut dyn Source> = if gamma_self == 0.0 { None } else { Some(&mut source) };
    marcher.march(h, src, |i, slab| {
        guard(i, slab)?;
        observer(i, slab)
    })
}

/// Burgers profile stored on the whole grid.
pub fn solve_burgers_mode(
    mode: &Arc<ModeKey>,
    gamma_self: f64,
    h: &[C],
    grid: &SlowGrid,
    bound: usize,
    opts: &SolverOptions,
) -> Result<ProfileField> {
    let mut field = ProfileField::real_zeros(vec![mode.clone()], bound, *grid);
    solve_burgers_mode_with(mode, gamma_self, h, grid, bound, opts, |i, slab| {
        field.slab_mut(i).copy_from_slice(slab);
        Ok(())
    })?;
    Ok(field)
}

/// `Σ_{λ₁+λ₂=λ} i λ₂ Γ ω_{λ₁} σ_{λ₂}` by direct convolution for `λ = 0..=bound`
/// from positive harmonics of real signals; entry 0 is the zero mode.
pub fn self_interaction_term(gamma: f64, omega: &[C], sigma: &[C]) -> Vec<C> {
    let nb = omega.len() as i64;
    let at = |v: &[C], l: i64| -> C {
        match l {
            0 => C::new(0.0, 0.0),
            l if l > 0 => v[(l - 1) as usize],
            l => v[(-l - 1) as usize].conj(),
        }
    };
    (0..=nb)
        .map(|lambda| {
            let mut acc = C::new(0.0, 0.0);
            for a in -nb..=nb {
                let b = lambda - a;
                if a == 0 || b == 0 || b.abs() > nb {
                    continue;
                }
                acc += C::new(0.0, b as f64 * gamma) * at(omega, a) * at(sigma, b);
            }
            acc
        })
        .collect()
}
