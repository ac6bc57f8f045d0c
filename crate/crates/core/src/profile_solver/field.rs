//! Storage of `σ_{mode, λ}(t, y, x_d)` and the incoming-mode inner product.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::grid::SlowGrid;
use crate::error::{Error, Result};
use crate::lattice_resonance::ModeKey;

/// Amplitudes of incoming modes. Stored slab by slab in `x_d`, each slab
/// laid out as `[mode][harmonic][t][y]`.
///
/// With `real` set, only positive harmonics are stored and `σ_{−λ}` is the
/// conjugate of `σ_λ`; no zero harmonic exists in either case.
#[derive(Debug, Clone)]
pub struct ProfileField {
    pub modes: Vec<Arc<ModeKey>>,
    pub harmonics: Vec<i64>,
    pub real: bool,
    pub grid: SlowGrid,
    data: Vec<Complex64>,
}

impl ProfileField {
    pub fn zeros(modes: Vec<Arc<ModeKey>>, harmonics: Vec<i64>, real: bool, grid: SlowGrid) -> Result<Self> {
        if harmonics.contains(&0) {
            return Err(Error::ParameterOutOfRange("zero harmonic is not stored".into()));
        }
        if real && harmonics.iter().any(|&l| l < 0) {
            return Err(Error::ParameterOutOfRange(
                "a real field stores positive harmonics only".into(),
            ));
        }
        let len = modes.len() * harmonics.len() * grid.plane() * grid.nx;
        Ok(Self {
            modes,
            harmonics,
            real,
            grid,
            data: vec![Complex64::new(0.0, 0.0); len],
        })
    }

    /// Real field with harmonics `1..=bound`.
    pub fn real_zeros(modes: Vec<Arc<ModeKey>>, bound: usize, grid: SlowGrid) -> Self {
        Self::zeros(modes, (1..=bound as i64).collect(), true, grid).expect("positive harmonics")
    }

    pub fn slab_len(&self) -> usize {
        self.modes.len() * self.harmonics.len() * self.grid.plane()
    }

    pub fn slab(&self, i: usize) -> &[Complex64] {
        let n = self.slab_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn slab_mut(&mut self, i: usize) -> &mut [Complex64] {
        let n = self.slab_len();
        &mut self.data[i * n..(i + 1) * n]
    }

    pub fn index(&self, mode: usize, h: usize, j: usize, k: usize) -> usize {
        ((mode * self.harmonics.len() + h) * self.grid.nt + j) * self.grid.ny + k
    }

    pub fn get(&self, mode: usize, h: usize, j: usize, k: usize, i: usize) -> Complex64 {
        self.slab(i)[self.index(mode, h, j, k)]
    }

    pub fn set(&mut self, mode: usize, h: usize, j: usize, k: usize, i: usize, v: Complex64) {
        let idx = self.index(mode, h, j, k);
        self.slab_mut(i)[idx] = v;
    }

    /// `σ_λ` for any nonzero `λ`, using conjugate symmetry when real.
    pub fn harmonic(&self, mode: usize, lambda: i64, j: usize, k: usize, i: usize) -> Complex64 {
        if let Some(h) = self.harmonics.iter().position(|&l| l == lambda) {
            return self.get(mode, h, j, k, i);
        }
        if self.real {
            if let Some(h) = self.harmonics.iter().position(|&l| l == -lambda) {
                return self.get(mode, h, j, k, i).conj();
            }
        }
        Complex64::new(0.0, 0.0)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn same_layout(&self, other: &Self) -> bool {
        self.grid == other.grid
            && self.harmonics == other.harmonics
            && self.real == other.real
            && self.modes.len() == other.modes.len()
            && self.modes.iter().zip(&other.modes).all(|(a, b)| a.id == b.id)
    }

    fn require_layout(&self, other: &Self) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(
                "fields have different modes, harmonics or grids".into(),
            ))
        }
    }

    /// Discrete `L²(Ω_T)` norm of the stored amplitudes.
    pub fn l2_norm(&self) -> f64 {
        let g = &self.grid;
        (self.data.iter().map(|z| z.norm_sqr()).sum::<f64>() * g.dt * g.dy * g.dx).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖_{L²}`.
    pub fn l2_distance(&self, other: &Self) -> Result<f64> {
        self.require_layout(other)?;
        let g = &self.grid;
        let s: f64 = self.data.iter().zip(&other.data).map(|(a, b)| (a - b).norm_sqr()).sum();
        Ok((s * g.dt * g.dy * g.dx).sqrt())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= s);
        out
    }

    /// Restriction to the first `nt` time points (same `dt`).
    pub fn truncated_time(&self, nt: usize) -> Result<Self> {
        let g = &self.grid;
        if nt < 3 || nt > g.nt {
            return Err(Error::GridMismatch(format!("cannot keep {nt} of {} time points", g.nt)));
        }
        let grid = SlowGrid::new(g.t(nt - 1), g.ly, g.xd, nt, g.ny, g.nx)?;
        let data = self
            .data
            .chunks(g.plane())
            .flat_map(|block| block[..nt * g.ny].iter().copied())
            .collect();
        Ok(Self {
            modes: self.modes.clone(),
            harmonics: self.harmonics.clone(),
            real: self.real,
            grid,
            data,
        })
    }

    /// Every `x_d`-slab shifted by `shift` slabs towards larger `x_d`.
    pub fn shifted_in_x(&self, shift: usize) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in shift..self.grid.nx {
            let src = self.slab(i - shift).to_vec();
            out.slab_mut(i).copy_from_slice(&src);
        }
        out
    }
}

/// `(2π)^m Σ_{modes, λ} ⟨σ_λ, σ'_λ⟩_{L²(ω_T)}` at the slab `i`.
pub fn incoming_inner_product(u: &ProfileField, v: &ProfileField, i: usize) -> Result<f64> {
    u.require_layout(v)?;
    if i >= u.grid.nx {
        return Err(Error::GridMismatch(format!("slab {i} outside the grid")));
    }
    let m = u.modes.first().map_or(0, |m| m.id.n0.len());
    let s: f64 = u.slab(i).iter().zip(v.slab(i)).map(|(a, b)| (a * b.conj()).re).sum();
    let pairs = if u.real { 2.0 } else { 1.0 };
    Ok((2.0 * PI).powi(m as i32) * pairs * s * u.grid.dt * u.grid.dy)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FiniteSpeedReport {
    /// Mass outside `{x_d ≤ 𝒱* t + 2 dx}` relative to the total mass.
    pub leakage: f64,
    pub pass: bool,
}

pub fn finite_speed_check(u: &ProfileField, vstar: f64, tol: f64) -> FiniteSpeedReport {
    let g = &u.grid;
    let per_t = g.ny;
    let mut outside = 0.0;
    let mut total = 0.0;
    for i in 0..g.nx {
        let x = g.x(i);
        for (idx, z) in u.slab(i).iter().enumerate() {
            let j = (idx / per_t) % g.nt;
            let w = z.norm_sqr();
            total += w;
            if x > vstar * g.t(j) + 2.0 * g.dx {
                outside += w;
            }
        }
    }
    let leakage = if total > 0.0 { outside / total } else { 0.0 };
    FiniteSpeedReport {
        leakage,
        pass: leakage <= tol,
    }
}
