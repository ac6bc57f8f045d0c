//! Discretization of the slow domain `(t, y, x_d)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid: `t_j = j dt` for `j < nt` (so `t_0 = 0`), `y_k = k dy` on a
/// periodic box of length `ly`, `x_i = i dx` for `i < nx`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlowGrid {
    pub t_final: f64,
    pub ly: f64,
    pub xd: f64,
    pub nt: usize,
    pub ny: usize,
    pub nx: usize,
    pub dt: f64,
    pub dy: f64,
    pub dx: f64,
}

impl SlowGrid {
    pub fn new(t_final: f64, ly: f64, xd: f64, nt: usize, ny: usize, nx: usize) -> Result<Self> {
        if !(t_final > 0.0 && ly > 0.0 && xd > 0.0) {
            return Err(Error::ParameterOutOfRange("grid extents must be positive".into()));
        }
        if nt < 3 || ny < 1 || nx < 2 {
            return Err(Error::ParameterOutOfRange(format!(
                "grid needs nt ≥ 3, ny ≥ 1, nx ≥ 2 (got {nt}, {ny}, {nx})"
            )));
        }
        Ok(Self {
            t_final,
            ly,
            xd,
            nt,
            ny,
            nx,
            dt: t_final / (nt - 1) as f64,
            dy: ly / ny as f64,
            dx: xd / (nx - 1) as f64,
        })
    }

    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn y(&self, k: usize) -> f64 {
        k as f64 * self.dy
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx
    }

    /// Points of one `(t, y)` plane.
    pub fn plane(&self) -> usize {
        self.nt * self.ny
    }

    /// Grid with every spacing halved (point counts doubled in `y`,
    /// `2n − 1` in `t` and `x_d`).
    pub fn refined(&self) -> Result<Self> {
        Self::new(
            self.t_final,
            self.ly,
            self.xd,
            2 * self.nt - 1,
            2 * self.ny,
            2 * self.nx - 1,
        )
    }

    /// Same `dt` on `[0, T/2]`.
    pub fn halved_time(&self) -> Result<Self> {
        let nt = (self.nt - 1) / 2 + 1;
        Self::new(self.t(nt - 1), self.ly, self.xd, nt, self.ny, self.nx)
    }

    /// `X_d ≥ 2 𝒱* T` so that the cutoff `β_T` fits in the box.
    pub fn check_extent(&self, vstar: f64) -> Result<()> {
        if self.xd < 2.0 * vstar * self.t_final * (1.0 - 1e-12) {
            return Err(Error::GridMismatch(format!(
                "normal extent {} is below 2 V* T = {}",
                self.xd,
                2.0 * vstar * self.t_final
            )));
        }
        Ok(())
    }

    /// Smallest number of marching substeps per `dx` with
    /// `h ≤ cfl · min|∂_ξτ| · dt`.
    pub fn substeps(&self, min_speed: f64, cfl: f64) -> usize {
        let allowed = cfl * min_speed * self.dt;
        ((self.dx / allowed) * (1.0 - 1e-12)).ceil().max(1.0) as usize
    }

    pub fn check_substeps(&self, substeps: usize, min_speed: f64, cfl: f64) -> Result<()> {
        let h = self.dx / substeps.max(1) as f64;
        if h > cfl * min_speed * self.dt * (1.0 + 1e-12) {
            return Err(Error::CflViolation(format!(
                "marching step {h} exceeds cfl · |∂_ξτ| · dt = {}",
                cfl * min_speed * self.dt
            )));
        }
        Ok(())
    }
}

fn smooth_step_part(u: f64) -> f64 {
    if u > 0.0 {
        (-1.0 / u).exp()
    } else {
        0.0
    }
}

/// `C^∞` function equal to 1 on `[0, 𝒱*T]`, to 0 on `[2𝒱*T, ∞)`, decreasing
/// in between.
pub fn cutoff_beta(t_final: f64, vstar: f64) -> impl Fn(f64) -> f64 + Copy {
    let a = vstar * t_final;
    move |x: f64| {
        let s = (x - a) / a;
        let (f0, f1) = (smooth_step_part(1.0 - s), smooth_step_part(s));
        f0 / (f0 + f1)
    }
}

/// `C^∞` bump supported on `[center − width, center + width]` with peak 1.
pub fn bump(x: f64, center: f64, width: f64) -> f64 {
    let s = (x - center) / width;
    if s.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - s * s)).exp()
    } else {
        0.0
    }
}
