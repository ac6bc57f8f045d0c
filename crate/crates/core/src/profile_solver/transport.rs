//! Marching in `x_d` of `∂_{x_d}σ = a ∂_tσ − c ∂_yσ + n(σ, x_d)`.
//!
//! Each step of length `h` applies the (2,2) Padé approximant of `e^{hL}` to
//! the transport part and adds `h n` evaluated at the midpoint state, so the
//! step reads `(1 − hL/2 + h²L²/12) u⁺ = (1 + hL/2 + h²L²/12) u + h n`; the
//! midpoint dependence is resolved by fixed-point iteration. In `t`, `L` uses
//! third-order upwind-biased differences (upwind for incoming modes, where
//! `a = 1/∂_ξτ < 0`) closed by a one-sided difference at `t = T`, with the
//! exact zero state for `t ≤ 0` standing in below the grid; `y` derivatives
//! are centered differences applied through the discrete Fourier transform.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::grid::SlowGrid;
use crate::error::{Error, Result};
use crate::lattice_resonance::ModeKey;

type C = Complex64;

/// Coefficients of `∂_{x_d}σ = a ∂_tσ − c ∂_yσ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transport {
    pub a: f64,
    pub c: f64,
}

impl Transport {
    pub fn of(mode: &ModeKey) -> Self {
        let dx = mode.dxitau;
        Self {
            a: 1.0 / dx,
            c: mode.grad[0] / dx,
        }
    }

    /// Normal speed `|∂_ξτ|`.
    pub fn speed(&self) -> f64 {
        1.0 / self.a.abs()
    }
}

/// Right-hand side contribution evaluated on physical `(t, y)` values.
pub trait Source {
    /// Writes `n(mid, x)` into `out`, which arrives zeroed.
    fn eval(&mut self, mid: &[C], x: f64, out: &mut [C]) -> Result<()>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarchSettings {
    pub substeps: usize,
    /// Relative update at which the per-step fixed point is accepted.
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct MarchStats {
    pub steps: usize,
    pub max_iterations: usize,
}

const FLUSH: f64 = 1e-18;

#[derive(Debug, Clone, Copy)]
struct Band {
    l2: C,
    l1: C,
    inv_d: C,
    up: C,
}

pub struct Marcher {
    grid: SlowGrid,
    transports: Vec<Transport>,
    nh: usize,
    settings: MarchSettings,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    ysym: Vec<f64>,
}

impl Marcher {
    /// One transport per mode, `nh` harmonics per mode.
    pub fn new(grid: SlowGrid, transports: Vec<Transport>, nh: usize, settings: MarchSettings) -> Self {
        let mut planner = FftPlanner::new();
        let ny = grid.ny;
        let ysym = (0..ny)
            .map(|k| (2.0 * std::f64::consts::PI * k as f64 / ny as f64).sin() / grid.dy)
            .collect();
        Self {
            fwd: planner.plan_fft_forward(ny),
            inv: planner.plan_fft_inverse(ny),
            grid,
            transports,
            nh,
            settings,
            ysym,
        }
    }

    pub fn slab_len(&self) -> usize {
        self.transports.len() * self.nh * self.grid.plane()
    }

    fn to_hat(&self, u: &mut [C]) {
        if self.grid.ny > 1 {
            self.fwd.process(u);
        }
    }

    fn to_phys(&self, u: &mut [C]) {
        if self.grid.ny > 1 {
            self.inv.process(u);
            let s = 1.0 / self.grid.ny as f64;
            u.iter_mut().for_each(|z| *z *= s);
        }
    }

    /// Row-wise transform to physical `y` that flushes rows below `floor`
    /// to exact zeros.
    fn to_phys_sparse(&self, u: &mut [C], floor: f64, scratch: &mut [C]) {
        let ny = self.grid.ny;
        let s = 1.0 / ny as f64;
        let floor2 = floor * floor;
        for row in u.chunks_mut(ny) {
            if row.iter().all(|z| z.norm_sqr() <= floor2) {
                row.iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
            } else if ny > 1 {
                self.inv.process_with_scratch(row, scratch);
                row.iter_mut().for_each(|z| *z *= s);
            }
        }
    }

    /// Row-wise transform to Fourier `y` skipping rows that vanish.
    fn to_hat_sparse(&self, u: &mut [C], scratch: &mut [C]) {
        if self.grid.ny == 1 {
            return;
        }
        for row in u.chunks_mut(self.grid.ny) {
            if row.iter().any(|z| *z != C::new(0.0, 0.0)) {
                self.fwd.process_with_scratch(row, scratch);
            }
        }
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, Transport)> + '_ {
        let plane = self.grid.plane();
        (0..self.transports.len() * self.nh).map(move |b| (b * plane, self.transports[b / self.nh]))
    }

    /// `out = L u` in Fourier variables.
    fn apply_l(&self, u: &[C], out: &mut [C]) {
        let (nt, ny, dt) = (self.grid.nt, self.grid.ny, self.grid.dt);
        let zeros = vec![C::new(0.0, 0.0); ny];
        for (off, tr) in self.blocks() {
            let u = &u[off..off + nt * ny];
            let out = &mut out[off..off + nt * ny];
            let row = |j: usize| &u[j * ny..(j + 1) * ny];
            out[..ny].iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
            let (w, v) = (tr.a / (6.0 * dt), tr.a / dt);
            for j in 1..nt {
                let dst = &mut out[j * ny..(j + 1) * ny];
                let (r0, r1) = (row(j), row(j - 1));
                if j + 1 < nt {
                    let r2 = if j >= 2 { row(j - 2) } else { &zeros[..] };
                    let rp = row(j + 1);
                    for k in 0..ny {
                        let dtu = (r2[k] - r1[k] * 6.0 + r0[k] * 3.0 + rp[k] * 2.0) * w;
                        dst[k] = dtu - r0[k] * C::new(0.0, tr.c * self.ysym[k]);
                    }
                } else {
                    for k in 0..ny {
                        dst[k] = (r0[k] - r1[k]) * v - r0[k] * C::new(0.0, tr.c * self.ysym[k]);
                    }
                }
            }
        }
    }

    /// Banded LU factors of `I − κ L`, one family per mode and `y` wave
    /// number, laid out `[mode][t][y]`.
    fn factor(&self, kappa: C) -> Vec<Band> {
        let (nt, ny, dt) = (self.grid.nt, self.grid.ny, self.grid.dt);
        let zero = C::new(0.0, 0.0);
        let one = C::new(1.0, 0.0);
        let mut out = Vec::with_capacity(self.transports.len() * nt * ny);
        for tr in &self.transports {
            let w = kappa * (tr.a / (6.0 * dt));
            let v = kappa * (tr.a / dt);
            let mut rows: Vec<Band> = Vec::with_capacity(nt * ny);
            for j in 0..nt {
                for k in 0..ny {
                    let yterm = kappa * C::new(0.0, tr.c * self.ysym[k]);
                    // entries of row j at columns j−2, j−1, j, j+1
                    let (m2, m1, m0, p1) = if j == 0 {
                        (zero, zero, one, zero)
                    } else if j + 1 < nt {
                        (-w, w * 6.0, one - w * 3.0 + yterm, w * -2.0)
                    } else {
                        (zero, v, one - v + yterm, zero)
                    };
                    let l2 = if j >= 2 {
                        m2 * rows[(j - 2) * ny + k].inv_d
                    } else {
                        zero
                    };
                    let l1 = if j >= 1 {
                        let upper = if j >= 2 { rows[(j - 2) * ny + k].up } else { zero };
                        (m1 - l2 * upper) * rows[(j - 1) * ny + k].inv_d
                    } else {
                        zero
                    };
                    let up_prev = if j >= 1 { rows[(j - 1) * ny + k].up } else { zero };
                    rows.push(Band {
                        l2,
                        l1,
                        inv_d: 1.0 / (m0 - l1 * up_prev),
                        up: p1,
                    });
                }
            }
            out.extend(rows);
        }
        out
    }

    /// Solves `(I − κ L) x = r` with the factors of [`Self::factor`]; the
    /// `t = 0` row is held at zero.
    fn solve(&self, bands: &[Band], r: &[C], x: &mut [C]) {
        let (nt, ny) = (self.grid.nt, self.grid.ny);
        let plane = nt * ny;
        for (b, (off, _)) in self.blocks().enumerate() {
            let f = &bands[(b / self.nh) * plane..(b / self.nh + 1) * plane];
            let r = &r[off..off + plane];
            let x = &mut x[off..off + plane];
            x[..ny].iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
            for j in 1..nt {
                let (done, rest) = x.split_at_mut(j * ny);
                let dst = &mut rest[..ny];
                let p1 = &done[(j - 1) * ny..];
                let (fr, rr) = (&f[j * ny..(j + 1) * ny], &r[j * ny..(j + 1) * ny]);
                if j >= 2 {
                    let p2 = &done[(j - 2) * ny..(j - 1) * ny];
                    for k in 0..ny {
                        dst[k] = rr[k] - fr[k].l1 * p1[k] - fr[k].l2 * p2[k];
                    }
                } else {
                    for k in 0..ny {
                        dst[k] = rr[k] - fr[k].l1 * p1[k];
                    }
                }
            }
            let last = (nt - 1) * ny;
            for k in 0..ny {
                x[last + k] *= f[last + k].inv_d;
            }
            for j in (1..nt - 1).rev() {
                let (head, tail) = x.split_at_mut((j + 1) * ny);
                let dst = &mut head[j * ny..];
                let above = &tail[..ny];
                let fr = &f[j * ny..(j + 1) * ny];
                for k in 0..ny {
                    dst[k] = (dst[k] - fr[k].up * above[k]) * fr[k].inv_d;
                }
            }
        }
    }

    fn solve_pade(&self, bands: &(Vec<Band>, Vec<Band>), r: &[C], stage: &mut [C], x: &mut [C]) {
        self.solve(&bands.0, r, stage);
        self.solve(&bands.1, stage, x);
    }

    /// Marches from the boundary slab `init` (physical) to `x_d = X_d`,
    /// calling `observer(i, slab)` with the physical slab at every grid
    /// position `x_i`, starting with `i = 0`.
    pub fn march(
        &self,
        init: &[C],
        mut source: Option<&mut dyn Source>,
        mut observer: impl FnMut(usize, &[C]) -> Result<()>,
    ) -> Result<MarchStats> {
        let n = self.slab_len();
        if init.len() != n {
            return Err(Error::GridMismatch(format!(
                "boundary slab has {} values, expected {n}",
                init.len()
            )));
        }
        let mut u = init.to_vec();
        let (nt, ny) = (self.grid.nt, self.grid.ny);
        for b in 0..n / (nt * ny) {
            u[b * nt * ny..b * nt * ny + ny]
                .iter_mut()
                .for_each(|z| *z = C::new(0.0, 0.0));
        }
        observer(0, &u)?;
        self.to_hat(&mut u);
        let h = self.grid.dx / self.settings.substeps as f64;
        // 1 − z/2 + z²/12 = (1 − κz)(1 − κ̄z)
        let kappa = C::new(0.25, 3f64.sqrt() / 12.0) * h;
        let bands = (self.factor(kappa), self.factor(kappa.conj()));
        let mut stage = vec![C::new(0.0, 0.0); self.slab_len()];
        let mut prev: Option<Vec<C>> = None;
        let mut prev2: Option<Vec<C>> = None;
        let mut stats = MarchStats::default();
        let zero = C::new(0.0, 0.0);
        let mut lu = vec![zero; n];
        let mut llu = vec![zero; n];
        let mut base = vec![zero; n];
        let mut next = vec![zero; n];
        let mut mid = vec![zero; n];
        let mut src = vec![zero; n];
        let mut rhs = vec![zero; n];
        let mut scratch = vec![
            zero;
            self.fwd
                .get_inplace_scratch_len()
                .max(self.inv.get_inplace_scratch_len())
        ];
        // values below `FLUSH · scale` do not feed the source
        let mut scale = init.iter().map(|z| z.norm()).fold(0.0, f64::max);
        for i in 0..self.grid.nx - 1 {
            for s in 0..self.settings.substeps {
                let x0 = self.grid.x(i) + s as f64 * h;
                self.apply_l(&u, &mut lu);
                self.apply_l(&lu, &mut llu);
                for (((b, u), l), ll) in base.iter_mut().zip(&u).zip(&lu).zip(&llu) {
                    *b = u + l * (0.5 * h) + ll * (h * h / 12.0);
                }
                match source.as_deref_mut() {
                    None => self.solve_pade(&bands, &base, &mut stage, &mut next),
                    Some(source) => {
                        let mut guess: Vec<C> = match (&prev, &prev2) {
                            (Some(p), Some(q)) => u.iter().zip(p).zip(q).map(|((a, b), c)| (a - b) * 3.0 + c).collect(),
                            (Some(p), None) => u.iter().zip(p).map(|(a, b)| a * 2.0 - b).collect(),
                            _ => u.clone(),
                        };
                        let mut converged = false;
                        let mut update = f64::INFINITY;
                        let mut iterations = 0;
                        while iterations < self.settings.max_iter {
                            iterations += 1;
                            for ((m, a), b) in mid.iter_mut().zip(&u).zip(&guess) {
                                *m = (a + b) * 0.5;
                            }
                            self.to_phys_sparse(&mut mid, FLUSH * scale, &mut scratch);
                            src.iter_mut().for_each(|z| *z = zero);
                            source.eval(&mid, x0 + 0.5 * h, &mut src)?;
                            let inert = src.iter().all(|z| *z == zero);
                            self.to_hat_sparse(&mut src, &mut scratch);
                            for ((r, b), s) in rhs.iter_mut().zip(&base).zip(&src) {
                                *r = b + s * h;
                            }
                            self.solve_pade(&bands, &rhs, &mut stage, &mut next);
                            let (mut diff, mut norm) = (0.0, 0.0);
                            for (a, b) in next.iter().zip(&guess) {
                                diff += (a - b).norm_sqr();
                                norm += a.norm_sqr();
                            }
                            std::mem::swap(&mut guess, &mut next);
                            update = if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() };
                            if !update.is_finite() {
                                break;
                            }
                            // a vanishing source leaves nothing to iterate on
                            if update <= self.settings.tol || diff == 0.0 || inert {
                                converged = true;
                                break;
                            }
                        }
                        if !converged {
                            return Err(Error::PicardDivergence { iterations, update });
                        }
                        stats.max_iterations = stats.max_iterations.max(iterations);
                        next = guess;
                    }
                }
                stats.steps += 1;
                prev2 = prev.take();
                prev = Some(std::mem::replace(&mut u, next.clone()));
            }
            let mut phys = u.clone();
            self.to_phys(&mut phys);
            scale = phys.iter().map(|z| z.norm()).fold(scale, f64::max);
            observer(i + 1, &phys)?;
        }
        Ok(stats)
    }
}

/// Pseudo-spectral products of real `Θ`-periodic signals given by their
/// positive harmonics `1..=bound`, exact for the truncated product.
pub struct ThetaProducts {
    bound: usize,
    size: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl ThetaProducts {
    pub fn new(bound: usize) -> Self {
        let size = (3 * bound + 1).next_power_of_two();
        let mut planner = FftPlanner::new();
        Self {
            bound,
            size,
            fwd: planner.plan_fft_forward(size),
            inv: planner.plan_fft_inverse(size),
        }
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Harmonics `1..=bound` of `S_a²` and `S_b²`, two real signals packed in
    /// one complex transform.
    pub fn square_pair(&self, a: &[C], b: &[C], out_a: &mut [C], out_b: &mut [C], buf: &mut [C]) {
        let (m, nb) = (self.size, self.bound);
        buf.iter_mut().for_each(|z| *z = C::new(0.0, 0.0));
        let i = C::new(0.0, 1.0);
        for l in 1..=nb {
            buf[l] = a[l - 1] + i * b[l - 1];
            buf[m - l] = a[l - 1].conj() + i * b[l - 1].conj();
        }
        self.inv.process(buf);
        for z in buf.iter_mut() {
            *z = C::new(z.re * z.re, z.im * z.im);
        }
        self.fwd.process(buf);
        let s = 1.0 / m as f64;
        for l in 1..=nb {
            let (p, q) = (buf[l], buf[m - l].conj());
            out_a[l - 1] = (p + q) * (0.5 * s);
            out_b[l - 1] = (p - q) * (-0.5 * s) * i;
        }
    }
}
