//! Boundary forcing `G(t, y, θ) = Σ_n G_n(t, y) e^{i n·θ}` and its split into
//! traces of incoming, resonant and evanescent profiles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::grid::{bump, SlowGrid};
use crate::boundary_spectral::{boundary_inverse, RootClass, StableDecomposition};
use crate::error::{Error, Result};
use crate::lattice_resonance::{lift_direction, normalize_direction, FrequencyPartition, Lattice, ModeId, ModeKey};
use crate::linalg::CVector;

type C = Complex64;

/// `b(t; t_center, t_width) · b(y; y_center, y_width)`; without `y_center`
/// the profile is uniform in `y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForcingProfile {
    pub t_center: f64,
    pub t_width: f64,
    #[serde(default)]
    pub y_center: Option<f64>,
    #[serde(default = "default_width")]
    pub y_width: f64,
}

fn default_width() -> f64 {
    1.0
}

impl ForcingProfile {
    pub fn eval(&self, t: f64, y: f64) -> f64 {
        let yt = match self.y_center {
            Some(c) => bump(y, c, self.y_width),
            None => 1.0,
        };
        bump(t, self.t_center, self.t_width) * yt
    }

    /// Values on the `(t, y)` plane of `grid`, `t` major.
    pub fn sample(&self, grid: &SlowGrid) -> Vec<f64> {
        (0..grid.nt)
            .flat_map(|j| (0..grid.ny).map(move |k| (j, k)))
            .map(|(j, k)| self.eval(grid.t(j), grid.y(k)))
            .collect()
    }

    fn validate(&self, grid: &SlowGrid) -> Result<()> {
        if !(self.t_width > 0.0 && self.t_center - self.t_width >= 0.0) {
            return Err(Error::ParameterOutOfRange(
                "forcing must vanish for t ≤ 0 (need t_center ≥ t_width > 0)".into(),
            ));
        }
        if let Some(c) = self.y_center {
            if !(self.y_width > 0.0 && c - self.y_width >= 0.0 && c + self.y_width <= grid.ly) {
                return Err(Error::ParameterOutOfRange(
                    "forcing support must stay inside the periodic y box".into(),
                ));
            }
        }
        Ok(())
    }
}

/// `G_n(t, y) = amplitude · profile(t, y)`; the term for `−n` is implied by
/// conjugation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcingTerm {
    pub n: Vec<i64>,
    pub amplitude: Vec<C>,
    pub profile: ForcingProfile,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryForcing {
    pub terms: Vec<ForcingTerm>,
}

impl BoundaryForcing {
    pub fn validate(&self, grid: &SlowGrid, rows: usize) -> Result<()> {
        for term in &self.terms {
            if term.amplitude.len() != rows {
                return Err(Error::DimensionMismatch(format!(
                    "forcing amplitude has {} entries, B has {rows} rows",
                    term.amplitude.len()
                )));
            }
            normalize_direction(&term.n)?;
            term.profile.validate(grid)?;
        }
        Ok(())
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.amplitude.iter_mut().for_each(|a| *a *= s);
        }
        out
    }

    /// `(2π)^m Σ_{±n} ‖G_n‖²_{L²(ω_T)}` on the grid.
    pub fn l2_norm_sq(&self, grid: &SlowGrid, m: usize) -> f64 {
        let mut by_n: BTreeMap<Vec<i64>, Vec<C>> = BTreeMap::new();
        for term in &self.terms {
            let (n0, lambda) = normalize_direction(&term.n).expect("validated forcing");
            let flip = lambda < 0;
            let entry = by_n
                .entry(n0.iter().map(|x| x * lambda.abs()).collect())
                .or_insert_with(|| vec![C::new(0.0, 0.0); grid.plane() * term.amplitude.len()]);
            let prof = term.profile.sample(grid);
            for (p, v) in prof.iter().enumerate() {
                for (r, a) in term.amplitude.iter().enumerate() {
                    let a = if flip { a.conj() } else { *a };
                    entry[p * term.amplitude.len() + r] += a * v;
                }
            }
        }
        let s: f64 = by_n.values().flatten().map(|z| z.norm_sqr()).sum();
        (2.0 * PI).powi(m as i32) * 2.0 * s * grid.dt * grid.dy
    }
}

/// Traces generated by one forcing term, reduced to `n = λ n_0` with `λ > 0`.
#[derive(Debug, Clone, Serialize)]
pub struct TraceComponent {
    pub n0: Vec<i64>,
    pub lambda: i64,
    pub profile: ForcingProfile,
    /// Boundary data `g` after the reduction.
    pub g: CVector,
    /// `w = (B|_{E_−})^{-1} g`.
    pub w: CVector,
    /// `⟨Π^j_− w, E⟩` for every incoming root of the direction.
    pub incoming: Vec<(ModeId, C)>,
    /// `Π^e_− w`.
    pub evanescent: CVector,
    /// `‖Σ_j Π^j_− w + Π^e_− w − w‖`.
    pub reassembly: f64,
    #[serde(skip)]
    pub decomposition: Arc<StableDecomposition>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryTraces {
    pub components: Vec<TraceComponent>,
}

/// Splits the forcing into profile traces; every forced direction must be
/// non-glancing and satisfy the Lopatinskii condition.
pub fn boundary_traces(lat: &Lattice, b: &DMatrix<f64>, forcing: &BoundaryForcing) -> Result<BoundaryTraces> {
    let mut lifted = BTreeMap::new();
    let mut components = Vec::with_capacity(forcing.terms.len());
    for term in &forcing.terms {
        let (n0, lambda) = normalize_direction(&term.n)?;
        if !lifted.contains_key(&n0) {
            let (dir, _) = lat.direction(&n0)?;
            let lift = lift_direction(lat, &dir)?;
            let binv = boundary_inverse(&lift.decomposition, b)?;
            lifted.insert(n0.clone(), (lift, binv));
        }
        let (lift, binv) = &lifted[&n0];
        let dec = &lift.decomposition;
        let g = CVector::from_iterator(
            term.amplitude.len(),
            term.amplitude.iter().map(|a| if lambda < 0 { a.conj() } else { *a }),
        );
        let w = binv * &g;
        let mut sum = dec.pi_elliptic_stable() * &w;
        let evanescent = sum.clone();
        let mut incoming = Vec::new();
        for (root, (j, _)) in dec.real_roots().into_iter().enumerate() {
            if dec.roots[j].class != RootClass::Incoming {
                continue;
            }
            let part = dec.pi_incoming(j) * &w;
            let mode = &lift.modes[root];
            let h: C = mode.e.iter().zip(part.iter()).map(|(e, p)| p * *e).sum();
            incoming.push((mode.id.clone(), h));
            sum += part;
        }
        components.push(TraceComponent {
            n0: n0.clone(),
            lambda: lambda.abs(),
            profile: term.profile,
            reassembly: (sum - &w).norm(),
            g,
            w,
            incoming,
            evanescent,
            decomposition: Arc::new(dec.clone()),
        });
    }
    Ok(BoundaryTraces { components })
}

impl BoundaryTraces {
    /// Boundary harmonics of `modes` on the grid, layout `[mode][λ−1][t][y]`.
    pub fn boundary_slab(&self, modes: &[Arc<ModeKey>], bound: usize, grid: &SlowGrid) -> Result<Vec<C>> {
        let plane = grid.plane();
        let mut out = vec![C::new(0.0, 0.0); modes.len() * bound * plane];
        for c in &self.components {
            for (id, h) in &c.incoming {
                let Some(m) = modes.iter().position(|m| &m.id == id) else {
                    continue;
                };
                if c.lambda as usize > bound {
                    return Err(Error::ParameterOutOfRange(format!(
                        "forcing harmonic {} exceeds the harmonic bound {bound}",
                        c.lambda
                    )));
                }
                let off = (m * bound + c.lambda as usize - 1) * plane;
                for (o, v) in out[off..off + plane].iter_mut().zip(c.profile.sample(grid)) {
                    *o += h * v;
                }
            }
        }
        Ok(out)
    }

    /// Modes with a nonzero trace.
    pub fn excited_modes(&self) -> Vec<ModeId> {
        let mut v: Vec<ModeId> = self
            .components
            .iter()
            .flat_map(|c| {
                c.incoming
                    .iter()
                    .filter(|(_, h)| h.norm() > 0.0)
                    .map(|(id, _)| id.clone())
            })
            .collect();
        v.sort();
        v.dedup();
        v
    }

    pub fn max_reassembly(&self) -> f64 {
        self.components.iter().map(|c| c.reassembly).fold(0.0, f64::max)
    }
}

/// Squared norms of the three trace families against `‖G‖²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceSplit {
    pub resonant: f64,
    pub nonresonant: f64,
    pub evanescent: f64,
    pub forcing: f64,
    pub constant: f64,
}

pub fn trace_split(
    traces: &BoundaryTraces,
    forcing: &BoundaryForcing,
    partition: &FrequencyPartition,
    grid: &SlowGrid,
    m: usize,
) -> TraceSplit {
    let weight = (2.0 * PI).powi(m as i32) * 2.0;
    let (mut res, mut nonres, mut ev) = (0.0, 0.0, 0.0);
    for c in &traces.components {
        let prof: f64 = c.profile.sample(grid).iter().map(|v| v * v).sum::<f64>() * grid.dt * grid.dy;
        for (id, h) in &c.incoming {
            let e = weight * h.norm_sqr() * prof;
            if partition.incoming_resonant.contains(id) {
                res += e;
            } else {
                nonres += e;
            }
        }
        ev += weight * c.evanescent.norm_squared() * prof;
    }
    let g = forcing.l2_norm_sq(grid, m);
    TraceSplit {
        resonant: res,
        nonresonant: nonres,
        evanescent: ev,
        forcing: g,
        constant: if g > 0.0 { (res + nonres + ev) / g } else { 0.0 },
    }
}
