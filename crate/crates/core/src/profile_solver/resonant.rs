//! The coupled system of the incoming resonant modes, its linearization and
//! the Picard iteration.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use serde::Serialize;

use super::burgers::{march_settings, SolverOptions};
use super::field::ProfileField;
use super::grid::{cutoff_beta, SlowGrid};
use super::transport::{MarchStats, Marcher, Source, Transport};
use crate::error::{Error, Result};
use crate::lattice_resonance::{relation_class, GammaProbe, Lattice, ModeId, ModeKey, Resonance};

type C = Complex64;

/// How `∂_θ` enters the coupling coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Derivative {
    Spectral,
    /// Centered difference `(U(θ + h e_j) − U(θ − h e_j)) / 2h`.
    SkewFd(f64),
}

/// `(τ, η)` frequency standing for `∂_θ` on harmonic `λ` of `mode`.
pub fn derivative_frequency(
    zetas: &[nalgebra::DVector<f64>],
    mode: &ModeKey,
    lambda: i64,
    deriv: Derivative,
) -> Vec<f64> {
    let d = mode.dir.zeta.len();
    let mut out = vec![0.0; d];
    for (nj, zeta) in mode.dir.n0.iter().zip(zetas) {
        let w = match deriv {
            Derivative::Spectral => (lambda * nj) as f64,
            Derivative::SkewFd(h) => ((lambda * nj) as f64 * h).sin() / h,
        };
        for (o, z) in out.iter_mut().zip(zeta.iter()) {
            *o += w * z;
        }
    }
    out
}

/// One quadratic term `coef · V_{v,λ_v} U_{u,λ_u}` in the equation of
/// harmonic `lt > 0` of mode `target`; negative harmonics read conjugates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coupling {
    pub target: usize,
    pub lt: usize,
    pub v: usize,
    pub lv: i64,
    pub u: usize,
    pub lu: i64,
    pub coef: C,
}

#[derive(Debug, Clone, Serialize)]
pub struct Couplings {
    pub modes: Vec<Arc<ModeKey>>,
    pub bound: usize,
    pub terms: Vec<Coupling>,
    pub gamma_self: Vec<f64>,
}

/// Terms below this magnitude are dropped.
const NEGLIGIBLE: f64 = 1e-13;

/// Couplings `i Γ(λ_v v, λ_u u → t)` of every relation among `modes`
/// (multiples included) and the self-interaction terms.
pub fn build_couplings(
    lat: &Lattice,
    modes: &[Arc<ModeKey>],
    resonances: &[Resonance],
    bound: usize,
    deriv: Derivative,
) -> Result<Couplings> {
    let index: HashMap<ModeId, usize> = modes.iter().enumerate().map(|(i, m)| (m.id.clone(), i)).collect();
    let probes = modes
        .iter()
        .map(|m| GammaProbe::new(&lat.lin, m))
        .collect::<Result<Vec<_>>>()?;
    let nb = bound as i64;
    let mut terms: BTreeMap<(usize, usize, usize, i64, usize, i64), C> = BTreeMap::new();
    let mut add = |t: usize, lt: i64, v: usize, lv: i64, u: usize, lu: i64| -> Result<()> {
        if lt < 1 || lt > nb || lv == 0 || lu == 0 || lv.abs() > nb || lu.abs() > nb {
            return Ok(());
        }
        let key = (t, lt as usize, v, lv, u, lu);
        if terms.contains_key(&key) {
            return Ok(());
        }
        let zeta = derivative_frequency(&lat.zetas, &modes[u], lu, deriv);
        let (g, _) = probes[t].eval(&lat.lin, &modes[v].e, &zeta, &modes[u].e)?;
        terms.insert(key, C::new(0.0, g));
        Ok(())
    };

    let mut classes = BTreeSet::new();
    for res in resonances {
        let ids = [&res.p.id, &res.q.id, &res.r.id];
        if ids.iter().all(|id| index.contains_key(*id)) && !(ids[0] == ids[1] && ids[1] == ids[2]) {
            classes.insert(relation_class(res));
        }
    }
    for class in &classes {
        let c: Vec<(i64, usize)> = class.iter().map(|(l, id)| (*l, index[id])).collect();
        let cmin = c.iter().map(|x| x.0.abs()).min().unwrap_or(1).max(1);
        for ell in -(nb / cmin)..=(nb / cmin) {
            if ell == 0 {
                continue;
            }
            for k in 0..3 {
                let (i, j) = ((k + 1) % 3, (k + 2) % 3);
                let lt = -ell * c[k].0;
                for (a, b) in [(i, j), (j, i)] {
                    add(c[k].1, lt, c[a].1, ell * c[a].0, c[b].1, ell * c[b].0)?;
                }
            }
        }
    }

    let mut gamma_self = Vec::with_capacity(modes.len());
    for m in 0..modes.len() {
        let zeta = derivative_frequency(&lat.zetas, &modes[m], 1, Derivative::Spectral);
        let (g, _) = probes[m].eval(&lat.lin, &modes[m].e, &zeta, &modes[m].e)?;
        gamma_self.push(g);
        if g.abs() <= NEGLIGIBLE {
            continue;
        }
        for lt in 1..=nb {
            for a in -nb..=nb {
                add(m, lt, m, a, m, lt - a)?;
            }
        }
    }

    let terms = terms
        .into_iter()
        .filter(|(_, coef)| coef.norm() > NEGLIGIBLE)
        .map(|((target, lt, v, lv, u, lu), coef)| Coupling {
            target,
            lt,
            v,
            lv,
            u,
            lu,
            coef,
        })
        .collect();
    Ok(Couplings {
        modes: modes.to_vec(),
        bound,
        terms,
        gamma_self,
    })
}

impl Couplings {
    /// Modes reachable from `seeds`: a target joins once both of its sources
    /// have.
    pub fn closure(&self, seeds: &BTreeSet<usize>) -> BTreeSet<usize> {
        let mut active = seeds.clone();
        loop {
            let before = active.len();
            for t in &self.terms {
                if active.contains(&t.v) && active.contains(&t.u) {
                    active.insert(t.target);
                }
            }
            if active.len() == before {
                return active;
            }
        }
    }

    /// Couplings among `keep` only, renumbered in the order of `keep`.
    pub fn restrict(&self, keep: &BTreeSet<usize>) -> Self {
        let map: HashMap<usize, usize> = keep.iter().enumerate().map(|(new, old)| (*old, new)).collect();
        let terms = self
            .terms
            .iter()
            .filter_map(|t| {
                Some(Coupling {
                    target: *map.get(&t.target)?,
                    v: *map.get(&t.v)?,
                    u: *map.get(&t.u)?,
                    ..*t
                })
            })
            .collect();
        Self {
            modes: keep.iter().map(|i| self.modes[*i].clone()).collect(),
            bound: self.bound,
            terms,
            gamma_self: keep.iter().map(|i| self.gamma_self[*i]).collect(),
        }
    }

    /// Position of a mode in [`Self::modes`].
    pub fn position(&self, id: &ModeId) -> Option<usize> {
        self.modes.iter().position(|m| &m.id == id)
    }

    /// `max_x Σ_terms |coef| · max|V_v|` over target harmonics.
    pub fn operator_bound(&self, v: &ProfileField) -> f64 {
        let nb = self.bound;
        let plane = v.grid.plane();
        let mut vmax = vec![0.0f64; self.modes.len() * nb];
        for i in 0..v.grid.nx {
            let slab = v.slab(i);
            for (b, block) in slab.chunks(plane).enumerate() {
                vmax[b] = block.iter().map(|z| z.norm()).fold(vmax[b], f64::max);
            }
        }
        let mut rows = vec![0.0; self.modes.len() * nb];
        for t in &self.terms {
            rows[t.target * nb + t.lt - 1] += t.coef.norm() * vmax[t.v * nb + t.lv.unsigned_abs() as usize - 1];
        }
        rows.into_iter().fold(0.0, f64::max)
    }
}

/// Linear interpolation between grid slabs.
struct SlabReader<'a> {
    field: &'a ProfileField,
    buf: Vec<C>,
    at: f64,
}

impl<'a> SlabReader<'a> {
    fn new(field: &'a ProfileField) -> Self {
        Self {
            buf: vec![C::new(0.0, 0.0); field.slab_len()],
            field,
            at: f64::NAN,
        }
    }

    fn read(&mut self, x: f64) -> &[C] {
        if x != self.at {
            let g = &self.field.grid;
            let s = (x / g.dx).clamp(0.0, (g.nx - 1) as f64);
            let i = (s.floor() as usize).min(g.nx - 2);
            let w = s - i as f64;
            let (a, b) = (self.field.slab(i), self.field.slab(i + 1));
            for ((o, a), b) in self.buf.iter_mut().zip(a).zip(b) {
                *o = a * (1.0 - w) + b * w;
            }
            self.at = x;
        }
        &self.buf
    }
}

struct ResonantSource<'a, B: Fn(f64) -> f64> {
    terms: &'a [Coupling],
    nh: usize,
    plane: usize,
    beta: B,
    coefficient: Option<SlabReader<'a>>,
    forcing: Option<SlabReader<'a>>,
}

impl<B: Fn(f64) -> f64> Source for ResonantSource<'_, B> {
    fn eval(&mut self, mid: &[C], x: f64, out: &mut [C]) -> Result<()> {
        let (nh, plane) = (self.nh, self.plane);
        if let Some(f) = self.forcing.as_mut() {
            out.copy_from_slice(f.read(x));
        }
        let beta = (self.beta)(x);
        let Some(reader) = self.coefficient.as_mut() else {
            return Ok(());
        };
        if beta == 0.0 {
            return Ok(());
        }
        let v = reader.read(x);
        let block = |m: usize, l: i64| (m * nh + l.unsigned_abs() as usize - 1) * plane;
        for t in self.terms {
            let coef = -beta * t.coef;
            let (ov, ou, ot) = (block(t.v, t.lv), block(t.u, t.lu), block(t.target, t.lt as i64));
            let vv = &v[ov..ov + plane];
            let uu = &mid[ou..ou + plane];
            let dst = &mut out[ot..ot + plane];
            match (t.lv < 0, t.lu < 0) {
                (false, false) => dst
                    .iter_mut()
                    .zip(vv)
                    .zip(uu)
                    .for_each(|((d, a), b)| *d += coef * a * b),
                (true, false) => dst
                    .iter_mut()
                    .zip(vv)
                    .zip(uu)
                    .for_each(|((d, a), b)| *d += coef * a.conj() * b),
                (false, true) => dst
                    .iter_mut()
                    .zip(vv)
                    .zip(uu)
                    .for_each(|((d, a), b)| *d += coef * a * b.conj()),
                (true, true) => dst
                    .iter_mut()
                    .zip(vv)
                    .zip(uu)
                    .for_each(|((d, a), b)| *d += coef * (a * b).conj()),
            }
        }
        Ok(())
    }
}

/// Solves the system linearized at `coefficient` (`V`) with interior
/// source `forcing` (`F`) and boundary harmonics `boundary` (layout
/// `[mode][λ−1][t][y]`).
pub fn solve_linearized_resonant(
    couplings: &Couplings,
    coefficient: Option<&ProfileField>,
    forcing: Option<&ProfileField>,
    boundary: &[C],
    grid: &SlowGrid,
    opts: &SolverOptions,
) -> Result<(ProfileField, MarchStats)> {
    let transports: Vec<Transport> = couplings.modes.iter().map(|m| Transport::of(m)).collect();
    if couplings.modes.iter().any(|m| m.dxitau >= 0.0) {
        return Err(Error::ParameterOutOfRange("resonant modes must be incoming".into()));
    }
    let mut field = ProfileField::real_zeros(couplings.modes.clone(), couplings.bound, *grid);
    for other in [coefficient, forcing].into_iter().flatten() {
        if !field.same_layout(other) {
            return Err(Error::GridMismatch(
                "coefficient or forcing layout differs from the solution".into(),
            ));
        }
    }
    let settings = march_settings(grid, &transports, opts)?;
    let h = grid.dx / settings.substeps as f64;
    if let Some(v) = coefficient {
        let bound = couplings.operator_bound(v);
        if h * bound >= 1.0 {
            return Err(Error::UnboundedCoupling { value: h * bound });
        }
    }
    let marcher = Marcher::new(*grid, transports, couplings.bound, settings);
    let mut source = ResonantSource {
        terms: &couplings.terms,
        nh: couplings.bound,
        plane: grid.plane(),
        beta: cutoff_beta(grid.t_final, opts.vstar),
        coefficient: coefficient.map(SlabReader::new),
        forcing: forcing.map(SlabReader::new),
    };
    let active = forcing.is_some() || (coefficient.is_some() && !couplings.terms.is_empty());
    let src: Option<&mut dyn Source> = if active { Some(&mut source) } else { None };
    let stats = marcher.march(boundary, src, |i, slab| {
        field.slab_mut(i).copy_from_slice(slab);
        Ok(())
    })?;
    Ok((field, stats))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PicardOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
}

impl Default for PicardOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 50,
            max_halvings: 6,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PicardTrace {
    /// Relative L² updates of every iteration on the accepted horizon.
    pub updates: Vec<f64>,
    pub halvings: usize,
    pub t_final: f64,
}

#[derive(Debug, Clone)]
pub struct ResonantSolution {
    pub field: ProfileField,
    pub trace: PicardTrace,
}

/// First `nt` time rows of every `(mode, λ)` block.
pub fn truncate_time(slab: &[C], grid: &SlowGrid, nt: usize) -> Vec<C> {
    slab.chunks(grid.plane())
        .flat_map(|block| block[..nt * grid.ny].iter().copied())
        .collect()
}

fn picard(
    couplings: &Couplings,
    forcing: Option<&ProfileField>,
    boundary: &[C],
    grid: &SlowGrid,
    opts: &SolverOptions,
    picard: &PicardOptions,
    updates: &mut Vec<f64>,
) -> Result<ProfileField> {
    let (mut u, _) = solve_linearized_resonant(couplings, None, forcing, boundary, grid, opts)?;
    if couplings.terms.is_empty() {
        return Ok(u);
    }
    let mut rising = 0;
    for _ in 0..picard.max_iter {
        let (next, _) = solve_linearized_resonant(couplings, Some(&u), forcing, boundary, grid, opts)?;
        let norm = next.l2_norm();
        let diff = next.l2_distance(&u)?;
        let update = if norm > 0.0 { diff / norm } else { diff };
        u = next;
        if !update.is_finite() {
            return Err(Error::PicardDivergence {
                iterations: updates.len(),
                update,
            });
        }
        if updates.last().is_some_and(|prev| update > *prev) {
            rising += 1;
        } else {
            rising = 0;
        }
        updates.push(update);
        if update <= picard.tol {
            return Ok(u);
        }
        if rising >= 2 {
            break;
        }
    }
    Err(Error::PicardDivergence {
        iterations: updates.len(),
        update: updates.last().copied().unwrap_or(f64::NAN),
    })
}

/// Fixed point of [`solve_linearized_resonant`] started from the pure
/// transport solution; `T` is halved whenever the iteration fails.
pub fn solve_resonant_system(
    couplings: &Couplings,
    forcing: Option<&ProfileField>,
    boundary: &[C],
    grid: &SlowGrid,
    opts: &SolverOptions,
    picard_opts: &PicardOptions,
) -> Result<ResonantSolution> {
    let mut grid = *grid;
    let mut boundary = boundary.to_vec();
    let mut forcing = forcing.cloned();
    for halvings in 0..=picard_opts.max_halvings {
        let mut updates = Vec::new();
        match picard(
            couplings,
            forcing.as_ref(),
            &boundary,
            &grid,
            opts,
            picard_opts,
            &mut updates,
        ) {
            Ok(field) => {
                return Ok(ResonantSolution {
                    field,
                    trace: PicardTrace {
                        updates,
                        halvings,
                        t_final: grid.t_final,
                    },
                })
            }
            Err(Error::PicardDivergence { .. } | Error::UnboundedCoupling { .. })
                if halvings < picard_opts.max_halvings =>
            {
                let next = grid.halved_time()?;
                boundary = truncate_time(&boundary, &grid, next.nt);
                forcing = forcing.map(|f| f.truncated_time(next.nt)).transpose()?;
                grid = next;
            }
            Err(Error::PicardDivergence { .. } | Error::UnboundedCoupling { .. }) => {
                return Err(Error::NoContraction { halvings })
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NoContraction {
        halvings: picard_opts.max_halvings,
    })
}
