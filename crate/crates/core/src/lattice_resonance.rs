//! Boundary frequency lattice: lifting of lattice directions, glancing
//! distances, resonance enumeration, interaction coefficients and the
//! resonant partition.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary_spectral::{decompose_stable_with, RootClass, StableDecomposition};
use crate::char_variety::{eigen_structure_with, real_spectrum};
use crate::error::{Error, Result};
use crate::euler2d::{glancing_line_distance, EulerParams};
use crate::linalg;
use crate::system_model::LinearizedSystem;
use crate::tolerances::Tolerances;

/// Splits `n = λ n_0` with `n_0` coprime and its first nonzero entry positive.
pub fn normalize_direction(n: &[i64]) -> Result<(Vec<i64>, i64)> {
    let g = n.iter().fold(0, |g, &x| linalg::gcd(g, x));
    if g == 0 {
        return Err(Error::ZeroVector);
    }
    let first = *n.iter().find(|&&x| x != 0).expect("nonzero entry");
    let lambda = if first > 0 { g } else { -g };
    Ok((n.iter().map(|x| x / lambda).collect(), lambda))
}

/// Canonical directions with `|n_0|_∞ ≤ radius`, in lexicographic order.
pub fn box_directions(m: usize, radius: i64) -> Vec<Vec<i64>> {
    let mut out = Vec::new();
    for n in box_points(m, radius) {
        if let Ok((n0, lambda)) = normalize_direction(&n) {
            if lambda == 1 {
                out.push(n0);
            }
        }
    }
    out
}

/// Every nonzero integer vector with `|n|_∞ ≤ radius`.
pub fn box_points(m: usize, radius: i64) -> Vec<Vec<i64>> {
    let side = 2 * radius + 1;
    let total = (side as usize).pow(m as u32);
    (0..total)
        .map(|mut idx| {
            (0..m)
                .rev()
                .map(|_| {
                    let c = (idx % side as usize) as i64 - radius;
                    idx /= side as usize;
                    c
                })
                .collect::<Vec<i64>>()
                .into_iter()
                .rev()
                .collect()
        })
        .filter(|n: &Vec<i64>| n.iter().any(|&x| x != 0))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LatticeDirection {
    pub n0: Vec<i64>,
    /// `n_0 · ζ`.
    pub zeta: Vec<f64>,
}

/// The lattice `{n · ζ}` generated by the boundary frequencies.
#[derive(Debug, Clone)]
pub struct Lattice {
    pub lin: LinearizedSystem,
    pub zetas: Vec<DVector<f64>>,
    pub tol: Tolerances,
}

impl Lattice {
    pub fn new(lin: LinearizedSystem, zetas: Vec<DVector<f64>>) -> Result<Self> {
        if zetas.iter().any(|z| z.len() != lin.d()) {
            return Err(Error::DimensionMismatch("boundary frequency has wrong length".into()));
        }
        Ok(Self {
            lin,
            zetas,
            tol: Tolerances::default(),
        })
    }

    pub fn m(&self) -> usize {
        self.zetas.len()
    }

    pub fn frequency(&self, n: &[i64]) -> Vec<f64> {
        let mut z = vec![0.0; self.lin.d()];
        for (c, zeta) in n.iter().zip(&self.zetas) {
            for (zi, v) in z.iter_mut().zip(zeta.iter()) {
                *zi += *c as f64 * v;
            }
        }
        z
    }

    pub fn direction(&self, n: &[i64]) -> Result<(LatticeDirection, i64)> {
        let (n0, lambda) = normalize_direction(n)?;
        let zeta = self.frequency(&n0);
        Ok((LatticeDirection { n0, zeta }, lambda))
    }
}

/// Identity of a real root over a lattice direction.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ModeId {
    pub n0: Vec<i64>,
    /// Index among the real roots sorted ascending.
    pub root: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ModeKey {
    pub id: ModeId,
    pub dir: LatticeDirection,
    pub xi0: f64,
    pub branch: usize,
    pub class: RootClass,
    /// Unit polarization, reused for every harmonic of the direction.
    #[serde(skip)]
    pub e: DVector<f64>,
    #[serde(skip)]
    pub pitilde_e: DVector<f64>,
    pub dxitau: f64,
    /// `∇_{η,ξ} τ` on the branch.
    pub grad: Vec<f64>,
}

impl ModeKey {
    /// `|(λ n_0·ζ, λ ξ_0)|`.
    pub fn frequency_norm(&self, lambda: i64) -> f64 {
        let s: f64 = self.dir.zeta.iter().map(|x| x * x).sum::<f64>() + self.xi0 * self.xi0;
        lambda.unsigned_abs() as f64 * s.sqrt()
    }

    pub fn alpha(&self, lambda: i64) -> Vec<f64> {
        let l = lambda as f64;
        let mut a: Vec<f64> = self.dir.zeta.iter().map(|x| l * x).collect();
        a.push(l * self.xi0);
        a
    }
}

/// Real modes and the elliptic roots above one lattice direction.
#[derive(Debug, Clone)]
pub struct LiftedDirection {
    pub dir: LatticeDirection,
    pub modes: Vec<Arc<ModeKey>>,
    pub elliptic: Vec<Complex64>,
    pub decomposition: StableDecomposition,
}

pub fn lift_direction(lat: &Lattice, dir: &LatticeDirection) -> Result<LiftedDirection> {
    let lin = &lat.lin;
    let d = lin.d();
    if dir.zeta.iter().all(|x| *x == 0.0) {
        return Err(Error::ZeroFrequency);
    }
    let dec = match decompose_stable_with(lin, &dir.zeta, &lat.tol) {
        Err(Error::GlancingFrequency { .. }) | Err(Error::DefectiveElliptic { .. }) => {
            return Err(Error::GlancingOnLattice { n: dir.n0.clone() })
        }
        other => other?,
    };
    let mut modes = Vec::new();
    for (root, (j, xi)) in dec.real_roots().into_iter().enumerate() {
        let es = eigen_structure_with(lin, &dir.zeta[1..d], xi, &lat.tol)?;
        let (k, dist) = es.nearest_branch(dir.zeta[0]);
        let scale = dir.zeta.iter().map(|x| x * x).sum::<f64>().sqrt();
        if dist > 1e3 * lat.tol.characteristic * scale.max(1.0) {
            return Err(Error::NearCharacteristicAmbiguity {
                alpha: [dir.zeta.clone(), vec![xi]].concat(),
            });
        }
        let e = es.rights[k].clone();
        let pitilde_e = &es.pis_tilde[k] * &e;
        let grad = crate::char_variety::group_velocity(&es, k)?;
        modes.push(Arc::new(ModeKey {
            id: ModeId {
                n0: dir.n0.clone(),
                root,
            },
            dir: dir.clone(),
            xi0: xi,
            branch: k,
            class: dec.roots[j].class,
            e,
            pitilde_e,
            dxitau: grad[d - 1],
            grad,
        }));
    }
    let elliptic = dec.roots.iter().filter(|r| !r.class.is_real()).map(|r| r.xi).collect();
    Ok(LiftedDirection {
        dir: dir.clone(),
        modes,
        elliptic,
        decomposition: dec,
    })
}

/// Lifts every direction of the box, aborting on the first glancing one.
pub fn lift_box(lat: &Lattice, radius: i64) -> Result<Vec<LiftedDirection>> {
    box_directions(lat.m(), radius)
        .par_iter()
        .map(|n0| {
            let (dir, _) = lat.direction(n0)?;
            lift_direction(lat, &dir)
        })
        .collect()
}

/// Rays of the glancing cone in `ζ`-space.
#[derive(Debug, Clone)]
pub struct GlancingSet {
    pub rays: Vec<Vec<f64>>,
}

impl GlancingSet {
    /// Locates zeros of `∂_ξτ_k` along `(η, ξ) = (cos θ ω, sin θ)` by sign
    /// changes on a `θ` grid refined with bisection.
    pub fn compute(lin: &LinearizedSystem, n_samples: usize) -> Result<Self> {
        let d = lin.d();
        let tol = Tolerances::default();
        let omegas: Vec<Vec<f64>> = if d == 2 {
            vec![vec![1.0]]
        } else {
            linalg::sphere_samples(d - 1, (n_samples / 256).max(1), 11)
        };
        let per = (n_samples / omegas.len()).max(8);
        let point = |omega: &[f64], theta: f64| -> (Vec<f64>, f64) {
            (omega.iter().map(|w| theta.cos() * w).collect(), theta.sin())
        };
        let dx = |omega: &[f64], theta: f64| -> Result<Vec<f64>> {
            let (eta, xi) = point(omega, theta);
            let es = eigen_structure_with(lin, &eta, xi, &tol)?;
            Ok((0..es.n()).map(|k| es.dxitau(k)).collect())
        };
        let mut rays = Vec::new();
        for omega in &omegas {
            let thetas: Vec<f64> = (0..=per)
                .map(|j| 2.0 * std::f64::consts::PI * j as f64 / per as f64)
                .collect();
            let vals: Vec<Vec<f64>> = thetas.iter().map(|&t| dx(omega, t)).collect::<Result<_>>()?;
            for j in 0..per {
                for k in 0..lin.n() {
                    let (fa, fb) = (vals[j][k], vals[j + 1][k]);
                    if fa == 0.0 || fa * fb < 0.0 {
                        let (mut a, mut b, mut fa) = (thetas[j], thetas[j + 1], fa);
                        if fa != 0.0 {
                            for _ in 0..80 {
                                let c = 0.5 * (a + b);
                                let fc = dx(omega, c)?[k];
                                if fc == 0.0 {
                                    a = c;
                                    break;
                                }
                                if fa * fc < 0.0 {
                                    b = c;
                                } else {
                                    a = c;
                                    fa = fc;
                                }
                            }
                        }
                        let (eta, xi) = point(omega, a);
                        let es = eigen_structure_with(lin, &eta, xi, &tol)?;
                        let mut ray = vec![es.taus[k]];
                        ray.extend(eta);
                        let r = ray.iter().map(|x| x * x).sum::<f64>().sqrt();
                        rays.push(ray.into_iter().map(|x| x / r).collect());
                    }
                }
            }
        }
        Ok(Self { rays })
    }

    pub fn distance(&self, zeta: &[f64]) -> f64 {
        let zn = zeta.iter().map(|x| x * x).sum::<f64>().sqrt();
        self.rays
            .iter()
            .map(|g| {
                let t: f64 = g.iter().zip(zeta).map(|(a, b)| a * b).sum();
                if t <= 0.0 {
                    zn
                } else {
                    zeta.iter().zip(g).map(|(z, g)| (z - t * g).powi(2)).sum::<f64>().sqrt()
                }
            })
            .fold(f64::INFINITY, f64::min)
    }
}

/// How distances to the glancing set are evaluated.
#[derive(Debug, Clone)]
pub enum GlancingModel {
    Generic(GlancingSet),
    /// Exact distance to the lines `|τ| = √(c_0² − u_0²)|η|`.
    Euler(EulerParams),
}

pub fn glancing_distance(model: &GlancingModel, zeta: &[f64]) -> f64 {
    match model {
        GlancingModel::Generic(set) => set.distance(zeta),
        GlancingModel::Euler(p) => glancing_line_distance(p, [zeta[0], zeta[1]]),
    }
}

fn is_exactly_glancing(dist: f64, zeta: &[f64]) -> bool {
    dist <= 1e-12 * zeta.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SmallDivisorReport {
    pub box_radius: i64,
    /// Lower envelope `dist(n·ζ, 𝒢) ≥ c |n·ζ|^{−a_1}`.
    pub c: f64,
    pub a1: f64,
    pub points: usize,
    /// Points strictly below the fitted envelope.
    pub violations: usize,
    pub min_distance: f64,
}

const FIT_BINS: usize = 12;

/// Fits `dist(n·ζ, 𝒢) ≥ c |n·ζ|^{−a_1}` over the box: the exponent from the
/// per-bin minima of `log dist` against `log |n|_∞`, then the largest `c`.
pub fn small_divisor_fit(lat: &Lattice, model: &GlancingModel, box_radius: i64) -> Result<SmallDivisorReport> {
    if box_radius < 2 {
        return Err(Error::ParameterOutOfRange("box radius must be at least 2".into()));
    }
    let mut pts = Vec::new();
    let mut min_distance = f64::INFINITY;
    let mut points = box_points(lat.m(), box_radius);
    points.sort_by_key(|n| n.iter().map(|x| x.abs()).max());
    for n in points {
        let z = lat.frequency(&n);
        let zn = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        if zn == 0.0 {
            continue;
        }
        let g = glancing_distance(model, &z);
        if is_exactly_glancing(g, &z) {
            return Err(Error::GlancingOnLattice { n });
        }
        min_distance = min_distance.min(g);
        if !g.is_finite() {
            continue;
        }
        let height = n.iter().map(|x| x.abs()).max().unwrap_or(1) as f64;
        pts.push((height.ln(), g.ln(), zn.ln()));
    }
    if pts.is_empty() {
        return Ok(SmallDivisorReport {
            box_radius,
            c: f64::INFINITY,
            a1: 0.0,
            points: 0,
            violations: 0,
            min_distance,
        });
    }
    let (lo, hi) = pts
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    // Shells of constant height are complete inside the box, so the
    // envelope is binned by height and transferred to |n·ζ| afterwards.
    let width = ((hi - lo) / FIT_BINS as f64).max(f64::MIN_POSITIVE);
    let mut bins: Vec<Option<(f64, f64)>> = vec![None; FIT_BINS];
    for &(x, y, _) in &pts {
        let b = (((x - lo) / width) as usize).min(FIT_BINS - 1);
        if bins[b].is_none_or(|(_, by)| y < by) {
            bins[b] = Some((x, y));
        }
    }
    let env: Vec<(f64, f64)> = bins.into_iter().flatten().collect();
    let k = env.len() as f64;
    let mx = env.iter().map(|p| p.0).sum::<f64>() / k;
    let my = env.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = env.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = env.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a1 = -slope;
    let log_c = pts.iter().map(|&(_, y, z)| y + a1 * z).fold(f64::INFINITY, f64::min);
    let violations = pts.iter().filter(|&&(_, y, z)| y < log_c - a1 * z - 1e-12).count();
    Ok(SmallDivisorReport {
        box_radius,
        c: log_c.exp(),
        a1,
        points: pts.len(),
        violations,
        min_distance,
    })
}

/// A mode evaluated at harmonic `λ`.
#[derive(Debug, Clone, Copy)]
pub struct ScaledMode<'a> {
    pub mode: &'a ModeKey,
    pub lambda: i64,
}

/// Projection onto the polarization of a target mode, reusable across
/// source pairs: `Γ` is linear in the derivative frequency `ζ'`.
#[derive(Debug, Clone)]
pub struct GammaProbe {
    pitilde: DMatrix<f64>,
    target: DVector<f64>,
    norm2: f64,
}

impl GammaProbe {
    pub fn new(lin: &LinearizedSystem, r: &ModeKey) -> Result<Self> {
        let target = r.pitilde_e.clone();
        let norm2 = target.norm_squared();
        if norm2 <= 1e-24 {
            return Err(Error::NullProjectedPolarization { norm: norm2.sqrt() });
        }
        let es = eigen_structure_with(lin, &r.dir.zeta[1..], r.xi0, &Tolerances::default())?;
        Ok(Self {
            pitilde: es.pis_tilde[r.branch].clone(),
            target,
            norm2,
        })
    }

    /// `⟨π̃_r L̃_1(e_p, ζ') e_q, π̃_r E_r⟩ / ‖π̃_r E_r‖²` and the relative
    /// collinearity residual.
    pub fn eval(
        &self,
        lin: &LinearizedSystem,
        e_p: &DVector<f64>,
        zeta: &[f64],
        e_q: &DVector<f64>,
    ) -> Result<(f64, f64)> {
        let v = &self.pitilde * (lin.apply_l1_tilde(e_p, zeta)? * e_q);
        let gamma = v.dot(&self.target) / self.norm2;
        let vn = v.norm();
        let residual = if vn > 0.0 {
            (&v - &self.target * gamma).norm() / vn
        } else {
            0.0
        };
        Ok((gamma, residual))
    }
}

/// `Γ = ⟨π̃_r L̃_1(E_p, λ_q n_q·ζ) E_q, π̃_r E_r⟩ / ‖π̃_r E_r‖²` together with
/// the relative collinearity residual.
pub fn gamma_coefficient(
    lin: &LinearizedSystem,
    p: ScaledMode,
    q: ScaledMode,
    r: ScaledMode,
) -> Result<(Complex64, f64)> {
    let zq: Vec<f64> = q.mode.dir.zeta.iter().map(|x| q.lambda as f64 * x).collect();
    let (gamma, residual) = GammaProbe::new(lin, r.mode)?.eval(lin, &p.mode.e, &zq, &q.mode.e)?;
    Ok((Complex64::new(gamma, 0.0), residual))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ResonanceType {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
    #[serde(rename = "self")]
    SelfInteraction,
}

impl ResonanceType {
    pub fn label(self) -> &'static str {
        match self {
            Self::One => "1",
            Self::Two => "2",
            Self::SelfInteraction => "self",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Resonance {
    pub lp: i64,
    pub lq: i64,
    pub lr: i64,
    pub p: Arc<ModeKey>,
    pub q: Arc<ModeKey>,
    pub r: Arc<ModeKey>,
    pub gamma_pq: Complex64,
    pub gamma_pr: Complex64,
    pub rtype: ResonanceType,
    pub residual: f64,
}

impl Resonance {
    pub fn is_self(&self) -> bool {
        self.rtype == ResonanceType::SelfInteraction
    }

    /// Sorted key of the unordered pair and the target.
    pub fn key(&self) -> RelationKey {
        relation_key((self.lp, &self.p.id), (self.lq, &self.q.id), (self.lr, &self.r.id))
    }
}

pub type RelationKey = ((i64, ModeId), (i64, ModeId), (i64, ModeId));

fn relation_key(a: (i64, &ModeId), b: (i64, &ModeId), r: (i64, &ModeId)) -> RelationKey {
    let (a, b) = ((a.0, a.1.clone()), (b.0, b.1.clone()));
    let (a, b) = if a <= b { (a, b) } else { (b, a) };
    (a, b, (r.0, r.1.clone()))
}

/// The same physical relation as a set of three signed modes: every stored
/// row of the relation shares this key.
pub fn relation_class(res: &Resonance) -> [(i64, ModeId); 3] {
    let mut v = [
        (res.lp, res.p.id.clone()),
        (res.lq, res.q.id.clone()),
        (-res.lr, res.r.id.clone()),
    ];
    v.sort();
    if v.iter().filter(|x| x.0 < 0).count() > 1 {
        for x in v.iter_mut() {
            x.0 = -x.0;
        }
        v.sort();
    }
    v
}

/// Type 1 iff `|Γ_pq + Γ_pr| ≤ C_0 |α_p|`.
pub fn classify_resonance_type(res: &Resonance, c0: f64) -> ResonanceType {
    if res.is_self() {
        return ResonanceType::SelfInteraction;
    }
    classify_gammas(res.gamma_pq, res.gamma_pr, res.p.frequency_norm(res.lp), c0)
}

pub fn classify_gammas(gamma_pq: Complex64, gamma_pr: Complex64, alpha_p: f64, c0: f64) -> ResonanceType {
    if (gamma_pq + gamma_pr).norm() <= c0 * alpha_p {
        ResonanceType::One
    } else {
        ResonanceType::Two
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NearMiss {
    pub lp: i64,
    pub lq: i64,
    pub lr: i64,
    pub p: ModeId,
    pub q: ModeId,
    pub r: ModeId,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceEnumeration {
    pub box_radius: i64,
    pub harmonic_bound: i64,
    pub res_tol: f64,
    pub directions: usize,
    pub modes: usize,
    pub resonances: Vec<Resonance>,
    pub near_misses: Vec<NearMiss>,
    /// Branches of the system found to be linear in `(η, ξ)`.
    pub linear_branches: Vec<usize>,
}

impl ResonanceEnumeration {
    pub fn non_self(&self) -> impl Iterator<Item = &Resonance> {
        self.resonances.iter().filter(|r| !r.is_self())
    }

    pub fn all_modes(&self) -> BTreeSet<ModeId> {
        self.resonances
            .iter()
            .flat_map(|r| [r.p.id.clone(), r.q.id.clone(), r.r.id.clone()])
            .collect()
    }
}

/// Branches `k` with `τ_k(η, ξ)` linear, found by fitting a linear form on
/// sampled directions.
pub fn linear_branches(lin: &LinearizedSystem) -> Result<Vec<usize>> {
    let d = lin.d();
    let tol = Tolerances::default();
    let pts = linalg::sphere_samples(d, 4 * d + 8, 5);
    let mut taus = Vec::with_capacity(pts.len());
    for p in &pts {
        taus.push(eigen_structure_with(lin, &p[..d - 1], p[d - 1], &tol)?.taus);
    }
    let x = nalgebra::DMatrix::from_fn(pts.len(), d, |i, j| pts[i][j]);
    let mut out = Vec::new();
    for k in 0..lin.n() {
        let y = DVector::from_fn(pts.len(), |i, _| taus[i][k]);
        let coef = x
            .clone()
            .svd(true, true)
            .solve(&y, 1e-14)
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        if (&x * coef - &y).amax() <= 1e-10 * y.amax().max(1.0) {
            out.push(k);
        }
    }
    Ok(out)
}

struct Candidate {
    key: RelationKey,
    lp: i64,
    lq: i64,
    lr: i64,
    p: Arc<ModeKey>,
    q: Arc<ModeKey>,
    r: Arc<ModeKey>,
    residual: f64,
    is_self: bool,
}

fn residual_at(lin: &LinearizedSystem, alpha: &[f64], tol: &Tolerances) -> Result<f64> {
    let d = lin.d();
    let taus = real_spectrum(lin, &alpha[1..d], alpha[d], tol)?;
    let an = alpha.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(taus.iter().map(|t| (alpha[0] - t).abs()).fold(f64::INFINITY, f64::min) / an)
}

/// Exhaustive search for `λ_p α_p + λ_q α_q = λ_r α_r` among lifted modes of
/// the box with `|λ| ≤ harmonic_bound`. Rows are stored with
/// `gcd(λ_p, λ_q, λ_r) = 1` and `λ_r > 0`; a same-mode pair contributes a
/// single self-interaction row `(1, 1, 2)`.
pub fn enumerate_resonances(
    lat: &Lattice,
    lifted: &[LiftedDirection],
    box_radius: i64,
    harmonic_bound: i64,
    res_tol: f64,
) -> Result<ResonanceEnumeration> {
    let lin = &lat.lin;
    let linear = linear_branches(lin)?;
    let index: HashMap<&[i64], &LiftedDirection> = lifted.iter().map(|l| (l.dir.n0.as_slice(), l)).collect();
    let in_box = |n: &[i64]| n.iter().all(|x| x.abs() <= box_radius);
    let entries: Vec<(i64, &Arc<ModeKey>)> = lifted
        .iter()
        .filter(|l| in_box(&l.dir.n0))
        .flat_map(|l| l.modes.iter())
        .flat_map(|m| {
            (-harmonic_bound..=harmonic_bound)
                .filter(|&l| l != 0)
                .map(move |l| (l, m))
        })
        .collect();
    let tol = &lat.tol;
    let found: Vec<Vec<Candidate>> = (0..entries.len())
        .into_par_iter()
        .map(|i| -> Result<Vec<Candidate>> {
            let (lp, p) = entries[i];
            let mut out = Vec::new();
            for &(lq, q) in &entries[i..] {
                let collinear = p.id.n0 == q.id.n0;
                if collinear && p.id.root == q.id.root {
                    if lp == 1 && lq == 1 {
                        out.push(Candidate {
                            key: relation_key((1, &p.id), (1, &q.id), (2, &p.id)),
                            lp: 1,
                            lq: 1,
                            lr: 2,
                            p: p.clone(),
                            q: q.clone(),
                            r: p.clone(),
                            residual: 0.0,
                            is_self: true,
                        });
                    }
                    continue;
                }
                let n_sum: Vec<i64> = p.id.n0.iter().zip(&q.id.n0).map(|(a, b)| lp * a + lq * b).collect();
                let Ok((n0, lr)) = normalize_direction(&n_sum) else {
                    continue;
                };
                if lr.abs() > harmonic_bound || !in_box(&n0) {
                    continue;
                }
                let Some(target) = index.get(n0.as_slice()) else {
                    continue;
                };
                let xi_sum = lp as f64 * p.xi0 + lq as f64 * q.xi0;
                let mut alpha: Vec<f64> = p
                    .dir
                    .zeta
                    .iter()
                    .zip(&q.dir.zeta)
                    .map(|(a, b)| lp as f64 * a + lq as f64 * b)
                    .collect();
                alpha.push(xi_sum);
                let an = alpha.iter().map(|x| x * x).sum::<f64>().sqrt();
                for r in &target.modes {
                    if (lr as f64 * r.xi0 - xi_sum).abs() > 1e-6 * an {
                        continue;
                    }
                    let exact = p.branch == q.branch && q.branch == r.branch && linear.contains(&p.branch);
                    let residual = residual_at(lin, &alpha, tol)?;
                    if residual > 10.0 * res_tol && !exact {
                        continue;
                    }
                    let g = linalg::gcd(linalg::gcd(lp, lq), lr);
                    let s = if lr > 0 { g } else { -g };
                    let (cp, cq, cr) = (lp / s, lq / s, lr / s);
                    out.push(Candidate {
                        key: relation_key((cp, &p.id), (cq, &q.id), (cr, &r.id)),
                        lp: cp,
                        lq: cq,
                        lr: cr,
                        p: p.clone(),
                        q: q.clone(),
                        r: r.clone(),
                        residual: if exact { residual.min(res_tol) } else { residual },
                        is_self: collinear,
                    });
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut rows: BTreeMap<RelationKey, Candidate> = BTreeMap::new();
    for c in found.into_iter().flatten() {
        rows.entry(c.key.clone()).or_insert(c);
    }
    let mut resonances = Vec::new();
    let mut near_misses = Vec::new();
    for (_, c) in rows {
        let (p, q, r) = (c.p.clone(), c.q.clone(), c.r.clone());
        if c.residual > res_tol {
            near_misses.push(NearMiss {
                lp: c.lp,
                lq: c.lq,
                lr: c.lr,
                p: p.id.clone(),
                q: q.id.clone(),
                r: r.id.clone(),
                residual: c.residual,
            });
            continue;
        }
        let sp = ScaledMode { mode: &p, lambda: c.lp };
        let (gamma_pq, _) = gamma_coefficient(
            lin,
            sp,
            ScaledMode { mode: &q, lambda: c.lq },
            ScaledMode { mode: &r, lambda: c.lr },
        )?;
        let (gamma_pr, _) = gamma_coefficient(
            lin,
            sp,
            ScaledMode {
                mode: &r,
                lambda: -c.lr,
            },
            ScaledMode {
                mode: &q,
                lambda: -c.lq,
            },
        )?;
        resonances.push(Resonance {
            lp: c.lp,
            lq: c.lq,
            lr: c.lr,
            p,
            q,
            r,
            gamma_pq,
            gamma_pr,
            rtype: if c.is_self {
                ResonanceType::SelfInteraction
            } else {
                ResonanceType::One
            },
            residual: c.residual,
        });
    }
    Ok(ResonanceEnumeration {
        box_radius,
        harmonic_bound,
        res_tol,
        directions: lifted.len(),
        modes: lifted.iter().map(|l| l.modes.len()).sum(),
        resonances,
        near_misses,
        linear_branches: linear,
    })
}

/// `C_0` calibrated on an enumeration: twice the largest symmetry defect
/// `|Γ_pq + Γ_pr| / |α_p|`, twice the inverse of the smallest `|π̃E|` over
/// resonant incoming modes, and at least 1.
pub fn calibrate_c0(enumeration: &ResonanceEnumeration) -> f64 {
    let defect = enumeration
        .non_self()
        .map(|r| (r.gamma_pq + r.gamma_pr).norm() / r.p.frequency_norm(r.lp))
        .fold(0.0, f64::max);
    let min_pe = enumeration
        .non_self()
        .flat_map(|r| [&r.p, &r.q, &r.r])
        .map(|m| m.pitilde_e.norm())
        .fold(f64::INFINITY, f64::min);
    let inv = if min_pe.is_finite() && min_pe > 0.0 {
        2.0 / min_pe
    } else {
        0.0
    };
    (2.0 * defect).max(inv).max(1.0)
}

/// Applies `classify_resonance_type` to every row.
pub fn classify_all(enumeration: &mut ResonanceEnumeration, c0: f64) {
    for r in &mut enumeration.resonances {
        r.rtype = classify_resonance_type(r, c0);
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FrequencyPartition {
    pub incoming_resonant: BTreeSet<ModeId>,
    pub outgoing_resonant: BTreeSet<ModeId>,
    pub nonresonant: BTreeSet<ModeId>,
    /// `min |π̃E|` over the resonant incoming modes.
    pub min_pitilde_e: Option<f64>,
}

pub fn partition_frequency_sets(resonances: &[Resonance], incoming: &[Arc<ModeKey>]) -> Result<FrequencyPartition> {
    let mut inc = BTreeSet::new();
    let mut out = BTreeSet::new();
    let mut min_pe: Option<f64> = None;
    for r in resonances.iter().filter(|r| !r.is_self()) {
        let classes = [r.p.class, r.q.class, r.r.class];
        let all_in = classes.iter().all(|c| *c == RootClass::Incoming);
        let all_out = classes.iter().all(|c| *c == RootClass::Outgoing);
        if !all_in && !all_out {
            return Err(Error::PartitionClosureViolation(format!(
                "{:?} + {:?} -> {:?} mixes incoming and outgoing modes",
                r.p.id, r.q.id, r.r.id
            )));
        }
        let set = if all_in { &mut inc } else { &mut out };
        for m in [&r.p, &r.q, &r.r] {
            set.insert(m.id.clone());
            if all_in {
                let v = m.pitilde_e.norm();
                min_pe = Some(min_pe.map_or(v, |x| x.min(v)));
            }
        }
    }
    let nonresonant = incoming
        .iter()
        .filter(|m| m.class == RootClass::Incoming && !inc.contains(&m.id))
        .map(|m| m.id.clone())
        .collect();
    Ok(FrequencyPartition {
        incoming_resonant: inc,
        outgoing_resonant: out,
        nonresonant,
        min_pitilde_e: min_pe,
    })
}

/// Least-squares fit `|y| ≤ C |x|^h` in log space, with `C` shifted to bound
/// every sample. Zero values are ignored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerFit {
    pub exponent: f64,
    pub constant: f64,
    pub points: usize,
}

pub fn power_fit(samples: &[(f64, f64)]) -> PowerFit {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .filter(|(x, y)| *x > 0.0 && y.abs() > 1e-300)
        .map(|(x, y)| (x.ln(), y.abs().ln()))
        .collect();
    if pts.is_empty() {
        return PowerFit {
            exponent: 0.0,
            constant: 0.0,
            points: 0,
        };
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let h = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let log_c = pts.iter().map(|&(x, y)| y - h * x).fold(f64::NEG_INFINITY, f64::max);
    PowerFit {
        exponent: h,
        constant: log_c.exp(),
        points: pts.len(),
    }
}

/// `(|n_0|, |Γ((n,ξ),(n,ξ))|)` for every incoming mode.
pub fn self_interaction_samples(lin: &LinearizedSystem, lifted: &[LiftedDirection]) -> Result<Vec<(f64, f64)>> {
    let mut out = Vec::new();
    for l in lifted {
        for m in l.modes.iter().filter(|m| m.class == RootClass::Incoming) {
            let s = ScaledMode { mode: m, lambda: 1 };
            let (g, _) = gamma_coefficient(lin, s, s, s)?;
            let n = l.dir.n0.iter().map(|&x| (x * x) as f64).sum::<f64>().sqrt();
            out.push((n, g.norm()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct AssumptionOptions {
    pub box_radius: i64,
    pub harmonic_bound: i64,
    pub res_tol: f64,
    /// Calibrated from the enumeration when absent.
    pub c0: Option<f64>,
    pub kl_samples: usize,
    pub small_divisor_box: i64,
    pub max_divisor_exponent: f64,
    pub max_self_exponent: f64,
    pub glancing: Option<GlancingModel>,
}

impl Default for AssumptionOptions {
    fn default() -> Self {
        Self {
            box_radius: 6,
            harmonic_bound: 6,
            res_tol: 1e-9,
            c0: None,
            kl_samples: 2000,
            small_divisor_box: 20,
            max_divisor_exponent: 1.7,
            max_self_exponent: 3.0,
            glancing: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AssumptionReport {
    pub box_radius: i64,
    pub harmonic_bound: i64,
    pub c0: f64,
    pub checks: Vec<crate::report::Check>,
    pub pass: bool,
}

/// Runs every structural check on the system and its frequency lattice.
/// Failures of individual checks are recorded in the report.
pub fn check_assumptions(
    system: &crate::system_model::HyperbolicSystem,
    lin: &LinearizedSystem,
    opts: &AssumptionOptions,
) -> Result<AssumptionReport> {
    use crate::boundary_spectral::{lopatinskii_scan, DEFAULT_GAMMAS};
    use crate::char_variety::check_strict_hyperbolicity;
    use crate::report::Check;

    if opts.box_radius < 1 {
        return Err(Error::ParameterOutOfRange("box radius must be at least 1".into()));
    }
    let mut checks = Vec::new();
    let ad = lin.ad();
    let smallest = ad
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    checks.push(Check::at_least(
        "noncharacteristic_boundary",
        smallest / ad.norm(),
        1e-8,
    ));
    let hyp = check_strict_hyperbolicity(lin, 2000);
    checks.push(Check::new("strict_hyperbolicity", hyp.min_gap, 1e-8, hyp.pass));
    match system.find_integer_relation(opts.box_radius.max(opts.small_divisor_box), 1e-12) {
        None => checks.push(Check::new("frequency_independence", 0.0, 0.0, true)),
        Some(k) => checks
            .push(Check::new("frequency_independence", 1.0, 0.0, false).with_detail(format!("integer relation {k:?}"))),
    }
    match lopatinskii_scan(lin, system.boundary(), opts.kl_samples, &DEFAULT_GAMMAS) {
        Ok(r) => checks.push(
            Check::at_least("kreiss_lopatinskii", r.min_det, Tolerances::default().lopatinskii)
                .with_detail(format!("{} samples, worst at {:?}", r.samples, r.worst)),
        ),
        Err(e) => checks.push(Check::failed("kreiss_lopatinskii", e.to_string())),
    }
    let lat = Lattice::new(lin.clone(), system.zetas().to_vec())?;
    let model = match &opts.glancing {
        Some(m) => m.clone(),
        None => GlancingModel::Generic(GlancingSet::compute(lin, 10_000)?),
    };
    match small_divisor_fit(&lat, &model, opts.small_divisor_box.max(2)) {
        Ok(sd) => {
            checks.push(
                Check::at_least("lattice_glancing_exclusion", sd.min_distance, 0.0)
                    .with_detail(format!("box {}", sd.box_radius)),
            );
            checks.push(
                Check::at_most("small_divisor_exponent", sd.a1, opts.max_divisor_exponent)
                    .with_detail(format!("c = {:e}", sd.c)),
            );
        }
        Err(e) => {
            checks.push(Check::failed("lattice_glancing_exclusion", e.to_string()));
            checks.push(Check::failed("small_divisor_exponent", "not fitted"));
        }
    }
    let lifted = match lift_box(&lat, opts.box_radius) {
        Ok(l) => l,
        Err(e) => {
            checks.push(Check::failed("lattice_lift", e.to_string()));
            return Ok(finish(opts, opts.c0.unwrap_or(f64::NAN), checks));
        }
    };
    let mut en = match enumerate_resonances(&lat, &lifted, opts.box_radius, opts.harmonic_bound, opts.res_tol) {
        Ok(en) => en,
        Err(e) => {
            checks.push(Check::failed("resonance_enumeration", e.to_string()));
            return Ok(finish(opts, opts.c0.unwrap_or(f64::NAN), checks));
        }
    };
    let c0 = opts.c0.unwrap_or_else(|| calibrate_c0(&en));
    classify_all(&mut en, c0);
    let radius = format!("none beyond those listed up to box radius {}", opts.box_radius);
    let mixed = en
        .non_self()
        .filter(|r| {
            let inc = [r.p.class, r.q.class, r.r.class]
                .iter()
                .filter(|c| **c == RootClass::Incoming)
                .count();
            inc != 0 && inc != 3
        })
        .count();
    checks.push(Check::at_most("no_incoming_outgoing_resonance", mixed as f64, 0.0).with_detail(radius.clone()));
    let outgoing = en.non_self().filter(|r| r.p.class == RootClass::Outgoing).count();
    checks.push(
        Check::new("outgoing_resonances_in_box", outgoing as f64, f64::INFINITY, true).with_detail(radius.clone()),
    );
    let type2 = en.resonances.iter().filter(|r| r.rtype == ResonanceType::Two).count();
    checks.push(Check::new("type2_resonances_in_box", type2 as f64, f64::INFINITY, true).with_detail(radius));
    let incoming: Vec<Arc<ModeKey>> = lifted.iter().flat_map(|l| l.modes.iter().cloned()).collect();
    match partition_frequency_sets(&en.resonances, &incoming) {
        Ok(part) => {
            let v = part.min_pitilde_e.unwrap_or(f64::INFINITY);
            checks.push(Check::at_least("projected_polarization_bound", v, 1.0 / c0));
        }
        Err(e) => checks.push(Check::failed("projected_polarization_bound", e.to_string())),
    }
    let fit = power_fit(&self_interaction_samples(lin, &lifted)?);
    checks.push(
        Check::at_most("self_interaction_growth", fit.exponent, opts.max_self_exponent)
            .with_detail(format!("C = {:e} over {} modes", fit.constant, fit.points)),
    );
    Ok(finish(opts, c0, checks))
}

fn finish(opts: &AssumptionOptions, c0: f64, checks: Vec<crate::report::Check>) -> AssumptionReport {
    AssumptionReport {
        box_radius: opts.box_radius,
        harmonic_bound: opts.harmonic_bound,
        c0,
        pass: checks.iter().all(|c| c.pass),
        checks,
    }
}
