//! Boundary symbol `𝒜(ζ)`, the stable subspace `E_−(ζ)` with its spectral
//! splitting, the Lopatinskii determinant, boundary-data inversion and the
//! evanescent propagator.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::char_variety::{classify_frequency_with, FrequencyTag};
use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix, CVector};
use crate::system_model::LinearizedSystem;
use crate::tolerances::Tolerances;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone)]
pub struct BoundarySymbol {
    /// `σ = τ − iγ`.
    pub sigma: Complex64,
    pub eta: Vec<f64>,
    /// `𝒜(ζ) = −i A_d^{-1}(σ I + Σ η_j A_j)`.
    pub a: CMatrix,
}

pub fn boundary_symbol(lin: &LinearizedSystem, sigma: Complex64, eta: &[f64]) -> Result<BoundarySymbol> {
    let (d, n) = (lin.d(), lin.n());
    if eta.len() != d - 1 {
        return Err(Error::DimensionMismatch(format!(
            "eta has length {}, expected {}",
            eta.len(),
            d - 1
        )));
    }
    if sigma.im > 0.0 {
        return Err(Error::ParameterOutOfRange("Im σ must be ≤ 0".into()));
    }
    let mut inner = linalg::complexify(&lin.symbol(eta, 0.0));
    for k in 0..n {
        inner[(k, k)] += sigma;
    }
    let a = linalg::complexify(lin.ad_inv()) * inner * (-I);
    Ok(BoundarySymbol {
        sigma,
        eta: eta.to_vec(),
        a,
    })
}

/// Number of positive eigenvalues of `A_d(0)`.
pub fn incoming_count(lin: &LinearizedSystem) -> usize {
    lin.ad().complex_eigenvalues().iter().filter(|z| z.re > 0.0).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RootClass {
    EllipticStable,
    EllipticUnstable,
    Incoming,
    Outgoing,
    Glancing,
}

impl RootClass {
    pub fn is_real(self) -> bool {
        matches!(self, Self::Incoming | Self::Outgoing | Self::Glancing)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Root {
    /// Root `ξ` of `det L(0, (τ, η, ξ))`; `iξ` is the eigenvalue of `𝒜`.
    pub xi: Complex64,
    pub class: RootClass,
    pub multiplicity: usize,
    /// Interior branch and `∂_ξτ` for real roots.
    pub branch: Option<usize>,
    pub dxitau: Option<f64>,
}

/// Eigenvalue cluster of a complex matrix with a basis of its generalized
/// eigenspace.
#[derive(Debug, Clone)]
struct Cluster {
    value: Complex64,
    mult: usize,
    basis: CMatrix,
}

fn spectral_clusters(a: &CMatrix, tol: &Tolerances) -> Option<Vec<Cluster>> {
    let n = a.nrows();
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let mut eig = linalg::complex_eigenvalues(a);
    eig.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    let mut groups: Vec<Vec<Complex64>> = Vec::new();
    for z in eig {
        match groups
            .iter_mut()
            .find(|g| g.iter().any(|w| (w - z).norm() <= tol.cluster * scale))
        {
            Some(g) => g.push(z),
            None => groups.push(vec![z]),
        }
    }
    let mut out = Vec::with_capacity(groups.len());
    for g in groups {
        let mult = g.len();
        let value = g.iter().sum::<Complex64>() / mult as f64;
        let mut shifted = a.clone();
        for k in 0..n {
            shifted[(k, k)] -= value;
        }
        let mut power = shifted.clone();
        for _ in 1..mult {
            power = &power * &shifted;
        }
        let (basis, sv) = linalg::null_space(&power, mult);
        let top = sv.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
        if sv[mult - 1] > tol.defect * top || (mult < n && sv[mult] <= tol.defect * top) {
            return None;
        }
        out.push(Cluster { value, mult, basis });
    }
    Some(out)
}

/// Spectral splitting of `ℂ^N` at a real boundary frequency.
#[derive(Debug, Clone)]
pub struct StableDecomposition {
    pub zeta: Vec<f64>,
    pub roots: Vec<Root>,
    pub symbol: CMatrix,
    basis: CMatrix,
    inverse: CMatrix,
    blocks: Vec<(usize, usize)>,
    e_minus: CMatrix,
}

pub fn decompose_stable(lin: &LinearizedSystem, zeta: &[f64]) -> Result<StableDecomposition> {
    decompose_stable_with(lin, zeta, &Tolerances::default())
}

pub fn decompose_stable_with(lin: &LinearizedSystem, zeta: &[f64], tol: &Tolerances) -> Result<StableDecomposition> {
    let (d, n) = (lin.d(), lin.n());
    if zeta.len() != d {
        return Err(Error::DimensionMismatch(format!(
            "zeta has length {}, expected {d}",
            zeta.len()
        )));
    }
    let zn = zeta.iter().map(|x| x * x).sum::<f64>().sqrt();
    if zn == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let sym = boundary_symbol(lin, Complex64::new(zeta[0], 0.0), &zeta[1..])?;
    let clusters = spectral_clusters(&sym.a, tol).ok_or_else(|| Error::DefectiveElliptic { zeta: zeta.to_vec() })?;
    let scale = sym.a.norm();
    let mut roots = Vec::with_capacity(clusters.len());
    for c in &clusters {
        // eigenvalue iξ of 𝒜
        let xi = -I * c.value;
        let root = if c.value.re.abs() <= tol.real_root * scale {
            if c.mult > 1 {
                return Err(Error::GlancingFrequency { zeta: zeta.to_vec() });
            }
            let mut alpha = zeta.to_vec();
            alpha.push(xi.re);
            let class = classify_frequency_with(lin, &alpha, tol)?;
            let rc = match class.tag {
                FrequencyTag::Incoming => RootClass::Incoming,
                FrequencyTag::Outgoing => RootClass::Outgoing,
                _ => return Err(Error::GlancingFrequency { zeta: zeta.to_vec() }),
            };
            Root {
                xi: Complex64::new(xi.re, 0.0),
                class: rc,
                multiplicity: 1,
                branch: class.branch,
                dxitau: class.dxitau,
            }
        } else {
            Root {
                xi,
                class: if c.value.re < 0.0 {
                    RootClass::EllipticStable
                } else {
                    RootClass::EllipticUnstable
                },
                multiplicity: c.mult,
                branch: None,
                dxitau: None,
            }
        };
        roots.push(root);
    }
    let mut basis = CMatrix::zeros(n, n);
    let mut blocks = Vec::with_capacity(clusters.len());
    let mut col = 0;
    for c in &clusters {
        basis.columns_mut(col, c.mult).copy_from(&c.basis);
        blocks.push((col, c.mult));
        col += c.mult;
    }
    let inverse = basis
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::DefectiveElliptic { zeta: zeta.to_vec() })?;
    let stable_cols: Vec<usize> = roots
        .iter()
        .zip(&blocks)
        .filter(|(r, _)| matches!(r.class, RootClass::EllipticStable | RootClass::Incoming))
        .flat_map(|(_, &(s, m))| s..s + m)
        .collect();
    let p = incoming_count(lin);
    if stable_cols.len() != p {
        return Err(Error::DimensionMismatch(format!(
            "dim E_−(ζ) = {} but A_d has {p} positive eigenvalues",
            stable_cols.len()
        )));
    }
    let raw = basis.select_columns(stable_cols.iter());
    let e_minus = linalg::orthonormalize(&raw);
    Ok(StableDecomposition {
        zeta: zeta.to_vec(),
        roots,
        symbol: sym.a,
        basis,
        inverse,
        blocks,
        e_minus,
    })
}

impl StableDecomposition {
    pub fn n(&self) -> usize {
        self.basis.nrows()
    }

    /// `dim E_−(ζ)`.
    pub fn p(&self) -> usize {
        self.e_minus.ncols()
    }

    /// Orthonormal basis of `E_−(ζ)`.
    pub fn e_minus_basis(&self) -> &CMatrix {
        &self.e_minus
    }

    fn projector_on(&self, select: impl Fn(&Root) -> bool) -> CMatrix {
        let n = self.n();
        let mut out = CMatrix::zeros(n, n);
        for (r, &(s, m)) in self.roots.iter().zip(&self.blocks) {
            if select(r) {
                out += self.basis.columns(s, m) * self.inverse.rows(s, m);
            }
        }
        out
    }

    /// Spectral projector of `𝒜(ζ)` on the generalized eigenspace of root `j`.
    pub fn root_projector(&self, j: usize) -> CMatrix {
        let (s, m) = self.blocks[j];
        self.basis.columns(s, m) * self.inverse.rows(s, m)
    }

    /// Indices of incoming real roots.
    pub fn incoming(&self) -> Vec<usize> {
        self.indices(RootClass::Incoming)
    }

    pub fn indices(&self, class: RootClass) -> Vec<usize> {
        (0..self.roots.len())
            .filter(|&j| self.roots[j].class == class)
            .collect()
    }

    /// Real roots in ascending order with their indices.
    pub fn real_roots(&self) -> Vec<(usize, f64)> {
        let mut v: Vec<(usize, f64)> = self
            .roots
            .iter()
            .enumerate()
            .filter(|(_, r)| r.class.is_real())
            .map(|(j, r)| (j, r.xi.re))
            .collect();
        v.sort_by(|a, b| a.1.total_cmp(&b.1));
        v
    }

    /// `Π^j_−(ζ)` for an incoming root.
    pub fn pi_incoming(&self, j: usize) -> CMatrix {
        self.root_projector(j)
    }

    /// `Π^e_{ℂ^N}(ζ)`, which also acts as `Π^e_−(ζ)` on `E_−(ζ)`.
    pub fn pi_elliptic_stable(&self) -> CMatrix {
        self.projector_on(|r| r.class == RootClass::EllipticStable)
    }

    /// `Π^{e,+}_{ℂ^N}(ζ)`.
    pub fn pi_elliptic_unstable(&self) -> CMatrix {
        self.projector_on(|r| r.class == RootClass::EllipticUnstable)
    }

    /// `‖Π^e + Π^{e,+} + Σ_real π_j − I‖_F`.
    pub fn completeness_residual(&self) -> f64 {
        let n = self.n();
        let mut sum = self.pi_elliptic_stable() + self.pi_elliptic_unstable();
        for (j, _) in self.real_roots() {
            sum += self.root_projector(j);
        }
        (sum - CMatrix::identity(n, n)).norm()
    }

    /// Smallest decay rate `min Im ξ` over elliptic-stable roots.
    pub fn decay_rate(&self) -> Option<f64> {
        self.roots
            .iter()
            .filter(|r| r.class == RootClass::EllipticStable)
            .map(|r| r.xi.im)
            .min_by(f64::total_cmp)
    }
}

/// Orthonormal basis of the stable subspace of `𝒜(τ − iγ, η)` for `γ > 0`.
pub fn stable_subspace_damped(lin: &LinearizedSystem, sigma: Complex64, eta: &[f64]) -> Result<CMatrix> {
    let tol = Tolerances::default();
    let sym = boundary_symbol(lin, sigma, eta)?;
    let mut zeta = vec![sigma.re, -sigma.im];
    zeta.extend_from_slice(eta);
    let clusters = spectral_clusters(&sym.a, &tol).ok_or_else(|| Error::DefectiveElliptic { zeta: zeta.clone() })?;
    let scale = sym.a.norm();
    if clusters.iter().any(|c| c.value.re.abs() <= tol.real_root * scale) {
        return Err(Error::GlancingFrequency { zeta });
    }
    let stable: Vec<&Cluster> = clusters.iter().filter(|c| c.value.re < 0.0).collect();
    let dim: usize = stable.iter().map(|c| c.mult).sum();
    let p = incoming_count(lin);
    if dim != p {
        return Err(Error::DimensionMismatch(format!(
            "stable subspace has dimension {dim}, expected {p}"
        )));
    }
    let mut raw = CMatrix::zeros(lin.n(), dim);
    let mut col = 0;
    for c in stable {
        raw.columns_mut(col, c.mult).copy_from(&c.basis);
        col += c.mult;
    }
    Ok(linalg::orthonormalize(&raw))
}

/// `|det(B Q)|` for an orthonormal basis `Q` of `E_−`.
pub fn lopatinskii_determinant(b: &DMatrix<f64>, e_minus: &CMatrix) -> Result<f64> {
    if b.nrows() != e_minus.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows but dim E_− = {}",
            b.nrows(),
            e_minus.ncols()
        )));
    }
    Ok((linalg::complexify(b) * e_minus).determinant().norm())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LopatinskiiReport {
    pub min_det: f64,
    /// `(τ, γ, η…)` at the minimum.
    pub worst: Vec<f64>,
    pub samples: usize,
    pub skipped_glancing: usize,
    pub pass: bool,
}

pub const DEFAULT_GAMMAS: [f64; 4] = [0.0, 0.01, 0.1, 1.0];

/// Samples `n_samples` boundary frequencies: `n_samples / gammas.len()`
/// directions of the unit `(τ, η)` sphere for every `γ`.
pub fn lopatinskii_scan(
    lin: &LinearizedSystem,
    b: &DMatrix<f64>,
    n_samples: usize,
    gammas: &[f64],
) -> Result<LopatinskiiReport> {
    let tol = Tolerances::default();
    let p = incoming_count(lin);
    if b.nrows() != p {
        return Err(Error::DimensionMismatch(format!(
            "B has {} rows but A_d has {p} positive eigenvalues",
            b.nrows()
        )));
    }
    let d = lin.d();
    let per = (n_samples / gammas.len().max(1)).max(1);
    let dirs = linalg::sphere_samples(d, per, 3);
    let mut min_det = f64::INFINITY;
    let mut worst = Vec::new();
    let mut skipped = 0;
    let mut samples = 0;
    for &g in gammas {
        for z in &dirs {
            let basis = if g == 0.0 {
                decompose_stable_with(lin, z, &tol).map(|dec| dec.e_minus)
            } else {
                stable_subspace_damped(lin, Complex64::new(z[0], -g), &z[1..])
            };
            let basis = match basis {
                Ok(b) => b,
                Err(Error::GlancingFrequency { .. }) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
            };
            samples += 1;
            let det = lopatinskii_determinant(b, &basis)?;
            if det < min_det {
                min_det = det;
                worst = vec![z[0], g];
                worst.extend_from_slice(&z[1..]);
            }
        }
    }
    Ok(LopatinskiiReport {
        min_det,
        worst,
        samples,
        skipped_glancing: skipped,
        pass: min_det > tol.lopatinskii,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DissipativeReport {
    /// Largest `ᵗE S A_d E` over the generators (or unit kernel vectors).
    pub margin: f64,
    pub pass: bool,
}

/// Checks that `S` symmetrizes the system and that `ᵗE S A_d E < 0` on
/// `ker B`. Without explicit generators the maximum of the quadratic form on
/// the unit sphere of `ker B` is used.
pub fn strictly_dissipative_check(
    lin: &LinearizedSystem,
    b: &DMatrix<f64>,
    s: &DMatrix<f64>,
    generators: Option<&[DVector<f64>]>,
) -> Result<DissipativeReport> {
    let tol = Tolerances::default();
    let n = lin.n();
    if s.nrows() != n || s.ncols() != n {
        return Err(Error::DimensionMismatch("symmetrizer has wrong shape".into()));
    }
    let sym_err = (s - s.transpose()).norm() / s.norm().max(1.0);
    if sym_err > tol.matrix || s.clone().cholesky().is_none() {
        return Err(Error::NotASymmetrizer {
            index: 0,
            asym: sym_err,
        });
    }
    for i in 1..=lin.d() {
        let sa = s * lin.a(i);
        let asym = (&sa - sa.transpose()).norm() / sa.norm().max(1.0);
        if asym > tol.matrix {
            return Err(Error::NotASymmetrizer { index: i, asym });
        }
    }
    let form = s * lin.ad();
    let margin = match generators {
        Some(gens) => gens
            .iter()
            .map(|e| e.dot(&(&form * e)))
            .fold(f64::NEG_INFINITY, f64::max),
        None => {
            let gram = b.transpose() * b;
            let eig = gram.clone().symmetric_eigen();
            let top = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
            let kernel: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] <= 1e-12 * top).collect();
            if kernel.is_empty() {
                return Ok(DissipativeReport {
                    margin: f64::NEG_INFINITY,
                    pass: true,
                });
            }
            let ker = eig.eigenvectors.select_columns(kernel.iter());
            let restricted = ker.transpose() * (&form + form.transpose()) * &ker * 0.5;
            restricted.symmetric_eigenvalues().max()
        }
    };
    Ok(DissipativeReport {
        margin,
        pass: margin < 0.0,
    })
}

/// `Q (B Q)^{-1}`: maps boundary data to the unique `w ∈ E_−(ζ)` with `B w = g`.
pub fn boundary_inverse(dec: &StableDecomposition, b: &DMatrix<f64>) -> Result<CMatrix> {
    let q = dec.e_minus_basis();
    if b.nrows() != q.ncols() || b.ncols() != q.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "B is {}x{} but E_− basis is {}x{}",
            b.nrows(),
            b.ncols(),
            q.nrows(),
            q.ncols()
        )));
    }
    let bq = linalg::complexify(b) * q;
    let cond = linalg::condition_number(&bq);
    if !(cond <= 1e10) {
        return Err(Error::IllConditioned { cond });
    }
    let inv = bq.try_inverse().ok_or(Error::IllConditioned { cond })?;
    Ok(q * inv)
}

pub fn boundary_solve(dec: &StableDecomposition, b: &DMatrix<f64>, g: &CVector) -> Result<CVector> {
    if g.len() != b.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "g has length {}, B has {} rows",
            g.len(),
            b.nrows()
        )));
    }
    Ok(boundary_inverse(dec, b)? * g)
}

fn propagate(dec: &StableDecomposition, t: f64, select: impl Fn(&Root) -> bool) -> CMatrix {
    let n = dec.n();
    let mut out = CMatrix::zeros(n, n);
    for (j, r) in dec.roots.iter().enumerate() {
        if !select(r) {
            continue;
        }
        let lam = I * r.xi;
        let proj = dec.root_projector(j);
        let mut nil = dec.symbol.clone();
        for k in 0..n {
            nil[(k, k)] -= lam;
        }
        let mut term = proj.clone();
        let mut acc = proj;
        for k in 1..r.multiplicity {
            term = &nil * term * Complex64::new(t / k as f64, 0.0);
            acc += &term;
        }
        out += acc * (lam * t).exp();
    }
    out
}

/// `e^{t𝒜(ζ)} Π^e_{ℂ^N}(ζ)` for `t ≥ 0`.
pub fn evanescent_propagator(dec: &StableDecomposition, t: f64) -> Result<CMatrix> {
    if t < 0.0 {
        return Err(Error::ParameterOutOfRange("stable propagator needs t ≥ 0".into()));
    }
    Ok(propagate(dec, t, |r| r.class == RootClass::EllipticStable))
}

/// `e^{t𝒜(ζ)} (I − Π^e_{ℂ^N}(ζ))` for `t ≤ 0`.
pub fn evanescent_propagator_complement(dec: &StableDecomposition, t: f64) -> Result<CMatrix> {
    if t > 0.0 {
        return Err(Error::ParameterOutOfRange(
            "complementary propagator needs t ≤ 0".into(),
        ));
    }
    Ok(propagate(dec, t, |r| r.class != RootClass::EllipticStable))
}
