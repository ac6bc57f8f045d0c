//! Eigen-structure of the interior symbol `A(η, ξ)`: branches `τ_k`,
//! projectors `π_k`, `π̃_k`, partial inverses, group velocities and the
//! frequency classification.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg;
use crate::system_model::LinearizedSystem;
use crate::tolerances::Tolerances;

#[derive(Debug, Clone)]
pub struct EigenStructure {
    pub eta_xi: Vec<f64>,
    /// Strictly increasing branches `τ_1 < … < τ_N`.
    pub taus: Vec<f64>,
    /// Unit right eigenvectors, sign-fixed.
    pub rights: Vec<DVector<f64>>,
    /// Left eigenvectors with `l_k · r_k = 1`.
    pub lefts: Vec<DVector<f64>>,
    pub pis: Vec<DMatrix<f64>>,
    pub pis_tilde: Vec<DMatrix<f64>>,
    /// `∇_{η,ξ} τ_k` per branch.
    grads: Vec<Vec<f64>>,
}

/// Sorted `τ = −eig A(η, ξ)`; fails if the spectrum is not real.
pub fn real_spectrum(lin: &LinearizedSystem, eta: &[f64], xi: f64, tol: &Tolerances) -> Result<Vec<f64>> {
    let a = lin.symbol(eta, xi);
    let scale = a.norm().max(f64::MIN_POSITIVE);
    let eig = a.complex_eigenvalues();
    let mut point = eta.to_vec();
    point.push(xi);
    let imag = eig.iter().fold(0.0_f64, |m, z| m.max(z.im.abs()));
    if imag > tol.complex * scale {
        return Err(Error::ComplexSpectrum { point, imag });
    }
    let mut taus: Vec<f64> = eig.iter().map(|z| -z.re).collect();
    taus.sort_by(f64::total_cmp);
    Ok(taus)
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn eigen_structure(lin: &LinearizedSystem, eta: &[f64], xi: f64) -> Result<EigenStructure> {
    eigen_structure_with(lin, eta, xi, &Tolerances::default())
}

pub fn eigen_structure_with(lin: &LinearizedSystem, eta: &[f64], xi: f64, tol: &Tolerances) -> Result<EigenStructure> {
    let d = lin.d();
    if eta.len() != d - 1 {
        return Err(Error::DimensionMismatch(format!(
            "eta has length {}, expected {}",
            eta.len(),
            d - 1
        )));
    }
    let mut eta_xi = eta.to_vec();
    eta_xi.push(xi);
    let scale = norm(&eta_xi);
    if scale == 0.0 {
        return Err(Error::ZeroFrequency);
    }
    let n = lin.n();
    let taus0 = real_spectrum(lin, eta, xi, tol)?;
    let gap = taus0.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    if n > 1 && gap <= tol.gap * scale {
        return Err(Error::EigenvalueCollision { point: eta_xi, gap });
    }
    let a = lin.symbol(eta, xi);
    let mut r = DMatrix::zeros(n, n);
    let mut rights = Vec::with_capacity(n);
    for (k, &tau) in taus0.iter().enumerate() {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted[(i, i)] += tau;
        }
        let mut v = linalg::real_null_vector(&shifted);
        v /= v.norm();
        linalg::fix_sign(&mut v);
        r.set_column(k, &v);
        rights.push(v);
    }
    let l = r.clone().try_inverse().ok_or(Error::DegenerateBranch { branch: 0 })?;
    let lefts: Vec<DVector<f64>> = (0..n).map(|k| l.row(k).transpose()).collect();
    let taus: Vec<f64> = (0..n).map(|k| -(lefts[k].dot(&(&a * &rights[k])))).collect();
    let pis: Vec<DMatrix<f64>> = (0..n).map(|k| &rights[k] * lefts[k].transpose()).collect();
    let pis_tilde = pis.iter().map(|p| lin.ad_inv() * p * lin.ad()).collect();
    let grads = (0..n)
        .map(|k| (1..=d).map(|i| -(lefts[k].dot(&(lin.a(i) * &rights[k])))).collect())
        .collect();
    Ok(EigenStructure {
        eta_xi,
        taus,
        rights,
        lefts,
        pis,
        pis_tilde,
        grads,
    })
}

impl EigenStructure {
    pub fn n(&self) -> usize {
        self.taus.len()
    }

    /// `∂_ξ τ_k`.
    pub fn dxitau(&self, k: usize) -> f64 {
        *self.grads[k].last().expect("non-empty gradient")
    }

    /// Branch whose `τ_k` is closest to `tau`, with the distance.
    pub fn nearest_branch(&self, tau: f64) -> (usize, f64) {
        self.taus
            .iter()
            .enumerate()
            .map(|(k, t)| (k, (t - tau).abs()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("at least one branch")
    }
}

/// `∇_{η,ξ} τ_k` from first-order perturbation theory.
pub fn group_velocity(es: &EigenStructure, k: usize) -> Result<Vec<f64>> {
    let lr = es.lefts[k].dot(&es.rights[k]);
    if !((lr - 1.0).abs() < 1e-8) {
        return Err(Error::DegenerateBranch { branch: k });
    }
    Ok(es.grads[k].clone())
}

#[derive(Debug, Clone)]
pub struct FrequencyOperators {
    pub pi: DMatrix<f64>,
    pub pi_tilde: DMatrix<f64>,
    /// Partial inverse: `Q L(0,α) = L(0,α) Q = I − π`.
    pub q: DMatrix<f64>,
    /// Branch index when `α` is characteristic.
    pub branch: Option<usize>,
}

/// Projectors and partial inverse attached to `α = (τ, η, ξ)`.
pub fn frequency_operators(lin: &LinearizedSystem, alpha: &[f64]) -> Result<FrequencyOperators> {
    frequency_operators_with(lin, alpha, &Tolerances::default())
}

pub fn frequency_operators_with(lin: &LinearizedSystem, alpha: &[f64], tol: &Tolerances) -> Result<FrequencyOperators> {
    let (d, n) = (lin.d(), lin.n());
    if alpha.len() != d + 1 {
        return Err(Error::DimensionMismatch(format!(
            "alpha has length {}, expected {}",
            alpha.len(),
            d + 1
        )));
    }
    let id = DMatrix::identity(n, n);
    if alpha.iter().all(|x| *x == 0.0) {
        return Ok(FrequencyOperators {
            pi: id.clone(),
            pi_tilde: id.clone(),
            q: id,
            branch: None,
        });
    }
    let tau = alpha[0];
    let space = &alpha[1..];
    let scale = norm(space);
    let noncharacteristic = |l: DMatrix<f64>| -> Result<FrequencyOperators> {
        let q = l
            .try_inverse()
            .ok_or_else(|| Error::NearCharacteristicAmbiguity { alpha: alpha.to_vec() })?;
        Ok(FrequencyOperators {
            pi: DMatrix::zeros(n, n),
            pi_tilde: DMatrix::zeros(n, n),
            q,
            branch: None,
        })
    };
    if scale == 0.0 {
        return noncharacteristic(lin.l0(alpha));
    }
    let es = eigen_structure_with(lin, &space[..d - 1], space[d - 1], tol)?;
    let (k, dist) = es.nearest_branch(tau);
    if dist <= tol.characteristic * scale {
        let mut q = DMatrix::zeros(n, n);
        for j in (0..n).filter(|&j| j != k) {
            q += &es.pis[j] / (tau - es.taus[j]);
        }
        Ok(FrequencyOperators {
            pi: es.pis[k].clone(),
            pi_tilde: es.pis_tilde[k].clone(),
            q,
            branch: Some(k),
        })
    } else if dist <= 100.0 * tol.characteristic * scale {
        Err(Error::NearCharacteristicAmbiguity { alpha: alpha.to_vec() })
    } else {
        noncharacteristic(lin.l0(alpha))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrequencyTag {
    Noncharacteristic,
    Incoming,
    Outgoing,
    Glancing,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrequencyClass {
    pub tag: FrequencyTag,
    pub branch: Option<usize>,
    pub dxitau: Option<f64>,
    /// `|∂_ξτ|` inside the near-glancing band.
    pub near_glancing: bool,
}

pub fn classify_frequency(lin: &LinearizedSystem, alpha: &[f64]) -> Result<FrequencyClass> {
    classify_frequency_with(lin, alpha, &Tolerances::default())
}

pub fn classify_frequency_with(lin: &LinearizedSystem, alpha: &[f64], tol: &Tolerances) -> Result<FrequencyClass> {
    let d = lin.d();
    let plain = |tag| FrequencyClass {
        tag,
        branch: None,
        dxitau: None,
        near_glancing: false,
    };
    if alpha.iter().all(|x| *x == 0.0) {
        return Ok(plain(FrequencyTag::Zero));
    }
    let space = &alpha[1..];
    let scale = norm(space);
    if scale == 0.0 {
        return Ok(plain(FrequencyTag::Noncharacteristic));
    }
    let es = eigen_structure_with(lin, &space[..d - 1], space[d - 1], tol)?;
    let (k, dist) = es.nearest_branch(alpha[0]);
    if dist > tol.characteristic * scale {
        return Ok(plain(FrequencyTag::Noncharacteristic));
    }
    let dx = es.dxitau(k);
    let tag = if dx.abs() < tol.glancing {
        FrequencyTag::Glancing
    } else if dx < 0.0 {
        FrequencyTag::Incoming
    } else {
        FrequencyTag::Outgoing
    };
    Ok(FrequencyClass {
        tag,
        branch: Some(k),
        dxitau: Some(dx),
        near_glancing: dx.abs() >= tol.glancing && dx.abs() < tol.near_glancing,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VelocityBound {
    /// Largest `|∇τ_k|` over the samples.
    pub max_sampled: f64,
    /// `1.05 · max_sampled`.
    pub vstar: f64,
}

pub const VELOCITY_SAFETY: f64 = 1.05;

pub fn velocity_bound(lin: &LinearizedSystem, n_samples: usize) -> Result<VelocityBound> {
    let d = lin.d();
    let mut max = 0.0_f64;
    for p in linalg::sphere_samples(d, n_samples.max(1), 7) {
        let es = eigen_structure(lin, &p[..d - 1], p[d - 1])?;
        for k in 0..es.n() {
            max = max.max(norm(&es.grads[k]));
        }
    }
    Ok(VelocityBound {
        max_sampled: max,
        vstar: VELOCITY_SAFETY * max,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LaxResiduals {
    /// `π̃ Ã_0 π + (1/∂_ξτ) π̃ π`.
    pub time: f64,
    /// `π̃ Ã_i π − (∂_{η_i}τ/∂_ξτ) π̃ π`, one per tangential direction.
    pub tangential: Vec<f64>,
    /// `π̃ E + ∂_ξτ A_d^{-1} E`.
    pub polarization: f64,
}

impl LaxResiduals {
    pub fn max(&self) -> f64 {
        self.tangential
            .iter()
            .fold(self.time.max(self.polarization), |m, x| m.max(*x))
    }
}

pub fn verify_lax(lin: &LinearizedSystem, es: &EigenStructure, k: usize) -> Result<LaxResiduals> {
    let tol = Tolerances::default();
    let grad = group_velocity(es, k)?;
    let dx = *grad.last().expect("non-empty gradient");
    if dx.abs() < tol.glancing {
        return Err(Error::GlancingBranch { branch: k, dxitau: dx });
    }
    let pt = &es.pis_tilde[k];
    let p = &es.pis[k];
    let ptp = pt * p;
    let lhs = pt * lin.atilde(0) * p;
    let rhs = &ptp * (-1.0 / dx);
    let time = (&lhs - &rhs).norm() / lhs.norm().max(1.0);
    let tangential = (1..lin.d())
        .map(|i| {
            let lhs = pt * lin.atilde(i) * p;
            let rhs = &ptp * (grad[i - 1] / dx);
            (&lhs - &rhs).norm() / lhs.norm().max(1.0)
        })
        .collect();
    let e = &es.rights[k];
    let lhs = pt * e;
    let rhs = lin.ad_inv() * e * (-dx);
    let polarization = (&lhs - &rhs).norm() / lhs.norm().max(1.0);
    Ok(LaxResiduals {
        time,
        tangential,
        polarization,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HyperbolicityReport {
    pub min_gap: f64,
    pub worst_point: Vec<f64>,
    pub samples: usize,
    pub pass: bool,
}

/// Minimal eigenvalue gap over the unit sphere in `(η, ξ)`.
pub fn check_strict_hyperbolicity(lin: &LinearizedSystem, n_samples: usize) -> HyperbolicityReport {
    let tol = Tolerances::default();
    let d = lin.d();
    let mut min_gap = f64::INFINITY;
    let mut worst = vec![0.0; d];
    let samples = linalg::sphere_samples(d, n_samples.max(1), 11);
    for p in &samples {
        let gap = match real_spectrum(lin, &p[..d - 1], p[d - 1], &tol) {
            Ok(t) => t.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min),
            Err(_) => 0.0,
        };
        if gap < min_gap {
            min_gap = gap;
            worst = p.clone();
        }
    }
    HyperbolicityReport {
        min_gap,
        worst_point: worst,
        samples: samples.len(),
        pass: min_gap > tol.gap,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupVelocityBoundReport {
    /// Largest `C` with `|∂_ξτ| ≥ C dist(ζ,𝒢)^{1/2} / |ζ|^{1/2}` on all points.
    pub best_c: f64,
    pub points: usize,
    /// Points lying exactly on the glancing set (both sides zero).
    pub exact_glancing: usize,
    /// Points off the glancing set with a glancing normal velocity.
    pub violations: usize,
}

/// Checks the normal group velocity lower bound on characteristic points
/// `(ζ, ξ)`, given a distance to the glancing set.
pub fn group_velocity_lower_bound_check(
    lin: &LinearizedSystem,
    points: &[(Vec<f64>, f64)],
    dist: impl Fn(&[f64]) -> f64,
) -> Result<GroupVelocityBoundReport> {
    let tol = Tolerances::default();
    let d = lin.d();
    let mut best_c = f64::INFINITY;
    let mut exact = 0;
    let mut violations = 0;
    for (zeta, xi) in points {
        let es = eigen_structure(lin, &zeta[1..d], *xi)?;
        let (k, _) = es.nearest_branch(zeta[0]);
        let dx = es.dxitau(k).abs();
        let g = dist(zeta);
        let zn = norm(zeta);
        if g <= 1e-12 * zn {
            exact += 1;
            continue;
        }
        if dx < tol.glancing {
            violations += 1;
            continue;
        }
        best_c = best_c.min(dx * zn.sqrt() / g.sqrt());
    }
    Ok(GroupVelocityBoundReport {
        best_c,
        points: points.len(),
        exact_glancing: exact,
        violations,
    })
}

/// Largest residuals of the projector, partial-inverse and Lax identities
/// over characteristic frequencies `(τ_k(η, ξ), η, ξ)` on sampled unit
/// `(η, ξ)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IdentitySweep {
    pub samples: usize,
    /// `‖Q L(0,α) − (I − π)‖_F`.
    pub partial_inverse: f64,
    /// `‖π̃ L̃(0,α)‖_F` with `L̃ = A_d^{-1} L`.
    pub annihilation: f64,
    /// `‖Σ_k π_k − I‖_F`.
    pub completeness: f64,
    pub lax: f64,
    /// Branches skipped for lying in the near-glancing band.
    pub near_glancing: usize,
}

pub fn identity_sweep(lin: &LinearizedSystem, n_samples: usize, seed: u64) -> Result<IdentitySweep> {
    let tol = Tolerances::default();
    let (d, n) = (lin.d(), lin.n());
    let id = DMatrix::<f64>::identity(n, n);
    let mut out = IdentitySweep {
        samples: 0,
        partial_inverse: 0.0,
        annihilation: 0.0,
        completeness: 0.0,
        lax: 0.0,
        near_glancing: 0,
    };
    for p in linalg::sphere_samples(d, n_samples.max(1), seed) {
        let es = eigen_structure_with(lin, &p[..d - 1], p[d - 1], &tol)?;
        let sum = es.pis.iter().fold(DMatrix::zeros(n, n), |acc, pk| acc + pk);
        out.completeness = out.completeness.max((sum - &id).norm());
        for k in 0..n {
            let mut alpha = vec![es.taus[k]];
            alpha.extend_from_slice(&p);
            let ops = frequency_operators_with(lin, &alpha, &tol)?;
            let l = lin.l0(&alpha);
            out.partial_inverse = out.partial_inverse.max((&ops.q * &l - (&id - &ops.pi)).norm());
            out.annihilation = out.annihilation.max((&ops.pi_tilde * lin.ad_inv() * &l).norm());
            if es.dxitau(k).abs() < tol.near_glancing {
                out.near_glancing += 1;
                continue;
            }
            out.lax = out.lax.max(verify_lax(lin, &es, k)?.max());
        }
        out.samples += 1;
    }
    Ok(out)
}
