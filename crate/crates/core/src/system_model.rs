//! Quasilinear system `∂_t u + Σ A_i(u) ∂_i u = 0` with a linear boundary
//! condition, its linearization at `u = 0` and the first-order perturbation
//! operators.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Supplies `A_i(u)` for `i = 1..=d`; `A_0` is the identity.
pub trait Coefficients: Send + Sync {
    fn matrix(&self, i: usize, u: &DVector<f64>) -> DMatrix<f64>;

    /// Exact `dA_i(0)·v`, when known.
    fn differential(&self, _i: usize, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        None
    }
}

/// Coefficients independent of `u`.
#[derive(Debug, Clone)]
pub struct ConstantCoefficients {
    mats: Vec<DMatrix<f64>>,
}

impl ConstantCoefficients {
    /// `mats[i - 1] = A_i`.
    pub fn new(mats: Vec<DMatrix<f64>>) -> Self {
        Self { mats }
    }
}

impl Coefficients for ConstantCoefficients {
    fn matrix(&self, i: usize, _u: &DVector<f64>) -> DMatrix<f64> {
        self.mats[i - 1].clone()
    }

    fn differential(&self, i: usize, _v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let a = &self.mats[i - 1];
        Some(DMatrix::zeros(a.nrows(), a.ncols()))
    }
}

/// `A_i(u) = A_i + Σ_k u_k S_{i,k}`.
#[derive(Debug, Clone)]
pub struct AffineCoefficients {
    base: Vec<DMatrix<f64>>,
    slopes: Vec<Vec<DMatrix<f64>>>,
}

impl AffineCoefficients {
    pub fn new(base: Vec<DMatrix<f64>>, slopes: Vec<Vec<DMatrix<f64>>>) -> Self {
        Self { base, slopes }
    }
}

impl Coefficients for AffineCoefficients {
    fn matrix(&self, i: usize, u: &DVector<f64>) -> DMatrix<f64> {
        let mut a = self.base[i - 1].clone();
        for (k, s) in self.slopes[i - 1].iter().enumerate() {
            a += s * u[k];
        }
        a
    }

    fn differential(&self, i: usize, v: &DVector<f64>) -> Option<DMatrix<f64>> {
        let a = &self.base[i - 1];
        let mut out = DMatrix::zeros(a.nrows(), a.ncols());
        for (k, s) in self.slopes[i - 1].iter().enumerate() {
            out += s * v[k];
        }
        Some(out)
    }
}

#[derive(Clone)]
pub struct HyperbolicSystem {
    d: usize,
    n: usize,
    coeffs: Arc<dyn Coefficients>,
    use_analytic_diffs: bool,
    b: DMatrix<f64>,
    zetas: Vec<DVector<f64>>,
}

impl fmt::Debug for HyperbolicSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HyperbolicSystem")
            .field("d", &self.d)
            .field("n", &self.n)
            .field("m", &self.zetas.len())
            .field("b", &self.b)
            .field("zetas", &self.zetas)
            .finish()
    }
}

impl HyperbolicSystem {
    pub fn new(
        d: usize,
        n: usize,
        coeffs: Arc<dyn Coefficients>,
        b: DMatrix<f64>,
        zetas: Vec<DVector<f64>>,
    ) -> Result<Self> {
        if d < 2 {
            return Err(Error::DimensionMismatch(format!("d = {d} < 2")));
        }
        if n == 0 {
            return Err(Error::DimensionMismatch("N = 0".into()));
        }
        if zetas.len() < 2 {
            return Err(Error::DimensionMismatch(format!("m = {} < 2", zetas.len())));
        }
        if let Some(z) = zetas.iter().find(|z| z.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "boundary frequency of length {} for d = {d}",
                z.len()
            )));
        }
        if zetas.iter().any(|z| z.norm() == 0.0) {
            return Err(Error::ZeroFrequency);
        }
        if b.ncols() != n || b.nrows() == 0 || b.nrows() > n {
            return Err(Error::DimensionMismatch(format!(
                "B is {}x{} for N = {n}",
                b.nrows(),
                b.ncols()
            )));
        }
        let zero = DVector::zeros(n);
        for i in 1..=d {
            let a = coeffs.matrix(i, &zero);
            if a.nrows() != n || a.ncols() != n {
                return Err(Error::DimensionMismatch(format!(
                    "A_{i} is {}x{}",
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        Ok(Self {
            d,
            n,
            coeffs,
            use_analytic_diffs: true,
            b,
            zetas,
        })
    }

    /// Copy that ignores analytic differentials and falls back to finite differences.
    pub fn without_analytic_diffs(&self) -> Self {
        Self {
            use_analytic_diffs: false,
            ..self.clone()
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.zetas.len()
    }

    pub fn boundary(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn zetas(&self) -> &[DVector<f64>] {
        &self.zetas
    }

    pub fn coefficient(&self, i: usize, u: &DVector<f64>) -> DMatrix<f64> {
        if i == 0 {
            DMatrix::identity(self.n, self.n)
        } else {
            self.coeffs.matrix(i, u)
        }
    }

    /// Boundary frequency `n·ζ` for an integer lattice vector.
    pub fn lattice_frequency(&self, n: &[i64]) -> DVector<f64> {
        let mut z = DVector::zeros(self.d);
        for (k, zeta) in n.iter().zip(&self.zetas) {
            z += zeta * (*k as f64);
        }
        z
    }

    /// Smallest integer relation `Σ k_j ζ_j ≈ 0` with `|k|_∞ ≤ bound`, if any.
    pub fn find_integer_relation(&self, bound: i64, tol: f64) -> Option<Vec<i64>> {
        let m = self.m();
        let side = (2 * bound + 1) as usize;
        let total = side.checked_pow(m as u32)?;
        let mut best: Option<(i64, Vec<i64>)> = None;
        for idx in 0..total {
            let mut rem = idx;
            let k: Vec<i64> = (0..m)
                .map(|_| {
                    let c = (rem % side) as i64 - bound;
                    rem /= side;
                    c
                })
                .collect();
            match k.iter().find(|&&c| c != 0) {
                Some(&c) if c > 0 => {}
                _ => continue,
            }
            let z = self.lattice_frequency(&k);
            let scale: f64 = k
                .iter()
                .zip(&self.zetas)
                .map(|(c, zeta)| (*c as f64).abs() * zeta.norm())
                .sum();
            if z.norm() <= tol * scale {
                let h = k.iter().map(|c| c.abs()).max().unwrap_or(0);
                if best.as_ref().is_none_or(|(bh, _)| h < *bh) {
                    best = Some((h, k));
                }
            }
        }
        best.map(|(_, k)| k)
    }

    fn differential(&self, i: usize, v: &DVector<f64>, fd_step: f64) -> DMatrix<f64> {
        if i == 0 {
            return DMatrix::zeros(self.n, self.n);
        }
        if self.use_analytic_diffs {
            if let Some(da) = self.coeffs.differential(i, v) {
                return da;
            }
        }
        let plus = self.coeffs.matrix(i, &(v * fd_step));
        let minus = self.coeffs.matrix(i, &(v * -fd_step));
        (plus - minus) / (2.0 * fd_step)
    }
}

/// Constant-coefficient data at `u = 0` together with the differentials
/// `dA_i(0)` stored on the canonical basis.
#[derive(Debug, Clone)]
pub struct LinearizedSystem {
    d: usize,
    n: usize,
    a: Vec<DMatrix<f64>>,
    ad_inv: DMatrix<f64>,
    atilde: Vec<DMatrix<f64>>,
    da: Vec<Vec<DMatrix<f64>>>,
}

/// Linearizes at `u = 0`; differentials come from the provider or central
/// differences with step `fd_step`.
pub fn linearize(system: &HyperbolicSystem, fd_step: f64) -> Result<LinearizedSystem> {
    let (d, n) = (system.d, system.n);
    let zero = DVector::zeros(n);
    let a: Vec<DMatrix<f64>> = (0..=d).map(|i| system.coefficient(i, &zero)).collect();
    for (i, m) in a.iter().enumerate() {
        if m.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFiniteCoefficient { index: i });
        }
    }
    let ad = &a[d];
    let det = ad.determinant();
    if !(det.abs() >= system_singular_threshold(ad)) {
        return Err(Error::SingularNormalMatrix { det });
    }
    let ad_inv = ad.clone().try_inverse().ok_or(Error::SingularNormalMatrix { det })?;
    let atilde = (0..d).map(|i| &ad_inv * &a[i]).collect();
    let mut da = Vec::with_capacity(d + 1);
    for i in 0..=d {
        let mut per_dir = Vec::with_capacity(n);
        for k in 0..n {
            let mut e = DVector::zeros(n);
            e[k] = 1.0;
            let m = system.differential(i, &e, fd_step);
            if m.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFiniteCoefficient { index: i });
            }
            per_dir.push(m);
        }
        da.push(per_dir);
    }
    Ok(LinearizedSystem {
        d,
        n,
        a,
        ad_inv,
        atilde,
        da,
    })
}

fn system_singular_threshold(ad: &DMatrix<f64>) -> f64 {
    let n = ad.nrows() as i32;
    crate::tolerances::Tolerances::default().singular * ad.norm().powi(n)
}

impl LinearizedSystem {
    /// Builds directly from constant matrices `A_1..A_d` with zero differential.
    pub fn from_constant(mats: Vec<DMatrix<f64>>) -> Result<Self> {
        let d = mats.len();
        let n = mats.first().map(|m| m.nrows()).unwrap_or(0);
        let zetas = (0..2)
            .map(|j| {
                let mut z = DVector::zeros(d);
                z[j % d] = 1.0;
                z
            })
            .collect();
        let sys = HyperbolicSystem::new(
            d,
            n,
            Arc::new(ConstantCoefficients::new(mats)),
            DMatrix::identity(1, n),
            zetas,
        )?;
        linearize(&sys, 1e-6)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `A_i(0)` for `i = 0..=d`.
    pub fn a(&self, i: usize) -> &DMatrix<f64> {
        &self.a[i]
    }

    pub fn ad(&self) -> &DMatrix<f64> {
        &self.a[self.d]
    }

    pub fn ad_inv(&self) -> &DMatrix<f64> {
        &self.ad_inv
    }

    /// `Ã_i = A_d^{-1} A_i` for `i = 0..d-1`.
    pub fn atilde(&self, i: usize) -> &DMatrix<f64> {
        &self.atilde[i]
    }

    /// `dA_i(0)·v`.
    pub fn da(&self, i: usize, v: &DVector<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.n, self.n);
        for (k, m) in self.da[i].iter().enumerate() {
            if v[k] != 0.0 {
                out += m * v[k];
            }
        }
        out
    }

    /// `dÃ_i(0)·v = A_d^{-1} dA_i·v − A_d^{-1}(dA_d·v)A_d^{-1}A_i`.
    pub fn datilde(&self, i: usize, v: &DVector<f64>) -> DMatrix<f64> {
        let dad = self.da(self.d, v);
        &self.ad_inv * self.da(i, v) - &self.ad_inv * dad * &self.atilde[i]
    }

    /// `A(η, ξ) = Σ η_i A_i(0) + ξ A_d(0)`.
    pub fn symbol(&self, eta: &[f64], xi: f64) -> DMatrix<f64> {
        let mut a = &self.a[self.d] * xi;
        for (i, e) in eta.iter().enumerate() {
            a += &self.a[i + 1] * *e;
        }
        a
    }

    /// `L(0, α) = τ I + A(η, ξ)` for `α = (τ, η, ξ)`.
    pub fn l0(&self, alpha: &[f64]) -> DMatrix<f64> {
        let d = self.d;
        let mut l = self.symbol(&alpha[1..d], alpha[d]);
        for k in 0..self.n {
            l[(k, k)] += alpha[0];
        }
        l
    }

    /// `Σ_i ζ^i dÃ_i(0)·v`, with `ζ^0` the time component.
    pub fn apply_l1_tilde(&self, v: &DVector<f64>, zeta: &[f64]) -> Result<DMatrix<f64>> {
        if v.len() != self.n || zeta.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "v has length {}, zeta has length {} (N = {}, d = {})",
                v.len(),
                zeta.len(),
                self.n,
                self.d
            )));
        }
        let dad = self.da(self.d, v);
        let mut acc = DMatrix::zeros(self.n, self.n);
        let mut mixed = DMatrix::zeros(self.n, self.n);
        for (i, z) in zeta.iter().enumerate() {
            if *z == 0.0 {
                continue;
            }
            acc += self.da(i, v) * *z;
            mixed += &self.atilde[i] * *z;
        }
        Ok(&self.ad_inv * (acc - dad * mixed))
    }

    /// Relative residual of `A_d Ã_i − A_i`, maximized over `i`.
    pub fn atilde_residual(&self) -> f64 {
        (0..self.d)
            .map(|i| linalg::rel_residual(&(self.ad() * &self.atilde[i]), &self.a[i]))
            .fold(0.0, f64::max)
    }

    /// Uniform scaling `A_i → s A_i` (differentials scaled too).
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let mats: Vec<DMatrix<f64>> = (1..=self.d).map(|i| &self.a[i] * s).collect();
        let mut out = Self::from_constant(mats)?;
        out.da = self
            .da
            .iter()
            .enumerate()
            .map(|(i, per)| per.iter().map(|m| if i == 0 { m.clone() } else { m * s }).collect())
            .collect();
        Ok(out)
    }
}
