//! JSON run configuration.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use multiphase_wkb::euler2d::{build_euler_unchecked, EulerParams};
use multiphase_wkb::lattice_resonance::AssumptionOptions;
use multiphase_wkb::profile_solver::{BoundaryForcing, Derivative, PicardOptions};
use multiphase_wkb::system_model::{AffineCoefficients, Coefficients, ConstantCoefficients, HyperbolicSystem};
use multiphase_wkb::tolerances::Tolerances;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum SystemSpec {
    /// Built-in isentropic Euler system.
    Euler {
        #[serde(default)]
        params: EulerParams,
    },
    /// `A_i(u) = a[i] + Σ_k u_k slopes[i][k]`, rows listed first.
    Matrices {
        a: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        slopes: Option<Vec<Vec<Vec<Vec<f64>>>>>,
        b: Vec<Vec<f64>>,
        zetas: Vec<Vec<f64>>,
    },
}

impl Default for SystemSpec {
    fn default() -> Self {
        Self::Euler {
            params: EulerParams::default(),
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<DMatrix<f64>> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if nr == 0 || nc == 0 || rows.iter().any(|r| r.len() != nc) {
        bail!("{what} must be a non-empty rectangular matrix");
    }
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

impl SystemSpec {
    pub fn euler_params(&self) -> Option<&EulerParams> {
        match self {
            Self::Euler { params } => Some(params),
            Self::Matrices { .. } => None,
        }
    }

    /// Builds the system; Euler parameters are range-checked separately so
    /// that the assumption report can record the failure.
    pub fn build(&self) -> Result<HyperbolicSystem> {
        match self {
            Self::Euler { params } => Ok(build_euler_unchecked(params)?),
            Self::Matrices { a, slopes, b, zetas } => {
                let base = a
                    .iter()
                    .enumerate()
                    .map(|(i, m)| matrix(m, &format!("a[{i}]")))
                    .collect::<Result<Vec<_>>>()?;
                let n = base.first().map_or(0, |m| m.nrows());
                let coeffs: Arc<dyn Coefficients> = match slopes {
                    None => Arc::new(ConstantCoefficients::new(base.clone())),
                    Some(s) => {
                        let s = s
                            .iter()
                            .enumerate()
                            .map(|(i, per)| {
                                per.iter()
                                    .enumerate()
                                    .map(|(k, m)| matrix(m, &format!("slopes[{i}][{k}]")))
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()?;
                        if s.len() != base.len() || s.iter().any(|per| per.len() != n) {
                            bail!("slopes must list N matrices for every A_i");
                        }
                        Arc::new(AffineCoefficients::new(base.clone(), s))
                    }
                };
                let zetas = zetas.iter().map(|z| DVector::from_vec(z.clone())).collect();
                Ok(HyperbolicSystem::new(base.len(), n, coeffs, matrix(b, "b")?, zetas)?)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Samples {
    /// Frequencies of the projector and Lax sweep.
    pub identity: usize,
    /// Boundary frequencies of the Lopatinskii scan.
    pub kl: usize,
    /// Directions used to locate the glancing set.
    pub glancing: usize,
    /// Directions of the group-velocity bound.
    pub velocity: usize,
}

impl Default for Samples {
    fn default() -> Self {
        Self {
            identity: 1000,
            kl: 2000,
            glancing: 10_000,
            velocity: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Bin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSpec {
    Spectral,
    SkewFd(f64),
}

impl From<DerivativeSpec> for Derivative {
    fn from(d: DerivativeSpec) -> Self {
        match d {
            DerivativeSpec::Spectral => Derivative::Spectral,
            DerivativeSpec::SkewFd(h) => Derivative::SkewFd(h),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PicardSpec {
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    /// Fixed point inside every marching step.
    pub step_tol: f64,
    pub step_max_iter: usize,
}

impl Default for PicardSpec {
    fn default() -> Self {
        let p = PicardOptions::default();
        Self {
            tol: p.tol,
            max_iter: p.max_iter,
            max_halvings: p.max_halvings,
            step_tol: 1e-10,
            step_max_iter: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    pub t_final: f64,
    pub ly: f64,
    /// Defaults to `2 𝒱* T`.
    pub xd: Option<f64>,
    pub nt: usize,
    pub ny: usize,
    pub nx: usize,
    /// Harmonic truncation `Λ`.
    pub harmonics: usize,
    /// Defaults to the sampled group velocity bound.
    pub vstar: Option<f64>,
    pub cfl: f64,
    pub substeps: Option<usize>,
    pub picard: PicardSpec,
    pub derivative: DerivativeSpec,
    /// Support of the cutoff `χ`; defaults to `X_d`.
    pub chi_support: Option<f64>,
    pub psi_max: f64,
    pub psi_samples: usize,
    pub leakage_tol: f64,
    pub forcing: BoundaryForcing,
    /// Also sample `u^app = ε U_1` on the grid.
    pub assemble: bool,
    pub epsilon: f64,
    /// Only every `stride`-th grid point is written to CSV.
    pub stride: usize,
    /// Lattice box used to close the resonant system.
    pub box_radius: i64,
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self {
            t_final: 1.0,
            ly: 2.0,
            xd: None,
            nt: 48,
            ny: 16,
            nx: 48,
            harmonics: 4,
            vstar: None,
            cfl: 1.0,
            substeps: None,
            picard: PicardSpec::default(),
            derivative: DerivativeSpec::Spectral,
            chi_support: None,
            psi_max: 4.0,
            psi_samples: 33,
            leakage_tol: 1e-8,
            forcing: BoundaryForcing::default(),
            assemble: false,
            epsilon: 0.5,
            stride: 1,
            box_radius: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub system: SystemSpec,
    pub box_radius: i64,
    pub harmonic_bound: i64,
    pub res_tol: f64,
    /// Type-1 constant; calibrated from the enumeration when absent.
    pub c0: Option<f64>,
    pub small_divisor_box: i64,
    pub tolerances: Tolerances,
    pub seed: u64,
    pub samples: Samples,
    pub solve: SolveSpec,
    pub out: Option<PathBuf>,
    pub format: Format,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            system: SystemSpec::default(),
            box_radius: 6,
            harmonic_bound: 6,
            res_tol: 1e-9,
            c0: None,
            small_divisor_box: 20,
            tolerances: Tolerances::default(),
            seed: 0,
            samples: Samples::default(),
            solve: SolveSpec::default(),
            out: None,
            format: Format::Csv,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("invalid config {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.box_radius < 1 {
            bail!("box_radius must be at least 1 (got {})", self.box_radius);
        }
        if self.harmonic_bound < 1 {
            bail!("harmonic_bound must be at least 1");
        }
        let t = &self.tolerances;
        let positive = [
            t.matrix,
            t.singular,
            t.gap,
            t.complex,
            t.characteristic,
            t.glancing,
            t.near_glancing,
            t.real_root,
            t.cluster,
            t.defect,
            t.resonance,
            t.lopatinskii,
            t.fd_step,
            self.res_tol,
            self.solve.picard.tol,
            self.solve.picard.step_tol,
            self.solve.leakage_tol,
        ];
        if positive.iter().any(|x| x.is_nan() || *x <= 0.0) {
            bail!("tolerances must be positive");
        }
        if self.solve.box_radius < 1 {
            bail!("solve.box_radius must be at least 1");
        }
        if self.solve.harmonics < 1 || self.solve.stride < 1 {
            bail!("solve.harmonics and solve.stride must be at least 1");
        }
        Ok(())
    }

    pub fn solve_box_radius(&self) -> i64 {
        self.solve.box_radius.min(self.box_radius)
    }

    pub fn assumption_options(&self) -> AssumptionOptions {
        AssumptionOptions {
            box_radius: self.box_radius,
            harmonic_bound: self.harmonic_bound,
            res_tol: self.res_tol,
            c0: self.c0,
            kl_samples: self.samples.kl,
            small_divisor_box: self.small_divisor_box,
            ..AssumptionOptions::default()
        }
    }
}
