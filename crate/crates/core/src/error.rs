use thiserror::Error;

/// Errors raised by the analysis and solver layers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("normal matrix A_d(0) is singular (|det| = {det:.3e})")]
    SingularNormalMatrix { det: f64 },
    #[error("coefficient provider returned a non-finite entry for A_{index}")]
    NonFiniteCoefficient { index: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("eigenvalue collision at {point:?}: gap {gap:.3e}")]
    EigenvalueCollision { point: Vec<f64>, gap: f64 },
    #[error("complex spectrum at {point:?}: imaginary part {imag:.3e}")]
    ComplexSpectrum { point: Vec<f64>, imag: f64 },
    #[error("frequency {alpha:?} is within the ambiguity band of a characteristic root")]
    NearCharacteristicAmbiguity { alpha: Vec<f64> },
    #[error("branch {branch} has degenerate left/right normalization")]
    DegenerateBranch { branch: usize },
    #[error("branch {branch} is glancing (d_xi tau = {dxitau:.3e})")]
    GlancingBranch { branch: usize, dxitau: f64 },
    #[error("boundary frequency {zeta:?} has a glancing root")]
    GlancingFrequency { zeta: Vec<f64> },
    #[error("generalized eigenspace at {zeta:?} could not be resolved")]
    DefectiveElliptic { zeta: Vec<f64> },
    #[error("restricted boundary system is ill-conditioned (cond = {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("S A_{index} is not symmetric (asymmetry {asym:.3e})")]
    NotASymmetrizer { index: usize, asym: f64 },
    #[error("zero lattice vector")]
    ZeroVector,
    #[error("lattice direction {n:?} is glancing")]
    GlancingOnLattice { n: Vec<i64> },
    #[error("projected polarization vanishes (norm {norm:.3e})")]
    NullProjectedPolarization { norm: f64 },
    #[error("resonance straddles incoming and outgoing blocks: {0}")]
    PartitionClosureViolation(String),
    #[error("marching step violates the CFL bound: {0}")]
    CflViolation(String),
    #[error("Picard iteration did not converge after {iterations} iterations (update {update:.3e})")]
    PicardDivergence { iterations: usize, update: f64 },
    #[error("gradient guard tripped ({value:.3e} > {limit:.3e}); solution is near a shock")]
    ShockProximity { value: f64, limit: f64 },
    #[error("resonance coupling too strong for the marching step ({value:.3e})")]
    UnboundedCoupling { value: f64 },
    #[error("Picard iteration failed to contract after {halvings} halvings of T")]
    NoContraction { halvings: usize },
    #[error("epsilon {epsilon:.3e} aliases the output sampling (phase step {step:.3e})")]
    EpsilonTooSmallForGrid { epsilon: f64, step: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("parameter out of range: {0}")]
    ParameterOutOfRange(String),
    #[error("zero frequency")]
    ZeroFrequency,
    #[error("lattice point ({p}, {q}) is exactly glancing")]
    ExactGlancing { p: i64, q: i64 },
    #[error("configuration error: {0}")]
    ConfigParse(String),
    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::ConfigParse(e.to_string())
    }
}
