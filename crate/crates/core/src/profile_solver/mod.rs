//! Leading-profile solvers on the slow grid `(t, y, x_d)`.

pub mod assemble;
pub mod burgers;
pub mod diagnostics;
pub mod evanescent;
pub mod field;
pub mod grid;
pub mod pipeline;
pub mod resonant;
pub mod traces;
pub mod transport;

pub use assemble::{assemble_leading_profile, boundary_residual, SampledProfile};
pub use burgers::{solve_burgers_mode, solve_burgers_mode_with, SolverOptions};
pub use diagnostics::{energy_diagnostic, refinement_stable, EnergyReport};
pub use evanescent::{assemble_evanescent, DecayFit, EvanescentComponent, EvanescentField};
pub use field::{finite_speed_check, incoming_inner_product, FiniteSpeedReport, ProfileField};
pub use grid::{bump, cutoff_beta, SlowGrid};
pub use pipeline::{
    profile_diagnostics, solve_leading_profile, BurgersProfile, LeadingProfile, ProfileDiagnostics, ProfileRunOptions,
};
pub use resonant::{
    build_couplings, solve_linearized_resonant, solve_resonant_system, Coupling, Couplings, Derivative, PicardOptions,
    PicardTrace, ResonantSolution,
};
pub use traces::{
    boundary_traces, trace_split, BoundaryForcing, BoundaryTraces, ForcingProfile, ForcingTerm, TraceSplit,
};
pub use transport::{MarchSettings, MarchStats, Marcher, Source, ThetaProducts, Transport};
