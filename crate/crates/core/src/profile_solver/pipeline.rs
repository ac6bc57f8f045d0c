//! Full leading-profile run: traces, resonant system, Burgers profiles and
//! evanescent part, with the diagnostics of each piece.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::burgers::{solve_burgers_mode, SolverOptions};
use super::diagnostics::{energy_diagnostic, EnergyReport};
use super::evanescent::{assemble_evanescent, EvanescentField};
use super::field::{finite_speed_check, ProfileField};
use super::grid::SlowGrid;
use super::resonant::{build_couplings, solve_resonant_system, Couplings, Derivative, PicardOptions, ResonantSolution};
use super::traces::{boundary_traces, trace_split, BoundaryForcing, BoundaryTraces};
use crate::boundary_spectral::RootClass;
use crate::error::Result;
use crate::lattice_resonance::{lift_direction, FrequencyPartition, GammaProbe, Lattice, ModeId, ModeKey, Resonance};
use crate::report::Check;

use super::resonant::derivative_frequency;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRunOptions {
    pub grid: SlowGrid,
    pub bound: usize,
    #[serde(skip)]
    pub solver: SolverOptions,
    pub picard: PicardOptions,
    pub derivative: Derivative,
    pub chi_support: f64,
    pub psi: Vec<f64>,
    pub leakage_tol: f64,
}

impl ProfileRunOptions {
    pub fn new(grid: SlowGrid, bound: usize, vstar: f64) -> Self {
        Self {
            grid,
            bound,
            solver: SolverOptions {
                vstar,
                ..SolverOptions::default()
            },
            picard: PicardOptions::default(),
            derivative: Derivative::Spectral,
            chi_support: grid.xd,
            psi: (0..=32).map(|i| i as f64 / 8.0).collect(),
            leakage_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BurgersProfile {
    pub mode: Arc<ModeKey>,
    pub gamma_self: f64,
    pub field: ProfileField,
}

#[derive(Debug, Clone)]
pub struct LeadingProfile {
    pub traces: BoundaryTraces,
    pub couplings: Option<Couplings>,
    pub resonant: Option<ResonantSolution>,
    pub burgers: Vec<BurgersProfile>,
    pub evanescent: EvanescentField,
}

impl LeadingProfile {
    /// Every oscillating field, resonant first.
    pub fn fields(&self) -> Vec<&ProfileField> {
        self.resonant
            .iter()
            .map(|r| &r.field)
            .chain(self.burgers.iter().map(|b| &b.field))
            .collect()
    }
}

fn gamma_self(lat: &Lattice, mode: &ModeKey) -> Result<f64> {
    let probe = GammaProbe::new(&lat.lin, mode)?;
    let zeta = derivative_frequency(&lat.zetas, mode, 1, Derivative::Spectral);
    Ok(probe.eval(&lat.lin, &mode.e, &zeta, &mode.e)?.0)
}

/// Solves every piece of the leading profile excited by `forcing`.
pub fn solve_leading_profile(
    lat: &Lattice,
    b: &DMatrix<f64>,
    forcing: &BoundaryForcing,
    resonances: &[Resonance],
    partition: &FrequencyPartition,
    opts: &ProfileRunOptions,
) -> Result<LeadingProfile> {
    let grid = &opts.grid;
    grid.check_extent(opts.solver.vstar)?;
    forcing.validate(grid, b.nrows())?;
    let traces = boundary_traces(lat, b, forcing)?;

    let mut keys: BTreeMap<ModeId, Arc<ModeKey>> = BTreeMap::new();
    for r in resonances.iter().filter(|r| !r.is_self()) {
        for m in [&r.p, &r.q, &r.r] {
            keys.entry(m.id.clone()).or_insert_with(|| m.clone());
        }
    }
    let directions: BTreeSet<Vec<i64>> = traces.components.iter().map(|c| c.n0.clone()).collect();
    for n0 in directions {
        let (dir, _) = lat.direction(&n0)?;
        for m in lift_direction(lat, &dir)?.modes {
            keys.entry(m.id.clone()).or_insert(m);
        }
    }
    let excited = traces.excited_modes();

    let seeds: Vec<ModeId> = excited
        .iter()
        .filter(|id| partition.incoming_resonant.contains(*id))
        .cloned()
        .collect();
    let (couplings, resonant) = if seeds.is_empty() {
        (None, None)
    } else {
        let universe: Vec<Arc<ModeKey>> = keys
            .values()
            .filter(|m| m.class == RootClass::Incoming && partition.incoming_resonant.contains(&m.id))
            .cloned()
            .collect();
        let all = build_couplings(lat, &universe, resonances, opts.bound, opts.derivative)?;
        let seed_idx: BTreeSet<usize> = seeds.iter().filter_map(|id| all.position(id)).collect();
        let couplings = all.restrict(&all.closure(&seed_idx));
        let boundary = traces.boundary_slab(&couplings.modes, opts.bound, grid)?;
        let sol = solve_resonant_system(&couplings, None, &boundary, grid, &opts.solver, &opts.picard)?;
        (Some(couplings), Some(sol))
    };

    let nonresonant: Vec<Arc<ModeKey>> = excited
        .iter()
        .filter(|id| !partition.incoming_resonant.contains(*id))
        .map(|id| keys[id].clone())
        .collect();
    let burgers = nonresonant
        .par_iter()
        .map(|mode| {
            let g = gamma_self(lat, mode)?;
            let h = traces.boundary_slab(std::slice::from_ref(mode), opts.bound, grid)?;
            let field = solve_burgers_mode(mode, g, &h, grid, opts.bound, &opts.solver)?;
            Ok(BurgersProfile {
                mode: mode.clone(),
                gamma_self: g,
                field,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let evanescent = assemble_evanescent(&traces, opts.chi_support, &opts.psi)?;
    Ok(LeadingProfile {
        traces,
        couplings,
        resonant,
        burgers,
        evanescent,
    })
}

/// Threshold standing for "finite" in the reported checks.
pub const FINITE_LIMIT: f64 = 1e6;

/// Diagnostics of a run: finite speed, energy, Picard, traces and decay.
#[derive(Debug, Clone, Serialize)]
pub struct ProfileDiagnostics {
    pub checks: Vec<Check>,
    pub energy: Option<EnergyReport>,
    pub picard_updates: Vec<f64>,
    pub picard_halvings: usize,
}

pub fn profile_diagnostics(
    run: &LeadingProfile,
    forcing: &BoundaryForcing,
    partition: &FrequencyPartition,
    opts: &ProfileRunOptions,
    m: usize,
) -> Result<ProfileDiagnostics> {
    let mut checks = Vec::new();
    let leakage = run
        .fields()
        .iter()
        .map(|f| finite_speed_check(f, opts.solver.vstar, opts.leakage_tol).leakage)
        .fold(0.0, f64::max);
    checks.push(Check::at_most("finite_speed_leakage", leakage, opts.leakage_tol));
    let energy = match &run.resonant {
        Some(sol) => {
            let rep = energy_diagnostic(&sol.field, Some(&sol.field), None)?;
            checks.push(Check::at_most("energy_constant", rep.constant, FINITE_LIMIT));
            Some(rep)
        }
        None => None,
    };
    let (updates, halvings) = run
        .resonant
        .as_ref()
        .map_or((Vec::new(), 0), |s| (s.trace.updates.clone(), s.trace.halvings));
    checks.push(Check::at_most(
        "picard_update",
        updates.last().copied().unwrap_or(0.0),
        opts.picard.tol,
    ));
    checks.push(Check::at_most("trace_reassembly", run.traces.max_reassembly(), 1e-9));
    let split = trace_split(&run.traces, forcing, partition, &opts.grid, m);
    checks.push(Check::at_most("trace_split_constant", split.constant, FINITE_LIMIT));
    let fits = run.evanescent.decay_fits();
    let worst = fits
        .iter()
        .filter_map(|f| f.predicted.map(|p| f.fitted / p))
        .filter(|r| r.is_finite())
        .fold(f64::INFINITY, f64::min);
    let worst = if worst.is_finite() { worst } else { 1.0 };
    checks.push(Check::new(
        "evanescent_decay_ratio",
        worst,
        0.95,
        fits.iter().all(|f| f.pass),
    ));
    Ok(ProfileDiagnostics {
        checks,
        energy,
        picard_updates: updates,
        picard_halvings: halvings,
    })
}
