//! Subcommand implementations. Each returns whether every enabled check
//! passed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use anyhow::{Context, Result};
use multiphase_wkb::boundary_spectral::{lopatinskii_scan, strictly_dissipative_check, DEFAULT_GAMMAS};
use multiphase_wkb::char_variety::{check_strict_hyperbolicity, eigen_structure, identity_sweep, velocity_bound};
use multiphase_wkb::euler2d::{
    alpha3_polarization, closed_form_tau, closed_form_xi, euler_gamma_frequencies, region_classify, EulerParams,
    EulerRegion,
};
use multiphase_wkb::lattice_resonance::{
    calibrate_c0, check_assumptions, classify_all, enumerate_resonances, lift_box, partition_frequency_sets,
    small_divisor_fit, FrequencyPartition, GlancingModel, Lattice, ModeKey, ResonanceEnumeration,
};
use multiphase_wkb::linalg::sphere_samples;
use multiphase_wkb::profile_solver::{
    assemble_leading_profile, boundary_residual, profile_diagnostics, solve_leading_profile, BoundaryForcing,
    ForcingProfile, ForcingTerm, PicardOptions, ProfileRunOptions, SlowGrid, SolverOptions,
};
use multiphase_wkb::report::{Check, Diagnostics};
use multiphase_wkb::system_model::{linearize, HyperbolicSystem, LinearizedSystem};
use num_complex::Complex64;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::output::{write_fields, write_json, write_resonances, write_sampled};

pub struct Session {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub timings: bool,
    clock: BTreeMap<String, f64>,
}

impl Session {
    pub fn new(cfg: RunConfig, out: PathBuf, timings: bool) -> Result<Self> {
        std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
        Ok(Self {
            cfg,
            out,
            timings,
            clock: BTreeMap::new(),
        })
    }

    fn timed<T>(&mut self, name: &str, f: impl FnOnce(&Self) -> T) -> T {
        let start = Instant::now();
        let v = f(self);
        if self.timings {
            *self.clock.entry(name.to_string()).or_default() += start.elapsed().as_secs_f64();
        }
        v
    }

    fn diagnostics(&self, checks: Vec<Check>) -> Diagnostics {
        Diagnostics {
            checks,
            timings: self.clock.clone(),
        }
    }

    fn dir(&self) -> &Path {
        &self.out
    }

    fn system(&self) -> Result<(HyperbolicSystem, LinearizedSystem)> {
        let sys = self.cfg.system.build()?;
        let lin = linearize(&sys, self.cfg.tolerances.fd_step)?;
        Ok((sys, lin))
    }

    fn lattice(&self, sys: &HyperbolicSystem, lin: &LinearizedSystem) -> Result<Lattice> {
        let mut lat = Lattice::new(lin.clone(), sys.zetas().to_vec())?;
        lat.tol = self.cfg.tolerances;
        Ok(lat)
    }
}

fn to_check(name: &str, r: multiphase_wkb::Result<Check>) -> Check {
    r.unwrap_or_else(|e| Check::failed(name, e.to_string()))
}

fn identity_checks(s: &Session, lin: &LinearizedSystem) -> Vec<Check> {
    let tol = 1e-10;
    match identity_sweep(lin, s.cfg.samples.identity, s.cfg.seed) {
        Ok(sw) => vec![
            Check::at_most("partial_inverse", sw.partial_inverse, tol),
            Check::at_most("projector_annihilation", sw.annihilation, tol),
            Check::at_most("projector_completeness", sw.completeness, tol),
            Check::at_most("lax_identities", sw.lax, tol)
                .with_detail(format!("{} near-glancing branches skipped", sw.near_glancing)),
        ],
        Err(e) => vec![Check::failed("identity_sweep", e.to_string())],
    }
}

/// Relative error of the computed branches against the closed forms.
fn euler_tau_check(params: &EulerParams, lin: &LinearizedSystem, samples: usize, seed: u64) -> Check {
    to_check(
        "euler_closed_form_tau",
        (|| {
            let mut worst: f64 = 0.0;
            for p in sphere_samples(2, samples, seed) {
                let es = eigen_structure(lin, &p[..1], p[1])?;
                let exact = closed_form_tau(params, p[0], p[1])?;
                for (a, b) in es.taus.iter().zip(exact) {
                    worst = worst.max((a - b).abs() / b.abs().max(1.0));
                }
            }
            Ok(Check::at_most("euler_closed_form_tau", worst, 1e-12))
        })(),
    )
}

/// `π̃_2 E_2 = u_0 A_2^{-1} E_2` on the entropy branch.
fn euler_entropy_lax(params: &EulerParams, lin: &LinearizedSystem, seed: u64) -> Check {
    to_check(
        "euler_entropy_lax",
        (|| {
            let mut worst: f64 = 0.0;
            for p in sphere_samples(2, 64, seed) {
                let es = eigen_structure(lin, &p[..1], p[1])?;
                let e = &es.rights[1];
                let lhs = &es.pis_tilde[1] * e;
                let rhs = lin.ad_inv() * e * params.u0;
                worst = worst.max((lhs - rhs).norm());
            }
            Ok(Check::at_most("euler_entropy_lax", worst, 1e-10))
        })(),
    )
}

pub fn analyze(s: &mut Session) -> Result<bool> {
    let (_, lin) = s.system()?;
    let mut checks = s.timed("identities", |s| identity_checks(s, &lin));
    let hyp = check_strict_hyperbolicity(&lin, s.cfg.samples.identity);
    checks.push(Check::new(
        "strict_hyperbolicity",
        hyp.min_gap,
        s.cfg.tolerances.gap,
        hyp.pass,
    ));
    checks.push(to_check(
        "velocity_bound",
        velocity_bound(&lin, s.cfg.samples.velocity)
            .map(|v| Check::new("velocity_bound", v.vstar, f64::INFINITY, v.vstar.is_finite())),
    ));
    if let Some(p) = s.cfg.system.euler_params().copied() {
        checks.push(euler_tau_check(&p, &lin, 10 * s.cfg.samples.identity, s.cfg.seed));
        checks.push(euler_entropy_lax(&p, &lin, s.cfg.seed));
    }
    let diag = s.diagnostics(checks);
    write_json(s.dir(), "verify.json", &diag)?;
    Ok(diag.all_pass())
}

fn run_assumptions(s: &Session, sys: &HyperbolicSystem, lin: &LinearizedSystem) -> Result<(Vec<Check>, f64)> {
    let mut checks = Vec::new();
    let mut opts = s.cfg.assumption_options();
    if let Some(p) = s.cfg.system.euler_params() {
        let valid = p.validate();
        checks.push(
            Check::new("parameter_range", 0.0, 0.0, valid.is_ok()).with_detail(match valid {
                Ok(()) => "0 < u0 < c0, delta > 1".to_string(),
                Err(e) => e.to_string(),
            }),
        );
        opts.glancing = Some(GlancingModel::Euler(*p));
    }
    match check_assumptions(sys, lin, &opts) {
        Ok(rep) => {
            checks.extend(rep.checks);
            Ok((checks, rep.c0))
        }
        Err(e) => {
            checks.push(Check::failed("assumptions", e.to_string()));
            Ok((checks, f64::NAN))
        }
    }
}

pub fn assumptions(s: &mut Session) -> Result<bool> {
    let (sys, lin) = s.system()?;
    let (checks, c0) = s.timed("assumptions", |s| run_assumptions(s, &sys, &lin))?;
    let diag = s.diagnostics(checks);
    write_json(
        s.dir(),
        "assumptions.json",
        &json!({"box_radius": s.cfg.box_radius, "harmonic_bound": s.cfg.harmonic_bound, "c0": c0, "checks": diag.checks, "timings": diag.timings}),
    )?;
    Ok(diag.all_pass())
}

struct Enumerated {
    enumeration: ResonanceEnumeration,
    partition: FrequencyPartition,
    c0: f64,
}

fn enumerate(s: &Session, lat: &Lattice, radius: i64) -> Result<Enumerated> {
    let lifted = lift_box(lat, radius)?;
    let mut en = enumerate_resonances(lat, &lifted, radius, s.cfg.harmonic_bound, s.cfg.res_tol)?;
    let c0 = s.cfg.c0.unwrap_or_else(|| calibrate_c0(&en));
    classify_all(&mut en, c0);
    let incoming: Vec<Arc<ModeKey>> = lifted.iter().flat_map(|l| l.modes.iter().cloned()).collect();
    let partition = partition_frequency_sets(&en.resonances, &incoming)?;
    Ok(Enumerated {
        enumeration: en,
        partition,
        c0,
    })
}

#[derive(Serialize)]
struct PartitionReport<'a> {
    box_radius: i64,
    harmonic_bound: i64,
    res_tol: f64,
    c0: f64,
    resonances: usize,
    self_interactions: usize,
    near_misses: usize,
    linear_branches: &'a [usize],
    partition: &'a FrequencyPartition,
}

pub fn resonances(s: &mut Session) -> Result<bool> {
    let (sys, lin) = s.system()?;
    let lat = s.lattice(&sys, &lin)?;
    let radius = s.cfg.box_radius;
    let e = s.timed("enumeration", |s| enumerate(s, &lat, radius))?;
    write_resonances(&s.dir().join("resonances.csv"), &e.enumeration.resonances)?;
    let en = &e.enumeration;
    write_json(
        s.dir(),
        "partition.json",
        &PartitionReport {
            box_radius: en.box_radius,
            harmonic_bound: en.harmonic_bound,
            res_tol: en.res_tol,
            c0: e.c0,
            resonances: en.non_self().count(),
            self_interactions: en.resonances.len() - en.non_self().count(),
            near_misses: en.near_misses.len(),
            linear_branches: &en.linear_branches,
            partition: &e.partition,
        },
    )?;
    Ok(true)
}

/// Sign of the projector polarization against the closed-form `α_3` one.
fn alpha3_sign(params: &EulerParams, m: &ModeKey, lambda: i64) -> f64 {
    let z = [lambda as f64 * m.dir.zeta[0], lambda as f64 * m.dir.zeta[1]];
    alpha3_polarization(params, z).dot(&m.e).signum()
}

fn gamma_checks(s: &Session, e: &Enumerated) -> Result<(Vec<Check>, Vec<serde_json::Value>)> {
    let mut rows = Vec::new();
    let mut defect: f64 = 0.0;
    let mut oracle: Option<f64> = None;
    let params = s.cfg.system.euler_params().copied();
    for r in e.enumeration.non_self() {
        let sym = (r.gamma_pq + r.gamma_pr).norm();
        defect = defect.max(sym);
        let mut closed = None;
        if let Some(p) = &params {
            let on_alpha3 = [&r.p, &r.q, &r.r]
                .iter()
                .all(|m| (m.xi0 * p.u0 + m.dir.zeta[0]).abs() <= 1e-12 * m.dir.zeta[0].abs().max(1.0));
            if on_alpha3 {
                let zp = [r.lp as f64 * r.p.dir.zeta[0], r.lp as f64 * r.p.dir.zeta[1]];
                let zq = [r.lq as f64 * r.q.dir.zeta[0], r.lq as f64 * r.q.dir.zeta[1]];
                let sign = alpha3_sign(p, &r.p, r.lp) * alpha3_sign(p, &r.q, r.lq) * alpha3_sign(p, &r.r, r.lr);
                let g = sign * euler_gamma_frequencies(p, zp, zq)?;
                let rel = (r.gamma_pq.re - g).abs() / g.abs().max(1e-300);
                let rel = if g == 0.0 { r.gamma_pq.norm() } else { rel };
                oracle = Some(oracle.unwrap_or(0.0).max(rel));
                closed = Some(g);
            }
        }
        rows.push(json!({
            "lp": r.lp, "lq": r.lq, "lr": r.lr,
            "np": r.p.id.n0, "nq": r.q.id.n0, "nr": r.r.id.n0,
            "gamma_pq": r.gamma_pq.re, "gamma_pr": r.gamma_pr.re,
            "closed_form": closed,
        }));
    }
    let mut checks = vec![Check::new(
        "gamma_symmetry_defect",
        defect,
        f64::INFINITY,
        defect.is_finite(),
    )];
    if let Some(rel) = oracle {
        checks.push(Check::at_most("euler_gamma_oracle", rel, 1e-8));
        checks.push(Check::at_most("euler_gamma_cancellation", defect, 1e-10));
    }
    Ok((checks, rows))
}

pub fn gamma(s: &mut Session) -> Result<bool> {
    let (sys, lin) = s.system()?;
    let lat = s.lattice(&sys, &lin)?;
    let radius = s.cfg.box_radius;
    let e = s.timed("enumeration", |s| enumerate(s, &lat, radius))?;
    let (checks, rows) = gamma_checks(s, &e)?;
    let diag = s.diagnostics(checks);
    write_json(
        s.dir(),
        "gamma.json",
        &json!({"checks": diag.checks, "rows": rows, "timings": diag.timings}),
    )?;
    Ok(diag.all_pass())
}

fn run_options(s: &Session, lin: &LinearizedSystem) -> Result<ProfileRunOptions> {
    let sp = &s.cfg.solve;
    let vstar = match sp.vstar {
        Some(v) => v,
        None => velocity_bound(lin, s.cfg.samples.velocity)?.vstar,
    };
    let xd = sp.xd.unwrap_or(2.0 * vstar * sp.t_final);
    let grid = SlowGrid::new(sp.t_final, sp.ly, xd, sp.nt, sp.ny, sp.nx)?;
    let mut opts = ProfileRunOptions::new(grid, sp.harmonics, vstar);
    opts.solver = SolverOptions {
        picard_tol: sp.picard.step_tol,
        max_iter: sp.picard.step_max_iter,
        cfl: sp.cfl,
        substeps: sp.substeps,
        vstar,
    };
    opts.picard = PicardOptions {
        tol: sp.picard.tol,
        max_iter: sp.picard.max_iter,
        max_halvings: sp.picard.max_halvings,
    };
    opts.derivative = sp.derivative.into();
    opts.chi_support = sp.chi_support.unwrap_or(xd);
    let n = sp.psi_samples.max(2);
    opts.psi = (0..n).map(|i| sp.psi_max * i as f64 / (n - 1) as f64).collect();
    opts.leakage_tol = sp.leakage_tol;
    Ok(opts)
}

fn run_solve(s: &mut Session, forcing: &BoundaryForcing) -> Result<bool> {
    let (sys, lin) = s.system()?;
    let lat = s.lattice(&sys, &lin)?;
    let opts = run_options(s, &lin)?;
    let radius = s.cfg.solve_box_radius();
    let e = s.timed("enumeration", |s| enumerate(s, &lat, radius))?;
    let run = s.timed("solve", |_| {
        solve_leading_profile(
            &lat,
            sys.boundary(),
            forcing,
            &e.enumeration.resonances,
            &e.partition,
            &opts,
        )
    })?;
    let m = sys.zetas().len();
    let diag = profile_diagnostics(&run, forcing, &e.partition, &opts, m)?;
    let mut checks = diag.checks.clone();

    let nt = run.fields().iter().map(|f| f.grid.nt).min().unwrap_or(opts.grid.nt);
    let mut owned = Vec::new();
    if let Some(r) = &run.resonant {
        owned.push((r.field.truncated_time(nt.min(r.field.grid.nt))?, "resonant"));
    }
    for b in &run.burgers {
        owned.push((b.field.truncated_time(nt)?, "burgers"));
    }
    let grid = owned.first().map_or(opts.grid, |(f, _)| f.grid);
    let fields: Vec<_> = owned.iter().map(|(f, k)| (f, *k)).collect();
    let stride = s.cfg.solve.stride;
    let sidecar = s.timed("output", |s| {
        write_fields(s.dir(), &fields, &grid, s.cfg.format, stride)
    })?;
    write_json(s.dir(), "fields.json", &sidecar)?;

    if s.cfg.solve.assemble {
        let plain: Vec<_> = owned.iter().map(|(f, _)| f).collect();
        let ev = (grid == opts.grid).then_some(&run.evanescent);
        let sampled = assemble_leading_profile(&plain, ev, &grid, lin.n(), s.cfg.solve.epsilon)?;
        checks.push(Check::at_most("uapp_reality", sampled.max_imag, 1e-12));
        let res = boundary_residual(&sampled, sys.boundary(), forcing, sys.zetas())?;
        checks.push(Check::new("boundary_residual", res, f64::INFINITY, res.is_finite()));
        write_sampled(s.dir(), &sampled, stride)?;
    }

    let report = s.diagnostics(checks);
    write_json(
        s.dir(),
        "diagnostics.json",
        &json!({
            "checks": report.checks,
            "timings": report.timings,
            "energy": diag.energy,
            "finite_speed_leakage": report.get("finite_speed_leakage").map(|c| c.value),
            "picard_iterations": diag.picard_updates.len(),
            "picard_updates": diag.picard_updates,
            "picard_halvings": diag.picard_halvings,
            "t_final": grid.t_final,
            "decay_fits": run.evanescent.decay_fits(),
            "burgers_gamma": run.burgers.iter().map(|b| json!({"n0": b.mode.id.n0, "root": b.mode.id.root, "gamma_self": b.gamma_self})).collect::<Vec<_>>(),
            "resonant_modes": run.couplings.as_ref().map(|c| c.modes.iter().map(|m| m.id.clone()).collect::<Vec<_>>()),
            "vstar": opts.solver.vstar,
        }),
    )?;
    Ok(report.all_pass())
}

pub fn solve(s: &mut Session) -> Result<bool> {
    let forcing = s.cfg.solve.forcing.clone();
    run_solve(s, &forcing)
}

/// Compactly supported bumps on `±(1,0)` and `±(0,1)`.
pub fn demo_forcing(rows: usize) -> BoundaryForcing {
    let profile = ForcingProfile {
        t_center: 0.5,
        t_width: 0.45,
        y_center: None,
        y_width: 1.0,
    };
    let unit = |r: usize| -> Vec<Complex64> {
        (0..rows)
            .map(|i| Complex64::new(if i == r { 0.05 } else { 0.0 }, 0.0))
            .collect()
    };
    BoundaryForcing {
        terms: vec![
            ForcingTerm {
                n: vec![1, 0],
                amplitude: unit(0),
                profile,
            },
            ForcingTerm {
                n: vec![0, 1],
                amplitude: unit(rows.saturating_sub(1)),
                profile,
            },
        ],
    }
}

pub fn demo_euler(s: &mut Session) -> Result<bool> {
    if s.cfg.system.euler_params().is_none() {
        anyhow::bail!("demo-euler needs the built-in Euler system");
    }
    let ok_assumptions = assumptions(s)?;
    let ok_resonances = resonances(s)?;
    let forcing = if s.cfg.solve.forcing.terms.is_empty() {
        demo_forcing(2)
    } else {
        s.cfg.solve.forcing.clone()
    };
    let ok_solve = run_solve(s, &forcing)?;
    write_json(
        s.dir(),
        "report.json",
        &json!({
            "assumptions": ok_assumptions,
            "resonances": ok_resonances,
            "solve": ok_solve,
            "forcing": forcing,
            "pass": ok_assumptions && ok_resonances && ok_solve,
        }),
    )?;
    Ok(ok_assumptions && ok_resonances && ok_solve)
}

/// Closed-form Euler checks that need no profile solve.
fn euler_checks(s: &Session, p: &EulerParams, lin: &LinearizedSystem, sys: &HyperbolicSystem) -> Vec<Check> {
    let mut checks = Vec::new();
    checks.push(to_check(
        "kreiss_lopatinskii_doubling",
        (|| {
            let a = lopatinskii_scan(lin, sys.boundary(), s.cfg.samples.kl, &DEFAULT_GAMMAS)?;
            let b = lopatinskii_scan(lin, sys.boundary(), 2 * s.cfg.samples.kl, &DEFAULT_GAMMAS)?;
            let rel = (a.min_det - b.min_det).abs() / a.min_det;
            Ok(Check::at_most("kreiss_lopatinskii_doubling", rel, 0.1)
                .with_detail(format!("min det {:e} / {:e}", a.min_det, b.min_det)))
        })(),
    ));
    checks.push(to_check(
        "dissipative_margin",
        (|| {
            let e = p.boundary_kernel();
            let rep = strictly_dissipative_check(lin, sys.boundary(), &p.symmetrizer(), Some(&[e]))?;
            let exact = p.u0 * p.v0 * p.v0 * (p.u0 * p.u0 - p.c0 * p.c0);
            Ok(Check::at_most(
                "dissipative_margin",
                (rep.margin - exact).abs(),
                1e-12 * exact.abs(),
            ))
        })(),
    ));
    checks.push(to_check(
        "euler_region_table",
        (|| {
            let mut mismatches = 0;
            for a in -30i64..=30 {
                for b in -30i64..=30 {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let z = p.zeta_pq(a, b);
                    let table = region_classify(p, a, b)?;
                    let roots = closed_form_xi(p, z[0], z[1])?;
                    let same = match (table, roots.region) {
                        (EulerRegion::Hyperbolic { tau_positive }, EulerRegion::Hyperbolic { .. }) => {
                            tau_positive == (z[0] > 0.0)
                        }
                        (x, y) => x == y,
                    };
                    if !same {
                        mismatches += 1;
                    }
                }
            }
            Ok(Check::at_most("euler_region_table", mismatches as f64, 0.0))
        })(),
    ));
    checks.push(to_check(
        "small_divisor_exponent",
        (|| {
            let lat = Lattice::new(lin.clone(), p.zetas())?;
            let fit = small_divisor_fit(&lat, &GlancingModel::Euler(*p), 40)?;
            Ok(Check::at_most("small_divisor_exponent_box40", fit.a1, 1.7))
        })(),
    ));
    checks
}

pub fn verify(s: &mut Session) -> Result<bool> {
    let (sys, lin) = s.system()?;
    let mut checks = s.timed("identities", |s| identity_checks(s, &lin));
    let (assume, _) = s.timed("assumptions", |s| run_assumptions(s, &sys, &lin))?;
    checks.extend(assume);
    if let Some(p) = s.cfg.system.euler_params().copied() {
        if p.validate().is_ok() {
            checks.push(euler_tau_check(&p, &lin, 10 * s.cfg.samples.identity, s.cfg.seed));
            checks.push(euler_entropy_lax(&p, &lin, s.cfg.seed));
            let more = s.timed("euler", |s| euler_checks(s, &p, &lin, &sys));
            checks.extend(more);
            let lat = s.lattice(&sys, &lin)?;
            let radius = s.cfg.box_radius;
            match s.timed("enumeration", |s| enumerate(s, &lat, radius)) {
                Ok(e) => {
                    let off = e
                        .enumeration
                        .non_self()
                        .filter(|r| !(r.p.branch == r.q.branch && r.q.branch == r.r.branch))
                        .count();
                    checks.push(Check::at_most("cross_branch_resonances", off as f64, 0.0));
                    checks.extend(gamma_checks(s, &e)?.0);
                }
                Err(err) => checks.push(Check::failed("resonance_enumeration", err.to_string())),
            }
        }
    }
    let diag = s.diagnostics(checks);
    write_json(s.dir(), "verify.json", &diag)?;
    Ok(diag.all_pass())
}

pub fn default_out(cfg: &RunConfig) -> PathBuf {
    cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"))
}
