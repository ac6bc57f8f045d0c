//! One line per acceptance criterion; exits nonzero if any fails.

mod common;

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use multiphase_wkb::boundary_spectral::{
    boundary_solve, decompose_stable, lopatinskii_scan, strictly_dissipative_check, RootClass, DEFAULT_GAMMAS,
};
use multiphase_wkb::char_variety::{eigen_structure, frequency_operators, verify_lax};
use multiphase_wkb::euler2d::{
    alpha3_polarization, closed_form_tau, closed_form_xi, euler_gamma_frequencies, EulerParams,
};
use multiphase_wkb::lattice_resonance::{
    box_directions, enumerate_resonances, lift_box, normalize_direction, small_divisor_fit, GlancingModel, ModeKey,
};
use multiphase_wkb::profile_solver::{
    assemble_evanescent, boundary_traces, bump, cutoff_beta, energy_diagnostic, finite_speed_check, refinement_stable,
    solve_burgers_mode, solve_leading_profile, solve_linearized_resonant, trace_split, BoundaryForcing, ForcingTerm,
    LeadingProfile, ProfileRunOptions, SlowGrid, SolverOptions, Transport,
};
use nalgebra::DMatrix;
use num_complex::Complex64 as C;
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn c1_eigenvalues() -> Outcome {
    let e = common::euler();
    let mut rng = common::rng(101);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let (eta, xi) = common::unit_circle(&mut rng);
        let es = eigen_structure(&e.lin, &[eta], xi).unwrap();
        let exact = closed_form_tau(&e.params, eta, xi).unwrap();
        for (a, b) in es.taus.iter().zip(exact) {
            worst = worst.max((a - b).abs() / b.abs().max(1.0));
        }
    }
    outcome(worst <= 1e-12, format!("max rel error {worst:.2e} (tol 1e-12)"))
}

fn c2_projectors() -> Outcome {
    let e = common::euler();
    let id = DMatrix::<f64>::identity(3, 3);
    let mut rng = common::rng(102);
    let (mut q_err, mut tilde_err, mut sum_err): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let (eta, xi) = common::unit_circle(&mut rng);
        let r = rng.gen_range(0.1..10.0);
        let es = eigen_structure(&e.lin, &[r * eta], r * xi).unwrap();
        let k = rng.gen_range(0..3);
        let alpha = [es.taus[k], r * eta, r * xi];
        let ops = frequency_operators(&e.lin, &alpha).unwrap();
        let l = e.lin.l0(&alpha);
        q_err = q_err.max((&ops.q * &l - (&id - &ops.pi)).norm());
        tilde_err = tilde_err.max((&ops.pi_tilde * e.lin.ad_inv() * &l).norm());
        let sum = es.pis.iter().fold(DMatrix::zeros(3, 3), |a, p| a + p);
        sum_err = sum_err.max((sum - &id).norm());
    }
    let worst = q_err.max(tilde_err).max(sum_err);
    outcome(
        worst <= 1e-10,
        format!("partial inverse {q_err:.2e}, annihilation {tilde_err:.2e}, completeness {sum_err:.2e} (tol 1e-10)"),
    )
}

fn c3_lax() -> Outcome {
    let e = common::euler();
    let mut rng = common::rng(103);
    let mut worst: f64 = 0.0;
    let mut samples = 0;
    for _ in 0..1000 {
        let (eta, xi) = common::unit_circle(&mut rng);
        let es = eigen_structure(&e.lin, &[eta], xi).unwrap();
        for k in 0..3 {
            if es.dxitau(k).abs() < 1e-3 {
                continue;
            }
            worst = worst.max(verify_lax(&e.lin, &es, k).unwrap().max());
            samples += 1;
        }
    }
    let mut vort: f64 = 0.0;
    for _ in 0..1000 {
        let (eta, xi) = common::unit_circle(&mut rng);
        let es = eigen_structure(&e.lin, &[eta], xi).unwrap();
        let v = &es.rights[1];
        vort = vort.max((&es.pis_tilde[1] * v - e.lin.ad_inv() * v * e.params.u0).norm());
    }
    outcome(
        worst <= 1e-10 && vort <= 1e-10,
        format!("Lax residual {worst:.2e} over {samples} samples, vorticity identity {vort:.2e} (tol 1e-10)"),
    )
}

fn c4_lopatinskii() -> Outcome {
    let e = common::euler();
    let b = e.params.boundary_matrix();
    let a = lopatinskii_scan(&e.lin, &b, 2000, &DEFAULT_GAMMAS).unwrap();
    let d = lopatinskii_scan(&e.lin, &b, 4000, &DEFAULT_GAMMAS).unwrap();
    let drift = (a.min_det - d.min_det).abs() / a.min_det;
    let (u0, v0, c0) = (e.params.u0, e.params.v0, e.params.c0);
    let want = u0 * v0 * v0 * (u0 * u0 - c0 * c0);
    let diss =
        strictly_dissipative_check(&e.lin, &b, &e.params.symmetrizer(), Some(&[e.params.boundary_kernel()])).unwrap();
    let margin_err = (diss.margin - want).abs();
    outcome(
        a.min_det > 1e-3 && drift <= 0.1 && margin_err <= 1e-14 * want.abs() && diss.pass,
        format!(
            "min det {:.4} (2000) / {:.4} (4000), drift {:.2}%, margin {:.6} vs {:.6}",
            a.min_det,
            d.min_det,
            100.0 * drift,
            diss.margin,
            want
        ),
    )
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

/// Relations `λ_a a + λ_b b = λ_r n_0` among distinct box directions with
/// harmonics up to `bound`, counted in integers.
fn integer_relations(radius: i64, bound: i64) -> usize {
    let dirs = box_directions(2, radius);
    let harmonics: Vec<i64> = (-bound..=bound).filter(|l| *l != 0).collect();
    let mut keys = BTreeSet::new();
    for a in &dirs {
        for b in &dirs {
            if a == b {
                continue;
            }
            for &la in &harmonics {
                for &lb in &harmonics {
                    let n = [la * a[0] + lb * b[0], la * a[1] + lb * b[1]];
                    let Ok((n0, lr)) = normalize_direction(&n) else {
                        continue;
                    };
                    if lr.abs() > bound || n0.iter().any(|x| x.abs() > radius) {
                        continue;
                    }
                    let g = gcd(gcd(la, lb), lr) * lr.signum();
                    let (p, q) = ((la / g, a.clone()), (lb / g, b.clone()));
                    let (p, q) = if p <= q { (p, q) } else { (q, p) };
                    keys.insert((p, q, lr / g, n0));
                }
            }
        }
    }
    keys.len()
}

fn c5_resonances() -> Outcome {
    let start = Instant::now();
    let (_, lat) = common::euler_lattice();
    let (en, part) = common::resonances(&lat, 6, 6);
    let secs = start.elapsed().as_secs_f64();
    let off_branch = en
        .non_self()
        .filter(|r| {
            [&r.p, &r.q, &r.r]
                .iter()
                .any(|m| m.branch != 1 || m.class != RootClass::Incoming)
        })
        .count();
    let outgoing = part.outgoing_resonant.len();
    let count = en.non_self().count();
    let oracle = integer_relations(6, 6);
    outcome(
        off_branch == 0 && outgoing == 0 && count == oracle && secs <= 120.0,
        format!(
            "{count} relations (integer oracle {oracle}), {off_branch} off the vorticity branch, {outgoing} outgoing, {secs:.1} s"
        ),
    )
}

fn polarization_sign(p: &EulerParams, m: &ModeKey, lambda: i64) -> f64 {
    let z = [lambda as f64 * m.dir.zeta[0], lambda as f64 * m.dir.zeta[1]];
    alpha3_polarization(p, z).dot(&m.e).signum()
}

fn c6_gamma() -> Outcome {
    let (e, lat) = common::euler_lattice();
    let p = e.params;
    let lifted = lift_box(&lat, 6).unwrap();
    let en = enumerate_resonances(&lat, &lifted, 6, 6, 1e-9).unwrap();
    let (mut rel, mut cancel): (f64, f64) = (0.0, 0.0);
    let mut n = 0;
    for r in en.non_self() {
        let zp = [r.lp as f64 * r.p.dir.zeta[0], r.lp as f64 * r.p.dir.zeta[1]];
        let zq = [r.lq as f64 * r.q.dir.zeta[0], r.lq as f64 * r.q.dir.zeta[1]];
        let sign =
            polarization_sign(&p, &r.p, r.lp) * polarization_sign(&p, &r.q, r.lq) * polarization_sign(&p, &r.r, r.lr);
        let closed = sign * euler_gamma_frequencies(&p, zp, zq).unwrap();
        let err = (r.gamma_pq.re - closed).abs() + r.gamma_pq.im.abs();
        rel = rel.max(if closed == 0.0 { err } else { err / closed.abs() });
        cancel = cancel.max((r.gamma_pq + r.gamma_pr).norm());
        n += 1;
    }
    outcome(
        n > 0 && rel <= 1e-8 && cancel <= 1e-10,
        format!("{n} triples, max rel error {rel:.2e} (tol 1e-8), cancellation {cancel:.2e} (tol 1e-10)"),
    )
}

fn c7_small_divisors() -> Outcome {
    let (e, lat) = common::euler_lattice();
    match small_divisor_fit(&lat, &GlancingModel::Euler(e.params), 40) {
        Ok(fit) => outcome(
            fit.a1 <= 1.7 && fit.min_distance > 0.0,
            format!(
                "a1 = {:.3} (bound 1.7), min distance {:.2e}, {} points",
                fit.a1, fit.min_distance, fit.points
            ),
        ),
        Err(err) => outcome(false, format!("{err}")),
    }
}

/// Relative `L²` error of the Burgers profile against the implicit
/// characteristic solution `S = 2A cos(Θ − Γ S B(x))`.
fn burgers_error(nt: usize, ny: usize, nx: usize) -> f64 {
    let (_, lat) = common::euler_lattice();
    let mode = common::vorticity_mode(&lat, &[1, 0]);
    let tr = Transport::of(&mode);
    let (gamma, nb, vstar, t_final) = (1.0, 16, 2.0, 1.0);
    let grid = SlowGrid::new(t_final, 2.0, 2.0 * vstar * t_final, nt, ny, nx).unwrap();
    let hb = |t: f64, y: f64| 0.01 * bump(t, 0.5, 0.45) * (1.0 + 0.5 * (2.0 * PI * y / grid.ly).cos());
    let mut h = vec![C::new(0.0, 0.0); nb * grid.plane()];
    for j in 0..nt {
        for k in 0..ny {
            h[j * ny + k] = C::new(hb(grid.t(j), grid.y(k)), 0.0);
        }
    }
    let opts = SolverOptions {
        vstar,
        picard_tol: 1e-12,
        ..Default::default()
    };
    let s = solve_burgers_mode(&mode, gamma, &h, &grid, nb, &opts).unwrap();

    let beta = cutoff_beta(t_final, vstar);
    let beta_integral = |x: f64| {
        let n = 2000;
        let dx = x / n as f64;
        (0..n).map(|i| beta((i as f64 + 0.5) * dx)).sum::<f64>() * dx
    };
    let samples = 64;
    let (mut err, mut norm) = (0.0, 0.0);
    for i in (0..nx).step_by(2) {
        let x = grid.x(i);
        let bx = beta_integral(x);
        for j in (0..nt).step_by(2) {
            for k in (0..ny).step_by(2) {
                let ts = grid.t(j) + tr.a * x;
                let amp = if ts > 0.0 { hb(ts, grid.y(k) - tr.c * x) } else { 0.0 };
                let mut coef = vec![C::new(0.0, 0.0); nb];
                for m in 0..samples {
                    let theta = 2.0 * PI * m as f64 / samples as f64;
                    let mut sv = 0.0;
                    for _ in 0..50 {
                        let ph = theta - gamma * sv * bx;
                        let step = (sv - 2.0 * amp * ph.cos()) / (1.0 - 2.0 * amp * ph.sin() * gamma * bx);
                        sv -= step;
                        if step.abs() < 1e-15 {
                            break;
                        }
                    }
                    for (l, c) in coef.iter_mut().enumerate() {
                        *c += sv * C::from_polar(1.0, -((l + 1) as f64) * theta) / samples as f64;
                    }
                }
                for (l, c) in coef.iter().enumerate() {
                    err += (s.get(0, l, j, k, i) - c).norm_sqr();
                    norm += c.norm_sqr();
                }
            }
        }
    }
    (err / norm).sqrt()
}

fn c8_burgers() -> Outcome {
    let start = Instant::now();
    let coarse = burgers_error(128, 64, 64);
    let fine = burgers_error(256, 128, 128);
    let secs = start.elapsed().as_secs_f64();
    outcome(
        fine <= 1e-3 && fine <= coarse / 2.0 && secs <= 120.0,
        format!("rel L2 error {fine:.2e} at 256x128x128 (tol 1e-3), {coarse:.2e} at 128x64x64, {secs:.1} s"),
    )
}

fn two_direction_forcing(scale: f64) -> BoundaryForcing {
    BoundaryForcing {
        terms: [(vec![1, 0], 0), (vec![0, 1], 1)]
            .into_iter()
            .map(|(n, row)| ForcingTerm {
                n,
                amplitude: (0..2)
                    .map(|r| C::new(if r == row { scale } else { 0.0 }, 0.0))
                    .collect(),
                profile: common::time_bump(),
            })
            .collect(),
    }
}

fn resonant_run(grid: SlowGrid, scale: f64) -> LeadingProfile {
    let (e, lat) = common::euler_lattice();
    let (en, part) = common::resonances(&lat, 3, 3);
    let mut opts = ProfileRunOptions::new(grid, 3, 2.0);
    opts.picard.tol = 1e-12;
    solve_leading_profile(
        &lat,
        e.system.boundary(),
        &two_direction_forcing(scale),
        &en.resonances,
        &part,
        &opts,
    )
    .unwrap()
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>().join("/")
}

fn c9_resonant() -> Outcome {
    // the vorticity family does not move in y, so y stays coarse
    let grids = [(40, 4, 40), (80, 4, 80), (160, 4, 160)];
    let (mut constants, mut free) = (Vec::new(), Vec::new());
    let mut leakage: f64 = 0.0;
    let mut structure = true;
    let mut converged = true;
    let mut modes = 0;
    for (nt, ny, nx) in grids {
        let grid = SlowGrid::new(1.0, 2.0, 4.0, nt, ny, nx).unwrap();
        let run = resonant_run(grid, 0.05);
        let sol = run.resonant.as_ref().unwrap();
        modes = sol.field.modes.len();
        structure &= sol.field.real && sol.field.harmonics.iter().all(|l| *l > 0);
        converged &= sol.trace.halvings == 0 && sol.trace.updates.last().is_some_and(|u| *u <= 1e-12);
        leakage = leakage.max(finite_speed_check(&sol.field, 2.0, 1e-8).leakage);
        free.push(energy_diagnostic(&sol.field, Some(&sol.field), None).unwrap().constant);
        // zero boundary data, interior source F = V
        let couplings = run.couplings.as_ref().unwrap();
        let zero = vec![C::new(0.0, 0.0); couplings.modes.len() * couplings.bound * grid.plane()];
        let opts = SolverOptions::default();
        let (u, _) =
            solve_linearized_resonant(couplings, Some(&sol.field), Some(&sol.field), &zero, &grid, &opts).unwrap();
        constants.push(
            energy_diagnostic(&u, Some(&sol.field), Some(&sol.field))
                .unwrap()
                .constant,
        );
    }
    let stable = constants.iter().all(|c| *c > 0.0) && refinement_stable(&constants, 0.2, 0.0);

    let grid = SlowGrid::new(1.0, 2.0, 4.0, 48, 4, 48).unwrap();
    let defect = |eps: f64| {
        let run = resonant_run(grid, eps);
        let couplings = run.couplings.as_ref().unwrap();
        let boundary = run
            .traces
            .boundary_slab(&couplings.modes, couplings.bound, &grid)
            .unwrap();
        let (linear, _) =
            solve_linearized_resonant(couplings, None, None, &boundary, &grid, &SolverOptions::default()).unwrap();
        let full = &run.resonant.as_ref().unwrap().field;
        (full.l2_distance(&linear).unwrap(), linear.l2_norm())
    };
    let (d1, n1) = defect(0.02);
    let (d2, n2) = defect(0.01);
    let order = (d1 / d2).log2();
    let linear = (n1 / n2 - 2.0).abs() <= 1e-9;
    outcome(
        structure && converged && leakage <= 1e-8 && stable && linear && (order - 2.0).abs() <= 0.2,
        format!(
            "{modes} coupled modes, leakage {leakage:.2e} (tol 1e-8), energy constant {} forced / {} unforced, quadratic defect order {order:.3}",
            fmt_list(&constants),
            fmt_list(&free)
        ),
    )
}

fn c10_evanescent() -> Outcome {
    let (e, lat) = common::euler_lattice();
    let b = e.system.boundary();
    let single = common::forcing(&[-8, 7], &[0.05, -0.02]);
    let traces = boundary_traces(&lat, b, &single).unwrap();
    let psi: Vec<f64> = (0..=32).map(|i| i as f64 / 8.0).collect();
    let ev = assemble_evanescent(&traces, 4.0, &psi).unwrap();
    let comp = &ev.components[0];
    let z = e.params.zeta_pq(-8, 7);
    let mu = closed_form_xi(&e.params, z[0], z[1]).unwrap().xi[0].im.abs();
    let rate_err = psi
        .iter()
        .zip(&comp.values)
        .skip(1)
        .map(|(p, v)| (-(v.norm() / comp.values[0].norm()).ln() / p - mu).abs())
        .fold(0.0, f64::max);
    let n0 = &comp.n0;
    let dec = decompose_stable(&e.lin, &e.params.zeta_pq(n0[0], n0[1])).unwrap();
    let direct = dec.pi_elliptic_stable() * boundary_solve(&dec, b, &traces.components[0].g).unwrap();
    let trace_err = (&comp.values[0] - direct).norm();

    let (_, part) = common::resonances(&lat, 3, 3);
    let mixed = BoundaryForcing {
        terms: [vec![1, 0], vec![0, 1], vec![-8, 7], vec![2, -3]]
            .into_iter()
            .map(|n| ForcingTerm {
                n,
                amplitude: vec![C::new(0.05, 0.01), C::new(-0.02, 0.03)],
                profile: common::time_bump(),
            })
            .collect(),
    };
    let traces = boundary_traces(&lat, b, &mixed).unwrap();
    let constants: Vec<f64> = [(24, 8, 24), (48, 16, 48), (96, 32, 96)]
        .into_iter()
        .map(|(nt, ny, nx)| {
            let g = SlowGrid::new(1.0, 2.0, 4.0, nt, ny, nx).unwrap();
            trace_split(&traces, &mixed, &part, &g, 2).constant
        })
        .collect();
    let spread = constants
        .iter()
        .fold(0.0f64, |a, c| a.max((c - constants[2]).abs() / constants[2]));
    outcome(
        rate_err <= 1e-6 && trace_err <= 1e-10 && spread <= 1e-6,
        format!(
            "decay rate error {rate_err:.2e} (tol 1e-6), double trace {trace_err:.2e} (tol 1e-10), split constant {:.4} spread {spread:.2e}",
            constants[2]
        ),
    )
}

fn fingerprint() -> Vec<u8> {
    let (_, lat) = common::euler_lattice();
    let (en, part) = common::resonances(&lat, 3, 3);
    let mut out = serde_json::to_vec(&en).unwrap();
    out.extend(serde_json::to_vec(&part).unwrap());
    let run = resonant_run(SlowGrid::new(1.0, 2.0, 4.0, 24, 8, 24).unwrap(), 0.05);
    for f in run.fields() {
        for z in f.data() {
            out.extend(z.re.to_le_bytes());
            out.extend(z.im.to_le_bytes());
        }
    }
    out
}

fn c11_determinism() -> Outcome {
    let (a, b) = (fingerprint(), fingerprint());
    outcome(a == b, format!("{} bytes compared", a.len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("Euler eigenvalue closed forms", c1_eigenvalues),
        ("projector identities", c2_projectors),
        ("Lax identities", c3_lax),
        ("Kreiss-Lopatinskii and dissipativity", c4_lopatinskii),
        ("resonance enumeration", c5_resonances),
        ("interaction coefficient oracle", c6_gamma),
        ("small divisors", c7_small_divisors),
        ("Burgers profile vs characteristics", c8_burgers),
        ("resonant system", c9_resonant),
        ("evanescent part", c10_evanescent),
        ("determinism", c11_determinism),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        let tag = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {tag}  {name}: {} [{:.1} s]",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria pass", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
