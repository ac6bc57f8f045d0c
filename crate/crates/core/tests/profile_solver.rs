mod common;

use std::f64::consts::PI;
use std::sync::Arc;

use multiphase_wkb::boundary_spectral::boundary_solve;
use multiphase_wkb::euler2d::closed_form_xi;
use multiphase_wkb::lattice_resonance::{Lattice, ModeKey};
use multiphase_wkb::profile_solver::burgers::self_interaction_term;
use multiphase_wkb::profile_solver::{
    assemble_leading_profile, boundary_residual, boundary_traces, build_couplings, bump, cutoff_beta,
    energy_diagnostic, finite_speed_check, incoming_inner_product, profile_diagnostics, solve_burgers_mode,
    solve_leading_profile, solve_linearized_resonant, trace_split, Couplings, Derivative, ProfileField,
    ProfileRunOptions, SlowGrid, SolverOptions, Transport,
};
use multiphase_wkb::Error;
use num_complex::Complex64 as C;
use rand::Rng;

const VSTAR: f64 = 2.0;

fn grid(nt: usize, ny: usize, nx: usize) -> SlowGrid {
    SlowGrid::new(1.0, 2.0, 2.0 * VSTAR, nt, ny, nx).unwrap()
}

fn opts() -> SolverOptions {
    SolverOptions {
        vstar: VSTAR,
        picard_tol: 1e-12,
        ..Default::default()
    }
}

fn boundary_profile(t: f64, y: f64) -> f64 {
    0.01 * bump(t, 0.5, 0.45) * (1.0 + 0.5 * (PI * y).cos())
}

/// First harmonic carries `boundary_profile`, the others vanish.
fn first_harmonic(g: &SlowGrid, nb: usize) -> Vec<C> {
    let mut h = vec![C::new(0.0, 0.0); nb * g.plane()];
    for j in 0..g.nt {
        for k in 0..g.ny {
            h[j * g.ny + k] = C::new(boundary_profile(g.t(j), g.y(k)), 0.0);
        }
    }
    h
}

fn alpha3() -> (Lattice, Arc<ModeKey>) {
    let (_, lat) = common::euler_lattice();
    let m = common::vorticity_mode(&lat, &[1, 0]);
    (lat, m)
}

#[test]
fn cutoff_and_bump_shapes() {
    let beta = cutoff_beta(1.0, VSTAR);
    assert_eq!(beta(0.0), 1.0);
    assert_eq!(beta(VSTAR), 1.0);
    assert_eq!(beta(2.0 * VSTAR), 0.0);
    assert_eq!(beta(10.0), 0.0);
    let mut prev = 1.0;
    for i in 0..=400 {
        let b = beta(VSTAR * (1.0 + i as f64 / 400.0));
        assert!((0.0..=1.0).contains(&b));
        assert!(b <= prev);
        prev = b;
    }
    assert_eq!(bump(0.5, 0.5, 0.2), 1.0);
    assert_eq!(bump(0.3, 0.5, 0.2), 0.0);
    assert_eq!(bump(0.71, 0.5, 0.2), 0.0);
    assert!((bump(0.45, 0.5, 0.2) - bump(0.55, 0.5, 0.2)).abs() <= 1e-15);
}

#[test]
fn grid_validation() {
    assert!(SlowGrid::new(1.0, 2.0, 4.0, 2, 4, 8).is_err());
    assert!(SlowGrid::new(1.0, 2.0, 4.0, 8, 0, 8).is_err());
    assert!(SlowGrid::new(-1.0, 2.0, 4.0, 8, 4, 8).is_err());
    let g = grid(17, 8, 9);
    assert!((g.dt - 1.0 / 16.0).abs() <= 1e-15);
    assert!((g.dy - 0.25).abs() <= 1e-15);
    assert!((g.dx - 0.5).abs() <= 1e-15);
    let r = g.refined().unwrap();
    assert!((r.dt - g.dt / 2.0).abs() <= 1e-15);
    assert!((r.dy - g.dy / 2.0).abs() <= 1e-15);
    assert!((r.dx - g.dx / 2.0).abs() <= 1e-15);
    let h = g.halved_time().unwrap();
    assert!((h.t_final - 0.5).abs() <= 1e-15);
    assert!(matches!(
        SlowGrid::new(1.0, 2.0, 3.0, 8, 4, 8).unwrap().check_extent(VSTAR),
        Err(Error::GridMismatch(_))
    ));
    assert!(g.check_extent(VSTAR).is_ok());
}

#[test]
fn forced_substeps_violating_the_bound_are_rejected() {
    let (_, m) = alpha3();
    let g = grid(129, 4, 5);
    let h = first_harmonic(&g, 2);
    let forced = SolverOptions {
        substeps: Some(1),
        ..opts()
    };
    assert!(matches!(
        solve_burgers_mode(&m, 0.0, &h, &g, 2, &forced),
        Err(Error::CflViolation(_))
    ));
    let speed = m.dxitau.abs();
    let n = g.substeps(speed, 1.0);
    assert!(g.check_substeps(n, speed, 1.0).is_ok());
    assert!(g.check_substeps(n - 1, speed, 1.0).is_err());
    assert!(solve_burgers_mode(&m, 0.0, &h, &g, 2, &opts()).is_ok());
}

#[test]
fn outgoing_modes_have_no_burgers_profile() {
    let (lat, _) = alpha3();
    let (dir, _) = lat.direction(&[1, 0]).unwrap();
    let lifted = multiphase_wkb::lattice_resonance::lift_direction(&lat, &dir).unwrap();
    let out = lifted.modes.iter().find(|m| m.dxitau > 0.0).unwrap();
    let g = grid(9, 4, 5);
    let h = first_harmonic(&g, 2);
    assert!(matches!(
        solve_burgers_mode(out, 1.0, &h, &g, 2, &opts()),
        Err(Error::ParameterOutOfRange(_))
    ));
}

#[test]
fn zero_boundary_data_gives_zero_profiles() {
    let (_, m) = alpha3();
    let g = grid(17, 4, 9);
    let zero = vec![C::new(0.0, 0.0); 4 * g.plane()];
    assert_eq!(
        solve_burgers_mode(&m, 1.0, &zero, &g, 4, &opts()).unwrap().max_abs(),
        0.0
    );

    let (e, lat) = common::euler_lattice();
    let (en, part) = common::resonances(&lat, 2, 2);
    let f = common::forcing(&[1, 0], &[0.0, 0.0]);
    let run = solve_leading_profile(
        &lat,
        e.system.boundary(),
        &f,
        &en.resonances,
        &part,
        &ProfileRunOptions::new(g, 2, VSTAR),
    )
    .unwrap();
    assert!(run.fields().iter().all(|f| f.max_abs() == 0.0));
    assert!(run.evanescent.components.iter().all(|c| c.trace.norm() == 0.0));
}

/// `σ(t, y, x) = h(t + a x, y − c x)` solves the linear transport problem.
fn transport_error(nt: usize, ny: usize, nx: usize) -> f64 {
    let (_, m) = alpha3();
    let tr = Transport::of(&m);
    let g = grid(nt, ny, nx);
    let nb = 2;
    let s = solve_burgers_mode(&m, 0.0, &first_harmonic(&g, nb), &g, nb, &opts()).unwrap();
    let (mut err, mut norm) = (0.0, 0.0);
    for i in 0..g.nx {
        let x = g.x(i);
        for j in 0..g.nt {
            for k in 0..g.ny {
                let exact = boundary_profile(g.t(j) + tr.a * x, g.y(k) - tr.c * x);
                err += (s.get(0, 0, j, k, i) - exact).norm_sqr() + s.get(0, 1, j, k, i).norm_sqr();
                norm += exact * exact;
            }
        }
    }
    (err / norm).sqrt()
}

#[test]
fn linear_transport_matches_the_shifted_boundary_data() {
    let coarse = transport_error(129, 32, 65);
    let fine = transport_error(257, 64, 129);
    assert!(fine <= 1e-3, "{fine:e}");
    assert!(fine <= coarse / 4.0, "{coarse:e} -> {fine:e}");
}

#[test]
fn resonant_solver_without_coupling_is_linear_transport() {
    let (_, m) = alpha3();
    let g = grid(33, 8, 17);
    let nb = 3;
    let h = first_harmonic(&g, nb);
    let c = Couplings {
        modes: vec![m.clone()],
        bound: nb,
        terms: Vec::new(),
        gamma_self: vec![0.0],
    };
    let (r, _) = solve_linearized_resonant(&c, None, None, &h, &g, &opts()).unwrap();
    let b = solve_burgers_mode(&m, 0.0, &h, &g, nb, &opts()).unwrap();
    assert!(r.l2_distance(&b).unwrap() <= 1e-14 * b.l2_norm());
}

#[test]
fn skew_difference_couplings_converge_quadratically() {
    let (lat, _) = alpha3();
    let (en, part) = common::resonances(&lat, 2, 2);
    let lifted = multiphase_wkb::lattice_resonance::lift_box(&lat, 2).unwrap();
    let modes: Vec<_> = lifted
        .iter()
        .flat_map(|l| l.modes.iter().cloned())
        .filter(|m| part.incoming_resonant.contains(&m.id))
        .collect();
    let exact = build_couplings(&lat, &modes, &en.resonances, 2, Derivative::Spectral).unwrap();
    let gap = |h: f64| {
        let fd = build_couplings(&lat, &modes, &en.resonances, 2, Derivative::SkewFd(h)).unwrap();
        assert_eq!(fd.terms.len(), exact.terms.len());
        fd.terms
            .iter()
            .zip(&exact.terms)
            .map(|(a, b)| (a.coef - b.coef).norm())
            .fold(0.0, f64::max)
    };
    let (a, b) = (gap(1e-2), gap(5e-3));
    assert!(a > 0.0);
    assert!((a / b - 4.0).abs() <= 0.05, "{a:e} {b:e}");
}

#[test]
fn self_interaction_has_zero_mean_and_conserves_energy() {
    let mut rng = common::rng(30);
    for nb in [1usize, 4, 16] {
        let sigma: Vec<C> = (0..nb)
            .map(|_| C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let gamma = rng.gen_range(-2.0..2.0);
        let term = self_interaction_term(gamma, &sigma, &sigma);
        assert_eq!(term.len(), nb + 1);
        assert!(term[0].norm() <= 1e-12);
        let work: f64 = term[1..].iter().zip(&sigma).map(|(t, s)| (t * s.conj()).re).sum();
        assert!(work.abs() <= 1e-10, "{work:e}");
    }
}

#[test]
fn real_fields_store_conjugate_harmonics() {
    let (_, m) = alpha3();
    let g = grid(5, 2, 3);
    let mut f = ProfileField::real_zeros(vec![m.clone()], 3, g);
    f.set(0, 1, 2, 1, 0, C::new(0.3, -0.4));
    assert_eq!(f.harmonic(0, 2, 2, 1, 0), C::new(0.3, -0.4));
    assert_eq!(f.harmonic(0, -2, 2, 1, 0), C::new(0.3, 0.4));
    assert_eq!(f.harmonic(0, 0, 2, 1, 0), C::new(0.0, 0.0));
    assert!(ProfileField::zeros(vec![m.clone()], vec![0, 1], false, g).is_err());
    assert!(ProfileField::zeros(vec![m], vec![-1, 1], true, g).is_err());
}

#[test]
fn inner_product_identities() {
    let (lat, m) = alpha3();
    let m2 = common::vorticity_mode(&lat, &[0, 1]);
    let g = grid(9, 4, 3);
    let mut rng = common::rng(31);
    let mut random = || {
        let mut f = ProfileField::real_zeros(vec![m.clone(), m2.clone()], 3, g);
        for z in f.data_mut() {
            *z = C::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        f
    };
    let (u, v) = (random(), random());
    for i in 0..g.nx {
        let uu = incoming_inner_product(&u, &u, i).unwrap();
        let direct: f64 = u.slab(i).iter().map(|z| z.norm_sqr()).sum::<f64>() * 2.0 * (2.0 * PI).powi(2) * g.dt * g.dy;
        assert!((uu - direct).abs() <= 1e-12 * direct);
        let uv = incoming_inner_product(&u, &v, i).unwrap();
        let vu = incoming_inner_product(&v, &u, i).unwrap();
        let vv = incoming_inner_product(&v, &v, i).unwrap();
        assert!((uv - vu).abs() <= 1e-12 * uu.max(vv));
        assert!(uv.abs() <= (uu * vv).sqrt());
    }
    assert!(incoming_inner_product(&u, &v, g.nx).is_err());
}

#[test]
fn finite_speed_and_energy_of_a_burgers_profile() {
    let (_, m) = alpha3();
    let g = grid(65, 8, 33);
    let s = solve_burgers_mode(&m, 1.0, &first_harmonic(&g, 8), &g, 8, &opts()).unwrap();
    assert!(s.max_abs() > 0.0);
    let fs = finite_speed_check(&s, VSTAR, 1e-8);
    assert!(fs.pass, "{fs:?}");
    let shifted = s.shifted_in_x(8);
    assert!(!finite_speed_check(&shifted, VSTAR, 1e-8).pass);

    let rep = energy_diagnostic(&s, Some(&s), None).unwrap();
    assert!(rep.pass);
    assert!(rep.constant.is_finite());
    assert_eq!(rep.energy.len(), g.nx);
    let zero = ProfileField::real_zeros(vec![m], 8, g);
    assert_eq!(energy_diagnostic(&zero, None, None).unwrap().constant, 0.0);
    let other = ProfileField::real_zeros(s.modes.clone(), 8, grid(9, 8, 33));
    assert!(matches!(
        energy_diagnostic(&s, Some(&other), None),
        Err(Error::GridMismatch(_))
    ));
}

#[test]
fn burgers_profile_converges_under_refinement() {
    let (_, m) = alpha3();
    let nb = 8;
    let solve = |g: SlowGrid| solve_burgers_mode(&m, 1.0, &first_harmonic(&g, nb), &g, nb, &opts()).unwrap();
    let (a, b, c) = (
        solve(grid(33, 8, 17)),
        solve(grid(65, 16, 33)),
        solve(grid(129, 32, 65)),
    );
    let restrict = |fine: &ProfileField, coarse: &ProfileField| {
        let g = coarse.grid;
        let (mut d, mut n) = (0.0, 0.0);
        for i in 0..g.nx {
            for j in 0..g.nt {
                for k in 0..g.ny {
                    for l in 0..nb {
                        let c = coarse.get(0, l, j, k, i);
                        d += (fine.get(0, l, 2 * j, 2 * k, 2 * i) - c).norm_sqr();
                        n += c.norm_sqr();
                    }
                }
            }
        }
        (d / n).sqrt()
    };
    let (d1, d2) = (restrict(&b, &a), restrict(&c, &b));
    assert!(d2 < d1 / 2.0, "{d1:e} {d2:e}");
}

#[test]
fn traces_reassemble_the_boundary_data() {
    let (e, lat) = common::euler_lattice();
    let b = e.system.boundary();
    let f = multiphase_wkb::profile_solver::BoundaryForcing {
        terms: [vec![1, 0], vec![0, 1], vec![-8, 7], vec![2, -3]]
            .into_iter()
            .map(|n| multiphase_wkb::profile_solver::ForcingTerm {
                n,
                amplitude: vec![C::new(0.05, 0.01), C::new(-0.02, 0.03)],
                profile: common::time_bump(),
            })
            .collect(),
    };
    let traces = boundary_traces(&lat, b, &f).unwrap();
    assert!(traces.max_reassembly() <= 1e-9);
    let bc = b.map(|x| C::new(x, 0.0));
    for c in &traces.components {
        assert!((&bc * &c.w - &c.g).norm() <= 1e-10);
        let w = boundary_solve(&c.decomposition, b, &c.g).unwrap();
        assert!((&c.w - w).norm() <= 1e-10);
    }
    let (_, part) = common::resonances(&lat, 3, 2);
    let g = grid(33, 8, 17);
    let split = trace_split(&traces, &f, &part, &g, 2);
    assert!(split.resonant + split.nonresonant + split.evanescent <= split.constant * split.forcing * (1.0 + 1e-12));
    assert!(split.constant.is_finite() && split.constant > 0.0);
    let finer = trace_split(&traces, &f, &part, &g.refined().unwrap(), 2);
    assert!((finer.constant - split.constant).abs() <= 1e-6 * split.constant);
}

#[test]
fn evanescent_profile_decays_at_the_elliptic_rate() {
    let (e, lat) = common::euler_lattice();
    let f = common::forcing(&[-8, 7], &[0.05, -0.02]);
    let traces = boundary_traces(&lat, e.system.boundary(), &f).unwrap();
    let psi: Vec<f64> = (0..=16).map(|i| i as f64 / 8.0).collect();
    let ev = multiphase_wkb::profile_solver::assemble_evanescent(&traces, 4.0, &psi).unwrap();
    let c = &ev.components[0];
    let dec = &c.decomposition;
    let double = dec.pi_elliptic_stable() * boundary_solve(dec, e.system.boundary(), &traces.components[0].g).unwrap();
    assert!((&c.values[0] - &double).norm() <= 1e-10);
    let z = e.params.zeta_pq(-8, 7);
    let mu = closed_form_xi(&e.params, z[0], z[1]).unwrap().xi[0].im.abs();
    for (p, v) in psi.iter().zip(&c.values).skip(1) {
        let rate = -(v.norm() / c.values[0].norm()).ln() / p;
        assert!((rate - mu).abs() <= 1e-6, "{rate} vs {mu}");
    }
    let fits = ev.decay_fits();
    assert!(fits.iter().all(|f| f.pass));
    let at = ev.evaluate(0, 0.5, 0.3, 0.0, 0.0).unwrap();
    assert!((at - &c.values[0]).norm() <= 1e-12);
    assert_eq!(ev.evaluate(0, 0.5, 0.3, 4.0, 0.0).unwrap().norm(), 0.0);
}

#[test]
fn euler_pipeline_passes_its_diagnostics() {
    let (e, lat) = common::euler_lattice();
    let (en, part) = common::resonances(&lat, 2, 2);
    let f = common::forcing(&[1, 0], &[0.05, 0.0]);
    let opts = ProfileRunOptions::new(grid(33, 8, 33), 2, VSTAR);
    let run = solve_leading_profile(&lat, e.system.boundary(), &f, &en.resonances, &part, &opts).unwrap();
    assert!(run.resonant.is_some());
    let diag = profile_diagnostics(&run, &f, &part, &opts, 2).unwrap();
    for c in &diag.checks {
        assert!(c.pass, "{c:?}");
    }
    let fields = run.fields();
    let sampled = assemble_leading_profile(&fields, Some(&run.evanescent), &opts.grid, 3, 0.5).unwrap();
    assert!(sampled.max_imag <= 1e-12);
    let res = boundary_residual(&sampled, e.system.boundary(), &f, e.system.zetas()).unwrap();
    assert!(res.is_finite());
    assert!(matches!(
        assemble_leading_profile(&fields, Some(&run.evanescent), &opts.grid, 3, 1e-4),
        Err(Error::EpsilonTooSmallForGrid { .. })
    ));
}
