mod common;

use std::collections::BTreeSet;
use std::sync::OnceLock;

use multiphase_wkb::boundary_spectral::{boundary_solve, boundary_symbol, decompose_stable, incoming_count, RootClass};
use multiphase_wkb::char_variety::{eigen_structure, frequency_operators};
use multiphase_wkb::euler2d::{closed_form_xi, EulerParams};
use multiphase_wkb::lattice_resonance::{relation_class, Lattice, ResonanceEnumeration};
use multiphase_wkb::profile_solver::burgers::self_interaction_term;
use multiphase_wkb::profile_solver::{ProfileField, SlowGrid};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C;
use proptest::prelude::*;

fn euler() -> &'static common::Euler {
    static E: OnceLock<common::Euler> = OnceLock::new();
    E.get_or_init(common::euler)
}

fn enumeration() -> &'static (Lattice, ResonanceEnumeration) {
    static R: OnceLock<(Lattice, ResonanceEnumeration)> = OnceLock::new();
    R.get_or_init(|| {
        let (_, lat) = common::euler_lattice();
        let (en, _) = common::resonances(&lat, 3, 3);
        (lat, en)
    })
}

fn angle() -> impl Strategy<Value = (f64, f64)> {
    (0.0..std::f64::consts::TAU).prop_map(|a| (a.cos(), a.sin()))
}

fn lattice_point() -> impl Strategy<Value = (i64, i64)> {
    (-12i64..=12, -12i64..=12).prop_filter("nonzero", |p| *p != (0, 0))
}

fn vec3() -> impl Strategy<Value = DVector<f64>> {
    prop::collection::vec(-1.0..1.0f64, 3).prop_map(DVector::from_vec)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn projectors_are_invariant_under_scaling((eta, xi) in angle(), k in 0usize..3, lambda in prop_oneof![-10.0..-0.1f64, 0.1..10.0f64]) {
        let e = euler();
        let es = eigen_structure(&e.lin, &[eta], xi).unwrap();
        let alpha = [es.taus[k], eta, xi];
        let scaled: Vec<f64> = alpha.iter().map(|a| lambda * a).collect();
        let a = frequency_operators(&e.lin, &alpha).unwrap();
        let b = frequency_operators(&e.lin, &scaled).unwrap();
        prop_assert!((&a.pi - &b.pi).norm() <= 1e-10);
        prop_assert!((&a.pi_tilde - &b.pi_tilde).norm() <= 1e-10);
        let l = e.lin.l0(&alpha);
        prop_assert!((&a.q * &l + &a.pi - DMatrix::identity(3, 3)).norm() <= 1e-10);
        prop_assert!((&l * &a.pi).norm() <= 1e-10);
    }

    #[test]
    fn spectral_decomposition_reconstructs_the_symbol((eta, xi) in angle(), r in 0.1..20.0f64) {
        let e = euler();
        let es = eigen_structure(&e.lin, &[r * eta], r * xi).unwrap();
        let a = e.lin.symbol(&[r * eta], r * xi);
        let sum = es.taus.iter().zip(&es.pis).fold(a.clone(), |acc, (t, p)| acc + p * *t);
        prop_assert!(sum.norm() <= 1e-9 * a.norm());
        let again = eigen_structure(&e.lin, &[r * eta], r * xi).unwrap();
        prop_assert_eq!(&es.rights, &again.rights);
        prop_assert_eq!(&es.lefts, &again.lefts);
    }

    #[test]
    fn l1_tilde_is_additive(v in vec3(), w in vec3(), z1 in (-2.0..2.0f64, -2.0..2.0f64), z2 in (-2.0..2.0f64, -2.0..2.0f64)) {
        let e = euler();
        let l = |v: &DVector<f64>, z: [f64; 2]| e.lin.apply_l1_tilde(v, &z).unwrap();
        let base = l(&v, [z1.0, z1.1]).norm().max(1.0);
        let dv = l(&(&v + &w), [z1.0, z1.1]) - l(&v, [z1.0, z1.1]) - l(&w, [z1.0, z1.1]);
        let dz = l(&v, [z1.0 + z2.0, z1.1 + z2.1]) - l(&v, [z1.0, z1.1]) - l(&v, [z2.0, z2.1]);
        prop_assert!(dv.norm() <= 1e-12 * base);
        prop_assert!(dz.norm() <= 1e-12 * base);
    }

    #[test]
    fn damped_symbol_has_p_stable_eigenvalues((tau, eta) in angle(), gamma in 1e-3..5.0f64) {
        let e = euler();
        let s = boundary_symbol(&e.lin, C::new(tau, -gamma), &[eta]).unwrap();
        let stable = s.a.clone().eigenvalues().unwrap().iter().filter(|z| z.re < 0.0).count();
        prop_assert_eq!(stable, incoming_count(&e.lin));
    }

    #[test]
    fn stable_projectors_are_orthogonal_idempotents((p, q) in lattice_point()) {
        let e = euler();
        let dec = decompose_stable(&e.lin, &e.params.zeta_pq(p, q)).unwrap();
        let mut projs: Vec<_> = dec.incoming().into_iter().map(|j| dec.pi_incoming(j)).collect();
        if !dec.indices(RootClass::EllipticStable).is_empty() {
            projs.push(dec.pi_elliptic_stable());
        }
        prop_assert_eq!(projs.len(), dec.p());
        for (a, pa) in projs.iter().enumerate() {
            for (b, pb) in projs.iter().enumerate() {
                let prod = pa * pb;
                let want = if a == b { pa.clone() } else { pa * C::new(0.0, 0.0) };
                prop_assert!((prod - want).norm() <= 1e-9 * pa.norm().max(1.0));
            }
        }
    }

    #[test]
    fn boundary_solve_inverts_b_on_the_stable_subspace((p, q) in lattice_point(), c in prop::collection::vec(-1.0..1.0f64, 4)) {
        let e = euler();
        let b = e.params.boundary_matrix();
        let dec = decompose_stable(&e.lin, &e.params.zeta_pq(p, q)).unwrap();
        let basis = dec.e_minus_basis();
        let coef = nalgebra::DVector::from_vec(vec![C::new(c[0], c[1]), C::new(c[2], c[3])]);
        let w = basis * coef;
        let g = b.map(|x| C::new(x, 0.0)) * &w;
        let back = boundary_solve(&dec, &b, &g).unwrap();
        prop_assert!((back - &w).norm() <= 1e-10 * w.norm().max(1.0));
    }

    #[test]
    fn roots_scale_with_the_frequency((p, q) in lattice_point(), lambda in 0.1..10.0f64) {
        let e = euler();
        let z = e.params.zeta_pq(p, q);
        let a = decompose_stable(&e.lin, &z).unwrap();
        let b = decompose_stable(&e.lin, &[lambda * z[0], lambda * z[1]]).unwrap();
        for r in &a.roots {
            let target = r.xi * lambda;
            let m = b.roots.iter().min_by(|x, y| (x.xi - target).norm().total_cmp(&(y.xi - target).norm())).unwrap();
            prop_assert!((m.xi - target).norm() <= 1e-9 * target.norm().max(1.0));
            prop_assert_eq!(m.class, r.class);
        }
    }

    #[test]
    fn vorticity_root_is_additive(a in lattice_point(), b in lattice_point()) {
        let p = EulerParams::default();
        prop_assume!((a.0 + b.0, a.1 + b.1) != (0, 0));
        let xi = |n: (i64, i64)| {
            let z = p.zeta_pq(n.0, n.1);
            closed_form_xi(&p, z[0], z[1]).unwrap().xi[2].re
        };
        let sum = xi((a.0 + b.0, a.1 + b.1));
        prop_assert!((sum - xi(a) - xi(b)).abs() <= 1e-14 * (1.0 + sum.abs()));
    }

    #[test]
    fn self_interaction_cancellations(sigma in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..24), gamma in -3.0..3.0f64) {
        let sigma: Vec<C> = sigma.into_iter().map(|(a, b)| C::new(a, b)).collect();
        let term = self_interaction_term(gamma, &sigma, &sigma);
        prop_assert!(term[0].norm() <= 1e-12);
        let work: f64 = term[1..].iter().zip(&sigma).map(|(t, s)| (t * s.conj()).re).sum();
        prop_assert!(work.abs() <= 1e-10);
    }

    #[test]
    fn real_fields_are_conjugate_symmetric(vals in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 3 * 4 * 2 * 3)) {
        let (_, lat) = common::euler_lattice();
        let m = common::vorticity_mode(&lat, &[1, 0]);
        let g = SlowGrid::new(1.0, 1.0, 4.0, 4, 2, 3).unwrap();
        let mut f = ProfileField::real_zeros(vec![m], 3, g);
        for (z, (a, b)) in f.data_mut().iter_mut().zip(vals) {
            *z = C::new(a, b);
        }
        for l in 1..=3i64 {
            for (j, k, i) in [(0, 0, 0), (3, 1, 2), (1, 0, 1)] {
                prop_assert_eq!(f.harmonic(0, -l, j, k, i), f.harmonic(0, l, j, k, i).conj());
            }
        }
    }
}

#[test]
fn resonance_list_is_closed_under_the_type_symmetry() {
    let (_, en) = enumeration();
    let classes: BTreeSet<_> = en.non_self().map(relation_class).collect();
    let targets: BTreeSet<_> = en.non_self().map(|r| (relation_class(r), r.r.id.clone())).collect();
    for r in en.non_self() {
        let class = relation_class(r);
        assert!(classes.contains(&class));
        // p α_p = r α_r − q α_q: the same relation read with target p (and q)
        for id in [&r.p.id, &r.q.id] {
            assert!(targets.contains(&(class.clone(), id.clone())), "{:?}", r.key());
        }
    }
}

#[test]
fn resonance_residuals_respect_the_tolerance() {
    let (_, en) = enumeration();
    assert!(en.resonances.iter().all(|r| r.residual <= en.res_tol));
    assert!(en.near_misses.iter().all(|r| r.residual > en.res_tol));
}
