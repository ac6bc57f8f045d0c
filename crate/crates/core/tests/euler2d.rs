mod common;

use approx::assert_abs_diff_eq;
use multiphase_wkb::char_variety::{classify_frequency, FrequencyTag};
use multiphase_wkb::euler2d::{
    build_euler, closed_form_xi, euler_gamma, euler_gamma_frequencies, euler_glancing_distance, glancing_ratios,
    region_classify, EulerParams, EulerRegion,
};
use multiphase_wkb::lattice_resonance::GlancingSet;
use multiphase_wkb::Error;

#[test]
fn glancing_ratios_at_default_parameters() {
    let p = EulerParams::default();
    let d = 2f64.powf(1.0 / 7.0);
    let (km, kp) = glancing_ratios(&p);
    assert_abs_diff_eq!(km, (0.5 - d) / 0.5, epsilon = 1e-14);
    assert_abs_diff_eq!(kp, (-0.5 - d) / 1.5, epsilon = 1e-14);
    assert!(km < kp);
}

#[test]
fn region_of_simple_lattice_points() {
    let p = EulerParams::default();
    assert_eq!(
        region_classify(&p, 1, 1).unwrap(),
        EulerRegion::Hyperbolic { tau_positive: true }
    );
    assert_eq!(
        region_classify(&p, -1, -1).unwrap(),
        EulerRegion::Hyperbolic { tau_positive: false }
    );
    assert_eq!(region_classify(&p, -8, 7).unwrap(), EulerRegion::Mixed);
    assert!(matches!(region_classify(&p, 0, 0), Err(Error::ZeroFrequency)));
}

#[test]
fn region_table_matches_root_computation() {
    let p = EulerParams::default();
    for a in -30i64..=30 {
        for b in -30i64..=30 {
            if (a, b) == (0, 0) {
                continue;
            }
            let z = p.zeta_pq(a, b);
            let roots = closed_form_xi(&p, z[0], z[1]).unwrap();
            assert_eq!(region_classify(&p, a, b).unwrap(), roots.region, "({a},{b})");
        }
    }
}

#[test]
fn vorticity_root_is_linear() {
    let p = EulerParams::default();
    for (tau, eta) in [(1.0, 0.3), (-2.0, 1.0), (0.5, -4.0)] {
        let a = closed_form_xi(&p, tau, eta).unwrap().xi[2];
        let b = closed_form_xi(&p, 3.0 * tau, 3.0 * eta).unwrap().xi[2];
        assert_abs_diff_eq!(a.re, -tau / p.u0, epsilon = 1e-14);
        assert_abs_diff_eq!(b.re, 3.0 * a.re, epsilon = 1e-13);
    }
}

#[test]
fn incoming_and_outgoing_families_on_the_lattice() {
    let e = common::euler();
    let p = e.params;
    for a in -20i64..=20 {
        for b in -20i64..=20 {
            if (a, b) == (0, 0) {
                continue;
            }
            let z = p.zeta_pq(a, b);
            let roots = closed_form_xi(&p, z[0], z[1]).unwrap();
            let tag = |xi: f64| classify_frequency(&e.lin, &[z[0], z[1], xi]).unwrap().tag;
            assert_eq!(tag(roots.xi[2].re), FrequencyTag::Incoming);
            if let EulerRegion::Hyperbolic { .. } = roots.region {
                assert_eq!(tag(roots.xi[0].re), FrequencyTag::Outgoing, "({a},{b})");
                assert_eq!(tag(roots.xi[1].re), FrequencyTag::Incoming, "({a},{b})");
            }
        }
    }
}

#[test]
fn gamma_vanishes_on_the_diagonal() {
    let p = EulerParams::default();
    for a in -5i64..=5 {
        for b in -5i64..=5 {
            if (a, b) == (0, 0) {
                continue;
            }
            assert_eq!(euler_gamma(&p, a, b, a, b).unwrap(), 0.0);
        }
    }
}

#[test]
fn gamma_cancellation_on_resonant_triples() {
    let p = EulerParams::default();
    let mut checked = 0;
    for (a, b) in (-10i64..=10).flat_map(|a| (-10i64..=10).map(move |b| (a, b))) {
        for (r, s) in (-10i64..=10).flat_map(|r| (-10i64..=10).map(move |s| (r, s))) {
            let (t, w) = (-a - r, -b - s);
            if [(a, b), (r, s), (t, w)].contains(&(0, 0)) || t.abs() > 10 || w.abs() > 10 {
                continue;
            }
            let g1 = euler_gamma(&p, a, b, r, s).unwrap();
            let g2 = euler_gamma(&p, a, b, t, w).unwrap();
            assert!((g1 + g2).abs() <= 1e-10 * g1.abs().max(1.0), "({a},{b}) ({r},{s})");
            checked += 1;
        }
    }
    assert!(checked > 100_000);
}

#[test]
fn gamma_is_homogeneous_of_degree_one() {
    let p = EulerParams::default();
    let (a, b) = (p.zeta_pq(2, -1), p.zeta_pq(1, 3));
    let g = euler_gamma_frequencies(&p, a, b).unwrap();
    let g3 = euler_gamma_frequencies(&p, [3.0 * a[0], 3.0 * a[1]], [3.0 * b[0], 3.0 * b[1]]).unwrap();
    assert!((g3 - 3.0 * g).abs() <= 1e-12 * g.abs().max(1.0));
    assert!(euler_gamma(&p, 1, 0, -1, 0).is_err());
}

#[test]
fn glancing_distance_vanishes_on_the_lines() {
    let p = EulerParams::default();
    let s = p.glancing_slope();
    for eta in [-2.0, 0.5, 3.0] {
        for sign in [-1.0, 1.0] {
            assert!(multiphase_wkb::euler2d::glancing_line_distance(&p, [sign * s * eta, eta]) <= 1e-15);
        }
    }
    assert!(euler_glancing_distance(&p, 1, 0) > 0.0);
}

#[test]
fn glancing_distance_agrees_with_the_generic_set() {
    let e = common::euler();
    let set = GlancingSet::compute(&e.lin, 10_000).unwrap();
    for (a, b) in [(1, 0), (0, 1), (-8, 7), (3, -2), (-1, 1), (5, 4)] {
        let z = e.params.zeta_pq(a, b);
        let generic = set.distance(&z);
        let exact = euler_glancing_distance(&e.params, a, b);
        assert!(
            (generic - exact).abs() <= 1e-3 * (1.0 + exact),
            "({a},{b}): {generic} vs {exact}"
        );
    }
}

#[test]
fn invalid_parameters_are_rejected() {
    for bad in [
        EulerParams {
            u0: 1.5,
            ..Default::default()
        },
        EulerParams {
            delta: 1.0,
            ..Default::default()
        },
        EulerParams {
            v0: -1.0,
            ..Default::default()
        },
    ] {
        assert!(matches!(build_euler(&bad), Err(Error::ParameterOutOfRange(_))));
    }
    assert!(EulerParams::with_mach(0.5).validate().is_ok());
    assert_abs_diff_eq!(EulerParams::with_mach(0.5).mach(), 0.5);
}
