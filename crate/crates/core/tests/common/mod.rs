#![allow(dead_code)]

use std::sync::Arc;

use multiphase_wkb::euler2d::{build_euler, EulerParams};
use multiphase_wkb::lattice_resonance::{
    calibrate_c0, classify_all, enumerate_resonances, lift_box, lift_direction, partition_frequency_sets,
    FrequencyPartition, Lattice, ModeKey, ResonanceEnumeration,
};
use multiphase_wkb::profile_solver::{BoundaryForcing, ForcingProfile, ForcingTerm};
use multiphase_wkb::system_model::{linearize, HyperbolicSystem, LinearizedSystem};
use nalgebra::DVector;
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub struct Euler {
    pub params: EulerParams,
    pub system: HyperbolicSystem,
    pub lin: LinearizedSystem,
}

pub fn euler() -> Euler {
    euler_with(EulerParams::default())
}

pub fn euler_with(params: EulerParams) -> Euler {
    let system = build_euler(&params).expect("valid Euler parameters");
    let lin = linearize(&system, 1e-6).expect("noncharacteristic boundary");
    Euler { params, system, lin }
}

pub fn euler_lattice() -> (Euler, Lattice) {
    let e = euler();
    let lat = Lattice::new(e.lin.clone(), e.params.zetas()).unwrap();
    (e, lat)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

pub fn random_vector(rng: &mut StdRng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0))
}

/// Uniform point on the unit circle.
pub fn unit_circle(rng: &mut StdRng) -> (f64, f64) {
    let a = rng.gen_range(0.0..std::f64::consts::TAU);
    (a.cos(), a.sin())
}

/// Mode of direction `n` on the vorticity branch.
pub fn vorticity_mode(lat: &Lattice, n: &[i64]) -> Arc<ModeKey> {
    let (dir, _) = lat.direction(n).unwrap();
    let lifted = lift_direction(lat, &dir).unwrap();
    lifted.modes.iter().find(|m| m.branch == 1).unwrap().clone()
}

/// Classified resonances and the frequency partition over a box.
pub fn resonances(lat: &Lattice, radius: i64, bound: usize) -> (ResonanceEnumeration, FrequencyPartition) {
    let lifted = lift_box(lat, radius).unwrap();
    let mut en = enumerate_resonances(lat, &lifted, radius, bound as i64, 1e-9).unwrap();
    let c0 = calibrate_c0(&en);
    classify_all(&mut en, c0);
    let modes: Vec<_> = lifted.iter().flat_map(|l| l.modes.iter().cloned()).collect();
    let part = partition_frequency_sets(&en.resonances, &modes).unwrap();
    (en, part)
}

pub fn time_bump() -> ForcingProfile {
    ForcingProfile {
        t_center: 0.5,
        t_width: 0.45,
        y_center: None,
        y_width: 1.0,
    }
}

/// One forcing term on `n` with real amplitude `g`.
pub fn forcing(n: &[i64], g: &[f64]) -> BoundaryForcing {
    BoundaryForcing {
        terms: vec![ForcingTerm {
            n: n.to_vec(),
            amplitude: g.iter().map(|x| Complex64::new(*x, 0.0)).collect(),
            profile: time_bump(),
        }],
    }
}
