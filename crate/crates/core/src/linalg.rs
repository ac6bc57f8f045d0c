//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// `‖a − b‖_F / max(1, ‖b‖_F)`.
pub fn rel_residual(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(1.0)
}

pub fn complexify(a: &DMatrix<f64>) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Right singular vectors of the `k` smallest singular values, plus all
/// singular values in ascending order.
pub fn null_space(a: &CMatrix, k: usize) -> (CMatrix, Vec<f64>) {
    let n = a.ncols();
    // pad to square so that the SVD returns a full set of right vectors
    let rows = a.nrows().max(n);
    let mut sq = CMatrix::zeros(rows, n);
    sq.rows_mut(0, a.nrows()).copy_from(a);
    let svd = sq.svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| svd.singular_values[i].total_cmp(&svd.singular_values[j]));
    let mut basis = CMatrix::zeros(n, k);
    for (c, &i) in order.iter().take(k).enumerate() {
        for r in 0..n {
            basis[(r, c)] = v_t[(i, r)].conj();
        }
    }
    let sv = order.iter().map(|&i| svd.singular_values[i]).collect();
    (basis, sv)
}

/// Unit null vector of a real square matrix (smallest singular direction).
pub fn real_null_vector(a: &DMatrix<f64>) -> DVector<f64> {
    let svd = a.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested v_t");
    let i = svd.singular_values.argmin().0;
    v_t.row(i).transpose()
}

/// Rotates (sign-flips) so the entry of largest modulus is positive; ties go
/// to the lowest index.
pub fn fix_sign(v: &mut DVector<f64>) {
    let max = v.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    if max == 0.0 {
        return;
    }
    let idx = v.iter().position(|x| x.abs() >= max * (1.0 - 1e-12)).unwrap_or(0);
    if v[idx] < 0.0 {
        v.neg_mut();
    }
}

/// Eigenvalues of a complex matrix from its Schur form.
pub fn complex_eigenvalues(a: &CMatrix) -> Vec<Complex64> {
    let schur = nalgebra::Schur::new(a.clone());
    let (_, t) = schur.unpack();
    (0..t.nrows()).map(|i| t[(i, i)]).collect()
}

/// 2-norm condition number.
pub fn condition_number(a: &CMatrix) -> f64 {
    let sv = a.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn spectral_norm(a: &CMatrix) -> f64 {
    a.singular_values().max()
}

/// Orthonormal basis for the column span of `a` (full column rank assumed).
pub fn orthonormalize(a: &CMatrix) -> CMatrix {
    let k = a.ncols();
    let qr = a.clone().qr();
    qr.q().columns(0, k).into_owned()
}

/// Deterministic sample of the unit sphere in `ℝ^dim`.
///
/// `dim = 2` uses equally spaced angles starting at 0, `dim = 3` a Fibonacci
/// lattice, larger dimensions normalized Gaussians from a seeded generator.
pub fn sphere_samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    match dim {
        1 => (0..count).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }]).collect(),
        2 => (0..count)
            .map(|i| {
                let t = 2.0 * std::f64::consts::PI * i as f64 / count as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        3 => {
            let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
            (0..count)
                .map(|i| {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let phi = golden * i as f64;
                    vec![r * phi.cos(), r * phi.sin(), z]
                })
                .collect()
        }
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..count)
                .map(|_| {
                    let v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
                    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                    v.into_iter().map(|x| x / n).collect()
                })
                .collect()
        }
    }
}

pub fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}
