//! Seeded random instances: controller, dynamics and initial set.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::polytope::{inf_norm, HPolytope};
use crate::tll::{LtiSystem, ScalarTll, TllController};

/// Target induced infinity norm of the generated `A`.
pub const A_NORM: f64 = 0.9;

fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    rng.gen_range(-1.0..=1.0)
}

/// A scalar TLL with i.i.d. uniform `[-1, 1]` weights and biases. Each selector
/// set contains every index independently with probability 1/2 (one uniformly
/// drawn index if that comes out empty).
pub fn random_scalar_tll(n: usize, big_n: usize, big_m: usize, rng: &mut ChaCha8Rng) -> Result<ScalarTll> {
    let w: Vec<Vec<f64>> = (0..big_n).map(|_| (0..n).map(|_| uniform(rng)).collect()).collect();
    let b: Vec<f64> = (0..big_n).map(|_| uniform(rng)).collect();
    let sel = (0..big_m)
        .map(|_| {
            let mut s: Vec<usize> = (0..big_n).filter(|_| rng.gen_bool(0.5)).collect();
            if s.is_empty() {
                s.push(rng.gen_range(0..big_n));
            }
            s
        })
        .collect();
    ScalarTll::new(w, b, sel)
}

pub fn random_controller(
    n: usize,
    m: usize,
    big_n: usize,
    big_m: usize,
    rng: &mut ChaCha8Rng,
) -> Result<TllController> {
    let comps = (0..m)
        .map(|_| random_scalar_tll(n, big_n, big_m, rng))
        .collect::<Result<Vec<_>>>()?;
    TllController::new(comps)
}

pub fn random_system(n: usize, m: usize, rng: &mut ChaCha8Rng) -> Result<LtiSystem> {
    let mut a = DMatrix::from_fn(n, n, |_, _| uniform(rng));
    let norm = inf_norm(&a);
    if norm > 0.0 {
        a *= A_NORM / norm;
    }
    let b = DMatrix::from_fn(n, m, |_, _| uniform(rng));
    LtiSystem::new(a, b)
}

/// A random rotation (orthogonal, determinant +1).
pub fn random_rotation(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    loop {
        let g = DMatrix::from_fn(n, n, |_, _| uniform(rng));
        let qr = g.qr();
        let r = qr.r();
        if (0..n).any(|i| r[(i, i)].abs() < 1e-6) {
            continue;
        }
        let mut q = qr.q();
        for j in 0..n {
            if r[(j, j)] < 0.0 {
                q.column_mut(j).neg_mut();
            }
        }
        if q.determinant() < 0.0 {
            q.column_mut(0).neg_mut();
        }
        return q;
    }
}

/// The rotated box `{Q z + c : |z|_inf <= h}` in H-representation.
pub fn rotated_box(q: &DMatrix<f64>, center: &[f64], half_width: f64) -> Result<HPolytope> {
    let n = center.len();
    let mut rows = Vec::with_capacity(2 * n);
    let mut offs = Vec::with_capacity(2 * n);
    for i in 0..n {
        let col: Vec<f64> = q.column(i).iter().copied().collect();
        let qc: f64 = col.iter().zip(center).map(|(a, b)| a * b).sum();
        offs.push(half_width + qc);
        offs.push(half_width - qc);
        rows.push(col.clone());
        rows.push(col.iter().map(|v| -v).collect());
    }
    HPolytope::from_rows(n, &rows, &offs)
}

/// Controller, dynamics and initial set for a seeded random instance.
pub fn random_problem(
    n: usize,
    m: usize,
    big_n: usize,
    big_m: usize,
    seed: u64,
) -> Result<(TllController, LtiSystem, HPolytope)> {
    if n == 0 || m == 0 || big_n == 0 || big_m == 0 {
        return Err(Error::arg("n, m, N and M must all be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ctrl = random_controller(n, m, big_n, big_m, &mut rng)?;
    let sys = random_system(n, m, &mut rng)?;
    let q = random_rotation(n, &mut rng);
    let center: Vec<f64> = (0..n).map(|_| 2.0 * uniform(&mut rng)).collect();
    let x0 = rotated_box(&q, &center, 1.0)?;
    Ok((ctrl, sys, x0))
}
