//! Seeded random instances shared by the integration tests.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use usd_core::linalg::{inner, vector_norm, CVector};
use usd_core::{ComplexMatrix, DensityMatrix, HermitianMatrix, UsdProblem, C64};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut ChaCha8Rng) -> C64 {
    C64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    (0..dim).map(|_| gaussian(rng)).collect()
}

pub fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = gaussian_vector(rng, dim);
    let n = vector_norm(&v);
    v.into_iter().map(|x| x / n).collect()
}

/// Gram-Schmidt on Gaussian columns.
pub fn random_unitary(rng: &mut ChaCha8Rng, dim: usize) -> ComplexMatrix {
    let mut cols: Vec<CVector> = Vec::with_capacity(dim);
    while cols.len() < dim {
        let mut v = gaussian_vector(rng, dim);
        for q in &cols {
            let overlap = inner(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= overlap * qi;
            }
        }
        let n = vector_norm(&v);
        if n > 1e-6 {
            cols.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    ComplexMatrix::from_fn(dim, |i, j| cols[j][i])
}

pub fn random_hermitian(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> HermitianMatrix {
    let g = ComplexMatrix::from_fn(dim, |_, _| gaussian(rng));
    HermitianMatrix::hermitian_part(&g).scale(scale)
}

/// `GG†` with `G` a Gaussian `dim × rank` block.
pub fn random_psd(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> HermitianMatrix {
    let cols: Vec<CVector> = (0..rank).map(|_| gaussian_vector(rng, dim)).collect();
    HermitianMatrix::hermitian_part(&ComplexMatrix::weighted_projector_sum(
        dim,
        cols.iter().map(|v| (1.0, v.as_slice())),
    ))
}

pub fn random_state(rng: &mut ChaCha8Rng, dim: usize, rank: usize) -> DensityMatrix {
    let a = random_psd(rng, dim, rank);
    let tr = a.real_trace();
    DensityMatrix::new(a.scale(1.0 / tr), Some(rank)).expect("normalized PSD")
}

/// Dimension 2 to 6, ranks with `r₀ + r₁ ≤ d`, priors in `[0.1, 0.9]`.
pub fn random_problem(rng: &mut ChaCha8Rng) -> UsdProblem {
    let dim = rng.random_range(2..=6);
    let r0 = rng.random_range(1..dim);
    let r1 = rng.random_range(1..=dim - r0);
    let eta0 = rng.random_range(0.1..0.9);
    let rho0 = random_state(rng, dim, r0);
    let rho1 = random_state(rng, dim, r1);
    UsdProblem::new(rho0, rho1, eta0, 1.0 - eta0)
}

/// States concentrated on complementary blocks, mixed by `coupling`.
pub fn nearly_orthogonal_problem(rng: &mut ChaCha8Rng, coupling: f64) -> UsdProblem {
    let dim = rng.random_range(2..=6);
    let r0 = rng.random_range(1..dim);
    let r1 = rng.random_range(1..=dim - r0);
    let eta0 = rng.random_range(0.3..0.7);
    let mut block_state = |offset: usize, width: usize, rank: usize| {
        let cols: Vec<CVector> = (0..rank)
            .map(|_| {
                (0..dim)
                    .map(|i| {
                        let z = gaussian(rng);
                        if (offset..offset + width).contains(&i) {
                            z
                        } else {
                            z * coupling
                        }
                    })
                    .collect()
            })
            .collect();
        let a = HermitianMatrix::hermitian_part(&ComplexMatrix::weighted_projector_sum(
            dim,
            cols.iter().map(|v| (1.0, v.as_slice())),
        ));
        let tr = a.real_trace();
        DensityMatrix::new(a.scale(1.0 / tr), Some(rank)).expect("normalized PSD")
    };
    let rho0 = block_state(0, r0, r0);
    let rho1 = block_state(r0, dim - r0, r1);
    UsdProblem::new(rho0, rho1, eta0, 1.0 - eta0)
}

/// Equal-prior rank-2 pair in four dimensions with `ρ₁ = Uρ₀U`,
/// `U = W diag(1, 1, −1, −1) W†`.
pub fn random_gu_problem(rng: &mut ChaCha8Rng) -> UsdProblem {
    let w = random_unitary(rng, 4);
    let signs = ComplexMatrix::diag(&[1.0, 1.0, -1.0, -1.0]);
    let u = HermitianMatrix::hermitian_part(&(&(&w * &signs) * &w.adjoint()));
    let rho0 = random_state(rng, 4, 2);
    let rho1 = HermitianMatrix::hermitian_part(
        &(&(u.as_matrix() * rho0.matrix().as_matrix()) * u.as_matrix()),
    );
    let rho1 = DensityMatrix::new(rho1, Some(2)).expect("conjugated state");
    UsdProblem::new(rho0, rho1, 0.5, 0.5).with_involution(u)
}

pub fn pure_pair(rng: &mut ChaCha8Rng, dim: usize) -> (CVector, CVector) {
    (unit_vector(rng, dim), unit_vector(rng, dim))
}
