//! Random fixtures shared by unit tests.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::linalg::{Matrix, SymMatrix};

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// `BᵀB + 0.5 I` with uniform `B`.
pub fn random_spd(dim: usize, seed: u64) -> SymMatrix {
    let b = random_matrix(dim, dim, seed);
    let mut m = b.t_matmul_scaled(&b, 1.0);
    for i in 0..dim {
        m[(i, i)] += 0.5;
    }
    SymMatrix::from_lower(m)
}

/// Standard-normal-ish data (sum of uniforms), `n x p`.
pub fn random_data(n: usize, p: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Matrix::from_fn(n, p, |_, _| {
        (0..4).map(|_| rng.random_range(-1.0..1.0)).sum::<f64>() * 0.866
    })
}
