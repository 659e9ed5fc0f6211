//! Seeded random matrices for fixtures and tests.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, CMat};

/// The generator used everywhere a seed is accepted (ChaCha8, rand_chacha 0.3).
pub type QbpRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> QbpRng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn ginibre(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    Mat::from_fn(rows, cols, |_, _| c64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
}

/// Random density matrix `G G† / Tr` with `G` of shape `dim × rank`.
pub fn random_density(dim: usize, rank: usize, rng: &mut impl Rng) -> CMat {
    let g = ginibre(dim, rank.max(1), rng);
    let m = &g * g.adjoint();
    let t = linalg::trace(&m).re;
    linalg::herm_part(&linalg::scale_real(&m, 1.0 / t))
}

/// Random positive operator with eigenvalues in `[lo, lo + 1)` and a random basis.
pub fn random_positive(dim: usize, lo: f64, rng: &mut impl Rng) -> CMat {
    let u = random_unitary(dim, rng);
    let d: Vec<f64> = (0..dim).map(|_| lo + rng.gen::<f64>()).collect();
    linalg::herm_part(&(&u * linalg::diag_real(&d) * u.adjoint()))
}

pub fn random_hermitian(dim: usize, rng: &mut impl Rng) -> CMat {
    linalg::herm_part(&ginibre(dim, dim, rng))
}

/// Unitary polar factor of a Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMat {
    let g = ginibre(dim, dim, rng);
    let (u, _, v) = linalg::svd(&g).expect("svd of a square matrix");
    &u * v.adjoint()
}
