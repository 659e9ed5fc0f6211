//! Single-qubit Pauli matrices and small helpers.

use faer::c64;

use crate::linalg::{self, CMat};

pub fn i2() -> CMat {
    linalg::identity(2)
}

pub fn x() -> CMat {
    linalg::from_rows(&[vec![c64::new(0.0, 0.0), c64::new(1.0, 0.0)], vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)]])
}

/// Hermitian `σ^y`.
pub fn y() -> CMat {
    linalg::from_rows(&[vec![c64::new(0.0, 0.0), c64::new(0.0, -1.0)], vec![c64::new(0.0, 1.0), c64::new(0.0, 0.0)]])
}

pub fn z() -> CMat {
    linalg::diag_real(&[1.0, -1.0])
}

/// Pauli by letter; `I`, `X`, `Y`, `Z`.
pub fn by_char(c: char) -> Option<CMat> {
    match c {
        'I' => Some(i2()),
        'X' => Some(x()),
        'Y' => Some(y()),
        'Z' => Some(z()),
        _ => None,
    }
}

/// `Σ_{a∈{x,y,z}} σ^a ⊗ σ^a`.
pub fn heisenberg_pair() -> CMat {
    let mut h = linalg::kron(&x(), &x());
    h = &h + &linalg::kron(&y(), &y());
    &h + &linalg::kron(&z(), &z())
}

/// Singlet projector `P^-` on two qubits.
pub fn singlet() -> CMat {
    let mut m = linalg::zeros(4);
    m[(1, 1)] = c64::new(0.5, 0.0);
    m[(2, 2)] = c64::new(0.5, 0.0);
    m[(1, 2)] = c64::new(-0.5, 0.0);
    m[(2, 1)] = c64::new(-0.5, 0.0);
    m
}
