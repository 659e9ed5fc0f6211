//! Reductions of error-correction decoding and many-body states to bifactor networks.

pub mod gibbs;
pub mod mps;
pub mod qec;

pub use gibbs::{gibbs_state, pair_coarse_grain, trotter_bifactor, LocalHamiltonian};
pub use mps::{mps_reduced_direct, mps_reduced_qbp, mps_to_bifactor, Boundary, MatrixProductState, MpsNetwork};
pub use qec::{decode_marginals, decode_oracle, syndrome_factor_graph, NoiseModel, PauliString, StabilizerCode, Syndrome};
