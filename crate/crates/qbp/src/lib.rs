//! Quantum belief propagation on quantum graphical models.

pub mod applications;
pub mod error;
pub mod graphical;
pub mod io;
pub mod linalg;
pub mod network;
pub mod operator_core;
pub mod oracle;
pub mod pauli;
pub mod qbp_engine;
pub mod rng;

pub use error::{QbpError, Result};
pub use operator_core::{LabeledOperator, Order, SystemRegistry};
