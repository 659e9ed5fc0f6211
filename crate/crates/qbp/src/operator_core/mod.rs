//! Labeled operators on tensor products of finite-dimensional systems and the
//! products, conditional densities and independence checks built on them.

mod conditional;
mod decomposition;
mod operator;
mod products;

pub use conditional::{
    ci_condition_check, cmi, conditional_density, entropy, marginal, mutual_density, trace_distance, CiReport,
};
pub(crate) use conditional::entropy_of_spectrum;
pub use decomposition::{commuting_pair_decomposition, Block, BlockStructure, DecomposabilityReport};
pub use operator::{embed, matfun, partial_trace, LabeledOperator, MatFun, Order, SystemRegistry, Tolerances};
pub use products::{odot, odot_all, product, star_n};
pub(crate) use products::star_n_with;
