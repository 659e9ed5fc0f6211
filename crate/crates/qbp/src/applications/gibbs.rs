//! Gibbs states of local Hamiltonians as bifactor networks.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::error::{QbpError, Result};
use crate::graphical::Graph;
use crate::network::{edge_name, BifactorNetwork, ASSEMBLY_CAP};
use crate::operator_core::{LabeledOperator, Order, SystemRegistry, Tolerances};

/// `H = Σ_u H_u + Σ_{(u,v)} H_{uv}` on a graph whose vertices are registry labels.
#[derive(Clone, Debug)]
pub struct LocalHamiltonian {
    pub registry: Arc<SystemRegistry>,
    pub graph: Graph,
    pub vertex: BTreeMap<String, LabeledOperator>,
    pub edge: BTreeMap<(String, String), LabeledOperator>,
}

impl LocalHamiltonian {
    pub fn new(
        registry: Arc<SystemRegistry>,
        graph: Graph,
        vertex: BTreeMap<String, LabeledOperator>,
        edge: BTreeMap<(String, String), LabeledOperator>,
    ) -> Result<Self> {
        let tol = Tolerances::default();
        for (v, h) in &vertex {
            graph.index(v)?;
            if h.labels() != [v.clone()] {
                return Err(QbpError::ValidationFailed(format!("vertex term {v} must act on {v} only")));
            }
            if h.herm_deviation() > tol.herm {
                return Err(QbpError::NotHermitian(h.herm_deviation()));
            }
        }
        for ((a, b), h) in &edge {
            if !graph.has_edge(a, b) {
                return Err(QbpError::ValidationFailed(format!("edge term on non-edge {}", edge_name(a, b))));
            }
            if h.labels().iter().any(|l| l != a && l != b) {
                return Err(QbpError::ValidationFailed(format!("edge term {} acts outside its endpoints", edge_name(a, b))));
            }
            if h.herm_deviation() > tol.herm {
                return Err(QbpError::NotHermitian(h.herm_deviation()));
            }
        }
        Ok(LocalHamiltonian { registry, graph, vertex, edge })
    }

    /// Nearest-neighbour Heisenberg chain `Σ σ^x σ^x + σ^y σ^y + σ^z σ^z` on qubits `1 … N`.
    pub fn heisenberg_chain(n: usize) -> Result<Self> {
        let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
        let lr: Vec<&str> = labels.iter().map(String::as_str).collect();
        let reg = SystemRegistry::qubits(&lr)?;
        let graph = Graph::path(&lr)?;
        let mut edge = BTreeMap::new();
        for w in labels.windows(2) {
            let h = LabeledOperator::new(&reg, &[w[0].as_str(), w[1].as_str()], crate::pauli::heisenberg_pair())?;
            edge.insert((w[0].clone(), w[1].clone()), h);
        }
        Self::new(reg, graph, BTreeMap::new(), edge)
    }

    /// The full Hamiltonian as a dense operator on every vertex.
    pub fn dense(&self) -> Result<LabeledOperator> {
        let all: Vec<usize> = (0..self.registry.len()).collect();
        let dim = self.registry.dim_product(&all);
        if dim > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim, cap: ASSEMBLY_CAP });
        }
        let mut h = LabeledOperator::identity(&self.registry, &[])?.embed_indices(&all)?.scaled(0.0);
        for t in self.vertex.values().chain(self.edge.values()) {
            h = h.add(t)?;
        }
        Ok(h)
    }

    fn term_exp(&self, h: Option<&LabeledOperator>, labels: &[&str], beta: f64) -> Result<LabeledOperator> {
        match h {
            Some(h) => h.embed(labels)?.scaled(-beta).exp(),
            None => LabeledOperator::identity(&self.registry, labels),
        }
    }

    fn edge_term(&self, a: &str, b: &str) -> Option<&LabeledOperator> {
        self.edge.get(&(a.to_string(), b.to_string())).or_else(|| self.edge.get(&(b.to_string(), a.to_string())))
    }
}

/// `(1/Z) exp(−βH)` by exact diagonalization.
pub fn gibbs_state(h: &LocalHamiltonian, beta: f64) -> Result<LabeledOperator> {
    h.dense()?.scaled(-beta).exp()?.normalized()
}

/// `μ_u = exp(−βH_u)`, `ν_{uv} = exp(−βH_{uv})` at the given order.
///
/// Finite orders need pairwise commuting `ν`.
pub fn trotter_bifactor(h: &LocalHamiltonian, beta: f64, order: Order) -> Result<BifactorNetwork> {
    let mut mu = BTreeMap::new();
    for v in h.graph.vertices() {
        mu.insert(v.clone(), h.term_exp(h.vertex.get(v), &[v.as_str()], beta)?);
    }
    let mut nu = BTreeMap::new();
    for (a, b) in h.graph.edges() {
        nu.insert((a.clone(), b.clone()), h.term_exp(h.edge_term(&a, &b), &[a.as_str(), b.as_str()], beta)?);
    }
    if order != Order::Infinite {
        check_commuting(&nu)?;
    }
    BifactorNetwork::new(h.registry.clone(), h.graph.clone(), order, mu, nu)
}

fn check_commuting(nu: &BTreeMap<(String, String), LabeledOperator>) -> Result<()> {
    let tol = Tolerances::default().comm;
    let entries: Vec<_> = nu.iter().collect();
    for (i, (ka, a)) in entries.iter().enumerate() {
        for (kb, b) in &entries[i + 1..] {
            let c = a.commutator_norm(b)? / (a.fro_norm() * b.fro_norm()).max(f64::MIN_POSITIVE);
            if c > tol {
                return Err(QbpError::NonCommutingEdgeTerms(edge_name(&ka.0, &ka.1), edge_name(&kb.0, &kb.1)));
            }
        }
    }
    Ok(())
}

/// Chain vertices `2u−1, 2u` merged into one block: `μ̃_u = exp(−β(H_{2u−1} + H_{2u} + H_{2u−1,2u}))`
/// and `ν̃_{u:u+1} = exp(−βH_{2u,2u+1})`. An odd last vertex stays alone.
pub fn pair_coarse_grain(h: &LocalHamiltonian, beta: f64, order: Order) -> Result<BifactorNetwork> {
    let chain = h.graph.chain_order()?;
    let blocks: Vec<Vec<String>> = chain.chunks(2).map(<[String]>::to_vec).collect();
    let names: Vec<String> = blocks.iter().map(|b| b.join("+")).collect();
    let nr: Vec<&str> = names.iter().map(String::as_str).collect();
    let graph = Graph::path(&nr)?;
    let mut systems = BTreeMap::new();
    let mut mu = BTreeMap::new();
    for (name, block) in names.iter().zip(&blocks) {
        let br: Vec<&str> = block.iter().map(String::as_str).collect();
        let mut sum = LabeledOperator::identity(&h.registry, &br)?.scaled(0.0);
        for v in block {
            if let Some(t) = h.vertex.get(v) {
                sum = sum.add(t)?;
            }
        }
        if block.len() == 2 {
            if let Some(t) = h.edge_term(&block[0], &block[1]) {
                sum = sum.add(t)?;
            }
        }
        mu.insert(name.clone(), sum.scaled(-beta).exp()?);
        systems.insert(name.clone(), block.clone());
    }
    let mut nu = BTreeMap::new();
    for k in 0..blocks.len().saturating_sub(1) {
        let (a, b) = (blocks[k].last().unwrap(), &blocks[k + 1][0]);
        nu.insert((names[k].clone(), names[k + 1].clone()), h.term_exp(h.edge_term(a, b), &[a.as_str(), b.as_str()], beta)?);
    }
    if order != Order::Infinite {
        check_commuting(&nu)?;
    }
    BifactorNetwork::with_systems(h.registry.clone(), graph, order, systems, mu, nu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heisenberg_needs_coarse_graining_at_finite_order() {
        let h = LocalHamiltonian::heisenberg_chain(3).unwrap();
        let e = trotter_bifactor(&h, 0.5, Order::Finite(2)).unwrap_err();
        assert!(matches!(e, QbpError::NonCommutingEdgeTerms(..)));
        assert!(pair_coarse_grain(&h, 0.5, Order::Finite(2)).is_ok());
    }

    #[test]
    fn infinite_order_is_exact() {
        let h = LocalHamiltonian::heisenberg_chain(3).unwrap();
        let g = gibbs_state(&h, 0.5).unwrap();
        for net in [trotter_bifactor(&h, 0.5, Order::Infinite).unwrap(), pair_coarse_grain(&h, 0.5, Order::Infinite).unwrap()] {
            let s = net.assemble_state().unwrap();
            assert!(s.trace_distance(&g).unwrap() < 1e-10);
        }
    }
}
