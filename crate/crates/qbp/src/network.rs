//! Bifactor networks, their global states, factor graphs, measurement
//! conditioning and the replica lift.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::{c64, Mat};
use serde::{Deserialize, Serialize};

use crate::error::{QbpError, Result};
use crate::graphical::Graph;
use crate::linalg::{self, CMat};
use crate::operator_core::{odot_all, star_n, LabeledOperator, Order, SystemRegistry, Tolerances};

/// Largest total dimension any dense assembly will build.
pub const ASSEMBLY_CAP: usize = 4096;

/// How the edge operators are multiplied at order 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeProduct {
    /// Pairwise commuting `ν`; product order is immaterial.
    Commuting,
    /// Fixed product order, used for factor-graph conversions whose `ν`
    /// share a variable vertex and need not commute.
    Ordered,
}

#[derive(Clone, Debug)]
pub struct BifactorNetwork {
    registry: Arc<SystemRegistry>,
    graph: Graph,
    order: Order,
    systems: BTreeMap<String, Vec<String>>,
    mu: BTreeMap<String, LabeledOperator>,
    nu: BTreeMap<(String, String), LabeledOperator>,
    edge_order: Vec<(String, String)>,
    edge_product: EdgeProduct,
}

#[derive(Clone, Debug, Serialize)]
pub struct OperatorCheck {
    pub name: String,
    pub hermiticity: f64,
    pub min_eigenvalue: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CommutatorCheck {
    pub a: String,
    pub b: String,
    pub norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Diagnostics {
    pub passed: bool,
    pub operators: Vec<OperatorCheck>,
    pub commutators: Vec<CommutatorCheck>,
    pub failures: Vec<String>,
}

pub fn edge_name(a: &str, b: &str) -> String {
    format!("{a}|{b}")
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// Re-registers an operator under another registry, renaming its labels.
pub(crate) fn rehome(op: &LabeledOperator, reg: &Arc<SystemRegistry>, rename: impl Fn(&str) -> String) -> Result<LabeledOperator> {
    let labels: Vec<String> = op.labels().iter().map(|l| rename(l)).collect();
    LabeledOperator::new_unchecked(reg, &refs(&labels), op.matrix().clone())
}

impl BifactorNetwork {
    /// Network whose vertices are registry labels.
    pub fn new(
        registry: Arc<SystemRegistry>,
        graph: Graph,
        order: Order,
        mu: BTreeMap<String, LabeledOperator>,
        nu: BTreeMap<(String, String), LabeledOperator>,
    ) -> Result<Self> {
        let systems = graph.vertices().iter().map(|v| (v.clone(), vec![v.clone()])).collect();
        Self::with_systems(registry, graph, order, systems, mu, nu)
    }

    /// Network whose vertices each carry a list of registry subsystems.
    pub fn with_systems(
        registry: Arc<SystemRegistry>,
        graph: Graph,
        order: Order,
        systems: BTreeMap<String, Vec<String>>,
        mu: BTreeMap<String, LabeledOperator>,
        nu: BTreeMap<(String, String), LabeledOperator>,
    ) -> Result<Self> {
        if let Order::Finite(0) = order {
            return Err(QbpError::InvalidInput("order must be positive".into()));
        }
        let mut owner: BTreeMap<usize, String> = BTreeMap::new();
        for v in graph.vertices() {
            let s = systems.get(v).ok_or_else(|| QbpError::ValidationFailed(format!("no systems for vertex {v}")))?;
            for idx in registry.resolve(&refs(s))? {
                if let Some(o) = owner.insert(idx, v.clone()) {
                    return Err(QbpError::ValidationFailed(format!("subsystem shared by vertices {o} and {v}")));
                }
            }
        }
        let mut mu_full = BTreeMap::new();
        for v in graph.vertices() {
            let op = mu.get(v).ok_or_else(|| QbpError::ValidationFailed(format!("missing mu for vertex {v}")))?;
            if !Arc::ptr_eq(op.registry(), &registry) && op.registry().as_ref() != registry.as_ref() {
                return Err(QbpError::ValidationFailed(format!("mu[{v}] uses another registry")));
            }
            let op = rehome(op, &registry, |l| l.to_string())?;
            mu_full.insert(v.clone(), op.embed(&refs(&systems[v]))?);
        }
        let mut nu_canon = BTreeMap::new();
        for (key, op) in nu {
            let (a, b) = (key.0.as_str(), key.1.as_str());
            if !graph.has_edge(a, b) {
                return Err(QbpError::ValidationFailed(format!("nu given for non-edge {}", edge_name(a, b))));
            }
            let k = canonical_edge(&graph, a, b)?;
            let op = rehome(&op, &registry, |l| l.to_string())?;
            let mut allowed = systems[&k.0].clone();
            allowed.extend(systems[&k.1].iter().cloned());
            let allowed_idx = registry.resolve(&refs(&allowed))?;
            if !op.support().iter().all(|s| allowed_idx.contains(s)) {
                return Err(QbpError::ValidationFailed(format!("nu[{}] acts outside its endpoints", edge_name(&k.0, &k.1))));
            }
            nu_canon.insert(k, op);
        }
        let edge_order = graph.edges();
        for e in &edge_order {
            if !nu_canon.contains_key(e) {
                return Err(QbpError::ValidationFailed(format!("missing nu for edge {}", edge_name(&e.0, &e.1))));
            }
        }
        Ok(BifactorNetwork {
            registry,
            graph,
            order,
            systems,
            mu: mu_full,
            nu: nu_canon,
            edge_order,
            edge_product: EdgeProduct::Commuting,
        })
    }

    /// Switches to a fixed `ν` product order (order-1 networks only).
    pub fn ordered(mut self, edge_order: Vec<(String, String)>) -> Result<Self> {
        if self.order != Order::Finite(1) {
            return Err(QbpError::OrderMismatch { expected: "1".into(), found: self.order.to_string() });
        }
        let mut canon = Vec::new();
        for (a, b) in &edge_order {
            canon.push(canonical_edge(&self.graph, a, b)?);
        }
        let mut sorted = canon.clone();
        sorted.sort();
        let mut want = self.edge_order.clone();
        want.sort();
        if sorted != want {
            return Err(QbpError::ValidationFailed("edge order must list every edge once".into()));
        }
        self.edge_order = canon;
        self.edge_product = EdgeProduct::Ordered;
        Ok(self)
    }

    pub fn registry(&self) -> &Arc<SystemRegistry> {
        &self.registry
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn order(&self) -> Order {
        self.order
    }

    pub fn edge_product(&self) -> EdgeProduct {
        self.edge_product
    }

    pub fn systems(&self, v: &str) -> Result<&[String]> {
        self.systems.get(v).map(Vec::as_slice).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))
    }

    pub fn system_map(&self) -> &BTreeMap<String, Vec<String>> {
        &self.systems
    }

    pub fn system_refs(&self, v: &str) -> Result<Vec<&str>> {
        Ok(refs(self.systems(v)?))
    }

    pub fn vertex_dim(&self, v: &str) -> Result<usize> {
        Ok(self.registry.dim_product(&self.registry.resolve(&self.system_refs(v)?)?))
    }

    pub fn mu(&self, v: &str) -> Result<&LabeledOperator> {
        self.mu.get(v).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))
    }

    pub fn nu(&self, a: &str, b: &str) -> Result<&LabeledOperator> {
        let k = canonical_edge(&self.graph, a, b)?;
        Ok(&self.nu[&k])
    }

    pub fn mu_map(&self) -> &BTreeMap<String, LabeledOperator> {
        &self.mu
    }

    pub fn nu_map(&self) -> &BTreeMap<(String, String), LabeledOperator> {
        &self.nu
    }

    /// Edges in `ν` product order.
    pub fn edge_order(&self) -> &[(String, String)] {
        &self.edge_order
    }

    /// All subsystems of all vertices as sorted registry indices.
    pub fn all_systems(&self) -> Result<Vec<usize>> {
        let mut all = Vec::new();
        for s in self.systems.values() {
            all.extend(self.registry.resolve(&refs(s))?);
        }
        all.sort_unstable();
        Ok(all)
    }

    pub fn total_dim(&self) -> Result<usize> {
        Ok(self.registry.dim_product(&self.all_systems()?))
    }

    pub fn with_mu(&self, v: &str, op: LabeledOperator) -> Result<Self> {
        let mut out = self.clone();
        let op = op.embed(&self.system_refs(v)?)?;
        *out.mu.get_mut(v).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))? = op;
        Ok(out)
    }

    pub fn with_order(&self, order: Order) -> Self {
        let mut out = self.clone();
        out.order = order;
        out
    }

    /// Positivity of every operator and, at finite order with commuting
    /// edge products, pairwise commutation of the `ν`.
    pub fn validate(&self) -> Diagnostics {
        let tol = Tolerances::default();
        let mut operators = Vec::new();
        let mut failures = Vec::new();
        let mut check = |name: String, op: &LabeledOperator| {
            let herm = op.herm_deviation();
            let min = op.min_eigenvalue().unwrap_or(f64::NAN);
            let scale = op.eigenvalues().map(|e| e.iter().fold(0.0_f64, |m, v| m.max(v.abs()))).unwrap_or(0.0);
            if !(min >= -tol.eig * scale.max(1.0)) {
                failures.push(format!("{name} is not positive semidefinite (min eigenvalue {min:.3e})"));
            }
            if herm > tol.herm {
                failures.push(format!("{name} is not Hermitian"));
            }
            operators.push(OperatorCheck { name, hermiticity: herm, min_eigenvalue: min });
        };
        for (v, op) in &self.mu {
            check(format!("mu[{v}]"), op);
        }
        for ((a, b), op) in &self.nu {
            check(format!("nu[{}]", edge_name(a, b)), op);
        }
        let mut commutators = Vec::new();
        if self.order.finite().is_some() && self.edge_product == EdgeProduct::Commuting {
            for (i, e1) in self.edge_order.iter().enumerate() {
                for e2 in &self.edge_order[i + 1..] {
                    let (x, y) = (&self.nu[e1], &self.nu[e2]);
                    if !x.support().iter().any(|s| y.support().contains(s)) {
                        continue;
                    }
                    let norm = x.commutator_norm(y).unwrap_or(f64::INFINITY);
                    let rel = norm / (x.fro_norm() * y.fro_norm()).max(f64::MIN_POSITIVE);
                    let (na, nb) = (edge_name(&e1.0, &e1.1), edge_name(&e2.0, &e2.1));
                    if rel > tol.comm {
                        failures.push(format!("nu[{na}] and nu[{nb}] do not commute ({rel:.3e})"));
                    }
                    commutators.push(CommutatorCheck { a: na, b: nb, norm: rel });
                }
            }
        }
        Diagnostics { passed: failures.is_empty(), operators, commutators, failures }
    }

    fn require_valid(&self) -> Result<()> {
        let d = self.validate();
        if d.passed {
            Ok(())
        } else {
            Err(QbpError::ValidationFailed(d.failures.join("; ")))
        }
    }

    /// Ordered product of all `ν` embedded on the full space.
    fn nu_product(&self, full: &[usize]) -> CMat {
        let dims: Vec<usize> = full.iter().map(|&i| self.registry.dims()[i]).collect();
        let mut p = linalg::identity(dims.iter().product());
        for e in &self.edge_order {
            let op = &self.nu[e];
            let pos: Vec<usize> = op.support().iter().map(|s| full.iter().position(|f| f == s).unwrap()).collect();
            p = linalg::apply_right(&p, op.matrix(), &dims, &pos);
        }
        p
    }

    /// `(1/Z)(⊗μ) ⋆ⁿ (Πν)`, or `(1/Z) ⊙(μ, ν)` at infinite order.
    pub fn assemble_state(&self) -> Result<LabeledOperator> {
        self.require_valid()?;
        let full = self.all_systems()?;
        let dim = self.registry.dim_product(&full);
        if dim > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim, cap: ASSEMBLY_CAP });
        }
        let dims: Vec<usize> = full.iter().map(|&i| self.registry.dims()[i]).collect();
        let out = match self.order {
            Order::Infinite => {
                let ops: Vec<LabeledOperator> = self.mu.values().chain(self.nu.values()).cloned().collect();
                odot_all(&ops)?.embed_indices(&full)?
            }
            Order::Finite(1) => {
                let mut m = self.nu_product(&full);
                for op in self.mu.values() {
                    let r = op.sqrt()?;
                    let pos: Vec<usize> = op.support().iter().map(|s| full.iter().position(|f| f == s).unwrap()).collect();
                    m = linalg::apply_left(r.matrix(), &dims, &pos, &m);
                    m = linalg::apply_right(&m, r.matrix(), &dims, &pos);
                }
                LabeledOperator::from_parts(&self.registry, full.clone(), linalg::herm_part(&m))
            }
            Order::Finite(n) => {
                let p = LabeledOperator::from_parts(&self.registry, full.clone(), linalg::herm_part(&self.nu_product(&full)));
                let mut mu_all: Option<LabeledOperator> = None;
                for op in self.mu.values() {
                    mu_all = Some(match mu_all {
                        None => op.clone(),
                        Some(a) => a.tensor(op)?,
                    });
                }
                let mu_all = mu_all.ok_or_else(|| QbpError::InvalidInput("empty network".into()))?;
                star_n(&mu_all, &p, n)?.embed_indices(&full)?
            }
        };
        out.normalized()
    }

    /// Order-1 state with the `traced` vertices summed out one at a time.
    /// Every edge must have exactly one traced endpoint.
    pub fn assemble_reduced(&self, traced: &[&str]) -> Result<LabeledOperator> {
        if self.order != Order::Finite(1) {
            return Err(QbpError::OrderMismatch { expected: "1".into(), found: self.order.to_string() });
        }
        self.require_valid()?;
        for t in traced {
            self.graph.index(t)?;
        }
        let is_traced = |v: &str| traced.contains(&v);
        let mut groups: Vec<(String, Vec<(String, String)>)> = Vec::new();
        for e in &self.edge_order {
            let t = match (is_traced(&e.0), is_traced(&e.1)) {
                (true, false) => e.0.clone(),
                (false, true) => e.1.clone(),
                _ => {
                    return Err(QbpError::InvalidInput(format!(
                        "edge {} must have exactly one traced endpoint",
                        edge_name(&e.0, &e.1)
                    )))
                }
            };
            match groups.iter_mut().find(|g| g.0 == t) {
                Some(g) => g.1.push(e.clone()),
                None => groups.push((t, vec![e.clone()])),
            }
        }
        let kept: Vec<String> = self.graph.vertices().iter().filter(|v| !is_traced(v)).cloned().collect();
        let mut kept_sys = Vec::new();
        for v in &kept {
            kept_sys.extend(self.registry.resolve(&self.system_refs(v)?)?);
        }
        kept_sys.sort_unstable();
        let kdim = self.registry.dim_product(&kept_sys);
        if kdim > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim: kdim, cap: ASSEMBLY_CAP });
        }
        let mut x = LabeledOperator::identity(&self.registry, &[])?.embed_indices(&kept_sys)?;
        for (t, edges) in &groups {
            let mut prod = self.mu[t].clone();
            for e in edges {
                let next = prod.mul(&self.nu[e])?;
                let d = next.dim();
                if d > ASSEMBLY_CAP {
                    return Err(QbpError::DimensionCap { dim: d, cap: ASSEMBLY_CAP });
                }
                prod = next;
            }
            let reduced = prod.partial_trace(&self.system_refs(t)?)?;
            x = x.mul(&reduced)?;
        }
        let x = x.herm_part();
        let mut mu_k: Option<LabeledOperator> = None;
        for v in &kept {
            let op = &self.mu[v];
            mu_k = Some(match mu_k {
                None => op.clone(),
                Some(a) => a.tensor(op)?,
            });
        }
        let out = match mu_k {
            Some(m) => star_n(&m, &x, 1)?,
            None => x,
        };
        out.embed_indices(&kept_sys)?.normalized()
    }
}

fn canonical_edge(g: &Graph, a: &str, b: &str) -> Result<(String, String)> {
    let (i, j) = (g.index(a)?, g.index(b)?);
    if !g.has_edge(a, b) {
        return Err(QbpError::InvalidInput(format!("{} is not an edge", edge_name(a, b))));
    }
    Ok(if i < j { (a.to_string(), b.to_string()) } else { (b.to_string(), a.to_string()) })
}

/// Per-vertex POVM effect factors `E_u`.
#[derive(Clone, Debug, Default)]
pub struct MeasurementAssignment {
    pub effects: BTreeMap<String, LabeledOperator>,
}

impl MeasurementAssignment {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, vertex: &str, effect: LabeledOperator) -> Self {
        self.effects.insert(vertex.to_string(), effect);
        self
    }

    /// Each effect must satisfy `0 ≤ E ≤ I`.
    pub fn validate(&self) -> Result<()> {
        let tol = Tolerances::default().eig;
        for (v, e) in &self.effects {
            let ev = e.eigenvalues()?;
            if ev.iter().any(|&x| x < -tol || x > 1.0 + tol) {
                return Err(QbpError::ValidationFailed(format!("effect on {v} is not between 0 and I")));
            }
        }
        Ok(())
    }
}

/// Replaces `μ_u` by `μ_u ⋆ E_u` on measured vertices.
pub fn condition_on_measurement(net: &BifactorNetwork, m: &MeasurementAssignment) -> Result<BifactorNetwork> {
    if net.order() != Order::Finite(1) {
        return Err(QbpError::OrderMismatch { expected: "1".into(), found: net.order().to_string() });
    }
    m.validate()?;
    let mut out = net.clone();
    for (v, e) in &m.effects {
        let sys = net.system_refs(v)?;
        let e = rehome(e, net.registry(), |l| l.to_string())?.embed(&sys)?;
        let updated = star_n(net.mu(v)?, &e, 1)?;
        out = out.with_mu(v, updated)?;
    }
    Ok(out)
}

/// Bipartite model `ρ_V ∝ (Π_f X_f) ⋆ (⊗_v μ_v)`.
#[derive(Clone, Debug)]
pub struct FactorGraphModel {
    registry: Arc<SystemRegistry>,
    variables: Vec<String>,
    functions: Vec<String>,
    adjacency: BTreeMap<String, Vec<String>>,
    x: BTreeMap<String, LabeledOperator>,
    mu: BTreeMap<String, LabeledOperator>,
}

impl FactorGraphModel {
    /// `x` maps each function node to its operator; the neighbors of a
    /// function node are the labels its operator acts on.
    pub fn new(
        registry: Arc<SystemRegistry>,
        mu: BTreeMap<String, LabeledOperator>,
        x: BTreeMap<String, LabeledOperator>,
    ) -> Result<Self> {
        let variables: Vec<String> = registry.labels().to_vec();
        for v in &variables {
            if !mu.contains_key(v) {
                return Err(QbpError::ValidationFailed(format!("missing mu for variable {v}")));
            }
        }
        let mut adjacency = BTreeMap::new();
        for (f, op) in &x {
            if variables.contains(f) {
                return Err(QbpError::DuplicateLabel(f.clone()));
            }
            if op.support().is_empty() {
                return Err(QbpError::ValidationFailed(format!("function {f} acts on no variable")));
            }
            adjacency.insert(f.clone(), op.labels());
        }
        let fg = FactorGraphModel { functions: x.keys().cloned().collect(), registry, variables, adjacency, x, mu };
        fg.validate()?;
        Ok(fg)
    }

    pub fn validate(&self) -> Result<()> {
        let tol = Tolerances::default();
        for (f, op) in &self.x {
            if op.min_eigenvalue()? < -tol.eig * op.fro_norm().max(1.0) {
                return Err(QbpError::ValidationFailed(format!("X[{f}] is not positive semidefinite")));
            }
        }
        for (i, f) in self.functions.iter().enumerate() {
            for g in &self.functions[i + 1..] {
                let (a, b) = (&self.x[f], &self.x[g]);
                let c = a.commutator_norm(b)? / (a.fro_norm() * b.fro_norm()).max(f64::MIN_POSITIVE);
                if c > tol.comm {
                    return Err(QbpError::ValidationFailed(format!("X[{f}] and X[{g}] do not commute ({c:.3e})")));
                }
            }
        }
        Ok(())
    }

    pub fn registry(&self) -> &Arc<SystemRegistry> {
        &self.registry
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn functions(&self) -> &[String] {
        &self.functions
    }

    pub fn neighbors(&self, f: &str) -> Result<&[String]> {
        self.adjacency.get(f).map(Vec::as_slice).ok_or_else(|| QbpError::UnknownVertex(f.to_string()))
    }

    pub fn x(&self, f: &str) -> Result<&LabeledOperator> {
        self.x.get(f).ok_or_else(|| QbpError::UnknownVertex(f.to_string()))
    }

    pub fn mu(&self, v: &str) -> Result<&LabeledOperator> {
        self.mu.get(v).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))
    }

    /// `(1/Z)(Π X_f) ⋆ (⊗ μ_v)` on all variables.
    pub fn state(&self) -> Result<LabeledOperator> {
        let all: Vec<usize> = (0..self.registry.len()).collect();
        let dim = self.registry.dim_product(&all);
        if dim > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim, cap: ASSEMBLY_CAP });
        }
        let mut px = LabeledOperator::identity(&self.registry, &[])?.embed_indices(&all)?;
        for f in &self.functions {
            px = px.mul(&self.x[f])?;
        }
        let mut mu = LabeledOperator::identity(&self.registry, &[])?;
        for v in &self.variables {
            mu = mu.tensor(&self.mu[v])?;
        }
        star_n(&px.herm_part(), &mu, 1)?.embed_indices(&all)?.normalized()
    }
}

/// Reference subsystem created for variable `v` inside function node `f`.
pub fn reference_label(f: &str, v: &str) -> String {
    format!("{f}/{v}")
}

/// Order-1 network on the bipartite graph `V ∪ F` with `μ_f = X_f^T` on the
/// references and `ν_{v:f} = Σ_{ij} |i⟩⟨j|_v ⊗ |i⟩⟨j|_{R_v^f}`.
///
/// Returns the network and the list of function vertices to trace out.
pub fn factor_graph_to_bifactor(fg: &FactorGraphModel) -> Result<(BifactorNetwork, Vec<String>)> {
    let base = fg.registry();
    let mut entries: Vec<(String, usize)> = base.labels().iter().cloned().zip(base.dims().iter().copied()).collect();
    let mut systems = BTreeMap::new();
    for v in fg.variables() {
        systems.insert(v.clone(), vec![v.clone()]);
    }
    for f in fg.functions() {
        let mut s = Vec::new();
        for v in fg.neighbors(f)? {
            let r = reference_label(f, v);
            entries.push((r.clone(), base.dim_of(v)?));
            s.push(r);
        }
        systems.insert(f.clone(), s);
    }
    let reg = SystemRegistry::new(entries)?;
    let mut vertices: Vec<String> = fg.variables().to_vec();
    vertices.extend(fg.functions().iter().cloned());
    let mut edges = Vec::new();
    for f in fg.functions() {
        for v in fg.neighbors(f)? {
            edges.push((v.clone(), f.clone()));
        }
    }
    let vr = refs(&vertices);
    let er: Vec<(&str, &str)> = edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
    let graph = Graph::new(&vr, &er)?;
    let mut mu = BTreeMap::new();
    for v in fg.variables() {
        mu.insert(v.clone(), rehome(fg.mu(v)?, &reg, |l| l.to_string())?);
    }
    for f in fg.functions() {
        let xt = linalg::transpose(fg.x(f)?.matrix());
        let op = LabeledOperator::new(&reg, &refs(&systems[f]), xt)?;
        mu.insert(f.clone(), op);
    }
    let mut nu = BTreeMap::new();
    for (v, f) in &edges {
        let d = base.dim_of(v)?;
        let m = Mat::from_fn(d * d, d * d, |r, c| {
            let (i, a) = (r / d, r % d);
            let (j, b) = (c / d, c % d);
            if i == a && j == b {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let r = reference_label(f, v);
        nu.insert((v.clone(), f.clone()), LabeledOperator::new(&reg, &[v.as_str(), r.as_str()], m)?);
    }
    let net = BifactorNetwork::with_systems(reg, graph, Order::Finite(1), systems, mu, nu)?.ordered(edges)?;
    Ok((net, fg.functions().to_vec()))
}

/// Label of replica `k` (1-based) of subsystem `s`.
pub fn replica_label(s: &str, k: u32) -> String {
    format!("{s}~{k}")
}

/// Cyclic shift `⟨x_1…x_n|T|y_1…y_n⟩ = Π_k δ(x_k, y_{k+1})` on `n` blocks of dimension `d`.
pub fn cyclic_permutation(d: usize, n: u32) -> CMat {
    let n = n as usize;
    let total = d.pow(n as u32);
    let mut t = Mat::zeros(total, total);
    for y in 0..total {
        let mut digits = vec![0usize; n];
        let mut r = y;
        for k in (0..n).rev() {
            digits[k] = r % d;
            r /= d;
        }
        let mut x = 0usize;
        for k in 0..n {
            x = x * d + digits[(k + 1) % n];
        }
        t[(x, y)] = c64::new(1.0, 0.0);
    }
    t
}

/// Principal square root of the cyclic shift via its spectral projectors.
pub fn cyclic_permutation_root(d: usize, n: u32) -> CMat {
    let t = cyclic_permutation(d, n);
    let total = t.nrows();
    let nf = n as f64;
    let mut powers = vec![linalg::identity(total)];
    for m in 1..n as usize {
        let next = &powers[m - 1] * &t;
        powers.push(next);
    }
    let mut root = Mat::zeros(total, total);
    for k in 0..n as i64 {
        // eigenvalue e^{2πik/n}, phase taken in (−π, π]
        let mut theta = 2.0 * std::f64::consts::PI * k as f64 / nf;
        if theta > std::f64::consts::PI {
            theta -= 2.0 * std::f64::consts::PI;
        }
        let mut proj = Mat::zeros(total, total);
        for (m, p) in powers.iter().enumerate() {
            let w = c64::cis(-2.0 * std::f64::consts::PI * (k as f64) * (m as f64) / nf) / nf;
            proj += linalg::scale(p, w);
        }
        root += linalg::scale(&proj, c64::cis(theta / 2.0));
    }
    root
}

/// How to map a replica network state back to the original subsystems.
#[derive(Clone, Debug)]
pub struct ContractionRecipe {
    pub n: u32,
    pub original: Arc<SystemRegistry>,
    /// Cyclic shift `T_u` on each vertex's replicated systems (replica-major order).
    pub perms: BTreeMap<String, CMat>,
    /// `T_u^{1/2}`, the per-vertex isometry of the polar form.
    pub roots: BTreeMap<String, CMat>,
    /// Original label → its first-replica label.
    pub keep: BTreeMap<String, String>,
    pub trace_out: Vec<String>,
}

#[derive(Clone, Debug)]
pub struct ReplicaNetwork {
    /// Order-1 network carrying the positive parts `P_u = (μ_u^{1/n})^{⊗n}`
    /// and `ν̃ = (ν^{1/n})^{⊗n}`.
    pub network: BifactorNetwork,
    pub recipe: ContractionRecipe,
}

impl ContractionRecipe {
    /// `Tr_{2…n}[X · ⊗_u T_u]`, normalized, on the original registry.
    pub fn recover(&self, x: &LabeledOperator, systems: &BTreeMap<String, Vec<String>>) -> Result<LabeledOperator> {
        let reg = x.registry().clone();
        let full = x.support().to_vec();
        let dims = x.dims();
        let mut m = x.matrix().clone();
        for (v, t) in &self.perms {
            let idx = reg.resolve(&refs(&systems[v]))?;
            let pos: Vec<usize> = idx.iter().map(|s| full.iter().position(|f| f == s).unwrap()).collect();
            if pos.len() != idx.len() {
                return Err(QbpError::LabelNotSubset(reg.labels_of(&idx)));
            }
            m = linalg::apply_right(&m, t, &dims, &pos);
        }
        let keep_labels: Vec<&str> = self.keep.values().map(String::as_str).collect();
        let keep_idx = reg.resolve(&keep_labels)?;
        let keep_pos: Vec<usize> = keep_idx.iter().map(|s| full.iter().position(|f| f == s).unwrap()).collect();
        let red = linalg::partial_trace_matrix(&m, &dims, &keep_pos);
        let back: BTreeMap<&str, &str> = self.keep.iter().map(|(o, r)| (r.as_str(), o.as_str())).collect();
        let orig_labels: Vec<&str> = reg.labels_of(&keep_idx).iter().map(|l| back[l.as_str()]).collect();
        let op = LabeledOperator::new_unchecked(&self.original, &orig_labels, red)?;
        op.herm_part().normalized()
    }
}

impl ReplicaNetwork {
    /// `T_u` embedded as an operator on the vertex's replicated systems.
    pub fn perm(&self, v: &str) -> Result<&CMat> {
        self.recipe.perms.get(v).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))
    }

    /// Assembles the replica network and applies the recipe.
    pub fn recovered_state(&self) -> Result<LabeledOperator> {
        let x = self.network.assemble_state()?;
        self.recipe.recover(&x, self.network.system_map())
    }
}

/// Lifts a finite-order network to an order-1 network on `n` replicas per vertex.
pub fn replica_lift(net: &BifactorNetwork) -> Result<ReplicaNetwork> {
    let n = net.order().finite().ok_or_else(|| QbpError::OrderMismatch { expected: "finite".into(), found: "inf".into() })?;
    let reg = net.registry();
    let mut entries = Vec::new();
    let mut systems = BTreeMap::new();
    let mut keep = BTreeMap::new();
    let mut trace_out = Vec::new();
    for v in net.graph().vertices() {
        let d = net.vertex_dim(v)?;
        let dn = d.checked_pow(n).unwrap_or(usize::MAX);
        if dn > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim: dn, cap: ASSEMBLY_CAP });
        }
        let mut s = Vec::new();
        for k in 1..=n {
            for sys in net.systems(v)? {
                let l = replica_label(sys, k);
                entries.push((l.clone(), reg.dim_of(sys)?));
                if k == 1 {
                    keep.insert(sys.clone(), l.clone());
                } else {
                    trace_out.push(l.clone());
                }
                s.push(l);
            }
        }
        systems.insert(v.clone(), s);
    }
    let rreg = SystemRegistry::new(entries)?;
    let lift = |op: &LabeledOperator| -> Result<LabeledOperator> {
        let root = op.pow(1.0 / n as f64)?;
        let mut m = root.matrix().clone();
        for _ in 1..n {
            m = linalg::kron(&m, root.matrix());
        }
        let mut labels = Vec::new();
        for k in 1..=n {
            for l in op.labels() {
                labels.push(replica_label(&l, k));
            }
        }
        LabeledOperator::new(&rreg, &refs(&labels), m)
    };
    let mut mu = BTreeMap::new();
    let mut perms = BTreeMap::new();
    let mut roots = BTreeMap::new();
    for v in net.graph().vertices() {
        mu.insert(v.clone(), lift(net.mu(v)?)?);
        let d = net.vertex_dim(v)?;
        perms.insert(v.clone(), cyclic_permutation(d, n));
        roots.insert(v.clone(), cyclic_permutation_root(d, n));
    }
    let mut nu = BTreeMap::new();
    for (k, op) in net.nu_map() {
        nu.insert(k.clone(), lift(op)?);
    }
    let network = BifactorNetwork::with_systems(rreg, net.graph().clone(), Order::Finite(1), systems, mu, nu)?;
    Ok(ReplicaNetwork {
        network,
        recipe: ContractionRecipe { n, original: reg.clone(), perms, roots, keep, trace_out },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bell(reg: &Arc<SystemRegistry>, a: &str, b: &str) -> LabeledOperator {
        let mut m = linalg::zeros(4);
        for (i, j) in [(0, 0), (0, 3), (3, 0), (3, 3)] {
            m[(i, j)] = c64::new(0.5, 0.0);
        }
        LabeledOperator::new(reg, &[a, b], m).unwrap()
    }

    #[test]
    fn maximally_mixed_network() {
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let g = Graph::path(&["a", "b"]).unwrap();
        let mu = [("a", 0), ("b", 0)]
            .iter()
            .map(|(v, _)| (v.to_string(), LabeledOperator::maximally_mixed(&reg, &[v]).unwrap()))
            .collect();
        let nu = [(("a".to_string(), "b".to_string()), LabeledOperator::identity(&reg, &["a", "b"]).unwrap())].into();
        let net = BifactorNetwork::new(reg.clone(), g, Order::Finite(1), mu, nu).unwrap();
        let rho = net.assemble_state().unwrap();
        let want = LabeledOperator::maximally_mixed(&reg, &["a", "b"]).unwrap();
        assert!(rho.fro_dist(&want).unwrap() < 1e-12);
    }

    #[test]
    fn bell_network_assembles_to_bell_state() {
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let g = Graph::path(&["a", "b"]).unwrap();
        let mu = ["a", "b"].iter().map(|v| (v.to_string(), LabeledOperator::identity(&reg, &[v]).unwrap())).collect();
        let nu = [(("a".to_string(), "b".to_string()), bell(&reg, "a", "b"))].into();
        let net = BifactorNetwork::new(reg.clone(), g, Order::Finite(1), mu, nu).unwrap();
        let rho = net.assemble_state().unwrap();
        assert!(rho.fro_dist(&bell(&reg, "a", "b")).unwrap() < 1e-12);
    }

    #[test]
    fn non_commuting_edges_named_in_diagnostics() {
        let reg = SystemRegistry::qubits(&["1", "2", "3"]).unwrap();
        let g = Graph::path(&["1", "2", "3"]).unwrap();
        let mu: BTreeMap<String, LabeledOperator> =
            ["1", "2", "3"].iter().map(|v| (v.to_string(), LabeledOperator::identity(&reg, &[v]).unwrap())).collect();
        // projector onto the symmetric subspace (I + SWAP)/2
        let mut swap = linalg::zeros(4);
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            swap[(i, j)] = c64::new(1.0, 0.0);
        }
        let sym = linalg::scale_real(&(linalg::identity(4) + &swap), 0.5);
        let x = linalg::from_rows(&[
            vec![c64::new(0.0, 0.0), c64::new(1.0, 0.0)],
            vec![c64::new(1.0, 0.0), c64::new(0.0, 0.0)],
        ]);
        let xx_plus = linalg::scale_real(&(linalg::identity(4) + linalg::kron(&x, &x)), 0.5);
        let nu: BTreeMap<(String, String), LabeledOperator> = [
            (("1".to_string(), "2".to_string()), LabeledOperator::new(&reg, &["1", "2"], sym).unwrap()),
            (("2".to_string(), "3".to_string()), LabeledOperator::new(&reg, &["2", "3"], xx_plus).unwrap()),
        ]
        .into();
        let net = BifactorNetwork::new(reg.clone(), g.clone(), Order::Finite(1), mu.clone(), nu.clone()).unwrap();
        let d = net.validate();
        assert!(!d.passed);
        assert!(d.failures[0].contains("nu[1|2]") && d.failures[0].contains("nu[2|3]"));
        let inf = BifactorNetwork::new(reg, g, Order::Infinite, mu, nu).unwrap();
        assert!(inf.validate().passed);
    }

    #[test]
    fn cyclic_permutation_contracts_to_product() {
        let mut rng = crate::rng::seeded(7);
        let d = 2;
        let mats: Vec<CMat> = (0..3).map(|_| crate::rng::ginibre(d, d, &mut rng)).collect();
        let t = cyclic_permutation(d, 3);
        let big = linalg::kron(&linalg::kron(&mats[0], &mats[1]), &mats[2]);
        let red = linalg::partial_trace_matrix(&(&big * &t), &[d, d, d], &[0]);
        let want = &(&mats[0] * &mats[1]) * &mats[2];
        assert!(linalg::fro_dist(&red, &want) < 1e-12);
        let root = cyclic_permutation_root(d, 3);
        assert!(linalg::fro_dist(&(&root * &root), &t) < 1e-12);
        let u = &root * root.adjoint();
        assert!(linalg::fro_dist(&u, &linalg::identity(8)) < 1e-12);
    }

    #[test]
    fn replica_of_order_one_is_identity() {
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let g = Graph::path(&["a", "b"]).unwrap();
        let mu = ["a", "b"].iter().map(|v| (v.to_string(), LabeledOperator::diagonal(&reg, &[v], &[0.3, 0.7]).unwrap())).collect();
        let nu = [(("a".to_string(), "b".to_string()), bell(&reg, "a", "b").add(&LabeledOperator::identity(&reg, &["a", "b"]).unwrap().scaled(0.1)).unwrap())].into();
        let net = BifactorNetwork::new(reg, g, Order::Finite(1), mu, nu).unwrap();
        let rep = replica_lift(&net).unwrap();
        let back = rep.recovered_state().unwrap();
        assert!(back.trace_distance(&net.assemble_state().unwrap()).unwrap() < 1e-12);
    }
}
