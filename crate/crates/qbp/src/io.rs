//! JSON interchange for operators, graphs, networks and the application inputs.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::c64;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::applications::LocalHamiltonian;
use crate::error::{QbpError, Result};
use crate::graphical::Graph;
use crate::linalg::CMat;
use crate::network::{edge_name, BifactorNetwork, FactorGraphModel, MeasurementAssignment};
use crate::operator_core::{LabeledOperator, Order, SystemRegistry};
use crate::pauli;
use crate::qbp_engine::{BeliefSet, ConvergenceReport};

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

/// `{labels, dims, matrix_re, matrix_im}`, row-major, factor order = label order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OperatorJson {
    pub labels: Vec<String>,
    pub dims: Vec<usize>,
    pub matrix_re: Vec<Vec<f64>>,
    pub matrix_im: Vec<Vec<f64>>,
}

impl OperatorJson {
    pub fn from_operator(op: &LabeledOperator) -> Self {
        let m = op.matrix();
        let n = m.nrows();
        OperatorJson {
            labels: op.labels(),
            dims: op.dims(),
            matrix_re: (0..n).map(|i| (0..n).map(|j| m[(i, j)].re).collect()).collect(),
            matrix_im: (0..n).map(|i| (0..n).map(|j| m[(i, j)].im).collect()).collect(),
        }
    }

    pub fn matrix(&self) -> Result<CMat> {
        let n: usize = self.dims.iter().product();
        if self.labels.len() != self.dims.len() {
            return Err(QbpError::InvalidInput("labels and dims differ in length".into()));
        }
        let rows_ok = |m: &Vec<Vec<f64>>| m.len() == n && m.iter().all(|r| r.len() == n);
        if !rows_ok(&self.matrix_re) || !(self.matrix_im.is_empty() || rows_ok(&self.matrix_im)) {
            return Err(QbpError::DimensionMismatch(format!("operator on {:?} needs {n}x{n} matrices", self.labels)));
        }
        Ok(CMat::from_fn(n, n, |i, j| {
            let im = if self.matrix_im.is_empty() { 0.0 } else { self.matrix_im[i][j] };
            c64::new(self.matrix_re[i][j], im)
        }))
    }

    /// The operator under its own registry of exactly its labels.
    pub fn to_operator(&self) -> Result<LabeledOperator> {
        let reg = SystemRegistry::new(self.labels.iter().cloned().zip(self.dims.iter().copied()))?;
        self.to_operator_in(&reg)
    }

    pub fn to_operator_in(&self, reg: &Arc<SystemRegistry>) -> Result<LabeledOperator> {
        for (l, &d) in self.labels.iter().zip(&self.dims) {
            let rd = reg.dim_of(l)?;
            if rd != d {
                return Err(QbpError::DimensionMismatch(format!("label `{l}` has dimension {rd}, operator says {d}")));
            }
        }
        LabeledOperator::new(reg, &refs(&self.labels), self.matrix()?)
    }
}

pub fn operator_to_value(op: &LabeledOperator) -> Value {
    serde_json::to_value(OperatorJson::from_operator(op)).expect("operator serializes")
}

pub fn parse_operator(v: &Value) -> Result<OperatorJson> {
    serde_json::from_value(v.clone()).map_err(|e| QbpError::InvalidInput(format!("bad operator: {e}")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RegistryJson {
    pub labels: Vec<String>,
    pub dims: Vec<usize>,
}

impl RegistryJson {
    pub fn build(&self) -> Result<Arc<SystemRegistry>> {
        if self.labels.len() != self.dims.len() {
            return Err(QbpError::InvalidInput("registry labels and dims differ in length".into()));
        }
        SystemRegistry::new(self.labels.iter().cloned().zip(self.dims.iter().copied()))
    }

    pub fn from_registry(reg: &SystemRegistry) -> Self {
        RegistryJson { labels: reg.labels().to_vec(), dims: reg.dims().to_vec() }
    }
}

/// Registry holding every label of the given operators, first occurrence first.
fn infer_registry<'a>(ops: impl IntoIterator<Item = &'a OperatorJson>) -> Result<Arc<SystemRegistry>> {
    let mut entries: Vec<(String, usize)> = Vec::new();
    for op in ops {
        for (l, &d) in op.labels.iter().zip(&op.dims) {
            match entries.iter().find(|(x, _)| x == l) {
                Some((_, e)) if *e != d => {
                    return Err(QbpError::DimensionMismatch(format!("label `{l}` used with dimensions {e} and {d}")));
                }
                Some(_) => {}
                None => entries.push((l.clone(), d)),
            }
        }
    }
    SystemRegistry::new(entries)
}

fn split_edge(key: &str) -> Result<(String, String)> {
    key.split_once('|')
        .map(|(a, b)| (a.to_string(), b.to_string()))
        .ok_or_else(|| QbpError::InvalidInput(format!("edge key `{key}` is not of the form u|v")))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetworkJson {
    pub order: Order,
    pub graph: Graph,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<RegistryJson>,
    /// Subsystems of each vertex; defaults to the vertex label itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub systems: Option<BTreeMap<String, Vec<String>>>,
    pub mu: BTreeMap<String, OperatorJson>,
    pub nu: BTreeMap<String, OperatorJson>,
}

impl NetworkJson {
    pub fn from_network(net: &BifactorNetwork) -> Self {
        let trivial = net.system_map().iter().all(|(v, s)| s.len() == 1 && &s[0] == v);
        NetworkJson {
            order: net.order(),
            graph: net.graph().clone(),
            registry: Some(RegistryJson::from_registry(net.registry())),
            systems: if trivial { None } else { Some(net.system_map().clone()) },
            mu: net.mu_map().iter().map(|(v, op)| (v.clone(), OperatorJson::from_operator(op))).collect(),
            nu: net.nu_map().iter().map(|((a, b), op)| (edge_name(a, b), OperatorJson::from_operator(op))).collect(),
        }
    }

    pub fn build(&self) -> Result<BifactorNetwork> {
        let reg = match &self.registry {
            Some(r) => r.build()?,
            None => infer_registry(self.mu.values().chain(self.nu.values()))?,
        };
        let mu = self.mu.iter().map(|(v, o)| Ok((v.clone(), o.to_operator_in(&reg)?))).collect::<Result<_>>()?;
        let nu = self.nu.iter().map(|(k, o)| Ok((split_edge(k)?, o.to_operator_in(&reg)?))).collect::<Result<_>>()?;
        match &self.systems {
            None => BifactorNetwork::new(reg, self.graph.clone(), self.order, mu, nu),
            Some(s) => BifactorNetwork::with_systems(reg, self.graph.clone(), self.order, s.clone(), mu, nu),
        }
    }
}

/// `{effects: {vertex: operator}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasurementJson {
    pub effects: BTreeMap<String, OperatorJson>,
}

impl MeasurementJson {
    pub fn build(&self, reg: &Arc<SystemRegistry>) -> Result<MeasurementAssignment> {
        let mut m = MeasurementAssignment::new();
        for (v, e) in &self.effects {
            m = m.with(v, e.to_operator_in(reg)?);
        }
        Ok(m)
    }
}

/// `{registry?, mu: {variable: operator}, function_nodes: [..], X: {function: operator}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FactorGraphJson {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry: Option<RegistryJson>,
    pub mu: BTreeMap<String, OperatorJson>,
    #[serde(default)]
    pub function_nodes: Vec<String>,
    #[serde(rename = "X")]
    pub x: BTreeMap<String, OperatorJson>,
}

impl FactorGraphJson {
    pub fn build(&self) -> Result<FactorGraphModel> {
        for f in &self.function_nodes {
            if !self.x.contains_key(f) {
                return Err(QbpError::ValidationFailed(format!("function node {f} has no X")));
            }
        }
        let reg = match &self.registry {
            Some(r) => r.build()?,
            None => infer_registry(self.mu.values())?,
        };
        let mu = self.mu.iter().map(|(v, o)| Ok((v.clone(), o.to_operator_in(&reg)?))).collect::<Result<_>>()?;
        let x = self.x.iter().map(|(f, o)| Ok((f.clone(), o.to_operator_in(&reg)?))).collect::<Result<_>>()?;
        FactorGraphModel::new(reg, mu, x)
    }
}

/// One Pauli-product term, e.g. `{"coeff": 1.0, "paulis": {"1": "X", "2": "X"}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PauliTerm {
    pub coeff: f64,
    pub paulis: BTreeMap<String, char>,
}

/// Local Hamiltonian on qubit vertices. Terms may be given as operators
/// (`vertex`, `edge` keyed `u|v`) or as Pauli products in `terms`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HamiltonianJson {
    pub graph: Graph,
    #[serde(default)]
    pub vertex: BTreeMap<String, OperatorJson>,
    #[serde(default)]
    pub edge: BTreeMap<String, OperatorJson>,
    #[serde(default)]
    pub terms: Vec<PauliTerm>,
}

impl HamiltonianJson {
    pub fn build(&self) -> Result<LocalHamiltonian> {
        let reg = SystemRegistry::qubits(&self.graph.vertex_refs())?;
        let mut vertex: BTreeMap<String, LabeledOperator> = BTreeMap::new();
        let mut edge: BTreeMap<(String, String), LabeledOperator> = BTreeMap::new();
        let add_vertex = |v: String, op: LabeledOperator, vertex: &mut BTreeMap<String, LabeledOperator>| -> Result<()> {
            let sum = match vertex.remove(&v) {
                Some(old) => old.add(&op)?,
                None => op,
            };
            vertex.insert(v, sum);
            Ok(())
        };
        let add_edge = |k: (String, String), op: LabeledOperator, edge: &mut BTreeMap<(String, String), LabeledOperator>| -> Result<()> {
            let k = if edge.contains_key(&(k.1.clone(), k.0.clone())) { (k.1, k.0) } else { k };
            let labels = [k.0.as_str(), k.1.as_str()];
            let op = op.embed(&labels)?;
            let sum = match edge.remove(&k) {
                Some(old) => old.add(&op)?,
                None => op,
            };
            edge.insert(k, sum);
            Ok(())
        };
        for (v, o) in &self.vertex {
            add_vertex(v.clone(), o.to_operator_in(&reg)?, &mut vertex)?;
        }
        for (k, o) in &self.edge {
            add_edge(split_edge(k)?, o.to_operator_in(&reg)?, &mut edge)?;
        }
        for t in &self.terms {
            let mut labels = Vec::new();
            let mut m = crate::linalg::identity(1);
            for (l, &c) in &t.paulis {
                let p = pauli::by_char(c).ok_or_else(|| QbpError::InvalidInput(format!("`{c}` is not a Pauli letter")))?;
                m = crate::linalg::kron(&m, &p);
                labels.push(l.clone());
            }
            let op = LabeledOperator::new(&reg, &refs(&labels), crate::linalg::scale_real(&m, t.coeff))?;
            match labels.as_slice() {
                [v] => add_vertex(v.clone(), op, &mut vertex)?,
                [a, b] => add_edge((a.clone(), b.clone()), op, &mut edge)?,
                _ => return Err(QbpError::InvalidInput(format!("term on {labels:?} is neither a vertex nor an edge term"))),
            }
        }
        LocalHamiltonian::new(reg, self.graph.clone(), vertex, edge)
    }
}

/// `{target: operator}` with edge targets keyed `u|v`.
pub fn marginals_to_value(m: &BTreeMap<String, LabeledOperator>) -> Value {
    Value::Object(m.iter().map(|(k, op)| (k.clone(), operator_to_value(op))).collect())
}

pub fn beliefs_to_value(b: &BeliefSet) -> BTreeMap<String, Value> {
    let mut out = BTreeMap::new();
    for (v, op) in &b.vertex {
        out.insert(v.clone(), operator_to_value(op));
    }
    for ((a, c), op) in &b.edge {
        out.insert(edge_name(a, c), operator_to_value(op));
    }
    out
}

/// `{marginals: {...}, report: {...}}`.
pub fn run_output(b: &BeliefSet, report: &ConvergenceReport) -> Value {
    serde_json::json!({
        "marginals": Value::Object(beliefs_to_value(b).into_iter().collect()),
        "report": report,
    })
}

/// Reads a target → operator map from `{marginals: {...}}` or a bare map.
pub fn read_marginals(v: &Value) -> Result<BTreeMap<String, LabeledOperator>> {
    let obj = match v.get("marginals") {
        Some(m) => m,
        None => v,
    };
    let obj = obj.as_object().ok_or_else(|| QbpError::InvalidInput("expected an object of operators".into()))?;
    obj.iter().map(|(k, o)| Ok((k.clone(), parse_operator(o)?.to_operator()?))).collect()
}

/// Per-target trace distances over the common targets, and their maximum.
pub fn compare_marginals(
    a: &BTreeMap<String, LabeledOperator>,
    b: &BTreeMap<String, LabeledOperator>,
) -> Result<(BTreeMap<String, f64>, f64)> {
    let mut out = BTreeMap::new();
    let mut worst = 0.0_f64;
    for (k, x) in a {
        let Some(y) = b.get(k) else { continue };
        if x.labels() != y.labels() || x.dims() != y.dims() {
            return Err(QbpError::DimensionMismatch(format!("target {k} has different subsystems")));
        }
        let d = crate::linalg::trace_distance(x.matrix(), y.matrix())?;
        worst = worst.max(d);
        out.insert(k.clone(), d);
    }
    if out.is_empty() {
        return Err(QbpError::InvalidInput("no common targets".into()));
    }
    Ok((out, worst))
}
