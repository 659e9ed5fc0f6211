//! Named fixtures, `kind:key=value:...`.

use std::collections::BTreeMap;

use serde_json::{json, Value};

use qbp::applications::mps::{Boundary, MatrixProductState};
use qbp::applications::qec::{NoiseModel, StabilizerCode};
use qbp::graphical::Graph;
use qbp::io::{operator_to_value, NetworkJson, OperatorJson};
use qbp::operator_core::cmi;
use qbp::oracle::{
    heisenberg_gibbs, heisenberg_network, notmarkov_counterexample, random_commuting_network, random_markov_tree_state, random_tree,
    BlockSpec, ClassicalModel,
};
use qbp::rng::seeded;
use qbp::{LabeledOperator, Order};

use crate::{fail, CliResult};

pub const NAMES: &[&str] = &[
    "heisenberg:N=3:beta=1",
    "heisenberg-network:N=3:beta=1",
    "heisenberg-hamiltonian:N=3",
    "notmarkov:n=1:eps=0.001",
    "tree:n=5:d=2:order=1:seed=0",
    "markov-tree:n=4:d=2:seed=0",
    "classical-chain:n=4:d=2:order=1:seed=0",
    "noise:kind=depolarizing:p=0.1",
    "code:name=bitflip3",
    "mps:N=5:d=2:D=2:boundary=open:seed=0",
];

struct Params {
    kind: String,
    values: BTreeMap<String, String>,
}

impl Params {
    fn parse(name: &str) -> CliResult<Self> {
        let mut parts = name.split(':');
        let kind = parts.next().unwrap_or_default().to_string();
        let mut values = BTreeMap::new();
        for p in parts {
            let (k, v) = p.split_once('=').ok_or_else(|| fail("InvalidInput", format!("fixture parameter `{p}` is not key=value")))?;
            values.insert(k.to_string(), v.to_string());
        }
        Ok(Params { kind, values })
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> CliResult<T> {
        match self.values.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| fail("InvalidInput", format!("bad value `{v}` for `{key}`"))),
        }
    }
}

fn state_value(op: &LabeledOperator) -> Value {
    operator_to_value(op)
}

pub fn fixture(name: &str) -> CliResult<Value> {
    let p = Params::parse(name)?;
    Ok(match p.kind.as_str() {
        "heisenberg" => state_value(&heisenberg_gibbs(p.get("N", 3)?, p.get("beta", 1.0)?)?),
        "heisenberg-network" => json!(NetworkJson::from_network(&heisenberg_network(p.get("N", 3)?, p.get("beta", 1.0)?)?)),
        "heisenberg-hamiltonian" => {
            let n: usize = p.get("N", 3)?;
            let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let g = Graph::path(&refs)?;
            let mut terms = Vec::new();
            for w in labels.windows(2) {
                for a in ["X", "Y", "Z"] {
                    terms.push(json!({ "coeff": 1.0, "paulis": { w[0].clone(): a, w[1].clone(): a } }));
                }
            }
            json!({ "graph": g, "terms": terms })
        }
        "notmarkov" => state_value(&notmarkov_counterexample(p.get("n", 1)?, p.get("eps", 1e-3)?)?),
        "tree" => {
            let n: usize = p.get("n", 5)?;
            let d: usize = p.get("d", 2)?;
            let seed: u64 = p.get("seed", 0)?;
            let order: Order = p.get("order", Order::Finite(1))?;
            let g = random_tree(n, &mut seeded(seed))?;
            let dims: BTreeMap<String, usize> = g.vertices().iter().map(|v| (v.clone(), d)).collect();
            json!(NetworkJson::from_network(&random_commuting_network(&g, &dims, order, seed)?))
        }
        "markov-tree" => {
            let n: usize = p.get("n", 4)?;
            let d: usize = p.get("d", 2)?;
            let seed: u64 = p.get("seed", 0)?;
            let mut rng = seeded(seed);
            let g = random_tree(n, &mut rng)?;
            let dims: BTreeMap<String, usize> = g.vertices().iter().map(|v| (v.clone(), d)).collect();
            let spec = BlockSpec::random(&g, &dims, &mut rng)?;
            let state = random_markov_tree_state(&g, &dims, &spec, seed)?;
            json!({ "graph": g, "state": OperatorJson::from_operator(&state) })
        }
        "classical-chain" => {
            let n: usize = p.get("n", 4)?;
            let d: usize = p.get("d", 2)?;
            let labels: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
            let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
            let model = ClassicalModel::random(Graph::path(&refs)?, vec![d; n], p.get("seed", 0)?)?;
            json!(NetworkJson::from_network(&model.network(p.get("order", Order::Finite(1))?)?))
        }
        "noise" => {
            let prob: f64 = p.get("p", 0.1)?;
            let kind: String = p.get("kind", "depolarizing".to_string())?;
            let noise = match kind.as_str() {
                "depolarizing" => NoiseModel::depolarizing(prob)?,
                "bitflip" => NoiseModel::bit_flip(prob)?,
                _ => return Err(fail("InvalidInput", format!("unknown noise kind `{kind}`"))),
            };
            let reg = qbp::SystemRegistry::qubits(&["q", "r"])?;
            state_value(&LabeledOperator::new(&reg, &["q", "r"], noise.choi().clone())?)
        }
        "code" => {
            let name: String = p.get("name", "bitflip3".to_string())?;
            let code = match name.as_str() {
                "bitflip3" => StabilizerCode::bit_flip3(),
                "five" => StabilizerCode::five_qubit(),
                _ => return Err(fail("InvalidInput", format!("unknown code `{name}`"))),
            };
            json!(code)
        }
        "mps" => {
            let boundary = match p.get("boundary", "open".to_string())?.as_str() {
                "open" => Boundary::Open,
                "periodic" => Boundary::Periodic,
                b => return Err(fail("InvalidInput", format!("unknown boundary `{b}`"))),
            };
            let mps = MatrixProductState::random(p.get("N", 5)?, p.get("d", 2)?, p.get("D", 2)?, boundary, p.get("seed", 0)?)?;
            json!(mps.to_spec())
        }
        _ => {
            return Err(fail("InvalidInput", format!("unknown fixture `{}`; known: {}", p.kind, NAMES.join(", "))));
        }
    })
}

/// `S(1 : N | 2 … N−1)` of the Heisenberg Gibbs state, in bits.
pub fn heisenberg_end_cmi(n: usize, beta: f64) -> CliResult<f64> {
    if n < 3 {
        return Err(fail("InvalidInput", "the chain needs at least 3 sites"));
    }
    let rho = heisenberg_gibbs(n, beta)?;
    let first = "1".to_string();
    let last = n.to_string();
    let mid: Vec<String> = (2..n).map(|i| i.to_string()).collect();
    let mid_refs: Vec<&str> = mid.iter().map(String::as_str).collect();
    Ok(cmi(&rho, &[&first], &[&last], &mid_refs)?)
}
