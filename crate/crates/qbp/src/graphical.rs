//! Undirected graphs and DAGs over subsystem labels, local Markov checks,
//! the Möbius (Hammersley-Clifford) decomposition and tree bifactorization.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{QbpError, Result};
use crate::linalg;
use crate::network::BifactorNetwork;
use crate::operator_core::{
    conditional_density, entropy_of_spectrum, mutual_density, odot_all, star_n, LabeledOperator, Order,
    SystemRegistry, Tolerances,
};

/// Subset enumeration cap for Markov checks and the Möbius decomposition.
pub const SUBSET_CAP: usize = 12;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "GraphSpec", into = "GraphSpec")]
pub struct Graph {
    vertices: Vec<String>,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GraphSpec {
    pub vertices: Vec<String>,
    #[serde(default)]
    pub edges: Vec<(String, String)>,
}

impl TryFrom<GraphSpec> for Graph {
    type Error = QbpError;
    fn try_from(s: GraphSpec) -> Result<Self> {
        let edges: Vec<(&str, &str)> = s.edges.iter().map(|(a, b)| (a.as_str(), b.as_str())).collect();
        let v: Vec<&str> = s.vertices.iter().map(String::as_str).collect();
        Graph::new(&v, &edges)
    }
}

impl From<Graph> for GraphSpec {
    fn from(g: Graph) -> Self {
        GraphSpec {
            edges: g.edges.iter().map(|&(a, b)| (g.vertices[a].clone(), g.vertices[b].clone())).collect(),
            vertices: g.vertices,
        }
    }
}

impl Graph {
    pub fn new(vertices: &[&str], edges: &[(&str, &str)]) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for v in vertices {
            if !seen.insert(*v) {
                return Err(QbpError::DuplicateLabel(v.to_string()));
            }
        }
        let vertices: Vec<String> = vertices.iter().map(|s| s.to_string()).collect();
        let mut g = Graph { adj: vec![vec![]; vertices.len()], vertices, edges: vec![] };
        let mut set = BTreeSet::new();
        for (a, b) in edges {
            let (i, j) = (g.index(a)?, g.index(b)?);
            if i == j {
                return Err(QbpError::InvalidInput(format!("self-loop at {a}")));
            }
            set.insert((i.min(j), i.max(j)));
        }
        g.edges = set.into_iter().collect();
        for &(i, j) in &g.edges {
            g.adj[i].push(j);
            g.adj[j].push(i);
        }
        for a in g.adj.iter_mut() {
            a.sort_unstable();
        }
        Ok(g)
    }

    /// Path `v_1 – v_2 – … – v_N`.
    pub fn path(vertices: &[&str]) -> Result<Self> {
        let edges: Vec<(&str, &str)> = vertices.windows(2).map(|w| (w[0], w[1])).collect();
        Self::new(vertices, &edges)
    }

    pub fn cycle(vertices: &[&str]) -> Result<Self> {
        let mut edges: Vec<(&str, &str)> = vertices.windows(2).map(|w| (w[0], w[1])).collect();
        if vertices.len() > 2 {
            edges.push((vertices[vertices.len() - 1], vertices[0]));
        }
        Self::new(vertices, &edges)
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn vertex_refs(&self) -> Vec<&str> {
        self.vertices.iter().map(String::as_str).collect()
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn index(&self, v: &str) -> Result<usize> {
        self.vertices.iter().position(|x| x == v).ok_or_else(|| QbpError::UnknownVertex(v.to_string()))
    }

    pub fn edge_indices(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Edges as label pairs, endpoints in vertex order, sorted lexicographically by index.
    pub fn edges(&self) -> Vec<(String, String)> {
        self.edges.iter().map(|&(a, b)| (self.vertices[a].clone(), self.vertices[b].clone())).collect()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        match (self.index(a), self.index(b)) {
            (Ok(i), Ok(j)) => self.adj[i].contains(&j),
            _ => false,
        }
    }

    pub fn adjacency(&self, i: usize) -> &[usize] {
        &self.adj[i]
    }

    pub fn neighbor_labels(&self, v: &str) -> Result<Vec<String>> {
        let i = self.index(v)?;
        Ok(self.adj[i].iter().map(|&j| self.vertices[j].clone()).collect())
    }

    fn mask_of(&self, set: &[&str]) -> Result<u64> {
        let mut m = 0u64;
        for v in set {
            m |= 1 << self.index(v)?;
        }
        Ok(m)
    }

    fn labels_of_mask(&self, mask: u64) -> Vec<String> {
        (0..self.len()).filter(|i| mask >> i & 1 == 1).map(|i| self.vertices[i].clone()).collect()
    }

    fn neighbor_mask(&self, mask: u64) -> u64 {
        let mut n = 0u64;
        for i in 0..self.len() {
            if mask >> i & 1 == 1 {
                for &j in &self.adj[i] {
                    n |= 1 << j;
                }
            }
        }
        n & !mask
    }

    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        self.distances_from(0).iter().all(|d| d.is_some())
    }

    pub fn is_tree(&self) -> bool {
        !self.is_empty() && self.edges.len() + 1 == self.len() && self.is_connected()
    }

    fn distances_from(&self, s: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.len()];
        dist[s] = Some(0);
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for &v in &self.adj[u] {
                if dist[v].is_none() {
                    dist[v] = Some(dist[u].unwrap() + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// Largest finite shortest-path distance.
    pub fn diameter(&self) -> usize {
        (0..self.len()).flat_map(|s| self.distances_from(s)).flatten().max().unwrap_or(0)
    }

    /// Depth of the branch hanging off `u` away from its neighbor `v`
    /// (the subtree `G_v^u` rooted at `u`).
    pub fn branch_depth(&self, u: &str, v: &str) -> Result<usize> {
        let (iu, iv) = (self.index(u)?, self.index(v)?);
        let mut dist = vec![None; self.len()];
        dist[iu] = Some(0usize);
        let mut q = VecDeque::from([iu]);
        let mut best = 0;
        while let Some(a) = q.pop_front() {
            for &b in &self.adj[a] {
                if b == iv && a == iu {
                    continue;
                }
                if dist[b].is_none() {
                    let d = dist[a].unwrap() + 1;
                    best = best.max(d);
                    dist[b] = Some(d);
                    q.push_back(b);
                }
            }
        }
        Ok(best)
    }

    /// Vertex order along a path graph, starting from the lower-indexed end.
    pub fn chain_order(&self) -> Result<Vec<String>> {
        if self.len() == 1 {
            return Ok(self.vertices.clone());
        }
        if !self.is_tree() || self.adj.iter().any(|a| a.len() > 2) {
            return Err(QbpError::NotAChain);
        }
        let start = (0..self.len()).find(|&i| self.adj[i].len() == 1).ok_or(QbpError::NotAChain)?;
        let mut order = vec![start];
        let mut prev = usize::MAX;
        let mut cur = start;
        while let Some(&next) = self.adj[cur].iter().find(|&&n| n != prev) {
            order.push(next);
            prev = cur;
            cur = next;
        }
        Ok(order.into_iter().map(|i| self.vertices[i].clone()).collect())
    }
}

/// `n(U)`: vertices adjacent to `U`, excluding `U`.
pub fn neighbors(g: &Graph, u: &[&str]) -> Result<Vec<String>> {
    let m = g.mask_of(u)?;
    Ok(g.labels_of_mask(g.neighbor_mask(m)))
}

/// All cliques, including singletons, ordered by size then vertex order.
pub fn cliques(g: &Graph) -> Vec<Vec<String>> {
    let mut out: Vec<Vec<usize>> = Vec::new();
    fn extend(g: &Graph, cur: &mut Vec<usize>, start: usize, out: &mut Vec<Vec<usize>>) {
        for v in start..g.len() {
            if cur.iter().all(|&c| g.adj[c].contains(&v)) {
                cur.push(v);
                out.push(cur.clone());
                extend(g, cur, v + 1, out);
                cur.pop();
            }
        }
    }
    extend(g, &mut Vec::new(), 0, &mut out);
    out.sort_by(|a, b| a.len().cmp(&b.len()).then(a.cmp(b)));
    out.into_iter().map(|c| c.into_iter().map(|i| g.vertices[i].clone()).collect()).collect()
}

fn is_clique_mask(g: &Graph, mask: u64) -> bool {
    let idx: Vec<usize> = (0..g.len()).filter(|i| mask >> i & 1 == 1).collect();
    idx.iter().all(|&a| idx.iter().all(|&b| a == b || g.adj[a].contains(&b)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dag {
    vertices: Vec<String>,
    arcs: Vec<(String, String)>,
}

impl Dag {
    pub fn new(vertices: &[&str], arcs: &[(&str, &str)]) -> Result<Self> {
        let d = Dag {
            vertices: vertices.iter().map(|s| s.to_string()).collect(),
            arcs: arcs.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect(),
        };
        for (a, b) in &d.arcs {
            for x in [a, b] {
                if !d.vertices.contains(x) {
                    return Err(QbpError::UnknownVertex(x.clone()));
                }
            }
        }
        d.ancestral_order()?;
        Ok(d)
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn parents(&self, v: &str) -> Vec<String> {
        let mut p: Vec<String> = self.arcs.iter().filter(|(_, b)| b == v).map(|(a, _)| a.clone()).collect();
        p.sort_by_key(|x| self.vertices.iter().position(|y| y == x));
        p
    }

    /// Topological order, ties broken by vertex order.
    pub fn ancestral_order(&self) -> Result<Vec<String>> {
        let mut done: Vec<String> = Vec::new();
        while done.len() < self.vertices.len() {
            let next = self
                .vertices
                .iter()
                .find(|v| !done.contains(v) && self.parents(v).iter().all(|p| done.contains(p)))
                .ok_or(QbpError::NoAncestralOrdering)?;
            done.push(next.clone());
        }
        Ok(done)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoarsePartition {
    pub blocks: Vec<Vec<String>>,
}

impl CoarsePartition {
    pub fn new(blocks: Vec<Vec<String>>) -> Self {
        CoarsePartition { blocks }
    }

    pub fn from_refs(blocks: &[&[&str]]) -> Self {
        CoarsePartition { blocks: blocks.iter().map(|b| b.iter().map(|s| s.to_string()).collect()).collect() }
    }

    /// Label used for a block in the coarse graph: members joined by `+`.
    pub fn block_label(&self, i: usize) -> String {
        self.blocks[i].join("+")
    }

    pub fn validate(&self, g: &Graph) -> Result<()> {
        let mut seen = BTreeSet::new();
        for b in &self.blocks {
            if b.is_empty() {
                return Err(QbpError::InvalidPartition("empty block".into()));
            }
            for v in b {
                g.index(v)?;
                if !seen.insert(v.clone()) {
                    return Err(QbpError::InvalidPartition(format!("{v} appears in two blocks")));
                }
            }
            let mask = g.mask_of(&b.iter().map(String::as_str).collect::<Vec<_>>())?;
            let first = g.index(&b[0])?;
            let mut reach = 1u64 << first;
            loop {
                let grown = reach | (g.neighbor_mask(reach) & mask);
                if grown == reach {
                    break;
                }
                reach = grown;
            }
            if reach != mask {
                return Err(QbpError::InvalidPartition(format!("block {} is not connected", b.join("+"))));
            }
        }
        if seen.len() != g.len() {
            return Err(QbpError::InvalidPartition("blocks do not cover all vertices".into()));
        }
        Ok(())
    }
}

/// Quotient graph: one vertex per block, edges where original edges cross blocks.
pub fn coarse_grain(g: &Graph, p: &CoarsePartition) -> Result<Graph> {
    p.validate(g)?;
    let labels: Vec<String> = (0..p.blocks.len()).map(|i| p.block_label(i)).collect();
    let block_of = |v: &str| p.blocks.iter().position(|b| b.iter().any(|x| x == v)).unwrap();
    let mut edges = Vec::new();
    for (a, b) in g.edges() {
        let (i, j) = (block_of(&a), block_of(&b));
        if i != j {
            edges.push((labels[i].as_str(), labels[j].as_str()));
        }
    }
    let v: Vec<&str> = labels.iter().map(String::as_str).collect();
    Graph::new(&v, &edges)
}

/// Re-expresses a state over block labels, each block one subsystem whose
/// tensor order follows the block's member order.
pub fn regroup_state(state: &LabeledOperator, p: &CoarsePartition) -> Result<LabeledOperator> {
    let reg = state.registry();
    let mut entries = Vec::new();
    let mut order = Vec::new();
    for (i, b) in p.blocks.iter().enumerate() {
        let mut d = 1;
        for v in b {
            let idx = reg.index_of(v)?;
            let pos = state
                .support()
                .iter()
                .position(|&s| s == idx)
                .ok_or_else(|| QbpError::LabelNotSubset(vec![v.clone()]))?;
            order.push(pos);
            d *= reg.dims()[idx];
        }
        entries.push((p.block_label(i), d));
    }
    if order.len() != state.support().len() {
        return Err(QbpError::InvalidPartition("blocks do not cover the state's support".into()));
    }
    let m = linalg::permute_factors(state.matrix(), &state.dims(), &order);
    let new_reg = SystemRegistry::new(entries)?;
    let labels: Vec<String> = new_reg.labels().to_vec();
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    LabeledOperator::new(&new_reg, &refs, m)
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovEntry {
    pub u: Vec<String>,
    pub neighbors: Vec<String>,
    pub rest: Vec<String>,
    pub cmi: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarkovReport {
    pub entries: Vec<MarkovEntry>,
    pub max_cmi: f64,
    pub threshold: f64,
    pub is_markov: bool,
}

struct EntropyCache<'a> {
    state: &'a LabeledOperator,
    g: &'a Graph,
    cache: HashMap<u64, f64>,
}

impl EntropyCache<'_> {
    fn get(&mut self, mask: u64) -> Result<f64> {
        if mask == 0 {
            return Ok(0.0);
        }
        if let Some(&s) = self.cache.get(&mask) {
            return Ok(s);
        }
        let labels = self.g.labels_of_mask(mask);
        let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
        let s = entropy_of_spectrum(&self.state.reduce_to(&refs)?.eigenvalues()?);
        self.cache.insert(mask, s);
        Ok(s)
    }
}

/// Evaluates `S(U : V−U−n(U) | n(U))` over all nonempty `U` (or singletons only).
pub fn local_markov_report(state: &LabeledOperator, g: &Graph, threshold: f64, vertex_only: bool) -> Result<MarkovReport> {
    if g.len() > SUBSET_CAP && !vertex_only {
        return Err(QbpError::TooManyVertices { count: g.len(), cap: SUBSET_CAP });
    }
    if g.len() > 63 {
        return Err(QbpError::TooManyVertices { count: g.len(), cap: 63 });
    }
    let reg = state.registry();
    for v in g.vertices() {
        let i = reg.index_of(v)?;
        if !state.support().contains(&i) {
            return Err(QbpError::LabelNotSubset(vec![v.clone()]));
        }
    }
    let tr = state.trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(QbpError::NotNormalized(tr));
    }
    let full: u64 = if g.len() == 64 { u64::MAX } else { (1u64 << g.len()) - 1 };
    let subsets: Vec<u64> =
        if vertex_only { (0..g.len()).map(|i| 1u64 << i).collect() } else { (1..=full).collect() };
    let mut cache = EntropyCache { state, g, cache: HashMap::new() };
    let mut entries = Vec::new();
    let mut max_cmi = 0.0_f64;
    for u in subsets {
        let n = g.neighbor_mask(u);
        let rest = full & !(u | n);
        if rest == 0 {
            continue;
        }
        let c = cache.get(u | n)? + cache.get(rest | n)? - cache.get(n)? - cache.get(full)?;
        max_cmi = max_cmi.max(c);
        entries.push(MarkovEntry { u: g.labels_of_mask(u), neighbors: g.labels_of_mask(n), rest: g.labels_of_mask(rest), cmi: c });
    }
    Ok(MarkovReport { entries, max_cmi, threshold, is_markov: max_cmi <= threshold })
}

#[derive(Clone, Debug)]
pub struct MobiusTerm {
    pub subset: Vec<String>,
    pub is_clique: bool,
    pub k: LabeledOperator,
    pub k_norm: f64,
    /// `σ_U = exp(K_U)`.
    pub sigma: LabeledOperator,
}

#[derive(Clone, Debug)]
pub struct HcDecomposition {
    /// Nonempty subsets only; the empty set contributes the scalar `K_∅`.
    pub terms: Vec<MobiusTerm>,
    pub log_scalar: f64,
    pub max_nonclique_norm: f64,
    pub reconstruction_distance: f64,
    pub zero_lemma_residual: f64,
}

impl HcDecomposition {
    /// `σ_C` for the nonempty cliques of the graph.
    pub fn clique_terms(&self) -> impl Iterator<Item = &MobiusTerm> {
        self.terms.iter().filter(|t| t.is_clique)
    }
}

/// Möbius decomposition `ln ρ = Σ_U K_U` anchored at the product vector `|α⟩`.
///
/// `anchor` maps a vertex to its anchor vector; missing vertices use `|0⟩`.
pub fn hc_decompose(
    state: &LabeledOperator,
    g: &Graph,
    anchor: &BTreeMap<String, Vec<faer::c64>>,
) -> Result<HcDecomposition> {
    if g.len() > SUBSET_CAP {
        return Err(QbpError::TooManyVertices { count: g.len(), cap: SUBSET_CAP });
    }
    let reg = state.registry().clone();
    let vlabels = g.vertex_refs();
    let full_idx = reg.resolve(&vlabels)?;
    if full_idx != state.support() {
        return Err(QbpError::InvalidInput("state support must equal the graph's vertex set".into()));
    }
    let e = state.eigh()?;
    let lmax = e.max_abs();
    let lmin = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    if lmin <= Tolerances::default().supp * lmax {
        return Err(QbpError::NotStrictlyPositive(lmin));
    }
    let h = state.with_matrix(e.rebuild(f64::ln));
    let anchors: Vec<Vec<faer::c64>> = vlabels
        .iter()
        .map(|v| {
            let d = reg.dim_of(v).unwrap();
            match anchor.get(*v) {
                Some(a) => {
                    let n: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                    a.iter().map(|z| z / n).collect()
                }
                None => (0..d).map(|i| faer::c64::new(if i == 0 { 1.0 } else { 0.0 }, 0.0)).collect(),
            }
        })
        .collect();
    let nv = g.len();
    let count = 1usize << nv;
    // J_U on U
    let mut j_ops: Vec<LabeledOperator> = Vec::with_capacity(count);
    for mask in 0..count as u64 {
        let outside: Vec<usize> = (0..nv).filter(|i| mask >> i & 1 == 0).collect();
        let labels: Vec<&str> = outside.iter().map(|&i| vlabels[i]).collect();
        let states: Vec<Vec<faer::c64>> = outside.iter().map(|&i| anchors[i].clone()).collect();
        j_ops.push(h.contract(&labels, &states)?);
    }
    let log_scalar = j_ops[0].trace();
    let mut terms = Vec::with_capacity(count);
    let mut max_nonclique = 0.0_f64;
    let mut zero_res = 0.0_f64;
    for mask in 1..count as u64 {
        let u_labels = g.labels_of_mask(mask);
        let u_refs: Vec<&str> = u_labels.iter().map(String::as_str).collect();
        let mut k = LabeledOperator::from_parts(&reg, reg.resolve(&u_refs)?, linalg::zeros(reg.dim_product(&reg.resolve(&u_refs)?)));
        // subsets W of U
        let mut w = mask;
        loop {
            let sign = if (mask & !w).count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            k = k.add(&j_ops[w as usize].embed(&u_refs)?.scaled(sign))?;
            if w == 0 {
                break;
            }
            w = (w - 1) & mask;
        }
        let k = k.herm_part();
        for &lab in &u_refs {
            let vi = g.index(lab)?;
            let z = k.contract(&[lab], &[anchors[vi].clone()])?;
            zero_res = zero_res.max(z.fro_norm());
        }
        let is_clique = is_clique_mask(g, mask);
        let k_norm = k.fro_norm();
        if !is_clique {
            max_nonclique = max_nonclique.max(k_norm);
        }
        let sigma = k.exp()?;
        terms.push(MobiusTerm { subset: u_labels, is_clique, k, k_norm, sigma });
    }
    let sigmas: Vec<LabeledOperator> = terms.iter().map(|t| t.sigma.clone()).collect();
    let rec = odot_all(&sigmas)?.embed(&vlabels)?.scaled(log_scalar.exp());
    let reconstruction_distance = rec.trace_distance(state)?;
    Ok(HcDecomposition { terms, log_scalar, max_nonclique_norm: max_nonclique, reconstruction_distance, zero_lemma_residual: zero_res })
}

/// Tree network with `μ_v = ρ_v` and `ν_{u:v} = ρ^{(n)}_{u:v}`.
pub fn tree_bifactorize(state: &LabeledOperator, g: &Graph, order: Order, threshold: f64) -> Result<BifactorNetwork> {
    if !g.is_tree() {
        return Err(QbpError::NotATree);
    }
    let report = local_markov_report(state, g, threshold, g.len() > SUBSET_CAP)?;
    if !report.is_markov {
        return Err(QbpError::NotMarkov(report.max_cmi));
    }
    let mut mu = BTreeMap::new();
    for v in g.vertices() {
        mu.insert(v.clone(), state.reduce_to(&[v])?);
    }
    let mut nu = BTreeMap::new();
    for (a, b) in g.edges() {
        nu.insert((a.clone(), b.clone()), mutual_density(state, &[&a], &[&b], order)?);
    }
    BifactorNetwork::new(Arc::clone(state.registry()), g.clone(), order, mu, nu)
}

/// Left-to-right `⋆ⁿ` chain of `ρ_{v|pa(v)}` along the ancestral ordering.
pub fn bayes_chain_reconstruct(state: &LabeledOperator, dag: &Dag, n: u32) -> Result<LabeledOperator> {
    let order = dag.ancestral_order()?;
    let mut acc: Option<LabeledOperator> = None;
    for v in &order {
        let pa = dag.parents(v);
        let pa_refs: Vec<&str> = pa.iter().map(String::as_str).collect();
        let c = conditional_density(state, &[v.as_str()], &pa_refs, Order::Finite(n))?;
        acc = Some(match acc {
            None => c,
            Some(a) => star_n(&a, &c, n)?,
        });
    }
    acc.ok_or_else(|| QbpError::InvalidInput("empty DAG".into()))
}
