//! Brute-force ground truth and the named example states.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::c64;
use rand::Rng;

use crate::error::{QbpError, Result};
use crate::graphical::Graph;
use crate::linalg::{self, CMat};
use crate::network::{edge_name, rehome, BifactorNetwork, MeasurementAssignment, ASSEMBLY_CAP};
use crate::operator_core::{star_n, LabeledOperator, Order, SystemRegistry};
use crate::pauli;
use crate::qbp_engine::Target;
use crate::rng::{random_positive, random_unitary, seeded};

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn target_systems(net: &BifactorNetwork, t: &Target) -> Result<Vec<String>> {
    Ok(match t {
        Target::Vertex(v) => net.systems(v)?.to_vec(),
        Target::Edge(a, b) => {
            if !net.graph().has_edge(a, b) {
                return Err(QbpError::InvalidInput(format!("{} is not an edge", edge_name(a, b))));
            }
            let mut s = net.systems(a)?.to_vec();
            s.extend(net.systems(b)?.iter().cloned());
            s
        }
    })
}

/// Every vertex and every edge of the network.
pub fn all_targets(net: &BifactorNetwork) -> Vec<Target> {
    let mut t: Vec<Target> = net.graph().vertices().iter().map(|v| Target::Vertex(v.clone())).collect();
    t.extend(net.graph().edges().into_iter().map(|(a, b)| Target::Edge(a, b)));
    t
}

fn reduce_targets(net: &BifactorNetwork, state: &LabeledOperator, targets: &[Target]) -> Result<BTreeMap<String, LabeledOperator>> {
    let mut out = BTreeMap::new();
    for t in targets {
        let s = target_systems(net, t)?;
        out.insert(t.name(), state.reduce_to(&refs(&s))?.normalized()?);
    }
    Ok(out)
}

/// Assembles the state and traces down to each target.
pub fn exact_marginals(net: &BifactorNetwork, targets: &[Target]) -> Result<BTreeMap<String, LabeledOperator>> {
    let rho = net.assemble_state()?;
    reduce_targets(net, &rho, targets)
}

/// `E^{1/2} ρ E^{1/2} / Tr[E ρ]`, traced down to each target.
pub fn exact_conditional_marginals(
    net: &BifactorNetwork,
    m: &MeasurementAssignment,
    targets: &[Target],
) -> Result<BTreeMap<String, LabeledOperator>> {
    m.validate()?;
    let rho = net.assemble_state()?;
    let full = rho.support().to_vec();
    let dims = rho.dims();
    let mut x = rho.matrix().clone();
    for (v, e) in &m.effects {
        let e = rehome(e, net.registry(), |l| l.to_string())?.embed(&net.system_refs(v)?)?;
        let r = e.sqrt()?;
        let pos: Vec<usize> = r.support().iter().map(|s| full.iter().position(|f| f == s).unwrap()).collect();
        x = linalg::apply_left(r.matrix(), &dims, &pos, &x);
        x = linalg::apply_right(&x, r.matrix(), &dims, &pos);
    }
    let p = linalg::trace(&x).re;
    if p <= 1e-300 {
        return Err(QbpError::ZeroProbability(p));
    }
    let cond = rho.with_matrix(linalg::scale_real(&linalg::herm_part(&x), 1.0 / p));
    reduce_targets(net, &cond, targets)
}

fn chain_labels(n: usize) -> Vec<String> {
    (1..=n).map(|k| k.to_string()).collect()
}

/// `H = Σ_i σ^x_i σ^x_{i+1} + σ^y_i σ^y_{i+1} + σ^z_i σ^z_{i+1}` on sites `1 … N`.
pub fn heisenberg_hamiltonian(n: usize) -> Result<LabeledOperator> {
    if !(2..=12).contains(&n) {
        return Err(QbpError::DimensionCap { dim: 1usize.checked_shl(n as u32).unwrap_or(usize::MAX), cap: ASSEMBLY_CAP });
    }
    let labels = chain_labels(n);
    let reg = SystemRegistry::qubits(&refs(&labels))?;
    let dims = vec![2; n];
    let mut h = linalg::zeros(1 << n);
    for i in 0..n - 1 {
        h = &h + &linalg::embed_matrix(&pauli::heisenberg_pair(), &dims, &[i, i + 1]);
    }
    LabeledOperator::new(&reg, &refs(&labels), h)
}

/// `exp(−βH)/Z` for the Heisenberg chain.
pub fn heisenberg_gibbs(n: usize, beta: f64) -> Result<LabeledOperator> {
    if beta < 0.0 || !beta.is_finite() {
        return Err(QbpError::InvalidInput(format!("beta must be nonnegative, got {beta}")));
    }
    heisenberg_hamiltonian(n)?.scaled(-beta).exp()?.normalized()
}

/// Order-∞ network with `μ = I` and `ν_{i,i+1} = exp(−β h_{i,i+1})`; its state is the Gibbs state.
pub fn heisenberg_network(n: usize, beta: f64) -> Result<BifactorNetwork> {
    let labels = chain_labels(n);
    let reg = SystemRegistry::qubits(&refs(&labels))?;
    let g = Graph::path(&refs(&labels))?;
    let mut mu = BTreeMap::new();
    for l in &labels {
        mu.insert(l.clone(), LabeledOperator::identity(&reg, &[l])?);
    }
    let mut nu = BTreeMap::new();
    for w in labels.windows(2) {
        let h = LabeledOperator::new(&reg, &[&w[0], &w[1]], pauli::heisenberg_pair())?;
        nu.insert((w[0].clone(), w[1].clone()), h.scaled(-beta).exp()?);
    }
    BifactorNetwork::new(reg, g, Order::Infinite, mu, nu)
}

/// Four-qubit state on `U, XL, XR, W` that satisfies the fourth conditional
/// independence identity without being Markov.
pub fn notmarkov_counterexample(n: u32, eps: f64) -> Result<LabeledOperator> {
    if !(eps > 0.0 && eps < 1.0) || n == 0 {
        return Err(QbpError::InvalidInput(format!("need n ≥ 1 and 0 < eps < 1, got n={n}, eps={eps}")));
    }
    let reg = SystemRegistry::qubits(&["U", "XL", "XR", "W"])?;
    let minus = pauli::singlet();
    let plus = &linalg::identity(4) - &minus;
    let rho_x = &linalg::scale_real(&minus, 1.0 - eps) + &linalg::scale_real(&plus, eps / 3.0);
    let rho_x = LabeledOperator::new(&reg, &["XL", "XR"], rho_x)?;
    let pu = LabeledOperator::new(&reg, &["U", "XL"], minus.clone())?;
    let pw = LabeledOperator::new(&reg, &["XR", "W"], minus)?;
    star_n(&rho_x, &pu.tensor(&pw)?, n)?.herm_part().normalized()
}

/// Direct-sum structure of every vertex of a tree: `blocks[u][j]` lists the
/// factor dimensions of block `j`, one per incident edge (neighbor order)
/// followed by one local factor.
#[derive(Clone, Debug)]
pub struct BlockSpec {
    pub blocks: BTreeMap<String, Vec<Vec<usize>>>,
}

impl BlockSpec {
    /// One block per vertex with everything in the local factor; gives product states.
    pub fn trivial(tree: &Graph, dims: &BTreeMap<String, usize>) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for v in tree.vertices() {
            let deg = tree.neighbor_labels(v)?.len();
            let mut f = vec![1; deg + 1];
            f[deg] = dims[v];
            blocks.insert(v.clone(), vec![f]);
        }
        Ok(BlockSpec { blocks })
    }

    /// Random compositions of each dimension into at most three blocks, with
    /// the prime factors of each block scattered over its slots.
    pub fn random(tree: &Graph, dims: &BTreeMap<String, usize>, rng: &mut impl Rng) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for v in tree.vertices() {
            let d = dims[v];
            let deg = tree.neighbor_labels(v)?.len();
            let nb = rng.gen_range(1..=d.min(3));
            let mut cuts: Vec<usize> = Vec::new();
            while cuts.len() < nb - 1 {
                let c = rng.gen_range(1..d);
                if !cuts.contains(&c) {
                    cuts.push(c);
                }
            }
            cuts.sort_unstable();
            cuts.push(d);
            let mut prev = 0;
            let mut bl = Vec::new();
            for c in cuts {
                let mut f = vec![1; deg + 1];
                let mut p = c - prev;
                let mut q = 2;
                while p > 1 {
                    while p % q == 0 {
                        f[rng.gen_range(0..=deg)] *= q;
                        p /= q;
                    }
                    q += 1;
                }
                bl.push(f);
                prev = c;
            }
            blocks.insert(v.clone(), bl);
        }
        Ok(BlockSpec { blocks })
    }

    fn validate(&self, tree: &Graph, dims: &BTreeMap<String, usize>) -> Result<()> {
        for v in tree.vertices() {
            let deg = tree.neighbor_labels(v)?.len();
            let bl = self.blocks.get(v).ok_or_else(|| QbpError::InconsistentBlocks(format!("no blocks for {v}")))?;
            if bl.is_empty() || bl.iter().any(|f| f.len() != deg + 1 || f.contains(&0)) {
                return Err(QbpError::InconsistentBlocks(format!("bad factor list for {v}")));
            }
            let total: usize = bl.iter().map(|f| f.iter().product::<usize>()).sum();
            if Some(&total) != dims.get(v) {
                return Err(QbpError::InconsistentBlocks(format!("blocks of {v} sum to {total}")));
            }
        }
        Ok(())
    }
}

fn random_density_full(d: usize, rng: &mut impl Rng) -> CMat {
    let p = random_positive(d, 0.05, rng);
    let t = linalg::trace(&p).re;
    linalg::scale_real(&p, 1.0 / t)
}

/// Full-rank state that is Markov with respect to `tree`: a classical tree
/// distribution over block labels, per-edge entangled factors inside each
/// block configuration, and random local unitaries.
pub fn random_markov_tree_state(
    tree: &Graph,
    dims: &BTreeMap<String, usize>,
    spec: &BlockSpec,
    seed: u64,
) -> Result<LabeledOperator> {
    if !tree.is_tree() {
        return Err(QbpError::NotATree);
    }
    spec.validate(tree, dims)?;
    let verts = tree.vertices().to_vec();
    let vdims: Vec<usize> = verts.iter().map(|v| dims[v]).collect();
    let total: usize = vdims.iter().product();
    if total > ASSEMBLY_CAP {
        return Err(QbpError::DimensionCap { dim: total, cap: ASSEMBLY_CAP });
    }
    let mut rng = seeded(seed);
    let edges = tree.edges();
    let nblocks: Vec<usize> = verts.iter().map(|v| spec.blocks[v].len()).collect();
    let slot = |v: &str, w: &str| -> usize { tree.neighbor_labels(v).unwrap().iter().position(|x| x == w).unwrap() };

    let weight_v: Vec<Vec<f64>> = nblocks.iter().map(|&b| (0..b).map(|_| rng.gen_range(0.2..1.2)).collect()).collect();
    let mut weight_e = Vec::new();
    let mut sigma = Vec::new();
    for (a, b) in &edges {
        let (ia, ib) = (tree.index(a)?, tree.index(b)?);
        let (sa, sb) = (slot(a, b), slot(b, a));
        let mut w = vec![vec![0.0; nblocks[ib]]; nblocks[ia]];
        let mut s = vec![vec![linalg::zeros(0); nblocks[ib]]; nblocks[ia]];
        for ja in 0..nblocks[ia] {
            for jb in 0..nblocks[ib] {
                w[ja][jb] = rng.gen_range(0.2..1.2);
                let d = spec.blocks[a][ja][sa] * spec.blocks[b][jb][sb];
                s[ja][jb] = random_density_full(d, &mut rng);
            }
        }
        weight_e.push(w);
        sigma.push(s);
    }
    let tau: Vec<Vec<CMat>> = verts
        .iter()
        .map(|v| {
            let deg = tree.neighbor_labels(v).unwrap().len();
            spec.blocks[v].iter().map(|f| random_density_full(f[deg], &mut rng)).collect()
        })
        .collect();
    let unitaries: Vec<CMat> = vdims.iter().map(|&d| random_unitary(d, &mut rng)).collect();

    let mut rho = linalg::zeros(total);
    let mut config = vec![0usize; verts.len()];
    let mut z = 0.0;
    loop {
        let mut p: f64 = config.iter().enumerate().map(|(i, &j)| weight_v[i][j]).product();
        for (k, (a, b)) in edges.iter().enumerate() {
            p *= weight_e[k][config[tree.index(a)?]][config[tree.index(b)?]];
        }
        z += p;
        // factors in edge-major order, then local factors
        let mut m = linalg::identity(1);
        let mut fdims = Vec::new();
        let mut owner = Vec::new();
        for (k, (a, b)) in edges.iter().enumerate() {
            let (ia, ib) = (tree.index(a)?, tree.index(b)?);
            m = linalg::kron(&m, &sigma[k][config[ia]][config[ib]]);
            fdims.push(spec.blocks[a][config[ia]][slot(a, b)]);
            owner.push((ia, slot(a, b)));
            fdims.push(spec.blocks[b][config[ib]][slot(b, a)]);
            owner.push((ib, slot(b, a)));
        }
        for (i, v) in verts.iter().enumerate() {
            let deg = tree.neighbor_labels(v)?.len();
            m = linalg::kron(&m, &tau[i][config[i]]);
            fdims.push(spec.blocks[v][config[i]][deg]);
            owner.push((i, deg));
        }
        let mut perm: Vec<usize> = (0..owner.len()).collect();
        perm.sort_by_key(|&k| owner[k]);
        let m = linalg::permute_factors(&m, &fdims, &perm);
        // block-local index → global index
        let bdims: Vec<usize> = verts.iter().enumerate().map(|(i, v)| spec.blocks[v][config[i]].iter().product()).collect();
        let offsets: Vec<usize> =
            verts.iter().enumerate().map(|(i, v)| spec.blocks[v][..config[i]].iter().map(|f| f.iter().product::<usize>()).sum()).collect();
        let dc: usize = bdims.iter().product();
        let mut gmap = vec![0usize; dc];
        for (a, g) in gmap.iter_mut().enumerate() {
            let mut rem = a;
            let mut digits = vec![0; verts.len()];
            for i in (0..verts.len()).rev() {
                digits[i] = rem % bdims[i] + offsets[i];
                rem /= bdims[i];
            }
            *g = digits.iter().zip(&vdims).fold(0, |acc, (&d, &n)| acc * n + d);
        }
        for a in 0..dc {
            for b in 0..dc {
                rho[(gmap[a], gmap[b])] += m[(a, b)] * c64::new(p, 0.0);
            }
        }
        let mut i = verts.len();
        loop {
            if i == 0 {
                break;
            }
            i -= 1;
            config[i] += 1;
            if config[i] < nblocks[i] {
                break;
            }
            config[i] = 0;
            if i == 0 {
                i = usize::MAX;
                break;
            }
        }
        if i == usize::MAX || verts.is_empty() {
            break;
        }
    }
    for (i, u) in unitaries.iter().enumerate() {
        rho = linalg::apply_left(u, &vdims, &[i], &rho);
        rho = linalg::apply_right(&rho, &linalg::dagger(u), &vdims, &[i]);
    }
    let entries: Vec<(String, usize)> = verts.iter().map(|v| (v.clone(), dims[v])).collect();
    let reg = SystemRegistry::new(entries)?;
    let op = LabeledOperator::new_unchecked(&reg, &refs(&verts), linalg::scale_real(&linalg::herm_part(&rho), 1.0 / z))?;
    op.normalized()
}

/// Random tree on `n` vertices labelled `v0 … v{n−1}`; each vertex attaches to an earlier one.
pub fn random_tree(n: usize, rng: &mut impl Rng) -> Result<Graph> {
    let labels: Vec<String> = (0..n).map(|i| format!("v{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        let p = rng.gen_range(0..i);
        edges.push((labels[p].as_str(), labels[i].as_str()));
    }
    Graph::new(&refs(&labels), &edges)
}

fn block_projectors(d: usize, blocks: &[Vec<usize>], u: &CMat) -> Vec<CMat> {
    blocks
        .iter()
        .map(|b| {
            let mut diag = vec![0.0; d];
            for &i in b {
                diag[i] = 1.0;
            }
            &(u * &linalg::diag_real(&diag)) * &linalg::dagger(u)
        })
        .collect()
}

fn random_partition(d: usize, rng: &mut impl Rng) -> Vec<Vec<usize>> {
    let mut parts: Vec<Vec<usize>> = Vec::new();
    for i in 0..d {
        let k = rng.gen_range(0..=parts.len());
        if k == parts.len() {
            parts.push(vec![i]);
        } else {
            parts[k].push(i);
        }
    }
    parts
}

/// Random network with positive definite operators whose `ν` pairwise commute.
/// Each vertex carries a random orthogonal decomposition; an edge is
/// `Σ_i P_i ⊗ A_i` with `P_i` from the endpoint nearer the first vertex and
/// `A_i` block diagonal in the other endpoint's decomposition.
pub fn random_commuting_network(graph: &Graph, dims: &BTreeMap<String, usize>, order: Order, seed: u64) -> Result<BifactorNetwork> {
    if !graph.is_tree() {
        return Err(QbpError::NotATree);
    }
    let mut rng = seeded(seed);
    let verts = graph.vertices().to_vec();
    let entries: Vec<(String, usize)> = verts.iter().map(|v| (v.clone(), dims[v])).collect();
    let reg = SystemRegistry::new(entries)?;
    let mut parts = BTreeMap::new();
    let mut projs = BTreeMap::new();
    for v in &verts {
        let d = dims[v];
        let p = random_partition(d, &mut rng);
        let u = random_unitary(d, &mut rng);
        projs.insert(v.clone(), block_projectors(d, &p, &u));
        parts.insert(v.clone(), p);
    }
    let mut mu = BTreeMap::new();
    for v in &verts {
        let m = random_positive(dims[v], 0.1, &mut rng);
        mu.insert(v.clone(), LabeledOperator::new(&reg, &[v], linalg::herm_part(&m))?);
    }
    // orient edges away from the first vertex
    let root = &verts[0];
    let mut parent: BTreeMap<String, String> = BTreeMap::new();
    let mut stack = vec![root.clone()];
    let mut seen = vec![root.clone()];
    while let Some(u) = stack.pop() {
        for w in graph.neighbor_labels(&u)? {
            if !seen.contains(&w) {
                parent.insert(w.clone(), u.clone());
                seen.push(w.clone());
                stack.push(w);
            }
        }
    }
    let mut nu = BTreeMap::new();
    for (a, b) in graph.edges() {
        let (p, c) = if parent.get(&b) == Some(&a) { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        let dc = dims[&c];
        let mut m = linalg::zeros(dims[&p] * dc);
        for pi in &projs[&p] {
            let mut a_i = linalg::zeros(dc);
            for pk in &projs[&c] {
                let r = random_positive(dc, 0.1, &mut rng);
                a_i = &a_i + &(&(pk * &r) * pk);
            }
            m = &m + &linalg::kron(pi, &linalg::herm_part(&a_i));
        }
        let op = LabeledOperator::new_unchecked(&reg, &[&p, &c], linalg::herm_part(&m))?;
        nu.insert((a, b), op);
    }
    BifactorNetwork::new(reg, graph.clone(), order, mu, nu)
}

/// Classical pairwise model `P(x) ∝ Π ψ_v(x_v) Π ψ_{uv}(x_u, x_v)`.
#[derive(Clone, Debug)]
pub struct ClassicalModel {
    pub graph: Graph,
    pub dims: Vec<usize>,
    pub psi_v: Vec<Vec<f64>>,
    /// Keyed by canonical edge; `table[x_a][x_b]`.
    pub psi_e: BTreeMap<(String, String), Vec<Vec<f64>>>,
}

impl ClassicalModel {
    pub fn new(
        graph: Graph,
        dims: Vec<usize>,
        psi_v: Vec<Vec<f64>>,
        psi_e: BTreeMap<(String, String), Vec<Vec<f64>>>,
    ) -> Result<Self> {
        for (i, t) in psi_v.iter().enumerate() {
            if t.len() != dims[i] || t.iter().any(|&x| !(x > 0.0)) {
                return Err(QbpError::NonPositivePsi(format!("psi[{}]", graph.vertices()[i])));
            }
        }
        for (a, b) in graph.edges() {
            let t = psi_e.get(&(a.clone(), b.clone())).ok_or_else(|| QbpError::NonPositivePsi(format!("missing psi[{}]", edge_name(&a, &b))))?;
            if t.iter().flatten().any(|&x| !(x > 0.0)) {
                return Err(QbpError::NonPositivePsi(format!("psi[{}]", edge_name(&a, &b))));
            }
        }
        Ok(ClassicalModel { graph, dims, psi_v, psi_e })
    }

    pub fn random(graph: Graph, dims: Vec<usize>, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let psi_v: Vec<Vec<f64>> = dims.iter().map(|&d| (0..d).map(|_| rng.gen_range(0.1..2.0)).collect()).collect();
        let mut psi_e = BTreeMap::new();
        for (a, b) in graph.edges() {
            let (da, db) = (dims[graph.index(&a)?], dims[graph.index(&b)?]);
            let t: Vec<Vec<f64>> = (0..da).map(|_| (0..db).map(|_| rng.gen_range(0.1..2.0)).collect()).collect();
            psi_e.insert((a, b), t);
        }
        Self::new(graph, dims, psi_v, psi_e)
    }

    fn table(&self, u: usize, v: usize) -> impl Fn(usize, usize) -> f64 + '_ {
        let (a, b) = (self.graph.vertices()[u].clone(), self.graph.vertices()[v].clone());
        let (t, flip) = match self.psi_e.get(&(a.clone(), b.clone())) {
            Some(t) => (t, false),
            None => (&self.psi_e[&(b, a)], true),
        };
        move |xu, xv| if flip { t[xv][xu] } else { t[xu][xv] }
    }

    /// Diagonal network with `μ_v = diag ψ_v` and `ν_{uv} = diag ψ_{uv}`.
    pub fn network(&self, order: Order) -> Result<BifactorNetwork> {
        let verts = self.graph.vertices();
        let entries: Vec<(String, usize)> = verts.iter().cloned().zip(self.dims.iter().copied()).collect();
        let reg: Arc<SystemRegistry> = SystemRegistry::new(entries)?;
        let mut mu = BTreeMap::new();
        for (i, v) in verts.iter().enumerate() {
            mu.insert(v.clone(), LabeledOperator::diagonal(&reg, &[v], &self.psi_v[i])?);
        }
        let mut nu = BTreeMap::new();
        for ((a, b), t) in &self.psi_e {
            let diag: Vec<f64> = t.iter().flatten().copied().collect();
            nu.insert((a.clone(), b.clone()), LabeledOperator::diagonal(&reg, &[a, b], &diag)?);
        }
        BifactorNetwork::new(reg, self.graph.clone(), order, mu, nu)
    }

    /// Flooding sum-product with normalized messages, `iters` rounds.
    pub fn bp(&self, iters: usize) -> Result<(Vec<Vec<f64>>, BTreeMap<(String, String), Vec<Vec<f64>>>)> {
        let n = self.graph.len();
        let nbrs: Vec<Vec<usize>> = (0..n).map(|i| self.graph.adjacency(i).to_vec()).collect();
        let mut msg: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();
        for u in 0..n {
            for &v in &nbrs[u] {
                msg.insert((u, v), vec![1.0 / self.dims[v] as f64; self.dims[v]]);
            }
        }
        for _ in 0..iters {
            let mut next = BTreeMap::new();
            for &(u, v) in msg.keys() {
                let f = self.table(u, v);
                let mut out = vec![0.0; self.dims[v]];
                for xu in 0..self.dims[u] {
                    let mut w = self.psi_v[u][xu];
                    for &k in &nbrs[u] {
                        if k != v {
                            w *= msg[&(k, u)][xu];
                        }
                    }
                    for (xv, o) in out.iter_mut().enumerate() {
                        *o += w * f(xu, xv);
                    }
                }
                let s: f64 = out.iter().sum();
                next.insert((u, v), out.into_iter().map(|x| x / s).collect::<Vec<f64>>());
            }
            msg = next;
        }
        let belief = |u: usize, skip: Option<usize>| -> Vec<f64> {
            (0..self.dims[u])
                .map(|x| {
                    let mut w = self.psi_v[u][x];
                    for &k in &nbrs[u] {
                        if Some(k) != skip {
                            w *= msg[&(k, u)][x];
                        }
                    }
                    w
                })
                .collect()
        };
        let mut vb = Vec::new();
        for u in 0..n {
            let b = belief(u, None);
            let s: f64 = b.iter().sum();
            vb.push(b.into_iter().map(|x| x / s).collect());
        }
        let mut eb = BTreeMap::new();
        for (a, b) in self.graph.edges() {
            let (ia, ib) = (self.graph.index(&a)?, self.graph.index(&b)?);
            let (ba, bb) = (belief(ia, Some(ib)), belief(ib, Some(ia)));
            let f = self.table(ia, ib);
            let mut t: Vec<Vec<f64>> = (0..self.dims[ia]).map(|x| (0..self.dims[ib]).map(|y| ba[x] * bb[y] * f(x, y)).collect()).collect();
            let s: f64 = t.iter().flatten().sum();
            t.iter_mut().flatten().for_each(|x| *x /= s);
            eb.insert((a, b), t);
        }
        Ok((vb, eb))
    }

    /// Vertex marginals by enumerating every configuration.
    pub fn brute_force_marginals(&self) -> Vec<Vec<f64>> {
        let n = self.graph.len();
        let mut out: Vec<Vec<f64>> = self.dims.iter().map(|&d| vec![0.0; d]).collect();
        let total: usize = self.dims.iter().product();
        let edges: Vec<(usize, usize)> = self.graph.edge_indices().to_vec();
        let mut x = vec![0usize; n];
        for idx in 0..total {
            let mut rem = idx;
            for i in (0..n).rev() {
                x[i] = rem % self.dims[i];
                rem /= self.dims[i];
            }
            let mut p: f64 = (0..n).map(|i| self.psi_v[i][x[i]]).product();
            for &(u, v) in &edges {
                p *= self.table(u, v)(x[u], x[v]);
            }
            for i in 0..n {
                out[i][x[i]] += p;
            }
        }
        for m in &mut out {
            let s: f64 = m.iter().sum();
            m.iter_mut().for_each(|x| *x /= s);
        }
        out
    }
}

/// Diagonal bifactor network for a classical pairwise model.
pub fn classical_bifactor(model: &ClassicalModel, order: Order) -> Result<BifactorNetwork> {
    model.network(order)
}
