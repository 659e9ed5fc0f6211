//! The QBP^(n) iteration: messages, beliefs, convergence, inference with
//! measurements, and the sliding-window and replica execution modes.

use std::collections::BTreeMap;

use faer::c64;
use serde::Serialize;

use crate::error::{QbpError, Result};
use crate::linalg::{self, CMat, Eigh};
use crate::network::{condition_on_measurement, edge_name, replica_lift, BifactorNetwork, MeasurementAssignment, ASSEMBLY_CAP};
use crate::operator_core::{odot_all, product, star_n, star_n_with, LabeledOperator, Order, Tolerances};

pub type DirectedEdge = (String, String);

#[derive(Clone, Debug)]
pub struct MessageSet {
    /// `m_{u→v}` keyed by `(u, v)`, embedded on all subsystems of `v`, unit trace.
    pub messages: BTreeMap<DirectedEdge, LabeledOperator>,
    pub iteration: usize,
}

impl MessageSet {
    pub fn get(&self, from: &str, to: &str) -> Result<&LabeledOperator> {
        self.messages
            .get(&(from.to_string(), to.to_string()))
            .ok_or_else(|| QbpError::InvalidInput(format!("no message {from}->{to}")))
    }
}

#[derive(Clone, Debug, Default)]
pub struct BeliefSet {
    pub vertex: BTreeMap<String, LabeledOperator>,
    /// Keyed by the graph's canonical edge orientation.
    pub edge: BTreeMap<(String, String), LabeledOperator>,
}

impl BeliefSet {
    pub fn edge_belief(&self, a: &str, b: &str) -> Option<&LabeledOperator> {
        self.edge.get(&(a.to_string(), b.to_string())).or_else(|| self.edge.get(&(b.to_string(), a.to_string())))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationDelta {
    pub iteration: usize,
    pub belief_delta: f64,
    pub message_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TraceEntry {
    pub iter: usize,
    pub edge: String,
    pub trace_delta: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub iterations_run: usize,
    pub converged: bool,
    pub max_belief_delta: f64,
    pub max_message_delta: f64,
    pub history: Vec<IterationDelta>,
    /// Set when the graph has cycles; no exactness is claimed then.
    pub heuristic: bool,
    /// Largest commutator among incoming messages and edge operators at a
    /// vertex (finite order only).
    pub message_commutator: Option<f64>,
    /// Iteration after which each directed message stopped changing (within `tol`).
    pub stabilized_at: BTreeMap<String, usize>,
    pub trace: Vec<TraceEntry>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Defaults to `4·diameter` on trees and 100 otherwise.
    pub max_iters: Option<usize>,
    pub tol: f64,
    pub edge_beliefs: bool,
    pub trace: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions { max_iters: None, tol: Tolerances::default().conv, edge_beliefs: true, trace: false }
    }
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

fn require_valid(net: &BifactorNetwork) -> Result<()> {
    let d = net.validate();
    if d.passed {
        Ok(())
    } else {
        Err(QbpError::ValidationFailed(d.failures.join("; ")))
    }
}

fn normalize_message(op: LabeledOperator) -> Result<LabeledOperator> {
    let t = op.trace();
    if t.abs() < 1e-300 {
        return Err(QbpError::Underflow(t));
    }
    Ok(op.scaled(1.0 / t))
}

/// `m_{u→v}(0) = I_v / dim(v)` on every directed edge.
pub fn init_messages(net: &BifactorNetwork) -> Result<MessageSet> {
    require_valid(net)?;
    let mut messages = BTreeMap::new();
    for (a, b) in net.graph().edges() {
        for (u, v) in [(&a, &b), (&b, &a)] {
            messages.insert((u.clone(), v.clone()), LabeledOperator::maximally_mixed(net.registry(), &net.system_refs(v)?)?);
        }
    }
    Ok(MessageSet { messages, iteration: 0 })
}

/// Incoming messages into `u`, in neighbor order, skipping `exclude`.
fn incoming<'a>(net: &BifactorNetwork, ms: &'a MessageSet, u: &str, exclude: Option<&str>) -> Result<Vec<&'a LabeledOperator>> {
    let mut out = Vec::new();
    for w in net.graph().neighbor_labels(u)? {
        if Some(w.as_str()) != exclude {
            out.push(ms.get(&w, u)?);
        }
    }
    Ok(out)
}

/// Ordinary product of operators on `u`'s subsystems, with its spectrum
/// when there is at least one factor.
struct MessageProduct {
    op: LabeledOperator,
    eig: Option<Eigh>,
}

fn message_product(net: &BifactorNetwork, u: &str, msgs: &[&LabeledOperator]) -> Result<MessageProduct> {
    let mut p = LabeledOperator::identity(net.registry(), &net.system_refs(u)?)?;
    if msgs.is_empty() {
        return Ok(MessageProduct { op: p, eig: None });
    }
    let mut scale = 1.0;
    for m in msgs {
        p = p.mul(m)?;
        scale *= m.fro_norm();
    }
    let p = p.herm_part();
    let e = p.eigh()?;
    let min = e.values.iter().copied().fold(f64::INFINITY, f64::min);
    // negative eigenvalues at roundoff level relative to the factors are clipped
    if msgs.len() > 1 && min < 0.0 && min > -1e-12 * scale {
        let values: Vec<f64> = e.values.iter().map(|x| x.max(0.0)).collect();
        let op = p.with_matrix(linalg::rebuild_from(&e.vectors, &values));
        return Ok(MessageProduct { op, eig: Some(Eigh { values, vectors: e.vectors }) });
    }
    Ok(MessageProduct { op: p, eig: Some(e) })
}

fn compute_message(net: &BifactorNetwork, ms: &MessageSet, u: &str, v: &str) -> Result<LabeledOperator> {
    let msgs = incoming(net, ms, u, Some(v))?;
    let mu = net.mu(u)?;
    let nu = net.nu(u, v)?;
    let usys = net.registry().resolve(&net.system_refs(u)?)?;
    let raw = match net.order() {
        Order::Finite(1) => {
            // Tr_u[μ ⋆ (M ⋆ ν)] = Tr_u[(M^{1/2} μ M^{1/2} ⊗ I) ν]
            let m = message_product(net, u, &msgs)?;
            let k = star_n_with(&m.op, m.eig.as_ref(), mu, None, 1)?;
            let shared: Vec<usize> = nu.support().iter().copied().filter(|s| usys.contains(s)).collect();
            let kr = k.reduce_to_indices(&shared)?;
            kr.mul(nu)?.partial_trace_indices(&shared)?
        }
        Order::Finite(n) => {
            let m = message_product(net, u, &msgs)?;
            let inner = star_n_with(&m.op, m.eig.as_ref(), nu, None, n)?;
            let outer = star_n(mu, &inner, n)?;
            let traced: Vec<usize> = outer.support().iter().copied().filter(|s| usys.contains(s)).collect();
            outer.partial_trace_indices(&traced)?
        }
        Order::Infinite => {
            let mut ops = vec![mu.clone(), nu.clone()];
            ops.extend(msgs.into_iter().cloned());
            let all = odot_all(&ops)?;
            let traced: Vec<usize> = all.support().iter().copied().filter(|s| usys.contains(s)).collect();
            all.partial_trace_indices(&traced)?
        }
    };
    normalize_message(raw.herm_part().embed(&net.system_refs(v)?)?)
}

/// One synchronous flooding update of every directed message.
pub fn update_messages(net: &BifactorNetwork, ms: &MessageSet) -> Result<MessageSet> {
    let mut messages = BTreeMap::new();
    for (u, v) in ms.messages.keys() {
        messages.insert((u.clone(), v.clone()), compute_message(net, ms, u, v)?);
    }
    Ok(MessageSet { messages, iteration: ms.iteration + 1 })
}

fn vertex_belief_with(net: &BifactorNetwork, ms: &MessageSet, u: &str, mu: &LabeledOperator) -> Result<LabeledOperator> {
    let msgs = incoming(net, ms, u, None)?;
    let b = match net.order() {
        Order::Finite(n) => {
            let m = message_product(net, u, &msgs)?;
            star_n_with(mu, None, &m.op, m.eig.as_ref(), n)?
        }
        Order::Infinite => {
            let mut ops = vec![mu.clone()];
            ops.extend(msgs.into_iter().cloned());
            odot_all(&ops)?
        }
    };
    b.embed(&net.system_refs(u)?)?.normalized()
}

fn edge_belief_with(
    net: &BifactorNetwork,
    ms: &MessageSet,
    u: &str,
    v: &str,
    mu_u: &LabeledOperator,
    mu_v: &LabeledOperator,
) -> Result<LabeledOperator> {
    let mu_msgs = incoming(net, ms, u, Some(v))?;
    let mv_msgs = incoming(net, ms, v, Some(u))?;
    let nu = net.nu(u, v)?;
    let mut target: Vec<String> = net.systems(u)?.to_vec();
    target.extend(net.systems(v)?.iter().cloned());
    let b = match net.order() {
        Order::Finite(n) => {
            let m = message_product(net, u, &mu_msgs)?.op.tensor(&message_product(net, v, &mv_msgs)?.op)?;
            let inner = star_n(&m, nu, n)?;
            star_n(&mu_u.tensor(mu_v)?, &inner, n)?
        }
        Order::Infinite => {
            let mut ops = vec![mu_u.clone(), mu_v.clone(), nu.clone()];
            ops.extend(mu_msgs.into_iter().cloned());
            ops.extend(mv_msgs.into_iter().cloned());
            odot_all(&ops)?
        }
    };
    b.embed(&refs(&target))?.normalized()
}

pub fn compute_vertex_beliefs(net: &BifactorNetwork, ms: &MessageSet) -> Result<BTreeMap<String, LabeledOperator>> {
    let mut out = BTreeMap::new();
    for u in net.graph().vertices() {
        out.insert(u.clone(), vertex_belief_with(net, ms, u, net.mu(u)?)?);
    }
    Ok(out)
}

/// Vertex and edge beliefs from a message set.
pub fn compute_beliefs(net: &BifactorNetwork, ms: &MessageSet) -> Result<BeliefSet> {
    let vertex = compute_vertex_beliefs(net, ms)?;
    let mut edge = BTreeMap::new();
    for (a, b) in net.graph().edges() {
        let e = edge_belief_with(net, ms, &a, &b, net.mu(&a)?, net.mu(&b)?)?;
        edge.insert((a, b), e);
    }
    Ok(BeliefSet { vertex, edge })
}

fn max_delta<K: Ord>(a: &BTreeMap<K, LabeledOperator>, b: &BTreeMap<K, LabeledOperator>) -> Result<f64> {
    let mut d = 0.0_f64;
    for (k, x) in a {
        if let Some(y) = b.get(k) {
            d = d.max(2.0 * x.trace_distance(y)?);
        }
    }
    Ok(d)
}

fn message_commutator(net: &BifactorNetwork, ms: &MessageSet) -> Result<f64> {
    let mut worst = 0.0_f64;
    let rel = |a: &LabeledOperator, b: &LabeledOperator| -> Result<f64> {
        Ok(a.commutator_norm(b)? / (a.fro_norm() * b.fro_norm()).max(f64::MIN_POSITIVE))
    };
    for u in net.graph().vertices() {
        let nb = net.graph().neighbor_labels(u)?;
        for (i, x) in nb.iter().enumerate() {
            let mx = ms.get(x, u)?;
            for y in &nb[i + 1..] {
                worst = worst.max(rel(mx, ms.get(y, u)?)?);
            }
            for v in &nb {
                if v != x {
                    worst = worst.max(rel(net.nu(u, v)?, mx)?);
                }
            }
        }
    }
    Ok(worst)
}

/// Runs exactly `iters` updates and returns the beliefs.
pub fn run_iterations(net: &BifactorNetwork, iters: usize) -> Result<(BeliefSet, MessageSet)> {
    let mut ms = init_messages(net)?;
    for _ in 0..iters {
        ms = update_messages(net, &ms)?;
    }
    Ok((compute_beliefs(net, &ms)?, ms))
}

/// Iterates until beliefs and messages change by at most `tol` in trace norm.
pub fn run(net: &BifactorNetwork, opts: &RunOptions) -> Result<(BeliefSet, ConvergenceReport)> {
    let (beliefs, report, _) = run_with_messages(net, opts)?;
    Ok((beliefs, report))
}

pub fn run_with_messages(net: &BifactorNetwork, opts: &RunOptions) -> Result<(BeliefSet, ConvergenceReport, MessageSet)> {
    let g = net.graph();
    let tree = g.is_tree();
    let max_iters = opts.max_iters.unwrap_or(if tree { 4 * g.diameter().max(1) } else { 100 });
    let mut ms = init_messages(net)?;
    let mut beliefs = compute_vertex_beliefs(net, &ms)?;
    let mut history = Vec::new();
    let mut trace = Vec::new();
    let mut stabilized: BTreeMap<String, usize> = BTreeMap::new();
    let mut converged = ms.messages.is_empty();
    let (mut bd, mut md) = (0.0, 0.0);
    while !converged && ms.iteration < max_iters {
        let next = update_messages(net, &ms)?;
        let nb = compute_vertex_beliefs(net, &next)?;
        bd = max_delta(&beliefs, &nb)?;
        md = 0.0_f64;
        for (k, m) in &next.messages {
            let d = 2.0 * m.trace_distance(&ms.messages[k])?;
            md = md.max(d);
            let name = format!("{}->{}", k.0, k.1);
            if d > opts.tol {
                stabilized.insert(name.clone(), next.iteration);
            } else {
                stabilized.entry(name.clone()).or_insert(0);
            }
            if opts.trace {
                trace.push(TraceEntry { iter: next.iteration, edge: name, trace_delta: d });
            }
        }
        history.push(IterationDelta { iteration: next.iteration, belief_delta: bd, message_delta: md });
        converged = bd <= opts.tol && md <= opts.tol;
        ms = next;
        beliefs = nb;
    }
    let edge = if opts.edge_beliefs {
        let mut edge = BTreeMap::new();
        for (a, b) in g.edges() {
            let e = edge_belief_with(net, &ms, &a, &b, net.mu(&a)?, net.mu(&b)?)?;
            edge.insert((a, b), e);
        }
        edge
    } else {
        BTreeMap::new()
    };
    let message_commutator = match net.order() {
        Order::Finite(_) => Some(message_commutator(net, &ms)?),
        Order::Infinite => None,
    };
    let report = ConvergenceReport {
        iterations_run: ms.iteration,
        converged,
        max_belief_delta: bd,
        max_message_delta: md,
        history,
        heuristic: !tree,
        message_commutator,
        stabilized_at: stabilized,
        trace,
    };
    Ok((BeliefSet { vertex: beliefs, edge }, report, ms))
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum Target {
    Vertex(String),
    Edge(String, String),
}

impl Target {
    pub fn name(&self) -> String {
        match self {
            Target::Vertex(v) => v.clone(),
            Target::Edge(a, b) => edge_name(a, b),
        }
    }

    /// `"u"` or `"u|v"`.
    pub fn parse(s: &str) -> Self {
        match s.split_once('|') {
            Some((a, b)) => Target::Edge(a.to_string(), b.to_string()),
            None => Target::Vertex(s.to_string()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct InferenceResult {
    pub marginals: BTreeMap<String, LabeledOperator>,
    pub report: ConvergenceReport,
}

/// Conditional marginals given per-vertex effects, for order-1 networks.
pub fn infer(net: &BifactorNetwork, m: &MeasurementAssignment, targets: &[Target], opts: &RunOptions) -> Result<InferenceResult> {
    if net.order() != Order::Finite(1) {
        return Err(QbpError::OrderMismatch { expected: "1".into(), found: net.order().to_string() });
    }
    let cond = condition_on_measurement(net, m)?;
    let opts = RunOptions { edge_beliefs: false, ..opts.clone() };
    let (_, report, ms) = run_with_messages(&cond, &opts)?;
    let effect = |v: &str| -> Result<Option<LabeledOperator>> {
        match m.effects.get(v) {
            Some(e) => Ok(Some(crate::network::rehome(e, net.registry(), |l| l.to_string())?.embed(&net.system_refs(v)?)?)),
            None => Ok(None),
        }
    };
    let mut marginals = BTreeMap::new();
    for t in targets {
        let b = match t {
            Target::Vertex(u) => match effect(u)? {
                None => vertex_belief_with(&cond, &ms, u, cond.mu(u)?)?,
                Some(e) => sandwich(&vertex_belief_with(&cond, &ms, u, net.mu(u)?)?, &e)?,
            },
            Target::Edge(a, b) => {
                let (eu, ev) = (effect(a)?, effect(b)?);
                if eu.is_none() && ev.is_none() {
                    edge_belief_with(&cond, &ms, a, b, cond.mu(a)?, cond.mu(b)?)?
                } else {
                    let base = edge_belief_with(&cond, &ms, a, b, net.mu(a)?, net.mu(b)?)?;
                    let e = match (eu, ev) {
                        (Some(x), Some(y)) => x.tensor(&y)?,
                        (Some(x), None) => x,
                        (None, Some(y)) => y,
                        (None, None) => unreachable!(),
                    };
                    sandwich(&base, &e)?
                }
            }
        };
        marginals.insert(t.name(), b);
    }
    Ok(InferenceResult { marginals, report })
}

/// `E^{1/2} B E^{1/2}`, normalized.
fn sandwich(b: &LabeledOperator, e: &LabeledOperator) -> Result<LabeledOperator> {
    let r = e.sqrt()?;
    let out = r.mul(b)?.mul(&r)?.herm_part();
    let t = out.trace();
    if t <= 1e-300 {
        return Err(QbpError::ZeroProbability(t));
    }
    Ok(out.scaled(1.0 / t))
}

#[derive(Clone, Debug, Default)]
pub struct WindowMarginals {
    pub vertex: BTreeMap<String, LabeledOperator>,
    pub edge: BTreeMap<(String, String), LabeledOperator>,
    /// Marginal on each window `v_a … v_{a+ℓ−1}`.
    pub windows: Vec<(Vec<String>, LabeledOperator)>,
}

/// Combines operators with `⋆ⁿ`/`⊙`: `(⊗μ) ⋆ⁿ (Πν)` or `⊙` of everything.
fn combine(order: Order, mus: &[LabeledOperator], nus: &[LabeledOperator], reg_empty: &LabeledOperator) -> Result<LabeledOperator> {
    match order {
        Order::Infinite => {
            let all: Vec<LabeledOperator> = mus.iter().chain(nus.iter()).cloned().collect();
            if all.is_empty() {
                Ok(reg_empty.clone())
            } else {
                odot_all(&all)
            }
        }
        Order::Finite(n) => {
            let mut m = reg_empty.clone();
            for x in mus {
                m = m.tensor(x)?;
            }
            let mut p = reg_empty.clone();
            for x in nus {
                p = p.mul(x)?;
            }
            star_n(&m, &p.herm_part(), n)
        }
    }
}

struct ChainView<'a> {
    net: &'a BifactorNetwork,
    order: Vec<String>,
}

impl ChainView<'_> {
    fn mu(&self, k: usize) -> Result<LabeledOperator> {
        self.net.mu(&self.order[k]).cloned()
    }

    fn nu(&self, k: usize) -> Result<LabeledOperator> {
        self.net.nu(&self.order[k], &self.order[k + 1]).cloned()
    }

    fn systems(&self, range: std::ops::Range<usize>) -> Result<Vec<usize>> {
        let mut s = Vec::new();
        for k in range {
            s.extend(self.net.registry().resolve(&self.net.system_refs(&self.order[k])?)?);
        }
        s.sort_unstable();
        Ok(s)
    }

    fn empty(&self) -> Result<LabeledOperator> {
        LabeledOperator::identity(self.net.registry(), &[])
    }

    fn star(&self, a: &LabeledOperator, b: &LabeledOperator) -> Result<LabeledOperator> {
        Ok(product(a, b, self.net.order())?.herm_part())
    }

    /// Everything left of `v_b` except `μ_b`, on `v_{b−ℓ+1} … v_b` (shorter near the start).
    fn into_vertex(&self, lefts: &[LabeledOperator], l: usize, b: usize) -> Result<LabeledOperator> {
        if b + 1 >= l {
            return Ok(lefts[b + 1 - l].clone());
        }
        let mus: Vec<LabeledOperator> = (0..b).map(|k| self.mu(k)).collect::<Result<_>>()?;
        let nus: Vec<LabeledOperator> = (0..b).map(|k| self.nu(k)).collect::<Result<_>>()?;
        combine(self.net.order(), &mus, &nus, &self.empty()?)?.embed_indices(&self.systems(0..b + 1)?)?.normalized()
    }

    /// `L_0, …, L_{N−ℓ}`; `L_j` lives on `v_{j+1} … v_{j+ℓ}` (0-based `j … j+ℓ−1`)
    /// and carries every `μ` left of its last vertex.
    fn left_messages(&self, l: usize) -> Result<Vec<LabeledOperator>> {
        let n = self.order.len();
        let mus: Vec<LabeledOperator> = (0..l - 1).map(|k| self.mu(k)).collect::<Result<_>>()?;
        let nus: Vec<LabeledOperator> = (0..l - 1).map(|k| self.nu(k)).collect::<Result<_>>()?;
        let l0 = combine(self.net.order(), &mus, &nus, &self.empty()?)?.embed_indices(&self.systems(0..l)?)?;
        let mut out = vec![l0.normalized()?];
        for j in 0..n - l {
            let last = j + l - 1;
            let inner = self.star(&out[j], &self.nu(last)?)?;
            let outer = self.star(&self.mu(last)?, &inner)?;
            let first = self.systems(j..j + 1)?;
            let next = outer.partial_trace_indices(&first)?.embed_indices(&self.systems(j + 1..j + l + 1)?)?;
            out.push(normalize_message(next.herm_part())?);
        }
        Ok(out)
    }
}

/// Window-message recursion along a chain with windows of `ℓ` vertices.
///
/// Every vertex `v_b` gets a joint operator on `v_{b−ℓ+1} … v_{b+ℓ−1}` built
/// from the left window message ending at `v_b`, the mirrored right window
/// message starting at `v_b`, and `μ_b`; marginals are read off from it.
pub fn sliding_window_run(net: &BifactorNetwork, l: usize) -> Result<WindowMarginals> {
    require_valid(net)?;
    let order = net.graph().chain_order()?;
    let n = order.len();
    if l == 0 {
        return Err(QbpError::InvalidInput("window length must be at least 1".into()));
    }
    let l = l.min(n);
    let fwd = ChainView { net, order: order.clone() };
    let span = (2 * l - 1).min(n);
    for a in 0..=n - span {
        let d = net.registry().dim_product(&fwd.systems(a..a + span)?);
        if d > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim: d, cap: ASSEMBLY_CAP });
        }
    }
    let mut rev_order = order.clone();
    rev_order.reverse();
    let bwd = ChainView { net, order: rev_order };
    let lefts = fwd.left_messages(l)?;
    let rights = bwd.left_messages(l)?;
    let mut joints = Vec::with_capacity(n);
    for b in 0..n {
        let left = fwd.into_vertex(&lefts, l, b)?;
        let right = bwd.into_vertex(&rights, l, n - 1 - b)?;
        let lo = (b + 1).saturating_sub(l);
        let hi = (b + l).min(n);
        let j = fwd.star(&fwd.mu(b)?, &fwd.star(&left, &right)?)?;
        joints.push(j.embed_indices(&fwd.systems(lo..hi)?)?.normalized()?);
    }
    let mut out = WindowMarginals::default();
    for a in 0..=n - l {
        let b = a + l - 1;
        let w = joints[b].reduce_to_indices(&fwd.systems(a..b + 1)?)?;
        out.windows.push((order[a..=b].to_vec(), w));
    }
    // near the ends, read from the widest joint that still covers the target
    let centre = |k: usize| if 2 * l - 1 <= n { k.clamp(l - 1, n - l) } else { l - 1 };
    for (k, v) in order.iter().enumerate() {
        out.vertex.insert(v.clone(), joints[centre(k)].reduce_to_indices(&fwd.systems(k..k + 1)?)?);
    }
    for k in 0..n.saturating_sub(1) {
        let (a, b) = (&order[k], &order[k + 1]);
        let key = if net.graph().index(a)? < net.graph().index(b)? { (a.clone(), b.clone()) } else { (b.clone(), a.clone()) };
        let e = if l >= 2 {
            joints[centre(k)].reduce_to_indices(&fwd.systems(k..k + 2)?)?
        } else {
            // ℓ = 1: the usual edge belief with the left and right messages
            let ml = fwd.into_vertex(&lefts, 1, k)?;
            let mr = bwd.into_vertex(&rights, 1, n - 2 - k)?;
            let inner = fwd.star(&ml.tensor(&mr)?, &fwd.nu(k)?)?;
            fwd.star(&fwd.mu(k)?.tensor(&fwd.mu(k + 1)?)?, &inner)?.embed_indices(&fwd.systems(k..k + 2)?)?.normalized()?
        };
        out.edge.insert(key, e);
    }
    Ok(out)
}

/// Complex operator on one vertex's replicated subsystems.
fn replica_message_product(msgs: &[&CMat], dim: usize) -> CMat {
    let mut p = linalg::identity(dim);
    for m in msgs {
        p = &p * *m;
    }
    p
}

/// QBP^(1) on the replica lift with `μ̃_u = P_u T_u`, contracted back to
/// marginals of the original order-n network.
pub fn replica_run(net: &BifactorNetwork, opts: &RunOptions) -> Result<(BeliefSet, ConvergenceReport)> {
    match net.order() {
        Order::Finite(1) => return run(net, opts),
        Order::Infinite => return Err(QbpError::OrderMismatch { expected: "finite".into(), found: "inf".into() }),
        _ => {}
    }
    require_valid(net)?;
    let rep = replica_lift(net)?;
    let rnet = &rep.network;
    let reg = rnet.registry();
    let g = rnet.graph();
    let tree = g.is_tree();
    let max_iters = opts.max_iters.unwrap_or(if tree { 4 * g.diameter().max(1) } else { 100 });
    let vsys: BTreeMap<String, Vec<usize>> = g
        .vertices()
        .iter()
        .map(|v| Ok((v.clone(), reg.resolve(&rnet.system_refs(v)?)?)))
        .collect::<Result<_>>()?;
    let vdim = |v: &str| reg.dim_product(&vsys[v]);
    // P_u T_u as dense matrices on the vertex space
    let mut pt = BTreeMap::new();
    let mut psqrt = BTreeMap::new();
    for v in g.vertices() {
        let p = rnet.mu(v)?;
        pt.insert(v.clone(), p.matrix() * rep.perm(v)?);
        psqrt.insert(v.clone(), p.sqrt()?.into_matrix());
    }
    // ν̃ embedded on both endpoints: (u systems, v systems) in canonical order
    let pair_ops: BTreeMap<(String, String), (Vec<usize>, CMat)> = g
        .edges()
        .into_iter()
        .map(|(a, b)| {
            let mut s = vsys[&a].clone();
            s.extend(vsys[&b].iter().copied());
            s.sort_unstable();
            let op = rnet.nu(&a, &b)?.embed_indices(&s)?.into_matrix();
            Ok(((a, b), (s, op)))
        })
        .collect::<Result<_>>()?;
    let full_pair = |u: &str, v: &str| -> &(Vec<usize>, CMat) {
        pair_ops.get(&(u.to_string(), v.to_string())).or_else(|| pair_ops.get(&(v.to_string(), u.to_string()))).unwrap()
    };
    let embed_on = |m: &CMat, part: &[usize], whole: &[usize]| -> CMat {
        let dims: Vec<usize> = whole.iter().map(|&i| reg.dims()[i]).collect();
        let pos: Vec<usize> = part.iter().map(|s| whole.iter().position(|w| w == s).unwrap()).collect();
        linalg::embed_matrix(m, &dims, &pos)
    };
    let reduce_to = |m: &CMat, whole: &[usize], keep: &[usize]| -> CMat {
        let dims: Vec<usize> = whole.iter().map(|&i| reg.dims()[i]).collect();
        let pos: Vec<usize> = keep.iter().map(|s| whole.iter().position(|w| w == s).unwrap()).collect();
        linalg::partial_trace_matrix(m, &dims, &pos)
    };
    let normalize = |m: CMat| -> Result<CMat> {
        let t = linalg::trace(&m);
        if t.norm() < 1e-300 {
            return Err(QbpError::Underflow(t.norm()));
        }
        Ok(linalg::scale(&m, c64::new(1.0, 0.0) / t))
    };
    let mut msgs: BTreeMap<DirectedEdge, CMat> = BTreeMap::new();
    for (a, b) in g.edges() {
        msgs.insert((a.clone(), b.clone()), linalg::scale_real(&linalg::identity(vdim(&b)), 1.0 / vdim(&b) as f64));
        msgs.insert((b.clone(), a.clone()), linalg::scale_real(&linalg::identity(vdim(&a)), 1.0 / vdim(&a) as f64));
    }
    let incoming_c = |msgs: &BTreeMap<DirectedEdge, CMat>, u: &str, exclude: Option<&str>| -> Result<CMat> {
        let mut list = Vec::new();
        for w in g.neighbor_labels(u)? {
            if Some(w.as_str()) != exclude {
                list.push(msgs[&(w.clone(), u.to_string())].clone());
            }
        }
        let r: Vec<&CMat> = list.iter().collect();
        Ok(replica_message_product(&r, vdim(u)))
    };
    let marginal = |msgs: &BTreeMap<DirectedEdge, CMat>, v: &str| -> Result<CMat> {
        let m = incoming_c(msgs, v, None)?;
        let x = &(&psqrt[v] * &m) * &psqrt[v];
        let x = &x * rep.perm(v)?;
        let keep: Vec<usize> = reg.resolve(&keep_labels(&rep, rnet, v)?)?;
        Ok(reduce_to(&x, &vsys[v], &keep))
    };
    let mut iteration = 0;
    let mut history = Vec::new();
    let mut converged = msgs.is_empty();
    let mut prev: BTreeMap<String, CMat> =
        g.vertices().iter().map(|v| Ok((v.clone(), normalize(marginal(&msgs, v)?)?))).collect::<Result<_>>()?;
    let (mut bd, mut md) = (0.0, 0.0);
    while !converged && iteration < max_iters {
        let mut next = BTreeMap::new();
        for (u, v) in msgs.keys() {
            let m = incoming_c(&msgs, u, Some(v))?;
            let k = &pt[u] * &m;
            let (whole, nu) = full_pair(u, v);
            let x = &embed_on(&k, &vsys[u], whole) * nu;
            next.insert((u.clone(), v.clone()), normalize(reduce_to(&x, whole, &vsys[v]))?);
        }
        iteration += 1;
        md = next.iter().map(|(k, m)| linalg::fro_dist(m, &msgs[k])).fold(0.0, f64::max);
        msgs = next;
        let cur: BTreeMap<String, CMat> =
            g.vertices().iter().map(|v| Ok((v.clone(), normalize(marginal(&msgs, v)?)?))).collect::<Result<_>>()?;
        bd = 0.0_f64;
        for (v, m) in &cur {
            bd = bd.max(linalg::trace_norm(&(m - &prev[v]))?);
        }
        prev = cur;
        history.push(IterationDelta { iteration, belief_delta: bd, message_delta: md });
        converged = bd <= opts.tol && md <= opts.tol;
    }
    let to_original = |m: CMat, labels: &[String]| -> Result<LabeledOperator> {
        let back: Vec<String> = labels.iter().map(|l| original_of(&rep, l)).collect();
        LabeledOperator::new_unchecked(&rep.recipe.original, &refs(&back), m)?.herm_part().normalized()
    };
    let mut out = BeliefSet::default();
    for v in g.vertices() {
        let kl = keep_labels(&rep, rnet, v)?;
        let idx = reg.resolve(&kl)?;
        out.vertex.insert(v.clone(), to_original(prev[v].clone(), &reg.labels_of(&idx))?);
    }
    if opts.edge_beliefs {
        for (a, b) in g.edges() {
            let (whole, nu) = full_pair(&a, &b);
            let m = &embed_on(&incoming_c(&msgs, &a, Some(&b))?, &vsys[&a], whole)
                * &embed_on(&incoming_c(&msgs, &b, Some(&a))?, &vsys[&b], whole);
            let s = &embed_on(&psqrt[&a], &vsys[&a], whole) * &embed_on(&psqrt[&b], &vsys[&b], whole);
            let t = &embed_on(rep.perm(&a)?, &vsys[&a], whole) * &embed_on(rep.perm(&b)?, &vsys[&b], whole);
            let x = &(&(&(&s * &m) * nu) * &s) * &t;
            let mut kl = keep_labels(&rep, rnet, &a)?;
            kl.extend(keep_labels(&rep, rnet, &b)?);
            let keep = reg.resolve(&kl)?;
            let red = reduce_to(&x, whole, &keep);
            out.edge.insert((a, b), to_original(red, &reg.labels_of(&keep))?);
        }
    }
    let report = ConvergenceReport {
        iterations_run: iteration,
        converged,
        max_belief_delta: bd,
        max_message_delta: md,
        history,
        heuristic: !tree,
        message_commutator: None,
        stabilized_at: BTreeMap::new(),
        trace: Vec::new(),
    };
    Ok((out, report))
}

fn keep_labels<'a>(rep: &'a crate::network::ReplicaNetwork, rnet: &'a BifactorNetwork, v: &str) -> Result<Vec<&'a str>> {
    let sys = rnet.systems(v)?;
    Ok(rep.recipe.keep.values().filter(|l| sys.contains(l)).map(String::as_str).collect())
}

fn original_of(rep: &crate::network::ReplicaNetwork, replica: &str) -> String {
    rep.recipe.keep.iter().find(|(_, r)| r.as_str() == replica).map(|(o, _)| o.clone()).unwrap_or_default()
}
