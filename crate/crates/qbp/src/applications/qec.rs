//! Stabilizer-code syndrome decoding through Jamiołkowski factor graphs.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{QbpError, Result};
use crate::linalg::{self, CMat};
use crate::network::{factor_graph_to_bifactor, FactorGraphModel};
use crate::operator_core::{LabeledOperator, SystemRegistry};
use crate::pauli;
use crate::qbp_engine::{run, ConvergenceReport, RunOptions};

/// Pauli string stored as symplectic bit pairs `(x, z)` per qubit.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    x: Vec<bool>,
    z: Vec<bool>,
}

impl PauliString {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Letter on qubit `i`.
    pub fn letter(&self, i: usize) -> char {
        match (self.x[i], self.z[i]) {
            (false, false) => 'I',
            (true, false) => 'X',
            (true, true) => 'Y',
            (false, true) => 'Z',
        }
    }

    /// Qubits carrying a non-identity factor.
    pub fn support(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.x[i] || self.z[i]).collect()
    }

    pub fn commutes_with(&self, other: &PauliString) -> bool {
        let s = (0..self.len()).filter(|&i| (self.x[i] && other.z[i]) != (self.z[i] && other.x[i])).count();
        s % 2 == 0
    }

    fn bits(&self) -> Vec<bool> {
        self.x.iter().chain(&self.z).copied().collect()
    }
}

impl FromStr for PauliString {
    type Err = QbpError;

    fn from_str(s: &str) -> Result<Self> {
        let mut x = Vec::new();
        let mut z = Vec::new();
        for c in s.chars() {
            let (a, b) = match c.to_ascii_uppercase() {
                'I' => (false, false),
                'X' => (true, false),
                'Y' => (true, true),
                'Z' => (false, true),
                _ => return Err(QbpError::InvalidInput(format!("`{c}` is not a Pauli letter"))),
            };
            x.push(a);
            z.push(b);
        }
        Ok(PauliString { x, z })
    }
}

impl fmt::Display for PauliString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        (0..self.len()).try_for_each(|i| write!(f, "{}", self.letter(i)))
    }
}

fn gf2_rank(mut rows: Vec<Vec<bool>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut rank = 0;
    for c in 0..cols {
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][c]) else { continue };
        rows.swap(rank, p);
        for r in 0..rows.len() {
            if r != rank && rows[r][c] {
                let pivot = rows[rank].clone();
                rows[r].iter_mut().zip(&pivot).for_each(|(a, b)| *a ^= *b);
            }
        }
        rank += 1;
    }
    rank
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CodeSpec", into = "CodeSpec")]
pub struct StabilizerCode {
    n: usize,
    generators: Vec<PauliString>,
}

/// `{n, generators: ["ZZI", ...]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CodeSpec {
    pub n: usize,
    pub generators: Vec<String>,
}

impl TryFrom<CodeSpec> for StabilizerCode {
    type Error = QbpError;

    fn try_from(s: CodeSpec) -> Result<Self> {
        let gens: Vec<&str> = s.generators.iter().map(String::as_str).collect();
        StabilizerCode::new(s.n, &gens)
    }
}

impl From<StabilizerCode> for CodeSpec {
    fn from(c: StabilizerCode) -> Self {
        CodeSpec { n: c.n, generators: c.generators.iter().map(ToString::to_string).collect() }
    }
}

impl StabilizerCode {
    /// Checks lengths, pairwise commutation and independence symbolically.
    pub fn new(n: usize, generators: &[&str]) -> Result<Self> {
        if n == 0 {
            return Err(QbpError::InvalidInput("code needs at least one qubit".into()));
        }
        let gens: Vec<PauliString> = generators.iter().map(|g| g.parse()).collect::<Result<_>>()?;
        for g in &gens {
            if g.len() != n {
                return Err(QbpError::DimensionMismatch(format!("generator {g} has length {}, code has {n} qubits", g.len())));
            }
            if g.support().is_empty() {
                return Err(QbpError::InvalidInput("identity generator".into()));
            }
        }
        for (i, a) in gens.iter().enumerate() {
            for b in &gens[i + 1..] {
                if !a.commutes_with(b) {
                    return Err(QbpError::ValidationFailed(format!("generators {a} and {b} anticommute")));
                }
            }
        }
        if gf2_rank(gens.iter().map(PauliString::bits).collect()) < gens.len() {
            return Err(QbpError::ValidationFailed("generators are not independent".into()));
        }
        Ok(StabilizerCode { n, generators: gens })
    }

    /// Three-qubit bit-flip code `ZZI, IZZ`.
    pub fn bit_flip3() -> Self {
        StabilizerCode::new(3, &["ZZI", "IZZ"]).expect("valid code")
    }

    /// Five-qubit perfect code, cyclic shifts of `XZZXI`.
    pub fn five_qubit() -> Self {
        StabilizerCode::new(5, &["XZZXI", "IXZZX", "XIXZZ", "ZXIXZ"]).expect("valid code")
    }

    pub fn n_qubits(&self) -> usize {
        self.n
    }

    pub fn generators(&self) -> &[PauliString] {
        &self.generators
    }

    /// Number of encoded qubits.
    pub fn k(&self) -> usize {
        self.n - self.generators.len()
    }

    /// Syndrome of a Pauli error.
    pub fn syndrome_of(&self, error: &PauliString) -> Syndrome {
        Syndrome { bits: self.generators.iter().map(|g| g.commutes_with(error)).collect() }
    }
}

/// Measured generator outcomes, `true` for `+`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Syndrome {
    pub bits: Vec<bool>,
}

impl Syndrome {
    pub fn trivial(len: usize) -> Self {
        Syndrome { bits: vec![true; len] }
    }

    /// Every syndrome of the given length.
    pub fn all(len: usize) -> Vec<Syndrome> {
        (0..1usize << len).map(|m| Syndrome { bits: (0..len).map(|j| m >> (len - 1 - j) & 1 == 0).collect() }).collect()
    }
}

impl FromStr for Syndrome {
    type Err = QbpError;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '+' => Ok(true),
                '-' => Ok(false),
                _ => Err(QbpError::InvalidInput(format!("syndrome character `{c}` is not + or -"))),
            })
            .collect::<Result<_>>()?;
        Ok(Syndrome { bits })
    }
}

impl fmt::Display for Syndrome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.bits.iter().try_for_each(|&b| write!(f, "{}", if b { '+' } else { '-' }))
    }
}

/// `|Φ⟩ = (|00⟩ + |11⟩)/√2` on system ⊗ reference.
pub fn phi_plus() -> Vec<c64> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    vec![c64::new(s, 0.0), c64::new(0.0, 0.0), c64::new(0.0, 0.0), c64::new(s, 0.0)]
}

fn outer(v: &[c64]) -> CMat {
    CMat::from_fn(v.len(), v.len(), |i, j| v[i] * v[j].conj())
}

/// `(σ^a ⊗ I)|Φ⟩` for `a ∈ {I, X, Y, Z}`.
pub fn bell_vector(a: char) -> Result<Vec<c64>> {
    let s = pauli::by_char(a).ok_or_else(|| QbpError::InvalidInput(format!("`{a}` is not a Pauli letter")))?;
    let m = linalg::kron(&s, &pauli::i2());
    let phi = phi_plus();
    Ok((0..4).map(|i| (0..4).map(|j| m[(i, j)] * phi[j]).sum()).collect())
}

/// Single-qubit channel in Jamiołkowski form, a 4×4 state on system ⊗ reference.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseModel {
    choi: CMat,
}

impl NoiseModel {
    /// Validates positivity, unit trace and the `I/2` reference marginal.
    pub fn from_choi(choi: CMat) -> Result<Self> {
        if choi.nrows() != 4 || choi.ncols() != 4 {
            return Err(QbpError::DimensionMismatch("Jamiołkowski operator must be 4x4".into()));
        }
        let dev = linalg::herm_deviation(&choi);
        if dev > 1e-10 {
            return Err(QbpError::NotHermitian(dev));
        }
        let choi = linalg::herm_part(&choi);
        let min = linalg::eigvals_herm(&choi)?.into_iter().fold(f64::INFINITY, f64::min);
        if min < -1e-10 {
            return Err(QbpError::NegativeEigenvalue { value: min });
        }
        let t = linalg::trace(&choi).re;
        if (t - 1.0).abs() > 1e-10 {
            return Err(QbpError::NotNormalized(t));
        }
        let r = linalg::partial_trace_matrix(&choi, &[2, 2], &[1]);
        let half = linalg::scale_real(&linalg::identity(2), 0.5);
        if linalg::fro_dist(&r, &half) > 1e-10 {
            return Err(QbpError::ValidationFailed("channel is not trace preserving".into()));
        }
        Ok(NoiseModel { choi })
    }

    /// Mixture of Pauli errors with weights for `I, X, Y, Z`.
    pub fn pauli(weights: [f64; 4]) -> Result<Self> {
        if weights.iter().any(|&w| w < 0.0) {
            return Err(QbpError::InvalidInput("Pauli weights must be nonnegative".into()));
        }
        let mut m = linalg::zeros(4);
        for (w, a) in weights.iter().zip(['I', 'X', 'Y', 'Z']) {
            m = &m + &linalg::scale_real(&outer(&bell_vector(a)?), *w);
        }
        Self::from_choi(m)
    }

    pub fn identity() -> Self {
        Self::pauli([1.0, 0.0, 0.0, 0.0]).expect("valid channel")
    }

    pub fn bit_flip(p: f64) -> Result<Self> {
        Self::pauli([1.0 - p, p, 0.0, 0.0])
    }

    pub fn depolarizing(p: f64) -> Result<Self> {
        Self::pauli([1.0 - p, p / 3.0, p / 3.0, p / 3.0])
    }

    /// `Σ_k (K_k ⊗ I)|Φ⟩⟨Φ|(K_k ⊗ I)†` from 2×2 Kraus operators.
    pub fn from_kraus(kraus: &[CMat]) -> Result<Self> {
        let phi = outer(&phi_plus());
        let mut m = linalg::zeros(4);
        for k in kraus {
            if k.nrows() != 2 || k.ncols() != 2 {
                return Err(QbpError::DimensionMismatch("Kraus operators must be 2x2".into()));
            }
            let kk = linalg::kron(k, &pauli::i2());
            m = &m + &(&kk * &phi * linalg::dagger(&kk));
        }
        Self::from_choi(m)
    }

    pub fn choi(&self) -> &CMat {
        &self.choi
    }
}

/// Variable label of doubled qubit `i` (0-based), `q1, q2, …`.
pub fn qubit_label(i: usize) -> String {
    format!("q{}", i + 1)
}

/// Function label of generator `j` (0-based), `S1, S2, …`.
pub fn generator_label(j: usize) -> String {
    format!("S{}", j + 1)
}

/// `σ^a ⊗ (σ^a)*` on one doubled qubit; fixes `|Φ⟩` for every letter.
fn doubled_pauli(a: char) -> CMat {
    let s = pauli::by_char(a).expect("Pauli letter");
    linalg::kron(&s, &linalg::conj(&s))
}

fn doubled_registry(n: usize) -> Result<std::sync::Arc<SystemRegistry>> {
    SystemRegistry::new((0..n).map(|i| (qubit_label(i), 4usize)))
}

/// `P̄_j^{s_j} = (I ± S̄_j)/2` on the doubled qubits in the generator's support.
pub fn syndrome_projector(reg: &std::sync::Arc<SystemRegistry>, g: &PauliString, plus: bool) -> Result<LabeledOperator> {
    let supp = g.support();
    let mut s = linalg::identity(1);
    for &i in &supp {
        s = linalg::kron(&s, &doubled_pauli(g.letter(i)));
    }
    let sign = if plus { 1.0 } else { -1.0 };
    let p = linalg::scale_real(&(&linalg::identity(s.nrows()) + &linalg::scale_real(&s, sign)), 0.5);
    let labels: Vec<String> = supp.iter().map(|&i| qubit_label(i)).collect();
    let lr: Vec<&str> = labels.iter().map(String::as_str).collect();
    LabeledOperator::new(reg, &lr, p)
}

/// `ρ_{V̄|s} ∝ Π_j P̄_j^{s_j} ⋆ ⊗_u ρ_ū` as a factor graph over doubled qubits.
pub fn syndrome_factor_graph(code: &StabilizerCode, noise: &NoiseModel, s: &Syndrome) -> Result<FactorGraphModel> {
    if s.bits.len() != code.generators.len() {
        return Err(QbpError::DimensionMismatch(format!(
            "syndrome has {} bits, code has {} generators",
            s.bits.len(),
            code.generators.len()
        )));
    }
    let reg = doubled_registry(code.n)?;
    let mut mu = BTreeMap::new();
    for i in 0..code.n {
        let q = qubit_label(i);
        mu.insert(q.clone(), LabeledOperator::new(&reg, &[q.as_str()], noise.choi.clone())?);
    }
    let mut x = BTreeMap::new();
    for (j, (g, &b)) in code.generators.iter().zip(&s.bits).enumerate() {
        x.insert(generator_label(j), syndrome_projector(&reg, g, b)?);
    }
    FactorGraphModel::new(reg, mu, x)
}

/// Probability `Tr[Π_j P̄_j^{s_j} ρ_V̄]` of observing `s`, by dense evaluation.
pub fn syndrome_probability(code: &StabilizerCode, noise: &NoiseModel, s: &Syndrome) -> Result<f64> {
    let fg = syndrome_factor_graph(code, noise, s)?;
    let labels: Vec<String> = (0..code.n).map(qubit_label).collect();
    let lr: Vec<&str> = labels.iter().map(String::as_str).collect();
    let mut p = LabeledOperator::identity(fg.registry(), &lr)?;
    let mut rho = LabeledOperator::identity(fg.registry(), &[])?;
    for v in fg.variables() {
        rho = rho.tensor(fg.mu(v)?)?;
    }
    for f in fg.functions() {
        p = p.mul(fg.x(f)?)?;
    }
    Ok(p.mul(&rho)?.trace_complex().re)
}

#[derive(Clone, Debug)]
pub struct DecodeResult {
    /// Conditional Jamiołkowski operator per target qubit label.
    pub marginals: BTreeMap<String, LabeledOperator>,
    pub report: ConvergenceReport,
    /// True when the variable/generator graph has a loop.
    pub heuristic: bool,
}

/// Per-qubit conditional channels from QBP on the converted factor graph.
pub fn decode_marginals(
    code: &StabilizerCode,
    noise: &NoiseModel,
    s: &Syndrome,
    targets: &[usize],
    opts: &RunOptions,
) -> Result<DecodeResult> {
    for &t in targets {
        if t >= code.n {
            return Err(QbpError::InvalidInput(format!("qubit {t} out of range")));
        }
    }
    let fg = syndrome_factor_graph(code, noise, s)?;
    let (net, _) = factor_graph_to_bifactor(&fg)?;
    let heuristic = !net.graph().is_tree();
    let (beliefs, mut report) = run(&net, &RunOptions { edge_beliefs: false, ..opts.clone() })?;
    report.heuristic |= heuristic;
    let mut marginals = BTreeMap::new();
    for &t in targets {
        let q = qubit_label(t);
        let b = &beliefs.vertex[&q];
        let op = LabeledOperator::new(fg.registry(), &[q.as_str()], b.matrix().clone())?;
        marginals.insert(q, op);
    }
    Ok(DecodeResult { marginals, report, heuristic })
}

/// Exact per-qubit conditional channels from the dense factor-graph state.
pub fn decode_oracle(code: &StabilizerCode, noise: &NoiseModel, s: &Syndrome, targets: &[usize]) -> Result<BTreeMap<String, LabeledOperator>> {
    let fg = syndrome_factor_graph(code, noise, s)?;
    let state = fg.state()?;
    targets
        .iter()
        .map(|&t| {
            let q = qubit_label(t);
            Ok((q.clone(), state.reduce_to(&[q.as_str()])?))
        })
        .collect()
}

/// Weights `⟨Φ_a|ρ|Φ_a⟩` of a doubled-qubit operator on the four Bell vectors,
/// i.e. the Pauli error probabilities of a Pauli channel.
pub fn pauli_weights(op: &LabeledOperator) -> Result<[f64; 4]> {
    if op.dim() != 4 {
        return Err(QbpError::DimensionMismatch("expected a 4x4 operator".into()));
    }
    let m = op.matrix();
    let mut w = [0.0; 4];
    for (k, a) in ['I', 'X', 'Y', 'Z'].into_iter().enumerate() {
        let v = bell_vector(a)?;
        let mut acc = c64::new(0.0, 0.0);
        for i in 0..4 {
            for j in 0..4 {
                acc += v[i].conj() * m[(i, j)] * v[j];
            }
        }
        w[k] = acc.re;
    }
    Ok(w)
}

/// Bayes posterior over Pauli error patterns of an independent Pauli channel,
/// marginalized per qubit into a Bell-diagonal Jamiołkowski operator.
pub fn pauli_bayes_marginals(code: &StabilizerCode, weights: [f64; 4], s: &Syndrome) -> Result<BTreeMap<String, CMat>> {
    let n = code.n;
    let letters = ['I', 'X', 'Y', 'Z'];
    let mut post = vec![[0.0; 4]; n];
    let mut z = 0.0;
    for m in 0..4usize.pow(n as u32) {
        let idx: Vec<usize> = (0..n).map(|i| m / 4usize.pow((n - 1 - i) as u32) % 4).collect();
        let e: PauliString = idx.iter().map(|&k| letters[k]).collect::<String>().parse()?;
        if code.syndrome_of(&e) != *s {
            continue;
        }
        let p: f64 = idx.iter().map(|&k| weights[k]).product();
        z += p;
        for (i, &k) in idx.iter().enumerate() {
            post[i][k] += p;
        }
    }
    if z <= 0.0 {
        return Err(QbpError::ZeroProbability(z));
    }
    let mut out = BTreeMap::new();
    for (i, w) in post.iter().enumerate() {
        let mut m = linalg::zeros(4);
        for (k, a) in letters.into_iter().enumerate() {
            m = &m + &linalg::scale_real(&outer(&bell_vector(a)?), w[k] / z);
        }
        out.insert(qubit_label(i), m);
    }
    Ok(out)
}
