//! Labeled subsystems and the dense operator type acting on them.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{QbpError, Result};
use crate::linalg::{self, CMat, Eigh};

/// Numerical tolerances shared across the library.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Relative Hermiticity deviation accepted (and symmetrized) on ingestion.
    pub herm: f64,
    /// Relative eigendecomposition / reconstruction tolerance.
    pub eig: f64,
    /// Relative eigenvalue cutoff defining the support.
    pub supp: f64,
    /// Relative commutator norm treated as zero.
    pub comm: f64,
    /// Trace-norm fixed-point tolerance for message passing.
    pub conv: f64,
    /// Trace-distance tolerance for oracle comparisons.
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { herm: 1e-9, eig: 1e-9, supp: 1e-10, comm: 1e-9, conv: 1e-10, oracle: 1e-8 }
    }
}

/// Ordered list of labeled subsystems with their Hilbert dimensions.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SystemRegistry {
    labels: Vec<String>,
    dims: Vec<usize>,
}

impl SystemRegistry {
    pub fn new<S: Into<String>>(entries: impl IntoIterator<Item = (S, usize)>) -> Result<Arc<Self>> {
        let mut labels = Vec::new();
        let mut dims = Vec::new();
        for (l, d) in entries {
            let l = l.into();
            if labels.contains(&l) {
                return Err(QbpError::DuplicateLabel(l));
            }
            if d == 0 {
                return Err(QbpError::InvalidInput(format!("label `{l}` has dimension 0")));
            }
            labels.push(l);
            dims.push(d);
        }
        Ok(Arc::new(SystemRegistry { labels, dims }))
    }

    /// Registry of `n` qubits named by the given labels.
    pub fn qubits(labels: &[&str]) -> Result<Arc<Self>> {
        Self::new(labels.iter().map(|l| (*l, 2usize)))
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| QbpError::UnknownLabel(label.to_string()))
    }

    pub fn dim_of(&self, label: &str) -> Result<usize> {
        Ok(self.dims[self.index_of(label)?])
    }

    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Resolves labels to sorted, deduplicated registry indices.
    pub fn resolve(&self, labels: &[&str]) -> Result<Vec<usize>> {
        let mut set = BTreeSet::new();
        for l in labels {
            set.insert(self.index_of(l)?);
        }
        Ok(set.into_iter().collect())
    }

    pub fn labels_of(&self, idx: &[usize]) -> Vec<String> {
        idx.iter().map(|&i| self.labels[i].clone()).collect()
    }

    pub fn dim_product(&self, idx: &[usize]) -> usize {
        idx.iter().map(|&i| self.dims[i]).product()
    }
}

/// Spectral functions accepted by [`LabeledOperator::matfun`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MatFun {
    Power(f64),
    Log2,
    Ln,
    Exp,
    Pinv,
    ProjSupport,
}

impl MatFun {
    fn needs_psd(self) -> bool {
        match self {
            MatFun::Power(p) => !(p >= 1.0 && p.fract() == 0.0),
            MatFun::Exp => false,
            _ => true,
        }
    }
}

/// Order parameter of a bifactor construction: a positive integer `n` or `∞`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Order {
    Finite(u32),
    Infinite,
}

impl Order {
    pub fn finite(self) -> Option<u32> {
        match self {
            Order::Finite(n) => Some(n),
            Order::Infinite => None,
        }
    }
}

impl fmt::Display for Order {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Order::Finite(n) => write!(f, "{n}"),
            Order::Infinite => write!(f, "inf"),
        }
    }
}

impl std::str::FromStr for Order {
    type Err = QbpError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "inf" | "infinity" | "∞" => Ok(Order::Infinite),
            t => match t.parse::<u32>() {
                Ok(n) if n >= 1 => Ok(Order::Finite(n)),
                _ => Err(QbpError::InvalidInput(format!("bad order `{s}`"))),
            },
        }
    }
}

impl Serialize for Order {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Order::Finite(n) => s.serialize_u32(*n),
            Order::Infinite => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Order {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = serde_json::Value::deserialize(d)?;
        match v {
            serde_json::Value::Number(n) => match n.as_u64() {
                Some(k) if k >= 1 && k <= u32::MAX as u64 => Ok(Order::Finite(k as u32)),
                _ => Err(serde::de::Error::custom("order must be a positive integer or \"inf\"")),
            },
            serde_json::Value::String(s) => s.parse().map_err(serde::de::Error::custom),
            _ => Err(serde::de::Error::custom("order must be a positive integer or \"inf\"")),
        }
    }
}

/// Dense operator on an ordered subset of a registry's subsystems.
///
/// The support is stored as sorted registry indices; the matrix uses the same
/// factor order. Operators built through [`LabeledOperator::new`] are
/// Hermitian; [`LabeledOperator::new_unchecked`] skips that check for the
/// intermediate non-Hermitian products some algorithms need.
#[derive(Clone)]
pub struct LabeledOperator {
    registry: Arc<SystemRegistry>,
    support: Vec<usize>,
    matrix: CMat,
}

impl fmt::Debug for LabeledOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LabeledOperator")
            .field("labels", &self.labels())
            .field("dim", &self.dim())
            .finish()
    }
}

impl LabeledOperator {
    /// Builds a Hermitian operator. Labels may be given in any order; the
    /// matrix factor order must follow the given label order.
    pub fn new(registry: &Arc<SystemRegistry>, labels: &[&str], matrix: CMat) -> Result<Self> {
        let op = Self::new_unchecked(registry, labels, matrix)?;
        op.hermitized(Tolerances::default().herm)
    }

    /// Like [`LabeledOperator::new`] without the Hermiticity check.
    pub fn new_unchecked(registry: &Arc<SystemRegistry>, labels: &[&str], matrix: CMat) -> Result<Self> {
        let mut idx = Vec::with_capacity(labels.len());
        for l in labels {
            let i = registry.index_of(l)?;
            if idx.contains(&i) {
                return Err(QbpError::DuplicateLabel(l.to_string()));
            }
            idx.push(i);
        }
        let dims: Vec<usize> = idx.iter().map(|&i| registry.dims()[i]).collect();
        let n: usize = dims.iter().product();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(QbpError::DimensionMismatch(format!(
                "labels {labels:?} need a {n}x{n} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let mut perm: Vec<usize> = (0..idx.len()).collect();
        perm.sort_by_key(|&k| idx[k]);
        let matrix = if perm.iter().enumerate().all(|(a, &b)| a == b) {
            matrix
        } else {
            linalg::permute_factors(&matrix, &dims, &perm)
        };
        let support = perm.iter().map(|&k| idx[k]).collect();
        Ok(LabeledOperator { registry: registry.clone(), support, matrix })
    }

    /// Builds from sorted registry indices without checks beyond dimensions.
    pub(crate) fn from_parts(registry: &Arc<SystemRegistry>, support: Vec<usize>, matrix: CMat) -> Self {
        debug_assert!(support.windows(2).all(|w| w[0] < w[1]));
        debug_assert_eq!(registry.dim_product(&support), matrix.nrows());
        LabeledOperator { registry: registry.clone(), support, matrix }
    }

    pub fn identity(registry: &Arc<SystemRegistry>, labels: &[&str]) -> Result<Self> {
        let support = registry.resolve(labels)?;
        let n = registry.dim_product(&support);
        Ok(Self::from_parts(registry, support, linalg::identity(n)))
    }

    /// Normalized identity `I/d`.
    pub fn maximally_mixed(registry: &Arc<SystemRegistry>, labels: &[&str]) -> Result<Self> {
        let id = Self::identity(registry, labels)?;
        let d = id.dim() as f64;
        Ok(id.scaled(1.0 / d))
    }

    /// Diagonal operator from real entries.
    pub fn diagonal(registry: &Arc<SystemRegistry>, labels: &[&str], diag: &[f64]) -> Result<Self> {
        Self::new(registry, labels, linalg::diag_real(diag))
    }

    pub fn registry(&self) -> &Arc<SystemRegistry> {
        &self.registry
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }

    pub fn labels(&self) -> Vec<String> {
        self.registry.labels_of(&self.support)
    }

    pub fn label_refs(&self) -> Vec<&str> {
        self.support.iter().map(|&i| self.registry.labels()[i].as_str()).collect()
    }

    pub fn dims(&self) -> Vec<usize> {
        self.support.iter().map(|&i| self.registry.dims()[i]).collect()
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn with_matrix(&self, matrix: CMat) -> Self {
        Self::from_parts(&self.registry, self.support.clone(), matrix)
    }

    fn check_registry(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.registry, &other.registry) || *self.registry == *other.registry {
            Ok(())
        } else {
            Err(QbpError::DimensionMismatch("operators belong to different registries".into()))
        }
    }

    /// Positions of the given registry indices within this operator's support.
    fn positions_of(&self, idx: &[usize]) -> Result<Vec<usize>> {
        idx.iter()
            .map(|i| {
                self.support.iter().position(|s| s == i).ok_or_else(|| {
                    QbpError::LabelNotSubset(self.registry.labels_of(idx))
                })
            })
            .collect()
    }

    pub fn hermitized(self, tol: f64) -> Result<Self> {
        let dev = linalg::herm_deviation(&self.matrix);
        let norm = linalg::fro_norm(&self.matrix);
        if dev > tol * norm.max(f64::MIN_POSITIVE) && dev > 0.0 {
            return Err(QbpError::NotHermitian(dev / norm.max(f64::MIN_POSITIVE)));
        }
        let m = linalg::herm_part(&self.matrix);
        Ok(self.with_matrix(m))
    }

    /// Hermitian part, without any check.
    pub fn herm_part(&self) -> Self {
        self.with_matrix(linalg::herm_part(&self.matrix))
    }

    pub fn herm_deviation(&self) -> f64 {
        linalg::herm_deviation(&self.matrix)
    }

    /// `op ⊗ I` on `target` (which must contain the support).
    pub fn embed(&self, target: &[&str]) -> Result<Self> {
        let t = self.registry.resolve(target)?;
        self.embed_indices(&t)
    }

    pub fn embed_indices(&self, target: &[usize]) -> Result<Self> {
        if !self.support.iter().all(|s| target.contains(s)) {
            return Err(QbpError::LabelNotSubset(self.labels()));
        }
        if target == self.support.as_slice() {
            return Ok(self.clone());
        }
        let dims: Vec<usize> = target.iter().map(|&i| self.registry.dims()[i]).collect();
        let pos: Vec<usize> = self.support.iter().map(|s| target.iter().position(|t| t == s).unwrap()).collect();
        let m = linalg::embed_matrix(&self.matrix, &dims, &pos);
        Ok(Self::from_parts(&self.registry, target.to_vec(), m))
    }

    /// Partial trace over `traced`.
    pub fn partial_trace(&self, traced: &[&str]) -> Result<Self> {
        let t = self.registry.resolve(traced)?;
        self.partial_trace_indices(&t)
    }

    pub fn partial_trace_indices(&self, traced: &[usize]) -> Result<Self> {
        self.positions_of(traced)?;
        let keep: Vec<usize> = self.support.iter().copied().filter(|s| !traced.contains(s)).collect();
        self.reduce_to_indices(&keep)
    }

    /// Partial trace onto `keep`.
    pub fn reduce_to(&self, keep: &[&str]) -> Result<Self> {
        let k = self.registry.resolve(keep)?;
        self.reduce_to_indices(&k)
    }

    pub fn reduce_to_indices(&self, keep: &[usize]) -> Result<Self> {
        let pos = self.positions_of(keep)?;
        if keep.len() == self.support.len() {
            return Ok(self.clone());
        }
        let m = linalg::partial_trace_matrix(&self.matrix, &self.dims(), &pos);
        Ok(Self::from_parts(&self.registry, keep.to_vec(), m))
    }

    /// `⟨α| op |α⟩` over the listed subsystems, one state vector per label.
    pub fn contract(&self, labels: &[&str], states: &[Vec<c64>]) -> Result<Self> {
        if labels.len() != states.len() {
            return Err(QbpError::DimensionMismatch("one state per label required".into()));
        }
        let mut pairs: Vec<(usize, Vec<c64>)> = Vec::new();
        for (l, s) in labels.iter().zip(states) {
            let i = self.registry.index_of(l)?;
            if s.len() != self.registry.dims()[i] {
                return Err(QbpError::DimensionMismatch(format!("state for `{l}` has wrong length")));
            }
            pairs.push((i, s.clone()));
        }
        pairs.sort_by_key(|p| p.0);
        let idx: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let pos = self.positions_of(&idx)?;
        let vecs: Vec<Vec<c64>> = pairs.into_iter().map(|p| p.1).collect();
        let m = linalg::partial_contract(&self.matrix, &self.dims(), &pos, &vecs);
        let keep = self.support.iter().copied().filter(|s| !idx.contains(s)).collect();
        Ok(Self::from_parts(&self.registry, keep, m))
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn trace_complex(&self) -> c64 {
        linalg::trace(&self.matrix)
    }

    /// Divides by the trace; fails when the trace is below `1e-300`.
    pub fn normalized(&self) -> Result<Self> {
        let t = self.trace_complex();
        if t.norm() < 1e-300 || !t.re.is_finite() {
            return Err(QbpError::Underflow(t.norm()));
        }
        Ok(self.with_matrix(linalg::scale(&self.matrix, t.inv())))
    }

    pub fn scaled(&self, s: f64) -> Self {
        self.with_matrix(linalg::scale_real(&self.matrix, s))
    }

    pub fn adjoint(&self) -> Self {
        self.with_matrix(linalg::dagger(&self.matrix))
    }

    fn union_support(&self, other: &Self) -> Vec<usize> {
        let mut u: BTreeSet<usize> = self.support.iter().copied().collect();
        u.extend(other.support.iter().copied());
        u.into_iter().collect()
    }

    /// Both operators embedded on the union of their supports.
    pub fn align(&self, other: &Self) -> Result<(Self, Self)> {
        self.check_registry(other)?;
        let u = self.union_support(other);
        Ok((self.embed_indices(&u)?, other.embed_indices(&u)?))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.align(other)?;
        Ok(a.with_matrix(&a.matrix + &b.matrix))
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        let (a, b) = self.align(other)?;
        Ok(a.with_matrix(&a.matrix - &b.matrix))
    }

    /// Plain operator product on the union of supports (not symmetrized).
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_registry(other)?;
        let u = self.union_support(other);
        if other.support.len() < u.len() && self.support.len() == u.len() {
            // self is the big one: apply other from the right locally
            let pos = self.positions_of(&other.support)?;
            let m = linalg::apply_right(&self.matrix, &other.matrix, &self.dims(), &pos);
            return Ok(self.with_matrix(m));
        }
        if self.support.len() < u.len() && other.support.len() == u.len() {
            let pos = other.positions_of(&self.support)?;
            let m = linalg::apply_left(&self.matrix, &other.dims(), &pos, &other.matrix);
            return Ok(other.with_matrix(m));
        }
        let (a, b) = self.align(other)?;
        Ok(a.with_matrix(&a.matrix * &b.matrix))
    }

    /// `self ⊗ other` for disjoint supports.
    pub fn tensor(&self, other: &Self) -> Result<Self> {
        self.check_registry(other)?;
        let overlap: Vec<usize> = self.support.iter().copied().filter(|s| other.support.contains(s)).collect();
        if !overlap.is_empty() {
            return Err(QbpError::OverlappingSets(self.registry.labels_of(&overlap)));
        }
        let (a, b) = self.align(other)?;
        Ok(a.with_matrix(&a.matrix * &b.matrix))
    }

    pub fn commutator_norm(&self, other: &Self) -> Result<f64> {
        if self.support == other.support {
            return Ok(linalg::fro_norm(&linalg::commutator(&self.matrix, &other.matrix)));
        }
        if !Arc::ptr_eq(&self.registry, &other.registry) && self.registry != other.registry {
            return Err(QbpError::DimensionMismatch("operators belong to different registries".into()));
        }
        let shared: Vec<usize> = self.support.iter().copied().filter(|s| other.support.contains(s)).collect();
        if shared.is_empty() {
            return Ok(0.0);
        }
        // reorder to a on A'⊗S and b on S⊗B'
        let arrange = |op: &Self, shared_first: bool| {
            let dims = op.dims();
            let (mut own, mut sh) = (Vec::new(), Vec::new());
            for (k, s) in op.support.iter().enumerate() {
                if shared.contains(s) { sh.push(k) } else { own.push(k) }
            }
            let d_own: usize = own.iter().map(|&k| dims[k]).product();
            let perm: Vec<usize> = if shared_first { sh.into_iter().chain(own).collect() } else { own.into_iter().chain(sh).collect() };
            (linalg::permute_factors(&op.matrix, &dims, &perm), d_own)
        };
        let (a, da) = arrange(self, false);
        let (b, db) = arrange(other, true);
        let ds = self.registry.dim_product(&shared);
        Ok(linalg::commutator_norm_shared(&a, &b, da, ds, db))
    }

    pub fn fro_norm(&self) -> f64 {
        linalg::fro_norm(&self.matrix)
    }

    /// Frobenius distance after embedding both on the union of supports.
    pub fn fro_dist(&self, other: &Self) -> Result<f64> {
        let (a, b) = self.align(other)?;
        Ok(linalg::fro_dist(&a.matrix, &b.matrix))
    }

    /// Trace distance `½‖a − b‖₁` after embedding on the union of supports.
    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        let (a, b) = self.align(other)?;
        linalg::trace_distance(&a.matrix, &b.matrix)
    }

    pub fn eigh(&self) -> Result<Eigh> {
        linalg::eigh(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvals_herm(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.last().copied().unwrap_or(0.0))
    }

    /// Applies a spectral function with the default support cutoff.
    pub fn matfun(&self, f: MatFun) -> Result<Self> {
        self.matfun_tol(f, Tolerances::default().supp)
    }

    /// Applies a spectral function. Eigenvalues at or below
    /// `supp · λ_max` are outside the support and map to zero, except for
    /// `Exp` and positive integer powers which act on the full spectrum.
    pub fn matfun_tol(&self, f: MatFun, supp: f64) -> Result<Self> {
        let e = self.eigh()?;
        Ok(self.with_matrix(apply_spectral(&e, f, supp)?))
    }

    pub fn pow(&self, p: f64) -> Result<Self> {
        self.matfun(MatFun::Power(p))
    }

    pub fn sqrt(&self) -> Result<Self> {
        self.matfun(MatFun::Power(0.5))
    }

    pub fn ln(&self) -> Result<Self> {
        self.matfun(MatFun::Ln)
    }

    pub fn exp(&self) -> Result<Self> {
        self.matfun(MatFun::Exp)
    }

    pub fn pinv(&self) -> Result<Self> {
        self.matfun(MatFun::Pinv)
    }

    pub fn proj_support(&self) -> Result<Self> {
        self.matfun(MatFun::ProjSupport)
    }

    /// Checks positive semidefiniteness within `supp` relative to the spectral norm.
    pub fn check_psd(&self, supp: f64) -> Result<()> {
        check_psd_values(&self.eigenvalues()?, supp)
    }
}

pub(crate) fn check_psd_spectrum(e: &Eigh, supp: f64) -> Result<()> {
    check_psd_values(&e.values, supp)
}

/// `values` sorted descending.
fn check_psd_values(values: &[f64], supp: f64) -> Result<()> {
    let scale = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if let Some(&min) = values.last() {
        if min < -supp * scale.max(f64::MIN_POSITIVE) && min < 0.0 {
            return Err(QbpError::NegativeEigenvalue { value: min });
        }
    }
    Ok(())
}

/// Support cutoff for a spectrum: `supp · λ_max`.
pub(crate) fn support_cutoff(e: &Eigh, supp: f64) -> f64 {
    let lmax = e.values.first().copied().unwrap_or(0.0).max(0.0);
    supp * lmax
}

pub(crate) fn apply_spectral(e: &Eigh, f: MatFun, supp: f64) -> Result<CMat> {
    if f.needs_psd() {
        check_psd_spectrum(e, supp)?;
    }
    let cut = support_cutoff(e, supp);
    let in_supp = |v: f64| v > cut && v > 0.0;
    let m = match f {
        MatFun::Exp => e.rebuild(f64::exp),
        MatFun::Power(p) if p >= 1.0 && p.fract() == 0.0 => e.rebuild(|v| v.powi(p as i32)),
        MatFun::Power(p) => e.rebuild(|v| if in_supp(v) { v.powf(p) } else { 0.0 }),
        MatFun::Ln => e.rebuild(|v| if in_supp(v) { v.ln() } else { 0.0 }),
        MatFun::Log2 => e.rebuild(|v| if in_supp(v) { v.log2() } else { 0.0 }),
        MatFun::Pinv => e.rebuild(|v| if in_supp(v) { 1.0 / v } else { 0.0 }),
        MatFun::ProjSupport => e.rebuild(|v| if in_supp(v) { 1.0 } else { 0.0 }),
    };
    Ok(m)
}

/// Free-function form of [`LabeledOperator::embed`].
pub fn embed(op: &LabeledOperator, target: &[&str]) -> Result<LabeledOperator> {
    op.embed(target)
}

/// Free-function form of [`LabeledOperator::partial_trace`].
pub fn partial_trace(op: &LabeledOperator, traced: &[&str]) -> Result<LabeledOperator> {
    op.partial_trace(traced)
}

/// Free-function form of [`LabeledOperator::matfun`].
pub fn matfun(op: &LabeledOperator, f: MatFun) -> Result<LabeledOperator> {
    op.matfun(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{random_hermitian, seeded};

    #[test]
    fn commutator_over_shared_factor_matches_dense() {
        let reg = SystemRegistry::new([("a", 2), ("s", 3), ("b", 2), ("c", 2)]).unwrap();
        let mut rng = seeded(4);
        let x = LabeledOperator::new(&reg, &["a", "s"], random_hermitian(6, &mut rng)).unwrap();
        let y = LabeledOperator::new(&reg, &["s", "b", "c"], random_hermitian(12, &mut rng)).unwrap();
        let (xa, ya) = x.align(&y).unwrap();
        let dense = linalg::fro_norm(&linalg::commutator(&xa.matrix, &ya.matrix));
        assert!((x.commutator_norm(&y).unwrap() - dense).abs() < 1e-12 * dense.max(1.0));
        assert!((y.commutator_norm(&x).unwrap() - dense).abs() < 1e-12 * dense.max(1.0));
        let z = LabeledOperator::new(&reg, &["c"], random_hermitian(2, &mut rng)).unwrap();
        assert_eq!(x.commutator_norm(&z).unwrap(), 0.0);
    }

    #[test]
    fn eigenvalues_of_tiny_operators_keep_relative_accuracy() {
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let mut rng = seeded(5);
        let p = crate::rng::random_density(4, 2, &mut rng);
        let op = LabeledOperator::new(&reg, &["a", "b"], linalg::scale_real(&p, 1e-9)).unwrap();
        let min = op.eigenvalues().unwrap().last().copied().unwrap();
        assert!(min.abs() < 1e-24, "{min:e}");
    }
}
