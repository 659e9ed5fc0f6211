//! Block structure of `𝓗_X` induced by a commuting pair `A_{UX} ⊗ I_W`,
//! `I_U ⊗ B_{WX}`.
//!
//! The slices `⟨i|A|j⟩_U` generate a *-algebra on `𝓗_X`; adjoining the center
//! of the algebra generated by the `B` slices gives an algebra `𝒞` whose
//! Wedderburn form `⊕_j B(L_j) ⊗ I_{R_j}` is the decomposition
//! `𝓗_X = ⊕_j 𝓗_{L_j} ⊗ 𝓗_{R_j}`. The center of `𝒞` is found by solving
//! `[Y, g] = 0` inside a basis of `𝒞`, its eigenspaces give the blocks, and
//! within each block a generic element separates the `L_j` factor.

use faer::{c64, Mat};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::operator::{LabeledOperator, Tolerances};
use crate::error::{QbpError, Result};
use crate::linalg::{self, CMat, Split};

/// One summand `𝓗_{L_j} ⊗ 𝓗_{R_j}` with its isometry into `𝓗_X`.
#[derive(Clone, Debug)]
pub struct Block {
    pub d_left: usize,
    pub d_right: usize,
    /// `dim X × (d_left·d_right)`, columns indexed `l·d_right + r`.
    pub isometry: CMat,
}

#[derive(Clone, Debug)]
pub struct BlockStructure {
    pub blocks: Vec<Block>,
    /// Largest deviation of `A` from the form `⊕ a_j ⊗ I_{R_j}`.
    pub residual_a: f64,
    /// Largest deviation of `B` from the form `⊕ I_{L_j} ⊗ b_j`.
    pub residual_b: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecomposabilityReport {
    pub decomposable: bool,
    pub off_block: f64,
    pub schmidt_residual: f64,
}

impl BlockStructure {
    pub fn summary(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.d_left, b.d_right)).collect()
    }

    /// Tests whether an operator on `𝓗_X` has the form `⊕_j c_{L_j} ⊗ c_{R_j}`.
    pub fn decomposable(&self, c: &CMat, tol: f64) -> Result<DecomposabilityReport> {
        let norm = linalg::fro_norm(c).max(f64::MIN_POSITIVE);
        let mut off = 0.0_f64;
        let mut schmidt = 0.0_f64;
        for (j, bj) in self.blocks.iter().enumerate() {
            for (k, bk) in self.blocks.iter().enumerate() {
                let x = bj.isometry.adjoint() * c * &bk.isometry;
                if j != k {
                    off = off.max(linalg::fro_norm(&x));
                    continue;
                }
                let (l, r) = (bj.d_left, bj.d_right);
                let re = Mat::from_fn(l * l, r * r, |p, q| {
                    let (l1, l2) = (p / l, p % l);
                    let (r1, r2) = (q / r, q % r);
                    x[(l1 * r + r1, l2 * r + r2)]
                });
                let (_, s, _) = linalg::svd(&re)?;
                let tail: f64 = s.iter().skip(1).map(|v| v * v).sum::<f64>().sqrt();
                schmidt = schmidt.max(tail);
            }
        }
        Ok(DecomposabilityReport {
            decomposable: off <= tol * norm && schmidt <= tol * norm,
            off_block: off / norm,
            schmidt_residual: schmidt / norm,
        })
    }
}

/// `⟨i|_S M |j⟩_S` for all `i, j` over the factors at `positions`.
fn slices(m: &CMat, dims: &[usize], positions: &[usize]) -> Vec<CMat> {
    let sp = Split::new(dims, positions);
    let mut out = Vec::with_capacity(sp.sdim * sp.sdim);
    for i in 0..sp.sdim {
        for j in 0..sp.sdim {
            out.push(Mat::from_fn(sp.rdim, sp.rdim, |a, b| m[(sp.at(i, a), sp.at(j, b))]));
        }
    }
    out
}

fn inner(a: &CMat, b: &CMat) -> c64 {
    let mut s = c64::new(0.0, 0.0);
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].conj() * b[(i, j)];
        }
    }
    s
}

/// Adds `m` to an orthonormal (Frobenius) basis if it is independent.
fn try_add(basis: &mut Vec<CMat>, m: &CMat, tol: f64) -> bool {
    let mut v = m.clone();
    for _ in 0..2 {
        for b in basis.iter() {
            let c = inner(b, &v);
            v -= linalg::scale(b, c);
        }
    }
    let n = linalg::fro_norm(&v);
    if n > tol * linalg::fro_norm(m).max(1.0) {
        basis.push(linalg::scale_real(&v, 1.0 / n));
        true
    } else {
        false
    }
}

/// Orthonormal basis of the unital *-algebra generated by `gens`.
fn algebra_span(gens: &[CMat], dim: usize) -> Vec<CMat> {
    let tol = 1e-9;
    let mut all: Vec<CMat> = Vec::new();
    for g in gens {
        if linalg::fro_norm(g) > 0.0 {
            all.push(g.clone());
            all.push(linalg::dagger(g));
        }
    }
    let mut basis = Vec::new();
    try_add(&mut basis, &linalg::identity(dim), tol);
    for g in &all {
        try_add(&mut basis, g, tol);
    }
    let mut start = 0;
    while start < basis.len() && basis.len() < dim * dim {
        let end = basis.len();
        for k in start..end {
            for g in &all {
                let p = &basis[k] * g;
                try_add(&mut basis, &p, tol);
            }
        }
        start = end;
    }
    basis
}

/// Basis of `{Y ∈ span(basis) : [Y, g] = 0 ∀ g ∈ gens}`.
fn center_within(basis: &[CMat], gens: &[CMat]) -> Result<Vec<CMat>> {
    if basis.is_empty() {
        return Ok(vec![]);
    }
    let d = basis[0].nrows();
    let mut comms: Vec<Vec<CMat>> = Vec::new();
    for b in basis {
        comms.push(gens.iter().flat_map(|g| [linalg::commutator(b, g), linalg::commutator(b, &linalg::dagger(g))]).collect());
    }
    let rows = gens.len() * 2 * d * d;
    let m = Mat::from_fn(rows.max(1), basis.len(), |r, k| {
        if rows == 0 {
            return c64::new(0.0, 0.0);
        }
        let g = r / (d * d);
        let e = r % (d * d);
        comms[k][g][(e / d, e % d)]
    });
    let ns = linalg::null_space(&m, 1e-9)?;
    let mut out = Vec::new();
    for c in 0..ns.ncols() {
        let mut y = linalg::zeros(d);
        for (k, b) in basis.iter().enumerate() {
            y += linalg::scale(b, ns[(k, c)]);
        }
        out.push(y);
    }
    Ok(out)
}

/// Groups descending eigenvalues into clusters of near-equal values.
fn clusters(values: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (k, &v) in values.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (values[g[0]] - v).abs() <= tol => g.push(k),
            _ => groups.push(vec![k]),
        }
    }
    groups
}

fn columns(m: &CMat, cols: &[usize]) -> CMat {
    Mat::from_fn(m.nrows(), cols.len(), |i, k| m[(i, cols[k])])
}

fn random_combination(basis: &[CMat], rng: &mut ChaCha8Rng) -> CMat {
    let d = basis[0].nrows();
    let mut y = linalg::zeros(d);
    for b in basis {
        y += linalg::scale(b, c64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    }
    y
}

/// Finds the decomposition of `𝓗_X` for commuting `A ⊗ I_W` and `I_U ⊗ B`.
pub fn commuting_pair_decomposition(a: &LabeledOperator, b: &LabeledOperator, x: &[&str]) -> Result<BlockStructure> {
    let tol = Tolerances::default();
    let reg = a.registry().clone();
    let x_idx = reg.resolve(x)?;
    for s in &x_idx {
        if !a.support().contains(s) && !b.support().contains(s) {
            return Err(QbpError::LabelNotSubset(reg.labels_of(&x_idx)));
        }
    }
    let a = a.embed_indices(&union_sorted(a.support(), &x_idx))?;
    let b = b.embed_indices(&union_sorted(b.support(), &x_idx))?;
    let u_idx: Vec<usize> = a.support().iter().copied().filter(|s| !x_idx.contains(s)).collect();
    let w_idx: Vec<usize> = b.support().iter().copied().filter(|s| !x_idx.contains(s)).collect();
    if u_idx.iter().any(|s| w_idx.contains(s)) {
        return Err(QbpError::OverlappingSets(reg.labels_of(&u_idx)));
    }
    let comm = a.commutator_norm(&b)?;
    let scale = a.fro_norm() * b.fro_norm();
    if comm > tol.comm * scale.max(f64::MIN_POSITIVE) {
        return Err(QbpError::NotCommuting(comm / scale.max(f64::MIN_POSITIVE)));
    }
    let dx = reg.dim_product(&x_idx);
    let upos: Vec<usize> = u_idx.iter().map(|s| a.support().iter().position(|t| t == s).unwrap()).collect();
    let wpos: Vec<usize> = w_idx.iter().map(|s| b.support().iter().position(|t| t == s).unwrap()).collect();
    let a_slices = slices(a.matrix(), &a.dims(), &upos);
    let b_slices = slices(b.matrix(), &b.dims(), &wpos);

    let b_alg = algebra_span(&b_slices, dx);
    let zb = center_within(&b_alg, &b_slices)?;
    let mut c_gens = a_slices.clone();
    c_gens.extend(zb.iter().cloned());
    let c_alg = algebra_span(&c_gens, dx);
    let zc = center_within(&c_alg, &c_gens)?;

    let mut rng = ChaCha8Rng::seed_from_u64(0x0b10c);
    let central = linalg::herm_part(&random_combination(&zc, &mut rng));
    let ce = linalg::eigh(&central)?;
    let spread = ce.max_abs().max(1.0);
    let mut blocks = Vec::new();
    for group in clusters(&ce.values, 1e-7 * spread) {
        let q = columns(&ce.vectors, &group);
        let h = linalg::herm_part(&random_combination(&c_alg, &mut rng));
        let hj = q.adjoint() * &h * &q;
        let he = linalg::eigh(&hj)?;
        let hspread = he.max_abs().max(1.0);
        let sub = clusters(&he.values, 1e-7 * hspread);
        let r = sub[0].len();
        if sub.iter().any(|s| s.len() != r) {
            return Err(QbpError::Numerical("block multiplicities are not uniform".into()));
        }
        let spaces: Vec<CMat> = sub.iter().map(|s| &q * columns(&he.vectors, s)).collect();
        let l = spaces.len();
        let mut iso = Mat::zeros(dx, l * r);
        for rr in 0..r {
            for i in 0..dx {
                iso[(i, rr)] = spaces[0][(i, rr)];
            }
        }
        for k in 1..l {
            let mut linked = None;
            for _ in 0..8 {
                let g = random_combination(&c_alg, &mut rng);
                let n = spaces[k].adjoint() * &g * &spaces[0];
                let s = linalg::fro_norm(&n) / (r as f64).sqrt();
                if s > 1e-6 {
                    linked = Some(&spaces[k] * linalg::scale_real(&n, 1.0 / s));
                    break;
                }
            }
            let e = linked.ok_or_else(|| QbpError::Numerical("could not link block factors".into()))?;
            for rr in 0..r {
                for i in 0..dx {
                    iso[(i, k * r + rr)] = e[(i, rr)];
                }
            }
        }
        blocks.push(Block { d_left: l, d_right: r, isometry: iso });
    }

    let residual_a = block_residual(&blocks, &a_slices, true);
    let residual_b = block_residual(&blocks, &b_slices, false);
    Ok(BlockStructure { blocks, residual_a, residual_b })
}

fn union_sorted(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut u: Vec<usize> = a.iter().chain(b.iter()).copied().collect();
    u.sort_unstable();
    u.dedup();
    u
}

/// Deviation of slices from `a ⊗ I_R` (`left = true`) or `I_L ⊗ b`.
fn block_residual(blocks: &[Block], slices: &[CMat], left: bool) -> f64 {
    let mut worst = 0.0_f64;
    for s in slices {
        let norm = linalg::fro_norm(s).max(1.0);
        for (j, bj) in blocks.iter().enumerate() {
            for (k, bk) in blocks.iter().enumerate() {
                let x = bj.isometry.adjoint() * s * &bk.isometry;
                if j != k {
                    worst = worst.max(linalg::fro_norm(&x) / norm);
                    continue;
                }
                let (l, r) = (bj.d_left, bj.d_right);
                let fit = if left {
                    let red = linalg::partial_trace_matrix(&x, &[l, r], &[0]);
                    linalg::kron(&linalg::scale_real(&red, 1.0 / r as f64), &linalg::identity(r))
                } else {
                    let red = linalg::partial_trace_matrix(&x, &[l, r], &[1]);
                    linalg::kron(&linalg::identity(l), &linalg::scale_real(&red, 1.0 / l as f64))
                };
                worst = worst.max(linalg::fro_dist(&x, &fit) / norm);
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_core::SystemRegistry;

    #[test]
    fn trivial_x_single_block() {
        let reg = SystemRegistry::new([("u", 2), ("x", 1), ("w", 2)]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["u", "x"], &[1.0, 2.0]).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["w", "x"], &[3.0, 5.0]).unwrap();
        let s = commuting_pair_decomposition(&a, &b, &["x"]).unwrap();
        assert_eq!(s.summary(), vec![(1, 1)]);
    }

    #[test]
    fn diagonal_pair_gives_joint_eigenspaces() {
        let reg = SystemRegistry::new([("u", 2), ("x", 4), ("w", 2)]).unwrap();
        // x = diag(1,1,2,2), y = diag(5,6,5,6): joint eigenspaces are the 4 basis vectors
        let ax = LabeledOperator::diagonal(&reg, &["x"], &[1.0, 1.0, 2.0, 2.0]).unwrap();
        let au = LabeledOperator::diagonal(&reg, &["u"], &[1.0, 3.0]).unwrap();
        let by = LabeledOperator::diagonal(&reg, &["x"], &[5.0, 6.0, 5.0, 6.0]).unwrap();
        let bw = LabeledOperator::diagonal(&reg, &["w"], &[2.0, 7.0]).unwrap();
        let a = au.tensor(&ax).unwrap();
        let b = by.tensor(&bw).unwrap();
        let s = commuting_pair_decomposition(&a, &b, &["x"]).unwrap();
        assert_eq!(s.blocks.len(), 4);
        assert!(s.blocks.iter().all(|b| b.d_left == 1 && b.d_right == 1));
        assert!(s.residual_a < 1e-9 && s.residual_b < 1e-9);
    }

    #[test]
    fn non_commuting_rejected() {
        let reg = SystemRegistry::qubits(&["u", "x", "w"]).unwrap();
        let h = c64::new(0.5, 0.0);
        let plus = LabeledOperator::new(&reg, &["x"], Mat::from_fn(2, 2, |_, _| h)).unwrap();
        let z = LabeledOperator::diagonal(&reg, &["x"], &[1.0, 0.0]).unwrap();
        let a = LabeledOperator::identity(&reg, &["u"]).unwrap().tensor(&plus).unwrap();
        let b = z.tensor(&LabeledOperator::identity(&reg, &["w"]).unwrap()).unwrap();
        assert!(matches!(commuting_pair_decomposition(&a, &b, &["x"]), Err(QbpError::NotCommuting(_))));
    }
}
