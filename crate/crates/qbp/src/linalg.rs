//! Dense complex matrix kernel.
//!
//! Thin helpers over `faer` plus the tensor-index bookkeeping used to embed,
//! trace and permute operators on ordered tensor products of subsystems.
//! Tensor order is row-major: the first factor is the most significant digit.

use faer::{c64, Mat, Side};

use crate::error::{QbpError, Result};

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };

pub fn zeros(n: usize) -> CMat {
    Mat::zeros(n, n)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { ONE } else { ZERO })
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { c64::new(values[i], 0.0) } else { ZERO })
}

pub fn from_rows(rows: &[Vec<c64>]) -> CMat {
    let n = rows.len();
    Mat::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}

pub fn dagger(a: &CMat) -> CMat {
    a.adjoint().to_owned()
}

pub fn transpose(a: &CMat) -> CMat {
    a.transpose().to_owned()
}

pub fn conj(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)].conj())
}

pub fn scale(a: &CMat, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn scale_real(a: &CMat, s: f64) -> CMat {
    scale(a, c64::new(s, 0.0))
}

pub fn trace(a: &CMat) -> c64 {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn fro_norm(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn fro_dist(a: &CMat, b: &CMat) -> f64 {
    fro_norm(&(a - b))
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    Mat::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

pub fn herm_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Frobenius norm of `a - a†`.
pub fn herm_deviation(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for j in 0..n {
        for i in 0..n {
            s += (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
    }
    s.sqrt()
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

pub fn matpow_int(a: &CMat, mut n: u32) -> CMat {
    let mut result = identity(a.nrows());
    let mut base = a.clone();
    let mut first = true;
    while n > 0 {
        if n & 1 == 1 {
            result = if first { base.clone() } else { &result * &base };
            first = false;
        }
        n >>= 1;
        if n > 0 {
            base = &base * &base;
        }
    }
    result
}

/// Hermitian eigendecomposition with eigenvalues sorted in descending order.
#[derive(Clone, Debug)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl Eigh {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Rebuilds `V f(Λ) V†`.
    pub fn rebuild(&self, f: impl Fn(f64) -> f64) -> CMat {
        let fv: Vec<f64> = self.values.iter().map(|&v| f(v)).collect();
        rebuild_from(&self.vectors, &fv)
    }
}

pub fn rebuild_from(vectors: &CMat, values: &[f64]) -> CMat {
    let n = vectors.nrows();
    let keep: Vec<usize> = (0..values.len()).filter(|&k| values[k] != 0.0).collect();
    if keep.is_empty() {
        return zeros(n);
    }
    let w = Mat::from_fn(n, keep.len(), |i, k| vectors[(i, keep[k])] * values[keep[k]]);
    let v = Mat::from_fn(n, keep.len(), |i, k| vectors[(i, keep[k])]);
    &w * v.adjoint()
}

pub fn eigh(a: &CMat) -> Result<Eigh> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Eigh { values: vec![], vectors: zeros(0) });
    }
    // the solver's deflation threshold is absolute, so work at unit scale
    let h = herm_part(a);
    let scale = max_entry(&h);
    let h = scale_real(&h, 1.0 / scale);
    let e = h
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| QbpError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
    let s = e.S();
    let u = e.U();
    let mut order: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re * scale).collect();
    order.sort_by(|&x, &y| vals[y].partial_cmp(&vals[x]).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&k| vals[k]).collect();
    let vectors = Mat::from_fn(n, n, |i, k| u[(i, order[k])]);
    Ok(Eigh { values, vectors })
}

/// Eigenvalues of the Hermitian part, descending, without eigenvectors.
pub fn eigvals_herm(a: &CMat) -> Result<Vec<f64>> {
    let n = a.nrows();
    let h = herm_part(a);
    let scale = max_entry(&h);
    let h = scale_real(&h, 1.0 / scale);
    let mut v: Vec<f64> = h
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| QbpError::Numerical(format!("eigendecomposition failed: {e:?}")))?
        .into_iter()
        .map(|x| x * scale)
        .collect();
    debug_assert_eq!(v.len(), n);
    v.sort_by(|x, y| y.partial_cmp(x).unwrap_or(std::cmp::Ordering::Equal));
    Ok(v)
}

fn max_entry(h: &CMat) -> f64 {
    let n = h.nrows();
    let m = (0..n).flat_map(|i| (0..h.ncols()).map(move |j| (i, j))).fold(0.0_f64, |m, (i, j)| m.max(h[(i, j)].norm()));
    if m > 0.0 && m.is_finite() {
        m
    } else {
        1.0
    }
}

/// Sum of singular values.
pub fn trace_norm(a: &CMat) -> Result<f64> {
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    if a.nrows() == a.ncols() && herm_deviation(a) <= 1e-12 * fro_norm(a) {
        return Ok(eigvals_herm(a)?.iter().map(|x| x.abs()).sum());
    }
    let sv = a
        .singular_values()
        .map_err(|e| QbpError::Numerical(format!("svd failed: {e:?}")))?;
    Ok(sv.iter().sum())
}

/// Half the trace norm of the difference.
pub fn trace_distance(a: &CMat, b: &CMat) -> Result<f64> {
    Ok(0.5 * trace_norm(&(a - b))?)
}

/// Full singular value decomposition `a = U diag(s) V†`.
pub fn svd(a: &CMat) -> Result<(CMat, Vec<f64>, CMat)> {
    let d = a
        .svd()
        .map_err(|e| QbpError::Numerical(format!("svd failed: {e:?}")))?;
    let s = d.S();
    let k = a.nrows().min(a.ncols());
    Ok((d.U().to_owned(), (0..k).map(|i| s[i].re).collect(), d.V().to_owned()))
}

/// Orthonormal basis (columns) of the null space of `a`, with singular
/// values at or below `tol * max(1, largest)` treated as zero.
pub fn null_space(a: &CMat, tol: f64) -> Result<CMat> {
    let ncols = a.ncols();
    if a.nrows() == 0 {
        return Ok(identity(ncols));
    }
    let (_, s, v) = svd(a)?;
    let smax = s.iter().cloned().fold(0.0, f64::max).max(1.0);
    let rank = s.iter().filter(|&&x| x > tol * smax).count();
    let cols: Vec<usize> = (rank..ncols).collect();
    Ok(Mat::from_fn(ncols, cols.len(), |i, k| v[(i, cols[k])]))
}

/// Digit decomposition of a tensor index set against a selection of factors.
///
/// `full[s * rdim + r]` gives the full index whose selected digits compose to
/// `s` and whose remaining digits compose to `r`.
#[derive(Clone, Debug)]
pub struct Split {
    pub sdim: usize,
    pub rdim: usize,
    pub full: Vec<usize>,
}

impl Split {
    pub fn new(dims: &[usize], selected: &[usize]) -> Self {
        let total: usize = dims.iter().product();
        let sdim: usize = selected.iter().map(|&p| dims[p]).product();
        let rdim = total / sdim.max(1);
        let rest: Vec<usize> = (0..dims.len()).filter(|p| !selected.contains(p)).collect();
        let mut full = vec![0usize; total];
        let mut digits = vec![0usize; dims.len()];
        for idx in 0..total {
            let mut s = 0;
            for &p in selected {
                s = s * dims[p] + digits[p];
            }
            let mut r = 0;
            for &p in &rest {
                r = r * dims[p] + digits[p];
            }
            full[s * rdim + r] = idx;
            for p in (0..dims.len()).rev() {
                digits[p] += 1;
                if digits[p] < dims[p] {
                    break;
                }
                digits[p] = 0;
            }
        }
        Split { sdim, rdim, full }
    }

    #[inline]
    pub fn at(&self, s: usize, r: usize) -> usize {
        self.full[s * self.rdim + r]
    }
}

/// `a ⊗ I` placed on factor positions `positions` of a space with `dims`.
pub fn embed_matrix(a: &CMat, dims: &[usize], positions: &[usize]) -> CMat {
    let sp = Split::new(dims, positions);
    let n: usize = dims.iter().product();
    let mut out = zeros(n);
    for r in 0..sp.rdim {
        for b in 0..sp.sdim {
            let col = sp.at(b, r);
            for a_ in 0..sp.sdim {
                let v = a[(a_, b)];
                if v != ZERO {
                    out[(sp.at(a_, r), col)] = v;
                }
            }
        }
    }
    out
}

/// `(a ⊗ I) m` without forming the embedded matrix.
pub fn apply_left(a: &CMat, dims: &[usize], positions: &[usize], m: &CMat) -> CMat {
    let sp = Split::new(dims, positions);
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    let mut buf = vec![ZERO; sp.sdim];
    for c in 0..m.ncols() {
        for r in 0..sp.rdim {
            for (b, x) in buf.iter_mut().enumerate() {
                *x = m[(sp.at(b, r), c)];
            }
            for a_ in 0..sp.sdim {
                let mut acc = ZERO;
                for (b, x) in buf.iter().enumerate() {
                    acc += a[(a_, b)] * x;
                }
                out[(sp.at(a_, r), c)] = acc;
            }
        }
    }
    out
}

/// `m (a ⊗ I)` without forming the embedded matrix.
pub fn apply_right(m: &CMat, a: &CMat, dims: &[usize], positions: &[usize]) -> CMat {
    // m (a ⊗ I) = ((a† ⊗ I) m†)†
    dagger(&apply_left(&dagger(a), dims, positions, &dagger(m)))
}

/// Partial trace keeping the factors at `keep` (in their given order).
pub fn partial_trace_matrix(m: &CMat, dims: &[usize], keep: &[usize]) -> CMat {
    let sp = Split::new(dims, keep);
    let mut out = zeros(sp.sdim);
    for j in 0..sp.sdim {
        for i in 0..sp.sdim {
            let mut acc = ZERO;
            for t in 0..sp.rdim {
                acc += m[(sp.at(i, t), sp.at(j, t))];
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `⟨α| m |α⟩` over the factors at `positions`, with `vecs[k]` the state on
/// `positions[k]`. Returns an operator on the remaining factors.
pub fn partial_contract(m: &CMat, dims: &[usize], positions: &[usize], vecs: &[Vec<c64>]) -> CMat {
    let sp = Split::new(dims, positions);
    let mut amp = vec![ONE; sp.sdim];
    // amplitude of the product vector on the selected digits
    let sel_dims: Vec<usize> = positions.iter().map(|&p| dims[p]).collect();
    for (s, a) in amp.iter_mut().enumerate() {
        let mut rem = s;
        for k in (0..sel_dims.len()).rev() {
            let d = rem % sel_dims[k];
            rem /= sel_dims[k];
            *a *= vecs[k][d];
        }
    }
    let mut out = zeros(sp.rdim);
    for j in 0..sp.rdim {
        for i in 0..sp.rdim {
            let mut acc = ZERO;
            for s1 in 0..sp.sdim {
                if amp[s1] == ZERO {
                    continue;
                }
                for s2 in 0..sp.sdim {
                    if amp[s2] == ZERO {
                        continue;
                    }
                    acc += amp[s1].conj() * m[(sp.at(s1, i), sp.at(s2, j))] * amp[s2];
                }
            }
            out[(i, j)] = acc;
        }
    }
    out
}

/// `‖[A ⊗ I, I ⊗ B]‖_F` for `a` on `A' ⊗ S` and `b` on `S ⊗ B'`, contracting
/// only over the shared factor `S`.
pub fn commutator_norm_shared(a: &CMat, b: &CMat, da: usize, ds: usize, db: usize) -> f64 {
    let mut total = 0.0;
    for al in 0..da {
        for al2 in 0..da {
            for be in 0..db {
                for be2 in 0..db {
                    for i in 0..ds {
                        for j in 0..ds {
                            let mut c = c64::new(0.0, 0.0);
                            for k in 0..ds {
                                c += a[(al * ds + i, al2 * ds + k)] * b[(k * db + be, j * db + be2)];
                                c -= b[(i * db + be, k * db + be2)] * a[(al * ds + k, al2 * ds + j)];
                            }
                            total += c.norm_sqr();
                        }
                    }
                }
            }
        }
    }
    total.sqrt()
}

/// Reorders tensor factors: factor `k` of the result is factor `perm[k]` of `m`.
pub fn permute_factors(m: &CMat, dims: &[usize], perm: &[usize]) -> CMat {
    let p = permutation_map(dims, perm);
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(p[i], p[j])])
}

/// Index map for a factor permutation: `map[new_index] = old_index`.
pub fn permutation_map(dims: &[usize], perm: &[usize]) -> Vec<usize> {
    let total: usize = dims.iter().product();
    let new_dims: Vec<usize> = perm.iter().map(|&k| dims[k]).collect();
    let mut strides = vec![1usize; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * dims[k + 1];
    }
    let mut map = vec![0usize; total];
    let mut digits = vec![0usize; dims.len()];
    for (idx, slot) in map.iter_mut().enumerate() {
        *slot = digits.iter().zip(perm).map(|(&d, &k)| d * strides[k]).sum();
        let _ = idx;
        for q in (0..new_dims.len()).rev() {
            digits[q] += 1;
            if digits[q] < new_dims[q] {
                break;
            }
            digits[q] = 0;
        }
    }
    map
}
