//! The `⋆ⁿ` and `⊙` products.

use faer::Mat;

use super::operator::{apply_spectral, check_psd_spectrum, support_cutoff, LabeledOperator, MatFun, Order, Tolerances};
use crate::error::{QbpError, Result};
use crate::linalg::{self, CMat, Eigh};

/// `A ⋆ⁿ B = (A^{1/2n} B^{1/n} A^{1/2n})^n` on the union of supports.
pub fn star_n(a: &LabeledOperator, b: &LabeledOperator, n: u32) -> Result<LabeledOperator> {
    star_n_with(a, None, b, None, n)
}

/// `star_n` reusing eigendecompositions already at hand.
pub(crate) fn star_n_with(a: &LabeledOperator, a_eig: Option<&Eigh>, b: &LabeledOperator, b_eig: Option<&Eigh>, n: u32) -> Result<LabeledOperator> {
    if n == 0 {
        return Err(QbpError::InvalidInput("star product order must be positive".into()));
    }
    let supp = Tolerances::default().supp;
    let spectral = |op: &LabeledOperator, e: Option<&Eigh>, f: MatFun| -> Result<LabeledOperator> {
        match e {
            Some(e) => Ok(op.with_matrix(apply_spectral(e, f, supp)?)),
            None => op.matfun(f),
        }
    };
    let nf = n as f64;
    let ar = spectral(a, a_eig, MatFun::Power(1.0 / (2.0 * nf)))?;
    let br = if n == 1 {
        match b_eig {
            Some(e) => check_psd_spectrum(e, supp)?,
            None => b.check_psd(supp)?,
        }
        b.clone()
    } else {
        spectral(b, b_eig, MatFun::Power(1.0 / nf))?
    };
    let inner = ar.mul(&br)?.mul(&ar)?;
    let m = linalg::herm_part(inner.matrix());
    let out = if n == 1 { m } else { linalg::herm_part(&linalg::matpow_int(&m, n)) };
    Ok(inner.with_matrix(out))
}

/// `A ⊙ B = exp(log A + log B)` restricted to the intersection of supports.
pub fn odot(a: &LabeledOperator, b: &LabeledOperator) -> Result<LabeledOperator> {
    odot_all(&[a.clone(), b.clone()])
}

/// `⊙` of several operators on the union of their supports.
pub fn odot_all(ops: &[LabeledOperator]) -> Result<LabeledOperator> {
    let first = ops.first().ok_or_else(|| QbpError::InvalidInput("empty ⊙ product".into()))?;
    let registry = first.registry().clone();
    let mut union: Vec<usize> = Vec::new();
    for op in ops {
        for &s in op.support() {
            if !union.contains(&s) {
                union.push(s);
            }
        }
    }
    union.sort_unstable();
    let dims: Vec<usize> = union.iter().map(|&i| registry.dims()[i]).collect();
    let n: usize = dims.iter().product();
    let supp = Tolerances::default().supp;
    let mut log_sum = linalg::zeros(n);
    let mut projectors: Vec<CMat> = Vec::new();
    for op in ops {
        let e = op.eigh()?;
        let logm = apply_spectral(&e, MatFun::Ln, supp)?;
        let cut = support_cutoff(&e, supp);
        let rank = e.values.iter().filter(|&&v| v > cut && v > 0.0).count();
        let pos: Vec<usize> = op.support().iter().map(|s| union.iter().position(|u| u == s).unwrap()).collect();
        log_sum += linalg::embed_matrix(&logm, &dims, &pos);
        if rank < op.dim() {
            let p = e.rebuild(|v| if v > cut && v > 0.0 { 1.0 } else { 0.0 });
            projectors.push(linalg::embed_matrix(&p, &dims, &pos));
        }
    }
    let out = if projectors.is_empty() {
        linalg::eigh(&log_sum)?.rebuild(f64::exp)
    } else {
        // orthonormal basis of the common support
        let mut q = linalg::identity(n);
        for p in &projectors {
            if q.ncols() == 0 {
                break;
            }
            let r = q.adjoint() * p * &q;
            let e = linalg::eigh(&r)?;
            let keep: Vec<usize> = (0..e.values.len()).filter(|&k| e.values[k] > 0.5).collect();
            let v = Mat::from_fn(r.nrows(), keep.len(), |i, k| e.vectors[(i, keep[k])]);
            q = &q * &v;
        }
        if q.ncols() == 0 {
            linalg::zeros(n)
        } else {
            let l = q.adjoint() * &log_sum * &q;
            let ex = linalg::eigh(&l)?.rebuild(f64::exp);
            &q * &ex * q.adjoint()
        }
    };
    Ok(LabeledOperator::from_parts(&registry, union, linalg::herm_part(&out)))
}

/// `⋆ⁿ` for finite order, `⊙` for infinite order.
pub fn product(a: &LabeledOperator, b: &LabeledOperator, order: Order) -> Result<LabeledOperator> {
    match order {
        Order::Finite(n) => star_n(a, b, n),
        Order::Infinite => odot(a, b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator_core::SystemRegistry;
    use faer::c64;

    #[test]
    fn star_identity_absorbs() {
        let reg = SystemRegistry::qubits(&["a"]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["a"], &[0.3, 0.7]).unwrap();
        let i = LabeledOperator::identity(&reg, &["a"]).unwrap();
        for n in [1, 2, 5] {
            assert!(star_n(&a, &i, n).unwrap().fro_dist(&a).unwrap() < 1e-12);
        }
    }

    #[test]
    fn star_commuting_diagonal() {
        let reg = SystemRegistry::qubits(&["a"]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["a"], &[1.0, 2.0]).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["a"], &[3.0, 4.0]).unwrap();
        let r = star_n(&a, &b, 5).unwrap();
        let want = LabeledOperator::diagonal(&reg, &["a"], &[3.0, 8.0]).unwrap();
        assert!(r.fro_dist(&want).unwrap() < 1e-10);
    }

    #[test]
    fn star_projector_gives_aba() {
        let reg = SystemRegistry::qubits(&["a"]).unwrap();
        let h = c64::new(0.5, 0.0);
        let plus = LabeledOperator::new(&reg, &["a"], Mat::from_fn(2, 2, |_, _| h)).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["a"], &[1.0, 0.0]).unwrap();
        let r = star_n(&plus, &b, 1).unwrap();
        assert!(r.fro_dist(&plus.scaled(0.5)).unwrap() < 1e-12);
    }

    #[test]
    fn odot_commuting_and_identity() {
        let reg = SystemRegistry::qubits(&["a"]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["a"], &[2.0, 3.0]).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["a"], &[5.0, 7.0]).unwrap();
        let want = LabeledOperator::diagonal(&reg, &["a"], &[10.0, 21.0]).unwrap();
        assert!(odot(&a, &b).unwrap().fro_dist(&want).unwrap() < 1e-10);
        let i = LabeledOperator::identity(&reg, &["a"]).unwrap();
        assert!(odot(&a, &i).unwrap().fro_dist(&a).unwrap() < 1e-12);
    }

    #[test]
    fn odot_restricts_to_common_support() {
        let reg = SystemRegistry::qubits(&["a"]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["a"], &[2.0, 0.0]).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["a"], &[5.0, 7.0]).unwrap();
        let want = LabeledOperator::diagonal(&reg, &["a"], &[10.0, 0.0]).unwrap();
        assert!(odot(&a, &b).unwrap().fro_dist(&want).unwrap() < 1e-10);
    }

    #[test]
    fn star_on_different_supports_embeds() {
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let a = LabeledOperator::diagonal(&reg, &["a"], &[1.0, 2.0]).unwrap();
        let b = LabeledOperator::diagonal(&reg, &["b"], &[3.0, 4.0]).unwrap();
        let r = star_n(&a, &b, 3).unwrap();
        let want = LabeledOperator::diagonal(&reg, &["a", "b"], &[3.0, 4.0, 6.0, 8.0]).unwrap();
        assert!(r.fro_dist(&want).unwrap() < 1e-10);
    }
}
