//! Conditional and mutual density operators, entropies, and conditional
//! independence residuals.

use serde::Serialize;

use super::operator::{LabeledOperator, Order};
use super::products::{odot, odot_all, product};
use crate::error::{QbpError, Result};
use crate::linalg;

fn disjoint(op: &LabeledOperator, sets: &[&[&str]]) -> Result<()> {
    let mut seen: Vec<usize> = Vec::new();
    let mut overlap = Vec::new();
    for set in sets {
        for &i in &op.registry().resolve(set)? {
            if seen.contains(&i) {
                overlap.push(i);
            }
            seen.push(i);
        }
    }
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(QbpError::OverlappingSets(op.registry().labels_of(&overlap)))
    }
}

fn union<'a>(sets: &[&[&'a str]]) -> Vec<&'a str> {
    let mut out: Vec<&str> = Vec::new();
    for s in sets {
        for l in s.iter() {
            if !out.contains(l) {
                out.push(l);
            }
        }
    }
    out
}

/// Reduced state on `labels`; the empty set gives the scalar trace.
pub fn marginal(state: &LabeledOperator, labels: &[&str]) -> Result<LabeledOperator> {
    state.reduce_to(labels)
}

/// `ρ_{U|W}^{(n)} = ρ_W^{-1} ⋆ⁿ ρ_{U∪W}`, with the pseudoinverse on the support of `ρ_W`.
pub fn conditional_density(state: &LabeledOperator, u: &[&str], w: &[&str], order: Order) -> Result<LabeledOperator> {
    disjoint(state, &[u, w])?;
    let uw = union(&[u, w]);
    let rho_uw = state.reduce_to(&uw)?;
    if w.is_empty() {
        return Ok(rho_uw);
    }
    let inv_w = state.reduce_to(w)?.pinv()?;
    product(&inv_w, &rho_uw, order)
}

/// `ρ_{U:W}^{(n)} = (ρ_U^{-1} ⊗ ρ_W^{-1}) ⋆ⁿ ρ_{U∪W}`.
pub fn mutual_density(state: &LabeledOperator, u: &[&str], w: &[&str], order: Order) -> Result<LabeledOperator> {
    disjoint(state, &[u, w])?;
    let uw = union(&[u, w]);
    let rho_uw = state.reduce_to(&uw)?;
    let inv_u = state.reduce_to(u)?.pinv()?;
    let inv_w = state.reduce_to(w)?.pinv()?;
    let inv = inv_u.tensor(&inv_w)?;
    product(&inv, &rho_uw, order)
}

/// Von Neumann entropy of `ρ_U` in bits.
pub fn entropy(state: &LabeledOperator, u: &[&str]) -> Result<f64> {
    let tr = state.trace();
    if (tr - 1.0).abs() > 1e-8 {
        return Err(QbpError::NotNormalized(tr));
    }
    if u.is_empty() {
        return Ok(0.0);
    }
    let rho = state.reduce_to(u)?;
    Ok(entropy_of_spectrum(&rho.eigenvalues()?))
}

pub(crate) fn entropy_of_spectrum(values: &[f64]) -> f64 {
    values.iter().filter(|&&v| v > 0.0).map(|&v| -v * v.log2()).sum()
}

/// `S(U:W|X) = S(U∪X) + S(W∪X) − S(X) − S(U∪W∪X)` in bits.
pub fn cmi(state: &LabeledOperator, u: &[&str], w: &[&str], x: &[&str]) -> Result<f64> {
    disjoint(state, &[u, w, x])?;
    let ux = union(&[u, x]);
    let wx = union(&[w, x]);
    let uwx = union(&[u, w, x]);
    Ok(entropy(state, &ux)? + entropy(state, &wx)? - entropy(state, x)? - entropy(state, &uwx)?)
}

/// Frobenius residuals of the conditional-independence conditions.
#[derive(Clone, Debug, Serialize)]
pub struct CiReport {
    /// `ρ_{U|XW} = ρ_{U|X} ⊗ P_W`, `ρ_{W|XU} = ρ_{W|X} ⊗ P_U`,
    /// `ρ_{UW|X} = ρ_{U|X} ρ_{W|X}`, `ρ_{UWX} = ρ_X ⋆ⁿ (ρ_{U|X} ρ_{W|X})`.
    pub conditional: [f64; 4],
    /// The same four conditions written with mutual density operators.
    pub mutual: [f64; 4],
    /// `‖[F, G]‖` and `‖[F†, G]‖` with `F = ρ_X^{-1/2n} ρ_{UX}^{1/2n}`,
    /// `G = ρ_X^{-1/2n} ρ_{WX}^{1/2n}`.
    pub commutation: [f64; 2],
    pub cmi: f64,
}

impl CiReport {
    pub fn max_residual(&self) -> f64 {
        self.conditional.iter().chain(self.mutual.iter()).cloned().fold(0.0, f64::max)
    }
}

/// Product of two operators as it appears on the right of the product
/// conditions: ordinary product for finite order, `⊙` at infinite order.
fn pair_product(a: &LabeledOperator, b: &LabeledOperator, order: Order) -> Result<LabeledOperator> {
    match order {
        Order::Finite(_) => a.mul(b),
        Order::Infinite => odot(a, b),
    }
}

/// `A ⋆ⁿ C` where `C` may be non-Hermitian. For `n = 1` the literal
/// `A^{1/2} C A^{1/2}` is used; for larger `n` the Hermitian part of `C` with
/// negative eigenvalues clamped stands in for `C`.
fn star_general(a: &LabeledOperator, c: &LabeledOperator, n: u32) -> Result<LabeledOperator> {
    if n == 1 {
        let ar = a.sqrt()?;
        return ar.mul(c)?.mul(&ar);
    }
    let h = c.herm_part();
    let e = h.eigh()?;
    let clamped = h.with_matrix(e.rebuild(|v| v.max(0.0)));
    super::products::star_n(a, &clamped, n)
}

fn residual(a: &LabeledOperator, b: &LabeledOperator) -> Result<f64> {
    a.fro_dist(b)
}

/// Evaluates the four conditional and four mutual conditions, the
/// commutation premise, and `S(U:W|X)`.
pub fn ci_condition_check(
    state: &LabeledOperator,
    u: &[&str],
    w: &[&str],
    x: &[&str],
    order: Order,
) -> Result<CiReport> {
    disjoint(state, &[u, w, x])?;
    let xw = union(&[x, w]);
    let xu = union(&[x, u]);
    let uw = union(&[u, w]);
    let uwx = union(&[u, w, x]);
    let rho = state.reduce_to(&uwx)?;
    let p_u = state.reduce_to(u)?.proj_support()?;
    let p_w = state.reduce_to(w)?.proj_support()?;

    let c_u_xw = conditional_density(state, u, &xw, order)?;
    let c_w_xu = conditional_density(state, w, &xu, order)?;
    let c_uw_x = conditional_density(state, &uw, x, order)?;
    let c_u_x = conditional_density(state, u, x, order)?;
    let c_w_x = conditional_density(state, w, x, order)?;
    let prod_c = pair_product(&c_u_x, &c_w_x, order)?;
    let rho_x = state.reduce_to(x)?;
    let recon_c = match order {
        Order::Finite(n) => star_general(&rho_x, &prod_c, n)?,
        Order::Infinite => odot_all(&[rho_x.clone(), c_u_x.clone(), c_w_x.clone()])?,
    };
    let conditional = [
        residual(&c_u_xw, &c_u_x.tensor(&p_w)?)?,
        residual(&c_w_xu, &c_w_x.tensor(&p_u)?)?,
        residual(&c_uw_x, &prod_c)?,
        residual(&rho, &recon_c)?,
    ];

    let m_u_xw = mutual_density(state, u, &xw, order)?;
    let m_w_xu = mutual_density(state, w, &xu, order)?;
    let m_uw_x = mutual_density(state, &uw, x, order)?;
    let m_u_x = mutual_density(state, u, x, order)?;
    let m_w_x = mutual_density(state, w, x, order)?;
    let prod_m = pair_product(&m_u_x, &m_w_x, order)?;
    let marg = state.reduce_to(u)?.tensor(&state.reduce_to(w)?)?.tensor(&rho_x)?;
    let recon_m = match order {
        Order::Finite(n) => star_general(&marg, &prod_m, n)?,
        Order::Infinite => odot_all(&[marg.clone(), m_u_x.clone(), m_w_x.clone()])?,
    };
    let mutual = [
        residual(&m_u_xw, &m_u_x.tensor(&p_w)?)?,
        residual(&m_w_xu, &m_w_x.tensor(&p_u)?)?,
        residual(&m_uw_x, &prod_m)?,
        residual(&rho, &recon_m)?,
    ];

    let rho_ux = state.reduce_to(&xu)?;
    let rho_wx = state.reduce_to(&xw)?;
    let (f, g) = match order {
        Order::Finite(n) => {
            let p = 1.0 / (2.0 * n as f64);
            let xi = rho_x.pow(-p)?;
            (xi.mul(&rho_ux.pow(p)?)?, xi.mul(&rho_wx.pow(p)?)?)
        }
        Order::Infinite => {
            // generator of the n → ∞ limit: log ρ_{UX} − log ρ_X
            let lx = rho_x.ln()?;
            (rho_ux.ln()?.sub(&lx)?, rho_wx.ln()?.sub(&lx)?)
        }
    };
    let commutation = [f.commutator_norm(&g)?, f.adjoint().commutator_norm(&g)?];
    let cmi = cmi(state, u, w, x)?;
    Ok(CiReport { conditional, mutual, commutation, cmi })
}

/// Trace distance between two operators on the same support.
pub fn trace_distance(a: &LabeledOperator, b: &LabeledOperator) -> Result<f64> {
    let (x, y) = a.align(b)?;
    linalg::trace_distance(x.matrix(), y.matrix())
}
