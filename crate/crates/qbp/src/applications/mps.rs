//! Matrix product states as 1-bifactor networks on virtual bond pairs.

use std::collections::BTreeMap;
use std::sync::Arc;

use faer::c64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{QbpError, Result};
use crate::graphical::Graph;
use crate::linalg::{self, CMat};
use crate::network::{BifactorNetwork, ASSEMBLY_CAP};
use crate::operator_core::{LabeledOperator, Order, SystemRegistry};
use crate::qbp_engine::{run, ConvergenceReport, RunOptions};
use crate::rng::{ginibre, seeded};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Boundary {
    Open,
    Periodic,
}

/// `|Ψ⟩ ∝ Σ_j Tr[B_1^{j_1} ⋯ B_N^{j_N}] |j_1 … j_N⟩`.
///
/// `tensors[u][j]` is the `Dl × Dr` matrix `B_u^j`. With open boundaries the
/// boundary vectors are folded into the end tensors, so `B_1^j` is `1 × D`
/// and `B_N^j` is `D × 1`.
#[derive(Clone, Debug)]
pub struct MatrixProductState {
    d: usize,
    boundary: Boundary,
    tensors: Vec<Vec<CMat>>,
}

/// JSON form `{N, d, D, boundary, tensors}` with `tensors[u][j][α][β] = [re, im]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MpsSpec {
    #[serde(rename = "N")]
    pub n: usize,
    pub d: usize,
    #[serde(rename = "D")]
    pub bond: usize,
    pub boundary: Boundary,
    pub tensors: Vec<Vec<Vec<Vec<[f64; 2]>>>>,
}

impl MatrixProductState {
    pub fn new(boundary: Boundary, tensors: Vec<Vec<CMat>>) -> Result<Self> {
        let n = tensors.len();
        if n < 2 || (boundary == Boundary::Periodic && n < 3) {
            return Err(QbpError::InvalidInput(format!("{n} sites is too few for a {boundary:?} chain")));
        }
        if boundary == Boundary::Periodic && n > 5 {
            return Err(QbpError::InvalidInput("periodic MPS are supported up to 5 sites".into()));
        }
        let d = tensors[0].len();
        if d == 0 {
            return Err(QbpError::InvalidInput("physical dimension 0".into()));
        }
        for (u, site) in tensors.iter().enumerate() {
            if site.len() != d {
                return Err(QbpError::DimensionMismatch(format!("site {u} has {} physical indices, expected {d}", site.len())));
            }
            let (r, c) = (site[0].nrows(), site[0].ncols());
            if site.iter().any(|b| b.nrows() != r || b.ncols() != c) || r == 0 || c == 0 {
                return Err(QbpError::DimensionMismatch(format!("site {u} has ragged bond dimensions")));
            }
            if site.iter().all(|b| linalg::fro_norm(b) == 0.0) {
                return Err(QbpError::ZeroTensor(u));
            }
        }
        for u in 0..n {
            let next = (u + 1) % n;
            if u + 1 == n && boundary == Boundary::Open {
                if tensors[0][0].nrows() != 1 || tensors[u][0].ncols() != 1 {
                    return Err(QbpError::DimensionMismatch("open boundary needs 1-dimensional outer bonds".into()));
                }
                continue;
            }
            if tensors[u][0].ncols() != tensors[next][0].nrows() {
                return Err(QbpError::DimensionMismatch(format!("bond between sites {u} and {next} does not match")));
            }
        }
        let mps = MatrixProductState { d, boundary, tensors };
        let dim = d.checked_pow(n as u32).unwrap_or(usize::MAX);
        if dim > ASSEMBLY_CAP {
            return Err(QbpError::DimensionCap { dim, cap: ASSEMBLY_CAP });
        }
        Ok(mps)
    }

    /// Gaussian tensors; open chains fold random boundary vectors into the ends.
    pub fn random(n: usize, d: usize, bond: usize, boundary: Boundary, seed: u64) -> Result<Self> {
        let mut rng = seeded(seed);
        let mut tensors: Vec<Vec<CMat>> = (0..n).map(|_| (0..d).map(|_| ginibre(bond, bond, &mut rng)).collect()).collect();
        if boundary == Boundary::Open && n > 0 {
            let l = ginibre(1, bond, &mut rng);
            let r = ginibre(bond, 1, &mut rng);
            for b in &mut tensors[0] {
                *b = &l * &*b;
            }
            for b in &mut tensors[n - 1] {
                *b = &*b * &r;
            }
        }
        Self::new(boundary, tensors)
    }

    /// Bond-dimension-1 MPS of a product state given per-site amplitude vectors.
    pub fn product(sites: &[Vec<c64>], boundary: Boundary) -> Result<Self> {
        let tensors = sites.iter().map(|v| v.iter().map(|&a| CMat::from_fn(1, 1, |_, _| a)).collect()).collect();
        Self::new(boundary, tensors)
    }

    /// `N` qubit GHZ state with `B^0 = diag(1,0)`, `B^1 = diag(0,1)`.
    pub fn ghz(n: usize, boundary: Boundary) -> Result<Self> {
        let b0 = linalg::diag_real(&[1.0, 0.0]);
        let b1 = linalg::diag_real(&[0.0, 1.0]);
        let mut tensors: Vec<Vec<CMat>> = (0..n).map(|_| vec![b0.clone(), b1.clone()]).collect();
        if boundary == Boundary::Open {
            let one = CMat::from_fn(1, 2, |_, _| c64::new(1.0, 0.0));
            let col = CMat::from_fn(2, 1, |_, _| c64::new(1.0, 0.0));
            for b in &mut tensors[0] {
                *b = &one * &*b;
            }
            for b in &mut tensors[n - 1] {
                *b = &*b * &col;
            }
        }
        Self::new(boundary, tensors)
    }

    pub fn sites(&self) -> usize {
        self.tensors.len()
    }

    pub fn physical_dim(&self) -> usize {
        self.d
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn tensors(&self) -> &[Vec<CMat>] {
        &self.tensors
    }

    fn left_dim(&self, u: usize) -> usize {
        self.tensors[u][0].nrows()
    }

    fn right_dim(&self, u: usize) -> usize {
        self.tensors[u][0].ncols()
    }

    /// `A_u = Σ_{j,α,β} B_u^j[α,β] |j⟩⟨α,β|`, a `d × (Dl·Dr)` matrix.
    pub fn site_map(&self, u: usize) -> CMat {
        let dr = self.right_dim(u);
        CMat::from_fn(self.d, self.left_dim(u) * dr, |j, c| self.tensors[u][j][(c / dr, c % dr)])
    }

    /// Normalized state vector by direct contraction.
    pub fn state_vector(&self) -> Result<Vec<c64>> {
        let n = self.sites();
        let dim = self.d.pow(n as u32);
        let mut psi = Vec::with_capacity(dim);
        for m in 0..dim {
            let mut prod = linalg::identity(self.left_dim(0));
            for u in 0..n {
                let j = m / self.d.pow((n - 1 - u) as u32) % self.d;
                prod = &prod * &self.tensors[u][j];
            }
            psi.push(linalg::trace(&prod));
        }
        let norm = psi.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(QbpError::Underflow(0.0));
        }
        Ok(psi.into_iter().map(|a| a / norm).collect())
    }

    pub fn to_spec(&self) -> MpsSpec {
        let bond = (0..self.sites()).map(|u| self.left_dim(u).max(self.right_dim(u))).max().unwrap_or(1);
        MpsSpec {
            n: self.sites(),
            d: self.d,
            bond,
            boundary: self.boundary,
            tensors: self
                .tensors
                .iter()
                .map(|site| {
                    site.iter()
                        .map(|b| (0..b.nrows()).map(|r| (0..b.ncols()).map(|c| [b[(r, c)].re, b[(r, c)].im]).collect()).collect())
                        .collect()
                })
                .collect(),
        }
    }

    pub fn from_spec(s: &MpsSpec) -> Result<Self> {
        if s.tensors.len() != s.n {
            return Err(QbpError::DimensionMismatch(format!("N = {} but {} site tensors given", s.n, s.tensors.len())));
        }
        let mut tensors = Vec::new();
        for (u, site) in s.tensors.iter().enumerate() {
            if site.len() != s.d {
                return Err(QbpError::DimensionMismatch(format!("site {u} has {} physical indices, d = {}", site.len(), s.d)));
            }
            let mut mats = Vec::new();
            for rows in site {
                let r = rows.len();
                let c = rows.first().map_or(0, Vec::len);
                if rows.iter().any(|row| row.len() != c) {
                    return Err(QbpError::DimensionMismatch(format!("site {u} has ragged rows")));
                }
                if r > s.bond || c > s.bond {
                    return Err(QbpError::DimensionMismatch(format!("site {u} exceeds bond dimension {}", s.bond)));
                }
                mats.push(CMat::from_fn(r, c, |i, k| c64::new(rows[i][k][0], rows[i][k][1])));
            }
            tensors.push(mats);
        }
        Self::new(s.boundary, tensors)
    }
}

/// Label of site `u` (0-based) on the physical registry.
pub fn site_label(u: usize) -> String {
    (u + 1).to_string()
}

/// Order-1 network of an MPS with its per-site polar isometries.
#[derive(Clone, Debug)]
pub struct MpsNetwork {
    pub network: BifactorNetwork,
    /// Partial isometry `U_u` (`d × Dl·Dr`) with `A_u = U_u |A_u|`.
    pub isometries: BTreeMap<String, CMat>,
    /// Physical registry `1 … N`, dimension `d` each.
    pub physical: Arc<SystemRegistry>,
}

/// Polar factor of `a` on its row space: `U = W V†` over nonzero singular values.
pub fn partial_isometry(a: &CMat) -> Result<CMat> {
    let (w, s, v) = linalg::svd(a)?;
    let smax = s.iter().copied().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..s.len()).filter(|&i| s[i] > 1e-12 * smax.max(f64::MIN_POSITIVE)).collect();
    Ok(CMat::from_fn(a.nrows(), a.ncols(), |r, c| keep.iter().map(|&k| w[(r, k)] * v[(c, k)].conj()).sum()))
}

/// `μ_u = A_u†A_u` on `L_u ⊗ R_u` and `ν_{u:u+1} = Σ_{αβ} |αα⟩⟨ββ|` across each bond.
pub fn mps_to_bifactor(mps: &MatrixProductState) -> Result<MpsNetwork> {
    let n = mps.sites();
    let mut entries = Vec::new();
    for u in 0..n {
        entries.push((format!("L{}", u + 1), mps.left_dim(u)));
        entries.push((format!("R{}", u + 1), mps.right_dim(u)));
    }
    let reg = SystemRegistry::new(entries)?;
    let labels: Vec<String> = (0..n).map(site_label).collect();
    let lr: Vec<&str> = labels.iter().map(String::as_str).collect();
    let graph = match mps.boundary {
        Boundary::Open => Graph::path(&lr)?,
        Boundary::Periodic => Graph::cycle(&lr)?,
    };
    let mut systems = BTreeMap::new();
    let mut mu = BTreeMap::new();
    let mut isometries = BTreeMap::new();
    for u in 0..n {
        let (l, r) = (format!("L{}", u + 1), format!("R{}", u + 1));
        let a = mps.site_map(u);
        mu.insert(labels[u].clone(), LabeledOperator::new(&reg, &[l.as_str(), r.as_str()], linalg::herm_part(&(linalg::dagger(&a) * &a)))?);
        isometries.insert(labels[u].clone(), partial_isometry(&a)?);
        systems.insert(labels[u].clone(), vec![l, r]);
    }
    let mut nu = BTreeMap::new();
    let bonds = if mps.boundary == Boundary::Open { n - 1 } else { n };
    for u in 0..bonds {
        let v = (u + 1) % n;
        let dim = mps.right_dim(u);
        let phi = CMat::from_fn(dim * dim, dim * dim, |r, c| {
            if r / dim == r % dim && c / dim == c % dim {
                c64::new(1.0, 0.0)
            } else {
                c64::new(0.0, 0.0)
            }
        });
        let (ru, lv) = (format!("R{}", u + 1), format!("L{}", v + 1));
        nu.insert((labels[u].clone(), labels[v].clone()), LabeledOperator::new(&reg, &[ru.as_str(), lv.as_str()], phi)?);
    }
    let network = BifactorNetwork::with_systems(reg, graph, Order::Finite(1), systems, mu, nu)?;
    let physical = SystemRegistry::new(labels.iter().map(|l| (l.clone(), mps.d)))?;
    Ok(MpsNetwork { network, isometries, physical })
}

impl MpsNetwork {
    /// Maps a virtual operator on the systems of `sites` to the physical sites.
    pub fn to_physical(&self, op: &LabeledOperator, sites: &[&str]) -> Result<LabeledOperator> {
        let mut sorted: Vec<&str> = sites.to_vec();
        sorted.sort_by_key(|s| self.physical.index_of(s).unwrap_or(usize::MAX));
        let mut virt = Vec::new();
        let mut u = linalg::identity(1);
        for s in &sorted {
            virt.extend(self.network.systems(s)?.iter().cloned());
            let iso = self.isometries.get(*s).ok_or_else(|| QbpError::UnknownVertex(s.to_string()))?;
            u = linalg::kron(&u, iso);
        }
        let vr: Vec<&str> = virt.iter().map(String::as_str).collect();
        let op = op.embed(&vr)?;
        // embedding over the sites' own systems keeps registry order, which follows site order
        let m = &u * op.matrix() * linalg::dagger(&u);
        LabeledOperator::new(&self.physical, &sorted, linalg::herm_part(&m))?.normalized()
    }

    /// `U |ν⟩` state assembled densely and mapped to the physical space.
    pub fn physical_state(&self) -> Result<LabeledOperator> {
        let s = self.network.assemble_state()?;
        let sites: Vec<String> = self.network.graph().vertices().to_vec();
        let sr: Vec<&str> = sites.iter().map(String::as_str).collect();
        self.to_physical(&s, &sr)
    }
}

/// Reduced operators of the MPS on each target site set by direct contraction.
pub fn mps_reduced_direct(mps: &MatrixProductState, sites: &[usize]) -> Result<LabeledOperator> {
    let n = mps.sites();
    let d = mps.d;
    let psi = mps.state_vector()?;
    let mut keep: Vec<usize> = sites.to_vec();
    keep.sort_unstable();
    keep.dedup();
    if keep.iter().any(|&s| s >= n) {
        return Err(QbpError::InvalidInput("site out of range".into()));
    }
    let rest: Vec<usize> = (0..n).filter(|s| !keep.contains(s)).collect();
    let dk = d.pow(keep.len() as u32);
    let dr = d.pow(rest.len() as u32);
    let index = |ki: usize, ri: usize| {
        let mut digits = vec![0; n];
        for (p, &s) in keep.iter().enumerate() {
            digits[s] = ki / d.pow((keep.len() - 1 - p) as u32) % d;
        }
        for (p, &s) in rest.iter().enumerate() {
            digits[s] = ri / d.pow((rest.len() - 1 - p) as u32) % d;
        }
        digits.iter().fold(0, |acc, &x| acc * d + x)
    };
    let mut m = CMat::zeros(dk, dk);
    for ri in 0..dr {
        let col: Vec<c64> = (0..dk).map(|ki| psi[index(ki, ri)]).collect();
        for i in 0..dk {
            for j in 0..dk {
                m[(i, j)] += col[i] * col[j].conj();
            }
        }
    }
    let labels: Vec<String> = keep.iter().map(|&s| site_label(s)).collect();
    let lr: Vec<&str> = labels.iter().map(String::as_str).collect();
    let reg = SystemRegistry::new((0..n).map(|u| (site_label(u), d)))?;
    LabeledOperator::new(&reg, &lr, linalg::herm_part(&m))
}

#[derive(Clone, Debug)]
pub struct MpsMarginals {
    /// Keyed by site label (`"2"`) or bond (`"2|3"`).
    pub marginals: BTreeMap<String, LabeledOperator>,
    pub report: ConvergenceReport,
}

/// Single-site and nearest-neighbour reduced operators via QBP on the network.
pub fn mps_reduced_qbp(mps: &MatrixProductState, opts: &RunOptions) -> Result<MpsMarginals> {
    let net = mps_to_bifactor(mps)?;
    let (b, report) = run(&net.network, &RunOptions { edge_beliefs: true, ..opts.clone() })?;
    let mut marginals = BTreeMap::new();
    for (v, op) in &b.vertex {
        marginals.insert(v.clone(), net.to_physical(op, &[v.as_str()])?);
    }
    for ((a, c), op) in &b.edge {
        marginals.insert(format!("{a}|{c}"), net.to_physical(op, &[a.as_str(), c.as_str()])?);
    }
    Ok(MpsMarginals { marginals, report })
}

/// Random product MPS amplitudes, mostly for tests.
pub fn random_product_sites(n: usize, d: usize, rng: &mut impl Rng) -> Vec<Vec<c64>> {
    (0..n).map(|_| (0..d).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ghz_contraction() {
        let m = MatrixProductState::ghz(3, Boundary::Periodic).unwrap();
        let psi = m.state_vector().unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((psi[0].re - s).abs() < 1e-14 && (psi[7].re - s).abs() < 1e-14);
        assert!(psi[1..7].iter().all(|a| a.norm() < 1e-14));
        let o = MatrixProductState::ghz(4, Boundary::Open).unwrap().state_vector().unwrap();
        assert!((o[0].re - s).abs() < 1e-14 && (o[15].re - s).abs() < 1e-14);
    }

    #[test]
    fn spec_round_trip() {
        let m = MatrixProductState::random(4, 2, 3, Boundary::Open, 5).unwrap();
        let back = MatrixProductState::from_spec(&m.to_spec()).unwrap();
        assert_eq!(m.state_vector().unwrap(), back.state_vector().unwrap());
    }

    #[test]
    fn rejects_zero_tensor() {
        let mut t: Vec<Vec<CMat>> = (0..3).map(|_| vec![linalg::identity(2), linalg::identity(2)]).collect();
        t[1] = vec![CMat::zeros(2, 2), CMat::zeros(2, 2)];
        assert_eq!(MatrixProductState::new(Boundary::Periodic, t).unwrap_err(), QbpError::ZeroTensor(1));
    }

    #[test]
    fn isometry_is_partial() {
        let mut rng = seeded(3);
        let a = ginibre(2, 4, &mut rng);
        let u = partial_isometry(&a).unwrap();
        let uu = &u * linalg::dagger(&u);
        assert!(linalg::fro_dist(&uu, &linalg::identity(2)) < 1e-12);
        let mu = linalg::dagger(&a) * &a;
        let root = linalg::eigh(&linalg::herm_part(&mu)).unwrap().rebuild(|x| x.max(0.0).sqrt());
        assert!(linalg::fro_dist(&(&u * &root), &a) < 1e-10);
    }
}
