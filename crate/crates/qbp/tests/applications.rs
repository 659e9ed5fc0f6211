use qbp::applications::mps::{mps_reduced_direct, mps_reduced_qbp, mps_to_bifactor, random_product_sites, Boundary, MatrixProductState};
use qbp::applications::qec::{
    decode_marginals, pauli_bayes_marginals, pauli_weights, syndrome_factor_graph, syndrome_probability, NoiseModel,
    StabilizerCode, Syndrome,
};
use qbp::applications::{gibbs_state, pair_coarse_grain, trotter_bifactor, LocalHamiltonian};
use qbp::graphical::Graph;
use qbp::linalg;
use qbp::network::factor_graph_to_bifactor;
use qbp::qbp_engine::RunOptions;
use qbp::rng::seeded;
use qbp::{LabeledOperator, Order, SystemRegistry};
use std::collections::BTreeMap;

#[test]
fn bit_flip_code_matches_bayes_enumeration() {
    let code = StabilizerCode::bit_flip3();
    for p in [0.05, 0.1, 0.2] {
        let noise = NoiseModel::bit_flip(p).unwrap();
        for s in Syndrome::all(2) {
            let got = decode_marginals(&code, &noise, &s, &[0, 1, 2], &RunOptions::default()).unwrap();
            assert!(!got.heuristic);
            let bayes = pauli_bayes_marginals(&code, [1.0 - p, p, 0.0, 0.0], &s).unwrap();
            for (q, op) in &got.marginals {
                let d = linalg::trace_distance(op.matrix(), &bayes[q]).unwrap();
                assert!(d < 1e-8, "p={p} s={s} {q}: {d:e}");
            }
        }
    }
}

#[test]
fn bit_flip_posterior_flip_probability() {
    let code = StabilizerCode::bit_flip3();
    let noise = NoiseModel::bit_flip(0.1).unwrap();
    let s: Syndrome = "-+".parse().unwrap();
    let got = decode_marginals(&code, &noise, &s, &[0], &RunOptions::default()).unwrap();
    // patterns with syndrome (-,+): X on qubit 1 alone, or on qubits 2 and 3
    let (a, b) = (0.1 * 0.9 * 0.9, 0.9 * 0.1 * 0.1);
    let w = pauli_weights(&got.marginals["q1"]).unwrap();
    assert!((w[1] - a / (a + b)).abs() < 1e-10, "{w:?}");
}

#[test]
fn noiseless_channel_gives_bell_projector() {
    let code = StabilizerCode::bit_flip3();
    let got = decode_marginals(&code, &NoiseModel::identity(), &Syndrome::trivial(2), &[0, 1, 2], &RunOptions::default()).unwrap();
    for op in got.marginals.values() {
        let w = pauli_weights(op).unwrap();
        assert!((w[0] - 1.0).abs() < 1e-10);
    }
}

#[test]
fn factor_graph_conversion_round_trips() {
    let code = StabilizerCode::bit_flip3();
    let noise = NoiseModel::depolarizing(0.15).unwrap();
    let fg = syndrome_factor_graph(&code, &noise, &"+-".parse().unwrap()).unwrap();
    let (net, traced) = factor_graph_to_bifactor(&fg).unwrap();
    let tr: Vec<&str> = traced.iter().map(String::as_str).collect();
    let reduced = net.assemble_reduced(&tr).unwrap();
    let direct = fg.state().unwrap();
    assert_eq!(reduced.labels(), direct.labels());
    assert!(linalg::trace_distance(reduced.matrix(), direct.matrix()).unwrap() < 1e-9);
}

#[test]
fn zero_generators_give_product_noise() {
    let code = StabilizerCode::new(2, &[]).unwrap();
    let noise = NoiseModel::depolarizing(0.3).unwrap();
    let got = decode_marginals(&code, &noise, &Syndrome::trivial(0), &[0, 1], &RunOptions::default()).unwrap();
    for op in got.marginals.values() {
        assert!(linalg::fro_dist(op.matrix(), noise.choi()) < 1e-12);
    }
}

#[test]
fn syndrome_probabilities_sum_to_one() {
    let code = StabilizerCode::bit_flip3();
    let noise = NoiseModel::depolarizing(0.1).unwrap();
    let total: f64 = Syndrome::all(2).iter().map(|s| syndrome_probability(&code, &noise, s).unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9, "{total}");
}

#[test]
fn ghz_factor_graph() {
    // μ = I on u, v, w with X_a = I + ZZ(uv), X_b = I + XXX, X_c = I + ZZ(vw)
    let reg = SystemRegistry::qubits(&["u", "v", "w"]).unwrap();
    let (x, z) = (qbp::pauli::x(), qbp::pauli::z());
    let id4 = linalg::identity(4);
    let xs = [
        ("a", vec!["u", "v"], &id4 + &linalg::kron(&z, &z)),
        ("b", vec!["u", "v", "w"], &linalg::identity(8) + &linalg::kron(&linalg::kron(&x, &x), &x)),
        ("c", vec!["v", "w"], &id4 + &linalg::kron(&z, &z)),
    ];
    let x: BTreeMap<String, LabeledOperator> =
        xs.into_iter().map(|(f, l, m)| (f.to_string(), LabeledOperator::new(&reg, &l, m).unwrap())).collect();
    let mu: BTreeMap<String, LabeledOperator> =
        ["u", "v", "w"].iter().map(|v| (v.to_string(), LabeledOperator::identity(&reg, &[v]).unwrap())).collect();
    let fg = qbp::network::FactorGraphModel::new(reg, mu, x).unwrap();
    let state = fg.state().unwrap();
    let mut ghz = linalg::zeros(8);
    for (a, b) in [(0, 0), (0, 7), (7, 0), (7, 7)] {
        ghz[(a, b)] = faer::c64::new(0.5, 0.0);
    }
    assert!(linalg::fro_dist(state.matrix(), &ghz) < 1e-12);
    let (net, traced) = factor_graph_to_bifactor(&fg).unwrap();
    let tr: Vec<&str> = traced.iter().map(String::as_str).collect();
    let reduced = net.assemble_reduced(&tr).unwrap();
    assert!(linalg::fro_dist(reduced.matrix(), &ghz) < 1e-10);
}

#[test]
fn five_qubit_code_decoding_is_flagged_heuristic() {
    let code = StabilizerCode::five_qubit();
    let noise = NoiseModel::depolarizing(0.05).unwrap();
    let s: Syndrome = "+-+-".parse().unwrap();
    let targets = [0, 1, 2, 3, 4];
    let got = decode_marginals(&code, &noise, &s, &targets, &RunOptions { max_iters: Some(5), ..Default::default() }).unwrap();
    assert!(got.heuristic);
    assert_eq!(got.report.iterations_run, 5);
    for op in got.marginals.values() {
        let w = pauli_weights(op).unwrap();
        assert!(w.iter().all(|&x| x > -1e-12) && (w.iter().sum::<f64>() - 1.0).abs() < 1e-10, "{w:?}");
    }
}

#[test]
fn random_mps_two_site_marginals() {
    for seed in 0..5 {
        let mps = MatrixProductState::random(5, 2, 2, Boundary::Open, seed).unwrap();
        let got = mps_reduced_qbp(&mps, &RunOptions::default()).unwrap();
        for u in 0..4 {
            let key = format!("{}|{}", u + 1, u + 2);
            let direct = mps_reduced_direct(&mps, &[u, u + 1]).unwrap();
            let d = linalg::trace_distance(got.marginals[&key].matrix(), direct.matrix()).unwrap();
            assert!(d < 1e-8, "seed {seed} {key}: {d:e}");
        }
    }
}

#[test]
fn mps_assembly_reproduces_state() {
    for (boundary, n) in [(Boundary::Open, 4), (Boundary::Periodic, 4)] {
        let mps = MatrixProductState::random(n, 2, 2, boundary, 11).unwrap();
        let net = mps_to_bifactor(&mps).unwrap();
        let s = net.physical_state().unwrap();
        let psi = mps.state_vector().unwrap();
        let fid: f64 = {
            let m = s.matrix();
            let mut acc = faer::c64::new(0.0, 0.0);
            for i in 0..psi.len() {
                for j in 0..psi.len() {
                    acc += psi[i].conj() * m[(i, j)] * psi[j];
                }
            }
            acc.re
        };
        assert!(fid > 1.0 - 1e-9, "{boundary:?}: {fid}");
    }
}

#[test]
fn product_and_ghz_mps() {
    let mut rng = seeded(1);
    let mps = MatrixProductState::product(&random_product_sites(3, 2, &mut rng), Boundary::Open).unwrap();
    let net = mps_to_bifactor(&mps).unwrap();
    for v in net.network.graph().vertices() {
        let rank = net.network.mu(v).unwrap().eigenvalues().unwrap().iter().filter(|&&x| x > 1e-12).count();
        assert!(rank <= 1);
    }
    let ghz = MatrixProductState::ghz(3, Boundary::Periodic).unwrap();
    let s = mps_to_bifactor(&ghz).unwrap().physical_state().unwrap();
    let direct = mps_reduced_direct(&ghz, &[0, 1, 2]).unwrap();
    assert!(linalg::trace_distance(s.matrix(), direct.matrix()).unwrap() < 1e-10);
}

#[test]
fn trotter_error_decreases_with_order() {
    let h = LocalHamiltonian::heisenberg_chain(3).unwrap();
    let exact = gibbs_state(&h, 0.5).unwrap();
    let mut last = f64::INFINITY;
    for n in [2, 8] {
        let net = pair_coarse_grain(&h, 0.5, Order::Finite(n)).unwrap();
        let d = net.assemble_state().unwrap().trace_distance(&exact).unwrap();
        assert!(d < last, "n={n}: {d:e}");
        last = d;
    }
}

#[test]
fn commuting_ising_terms_agree_at_every_order() {
    let labels = ["a", "b", "c", "d"];
    let reg = SystemRegistry::qubits(&labels).unwrap();
    let g = Graph::path(&labels).unwrap();
    let zz = linalg::kron(&qbp::pauli::z(), &qbp::pauli::z());
    let edge: BTreeMap<_, _> = g
        .edges()
        .into_iter()
        .map(|(a, b)| {
            let op = LabeledOperator::new(&reg, &[a.as_str(), b.as_str()], zz.clone()).unwrap();
            ((a, b), op)
        })
        .collect();
    let vertex: BTreeMap<_, _> =
        labels.iter().map(|l| (l.to_string(), LabeledOperator::new(&reg, &[l], linalg::scale_real(&qbp::pauli::z(), 0.3)).unwrap())).collect();
    let h = LocalHamiltonian::new(reg, g, vertex, edge).unwrap();
    let inf = trotter_bifactor(&h, 0.7, Order::Infinite).unwrap().assemble_state().unwrap();
    for n in [1, 2, 5] {
        let s = trotter_bifactor(&h, 0.7, Order::Finite(n)).unwrap().assemble_state().unwrap();
        assert!(s.trace_distance(&inf).unwrap() < 1e-10);
    }
}
