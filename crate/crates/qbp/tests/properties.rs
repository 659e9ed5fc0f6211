use std::collections::BTreeMap;

use proptest::prelude::*;
use qbp::linalg;
use qbp::operator_core::{cmi, odot, star_n};
use qbp::oracle::{random_commuting_network, random_tree};
use qbp::qbp_engine::{init_messages, update_messages, RunOptions};
use qbp::rng::{random_density, random_positive, random_unitary, seeded};
use qbp::{LabeledOperator, Order, SystemRegistry};
use rand::Rng;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, failure_persistence: None, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(1000))]

    #[test]
    fn strong_subadditivity(seed in any::<u64>(), rank in 1usize..=8) {
        let reg = SystemRegistry::qubits(&["u", "x", "w"]).unwrap();
        let rho = LabeledOperator::new(&reg, &["u", "x", "w"], random_density(8, rank, &mut seeded(seed))).unwrap();
        let c = cmi(&rho, &["u"], &["w"], &["x"]).unwrap();
        prop_assert!(c >= -1e-9, "cmi {c:e}");
    }
}

fn random_psd(d: usize, rng: &mut impl Rng) -> linalg::CMat {
    let rank = rng.gen_range(1..=d);
    linalg::scale_real(&random_density(d, rank, rng), rng.gen_range(0.2..5.0))
}

proptest! {
    #![proptest_config(cases(500))]

    #[test]
    fn star_products_stay_positive(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let reg = SystemRegistry::qubits(&["a", "b", "c"]).unwrap();
        let a = LabeledOperator::new(&reg, &["a", "b"], random_psd(4, &mut rng)).unwrap();
        let b = LabeledOperator::new(&reg, &["b", "c"], random_psd(4, &mut rng)).unwrap();
        let scale = a.fro_norm() * b.fro_norm();
        for n in [1, 2, 4] {
            let p = star_n(&a, &b, n).unwrap();
            let min = p.min_eigenvalue().unwrap();
            prop_assert!(min >= -1e-10 * scale, "n={n}: {min:e}");
        }
        // ⊙ of full-rank operators
        let fa = LabeledOperator::new(&reg, &["a", "b"], random_positive(4, 0.05, &mut rng)).unwrap();
        let fb = LabeledOperator::new(&reg, &["b", "c"], random_positive(4, 0.05, &mut rng)).unwrap();
        prop_assert!(odot(&fa, &fb).unwrap().min_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn commuting_pairs_reduce_to_the_matrix_product(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let u = random_unitary(4, &mut rng);
        let da: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..2.0)).collect();
        let db: Vec<f64> = (0..4).map(|_| rng.gen_range(0.05..2.0)).collect();
        let mk = |d: &[f64]| LabeledOperator::new(&reg, &["a", "b"], &(&u * linalg::diag_real(d)) * u.adjoint()).unwrap();
        let (a, b) = (mk(&da), mk(&db));
        let ab = a.mul(&b).unwrap();
        for n in [1, 2, 4, 7] {
            let d = star_n(&a, &b, n).unwrap().fro_dist(&ab).unwrap();
            prop_assert!(d <= 1e-10, "n={n}: {d:e}");
        }
        prop_assert!(odot(&a, &b).unwrap().fro_dist(&ab).unwrap() <= 1e-10);
    }
}

proptest! {
    #![proptest_config(cases(50))]

    #[test]
    fn star_products_approach_odot(seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let reg = SystemRegistry::qubits(&["a", "b"]).unwrap();
        let a = LabeledOperator::new(&reg, &["a", "b"], random_positive(4, 0.5, &mut rng)).unwrap();
        let b = LabeledOperator::new(&reg, &["a", "b"], random_positive(4, 0.5, &mut rng)).unwrap();
        let limit = odot(&a, &b).unwrap();
        let mut last = f64::INFINITY;
        for k in [4u32, 6, 8] {
            let d = star_n(&a, &b, 1 << k).unwrap().fro_dist(&limit).unwrap();
            prop_assert!(d < last, "k={k}: {d:e} after {last:e}");
            last = d;
        }
        prop_assert!(last <= 1e-6, "{last:e}");
    }
}

proptest! {
    #![proptest_config(cases(200))]

    #[test]
    fn cmi_chain_rule(seed in any::<u64>(), rank in 1usize..=16) {
        let reg = SystemRegistry::qubits(&["u", "w", "x", "y"]).unwrap();
        let rho = LabeledOperator::new(&reg, &["u", "w", "x", "y"], random_density(16, rank, &mut seeded(seed))).unwrap();
        let lhs = cmi(&rho, &["u"], &["w"], &["x"]).unwrap() + cmi(&rho, &["u"], &["y"], &["x", "w"]).unwrap();
        let rhs = cmi(&rho, &["u"], &["w", "y"], &["x"]).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-9, "{lhs} vs {rhs}");
    }
}

proptest! {
    #![proptest_config(cases(40))]

    #[test]
    fn tree_messages_are_positive_and_stabilize_by_depth(seed in any::<u64>(), nv in 2usize..=6, which in 0usize..3) {
        let order = [Order::Finite(1), Order::Finite(2), Order::Infinite][which];
        let mut rng = seeded(seed);
        let g = random_tree(nv, &mut rng).unwrap();
        let dims: BTreeMap<String, usize> = g.vertices().iter().map(|v| (v.clone(), rng.gen_range(2..=3))).collect();
        let net = random_commuting_network(&g, &dims, order, seed).unwrap();
        let mut ms = init_messages(&net).unwrap();
        let mut history = vec![ms.clone()];
        for _ in 0..g.diameter() + 2 {
            ms = update_messages(&net, &ms).unwrap();
            for ((u, v), m) in &ms.messages {
                prop_assert!((m.trace() - 1.0).abs() < 1e-10, "{u}->{v} trace {}", m.trace());
                let min = m.min_eigenvalue().unwrap();
                prop_assert!(min >= -1e-10, "{u}->{v} eigenvalue {min:e}");
            }
            history.push(ms.clone());
        }
        for (u, v) in ms.messages.keys() {
            let depth = g.branch_depth(u, v).unwrap();
            let key = (u.clone(), v.clone());
            for t in depth + 1..history.len() {
                let d = history[t].messages[&key].trace_distance(&ms.messages[&key]).unwrap();
                prop_assert!(d <= 1e-10, "{u}->{v} still moving at t={t} (depth {depth}): {d:e}");
            }
        }
        let (_, report) = qbp::qbp_engine::run(&net, &RunOptions::default()).unwrap();
        prop_assert!(report.converged);
        for (name, &t) in &report.stabilized_at {
            let (u, v) = name.split_once("->").unwrap();
            prop_assert!(t <= g.branch_depth(u, v).unwrap() + 1, "{name} stabilized at {t}");
        }
    }
}
