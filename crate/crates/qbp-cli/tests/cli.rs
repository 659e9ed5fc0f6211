use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn qbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qbp")).args(args).output().expect("binary runs")
}

fn json_out(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stderr)))
}

fn write_fixture(dir: &Path, name: &str, file: &str) -> String {
    let o = qbp(&["fixture", name]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let p = dir.join(file);
    std::fs::write(&p, &o.stdout).unwrap();
    p.to_str().unwrap().to_string()
}

fn save(dir: &Path, file: &str, o: &Output) -> String {
    let p = dir.join(file);
    std::fs::write(&p, &o.stdout).unwrap();
    p.to_str().unwrap().to_string()
}

fn pauli_op(labels: &[&str], m: [[f64; 4]; 4]) -> Value {
    serde_json::json!({"labels": labels, "dims": [2, 2], "matrix_re": m, "matrix_im": vec![vec![0.0; 4]; 4]})
}

#[test]
fn run_on_tree_fixture_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_fixture(dir.path(), "tree:n=6:d=2:order=1:seed=7", "net.json");
    let run = qbp(&["run", &net]);
    assert!(run.status.success());
    let beliefs = save(dir.path(), "beliefs.json", &run);
    let exact = qbp(&["assemble", &net, "--marginals"]);
    assert!(exact.status.success());
    let oracle = save(dir.path(), "oracle.json", &exact);
    let cmp = qbp(&["compare", &beliefs, &oracle]);
    assert!(cmp.status.success());
    let v = json_out(&cmp);
    assert!(v["max_trace_distance"].as_f64().unwrap() <= 1e-8);
    assert_eq!(v["trace_distance"].as_object().unwrap().len(), 11);
}

#[test]
fn compare_flags_tolerance_violations() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_fixture(dir.path(), "tree:n=3:d=2:order=1:seed=1", "a.json");
    let b = write_fixture(dir.path(), "tree:n=3:d=2:order=1:seed=2", "b.json");
    let ma = save(dir.path(), "ma.json", &qbp(&["assemble", &a, "--marginals"]));
    let mb = save(dir.path(), "mb.json", &qbp(&["assemble", &b, "--marginals"]));
    let cmp = qbp(&["compare", &ma, &mb]);
    assert_eq!(cmp.status.code(), Some(1));
    assert_eq!(json_out(&cmp)["within_tol"], Value::Bool(false));
}

#[test]
fn heisenberg_chain_is_not_markov() {
    let dir = tempfile::tempdir().unwrap();
    let state = write_fixture(dir.path(), "heisenberg:N=3:beta=1", "h.json");
    let graph = dir.path().join("g.json");
    std::fs::write(&graph, r#"{"vertices": ["1", "2", "3"], "edges": [["1", "2"], ["2", "3"]]}"#).unwrap();
    let o = qbp(&["check-markov", &state, graph.to_str().unwrap()]);
    assert!(o.status.success());
    let v = json_out(&o);
    assert_eq!(v["is_markov"], Value::Bool(false));
    assert!(v["max_cmi"].as_f64().unwrap() > 0.01);
}

#[test]
fn heisenberg_cmi_curve() {
    let o = qbp(&["plotdata", "heisenberg-cmi", "--n", "3", "--beta-grid", "0:3:31"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("beta,cmi"));
    let rows: Vec<(f64, f64)> = lines
        .map(|l| {
            let (b, c) = l.split_once(',').unwrap();
            (b.parse().unwrap(), c.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 31);
    assert!(rows[0].0 == 0.0 && rows[0].1.abs() <= 1e-9);
    assert!(rows.iter().all(|r| r.1 >= -1e-9));
    assert!((rows[30].0 - 3.0).abs() < 1e-12);
}

#[test]
fn markov_tree_fixture_passes_hc_and_markov_checks() {
    let dir = tempfile::tempdir().unwrap();
    let f = write_fixture(dir.path(), "markov-tree:n=4:d=2:seed=3", "mt.json");
    let m = qbp(&["check-markov", &f, &f, "--threshold", "1e-7"]);
    assert!(m.status.success());
    assert_eq!(json_out(&m)["is_markov"], Value::Bool(true));
    let h = qbp(&["hc", &f, &f]);
    assert!(h.status.success());
    let v = json_out(&h);
    assert!(v["reconstruction_distance"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["nonclique_terms_vanish"], Value::Bool(true));
}

#[test]
fn decode_bit_flip_agrees_with_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let code = write_fixture(dir.path(), "code:name=bitflip3", "c.json");
    let noise = write_fixture(dir.path(), "noise:kind=bitflip:p=0.1", "n.json");
    let o = qbp(&["decode", &code, &noise, "-+", "--oracle"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_out(&o);
    assert!(v["oracle"]["max_trace_distance"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["marginals"].as_object().unwrap().len(), 3);
}

#[test]
fn mps_pipeline_matches_contraction() {
    let dir = tempfile::tempdir().unwrap();
    let m = write_fixture(dir.path(), "mps:N=4:d=2:D=2:seed=5", "m.json");
    let o = qbp(&["mps", &m]);
    assert!(o.status.success());
    let v = json_out(&o);
    assert!(v["max_trace_distance"].as_f64().unwrap() < 1e-8);
    assert_eq!(v["trace_distance"].as_object().unwrap().len(), 7);
}

#[test]
fn gibbs_needs_commuting_terms_at_finite_order() {
    let dir = tempfile::tempdir().unwrap();
    let h = write_fixture(dir.path(), "heisenberg-hamiltonian:N=4", "h.json");
    let plain = qbp(&["gibbs", &h, "--beta", "0.5", "--order", "4"]);
    assert_eq!(plain.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&plain.stderr).unwrap();
    assert_eq!(err["error"], "NonCommutingEdgeTerms");
    let coarse = qbp(&["gibbs", &h, "--beta", "0.5", "--order", "4", "--coarse"]);
    assert!(coarse.status.success());
    let exact = qbp(&["gibbs", &h, "--beta", "0.5", "--check-tol", "1e-9"]);
    assert!(exact.status.success());
    assert!(json_out(&exact)["assembly_trace_distance"].as_f64().unwrap() < 1e-9);
}

#[test]
fn validate_reports_non_commuting_edges() {
    let dir = tempfile::tempdir().unwrap();
    let id = [[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0], [0.0, 0.0, 0.0, 1.0]];
    // I + XX/2 and I + ZZ/2 overlap on b
    let xx = [[1.0, 0.0, 0.0, 0.5], [0.0, 1.0, 0.5, 0.0], [0.0, 0.5, 1.0, 0.0], [0.5, 0.0, 0.0, 1.0]];
    let zz = [[1.5, 0.0, 0.0, 0.0], [0.0, 0.5, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 1.5]];
    let one = |l: &str| serde_json::json!({"labels": [l], "dims": [2], "matrix_re": [[1.0, 0.0], [0.0, 1.0]], "matrix_im": [[0.0, 0.0], [0.0, 0.0]]});
    let mut net = serde_json::json!({
        "order": 1,
        "graph": {"vertices": ["a", "b", "c"], "edges": [["a", "b"], ["b", "c"]]},
        "mu": {"a": one("a"), "b": one("b"), "c": one("c")},
        "nu": {"a|b": pauli_op(&["a", "b"], xx), "b|c": pauli_op(&["b", "c"], zz)},
    });
    let p = dir.path().join("bad.json");
    std::fs::write(&p, net.to_string()).unwrap();
    let o = qbp(&["validate", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(json_out(&o)["passed"], Value::Bool(false));

    net["nu"]["b|c"] = pauli_op(&["b", "c"], id);
    std::fs::write(&p, net.to_string()).unwrap();
    let o = qbp(&["validate", p.to_str().unwrap()]);
    assert!(o.status.success());
}

#[test]
fn infer_on_classical_chain_gives_unit_trace_marginals() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_fixture(dir.path(), "classical-chain:n=3:d=2:seed=4", "c.json");
    let m = dir.path().join("m.json");
    let effect = serde_json::json!({"effects": {"x1": {"labels": ["x1"], "dims": [2], "matrix_re": [[1.0, 0.0], [0.0, 0.0]], "matrix_im": [[0.0, 0.0], [0.0, 0.0]]}}});
    std::fs::write(&m, effect.to_string()).unwrap();
    let o = qbp(&["infer", &net, m.to_str().unwrap(), "--targets", "x1,x3,x2|x3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v = json_out(&o);
    let x1 = &v["marginals"]["x1"]["matrix_re"];
    assert!((x1[0][0].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(v["marginals"].as_object().unwrap().len(), 3);
}

#[test]
fn identical_invocations_give_identical_output() {
    let dir = tempfile::tempdir().unwrap();
    let net = write_fixture(dir.path(), "tree:n=4:d=3:order=2:seed=9", "n.json");
    let a = qbp(&["run", &net]);
    let b = qbp(&["run", &net]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn errors_are_machine_readable() {
    let o = qbp(&["run", "/nonexistent/network.json"]);
    assert_eq!(o.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"], "Io");
    let o = qbp(&["fixture", "heisenberg:N=20"]);
    assert_ne!(o.status.code(), Some(0));
    let err: Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["detail"].is_string());
}
