//! `qbp` command-line front end.

mod fixtures;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use qbp::applications::mps::{mps_reduced_direct, mps_reduced_qbp, site_label, MatrixProductState, MpsSpec};
use qbp::applications::qec::{decode_marginals, decode_oracle, NoiseModel, StabilizerCode, Syndrome};
use qbp::applications::{gibbs_state, pair_coarse_grain, trotter_bifactor};
use qbp::graphical::{hc_decompose, local_markov_report, Graph};
use qbp::io::{
    compare_marginals, marginals_to_value, operator_to_value, parse_operator, read_marginals, run_output, FactorGraphJson,
    HamiltonianJson, MeasurementJson, NetworkJson,
};
use qbp::network::{factor_graph_to_bifactor, BifactorNetwork};
use qbp::oracle::{all_targets, exact_marginals};
use qbp::qbp_engine::{infer, run, RunOptions, Target};
use qbp::{LabeledOperator, Order, QbpError};

#[derive(Parser)]
#[command(name = "qbp", version, about = "Quantum belief propagation on bifactor networks")]
struct Cli {
    /// Print the tolerances in use to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct EngineArgs {
    #[arg(long)]
    max_iters: Option<usize>,
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Emit per-iteration message deltas as JSON lines on stderr.
    #[arg(long)]
    trace: bool,
}

impl EngineArgs {
    fn options(&self) -> RunOptions {
        RunOptions { max_iters: self.max_iters, tol: self.tol, trace: self.trace, ..RunOptions::default() }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check Hermiticity, positivity and edge commutation of a network.
    Validate { network: PathBuf },
    /// Dense global state of a network, or its exact marginals with --marginals.
    Assemble {
        network: PathBuf,
        #[arg(long)]
        marginals: bool,
        /// A factor-graph file instead of a network file.
        #[arg(long)]
        factor_graph: bool,
    },
    /// Run QBP and print beliefs with the convergence report.
    Run {
        network: PathBuf,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Conditional marginals given per-vertex measurement effects.
    Infer {
        network: PathBuf,
        measurement: PathBuf,
        /// Comma-separated `u` or `u|v` targets; all vertices by default.
        #[arg(long)]
        targets: Option<String>,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Local Markov report of a state (or assembled network) on a graph.
    CheckMarkov {
        state: PathBuf,
        graph: PathBuf,
        #[arg(long, default_value_t = 1e-9)]
        threshold: f64,
        #[arg(long)]
        vertex_only: bool,
    },
    /// Möbius clique decomposition of the logarithm of a state.
    Hc {
        state: PathBuf,
        graph: PathBuf,
        /// Tolerance on the non-clique terms used for the exit code.
        #[arg(long, default_value_t = 1e-7)]
        threshold: f64,
    },
    /// Per-qubit conditional channels of a stabilizer code given a syndrome.
    Decode {
        code: PathBuf,
        noise: PathBuf,
        /// Generator outcomes as `+`/`-` characters.
        #[arg(allow_hyphen_values = true)]
        syndrome: String,
        /// Compare against the dense oracle.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = 1e-6)]
        oracle_tol: f64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// MPS reduced operators via QBP and via direct contraction.
    Mps {
        mps: PathBuf,
        /// Comma-separated site (`1`) or neighbouring pair (`1|2`) targets.
        #[arg(long)]
        targets: Option<String>,
        #[arg(long, default_value_t = 1e-8)]
        check_tol: f64,
        #[command(flatten)]
        engine: EngineArgs,
    },
    /// Gibbs-state network of a local Hamiltonian with an assembly check.
    Gibbs {
        hamiltonian: PathBuf,
        #[arg(long)]
        beta: f64,
        #[arg(long, default_value = "inf")]
        order: Order,
        /// Merge neighbouring vertex pairs first (chains only).
        #[arg(long)]
        coarse: bool,
        /// Fail when the assembled state is farther than this from the exact Gibbs state.
        #[arg(long)]
        check_tol: Option<f64>,
    },
    /// Emit a named fixture, e.g. `heisenberg:N=3:beta=1`.
    Fixture { name: String },
    /// Per-target trace distances between two marginal files.
    Compare {
        beliefs: PathBuf,
        oracle: PathBuf,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// CSV data for plots.
    Plotdata {
        #[command(subcommand)]
        kind: Plot,
    },
}

#[derive(Subcommand)]
enum Plot {
    /// `beta,cmi` of the Heisenberg chain, ends conditioned on the interior.
    HeisenbergCmi {
        #[arg(long, default_value_t = 3)]
        n: usize,
        /// `start:stop:steps`
        #[arg(long, default_value = "0:3:31")]
        beta_grid: String,
    },
}

struct Failure {
    kind: String,
    detail: String,
}

impl From<QbpError> for Failure {
    fn from(e: QbpError) -> Self {
        let dbg = format!("{e:?}");
        let kind = dbg.split(|c: char| !c.is_alphanumeric()).next().unwrap_or("Error").to_string();
        Failure { kind, detail: e.to_string() }
    }
}

fn fail(kind: &str, detail: impl Into<String>) -> Failure {
    Failure { kind: kind.to_string(), detail: detail.into() }
}

type CliResult<T> = Result<T, Failure>;

/// Output plus whether every tolerance held.
struct Outcome {
    body: Body,
    ok: bool,
}

enum Body {
    Json(Value),
    Text(String),
}

fn ok(v: Value) -> CliResult<Outcome> {
    Ok(Outcome { body: Body::Json(v), ok: true })
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| fail("Io", format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| fail("Parse", format!("{}: {e}", path.display())))
}

fn from_value<T: serde::de::DeserializeOwned>(v: Value, what: &str) -> CliResult<T> {
    serde_json::from_value(v).map_err(|e| fail("Parse", format!("{what}: {e}")))
}

fn load_network(path: &Path) -> CliResult<BifactorNetwork> {
    let nj: NetworkJson = from_value(read_json(path)?, "network")?;
    Ok(nj.build()?)
}

fn looks_like_network(v: &Value) -> bool {
    v.get("mu").is_some() && v.get("nu").is_some()
}

/// An operator file, a `{state: operator}` wrapper, or a network to assemble.
fn load_state(path: &Path) -> CliResult<LabeledOperator> {
    let v = read_json(path)?;
    if looks_like_network(&v) {
        let nj: NetworkJson = from_value(v, "network")?;
        return Ok(nj.build()?.assemble_state()?);
    }
    let v = v.get("state").cloned().unwrap_or(v);
    Ok(parse_operator(&v)?.to_operator()?)
}

/// A graph file, or any object carrying a `graph` field.
fn load_graph(path: &Path) -> CliResult<Graph> {
    let v = read_json(path)?;
    let v = if v.get("vertices").is_some() { v } else { v.get("graph").cloned().unwrap_or(v) };
    from_value(v, "graph")
}

fn parse_targets(s: &Option<String>) -> Option<Vec<Target>> {
    s.as_ref().map(|s| s.split(',').filter(|t| !t.is_empty()).map(|t| Target::parse(t.trim())).collect())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => e.exit(),
        Err(e) => {
            let detail = e.to_string();
            let head: Vec<&str> = detail.lines().take_while(|l| !l.trim().is_empty()).map(str::trim).collect();
            let head = head.join(" ");
            eprintln!("{}", json!({"error": "Usage", "detail": head.trim_start_matches("error: ")}));
            return ExitCode::from(2);
        }
    };
    match dispatch(&cli) {
        Ok(out) => {
            let text = match out.body {
                Body::Json(v) => serde_json::to_string_pretty(&v).expect("json output") + "\n",
                Body::Text(t) => t,
            };
            // a closed pipe downstream is not an error here
            let _ = std::io::stdout().lock().write_all(text.as_bytes());
            if out.ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(f) => {
            eprintln!("{}", json!({"error": f.kind, "detail": f.detail}));
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: &Cli) -> CliResult<Outcome> {
    if cli.verbose {
        let t = qbp::operator_core::Tolerances::default();
        eprintln!("{}", serde_json::to_string(&t).expect("tolerances serialize"));
    }
    match &cli.command {
        Command::Validate { network } => {
            let d = load_network(network)?.validate();
            let passed = d.passed;
            Ok(Outcome { body: Body::Json(serde_json::to_value(d).expect("diagnostics serialize")), ok: passed })
        }
        Command::Assemble { network, marginals, factor_graph } => {
            if *factor_graph {
                let fj: FactorGraphJson = from_value(read_json(network)?, "factor graph")?;
                let fg = fj.build()?;
                if *marginals {
                    let state = fg.state()?;
                    let mut m = BTreeMap::new();
                    for v in fg.variables() {
                        m.insert(v.clone(), state.reduce_to(&[v.as_str()])?);
                    }
                    return ok(json!({ "marginals": marginals_to_value(&m) }));
                }
                let (net, traced) = factor_graph_to_bifactor(&fg)?;
                return ok(json!({ "network": NetworkJson::from_network(&net), "traced": traced }));
            }
            let net = load_network(network)?;
            if *marginals {
                let m = exact_marginals(&net, &all_targets(&net))?;
                ok(json!({ "marginals": marginals_to_value(&m) }))
            } else {
                ok(operator_to_value(&net.assemble_state()?))
            }
        }
        Command::Run { network, engine } => {
            let net = load_network(network)?;
            let (beliefs, report) = run(&net, &engine.options())?;
            if engine.trace {
                for t in &report.trace {
                    eprintln!("{}", serde_json::to_string(t).expect("trace serializes"));
                }
            }
            let mut out = run_output(&beliefs, &report);
            if engine.trace {
                out["report"].as_object_mut().expect("report object").remove("trace");
            }
            ok(out)
        }
        Command::Infer { network, measurement, targets, engine } => {
            let net = load_network(network)?;
            let mj: MeasurementJson = from_value(read_json(measurement)?, "measurement")?;
            let m = mj.build(net.registry())?;
            let targets = parse_targets(targets)
                .unwrap_or_else(|| net.graph().vertices().iter().map(|v| Target::Vertex(v.clone())).collect());
            let res = infer(&net, &m, &targets, &engine.options())?;
            ok(json!({ "marginals": marginals_to_value(&res.marginals), "report": res.report }))
        }
        Command::CheckMarkov { state, graph, threshold, vertex_only } => {
            let rho = load_state(state)?;
            let g = load_graph(graph)?;
            let rep = local_markov_report(&rho, &g, *threshold, *vertex_only)?;
            ok(serde_json::to_value(rep).expect("report serializes"))
        }
        Command::Hc { state, graph, threshold } => {
            let rho = load_state(state)?;
            let g = load_graph(graph)?;
            let hc = hc_decompose(&rho, &g, &BTreeMap::new())?;
            let mut cliques = serde_json::Map::new();
            let mut nonclique = serde_json::Map::new();
            for t in &hc.terms {
                let key = t.subset.join(",");
                if t.is_clique {
                    cliques.insert(key, json!({ "sigma": operator_to_value(&t.sigma), "k_norm": t.k_norm }));
                } else {
                    nonclique.insert(key, json!(t.k_norm));
                }
            }
            let is_markov = hc.max_nonclique_norm <= *threshold;
            ok(json!({
                "cliques": cliques,
                "nonclique_k_norms": nonclique,
                "max_nonclique_norm": hc.max_nonclique_norm,
                "log_scalar": hc.log_scalar,
                "reconstruction_distance": hc.reconstruction_distance,
                "nonclique_terms_vanish": is_markov,
            }))
        }
        Command::Decode { code, noise, syndrome, oracle, oracle_tol, engine } => {
            let code: StabilizerCode = from_value(read_json(code)?, "code")?;
            let choi = parse_operator(&read_json(noise)?)?.matrix()?;
            let noise = NoiseModel::from_choi(choi)?;
            let s: Syndrome = syndrome.parse()?;
            let targets: Vec<usize> = (0..code.n_qubits()).collect();
            let res = decode_marginals(&code, &noise, &s, &targets, &engine.options())?;
            let mut out = json!({
                "marginals": marginals_to_value(&res.marginals),
                "heuristic": res.heuristic,
                "report": res.report,
            });
            let mut within = true;
            if *oracle {
                let exact = decode_oracle(&code, &noise, &s, &targets)?;
                let (per, worst) = compare_marginals(&res.marginals, &exact)?;
                within = worst <= *oracle_tol;
                out["oracle"] = json!({ "trace_distance": per, "max_trace_distance": worst, "tol": oracle_tol, "within_tol": within });
            }
            Ok(Outcome { body: Body::Json(out), ok: within })
        }
        Command::Mps { mps, targets, check_tol, engine } => {
            let spec: MpsSpec = from_value(read_json(mps)?, "mps")?;
            let mps = MatrixProductState::from_spec(&spec)?;
            let got = mps_reduced_qbp(&mps, &engine.options())?;
            let wanted: Vec<String> = match parse_targets(targets) {
                Some(t) => t.iter().map(Target::name).collect(),
                None => got.marginals.keys().cloned().collect(),
            };
            let site = |l: &str| -> CliResult<usize> {
                (0..mps.sites()).find(|&u| site_label(u) == l).ok_or_else(|| fail("UnknownVertex", format!("no site `{l}`")))
            };
            let mut qbp_m = BTreeMap::new();
            let mut direct = BTreeMap::new();
            for key in &wanted {
                let op = got.marginals.get(key).ok_or_else(|| fail("InvalidInput", format!("`{key}` is not a site or bond")))?;
                let sites: Vec<usize> = key.split('|').map(site).collect::<CliResult<_>>()?;
                qbp_m.insert(key.clone(), op.clone());
                direct.insert(key.clone(), mps_reduced_direct(&mps, &sites)?);
            }
            let (per, worst) = compare_marginals(&qbp_m, &direct)?;
            let within = worst <= *check_tol;
            let out = json!({
                "qbp": marginals_to_value(&qbp_m),
                "direct": marginals_to_value(&direct),
                "trace_distance": per,
                "max_trace_distance": worst,
                "within_tol": within,
                "report": got.report,
            });
            Ok(Outcome { body: Body::Json(out), ok: within })
        }
        Command::Gibbs { hamiltonian, beta, order, coarse, check_tol } => {
            let hj: HamiltonianJson = from_value(read_json(hamiltonian)?, "hamiltonian")?;
            let h = hj.build()?;
            let net = if *coarse { pair_coarse_grain(&h, *beta, *order)? } else { trotter_bifactor(&h, *beta, *order)? };
            let exact = gibbs_state(&h, *beta)?;
            let d = net.assemble_state()?.trace_distance(&exact)?;
            let within = check_tol.map_or(true, |t| d <= t);
            let out = json!({ "network": NetworkJson::from_network(&net), "assembly_trace_distance": d, "within_tol": within });
            Ok(Outcome { body: Body::Json(out), ok: within })
        }
        Command::Fixture { name } => ok(fixtures::fixture(name)?),
        Command::Compare { beliefs, oracle, tol } => {
            let a = read_marginals(&read_json(beliefs)?)?;
            let b = read_marginals(&read_json(oracle)?)?;
            let (per, worst) = compare_marginals(&a, &b)?;
            let within = worst <= *tol;
            let out = json!({ "trace_distance": per, "max_trace_distance": worst, "tol": tol, "within_tol": within });
            Ok(Outcome { body: Body::Json(out), ok: within })
        }
        Command::Plotdata { kind: Plot::HeisenbergCmi { n, beta_grid } } => {
            let grid = parse_grid(beta_grid)?;
            let mut csv = String::from("beta,cmi\n");
            for beta in grid {
                csv.push_str(&format!("{beta},{}\n", fixtures::heisenberg_end_cmi(*n, beta)?));
            }
            Ok(Outcome { body: Body::Text(csv), ok: true })
        }
    }
}

fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    let bad = || fail("InvalidInput", format!("beta grid `{s}` is not start:stop:steps"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let a: f64 = parts[0].parse().map_err(|_| bad())?;
    let b: f64 = parts[1].parse().map_err(|_| bad())?;
    let steps: usize = parts[2].parse().map_err(|_| bad())?;
    if steps == 0 || a < 0.0 || b < a {
        return Err(bad());
    }
    if steps == 1 {
        return Ok(vec![a]);
    }
    Ok((0..steps).map(|k| a + (b - a) * k as f64 / (steps - 1) as f64).collect())
}
