use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use normal_market::curves::Curves;
use normal_market::graphs::Graphs;
use normal_market::markets::{fixture, fixture_catalog};
use normal_market::mechanism::{equilibrium_replay, replay_run, replication_seed, ReplayConfig};
use normal_market::population::{validate_well_behaved, PopulationSpec};
use normal_market::scalar::{format_decimal, parse_scalar, Scalar};
use normal_market::solver::{
    classify, find_equilibria_in, verify_equilibrium_in, EquilibriumCandidate, EquilibriumSet,
};
use normal_market::Error;
use serde::Serialize;
use serde_json::{json, Value};

const DECIMAL_DIGITS: usize = 20;

/// Exact equilibrium analysis and finite-market simulation for intermediated markets.
///
/// A SPEC argument is either a path to a JSON population spec or `fixture:NAME`,
/// for example `fixture:trading?v=0.43`.
#[derive(Parser)]
#[command(name = "nm", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the well-behavedness conditions; exits 1 if any fails.
    Validate {
        spec: String,
        #[arg(long)]
        json: bool,
    },
    /// Compute the equilibrium set and print a summary.
    Solve {
        spec: String,
        /// Print the full result as JSON instead of the human summary.
        #[arg(long)]
        json: bool,
        /// Write equilibria.json and manifest.json into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export curve and graph data as CSV and JSON.
    Graph {
        spec: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay the first equilibrium candidate on sampled finite markets.
    Simulate {
        spec: String,
        /// Suppliers and demanders per replication.
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        mediators: usize,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Root seed; the NM_SEED environment variable takes precedence.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "1/2")]
        mu_bar: String,
        /// Output directory for the JSON report and the first replication's trace.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check candidates from a JSON file against the equilibrium clauses.
    Verify {
        spec: String,
        candidate: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// List the built-in fixtures with their expected outcomes.
    Fixtures {
        #[arg(long)]
        json: bool,
    },
}

enum Failure {
    /// Exit code 1: the command ran but the market or candidate failed a check.
    Domain(String),
    /// Exit code 2: bad input.
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse(_) | Error::Spec { .. } | Error::NotFound(_) | Error::Config(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Domain(e.to_string()),
        }
    }
}

type Outcome = Result<(), Failure>;

#[derive(Serialize)]
struct RunManifest {
    command: String,
    source: String,
    seed: Option<u64>,
    output_dir: Option<String>,
    version: String,
    timestamp: u64,
}

impl RunManifest {
    fn new(command: &str, source: &str, seed: Option<u64>, out: Option<&Path>) -> Self {
        RunManifest {
            command: command.into(),
            source: source.into(),
            seed,
            output_dir: out.map(|p| p.display().to_string()),
            version: env!("CARGO_PKG_VERSION").into(),
            timestamp: timestamp(),
        }
    }
}

fn timestamp() -> u64 {
    std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .unwrap_or_else(|| SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0))
}

struct Source {
    label: String,
    spec: PopulationSpec,
    frontier: Option<Scalar>,
}

impl Source {
    fn load(arg: &str) -> Result<Source, Failure> {
        if let Some(name) = arg.strip_prefix("fixture:") {
            let f = fixture(name)?;
            return Ok(Source { label: arg.into(), spec: f.spec, frontier: f.truncation_frontier });
        }
        let text = fs::read_to_string(arg).map_err(|e| Failure::Usage(format!("cannot read {arg}: {e}")))?;
        let spec = PopulationSpec::from_json(&text).map_err(|e| Failure::Usage(format!("{arg}: {e}")))?;
        Ok(Source { label: arg.into(), spec, frontier: None })
    }

    fn graphs(&self) -> Result<Graphs, Failure> {
        Ok(Graphs::from_spec(&self.spec)?.with_frontier(self.frontier.clone()))
    }
}

fn pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| Failure::Domain(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| Failure::Domain(format!("cannot write {}: {e}", path.display())))
}

fn decimal(x: &Scalar) -> String {
    format_decimal(x, DECIMAL_DIGITS)
}

fn decimal_summary(set: &EquilibriumSet) -> Vec<String> {
    set.candidates
        .iter()
        .map(|c| {
            let cand = &c.candidate;
            let mut parts = Vec::new();
            if let Some(s) = &cand.supply {
                parts.push(format!("supply price {}", decimal(&s.price)));
            }
            parts.push(format!("traded volume {}", decimal(&cand.traded_volume())));
            let prices: Vec<String> = cand.demand.atoms.iter().map(|(r, _)| decimal(r)).collect();
            parts.push(format!("demand price {}", prices.join(", ")));
            format!("decimal: {}", parts.join("; "))
        })
        .collect()
}

fn validate(spec: &str, as_json: bool) -> Outcome {
    let src = Source::load(spec)?;
    let report = validate_well_behaved(&src.spec);
    if as_json {
        print!(
            "{}",
            pretty(&json!({ "manifest": RunManifest::new("validate", &src.label, None, None), "report": report }))
        );
    } else {
        for v in &report.verdicts {
            let tag = if v.passed { "PASS" } else { "FAIL" };
            println!("{tag} condition {} ({}): {}", v.condition, v.name, v.detail);
        }
    }
    if report.all_passed() {
        Ok(())
    } else {
        let failed: Vec<String> = report.failures().iter().map(|v| v.condition.to_string()).collect();
        Err(Failure::Domain(format!("not well-behaved: condition(s) {} failed", failed.join(", "))))
    }
}

fn solve(spec: &str, as_json: bool, out: Option<&Path>) -> Outcome {
    let src = Source::load(spec)?;
    let set = find_equilibria_in(&src.graphs()?)?;
    let manifest = RunManifest::new("solve", &src.label, None, out);
    let doc = json!({ "manifest": manifest, "summary": classify(&set), "equilibria": set });
    if let Some(dir) = out {
        write_file(dir, "equilibria.json", &pretty(&doc))?;
        write_file(dir, "manifest.json", &pretty(&manifest))?;
    }
    if as_json {
        print!("{}", pretty(&doc));
    } else {
        println!("{set}");
        for line in decimal_summary(&set) {
            println!("{line}");
        }
    }
    Ok(())
}

fn graph(spec: &str, out: &Path) -> Outcome {
    let src = Source::load(spec)?;
    let g = src.graphs()?;
    let c = &g.curves;
    let files = [
        ("real_supply.csv", c.supply.to_csv()),
        ("real_demand.csv", c.demand.to_csv()),
        ("demand_revenue.csv", Curves::curve_csv(&c.revenue)),
        ("supply_cost_upper.csv", Curves::curve_csv(&c.supply_cost_curve(true)?)),
        ("supply_cost_lower.csv", Curves::curve_csv(&c.supply_cost_curve(false)?)),
        ("demand_graph.csv", g.demand_graph().to_csv()),
        ("border_v0.csv", g.vertical_border().to_csv()),
        ("border_v1.csv", g.farthest_border().to_csv()),
        ("border_v2.csv", g.sharp_border().to_csv()),
        ("border_v3.csv", g.admissible_border().to_csv()),
        ("supply_graph.csv", g.supply_graph().to_csv()),
    ];
    let doc = json!({
        "demand_graph": g.demand_graph(),
        "augmented_demand": g.augmented_demand(),
        "border_v0": g.vertical_border(),
        "border_v1": g.farthest_border(),
        "border_v2": g.sharp_border(),
        "border_v3": g.admissible_border(),
        "supply_graph": g.supply_graph(),
        "augmented_supply": g.augmented_supply(),
    });
    for (name, contents) in &files {
        write_file(out, name, contents)?;
        println!("{}", out.join(name).display());
    }
    write_file(out, "graphs.json", &pretty(&doc))?;
    write_file(out, "manifest.json", &pretty(&RunManifest::new("graph", &src.label, None, Some(out))))?;
    println!("{}", out.join("graphs.json").display());
    Ok(())
}

fn seed_override(flag: u64) -> Result<u64, Failure> {
    match std::env::var("NM_SEED") {
        Ok(s) => s.trim().parse().map_err(|_| Failure::Usage(format!("NM_SEED={s:?} is not an unsigned integer"))),
        Err(_) => Ok(flag),
    }
}

fn simulate(
    spec: &str,
    n: usize,
    mediators: usize,
    reps: usize,
    seed: u64,
    mu_bar: &str,
    out: Option<&Path>,
) -> Outcome {
    let src = Source::load(spec)?;
    let seed = seed_override(seed)?;
    let mu_bar = parse_scalar(mu_bar).map_err(|e| Failure::Usage(format!("--mu-bar: {e}")))?;
    let set = find_equilibria_in(&src.graphs()?)?;
    let Some(report0) = set.candidates.first() else {
        return Err(Failure::Domain("no equilibrium to replay".into()));
    };
    let eq = &report0.candidate;
    let cfg = ReplayConfig { n, mediators, replications: reps, seed, mu_bar };
    let report = equilibrium_replay(&src.spec, eq, &cfg)?;
    let manifest = RunManifest::new("simulate", &src.label, Some(seed), out);
    let doc = json!({ "manifest": manifest, "config": cfg, "report": report });
    match out {
        Some(dir) => {
            let (_, _, run) = replay_run(&src.spec, eq, &cfg, replication_seed(seed, 0))?;
            write_file(dir, "report.json", &pretty(&doc))?;
            write_file(dir, "trace.ndjson", &run.trace_ndjson())?;
            write_file(dir, "manifest.json", &pretty(&manifest))?;
            println!(
                "mean traded volume {} (expected {}); within 3 sigma: {}",
                decimal(&report.mean_traded_volume),
                decimal(&report.expected_volume),
                report.within_three_sigma
            );
        }
        None => print!("{}", pretty(&doc)),
    }
    Ok(())
}

/// Reads a bare candidate or every candidate of an equilibrium set, including `solve --json` output.
fn read_candidates(path: &Path) -> Result<Vec<EquilibriumCandidate>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("cannot read {}: {e}", path.display())))?;
    let value: Value =
        serde_json::from_str(&text).map_err(|e| Failure::Usage(format!("{}: parse error: {e}", path.display())))?;
    let value = value.get("equilibria").cloned().unwrap_or(value);
    let items = match value.get("candidates") {
        Some(Value::Array(items)) => items.clone(),
        Some(_) => return Err(Failure::Usage(format!("{}: candidates must be an array", path.display()))),
        None => vec![value],
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            serde_json::from_value(v).map_err(|e| Failure::Usage(format!("{}: candidate {i}: {e}", path.display())))
        })
        .collect()
}

fn verify(spec: &str, candidate: &Path, as_json: bool) -> Outcome {
    let src = Source::load(spec)?;
    let candidates = read_candidates(candidate)?;
    if candidates.is_empty() {
        return Err(Failure::Usage(format!("{}: no candidates to verify", candidate.display())));
    }
    let g = src.graphs()?;
    let verdicts: Vec<_> = candidates.iter().map(|c| verify_equilibrium_in(&g, c)).collect();
    if as_json {
        print!(
            "{}",
            pretty(&json!({ "manifest": RunManifest::new("verify", &src.label, None, None), "verdicts": verdicts }))
        );
    } else {
        for (i, v) in verdicts.iter().enumerate() {
            if v.passed {
                println!("candidate {i}: equilibrium");
            } else {
                println!("candidate {i}: not an equilibrium; violated: {}", v.violated.join(", "));
            }
            for note in &v.notes {
                println!("  note: {note}");
            }
        }
    }
    match verdicts.iter().find(|v| !v.passed) {
        None => Ok(()),
        Some(v) => Err(Failure::Domain(format!("violated clause: {}", v.first_violation().unwrap_or("unknown")))),
    }
}

fn fixtures(as_json: bool) -> Outcome {
    let catalog = fixture_catalog();
    if as_json {
        let items: Vec<Value> = catalog.iter().map(|f| json!({ "name": f.name, "expected": f.expected })).collect();
        print!("{}", pretty(&items));
    } else {
        for f in &catalog {
            println!("fixture:{}\t{} ({})", f.name, f.expected.summary, f.expected.basis);
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Validate { spec, json } => validate(&spec, json),
        Command::Solve { spec, json, out } => solve(&spec, json, out.as_deref()),
        Command::Graph { spec, out } => graph(&spec, &out),
        Command::Simulate { spec, n, mediators, reps, seed, mu_bar, out } => {
            simulate(&spec, n, mediators, reps, seed, &mu_bar, out.as_deref())
        }
        Command::Verify { spec, candidate, json } => verify(&spec, &candidate, json),
        Command::Fixtures { json } => fixtures(json),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Domain(msg)) => {
            eprintln!("nm: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("nm: {msg}");
            ExitCode::from(2)
        }
    }
}
