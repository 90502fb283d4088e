// Reconcile inconsistent survey, customs and industry statistics into one
// mass-balanced flow graph.
//
// Run with `cargo run --example reconcile_grand_est`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::io;
use silvaflux::reconcile::{reconcile, ReconcileProblem, ReconcileResult};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<ReconcileResult, Box<dyn Error>> {
    let dir = data_dir();
    let template = io::read_graph(
        "2014-2018",
        dir.join("products.csv"),
        dir.join("nodes.csv"),
        dir.join("flows.csv"),
    )?;
    let observations = io::read_observations(dir.join("observations.csv"))?;
    println!("{} flows, {} observations", template.flows().len(), observations.len());

    let result = reconcile(&ReconcileProblem::new(template, observations))?;
    println!("objective {:.6}, {} active-set iterations", result.objective, result.iterations);
    println!("{:<45} {:>12} {:>12} {:>10}", "target", "observed", "reconciled", "z");
    for r in &result.residuals {
        let z = r.sigma.map_or(0.0, |s| r.residual / s);
        println!("{:<45} {:>12.0} {:>12.0} {:>10.3}", r.target.to_string(), r.observed, r.reconciled, z);
    }
    for (node, residual) in result.graph.balance_residuals() {
        println!("balance at {node}: {residual:+.3e} m³");
    }
    if !result.underdetermined.is_empty() {
        println!("underdetermined flows: {:?}", result.underdetermined);
    }
    Ok(result)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
