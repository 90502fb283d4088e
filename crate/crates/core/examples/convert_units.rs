// Convert reported quantities (bulk m³ of chips, tonnes of pulp, m³ of sawn
// timber) to m³ wood-fiber equivalent, then to carbon.
//
// Run with `cargo run --example convert_units`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::{cli, io, FlowGraph};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<FlowGraph, Box<dyn Error>> {
    let dir = data_dir();
    let table = io::read_coefficients(dir.join("coefficients.csv"))?;
    let raw = io::read_raw_flows(dir.join("raw_flows.csv"))?;
    let flows = cli::convert_flows(&raw, &table)?;
    let graph = FlowGraph::new(
        "2014-2018",
        io::read_nodes(dir.join("nodes.csv"))?,
        io::read_products(dir.join("products.csv"))?,
        flows,
    );

    println!("{:<40} {:>14} {:>14} {:>12}", "flow", "reported", "m³ WFE", "tC");
    for reported in &raw {
        let wfe = graph.quantity(&reported.key);
        println!(
            "{:<40} {:>14.0} {:>14.0} {:>12.0}",
            reported.key.to_string(),
            reported.quantity,
            wfe,
            table.to_carbon(wfe, reported.product())?
        );
    }
    println!("balanced: {}", graph.is_balanced());
    Ok(graph)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
