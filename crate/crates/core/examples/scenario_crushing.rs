// Reroute timber-sector chips and sawdust from the energy sector to the
// crushing sector and read off the carbon no longer burned.
//
// Run with `cargo run --example scenario_crushing`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::carbon::{DestinationClass, DestinationClasses};
use silvaflux::io;
use silvaflux::scenario::{apply, ScenarioDiff};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<ScenarioDiff, Box<dyn Error>> {
    let dir = data_dir();
    let baseline = io::read_graph(
        "2014-2018",
        dir.join("products.csv"),
        dir.join("nodes.csv"),
        dir.join("flows.csv"),
    )?;
    let table = io::read_coefficients(dir.join("coefficients.csv"))?;
    let scenario = io::read_scenario(dir.join("scenarios/crushing_pulp.toml"))?;
    let classes = DestinationClasses::new()
        .with("energy", DestinationClass::Energy)
        .with("regional_use", DestinationClass::Product);

    let (graph, diff) = apply(&baseline, &scenario, &table, &classes)?;
    println!("scenario {:?}: {} edits", scenario.name, scenario.edits.len());
    for (key, delta) in &diff.flow_deltas {
        println!("  {:<40} {delta:+12.0} m³", key.to_string());
    }
    println!("rerouted volume      {:>10.0} m³", diff.rerouted_volume);
    println!("carbon burned        {:>+10.0} tC", diff.carbon_delta.burned);
    println!("carbon in products   {:>+10.0} tC", diff.carbon_delta.stored_in_products);
    println!("scenario graph balanced: {}", graph.is_balanced());
    Ok(diff)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
