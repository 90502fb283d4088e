// Draw the baseline and the crushing scenario as Sankey diagrams, with the
// changed flows highlighted, and write the SVG and JSON documents.
//
// Run with `cargo run --example sankey_svg -- [output_dir]`.

use std::collections::BTreeMap;
use std::error::Error;
use std::path::PathBuf;

use silvaflux::carbon::{DestinationClass, DestinationClasses};
use silvaflux::io;
use silvaflux::report::{emit_sankey, ColorClass, SankeyDocuments, SankeyOptions};
use silvaflux::scenario::apply;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<(SankeyDocuments, SankeyDocuments), Box<dyn Error>> {
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
    let (after, diff) = apply(&baseline, &scenario, &table, &classes)?;

    let options = SankeyOptions {
        title: Some("Wood flows, m³ WFE per year".into()),
        ..SankeyOptions::default()
    };
    let before = emit_sankey(&baseline, &BTreeMap::new(), &options)?;
    let highlights = diff
        .flow_deltas
        .keys()
        .filter(|k| after.flow(k).is_some())
        .map(|k| (k.clone(), ColorClass::Highlighted))
        .collect();
    let changed = emit_sankey(&after, &highlights, &options)?;

    for n in &before.layout.nodes {
        println!("layer {} {:<28} height {:>8.2} px", n.layer, n.label, n.height);
    }
    Ok((before, changed))
}

fn main() {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("sankey_out"));
    let result = run_example().and_then(|(before, after)| {
        std::fs::create_dir_all(&out)?;
        io::write_atomic(out.join("baseline.svg"), &before.svg)?;
        io::write_atomic(out.join("baseline.sankey.json"), &before.interchange)?;
        io::write_atomic(out.join("crushing_pulp.svg"), &after.svg)?;
        io::write_atomic(out.join("crushing_pulp.sankey.json"), &after.interchange)?;
        println!("wrote {}", out.display());
        Ok(())
    });
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
