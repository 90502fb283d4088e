// Insert a bark extractives plant, supply it with bark taken from the energy
// sector and check the supply against the extractives deposit.
//
// Run with `cargo run --example scenario_chemistry`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::carbon::{DestinationClass, DestinationClasses};
use silvaflux::io;
use silvaflux::scenario::{apply, max_reroutable, Edit, EditAction, Scenario, ScenarioDiff, ScenarioError};

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
    let scenario = io::read_scenario(dir.join("scenarios/chemistry_bark.toml"))?;
    let classes = DestinationClasses::new()
        .with("energy", DestinationClass::Energy)
        .with("regional_use", DestinationClass::Product);

    let available = max_reroutable(&baseline, "bark", "timber", "energy")?;
    println!("timber bark currently burned: {available:.0} m³");

    let (_, diff) = apply(&baseline, &scenario, &table, &classes)?;
    for check in &diff.deposit_checks {
        println!(
            "{}: {:.0} m³ bark → {:.1} t extractives (cap {:.0} t)",
            check.node, check.volume, check.mass, check.cap
        );
    }
    println!("carbon kept from burning: {:.0} tC", -diff.carbon_delta.burned);

    // A tighter deposit rejects the same supply.
    let mut tight = scenario.clone();
    if let Some(Edit {
        action: EditAction::CapByDeposit { cap_mass, .. },
        ..
    }) = tight.edits.last_mut()
    {
        *cap_mass = 30_000.0;
    }
    match apply(&baseline, &Scenario { name: "tight".into(), ..tight }, &table, &classes) {
        Err(ScenarioError::CapExceeded { mass, cap, .. }) => {
            println!("with a {cap:.0} t deposit the plant would need {mass:.0} t: rejected")
        }
        other => return Err(format!("expected a cap violation, got {other:?}").into()),
    }
    Ok(diff)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
