// Track the carbon in the baseline's products for fifty years under two
// sets of half-lives.
//
// Run with `cargo run --example carbon_ledger`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::carbon::{
    compare_ledgers, ledger_from_graph, ledger_totals, simulate, CarbonLedger, CarbonState, DestinationClass,
    DestinationClasses,
};
use silvaflux::io;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<(CarbonLedger, CarbonLedger), Box<dyn Error>> {
    let dir = data_dir();
    let graph = io::read_graph(
        "2014-2018",
        dir.join("products.csv"),
        dir.join("nodes.csv"),
        dir.join("flows.csv"),
    )?;
    let table = io::read_coefficients(dir.join("coefficients.csv"))?;
    let classes = DestinationClasses::new()
        .with("energy", DestinationClass::Energy)
        .with("regional_use", DestinationClass::Product);

    let inflows = ledger_from_graph(&graph, &table, &classes)?;
    for (category, inflow) in &inflows {
        println!(
            "{:<18} product {:>9.0}  energy {:>9.0}  export {:>9.0} tC/yr",
            category.as_str(),
            inflow.product,
            inflow.energy,
            inflow.export
        );
    }

    let tier1 = io::read_pool_params(dir.join("pools.toml"))?;
    let short = io::read_pool_params(dir.join("pools_short_panel.toml"))?;
    let start = CarbonState::new();
    let a = simulate(&start, &inflows, &tier1, 2020, 50)?;
    let b = simulate(&start, &inflows, &short, 2020, 50)?;

    println!("{:>6} {:>12} {:>12} {:>12}", "year", "in use", "swds", "decay");
    for t in ledger_totals(&a).iter().step_by(10) {
        println!("{:>6} {:>12.0} {:>12.0} {:>12.0}", t.year, t.hwp_in_use, t.swds, t.emitted_decay);
    }
    let last = compare_ledgers(&a, &b)?.pop().expect("fifty years");
    println!(
        "14-year panels instead of 25-year: {:+.0} tC in use by {}",
        last.hwp_in_use, last.year
    );
    Ok((a, b))
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
