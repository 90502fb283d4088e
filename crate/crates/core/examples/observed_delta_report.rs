// Compare the pre-2019 baseline with 2020-2021 observatory values, sector by
// sector. Percentages are relative to the observed value.
//
// Run with `cargo run --example observed_delta_report`.

use std::error::Error;
use std::path::PathBuf;

use silvaflux::report::DeltaReport;
use silvaflux::{cli, io};

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn run_example() -> Result<DeltaReport, Box<dyn Error>> {
    let dir = data_dir();
    let graph = io::read_graph(
        "2014-2018",
        dir.join("products.csv"),
        dir.join("nodes.csv"),
        dir.join("flows.csv"),
    )?;
    let rows = io::read_report_rows(dir.join("report_rows.csv"))?;
    let observed = io::read_observations(dir.join("observed_2020_2021.csv"))?;

    let report = cli::delta_report(&graph, &rows, &observed);
    println!("{:<40} {:>10} {:>10} {:>9}", "", "baseline", "observed", "delta");
    for row in &report.rows {
        let reference = row.reference.map_or("N/A".to_string(), |r| format!("{:.0}", r / 1000.0));
        let delta = row.delta_percent.map_or("N/A".to_string(), |d| format!("{d:+.2} %"));
        println!("{:<40} {:>10.0} {:>10} {:>9}", row.label, row.baseline / 1000.0, reference, delta);
    }
    Ok(report)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
