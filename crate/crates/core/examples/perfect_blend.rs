// Split a market into local and imported shares of consumption and exports
// under proportional mixing.
//
// Run with `cargo run --example perfect_blend`.

use std::error::Error;

use silvaflux::reconcile::{perfect_blend, BlendSplit};

pub fn run_example() -> Result<BlendSplit, Box<dyn Error>> {
    // Roundwood entering regional mills: 2.9 Mm³ harvested here, 0.308 Mm³
    // imported; 2.828 Mm³ processed in the region, 0.38 Mm³ sent on.
    let (p, i, c, e) = (2_900_000.0, 308_000.0, 2_828_000.0, 380_000.0);
    let split = perfect_blend(p, i, c, e)?;
    println!("local production to local use   pc = {:>12.1}", split.pc);
    println!("local production to export      pe = {:>12.1}", split.pe);
    println!("imports to local use            ic = {:>12.1}", split.ic);
    println!("imports re-exported             ie = {:>12.1}", split.ie);
    println!(
        "checks: pc+pe-p = {:e}, pc+ic-c = {:e}",
        split.pc + split.pe - p,
        split.pc + split.ic - c
    );

    match perfect_blend(10.0, 0.0, 5.0, 6.0) {
        Err(err) => println!("inconsistent market rejected: {err}"),
        Ok(_) => return Err("unbalanced market was accepted".into()),
    }
    Ok(split)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}
