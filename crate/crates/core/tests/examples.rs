//! Every example under `examples/` runs and reports the expected figures.

macro_rules! example {
    ($module:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $module {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(convert_units, "convert_units.rs");
example!(perfect_blend, "perfect_blend.rs");
example!(reconcile_grand_est, "reconcile_grand_est.rs");
example!(scenario_crushing, "scenario_crushing.rs");
example!(scenario_chemistry, "scenario_chemistry.rs");
example!(carbon_ledger, "carbon_ledger.rs");
example!(observed_delta_report, "observed_delta_report.rs");
example!(sankey_svg, "sankey_svg.rs");

mod common;

use silvaflux::report::Availability;

#[test]
fn convert_units_reproduces_bundled_baseline() {
    let converted = convert_units::run_example().expect("convert example runs");
    let baseline = common::baseline();
    assert!(converted.is_balanced());
    for flow in baseline.flows() {
        let q = converted.quantity(&flow.key);
        assert!((q - flow.quantity).abs() <= 1e-9 * flow.quantity, "{}: {q}", flow.key);
    }
}

#[test]
fn perfect_blend_example_is_consistent() {
    let s = perfect_blend::run_example().expect("blend example runs");
    assert!((s.pc + s.pe - 2_900_000.0).abs() < 1e-6);
    assert!((s.ic + s.ie - 308_000.0).abs() < 1e-6);
    assert!((s.pc + s.ic - 2_828_000.0).abs() < 1e-6);
}

#[test]
fn reconcile_example_balances_every_transformer() {
    let r = reconcile_grand_est::run_example().expect("reconcile example runs");
    assert!(r.graph.is_balanced());
    assert!(r.graph.flows().iter().all(|f| f.quantity >= 0.0));
    assert!(r.underdetermined.is_empty());
    assert_eq!(r.residuals.len(), 26);
}

#[test]
fn scenario_crushing_example_matches_anchor() {
    let d = scenario_crushing::run_example().expect("scenario example runs");
    assert_eq!(d.rerouted_volume, 96_000.0);
    assert_eq!(d.carbon_delta.burned, -24_000.0);
}

#[test]
fn scenario_chemistry_example_respects_cap() {
    let d = scenario_chemistry::run_example().expect("chemistry example runs");
    assert_eq!(d.rerouted_volume, 77_000.0);
    assert_eq!(d.carbon_delta.burned, -19_250.0);
    let check = &d.deposit_checks[0];
    assert!(check.mass <= check.cap * (1.0 + 1e-9));
}

#[test]
fn carbon_ledger_example_runs_fifty_years() {
    let (tier1, short) = carbon_ledger::run_example().expect("ledger example runs");
    assert_eq!(tier1.years.len(), 50);
    assert_eq!(short.year_labels(), tier1.year_labels());
}

#[test]
fn observed_report_example_flags_crushing_rows() {
    let report = observed_delta_report::run_example().expect("report example runs");
    let na = report.rows.iter().filter(|r| r.flag == Availability::NotAvailable).count();
    assert_eq!(na, 3);
    assert_eq!(report.rows.len(), 11);
}

#[test]
fn sankey_example_highlights_scenario_flows() {
    let (before, after) = sankey_svg::run_example().expect("sankey example runs");
    assert!(!before.svg.contains(r#"class="highlighted""#));
    assert_eq!(after.svg.matches(r#"class="highlighted""#).count(), 5);
    roxmltree::Document::parse(&after.svg).expect("well-formed SVG");
}
