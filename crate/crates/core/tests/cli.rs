//! End-to-end runs of the `silvaflux` binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_silvaflux")).args(args).output().expect("binary runs")
}

fn run_config(sub: &str, config: &Path, out: &Path) -> Output {
    run(&[sub, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()])
}

/// Copy of the bundled dataset in a scratch directory, so fixtures can be
/// altered without touching the originals.
fn workspace() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    copy_tree(&data_dir(), dir.path());
    dir
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let target = to.join(entry.file_name());
        if entry.file_type().unwrap().is_dir() {
            if entry.file_name() != "out" {
                copy_tree(&entry.path(), &target);
            }
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn error_json(output: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&output.stderr);
    let line = stderr.lines().next().expect("an error line");
    serde_json::from_str(line).unwrap_or_else(|e| panic!("{e}: {line}"))
}

fn files_in(dir: &Path) -> Vec<String> {
    if !dir.exists() {
        return Vec::new();
    }
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

#[test]
fn every_subcommand_writes_its_outputs() {
    let ws = workspace();
    let cases: [(&str, &str, &[&str]); 7] = [
        ("convert", "pipeline_convert.toml", &["flows.csv", "nodes.csv", "products.csv"]),
        (
            "reconcile",
            "pipeline_reconcile.toml",
            &["reconciled_flows.csv", "residuals.csv", "reconciled.svg", "reconciled.sankey.json", "reconcile_summary.json"],
        ),
        (
            "scenario",
            "pipeline_scenario_crushing_pulp.toml",
            &["scenario_flows.csv", "scenario.diff.csv", "scenario.svg", "scenario_ledger.csv", "carbon_comparison.csv"],
        ),
        ("scenario", "pipeline_scenario_chemistry_bark.toml", &["scenario.diff.csv", "scenario.sankey.json"]),
        ("scenario", "pipeline_scenario_empty.toml", &["scenario_flows.csv"]),
        ("report", "pipeline_report.toml", &["report.delta.csv"]),
        ("carbon", "pipeline_carbon.toml", &["ledger.csv"]),
    ];
    for (i, (sub, config, expected)) in cases.iter().enumerate() {
        let out = ws.path().join(format!("out{i}"));
        let o = run_config(sub, &ws.path().join(config), &out);
        assert!(o.status.success(), "{sub} {config}: {}", String::from_utf8_lossy(&o.stderr));
        let names = files_in(&out);
        for e in *expected {
            assert!(names.iter().any(|n| n == e), "{sub} {config} missing {e}: {names:?}");
        }
        let stdout = String::from_utf8_lossy(&o.stdout);
        assert_eq!(stdout.lines().count(), names.len());
    }
}

#[test]
fn convert_reproduces_bundled_flows() {
    let ws = workspace();
    let out = ws.path().join("out");
    assert!(run_config("convert", &ws.path().join("pipeline_convert.toml"), &out).status.success());
    let produced = silvaflux::io::read_flows(out.join("flows.csv")).unwrap();
    let bundled = silvaflux::io::read_flows(data_dir().join("flows.csv")).unwrap();
    assert_eq!(produced.len(), bundled.len());
    for b in &bundled {
        let a = produced.iter().find(|f| f.key == b.key).unwrap_or_else(|| panic!("missing {}", b.key));
        assert!((a.quantity - b.quantity).abs() <= 1e-6 * b.quantity.max(1.0), "{}: {} vs {}", a.key, a.quantity, b.quantity);
    }
}

#[test]
fn reconcile_output_is_balanced() {
    let ws = workspace();
    let out = ws.path().join("out");
    assert!(run_config("reconcile", &ws.path().join("pipeline_reconcile.toml"), &out).status.success());
    let g = silvaflux::io::read_graph(
        "2014-2018",
        out.join("reconciled_products.csv"),
        out.join("reconciled_nodes.csv"),
        out.join("reconciled_flows.csv"),
    )
    .unwrap();
    assert!(g.is_balanced());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("reconcile_summary.json")).unwrap()).unwrap();
    assert!(summary.is_object());
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let ws = workspace();
    for (sub, config) in [
        ("reconcile", "pipeline_reconcile.toml"),
        ("scenario", "pipeline_scenario_crushing_pulp.toml"),
        ("report", "pipeline_report.toml"),
        ("carbon", "pipeline_carbon.toml"),
    ] {
        let a = ws.path().join(format!("{sub}_a"));
        let b = ws.path().join(format!("{sub}_b"));
        assert!(run_config(sub, &ws.path().join(config), &a).status.success());
        assert!(run_config(sub, &ws.path().join(config), &b).status.success());
        let names = files_in(&a);
        assert_eq!(names, files_in(&b));
        for n in names {
            assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{sub}: {n} differs");
        }
    }
}

#[test]
fn missing_input_file_exits_2_and_names_path() {
    let ws = workspace();
    fs::remove_file(ws.path().join("flows.csv")).unwrap();
    let out = ws.path().join("out");
    let o = run_config("report", &ws.path().join("pipeline_report.toml"), &out);
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert_eq!(err["exit_code"], 2);
    assert!(err["path"].as_str().unwrap().ends_with("flows.csv"), "{err}");
    assert!(files_in(&out).is_empty());
}

#[test]
fn missing_config_exits_2() {
    let ws = workspace();
    let o = run_config("carbon", &ws.path().join("nope.toml"), &ws.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(error_json(&o)["path"].as_str().unwrap().ends_with("nope.toml"));
}

#[test]
fn malformed_row_exits_2_with_row_number() {
    let ws = workspace();
    let path = ws.path().join("flows.csv");
    let text = fs::read_to_string(&path).unwrap().replacen("F05,", "F05,extra,", 1);
    fs::write(&path, text).unwrap();
    let o = run_config("carbon", &ws.path().join("pipeline_carbon.toml"), &ws.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    let err = error_json(&o);
    assert!(err["row"].as_u64().is_some(), "{err}");
    assert!(err["path"].as_str().unwrap().ends_with("flows.csv"));
}

#[test]
fn unparseable_number_reports_its_line() {
    let ws = workspace();
    let path = ws.path().join("flows.csv");
    let text = fs::read_to_string(&path).unwrap().replace("2900000", "lots");
    fs::write(&path, text).unwrap();
    let o = run_config("carbon", &ws.path().join("pipeline_carbon.toml"), &ws.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["row"], 4);
}

#[test]
fn contradictory_exact_observations_exit_3() {
    let ws = workspace();
    fs::write(
        ws.path().join("observations.csv"),
        "target_kind,target_key,value_m3wfe,sigma_m3wfe,source\n\
         flow,forest|timber|roundwood,100,exact,a\n\
         flow,import|timber|roundwood,0,exact,a\n\
         node_out,timber,10000000,exact,b\n",
    )
    .unwrap();
    let out = ws.path().join("out");
    let o = run_config("reconcile", &ws.path().join("pipeline_reconcile.toml"), &out);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_json(&o)["exit_code"], 3);
    assert!(files_in(&out).is_empty());
}

#[test]
fn oversized_reroute_exits_4_without_outputs() {
    let ws = workspace();
    fs::write(
        ws.path().join("scenarios/crushing_pulp.toml"),
        "name = \"too much\"\n\n[[edit]]\nkind = \"reroute\"\nname = \"r\"\nproduct = \"bark\"\n\
         from_node = \"timber\"\nold_to = \"energy\"\nnew_to = \"regional_use\"\namount = 9000000.0\n",
    )
    .unwrap();
    let out = ws.path().join("out");
    let o = run_config("scenario", &ws.path().join("pipeline_scenario_crushing_pulp.toml"), &out);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(error_json(&o)["error"], "scenario");
    assert!(files_in(&out).is_empty());
}

#[test]
fn empty_observed_file_gives_all_not_available() {
    let ws = workspace();
    let config = ws.path().join("pipeline_report.toml");
    let text = fs::read_to_string(&config).unwrap().replace("observed_2020_2021.csv", "observed_empty.csv");
    fs::write(&config, text).unwrap();
    let out = ws.path().join("out");
    assert!(run_config("report", &config, &out).status.success());
    let csv = fs::read_to_string(out.join("report.delta.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 11);
    assert!(rows.iter().all(|r| r.ends_with("N/A")), "{csv}");
}

#[test]
fn empty_scenario_leaves_baseline_unchanged() {
    let ws = workspace();
    let out = ws.path().join("out");
    assert!(run_config("scenario", &ws.path().join("pipeline_scenario_empty.toml"), &out).status.success());
    let g = silvaflux::io::read_graph(
        "2014-2018",
        out.join("scenario_products.csv"),
        out.join("scenario_nodes.csv"),
        out.join("scenario_flows.csv"),
    )
    .unwrap();
    let base = silvaflux::io::read_graph(
        "2014-2018",
        data_dir().join("products.csv"),
        data_dir().join("nodes.csv"),
        data_dir().join("flows.csv"),
    )
    .unwrap();
    assert!(g.structurally_eq(&base));
    let diff = fs::read_to_string(out.join("scenario.diff.csv")).unwrap();
    assert!(!diff.lines().any(|l| l.starts_with("flow,")), "{diff}");
}

#[test]
fn help_and_version_exit_zero() {
    let v = run(&["--version"]);
    assert!(v.status.success());
    assert!(String::from_utf8_lossy(&v.stdout).contains(env!("CARGO_PKG_VERSION")));
    let h = run(&["--help"]);
    assert!(h.status.success());
    let text = String::from_utf8_lossy(&h.stdout);
    for sub in ["convert", "reconcile", "scenario", "report", "carbon"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = run(&["frobnicate"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(error_json(&o)["error"], "usage");
}
