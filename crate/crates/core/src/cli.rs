//! Command-line pipeline: `convert`, `reconcile`, `scenario`, `report` and
//! `carbon` over the file formats in [`crate::io`].
//!
//! Every subcommand loads all of its inputs first, computes its outputs in
//! memory, and only then writes them (each through a temporary file and a
//! rename), so a failing run leaves no partial output behind.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

use crate::carbon::{self, CarbonError, CarbonState, DestinationClass, DestinationClasses, PoolParams};
use crate::error::ParseError;
use crate::flow_model::{Flow, FlowGraph, Observation};
use crate::io;
use crate::reconcile::{self, ReconcileError, ReconcileProblem, DEFAULT_SIGMA_REL};
use crate::report::{self, ColorClass, ReportError, ReportRow, SankeyOptions};
use crate::scenario::{self, ScenarioError};
use crate::units::{ConversionTable, UnitsError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_OUTPUT: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_SCENARIO: i32 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{}: {message}", path.display())]
    Config { path: PathBuf, message: String },
    #[error("config does not name a {0} file")]
    MissingInput(&'static str),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("conversion failed for flow {flow}: {source}")]
    Units { flow: String, source: UnitsError },
    #[error(transparent)]
    Reconcile(#[from] ReconcileError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Carbon(#[from] CarbonError),
    #[error(transparent)]
    Report(#[from] ReportError),
    #[error("cannot write {}: {source}", path.display())]
    Output { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Reconcile(
                ReconcileError::Infeasible { .. } | ReconcileError::NoConvergence(_) | ReconcileError::Singular,
            ) => EXIT_INFEASIBLE,
            CliError::Scenario(_) => EXIT_SCENARIO,
            CliError::Output { .. } => EXIT_OUTPUT,
            _ => EXIT_INPUT,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config { .. } => "config",
            CliError::MissingInput(_) => "missing_input",
            CliError::Parse(ParseError::Io { .. }) => "io",
            CliError::Parse(_) => "parse",
            CliError::Units { .. } => "units",
            CliError::Reconcile(ReconcileError::Infeasible { .. }) => "infeasible",
            CliError::Reconcile(_) => "reconcile",
            CliError::Scenario(_) => "scenario",
            CliError::Carbon(_) => "carbon",
            CliError::Report(_) => "report",
            CliError::Output { .. } => "output",
            CliError::Usage(_) => "usage",
        }
    }

    /// Single-line JSON error object.
    pub fn to_json(&self) -> String {
        let mut obj = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        let path = match self {
            CliError::Config { path, .. } | CliError::Output { path, .. } => Some(path.as_path()),
            CliError::Parse(e) => e.path(),
            _ => None,
        };
        if let Some(p) = path {
            obj["path"] = json!(p.display().to_string());
        }
        if let CliError::Parse(e) = self {
            if let Some(row) = e.row() {
                obj["row"] = json!(row);
            }
        }
        obj.to_string()
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputPaths {
    pub products: Option<PathBuf>,
    pub nodes: Option<PathBuf>,
    pub flows: Option<PathBuf>,
    /// Flows in reported units, read by `convert`.
    pub raw_flows: Option<PathBuf>,
    pub observations: Option<PathBuf>,
    pub coefficients: Option<PathBuf>,
    pub scenario: Option<PathBuf>,
    pub pool_params: Option<PathBuf>,
    /// Labelled rows for `report`.
    pub report_rows: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineOptions {
    pub default_sigma_rel: f64,
    /// Smallest default standard deviation, m³ WFE.
    pub sigma_floor: f64,
    /// Sankey pixels per m³ WFE.
    pub scale: f64,
    pub first_year: i32,
    pub years: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            default_sigma_rel: DEFAULT_SIGMA_REL,
            sigma_floor: crate::flow_model::BALANCE_TOL_ABS,
            scale: SankeyOptions::default().scale,
            first_year: 2020,
            years: 50,
        }
    }
}

/// Pipeline configuration, read from TOML. Relative paths are resolved
/// against the directory holding the config file.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub period: String,
    pub inputs: InputPaths,
    pub output_dir: PathBuf,
    pub options: PipelineOptions,
    pub classes: DestinationClasses,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_period")]
    period: String,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    inputs: InputPaths,
    #[serde(default)]
    options: PipelineOptions,
    #[serde(default)]
    classes: BTreeMap<String, DestinationClass>,
}

fn default_period() -> String {
    "baseline".into()
}

impl PipelineConfig {
    pub fn from_toml(text: &str, base_dir: &Path, origin: &Path) -> Result<Self, CliError> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.to_path_buf(),
            message: e.to_string(),
        })?;
        let resolve = |p: Option<PathBuf>| p.map(|p| base_dir.join(p));
        let inputs = InputPaths {
            products: resolve(raw.inputs.products),
            nodes: resolve(raw.inputs.nodes),
            flows: resolve(raw.inputs.flows),
            raw_flows: resolve(raw.inputs.raw_flows),
            observations: resolve(raw.inputs.observations),
            coefficients: resolve(raw.inputs.coefficients),
            scenario: resolve(raw.inputs.scenario),
            pool_params: resolve(raw.inputs.pool_params),
            report_rows: resolve(raw.inputs.report_rows),
        };
        let mut classes = DestinationClasses::new();
        for (node, class) in raw.classes {
            classes.insert(node, class);
        }
        let options = raw.options;
        let bad = |message: String| CliError::Config {
            path: origin.to_path_buf(),
            message,
        };
        if !(options.scale.is_finite() && options.scale > 0.0) {
            return Err(bad(format!("options.scale must be > 0, got {}", options.scale)));
        }
        if !(options.default_sigma_rel.is_finite() && options.default_sigma_rel > 0.0) {
            return Err(bad(format!(
                "options.default_sigma_rel must be > 0, got {}",
                options.default_sigma_rel
            )));
        }
        Ok(PipelineConfig {
            period: raw.period,
            inputs,
            output_dir: base_dir.join(raw.output_dir.unwrap_or_else(|| PathBuf::from("out"))),
            options,
            classes,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, CliError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ParseError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml(&text, base, path)
    }

    fn sankey(&self) -> SankeyOptions {
        SankeyOptions::default().with_scale(self.options.scale)
    }
}

fn required<'a>(path: &'a Option<PathBuf>, name: &'static str) -> Result<&'a Path, CliError> {
    path.as_deref().ok_or(CliError::MissingInput(name))
}

fn load_graph(config: &PipelineConfig) -> Result<FlowGraph, CliError> {
    let i = &config.inputs;
    Ok(io::read_graph(
        &config.period,
        required(&i.products, "products")?,
        required(&i.nodes, "nodes")?,
        required(&i.flows, "flows")?,
    )?)
}

fn load_table(config: &PipelineConfig) -> Result<ConversionTable, CliError> {
    match &config.inputs.coefficients {
        Some(p) => Ok(io::read_coefficients(p)?),
        None => Ok(ConversionTable::default()),
    }
}

fn load_pools(config: &PipelineConfig) -> Result<PoolParams, CliError> {
    match &config.inputs.pool_params {
        Some(p) => Ok(io::read_pool_params(p)?),
        None => Ok(PoolParams::tier1()),
    }
}

fn check_valid(graph: &FlowGraph) -> Result<(), CliError> {
    let violations = graph.validate();
    if violations.is_empty() {
        return Ok(());
    }
    Err(ReconcileError::InvalidTemplate(violations).into())
}

/// Named documents produced by a subcommand, in write order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Outputs {
    pub files: Vec<(String, String)>,
}

impl Outputs {
    fn push(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    pub fn get(&self, name: &str) -> Option<&str> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, c)| c.as_str())
    }

    /// Write every document under `dir` and return the written paths.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
        std::fs::create_dir_all(dir).map_err(|source| CliError::Output {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        for (name, contents) in &self.files {
            let path = dir.join(name);
            io::write_atomic(&path, contents).map_err(|source| CliError::Output {
                path: path.clone(),
                source,
            })?;
            written.push(path);
        }
        Ok(written)
    }
}

fn graph_files(out: &mut Outputs, prefix: &str, graph: &FlowGraph) {
    out.push(&format!("{prefix}flows.csv"), io::flows_csv(graph));
    out.push(&format!("{prefix}nodes.csv"), io::nodes_csv(graph));
    out.push(&format!("{prefix}products.csv"), io::products_csv(graph));
}

/// Convert reported quantities to m³ WFE with the coefficient table.
pub fn convert_flows(raw: &[Flow], table: &ConversionTable) -> Result<Vec<Flow>, CliError> {
    raw.iter()
        .map(|f| {
            let q = table.to_wfe(f.quantity, f.product()).map_err(|source| CliError::Units {
                flow: f.id.clone(),
                source,
            })?;
            Ok(Flow::new(f.id.clone(), f.key.clone(), q))
        })
        .collect()
}

pub fn cmd_convert(config: &PipelineConfig) -> Result<Outputs, CliError> {
    let i = &config.inputs;
    let products = io::read_products(required(&i.products, "products")?)?;
    let nodes = io::read_nodes(required(&i.nodes, "nodes")?)?;
    let raw = io::read_raw_flows(required(&i.raw_flows, "raw_flows")?)?;
    let table = io::read_coefficients(required(&i.coefficients, "coefficients")?)?;

    let graph = FlowGraph::new(&config.period, nodes, products, convert_flows(&raw, &table)?);
    check_valid(&graph)?;
    let mut out = Outputs::default();
    graph_files(&mut out, "", &graph);
    Ok(out)
}

pub fn cmd_reconcile(config: &PipelineConfig) -> Result<Outputs, CliError> {
    let template = load_graph(config)?;
    let observations = io::read_observations(required(&config.inputs.observations, "observations")?)?;

    let mut problem = ReconcileProblem::new(template, observations).with_default_sigma_rel(config.options.default_sigma_rel);
    problem.sigma_floor = config.options.sigma_floor;
    let result = reconcile::reconcile(&problem)?;
    let mut sankey = config.sankey();
    sankey.title = Some(format!("{}: reconciled flows (model estimate)", result.graph.period()));
    let docs = report::emit_sankey(&result.graph, &BTreeMap::new(), &sankey)?;

    let summary = json!({
        "period": result.graph.period(),
        "status": "model estimate",
        "method": "weighted least squares, mass balance at transformers, nonnegative flows",
        "balanced": result.graph.is_balanced(),
        "objective": result.objective,
        "iterations": result.iterations,
        "underdetermined": result.underdetermined.iter().map(|k| k.to_string()).collect::<Vec<_>>(),
    });
    let mut out = Outputs::default();
    graph_files(&mut out, "reconciled_", &result.graph);
    out.push("residuals.csv", io::residuals_csv(&result));
    out.push("reconciled.svg", docs.svg);
    out.push("reconciled.sankey.json", docs.interchange);
    out.push("reconcile_summary.json", serde_json::to_string_pretty(&summary).expect("json") + "\n");
    Ok(out)
}

pub fn cmd_scenario(config: &PipelineConfig) -> Result<Outputs, CliError> {
    let baseline = load_graph(config)?;
    let scenario = io::read_scenario(required(&config.inputs.scenario, "scenario")?)?;
    let table = load_table(config)?;
    let pools = load_pools(config)?;

    let (graph, diff) = scenario::apply(&baseline, &scenario, &table, &config.classes)?;
    let highlights: BTreeMap<_, _> = diff
        .flow_deltas
        .iter()
        .filter(|(k, d)| **d != 0.0 && graph.flow(k).is_some())
        .map(|(k, _)| (k.clone(), ColorClass::Highlighted))
        .collect();
    let docs = report::emit_sankey(&graph, &highlights, &config.sankey())?;

    let (first, years) = (config.options.first_year, config.options.years);
    let classes_after = scenario.declared_classes(&config.classes);
    let base_inflows = carbon::ledger_from_graph(&baseline, &table, &config.classes)?;
    let scen_inflows = carbon::ledger_from_graph(&graph, &table, &classes_after)?;
    let empty = CarbonState::new();
    let base_ledger = carbon::simulate(&empty, &base_inflows, &pools, first, years)?;
    let scen_ledger = carbon::simulate(&empty, &scen_inflows, &pools, first, years)?;
    let comparison = carbon::compare_ledgers(&base_ledger, &scen_ledger)?;

    let mut out = Outputs::default();
    graph_files(&mut out, "scenario_", &graph);
    out.push("scenario.diff.csv", io::diff_csv(&diff));
    out.push("scenario.svg", docs.svg);
    out.push("scenario.sankey.json", docs.interchange);
    out.push("scenario_ledger.csv", io::ledger_csv(&scen_ledger));
    out.push("carbon_comparison.csv", io::ledger_comparison_csv(&comparison));
    Ok(out)
}

/// Delta report of the baseline graph against observed values.
pub fn delta_report(graph: &FlowGraph, rows: &[ReportRow], observed: &[Observation]) -> report::DeltaReport {
    report::build_delta_report(&report::baseline_totals(graph, rows), observed)
}

pub fn cmd_report(config: &PipelineConfig) -> Result<Outputs, CliError> {
    let graph = load_graph(config)?;
    let observed = io::read_observations(required(&config.inputs.observations, "observations")?)?;
    let rows = io::read_report_rows(required(&config.inputs.report_rows, "report_rows")?)?;

    check_valid(&graph)?;
    let mut out = Outputs::default();
    out.push("report.delta.csv", io::delta_csv(&delta_report(&graph, &rows, &observed)));
    Ok(out)
}

pub fn cmd_carbon(config: &PipelineConfig) -> Result<Outputs, CliError> {
    let graph = load_graph(config)?;
    let table = load_table(config)?;
    let pools = load_pools(config)?;

    check_valid(&graph)?;
    let inflows = carbon::ledger_from_graph(&graph, &table, &config.classes)?;
    let ledger = carbon::simulate(
        &CarbonState::new(),
        &inflows,
        &pools,
        config.options.first_year,
        config.options.years,
    )?;
    let mut out = Outputs::default();
    out.push("ledger.csv", io::ledger_csv(&ledger));
    Ok(out)
}

#[derive(Debug, Parser)]
#[command(name = "silvaflux", version, about = "Wood supply-chain flow accounting pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Pipeline configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Convert reported quantities to m³ wood-fiber equivalent.
    Convert(CommonArgs),
    /// Reconcile observations into a mass-balanced graph.
    Reconcile(CommonArgs),
    /// Apply a scenario file to the baseline graph.
    Scenario(CommonArgs),
    /// Compare the baseline graph with observed values.
    Report(CommonArgs),
    /// Run the carbon ledger on the baseline graph.
    Carbon(CommonArgs),
}

impl Command {
    fn args(&self) -> &CommonArgs {
        match self {
            Command::Convert(a) | Command::Reconcile(a) | Command::Scenario(a) | Command::Report(a) | Command::Carbon(a) => a,
        }
    }
}

/// Run one subcommand end to end and return the written paths.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    let args = command.args();
    let config = PipelineConfig::load(&args.config)?;
    let outputs = match command {
        Command::Convert(_) => cmd_convert(&config)?,
        Command::Reconcile(_) => cmd_reconcile(&config)?,
        Command::Scenario(_) => cmd_scenario(&config)?,
        Command::Report(_) => cmd_report(&config)?,
        Command::Carbon(_) => cmd_carbon(&config)?,
    };
    let dir = args.out.clone().unwrap_or(config.output_dir);
    outputs.write_to(&dir)
}

/// Parse `argv`, run, print written paths to stdout or one JSON error
/// object to stderr, and return the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return EXIT_OK;
        }
        Err(e) => {
            let err = CliError::Usage(e.kind().to_string());
            eprintln!("{}", err.to_json());
            eprint!("{}", e.render());
            return EXIT_INPUT;
        }
    };
    match execute(&cli.command) {
        Ok(paths) => {
            // A closed stdout (e.g. piped into `head`) is not a failure.
            let mut stdout = std::io::stdout().lock();
            for p in paths {
                if writeln!(stdout, "{}", p.display()).is_err() {
                    break;
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_resolves_relative_paths() {
        let text = "period = \"2019\"\n[inputs]\nflows = \"f.csv\"\n[options]\nscale = 0.01\n[classes]\nenergy = \"energy\"\n";
        let c = PipelineConfig::from_toml(text, Path::new("/data"), Path::new("/data/c.toml")).unwrap();
        assert_eq!(c.inputs.flows.as_deref(), Some(Path::new("/data/f.csv")));
        assert_eq!(c.output_dir, Path::new("/data/out"));
        assert_eq!(c.options.scale, 0.01);
        assert_eq!(c.options.default_sigma_rel, DEFAULT_SIGMA_REL);
        assert_eq!(c.classes.get("energy"), Some(DestinationClass::Energy));
    }

    #[test]
    fn config_rejects_unknown_keys_and_bad_options() {
        let p = Path::new("c.toml");
        assert!(PipelineConfig::from_toml("bogus = 1\n", Path::new("."), p).is_err());
        assert!(PipelineConfig::from_toml("[options]\nscale = 0.0\n", Path::new("."), p).is_err());
    }

    #[test]
    fn error_json_is_one_line_with_exit_code() {
        let e = CliError::Parse(ParseError::Row {
            path: "flows.csv".into(),
            row: 4,
            message: "bad".into(),
        });
        let text = e.to_json();
        assert!(!text.contains('\n'));
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(v["row"], 4);
        assert_eq!(v["exit_code"], EXIT_INPUT);
        assert_eq!(v["path"], "flows.csv");
        let inf = CliError::Reconcile(ReconcileError::Infeasible { residual: 1.0 });
        assert_eq!(inf.exit_code(), EXIT_INFEASIBLE);
    }
}
