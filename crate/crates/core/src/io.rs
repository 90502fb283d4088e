//! Readers and writers for the CSV and TOML file formats.
//!
//! Readers check the header exactly and report failures with the file path
//! and the 1-based line number of the offending record. Writers return the
//! document as a `String`; [`write_atomic`] puts it on disk.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::carbon::{CarbonLedger, CategoryPool, FluxDelta, PoolParams};
use crate::error::ParseError;
use crate::flow_model::{
    default_flow_id, Flow, FlowGraph, FlowKey, Node, NodeKind, Observation, ObservationTarget, Product,
    ProductCategory, Sigma,
};
use crate::reconcile::ReconcileResult;
use crate::report::{DeltaReport, ReportRow};
use crate::scenario::{Scenario, ScenarioDiff};
use crate::units::{ConversionTable, DEFAULT_CARBON_DENSITY};

pub const FLOWS_HEADER: &[&str] = &["flow_id", "from", "to", "product", "quantity_m3wfe"];
pub const RAW_FLOWS_HEADER: &[&str] = &["flow_id", "from", "to", "product", "quantity_reported"];
pub const NODES_HEADER: &[&str] = &["node_id", "label", "kind"];
pub const PRODUCTS_HEADER: &[&str] = &["product_id", "label", "category"];
pub const OBSERVATIONS_HEADER: &[&str] = &["target_kind", "target_key", "value_m3wfe", "sigma_m3wfe", "source"];
pub const COEFFICIENTS_HEADER: &[&str] = &["product_id", "wfe_coefficient", "carbon_density_tC_per_m3"];
pub const REPORT_ROWS_HEADER: &[&str] = &["label", "target_kind", "target_key"];

/// Row key of the coefficients file holding the fallback carbon density.
pub const DEFAULT_ROW: &str = "__default__";

/// Fixed three-decimal notation, never `-0.000`.
pub fn fixed3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".to_string()
    } else {
        s
    }
}

fn read_text(path: &Path) -> Result<String, ParseError> {
    fs::read_to_string(path).map_err(|source| ParseError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_number(field: &str, what: &str) -> Result<f64, String> {
    let t = field.trim();
    let v: f64 = t.parse().map_err(|_| format!("{what}: {t:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{what}: {t:?} is not finite"));
    }
    Ok(v)
}

/// Parse a headed CSV document, mapping each record through `row`.
fn parse_csv<T>(
    text: &str,
    origin: &Path,
    header: &[&str],
    mut row: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, ParseError> {
    let file_err = |message: String| ParseError::File {
        path: origin.to_path_buf(),
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let found = reader.headers().map_err(|e| file_err(e.to_string()))?.clone();
    let found: Vec<&str> = found.iter().collect();
    if found != header {
        return Err(file_err(format!(
            "expected header {:?}, found {:?}",
            header.join(","),
            found.join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            ParseError::Row {
                path: origin.to_path_buf(),
                row: line,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(0, |p| p.line());
        out.push(row(&record).map_err(|message| ParseError::Row {
            path: origin.to_path_buf(),
            row: line,
            message,
        })?);
    }
    Ok(out)
}

fn read_csv<T>(
    path: &Path,
    header: &[&str],
    row: impl FnMut(&csv::StringRecord) -> Result<T, String>,
) -> Result<Vec<T>, ParseError> {
    parse_csv(&read_text(path)?, path, header, row)
}

fn non_empty<'a>(field: &'a str, what: &str) -> Result<&'a str, String> {
    if field.is_empty() {
        Err(format!("{what} is empty"))
    } else {
        Ok(field)
    }
}

fn flow_row(r: &csv::StringRecord) -> Result<Flow, String> {
    let key = FlowKey::new(
        non_empty(&r[1], "from")?,
        non_empty(&r[2], "to")?,
        non_empty(&r[3], "product")?,
    );
    let quantity = parse_number(&r[4], "quantity")?;
    let id = if r[0].is_empty() { default_flow_id(&key) } else { r[0].to_string() };
    Ok(Flow::new(id, key, quantity))
}

pub fn parse_flows(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Flow>, ParseError> {
    parse_csv(text, origin.as_ref(), FLOWS_HEADER, flow_row)
}

pub fn read_flows(path: impl AsRef<Path>) -> Result<Vec<Flow>, ParseError> {
    read_csv(path.as_ref(), FLOWS_HEADER, flow_row)
}

/// Flows in reported units, before conversion.
pub fn read_raw_flows(path: impl AsRef<Path>) -> Result<Vec<Flow>, ParseError> {
    read_csv(path.as_ref(), RAW_FLOWS_HEADER, flow_row)
}

fn node_row(r: &csv::StringRecord) -> Result<Node, String> {
    let kind: NodeKind = r[2].parse().map_err(|e: ParseError| e.to_string())?;
    Ok(Node::new(non_empty(&r[0], "node_id")?, &r[1], kind))
}

pub fn parse_nodes(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Node>, ParseError> {
    parse_csv(text, origin.as_ref(), NODES_HEADER, node_row)
}

pub fn read_nodes(path: impl AsRef<Path>) -> Result<Vec<Node>, ParseError> {
    read_csv(path.as_ref(), NODES_HEADER, node_row)
}

fn product_row(r: &csv::StringRecord) -> Result<Product, String> {
    let category: ProductCategory = r[2].parse().map_err(|e: ParseError| e.to_string())?;
    Ok(Product::new(non_empty(&r[0], "product_id")?, &r[1], category))
}

pub fn parse_products(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Product>, ParseError> {
    parse_csv(text, origin.as_ref(), PRODUCTS_HEADER, product_row)
}

pub fn read_products(path: impl AsRef<Path>) -> Result<Vec<Product>, ParseError> {
    read_csv(path.as_ref(), PRODUCTS_HEADER, product_row)
}

fn observation_row(r: &csv::StringRecord) -> Result<Observation, String> {
    let target = ObservationTarget::parse(&r[0], &r[1]).map_err(|e| e.to_string())?;
    let value = parse_number(&r[2], "value")?;
    let sigma = match &r[3] {
        "" => None,
        s if s.eq_ignore_ascii_case("exact") => Some(Sigma::Exact),
        s => {
            let v = parse_number(s, "sigma")?;
            if v <= 0.0 {
                return Err(format!("sigma must be > 0, got {v}"));
            }
            Some(Sigma::StdDev(v))
        }
    };
    Ok(Observation {
        target,
        value,
        sigma,
        source: r[4].to_string(),
    })
}

pub fn parse_observations(text: &str, origin: impl AsRef<Path>) -> Result<Vec<Observation>, ParseError> {
    parse_csv(text, origin.as_ref(), OBSERVATIONS_HEADER, observation_row)
}

pub fn read_observations(path: impl AsRef<Path>) -> Result<Vec<Observation>, ParseError> {
    read_csv(path.as_ref(), OBSERVATIONS_HEADER, observation_row)
}

type CoefficientRow = (String, Option<f64>, Option<f64>);

fn coefficient_row(r: &csv::StringRecord) -> Result<CoefficientRow, String> {
    let opt = |field: &str, what| -> Result<Option<f64>, String> {
        if field.is_empty() {
            Ok(None)
        } else {
            parse_number(field, what).map(Some)
        }
    };
    Ok((
        non_empty(&r[0], "product_id")?.to_string(),
        opt(&r[1], "wfe_coefficient")?,
        opt(&r[2], "carbon_density")?,
    ))
}

fn build_table(rows: Vec<CoefficientRow>, origin: &Path) -> Result<ConversionTable, ParseError> {
    let file_err = |message: String| ParseError::File {
        path: origin.to_path_buf(),
        message,
    };
    let default = rows
        .iter()
        .find(|r| r.0 == DEFAULT_ROW)
        .and_then(|r| r.2)
        .unwrap_or(DEFAULT_CARBON_DENSITY);
    let mut table = ConversionTable::new(default).map_err(|e| file_err(e.to_string()))?;
    for (product, wfe, density) in rows {
        if product == DEFAULT_ROW {
            continue;
        }
        if let Some(c) = wfe {
            table = table.with_wfe(&product, c).map_err(|e| file_err(e.to_string()))?;
        }
        if let Some(d) = density {
            table = table.with_carbon_density(&product, d).map_err(|e| file_err(e.to_string()))?;
        }
    }
    Ok(table)
}

pub fn parse_coefficients(text: &str, origin: impl AsRef<Path>) -> Result<ConversionTable, ParseError> {
    let rows = parse_csv(text, origin.as_ref(), COEFFICIENTS_HEADER, coefficient_row)?;
    build_table(rows, origin.as_ref())
}

pub fn read_coefficients(path: impl AsRef<Path>) -> Result<ConversionTable, ParseError> {
    let rows = read_csv(path.as_ref(), COEFFICIENTS_HEADER, coefficient_row)?;
    build_table(rows, path.as_ref())
}

fn report_row(r: &csv::StringRecord) -> Result<ReportRow, String> {
    Ok(ReportRow {
        label: non_empty(&r[0], "label")?.to_string(),
        target: ObservationTarget::parse(&r[1], &r[2]).map_err(|e| e.to_string())?,
    })
}

pub fn parse_report_rows(text: &str, origin: impl AsRef<Path>) -> Result<Vec<ReportRow>, ParseError> {
    parse_csv(text, origin.as_ref(), REPORT_ROWS_HEADER, report_row)
}

pub fn read_report_rows(path: impl AsRef<Path>) -> Result<Vec<ReportRow>, ParseError> {
    read_csv(path.as_ref(), REPORT_ROWS_HEADER, report_row)
}

/// Load the three graph files into a merged graph.
pub fn read_graph(
    period: &str,
    products: impl AsRef<Path>,
    nodes: impl AsRef<Path>,
    flows: impl AsRef<Path>,
) -> Result<FlowGraph, ParseError> {
    Ok(FlowGraph::new(
        period,
        read_nodes(nodes)?,
        read_products(products)?,
        read_flows(flows)?,
    ))
}

pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario, ParseError> {
    let path = path.as_ref();
    Scenario::from_toml(&read_text(path)?).map_err(|e| ParseError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPool {
    half_life: Option<f64>,
    swds_fraction: Option<f64>,
    swds_half_life: Option<f64>,
    recycling_rate: Option<f64>,
}

impl RawPool {
    fn over(&self, base: CategoryPool) -> CategoryPool {
        CategoryPool {
            half_life: self.half_life.unwrap_or(base.half_life),
            swds_fraction: self.swds_fraction.unwrap_or(base.swds_fraction),
            swds_half_life: self.swds_half_life.unwrap_or(base.swds_half_life),
            recycling_rate: self.recycling_rate.unwrap_or(base.recycling_rate),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPoolParams {
    #[serde(default)]
    default: RawPool,
    #[serde(default)]
    category: BTreeMap<ProductCategory, RawPool>,
}

/// Pool parameters from TOML: a `[default]` table and `[category.<name>]`
/// tables. Missing fields fall back to the default table, then to
/// [`CategoryPool::new`] with a 2-year half-life.
pub fn parse_pool_params(text: &str) -> Result<PoolParams, ParseError> {
    let raw: RawPoolParams =
        toml::from_str(text).map_err(|e| ParseError::invalid_value("pool parameters", e.to_string()))?;
    let default = raw.default.over(CategoryPool::new(2.0));
    let categories = raw.category.iter().map(|(c, p)| (*c, p.over(default))).collect();
    let params = PoolParams { default, categories };
    params
        .validate()
        .map_err(|e| ParseError::invalid_value("pool parameters", e.to_string()))?;
    Ok(params)
}

pub fn read_pool_params(path: impl AsRef<Path>) -> Result<PoolParams, ParseError> {
    let path = path.as_ref();
    parse_pool_params(&read_text(path)?).map_err(|e| ParseError::File {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn csv_field(text: &str) -> String {
    if text.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", text.replace('"', "\"\""))
    } else {
        text.to_string()
    }
}

/// Graph flows at full precision.
pub fn flows_csv(graph: &FlowGraph) -> String {
    let mut out = FLOWS_HEADER.join(",") + "\n";
    for f in graph.flows() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&f.id),
            csv_field(f.from()),
            csv_field(f.to()),
            csv_field(f.product()),
            f.quantity
        );
    }
    out
}

pub fn nodes_csv(graph: &FlowGraph) -> String {
    let mut out = NODES_HEADER.join(",") + "\n";
    for n in graph.nodes() {
        let _ = writeln!(out, "{},{},{}", csv_field(&n.id), csv_field(&n.label), n.kind.as_str());
    }
    out
}

pub fn products_csv(graph: &FlowGraph) -> String {
    let mut out = PRODUCTS_HEADER.join(",") + "\n";
    for p in graph.products() {
        let _ = writeln!(out, "{},{},{}", csv_field(&p.id), csv_field(&p.label), p.category.as_str());
    }
    out
}

pub fn observations_csv(observations: &[Observation]) -> String {
    let mut out = OBSERVATIONS_HEADER.join(",") + "\n";
    for o in observations {
        let sigma = match o.sigma {
            None => String::new(),
            Some(Sigma::Exact) => "exact".into(),
            Some(Sigma::StdDev(s)) => s.to_string(),
        };
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            o.target.kind_str(),
            csv_field(&o.target.key_string()),
            o.value,
            sigma,
            csv_field(&o.source)
        );
    }
    out
}

/// `target_key,observed,reconciled,residual,sigma`; exact observations
/// leave `sigma` empty. Keys are prefixed with the target kind.
pub fn residuals_csv(result: &ReconcileResult) -> String {
    let mut out = String::from("target_key,observed,reconciled,residual,sigma\n");
    for r in &result.residuals {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.target.to_string()),
            fixed3(r.observed),
            fixed3(r.reconciled),
            fixed3(r.residual),
            r.sigma.map(fixed3).unwrap_or_default()
        );
    }
    out
}

pub fn delta_csv(report: &DeltaReport) -> String {
    let mut out = String::from("label,baseline,reference,delta_percent,flag\n");
    for r in &report.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            csv_field(&r.label),
            fixed3(r.baseline),
            r.reference.map(fixed3).unwrap_or_default(),
            r.delta_percent.map(fixed3).unwrap_or_default(),
            r.flag.as_str()
        );
    }
    out
}

/// One row per (year, category); stocks are end-of-year, all in tC.
pub fn ledger_csv(ledger: &CarbonLedger) -> String {
    let mut out = String::from(
        "year,category,hwp_in_use,swds,inflow_from_harvest,emitted_energy,emitted_decay,exported,recycled\n",
    );
    for y in &ledger.years {
        let mut categories: Vec<ProductCategory> = y.stocks.keys().chain(y.fluxes.keys()).copied().collect();
        categories.sort();
        categories.dedup();
        for c in categories {
            let s = y.stocks.get(&c).copied().unwrap_or_default();
            let f = y.fluxes.get(&c).copied().unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                y.year,
                c.as_str(),
                fixed3(s.hwp_in_use),
                fixed3(s.swds),
                fixed3(f.inflow_from_harvest),
                fixed3(f.emitted_energy),
                fixed3(f.emitted_decay),
                fixed3(f.exported),
                fixed3(f.recycled)
            );
        }
    }
    out
}

/// Per-year totals, scenario minus baseline.
pub fn ledger_comparison_csv(deltas: &[FluxDelta]) -> String {
    let mut out =
        String::from("year,hwp_in_use,swds,inflow_from_harvest,emitted_energy,emitted_decay,exported\n");
    for d in deltas {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            d.year,
            fixed3(d.hwp_in_use),
            fixed3(d.swds),
            fixed3(d.inflow_from_harvest),
            fixed3(d.emitted_energy),
            fixed3(d.emitted_decay),
            fixed3(d.exported)
        );
    }
    out
}

/// `section,key,value,unit` rows: flow and node deltas, carbon deltas,
/// the rerouted total and deposit checks.
pub fn diff_csv(diff: &ScenarioDiff) -> String {
    let mut out = String::from("section,key,value,unit\n");
    for (key, d) in &diff.flow_deltas {
        let _ = writeln!(out, "flow,{},{},m3_wfe", csv_field(&key.to_string()), fixed3(*d));
    }
    for (node, d) in &diff.node_deltas {
        let _ = writeln!(out, "node,{},{},m3_wfe", csv_field(node), fixed3(*d));
    }
    let c = &diff.carbon_delta;
    let _ = writeln!(out, "carbon,burned,{},tC", fixed3(c.burned));
    let _ = writeln!(out, "carbon,stored_in_products,{},tC", fixed3(c.stored_in_products));
    let _ = writeln!(out, "carbon,exported,{},tC", fixed3(c.exported));
    let _ = writeln!(out, "summary,rerouted_volume,{},m3_wfe", fixed3(diff.rerouted_volume));
    for check in &diff.deposit_checks {
        let key = csv_field(&format!("{}|{}|{}", check.edit, check.node, check.product));
        let _ = writeln!(out, "deposit_volume,{key},{},m3_wfe", fixed3(check.volume));
        let _ = writeln!(out, "deposit_mass,{key},{},t", fixed3(check.mass));
        let _ = writeln!(out, "deposit_cap,{key},{},t", fixed3(check.cap));
    }
    out
}

/// Write `contents` to a temporary sibling, then rename over `path`.
pub fn write_atomic(path: impl AsRef<Path>, contents: &str) -> std::io::Result<()> {
    let path = path.as_ref();
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp: PathBuf = dir.join(format!(".{name}.tmp{}", std::process::id()));
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path).inspect_err(|_| {
        let _ = fs::remove_file(&tmp);
    })
}
