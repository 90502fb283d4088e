//! Annual harvested-wood-products carbon ledger.
//!
//! Carbon reaching a terminal node is booked by destination class: energy use
//! is emitted the same year, exports leave the ledger at the border, and
//! products enter an in-use pool per product category. In-use pools decay
//! with discrete first-order retention `r = 2^(−1/h)` for half-life `h`.
//! Retired carbon is partly recycled back into use; of the rest a share goes
//! to solid-waste disposal sites (SWDS), which decay with their own half-life,
//! and the remainder is emitted.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::ParseError;
use crate::flow_model::{FlowGraph, Node, NodeKind, ProductCategory};
use crate::units::{ConversionTable, UnitsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CarbonError {
    #[error("negative stock or inflow {value} for {category}")]
    NegativeStock { category: ProductCategory, value: f64 },
    #[error("terminal node {0:?} has no destination class")]
    UnclassifiedNode(String),
    #[error("flow references product {0:?} missing from the product catalog")]
    UnknownProduct(String),
    #[error("ledgers cover different years ({left:?} vs {right:?})")]
    YearMismatch { left: Vec<i32>, right: Vec<i32> },
    #[error("invalid pool parameter {name} = {value} for {category}")]
    InvalidParameter {
        category: String,
        name: &'static str,
        value: f64,
    },
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// Where carbon reaching a node ends up.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DestinationClass {
    Energy,
    Product,
    Export,
}

impl DestinationClass {
    pub fn as_str(self) -> &'static str {
        match self {
            DestinationClass::Energy => "energy",
            DestinationClass::Product => "product",
            DestinationClass::Export => "export",
        }
    }
}

impl fmt::Display for DestinationClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DestinationClass {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "energy" => Ok(DestinationClass::Energy),
            "product" => Ok(DestinationClass::Product),
            "export" => Ok(DestinationClass::Export),
            other => Err(ParseError::invalid_value("destination class", other)),
        }
    }
}

/// Node id → destination class. Export nodes default to [`DestinationClass::Export`]
/// and transformers to [`DestinationClass::Product`]; sinks must be listed.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DestinationClasses {
    classes: BTreeMap<String, DestinationClass>,
}

impl DestinationClasses {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, node: impl Into<String>, class: DestinationClass) -> Self {
        self.insert(node, class);
        self
    }

    pub fn insert(&mut self, node: impl Into<String>, class: DestinationClass) {
        self.classes.insert(node.into(), class);
    }

    pub fn get(&self, node: &str) -> Option<DestinationClass> {
        self.classes.get(node).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, DestinationClass)> {
        self.classes.iter().map(|(k, v)| (k.as_str(), *v))
    }

    pub fn classify(&self, node: &Node) -> Option<DestinationClass> {
        self.get(&node.id).or(match node.kind {
            NodeKind::Export => Some(DestinationClass::Export),
            NodeKind::Transformer => Some(DestinationClass::Product),
            _ => None,
        })
    }
}

/// Decay and end-of-life parameters for one product category.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CategoryPool {
    /// Years; `f64::INFINITY` for no decay.
    pub half_life: f64,
    /// Share of discarded carbon entering SWDS.
    pub swds_fraction: f64,
    pub swds_half_life: f64,
    /// Share of retired carbon returning to use.
    pub recycling_rate: f64,
}

impl CategoryPool {
    pub const fn new(half_life: f64) -> Self {
        CategoryPool {
            half_life,
            swds_fraction: 0.5,
            swds_half_life: 35.0,
            recycling_rate: 0.0,
        }
    }

    /// Fraction of the in-use stock kept over one year.
    pub fn retained_fraction(&self) -> f64 {
        retained_fraction(self.half_life)
    }

    fn check(&self, category: &str) -> Result<(), CarbonError> {
        let bad = |name, value| CarbonError::InvalidParameter {
            category: category.to_string(),
            name,
            value,
        };
        if !(self.half_life > 0.0) {
            return Err(bad("half_life", self.half_life));
        }
        if !(self.swds_half_life > 0.0) {
            return Err(bad("swds_half_life", self.swds_half_life));
        }
        if !(0.0..=1.0).contains(&self.swds_fraction) {
            return Err(bad("swds_fraction", self.swds_fraction));
        }
        if !(0.0..1.0).contains(&self.recycling_rate) {
            return Err(bad("recycling_rate", self.recycling_rate));
        }
        Ok(())
    }
}

/// `2^(−1/h)`; 1 for an infinite half-life.
pub fn retained_fraction(half_life: f64) -> f64 {
    (-1.0 / half_life).exp2()
}

/// Pool parameters per product category with a fallback.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolParams {
    pub default: CategoryPool,
    pub categories: BTreeMap<ProductCategory, CategoryPool>,
}

impl Default for PoolParams {
    fn default() -> Self {
        PoolParams::tier1()
    }
}

impl PoolParams {
    pub fn uniform(pool: CategoryPool) -> Self {
        PoolParams {
            default: pool,
            categories: BTreeMap::new(),
        }
    }

    /// Sawnwood 35 yr, panels 25 yr, pulp and paper 2 yr, everything else 2 yr.
    pub fn tier1() -> Self {
        let mut categories = BTreeMap::new();
        categories.insert(ProductCategory::SawnwoodSoftwood, CategoryPool::new(35.0));
        categories.insert(ProductCategory::SawnwoodHardwood, CategoryPool::new(35.0));
        categories.insert(ProductCategory::Panel, CategoryPool::new(25.0));
        categories.insert(ProductCategory::Pulp, CategoryPool::new(2.0));
        PoolParams {
            default: CategoryPool::new(2.0),
            categories,
        }
    }

    /// [`tier1`](Self::tier1) with a 14-year panel service life.
    pub fn short_panel_life() -> Self {
        let mut params = Self::tier1();
        params.categories.insert(ProductCategory::Panel, CategoryPool::new(14.0));
        params
    }

    pub fn for_category(&self, category: ProductCategory) -> &CategoryPool {
        self.categories.get(&category).unwrap_or(&self.default)
    }

    pub fn validate(&self) -> Result<(), CarbonError> {
        self.default.check("default")?;
        for (category, pool) in &self.categories {
            pool.check(category.as_str())?;
        }
        Ok(())
    }
}

/// Annual carbon arriving at terminal nodes for one category, tC/yr.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CategoryInflow {
    pub product: f64,
    pub energy: f64,
    pub export: f64,
}

impl CategoryInflow {
    pub fn total(&self) -> f64 {
        self.product + self.energy + self.export
    }
}

pub type CarbonInflows = BTreeMap<ProductCategory, CategoryInflow>;

/// Sum of all classes and categories.
pub fn total_inflow(inflows: &CarbonInflows) -> f64 {
    inflows.values().map(CategoryInflow::total).sum()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct PoolStock {
    pub hwp_in_use: f64,
    pub swds: f64,
}

pub type CarbonState = BTreeMap<ProductCategory, PoolStock>;

/// One year's fluxes for a category, tC/yr.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct Fluxes {
    pub inflow_from_harvest: f64,
    pub emitted_energy: f64,
    pub emitted_decay: f64,
    pub exported: f64,
    /// Internal: retired carbon returned to the in-use pool.
    pub recycled: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    pub state: CarbonState,
    pub fluxes: BTreeMap<ProductCategory, Fluxes>,
}

/// Advance every category by one year.
pub fn annual_step(state: &CarbonState, inflows: &CarbonInflows, params: &PoolParams) -> Result<StepOutput, CarbonError> {
    let mut categories: Vec<ProductCategory> = state.keys().chain(inflows.keys()).copied().collect();
    categories.sort();
    categories.dedup();

    let mut next = CarbonState::new();
    let mut fluxes = BTreeMap::new();
    for category in categories {
        let stock = state.get(&category).copied().unwrap_or_default();
        let inflow = inflows.get(&category).copied().unwrap_or_default();
        for value in [stock.hwp_in_use, stock.swds, inflow.product, inflow.energy, inflow.export] {
            if !(value >= 0.0) {
                return Err(CarbonError::NegativeStock { category, value });
            }
        }
        let pool = params.for_category(category);
        let r = pool.retained_fraction();
        let r_swds = retained_fraction(pool.swds_half_life);

        let retained = stock.hwp_in_use * r;
        let retired = stock.hwp_in_use - retained;
        let recycled = retired * pool.recycling_rate;
        let discarded = retired - recycled;
        let to_swds = discarded * pool.swds_fraction;
        let swds_kept = stock.swds * r_swds;
        let swds_decay = stock.swds - swds_kept;

        next.insert(
            category,
            PoolStock {
                hwp_in_use: retained + recycled + inflow.product,
                swds: swds_kept + to_swds,
            },
        );
        fluxes.insert(
            category,
            Fluxes {
                inflow_from_harvest: inflow.total(),
                emitted_energy: inflow.energy,
                emitted_decay: (discarded - to_swds) + swds_decay,
                exported: inflow.export,
                recycled,
            },
        );
    }
    Ok(StepOutput { state: next, fluxes })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerYear {
    pub year: i32,
    /// End-of-year stocks.
    pub stocks: CarbonState,
    pub fluxes: BTreeMap<ProductCategory, Fluxes>,
}

/// Stocks and fluxes over consecutive years.
#[derive(Debug, Clone, PartialEq)]
pub struct CarbonLedger {
    pub initial: CarbonState,
    pub years: Vec<LedgerYear>,
}

impl CarbonLedger {
    pub fn year_labels(&self) -> Vec<i32> {
        self.years.iter().map(|y| y.year).collect()
    }
}

/// Run `years` annual steps from `first_year` under constant inflows.
pub fn simulate(
    initial: &CarbonState,
    inflows: &CarbonInflows,
    params: &PoolParams,
    first_year: i32,
    years: usize,
) -> Result<CarbonLedger, CarbonError> {
    simulate_with(initial, params, first_year, years, |_| inflows.clone())
}

/// Like [`simulate`] with per-year inflows.
pub fn simulate_with(
    initial: &CarbonState,
    params: &PoolParams,
    first_year: i32,
    years: usize,
    mut inflows_for: impl FnMut(i32) -> CarbonInflows,
) -> Result<CarbonLedger, CarbonError> {
    params.validate()?;
    let mut state = initial.clone();
    let mut rows = Vec::with_capacity(years);
    for offset in 0..years {
        let year = first_year + offset as i32;
        let step = annual_step(&state, &inflows_for(year), params)?;
        state = step.state.clone();
        rows.push(LedgerYear {
            year,
            stocks: step.state,
            fluxes: step.fluxes,
        });
    }
    Ok(CarbonLedger {
        initial: initial.clone(),
        years: rows,
    })
}

/// Carbon carried by every flow into a terminal node, binned by destination
/// class and product category.
pub fn ledger_from_graph(
    graph: &FlowGraph,
    table: &ConversionTable,
    classes: &DestinationClasses,
) -> Result<CarbonInflows, CarbonError> {
    let mut inflows = CarbonInflows::new();
    for flow in graph.flows() {
        let Some(node) = graph.node(flow.to()) else {
            continue;
        };
        if !node.kind.is_terminal() {
            continue;
        }
        let class = classes
            .classify(node)
            .ok_or_else(|| CarbonError::UnclassifiedNode(node.id.clone()))?;
        let category = graph
            .product(flow.product())
            .map(|p| p.category)
            .ok_or_else(|| CarbonError::UnknownProduct(flow.product().to_string()))?;
        let carbon = table.to_carbon(flow.quantity, flow.product())?;
        let bin = inflows.entry(category).or_default();
        match class {
            DestinationClass::Energy => bin.energy += carbon,
            DestinationClass::Product => bin.product += carbon,
            DestinationClass::Export => bin.export += carbon,
        }
    }
    Ok(inflows)
}

/// Totals over all categories for one year, `b − a`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct FluxDelta {
    pub year: i32,
    pub hwp_in_use: f64,
    pub swds: f64,
    pub inflow_from_harvest: f64,
    pub emitted_energy: f64,
    pub emitted_decay: f64,
    pub exported: f64,
}

fn year_totals(year: &LedgerYear) -> FluxDelta {
    let mut t = FluxDelta {
        year: year.year,
        ..Default::default()
    };
    for stock in year.stocks.values() {
        t.hwp_in_use += stock.hwp_in_use;
        t.swds += stock.swds;
    }
    for f in year.fluxes.values() {
        t.inflow_from_harvest += f.inflow_from_harvest;
        t.emitted_energy += f.emitted_energy;
        t.emitted_decay += f.emitted_decay;
        t.exported += f.exported;
    }
    t
}

/// Elementwise `b − a` of yearly totals.
pub fn compare_ledgers(a: &CarbonLedger, b: &CarbonLedger) -> Result<Vec<FluxDelta>, CarbonError> {
    let (left, right) = (a.year_labels(), b.year_labels());
    if left != right {
        return Err(CarbonError::YearMismatch { left, right });
    }
    Ok(a
        .years
        .iter()
        .zip(&b.years)
        .map(|(ya, yb)| {
            let (ta, tb) = (year_totals(ya), year_totals(yb));
            FluxDelta {
                year: ta.year,
                hwp_in_use: tb.hwp_in_use - ta.hwp_in_use,
                swds: tb.swds - ta.swds,
                inflow_from_harvest: tb.inflow_from_harvest - ta.inflow_from_harvest,
                emitted_energy: tb.emitted_energy - ta.emitted_energy,
                emitted_decay: tb.emitted_decay - ta.emitted_decay,
                exported: tb.exported - ta.exported,
            }
        })
        .collect())
}

/// Yearly totals of a ledger (all categories).
pub fn ledger_totals(ledger: &CarbonLedger) -> Vec<FluxDelta> {
    ledger.years.iter().map(year_totals).collect()
}
