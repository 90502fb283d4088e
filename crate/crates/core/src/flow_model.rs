//! Sector nodes, product flows and the flow graph every other module consumes.
//!
//! Quantities are volumes in cubic meters of wood-fiber equivalent (m³ WFE).
//! A [`FlowGraph`] is immutable once built; edits produce a new graph.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

/// Relative balance tolerance applied to a transformer's inbound total.
pub const BALANCE_TOL_REL: f64 = 1e-9;
/// Absolute balance tolerance in m³ WFE.
pub const BALANCE_TOL_ABS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProductCategory {
    Roundwood,
    Fuelwood,
    ForestChips,
    IndustrialChips,
    Sawdust,
    Bark,
    SawnwoodSoftwood,
    SawnwoodHardwood,
    Panel,
    Pulp,
    Extractives,
    Other,
}

impl ProductCategory {
    pub const ALL: [ProductCategory; 12] = [
        ProductCategory::Roundwood,
        ProductCategory::Fuelwood,
        ProductCategory::ForestChips,
        ProductCategory::IndustrialChips,
        ProductCategory::Sawdust,
        ProductCategory::Bark,
        ProductCategory::SawnwoodSoftwood,
        ProductCategory::SawnwoodHardwood,
        ProductCategory::Panel,
        ProductCategory::Pulp,
        ProductCategory::Extractives,
        ProductCategory::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProductCategory::Roundwood => "roundwood",
            ProductCategory::Fuelwood => "fuelwood",
            ProductCategory::ForestChips => "forest_chips",
            ProductCategory::IndustrialChips => "industrial_chips",
            ProductCategory::Sawdust => "sawdust",
            ProductCategory::Bark => "bark",
            ProductCategory::SawnwoodSoftwood => "sawnwood_softwood",
            ProductCategory::SawnwoodHardwood => "sawnwood_hardwood",
            ProductCategory::Panel => "panel",
            ProductCategory::Pulp => "pulp",
            ProductCategory::Extractives => "extractives",
            ProductCategory::Other => "other",
        }
    }
}

impl fmt::Display for ProductCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ProductCategory {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProductCategory::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ParseError::invalid_value("product category", s))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Product {
    pub id: String,
    pub label: String,
    pub category: ProductCategory,
}

impl Product {
    pub fn new(id: impl Into<String>, label: impl Into<String>, category: ProductCategory) -> Self {
        Product {
            id: id.into(),
            label: label.into(),
            category,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Source,
    Transformer,
    Sink,
    Export,
    Import,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Source => "source",
            NodeKind::Transformer => "transformer",
            NodeKind::Sink => "sink",
            NodeKind::Export => "export",
            NodeKind::Import => "import",
        }
    }

    /// Kinds that may only emit flows.
    pub fn is_origin(self) -> bool {
        matches!(self, NodeKind::Source | NodeKind::Import)
    }

    /// Kinds that may only receive flows.
    pub fn is_terminal(self) -> bool {
        matches!(self, NodeKind::Sink | NodeKind::Export)
    }
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NodeKind {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "source" => Ok(NodeKind::Source),
            "transformer" => Ok(NodeKind::Transformer),
            "sink" => Ok(NodeKind::Sink),
            "export" => Ok(NodeKind::Export),
            "import" => Ok(NodeKind::Import),
            other => Err(ParseError::invalid_value("node kind", other)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
}

impl Node {
    pub fn new(id: impl Into<String>, label: impl Into<String>, kind: NodeKind) -> Self {
        Node {
            id: id.into(),
            label: label.into(),
            kind,
        }
    }
}

/// Identity of a flow: at most one flow per (from, to, product) triple.
///
/// Textual form is `from|to|product`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct FlowKey {
    pub from: String,
    pub to: String,
    pub product: String,
}

impl FlowKey {
    pub fn new(from: impl Into<String>, to: impl Into<String>, product: impl Into<String>) -> Self {
        FlowKey {
            from: from.into(),
            to: to.into(),
            product: product.into(),
        }
    }
}

impl fmt::Display for FlowKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}|{}|{}", self.from, self.to, self.product)
    }
}

impl FromStr for FlowKey {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('|').map(str::trim).collect();
        match parts.as_slice() {
            [from, to, product] if !from.is_empty() && !to.is_empty() && !product.is_empty() => {
                Ok(FlowKey::new(*from, *to, *product))
            }
            _ => Err(ParseError::invalid_value("flow key (from|to|product)", s)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flow {
    pub id: String,
    pub key: FlowKey,
    /// m³ WFE.
    pub quantity: f64,
}

impl Flow {
    pub fn new(id: impl Into<String>, key: FlowKey, quantity: f64) -> Self {
        Flow {
            id: id.into(),
            key,
            quantity,
        }
    }

    pub fn from(&self) -> &str {
        &self.key.from
    }

    pub fn to(&self) -> &str {
        &self.key.to
    }

    pub fn product(&self) -> &str {
        &self.key.product
    }
}

/// Default identifier given to flows created by edits.
pub fn default_flow_id(key: &FlowKey) -> String {
    format!("{}>{}:{}", key.from, key.to, key.product)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    In,
    Out,
}

/// What an observation measures.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ObservationTarget {
    Flow(FlowKey),
    /// Total through one side of a node. An empty product list means all products.
    NodeTotal {
        node: String,
        direction: Direction,
        products: Vec<String>,
    },
}

impl ObservationTarget {
    pub fn node_in(node: impl Into<String>, products: &[&str]) -> Self {
        ObservationTarget::NodeTotal {
            node: node.into(),
            direction: Direction::In,
            products: products.iter().map(|p| p.to_string()).collect(),
        }
    }

    pub fn node_out(node: impl Into<String>, products: &[&str]) -> Self {
        ObservationTarget::NodeTotal {
            node: node.into(),
            direction: Direction::Out,
            products: products.iter().map(|p| p.to_string()).collect(),
        }
    }

    /// Whether the flow contributes to this target.
    pub fn covers(&self, key: &FlowKey) -> bool {
        match self {
            ObservationTarget::Flow(k) => k == key,
            ObservationTarget::NodeTotal {
                node,
                direction,
                products,
            } => {
                let endpoint = match direction {
                    Direction::In => &key.to,
                    Direction::Out => &key.from,
                };
                endpoint == node && (products.is_empty() || products.iter().any(|p| *p == key.product))
            }
        }
    }

    /// `flow`, `node_in` or `node_out`.
    pub fn kind_str(&self) -> &'static str {
        match self {
            ObservationTarget::Flow(_) => "flow",
            ObservationTarget::NodeTotal {
                direction: Direction::In,
                ..
            } => "node_in",
            ObservationTarget::NodeTotal {
                direction: Direction::Out,
                ..
            } => "node_out",
        }
    }

    /// Key text: `from|to|product` for flows, `node` or `node|p1+p2` for node totals.
    pub fn key_string(&self) -> String {
        match self {
            ObservationTarget::Flow(k) => k.to_string(),
            ObservationTarget::NodeTotal { node, products, .. } if products.is_empty() => node.clone(),
            ObservationTarget::NodeTotal { node, products, .. } => format!("{}|{}", node, products.join("+")),
        }
    }

    pub fn parse(kind: &str, key: &str) -> Result<Self, ParseError> {
        let node_total = |direction| -> Result<Self, ParseError> {
            let (node, products) = match key.split_once('|') {
                Some((node, products)) => (
                    node.trim(),
                    products
                        .split('+')
                        .map(|p| p.trim().to_string())
                        .filter(|p| !p.is_empty())
                        .collect(),
                ),
                None => (key.trim(), Vec::new()),
            };
            if node.is_empty() {
                return Err(ParseError::invalid_value("node total key", key));
            }
            Ok(ObservationTarget::NodeTotal {
                node: node.to_string(),
                direction,
                products,
            })
        };
        match kind.trim() {
            "flow" => Ok(ObservationTarget::Flow(key.parse()?)),
            "node_in" => node_total(Direction::In),
            "node_out" => node_total(Direction::Out),
            other => Err(ParseError::invalid_value("target kind", other)),
        }
    }
}

impl fmt::Display for ObservationTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind_str(), self.key_string())
    }
}

/// Uncertainty attached to an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Sigma {
    /// Standard deviation in m³ WFE, strictly positive.
    StdDev(f64),
    /// The reported value must be met exactly (hard constraint).
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub target: ObservationTarget,
    /// m³ WFE.
    pub value: f64,
    /// `None` falls back to the reconciliation's relative default.
    pub sigma: Option<Sigma>,
    pub source: String,
}

impl Observation {
    pub fn new(target: ObservationTarget, value: f64, sigma: Option<f64>, source: impl Into<String>) -> Self {
        Observation {
            target,
            value,
            sigma: sigma.map(Sigma::StdDev),
            source: source.into(),
        }
    }

    pub fn exact(target: ObservationTarget, value: f64, source: impl Into<String>) -> Self {
        Observation {
            target,
            value,
            sigma: Some(Sigma::Exact),
            source: source.into(),
        }
    }

    pub fn check(&self) -> Result<(), String> {
        if !(self.value.is_finite() && self.value >= 0.0) {
            return Err(format!("observation {} has invalid value {}", self.target, self.value));
        }
        if let Some(Sigma::StdDev(s)) = self.sigma {
            if !(s.is_finite() && s > 0.0) {
                return Err(format!("observation {} has non-positive sigma {}", self.target, s));
            }
        }
        Ok(())
    }
}

/// One invariant violation found by [`FlowGraph::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NegativeQuantity { flow: String, quantity: f64 },
    DanglingEndpoint { flow: String, node: String },
    SelfLoop { flow: String },
    InboundToOrigin { node: String, kind: NodeKind, flow: String },
    OutboundFromTerminal { node: String, kind: NodeKind, flow: String },
    DuplicateFlowKey { key: FlowKey },
    DuplicateFlowId { id: String },
    DuplicateNode { node: String },
    UnknownProduct { flow: String, product: String },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NegativeQuantity { flow, quantity } => {
                write!(f, "flow {flow} has negative quantity {quantity}")
            }
            Violation::DanglingEndpoint { flow, node } => {
                write!(f, "flow {flow} references unknown node {node}")
            }
            Violation::SelfLoop { flow } => write!(f, "flow {flow} starts and ends at the same node"),
            Violation::InboundToOrigin { node, kind, flow } => {
                write!(f, "{kind} node {node} receives inbound flow {flow}")
            }
            Violation::OutboundFromTerminal { node, kind, flow } => {
                write!(f, "{kind} node {node} emits outbound flow {flow}")
            }
            Violation::DuplicateFlowKey { key } => write!(f, "duplicate flow key {key}"),
            Violation::DuplicateFlowId { id } => write!(f, "duplicate flow id {id}"),
            Violation::DuplicateNode { node } => write!(f, "duplicate node id {node}"),
            Violation::UnknownProduct { flow, product } => {
                write!(f, "flow {flow} references unknown product {product}")
            }
        }
    }
}

/// Directed multigraph of sectors and product flows for one reporting period.
///
/// Built with [`FlowGraph::new`], which merges parallel flows sharing a
/// [`FlowKey`] by summing them and sorts nodes, products and flows by id/key.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FlowGraph {
    period: String,
    nodes: Vec<Node>,
    products: Vec<Product>,
    flows: Vec<Flow>,
}

impl FlowGraph {
    pub fn new(period: impl Into<String>, nodes: Vec<Node>, products: Vec<Product>, flows: Vec<Flow>) -> Self {
        let mut merged: BTreeMap<FlowKey, Flow> = BTreeMap::new();
        for flow in flows {
            match merged.get_mut(&flow.key) {
                Some(existing) => existing.quantity += flow.quantity,
                None => {
                    merged.insert(flow.key.clone(), flow);
                }
            }
        }
        let mut graph = FlowGraph::from_unmerged(period, nodes, products, merged.into_values().collect());
        graph.flows.sort_by(|a, b| a.key.cmp(&b.key));
        graph
    }

    /// Keeps flows as given (no merging or reordering of flows). Nodes and
    /// products are still sorted by id. Mostly useful to exercise [`validate`](Self::validate).
    pub fn from_unmerged(
        period: impl Into<String>,
        mut nodes: Vec<Node>,
        mut products: Vec<Product>,
        flows: Vec<Flow>,
    ) -> Self {
        nodes.sort_by(|a, b| a.id.cmp(&b.id));
        products.sort_by(|a, b| a.id.cmp(&b.id));
        FlowGraph {
            period: period.into(),
            nodes,
            products,
            flows,
        }
    }

    pub fn period(&self) -> &str {
        &self.period
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn products(&self) -> &[Product] {
        &self.products
    }

    pub fn flows(&self) -> &[Flow] {
        &self.flows
    }

    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn product(&self, id: &str) -> Option<&Product> {
        self.products.iter().find(|p| p.id == id)
    }

    pub fn flow(&self, key: &FlowKey) -> Option<&Flow> {
        self.flows.iter().find(|f| &f.key == key)
    }

    pub fn quantity(&self, key: &FlowKey) -> f64 {
        self.flow(key).map_or(0.0, |f| f.quantity)
    }

    pub fn inflow(&self, node: &str) -> f64 {
        self.flows.iter().filter(|f| f.key.to == node).map(|f| f.quantity).sum()
    }

    pub fn outflow(&self, node: &str) -> f64 {
        self.flows.iter().filter(|f| f.key.from == node).map(|f| f.quantity).sum()
    }

    /// Value of a flow or node-total target evaluated on this graph.
    pub fn evaluate(&self, target: &ObservationTarget) -> f64 {
        self.flows
            .iter()
            .filter(|f| target.covers(&f.key))
            .map(|f| f.quantity)
            .sum()
    }

    /// Same graph with a new period label.
    pub fn with_period(&self, period: impl Into<String>) -> FlowGraph {
        FlowGraph {
            period: period.into(),
            ..self.clone()
        }
    }

    /// Same nodes and products with a new flow set, merged as in [`FlowGraph::new`].
    pub fn with_flows(&self, flows: Vec<Flow>) -> FlowGraph {
        FlowGraph::new(self.period.clone(), self.nodes.clone(), self.products.clone(), flows)
    }

    /// Same graph with one more node.
    pub fn with_node(&self, node: Node) -> FlowGraph {
        let mut nodes = self.nodes.clone();
        nodes.push(node);
        FlowGraph::from_unmerged(self.period.clone(), nodes, self.products.clone(), self.flows.clone())
    }

    /// Same structure with quantities replaced through `f`.
    pub fn map_quantities(&self, mut f: impl FnMut(&Flow) -> f64) -> FlowGraph {
        let flows = self
            .flows
            .iter()
            .map(|flow| Flow {
                quantity: f(flow),
                ..flow.clone()
            })
            .collect();
        FlowGraph {
            flows,
            ..self.clone()
        }
    }

    /// Σ inbound − Σ outbound for every transformer node. Other node kinds
    /// have residual zero by convention and are omitted.
    pub fn balance_residuals(&self) -> BTreeMap<String, f64> {
        let mut residuals: BTreeMap<String, f64> = self
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Transformer)
            .map(|n| (n.id.clone(), 0.0))
            .collect();
        for flow in &self.flows {
            if let Some(r) = residuals.get_mut(&flow.key.to) {
                *r += flow.quantity;
            }
        }
        for flow in &self.flows {
            if let Some(r) = residuals.get_mut(&flow.key.from) {
                *r -= flow.quantity;
            }
        }
        residuals
    }

    /// Transformers whose residual exceeds `BALANCE_TOL_ABS + BALANCE_TOL_REL · Σ inbound`.
    pub fn unbalanced_nodes(&self) -> Vec<(String, f64)> {
        self.balance_residuals()
            .into_iter()
            .filter(|(node, residual)| !within_balance_tolerance(*residual, self.inflow(node)))
            .collect()
    }

    pub fn is_balanced(&self) -> bool {
        self.unbalanced_nodes().is_empty()
    }

    /// Every structural invariant violation. Empty iff the graph is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let mut violations = Vec::new();
        let mut node_ids = BTreeMap::new();
        for node in &self.nodes {
            if node_ids.insert(node.id.as_str(), node.kind).is_some() {
                violations.push(Violation::DuplicateNode { node: node.id.clone() });
            }
        }
        let product_ids: BTreeSet<&str> = self.products.iter().map(|p| p.id.as_str()).collect();
        let mut keys = BTreeSet::new();
        let mut ids = BTreeSet::new();
        for flow in &self.flows {
            if !(flow.quantity >= 0.0) {
                violations.push(Violation::NegativeQuantity {
                    flow: flow.id.clone(),
                    quantity: flow.quantity,
                });
            }
            if flow.key.from == flow.key.to {
                violations.push(Violation::SelfLoop { flow: flow.id.clone() });
            }
            for endpoint in [&flow.key.from, &flow.key.to] {
                if !node_ids.contains_key(endpoint.as_str()) {
                    violations.push(Violation::DanglingEndpoint {
                        flow: flow.id.clone(),
                        node: endpoint.clone(),
                    });
                }
            }
            if let Some(&kind) = node_ids.get(flow.key.to.as_str()) {
                if kind.is_origin() {
                    violations.push(Violation::InboundToOrigin {
                        node: flow.key.to.clone(),
                        kind,
                        flow: flow.id.clone(),
                    });
                }
            }
            if let Some(&kind) = node_ids.get(flow.key.from.as_str()) {
                if kind.is_terminal() {
                    violations.push(Violation::OutboundFromTerminal {
                        node: flow.key.from.clone(),
                        kind,
                        flow: flow.id.clone(),
                    });
                }
            }
            if !product_ids.is_empty() && !product_ids.contains(flow.key.product.as_str()) {
                violations.push(Violation::UnknownProduct {
                    flow: flow.id.clone(),
                    product: flow.key.product.clone(),
                });
            }
            if !keys.insert(&flow.key) {
                violations.push(Violation::DuplicateFlowKey { key: flow.key.clone() });
            }
            if !ids.insert(flow.id.as_str()) {
                violations.push(Violation::DuplicateFlowId { id: flow.id.clone() });
            }
        }
        violations
    }

    /// Equality of period, nodes, products and per-key quantities, ignoring flow ids.
    pub fn structurally_eq(&self, other: &FlowGraph) -> bool {
        let quantities = |g: &FlowGraph| -> Vec<(FlowKey, f64)> {
            g.flows.iter().map(|f| (f.key.clone(), f.quantity)).collect()
        };
        self.period == other.period
            && self.nodes == other.nodes
            && self.products == other.products
            && quantities(self) == quantities(other)
    }
}

pub fn within_balance_tolerance(residual: f64, inbound: f64) -> bool {
    residual.abs() <= BALANCE_TOL_ABS + BALANCE_TOL_REL * inbound.abs()
}
