//! Declarative what-if edits applied to a balanced baseline graph.
//!
//! Edits run strictly in order against the evolving graph, so a deposit cap
//! checks the actor inserted before it. The final graph must balance.

use std::collections::{BTreeMap, BTreeSet};

use serde::Deserialize;
use thiserror::Error;

use crate::carbon::{DestinationClass, DestinationClasses};
use crate::error::ParseError;
use crate::flow_model::{default_flow_id, Flow, FlowGraph, FlowKey, Node, NodeKind, BALANCE_TOL_ABS, BALANCE_TOL_REL};
use crate::units::{ConversionTable, UnitsError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("edit {edit:?}: reroute of {requested} m³ exceeds the {available} m³ flowing on {key}")]
    RerouteExceedsFlow {
        edit: String,
        key: FlowKey,
        requested: f64,
        available: f64,
    },
    #[error("edit {edit:?}: unknown node {node:?}")]
    UnknownEndpoint { edit: String, node: String },
    #[error("edit {edit:?}: no flow {key}")]
    UnknownFlow { edit: String, key: FlowKey },
    #[error("no flow of any product connects {from:?} to {to:?}")]
    NoSuchFlow { from: String, to: String },
    #[error("edit {edit:?}: {volume} m³ of {product} into {node} implies {mass} t, above the {cap} t deposit")]
    CapExceeded {
        edit: String,
        node: String,
        product: String,
        volume: f64,
        mass: f64,
        cap: f64,
    },
    #[error("edit {edit:?}: {message}")]
    InvalidEdit { edit: String, message: String },
    #[error("duplicate edit name {0:?}")]
    DuplicateEditName(String),
    #[error("baseline is not balanced at {0:?}")]
    BaselineUnbalanced(Vec<String>),
    #[error("scenario leaves nodes unbalanced: {}", .0.iter().map(|(n, r)| format!("{n} ({r:+})")).collect::<Vec<_>>().join(", "))]
    Unbalanced(Vec<(String, f64)>),
    #[error("changed flow ends at unclassified node {0:?}")]
    UnclassifiedNode(String),
    #[error(transparent)]
    Units(#[from] UnitsError),
}

/// How much of a flow a reroute moves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Amount {
    /// m³ WFE.
    Volume(f64),
    /// Share of the current flow, in (0, 1].
    Fraction(f64),
}

/// One inbound flow of an inserted actor.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Inbound {
    pub from_node: String,
    pub product: String,
    /// m³ WFE.
    pub amount: f64,
    /// Existing destination the volume is taken from. Without it the supplier's
    /// output grows by `amount`.
    #[serde(default)]
    pub divert_from: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EditAction {
    Reroute {
        product: String,
        from_node: String,
        old_to: String,
        new_to: String,
        amount: Amount,
    },
    InsertActor {
        node: Node,
        /// Destination class of the new node for carbon accounting.
        class: Option<DestinationClass>,
        inbound: Vec<Inbound>,
    },
    /// Fails unless `inbound volume × yield_coefficient ≤ cap_mass`.
    CapByDeposit {
        node: String,
        product: String,
        /// t.
        cap_mass: f64,
        /// t per m³ WFE.
        yield_coefficient: f64,
    },
    Scale { flow: FlowKey, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edit {
    pub name: String,
    pub action: EditAction,
}

impl Edit {
    pub fn new(name: impl Into<String>, action: EditAction) -> Self {
        Edit {
            name: name.into(),
            action,
        }
    }

    pub fn reroute(
        name: impl Into<String>,
        product: &str,
        from_node: &str,
        old_to: &str,
        new_to: &str,
        amount: Amount,
    ) -> Self {
        Edit::new(
            name,
            EditAction::Reroute {
                product: product.into(),
                from_node: from_node.into(),
                old_to: old_to.into(),
                new_to: new_to.into(),
                amount,
            },
        )
    }

    pub fn scale(name: impl Into<String>, flow: FlowKey, factor: f64) -> Self {
        Edit::new(name, EditAction::Scale { flow, factor })
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub name: String,
    pub description: String,
    pub edits: Vec<Edit>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, edits: Vec<Edit>) -> Self {
        Scenario {
            name: name.into(),
            description: String::new(),
            edits,
        }
    }

    /// Edits of `self` followed by those of `other`.
    pub fn then(&self, other: &Scenario) -> Scenario {
        Scenario {
            name: format!("{}+{}", self.name, other.name),
            description: String::new(),
            edits: self.edits.iter().chain(&other.edits).cloned().collect(),
        }
    }

    /// `classes` plus the classes declared by inserted actors.
    pub fn declared_classes(&self, classes: &DestinationClasses) -> DestinationClasses {
        let mut out = classes.clone();
        for edit in &self.edits {
            if let EditAction::InsertActor {
                node, class: Some(class), ..
            } = &edit.action
            {
                out.insert(node.id.clone(), *class);
            }
        }
        out
    }

    /// Parse the TOML scenario format: top-level `name`, optional
    /// `description`, and one `[[edit]]` table per edit with a `kind` field.
    pub fn from_toml(text: &str) -> Result<Scenario, ParseError> {
        let raw: RawScenario =
            toml::from_str(text).map_err(|e| ParseError::invalid_value("scenario", e.to_string()))?;
        let edits = raw
            .edit
            .into_iter()
            .map(RawEdit::into_edit)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Scenario {
            name: raw.name,
            description: raw.description,
            edits,
        })
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    edit: Vec<RawEdit>,
}

#[derive(Deserialize)]
struct RawNode {
    id: String,
    label: String,
    kind: NodeKind,
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawEdit {
    Reroute {
        name: String,
        product: String,
        from_node: String,
        old_to: String,
        new_to: String,
        amount: Option<f64>,
        fraction: Option<f64>,
    },
    InsertActor {
        name: String,
        node: RawNode,
        class: Option<DestinationClass>,
        #[serde(default)]
        inbound: Vec<Inbound>,
    },
    CapByDeposit {
        name: String,
        node: String,
        product: String,
        cap_mass: f64,
        yield_coefficient: f64,
    },
    Scale {
        name: String,
        flow: String,
        factor: f64,
    },
}

impl RawEdit {
    fn into_edit(self) -> Result<Edit, ParseError> {
        Ok(match self {
            RawEdit::Reroute {
                name,
                product,
                from_node,
                old_to,
                new_to,
                amount,
                fraction,
            } => {
                let amount = match (amount, fraction) {
                    (Some(v), None) => Amount::Volume(v),
                    (None, Some(f)) => Amount::Fraction(f),
                    _ => {
                        return Err(ParseError::invalid_value(
                            "reroute (exactly one of amount, fraction)",
                            name,
                        ))
                    }
                };
                Edit::new(
                    name,
                    EditAction::Reroute {
                        product,
                        from_node,
                        old_to,
                        new_to,
                        amount,
                    },
                )
            }
            RawEdit::InsertActor {
                name,
                node,
                class,
                inbound,
            } => Edit::new(
                name,
                EditAction::InsertActor {
                    node: Node::new(node.id, node.label, node.kind),
                    class,
                    inbound,
                },
            ),
            RawEdit::CapByDeposit {
                name,
                node,
                product,
                cap_mass,
                yield_coefficient,
            } => Edit::new(
                name,
                EditAction::CapByDeposit {
                    node,
                    product,
                    cap_mass,
                    yield_coefficient,
                },
            ),
            RawEdit::Scale { name, flow, factor } => Edit::new(
                name,
                EditAction::Scale {
                    flow: flow.parse()?,
                    factor,
                },
            ),
        })
    }
}

/// Carbon moved between destination classes, tC/yr.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CarbonDelta {
    pub burned: f64,
    pub stored_in_products: f64,
    pub exported: f64,
}

/// Outcome of a deposit cap check.
#[derive(Debug, Clone, PartialEq)]
pub struct DepositCheck {
    pub edit: String,
    pub node: String,
    pub product: String,
    pub volume: f64,
    pub mass: f64,
    pub cap: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioDiff {
    /// scenario − baseline for every flow whose quantity changed, m³ WFE.
    pub flow_deltas: BTreeMap<FlowKey, f64>,
    /// Change in throughput (inbound total, or outbound for sources and
    /// imports) for every node whose throughput changed.
    pub node_deltas: BTreeMap<String, f64>,
    pub carbon_delta: CarbonDelta,
    /// Volume moved by reroutes and diverted actor inbounds, m³ WFE.
    pub rerouted_volume: f64,
    pub deposit_checks: Vec<DepositCheck>,
}

impl ScenarioDiff {
    /// Sum of two consecutive diffs.
    pub fn combine(&self, next: &ScenarioDiff) -> ScenarioDiff {
        let mut out = self.clone();
        for (k, v) in &next.flow_deltas {
            *out.flow_deltas.entry(k.clone()).or_default() += v;
        }
        for (k, v) in &next.node_deltas {
            *out.node_deltas.entry(k.clone()).or_default() += v;
        }
        out.carbon_delta.burned += next.carbon_delta.burned;
        out.carbon_delta.stored_in_products += next.carbon_delta.stored_in_products;
        out.carbon_delta.exported += next.carbon_delta.exported;
        out.rerouted_volume += next.rerouted_volume;
        out.deposit_checks.extend(next.deposit_checks.iter().cloned());
        out
    }

    pub fn flow_delta(&self, key: &FlowKey) -> f64 {
        self.flow_deltas.get(key).copied().unwrap_or(0.0)
    }
}

/// Mutable working copy of the graph while edits run.
struct Working {
    base: FlowGraph,
    nodes: Vec<Node>,
    flows: BTreeMap<FlowKey, Flow>,
}

impl Working {
    fn new(graph: &FlowGraph) -> Self {
        Working {
            base: graph.clone(),
            nodes: graph.nodes().to_vec(),
            flows: graph.flows().iter().map(|f| (f.key.clone(), f.clone())).collect(),
        }
    }

    fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    fn require_node(&self, edit: &str, id: &str) -> Result<&Node, ScenarioError> {
        self.node(id).ok_or_else(|| ScenarioError::UnknownEndpoint {
            edit: edit.to_string(),
            node: id.to_string(),
        })
    }

    fn quantity(&self, key: &FlowKey) -> Option<f64> {
        self.flows.get(key).map(|f| f.quantity)
    }

    /// Remove `amount` from an existing flow, dropping it once empty.
    fn take(&mut self, edit: &str, key: &FlowKey, amount: f64) -> Result<f64, ScenarioError> {
        let available = self.quantity(key).ok_or_else(|| ScenarioError::UnknownFlow {
            edit: edit.to_string(),
            key: key.clone(),
        })?;
        if amount > available + BALANCE_TOL_ABS + BALANCE_TOL_REL * available {
            return Err(ScenarioError::RerouteExceedsFlow {
                edit: edit.to_string(),
                key: key.clone(),
                requested: amount,
                available,
            });
        }
        let amount = amount.min(available);
        self.set(key, available - amount);
        Ok(amount)
    }

    fn add(&mut self, key: FlowKey, amount: f64) {
        let current = self.quantity(&key).unwrap_or(0.0);
        self.set(&key, current + amount);
    }

    fn set(&mut self, key: &FlowKey, quantity: f64) {
        if quantity == 0.0 {
            self.flows.remove(key);
        } else if let Some(flow) = self.flows.get_mut(key) {
            flow.quantity = quantity;
        } else {
            self.flows
                .insert(key.clone(), Flow::new(default_flow_id(key), key.clone(), quantity));
        }
    }

    fn finish(self) -> FlowGraph {
        FlowGraph::new(
            self.base.period(),
            self.nodes,
            self.base.products().to_vec(),
            self.flows.into_values().collect(),
        )
    }
}

fn invalid(edit: &str, message: impl Into<String>) -> ScenarioError {
    ScenarioError::InvalidEdit {
        edit: edit.to_string(),
        message: message.into(),
    }
}

fn check_receiver(edit: &str, node: &Node) -> Result<(), ScenarioError> {
    if node.kind.is_origin() {
        return Err(invalid(edit, format!("{} node {} cannot receive flows", node.kind, node.id)));
    }
    Ok(())
}

/// Apply `scenario` to a balanced baseline.
///
/// `classes` decides whether changed volume reaching a sink or export node
/// counts as burned, stored in products or exported; inserted actors may
/// declare their own class.
pub fn apply(
    baseline: &FlowGraph,
    scenario: &Scenario,
    table: &ConversionTable,
    classes: &DestinationClasses,
) -> Result<(FlowGraph, ScenarioDiff), ScenarioError> {
    let unbalanced: Vec<String> = baseline.unbalanced_nodes().into_iter().map(|(n, _)| n).collect();
    if !unbalanced.is_empty() {
        return Err(ScenarioError::BaselineUnbalanced(unbalanced));
    }
    let mut names = BTreeSet::new();
    for edit in &scenario.edits {
        if !names.insert(edit.name.as_str()) {
            return Err(ScenarioError::DuplicateEditName(edit.name.clone()));
        }
    }

    let mut classes = classes.clone();
    let mut work = Working::new(baseline);
    let mut diff = ScenarioDiff::default();

    for edit in &scenario.edits {
        let name = edit.name.as_str();
        match &edit.action {
            EditAction::Reroute {
                product,
                from_node,
                old_to,
                new_to,
                amount,
            } => {
                work.require_node(name, from_node)?;
                work.require_node(name, old_to)?;
                check_receiver(name, work.require_node(name, new_to)?)?;
                if new_to == from_node {
                    return Err(invalid(name, "cannot reroute a flow onto its own origin"));
                }
                let old_key = FlowKey::new(from_node, old_to, product);
                let available = work.quantity(&old_key).ok_or_else(|| ScenarioError::UnknownFlow {
                    edit: name.to_string(),
                    key: old_key.clone(),
                })?;
                let volume = match *amount {
                    Amount::Volume(v) if v.is_finite() && v >= 0.0 => v,
                    Amount::Fraction(f) if f > 0.0 && f <= 1.0 => {
                        if f == 1.0 {
                            available
                        } else {
                            available * f
                        }
                    }
                    Amount::Volume(v) => return Err(invalid(name, format!("amount {v} must be ≥ 0"))),
                    Amount::Fraction(f) => return Err(invalid(name, format!("fraction {f} must lie in (0, 1]"))),
                };
                let moved = work.take(name, &old_key, volume)?;
                work.add(FlowKey::new(from_node, new_to, product), moved);
                diff.rerouted_volume += moved;
            }
            EditAction::InsertActor { node, class, inbound } => {
                if work.node(&node.id).is_some() {
                    return Err(invalid(name, format!("node {} already exists", node.id)));
                }
                if !inbound.is_empty() {
                    check_receiver(name, node)?;
                }
                work.nodes.push(node.clone());
                if let Some(class) = class {
                    classes.insert(node.id.clone(), *class);
                }
                for item in inbound {
                    work.require_node(name, &item.from_node)?;
                    if !(item.amount.is_finite() && item.amount >= 0.0) {
                        return Err(invalid(name, format!("inbound amount {} must be ≥ 0", item.amount)));
                    }
                    let moved = match &item.divert_from {
                        Some(old_to) => {
                            work.require_node(name, old_to)?;
                            let moved = work.take(name, &FlowKey::new(&item.from_node, old_to, &item.product), item.amount)?;
                            diff.rerouted_volume += moved;
                            moved
                        }
                        None => item.amount,
                    };
                    work.add(FlowKey::new(&item.from_node, &node.id, &item.product), moved);
                }
            }
            EditAction::CapByDeposit {
                node,
                product,
                cap_mass,
                yield_coefficient,
            } => {
                work.require_node(name, node)?;
                if !(cap_mass.is_finite() && *cap_mass >= 0.0) {
                    return Err(invalid(name, format!("cap_mass {cap_mass} must be ≥ 0")));
                }
                if !(yield_coefficient.is_finite() && *yield_coefficient > 0.0) {
                    return Err(invalid(name, format!("yield_coefficient {yield_coefficient} must be > 0")));
                }
                let volume: f64 = work
                    .flows
                    .values()
                    .filter(|f| f.key.to == *node && f.key.product == *product)
                    .map(|f| f.quantity)
                    .sum();
                let mass = volume * yield_coefficient;
                if mass > cap_mass * (1.0 + BALANCE_TOL_REL) + BALANCE_TOL_ABS {
                    return Err(ScenarioError::CapExceeded {
                        edit: name.to_string(),
                        node: node.clone(),
                        product: product.clone(),
                        volume,
                        mass,
                        cap: *cap_mass,
                    });
                }
                diff.deposit_checks.push(DepositCheck {
                    edit: name.to_string(),
                    node: node.clone(),
                    product: product.clone(),
                    volume,
                    mass,
                    cap: *cap_mass,
                });
            }
            EditAction::Scale { flow, factor } => {
                if !(factor.is_finite() && *factor >= 0.0) {
                    return Err(invalid(name, format!("factor {factor} must be ≥ 0")));
                }
                let q = work.quantity(flow).ok_or_else(|| ScenarioError::UnknownFlow {
                    edit: name.to_string(),
                    key: flow.clone(),
                })?;
                work.set(flow, q * factor);
            }
        }
    }

    let graph = work.finish();
    let unbalanced = graph.unbalanced_nodes();
    if !unbalanced.is_empty() {
        return Err(ScenarioError::Unbalanced(unbalanced));
    }

    let mut keys: BTreeSet<&FlowKey> = baseline.flows().iter().map(|f| &f.key).collect();
    keys.extend(graph.flows().iter().map(|f| &f.key));
    for key in keys {
        let delta = graph.quantity(key) - baseline.quantity(key);
        if delta == 0.0 {
            continue;
        }
        diff.flow_deltas.insert(key.clone(), delta);
        let node = graph
            .node(&key.to)
            .ok_or_else(|| ScenarioError::UnclassifiedNode(key.to.clone()))?;
        // Carbon is counted where it leaves the chain, never inside transformers.
        if !node.kind.is_terminal() {
            continue;
        }
        let class = classes
            .classify(node)
            .ok_or_else(|| ScenarioError::UnclassifiedNode(key.to.clone()))?;
        let carbon = table.to_carbon(delta.abs(), &key.product)?.copysign(delta);
        match class {
            DestinationClass::Energy => diff.carbon_delta.burned += carbon,
            DestinationClass::Product => diff.carbon_delta.stored_in_products += carbon,
            DestinationClass::Export => diff.carbon_delta.exported += carbon,
        }
    }
    for node in graph.nodes() {
        let throughput = |g: &FlowGraph| {
            if node.kind.is_origin() {
                g.outflow(&node.id)
            } else {
                g.inflow(&node.id)
            }
        };
        let delta = throughput(&graph) - throughput(baseline);
        if delta != 0.0 {
            diff.node_deltas.insert(node.id.clone(), delta);
        }
    }
    Ok((graph, diff))
}

/// Volume currently on `from_node → old_to` for `product`.
///
/// Zero when the two nodes are connected only by other products, an error
/// when either node is unknown or no flow joins them at all.
pub fn max_reroutable(graph: &FlowGraph, product: &str, from_node: &str, old_to: &str) -> Result<f64, ScenarioError> {
    for node in [from_node, old_to] {
        if graph.node(node).is_none() {
            return Err(ScenarioError::UnknownEndpoint {
                edit: String::new(),
                node: node.to_string(),
            });
        }
    }
    let mut connected = false;
    for flow in graph.flows() {
        if flow.key.from == from_node && flow.key.to == old_to {
            connected = true;
            if flow.key.product == product {
                return Ok(flow.quantity);
            }
        }
    }
    if connected {
        Ok(0.0)
    } else {
        Err(ScenarioError::NoSuchFlow {
            from: from_node.to_string(),
            to: old_to.to_string(),
        })
    }
}
