//! Delta reports against observed statistics, and Sankey diagrams.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::flow_model::{FlowGraph, FlowKey, NodeKind, Observation, ObservationTarget};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("reference value must be > 0, got {0}")]
    ZeroReference(f64),
    #[error("graph has no flows to draw")]
    EmptyGraph,
    #[error("scale must be finite and > 0, got {0}")]
    InvalidScale(f64),
    #[error("graph is invalid: {0}")]
    InvalidGraph(String),
}

/// Percentage gap of `baseline` relative to the observed `reference`:
/// `100 · (reference − baseline) / reference`.
///
/// The denominator is the reference, not the baseline.
pub fn delta_percent(baseline: f64, reference: f64) -> Result<f64, ReportError> {
    if !(reference > 0.0) {
        return Err(ReportError::ZeroReference(reference));
    }
    Ok(100.0 * (reference - baseline) / reference)
}

/// A labelled quantity to report on.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub label: String,
    pub target: ObservationTarget,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineRow {
    pub label: String,
    pub target: ObservationTarget,
    /// m³ WFE.
    pub value: f64,
}

/// Evaluate each row's target on the baseline graph.
pub fn baseline_totals(graph: &FlowGraph, rows: &[ReportRow]) -> Vec<BaselineRow> {
    rows.iter()
        .map(|row| BaselineRow {
            label: row.label.clone(),
            target: row.target.clone(),
            value: graph.evaluate(&row.target),
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Availability {
    Available,
    /// No observation for this row.
    NotAvailable,
    /// An observation exists but is zero, so no percentage is defined.
    ZeroReference,
}

impl Availability {
    pub fn as_str(self) -> &'static str {
        match self {
            Availability::Available => "ok",
            Availability::NotAvailable => "N/A",
            Availability::ZeroReference => "zero_reference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub label: String,
    pub baseline: f64,
    pub reference: Option<f64>,
    pub delta_percent: Option<f64>,
    pub flag: Availability,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DeltaReport {
    pub rows: Vec<DeltaRow>,
}

impl DeltaReport {
    pub fn row(&self, label: &str) -> Option<&DeltaRow> {
        self.rows.iter().find(|r| r.label == label)
    }
}

/// One row per baseline row, matched to the first observation with the same
/// target. Unmatched rows are flagged N/A.
pub fn build_delta_report(baseline: &[BaselineRow], observed: &[Observation]) -> DeltaReport {
    let rows = baseline
        .iter()
        .map(|row| {
            let reference = observed.iter().find(|o| o.target == row.target).map(|o| o.value);
            let (delta, flag) = match reference {
                None => (None, Availability::NotAvailable),
                Some(r) => match delta_percent(row.value, r) {
                    Ok(d) => (Some(d), Availability::Available),
                    Err(_) => (None, Availability::ZeroReference),
                },
            };
            DeltaRow {
                label: row.label.clone(),
                baseline: row.value,
                reference,
                delta_percent: delta,
                flag,
            }
        })
        .collect();
    DeltaReport { rows }
}

/// Ribbon color role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ColorClass {
    Regional,
    Export,
    Highlighted,
}

impl ColorClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ColorClass::Regional => "regional",
            ColorClass::Export => "export",
            ColorClass::Highlighted => "highlighted",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SankeyOptions {
    /// Pixels per m³ WFE.
    pub scale: f64,
    pub node_width: f64,
    pub layer_gap: f64,
    pub node_gap: f64,
    pub margin: f64,
    pub regional_color: String,
    pub export_color: String,
    pub highlight_color: String,
    pub title: Option<String>,
}

impl Default for SankeyOptions {
    fn default() -> Self {
        SankeyOptions {
            scale: 5e-5,
            node_width: 14.0,
            layer_gap: 240.0,
            node_gap: 24.0,
            margin: 40.0,
            regional_color: "#9e9e9e".into(),
            export_color: "#1f77b4".into(),
            highlight_color: "#d62728".into(),
            title: None,
        }
    }
}

impl SankeyOptions {
    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    fn color(&self, class: ColorClass) -> &str {
        match class {
            ColorClass::Regional => &self.regional_color,
            ColorClass::Export => &self.export_color,
            ColorClass::Highlighted => &self.highlight_color,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeBox {
    pub id: String,
    pub label: String,
    pub kind: NodeKind,
    pub layer: usize,
    pub x: f64,
    pub y: f64,
    pub height: f64,
    /// Larger of inbound and outbound totals, m³ WFE.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ribbon {
    pub key: FlowKey,
    pub quantity: f64,
    pub class: ColorClass,
    pub width: f64,
    pub x0: f64,
    /// Top edge of the ribbon at its source.
    pub y0: f64,
    pub x1: f64,
    /// Top edge of the ribbon at its target.
    pub y1: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SankeyLayout {
    pub nodes: Vec<NodeBox>,
    pub ribbons: Vec<Ribbon>,
    pub width: f64,
    pub height: f64,
}

/// Longest-path layer of every node incident to a flow. Cycles are broken at
/// the node with the fewest unresolved predecessors (ties by id).
fn assign_layers(graph: &FlowGraph) -> BTreeMap<String, usize> {
    let mut successors: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    let mut predecessors: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for flow in graph.flows() {
        successors.entry(flow.from()).or_default().insert(flow.to());
        successors.entry(flow.to()).or_default();
        predecessors.entry(flow.to()).or_default().insert(flow.from());
        predecessors.entry(flow.from()).or_default();
    }
    let mut pending: BTreeMap<&str, usize> = predecessors.iter().map(|(n, p)| (*n, p.len())).collect();
    let mut layer: BTreeMap<String, usize> = BTreeMap::new();
    let mut ready: BTreeSet<&str> = pending.iter().filter(|(_, &d)| d == 0).map(|(n, _)| *n).collect();
    while !pending.is_empty() {
        let node = match ready.pop_first() {
            Some(n) => n,
            None => {
                let (&n, _) = pending
                    .iter()
                    .min_by(|a, b| a.1.cmp(b.1).then(a.0.cmp(b.0)))
                    .expect("pending is not empty");
                n
            }
        };
        pending.remove(node);
        let rank = *layer.entry(node.to_string()).or_insert(0);
        for &next in &successors[node] {
            if let Some(d) = pending.get_mut(next) {
                let entry = layer.entry(next.to_string()).or_insert(0);
                *entry = (*entry).max(rank + 1);
                *d -= 1;
                if *d == 0 {
                    ready.insert(next);
                }
            }
        }
    }
    layer
}

/// Place nodes in layers and ribbons between them.
pub fn layout_sankey(
    graph: &FlowGraph,
    highlights: &BTreeMap<FlowKey, ColorClass>,
    options: &SankeyOptions,
) -> Result<SankeyLayout, ReportError> {
    if !(options.scale.is_finite() && options.scale > 0.0) {
        return Err(ReportError::InvalidScale(options.scale));
    }
    if graph.flows().is_empty() {
        return Err(ReportError::EmptyGraph);
    }
    let violations = graph.validate();
    if !violations.is_empty() {
        let text: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        return Err(ReportError::InvalidGraph(text.join("; ")));
    }

    let layers = assign_layers(graph);
    let layer_count = layers.values().max().map_or(0, |m| m + 1);
    let mut columns: Vec<Vec<String>> = vec![Vec::new(); layer_count];
    for (id, &l) in &layers {
        columns[l].push(id.clone());
    }

    // Barycenter ordering: alternate downward and upward sweeps.
    let weight_between = |a: &str, b: &str| -> f64 {
        graph
            .flows()
            .iter()
            .filter(|f| (f.from() == a && f.to() == b) || (f.from() == b && f.to() == a))
            .map(|f| f.quantity.max(0.0) + 1e-12)
            .sum()
    };
    for sweep in 0..4 {
        let downward = sweep % 2 == 0;
        let order: Vec<usize> = if downward {
            (1..layer_count).collect()
        } else {
            (0..layer_count.saturating_sub(1)).rev().collect()
        };
        for l in order {
            let neighbour = if downward { l - 1 } else { l + 1 };
            let reference = columns[neighbour].clone();
            let current = columns[l].clone();
            let mut keyed: Vec<(f64, String)> = current
                .iter()
                .enumerate()
                .map(|(i, id)| {
                    let (mut total, mut weighted) = (0.0, 0.0);
                    for (j, other) in reference.iter().enumerate() {
                        let w = weight_between(id, other);
                        total += w;
                        weighted += w * j as f64;
                    }
                    let bary = if total > 0.0 { weighted / total } else { i as f64 };
                    (bary, id.clone())
                })
                .collect();
            keyed.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            columns[l] = keyed.into_iter().map(|(_, id)| id).collect();
        }
    }

    let mut boxes: BTreeMap<String, NodeBox> = BTreeMap::new();
    let mut height: f64 = 0.0;
    for (l, column) in columns.iter().enumerate() {
        let x = options.margin + l as f64 * (options.node_width + options.layer_gap);
        let mut y = options.margin;
        for id in column {
            let node = graph.node(id).expect("validated endpoint");
            let value = graph.inflow(id).max(graph.outflow(id));
            let h = value * options.scale;
            boxes.insert(
                id.clone(),
                NodeBox {
                    id: id.clone(),
                    label: node.label.clone(),
                    kind: node.kind,
                    layer: l,
                    x,
                    y,
                    height: h,
                    value,
                },
            );
            y += h + options.node_gap;
        }
        height = height.max(y - options.node_gap + options.margin);
    }
    let width = 2.0 * options.margin + layer_count as f64 * options.node_width
        + layer_count.saturating_sub(1) as f64 * options.layer_gap;

    // Stack ribbons on each node in the vertical order of the opposite end.
    let mut outgoing: Vec<&crate::flow_model::Flow> = graph.flows().iter().collect();
    outgoing.sort_by(|a, b| {
        a.from()
            .cmp(b.from())
            .then(boxes[a.to()].y.total_cmp(&boxes[b.to()].y))
            .then(a.key.cmp(&b.key))
    });
    let mut source_offset: BTreeMap<FlowKey, f64> = BTreeMap::new();
    let mut cursor: BTreeMap<&str, f64> = BTreeMap::new();
    for f in &outgoing {
        let c = cursor.entry(f.from()).or_insert(0.0);
        source_offset.insert(f.key.clone(), *c);
        *c += f.quantity * options.scale;
    }
    let mut incoming: Vec<&crate::flow_model::Flow> = graph.flows().iter().collect();
    incoming.sort_by(|a, b| {
        a.to()
            .cmp(b.to())
            .then(boxes[a.from()].y.total_cmp(&boxes[b.from()].y))
            .then(a.key.cmp(&b.key))
    });
    let mut target_offset: BTreeMap<FlowKey, f64> = BTreeMap::new();
    let mut cursor: BTreeMap<&str, f64> = BTreeMap::new();
    for f in &incoming {
        let c = cursor.entry(f.to()).or_insert(0.0);
        target_offset.insert(f.key.clone(), *c);
        *c += f.quantity * options.scale;
    }

    let ribbons = graph
        .flows()
        .iter()
        .map(|f| {
            let (s, t) = (&boxes[f.from()], &boxes[f.to()]);
            let class = highlights.get(&f.key).copied().unwrap_or(if t.kind == NodeKind::Export {
                ColorClass::Export
            } else {
                ColorClass::Regional
            });
            Ribbon {
                key: f.key.clone(),
                quantity: f.quantity,
                class,
                width: f.quantity * options.scale,
                x0: s.x + options.node_width,
                y0: s.y + source_offset[&f.key],
                x1: t.x,
                y1: t.y + target_offset[&f.key],
            }
        })
        .collect();

    let mut nodes: Vec<NodeBox> = boxes.into_values().collect();
    nodes.sort_by(|a, b| a.layer.cmp(&b.layer).then(a.y.total_cmp(&b.y)));
    Ok(SankeyLayout {
        nodes,
        ribbons,
        width,
        height,
    })
}

/// Fixed three-decimal formatting without negative zero.
fn px(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Render a layout as a standalone SVG document.
pub fn render_svg(layout: &SankeyLayout, options: &SankeyOptions) -> String {
    let mut svg = String::new();
    let label_room = 180.0;
    let total_width = layout.width + label_room;
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = px(total_width),
        h = px(layout.height)
    );
    if let Some(title) = &options.title {
        let _ = writeln!(svg, "  <title>{}</title>", escape(title));
    }
    let _ = writeln!(svg, r#"  <g class="ribbons" fill="none" stroke-opacity="0.55">"#);
    for r in &layout.ribbons {
        let (ya, yb) = (r.y0 + r.width / 2.0, r.y1 + r.width / 2.0);
        let xm = (r.x0 + r.x1) / 2.0;
        let _ = writeln!(
            svg,
            r#"    <path class="{class}" d="M{x0},{ya} C{xm},{ya} {xm},{yb} {x1},{yb}" stroke="{color}" stroke-width="{w}"><title>{title}</title></path>"#,
            class = r.class.as_str(),
            x0 = px(r.x0),
            ya = px(ya),
            xm = px(xm),
            yb = px(yb),
            x1 = px(r.x1),
            color = escape(options.color(r.class)),
            w = px(r.width),
            title = escape(&format!("{} → {} ({}): {:.0} m³", r.key.from, r.key.to, r.key.product, r.quantity)),
        );
    }
    let _ = writeln!(svg, "  </g>");
    let _ = writeln!(svg, r##"  <g class="nodes" fill="#37474f">"##);
    for n in &layout.nodes {
        let _ = writeln!(
            svg,
            r#"    <rect id="node-{id}" x="{x}" y="{y}" width="{w}" height="{h}"><title>{label}</title></rect>"#,
            id = escape(&n.id),
            x = px(n.x),
            y = px(n.y),
            w = px(options.node_width),
            h = px(n.height),
            label = escape(&n.label),
        );
        let _ = writeln!(
            svg,
            r#"    <text x="{x}" y="{y}" font-family="sans-serif" font-size="12" dominant-baseline="middle">{label} ({value:.0} m³)</text>"#,
            x = px(n.x + options.node_width + 4.0),
            y = px(n.y + n.height / 2.0),
            label = escape(&n.label),
            value = n.value,
        );
    }
    let _ = writeln!(svg, "  </g>");
    svg.push_str("</svg>\n");
    svg
}

#[derive(Serialize)]
struct InterchangeNode<'a> {
    id: &'a str,
    name: &'a str,
    kind: &'a str,
    layer: usize,
}

#[derive(Serialize)]
struct InterchangeLink<'a> {
    source: usize,
    target: usize,
    value: f64,
    product: &'a str,
    class: ColorClass,
}

#[derive(Serialize)]
struct Interchange<'a> {
    period: &'a str,
    units: &'a str,
    nodes: Vec<InterchangeNode<'a>>,
    links: Vec<InterchangeLink<'a>>,
}

/// `nodes[]` / `links[]` JSON with links referring to node indices.
pub fn render_interchange(graph: &FlowGraph, layout: &SankeyLayout) -> String {
    let index: BTreeMap<&str, usize> = layout.nodes.iter().enumerate().map(|(i, n)| (n.id.as_str(), i)).collect();
    let doc = Interchange {
        period: graph.period(),
        units: "m3_wfe",
        nodes: layout
            .nodes
            .iter()
            .map(|n| InterchangeNode {
                id: &n.id,
                name: &n.label,
                kind: n.kind.as_str(),
                layer: n.layer,
            })
            .collect(),
        links: layout
            .ribbons
            .iter()
            .map(|r| InterchangeLink {
                source: index[r.key.from.as_str()],
                target: index[r.key.to.as_str()],
                value: r.quantity,
                product: &r.key.product,
                class: r.class,
            })
            .collect(),
    };
    let mut text = serde_json::to_string_pretty(&doc).expect("interchange serializes");
    text.push('\n');
    text
}

#[derive(Debug, Clone, PartialEq)]
pub struct SankeyDocuments {
    pub svg: String,
    pub interchange: String,
    pub layout: SankeyLayout,
}

/// Lay out and render both the SVG and the interchange document.
pub fn emit_sankey(
    graph: &FlowGraph,
    highlights: &BTreeMap<FlowKey, ColorClass>,
    options: &SankeyOptions,
) -> Result<SankeyDocuments, ReportError> {
    let layout = layout_sankey(graph, highlights, options)?;
    Ok(SankeyDocuments {
        svg: render_svg(&layout, options),
        interchange: render_interchange(graph, &layout),
        layout,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow_model::{Flow, Node};

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 0.005
    }

    #[test]
    fn delta_uses_reference_denominator() {
        assert!(close(delta_percent(5_073.0, 5_909.0).unwrap(), 14.15));
        assert!(close(delta_percent(595.0, 424.0).unwrap(), -40.33));
        assert!(close(delta_percent(401.0, 397.0).unwrap(), -1.01));
        assert_eq!(delta_percent(7.0, 7.0).unwrap(), 0.0);
        assert_eq!(delta_percent(1.0, 0.0), Err(ReportError::ZeroReference(0.0)));
    }

    fn graph() -> FlowGraph {
        FlowGraph::new(
            "p",
            vec![
                Node::new("a", "Forest", NodeKind::Source),
                Node::new("b", "Mill & Co <1>", NodeKind::Transformer),
                Node::new("c", "Use", NodeKind::Sink),
                Node::new("x", "Exports", NodeKind::Export),
            ],
            vec![],
            vec![
                Flow::new("1", FlowKey::new("a", "b", "w"), 300.0),
                Flow::new("2", FlowKey::new("b", "c", "w"), 100.0),
                Flow::new("3", FlowKey::new("b", "x", "w"), 200.0),
            ],
        )
    }

    #[test]
    fn report_rows_flag_missing_data() {
        let rows = vec![
            ReportRow {
                label: "in b".into(),
                target: ObservationTarget::node_in("b", &[]),
            },
            ReportRow {
                label: "to c".into(),
                target: ObservationTarget::Flow(FlowKey::new("b", "c", "w")),
            },
        ];
        let base = baseline_totals(&graph(), &rows);
        assert_eq!(base[0].value, 300.0);
        let empty = build_delta_report(&base, &[]);
        assert!(empty.rows.iter().all(|r| r.flag == Availability::NotAvailable));
        let obs = vec![Observation::new(rows[1].target.clone(), 125.0, None, "survey")];
        let report = build_delta_report(&base, &obs);
        assert_eq!(report.rows[1].delta_percent, Some(20.0));
        assert_eq!(report.rows[0].flag, Availability::NotAvailable);
        let zero = build_delta_report(&base[1..], &[Observation::new(rows[1].target.clone(), 0.0, None, "s")]);
        assert_eq!(zero.rows[0].flag, Availability::ZeroReference);
    }

    #[test]
    fn layers_follow_longest_path() {
        let layers = assign_layers(&graph());
        assert_eq!(layers["a"], 0);
        assert_eq!(layers["b"], 1);
        assert_eq!(layers["c"], 2);
        assert_eq!(layers["x"], 2);
    }

    #[test]
    fn ribbon_width_is_proportional() {
        let layout = layout_sankey(&graph(), &BTreeMap::new(), &SankeyOptions::default().with_scale(0.1)).unwrap();
        let w = |to: &str| layout.ribbons.iter().find(|r| r.key.to == to).unwrap().width;
        assert_eq!(w("x"), 2.0 * w("c"));
        let export = layout.ribbons.iter().find(|r| r.key.to == "x").unwrap();
        assert_eq!(export.class, ColorClass::Export);
    }

    #[test]
    fn incident_ribbons_tile_node_height() {
        let layout = layout_sankey(&graph(), &BTreeMap::new(), &SankeyOptions::default().with_scale(0.1)).unwrap();
        let b = layout.nodes.iter().find(|n| n.id == "b").unwrap();
        let mut out: Vec<&Ribbon> = layout.ribbons.iter().filter(|r| r.key.from == "b").collect();
        out.sort_by(|p, q| p.y0.total_cmp(&q.y0));
        assert_eq!(out[0].y0, b.y);
        assert!((out[1].y0 + out[1].width - (b.y + b.height)).abs() < 1e-9);
    }

    #[test]
    fn highlights_override_class() {
        let hl = BTreeMap::from([(FlowKey::new("b", "x", "w"), ColorClass::Highlighted)]);
        let docs = emit_sankey(&graph(), &hl, &SankeyOptions::default()).unwrap();
        assert!(docs.svg.contains(r#"class="highlighted""#));
        assert!(docs.svg.contains("#d62728"));
    }

    #[test]
    fn svg_escapes_labels_and_parses() {
        let docs = emit_sankey(&graph(), &BTreeMap::new(), &SankeyOptions::default()).unwrap();
        assert!(docs.svg.contains("Mill &amp; Co &lt;1&gt;"));
        roxmltree::Document::parse(&docs.svg).unwrap();
        let json: serde_json::Value = serde_json::from_str(&docs.interchange).unwrap();
        assert_eq!(json["links"].as_array().unwrap().len(), 3);
        assert_eq!(json["nodes"].as_array().unwrap().len(), 4);
    }

    #[test]
    fn empty_graph_and_bad_scale() {
        assert_eq!(
            emit_sankey(&FlowGraph::default(), &BTreeMap::new(), &SankeyOptions::default()),
            Err(ReportError::EmptyGraph)
        );
        assert_eq!(
            emit_sankey(&graph(), &BTreeMap::new(), &SankeyOptions::default().with_scale(0.0)),
            Err(ReportError::InvalidScale(0.0))
        );
    }

    #[test]
    fn cycles_still_get_layers() {
        let g = FlowGraph::new(
            "p",
            vec![
                Node::new("s", "S", NodeKind::Source),
                Node::new("p", "P", NodeKind::Transformer),
                Node::new("q", "Q", NodeKind::Transformer),
            ],
            vec![],
            vec![
                Flow::new("1", FlowKey::new("s", "p", "w"), 1.0),
                Flow::new("2", FlowKey::new("p", "q", "w"), 1.0),
                Flow::new("3", FlowKey::new("q", "p", "w"), 1.0),
            ],
        );
        let layers = assign_layers(&g);
        assert_eq!(layers.len(), 3);
        assert!(layout_sankey(&g, &BTreeMap::new(), &SankeyOptions::default()).is_ok());
    }
}
