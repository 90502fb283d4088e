//! Wood supply-chain material flow accounting.
//!
//! The crate turns regional wood-sector statistics into a mass-balanced flow
//! graph ([`reconcile`]), applies what-if rerouting scenarios ([`scenario`]),
//! follows the carbon those flows carry through harvested-wood-product pools
//! ([`carbon`]) and renders delta reports and Sankey diagrams ([`report`]).
//! All volumes are m³ of wood-fiber equivalent (WFE); carbon is in tonnes (tC).

pub mod carbon;
pub mod cli;
pub mod error;
pub mod flow_model;
pub mod io;
pub mod reconcile;
pub mod report;
pub mod scenario;
pub mod units;

pub use error::ParseError;
pub use flow_model::{
    Direction, Flow, FlowGraph, FlowKey, Node, NodeKind, Observation, ObservationTarget, Product, ProductCategory,
    Sigma, Violation,
};
pub use units::ConversionTable;
