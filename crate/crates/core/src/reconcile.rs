//! Mass-balance data reconciliation.
//!
//! Observed flows and node totals are adjusted by weighted least squares so
//! that every transformer balances and no flow is negative:
//!
//! ```text
//!     minimize    Σ_k ((a_k · x − v_k) / σ_k)²
//!     subject to  inbound(n) = outbound(n)   for every transformer n
//!                 x ≥ 0
//! ```
//!
//! `a_k` selects the flows an observation covers. Observations marked exact
//! become equality constraints. Unknowns are the template's flows in key order,
//! so the result is bit-identical for identical inputs.

mod qp;

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::flow_model::{
    within_balance_tolerance, FlowGraph, FlowKey, NodeKind, Observation, ObservationTarget, Sigma, Violation,
    BALANCE_TOL_ABS,
};

/// Relative standard deviation for observations that carry none.
pub const DEFAULT_SIGMA_REL: f64 = 0.10;
/// Standard deviation of the prior toward zero on flows no observation covers, m³ WFE.
pub const UNOBSERVED_PRIOR_SIGMA: f64 = 1e6;
/// Standard deviation of the regularizer on flows covered only through node totals, m³ WFE.
pub const NODE_TOTAL_REGULARIZER_SIGMA: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReconcileError {
    #[error("no observations to reconcile")]
    NoObservations,
    #[error("template graph is invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidTemplate(Vec<Violation>),
    #[error("observation target {0} matches no flow in the template")]
    UnresolvedTarget(ObservationTarget),
    #[error("{0}")]
    InvalidObservation(String),
    #[error("invalid option {name}: {value}")]
    InvalidOption { name: &'static str, value: f64 },
    #[error("balance and nonnegativity constraints admit no solution matching the exact observations (residual {residual:.6} m³)")]
    Infeasible { residual: f64 },
    #[error("active-set solver did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("reconciliation system is singular")]
    Singular,
}

impl From<qp::QpError> for ReconcileError {
    fn from(e: qp::QpError) -> Self {
        match e {
            qp::QpError::Singular => ReconcileError::Singular,
            qp::QpError::NoConvergence { iterations } => ReconcileError::NoConvergence(iterations),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileProblem {
    /// Structure only; quantities are ignored.
    pub template: FlowGraph,
    pub observations: Vec<Observation>,
    /// Relative σ used when an observation has none.
    pub default_sigma_rel: f64,
    /// Floor on any derived σ, m³ WFE.
    pub sigma_floor: f64,
}

impl ReconcileProblem {
    pub fn new(template: FlowGraph, observations: Vec<Observation>) -> Self {
        ReconcileProblem {
            template,
            observations,
            default_sigma_rel: DEFAULT_SIGMA_REL,
            sigma_floor: BALANCE_TOL_ABS,
        }
    }

    pub fn with_default_sigma_rel(mut self, rel: f64) -> Self {
        self.default_sigma_rel = rel;
        self
    }

    /// σ actually used for an observation; `None` for exact ones.
    pub fn effective_sigma(&self, obs: &Observation) -> Option<f64> {
        match obs.sigma {
            Some(Sigma::Exact) => None,
            Some(Sigma::StdDev(s)) => Some(s),
            None => Some((self.default_sigma_rel * obs.value).max(self.sigma_floor)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservationResidual {
    pub target: ObservationTarget,
    pub source: String,
    pub observed: f64,
    pub reconciled: f64,
    /// reconciled − observed.
    pub residual: f64,
    /// `None` for exact observations.
    pub sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReconcileResult {
    pub graph: FlowGraph,
    pub residuals: Vec<ObservationResidual>,
    /// Σ (residual / σ)² over non-exact observations.
    pub objective: f64,
    /// Flows no observation covers; they are pinned only by balance and the weak prior.
    pub underdetermined: Vec<FlowKey>,
    pub iterations: usize,
}

struct Row {
    columns: Vec<usize>,
    value: f64,
    weight: f64,
}

/// Reconcile observations onto the template's structure.
pub fn reconcile(problem: &ReconcileProblem) -> Result<ReconcileResult, ReconcileError> {
    if !(problem.default_sigma_rel.is_finite() && problem.default_sigma_rel > 0.0) {
        return Err(ReconcileError::InvalidOption {
            name: "default_sigma_rel",
            value: problem.default_sigma_rel,
        });
    }
    if !(problem.sigma_floor.is_finite() && problem.sigma_floor > 0.0) {
        return Err(ReconcileError::InvalidOption {
            name: "sigma_floor",
            value: problem.sigma_floor,
        });
    }
    let template = &problem.template;
    let violations: Vec<Violation> = template
        .validate()
        .into_iter()
        .filter(|v| !matches!(v, Violation::NegativeQuantity { .. }))
        .collect();
    if !violations.is_empty() {
        return Err(ReconcileError::InvalidTemplate(violations));
    }
    if problem.observations.is_empty() {
        return Err(ReconcileError::NoObservations);
    }

    let mut order: Vec<usize> = (0..template.flows().len()).collect();
    order.sort_by(|&a, &b| template.flows()[a].key.cmp(&template.flows()[b].key));
    let keys: Vec<&FlowKey> = order.iter().map(|&i| &template.flows()[i].key).collect();
    let n = keys.len();

    let mut soft = Vec::new();
    let mut exact = Vec::new();
    let mut covered = vec![false; n];
    let mut directly_observed = vec![false; n];
    for obs in &problem.observations {
        obs.check().map_err(ReconcileError::InvalidObservation)?;
        let columns: Vec<usize> = (0..n).filter(|&j| obs.target.covers(keys[j])).collect();
        if columns.is_empty() {
            return Err(ReconcileError::UnresolvedTarget(obs.target.clone()));
        }
        for &j in &columns {
            covered[j] = true;
            if matches!(obs.target, ObservationTarget::Flow(_)) {
                directly_observed[j] = true;
            }
        }
        match problem.effective_sigma(obs) {
            Some(sigma) => soft.push(Row {
                columns,
                value: obs.value,
                weight: 1.0 / (sigma * sigma),
            }),
            None => exact.push(Row {
                columns,
                value: obs.value,
                weight: 0.0,
            }),
        }
    }

    // Work in units of the largest observed value.
    let scale = problem
        .observations
        .iter()
        .map(|o| o.value)
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut h = DMatrix::<f64>::zeros(n, n);
    let mut g = DVector::<f64>::zeros(n);
    for row in &soft {
        let w = row.weight * scale * scale;
        let v = row.value / scale;
        for &a in &row.columns {
            g[a] += w * v;
            for &b in &row.columns {
                h[(a, b)] += w;
            }
        }
    }
    for j in 0..n {
        let sigma = if !covered[j] {
            UNOBSERVED_PRIOR_SIGMA
        } else if !directly_observed[j] {
            NODE_TOTAL_REGULARIZER_SIGMA
        } else {
            continue;
        };
        h[(j, j)] += (scale / sigma).powi(2);
    }

    let transformers: Vec<&str> = template
        .nodes()
        .iter()
        .filter(|node| node.kind == NodeKind::Transformer)
        .map(|node| node.id.as_str())
        .collect();
    let m = transformers.len() + exact.len();
    let mut c = DMatrix::<f64>::zeros(m, n);
    let mut d = DVector::<f64>::zeros(m);
    for (r, node) in transformers.iter().enumerate() {
        for (j, key) in keys.iter().enumerate() {
            if key.to == *node {
                c[(r, j)] += 1.0;
            }
            if key.from == *node {
                c[(r, j)] -= 1.0;
            }
        }
    }
    for (k, row) in exact.iter().enumerate() {
        let r = transformers.len() + k;
        for &j in &row.columns {
            c[(r, j)] = 1.0;
        }
        d[r] = row.value / scale;
    }

    let x0 = if exact.is_empty() {
        DVector::zeros(n)
    } else {
        feasible_start(&c, &d)?
    };
    let solution = qp::solve(&h, &g, &c, x0)?;

    let reconciled: Vec<f64> = solution.x.iter().map(|&u| (u * scale).max(0.0)).collect();
    let mut position = vec![0usize; n];
    for (j, &i) in order.iter().enumerate() {
        position[i] = j;
    }
    let mut index = 0;
    let graph = template.map_quantities(|_| {
        let q = reconciled[position[index]];
        index += 1;
        q
    });

    let mut objective = 0.0;
    let residuals = problem
        .observations
        .iter()
        .map(|obs| {
            let value = graph.evaluate(&obs.target);
            let sigma = problem.effective_sigma(obs);
            if let Some(s) = sigma {
                objective += ((value - obs.value) / s).powi(2);
            }
            ObservationResidual {
                target: obs.target.clone(),
                source: obs.source.clone(),
                observed: obs.value,
                reconciled: value,
                residual: value - obs.value,
                sigma,
            }
        })
        .collect();

    let underdetermined = (0..n).filter(|&j| !covered[j]).map(|j| keys[j].clone()).collect();
    Ok(ReconcileResult {
        graph,
        residuals,
        objective,
        underdetermined,
        iterations: solution.iterations,
    })
}

/// A nonnegative point satisfying `C x = d`, or `Infeasible`.
fn feasible_start(c: &DMatrix<f64>, d: &DVector<f64>) -> Result<DVector<f64>, ReconcileError> {
    let n = c.ncols();
    let ridge = 1e-12;
    let h = c.transpose() * c + DMatrix::<f64>::identity(n, n) * ridge;
    let g = c.transpose() * d;
    let mut x = qp::solve(&h, &g, &DMatrix::zeros(0, n), DVector::zeros(n))?.x;
    let tol = 1e-8 * (1.0 + d.amax());

    // Remove the ridge bias on the support.
    let support: Vec<usize> = (0..n).filter(|&j| x[j] > 0.0).collect();
    let c_support = c.select_columns(support.iter());
    let rows = qp::independent_rows(&c_support);
    if !rows.is_empty() {
        let a = c_support.select_rows(rows.iter());
        let r = d.select_rows(rows.iter()) - &a * x.select_rows(support.iter());
        if let Some(y) = (&a * a.transpose()).lu().solve(&r) {
            let delta = a.transpose() * y;
            for (k, &j) in support.iter().enumerate() {
                x[j] = (x[j] + delta[k]).max(0.0);
            }
        }
    }

    let residual = (c * &x - d).amax();
    if residual > tol {
        return Err(ReconcileError::Infeasible { residual });
    }
    Ok(x)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BlendError {
    #[error("quantities must be finite and nonnegative")]
    NegativeInput,
    #[error("consumption + exports ({uses}) differs from production + imports ({supply})")]
    UnbalancedInputs { supply: f64, uses: f64 },
}

/// Local production and imports split across local consumption and exports.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlendSplit {
    /// Local production consumed locally.
    pub pc: f64,
    /// Local production exported.
    pub pe: f64,
    /// Imports consumed locally.
    pub ic: f64,
    /// Imports re-exported.
    pub ie: f64,
}

/// Split supply assuming production and imports mix proportionally into every use.
///
/// Requires `c + e = p + i` within the balance tolerance. With no supply all
/// four flows are zero.
pub fn perfect_blend(p: f64, i: f64, c: f64, e: f64) -> Result<BlendSplit, BlendError> {
    if [p, i, c, e].iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(BlendError::NegativeInput);
    }
    let supply = p + i;
    let uses = c + e;
    if !within_balance_tolerance(supply - uses, supply.max(uses)) {
        return Err(BlendError::UnbalancedInputs { supply, uses });
    }
    if supply == 0.0 {
        return Ok(BlendSplit {
            pc: 0.0,
            pe: 0.0,
            ic: 0.0,
            ie: 0.0,
        });
    }
    Ok(BlendSplit {
        pc: p * c / supply,
        pe: p * e / supply,
        ic: i * c / supply,
        ie: i * e / supply,
    })
}

/// Keys of flows in `graph` that no observation in `observations` covers.
pub fn uncovered_flows(graph: &FlowGraph, observations: &[Observation]) -> BTreeSet<FlowKey> {
    graph
        .flows()
        .iter()
        .filter(|f| !observations.iter().any(|o| o.target.covers(&f.key)))
        .map(|f| f.key.clone())
        .collect()
}
