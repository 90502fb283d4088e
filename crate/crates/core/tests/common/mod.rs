//! Independent reference computations shared by the integration tests and
//! the acceptance runner.
#![allow(dead_code)]

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use silvaflux::carbon::{CarbonInflows, CategoryInflow, CategoryPool, PoolParams, PoolStock};
use silvaflux::reconcile::ReconcileProblem;
use silvaflux::{Flow, FlowGraph, FlowKey, Node, NodeKind, Observation, ObservationTarget, Product, ProductCategory};

pub fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data/grand_est")
}

pub fn baseline() -> FlowGraph {
    let dir = data_dir();
    silvaflux::io::read_graph(
        "2014-2018",
        dir.join("products.csv"),
        dir.join("nodes.csv"),
        dir.join("flows.csv"),
    )
    .expect("bundled baseline loads")
}

/// `a → b → c` with both flows observed.
pub fn chain_problem(y1: f64, s1: f64, y2: f64, s2: f64) -> ReconcileProblem {
    let graph = FlowGraph::new(
        "t",
        vec![
            Node::new("a", "A", NodeKind::Source),
            Node::new("b", "B", NodeKind::Transformer),
            Node::new("c", "C", NodeKind::Sink),
        ],
        vec![Product::new("w", "Wood", ProductCategory::Roundwood)],
        vec![
            Flow::new("ab", FlowKey::new("a", "b", "w"), 0.0),
            Flow::new("bc", FlowKey::new("b", "c", "w"), 0.0),
        ],
    );
    let obs = vec![
        Observation::new(ObservationTarget::Flow(FlowKey::new("a", "b", "w")), y1, Some(s1), "s1"),
        Observation::new(ObservationTarget::Flow(FlowKey::new("b", "c", "w")), y2, Some(s2), "s2"),
    ];
    ReconcileProblem::new(graph, obs)
}

/// A small random reconciliation problem where every flow is observed once.
pub struct OracleProblem {
    pub problem: ReconcileProblem,
    pub keys: Vec<FlowKey>,
    pub y: Vec<f64>,
    pub sigma: Vec<f64>,
    /// Node-by-flow balance matrix over transformer nodes.
    pub balance: DMatrix<f64>,
}

/// Random layered network with 3 to `max_flows` flows, each transformer fed
/// and drained, and at most `max_free` degrees of freedom.
pub fn random_problem(rng: &mut impl Rng, max_flows: usize, max_free: usize) -> OracleProblem {
    loop {
        let sources = rng.gen_range(1..=2);
        let transformers = rng.gen_range(1..=2);
        let sinks = rng.gen_range(1..=2);
        let s: Vec<String> = (0..sources).map(|i| format!("s{i}")).collect();
        let t: Vec<String> = (0..transformers).map(|i| format!("t{i}")).collect();
        let k: Vec<String> = (0..sinks).map(|i| format!("k{i}")).collect();

        let mut candidates: Vec<(String, String)> = Vec::new();
        for a in &s {
            for b in t.iter().chain(&k) {
                candidates.push((a.clone(), b.clone()));
            }
        }
        for (i, a) in t.iter().enumerate() {
            for b in t.iter().skip(i + 1).chain(&k) {
                candidates.push((a.clone(), b.clone()));
            }
        }
        let n = rng.gen_range(3..=max_flows.min(candidates.len()));
        let mut chosen = Vec::new();
        while chosen.len() < n {
            let i = rng.gen_range(0..candidates.len());
            chosen.push(candidates.swap_remove(i));
        }
        chosen.sort();
        let fed = t.iter().all(|x| chosen.iter().any(|(_, b)| b == x) && chosen.iter().any(|(a, _)| a == x));
        if !fed {
            continue;
        }

        let mut balance = DMatrix::zeros(t.len(), n);
        for (j, (a, b)) in chosen.iter().enumerate() {
            if let Some(r) = t.iter().position(|x| x == b) {
                balance[(r, j)] += 1.0;
            }
            if let Some(r) = t.iter().position(|x| x == a) {
                balance[(r, j)] -= 1.0;
            }
        }
        if null_space(&balance).ncols() > max_free {
            continue;
        }

        let keys: Vec<FlowKey> = chosen.iter().map(|(a, b)| FlowKey::new(a.as_str(), b.as_str(), "w")).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..100.0)).collect();
        let sigma: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();
        let mut nodes = Vec::new();
        nodes.extend(s.iter().map(|x| Node::new(x.as_str(), x.as_str(), NodeKind::Source)));
        nodes.extend(t.iter().map(|x| Node::new(x.as_str(), x.as_str(), NodeKind::Transformer)));
        nodes.extend(k.iter().map(|x| Node::new(x.as_str(), x.as_str(), NodeKind::Sink)));
        let flows = keys.iter().map(|key| Flow::new(key.to_string(), key.clone(), 0.0)).collect();
        let graph = FlowGraph::new("rand", nodes, vec![Product::new("w", "w", ProductCategory::Other)], flows);
        let obs = keys
            .iter()
            .zip(y.iter().zip(&sigma))
            .map(|(key, (v, s))| Observation::new(ObservationTarget::Flow(key.clone()), *v, Some(*s), "rand"))
            .collect();
        return OracleProblem {
            problem: ReconcileProblem::new(graph, obs),
            keys,
            y,
            sigma,
            balance,
        };
    }
}

/// Orthonormal basis of `{x : A x = 0}` from the eigenvectors of `AᵀA`.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let eig = SymmetricEigen::new(a.transpose() * a);
    let cols: Vec<DVector<f64>> = (0..n)
        .filter(|&i| eig.eigenvalues[i].abs() < 1e-9)
        .map(|i| eig.eigenvectors.column(i).into_owned())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

/// Minimize the weighted squared misfit over `{x ≥ 0 : A x = 0}` by brute
/// force: every subset of flows is forced to zero in turn, the remaining face
/// is searched on a refining grid, and the best face wins. The true
/// minimizer lies in the relative interior of the face given by its own zero
/// set, where grid search cannot stall against a bound.
pub fn grid_oracle(y: &[f64], sigma: &[f64], balance: &DMatrix<f64>) -> Vec<f64> {
    let n = balance.ncols();
    let misfit = |x: &[f64]| -> f64 { (0..n).map(|i| ((x[i] - y[i]) / sigma[i]).powi(2)).sum() };
    let mut best_x = vec![0.0; n];
    let mut best = misfit(&best_x);
    for mask in 0u32..(1 << n) {
        let zero: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        let mut rows = balance.clone().insert_rows(balance.nrows(), zero.len(), 0.0);
        for (r, &i) in zero.iter().enumerate() {
            rows[(balance.nrows() + r, i)] = 1.0;
        }
        let basis = null_space(&rows);
        if basis.ncols() == 0 {
            continue;
        }
        let x = grid_search_face(y, sigma, &basis);
        let v = misfit(&x);
        if x.iter().all(|&v| v >= -1e-9) && v < best {
            best = v;
            best_x = x;
        }
    }
    best_x.iter().map(|v| v.max(0.0)).collect()
}

/// Grid refinement over `x = N t`, rejecting points with a negative flow.
fn grid_search_face(y: &[f64], sigma: &[f64], basis: &DMatrix<f64>) -> Vec<f64> {
    let (n, d) = (basis.nrows(), basis.ncols());
    let point = |t: &[f64]| -> Vec<f64> { (0..n).map(|i| (0..d).map(|k| basis[(i, k)] * t[k]).sum()).collect() };
    let objective = |t: &[f64]| -> f64 {
        let x = point(t);
        if x.iter().any(|&v| v < -1e-12) {
            return f64::INFINITY;
        }
        (0..n).map(|i| ((x[i] - y[i]) / sigma[i]).powi(2)).sum()
    };

    // The minimizer is no farther from y than 0 is, in the weighted norm.
    let ynorm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ratio = sigma.iter().cloned().fold(0.0, f64::max) / sigma.iter().cloned().fold(f64::INFINITY, f64::min);
    let radius = ynorm * (1.0 + ratio) + 1.0;

    let mut center = vec![0.0; d];
    let mut step = radius / 20.0;
    let mut half = 20i64;
    let mut best = objective(&center);
    while step > 1e-6 {
        loop {
            let mut best_t = center.clone();
            let mut idx = vec![-half; d];
            'grid: loop {
                let t: Vec<f64> = (0..d).map(|k| center[k] + idx[k] as f64 * step).collect();
                let v = objective(&t);
                if v < best {
                    best = v;
                    best_t = t;
                }
                for slot in idx.iter_mut() {
                    *slot += 1;
                    if *slot <= half {
                        continue 'grid;
                    }
                    *slot = -half;
                }
                break;
            }
            let on_edge = (0..d).any(|k| ((best_t[k] - center[k]) / step).round().abs() as i64 == half);
            center = best_t;
            if !on_edge {
                break;
            }
        }
        step /= 5.0;
        half = 5;
    }
    point(&center)
}

pub fn random_pool(rng: &mut impl Rng) -> CategoryPool {
    CategoryPool {
        half_life: rng.gen_range(0.5..80.0),
        swds_fraction: rng.gen_range(0.0..=1.0),
        swds_half_life: rng.gen_range(1.0..100.0),
        recycling_rate: rng.gen_range(0.0..0.9),
    }
}

pub fn random_params(rng: &mut impl Rng) -> PoolParams {
    let mut params = PoolParams::uniform(random_pool(rng));
    for c in ProductCategory::ALL {
        if rng.gen_bool(0.5) {
            params.categories.insert(c, random_pool(rng));
        }
    }
    params
}

pub fn random_inflows(rng: &mut impl Rng) -> CarbonInflows {
    let mut inflows = CarbonInflows::new();
    for c in ProductCategory::ALL {
        if rng.gen_bool(0.7) {
            inflows.insert(
                c,
                CategoryInflow {
                    product: rng.gen_range(0.0..1e5),
                    energy: rng.gen_range(0.0..1e5),
                    export: rng.gen_range(0.0..1e5),
                },
            );
        }
    }
    inflows
}

pub fn random_state(rng: &mut impl Rng) -> silvaflux::carbon::CarbonState {
    let mut state = silvaflux::carbon::CarbonState::new();
    for c in ProductCategory::ALL {
        if rng.gen_bool(0.5) {
            let stock = PoolStock {
                hwp_in_use: rng.gen_range(0.0..1e6),
                swds: rng.gen_range(0.0..1e6),
            };
            state.insert(c, stock);
        }
    }
    state
}
