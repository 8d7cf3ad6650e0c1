//! Integer feasible flows on a directed acyclic graph as contingency tables.
//!
//! With `z` larger than any possible inflow, a flow `x` on `G = (V, E)`
//! with excesses `a(v)` (inflow minus outflow) corresponds to the `n × n`
//! table with `d_uv = x(u→v)` on edges, `d_vv = z − inflow(v)` on the
//! diagonal and zero elsewhere. Its row sums are `z − a(v)` and its column
//! sums are `z`, so the flow count is `T` for those margins and 0/1 weights
//! supported on `E` plus the diagonal.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{
    estimate_t_prime_direct, estimate_t_prime_simplex, DirectConfig, EstimateReport, Method, SimplexConfig,
};
use crate::exact::DEFAULT_BUDGET;
use crate::problem::{ContingencyTable, ProblemInstance};
use crate::random::RandomSource;
use crate::Matrix;

/// On-disk graph format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphFile {
    pub vertices: Vec<String>,
    pub edges: Vec<(String, String)>,
    #[serde(default)]
    pub excess: BTreeMap<String, i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowProblem {
    vertices: Vec<String>,
    edges: Vec<(usize, usize)>,
    excess: Vec<i64>,
    /// A topological order when the graph is acyclic.
    order: Option<Vec<usize>>,
    connected: bool,
}

impl FlowProblem {
    /// Validates a graph with excesses. Vertices missing from `excess`
    /// get `a(v) = 0`. Cyclic graphs are accepted here and rejected by the
    /// counting routines.
    pub fn new(vertices: Vec<String>, edges: &[(String, String)], excess: &BTreeMap<String, i64>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidGraph("no vertices".into()));
        }
        let mut index = HashMap::new();
        for (i, v) in vertices.iter().enumerate() {
            if index.insert(v.clone(), i).is_some() {
                return Err(Error::InvalidGraph(format!("duplicate vertex {v:?}")));
            }
        }
        let lookup = |v: &str| {
            index
                .get(v)
                .copied()
                .ok_or_else(|| Error::InvalidGraph(format!("unknown vertex {v:?}")))
        };
        let mut seen = HashSet::new();
        let mut ids = Vec::with_capacity(edges.len());
        for (tail, head) in edges {
            let (t, h) = (lookup(tail)?, lookup(head)?);
            if t == h {
                return Err(Error::InvalidGraph(format!("loop at {tail:?}")));
            }
            if !seen.insert((t, h)) {
                return Err(Error::InvalidGraph(format!("repeated edge {tail:?} -> {head:?}")));
            }
            ids.push((t, h));
        }
        let mut a = vec![0i64; vertices.len()];
        for (v, &value) in excess {
            a[lookup(v)?] = value;
        }
        let sum: i64 = a.iter().sum();
        if sum != 0 {
            return Err(Error::ExcessSum(sum));
        }
        let order = topological_order(vertices.len(), &ids);
        let connected = weakly_connected(vertices.len(), &ids);
        Ok(FlowProblem {
            vertices,
            edges: ids,
            excess: a,
            order,
            connected,
        })
    }

    pub fn from_file(file: &GraphFile) -> Result<Self> {
        Self::new(file.vertices.clone(), &file.edges, &file.excess)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_file(&serde_json::from_str(text)?)
    }

    /// Index-based constructor; vertices are named `v0, v1, …`.
    pub fn from_indices(n: usize, edges: &[(usize, usize)], excess: &[i64]) -> Result<Self> {
        let name = |i: usize| format!("v{i}");
        let named: Vec<(String, String)> = edges.iter().map(|&(t, h)| (name(t), name(h))).collect();
        let ex: BTreeMap<String, i64> = excess.iter().enumerate().map(|(i, &a)| (name(i), a)).collect();
        Self::new((0..n).map(name).collect(), &named, &ex)
    }

    pub fn vertices(&self) -> &[String] {
        &self.vertices
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn excess(&self) -> &[i64] {
        &self.excess
    }

    pub fn is_acyclic(&self) -> bool {
        self.order.is_some()
    }

    pub fn is_connected(&self) -> bool {
        self.connected
    }

    /// `1 + Σ_{a(v) > 0} a(v)`.
    pub fn default_z(&self) -> u64 {
        1 + self.positive_excess()
    }

    pub fn positive_excess(&self) -> u64 {
        self.excess.iter().filter(|&&a| a > 0).map(|&a| a as u64).sum()
    }

    fn order(&self) -> Result<&[usize]> {
        self.order.as_deref().ok_or(Error::CyclicGraph)
    }
}

fn topological_order(n: usize, edges: &[(usize, usize)]) -> Option<Vec<usize>> {
    let mut indegree = vec![0usize; n];
    let mut out = vec![Vec::new(); n];
    for &(t, h) in edges {
        indegree[h] += 1;
        out[t].push(h);
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&v| indegree[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(v) = ready.pop() {
        order.push(v);
        for &h in &out[v] {
            indegree[h] -= 1;
            if indegree[h] == 0 {
                ready.push(h);
            }
        }
    }
    (order.len() == n).then_some(order)
}

fn weakly_connected(n: usize, edges: &[(usize, usize)]) -> bool {
    let mut adj = vec![Vec::new(); n];
    for &(t, h) in edges {
        adj[t].push(h);
        adj[h].push(t);
    }
    let mut seen = vec![false; n];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

/// The table problem for a flow problem, with the data to map tables back.
#[derive(Debug, Clone, Serialize)]
pub struct FlowReduction {
    pub problem: ProblemInstance,
    pub z: u64,
    /// Vertex names in row/column order.
    pub vertices: Vec<String>,
    /// `(tail, head)` cell of each edge, in edge order.
    pub edge_cells: Vec<(usize, usize)>,
}

impl FlowReduction {
    /// Edge flows `x(e) = d_{tail, head}`.
    pub fn table_to_flow(&self, table: &ContingencyTable) -> Vec<u64> {
        self.edge_cells.iter().map(|&(t, h)| table.get(t, h)).collect()
    }

    /// The table of a flow: edges carry `x(e)`, the diagonal `z − inflow`.
    pub fn flow_to_table(&self, flow: &[u64]) -> ContingencyTable {
        let n = self.vertices.len();
        let mut entries = vec![0u64; n * n];
        let mut inflow = vec![0u64; n];
        for (&(t, h), &x) in self.edge_cells.iter().zip(flow) {
            entries[t * n + h] = x;
            inflow[h] += x;
        }
        for v in 0..n {
            entries[v * n + v] = self.z.saturating_sub(inflow[v]);
        }
        ContingencyTable::new(n, n, entries)
    }
}

/// Reduction with `z = 1 + Σ_{a(v)>0} a(v)`.
pub fn reduce_flow_problem(flow: &FlowProblem) -> Result<FlowReduction> {
    reduce_flow_problem_with_z(flow, flow.default_z())
}

/// Reduction with a caller-chosen `z ≥ Σ_{a(v)>0} a(v)`; every margin
/// `z − a(v)` must stay positive.
pub fn reduce_flow_problem_with_z(flow: &FlowProblem, z: u64) -> Result<FlowReduction> {
    flow.order()?;
    if z < flow.positive_excess() {
        return Err(Error::InvalidConfig(format!(
            "z = {z} is below the total positive excess {}",
            flow.positive_excess()
        )));
    }
    let n = flow.vertices.len();
    let rows: Vec<u64> = flow.excess.iter().map(|&a| (z as i64 - a).max(0) as u64).collect();
    let cols = vec![z; n];
    let mut w = Matrix::identity(n);
    for &(t, h) in &flow.edges {
        w[(t, h)] = 1.0;
    }
    let problem = crate::validate_problem(&rows, &cols, &w)?;
    Ok(FlowReduction {
        problem,
        z,
        vertices: flow.vertices.clone(),
        edge_cells: flow.edges.clone(),
    })
}

struct FlowWalker<'a, F> {
    flow: &'a FlowProblem,
    order: &'a [usize],
    out_edges: Vec<Vec<usize>>,
    inflow: Vec<u64>,
    x: Vec<u64>,
    budget: u64,
    nodes: u64,
    visit: F,
}

impl<F: FnMut(&[u64])> FlowWalker<'_, F> {
    fn tick(&mut self) -> Result<()> {
        self.nodes += 1;
        if self.nodes > self.budget {
            return Err(Error::BudgetExceeded { budget: self.budget });
        }
        Ok(())
    }

    /// Processes the `pos`-th vertex of the topological order: its inflow
    /// is final, so its outflow `inflow − a(v)` is forced.
    fn vertex(&mut self, pos: usize) -> Result<()> {
        self.tick()?;
        if pos == self.order.len() {
            (self.visit)(&self.x);
            return Ok(());
        }
        let v = self.order[pos];
        let out = self.inflow[v] as i64 - self.flow.excess[v];
        if out < 0 || (out > 0 && self.out_edges[v].is_empty()) {
            return Ok(());
        }
        self.split(pos, v, 0, out as u64)
    }

    /// Distributes `remaining` units over the out-edges of `v` from the
    /// `k`-th on.
    fn split(&mut self, pos: usize, v: usize, k: usize, remaining: u64) -> Result<()> {
        let edges = &self.out_edges[v];
        if k + 1 >= edges.len() {
            if let Some(&e) = edges.get(k) {
                self.assign(e, remaining);
            }
            let r = self.vertex(pos + 1);
            if let Some(&e) = self.out_edges[v].get(k) {
                self.assign(e, 0);
            }
            return r;
        }
        let e = edges[k];
        for amount in 0..=remaining {
            self.tick()?;
            self.assign(e, amount);
            let r = self.split(pos, v, k + 1, remaining - amount);
            self.assign(e, 0);
            r?;
        }
        Ok(())
    }

    fn assign(&mut self, e: usize, amount: u64) {
        let h = self.flow.edges[e].1;
        self.inflow[h] = self.inflow[h] - self.x[e] + amount;
        self.x[e] = amount;
    }
}

/// Visits every integer feasible flow (edge values in edge order).
/// Returns the number of search nodes.
pub fn visit_flows<F: FnMut(&[u64])>(flow: &FlowProblem, budget: u64, visit: F) -> Result<u64> {
    let order = flow.order()?;
    let mut out_edges = vec![Vec::new(); flow.vertices.len()];
    for (e, &(t, _)) in flow.edges.iter().enumerate() {
        out_edges[t].push(e);
    }
    let mut w = FlowWalker {
        flow,
        order,
        out_edges,
        inflow: vec![0; flow.vertices.len()],
        x: vec![0; flow.edges.len()],
        budget,
        nodes: 0,
        visit,
    };
    w.vertex(0)?;
    Ok(w.nodes)
}

/// Number of integer feasible flows, by depth-first search along a
/// topological order.
pub fn count_flows_exact(flow: &FlowProblem, budget: u64) -> Result<u64> {
    let mut count = 0u64;
    visit_flows(flow, budget, |_| count += 1)?;
    Ok(count)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct FlowEstimateConfig {
    pub method: Method,
    /// Weight put on the non-edge cells; default `1e-6 / N`.
    pub zero_substitute: Option<f64>,
    /// Also run at a tenth of the substitute with the same random numbers.
    pub sensitivity: bool,
    pub direct: DirectConfig,
    pub simplex: SimplexConfig,
}

impl Default for FlowEstimateConfig {
    fn default() -> Self {
        FlowEstimateConfig {
            method: Method::Direct,
            zero_substitute: None,
            sensitivity: true,
            direct: DirectConfig::default(),
            simplex: SimplexConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Sensitivity {
    pub zero_substitute: f64,
    pub t_prime: f64,
    pub confidence_interval: (f64, f64),
    /// The smaller substitute's `T′` lies in the main run's interval.
    pub agrees: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FlowEstimate {
    pub z: u64,
    pub zero_substitute: f64,
    pub report: EstimateReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensitivity: Option<Sensitivity>,
}

fn run_estimator(
    problem: &ProblemInstance,
    config: &FlowEstimateConfig,
    substitute: f64,
    source: &RandomSource,
) -> Result<EstimateReport> {
    match config.method {
        Method::Direct => {
            let cfg = DirectConfig {
                zero_substitute: Some(substitute),
                ..config.direct.clone()
            };
            Ok(estimate_t_prime_direct(problem, &cfg, source)?.report)
        }
        Method::Simplex => {
            let cfg = SimplexConfig {
                zero_substitute: Some(substitute),
                ..config.simplex.clone()
            };
            estimate_t_prime_simplex(problem, &cfg, source)
        }
    }
}

/// Estimate of the flow count through the table reduction.
pub fn estimate_flows(flow: &FlowProblem, config: &FlowEstimateConfig, source: &RandomSource) -> Result<FlowEstimate> {
    let reduction = reduce_flow_problem(flow)?;
    let problem = &reduction.problem;
    let substitute = config
        .zero_substitute
        .unwrap_or(1e-6 / problem.total() as f64);
    if !(substitute > 0.0 && substitute.is_finite()) {
        return Err(Error::InvalidConfig(format!("zero substitute {substitute} must be positive")));
    }
    let report = run_estimator(problem, config, substitute, source)?;
    let sensitivity = if config.sensitivity && problem.has_zero_weight() {
        let small = substitute / 10.0;
        let other = run_estimator(problem, config, small, source)?;
        let (lo, hi) = report.confidence_interval;
        Some(Sensitivity {
            zero_substitute: small,
            t_prime: other.t_prime,
            confidence_interval: other.confidence_interval,
            agrees: lo <= other.t_prime && other.t_prime <= hi,
        })
    } else {
        None
    };
    Ok(FlowEstimate {
        z: reduction.z,
        zero_substitute: substitute,
        report,
        sensitivity,
    })
}

/// Exact count through the reduction (tables of non-zero weight).
pub fn count_flows_via_tables(flow: &FlowProblem, budget: u64) -> Result<u64> {
    let reduction = reduce_flow_problem(flow)?;
    Ok(crate::exact::weighted_total_exact(&reduction.problem, budget)?.table_count)
}

/// Default brute-force budget for flow counting.
pub const FLOW_BUDGET: u64 = DEFAULT_BUDGET;
