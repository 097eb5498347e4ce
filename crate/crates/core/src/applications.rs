//! Reductions from named online problems to packing and covering instances.

use petgraph::graph::{EdgeIndex, NodeIndex, UnGraph};
use petgraph::visit::EdgeRef;
use petgraph::Graph;
use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};
use crate::model::{CoveringInstance, PackingInstance, SparseRow};
use crate::objective::{ObjectiveSpec, ScalarUtility, UtilitySpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnapsackItem {
    pub v: f64,
    pub w: f64,
}

/// Capacity constraint `sum w_i y_i / v_i <= C` in column 0 and a box
/// `y_i <= v_i` in column `1 + i`. `y_i` is the value taken from item `i`.
pub fn reduce_knapsack(items: &[KnapsackItem], capacity: f64) -> Result<PackingInstance> {
    if !(capacity.is_finite() && capacity >= 0.0) {
        return Err(PdlaError::InvalidInput(format!("capacity {capacity} must be >= 0")));
    }
    let n = 1 + items.len();
    let mut b = vec![capacity];
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        if !(item.v > 0.0 && item.w > 0.0 && item.v.is_finite() && item.w.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("item {i}: value and weight must be > 0")));
        }
        b.push(item.v);
        rows.push(SparseRow::new(vec![(0, item.w / item.v), (1 + i, 1.0)], n)?);
    }
    PackingInstance::from_spec(b, rows, UtilitySpec::Linear { costs: None })
}

/// Advice "take fraction `phi_i` of item `i`" as packing advice `phi_i v_i`.
pub fn knapsack_advice(items: &[KnapsackItem], fractions: &[f64]) -> Result<Vec<f64>> {
    if fractions.len() != items.len() {
        return Err(PdlaError::DimensionMismatch { expected: items.len(), got: fractions.len() });
    }
    if fractions.iter().any(|f| !(*f >= 0.0 && f.is_finite())) {
        return Err(PdlaError::InvalidInput("fractions must be finite and >= 0".into()));
    }
    Ok(items.iter().zip(fractions).map(|(it, f)| f * it.v).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    /// `(resource, amount)` pairs.
    pub demands: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub w: f64,
    pub alternatives: Vec<Alternative>,
}

/// Variables are `y_i^(k)` in job-major order. Columns `0..R` are resources
/// with capacity `c_j` and coefficient `a / w_i`; column `R + i` is job `i`'s
/// constraint `sum_k y_i^(k) / w_i <= 1`. With `p_range = Some(P)`, every
/// `a / c_j` outside `[1/P, 1]` produces a warning.
pub fn reduce_resource_benefit(
    jobs: &[Job],
    capacities: &[f64],
    p_range: Option<f64>,
) -> Result<(PackingInstance, Vec<String>)> {
    let r = capacities.len();
    if let Some(c) = capacities.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
        return Err(PdlaError::InvalidInput(format!("capacity {c} must be >= 0")));
    }
    let n = r + jobs.len();
    let mut b = capacities.to_vec();
    b.extend(std::iter::repeat_n(1.0, jobs.len()));
    let mut rows = Vec::new();
    let mut warnings = Vec::new();
    for (i, job) in jobs.iter().enumerate() {
        if !(job.w > 0.0 && job.w.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("job {i}: benefit must be > 0")));
        }
        for (k, alt) in job.alternatives.iter().enumerate() {
            let mut entries = Vec::with_capacity(alt.demands.len() + 1);
            for &(j, a) in &alt.demands {
                if j >= r {
                    return Err(PdlaError::InvalidInput(format!("job {i} alternative {k}: resource {j} out of range")));
                }
                if let Some(p) = p_range {
                    let ratio = a / capacities[j];
                    if !(ratio >= 1.0 / p && ratio <= 1.0) {
                        warnings.push(format!("job {i} alternative {k}: a / c = {ratio} on resource {j} is outside [1/{p}, 1]"));
                    }
                }
                entries.push((j, a / job.w));
            }
            entries.push((r + i, 1.0 / job.w));
            rows.push(SparseRow::new(entries, n)?);
        }
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok((PackingInstance::from_spec(b, rows, UtilitySpec::Linear { costs: None })?, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkEdge {
    pub u: usize,
    pub v: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowRequest {
    pub s: usize,
    pub t: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub nodes: usize,
    pub edges: Vec<NetworkEdge>,
}

impl Network {
    fn graph(&self) -> Result<UnGraph<(), usize>> {
        let mut g: UnGraph<(), usize> = Graph::default();
        for _ in 0..self.nodes {
            g.add_node(());
        }
        for (k, e) in self.edges.iter().enumerate() {
            if e.u >= self.nodes || e.v >= self.nodes {
                return Err(PdlaError::InvalidInput(format!("edge {k} has an endpoint out of range")));
            }
            if !(e.capacity.is_finite() && e.capacity >= 0.0) {
                return Err(PdlaError::InvalidInput(format!("edge {k}: capacity must be >= 0")));
            }
            g.add_edge(NodeIndex::new(e.u), NodeIndex::new(e.v), k);
        }
        Ok(g)
    }
}

/// All simple `s`-`t` paths as edge lists; parallel edges give distinct paths.
pub fn enumerate_paths(network: &Network, s: usize, t: usize, path_cap: usize) -> Result<Vec<Vec<usize>>> {
    let g = network.graph()?;
    if s >= network.nodes || t >= network.nodes {
        return Err(PdlaError::InvalidInput(format!("request ({s}, {t}) names a missing node")));
    }
    let mut paths = Vec::new();
    let mut visited = vec![false; network.nodes];
    let mut stack: Vec<EdgeIndex> = Vec::new();

    fn dfs(
        g: &UnGraph<(), usize>,
        at: NodeIndex,
        t: NodeIndex,
        visited: &mut [bool],
        stack: &mut Vec<EdgeIndex>,
        paths: &mut Vec<Vec<usize>>,
        cap: usize,
    ) -> Result<()> {
        if at == t {
            if paths.len() == cap {
                return Err(PdlaError::OracleLimit(format!("more than {cap} paths between the request endpoints")));
            }
            paths.push(stack.iter().map(|e| g[*e]).collect());
            return Ok(());
        }
        visited[at.index()] = true;
        let mut edges: Vec<_> = g.edges(at).map(|e| (e.id(), e.target())).collect();
        edges.sort_by_key(|(id, _)| g[*id]);
        for (id, next) in edges {
            if !visited[next.index()] {
                stack.push(id);
                dfs(g, next, t, visited, stack, paths, cap)?;
                stack.pop();
            }
        }
        visited[at.index()] = false;
        Ok(())
    }

    if s != t {
        dfs(&g, NodeIndex::new(s), NodeIndex::new(t), &mut visited, &mut stack, &mut paths, path_cap)?;
    }
    Ok(paths)
}

/// One variable per (request, path), ordered by request then path. Column
/// `i` is request `i`'s unit demand; column `R + e` is edge `e`'s capacity.
pub fn reduce_throughput(network: &Network, requests: &[FlowRequest], path_cap: usize) -> Result<PackingInstance> {
    let r = requests.len();
    let n = r + network.edges.len();
    let mut b = vec![1.0; r];
    b.extend(network.edges.iter().map(|e| e.capacity));
    let mut rows = Vec::new();
    for (i, req) in requests.iter().enumerate() {
        let paths = enumerate_paths(network, req.s, req.t, path_cap)?;
        if paths.is_empty() {
            log::info!("request {i} ({} -> {}) has no path and contributes nothing", req.s, req.t);
        }
        for path in paths {
            let mut entries = vec![(i, 1.0)];
            entries.extend(path.into_iter().map(|e| (r + e, 1.0)));
            rows.push(SparseRow::new(entries, n)?);
        }
    }
    PackingInstance::from_spec(b, rows, UtilitySpec::Linear { costs: None })
}

/// Rejects a scalar utility that fails a midpoint-concavity or monotonicity
/// spot check on `[0, upto]`.
pub fn check_concave(g: &ScalarUtility, upto: f64) -> Result<()> {
    let upto = if upto.is_finite() && upto > 0.0 { upto } else { 1.0 };
    if g.eval(0.0).abs() > 1e-12 {
        return Err(PdlaError::InvalidInput(format!("utility {g:?} has g(0) != 0")));
    }
    let points: Vec<f64> = (0..=16).map(|k| upto * k as f64 / 16.0).collect();
    for w in points.windows(2) {
        if g.eval(w[1]) < g.eval(w[0]) - 1e-12 {
            return Err(PdlaError::InvalidInput(format!("utility {g:?} is not monotone")));
        }
    }
    for (a, b) in points.iter().zip(points.iter().skip(2)) {
        let mid = 0.5 * (a + b);
        if g.eval(mid) < 0.5 * (g.eval(*a) + g.eval(*b)) - 1e-12 {
            return Err(PdlaError::InvalidInput(format!("utility {g:?} is not concave")));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRequest {
    /// Edge ids of the fixed path.
    pub path: Vec<usize>,
    pub budget: f64,
    pub utility: ScalarUtility,
}

/// Unit-capacity edges in columns `0..E`; request `i`'s budget box
/// `y_i <= b_i` in column `E + i`.
pub fn reduce_onum(edges: usize, requests: &[UtilityRequest]) -> Result<PackingInstance> {
    let n = edges + requests.len();
    let mut b = vec![1.0; edges];
    let mut rows = Vec::with_capacity(requests.len());
    for (i, req) in requests.iter().enumerate() {
        if !(req.budget > 0.0 && req.budget.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("request {i}: budget must be > 0")));
        }
        check_concave(&req.utility, req.budget)?;
        b.push(req.budget);
        let mut entries: Vec<(usize, f64)> = req.path.iter().map(|&e| (e, 1.0)).collect();
        entries.push((edges + i, 1.0));
        rows.push(SparseRow::new(entries, n)?);
    }
    let terms = requests.iter().map(|r| r.utility).collect();
    PackingInstance::from_spec(b, rows, UtilitySpec::Separable { terms })
}

/// Single inventory constraint `sum_t y_t <= Delta`. With `slope_bounds =
/// Some((m, M))`, every `g_t'(0)` must lie in `[m, M]`.
pub fn reduce_ooic(revenues: &[ScalarUtility], inventory: f64, slope_bounds: Option<(f64, f64)>) -> Result<PackingInstance> {
    if !(inventory > 0.0 && inventory.is_finite()) {
        return Err(PdlaError::InvalidInput(format!("inventory {inventory} must be > 0")));
    }
    for (t, g) in revenues.iter().enumerate() {
        check_concave(g, inventory)?;
        if let Some((lo, hi)) = slope_bounds {
            let s = g.slope(0.0);
            if !(s >= lo && s <= hi) {
                return Err(PdlaError::InvalidInput(format!("round {t}: g'(0) = {s} is outside [{lo}, {hi}]")));
            }
        }
    }
    let rows = revenues.iter().map(|_| SparseRow::new(vec![(0, 1.0)], 1)).collect::<Result<_>>()?;
    PackingInstance::from_spec(vec![inventory], rows, UtilitySpec::Separable { terms: revenues.to_vec() })
}

/// Covering with `f(x) = ||B x||_q^q`; report `f(x)^(1/q)` as the norm.
pub fn reduce_mixed_covering_packing(b: Vec<Vec<f64>>, q: f64, rows: Vec<Vec<(usize, f64)>>) -> Result<CoveringInstance> {
    let n = b.first().map_or(0, Vec::len);
    if b.iter().flatten().any(|v| *v < 0.0) {
        return Err(PdlaError::InvalidInput("B must be nonnegative".into()));
    }
    let zero_col = |j: usize| b.iter().all(|r| r[j] == 0.0);
    let rows: Vec<SparseRow> = rows.into_iter().map(|r| SparseRow::new(r, n)).collect::<Result<_>>()?;
    for (i, row) in rows.iter().enumerate() {
        if row.entries().iter().all(|e| zero_col(e.j)) {
            return Err(PdlaError::Degenerate(format!(
                "row {i} only uses columns that B ignores; it is covered for free"
            )));
        }
    }
    CoveringInstance::from_spec(n, rows, ObjectiveSpec::PowerNorm { b, q })
}

pub fn mixed_norm(f_value: f64, q: f64) -> f64 {
    f_value.max(0.0).powf(1.0 / q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{offline_opt_packing, OptMode};

    fn opt(inst: &PackingInstance, mode: OptMode) -> f64 {
        offline_opt_packing(inst, mode, None).unwrap().value
    }

    #[test]
    fn knapsack_reduction() {
        let items = [KnapsackItem { v: 2.0, w: 1.0 }, KnapsackItem { v: 3.0, w: 2.0 }];
        let inst = reduce_knapsack(&items, 2.0).unwrap();
        assert_eq!(inst.rows[0].coefficient(0), 0.5);
        assert!((inst.rows[1].coefficient(0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!((inst.rows[0].coefficient(1), inst.rows[1].coefficient(2)), (1.0, 1.0));
        assert!((opt(&inst, OptMode::Auto) - 3.5).abs() < 1e-12);

        let one = reduce_knapsack(&[KnapsackItem { v: 5.0, w: 1.0 }], 3.0).unwrap();
        assert_eq!(opt(&one, OptMode::Auto), 5.0);
        let empty_bag = reduce_knapsack(&items, 0.0).unwrap();
        assert_eq!(opt(&empty_bag, OptMode::Auto), 0.0);
        assert_eq!(knapsack_advice(&items, &[1.0, 0.5]).unwrap(), vec![2.0, 1.5]);
    }

    #[test]
    fn benefit_reduction() {
        let unit = [Job { w: 1.0, alternatives: vec![Alternative { demands: vec![(0, 1.0)] }] }];
        let (inst, warnings) = reduce_resource_benefit(&unit, &[1.0], Some(2.0)).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(opt(&inst, OptMode::Auto), 1.0);

        let split = [Job {
            w: 3.0,
            alternatives: vec![Alternative { demands: vec![(0, 1.0)] }, Alternative { demands: vec![(1, 1.0)] }],
        }];
        let (inst, _) = reduce_resource_benefit(&split, &[10.0, 10.0], None).unwrap();
        assert!((opt(&inst, OptMode::Enum) - 3.0).abs() < 1e-12);

        let (none, _) = reduce_resource_benefit(&[], &[1.0], None).unwrap();
        assert_eq!(opt(&none, OptMode::Auto), 0.0);

        let (_, warnings) = reduce_resource_benefit(&unit, &[10.0], Some(2.0)).unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn throughput_reduction() {
        let single = Network { nodes: 2, edges: vec![NetworkEdge { u: 0, v: 1, capacity: 1.0 }] };
        let inst = reduce_throughput(&single, &[FlowRequest { s: 0, t: 1 }], 8).unwrap();
        assert_eq!(opt(&inst, OptMode::Auto), 1.0);

        let parallel = Network {
            nodes: 2,
            edges: vec![NetworkEdge { u: 0, v: 1, capacity: 1.0 }, NetworkEdge { u: 0, v: 1, capacity: 1.0 }],
        };
        let inst = reduce_throughput(&parallel, &[FlowRequest { s: 0, t: 1 }], 8).unwrap();
        assert_eq!(inst.m(), 2);
        assert!((opt(&inst, OptMode::Enum) - 1.0).abs() < 1e-12);

        let inst = reduce_throughput(&single, &[FlowRequest { s: 0, t: 1 }, FlowRequest { s: 1, t: 0 }], 8).unwrap();
        assert!((opt(&inst, OptMode::Enum) - 1.0).abs() < 1e-12);

        let apart = Network { nodes: 3, edges: vec![NetworkEdge { u: 0, v: 1, capacity: 1.0 }] };
        assert_eq!(reduce_throughput(&apart, &[FlowRequest { s: 0, t: 2 }], 8).unwrap().m(), 0);
    }

    #[test]
    fn path_cap_is_enforced() {
        let k4 = Network {
            nodes: 4,
            edges: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
                .iter()
                .map(|&(u, v)| NetworkEdge { u, v, capacity: 1.0 })
                .collect(),
        };
        assert_eq!(enumerate_paths(&k4, 0, 3, 100).unwrap().len(), 5);
        assert!(enumerate_paths(&k4, 0, 3, 4).is_err());
    }

    #[test]
    fn ooic_examples() {
        let lin = reduce_ooic(&[ScalarUtility::Linear { c: 1.0 }; 2], 1.0, None).unwrap();
        assert!((opt(&lin, OptMode::Auto) - 1.0).abs() < 1e-12);

        let tilted = reduce_ooic(&[ScalarUtility::Linear { c: 2.0 }, ScalarUtility::Linear { c: 1.0 }], 1.0, None).unwrap();
        let grid = offline_opt_packing(&tilted, OptMode::Grid, None).unwrap();
        assert!(grid.lower <= 2.0 + 1e-12 && 2.0 <= grid.upper + 1e-12);
        assert!((grid.lower - 2.0).abs() < 1e-9);

        assert!(reduce_ooic(&[ScalarUtility::Sqrt { c: -1.0 }], 1.0, None).is_err());
        assert!(reduce_ooic(&[ScalarUtility::Sqrt { c: 1.0 }], 1.0, Some((0.5, 2.0))).is_err());
    }

    #[test]
    fn onum_example() {
        let req = UtilityRequest { path: vec![0], budget: 1.0, utility: ScalarUtility::Sqrt { c: 1.0 } };
        let inst = reduce_onum(1, &[req]).unwrap();
        let grid = offline_opt_packing(&inst, OptMode::Grid, None).unwrap();
        assert!((grid.lower - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_reduction() {
        let inst = reduce_mixed_covering_packing(vec![vec![1.0]], 1.0, vec![vec![(0, 1.0)]]).unwrap();
        assert_eq!(inst.objective.eval(&[1.0]), 1.0);
        let err = reduce_mixed_covering_packing(vec![vec![1.0, 0.0]], 2.0, vec![vec![(1, 1.0)]]).unwrap_err();
        assert!(matches!(err, PdlaError::Degenerate(_)));
        assert!((mixed_norm(0.5, 2.0) - 0.5_f64.sqrt()).abs() < 1e-15);
    }
}
