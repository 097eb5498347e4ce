//! Offline ground truth at desk scale: optimal values of small covering and
//! packing programs, a grid bracket for conjugates without a closed form, and
//! the weak-duality check.
//!
//! Nothing here shares code with the online solvers.

use serde::{Deserialize, Serialize};

use crate::covering::DualSolution;
use crate::error::{PdlaError, Result};
use crate::model::{CoveringInstance, PackingInstance, SparseRow};
use crate::objective::ConvexObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    ExactLpEnumeration,
    Simplex,
    GridRefinement,
    DensityGreedy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMode {
    #[default]
    Auto,
    Grid,
    Enum,
    Greedy,
}

impl std::str::FromStr for OptMode {
    type Err = PdlaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(Self::Auto),
            "grid" => Ok(Self::Grid),
            "enum" => Ok(Self::Enum),
            "greedy" => Ok(Self::Greedy),
            other => Err(PdlaError::InvalidInput(format!("unknown oracle mode `{other}`"))),
        }
    }
}

/// Bracketed optimal value. `point` is the best solution found: feasible for
/// covering with `f(point) = upper`, feasible for packing with
/// `g(point) = lower`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptEstimate {
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
    pub method: OptMethod,
    pub gap_bound: f64,
    pub point: Vec<f64>,
}

impl OptEstimate {
    fn exact(value: f64, method: OptMethod, point: Vec<f64>) -> Self {
        Self { value, lower: value, upper: value, method, gap_bound: 0.0, point }
    }
}

const MAX_GRID_POINTS: usize = 20_000;
const MAX_VERTEX_SUBSETS: f64 = 2e6;
const MAX_GRID_DIM: usize = 6;
const PIVOT_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// dense linear algebra

/// Solves the square system `m z = rhs`; `None` when singular.
fn solve_dense(mut m: Vec<Vec<f64>>, mut rhs: Vec<f64>) -> Option<Vec<f64>> {
    let n = rhs.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[piv][col].abs() < 1e-12 {
            return None;
        }
        m.swap(col, piv);
        rhs.swap(col, piv);
        for r in col + 1..n {
            let factor = m[r][col] / m[col][col];
            if factor != 0.0 {
                for c in col..n {
                    m[r][c] -= factor * m[col][c];
                }
                rhs[r] -= factor * rhs[col];
            }
        }
    }
    let mut z = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|c| m[r][c] * z[c]).sum();
        z[r] = (rhs[r] - s) / m[r][r];
    }
    Some(z)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Visits every basic solution of `{G z >= h} ∪ {z >= 0}` that is feasible
/// within `tol`. Each inequality is `(g, h)`.
fn for_each_vertex(dim: usize, cons: &[(Vec<f64>, f64)], tol: f64, mut visit: impl FnMut(&[f64])) -> Result<()> {
    if dim == 0 {
        return Ok(());
    }
    let total = cons.len() + dim;
    if binomial(total, dim) > MAX_VERTEX_SUBSETS {
        return Err(PdlaError::OracleLimit(format!(
            "vertex enumeration over {total} constraints in dimension {dim} is too large"
        )));
    }
    let row = |k: usize| -> (Vec<f64>, f64) {
        if k < cons.len() {
            cons[k].clone()
        } else {
            let mut e = vec![0.0; dim];
            e[k - cons.len()] = 1.0;
            (e, 0.0)
        }
    };
    let mut subset: Vec<usize> = (0..dim).collect();
    loop {
        let (m, rhs): (Vec<_>, Vec<_>) = subset.iter().map(|&k| row(k)).unzip();
        if let Some(z) = solve_dense(m, rhs) {
            let ok = z.iter().all(|v| *v >= -tol)
                && cons.iter().all(|(g, h)| g.iter().zip(&z).map(|(a, b)| a * b).sum::<f64>() >= h - tol);
            if ok {
                let z: Vec<f64> = z.into_iter().map(|v| v.max(0.0)).collect();
                visit(&z);
            }
        }
        // next combination in lexicographic order
        let mut i = dim;
        while i > 0 && subset[i - 1] == total - dim + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return Ok(());
        }
        subset[i - 1] += 1;
        for k in i..dim {
            subset[k] = subset[k - 1] + 1;
        }
    }
}

/// Optimal primal and dual solutions of `max w^T y` s.t. `M y <= b`, `y >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub value: f64,
    pub primal: Vec<f64>,
    /// Shadow prices of the `M y <= b` constraints.
    pub dual: Vec<f64>,
}

/// Tableau simplex with Bland's rule. Needs `b >= 0`, so the slack basis is
/// feasible from the start.
pub fn simplex_packing(m: &[Vec<f64>], b: &[f64], w: &[f64]) -> Result<LpSolution> {
    let rows = b.len();
    let vars = w.len();
    if m.len() != rows || m.iter().any(|r| r.len() != vars) {
        return Err(PdlaError::InvalidInput("constraint matrix shape does not match b and w".into()));
    }
    if b.iter().any(|v| *v < 0.0) {
        return Err(PdlaError::InvalidInput("simplex needs b >= 0".into()));
    }
    let width = vars + rows + 1;
    let mut t: Vec<Vec<f64>> = (0..rows)
        .map(|r| {
            let mut line = vec![0.0; width];
            line[..vars].copy_from_slice(&m[r]);
            line[vars + r] = 1.0;
            line[width - 1] = b[r];
            line
        })
        .collect();
    let mut obj = vec![0.0; width];
    for (o, wi) in obj.iter_mut().zip(w) {
        *o = -wi;
    }
    let mut basis: Vec<usize> = (vars..vars + rows).collect();

    for _ in 0..100_000 {
        let Some(enter) = (0..vars + rows).find(|&c| obj[c] < -PIVOT_EPS) else {
            let mut primal = vec![0.0; vars];
            for (r, &bv) in basis.iter().enumerate() {
                if bv < vars {
                    primal[bv] = t[r][width - 1].max(0.0);
                }
            }
            let dual = (0..rows).map(|r| obj[vars + r].max(0.0)).collect();
            return Ok(LpSolution { value: obj[width - 1], primal, dual });
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..rows {
            if t[r][enter] > PIVOT_EPS {
                let ratio = t[r][width - 1] / t[r][enter];
                leave = match leave {
                    Some((lr, best)) if ratio > best + 1e-15 || (ratio >= best - 1e-15 && basis[r] > basis[lr]) => {
                        Some((lr, best))
                    }
                    _ => Some((r, ratio)),
                };
            }
        }
        let Some((pr, _)) = leave else {
            return Err(PdlaError::Degenerate("packing LP is unbounded".into()));
        };
        let pv = t[pr][enter];
        for v in t[pr].iter_mut() {
            *v /= pv;
        }
        let pivot_row = t[pr].clone();
        for (r, line) in t.iter_mut().enumerate() {
            if r != pr && line[enter] != 0.0 {
                let f = line[enter];
                for (v, p) in line.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
            }
        }
        let f = obj[enter];
        for (v, p) in obj.iter_mut().zip(&pivot_row) {
            *v -= f * p;
        }
        basis[pr] = enter;
    }
    Err(PdlaError::OracleLimit("simplex iteration limit reached".into()))
}

// ---------------------------------------------------------------------------
// covering

fn linear_costs(oracle: &dyn ConvexObjective) -> Option<Vec<f64>> {
    oracle.constant_gradient().then(|| oracle.grad(&vec![0.0; oracle.dim()]))
}

/// Scales `x` up so that every row holds exactly; `None` if some row sees 0.
fn lift_to_feasible(rows: &[SparseRow], x: &[f64]) -> Option<Vec<f64>> {
    let s = rows.iter().map(|r| r.dot(x)).fold(f64::INFINITY, f64::min);
    if rows.is_empty() {
        return Some(x.to_vec());
    }
    if !(s > 0.0) {
        return None;
    }
    Some(if s < 1.0 { x.iter().map(|v| v / s).collect() } else { x.to_vec() })
}

/// Offline optimum of `min f(x)` s.t. `A x >= 1`, `x >= 0`.
///
/// `resolution` is the number of grid points per axis (grid mode only); when
/// `None` it is chosen to keep the grid near twenty thousand points.
pub fn offline_opt_covering(instance: &CoveringInstance, mode: OptMode, resolution: Option<usize>) -> Result<OptEstimate> {
    let n = instance.n;
    let oracle = instance.objective.as_ref();
    if instance.rows.is_empty() {
        return Ok(OptEstimate::exact(0.0, OptMethod::ExactLpEnumeration, vec![0.0; n]));
    }
    let costs = linear_costs(oracle);
    match (mode, costs) {
        (OptMode::Enum, Some(c)) => covering_enumeration(instance, &c),
        (OptMode::Enum, None) => Err(PdlaError::OracleLimit("enumeration mode needs a linear objective".into())),
        (OptMode::Greedy, _) => Err(PdlaError::OracleLimit("greedy mode applies to packing only".into())),
        (OptMode::Auto, Some(c)) => covering_simplex(instance, &c),
        (OptMode::Auto | OptMode::Grid, _) => covering_grid(instance, resolution),
    }
}

fn covering_enumeration(instance: &CoveringInstance, costs: &[f64]) -> Result<OptEstimate> {
    let n = instance.n;
    let cons: Vec<(Vec<f64>, f64)> = instance
        .rows
        .iter()
        .map(|r| {
            let mut g = vec![0.0; n];
            for e in r.entries() {
                g[e.j] = e.a;
            }
            (g, 1.0)
        })
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_vertex(n, &cons, 1e-9, |z| {
        let v: f64 = costs.iter().zip(z).map(|(c, x)| c * x).sum();
        if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
            best = Some((v, z.to_vec()));
        }
    })?;
    let (_, point) = best.ok_or_else(|| PdlaError::Degenerate("covering program has no vertex".into()))?;
    let point = lift_to_feasible(&instance.rows, &point)
        .ok_or_else(|| PdlaError::Degenerate("covering program is infeasible".into()))?;
    let value = instance.objective.eval(&point);
    Ok(OptEstimate::exact(value, OptMethod::ExactLpEnumeration, point))
}

/// Solves the linear covering program through its packing dual
/// `max 1^T y` s.t. `A^T y <= c`; the optimal `x` is read off the shadow prices.
fn covering_simplex(instance: &CoveringInstance, costs: &[f64]) -> Result<OptEstimate> {
    let n = instance.n;
    let m = instance.rows.len();
    let mut mat = vec![vec![0.0; m]; n];
    for (i, r) in instance.rows.iter().enumerate() {
        for e in r.entries() {
            mat[e.j][i] = e.a;
        }
    }
    let lp = simplex_packing(&mat, costs, &vec![1.0; m])?;
    let point = lift_to_feasible(&instance.rows, &lp.dual)
        .ok_or_else(|| PdlaError::Degenerate("covering program is infeasible".into()))?;
    let value = instance.objective.eval(&point);
    // dual value is a valid lower bound; both agree at optimality up to roundoff
    let lower = lp.value.min(value);
    Ok(OptEstimate { value, lower, upper: value, method: OptMethod::Simplex, gap_bound: value - lower, point })
}

pub(crate) fn default_resolution(dim: usize, budget: usize) -> usize {
    let r = (budget as f64).powf(1.0 / dim.max(1) as f64).floor() as usize;
    r.clamp(3, 401)
}

/// Calls `visit` on every point of the product grid `lo_k + i h_k`.
fn for_each_grid_point(lo: &[f64], h: &[f64], res: usize, mut visit: impl FnMut(&[f64])) {
    let dim = lo.len();
    let mut idx = vec![0usize; dim];
    let mut z = lo.to_vec();
    loop {
        visit(&z);
        let mut k = 0;
        loop {
            if k == dim {
                return;
            }
            idx[k] += 1;
            if idx[k] < res {
                z[k] = lo[k] + idx[k] as f64 * h[k];
                break;
            }
            idx[k] = 0;
            z[k] = lo[k];
            k += 1;
        }
    }
}

/// Convexity gives `OPT >= f(p) + min_x <grad f(p), x - p>` over the feasible
/// region; the inner minimum is a linear covering program.
fn linearized_lower(instance: &CoveringInstance, p: &[f64]) -> Option<f64> {
    let oracle = instance.objective.as_ref();
    let g = oracle.grad(p);
    let mut mat = vec![vec![0.0; instance.rows.len()]; instance.n];
    for (i, r) in instance.rows.iter().enumerate() {
        for e in r.entries() {
            mat[e.j][i] = e.a;
        }
    }
    let lp = simplex_packing(&mat, &g, &vec![1.0; instance.rows.len()]).ok()?;
    let at_p: f64 = g.iter().zip(p).map(|(a, b)| a * b).sum();
    let bound = oracle.eval(p) - at_p + lp.value;
    bound.is_finite().then_some(bound)
}

fn covering_grid(instance: &CoveringInstance, resolution: Option<usize>) -> Result<OptEstimate> {
    let n = instance.n;
    if n > MAX_GRID_DIM {
        return Err(PdlaError::OracleLimit(format!("grid mode supports n <= {MAX_GRID_DIM}, got {n}")));
    }
    let oracle = instance.objective.as_ref();
    let res = resolution.unwrap_or_else(|| default_resolution(n, MAX_GRID_POINTS)).max(3);

    // an optimum exists with x_j <= 1 / (smallest coefficient of column j)
    let mut top = vec![0.0_f64; n];
    for r in &instance.rows {
        for e in r.entries() {
            top[e.j] = top[e.j].max(1.0 / e.a);
        }
    }
    // one extra spacing so that rounding an optimum up stays on the grid
    let h: Vec<f64> = top.iter().map(|t| t / (res as f64 - 2.0)).collect();
    let lo = vec![0.0; n];

    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut lower = f64::INFINITY;
    let mut g = vec![0.0; n];
    let consider = |z: &[f64], best: &mut Option<(f64, Vec<f64>)>| {
        if let Some(x) = lift_to_feasible(&instance.rows, z) {
            let v = oracle.eval(&x);
            if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                *best = Some((v, x));
            }
        }
    };
    for_each_grid_point(&lo, &h, res, |z| {
        consider(z, &mut best);
        // the grid point just above an optimum is feasible, and for it
        // f(z) <= OPT + <grad f(z), z - x*> <= OPT + <grad f(z), h>
        if instance.rows.iter().all(|r| r.dot(z) >= 1.0 - 1e-12) {
            oracle.grad_into(z, &mut g);
            let slack: f64 = g.iter().zip(&h).map(|(gj, hj)| gj * hj).sum();
            lower = lower.min(oracle.eval(z) - slack);
        }
    });
    if best.is_none() {
        return Err(PdlaError::Degenerate("covering program is infeasible".into()));
    }
    let lower = if lower.is_finite() { lower.max(0.0) } else { 0.0 };

    let mut span = h.clone();
    for _ in 0..2 {
        let centre = best.as_ref().map(|(_, x)| x.clone()).unwrap_or_default();
        let lo: Vec<f64> = centre.iter().zip(&span).map(|(c, s)| (c - s).max(0.0)).collect();
        let step: Vec<f64> = span.iter().map(|s| 2.0 * s / (res as f64 - 1.0)).collect();
        for_each_grid_point(&lo, &step, res, |z| consider(z, &mut best));
        span = step;
    }
    let (upper, point) = best.unwrap();
    let lower = linearized_lower(instance, &point).map_or(lower, |l| l.max(lower));
    Ok(OptEstimate {
        value: upper,
        lower: lower.min(upper),
        upper,
        method: OptMethod::GridRefinement,
        gap_bound: upper - lower.min(upper),
        point,
    })
}

// ---------------------------------------------------------------------------
// packing

/// Offline optimum of `max g(y)` s.t. `A^T y <= b`, `y >= 0`.
pub fn offline_opt_packing(instance: &PackingInstance, mode: OptMode, resolution: Option<usize>) -> Result<OptEstimate> {
    let m = instance.m();
    if m == 0 {
        return Ok(OptEstimate::exact(0.0, OptMethod::ExactLpEnumeration, Vec::new()));
    }
    let weights = instance.spec.as_ref().and_then(|s| s.linear_weights(m));
    match (mode, weights) {
        (OptMode::Greedy, Some(w)) => packing_greedy(instance, &w),
        (OptMode::Enum, Some(w)) => packing_enumeration(instance, &w),
        (OptMode::Greedy | OptMode::Enum, None) => {
            Err(PdlaError::OracleLimit("greedy and enumeration modes need a linear utility".into()))
        }
        (OptMode::Auto, Some(w)) => match packing_greedy(instance, &w) {
            Err(PdlaError::OracleLimit(_)) => packing_simplex(instance, &w),
            other => other,
        },
        (OptMode::Auto | OptMode::Grid, _) => packing_grid(instance, resolution),
    }
}

fn packing_matrix(instance: &PackingInstance) -> Vec<Vec<f64>> {
    let mut mat = vec![vec![0.0; instance.m()]; instance.n];
    for (i, r) in instance.rows.iter().enumerate() {
        for e in r.entries() {
            mat[e.j][i] = e.a;
        }
    }
    mat
}

fn packing_simplex(instance: &PackingInstance, w: &[f64]) -> Result<OptEstimate> {
    let lp = simplex_packing(&packing_matrix(instance), &instance.b, w)?;
    let value = instance.value(&lp.primal);
    Ok(OptEstimate::exact(value, OptMethod::Simplex, lp.primal))
}

/// Fractional knapsack by density, for instances with at most one constraint
/// shared by several variables; every other constraint caps a single variable.
fn packing_greedy(instance: &PackingInstance, w: &[f64]) -> Result<OptEstimate> {
    let m = instance.m();
    let mut users = vec![0usize; instance.n];
    for r in &instance.rows {
        for e in r.entries() {
            users[e.j] += 1;
        }
    }
    let shared: Vec<usize> = (0..instance.n).filter(|&j| users[j] > 1).collect();
    if shared.len() > 1 {
        return Err(PdlaError::OracleLimit("density greedy needs at most one shared constraint".into()));
    }
    let shared = shared.first().copied();

    let mut cap = vec![f64::INFINITY; m];
    for (i, r) in instance.rows.iter().enumerate() {
        for e in r.entries().iter().filter(|e| Some(e.j) != shared) {
            cap[i] = cap[i].min(instance.b[e.j] / e.a);
        }
    }
    let mut y = vec![0.0; m];
    let mut order: Vec<usize> = (0..m).filter(|&i| w[i] > 0.0).collect();
    match shared {
        None => {
            for &i in &order {
                if cap[i].is_infinite() {
                    return Err(PdlaError::Degenerate(format!("variable {i} is unbounded")));
                }
                y[i] = cap[i];
            }
        }
        Some(s) => {
            let coef = |i: usize| instance.rows[i].coefficient(s);
            // ties broken by index for determinism
            order.sort_by(|&p, &q| {
                let dp = if coef(p) > 0.0 { w[p] / coef(p) } else { f64::INFINITY };
                let dq = if coef(q) > 0.0 { w[q] / coef(q) } else { f64::INFINITY };
                dq.total_cmp(&dp).then(p.cmp(&q))
            });
            let mut room = instance.b[s];
            for &i in &order {
                let a = coef(i);
                let take = if a > 0.0 { cap[i].min(room / a) } else { cap[i] };
                if take.is_infinite() {
                    return Err(PdlaError::Degenerate(format!("variable {i} is unbounded")));
                }
                y[i] = take.max(0.0);
                room = (room - a * y[i]).max(0.0);
            }
        }
    }
    let value = instance.value(&y);
    Ok(OptEstimate::exact(value, OptMethod::DensityGreedy, y))
}

fn packing_enumeration(instance: &PackingInstance, w: &[f64]) -> Result<OptEstimate> {
    let m = instance.m();
    let cons: Vec<(Vec<f64>, f64)> = packing_matrix(instance)
        .into_iter()
        .zip(&instance.b)
        .map(|(row, b)| (row.into_iter().map(|a| -a).collect(), -b))
        .collect();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for_each_vertex(m, &cons, 1e-9, |z| {
        let v: f64 = w.iter().zip(z).map(|(c, y)| c * y).sum();
        if best.as_ref().is_none_or(|(bv, _)| v > *bv) {
            best = Some((v, z.to_vec()));
        }
    })?;
    let (_, y) = best.ok_or_else(|| PdlaError::Degenerate("packing program has no vertex".into()))?;
    // pull back any roundoff excess
    let scale = instance.violation(&y).max(1.0);
    let y: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let value = instance.value(&y);
    Ok(OptEstimate::exact(value, OptMethod::ExactLpEnumeration, y))
}

fn packing_grid(instance: &PackingInstance, resolution: Option<usize>) -> Result<OptEstimate> {
    let m = instance.m();
    if m > MAX_GRID_DIM {
        return Err(PdlaError::OracleLimit(format!("grid mode supports m <= {MAX_GRID_DIM}, got {m}")));
    }
    let res = resolution.unwrap_or_else(|| default_resolution(m, MAX_GRID_POINTS)).max(3);
    let mut top = vec![f64::INFINITY; m];
    for (i, r) in instance.rows.iter().enumerate() {
        for e in r.entries() {
            top[i] = top[i].min(instance.b[e.j] / e.a);
        }
        if top[i].is_infinite() {
            return Err(PdlaError::Degenerate(format!("variable {i} is unbounded")));
        }
    }
    let feasible = |y: &[f64]| instance.load(y).iter().zip(&instance.b).all(|(l, b)| *l <= b * (1.0 + 1e-12) + 1e-15);

    let mut h: Vec<f64> = top.iter().map(|t| t / (res as f64 - 1.0)).collect();
    let mut best: (f64, Vec<f64>) = (0.0, vec![0.0; m]);
    let consider = |y: &[f64], best: &mut (f64, Vec<f64>)| {
        if feasible(y) {
            let v = instance.value(y);
            if v > best.0 {
                *best = (v, y.to_vec());
            }
        }
    };
    for_each_grid_point(&vec![0.0; m], &h, res, |y| consider(y, &mut best));
    // an optimum rounded down stays feasible, and g is subadditive
    let upper = best.0 + instance.value(&h);
    for _ in 0..2 {
        let lo: Vec<f64> = best.1.iter().zip(&h).map(|(c, s)| (c - s).max(0.0)).collect();
        h = h.iter().map(|s| 2.0 * s / (res as f64 - 1.0)).collect();
        for_each_grid_point(&lo, &h, res, |y| consider(y, &mut best));
    }
    let (lower, point) = best;
    Ok(OptEstimate {
        value: lower,
        lower,
        upper: upper.max(lower),
        method: OptMethod::GridRefinement,
        gap_bound: upper.max(lower) - lower,
        point,
    })
}

// ---------------------------------------------------------------------------
// conjugates and duality

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConjugateBracket {
    pub lower: f64,
    pub upper: f64,
    pub argmax: Vec<f64>,
}

impl ConjugateBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Brackets `sup_z { mu^T z - f(z) }` over the box `[0, domain_box]`.
///
/// The lower end is attained at `argmax`; the upper end adds half a grid
/// spacing times the largest gradient of the concave maximand seen on the
/// coarse grid. Both ends refer to the box: the caller vouches that the box
/// holds the maximiser.
pub fn conjugate_fallback(
    oracle: &dyn ConvexObjective,
    mu: &[f64],
    domain_box: &[f64],
    resolution: Option<usize>,
) -> Result<ConjugateBracket> {
    let n = oracle.dim();
    if mu.len() != n || domain_box.len() != n {
        return Err(PdlaError::DimensionMismatch { expected: n, got: mu.len().min(domain_box.len()) });
    }
    if n > MAX_GRID_DIM {
        return Err(PdlaError::OracleLimit(format!("conjugate grid supports n <= {MAX_GRID_DIM}, got {n}")));
    }
    let res = resolution.unwrap_or_else(|| default_resolution(n, MAX_GRID_POINTS)).max(3);
    let phi = |z: &[f64]| mu.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() - oracle.eval(z);

    let mut h: Vec<f64> = domain_box.iter().map(|t| t / (res as f64 - 1.0)).collect();
    let mut best = (phi(&vec![0.0; n]), vec![0.0; n]);
    let mut slope: f64 = 0.0;
    let mut g = vec![0.0; n];
    for_each_grid_point(&vec![0.0; n], &h, res, |z| {
        let v = phi(z);
        if v > best.0 {
            best = (v, z.to_vec());
        }
        oracle.grad_into(z, &mut g);
        slope = slope.max(mu.iter().zip(&g).zip(&h).map(|((m, gj), hj)| (m - gj).abs() * hj).sum());
    });
    let upper = best.0 + 0.5 * slope;
    for _ in 0..2 {
        let lo: Vec<f64> = best.1.iter().zip(&h).map(|(c, s)| (c - s).max(0.0)).collect();
        h = h.iter().map(|s| 2.0 * s / (res as f64 - 1.0)).collect();
        for_each_grid_point(&lo, &h, res, |z| {
            if z.iter().zip(domain_box).all(|(a, b)| a <= b) {
                let v = phi(z);
                if v > best.0 {
                    best = (v, z.to_vec());
                }
            }
        });
    }
    let (lower, argmax) = best;
    let bracket = ConjugateBracket { lower, upper: upper.max(lower), argmax };
    if bracket.width() > 1e-3 * (1.0 + lower.abs()) {
        log::warn!("conjugate bracket is wide: [{}, {}]", bracket.lower, bracket.upper);
    }
    Ok(bracket)
}

/// `f(x) >= sum y - f*(mu) - tol`.
pub fn weak_duality_check(primal_value: f64, dual: &DualSolution, tol: f64) -> bool {
    primal_value >= dual.objective - tol
}
