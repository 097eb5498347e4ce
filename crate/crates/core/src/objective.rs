//! Objective oracles for covering (convex, minimised) and packing (concave,
//! maximised) programs.
//!
//! Covering objectives implement [`ConvexObjective`]; packing utilities
//! implement [`ConcaveUtility`]. The built-in families are serialisable through
//! [`ObjectiveSpec`] and [`UtilitySpec`] so they can live in instance files.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};

/// Tolerance used when deciding whether a dual vector lies in the domain of a
/// conjugate that is an indicator function.
const CONJUGATE_DOMAIN_TOL: f64 = 1e-9;

/// A convex, monotone, differentiable objective with `f(0) = 0`.
pub trait ConvexObjective: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, x: &[f64]) -> f64;

    /// Writes the gradient at `x` into `out`.
    fn grad_into(&self, x: &[f64], out: &mut [f64]);

    fn grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim()];
        self.grad_into(x, &mut g);
        g
    }

    /// Closed-form Fenchel conjugate `sup_z mu.z - f(z)`, when one is known.
    /// `Some(f64::INFINITY)` means `mu` lies outside the conjugate's domain.
    fn conjugate(&self, _mu: &[f64]) -> Option<f64> {
        None
    }

    /// Declared growth exponent `p >= sup <x, grad f(x)> / f(x)`.
    fn growth_exponent(&self) -> f64;

    fn monotone_gradient(&self) -> bool;

    /// Degree `q` such that `f(t z) = t^q f(z)` for `t > 0`.
    fn homogeneous_degree(&self) -> Option<f64> {
        None
    }

    /// True when the gradient does not depend on `x` (linear objectives).
    fn constant_gradient(&self) -> bool {
        false
    }

    /// True when coordinate `j` never influences the objective.
    fn is_free(&self, _j: usize) -> bool {
        false
    }
}

impl fmt::Debug for dyn ConvexObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ConvexObjective(dim={}, p={})", self.dim(), self.growth_exponent())
    }
}

/// `f(x) = c . x` with `c >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearObjective {
    costs: Vec<f64>,
}

impl LinearObjective {
    pub fn new(costs: Vec<f64>) -> Result<Self> {
        if costs.is_empty() {
            return Err(PdlaError::InvalidInput("linear objective needs at least one cost".into()));
        }
        if let Some(c) = costs.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
            return Err(PdlaError::InvalidInput(format!("linear cost {c} must be finite and >= 0")));
        }
        Ok(Self { costs })
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }
}

impl ConvexObjective for LinearObjective {
    fn dim(&self) -> usize {
        self.costs.len()
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.costs.iter().zip(x).map(|(c, v)| c * v).sum()
    }

    fn grad_into(&self, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.costs);
    }

    fn conjugate(&self, mu: &[f64]) -> Option<f64> {
        let inside = mu
            .iter()
            .zip(&self.costs)
            .all(|(m, c)| *m <= c + CONJUGATE_DOMAIN_TOL * (1.0 + c.abs()));
        Some(if inside { 0.0 } else { f64::INFINITY })
    }

    fn growth_exponent(&self) -> f64 {
        1.0
    }

    fn monotone_gradient(&self) -> bool {
        true
    }

    fn homogeneous_degree(&self) -> Option<f64> {
        Some(1.0)
    }

    fn constant_gradient(&self) -> bool {
        true
    }

    fn is_free(&self, j: usize) -> bool {
        self.costs[j] == 0.0
    }
}

/// `f(x) = ||B x||_q^q` for a nonnegative `k x n` matrix `B` and `q >= 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerNormObjective {
    b: Vec<Vec<f64>>,
    q: f64,
    n: usize,
}

impl PowerNormObjective {
    pub fn new(b: Vec<Vec<f64>>, q: f64) -> Result<Self> {
        if !(q.is_finite() && q >= 1.0) {
            return Err(PdlaError::InvalidInput(format!("power norm exponent q = {q} must be >= 1")));
        }
        let n = b.first().map(Vec::len).unwrap_or(0);
        if n == 0 {
            return Err(PdlaError::InvalidInput("matrix B must be non-empty".into()));
        }
        for row in &b {
            if row.len() != n {
                return Err(PdlaError::DimensionMismatch { expected: n, got: row.len() });
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(PdlaError::InvalidInput(format!("B entry {v} must be finite and >= 0")));
            }
        }
        Ok(Self { b, q, n })
    }

    pub fn identity(n: usize, q: f64) -> Result<Self> {
        let b = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::new(b, q)
    }

    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.b
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    fn product(row: &[f64], x: &[f64]) -> f64 {
        row.iter().zip(x).map(|(b, v)| b * v).sum::<f64>().max(0.0)
    }

    fn column_sums(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.b.iter().map(|row| row[j]).sum()).collect()
    }
}

impl ConvexObjective for PowerNormObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.b.iter().map(|row| Self::product(row, x).powf(self.q)).sum()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|g| *g = 0.0);
        for row in &self.b {
            let bx = Self::product(row, x);
            let w = if self.q == 1.0 { 1.0 } else { bx.powf(self.q - 1.0) };
            if w == 0.0 {
                continue;
            }
            for (g, b) in out.iter_mut().zip(row) {
                *g += self.q * b * w;
            }
        }
    }

    fn conjugate(&self, mu: &[f64]) -> Option<f64> {
        if self.q == 1.0 {
            let c = self.column_sums();
            let inside = mu
                .iter()
                .zip(&c)
                .all(|(m, c)| *m <= c + CONJUGATE_DOMAIN_TOL * (1.0 + c.abs()));
            Some(if inside { 0.0 } else { f64::INFINITY })
        } else {
            None
        }
    }

    fn growth_exponent(&self) -> f64 {
        self.q
    }

    fn monotone_gradient(&self) -> bool {
        true
    }

    fn homogeneous_degree(&self) -> Option<f64> {
        Some(self.q)
    }

    fn constant_gradient(&self) -> bool {
        self.q == 1.0
    }

    fn is_free(&self, j: usize) -> bool {
        self.b.iter().all(|row| row[j] == 0.0)
    }
}

/// One term `c ||x(S)||_q` of an [`LqSumObjective`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LqGroup {
    pub indices: Vec<usize>,
    pub c: f64,
    pub q: f64,
}

impl LqGroup {
    /// Hoelder conjugate exponent `p` with `1/p + 1/q = 1`.
    pub fn dual_exponent(&self) -> f64 {
        if self.q == 1.0 {
            f64::INFINITY
        } else {
            self.q / (self.q - 1.0)
        }
    }
}

pub const DEFAULT_EPS_GRAD: f64 = 1e-12;

/// `f(x) = sum_e c_e ||x(S_e)||_{q_e}` over pairwise disjoint index sets.
#[derive(Debug, Clone, PartialEq)]
pub struct LqSumObjective {
    n: usize,
    groups: Vec<LqGroup>,
    membership: Vec<Option<usize>>,
    eps_grad: f64,
}

impl LqSumObjective {
    pub fn new(n: usize, groups: Vec<LqGroup>) -> Result<Self> {
        let mut membership = vec![None; n];
        for (e, g) in groups.iter().enumerate() {
            if !(g.c.is_finite() && g.c >= 0.0) {
                return Err(PdlaError::InvalidInput(format!("group {e}: c = {} must be >= 0", g.c)));
            }
            if !(g.q.is_finite() && g.q >= 1.0) {
                return Err(PdlaError::InvalidInput(format!("group {e}: q = {} must be >= 1", g.q)));
            }
            if g.indices.is_empty() {
                return Err(PdlaError::InvalidInput(format!("group {e} has no indices")));
            }
            for &j in &g.indices {
                if j >= n {
                    return Err(PdlaError::InvalidInput(format!("group {e}: index {j} out of range for n = {n}")));
                }
                if let Some(other) = membership[j] {
                    return Err(PdlaError::InvalidInput(format!(
                        "groups {other} and {e} share index {j}; only disjoint groups are supported \
                         (overlapping groups need the copy-per-group reduction with one constraint per \
                         copy combination)"
                    )));
                }
                membership[j] = Some(e);
            }
        }
        Ok(Self { n, groups, membership, eps_grad: DEFAULT_EPS_GRAD })
    }

    pub fn with_eps_grad(mut self, eps_grad: f64) -> Self {
        self.eps_grad = eps_grad;
        self
    }

    pub fn groups(&self) -> &[LqGroup] {
        &self.groups
    }

    pub fn group_of(&self, j: usize) -> Option<usize> {
        self.membership[j]
    }

    pub fn eps_grad(&self) -> f64 {
        self.eps_grad
    }

    pub fn largest_group(&self) -> usize {
        self.groups.iter().map(|g| g.indices.len()).max().unwrap_or(0)
    }

    fn group_norm(&self, g: &LqGroup, x: &[f64]) -> f64 {
        if g.q == 1.0 {
            g.indices.iter().map(|&k| x[k].max(0.0)).sum()
        } else {
            g.indices
                .iter()
                .map(|&k| x[k].max(0.0).powf(g.q))
                .sum::<f64>()
                .powf(1.0 / g.q)
        }
    }
}

impl ConvexObjective for LqSumObjective {
    fn dim(&self) -> usize {
        self.n
    }

    fn eval(&self, x: &[f64]) -> f64 {
        self.groups.iter().map(|g| g.c * self.group_norm(g, x)).sum()
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for g in &self.groups {
            if g.q == 1.0 {
                for &j in &g.indices {
                    out[j] = g.c;
                }
                continue;
            }
            if self.group_norm(g, x) == 0.0 {
                // limit of the partial derivative along e_j at the group origin
                for &j in &g.indices {
                    out[j] = g.c;
                }
                continue;
            }
            let smoothed = |k: usize| x[k].max(self.eps_grad);
            let total: f64 = g.indices.iter().map(|&k| smoothed(k).powf(g.q)).sum();
            let scale = total.powf(1.0 / g.q - 1.0);
            for &j in &g.indices {
                out[j] = g.c * smoothed(j).powf(g.q - 1.0) * scale;
            }
        }
    }

    fn conjugate(&self, mu: &[f64]) -> Option<f64> {
        for (j, m) in mu.iter().enumerate() {
            if self.membership[j].is_none() && m.abs() > CONJUGATE_DOMAIN_TOL {
                return Some(f64::INFINITY);
            }
        }
        for g in &self.groups {
            let norm = crate::model::pnorm(g.indices.iter().map(|&j| mu[j].max(0.0)), g.dual_exponent());
            if norm > g.c + CONJUGATE_DOMAIN_TOL * (1.0 + g.c) {
                return Some(f64::INFINITY);
            }
        }
        Some(0.0)
    }

    fn growth_exponent(&self) -> f64 {
        1.0
    }

    fn monotone_gradient(&self) -> bool {
        self.groups.iter().all(|g| g.q == 1.0)
    }

    fn homogeneous_degree(&self) -> Option<f64> {
        Some(1.0)
    }

    fn constant_gradient(&self) -> bool {
        self.groups.iter().all(|g| g.q == 1.0)
    }

    fn is_free(&self, j: usize) -> bool {
        match self.membership[j] {
            None => true,
            Some(e) => self.groups[e].c == 0.0,
        }
    }
}

type EvalFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;
type ConjFn = dyn Fn(&[f64]) -> f64 + Send + Sync;

/// Objective assembled from closures, for oracles that have no built-in form.
#[derive(Clone)]
pub struct FnObjective {
    dim: usize,
    eval: Arc<EvalFn>,
    grad: Arc<GradFn>,
    conjugate: Option<Arc<ConjFn>>,
    p: f64,
    monotone_gradient: bool,
    homogeneous_degree: Option<f64>,
}

impl FnObjective {
    pub fn new(
        dim: usize,
        p: f64,
        eval: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            eval: Arc::new(eval),
            grad: Arc::new(grad),
            conjugate: None,
            p,
            monotone_gradient: false,
            homogeneous_degree: None,
        }
    }

    pub fn with_conjugate(mut self, conj: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.conjugate = Some(Arc::new(conj));
        self
    }

    pub fn with_monotone_gradient(mut self, declared: bool) -> Self {
        self.monotone_gradient = declared;
        self
    }

    pub fn with_homogeneous_degree(mut self, q: f64) -> Self {
        self.homogeneous_degree = Some(q);
        self
    }
}

impl fmt::Debug for FnObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnObjective").field("dim", &self.dim).field("p", &self.p).finish()
    }
}

impl ConvexObjective for FnObjective {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    fn grad_into(&self, x: &[f64], out: &mut [f64]) {
        (self.grad)(x, out)
    }

    fn conjugate(&self, mu: &[f64]) -> Option<f64> {
        self.conjugate.as_ref().map(|c| c(mu))
    }

    fn growth_exponent(&self) -> f64 {
        self.p
    }

    fn monotone_gradient(&self) -> bool {
        self.monotone_gradient
    }

    fn homogeneous_degree(&self) -> Option<f64> {
        self.homogeneous_degree
    }
}

/// Serialisable description of the built-in covering objectives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Linear { costs: Vec<f64> },
    PowerNorm { b: Vec<Vec<f64>>, q: f64 },
    LqSum { groups: Vec<LqGroup> },
}

impl ObjectiveSpec {
    pub fn build(&self, n: usize) -> Result<Arc<dyn ConvexObjective>> {
        let obj: Arc<dyn ConvexObjective> = match self {
            ObjectiveSpec::Linear { costs } => Arc::new(LinearObjective::new(costs.clone())?),
            ObjectiveSpec::PowerNorm { b, q } => Arc::new(PowerNormObjective::new(b.clone(), *q)?),
            ObjectiveSpec::LqSum { groups } => Arc::new(LqSumObjective::new(n, groups.clone())?),
        };
        if obj.dim() != n {
            return Err(PdlaError::DimensionMismatch { expected: n, got: obj.dim() });
        }
        Ok(obj)
    }
}

/// A monotone concave utility `g` with `g(0) = 0`, over the packing variables
/// revealed so far.
pub trait ConcaveUtility: Send + Sync {
    /// Evaluates `g` on a prefix `y` (missing trailing entries count as zero).
    fn eval(&self, y: &[f64]) -> f64;

    /// Partial derivative of `g` in coordinate `i` at value `yi`, when `g` is
    /// separable. Used by density-based subroutines.
    fn slope(&self, i: usize, yi: f64) -> f64;
}

/// Scalar concave pieces of a separable utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ScalarUtility {
    /// `c y`
    Linear { c: f64 },
    /// `c sqrt(y)`
    Sqrt { c: f64 },
    /// `c ln(1 + y)`
    Log1p { c: f64 },
}

impl ScalarUtility {
    pub fn eval(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        match *self {
            ScalarUtility::Linear { c } => c * y,
            ScalarUtility::Sqrt { c } => c * y.sqrt(),
            ScalarUtility::Log1p { c } => c * y.ln_1p(),
        }
    }

    pub fn slope(&self, y: f64) -> f64 {
        let y = y.max(0.0);
        match *self {
            ScalarUtility::Linear { c } => c,
            ScalarUtility::Sqrt { c } => {
                if y == 0.0 {
                    f64::INFINITY
                } else {
                    0.5 * c / y.sqrt()
                }
            }
            ScalarUtility::Log1p { c } => c / (1.0 + y),
        }
    }

    fn coefficient(&self) -> f64 {
        match *self {
            ScalarUtility::Linear { c } | ScalarUtility::Sqrt { c } | ScalarUtility::Log1p { c } => c,
        }
    }
}

/// `g(y) = sum_i w_i y_i`; absent weights default to 1.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LinearUtility {
    weights: Option<Vec<f64>>,
}

impl LinearUtility {
    pub fn unit() -> Self {
        Self { weights: None }
    }

    pub fn weighted(weights: Vec<f64>) -> Self {
        Self { weights: Some(weights) }
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w.get(i).copied().unwrap_or(0.0))
    }
}

impl ConcaveUtility for LinearUtility {
    fn eval(&self, y: &[f64]) -> f64 {
        y.iter().enumerate().map(|(i, v)| self.weight(i) * v).sum()
    }

    fn slope(&self, i: usize, _yi: f64) -> f64 {
        self.weight(i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeparableUtility {
    terms: Vec<ScalarUtility>,
}

impl SeparableUtility {
    pub fn new(terms: Vec<ScalarUtility>) -> Result<Self> {
        if let Some(t) = terms.iter().find(|t| !(t.coefficient().is_finite() && t.coefficient() >= 0.0)) {
            return Err(PdlaError::InvalidInput(format!("utility term {t:?} must have a coefficient >= 0")));
        }
        Ok(Self { terms })
    }

    pub fn terms(&self) -> &[ScalarUtility] {
        &self.terms
    }
}

impl ConcaveUtility for SeparableUtility {
    fn eval(&self, y: &[f64]) -> f64 {
        y.iter().zip(&self.terms).map(|(v, t)| t.eval(*v)).sum()
    }

    fn slope(&self, i: usize, yi: f64) -> f64 {
        self.terms.get(i).map_or(0.0, |t| t.slope(yi))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum UtilitySpec {
    Linear {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        costs: Option<Vec<f64>>,
    },
    Separable { terms: Vec<ScalarUtility> },
}

impl UtilitySpec {
    pub fn build(&self) -> Result<Arc<dyn ConcaveUtility>> {
        Ok(match self {
            UtilitySpec::Linear { costs: None } => Arc::new(LinearUtility::unit()),
            UtilitySpec::Linear { costs: Some(w) } => {
                if let Some(v) = w.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                    return Err(PdlaError::InvalidInput(format!("utility weight {v} must be >= 0")));
                }
                Arc::new(LinearUtility::weighted(w.clone()))
            }
            UtilitySpec::Separable { terms } => Arc::new(SeparableUtility::new(terms.clone())?),
        })
    }

    pub fn is_linear(&self) -> bool {
        match self {
            UtilitySpec::Linear { .. } => true,
            UtilitySpec::Separable { terms } => terms.iter().all(|t| matches!(t, ScalarUtility::Linear { .. })),
        }
    }

    /// Per-variable linear weights, when the utility is linear.
    pub fn linear_weights(&self, m: usize) -> Option<Vec<f64>> {
        match self {
            UtilitySpec::Linear { costs: None } => Some(vec![1.0; m]),
            UtilitySpec::Linear { costs: Some(w) } => Some((0..m).map(|i| w.get(i).copied().unwrap_or(0.0)).collect()),
            UtilitySpec::Separable { terms } => (0..m)
                .map(|i| match terms.get(i) {
                    Some(ScalarUtility::Linear { c }) => Some(*c),
                    None => Some(0.0),
                    _ => None,
                })
                .collect(),
        }
    }
}
