//! Shared domain types: constraint rows, instances, advice, solver traces and
//! run metrics, plus spot checks of the properties solvers assume about their
//! objectives.

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};
use crate::objective::{ConcaveUtility, ConvexObjective, ObjectiveSpec, UtilitySpec};

/// One nonzero `a_ij` of a constraint row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub j: usize,
    pub a: f64,
}

/// A row of the constraint matrix revealed in one round. Columns are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Entry>", into = "Vec<Entry>")]
pub struct SparseRow {
    entries: Vec<Entry>,
}

impl SparseRow {
    /// Builds a row over `n` columns; coefficients must be strictly positive
    /// and column indices distinct.
    pub fn new(entries: Vec<(usize, f64)>, n: usize) -> Result<Self> {
        let row = Self::unchecked(entries);
        row.check_columns(n)?;
        Ok(row)
    }

    fn unchecked(entries: Vec<(usize, f64)>) -> Self {
        Self { entries: entries.into_iter().map(|(j, a)| Entry { j, a }).collect() }
    }

    fn check_shape(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(PdlaError::InvalidInput("constraint row has no entries".into()));
        }
        for e in &self.entries {
            if !(e.a.is_finite() && e.a > 0.0) {
                return Err(PdlaError::InvalidInput(format!(
                    "coefficient {} in column {} must be finite and strictly positive",
                    e.a, e.j
                )));
            }
        }
        let mut cols: Vec<usize> = self.entries.iter().map(|e| e.j).collect();
        cols.sort_unstable();
        if cols.windows(2).any(|w| w[0] == w[1]) {
            return Err(PdlaError::InvalidInput("constraint row repeats a column".into()));
        }
        Ok(())
    }

    pub fn check_columns(&self, n: usize) -> Result<()> {
        self.check_shape()?;
        if let Some(e) = self.entries.iter().find(|e| e.j >= n) {
            return Err(PdlaError::InvalidInput(format!("column {} out of range for n = {n}", e.j)));
        }
        Ok(())
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn dot(&self, x: &[f64]) -> f64 {
        self.entries.iter().map(|e| e.a * x[e.j]).sum()
    }

    pub fn coefficient(&self, j: usize) -> f64 {
        self.entries.iter().find(|e| e.j == j).map_or(0.0, |e| e.a)
    }

    pub fn max_coefficient(&self) -> f64 {
        self.entries.iter().map(|e| e.a).fold(0.0, f64::max)
    }

    pub fn min_coefficient(&self) -> f64 {
        self.entries.iter().map(|e| e.a).fold(f64::INFINITY, f64::min)
    }
}

impl TryFrom<Vec<Entry>> for SparseRow {
    type Error = PdlaError;

    fn try_from(entries: Vec<Entry>) -> Result<Self> {
        let row = Self { entries };
        row.check_shape()?;
        Ok(row)
    }
}

impl From<SparseRow> for Vec<Entry> {
    fn from(row: SparseRow) -> Self {
        row.entries
    }
}

/// `min f(x)` subject to `A x >= 1`, `x >= 0`, with rows revealed online.
#[derive(Clone)]
pub struct CoveringInstance {
    pub n: usize,
    pub rows: Vec<SparseRow>,
    pub objective: Arc<dyn ConvexObjective>,
    /// Declared bound on row sparsity; the running maximum is used otherwise.
    pub d_bound: Option<usize>,
    /// Serialisable form of `objective`, if it is a built-in.
    pub spec: Option<ObjectiveSpec>,
}

impl std::fmt::Debug for CoveringInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoveringInstance")
            .field("n", &self.n)
            .field("rows", &self.rows.len())
            .field("d_bound", &self.d_bound)
            .finish()
    }
}

impl CoveringInstance {
    pub fn new(n: usize, rows: Vec<SparseRow>, objective: Arc<dyn ConvexObjective>) -> Result<Self> {
        if objective.dim() != n {
            return Err(PdlaError::DimensionMismatch { expected: n, got: objective.dim() });
        }
        for row in &rows {
            row.check_columns(n)?;
        }
        Ok(Self { n, rows, objective, d_bound: None, spec: None })
    }

    pub fn from_spec(n: usize, rows: Vec<SparseRow>, spec: ObjectiveSpec) -> Result<Self> {
        let objective = spec.build(n)?;
        let mut inst = Self::new(n, rows, objective)?;
        inst.spec = Some(spec);
        Ok(inst)
    }

    pub fn with_d_bound(mut self, d: usize) -> Result<Self> {
        if d == 0 {
            return Err(PdlaError::InvalidInput("row sparsity bound must be >= 1".into()));
        }
        if let Some(row) = self.rows.iter().find(|r| r.nnz() > d) {
            return Err(PdlaError::InvalidInput(format!(
                "row with {} nonzeros exceeds declared sparsity bound {d}",
                row.nnz()
            )));
        }
        self.d_bound = Some(d);
        Ok(self)
    }

    pub fn max_row_sparsity(&self) -> usize {
        self.rows.iter().map(SparseRow::nnz).max().unwrap_or(0)
    }

    /// Largest shortfall `max_i (1 - A_i x)_+`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        self.rows.iter().map(|r| (1.0 - r.dot(x)).max(0.0)).fold(0.0, f64::max)
    }

    pub fn is_feasible(&self, x: &[f64], tol: f64) -> bool {
        self.violation(x) <= tol
    }
}

/// `max g(y)` subject to `A^T y <= b`, `y >= 0`. Row `i` lists the
/// coefficients of variable `y_i` across the `n` constraints.
#[derive(Clone)]
pub struct PackingInstance {
    pub n: usize,
    pub b: Vec<f64>,
    pub rows: Vec<SparseRow>,
    pub utility: Arc<dyn ConcaveUtility>,
    pub spec: Option<UtilitySpec>,
}

impl std::fmt::Debug for PackingInstance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PackingInstance")
            .field("n", &self.n)
            .field("b", &self.b)
            .field("rows", &self.rows.len())
            .finish()
    }
}

impl PackingInstance {
    pub fn new(b: Vec<f64>, rows: Vec<SparseRow>, utility: Arc<dyn ConcaveUtility>) -> Result<Self> {
        let n = b.len();
        if let Some(v) = b.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PdlaError::InvalidInput(format!("capacity {v} must be finite and >= 0")));
        }
        for row in &rows {
            row.check_columns(n)?;
        }
        Ok(Self { n, b, rows, utility, spec: None })
    }

    pub fn from_spec(b: Vec<f64>, rows: Vec<SparseRow>, spec: UtilitySpec) -> Result<Self> {
        let utility = spec.build()?;
        let mut inst = Self::new(b, rows, utility)?;
        inst.spec = Some(spec);
        Ok(inst)
    }

    pub fn m(&self) -> usize {
        self.rows.len()
    }

    /// `A^T y` over the first `y.len()` rows.
    pub fn load(&self, y: &[f64]) -> Vec<f64> {
        let mut load = vec![0.0; self.n];
        for (row, yi) in self.rows.iter().zip(y) {
            for e in row.entries() {
                load[e.j] += e.a * yi;
            }
        }
        load
    }

    /// `max_j (A^T y)_j / b_j`, with `0/0 = 0`.
    pub fn violation(&self, y: &[f64]) -> f64 {
        self.load(y)
            .iter()
            .zip(&self.b)
            .map(|(l, b)| load_ratio(*l, *b))
            .fold(0.0, f64::max)
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.utility.eval(y)
    }

    /// Running condition number `max a / min a` over nonzeros in column `j`.
    pub fn column_condition(&self, upto: usize) -> f64 {
        let mut kappa: f64 = 1.0;
        for j in 0..self.n {
            let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
            for row in &self.rows[..upto.min(self.rows.len())] {
                let a = row.coefficient(j);
                if a > 0.0 {
                    lo = lo.min(a);
                    hi = hi.max(a);
                }
            }
            if hi > 0.0 {
                kappa = kappa.max(hi / lo);
            }
        }
        kappa
    }
}

pub(crate) fn load_ratio(load: f64, cap: f64) -> f64 {
    if cap > 0.0 {
        load / cap
    } else if load <= 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Advice vector together with the confidence parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdviceProfile {
    values: Vec<f64>,
    lambda: f64,
}

impl AdviceProfile {
    pub fn new(values: Vec<f64>, lambda: f64) -> Result<Self> {
        check_lambda(lambda)?;
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PdlaError::InvalidInput(format!("advice entry {v} must be finite and >= 0")));
        }
        Ok(Self { values, lambda })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.values.clone(), lambda)
    }
}

pub fn check_lambda(lambda: f64) -> Result<()> {
    if (0.0..=1.0).contains(&lambda) {
        Ok(())
    } else {
        Err(PdlaError::InvalidLambda(lambda))
    }
}

/// One explicit integration step of an unsatisfied round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub dtau: f64,
    pub x_before: Vec<f64>,
    /// `sum grad_j f * dx_j/dtau` over row coordinates still below advice.
    pub rate_below_advice: f64,
    /// The same sum over row coordinates that reached their advice value.
    pub rate_at_advice: f64,
}

impl Step {
    pub fn primal_rate(&self) -> f64 {
        self.rate_below_advice + self.rate_at_advice
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub row: SparseRow,
    pub advice_feasible: bool,
    /// Row-sparsity parameter in force for this round.
    pub d: f64,
    /// Zero-cost coordinates raised instantly, as `(column, increment)`.
    pub free_raise: Vec<(usize, f64)>,
    pub steps: Vec<Step>,
    pub x_after: Vec<f64>,
}

impl RoundTrace {
    pub fn duration(&self) -> f64 {
        self.steps.iter().map(|s| s.dtau).sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverTrace {
    pub lambda: f64,
    pub rounds: Vec<RoundTrace>,
}

impl SolverTrace {
    pub fn step_count(&self) -> usize {
        self.rounds.iter().map(|r| r.steps.len()).sum()
    }

    /// All recorded snapshots in order, ending with the final point.
    pub fn snapshots(&self) -> impl Iterator<Item = &[f64]> {
        self.rounds.iter().flat_map(|r| {
            r.steps.iter().map(|s| s.x_before.as_slice()).chain(std::iter::once(r.x_after.as_slice()))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub primal_objective: f64,
    pub advice_objective: Option<f64>,
    pub opt_lower: Option<f64>,
    pub opt_upper: Option<f64>,
    pub dual_objective: Option<f64>,
    pub consistency_ratio: Option<f64>,
    pub robustness_ratio: Option<f64>,
    pub max_constraint_violation: f64,
    pub rounds: usize,
    pub steps: usize,
    pub wall_time: Duration,
}

/// `||v||_p` for `p >= 1`, including `p = inf`.
pub fn pnorm(v: impl Iterator<Item = f64>, p: f64) -> f64 {
    if p.is_infinite() {
        v.map(f64::abs).fold(0.0, f64::max)
    } else if p == 1.0 {
        v.map(f64::abs).sum()
    } else {
        v.map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropertyViolation {
    pub check: &'static str,
    pub point: Vec<f64>,
    pub lhs: f64,
    pub rhs: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObjectiveReport {
    pub samples: usize,
    pub violations: Vec<PropertyViolation>,
}

impl ObjectiveReport {
    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

const PROPERTY_TOL: f64 = 1e-9;

fn exceeds(lhs: f64, rhs: f64) -> bool {
    lhs > rhs + PROPERTY_TOL * (1.0 + lhs.abs().max(rhs.abs()))
}

/// Spot-checks `f(0) = 0`, monotonicity, `<x, grad f(x)> <= p f(x)`,
/// `f(t x) <= t^p f(x)` for `t` in {1, 2, 4}, and gradient monotonicity when
/// the oracle declares it.
pub fn validate_objective(oracle: &dyn ConvexObjective, samples: &[Vec<f64>]) -> Result<ObjectiveReport> {
    let n = oracle.dim();
    let p = oracle.growth_exponent();
    let mut report = ObjectiveReport { samples: samples.len(), violations: Vec::new() };
    let mut flag = |check, point: &[f64], lhs, rhs| {
        report.violations.push(PropertyViolation { check, point: point.to_vec(), lhs, rhs });
    };

    let zero = vec![0.0; n];
    let f0 = oracle.eval(&zero);
    if f0.abs() > PROPERTY_TOL {
        flag("f(0) = 0", &zero, f0, 0.0);
    }

    for x in samples {
        if x.len() != n {
            return Err(PdlaError::DimensionMismatch { expected: n, got: x.len() });
        }
        if x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PdlaError::InvalidInput("samples must be nonnegative".into()));
        }
        let fx = oracle.eval(x);
        let gx = oracle.grad(x);

        for j in 0..n {
            let mut up = x.clone();
            up[j] += 0.5 * (1.0 + x[j]);
            let fu = oracle.eval(&up);
            if exceeds(fx, fu) {
                flag("monotone", x, fx, fu);
            }
            if oracle.monotone_gradient() {
                let gu = oracle.grad(&up);
                for (k, (a, b)) in gx.iter().zip(&gu).enumerate() {
                    if exceeds(*a, *b) {
                        flag("monotone gradient", x, gx[k], gu[k]);
                    }
                }
            }
        }

        let inner: f64 = x.iter().zip(&gx).map(|(a, b)| a * b).sum();
        if exceeds(inner, p * fx) {
            flag("<x, grad f> <= p f", x, inner, p * fx);
        }

        for t in [1.0_f64, 2.0, 4.0] {
            let scaled: Vec<f64> = x.iter().map(|v| t * v).collect();
            let lhs = oracle.eval(&scaled);
            let rhs = t.powf(p) * fx;
            if exceeds(lhs, rhs) {
                flag("f(t x) <= t^p f(x)", x, lhs, rhs);
            }
        }
    }
    Ok(report)
}

/// Spot-checks `g(0) = 0`, monotonicity and `g(t y) >= t g(y)` on `t` in [0, 1].
pub fn validate_utility(utility: &dyn ConcaveUtility, samples: &[Vec<f64>]) -> ObjectiveReport {
    let mut report = ObjectiveReport { samples: samples.len(), violations: Vec::new() };
    for y in samples {
        let gy = utility.eval(y);
        let g0 = utility.eval(&vec![0.0; y.len()]);
        if g0.abs() > PROPERTY_TOL {
            report.violations.push(PropertyViolation { check: "g(0) = 0", point: y.clone(), lhs: g0, rhs: 0.0 });
        }
        for t in [0.25, 0.5, 0.75] {
            let scaled: Vec<f64> = y.iter().map(|v| t * v).collect();
            let lhs = utility.eval(&scaled);
            if exceeds(t * gy, lhs) {
                report.violations.push(PropertyViolation {
                    check: "g(t y) >= t g(y)",
                    point: y.clone(),
                    lhs,
                    rhs: t * gy,
                });
            }
        }
        for i in 0..y.len() {
            let mut up = y.clone();
            up[i] += 0.5 * (1.0 + y[i]);
            let gu = utility.eval(&up);
            if exceeds(gy, gu) {
                report.violations.push(PropertyViolation { check: "monotone", point: y.clone(), lhs: gy, rhs: gu });
            }
        }
    }
    report
}

/// Largest deviation between the oracle gradient and central differences
/// (forward differences for coordinates closer than `h` to the boundary).
pub fn gradient_check(oracle: &dyn ConvexObjective, x: &[f64], h: f64) -> Result<f64> {
    if x.len() != oracle.dim() {
        return Err(PdlaError::DimensionMismatch { expected: oracle.dim(), got: x.len() });
    }
    if !(h > 0.0) || x.iter().any(|v| *v < 0.0) {
        return Err(PdlaError::InvalidInput("gradient check needs x >= 0 and h > 0".into()));
    }
    let g = oracle.grad(x);
    let mut worst: f64 = 0.0;
    let mut probe = x.to_vec();
    for j in 0..x.len() {
        let fd = if x[j] < h {
            probe[j] = x[j] + h;
            let up = oracle.eval(&probe);
            probe[j] = x[j];
            (up - oracle.eval(&probe)) / h
        } else {
            probe[j] = x[j] + h;
            let up = oracle.eval(&probe);
            probe[j] = x[j] - h;
            let down = oracle.eval(&probe);
            probe[j] = x[j];
            (up - down) / (2.0 * h)
        };
        if !fd.is_finite() {
            return Err(PdlaError::InvalidInput(format!("objective evaluation failed near column {j}")));
        }
        worst = worst.max((g[j] - fd).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{LinearObjective, LqGroup, LqSumObjective, PowerNormObjective};

    #[test]
    fn rows_reject_bad_entries() {
        assert!(SparseRow::new(vec![], 2).is_err());
        assert!(SparseRow::new(vec![(0, 0.0)], 2).is_err());
        assert!(SparseRow::new(vec![(0, -1.0)], 2).is_err());
        assert!(SparseRow::new(vec![(0, 1.0), (0, 2.0)], 2).is_err());
        assert!(SparseRow::new(vec![(2, 1.0)], 2).is_err());
        let row = SparseRow::new(vec![(1, 2.0), (0, 0.5)], 2).unwrap();
        assert_eq!(row.dot(&[2.0, 1.0]), 3.0);
        assert_eq!(row.coefficient(1), 2.0);
        assert_eq!(row.coefficient(3), 0.0);
    }

    #[test]
    fn advice_rejects_lambda_outside_unit_interval() {
        assert!(AdviceProfile::new(vec![1.0], 1.5).is_err());
        assert!(AdviceProfile::new(vec![1.0], -0.1).is_err());
        assert!(AdviceProfile::new(vec![-1.0], 0.5).is_err());
        assert!(AdviceProfile::new(vec![1.0], 0.0).is_ok());
    }

    #[test]
    fn d_bound_is_enforced() {
        let f = Arc::new(LinearObjective::new(vec![1.0, 1.0]).unwrap());
        let rows = vec![SparseRow::new(vec![(0, 1.0), (1, 1.0)], 2).unwrap()];
        let inst = CoveringInstance::new(2, rows, f).unwrap();
        assert!(inst.clone().with_d_bound(1).is_err());
        assert_eq!(inst.with_d_bound(2).unwrap().d_bound, Some(2));
    }

    #[test]
    fn linear_objective_is_clean() {
        let f = LinearObjective::new(vec![1.0, 1.0, 1.0]).unwrap();
        let samples = vec![vec![0.0, 1.0, 2.0], vec![3.0, 0.5, 0.0]];
        assert!(validate_objective(&f, &samples).unwrap().is_clean());
    }

    #[test]
    fn squared_norm_with_correct_p_is_clean() {
        let f = PowerNormObjective::identity(2, 2.0).unwrap();
        let x = vec![1.0, 1.0];
        let inner: f64 = x.iter().zip(f.grad(&x)).map(|(a, b)| a * b).sum();
        assert_eq!(inner, 4.0);
        assert_eq!(2.0 * f.eval(&x), 4.0);
        assert!(validate_objective(&f, &[x]).unwrap().is_clean());
    }

    #[test]
    fn understated_growth_exponent_is_flagged() {
        let sq = PowerNormObjective::identity(2, 2.0).unwrap();
        let f = crate::objective::FnObjective::new(
            2,
            1.5,
            move |x| sq.eval(x),
            |x, g| {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
            },
        );
        let report = validate_objective(&f, &[vec![1.0, 1.0]]).unwrap();
        let v = report
            .violations
            .iter()
            .find(|v| v.check == "<x, grad f> <= p f")
            .expect("p violation");
        assert_eq!(v.lhs, 4.0);
        assert_eq!(v.rhs, 3.0);
    }

    #[test]
    fn validate_rejects_dimension_mismatch() {
        let f = LinearObjective::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(
            validate_objective(&f, &[vec![1.0]]),
            Err(PdlaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn gradient_check_examples() {
        let lin = LinearObjective::new(vec![1.0, 2.0]).unwrap();
        assert!(gradient_check(&lin, &[0.3, 4.0], 1e-5).unwrap() < 1e-9);

        let sq = PowerNormObjective::identity(1, 2.0).unwrap();
        assert!(gradient_check(&sq, &[3.0], 1e-4).unwrap() <= 1e-7);

        let norm = LqSumObjective::new(2, vec![LqGroup { indices: vec![0, 1], c: 1.0, q: 2.0 }]).unwrap();
        let g = norm.grad(&[3.0, 4.0]);
        assert!((g[0] - 0.6).abs() < 1e-12 && (g[1] - 0.8).abs() < 1e-12);
        assert!(gradient_check(&norm, &[3.0, 4.0], 1e-5).unwrap() <= 1e-6);
    }

    #[test]
    fn pnorm_handles_infinity() {
        assert_eq!(pnorm([3.0, -4.0].into_iter(), 2.0), 5.0);
        assert_eq!(pnorm([3.0, -4.0].into_iter(), f64::INFINITY), 4.0);
        assert_eq!(pnorm([3.0, -4.0].into_iter(), 1.0), 7.0);
    }

    #[test]
    fn packing_violation_handles_zero_capacity() {
        let rows = vec![SparseRow::new(vec![(0, 1.0)], 1).unwrap()];
        let inst = PackingInstance::new(vec![0.0], rows, Arc::new(crate::objective::LinearUtility::unit())).unwrap();
        assert_eq!(inst.violation(&[0.0]), 0.0);
        assert!(inst.violation(&[0.1]).is_infinite());
    }
}
