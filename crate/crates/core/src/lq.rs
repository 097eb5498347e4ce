//! Online covering with `sum_e c_e ||x(S_e)||_{q_e}` objectives.
//!
//! The primal moves exactly as in [`crate::covering`]; the dual `y_t` grows at
//! rate one while round `t` is unsatisfied and is never decreased, and
//! `mu = A^T y` is kept online. Certificates compare `mu` against a dual-norm
//! ball that grows with `ln(kappa d / lambda)`.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::covering::{integrate_round, ratio, FlowSettings, DEFAULT_FEAS_TOL, DEFAULT_SLACK, DEFAULT_STEP_ETA};
use crate::error::{PdlaError, Result};
use crate::model::{check_lambda, pnorm, AdviceProfile, CoveringInstance, RunMetrics, SolverTrace, SparseRow};
use crate::objective::{ConvexObjective, LqSumObjective, ObjectiveSpec, DEFAULT_EPS_GRAD};

pub const MU_TOL: f64 = 1e-12;
pub const DUAL_NORM_TOL: f64 = 1e-6;

/// Running extrema of the nonzero constraint coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaTracker {
    pub a_max: f64,
    pub a_min: f64,
}

impl Default for KappaTracker {
    fn default() -> Self {
        Self { a_max: 0.0, a_min: f64::INFINITY }
    }
}

impl KappaTracker {
    pub fn observe(&mut self, row: &SparseRow) {
        self.a_max = self.a_max.max(row.max_coefficient());
        self.a_min = self.a_min.min(row.min_coefficient());
    }

    pub fn kappa(&self) -> f64 {
        if self.a_max > 0.0 {
            self.a_max / self.a_min
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone)]
pub struct LqInstance {
    pub n: usize,
    pub rows: Vec<SparseRow>,
    pub objective: Arc<LqSumObjective>,
    pub d_bound: Option<usize>,
}

impl LqInstance {
    pub fn new(n: usize, rows: Vec<SparseRow>, objective: LqSumObjective) -> Result<Self> {
        if objective.dim() != n {
            return Err(PdlaError::DimensionMismatch { expected: n, got: objective.dim() });
        }
        for row in &rows {
            row.check_columns(n)?;
        }
        Ok(Self { n, rows, objective: Arc::new(objective), d_bound: None })
    }

    /// Rebuilds an instance whose objective was declared as `lq_sum`.
    pub fn from_covering(instance: &CoveringInstance) -> Result<Self> {
        match &instance.spec {
            Some(ObjectiveSpec::LqSum { groups }) => {
                let mut lq = Self::new(instance.n, instance.rows.clone(), LqSumObjective::new(instance.n, groups.clone())?)?;
                lq.d_bound = instance.d_bound;
                Ok(lq)
            }
            _ => Err(PdlaError::Unavailable("the l_q solver needs an lq_sum objective".into())),
        }
    }

    pub fn to_covering(&self) -> CoveringInstance {
        let objective: Arc<dyn ConvexObjective> = self.objective.clone();
        let mut inst = CoveringInstance::new(self.n, self.rows.clone(), objective).expect("validated on construction");
        inst.d_bound = self.d_bound;
        inst.spec = Some(ObjectiveSpec::LqSum { groups: self.objective.groups().to_vec() });
        inst
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LqConfig {
    pub lambda: f64,
    pub eps_grad: f64,
    pub step_eta: f64,
    pub feas_tol: f64,
    pub max_steps_per_round: usize,
    pub slack: f64,
}

impl LqConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            eps_grad: DEFAULT_EPS_GRAD,
            step_eta: DEFAULT_STEP_ETA,
            feas_tol: DEFAULT_FEAS_TOL,
            max_steps_per_round: 2_000_000,
            slack: DEFAULT_SLACK,
        }
    }

    pub fn with_step_eta(mut self, eta: f64) -> Self {
        self.step_eta = eta;
        self
    }
}

#[derive(Debug, Clone)]
pub struct LqRun {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    /// `y` after every round, for monotonicity checks.
    pub y_history: Vec<Vec<f64>>,
    pub trace: SolverTrace,
    pub metrics: RunMetrics,
    pub kappa: KappaTracker,
    pub d_final: f64,
    pub config: LqConfig,
    pub advice: Vec<f64>,
}

pub fn run_lq(instance: &LqInstance, advice: &AdviceProfile, config: &LqConfig) -> Result<LqRun> {
    check_lambda(config.lambda)?;
    if !(config.eps_grad > 0.0 && config.step_eta > 0.0 && config.feas_tol > 0.0) {
        return Err(PdlaError::InvalidInput("eps_grad, step_eta and feas_tol must be > 0".into()));
    }
    let n = instance.n;
    let adv = match advice.values().len() {
        0 => None,
        len if len == n => Some(advice.values()),
        len => return Err(PdlaError::DimensionMismatch { expected: n, got: len }),
    };
    let oracle = instance.objective.as_ref().clone().with_eps_grad(config.eps_grad);
    let settings = FlowSettings {
        step_eta: config.step_eta,
        feas_tol: config.feas_tol,
        max_steps: config.max_steps_per_round,
    };
    let largest = oracle.largest_group();

    let start = Instant::now();
    let mut x = vec![0.0; n];
    let mut y = Vec::with_capacity(instance.rows.len());
    let mut mu = vec![0.0; n];
    let mut y_history = Vec::with_capacity(instance.rows.len());
    let mut trace = SolverTrace { lambda: config.lambda, rounds: Vec::with_capacity(instance.rows.len()) };
    let mut kappa = KappaTracker::default();
    let mut running = largest.max(1);
    for (t, row) in instance.rows.iter().enumerate() {
        kappa.observe(row);
        running = running.max(row.nnz());
        let d = instance.d_bound.map_or(running, |b| b.max(largest)).max(row.nnz()) as f64;
        let round = integrate_round(&mut x, row, adv, config.lambda, d, &oracle, &settings, t)?;
        let mut yt = 0.0;
        for step in &round.steps {
            yt += step.dtau;
            for e in row.entries() {
                mu[e.j] += e.a * step.dtau;
            }
        }
        y.push(yt);
        y_history.push(y.clone());
        trace.rounds.push(round);
    }
    let d_final = instance.d_bound.map_or(running, |b| b.max(largest)).max(1) as f64;

    let primal = instance.objective.eval(&x);
    let advice_objective = adv.map(|a| instance.objective.eval(a));
    let scale = dual_scale(&mu, &instance.objective);
    let dual_objective = y.iter().sum::<f64>() / scale;
    let metrics = RunMetrics {
        primal_objective: primal,
        advice_objective,
        dual_objective: Some(dual_objective),
        consistency_ratio: advice_objective.and_then(|fa| ratio(primal, fa)),
        robustness_ratio: ratio(primal, dual_objective),
        max_constraint_violation: instance.to_covering().violation(&x),
        rounds: instance.rows.len(),
        steps: trace.step_count(),
        wall_time: start.elapsed(),
        ..RunMetrics::default()
    };
    Ok(LqRun {
        x,
        y,
        mu,
        y_history,
        trace,
        metrics,
        kappa,
        d_final,
        config: config.clone(),
        advice: adv.map(<[f64]>::to_vec).unwrap_or_default(),
    })
}

/// Smallest `s >= 1` with `mu / s` inside every group's dual-norm ball, so
/// `sum y / s` is a valid lower bound on the optimum.
fn dual_scale(mu: &[f64], objective: &LqSumObjective) -> f64 {
    objective
        .groups()
        .iter()
        .map(|g| {
            let norm = pnorm(g.indices.iter().map(|&j| mu[j]), g.dual_exponent());
            if g.c > 0.0 {
                norm / g.c
            } else if norm > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .fold(1.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupBound {
    pub group: usize,
    pub norm: f64,
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualNormReport {
    pub groups: Vec<GroupBound>,
    /// Largest `mu_j` on columns outside every group.
    pub outside_max: f64,
    /// For `q = 1` groups: largest `mu_j` and `c ln(1 + kappa d / lambda)`,
    /// reported only.
    pub linear_columns: Vec<(usize, f64, f64)>,
}

/// Checks `||mu(S_e)||_{p_e} <= c_e (1 + 9 ln(kappa d / lambda))` for every
/// group and `mu_j = 0` outside all groups.
pub fn dual_norm_certificate(
    mu: &[f64],
    objective: &LqSumObjective,
    kappa: f64,
    d: f64,
    lambda: f64,
) -> Result<DualNormReport> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Err(PdlaError::Unavailable("the dual-norm bound needs lambda > 0".into()));
    }
    if mu.len() != objective.dim() {
        return Err(PdlaError::DimensionMismatch { expected: objective.dim(), got: mu.len() });
    }
    let log = (kappa * d / lambda).ln();
    let mut report = DualNormReport { groups: Vec::new(), outside_max: 0.0, linear_columns: Vec::new() };
    for (e, g) in objective.groups().iter().enumerate() {
        let norm = pnorm(g.indices.iter().map(|&j| mu[j]), g.dual_exponent());
        let bound = g.c * (1.0 + 9.0 * log);
        if norm > bound + DUAL_NORM_TOL {
            return Err(PdlaError::Certificate(format!(
                "group {e}: dual norm {norm} exceeds {bound}"
            )));
        }
        report.groups.push(GroupBound { group: e, norm, bound });
        if g.q == 1.0 {
            let top = g.indices.iter().map(|&j| mu[j]).fold(0.0, f64::max);
            report.linear_columns.push((e, top, g.c * (kappa * d / lambda).ln_1p()));
        }
    }
    report.outside_max = (0..mu.len()).filter(|&j| objective.group_of(j).is_none()).map(|j| mu[j]).fold(0.0, f64::max);
    if report.outside_max != 0.0 {
        return Err(PdlaError::Certificate(format!(
            "mu is {} on a column outside every group",
            report.outside_max
        )));
    }
    Ok(report)
}

/// `f(x) <= 2 sum y (1 + slack)`; returns `f(x) / sum y`.
pub fn pd_ratio_certificate(primal: f64, y: &[f64], slack: f64) -> Result<f64> {
    let total: f64 = y.iter().sum();
    if primal > 2.0 * total * (1.0 + slack) + 1e-12 {
        return Err(PdlaError::Certificate(format!("primal {primal} exceeds twice the dual {total}")));
    }
    Ok(if total > 0.0 { primal / total } else { 0.0 })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct LqCertificate {
    pub feasible: bool,
    pub monotone: bool,
    pub growth_cap: bool,
    pub dual_monotone: bool,
    /// Online `mu` agrees with `A^T y` recomputed from scratch.
    pub mu_consistent: bool,
    pub pd_ratio: bool,
    pub dual_norm: Option<bool>,
    pub step_consistency: Option<bool>,
    pub consistency: Option<bool>,
    /// No coordinate exceeds `1 / a_min`.
    pub coordinate_cap: bool,
}

impl LqCertificate {
    pub fn all_hold(&self) -> bool {
        self.feasible
            && self.monotone
            && self.growth_cap
            && self.dual_monotone
            && self.mu_consistent
            && self.pd_ratio
            && self.coordinate_cap
            && [self.dual_norm, self.step_consistency, self.consistency].iter().all(|c| c.unwrap_or(true))
    }
}

pub fn certify_lq(instance: &LqInstance, run: &LqRun) -> LqCertificate {
    let cfg = &run.config;
    let slack = 1.0 + cfg.slack;
    let mut cert = LqCertificate::default();
    cert.feasible = run.trace.rounds.iter().all(|r| r.row.dot(&r.x_after) >= 1.0 - cfg.feas_tol)
        && instance.rows.iter().all(|r| r.dot(&run.x) >= 1.0 - cfg.feas_tol);
    let mut prev: Option<&[f64]> = None;
    cert.monotone = run.trace.snapshots().all(|s| {
        let ok = prev.is_none_or(|p| p.iter().zip(s).all(|(a, b)| b >= a));
        prev = Some(s);
        ok
    });
    cert.growth_cap = run.trace.rounds.iter().flat_map(|r| &r.steps).all(|s| s.primal_rate() <= 2.0 * slack);
    cert.dual_monotone = run
        .y_history
        .windows(2)
        .all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b >= a))
        && run.y.iter().all(|v| *v >= 0.0);

    let mut recomputed = vec![0.0; instance.n];
    for (row, yi) in instance.rows.iter().zip(&run.y) {
        for e in row.entries() {
            recomputed[e.j] += e.a * yi;
        }
    }
    cert.mu_consistent = recomputed.iter().zip(&run.mu).all(|(a, b)| (a - b).abs() <= MU_TOL * (1.0 + a.abs()));
    cert.pd_ratio = pd_ratio_certificate(run.metrics.primal_objective, &run.y, 2.0 * cfg.slack).is_ok();
    if cfg.lambda > 0.0 {
        cert.dual_norm =
            Some(dual_norm_certificate(&run.mu, &instance.objective, run.kappa.kappa(), run.d_final, cfg.lambda).is_ok());
    }
    if cfg.lambda < 1.0 && !run.advice.is_empty() {
        let factor = (1.0 + cfg.lambda) / (1.0 - cfg.lambda);
        cert.step_consistency = Some(
            run.trace
                .rounds
                .iter()
                .filter(|r| r.advice_feasible)
                .flat_map(|r| &r.steps)
                .all(|s| s.rate_at_advice <= factor * s.rate_below_advice * slack),
        );
        if run.trace.rounds.iter().all(|r| r.advice_feasible) {
            let fa = instance.objective.eval(&run.advice);
            cert.consistency = Some(run.metrics.primal_objective <= 2.0 / (1.0 - cfg.lambda) * fa * slack + 1e-12);
        }
    }
    let cap = 1.0 / run.kappa.a_min;
    cert.coordinate_cap = run.x.iter().all(|v| *v <= cap * slack);
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::LqGroup;
    use approx::assert_abs_diff_eq;

    fn instance(n: usize, groups: Vec<LqGroup>, rows: Vec<Vec<(usize, f64)>>) -> LqInstance {
        let rows = rows.into_iter().map(|r| SparseRow::new(r, n).unwrap()).collect();
        LqInstance::new(n, rows, LqSumObjective::new(n, groups).unwrap()).unwrap()
    }

    fn no_advice() -> AdviceProfile {
        AdviceProfile::new(vec![], 1.0).unwrap()
    }

    #[test]
    fn single_linear_group_matches_closed_form() {
        let inst = instance(1, vec![LqGroup { indices: vec![0], c: 1.0, q: 1.0 }], vec![vec![(0, 1.0)]]);
        let run = run_lq(&inst, &no_advice(), &LqConfig::new(1.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(run.y[0], 2f64.ln(), epsilon = 1e-9);
        assert_abs_diff_eq!(run.mu[0], 2f64.ln(), epsilon = 1e-9);
        let report = dual_norm_certificate(&run.mu, &inst.objective, 1.0, 1.0, 1.0).unwrap();
        assert_abs_diff_eq!(report.groups[0].bound, 1.0, epsilon = 1e-15);
        let r = pd_ratio_certificate(run.metrics.primal_objective, &run.y, 0.01).unwrap();
        assert_abs_diff_eq!(r, 1.0 / 2f64.ln(), epsilon = 1e-8);
        assert!(certify_lq(&inst, &run).all_hold());
    }

    #[test]
    fn variable_outside_groups_is_free() {
        let inst = instance(2, vec![LqGroup { indices: vec![0], c: 1.0, q: 2.0 }], vec![vec![(1, 4.0)]]);
        let run = run_lq(&inst, &no_advice(), &LqConfig::new(1.0)).unwrap();
        assert_eq!(run.x, vec![0.0, 0.25]);
        assert_eq!(run.y, vec![0.0]);
        assert_eq!(run.metrics.primal_objective, 0.0);
        assert!(certify_lq(&inst, &run).all_hold());
    }

    #[test]
    fn empty_run_certificates_hold() {
        let inst = instance(2, vec![LqGroup { indices: vec![0, 1], c: 1.0, q: 2.0 }], vec![]);
        let run = run_lq(&inst, &no_advice(), &LqConfig::new(0.5)).unwrap();
        assert_eq!(run.mu, vec![0.0, 0.0]);
        assert!(dual_norm_certificate(&run.mu, &inst.objective, 1.0, 2.0, 0.5).is_ok());
        assert_eq!(pd_ratio_certificate(0.0, &[], 0.0).unwrap(), 0.0);
    }

    #[test]
    fn satisfied_round_adds_no_dual() {
        let inst = instance(1, vec![LqGroup { indices: vec![0], c: 1.0, q: 1.0 }], vec![vec![(0, 1.0)], vec![(0, 1.0)]]);
        let run = run_lq(&inst, &no_advice(), &LqConfig::new(1.0)).unwrap();
        assert_eq!(run.y[1], 0.0);
    }

    #[test]
    fn euclidean_group_certificates() {
        let inst = instance(
            3,
            vec![LqGroup { indices: vec![0, 1], c: 1.0, q: 2.0 }, LqGroup { indices: vec![2], c: 2.0, q: 1.0 }],
            vec![vec![(0, 1.0), (2, 0.5)], vec![(1, 2.0), (2, 1.0)], vec![(0, 1.0), (1, 1.0)]],
        );
        for lambda in [0.25, 0.5, 1.0] {
            let run = run_lq(&inst, &AdviceProfile::new(vec![1.0, 0.5, 0.0], lambda).unwrap(), &LqConfig::new(lambda))
                .unwrap();
            let cert = certify_lq(&inst, &run);
            assert!(cert.all_hold(), "lambda {lambda}: {cert:?}");
        }
    }

    #[test]
    fn violated_dual_norm_names_group() {
        let obj = LqSumObjective::new(2, vec![LqGroup { indices: vec![0, 1], c: 1.0, q: 2.0 }]).unwrap();
        let err = dual_norm_certificate(&[5.0, 5.0], &obj, 1.0, 1.0, 1.0).unwrap_err();
        assert!(err.to_string().contains("group 0"));
        let outside = LqSumObjective::new(2, vec![LqGroup { indices: vec![0], c: 1.0, q: 2.0 }]).unwrap();
        assert!(dual_norm_certificate(&[0.0, 0.1], &outside, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn kappa_tracks_extremes() {
        let mut k = KappaTracker::default();
        assert_eq!(k.kappa(), 1.0);
        k.observe(&SparseRow::new(vec![(0, 2.0), (1, 0.5)], 2).unwrap());
        assert_eq!(k.kappa(), 4.0);
        k.observe(&SparseRow::new(vec![(0, 1.0)], 2).unwrap());
        assert_eq!(k.kappa(), 4.0);
    }
}
