//! Primal-dual learning-augmented solver for online convex covering.
//!
//! Each arriving row `A_t x >= 1` is satisfied by growing every `x_j` in its
//! support at rate `a_tj (x_j + D_j) / grad_j f(x)`, where the offset `D_j`
//! blends a classical term `lambda / (a_tj d)` with the advice. The dual is
//! not needed to drive the primal, so it is rebuilt afterwards from the
//! recorded steps by [`reconstruct_dual`].

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};
use crate::model::{check_lambda, AdviceProfile, CoveringInstance, RoundTrace, RunMetrics, SolverTrace, SparseRow, Step};
use crate::objective::ConvexObjective;
use crate::oracles;

pub const DEFAULT_STEP_ETA: f64 = 1e-3;
pub const DEFAULT_FEAS_TOL: f64 = 1e-9;
pub const DEFAULT_SLACK: f64 = 0.01;

/// Stand-in for a vanishing partial derivative on a coordinate that is not
/// free: the rate becomes huge but finite, so the step cap still applies.
const GRAD_FLOOR: f64 = 1e-200;
/// A step is halved while some row gradient drifts by more than this multiple
/// of `step_eta` across it.
const GRAD_DRIFT_FACTOR: f64 = 10.0;
const MAX_HALVINGS: usize = 60;
const BISECTION_ITERS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Dual scale `mu = delta grad f(x)`.
    Standard,
    /// Dual `mu = grad f(delta x)` for positively homogeneous objectives.
    Homogeneous,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PdlaConfig {
    pub lambda: f64,
    /// Overrides the instance's declared sparsity bound.
    pub d: Option<usize>,
    pub step_eta: f64,
    pub feas_tol: f64,
    pub variant: Variant,
    pub max_steps_per_round: usize,
    /// Multiplicative allowance on certified inequalities.
    pub slack: f64,
}

impl PdlaConfig {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            d: None,
            step_eta: DEFAULT_STEP_ETA,
            feas_tol: DEFAULT_FEAS_TOL,
            variant: Variant::Standard,
            max_steps_per_round: 2_000_000,
            slack: DEFAULT_SLACK,
        }
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.variant = variant;
        self
    }

    pub fn with_step_eta(mut self, eta: f64) -> Self {
        self.step_eta = eta;
        self
    }

    pub fn with_feas_tol(mut self, tol: f64) -> Self {
        self.feas_tol = tol;
        self
    }

    pub fn with_d(mut self, d: usize) -> Self {
        self.d = Some(d);
        self
    }

    pub fn validate(&self) -> Result<()> {
        check_lambda(self.lambda)?;
        if !(self.step_eta > 0.0 && self.step_eta.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("step_eta = {} must be > 0", self.step_eta)));
        }
        if !(self.feas_tol > 0.0 && self.feas_tol < 1.0) {
            return Err(PdlaError::InvalidInput(format!("feas_tol = {} must be in (0, 1)", self.feas_tol)));
        }
        if self.d == Some(0) {
            return Err(PdlaError::InvalidInput("d must be >= 1".into()));
        }
        Ok(())
    }
}

/// `1 / (4 p ln(1 + 2 d^2 / lambda))^(p - 1)`.
pub fn compute_delta_standard(p: f64, d: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Err(PdlaError::Unavailable("lambda = 0 runs in primal-only mode; no dual scale exists".into()));
    }
    if !(p >= 1.0 && d >= 1.0) {
        return Err(PdlaError::InvalidInput(format!("need p >= 1 and d >= 1, got p = {p}, d = {d}")));
    }
    Ok((4.0 * p * log_term(d, lambda)).powf(1.0 - p))
}

/// `1 / (q ln(1 + 2 d^2 / lambda))`.
pub fn compute_delta_homogeneous(q: f64, d: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    if lambda == 0.0 {
        return Err(PdlaError::Unavailable("lambda = 0 runs in primal-only mode; no dual scale exists".into()));
    }
    if !(q >= 1.0 && d >= 1.0) {
        return Err(PdlaError::InvalidInput(format!("need q >= 1 and d >= 1, got q = {q}, d = {d}")));
    }
    Ok(1.0 / (q * log_term(d, lambda)))
}

/// `ln(1 + 2 d^2 / lambda)`.
pub fn log_term(d: f64, lambda: f64) -> f64 {
    (2.0 * d * d / lambda).ln_1p()
}

/// Robustness factor `(4 p ln(1 + 2 d^2 / lambda))^p`.
pub fn robustness_factor(p: f64, d: f64, lambda: f64) -> f64 {
    (4.0 * p * log_term(d, lambda)).powf(p)
}

/// Offsets `D_j` of one round, evaluated at the current point.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundBranch {
    pub advice_feasible: bool,
    /// `(column, D_j)` for each entry of the row.
    pub offsets: Vec<(usize, f64)>,
}

/// Evaluates the branch test `A_t x' >= 1` and the offsets at point `x`.
///
/// On the advice branch the advice share is split over the row coordinates
/// still below their advice value; when none remain the share is zero.
pub fn round_branch(row: &SparseRow, x_prime: Option<&[f64]>, x: &[f64], lambda: f64, d: f64) -> RoundBranch {
    let advice = x_prime.filter(|a| row.dot(a) >= 1.0);
    let offsets = match advice {
        None => row.entries().iter().map(|e| (e.j, 1.0 / (e.a * d))).collect(),
        Some(adv) => {
            let below = |j: usize| x[j] < adv[j];
            let denom: f64 = row.entries().iter().filter(|e| below(e.j)).map(|e| e.a * adv[e.j]).sum();
            row.entries()
                .iter()
                .map(|e| {
                    let mut dj = lambda / (e.a * d);
                    if lambda < 1.0 && denom > 0.0 && below(e.j) {
                        dj += (1.0 - lambda) * adv[e.j] / denom;
                    }
                    (e.j, dj)
                })
                .collect()
        }
    };
    RoundBranch { advice_feasible: advice.is_some(), offsets }
}

pub(crate) struct FlowSettings {
    pub step_eta: f64,
    pub feas_tol: f64,
    pub max_steps: usize,
}

/// Per-entry quantities of one explicit step.
struct Moving {
    j: usize,
    offset: f64,
    /// `a_tj / grad_j f` with the gradient frozen at the step start.
    speed: f64,
    grad: f64,
    floored: bool,
}

fn advance(x: &[f64], moving: &[Moving], h: f64, out: &mut [f64]) {
    out.copy_from_slice(x);
    for m in moving {
        out[m.j] = x[m.j] + (x[m.j] + m.offset) * (m.speed * h).exp_m1();
    }
}

/// Integrates one round until `A_t x` reaches `1` within `feas_tol`.
///
/// The gradient is frozen over each step, which makes the step an exact
/// exponential for linear objectives. Steps are capped so that every
/// `x_j + D_j` grows by at most `1 + step_eta`, stop exactly when a coordinate
/// reaches its advice value, and the final step is found by bisection.
pub(crate) fn integrate_round(
    x: &mut [f64],
    row: &SparseRow,
    advice: Option<&[f64]>,
    lambda: f64,
    d: f64,
    oracle: &dyn ConvexObjective,
    settings: &FlowSettings,
    round: usize,
) -> Result<RoundTrace> {
    let n = x.len();
    let advice_feasible = advice.is_some_and(|a| row.dot(a) >= 1.0);
    let mut trace = RoundTrace {
        row: row.clone(),
        advice_feasible,
        d,
        free_raise: Vec::new(),
        steps: Vec::new(),
        x_after: Vec::new(),
    };
    let lo = 1.0 - settings.feas_tol;
    let hi = 1.0 + settings.feas_tol;

    if row.dot(x) >= lo {
        trace.x_after = x.to_vec();
        return Ok(trace);
    }

    // coordinates the objective ignores absorb the whole shortfall at no cost
    let free: Vec<_> = row.entries().iter().filter(|e| oracle.is_free(e.j)).collect();
    if !free.is_empty() {
        let residual = 1.0 - row.dot(x);
        let weight: f64 = free.iter().map(|e| e.a * e.a).sum();
        for e in free {
            let inc = residual * e.a / weight;
            x[e.j] += inc;
            trace.free_raise.push((e.j, inc));
        }
        trace.x_after = x.to_vec();
        return Ok(trace);
    }

    let advice_active = if advice_feasible && lambda < 1.0 { advice } else { None };
    let track_drift = !oracle.constant_gradient();
    let drift_tol = GRAD_DRIFT_FACTOR * settings.step_eta;
    let mut grad = vec![0.0; n];
    let mut grad_trial = vec![0.0; n];
    let mut trial = x.to_vec();
    let mut moving: Vec<Moving> = Vec::with_capacity(row.nnz());

    loop {
        if trace.steps.len() >= settings.max_steps {
            return Err(PdlaError::NonConvergence { round, steps: trace.steps.len() });
        }
        oracle.grad_into(x, &mut grad);
        let branch = round_branch(row, advice.filter(|_| advice_feasible), x, lambda, d);

        moving.clear();
        let (mut rate_below, mut rate_at) = (0.0, 0.0);
        for (e, &(j, offset)) in row.entries().iter().zip(&branch.offsets) {
            let term = e.a * (x[j] + offset);
            match advice_active {
                Some(adv) if x[j] < adv[j] => rate_below += term,
                _ => rate_at += term,
            }
            if x[j] + offset <= 0.0 {
                continue;
            }
            let g = grad[j];
            let floored = !(g > GRAD_FLOOR);
            let g = if floored { GRAD_FLOOR } else { g };
            moving.push(Moving { j, offset, speed: e.a / g, grad: g, floored });
        }
        let max_speed = moving.iter().map(|m| m.speed).fold(0.0, f64::max);
        if !(max_speed > 0.0) {
            return Err(PdlaError::Degenerate(format!(
                "round {round}: no coordinate of the row can grow (zero offsets and zero values)"
            )));
        }

        let mut h = settings.step_eta.ln_1p() / max_speed;
        let mut event = None;
        if let Some(adv) = advice_active {
            for m in &moving {
                if x[m.j] < adv[m.j] {
                    let hj = ((adv[m.j] + m.offset) / (x[m.j] + m.offset)).ln() / m.speed;
                    if hj < h {
                        h = hj;
                        event = Some((m.j, adv[m.j]));
                    }
                }
            }
        }

        let mut halvings = 0;
        loop {
            advance(x, &moving, h, &mut trial);
            if !track_drift || halvings >= MAX_HALVINGS {
                break;
            }
            oracle.grad_into(&trial, &mut grad_trial);
            // objective growth seen by the frozen gradient against its drift
            let (mut base, mut drift) = (0.0, 0.0);
            for m in moving.iter().filter(|m| !m.floored) {
                let dx = trial[m.j] - x[m.j];
                base += m.grad * dx;
                drift += (grad_trial[m.j] - m.grad).abs() * dx;
            }
            if drift <= drift_tol * base {
                break;
            }
            h *= 0.5;
            event = None;
            halvings += 1;
        }

        let cov = row.dot(&trial);
        let mut done = cov >= lo;
        if cov > hi {
            let (mut h_lo, mut h_hi) = (0.0, h);
            for _ in 0..BISECTION_ITERS {
                let mid = 0.5 * (h_lo + h_hi);
                advance(x, &moving, mid, &mut trial);
                let c = row.dot(&trial);
                if c < lo {
                    h_lo = mid;
                } else if c > hi {
                    h_hi = mid;
                } else {
                    h_hi = mid;
                    break;
                }
            }
            h = h_hi;
            advance(x, &moving, h, &mut trial);
            event = None;
            done = true;
        }

        trace.steps.push(Step { dtau: h, x_before: x.to_vec(), rate_below_advice: rate_below, rate_at_advice: rate_at });
        for (xi, ti) in x.iter_mut().zip(&trial) {
            *xi = xi.max(*ti);
        }
        if let Some((j, target)) = event {
            x[j] = x[j].max(target);
        }
        if done || row.dot(x) >= lo {
            break;
        }
    }
    trace.x_after = x.to_vec();
    Ok(trace)
}

/// Output of [`run_pdla`].
#[derive(Debug, Clone)]
pub struct PdlaRun {
    pub x: Vec<f64>,
    pub trace: SolverTrace,
    pub metrics: RunMetrics,
    pub config: PdlaConfig,
    /// Sparsity parameter at the end of the run.
    pub d_final: f64,
    pub advice: Vec<f64>,
}

fn advice_slice(advice: &AdviceProfile, n: usize) -> Result<Option<&[f64]>> {
    match advice.values().len() {
        0 => Ok(None),
        len if len == n => Ok(Some(advice.values())),
        len => Err(PdlaError::DimensionMismatch { expected: n, got: len }),
    }
}

/// Runs the solver over every row of `instance`. An empty advice vector means
/// no advice (every round takes the classical branch).
pub fn run_pdla(instance: &CoveringInstance, advice: &AdviceProfile, config: &PdlaConfig) -> Result<PdlaRun> {
    config.validate()?;
    if (advice.lambda() - config.lambda).abs() > 0.0 {
        log::debug!("advice lambda {} overridden by config lambda {}", advice.lambda(), config.lambda);
    }
    let oracle = instance.objective.as_ref();
    if !oracle.monotone_gradient() {
        return Err(PdlaError::Unavailable(
            "objective does not declare a monotone gradient; use the l_q solver for norm objectives".into(),
        ));
    }
    if config.variant == Variant::Homogeneous && oracle.homogeneous_degree().is_none() {
        return Err(PdlaError::Unavailable("homogeneous variant needs an objective with a homogeneous degree".into()));
    }
    let n = instance.n;
    let adv = advice_slice(advice, n)?;
    let settings = FlowSettings {
        step_eta: config.step_eta,
        feas_tol: config.feas_tol,
        max_steps: config.max_steps_per_round,
    };
    let declared = config.d.or(instance.d_bound);

    let start = Instant::now();
    let mut x = vec![0.0; n];
    let mut trace = SolverTrace { lambda: config.lambda, rounds: Vec::with_capacity(instance.rows.len()) };
    let mut running_d = 1usize;
    for (t, row) in instance.rows.iter().enumerate() {
        running_d = running_d.max(row.nnz());
        let d = declared.unwrap_or(running_d).max(row.nnz()) as f64;
        let round = integrate_round(&mut x, row, adv, config.lambda, d, oracle, &settings, t)?;
        trace.rounds.push(round);
    }
    let d_final = declared.unwrap_or(running_d).max(1) as f64;

    let primal = oracle.eval(&x);
    let advice_objective = adv.map(|a| oracle.eval(a));
    let metrics = RunMetrics {
        primal_objective: primal,
        advice_objective,
        consistency_ratio: advice_objective.and_then(|fa| ratio(primal, fa)),
        max_constraint_violation: instance.violation(&x),
        rounds: instance.rows.len(),
        steps: trace.step_count(),
        wall_time: start.elapsed(),
        ..RunMetrics::default()
    };
    Ok(PdlaRun {
        x,
        trace,
        metrics,
        config: config.clone(),
        d_final,
        advice: adv.map(<[f64]>::to_vec).unwrap_or_default(),
    })
}

pub(crate) fn ratio(num: f64, den: f64) -> Option<f64> {
    if den > 0.0 {
        Some(num / den)
    } else if num <= 0.0 {
        Some(1.0)
    } else {
        None
    }
}

/// How `f*(mu)` was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateMethod {
    ClosedForm,
    /// `mu = grad f(z)`, so `f*(mu) = <z, grad f(z)> - f(z)` exactly.
    FenchelYoung,
    /// Upper end of a grid bracket of the given width.
    GridUpperBracket { width: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualSolution {
    pub y: Vec<f64>,
    pub mu: Vec<f64>,
    pub conjugate: f64,
    pub conjugate_method: ConjugateMethod,
    pub objective: f64,
}

impl DualSolution {
    /// Largest `sum_i a_ij y_i - mu_j` over columns.
    pub fn max_excess(&self, rows: &[SparseRow]) -> f64 {
        let mut load = vec![0.0; self.mu.len()];
        for (row, yi) in rows.iter().zip(&self.y) {
            for e in row.entries() {
                load[e.j] += e.a * yi;
            }
        }
        load.iter().zip(&self.mu).map(|(l, m)| l - m).fold(f64::NEG_INFINITY, f64::max)
    }
}

fn fenchel_young(oracle: &dyn ConvexObjective, z: &[f64]) -> f64 {
    let g = oracle.grad(z);
    z.iter().zip(&g).map(|(a, b)| a * b).sum::<f64>() - oracle.eval(z)
}

/// Rebuilds `(y, mu)` in hindsight from the recorded steps: `y_t` accrues at
/// rate `r` and, whenever a dual constraint `j` would exceed `mu_j`, the
/// variable with the largest coefficient in column `j` is decreased to keep
/// it tight (ties go to the earliest round).
pub fn reconstruct_dual(run: &PdlaRun, oracle: &dyn ConvexObjective) -> Result<DualSolution> {
    let lambda = run.config.lambda;
    if lambda == 0.0 {
        return Err(PdlaError::Unavailable("lambda = 0 runs in primal-only mode; no dual is built".into()));
    }
    let n = run.x.len();
    let xbar = &run.x;
    let grad_bar = oracle.grad(xbar);

    let (mu, witness) = match run.config.variant {
        Variant::Standard => {
            let delta = compute_delta_standard(oracle.growth_exponent(), run.d_final, lambda)?;
            let mu: Vec<f64> = grad_bar.iter().map(|g| delta * g).collect();
            let witness = if delta == 1.0 {
                Some(xbar.clone())
            } else {
                oracle
                    .homogeneous_degree()
                    .filter(|q| *q > 1.0)
                    .map(|q| xbar.iter().map(|v| v * delta.powf(1.0 / (q - 1.0))).collect())
            };
            (mu, witness)
        }
        Variant::Homogeneous => {
            let q = oracle
                .homogeneous_degree()
                .ok_or_else(|| PdlaError::Unavailable("objective has no homogeneous degree".into()))?;
            let delta = compute_delta_homogeneous(q, run.d_final, lambda)?;
            let z: Vec<f64> = xbar.iter().map(|v| delta * v).collect();
            (oracle.grad(&z), Some(z))
        }
    };

    let rate = |d: f64| -> Result<f64> {
        let numerator = match run.config.variant {
            Variant::Standard => compute_delta_standard(oracle.growth_exponent(), d, lambda)?,
            Variant::Homogeneous => {
                let q = oracle.homogeneous_degree().unwrap_or(1.0);
                let delta = compute_delta_homogeneous(q, d, lambda)?;
                let scaled: Vec<f64> = xbar.iter().map(|v| delta * v).collect();
                let g_scaled = oracle.grad(&scaled);
                grad_bar
                    .iter()
                    .zip(&g_scaled)
                    .filter(|(g, _)| **g > 0.0)
                    .map(|(g, s)| s / g)
                    .fold(f64::INFINITY, f64::min)
                    .min(delta.powf(q - 1.0))
            }
        };
        Ok(numerator / log_term(d, lambda))
    };

    let m = run.trace.rounds.len();
    let mut y = vec![0.0; m];
    let mut load = vec![0.0; n];
    // column j -> (round, a_ij) for rounds seen so far
    let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let rows: Vec<&SparseRow> = run.trace.rounds.iter().map(|r| &r.row).collect();

    for (t, round) in run.trace.rounds.iter().enumerate() {
        for e in round.row.entries() {
            columns[e.j].push((t, e.a));
        }
        if round.steps.is_empty() {
            continue;
        }
        let r = rate(round.d)?;
        for step in &round.steps {
            let inc = r * step.dtau;
            y[t] += inc;
            for e in round.row.entries() {
                load[e.j] += e.a * inc;
            }
            for e in round.row.entries() {
                let j = e.j;
                while load[j] > mu[j] + 1e-14 * (1.0 + mu[j].abs()) {
                    let pick = columns[j]
                        .iter()
                        .filter(|(i, _)| y[*i] > 0.0)
                        .fold(None::<(usize, f64)>, |best, &(i, a)| match best {
                            Some((_, ba)) if ba >= a => best,
                            _ => Some((i, a)),
                        });
                    let Some((i, a)) = pick else { break };
                    let dec = y[i].min((load[j] - mu[j]) / a);
                    y[i] -= dec;
                    if y[i] < 1e-300 {
                        y[i] = 0.0;
                    }
                    for f in rows[i].entries() {
                        load[f.j] -= f.a * dec;
                    }
                }
            }
        }
    }

    let (conjugate, conjugate_method) = match (oracle.conjugate(&mu), &witness, run.config.variant) {
        (_, Some(z), Variant::Homogeneous) => (fenchel_young(oracle, z), ConjugateMethod::FenchelYoung),
        (Some(v), _, _) => (v, ConjugateMethod::ClosedForm),
        (None, Some(z), _) => (fenchel_young(oracle, z), ConjugateMethod::FenchelYoung),
        (None, None, _) => {
            let top = 2.0 * xbar.iter().copied().fold(0.0, f64::max).max(1.0);
            let bracket = oracles::conjugate_fallback(oracle, &mu, &vec![top; n], None)?;
            (bracket.upper, ConjugateMethod::GridUpperBracket { width: bracket.upper - bracket.lower })
        }
    };
    let objective = y.iter().sum::<f64>() - conjugate;
    Ok(DualSolution { y, mu, conjugate, conjugate_method, objective })
}

/// Outcome of checking a finished run against the guarantees it should meet.
/// `None` marks a check that does not apply to the run.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PdlaCertificate {
    pub feasible: bool,
    pub monotone: bool,
    pub growth_cap: bool,
    pub step_consistency: Option<bool>,
    pub consistency: Option<bool>,
    pub dual_feasible: Option<bool>,
    pub weak_duality: Option<bool>,
    pub robustness: Option<bool>,
    pub robustness_factor: Option<f64>,
}

impl PdlaCertificate {
    pub fn all_hold(&self) -> bool {
        self.feasible
            && self.monotone
            && self.growth_cap
            && [self.step_consistency, self.consistency, self.dual_feasible, self.weak_duality, self.robustness]
                .iter()
                .all(|c| c.unwrap_or(true))
    }
}

pub const DUAL_TOL: f64 = 1e-6;

/// Checks primal feasibility and monotonicity, the per-step rate bounds, the
/// feasible-advice consistency bound and, when a dual is given, dual
/// feasibility, weak duality and the primal/dual robustness ratio.
pub fn certify_pdla(instance: &CoveringInstance, run: &PdlaRun, dual: Option<&DualSolution>) -> PdlaCertificate {
    let cfg = &run.config;
    let lambda = cfg.lambda;
    let slack = 1.0 + cfg.slack;
    let oracle = instance.objective.as_ref();
    let mut cert = PdlaCertificate::default();

    // rows must hold at the end of their own round and at the end of the run
    cert.feasible = run.trace.rounds.iter().all(|r| r.row.dot(&r.x_after) >= 1.0 - cfg.feas_tol)
        && instance.rows.iter().all(|r| r.dot(&run.x) >= 1.0 - cfg.feas_tol);

    let mut prev: Option<&[f64]> = None;
    cert.monotone = run.trace.snapshots().all(|s| {
        let ok = prev.is_none_or(|p| p.iter().zip(s).all(|(a, b)| b >= a));
        prev = Some(s);
        ok
    });

    cert.growth_cap = run
        .trace
        .rounds
        .iter()
        .flat_map(|r| r.steps.iter())
        .all(|s| s.primal_rate() <= 2.0 * slack);

    if lambda < 1.0 && !run.advice.is_empty() {
        let factor = (1.0 + lambda) / (1.0 - lambda);
        cert.step_consistency = Some(
            run.trace
                .rounds
                .iter()
                .filter(|r| r.advice_feasible)
                .flat_map(|r| r.steps.iter())
                .all(|s| s.rate_at_advice <= factor * s.rate_below_advice * slack),
        );
        if run.trace.rounds.iter().all(|r| r.advice_feasible) {
            let fa = oracle.eval(&run.advice);
            cert.consistency = Some(run.metrics.primal_objective <= 2.0 / (1.0 - lambda) * fa * slack + 1e-12);
        }
    }

    if let Some(dual) = dual {
        let rows: Vec<SparseRow> = run.trace.rounds.iter().map(|r| r.row.clone()).collect();
        cert.dual_feasible = Some(dual.y.iter().all(|v| *v >= 0.0) && dual.max_excess(&rows) <= DUAL_TOL);
        cert.weak_duality = Some(oracles::weak_duality_check(run.metrics.primal_objective, dual, DUAL_TOL));
        let p = match cfg.variant {
            Variant::Standard => oracle.growth_exponent(),
            Variant::Homogeneous => oracle.homogeneous_degree().unwrap_or(1.0),
        };
        let factor = robustness_factor(p, run.d_final, lambda);
        cert.robustness_factor = Some(factor);
        cert.robustness = Some(run.metrics.primal_objective <= factor * dual.objective * (1.0 + 2.0 * cfg.slack) + 1e-12);
    }
    cert
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{LinearObjective, PowerNormObjective};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn single_row_linear() -> CoveringInstance {
        let f = Arc::new(LinearObjective::new(vec![1.0]).unwrap());
        CoveringInstance::new(1, vec![SparseRow::new(vec![(0, 1.0)], 1).unwrap()], f).unwrap()
    }

    #[test]
    fn delta_standard_values() {
        assert_eq!(compute_delta_standard(1.0, 5.0, 0.3).unwrap(), 1.0);
        assert_abs_diff_eq!(compute_delta_standard(2.0, 2.0, 1.0).unwrap(), 1.0 / (8.0 * 9f64.ln()), epsilon = 1e-15);
        assert_abs_diff_eq!(compute_delta_standard(2.0, 2.0, 1.0).unwrap(), 0.056_889_951_664, epsilon = 1e-11);
        assert_abs_diff_eq!(compute_delta_standard(2.0, 1.0, 1.0).unwrap(), 0.113_779_903_328, epsilon = 1e-11);
        assert!(matches!(compute_delta_standard(2.0, 1.0, 0.0), Err(PdlaError::Unavailable(_))));
    }

    #[test]
    fn delta_homogeneous_values() {
        assert_abs_diff_eq!(compute_delta_homogeneous(1.0, 1.0, 1.0).unwrap(), 0.910_239_226_627, epsilon = 1e-11);
        assert_abs_diff_eq!(compute_delta_homogeneous(2.0, 2.0, 1.0).unwrap(), 0.227_559_806_657, epsilon = 1e-11);
        let a = compute_delta_homogeneous(2.0, 2.0, 0.5).unwrap();
        let b = compute_delta_homogeneous(2.0, 2.0, 0.1).unwrap();
        assert!(b < a);
    }

    #[test]
    fn branch_offsets() {
        let row = SparseRow::new(vec![(0, 1.0)], 1).unwrap();
        let b = round_branch(&row, Some(&[1.0]), &[0.0], 0.0, 1.0);
        assert!(b.advice_feasible);
        assert_eq!(b.offsets, vec![(0, 1.0)]);

        let row2 = SparseRow::new(vec![(0, 2.0), (1, 0.5)], 2).unwrap();
        let lam1 = round_branch(&row2, Some(&[0.5, 0.0]), &[0.0, 0.0], 1.0, 2.0);
        let none = round_branch(&row2, None, &[0.0, 0.0], 1.0, 2.0);
        assert_eq!(lam1.offsets, none.offsets);

        let infeasible = round_branch(&row2, Some(&[0.1, 0.1]), &[0.0, 0.0], 0.3, 2.0);
        assert!(!infeasible.advice_feasible);
        assert_eq!(infeasible.offsets, vec![(0, 0.25), (1, 1.0)]);
    }

    #[test]
    fn branch_advice_share_vanishes_once_reached() {
        let row = SparseRow::new(vec![(0, 1.0), (1, 1.0)], 2).unwrap();
        // coordinate 0 already at its advice value: whole share goes to coordinate 1
        let b = round_branch(&row, Some(&[0.5, 0.5]), &[0.5, 0.0], 0.0, 2.0);
        assert_eq!(b.offsets, vec![(0, 0.0), (1, 1.0)]);
    }

    #[test]
    fn single_round_closed_form() {
        let inst = single_row_linear();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(run.trace.rounds[0].duration(), 2f64.ln(), epsilon = 1e-9);

        let dual = reconstruct_dual(&run, inst.objective.as_ref()).unwrap();
        assert_abs_diff_eq!(dual.y[0], 2f64.ln() / 3f64.ln(), epsilon = 1e-9);
        assert_eq!(dual.mu, vec![1.0]);
        assert_eq!(dual.conjugate, 0.0);
        let cert = certify_pdla(&inst, &run, Some(&dual));
        assert!(cert.all_hold(), "{cert:?}");
        assert_abs_diff_eq!(run.metrics.primal_objective / dual.objective, 3f64.ln() / 2f64.ln(), epsilon = 1e-8);
    }

    #[test]
    fn satisfied_row_is_a_no_op() {
        let f = Arc::new(LinearObjective::new(vec![1.0]).unwrap());
        let row = SparseRow::new(vec![(0, 1.0)], 1).unwrap();
        let inst = CoveringInstance::new(1, vec![row.clone(), row], f).unwrap();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap();
        assert!(run.trace.rounds[1].steps.is_empty());
        assert_eq!(run.trace.rounds[1].duration(), 0.0);
    }

    #[test]
    fn symmetric_two_variable_round() {
        let f = Arc::new(LinearObjective::new(vec![1.0, 1.0]).unwrap());
        let row = SparseRow::new(vec![(0, 1.0), (1, 1.0)], 2).unwrap();
        let inst = CoveringInstance::new(2, vec![row], f).unwrap();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(run.x[1], 0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(run.trace.rounds[0].duration(), 2f64.ln(), epsilon = 1e-9);
    }

    #[test]
    fn full_trust_follows_advice() {
        let inst = single_row_linear();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![1.0], 0.0).unwrap(), &PdlaConfig::new(0.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 1.0, epsilon = 1e-9);
        assert!(reconstruct_dual(&run, inst.objective.as_ref()).is_err());
        let cert = certify_pdla(&inst, &run, None);
        assert_eq!(cert.consistency, Some(true));
    }

    #[test]
    fn zero_gradient_coordinates_are_free() {
        let f = Arc::new(LinearObjective::new(vec![0.0, 1.0]).unwrap());
        let row = SparseRow::new(vec![(0, 2.0), (1, 1.0)], 2).unwrap();
        let inst = CoveringInstance::new(2, vec![row], f).unwrap();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 0.5, epsilon = 1e-12);
        assert_eq!(run.x[1], 0.0);
        assert_eq!(run.metrics.primal_objective, 0.0);
    }

    #[test]
    fn power_norm_starts_from_vanishing_gradient() {
        let f = Arc::new(PowerNormObjective::identity(2, 2.0).unwrap());
        let row = SparseRow::new(vec![(0, 1.0), (1, 1.0)], 2).unwrap();
        let inst = CoveringInstance::new(2, vec![row], f).unwrap();
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap();
        assert_abs_diff_eq!(run.x[0], 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(run.x[1], 0.5, epsilon = 1e-6);
        let dual = reconstruct_dual(&run, inst.objective.as_ref()).unwrap();
        assert_eq!(dual.conjugate_method, ConjugateMethod::FenchelYoung);
        assert!(certify_pdla(&inst, &run, Some(&dual)).all_hold());
    }

    #[test]
    fn non_monotone_gradient_is_rejected() {
        let f = Arc::new(
            crate::objective::LqSumObjective::new(
                2,
                vec![crate::objective::LqGroup { indices: vec![0, 1], c: 1.0, q: 2.0 }],
            )
            .unwrap(),
        );
        let inst = CoveringInstance::new(2, vec![SparseRow::new(vec![(0, 1.0)], 2).unwrap()], f).unwrap();
        let err = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0)).unwrap_err();
        assert!(matches!(err, PdlaError::Unavailable(_)));
    }
}
