//! Switching between a classical online packing algorithm and advice.
//!
//! Each round mixes the subroutine's value with the advice entry as
//! `lambda y_sub + (1 - lambda) y_adv`, unless accepting the advice entry
//! would push the load of the advice kept so far above `beta_i b`; then the
//! advice is dropped for that round and the subroutine's value is used alone.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};
use crate::model::{check_lambda, AdviceProfile, PackingInstance, RunMetrics, SparseRow};
use crate::objective::ConcaveUtility;

/// Relative slack on the advice acceptance test, so that advice sitting
/// exactly on a capacity is not rejected because of summation order.
const ACCEPT_TOL: f64 = 1e-9;
pub const VALUE_TOL: f64 = 1e-9;

/// What a subroutine sees in round `round`. It never sees the advice.
pub struct RoundInput<'a> {
    pub round: usize,
    pub row: &'a SparseRow,
    pub b: &'a [f64],
    pub utility: &'a dyn ConcaveUtility,
}

/// A classical online packing algorithm. Implementations keep whatever state
/// they need between calls.
pub trait PackingSubroutine: Send {
    fn name(&self) -> &str;

    fn decide(&mut self, input: &RoundInput<'_>) -> Result<f64>;

    /// Competitive ratio, when known exactly.
    fn alpha(&self) -> Option<f64> {
        None
    }
}

/// Takes as much of each arriving variable as the remaining capacity allows,
/// provided its value per unit of the tightest relative capacity exceeds
/// `threshold`. Never overfills.
#[derive(Debug, Clone)]
pub struct GreedySaturation {
    threshold: f64,
    load: Vec<f64>,
}

impl GreedySaturation {
    pub fn new(threshold: f64, n: usize) -> Self {
        Self { threshold, load: vec![0.0; n] }
    }
}

impl PackingSubroutine for GreedySaturation {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&mut self, input: &RoundInput<'_>) -> Result<f64> {
        let entries = input.row.entries();
        let consumption = entries
            .iter()
            .map(|e| if input.b[e.j] > 0.0 { e.a / input.b[e.j] } else { f64::INFINITY })
            .fold(0.0, f64::max);
        let density = input.utility.slope(input.round, 0.0) / consumption;
        if !(density > self.threshold) {
            return Ok(0.0);
        }
        let room = entries
            .iter()
            .map(|e| ((input.b[e.j] - self.load[e.j]) / e.a).max(0.0))
            .fold(f64::INFINITY, f64::min);
        for e in entries {
            self.load[e.j] += e.a * room;
        }
        Ok(room)
    }
}

/// Replays a precomputed offline solution scaled by `1 / scale`, so its
/// competitive ratio is `scale` when the replayed solution is optimal.
#[derive(Debug, Clone)]
pub struct OfflineReplay {
    values: Vec<f64>,
    scale: f64,
}

impl OfflineReplay {
    pub fn new(values: Vec<f64>, scale: f64) -> Result<Self> {
        if !(scale >= 1.0 && scale.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("replay scale {scale} must be >= 1")));
        }
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PdlaError::InvalidInput("replayed values must be finite and >= 0".into()));
        }
        Ok(Self { values, scale })
    }
}

impl PackingSubroutine for OfflineReplay {
    fn name(&self) -> &str {
        "offline-replay"
    }

    fn decide(&mut self, input: &RoundInput<'_>) -> Result<f64> {
        self.values
            .get(input.round)
            .map(|v| v / self.scale)
            .ok_or_else(|| PdlaError::Subroutine { round: input.round, reason: "replay has no value for this round".into() })
    }

    fn alpha(&self) -> Option<f64> {
        Some(self.scale)
    }
}

/// Plays user-supplied per-round values.
#[derive(Debug, Clone)]
pub struct FixedValues {
    values: Vec<f64>,
}

impl FixedValues {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(PdlaError::InvalidInput("subroutine values must be finite and >= 0".into()));
        }
        Ok(Self { values })
    }
}

impl PackingSubroutine for FixedValues {
    fn name(&self) -> &str {
        "custom"
    }

    fn decide(&mut self, input: &RoundInput<'_>) -> Result<f64> {
        self.values
            .get(input.round)
            .copied()
            .ok_or_else(|| PdlaError::Subroutine { round: input.round, reason: "no value supplied for this round".into() })
    }
}

/// Feasibility blow-up allowed for the advice in each round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BetaSchedule {
    Constant { beta: f64 },
    /// One value per round; the last value repeats.
    Explicit { values: Vec<f64> },
    /// `max(1, ln(1 + n kappa_i) / big_b)` with `kappa_i` the running
    /// largest-to-smallest coefficient ratio over columns.
    PackingLp { big_b: f64 },
}

impl Default for BetaSchedule {
    fn default() -> Self {
        Self::Constant { beta: 1.0 }
    }
}

impl BetaSchedule {
    pub fn beta(&self, round: usize, instance: &PackingInstance) -> Result<f64> {
        let beta = match self {
            Self::Constant { beta } => *beta,
            Self::Explicit { values } => *values
                .get(round)
                .or(values.last())
                .ok_or_else(|| PdlaError::InvalidInput("empty beta schedule".into()))?,
            Self::PackingLp { big_b } => {
                if !(*big_b > 0.0) {
                    return Err(PdlaError::InvalidInput("B must be > 0".into()));
                }
                let kappa = instance.column_condition(round + 1);
                ((instance.n as f64 * kappa).ln_1p() / big_b).max(1.0)
            }
        };
        if !(beta >= 1.0 && beta.is_finite()) {
            return Err(PdlaError::InvalidInput(format!("beta = {beta} must be >= 1")));
        }
        Ok(beta)
    }
}

/// Mutable state of a switching run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SwitchState {
    /// Load of the advice entries accepted so far.
    pub kept_load: Vec<f64>,
    pub y: Vec<f64>,
    pub y_sub: Vec<f64>,
    pub betas: Vec<f64>,
    pub discarded: Vec<usize>,
}

impl SwitchState {
    pub fn new(n: usize) -> Self {
        Self { kept_load: vec![0.0; n], ..Self::default() }
    }
}

/// One switching round; returns `y_i` and records it in `state`.
pub fn switch_round(
    state: &mut SwitchState,
    row: &SparseRow,
    y_sub: f64,
    y_adv: f64,
    lambda: f64,
    beta: f64,
    b: &[f64],
) -> Result<f64> {
    check_lambda(lambda)?;
    if !(y_sub >= 0.0 && y_adv >= 0.0 && y_sub.is_finite() && y_adv.is_finite()) {
        return Err(PdlaError::InvalidInput(format!("values must be finite and >= 0, got {y_sub} and {y_adv}")));
    }
    if !(beta >= 1.0) {
        return Err(PdlaError::InvalidInput(format!("beta = {beta} must be >= 1")));
    }
    if state.kept_load.len() != b.len() {
        return Err(PdlaError::DimensionMismatch { expected: b.len(), got: state.kept_load.len() });
    }
    row.check_columns(b.len())?;

    let round = state.y.len();
    let fits = row
        .entries()
        .iter()
        .all(|e| state.kept_load[e.j] + e.a * y_adv <= beta * b[e.j] * (1.0 + ACCEPT_TOL));
    let y = if fits {
        for e in row.entries() {
            state.kept_load[e.j] += e.a * y_adv;
        }
        lambda * y_sub + (1.0 - lambda) * y_adv
    } else {
        state.discarded.push(round);
        y_sub
    };
    state.y.push(y);
    state.y_sub.push(y_sub);
    state.betas.push(beta);
    Ok(y)
}

/// Checks of a finished switching run. `None` marks a check that does not
/// apply.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SwitchCertificate {
    /// Kept advice never exceeded `beta_i b` at any round.
    pub trimmed_feasible: bool,
    /// `A^T y_sub <= beta_final b`.
    pub subroutine_feasible: bool,
    /// `A^T y <= (2 - lambda) beta_final b`, certified when the subroutine
    /// was feasible.
    pub feasibility: Option<bool>,
    /// `g(y) >= lambda g(y_sub)`.
    pub value_vs_subroutine: bool,
    /// `g(y) >= (1 - lambda) g(y')` when nothing was discarded.
    pub value_vs_advice: Option<bool>,
}

impl SwitchCertificate {
    pub fn all_hold(&self) -> bool {
        self.trimmed_feasible
            && self.feasibility.unwrap_or(true)
            && self.value_vs_subroutine
            && self.value_vs_advice.unwrap_or(true)
    }
}

#[derive(Debug, Clone)]
pub struct SwitchRun {
    pub y: Vec<f64>,
    pub state: SwitchState,
    pub lambda: f64,
    pub alpha: Option<f64>,
    pub metrics: RunMetrics,
    pub certificate: SwitchCertificate,
}

impl SwitchRun {
    /// `g(y) >= (lambda / alpha) OPT`, when the subroutine's ratio is known.
    pub fn robustness_holds(&self, opt: f64) -> Option<bool> {
        self.alpha.map(|a| self.metrics.primal_objective >= self.lambda / a * opt - VALUE_TOL)
    }
}

/// A run stopped by its subroutine, with the rounds completed so far.
#[derive(Debug)]
pub struct SwitchAbort {
    pub error: PdlaError,
    pub partial: SwitchState,
}

impl std::fmt::Display for SwitchAbort {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} completed rounds)", self.error, self.partial.y.len())
    }
}

impl std::error::Error for SwitchAbort {}

impl From<SwitchAbort> for PdlaError {
    fn from(abort: SwitchAbort) -> Self {
        abort.error
    }
}

pub fn run_switching(
    instance: &PackingInstance,
    sub: &mut dyn PackingSubroutine,
    advice: &AdviceProfile,
    lambda: f64,
    schedule: &BetaSchedule,
) -> std::result::Result<SwitchRun, SwitchAbort> {
    let mut state = SwitchState::new(instance.n);
    let abort = |error, state: &SwitchState| SwitchAbort { error, partial: state.clone() };
    if let Err(e) = check_lambda(lambda) {
        return Err(abort(e, &state));
    }
    let m = instance.m();
    if advice.values().len() < m {
        return Err(abort(PdlaError::DimensionMismatch { expected: m, got: advice.values().len() }, &state));
    }

    let start = Instant::now();
    for (i, row) in instance.rows.iter().enumerate() {
        let input = RoundInput { round: i, row, b: &instance.b, utility: instance.utility.as_ref() };
        let y_sub = match sub.decide(&input) {
            Ok(v) if v.is_finite() && v >= 0.0 => v,
            Ok(v) => {
                let reason = format!("subroutine returned {v}");
                return Err(abort(PdlaError::Subroutine { round: i, reason }, &state));
            }
            Err(PdlaError::Subroutine { round, reason }) => {
                return Err(abort(PdlaError::Subroutine { round, reason }, &state))
            }
            Err(e) => return Err(abort(PdlaError::Subroutine { round: i, reason: e.to_string() }, &state)),
        };
        let beta = schedule.beta(i, instance).map_err(|e| abort(e, &state))?;
        switch_round(&mut state, row, y_sub, advice.values()[i], lambda, beta, &instance.b)
            .map_err(|e| abort(e, &state))?;
    }

    let y = state.y.clone();
    let advice_prefix = &advice.values()[..m];
    let value = instance.value(&y);
    let sub_value = instance.value(&state.y_sub);
    let advice_value = instance.value(advice_prefix);
    let beta_final = state.betas.last().copied().unwrap_or(1.0);

    let mut kept = vec![0.0; instance.n];
    let mut trimmed_feasible = true;
    for (i, row) in instance.rows.iter().enumerate() {
        if state.discarded.binary_search(&i).is_err() {
            for e in row.entries() {
                kept[e.j] += e.a * advice_prefix[i];
            }
        }
        trimmed_feasible &= kept
            .iter()
            .zip(&instance.b)
            .all(|(l, b)| *l <= state.betas[i] * b * (1.0 + ACCEPT_TOL) + VALUE_TOL);
    }
    let within = |load: &[f64], factor: f64| load.iter().zip(&instance.b).all(|(l, b)| *l <= factor * b + VALUE_TOL);
    let subroutine_feasible = within(&instance.load(&state.y_sub), beta_final);
    let certificate = SwitchCertificate {
        trimmed_feasible,
        subroutine_feasible,
        feasibility: subroutine_feasible.then(|| within(&instance.load(&y), (2.0 - lambda) * beta_final)),
        value_vs_subroutine: value >= lambda * sub_value - VALUE_TOL,
        value_vs_advice: state.discarded.is_empty().then(|| value >= (1.0 - lambda) * advice_value - VALUE_TOL),
    };
    let metrics = RunMetrics {
        primal_objective: value,
        advice_objective: Some(advice_value),
        consistency_ratio: (advice_value > 0.0).then(|| value / advice_value),
        max_constraint_violation: instance.violation(&y),
        rounds: m,
        wall_time: start.elapsed(),
        ..RunMetrics::default()
    };
    Ok(SwitchRun { y, state, lambda, alpha: sub.alpha(), metrics, certificate })
}
