//! Advice vectors for sweeps.

use std::fmt;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PdlaError, Result};
use crate::io::Instance;
use crate::model::{CoveringInstance, PackingInstance, SparseRow};
use crate::oracles::OptEstimate;

use super::generate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdviceMode {
    Optimal,
    /// Multiplicative log-normal noise with standard deviation `sigma`.
    Perturbed(f64),
    Adversarial,
    Zero,
}

impl AdviceMode {
    pub fn uses_seed(&self) -> bool {
        matches!(self, AdviceMode::Perturbed(s) if *s > 0.0)
    }
}

impl fmt::Display for AdviceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AdviceMode::Optimal => write!(f, "optimal"),
            AdviceMode::Perturbed(s) => write!(f, "perturbed({s})"),
            AdviceMode::Adversarial => write!(f, "adversarial"),
            AdviceMode::Zero => write!(f, "zero"),
        }
    }
}

impl std::str::FromStr for AdviceMode {
    type Err = PdlaError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "optimal" => return Ok(Self::Optimal),
            "adversarial" => return Ok(Self::Adversarial),
            "zero" => return Ok(Self::Zero),
            _ => {}
        }
        s.strip_prefix("perturbed(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|v| v.parse::<f64>().ok())
            .filter(|v| *v >= 0.0 && v.is_finite())
            .map(Self::Perturbed)
            .ok_or_else(|| PdlaError::InvalidInput(format!("unknown advice mode `{s}`")))
    }
}

/// Advice for `instance` under `mode`. `opt` is needed for the optimal and
/// perturbed modes; the advice has one entry per variable for covering and
/// one per round for packing.
pub fn generate_advice(instance: &Instance, mode: AdviceMode, seed: u64, opt: Option<&OptEstimate>) -> Result<Vec<f64>> {
    let len = match instance {
        Instance::Covering(c) => c.n,
        Instance::Lq(l) => l.n,
        Instance::Packing(p) => p.m(),
    };
    let optimal = || {
        opt.map(|o| o.point.clone())
            .filter(|p| p.len() == len)
            .ok_or_else(|| PdlaError::Unavailable("optimal advice needs an offline optimum".into()))
    };
    match mode {
        AdviceMode::Zero => Ok(vec![0.0; len]),
        AdviceMode::Optimal => optimal(),
        AdviceMode::Perturbed(sigma) => {
            let base = optimal()?;
            if sigma == 0.0 {
                return Ok(base);
            }
            let normal = Normal::new(0.0, sigma).map_err(|e| PdlaError::InvalidInput(e.to_string()))?;
            let mut r = rng(seed);
            Ok(base.into_iter().map(|v| (v * normal.sample(&mut r).exp()).max(0.0)).collect())
        }
        AdviceMode::Adversarial => Ok(match instance {
            Instance::Covering(c) => adversarial_covering(c),
            Instance::Lq(l) => adversarial_covering(&l.to_covering()),
            Instance::Packing(p) => adversarial_packing(p),
        }),
    }
}

/// Scales `x` up until every row holds; `None` if some row cannot be met.
fn lift(rows: &[SparseRow], x: &[f64]) -> Option<Vec<f64>> {
    let mut s: f64 = 0.0;
    for r in rows {
        let v = r.dot(x);
        if v <= 0.0 {
            return None;
        }
        s = s.max(1.0 / v);
    }
    Some(x.iter().map(|v| v * s).collect())
}

const ADVERSARIAL_LEVELS: usize = 3;

/// The most expensive feasible point among a coarse lifted grid and the
/// vector that covers every row with its cheapest coefficient alone.
fn adversarial_covering(inst: &CoveringInstance) -> Vec<f64> {
    let n = inst.n;
    let mut top = vec![0.0; n];
    for r in &inst.rows {
        for e in r.entries() {
            top[e.j] = f64::max(top[e.j], 1.0 / e.a);
        }
    }
    let mut best = (inst.objective.eval(&top), top);
    if n <= 6 {
        let total = ADVERSARIAL_LEVELS.pow(n as u32);
        let mut point = vec![0.0; n];
        for code in 1..total {
            let mut c = code;
            for p in point.iter_mut() {
                *p = (c % ADVERSARIAL_LEVELS) as f64;
                c /= ADVERSARIAL_LEVELS;
            }
            if let Some(x) = lift(&inst.rows, &point) {
                let v = inst.objective.eval(&x);
                if v > best.0 {
                    best = (v, x);
                }
            }
        }
    }
    best.1
}

/// Each round alone at its largest individually feasible value; jointly
/// these overload the shared constraints.
fn adversarial_packing(inst: &PackingInstance) -> Vec<f64> {
    inst.rows
        .iter()
        .map(|r| r.entries().iter().map(|e| inst.b[e.j] / e.a).fold(f64::INFINITY, f64::min))
        .map(|v| if v.is_finite() { v } else { 0.0 })
        .collect()
}
