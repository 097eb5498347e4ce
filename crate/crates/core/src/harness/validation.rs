//! Property checks over the built-in objectives and utilities.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{gradient_check, validate_objective, validate_utility};
use crate::objective::{
    ConcaveUtility, ConvexObjective, LinearObjective, LinearUtility, LqGroup, LqSumObjective, PowerNormObjective,
    ScalarUtility, SeparableUtility,
};

use super::generate::rng;

pub const GRADIENT_TOL: f64 = 1e-5;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationRow {
    pub name: String,
    pub samples: usize,
    pub violations: usize,
    /// Worst finite-difference gradient error; `None` for utilities.
    pub max_gradient_error: Option<f64>,
    pub first_violation: Option<String>,
}

impl ValidationRow {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.max_gradient_error.is_none_or(|e| e <= GRADIENT_TOL)
    }
}

pub fn builtin_objectives() -> Result<Vec<(String, Arc<dyn ConvexObjective>)>> {
    let b = vec![vec![1.0, 0.5, 0.0], vec![0.2, 1.0, 0.7]];
    let mut out: Vec<(String, Arc<dyn ConvexObjective>)> =
        vec![("linear".into(), Arc::new(LinearObjective::new(vec![1.0, 2.5, 0.3])?))];
    for q in [1.0, 1.5, 2.0, 3.0] {
        out.push((format!("power_norm(q={q})"), Arc::new(PowerNormObjective::new(b.clone(), q)?)));
    }
    let groups = vec![
        LqGroup { indices: vec![0, 2], c: 1.0, q: 2.0 },
        LqGroup { indices: vec![1], c: 0.5, q: 1.0 },
        LqGroup { indices: vec![3, 4], c: 2.0, q: 3.0 },
    ];
    out.push(("lq_sum".into(), Arc::new(LqSumObjective::new(6, groups)?)));
    Ok(out)
}

pub fn builtin_utilities() -> Result<Vec<(String, Arc<dyn ConcaveUtility>)>> {
    Ok(vec![
        ("linear".into(), Arc::new(LinearUtility::weighted(vec![1.0, 2.0, 0.5]))),
        (
            "separable".into(),
            Arc::new(SeparableUtility::new(vec![
                ScalarUtility::Linear { c: 1.0 },
                ScalarUtility::Sqrt { c: 2.0 },
                ScalarUtility::Log1p { c: 0.7 },
            ])?),
        ),
    ])
}

/// Nonnegative points with roughly a quarter of coordinates at zero.
fn samples(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| if r.random_bool(0.25) { 0.0 } else { r.random_range(0.0..3.0) }).collect())
        .collect()
}

/// Interior points, where every built-in objective is differentiable.
fn interior(dim: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..count).map(|_| (0..dim).map(|_| r.random_range(0.05..3.0)).collect()).collect()
}

pub fn check_objective(name: &str, oracle: &dyn ConvexObjective, count: usize, seed: u64) -> Result<ValidationRow> {
    let report = validate_objective(oracle, &samples(oracle.dim(), count, seed))?;
    let mut worst: f64 = 0.0;
    for x in interior(oracle.dim(), count, seed ^ 0x9e37) {
        worst = worst.max(gradient_check(oracle, &x, FD_STEP)?);
    }
    Ok(ValidationRow {
        name: name.into(),
        samples: count,
        violations: report.violations.len(),
        max_gradient_error: Some(worst),
        first_violation: report.violations.first().map(|v| format!("{v:?}")),
    })
}

pub fn check_utility(name: &str, utility: &dyn ConcaveUtility, dim: usize, count: usize, seed: u64) -> ValidationRow {
    let report = validate_utility(utility, &samples(dim, count, seed));
    ValidationRow {
        name: name.into(),
        samples: count,
        violations: report.violations.len(),
        max_gradient_error: None,
        first_violation: report.violations.first().map(|v| format!("{v:?}")),
    }
}

/// Runs the property suite on every built-in oracle.
pub fn validate_builtins(count: usize, seed: u64) -> Result<Vec<ValidationRow>> {
    let mut rows = Vec::new();
    for (name, f) in builtin_objectives()? {
        rows.push(check_objective(&format!("objective/{name}"), f.as_ref(), count, seed)?);
    }
    for (name, g) in builtin_utilities()? {
        rows.push(check_utility(&format!("utility/{name}"), g.as_ref(), 3, count, seed));
    }
    Ok(rows)
}
