//! Experiment sweeps: instances × solvers × advice × λ, one CSV row each.
//!
//! A plan is a JSON document:
//!
//! ```json
//! { "instances": [ { "generate": { "family": "covering_linear", "n": 3, "m": 5, "count": 4, "seed": 1 } },
//!                  { "path": "examples/single.json" } ],
//!   "advice_modes": ["optimal", { "perturbed": 0.3 }, "adversarial", "zero"],
//!   "lambdas": [0.25, 0.5],
//!   "solvers": ["pdla", "lq", "switch_replay"],
//!   "seeds": [1, 2] }
//! ```
//!
//! λ = 0 and λ = 1 are always added to the grid. Solvers that do not fit an
//! instance's kind are skipped for it.

pub mod advice;
pub mod generate;
pub mod validation;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covering::{certify_pdla, reconstruct_dual, run_pdla, PdlaConfig, Variant};
use crate::error::{PdlaError, Result};
use crate::io::{read_instance, Instance, InstanceFile};
use crate::lq::{certify_lq, run_lq, LqConfig};
use crate::model::{check_lambda, AdviceProfile, CoveringInstance, RunMetrics};
use crate::oracles::{offline_opt_covering, offline_opt_packing, OptEstimate, OptMode};
use crate::packing::{run_switching, BetaSchedule, GreedySaturation, OfflineReplay, PackingSubroutine};

pub use advice::{generate_advice, AdviceMode};
pub use generate::{Family, GeneratorSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InstanceSource {
    Path(PathBuf),
    Generate(GeneratorSpec),
    Inline(InstanceFile),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    Pdla,
    PdlaHomogeneous,
    Lq,
    SwitchReplay,
    SwitchGreedy,
}

impl SolverKind {
    fn applies(self, instance: &Instance) -> bool {
        match (self, instance) {
            (SolverKind::Pdla, Instance::Covering(c)) => c.objective.monotone_gradient(),
            (SolverKind::PdlaHomogeneous, Instance::Covering(c)) => {
                c.objective.monotone_gradient() && c.objective.homogeneous_degree().is_some()
            }
            (SolverKind::Lq, Instance::Lq(_)) => true,
            (SolverKind::SwitchReplay | SolverKind::SwitchGreedy, Instance::Packing(_)) => true,
            _ => false,
        }
    }

    fn labels(self) -> (&'static str, &'static str) {
        match self {
            SolverKind::Pdla => ("pdla", "standard"),
            SolverKind::PdlaHomogeneous => ("pdla", "homogeneous"),
            SolverKind::Lq => ("lq", "lq"),
            SolverKind::SwitchReplay => ("switch", "offline-replay"),
            SolverKind::SwitchGreedy => ("switch", "greedy"),
        }
    }
}

fn default_modes() -> Vec<AdviceMode> {
    vec![AdviceMode::Optimal]
}

fn default_solvers() -> Vec<SolverKind> {
    vec![SolverKind::Pdla, SolverKind::Lq, SolverKind::SwitchReplay]
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default)]
    pub instances: Vec<InstanceSource>,
    #[serde(default = "default_modes")]
    pub advice_modes: Vec<AdviceMode>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default = "default_solvers")]
    pub solvers: Vec<SolverKind>,
    /// Noise seeds for perturbed advice; other modes run once.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feas_tol: Option<f64>,
    /// Record wall time; off by default so reruns are byte-identical.
    #[serde(default)]
    pub timing: bool,
    /// Inflate every reconstructed dual, so duality certificates fail.
    #[serde(default)]
    pub corrupt_dual: bool,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            instances: Vec::new(),
            advice_modes: default_modes(),
            lambdas: Vec::new(),
            solvers: default_solvers(),
            seeds: default_seeds(),
            output: None,
            step_eta: None,
            feas_tol: None,
            timing: false,
            corrupt_dual: false,
        }
    }
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a plan; relative instance paths are taken from the plan's directory.
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut plan = Self::from_json(&std::fs::read_to_string(path)?)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        for src in &mut plan.instances {
            if let InstanceSource::Path(p) = src {
                if p.is_relative() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(plan)
    }

    /// The λ grid with both endpoints, sorted and deduplicated.
    pub fn lambda_grid(&self) -> Result<Vec<f64>> {
        let mut grid = self.lambdas.clone();
        for &l in &grid {
            check_lambda(l)?;
        }
        grid.extend([0.0, 1.0]);
        grid.sort_by(f64::total_cmp);
        grid.dedup();
        Ok(grid)
    }
}

/// One instance of a sweep with its offline optimum, when one is available.
pub struct SweepInstance {
    pub id: String,
    pub instance: Instance,
    pub opt: Option<OptEstimate>,
}

const GRID_DIM_LIMIT: usize = 6;

pub fn offline_opt(instance: &Instance) -> Option<OptEstimate> {
    let covering = |c: &CoveringInstance| {
        if c.objective.constant_gradient() {
            offline_opt_covering(c, OptMode::Auto, None).ok()
        } else if c.n <= GRID_DIM_LIMIT {
            offline_opt_covering(c, OptMode::Grid, None).ok()
        } else {
            None
        }
    };
    match instance {
        Instance::Covering(c) => covering(c),
        Instance::Lq(l) => covering(&l.to_covering()),
        Instance::Packing(p) => offline_opt_packing(p, OptMode::Auto, None).ok(),
    }
}

pub fn load_instances(plan: &ExperimentPlan) -> Result<Vec<SweepInstance>> {
    let mut out: Vec<(String, Instance)> = Vec::new();
    for (i, src) in plan.instances.iter().enumerate() {
        match src {
            InstanceSource::Path(p) => {
                let loaded = read_instance(p)?;
                let stem = p.file_stem().map(|s| s.to_string_lossy().into_owned());
                let id = loaded.name.or(stem).unwrap_or_else(|| format!("instance-{i}"));
                out.push((id, loaded.instance));
            }
            InstanceSource::Inline(file) => {
                let loaded = file.clone().into_loaded()?;
                out.push((loaded.name.unwrap_or_else(|| format!("inline-{i}")), loaded.instance));
            }
            InstanceSource::Generate(spec) => {
                for k in 0..spec.count {
                    let id = format!("{}-{}-{k}", generate::family_name(spec.family), spec.seed);
                    out.push((id, generate::generate(spec, k)?));
                }
            }
        }
    }
    Ok(out
        .into_par_iter()
        .map(|(id, instance)| {
            let opt = offline_opt(&instance);
            SweepInstance { id, instance, opt }
        })
        .collect())
}

pub const COLUMNS: [&str; 20] = [
    "instance_id",
    "solver",
    "variant",
    "lambda",
    "advice_mode",
    "primal_objective",
    "advice_objective",
    "opt_lower",
    "opt_upper",
    "dual_objective",
    "consistency_ratio",
    "robustness_ratio",
    "max_violation",
    "certified_consistency",
    "certified_robustness",
    "certified_duality",
    "certified_feasibility",
    "rounds",
    "steps",
    "wall_time_ms",
];

/// One CSV row. Certificates are `None` where the check does not apply.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub instance_id: String,
    pub solver: String,
    pub variant: String,
    pub lambda: f64,
    pub advice_mode: String,
    pub metrics: RunMetrics,
    pub certified_consistency: Option<bool>,
    pub certified_robustness: Option<bool>,
    pub certified_duality: Option<bool>,
    pub certified_feasibility: Option<bool>,
    pub error: Option<String>,
}

impl SweepRow {
    pub fn failed(&self) -> bool {
        self.error.is_some()
            || [self.certified_consistency, self.certified_robustness, self.certified_duality, self.certified_feasibility]
                .contains(&Some(false))
    }

    fn record(&self, timing: bool) -> Vec<String> {
        let m = &self.metrics;
        let opt = |v: Option<f64>| v.map(fmt_float).unwrap_or_default();
        let flag = |v: Option<bool>| v.map(|b| b.to_string()).unwrap_or_default();
        let wall = if timing { fmt_float(m.wall_time.as_secs_f64() * 1e3) } else { "0".into() };
        vec![
            self.instance_id.clone(),
            self.solver.clone(),
            self.variant.clone(),
            fmt_float(self.lambda),
            self.advice_mode.clone(),
            fmt_float(m.primal_objective),
            opt(m.advice_objective),
            opt(m.opt_lower),
            opt(m.opt_upper),
            opt(m.dual_objective),
            opt(m.consistency_ratio),
            opt(m.robustness_ratio),
            fmt_float(m.max_constraint_violation),
            flag(self.certified_consistency),
            flag(self.certified_robustness),
            flag(self.certified_duality),
            flag(self.certified_feasibility),
            m.rounds.to_string(),
            m.steps.to_string(),
            wall,
        ]
    }
}

/// `%.12g`: 12 significant digits, trailing zeros dropped.
pub fn fmt_float(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.11e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let trim = |s: &str| {
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s.to_string()
        }
    };
    if (-5..12).contains(&exp) {
        trim(&format!("{v:.*}", (11 - exp) as usize))
    } else {
        format!("{}e{}{:02}", trim(mantissa), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn all_some(flags: &[Option<bool>]) -> Option<bool> {
    let present: Vec<bool> = flags.iter().flatten().copied().collect();
    (!present.is_empty()).then(|| present.iter().all(|b| *b))
}

struct Job<'a> {
    inst: &'a SweepInstance,
    solver: SolverKind,
    mode: AdviceMode,
    seed: u64,
    lambda: f64,
}

fn evaluate(job: &Job<'_>, plan: &ExperimentPlan) -> SweepRow {
    let (solver, variant) = job.solver.labels();
    let mode_label = if job.mode.uses_seed() { format!("{}#{}", job.mode, job.seed) } else { job.mode.to_string() };
    let mut row = SweepRow {
        instance_id: job.inst.id.clone(),
        solver: solver.into(),
        variant: variant.into(),
        lambda: job.lambda,
        advice_mode: mode_label,
        metrics: RunMetrics { primal_objective: f64::NAN, ..RunMetrics::default() },
        certified_consistency: None,
        certified_robustness: None,
        certified_duality: None,
        certified_feasibility: None,
        error: None,
    };
    if let Err(e) = run_job(job, plan, &mut row) {
        log::warn!("{} / {} / {} / lambda {}: {e}", row.instance_id, row.variant, row.advice_mode, row.lambda);
        row.error = Some(e.to_string());
        row.certified_feasibility = Some(false);
    }
    row
}

fn run_job(job: &Job<'_>, plan: &ExperimentPlan, row: &mut SweepRow) -> Result<()> {
    let opt = job.inst.opt.as_ref();
    let advice = generate_advice(&job.inst.instance, job.mode, job.seed, opt)?;
    let profile = AdviceProfile::new(advice, job.lambda)?;
    let lambda = job.lambda;
    let start = Instant::now();
    match (&job.inst.instance, job.solver) {
        (Instance::Covering(c), SolverKind::Pdla | SolverKind::PdlaHomogeneous) => {
            let variant = if job.solver == SolverKind::Pdla { Variant::Standard } else { Variant::Homogeneous };
            let mut cfg = PdlaConfig::new(lambda).with_variant(variant);
            if let Some(eta) = plan.step_eta {
                cfg = cfg.with_step_eta(eta);
            }
            if let Some(tol) = plan.feas_tol {
                cfg = cfg.with_feas_tol(tol);
            }
            let run = run_pdla(c, &profile, &cfg)?;
            let mut dual = if lambda > 0.0 { Some(reconstruct_dual(&run, c.objective.as_ref())?) } else { None };
            if plan.corrupt_dual {
                if let Some(d) = dual.as_mut() {
                    d.y.iter_mut().for_each(|v| *v = 10.0 * *v + 1.0);
                    d.objective = d.y.iter().sum::<f64>() - d.conjugate;
                }
            }
            let cert = certify_pdla(c, &run, dual.as_ref());
            row.metrics = run.metrics.clone();
            row.metrics.dual_objective = dual.as_ref().map(|d| d.objective);
            let oracle_robust = match (opt, cert.robustness_factor) {
                (Some(o), Some(factor)) => {
                    Some(run.metrics.primal_objective <= factor * o.lower * (1.0 + 2.0 * cfg.slack) + 1e-12)
                }
                _ => None,
            };
            row.certified_consistency = all_some(&[cert.step_consistency, cert.consistency]);
            row.certified_robustness = all_some(&[cert.robustness, oracle_robust]);
            row.certified_duality = all_some(&[cert.dual_feasible, cert.weak_duality]);
            row.certified_feasibility = Some(cert.feasible && cert.monotone && cert.growth_cap);
        }
        (Instance::Lq(l), SolverKind::Lq) => {
            let mut cfg = LqConfig::new(lambda);
            if let Some(eta) = plan.step_eta {
                cfg = cfg.with_step_eta(eta);
            }
            if let Some(tol) = plan.feas_tol {
                cfg.feas_tol = tol;
            }
            let mut run = run_lq(l, &profile, &cfg)?;
            if plan.corrupt_dual {
                run.y.iter_mut().for_each(|v| *v = 10.0 * *v + 1.0);
            }
            let cert = certify_lq(l, &run);
            row.metrics = run.metrics.clone();
            let weak = run.metrics.dual_objective.map(|d| run.metrics.primal_objective >= d - 1e-6);
            row.certified_consistency = all_some(&[cert.step_consistency, cert.consistency]);
            row.certified_robustness = all_some(&[Some(cert.pd_ratio), cert.dual_norm]);
            row.certified_duality = all_some(&[Some(cert.mu_consistent && cert.dual_monotone), weak]);
            row.certified_feasibility = Some(cert.feasible && cert.monotone && cert.growth_cap && cert.coordinate_cap);
        }
        (Instance::Packing(p), SolverKind::SwitchReplay | SolverKind::SwitchGreedy) => {
            let mut sub: Box<dyn PackingSubroutine> = match job.solver {
                SolverKind::SwitchReplay => {
                    let o = opt.ok_or_else(|| PdlaError::Unavailable("offline replay needs an offline optimum".into()))?;
                    Box::new(OfflineReplay::new(o.point.clone(), 1.0)?)
                }
                _ => Box::new(GreedySaturation::new(0.0, p.n)),
            };
            let run = run_switching(p, sub.as_mut(), &profile, lambda, &BetaSchedule::default())?;
            row.metrics = run.metrics.clone();
            let c = &run.certificate;
            let vs_opt = opt.and_then(|o| run.robustness_holds(o.lower));
            row.certified_consistency = c.value_vs_advice;
            row.certified_robustness = all_some(&[Some(c.value_vs_subroutine), vs_opt]);
            row.certified_feasibility = Some(c.trimmed_feasible && c.feasibility.unwrap_or(true));
        }
        _ => return Err(PdlaError::InvalidInput("solver does not apply to this instance".into())),
    }
    row.metrics.wall_time = start.elapsed();
    if let Some(o) = opt {
        row.metrics.opt_lower = Some(o.lower);
        row.metrics.opt_upper = Some(o.upper);
        let primal = row.metrics.primal_objective;
        row.metrics.robustness_ratio = match job.inst.instance {
            Instance::Packing(_) => (primal > 0.0).then(|| o.upper / primal),
            _ => (o.lower > 0.0).then(|| primal / o.lower),
        };
    }
    Ok(())
}

pub struct SweepOutput {
    pub rows: Vec<SweepRow>,
    pub timing: bool,
}

impl SweepOutput {
    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.failed()).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(COLUMNS)?;
        for row in &self.rows {
            w.write_record(row.record(self.timing))?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| PdlaError::InvalidInput(e.to_string()))
    }
}

/// Runs every applicable (instance, solver, advice, seed, λ) combination.
/// Rows come back in plan order whatever the completion order. `jobs = 0`
/// uses rayon's default pool.
pub fn run_sweep(plan: &ExperimentPlan, jobs: usize) -> Result<SweepOutput> {
    let body = || -> Result<SweepOutput> {
        let grid = plan.lambda_grid()?;
        let instances = load_instances(plan)?;
        let mut work = Vec::new();
        for inst in instances.iter().filter(|i| i.instance.rounds() > 0) {
            for &solver in plan.solvers.iter().filter(|s| s.applies(&inst.instance)) {
                for &mode in &plan.advice_modes {
                    let seeds: &[u64] = if mode.uses_seed() { &plan.seeds } else { &plan.seeds[..plan.seeds.len().min(1)] };
                    let seeds = if seeds.is_empty() { &[0][..] } else { seeds };
                    for &seed in seeds {
                        for &lambda in &grid {
                            work.push(Job { inst, solver, mode, seed, lambda });
                        }
                    }
                }
            }
        }
        let rows = work.par_iter().map(|job| evaluate(job, plan)).collect();
        Ok(SweepOutput { rows, timing: plan.timing })
    };
    if jobs == 0 {
        return body();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| PdlaError::InvalidInput(e.to_string()))?
        .install(body)
}

/// Gnuplot script plotting the consistency and robustness ratios against λ
/// from a sweep CSV.
pub fn gnuplot_script(csv_path: &Path) -> String {
    let col = |name: &str| COLUMNS.iter().position(|c| *c == name).expect("column") + 1;
    let file = csv_path.display();
    format!(
        "set datafile separator ','\n\
         set key autotitle columnhead\n\
         set xlabel 'lambda'\n\
         set logscale y\n\
         set terminal pngcairo size 900,600\n\
         set output '{file}.png'\n\
         plot '{file}' using {l}:{c} with points title 'consistency ratio', \\\n     \
         '{file}' using {l}:{r} with points title 'robustness ratio'\n",
        l = col("lambda"),
        c = col("consistency_ratio"),
        r = col("robustness_ratio"),
    )
}
