use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use serde_json::{json, Value};

use pdla_core::applications::{
    knapsack_advice, reduce_knapsack, reduce_mixed_covering_packing, reduce_onum, reduce_ooic,
    reduce_resource_benefit, reduce_throughput, FlowRequest, Job, KnapsackItem, Network, UtilityRequest,
};
use pdla_core::covering::{certify_pdla, reconstruct_dual, run_pdla, PdlaConfig, Variant};
use pdla_core::harness::validation::{check_objective, validate_builtins};
use pdla_core::harness::{gnuplot_script, run_sweep, ExperimentPlan};
use pdla_core::io::{read_instance, Instance, InstanceFile, LoadedInstance};
use pdla_core::lq::{certify_lq, run_lq, LqConfig};
use pdla_core::model::AdviceProfile;
use pdla_core::objective::ScalarUtility;
use pdla_core::oracles::{offline_opt_covering, offline_opt_packing, OptMode};
use pdla_core::packing::{run_switching, BetaSchedule, FixedValues, GreedySaturation, OfflineReplay, PackingSubroutine};
use pdla_core::{PdlaError, Result};

#[derive(Parser)]
#[command(name = "pdla", version, about = "Learning-augmented online covering and packing solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Standard,
    Homogeneous,
}

#[derive(Clone, Copy, ValueEnum)]
enum SubroutineArg {
    Greedy,
    OfflineReplay,
    Custom,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Auto,
    Grid,
    Enum,
    Greedy,
}

#[derive(Clone, Copy, ValueEnum)]
enum Reducer {
    Knapsack,
    Benefit,
    Throughput,
    Onum,
    Ooic,
    Mixed,
}

#[derive(Subcommand)]
enum OracleCommand {
    /// Offline optimum bracket for an instance file.
    Opt {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "auto")]
        mode: ModeArg,
        #[arg(long)]
        resolution: Option<usize>,
    },
}

#[derive(Subcommand)]
enum Command {
    /// Run the covering solver on an instance file.
    SolveCovering {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "standard")]
        variant: VariantArg,
        /// Overrides the file's confidence.
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        step_eta: Option<f64>,
        #[arg(long)]
        feas_tol: Option<f64>,
        #[arg(long)]
        emit_trace: Option<PathBuf>,
    },
    /// Run the group-norm covering solver on an lq_covering instance file.
    SolveLq {
        instance: PathBuf,
        #[arg(long)]
        lambda: Option<f64>,
        #[arg(long)]
        step_eta: Option<f64>,
        #[arg(long)]
        emit_trace: Option<PathBuf>,
    },
    /// Run the switching framework on a packing instance file.
    SolvePacking {
        instance: PathBuf,
        #[arg(long, value_enum, default_value = "greedy")]
        subroutine: SubroutineArg,
        #[arg(long)]
        lambda: Option<f64>,
        /// Per-round values for the custom subroutine.
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Replay scale; the replayed optimum is divided by it.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        #[arg(long, default_value_t = 1.0)]
        beta: f64,
    },
    /// Offline optimum oracles.
    #[command(subcommand)]
    Oracle(OracleCommand),
    /// Build an instance file from an application description.
    Reduce {
        #[arg(value_enum)]
        kind: Reducer,
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an experiment plan and write its CSV.
    Sweep {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit nonzero if any certificate fails.
        #[arg(long)]
        strict: bool,
        #[arg(long, env = "PDLA_JOBS", default_value_t = 0)]
        jobs: usize,
        /// Also write a gnuplot script for the CSV.
        #[arg(long)]
        gnuplot: Option<PathBuf>,
    },
    /// Check the built-in objectives, or an instance file's objective.
    Validate {
        instance: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn print(v: &Value) -> Result<()> {
    emit(&serde_json::to_string_pretty(v)?)
}

/// Writes a line to stdout; a closed pipe is not an error.
fn emit(text: &str) -> Result<()> {
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn profile(loaded: &LoadedInstance, lambda: Option<f64>) -> Result<AdviceProfile> {
    AdviceProfile::new(loaded.advice.clone(), lambda.unwrap_or(loaded.lambda))
}

fn write_json(path: &Path, v: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(v)? + "\n")?;
    Ok(())
}

fn solve_covering(
    path: &Path,
    variant: VariantArg,
    lambda: Option<f64>,
    step_eta: Option<f64>,
    feas_tol: Option<f64>,
    emit_trace: Option<&Path>,
) -> Result<bool> {
    let loaded = read_instance(path)?;
    let Instance::Covering(inst) = &loaded.instance else {
        return Err(PdlaError::InvalidInput("solve-covering needs a covering instance".into()));
    };
    let adv = profile(&loaded, lambda)?;
    let variant = match variant {
        VariantArg::Standard => Variant::Standard,
        VariantArg::Homogeneous => Variant::Homogeneous,
    };
    let mut cfg = PdlaConfig::new(adv.lambda()).with_variant(variant);
    if let Some(eta) = step_eta {
        cfg = cfg.with_step_eta(eta);
    }
    if let Some(tol) = feas_tol {
        cfg = cfg.with_feas_tol(tol);
    }
    let run = run_pdla(inst, &adv, &cfg)?;
    let dual = if cfg.lambda > 0.0 { Some(reconstruct_dual(&run, inst.objective.as_ref())?) } else { None };
    let cert = certify_pdla(inst, &run, dual.as_ref());
    let mut metrics = run.metrics.clone();
    metrics.dual_objective = dual.as_ref().map(|d| d.objective);
    if let Some(p) = emit_trace {
        write_json(p, &run.trace)?;
    }
    print(&json!({
        "x": run.x,
        "metrics": metrics,
        "d": run.d_final,
        "dual": dual.map(|d| json!({ "y": d.y, "mu": d.mu, "conjugate": d.conjugate, "objective": d.objective })),
        "certificate": cert,
    }))?;
    Ok(cert.all_hold())
}

fn solve_lq(path: &Path, lambda: Option<f64>, step_eta: Option<f64>, emit_trace: Option<&Path>) -> Result<bool> {
    let loaded = read_instance(path)?;
    let Instance::Lq(inst) = &loaded.instance else {
        return Err(PdlaError::InvalidInput("solve-lq needs an lq_covering instance".into()));
    };
    let adv = profile(&loaded, lambda)?;
    let mut cfg = LqConfig::new(adv.lambda());
    if let Some(eta) = step_eta {
        cfg = cfg.with_step_eta(eta);
    }
    let run = run_lq(inst, &adv, &cfg)?;
    let cert = certify_lq(inst, &run);
    if let Some(p) = emit_trace {
        write_json(p, &run.trace)?;
    }
    print(&json!({
        "x": run.x,
        "y": run.y,
        "mu": run.mu,
        "kappa": run.kappa.kappa(),
        "d": run.d_final,
        "metrics": run.metrics,
        "certificate": cert,
    }))?;
    Ok(cert.all_hold())
}

#[allow(clippy::too_many_arguments)]
fn solve_packing(
    path: &Path,
    subroutine: SubroutineArg,
    lambda: Option<f64>,
    values: Vec<f64>,
    scale: f64,
    threshold: f64,
    beta: f64,
) -> Result<bool> {
    let loaded = read_instance(path)?;
    let Instance::Packing(inst) = &loaded.instance else {
        return Err(PdlaError::InvalidInput("solve-packing needs a packing instance".into()));
    };
    let mut adv = profile(&loaded, lambda)?;
    if adv.values().is_empty() {
        adv = AdviceProfile::new(vec![0.0; inst.m()], adv.lambda())?;
    }
    let mut sub: Box<dyn PackingSubroutine> = match subroutine {
        SubroutineArg::Greedy => Box::new(GreedySaturation::new(threshold, inst.n)),
        SubroutineArg::OfflineReplay => {
            let opt = offline_opt_packing(inst, OptMode::Auto, None)?;
            Box::new(OfflineReplay::new(opt.point, scale)?)
        }
        SubroutineArg::Custom => Box::new(FixedValues::new(values)?),
    };
    let run = run_switching(inst, sub.as_mut(), &adv, adv.lambda(), &BetaSchedule::Constant { beta })?;
    print(&json!({
        "y": run.y,
        "y_subroutine": run.state.y_sub,
        "discarded": run.state.discarded,
        "metrics": run.metrics,
        "certificate": run.certificate,
    }))?;
    Ok(run.certificate.all_hold())
}

fn oracle_opt(path: &Path, mode: ModeArg, resolution: Option<usize>) -> Result<bool> {
    let mode = match mode {
        ModeArg::Auto => OptMode::Auto,
        ModeArg::Grid => OptMode::Grid,
        ModeArg::Enum => OptMode::Enum,
        ModeArg::Greedy => OptMode::Greedy,
    };
    let est = match read_instance(path)?.instance {
        Instance::Covering(c) => offline_opt_covering(&c, mode, resolution)?,
        Instance::Lq(l) => offline_opt_covering(&l.to_covering(), mode, resolution)?,
        Instance::Packing(p) => offline_opt_packing(&p, mode, resolution)?,
    };
    print(&serde_json::to_value(est)?)?;
    Ok(true)
}

#[derive(Deserialize)]
struct KnapsackInput {
    items: Vec<KnapsackItem>,
    capacity: f64,
    #[serde(default)]
    fractions: Option<Vec<f64>>,
    #[serde(default)]
    lambda: Option<f64>,
}

#[derive(Deserialize)]
struct BenefitInput {
    jobs: Vec<Job>,
    capacities: Vec<f64>,
    #[serde(default)]
    p_range: Option<f64>,
}

#[derive(Deserialize)]
struct ThroughputInput {
    network: Network,
    requests: Vec<FlowRequest>,
    #[serde(default = "default_path_cap")]
    path_cap: usize,
}

fn default_path_cap() -> usize {
    64
}

#[derive(Deserialize)]
struct OnumInput {
    edges: usize,
    requests: Vec<UtilityRequest>,
}

#[derive(Deserialize)]
struct OoicInput {
    revenues: Vec<ScalarUtility>,
    inventory: f64,
    #[serde(default)]
    slope_bounds: Option<(f64, f64)>,
}

#[derive(Deserialize)]
struct MixedInput {
    b: Vec<Vec<f64>>,
    q: f64,
    rows: Vec<Vec<(usize, f64)>>,
}

fn reduce(kind: Reducer, input: &Path, out: Option<&Path>) -> Result<bool> {
    let text = std::fs::read_to_string(input)?;
    let file = match kind {
        Reducer::Knapsack => {
            let k: KnapsackInput = serde_json::from_str(&text)?;
            let inst = reduce_knapsack(&k.items, k.capacity)?;
            let advice = k.fractions.map(|f| knapsack_advice(&k.items, &f)).transpose()?.unwrap_or_default();
            InstanceFile::from_packing(&inst, advice, k.lambda.unwrap_or(1.0))?
        }
        Reducer::Benefit => {
            let b: BenefitInput = serde_json::from_str(&text)?;
            let (inst, warnings) = reduce_resource_benefit(&b.jobs, &b.capacities, b.p_range)?;
            for w in warnings {
                log::warn!("{w}");
            }
            InstanceFile::from_packing(&inst, vec![], 1.0)?
        }
        Reducer::Throughput => {
            let t: ThroughputInput = serde_json::from_str(&text)?;
            InstanceFile::from_packing(&reduce_throughput(&t.network, &t.requests, t.path_cap)?, vec![], 1.0)?
        }
        Reducer::Onum => {
            let o: OnumInput = serde_json::from_str(&text)?;
            InstanceFile::from_packing(&reduce_onum(o.edges, &o.requests)?, vec![], 1.0)?
        }
        Reducer::Ooic => {
            let o: OoicInput = serde_json::from_str(&text)?;
            InstanceFile::from_packing(&reduce_ooic(&o.revenues, o.inventory, o.slope_bounds)?, vec![], 1.0)?
        }
        Reducer::Mixed => {
            let m: MixedInput = serde_json::from_str(&text)?;
            InstanceFile::from_covering(&reduce_mixed_covering_packing(m.b, m.q, m.rows)?, vec![], 1.0)?
        }
    };
    match out {
        Some(p) => std::fs::write(p, file.to_json()? + "\n")?,
        None => emit(&file.to_json()?)?,
    }
    Ok(true)
}

fn sweep(plan: &Path, out: Option<&Path>, strict: bool, jobs: usize, gnuplot: Option<&Path>) -> Result<bool> {
    let plan = ExperimentPlan::read(plan)?;
    let result = run_sweep(&plan, jobs)?;
    match out.map(Path::to_path_buf).or(plan.output.clone()) {
        Some(p) => {
            result.write_csv(std::fs::File::create(&p)?)?;
            if let Some(g) = gnuplot {
                std::fs::write(g, gnuplot_script(&p))?;
            }
        }
        None => emit(result.to_csv_string()?.trim_end())?,
    }
    let failures = result.failures();
    if failures > 0 {
        log::warn!("{failures} of {} rows failed a certificate", result.rows.len());
    }
    Ok(!strict || failures == 0)
}

fn validate(instance: Option<&Path>, samples: usize, seed: u64) -> Result<bool> {
    let rows = match instance {
        None => validate_builtins(samples, seed)?,
        Some(p) => {
            let objective = match read_instance(p)?.instance {
                Instance::Covering(c) => c.objective,
                Instance::Lq(l) => l.to_covering().objective,
                Instance::Packing(_) => {
                    return Err(PdlaError::InvalidInput("validate takes covering instances".into()));
                }
            };
            vec![check_objective(&p.display().to_string(), objective.as_ref(), samples, seed)?]
        }
    };
    let ok = rows.iter().all(|r| r.passed());
    for r in &rows {
        let status = if r.passed() { "ok  " } else { "FAIL" };
        emit(&format!("{status} {} ({} samples, {} violations)", r.name, r.samples, r.violations))?;
        if let Some(v) = &r.first_violation {
            emit(&format!("     {v}"))?;
        }
    }
    Ok(ok)
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::SolveCovering { instance, variant, lambda, step_eta, feas_tol, emit_trace } => {
            solve_covering(&instance, variant, lambda, step_eta, feas_tol, emit_trace.as_deref())
        }
        Command::SolveLq { instance, lambda, step_eta, emit_trace } => {
            solve_lq(&instance, lambda, step_eta, emit_trace.as_deref())
        }
        Command::SolvePacking { instance, subroutine, lambda, values, scale, threshold, beta } => {
            solve_packing(&instance, subroutine, lambda, values, scale, threshold, beta)
        }
        Command::Oracle(OracleCommand::Opt { instance, mode, resolution }) => oracle_opt(&instance, mode, resolution),
        Command::Reduce { kind, input, out } => reduce(kind, &input, out.as_deref()),
        Command::Sweep { plan, out, strict, jobs, gnuplot } => {
            sweep(&plan, out.as_deref(), strict, jobs, gnuplot.as_deref())
        }
        Command::Validate { instance, samples, seed } => validate(instance.as_deref(), samples, seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
