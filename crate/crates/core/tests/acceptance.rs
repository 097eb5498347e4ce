//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its own line; exits nonzero if any fails.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::Rng;

use pdla_core::applications::{mixed_norm, reduce_knapsack, reduce_mixed_covering_packing, reduce_resource_benefit, reduce_throughput};
use pdla_core::covering::{reconstruct_dual, robustness_factor, run_pdla, PdlaConfig};
use pdla_core::harness::generate::{
    benefit_jobs, covering_linear, covering_lq, covering_power_norm, knapsack_items, rng, throughput_network, PATH_CAP,
};
use pdla_core::harness::validation::{validate_builtins, GRADIENT_TOL};
use pdla_core::harness::{generate_advice, run_sweep, AdviceMode, ExperimentPlan, Family, GeneratorSpec, InstanceSource, SolverKind};
use pdla_core::io::Instance;
use pdla_core::lq::{dual_norm_certificate, run_lq, LqConfig};
use pdla_core::model::{AdviceProfile, CoveringInstance, PackingInstance, SolverTrace, SparseRow};
use pdla_core::objective::LinearObjective;
use pdla_core::oracles::{offline_opt_covering, offline_opt_packing, OptMode};
use pdla_core::packing::{run_switching, BetaSchedule, GreedySaturation, OfflineReplay, PackingSubroutine, RoundInput};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, || format!("took {elapsed:?}, limit {limit:?}"))
}

fn random_packing(seed: u64) -> PackingInstance {
    let mut r = rng(seed);
    loop {
        let s = r.random::<u64>();
        let inst = match seed % 3 {
            0 => {
                let (items, cap) = knapsack_items(s, r.random_range(1..=20));
                reduce_knapsack(&items, cap).unwrap()
            }
            1 => {
                let (jobs, caps) = benefit_jobs(s, r.random_range(1..=8));
                reduce_resource_benefit(&jobs, &caps, None).unwrap().0
            }
            _ => {
                let (net, reqs) = throughput_network(s, r.random_range(1..=4));
                reduce_throughput(&net, &reqs, PATH_CAP).unwrap()
            }
        };
        if (1..=20).contains(&inst.m()) {
            return inst;
        }
    }
}

/// A packing vector scaled down until it fits `b`.
fn feasible_advice(inst: &PackingInstance, opt_point: &[f64], seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    let raw: Vec<f64> = if seed % 2 == 0 {
        opt_point.iter().map(|v| v * r.random_range(0.2..1.0)).collect()
    } else {
        (0..inst.m()).map(|_| r.random_range(0.0..2.0)).collect()
    };
    let load = inst.load(&raw);
    let s = load.iter().zip(&inst.b).map(|(l, b)| if *l > 0.0 { b / l } else { f64::INFINITY }).fold(1.0, f64::min);
    raw.iter().map(|v| v * s).collect()
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut runs = 0;
    for seed in 0..200u64 {
        let inst = random_packing(seed);
        let opt = offline_opt_packing(&inst, OptMode::Auto, None).map_err(|e| format!("instance {seed}: {e}"))?;
        let advice = feasible_advice(&inst, &opt.point, seed);
        let g_adv = inst.value(&advice);
        let alpha = [1.0, 1.5, 2.0][seed as usize % 3];
        for lambda in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let mut sub = OfflineReplay::new(opt.point.clone(), alpha).unwrap();
            let profile = AdviceProfile::new(advice.clone(), lambda).unwrap();
            let run = run_switching(&inst, &mut sub, &profile, lambda, &BetaSchedule::default())
                .map_err(|e| format!("instance {seed}: {e}"))?;
            let g = run.metrics.primal_objective;
            let ctx = || format!("instance {seed}, lambda {lambda}");
            ensure(g >= (1.0 - lambda) * g_adv - 1e-9, || format!("{}: g = {g} < (1-l) g(y') = {}", ctx(), (1.0 - lambda) * g_adv))?;
            ensure(g >= lambda / alpha * opt.value - 1e-9, || format!("{}: g = {g} < (l/a) OPT", ctx()))?;
            let load = inst.load(&run.y);
            ensure(load.iter().zip(&inst.b).all(|(l, b)| *l <= (2.0 - lambda) * b + 1e-9), || format!("{}: load over (2-l) b", ctx()))?;
            runs += 1;
        }
    }
    within(start.elapsed(), Duration::from_secs(10))?;
    Ok(format!("{runs} runs in {:?}", start.elapsed()))
}

fn standalone(inst: &PackingInstance, sub: &mut dyn PackingSubroutine) -> Vec<f64> {
    inst.rows
        .iter()
        .enumerate()
        .map(|(i, row)| sub.decide(&RoundInput { round: i, row, b: &inst.b, utility: inst.utility.as_ref() }).unwrap())
        .collect()
}

fn criterion_2() -> Outcome {
    for seed in 0..60u64 {
        let inst = random_packing(seed);
        let opt = offline_opt_packing(&inst, OptMode::Auto, None).map_err(|e| e.to_string())?;
        let advice = feasible_advice(&inst, &opt.point, seed + 1);
        let noisy: Vec<f64> = advice.iter().map(|v| v * 3.0 + 0.1).collect();

        for (name, make) in [
            ("greedy", Box::new(|| Box::new(GreedySaturation::new(0.0, inst.n)) as Box<dyn PackingSubroutine>)
                as Box<dyn Fn() -> Box<dyn PackingSubroutine>>),
            ("replay", Box::new(|| Box::new(OfflineReplay::new(opt.point.clone(), 1.5).unwrap()) as Box<dyn PackingSubroutine>)),
        ] {
            let alone = standalone(&inst, make().as_mut());
            let run = run_switching(&inst, make().as_mut(), &AdviceProfile::new(noisy.clone(), 1.0).unwrap(), 1.0, &BetaSchedule::default())
                .map_err(|e| e.to_string())?;
            let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            ensure(bits(&run.y) == bits(&alone), || format!("instance {seed}, {name}: lambda = 1 differs from the subroutine"))?;

            let run = run_switching(&inst, make().as_mut(), &AdviceProfile::new(advice.clone(), 0.0).unwrap(), 0.0, &BetaSchedule::default())
                .map_err(|e| e.to_string())?;
            ensure(bits(&run.y) == bits(&advice), || format!("instance {seed}, {name}: lambda = 0 differs from the advice"))?;
        }
    }
    Ok("60 instances, two subroutines".into())
}

fn monotone(trace: &SolverTrace) -> bool {
    let snaps: Vec<&[f64]> = trace.snapshots().collect();
    snaps.windows(2).all(|w| w[0].iter().zip(w[1]).all(|(a, b)| b >= a))
}

fn rows_hold(trace: &SolverTrace) -> bool {
    trace.rounds.iter().all(|r| r.row.dot(&r.x_after) >= 1.0 - 1e-9)
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let modes = [AdviceMode::Optimal, AdviceMode::Perturbed(0.5), AdviceMode::Adversarial, AdviceMode::Zero];
    for seed in 0..200u64 {
        let mut r = rng(10_000 + seed);
        let n = r.random_range(1..=6);
        let m = r.random_range(1..=10);
        let lambda = [0.0, 0.25, 0.5, 0.75, 1.0][r.random_range(0..5)];
        let mode = modes[r.random_range(0..4)];
        let ctx = |kind: &str| format!("instance {seed} ({kind}, n {n}, m {m}, lambda {lambda}, {mode})");
        match seed % 3 {
            0 | 1 => {
                let inst = if seed % 3 == 0 {
                    covering_linear(seed, n, m)
                } else {
                    covering_power_norm(seed, n, m, [1.5, 2.0, 3.0][r.random_range(0..3)])
                }
                .unwrap();
                let wrapped = Instance::Covering(inst.clone());
                let opt = offline_opt_covering(&inst, if seed % 3 == 0 { OptMode::Auto } else { OptMode::Grid }, None).ok();
                let advice = generate_advice(&wrapped, mode, seed, opt.as_ref()).map_err(|e| format!("{}: {e}", ctx("covering")))?;
                let run = run_pdla(&inst, &AdviceProfile::new(advice, lambda).unwrap(), &PdlaConfig::new(lambda))
                    .map_err(|e| format!("{}: {e}", ctx("covering")))?;
                ensure(rows_hold(&run.trace), || format!("{}: row unmet", ctx("covering")))?;
                ensure(monotone(&run.trace), || format!("{}: x decreased", ctx("covering")))?;
            }
            _ => {
                let inst = covering_lq(seed, n, m).unwrap();
                let wrapped = Instance::Lq(inst.clone());
                let opt = offline_opt_covering(&inst.to_covering(), OptMode::Grid, None).ok();
                let advice = generate_advice(&wrapped, mode, seed, opt.as_ref()).map_err(|e| format!("{}: {e}", ctx("lq_sum")))?;
                let run = run_lq(&inst, &AdviceProfile::new(advice, lambda).unwrap(), &LqConfig::new(lambda))
                    .map_err(|e| format!("{}: {e}", ctx("lq_sum")))?;
                ensure(rows_hold(&run.trace), || format!("{}: row unmet", ctx("lq_sum")))?;
                ensure(monotone(&run.trace), || format!("{}: x decreased", ctx("lq_sum")))?;
            }
        }
    }
    within(start.elapsed(), Duration::from_secs(60))?;
    Ok(format!("200 instances in {:?}", start.elapsed()))
}

fn random_covering(seed: u64) -> CoveringInstance {
    let mut r = rng(20_000 + seed);
    let n = r.random_range(1..=5);
    let m = r.random_range(1..=8);
    if seed % 2 == 0 {
        covering_linear(seed, n, m).unwrap()
    } else {
        covering_power_norm(seed, n, m, [1.5, 2.0, 3.0][r.random_range(0..3)]).unwrap()
    }
}

fn criterion_4() -> Outcome {
    let mut steps = 0usize;
    for seed in 0..100u64 {
        let inst = random_covering(seed);
        let wrapped = Instance::Covering(inst.clone());
        let opt = offline_opt_covering(&inst, if seed % 2 == 0 { OptMode::Auto } else { OptMode::Grid }, None)
            .map_err(|e| e.to_string())?;
        for advice_mode in [AdviceMode::Optimal, AdviceMode::Adversarial, AdviceMode::Perturbed(0.4)] {
            let mut advice = generate_advice(&wrapped, advice_mode, seed, Some(&opt)).map_err(|e| e.to_string())?;
            // lift so that every row holds and every round takes the feasible branch
            let worst = inst.rows.iter().map(|r| r.dot(&advice)).fold(f64::INFINITY, f64::min);
            if worst < 1.0 {
                let s = (1.0 + 1e-12) / worst;
                advice.iter_mut().for_each(|v| *v *= s);
            }
            let fa = inst.objective.eval(&advice);
            for lambda in [0.0, 0.25, 0.5, 0.75] {
                let run = run_pdla(&inst, &AdviceProfile::new(advice.clone(), lambda).unwrap(), &PdlaConfig::new(lambda))
                    .map_err(|e| e.to_string())?;
                let ctx = || format!("instance {seed}, {advice_mode}, lambda {lambda}");
                ensure(run.trace.rounds.iter().all(|r| r.advice_feasible), || format!("{}: infeasible branch taken", ctx()))?;
                let f = run.metrics.primal_objective;
                let bound = 2.0 / (1.0 - lambda) * fa * 1.01;
                ensure(f <= bound, || format!("{}: f = {f} > {bound}", ctx()))?;
                let factor = (1.0 + lambda) / (1.0 - lambda);
                for s in run.trace.rounds.iter().flat_map(|r| &r.steps) {
                    ensure(s.rate_at_advice <= factor * s.rate_below_advice * 1.01, || {
                        format!("{}: step rates {} vs {}", ctx(), s.rate_at_advice, s.rate_below_advice)
                    })?;
                    steps += 1;
                }
            }
        }
    }
    Ok(format!("100 instances, {steps} steps"))
}

fn criterion_5() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..100u64 {
        let inst = random_covering(seed);
        let wrapped = Instance::Covering(inst.clone());
        let opt = offline_opt_covering(&inst, if seed % 2 == 0 { OptMode::Auto } else { OptMode::Grid }, None)
            .map_err(|e| e.to_string())?;
        let mode = [AdviceMode::Zero, AdviceMode::Adversarial, AdviceMode::Perturbed(1.0), AdviceMode::Optimal][seed as usize % 4];
        let advice = generate_advice(&wrapped, mode, seed, Some(&opt)).map_err(|e| e.to_string())?;
        let p = inst.objective.growth_exponent();
        for lambda in [0.25, 0.5, 1.0] {
            let run = run_pdla(&inst, &AdviceProfile::new(advice.clone(), lambda).unwrap(), &PdlaConfig::new(lambda))
                .map_err(|e| e.to_string())?;
            let dual = reconstruct_dual(&run, inst.objective.as_ref()).map_err(|e| e.to_string())?;
            let f = run.metrics.primal_objective;
            let r = robustness_factor(p, run.d_final, lambda);
            let ctx = || format!("instance {seed}, {mode}, lambda {lambda}");
            ensure(f <= r * dual.objective * 1.02, || format!("{}: f = {f} > R D = {}", ctx(), r * dual.objective))?;
            ensure(f >= dual.objective - 1e-6, || format!("{}: weak duality f = {f} < D = {}", ctx(), dual.objective))?;
            ensure(f <= r * opt.upper * 1.02, || format!("{}: f = {f} > R OPT = {}", ctx(), r * opt.upper))?;
            ensure(f <= r * opt.lower * 1.02, || format!("{}: f = {f} > R OPT_lower = {}", ctx(), r * opt.lower))?;
            worst = worst.max(f / (r * opt.lower));
        }
    }
    Ok(format!("100 instances, worst f / (R OPT_lower) = {worst:.4}"))
}

const ROUNDOFF_FLOOR: f64 = 1e-9;

fn criterion_6() -> Outcome {
    let f = Arc::new(LinearObjective::new(vec![1.0]).unwrap());
    let inst = CoveringInstance::new(1, vec![SparseRow::new(vec![(0, 1.0)], 1).unwrap()], f.clone()).unwrap();
    let target_y = 2f64.ln() / 3f64.ln();
    let mut errors = Vec::new();
    for eta in [1e-2, 1e-3, 1e-4] {
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], 1.0).unwrap(), &PdlaConfig::new(1.0).with_step_eta(eta))
            .map_err(|e| e.to_string())?;
        let tau: f64 = run.trace.rounds[0].duration();
        let y = reconstruct_dual(&run, f.as_ref()).map_err(|e| e.to_string())?.y[0];
        let ctx = || format!("step_eta {eta}");
        ensure((run.x[0] - 1.0).abs() <= 1e-6, || format!("{}: x = {}", ctx(), run.x[0]))?;
        ensure((tau - 2f64.ln()).abs() <= 1e-4, || format!("{}: tau = {tau}", ctx()))?;
        ensure((y - target_y).abs() <= 1e-3, || format!("{}: y = {y}", ctx()))?;
        errors.push((tau - 2f64.ln()).abs() + (y - target_y).abs());
    }
    // each step is exact for a linear objective, so the error sits at the roundoff floor
    ensure(errors.windows(2).all(|w| w[1] <= w[0] + ROUNDOFF_FLOOR), || format!("errors do not shrink: {errors:?}"))?;
    Ok(format!("errors {:?}", errors.iter().map(|e| format!("{e:.1e}")).collect::<Vec<_>>()))
}

fn criterion_7() -> Outcome {
    for seed in 0..100u64 {
        let mut r = rng(30_000 + seed);
        let n = r.random_range(1..=6);
        let m = r.random_range(1..=10);
        let inst = covering_lq(seed, n, m).unwrap();
        let advice: Vec<f64> = if seed % 2 == 0 { vec![] } else { (0..n).map(|_| r.random_range(0.0..1.5)).collect() };
        for lambda in [0.25, 0.5, 1.0] {
            let run = run_lq(&inst, &AdviceProfile::new(advice.clone(), lambda).unwrap(), &LqConfig::new(lambda))
                .map_err(|e| e.to_string())?;
            let ctx = || format!("instance {seed}, lambda {lambda}");
            let total: f64 = run.y.iter().sum();
            let f = run.metrics.primal_objective;
            ensure(f <= 2.0 * total * 1.02, || format!("{}: f = {f} > 2 sum y = {}", ctx(), 2.0 * total))?;
            dual_norm_certificate(&run.mu, &inst.objective, run.kappa.kappa(), run.d_final, lambda)
                .map_err(|e| format!("{}: {e}", ctx()))?;
            let mut aty = vec![0.0; n];
            for (row, y) in inst.rows.iter().zip(&run.y) {
                for e in row.entries() {
                    aty[e.j] += e.a * y;
                }
            }
            ensure(aty.iter().zip(&run.mu).all(|(a, b)| (a - b).abs() <= 1e-12), || format!("{}: mu != A^T y", ctx()))?;
            ensure(
                run.y_history.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b >= a)),
                || format!("{}: y decreased", ctx()),
            )?;
        }
    }
    Ok("100 instances".into())
}

fn criterion_8() -> Outcome {
    let q = 2.0;
    let inst = reduce_mixed_covering_packing(vec![vec![1.0, 0.0], vec![0.0, 1.0]], q, vec![vec![(0, 1.0), (1, 1.0)]])
        .map_err(|e| e.to_string())?;
    let opt = offline_opt_covering(&inst, OptMode::Grid, None).map_err(|e| e.to_string())?;
    let opt_norm = mixed_norm(opt.upper, q);
    let mut worst: f64 = 0.0;
    for lambda in [1.0, 0.5, 0.25] {
        let run = run_pdla(&inst, &AdviceProfile::new(vec![], lambda).unwrap(), &PdlaConfig::new(lambda)).map_err(|e| e.to_string())?;
        if lambda == 1.0 {
            ensure(run.x.iter().all(|v| (v - 0.5).abs() <= 1e-4), || format!("x = {:?}", run.x))?;
        }
        let norm = mixed_norm(run.metrics.primal_objective, q);
        let d = run.d_final;
        let bound = 4.0 * q * (1.0 + 2.0 * d * d / lambda).ln() * opt_norm;
        ensure(norm <= bound, || format!("lambda {lambda}: norm {norm} > {bound}"))?;
        worst = worst.max(norm / bound);
    }
    Ok(format!("OPT = {opt_norm:.6}, worst norm / bound = {worst:.4}"))
}

fn criterion_9() -> Outcome {
    let rows = validate_builtins(100, 9).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for row in &rows {
        ensure(row.violations == 0, || format!("{}: {:?}", row.name, row.first_violation))?;
        if let Some(e) = row.max_gradient_error {
            ensure(e <= GRADIENT_TOL, || format!("{}: gradient error {e}", row.name))?;
            worst = worst.max(e);
        }
    }
    Ok(format!("{} oracles, worst gradient error {worst:.1e}", rows.len()))
}

fn criterion_10() -> Outcome {
    let gen = |family, n, m, seed| InstanceSource::Generate(GeneratorSpec { family, count: 3, n, m, seed, q: 2.0 });
    let plan = ExperimentPlan {
        instances: vec![
            gen(Family::CoveringLinear, 4, 6, 1),
            gen(Family::CoveringPowerNorm, 3, 5, 2),
            gen(Family::CoveringLqSum, 4, 5, 3),
            gen(Family::Knapsack, 8, 0, 4),
            gen(Family::Benefit, 5, 0, 5),
            gen(Family::Throughput, 3, 0, 6),
        ],
        advice_modes: vec![AdviceMode::Optimal, AdviceMode::Perturbed(0.5), AdviceMode::Adversarial, AdviceMode::Zero],
        lambdas: vec![0.25, 0.5, 0.75],
        solvers: vec![
            SolverKind::Pdla,
            SolverKind::PdlaHomogeneous,
            SolverKind::Lq,
            SolverKind::SwitchReplay,
            SolverKind::SwitchGreedy,
        ],
        seeds: vec![1, 2, 3],
        ..ExperimentPlan::default()
    };
    let first = run_sweep(&plan, 1).map_err(|e| e.to_string())?.to_csv_string().map_err(|e| e.to_string())?;
    let second = run_sweep(&plan, 4).map_err(|e| e.to_string())?.to_csv_string().map_err(|e| e.to_string())?;
    ensure(first == second, || "CSV differs between runs".into())?;
    Ok(format!("{} rows identical", first.lines().count() - 1))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("switching guarantees", criterion_1),
        ("switching endpoints", criterion_2),
        ("covering feasibility and monotonicity", criterion_3),
        ("consistency constant", criterion_4),
        ("robustness and weak duality", criterion_5),
        ("single-round closed form", criterion_6),
        ("lq certificates", criterion_7),
        ("mixed covering/packing", criterion_8),
        ("objective property suite", criterion_9),
        ("sweep determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
