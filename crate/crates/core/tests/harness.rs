use pdla_core::harness::{run_sweep, AdviceMode, ExperimentPlan, Family, GeneratorSpec, InstanceSource, SolverKind};
use pdla_core::io::parse_instance;
use pdla_core::io::InstanceFile;

const SINGLE: &str = r#"{
    "name": "single", "kind": "covering", "n": 1,
    "objective": { "type": "linear", "costs": [1.0] },
    "rows": [[{ "j": 0, "a": 1.0 }]]
}"#;

fn single_plan() -> ExperimentPlan {
    let file: InstanceFile = serde_json::from_str(SINGLE).unwrap();
    ExperimentPlan {
        instances: vec![InstanceSource::Inline(file)],
        lambdas: vec![0.5],
        solvers: vec![SolverKind::Pdla],
        ..ExperimentPlan::default()
    }
}

fn column(csv: &str, name: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let k = header.iter().position(|h| *h == name).unwrap();
    lines.map(|l| l.split(',').nth(k).unwrap().to_string()).collect()
}

#[test]
fn single_round_sweep() {
    parse_instance(SINGLE).unwrap();
    let out = run_sweep(&single_plan(), 1).unwrap();
    let csv = out.to_csv_string().unwrap();
    assert_eq!(out.rows.len(), 3);
    assert_eq!(column(&csv, "lambda"), ["0", "0.5", "1"]);
    let ratios: Vec<f64> = column(&csv, "consistency_ratio").iter().map(|s| s.parse().unwrap()).collect();
    assert!((ratios[0] - 1.0).abs() < 1e-9);
    assert!(ratios[1] <= 4.0);
    assert!(column(&csv, "certified_feasibility").iter().all(|v| v == "true"));
    assert_eq!(out.failures(), 0, "{csv}");
}

#[test]
fn corrupted_dual_is_caught() {
    let plan = ExperimentPlan { corrupt_dual: true, ..single_plan() };
    let out = run_sweep(&plan, 1).unwrap();
    assert!(out.failures() > 0);
    let csv = out.to_csv_string().unwrap();
    assert!(column(&csv, "certified_duality").contains(&"false".to_string()));
}

#[test]
fn empty_instance_gives_header_only() {
    let empty = r#"{ "kind": "covering", "n": 2, "objective": { "type": "linear", "costs": [1.0, 1.0] }, "rows": [] }"#;
    let file: InstanceFile = serde_json::from_str(empty).unwrap();
    let plan = ExperimentPlan { instances: vec![InstanceSource::Inline(file)], ..ExperimentPlan::default() };
    let csv = run_sweep(&plan, 1).unwrap().to_csv_string().unwrap();
    assert_eq!(csv.lines().count(), 1);
}

#[test]
fn mixed_sweep_is_deterministic_across_thread_counts() {
    let gen = |family, n, seed| InstanceSource::Generate(GeneratorSpec { family, count: 2, n, m: 4, seed, q: 2.0 });
    let plan = ExperimentPlan {
        instances: vec![
            gen(Family::CoveringLinear, 3, 1),
            gen(Family::CoveringPowerNorm, 2, 2),
            gen(Family::CoveringLqSum, 3, 3),
            gen(Family::Knapsack, 5, 4),
            gen(Family::Throughput, 3, 5),
        ],
        advice_modes: vec![AdviceMode::Optimal, AdviceMode::Perturbed(0.3), AdviceMode::Adversarial, AdviceMode::Zero],
        lambdas: vec![0.5],
        solvers: vec![SolverKind::Pdla, SolverKind::PdlaHomogeneous, SolverKind::Lq, SolverKind::SwitchReplay, SolverKind::SwitchGreedy],
        seeds: vec![7, 8],
        ..ExperimentPlan::default()
    };
    let a = run_sweep(&plan, 1).unwrap().to_csv_string().unwrap();
    let b = run_sweep(&plan, 4).unwrap().to_csv_string().unwrap();
    assert_eq!(a, b);
    assert!(a.lines().count() > 50);
    assert!(column(&a, "wall_time_ms").iter().all(|v| v == "0"));
}
