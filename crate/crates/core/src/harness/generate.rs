//! Seeded random instance families.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::applications::{
    reduce_knapsack, reduce_resource_benefit, reduce_throughput, Alternative, FlowRequest, Job, KnapsackItem, Network,
    NetworkEdge,
};
use crate::error::{PdlaError, Result};
use crate::io::Instance;
use crate::lq::LqInstance;
use crate::model::{CoveringInstance, SparseRow};
use crate::objective::{LqGroup, LqSumObjective, ObjectiveSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    CoveringLinear,
    CoveringPowerNorm,
    CoveringLqSum,
    Knapsack,
    Benefit,
    Throughput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    pub family: Family,
    #[serde(default = "default_count")]
    pub count: usize,
    /// Variables for covering; items, jobs or requests for packing.
    pub n: usize,
    /// Rows for covering; ignored for packing families.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    /// Exponent for power-norm instances.
    #[serde(default = "default_q")]
    pub q: f64,
}

fn default_count() -> usize {
    1
}

fn default_m() -> usize {
    5
}

fn default_q() -> f64 {
    2.0
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_row(rng: &mut ChaCha8Rng, n: usize, max_support: usize) -> Result<SparseRow> {
    let k = rng.random_range(1..=max_support.min(n).max(1));
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(rng);
    let mut support: Vec<usize> = cols.into_iter().take(k).collect();
    support.sort_unstable();
    SparseRow::new(support.into_iter().map(|j| (j, rng.random_range(0.5..2.0))).collect(), n)
}

fn covering_rows(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Result<Vec<SparseRow>> {
    (0..m).map(|_| random_row(rng, n, 3)).collect()
}

pub fn covering_linear(seed: u64, n: usize, m: usize) -> Result<CoveringInstance> {
    let mut r = rng(seed);
    let costs = (0..n).map(|_| r.random_range(0.5..2.0)).collect();
    let rows = covering_rows(&mut r, n, m)?;
    CoveringInstance::from_spec(n, rows, ObjectiveSpec::Linear { costs })
}

pub fn covering_power_norm(seed: u64, n: usize, m: usize, q: f64) -> Result<CoveringInstance> {
    let mut r = rng(seed);
    let k = n.max(1);
    let b = (0..k).map(|_| (0..n).map(|_| r.random_range(0.1..1.0)).collect()).collect();
    let rows = covering_rows(&mut r, n, m)?;
    CoveringInstance::from_spec(n, rows, ObjectiveSpec::PowerNorm { b, q })
}

/// Disjoint random groups over a random subset of columns; columns left out
/// of every group are free.
pub fn lq_groups(rng: &mut ChaCha8Rng, n: usize) -> Vec<LqGroup> {
    let mut cols: Vec<usize> = (0..n).collect();
    cols.shuffle(rng);
    let covered = if n > 1 && rng.random_bool(0.3) { n - 1 } else { n };
    let mut groups = Vec::new();
    let mut rest = &cols[..covered];
    while !rest.is_empty() {
        let size = rng.random_range(1..=rest.len().min(3));
        let mut indices = rest[..size].to_vec();
        indices.sort_unstable();
        let q = [1.0, 1.5, 2.0, 3.0][rng.random_range(0..4)];
        groups.push(LqGroup { indices, c: rng.random_range(0.5..2.0), q });
        rest = &rest[size..];
    }
    groups
}

pub fn covering_lq(seed: u64, n: usize, m: usize) -> Result<LqInstance> {
    let mut r = rng(seed);
    let groups = lq_groups(&mut r, n);
    let rows = covering_rows(&mut r, n, m)?;
    LqInstance::new(n, rows, LqSumObjective::new(n, groups)?)
}

pub fn knapsack_items(seed: u64, items: usize) -> (Vec<KnapsackItem>, f64) {
    let mut r = rng(seed);
    let items: Vec<KnapsackItem> =
        (0..items).map(|_| KnapsackItem { v: r.random_range(1.0..5.0), w: r.random_range(0.5..3.0) }).collect();
    let total: f64 = items.iter().map(|i| i.w).sum();
    let capacity = r.random_range(0.3..0.6) * total;
    (items, capacity)
}

pub fn benefit_jobs(seed: u64, jobs: usize) -> (Vec<Job>, Vec<f64>) {
    let mut r = rng(seed);
    let resources = r.random_range(1..=3usize);
    let capacities: Vec<f64> = (0..resources).map(|_| r.random_range(1.0..3.0)).collect();
    let jobs = (0..jobs)
        .map(|_| {
            let w = r.random_range(1.0..4.0);
            let alternatives = (0..r.random_range(1..=2))
                .map(|_| {
                    let mut res: Vec<usize> = (0..resources).collect();
                    res.shuffle(&mut r);
                    let k = r.random_range(1..=resources.min(2));
                    let mut picked: Vec<usize> = res.into_iter().take(k).collect();
                    picked.sort_unstable();
                    Alternative { demands: picked.into_iter().map(|j| (j, r.random_range(0.2..1.0) * capacities[j])).collect() }
                })
                .collect();
            Job { w, alternatives }
        })
        .collect();
    (jobs, capacities)
}

pub fn throughput_network(seed: u64, requests: usize) -> (Network, Vec<FlowRequest>) {
    let mut r = rng(seed);
    let nodes = r.random_range(3..=5usize);
    let mut edges = Vec::new();
    // a spanning path keeps most requests routable
    for v in 1..nodes {
        edges.push(NetworkEdge { u: v - 1, v, capacity: [1.0, 2.0][r.random_range(0..2)] });
    }
    for _ in 0..r.random_range(0..=2) {
        let u = r.random_range(0..nodes);
        let v = r.random_range(0..nodes);
        if u != v {
            edges.push(NetworkEdge { u, v, capacity: [1.0, 2.0][r.random_range(0..2)] });
        }
    }
    let reqs = (0..requests)
        .map(|_| {
            let s = r.random_range(0..nodes);
            let mut t = r.random_range(0..nodes - 1);
            if t >= s {
                t += 1;
            }
            FlowRequest { s, t }
        })
        .collect();
    (Network { nodes, edges }, reqs)
}

pub const PATH_CAP: usize = 64;

/// Builds instance `k` of a generator spec; instances are seeded by
/// `seed * 1000 + k`.
pub fn generate(spec: &GeneratorSpec, k: usize) -> Result<Instance> {
    if spec.n == 0 {
        return Err(PdlaError::InvalidInput("generator needs n >= 1".into()));
    }
    let seed = spec.seed.wrapping_mul(1000).wrapping_add(k as u64);
    Ok(match spec.family {
        Family::CoveringLinear => Instance::Covering(covering_linear(seed, spec.n, spec.m)?),
        Family::CoveringPowerNorm => Instance::Covering(covering_power_norm(seed, spec.n, spec.m, spec.q)?),
        Family::CoveringLqSum => Instance::Lq(covering_lq(seed, spec.n, spec.m)?),
        Family::Knapsack => {
            let (items, capacity) = knapsack_items(seed, spec.n);
            Instance::Packing(reduce_knapsack(&items, capacity)?)
        }
        Family::Benefit => {
            let (jobs, caps) = benefit_jobs(seed, spec.n);
            Instance::Packing(reduce_resource_benefit(&jobs, &caps, None)?.0)
        }
        Family::Throughput => {
            let (net, reqs) = throughput_network(seed, spec.n);
            Instance::Packing(reduce_throughput(&net, &reqs, PATH_CAP)?)
        }
    })
}

pub fn family_name(family: Family) -> &'static str {
    match family {
        Family::CoveringLinear => "covering_linear",
        Family::CoveringPowerNorm => "covering_power_norm",
        Family::CoveringLqSum => "covering_lq_sum",
        Family::Knapsack => "knapsack",
        Family::Benefit => "benefit",
        Family::Throughput => "throughput",
    }
}
