//! Experiment configs, the factorial test bed, and the benchmark, long lead
//! time and scaling pipelines with their report rows.

use std::collections::BTreeMap;
use std::path::PathBuf;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::bounds::{asymptotic_sweep, lower_bound};
use crate::demand::{DemandFamily, DemandSpec};
use crate::dp::DpConfig;
use crate::error::{ensure, Error, Result};
use crate::exec;
use crate::model::{Instance, InstanceSpec};
use crate::optimizer::{optimize_policy, OptimizedPolicy, OptimizerConfig};
use crate::policy::{PolicyFamily, PolicyParams};
use crate::report::config_hash;
use crate::sim::SimulationConfig;

fn default_families() -> Vec<PolicyFamily> {
    vec![PolicyFamily::Peip, PolicyFamily::Tbs, PolicyFamily::Di]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongLeadSpec {
    /// Lead time differences; l_r = l_e + l.
    pub l_values: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub scales: Vec<f64>,
}

/// Everything a CLI run needs; sections irrelevant to a subcommand are
/// ignored by it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default)]
    pub simulation: SimulationConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
    #[serde(default)]
    pub instance: Option<InstanceSpec>,
    #[serde(default)]
    pub policy: Option<PolicyParams>,
    #[serde(default = "default_families")]
    pub families: Vec<PolicyFamily>,
    #[serde(default)]
    pub testbed: TestbedSpec,
    #[serde(default)]
    pub longlead: Option<LongLeadSpec>,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    #[serde(default)]
    pub dp: DpConfig,
    /// Periods written to trace.csv by `evaluate`; 0 disables the trace.
    #[serde(default)]
    pub trace_periods: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting errors as `origin:line:column: message`.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| Error::Config(format!("{origin}:{}:{}: {e}", e.line(), e.column())))?;
        Ok(cfg)
    }

    pub fn simulation_config(&self) -> SimulationConfig {
        self.simulation.with_seed(self.seed)
    }

    /// Hash of everything that affects results (the output directory does not).
    pub fn hash(&self) -> String {
        config_hash(&ExperimentConfig { out_dir: None, ..self.clone() })
    }

    pub fn instance(&self) -> Result<Instance> {
        self.instance
            .as_ref()
            .ok_or_else(|| Error::Config("config has no `instance` section".into()))?
            .build()
    }
}

fn paper_p() -> Vec<f64> {
    vec![4.0, 9.0, 19.0, 49.0, 99.0]
}
fn paper_l_r() -> Vec<usize> {
    vec![2, 3, 4, 5]
}
fn paper_cov() -> Vec<f64> {
    vec![0.15, 0.25, 0.5, 1.0, 1.5, 2.0]
}
fn paper_delta() -> Vec<f64> {
    vec![0.1, 0.2, 0.4]
}
fn one() -> f64 {
    1.0
}
fn fifty() -> f64 {
    50.0
}

/// Factorial grid; c_e = delta p l for every instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestbedSpec {
    #[serde(default = "paper_p")]
    pub p: Vec<f64>,
    #[serde(default = "paper_l_r")]
    pub l_r: Vec<usize>,
    #[serde(default = "paper_cov")]
    pub cov: Vec<f64>,
    #[serde(default = "paper_delta")]
    pub delta: Vec<f64>,
    #[serde(default)]
    pub l_e: usize,
    #[serde(default = "one")]
    pub h: f64,
    #[serde(default = "fifty")]
    pub mean: f64,
    /// Random subset of this many instances (ids keep their grid positions).
    #[serde(default)]
    pub sample: Option<usize>,
}

impl Default for TestbedSpec {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestbedInstance {
    pub id: usize,
    pub delta: f64,
    pub spec: InstanceSpec,
}

/// Grid in the order p, l_r, cov, delta (last varies fastest).
pub fn generate_testbed(spec: &TestbedSpec, seed: u64) -> Result<Vec<TestbedInstance>> {
    for (name, empty) in [
        ("p", spec.p.is_empty()),
        ("l_r", spec.l_r.is_empty()),
        ("cov", spec.cov.is_empty()),
        ("delta", spec.delta.is_empty()),
    ] {
        ensure(!empty, || format!("test bed level list `{name}` is empty"))?;
    }
    let mut out = Vec::new();
    for &p in &spec.p {
        for &l_r in &spec.l_r {
            for &cov in &spec.cov {
                for &delta in &spec.delta {
                    let l = l_r.checked_sub(spec.l_e).filter(|&l| l > 0).ok_or_else(|| {
                        Error::Validation(format!("l_r = {l_r} must exceed l_e = {}", spec.l_e))
                    })?;
                    let inst = InstanceSpec {
                        p,
                        h: spec.h,
                        c_e: delta * p * l as f64,
                        c_r: 0.0,
                        l_e: spec.l_e,
                        l_r,
                        demand: DemandSpec::negative_binomial(spec.mean, cov),
                    };
                    out.push(TestbedInstance { id: out.len(), delta, spec: inst });
                }
            }
        }
    }
    if let Some(k) = spec.sample {
        ensure(k >= 1 && k <= out.len(), || {
            format!("sample size {k} must be between 1 and {}", out.len())
        })?;
        let mut rng = Pcg64::seed_from_u64(seed);
        let mut keep = sample(&mut rng, out.len(), k).into_vec();
        keep.sort_unstable();
        out = keep.into_iter().map(|i| out[i].clone()).collect();
    }
    Ok(out)
}

/// Seed for one instance of a run; policies on that instance share it.
pub fn instance_seed(seed: u64, id: usize) -> u64 {
    seed.wrapping_add(id as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub id: usize,
    pub p: f64,
    pub h: f64,
    pub c_e: f64,
    pub c_r: f64,
    pub l_e: usize,
    pub l_r: usize,
    pub demand: DemandFamily,
    pub mean: Option<f64>,
    pub cov: Option<f64>,
    pub delta: f64,
    pub seed: u64,
    pub config_hash: String,
}

pub fn instance_rows(testbed: &[TestbedInstance], seed: u64, hash: &str) -> Vec<InstanceRow> {
    testbed
        .iter()
        .map(|t| InstanceRow {
            id: t.id,
            p: t.spec.p,
            h: t.spec.h,
            c_e: t.spec.c_e,
            c_r: t.spec.c_r,
            l_e: t.spec.l_e,
            l_r: t.spec.l_r,
            demand: t.spec.demand.family,
            mean: t.spec.demand.mean,
            cov: t.spec.demand.cov,
            delta: t.delta,
            seed: instance_seed(seed, t.id),
            config_hash: hash.to_string(),
        })
        .collect()
}

/// (S_e, regular parameter, cap) columns of a policy.
pub fn param_columns(params: &PolicyParams) -> (Option<f64>, Option<f64>, Option<f64>) {
    match *params {
        PolicyParams::Peip { s_e, v } => (Some(s_e), Some(v), None),
        PolicyParams::Tbs { s_e, r } => (Some(s_e), Some(r), None),
        PolicyParams::Si { s_e, delta } | PolicyParams::Di { s_e, delta } => (Some(s_e), Some(delta), None),
        PolicyParams::Cdi { s_e, delta, cap } => (Some(s_e), Some(delta), Some(cap)),
        PolicyParams::SingleRegular { s_r } => (None, Some(s_r), None),
        PolicyParams::SingleExpedited { s_e } => (Some(s_e), None, None),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub instance_id: usize,
    pub family: PolicyFamily,
    /// Family actually returned (single-regular on degenerate instances).
    pub policy: Option<PolicyFamily>,
    pub p: f64,
    pub l_r: usize,
    pub cov: Option<f64>,
    pub delta: Option<f64>,
    pub c_e: f64,
    pub s_e: Option<f64>,
    pub param: Option<f64>,
    pub cap: Option<f64>,
    pub cost: Option<f64>,
    pub halfwidth: Option<f64>,
    pub converged: Option<bool>,
    pub lower_bound: Option<f64>,
    pub gap_certificate: Option<f64>,
    /// 100 (C - C_peip) / C_peip.
    pub gap_vs_peip_pct: Option<f64>,
    /// C_peip <= C + both half-widths.
    pub peip_wins: Option<bool>,
    pub var_q_r: Option<f64>,
    pub attainability_violations: Option<u64>,
    pub seed: u64,
    pub config_hash: String,
    pub error: String,
}

impl ResultRow {
    fn new(id: usize, family: PolicyFamily, inst: &InstanceSpec, delta: Option<f64>, seed: u64, hash: &str) -> Self {
        ResultRow {
            instance_id: id,
            family,
            policy: None,
            p: inst.p,
            l_r: inst.l_r,
            cov: inst.demand.cov,
            delta,
            c_e: inst.c_e,
            s_e: None,
            param: None,
            cap: None,
            cost: None,
            halfwidth: None,
            converged: None,
            lower_bound: None,
            gap_certificate: None,
            gap_vs_peip_pct: None,
            peip_wins: None,
            var_q_r: None,
            attainability_violations: None,
            seed,
            config_hash: hash.to_string(),
            error: String::new(),
        }
    }

    fn fill(&mut self, best: &OptimizedPolicy, lb: Option<f64>) {
        let (s_e, param, cap) = param_columns(&best.params);
        self.policy = Some(best.params.family());
        self.s_e = s_e;
        self.param = param;
        self.cap = cap;
        self.cost = Some(best.estimate.mean);
        self.halfwidth = Some(best.estimate.halfwidth);
        self.converged = Some(best.estimate.converged);
        self.lower_bound = lb;
        self.gap_certificate = lb.filter(|&b| b > 1e-12).map(|b| best.estimate.mean / b - 1.0);
        self.var_q_r = Some(best.estimate.order_variance_regular);
        self.attainability_violations = Some(best.attainability_violations);
    }
}

/// Optimizes every family on one instance with a shared seed and fills the
/// comparison against PEIP.
pub fn benchmark_instance(
    id: usize,
    spec: &InstanceSpec,
    delta: Option<f64>,
    families: &[PolicyFamily],
    sim: &SimulationConfig,
    opt: &OptimizerConfig,
    hash: &str,
) -> Vec<ResultRow> {
    let seed = sim.seed;
    let built = spec.build();
    let lb = built.as_ref().ok().and_then(|i| lower_bound(i).ok());
    let mut rows: Vec<ResultRow> = families
        .iter()
        .map(|&family| {
            let mut row = ResultRow::new(id, family, spec, delta, seed, hash);
            match built.as_ref().map_err(Clone::clone).and_then(|inst| optimize_policy(family, inst, sim, opt)) {
                Ok(best) => row.fill(&best, lb),
                Err(e) => {
                    log::warn!("instance {id}, {family}: {e}");
                    row.error = e.to_string();
                }
            }
            row
        })
        .collect();
    let peip = rows
        .iter()
        .find(|r| r.family == PolicyFamily::Peip && r.cost.is_some())
        .map(|r| (r.cost.unwrap(), r.halfwidth.unwrap()));
    if let Some((c_peip, hw_peip)) = peip {
        for row in rows.iter_mut() {
            if let (Some(c), Some(hw)) = (row.cost, row.halfwidth) {
                row.gap_vs_peip_pct = Some(100.0 * (c - c_peip) / c_peip);
                row.peip_wins = Some(c_peip <= c + hw + hw_peip);
            }
        }
    }
    rows
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub family: PolicyFamily,
    /// `all` or the parameter whose level is fixed.
    pub slice: String,
    pub level: String,
    pub instances: usize,
    pub avg_gap_pct: f64,
    pub max_gap_pct: f64,
    pub min_gap_pct: f64,
    pub pct_peip_wins: f64,
    pub seed: u64,
    pub config_hash: String,
}

fn level_key(x: f64) -> String {
    format!("{x}")
}

/// Average, max and min gap and PEIP win rate per family, overall and per
/// level of p, l_r, cov and delta.
pub fn aggregate(rows: &[ResultRow], seed: u64, hash: &str) -> Vec<AggregateRow> {
    let mut families: Vec<PolicyFamily> = rows.iter().map(|r| r.family).filter(|&f| f != PolicyFamily::Peip).collect();
    families.sort();
    families.dedup();
    let mut out = Vec::new();
    for fam in families {
        let usable: Vec<&ResultRow> = rows.iter().filter(|r| r.family == fam && r.gap_vs_peip_pct.is_some()).collect();
        let mut slices: Vec<(String, String, Vec<&ResultRow>)> = vec![("all".into(), "all".into(), usable.clone())];
        type Key = fn(&ResultRow) -> Option<f64>;
        let keys: [(&str, Key); 4] = [
            ("p", |r| Some(r.p)),
            ("l_r", |r| Some(r.l_r as f64)),
            ("cov", |r| r.cov),
            ("delta", |r| r.delta),
        ];
        for (name, key) in keys {
            let mut groups: BTreeMap<u64, (f64, Vec<&ResultRow>)> = BTreeMap::new();
            for r in &usable {
                if let Some(v) = key(r) {
                    groups.entry(v.to_bits()).or_insert_with(|| (v, Vec::new())).1.push(r);
                }
            }
            let mut levels: Vec<(f64, Vec<&ResultRow>)> = groups.into_values().collect();
            levels.sort_by(|a, b| a.0.total_cmp(&b.0));
            for (v, group) in levels {
                slices.push((name.to_string(), level_key(v), group));
            }
        }
        for (slice, level, group) in slices {
            if group.is_empty() {
                continue;
            }
            let gaps: Vec<f64> = group.iter().map(|r| r.gap_vs_peip_pct.unwrap()).collect();
            let wins = group.iter().filter(|r| r.peip_wins == Some(true)).count();
            out.push(AggregateRow {
                family: fam,
                slice,
                level,
                instances: group.len(),
                avg_gap_pct: gaps.iter().sum::<f64>() / gaps.len() as f64,
                max_gap_pct: gaps.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                min_gap_pct: gaps.iter().cloned().fold(f64::INFINITY, f64::min),
                pct_peip_wins: 100.0 * wins as f64 / group.len() as f64,
                seed,
                config_hash: hash.to_string(),
            });
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub results: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs every family on every test-bed instance, in parallel across
/// instances; rows come out in instance order.
pub fn run_benchmark(
    testbed: &[TestbedInstance],
    families: &[PolicyFamily],
    sim: &SimulationConfig,
    opt: &OptimizerConfig,
    hash: &str,
) -> BenchmarkReport {
    let per_instance = exec::map(testbed, |t| {
        let cfg = sim.with_seed(instance_seed(sim.seed, t.id));
        benchmark_instance(t.id, &t.spec, Some(t.delta), families, &cfg, opt, hash)
    });
    let results: Vec<ResultRow> = per_instance.into_iter().flatten().collect();
    let aggregates = aggregate(&results, sim.seed, hash);
    BenchmarkReport { results, aggregates }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LongLeadRow {
    pub l: usize,
    pub l_r: usize,
    pub family: PolicyFamily,
    pub s_e: Option<f64>,
    pub param: Option<f64>,
    pub cap: Option<f64>,
    pub cost: Option<f64>,
    pub halfwidth: Option<f64>,
    /// 100 (C_tbs - C) / C_tbs.
    pub pct_red: Option<f64>,
    pub var_q_r: Option<f64>,
    pub attainability_violations: Option<u64>,
    pub seed: u64,
    pub config_hash: String,
    pub error: String,
}

/// Optimizes each family for each lead time difference; TBS is always run
/// since it is the reference for the reduction.
pub fn run_longlead(
    base: &Instance,
    l_values: &[usize],
    families: &[PolicyFamily],
    sim: &SimulationConfig,
    opt: &OptimizerConfig,
    hash: &str,
) -> Result<Vec<LongLeadRow>> {
    ensure(!l_values.is_empty() && l_values.iter().all(|&l| l >= 1), || {
        "l_values must be nonempty and at least 1".into()
    })?;
    let mut fams = families.to_vec();
    if !fams.contains(&PolicyFamily::Tbs) {
        fams.insert(0, PolicyFamily::Tbs);
    }
    let jobs: Vec<(usize, PolicyFamily)> = l_values.iter().flat_map(|&l| fams.iter().map(move |&f| (l, f))).collect();
    let mut rows: Vec<LongLeadRow> = exec::map(&jobs, |&(l, family)| {
        let l_r = base.l_e + l;
        let seed = instance_seed(sim.seed, l);
        let mut row = LongLeadRow {
            l,
            l_r,
            family,
            s_e: None,
            param: None,
            cap: None,
            cost: None,
            halfwidth: None,
            pct_red: None,
            var_q_r: None,
            attainability_violations: None,
            seed,
            config_hash: hash.to_string(),
            error: String::new(),
        };
        match base
            .with_regular_lead_time(l_r)
            .and_then(|inst| optimize_policy(family, &inst, &sim.with_seed(seed), opt))
        {
            Ok(best) => {
                let (s_e, param, cap) = param_columns(&best.params);
                row.s_e = s_e;
                row.param = param;
                row.cap = cap;
                row.cost = Some(best.estimate.mean);
                row.halfwidth = Some(best.estimate.halfwidth);
                row.var_q_r = Some(best.estimate.order_variance_regular);
                row.attainability_violations = Some(best.attainability_violations);
            }
            Err(e) => row.error = e.to_string(),
        }
        row
    });
    for l in l_values {
        let tbs = rows
            .iter()
            .find(|r| r.l == *l && r.family == PolicyFamily::Tbs)
            .and_then(|r| r.cost);
        if let Some(c_tbs) = tbs {
            for r in rows.iter_mut().filter(|r| r.l == *l) {
                r.pct_red = r.cost.map(|c| 100.0 * (c_tbs - c) / c_tbs);
            }
        }
    }
    Ok(rows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub family: PolicyFamily,
    pub n: f64,
    pub p: f64,
    pub c_e: f64,
    pub cost: f64,
    pub halfwidth: f64,
    pub lower_bound: f64,
    pub ratio: Option<f64>,
    pub gap: Option<f64>,
    pub attainability_violations: u64,
    pub seed: u64,
    pub config_hash: String,
}

pub fn run_sweep(
    instance: &Instance,
    scales: &[f64],
    families: &[PolicyFamily],
    sim: &SimulationConfig,
    opt: &OptimizerConfig,
    hash: &str,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &family in families {
        for pt in asymptotic_sweep(instance, scales, family, sim, opt)? {
            rows.push(SweepRow {
                family,
                n: pt.n,
                p: pt.p,
                c_e: pt.c_e,
                cost: pt.cost,
                halfwidth: pt.halfwidth,
                lower_bound: pt.lower_bound,
                ratio: pt.ratio,
                gap: pt.gap(),
                attainability_violations: pt.attainability_violations,
                seed: sim.seed,
                config_hash: hash.to_string(),
            });
        }
    }
    Ok(rows)
}
