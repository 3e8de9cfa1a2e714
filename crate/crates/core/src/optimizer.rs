//! Simulation-based policy optimization. For each candidate regular rule the
//! steady-state overshoot is simulated once, the expedited level follows
//! from a newsvendor problem on lead-time demand minus overshoot, and the
//! regular parameter is chosen by golden-section search.

use serde::{Deserialize, Serialize};

use crate::atoms::AtomDistribution;
use crate::bounds::backlog_base_stock_cost;
use crate::demand::DensePmf;
use crate::error::{ensure, Result};
use crate::model::Instance;
use crate::policy::{PolicyFamily, PolicyParams, RegularRule};
use crate::sim::{overshoot_distribution, simulate, CostEstimate, SimulationConfig};

/// inf{s : sum_i w_i F(s + O_i) >= p / (p + h)} with F the cdf of demand
/// over l_e + 1 periods.
pub fn newsvendor_level(overshoot: &AtomDistribution, lead_demand: &DensePmf, p: f64, h: f64) -> f64 {
    let beta = p / (p + h);
    let total = overshoot.total_mass();
    let atoms = overshoot.atoms();
    let f = |s: f64| atoms.iter().map(|&(o, w)| w * lead_demand.cdf(s + o)).sum::<f64>() / total;
    let mut lo = lead_demand.min() as f64 - overshoot.max() - 1.0;
    let mut hi = lead_demand.max() as f64 - overshoot.min();
    for _ in 0..200 {
        if hi - lo <= 1e-10 * (1.0 + hi.abs()) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) >= beta {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    // The root is a jump point k - O_i; take the largest one not above hi.
    let snap = atoms
        .iter()
        .map(|&(o, _)| (hi + o + 1e-9).floor() - o)
        .fold(f64::NEG_INFINITY, f64::max);
    if snap.is_finite() && f(snap) >= beta {
        snap
    } else {
        hi
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GoldenResult {
    pub argmin: f64,
    pub min_value: f64,
    pub evaluations: usize,
    /// True when the budget ran out before the bracket shrank to `tol`.
    pub exhausted: bool,
}

/// Golden-section search on [lo, hi]; the end points are probed as well and
/// the best probe overall is returned.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64, budget: usize) -> Result<GoldenResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    ensure(lo <= hi, || format!("empty bracket [{lo}, {hi}]"))?;
    let mut best = (lo, f(lo)?);
    let mut evals = 1;
    let consider = |x: f64, v: f64, best: &mut (f64, f64)| {
        if v < best.1 {
            *best = (x, v);
        }
    };
    if hi == lo {
        return Ok(GoldenResult { argmin: lo, min_value: best.1, evaluations: 1, exhausted: false });
    }
    let fh = f(hi)?;
    evals += 1;
    consider(hi, fh, &mut best);

    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - phi * (b - a);
    let mut x2 = a + phi * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    evals += 2;
    consider(x1, f1, &mut best);
    consider(x2, f2, &mut best);
    while b - a > tol {
        if evals >= budget {
            return Ok(GoldenResult { argmin: best.0, min_value: best.1, evaluations: evals, exhausted: true });
        }
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1)?;
            consider(x1, f1, &mut best);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2)?;
            consider(x2, f2, &mut best);
        }
        evals += 1;
    }
    Ok(GoldenResult { argmin: best.0, min_value: best.1, evaluations: evals, exhausted: false })
}

/// How a candidate regular rule is scored during the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidateCost {
    /// Expected cost computed from the overshoot sample: order costs from
    /// the observed order rates plus the exact expected holding and backlog
    /// cost given each overshoot value.
    #[default]
    SemiAnalytic,
    /// A separate full simulation at the newsvendor level.
    Simulated,
}

fn default_rel_tol() -> f64 {
    0.005
}
fn default_budget() -> usize {
    30
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Golden-section stops once the bracket is this fraction of its start.
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    /// Objective evaluations per one-dimensional search.
    #[serde(default = "default_budget")]
    pub budget: usize,
    /// Also scan this many equal steps across each bracket and keep the
    /// better answer.
    #[serde(default)]
    pub grid_points: Option<usize>,
    #[serde(default)]
    pub candidate_cost: CandidateCost,
    /// Caps on batches for each candidate's overshoot run; `None` keeps the
    /// simulation config value.
    #[serde(default)]
    pub candidate_max_batches: Option<usize>,
    /// Upper end of the V bracket; grown by doubling when absent.
    #[serde(default)]
    pub v_max: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            rel_tol: default_rel_tol(),
            budget: default_budget(),
            grid_points: None,
            candidate_cost: CandidateCost::default(),
            candidate_max_batches: None,
            v_max: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        ensure(self.rel_tol > 0.0 && self.rel_tol < 1.0, || "rel_tol must be in (0, 1)".into())?;
        ensure(self.budget >= 4, || "budget must be at least 4".into())?;
        ensure(self.grid_points != Some(0), || "grid_points must be at least 1".into())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizedPolicy {
    pub params: PolicyParams,
    /// Full simulation of `params`.
    pub estimate: CostEstimate,
    /// Objective value the search assigned to `params`.
    pub search_cost: f64,
    pub evaluations: usize,
    pub budget_exhausted: bool,
    /// Attainability violations over every simulation run by the search.
    pub attainability_violations: u64,
}

/// Scores regular rules for one instance.
struct Evaluator<'a> {
    instance: &'a Instance,
    cfg: SimulationConfig,
    eval_cfg: &'a SimulationConfig,
    mode: CandidateCost,
    lead: DensePmf,
    evaluations: usize,
    violations: u64,
}

impl<'a> Evaluator<'a> {
    fn new(instance: &'a Instance, cfg: &'a SimulationConfig, opt: &OptimizerConfig) -> Result<Self> {
        let mut search = cfg.clone();
        if let Some(m) = opt.candidate_max_batches {
            search.max_batches = m.max(search.min_batches);
        }
        Ok(Evaluator {
            instance,
            cfg: search,
            eval_cfg: cfg,
            mode: opt.candidate_cost,
            lead: instance.demand.n_fold(instance.l_e + 1)?,
            evaluations: 0,
            violations: 0,
        })
    }

    /// Best expedited level for `rule` and the objective value there.
    fn score(&mut self, rule: RegularRule) -> Result<(PolicyParams, f64)> {
        self.evaluations += 1;
        let inst = self.instance;
        let sample = overshoot_distribution(&rule, inst, &self.cfg)?;
        self.violations += sample.attainability_violations;
        let s_e = newsvendor_level(&sample.distribution, &self.lead, inst.p, inst.h);
        let params = rule.with_level(s_e);
        let cost = match self.mode {
            CandidateCost::SemiAnalytic => {
                let (hp, mean) = (inst.h + inst.p, self.lead.mean());
                let stock: f64 = sample
                    .distribution
                    .atoms()
                    .iter()
                    .map(|&(o, w)| {
                        let x = s_e + o;
                        w * (hp * self.lead.expected_excess(x) - inst.p * (x - mean))
                    })
                    .sum::<f64>()
                    / sample.distribution.total_mass();
                inst.c_e * sample.mean_expedited_order + inst.c_r * sample.mean_regular_order + stock
            }
            CandidateCost::Simulated => {
                let est = simulate(&params, inst, &self.cfg)?;
                self.violations += est.attainability_violations;
                est.mean
            }
        };
        Ok((params, cost))
    }

    fn finish(self, params: PolicyParams, search_cost: f64, exhausted: bool) -> Result<OptimizedPolicy> {
        let estimate = simulate(&params, self.instance, self.eval_cfg)?;
        Ok(OptimizedPolicy {
            params,
            search_cost,
            evaluations: self.evaluations,
            budget_exhausted: exhausted,
            attainability_violations: self.violations + estimate.attainability_violations,
            estimate,
        })
    }
}

/// One-dimensional search with the optional grid scan; returns (x, value,
/// exhausted).
fn search_1d<F>(mut f: F, lo: f64, hi: f64, opt: &OptimizerConfig) -> Result<(f64, f64, bool)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let g = golden_section(&mut f, lo, hi, opt.rel_tol * (hi - lo), opt.budget)?;
    let mut best = (g.argmin, g.min_value);
    if let Some(n) = opt.grid_points {
        for i in 0..=n {
            let x = lo + (hi - lo) * i as f64 / n as f64;
            let v = f(x)?;
            if v < best.1 {
                best = (x, v);
            }
        }
        if best.0 != g.argmin {
            log::info!("grid scan improved on golden section: {} -> {}", g.argmin, best.0);
        }
    }
    Ok((best.0, best.1, g.exhausted))
}

fn rule_for(family: PolicyFamily, x: f64) -> RegularRule {
    match family {
        PolicyFamily::Peip => RegularRule::Peip { v: x },
        PolicyFamily::Tbs => RegularRule::Tbs { r: x },
        PolicyFamily::Si => RegularRule::Si { delta: x },
        PolicyFamily::Di => RegularRule::Di { delta: x },
        _ => unreachable!("not a one-parameter family"),
    }
}

/// Optimal single-regular base-stock policy.
pub fn optimal_single_regular(instance: &Instance, cfg: &SimulationConfig) -> Result<OptimizedPolicy> {
    let (s_r, cost) = backlog_base_stock_cost(instance.p, instance.h, instance.l_r, &instance.demand)?;
    let params = PolicyParams::SingleRegular { s_r };
    let estimate = simulate(&params, instance, cfg)?;
    Ok(OptimizedPolicy {
        params,
        search_cost: cost + instance.c_r * instance.demand.mean(),
        evaluations: 0,
        budget_exhausted: false,
        attainability_violations: 0,
        estimate,
    })
}

/// Best parameters of `family` for the instance, with a full-cost estimate.
///
/// When expediting is never worth its premium (c_e - c_r >= p l) every
/// family returns the single-regular optimum.
pub fn optimize_policy(
    family: PolicyFamily,
    instance: &Instance,
    cfg: &SimulationConfig,
    opt: &OptimizerConfig,
) -> Result<OptimizedPolicy> {
    cfg.validate()?;
    opt.validate()?;
    if family == PolicyFamily::SingleRegular || instance.is_single_source() {
        return optimal_single_regular(instance, cfg);
    }
    let mut ev = Evaluator::new(instance, cfg, opt)?;
    let mean = instance.demand.mean();
    let sd = mean * instance.demand.cov();
    let l = instance.lead_time_difference();
    let delta_hi = instance.demand.n_fold(l)?.quantile(0.999) as f64;

    let mut best: Option<(PolicyParams, f64)> = None;
    let record = |p: PolicyParams, c: f64, best: &mut Option<(PolicyParams, f64)>| {
        if best.as_ref().is_none_or(|b| c < b.1) {
            *best = Some((p, c));
        }
    };

    let exhausted = match family {
        PolicyFamily::SingleExpedited => {
            let (p, c) = ev.score(RegularRule::NoRegular)?;
            record(p, c, &mut best);
            false
        }
        PolicyFamily::Peip | PolicyFamily::Tbs | PolicyFamily::Si | PolicyFamily::Di => {
            let hi = match family {
                PolicyFamily::Tbs => mean,
                PolicyFamily::Peip => match opt.v_max {
                    Some(v) => v,
                    None => {
                        let mut hi = sd.max(1.0);
                        let mut cur = ev.score(rule_for(family, hi))?;
                        record(cur.0, cur.1, &mut best);
                        for _ in 0..20 {
                            let next = ev.score(rule_for(family, 2.0 * hi))?;
                            record(next.0, next.1, &mut best);
                            if next.1 >= cur.1 {
                                break;
                            }
                            hi *= 2.0;
                            cur = next;
                        }
                        2.0 * hi
                    }
                },
                _ => delta_hi,
            };
            let (_, _, ex) = search_1d(
                |x| {
                    let (p, c) = ev.score(rule_for(family, x))?;
                    record(p, c, &mut best);
                    Ok(c)
                },
                0.0,
                hi,
                opt,
            )?;
            ex
        }
        PolicyFamily::Cdi => {
            let cap_hi = 2.0 * mean;
            let mut any_exhausted = false;
            let (_, _, ex) = search_1d(
                |delta| {
                    let (_, c, ex) = search_1d(
                        |cap| {
                            let (p, c) = ev.score(RegularRule::Cdi { delta, cap })?;
                            record(p, c, &mut best);
                            Ok(c)
                        },
                        0.0,
                        cap_hi,
                        opt,
                    )?;
                    any_exhausted |= ex;
                    Ok(c)
                },
                0.0,
                delta_hi,
                opt,
            )?;
            ex || any_exhausted
        }
        PolicyFamily::SingleRegular => unreachable!(),
    };
    let (params, cost) = best.expect("at least one candidate was scored");
    ev.finish(params, cost, exhausted)
}
