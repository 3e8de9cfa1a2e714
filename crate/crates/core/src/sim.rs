//! Long-run average cost by simulation with batch means.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::atoms::AtomDistribution;
use crate::demand::DemandStream;
use crate::error::{ensure, Result};
use crate::exec;
use crate::model::{Instance, PeriodCost, SystemState};
use crate::policy::{decide, PolicyParams, RegularRule};

fn default_min_batches() -> usize {
    10
}
fn default_max_batches() -> usize {
    500
}
fn default_ci_level() -> f64 {
    0.95
}
fn default_rel_halfwidth() -> f64 {
    0.01
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    /// Experiment configs carry the seed at the top level, which wins.
    #[serde(default)]
    pub seed: u64,
    /// Defaults to 20 (l_r + 1).
    #[serde(default)]
    pub warmup_periods: Option<usize>,
    /// Defaults to 200 (l_r + 1).
    #[serde(default)]
    pub batch_length: Option<usize>,
    #[serde(default = "default_min_batches")]
    pub min_batches: usize,
    #[serde(default = "default_max_batches")]
    pub max_batches: usize,
    #[serde(default = "default_ci_level")]
    pub ci_level: f64,
    #[serde(default = "default_rel_halfwidth")]
    pub rel_halfwidth_target: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        SimulationConfig::new(0)
    }
}

impl SimulationConfig {
    pub fn new(seed: u64) -> Self {
        SimulationConfig {
            seed,
            warmup_periods: None,
            batch_length: None,
            min_batches: default_min_batches(),
            max_batches: default_max_batches(),
            ci_level: default_ci_level(),
            rel_halfwidth_target: default_rel_halfwidth(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        SimulationConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        ensure(self.batch_length != Some(0), || "batch_length must be at least 1".into())?;
        ensure(self.min_batches >= 2, || "min_batches must be at least 2".into())?;
        ensure(self.max_batches >= self.min_batches, || {
            "max_batches must be at least min_batches".into()
        })?;
        ensure(self.ci_level > 0.0 && self.ci_level < 1.0, || {
            format!("ci_level must be in (0, 1), got {}", self.ci_level)
        })?;
        ensure(self.rel_halfwidth_target > 0.0, || {
            "rel_halfwidth_target must be positive".into()
        })
    }

    pub fn warmup(&self, instance: &Instance) -> usize {
        self.warmup_periods.unwrap_or(20 * (instance.l_r + 1))
    }

    pub fn batch(&self, instance: &Instance) -> usize {
        self.batch_length.unwrap_or(200 * (instance.l_r + 1))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    pub mean: f64,
    pub halfwidth: f64,
    pub components: PeriodCost,
    pub periods_used: u64,
    pub batches: usize,
    /// False when `max_batches` was reached before the target half-width.
    pub converged: bool,
    /// Per-period variance of the regular order quantity.
    pub order_variance_regular: f64,
    pub mean_regular_order: f64,
    pub mean_expedited_order: f64,
    pub attainability_violations: u64,
}

/// One row of an optional per-period trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub period: u64,
    /// Net inventory at the start of the period, before arrivals.
    pub inventory: f64,
    pub q_e: f64,
    pub q_r: f64,
    /// Empty for policies without an expedited order-up-to level.
    pub overshoot: Option<f64>,
    pub expedite: f64,
    pub regular: f64,
    pub holding: f64,
    pub backlog: f64,
    pub total: f64,
}

/// Running mean and variance.
#[derive(Clone, Copy, Debug, Default)]
pub struct Welford {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n - 1 denominator).
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }
}

/// Two-sided Student-t critical value.
pub fn t_critical(level: f64, dof: usize) -> f64 {
    let t = StudentsT::new(0.0, 1.0, dof as f64).expect("positive degrees of freedom");
    t.inverse_cdf(0.5 + level / 2.0)
}

/// Confidence half-width from batch means.
pub fn batch_halfwidth(batches: &Welford, level: f64) -> f64 {
    let b = batches.count() as usize;
    if b < 2 {
        return f64::INFINITY;
    }
    t_critical(level, b - 1) * (batches.variance() / b as f64).sqrt()
}

fn target_met(mean: f64, hw: f64, rel: f64) -> bool {
    hw <= rel * mean.abs()
}

/// Runs one policy and returns the estimate plus up to `trace_rows` trace
/// rows (counted from period 0, warm-up included).
pub fn simulate_with_trace(
    policy: &PolicyParams,
    instance: &Instance,
    cfg: &SimulationConfig,
    trace_rows: usize,
) -> Result<(CostEstimate, Vec<TraceRow>)> {
    cfg.validate()?;
    policy.validate()?;
    let warmup = cfg.warmup(instance);
    let batch_len = cfg.batch(instance);
    let mut state = SystemState::initial(instance);
    let mut stream = DemandStream::new(cfg.seed);
    let mut trace = Vec::new();
    let mut violations = 0u64;

    let mut batch_stats = Welford::default();
    let mut totals = PeriodCost::default();
    let mut q_r_stats = Welford::default();
    let mut q_e_sum = 0.0;
    let mut batch_sum = 0.0;
    let mut in_batch = 0usize;
    let mut converged = false;

    let mut t = 0usize;
    loop {
        let dec = decide(policy, &state, instance);
        if !dec.attainable {
            violations += 1;
        }
        let demand = stream.next_draw(&instance.demand);
        let inventory_before = state.inventory;
        let cost = state.advance(instance, dec.q_e, dec.q_r, demand);
        if trace.len() < trace_rows {
            trace.push(TraceRow {
                period: t as u64,
                inventory: inventory_before,
                q_e: dec.q_e,
                q_r: dec.q_r,
                overshoot: dec.overshoot,
                expedite: cost.expedite,
                regular: cost.regular,
                holding: cost.holding,
                backlog: cost.backlog,
                total: cost.total,
            });
        }
        t += 1;
        if t <= warmup {
            continue;
        }
        totals.add(&cost);
        q_r_stats.push(dec.q_r);
        q_e_sum += dec.q_e;
        batch_sum += cost.total;
        in_batch += 1;
        if in_batch == batch_len {
            batch_stats.push(batch_sum / batch_len as f64);
            batch_sum = 0.0;
            in_batch = 0;
            let b = batch_stats.count() as usize;
            if b >= cfg.min_batches {
                let hw = batch_halfwidth(&batch_stats, cfg.ci_level);
                if target_met(batch_stats.mean(), hw, cfg.rel_halfwidth_target) {
                    converged = true;
                    break;
                }
                if b >= cfg.max_batches {
                    break;
                }
            }
        }
    }

    let periods = q_r_stats.count();
    let n = periods as f64;
    let components = totals.scaled(1.0 / n);
    if !converged {
        log::debug!(
            "simulation of {:?} stopped at {} batches without reaching the target half-width",
            policy.family(),
            batch_stats.count()
        );
    }
    let estimate = CostEstimate {
        mean: components.total,
        halfwidth: batch_halfwidth(&batch_stats, cfg.ci_level),
        components,
        periods_used: periods,
        batches: batch_stats.count() as usize,
        converged,
        order_variance_regular: q_r_stats.variance(),
        mean_regular_order: q_r_stats.mean(),
        mean_expedited_order: q_e_sum / n,
        attainability_violations: violations,
    };
    Ok((estimate, trace))
}

pub fn simulate(policy: &PolicyParams, instance: &Instance, cfg: &SimulationConfig) -> Result<CostEstimate> {
    simulate_with_trace(policy, instance, cfg, 0).map(|r| r.0)
}

/// Evaluates each policy on the same demand path.
pub fn paired_evaluate(
    policies: &[PolicyParams],
    instance: &Instance,
    cfg: &SimulationConfig,
) -> Result<Vec<CostEstimate>> {
    exec::map(policies, |p| simulate(p, instance, cfg))
        .into_iter()
        .collect()
}

/// Steady-state overshoot sample of a regular rule plus the order rates
/// observed while collecting it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvershootSample {
    pub distribution: AtomDistribution,
    pub mean_expedited_order: f64,
    pub mean_regular_order: f64,
    pub order_variance_regular: f64,
    pub periods_used: u64,
    pub converged: bool,
    pub attainability_violations: u64,
}

/// Relative half-width of the standard deviation estimate from batch means
/// of (O, O^2), by the delta method.
fn sd_halfwidth(m1: &[f64], m2: &[f64], level: f64) -> (f64, f64) {
    let b = m1.len() as f64;
    let a1 = m1.iter().sum::<f64>() / b;
    let a2 = m2.iter().sum::<f64>() / b;
    let var = (a2 - a1 * a1).max(0.0);
    let sd = var.sqrt();
    if sd == 0.0 {
        return (0.0, 0.0);
    }
    let (g1, g2) = (-a1 / sd, 0.5 / sd);
    let mut w = Welford::default();
    for (x, y) in m1.iter().zip(m2) {
        w.push(g1 * x + g2 * y);
    }
    (sd, batch_halfwidth(&w, level))
}

/// Simulates `rule` with expedited level 0. Every family is translation
/// invariant in S_e, so `O = IP^e + q_e - S_e` from this run is the overshoot
/// for any level. Stops once both the mean and the standard deviation of O
/// meet the relative half-width target.
pub fn overshoot_distribution(
    rule: &RegularRule,
    instance: &Instance,
    cfg: &SimulationConfig,
) -> Result<OvershootSample> {
    cfg.validate()?;
    let policy = rule.with_level(0.0);
    policy.validate()?;
    let warmup = cfg.warmup(instance);
    let batch_len = cfg.batch(instance);
    let mut state = SystemState::initial(instance);
    let mut stream = DemandStream::new(cfg.seed);
    let mut sample: Vec<f64> = Vec::new();
    let mut violations = 0u64;
    let mut q_r_stats = Welford::default();
    let mut q_e_sum = 0.0;
    let (mut b1, mut b2) = (Vec::new(), Vec::new());
    let (mut s1, mut s2) = (0.0, 0.0);
    let mut converged = false;

    let mut t = 0usize;
    loop {
        let dec = decide(&policy, &state, instance);
        if !dec.attainable {
            violations += 1;
        }
        let demand = stream.next_draw(&instance.demand);
        state.advance(instance, dec.q_e, dec.q_r, demand);
        t += 1;
        if t <= warmup {
            continue;
        }
        let o = dec.overshoot.unwrap_or(0.0);
        sample.push(o);
        q_r_stats.push(dec.q_r);
        q_e_sum += dec.q_e;
        s1 += o;
        s2 += o * o;
        if sample.len().is_multiple_of(batch_len) {
            b1.push(s1 / batch_len as f64);
            b2.push(s2 / batch_len as f64);
            s1 = 0.0;
            s2 = 0.0;
            if b1.len() >= cfg.min_batches {
                let mut w = Welford::default();
                b1.iter().for_each(|&x| w.push(x));
                let hw_mean = batch_halfwidth(&w, cfg.ci_level);
                let (sd, hw_sd) = sd_halfwidth(&b1, &b2, cfg.ci_level);
                if target_met(w.mean(), hw_mean, cfg.rel_halfwidth_target)
                    && target_met(sd, hw_sd, cfg.rel_halfwidth_target)
                {
                    converged = true;
                    break;
                }
                if b1.len() >= cfg.max_batches {
                    break;
                }
            }
        }
    }
    let n = sample.len() as f64;
    Ok(OvershootSample {
        distribution: AtomDistribution::empirical(&sample),
        mean_expedited_order: q_e_sum / n,
        mean_regular_order: q_r_stats.mean(),
        order_variance_regular: q_r_stats.variance(),
        periods_used: sample.len() as u64,
        converged,
        attainability_violations: violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demand::{make_demand, DemandFamily, DemandModel};

    fn instance(demand: DemandModel, l_e: usize, l_r: usize) -> Instance {
        Instance::new(19.0, 1.0, 5.0, 0.0, l_e, l_r, demand).unwrap()
    }

    fn nb() -> DemandModel {
        make_demand(DemandFamily::NegativeBinomial, 50.0, Some(0.25), 1e-12).unwrap()
    }

    #[test]
    fn zero_variance_system() {
        let d = make_demand(DemandFamily::Deterministic, 50.0, None, 1e-12).unwrap();
        let inst = instance(d, 0, 2);
        let cfg = SimulationConfig::new(1);
        let est = simulate(&PolicyParams::Tbs { s_e: -1000.0, r: 50.0 }, &inst, &cfg).unwrap();
        assert_eq!(est.halfwidth, 0.0);
        assert!(est.converged);
        // inventory settles at -100 (two periods of start-up backlog)
        assert_eq!(est.components.backlog, 19.0 * 100.0);
        assert_eq!(est.components.holding, 0.0);
        assert_eq!(est.order_variance_regular, 0.0);
    }

    #[test]
    fn deterministic_given_seed() {
        let inst = instance(nb(), 0, 3);
        let cfg = SimulationConfig::new(42);
        let p = PolicyParams::Peip { s_e: 60.0, v: 5.0 };
        assert_eq!(simulate(&p, &inst, &cfg).unwrap(), simulate(&p, &inst, &cfg).unwrap());
        let pair = paired_evaluate(&[p, p], &inst, &cfg).unwrap();
        assert_eq!(pair[0], pair[1]);
        assert_eq!(pair[0], simulate(&p, &inst, &cfg).unwrap());
    }

    #[test]
    fn single_expedited_newsvendor() {
        let d = nb();
        let inst = instance(d.clone(), 0, 2);
        let pmf = d.pmf();
        let s = pmf.quantile(19.0 / 20.0) as f64;
        let exact = 5.0 * d.mean() + 20.0 * pmf.expected_excess(s) - 19.0 * (s - d.mean());
        let est = simulate(&PolicyParams::SingleExpedited { s_e: s }, &inst, &SimulationConfig::new(3)).unwrap();
        assert!(est.converged);
        assert!((est.mean - exact).abs() <= 2.0 * est.halfwidth, "{} vs {exact} ± {}", est.mean, est.halfwidth);
    }

    #[test]
    fn overshoot_degenerate_cases() {
        let inst = instance(nb(), 0, 3);
        let cfg = SimulationConfig::new(9);
        let o = overshoot_distribution(&RegularRule::Peip { v: 0.0 }, &inst, &cfg).unwrap();
        assert!(o.distribution.is_point_mass_at(0.0, 0.0));
        assert_eq!(o.attainability_violations, 0);
        let o = overshoot_distribution(&RegularRule::Tbs { r: 0.0 }, &inst, &cfg).unwrap();
        assert!(o.distribution.is_point_mass_at(0.0, 0.0));
        let det = make_demand(DemandFamily::Deterministic, 50.0, None, 1e-12).unwrap();
        let inst = instance(det, 0, 3);
        let o = overshoot_distribution(&RegularRule::Tbs { r: 30.0 }, &inst, &cfg).unwrap();
        assert!(o.distribution.is_point_mass_at(0.0, 0.0));
    }

    #[test]
    fn overshoot_meets_precision_and_is_nonnegative() {
        let inst = instance(nb(), 0, 3);
        let o = overshoot_distribution(&RegularRule::Peip { v: 8.0 }, &inst, &SimulationConfig::new(4)).unwrap();
        assert!(o.converged);
        assert!(o.distribution.min() >= 0.0);
        assert!((o.distribution.mean() - 8.0).abs() < 0.3, "{}", o.distribution.mean());
        assert!((o.mean_regular_order + o.mean_expedited_order - 50.0).abs() < 1.0);
    }

    /// Shifting S_e leaves O and q_r unchanged once the transient is over.
    #[test]
    fn separability_in_expedited_level() {
        let inst = instance(nb(), 1, 4);
        let mut stream = DemandStream::new(17);
        let (pa, pb) = (
            PolicyParams::Peip { s_e: 80.0, v: 6.0 },
            PolicyParams::Peip { s_e: 95.0, v: 6.0 },
        );
        let (mut a, mut b) = (SystemState::initial(&inst), SystemState::initial(&inst));
        for t in 0..400 {
            let d = stream.next_draw(&inst.demand);
            let (da, db) = (decide(&pa, &a, &inst), decide(&pb, &b, &inst));
            if t > 10 {
                assert!((da.overshoot.unwrap() - db.overshoot.unwrap()).abs() < 1e-9);
                assert!((da.q_r - db.q_r).abs() < 1e-9);
                assert!((da.q_e - db.q_e).abs() < 1e-9);
            }
            a.advance(&inst, da.q_e, da.q_r, d);
            b.advance(&inst, db.q_e, db.q_r, d);
        }
    }

    #[test]
    fn t_quantiles() {
        assert!((t_critical(0.95, 9) - 2.262157).abs() < 1e-5);
        assert!((t_critical(0.95, 1000) - 1.962339).abs() < 1e-5);
    }

    #[test]
    fn config_defaults_and_validation() {
        let cfg: SimulationConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(cfg, SimulationConfig::new(5));
        assert!(serde_json::from_str::<SimulationConfig>(r#"{"seed": 5, "warmup": 3}"#).is_err());
        let mut bad = SimulationConfig::new(1);
        bad.ci_level = 1.0;
        assert!(bad.validate().is_err());
    }
}
