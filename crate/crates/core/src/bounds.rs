//! Single-supplier backlog optimum, the resulting lower bound on any dual
//! sourcing policy, and the scaling sweep that checks how fast a policy's
//! certificate approaches 1.

use serde::{Deserialize, Serialize};

use crate::demand::DemandModel;
use crate::error::{ensure, Error, Result};
use crate::exec;
use crate::model::Instance;
use crate::optimizer::{optimize_policy, OptimizerConfig};
use crate::policy::PolicyFamily;
use crate::sim::{CostEstimate, SimulationConfig};

/// Optimal base-stock level and cost of the backlog system with lead time
/// `l`: order-up-to on lead-time-plus-one demand at fractile p / (p + h).
pub fn backlog_base_stock_cost(p: f64, h: f64, l: usize, demand: &DemandModel) -> Result<(f64, f64)> {
    ensure(p > 0.0 && h > 0.0, || format!("p and h must be positive, got p = {p}, h = {h}"))?;
    let pmf = demand.n_fold(l + 1)?;
    let s = pmf.quantile(p / (p + h)) as f64;
    let cost = (h + p) * pmf.expected_excess(s) - p * (s - pmf.mean());
    Ok((s, cost.max(0.0)))
}

/// Lower bound on the long-run average cost of any policy. Unit regular
/// purchasing cost is charged on every unit of demand, so only the premium
/// c_e - c_r enters the backlog penalty.
pub fn lower_bound(instance: &Instance) -> Result<f64> {
    let penalty = (instance.c_e - instance.c_r) / (instance.l_r as f64 + 1.0);
    let (_, cost) = backlog_base_stock_cost(penalty, instance.h, instance.l_r, &instance.demand)?;
    Ok(cost + instance.c_r * instance.demand.mean())
}

/// cost / lower bound - 1, an upper bound on the optimality gap.
pub fn gap_certificate(estimate: &CostEstimate, instance: &Instance) -> Result<f64> {
    let lb = lower_bound(instance)?;
    if lb <= 1e-12 {
        return Err(Error::GapUndefined);
    }
    Ok(estimate.mean / lb - 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: f64,
    pub p: f64,
    pub c_e: f64,
    pub cost: f64,
    pub halfwidth: f64,
    pub lower_bound: f64,
    /// cost / lower bound; `None` when the bound is zero.
    pub ratio: Option<f64>,
    pub attainability_violations: u64,
}

impl SweepPoint {
    pub fn gap(&self) -> Option<f64> {
        self.ratio.map(|r| r - 1.0)
    }
}

/// Optimizes `family` on the instance scaled by each n (p and c_e times n)
/// and reports cost against the lower bound.
pub fn asymptotic_sweep(
    instance: &Instance,
    scales: &[f64],
    family: PolicyFamily,
    cfg: &SimulationConfig,
    opt: &OptimizerConfig,
) -> Result<Vec<SweepPoint>> {
    ensure(instance.c_e < instance.p * instance.lead_time_difference() as f64, || {
        format!(
            "sweep needs c_e < p l, got c_e = {}, p l = {}",
            instance.c_e,
            instance.p * instance.lead_time_difference() as f64
        )
    })?;
    ensure(!scales.is_empty(), || "scales must not be empty".into())?;
    ensure(scales.windows(2).all(|w| w[0] < w[1]) && scales[0] > 0.0, || {
        "scales must be positive and increasing".into()
    })?;
    exec::map(scales, |&n| {
        let scaled = instance.scaled(n)?;
        let best = optimize_policy(family, &scaled, cfg, opt)?;
        let lb = lower_bound(&scaled)?;
        Ok(SweepPoint {
            n,
            p: scaled.p,
            c_e: scaled.c_e,
            cost: best.estimate.mean,
            halfwidth: best.estimate.halfwidth,
            lower_bound: lb,
            ratio: (lb > 1e-12).then(|| best.estimate.mean / lb),
            attainability_violations: best.attainability_violations,
        })
    })
    .into_iter()
    .collect()
}
