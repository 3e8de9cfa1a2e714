//! Dual-sourcing system: parameters, state, and the one-period transition.
//!
//! Event order within period `t`:
//! 1. orders due this period have arrived (already in `inventory`);
//! 2. the expedited order is placed;
//! 3. the regular order is placed;
//! 4. demand is realized and holding or backlog cost is charged.
//!
//! With a zero expedited lead time the expedited order joins the inventory
//! that faces this period's demand.

use serde::{Deserialize, Serialize};

use crate::demand::{DemandModel, DemandSpec};
use crate::error::{ensure, Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    pub p: f64,
    pub h: f64,
    pub c_e: f64,
    #[serde(default)]
    pub c_r: f64,
    pub l_e: usize,
    pub l_r: usize,
    pub demand: DemandSpec,
}

impl InstanceSpec {
    pub fn build(&self) -> Result<Instance> {
        Instance::new(
            self.p,
            self.h,
            self.c_e,
            self.c_r,
            self.l_e,
            self.l_r,
            self.demand.build()?,
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub p: f64,
    pub h: f64,
    pub c_e: f64,
    pub c_r: f64,
    pub l_e: usize,
    pub l_r: usize,
    pub demand: DemandModel,
}

impl Instance {
    pub fn new(
        p: f64,
        h: f64,
        c_e: f64,
        c_r: f64,
        l_e: usize,
        l_r: usize,
        demand: DemandModel,
    ) -> Result<Self> {
        ensure(p.is_finite() && p > 0.0, || format!("backorder cost p must be positive, got {p}"))?;
        ensure(h.is_finite() && h > 0.0, || format!("holding cost h must be positive, got {h}"))?;
        ensure(c_r.is_finite() && c_r >= 0.0, || {
            format!("regular price c_r must be nonnegative, got {c_r}")
        })?;
        ensure(c_e.is_finite() && c_e > c_r, || {
            format!("expedited price c_e = {c_e} must exceed regular price c_r = {c_r}")
        })?;
        ensure(l_r > l_e, || {
            format!("regular lead time {l_r} must exceed expedited lead time {l_e}")
        })?;
        let inst = Instance {
            p,
            h,
            c_e,
            c_r,
            l_e,
            l_r,
            demand,
        };
        if inst.is_single_source() {
            log::warn!(
                "expedited premium {} >= p * l = {}: single sourcing from the regular supplier is optimal",
                c_e - c_r,
                p * inst.lead_time_difference() as f64
            );
        }
        Ok(inst)
    }

    /// Lead time difference `l_r - l_e`.
    pub fn lead_time_difference(&self) -> usize {
        self.l_r - self.l_e
    }

    /// True when expediting can never pay off and the problem degenerates to
    /// single sourcing from the regular supplier.
    pub fn is_single_source(&self) -> bool {
        self.c_e - self.c_r >= self.p * self.lead_time_difference() as f64
    }

    pub fn critical_fractile(&self) -> f64 {
        self.p / (self.p + self.h)
    }

    pub fn spec(&self) -> InstanceSpec {
        InstanceSpec {
            p: self.p,
            h: self.h,
            c_e: self.c_e,
            c_r: self.c_r,
            l_e: self.l_e,
            l_r: self.l_r,
            demand: self.demand.spec(),
        }
    }

    /// Copy with `p` and `c_e` multiplied by `n`.
    pub fn scaled(&self, n: f64) -> Result<Instance> {
        Instance::new(
            self.p * n,
            self.h,
            self.c_e * n,
            self.c_r,
            self.l_e,
            self.l_r,
            self.demand.clone(),
        )
    }

    /// Copy with a different regular lead time.
    pub fn with_regular_lead_time(&self, l_r: usize) -> Result<Instance> {
        Instance::new(
            self.p,
            self.h,
            self.c_e,
            self.c_r,
            self.l_e,
            l_r,
            self.demand.clone(),
        )
    }
}

/// State at the start of a period, after arrivals.
///
/// Pipelines are oldest-first: `regular_pipeline[0]` arrives next period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemState {
    pub inventory: f64,
    pub regular_pipeline: Vec<f64>,
    pub expedited_pipeline: Vec<f64>,
    pub period: u64,
}

impl SystemState {
    /// Empty system: zero inventory, nothing on order.
    pub fn initial(instance: &Instance) -> Self {
        SystemState {
            inventory: 0.0,
            regular_pipeline: vec![0.0; instance.l_r.saturating_sub(1)],
            expedited_pipeline: vec![0.0; instance.l_e.saturating_sub(1)],
            period: 0,
        }
    }

    pub fn validate(&self, instance: &Instance) -> Result<()> {
        ensure(
            self.regular_pipeline.len() == instance.l_r.saturating_sub(1),
            || {
                format!(
                    "regular pipeline has {} entries, expected {}",
                    self.regular_pipeline.len(),
                    instance.l_r.saturating_sub(1)
                )
            },
        )?;
        ensure(
            self.expedited_pipeline.len() == instance.l_e.saturating_sub(1),
            || {
                format!(
                    "expedited pipeline has {} entries, expected {}",
                    self.expedited_pipeline.len(),
                    instance.l_e.saturating_sub(1)
                )
            },
        )?;
        ensure(
            self.regular_pipeline
                .iter()
                .chain(&self.expedited_pipeline)
                .all(|q| *q >= 0.0),
            || "pipeline entries must be nonnegative".into(),
        )
    }

    /// Net inventory plus everything on order.
    pub fn regular_inventory_position(&self) -> f64 {
        self.inventory
            + self.regular_pipeline.iter().sum::<f64>()
            + self.expedited_pipeline.iter().sum::<f64>()
    }

    /// The `l - 1` most recent regular orders, oldest first.
    pub fn incoming_regular(&self, instance: &Instance) -> &[f64] {
        let skip = instance.l_e;
        &self.regular_pipeline[skip..]
    }

    /// Applies one period in place and returns its cost.
    ///
    /// Panics in debug builds on negative orders; use [`step`] for checked
    /// input.
    pub fn advance(&mut self, instance: &Instance, q_e: f64, q_r: f64, demand: u64) -> PeriodCost {
        debug_assert!(q_e >= 0.0 && q_r >= 0.0);
        let d = demand as f64;
        let mut facing = self.inventory;
        let mut arrivals = 0.0;
        match instance.l_e {
            0 => facing += q_e,
            1 => arrivals += q_e,
            _ => arrivals += shift_in(&mut self.expedited_pipeline, q_e),
        }
        match instance.l_r {
            0 => unreachable!("regular lead time is at least 1"),
            1 => arrivals += q_r,
            _ => arrivals += shift_in(&mut self.regular_pipeline, q_r),
        }
        let left = facing - d;
        let cost = PeriodCost::new(
            instance.c_e * q_e,
            instance.c_r * q_r,
            instance.h * left.max(0.0),
            instance.p * (-left).max(0.0),
        );
        self.inventory = left + arrivals;
        self.period += 1;
        cost
    }
}

/// Appends `order` and pops the oldest entry.
fn shift_in(pipeline: &mut [f64], order: f64) -> f64 {
    let out = pipeline[0];
    pipeline.rotate_left(1);
    *pipeline.last_mut().unwrap() = order;
    out
}

/// Net inventory plus expedited and regular orders arriving within the
/// expedited lead time.
pub fn expedited_inventory_position(state: &SystemState, instance: &Instance) -> f64 {
    state.inventory
        + state.expedited_pipeline.iter().sum::<f64>()
        + state.regular_pipeline[..instance.l_e].iter().sum::<f64>()
}

/// Checked transition: validates the orders and returns the successor state.
pub fn step(
    state: &SystemState,
    instance: &Instance,
    q_e: f64,
    q_r: f64,
    demand: u64,
) -> Result<(SystemState, PeriodCost)> {
    if !(q_e >= 0.0 && q_e.is_finite()) || !(q_r >= 0.0 && q_r.is_finite()) {
        return Err(Error::Validation(format!(
            "orders must be nonnegative and finite, got q_e = {q_e}, q_r = {q_r}"
        )));
    }
    state.validate(instance)?;
    let mut next = state.clone();
    let cost = next.advance(instance, q_e, q_r, demand);
    Ok((next, cost))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PeriodCost {
    pub expedite: f64,
    pub regular: f64,
    pub holding: f64,
    pub backlog: f64,
    pub total: f64,
}

impl PeriodCost {
    pub fn new(expedite: f64, regular: f64, holding: f64, backlog: f64) -> Self {
        PeriodCost {
            expedite,
            regular,
            holding,
            backlog,
            total: expedite + regular + holding + backlog,
        }
    }

    pub fn scaled(&self, k: f64) -> Self {
        PeriodCost::new(
            self.expedite * k,
            self.regular * k,
            self.holding * k,
            self.backlog * k,
        )
    }

    pub fn add(&mut self, other: &PeriodCost) {
        *self = PeriodCost::new(
            self.expedite + other.expedite,
            self.regular + other.regular,
            self.holding + other.holding,
            self.backlog + other.backlog,
        );
    }
}
