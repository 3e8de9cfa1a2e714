//! Exact average-cost optimum of small instances by relative value iteration
//! over a truncated integer lattice.

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::exec;
use crate::model::{Instance, SystemState};

fn default_state_limit() -> usize {
    2_000_000
}
fn default_tol() -> f64 {
    1e-9
}
fn default_max_iter() -> usize {
    200_000
}
fn default_tau() -> f64 {
    0.5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpConfig {
    /// Defaults to -(l_r + 2) times the largest demand.
    #[serde(default)]
    pub i_min: Option<i64>,
    /// Defaults to (l_r + 2) times the largest demand.
    #[serde(default)]
    pub i_max: Option<i64>,
    /// Defaults to twice the largest demand.
    #[serde(default)]
    pub q_max: Option<u32>,
    #[serde(default = "default_state_limit")]
    pub state_limit: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    /// Self-loop weight 1 - tau makes every chain aperiodic.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

impl Default for DpConfig {
    fn default() -> Self {
        DpConfig {
            i_min: None,
            i_max: None,
            q_max: None,
            state_limit: default_state_limit(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            tau: default_tau(),
        }
    }
}

/// Lattice model: inventory in [i_min, i_max], pipelines with entries in
/// [0, q_max], actions (q_e, q_r) in [0, q_max]^2.
#[derive(Clone, Debug)]
pub struct TruncatedMdp {
    pub i_min: i64,
    pub i_max: i64,
    pub q_max: u32,
    pub l_e: usize,
    pub l_r: usize,
    pub n_states: usize,
    pub n_actions: usize,
    /// Largest probability of leaving the inventory window over any
    /// (state, action); such transitions are clamped to the boundary.
    pub max_clamped_mass: f64,
    outcomes: usize,
    /// Indexed by (state * n_actions + action) * outcomes + k.
    next: Vec<u32>,
    probs: Vec<f64>,
    /// Expected one-period cost per (state, action).
    costs: Vec<f64>,
}

impl TruncatedMdp {
    fn slots(l_e: usize, l_r: usize) -> usize {
        l_r.saturating_sub(1) + l_e.saturating_sub(1)
    }

    /// State for an index: inventory is the most significant digit, then
    /// the regular and expedited pipelines oldest first.
    pub fn decode(&self, mut idx: usize) -> SystemState {
        let radix = self.q_max as usize + 1;
        let n_r = self.l_r.saturating_sub(1);
        let slots = Self::slots(self.l_e, self.l_r);
        let mut digits = vec![0.0; slots];
        for d in digits.iter_mut().rev() {
            *d = (idx % radix) as f64;
            idx /= radix;
        }
        SystemState {
            inventory: (self.i_min + idx as i64) as f64,
            regular_pipeline: digits[..n_r].to_vec(),
            expedited_pipeline: digits[n_r..].to_vec(),
            period: 0,
        }
    }

    /// Index of a lattice state, clamping inventory into the window.
    pub fn encode(&self, state: &SystemState) -> (usize, bool) {
        let radix = self.q_max as usize + 1;
        let raw = state.inventory.round() as i64;
        let inv = raw.clamp(self.i_min, self.i_max);
        let mut idx = (inv - self.i_min) as usize;
        for &q in state.regular_pipeline.iter().chain(&state.expedited_pipeline) {
            idx = idx * radix + q as usize;
        }
        (idx, inv != raw)
    }

    pub fn action(&self, a: usize) -> (u32, u32) {
        let radix = self.q_max as usize + 1;
        ((a / radix) as u32, (a % radix) as u32)
    }
}

pub fn state_count(l_e: usize, l_r: usize, i_min: i64, i_max: i64, q_max: u32) -> usize {
    let radix = q_max as usize + 1;
    let width = (i_max - i_min + 1) as usize;
    (0..TruncatedMdp::slots(l_e, l_r)).fold(width, |n, _| n.saturating_mul(radix))
}

pub fn build_mdp(instance: &Instance, i_min: i64, i_max: i64, q_max: u32, state_limit: usize) -> Result<TruncatedMdp> {
    ensure(i_min <= 0 && i_max >= 0, || {
        format!("inventory window [{i_min}, {i_max}] must contain 0")
    })?;
    let n_states = state_count(instance.l_e, instance.l_r, i_min, i_max, q_max);
    if n_states > state_limit {
        return Err(Error::StateSpaceTooLarge { states: n_states, limit: state_limit });
    }
    let pmf = instance.demand.pmf();
    let support: Vec<(u64, f64)> = pmf.iter().filter(|&(_, m)| m > 0.0).map(|(k, m)| (k as u64, m)).collect();
    let outcomes = support.len();
    let radix = q_max as usize + 1;
    let n_actions = radix * radix;
    let mut mdp = TruncatedMdp {
        i_min,
        i_max,
        q_max,
        l_e: instance.l_e,
        l_r: instance.l_r,
        n_states,
        n_actions,
        max_clamped_mass: 0.0,
        outcomes,
        next: Vec::with_capacity(n_states * n_actions * outcomes),
        probs: Vec::with_capacity(n_states * n_actions * outcomes),
        costs: Vec::with_capacity(n_states * n_actions),
    };
    for s in 0..n_states {
        let state = mdp.decode(s);
        for a in 0..n_actions {
            let (q_e, q_r) = mdp.action(a);
            let mut cost = 0.0;
            let mut clamped = 0.0;
            for &(d, m) in &support {
                let mut next = state.clone();
                cost += m * next.advance(instance, q_e as f64, q_r as f64, d).total;
                let (idx, c) = mdp.encode(&next);
                if c {
                    clamped += m;
                }
                mdp.next.push(idx as u32);
                mdp.probs.push(m);
            }
            mdp.max_clamped_mass = mdp.max_clamped_mass.max(clamped);
            mdp.costs.push(cost);
        }
    }
    Ok(mdp)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DpSolution {
    pub g_star: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Final span of the gain bounds.
    pub span: f64,
    pub n_states: usize,
    pub n_actions: usize,
    pub max_clamped_mass: f64,
    /// Optimal (q_e, q_r) per state index.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub policy: Vec<(u32, u32)>,
}

/// Relative value iteration on the aperiodicity-transformed chain. Stops
/// when the span of T h - h falls below `tol` (in cost units).
pub fn relative_value_iteration(mdp: &TruncatedMdp, tol: f64, max_iter: usize, tau: f64) -> Result<DpSolution> {
    ensure(tau > 0.0 && tau <= 1.0, || format!("tau must be in (0, 1], got {tau}"))?;
    let (na, no) = (mdp.n_actions, mdp.outcomes);
    let bellman = |h: &[f64], s: usize| -> (f64, usize) {
        let mut best = (f64::INFINITY, 0);
        for a in 0..na {
            let sa = s * na + a;
            let mut v = mdp.costs[sa];
            for k in sa * no..(sa + 1) * no {
                v += mdp.probs[k] * h[mdp.next[k] as usize];
            }
            if v < best.0 {
                best = (v, a);
            }
        }
        best
    };
    let mut h = vec![0.0; mdp.n_states];
    let mut iterations = 0;
    let mut converged = false;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    while iterations < max_iter {
        iterations += 1;
        let th: Vec<f64> = exec::map_range(mdp.n_states, |s| bellman(&h, s).0);
        let (mut dmin, mut dmax) = (f64::INFINITY, f64::NEG_INFINITY);
        for (t, old) in th.iter().zip(&h) {
            let d = t - old;
            dmin = dmin.min(d);
            dmax = dmax.max(d);
        }
        (lo, hi) = (dmin, dmax);
        let anchor = tau * th[0] + (1.0 - tau) * h[0];
        for (x, t) in h.iter_mut().zip(&th) {
            *x = tau * t + (1.0 - tau) * *x - anchor;
        }
        if hi - lo <= tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("value iteration stopped at {iterations} iterations with span {}", hi - lo);
    }
    let policy = exec::map_range(mdp.n_states, |s| mdp.action(bellman(&h, s).1));
    Ok(DpSolution {
        g_star: 0.5 * (lo + hi),
        iterations,
        converged,
        span: hi - lo,
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        max_clamped_mass: mdp.max_clamped_mass,
        policy,
    })
}

/// Builds the lattice with the configured (or default) window and solves it.
pub fn solve(instance: &Instance, cfg: &DpConfig) -> Result<DpSolution> {
    let d_max = instance.demand.support_max() as i64;
    let reach = (instance.l_r as i64 + 2) * d_max;
    let i_min = cfg.i_min.unwrap_or(-reach);
    let i_max = cfg.i_max.unwrap_or(reach);
    let q_max = cfg.q_max.unwrap_or((2 * d_max) as u32);
    let mdp = build_mdp(instance, i_min, i_max, q_max, cfg.state_limit)?;
    relative_value_iteration(&mdp, cfg.tol, cfg.max_iter, cfg.tau)
}
