//! Ordering rules. Every family except single-regular places expedited orders
//! with an order-up-to rule on an inventory position; they differ in how the
//! regular order is chosen.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};
use crate::model::{expedited_inventory_position, Instance, SystemState};
use crate::projection::{default_tolerance, Projector, RegularDecisionState};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyFamily {
    Peip,
    Tbs,
    Si,
    Di,
    Cdi,
    SingleRegular,
    SingleExpedited,
}

impl PolicyFamily {
    pub const ALL: [PolicyFamily; 7] = [
        PolicyFamily::Peip,
        PolicyFamily::Tbs,
        PolicyFamily::Si,
        PolicyFamily::Di,
        PolicyFamily::Cdi,
        PolicyFamily::SingleRegular,
        PolicyFamily::SingleExpedited,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyFamily::Peip => "peip",
            PolicyFamily::Tbs => "tbs",
            PolicyFamily::Si => "si",
            PolicyFamily::Di => "di",
            PolicyFamily::Cdi => "cdi",
            PolicyFamily::SingleRegular => "single-regular",
            PolicyFamily::SingleExpedited => "single-expedited",
        }
    }
}

impl fmt::Display for PolicyFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyFamily::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// A fully parameterized policy.
///
/// `s_e` is the expedited order-up-to level; `delta` is the gap between the
/// regular and expedited levels for the index policies.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum PolicyParams {
    /// Regular orders keep the projected overshoot at `v`.
    Peip { s_e: f64, v: f64 },
    /// Constant regular order `r`.
    Tbs { s_e: f64, r: f64 },
    /// Both rules on the full inventory position.
    Si { s_e: f64, delta: f64 },
    /// Order-up-to on the expedited and the full inventory position.
    Di { s_e: f64, delta: f64 },
    /// Dual index with the regular order capped at `cap`.
    Cdi { s_e: f64, delta: f64, cap: f64 },
    /// Base-stock on the full inventory position, never expedite.
    SingleRegular { s_r: f64 },
    /// Base-stock with the expedited supplier only.
    SingleExpedited { s_e: f64 },
}

impl PolicyParams {
    pub fn family(&self) -> PolicyFamily {
        match self {
            PolicyParams::Peip { .. } => PolicyFamily::Peip,
            PolicyParams::Tbs { .. } => PolicyFamily::Tbs,
            PolicyParams::Si { .. } => PolicyFamily::Si,
            PolicyParams::Di { .. } => PolicyFamily::Di,
            PolicyParams::Cdi { .. } => PolicyFamily::Cdi,
            PolicyParams::SingleRegular { .. } => PolicyFamily::SingleRegular,
            PolicyParams::SingleExpedited { .. } => PolicyFamily::SingleExpedited,
        }
    }

    /// Expedited order-up-to level, `None` when the policy never expedites.
    pub fn expedite_level(&self) -> Option<f64> {
        match *self {
            PolicyParams::Peip { s_e, .. }
            | PolicyParams::Tbs { s_e, .. }
            | PolicyParams::Si { s_e, .. }
            | PolicyParams::Di { s_e, .. }
            | PolicyParams::Cdi { s_e, .. }
            | PolicyParams::SingleExpedited { s_e } => Some(s_e),
            PolicyParams::SingleRegular { .. } => None,
        }
    }

    /// The regular ordering rule with the expedited level stripped off.
    pub fn regular_rule(&self) -> Option<RegularRule> {
        Some(match *self {
            PolicyParams::Peip { v, .. } => RegularRule::Peip { v },
            PolicyParams::Tbs { r, .. } => RegularRule::Tbs { r },
            PolicyParams::Si { delta, .. } => RegularRule::Si { delta },
            PolicyParams::Di { delta, .. } => RegularRule::Di { delta },
            PolicyParams::Cdi { delta, cap, .. } => RegularRule::Cdi { delta, cap },
            PolicyParams::SingleExpedited { .. } => RegularRule::NoRegular,
            PolicyParams::SingleRegular { .. } => return None,
        })
    }

    pub fn with_expedite_level(&self, s_e: f64) -> PolicyParams {
        match self.regular_rule() {
            Some(rule) => rule.with_level(s_e),
            None => *self,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let nonneg = |name: &str, x: f64| {
            ensure(x >= 0.0 && x.is_finite(), || {
                format!("{name} must be finite and nonnegative, got {x}")
            })
        };
        let finite = |name: &str, x: f64| {
            ensure(x.is_finite(), || format!("{name} must be finite, got {x}"))
        };
        match *self {
            PolicyParams::Peip { s_e, v } => {
                finite("s_e", s_e)?;
                nonneg("v", v)
            }
            PolicyParams::Tbs { s_e, r } => {
                finite("s_e", s_e)?;
                nonneg("r", r)
            }
            PolicyParams::Si { s_e, delta } | PolicyParams::Di { s_e, delta } => {
                finite("s_e", s_e)?;
                nonneg("delta", delta)
            }
            PolicyParams::Cdi { s_e, delta, cap } => {
                finite("s_e", s_e)?;
                nonneg("delta", delta)?;
                nonneg("cap", cap)
            }
            PolicyParams::SingleRegular { s_r } => finite("s_r", s_r),
            PolicyParams::SingleExpedited { s_e } => finite("s_e", s_e),
        }
    }
}

/// Regular ordering rule parameters; combined with an expedited level they
/// make a [`PolicyParams`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum RegularRule {
    Peip { v: f64 },
    Tbs { r: f64 },
    Si { delta: f64 },
    Di { delta: f64 },
    Cdi { delta: f64, cap: f64 },
    #[serde(rename = "single-expedited")]
    NoRegular,
}

impl RegularRule {
    pub fn with_level(self, s_e: f64) -> PolicyParams {
        match self {
            RegularRule::Peip { v } => PolicyParams::Peip { s_e, v },
            RegularRule::Tbs { r } => PolicyParams::Tbs { s_e, r },
            RegularRule::Si { delta } => PolicyParams::Si { s_e, delta },
            RegularRule::Di { delta } => PolicyParams::Di { s_e, delta },
            RegularRule::Cdi { delta, cap } => PolicyParams::Cdi { s_e, delta, cap },
            RegularRule::NoRegular => PolicyParams::SingleExpedited { s_e },
        }
    }
}

/// (S - x)^+.
pub fn expedited_order(ip_e: f64, s_e: f64) -> f64 {
    (s_e - ip_e).max(0.0)
}

/// Derived quantities a policy looks at.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyState {
    pub ip_e: f64,
    pub ip_r: f64,
}

impl PolicyState {
    pub fn observe(state: &SystemState, instance: &Instance) -> Self {
        PolicyState {
            ip_e: expedited_inventory_position(state, instance),
            ip_r: state.regular_inventory_position(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Decision {
    pub q_e: f64,
    pub q_r: f64,
    /// `IP^e + q_e - S^e` after expedited ordering; `None` without an
    /// expedited level.
    pub overshoot: Option<f64>,
    /// False when the regular target could not be met with a nonnegative
    /// order.
    pub attainable: bool,
}

/// Orders for the current period.
pub fn decide(params: &PolicyParams, state: &SystemState, instance: &Instance) -> Decision {
    let obs = PolicyState::observe(state, instance);
    match *params {
        PolicyParams::SingleRegular { s_r } => Decision {
            q_e: 0.0,
            q_r: (s_r - obs.ip_r).max(0.0),
            overshoot: None,
            attainable: true,
        },
        PolicyParams::Si { s_e, delta } => {
            let q_e = expedited_order(obs.ip_r, s_e);
            let q_r = (s_e + delta - obs.ip_r - q_e).max(0.0);
            Decision {
                q_e,
                q_r,
                overshoot: Some(obs.ip_e + q_e - s_e),
                attainable: true,
            }
        }
        PolicyParams::Peip { s_e, v } => {
            let q_e = expedited_order(obs.ip_e, s_e);
            let overshoot = obs.ip_e + q_e - s_e;
            let rds = RegularDecisionState {
                overshoot,
                incoming: state.incoming_regular(instance).to_vec(),
            };
            let order = Projector::new(&rds, &instance.demand).solve(v, default_tolerance(v));
            Decision {
                q_e,
                q_r: order.quantity,
                overshoot: Some(overshoot),
                attainable: order.attainable,
            }
        }
        PolicyParams::Tbs { s_e, r } => {
            let q_e = expedited_order(obs.ip_e, s_e);
            Decision {
                q_e,
                q_r: r,
                overshoot: Some(obs.ip_e + q_e - s_e),
                attainable: true,
            }
        }
        PolicyParams::Di { s_e, delta } => {
            let q_e = expedited_order(obs.ip_e, s_e);
            Decision {
                q_e,
                q_r: (s_e + delta - obs.ip_r - q_e).max(0.0),
                overshoot: Some(obs.ip_e + q_e - s_e),
                attainable: true,
            }
        }
        PolicyParams::Cdi { s_e, delta, cap } => {
            let q_e = expedited_order(obs.ip_e, s_e);
            Decision {
                q_e,
                q_r: (s_e + delta - obs.ip_r - q_e).max(0.0).min(cap),
                overshoot: Some(obs.ip_e + q_e - s_e),
                attainable: true,
            }
        }
        PolicyParams::SingleExpedited { s_e } => {
            let q_e = expedited_order(obs.ip_e, s_e);
            Decision {
                q_e,
                q_r: 0.0,
                overshoot: Some(obs.ip_e + q_e - s_e),
                attainable: true,
            }
        }
    }
}
