//! Exact propagation of the overshoot recursion `O' = (O + q - D)^+` and the
//! regular-order solve built on it.
//!
//! The expected overshoot `l` periods ahead, as a function of the regular
//! order `q` placed now, is `E[(Z + q - D)^+]` where `Z` is the overshoot
//! after the `l - 1` orders already in transit have entered the expedited
//! horizon. `Z` does not depend on `q`, so it is propagated once per decision
//! and the final step is evaluated through the demand loss function.
//!
//! Propagation keeps the law of `Z` as a handful of dense segments. Each
//! segment holds masses on the lattice `top - k`, `k = lo, lo + 1, ...`; a new
//! segment is born whenever mass is clipped at zero. With integer demand this
//! is exact and costs one dense convolution per segment and step.

use serde::{Deserialize, Serialize};

use crate::atoms::{AtomDistribution, DEFAULT_MERGE_TOL};
use crate::demand::{DemandModel, DensePmf};
use crate::error::{ensure, Result};

/// Masses below this at either end of a segment are dropped.
const TRIM_MASS: f64 = 1e-15;

/// Regular-order information state: the overshoot after expedited ordering and
/// the `l - 1` regular orders still to enter the expedited horizon, oldest
/// first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegularDecisionState {
    pub overshoot: f64,
    pub incoming: Vec<f64>,
}

impl RegularDecisionState {
    pub fn new(overshoot: f64, incoming: Vec<f64>) -> Result<Self> {
        ensure(overshoot >= 0.0 && overshoot.is_finite(), || {
            format!("overshoot must be nonnegative, got {overshoot}")
        })?;
        ensure(incoming.iter().all(|q| *q >= 0.0 && q.is_finite()), || {
            "incoming regular orders must be nonnegative".into()
        })?;
        Ok(RegularDecisionState {
            overshoot,
            incoming,
        })
    }

    /// Lead time difference `l`.
    pub fn lead_time_difference(&self) -> usize {
        self.incoming.len() + 1
    }
}

/// Law of `(Z + offset - D)^+` for independent `Z ~ dist` and `D ~ demand`.
///
/// All mass at nonpositive values collapses onto a single atom at zero.
pub fn lindley_step(dist: &AtomDistribution, offset: f64, demand: &DemandModel) -> AtomDistribution {
    let tol = dist.merge_tol();
    let mut out = Vec::with_capacity(dist.len() * demand.pmf().probs().len() + 1);
    let mut zero = 0.0;
    for &(z, m) in dist.atoms() {
        for (d, p) in demand.pmf().iter() {
            let v = z + offset - d as f64;
            if v > tol {
                out.push((v, m * p));
            } else {
                zero += m * p;
            }
        }
    }
    out.push((0.0, zero));
    AtomDistribution::with_tolerance(out, tol)
}

#[derive(Clone, Debug)]
struct Segment {
    top: f64,
    lo: i64,
    mass: Vec<f64>,
}

impl Segment {
    fn total(&self) -> f64 {
        self.mass.iter().sum()
    }

    /// Folds tail entries carrying at most `TRIM_MASS` in total on each side
    /// into the outermost kept entry, so mass is conserved.
    fn trim(&mut self) {
        let mut acc = 0.0;
        let mut f = 0;
        while f < self.mass.len() && acc + self.mass[f] <= TRIM_MASS {
            acc += self.mass[f];
            f += 1;
        }
        if f == self.mass.len() {
            // all mass is negligible; keep it as one entry
            let total = acc;
            self.mass.clear();
            if total > 0.0 {
                self.mass.push(total);
            }
            return;
        }
        acc = 0.0;
        let mut last = self.mass.len();
        while last > f + 1 && acc + self.mass[last - 1] <= TRIM_MASS {
            acc += self.mass[last - 1];
            last -= 1;
        }
        let head: f64 = self.mass[..f].iter().sum();
        let tail: f64 = self.mass[last..].iter().sum();
        self.mass.truncate(last);
        self.mass.drain(..f);
        self.lo += f as i64;
        self.mass[0] += head;
        *self.mass.last_mut().unwrap() += tail;
    }
}

/// Overshoot law after the in-transit regular orders, ready to be projected
/// one more step for any candidate order.
#[derive(Clone, Debug)]
pub struct Projector<'a> {
    demand: &'a DensePmf,
    segments: Vec<Segment>,
    tol: f64,
}

impl<'a> Projector<'a> {
    /// Propagates the point mass at `rds.overshoot` through the incoming
    /// orders.
    pub fn new(rds: &RegularDecisionState, demand: &'a DemandModel) -> Self {
        let mut proj = Projector {
            demand: demand.pmf(),
            segments: vec![Segment {
                top: rds.overshoot,
                lo: 0,
                mass: vec![1.0],
            }],
            tol: DEFAULT_MERGE_TOL,
        };
        for &b in &rds.incoming {
            proj.push_order(b);
        }
        proj
    }

    fn push_order(&mut self, b: f64) {
        let pmf = self.demand;
        let probs = pmf.probs();
        let dmin = pmf.min() as i64;
        let dmax = pmf.max() as i64;
        let mut next = Vec::with_capacity(self.segments.len() + 1);
        let mut clipped_total = 0.0;
        for seg in self.segments.drain(..) {
            let top = seg.top + b;
            // largest k with top - k > tol
            let kmax = (top - self.tol).ceil() as i64 - 1;
            let lo = seg.lo + dmin;
            if kmax < lo {
                clipped_total += seg.total();
                continue;
            }
            let hi = (seg.lo + seg.mass.len() as i64 - 1 + dmax).min(kmax);
            let mut out = vec![0.0; (hi - lo + 1) as usize];
            for (j, &m) in seg.mass.iter().enumerate() {
                if m == 0.0 {
                    continue;
                }
                let k = seg.lo + j as i64;
                let dhi = dmax.min(kmax - k);
                if dhi < dmin {
                    clipped_total += m;
                    continue;
                }
                let n = (dhi - dmin + 1) as usize;
                for (slot, &p) in out[j..j + n].iter_mut().zip(&probs[..n]) {
                    *slot += m * p;
                }
                if dhi < dmax {
                    clipped_total += m * pmf.survival_int(dhi);
                }
            }
            let mut s = Segment { top, lo, mass: out };
            s.trim();
            if !s.mass.is_empty() {
                next.push(s);
            }
        }
        if clipped_total > 0.0 {
            next.push(Segment {
                top: 0.0,
                lo: 0,
                mass: vec![clipped_total],
            });
        }
        self.segments = merge_aligned(next, self.tol);
    }

    /// E[(Z + q - D)^+]: the expected overshoot once an order `q` has entered.
    pub fn project(&self, q: f64) -> f64 {
        self.project_with_slope(q).0
    }

    /// Mean of the propagated law (before the new order).
    pub fn prefix_mean(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                s.mass
                    .iter()
                    .enumerate()
                    .map(|(j, m)| m * (s.top - (s.lo + j as i64) as f64))
                    .sum::<f64>()
            })
            .sum()
    }

    /// The propagated law as atoms (test and diagnostic use).
    pub fn prefix_law(&self) -> AtomDistribution {
        AtomDistribution::with_tolerance(
            self.segments
                .iter()
                .flat_map(|s| {
                    s.mass
                        .iter()
                        .enumerate()
                        .map(move |(j, &m)| (s.top - (s.lo + j as i64) as f64, m))
                })
                .collect::<Vec<_>>(),
            self.tol,
        )
    }

    /// Number of stored lattice points.
    pub fn support_len(&self) -> usize {
        self.segments.iter().map(|s| s.mass.len()).sum()
    }

    /// Projected overshoot and its right derivative in q.
    fn project_with_slope(&self, q: f64) -> (f64, f64) {
        let (mut g, mut slope) = (0.0, 0.0);
        for seg in &self.segments {
            let (e, c) = self.demand.excess_cdf_sum(seg.top + q - seg.lo as f64, &seg.mass);
            g += e;
            slope += c;
        }
        (g, slope)
    }

    /// Smallest order whose projected overshoot reaches `target`.
    ///
    /// The projection is convex and piecewise linear in q, so Newton steps
    /// started above the root descend onto it monotonically; bisection on a
    /// geometrically grown bracket takes over if a step stalls.
    pub fn solve(&self, target: f64, tol: f64) -> RegularOrder {
        let at_zero = self.project(0.0);
        if at_zero > target + tol {
            return RegularOrder {
                quantity: 0.0,
                projected: at_zero,
                attainable: false,
            };
        }
        if at_zero >= target - tol {
            return RegularOrder {
                quantity: 0.0,
                projected: at_zero,
                attainable: true,
            };
        }
        // E[(x)^+] >= E[x], so this order already reaches the target
        let mut lo = 0.0;
        let mut hi = (target - self.prefix_mean() + self.demand.mean()).max(tol);
        let (mut g_hi, mut slope) = self.project_with_slope(hi);
        while g_hi < target {
            lo = hi;
            hi *= 2.0;
            (g_hi, slope) = self.project_with_slope(hi);
        }
        // invariant: project(lo) < target <= project(hi)
        let exact = 1e-11 * (1.0 + target);
        for _ in 0..64 {
            if g_hi - target <= exact || hi - lo <= tol {
                // within the exactness band or the bracket tolerance
                break;
            }
            let newton = hi - (g_hi - target) / slope;
            if slope > 0.0 && hi - newton <= 1e-13 * (1.0 + hi) {
                break;
            }
            let q = if slope > 0.0 && newton > lo && newton < hi {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let (g, s) = self.project_with_slope(q);
            if (g - target).abs() <= exact {
                hi = q;
                g_hi = g;
                break;
            }
            if g < target {
                lo = q;
            } else {
                hi = q;
                g_hi = g;
                slope = s;
            }
        }
        RegularOrder {
            quantity: hi,
            projected: g_hi,
            attainable: true,
        }
    }
}

/// Merges segments whose lattices coincide (tops differing by an integer).
fn merge_aligned(mut segs: Vec<Segment>, tol: f64) -> Vec<Segment> {
    if segs.len() < 2 {
        return segs;
    }
    let mut out: Vec<Segment> = Vec::with_capacity(segs.len());
    for seg in segs.drain(..) {
        let target = out.iter_mut().find(|o| {
            let diff = o.top - seg.top;
            (diff - diff.round()).abs() <= tol
        });
        match target {
            None => out.push(seg),
            Some(o) => {
                let shift = (o.top - seg.top).round() as i64;
                // seg value top_s - k equals o.top - (k + shift)
                let s_lo = seg.lo + shift;
                let new_lo = o.lo.min(s_lo);
                let new_hi = (o.lo + o.mass.len() as i64).max(s_lo + seg.mass.len() as i64);
                let mut mass = vec![0.0; (new_hi - new_lo) as usize];
                let a = (o.lo - new_lo) as usize;
                for (slot, m) in mass[a..].iter_mut().zip(&o.mass) {
                    *slot += m;
                }
                let b = (s_lo - new_lo) as usize;
                for (slot, m) in mass[b..].iter_mut().zip(&seg.mass) {
                    *slot += m;
                }
                o.lo = new_lo;
                o.mass = mass;
            }
        }
    }
    out
}

/// Result of the regular-order solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularOrder {
    pub quantity: f64,
    /// Projected overshoot at `quantity`.
    pub projected: f64,
    /// False when even a zero order overshoots the target.
    pub attainable: bool,
}

/// Default bisection tolerance for a target overshoot level.
pub fn default_tolerance(target: f64) -> f64 {
    1e-6 * (1.0 + target)
}

/// E[O_{t+l} | rds, q_r].
pub fn project_overshoot(rds: &RegularDecisionState, q_r: f64, demand: &DemandModel) -> f64 {
    Projector::new(rds, demand).project(q_r)
}

/// Regular order `q >= 0` with E[O_{t+l}] = `target`; the infimum root when
/// the projection is flat at the target. An unattainable target (the
/// projection already exceeds it at zero) yields a zero order and a flag.
pub fn solve_regular_order(
    rds: &RegularDecisionState,
    target: f64,
    demand: &DemandModel,
    tol: Option<f64>,
) -> RegularOrder {
    let tol = tol.unwrap_or_else(|| default_tolerance(target));
    let order = Projector::new(rds, demand).solve(target, tol);
    if !order.attainable {
        log::debug!(
            "attainability violation: projected overshoot {} exceeds target {}",
            order.projected,
            target
        );
    }
    order
}

/// Reference implementation of the projection through [`lindley_step`].
pub fn project_overshoot_atoms(rds: &RegularDecisionState, q_r: f64, demand: &DemandModel) -> f64 {
    let mut dist = AtomDistribution::point(rds.overshoot);
    for &b in rds.incoming.iter().chain(std::iter::once(&q_r)) {
        dist = lindley_step(&dist, b, demand);
    }
    dist.mean()
}
