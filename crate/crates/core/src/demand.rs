//! One-period demand distributions on the nonnegative integers.
//!
//! Every family is stored as a dense, truncated probability vector. The
//! truncation drops at most `tail_epsilon` of mass, split evenly between the
//! two tails, and the remaining vector is renormalized so that downstream
//! propagation works with proper distributions.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use serde::{Deserialize, Serialize};

use crate::atoms::AtomDistribution;
use crate::error::{ensure, Error, Result};

pub const DEFAULT_TAIL_EPSILON: f64 = 1e-12;

/// Hard cap on the support length of a single-period pmf.
const MAX_SUPPORT: usize = 10_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemandFamily {
    NegativeBinomial,
    Poisson,
    Geometric,
    Deterministic,
    /// Explicit pmf over `0..n`, used for small test instances.
    Empirical,
}

impl DemandFamily {
    pub fn name(self) -> &'static str {
        match self {
            DemandFamily::NegativeBinomial => "negative-binomial",
            DemandFamily::Poisson => "poisson",
            DemandFamily::Geometric => "geometric",
            DemandFamily::Deterministic => "deterministic",
            DemandFamily::Empirical => "empirical",
        }
    }
}

/// Demand description as it appears in config files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandSpec {
    pub family: DemandFamily,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cov: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail_epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pmf: Option<Vec<f64>>,
}

impl DemandSpec {
    pub fn negative_binomial(mean: f64, cov: f64) -> Self {
        DemandSpec {
            family: DemandFamily::NegativeBinomial,
            mean: Some(mean),
            cov: Some(cov),
            tail_epsilon: None,
            pmf: None,
        }
    }

    pub fn build(&self) -> Result<DemandModel> {
        let eps = self.tail_epsilon.unwrap_or(DEFAULT_TAIL_EPSILON);
        if self.family == DemandFamily::Empirical {
            let pmf = self.pmf.as_ref().ok_or_else(|| {
                Error::Validation("empirical demand requires a `pmf` array".into())
            })?;
            return DemandModel::empirical(pmf, eps);
        }
        ensure(self.pmf.is_none(), || {
            format!("`pmf` is only valid for empirical demand, not {}", self.family.name())
        })?;
        let mean = self
            .mean
            .ok_or_else(|| Error::Validation("demand `mean` is required".into()))?;
        make_demand(self.family, mean, self.cov, eps)
    }
}

/// Dense pmf over the integer window `offset..offset + probs.len()`.
///
/// Carries the cdf and the first-order loss function `E[(n - D)^+]` at every
/// integer of the window, so the loss at a real argument is an O(1) lookup
/// plus linear interpolation.
#[derive(Clone, Debug, PartialEq)]
pub struct DensePmf {
    offset: usize,
    probs: Vec<f64>,
    cdf: Vec<f64>,
    loss: Vec<f64>,
    mean: f64,
}

impl DensePmf {
    pub fn new(offset: usize, probs: Vec<f64>) -> Self {
        assert!(!probs.is_empty(), "empty pmf");
        let mut cdf = Vec::with_capacity(probs.len());
        let mut loss = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        let mut l = 0.0;
        let mut mean = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            // L(n + 1) = L(n) + P(D <= n)
            loss.push(l);
            acc += p;
            cdf.push(acc);
            l += acc;
            mean += p * (offset + i) as f64;
        }
        DensePmf {
            offset,
            probs,
            cdf,
            loss,
            mean,
        }
    }

    /// Returns (sum_j m_j E[(x_j - D)^+], sum_j m_j P(D <= x_j)) for the
    /// points x_j = base - j carrying masses m_j.
    pub(crate) fn excess_cdf_sum(&self, base: f64, masses: &[f64]) -> (f64, f64) {
        let n0 = base.floor();
        let frac = base - n0;
        let n0 = n0 as i64;
        let offset = self.offset as i64;
        let last = offset + self.probs.len() as i64 - 1;
        let total = *self.cdf.last().unwrap();
        let (mut excess, mut cdf) = (0.0, 0.0);
        // x_j >= max: every support point lies below
        let top_end = ((n0 - last + 1).max(0) as usize).min(masses.len());
        for (j, &m) in masses[..top_end].iter().enumerate() {
            let x = base - j as f64;
            excess += m * (total * x - self.mean);
            cdf += m * total;
        }
        // offset <= floor(x_j) < max: table lookup with a common fraction
        let mid_end = ((n0 - offset + 1).max(0) as usize).min(masses.len());
        if mid_end > top_end {
            let i0 = (n0 - offset) as usize - top_end;
            for (k, &m) in masses[top_end..mid_end].iter().enumerate() {
                let i = i0 - k;
                excess += m * (self.loss[i] + frac * self.cdf[i]);
                cdf += m * self.cdf[i];
            }
        }
        (excess, cdf)
    }

    pub fn point(value: usize) -> Self {
        DensePmf::new(value, vec![1.0])
    }

    pub fn min(&self) -> usize {
        self.offset
    }

    pub fn max(&self) -> usize {
        self.offset + self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn pmf(&self, k: usize) -> f64 {
        if k < self.offset {
            return 0.0;
        }
        self.probs.get(k - self.offset).copied().unwrap_or(0.0)
    }

    pub fn total_mass(&self) -> f64 {
        *self.cdf.last().unwrap()
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean;
        self.iter().map(|(k, p)| p * (k as f64 - m).powi(2)).sum()
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(move |(i, &p)| (self.offset + i, p))
    }

    /// P(D <= k) for integer k.
    pub fn cdf_int(&self, k: i64) -> f64 {
        if k < self.offset as i64 {
            0.0
        } else {
            let i = (k - self.offset as i64) as usize;
            if i >= self.cdf.len() {
                self.total_mass()
            } else {
                self.cdf[i]
            }
        }
    }

    /// P(D <= x) for real x.
    pub fn cdf(&self, x: f64) -> f64 {
        if x < self.offset as f64 {
            return 0.0;
        }
        if x >= self.max() as f64 {
            return self.total_mass();
        }
        self.cdf_int(x.floor() as i64)
    }

    /// P(D > k) for integer k.
    pub fn survival_int(&self, k: i64) -> f64 {
        (self.total_mass() - self.cdf_int(k)).max(0.0)
    }

    /// E[(x - D)^+].
    pub fn expected_excess(&self, x: f64) -> f64 {
        let lo = self.offset as f64;
        if x <= lo {
            return 0.0;
        }
        let hi = self.max() as f64;
        if x >= hi {
            // every support point lies below x
            return self.total_mass() * x - self.mean;
        }
        let n = x.floor();
        let i = n as usize - self.offset;
        self.loss[i] + (x - n) * self.cdf[i]
    }

    /// E[(D - x)^+].
    pub fn expected_shortfall(&self, x: f64) -> f64 {
        self.expected_excess(x) - (self.total_mass() * x - self.mean)
    }

    /// Smallest integer k with P(D <= k) >= level.
    pub fn quantile(&self, level: f64) -> usize {
        let i = self.cdf.partition_point(|&c| c < level);
        self.offset + i.min(self.probs.len() - 1)
    }

    /// Distribution of the sum of two independent variables.
    pub fn convolve(&self, other: &DensePmf) -> DensePmf {
        let mut out = vec![0.0; self.probs.len() + other.probs.len() - 1];
        for (i, &a) in self.probs.iter().enumerate() {
            if a == 0.0 {
                continue;
            }
            for (slot, &b) in out[i..].iter_mut().zip(&other.probs) {
                *slot += a * b;
            }
        }
        DensePmf::new(self.offset + other.offset, out)
    }

    /// Drops tail entries carrying at most `eps / 2` of mass on each side.
    pub fn trimmed(&self, eps: f64) -> DensePmf {
        let half = eps / 2.0;
        let mut lo = 0;
        let mut acc = 0.0;
        while lo + 1 < self.probs.len() && acc + self.probs[lo] <= half {
            acc += self.probs[lo];
            lo += 1;
        }
        let mut hi = self.probs.len();
        acc = 0.0;
        while hi > lo + 1 && acc + self.probs[hi - 1] <= half {
            acc += self.probs[hi - 1];
            hi -= 1;
        }
        DensePmf::new(self.offset + lo, self.probs[lo..hi].to_vec())
    }

    /// n-fold convolution, trimming each partial product at `eps`.
    pub fn n_fold(&self, n: usize, eps: f64) -> DensePmf {
        assert!(n >= 1);
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.convolve(self).trimmed(eps);
        }
        acc
    }

    pub fn to_atoms(&self) -> AtomDistribution {
        AtomDistribution::from_sorted_unchecked(
            self.iter()
                .filter(|&(_, p)| p > 0.0)
                .map(|(k, p)| (k as f64, p))
                .collect(),
        )
    }
}

/// A one-period demand distribution. Immutable once built.
#[derive(Clone, Debug, PartialEq)]
pub struct DemandModel {
    family: DemandFamily,
    mean: f64,
    cov: f64,
    tail_epsilon: f64,
    pmf: DensePmf,
}

/// Builds a demand model from its first two moments.
///
/// `cov` is required for the negative binomial and must be omitted for the
/// other parametric families, whose dispersion is implied by the mean.
pub fn make_demand(
    family: DemandFamily,
    mean: f64,
    cov: Option<f64>,
    tail_epsilon: f64,
) -> Result<DemandModel> {
    ensure(mean.is_finite() && mean > 0.0, || {
        format!("demand mean must be positive, got {mean}")
    })?;
    ensure(tail_epsilon > 0.0 && tail_epsilon < 1e-2, || {
        format!("tail_epsilon must lie in (0, 0.01), got {tail_epsilon}")
    })?;
    if let Some(c) = cov {
        ensure(c.is_finite() && c >= 0.0, || {
            format!("coefficient of variation must be nonnegative, got {c}")
        })?;
    }
    let (pmf, cov) = match family {
        DemandFamily::NegativeBinomial => {
            let cov = cov.ok_or_else(|| Error::Parameterization {
                family: family.name(),
                reason: "coefficient of variation is required".into(),
            })?;
            let var = (cov * mean).powi(2);
            if var <= mean {
                return Err(Error::Parameterization {
                    family: family.name(),
                    reason: format!("variance {var} must exceed the mean {mean}"),
                });
            }
            let (shape, success) = negative_binomial_params(mean, cov);
            let log_ratio = (1.0 - success).ln();
            let pmf = truncated_from_log_recurrence(shape * success.ln(), tail_epsilon, |k| {
                ((k as f64 + shape) / (k as f64 + 1.0)).ln() + log_ratio
            })?;
            (pmf, cov)
        }
        DemandFamily::Poisson => {
            reject_cov(family, cov)?;
            let ln_mean = mean.ln();
            let pmf = truncated_from_log_recurrence(-mean, tail_epsilon, |k| {
                ln_mean - (k as f64 + 1.0).ln()
            })?;
            (pmf, 1.0 / mean.sqrt())
        }
        DemandFamily::Geometric => {
            reject_cov(family, cov)?;
            // P(D = k) = (1 - theta) theta^k on {0, 1, ...}
            let theta = mean / (1.0 + mean);
            let ln_theta = theta.ln();
            let pmf =
                truncated_from_log_recurrence((1.0 - theta).ln(), tail_epsilon, |_| ln_theta)?;
            (pmf, ((1.0 + mean) / mean).sqrt())
        }
        DemandFamily::Deterministic => {
            reject_cov(family, cov)?;
            let k = mean.round();
            ensure((mean - k).abs() < 1e-9, || {
                format!("deterministic demand must be integer-valued, got {mean}")
            })?;
            (DensePmf::point(k as usize), 0.0)
        }
        DemandFamily::Empirical => {
            return Err(Error::Validation(
                "empirical demand is built from an explicit pmf".into(),
            ))
        }
    };
    Ok(DemandModel {
        family,
        mean,
        cov,
        tail_epsilon,
        pmf,
    })
}

fn reject_cov(family: DemandFamily, cov: Option<f64>) -> Result<()> {
    ensure(cov.is_none(), || {
        format!("{} demand takes no coefficient of variation", family.name())
    })
}

/// Moment matching: mean = r(1-q)/q and variance = r(1-q)/q^2.
pub fn negative_binomial_params(mean: f64, cov: f64) -> (f64, f64) {
    let var = (cov * mean).powi(2);
    let success = mean / var;
    let shape = mean * mean / (var - mean);
    (shape, success)
}

/// Evaluates a pmf from `ln P(0)` and the log ratio `ln P(k+1)/P(k)`, stopping
/// once the upper tail falls below `eps / 2`, then trims the lower tail.
fn truncated_from_log_recurrence(
    ln_p0: f64,
    eps: f64,
    log_ratio: impl Fn(usize) -> f64,
) -> Result<DensePmf> {
    let mut ln_p = ln_p0;
    let mut probs = Vec::new();
    let mut acc = 0.0;
    let mut k = 0usize;
    let mut seen_mode = false;
    loop {
        let p = ln_p.exp();
        probs.push(p);
        acc += p;
        let next = log_ratio(k);
        if next < 0.0 {
            seen_mode = true;
        }
        // only stop on the decreasing side of the mode
        if seen_mode && 1.0 - acc < eps / 2.0 {
            break;
        }
        k += 1;
        if k >= MAX_SUPPORT {
            return Err(Error::Validation(format!(
                "demand support exceeds {MAX_SUPPORT} points"
            )));
        }
        ln_p += next;
    }
    let total: f64 = probs.iter().sum();
    for p in probs.iter_mut() {
        *p /= total;
    }
    let trimmed = DensePmf::new(0, probs).trimmed(eps);
    let total = trimmed.total_mass();
    let offset = trimmed.min();
    Ok(DensePmf::new(
        offset,
        trimmed.probs().iter().map(|p| p / total).collect(),
    ))
}

impl DemandModel {
    /// Demand with an explicit pmf over `0..pmf.len()`.
    pub fn empirical(pmf: &[f64], tail_epsilon: f64) -> Result<Self> {
        ensure(!pmf.is_empty(), || "empirical pmf is empty".into())?;
        ensure(pmf.iter().all(|p| p.is_finite() && *p >= 0.0), || {
            "empirical pmf entries must be nonnegative".into()
        })?;
        let total: f64 = pmf.iter().sum();
        ensure((total - 1.0).abs() < 1e-9, || {
            format!("empirical pmf sums to {total}, expected 1")
        })?;
        let first = pmf.iter().position(|&p| p > 0.0).unwrap();
        let last = pmf.iter().rposition(|&p| p > 0.0).unwrap();
        let dense = DensePmf::new(first, pmf[first..=last].iter().map(|p| p / total).collect());
        let mean = dense.mean();
        let cov = if mean > 0.0 { dense.variance().sqrt() / mean } else { 0.0 };
        Ok(DemandModel {
            family: DemandFamily::Empirical,
            mean,
            cov,
            tail_epsilon,
            pmf: dense,
        })
    }

    pub fn family(&self) -> DemandFamily {
        self.family
    }

    /// Declared mean.
    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Declared (or implied) coefficient of variation.
    pub fn cov(&self) -> f64 {
        self.cov
    }

    pub fn tail_epsilon(&self) -> f64 {
        self.tail_epsilon
    }

    pub fn pmf(&self) -> &DensePmf {
        &self.pmf
    }

    pub fn support_min(&self) -> usize {
        self.pmf.min()
    }

    pub fn support_max(&self) -> usize {
        self.pmf.max()
    }

    /// Law of total demand over `n` periods.
    pub fn convolve_n(&self, n: usize) -> Result<AtomDistribution> {
        Ok(self.n_fold(n)?.to_atoms())
    }

    /// Dense form of [`DemandModel::convolve_n`].
    pub fn n_fold(&self, n: usize) -> Result<DensePmf> {
        ensure(n >= 1, || "number of periods must be at least 1".into())?;
        Ok(self.pmf.n_fold(n, self.tail_epsilon))
    }

    /// Inverse-cdf draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let u: f64 = rng.gen();
        let cdf = &self.pmf.cdf;
        let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
        (self.pmf.offset + i) as u64
    }

    pub fn spec(&self) -> DemandSpec {
        match self.family {
            DemandFamily::Empirical => {
                let mut pmf = vec![0.0; self.pmf.min()];
                pmf.extend_from_slice(self.pmf.probs());
                DemandSpec {
                    family: self.family,
                    mean: None,
                    cov: None,
                    tail_epsilon: Some(self.tail_epsilon),
                    pmf: Some(pmf),
                }
            }
            DemandFamily::NegativeBinomial => DemandSpec {
                family: self.family,
                mean: Some(self.mean),
                cov: Some(self.cov),
                tail_epsilon: Some(self.tail_epsilon),
                pmf: None,
            },
            _ => DemandSpec {
                family: self.family,
                mean: Some(self.mean),
                cov: None,
                tail_epsilon: Some(self.tail_epsilon),
                pmf: None,
            },
        }
    }
}

/// Seeded stream of demand draws. One draw per period, whatever the policy,
/// so that every policy sees the same demand path for a given seed.
#[derive(Clone, Debug)]
pub struct DemandStream {
    rng: Pcg64,
}

impl DemandStream {
    pub fn new(seed: u64) -> Self {
        DemandStream {
            rng: Pcg64::seed_from_u64(seed),
        }
    }

    pub fn next_draw(&mut self, model: &DemandModel) -> u64 {
        model.sample(&mut self.rng)
    }

    pub fn rng(&mut self) -> &mut Pcg64 {
        &mut self.rng
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nb(mean: f64, cov: f64) -> DemandModel {
        make_demand(DemandFamily::NegativeBinomial, mean, Some(cov), DEFAULT_TAIL_EPSILON).unwrap()
    }

    #[test]
    fn negative_binomial_moment_match() {
        // var = 625: q = 50/625, r = 2500/575
        let (r, q) = negative_binomial_params(50.0, 0.5);
        assert!((q - 0.08).abs() < 1e-15);
        assert!((r - 2500.0 / 575.0).abs() < 1e-12);
        // mean r(1-q)/q and variance r(1-q)/q^2 recover the inputs
        assert!((r * (1.0 - q) / q - 50.0).abs() < 1e-9);
        assert!((r * (1.0 - q) / (q * q) - 625.0).abs() < 1e-9);

        for cov in [0.15, 0.25, 0.5, 1.0, 1.5, 2.0] {
            let m = nb(50.0, cov);
            let pmf = m.pmf();
            let target = (cov * 50.0f64).powi(2);
            assert!((pmf.total_mass() - 1.0).abs() < 1e-12);
            assert!((pmf.mean() - 50.0).abs() < 1e-6, "cov {cov}: mean {}", pmf.mean());
            let rel = (pmf.variance() - target).abs() / target;
            assert!(rel < 1e-3, "cov {cov}: variance off by {rel}");
        }
    }

    #[test]
    fn negative_binomial_needs_overdispersion() {
        let err = make_demand(DemandFamily::NegativeBinomial, 50.0, Some(0.1), 1e-12);
        assert!(matches!(err, Err(Error::Parameterization { .. })));
        let err = make_demand(DemandFamily::NegativeBinomial, 50.0, None, 1e-12);
        assert!(matches!(err, Err(Error::Parameterization { .. })));
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(make_demand(DemandFamily::Poisson, -1.0, None, 1e-12).is_err());
        assert!(make_demand(DemandFamily::Poisson, 0.0, None, 1e-12).is_err());
        assert!(make_demand(DemandFamily::Poisson, 5.0, Some(0.3), 1e-12).is_err());
        assert!(make_demand(DemandFamily::Deterministic, 2.5, None, 1e-12).is_err());
        assert!(make_demand(DemandFamily::NegativeBinomial, 50.0, Some(-0.5), 1e-12).is_err());
        assert!(DemandModel::empirical(&[0.5, 0.4], 1e-12).is_err());
        assert!(DemandModel::empirical(&[-0.5, 1.5], 1e-12).is_err());
    }

    #[test]
    fn deterministic_is_point_mass() {
        let m = make_demand(DemandFamily::Deterministic, 50.0, None, 1e-12).unwrap();
        assert_eq!(m.support_min(), 50);
        assert_eq!(m.support_max(), 50);
        assert_eq!(m.pmf().pmf(50), 1.0);
        let mut s = DemandStream::new(7);
        assert!((0..100).all(|_| s.next_draw(&m) == 50));
        let three = m.convolve_n(3).unwrap();
        assert_eq!(three.atoms(), &[(150.0, 1.0)]);
    }

    #[test]
    fn poisson_reports_implied_cov() {
        let m = make_demand(DemandFamily::Poisson, 50.0, None, 1e-12).unwrap();
        assert!((m.cov() - 1.0 / 50f64.sqrt()).abs() < 1e-15);
        assert!((m.pmf().variance() - 50.0).abs() < 1e-6);
    }

    #[test]
    fn geometric_moments() {
        let m = make_demand(DemandFamily::Geometric, 4.0, None, 1e-12).unwrap();
        assert!((m.pmf().mean() - 4.0).abs() < 1e-8);
        // var = theta / (1 - theta)^2 = mean (1 + mean)
        assert!((m.pmf().variance() - 20.0).abs() < 1e-6);
    }

    #[test]
    fn convolution_of_fair_coin() {
        let m = DemandModel::empirical(&[0.5, 0.5], 1e-12).unwrap();
        let two = m.convolve_n(2).unwrap();
        assert_eq!(two.atoms(), &[(0.0, 0.25), (1.0, 0.5), (2.0, 0.25)]);
        assert_eq!(m.convolve_n(1).unwrap(), m.pmf().to_atoms());
        assert!(m.convolve_n(0).is_err());
    }

    #[test]
    fn loss_function_matches_direct_sum() {
        let m = nb(10.0, 0.6);
        let pmf = m.pmf();
        for x in [-3.0, 0.0, 0.4, 3.5, 9.99, 10.0, 17.25, 80.0, 500.0] {
            let direct: f64 = pmf.iter().map(|(d, p)| p * (x - d as f64).max(0.0)).sum();
            assert!((pmf.expected_excess(x) - direct).abs() < 1e-10, "x = {x}");
            let short: f64 = pmf.iter().map(|(d, p)| p * (d as f64 - x).max(0.0)).sum();
            assert!((pmf.expected_shortfall(x) - short).abs() < 1e-10, "x = {x}");
        }
    }

    #[test]
    fn batched_loss_matches_scalar() {
        let m = nb(10.0, 0.6);
        let pmf = m.pmf();
        let masses: Vec<f64> = (0..120).map(|j| 1.0 + (j % 7) as f64).collect();
        for base in [-5.5, 0.0, 3.25, 40.75, 95.0, 400.5] {
            let (e, c) = pmf.excess_cdf_sum(base, &masses);
            let (mut e2, mut c2) = (0.0, 0.0);
            for (j, &w) in masses.iter().enumerate() {
                let x = base - j as f64;
                e2 += w * pmf.expected_excess(x);
                c2 += w * pmf.cdf(x);
            }
            assert!((e - e2).abs() < 1e-9 * (1.0 + e2), "base {base}: {e} vs {e2}");
            assert!((c - c2).abs() < 1e-12 * (1.0 + c2), "base {base}: {c} vs {c2}");
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let m = nb(50.0, 0.25);
        let mut a = DemandStream::new(99);
        let mut b = DemandStream::new(99);
        let xs: Vec<u64> = (0..10_000).map(|_| a.next_draw(&m)).collect();
        let ys: Vec<u64> = (0..10_000).map(|_| b.next_draw(&m)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn sample_mean_law_of_large_numbers() {
        let m = nb(50.0, 0.25);
        let mut s = DemandStream::new(1);
        let n = 1_000_000;
        let total: u64 = (0..n).map(|_| s.next_draw(&m)).sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 50.0).abs() < 0.5, "sample mean {mean}");
    }

    #[test]
    fn inverse_cdf_frequencies() {
        let m = nb(20.0, 0.5);
        let n = 1_000_000usize;
        let mut s = DemandStream::new(3);
        let mut counts = vec![0usize; m.support_max() + 1];
        for _ in 0..n {
            counts[s.next_draw(&m) as usize] += 1;
        }
        let mut cum = 0usize;
        for (k, c) in counts.iter().enumerate() {
            cum += c;
            let f = m.pmf().cdf_int(k as i64).min(1.0);
            let emp = cum as f64 / n as f64;
            let band = 3.0 * (f * (1.0 - f) / n as f64).sqrt() + m.tail_epsilon();
            assert!((emp - f).abs() <= band + 1e-12, "k = {k}: {emp} vs {f}");
        }
    }

    #[test]
    fn convolution_is_associative_in_periods() {
        let m = nb(8.0, 0.7);
        let five = m.n_fold(5).unwrap();
        let two_three = m.n_fold(2).unwrap().convolve(&m.n_fold(3).unwrap());
        for k in 0..=five.max().max(two_three.max()) {
            assert!((five.pmf(k) - two_three.pmf(k)).abs() < 1e-11);
        }
        assert!(five.total_mass() >= 1.0 - 5.0 * m.tail_epsilon());
        assert!((five.mean() - 40.0).abs() < 1e-6);
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"family":"negative-binomial","mean":50,"cov":0.5}"#;
        let spec: DemandSpec = serde_json::from_str(json).unwrap();
        let m = spec.build().unwrap();
        assert_eq!(m.spec().build().unwrap(), m);
        let emp = DemandSpec {
            family: DemandFamily::Empirical,
            mean: None,
            cov: None,
            tail_epsilon: None,
            pmf: Some(vec![0.0, 0.5, 0.5]),
        };
        let m = emp.build().unwrap();
        assert_eq!(m.support_min(), 1);
        assert_eq!(m.spec().build().unwrap(), m);
    }
}
