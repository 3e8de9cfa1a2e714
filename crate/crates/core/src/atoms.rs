use serde::{Deserialize, Serialize};

pub const DEFAULT_MERGE_TOL: f64 = 1e-9;

/// Finite distribution: strictly positive masses on sorted, distinct values.
///
/// Values closer than `merge_tol` are merged into the lower of the two.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomDistribution {
    atoms: Vec<(f64, f64)>,
    merge_tol: f64,
}

impl AtomDistribution {
    pub fn point(value: f64) -> Self {
        AtomDistribution {
            atoms: vec![(value, 1.0)],
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }

    /// Builds from unsorted (value, mass) pairs, merging near-equal values and
    /// dropping nonpositive masses.
    pub fn from_atoms(atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self::with_tolerance(atoms, DEFAULT_MERGE_TOL)
    }

    pub fn with_tolerance(atoms: impl IntoIterator<Item = (f64, f64)>, merge_tol: f64) -> Self {
        let mut raw: Vec<(f64, f64)> = atoms
            .into_iter()
            .filter(|&(v, m)| m > 0.0 && v.is_finite())
            .collect();
        raw.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(raw.len());
        for (v, m) in raw {
            match merged.last_mut() {
                Some(last) if v - last.0 <= merge_tol => last.1 += m,
                _ => merged.push((v, m)),
            }
        }
        AtomDistribution {
            atoms: merged,
            merge_tol,
        }
    }

    /// Equal-weight empirical law of a sample.
    pub fn empirical(sample: &[f64]) -> Self {
        let w = 1.0 / sample.len() as f64;
        Self::from_atoms(sample.iter().map(|&v| (v, w)))
    }

    pub(crate) fn from_sorted_unchecked(atoms: Vec<(f64, f64)>) -> Self {
        AtomDistribution {
            atoms,
            merge_tol: DEFAULT_MERGE_TOL,
        }
    }

    pub fn atoms(&self) -> &[(f64, f64)] {
        &self.atoms
    }

    pub fn merge_tol(&self) -> f64 {
        self.merge_tol
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    pub fn mean(&self) -> f64 {
        self.atoms.iter().map(|&(v, m)| v * m).sum::<f64>() / self.total_mass()
    }

    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.atoms
            .iter()
            .map(|&(v, m)| m * (v - mu).powi(2))
            .sum::<f64>()
            / self.total_mass()
    }

    pub fn min(&self) -> f64 {
        self.atoms.first().map_or(f64::NAN, |a| a.0)
    }

    pub fn max(&self) -> f64 {
        self.atoms.last().map_or(f64::NAN, |a| a.0)
    }

    /// P(X <= x).
    pub fn cdf(&self, x: f64) -> f64 {
        self.atoms
            .iter()
            .take_while(|a| a.0 <= x)
            .map(|a| a.1)
            .sum()
    }

    /// Law of X + Y for independent X, Y.
    pub fn convolve(&self, other: &AtomDistribution) -> AtomDistribution {
        let tol = self.merge_tol.max(other.merge_tol);
        let pairs = self
            .atoms
            .iter()
            .flat_map(|&(a, p)| other.atoms.iter().map(move |&(b, q)| (a + b, p * q)));
        AtomDistribution::with_tolerance(pairs.collect::<Vec<_>>(), tol)
    }

    pub fn is_point_mass_at(&self, value: f64, tol: f64) -> bool {
        self.atoms.len() == 1 && (self.atoms[0].0 - value).abs() <= tol
    }
}
