use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sorted distinct attainable p-values of a discrete test; always ends at 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueLattice {
    values: Vec<f64>,
}

impl PValueLattice {
    /// Builds a lattice from candidate values; 1 is added if absent.
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if let Some(v) = values.iter().find(|v| !(**v > 0.0 && **v <= 1.0)) {
            return Err(Error::invalid(format!("lattice value {v} outside (0, 1]")));
        }
        values.push(1.0);
        values.sort_by(f64::total_cmp);
        values.dedup();
        Ok(PValueLattice { values })
    }

    /// `{k / count : k = 1..=count}`, the lattice of a permutation p-value over
    /// `count` resamples.
    pub fn uniform(count: usize) -> Self {
        let count = count.max(1);
        PValueLattice {
            values: (1..=count).map(|k| k as f64 / count as f64).collect(),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn contains(&self, s: f64) -> bool {
        self.values.binary_search_by(|v| v.total_cmp(&s)).is_ok()
    }

    pub fn union(&self, other: &PValueLattice) -> PValueLattice {
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        values.sort_by(f64::total_cmp);
        values.dedup();
        PValueLattice { values }
    }

    pub fn with_values(&self, extra: &[f64]) -> Result<PValueLattice> {
        Ok(self.union(&PValueLattice::new(extra.to_vec())?))
    }

    /// Largest lattice value `s` with `accept(s)`, given that `accept` is
    /// monotone (true up to some point, false afterwards). Zero when no value
    /// qualifies.
    pub fn largest_where(&self, accept: impl Fn(f64) -> bool) -> f64 {
        let k = self.values.partition_point(|&s| accept(s));
        if k == 0 {
            0.0
        } else {
            self.values[k - 1]
        }
    }

    /// Adjacent lattice values `(lo, hi)` with `lo <= x < hi`; `lo` is 0 below
    /// the minimum and `hi` is `None` at or above 1.
    pub fn bracket(&self, x: f64) -> (f64, Option<f64>) {
        let k = self.values.partition_point(|&s| s <= x);
        let lo = if k == 0 { 0.0 } else { self.values[k - 1] };
        (lo, self.values.get(k).copied())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn construction_sorts_and_caps() {
        let l = PValueLattice::new(vec![0.5, 0.25, 0.5]).unwrap();
        assert_eq!(l.values(), &[0.25, 0.5, 1.0]);
        assert!(PValueLattice::new(vec![0.0]).is_err());
        assert!(PValueLattice::new(vec![1.5]).is_err());
    }

    #[test]
    fn largest_where_and_bracket() {
        let l = PValueLattice::new(vec![1.0 / 3.0, 2.0 / 3.0]).unwrap();
        assert_eq!(l.largest_where(|s| s <= 0.05), 0.0);
        assert_eq!(l.largest_where(|s| s <= 0.4), 1.0 / 3.0);
        assert_eq!(l.largest_where(|_| true), 1.0);
        assert_eq!(l.bracket(0.5), (1.0 / 3.0, Some(2.0 / 3.0)));
        assert_eq!(l.bracket(0.1), (0.0, Some(1.0 / 3.0)));
        assert_eq!(l.bracket(1.0), (1.0, None));
    }

    #[test]
    fn uniform_lattice() {
        let l = PValueLattice::uniform(4);
        assert_eq!(l.values(), &[0.25, 0.5, 0.75, 1.0]);
    }
}
