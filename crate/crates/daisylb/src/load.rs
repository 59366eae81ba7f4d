//! Load values, thresholds and the three-way LOW/MEDIUM/HIGH classification.
//!
//! Loads are abstract non-negative integers. A node is HIGH when its load is
//! strictly above the upper threshold (`medium_max`), LOW when at or below
//! `low_max`, MEDIUM otherwise. A load of exactly `medium_max` is MEDIUM, so
//! a fully topped-up node is a stable, non-transferring state. Clusters are
//! classified the same way against thresholds scaled by cluster size.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Sub, SubAssign};

/// An abstract amount of load, in integer units. Never negative, never
/// fractional; every transfer in the system moves a whole number of units.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct Load(pub u64);

impl Load {
    pub const ZERO: Load = Load(0);

    pub fn units(self) -> u64 {
        self.0
    }

    /// Load above `limit`, or zero if at or below it.
    pub fn excess_over(self, limit: Load) -> Load {
        Load(self.0.saturating_sub(limit.0))
    }

    /// Room left below `limit`, or zero if at or above it.
    pub fn spare_below(self, limit: Load) -> Load {
        Load(limit.0.saturating_sub(self.0))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn min(self, other: Load) -> Load {
        Load(self.0.min(other.0))
    }
}

impl fmt::Display for Load {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add for Load {
    type Output = Load;
    fn add(self, rhs: Load) -> Load {
        Load(self.0 + rhs.0)
    }
}

impl AddAssign for Load {
    fn add_assign(&mut self, rhs: Load) {
        self.0 += rhs.0;
    }
}

impl Sub for Load {
    type Output = Load;
    fn sub(self, rhs: Load) -> Load {
        Load(
            self.0
                .checked_sub(rhs.0)
                .expect("load subtraction went negative"),
        )
    }
}

impl SubAssign for Load {
    fn sub_assign(&mut self, rhs: Load) {
        *self = *self - rhs;
    }
}

impl Sum for Load {
    fn sum<I: Iterator<Item = Load>>(iter: I) -> Load {
        Load(iter.map(|l| l.0).sum())
    }
}

impl From<u64> for Load {
    fn from(v: u64) -> Load {
        Load(v)
    }
}

/// The two load boundaries: at or below `low_max` is LOW, above `medium_max`
/// is HIGH, in between is MEDIUM. `medium_max` is the upper threshold a
/// recipient may be filled up to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub low_max: Load,
    pub medium_max: Load,
}

impl Thresholds {
    /// Builds thresholds, enforcing `0 < low_max < medium_max`.
    pub fn new(low_max: u64, medium_max: u64) -> Result<Thresholds, ThresholdError> {
        if low_max == 0 || low_max >= medium_max {
            return Err(ThresholdError {
                low_max,
                medium_max,
            });
        }
        Ok(Thresholds {
            low_max: Load(low_max),
            medium_max: Load(medium_max),
        })
    }

    /// Capacity of a cluster with `size` member nodes (coordinator's own node
    /// process included): `medium_max * size`.
    pub fn cluster_capacity(&self, size: usize) -> ClusterCapacity {
        ClusterCapacity {
            cluster_medium_max: Load(self.medium_max.0 * size as u64),
            cluster_low_max: Load(self.low_max.0 * size as u64),
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
#[error("invalid thresholds: require 0 < low_max < medium_max, got low_max={low_max} medium_max={medium_max}")]
pub struct ThresholdError {
    pub low_max: u64,
    pub medium_max: u64,
}

/// Node and cluster thresholds scaled to a cluster of a given size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClusterCapacity {
    /// `medium_max * cluster_size`; a cluster above this is HIGH and must shed load.
    pub cluster_medium_max: Load,
    /// `low_max * cluster_size`; a cluster at or below this is LOW.
    pub cluster_low_max: Load,
}

/// The three-way classification. Ordered so that `Low < Medium < High`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LoadClass {
    Low,
    Medium,
    High,
}

/// Classifies one node's load: LOW if `load <= low_max`, HIGH if
/// `load > medium_max`, MEDIUM otherwise.
pub fn classify_node_load(load: Load, t: &Thresholds) -> LoadClass {
    if load > t.medium_max {
        LoadClass::High
    } else if load <= t.low_max {
        LoadClass::Low
    } else {
        LoadClass::Medium
    }
}

/// Classifies a whole cluster by its total load against size-scaled thresholds.
pub fn classify_cluster_load(total: Load, cap: &ClusterCapacity) -> LoadClass {
    if total > cap.cluster_medium_max {
        LoadClass::High
    } else if total <= cap.cluster_low_max {
        LoadClass::Low
    } else {
        LoadClass::Medium
    }
}

/// Sums a slice of loads. Empty slices sum to zero.
pub fn cluster_total(loads: &[Load]) -> Load {
    loads.iter().copied().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t_5_10() -> Thresholds {
        Thresholds::new(5, 10).unwrap()
    }

    #[test]
    fn node_classification_matches_worked_intervals() {
        let t = t_5_10();
        assert_eq!(classify_node_load(Load(15), &t), LoadClass::High);
        assert_eq!(classify_node_load(Load(10), &t), LoadClass::Medium);
        assert_eq!(classify_node_load(Load(0), &t), LoadClass::Low);
    }

    #[test]
    fn boundaries_are_inclusive_below_exclusive_above() {
        let t = t_5_10();
        assert_eq!(classify_node_load(Load(5), &t), LoadClass::Low);
        assert_eq!(classify_node_load(Load(6), &t), LoadClass::Medium);
        assert_eq!(classify_node_load(Load(10), &t), LoadClass::Medium);
        assert_eq!(classify_node_load(Load(11), &t), LoadClass::High);
    }

    #[test]
    fn cluster_classification() {
        let t = t_5_10();
        let cap = t.cluster_capacity(6);
        assert_eq!(cap.cluster_medium_max, Load(60));
        assert_eq!(classify_cluster_load(Load(68), &cap), LoadClass::High);
        assert_eq!(classify_cluster_load(Load(60), &cap), LoadClass::Medium);
        assert_eq!(classify_cluster_load(Load(0), &cap), LoadClass::Low);
    }

    #[test]
    fn totals() {
        assert_eq!(cluster_total(&[Load(15), Load(7), Load(10)]), Load(32));
        assert_eq!(cluster_total(&[]), Load(0));
        assert_eq!(cluster_total(&[Load(10); 6]), Load(60));
    }

    #[test]
    fn classification_partitions_and_is_monotone() {
        let t = t_5_10();
        let mut prev = LoadClass::Low;
        for v in 0..=30 {
            let c = classify_node_load(Load(v), &t);
            // exactly one class per value is guaranteed by the type; check order
            assert!(c >= prev, "classification must be monotone in load");
            prev = c;
        }
    }

    #[test]
    fn invalid_thresholds_rejected() {
        assert!(Thresholds::new(0, 10).is_err());
        assert!(Thresholds::new(10, 10).is_err());
        assert!(Thresholds::new(12, 10).is_err());
    }
}
