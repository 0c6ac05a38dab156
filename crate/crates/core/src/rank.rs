//! Selectivity, normalized cost, rank and momentum smoothing.
//!
//! Ordering predicates by ascending `cost / (1 - selectivity)` minimizes the
//! expected per-row cost of a short-circuiting conjunction when predicates
//! are independent. [`expected_cost`] and [`brute_force_best`] give the
//! exhaustive check of that claim used by the tests.

use std::fmt;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::monitor::EpochStats;

/// Floor for `1 - s`, so a predicate that never cuts gets a huge, finite rank.
pub const CUT_FLOOR: f64 = 1e-6;

pub const DEFAULT_MOMENTUM: f64 = 0.3;

/// Largest n accepted by [`brute_force_best`].
pub const ORACLE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct RankVector(Vec<f64>);

impl RankVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config(format!(
                "rank {i} is {} (must be finite and non-negative)",
                values[i]
            )));
        }
        Ok(RankVector(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Evaluation order as a list of predicate ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        if !is_bijection(&order) {
            return Err(Error::InvalidPermutation(format!(
                "{order:?} is not a permutation of 0..{}",
                order.len()
            )));
        }
        Ok(Permutation(order))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// All n! orders, lexicographically.
    pub fn all(n: usize) -> impl Iterator<Item = Permutation> {
        (0..n).permutations(n).map(Permutation)
    }

    /// `"2-0-1"` style label.
    pub fn label(&self) -> String {
        self.0.iter().join("-")
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.0.iter().join(","))
    }
}

pub fn is_bijection(order: &[usize]) -> bool {
    let mut seen = vec![false; order.len()];
    for &id in order {
        match seen.get_mut(id) {
            Some(s) if !*s => *s = true,
            _ => return false,
        }
    }
    true
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentumConfig {
    momentum: f64,
}

impl MomentumConfig {
    pub fn new(momentum: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&momentum) {
            return Err(Error::Config(format!("momentum {momentum} is outside [0, 1]")));
        }
        Ok(MomentumConfig { momentum })
    }

    pub fn momentum(&self) -> f64 {
        self.momentum
    }
}

impl Default for MomentumConfig {
    fn default() -> Self {
        MomentumConfig {
            momentum: DEFAULT_MOMENTUM,
        }
    }
}

/// Fraction of monitored rows that satisfied each predicate.
pub fn compute_selectivities(stats: &EpochStats) -> Result<Vec<f64>> {
    if stats.monitored == 0 {
        return Err(Error::NoSamples);
    }
    let m = stats.monitored as f64;
    Ok(stats.num_cut.iter().map(|&cut| (m - cut as f64) / m).collect())
}

/// Average cost per predicate divided by the largest average. When every
/// average is zero (below clock resolution) all costs count as equal.
pub fn normalize_costs(stats: &EpochStats) -> Result<Vec<f64>> {
    if stats.monitored == 0 {
        return Err(Error::NoSamples);
    }
    let m = stats.monitored as f64;
    let avg: Vec<f64> = stats.cost_nanos.iter().map(|&c| c as f64 / m).collect();
    Ok(normalize_by_max(&avg))
}

pub fn normalize_by_max(avg: &[f64]) -> Vec<f64> {
    let max = avg.iter().copied().fold(0.0_f64, f64::max);
    if max > 0.0 {
        avg.iter().map(|a| a / max).collect()
    } else {
        vec![1.0; avg.len()]
    }
}

pub fn compute_ranks(normalized_costs: &[f64], selectivities: &[f64]) -> Result<RankVector> {
    if normalized_costs.len() != selectivities.len() {
        return Err(Error::LengthMismatch {
            expected: normalized_costs.len(),
            actual: selectivities.len(),
        });
    }
    RankVector::new(
        normalized_costs
            .iter()
            .zip(selectivities)
            .map(|(&nc, &s)| nc / (1.0 - s).max(CUT_FLOOR))
            .collect(),
    )
}

/// First-order smoothing: `(1 - m) * current + m * previous`. With no
/// previous value the current ranks are taken as they are.
pub fn update_adjusted_ranks(
    previous: Option<&RankVector>,
    current: &RankVector,
    momentum: MomentumConfig,
) -> Result<RankVector> {
    let Some(prev) = previous else {
        return Ok(current.clone());
    };
    if prev.len() != current.len() {
        return Err(Error::LengthMismatch {
            expected: prev.len(),
            actual: current.len(),
        });
    }
    let m = momentum.momentum();
    RankVector::new(
        current
            .values()
            .iter()
            .zip(prev.values())
            .map(|(&cur, &old)| (1.0 - m) * cur + m * old)
            .collect(),
    )
}

/// Ascending rank, ties broken by predicate id.
pub fn sort_permutation(ranks: &RankVector) -> Permutation {
    let mut order: Vec<usize> = (0..ranks.len()).collect();
    order.sort_by(|&a, &b| ranks.0[a].total_cmp(&ranks.0[b]).then(a.cmp(&b)));
    Permutation(order)
}

/// Expected per-row cost of evaluating `perm` with short-circuiting, assuming
/// independent predicates.
pub fn expected_cost(perm: &Permutation, avg_cost: &[f64], selectivities: &[f64]) -> f64 {
    let mut reach = 1.0;
    let mut total = 0.0;
    for &id in perm.order() {
        total += avg_cost[id] * reach;
        reach *= selectivities[id];
    }
    total
}

/// Exhaustive minimum of [`expected_cost`]; the lexicographically first
/// minimizer wins ties.
pub fn brute_force_best(avg_cost: &[f64], selectivities: &[f64]) -> Result<Permutation> {
    let n = avg_cost.len();
    if selectivities.len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: selectivities.len(),
        });
    }
    if n > ORACLE_LIMIT {
        return Err(Error::OracleTooLarge { n, limit: ORACLE_LIMIT });
    }
    let mut best: Option<(f64, Permutation)> = None;
    for perm in Permutation::all(n) {
        let cost = expected_cost(&perm, avg_cost, selectivities);
        if best.as_ref().is_none_or(|(b, _)| cost < *b) {
            best = Some((cost, perm));
        }
    }
    Ok(best.map(|(_, p)| p).unwrap_or_else(|| Permutation::identity(0)))
}
