//! Shared domain types: channel constraints, block structure, and the power
//! sequences the minimax searches range over.
//!
//! Conventions used throughout the crate: all logarithms are base 2 and bound
//! values are bits per channel use. Allocations are strictly positive and
//! budget-checked at construction; downstream solvers may assume validity.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Positivity floor for allocation coordinates.
pub const EPS_POS: f64 = 1e-12;

/// Relative tolerance for budget checks, absorbing float accumulation.
pub const BUDGET_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("coordinate {index} is {value}; allocations must exceed {floor}")]
    NonPositive { index: usize, value: f64, floor: f64 },
    #[error("allocation sums to {sum} but the budget is {budget}")]
    BudgetExceeded { sum: f64, budget: f64 },
    #[error("transition point {transition} outside 1..={n}")]
    BadTransition { transition: usize, n: usize },
    #[error("division point {m} outside 1..={len}")]
    DivisionOutOfRange { m: usize, len: usize },
    #[error("noise exceeds signal at coordinate {index}; objective rejected")]
    NoiseAboveSignal { index: usize },
    #[error("chunk length {theta} does not divide block length {n}")]
    BlockMismatch { n: usize, theta: usize },
    #[error("parameter {name} must be positive, got {value}")]
    NonPositiveParam { name: &'static str, value: f64 },
    #[error("slack {name} must lie in [0,1), got {value}")]
    SlackOutOfRange { name: &'static str, value: f64 },
}

/// Per-coordinate power constraints: the transmitter spends at most `n·P`
/// energy per block, the jammer at most `n·N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    pub signal_power: f64,
    pub noise_power: f64,
}

impl ChannelParams {
    pub fn new(signal_power: f64, noise_power: f64) -> Result<Self, ModelError> {
        if !(signal_power > 0.0) {
            return Err(ModelError::NonPositiveParam { name: "signal_power", value: signal_power });
        }
        if !(noise_power > 0.0) {
            return Err(ModelError::NonPositiveParam { name: "noise_power", value: noise_power });
        }
        Ok(Self { signal_power, noise_power })
    }

    /// Unit signal power with the given noise-to-signal ratio.
    pub fn from_ratio(n_over_p: f64) -> Result<Self, ModelError> {
        Self::new(1.0, n_over_p)
    }

    /// True when P ≤ 2N: the jammer can afford to push any codeword pair
    /// toward its midpoint over the whole block.
    pub fn plotkin_regime(&self) -> bool {
        self.signal_power <= 2.0 * self.noise_power
    }
}

/// Block length `n` split into `num_chunks` chunks of `theta` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub n: usize,
    pub theta: usize,
    pub num_chunks: usize,
}

impl BlockConfig {
    pub fn new(n: usize, theta: usize) -> Result<Self, ModelError> {
        if n == 0 || theta == 0 || n % theta != 0 {
            return Err(ModelError::BlockMismatch { n, theta });
        }
        Ok(Self { n, theta, num_chunks: n / theta })
    }

    /// Chunk length closest to √n among the divisors of n.
    pub fn with_default_theta(n: usize) -> Result<Self, ModelError> {
        if n == 0 {
            return Err(ModelError::BlockMismatch { n, theta: 0 });
        }
        let target = (n as f64).sqrt();
        let theta = (1..=n)
            .filter(|t| n % t == 0)
            .min_by(|a, b| {
                let da = (*a as f64 - target).abs();
                let db = (*b as f64 - target).abs();
                da.partial_cmp(&db).unwrap()
            })
            .unwrap();
        Self::new(n, theta)
    }
}

fn validate_values(values: &[f64], budget: f64) -> Result<(), ModelError> {
    let mut sum = 0.0;
    for (index, &value) in values.iter().enumerate() {
        if !(value > EPS_POS) {
            return Err(ModelError::NonPositive { index, value, floor: EPS_POS });
        }
        sum += value;
    }
    if sum > budget * (1.0 + BUDGET_REL_TOL) {
        return Err(ModelError::BudgetExceeded { sum, budget });
    }
    Ok(())
}

macro_rules! allocation_type {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        pub struct $name {
            values: Vec<f64>,
            budget: f64,
        }

        impl $name {
            pub fn new(values: Vec<f64>, budget: f64) -> Result<Self, ModelError> {
                validate_values(&values, budget)?;
                Ok(Self { values, budget })
            }

            pub fn values(&self) -> &[f64] {
                &self.values
            }

            pub fn budget(&self) -> f64 {
                self.budget
            }

            pub fn len(&self) -> usize {
                self.values.len()
            }

            pub fn is_empty(&self) -> bool {
                self.values.is_empty()
            }

            /// Sum of the first `m` coordinates.
            pub fn prefix_sum(&self, m: usize) -> f64 {
                self.values[..m].iter().sum()
            }
        }
    };
}

allocation_type! {
    /// Per-coordinate transmit powers P_t with total budget n·P.
    PowerAllocation
}

allocation_type! {
    /// Per-coordinate jammer powers N_t with total budget n·N.
    NoiseAllocation
}

allocation_type! {
    /// Per-chunk powers (Φ_T or Ψ_T) with the block-level budget.
    ChunkedAllocation
}

/// Constant `low_level` on coordinates 1..ν, `high_level` on ν+1..n.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelAllocation {
    pub transition: usize,
    pub low_level: f64,
    pub high_level: f64,
    pub budget: f64,
}

/// Expand a two-level description into an explicit length-n allocation.
pub fn expand_two_level(alloc: &TwoLevelAllocation, n: usize) -> Result<PowerAllocation, ModelError> {
    if alloc.transition == 0 || alloc.transition > n {
        return Err(ModelError::BadTransition { transition: alloc.transition, n });
    }
    let mut values = vec![alloc.low_level; n];
    for v in values.iter_mut().skip(alloc.transition) {
        *v = alloc.high_level;
    }
    PowerAllocation::new(values, alloc.budget)
}

/// Recover (ν, low, high) from an explicit sequence with at most one level
/// change. Returns None if the sequence is not two-level. A constant sequence
/// detects as ν = n.
pub fn detect_two_level(values: &[f64]) -> Option<(usize, f64, f64)> {
    let n = values.len();
    if n == 0 {
        return None;
    }
    let low = values[0];
    let transition = values.iter().take_while(|&&v| v == low).count();
    if transition == n {
        return Some((n, low, low));
    }
    let high = values[transition];
    if values[transition..].iter().all(|&v| v == high) {
        Some((transition, low, high))
    } else {
        None
    }
}

/// Variant of the energy-bounding inequality being tested.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BoundingMode {
    Reference,
    /// Jammer residual scaled by (1−τ).
    TauSlack(f64),
    /// Transmitter budget scaled to (1−γ)·nP.
    GammaSlack(f64),
}

impl BoundingMode {
    pub fn tau(&self) -> f64 {
        match self {
            BoundingMode::TauSlack(t) => *t,
            _ => 0.0,
        }
    }

    pub fn gamma(&self) -> f64 {
        match self {
            BoundingMode::GammaSlack(g) => *g,
            _ => 0.0,
        }
    }
}

/// Objective of the babble-push optimization: (1/2n)·Σ_{t≤m} log2(P_t/N_t).
///
/// `n` is taken from the allocation length, so the same routine serves the
/// chunked problem with per-chunk values and 1/(2K) normalization.
pub fn evaluate_objective(
    p: &PowerAllocation,
    q: &NoiseAllocation,
    m: usize,
) -> Result<f64, ModelError> {
    let n = p.len();
    if m == 0 || m > n || m > q.len() {
        return Err(ModelError::DivisionOutOfRange { m, len: n.min(q.len()) });
    }
    let mut sum = 0.0;
    for t in 0..m {
        let (pt, nt) = (p.values()[t], q.values()[t]);
        if nt > pt * (1.0 + BUDGET_REL_TOL) {
            return Err(ModelError::NoiseAboveSignal { index: t });
        }
        sum += (pt / nt).log2().max(0.0);
    }
    Ok(sum / (2.0 * n as f64))
}

/// Energy-bounding predicate at division point `m`: the transmitter's residual
/// energy is at most twice the jammer's residual, with the slack variant's
/// scaling applied.
pub fn check_energy_bounding(
    p: &PowerAllocation,
    q: &NoiseAllocation,
    m: usize,
    mode: BoundingMode,
) -> bool {
    let lhs = (1.0 - mode.gamma()) * p.budget() - p.prefix_sum(m);
    let rhs = (1.0 - mode.tau()) * (2.0 * q.budget() - 2.0 * q.prefix_sum(m));
    let tol = BUDGET_REL_TOL * (1.0 + p.budget().abs() + q.budget().abs());
    lhs <= rhs + tol
}

/// Knobs for the outer grid searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub tau: f64,
    pub gamma: f64,
    /// Grid resolution on the prefix power-share search.
    pub snr_grid_step: f64,
    /// Verify the first-crossing constraints on the water-filled minimizer and
    /// surface violations instead of silently relaxing them.
    pub strict_first_crossing: bool,
    /// Budget utilization levels swept by the lower-bound search; full budget
    /// only by default.
    pub utilization_levels: Vec<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 0.0,
            gamma: 0.0,
            snr_grid_step: 0.005,
            strict_first_crossing: false,
            utilization_levels: vec![1.0],
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.snr_grid_step > 0.0) {
            return Err(ModelError::NonPositiveParam {
                name: "snr_grid_step",
                value: self.snr_grid_step,
            });
        }
        if !(0.0..1.0).contains(&self.tau) {
            return Err(ModelError::SlackOutOfRange { name: "tau", value: self.tau });
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(ModelError::SlackOutOfRange { name: "gamma", value: self.gamma });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn power(values: &[f64], budget: f64) -> PowerAllocation {
        PowerAllocation::new(values.to_vec(), budget).unwrap()
    }

    fn noise(values: &[f64], budget: f64) -> NoiseAllocation {
        NoiseAllocation::new(values.to_vec(), budget).unwrap()
    }

    #[test]
    fn expand_two_level_basic() {
        let alloc = TwoLevelAllocation { transition: 2, low_level: 1.0, high_level: 3.0, budget: 8.0 };
        assert_eq!(expand_two_level(&alloc, 4).unwrap().values(), &[1.0, 1.0, 3.0, 3.0]);
    }

    #[test]
    fn expand_two_level_degenerate_transition() {
        let alloc = TwoLevelAllocation { transition: 3, low_level: 2.0, high_level: 9.0, budget: 6.0 };
        assert_eq!(expand_two_level(&alloc, 3).unwrap().values(), &[2.0, 2.0, 2.0]);
    }

    #[test]
    fn expand_two_level_front_spike() {
        let alloc = TwoLevelAllocation { transition: 1, low_level: 5.0, high_level: 1.0, budget: 7.0 };
        assert_eq!(expand_two_level(&alloc, 3).unwrap().values(), &[5.0, 1.0, 1.0]);
    }

    #[test]
    fn expand_rejects_budget_violation() {
        let alloc = TwoLevelAllocation { transition: 1, low_level: 5.0, high_level: 2.0, budget: 7.0 };
        assert!(matches!(expand_two_level(&alloc, 3), Err(ModelError::BudgetExceeded { .. })));
    }

    #[test]
    fn detect_round_trips_expand() {
        let alloc = TwoLevelAllocation { transition: 2, low_level: 0.5, high_level: 2.0, budget: 9.0 };
        let expanded = expand_two_level(&alloc, 5).unwrap();
        assert_eq!(detect_two_level(expanded.values()), Some((2, 0.5, 2.0)));
    }

    #[test]
    fn objective_zero_when_matched() {
        let p = power(&[2.0, 2.0], 4.0);
        let q = noise(&[2.0, 2.0], 4.0);
        assert_eq!(evaluate_objective(&p, &q, 2).unwrap(), 0.0);
    }

    #[test]
    fn objective_single_term() {
        let p = power(&[4.0, 4.0], 8.0);
        let q = noise(&[2.0, 2.0], 4.0);
        assert_abs_diff_eq!(evaluate_objective(&p, &q, 1).unwrap(), 0.25);
    }

    #[test]
    fn objective_direct_formula() {
        let p = power(&[3.0, 3.0], 6.0);
        let q = noise(&[0.5, 1.0], 2.0);
        let expect = (6.0f64.log2() + 3.0f64.log2()) / 4.0;
        assert_abs_diff_eq!(evaluate_objective(&p, &q, 2).unwrap(), expect, epsilon = 1e-12);
        assert_abs_diff_eq!(expect, 1.0424, epsilon = 1e-4);
    }

    #[test]
    fn objective_rejects_noise_above_signal() {
        let p = power(&[1.0, 1.0], 2.0);
        let q = noise(&[2.0, 0.5], 2.5);
        assert!(matches!(evaluate_objective(&p, &q, 1), Err(ModelError::NoiseAboveSignal { index: 0 })));
    }

    #[test]
    fn energy_bounding_full_budgets_at_n() {
        let p = power(&[3.0, 3.0], 6.0);
        let q = noise(&[1.0, 1.0], 2.0);
        assert!(check_energy_bounding(&p, &q, 2, BoundingMode::Reference));
    }

    #[test]
    fn energy_bounding_boundary_arithmetic() {
        // n=2, P=3, N=1: residuals at m=1 are 3 and 2(2-N_1).
        let p = power(&[3.0, 3.0], 6.0);
        assert!(!check_energy_bounding(&p, &noise(&[1.0, 1.0], 2.0), 1, BoundingMode::Reference));
        assert!(check_energy_bounding(&p, &noise(&[0.1, 1.0], 2.0), 1, BoundingMode::Reference));
        assert!(!check_energy_bounding(&p, &noise(&[1.9, 0.1], 2.0), 1, BoundingMode::Reference));
    }

    #[test]
    fn slack_modes_at_zero_match_reference() {
        let p = power(&[3.0, 2.0, 1.0], 6.0);
        let q = noise(&[0.4, 0.9, 0.7], 2.0);
        for m in 1..=3 {
            let reference = check_energy_bounding(&p, &q, m, BoundingMode::Reference);
            assert_eq!(check_energy_bounding(&p, &q, m, BoundingMode::TauSlack(0.0)), reference);
            assert_eq!(check_energy_bounding(&p, &q, m, BoundingMode::GammaSlack(0.0)), reference);
        }
    }

    #[test]
    fn rejects_zero_coordinate() {
        assert!(matches!(
            PowerAllocation::new(vec![1.0, 0.0], 2.0),
            Err(ModelError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn default_theta_near_sqrt() {
        let block = BlockConfig::with_default_theta(64).unwrap();
        assert_eq!(block.theta, 8);
        assert_eq!(block.num_chunks, 8);
        let block = BlockConfig::with_default_theta(50).unwrap();
        assert_eq!(block.theta * block.num_chunks, 50);
    }
}
