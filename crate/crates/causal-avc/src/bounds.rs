//! Outer minimax searches over two-level power allocations.
//!
//! Three finite-n bounds are computed: the lower bound (jammer free to pick
//! the division point), the fixed-division upper bound evaluated through the
//! water-filling closed form, and the two-level-noise upper bound with its
//! pushable/unpushable suffix case split. Slack variants reuse the lower-bound
//! search with the τ/γ-adjusted inner budget.
//!
//! Grid layout: the transition ν and the prefix budget share s are both
//! gridded; s at `snr_grid_step` with one local refinement pass at a tenth of
//! the step. Cells whose inner problem is infeasible are skipped, not scored
//! +∞. Ties within 1e−9 resolve to the smallest ν, then the smallest s.

use serde::{Deserialize, Serialize};

use crate::model::{
    BlockConfig, BoundingMode, ChannelParams, ChunkedAllocation, NoiseAllocation, SolverConfig,
    TwoLevelAllocation, EPS_POS,
};
use crate::waterfill::{slack_budget, water_fill};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundKind {
    Lower,
    UpperBar,
    UpperTilde,
    TauSlack,
    GammaSlack,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NoiseWitness {
    PerCoordinate(NoiseAllocation),
    PerChunk(ChunkedAllocation),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundResult {
    /// Bound value in bits per channel use.
    pub value: f64,
    pub kind: BoundKind,
    pub witness_p: TwoLevelAllocation,
    pub witness_m: usize,
    pub witness_n: NoiseWitness,
    pub grid_step: f64,
}

/// Which slack family `compute_slack_bound` runs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SlackKind {
    Tau,
    Gamma { block: BlockConfig },
}

/// Threshold above which the oblivious-adversary reference is positive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObliviousThreshold {
    /// Positive when P > N.
    SignalAboveNoise,
    /// Positive when P ≥ 2N.
    SignalAboveTwiceNoise,
}

/// Water-filling objective for a two-level prefix: `c1` coordinates at `l1`
/// and `c2` at `l2`, jammer budget `budget` > 0. Returns Σ log2(P_t/N*_t).
fn two_level_wf_objective(l1: f64, c1: usize, l2: f64, c2: usize, budget: f64) -> f64 {
    let total = l1 * c1 as f64 + l2 * c2 as f64;
    if budget >= total {
        return 0.0;
    }
    let (a, ca, b, cb) = if l1 <= l2 { (l1, c1, l2, c2) } else { (l2, c2, l1, c1) };
    let m = (ca + cb) as f64;
    let alpha = budget / m;
    if alpha <= a || cb == 0 {
        ca as f64 * (a / alpha).log2() + cb as f64 * (b / alpha).log2()
    } else {
        // low caps bind, remaining budget spreads over the high group
        let alpha = (budget - a * ca as f64) / cb as f64;
        cb as f64 * (b / alpha).log2()
    }
}

/// Inner minimum over the division point for a two-level allocation, using
/// closed forms per m. Returns (m*, normalized value) or None when every m is
/// infeasible.
fn two_level_inner_min(
    pl: f64,
    ph: f64,
    nu: usize,
    units: usize,
    np: f64,
    nn: f64,
    mode: BoundingMode,
) -> Option<(usize, f64)> {
    let norm = 2.0 * units as f64;
    let mut best: Option<(usize, f64)> = None;
    for m in 1..=units {
        let prefix = if m <= nu {
            m as f64 * pl
        } else {
            nu as f64 * pl + (m - nu) as f64 * ph
        };
        let budget = slack_budget(mode, 0.5 * prefix, np, nn);
        if budget <= 0.0 {
            continue;
        }
        let objective = if m <= nu {
            two_level_wf_objective(pl, m, 0.0, 0, budget)
        } else {
            two_level_wf_objective(pl, nu, ph, m - nu, budget)
        };
        let value = objective / norm;
        if best.map_or(true, |(_, v)| value < v) {
            best = Some((m, value));
        }
        if value == 0.0 {
            break;
        }
    }
    best
}

#[derive(Debug, Clone, Copy)]
struct Cell {
    value: f64,
    nu: usize,
    s: f64,
    utilization: f64,
    m: usize,
}

const TIE_TOL: f64 = 1e-9;

fn replace_cell(best: &mut Option<Cell>, cand: Cell) {
    match best {
        None => *best = Some(cand),
        Some(b) => {
            if cand.value > b.value + TIE_TOL {
                *best = Some(cand);
            } else if (cand.value - b.value).abs() <= TIE_TOL
                && (cand.nu, cand.s) < (b.nu, b.s)
            {
                *best = Some(cand);
            }
        }
    }
}

fn grid_shares(step: f64) -> Vec<f64> {
    let count = (1.0 / step).floor() as usize;
    let mut shares: Vec<f64> = (1..=count).map(|i| (i as f64 * step).min(1.0)).collect();
    if shares.last().copied() != Some(1.0) {
        shares.push(1.0);
    }
    shares
}

/// Two-level levels for a transition ν and prefix share s of the utilized
/// budget; None when a level would not be strictly positive.
fn levels_for(nu: usize, s: f64, units: usize, total: f64) -> Option<(f64, f64)> {
    if nu == units {
        if s < 1.0 {
            return None;
        }
        return Some((total / units as f64, total / units as f64));
    }
    if s >= 1.0 {
        return None;
    }
    let pl = s * total / nu as f64;
    let ph = (1.0 - s) * total / (units - nu) as f64;
    (pl > EPS_POS && ph > EPS_POS).then_some((pl, ph))
}

/// Shared max-min search used by the lower bound and both slack variants.
fn search_two_level_max(
    units: usize,
    np: f64,
    nn: f64,
    mode: BoundingMode,
    cfg: &SolverConfig,
) -> Option<Cell> {
    let shares = grid_shares(cfg.snr_grid_step);
    let mut best: Option<Cell> = None;
    for &u in &cfg.utilization_levels {
        let total = u * np;
        for nu in 1..=units {
            for &s in &shares {
                let Some((pl, ph)) = levels_for(nu, s, units, total) else { continue };
                if let Some((m, value)) = two_level_inner_min(pl, ph, nu, units, np, nn, mode) {
                    replace_cell(&mut best, Cell { value, nu, s, utilization: u, m });
                }
            }
        }
    }
    // One refinement pass at a tenth of the step around the incumbent share.
    if let Some(b) = best {
        let fine = cfg.snr_grid_step / 10.0;
        let total = b.utilization * np;
        for i in -9i32..=9 {
            let s = b.s + i as f64 * fine;
            if !(0.0 < s && s <= 1.0) {
                continue;
            }
            let Some((pl, ph)) = levels_for(b.nu, s, units, total) else { continue };
            if let Some((m, value)) = two_level_inner_min(pl, ph, b.nu, units, np, nn, mode) {
                replace_cell(&mut best, Cell { value, nu: b.nu, s, utilization: b.utilization, m });
            }
        }
    }
    best
}

/// Full-length noise witness: water-filled prefix plus the leftover budget
/// spread over the suffix.
fn noise_witness_values(
    pl: f64,
    ph: f64,
    nu: usize,
    units: usize,
    np: f64,
    nn: f64,
    mode: BoundingMode,
    m: usize,
) -> Vec<f64> {
    let prefix: Vec<f64> = (0..m).map(|t| if t < nu { pl } else { ph }).collect();
    let budget = slack_budget(mode, 0.5 * prefix.iter().sum::<f64>(), np, nn);
    let sol = water_fill(&prefix, budget.min(nn)).expect("witness cell is feasible");
    let mut values = sol.noise_prefix;
    let used: f64 = values.iter().sum();
    if m < units {
        let rest = ((nn - used) / (units - m) as f64).max(2.0 * EPS_POS);
        values.extend(std::iter::repeat(rest).take(units - m));
    }
    values
}

fn max_search_result(
    kind: BoundKind,
    cell: Cell,
    units: usize,
    np: f64,
    nn: f64,
    mode: BoundingMode,
    cfg: &SolverConfig,
    chunked: bool,
) -> BoundResult {
    let total = cell.utilization * np;
    let (pl, ph) = levels_for(cell.nu, cell.s, units, total).expect("best cell is valid");
    let witness_p =
        TwoLevelAllocation { transition: cell.nu, low_level: pl, high_level: ph, budget: np };
    let values = noise_witness_values(pl, ph, cell.nu, units, np, nn, mode, cell.m);
    let witness_n = if chunked {
        NoiseWitness::PerChunk(ChunkedAllocation::new(values, nn).expect("witness within budget"))
    } else {
        NoiseWitness::PerCoordinate(
            NoiseAllocation::new(values, nn).expect("witness within budget"),
        )
    };
    BoundResult {
        value: cell.value,
        kind,
        witness_p,
        witness_m: cell.m,
        witness_n,
        grid_step: cfg.snr_grid_step,
    }
}

/// Lower bound: max over two-level allocations of the jammer's best response,
/// the jammer free to choose the division point.
pub fn compute_lower_bound(params: &ChannelParams, n: usize, cfg: &SolverConfig) -> BoundResult {
    let (np, nn) = (n as f64 * params.signal_power, n as f64 * params.noise_power);
    let cell = search_two_level_max(n, np, nn, BoundingMode::Reference, cfg)
        .expect("m = n at full budget is always feasible");
    max_search_result(BoundKind::Lower, cell, n, np, nn, BoundingMode::Reference, cfg, false)
}

/// Slack variants: τ shrinks the jammer's admissible budget (division point
/// still free); γ enlarges it on the chunked problem.
pub fn compute_slack_bound(
    params: &ChannelParams,
    n: usize,
    cfg: &SolverConfig,
    kind: SlackKind,
) -> BoundResult {
    let (np, nn) = (n as f64 * params.signal_power, n as f64 * params.noise_power);
    match kind {
        SlackKind::Tau => {
            let mode = BoundingMode::TauSlack(cfg.tau);
            let cell = search_two_level_max(n, np, nn, mode, cfg)
                .expect("m = n at full budget is always feasible");
            max_search_result(BoundKind::TauSlack, cell, n, np, nn, mode, cfg, false)
        }
        SlackKind::Gamma { block } => {
            assert_eq!(block.n, n, "block must describe the same n");
            let mode = BoundingMode::GammaSlack(cfg.gamma);
            let k = block.num_chunks;
            let cell = search_two_level_max(k, np, nn, mode, cfg)
                .expect("mu = K at full budget is always feasible");
            max_search_result(BoundKind::GammaSlack, cell, k, np, nn, mode, cfg, true)
        }
    }
}

/// Chunked signal optimizer: the per-chunk allocation Φ* the codec builds its
/// radii from, together with the γ-slack bound value.
pub fn solve_chunked_signal(
    params: &ChannelParams,
    k: usize,
    theta: usize,
    gamma: f64,
    cfg: &SolverConfig,
) -> (f64, ChunkedAllocation) {
    let n = k * theta;
    let block = BlockConfig::new(n, theta).expect("k·theta block");
    let mut cfg = cfg.clone();
    cfg.gamma = gamma;
    let result = compute_slack_bound(params, n, &cfg, SlackKind::Gamma { block });
    let np = n as f64 * params.signal_power;
    let mut values = vec![result.witness_p.low_level; k];
    for v in values.iter_mut().skip(result.witness_p.transition) {
        *v = result.witness_p.high_level;
    }
    let phi = ChunkedAllocation::new(values, np).expect("witness within budget");
    (result.value, phi)
}

/// Fixed-division upper bound through the closed form (ν/2n)·log2(2B/(B−G)).
///
/// A cell is scored only when the division at ν is enforceable: the jammer
/// must be able to place the prefix budget B−G under the caps with the
/// crossing no earlier than ν, and the suffix must stay pushable at the
/// jammer's per-coordinate budget (suffix level at most 2N). Without the
/// pushability requirement the forced division point is fictitious and the
/// cell value does not bound the channel.
pub fn compute_upper_bar(params: &ChannelParams, n: usize, cfg: &SolverConfig) -> BoundResult {
    let (np, nn) = (n as f64 * params.signal_power, n as f64 * params.noise_power);
    let g = 0.5 * np - nn;
    let tol = 1e-9 * (1.0 + np + nn);

    let evaluate = |nu: usize, s: f64| -> Option<(f64, f64)> {
        let b = 0.5 * s * np;
        let budget = b - g;
        if budget <= tol {
            return None;
        }
        // caps: the jammer must fit B−G under ν coordinates of level 2B/ν
        if budget > 2.0 * b + tol {
            return None;
        }
        let pl = 2.0 * b / nu as f64;
        if pl <= EPS_POS {
            return None;
        }
        // suffix pushable at the jammer's per-coordinate budget
        if nu < n && np - 2.0 * b > 2.0 * (n - nu) as f64 * params.noise_power + tol {
            return None;
        }
        // crossing no earlier than ν for the uniform water-filled prefix:
        // the residual margin is linear in t0, so the endpoints suffice
        let nl = (budget / nu as f64).min(pl);
        for t0 in [1, nu.saturating_sub(1).max(1)] {
            if t0 >= nu {
                break;
            }
            let margin = (np - t0 as f64 * pl) - (2.0 * nn - 2.0 * t0 as f64 * nl);
            if margin <= -tol {
                return None;
            }
        }
        let value = (nu as f64 / (2.0 * n as f64)) * (2.0 * b / budget).log2().max(0.0);
        Some((value, b))
    };

    let shares = grid_shares(cfg.snr_grid_step);
    let mut best: Option<Cell> = None;
    for nu in 1..=n {
        for &s in &shares {
            if (nu == n) != (s >= 1.0) {
                continue;
            }
            if let Some((value, _)) = evaluate(nu, s) {
                replace_cell(&mut best, Cell { value, nu, s, utilization: 1.0, m: nu });
            }
        }
    }
    if let Some(b) = best {
        let fine = cfg.snr_grid_step / 10.0;
        for i in -9i32..=9 {
            let s = b.s + i as f64 * fine;
            if !(0.0 < s && s <= 1.0) || (b.nu == n) != (s >= 1.0) {
                continue;
            }
            if let Some((value, _)) = evaluate(b.nu, s) {
                replace_cell(&mut best, Cell { value, nu: b.nu, s, utilization: 1.0, m: b.nu });
            }
        }
    }

    let cell = best.unwrap_or(Cell { value: 0.0, nu: n, s: 1.0, utilization: 1.0, m: n });
    let b = 0.5 * cell.s * np;
    let budget = (b - g).max(EPS_POS);
    let pl = 2.0 * b / cell.nu as f64;
    let ph = if cell.nu < n { (np - 2.0 * b) / (n - cell.nu) as f64 } else { pl };
    let nl = (budget / cell.nu as f64).min(pl);
    let mut noise = vec![nl.max(2.0 * EPS_POS); cell.nu];
    if cell.nu < n {
        let rest = ((nn - nl * cell.nu as f64) / (n - cell.nu) as f64).max(2.0 * EPS_POS);
        noise.extend(std::iter::repeat(rest).take(n - cell.nu));
    }
    BoundResult {
        value: cell.value,
        kind: BoundKind::UpperBar,
        witness_p: TwoLevelAllocation {
            transition: cell.nu,
            low_level: pl,
            high_level: ph.max(EPS_POS * 2.0),
            budget: np,
        },
        witness_m: cell.nu,
        witness_n: NoiseWitness::PerCoordinate(
            NoiseAllocation::new(noise, nn).expect("witness within budget"),
        ),
        grid_step: cfg.snr_grid_step,
    }
}

/// Inner infimum of the two-level-noise bound at division m: the jammer either
/// covers the suffix at half power (prefix-only objective) or leaves it
/// unpushable (both terms, water-filled across the capped groups).
fn tilde_inner_inf(
    pl: f64,
    ph: f64,
    m: usize,
    n: usize,
    nn: f64,
) -> Option<(f64, f64, f64)> {
    let mut best: Option<(f64, f64, f64)> = None;
    let norm = 2.0 * n as f64;
    if m == n {
        let nlo = pl.min(nn / n as f64);
        if nlo <= 0.0 {
            return None;
        }
        return Some(((m as f64 / norm) * (pl / nlo).log2().max(0.0), nlo, nlo));
    }
    let suffix = (n - m) as f64;
    // pushable suffix: N̄ = P̄/2, remainder to the prefix
    let rest = nn - suffix * ph / 2.0;
    if rest > 0.0 {
        let nlo = pl.min(rest / m as f64);
        let value = (m as f64 / norm) * (pl / nlo).log2().max(0.0);
        best = Some((value, nlo, ph / 2.0));
    }
    // unpushable suffix: water-fill with caps (P̲ on the prefix, P̄/2 on the
    // suffix); the suffix term keeps ratio P̄/N̄
    let cap_hi = ph / 2.0;
    let total_caps = m as f64 * pl + suffix * cap_hi;
    let budget = nn.min(total_caps);
    if budget > 0.0 {
        let (a, ca, na, b_cap, cb, nb) = if pl <= cap_hi {
            (pl, m as f64, pl, cap_hi, suffix, ph)
        } else {
            (cap_hi, suffix, ph, pl, m as f64, pl)
        };
        let alpha = budget / (ca + cb);
        let (lo_n, hi_n) = if alpha <= a {
            (alpha, alpha)
        } else {
            let alpha2 = ((budget - a * ca) / cb).min(b_cap);
            (a, alpha2)
        };
        let objective = ca * (na / lo_n).log2().max(0.0) + cb * (nb / hi_n).log2().max(0.0);
        let value = objective / norm;
        let (nlo, nhi) = if pl <= cap_hi { (lo_n, hi_n) } else { (hi_n, lo_n) };
        if best.map_or(true, |(v, _, _)| value < v) {
            best = Some((value, nlo, nhi));
        }
    }
    best
}

/// Two-level-noise upper bound: min over the division point of the best
/// two-level signal split against the jammer's best two-level response.
pub fn compute_upper_tilde(params: &ChannelParams, n: usize, cfg: &SolverConfig) -> BoundResult {
    let (np, nn) = (n as f64 * params.signal_power, n as f64 * params.noise_power);
    let shares = grid_shares(cfg.snr_grid_step);

    let mut overall: Option<(f64, usize, f64, f64, f64)> = None; // value, m, s, nlo, nhi
    for m in 1..=n {
        let mut sup: Option<(f64, f64, f64, f64)> = None; // value, s, nlo, nhi
        let evaluate = |s: f64| -> Option<(f64, f64, f64, f64)> {
            let (pl, ph) = levels_for(m, s, n, np)?;
            let (value, nlo, nhi) = tilde_inner_inf(pl, ph, m, n, nn)?;
            Some((value, s, nlo, nhi))
        };
        let merge = |sup: &mut Option<(f64, f64, f64, f64)>, cand: (f64, f64, f64, f64)| {
            if sup.map_or(true, |(v, bs, _, _)| {
                cand.0 > v + TIE_TOL || ((cand.0 - v).abs() <= TIE_TOL && cand.1 < bs)
            }) {
                *sup = Some(cand);
            }
        };
        for &s in &shares {
            if (m == n) != (s >= 1.0) {
                continue;
            }
            if let Some(cand) = evaluate(s) {
                merge(&mut sup, cand);
            }
        }
        // two refinement rounds keep the sup from undershooting the lower
        // bound's finer search at matching resolution
        for divisor in [10.0, 100.0] {
            if let Some((_, s0, _, _)) = sup {
                let fine = cfg.snr_grid_step / divisor;
                for i in -9i32..=9 {
                    let s = s0 + i as f64 * fine;
                    if (0.0 < s && s <= 1.0) && (m == n) == (s >= 1.0) {
                        if let Some(cand) = evaluate(s) {
                            merge(&mut sup, cand);
                        }
                    }
                }
            }
        }
        if let Some((value, s, nlo, nhi)) = sup {
            if overall.map_or(true, |(v, bm, ..)| value < v - TIE_TOL
                || ((value - v).abs() <= TIE_TOL && m < bm))
            {
                overall = Some((value, m, s, nlo, nhi));
            }
        }
    }

    let (value, m, s, nlo, nhi) = overall.expect("m = n cell always evaluates");
    let (pl, ph) = levels_for(m, s, n, np).expect("best cell valid");
    let mut noise = vec![nlo.max(2.0 * EPS_POS); m];
    noise.extend(std::iter::repeat(nhi.max(2.0 * EPS_POS)).take(n - m));
    BoundResult {
        value,
        kind: BoundKind::UpperTilde,
        witness_p: TwoLevelAllocation { transition: m, low_level: pl, high_level: ph, budget: np },
        witness_m: m,
        witness_n: NoiseWitness::PerCoordinate(
            NoiseAllocation::new(noise, nn).expect("witness within budget"),
        ),
        grid_step: cfg.snr_grid_step,
    }
}

/// Oblivious-adversary reference capacity ½·log2(1+P/N) above the configured
/// threshold, 0 otherwise.
pub fn reference_oblivious(params: &ChannelParams, threshold: ObliviousThreshold) -> f64 {
    let positive = match threshold {
        ObliviousThreshold::SignalAboveNoise => params.signal_power > params.noise_power,
        ObliviousThreshold::SignalAboveTwiceNoise => {
            params.signal_power >= 2.0 * params.noise_power
        }
    };
    if positive {
        0.5 * (1.0 + params.signal_power / params.noise_power).log2()
    } else {
        0.0
    }
}
