//! Scaled babble-and-push jamming against a concrete finite codebook: scale
//! down and blur a prefix of the transmission, infer the message from the
//! corrupted prefix, then push the suffix toward a decoy codeword's midpoint.

use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::codec::Codebook;
use crate::model::{BoundingMode, ChannelParams, NoiseAllocation, PowerAllocation};
use crate::waterfill::inner_min;

/// Default cap on |messages|·|prefix codewords| in the exact posterior.
pub const POSTERIOR_TERM_CAP: u128 = 1_000_000;

/// Floor for the babble variance in likelihood evaluation; keeps the Gaussian
/// density finite when a coordinate is purely scaled.
const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("posterior enumeration needs {required} likelihood terms, above the cap {cap}")]
    PosteriorTooLarge { required: u128, cap: u128 },
}

/// Precomputed attack parameters for one codebook.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackPlan {
    /// Division point m* in [1, n]; babble before, push after.
    pub m_star: usize,
    /// Jammer's target prefix noise powers N*_1..N*_{m*}.
    pub noise_alloc: NoiseAllocation,
    /// Babble variances Ñ_t^ε = N*_t(1 − N*_t/P_t)/(1+ε).
    pub babble_variances: Vec<f64>,
    /// Scaling factors N*_t/P_t in [0, 1].
    pub scales: Vec<f64>,
    pub epsilon: f64,
    pub tau: f64,
    /// Cap on |messages|·|prefix codewords| in the exact posterior.
    pub posterior_term_cap: u128,
}

/// One attack execution: the emitted noise plus bookkeeping for analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    /// Jammer's noise s_1..s_n.
    pub noise: Vec<f64>,
    /// True when ‖s‖² exceeded the budget and the state must be discarded.
    pub aborted: bool,
    /// Decoy message U sampled from the prefix posterior.
    pub fake_message: usize,
    /// Decoy suffix x̄_{m*+1}..x̄_n the push aimed at.
    pub push_target: Vec<f64>,
    /// The codeword actually transmitted.
    pub transmitted: Vec<f64>,
}

impl AttackOutcome {
    /// Channel output y = x + s.
    pub fn received(&self) -> Vec<f64> {
        self.transmitted.iter().zip(&self.noise).map(|(x, s)| x + s).collect()
    }
}

/// Derive (m*, N*) from the code's average powers under the slack-τ budget,
/// then fill in the babble variances. Returns None when every division point
/// leaves the jammer a nonpositive budget (the no-attack signal).
pub fn plan_attack(
    code_avg_powers: &PowerAllocation,
    params: &ChannelParams,
    tau: f64,
    epsilon: f64,
) -> Option<AttackPlan> {
    assert!(epsilon > 0.0, "epsilon must be positive");
    assert!((0.0..1.0).contains(&tau), "tau must lie in [0, 1)");
    let mode = if tau == 0.0 { BoundingMode::Reference } else { BoundingMode::TauSlack(tau) };
    let inner = inner_min(code_avg_powers, params, mode, false);
    let sol = inner.feasible()?;
    let m_star = sol.m_star;
    let prefix = &sol.solution.noise_prefix;
    let scales: Vec<f64> = prefix
        .iter()
        .zip(code_avg_powers.values())
        .map(|(nv, pv)| (nv / pv).min(1.0))
        .collect();
    let babble_variances: Vec<f64> = prefix
        .iter()
        .zip(&scales)
        .map(|(nv, sc)| (nv * (1.0 - sc) / (1.0 + epsilon)).max(0.0))
        .collect();
    let nn = code_avg_powers.len() as f64 * params.noise_power;
    let noise_alloc =
        NoiseAllocation::new(prefix.clone(), nn).expect("water-filled prefix is a valid allocation");
    Some(AttackPlan {
        m_star,
        noise_alloc,
        babble_variances,
        scales,
        epsilon,
        tau,
        posterior_term_cap: POSTERIOR_TERM_CAP,
    })
}

/// First-stage noise at coordinate t (1-based): Z_t − (N*_t/P_t)·x_t.
pub fn babble_step(plan: &AttackPlan, x_t: f64, t: usize, rng: &mut ChaCha20Rng) -> f64 {
    assert!(t >= 1 && t <= plan.m_star, "babble stage covers t = 1..m*");
    let var = plan.babble_variances[t - 1];
    let z = if var > 0.0 {
        var.sqrt() * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    z - plan.scales[t - 1] * x_t
}

/// Second-stage noise: half the gap to the decoy coordinate.
pub fn push_step(x_t: f64, x_bar_t: f64) -> f64 {
    (x_bar_t - x_t) / 2.0
}

/// Log of the unnormalized posterior weight of each message given the babbled
/// prefix. Factorizes over chunks because entries are picked independently.
fn posterior_log_weights(codebook: &Codebook, y_prefix: &[f64], plan: &AttackPlan) -> Vec<f64> {
    let theta = codebook.block.theta;
    let m = plan.m_star;
    debug_assert_eq!(y_prefix.len(), m);
    let chunks_touched = (m + theta - 1) / theta;
    let ln_entries = (codebook.entries_per_chunk() as f64).ln();
    (0..codebook.num_messages)
        .map(|w| {
            let mut log_p = 0.0;
            for chunk in 0..chunks_touched {
                let t_lo = chunk * theta;
                let t_hi = ((chunk + 1) * theta).min(m);
                let mut entry_logs = Vec::with_capacity(codebook.entries_per_chunk());
                for e in 0..codebook.entries_per_chunk() {
                    let xs = codebook.chunk_entry(w, chunk, e);
                    let mut ll = 0.0;
                    for t in t_lo..t_hi {
                        let var = plan.babble_variances[t].max(VARIANCE_FLOOR);
                        let mean = (1.0 - plan.scales[t]) * xs[t - t_lo];
                        let d = y_prefix[t] - mean;
                        ll += -0.5 * (d * d / var + var.ln());
                    }
                    entry_logs.push(ll);
                }
                let peak = entry_logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let sum: f64 = entry_logs.iter().map(|l| (l - peak).exp()).sum();
                log_p += peak + sum.ln() - ln_entries;
            }
            log_p
        })
        .collect()
}

/// Sample the decoy message U from the exact posterior over messages given the
/// corrupted prefix, under the uniform prior.
pub fn posterior_sample_message(
    codebook: &Codebook,
    y_prefix: &[f64],
    plan: &AttackPlan,
    rng: &mut ChaCha20Rng,
) -> Result<usize, AttackError> {
    let theta = codebook.block.theta;
    let chunks_touched = (plan.m_star + theta - 1) / theta;
    let prefix_codewords =
        (codebook.entries_per_chunk() as u128).saturating_pow(chunks_touched as u32);
    let required = codebook.num_messages as u128 * prefix_codewords;
    if required > plan.posterior_term_cap {
        return Err(AttackError::PosteriorTooLarge { required, cap: plan.posterior_term_cap });
    }
    let logs = posterior_log_weights(codebook, y_prefix, plan);
    let peak = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = logs.iter().map(|l| (l - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut draw = rng.gen_range(0.0..total);
    for (w, weight) in weights.iter().enumerate() {
        draw -= weight;
        if draw <= 0.0 {
            return Ok(w);
        }
    }
    Ok(codebook.num_messages - 1)
}

/// Sample a decoy suffix x̄_{m*+1}..x̄_n for message u from the code's own
/// encoding distribution, truncating any chunk the division point splits.
fn sample_suffix(codebook: &Codebook, u: usize, m_star: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    let theta = codebook.block.theta;
    let first_chunk = m_star / theta;
    let mut suffix = Vec::with_capacity(codebook.block.n - m_star);
    for chunk in first_chunk..codebook.block.num_chunks {
        let e = rng.gen_range(0..codebook.entries_per_chunk());
        let xs = codebook.chunk_entry(u, chunk, e);
        let skip = m_star.saturating_sub(chunk * theta);
        suffix.extend_from_slice(&xs[skip..]);
    }
    suffix
}

/// Run the full two-stage attack against one transmission of message w.
pub fn execute_attack(
    codebook: &Codebook,
    w: usize,
    plan: &AttackPlan,
    params: &ChannelParams,
    rng: &mut ChaCha20Rng,
) -> Result<AttackOutcome, AttackError> {
    let n = codebook.block.n;
    let x = crate::codec::encode(codebook, w, rng);
    let mut noise = Vec::with_capacity(n);
    for t in 1..=plan.m_star {
        noise.push(babble_step(plan, x[t - 1], t, rng));
    }
    let y_prefix: Vec<f64> =
        x[..plan.m_star].iter().zip(&noise).map(|(xv, sv)| xv + sv).collect();
    let fake_message = posterior_sample_message(codebook, &y_prefix, plan, rng)?;
    let push_target = sample_suffix(codebook, fake_message, plan.m_star, rng);
    for (t, x_bar) in push_target.iter().enumerate() {
        noise.push(push_step(x[plan.m_star + t], *x_bar));
    }
    let spent: f64 = noise.iter().map(|s| s * s).sum();
    let aborted = spent > n as f64 * params.noise_power;
    Ok(AttackOutcome { noise, aborted, fake_message, push_target, transmitted: x })
}
