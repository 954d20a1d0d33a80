//! Monte-Carlo harness: stream codewords through an adversary strategy, decode,
//! and tally error estimates with Wilson confidence intervals.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::attack::{execute_attack, AttackError, AttackPlan};
use crate::codec::{budget_reference, decode, encode, BudgetReference, Codebook};
use crate::model::ChannelParams;

/// A causal noise source for one trial: sees x one coordinate at a time.
pub trait CausalAdversary {
    /// Produce s_t given the revealed prefix x_1..x_t and the outputs so far.
    fn step(&mut self, x_prefix: &[f64], y_prefix: &[f64], rng: &mut ChaCha20Rng) -> f64;
}

/// Fixed menu of adversaries; the supremum over causal strategies is not
/// computable, so reports are per-strategy lower bounds on the worst case.
#[derive(Clone)]
pub enum AdversaryStrategy {
    /// Clean channel.
    None,
    /// First-stage babble on the plan's prefix, silence afterwards.
    BabbleOnly(AttackPlan),
    /// The full two-stage attack.
    ScaledBabblePush(AttackPlan),
    /// Gaussian noise dumping the whole budget into one chunk.
    FixedChunkPower { chunk: usize },
    /// Caller-supplied causal hook, built fresh per trial.
    Custom(Arc<dyn Fn() -> Box<dyn CausalAdversary> + Send + Sync>),
}

impl std::fmt::Debug for AdversaryStrategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AdversaryStrategy::None => write!(f, "None"),
            AdversaryStrategy::BabbleOnly(_) => write!(f, "BabbleOnly"),
            AdversaryStrategy::ScaledBabblePush(_) => write!(f, "ScaledBabblePush"),
            AdversaryStrategy::FixedChunkPower { chunk } => {
                write!(f, "FixedChunkPower({chunk})")
            }
            AdversaryStrategy::Custom(_) => write!(f, "Custom"),
        }
    }
}

/// Tally of one Monte-Carlo run.
#[derive(Debug, Clone, Serialize)]
pub struct TrialReport {
    pub trials: usize,
    /// Decoding errors (wrong message or decoder ERROR) among non-aborted
    /// trials.
    pub errors: usize,
    /// Trials where the adversary overspent its budget.
    pub aborted: usize,
    pub per_message_errors: Vec<usize>,
    pub per_message_trials: Vec<usize>,
    /// Point estimate of the error probability over non-aborted trials.
    pub p_hat: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
    pub seed: u64,
    /// Non-aborted trials where the decoy message differed from the truth.
    pub confusion: usize,
}

impl TrialReport {
    /// Max-over-messages empirical error rate.
    pub fn max_message_error(&self) -> f64 {
        self.per_message_errors
            .iter()
            .zip(&self.per_message_trials)
            .filter(|(_, t)| **t > 0)
            .map(|(e, t)| *e as f64 / *t as f64)
            .fold(0.0, f64::max)
    }

    fn finalize(&mut self) {
        let effective = self.trials - self.aborted;
        self.p_hat = if effective > 0 { self.errors as f64 / effective as f64 } else { 0.0 };
        let (lo, hi) = wilson_interval(self.errors, effective);
        self.wilson_low = lo;
        self.wilson_high = hi;
        // average error never exceeds the per-message maximum
        debug_assert!(self.p_hat <= self.max_message_error() + 1e-12);
    }
}

/// Wilson score interval at 95% confidence.
pub fn wilson_interval(successes: usize, trials: usize) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let z = 1.959_963_984_540_054_f64;
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = (z / denom) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((center - half).max(0.0), (center + half).min(1.0))
}

fn trial_rng(seed: u64, trial: usize) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(trial as u64);
    rng
}

struct FixedChunkAdversary {
    chunk: usize,
    theta: usize,
    per_coord_sigma: f64,
}

impl CausalAdversary for FixedChunkAdversary {
    fn step(&mut self, x_prefix: &[f64], _y: &[f64], rng: &mut ChaCha20Rng) -> f64 {
        let t = x_prefix.len() - 1;
        if t / self.theta == self.chunk {
            self.per_coord_sigma * rng.sample::<f64, _>(StandardNormal)
        } else {
            0.0
        }
    }
}

struct BabbleOnlyAdversary {
    plan: AttackPlan,
}

impl CausalAdversary for BabbleOnlyAdversary {
    fn step(&mut self, x_prefix: &[f64], _y: &[f64], rng: &mut ChaCha20Rng) -> f64 {
        let t = x_prefix.len();
        if t <= self.plan.m_star {
            crate::attack::babble_step(&self.plan, x_prefix[t - 1], t, rng)
        } else {
            0.0
        }
    }
}

fn stream_noise(
    adversary: &mut dyn CausalAdversary,
    x: &[f64],
    rng: &mut ChaCha20Rng,
) -> Vec<f64> {
    let mut y = Vec::with_capacity(x.len());
    let mut s = Vec::with_capacity(x.len());
    for t in 1..=x.len() {
        let s_t = adversary.step(&x[..t], &y, rng);
        s.push(s_t);
        y.push(x[t - 1] + s_t);
    }
    s
}

/// Stream every trial's codeword through the strategy and decode.
///
/// Messages are cycled so the per-message tallies support the max-error
/// criterion; the whole run is reproducible from the seed alone.
pub fn run_codec_trials(
    codebook: &Codebook,
    fref: &BudgetReference,
    params: &ChannelParams,
    strategy: &AdversaryStrategy,
    trials: usize,
    seed: u64,
) -> Result<TrialReport, AttackError> {
    let n = codebook.block.n;
    let nn = n as f64 * params.noise_power;
    let mut report = TrialReport {
        trials,
        errors: 0,
        aborted: 0,
        per_message_errors: vec![0; codebook.num_messages],
        per_message_trials: vec![0; codebook.num_messages],
        p_hat: 0.0,
        wilson_low: 0.0,
        wilson_high: 0.0,
        seed,
        confusion: 0,
    };
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let w = trial % codebook.num_messages;
        let (y, aborted, decoy) = match strategy {
            AdversaryStrategy::ScaledBabblePush(plan) => {
                // reuse the full attack path so the plan's own encoder sampling
                // and posterior draws stay on this trial's stream
                let out = run_planned_trial(codebook, w, plan, params, &mut rng)?;
                (out.0, out.1, out.2)
            }
            AdversaryStrategy::None => {
                let x = encode(codebook, w, &mut rng);
                (x, false, None)
            }
            AdversaryStrategy::BabbleOnly(plan) => {
                let x = encode(codebook, w, &mut rng);
                let mut adv = BabbleOnlyAdversary { plan: plan.clone() };
                let s = stream_noise(&mut adv, &x, &mut rng);
                let spent: f64 = s.iter().map(|v| v * v).sum();
                let y: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
                (y, spent > nn, None)
            }
            AdversaryStrategy::FixedChunkPower { chunk } => {
                let x = encode(codebook, w, &mut rng);
                let theta = codebook.block.theta;
                let mut adv = FixedChunkAdversary {
                    chunk: *chunk,
                    theta,
                    per_coord_sigma: (nn / theta as f64).sqrt(),
                };
                let s = stream_noise(&mut adv, &x, &mut rng);
                let spent: f64 = s.iter().map(|v| v * v).sum();
                let y: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
                (y, spent > nn, None)
            }
            AdversaryStrategy::Custom(make) => {
                let x = encode(codebook, w, &mut rng);
                let mut adv = make();
                let s = stream_noise(adv.as_mut(), &x, &mut rng);
                let spent: f64 = s.iter().map(|v| v * v).sum();
                let y: Vec<f64> = x.iter().zip(&s).map(|(a, b)| a + b).collect();
                (y, spent > nn, None)
            }
        };
        if aborted {
            report.aborted += 1;
            continue;
        }
        report.per_message_trials[w] += 1;
        if let Some(u) = decoy {
            if u != w {
                report.confusion += 1;
            }
        }
        let out = decode(codebook, fref, &y, false, &mut rng);
        if out.estimate != Some(w) {
            report.errors += 1;
            report.per_message_errors[w] += 1;
        }
    }
    report.finalize();
    Ok(report)
}

fn run_planned_trial(
    codebook: &Codebook,
    w: usize,
    plan: &AttackPlan,
    params: &ChannelParams,
    rng: &mut ChaCha20Rng,
) -> Result<(Vec<f64>, bool, Option<usize>), AttackError> {
    let out = execute_attack(codebook, w, plan, params, rng)?;
    Ok((out.received(), out.aborted, Some(out.fake_message)))
}

/// Run the two-stage attack for every trial and tally the confusion event
/// {U ≠ w, not aborted} alongside ordinary decoding errors.
pub fn run_attack_trials(
    codebook: &Codebook,
    plan: &AttackPlan,
    fref: &BudgetReference,
    params: &ChannelParams,
    trials: usize,
    seed: u64,
) -> Result<TrialReport, AttackError> {
    run_codec_trials(
        codebook,
        fref,
        params,
        &AdversaryStrategy::ScaledBabblePush(plan.clone()),
        trials,
        seed,
    )
}

/// Build the decoder's budget reference for a codebook's own chunk powers.
pub fn reference_for(
    codebook: &Codebook,
    params: &ChannelParams,
    delta: f64,
) -> Result<BudgetReference, crate::codec::CodecError> {
    let phi = crate::model::ChunkedAllocation::new(
        codebook.phi(),
        codebook.block.n as f64 * params.signal_power,
    )
    .expect("codebook radii respect the power budget");
    budget_reference(&phi, params, codebook.block, delta)
}
