//! Chunked stochastic code: per (message, chunk) a small collection of
//! uniform-ball samples, encoding uniform over per-chunk picks, and the
//! iterative list-and-check decoder driven by the consumed-budget reference
//! sequence.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::model::{BlockConfig, ChannelParams, ChunkedAllocation, PowerAllocation};

/// Hard cap on stored floats: |messages|·K·2^β·θ.
pub const CODEBOOK_FLOAT_CAP: usize = 1 << 24;

const MAGIC: &[u8; 4] = b"CAVC";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("codebook would hold {required} floats, above the cap {cap}")]
    SizeCap { required: usize, cap: usize },
    #[error("budget reference infeasible: F_1 = {f1} > 0 at the minimum window; expected P > 2N")]
    BudgetReferenceInfeasible { f1: f64 },
    #[error("sequence length {len} is not a multiple of chunk length {theta}")]
    LengthMismatch { len: usize, theta: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad codebook dump: {0}")]
    Format(String),
}

/// Finite stochastic codebook: 2^β length-θ sequences per (message, chunk).
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub num_messages: usize,
    pub beta: u32,
    pub block: BlockConfig,
    /// Per-chunk radius √Φ*_T.
    radii: Vec<f64>,
    /// Flattened [message][chunk][entry][coordinate].
    entries: Vec<f64>,
    pub seed: u64,
}

impl Codebook {
    pub fn entries_per_chunk(&self) -> usize {
        1usize << self.beta
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    /// Per-chunk power limits Φ*_T.
    pub fn phi(&self) -> Vec<f64> {
        self.radii.iter().map(|r| r * r).collect()
    }

    pub fn chunk_entry(&self, w: usize, chunk: usize, entry: usize) -> &[f64] {
        let theta = self.block.theta;
        let per_chunk = self.entries_per_chunk() * theta;
        let per_msg = self.block.num_chunks * per_chunk;
        let start = w * per_msg + chunk * per_chunk + entry * theta;
        &self.entries[start..start + theta]
    }

    /// Exact per-coordinate average power over the uniform (message, entry)
    /// distribution.
    pub fn average_powers(&self, params: &ChannelParams) -> PowerAllocation {
        let n = self.block.n;
        let mut avg = vec![0.0f64; n];
        let weight = 1.0 / (self.num_messages * self.entries_per_chunk()) as f64;
        for w in 0..self.num_messages {
            for chunk in 0..self.block.num_chunks {
                for e in 0..self.entries_per_chunk() {
                    let xs = self.chunk_entry(w, chunk, e);
                    for (i, x) in xs.iter().enumerate() {
                        avg[chunk * self.block.theta + i] += weight * x * x;
                    }
                }
            }
        }
        // coordinates a code never excites carry a vanishing positive power
        for a in avg.iter_mut() {
            *a = a.max(1e-9);
        }
        PowerAllocation::new(avg, n as f64 * params.signal_power)
            .expect("ball radii keep the code inside the power budget")
    }
}

/// Uniform sample from the θ-dimensional ball of the given radius: an
/// isotropic Gaussian direction scaled by r·U^{1/θ}.
pub fn sample_uniform_ball(theta: usize, radius: f64, rng: &mut ChaCha20Rng) -> Vec<f64> {
    assert!(theta >= 1 && radius > 0.0);
    loop {
        let dir: Vec<f64> = (0..theta).map(|_| rng.sample(StandardNormal)).collect();
        let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        let u: f64 = rng.gen_range(f64::MIN_POSITIVE..=1.0);
        let scale = radius * u.powf(1.0 / theta as f64) / norm;
        return dir.into_iter().map(|x| x * scale).collect();
    }
}

/// Fill every sub-collection with independent uniform-ball samples,
/// deterministically from the seed.
pub fn generate_codebook(
    params: &ChannelParams,
    block: BlockConfig,
    phi: &ChunkedAllocation,
    beta: u32,
    num_messages: usize,
    seed: u64,
) -> Result<Codebook, CodecError> {
    assert_eq!(phi.len(), block.num_chunks, "one power per chunk");
    assert!(
        phi.values().iter().sum::<f64>() <= block.n as f64 * params.signal_power * (1.0 + 1e-9),
        "chunk powers exceed the block budget"
    );
    let entries_per_chunk = 1usize << beta;
    let required = num_messages * block.num_chunks * entries_per_chunk * block.theta;
    if required > CODEBOOK_FLOAT_CAP {
        return Err(CodecError::SizeCap { required, cap: CODEBOOK_FLOAT_CAP });
    }
    let radii: Vec<f64> = phi.values().iter().map(|p| p.sqrt()).collect();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(required);
    for _w in 0..num_messages {
        for chunk in 0..block.num_chunks {
            for _e in 0..entries_per_chunk {
                entries.extend(sample_uniform_ball(block.theta, radii[chunk], &mut rng));
            }
        }
    }
    Ok(Codebook { num_messages, beta, block, radii, entries, seed })
}

/// Uniform pick of one stored entry per chunk.
pub fn encode(codebook: &Codebook, w: usize, rng: &mut ChaCha20Rng) -> Vec<f64> {
    assert!(w < codebook.num_messages);
    let mut x = Vec::with_capacity(codebook.block.n);
    for chunk in 0..codebook.block.num_chunks {
        let e = rng.gen_range(0..codebook.entries_per_chunk());
        x.extend_from_slice(codebook.chunk_entry(w, chunk, e));
    }
    x
}

/// T-th accumulated power of a noise sequence: Σ of s_t² over chunk T.
pub fn accumulated_power(s: &[f64], theta: usize) -> Result<Vec<f64>, CodecError> {
    if theta == 0 || s.len() % theta != 0 {
        return Err(CodecError::LengthMismatch { len: s.len(), theta });
    }
    Ok(s.chunks(theta).map(|c| c.iter().map(|v| v * v).sum()).collect())
}

/// Consumed-budget reference sequence F with its starting point μ0.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetReference {
    /// F_μ for μ = 1..K at index μ−1.
    pub f: Vec<f64>,
    /// Effective δ after any halving.
    pub delta: f64,
    /// Window Kδ rounded to a positive integer.
    pub k_delta: usize,
    /// F_{μ0} ≤ 0 < F_{μ0+1}.
    pub mu0: usize,
    /// Total jammer budget n·N; also substituted for the undefined F_{K+1}.
    pub total_noise: f64,
}

impl BudgetReference {
    pub fn f_at(&self, mu: usize) -> f64 {
        self.f[mu - 1]
    }

    /// F_{μ+1}, substituting the total budget at μ = K.
    pub fn f_next(&self, mu: usize) -> f64 {
        if mu < self.f.len() {
            self.f[mu]
        } else {
            self.total_noise
        }
    }

    /// μ0 range guaranteed when P > 2N and δ is small.
    pub fn mu0_in_expected_range(&self) -> bool {
        let k = self.f.len();
        1 <= self.mu0 && self.mu0 + self.k_delta + 1 <= k
    }
}

/// Compute F_μ = nN − Σ_{T=μ+Kδ+1..K} ½Φ*_T, halving δ until F_1 ≤ 0.
pub fn budget_reference(
    phi: &ChunkedAllocation,
    params: &ChannelParams,
    block: BlockConfig,
    delta: f64,
) -> Result<BudgetReference, CodecError> {
    assert_eq!(phi.len(), block.num_chunks);
    let k = block.num_chunks;
    let nn = block.n as f64 * params.noise_power;
    let f_for = |k_delta: usize| -> Vec<f64> {
        (1..=k)
            .map(|mu| {
                let tail: f64 = phi.values().iter().skip(mu + k_delta).sum();
                nn - 0.5 * tail
            })
            .collect()
    };

    let mut delta = delta;
    let mut k_delta = ((k as f64 * delta).round() as usize).max(1);
    let mut f = f_for(k_delta);
    while f[0] > 0.0 && k_delta > 1 {
        delta /= 2.0;
        k_delta = ((k as f64 * delta).round() as usize).max(1);
        f = f_for(k_delta);
    }
    if f[0] > 0.0 {
        return Err(CodecError::BudgetReferenceInfeasible { f1: f[0] });
    }
    let mu0 = f.iter().take_while(|&&v| v <= 0.0).count();
    debug_assert!(mu0 < k, "F_K = nN > 0");
    Ok(BudgetReference { f, delta, k_delta, mu0, total_noise: nn })
}

/// Per-message minimum squared distance between y and the sub-collections,
/// chunk by chunk. Valid for list membership because chunks occupy disjoint
/// coordinates, so the existential over concatenations splits per chunk.
fn min_chunk_distances(codebook: &Codebook, y: &[f64]) -> Vec<Vec<f64>> {
    let theta = codebook.block.theta;
    let k = codebook.block.num_chunks;
    (0..codebook.num_messages)
        .map(|w| {
            (0..k)
                .map(|chunk| {
                    let yc = &y[chunk * theta..(chunk + 1) * theta];
                    (0..codebook.entries_per_chunk())
                        .map(|e| {
                            codebook
                                .chunk_entry(w, chunk, e)
                                .iter()
                                .zip(yc)
                                .map(|(x, yv)| (x - yv) * (x - yv))
                                .sum::<f64>()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect()
        })
        .collect()
}

fn list_tolerance(fref: &BudgetReference) -> f64 {
    1e-9 * (1.0 + fref.total_noise.abs())
}

/// Messages whose best prefix concatenation lands within F_{μ+1} of y.
pub fn pre_list(
    codebook: &Codebook,
    y_prefix: &[f64],
    mu: usize,
    fref: &BudgetReference,
) -> Vec<usize> {
    let theta = codebook.block.theta;
    assert_eq!(y_prefix.len(), mu * theta, "prefix must cover μ chunks");
    let bound = fref.f_next(mu) + list_tolerance(fref);
    let mut list = Vec::new();
    for w in 0..codebook.num_messages {
        let mut dist = 0.0;
        for chunk in 0..mu {
            let yc = &y_prefix[chunk * theta..(chunk + 1) * theta];
            let d = (0..codebook.entries_per_chunk())
                .map(|e| {
                    codebook
                        .chunk_entry(w, chunk, e)
                        .iter()
                        .zip(yc)
                        .map(|(x, yv)| (x - yv) * (x - yv))
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min);
            dist += d;
        }
        if dist <= bound {
            list.push(w);
        }
    }
    list
}

/// Members of the pre-list whose best suffix lands within nN − F_μ of y.
pub fn post_list(
    codebook: &Codebook,
    pre: &[usize],
    y_suffix: &[f64],
    mu: usize,
    fref: &BudgetReference,
) -> Vec<usize> {
    let theta = codebook.block.theta;
    let k = codebook.block.num_chunks;
    assert_eq!(y_suffix.len(), (k - mu) * theta, "suffix must cover the remaining chunks");
    let bound = fref.total_noise - fref.f_at(mu) + list_tolerance(fref);
    pre.iter()
        .copied()
        .filter(|&w| {
            let mut dist = 0.0;
            for (i, chunk) in (mu..k).enumerate() {
                let yc = &y_suffix[i * theta..(i + 1) * theta];
                let d = (0..codebook.entries_per_chunk())
                    .map(|e| {
                        codebook
                            .chunk_entry(w, chunk, e)
                            .iter()
                            .zip(yc)
                            .map(|(x, yv)| (x - yv) * (x - yv))
                            .sum::<f64>()
                    })
                    .fold(f64::INFINITY, f64::min);
                dist += d;
            }
            dist <= bound
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ListTrace {
    pub mu: usize,
    pub pre_len: usize,
    pub post_len: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderOutput {
    /// Decoded message, or None for the decoder's ERROR symbol.
    pub estimate: Option<usize>,
    pub stop_chunk: usize,
    pub list_trace: Vec<ListTrace>,
    /// True when the undefined F_{K+1} was replaced by the total budget.
    pub f_cap_substituted: bool,
}

/// Iterate μ from μ0; stop at the first nonempty post-list. The survivor is
/// the lowest message id by default, or a uniform pick when `randomized`.
pub fn decode(
    codebook: &Codebook,
    fref: &BudgetReference,
    y: &[f64],
    randomized: bool,
    rng: &mut ChaCha20Rng,
) -> DecoderOutput {
    let theta = codebook.block.theta;
    let k = codebook.block.num_chunks;
    assert_eq!(y.len(), codebook.block.n);
    let dmin = min_chunk_distances(codebook, y);
    let prefix_sums: Vec<Vec<f64>> = dmin
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            let mut sums = Vec::with_capacity(k + 1);
            sums.push(0.0);
            for d in row {
                acc += d;
                sums.push(acc);
            }
            sums
        })
        .collect();
    let _ = theta;

    let tol = list_tolerance(fref);
    let mut trace = Vec::new();
    let mut f_cap_substituted = false;
    for mu in fref.mu0.max(1)..=k {
        if mu == k {
            f_cap_substituted = true;
        }
        let pre_bound = fref.f_next(mu) + tol;
        let post_bound = fref.total_noise - fref.f_at(mu) + tol;
        let mut pre_len = 0usize;
        let mut post: Vec<usize> = Vec::new();
        for w in 0..codebook.num_messages {
            let prefix = prefix_sums[w][mu];
            if prefix <= pre_bound {
                pre_len += 1;
                let suffix = prefix_sums[w][k] - prefix;
                if suffix <= post_bound {
                    post.push(w);
                }
            }
        }
        trace.push(ListTrace { mu, pre_len, post_len: post.len() });
        if !post.is_empty() {
            let estimate = if randomized {
                post[rng.gen_range(0..post.len())]
            } else {
                post[0]
            };
            return DecoderOutput {
                estimate: Some(estimate),
                stop_chunk: mu,
                list_trace: trace,
                f_cap_substituted,
            };
        }
    }
    DecoderOutput { estimate: None, stop_chunk: k, list_trace: trace, f_cap_substituted }
}

/// Critical point of the accumulated powers against the reference: the last
/// chunk where the jammer's spend still meets the assumed budget.
pub fn crossing_point(psi: &[f64], fref: &BudgetReference) -> Option<usize> {
    let k = fref.f.len();
    let mut acc: Vec<f64> = Vec::with_capacity(k + 1);
    acc.push(0.0);
    for p in psi {
        acc.push(acc.last().unwrap() + p);
    }
    let hi = k - fref.k_delta;
    let tol = list_tolerance(fref);
    for mu1 in fref.mu0.max(1)..=hi {
        let here = acc[mu1] >= fref.f_at(mu1) - tol;
        let next_sum = if mu1 + 1 <= k { acc[mu1 + 1] } else { acc[k] };
        let next = next_sum < fref.f_next(mu1) + tol;
        if here && next {
            return Some(mu1);
        }
    }
    None
}

/// Check the window sums Σ_{T=μ+1..μ+Kδ} Φ*_T stay within [c1, c2]·δKθ.
pub fn window_sums_in_range(
    phi: &[f64],
    k_delta: usize,
    theta: usize,
    c1: f64,
    c2: f64,
) -> bool {
    let k = phi.len();
    if k_delta == 0 || k_delta > k {
        return false;
    }
    let scale = (k_delta * theta) as f64;
    for mu in 0..=(k - k_delta) {
        let sum: f64 = phi[mu..mu + k_delta].iter().sum();
        if sum < c1 * scale || sum > c2 * scale {
            return false;
        }
    }
    true
}

/// Versioned binary dump: header, per-chunk radii, then entries chunk-major as
/// little-endian f64.
pub fn save_codebook(codebook: &Codebook, path: &Path) -> Result<(), CodecError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    for v in [
        codebook.num_messages as u64,
        codebook.beta as u64,
        codebook.block.n as u64,
        codebook.block.theta as u64,
        codebook.seed,
    ] {
        out.write_all(&v.to_le_bytes())?;
    }
    for r in &codebook.radii {
        out.write_all(&r.to_le_bytes())?;
    }
    for chunk in 0..codebook.block.num_chunks {
        for w in 0..codebook.num_messages {
            for e in 0..codebook.entries_per_chunk() {
                for x in codebook.chunk_entry(w, chunk, e) {
                    out.write_all(&x.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

pub fn load_codebook(path: &Path) -> Result<Codebook, CodecError> {
    let mut input = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(CodecError::Format("bad magic".into()));
    }
    let mut u32buf = [0u8; 4];
    input.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != FORMAT_VERSION {
        return Err(CodecError::Format(format!("unsupported version {version}")));
    }
    let mut u64buf = [0u8; 8];
    let mut read_u64 = |input: &mut BufReader<File>| -> Result<u64, CodecError> {
        input.read_exact(&mut u64buf)?;
        Ok(u64::from_le_bytes(u64buf))
    };
    let num_messages = read_u64(&mut input)? as usize;
    let beta = read_u64(&mut input)? as u32;
    let n = read_u64(&mut input)? as usize;
    let theta = read_u64(&mut input)? as usize;
    let seed = read_u64(&mut input)?;
    let block = BlockConfig::new(n, theta).map_err(|e| CodecError::Format(e.to_string()))?;

    let mut f64buf = [0u8; 8];
    let mut read_f64 = |input: &mut BufReader<File>| -> Result<f64, CodecError> {
        input.read_exact(&mut f64buf)?;
        Ok(f64::from_le_bytes(f64buf))
    };
    let radii: Vec<f64> =
        (0..block.num_chunks).map(|_| read_f64(&mut input)).collect::<Result<_, _>>()?;

    let entries_per_chunk = 1usize << beta;
    let total = num_messages * block.num_chunks * entries_per_chunk * theta;
    if total > CODEBOOK_FLOAT_CAP {
        return Err(CodecError::SizeCap { required: total, cap: CODEBOOK_FLOAT_CAP });
    }
    let mut entries = vec![0.0f64; total];
    let per_chunk = entries_per_chunk * theta;
    let per_msg = block.num_chunks * per_chunk;
    for chunk in 0..block.num_chunks {
        for w in 0..num_messages {
            for e in 0..entries_per_chunk {
                for i in 0..theta {
                    entries[w * per_msg + chunk * per_chunk + e * theta + i] =
                        read_f64(&mut input)?;
                }
            }
        }
    }
    Ok(Codebook { num_messages, beta, block, radii, entries, seed })
}

/// Plain-text export: one row per stored sequence.
pub fn export_codebook_csv(codebook: &Codebook, path: &Path) -> Result<(), CodecError> {
    let mut out = BufWriter::new(File::create(path)?);
    writeln!(out, "message,chunk,entry,coordinates")?;
    for w in 0..codebook.num_messages {
        for chunk in 0..codebook.block.num_chunks {
            for e in 0..codebook.entries_per_chunk() {
                let coords: Vec<String> =
                    codebook.chunk_entry(w, chunk, e).iter().map(|x| format!("{x}")).collect();
                writeln!(out, "{w},{chunk},{e},{}", coords.join(";"))?;
            }
        }
    }
    Ok(())
}
