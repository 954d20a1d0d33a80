//! Command-line front end: bound tables, rate-bound curves, and simulation
//! runs with CSV or JSON output.

use std::fmt::Write as _;
use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Deserialize;
use thiserror::Error;

use crate::attack::plan_attack;
use crate::bounds::{
    compute_lower_bound, compute_slack_bound, compute_upper_bar, compute_upper_tilde,
    reference_oblivious, solve_chunked_signal, BoundResult, ObliviousThreshold, SlackKind,
};
use crate::codec::{generate_codebook, load_codebook, save_codebook, Codebook};
use crate::model::{BlockConfig, ChannelParams, SolverConfig};
use crate::sim::{reference_for, run_codec_trials, AdversaryStrategy};

/// Environment variable naming the default worker count. Accepted for
/// compatibility with multi-core hosts; execution is currently sequential.
pub const WORKERS_ENV: &str = "CAVC_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Infeasible(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Io(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObliviousFlag {
    /// Positive capacity whenever P > N.
    N,
    /// Positive capacity only when P > 2N.
    #[value(name = "2n")]
    TwoN,
}

impl From<ObliviousFlag> for ObliviousThreshold {
    fn from(f: ObliviousFlag) -> Self {
        match f {
            ObliviousFlag::N => ObliviousThreshold::SignalAboveNoise,
            ObliviousFlag::TwoN => ObliviousThreshold::SignalAboveTwiceNoise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BoundFlag {
    Lower,
    UpperBar,
    UpperTilde,
    Tau,
    Gamma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyFlag {
    None,
    Babble,
    BabblePush,
    FixedChunk,
}

/// Shared knobs; every field can also come from a TOML config file, with
/// command-line values taking precedence.
#[derive(Debug, Clone, Args)]
pub struct CommonOpts {
    /// Blocklengths to evaluate.
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    /// Noise-to-signal ratios N/P in (0, 1).
    #[arg(long = "snr-inv", value_delimiter = ',')]
    pub snr_inv: Vec<f64>,
    /// Grid step for ratio sweeps and share grids.
    #[arg(long)]
    pub step: Option<f64>,
    /// Jammer-side slack for the tau bound and attack planning.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Transmitter-side slack for the gamma bound.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Decoder budget window fraction.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Log2 of per-chunk codebook entries.
    #[arg(long)]
    pub beta: Option<u32>,
    /// Chunk length.
    #[arg(long)]
    pub theta: Option<usize>,
    /// Monte-Carlo trial count.
    #[arg(long)]
    pub trials: Option<usize>,
    /// Master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format.
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    /// Enforce strict first-crossing constraints in bound searches.
    #[arg(long, default_value_t = false)]
    pub strict_first_crossing: bool,
    /// Positivity threshold for the oblivious reference capacity.
    #[arg(long, value_enum)]
    pub oblivious_threshold: Option<ObliviousFlag>,
    /// TOML file supplying defaults for any of the above.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Message count for simulations.
    #[arg(long)]
    pub messages: Option<usize>,
    /// Attack scale-down slack.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Adversary strategy for codec simulations.
    #[arg(long, value_enum)]
    pub strategy: Option<StrategyFlag>,
    /// Chunk index for the fixed-chunk strategy.
    #[arg(long)]
    pub chunk: Option<usize>,
    /// Load a previously saved codebook instead of sampling one.
    #[arg(long)]
    pub codebook_in: Option<PathBuf>,
    /// Save the sampled codebook.
    #[arg(long)]
    pub codebook_out: Option<PathBuf>,
}

/// TOML mirror of [`CommonOpts`]; anything present fills in a missing flag.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    n: Option<Vec<usize>>,
    snr_inv: Option<Vec<f64>>,
    step: Option<f64>,
    tau: Option<f64>,
    gamma: Option<f64>,
    delta: Option<f64>,
    beta: Option<u32>,
    theta: Option<usize>,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    format: Option<String>,
    messages: Option<usize>,
    epsilon: Option<f64>,
    strategy: Option<String>,
    chunk: Option<usize>,
}

#[derive(Debug, Parser)]
#[command(name = "cavc", about = "Capacity bounds and jamming simulations", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate one bound kind over the (n, N/P) grid.
    Bounds {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long, value_enum, default_value_t = BoundFlag::Lower)]
        kind: BoundFlag,
    },
    /// Emit all three bound kinds over the (n, N/P) grid.
    Table {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Sweep N/P at fixed n, emitting all bounds plus the oblivious reference.
    Curve {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Run the two-stage attack against a sampled codebook.
    SimulateAttack {
        #[command(flatten)]
        common: CommonOpts,
    },
    /// Stream codewords through an adversary strategy and decode.
    SimulateCodec {
        #[command(flatten)]
        common: CommonOpts,
    },
}

fn merge_config(mut opts: CommonOpts) -> Result<CommonOpts, CliError> {
    let Some(path) = opts.config.clone() else { return Ok(opts) };
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: FileConfig = toml::from_str(&text)
        .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
    if opts.n.is_empty() {
        opts.n = file.n.unwrap_or_default();
    }
    if opts.snr_inv.is_empty() {
        opts.snr_inv = file.snr_inv.unwrap_or_default();
    }
    opts.step = opts.step.or(file.step);
    opts.tau = opts.tau.or(file.tau);
    opts.gamma = opts.gamma.or(file.gamma);
    opts.delta = opts.delta.or(file.delta);
    opts.beta = opts.beta.or(file.beta);
    opts.theta = opts.theta.or(file.theta);
    opts.trials = opts.trials.or(file.trials);
    opts.seed = opts.seed.or(file.seed);
    opts.out = opts.out.or(file.out);
    opts.messages = opts.messages.or(file.messages);
    opts.epsilon = opts.epsilon.or(file.epsilon);
    opts.chunk = opts.chunk.or(file.chunk);
    if opts.format.is_none() {
        opts.format = match file.format.as_deref() {
            None => None,
            Some("csv") => Some(OutputFormat::Csv),
            Some("json") => Some(OutputFormat::Json),
            Some(other) => {
                return Err(CliError::Config(format!("unknown format {other:?} in config")))
            }
        };
    }
    if opts.strategy.is_none() {
        opts.strategy = match file.strategy.as_deref() {
            None => None,
            Some("none") => Some(StrategyFlag::None),
            Some("babble") => Some(StrategyFlag::Babble),
            Some("babble-push") => Some(StrategyFlag::BabblePush),
            Some("fixed-chunk") => Some(StrategyFlag::FixedChunk),
            Some(other) => {
                return Err(CliError::Config(format!("unknown strategy {other:?} in config")))
            }
        };
    }
    Ok(opts)
}

fn validated_ratios(opts: &CommonOpts) -> Result<Vec<f64>, CliError> {
    if opts.snr_inv.is_empty() {
        return Err(CliError::Config("at least one --snr-inv ratio is required".into()));
    }
    for &r in &opts.snr_inv {
        if !(0.0 < r && r < 1.0) {
            return Err(CliError::Config(format!("N/P ratio {r} outside (0, 1)")));
        }
    }
    Ok(opts.snr_inv.clone())
}

fn validated_ns(opts: &CommonOpts) -> Result<Vec<usize>, CliError> {
    if opts.n.is_empty() {
        return Err(CliError::Config("at least one --n blocklength is required".into()));
    }
    if opts.n.contains(&0) {
        return Err(CliError::Config("blocklengths must be positive".into()));
    }
    Ok(opts.n.clone())
}

fn solver_config(opts: &CommonOpts) -> Result<SolverConfig, CliError> {
    let mut cfg = SolverConfig::default();
    if let Some(step) = opts.step {
        cfg.snr_grid_step = step;
    }
    cfg.tau = opts.tau.unwrap_or(0.0);
    cfg.gamma = opts.gamma.unwrap_or(0.0);
    cfg.strict_first_crossing = opts.strict_first_crossing;
    cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
    Ok(cfg)
}

/// Six significant digits, the CSV float contract.
pub fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let mag = x.abs().log10().floor() as i32;
    let decimals = (5 - mag).max(0) as usize;
    format!("{:.*}", decimals, x)
}

fn emit(opts: &CommonOpts, text: &str) -> Result<(), CliError> {
    match &opts.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn bound_for(
    kind: BoundFlag,
    params: &ChannelParams,
    n: usize,
    cfg: &SolverConfig,
    opts: &CommonOpts,
) -> BoundResult {
    match kind {
        BoundFlag::Lower => compute_lower_bound(params, n, cfg),
        BoundFlag::UpperBar => compute_upper_bar(params, n, cfg),
        BoundFlag::UpperTilde => compute_upper_tilde(params, n, cfg),
        BoundFlag::Tau => compute_slack_bound(params, n, cfg, SlackKind::Tau),
        BoundFlag::Gamma => {
            let block = BlockConfig::with_default_theta(n).unwrap_or_else(|_| {
                BlockConfig::new(n, 1).expect("theta = 1 always divides n")
            });
            let block = match opts.theta {
                Some(theta) => BlockConfig::new(n, theta).unwrap_or(block),
                None => block,
            };
            compute_slack_bound(params, n, cfg, SlackKind::Gamma { block })
        }
    }
}

fn grid_csv(kinds: &[BoundFlag], opts: &CommonOpts) -> Result<String, CliError> {
    let ns = validated_ns(opts)?;
    let ratios = validated_ratios(opts)?;
    let cfg = solver_config(opts)?;
    let mut out = String::from("bound_kind,n,n_over_p,value,grid_step,runtime_ms\n");
    for &kind in kinds {
        for &n in &ns {
            for &ratio in &ratios {
                let params = ChannelParams::from_ratio(ratio)
                    .map_err(|e| CliError::Config(e.to_string()))?;
                let start = Instant::now();
                let result = bound_for(kind, &params, n, &cfg, opts);
                let ms = start.elapsed().as_millis();
                let label = match kind {
                    BoundFlag::Lower => "lower",
                    BoundFlag::UpperBar => "upper_bar",
                    BoundFlag::UpperTilde => "upper_tilde",
                    BoundFlag::Tau => "tau_slack",
                    BoundFlag::Gamma => "gamma_slack",
                };
                writeln!(
                    out,
                    "{label},{n},{},{},{},{ms}",
                    sig6(ratio),
                    sig6(result.value),
                    sig6(result.grid_step)
                )
                .expect("string write");
            }
        }
    }
    Ok(out)
}

pub fn cmd_bounds(opts: &CommonOpts, kind: BoundFlag) -> Result<String, CliError> {
    grid_csv(&[kind], opts)
}

pub fn cmd_table(opts: &CommonOpts) -> Result<String, CliError> {
    grid_csv(&[BoundFlag::Lower, BoundFlag::UpperBar, BoundFlag::UpperTilde], opts)
}

pub fn cmd_curve(opts: &CommonOpts) -> Result<String, CliError> {
    let n = *opts.n.first().unwrap_or(&500);
    if n == 0 {
        return Err(CliError::Config("blocklength must be positive".into()));
    }
    let cfg = solver_config(opts)?;
    let step = opts.step.unwrap_or(cfg.snr_grid_step);
    if step <= 0.0 {
        return Err(CliError::Config("step must be positive".into()));
    }
    let threshold: ObliviousThreshold =
        opts.oblivious_threshold.unwrap_or(ObliviousFlag::N).into();
    let mut out = String::from("n_over_p,lower,upper_bar,upper_tilde,oblivious\n");
    let mut ratio = step;
    while ratio < 0.5 - step / 2.0 {
        let params =
            ChannelParams::from_ratio(ratio).map_err(|e| CliError::Config(e.to_string()))?;
        let lower = compute_lower_bound(&params, n, &cfg).value;
        let bar = compute_upper_bar(&params, n, &cfg).value;
        let tilde = compute_upper_tilde(&params, n, &cfg).value;
        let oblivious = reference_oblivious(&params, threshold);
        writeln!(
            out,
            "{},{},{},{},{}",
            sig6(ratio),
            sig6(lower),
            sig6(bar),
            sig6(tilde),
            sig6(oblivious)
        )
        .expect("string write");
        ratio += step;
    }
    Ok(out)
}

struct SimSetup {
    codebook: Codebook,
    params: ChannelParams,
    delta: f64,
    trials: usize,
    seed: u64,
}

fn sim_setup(opts: &CommonOpts) -> Result<SimSetup, CliError> {
    let seed = opts.seed.unwrap_or(0);
    let trials = opts.trials.unwrap_or(10_000);
    let ratio = *opts
        .snr_inv
        .first()
        .ok_or_else(|| CliError::Config("one --snr-inv ratio is required".into()))?;
    if !(0.0 < ratio && ratio < 1.0) {
        return Err(CliError::Config(format!("N/P ratio {ratio} outside (0, 1)")));
    }
    let params = ChannelParams::from_ratio(ratio).map_err(|e| CliError::Config(e.to_string()))?;
    let delta = opts.delta.unwrap_or(0.1);

    let codebook = if let Some(path) = &opts.codebook_in {
        load_codebook(path).map_err(|e| CliError::Config(e.to_string()))?
    } else {
        let n = *opts
            .n
            .first()
            .ok_or_else(|| CliError::Config("one --n blocklength is required".into()))?;
        let block = match opts.theta {
            Some(theta) => BlockConfig::new(n, theta),
            None => BlockConfig::with_default_theta(n),
        }
        .map_err(|e| CliError::Config(e.to_string()))?;
        let beta = opts.beta.unwrap_or(2);
        let messages = opts.messages.unwrap_or(16);
        let cfg = solver_config(opts)?;
        let (_, phi) = solve_chunked_signal(
            &params,
            block.num_chunks,
            block.theta,
            opts.gamma.unwrap_or(0.0),
            &cfg,
        );
        generate_codebook(&params, block, &phi, beta, messages, seed)
            .map_err(|e| CliError::Config(e.to_string()))?
    };
    if let Some(path) = &opts.codebook_out {
        save_codebook(&codebook, path).map_err(|e| CliError::Config(e.to_string()))?;
    }
    Ok(SimSetup { codebook, params, delta, trials, seed })
}

pub fn cmd_simulate_codec(opts: &CommonOpts) -> Result<String, CliError> {
    let setup = sim_setup(opts)?;
    let fref = reference_for(&setup.codebook, &setup.params, setup.delta)
        .map_err(|e| CliError::Infeasible(e.to_string()))?;
    let strategy = match opts.strategy.unwrap_or(StrategyFlag::None) {
        StrategyFlag::None => AdversaryStrategy::None,
        StrategyFlag::FixedChunk => {
            AdversaryStrategy::FixedChunkPower { chunk: opts.chunk.unwrap_or(0) }
        }
        StrategyFlag::Babble | StrategyFlag::BabblePush => {
            let avg = setup.codebook.average_powers(&setup.params);
            let plan = plan_attack(
                &avg,
                &setup.params,
                opts.tau.unwrap_or(0.05),
                opts.epsilon.unwrap_or(0.1),
            )
            .ok_or_else(|| {
                CliError::Infeasible("attack infeasible: every division point is over budget".into())
            })?;
            if opts.strategy == Some(StrategyFlag::Babble) {
                AdversaryStrategy::BabbleOnly(plan)
            } else {
                AdversaryStrategy::ScaledBabblePush(plan)
            }
        }
    };
    let report = run_codec_trials(
        &setup.codebook,
        &fref,
        &setup.params,
        &strategy,
        setup.trials,
        setup.seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
}

pub fn cmd_simulate_attack(opts: &CommonOpts) -> Result<String, CliError> {
    let setup = sim_setup(opts)?;
    let avg = setup.codebook.average_powers(&setup.params);
    let plan = plan_attack(
        &avg,
        &setup.params,
        opts.tau.unwrap_or(0.05),
        opts.epsilon.unwrap_or(0.1),
    )
    .ok_or_else(|| {
        CliError::Infeasible("attack infeasible: every division point is over budget".into())
    })?;
    let fref = reference_for(&setup.codebook, &setup.params, setup.delta)
        .map_err(|e| CliError::Infeasible(e.to_string()))?;
    let report = crate::sim::run_attack_trials(
        &setup.codebook,
        &plan,
        &fref,
        &setup.params,
        setup.trials,
        setup.seed,
    )
    .map_err(|e| CliError::Config(e.to_string()))?;
    Ok(serde_json::to_string_pretty(&report).expect("report serializes") + "\n")
}

/// Entry point shared by the binary; returns the process exit code.
pub fn run() -> i32 {
    // accepted for forward compatibility; execution is sequential for now
    let _workers: Option<usize> =
        std::env::var(WORKERS_ENV).ok().and_then(|v| v.parse().ok());
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Bounds { common, kind } => {
            merge_config(common.clone()).and_then(|o| cmd_bounds(&o, *kind).map(|t| (o, t)))
        }
        Command::Table { common } => {
            merge_config(common.clone()).and_then(|o| cmd_table(&o).map(|t| (o, t)))
        }
        Command::Curve { common } => {
            merge_config(common.clone()).and_then(|o| cmd_curve(&o).map(|t| (o, t)))
        }
        Command::SimulateAttack { common } => {
            merge_config(common.clone()).and_then(|o| cmd_simulate_attack(&o).map(|t| (o, t)))
        }
        Command::SimulateCodec { common } => {
            merge_config(common.clone()).and_then(|o| cmd_simulate_codec(&o).map(|t| (o, t)))
        }
    };
    match outcome {
        Ok((opts, text)) => match emit(&opts, &text) {
            Ok(()) => 0,
            Err(e) => {
                eprintln!("error: {e}");
                e.exit_code()
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn opts(args: &[&str]) -> CommonOpts {
        let mut full = vec!["cavc", "table"];
        full.extend_from_slice(args);
        match Cli::parse_from(full).command {
            Command::Table { common } => common,
            _ => unreachable!(),
        }
    }

    #[test]
    fn six_significant_digits() {
        assert_eq!(sig6(1.66104), "1.66104");
        assert_eq!(sig6(0.005), "0.00500000");
        assert_eq!(sig6(123456.7), "123457");
        assert_eq!(sig6(0.0), "0");
    }

    #[test]
    fn empty_ratio_list_is_config_error() {
        let o = opts(&["--n", "10"]);
        assert!(matches!(cmd_table(&o), Err(CliError::Config(_))));
    }

    #[test]
    fn ratio_out_of_range_rejected() {
        let o = opts(&["--n", "10", "--snr-inv", "1.5"]);
        assert!(matches!(cmd_table(&o), Err(CliError::Config(_))));
    }

    #[test]
    fn single_cell_table_runs() {
        let o = opts(&["--n", "10", "--snr-inv", "0.2", "--step", "0.02"]);
        let csv = cmd_table(&o).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "bound_kind,n,n_over_p,value,grid_step,runtime_ms");
        assert_eq!(lines.len(), 4); // header + three bound kinds
    }

    #[test]
    fn config_file_fills_missing_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "n = [10]\nsnr_inv = [0.2]\nstep = 0.02\n").unwrap();
        let mut o = opts(&[]);
        o.config = Some(path);
        let merged = merge_config(o).unwrap();
        assert_eq!(merged.n, vec![10]);
        assert_eq!(merged.snr_inv, vec![0.2]);
        assert_eq!(merged.step, Some(0.02));
    }

    #[test]
    fn cli_flags_override_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "n = [10]\nstep = 0.02\n").unwrap();
        let mut o = opts(&["--n", "25"]);
        o.config = Some(path);
        let merged = merge_config(o).unwrap();
        assert_eq!(merged.n, vec![25]);
        assert_eq!(merged.step, Some(0.02));
    }
}
