//! `chirpgp` command-line front end.

mod commands;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use chirpgp::{AmplitudeMode, Bijection, QuadratureRule, TimeMode};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "chirpgp", version, about = "Chirp instantaneous-frequency estimation")]
struct Cli {
    /// Print progress to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic benchmark series and its ground truth.
    Simulate(SimulateArgs),
    /// Fit model parameters by maximum likelihood.
    Fit(FitArgs),
    /// Filter and smooth with given parameters; write IF estimates.
    Estimate(EstimateArgs),
    /// Monte Carlo comparison of estimators on the synthetic benchmark.
    Benchmark(BenchmarkArgs),
    /// Fit and track a gravitational-wave strain excerpt.
    Gw(GwArgs),
    /// Evaluate the mean-square error bound.
    Bounds(BoundsArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Rule {
    Ekf,
    Ghf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Time {
    Discrete,
    Cd,
}

#[derive(Args, Clone)]
struct FilterOpts {
    #[arg(long, value_enum, default_value = "ghf")]
    rule: Rule,
    /// Gauss-Hermite order per axis.
    #[arg(long, default_value_t = 3)]
    gh_order: usize,
    #[arg(long, value_enum, default_value = "discrete")]
    time: Time,
    /// RK4 substeps per interval for `--time cd`.
    #[arg(long, default_value_t = TimeMode::DEFAULT_SUBSTEPS)]
    substeps: usize,
    #[arg(long, default_value = "softplus", value_parser = parse_bijection)]
    bijection: Bijection,
}

impl FilterOpts {
    fn rule(&self) -> QuadratureRule {
        match self.rule {
            Rule::Ekf => QuadratureRule::Linearize,
            Rule::Ghf => QuadratureRule::GaussHermite(self.gh_order),
        }
    }

    fn mode(&self) -> TimeMode {
        match self.time {
            Time::Discrete => TimeMode::Discrete,
            Time::Cd => TimeMode::Continuous {
                substeps: self.substeps,
            },
        }
    }
}

fn parse_bijection(s: &str) -> Result<Bijection, String> {
    s.parse().map_err(|e: chirpgp::Error| e.to_string())
}

fn parse_amplitude(s: &str) -> Result<AmplitudeMode, String> {
    s.parse().map_err(|e: chirpgp::Error| e.to_string())
}

fn parse_pin(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let value: f64 = value.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((name.trim().to_string(), value))
}

#[derive(Args)]
struct SimulateArgs {
    /// Output directory for measurements.csv and truth.csv.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000.0)]
    fs: f64,
    /// constant | damped | ou
    #[arg(long, default_value = "constant", value_parser = parse_amplitude)]
    amplitude: AmplitudeMode,
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
}

#[derive(Args)]
struct FitArgs {
    /// Measurement CSV with columns t, y.
    #[arg(long)]
    input: PathBuf,
    /// Output JSON.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    filter: FilterOpts,
    /// Fix a parameter during the fit, e.g. `--pin b=0`.
    #[arg(long = "pin", value_parser = parse_pin)]
    pins: Vec<(String, f64)>,
    /// JSON array of starting parameter sets.
    #[arg(long)]
    starts: Option<PathBuf>,
    /// Initial variance of each chirp component.
    #[arg(long, default_value_t = 1.0)]
    chirp_var: f64,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Parameter JSON (a fit output or a bare parameter object).
    #[arg(long)]
    params: PathBuf,
    /// Output directory for filtered.csv, smoothed.csv and run.json.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    filter: FilterOpts,
    #[arg(long, default_value_t = 1.0)]
    chirp_var: f64,
}

#[derive(Args)]
struct BenchmarkArgs {
    /// Output directory for summary.csv, summary.json and runs.csv.
    #[arg(long)]
    output: PathBuf,
    /// Base seed; replicate seeds are derived from it.
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    mc_runs: usize,
    #[arg(long, default_value_t = 1000.0)]
    fs: f64,
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
    /// Amplitude modes to run (default: all three).
    #[arg(long, value_parser = parse_amplitude)]
    amplitude: Vec<AmplitudeMode>,
    /// Methods to run (default: all). One of ghfs, ekfs, cd-ghfs, cd-ekfs,
    /// legacy-ghfs, legacy-ekfs, hilbert, spectrogram.
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Extra pins applied to every state-space fit.
    #[arg(long = "pin", value_parser = parse_pin)]
    pins: Vec<(String, f64)>,
    #[arg(long)]
    starts: Option<PathBuf>,
    /// Score the filtered instead of the smoothed posterior.
    #[arg(long)]
    filtered: bool,
    /// Low-pass cutoff (Hz) for the Hilbert and spectrogram baselines.
    #[arg(long)]
    cutoff: Option<f64>,
}

#[derive(Args)]
struct GwArgs {
    /// Strain CSV with columns t, y.
    #[arg(long)]
    input: PathBuf,
    /// Output directory for filtered.csv, smoothed.csv and params.json.
    #[arg(long)]
    output: PathBuf,
    #[command(flatten)]
    filter: FilterOpts,
    #[arg(long = "pin", value_parser = parse_pin)]
    pins: Vec<(String, f64)>,
    #[arg(long)]
    starts: Option<PathBuf>,
    /// Require exactly this many samples.
    #[arg(long)]
    expect_rows: Option<usize>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Output JSON report.
    #[arg(long)]
    output: PathBuf,
    /// Bound constants JSON. Extracted from the run when omitted.
    #[arg(long)]
    constants: Option<PathBuf>,
    /// Number of steps to evaluate without run files.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    /// Also evaluate the contractive closed form.
    #[arg(long)]
    corollary: bool,
    /// Measurement CSV of a run to compare against.
    #[arg(long)]
    input: Option<PathBuf>,
    /// Truth CSV (columns t, f_true) matching `--input`.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Parameter JSON for filtering `--input`.
    #[arg(long)]
    params: Option<PathBuf>,
    /// Growth factor used when extracting constants.
    #[arg(long, default_value_t = 1.0)]
    z: f64,
    #[command(flatten)]
    filter: FilterOpts,
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(raw) = std::env::var("CHIRPGP_THREADS") {
        let n: usize = raw
            .parse()
            .map_err(|_| anyhow::anyhow!("CHIRPGP_THREADS must be a positive integer, got '{raw}'"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = configure_threads().and_then(|_| match cli.command {
        Command::Simulate(a) => commands::simulate(a, cli.verbose),
        Command::Fit(a) => commands::fit(a, cli.verbose),
        Command::Estimate(a) => commands::estimate(a, cli.verbose),
        Command::Benchmark(a) => commands::benchmark(a, cli.verbose),
        Command::Gw(a) => commands::gw(a, cli.verbose),
        Command::Bounds(a) => commands::bounds(a, cli.verbose),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
