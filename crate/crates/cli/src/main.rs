//! `sdmimo`: spectrum runs, spectral-efficiency sweeps, steering optimization,
//! channel-estimation comparisons and the validation suite.
//!
//! Exit codes: 0 success, 1 validation or runtime failure, 2 usage or
//! configuration error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sdmimo_core::config::{RunSection, ScenarioSection, Settings};
use sdmimo_core::experiments::{builtin, run_experiment, ExperimentKind, BUILTIN};
use sdmimo_core::validate::{validate_suite, Perturbation};
use sdmimo_core::Error;

#[derive(Parser)]
#[command(
    name = "sdmimo",
    version,
    about = "Spatial one-bit Sigma-Delta massive-MIMO simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Quantization-noise spatial spectrum, simulated and analytic (default experiment fig1).
    Spectrum(RunArgs),
    /// Uplink spectral efficiency versus the sweep axis (default experiment fig3).
    Se(RunArgs),
    /// Steering phase that minimizes in-sector shaped noise (default experiment fig2).
    PhiOpt(RunArgs),
    /// LS channel-estimation error per architecture (default experiment fig4).
    Chanest(RunArgs),
    /// Built-in consistency checks; exits 1 if any check fails.
    Validate(ValidateArgs),
    /// Names, kinds and captions of the built-in experiments.
    ListExperiments,
}

#[derive(Args, Debug, Default)]
struct RunArgs {
    /// Built-in experiment to start from (fig1..fig5).
    #[arg(long)]
    experiment: Option<String>,
    /// TOML file with [scenario] and [run] tables; flags override it.
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Monte Carlo trials per sweep point.
    #[arg(long)]
    trials: Option<usize>,
    /// Master RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// SNR p0/σ² in dB; replaces an SNR sweep with this single point.
    #[arg(long, value_name = "DB", allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Number of antennas M; replaces an M sweep with this single point.
    #[arg(long)]
    m: Option<usize>,
    /// Number of users K.
    #[arg(long)]
    k: Option<usize>,
    /// Paths per user L.
    #[arg(long)]
    l: Option<usize>,
    /// Antenna spacing in wavelengths d/λ (linear, e.g. 0.25).
    #[arg(long, value_name = "RATIO")]
    d_over_lambda: Option<f64>,
    /// Sector centre θ0 in degrees.
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    theta0_deg: Option<f64>,
    /// Full angular spread Θ of the sector in degrees.
    #[arg(long, value_name = "DEG")]
    spread_deg: Option<f64>,
    /// Steering phase rule: auto (2π(d/λ)sin θ0), optimal (φ*) or manual (needs --phi-deg).
    #[arg(long, value_name = "MODE")]
    phi_mode: Option<String>,
    /// Manual steering phase φ in degrees.
    #[arg(long, value_name = "DEG", allow_negative_numbers = true)]
    phi_deg: Option<f64>,
    /// Comma-separated architectures: infinite, sigma_delta, onebit.
    #[arg(long)]
    arch: Option<String>,
    /// Linear receiver: mrc or zf.
    #[arg(long)]
    receiver: Option<String>,
    /// Comma-separated CSI modes: perfect, ls.
    #[arg(long)]
    csi: Option<String>,
    /// Output directory [default: ./out/<experiment>-<seed>/].
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Use the full-scale trial count (10^4) instead of the desk-scale default (10^3).
    #[arg(long)]
    full_scale: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Multiplies the Sigma-Delta levels in the gain check (1 = design value).
    #[arg(long, default_value_t = 1.0)]
    alpha_scale: f64,
    /// Added to the steering phase in the in-sector noise check, degrees.
    #[arg(
        long,
        value_name = "DEG",
        default_value_t = 0.0,
        allow_negative_numbers = true
    )]
    phi_offset_deg: f64,
}

impl RunArgs {
    fn overrides(&self) -> Settings {
        Settings {
            scenario: ScenarioSection {
                m: self.m,
                d_over_lambda: self.d_over_lambda,
                k: self.k,
                l: self.l,
                theta0_deg: self.theta0_deg,
                spread_deg: self.spread_deg,
                snr_db: self.snr_db,
                phi_mode: self.phi_mode.clone(),
                phi_deg: self.phi_deg,
                seed: self.seed,
            },
            run: RunSection {
                experiment: self.experiment.clone(),
                trials: self.trials,
                arch: self.arch.clone(),
                receiver: self.receiver.clone(),
                csi: self.csi.clone(),
                full_scale: self.full_scale.then_some(true),
            },
        }
    }
}

enum Failure {
    Usage(String),
    Runtime(String),
    Validation,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig(_)
            | Error::ConfigParse(_)
            | Error::UnknownExperiment(_)
            | Error::InvalidParameter { .. } => Failure::Usage(e.to_string()),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(command: Command) -> Result<(), Failure> {
    match command {
        Command::Spectrum(a) => run(ExperimentKind::Spectrum, "fig1", &a),
        Command::Se(a) => run(ExperimentKind::Se, "fig3", &a),
        Command::PhiOpt(a) => run(ExperimentKind::PhiOpt, "fig2", &a),
        Command::Chanest(a) => run(ExperimentKind::ChanEst, "fig4", &a),
        Command::Validate(a) => validate(&a),
        Command::ListExperiments => {
            for name in BUILTIN {
                let s = builtin(name)?;
                println!("{name}\t{}\t{}", kind_name(s.kind), s.caption);
            }
            Ok(())
        }
    }
}

fn kind_name(kind: ExperimentKind) -> &'static str {
    match kind {
        ExperimentKind::Spectrum => "spectrum",
        ExperimentKind::Se => "se",
        ExperimentKind::PhiOpt => "phi-opt",
        ExperimentKind::ChanEst => "chanest",
    }
}

fn load(config: Option<&Path>) -> Result<Settings, Failure> {
    match config {
        None => Ok(Settings::default()),
        Some(p) => Settings::from_file(p).map_err(|e| match e {
            Error::Io(io) => Failure::Usage(format!("cannot read config {}: {io}", p.display())),
            other => Failure::Usage(format!("{}: {other}", p.display())),
        }),
    }
}

fn run(kind: ExperimentKind, default_experiment: &str, args: &RunArgs) -> Result<(), Failure> {
    let settings = load(args.config.as_deref())?.merged(&args.overrides());
    let spec = settings.to_spec(kind, default_experiment)?;
    let out = args
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(format!("{}-{}", spec.name, spec.seed)));
    let result = run_experiment(&spec)?;
    for path in result.write(&out)? {
        println!("{}", path.display());
    }
    eprintln!(
        "{} ({}) finished in {:.1} s",
        spec.name,
        kind_name(kind),
        result.wall_time_s
    );
    Ok(())
}

fn validate(args: &ValidateArgs) -> Result<(), Failure> {
    let report = validate_suite(Perturbation {
        alpha_scale: args.alpha_scale,
        phi_offset: args.phi_offset_deg.to_radians(),
    })?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Validation)
    }
}
