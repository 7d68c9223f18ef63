//! `vaporcell` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use vaporcell::io::Summary;

mod chip;
mod resonance;
mod settings;
mod spectra;
mod spin;

pub use settings::{Settings, CONFIG_ENV, DEFAULTS};

pub const DEFAULT_SEED: u64 = 20_240_611;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_COMPUTATION: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] vaporcell::Error),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

#[derive(Parser, Debug)]
#[command(name = "vaporcell", version, about = "Vapor-cell sensor simulation and analysis")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug)]
pub struct GlobalArgs {
    /// Configuration file layered over the defaults and $VAPORCELL_CONFIG
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override one configuration key
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Summary file (default: `<output>.summary.txt`)
    #[arg(long, global = true, value_name = "PATH")]
    pub summary: Option<PathBuf>,
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Synthesize a D1 optical-depth spectrum
    SimulateAbsorption(spectra::SimulateAbsorption),
    /// Fit density, linewidth and shift to an optical-depth spectrum
    FitAbsorption(spectra::FitAbsorption),
    /// Linewidth drift over an aging run
    AgingReport(spectra::AgingReport),
    /// Synthesize a saturated-absorption spectrum and list its features
    SimulateSas(spectra::SimulateSas),
    /// Simulate spin-noise Faraday rotation and its spectrum
    SimulateSns(spin::SimulateSns),
    /// Fit Larmor peaks to a spin-noise spectrum
    FitSns(spin::FitSns),
    /// Synthesize an in-phase/quadrature zero-field resonance pair
    SimulateHanle(resonance::SimulateHanle),
    /// Fit the zero-field resonance pair
    FitHanle(resonance::FitHanle),
    /// Bloch simulation of the field-modulated magnetometer
    SimulateModulated(resonance::SimulateModulated),
    /// Lock-in demodulation of a time series
    Demodulate(resonance::Demodulate),
    /// Magnetic sensitivity spectrum from a lock-in output record
    CalibrateSensitivity(resonance::CalibrateSensitivity),
    /// Closed-loop heater simulation
    SimulateThermal(chip::SimulateThermal),
    /// Resistance from an I-V sweep
    FitIv(chip::FitIv),
    /// Residual field coefficient from current/field pairs
    FitResidualField(chip::FitResidualField),
}

/// Shared state handed to every subcommand.
pub struct Ctx {
    pub settings: Settings,
    pub seed: u64,
    pub summary: Option<PathBuf>,
    pub verbose: u8,
}

impl Ctx {
    pub fn log(&self, msg: impl AsRef<str>) {
        if self.verbose > 0 {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Writes the summary next to `primary` (or to `--summary`) and echoes it.
    pub fn finish(&self, summary: &Summary, primary: &Path) -> Result<(), CliError> {
        let path = self.summary.clone().unwrap_or_else(|| {
            let mut name = primary.as_os_str().to_owned();
            name.push(".summary.txt");
            PathBuf::from(name)
        });
        let text = summary.render();
        vaporcell::io::write_text(&path, &text)?;
        print!("{text}");
        self.log(format!("summary written to {}", path.display()));
        Ok(())
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let settings = Settings::load(cli.global.config.as_deref(), &cli.global.set)?;
    let ctx = Ctx {
        settings,
        seed: cli.global.seed,
        summary: cli.global.summary,
        verbose: cli.global.verbose,
    };
    ctx.log(format!("configuration: {}", ctx.settings.sources.join(" < ")));
    match cli.command {
        Command::SimulateAbsorption(a) => spectra::simulate_absorption(&ctx, a),
        Command::FitAbsorption(a) => spectra::fit_absorption(&ctx, a),
        Command::AgingReport(a) => spectra::aging_report(&ctx, a),
        Command::SimulateSas(a) => spectra::simulate_sas(&ctx, a),
        Command::SimulateSns(a) => spin::simulate_sns(&ctx, a),
        Command::FitSns(a) => spin::fit_sns(&ctx, a),
        Command::SimulateHanle(a) => resonance::simulate_hanle(&ctx, a),
        Command::FitHanle(a) => resonance::fit_hanle(&ctx, a),
        Command::SimulateModulated(a) => resonance::simulate_modulated(&ctx, a),
        Command::Demodulate(a) => resonance::demodulate(&ctx, a),
        Command::CalibrateSensitivity(a) => resonance::calibrate_sensitivity(&ctx, a),
        Command::SimulateThermal(a) => chip::simulate_thermal(&ctx, a),
        Command::FitIv(a) => chip::fit_iv(&ctx, a),
        Command::FitResidualField(a) => chip::fit_residual_field(&ctx, a),
    }
}

/// Parses `argv`, runs one subcommand and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    let _ = e.print();
                    0
                }
                _ => {
                    let _ = e.print();
                    eprintln!("\n{}", Cli::command().render_help());
                    EXIT_USAGE
                }
            };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}\n\n{}", Cli::command().render_help());
            EXIT_USAGE
        }
        Err(CliError::Core(e)) => {
            eprintln!("error: {e}");
            EXIT_COMPUTATION
        }
    }
}
