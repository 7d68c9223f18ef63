use std::path::PathBuf;

use clap::Args;
use vaporcell::atomic::all_d1_lines;
use vaporcell::data::linspace;
use vaporcell::io::{self, Summary};
use vaporcell::lineshape::{
    buffer_density_from_linewidth, fit_absorption as fit_od, linewidth_drift_report, optical_depth,
    synthesize_absorption, AbsorptionParams, LineProfile,
};
use vaporcell::sas::{detect_features, sas_spectrum, SasConfig};
use vaporcell::{Isotope, Spectrum};

use crate::{CliError, Ctx};

#[derive(Args, Debug)]
pub struct SimulateAbsorption {
    /// Output OD spectrum CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Pressure-broadened FWHM, GHz
    #[arg(long)]
    pub gamma_ghz: Option<f64>,
    /// Atomic density, m^-3
    #[arg(long)]
    pub density: Option<f64>,
    /// Line-centre shift, GHz
    #[arg(long)]
    pub shift_ghz: Option<f64>,
    #[arg(long)]
    pub path_mm: Option<f64>,
    /// Relative Gaussian noise on each point
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
    /// Use a Voigt profile with this Doppler FWHM, GHz
    #[arg(long)]
    pub doppler_ghz: Option<f64>,
}

#[derive(Args, Debug)]
pub struct FitAbsorption {
    /// OD spectrum CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Write the fitted model on the input grid
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Starting FWHM, GHz
    #[arg(long)]
    pub gamma_ghz: Option<f64>,
    /// Starting density, m^-3
    #[arg(long)]
    pub density: Option<f64>,
    /// Starting shift, GHz
    #[arg(long)]
    pub shift_ghz: Option<f64>,
    #[arg(long)]
    pub path_mm: Option<f64>,
    #[arg(long)]
    pub doppler_ghz: Option<f64>,
}

#[derive(Args, Debug)]
pub struct AgingReport {
    /// CSV of (day, linewidth GHz)
    #[arg(long)]
    pub input: PathBuf,
    /// Allowed drift as a fraction of the mean linewidth
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateSas {
    /// Output transmission spectrum CSV
    #[arg(long)]
    pub out: PathBuf,
    /// rb85, rb87 or natural
    #[arg(long, default_value = "natural")]
    pub isotope: String,
    #[arg(long)]
    pub temperature_k: Option<f64>,
    #[arg(long)]
    pub step_ghz: Option<f64>,
}

fn absorption_params(
    ctx: &Ctx,
    gamma: Option<f64>,
    density: Option<f64>,
    shift: Option<f64>,
    path: Option<f64>,
    doppler: Option<f64>,
) -> Result<AbsorptionParams, CliError> {
    let s = &ctx.settings;
    let atoms = s.atomic()?;
    Ok(AbsorptionParams {
        atomic_density: s.or(density, "absorption.density_m3")?,
        linewidth: s.or(gamma, "absorption.linewidth_ghz")?,
        center_shift: s.or(shift, "absorption.center_shift_ghz")?,
        path_length: s.or(path, "absorption.path_length_mm")?,
        isotope_weights: atoms.natural_weights(),
        profile: match doppler {
            Some(d) => LineProfile::Voigt { doppler_fwhm: d },
            None => LineProfile::Lorentzian,
        },
        ..AbsorptionParams::default()
    })
}

pub fn simulate_absorption(ctx: &Ctx, a: SimulateAbsorption) -> Result<(), CliError> {
    let s = &ctx.settings;
    let p = absorption_params(ctx, a.gamma_ghz, a.density, a.shift_ghz, a.path_mm, a.doppler_ghz)?;
    let lines = all_d1_lines(&s.atomic()?);
    let points = s.count(a.points, "absorption.points")?;
    let grid = linspace(s.f64("absorption.start_ghz")?, s.f64("absorption.stop_ghz")?, points);
    let noise = s.or(a.noise, "absorption.noise")?;
    let spectrum = synthesize_absorption(grid, &p, &lines, noise, ctx.seed)?;
    io::write_spectrum(&a.out, &spectrum)?;
    let mut sum = Summary::new();
    sum.put("command", "simulate-absorption")
        .put("points", spectrum.len())
        .put("density_m3", p.atomic_density)
        .put("linewidth_ghz", p.linewidth)
        .put("center_shift_ghz", p.center_shift)
        .put("path_length_mm", p.path_length)
        .put("noise", noise)
        .put("seed", ctx.seed)
        .put("peak_od", spectrum.y().iter().fold(0.0, |m: f64, v| m.max(*v)));
    ctx.finish(&sum, &a.out)
}

pub fn fit_absorption(ctx: &Ctx, a: FitAbsorption) -> Result<(), CliError> {
    let s = &ctx.settings;
    let atoms = s.atomic()?;
    let data = io::read_spectrum(&a.input)?;
    let start = absorption_params(ctx, a.gamma_ghz, a.density, a.shift_ghz, a.path_mm, a.doppler_ghz)?;
    let lines = all_d1_lines(&atoms);
    let fit = fit_od(&data, &start, &lines)?;
    let se = fit.fit.std_errors();
    let amg = buffer_density_from_linewidth(fit.params.linewidth, atoms.buffer_gas("N2")?)?;
    let mut sum = Summary::new();
    sum.put("command", "fit-absorption")
        .put("points", data.len())
        .put("density_m3", fit.params.atomic_density)
        .put("density_se", se[0])
        .put("linewidth_ghz", fit.params.linewidth)
        .put("linewidth_se", se[1])
        .put("center_shift_ghz", fit.params.center_shift)
        .put("center_shift_se", se[2])
        .put("buffer_density_amg", amg)
        .put("iterations", fit.fit.iterations)
        .put("residual_norm", fit.fit.residual_norm);
    if let Some(out) = &a.out {
        let model = Spectrum::from_fn(data.x().to_vec(), "GHz", "OD", |nu| {
            optical_depth(nu, &fit.params, &lines)
        })?;
        io::write_spectrum(out, &model)?;
    }
    ctx.finish(&sum, a.out.as_ref().unwrap_or(&a.input))
}

pub fn aging_report(ctx: &Ctx, a: AgingReport) -> Result<(), CliError> {
    let (_, _, series) = io::read_pairs(&a.input)?;
    let threshold = ctx.settings.or(a.threshold, "aging.relative_threshold")?;
    let rep = linewidth_drift_report(&series, threshold)?;
    let atoms = ctx.settings.atomic()?;
    let n2 = atoms.buffer_gas("N2")?;
    let first = buffer_density_from_linewidth(series[0].1, n2)?;
    let last = buffer_density_from_linewidth(series[series.len() - 1].1, n2)?;
    let mut sum = Summary::new();
    sum.put("command", "aging-report")
        .put("samples", series.len())
        .put("mean_linewidth_ghz", rep.mean)
        .put("slope_ghz_per_day", rep.slope)
        .put("total_drift_ghz", rep.total_drift)
        .put("max_deviation_ghz", rep.max_deviation)
        .put("threshold_ghz", rep.threshold)
        .put("buffer_density_first_amg", first)
        .put("buffer_density_last_amg", last)
        .put("pass", rep.pass);
    ctx.finish(&sum, &a.input)
}

pub fn simulate_sas(ctx: &Ctx, a: SimulateSas) -> Result<(), CliError> {
    let s = &ctx.settings;
    let atoms = s.atomic()?;
    let isotopes = match a.isotope.to_ascii_lowercase().as_str() {
        "natural" | "all" => atoms.isotopes().to_vec(),
        name => {
            let iso: Isotope = name.parse()?;
            let mut spec = atoms.isotope(iso).clone();
            spec.abundance = 1.0;
            vec![spec]
        }
    };
    let mut cfg = SasConfig::natural(&isotopes);
    cfg.temperature = s.or(a.temperature_k, "sas.temperature_k")?;
    cfg.lamb_dip_width = s.f64("sas.lamb_dip_width_mhz")?;
    cfg.lamb_dip_depth = s.f64("sas.lamb_dip_depth")?;
    cfg.optical_depth = s.f64("sas.optical_depth")?;
    cfg.start = s.f64("sas.start_ghz")?;
    cfg.stop = s.f64("sas.stop_ghz")?;
    cfg.step = s.or(a.step_ghz, "sas.step_ghz")?;
    let spectrum = sas_spectrum(&cfg)?;
    io::write_spectrum(&a.out, &spectrum)?;
    let expected = cfg.features();
    let detected = detect_features(&spectrum);
    let matched = expected
        .iter()
        .filter(|f| detected.iter().any(|d| (d - f.frequency).abs() <= cfg.step))
        .count();
    let mut sum = Summary::new();
    sum.put("command", "simulate-sas")
        .put("points", spectrum.len())
        .put("temperature_k", cfg.temperature)
        .put("features_expected", expected.len())
        .put("features_detected", detected.len())
        .put("features_matched", matched);
    for (k, f) in expected.iter().enumerate() {
        sum.put(format!("feature_{:02}", k + 1), format!("{} GHz {}", f.frequency, f.label));
    }
    ctx.finish(&sum, &a.out)
}
