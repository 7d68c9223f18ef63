use std::path::{Path, PathBuf};

use clap::Args;
use vaporcell::io::{self, Summary};
use vaporcell::sigproc::{welch_asd, PsdEstimate, WelchOptions};
use vaporcell::sns::{
    fit_sns as fit_peaks, initial_model, larmor_frequency, psd_in_khz, simulate_spin_noise,
    SpinNoiseConfig,
};
use vaporcell::Spectrum;

use crate::{CliError, Ctx};

#[derive(Args, Debug)]
pub struct SimulateSns {
    /// Output Welch ASD CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the Faraday-rotation time series
    #[arg(long)]
    pub timeseries_out: Option<PathBuf>,
    /// Bias field, uT
    #[arg(long)]
    pub field_ut: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    /// Peak half-width, kHz
    #[arg(long)]
    pub hwhm_khz: Option<f64>,
    #[arg(long)]
    pub segment_length: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitSns {
    /// Welch ASD CSV from simulate-sns, or a kHz power spectrum CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Write the fitted spectrum
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Field used to place the starting peaks, uT
    #[arg(long)]
    pub field_ut: Option<f64>,
    /// Starting half-width, kHz
    #[arg(long)]
    pub hwhm_khz: Option<f64>,
    #[arg(long)]
    pub fmin_khz: Option<f64>,
    #[arg(long)]
    pub fmax_khz: Option<f64>,
}

pub fn simulate_sns(ctx: &Ctx, a: SimulateSns) -> Result<(), CliError> {
    let s = &ctx.settings;
    let atoms = s.atomic()?;
    let field = s.or(a.field_ut, "sns.field_ut")?;
    let hwhm = s.or(a.hwhm_khz, "sns.hwhm_khz")?;
    let amp = s.f64("sns.amplitude_rad")?;
    let mut cfg = SpinNoiseConfig::natural(&atoms, field);
    cfg.duration = s.or(a.duration_s, "sns.duration_s")?;
    cfg.sample_rate = s.or(a.sample_rate, "sns.sample_rate_hz")?;
    for (src, spec) in cfg.sources.iter_mut().zip(atoms.isotopes()) {
        src.correlation_time = 1.0 / (2.0 * std::f64::consts::PI * hwhm * 1e3);
        src.amplitude = amp * spec.abundance.sqrt();
    }
    let ts = simulate_spin_noise(&cfg, ctx.seed)?;
    let seg = s.count(a.segment_length, "sns.segment_length")?;
    let est = welch_asd(&ts, &WelchOptions::new(seg))?;
    io::write_text(&a.out, est.to_csv())?;
    if let Some(path) = &a.timeseries_out {
        io::write_timeseries(path, &ts)?;
    }
    let mut sum = Summary::new();
    sum.put("command", "simulate-sns")
        .put("field_ut", field)
        .put("samples", ts.len())
        .put("sample_rate_hz", ts.fs())
        .put("seed", ctx.seed);
    for spec in atoms.isotopes() {
        sum.put(
            format!("{}_larmor_khz", spec.name().to_lowercase()),
            larmor_frequency(spec, field),
        );
    }
    sum.put("variance_rad2", ts.variance())
        .put("psd_total_power_rad2", est.total_power())
        .put("resolution_hz", est.resolution())
        .put("enbw_hz", est.enbw);
    ctx.finish(&sum, &a.out)
}

fn read_power_spectrum(path: &Path) -> Result<Spectrum, CliError> {
    let text = io::read_text(path)?;
    let first = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .unwrap_or("");
    if first.trim_start().starts_with("f_Hz") {
        Ok(psd_in_khz(&PsdEstimate::from_csv(text.as_bytes())?)?)
    } else {
        Ok(io::spectrum_from_csv(text.as_bytes())?)
    }
}

pub fn fit_sns(ctx: &Ctx, a: FitSns) -> Result<(), CliError> {
    let s = &ctx.settings;
    let atoms = s.atomic()?;
    let field = s.or(a.field_ut, "sns.field_ut")?;
    let hwhm = s.or(a.hwhm_khz, "sns.hwhm_khz")?;
    let full = read_power_spectrum(&a.input)?;
    let centres: Vec<f64> = atoms.isotopes().iter().map(|i| larmor_frequency(i, field)).collect();
    let lo = a.fmin_khz.unwrap_or(0.5 * centres.iter().fold(f64::INFINITY, |m, v| m.min(*v)));
    let hi = a.fmax_khz.unwrap_or(1.5 * centres.iter().fold(0.0, |m: f64, v| m.max(*v)));
    let (x, y): (Vec<f64>, Vec<f64>) = full.iter().filter(|(f, _)| *f >= lo && *f <= hi).unzip();
    let band = Spectrum::new(x, y, full.x_unit.clone(), full.y_unit.clone())?;
    let start = initial_model(&band, &centres, hwhm);
    let fit = fit_peaks(&band, &start)?;
    for w in &fit.warnings {
        eprintln!("warning: {w}");
    }
    let se = fit.fit.std_errors();
    let mut sum = Summary::new();
    sum.put("command", "fit-sns").put("points", band.len());
    for (k, (peak, spec)) in fit.model.peaks.iter().zip(atoms.isotopes()).enumerate() {
        let name = spec.name().to_lowercase();
        sum.put(format!("{name}_larmor_khz"), peak.larmor)
            .put(format!("{name}_larmor_se"), se[3 * k])
            .put(format!("{name}_hwhm_khz"), peak.hwhm)
            .put(format!("{name}_area"), peak.area)
            .put(format!("{name}_field_ut"), peak.larmor / spec.gyromagnetic_ratio);
    }
    if fit.model.peaks.len() == 2 && fit.model.peaks[0].larmor > 0.0 {
        sum.put("larmor_ratio", fit.model.peaks[1].larmor / fit.model.peaks[0].larmor);
    }
    sum.put("background", fit.model.background)
        .put("iterations", fit.fit.iterations)
        .put("unresolved_warnings", fit.warnings.len());
    if let Some(out) = &a.out {
        let model = Spectrum::from_fn(band.x().to_vec(), "kHz", band.y_unit.clone(), |f| {
            fit.model.eval(f)
        })?;
        io::write_spectrum(out, &model)?;
    }
    ctx.finish(&sum, a.out.as_ref().unwrap_or(&a.input))
}
