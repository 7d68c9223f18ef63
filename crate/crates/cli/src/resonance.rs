use std::fmt::Write as _;
use std::path::PathBuf;

use clap::Args;
use vaporcell::data::linspace;
use vaporcell::hanle::{
    fit_zero_field_resonance, modulated_response, relaxation_from_linewidth, synthesize_resonance,
    BlochConfig, HanleParams,
};
use vaporcell::io::{self, Summary};
use vaporcell::sigproc::{
    lock_in, noise_floor, sensitivity, synthesize_quadrature, welch_asd, CalibrationInputs,
    FrequencyResponse, LowPass, SensorNoise, Slope, WelchOptions,
};

use crate::{CliError, Ctx};

#[derive(Args, Debug)]
pub struct SimulateHanle {
    #[arg(long)]
    pub out_in_phase: PathBuf,
    #[arg(long)]
    pub out_quadrature: PathBuf,
    /// Resonance half-width, nT
    #[arg(long)]
    pub delta_b_nt: Option<f64>,
    /// Residual field, nT
    #[arg(long)]
    pub bx0_nt: Option<f64>,
    /// Noise as a fraction of each channel's amplitude
    #[arg(long)]
    pub noise: Option<f64>,
    /// Sweep covers +/- span, nT
    #[arg(long)]
    pub span_nt: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

#[derive(Args, Debug)]
pub struct FitHanle {
    #[arg(long)]
    pub in_phase: PathBuf,
    #[arg(long)]
    pub quadrature: PathBuf,
    /// Starting half-width, nT (default: read off the data)
    #[arg(long)]
    pub delta_b_nt: Option<f64>,
    /// Nuclear slowing factor dividing the electron gyromagnetic ratio
    #[arg(long)]
    pub slowing_factor: Option<f64>,
}

#[derive(Args, Debug)]
pub struct SimulateModulated {
    /// Output time series CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Static transverse field, nT
    #[arg(long, default_value_t = 0.0)]
    pub test_field_nt: f64,
    #[arg(long)]
    pub mod_freq_hz: Option<f64>,
    #[arg(long)]
    pub mod_amp_nt: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub pumping_rate: Option<f64>,
    #[arg(long)]
    pub relaxation_rate: Option<f64>,
    /// Write a synthetic lock-in quadrature noise record instead
    #[arg(long)]
    pub quadrature_noise: bool,
    /// Calibration tone added to the noise record, Hz
    #[arg(long, requires = "quadrature_noise")]
    pub tone_hz: Option<f64>,
    /// Tone amplitude, fT
    #[arg(long, requires = "tone_hz")]
    pub tone_ft: Option<f64>,
    /// Leave out magnetic noise (electronic floor only)
    #[arg(long, requires = "quadrature_noise")]
    pub electronic_only: bool,
}

#[derive(Args, Debug)]
pub struct Demodulate {
    /// Input time series CSV
    #[arg(long)]
    pub input: PathBuf,
    /// Write t, in-phase, quadrature
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub ref_freq_hz: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    pub ref_phase_rad: f64,
    /// Single-pole low-pass cutoff; default is a boxcar over whole periods
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    #[arg(long)]
    pub periods: Option<usize>,
    /// Averages start after this time, s
    #[arg(long)]
    pub settle_s: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CalibrateSensitivity {
    /// Lock-in output record, V
    #[arg(long)]
    pub timeseries: PathBuf,
    /// Output sensitivity spectrum CSV
    #[arg(long)]
    pub out: PathBuf,
    /// Direct slope dv/dB, V/nT
    #[arg(long, conflicts_with_all = ["delta_b", "a_amp"])]
    pub slope: Option<f64>,
    /// Dispersive half-width, nT
    #[arg(long, requires = "a_amp")]
    pub delta_b: Option<f64>,
    /// Dispersive peak-to-peak height, V
    #[arg(long, requires = "delta_b")]
    pub a_amp: Option<f64>,
    /// Single-pole response cutoff, Hz; 0 for a flat response
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    #[arg(long)]
    pub segment_length: Option<usize>,
    #[arg(long)]
    pub band_lo_hz: Option<f64>,
    #[arg(long)]
    pub band_hi_hz: Option<f64>,
}

fn configured_params(ctx: &Ctx, delta_b: Option<f64>, bx0: Option<f64>) -> Result<HanleParams, CliError> {
    let s = &ctx.settings;
    Ok(HanleParams {
        a0: s.f64("hanle.a0")?,
        a1: s.f64("hanle.a1")?,
        c0: s.f64("hanle.c0")?,
        c1: s.f64("hanle.c1")?,
        bx0: s.or(bx0, "hanle.bx0_nt")?,
        delta_b: s.or(delta_b, "hanle.delta_b_nt")?,
    })
}

fn gyromagnetic(ctx: &Ctx) -> Result<f64, CliError> {
    Ok(2.0 * std::f64::consts::PI * ctx.settings.f64("hanle.gyromagnetic_hz_per_nt")?)
}

fn put_params(sum: &mut Summary, p: &HanleParams) {
    sum.put("a0", p.a0)
        .put("a1", p.a1)
        .put("c0", p.c0)
        .put("c1", p.c1)
        .put("bx0_nt", p.bx0)
        .put("delta_b_nt", p.delta_b);
}

pub fn simulate_hanle(ctx: &Ctx, a: SimulateHanle) -> Result<(), CliError> {
    let s = &ctx.settings;
    let p = configured_params(ctx, a.delta_b_nt, a.bx0_nt)?;
    let span = s.or(a.span_nt, "hanle.span_nt")?;
    let grid = linspace(-span, span, s.count(a.points, "hanle.points")?);
    let noise = s.or(a.noise, "hanle.noise")?;
    let (ip, q) = synthesize_resonance(&grid, &p, noise, ctx.seed)?;
    io::write_spectrum(&a.out_in_phase, &ip)?;
    io::write_spectrum(&a.out_quadrature, &q)?;
    let mut sum = Summary::new();
    sum.put("command", "simulate-hanle").put("points", grid.len());
    put_params(&mut sum, &p);
    sum.put("noise", noise).put("seed", ctx.seed);
    ctx.finish(&sum, &a.out_in_phase)
}

pub fn fit_hanle(ctx: &Ctx, a: FitHanle) -> Result<(), CliError> {
    let ip = io::read_spectrum(&a.in_phase)?;
    let q = io::read_spectrum(&a.quadrature)?;
    let mut start = HanleParams::initial_guess(&ip, &q);
    if let Some(d) = a.delta_b_nt {
        start.delta_b = d;
    }
    let fit = fit_zero_field_resonance(&ip, &q, &start)?;
    let se = fit.fit.std_errors();
    let q_factor = ctx.settings.or(a.slowing_factor, "hanle.slowing_factor")?;
    let rate = relaxation_from_linewidth(fit.params.delta_b, gyromagnetic(ctx)?, q_factor)?;
    let mut sum = Summary::new();
    sum.put("command", "fit-hanle").put("points", ip.len());
    put_params(&mut sum, &fit.params);
    sum.put("bx0_se", se[4])
        .put("delta_b_se", se[5])
        .put("slowing_factor", q_factor)
        .put("relaxation_rate_per_s", rate)
        .put("pumping_rate_at_half_polarization_per_s", 0.5 * rate)
        .put("dispersive_peak_to_peak", fit.params.a1.abs() / fit.params.delta_b)
        .put("iterations", fit.fit.iterations);
    ctx.finish(&sum, &a.in_phase)
}

pub fn simulate_modulated(ctx: &Ctx, a: SimulateModulated) -> Result<(), CliError> {
    let s = &ctx.settings;
    let mut sum = Summary::new();
    sum.put("command", "simulate-modulated");
    if a.quadrature_noise {
        let mut model = SensorNoise {
            magnetic: s.f64("sensitivity.magnetic_noise_ft")?,
            electronic: s.f64("sensitivity.electronic_noise_ft")?,
            tone: a.tone_hz.map(|f| (f, a.tone_ft.unwrap_or(100.0))),
            slope: s.f64("sensitivity.slope_v_per_nt")?,
            response: response(s.f64("sensitivity.response_cutoff_hz")?),
            sample_rate: s.or(a.sample_rate, "sensitivity.sample_rate_hz")?,
            duration: s.or(a.duration_s, "sensitivity.duration_s")?,
        };
        if a.electronic_only {
            model.magnetic = 0.0;
        }
        let ts = synthesize_quadrature(&model, ctx.seed)?;
        io::write_timeseries(&a.out, &ts)?;
        sum.put("mode", "quadrature-noise")
            .put("samples", ts.len())
            .put("magnetic_noise_ft", model.magnetic)
            .put("electronic_noise_ft", model.electronic)
            .put("slope_v_per_nt", model.slope)
            .put("seed", ctx.seed);
        if let Some((f, amp)) = model.tone {
            sum.put("tone_hz", f).put("tone_ft", amp);
        }
        return ctx.finish(&sum, &a.out);
    }
    let cfg = BlochConfig {
        pumping_rate: s.or(a.pumping_rate, "bloch.pumping_rate")?,
        relaxation_rate: s.or(a.relaxation_rate, "bloch.relaxation_rate")?,
        gyromagnetic: gyromagnetic(ctx)?,
        duration: s.or(a.duration_s, "bloch.duration_s")?,
        sample_rate: s.or(a.sample_rate, "bloch.sample_rate_hz")?,
        absorption_contrast: s.f64("bloch.contrast")?,
        ..BlochConfig::default()
    };
    let freq = s.or(a.mod_freq_hz, "modulation.frequency_hz")?;
    let amp = s.or(a.mod_amp_nt, "modulation.amplitude_nt")?;
    let out = modulated_response(&cfg, freq, amp, a.test_field_nt)?;
    io::write_timeseries(&a.out, &out.transmitted)?;
    sum.put("mode", "bloch")
        .put("samples", out.transmitted.len())
        .put("sample_rate_hz", cfg.sample_rate)
        .put("mod_freq_hz", freq)
        .put("mod_amp_nt", amp)
        .put("test_field_nt", a.test_field_nt)
        .put("pumping_rate_per_s", cfg.pumping_rate)
        .put("relaxation_rate_per_s", cfg.relaxation_rate)
        .put("mean_transmitted", out.transmitted.mean())
        .put("final_sz", out.final_spin[2]);
    ctx.finish(&sum, &a.out)
}

fn response(cutoff: f64) -> FrequencyResponse {
    if cutoff > 0.0 {
        FrequencyResponse::SinglePole { cutoff }
    } else {
        FrequencyResponse::Flat
    }
}

pub fn demodulate(ctx: &Ctx, a: Demodulate) -> Result<(), CliError> {
    let s = &ctx.settings;
    let ts = io::read_timeseries(&a.input)?;
    let freq = s.or(a.ref_freq_hz, "modulation.frequency_hz")?;
    let filter = match a.cutoff_hz {
        Some(cutoff) => LowPass::SinglePole { cutoff },
        None => LowPass::Boxcar {
            periods: s.count(a.periods, "lockin.periods")?,
        },
    };
    let settle = s.or(a.settle_s, "lockin.settle_s")?;
    let (x, y) = lock_in(&ts, freq, a.ref_phase_rad, filter)?;
    let start = (settle * ts.fs()).ceil() as usize;
    if start >= ts.len() {
        return Err(CliError::Usage(format!(
            "settling time {settle} s is longer than the {} s record",
            ts.duration()
        )));
    }
    let (xm, ym) = (x.tail(start).mean(), y.tail(start).mean());
    if let Some(out) = &a.out {
        let mut text = format!("{},in_phase_{},quadrature_{}\n", ts.t_unit, ts.y_unit, ts.y_unit);
        for (k, t) in x.times().enumerate() {
            writeln!(text, "{t},{},{}", x.values()[k], y.values()[k]).unwrap();
        }
        io::write_text(out, text)?;
    }
    let mut sum = Summary::new();
    sum.put("command", "demodulate")
        .put("ref_freq_hz", freq)
        .put("ref_phase_rad", a.ref_phase_rad)
        .put("settle_s", settle)
        .put("in_phase", xm)
        .put("quadrature", ym)
        .put("magnitude", xm.hypot(ym))
        .put("phase_rad", ym.atan2(xm));
    ctx.finish(&sum, a.out.as_ref().unwrap_or(&a.input))
}

pub fn calibrate_sensitivity(ctx: &Ctx, a: CalibrateSensitivity) -> Result<(), CliError> {
    let s = &ctx.settings;
    let ts = io::read_timeseries(&a.timeseries)?;
    let slope = match (a.slope, a.delta_b, a.a_amp) {
        (Some(v), _, _) => Slope::Direct(v),
        (None, Some(delta_b), Some(peak_to_peak)) => Slope::Surrogate {
            delta_b,
            peak_to_peak,
        },
        _ => Slope::Direct(s.f64("sensitivity.slope_v_per_nt")?),
    };
    let cal = CalibrationInputs {
        slope,
        response: response(s.or(a.cutoff_hz, "sensitivity.response_cutoff_hz")?),
    };
    let seg = s.count(a.segment_length, "sensitivity.segment_length")?;
    let est = welch_asd(&ts, &WelchOptions::new(seg))?;
    let sens = sensitivity(&est, &cal)?;
    let lo = s.or(a.band_lo_hz, "sensitivity.band_lo_hz")?;
    let hi = s.or(a.band_hi_hz, "sensitivity.band_hi_hz")?;
    let floor = noise_floor(&sens, lo, hi)?;
    io::write_spectrum(&a.out, &sens)?;
    let mut sum = Summary::new();
    sum.put("command", "calibrate-sensitivity")
        .put("slope_v_per_nt", slope.value()?)
        .put("band_lo_hz", lo)
        .put("band_hi_hz", hi)
        .put("noise_floor_ft_per_rthz", floor)
        .put("resolution_hz", est.resolution())
        .put("enbw_hz", est.enbw)
        .put("segments", est.segments);
    ctx.finish(&sum, &a.out)
}
