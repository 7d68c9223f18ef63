use std::path::PathBuf;

use clap::{Args, ValueEnum};
use vaporcell::io::{self, Summary};
use vaporcell::thermal::{
    fit_residual_field as fit_field, resistance_from_iv, simulate_pid, stability_report, IvModel,
    PidGains, ThermalPlant, CELSIUS_OFFSET,
};

use crate::{CliError, Ctx};

#[derive(Args, Debug)]
pub struct SimulateThermal {
    /// Output temperature time series CSV
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub setpoint_c: Option<f64>,
    #[arg(long)]
    pub duration_s: Option<f64>,
    #[arg(long)]
    pub dt_s: Option<f64>,
    #[arg(long)]
    pub kp: Option<f64>,
    #[arg(long)]
    pub ki: Option<f64>,
    #[arg(long)]
    pub kd: Option<f64>,
    /// Sensor noise standard deviation, K
    #[arg(long)]
    pub sensor_noise_k: Option<f64>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Ohmic,
    Affine,
}

#[derive(Args, Debug)]
pub struct FitIv {
    /// CSV of (V, I) pairs
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Model::Ohmic)]
    pub model: Model,
}

#[derive(Args, Debug)]
pub struct FitResidualField {
    /// CSV of (current mA, field nT) pairs
    #[arg(long)]
    pub input: PathBuf,
}

pub fn simulate_thermal(ctx: &Ctx, a: SimulateThermal) -> Result<(), CliError> {
    let s = &ctx.settings;
    let plant = ThermalPlant {
        time_constant: s.f64("thermal.time_constant_s")?,
        gain: s.f64("thermal.gain_k_per_w")?,
        ambient: s.f64("thermal.ambient_k")?,
        sensor_noise_std: s.or(a.sensor_noise_k, "thermal.sensor_noise_k")?,
        heater_resistance: s.f64("thermal.heater_ohm")?,
        sensor_resistance_25c: s.f64("thermal.sensor_ohm")?,
        sensor_tempco: s.f64("thermal.sensor_tempco_ohm_per_k")?,
    };
    let setpoint = s.or(a.setpoint_c, "thermal.setpoint_c")? + CELSIUS_OFFSET;
    let gains = PidGains {
        kp: s.or(a.kp, "thermal.kp")?,
        ki: s.or(a.ki, "thermal.ki")?,
        kd: s.or(a.kd, "thermal.kd")?,
        output_min: s.f64("thermal.power_min_w")?,
        output_max: s.f64("thermal.power_max_w")?,
        setpoint,
    };
    let duration = s.or(a.duration_s, "thermal.duration_s")?;
    let dt = s.or(a.dt_s, "thermal.dt_s")?;
    let run = simulate_pid(&plant, &gains, duration, dt, ctx.seed)?;
    io::write_timeseries(&a.out, &run.temperature)?;
    let hold = s.f64("thermal.hold_start_s")?;
    let rep = stability_report(&run.temperature, setpoint, s.f64("thermal.settle_band_k")?, hold)?;
    let meas = stability_report(&run.measured, setpoint, f64::INFINITY, hold)?;
    let p_final = run.power.tail(run.power.len().saturating_sub(100)).mean();
    let mut sum = Summary::new();
    sum.put("command", "simulate-thermal")
        .put("setpoint_k", setpoint)
        .put("samples", run.temperature.len())
        .put("settling_time_s", rep.settling_time)
        .put("peak_deviation_mk", rep.peak_deviation * 1e3)
        .put("mean_error_mk", rep.mean_error * 1e3)
        .put("std_mk", rep.std_dev * 1e3)
        .put("sensor_peak_deviation_mk", meas.peak_deviation * 1e3)
        .put("holding_power_w", p_final)
        .put("heater_voltage_v", plant.heater_voltage(p_final))
        .put("sensor_resistance_ohm", plant.sensor_resistance(setpoint))
        .put("seed", ctx.seed);
    ctx.finish(&sum, &a.out)
}

pub fn fit_iv(ctx: &Ctx, a: FitIv) -> Result<(), CliError> {
    let (_, _, iv) = io::read_pairs(&a.input)?;
    let model = match a.model {
        Model::Ohmic => IvModel::Ohmic,
        Model::Affine => IvModel::Affine,
    };
    let fit = resistance_from_iv(&iv, model)?;
    let mut sum = Summary::new();
    sum.put("command", "fit-iv")
        .put("points", iv.len())
        .put("model", format!("{:?}", a.model).to_lowercase())
        .put("resistance_ohm", fit.resistance)
        .put("resistance_se", fit.std_error)
        .put("offset_v", fit.offset);
    ctx.finish(&sum, &a.input)
}

pub fn fit_residual_field(ctx: &Ctx, a: FitResidualField) -> Result<(), CliError> {
    let (_, _, pairs) = io::read_pairs(&a.input)?;
    let fit = fit_field(&pairs)?;
    let se = fit.fit.std_errors();
    let mut sum = Summary::new();
    sum.put("command", "fit-residual-field")
        .put("points", pairs.len())
        .put("slope_nt_per_ma", fit.slope)
        .put("slope_se", se[0])
        .put("intercept_nt", fit.intercept)
        .put("intercept_se", se[1]);
    ctx.finish(&sum, &a.input)
}
