//! Heater/sensor chip: first-order thermal plant under discrete PID control,
//! residual field from heater current, and resistance from I–V sweeps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::TimeSeries;
use crate::error::{Error, Result};
use crate::fitkit::{least_squares, CurveFit, FitResult, LmOptions};

pub const CELSIUS_OFFSET: f64 = 273.15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThermalPlant {
    /// s
    pub time_constant: f64,
    /// K/W
    pub gain: f64,
    /// K
    pub ambient: f64,
    /// K
    pub sensor_noise_std: f64,
    /// Ω
    pub heater_resistance: f64,
    /// Ω at 25 °C
    pub sensor_resistance_25c: f64,
    /// Ω/K
    pub sensor_tempco: f64,
}

impl Default for ThermalPlant {
    fn default() -> Self {
        Self {
            time_constant: 200.0,
            gain: 250.0,
            ambient: 298.15,
            sensor_noise_std: 0.003,
            heater_resistance: 505.0,
            sensor_resistance_25c: 10_500.0,
            sensor_tempco: 10_500.0 * 0.00385,
        }
    }
}

impl ThermalPlant {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.time_constant,
            self.gain,
            self.heater_resistance,
            self.sensor_resistance_25c,
        ];
        if pos.iter().any(|v| !(*v > 0.0)) || !(self.sensor_noise_std >= 0.0) || !(self.ambient > 0.0) {
            return Err(Error::InvalidParameter(
                "plant time constant, gain, temperatures and resistances must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Sensor resistance at temperature `t` (K).
    pub fn sensor_resistance(&self, t: f64) -> f64 {
        self.sensor_resistance_25c + self.sensor_tempco * (t - 298.15)
    }

    /// RMS heater voltage delivering `power` (W).
    pub fn heater_voltage(&self, power: f64) -> f64 {
        (power.max(0.0) * self.heater_resistance).sqrt()
    }

    /// Heater power (W) holding temperature `t` in steady state.
    pub fn holding_power(&self, t: f64) -> f64 {
        (t - self.ambient) / self.gain
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PidGains {
    /// W/K
    pub kp: f64,
    /// W/(K·s)
    pub ki: f64,
    /// W·s/K
    pub kd: f64,
    /// W
    pub output_min: f64,
    /// W
    pub output_max: f64,
    /// K
    pub setpoint: f64,
}

impl PidGains {
    /// Default loop tuning for [`ThermalPlant::default`].
    pub fn tuned(setpoint: f64) -> Self {
        Self {
            kp: 0.028,
            ki: 3.2e-4,
            kd: 0.0,
            output_min: 0.0,
            output_max: 1.5,
            setpoint,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.kp, self.ki, self.kd].iter().any(|g| !(*g >= 0.0)) {
            return Err(Error::InvalidParameter("gains must be non-negative".into()));
        }
        if !(self.output_min <= self.output_max) {
            return Err(Error::InvalidParameter("output limits out of order".into()));
        }
        if !self.setpoint.is_finite() {
            return Err(Error::InvalidParameter("setpoint must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct PidRun {
    /// Plant temperature, K.
    pub temperature: TimeSeries,
    /// Sensor reading seen by the controller, K.
    pub measured: TimeSeries,
    /// Heater power, W.
    pub power: TimeSeries,
}

/// Simulates the closed loop from ambient. The plant update is the exact
/// solution over one step at constant power; the controller integrates only
/// while its output is unsaturated or the error drives it back into range.
pub fn simulate_pid(
    plant: &ThermalPlant,
    gains: &PidGains,
    duration: f64,
    dt: f64,
    seed: u64,
) -> Result<PidRun> {
    plant.validate()?;
    gains.validate()?;
    if !(dt > 0.0 && duration > dt) {
        return Err(Error::InvalidParameter("need 0 < dt < duration".into()));
    }
    if dt > plant.time_constant / 50.0 {
        return Err(Error::StepSize(format!(
            "dt = {dt} s exceeds τ/50 = {} s",
            plant.time_constant / 50.0
        )));
    }
    let n = (duration / dt).round() as usize + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 1.0).unwrap();
    let decay = (-dt / plant.time_constant).exp();
    let mut t_true = plant.ambient;
    let mut integral = 0.0;
    let mut prev_meas: Option<f64> = None;
    let mut temps = Vec::with_capacity(n);
    let mut meas = Vec::with_capacity(n);
    let mut powers = Vec::with_capacity(n);
    for _ in 0..n {
        let reading = t_true + plant.sensor_noise_std * noise.sample(&mut rng);
        let err = gains.setpoint - reading;
        // derivative on measurement
        let deriv = prev_meas.map_or(0.0, |p| -(reading - p) / dt);
        prev_meas = Some(reading);
        let unclamped = gains.kp * err + gains.ki * (integral + err * dt) + gains.kd * deriv;
        let power = unclamped.clamp(gains.output_min, gains.output_max);
        let saturated_high = unclamped > gains.output_max && err > 0.0;
        let saturated_low = unclamped < gains.output_min && err < 0.0;
        if !(saturated_high || saturated_low) {
            integral += err * dt;
        }
        temps.push(t_true);
        meas.push(reading);
        powers.push(power);
        let target = plant.ambient + plant.gain * power;
        t_true = target + (t_true - target) * decay;
    }
    let fs = 1.0 / dt;
    Ok(PidRun {
        temperature: TimeSeries::new(fs, temps, "K")?,
        measured: TimeSeries::new(fs, meas, "K")?,
        power: TimeSeries::new(fs, powers, "W")?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// Time after which the temperature stays within the settling band, s.
    pub settling_time: f64,
    /// Largest |T − setpoint| after `hold_start`, K.
    pub peak_deviation: f64,
    /// Mean of T − setpoint after `hold_start`, K.
    pub mean_error: f64,
    pub std_dev: f64,
}

/// Settling time against `band` (K) and hold statistics from `hold_start` (s).
pub fn stability_report(series: &TimeSeries, setpoint: f64, band: f64, hold_start: f64) -> Result<StabilityReport> {
    let y = series.values();
    let last_out = y.iter().rposition(|v| (v - setpoint).abs() > band);
    let settling_time = match last_out {
        Some(k) if k + 1 >= y.len() => f64::INFINITY,
        Some(k) => series.time(k + 1),
        None => series.t0(),
    };
    let start = ((hold_start - series.t0()) * series.fs()).ceil().max(0.0) as usize;
    if start >= y.len() {
        return Err(Error::InsufficientData(format!(
            "hold window starts at {hold_start} s, after the record ends"
        )));
    }
    let hold = &y[start..];
    let n = hold.len() as f64;
    let mean_error = hold.iter().map(|v| v - setpoint).sum::<f64>() / n;
    let var = hold.iter().map(|v| (v - setpoint - mean_error).powi(2)).sum::<f64>() / n;
    let peak_deviation = hold.iter().map(|v| (v - setpoint).abs()).fold(0.0, f64::max);
    Ok(StabilityReport {
        settling_time,
        peak_deviation,
        mean_error,
        std_dev: var.sqrt(),
    })
}

/// Residual field (nT) produced by heater current `current_ma` (mA).
pub fn residual_field(current_ma: f64, coefficient: f64) -> f64 {
    coefficient * current_ma
}

#[derive(Debug, Clone)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub fit: FitResult,
}

fn affine(p: &[f64], x: &f64) -> f64 {
    p[0] * x + p[1]
}

fn affine_jacobian(_: &[f64], x: &f64, out: &mut [f64]) {
    out[0] = *x;
    out[1] = 1.0;
}

/// Straight-line fit of field (nT) against heater current (mA).
pub fn fit_residual_field(pairs: &[(f64, f64)]) -> Result<LinearFit> {
    if pairs.len() < 3 {
        return Err(Error::InsufficientData(format!("{} points, need 3", pairs.len())));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    if x.iter().all(|v| *v == x[0]) {
        return Err(Error::DegenerateData("all currents are equal".into()));
    }
    let problem = CurveFit::new(&affine, &x, &y).with_jacobian(&affine_jacobian);
    let fit = least_squares(&problem, &[0.0, 0.0], &LmOptions::default())?.require_converged()?;
    Ok(LinearFit {
        slope: fit.params[0],
        intercept: fit.params[1],
        fit,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IvModel {
    /// `V = R·I`
    Ohmic,
    /// `V = R·I + V₀`
    Affine,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResistanceFit {
    /// Ω
    pub resistance: f64,
    /// Ω
    pub std_error: f64,
    /// V, zero for the ohmic model.
    pub offset: f64,
}

/// Resistance from `(V, I)` pairs by linear least squares of V on I.
pub fn resistance_from_iv(iv: &[(f64, f64)], model: IvModel) -> Result<ResistanceFit> {
    let n = iv.len();
    if n < 3 {
        return Err(Error::InsufficientData(format!("{n} I–V points, need 3")));
    }
    if iv.iter().all(|p| p.0 == iv[0].0) || iv.iter().all(|p| p.1 == iv[0].1) {
        return Err(Error::DegenerateData("voltage or current does not vary".into()));
    }
    let nf = n as f64;
    match model {
        IvModel::Ohmic => {
            let sii: f64 = iv.iter().map(|(_, i)| i * i).sum();
            let svi: f64 = iv.iter().map(|(v, i)| v * i).sum();
            let r = svi / sii;
            let ssr: f64 = iv.iter().map(|(v, i)| (v - r * i).powi(2)).sum();
            Ok(ResistanceFit {
                resistance: r,
                std_error: (ssr / (nf - 1.0) / sii).sqrt(),
                offset: 0.0,
            })
        }
        IvModel::Affine => {
            let mi = iv.iter().map(|p| p.1).sum::<f64>() / nf;
            let mv = iv.iter().map(|p| p.0).sum::<f64>() / nf;
            let sii: f64 = iv.iter().map(|(_, i)| (i - mi).powi(2)).sum();
            let svi: f64 = iv.iter().map(|(v, i)| (v - mv) * (i - mi)).sum();
            let r = svi / sii;
            let v0 = mv - r * mi;
            let ssr: f64 = iv.iter().map(|(v, i)| (v - r * i - v0).powi(2)).sum();
            Ok(ResistanceFit {
                resistance: r,
                std_error: (ssr / (nf - 2.0) / sii).sqrt(),
                offset: v0,
            })
        }
    }
}
