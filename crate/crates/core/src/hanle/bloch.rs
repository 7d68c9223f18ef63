//! Time-domain Bloch model of the single-beam zero-field magnetometer.
//!
//! `dS/dt = γ S×B + R_op (ẑ/2 − S) − R_rel S`, integrated with fixed-step
//! classic RK4. Fully polarized atoms have `|S| = 1/2`.

use std::fmt;
use std::sync::Arc;

use crate::data::{Spectrum, TimeSeries};
use crate::error::{Error, Result};

type Vec3 = [f64; 3];

#[derive(Clone)]
pub enum FieldWaveform {
    Static(Vec3),
    /// `B(t) = static_field + x̂·amplitude·sin(2π·frequency·t)`.
    TransverseModulation {
        static_field: Vec3,
        amplitude: f64,
        frequency: f64,
    },
    /// Arbitrary field. The bounds drive step selection and the sample-rate check.
    Custom {
        field: Arc<dyn Fn(f64) -> Vec3 + Send + Sync>,
        max_magnitude: f64,
        max_frequency: f64,
    },
}

impl fmt::Debug for FieldWaveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Static(b) => f.debug_tuple("Static").field(b).finish(),
            Self::TransverseModulation {
                static_field,
                amplitude,
                frequency,
            } => f
                .debug_struct("TransverseModulation")
                .field("static_field", static_field)
                .field("amplitude", amplitude)
                .field("frequency", frequency)
                .finish(),
            Self::Custom {
                max_magnitude,
                max_frequency,
                ..
            } => f
                .debug_struct("Custom")
                .field("max_magnitude", max_magnitude)
                .field("max_frequency", max_frequency)
                .finish_non_exhaustive(),
        }
    }
}

fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl FieldWaveform {
    pub fn at(&self, t: f64) -> Vec3 {
        match self {
            Self::Static(b) => *b,
            Self::TransverseModulation {
                static_field,
                amplitude,
                frequency,
            } => {
                let s = (2.0 * std::f64::consts::PI * frequency * t).sin();
                [static_field[0] + amplitude * s, static_field[1], static_field[2]]
            }
            Self::Custom { field, .. } => field(t),
        }
    }

    pub fn max_magnitude(&self) -> f64 {
        match self {
            Self::Static(b) => norm(*b),
            Self::TransverseModulation {
                static_field,
                amplitude,
                ..
            } => norm(*static_field) + amplitude.abs(),
            Self::Custom { max_magnitude, .. } => *max_magnitude,
        }
    }

    pub fn max_frequency(&self) -> f64 {
        match self {
            Self::Static(_) => 0.0,
            Self::TransverseModulation { frequency, .. } => *frequency,
            Self::Custom { max_frequency, .. } => *max_frequency,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BlochConfig {
    /// s⁻¹
    pub pumping_rate: f64,
    /// s⁻¹
    pub relaxation_rate: f64,
    /// rad·s⁻¹·nT⁻¹
    pub gyromagnetic: f64,
    /// nT
    pub field: FieldWaveform,
    /// s
    pub duration: f64,
    /// Hz
    pub sample_rate: f64,
    pub initial_spin: Vec3,
    /// Largest rotation or decay (rad, or rate·h) per internal RK4 step.
    pub max_phase_per_step: f64,
    /// Transmitted power is `1 − contrast·(1 − 2S_z)`.
    pub absorption_contrast: f64,
}

impl Default for BlochConfig {
    fn default() -> Self {
        Self {
            pumping_rate: 900.0,
            relaxation_rate: 900.0,
            gyromagnetic: super::ELECTRON_GYROMAGNETIC,
            field: FieldWaveform::Static([0.0; 3]),
            duration: 0.1,
            sample_rate: 89_000.0,
            initial_spin: [0.0; 3],
            max_phase_per_step: 0.01,
            absorption_contrast: 0.5,
        }
    }
}

impl BlochConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.pumping_rate) || !ok(self.relaxation_rate) {
            return Err(Error::InvalidParameter("rates must be non-negative".into()));
        }
        if !(self.gyromagnetic > 0.0) || !(self.duration > 0.0) || !(self.sample_rate > 0.0) {
            return Err(Error::InvalidParameter(
                "gyromagnetic ratio, duration and sample rate must be positive".into(),
            ));
        }
        if !(self.max_phase_per_step > 0.0 && self.max_phase_per_step <= 0.5) {
            return Err(Error::InvalidParameter("max_phase_per_step must be in (0, 0.5]".into()));
        }
        if norm(self.initial_spin) > 0.5 + 1e-12 {
            return Err(Error::InvalidParameter("|S(0)| exceeds 1/2".into()));
        }
        let f = self.field.max_frequency();
        if f > 0.0 && self.sample_rate < 20.0 * f {
            return Err(Error::StepSize(format!(
                "sample rate {} Hz is below 20 × field frequency {f} Hz",
                self.sample_rate
            )));
        }
        Ok(())
    }

    fn substeps(&self) -> usize {
        let dt = 1.0 / self.sample_rate;
        let rate = self.gyromagnetic * self.field.max_magnitude() + self.pumping_rate + self.relaxation_rate;
        ((dt * rate / self.max_phase_per_step).ceil() as usize).max(1)
    }
}

#[derive(Debug, Clone)]
pub struct BlochOutput {
    pub spin_z: TimeSeries,
    pub transmitted: TimeSeries,
    pub final_spin: Vec3,
}

fn derivative(s: Vec3, b: Vec3, cfg: &BlochConfig) -> Vec3 {
    let g = cfg.gyromagnetic;
    let gamma = cfg.pumping_rate + cfg.relaxation_rate;
    let cross = [
        s[1] * b[2] - s[2] * b[1],
        s[2] * b[0] - s[0] * b[2],
        s[0] * b[1] - s[1] * b[0],
    ];
    [
        g * cross[0] - gamma * s[0],
        g * cross[1] - gamma * s[1],
        g * cross[2] - gamma * s[2] + 0.5 * cfg.pumping_rate,
    ]
}

fn axpy(s: Vec3, a: f64, k: Vec3) -> Vec3 {
    [s[0] + a * k[0], s[1] + a * k[1], s[2] + a * k[2]]
}

fn rk4_step(s: Vec3, t: f64, h: f64, cfg: &BlochConfig) -> Vec3 {
    let b0 = cfg.field.at(t);
    let bm = cfg.field.at(t + 0.5 * h);
    let b1 = cfg.field.at(t + h);
    let k1 = derivative(s, b0, cfg);
    let k2 = derivative(axpy(s, 0.5 * h, k1), bm, cfg);
    let k3 = derivative(axpy(s, 0.5 * h, k2), bm, cfg);
    let k4 = derivative(axpy(s, h, k3), b1, cfg);
    let mut out = s;
    for i in 0..3 {
        out[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
    out
}

/// Integrates the Bloch equation and samples `S_z` and the transmitted-power
/// proxy at `sample_rate`, starting with the initial state at `t = 0`.
pub fn bloch_simulate(cfg: &BlochConfig) -> Result<BlochOutput> {
    cfg.validate()?;
    let n = (cfg.duration * cfg.sample_rate).round() as usize;
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "duration × sample rate gives {n} samples"
        )));
    }
    let sub = cfg.substeps();
    let dt = 1.0 / cfg.sample_rate;
    let h = dt / sub as f64;
    let mut s = cfg.initial_spin;
    let mut sz = Vec::with_capacity(n);
    let mut power = Vec::with_capacity(n);
    for k in 0..n {
        sz.push(s[2]);
        power.push(1.0 - cfg.absorption_contrast * (1.0 - 2.0 * s[2]));
        let t0 = k as f64 * dt;
        for j in 0..sub {
            s = rk4_step(s, t0 + j as f64 * h, h, cfg);
        }
    }
    Ok(BlochOutput {
        spin_z: TimeSeries::new(cfg.sample_rate, sz, "1")?,
        transmitted: TimeSeries::new(cfg.sample_rate, power, "1")?,
        final_spin: s,
    })
}

/// Runs [`bloch_simulate`] under `Bx(t) = test_field + mod_amp·sin(2π·mod_freq·t)`.
/// Static y and z components of `cfg.field` are kept.
pub fn modulated_response(
    cfg: &BlochConfig,
    mod_freq: f64,
    mod_amp: f64,
    test_field: f64,
) -> Result<BlochOutput> {
    if !(mod_freq > 0.0 && mod_amp > 0.0) {
        return Err(Error::InvalidParameter(
            "modulation frequency and amplitude must be positive".into(),
        ));
    }
    let base = match &cfg.field {
        FieldWaveform::Static(b) => *b,
        _ => [0.0; 3],
    };
    let cfg = BlochConfig {
        field: FieldWaveform::TransverseModulation {
            static_field: [test_field, base[1], base[2]],
            amplitude: mod_amp,
            frequency: mod_freq,
        },
        ..cfg.clone()
    };
    bloch_simulate(&cfg)
}

/// Steady-state `(S_z, S_y)` versus static `Bx`, each point integrated from
/// rest for 40 relaxation times.
pub fn steady_state_sweep(cfg: &BlochConfig, fields: &[f64]) -> Result<(Spectrum, Spectrum)> {
    let gamma = cfg.pumping_rate + cfg.relaxation_rate;
    if !(gamma > 0.0) {
        return Err(Error::InvalidParameter(
            "steady state needs a positive total relaxation rate".into(),
        ));
    }
    let mut sz = Vec::with_capacity(fields.len());
    let mut sy = Vec::with_capacity(fields.len());
    for &bx in fields {
        let point = BlochConfig {
            field: FieldWaveform::Static([bx, 0.0, 0.0]),
            duration: 40.0 / gamma,
            sample_rate: 10.0 * gamma,
            initial_spin: [0.0; 3],
            ..cfg.clone()
        };
        let out = bloch_simulate(&point)?;
        sz.push(out.final_spin[2]);
        sy.push(out.final_spin[1]);
    }
    Ok((
        Spectrum::new(fields.to_vec(), sz, "nT", "1")?,
        Spectrum::new(fields.to_vec(), sy, "nT", "1")?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{Matrix3, Vector3};
    use proptest::prelude::*;

    // Independent oracle: solve the linear steady-state system directly.
    fn linear_steady_state(cfg: &BlochConfig, b: Vec3) -> Vec3 {
        let g = cfg.gyromagnetic;
        let gamma = cfg.pumping_rate + cfg.relaxation_rate;
        // S×B = M S with M = -[B]×
        let m = Matrix3::new(
            -gamma, g * b[2], -g * b[1],
            -g * b[2], -gamma, g * b[0],
            g * b[1], -g * b[0], -gamma,
        );
        let rhs = Vector3::new(0.0, 0.0, -0.5 * cfg.pumping_rate);
        let s = m.lu().solve(&rhs).unwrap();
        [s[0], s[1], s[2]]
    }

    #[test]
    fn zero_field_fixed_point() {
        let cfg = BlochConfig {
            duration: 0.05,
            sample_rate: 10_000.0,
            ..Default::default()
        };
        let out = bloch_simulate(&cfg).unwrap();
        assert!((out.final_spin[2] - 0.25).abs() < 1e-12, "{:?}", out.final_spin);
        let last = *out.transmitted.values().last().unwrap();
        assert!((last - (1.0 - 0.5 * 0.5)).abs() < 1e-9);
    }

    #[test]
    fn static_field_matches_linear_solve() {
        let b = [7.0, -3.0, 2.5];
        let cfg = BlochConfig {
            field: FieldWaveform::Static(b),
            duration: 0.04,
            sample_rate: 5000.0,
            ..Default::default()
        };
        let out = bloch_simulate(&cfg).unwrap();
        let want = linear_steady_state(&cfg, b);
        for (got, want) in out.final_spin.iter().zip(want) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn precession_conserves_length() {
        let cfg = BlochConfig {
            pumping_rate: 0.0,
            relaxation_rate: 0.0,
            field: FieldWaveform::Static([30.0, 10.0, -5.0]),
            initial_spin: [0.0, 0.0, 0.5],
            sample_rate: 10_000.0,
            ..Default::default()
        };
        let sub = cfg.substeps();
        let n = 10_000usize.div_ceil(sub);
        let cfg = BlochConfig {
            duration: n as f64 / cfg.sample_rate,
            ..cfg
        };
        let out = bloch_simulate(&cfg).unwrap();
        assert!((norm(out.final_spin) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn low_sample_rate_rejected() {
        let cfg = BlochConfig {
            field: FieldWaveform::TransverseModulation {
                static_field: [0.0; 3],
                amplitude: 160.0,
                frequency: 890.0,
            },
            sample_rate: 10_000.0,
            ..Default::default()
        };
        assert!(matches!(bloch_simulate(&cfg), Err(Error::StepSize(_))));
    }

    #[test]
    fn sweep_is_lorentzian() {
        let cfg = BlochConfig::default();
        let gamma = 1800.0;
        let fields: Vec<f64> = (-6..=6).map(|k| k as f64 * 5.0).collect();
        let (sz, sy) = steady_state_sweep(&cfg, &fields).unwrap();
        for ((b, z), y) in sz.iter().zip(sy.y()) {
            let w = cfg.gyromagnetic * b;
            let want = 450.0 * gamma / (gamma * gamma + w * w);
            assert!((z - want).abs() < 1e-10);
            assert!((y - want * w / gamma).abs() < 1e-10);
        }
    }

    #[test]
    fn modulated_zero_field_has_no_first_harmonic_drive() {
        let cfg = BlochConfig {
            duration: 0.05,
            ..Default::default()
        };
        let out = modulated_response(&cfg, 890.0, 160.0, 0.0).unwrap();
        assert_eq!(out.spin_z.len(), (0.05f64 * 89_000.0).round() as usize);
        // even response to an odd drive: S_z(t) = S_z(t + T/2) once settled
        let half = 50;
        let v = out.spin_z.values();
        for k in v.len() - 200..v.len() - half {
            assert!((v[k] - v[k + half]).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn spin_length_is_bounded(
            rop in 10.0f64..3000.0,
            rrel in 0.0f64..3000.0,
            bx in -200.0f64..200.0,
            by in -200.0f64..200.0,
            bz in -200.0f64..200.0,
        ) {
            let cfg = BlochConfig {
                pumping_rate: rop,
                relaxation_rate: rrel,
                field: FieldWaveform::Static([bx, by, bz]),
                duration: 0.01,
                sample_rate: 20_000.0,
                initial_spin: [0.3, 0.0, -0.4],
                ..Default::default()
            };
            let sub = cfg.substeps();
            let h = 1.0 / cfg.sample_rate / sub as f64;
            let mut s = cfg.initial_spin;
            for k in 0..(200 * sub) {
                s = rk4_step(s, k as f64 * h, h, &cfg);
                prop_assert!(norm(s) <= 0.5 + 1e-9);
            }
        }

        #[test]
        fn steady_state_hwhm_matches_rates(rop in 100.0f64..4000.0, rrel in 100.0f64..4000.0) {
            let cfg = BlochConfig {
                pumping_rate: rop,
                relaxation_rate: rrel,
                ..Default::default()
            };
            let hwhm = (rop + rrel) / cfg.gyromagnetic;
            let (sz, _) = steady_state_sweep(&cfg, &[0.0, hwhm]).unwrap();
            prop_assert!((sz.y()[1] / sz.y()[0] - 0.5).abs() < 1e-6);
        }
    }
}
