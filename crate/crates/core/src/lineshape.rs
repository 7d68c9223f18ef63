//! Pressure-broadened D1 absorption: optical-depth forward model and fit.
//!
//! ```text
//! OD(ν) = n r_e c f l Σ A_{FF'} (Γ/2) / ((ν − ν₀ − δ_{FF'})² + (Γ/2)²)
//! ```
//!
//! Frequencies are in GHz, so the Lorentzian factor carries a `1e-9` to
//! convert 1/GHz to seconds. The optional Voigt profile replaces each
//! Lorentzian by its convolution with a Doppler Gaussian, keeping the same
//! area so both profiles share the prefactor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;

use crate::atomic::{BufferGasCoefficients, Isotope, TransitionLine, SPEED_OF_LIGHT};
use crate::data::Spectrum;
use crate::error::{Error, Result};
use crate::fitkit::{least_squares, CurveFit, FitResult, LmOptions};

/// Classical electron radius, m.
pub const CLASSICAL_ELECTRON_RADIUS: f64 = 2.817_940_326_2e-15;
/// Internal optical length of the cell used in the absorption measurements, mm.
pub const DEFAULT_PATH_LENGTH_MM: f64 = 4.0;
/// Silicon wafer thickness, mm.
pub const WAFER_PATH_LENGTH_MM: f64 = 5.0;
/// Rb D1 oscillator strength.
pub const D1_OSCILLATOR_STRENGTH: f64 = 0.342;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LineProfile {
    Lorentzian,
    /// Lorentzian convolved with a Gaussian of the given FWHM (GHz).
    Voigt { doppler_fwhm: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AbsorptionParams {
    /// m⁻³.
    pub atomic_density: f64,
    /// Pressure-broadened FWHM, GHz.
    pub linewidth: f64,
    /// Pressure shift of the line centre, GHz.
    pub center_shift: f64,
    /// mm.
    pub path_length: f64,
    pub oscillator_strength: f64,
    pub isotope_weights: Vec<(Isotope, f64)>,
    pub profile: LineProfile,
}

impl Default for AbsorptionParams {
    fn default() -> Self {
        Self {
            atomic_density: 5e18,
            linewidth: 16.38,
            center_shift: -7.59,
            path_length: DEFAULT_PATH_LENGTH_MM,
            oscillator_strength: D1_OSCILLATOR_STRENGTH,
            isotope_weights: vec![(Isotope::Rb85, 0.7215), (Isotope::Rb87, 0.2785)],
            profile: LineProfile::Lorentzian,
        }
    }
}

impl AbsorptionParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("atomic density", self.atomic_density),
            ("linewidth", self.linewidth),
            ("path length", self.path_length),
            ("oscillator strength", self.oscillator_strength),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if !self.center_shift.is_finite() {
            return Err(Error::InvalidParameter("center shift must be finite".into()));
        }
        let total: f64 = self.isotope_weights.iter().map(|(_, w)| w).sum();
        if (total - 1.0).abs() > 1e-9 || self.isotope_weights.iter().any(|(_, w)| *w < 0.0) {
            return Err(Error::InvalidParameter(format!(
                "isotope weights must be non-negative and sum to 1, got {total}"
            )));
        }
        if let LineProfile::Voigt { doppler_fwhm } = self.profile {
            if !(doppler_fwhm > 0.0) {
                return Err(Error::InvalidParameter("Doppler width must be positive".into()));
            }
        }
        Ok(())
    }

    fn weight(&self, iso: Isotope) -> f64 {
        self.isotope_weights
            .iter()
            .filter(|(i, _)| *i == iso)
            .map(|(_, w)| w)
            .sum()
    }

    /// `n r_e c f l` with the 1/GHz → s conversion folded in.
    fn prefactor(&self) -> f64 {
        self.atomic_density
            * CLASSICAL_ELECTRON_RADIUS
            * SPEED_OF_LIGHT
            * self.oscillator_strength
            * self.path_length
            * 1e-3
            * 1e-9
    }
}

/// Lorentzian factor `(Γ/2) / (d² + (Γ/2)²)`.
fn lorentz(detuning: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    h / (detuning * detuning + h * h)
}

/// Faddeeva function w(z) for Im z ≥ 0 (Humlíček's four-region rational
/// approximation, relative accuracy about 1e-4).
pub fn faddeeva(z: Complex64) -> Complex64 {
    let (x, y) = (z.re, z.im);
    let t = Complex64::new(y, -x);
    let s = x.abs() + y;
    if s >= 15.0 {
        t * 0.564_189_6 / (t * t + 0.5)
    } else if s >= 5.5 {
        let u = t * t;
        t * (u * 0.564_189_6 + 1.410_474) / (u * (u + 3.0) + 0.75)
    } else if y >= 0.195 * x.abs() - 0.176 {
        (((((t * 0.564_223_6 + 3.778_987) * t + 11.964_82) * t + 20.209_33) * t) + 16.4955)
            / ((((((t + 6.699_398) * t + 21.692_74) * t + 39.271_21) * t + 38.823_63) * t)
                + 16.4955)
    } else {
        let u = t * t;
        let c = |k: f64| Complex64::new(k, 0.0);
        let num = c(36_183.31)
            - u * (c(3321.9905)
                - u * (c(1540.787)
                    - u * (c(219.0313)
                        - u * (c(35.766_83) - u * (c(1.320_522) - u * 0.564_19)))));
        let den = c(32_066.6)
            - u * (c(24_322.84)
                - u * (c(9022.228)
                    - u * (c(2186.181)
                        - u * (c(364.2191)
                            - u * (c(61.570_37) - u * (c(1.841_439) - u))))));
        u.exp() - t * num / den
    }
}

/// Voigt factor normalized like [`lorentz`]: π times the unit-area Voigt.
fn voigt(detuning: f64, fwhm: f64, doppler_fwhm: f64) -> f64 {
    let sigma = doppler_fwhm / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
    let z = Complex64::new(detuning, 0.5 * fwhm) / (sigma * std::f64::consts::SQRT_2);
    std::f64::consts::PI * faddeeva(z).re / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

/// Optical depth at frequency `nu` (GHz).
pub fn optical_depth(nu: f64, p: &AbsorptionParams, lines: &[TransitionLine]) -> f64 {
    let sum: f64 = lines
        .iter()
        .map(|l| {
            let d = nu - p.center_shift - l.center_frequency_offset;
            let shape = match p.profile {
                LineProfile::Lorentzian => lorentz(d, p.linewidth),
                LineProfile::Voigt { doppler_fwhm } => voigt(d, p.linewidth, doppler_fwhm),
            };
            p.weight(l.isotope) * l.relative_strength * shape
        })
        .sum();
    p.prefactor() * sum
}

/// Gradient of the Lorentzian OD with respect to `(ln n, ln Γ, ν₀)`.
pub fn optical_depth_gradient(nu: f64, p: &AbsorptionParams, lines: &[TransitionLine]) -> [f64; 3] {
    let h = 0.5 * p.linewidth;
    let mut g = [0.0; 3];
    for l in lines {
        let a = p.weight(l.isotope) * l.relative_strength;
        let d = nu - p.center_shift - l.center_frequency_offset;
        let q = d * d + h * h;
        g[0] += a * h / q;
        // Γ ∂L/∂Γ = h ∂L/∂h
        g[1] += a * h * (d * d - h * h) / (q * q);
        g[2] += a * 2.0 * h * d / (q * q);
    }
    let k = p.prefactor();
    [k * g[0], k * g[1], k * g[2]]
}

/// Transmitted power `P_in · exp(−OD)`.
pub fn transmission(nu: f64, p: &AbsorptionParams, lines: &[TransitionLine], p_in: f64) -> f64 {
    p_in * (-optical_depth(nu, p, lines)).exp()
}

/// OD spectrum on `grid` (GHz) with optional multiplicative Gaussian noise of
/// relative standard deviation `rel_noise`.
pub fn synthesize_absorption(
    grid: Vec<f64>,
    p: &AbsorptionParams,
    lines: &[TransitionLine],
    rel_noise: f64,
    seed: u64,
) -> Result<Spectrum> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, rel_noise.max(0.0))
        .map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let y = grid
        .iter()
        .map(|&nu| {
            let od = optical_depth(nu, p, lines);
            if rel_noise > 0.0 {
                od * (1.0 + noise.sample(&mut rng))
            } else {
                od
            }
        })
        .collect();
    Spectrum::new(grid, y, "GHz", "OD")
}

#[derive(Debug, Clone)]
pub struct AbsorptionFit {
    pub params: AbsorptionParams,
    /// Natural-unit estimates and covariance over `(n, Γ, ν₀)`.
    pub fit: FitResult,
}

fn with_free(base: &AbsorptionParams, q: &[f64]) -> AbsorptionParams {
    AbsorptionParams {
        atomic_density: q[0].exp(),
        linewidth: q[1].exp(),
        center_shift: q[2],
        ..base.clone()
    }
}

/// Fits `(n, Γ, ν₀)` to an OD spectrum; path length, oscillator strength,
/// isotope weights and profile are held at their values in `initial`.
pub fn fit_absorption(
    data: &Spectrum,
    initial: &AbsorptionParams,
    lines: &[TransitionLine],
) -> Result<AbsorptionFit> {
    fit_absorption_with(data, initial, lines, &LmOptions::default())
}

pub fn fit_absorption_with(
    data: &Spectrum,
    initial: &AbsorptionParams,
    lines: &[TransitionLine],
    opts: &LmOptions,
) -> Result<AbsorptionFit> {
    initial.validate()?;
    if lines.is_empty() {
        return Err(Error::InvalidParameter("no transition lines".into()));
    }
    if data.len() < 10 {
        return Err(Error::InsufficientData(format!(
            "{} points; absorption fit needs at least 10",
            data.len()
        )));
    }
    if data.span() < initial.linewidth {
        return Err(Error::DegenerateGrid(format!(
            "grid spans {} GHz, less than the linewidth {} GHz",
            data.span(),
            initial.linewidth
        )));
    }

    let model = |q: &[f64], nu: &f64| optical_depth(*nu, &with_free(initial, q), lines);
    let jac = |q: &[f64], nu: &f64, out: &mut [f64]| {
        out.copy_from_slice(&optical_depth_gradient(*nu, &with_free(initial, q), lines));
    };
    let mut problem = CurveFit::new(&model, data.x(), data.y());
    if initial.profile == LineProfile::Lorentzian {
        problem = problem.with_jacobian(&jac);
    }
    let start = [
        initial.atomic_density.ln(),
        initial.linewidth.ln(),
        initial.center_shift,
    ];
    let internal = least_squares(&problem, &start, opts)?.require_converged()?;
    let params = with_free(initial, &internal.params);
    let fit = internal.reparameterize(|i, q| match i {
        0 | 1 => (q.exp(), q.exp()),
        _ => (q, 1.0),
    });
    Ok(AbsorptionFit { params, fit })
}

/// Buffer-gas density (amagat) implied by a pressure-broadened FWHM (GHz).
pub fn buffer_density_from_linewidth(linewidth: f64, coeffs: &BufferGasCoefficients) -> Result<f64> {
    if !(linewidth > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "linewidth must be positive, got {linewidth}"
        )));
    }
    Ok(linewidth / coeffs.broadening_coefficient)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftReport {
    /// GHz/day.
    pub slope: f64,
    pub intercept: f64,
    pub mean: f64,
    /// Largest |Γ − mean|, GHz.
    pub max_deviation: f64,
    /// Trend change over the observed span, GHz.
    pub total_drift: f64,
    /// Allowed drift and deviation, GHz.
    pub threshold: f64,
    pub pass: bool,
}

/// Trend analysis of linewidth measurements `(day, Γ)` over an aging run.
///
/// Passes when both the fitted drift across the observed span and the
/// largest deviation from the mean stay within `relative_threshold · mean`.
pub fn linewidth_drift_report(series: &[(f64, f64)], relative_threshold: f64) -> Result<DriftReport> {
    if series.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} linewidth samples; need at least 2",
            series.len()
        )));
    }
    if series.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(Error::InvalidParameter("days must be strictly increasing".into()));
    }
    let n = series.len() as f64;
    let mean_t = series.iter().map(|s| s.0).sum::<f64>() / n;
    let mean = series.iter().map(|s| s.1).sum::<f64>() / n;
    let sxx: f64 = series.iter().map(|s| (s.0 - mean_t).powi(2)).sum();
    let sxy: f64 = series.iter().map(|s| (s.0 - mean_t) * (s.1 - mean)).sum();
    let slope = sxy / sxx;
    let intercept = mean - slope * mean_t;
    let span = series[series.len() - 1].0 - series[0].0;
    let max_deviation = series
        .iter()
        .map(|s| (s.1 - mean).abs())
        .fold(0.0, f64::max);
    let total_drift = slope * span;
    let threshold = relative_threshold * mean.abs();
    Ok(DriftReport {
        slope,
        intercept,
        mean,
        max_deviation,
        total_drift,
        threshold,
        pass: total_drift.abs() <= threshold && max_deviation <= threshold,
    })
}
