//! Doppler-free saturated-absorption spectra of the Rb D1 line.
//!
//! The probe sees a Doppler-broadened envelope (one Gaussian per hyperfine
//! line). Narrow Lorentzian reductions of the absorption appear at every
//! transition (dip) and halfway between two transitions that share a ground
//! level (crossover). Away from those features the spectrum is the bare
//! Doppler envelope. Vacuum cell: no pressure broadening.

use crate::atomic::{
    d1_transition_lines, IsotopeSpec, BOLTZMANN, D1_FREQUENCY_GHZ, SPEED_OF_LIGHT,
};
use crate::data::Spectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Dip,
    Crossover,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SasFeature {
    /// GHz, same origin as the transition line offsets.
    pub frequency: f64,
    pub kind: FeatureKind,
    pub label: String,
}

/// Dips at each transition and crossovers at the mean of every pair of
/// transitions sharing a ground level, sorted by frequency.
pub fn sas_feature_frequencies(iso: &IsotopeSpec) -> Vec<SasFeature> {
    let lines = d1_transition_lines(iso);
    let mut out = Vec::new();
    for &fg in &iso.ground_f_levels {
        let group: Vec<_> = lines.iter().filter(|l| l.ground_f == fg).collect();
        for l in &group {
            out.push(SasFeature {
                frequency: l.center_frequency_offset,
                kind: FeatureKind::Dip,
                label: format!("{} F={}->F'={}", iso.isotope, fg, l.excited_f),
            });
        }
        for (i, a) in group.iter().enumerate() {
            for b in &group[i + 1..] {
                if a.center_frequency_offset == b.center_frequency_offset {
                    continue;
                }
                out.push(SasFeature {
                    frequency: 0.5 * (a.center_frequency_offset + b.center_frequency_offset),
                    kind: FeatureKind::Crossover,
                    label: format!(
                        "{} F={} CO F'={}/{}",
                        iso.isotope, fg, a.excited_f, b.excited_f
                    ),
                });
            }
        }
    }
    out.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
    out
}

/// Doppler FWHM (GHz) of the D1 line at `temperature` (K).
pub fn doppler_fwhm(temperature: f64, mass_kg: f64) -> f64 {
    D1_FREQUENCY_GHZ
        * (8.0 * BOLTZMANN * temperature * std::f64::consts::LN_2
            / (mass_kg * SPEED_OF_LIGHT * SPEED_OF_LIGHT))
            .sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SasConfig {
    /// Isotopes with their vapor weights.
    pub isotopes: Vec<(IsotopeSpec, f64)>,
    /// K.
    pub temperature: f64,
    /// FWHM of the sub-Doppler features, MHz.
    pub lamb_dip_width: f64,
    /// Fraction of the local Doppler absorption removed at a feature centre.
    pub lamb_dip_depth: f64,
    /// Peak optical depth of a unit-strength, unit-weight line.
    pub optical_depth: f64,
    /// Frequency grid, GHz.
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl SasConfig {
    /// Both isotopes at natural abundance on a grid covering all four
    /// Doppler valleys.
    pub fn natural(isotopes: &[IsotopeSpec]) -> Self {
        Self {
            isotopes: isotopes.iter().map(|s| (s.clone(), s.abundance)).collect(),
            temperature: 300.0,
            lamb_dip_width: 20.0,
            lamb_dip_depth: 0.3,
            optical_depth: 1.0,
            start: -4.5,
            stop: 6.0,
            step: 0.004,
        }
    }

    pub fn doppler_fwhm(&self, iso: &IsotopeSpec) -> f64 {
        doppler_fwhm(self.temperature, iso.mass_kg())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::InvalidParameter("temperature must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.lamb_dip_depth) {
            return Err(Error::InvalidParameter(format!(
                "dip depth {} outside [0, 1]",
                self.lamb_dip_depth
            )));
        }
        if !(self.lamb_dip_width > 0.0) {
            return Err(Error::InvalidParameter("dip width must be positive".into()));
        }
        for (iso, _) in &self.isotopes {
            if self.lamb_dip_width * 1e-3 >= self.doppler_fwhm(iso) {
                return Err(Error::InvalidParameter(
                    "dip width must be narrower than the Doppler width".into(),
                ));
            }
        }
        if !(self.step > 0.0 && self.stop > self.start) {
            return Err(Error::InvalidParameter("empty frequency grid".into()));
        }
        let limit = self.lamb_dip_width * 1e-3 / 4.0;
        if self.step > limit {
            return Err(Error::GridTooCoarse {
                step: self.step,
                limit,
            });
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step).round() as usize + 1;
        (0..n).map(|i| self.start + self.step * i as f64).collect()
    }

    /// All features of the configured isotopes, sorted by frequency.
    pub fn features(&self) -> Vec<SasFeature> {
        let mut all: Vec<_> = self
            .isotopes
            .iter()
            .filter(|(_, w)| *w > 0.0)
            .flat_map(|(iso, _)| sas_feature_frequencies(iso))
            .collect();
        all.sort_by(|a, b| a.frequency.total_cmp(&b.frequency));
        all
    }

    fn doppler_od(&self, nu: f64) -> f64 {
        self.isotopes
            .iter()
            .map(|(iso, w)| {
                let sigma = self.doppler_fwhm(iso) / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
                d1_transition_lines(iso)
                    .iter()
                    .map(|l| {
                        let d = (nu - l.center_frequency_offset) / sigma;
                        l.relative_strength * (-0.5 * d * d).exp()
                    })
                    .sum::<f64>()
                    * w
            })
            .sum::<f64>()
            * self.optical_depth
    }
}

/// Normalized transmitted power of the pure Doppler envelope.
pub fn doppler_envelope(cfg: &SasConfig) -> Result<Spectrum> {
    cfg.validate()?;
    Spectrum::from_fn(cfg.grid(), "GHz", "P/P0", |nu| (-cfg.doppler_od(nu)).exp())
}

/// Normalized transmitted power with sub-Doppler features.
pub fn sas_spectrum(cfg: &SasConfig) -> Result<Spectrum> {
    cfg.validate()?;
    let features = cfg.features();
    let hwhm = 0.5 * cfg.lamb_dip_width * 1e-3;
    Spectrum::from_fn(cfg.grid(), "GHz", "P/P0", |nu| {
        let bleach: f64 = features
            .iter()
            .map(|f| {
                let d = (nu - f.frequency) / hwhm;
                cfg.lamb_dip_depth / (1.0 + d * d)
            })
            .sum();
        (-cfg.doppler_od(nu) * (1.0 - bleach).max(0.0)).exp()
    })
}

/// Grid positions of sharp local maxima: points above both neighbours whose
/// discrete curvature `(2yᵢ − yᵢ₋₁ − yᵢ₊₁)/h²` is at least `min_curvature`.
pub fn find_sharp_peaks(spectrum: &Spectrum, min_curvature: f64) -> Vec<f64> {
    let (x, y) = (spectrum.x(), spectrum.y());
    (1..x.len() - 1)
        .filter(|&i| y[i] > y[i - 1] && y[i] >= y[i + 1])
        .filter(|&i| {
            let h = 0.5 * (x[i + 1] - x[i - 1]);
            (2.0 * y[i] - y[i - 1] - y[i + 1]) / (h * h) >= min_curvature
        })
        .map(|i| x[i])
        .collect()
}

/// Sub-Doppler feature positions in a synthesized spectrum. Broad envelope
/// maxima are rejected by requiring a curvature of at least 1% of the
/// sharpest peak.
pub fn detect_features(spectrum: &Spectrum) -> Vec<f64> {
    let all = find_sharp_peaks(spectrum, 0.0);
    if all.is_empty() {
        return all;
    }
    let (x, y) = (spectrum.x(), spectrum.y());
    let sharpest = (1..x.len() - 1)
        .map(|i| {
            let h = 0.5 * (x[i + 1] - x[i - 1]);
            (2.0 * y[i] - y[i - 1] - y[i + 1]) / (h * h)
        })
        .fold(0.0, f64::max);
    find_sharp_peaks(spectrum, 0.01 * sharpest)
}
