//! Spin-noise spectra: Lorentzian peaks at the isotopes' Larmor frequencies.
//!
//! ```text
//! PSD(f) = background + Σ area·(hwhm/π) / ((f − ν_L)² + hwhm²)
//! ```
//!
//! Frequencies are in kHz; `area` is in signal² so the PSD is per kHz.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::atomic::{AtomicData, IsotopeSpec};
use crate::data::{Spectrum, TimeSeries};
use crate::error::{Error, Result};
use crate::fitkit::{least_squares, CurveFit, FitResult, LmOptions};

/// Larmor frequency in kHz for a field in μT.
pub fn larmor_frequency(isotope: &IsotopeSpec, field_ut: f64) -> f64 {
    isotope.gyromagnetic_ratio * field_ut
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SnsPeak {
    /// kHz
    pub larmor: f64,
    /// kHz
    pub hwhm: f64,
    pub area: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SnsModel {
    pub peaks: Vec<SnsPeak>,
    pub background: f64,
}

impl SnsModel {
    /// One peak per isotope at field `field_ut`, areas equal to abundances.
    pub fn natural(atoms: &AtomicData, field_ut: f64, hwhm: f64) -> Self {
        let peaks = atoms
            .isotopes()
            .iter()
            .map(|spec| SnsPeak {
                larmor: larmor_frequency(spec, field_ut),
                hwhm,
                area: spec.abundance,
            })
            .collect();
        Self {
            peaks,
            background: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in &self.peaks {
            if !(p.larmor >= 0.0 && p.hwhm > 0.0 && p.area >= 0.0) {
                return Err(Error::InvalidParameter(format!("invalid peak {p:?}")));
            }
        }
        if !(self.background >= 0.0) {
            return Err(Error::InvalidParameter("background must be non-negative".into()));
        }
        Ok(())
    }

    pub fn eval(&self, f: f64) -> f64 {
        self.background
            + self
                .peaks
                .iter()
                .map(|p| p.area * (p.hwhm / PI) / ((f - p.larmor).powi(2) + p.hwhm * p.hwhm))
                .sum::<f64>()
    }

    /// Pairs of peaks closer than the sum of their half-widths.
    pub fn unresolved_pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.peaks.len() {
            for j in i + 1..self.peaks.len() {
                let (a, b) = (&self.peaks[i], &self.peaks[j]);
                if (a.larmor - b.larmor).abs() < a.hwhm + b.hwhm {
                    out.push((i, j));
                }
            }
        }
        out
    }

    // (ν, ln hwhm, area) per peak, then background
    fn to_internal(&self) -> Vec<f64> {
        let mut q: Vec<f64> = self
            .peaks
            .iter()
            .flat_map(|p| [p.larmor, p.hwhm.ln(), p.area])
            .collect();
        q.push(self.background);
        q
    }

    fn from_internal(q: &[f64]) -> Self {
        let n = (q.len() - 1) / 3;
        Self {
            peaks: (0..n)
                .map(|i| SnsPeak {
                    larmor: q[3 * i],
                    hwhm: q[3 * i + 1].exp(),
                    area: q[3 * i + 2],
                })
                .collect(),
            background: q[q.len() - 1],
        }
    }
}

/// Starting model for [`fit_sns`]: background from the spectrum median and
/// each area from the local maximum within two half-widths of its centre.
pub fn initial_model(psd: &Spectrum, centres: &[f64], hwhm: f64) -> SnsModel {
    let mut sorted = psd.y().to_vec();
    sorted.sort_by(f64::total_cmp);
    let background = sorted[sorted.len() / 2].max(0.0);
    let peaks = centres
        .iter()
        .map(|&c| {
            let top = psd
                .iter()
                .filter(|(f, _)| (f - c).abs() <= 2.0 * hwhm)
                .map(|(_, v)| v)
                .fold(background, f64::max);
            SnsPeak {
                larmor: c,
                hwhm,
                area: ((top - background) * PI * hwhm).max(0.0),
            }
        })
        .collect();
    SnsModel { peaks, background }
}

pub fn sns_psd(f_grid: &[f64], model: &SnsModel) -> Result<Spectrum> {
    model.validate()?;
    Spectrum::from_fn(f_grid.to_vec(), "kHz", "arb/kHz", |f| model.eval(f))
}

/// Model in the internal parameterization `(ν, ln hwhm, area)… , background`.
pub fn internal_model(q: &[f64], f: &f64) -> f64 {
    let n = (q.len() - 1) / 3;
    let mut v = q[q.len() - 1];
    for i in 0..n {
        let (nu, g, a) = (q[3 * i], q[3 * i + 1].exp(), q[3 * i + 2]);
        v += a * (g / PI) / ((f - nu).powi(2) + g * g);
    }
    v
}

pub fn internal_jacobian(q: &[f64], f: &f64, out: &mut [f64]) {
    let n = (q.len() - 1) / 3;
    for i in 0..n {
        let (nu, g, a) = (q[3 * i], q[3 * i + 1].exp(), q[3 * i + 2]);
        let d = f - nu;
        let den = d * d + g * g;
        let shape = g / (PI * den);
        out[3 * i] = a * g * 2.0 * d / (PI * den * den);
        out[3 * i + 1] = a * g * (d * d - g * g) / (PI * den * den);
        out[3 * i + 2] = shape;
    }
    out[q.len() - 1] = 1.0;
}

/// Internal parameter vector for `model`.
pub fn internal_params(model: &SnsModel) -> Vec<f64> {
    model.to_internal()
}

#[derive(Debug, Clone)]
pub struct SnsFit {
    pub model: SnsModel,
    /// Natural-unit estimates `(ν, hwhm, area)…, background`.
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Least-squares fit of all peaks plus background.
pub fn fit_sns(psd: &Spectrum, initial: &SnsModel) -> Result<SnsFit> {
    initial.validate()?;
    if initial.peaks.is_empty() {
        return Err(Error::InvalidParameter("model has no peaks".into()));
    }
    let x = psd.x();
    let step = x.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let narrowest = initial.peaks.iter().map(|p| p.hwhm).fold(f64::INFINITY, f64::min);
    if step > narrowest / 5.0 {
        return Err(Error::GridTooCoarse {
            step,
            limit: narrowest / 5.0,
        });
    }
    let problem = CurveFit::new(&internal_model, x, psd.y()).with_jacobian(&internal_jacobian);
    let internal = least_squares(&problem, &initial.to_internal(), &LmOptions::default())?
        .require_converged()?;
    let model = SnsModel::from_internal(&internal.params);
    let fit = internal.reparameterize(|i, q| {
        if i % 3 == 1 && i + 1 < internal.params.len() {
            (q.exp(), q.exp())
        } else {
            (q, 1.0)
        }
    });
    let warnings = model
        .unresolved_pairs()
        .into_iter()
        .map(|(i, j)| {
            format!(
                "peaks at {:.3} and {:.3} kHz are not resolved (separation below summed half-widths)",
                model.peaks[i].larmor, model.peaks[j].larmor
            )
        })
        .collect();
    Ok(SnsFit {
        model,
        fit,
        warnings,
    })
}

/// One precessing spin population.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinNoiseSource {
    /// kHz/μT
    pub gyromagnetic_ratio: f64,
    /// s
    pub correlation_time: f64,
    /// RMS of the Faraday-angle contribution, rad.
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpinNoiseConfig {
    /// s
    pub duration: f64,
    /// Hz
    pub sample_rate: f64,
    /// μT
    pub field: f64,
    pub sources: Vec<SpinNoiseSource>,
}

impl SpinNoiseConfig {
    /// Both isotopes at their abundances with 1 kHz half-width.
    pub fn natural(atoms: &AtomicData, field_ut: f64) -> Self {
        let tau = 1.0 / (2.0 * PI * 1000.0);
        Self {
            duration: 10.0,
            sample_rate: 400_000.0,
            field: field_ut,
            sources: atoms
                .isotopes()
                .iter()
                .map(|s| SpinNoiseSource {
                    gyromagnetic_ratio: s.gyromagnetic_ratio,
                    correlation_time: tau,
                    amplitude: s.abundance.sqrt() * 1e-6,
                })
                .collect(),
        }
    }

    /// Expected spectrum (kHz axis, per-kHz density) of the simulated signal.
    pub fn expected_model(&self) -> SnsModel {
        SnsModel {
            peaks: self
                .sources
                .iter()
                .map(|s| SnsPeak {
                    larmor: s.gyromagnetic_ratio * self.field,
                    hwhm: 1e-3 / (2.0 * PI * s.correlation_time),
                    area: s.amplitude * s.amplitude,
                })
                .collect(),
            background: 0.0,
        }
    }
}

/// Faraday-rotation noise: sum of real parts of complex Ornstein–Uhlenbeck
/// processes `dz = (2πiν_L − 1/τ) z dt + dW`, sampled exactly and started
/// in equilibrium. `Var(Re z) = amplitude²`.
pub fn simulate_spin_noise(cfg: &SpinNoiseConfig, seed: u64) -> Result<TimeSeries> {
    let fs = cfg.sample_rate;
    if !(fs > 0.0 && cfg.duration > 0.0 && cfg.field >= 0.0) {
        return Err(Error::InvalidParameter(
            "duration and sample rate must be positive, field non-negative".into(),
        ));
    }
    let max_larmor = cfg
        .sources
        .iter()
        .map(|s| s.gyromagnetic_ratio.abs() * cfg.field * 1e3)
        .fold(0.0, f64::max);
    if fs <= 4.0 * max_larmor {
        return Err(Error::Undersampled(format!(
            "sample rate {fs} Hz must exceed 4 × Larmor frequency {max_larmor} Hz"
        )));
    }
    for s in &cfg.sources {
        if !(s.correlation_time > 0.0 && s.amplitude >= 0.0) {
            return Err(Error::InvalidParameter(format!("invalid source {s:?}")));
        }
    }
    let n = (cfg.duration * fs).round() as usize;
    let dt = 1.0 / fs;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut y = vec![0.0; n];
    for s in &cfg.sources {
        if s.amplitude == 0.0 {
            continue;
        }
        let omega = 2.0 * PI * s.gyromagnetic_ratio * cfg.field * 1e3;
        let decay = (-dt / s.correlation_time).exp();
        let (sin, cos) = (omega * dt).sin_cos();
        let (pr, pi) = (decay * cos, decay * sin);
        let kick = s.amplitude * (1.0 - decay * decay).sqrt();
        let (mut re, mut im) = (
            s.amplitude * unit.sample(&mut rng),
            s.amplitude * unit.sample(&mut rng),
        );
        for v in y.iter_mut() {
            *v += re;
            let (nr, ni) = (pr * re - pi * im, pr * im + pi * re);
            re = nr + kick * unit.sample(&mut rng);
            im = ni + kick * unit.sample(&mut rng);
        }
    }
    TimeSeries::new(fs, y, "rad")
}

/// Converts a Welch ASD in unit/√Hz over Hz into a per-kHz PSD over kHz.
pub fn psd_in_khz(asd: &crate::sigproc::PsdEstimate) -> Result<Spectrum> {
    Spectrum::new(
        asd.f.iter().map(|f| f * 1e-3).collect(),
        asd.asd.iter().map(|a| a * a * 1e3).collect(),
        "kHz",
        format!("{}^2/kHz", asd.unit),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic::Isotope;
    use crate::data::linspace;
    use crate::fitkit::check_jacobian;
    use crate::sigproc::{welch_asd, WelchOptions};

    #[test]
    fn larmor_at_ten_microtesla() {
        let atoms = AtomicData::default();
        let f85 = larmor_frequency(atoms.isotope(Isotope::Rb85), 10.0);
        let f87 = larmor_frequency(atoms.isotope(Isotope::Rb87), 10.0);
        assert!((f85 - 46.7).abs() < 0.1, "{f85}");
        assert!((f87 - 70.0).abs() < 0.1, "{f87}");
        assert!((f87 / f85 - 1.499).abs() < 1e-3);
        assert_eq!(larmor_frequency(atoms.isotope(Isotope::Rb85), 0.0), 0.0);
        for b in [1.0, 5.0, 50.0] {
            let r = larmor_frequency(atoms.isotope(Isotope::Rb87), b) / b;
            assert!((r - f87 / 10.0).abs() < 1e-12);
        }
    }

    #[test]
    fn psd_landmarks() {
        let atoms = AtomicData::default();
        let mut m = SnsModel::natural(&atoms, 10.0, 1.0);
        m.background = 0.01;
        let grid = linspace(30.0, 90.0, 601);
        let s = sns_psd(&grid, &m).unwrap();
        assert_eq!(s.len(), 601);
        let p = m.peaks[0];
        let peak = p.area / (PI * p.hwhm) + m.background;
        // the other peak contributes a small tail
        assert!((m.eval(p.larmor) - peak).abs() < 1e-3 * peak);
        let ratio = (m.eval(m.peaks[0].larmor) - 0.01) / (m.eval(m.peaks[1].larmor) - 0.01);
        assert!((ratio / (0.7215 / 0.2785) - 1.0).abs() < 0.01, "{ratio}");
        let flat = SnsModel {
            peaks: vec![SnsPeak { area: 0.0, ..p }],
            background: 0.5,
        };
        assert!(sns_psd(&grid, &flat).unwrap().y().iter().all(|&v| v == 0.5));
    }

    #[test]
    fn jacobian_matches() {
        let mut m = SnsModel::natural(&AtomicData::default(), 10.0, 1.2);
        m.background = 0.02;
        let grid = linspace(30.0, 90.0, 301);
        let err = check_jacobian(&internal_model, &internal_jacobian, &m.to_internal(), &grid);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn noiseless_round_trip() {
        let mut truth = SnsModel::natural(&AtomicData::default(), 10.0, 1.0);
        truth.background = 0.01;
        let grid = linspace(30.0, 90.0, 1201);
        let data = sns_psd(&grid, &truth).unwrap();
        let mut start = truth.clone();
        start.peaks[0].larmor += 0.5;
        start.peaks[1].larmor -= 0.4;
        start.peaks[0].hwhm = 1.3;
        start.peaks[1].area = 0.4;
        let fit = fit_sns(&data, &start).unwrap();
        for (a, b) in fit.model.peaks.iter().zip(&truth.peaks) {
            assert!((a.larmor / b.larmor - 1.0).abs() < 1e-6);
            assert!((a.hwhm / b.hwhm - 1.0).abs() < 1e-6);
            assert!((a.area / b.area - 1.0).abs() < 1e-6);
        }
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn noisy_frequencies_within_half_percent() {
        let truth = SnsModel::natural(&AtomicData::default(), 10.0, 1.0);
        let grid = linspace(30.0, 90.0, 1201);
        let clean = sns_psd(&grid, &truth).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let unit = Normal::new(0.0, 1.0).unwrap();
        let noisy: Vec<f64> = clean
            .y()
            .iter()
            .map(|v| v * (1.0 + 0.05 * unit.sample(&mut rng)))
            .collect();
        let data = Spectrum::new(grid, noisy, "kHz", "arb").unwrap();
        let fit = fit_sns(&data, &truth).unwrap();
        for (a, b) in fit.model.peaks.iter().zip(&truth.peaks) {
            assert!((a.larmor / b.larmor - 1.0).abs() < 5e-3);
        }
    }

    #[test]
    fn unresolved_peaks_warn() {
        let m = SnsModel {
            peaks: vec![
                SnsPeak { larmor: 50.0, hwhm: 1.0, area: 1.0 },
                SnsPeak { larmor: 51.5, hwhm: 1.0, area: 0.5 },
            ],
            background: 0.0,
        };
        let data = sns_psd(&linspace(40.0, 60.0, 801), &m).unwrap();
        let fit = fit_sns(&data, &m).unwrap();
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn coarse_grid_rejected() {
        let m = SnsModel::natural(&AtomicData::default(), 10.0, 1.0);
        let data = sns_psd(&linspace(30.0, 90.0, 61), &m).unwrap();
        assert!(matches!(fit_sns(&data, &m), Err(Error::GridTooCoarse { .. })));
    }

    #[test]
    fn undersampling_rejected() {
        let mut cfg = SpinNoiseConfig::natural(&AtomicData::default(), 10.0);
        cfg.sample_rate = 250_000.0;
        assert!(matches!(simulate_spin_noise(&cfg, 0), Err(Error::Undersampled(_))));
    }

    #[test]
    fn zero_amplitude_gives_zero_series() {
        let mut cfg = SpinNoiseConfig::natural(&AtomicData::default(), 10.0);
        cfg.duration = 0.01;
        for s in &mut cfg.sources {
            s.amplitude = 0.0;
        }
        let ts = simulate_spin_noise(&cfg, 1).unwrap();
        assert!(ts.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_source_recovers_larmor_and_width() {
        let tau = 1.0 / (2.0 * PI * 1000.0);
        let cfg = SpinNoiseConfig {
            duration: 2000.0 * tau,
            sample_rate: 400_000.0,
            field: 10.0,
            sources: vec![SpinNoiseSource {
                gyromagnetic_ratio: 4.667,
                correlation_time: tau,
                amplitude: 1.0,
            }],
        };
        let ts = simulate_spin_noise(&cfg, 4).unwrap();
        let est = welch_asd(&ts, &WelchOptions::new(4000)).unwrap();
        // Parseval: integrated PSD against the time-domain variance
        assert!((est.total_power() / ts.variance() - 1.0).abs() < 0.05);
        let psd = psd_in_khz(&est).unwrap();
        let fit = fit_sns(&psd, &cfg.expected_model()).unwrap();
        let p = fit.model.peaks[0];
        assert!((p.larmor / 46.67 - 1.0).abs() < 0.02);
        assert!((p.hwhm - 1.0).abs() < 0.1, "{}", p.hwhm);
    }
}
