//! Zero-field (Hanle) resonance of the single-beam magnetometer.
//!
//! In-phase (absorptive) and out-of-phase (dispersive) components versus the
//! transverse field `Bx`:
//!
//! ```text
//! P_in(Bx)  = A₀ ΔB² / ((Bx − Bx₀)² + ΔB²) + C₀
//! P_out(Bx) = A₁ (Bx − Bx₀) / ((Bx − Bx₀)² + ΔB²) + C₁
//! ```
//!
//! `A` multiplies the resonance term and `C` is the additive offset. The
//! half-width ΔB maps to the total spin relaxation rate through the
//! gyromagnetic ratio.

mod bloch;

pub use bloch::{
    bloch_simulate, modulated_response, steady_state_sweep, BlochConfig, BlochOutput,
    FieldWaveform,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::Spectrum;
use crate::error::{Error, Result};
use crate::fitkit::{least_squares, CurveFit, FitResult, LmOptions};

/// Bare electron gyromagnetic ratio, rad·s⁻¹·nT⁻¹ (2π × 28.025 Hz/nT).
pub const ELECTRON_GYROMAGNETIC: f64 = 2.0 * std::f64::consts::PI * 28.024_951_4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HanleParams {
    pub a0: f64,
    pub a1: f64,
    pub c0: f64,
    pub c1: f64,
    /// Residual field along x, nT.
    pub bx0: f64,
    /// Half width at half maximum, nT.
    pub delta_b: f64,
}

impl HanleParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta_b > 0.0 && self.delta_b.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "ΔB must be positive, got {}",
                self.delta_b
            )));
        }
        let all = [self.a0, self.a1, self.c0, self.c1, self.bx0];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite resonance parameter".into()));
        }
        Ok(())
    }

    /// Starting point read off the data: offsets from the sweep edges and
    /// mean, peak position and half-maximum width from the in-phase curve,
    /// dispersive amplitude from the quadrature peak-to-peak.
    pub fn initial_guess(data_in: &Spectrum, data_quad: &Spectrum) -> Self {
        let (x, y) = (data_in.x(), data_in.y());
        let c0 = 0.5 * (y[0] + y[y.len() - 1]);
        let k = (0..y.len())
            .max_by(|&a, &b| (y[a] - c0).abs().total_cmp(&(y[b] - c0).abs()))
            .unwrap_or(0);
        let a0 = y[k] - c0;
        let above: Vec<f64> = x
            .iter()
            .zip(y)
            .filter(|(_, v)| (*v - c0) * a0.signum() >= 0.5 * a0.abs())
            .map(|(b, _)| *b)
            .collect();
        let width = match (above.first(), above.last()) {
            (Some(lo), Some(hi)) if hi > lo => 0.5 * (hi - lo),
            _ => 0.1 * data_in.span(),
        };
        let q = data_quad.y();
        let c1 = q.iter().sum::<f64>() / q.len() as f64;
        let (imax, imin) = (0..q.len()).fold((0, 0), |(hi, lo), i| {
            (if q[i] > q[hi] { i } else { hi }, if q[i] < q[lo] { i } else { lo })
        });
        let sign = if data_quad.x()[imax] >= data_quad.x()[imin] { 1.0 } else { -1.0 };
        let delta_b = width.max(1e-6 * data_in.span());
        Self {
            a0,
            a1: sign * (q[imax] - q[imin]) * delta_b,
            c0,
            c1,
            bx0: x[k],
            delta_b,
        }
    }

    fn to_internal(self) -> [f64; 6] {
        [self.a0, self.a1, self.c0, self.c1, self.bx0, self.delta_b.ln()]
    }

    fn from_internal(q: &[f64]) -> Self {
        Self {
            a0: q[0],
            a1: q[1],
            c0: q[2],
            c1: q[3],
            bx0: q[4],
            delta_b: q[5].exp(),
        }
    }
}

pub fn in_phase(bx: f64, p: &HanleParams) -> f64 {
    let d = bx - p.bx0;
    let w2 = p.delta_b * p.delta_b;
    p.a0 * w2 / (d * d + w2) + p.c0
}

pub fn out_of_phase(bx: f64, p: &HanleParams) -> f64 {
    let d = bx - p.bx0;
    p.a1 * d / (d * d + p.delta_b * p.delta_b) + p.c1
}

/// Gradient of [`in_phase`] over `(A₀, A₁, C₀, C₁, Bx₀, ln ΔB)`.
pub fn in_phase_gradient(bx: f64, p: &HanleParams) -> [f64; 6] {
    let d = bx - p.bx0;
    let w2 = p.delta_b * p.delta_b;
    let q = d * d + w2;
    let shape = w2 / q;
    [
        shape,
        0.0,
        1.0,
        0.0,
        p.a0 * w2 * 2.0 * d / (q * q),
        p.a0 * 2.0 * w2 * d * d / (q * q),
    ]
}

/// Gradient of [`out_of_phase`] over `(A₀, A₁, C₀, C₁, Bx₀, ln ΔB)`.
pub fn out_of_phase_gradient(bx: f64, p: &HanleParams) -> [f64; 6] {
    let d = bx - p.bx0;
    let w2 = p.delta_b * p.delta_b;
    let q = d * d + w2;
    [
        0.0,
        d / q,
        0.0,
        1.0,
        p.a1 * (d * d - w2) / (q * q),
        -p.a1 * 2.0 * d * w2 / (q * q),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Channel {
    InPhase,
    Quadrature,
}

/// Joint model over both channels in the internal parameterization.
pub fn joint_model(q: &[f64], x: &(Channel, f64)) -> f64 {
    let p = HanleParams::from_internal(q);
    match x.0 {
        Channel::InPhase => in_phase(x.1, &p),
        Channel::Quadrature => out_of_phase(x.1, &p),
    }
}

pub fn joint_jacobian(q: &[f64], x: &(Channel, f64), out: &mut [f64]) {
    let p = HanleParams::from_internal(q);
    let g = match x.0 {
        Channel::InPhase => in_phase_gradient(x.1, &p),
        Channel::Quadrature => out_of_phase_gradient(x.1, &p),
    };
    out.copy_from_slice(&g);
}

/// Internal parameter vector `(A₀, A₁, C₀, C₁, Bx₀, ln ΔB)` for `p`.
pub fn internal_params(p: &HanleParams) -> [f64; 6] {
    p.to_internal()
}

#[derive(Debug, Clone)]
pub struct HanleFit {
    pub params: HanleParams,
    /// Natural-unit estimates over `(A₀, A₁, C₀, C₁, Bx₀, ΔB)`.
    pub fit: FitResult,
}

/// Joint fit of both components with shared `Bx₀` and `ΔB`.
pub fn fit_zero_field_resonance(
    data_in: &Spectrum,
    data_quad: &Spectrum,
    initial: &HanleParams,
) -> Result<HanleFit> {
    initial.validate()?;
    if data_in.x() != data_quad.x() {
        return Err(Error::GridMismatch(
            "in-phase and quadrature sweeps must share the Bx grid".into(),
        ));
    }
    let mut x = Vec::with_capacity(2 * data_in.len());
    let mut y = Vec::with_capacity(2 * data_in.len());
    for (b, v) in data_in.iter() {
        x.push((Channel::InPhase, b));
        y.push(v);
    }
    for (b, v) in data_quad.iter() {
        x.push((Channel::Quadrature, b));
        y.push(v);
    }
    let problem = CurveFit::new(&joint_model, &x, &y).with_jacobian(&joint_jacobian);
    let internal = match least_squares(&problem, &initial.to_internal(), &LmOptions::default()) {
        Ok(fit) => fit.require_converged()?,
        Err(Error::SingularNormalEquations) => return Err(Error::ZeroAmplitude),
        Err(e) => return Err(e),
    };
    let params = HanleParams::from_internal(&internal.params);
    let fit = internal.reparameterize(|i, q| if i == 5 { (q.exp(), q.exp()) } else { (q, 1.0) });
    let se = fit.std_errors();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let insignificant = |peak: f64, v: f64, s: f64| {
        !(v.abs() > 3.0 * s) || !s.is_finite() || peak.abs() <= 1e-9 * scale
    };
    if insignificant(params.a0, params.a0, se[0])
        && insignificant(params.a1 / params.delta_b, params.a1, se[1])
    {
        return Err(Error::ZeroAmplitude);
    }
    Ok(HanleFit { params, fit })
}

/// Synthetic resonance sweep. Gaussian noise on each channel has standard
/// deviation `noise_fraction` times that channel's resonance amplitude
/// (`|A₀|` in phase, the peak-to-peak `|A₁|/ΔB` in quadrature).
pub fn synthesize_resonance(
    grid: &[f64],
    p: &HanleParams,
    noise_fraction: f64,
    seed: u64,
) -> Result<(Spectrum, Spectrum)> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let s_in = noise_fraction * p.a0.abs();
    let s_q = noise_fraction * p.a1.abs() / p.delta_b;
    let mut yi = Vec::with_capacity(grid.len());
    let mut yq = Vec::with_capacity(grid.len());
    for &b in grid {
        yi.push(in_phase(b, p) + s_in * unit.sample(&mut rng));
        yq.push(out_of_phase(b, p) + s_q * unit.sample(&mut rng));
    }
    Ok((
        Spectrum::new(grid.to_vec(), yi, "nT", "V")?,
        Spectrum::new(grid.to_vec(), yq, "nT", "V")?,
    ))
}

/// Total relaxation rate (s⁻¹) from the resonance half-width (nT).
///
/// `slowing_factor` divides the electron gyromagnetic ratio to account for
/// nuclear slowing; 1 gives the bare-electron conversion.
pub fn relaxation_from_linewidth(delta_b: f64, gyromagnetic: f64, slowing_factor: f64) -> Result<f64> {
    if !(delta_b >= 0.0 && gyromagnetic > 0.0 && slowing_factor > 0.0) {
        return Err(Error::InvalidParameter(
            "ΔB must be non-negative; gyromagnetic ratio and slowing factor positive".into(),
        ));
    }
    Ok(gyromagnetic * delta_b / slowing_factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::linspace;
    use crate::fitkit::check_jacobian;

    fn paper_params() -> HanleParams {
        HanleParams {
            a0: 1.2,
            a1: 9.0,
            c0: 0.3,
            c1: -0.05,
            bx0: 0.8,
            delta_b: 10.5,
        }
    }

    #[test]
    fn in_phase_landmarks() {
        let p = paper_params();
        assert!((in_phase(p.bx0, &p) - (p.a0 + p.c0)).abs() < 1e-15);
        assert!((in_phase(p.bx0 + p.delta_b, &p) - (p.a0 / 2.0 + p.c0)).abs() < 1e-15);
        assert!((in_phase(p.bx0 - p.delta_b, &p) - (p.a0 / 2.0 + p.c0)).abs() < 1e-15);
        assert!((in_phase(1e9, &p) - p.c0).abs() < 1e-12);
    }

    #[test]
    fn out_of_phase_landmarks() {
        let p = paper_params();
        assert_eq!(out_of_phase(p.bx0, &p), p.c1);
        let hi = out_of_phase(p.bx0 + p.delta_b, &p);
        let lo = out_of_phase(p.bx0 - p.delta_b, &p);
        assert!((hi - (p.c1 + p.a1 / (2.0 * p.delta_b))).abs() < 1e-14);
        assert!((lo - (p.c1 - p.a1 / (2.0 * p.delta_b))).abs() < 1e-14);
        // extrema: neighbours are lower
        assert!(out_of_phase(p.bx0 + p.delta_b * 1.01, &p) < hi);
        assert!(out_of_phase(p.bx0 + p.delta_b * 0.99, &p) < hi);
        for d in [0.1, 1.0, 7.0, 40.0] {
            let s = out_of_phase(p.bx0 + d, &p) + out_of_phase(p.bx0 - d, &p);
            assert!((s - 2.0 * p.c1).abs() < 1e-14);
        }
    }

    #[test]
    fn jacobians_match_finite_differences() {
        let p = paper_params();
        let grid = linspace(-60.0, 60.0, 121);
        let x: Vec<_> = grid
            .iter()
            .flat_map(|&b| [(Channel::InPhase, b), (Channel::Quadrature, b)])
            .collect();
        let err = check_jacobian(&joint_model, &joint_jacobian, &p.to_internal(), &x);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn noiseless_round_trip() {
        let truth = paper_params();
        let grid = linspace(-60.0, 60.0, 241);
        let (i, q) = synthesize_resonance(&grid, &truth, 0.0, 0).unwrap();
        let start = HanleParams {
            a0: 1.0,
            a1: 5.0,
            c0: 0.0,
            c1: 0.0,
            bx0: 0.0,
            delta_b: 6.0,
        };
        let fit = fit_zero_field_resonance(&i, &q, &start).unwrap();
        let got = fit.params;
        let rel = |a: f64, b: f64| ((a - b) / b).abs();
        assert!(rel(got.a0, truth.a0) < 1e-6);
        assert!(rel(got.a1, truth.a1) < 1e-6);
        assert!(rel(got.c0, truth.c0) < 1e-6);
        assert!(rel(got.c1, truth.c1) < 1e-6);
        assert!(rel(got.bx0, truth.bx0) < 1e-6);
        assert!(rel(got.delta_b, truth.delta_b) < 1e-6);
    }

    #[test]
    fn noisy_linewidth_within_two_percent() {
        let truth = paper_params();
        let grid = linspace(-60.0, 60.0, 241);
        let start = HanleParams {
            delta_b: 8.0,
            bx0: 0.0,
            ..truth
        };
        for seed in 0..20 {
            let (i, q) = synthesize_resonance(&grid, &truth, 0.01, seed).unwrap();
            let fit = fit_zero_field_resonance(&i, &q, &start).unwrap();
            assert!((fit.params.delta_b / 10.5 - 1.0).abs() < 0.02);
        }
    }

    #[test]
    fn initial_guess_from_data() {
        let truth = paper_params();
        let grid = linspace(-60.0, 60.0, 241);
        let (i, q) = synthesize_resonance(&grid, &truth, 0.0, 0).unwrap();
        let g = HanleParams::initial_guess(&i, &q);
        assert!((g.bx0 - truth.bx0).abs() <= 0.5);
        assert!((g.delta_b / truth.delta_b - 1.0).abs() < 0.1, "{g:?}");
        assert!(g.a1 > 0.0);
        let fit = fit_zero_field_resonance(&i, &q, &g).unwrap();
        assert!((fit.params.delta_b / truth.delta_b - 1.0).abs() < 1e-6);
    }

    #[test]
    fn grid_mismatch() {
        let p = paper_params();
        let (i, _) = synthesize_resonance(&linspace(-50.0, 50.0, 101), &p, 0.0, 0).unwrap();
        let (_, q) = synthesize_resonance(&linspace(-50.0, 50.0, 102), &p, 0.0, 0).unwrap();
        assert!(matches!(
            fit_zero_field_resonance(&i, &q, &p),
            Err(Error::GridMismatch(_))
        ));
    }

    #[test]
    fn pure_offset_data_is_flagged() {
        let flat = HanleParams {
            a0: 0.0,
            a1: 0.0,
            ..paper_params()
        };
        let grid = linspace(-60.0, 60.0, 121);
        let (i, q) = synthesize_resonance(&grid, &flat, 0.0, 0).unwrap();
        let res = fit_zero_field_resonance(&i, &q, &paper_params());
        assert!(
            matches!(res, Err(Error::ZeroAmplitude) | Err(Error::NonConvergence { .. })),
            "{res:?}"
        );
    }

    #[test]
    fn relaxation_rate_conversion() {
        let rate = relaxation_from_linewidth(10.5, ELECTRON_GYROMAGNETIC, 1.0).unwrap();
        assert!((rate - 1849.0).abs() < 1.0, "{rate}");
        assert!((rate / 1800.0 - 1.0).abs() < 0.05);
        assert_eq!(relaxation_from_linewidth(0.0, ELECTRON_GYROMAGNETIC, 1.0).unwrap(), 0.0);
        // half pumping, half collisional at 50 % polarization
        assert!((rate / 2.0 / 900.0 - 1.0).abs() < 0.05);
        let slowed = relaxation_from_linewidth(10.5, ELECTRON_GYROMAGNETIC, 4.0).unwrap();
        assert!((slowed * 4.0 - rate).abs() < 1e-9);
    }
}
