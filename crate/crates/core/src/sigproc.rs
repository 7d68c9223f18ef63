//! Welch spectral estimation, digital lock-in demodulation and magnetic
//! sensitivity calibration.
//!
//! Spectral densities are one-sided amplitude densities (`unit/√Hz`). The
//! field-equivalent sensitivity is
//!
//! ```text
//! S_B(f) = S_v(f) / (slope · |R(f)|)
//! ```
//!
//! with `slope = dv/dB`, or `A_amp/ΔB` when only the dispersive curve's
//! peak-to-peak height and half-width are known.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use rustfft::num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rustfft::FftPlanner;

use crate::data::{Spectrum, TimeSeries};
use crate::error::{Error, Result};
use crate::io::parse_table;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|j| 0.5 - 0.5 * (2.0 * PI * j as f64 / n as f64).cos())
                .collect(),
        }
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Window::Hann => "hann",
            Window::Rectangular => "rectangular",
        })
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "hann" | "hanning" => Ok(Window::Hann),
            "rect" | "rectangular" | "boxcar" => Ok(Window::Rectangular),
            other => Err(Error::InvalidParameter(format!("unknown window `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WelchOptions {
    pub segment_length: usize,
    /// Fractional overlap in `[0, 1)`.
    pub overlap: f64,
    pub window: Window,
}

impl WelchOptions {
    pub fn new(segment_length: usize) -> Self {
        Self {
            segment_length,
            overlap: 0.5,
            window: Window::Hann,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PsdEstimate {
    pub f: Vec<f64>,
    pub asd: Vec<f64>,
    /// Unit of the underlying signal; the density is `unit/√Hz`.
    pub unit: String,
    pub window: Window,
    pub segment_length: usize,
    pub overlap: f64,
    /// Equivalent noise bandwidth, Hz.
    pub enbw: f64,
    pub segments: usize,
}

impl PsdEstimate {
    pub fn resolution(&self) -> f64 {
        self.f[1] - self.f[0]
    }

    /// Power spectral density, `unit²/Hz`.
    pub fn psd(&self) -> Vec<f64> {
        self.asd.iter().map(|a| a * a).collect()
    }

    /// `Σ PSD·Δf`, the variance estimate.
    pub fn total_power(&self) -> f64 {
        self.psd().iter().sum::<f64>() * self.resolution()
    }

    pub fn to_spectrum(&self) -> Result<Spectrum> {
        Spectrum::new(
            self.f.clone(),
            self.asd.clone(),
            "Hz",
            format!("{}/sqrtHz", self.unit),
        )
    }

    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::new();
        writeln!(out, "# window={}", self.window).unwrap();
        writeln!(out, "# segment_length={}", self.segment_length).unwrap();
        writeln!(out, "# overlap={}", self.overlap).unwrap();
        writeln!(out, "# enbw={}", self.enbw).unwrap();
        writeln!(out, "# segments={}", self.segments).unwrap();
        writeln!(out, "f_Hz,asd_{}", self.unit).unwrap();
        for (f, a) in self.f.iter().zip(&self.asd) {
            writeln!(out, "{f},{a}").unwrap();
        }
        out
    }

    pub fn from_csv(reader: impl Read) -> Result<Self> {
        let table = parse_table(reader)?;
        if table.header.len() != 2 || table.rows.len() < 2 {
            return Err(Error::Parse {
                line: 0,
                msg: "PSD table needs two columns and at least two rows".into(),
            });
        }
        let meta = |key: &str| {
            table.meta.get(key).cloned().ok_or_else(|| Error::Parse {
                line: 0,
                msg: format!("missing `# {key}=` comment"),
            })
        };
        let num = |key: &str| -> Result<f64> {
            let v = meta(key)?;
            v.parse().map_err(|_| Error::Parse {
                line: 0,
                msg: format!("bad `{key}` value `{v}`"),
            })
        };
        let unit = table.header[1]
            .strip_prefix("asd_")
            .unwrap_or(&table.header[1])
            .to_string();
        Ok(Self {
            f: table.column(0),
            asd: table.column(1),
            unit,
            window: meta("window")?.parse()?,
            segment_length: num("segment_length")? as usize,
            overlap: num("overlap")?,
            enbw: num("enbw")?,
            segments: num("segments").unwrap_or(0.0) as usize,
        })
    }
}

/// One-sided Welch ASD with per-segment mean removal.
///
/// Segments are accumulated in order, so results do not depend on scheduling.
pub fn welch_asd(ts: &TimeSeries, opts: &WelchOptions) -> Result<PsdEstimate> {
    let l = opts.segment_length;
    if l < 4 {
        return Err(Error::InvalidParameter(format!("segment length {l} too short")));
    }
    if !(0.0..1.0).contains(&opts.overlap) {
        return Err(Error::InvalidParameter(format!(
            "overlap must be in [0, 1), got {}",
            opts.overlap
        )));
    }
    let y = ts.values();
    if y.len() < 2 * l {
        return Err(Error::InsufficientData(format!(
            "{} samples, need at least twice the segment length {l}",
            y.len()
        )));
    }
    let step = ((l as f64 * (1.0 - opts.overlap)).round() as usize).max(1);
    let w = opts.window.coefficients(l);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|v| v * v).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(l);
    let nbins = l / 2 + 1;
    let mut acc = vec![0.0; nbins];
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    let mut segments = 0usize;
    let mut start = 0usize;
    while start + l <= y.len() {
        let seg = &y[start..start + l];
        let mean = seg.iter().sum::<f64>() / l as f64;
        for ((b, v), wj) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex64::new((v - mean) * wj, 0.0);
        }
        fft.process(&mut buf);
        for (a, x) in acc.iter_mut().zip(&buf) {
            *a += x.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let fs = ts.fs();
    let scale = 1.0 / (fs * s2 * segments as f64);
    let asd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let edge = k == 0 || (l.is_multiple_of(2) && k == l / 2);
            let one_sided = if edge { 1.0 } else { 2.0 };
            (one_sided * a * scale).sqrt()
        })
        .collect();
    Ok(PsdEstimate {
        f: (0..nbins).map(|k| k as f64 * fs / l as f64).collect(),
        asd,
        unit: ts.y_unit.clone(),
        window: opts.window,
        segment_length: l,
        overlap: opts.overlap,
        enbw: fs * s2 / (s1 * s1),
        segments,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LowPass {
    /// One-pole IIR, `y += α(x − y)` with `α = 1 − exp(−2π·cutoff/fs)`.
    SinglePole { cutoff: f64 },
    /// Moving average over an integer number of reference periods. Early
    /// samples average what is available.
    Boxcar { periods: usize },
}

/// Mixes with `2·sin` and `2·cos` references at `ref_freq` and low-pass
/// filters. `A·sin(2πft + φ)` settles to in-phase `A·cos(φ − ref_phase)` and
/// quadrature `A·sin(φ − ref_phase)`.
pub fn lock_in(
    ts: &TimeSeries,
    ref_freq: f64,
    ref_phase: f64,
    filter: LowPass,
) -> Result<(TimeSeries, TimeSeries)> {
    let fs = ts.fs();
    if !(ref_freq > 0.0) {
        return Err(Error::InvalidParameter("reference frequency must be positive".into()));
    }
    if ref_freq >= fs / 2.0 {
        return Err(Error::Aliasing {
            ref_freq,
            nyquist: fs / 2.0,
        });
    }
    let y = ts.values();
    let mut xi = Vec::with_capacity(y.len());
    let mut xq = Vec::with_capacity(y.len());
    for (k, v) in y.iter().enumerate() {
        let phase = 2.0 * PI * ref_freq * ts.time(k) + ref_phase;
        let (s, c) = phase.sin_cos();
        xi.push(2.0 * v * s);
        xq.push(2.0 * v * c);
    }
    let (fi, fq) = match filter {
        LowPass::SinglePole { cutoff } => {
            if !(cutoff > 0.0 && cutoff < ref_freq / 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "low-pass cutoff {cutoff} Hz must lie in (0, ref/2)"
                )));
            }
            let alpha = 1.0 - (-2.0 * PI * cutoff / fs).exp();
            (single_pole(&xi, alpha), single_pole(&xq, alpha))
        }
        LowPass::Boxcar { periods } => {
            if periods == 0 {
                return Err(Error::InvalidParameter("boxcar needs at least one period".into()));
            }
            let width = ((periods as f64 * fs / ref_freq).round() as usize).max(1);
            (boxcar(&xi, width), boxcar(&xq, width))
        }
    };
    Ok((
        TimeSeries::with_start(ts.t0(), fs, fi, ts.y_unit.clone())?,
        TimeSeries::with_start(ts.t0(), fs, fq, ts.y_unit.clone())?,
    ))
}

/// Lock-in outputs averaged over the record after `settle` seconds.
pub fn lock_in_average(
    ts: &TimeSeries,
    ref_freq: f64,
    ref_phase: f64,
    filter: LowPass,
    settle: f64,
) -> Result<(f64, f64)> {
    let (x, y) = lock_in(ts, ref_freq, ref_phase, filter)?;
    let start = (settle * ts.fs()).ceil() as usize;
    if start >= ts.len() {
        return Err(Error::InsufficientData(format!(
            "settling time {settle} s covers the whole {} s record",
            ts.duration()
        )));
    }
    Ok((x.tail(start).mean(), y.tail(start).mean()))
}

fn single_pole(x: &[f64], alpha: f64) -> Vec<f64> {
    let mut state = 0.0;
    x.iter()
        .map(|v| {
            state += alpha * (v - state);
            state
        })
        .collect()
}

fn boxcar(x: &[f64], width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    let mut sum = 0.0;
    for k in 0..x.len() {
        sum += x[k];
        if k >= width {
            sum -= x[k - width];
        }
        out.push(sum / (k + 1).min(width) as f64);
    }
    out
}

/// Normalized frequency response of the magnetometer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrequencyResponse {
    Flat,
    SinglePole { cutoff: f64 },
}

impl FrequencyResponse {
    pub fn complex(&self, f: f64) -> Complex64 {
        match *self {
            Self::Flat => Complex64::new(1.0, 0.0),
            Self::SinglePole { cutoff } => Complex64::new(1.0, 0.0) / Complex64::new(1.0, f / cutoff),
        }
    }

    pub fn magnitude(&self, f: f64) -> f64 {
        self.complex(f).norm()
    }
}

/// Minimum `|R(f)|` accepted by [`sensitivity`].
pub const MIN_RESPONSE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Slope {
    /// dv/dB, V/nT.
    Direct(f64),
    /// Peak-to-peak height `A_amp` (V) and half-width ΔB (nT) of the dispersive curve.
    Surrogate { delta_b: f64, peak_to_peak: f64 },
}

impl Slope {
    /// V/nT
    pub fn value(&self) -> Result<f64> {
        match *self {
            Slope::Direct(s) if s > 0.0 => Ok(s),
            Slope::Surrogate {
                delta_b,
                peak_to_peak,
            } if delta_b > 0.0 && peak_to_peak > 0.0 => Ok(peak_to_peak / delta_b),
            _ => Err(Error::InvalidParameter("slope inputs must be positive".into())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationInputs {
    pub slope: Slope,
    pub response: FrequencyResponse,
}

/// Field-equivalent noise density in fT/√Hz from a voltage ASD in V/√Hz.
pub fn sensitivity(asd: &PsdEstimate, cal: &CalibrationInputs) -> Result<Spectrum> {
    let slope = cal.slope.value()?;
    let mut y = Vec::with_capacity(asd.f.len());
    for (&f, &a) in asd.f.iter().zip(&asd.asd) {
        let r = cal.response.magnitude(f);
        if !(r >= MIN_RESPONSE) {
            return Err(Error::ZeroResponse { freq: f, response: r });
        }
        // V/√Hz ÷ V/nT = nT/√Hz
        y.push(a / (slope * r) * 1e6);
    }
    Spectrum::new(asd.f.clone(), y, "Hz", "fT/sqrtHz")
}

/// Median of the spectrum over `lo ≤ f ≤ hi`.
pub fn noise_floor(sens: &Spectrum, lo: f64, hi: f64) -> Result<f64> {
    let mut v: Vec<f64> = sens
        .iter()
        .filter(|(f, _)| *f >= lo && *f <= hi)
        .map(|(_, y)| y)
        .collect();
    if v.is_empty() {
        return Err(Error::EmptyBand { lo, hi });
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    })
}

/// Amplitude of a sinusoidal tone from an ASD spectrum: peak power summed
/// over `±half_width` bins around `freq`, less the band median floor.
pub fn tone_amplitude(asd: &Spectrum, freq: f64, half_width: usize) -> Result<f64> {
    let f = asd.x();
    let df = f[1] - f[0];
    let centre = ((freq - f[0]) / df).round();
    if centre < 0.0 || centre as usize >= f.len() {
        return Err(Error::EmptyBand { lo: freq, hi: freq });
    }
    let c = centre as usize;
    let lo = c.saturating_sub(half_width);
    let hi = (c + half_width).min(f.len() - 1);
    let floor = noise_floor(asd, f[lo.saturating_sub(10 * half_width)], f[(hi + 10 * half_width).min(f.len() - 1)])?;
    let power: f64 = asd.y()[lo..=hi]
        .iter()
        .map(|a| (a * a - floor * floor) * df)
        .sum();
    Ok((2.0 * power.max(0.0)).sqrt())
}

/// Synthetic lock-in quadrature record for sensitivity calibration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorNoise {
    /// Magnetic noise ahead of the response, fT/√Hz.
    pub magnetic: f64,
    /// Electronic noise after the response, field-equivalent fT/√Hz.
    pub electronic: f64,
    /// Optional calibration tone: (Hz, amplitude in fT).
    pub tone: Option<(f64, f64)>,
    pub slope: f64,
    pub response: FrequencyResponse,
    pub sample_rate: f64,
    pub duration: f64,
}

impl SensorNoise {
    /// Operating-point scenario: 12 fT/√Hz total of which 2 fT/√Hz electronic.
    pub fn operating_point() -> Self {
        Self {
            magnetic: (12.0f64 * 12.0 - 2.0 * 2.0).sqrt(),
            electronic: 2.0,
            tone: None,
            slope: 1.0,
            response: FrequencyResponse::SinglePole { cutoff: 200.0 },
            sample_rate: 2000.0,
            duration: 100.0,
        }
    }

    /// Electronic noise alone (probe light blocked).
    pub fn electronic_only() -> Self {
        Self {
            magnetic: 0.0,
            ..Self::operating_point()
        }
    }
}

/// Generates the quadrature voltage `slope·(R ∗ b)(t) + e(t)`, applying the
/// response exactly in the frequency domain.
pub fn synthesize_quadrature(model: &SensorNoise, seed: u64) -> Result<TimeSeries> {
    let fs = model.sample_rate;
    let n = (model.duration * fs).round() as usize;
    if n < 16 {
        return Err(Error::InsufficientData(format!("{n} samples")));
    }
    if model.magnetic < 0.0 || model.electronic < 0.0 || !(model.slope > 0.0) {
        return Err(Error::InvalidParameter("noise densities and slope must be non-negative".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    // one-sided density d ↔ per-sample σ = d·√(fs/2)
    let sigma_b = model.magnetic * (fs / 2.0).sqrt();
    let sigma_e = model.electronic * (fs / 2.0).sqrt();
    let mut field: Vec<Complex64> = (0..n)
        .map(|k| {
            let mut b = sigma_b * unit.sample(&mut rng);
            if let Some((f, a)) = model.tone {
                b += a * (2.0 * PI * f * k as f64 / fs).sin();
            }
            Complex64::new(b, 0.0)
        })
        .collect();
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(n).process(&mut field);
    for (k, x) in field.iter_mut().enumerate() {
        let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
        let r = model.response.complex(kk.abs() * fs / n as f64);
        *x *= if kk < 0.0 { r.conj() } else { r };
    }
    planner.plan_fft_inverse(n).process(&mut field);
    let volts_per_ft = model.slope * 1e-6;
    let y = field
        .iter()
        .map(|x| (x.re / n as f64 + sigma_e * unit.sample(&mut rng)) * volts_per_ft)
        .collect();
    TimeSeries::new(fs, y, "V")
}
