//! Sampled records shared by every module: [`Spectrum`] for (x, y) curves on
//! a strictly increasing grid and [`TimeSeries`] for uniformly sampled signals.

use crate::error::{Error, Result};

/// An (x, y) record on a strictly increasing grid with unit tags.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    x: Vec<f64>,
    y: Vec<f64>,
    pub x_unit: String,
    pub y_unit: String,
}

impl Spectrum {
    pub fn new(
        x: Vec<f64>,
        y: Vec<f64>,
        x_unit: impl Into<String>,
        y_unit: impl Into<String>,
    ) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::GridMismatch(format!(
                "x has {} samples, y has {}",
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::InsufficientData(
                "a spectrum needs at least 2 samples".into(),
            ));
        }
        if let Some(i) = x.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::DegenerateGrid(format!(
                "x is not strictly increasing at index {}",
                i + 1
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite sample".into()));
        }
        Ok(Self {
            x,
            y,
            x_unit: x_unit.into(),
            y_unit: y_unit.into(),
        })
    }

    /// Evaluates `f` on `x` and wraps the result.
    pub fn from_fn(
        x: Vec<f64>,
        x_unit: impl Into<String>,
        y_unit: impl Into<String>,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        let y = x.iter().map(|&v| f(v)).collect();
        Self::new(x, y, x_unit, y_unit)
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn span(&self) -> f64 {
        self.x[self.x.len() - 1] - self.x[0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    pub fn into_parts(self) -> (Vec<f64>, Vec<f64>) {
        (self.x, self.y)
    }
}

/// `n` evenly spaced points from `start` to `stop` inclusive.
pub fn linspace(start: f64, stop: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![start],
        _ => {
            let step = (stop - start) / (n - 1) as f64;
            (0..n).map(|i| start + step * i as f64).collect()
        }
    }
}

/// A uniformly sampled signal. Sample `k` sits at `t0 + k / fs`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    t0: f64,
    fs: f64,
    y: Vec<f64>,
    pub t_unit: String,
    pub y_unit: String,
}

impl TimeSeries {
    pub fn new(fs: f64, y: Vec<f64>, y_unit: impl Into<String>) -> Result<Self> {
        Self::with_start(0.0, fs, y, y_unit)
    }

    pub fn with_start(t0: f64, fs: f64, y: Vec<f64>, y_unit: impl Into<String>) -> Result<Self> {
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "sample rate must be positive, got {fs}"
            )));
        }
        Ok(Self {
            t0,
            fs,
            y,
            t_unit: "s".into(),
            y_unit: y_unit.into(),
        })
    }

    /// Builds a series from explicit sample times, rejecting jittered grids.
    pub fn from_samples(t: &[f64], y: Vec<f64>, y_unit: impl Into<String>) -> Result<Self> {
        if t.len() != y.len() {
            return Err(Error::GridMismatch(format!(
                "t has {} samples, y has {}",
                t.len(),
                y.len()
            )));
        }
        if t.len() < 2 {
            return Err(Error::InsufficientData(
                "a time series needs at least 2 samples".into(),
            ));
        }
        let n = t.len();
        let dt = (t[n - 1] - t[0]) / (n - 1) as f64;
        if !(dt > 0.0) {
            return Err(Error::NonUniformSampling("time is not increasing".into()));
        }
        for (k, &tk) in t.iter().enumerate() {
            let expected = t[0] + dt * k as f64;
            if (tk - expected).abs() > 1e-6 * dt + 1e-12 * tk.abs() {
                return Err(Error::NonUniformSampling(format!(
                    "sample {k} at {tk} deviates from uniform grid ({expected})"
                )));
            }
        }
        Self::with_start(t[0], 1.0 / dt, y, y_unit)
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.fs
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn values(&self) -> &[f64] {
        &self.y
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.y.len() as f64 / self.fs
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 / self.fs
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.y.len()).map(|k| self.time(k))
    }

    pub fn mean(&self) -> f64 {
        if self.y.is_empty() {
            return 0.0;
        }
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }

    pub fn variance(&self) -> f64 {
        let n = self.y.len();
        if n < 2 {
            return 0.0;
        }
        let m = self.mean();
        self.y.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64
    }

    /// The samples from index `start` on, keeping the time origin consistent.
    pub fn tail(&self, start: usize) -> TimeSeries {
        let start = start.min(self.y.len());
        TimeSeries {
            t0: self.time(start),
            fs: self.fs,
            y: self.y[start..].to_vec(),
            t_unit: self.t_unit.clone(),
            y_unit: self.y_unit.clone(),
        }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.y
    }
}
