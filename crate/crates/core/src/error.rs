use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown isotope `{0}`")]
    UnknownIsotope(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("degenerate sample grid: {0}")]
    DegenerateGrid(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-uniform sampling: {0}")]
    NonUniformSampling(String),

    #[error("grid too coarse: step {step} exceeds {limit}")]
    GridTooCoarse { step: f64, limit: f64 },

    #[error("step size too large: {0}")]
    StepSize(String),

    #[error("undersampled: {0}")]
    Undersampled(String),

    #[error("aliasing: reference {ref_freq} Hz is not below Nyquist {nyquist} Hz")]
    Aliasing { ref_freq: f64, nyquist: f64 },

    #[error("frequency response below threshold at {freq} Hz (|R| = {response})")]
    ZeroResponse { freq: f64, response: f64 },

    #[error("empty band [{lo}, {hi}] Hz")]
    EmptyBand { lo: f64, hi: f64 },

    #[error("singular normal equations")]
    SingularNormalEquations,

    #[error("fit did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        /// Weighted sum of squared residuals after each iteration.
        trace: Vec<f64>,
    },

    #[error("resonance amplitudes are not significant; fit is degenerate")]
    ZeroAmplitude,

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{}: {source}", path.display())]
    File {
        path: std::path::PathBuf,
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
