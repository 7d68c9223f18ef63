//! Damped least squares (Levenberg–Marquardt) for curve models.
//!
//! A model maps a parameter vector and one sample descriptor `X` to a
//! predicted value. `X` is usually `f64`; joint fits over several channels
//! use a tagged descriptor such as `(Channel, f64)`.
//!
//! The damping follows Marquardt's schedule: the normal matrix diagonal is
//! scaled by `1 + λ`, λ is divided by 10 after an accepted step and
//! multiplied by 10 after a rejected one. A step is accepted only if it
//! strictly lowers the weighted sum of squared residuals.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Model<'a, X> = &'a dyn Fn(&[f64], &X) -> f64;
pub type Jacobian<'a, X> = &'a dyn Fn(&[f64], &X, &mut [f64]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    pub gtol: f64,
    pub xtol: f64,
    pub lambda0: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iter: 200,
            gtol: 1e-10,
            xtol: 1e-12,
            lambda0: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTol,
    StepTol,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub params: Vec<f64>,
    /// `(JᵀWJ)⁻¹ · SSR / dof` at the solution.
    pub covariance: DMatrix<f64>,
    /// `sqrt(Σ wᵢ rᵢ²)`.
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub termination: Termination,
    /// Weighted SSR after each iteration; entry 0 is the initial value.
    pub ssr_history: Vec<f64>,
}

impl FitResult {
    pub fn ssr(&self) -> f64 {
        self.residual_norm * self.residual_norm
    }

    pub fn std_errors(&self) -> Vec<f64> {
        (0..self.params.len())
            .map(|i| self.covariance[(i, i)].max(0.0).sqrt())
            .collect()
    }

    /// Re-expresses the fit in another parameterization. `map(i, p)` returns
    /// the new value of parameter `i` and its derivative with respect to `p`;
    /// the covariance is propagated to first order.
    pub fn reparameterize(&self, map: impl Fn(usize, f64) -> (f64, f64)) -> FitResult {
        let (values, derivs): (Vec<f64>, Vec<f64>) = self
            .params
            .iter()
            .enumerate()
            .map(|(i, &p)| map(i, p))
            .unzip();
        let d = DMatrix::from_diagonal(&DVector::from_vec(derivs));
        FitResult {
            params: values,
            covariance: &d * &self.covariance * &d,
            ..self.clone()
        }
    }

    /// Converts a non-converged result into [`Error::NonConvergence`].
    pub fn require_converged(self) -> Result<Self> {
        if self.converged {
            Ok(self)
        } else {
            Err(Error::NonConvergence {
                iterations: self.iterations,
                trace: self.ssr_history,
            })
        }
    }
}

/// A weighted curve-fitting problem.
pub struct CurveFit<'a, X> {
    pub model: Model<'a, X>,
    pub jacobian: Option<Jacobian<'a, X>>,
    pub x: &'a [X],
    pub y: &'a [f64],
    pub weights: Option<&'a [f64]>,
}

impl<'a, X> CurveFit<'a, X> {
    pub fn new(model: Model<'a, X>, x: &'a [X], y: &'a [f64]) -> Self {
        Self {
            model,
            jacobian: None,
            x,
            y,
            weights: None,
        }
    }

    pub fn with_jacobian(mut self, jacobian: Jacobian<'a, X>) -> Self {
        self.jacobian = Some(jacobian);
        self
    }

    pub fn with_weights(mut self, weights: &'a [f64]) -> Self {
        self.weights = Some(weights);
        self
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn ssr(&self, p: &[f64]) -> f64 {
        self.x
            .iter()
            .zip(self.y)
            .enumerate()
            .map(|(i, (x, &y))| {
                let r = (self.model)(p, x) - y;
                self.weight(i) * r * r
            })
            .sum()
    }

    /// Weighted residuals `√w (f − y)` and weighted Jacobian rows.
    fn linearize(&self, p: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.x.len();
        let n = p.len();
        let mut r = DVector::zeros(m);
        let mut jac = DMatrix::zeros(m, n);
        let mut row = vec![0.0; n];
        for (i, x) in self.x.iter().enumerate() {
            let sw = self.weight(i).sqrt();
            r[i] = sw * ((self.model)(p, x) - self.y[i]);
            match self.jacobian {
                Some(j) => j(p, x, &mut row),
                None => central_difference(self.model, p, x, &mut row),
            }
            for (k, v) in row.iter().enumerate() {
                jac[(i, k)] = sw * v;
            }
        }
        (r, jac)
    }
}

fn fd_step(p: f64) -> f64 {
    f64::EPSILON.cbrt() * p.abs().max(1.0)
}

fn central_difference<X>(model: Model<'_, X>, p: &[f64], x: &X, out: &mut [f64]) {
    let mut q = p.to_vec();
    for k in 0..p.len() {
        let h = fd_step(p[k]);
        q[k] = p[k] + h;
        let up = model(&q, x);
        q[k] = p[k] - h;
        let down = model(&q, x);
        q[k] = p[k];
        out[k] = (up - down) / (2.0 * h);
    }
}

/// Minimizes `Σ wᵢ (model(p, xᵢ) − yᵢ)²` from `initial`.
///
/// Hitting `max_iter` is not an error: the result comes back with
/// `converged == false`. Errors are reserved for malformed input and for a
/// singular normal matrix at the solution.
pub fn least_squares<X>(
    problem: &CurveFit<'_, X>,
    initial: &[f64],
    opts: &LmOptions,
) -> Result<FitResult> {
    let m = problem.x.len();
    let n = initial.len();
    if problem.y.len() != m {
        return Err(Error::GridMismatch(format!(
            "{} x samples but {} y samples",
            m,
            problem.y.len()
        )));
    }
    if let Some(w) = problem.weights {
        if w.len() != m || w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "weights must be finite, non-negative and one per sample".into(),
            ));
        }
    }
    if m < n || n == 0 {
        return Err(Error::InsufficientData(format!(
            "{m} samples for {n} parameters"
        )));
    }
    if initial.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("initial parameters must be finite".into()));
    }

    let mut p = initial.to_vec();
    let mut ssr = problem.ssr(&p);
    if !ssr.is_finite() {
        return Err(Error::InvalidParameter(
            "model is not finite at the initial parameters".into(),
        ));
    }
    let y_scale: f64 = problem
        .y
        .iter()
        .enumerate()
        .map(|(i, y)| problem.weight(i) * y * y)
        .sum();
    let mut lambda = opts.lambda0;
    let mut history = vec![ssr];
    let mut iterations = 0;
    let mut termination = Termination::MaxIter;

    'outer: while iterations < opts.max_iter {
        iterations += 1;
        let (r, jac) = problem.linearize(&p);
        let jt = jac.transpose();
        let normal = &jt * &jac;
        let grad = &jt * &r;

        if ssr <= 1e-30 * y_scale.max(f64::MIN_POSITIVE) {
            history.push(ssr);
            termination = Termination::GradientTol;
            break;
        }
        let rnorm = ssr.sqrt();
        let gmax = (0..n)
            .map(|k| {
                let col = normal[(k, k)].sqrt();
                if col > 0.0 {
                    grad[k].abs() / (col * rnorm)
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max);
        if gmax <= opts.gtol {
            history.push(ssr);
            termination = Termination::GradientTol;
            break;
        }

        // only for parameters the model does not depend on here; a floor
        // relative to other columns would swamp small-scale parameters
        let diag_floor = 1e-12 * (0..n).map(|k| normal[(k, k)]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        loop {
            let mut damped = normal.clone();
            for k in 0..n {
                let d = normal[(k, k)];
                damped[(k, k)] += lambda * if d > 0.0 { d } else { diag_floor };
            }
            let step = damped.cholesky().map(|c| c.solve(&(-&grad)));
            let Some(step) = step else {
                lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
                if lambda > 1e16 {
                    history.push(ssr);
                    termination = Termination::StepTol;
                    break 'outer;
                }
                continue;
            };
            let trial: Vec<f64> = p.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            let trial_ssr = problem.ssr(&trial);
            // per component, so parameters of very different scale all count
            let small_step = p
                .iter()
                .zip(step.iter())
                .all(|(v, d)| d.abs() <= opts.xtol * (v.abs() + opts.xtol));
            if trial_ssr.is_finite() && trial_ssr < ssr {
                p = trial;
                ssr = trial_ssr;
                lambda /= 10.0;
                history.push(ssr);
                if small_step {
                    termination = Termination::StepTol;
                    break 'outer;
                }
                break;
            }
            if small_step {
                history.push(ssr);
                termination = Termination::StepTol;
                break 'outer;
            }
            lambda = if lambda == 0.0 { 1e-3 } else { lambda * 10.0 };
            if lambda > 1e16 {
                history.push(ssr);
                termination = Termination::StepTol;
                break 'outer;
            }
        }
    }

    let converged = termination != Termination::MaxIter;
    let (_, jac) = problem.linearize(&p);
    let normal = jac.transpose() * &jac;
    let dof = (m - n).max(1) as f64;
    let covariance = if converged {
        let inv = normal
            .clone()
            .cholesky()
            .ok_or(Error::SingularNormalEquations)?
            .inverse();
        let cov = inv * (ssr / dof);
        (&cov + cov.transpose()) * 0.5
    } else {
        normal
            .try_inverse()
            .map(|inv| inv * (ssr / dof))
            .unwrap_or_else(|| DMatrix::from_element(n, n, f64::NAN))
    };

    Ok(FitResult {
        params: p,
        covariance,
        residual_norm: ssr.sqrt(),
        iterations,
        converged,
        termination,
        ssr_history: history,
    })
}

/// Worst relative disagreement between an analytic Jacobian and central
/// differences over all samples and parameters.
///
/// Entries are compared relative to `max(|analytic|, |numeric|)`, floored at
/// `1e-8` of the largest entry in the same column so that structurally zero
/// derivatives do not divide by rounding noise.
pub fn check_jacobian<X>(
    model: Model<'_, X>,
    jacobian: Jacobian<'_, X>,
    params: &[f64],
    x: &[X],
) -> f64 {
    let n = params.len();
    let mut analytic = vec![vec![0.0; n]; x.len()];
    let mut numeric = vec![vec![0.0; n]; x.len()];
    for (i, xi) in x.iter().enumerate() {
        jacobian(params, xi, &mut analytic[i]);
        central_difference(model, params, xi, &mut numeric[i]);
    }
    let mut worst: f64 = 0.0;
    for k in 0..n {
        let col_max = analytic
            .iter()
            .chain(&numeric)
            .map(|row| row[k].abs())
            .fold(0.0, f64::max);
        if col_max == 0.0 {
            continue;
        }
        for i in 0..x.len() {
            let (a, d) = (analytic[i][k], numeric[i][k]);
            let denom = a.abs().max(d.abs()).max(1e-8 * col_max);
            worst = worst.max((a - d).abs() / denom);
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn line(p: &[f64], x: &f64) -> f64 {
        p[0] * x + p[1]
    }

    fn line_jac(_p: &[f64], x: &f64, out: &mut [f64]) {
        out[0] = *x;
        out[1] = 1.0;
    }

    #[test]
    fn linear_model_exact_in_two_iterations() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = x.iter().map(|x| 2.5 * x - 1.25).collect();
        let problem = CurveFit::new(&line, &x, &y).with_jacobian(&line_jac);
        let opts = LmOptions {
            lambda0: 0.0,
            ..LmOptions::default()
        };
        let fit = least_squares(&problem, &[0.0, 0.0], &opts).unwrap();
        assert!(fit.converged);
        assert!(fit.iterations <= 2, "{} iterations", fit.iterations);
        assert!((fit.params[0] - 2.5).abs() < 1e-12);
        assert!((fit.params[1] + 1.25).abs() < 1e-12);

        let damped = least_squares(&problem, &[0.0, 0.0], &LmOptions::default()).unwrap();
        assert!(damped.converged);
        assert!((damped.params[0] - 2.5).abs() < 1e-10);
    }

    #[test]
    fn residual_field_slope_recovered() {
        // B = 0.134 nT/mA · I with 0.01 nT noise over 0..50 mA.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let x: Vec<f64> = (0..26).map(|i| 2.0 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|i| 0.134 * i + noise.sample(&mut rng)).collect();
        let through_origin = |p: &[f64], x: &f64| p[0] * x;
        let fit = least_squares(
            &CurveFit::new(&through_origin, &x, &y),
            &[1.0],
            &LmOptions::default(),
        )
        .unwrap();
        assert!(fit.converged);
        assert!((fit.params[0] / 0.134 - 1.0).abs() < 0.01);
    }

    #[test]
    fn tiny_parameter_next_to_large_one_still_moves() {
        // area ~1e-12 beside a centre ~50, as in a noise spectrum
        let model = |p: &[f64], x: &f64| {
            let w = p[1].exp();
            p[2] * w / std::f64::consts::PI / ((x - p[0]).powi(2) + w * w) + p[3]
        };
        let truth = [50.0, 0.0, 3e-12, 0.0];
        let x: Vec<f64> = (0..400).map(|i| 40.0 + 0.05 * i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| model(&truth, x)).collect();
        let start = [50.0, 1.5f64.ln(), 1e-12, 0.0];
        let fit = least_squares(&CurveFit::new(&model, &x, &y), &start, &LmOptions::default()).unwrap();
        assert!(fit.converged);
        assert!(fit.params[1].abs() < 1e-6, "ln width {}", fit.params[1]);
        assert!((fit.params[2] / 3e-12 - 1.0).abs() < 1e-6);
    }

    fn rosenbrock(p: &[f64], i: &usize) -> f64 {
        match i {
            0 => 10.0 * (p[1] - p[0] * p[0]),
            _ => 1.0 - p[0],
        }
    }

    #[test]
    fn rosenbrock_bad_start_hits_max_iter() {
        let x = [0usize, 1];
        let y = [0.0, 0.0];
        let problem = CurveFit::new(&rosenbrock, &x, &y);
        let opts = LmOptions {
            max_iter: 5,
            ..LmOptions::default()
        };
        let fit = least_squares(&problem, &[-1.2, 1.0], &opts).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.termination, Termination::MaxIter);
        assert!(matches!(
            fit.require_converged(),
            Err(Error::NonConvergence { iterations: 5, .. })
        ));

        let full = least_squares(&problem, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!(full.converged);
        assert!((full.params[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn accepted_steps_never_increase_ssr() {
        let x = [0usize, 1];
        let y = [0.0, 0.0];
        let fit = least_squares(
            &CurveFit::new(&rosenbrock, &x, &y),
            &[-1.2, 1.0],
            &LmOptions::default(),
        )
        .unwrap();
        for w in fit.ssr_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn linear_jacobian_check_is_exact() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 - 3.0).collect();
        let err = check_jacobian(&line, &line_jac, &[1.5, -0.5], &x);
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn malformed_inputs() {
        let x = [1.0];
        let y = [1.0];
        let problem = CurveFit::new(&line, &x, &y);
        assert!(matches!(
            least_squares(&problem, &[1.0, 0.0], &LmOptions::default()),
            Err(Error::InsufficientData(_))
        ));
        let x = [1.0, 2.0];
        let y = [1.0, 2.0];
        let problem = CurveFit::new(&line, &x, &y);
        assert!(least_squares(&problem, &[f64::NAN, 0.0], &LmOptions::default()).is_err());
    }

    #[test]
    fn unidentifiable_parameter_is_singular() {
        // p[1] never enters the model.
        let model = |p: &[f64], x: &f64| p[0] * x;
        let x: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let y: Vec<f64> = x.iter().map(|x| 3.0 * x + 0.01 * (x * 7.0).sin()).collect();
        let err = least_squares(&CurveFit::new(&model, &x, &y), &[1.0, 1.0], &LmOptions::default())
            .unwrap_err();
        assert!(matches!(err, Error::SingularNormalEquations));
    }

    #[test]
    fn weights_and_covariance() {
        let x: Vec<f64> = (0..50).map(|i| i as f64 / 10.0).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let noise = Normal::new(0.0, 0.1).unwrap();
        let y: Vec<f64> = x.iter().map(|x| 1.0 * x + 2.0 + noise.sample(&mut rng)).collect();
        let w = vec![4.0; x.len()];
        let fit = least_squares(
            &CurveFit::new(&line, &x, &y).with_weights(&w),
            &[0.0, 0.0],
            &LmOptions::default(),
        )
        .unwrap();
        let cov = &fit.covariance;
        assert!((cov[(0, 1)] - cov[(1, 0)]).abs() < 1e-18);
        assert!(cov[(0, 0)] > 0.0 && cov[(1, 1)] > 0.0);
        assert!(cov[(0, 0)] * cov[(1, 1)] >= cov[(0, 1)].powi(2));
        // Slope error for σ = 0.1 over this grid is about 0.0049.
        let se = fit.std_errors()[0];
        assert!(se > 0.002 && se < 0.01, "{se}");
    }

    #[test]
    fn reparameterization_invariance() {
        // Lorentzian width fitted directly and through its logarithm.
        let x: Vec<f64> = (0..81).map(|i| -8.0 + 0.2 * i as f64).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let y: Vec<f64> = x
            .iter()
            .map(|x| 1.0 / (1.0 + (x / 1.7f64).powi(2)) + noise.sample(&mut rng))
            .collect();
        let direct = |p: &[f64], x: &f64| p[0] / (1.0 + (x / p[1]).powi(2));
        let logw = |p: &[f64], x: &f64| p[0] / (1.0 + (x / p[1].exp()).powi(2));
        let opts = LmOptions::default();
        let a = least_squares(&CurveFit::new(&direct, &x, &y), &[0.8, 1.0], &opts).unwrap();
        let b = least_squares(&CurveFit::new(&logw, &x, &y), &[0.8, 0.0], &opts).unwrap();
        assert!(a.converged && b.converged);
        assert!(((a.ssr() - b.ssr()) / a.ssr()).abs() < 1e-9);
        assert!((a.params[1] - b.params[1].exp()).abs() < 1e-7);
    }

    #[test]
    fn deterministic_results() {
        let x = [0usize, 1];
        let y = [0.0, 0.0];
        let problem = CurveFit::new(&rosenbrock, &x, &y);
        let a = least_squares(&problem, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        let b = least_squares(&problem, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.params[0].to_bits(), b.params[0].to_bits());
    }
}
