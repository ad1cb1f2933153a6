//! GARCH(1,1) parameter estimation: Gaussian QMLE and the minimum density
//! power divergence estimator (MDPDE), plus squared residuals.
//!
//! Both criteria are averages over the variance-proxy recursion started at
//! the sample second moment of the series:
//!
//! ```text
//! QMLE:  (1/n) sum_t [ log v_t + X_t^2 / v_t ]
//! DPD:   (1/n) sum_t (2pi)^(-g/2) v_t^(-g/2) [ (1+g)^(-1/2)
//!                  - (1 + 1/g) exp(-g X_t^2 / (2 v_t)) ]
//! ```
//!
//! where `g` is the DPD tuning parameter (`gamma`); the additive constant
//! `1/g` of the divergence is dropped since it does not move the minimizer.
//! `gamma = 0` selects the QMLE; as `gamma -> 0+` the DPD criterion recovers
//! the QMLE up to an affine transformation.
//!
//! Minimization is a projected quasi-Newton iteration with analytic gradients
//! of the recursion, run from a fixed four-point start grid; see [`fit`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{variance_path, GarchParams, Series};
use crate::optim;

/// Box constraints for the optimizer: omega in [OMEGA_FLOOR, 10 * m2],
/// alpha and beta in [0, 0.999], alpha + beta <= AB_CAP via penalty.
const OMEGA_FLOOR: f64 = 1e-6;
const COEFF_CEIL: f64 = 0.999;
const AB_CAP: f64 = 0.9999;
const PENALTY: f64 = 1e5;

/// Smallest series the optimizer will accept.
const MIN_FIT_LEN: usize = 20;

/// Options controlling the fit.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Projected-gradient max-norm tolerance.
    pub grad_tol: f64,
    /// Relative objective-change tolerance.
    pub obj_tol: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { max_iter: 500, grad_tol: 1e-6, obj_tol: 1e-10 }
    }
}

/// Outcome of a fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: GarchParams,
    /// Final criterion value (without the boundary penalty).
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    /// DPD tuning parameter; 0 denotes the QMLE.
    pub gamma: f64,
}

/// Squared residuals `X_t^2 / v_t(theta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub values: Vec<f64>,
}

/// Sample second moment, the estimation-side variance init.
pub fn sample_second_moment(series: &Series) -> f64 {
    let x = series.values();
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Squared residuals at `params`, using the sample second moment as the
/// variance-proxy initial value. All-zero series are rejected since the
/// init would degenerate to zero.
pub fn residuals_squared(series: &Series, params: &GarchParams) -> Result<ResidualSet> {
    params.validate()?;
    let init = sample_second_moment(series);
    if init <= 0.0 {
        return Err(Error::Degenerate(
            "series is identically zero; variance init would be zero".into(),
        ));
    }
    let vp = variance_path(series, params, init)?;
    let values = series
        .values()
        .iter()
        .zip(&vp.values)
        .map(|(x, v)| x * x / v)
        .collect();
    Ok(ResidualSet { values })
}

/// Gaussian quasi-likelihood criterion (up to constants), to be minimized.
pub fn qmle_objective(series: &Series, params: &GarchParams) -> Result<f64> {
    params.validate()?;
    let eval = Evaluator::new(series, 0.0)?;
    Ok(eval.value(&[params.omega, params.alpha, params.beta]))
}

/// Analytic gradient of the criterion (QMLE for `gamma == 0`, DPD
/// otherwise) with respect to (omega, alpha, beta), propagated through the
/// variance recursion.
pub fn objective_gradient(
    series: &Series,
    params: &GarchParams,
    gamma: f64,
) -> Result<[f64; 3]> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    params.validate()?;
    let eval = Evaluator::new(series, gamma)?;
    let mut grad = [0.0f64; 3];
    eval.fold_grad(&[params.omega, params.alpha, params.beta], &mut grad);
    Ok(grad)
}

/// Density power divergence criterion for `gamma > 0`, to be minimized.
/// Use [`qmle_objective`] for the `gamma -> 0` limit.
pub fn dpd_objective(series: &Series, params: &GarchParams, gamma: f64) -> Result<f64> {
    if !gamma.is_finite() || gamma <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "dpd gamma must be positive, got {gamma}"
        )));
    }
    params.validate()?;
    let eval = Evaluator::new(series, gamma)?;
    Ok(eval.value(&[params.omega, params.alpha, params.beta]))
}

/// Criterion evaluator carrying the squared data and the fixed variance
/// init. `gamma == 0` selects the QMLE criterion.
pub(crate) struct Evaluator {
    x2: Vec<f64>,
    init: f64,
    gamma: f64,
    // DPD constants, unused for gamma == 0.
    c_gamma: f64,
    c1: f64,
    c2: f64,
}

impl Evaluator {
    pub(crate) fn new(series: &Series, gamma: f64) -> Result<Self> {
        let init = sample_second_moment(series);
        if init <= 0.0 {
            return Err(Error::Degenerate(
                "series is identically zero; variance init would be zero".into(),
            ));
        }
        let x2 = series.values().iter().map(|x| x * x).collect();
        let (c_gamma, c1, c2) = if gamma > 0.0 {
            (
                (2.0 * std::f64::consts::PI).powf(-gamma / 2.0),
                (1.0 + gamma).powf(-0.5),
                1.0 + 1.0 / gamma,
            )
        } else {
            (0.0, 0.0, 0.0)
        };
        Ok(Self { x2, init, gamma, c_gamma, c1, c2 })
    }

    pub(crate) fn value(&self, theta: &[f64]) -> f64 {
        let mut g = [0.0; 3];
        self.fold_impl::<false>(theta, &mut g)
    }

    /// Criterion value with its gradient accumulated into `grad`.
    pub(crate) fn fold_grad(&self, theta: &[f64], grad: &mut [f64; 3]) -> f64 {
        self.fold_impl::<true>(theta, grad)
    }

    fn fold_impl<const GRAD: bool>(&self, theta: &[f64], grad: &mut [f64; 3]) -> f64 {
        let (w, a, b) = (theta[0], theta[1], theta[2]);
        let n = self.x2.len();
        let mut v = self.init;
        let mut dv = [0.0f64; 3];
        let mut sum = 0.0f64;
        let mut gsum = [0.0f64; 3];
        for t in 0..n {
            if t > 0 {
                let pv = v;
                v = w + a * self.x2[t - 1] + b * pv;
                if GRAD {
                    dv = [
                        1.0 + b * dv[0],
                        self.x2[t - 1] + b * dv[1],
                        pv + b * dv[2],
                    ];
                }
            }
            let r = self.x2[t] / v;
            if self.gamma == 0.0 {
                sum += v.ln() + r;
                if GRAD {
                    let dl_dv = (1.0 - r) / v;
                    for i in 0..3 {
                        gsum[i] += dl_dv * dv[i];
                    }
                }
            } else {
                let g = self.gamma;
                let vp = (-0.5 * g * v.ln()).exp();
                let e = (-0.5 * g * r).exp();
                sum += self.c_gamma * vp * (self.c1 - self.c2 * e);
                if GRAD {
                    let dl_dv =
                        self.c_gamma * vp / v * (0.5 * g) * (-self.c1 + self.c2 * e * (1.0 - r));
                    for i in 0..3 {
                        gsum[i] += dl_dv * dv[i];
                    }
                }
            }
        }
        let nf = n as f64;
        if GRAD {
            for i in 0..3 {
                grad[i] = gsum[i] / nf;
            }
        }
        sum / nf
    }
}

/// The fixed multi-start grid, expressed relative to the sample second
/// moment `m2`. Guards against the flat omega-beta ridge.
fn start_grid(m2: f64) -> [[f64; 3]; 4] {
    [
        [m2 / 2.0, 0.05, 0.90],
        [m2 / 2.0, 0.10, 0.80],
        [m2 / 3.0, 0.30, 0.40],
        [m2, 0.05, 0.05],
    ]
}

/// Fit GARCH(1,1) by QMLE (`gamma == 0`) or MDPDE (`gamma > 0`).
///
/// Runs a projected quasi-Newton minimization from each point of the fixed
/// start grid and returns the best local minimum. Non-convergence is
/// reported through `converged = false` with the best-so-far parameters.
pub fn fit(series: &Series, gamma: f64, opts: &FitOptions) -> Result<FitResult> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "gamma must be nonnegative, got {gamma}"
        )));
    }
    if series.len() < MIN_FIT_LEN {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_FIT_LEN} observations to fit, got {}",
            series.len()
        )));
    }
    let eval = Evaluator::new(series, gamma)?;
    let m2 = eval.init;

    // The intercept is optimized on the log scale: the criterion is far
    // better conditioned in log(omega), and the box then scales exactly
    // with the data.
    let lower = [OMEGA_FLOOR.ln(), 0.0, 0.0];
    let upper = [(10.0 * m2).max(OMEGA_FLOOR * 10.0).ln(), COEFF_CEIL, COEFF_CEIL];
    let oopts = optim::Options {
        max_iter: opts.max_iter,
        grad_tol: opts.grad_tol,
        obj_tol: opts.obj_tol,
        memory: 8,
    };

    let mut best: Option<optim::Outcome> = None;
    for start in start_grid(m2) {
        let z0 = [start[0].ln(), start[1], start[2]];
        let outcome = optim::minimize(
            |z| {
                let omega = z[0].exp();
                let theta = [omega, z[1], z[2]];
                let mut grad = [0.0f64; 3];
                let mut value = eval.fold_grad(&theta, &mut grad);
                grad[0] *= omega; // chain rule for the log coordinate
                let excess = z[1] + z[2] - AB_CAP;
                if excess > 0.0 {
                    value += PENALTY * excess * excess;
                    grad[1] += 2.0 * PENALTY * excess;
                    grad[2] += 2.0 * PENALTY * excess;
                }
                (value, grad.to_vec())
            },
            &z0,
            &lower,
            &upper,
            &oopts,
        );
        let better = match &best {
            None => true,
            Some(b) => outcome.value < b.value,
        };
        if better {
            best = Some(outcome);
        }
    }
    let best = best.expect("at least one start");

    let mut theta = best.x.clone();
    theta[0] = theta[0].exp();
    // The penalty is soft; clamp any residual overshoot of the cap exactly.
    let ab = theta[1] + theta[2];
    if ab > AB_CAP {
        let scale = AB_CAP / ab;
        theta[1] *= scale;
        theta[2] *= scale;
    }
    let params = GarchParams::new(theta[0], theta[1], theta[2])?;
    Ok(FitResult {
        params,
        objective: eval.value(&theta),
        iterations: best.iterations,
        converged: best.converged,
        gamma,
    })
}
