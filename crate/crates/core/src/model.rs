//! GARCH(1,1) data-generating process, outlier contamination, and simulation.
//!
//! The observation model is
//!
//! ```text
//! X_t = sigma_t * eps_t,    sigma_t^2 = omega + alpha * X_{t-1}^2 + beta * sigma_{t-1}^2,
//! ```
//!
//! with i.i.d. standard normal innovations. Two outlier mechanisms are
//! supported:
//!
//! * innovation outliers (IO): the shock is replaced by
//!   `eps_t + s * sd_u * sign(eps_t) * P_t`, where `sd_u` is the unconditional
//!   standard deviation of the regime in force and `P_t` is Bernoulli(p);
//!   the contaminated value feeds back into the variance recursion;
//! * additive outliers (AO): `s * sd_u * sign(X_t) * P_t` is added to the
//!   observed value after generation; the clean value keeps driving the
//!   recursion.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Stream tags for the two independent RNG streams used by `simulate`.
/// Innovations and outlier indicators are drawn from separate streams so
/// that switching contamination on or off does not shift the shock sequence.
const STREAM_INNOVATIONS: u64 = 0x01;
const STREAM_OUTLIERS: u64 = 0x02;

/// Parameter vector (omega, alpha, beta) of the GARCH(1,1) model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    /// Variance intercept, strictly positive.
    pub omega: f64,
    /// ARCH coefficient, nonnegative.
    pub alpha: f64,
    /// GARCH coefficient, nonnegative.
    pub beta: f64,
}

impl GarchParams {
    /// Validated constructor. Requires `omega > 0`, `alpha, beta >= 0` and
    /// `alpha + beta < 1` so the unconditional variance exists.
    pub fn new(omega: f64, alpha: f64, beta: f64) -> Result<Self> {
        let p = Self { omega, alpha, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.omega.is_finite() || self.omega <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "omega must be positive, got {}",
                self.omega
            )));
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        if !self.beta.is_finite() || self.beta < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "beta must be nonnegative, got {}",
                self.beta
            )));
        }
        if self.alpha + self.beta >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "alpha + beta must be < 1, got {}",
                self.alpha + self.beta
            )));
        }
        Ok(())
    }

    /// Unconditional variance `omega / (1 - alpha - beta)`.
    pub fn unconditional_variance(&self) -> Result<f64> {
        self.validate()?;
        Ok(self.omega / (1.0 - self.alpha - self.beta))
    }

    /// Unconditional standard deviation, the outlier magnitude scale.
    pub fn unconditional_sd(&self) -> Result<f64> {
        Ok(self.unconditional_variance()?.sqrt())
    }
}

/// Outlier mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutlierKind {
    None,
    Io,
    Ao,
}

/// Contamination specification: mechanism, Bernoulli probability `p` of an
/// outlier at each step, and magnitude multiplier `s`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContaminationSpec {
    pub kind: OutlierKind,
    pub p: f64,
    pub s: f64,
}

impl ContaminationSpec {
    pub fn new(kind: OutlierKind, p: f64, s: f64) -> Result<Self> {
        let c = Self { kind, p, s };
        c.validate()?;
        Ok(c)
    }

    /// No contamination at all.
    pub fn none() -> Self {
        Self { kind: OutlierKind::None, p: 0.0, s: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.p.is_finite() || !(0.0..=1.0).contains(&self.p) {
            return Err(Error::InvalidParameter(format!(
                "outlier probability must lie in [0,1], got {}",
                self.p
            )));
        }
        if !self.s.is_finite() || self.s < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "outlier magnitude must be nonnegative, got {}",
                self.s
            )));
        }
        Ok(())
    }
}

/// An observed series X_1..X_n.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series(Vec<f64>);

impl Series {
    /// Wraps raw observations; all values must be finite and nonempty.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("empty series".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Sub-series over a half-open 0-based index range.
    pub fn slice(&self, start: usize, end: usize) -> Result<Series> {
        if start >= end || end > self.0.len() {
            return Err(Error::InvalidInput(format!(
                "bad slice [{start}, {end}) of series of length {}",
                self.0.len()
            )));
        }
        Ok(Series(self.0[start..end].to_vec()))
    }
}

/// Conditional-variance proxy path started from a supplied initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct VariancePath {
    pub values: Vec<f64>,
    pub init: f64,
}

/// Variance proxy recursion: `v_1 = init`,
/// `v_t = omega + alpha*X_{t-1}^2 + beta*v_{t-1}` for t >= 2.
pub fn variance_path(series: &Series, params: &GarchParams, init: f64) -> Result<VariancePath> {
    params.validate()?;
    if !init.is_finite() || init <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "variance init must be positive, got {init}"
        )));
    }
    let x = series.values();
    let mut v = Vec::with_capacity(x.len());
    v.push(init);
    for t in 1..x.len() {
        let prev = v[t - 1];
        v.push(params.omega + params.alpha * x[t - 1] * x[t - 1] + params.beta * prev);
    }
    Ok(VariancePath { values: v, init })
}

/// Innovation distribution. Sealed: standard normal is the only member, so
/// any extension has to be explicit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Innovation {
    #[default]
    StandardNormal,
}

/// A single parameter change: regimes switch after observation `at`
/// (1-based), i.e. X_1..X_at come from the pre-change parameters and
/// X_{at+1}..X_n from `params`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChangeSpec {
    pub at: usize,
    pub params: GarchParams,
}

/// Full simulation specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub params: GarchParams,
    pub n: usize,
    pub burn_in: usize,
    pub contamination: ContaminationSpec,
    pub change: Option<ChangeSpec>,
    pub innovation: Innovation,
    pub seed: u64,
}

impl SimSpec {
    pub fn new(params: GarchParams, n: usize, seed: u64) -> Self {
        Self {
            params,
            n,
            burn_in: 1000,
            contamination: ContaminationSpec::none(),
            change: None,
            innovation: Innovation::StandardNormal,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.contamination.validate()?;
        if self.n == 0 {
            return Err(Error::InvalidInput("simulation length must be positive".into()));
        }
        if let Some(change) = &self.change {
            change.params.validate()?;
            if change.at == 0 || change.at >= self.n {
                return Err(Error::InvalidInput(format!(
                    "change index must lie in [1, n), got {} with n = {}",
                    change.at, self.n
                )));
            }
        }
        Ok(())
    }
}

/// Simulation output with the internals exposed for debugging and testing:
/// the clean (pre-contamination) values, the outlier indicators and the
/// conditional-variance path of the kept observations.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub series: Series,
    /// Value at time t before the contamination step was applied.
    pub clean: Vec<f64>,
    /// Bernoulli outlier indicators P_t for the kept observations.
    pub outlier: Vec<bool>,
    /// Conditional variances sigma_t^2 of the kept observations.
    pub variance: Vec<f64>,
}

/// `sign` with the `sign(0) = +1` convention.
fn sign_pm1(x: f64) -> f64 {
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Simulate a (possibly contaminated, possibly changing) GARCH(1,1) path.
///
/// The recursion starts at the unconditional variance of the initial regime,
/// runs `burn_in + n` steps and keeps the last `n`. Deterministic for a
/// fixed spec.
pub fn simulate(spec: &SimSpec) -> Result<Series> {
    Ok(simulate_detailed(spec)?.series)
}

/// As [`simulate`] but exposing the internals.
pub fn simulate_detailed(spec: &SimSpec) -> Result<SimOutput> {
    spec.validate()?;
    let Innovation::StandardNormal = spec.innovation;

    let mut rng_eps = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_INNOVATIONS));
    let mut rng_out = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_OUTLIERS));

    // Outlier scale per regime, fixed up front.
    let sd0 = spec.params.unconditional_sd()?;
    let sd1 = match &spec.change {
        Some(c) => c.params.unconditional_sd()?,
        None => sd0,
    };
    // First regime ends after this absolute step (burn-in is entirely
    // pre-change since the change index counts kept observations).
    let switch_after = spec.change.as_ref().map(|c| spec.burn_in + c.at);

    let total = spec.burn_in + spec.n;
    let mut series = Vec::with_capacity(spec.n);
    let mut clean = Vec::with_capacity(spec.n);
    let mut outlier = Vec::with_capacity(spec.n);
    let mut variance = Vec::with_capacity(spec.n);

    let mut v = spec.params.unconditional_variance()?;
    let mut x_feedback = 0.0;
    for step in 1..=total {
        let (regime, sd_u) = if switch_after.is_some_and(|s| step > s) {
            (&spec.change.as_ref().unwrap().params, sd1)
        } else {
            (&spec.params, sd0)
        };
        if step > 1 {
            v = regime.omega + regime.alpha * x_feedback * x_feedback + regime.beta * v;
        }
        let sigma = v.sqrt();
        let eps: f64 = rng_eps.sample(StandardNormal);
        let hit = match spec.contamination.kind {
            OutlierKind::None => false,
            _ => rng_out.gen::<f64>() < spec.contamination.p,
        };
        let (x, x_clean) = match spec.contamination.kind {
            OutlierKind::None => {
                let x = sigma * eps;
                (x, x)
            }
            OutlierKind::Io => {
                let x_clean = sigma * eps;
                let eps_eff = if hit {
                    eps + spec.contamination.s * sd_u * sign_pm1(eps)
                } else {
                    eps
                };
                (sigma * eps_eff, x_clean)
            }
            OutlierKind::Ao => {
                let x_o = sigma * eps;
                let x = if hit {
                    x_o + spec.contamination.s * sd_u * sign_pm1(x_o)
                } else {
                    x_o
                };
                (x, x_o)
            }
        };
        // AO keeps the clean value in the recursion; IO feeds the
        // contaminated value back.
        x_feedback = match spec.contamination.kind {
            OutlierKind::Ao => x_clean,
            _ => x,
        };
        if step > spec.burn_in {
            series.push(x);
            clean.push(x_clean);
            outlier.push(hit);
            variance.push(v);
        }
    }

    Ok(SimOutput {
        series: Series::new(series)?,
        clean,
        outlier,
        variance,
    })
}
