//! Truncation, CUSUM-of-squares and self-normalized change-point statistics,
//! change-point location, and binary segmentation.
//!
//! All test statistics are built from a value sequence, usually (possibly
//! truncated) squared residuals. Writing `S_k` for the k-th prefix sum, the
//! CUSUM deviations are
//!
//! ```text
//! D_k = | S_k - (k/n) S_n |,      k = 1..n,
//! ```
//!
//! the CUSUM statistic is `max_k D_k / (sqrt(n) * tau_hat)` with `tau_hat^2`
//! the (divide-by-n) sample variance of the values, and the self-normalized
//! statistic is
//!
//! ```text
//! max_{1<=k<=n-1}  n * D_k^2 / V_{n,k}
//! ```
//!
//! where `V_{n,k}` sums squared within-segment partial-sum deviations on both
//! sides of k. The CUSUM statistic is compared against the supremum of a
//! Brownian bridge, the self-normalized one against its own functional limit;
//! see [`crate::limits`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::{fit, residuals_squared, FitOptions, FitResult};
use crate::limits::{critical_value, LimitKind};
use crate::model::Series;

/// Residual truncation rule: identity below `m - delta`, a quadratic blend on
/// `[m - delta, m + delta)`, and the cap `m` beyond. `delta = 0` is the hard
/// cap. The function maps `[0, inf)` onto `[0, m]`, is 1-Lipschitz, and for
/// `delta > 0` continuously differentiable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationSpec {
    pub m: f64,
    pub delta: f64,
}

impl TruncationSpec {
    pub fn new(m: f64, delta: f64) -> Result<Self> {
        if !m.is_finite() || m <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "truncation threshold must be positive, got {m}"
            )));
        }
        if !delta.is_finite() || delta < 0.0 || delta >= m {
            return Err(Error::InvalidParameter(format!(
                "smoothing width must satisfy 0 <= delta < m, got {delta}"
            )));
        }
        Ok(Self { m, delta })
    }

    /// Hard truncation at `m` (delta = 0).
    pub fn hard(m: f64) -> Result<Self> {
        Self::new(m, 0.0)
    }
}

/// Apply the truncation function to a nonnegative value.
pub fn truncate(x: f64, spec: &TruncationSpec) -> Result<f64> {
    if !x.is_finite() || x < 0.0 {
        return Err(Error::InvalidInput(format!(
            "truncation input must be a finite nonnegative value, got {x}"
        )));
    }
    let (m, d) = (spec.m, spec.delta);
    Ok(if x < m - d {
        x
    } else if x < m + d {
        m - (x - m - d) * (x - m - d) / (4.0 * d)
    } else {
        m
    })
}

/// Truncate a whole sequence.
pub fn truncate_series(values: &[f64], spec: &TruncationSpec) -> Result<Vec<f64>> {
    values.iter().map(|&x| truncate(x, spec)).collect()
}

/// CUSUM deviations `D_k = |S_k - (k/n) S_n|` for k = 1..n. `D_n` is zero by
/// construction and adding a constant to every value changes nothing.
pub fn cusum_process(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let total: f64 = values.iter().sum();
    let slope = total / n as f64;
    let mut out = Vec::with_capacity(n);
    let mut s = 0.0;
    for (k, &x) in values.iter().enumerate() {
        s += x;
        out.push((s - (k + 1) as f64 * slope).abs());
    }
    out
}

/// Change-point estimate: the (1-based) argmax of the CUSUM deviations,
/// smallest index on ties.
pub fn locate_change(values: &[f64]) -> usize {
    let d = cusum_process(values);
    let mut best = 0usize;
    for (k, &v) in d.iter().enumerate() {
        if v > d[best] {
            best = k;
        }
    }
    best + 1
}

/// Which statistic a [`TestResult`] reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    CusumNaive,
    CusumRobust,
    SnNaive,
    SnRobust,
}

impl TestKind {
    pub fn is_sn(&self) -> bool {
        matches!(self, TestKind::SnNaive | TestKind::SnRobust)
    }

    pub fn is_robust(&self) -> bool {
        matches!(self, TestKind::CusumRobust | TestKind::SnRobust)
    }
}

/// Outcome of a change-point test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
    /// Argmax of the CUSUM deviations (1-based), the change-point estimate.
    pub k_hat: usize,
    /// Variance normalizer; absent for self-normalized kinds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_hat_sq: Option<f64>,
    /// Truncation threshold applied, when any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m_used: Option<f64>,
    /// Whether the estimation step converged; absent when the statistic was
    /// computed directly from supplied values.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit_converged: Option<bool>,
}

fn check_not_constant(values: &[f64]) -> Result<()> {
    let first = values[0];
    if values.iter().all(|&v| v == first) {
        return Err(Error::Degenerate("input values are constant".into()));
    }
    Ok(())
}

/// CUSUM-of-squares style test on a raw value sequence at level `alpha`.
pub fn cusum_test(values: &[f64], alpha: f64) -> Result<TestResult> {
    if values.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 values".into()));
    }
    check_not_constant(values)?;
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let tau_sq = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    if tau_sq <= 0.0 {
        return Err(Error::Degenerate("zero-variance values".into()));
    }
    let d = cusum_process(values);
    let (mut k_best, mut d_best) = (0usize, d[0]);
    for (k, &v) in d.iter().enumerate() {
        if v > d_best {
            k_best = k;
            d_best = v;
        }
    }
    let statistic = d_best / (n.sqrt() * tau_sq.sqrt());
    let cv = critical_value(LimitKind::SupBridge, alpha)?;
    Ok(TestResult {
        kind: TestKind::CusumNaive,
        statistic,
        critical_value: cv,
        alpha,
        reject: statistic > cv,
        k_hat: k_best + 1,
        tau_hat_sq: Some(tau_sq),
        m_used: None,
        fit_converged: None,
    })
}

/// Prefix sums of squared deviations from the in-segment linear trend:
/// given path values `W_1..W_N`, returns for each k
/// `F_k = sum_{t=1..k} (W_t - (t/k) W_k)^2` in O(N) total time.
///
/// Shared by the discrete self-normalizer and the limit simulation; callers
/// remove any linear drift first (the quantity is invariant to it, and
/// without the huge common component the expansion is well conditioned).
pub(crate) fn bridge_dev_sq_prefix(path: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(path.len());
    let mut p2 = 0.0f64; // sum of W_t^2
    let mut pt = 0.0f64; // sum of t * W_t
    for (i, &w) in path.iter().enumerate() {
        let k = (i + 1) as f64;
        p2 += w * w;
        pt += k * w;
        let sum_t2 = k * (k + 1.0) * (2.0 * k + 1.0) / 6.0;
        let f = p2 - 2.0 * (w / k) * pt + (w * w) / (k * k) * sum_t2;
        out.push(f.max(0.0));
    }
    out
}

/// Self-normalizer `V_{n,k}` for k = 1..n-1:
///
/// ```text
/// V_{n,k} = sum_{t=1..k}   { S_t - (t/k) S_k }^2
///         + sum_{t=k+1..n} { R_t - ((n-t+1)/(n-k)) R_{k+1} }^2
/// ```
///
/// with `S` prefix and `R` suffix sums. Computed in O(n) via prefix
/// aggregates on the mean-centered values (the functional is invariant to
/// adding a constant).
pub fn self_normalizer(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n < 2 {
        return Vec::new();
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|&v| v - mean).collect();

    let mut prefix = Vec::with_capacity(n);
    let mut acc = 0.0;
    for &v in &centered {
        acc += v;
        prefix.push(acc);
    }
    let forward = bridge_dev_sq_prefix(&prefix);

    let mut suffix_path = Vec::with_capacity(n);
    acc = 0.0;
    for &v in centered.iter().rev() {
        acc += v;
        suffix_path.push(acc);
    }
    let backward = bridge_dev_sq_prefix(&suffix_path);

    (1..n).map(|k| forward[k - 1] + backward[n - k - 1]).collect()
}

/// Longest run of equal values at the start and at the end of the sequence.
fn constant_runs(values: &[f64]) -> (usize, usize) {
    let n = values.len();
    let mut head = 1;
    while head < n && values[head] == values[0] {
        head += 1;
    }
    let mut tail = 1;
    while tail < n && values[n - 1 - tail] == values[n - 1] {
        tail += 1;
    }
    (head, tail)
}

/// Self-normalized test on a raw value sequence at level `alpha`.
///
/// The maximization skips k where `V_{n,k}` is exactly zero (constant prefix
/// and constant suffix) and errors only if every k is degenerate. The
/// change-point estimate is the argmax of the CUSUM numerator.
pub fn sn_test(values: &[f64], alpha: f64) -> Result<TestResult> {
    let n = values.len();
    if n < 4 {
        return Err(Error::InvalidInput("need at least 4 values".into()));
    }
    let d = cusum_process(values);
    let v = self_normalizer(values);
    let (head, tail) = constant_runs(values);

    let mut statistic = f64::NEG_INFINITY;
    let mut any = false;
    for k in 1..n {
        // Structural zero: values constant on [1..k] and on [k+1..n].
        if k <= head && (n - k) <= tail {
            continue;
        }
        let vk = v[k - 1];
        if vk <= 0.0 {
            continue;
        }
        any = true;
        let s = n as f64 * d[k - 1] * d[k - 1] / vk;
        if s > statistic {
            statistic = s;
        }
    }
    if !any {
        return Err(Error::Degenerate(
            "self-normalizer vanishes at every split point".into(),
        ));
    }
    let cv = critical_value(LimitKind::SnFunctional, alpha)?;
    Ok(TestResult {
        kind: TestKind::SnNaive,
        statistic,
        critical_value: cv,
        alpha,
        reject: statistic > cv,
        k_hat: locate_change(values),
        tau_hat_sq: None,
        m_used: None,
        fit_converged: None,
    })
}

/// Full pipeline: fit at `gamma`, form squared residuals, optionally
/// truncate, then run the CUSUM or self-normalized test.
///
/// Naive kinds forbid a truncation spec and robust kinds require one.
/// Estimation non-convergence is reported in `fit_converged`, not silently
/// ignored.
pub fn run_test(
    series: &Series,
    kind: TestKind,
    gamma: f64,
    trunc: Option<&TruncationSpec>,
    alpha: f64,
    fit_opts: &FitOptions,
) -> Result<TestResult> {
    match (kind.is_robust(), trunc) {
        (true, None) => {
            return Err(Error::InvalidInput(
                "robust test kinds require a truncation spec".into(),
            ))
        }
        (false, Some(_)) => {
            return Err(Error::InvalidInput(
                "naive test kinds do not take a truncation spec".into(),
            ))
        }
        _ => {}
    }
    let fitted = fit(series, gamma, fit_opts)?;
    let residuals = residuals_squared(series, &fitted.params)?;
    let values = match trunc {
        Some(spec) => truncate_series(&residuals.values, spec)?,
        None => residuals.values,
    };
    let mut result = if kind.is_sn() {
        sn_test(&values, alpha)?
    } else {
        cusum_test(&values, alpha)?
    };
    result.kind = kind;
    result.m_used = trunc.map(|t| t.m);
    result.fit_converged = Some(fitted.converged);
    Ok(result)
}

/// Configuration for [`binary_segmentation`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationConfig {
    pub kind: TestKind,
    pub gamma: f64,
    pub trunc: Option<TruncationSpec>,
    pub alpha: f64,
    /// Smallest admissible segment; the search stops below twice this.
    pub min_segment: usize,
    #[serde(default)]
    pub fit_options: Option<FitOptions>,
}

impl SegmentationConfig {
    fn fit_opts(&self) -> FitOptions {
        self.fit_options.unwrap_or_default()
    }
}

/// One final segment with its refit.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Segment {
    /// 1-based inclusive bounds within the original series.
    pub start: usize,
    pub end: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<FitResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

/// Result of the recursive test-and-split procedure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationResult {
    /// 1-based last indices of the left part of each split, sorted.
    pub change_points: Vec<usize>,
    pub segments: Vec<Segment>,
}

/// Binary segmentation: test the segment, split at the located change point
/// when the test rejects, recurse on both halves; stop on non-rejection or
/// when a segment falls below `2 * min_segment`. Each final segment is refit
/// at the configured gamma. Fit failures leave the segment unsplit with a
/// warning.
pub fn binary_segmentation(
    series: &Series,
    config: &SegmentationConfig,
) -> Result<SegmentationResult> {
    if config.min_segment < 50 {
        return Err(Error::InvalidParameter(format!(
            "min_segment must be at least 50, got {}",
            config.min_segment
        )));
    }
    let mut result = SegmentationResult { change_points: Vec::new(), segments: Vec::new() };
    segment_recurse(series, 0, series.len(), config, &mut result)?;
    result.change_points.sort_unstable();
    result.segments.sort_by_key(|s| s.start);
    Ok(result)
}

fn finalize_segment(
    series: &Series,
    start: usize,
    end: usize,
    config: &SegmentationConfig,
    warning: Option<String>,
    out: &mut SegmentationResult,
) -> Result<()> {
    let sub = series.slice(start, end)?;
    let (fit_result, warning) = match fit(&sub, config.gamma, &config.fit_opts()) {
        Ok(f) => (Some(f), warning),
        Err(e) => (None, Some(match warning {
            Some(w) => format!("{w}; refit failed: {e}"),
            None => format!("refit failed: {e}"),
        })),
    };
    out.segments.push(Segment { start: start + 1, end, fit: fit_result, warning });
    Ok(())
}

fn segment_recurse(
    series: &Series,
    start: usize,
    end: usize,
    config: &SegmentationConfig,
    out: &mut SegmentationResult,
) -> Result<()> {
    let len = end - start;
    if len < 2 * config.min_segment {
        return finalize_segment(series, start, end, config, None, out);
    }
    let sub = series.slice(start, end)?;
    let test = run_test(
        &sub,
        config.kind,
        config.gamma,
        config.trunc.as_ref(),
        config.alpha,
        &config.fit_opts(),
    );
    match test {
        Err(e) => finalize_segment(
            series,
            start,
            end,
            config,
            Some(format!("test failed: {e}")),
            out,
        ),
        Ok(r) if r.fit_converged == Some(false) => finalize_segment(
            series,
            start,
            end,
            config,
            Some("fit did not converge; segment left unsplit".into()),
            out,
        ),
        Ok(r) if !r.reject => finalize_segment(series, start, end, config, None, out),
        Ok(r) => {
            let k = r.k_hat; // local, 1-based: left part is start..start+k
            if k < config.min_segment || len - k < config.min_segment {
                return finalize_segment(
                    series,
                    start,
                    end,
                    config,
                    Some(format!(
                        "located change at local index {k} violates the minimum \
                         segment length; segment left unsplit"
                    )),
                    out,
                );
            }
            out.change_points.push(start + k);
            segment_recurse(series, start, start + k, config, out)?;
            segment_recurse(series, start + k, end, config, out)
        }
    }
}
