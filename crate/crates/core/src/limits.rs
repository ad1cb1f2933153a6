//! Limiting null distributions of the tests, tabulated by Monte Carlo, and a
//! cached critical-value provider.
//!
//! Two limit laws appear:
//!
//! * `SupBridge`: the supremum of |B(t) - t B(1)| over [0,1] (the Kolmogorov
//!   distribution), the CUSUM tests' limit;
//! * `SnFunctional`: the supremum of `(B(t) - t B(1))^2 / V(t)` where `V(t)`
//!   integrates squared within-segment partial-sum deviations on both sides
//!   of t, the self-normalized tests' limit.
//!
//! The crate ships a default quantile table generated once by
//! [`simulate_limit`] with `grid_n = 10_000`, `reps = 100_000`,
//! `seed = 20240101` (see `data/default_quantiles.csv`); regeneration is a
//! build-time command (`volbreak limits --emit ...`), never a runtime step.

use std::sync::OnceLock;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::bridge_dev_sq_prefix;
use crate::error::{Error, Result};
use crate::rng::derive_seed;

/// Quantile levels every table carries.
pub const DEFAULT_LEVELS: [f64; 3] = [0.90, 0.95, 0.99];

/// Parameters of the embedded default table.
pub const DEFAULT_GRID_N: usize = 10_000;
pub const DEFAULT_REPS: usize = 100_000;
pub const DEFAULT_SEED: u64 = 20240101;

const EMBEDDED_TABLE: &str = include_str!("../data/default_quantiles.csv");

/// Which limit law.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LimitKind {
    SupBridge,
    SnFunctional,
}

impl LimitKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LimitKind::SupBridge => "sup_bridge",
            LimitKind::SnFunctional => "sn_functional",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "sup_bridge" => Ok(LimitKind::SupBridge),
            "sn_functional" => Ok(LimitKind::SnFunctional),
            other => Err(Error::TableParse(format!("unknown limit kind {other:?}"))),
        }
    }
}

/// Empirical quantiles of one limit law, with the simulation parameters that
/// produced them. Reproducible: same (kind, grid_n, reps, seed) yields the
/// identical table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub kind: LimitKind,
    pub grid_n: usize,
    pub reps: usize,
    pub seed: u64,
    /// (probability level, quantile), sorted by level.
    pub quantiles: Vec<(f64, f64)>,
}

impl QuantileTable {
    /// Quantile at `level`, matched within 1e-9.
    pub fn quantile(&self, level: f64) -> Option<f64> {
        self.quantiles
            .iter()
            .find(|(l, _)| (l - level).abs() < 1e-9)
            .map(|&(_, q)| q)
    }

    /// CSV rows (no header) in the `kind,level,quantile,grid_n,reps,seed`
    /// layout.
    pub fn to_csv_rows(&self) -> String {
        let mut out = String::new();
        for (level, q) in &self.quantiles {
            out.push_str(&format!(
                "{},{},{:.6},{},{},{}\n",
                self.kind.as_str(),
                level,
                q,
                self.grid_n,
                self.reps,
                self.seed
            ));
        }
        out
    }
}

/// CSV header for quantile table files.
pub const TABLE_CSV_HEADER: &str = "kind,level,quantile,grid_n,reps,seed";

/// Parse a quantile table file (one or more kinds).
pub fn parse_tables(text: &str) -> Result<Vec<QuantileTable>> {
    let mut tables: Vec<QuantileTable> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line == TABLE_CSV_HEADER {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::TableParse(format!(
                "line {}: expected 6 fields, got {}",
                lineno + 1,
                fields.len()
            )));
        }
        let kind = LimitKind::parse(fields[0])?;
        let parse_f = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| Error::TableParse(format!("line {}: bad {what} {s:?}", lineno + 1)))
        };
        let parse_u = |s: &str, what: &str| -> Result<u64> {
            s.parse::<u64>()
                .map_err(|_| Error::TableParse(format!("line {}: bad {what} {s:?}", lineno + 1)))
        };
        let level = parse_f(fields[1], "level")?;
        let quantile = parse_f(fields[2], "quantile")?;
        let grid_n = parse_u(fields[3], "grid_n")? as usize;
        let reps = parse_u(fields[4], "reps")? as usize;
        let seed = parse_u(fields[5], "seed")?;
        match tables.iter_mut().find(|t| t.kind == kind) {
            Some(t) => {
                if t.grid_n != grid_n || t.reps != reps || t.seed != seed {
                    return Err(Error::TableParse(format!(
                        "line {}: inconsistent parameters within kind {}",
                        lineno + 1,
                        kind.as_str()
                    )));
                }
                t.quantiles.push((level, quantile));
            }
            None => tables.push(QuantileTable {
                kind,
                grid_n,
                reps,
                seed,
                quantiles: vec![(level, quantile)],
            }),
        }
    }
    for t in &mut tables {
        t.quantiles.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in t.quantiles.windows(2) {
            if w[1].1 < w[0].1 {
                return Err(Error::TableParse(format!(
                    "{} quantiles are not monotone in level",
                    t.kind.as_str()
                )));
            }
        }
    }
    Ok(tables)
}

/// One SupBridge draw: a discrete Brownian bridge on `grid_n` steps with the
/// within-interval supremum filled in exactly.
///
/// The grid path is the scaled Gaussian random walk minus its linear trend.
/// Conditionally on two adjacent grid values a, b the path between them is a
/// Brownian bridge over a step of length h, whose maximum has the explicit
/// law  P(max > m) = exp(-2 (m-a)(m-b)/h)  for m >= max(a, b); inverting at
/// a uniform draw gives an exact sample of the interval maximum (and, by
/// symmetry, the minimum). Taking the larger of |max| and |min| per interval
/// removes the O(sqrt(h)) discretization bias of the bare grid supremum.
fn sup_bridge_draw(grid_n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = grid_n;
    let scale = 1.0 / (n as f64).sqrt();
    let mut walk = Vec::with_capacity(n);
    let mut acc = 0.0f64;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        acc += z * scale;
        walk.push(acc);
    }
    let total = acc;
    let h = 1.0 / n as f64;
    let mut sup = 0.0f64;
    let mut prev = 0.0f64; // bridge value at t = 0
    for (i, w) in walk.iter().enumerate() {
        let cur = w - (i + 1) as f64 / n as f64 * total;
        let (a, b) = (prev, cur);
        let u: f64 = rng.gen();
        let interval_max = 0.5 * ((a + b) + ((a - b) * (a - b) - 2.0 * h * u.ln()).sqrt());
        let u2: f64 = rng.gen();
        let interval_min = 0.5 * ((a + b) - ((a - b) * (a - b) - 2.0 * h * u2.ln()).sqrt());
        sup = sup.max(interval_max).max(-interval_min);
        prev = cur;
    }
    sup
}

/// One SnFunctional draw: sup over interior grid points of
/// `(B(t) - t B(1))^2 / V(t)` with `V(t)` by left-endpoint Riemann sums.
///
/// Both numerator and denominator are invariant under removing the linear
/// trend of B, so everything is evaluated on the bridge path.
fn sn_functional_draw(grid_n: usize, rng: &mut ChaCha8Rng) -> f64 {
    let n = grid_n;
    let scale = 1.0 / (n as f64).sqrt();
    // beta[i] = bridge at i/n, i = 0..=n; beta[0] = beta[n] = 0.
    let mut beta = Vec::with_capacity(n + 1);
    beta.push(0.0f64);
    let mut acc = 0.0f64;
    for _ in 0..n {
        let z: f64 = rng.sample(StandardNormal);
        acc += z * scale;
        beta.push(acc);
    }
    let total = acc;
    for (i, b) in beta.iter_mut().enumerate() {
        *b -= i as f64 / n as f64 * total;
    }

    let forward = bridge_dev_sq_prefix(&beta[1..]);
    let reversed: Vec<f64> = beta[..n].iter().rev().copied().collect();
    let backward = bridge_dev_sq_prefix(&reversed);

    let mut sup = 0.0f64;
    for k in 1..n {
        let v = (forward[k - 1] + backward[n - k - 1]) / n as f64;
        if v <= 0.0 {
            continue;
        }
        let num = beta[k] * beta[k];
        sup = sup.max(num / v);
    }
    sup
}

/// Monte Carlo tabulation of a limit law.
///
/// Replication `i` draws from a stream seeded by `(seed, i)`, so the result
/// does not depend on how replications are scheduled. Returns quantiles at
/// the default levels {0.90, 0.95, 0.99} plus any `extra_levels`.
pub fn simulate_limit(
    kind: LimitKind,
    grid_n: usize,
    reps: usize,
    seed: u64,
    extra_levels: &[f64],
) -> Result<QuantileTable> {
    if grid_n < 1000 {
        return Err(Error::InvalidParameter(format!(
            "grid_n must be at least 1000, got {grid_n}"
        )));
    }
    if reps < 10_000 {
        return Err(Error::InvalidParameter(format!(
            "reps must be at least 10000, got {reps}"
        )));
    }
    for &l in extra_levels {
        if !(0.0..1.0).contains(&l) {
            return Err(Error::InvalidParameter(format!("bad quantile level {l}")));
        }
    }
    let draws = sample_limit(kind, grid_n, reps, seed);
    let mut sorted = draws;
    sorted.sort_by(f64::total_cmp);

    let mut levels: Vec<f64> = DEFAULT_LEVELS.to_vec();
    levels.extend_from_slice(extra_levels);
    levels.sort_by(f64::total_cmp);
    levels.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    let quantiles = levels
        .into_iter()
        .map(|l| (l, empirical_quantile(&sorted, l)))
        .collect();
    Ok(QuantileTable { kind, grid_n, reps, seed, quantiles })
}

/// Raw supremum draws of a limit law; exposed for distribution-level checks.
pub fn sample_limit(kind: LimitKind, grid_n: usize, reps: usize, seed: u64) -> Vec<f64> {
    (0..reps as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i));
            match kind {
                LimitKind::SupBridge => sup_bridge_draw(grid_n, &mut rng),
                LimitKind::SnFunctional => sn_functional_draw(grid_n, &mut rng),
            }
        })
        .collect()
}

/// Order-statistic quantile: the ceil(level * reps)-th smallest draw.
fn empirical_quantile(sorted: &[f64], level: f64) -> f64 {
    let r = sorted.len();
    let idx = ((level * r as f64).ceil() as usize).clamp(1, r) - 1;
    sorted[idx]
}

/// CDF of the Kolmogorov distribution,
/// `K(x) = 1 - 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 x^2)`,
/// summed until the terms drop below 1e-12. Returns 0 for `x <= 0`.
pub fn kolmogorov_cdf(x: f64) -> f64 {
    if x <= 0.05 {
        return 0.0;
    }
    let mut sum = 0.0f64;
    let mut sign = 1.0f64;
    for j in 1..10_000u32 {
        let term = (-2.0 * (j as f64) * (j as f64) * x * x).exp();
        sum += sign * term;
        if term < 1e-12 {
            break;
        }
        sign = -sign;
    }
    (1.0 - 2.0 * sum).clamp(0.0, 1.0)
}

/// Inverse of [`kolmogorov_cdf`] by bisection.
pub fn kolmogorov_quantile(p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) || p == 0.0 {
        return Err(Error::InvalidParameter(format!("bad probability {p}")));
    }
    let (mut lo, mut hi) = (0.05f64, 8.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn embedded_tables() -> &'static Vec<QuantileTable> {
    static TABLES: OnceLock<Vec<QuantileTable>> = OnceLock::new();
    TABLES.get_or_init(|| {
        parse_tables(EMBEDDED_TABLE).expect("embedded quantile table must parse")
    })
}

/// The shipped default table for a limit kind.
pub fn default_table(kind: LimitKind) -> &'static QuantileTable {
    embedded_tables()
        .iter()
        .find(|t| t.kind == kind)
        .expect("embedded table covers both kinds")
}

/// Critical value at significance level `alpha` from a given table: the
/// (1 - alpha) quantile. No interpolation; unknown levels are an error.
/// `alpha = 1` returns 0 (everything rejects).
pub fn critical_value_from(table: &QuantileTable, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Ok(0.0);
    }
    table.quantile(1.0 - alpha).ok_or_else(|| Error::UnknownLevel {
        kind: table.kind.as_str().into(),
        alpha,
    })
}

/// Critical value from the embedded default table. Serves
/// `alpha in {0.10, 0.05, 0.01}`; other levels need a user-supplied table.
pub fn critical_value(kind: LimitKind, alpha: f64) -> Result<f64> {
    critical_value_from(default_table(kind), alpha)
}

/// Opt-in linear interpolation between tabulated levels; still refuses to
/// extrapolate outside the tabulated range.
pub fn critical_value_interpolated(table: &QuantileTable, alpha: f64) -> Result<f64> {
    if alpha == 1.0 {
        return Ok(0.0);
    }
    let level = 1.0 - alpha;
    if let Some(q) = table.quantile(level) {
        return Ok(q);
    }
    let qs = &table.quantiles;
    for w in qs.windows(2) {
        if w[0].0 <= level && level <= w[1].0 {
            let t = (level - w[0].0) / (w[1].0 - w[0].0);
            return Ok(w[0].1 + t * (w[1].1 - w[0].1));
        }
    }
    Err(Error::UnknownLevel { kind: table.kind.as_str().into(), alpha })
}
