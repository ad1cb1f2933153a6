//! Monte Carlo size/power studies: scenario grids, parallel replication,
//! and rejection-rate tables.
//!
//! Every replication derives its own seed from the scenario seed and the
//! replication index, so results are bitwise identical no matter how work is
//! scheduled. Within a replication all configured tests see the same
//! simulated series, and tests sharing an estimator share the fit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{
    cusum_test, sn_test, truncate_series, TestKind, TruncationSpec,
};
use crate::error::{Error, Result};
use crate::estimate::{fit, residuals_squared, FitOptions};
use crate::model::{
    simulate, ChangeSpec, ContaminationSpec, GarchParams, Innovation, OutlierKind, SimSpec,
};
use crate::rng::derive_seed;

/// Abort a cell when more than this fraction of fits fail.
const MAX_FAILURE_FRACTION: f64 = 0.05;

/// One test column of a study: statistic kind, estimator gamma, and the
/// truncation threshold for robust kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub label: String,
    pub kind: TestKind,
    pub gamma: f64,
    pub m: Option<f64>,
}

impl TestConfig {
    pub fn new(kind: TestKind, gamma: f64, m: Option<f64>) -> Self {
        let base = if kind.is_sn() { "SN_n" } else { "T_n" };
        let label = match (kind.is_robust(), m) {
            (true, Some(m)) => {
                let est = if gamma == 0.0 { "QMLE" } else { "MDPDE" };
                format!("{base}^{m}({est})")
            }
            _ => base.to_string(),
        };
        Self { label, kind, gamma, m }
    }

    fn trunc(&self) -> Result<Option<TruncationSpec>> {
        match (self.kind.is_robust(), self.m) {
            (true, Some(m)) => Ok(Some(TruncationSpec::hard(m)?)),
            (true, None) => Err(Error::InvalidParameter(format!(
                "test {} is robust but has no truncation threshold",
                self.label
            ))),
            (false, Some(_)) => Err(Error::InvalidParameter(format!(
                "test {} is naive but has a truncation threshold",
                self.label
            ))),
            (false, None) => Ok(None),
        }
    }
}

/// One simulation cell: data-generating parameters, optional change and
/// contamination, sample size, and the tests to run on it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct McScenario {
    pub label: String,
    pub base_params: GarchParams,
    /// (fraction lambda in (0,1), post-change parameters).
    pub change: Option<(f64, GarchParams)>,
    pub contamination: ContaminationSpec,
    pub n: usize,
    pub reps: usize,
    pub alpha: f64,
    pub burn_in: usize,
    pub tests: Vec<TestConfig>,
    pub seed: u64,
    #[serde(default)]
    pub fit_options: Option<FitOptions>,
}

impl McScenario {
    fn validate(&self) -> Result<()> {
        self.base_params.validate()?;
        self.contamination.validate()?;
        if let Some((lambda, post)) = &self.change {
            post.validate()?;
            if !(*lambda > 0.0 && *lambda < 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "change fraction must lie in (0,1), got {lambda}"
                )));
            }
        }
        if self.reps < 100 {
            return Err(Error::InvalidParameter(format!(
                "need at least 100 replications, got {}",
                self.reps
            )));
        }
        if self.tests.is_empty() {
            return Err(Error::InvalidInput("empty test list".into()));
        }
        for t in &self.tests {
            t.trunc()?;
        }
        Ok(())
    }

    fn sim_spec(&self, rep: u64) -> SimSpec {
        SimSpec {
            params: self.base_params,
            n: self.n,
            burn_in: self.burn_in,
            contamination: self.contamination,
            change: self.change.map(|(lambda, params)| ChangeSpec {
                at: ((self.n as f64) * lambda).floor() as usize,
                params,
            }),
            innovation: Innovation::StandardNormal,
            seed: derive_seed(self.seed, rep),
        }
    }
}

/// Outcome of one (scenario, test) cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    /// Rejection rate among converged replications.
    pub rate: f64,
    /// Binomial standard error sqrt(r (1-r) / reps_used).
    pub se: f64,
    pub failures: usize,
    pub reps_used: usize,
}

#[derive(Clone, Copy)]
enum RepOutcome {
    Reject(bool),
    Failure,
}

/// Evaluate every test of the scenario on one simulated replication.
fn run_replication(scenario: &McScenario, rep: u64) -> Vec<RepOutcome> {
    let opts = scenario.fit_options.unwrap_or_default();
    let series = match simulate(&scenario.sim_spec(rep)) {
        Ok(s) => s,
        Err(_) => return vec![RepOutcome::Failure; scenario.tests.len()],
    };

    // One fit and one residual pass per distinct gamma.
    let mut gamma_keys: Vec<u64> = scenario.tests.iter().map(|t| t.gamma.to_bits()).collect();
    gamma_keys.sort_unstable();
    gamma_keys.dedup();
    let fits: Vec<(u64, Option<Vec<f64>>)> = gamma_keys
        .iter()
        .map(|&bits| {
            let gamma = f64::from_bits(bits);
            let residuals = fit(&series, gamma, &opts).ok().and_then(|f| {
                if f.converged {
                    residuals_squared(&series, &f.params).ok().map(|r| r.values)
                } else {
                    None
                }
            });
            (bits, residuals)
        })
        .collect();

    scenario
        .tests
        .iter()
        .map(|t| {
            let residuals = fits
                .iter()
                .find(|(bits, _)| *bits == t.gamma.to_bits())
                .and_then(|(_, r)| r.as_ref());
            let Some(residuals) = residuals else {
                return RepOutcome::Failure;
            };
            let spec = t.trunc().expect("validated");
            let values = match &spec {
                Some(tr) => match truncate_series(residuals, tr) {
                    Ok(v) => v,
                    Err(_) => return RepOutcome::Failure,
                },
                None => residuals.clone(),
            };
            let outcome = if t.kind.is_sn() {
                sn_test(&values, scenario.alpha)
            } else {
                cusum_test(&values, scenario.alpha)
            };
            match outcome {
                Ok(r) => RepOutcome::Reject(r.reject),
                Err(_) => RepOutcome::Failure,
            }
        })
        .collect()
}

fn reduce_cell(outcomes: &[RepOutcome], scenario: &McScenario) -> Result<CellResult> {
    let reps = outcomes.len();
    let failures = outcomes
        .iter()
        .filter(|o| matches!(o, RepOutcome::Failure))
        .count();
    if (failures as f64) > MAX_FAILURE_FRACTION * reps as f64 {
        return Err(Error::CellAborted(format!(
            "{failures} of {reps} replications failed in scenario {:?}",
            scenario.label
        )));
    }
    let used = reps - failures;
    let rejects = outcomes
        .iter()
        .filter(|o| matches!(o, RepOutcome::Reject(true)))
        .count();
    let rate = rejects as f64 / used as f64;
    Ok(CellResult {
        rate,
        se: (rate * (1.0 - rate) / used as f64).sqrt(),
        failures,
        reps_used: used,
    })
}

/// Run every test of a scenario, sharing simulations and fits across tests.
/// Results are indexed like `scenario.tests`.
pub fn run_scenario(scenario: &McScenario) -> Result<Vec<CellResult>> {
    scenario.validate()?;
    let per_rep: Vec<Vec<RepOutcome>> = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|rep| run_replication(scenario, rep))
        .collect();
    scenario
        .tests
        .iter()
        .enumerate()
        .map(|(j, _)| {
            let column: Vec<RepOutcome> = per_rep.iter().map(|r| r[j]).collect();
            reduce_cell(&column, scenario)
        })
        .collect()
}

/// Run a single (scenario, test) cell. Equivalent to the matching column of
/// [`run_scenario`]: replication seeds depend only on the scenario seed and
/// the replication index, never on the test list.
pub fn run_cell(scenario: &McScenario, test: &TestConfig) -> Result<CellResult> {
    let mut single = scenario.clone();
    single.tests = vec![test.clone()];
    Ok(run_scenario(&single)?.remove(0))
}

/// One row of a rejection-rate table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McRow {
    pub scenario: String,
    pub test: String,
    pub n: usize,
    pub reps: usize,
    pub rate: f64,
    pub se: f64,
    pub failures: usize,
    /// Set when the cell aborted; `rate`/`se` are NaN in that case.
    pub aborted: bool,
}

/// Rejection-rate table across scenarios and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McTable {
    pub rows: Vec<McRow>,
}

impl McTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("scenario,test,n,reps,rate,se,failures,aborted\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{:.6},{:.6},{},{}\n",
                r.scenario, r.test, r.n, r.reps, r.rate, r.se, r.failures, r.aborted
            ));
        }
        out
    }

    pub fn row(&self, scenario: &str, test: &str) -> Option<&McRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == scenario && r.test == test)
    }
}

/// Evaluate all (scenario x test) cells on a thread pool of the requested
/// width (0 = rayon default). Per-cell aborts become flagged rows rather
/// than failing the whole study.
pub fn run_study(scenarios: &[McScenario], parallelism: usize) -> Result<McTable> {
    if scenarios.is_empty() {
        return Err(Error::InvalidInput("no scenarios".into()));
    }
    for s in scenarios {
        s.validate()?;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let mut rows = Vec::new();
    pool.install(|| -> Result<()> {
        for scenario in scenarios {
            match run_scenario(scenario) {
                Ok(cells) => {
                    for (test, cell) in scenario.tests.iter().zip(cells) {
                        rows.push(McRow {
                            scenario: scenario.label.clone(),
                            test: test.label.clone(),
                            n: scenario.n,
                            reps: scenario.reps,
                            rate: cell.rate,
                            se: cell.se,
                            failures: cell.failures,
                            aborted: false,
                        });
                    }
                }
                Err(Error::CellAborted(msg)) => {
                    for test in &scenario.tests {
                        rows.push(McRow {
                            scenario: scenario.label.clone(),
                            test: test.label.clone(),
                            n: scenario.n,
                            reps: scenario.reps,
                            rate: f64::NAN,
                            se: f64::NAN,
                            failures: usize::MAX,
                            aborted: true,
                        });
                    }
                    eprintln!("warning: {msg}");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    })?;
    Ok(McTable { rows })
}

/// Options for the i.i.d. introductory experiment.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct IntroOptions {
    pub n: usize,
    pub reps: usize,
    /// Outlier probability and magnitude (additive, sign-preserving).
    pub p: f64,
    pub s: f64,
    /// Midpoint variance ratio (e.g. 2.0 for a 1 -> 2 change); None for size.
    pub variance_ratio: Option<f64>,
    /// Truncation threshold for the robust statistic.
    pub m: f64,
    pub alpha: f64,
    pub seed: u64,
}

/// The introductory i.i.d. experiment: X_t = X0_t + s * sign(X0_t) * P_t with
/// X0_t ~ N(0, sigma^2), optional midpoint variance change, CUSUM tests on
/// raw and truncated squares. Returns (naive rate, robust rate).
pub fn intro_example(opts: &IntroOptions) -> Result<(f64, f64)> {
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    if opts.n < 50 {
        return Err(Error::InvalidInput(format!(
            "intro example needs n >= 50, got {}",
            opts.n
        )));
    }
    if !(0.0..=1.0).contains(&opts.p) || opts.s < 0.0 {
        return Err(Error::InvalidParameter("bad contamination".into()));
    }
    if let Some(r) = opts.variance_ratio {
        if r <= 0.0 {
            return Err(Error::InvalidParameter(format!("bad variance ratio {r}")));
        }
    }
    let trunc = TruncationSpec::hard(opts.m)?;
    let change_at = opts.n / 2;

    let counts: Vec<(bool, bool)> = (0..opts.reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, rep));
            let mut squares = Vec::with_capacity(opts.n);
            for t in 0..opts.n {
                let sd = match opts.variance_ratio {
                    Some(ratio) if t >= change_at => ratio.sqrt(),
                    _ => 1.0,
                };
                let z: f64 = rng.sample(StandardNormal);
                let x0 = sd * z;
                let hit = rng.gen::<f64>() < opts.p;
                let x = if hit {
                    x0 + opts.s * if x0 < 0.0 { -1.0 } else { 1.0 }
                } else {
                    x0
                };
                squares.push(x * x);
            }
            let naive = cusum_test(&squares, opts.alpha).map(|r| r.reject).unwrap_or(false);
            let truncated = truncate_series(&squares, &trunc).expect("squares are nonnegative");
            let robust = cusum_test(&truncated, opts.alpha).map(|r| r.reject).unwrap_or(false);
            (naive, robust)
        })
        .collect();

    let reps = opts.reps as f64;
    let naive_rate = counts.iter().filter(|(a, _)| *a).count() as f64 / reps;
    let robust_rate = counts.iter().filter(|(_, b)| *b).count() as f64 / reps;
    Ok((naive_rate, robust_rate))
}

// ---------------------------------------------------------------------------
// Config file schema (structured text mirror of the types above)
// ---------------------------------------------------------------------------

/// Top-level study configuration, distinguished by `kind = "garch" | "intro"`.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StudyConfig {
    Garch(GarchStudyConfig),
    Intro(IntroStudyConfig),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GarchStudyConfig {
    pub reps: usize,
    pub alpha: f64,
    pub seed: u64,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    pub tests: Vec<TestSpecConfig>,
    pub scenarios: Vec<ScenarioConfig>,
}

fn default_burn_in() -> usize {
    1000
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestSpecConfig {
    /// "cusum" or "sn".
    pub statistic: String,
    pub gamma: f64,
    pub m: Option<f64>,
    pub label: Option<String>,
}

impl TestSpecConfig {
    pub fn to_test_config(&self) -> Result<TestConfig> {
        let robust = self.m.is_some();
        let kind = match (self.statistic.as_str(), robust) {
            ("cusum", false) => TestKind::CusumNaive,
            ("cusum", true) => TestKind::CusumRobust,
            ("sn", false) => TestKind::SnNaive,
            ("sn", true) => TestKind::SnRobust,
            (other, _) => {
                return Err(Error::InvalidInput(format!(
                    "tests[].statistic must be \"cusum\" or \"sn\", got {other:?}"
                )))
            }
        };
        let mut cfg = TestConfig::new(kind, self.gamma, self.m);
        if let Some(label) = &self.label {
            cfg.label = label.clone();
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub label: String,
    pub n: usize,
    /// (omega, alpha, beta).
    pub params: [f64; 3],
    pub change_params: Option<[f64; 3]>,
    #[serde(default = "default_change_fraction")]
    pub change_fraction: f64,
    /// "io" or "ao" with probability `p` and magnitude `s`.
    pub outlier: Option<OutlierConfig>,
    pub reps: Option<usize>,
    pub seed: Option<u64>,
}

fn default_change_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierConfig {
    pub kind: String,
    pub p: f64,
    pub s: f64,
}

impl GarchStudyConfig {
    /// Expand the config into runnable scenarios.
    pub fn to_scenarios(&self) -> Result<Vec<McScenario>> {
        let tests: Vec<TestConfig> = self
            .tests
            .iter()
            .map(|t| t.to_test_config())
            .collect::<Result<_>>()?;
        self.scenarios
            .iter()
            .map(|s| {
                let base = GarchParams::new(s.params[0], s.params[1], s.params[2])?;
                let change = match s.change_params {
                    Some(p) => Some((
                        s.change_fraction,
                        GarchParams::new(p[0], p[1], p[2])?,
                    )),
                    None => None,
                };
                let contamination = match &s.outlier {
                    None => ContaminationSpec::none(),
                    Some(o) => {
                        let kind = match o.kind.as_str() {
                            "io" => OutlierKind::Io,
                            "ao" => OutlierKind::Ao,
                            other => {
                                return Err(Error::InvalidInput(format!(
                                    "scenario {:?}: outlier.kind must be \"io\" or \"ao\", \
                                     got {other:?}",
                                    s.label
                                )))
                            }
                        };
                        ContaminationSpec::new(kind, o.p, o.s)?
                    }
                };
                Ok(McScenario {
                    label: s.label.clone(),
                    base_params: base,
                    change,
                    contamination,
                    n: s.n,
                    reps: s.reps.unwrap_or(self.reps),
                    alpha: self.alpha,
                    burn_in: self.burn_in,
                    tests: tests.clone(),
                    seed: s.seed.unwrap_or(self.seed),
                    fit_options: None,
                })
            })
            .collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntroStudyConfig {
    pub reps: usize,
    pub alpha: f64,
    pub m: f64,
    pub seed: u64,
    pub cells: Vec<IntroCellConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntroCellConfig {
    pub label: String,
    pub n: usize,
    #[serde(default)]
    pub p: f64,
    #[serde(default)]
    pub s: f64,
    pub variance_ratio: Option<f64>,
}

impl IntroStudyConfig {
    /// Run every cell, producing naive/robust rows per cell.
    pub fn run(&self) -> Result<McTable> {
        let mut rows = Vec::new();
        for cell in &self.cells {
            let opts = IntroOptions {
                n: cell.n,
                reps: self.reps,
                p: cell.p,
                s: cell.s,
                variance_ratio: cell.variance_ratio,
                m: self.m,
                alpha: self.alpha,
                seed: self.seed,
            };
            let (naive, robust) = intro_example(&opts)?;
            for (test, rate) in [("T_n", naive), ("T_n^R", robust)] {
                rows.push(McRow {
                    scenario: cell.label.clone(),
                    test: test.to_string(),
                    n: cell.n,
                    reps: self.reps,
                    rate,
                    se: (rate * (1.0 - rate) / self.reps as f64).sqrt(),
                    failures: 0,
                    aborted: false,
                });
            }
        }
        Ok(McTable { rows })
    }
}
