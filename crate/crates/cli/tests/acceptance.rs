//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (visible with `cargo test -- --nocapture`). Every tolerance is
//! pinned here; nothing is deferred to later calibration.
//!
//! Criterion 7 (the real-data workflow) needs the Bitcoin price CSV, which
//! is not bundled; point `VOLBREAK_BTC_CSV` at it (or place it under
//! `data/bitcoin.csv` at the workspace root) to activate the checks. Without
//! the file the test reports itself as skipped and passes vacuously.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use volbreak::detect::{
    binary_segmentation, cusum_process, run_test, self_normalizer, sn_test, truncate,
    SegmentationConfig, TestKind, TruncationSpec,
};
use volbreak::estimate::{
    dpd_objective, fit, objective_gradient, qmle_objective, FitOptions,
};
use volbreak::limits::{
    kolmogorov_cdf, kolmogorov_quantile, sample_limit, simulate_limit, LimitKind,
    DEFAULT_GRID_N, DEFAULT_REPS, DEFAULT_SEED,
};
use volbreak::mcstudy::{run_study, McTable, StudyConfig};
use volbreak::model::{simulate, GarchParams, Series, SimSpec};

use volbreak_cli::data::{load_csv, log_returns, ColumnSpec};

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn run_config(name: &str, reps_override: Option<usize>) -> McTable {
    let path = workspace_root().join("configs").join(name);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|e| panic!("cannot read {}: {e}", path.display()));
    let config = volbreak_cli::config::parse_study_config(&text).expect("config parses");
    match config {
        StudyConfig::Garch(mut garch) => {
            if let Some(r) = reps_override {
                garch.reps = r;
            }
            run_study(&garch.to_scenarios().unwrap(), 0).unwrap()
        }
        StudyConfig::Intro(mut intro) => {
            if let Some(r) = reps_override {
                intro.reps = r;
            }
            intro.run().unwrap()
        }
    }
}

fn rate(table: &McTable, scenario: &str, test: &str) -> f64 {
    let row = table
        .row(scenario, test)
        .unwrap_or_else(|| panic!("missing cell ({scenario}, {test})"));
    assert!(!row.aborted, "cell ({scenario}, {test}) aborted");
    row.rate
}

#[test]
fn criterion_1_intro_experiment_reproduces_table() {
    let started = Instant::now();
    let table = run_config("table1.cfg", None);
    // Printed (naive, robust) rates per cell.
    let expected = [
        ("size_clean_n100", 0.033, 0.034),
        ("size_clean_n300", 0.041, 0.042),
        ("size_clean_n500", 0.045, 0.044),
        ("size_outliers_n100", 0.013, 0.028),
        ("size_outliers_n300", 0.021, 0.040),
        ("size_outliers_n500", 0.030, 0.048),
        ("power_clean_n100", 0.440, 0.469),
        ("power_clean_n300", 0.958, 0.959),
        ("power_clean_n500", 0.999, 0.998),
        ("power_outliers_n100", 0.218, 0.428),
        ("power_outliers_n300", 0.472, 0.916),
        ("power_outliers_n500", 0.698, 0.996),
    ];
    for (scenario, naive, robust) in expected {
        let got_naive = rate(&table, scenario, "T_n");
        let got_robust = rate(&table, scenario, "T_n^R");
        assert!(
            (got_naive - naive).abs() <= 0.03,
            "{scenario} naive: {got_naive} vs printed {naive}"
        );
        assert!(
            (got_robust - robust).abs() <= 0.03,
            "{scenario} robust: {got_robust} vs printed {robust}"
        );
    }
    // Power grows with n: non-overlapping 2-se intervals.
    let p100 = rate(&table, "power_clean_n100", "T_n");
    let p500 = rate(&table, "power_clean_n500", "T_n");
    let se = |r: f64| (r * (1.0 - r) / 2000.0).sqrt();
    assert!(p500 - 2.0 * se(p500) > p100 + 2.0 * se(p100));
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}, target < 1 minute");
    eprintln!("ACCEPTANCE 1: PASS (24 intro cells within +-0.03, {elapsed:?})");
}

#[test]
fn criterion_2_clean_garch_spot_check() {
    let started = Instant::now();
    let table = run_config("table2.cfg", None);
    let checks = [
        // (scenario, test, printed, tolerance)
        ("size_n500", "T_n", 0.030, 0.03),
        ("size_n500", "T_n^9(MDPDE)", 0.031, 0.03),
        ("size_n500", "SN_n", 0.052, 0.03),
        ("size_n500", "SN_n^9(MDPDE)", 0.055, 0.03),
        ("size_n2000", "T_n", 0.052, 0.03),
        ("size_n2000", "T_n^9(MDPDE)", 0.048, 0.03),
        ("size_n2000", "SN_n", 0.049, 0.03),
        ("size_n2000", "SN_n^9(MDPDE)", 0.047, 0.03),
        ("power_omega_n500", "T_n", 0.308, 0.05),
        ("power_omega_n500", "T_n^9(MDPDE)", 0.309, 0.05),
        ("power_omega_n500", "SN_n", 0.323, 0.05),
        ("power_omega_n500", "SN_n^9(MDPDE)", 0.323, 0.05),
        ("power_omega_n2000", "T_n", 0.947, 0.05),
        ("power_omega_n2000", "T_n^9(MDPDE)", 0.946, 0.05),
        ("power_omega_n2000", "SN_n", 0.822, 0.05),
        ("power_omega_n2000", "SN_n^9(MDPDE)", 0.824, 0.05),
    ];
    for (scenario, test, printed, tol) in checks {
        let got = rate(&table, scenario, test);
        assert!(
            (got - printed).abs() <= tol,
            "({scenario}, {test}): {got} vs printed {printed} (tol {tol})"
        );
    }
    // Size sanity: clean sizes within 3 se of the [0.03, 0.07] band.
    for scenario in ["size_n500", "size_n2000"] {
        for row in table.rows.iter().filter(|r| r.scenario == scenario) {
            assert!(
                row.rate >= 0.03 - 3.0 * row.se && row.rate <= 0.07 + 3.0 * row.se,
                "({scenario}, {}): size {} escapes the sanity band",
                row.test,
                row.rate
            );
        }
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 1800, "took {elapsed:?}, target < 30 minutes");
    eprintln!("ACCEPTANCE 2: PASS (16 clean-GARCH cells, {elapsed:?})");
}

#[test]
fn criterion_3_io_power_collapse_and_recovery() {
    let table = run_config("table4.cfg", None);
    let naive = rate(&table, "power_omega_n2000", "T_n");
    let robust = rate(&table, "power_omega_n2000", "T_n^9(MDPDE)");
    assert!(
        (naive - 0.122).abs() <= 0.05,
        "naive power {naive} vs printed 0.122"
    );
    assert!(
        (robust - 0.797).abs() <= 0.05,
        "robust power {robust} vs printed 0.797"
    );
    assert!(
        robust - naive >= 0.5,
        "robustness gap {robust} - {naive} below 0.5"
    );
    eprintln!("ACCEPTANCE 3: PASS (naive {naive:.3} vs robust {robust:.3})");
}

#[test]
fn criterion_4_ao_size_distortion_and_sn_stability() {
    let table = run_config("table5.cfg", None);
    let cusum = rate(&table, "size_n2000", "T_n^9(MDPDE)");
    let sn = rate(&table, "size_n2000", "SN_n^9(MDPDE)");
    assert!(cusum > 0.30, "robust CUSUM size {cusum} not distorted (> 0.30)");
    assert!(
        (0.03..=0.09).contains(&sn),
        "robust SN size {sn} outside [0.03, 0.09]"
    );
    eprintln!("ACCEPTANCE 4: PASS (distorted CUSUM {cusum:.3}, stable SN {sn:.3})");
}

#[test]
fn criterion_5_sup_bridge_limit_matches_kolmogorov() {
    let table =
        simulate_limit(LimitKind::SupBridge, DEFAULT_GRID_N, DEFAULT_REPS, DEFAULT_SEED, &[])
            .unwrap();
    let q95 = table.quantile(0.95).unwrap();
    let analytic = kolmogorov_quantile(0.95).unwrap();
    assert!(
        (q95 - analytic).abs() <= 0.01,
        "simulated q95 {q95} vs analytic {analytic}"
    );

    let mut draws = sample_limit(LimitKind::SupBridge, DEFAULT_GRID_N, DEFAULT_REPS, DEFAULT_SEED);
    draws.sort_by(f64::total_cmp);
    let n = draws.len() as f64;
    let mut ks: f64 = 0.0;
    for (i, &x) in draws.iter().enumerate() {
        let f = kolmogorov_cdf(x);
        ks = ks.max((f - i as f64 / n).abs()).max(((i + 1) as f64 / n - f).abs());
    }
    assert!(ks <= 0.01, "KS distance {ks} above 0.01");
    eprintln!("ACCEPTANCE 5: PASS (q95 {q95:.4} vs {analytic:.4}, KS {ks:.4})");
}

#[test]
fn criterion_6_property_suites() {
    let mut rng = ChaCha8Rng::seed_from_u64(8128);

    // Truncation: Lipschitz, range, continuity at the branch points.
    for _ in 0..2000 {
        let m = rng.gen_range(0.5..20.0);
        let spec = TruncationSpec::new(m, rng.gen_range(0.0..0.99) * m).unwrap();
        let (x, y) = (rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0));
        let (fx, fy) = (truncate(x, &spec).unwrap(), truncate(y, &spec).unwrap());
        assert!((0.0..=m + 1e-12).contains(&fx));
        assert!((fx - fy).abs() <= (x - y).abs() + 1e-12);
        for knot in [spec.m - spec.delta, spec.m + spec.delta] {
            let lo = truncate((knot - 1e-9).max(0.0), &spec).unwrap();
            let hi = truncate(knot + 1e-9, &spec).unwrap();
            assert!((lo - hi).abs() < 1e-8);
        }
    }

    // CUSUM translation invariance and D_n = 0.
    for _ in 0..200 {
        let n = rng.gen_range(2..200);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let c = rng.gen_range(-10.0..10.0);
        let shifted: Vec<f64> = values.iter().map(|v| v + c).collect();
        let d0 = cusum_process(&values);
        let d1 = cusum_process(&shifted);
        assert!(d0.last().unwrap().abs() < 1e-9);
        for (a, b) in d0.iter().zip(&d1) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    // SN affine invariance to 1e-10.
    for _ in 0..100 {
        let n = rng.gen_range(8..200);
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..4.0)).collect();
        let a = [-3.0, -0.5, 0.7, 2.0][rng.gen_range(0..4)];
        let b = rng.gen_range(-5.0..5.0);
        let mapped: Vec<f64> = values.iter().map(|v| a * v + b).collect();
        let (t0, t1) = (sn_test(&values, 0.05).unwrap(), sn_test(&mapped, 0.05).unwrap());
        assert!((t0.statistic - t1.statistic).abs() / t0.statistic.abs().max(1.0) < 1e-10);
    }

    // O(n) self-normalizer equals the O(n^2) formula to 1e-10 up to n = 200.
    for n in [2usize, 3, 7, 50, 200] {
        let values: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let fast = self_normalizer(&values);
        for k in 1..n {
            let mut slow = 0.0f64;
            let sk: f64 = values[..k].iter().sum();
            for t in 1..=k {
                let st: f64 = values[..t].iter().sum();
                let dev = st - (t as f64 / k as f64) * sk;
                slow += dev * dev;
            }
            let rk1: f64 = values[k..].iter().sum();
            for t in (k + 1)..=n {
                let rt: f64 = values[(t - 1)..].iter().sum();
                let dev = rt - ((n - t + 1) as f64 / (n - k) as f64) * rk1;
                slow += dev * dev;
            }
            let denom = fast[k - 1].abs().max(slow.abs()).max(1e-12);
            assert!(
                (fast[k - 1] - slow).abs() / denom < 1e-10,
                "n {n} k {k}: {} vs {slow}",
                fast[k - 1]
            );
        }
    }

    // Analytic gradients of both criteria match central differences.
    let truth = GarchParams::new(1.0, 0.3, 0.4).unwrap();
    let series = simulate(&SimSpec::new(truth, 400, 17)).unwrap();
    for gamma in [0.0, 0.1, 0.5] {
        for _ in 0..20 {
            let p = GarchParams::new(
                rng.gen_range(0.2..3.0),
                rng.gen_range(0.02..0.5),
                rng.gen_range(0.05..0.45),
            )
            .unwrap();
            let grad = objective_gradient(&series, &p, gamma).unwrap();
            let h = 1e-6;
            let value = |p: &GarchParams| {
                if gamma == 0.0 {
                    qmle_objective(&series, p).unwrap()
                } else {
                    dpd_objective(&series, p, gamma).unwrap()
                }
            };
            let fd = [
                (value(&GarchParams { omega: p.omega + h, ..p })
                    - value(&GarchParams { omega: p.omega - h, ..p }))
                    / (2.0 * h),
                (value(&GarchParams { alpha: p.alpha + h, ..p })
                    - value(&GarchParams { alpha: p.alpha - h, ..p }))
                    / (2.0 * h),
                (value(&GarchParams { beta: p.beta + h, ..p })
                    - value(&GarchParams { beta: p.beta - h, ..p }))
                    / (2.0 * h),
            ];
            for i in 0..3 {
                assert!(
                    (grad[i] - fd[i]).abs() / grad[i].abs().max(1.0) < 1e-4,
                    "gamma {gamma} component {i}: {} vs fd {}",
                    grad[i],
                    fd[i]
                );
            }
        }
    }

    // Estimator scale equivariance.
    let opts = FitOptions::default();
    let s = simulate(&SimSpec::new(truth, 1500, 23)).unwrap();
    let c = 3.0f64;
    let scaled = Series::new(s.values().iter().map(|x| c * x).collect()).unwrap();
    for gamma in [0.0, 0.1] {
        let f1 = fit(&s, gamma, &opts).unwrap();
        let f2 = fit(&scaled, gamma, &opts).unwrap();
        assert!((f2.params.omega / (c * c) - f1.params.omega).abs() < 1e-4);
        assert!((f2.params.alpha - f1.params.alpha).abs() < 1e-4);
        assert!((f2.params.beta - f1.params.beta).abs() < 1e-4);
    }

    // Two-mean drift oracle at n = 1e5 within 3 standard errors.
    {
        let n = 100_000usize;
        let lambda = 0.4f64;
        let k_star = (n as f64 * lambda) as usize;
        let mut zrng = ChaCha8Rng::seed_from_u64(31337);
        let values: Vec<f64> = (0..n)
            .map(|t| {
                let z: f64 = zrng.sample(StandardNormal);
                z + if t >= k_star { 1.0 } else { 0.0 }
            })
            .collect();
        let d = cusum_process(&values);
        for s10 in 1..=9 {
            let s = s10 as f64 / 10.0;
            let k = (n as f64 * s) as usize;
            let expected =
                if s <= lambda { s * (1.0 - lambda) } else { lambda * (1.0 - s) };
            let se = (s * (1.0 - s) / n as f64).sqrt();
            assert!((d[k - 1] / n as f64 - expected).abs() <= 3.0 * se, "drift at s = {s}");
        }
    }

    // Monte Carlo determinism: bitwise-identical tables at parallelism 1 and 2.
    {
        let text =
            std::fs::read_to_string(workspace_root().join("configs/table2.cfg")).unwrap();
        let StudyConfig::Garch(mut garch) =
            volbreak_cli::config::parse_study_config(&text).unwrap()
        else {
            panic!("table2.cfg is a garch study");
        };
        garch.reps = 100;
        garch.scenarios.truncate(1);
        garch.scenarios[0].n = 300;
        let scenarios = garch.to_scenarios().unwrap();
        let a = run_study(&scenarios, 1).unwrap();
        let b = run_study(&scenarios, 2).unwrap();
        assert_eq!(a.to_csv(), b.to_csv(), "tables differ across parallelism");
    }

    eprintln!("ACCEPTANCE 6: PASS (property suites)");
}

/// Locate the Bitcoin dataset if supplied.
fn bitcoin_csv() -> Option<PathBuf> {
    if let Ok(path) = std::env::var("VOLBREAK_BTC_CSV") {
        let p = PathBuf::from(path);
        if p.exists() {
            return Some(p);
        }
    }
    let default = workspace_root().join("data/bitcoin.csv");
    default.exists().then_some(default)
}

#[test]
fn criterion_7_bitcoin_workflow_when_dataset_supplied() {
    let Some(path) = bitcoin_csv() else {
        eprintln!(
            "ACCEPTANCE 7: SKIPPED (Bitcoin dataset not supplied; set VOLBREAK_BTC_CSV \
             or place data/bitcoin.csv at the workspace root)"
        );
        return;
    };
    let prices = load_csv(&path, &ColumnSpec::default()).unwrap();
    let returns = log_returns(&prices).unwrap();
    assert!(
        (1459..=1461).contains(&returns.len()),
        "expected about 1460 returns, got {}",
        returns.len()
    );
    let opts = FitOptions::default();

    let qmle = fit(&returns, 0.0, &opts).unwrap();
    let mdpde = fit(&returns, 0.1, &opts).unwrap();
    for (got, want) in [
        (qmle.params.omega, 1.39),
        (qmle.params.alpha, 0.16),
        (qmle.params.beta, 0.78),
        (mdpde.params.omega, 0.33),
        (mdpde.params.alpha, 0.10),
        (mdpde.params.beta, 0.86),
    ] {
        assert!((got - want).abs() <= 0.05, "estimate {got} vs published {want}");
    }

    // The six-test battery against the published statistics (5% relative).
    let m9 = TruncationSpec::hard(9.0).unwrap();
    let m16 = TruncationSpec::hard(16.0).unwrap();
    let battery: [(&str, TestKind, f64, Option<&TruncationSpec>, f64); 6] = [
        ("T_n", TestKind::CusumNaive, 0.0, None, 0.51),
        ("SN_n", TestKind::SnNaive, 0.0, None, 3.18),
        ("T_n^9", TestKind::CusumRobust, 0.1, Some(&m9), 1.43),
        ("T_n^16", TestKind::CusumRobust, 0.1, Some(&m16), 1.01),
        ("SN_n^9", TestKind::SnRobust, 0.1, Some(&m9), 105.1),
        ("SN_n^16", TestKind::SnRobust, 0.1, Some(&m16), 76.2),
    ];
    let mut k9 = 0usize;
    let mut k16 = 0usize;
    for (label, kind, gamma, trunc, published) in battery {
        let r = run_test(&returns, kind, gamma, trunc, 0.05, &opts).unwrap();
        assert!(
            (r.statistic - published).abs() / published <= 0.05,
            "{label}: statistic {} vs published {published}",
            r.statistic
        );
        if label == "SN_n^9" {
            k9 = r.k_hat;
        }
        if label == "SN_n^16" {
            k16 = r.k_hat;
        }
    }
    assert_eq!(k9, 586, "SN_n^9 change point");
    assert_eq!(k16, 569, "SN_n^16 change point");

    // Segmentation: exactly one change at 586 with the published refits.
    let config = SegmentationConfig {
        kind: TestKind::SnRobust,
        gamma: 0.1,
        trunc: Some(m9),
        alpha: 0.05,
        min_segment: 250,
        fit_options: Some(opts),
    };
    let seg = binary_segmentation(&returns, &config).unwrap();
    assert_eq!(seg.change_points, vec![586], "segmentation change points");
    assert_eq!(seg.segments.len(), 2);
    let first = seg.segments[0].fit.unwrap().params;
    let second = seg.segments[1].fit.unwrap().params;
    for (got, want) in [
        (first.omega, 1.37),
        (first.alpha, 0.13),
        (first.beta, 0.80),
        (second.omega, 0.23),
        (second.alpha, 0.06),
        (second.beta, 0.89),
    ] {
        assert!((got - want).abs() <= 0.05, "segment fit {got} vs published {want}");
    }
    eprintln!("ACCEPTANCE 7: PASS (Bitcoin workflow reproduced)");
}
