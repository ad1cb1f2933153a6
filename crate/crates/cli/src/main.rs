//! `volbreak`: change-point tests for volatility series that hold up under
//! outliers.
//!
//! Subcommands: `test` (run the test battery on a price CSV), `segment`
//! (binary segmentation with per-regime refits), `mc` (Monte Carlo
//! size/power studies from a config file), `limits` (critical values and
//! quantile-table generation), `simulate` (write simulated series).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use volbreak::detect::{
    binary_segmentation, cusum_process, truncate_series, run_test, SegmentationConfig, TestKind,
    TruncationSpec,
};
use volbreak::estimate::{fit, residuals_squared, FitOptions};
use volbreak::limits::{
    critical_value_from, critical_value_interpolated, default_table, parse_tables,
    simulate_limit, LimitKind, TABLE_CSV_HEADER,
};
use volbreak::mcstudy::{StudyConfig, TestConfig};
use volbreak::model::{
    simulate_detailed, ChangeSpec, ContaminationSpec, GarchParams, Innovation, OutlierKind,
    Series, SimSpec,
};

use volbreak_cli::data::{load_csv, log_returns, ColumnSpec};
use volbreak_cli::report::{
    file_sha256, InputProvenance, LabeledTest, Report, SegmentReport,
};

#[derive(Parser)]
#[command(name = "volbreak", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run change-point tests on a price series.
    Test(TestArgs),
    /// Locate multiple changes by binary segmentation and refit per regime.
    Segment(SegmentArgs),
    /// Run a Monte Carlo study from a config file.
    Mc(McArgs),
    /// Critical values and limit-law quantile tables.
    Limits(LimitsArgs),
    /// Simulate a (possibly contaminated) GARCH series to CSV.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Statistic {
    Cusum,
    Sn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    SupBridge,
    SnFunctional,
}

impl From<KindArg> for LimitKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::SupBridge => LimitKind::SupBridge,
            KindArg::SnFunctional => LimitKind::SnFunctional,
        }
    }
}

#[derive(Args)]
struct DataArgs {
    /// Price CSV with `date,price` columns.
    #[arg(long)]
    data: PathBuf,
    /// Name of the date column.
    #[arg(long, default_value = "date")]
    date_col: String,
    /// Name of the price column.
    #[arg(long, default_value = "price")]
    price_col: String,
}

impl DataArgs {
    fn load(&self) -> Result<(InputProvenance, Series)> {
        let cols = ColumnSpec { date: self.date_col.clone(), price: self.price_col.clone() };
        let prices = load_csv(&self.data, &cols)?;
        let returns = log_returns(&prices)?;
        Ok((
            InputProvenance {
                path: self.data.display().to_string(),
                sha256: file_sha256(&self.data)?,
                rows: prices.len(),
                returns: returns.len(),
            },
            returns,
        ))
    }
}

#[derive(Args)]
struct FitArgs {
    /// MDPDE tuning parameter; 0 selects the QMLE.
    #[arg(long, default_value_t = 0.1)]
    gamma: f64,
    /// Maximum optimizer iterations.
    #[arg(long, default_value_t = 500)]
    max_iter: usize,
    /// Projected-gradient tolerance.
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
}

impl FitArgs {
    fn options(&self) -> FitOptions {
        FitOptions { max_iter: self.max_iter, grad_tol: self.tol, ..FitOptions::default() }
    }
}

#[derive(Args)]
struct TestArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Run a single statistic instead of the default six-test battery.
    #[arg(long, value_enum)]
    test: Option<Statistic>,
    /// With --test: use raw squared residuals and the plain estimator.
    #[arg(long)]
    naive: bool,
    /// With --test: truncate residuals and use the robust estimator.
    #[arg(long)]
    robust: bool,
    /// Truncation threshold for robust tests.
    #[arg(long, default_value_t = 9.0)]
    m: f64,
    /// Significance level (0.10, 0.05 or 0.01).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[command(flatten)]
    fit: FitArgs,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write plot-ready CUSUM deviation paths (one column per test).
    #[arg(long)]
    cusum_csv: Option<PathBuf>,
}

#[derive(Args)]
struct SegmentArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Statistic driving the segmentation.
    #[arg(long, value_enum, default_value_t = Statistic::Sn)]
    test: Statistic,
    /// Use the naive (untruncated, QMLE-based) variant.
    #[arg(long)]
    naive: bool,
    /// Truncation threshold for the robust variant.
    #[arg(long, default_value_t = 9.0)]
    m: f64,
    /// Significance level (0.10, 0.05 or 0.01).
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Smallest admissible segment length.
    #[arg(long, default_value_t = 250)]
    min_segment: usize,
    #[command(flatten)]
    fit: FitArgs,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write per-segment fits as CSV.
    #[arg(long)]
    segments_csv: Option<PathBuf>,
}

#[derive(Args)]
struct McArgs {
    /// Study config (TOML; see configs/ for examples).
    config: PathBuf,
    /// Write the rate table here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    parallelism: usize,
    /// Override the configured replication count (e.g. 2000 for full scale).
    #[arg(long)]
    reps: Option<usize>,
}

#[derive(Args)]
struct LimitsArgs {
    /// Limit law to query or tabulate (both when omitted with --emit).
    #[arg(long, value_enum)]
    kind: Option<KindArg>,
    /// Print the critical value at this significance level.
    #[arg(long)]
    alpha: Option<f64>,
    /// Quantile table file to look up instead of the embedded one.
    #[arg(long)]
    table: Option<PathBuf>,
    /// Opt-in linear interpolation between tabulated levels.
    #[arg(long)]
    interpolate: bool,
    /// Simulate fresh tables and write them as CSV.
    #[arg(long)]
    emit: Option<PathBuf>,
    #[arg(long, default_value_t = volbreak::limits::DEFAULT_GRID_N)]
    grid_n: usize,
    #[arg(long, default_value_t = volbreak::limits::DEFAULT_REPS)]
    reps: usize,
    #[arg(long, default_value_t = volbreak::limits::DEFAULT_SEED)]
    seed: u64,
    /// Extra quantile levels to tabulate beyond {0.90, 0.95, 0.99}.
    #[arg(long)]
    level: Vec<f64>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    omega: f64,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    beta: f64,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    burn_in: usize,
    /// Outlier mechanism.
    #[arg(long, value_enum)]
    outlier: Option<OutlierArg>,
    /// Outlier probability.
    #[arg(long, default_value_t = 0.0)]
    p: f64,
    /// Outlier magnitude multiplier.
    #[arg(long, default_value_t = 0.0)]
    s: f64,
    /// Switch parameters after this (1-based) observation.
    #[arg(long)]
    change_at: Option<usize>,
    #[arg(long)]
    change_omega: Option<f64>,
    #[arg(long)]
    change_alpha: Option<f64>,
    #[arg(long)]
    change_beta: Option<f64>,
    /// Also write clean values, outlier flags and variances.
    #[arg(long)]
    detailed: bool,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutlierArg {
    Io,
    Ao,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Test(args) => cmd_test(args),
        Command::Segment(args) => cmd_segment(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Limits(args) => cmd_limits(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn write_or_print(path: &Option<PathBuf>, content: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, content)
            .with_context(|| format!("cannot write {}", p.display())),
        None => {
            println!("{content}");
            Ok(())
        }
    }
}

/// The six-test battery: naive CUSUM and SN plus robust variants at M = 9
/// and 16 with the configured gamma.
fn battery(gamma: f64) -> Vec<TestConfig> {
    vec![
        TestConfig::new(TestKind::CusumNaive, 0.0, None),
        TestConfig::new(TestKind::SnNaive, 0.0, None),
        TestConfig::new(TestKind::CusumRobust, gamma, Some(9.0)),
        TestConfig::new(TestKind::CusumRobust, gamma, Some(16.0)),
        TestConfig::new(TestKind::SnRobust, gamma, Some(9.0)),
        TestConfig::new(TestKind::SnRobust, gamma, Some(16.0)),
    ]
}

fn cmd_test(args: TestArgs) -> Result<u8> {
    let (input, returns) = args.data.load()?;
    let opts = args.fit.options();

    let configs: Vec<TestConfig> = match args.test {
        None => battery(args.fit.gamma),
        Some(stat) => {
            if args.naive == args.robust {
                bail!("single-test mode needs exactly one of --naive / --robust");
            }
            let kind = match (stat, args.robust) {
                (Statistic::Cusum, false) => TestKind::CusumNaive,
                (Statistic::Cusum, true) => TestKind::CusumRobust,
                (Statistic::Sn, false) => TestKind::SnNaive,
                (Statistic::Sn, true) => TestKind::SnRobust,
            };
            let gamma = if args.robust { args.fit.gamma } else { 0.0 };
            let m = args.robust.then_some(args.m);
            vec![TestConfig::new(kind, gamma, m)]
        }
    };

    let mut tests = Vec::new();
    for cfg in &configs {
        let trunc = match cfg.m {
            Some(m) => Some(TruncationSpec::hard(m)?),
            None => None,
        };
        let result = run_test(&returns, cfg.kind, cfg.gamma, trunc.as_ref(), args.alpha, &opts)?;
        if result.fit_converged == Some(false) {
            eprintln!("warning: estimation did not converge for {}", cfg.label);
        }
        tests.push(LabeledTest { label: cfg.label.clone(), result });
    }

    if let Some(path) = &args.cusum_csv {
        emit_cusum_paths(path, &returns, &configs, &opts)?;
    }

    let change_points: Vec<usize> = tests
        .iter()
        .filter(|t| t.result.reject)
        .map(|t| t.result.k_hat)
        .collect();
    let report = Report {
        input,
        config: serde_json::json!({
            "command": "test",
            "alpha": args.alpha,
            "gamma": args.fit.gamma,
            "tests": configs.iter().map(|c| c.label.clone()).collect::<Vec<_>>(),
        }),
        tests,
        change_points,
        segments: Vec::new(),
    };
    write_or_print(&args.out, &report.to_json()?)?;
    for t in &report.tests {
        eprintln!(
            "{:<16} statistic {:>9.4}  cv {:>8.4}  {}{}",
            t.label,
            t.result.statistic,
            t.result.critical_value,
            if t.result.reject { "REJECT" } else { "accept" },
            if t.result.reject {
                format!("  k_hat {}", t.result.k_hat)
            } else {
                String::new()
            }
        );
    }
    Ok(if report.any_rejection() { 2 } else { 0 })
}

/// Plot-ready CUSUM deviation paths, one column per test config.
fn emit_cusum_paths(
    path: &Path,
    returns: &Series,
    configs: &[TestConfig],
    opts: &FitOptions,
) -> Result<()> {
    let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
    for cfg in configs {
        let fitted = fit(returns, cfg.gamma, opts)?;
        let residuals = residuals_squared(returns, &fitted.params)?;
        let values = match cfg.m {
            Some(m) => truncate_series(&residuals.values, &TruncationSpec::hard(m)?)?,
            None => residuals.values,
        };
        columns.push((cfg.label.clone(), cusum_process(&values)));
    }
    let n = returns.len();
    let mut out = String::from("k");
    for (label, _) in &columns {
        out.push(',');
        out.push_str(label);
    }
    out.push('\n');
    for k in 0..n {
        out.push_str(&(k + 1).to_string());
        for (_, col) in &columns {
            out.push_str(&format!(",{:.6}", col[k]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_segment(args: SegmentArgs) -> Result<u8> {
    let (input, returns) = args.data.load()?;
    if returns.len() < 2 * args.min_segment {
        eprintln!(
            "warning: series of length {} is shorter than 2 * min_segment = {}; \
             no test attempted",
            returns.len(),
            2 * args.min_segment
        );
    }
    let kind = match (args.test, args.naive) {
        (Statistic::Cusum, true) => TestKind::CusumNaive,
        (Statistic::Cusum, false) => TestKind::CusumRobust,
        (Statistic::Sn, true) => TestKind::SnNaive,
        (Statistic::Sn, false) => TestKind::SnRobust,
    };
    let gamma = if args.naive { 0.0 } else { args.fit.gamma };
    let config = SegmentationConfig {
        kind,
        gamma,
        trunc: if args.naive { None } else { Some(TruncationSpec::hard(args.m)?) },
        alpha: args.alpha,
        min_segment: args.min_segment,
        fit_options: Some(args.fit.options()),
    };
    let result = binary_segmentation(&returns, &config)?;

    let segments: Vec<SegmentReport> = result
        .segments
        .iter()
        .map(|s| SegmentReport {
            start: s.start,
            end: s.end,
            fit: s.fit,
            warning: s.warning.clone(),
        })
        .collect();
    if let Some(path) = &args.segments_csv {
        let mut out = String::from("start,end,omega,alpha,beta,converged,warning\n");
        for s in &segments {
            match &s.fit {
                Some(f) => out.push_str(&format!(
                    "{},{},{:.6},{:.6},{:.6},{},{}\n",
                    s.start,
                    s.end,
                    f.params.omega,
                    f.params.alpha,
                    f.params.beta,
                    f.converged,
                    s.warning.as_deref().unwrap_or("")
                )),
                None => out.push_str(&format!(
                    "{},{},,,,,{}\n",
                    s.start,
                    s.end,
                    s.warning.as_deref().unwrap_or("")
                )),
            }
        }
        std::fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))?;
    }

    let report = Report {
        input,
        config: serde_json::json!({
            "command": "segment",
            "statistic": format!("{kind:?}"),
            "gamma": gamma,
            "m": if args.naive { None } else { Some(args.m) },
            "alpha": args.alpha,
            "min_segment": args.min_segment,
        }),
        tests: Vec::new(),
        change_points: result.change_points.clone(),
        segments,
    };
    write_or_print(&args.out, &report.to_json()?)?;
    eprintln!(
        "{} change point(s): {:?}",
        report.change_points.len(),
        report.change_points
    );
    for s in &report.segments {
        if let Some(f) = &s.fit {
            eprintln!(
                "segment [{:>5}, {:>5}]  (omega, alpha, beta) = ({:.3}, {:.3}, {:.3}){}",
                s.start,
                s.end,
                f.params.omega,
                f.params.alpha,
                f.params.beta,
                if f.converged { "" } else { "  [not converged]" }
            );
        }
    }
    Ok(if report.change_points.is_empty() { 0 } else { 2 })
}

fn cmd_mc(args: McArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("cannot read config {}", args.config.display()))?;
    let config = volbreak_cli::config::parse_study_config(&text)
        .with_context(|| format!("bad study config {}", args.config.display()))?;
    let table = match config {
        StudyConfig::Garch(mut garch) => {
            if let Some(reps) = args.reps {
                garch.reps = reps;
                for s in &mut garch.scenarios {
                    s.reps = None;
                }
            }
            let scenarios = garch.to_scenarios()?;
            volbreak::mcstudy::run_study(&scenarios, args.parallelism)?
        }
        StudyConfig::Intro(mut intro) => {
            if let Some(reps) = args.reps {
                intro.reps = reps;
            }
            intro.run()?
        }
    };
    write_or_print(&args.out, &table.to_csv())?;
    eprintln!("{} cell(s) evaluated", table.rows.len());
    Ok(0)
}

fn cmd_limits(args: LimitsArgs) -> Result<u8> {
    if let Some(path) = &args.emit {
        let kinds: Vec<LimitKind> = match args.kind {
            Some(k) => vec![k.into()],
            None => vec![LimitKind::SupBridge, LimitKind::SnFunctional],
        };
        let mut out = String::from(TABLE_CSV_HEADER);
        out.push('\n');
        for kind in kinds {
            eprintln!(
                "simulating {} (grid_n = {}, reps = {}, seed = {})...",
                kind.as_str(),
                args.grid_n,
                args.reps,
                args.seed
            );
            let table = simulate_limit(kind, args.grid_n, args.reps, args.seed, &args.level)?;
            out.push_str(&table.to_csv_rows());
        }
        std::fs::write(path, &out)
            .with_context(|| format!("cannot write {}", path.display()))?;
        eprintln!("wrote {}", path.display());
        return Ok(0);
    }

    let Some(alpha) = args.alpha else {
        bail!("nothing to do: pass --alpha to query or --emit to tabulate");
    };
    let Some(kind) = args.kind else {
        bail!("--alpha needs --kind");
    };
    let kind: LimitKind = kind.into();
    let value = match &args.table {
        None => {
            let table = default_table(kind);
            if args.interpolate {
                critical_value_interpolated(table, alpha)?
            } else {
                critical_value_from(table, alpha)?
            }
        }
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read table {}", path.display()))?;
            let tables = parse_tables(&text)?;
            let table = tables
                .iter()
                .find(|t| t.kind == kind)
                .with_context(|| format!("{} has no {} rows", path.display(), kind.as_str()))?;
            if args.interpolate {
                critical_value_interpolated(table, alpha)?
            } else {
                critical_value_from(table, alpha)?
            }
        }
    };
    println!("{value:.4}");
    Ok(0)
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let params = GarchParams::new(args.omega, args.alpha, args.beta)?;
    let contamination = match args.outlier {
        None => ContaminationSpec::none(),
        Some(OutlierArg::Io) => ContaminationSpec::new(OutlierKind::Io, args.p, args.s)?,
        Some(OutlierArg::Ao) => ContaminationSpec::new(OutlierKind::Ao, args.p, args.s)?,
    };
    let change = match args.change_at {
        None => None,
        Some(at) => {
            let (Some(o), Some(a), Some(b)) =
                (args.change_omega, args.change_alpha, args.change_beta)
            else {
                bail!("--change-at needs --change-omega, --change-alpha and --change-beta");
            };
            Some(ChangeSpec { at, params: GarchParams::new(o, a, b)? })
        }
    };
    let spec = SimSpec {
        params,
        n: args.n,
        burn_in: args.burn_in,
        contamination,
        change,
        innovation: Innovation::StandardNormal,
        seed: args.seed,
    };
    let out = simulate_detailed(&spec)?;
    let mut csv = if args.detailed {
        String::from("t,x,clean,outlier,variance\n")
    } else {
        String::from("t,x\n")
    };
    for t in 0..args.n {
        if args.detailed {
            csv.push_str(&format!(
                "{},{:.10},{:.10},{},{:.10}\n",
                t + 1,
                out.series.values()[t],
                out.clean[t],
                out.outlier[t] as u8,
                out.variance[t]
            ));
        } else {
            csv.push_str(&format!("{},{:.10}\n", t + 1, out.series.values()[t]));
        }
    }
    write_or_print(&args.out, &csv)?;
    Ok(0)
}
