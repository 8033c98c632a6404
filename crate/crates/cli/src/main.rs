//! `sigtest` command-line front end.
//!
//! Exit codes: 0 success, 2 input or validation error, 3 numerical or rank
//! failure, 4 noise variance missing and not estimable.

use std::fmt::Write as _;
use std::fs::File;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sigtest::glm::{glm_drops, gumbel_test_glm, Family, GlmData};
use sigtest::io::{read_binary, read_dataset, read_statistics, read_survival};
use sigtest::montecarlo::{qq_points, run_scenario_with_threads, Scenario, PRESET_NAMES};
use sigtest::sig_tests::{mark_plug_in, resolve_sigma2, VarianceSource};
use sigtest::{
    covariance_test, gumbel_test, lars_path, lasso_steps, standardize, stepwise_path, Dataset,
    Error, Reference, Selector, TestOutcome, TestRecord,
};

#[derive(Parser)]
#[command(name = "sigtest", version, about = "Significance tests for lasso and forward-stepwise paths")]
struct Cli {
    #[command(subcommand)]
    verb: Verb,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Verb {
    /// Print the lasso knot table of a CSV dataset (response column `y`).
    Path {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Test every step of the selection path.
    Test {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        sigma2: Option<f64>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[arg(long, default_value = "max_r")]
        selector: Selector,
        #[arg(long, default_value = "gaussian")]
        family: Family,
        /// Fit an intercept in logistic models.
        #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
        intercept: bool,
        #[arg(long)]
        max_steps: Option<usize>,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment.
    Simulate {
        /// Preset name (same as --scenario).
        name: Option<String>,
        #[arg(long, conflicts_with = "name")]
        scenario: Option<String>,
        /// Scenario as a JSON object.
        #[arg(long, conflicts_with_all = ["name", "scenario"])]
        inline: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        /// Directory for statistics.csv, qq.csv and summary.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Q-Q pairs of a statistics file (one value per line) against a reference.
    Qq {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        reference: Reference,
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

/// Error carrying the process exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::MissingVariance => 4,
            Error::DegenerateColumn(_) => 3,
            e if e.is_numerical() => 3,
            _ => 2,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

type CliResult<T> = std::result::Result<T, Failure>;

fn open(path: &Path) -> CliResult<File> {
    File::open(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

/// Write `contents` to `path` through a temporary file in the same directory.
fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let io_err = |e: std::io::Error| usage(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io_err)?;
    tmp.write_all(contents.as_bytes()).map_err(io_err)?;
    tmp.as_file().sync_all().map_err(io_err)?;
    tmp.persist(path).map_err(|e| io_err(e.error))?;
    Ok(())
}

fn emit(output: Option<&Path>, contents: &str) -> CliResult<()> {
    match output {
        Some(p) => write_atomic(p, contents),
        None => {
            print!("{contents}");
            Ok(())
        }
    }
}

fn warn(msg: &str) {
    eprintln!("warning: {msg}");
}

fn one_based(set: &[usize]) -> String {
    set.iter().map(|a| (a + 1).to_string()).collect::<Vec<_>>().join(";")
}

fn gaussian_input(path: &Path, sigma2: Option<f64>) -> CliResult<Dataset> {
    let (data, _) = read_dataset(open(path)?, sigma2)?;
    if data.is_standardized() {
        return Ok(data);
    }
    let x = standardize(data.x(), false)?;
    Ok(Dataset::new(x, data.y().clone(), data.sigma2())?)
}

fn cmd_path(input: &Path, max_steps: Option<usize>, output: Option<&Path>) -> CliResult<()> {
    let data = gaussian_input(input, None)?;
    let steps = max_steps.unwrap_or(data.n().min(data.p()));
    let path = lars_path(&data, steps)?;
    path.warnings.iter().for_each(|w| warn(w));
    let mut out = String::from("k,lambda,entering,action,active_set\n");
    for knot in &path.knots {
        writeln!(
            out,
            "{},{},{},{},{}",
            knot.k,
            knot.lambda,
            knot.variable + 1,
            knot.action.as_str(),
            one_based(&knot.active_after)
        )
        .unwrap();
    }
    emit(output, &out)
}

const TOO_FEW: &str = "too-few-remaining";

/// One row of the per-step table.
#[derive(Default)]
struct Row {
    k: usize,
    j: usize,
    r_j: f64,
    selector: String,
    conservative: bool,
    gumbel: Option<TestOutcome>,
    covariance: Option<TestOutcome>,
    notes: Vec<String>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn opt_bool(v: Option<bool>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn render_rows(rows: &[Row], format: Format, drop_label: &str) -> String {
    match format {
        Format::Json => {
            let records: Vec<TestRecord> = rows
                .iter()
                .flat_map(|r| r.gumbel.iter().chain(&r.covariance))
                .map(TestOutcome::record)
                .collect();
            let mut s = serde_json::to_string_pretty(&records).expect("records serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut out = format!(
                "k,j,{drop_label},selector,conservative,gumbel_statistic,correction,gumbel_p_value,gumbel_reject,\
                 cov_statistic,cov_p_value,cov_reject,notes\n"
            );
            for r in rows {
                let g = r.gumbel.as_ref();
                let c = r.covariance.as_ref();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    r.k,
                    r.j + 1,
                    r.r_j,
                    r.selector,
                    r.conservative,
                    opt(g.map(|o| o.statistic)),
                    opt(g.and_then(|o| o.correction)),
                    opt(g.map(|o| o.p_value)),
                    opt_bool(g.map(|o| o.reject)),
                    opt(c.map(|o| o.statistic)),
                    opt(c.map(|o| o.p_value)),
                    opt_bool(c.map(|o| o.reject)),
                    r.notes.join(";"),
                )
                .unwrap();
            }
            out
        }
    }
}

fn gaussian_rows(
    data: &Dataset,
    selector: Selector,
    alpha: f64,
    max_steps: Option<usize>,
) -> CliResult<Vec<Row>> {
    let (data, source) = resolve_sigma2(data)?;
    let limit = data.n().min(data.p());
    let steps = max_steps.unwrap_or(limit).min(limit);
    // one extra entry so the covariance test has a next knot
    let path = lars_path(&data, (steps + 1).min(limit))?;
    path.warnings.iter().for_each(|w| warn(w));
    let selection = match selector {
        Selector::Lasso => lasso_steps(&path, &data)?,
        s => stepwise_path(&data, steps, s)?,
    };
    selection.notes.iter().for_each(|n| warn(n));

    let mut rows = Vec::new();
    for step in selection.steps.iter().take(steps) {
        let mut row = Row {
            k: step.k,
            j: step.entering,
            r_j: step.r_j,
            selector: step.selector.as_str().into(),
            conservative: step.is_conservative(),
            ..Row::default()
        };
        match gumbel_test(step, alpha) {
            Ok(o) => row.gumbel = Some(o),
            Err(Error::TooFewRemaining(_)) => row.notes.push(TOO_FEW.into()),
            Err(e) => return Err(e.into()),
        }
        match covariance_test(&path, &data, step.k, alpha) {
            Ok(o) => row.covariance = Some(o),
            Err(e @ (Error::PathTooShort(_) | Error::UnsupportedStep(_))) => row.notes.push(e.to_string()),
            Err(e) => return Err(e.into()),
        }
        if source == VarianceSource::PlugIn {
            row.gumbel.iter_mut().chain(row.covariance.iter_mut()).for_each(mark_plug_in);
        }
        rows.push(row);
    }
    Ok(rows)
}

fn glm_rows(data: GlmData<'_>, alpha: f64, max_steps: Option<usize>) -> CliResult<Vec<Row>> {
    let steps = max_steps.unwrap_or(data.p()).min(data.p());
    let mut active = Vec::new();
    let mut rows = Vec::new();
    for k in 1..=steps {
        let drops = glm_drops(data, &active)?;
        drops.warnings.iter().for_each(|w| warn(w));
        let Some((j, d)) = drops.max() else { break };
        let mut row = Row {
            k,
            j,
            r_j: d,
            selector: Selector::MaxR.as_str().into(),
            ..Row::default()
        };
        if drops.remaining >= 3 {
            row.gumbel = Some(gumbel_test_glm(data, &active, alpha)?);
        } else {
            row.notes.push(TOO_FEW.into());
        }
        rows.push(row);
        active.push(j);
    }
    Ok(rows)
}

#[allow(clippy::too_many_arguments)]
fn cmd_test(
    input: &Path,
    sigma2: Option<f64>,
    alpha: f64,
    selector: Selector,
    family: Family,
    intercept: bool,
    max_steps: Option<usize>,
    format: Format,
    output: Option<&Path>,
) -> CliResult<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("--alpha must lie in (0, 1), got {alpha}")));
    }
    if max_steps == Some(0) {
        return Err(usage("--max-steps must be positive"));
    }
    if family != Family::Gaussian && selector == Selector::Lasso {
        return Err(usage("the lasso selector is only available for the gaussian family"));
    }
    let (rows, label) = match family {
        Family::Gaussian => (gaussian_rows(&gaussian_input(input, sigma2)?, selector, alpha, max_steps)?, "R_j"),
        Family::Logistic => {
            let (data, _) = read_binary(open(input)?, intercept)?;
            (glm_rows(GlmData::Logistic(&data), alpha, max_steps)?, "D_max")
        }
        Family::Cox => {
            let (data, _) = read_survival(open(input)?)?;
            (glm_rows(GlmData::Cox(&data), alpha, max_steps)?, "D_max")
        }
    };
    emit(output, &render_rows(&rows, format, label))
}

fn threads_from_env() -> CliResult<usize> {
    match std::env::var("SIGTEST_THREADS") {
        Ok(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("SIGTEST_THREADS must be a non-negative integer, got '{v}'"))),
        _ => Ok(0),
    }
}

fn qq_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("theoretical,empirical\n");
    for (t, e) in points {
        writeln!(out, "{t},{e}").unwrap();
    }
    out
}

fn cmd_simulate(
    name: Option<String>,
    inline: Option<String>,
    seed: Option<u64>,
    reps: Option<usize>,
    out: Option<&Path>,
) -> CliResult<()> {
    let mut scenario = match (name, inline) {
        (Some(n), _) => Scenario::preset(&n).ok_or_else(|| {
            usage(format!("unknown preset '{n}'; available: {}", PRESET_NAMES.join(", ")))
        })?,
        (None, Some(json)) => {
            serde_json::from_str(&json).map_err(|e| usage(format!("inline scenario: {e}")))?
        }
        (None, None) => return Err(usage("simulate needs a preset name, --scenario or --inline")),
    };
    if let Some(s) = seed {
        scenario.seed = s;
    }
    if let Some(r) = reps {
        scenario.reps = r;
    }
    scenario.validate()?;
    let summary = run_scenario_with_threads(&scenario, threads_from_env()?)?;
    for (rep, reason) in &summary.failure_reasons {
        warn(&format!("replication {rep} failed: {reason}"));
    }
    let mut json = serde_json::to_string_pretty(&summary.record()).expect("summary serializes");
    json.push('\n');
    match out {
        None => print!("{json}"),
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| usage(format!("{}: {e}", dir.display())))?;
            let stats: String = summary.statistics.iter().map(|s| format!("{s}\n")).collect();
            write_atomic(&dir.join("statistics.csv"), &stats)?;
            write_atomic(&dir.join("qq.csv"), &qq_csv(&summary.qq))?;
            write_atomic(&dir.join("summary.json"), &json)?;
        }
    }
    if summary.unreliable {
        warn("more than 5% of replications failed; summary marked unreliable");
    }
    Ok(())
}

fn cmd_qq(input: &Path, reference: Reference, output: Option<&Path>) -> CliResult<()> {
    let stats = read_statistics(open(input)?)?;
    let points = qq_points(&stats, reference)?;
    emit(output, &qq_csv(&points))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.verb {
        Verb::Path { input, max_steps, output } => {
            if max_steps == Some(0) {
                return Err(usage("--max-steps must be positive"));
            }
            cmd_path(&input, max_steps, output.as_deref())
        }
        Verb::Test { input, sigma2, alpha, selector, family, intercept, max_steps, format, output } => {
            cmd_test(&input, sigma2, alpha, selector, family, intercept, max_steps, format, output.as_deref())
        }
        Verb::Simulate { name, scenario, inline, seed, reps, out } => {
            cmd_simulate(name.or(scenario), inline, seed, reps, out.as_deref())
        }
        Verb::Qq { input, reference, output } => cmd_qq(&input, reference, output.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
