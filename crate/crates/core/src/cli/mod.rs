//! Command-line front end: configuration ingestion, the check → solve → certify pipeline
//! and artifact emission (JSON report, CSV curves, optional SVG plots).

mod report;
mod svg;

use std::ffi::OsString;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::harris::{
    harris_certificate, lyapunov_pair, minorization, splitting_diagnostic, sub_eigen_certificate, HarrisError,
};
use crate::model::{
    build_model, check_hypotheses, derived_constants, norm, CoefficientModel, ModelConfig, SamplingPlan,
};
use crate::semiflow::{write_fields_csv, GridField, PropagatorConfig, TruncatedBox};
use crate::spectral::{
    convergence_rate, dense_oracle, orthogonal_test_field, richardson_lambda, solve, write_decay_csv, EigenSolution,
    PeriodOperator, SpectralError, DEFAULT_MAX_ITER, DEFAULT_TOL, DENSE_ORACLE_LIMIT,
};

pub use report::{Certificates, LambdaBracket, OracleSummary, Report};
pub use svg::line_plot;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_HYPOTHESES: i32 = 3;

/// Largest grid on which `certify` also runs the dense oracle.
const CERTIFY_ORACLE_LIMIT: usize = 1024;

#[derive(Debug, Parser)]
#[command(name = "floquet", version, about = "Floquet principal eigenvalue and attraction certificates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample the structural hypotheses on the box.
    Check(RunArgs),
    /// Compute λ_F and the normalized periodic eigenfamilies.
    Solve(RunArgs),
    /// Eigensolve the dense period matrix.
    Oracle(RunArgs),
    /// Measure the decay of a mean-zero perturbation.
    Converge(RunArgs),
    /// Build every certificate.
    Certify(RunArgs),
    /// Run `certify` once per value of one numeric config field.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long, default_value = "floquet-out")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Time step; `T/dt` is rounded to the nearest integer.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Cells per dimension of the truncated box.
    #[arg(long)]
    pub cells: Option<usize>,
    #[arg(long)]
    pub require_hypotheses: bool,
    #[arg(long)]
    pub svg: bool,
    /// Replace an existing output directory.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dotted path of the field, e.g. `params.beta`; a bare name refers to `params`.
    #[arg(long)]
    pub param: String,
    /// Comma-separated values.
    #[arg(long, allow_hyphen_values = true, default_value = "")]
    pub values: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Check,
    Solve,
    Oracle,
    Converge,
    Certify,
}

impl Task {
    pub fn as_str(&self) -> &'static str {
        match self {
            Task::Check => "check",
            Task::Solve => "solve",
            Task::Oracle => "oracle",
            Task::Converge => "converge",
            Task::Certify => "certify",
        }
    }
}

/// Numerical settings of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSettings {
    pub seed: u64,
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Random fields per empirical certificate check.
    pub samples: usize,
    /// Periods in the convergence study.
    pub periods: usize,
    pub time_samples: usize,
    pub local_points: usize,
    /// Also test the strong positivity hypothesis.
    pub strong_positivity: bool,
    /// Largest number of periods tried by the splitting diagnostic.
    pub splitting_periods: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        let plan = SamplingPlan::default();
        Self {
            seed: 0,
            tolerance: DEFAULT_TOL,
            max_iterations: DEFAULT_MAX_ITER,
            samples: crate::harris::DEFAULT_SAMPLES,
            periods: 10,
            time_samples: plan.time_samples,
            local_points: plan.local_points,
            strong_positivity: true,
            splitting_periods: 10,
        }
    }
}

/// Contents of a `--config` file: the model description plus optional `propagator` and
/// `run` sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFile {
    #[serde(flatten)]
    pub model: ModelConfig,
    #[serde(default)]
    pub propagator: PropagatorConfig,
    #[serde(default)]
    pub run: RunSettings,
}

impl RunFile {
    pub fn plan(&self) -> SamplingPlan {
        SamplingPlan {
            time_samples: self.run.time_samples,
            local_points: self.run.local_points,
            seed: self.run.seed,
        }
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("serializable config")))
    }

    fn validate(&self) -> Result<(CoefficientModel, TruncatedBox), String> {
        let model = build_model(&self.model).map_err(|e| e.to_string())?;
        let grid = self.model.truncated_box().map_err(|e| e.to_string())?;
        self.propagator.validate().map_err(|e| e.to_string())?;
        let r = &self.run;
        if !(r.tolerance > 0.0) || r.max_iterations == 0 || r.time_samples == 0 || r.local_points == 0 {
            return Err("run: tolerance, max_iterations, time_samples and local_points must be positive".into());
        }
        Ok((model, grid))
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub file: RunFile,
    pub task: Task,
    pub out: PathBuf,
    pub force: bool,
    pub require_hypotheses: bool,
    pub svg: bool,
}

/// Parses a config document and applies the command-line overrides.
pub fn load_run_file(raw: Value, args: &RunArgs) -> Result<RunFile, String> {
    let mut file: RunFile = serde_json::from_value(raw).map_err(|e| format!("config: {e}"))?;
    if let Some(seed) = args.seed {
        file.run.seed = seed;
    }
    if let Some(cells) = args.cells {
        file.model.box_.cells_per_dim = cells;
    }
    if let Some(dt) = args.dt {
        if !(dt > 0.0 && dt <= file.model.period) {
            return Err(format!("--dt must lie in (0, T], got {dt}"));
        }
        file.propagator.steps_per_period = (file.model.period / dt).round() as usize;
    }
    file.validate()?;
    Ok(file)
}

fn read_json(path: &Path) -> Result<Value, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Sets the numeric field at a dotted path.
pub fn set_path(doc: &mut Value, path: &str, value: f64) -> Result<(), String> {
    let full = if path.contains('.') { path.to_string() } else { format!("params.{path}") };
    let mut node = doc;
    let parts: Vec<&str> = full.split('.').collect();
    for part in &parts[..parts.len() - 1] {
        node = node.get_mut(*part).ok_or_else(|| format!("no field `{part}` on the path `{full}`"))?;
    }
    let last = parts[parts.len() - 1];
    let slot = node
        .as_object_mut()
        .ok_or_else(|| format!("`{full}` does not address an object field"))?
        .get_mut(last)
        .ok_or_else(|| format!("no field `{full}` in the config"))?;
    if !slot.is_number() {
        return Err(format!("`{full}` is not numeric"));
    }
    *slot = if value.fract() == 0.0 && value.abs() < 9.0e15 {
        Value::from(value as i64)
    } else {
        serde_json::Number::from_f64(value).map(Value::Number).ok_or_else(|| format!("value {value} is not finite"))?
    };
    Ok(())
}

/// Entry point used by the binary.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let (task, args) = match cli.command {
        Command::Check(a) => (Task::Check, a),
        Command::Solve(a) => (Task::Solve, a),
        Command::Oracle(a) => (Task::Oracle, a),
        Command::Converge(a) => (Task::Converge, a),
        Command::Certify(a) => (Task::Certify, a),
        Command::Sweep(s) => return sweep_command(&s),
    };
    if let Err(e) = check_out(&args.out, args.force) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let file = read_json(&args.config).and_then(|raw| load_run_file(raw, &args));
    let file = match file {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            let mut report = Report::new(task.as_str(), Value::Null, String::new(), args.seed.unwrap_or(0));
            report.exit_code = EXIT_CONFIG;
            report.error = Some(e);
            let _ = publish(&args.out, args.force, |dir| write_report(dir, &report));
            return EXIT_CONFIG;
        }
    };
    let config = RunConfig {
        file,
        task,
        out: args.out.clone(),
        force: args.force,
        require_hypotheses: args.require_hypotheses,
        svg: args.svg,
    };
    run(&config)
}

fn check_out(out: &Path, force: bool) -> Result<(), String> {
    if out.exists() && !force {
        return Err(format!("{} exists; pass --force to replace it", out.display()));
    }
    Ok(())
}

/// Fills a fresh sibling directory and renames it onto `out`.
fn publish<F: FnOnce(&Path) -> std::io::Result<()>>(out: &Path, force: bool, fill: F) -> std::io::Result<()> {
    let parent = match out.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&parent)?;
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "out".into());
    let tmp = parent.join(format!(".{name}.tmp-{}", std::process::id()));
    if tmp.exists() {
        fs::remove_dir_all(&tmp)?;
    }
    fs::create_dir(&tmp)?;
    if let Err(e) = fill(&tmp) {
        let _ = fs::remove_dir_all(&tmp);
        return Err(e);
    }
    if out.exists() {
        if !force {
            let _ = fs::remove_dir_all(&tmp);
            return Err(std::io::Error::new(std::io::ErrorKind::AlreadyExists, format!("{} exists", out.display())));
        }
        fs::remove_dir_all(out)?;
    }
    fs::rename(&tmp, out)
}

fn write_report(dir: &Path, report: &Report) -> std::io::Result<()> {
    let mut text = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    text.push('\n');
    fs::write(dir.join("report.json"), text)
}

/// Runs one task and publishes its output directory; returns the exit code.
pub fn run(config: &RunConfig) -> i32 {
    if let Err(e) = check_out(&config.out, config.force) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let mut code = EXIT_OK;
    let published = publish(&config.out, config.force, |dir| {
        let report = execute(config, dir)?;
        code = report.exit_code;
        if let Some(e) = &report.error {
            eprintln!("error: {e}");
        }
        Ok(())
    });
    match published {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: writing {}: {e}", config.out.display());
            EXIT_NUMERICAL.max(code)
        }
    }
}

struct Failure {
    code: i32,
    message: String,
}

impl From<SpectralError> for Failure {
    fn from(e: SpectralError) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: e.to_string(),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure {
            code: EXIT_NUMERICAL,
            message: format!("i/o: {e}"),
        }
    }
}

/// Runs the pipeline into `dir` and writes `report.json` there.
pub fn execute(config: &RunConfig, dir: &Path) -> std::io::Result<Report> {
    let file = &config.file;
    let mut report = Report::new(
        config.task.as_str(),
        serde_json::to_value(file).map_err(std::io::Error::other)?,
        file.hash(),
        file.run.seed,
    );
    if let Err(f) = pipeline(config, dir, &mut report) {
        report.exit_code = f.code;
        report.error = Some(f.message);
    }
    write_report(dir, &report)?;
    Ok(report)
}

fn timed<T>(report: &mut Report, phase: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    report.timings.insert(phase.into(), start.elapsed().as_secs_f64());
    out
}

fn pipeline(config: &RunConfig, dir: &Path, report: &mut Report) -> Result<(), Failure> {
    let file = &config.file;
    let task = config.task;
    let (model, grid) = file.validate().map_err(|message| Failure {
        code: EXIT_CONFIG,
        message,
    })?;
    let plan = file.plan();
    let constants = timed(report, "constants", || derived_constants(&model, &grid, &plan));
    let hypotheses = timed(report, "hypotheses", || {
        check_hypotheses(&model, &constants, &grid, &plan, file.run.strong_positivity)
    });
    let hard: Vec<String> = hypotheses.hard_failures().iter().map(|v| v.name.clone()).collect();
    report.constants = Some(constants.clone());
    report.hypotheses = Some(hypotheses);
    if config.require_hypotheses && !hard.is_empty() {
        return Err(Failure {
            code: EXIT_HYPOTHESES,
            message: format!("hard hypothesis failure: {}", hard.join(", ")),
        });
    }
    if task == Task::Check {
        return Ok(());
    }
    if task == Task::Oracle && grid.len() > DENSE_ORACLE_LIMIT {
        return Err(SpectralError::SizeGuard {
            nodes: grid.len(),
            limit: DENSE_ORACLE_LIMIT,
        }
        .into());
    }

    let s = timed(report, "assemble", || PeriodOperator::new(&model, &grid, &file.propagator))
        .map_err(SpectralError::from)?;
    let sol = timed(report, "solve", || solve(&s, file.run.tolerance, file.run.max_iterations))?;
    report.lambda_f = Some(sol.lambda_f);
    report.big_lambda0 = Some(sol.big_lambda0);
    write_fields(dir, &grid, &sol)?;
    if config.svg {
        fs::write(dir.join("fields.svg"), fields_svg(&grid, &sol))?;
    }
    if file.propagator.steps_per_period % 2 == 0 {
        let r = timed(report, "richardson", || {
            richardson_lambda(&model, &grid, &file.propagator, file.run.tolerance, file.run.max_iterations)
        })?;
        report.lambda_f_extrapolated = Some(r.extrapolated);
        report.richardson = Some(r);
    }

    let oracle = match task {
        Task::Oracle => Some(timed(report, "oracle", || dense_oracle(&s))?),
        Task::Certify if grid.len() <= CERTIFY_ORACLE_LIMIT => Some(timed(report, "oracle", || dense_oracle(&s))?),
        _ => None,
    };
    if let Some(o) = &oracle {
        report.oracle = Some(OracleSummary::new(grid.len(), o, Some(sol.big_lambda0)));
    }

    if matches!(task, Task::Converge | Task::Certify) {
        let bump = GridField::from_fn(grid, 0.0, |x| {
            let c = 0.25 * grid.half_width;
            (-norm([x[0] - c, x[1]]).powi(2)).exp()
        });
        let f_test = orthogonal_test_field(&sol, &bump);
        let conv = timed(report, "converge", || convergence_rate(&s, &sol, &f_test, file.run.periods))?;
        write_decay_csv(BufWriter::new(fs::File::create(dir.join("decay.csv"))?), &conv)?;
        if config.svg {
            let pts: Vec<(f64, f64)> = conv.curve.iter().map(|&(n, e)| (n as f64, e)).collect();
            fs::write(dir.join("decay.svg"), line_plot("perturbation decay", "periods", &[("e_n", pts)], true))?;
        }
        report.rho_hat = Some(conv.rho_hat);
        report.c_hat = Some(conv.c_hat);
        report.convergence = Some(conv);
    }

    if task == Task::Certify {
        let observed = report.convergence.as_ref().map(|c| c.zeta_observed);
        let oracle_gap = report.oracle.as_ref().map(|o| o.gap_ratio);
        let certs = timed(report, "certify", || {
            certify(file, &model, &constants, &s, &sol, (observed, oracle_gap), &plan)
        })?;
        report.certificates = Some(certs);
    }
    Ok(())
}

fn numerical(e: HarrisError) -> Result<String, Failure> {
    match e {
        HarrisError::Spectral(_) | HarrisError::Semiflow(_) | HarrisError::Flow(_) => Err(Failure {
            code: EXIT_NUMERICAL,
            message: e.to_string(),
        }),
        other => Ok(other.to_string()),
    }
}

fn certify(
    file: &RunFile,
    model: &CoefficientModel,
    constants: &crate::model::ModelConstants,
    s: &PeriodOperator,
    sol: &EigenSolution,
    (zeta_observed, zeta_oracle): (Option<f64>, Option<f64>),
    plan: &SamplingPlan,
) -> Result<Certificates, Failure> {
    let mut certs = Certificates::default();
    let (samples, seed) = (file.run.samples, file.run.seed);
    let period = s.period();

    match sub_eigen_certificate(model, constants, s, plan) {
        Ok(c) => {
            let lower = c.log_kappa0 / period;
            let upper = constants.q_hat + constants.a_sup;
            certs.bracket = Some(LambdaBracket {
                lower,
                upper,
                holds: lower <= sol.lambda_f && sol.lambda_f <= upper,
            });
            certs.sub_eigen = Some(c);
        }
        Err(e) => {
            certs.unavailable.insert("sub_eigen".into(), numerical(e)?);
        }
    }

    let lyapunov = match lyapunov_pair(constants, sol, s, samples, seed) {
        Ok(l) => Some(l),
        Err(e) => {
            certs.unavailable.insert("lyapunov".into(), numerical(e)?);
            None
        }
    };
    if let Some(l) = &lyapunov {
        match harris_certificate(model, constants, sol, s, l, samples, seed.wrapping_add(1)) {
            Ok(mut h) => {
                h.zeta_observed = zeta_observed;
                h.zeta_oracle = zeta_oracle;
                certs.harris = Some(h);
            }
            Err(e) => {
                certs.unavailable.insert("harris".into(), numerical(e)?);
            }
        }
        let grid = s.grid();
        let big_r = l.radius.min(grid.max_node_radius());
        match minorization(model, constants, s.propagator(), constants.r0, big_r, 0.0, period, plan) {
            Ok(m) => certs.minorization = Some(m),
            Err(e) => {
                certs.unavailable.insert("minorization".into(), numerical(e)?);
            }
        }
    }
    certs.lyapunov = lyapunov;

    match &certs.sub_eigen {
        Some(c) => match splitting_diagnostic(model, constants, s.propagator(), c.log_kappa0, file.run.splitting_periods) {
            Ok(d) => certs.splitting = Some(d),
            Err(e) => {
                certs.unavailable.insert("splitting".into(), numerical(e)?);
            }
        },
        None => {
            certs.unavailable.insert("splitting".into(), "needs the sub-eigen certificate".into());
        }
    }
    Ok(certs)
}

/// Sample indices at `0, T/4, T/2, 3T/4`.
fn quarter_indices(sol: &EigenSolution) -> Vec<(usize, &'static str)> {
    let m = sol.steps_per_period;
    vec![(0, "0"), (m / 4, "T/4"), (m / 2, "T/2"), (3 * m / 4, "3T/4")]
}

fn write_fields(dir: &Path, grid: &TruncatedBox, sol: &EigenSolution) -> std::io::Result<()> {
    let q = quarter_indices(sol);
    let mut names = Vec::new();
    let mut cols: Vec<&[f64]> = Vec::new();
    for &(i, label) in &q {
        names.push(format!("f_{label}"));
        cols.push(&sol.f_samples[i].values);
    }
    for &(i, label) in &q {
        names.push(format!("phi_{label}"));
        cols.push(&sol.phi_samples[i].values);
    }
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    write_fields_csv(BufWriter::new(fs::File::create(dir.join("fields.csv"))?), grid, &names, &cols)
}

/// `f_t` and `φ_t` at quarter periods; the `x2 ≈ 0` row in two dimensions.
fn fields_svg(grid: &TruncatedBox, sol: &EigenSolution) -> String {
    let idx: Vec<usize> = if grid.dimension == 1 {
        (0..grid.len()).collect()
    } else {
        let mid = grid.cells_per_dim / 2;
        (0..grid.len()).filter(|&i| grid.multi_index(i)[1] == mid).collect()
    };
    let mut series = Vec::new();
    for (i, label) in quarter_indices(sol) {
        let f = &sol.f_samples[i];
        let phi = &sol.phi_samples[i];
        series.push((format!("f at {label}"), idx.iter().map(|&k| (grid.node(k)[0], f.values[k])).collect::<Vec<_>>()));
        series.push((format!("phi at {label}"), idx.iter().map(|&k| (grid.node(k)[0], phi.values[k])).collect()));
    }
    let refs: Vec<(&str, Vec<(f64, f64)>)> = series.iter().map(|(n, p)| (n.as_str(), p.clone())).collect();
    line_plot("periodic eigenfamilies", "x", &refs, false)
}

fn parse_values(text: &str) -> Result<Vec<f64>, String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|e| format!("bad sweep value `{s}`: {e}")))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    value: f64,
    exit_code: i32,
    lambda_f: Option<f64>,
    rho_hat: Option<f64>,
    zeta_constructive: Option<f64>,
    zeta_observed: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
struct SweepReport {
    task: &'static str,
    param: String,
    config_hash: String,
    exit_code: i32,
    error: Option<String>,
    runs: Vec<SweepRow>,
}

fn sweep_command(args: &SweepArgs) -> i32 {
    let values = match parse_values(&args.values) {
        Ok(v) if !v.is_empty() => v,
        Ok(_) => {
            eprintln!("error: sweep needs at least one value");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let raw = match read_json(&args.run.config) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    sweep(&raw, &args.run, &args.param, &values)
}

/// One `certify` sub-run per value, in parallel, each in its own subdirectory; the exit
/// code is the largest sub-run code.
pub fn sweep(raw: &Value, args: &RunArgs, param: &str, values: &[f64]) -> i32 {
    if values.is_empty() {
        eprintln!("error: sweep needs at least one value");
        return EXIT_CONFIG;
    }
    if let Err(e) = check_out(&args.out, args.force) {
        eprintln!("error: {e}");
        return EXIT_CONFIG;
    }
    let mut files = Vec::new();
    for &v in values {
        let mut doc = raw.clone();
        let file = set_path(&mut doc, param, v).and_then(|()| load_run_file(doc, args));
        files.push(file);
    }
    let base_hash = serde_json::to_vec(raw).map(|b| hex::encode(Sha256::digest(b))).unwrap_or_default();

    let mut code = EXIT_OK;
    let published = publish(&args.out, args.force, |dir| {
        let rows: Vec<std::io::Result<SweepRow>> = std::thread::scope(|scope| {
            let handles: Vec<_> = files
                .iter()
                .zip(values)
                .enumerate()
                .map(|(k, (file, &value))| {
                    let sub = dir.join(format!("run_{k:03}"));
                    scope.spawn(move || -> std::io::Result<SweepRow> {
                        fs::create_dir(&sub)?;
                        let report = match file {
                            Ok(file) => {
                                let cfg = RunConfig {
                                    file: file.clone(),
                                    task: Task::Certify,
                                    out: sub.clone(),
                                    force: false,
                                    require_hypotheses: args.require_hypotheses,
                                    svg: args.svg,
                                };
                                execute(&cfg, &sub)?
                            }
                            Err(e) => {
                                let mut r = Report::new("certify", Value::Null, String::new(), args.seed.unwrap_or(0));
                                r.exit_code = EXIT_CONFIG;
                                r.error = Some(e.clone());
                                write_report(&sub, &r)?;
                                r
                            }
                        };
                        let harris = report.certificates.as_ref().and_then(|c| c.harris.as_ref());
                        Ok(SweepRow {
                            value,
                            exit_code: report.exit_code,
                            lambda_f: report.lambda_f,
                            rho_hat: report.rho_hat,
                            zeta_constructive: harris.map(|h| h.zeta_constructive),
                            zeta_observed: report.convergence.as_ref().map(|c| c.zeta_observed),
                        })
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("sweep worker panicked")).collect()
        });
        let rows: Vec<SweepRow> = rows.into_iter().collect::<std::io::Result<_>>()?;
        code = rows.iter().map(|r| r.exit_code).max().unwrap_or(EXIT_OK);
        write_sweep_csv(dir, &rows)?;
        let summary = SweepReport {
            task: "sweep",
            param: param.to_string(),
            config_hash: base_hash,
            exit_code: code,
            error: None,
            runs: rows,
        };
        let mut text = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
        text.push('\n');
        fs::write(dir.join("report.json"), text)
    });
    match published {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: writing {}: {e}", args.out.display());
            EXIT_NUMERICAL.max(code)
        }
    }
}

fn write_sweep_csv(dir: &Path, rows: &[SweepRow]) -> std::io::Result<()> {
    let cell = |v: Option<f64>| v.map(|x| format!("{x:e}")).unwrap_or_default();
    let mut text = String::from("value,lambda_f,rho_hat,zeta_constructive,zeta_observed\n");
    for r in rows {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            r.value,
            cell(r.lambda_f),
            cell(r.rho_hat),
            cell(r.zeta_constructive),
            cell(r.zeta_observed)
        ));
    }
    fs::write(dir.join("sweep.csv"), text)
}
