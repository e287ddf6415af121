//! Config-driven experiment commands. Each command returns an [`Outcome`]
//! holding the JSON report, an optional CSV table, a human summary and any
//! extra files; nothing is written until [`Outcome::write`].
//!
//! Reports embed the resolved config and its hash and carry no timestamps
//! or worker counts, so identical `(config, seed)` give identical bytes.

use crate::config::{hex, ConfigError, ExperimentConfig, SCHEMA_VERSION};
use crate::ensemble::map_indexed;
use crate::functional::ScalarField;
use crate::ito::{
    verify_thm1, verify_thm3, verify_thm4, verify_thm4_invertible, Formula, ItoError, ItoResidualReport, Verdict,
};
use crate::levy::{path_seed, simulate, LevyModel, SimGrid, SimulatedLevyPath};
use crate::localtime::{
    derivative_identity_integral, forward_backward_integral, local_time_surface, simple_integral,
    LocalTimeIntegralEstimate, Method, SimpleFunctional,
};
use crate::paths::CadlagPath;
use crate::stats::ols_slope;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Agreement factor for pairwise local-time oracle checks (× combined SE).
pub const AGREEMENT_FACTOR: f64 = 3.0;
/// Relative slack on the closed form `-T` for `F(s, w, x) = x`.
pub const CLOSED_FORM_SLACK: f64 = 0.05;
const SURFACE_CELLS: usize = 1000;
const SURFACE_BANDWIDTH: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Simulate,
    Verify,
    Convergence,
    LocaltimeCheck,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Convergence => "convergence",
            Command::LocaltimeCheck => "localtime-check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("hypothesis violation: {0}")]
    Hypothesis(String),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

impl RunError {
    /// `2` for hypothesis violations, `3` for config and output errors.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Hypothesis(_) => 2,
            RunError::Config(_) | RunError::Io { .. } => 3,
        }
    }
}

fn invalid(message: impl Into<String>) -> RunError {
    RunError::Config(ConfigError::Invalid { line: 1, message: message.into() })
}

impl From<ItoError> for RunError {
    fn from(e: ItoError) -> Self {
        match e {
            ItoError::Hypothesis(m) => RunError::Hypothesis(m),
            other => invalid(other.to_string()),
        }
    }
}

/// One file produced by a command, relative to the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub command: Command,
    pub passed: bool,
    pub summary: String,
    /// Pretty-printed JSON report.
    pub report: String,
    pub csv: Option<String>,
    pub files: Vec<OutputFile>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }

    /// Writes the report (`report.json`, or the CSV table as
    /// `<command>.csv` when `format` is CSV) and every extra file. For
    /// `simulate` the report is the manifest and is written once.
    pub fn write(&self, dir: &Path, format: Format) -> Result<Vec<PathBuf>, RunError> {
        let io = |p: &Path, e: std::io::Error| RunError::Io { path: p.display().to_string(), message: e.to_string() };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        let mut written = Vec::new();
        let main = match (format, &self.csv) {
            (Format::Csv, Some(csv)) => (format!("{}.csv", self.command.name()), csv.as_bytes()),
            _ => ("report.json".to_string(), self.report.as_bytes()),
        };
        let main = (self.command != Command::Simulate).then_some(main);
        for (name, bytes) in main.into_iter().chain(self.files.iter().map(|f| (f.name.clone(), f.bytes.as_slice()))) {
            let path = dir.join(name);
            std::fs::write(&path, bytes).map_err(|e| io(&path, e))?;
            written.push(path);
        }
        Ok(written)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    command: Command,
    config_hash: String,
    config: &'a ExperimentConfig,
    passed: bool,
    result: T,
}

fn envelope<T: Serialize>(cfg: &ExperimentConfig, command: Command, passed: bool, result: T) -> String {
    let e = Envelope { schema_version: SCHEMA_VERSION, command, config_hash: cfg.hash(), config: cfg, passed, result };
    let mut s = serde_json::to_string_pretty(&e).expect("report serialises");
    s.push('\n');
    s
}

fn model_of(cfg: &ExperimentConfig) -> Result<LevyModel, RunError> {
    cfg.model().map_err(invalid)
}

fn grid_of(cfg: &ExperimentConfig, steps: usize) -> SimGrid {
    SimGrid { horizon: cfg.run.horizon, steps }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathEntry {
    pub index: usize,
    pub file: String,
    pub seed: u64,
    pub jumps: usize,
    pub sha256: String,
}

/// Simulates `M` paths of `X` and writes `path_NNNNN.csv` plus a manifest.
pub fn cmd_simulate(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    cfg.validate(true)?;
    let model = model_of(cfg)?;
    let grid = grid_of(cfg, cfg.run.steps);
    let paths = map_indexed(workers, cfg.run.paths, |i| {
        let seed = path_seed(cfg.run.seed, i);
        simulate(&model, grid, seed).map(|p| (seed, p.jumps.len(), p.x.to_csv_string()))
    });
    let mut files = Vec::with_capacity(paths.len());
    let mut entries = Vec::with_capacity(paths.len());
    for (index, r) in paths.into_iter().enumerate() {
        let (seed, jumps, csv) = r.map_err(|e| invalid(e.to_string()))?;
        let file = format!("path_{index:05}.csv");
        entries.push(PathEntry { index, file: file.clone(), seed, jumps, sha256: hex(&Sha256::digest(csv.as_bytes())) });
        files.push(OutputFile { name: file, bytes: csv.into_bytes() });
    }
    let mut summary = format!(
        "simulated {} paths, K = {}, T = {}, d = {}\n",
        entries.len(),
        cfg.run.steps,
        cfg.run.horizon,
        model.dim()
    );
    let jumps: usize = entries.iter().map(|e| e.jumps).sum();
    let _ = writeln!(summary, "total jumps: {jumps}");
    #[derive(Serialize)]
    struct Manifest<'a> {
        steps: usize,
        horizon: f64,
        seed: u64,
        paths: &'a [PathEntry],
    }
    let manifest = envelope(
        cfg,
        Command::Simulate,
        true,
        Manifest { steps: cfg.run.steps, horizon: cfg.run.horizon, seed: cfg.run.seed, paths: &entries },
    );
    files.push(OutputFile { name: "manifest.json".into(), bytes: manifest.clone().into_bytes() });
    Ok(Outcome { command: Command::Simulate, passed: true, summary, report: manifest, csv: None, files })
}

fn terminal_field(cfg: &ExperimentConfig, dim: usize) -> Result<ScalarField, RunError> {
    cfg.field(dim).map_err(|e| {
        invalid(format!("functional {:?} is not a function of the terminal value: {e}", cfg.functional.name))
    })
}

fn run_verifier(
    cfg: &ExperimentConfig,
    model: &LevyModel,
    steps: usize,
    t: f64,
    workers: usize,
) -> Result<ItoResidualReport, RunError> {
    let formula = cfg.verifier.ok_or_else(|| invalid("verifier tag is required (thm1, thm3, thm4, thm4_invertible)"))?;
    let s = cfg.settings(steps, t, workers);
    let r = match formula {
        Formula::Thm3 => verify_thm3(&terminal_field(cfg, model.dim())?, model, &s)?,
        other => {
            let f = cfg.functional_handle(model.dim()).map_err(|e| invalid(e.to_string()))?;
            match other {
                Formula::Thm1 => verify_thm1(&f, model, &s)?,
                Formula::Thm4 => verify_thm4(&f, model, &s)?,
                _ => verify_thm4_invertible(&f, model, &s)?,
            }
        }
    };
    Ok(r)
}

fn summary_table(r: &ItoResidualReport) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {}  t = {}  K = {}  M = {}  seed = {}",
        formula_tag(r.formula),
        r.functional,
        r.t,
        r.k,
        r.m,
        r.seed
    );
    let _ = writeln!(s, "  {:<24} {:>14} {:>11}  verdict", "term", "mean", "se");
    let _ = writeln!(s, "  {:<24} {:>14.6e} {:>11.3e}", "lhs", r.lhs_mean, r.lhs_se);
    for t in &r.terms {
        let _ = writeln!(s, "  {:<24} {:>14.6e} {:>11.3e}  {}", t.term.name(), t.mean, t.std_error, t.verdict.label());
    }
    let _ = writeln!(s, "  {:<24} {:>14.6e} {:>11.3e}  {}", "residual", r.residual_mean, r.residual_se, r.verdict.label());
    let _ = writeln!(s, "  residual rms {:.3e}", r.residual_rms);
    if let Some(dc) = r.drift_condition {
        let _ = writeln!(s, "  drift condition {:.6e}", dc.value);
    }
    for a in &r.assertions {
        let _ = writeln!(s, "  [{}] {}: {}", if a.passed { "PASS" } else { "FAIL" }, a.name, a.detail);
    }
    s
}

fn formula_tag(f: Formula) -> &'static str {
    match f {
        Formula::Thm1 => "thm1",
        Formula::Thm3 => "thm3",
        Formula::Thm4 => "thm4",
        Formula::Thm4Invertible => "thm4_invertible",
    }
}

/// Runs the tagged verifier at every evaluation time.
pub fn cmd_verify(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    cfg.validate(false)?;
    let model = model_of(cfg)?;
    let reports = cfg
        .eval_times()
        .into_iter()
        .map(|t| run_verifier(cfg, &model, cfg.run.steps, t, workers))
        .collect::<Result<Vec<_>, _>>()?;
    let passed = reports.iter().all(ItoResidualReport::passed);
    let summary = reports.iter().map(summary_table).collect::<Vec<_>>().join("\n");
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["t", "term", "mean", "std_error", "rms", "verdict"]).expect("in-memory csv");
    for r in &reports {
        let t = format!("{:?}", r.t);
        w.write_record([t.as_str(), "lhs", &format!("{:?}", r.lhs_mean), &format!("{:?}", r.lhs_se), "", ""])
            .expect("in-memory csv");
        for s in &r.terms {
            w.write_record([
                t.as_str(),
                s.term.name(),
                &format!("{:?}", s.mean),
                &format!("{:?}", s.std_error),
                &format!("{:?}", s.rms),
                s.verdict.label(),
            ])
            .expect("in-memory csv");
        }
        w.write_record([
            t.as_str(),
            "residual",
            &format!("{:?}", r.residual_mean),
            &format!("{:?}", r.residual_se),
            &format!("{:?}", r.residual_rms),
            r.verdict.label(),
        ])
        .expect("in-memory csv");
    }
    let csv = String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8");
    let report = envelope(cfg, Command::Verify, passed, &reports);
    Ok(Outcome { command: Command::Verify, passed, summary, report, csv: Some(csv), files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergencePoint {
    #[serde(rename = "K")]
    pub k: usize,
    pub residual_rms: f64,
    pub se: f64,
    pub residual_mean: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceFit {
    pub points: Vec<ConvergencePoint>,
    /// `None` when the fit is degenerate.
    pub slope: Option<f64>,
    pub slope_se: Option<f64>,
    /// Every residual is round-off, so there is nothing to fit.
    pub degenerate: bool,
    pub expected_slope: Option<[f64; 2]>,
}

/// Least-squares slope of `log residual_rms` against `log K`. Reported as
/// degenerate when every residual is round-off (or exactly zero).
pub fn fit_convergence(points: Vec<ConvergencePoint>, expected_slope: Option<[f64; 2]>) -> ConvergenceFit {
    let degenerate = points.iter().all(|p| p.verdict == Verdict::Exact) || points.iter().any(|p| !(p.residual_rms > 0.0));
    let (slope, slope_se) = if degenerate {
        (None, None)
    } else {
        let x: Vec<f64> = points.iter().map(|p| (p.k as f64).ln()).collect();
        let y: Vec<f64> = points.iter().map(|p| p.residual_rms.ln()).collect();
        match ols_slope(&x, &y) {
            Some((b, se)) => (Some(b), Some(se)),
            None => (None, None),
        }
    };
    ConvergenceFit { points, slope, slope_se, degenerate, expected_slope }
}

impl ConvergenceFit {
    /// True without an expected range; otherwise the slope must be in range.
    pub fn passed(&self) -> bool {
        match (self.expected_slope, self.slope) {
            (None, _) => true,
            (Some([lo, hi]), Some(b)) => (lo..=hi).contains(&b),
            (Some(_), None) => false,
        }
    }

    pub fn slope_label(&self) -> String {
        match (self.slope, self.slope_se) {
            (Some(b), Some(se)) => format!("{b:.4} ± {se:.4}"),
            _ => "degenerate".into(),
        }
    }
}

/// Reruns the verifier over `run.convergence_steps` (at least three values).
pub fn cmd_convergence(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    cfg.validate(false)?;
    let ks = &cfg.run.convergence_steps;
    if ks.len() < 3 {
        return Err(invalid(format!("convergence needs at least 3 values in run.convergence_steps, got {}", ks.len())));
    }
    let model = model_of(cfg)?;
    let t = *cfg.eval_times().last().expect("at least one time");
    let mut points = Vec::with_capacity(ks.len());
    for &k in ks {
        let r = run_verifier(cfg, &model, k, t, workers)?;
        points.push(ConvergencePoint {
            k,
            residual_rms: r.residual_rms,
            se: r.residual_se,
            residual_mean: r.residual_mean,
            verdict: r.verdict,
        });
    }
    let fit = fit_convergence(points, cfg.run.expected_slope);
    let passed = fit.passed();
    let mut csv = String::from("K,residual_rms,se\n");
    let mut summary = String::from("       K   residual_rms           se\n");
    for p in &fit.points {
        let _ = writeln!(csv, "{},{:?},{:?}", p.k, p.residual_rms, p.se);
        let _ = writeln!(summary, "{:>8} {:>14.6e} {:>12.4e}", p.k, p.residual_rms, p.se);
    }
    let _ = writeln!(summary, "log-log slope: {}", fit.slope_label());
    if let Some([lo, hi]) = fit.expected_slope {
        let _ = writeln!(summary, "[{}] slope in [{lo}, {hi}]", if passed { "PASS" } else { "FAIL" });
    }
    let report = envelope(cfg, Command::Convergence, passed, &fit);
    Ok(Outcome { command: Command::Convergence, passed, summary, report, csv: Some(csv), files: Vec::new() })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalTimeCheck {
    pub t: f64,
    pub estimates: Vec<LocalTimeIntegralEstimate>,
    pub checks: Vec<OracleCheck>,
}

fn space_grid(paths: &[SimulatedLevyPath]) -> Vec<f64> {
    let reach = paths.iter().flat_map(|p| p.brownian.values().iter()).fold(0.0_f64, |m, v| m.max(v.abs()));
    let half = (1.1 * reach).max(5.0);
    (0..=SURFACE_CELLS).map(|i| -half + 2.0 * half * i as f64 / SURFACE_CELLS as f64).collect()
}

/// Forward/backward, derivative-identity and simple-functional (Tanaka
/// surface) estimates of `∫∫ f(x) dL` for a 1-d Brownian config.
pub fn cmd_localtime_check(cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    cfg.validate(false)?;
    let model = model_of(cfg)?;
    if model.dim() != 1 {
        return Err(RunError::Hypothesis(format!(
            "localtime-check needs a 1-d model for the surface oracle, got d = {}",
            model.dim()
        )));
    }
    if model.has_jumps() || model.rank() != 1 {
        return Err(RunError::Hypothesis("localtime-check needs a Brownian model (nu = 0, Sigma > 0)".into()));
    }
    let f = terminal_field(cfg, 1)?;
    let grid = grid_of(cfg, cfg.run.steps);
    let paths = map_indexed(workers, cfg.run.paths, |i| simulate(&model, grid, path_seed(cfg.run.seed, i)))
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| invalid(e.to_string()))?;
    let pairs: Vec<(&CadlagPath, &CadlagPath)> = paths.iter().map(|p| (&p.jump_part, &p.brownian)).collect();
    let xs = space_grid(&paths);
    let constant = f.name() == "constant";
    let identity = f.name() == "identity";
    let lt = |e: crate::localtime::LocalTimeError| invalid(e.to_string());

    let mut blocks = Vec::new();
    for t in cfg.eval_times() {
        let seed = Some(cfg.run.seed);
        let fb = forward_backward_integral(|_, _, x| f.eval(x), &pairs, 0, t, seed).map_err(lt)?;
        let di = derivative_identity_integral(|_, _, x| f.partial(0, x), &pairs, 0, t, seed).map_err(lt)?;
        let coefficients: Vec<f64> = xs.windows(2).map(|w| f.eval(&[0.5 * (w[0] + w[1])])).collect();
        let simple_f = SimpleFunctional { times: vec![0.0, t], xs: xs.clone(), coefficients };
        let simple = map_indexed(workers, paths.len(), |i| {
            let s = local_time_surface(&paths[i].brownian, 0, &xs, SURFACE_BANDWIDTH)?;
            simple_integral(&simple_f, &s, t)
        })
        .into_iter()
        .collect::<Result<Vec<_>, _>>()
        .map_err(lt)?;
        let simple = LocalTimeIntegralEstimate::from_samples(Method::SimpleFormula, &simple, fb.k, seed);

        let mut checks = Vec::new();
        let named = [("forward_backward", &fb), ("derivative_identity", &di), ("simple_formula", &simple)];
        for (i, (na, a)) in named.iter().enumerate() {
            for (nb, b) in &named[i + 1..] {
                let gap = (a.value - b.value).abs();
                let tol = AGREEMENT_FACTOR * a.std_error.hypot(b.std_error);
                checks.push(OracleCheck {
                    name: format!("{na}~{nb}"),
                    passed: gap <= tol || gap <= 1e-12,
                    detail: format!("|{:.6e} - {:.6e}| = {gap:.3e}, tolerance {tol:.3e}", a.value, b.value),
                });
            }
        }
        if constant {
            checks.push(OracleCheck {
                name: "forward_backward_exact_zero".into(),
                passed: fb.value == 0.0 && fb.std_error == 0.0,
                detail: format!("mean {:e}, se {:e}", fb.value, fb.std_error),
            });
        }
        if identity {
            for (n, e) in named {
                let gap = (e.value + t).abs();
                let tol = AGREEMENT_FACTOR * e.std_error + CLOSED_FORM_SLACK * t;
                checks.push(OracleCheck {
                    name: format!("{n}_closed_form"),
                    passed: gap <= tol,
                    detail: format!("|{:.6e} + {t}| = {gap:.3e}, tolerance {tol:.3e}", e.value),
                });
            }
        }
        blocks.push(LocalTimeCheck { t, estimates: vec![fb, di, simple], checks });
    }
    let passed = blocks.iter().all(|b| b.checks.iter().all(|c| c.passed));
    let mut summary = String::new();
    let mut csv = String::from("t,method,value,std_error,K,M,seed\n");
    for b in &blocks {
        let _ = writeln!(summary, "local-time integral of {} at t = {}", f.name(), b.t);
        for e in &b.estimates {
            let m = serde_json::to_value(e.method).expect("method serialises");
            let m = m.as_str().unwrap_or_default();
            let _ = writeln!(summary, "  {m:<22} {:>14.6e} ± {:.3e}", e.value, e.std_error);
            let _ = writeln!(csv, "{:?},{m},{:?},{:?},{},{},{}", b.t, e.value, e.std_error, e.k, e.m, cfg.run.seed);
        }
        for c in &b.checks {
            let _ = writeln!(summary, "  [{}] {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
        }
    }
    let report = envelope(cfg, Command::LocaltimeCheck, passed, &blocks);
    Ok(Outcome { command: Command::LocaltimeCheck, passed, summary, report, csv: Some(csv), files: Vec::new() })
}

/// Dispatches `command`.
pub fn run(command: Command, cfg: &ExperimentConfig, workers: usize) -> Result<Outcome, RunError> {
    match command {
        Command::Simulate => cmd_simulate(cfg, workers),
        Command::Verify => cmd_verify(cfg, workers),
        Command::Convergence => cmd_convergence(cfg, workers),
        Command::LocaltimeCheck => cmd_localtime_check(cfg, workers),
    }
}
