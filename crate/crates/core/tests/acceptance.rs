//! End-to-end acceptance checks. Each test prints one `A<n> PASS|FAIL` line.
//!
//! Tests hold a shared lock so wall-clock budgets are measured one at a time.

use levy_ito::config::ExperimentConfig;
use levy_ito::ensemble::{default_workers, map_indexed};
use levy_ito::functional::catalog::{self, Params};
use levy_ito::ito::{verify_thm1, verify_thm3, verify_thm4, ItoResidualReport, RunSettings, Verdict};
use levy_ito::levy::{
    check_drift_condition, path_seed, simulate, stopping_partition, stopping_partition_from, JumpComponent, JumpLaw,
    JumpRecord, SimGrid,
};
use levy_ito::localtime::{
    combine_norm, derivative_identity_integral, forward_backward_integral, forward_backward_path, local_time_norm_path,
    FIRST_CELL_NODES,
};
use levy_ito::operators::{op_a, op_ai, op_i, Antiderivative, OperatorContext};
use levy_ito::quadrature::UnitRule;
use levy_ito::runner::{self, Command};
use levy_ito::stats::{ols_slope, summarize};
use levy_ito::{CadlagPath, LevyModel, ScalarField, SimulatedLevyPath, SpectralDecomp};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use std::sync::Mutex;
use std::time::{Duration, Instant};

static SERIAL: Mutex<()> = Mutex::new(());

fn check(id: &str, what: &str, ok: bool, detail: String, elapsed: Duration, budget_s: f64) {
    let in_time = elapsed.as_secs_f64() < budget_s;
    let pass = ok && in_time;
    println!(
        "{id} {} {what}: {detail} [{:.2} s of {budget_s} s]",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    assert!(ok, "{id}: {detail}");
    assert!(in_time, "{id}: {:.2} s exceeds the {budget_s} s budget", elapsed.as_secs_f64());
}

fn bm1() -> LevyModel {
    LevyModel::brownian(vec![0.0], vec![1.0]).unwrap()
}

fn a4_model() -> LevyModel {
    LevyModel::new(
        vec![0.0],
        vec![1.0],
        vec![JumpComponent::atom(1.0, vec![2.0]).unwrap(), JumpComponent::atom(3.0, vec![0.3]).unwrap()],
    )
    .unwrap()
}

fn a5_model() -> LevyModel {
    LevyModel::new(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0], vec![JumpComponent::atom(1.0, vec![0.3, 0.4]).unwrap()]).unwrap()
}

fn field(name: &str, d: usize) -> ScalarField {
    catalog::field(name, &Params::default(), d).unwrap()
}

fn brownian_paths(steps: usize, m: usize, master: u64) -> Vec<SimulatedLevyPath> {
    let model = bm1();
    map_indexed(default_workers(), m, |i| simulate(&model, SimGrid { horizon: 1.0, steps }, path_seed(master, i)).unwrap())
}

fn pairs(paths: &[SimulatedLevyPath]) -> Vec<(&CadlagPath, &CadlagPath)> {
    paths.iter().map(|p| (&p.jump_part, &p.brownian)).collect()
}

fn within_3se(r: &ItoResidualReport) -> bool {
    r.residual_mean.abs() <= 3.0 * r.residual_se
}

fn stats(r: &ItoResidualReport) -> String {
    format!("mean {:.3e} se {:.3e} rms {:.3e} ({})", r.residual_mean, r.residual_se, r.residual_rms, r.verdict.label())
}

#[test]
fn local_time_telescoping() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let paths = brownian_paths(1 << 10, 64, 101);
    let bad = paths
        .iter()
        .filter(|p| forward_backward_path(|_, _, _| 1.7, &p.jump_part, &p.brownian, 0, 1.0).unwrap().value() != 0.0)
        .count();
    check("A1", "constant integrand telescopes", bad == 0, format!("{bad} of 64 paths nonzero"), start.elapsed(), 1.0);
}

#[test]
fn local_time_closed_form() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let deviations = |k: usize, master: u64| -> (Vec<f64>, f64) {
        let paths = brownian_paths(k, 256, master);
        let est = forward_backward_integral(|_, _, x| x[0], &pairs(&paths), 0, 1.0, Some(master)).unwrap();
        // Oracle: the telescoped sum equals minus the realised quadratic variation.
        let worst = paths
            .iter()
            .map(|p| {
                let b = p.brownian.values();
                let qv: f64 = b.windows(2).map(|w| (w[1] - w[0]).powi(2)).sum();
                let v = forward_backward_path(|_, _, x| x[0], &p.jump_part, &p.brownian, 0, 1.0).unwrap().value();
                (v + qv).abs()
            })
            .fold(0.0, f64::max);
        let dev = paths
            .iter()
            .map(|p| forward_backward_path(|_, _, x| x[0], &p.jump_part, &p.brownian, 0, 1.0).unwrap().value() + 1.0)
            .collect::<Vec<_>>();
        assert!((summarize(&dev).mean - 1.0 - est.value).abs() < 1e-12);
        (dev, worst)
    };
    let (coarse, w1) = deviations(1 << 10, 202);
    let (fine, w2) = deviations(1 << 12, 203);
    let s = summarize(&fine);
    let mean = s.mean - 1.0;
    let ratio = summarize(&fine).rms / summarize(&coarse).rms;
    let ok = (mean + 1.0).abs() <= 3.0 * s.std_error
        && (mean + 1.0).abs() < 0.05
        && (0.35..=0.65).contains(&ratio)
        && w1.max(w2) < 1e-12;
    check(
        "A2",
        "identity integrand gives -1",
        ok,
        format!("mean {mean:.5} se {:.2e} rms ratio {ratio:.3} oracle gap {:.1e}", s.std_error, w1.max(w2)),
        start.elapsed(),
        10.0,
    );
}

#[test]
fn weak_derivative_identity() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let paths = brownian_paths(1 << 12, 256, 303);
    let pr = pairs(&paths);
    let sin_fb = forward_backward_integral(|_, _, x| x[0].sin(), &pr, 0, 1.0, None).unwrap();
    let sin_di = derivative_identity_integral(|_, _, x| x[0].cos(), &pr, 0, 1.0, None).unwrap();
    let sq_fb = forward_backward_integral(|_, _, x| 0.5 * x[0] * x[0], &pr, 0, 1.0, None).unwrap();
    let sq_di = derivative_identity_integral(|_, _, x| x[0], &pr, 0, 1.0, None).unwrap();
    let ok = sin_fb.agrees_with(&sin_di, 3.0) && sq_fb.agrees_with(&sq_di, 3.0);
    check(
        "A3",
        "forward/backward matches derivative identity",
        ok,
        format!(
            "sin {:.4} vs {:.4}, x^2/2 {:.4} vs {:.4}",
            sin_fb.value, sin_di.value, sq_fb.value, sq_di.value
        ),
        start.elapsed(),
        10.0,
    );
}

#[test]
fn jump_residual_and_rate() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = a4_model();
    let f = field("square", 1);
    let workers = default_workers();
    let reports: Vec<ItoResidualReport> = [1usize << 8, 1 << 10, 1 << 12]
        .iter()
        .map(|&k| verify_thm3(&f, &model, &RunSettings::new(k, 512, 404).with_workers(workers)).unwrap())
        .collect();
    let ks: Vec<f64> = [8.0f64, 10.0, 12.0].iter().map(|e| (2.0f64.powf(*e)).ln()).collect();
    let rms: Vec<f64> = reports.iter().map(|r| r.residual_rms.ln()).collect();
    let (slope, _) = ols_slope(&ks, &rms).unwrap();
    let last = &reports[2];
    let ok = within_3se(last) && last.residual_rms <= 0.1 && (-0.7..=-0.3).contains(&slope);
    check("A4", "jump formula residual", ok, format!("{} slope {slope:.3}", stats(last)), start.elapsed(), 60.0);
}

#[test]
fn degenerate_covariance() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = a5_model();
    let dc = check_drift_condition(&model, &SpectralDecomp::new(model.sigma()).unwrap());
    let s = RunSettings::new(1 << 12, 512, 505).with_workers(default_workers());
    let r3 = verify_thm3(&field("norm_sq", 2), &model, &s).unwrap();
    let r4 = verify_thm4(&catalog::terminal(field("norm_sq", 2)), &model, &s).unwrap();
    let ok = dc.finite && (dc.value - 0.4).abs() <= 1e-10 && within_3se(&r3) && within_3se(&r4);
    check(
        "A5",
        "singular covariance",
        ok,
        format!("drift condition {:.12}; state form {}; path form {}", dc.value, stats(&r3), stats(&r4)),
        start.elapsed(),
        60.0,
    );
}

#[test]
fn path_formula_reduces_to_state_formula() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut worst = 0.0f64;
    for (model, name, d, seed) in [(a4_model(), "square", 1, 606), (a5_model(), "norm_sq", 2, 607), (a4_model(), "sin", 1, 608)] {
        let s = RunSettings::new(1 << 10, 32, seed).with_traces().with_workers(default_workers());
        let f = field(name, d);
        let r3 = verify_thm3(&f, &model, &s).unwrap();
        let r4 = verify_thm4(&catalog::terminal(f), &model, &s).unwrap();
        assert_eq!(r3.traces.len(), 32);
        for (a, b) in r3.traces.iter().zip(&r4.traces) {
            worst = worst.max((a.residual - b.residual).abs());
        }
    }
    check("A6", "terminal functionals agree per path", worst <= 1e-10, format!("max |diff| {worst:.2e}"), start.elapsed(), 10.0);
}

#[test]
fn path_dependent_functional() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = a5_model();
    let f = catalog::running_integral(2, 0).plus(&catalog::linear(vec![1.0, -2.0]));
    let reports: Vec<ItoResidualReport> = [1usize << 8, 1 << 10, 1 << 12]
        .iter()
        .map(|&k| verify_thm4(&f, &model, &RunSettings::new(k, 512, 707).with_workers(default_workers())).unwrap())
        .collect();
    let all_exact = reports.iter().all(|r| r.verdict == Verdict::Exact);
    let decreasing = reports.windows(2).all(|w| w[1].residual_rms < w[0].residual_rms);
    let last = &reports[2];
    let centred = within_3se(last) || last.verdict == Verdict::Exact;
    let rms: Vec<String> = reports.iter().map(|r| format!("{:.2e}", r.residual_rms)).collect();
    check(
        "A7",
        "running integral plus linear",
        centred && (decreasing || all_exact),
        format!("{} rms over K {}", stats(last), rms.join(", ")),
        start.elapsed(),
        60.0,
    );
}

#[test]
fn continuous_formula() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = bm1();
    let s = RunSettings::new(1 << 12, 512, 808).with_workers(default_workers());
    let sq = verify_thm1(&catalog::terminal(field("square", 1)), &model, &s).unwrap();
    let lin = verify_thm1(&catalog::linear(vec![1.5]), &model, &s).unwrap();
    let ok = within_3se(&sq) && lin.verdict == Verdict::Exact;
    check(
        "A8",
        "continuous formula",
        ok,
        format!("square {}; linear rms {:.1e} ({})", stats(&sq), lin.residual_rms, lin.verdict.label()),
        start.elapsed(),
        30.0,
    );
}

fn sf(dim: usize, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> ScalarField {
    ScalarField::new("probe", dim, 2, f)
}

fn points(rng: &mut ChaCha8Rng, n: usize, d: usize, r: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..d).map(|_| rng.random_range(-r..r)).collect()).collect()
}

#[test]
fn operator_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut errs: Vec<(String, f64)> = Vec::new();
    let mut err = |name: &str, got: f64, want: f64| errs.push((name.to_string(), (got - want).abs()));

    err("I 1", op_i(&sf(1, |_| 1.0), 0, &[2.0]).unwrap(), 2.0);
    err("I x", op_i(&sf(1, |x| x[0]), 0, &[3.0]).unwrap(), 4.5);
    err("I xy", op_i(&sf(2, |x| x[0] * x[1]), 1, &[2.0, 3.0]).unwrap(), 9.0);

    let plain = OperatorContext::new(&LevyModel::brownian(vec![0.0; 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap());
    let x = [0.4, -1.1];
    err("A square", op_a(&sf(2, |x| x[1] * x[1]), 1, &x, &plain).unwrap(), 1.0);
    err("A linear", op_a(&sf(2, |x| 3.0 * x[0] - x[1]), 0, &x, &plain).unwrap(), 0.0);
    err("AI square", op_ai(&sf(2, |x| x[1] * x[1]), 1, &x, &plain), x[1]);

    let atom = LevyModel::new(vec![0.0], vec![1.0], vec![JumpComponent::atom(1.0, vec![0.5]).unwrap()]).unwrap();
    let ctx = OperatorContext::new(&atom);
    err("A atom", op_a(&field("square", 1), 0, &[0.8], &ctx).unwrap(), 1.25);
    err("AI atom", op_ai(&field("square", 1), 0, &[1.0], &ctx), 1.0 + 0.25 + 1.0 / 24.0);

    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let sine = sf(1, |x| x[0].sin());
    for x in points(&mut rng, 20, 1, 2.0) {
        let oracle = op_a(&Antiderivative { f: &sine, i: 0 }, 0, &x, &ctx).unwrap();
        err("AI∘sin", op_ai(&sine, 0, &x, &ctx), oracle);
    }

    let mixed = LevyModel::new(
        vec![0.0, 0.0],
        vec![1.0, 0.3, 0.3, 0.8],
        vec![
            JumpComponent::atom(2.0, vec![0.4, -0.3]).unwrap(),
            JumpComponent::new(1.5, JumpLaw::UniformBall { center: vec![0.0, 0.0], radius: 0.6 }).unwrap(),
        ],
    )
    .unwrap();
    let ctx2 = OperatorContext::new(&mixed);
    let set = [
        sf(2, |x| x[0].powi(4) - 2.0 * x[0] * x[1] * x[1] + x[1].powi(3)),
        sf(2, |x| x[0] * x[0] * x[1] - x[1] + 0.5),
        sf(2, |x| (x[0] + 0.5 * x[1]).sin()),
        sf(2, |x| (0.3 * x[0] - 0.2 * x[1]).exp()),
    ];
    for f in &set {
        for x in points(&mut rng, 5, 2, 1.5) {
            for i in 0..2 {
                let oracle = op_a(&Antiderivative { f, i }, i, &x, &ctx2).unwrap();
                err("AI∘set", op_ai(f, i, &x, &ctx2), oracle);
            }
        }
    }
    let (name, worst) = errs.iter().fold(("", 0.0f64), |acc, (n, e)| if *e > acc.1 { (n.as_str(), *e) } else { acc });
    check(
        "A9",
        "operator examples and composition",
        worst <= 1e-8,
        format!("{} checks, worst {worst:.2e} ({name})", errs.len()),
        start.elapsed(),
        5.0,
    );
}

#[test]
fn partition_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let uniform = vec![0.0, 0.25, 0.5, 0.75, 1.0];
    let continuous = simulate(&bm1(), SimGrid { horizon: 1.0, steps: 64 }, 1).unwrap();
    let traces = [
        stopping_partition(&continuous, 2).times == uniform,
        stopping_partition_from(&[JumpRecord::new(0.5, 32, vec![1.0])], 1.0, 2).times == uniform,
        stopping_partition_from(&[JumpRecord::new(0.3, 20, vec![0.1])], 1.0, 2).times == uniform,
        stopping_partition_from(&[JumpRecord::new(0.3, 20, vec![0.5])], 1.0, 2).times == vec![0.0, 0.25, 0.3, 0.55, 0.8, 1.0],
    ];

    let model = LevyModel::new(
        vec![0.1, 0.0],
        vec![1.0, 0.2, 0.2, 0.5],
        vec![
            JumpComponent::atom(2.0, vec![1.5, -0.5]).unwrap(),
            JumpComponent::new(6.0, JumpLaw::UniformBall { center: vec![0.0, 0.0], radius: 0.9 }).unwrap(),
        ],
    )
    .unwrap();
    let violations: usize = map_indexed(default_workers(), 100, |i| {
        let p = simulate(&model, SimGrid { horizon: 1.0, steps: 256 }, path_seed(1010, i)).unwrap();
        let mut bad = 0;
        for n in 0..8 {
            let part = stopping_partition(&p, n);
            let mesh = 0.5f64.powi(n as i32);
            let t = &part.times;
            bad += usize::from(t[0] != 0.0 || *t.last().unwrap() != 1.0);
            bad += t.windows(2).filter(|w| !(w[1] > w[0] && w[1] - w[0] <= mesh)).count();
            bad += p
                .jumps
                .iter()
                .filter(|j| j.y.iter().map(|v| v * v).sum::<f64>().sqrt() >= mesh && !t.contains(&j.time))
                .count();
        }
        bad
    })
    .into_iter()
    .sum();
    let matched = traces.iter().filter(|&&b| b).count();
    check(
        "A10",
        "stopping partitions",
        matched == traces.len() && violations == 0,
        format!("{matched}/{} hand traces, {violations} invariant violations on 100 paths", traces.len()),
        start.elapsed(),
        5.0,
    );
}

#[test]
fn spectral_suite() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1111);
    let normal = rand_distr::StandardNormal;
    let mut worst = 0.0f64;
    let mut rank_misses = 0;
    for trial in 0..200 {
        let d = 1 + trial % 6;
        let r = rng.random_range(0..=d);
        let a: Vec<f64> = (0..d * r).map(|_| rng.sample::<f64, _>(normal)).collect();
        let mut sigma = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                sigma[i * d + j] = (0..r).map(|k| a[i * r + k] * a[j * r + k]).sum();
            }
        }
        let sd = SpectralDecomp::new(&sigma).unwrap();
        rank_misses += usize::from(sd.rank != r);
        for v in sd.identity_residuals(&sigma) {
            worst = worst.max(v);
        }
    }
    check(
        "A11",
        "spectral identities",
        worst <= 1e-10 && rank_misses == 0,
        format!("worst Frobenius residual {worst:.2e}, {rank_misses} rank mismatches"),
        start.elapsed(),
        5.0,
    );
}

#[test]
fn local_time_norm_of_one() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let model = bm1();
    let rule = UnitRule::new(FIRST_CELL_NODES);
    let per = map_indexed(default_workers(), 10_000, |i| {
        let p = simulate(&model, SimGrid { horizon: 1.0, steps: 1 << 12 }, path_seed(1212, i)).unwrap();
        local_time_norm_path(&|_: f64, _: &levy_ito::PathView<'_>, _: &[f64]| 1.0, &p.jump_part, &p.brownian, &rule).unwrap()
    });
    let norm = combine_norm(&per);
    let target = 2.0 + 2.0 * (2.0 / std::f64::consts::PI).sqrt();
    let rel = (norm.value - target).abs() / target;
    check(
        "A12",
        "norm diagnostic for F = 1",
        rel < 0.05,
        format!("{:.4} vs {target:.4} (rel {rel:.3}, M {})", norm.value, norm.paths),
        start.elapsed(),
        60.0,
    );
}

fn numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap()),
        Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
        Value::Object(o) => o.values().for_each(|x| numbers(x, out)),
        _ => {}
    }
}

#[test]
fn determinism() {
    let _g = SERIAL.lock().unwrap_or_else(|e| e.into_inner());
    let start = Instant::now();
    let text = r#"{
  "schema_version": 1,
  "model": { "drift": [0.0], "covariance": [1.0], "jumps": [
    { "distribution": "atom", "rate": 1.0, "at": [2.0] },
    { "distribution": "uniform_ball", "rate": 3.0, "center": [0.0], "radius": 0.5 } ] },
  "functional": { "name": "terminal", "params": { "field": "square" } },
  "run": { "steps": 1024, "paths": 64, "seed": 1313, "t_eval": [0.5, 1.0] },
  "verifier": "thm4"
}"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    let a = runner::run(Command::Verify, &cfg, 8).unwrap();
    let b = runner::run(Command::Verify, &cfg, 8).unwrap();
    let one = runner::run(Command::Verify, &cfg, 1).unwrap();
    let sim8 = runner::run(Command::Simulate, &cfg, 8).unwrap();
    let sim1 = runner::run(Command::Simulate, &cfg, 1).unwrap();
    let identical = a.report == b.report && a.csv == b.csv && sim8.files == sim1.files && sim8.report == sim1.report;
    let (mut x, mut y) = (Vec::new(), Vec::new());
    numbers(&serde_json::from_str(&a.report).unwrap(), &mut x);
    numbers(&serde_json::from_str(&one.report).unwrap(), &mut y);
    let worst = if x.len() == y.len() {
        x.iter().zip(&y).map(|(p, q)| if p == q { 0.0 } else { (p - q).abs() / p.abs().max(q.abs()) }).fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    check(
        "A13",
        "reproducible reports",
        identical && worst <= 1e-12,
        format!("byte-identical at 8 workers: {identical}; max relative deviation 1 vs 8 workers {worst:.1e}"),
        start.elapsed(),
        60.0,
    );
}
