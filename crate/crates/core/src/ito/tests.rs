use super::*;
use crate::functional::catalog::{self, Params};
use crate::functional::{FunctionalHandle, ScalarField};
use crate::levy::{path_seed, simulate, JumpClass};
use crate::levy::{JumpComponent, LevyModel};

fn field(name: &str, d: usize) -> ScalarField {
    catalog::field(name, &Params::default(), d).unwrap()
}

fn linear_field(c: Vec<f64>) -> ScalarField {
    let d = c.len();
    catalog::field("linear", &Params { c: Some(c), ..Params::default() }, d).unwrap()
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

fn a7_functional() -> FunctionalHandle {
    catalog::running_integral(2, 0).plus(&catalog::linear(vec![1.0, -2.0]))
}

fn assert_partition(r: &ItoResidualReport) {
    let means: Vec<f64> = r.terms.iter().map(|t| t.mean).collect();
    let gap = r.lhs_mean - crate::stats::tree_sum(&means) - r.residual_mean;
    let scale = means.iter().map(|m| m.abs()).sum::<f64>() + r.lhs_mean.abs();
    assert!(gap.abs() <= 1e-12 * scale.max(1.0), "gap {gap:e}");
    assert!(r.terms.iter().all(|t| t.std_error >= 0.0));
    assert_eq!(r.terms.len(), r.formula.terms().len());
}

#[test]
fn thm3_linear_without_jumps_is_exact() {
    let model = LevyModel::brownian(vec![0.3, -0.1], vec![1.0, 0.5, 0.5, 2.0]).unwrap();
    let r = verify_thm3(&linear_field(vec![1.0, -2.0]), &model, &RunSettings::new(512, 64, 3)).unwrap();
    assert_eq!(r.verdict, Verdict::Exact, "rms {:e}", r.residual_rms);
    assert!(r.term(Term::LocalTime).unwrap().rms <= 1e-12);
    assert!(r.passed());
}

#[test]
fn thm3_square_with_mixed_jumps() {
    let r = verify_thm3(&field("square", 1), &a4_model(), &RunSettings::new(1024, 256, 11)).unwrap();
    assert_ne!(r.verdict, Verdict::NonZero, "{:e} ± {:e}", r.residual_mean, r.residual_se);
    assert!(r.residual_rms <= 0.1, "rms {}", r.residual_rms);
    assert!(r.passed());
    assert_partition(&r);
}

#[test]
fn thm3_big_jump_term_matches_direct_sum() {
    let model = LevyModel::new(vec![0.0], vec![1.0], vec![JumpComponent::atom(1.0, vec![2.0]).unwrap()]).unwrap();
    let s = RunSettings::new(512, 64, 5).with_traces();
    let f = field("square", 1);
    let r = verify_thm3(&f, &model, &s).unwrap();
    let big = Formula::Thm3.terms().iter().position(|t| *t == Term::BigJump).unwrap();
    for tr in &r.traces {
        let p = simulate(&model, s.grid(), path_seed(s.seed, tr.path_id)).unwrap();
        let direct: f64 = p
            .jumps
            .iter()
            .filter(|j| j.class == JumpClass::Large)
            .map(|j| f.eval(p.x.value(j.knot)) - f.eval(p.x.left(j.knot)))
            .sum();
        assert!((tr.terms[big] - direct).abs() <= 1e-10 * direct.abs().max(1.0));
        let n = p.x.grid().steps();
        let lhs = f.eval(p.x.value(n)) - f.eval(p.x.value(0));
        assert!((tr.lhs - lhs).abs() <= 1e-12 * lhs.abs().max(1.0));
    }
    assert_ne!(r.verdict, Verdict::NonZero);
}

#[test]
fn thm3_degenerate_covariance_reports_correction() {
    let r = verify_thm3(&field("norm_sq", 2), &a5_model(), &RunSettings::new(1024, 256, 13)).unwrap();
    assert_ne!(r.verdict, Verdict::NonZero, "{:e} ± {:e}", r.residual_mean, r.residual_se);
    let corr = r.term(Term::NuCorrection).unwrap();
    // For ‖x‖² the integrand is ‖y‖² − ‖Qy‖² = 0.16 at every x.
    assert!((corr.mean - 0.16).abs() <= 1e-9, "{}", corr.mean);
    let dc = r.drift_condition.unwrap();
    assert!((dc.value - 0.4).abs() <= 1e-10);
    assert!(r.passed());
}

#[test]
fn thm4_matches_thm3_on_terminal_functionals() {
    for (model, name, d) in [(a4_model(), "square", 1), (a5_model(), "norm_sq", 2)] {
        let s = RunSettings::new(256, 32, 17).with_traces();
        let f = field(name, d);
        let r3 = verify_thm3(&f, &model, &s).unwrap();
        let r4 = verify_thm4(&catalog::terminal(f), &model, &s).unwrap();
        for (a, b) in r3.traces.iter().zip(&r4.traces) {
            assert!((a.residual - b.residual).abs() <= 1e-10, "{} vs {}", a.residual, b.residual);
            for (x, y) in a.terms.iter().zip(&b.terms) {
                assert!((x - y).abs() <= 1e-10 * x.abs().max(1.0));
            }
        }
    }
}

#[test]
fn thm4_path_dependent_functional() {
    let r = verify_thm4(&a7_functional(), &a5_model(), &RunSettings::new(1024, 256, 19)).unwrap();
    assert_ne!(r.verdict, Verdict::NonZero, "{:e} ± {:e}", r.residual_mean, r.residual_se);
    assert!(r.term(Term::Horizontal).unwrap().rms > 0.0);
    assert_eq!(r.metadata.get("anchor").map(String::as_str), Some(ANCHOR));
    assert!(r.passed());
    assert_partition(&r);
}

#[test]
fn constant_functional_has_zero_terms() {
    let r = verify_thm4(&catalog::constant(2, 3.5), &a5_model(), &RunSettings::new(128, 16, 1)).unwrap();
    for t in &r.terms {
        assert_eq!(t.mean, 0.0, "{}", t.term.name());
    }
    assert_eq!(r.residual_rms, 0.0);
    let split = orthogonal_split(&r).unwrap();
    assert_eq!(split, OrthogonalSplit { martingale_part: 0.0, orthogonal_part: 0.0 });
}

#[test]
fn invertible_specialisation() {
    let jumps = vec![JumpComponent::atom(2.0, vec![0.2, -0.3]).unwrap(), JumpComponent::atom(0.5, vec![1.5, 0.0]).unwrap()];
    let s = RunSettings::new(256, 32, 23);
    let f = catalog::functional("integral_plus_linear", &Params { c: Some(vec![0.5, 1.0]), ..Params::default() }, 2).unwrap();

    let id = LevyModel::new(vec![0.1, 0.0], vec![1.0, 0.0, 0.0, 1.0], jumps.clone()).unwrap();
    let r = verify_thm4_invertible(&f, &id, &s).unwrap();
    let corr = r.term(Term::NuCorrection).unwrap();
    assert_eq!(corr.mean, 0.0);
    assert_eq!(corr.rms, 0.0);
    assert!(r.passed());

    let full = LevyModel::new(vec![0.0, 0.0], vec![2.0, 1.0, 1.0, 2.0], jumps).unwrap();
    let a = verify_thm4_invertible(&f, &full, &s).unwrap();
    let b = verify_thm4(&f, &full, &s).unwrap();
    assert!(a.term(Term::NuCorrection).unwrap().rms <= 1e-10);
    assert_eq!(a.residual_mean, b.residual_mean);
    assert_eq!(a.formula, Formula::Thm4Invertible);
    assert!(a.passed());
}

#[test]
fn hypothesis_violations_are_refused() {
    let s = RunSettings::new(64, 4, 0);
    let f = catalog::terminal(field("square", 1));
    assert!(matches!(verify_thm1(&f, &a4_model(), &s), Err(ItoError::Hypothesis(_))));
    let g = catalog::terminal(field("norm_sq", 2));
    assert!(matches!(verify_thm4_invertible(&g, &a5_model(), &s), Err(ItoError::Hypothesis(_))));
    assert!(matches!(verify_thm4(&g, &a4_model(), &s), Err(ItoError::DimensionMismatch { .. })));
    assert!(verify_thm1(&catalog::running_max(1, 0), &bm1(), &s).is_err());
}

#[test]
fn thm1_examples() {
    let s = RunSettings::new(1024, 256, 29);
    let lin = LevyModel::brownian(vec![0.2, 0.0], vec![1.0, 0.3, 0.3, 0.5]).unwrap();
    let r = verify_thm1(&catalog::linear(vec![1.0, -2.0]), &lin, &s).unwrap();
    assert_eq!(r.verdict, Verdict::Exact);
    assert_eq!(r.verdict.label(), "0 (exact)");

    let r = verify_thm1(&catalog::terminal(field("square", 1)), &bm1(), &s).unwrap();
    assert_ne!(r.verdict, Verdict::NonZero);
    assert!(r.residual_rms > 1e-3);
    assert!(r.passed());
    let qv = r.term(Term::QuadraticVariation).unwrap();
    assert!((qv.mean - 1.0).abs() <= 1e-12);

    let r = verify_thm1(&catalog::running_integral(1, 0), &bm1(), &s).unwrap();
    assert!(r.residual_rms <= 1e-10, "{}", r.residual_rms);
}

#[test]
fn orthogonal_split_examples() {
    let bm2 = LevyModel::brownian(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    let s = RunSettings::new(256, 64, 31);
    let r = verify_thm4(&catalog::linear(vec![1.0, 2.0]), &bm2, &s).unwrap();
    let split = orthogonal_split(&r).unwrap();
    assert!(split.orthogonal_part.abs() <= 1e-12);
    assert!((split.martingale_part - r.term(Term::Brownian).unwrap().mean).abs() <= 1e-15);

    let r = verify_thm4(&catalog::terminal(field("square", 1)), &a4_model(), &s).unwrap();
    let split = orthogonal_split(&r).unwrap();
    let sum = split.martingale_part + split.orthogonal_part;
    assert!((sum - r.rhs_mean).abs() <= 1e-12 * r.rhs_mean.abs().max(1.0));

    let r3 = verify_thm3(&field("square", 1), &a4_model(), &s).unwrap();
    assert!(matches!(orthogonal_split(&r3), Err(ItoError::WrongFormula(Formula::Thm3))));
}

#[test]
fn zero_measure_leaves_quadrature_error() {
    let model = LevyModel::new(vec![0.5, -0.25], vec![0.0; 4], vec![]).unwrap();
    let s = RunSettings::new(4096, 4, 37);
    let f = catalog::field("sin", &Params { coord: Some(1), ..Params::default() }, 2).unwrap();
    let r = verify_thm3(&f, &model, &s).unwrap();
    assert!(r.residual_rms <= 1e-8, "{}", r.residual_rms);
    let g = a7_functional().plus(&catalog::terminal(f));
    let r = verify_thm4(&g, &model, &s).unwrap();
    assert!(r.residual_rms <= 1e-8, "{}", r.residual_rms);
    assert_eq!(r.term(Term::Brownian).unwrap().rms, 0.0);
    assert_eq!(r.term(Term::CompensatedSmallJump).unwrap().rms, 0.0);
}

#[test]
fn thm4_on_brownian_square_is_exact() {
    // The forward/backward local-time integral of ½ ∂f reproduces the
    // discrete quadratic variation, so nothing is left over.
    let r = verify_thm4(&catalog::terminal(field("square", 1)), &bm1(), &RunSettings::new(256, 16, 2)).unwrap();
    assert_eq!(r.verdict, Verdict::Exact);
}

#[test]
fn residual_rms_shrinks_with_refinement() {
    let f = field("square", 1);
    let rms = |k: usize| verify_thm3(&f, &a4_model(), &RunSettings::new(k, 256, 41)).unwrap().residual_rms;
    let ratio = rms(256) / rms(1024);
    assert!((1.3..=3.0).contains(&ratio), "ratio {ratio}");
    let g = catalog::time_weighted_terminal(field("square", 1));
    let rms = |k: usize| verify_thm4(&g, &a4_model(), &RunSettings::new(k, 256, 43)).unwrap().residual_rms;
    let ratio = rms(256) / rms(1024);
    assert!((1.3..=3.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn reports_do_not_depend_on_worker_count() {
    let f = a7_functional().plus(&catalog::terminal(field("norm_sq", 2)));
    let base = RunSettings::new(256, 24, 47);
    let a = verify_thm4(&f, &a5_model(), &base.clone().with_workers(1)).unwrap();
    let b = verify_thm4(&f, &a5_model(), &base.clone().with_workers(3)).unwrap();
    let c = verify_thm4(&f, &a5_model(), &base.with_workers(1)).unwrap();
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&c).unwrap());
    for (x, y) in a.terms.iter().zip(&b.terms) {
        assert!((x.mean - y.mean).abs() <= 1e-12 * x.mean.abs().max(1e-300));
    }
    assert!((a.residual_mean - b.residual_mean).abs() <= 1e-12 * a.lhs_mean.abs().max(1.0));
}

#[test]
fn traces_csv_layout() {
    let r = verify_thm3(&field("square", 1), &a4_model(), &RunSettings::new(64, 3, 53).with_traces()).unwrap();
    let mut buf = Vec::new();
    r.write_traces_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path_id,term,value");
    assert_eq!(lines.len(), 1 + 3 * (Formula::Thm3.terms().len() + 2));
    assert!(lines[1].starts_with("0,lhs,"));
    assert!(lines.iter().any(|l| l.starts_with("2,local_time,")));
    assert_eq!(r.residuals().len(), 3);
}

#[test]
fn invalid_settings_are_rejected() {
    let f = field("square", 1);
    assert!(matches!(verify_thm3(&f, &bm1(), &RunSettings::new(0, 8, 0)), Err(ItoError::Settings(_))));
    assert!(matches!(verify_thm3(&f, &bm1(), &RunSettings::new(64, 0, 0)), Err(ItoError::Settings(_))));
    let mut s = RunSettings::new(64, 4, 0);
    s.t_eval = Some(2.0);
    assert!(matches!(verify_thm3(&f, &bm1(), &s), Err(ItoError::Settings(_))));
}

