use super::{build_report, dot, projected_nodes, run_ensemble, trapezoid, Assertion, Formula, ItoError, ItoResidualReport, PathTerms, RunSettings, Term};
use crate::functional::FunctionalHandle;
use crate::levy::{check_drift_condition, JumpClass, LevyModel, SimulatedLevyPath};
use crate::localtime::forward_backward_from_values;
use crate::operators::{op_ai, FrozenFunctional, OperatorContext};
use crate::paths::{PathView, Vector};
use crate::stats::tree_sum;

/// Verifies the functional Itô formula for `F ∈ C^{1,1}` on a Lévy path.
///
/// The local-time term applies `𝓐_j 𝓘_j` to
/// `x ↦ F(s, X_{∧s-}^{Σ^{1/2} x + X^d(s-) - X(s-)})`, so only first vertical
/// derivatives of `F` are used.
pub fn verify_thm4(f: &FunctionalHandle, model: &LevyModel, settings: &RunSettings) -> Result<ItoResidualReport, ItoError> {
    run(f, model, settings, Formula::Thm4)
}

/// [`verify_thm4`] for a full-rank `Σ`, additionally asserting that the
/// `(I - Q)` correction vanishes bitwise on every path and that the drift
/// condition value is 0.
pub fn verify_thm4_invertible(
    f: &FunctionalHandle,
    model: &LevyModel,
    settings: &RunSettings,
) -> Result<ItoResidualReport, ItoError> {
    if model.rank() != model.dim() {
        return Err(ItoError::Hypothesis(format!("Σ has rank {} < {}", model.rank(), model.dim())));
    }
    let mut settings = settings.clone();
    let keep = settings.keep_traces;
    settings.keep_traces = true;
    let mut report = run(f, model, &settings, Formula::Thm4Invertible)?;
    let col = Formula::Thm4Invertible.terms().iter().position(|&t| t == Term::NuCorrection).expect("correction term");
    let nonzero = report.traces.iter().filter(|t| t.terms[col] != 0.0).count();
    report.assertions.push(Assertion {
        name: "correction_bitwise_zero".into(),
        passed: nonzero == 0,
        detail: format!("{nonzero} paths with a nonzero (I - Q) correction"),
    });
    let dc = report.drift_condition.expect("drift condition");
    report.assertions.push(Assertion {
        name: "drift_condition_zero".into(),
        passed: dc.value == 0.0,
        detail: format!("∫ |(I - Q) y| ν(dy) = {:e}", dc.value),
    });
    if !keep {
        report.traces.clear();
    }
    Ok(report)
}

fn run(f: &FunctionalHandle, model: &LevyModel, settings: &RunSettings, formula: Formula) -> Result<ItoResidualReport, ItoError> {
    if f.dim() != model.dim() {
        return Err(ItoError::DimensionMismatch { model: model.dim(), functional: f.dim() });
    }
    if f.class().space_order() < 1 || f.class().time_order() < 1 {
        return Err(ItoError::Hypothesis(format!("{} is {:?}, at least C11 is required", f.name(), f.class())));
    }
    let dc = check_drift_condition(model, model.decomp());
    if !dc.finite {
        return Err(ItoError::Hypothesis(format!("drift condition is infinite ({})", dc.value)));
    }
    let ctx = OperatorContext::new(model);
    let (qy, ry) = projected_nodes(&ctx);
    let t = settings.t();
    let paths = run_ensemble(model, settings, |p| path_terms(f, model, &ctx, &qy, &ry, p, t))?;
    Ok(build_report(formula, f.name(), settings, paths, Some(dc)))
}

#[derive(Clone, Copy)]
struct ViewValues {
    horizontal: f64,
    drift: f64,
    comp: f64,
    corr: f64,
}

struct Eval<'a> {
    f: &'a FunctionalHandle,
    mu: &'a [f64],
    ctx: &'a OperatorContext,
    qy: &'a [Vector],
    ry: &'a [Vector],
}

impl Eval<'_> {
    fn at(&self, s: f64, v: &PathView<'_>) -> (ViewValues, Vector) {
        let mut g: Vector = smallvec::smallvec![0.0; self.f.dim()];
        self.f.gradient_into(s, v, &mut g);
        let f0 = self.f.eval(s, v);
        let mut comp = Vec::with_capacity(self.ctx.nodes.len());
        let mut corr = Vec::with_capacity(self.ctx.nodes.len());
        for (q, (y, w)) in self.ctx.nodes.iter().zip(&self.ctx.weights).enumerate() {
            let fy = self.f.eval(s, &v.perturbed(y));
            comp.push(w * (fy - f0));
            corr.push(w * (fy - self.f.eval(s, &v.perturbed(&self.qy[q])) - dot(&g, &self.ry[q])));
        }
        let vals = ViewValues {
            horizontal: self.f.horizontal_value(s, v),
            drift: dot(&g, self.mu),
            comp: tree_sum(&comp),
            corr: tree_sum(&corr),
        };
        (vals, g)
    }
}

#[allow(clippy::too_many_arguments)]
fn path_terms(
    f: &FunctionalHandle,
    model: &LevyModel,
    ctx: &OperatorContext,
    qy: &[Vector],
    ry: &[Vector],
    p: &SimulatedLevyPath,
    t: f64,
) -> PathTerms {
    let grid = p.grid();
    let knots = grid.knots();
    let n = grid.locate(t);
    let decomp = model.decomp();
    let m = decomp.rank;
    let ev = Eval { f, mu: model.drift(), ctx, qy, ry };

    let mut post = Vec::with_capacity(n + 1);
    let mut pre = Vec::with_capacity(n + 1);
    let mut brownian = Vec::with_capacity(n);
    let mut frozen_end = vec![0.0; n + 1];
    let mut sdb: Vector = smallvec::smallvec![0.0; model.dim()];
    for (k, &s) in knots.iter().enumerate().take(n + 1) {
        let view = p.x.stopped_view(s);
        let (v, g) = ev.at(s, &view);
        if k < n {
            frozen_end[k + 1] = f.horizontal_value(knots[k + 1], &view);
        }
        if k < n && m > 0 {
            let db: Vector = p.brownian.value(k + 1).iter().zip(p.brownian.value(k)).map(|(a, b)| a - b).collect();
            decomp.apply_sigma_half(&db, &mut sdb);
            brownian.push(dot(&g, &sdb));
        }
        let before = if p.x.is_jump(k) { ev.at(s, &p.x.left_stopped_view(s)).0 } else { v };
        post.push(v);
        pre.push(before);
    }
    let col = |vals: &[ViewValues], pick: fn(&ViewValues) -> f64| -> Vec<f64> { vals.iter().map(pick).collect() };
    // The path is frozen on each cell, so the horizontal term integrates
    // s ↦ DF(s, X_{∧t_k}) over (t_k, t_{k+1}].
    let horizontal = trapezoid(knots, &col(&post, |v| v.horizontal), &frozen_end, n);
    let drift = trapezoid(knots, &col(&post, |v| v.drift), &col(&pre, |v| v.drift), n);
    let compensator = trapezoid(knots, &col(&post, |v| v.comp), &col(&pre, |v| v.comp), n);
    let correction = trapezoid(knots, &col(&post, |v| v.corr), &col(&pre, |v| v.corr), n);

    let mut big = Vec::new();
    let mut small = Vec::new();
    for j in p.jumps.iter().filter(|j| j.knot <= n) {
        let s = j.time;
        let left = p.x.left_stopped_view(s);
        let before = f.eval(s, &left);
        match j.class {
            JumpClass::Large => big.push(f.eval(s, &p.x.stopped_view(s)) - before),
            JumpClass::Small => small.push(f.eval(s, &left.perturbed(&j.y)) - before),
        }
    }

    let mut local = Vec::with_capacity(m);
    for jj in 0..m {
        let values: Vec<f64> = knots[..=n]
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let frozen = FrozenFunctional {
                    f,
                    s,
                    view: p.x.left_stopped_view(s),
                    decomp,
                    anchor: p.nongaussian.left(k),
                };
                op_ai(&frozen, jj, p.brownian.value(k), ctx)
            })
            .collect();
        local.push(forward_backward_from_values(&values, &p.brownian, jj).value());
    }

    let tn = knots[n];
    let lhs = f.eval(tn, &p.x.stopped_view(tn)) - f.eval(0.0, &p.x.stopped_view(0.0));
    PathTerms {
        lhs,
        terms: vec![
            horizontal,
            drift,
            tree_sum(&brownian),
            tree_sum(&big),
            tree_sum(&small) - compensator,
            -tree_sum(&local),
            correction,
        ],
    }
}
