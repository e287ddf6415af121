use super::{add, build_report, dot, projected_nodes, run_ensemble, trapezoid, Formula, ItoError, ItoResidualReport, PathTerms, RunSettings};
use crate::functional::ScalarField;
use crate::levy::{check_drift_condition, JumpClass, LevyModel, SimulatedLevyPath};
use crate::localtime::forward_backward_from_values;
use crate::operators::{op_ai, Lifted, OperatorContext};
use crate::paths::Vector;
use crate::stats::tree_sum;

/// Verifies the local-time Itô formula for `f(X(t))`, `f ∈ C¹`.
///
/// Terms (in [`Formula::terms`] order): horizontal (always 0 here), drift,
/// Brownian, big jumps, compensated small jumps, the local-time term built
/// from `𝓐_i 𝓘_i f̃` with `f̃(s, x) = f(Σ^{1/2} x + X^d(s-))`, and the
/// `(I - Q)` correction.
pub fn verify_thm3(f: &ScalarField, model: &LevyModel, settings: &RunSettings) -> Result<ItoResidualReport, ItoError> {
    if f.dim() != model.dim() {
        return Err(ItoError::DimensionMismatch { model: model.dim(), functional: f.dim() });
    }
    if f.order() < 1 {
        return Err(ItoError::Hypothesis(format!("{} is not declared differentiable", f.name())));
    }
    let dc = check_drift_condition(model, model.decomp());
    if !dc.finite {
        return Err(ItoError::Hypothesis(format!("drift condition is infinite ({})", dc.value)));
    }
    let ctx = OperatorContext::new(model);
    let (qy, ry) = projected_nodes(&ctx);
    let t = settings.t();
    let paths = run_ensemble(model, settings, |p| path_terms(f, model, &ctx, &qy, &ry, p, t))?;
    Ok(build_report(Formula::Thm3, f.name(), settings, paths, Some(dc)))
}

#[derive(Clone, Copy)]
struct PointValues {
    drift: f64,
    comp: f64,
    corr: f64,
}

fn point_values(f: &ScalarField, mu: &[f64], ctx: &OperatorContext, qy: &[Vector], ry: &[Vector], x: &[f64]) -> (PointValues, Vector) {
    let g = f.gradient(x);
    let f0 = f.eval(x);
    let mut comp = Vec::with_capacity(ctx.nodes.len());
    let mut corr = Vec::with_capacity(ctx.nodes.len());
    for (q, (y, w)) in ctx.nodes.iter().zip(&ctx.weights).enumerate() {
        let fy = f.eval(&add(x, y));
        comp.push(w * (fy - f0));
        corr.push(w * (fy - f.eval(&add(x, &qy[q])) - dot(&g, &ry[q])));
    }
    (PointValues { drift: dot(&g, mu), comp: tree_sum(&comp), corr: tree_sum(&corr) }, g)
}

#[allow(clippy::too_many_arguments)]
fn path_terms(
    f: &ScalarField,
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
    let mu = model.drift();

    let mut post = Vec::with_capacity(n + 1);
    let mut pre = Vec::with_capacity(n + 1);
    let mut brownian = Vec::with_capacity(n);
    let mut sdb: Vector = smallvec::smallvec![0.0; model.dim()];
    for k in 0..=n {
        let (v, g) = point_values(f, mu, ctx, qy, ry, p.x.value(k));
        if k < n && m > 0 {
            let db: Vector = p.brownian.value(k + 1).iter().zip(p.brownian.value(k)).map(|(a, b)| a - b).collect();
            decomp.apply_sigma_half(&db, &mut sdb);
            brownian.push(dot(&g, &sdb));
        }
        let before = if p.x.is_jump(k) { point_values(f, mu, ctx, qy, ry, p.x.left(k)).0 } else { v };
        post.push(v);
        pre.push(before);
    }
    let col = |vals: &[PointValues], pick: fn(&PointValues) -> f64| -> Vec<f64> { vals.iter().map(pick).collect() };
    let drift = trapezoid(knots, &col(&post, |v| v.drift), &col(&pre, |v| v.drift), n);
    let compensator = trapezoid(knots, &col(&post, |v| v.comp), &col(&pre, |v| v.comp), n);
    let correction = trapezoid(knots, &col(&post, |v| v.corr), &col(&pre, |v| v.corr), n);

    let mut big = Vec::new();
    let mut small = Vec::new();
    for j in p.jumps.iter().filter(|j| j.knot <= n) {
        let left = p.x.left(j.knot);
        match j.class {
            JumpClass::Large => big.push(f.eval(p.x.value(j.knot)) - f.eval(left)),
            JumpClass::Small => small.push(f.eval(&add(left, &j.y)) - f.eval(left)),
        }
    }

    let mut local = Vec::with_capacity(m);
    for i in 0..m {
        let values: Vec<f64> = (0..=n)
            .map(|k| {
                let anchor = p.nongaussian.left(k);
                let lifted = Lifted { f, decomp, anchor };
                op_ai(&lifted, i, p.brownian.value(k), ctx)
            })
            .collect();
        local.push(forward_backward_from_values(&values, &p.brownian, i).value());
    }

    let lhs = f.eval(p.x.value(n)) - f.eval(p.x.value(0));
    PathTerms {
        lhs,
        terms: vec![
            0.0,
            drift,
            tree_sum(&brownian),
            tree_sum(&big),
            tree_sum(&small) - compensator,
            -tree_sum(&local),
            correction,
        ],
    }
}
