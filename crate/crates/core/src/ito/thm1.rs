use super::{build_report, dot, run_ensemble, trapezoid, Formula, ItoError, ItoResidualReport, PathTerms, RunSettings};
use crate::functional::FunctionalHandle;
use crate::levy::{LevyModel, SimulatedLevyPath};
use crate::paths::Vector;
use crate::stats::tree_sum;

/// Verifies the functional Itô formula for a continuous (Brownian with
/// drift) model and `F ∈ C^{1,2}`: horizontal term by the trapezoid rule along the frozen path,
/// `∇F · dX` as a left-point sum (split into drift and Brownian parts), and
/// `½ tr(∇²F Σ) dt` as a left-point sum against `[X](t) = Σ t`.
pub fn verify_thm1(f: &FunctionalHandle, model: &LevyModel, settings: &RunSettings) -> Result<ItoResidualReport, ItoError> {
    if model.has_jumps() {
        return Err(ItoError::Hypothesis("the model has jumps; the continuous formula needs ν = 0".into()));
    }
    if f.dim() != model.dim() {
        return Err(ItoError::DimensionMismatch { model: model.dim(), functional: f.dim() });
    }
    if f.class().space_order() < 2 || f.class().time_order() < 1 {
        return Err(ItoError::Hypothesis(format!("{} is {:?}, C12 is required", f.name(), f.class())));
    }
    let t = settings.t();
    let paths = run_ensemble(model, settings, |p| path_terms(f, model, p, t))?;
    Ok(build_report(Formula::Thm1, f.name(), settings, paths, None))
}

fn path_terms(f: &FunctionalHandle, model: &LevyModel, p: &SimulatedLevyPath, t: f64) -> PathTerms {
    let grid = p.grid();
    let knots = grid.knots();
    let n = grid.locate(t);
    let d = model.dim();
    let decomp = model.decomp();
    let m = decomp.rank;
    let sigma = model.sigma();
    let mu = model.drift();

    let mut horizontal = Vec::with_capacity(n + 1);
    let mut frozen_end = vec![0.0; n + 1];
    let mut drift = Vec::with_capacity(n);
    let mut brownian = Vec::with_capacity(n);
    let mut qv = Vec::with_capacity(n);
    let mut g: Vector = smallvec::smallvec![0.0; d];
    let mut h = vec![0.0; d * d];
    let mut sdb: Vector = smallvec::smallvec![0.0; d];
    for (k, &s) in knots.iter().enumerate().take(n + 1) {
        let v = p.x.stopped_view(s);
        horizontal.push(f.horizontal_value(s, &v));
        if k == n {
            break;
        }
        frozen_end[k + 1] = f.horizontal_value(knots[k + 1], &v);
        let dt = knots[k + 1] - s;
        f.gradient_into(s, &v, &mut g);
        drift.push(dot(&g, mu) * dt);
        if m > 0 {
            let db: Vector = p.brownian.value(k + 1).iter().zip(p.brownian.value(k)).map(|(a, b)| a - b).collect();
            decomp.apply_sigma_half(&db, &mut sdb);
            brownian.push(dot(&g, &sdb));
        }
        f.hessian_into(s, &v, &mut h);
        qv.push(0.5 * dot(&h, sigma) * dt);
    }
    let tn = knots[n];
    let lhs = f.eval(tn, &p.x.stopped_view(tn)) - f.eval(0.0, &p.x.stopped_view(0.0));
    PathTerms {
        lhs,
        terms: vec![
            trapezoid(knots, &horizontal, &frozen_end, n),
            tree_sum(&drift),
            tree_sum(&brownian),
            tree_sum(&qv),
        ],
    }
}
