//! Named functionals and scalar fields selectable from configuration.

use super::{FunctionalHandle, Regularity, ScalarField};
use serde::{Deserialize, Serialize};

/// Parameter block shared by the functional and field catalogs. Unused
/// fields are ignored by entries that do not need them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coord: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("unknown {kind} {name:?}; available: {available}")]
    Unknown { kind: &'static str, name: String, available: String },
    #[error("{name}: {message}")]
    BadParams { name: String, message: String },
}

pub const FUNCTIONALS: &[&str] = &[
    "constant",
    "terminal",
    "terminal_identity",
    "linear",
    "quadratic",
    "running_integral",
    "running_max",
    "time_weighted_terminal",
    "integral_plus_linear",
    "anticipative_terminal",
];

pub const FIELDS: &[&str] = &[
    "constant",
    "identity",
    "square",
    "half_square",
    "norm_sq",
    "half_norm_sq",
    "linear",
    "product",
    "monomial",
    "sin",
    "cos",
    "exp",
];

fn bad(name: &str, message: impl Into<String>) -> CatalogError {
    CatalogError::BadParams { name: name.into(), message: message.into() }
}

fn coord(name: &str, p: &Params, dim: usize) -> Result<usize, CatalogError> {
    let i = p.coord.unwrap_or(0);
    if i >= dim {
        return Err(bad(name, format!("coord {i} out of range for dimension {dim}")));
    }
    Ok(i)
}

fn vector_c(name: &str, p: &Params, dim: usize) -> Result<Vec<f64>, CatalogError> {
    let c = p.c.clone().ok_or_else(|| bad(name, "missing vector parameter c"))?;
    if c.len() != dim {
        return Err(bad(name, format!("c has length {}, expected {dim}", c.len())));
    }
    if c.iter().any(|v| !v.is_finite()) {
        return Err(bad(name, "c must be finite"));
    }
    Ok(c)
}

/// Builds a scalar field on `ℝ^dim`.
pub fn field(name: &str, p: &Params, dim: usize) -> Result<ScalarField, CatalogError> {
    let f = match name {
        "constant" => {
            let v = p.value.unwrap_or(0.0);
            ScalarField::new(name, dim, 2, move |_| v)
                .with_gradient(|_, g| g.fill(0.0))
                .with_hessian(|_, h| h.fill(0.0))
        }
        "identity" => {
            let i = coord(name, p, dim)?;
            ScalarField::new(name, dim, 2, move |x| x[i])
                .with_gradient(move |_, g| {
                    g.fill(0.0);
                    g[i] = 1.0;
                })
                .with_hessian(|_, h| h.fill(0.0))
        }
        "square" | "half_square" => {
            let i = coord(name, p, dim)?;
            let a = if name == "square" { 1.0 } else { 0.5 };
            ScalarField::new(name, dim, 2, move |x| a * x[i] * x[i])
                .with_gradient(move |x, g| {
                    g.fill(0.0);
                    g[i] = 2.0 * a * x[i];
                })
                .with_hessian(move |_, h| {
                    h.fill(0.0);
                    h[i * dim + i] = 2.0 * a;
                })
        }
        "norm_sq" | "half_norm_sq" => {
            let a = if name == "norm_sq" { 1.0 } else { 0.5 };
            ScalarField::new(name, dim, 2, move |x| a * x.iter().map(|v| v * v).sum::<f64>())
                .with_gradient(move |x, g| {
                    for (g, v) in g.iter_mut().zip(x) {
                        *g = 2.0 * a * v;
                    }
                })
                .with_hessian(move |_, h| {
                    h.fill(0.0);
                    for i in 0..dim {
                        h[i * dim + i] = 2.0 * a;
                    }
                })
        }
        "linear" => {
            let c = vector_c(name, p, dim)?;
            let cg = c.clone();
            ScalarField::new(name, dim, 2, move |x| c.iter().zip(x).map(|(a, b)| a * b).sum())
                .with_gradient(move |_, g| g.copy_from_slice(&cg))
                .with_hessian(|_, h| h.fill(0.0))
        }
        "product" => {
            let cs = p.coords.clone().ok_or_else(|| bad(name, "missing coords [i, j]"))?;
            if cs.len() != 2 || cs.iter().any(|&c| c >= dim) || cs[0] == cs[1] {
                return Err(bad(name, "coords must be two distinct indices within the dimension"));
            }
            let (i, j) = (cs[0], cs[1]);
            ScalarField::new(name, dim, 2, move |x| x[i] * x[j])
                .with_gradient(move |x, g| {
                    g.fill(0.0);
                    g[i] = x[j];
                    g[j] = x[i];
                })
                .with_hessian(move |_, h| {
                    h.fill(0.0);
                    h[i * dim + j] = 1.0;
                    h[j * dim + i] = 1.0;
                })
        }
        "monomial" => {
            let i = coord(name, p, dim)?;
            let n = p.power.ok_or_else(|| bad(name, "missing power"))?;
            if !(0..=16).contains(&n) {
                return Err(bad(name, "power must be in 0..=16"));
            }
            let nf = n as f64;
            ScalarField::new(name, dim, 2, move |x| x[i].powi(n))
                .with_gradient(move |x, g| {
                    g.fill(0.0);
                    g[i] = if n == 0 { 0.0 } else { nf * x[i].powi(n - 1) };
                })
                .with_hessian(move |x, h| {
                    h.fill(0.0);
                    h[i * dim + i] = if n < 2 { 0.0 } else { nf * (nf - 1.0) * x[i].powi(n - 2) };
                })
        }
        "sin" | "cos" | "exp" => {
            let i = coord(name, p, dim)?;
            let (f, df, d2f): (fn(f64) -> f64, fn(f64) -> f64, fn(f64) -> f64) = match name {
                "sin" => (f64::sin, f64::cos, |v| -v.sin()),
                "cos" => (f64::cos, |v| -v.sin(), |v| -v.cos()),
                _ => (f64::exp, f64::exp, f64::exp),
            };
            ScalarField::new(name, dim, 2, move |x| f(x[i]))
                .with_gradient(move |x, g| {
                    g.fill(0.0);
                    g[i] = df(x[i]);
                })
                .with_hessian(move |x, h| {
                    h.fill(0.0);
                    h[i * dim + i] = d2f(x[i]);
                })
        }
        _ => {
            return Err(CatalogError::Unknown { kind: "field", name: name.into(), available: FIELDS.join(", ") })
        }
    };
    Ok(f)
}

fn field_class(f: &ScalarField) -> Regularity {
    match f.order() {
        2 => Regularity::C12,
        1 => Regularity::C11,
        _ => Regularity::C00,
    }
}

/// `F(t, x) = f(x(t))`.
pub fn terminal(f: ScalarField) -> FunctionalHandle {
    let d = f.dim();
    let class = field_class(&f);
    let name = format!("terminal[{}]", f.name());
    let (fe, fg, fh) = (f.clone(), f.clone(), f.clone());
    let mut h = FunctionalHandle::new(name, d, class, move |t, x| fe.eval(&x.at(t)))
        .with_horizontal(|_, _| 0.0)
        .with_gradient(move |t, x, g| fg.gradient_into(&x.at(t), g));
    if fh.order() >= 2 {
        h = h.with_hessian(move |t, x, out| out.copy_from_slice(&fh.hessian(&x.at(t)).expect("order 2 field")));
    }
    h
}

/// `F(t, x) = t · f(x(t))`.
pub fn time_weighted_terminal(f: ScalarField) -> FunctionalHandle {
    let d = f.dim();
    let class = field_class(&f);
    let name = format!("time_weighted_terminal[{}]", f.name());
    let (fe, fd, fg, fh) = (f.clone(), f.clone(), f.clone(), f.clone());
    let mut h = FunctionalHandle::new(name, d, class, move |t, x| t * fe.eval(&x.at(t)))
        .with_horizontal(move |t, x| fd.eval(&x.at(t)))
        .with_gradient(move |t, x, g| {
            fg.gradient_into(&x.at(t), g);
            for v in g.iter_mut() {
                *v *= t;
            }
        });
    if fh.order() >= 2 {
        h = h.with_hessian(move |t, x, out| {
            let m = fh.hessian(&x.at(t)).expect("order 2 field");
            for (o, v) in out.iter_mut().zip(m) {
                *o = t * v;
            }
        });
    }
    h
}

/// `F(t, x) = ∫_0^t x^i(s) ds`; `DF = x^i(t)`, `∇F = 0`.
pub fn running_integral(dim: usize, i: usize) -> FunctionalHandle {
    FunctionalHandle::new("running_integral", dim, Regularity::C12, move |t, x| x.integral(i, t))
        .with_horizontal(move |t, x| x.coord(t, i))
        .with_gradient(|_, _, g| g.fill(0.0))
        .with_hessian(|_, _, h| h.fill(0.0))
}

/// `F(t, x) = max_{s <= t} x^i(s)`. No analytic derivatives.
pub fn running_max(dim: usize, i: usize) -> FunctionalHandle {
    FunctionalHandle::new("running_max", dim, Regularity::C00, move |t, x| x.sup(i, t))
}

/// `F(t, x) = ⟨c, x(t)⟩`.
pub fn linear(c: Vec<f64>) -> FunctionalHandle {
    let d = c.len();
    let cg = c.clone();
    FunctionalHandle::new("linear", d, Regularity::C12, move |t, x| {
        c.iter().enumerate().map(|(i, a)| a * x.coord(t, i)).sum()
    })
    .with_horizontal(|_, _| 0.0)
    .with_gradient(move |_, _, g| g.copy_from_slice(&cg))
    .with_hessian(|_, _, h| h.fill(0.0))
}

pub fn constant(dim: usize, v: f64) -> FunctionalHandle {
    FunctionalHandle::new("constant", dim, Regularity::C12, move |_, _| v)
        .with_horizontal(|_, _| 0.0)
        .with_gradient(|_, _, g| g.fill(0.0))
        .with_hessian(|_, _, h| h.fill(0.0))
}

/// `F(t, x) = x^i(T)`: reads the future, used to exercise the
/// non-anticipativity check.
pub fn anticipative_terminal(dim: usize, i: usize) -> FunctionalHandle {
    FunctionalHandle::new("anticipative_terminal", dim, Regularity::C00, move |_, x| x.coord(x.horizon(), i))
}

/// Builds a catalog functional on paths of dimension `dim`.
pub fn functional(name: &str, p: &Params, dim: usize) -> Result<FunctionalHandle, CatalogError> {
    let h = match name {
        "constant" => constant(dim, p.value.unwrap_or(1.0)),
        "terminal" => {
            let fname = p.field.as_deref().ok_or_else(|| bad(name, "missing field"))?;
            terminal(field(fname, p, dim)?)
        }
        "terminal_identity" => terminal(field("identity", p, dim)?).renamed("terminal_identity"),
        "linear" => linear(vector_c(name, p, dim)?),
        "quadratic" => terminal(field("norm_sq", p, dim)?).renamed("quadratic"),
        "running_integral" => running_integral(dim, coord(name, p, dim)?),
        "running_max" => running_max(dim, coord(name, p, dim)?),
        "time_weighted_terminal" => {
            let fname = p.field.as_deref().ok_or_else(|| bad(name, "missing field"))?;
            time_weighted_terminal(field(fname, p, dim)?)
        }
        "integral_plus_linear" => {
            running_integral(dim, coord(name, p, dim)?).plus(&linear(vector_c(name, p, dim)?)).renamed(name)
        }
        "anticipative_terminal" => anticipative_terminal(dim, coord(name, p, dim)?),
        _ => {
            return Err(CatalogError::Unknown {
                kind: "functional",
                name: name.into(),
                available: FUNCTIONALS.join(", "),
            })
        }
    };
    Ok(h)
}
