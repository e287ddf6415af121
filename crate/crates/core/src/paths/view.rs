use super::{CadlagPath, Vector};

/// A borrowed path frozen at `stop`: it follows `base` on `[0, stop)` and
/// equals `terminal` on `[stop, T]`.
///
/// Stopped and perturbed paths are only ever consumed by functionals, so
/// they are represented without copying the base path. The full path is the
/// view with `stop = T` and `terminal = x(T)`.
#[derive(Debug, Clone)]
pub struct PathView<'a> {
    base: &'a CadlagPath,
    stop: f64,
    terminal: Vector,
}

impl<'a> PathView<'a> {
    pub(crate) fn new(base: &'a CadlagPath, stop: f64, terminal: Vector) -> Self {
        debug_assert_eq!(terminal.len(), base.dim());
        Self { base, stop, terminal }
    }

    pub fn base(&self) -> &'a CadlagPath {
        self.base
    }

    pub fn stop(&self) -> f64 {
        self.stop
    }

    pub fn horizon(&self) -> f64 {
        self.base.horizon()
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    /// Value held from `stop` onward.
    pub fn terminal(&self) -> &[f64] {
        &self.terminal
    }

    pub fn coord(&self, s: f64, i: usize) -> f64 {
        if s >= self.stop {
            self.terminal[i]
        } else {
            self.base.at(s)[i]
        }
    }

    pub fn at(&self, s: f64) -> Vector {
        if s >= self.stop {
            self.terminal.clone()
        } else {
            self.base.at(s).into()
        }
    }

    /// Left limit of the viewed path at `s`.
    pub fn left_at(&self, s: f64) -> Vector {
        if s > self.stop || (s == self.stop && s == 0.0) {
            self.terminal.clone()
        } else {
            self.base.left_limit(s).into()
        }
    }

    /// `∫_0^u x^i(r) dr` of the viewed path.
    pub fn integral(&self, i: usize, u: f64) -> f64 {
        let u = u.clamp(0.0, self.horizon());
        if u <= self.stop {
            self.base.integral(i, u)
        } else {
            self.base.integral(i, self.stop) + (u - self.stop) * self.terminal[i]
        }
    }

    /// `sup_{r <= u} x^i(r)` of the viewed path.
    pub fn sup(&self, i: usize, u: f64) -> f64 {
        self.extremum(i, u, CadlagPath::prefix_max, f64::max)
    }

    pub fn inf(&self, i: usize, u: f64) -> f64 {
        self.extremum(i, u, CadlagPath::prefix_min, f64::min)
    }

    fn extremum(
        &self,
        i: usize,
        u: f64,
        prefix: fn(&CadlagPath, usize, usize) -> f64,
        pick: fn(f64, f64) -> f64,
    ) -> f64 {
        if u < self.stop {
            return prefix(self.base, i, self.base.grid().locate(u));
        }
        match self.base.grid().before(self.stop) {
            Some(k) => pick(prefix(self.base, i, k), self.terminal[i]),
            None => self.terminal[i],
        }
    }

    /// The view stopped at `t`; a no-op if `t >= stop`.
    pub fn stopped(&self, t: f64) -> PathView<'a> {
        if t >= self.stop {
            self.clone()
        } else {
            PathView::new(self.base, t, self.base.at(t).into())
        }
    }

    /// The view frozen at its left limit at `t`.
    pub fn left_stopped(&self, t: f64) -> PathView<'a> {
        if t > self.stop {
            self.clone()
        } else {
            PathView::new(self.base, t, self.left_at(t))
        }
    }

    /// Adds `h` to the terminal value (vertical perturbation at `stop`).
    pub fn perturbed(&self, h: &[f64]) -> PathView<'a> {
        let terminal = self.terminal.iter().zip(h).map(|(a, b)| a + b).collect();
        PathView::new(self.base, self.stop, terminal)
    }

    /// Same history, new terminal value.
    pub fn with_terminal(&self, v: &[f64]) -> PathView<'a> {
        PathView::new(self.base, self.stop, v.into())
    }

    /// Materialises the view as an owned path.
    pub fn to_path(&self) -> CadlagPath {
        self.base.frozen(self.stop, &self.terminal, true)
    }
}
