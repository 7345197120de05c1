use std::fmt;
use std::sync::Arc;

use crate::expr::Expr;

/// A shareable real function of one variable, with the points where it is
/// known to jump. Domain faults surface as NaN, which the quadrature kernel
/// reports as [`crate::Error::NonFinite`].
#[derive(Clone)]
pub struct Func {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    breakpoints: Vec<f64>,
    label: String,
}

impl Func {
    pub fn new(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Func {
            f: Arc::new(f),
            breakpoints: Vec::new(),
            label: label.into(),
        }
    }

    pub fn constant(c: f64) -> Self {
        Func::new(format!("{c}"), move |_| c)
    }

    /// `1` on `(lo, hi]`, `0` elsewhere.
    pub fn indicator(lo: f64, hi: f64) -> Self {
        let mut f = Func::new(format!("indicator({lo}, {hi})"), move |y| {
            if lo < y && y <= hi {
                1.0
            } else {
                0.0
            }
        });
        f.breakpoints = [lo, hi].into_iter().filter(|b| b.is_finite()).collect();
        f
    }

    pub fn from_expr(expr: Expr) -> Self {
        let breakpoints = expr.breakpoints();
        let label = expr.to_string();
        Func {
            f: Arc::new(move |y| expr.eval(y).unwrap_or(f64::NAN)),
            breakpoints,
            label,
        }
    }

    pub fn with_breakpoints(mut self, mut points: Vec<f64>) -> Self {
        points.retain(|p| p.is_finite());
        points.sort_by(f64::total_cmp);
        points.dedup();
        self.breakpoints = points;
        self
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl fmt::Debug for Func {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Func({})", self.label)
    }
}
