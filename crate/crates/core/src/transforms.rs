//! Stop rules, the hazard transform `Lambda` and the exponential-tilt
//! transforms `h^Lambda` / `h^F`.
//!
//! A stop rule `lambda` triggers when the process falls to `lambda(running
//! max)`. Its hazard is `Lambda(x) = ∫_start^x ds(y) / (s(y) - s(lambda(y)))`
//! where `s` is the identity for local martingales and the scale function for
//! diffusions. Both `Lambda` and the class-Σ `F(x) = ∫_0^x f` implement
//! [`Hazard`], and the tilt transform is computed once for both.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::func::Func;
use crate::numerics::{integrate, sum_pieces, QuadratureResult};
use crate::scale::ScaleTable;

const REL_TOL: f64 = 1e-11;
const ABS_TOL: f64 = 1e-14;
// Tilted pieces nest a hazard quadrature inside the integrand, so they ask
// for less than the hazard itself delivers.
const PIECE_REL_TOL: f64 = 1e-9;
// exp(-745) underflows to zero.
const NEGLIGIBLE_DECAY: f64 = 745.0;

#[derive(Debug, Clone)]
pub enum StopRule {
    /// `lambda == c`: the price falls to the level `c`.
    DownfallTo(f64),
    /// `lambda(y) = y - c`: the drawdown reaches `c > 0`.
    FixedDrawdown(f64),
    /// `lambda(y) = (1 - c) y`: the relative drawdown reaches `c` in `(0, 1]`.
    RelativeDrawdown(f64),
    /// Hitting an upper level `K`; only meaningful for path simulation.
    UpperTarget(f64),
    Custom(Func),
}

impl StopRule {
    /// `lambda(ybar)`; `NaN` for [`StopRule::UpperTarget`].
    pub fn boundary(&self, ybar: f64) -> f64 {
        match self {
            StopRule::DownfallTo(c) => *c,
            StopRule::FixedDrawdown(c) => ybar - c,
            StopRule::RelativeDrawdown(c) => (1.0 - c) * ybar,
            StopRule::UpperTarget(_) => f64::NAN,
            StopRule::Custom(f) => f.eval(ybar),
        }
    }

    /// `lambda(ybar)`, checked against `lambda(ybar) < ybar`.
    pub fn checked_boundary(&self, ybar: f64) -> Result<f64> {
        let l = self.boundary(ybar);
        if l.is_nan() {
            return Err(Error::RuleViolation(format!("{self:?} has no boundary at {ybar}")));
        }
        if l >= ybar {
            return Err(Error::RuleViolation(format!(
                "lambda({ybar}) = {l} is not below the running maximum"
            )));
        }
        Ok(l)
    }

    pub fn is_closed_form(&self) -> bool {
        matches!(
            self,
            StopRule::DownfallTo(_) | StopRule::FixedDrawdown(_) | StopRule::RelativeDrawdown(_)
        )
    }
}

/// What the rule is measured against.
#[derive(Debug, Clone)]
pub enum Base {
    /// A continuous local martingale started at `start`; `s` is the identity.
    Martingale { start: f64 },
    /// A diffusion with the given scale table, started at its `y0`.
    Diffusion(Arc<ScaleTable>),
}

impl Base {
    pub fn start(&self) -> f64 {
        match self {
            Base::Martingale { start } => *start,
            Base::Diffusion(t) => t.spec().y0,
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Base::Martingale { .. } => f64::NEG_INFINITY,
            Base::Diffusion(t) => t.spec().lo,
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Base::Martingale { .. } => f64::INFINITY,
            Base::Diffusion(t) => t.spec().hi,
        }
    }

    /// The scale in its canonical normalization (`c = 0`, `d = 1`). Every
    /// formula uses only ratios of scale differences, so this choice drops out.
    pub fn s(&self, x: f64) -> Result<f64> {
        match self {
            Base::Martingale { .. } => Ok(x),
            Base::Diffusion(t) => t.raw(x),
        }
    }

    /// `(s(x), s'(x))`.
    pub fn s_with_density(&self, x: f64) -> Result<(f64, f64)> {
        match self {
            Base::Martingale { .. } => Ok((x, 1.0)),
            Base::Diffusion(t) => t.raw_with_density(x),
        }
    }

    /// `s(b) - s(a)` without cancellation far out along the interval.
    pub fn s_diff(&self, a: f64, b: f64) -> Result<f64> {
        match self {
            Base::Martingale { .. } => Ok(b - a),
            Base::Diffusion(t) => t.raw_diff(a, b),
        }
    }

    pub fn table(&self) -> Option<&Arc<ScaleTable>> {
        match self {
            Base::Martingale { .. } => None,
            Base::Diffusion(t) => Some(t),
        }
    }
}

/// A cumulative hazard `H` on `[origin, sup)` with density `rate`.
pub trait Hazard {
    fn origin(&self) -> f64;
    fn sup(&self) -> f64;
    fn rate(&self, y: f64) -> Result<f64>;
    /// `H(b) - H(a)` for `origin <= a <= b < sup`.
    fn increment(&self, a: f64, b: f64) -> Result<f64>;
    /// `H(sup) - H(origin)`, `+inf` when the hazard diverges.
    fn total(&self) -> Result<f64>;
}

fn numeric_increment<H: Hazard + ?Sized>(hz: &H, a: f64, b: f64) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let r = integrate(|y| hz.rate(y).unwrap_or(f64::NAN), a, b, REL_TOL, ABS_TOL)?;
    Ok(r.value)
}

/// Edge `k` of the geometric partition of `[from, sup)`; `w` sets the first
/// piece width when `sup` is infinite.
fn geometric_edge(from: f64, sup: f64, w: f64, k: usize) -> f64 {
    if sup.is_finite() {
        sup - (sup - from) * 0.5f64.powi(k as i32)
    } else {
        from + w * (2f64.powi(k as i32) - 1.0)
    }
}

fn first_width<H: Hazard + ?Sized>(hz: &H, from: f64) -> f64 {
    match hz.rate(from) {
        Ok(r) if r.is_finite() && r > 0.0 => (1.0 / r).clamp(1e-6, 1e6),
        _ => from.abs().max(1.0),
    }
}

/// `H(sup) - H(from)` summed over geometric pieces; `+inf` on divergence.
///
/// Increments are positive, so the sum converges once they fall below a
/// relative floor. Pieces that stop shrinking (a log-type singularity at a
/// finite end, or a growing hazard at infinity) mean divergence.
fn tail_increment<H: Hazard + ?Sized>(hz: &H, from: f64) -> Result<f64> {
    const MAX_PIECES: usize = 64;
    let sup = hz.sup();
    let w = first_width(hz, from);
    let mut sum = 0.0;
    let mut last = f64::INFINITY;
    let mut quiet = 0;
    let mut growing = 0;
    for k in 0..MAX_PIECES {
        let a = geometric_edge(from, sup, w, k);
        let b = geometric_edge(from, sup, w, k + 1);
        if b <= a {
            break;
        }
        let v = hz.increment(a, b)?;
        sum += v;
        if !sum.is_finite() {
            return Ok(f64::INFINITY);
        }
        growing = if v >= 0.999 * last { growing + 1 } else { 0 };
        if growing >= 6 {
            return Ok(f64::INFINITY);
        }
        last = v;
        if v <= 1e-15f64.max(1e-13 * sum) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(sum);
            }
        } else {
            quiet = 0;
        }
    }
    if last <= 1e-8 * sum {
        Ok(sum)
    } else {
        Ok(f64::INFINITY)
    }
}

/// `Lambda` for a stop rule over a base process.
#[derive(Debug)]
pub struct LambdaTransform {
    rule: StopRule,
    base: Base,
    domain_sup: f64,
    total: OnceLock<Result<f64>>,
}

impl LambdaTransform {
    pub fn new(rule: StopRule, base: Base) -> Result<Self> {
        let start = base.start();
        match &rule {
            StopRule::DownfallTo(c) if !(*c < start) => {
                return Err(Error::RuleViolation(format!(
                    "downfall level {c} must be below the start {start}"
                )))
            }
            StopRule::FixedDrawdown(c) if !(*c > 0.0) => {
                return Err(Error::RuleViolation(format!("drawdown size {c} must be positive")))
            }
            StopRule::RelativeDrawdown(c) if !(*c > 0.0 && *c <= 1.0) => {
                return Err(Error::RuleViolation(format!(
                    "relative drawdown {c} must lie in (0, 1]"
                )))
            }
            StopRule::RelativeDrawdown(_) if !(start > 0.0) => {
                return Err(Error::RuleViolation(format!(
                    "relative drawdowns need a positive start, got {start}"
                )))
            }
            StopRule::UpperTarget(k) => {
                return Err(Error::RuleViolation(format!(
                    "upper target {k} is a hitting level, not a drawdown boundary"
                )))
            }
            _ => {}
        }
        let domain_sup = base.upper();
        let t = LambdaTransform {
            rule,
            base,
            domain_sup,
            total: OnceLock::new(),
        };
        t.boundary(start)?;
        Ok(t)
    }

    pub fn martingale(rule: StopRule, start: f64) -> Result<Self> {
        LambdaTransform::new(rule, Base::Martingale { start })
    }

    /// Restricts the hazard to `[start, a)`.
    pub fn with_domain_sup(mut self, a: f64) -> Result<Self> {
        if !(a > self.base.start() && a <= self.base.upper()) {
            return Err(Error::PreconditionViolated(format!(
                "domain supremum {a} must lie in ({}, {}]",
                self.base.start(),
                self.base.upper()
            )));
        }
        self.domain_sup = a;
        self.total = OnceLock::new();
        Ok(self)
    }

    pub fn rule(&self) -> &StopRule {
        &self.rule
    }

    pub fn base(&self) -> &Base {
        &self.base
    }

    pub fn start(&self) -> f64 {
        self.base.start()
    }

    pub fn domain_sup(&self) -> f64 {
        self.domain_sup
    }

    /// `lambda(ybar)`, checked to lie strictly below `ybar`. Levels below the
    /// state interval are clamped to its lower end, which the process cannot
    /// cross.
    pub fn boundary(&self, ybar: f64) -> Result<f64> {
        let l = self.rule.checked_boundary(ybar)?;
        Ok(l.max(self.base.lower()))
    }

    /// `s(ybar) - s(lambda(ybar))`.
    pub fn gap(&self, ybar: f64) -> Result<f64> {
        let l = self.boundary(ybar)?;
        Ok(self.base.s(ybar)? - self.base.s(l)?)
    }

    fn closed_form(&self) -> bool {
        matches!(self.base, Base::Martingale { .. }) && self.rule.is_closed_form()
    }

    fn closed_form_lambda(&self, x: f64) -> f64 {
        let m = self.start();
        match self.rule {
            StopRule::DownfallTo(c) => ((x - c) / (m - c)).ln(),
            StopRule::FixedDrawdown(c) => (x - m) / c,
            StopRule::RelativeDrawdown(c) => (x / m).ln() / c,
            _ => unreachable!("closed form only for the three trigger rules"),
        }
    }

    /// Whether `Lambda` diverges at the domain supremum.
    pub fn total_hazard(&self) -> Result<f64> {
        self.total()
    }

    /// `Lambda(b) - Lambda(a)` for `a <= b <= domain_sup`.
    pub fn between(&self, a: f64, b: f64) -> Result<f64> {
        if b >= self.domain_sup {
            let total = self.total()?;
            if total.is_infinite() {
                return Ok(f64::INFINITY);
            }
            return Ok(total - big_lambda(self, a)?);
        }
        self.increment(a, b)
    }

    pub fn require_divergent(&self) -> Result<()> {
        let t = self.total()?;
        if t.is_finite() {
            Err(Error::LambdaFinite(t))
        } else {
            Ok(())
        }
    }
}

impl Hazard for LambdaTransform {
    fn origin(&self) -> f64 {
        self.start()
    }

    fn sup(&self) -> f64 {
        self.domain_sup
    }

    fn rate(&self, y: f64) -> Result<f64> {
        let l = self.boundary(y)?;
        match &self.base {
            Base::Martingale { .. } => Ok(1.0 / (y - l)),
            Base::Diffusion(t) => {
                let dens = t.density(y)?;
                Ok(dens / t.raw_diff(l, y)?)
            }
        }
    }

    fn increment(&self, a: f64, b: f64) -> Result<f64> {
        if self.closed_form() {
            return Ok(self.closed_form_lambda(b) - self.closed_form_lambda(a));
        }
        numeric_increment(self, a, b)
    }

    fn total(&self) -> Result<f64> {
        self.total
            .get_or_init(|| {
                if self.closed_form() && self.domain_sup == f64::INFINITY {
                    return Ok(f64::INFINITY);
                }
                tail_increment(self, self.start())
            })
            .clone()
    }
}

/// `Lambda(x)` for `x` in `[start, domain_sup]`; `+inf` when it diverges.
pub fn big_lambda(t: &LambdaTransform, x: f64) -> Result<f64> {
    let start = t.start();
    if !(x >= start && x <= t.domain_sup()) {
        return Err(Error::PreconditionViolated(format!(
            "Lambda evaluated at {x} outside [{start}, {}]",
            t.domain_sup()
        )));
    }
    if x == t.domain_sup() {
        return t.total();
    }
    if t.closed_form() {
        return Ok(t.closed_form_lambda(x));
    }
    t.increment(start, x)
}

/// The class-Σ hazard `F(x) = ∫_0^x f`, with `f` vanishing beyond `support_end`.
#[derive(Debug)]
pub struct SigmaTransform {
    f: Func,
    support_end: f64,
    total: OnceLock<Result<f64>>,
}

impl SigmaTransform {
    pub fn new(f: Func) -> Self {
        SigmaTransform {
            f,
            support_end: f64::INFINITY,
            total: OnceLock::new(),
        }
    }

    /// `f` supported on `[0, a)`; the bounded-support variant.
    pub fn with_support(f: Func, a: f64) -> Result<Self> {
        if !(a > 0.0) {
            return Err(Error::PreconditionViolated(format!("support end {a} must be positive")));
        }
        Ok(SigmaTransform {
            f,
            support_end: a,
            total: OnceLock::new(),
        })
    }

    pub fn f(&self) -> &Func {
        &self.f
    }

    pub fn require_divergent(&self) -> Result<()> {
        let t = self.total()?;
        if t.is_finite() {
            Err(Error::LambdaFinite(t))
        } else {
            Ok(())
        }
    }
}

impl Hazard for SigmaTransform {
    fn origin(&self) -> f64 {
        0.0
    }

    fn sup(&self) -> f64 {
        self.support_end
    }

    fn rate(&self, y: f64) -> Result<f64> {
        if y >= self.support_end {
            return Ok(0.0);
        }
        let v = self.f.eval(y);
        if !v.is_finite() || v < 0.0 {
            return Err(Error::NonFinite(format!(
                "f({y}) = {v}; f must be finite and non-negative"
            )));
        }
        Ok(v)
    }

    fn increment(&self, a: f64, b: f64) -> Result<f64> {
        numeric_increment(self, a, b.min(self.support_end))
    }

    fn total(&self) -> Result<f64> {
        self.total.get_or_init(|| tail_increment(self, 0.0)).clone()
    }
}

/// `F(x) = ∫_0^x f(y) dy`.
pub fn big_f(t: &SigmaTransform, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::PreconditionViolated(format!("F evaluated at {x} < 0")));
    }
    if x >= t.sup() {
        return t.total();
    }
    t.increment(0.0, x)
}

/// `∫_a^b h(y) exp(-(H(y) - H(a))) dH(y)` over a stretch free of breakpoints.
fn tilted_piece<H: Hazard + ?Sized>(hz: &H, h: &Func, a: f64, b: f64) -> Result<QuadratureResult> {
    let integrand = |y: f64| {
        let rate = match hz.rate(y) {
            Ok(r) => r,
            Err(_) => return f64::NAN,
        };
        let dh = match hz.increment(a, y) {
            Ok(v) => v,
            Err(_) => return f64::NAN,
        };
        let weight = (-dh).exp() * rate;
        if weight == 0.0 {
            return 0.0;
        }
        h.eval(y) * weight
    };
    integrate(integrand, a, b, PIECE_REL_TOL, ABS_TOL)
}

/// `∫_a^b h exp(-(H(y) - H(a))) dH(y)` split at the breakpoints of `h`.
fn tilted_segment<H: Hazard + ?Sized>(hz: &H, h: &Func, a: f64, b: f64) -> Result<f64> {
    let mut cuts: Vec<f64> = h.breakpoints().iter().copied().filter(|&p| p > a && p < b).collect();
    cuts.push(b);
    let mut cursor = a;
    let mut decay = 0.0f64;
    let mut sum = 0.0;
    for cut in cuts {
        let piece = tilted_piece(hz, h, cursor, cut)?;
        sum += (-decay).exp() * piece.value;
        decay += hz.increment(cursor, cut)?;
        cursor = cut;
    }
    Ok(sum)
}

/// `h^H(x) = exp(H(x)) ∫_x^sup h(y) exp(-H(y)) dH(y)`.
pub fn tilt_transform<H: Hazard + ?Sized>(hz: &H, h: &Func, x: f64) -> Result<f64> {
    let total = hz.total()?;
    if total.is_finite() {
        return Err(Error::LambdaFinite(total));
    }
    let sup = hz.sup();
    if !(x >= hz.origin() && x < sup) {
        return Err(Error::PreconditionViolated(format!(
            "transform evaluated at {x} outside [{}, {sup})",
            hz.origin()
        )));
    }
    // Finite pieces up to the last breakpoint, then a geometric tail.
    let last_cut = h
        .breakpoints()
        .iter()
        .copied()
        .filter(|&p| p > x && p < sup)
        .fold(x, f64::max);
    let head = if last_cut > x {
        tilted_segment(hz, h, x, last_cut)?
    } else {
        0.0
    };
    let head_decay = hz.increment(x, last_cut)?;
    let w = first_width(hz, last_cut);
    let mut decay: f64 = head_decay;
    let tail = sum_pieces(
        |k| {
            let a = geometric_edge(last_cut, sup, w, k);
            let b = geometric_edge(last_cut, sup, w, k + 1);
            if b <= a {
                return Ok(None);
            }
            if decay > NEGLIGIBLE_DECAY {
                return Ok(Some(QuadratureResult {
                    value: 0.0,
                    error_estimate: 0.0,
                    evaluations: 0,
                }));
            }
            let piece = match tilted_piece(hz, h, a, b) {
                // Deep in the tail rounding noise can stall the quadrature;
                // what is left there is below the reporting precision.
                Err(Error::NonConvergent(_) | Error::NonFinite(_)) if (-decay).exp() < 1e-9 => return Ok(None),
                other => other?,
            };
            let scaled = (-decay).exp() * piece.value;
            decay += hz.increment(a, b)?;
            Ok(Some(QuadratureResult { value: scaled, ..piece }))
        },
        1e-11,
        1e-14,
    )?;
    match tail {
        Some(t) => Ok(head + t.value),
        None => Err(Error::NotIntegrable(format!(
            "∫ |{}| exp(-H) dH does not settle beyond {last_cut}",
            h.label()
        ))),
    }
}

/// `h^Lambda(x)` for a stop-rule transform.
pub fn h_lambda(t: &LambdaTransform, h: &Func, x: f64) -> Result<f64> {
    tilt_transform(t, h, x)
}

/// `h^F(x)` for a class-Σ transform.
pub fn h_f(t: &SigmaTransform, h: &Func, x: f64) -> Result<f64> {
    tilt_transform(t, h, x)
}

/// `h^H` tabulated at anchors and extended between them through
/// `h^H(x1) = exp(-(H(x2) - H(x1))) h^H(x2) + ∫_{x1}^{x2} h exp(-(H - H(x1))) dH`,
/// so each query only integrates up to the next anchor.
pub struct TiltTable<'a, H: Hazard + ?Sized> {
    hz: &'a H,
    h: Func,
    anchors: Vec<f64>,
    values: Vec<f64>,
}

impl<'a, H: Hazard + ?Sized> TiltTable<'a, H> {
    pub fn new(hz: &'a H, h: Func, mut anchors: Vec<f64>) -> Result<Self> {
        anchors.retain(|a| a.is_finite() && *a >= hz.origin() && *a < hz.sup());
        anchors.sort_by(f64::total_cmp);
        anchors.dedup();
        let mut values = vec![0.0; anchors.len()];
        if let Some(&last) = anchors.last() {
            values[anchors.len() - 1] = tilt_transform(hz, &h, last)?;
        }
        for i in (0..anchors.len().saturating_sub(1)).rev() {
            let (a, b) = (anchors[i], anchors[i + 1]);
            values[i] = (-hz.increment(a, b)?).exp() * values[i + 1] + tilted_segment(hz, &h, a, b)?;
        }
        Ok(TiltTable { hz, h, anchors, values })
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        let idx = self.anchors.partition_point(|&a| a <= x);
        if idx < self.anchors.len() {
            let b = self.anchors[idx];
            return Ok((-self.hz.increment(x, b)?).exp() * self.values[idx] + tilted_segment(self.hz, &self.h, x, b)?);
        }
        match self.anchors.last() {
            Some(&a) if a == x => Ok(*self.values.last().expect("nonempty")),
            _ => tilt_transform(self.hz, &self.h, x),
        }
    }
}
