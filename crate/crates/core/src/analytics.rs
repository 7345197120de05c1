//! Closed-form conditional laws: last passage probabilities, laws of the
//! running maximum at a drawdown trigger, trigger option prices and hedges,
//! no-breach probabilities and maximum drawdown laws.
//!
//! Every formula is written in the scale `s` of the base (the identity for a
//! local martingale). Only ratios of scale differences appear, so results do
//! not depend on how the scale is normalized.

use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::func::Func;
use crate::transforms::{big_f, big_lambda, h_lambda, Base, Hazard, LambdaTransform, SigmaTransform, StopRule};

/// Current value and running maximum of the underlying.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketState {
    pub y: f64,
    pub ybar: f64,
}

impl MarketState {
    pub fn new(y: f64, ybar: f64) -> Result<Self> {
        if !(y.is_finite() && ybar.is_finite()) || ybar < y {
            return Err(Error::PreconditionViolated(format!(
                "running maximum {ybar} must be finite and at least the value {y}"
            )));
        }
        Ok(MarketState { y, ybar })
    }

    /// The state at time zero.
    pub fn at_start(m: f64) -> Self {
        MarketState { y: m, ybar: m }
    }

    pub fn drawdown(&self) -> f64 {
        self.ybar - self.y
    }

    pub fn relative_drawdown(&self) -> f64 {
        (self.ybar - self.y) / self.ybar
    }
}

/// Value `x` of a class-Σ process and its finite-variation part `a`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaState {
    pub x: f64,
    pub a: f64,
}

impl SigmaState {
    pub fn new(x: f64, a: f64) -> Result<Self> {
        if !(x >= 0.0 && a >= 0.0 && x.is_finite() && a.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "class-Σ state needs x >= 0 and a >= 0, got ({x}, {a})"
            )));
        }
        Ok(SigmaState { x, a })
    }
}

/// Scale quantities at a state: `s(ybar) - s(y)` and `s(y) - s(lambda(ybar))`
/// over their sum.
struct Split {
    above: f64,
    below: f64,
    gap: f64,
}

fn split(t: &LambdaTransform, st: &MarketState) -> Result<Split> {
    if st.ybar < t.start() {
        return Err(Error::PreconditionViolated(format!(
            "running maximum {} below the start {}",
            st.ybar,
            t.start()
        )));
    }
    let base = t.base();
    let l = t.boundary(st.ybar)?;
    let gap = base.s_diff(l, st.ybar)?;
    if !(gap > 0.0) {
        return Err(Error::RuleViolation(format!(
            "degenerate scale gap {gap} at {}",
            st.ybar
        )));
    }
    Ok(Split {
        above: base.s_diff(st.y, st.ybar)?,
        below: base.s_diff(l, st.y)?,
        gap,
    })
}

fn consistent(t: &LambdaTransform, st: &MarketState) -> Result<Split> {
    let sp = split(t, st)?;
    if sp.below < 0.0 {
        return Err(Error::RuleViolation(format!(
            "value {} already below the trigger level {}",
            st.y,
            t.boundary(st.ybar)?
        )));
    }
    Ok(sp)
}

/// `P[g <= T | F_T]` where `g` is the last time at the running maximum before
/// the trigger: `(s(ybar) - s(y)) / (s(ybar) - s(lambda(ybar)))`.
pub fn last_passage_cdf(t: &LambdaTransform, st: &MarketState) -> Result<f64> {
    t.require_divergent()?;
    let sp = consistent(t, st)?;
    Ok((sp.above / sp.gap).clamp(0.0, 1.0))
}

/// `P[running max at the trigger > x | F_T]`.
pub fn sup_survival(t: &LambdaTransform, st: &MarketState, x: f64) -> Result<f64> {
    t.require_divergent()?;
    let sp = consistent(t, st)?;
    if st.ybar > x {
        return Ok(1.0);
    }
    let decay = t.between(st.ybar, x.min(t.domain_sup()))?;
    Ok(((sp.below / sp.gap) * (-decay).exp()).clamp(0.0, 1.0))
}

/// `E[h(running max at the trigger) | F_T]` given `h(ybar)` and `h^Lambda(ybar)`.
pub fn cond_expectation_from(t: &LambdaTransform, st: &MarketState, h_bar: f64, h_lambda_bar: f64) -> Result<f64> {
    let sp = consistent(t, st)?;
    Ok((h_bar * sp.above + h_lambda_bar * sp.below) / sp.gap)
}

/// Coefficient of `ds(Y)` in the replicating strategy, given `h(ybar)` and
/// `h^Lambda(ybar)`.
pub fn hedge_from(t: &LambdaTransform, st: &MarketState, h_bar: f64, h_lambda_bar: f64) -> Result<f64> {
    let sp = split(t, st)?;
    Ok((h_lambda_bar - h_bar) / sp.gap)
}

pub fn cond_expectation_sup(t: &LambdaTransform, st: &MarketState, h: &Func) -> Result<f64> {
    let hl = h_lambda(t, h, st.ybar)?;
    cond_expectation_from(t, st, h.eval(st.ybar), hl)
}

pub fn hedge_integrand(t: &LambdaTransform, st: &MarketState, h: &Func) -> Result<f64> {
    let hl = h_lambda(t, h, st.ybar)?;
    hedge_from(t, st, h.eval(st.ybar), hl)
}

/// `P[no trigger on [T, T_K] | F_T]` for an upper level `k >= ybar`;
/// `k = inf` (or the domain supremum) asks for no trigger ever.
pub fn no_breach_probability(t: &LambdaTransform, st: &MarketState, k: f64) -> Result<f64> {
    let sp = split(t, st)?;
    if !(k >= st.ybar) {
        return Err(Error::PreconditionViolated(format!(
            "level {k} must be at least the running maximum {}",
            st.ybar
        )));
    }
    let ratio = (sp.below / sp.gap).max(0.0);
    if ratio == 0.0 {
        return Ok(0.0);
    }
    let decay = t.between(st.ybar, k.min(t.domain_sup()))?;
    Ok((ratio * (-decay).exp()).clamp(0.0, 1.0))
}

/// No-breach probability for a class-Σ process:
/// `(1 - f(a) x)^+ exp(-∫_a^k f)`, with `k = inf` allowed.
pub fn sigma_no_breach(t: &SigmaTransform, st: &SigmaState, k: f64) -> Result<f64> {
    if !(k >= st.a) {
        return Err(Error::PreconditionViolated(format!(
            "level {k} below the state {}",
            st.a
        )));
    }
    let fx = t.rate(st.a)? * st.x;
    let ratio = (1.0 - fx).max(0.0);
    if ratio == 0.0 {
        return Ok(0.0);
    }
    let decay = if k >= t.sup() {
        let total = t.total()?;
        if total.is_infinite() {
            f64::INFINITY
        } else {
            total - big_f(t, st.a)?
        }
    } else {
        t.increment(st.a, k)?
    };
    Ok((ratio * (-decay).exp()).clamp(0.0, 1.0))
}

/// `P[A_inf > x | F_T]` for a class-Σ process.
pub fn a_inf_survival(t: &SigmaTransform, st: &SigmaState, x: f64) -> Result<f64> {
    t.require_divergent()?;
    if st.a > x {
        return Ok(1.0);
    }
    let fx = t.rate(st.a)? * st.x;
    if !(0.0..=1.0).contains(&fx) {
        return Err(Error::PreconditionViolated(format!("f(a) x = {fx} must lie in [0, 1]")));
    }
    if x >= t.sup() {
        return Ok(0.0);
    }
    let decay = t.increment(st.a, x)?;
    Ok(((1.0 - fx) * (-decay).exp()).clamp(0.0, 1.0))
}

fn base_at(base: &Base, ybar: f64) -> Base {
    match base {
        Base::Martingale { .. } => Base::Martingale { start: ybar },
        Base::Diffusion(_) => base.clone(),
    }
}

fn require_below(base: &Base, st: &MarketState, k: f64) -> Result<()> {
    if !(k < st.y) || !(k >= base.lower()) {
        return Err(Error::PreconditionViolated(format!(
            "lower level {k} must lie in the state interval below the value {}",
            st.y
        )));
    }
    Ok(())
}

/// `P[max drawdown on [T, T_K] > x | F_T]` for a lower level `k < y`.
/// Past `ybar - k` the drawdown exceeds `x` exactly when the process reaches
/// `k + x` before `k`.
pub fn max_dd_cdf_lower(st: &MarketState, k: f64, x: f64, base: &Base) -> Result<f64> {
    require_below(base, st, k)?;
    if x < st.ybar - k {
        return Ok(1.0);
    }
    let top = k + x;
    if top >= base.upper() {
        return Ok(0.0);
    }
    Ok((base.s_diff(k, st.y)? / base.s_diff(k, top)?).clamp(0.0, 1.0))
}

/// `P[max relative drawdown on [T, T_K] > x | F_T]` for `0 < k < y`; the
/// relative drawdown exceeds `x` when the process reaches `k / (1 - x)`
/// before `k`.
pub fn max_rdd_cdf_lower(st: &MarketState, k: f64, x: f64, base: &Base) -> Result<f64> {
    require_below(base, st, k)?;
    if !(k > 0.0) {
        return Err(Error::PreconditionViolated(format!("lower level {k} must be positive")));
    }
    if x >= 1.0 {
        return Ok(0.0);
    }
    if x < 1.0 - k / st.ybar {
        return Ok(1.0);
    }
    let top = k / (1.0 - x);
    if top >= base.upper() {
        return Ok(0.0);
    }
    Ok((base.s_diff(k, st.y)? / base.s_diff(k, top)?).clamp(0.0, 1.0))
}

fn upper_check(st: &MarketState, k: f64, x: f64) -> Result<()> {
    if !(k >= st.ybar) {
        return Err(Error::PreconditionViolated(format!(
            "upper level {k} must be at least the running maximum {}",
            st.ybar
        )));
    }
    if !(x >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "drawdown size {x} must be non-negative"
        )));
    }
    Ok(())
}

/// `P[max drawdown on [T, T_K] <= x | F_T]` for an upper level `k >= ybar`.
pub fn max_dd_cdf_upper(st: &MarketState, k: f64, x: f64, base: &Base) -> Result<f64> {
    upper_check(st, k, x)?;
    if x == 0.0 || st.drawdown() >= x {
        return Ok(0.0);
    }
    if let Base::Martingale { .. } = base {
        if k.is_infinite() {
            return Ok(0.0);
        }
        return Ok(((1.0 - st.drawdown() / x) * ((st.ybar - k) / x).exp()).clamp(0.0, 1.0));
    }
    let t = LambdaTransform::new(StopRule::FixedDrawdown(x), base_at(base, st.ybar))?;
    no_breach_probability(&t, st, k)
}

/// `P[max relative drawdown on [T, T_K] <= x | F_T]` for `k >= ybar > 0`.
pub fn max_rdd_cdf_upper(st: &MarketState, k: f64, x: f64, base: &Base) -> Result<f64> {
    upper_check(st, k, x)?;
    if !(st.ybar > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "relative drawdowns need a positive maximum, got {}",
            st.ybar
        )));
    }
    if x == 0.0 || st.relative_drawdown() >= x {
        return Ok(0.0);
    }
    if let Base::Martingale { .. } = base {
        if k.is_infinite() {
            return Ok(0.0);
        }
        return Ok(((1.0 - st.relative_drawdown() / x) * (st.ybar / k).powf(1.0 / x)).clamp(0.0, 1.0));
    }
    let rule = if x <= 1.0 {
        StopRule::RelativeDrawdown(x)
    } else {
        StopRule::Custom(Func::new(format!("(1 - {x}) y"), move |y| (1.0 - x) * y))
    };
    let t = LambdaTransform::new(rule, base_at(base, st.ybar))?;
    no_breach_probability(&t, st, k)
}

/// Both sides of the put representation through the last passage time at `k`:
/// `(k - M_T)^+ = (k - m_inf)^+ P[g_k <= T | F_T]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PutIdentity {
    /// `(k - M_T)^+`.
    pub intrinsic: f64,
    /// `(k - m_inf)^+`.
    pub terminal_gap: f64,
    /// `P[g_k <= T | F_T]`, or `None` when `terminal_gap` is zero.
    pub last_passage_probability: Option<f64>,
}

pub fn mry_put_price(k: f64, st_value: f64, m_inf: f64) -> Result<PutIdentity> {
    if !(k > 0.0 && k.is_finite()) {
        return Err(Error::InvalidStrike(k));
    }
    if !(st_value >= 0.0 && m_inf >= 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "values must be non-negative, got M_T = {st_value}, m_inf = {m_inf}"
        )));
    }
    let intrinsic = (k - st_value).max(0.0);
    let terminal_gap = (k - m_inf).max(0.0);
    let last_passage_probability = (terminal_gap > 0.0).then(|| (intrinsic / terminal_gap).min(1.0));
    Ok(PutIdentity {
        intrinsic,
        terminal_gap,
        last_passage_probability,
    })
}

/// Zero-rate lognormal put `E[(k - M_t)^+]` for `M = m exp(vol W - vol^2 t/2)`.
pub fn gbm_put_price(m: f64, vol: f64, k: f64, t: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(Error::InvalidStrike(k));
    }
    if !(m > 0.0 && vol > 0.0 && t > 0.0) {
        return Err(Error::PreconditionViolated(format!(
            "lognormal put needs m, vol, t > 0, got ({m}, {vol}, {t})"
        )));
    }
    let n = Normal::standard();
    let sd = vol * t.sqrt();
    let d1 = ((m / k).ln() + 0.5 * sd * sd) / sd;
    let d2 = d1 - sd;
    Ok(k * n.cdf(-d2) - m * n.cdf(-d1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TriggerQuote {
    pub price: f64,
    pub hedge: f64,
}

/// Price and hedge of the claim paying `h(running max)` at the trigger.
pub fn trigger_option(t: &LambdaTransform, st: &MarketState, h: &Func) -> Result<TriggerQuote> {
    if !t.rule().is_closed_form() {
        return Err(Error::RuleViolation(format!(
            "trigger options are defined for the three standard rules, got {:?}",
            t.rule()
        )));
    }
    let h_bar = h.eval(st.ybar);
    let hl = h_lambda(t, h, st.ybar)?;
    Ok(TriggerQuote {
        price: cond_expectation_from(t, st, h_bar, hl)?,
        hedge: hedge_from(t, st, h_bar, hl)?,
    })
}

/// `P[running max > x]` at the first time the drawdown of a diffusion
/// reaches `c`, started at its `y0`.
pub fn lehoczky_survival(spec: &crate::scale::DiffusionSpec, c: f64, x: f64) -> Result<f64> {
    let table = std::sync::Arc::new(crate::scale::ScaleTable::new(spec.clone())?);
    lehoczky_survival_with(&table, c, x)
}

pub fn lehoczky_survival_with(table: &std::sync::Arc<crate::scale::ScaleTable>, c: f64, x: f64) -> Result<f64> {
    let t = LambdaTransform::new(StopRule::FixedDrawdown(c), Base::Diffusion(table.clone()))?;
    if !(x >= t.start()) {
        return Err(Error::PreconditionViolated(format!(
            "level {x} below the start {}",
            t.start()
        )));
    }
    let lam = big_lambda(&t, x.min(t.domain_sup()))?;
    let v = (-lam).exp();
    if !v.is_finite() {
        return Err(Error::NonFinite(format!("survival at {x}")));
    }
    Ok(v)
}
