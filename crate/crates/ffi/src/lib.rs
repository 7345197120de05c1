//! C ABI over `ddlaws`.
//!
//! Every function returns a [`DdStatus`]; results go through out-pointers.
//! On failure the message is kept per thread and read with
//! [`dd_last_error`]. Handles are opaque and released with their `_free`
//! function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;

use ddlaws::analytics::{
    last_passage_cdf, lehoczky_survival, max_dd_cdf_lower, max_dd_cdf_upper, max_rdd_cdf_lower, max_rdd_cdf_upper,
    no_breach_probability, sup_survival, trigger_option, MarketState,
};
use ddlaws::expr::Expr;
use ddlaws::scale::{DiffusionSpec, ScaleTable};
use ddlaws::transforms::{big_lambda, Base, LambdaTransform, StopRule};
use ddlaws::{Error, Func};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdStatus {
    Ok = 0,
    NonConvergent = 1,
    NonFinite = 2,
    NotBracketed = 3,
    RuleViolation = 4,
    NotIntegrable = 5,
    LambdaFinite = 6,
    PreconditionViolated = 7,
    InvalidStrike = 8,
    DomainExit = 9,
    Empty = 10,
    Syntax = 11,
    Config = 12,
    NullPointer = 13,
    InvalidUtf8 = 14,
    Panic = 15,
}

/// Standard stopping rules; `param` is the floor, the drawdown size or the
/// drawdown fraction respectively.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdRuleKind {
    DownfallTo = 0,
    FixedDrawdown = 1,
    RelativeDrawdown = 2,
}

/// Which maximum drawdown law to evaluate.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DdDrawdownLaw {
    /// Drawdown before reaching an upper level.
    AbsoluteUpper = 0,
    /// Relative drawdown before reaching an upper level.
    RelativeUpper = 1,
    /// Drawdown before falling to a lower level.
    AbsoluteLower = 2,
    /// Relative drawdown before falling to a lower level.
    RelativeLower = 3,
}

/// Parsed single-variable expression.
pub struct DdExpr {
    expr: Expr,
}

/// Martingale or diffusion on which laws are evaluated.
pub struct DdBase {
    base: Base,
}

/// A stopping rule bound to a base.
pub struct DdTransform {
    transform: LambdaTransform,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> DdStatus {
    match e {
        Error::NonConvergent(_) => DdStatus::NonConvergent,
        Error::NonFinite(_) => DdStatus::NonFinite,
        Error::NotBracketed { .. } => DdStatus::NotBracketed,
        Error::RuleViolation(_) => DdStatus::RuleViolation,
        Error::NotIntegrable(_) => DdStatus::NotIntegrable,
        Error::LambdaFinite(_) => DdStatus::LambdaFinite,
        Error::PreconditionViolated(_) => DdStatus::PreconditionViolated,
        Error::InvalidStrike(_) => DdStatus::InvalidStrike,
        Error::DomainExit { .. } => DdStatus::DomainExit,
        Error::Empty => DdStatus::Empty,
        Error::Syntax { .. } => DdStatus::Syntax,
        Error::Config { .. } => DdStatus::Config,
    }
}

struct Fail(DdStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

type Outcome = Result<(), Fail>;

/// Runs `f`, recording any failure or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Outcome) -> DdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            DdStatus::Ok
        }
        Ok(Err(Fail(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            DdStatus::Panic
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(DdStatus::NullPointer, format!("{what} is null"))
}

/// # Safety
/// `p` must be null or valid for reads of `T`.
unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

/// # Safety
/// `p` must be null or valid for writes of `T`.
unsafe fn write<T>(p: *mut T, value: T, what: &str) -> Outcome {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(value);
    Ok(())
}

fn state(y: f64, ybar: f64) -> Result<MarketState, Fail> {
    Ok(MarketState::new(y, ybar)?)
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn dd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Parses `text` (NUL-terminated UTF-8) into `*out`.
///
/// # Safety
/// `text` must be a valid C string and `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_expr_parse(text: *const c_char, out: *mut *mut DdExpr) -> DdStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let s = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Fail(DdStatus::InvalidUtf8, e.to_string()))?;
        let expr = Expr::parse(s)?;
        write(out, Box::into_raw(Box::new(DdExpr { expr })), "out")
    })
}

/// # Safety
/// `e` must come from [`dd_expr_parse`]; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_expr_eval(e: *const DdExpr, y: f64, out: *mut f64) -> DdStatus {
    guard(|| {
        let e = deref(e, "expression")?;
        write(out, e.expr.eval(y)?, "out")
    })
}

/// # Safety
/// `e` must be null or come from [`dd_expr_parse`], and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dd_expr_free(e: *mut DdExpr) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Driftless base started at `start`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_base_martingale(start: f64, out: *mut *mut DdBase) -> DdStatus {
    guard(|| {
        if !start.is_finite() {
            return Err(Error::PreconditionViolated(format!("start {start} must be finite")).into());
        }
        write(
            out,
            Box::into_raw(Box::new(DdBase {
                base: Base::Martingale { start },
            })),
            "out",
        )
    })
}

/// Brownian motion with drift `b` and volatility `sigma`, started at `y0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_base_brownian(y0: f64, b: f64, sigma: f64, out: *mut *mut DdBase) -> DdStatus {
    guard(|| {
        let table = ScaleTable::new(DiffusionSpec::brownian_drift(y0, b, sigma)?)?;
        let base = Base::Diffusion(Arc::new(table));
        write(out, Box::into_raw(Box::new(DdBase { base })), "out")
    })
}

/// Diffusion with drift and volatility given as expressions in `y`, on
/// the interval `(lo, hi)`.
///
/// # Safety
/// `mu` and `sigma` must come from [`dd_expr_parse`]; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_base_diffusion(
    mu: *const DdExpr,
    sigma: *const DdExpr,
    y0: f64,
    lo: f64,
    hi: f64,
    out: *mut *mut DdBase,
) -> DdStatus {
    guard(|| {
        let mu = Func::from_expr(deref(mu, "mu")?.expr.clone());
        let sigma = Func::from_expr(deref(sigma, "sigma")?.expr.clone());
        let table = ScaleTable::new(DiffusionSpec::new(mu, sigma, y0, (lo, hi))?)?;
        let base = Base::Diffusion(Arc::new(table));
        write(out, Box::into_raw(Box::new(DdBase { base })), "out")
    })
}

/// # Safety
/// `b` must be null or come from a `dd_base_*` constructor, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dd_base_free(b: *mut DdBase) {
    if !b.is_null() {
        drop(Box::from_raw(b));
    }
}

unsafe fn new_transform(base: *const DdBase, rule: StopRule, out: *mut *mut DdTransform) -> Outcome {
    let base = deref(base, "base")?.base.clone();
    let transform = LambdaTransform::new(rule, base)?;
    write(out, Box::into_raw(Box::new(DdTransform { transform })), "out")
}

/// Standard rule on `base`.
///
/// # Safety
/// `base` must come from a `dd_base_*` constructor; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_transform_new(
    base: *const DdBase,
    kind: DdRuleKind,
    param: f64,
    out: *mut *mut DdTransform,
) -> DdStatus {
    let rule = match kind {
        DdRuleKind::DownfallTo => StopRule::DownfallTo(param),
        DdRuleKind::FixedDrawdown => StopRule::FixedDrawdown(param),
        DdRuleKind::RelativeDrawdown => StopRule::RelativeDrawdown(param),
    };
    guard(|| new_transform(base, rule, out))
}

/// Rule with boundary `lambda(running max)` on `base`.
///
/// # Safety
/// `base` and `lambda` must be live handles; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_transform_custom(
    base: *const DdBase,
    lambda: *const DdExpr,
    out: *mut *mut DdTransform,
) -> DdStatus {
    guard(|| {
        let f = Func::from_expr(deref(lambda, "lambda")?.expr.clone());
        new_transform(base, StopRule::Custom(f), out)
    })
}

/// # Safety
/// `t` must be null or come from a `dd_transform_*` constructor, and not be used after.
#[no_mangle]
pub unsafe extern "C" fn dd_transform_free(t: *mut DdTransform) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Cumulative hazard from the start to `x`.
///
/// # Safety
/// `t` must be a live transform; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_big_lambda(t: *const DdTransform, x: f64, out: *mut f64) -> DdStatus {
    guard(|| write(out, big_lambda(&deref(t, "transform")?.transform, x)?, "out"))
}

/// `P[running max at the trigger > x]` from the state `(y, ybar)`.
///
/// # Safety
/// `t` must be a live transform; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_sup_survival(t: *const DdTransform, y: f64, ybar: f64, x: f64, out: *mut f64) -> DdStatus {
    guard(|| {
        write(
            out,
            sup_survival(&deref(t, "transform")?.transform, &state(y, ybar)?, x)?,
            "out",
        )
    })
}

/// Probability that the running max at the trigger is already attained.
///
/// # Safety
/// `t` must be a live transform; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_last_passage_cdf(t: *const DdTransform, y: f64, ybar: f64, out: *mut f64) -> DdStatus {
    guard(|| {
        write(
            out,
            last_passage_cdf(&deref(t, "transform")?.transform, &state(y, ybar)?)?,
            "out",
        )
    })
}

/// Probability of reaching `k` before the trigger.
///
/// # Safety
/// `t` must be a live transform; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_no_breach_probability(
    t: *const DdTransform,
    y: f64,
    ybar: f64,
    k: f64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        write(
            out,
            no_breach_probability(&deref(t, "transform")?.transform, &state(y, ybar)?, k)?,
            "out",
        )
    })
}

/// Price and hedge of the claim paying `h(running max)` at the trigger.
///
/// # Safety
/// `t` and `h` must be live handles; `price` and `hedge` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_trigger_option(
    t: *const DdTransform,
    h: *const DdExpr,
    y: f64,
    ybar: f64,
    price: *mut f64,
    hedge: *mut f64,
) -> DdStatus {
    guard(|| {
        let h = Func::from_expr(deref(h, "payoff")?.expr.clone());
        let q = trigger_option(&deref(t, "transform")?.transform, &state(y, ybar)?, &h)?;
        write(price, q.price, "price")?;
        write(hedge, q.hedge, "hedge")
    })
}

/// `P[running max > x]` at the first drawdown of size `c` of a drifted
/// Brownian motion started at `y0`.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_lehoczky_survival(y0: f64, b: f64, sigma: f64, c: f64, x: f64, out: *mut f64) -> DdStatus {
    guard(|| {
        let spec = DiffusionSpec::brownian_drift(y0, b, sigma)?;
        write(out, lehoczky_survival(&spec, c, x)?, "out")
    })
}

/// Distribution function at `x` of the maximum (relative) drawdown until
/// the level `k` is reached, from the state `(y, ybar)`.
///
/// # Safety
/// `base` must be a live handle; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn dd_max_drawdown_cdf(
    base: *const DdBase,
    law: DdDrawdownLaw,
    y: f64,
    ybar: f64,
    k: f64,
    x: f64,
    out: *mut f64,
) -> DdStatus {
    guard(|| {
        let base = &deref(base, "base")?.base;
        let st = state(y, ybar)?;
        let v = match law {
            DdDrawdownLaw::AbsoluteUpper => max_dd_cdf_upper(&st, k, x, base)?,
            DdDrawdownLaw::RelativeUpper => max_rdd_cdf_upper(&st, k, x, base)?,
            DdDrawdownLaw::AbsoluteLower => max_dd_cdf_lower(&st, k, x, base)?,
            DdDrawdownLaw::RelativeLower => max_rdd_cdf_lower(&st, k, x, base)?,
        };
        write(out, v, "out")
    })
}
