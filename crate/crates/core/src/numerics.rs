//! Adaptive quadrature and monotone root finding.
//!
//! Everything here is a pure function of its inputs. Finite integrals use a
//! globally adaptive 7/15-point Gauss–Kronrod scheme with bisection of the
//! subinterval carrying the largest error estimate. Improper integrals are
//! summed over a geometric sequence of pieces and declared divergent when the
//! partial sums fail the Cauchy criterion after [`MAX_DOUBLINGS`] pieces.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

pub const DEFAULT_REL_TOL: f64 = 1e-9;
pub const DEFAULT_ABS_TOL: f64 = 1e-12;

/// Number of geometric pieces examined before an improper integral is
/// declared divergent.
pub const MAX_DOUBLINGS: usize = 40;

const MAX_SUBINTERVALS: usize = 4000;

// Gauss–Kronrod 7/15 abscissae and weights (QUADPACK qk15).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult {
    pub value: f64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

/// Outcome of an improper integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Improper {
    Converged(QuadratureResult),
    Divergent,
}

impl Improper {
    /// The integral value, with divergence mapped to `+inf`.
    pub fn value_or_infinity(&self) -> f64 {
        match self {
            Improper::Converged(r) => r.value,
            Improper::Divergent => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Panel {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Panel {}
impl PartialOrd for Panel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Panel {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn checked<F: Fn(f64) -> f64>(f: &F, x: f64) -> Result<f64> {
    let v = f(x);
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("integrand returned {v} at x = {x}")))
    }
}

fn kronrod15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Panel> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let f_center = checked(f, center)?;
    let mut res_k = f_center * WGK[7];
    let mut res_g = f_center * WG[3];
    let mut res_abs = res_k.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = checked(f, center - dx)?;
        let f2 = checked(f, center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        res_k += WGK[j] * (f1 + f2);
        res_abs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            res_g += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * res_k;
    let mut res_asc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        res_asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let h = half.abs();
    let value = res_k * half;
    res_abs *= h;
    res_asc *= h;
    let mut error = ((res_k - res_g) * half).abs();
    if res_asc != 0.0 && error != 0.0 {
        error = res_asc * (200.0 * error / res_asc).powf(1.5).min(1.0);
    }
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        error = error.max(50.0 * f64::EPSILON * res_abs);
    }
    Ok(Panel { a, b, value, error })
}

/// Integrates `f` over `[a, b]` to `max(abs_tol, rel_tol * |value|)`.
///
/// Integrable endpoint singularities are fine: the Kronrod nodes never touch
/// the endpoints and adaptive bisection concentrates effort there. For
/// `a > b` the integral over `[b, a]` is negated.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, abs_tol: f64) -> Result<QuadratureResult> {
    if a.is_nan() || b.is_nan() || a.is_infinite() || b.is_infinite() {
        return Err(Error::NonFinite(format!("integration bounds [{a}, {b}]")));
    }
    if a > b {
        let r = integrate(f, b, a, rel_tol, abs_tol)?;
        return Ok(QuadratureResult { value: -r.value, ..r });
    }
    if a == b {
        // Degenerate interval: the single "evaluation" is the empty sum.
        return Ok(QuadratureResult {
            value: 0.0,
            error_estimate: 0.0,
            evaluations: 1,
        });
    }

    let first = kronrod15(&f, a, b)?;
    let mut evaluations = 15;
    let mut total = first.value;
    let mut total_err = first.error;
    let mut heap = BinaryHeap::new();
    heap.push(first);

    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if heap.len() >= MAX_SUBINTERVALS {
            return Err(Error::NonConvergent(format!(
                "[{a}, {b}]: {} subintervals, error estimate {total_err:e}",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::NonConvergent(format!(
                "[{a}, {b}]: subinterval at {mid} cannot be split further"
            )));
        }
        let left = kronrod15(&f, worst.a, mid)?;
        let right = kronrod15(&f, mid, worst.b)?;
        evaluations += 30;
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        heap.push(left);
        heap.push(right);
        // Re-sum occasionally so cancellation in the running updates does
        // not leave a stale error total.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|p| p.value).sum();
            total_err = heap.iter().map(|p| p.error).sum();
        }
    }

    Ok(QuadratureResult {
        value: total,
        error_estimate: total_err.max(0.0),
        evaluations,
    })
}

/// Sums `piece(0), piece(1), ...` until two consecutive pieces are below
/// `max(abs_tol, rel_tol * |sum|)`. Returns `None` when that does not happen
/// within [`MAX_DOUBLINGS`] pieces. `piece` may return `Ok(None)` to signal
/// that the domain is exhausted.
pub fn sum_pieces<P>(mut piece: P, rel_tol: f64, abs_tol: f64) -> Result<Option<QuadratureResult>>
where
    P: FnMut(usize) -> Result<Option<QuadratureResult>>,
{
    let mut acc = QuadratureResult {
        value: 0.0,
        error_estimate: 0.0,
        evaluations: 0,
    };
    let mut quiet = 0;
    for k in 0..MAX_DOUBLINGS {
        let Some(r) = piece(k)? else {
            return Ok(Some(acc));
        };
        acc.value += r.value;
        acc.error_estimate += r.error_estimate;
        acc.evaluations += r.evaluations;
        if !acc.value.is_finite() {
            return Ok(None);
        }
        if r.value.abs() <= abs_tol.max(rel_tol * acc.value.abs()) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(Some(acc));
            }
        } else {
            quiet = 0;
        }
    }
    Ok(None)
}

/// Integrates `f` over `[a, inf)` as a sum over the doubling pieces
/// `[a + w(2^k - 1), a + w(2^(k+1) - 1)]` with `w = max(1, |a|)`, stopping
/// once the Cauchy test of [`sum_pieces`] passes.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, rel_tol: f64) -> Result<Improper> {
    let abs_tol = DEFAULT_ABS_TOL;
    let w = a.abs().max(1.0);
    let edge = |k: usize| a + w * (2f64.powi(k as i32) - 1.0);
    let sum = sum_pieces(
        |k| integrate(&f, edge(k), edge(k + 1), rel_tol, abs_tol / MAX_DOUBLINGS as f64).map(Some),
        rel_tol,
        abs_tol,
    )?;
    Ok(match sum {
        Some(q) => Improper::Converged(q),
        None => Improper::Divergent,
    })
}

/// Solves `g(x) = target` for strictly increasing `g` on `[lo, hi]` with an
/// Illinois-modified false position step, falling back to bisection when the
/// bracket stops shrinking quickly.
pub fn invert_monotone<G: Fn(f64) -> f64>(g: G, target: f64, lo: f64, hi: f64, tol: f64) -> Result<f64> {
    let mut a = lo;
    let mut b = hi;
    let mut fa = g(a) - target;
    let mut fb = g(b) - target;
    if fa.is_nan() || fb.is_nan() || fa > 0.0 || fb < 0.0 {
        return Err(Error::NotBracketed {
            target,
            lo_value: fa + target,
            hi_value: fb + target,
        });
    }
    if fa.abs() <= tol {
        return Ok(a);
    }
    if fb.abs() <= tol {
        return Ok(b);
    }
    let mut side = 0i8;
    for iter in 0..400 {
        let width = b - a;
        let mut x = if iter % 3 == 2 || !fa.is_finite() || !fb.is_finite() {
            0.5 * (a + b)
        } else {
            (a * fb - b * fa) / (fb - fa)
        };
        if !(x > a && x < b) {
            x = 0.5 * (a + b);
        }
        let fx = g(x) - target;
        if fx.is_nan() {
            return Err(Error::NonFinite(format!("inverted function is NaN at {x}")));
        }
        if fx.abs() <= tol || width <= 4.0 * f64::EPSILON * x.abs().max(f64::MIN_POSITIVE) {
            return Ok(x);
        }
        if fx < 0.0 {
            a = x;
            fa = fx;
            if side == -1 {
                fb *= 0.5;
            }
            side = -1;
        } else {
            b = x;
            fb = fx;
            if side == 1 {
                fa *= 0.5;
            }
            side = 1;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn int(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
        integrate(f, a, b, DEFAULT_REL_TOL, DEFAULT_ABS_TOL).unwrap().value
    }

    #[test]
    fn polynomial_and_rational() {
        assert!((int(|x| x, 0.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((int(|x| 1.0 / (x * x), 1.0, 10.0) - 0.9).abs() < 1e-10);
    }

    #[test]
    fn gaussian_matches_midpoint_oracle() {
        let n = 1_000_000;
        let h = 6.0 / n as f64;
        let oracle: f64 = (0..n)
            .map(|i| {
                let x = -3.0 + (i as f64 + 0.5) * h;
                (-x * x).exp()
            })
            .sum::<f64>()
            * h;
        let v = int(|x| (-x * x).exp(), -3.0, 3.0);
        assert!((v - oracle).abs() < 1e-8, "{v} vs {oracle}");
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^1 x^{-1/2} dx = 2
        let v = int(|x| 1.0 / x.sqrt(), 0.0, 1.0);
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn reversed_bounds_negate() {
        assert!((int(|x| x, 1.0, 0.0) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn interior_nan_is_reported() {
        let r = integrate(|x| if x > 0.3 { f64::NAN } else { 1.0 }, 0.0, 1.0, 1e-9, 1e-12);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn result_invariants() {
        let r = integrate(|x| x.sin(), 0.0, 3.0, 1e-9, 1e-12).unwrap();
        assert!(r.error_estimate >= 0.0);
        assert!(r.evaluations >= 1);
    }

    #[test]
    fn improper_examples() {
        let r = integrate_to_infinity(|x| 1.0 / (x * x), 1.0, 1e-9).unwrap();
        match r {
            Improper::Converged(q) => assert!((q.value - 1.0).abs() < 1e-8, "{}", q.value),
            Improper::Divergent => panic!("1/x^2 converges"),
        }
        assert_eq!(
            integrate_to_infinity(|x| 1.0 / x, 1.0, 1e-9).unwrap(),
            Improper::Divergent
        );
        let r = integrate_to_infinity(|x| (-x).exp(), 0.0, 1e-9).unwrap();
        assert!((r.value_or_infinity() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn improper_agrees_with_truncated_on_exponential_corpus() {
        for rate in [0.5, 1.0, 2.0, 5.0] {
            let f = move |x: f64| rate * (-rate * x).exp() * (1.0 + 0.3 * (x).cos());
            let inf = integrate_to_infinity(f, 0.0, 1e-10).unwrap().value_or_infinity();
            // Tail beyond B is below 1.3 * exp(-rate * B).
            let b = 40.0 / rate;
            let finite = int(f, 0.0, b);
            assert!((inf - finite).abs() < 1e-8, "rate {rate}: {inf} vs {finite}");
        }
    }

    #[test]
    fn inversion_examples() {
        let x = invert_monotone(|x| x * x * x, 8.0, 0.0, 3.0, 1e-12).unwrap();
        assert!((x - 2.0).abs() < 1e-10);
        let x = invert_monotone(|x| x, 0.5, 0.0, 1.0, 1e-14).unwrap();
        assert!((x - 0.5).abs() < 1e-14);
        let x = invert_monotone(|x| 1.0 - (-2.0 * x).exp(), 0.5, 0.0, 10.0, 1e-13).unwrap();
        assert!((x - std::f64::consts::LN_2 / 2.0).abs() < 1e-11);
    }

    #[test]
    fn inversion_not_bracketed() {
        let r = invert_monotone(|x| x, 2.0, 0.0, 1.0, 1e-12);
        assert!(matches!(r, Err(Error::NotBracketed { .. })));
    }

    proptest! {
        #[test]
        fn linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, k in 0.1f64..3.0, b in 0.5f64..4.0) {
            let f = move |x: f64| (k * x).sin() + x * x;
            let g = move |x: f64| (-k * x).exp();
            let lhs = int(move |x| alpha * f(x) + beta * g(x), 0.0, b);
            let rhs = alpha * int(f, 0.0, b) + beta * int(g, 0.0, b);
            let tol = DEFAULT_ABS_TOL.max(DEFAULT_REL_TOL * lhs.abs());
            prop_assert!((lhs - rhs).abs() <= 2.0 * tol + 1e-12, "{} vs {}", lhs, rhs);
        }

        #[test]
        fn additivity(a in -2.0f64..0.0, db in 0.1f64..2.0, dc in 0.1f64..2.0, k in 0.1f64..2.0) {
            let f = move |x: f64| (k * x).cos() * (-x * x / 4.0).exp();
            let b = a + db;
            let c = b + dc;
            let whole = int(f, a, c);
            let parts = int(f, a, b) + int(f, b, c);
            let tol = DEFAULT_ABS_TOL.max(DEFAULT_REL_TOL * whole.abs());
            prop_assert!((whole - parts).abs() <= 2.0 * tol + 1e-12);
        }

        #[test]
        fn inversion_round_trip(x in 0.01f64..4.0) {
            let g = |x: f64| x.powi(3) + x;
            let y = g(x);
            let tol = 1e-12;
            let back = invert_monotone(g, y, 0.0, 5.0, tol).unwrap();
            prop_assert!((g(back) - y).abs() <= tol);
        }
    }
}
