//! Scale functions of one-dimensional diffusions `dY = mu(Y) dt + sigma(Y) dB`.
//!
//! With `gamma(x) = 2 ∫_{y0}^x mu/sigma^2` the scale function is
//! `s(x) = c + d ∫_{y0}^x exp(-gamma)`, which turns `s(Y)` into a local
//! martingale. [`ScaleTable`] memoizes `gamma` and the raw integral on a
//! lattice of nodes that is filled in lazily, so repeated evaluations only
//! integrate over the short stretch between a query and its nearest node.

use std::collections::BTreeMap;
use std::sync::{OnceLock, RwLock};

use crate::error::{Error, Result};
use crate::func::Func;
use crate::numerics::{integrate, invert_monotone, MAX_DOUBLINGS};

const INNER_REL_TOL: f64 = 1e-12;
const INNER_ABS_TOL: f64 = 1e-15;
/// Lattice nodes spaced linearly before geometric growth toward infinite ends.
const LINEAR_NODES: i32 = 64;
const DENSITY_OVERFLOW: f64 = 700.0;
const CANCELLATION_GUARD: f64 = 1e-3;
/// Geometric sub-steps per doubling of the distance from `y0`.
const STEPS_PER_DOUBLING: i32 = 4;

#[derive(Debug, Clone)]
pub struct DiffusionSpec {
    pub mu: Func,
    pub sigma: Func,
    pub y0: f64,
    /// Lower end of the state interval (may be `-inf`).
    pub lo: f64,
    /// Upper end of the state interval (may be `+inf`).
    pub hi: f64,
    pub norm_c: f64,
    pub norm_d: f64,
}

impl DiffusionSpec {
    pub fn new(mu: Func, sigma: Func, y0: f64, interval: (f64, f64)) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo < y0 && y0 < hi) || !y0.is_finite() {
            return Err(Error::PreconditionViolated(format!(
                "y0 = {y0} must lie in the interior of ({lo}, {hi})"
            )));
        }
        Ok(DiffusionSpec {
            mu,
            sigma,
            y0,
            lo,
            hi,
            norm_c: 0.0,
            norm_d: 1.0,
        })
    }

    /// Sets the affine normalization `s = c + d * raw`.
    pub fn with_normalization(mut self, c: f64, d: f64) -> Result<Self> {
        if !(d > 0.0) || !c.is_finite() || !d.is_finite() {
            return Err(Error::PreconditionViolated(format!(
                "scale normalization needs finite c and d > 0, got c = {c}, d = {d}"
            )));
        }
        self.norm_c = c;
        self.norm_d = d;
        Ok(self)
    }

    /// Brownian motion with drift `b` and volatility `sigma` on the real line.
    pub fn brownian_drift(y0: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(b.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "Brownian model needs finite b and sigma > 0, got b = {b}, sigma = {sigma}"
            )));
        }
        DiffusionSpec::new(
            Func::constant(b),
            Func::constant(sigma),
            y0,
            (f64::NEG_INFINITY, f64::INFINITY),
        )
    }

    /// Bessel process of dimension `delta` on `(0, inf)`.
    pub fn bessel(delta: f64, y0: f64) -> Result<Self> {
        let k = 0.5 * (delta - 1.0);
        DiffusionSpec::new(
            Func::new(format!("{k}/y"), move |y| k / y),
            Func::constant(1.0),
            y0,
            (0.0, f64::INFINITY),
        )
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo < x && x < self.hi
    }

    fn drift_ratio(&self, y: f64) -> f64 {
        let s = self.sigma.eval(y);
        2.0 * self.mu.eval(y) / (s * s)
    }
}

/// `gamma(x) = 2 ∫_{y0}^x mu(y) / sigma(y)^2 dy`, computed directly.
pub fn gamma(spec: &DiffusionSpec, x: f64) -> Result<f64> {
    if x == spec.y0 {
        return Ok(0.0);
    }
    Ok(integrate(|y| spec.drift_ratio(y), spec.y0, x, INNER_REL_TOL, INNER_ABS_TOL)?.value)
}

/// The normalized scale function at `x`, with endpoint values as extended reals.
pub fn scale(spec: &DiffusionSpec, x: f64) -> Result<f64> {
    ScaleTable::new(spec.clone())?.scale(x)
}

/// Inverse of the scale function.
pub fn scale_inverse(table: &ScaleTable, u: f64) -> Result<f64> {
    table.inverse(u)
}

#[derive(Debug, Clone, Copy)]
struct Node {
    x: f64,
    gamma: f64,
    raw: f64,
}

/// Memoized `gamma` and `s` for one diffusion. Safe to share across threads;
/// lattice refinement happens under a write lock.
#[derive(Debug)]
pub struct ScaleTable {
    spec: DiffusionSpec,
    tolerance: f64,
    width: f64,
    nodes: RwLock<BTreeMap<i32, Node>>,
    raw_hi: OnceLock<Result<f64>>,
    raw_lo: OnceLock<Result<f64>>,
}

impl ScaleTable {
    pub fn new(spec: DiffusionSpec) -> Result<Self> {
        let mut nodes = BTreeMap::new();
        nodes.insert(
            0,
            Node {
                x: spec.y0,
                gamma: 0.0,
                raw: 0.0,
            },
        );
        let table = ScaleTable {
            width: 0.25 * spec.y0.abs().max(1.0),
            tolerance: 1e-12,
            raw_hi: OnceLock::new(),
            raw_lo: OnceLock::new(),
            nodes: RwLock::new(nodes),
            spec,
        };
        for k in -8..=8 {
            let x = table.position(k);
            let s = table.spec.sigma.eval(x);
            if !(s.is_finite() && s != 0.0) {
                return Err(Error::PreconditionViolated(format!(
                    "sigma({x}) = {s}; volatility must be finite and nonzero inside the interval"
                )));
            }
        }
        Ok(table)
    }

    pub fn spec(&self) -> &DiffusionSpec {
        &self.spec
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Lattice position of node `k`; node 0 is `y0`.
    fn position(&self, k: i32) -> f64 {
        let y0 = self.spec.y0;
        if k == 0 {
            return y0;
        }
        let (end, dir) = if k > 0 {
            (self.spec.hi, 1.0)
        } else {
            (self.spec.lo, -1.0)
        };
        let n = k.abs();
        if end.is_finite() {
            end - (end - y0) * 0.5f64.powf(n as f64 / STEPS_PER_DOUBLING as f64)
        } else if n <= LINEAR_NODES {
            y0 + dir * self.width * n as f64
        } else {
            let excess = (n - LINEAR_NODES) as f64 / STEPS_PER_DOUBLING as f64;
            y0 + dir * self.width * LINEAR_NODES as f64 * 2f64.powf(excess)
        }
    }

    fn max_index(&self) -> i32 {
        let extra = MAX_DOUBLINGS as i32 * STEPS_PER_DOUBLING;
        LINEAR_NODES + extra
    }

    /// Largest `|k|` on the side of `x` with `position(k)` between `y0` and `x`.
    fn inner_index(&self, x: f64) -> i32 {
        let y0 = self.spec.y0;
        if x == y0 {
            return 0;
        }
        let up = x > y0;
        let end = if up { self.spec.hi } else { self.spec.lo };
        let dist = (x - y0).abs();
        let guess = if end.is_finite() {
            let ratio = ((end - x) / (end - y0)).max(f64::MIN_POSITIVE);
            (-(ratio.log2()) * STEPS_PER_DOUBLING as f64).floor()
        } else if dist <= self.width * LINEAR_NODES as f64 {
            (dist / self.width).floor()
        } else {
            LINEAR_NODES as f64
                + ((dist / (self.width * LINEAR_NODES as f64)).log2() * STEPS_PER_DOUBLING as f64).floor()
        };
        let mut n = (guess.max(0.0) as i32).min(self.max_index());
        let sign = if up { 1 } else { -1 };
        let beyond = |n: i32| {
            let p = self.position(sign * n);
            if up {
                p > x
            } else {
                p < x
            }
        };
        while n > 0 && beyond(n) {
            n -= 1;
        }
        while n < self.max_index() && !beyond(n + 1) {
            n += 1;
        }
        sign * n
    }

    fn node(&self, k: i32) -> Result<Node> {
        if let Some(n) = self.nodes.read().expect("scale table lock").get(&k) {
            return Ok(*n);
        }
        let step = if k > 0 { -1 } else { 1 };
        let inner = self.node(k + step)?;
        let x = self.position(k);
        let (gamma, raw) = self.advance(inner, x)?;
        let node = Node { x, gamma, raw };
        self.nodes.write().expect("scale table lock").insert(k, node);
        Ok(node)
    }

    fn local_gamma(&self, from: Node, y: f64) -> Result<f64> {
        if y == from.x {
            return Ok(from.gamma);
        }
        let r = integrate(|z| self.spec.drift_ratio(z), from.x, y, INNER_REL_TOL, INNER_ABS_TOL)?;
        Ok(from.gamma + r.value)
    }

    /// Returns `(gamma(x), raw(x))` by integrating outward from `from`.
    fn advance(&self, from: Node, x: f64) -> Result<(f64, f64)> {
        if x == from.x {
            return Ok((from.gamma, from.raw));
        }
        let gamma_x = self.local_gamma(from, x)?;
        let sign = if x > from.x { 1.0 } else { -1.0 };
        // Past e^700 the density overflows and the scale has run off to an
        // infinite end.
        if !from.raw.is_finite() || -gamma_x > DENSITY_OVERFLOW {
            return Ok((
                gamma_x,
                if from.raw.is_finite() {
                    sign * f64::INFINITY
                } else {
                    from.raw
                },
            ));
        }
        let density = |y: f64| match self.local_gamma(from, y) {
            Ok(g) => (-g).exp(),
            Err(_) => f64::NAN,
        };
        let scale_hint = (-from.gamma).exp() * (x - from.x).abs();
        let r = integrate(
            density,
            from.x,
            x,
            INNER_REL_TOL,
            INNER_ABS_TOL * scale_hint.max(1e-300),
        )
        .map_err(|e| match e {
            Error::NonFinite(m) => Error::NonFinite(format!("scale density: {m}")),
            other => other,
        })?;
        Ok((gamma_x, from.raw + r.value))
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        if x.is_nan() || x < self.spec.lo || x > self.spec.hi {
            return Err(Error::PreconditionViolated(format!(
                "x = {x} outside [{}, {}]",
                self.spec.lo, self.spec.hi
            )));
        }
        Ok(())
    }

    /// `gamma(x)` for `x` inside the interval.
    pub fn gamma(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if x == self.spec.lo || x == self.spec.hi {
            return Err(Error::NonFinite(format!("gamma at the boundary point {x}")));
        }
        let node = self.node(self.inner_index(x))?;
        self.local_gamma(node, x)
    }

    /// `exp(-gamma(x))`, the derivative of the raw scale.
    pub fn density(&self, x: f64) -> Result<f64> {
        Ok((-self.gamma(x)?).exp())
    }

    /// `∫_{y0}^x exp(-gamma)`, the scale with `c = 0`, `d = 1`. Boundary
    /// points give extended-real limits.
    pub fn raw(&self, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        if x == self.spec.hi {
            return self.raw_at_end(true);
        }
        if x == self.spec.lo {
            return self.raw_at_end(false);
        }
        let node = self.node(self.inner_index(x))?;
        Ok(self.advance(node, x)?.1)
    }

    /// Derivative of [`ScaleTable::raw`] together with its value.
    pub fn raw_with_density(&self, x: f64) -> Result<(f64, f64)> {
        self.check_domain(x)?;
        let node = self.node(self.inner_index(x))?;
        let (g, raw) = self.advance(node, x)?;
        Ok((raw, (-g).exp()))
    }

    /// `raw(b) - raw(a)`. Far out along a convergent end the two values agree
    /// to many digits, so the difference is then integrated directly.
    pub fn raw_diff(&self, a: f64, b: f64) -> Result<f64> {
        if a > b {
            return Ok(-self.raw_diff(b, a)?);
        }
        if a == b {
            return Ok(0.0);
        }
        let (ra, rb) = (self.raw(a)?, self.raw(b)?);
        let d = rb - ra;
        if !d.is_finite() || d > CANCELLATION_GUARD * ra.abs().max(rb.abs()) || a <= self.spec.lo || b >= self.spec.hi {
            return Ok(d);
        }
        let node = self.node(self.inner_index(a))?;
        let from = Node {
            x: a,
            gamma: self.local_gamma(node, a)?,
            raw: 0.0,
        };
        Ok(self.advance(from, b)?.1)
    }

    pub fn scale(&self, x: f64) -> Result<f64> {
        let raw = self.raw(x)?;
        Ok(self.spec.norm_c + self.spec.norm_d * raw)
    }

    /// Limit of the raw scale at an interval end; divergence maps to `±inf`.
    pub fn raw_at_end(&self, upper: bool) -> Result<f64> {
        let cell = if upper { &self.raw_hi } else { &self.raw_lo };
        cell.get_or_init(|| self.compute_end(upper)).clone()
    }

    fn compute_end(&self, upper: bool) -> Result<f64> {
        let sign = if upper { 1 } else { -1 };
        let mut prev = 0.0;
        let mut quiet = 0;
        for n in 1..=self.max_index() {
            let node = self.node(sign * n)?;
            let inc = node.raw - prev;
            prev = node.raw;
            if !node.raw.is_finite() {
                break;
            }
            if inc.abs() <= 1e-15f64.max(1e-11 * node.raw.abs()) {
                quiet += 1;
                if quiet >= 2 {
                    return Ok(node.raw);
                }
            } else {
                quiet = 0;
            }
        }
        Ok(sign as f64 * f64::INFINITY)
    }

    /// `s^{-1}(u)` for `u` in `[s(lo), s(hi)]`.
    pub fn inverse(&self, u: f64) -> Result<f64> {
        let target = (u - self.spec.norm_c) / self.spec.norm_d;
        if target == 0.0 {
            return Ok(self.spec.y0);
        }
        let upper = target > 0.0;
        let sign = if upper { 1 } else { -1 };
        let end_raw = self.raw_at_end(upper)?;
        let beyond = |r: f64| if upper { r >= target } else { r <= target };
        if !beyond(end_raw) || end_raw == target {
            if end_raw == target {
                return Ok(if upper { self.spec.hi } else { self.spec.lo });
            }
            return Err(Error::NotBracketed {
                target: u,
                lo_value: self.spec.norm_c + self.spec.norm_d * self.raw_at_end(false)?,
                hi_value: self.spec.norm_c + self.spec.norm_d * self.raw_at_end(true)?,
            });
        }
        let mut inner = self.node(0)?;
        let mut outer = None;
        for n in 1..=self.max_index() {
            let node = self.node(sign * n)?;
            if beyond(node.raw) {
                outer = Some(node);
                break;
            }
            inner = node;
        }
        let outer_x = match outer {
            Some(n) => n.x,
            None => {
                if upper {
                    self.spec.hi
                } else {
                    self.spec.lo
                }
            }
        };
        let tol = self.tolerance * target.abs().max(1.0);
        let (lo, hi) = if upper { (inner.x, outer_x) } else { (outer_x, inner.x) };
        let g = |x: f64| self.advance(inner, x).map(|r| r.1).unwrap_or(f64::NAN);
        invert_monotone(g, target, lo, hi, tol)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn driftless() -> DiffusionSpec {
        DiffusionSpec::brownian_drift(0.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let spec = driftless();
        assert_eq!(gamma(&spec, 3.0).unwrap(), 0.0);
        let spec = DiffusionSpec::brownian_drift(0.0, 1.0, 1.0).unwrap();
        assert!((gamma(&spec, 1.0).unwrap() - 2.0).abs() < 1e-14);
        let bessel3 = DiffusionSpec::bessel(3.0, 1.0).unwrap();
        assert!((gamma(&bessel3, std::f64::consts::E).unwrap() - 2.0).abs() < 1e-12);
        assert_eq!(gamma(&bessel3, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn identity_scale() {
        let spec = DiffusionSpec::brownian_drift(1.5, 0.0, 1.0).unwrap();
        for x in [-3.0, 0.0, 1.5, 2.0, 40.0] {
            assert!((scale(&spec, x).unwrap() - (x - 1.5)).abs() < 1e-12);
        }
        let t = ScaleTable::new(spec).unwrap();
        assert_eq!(t.scale(1.5).unwrap(), 0.0);
        assert_eq!(t.raw_at_end(true).unwrap(), f64::INFINITY);
        assert_eq!(t.raw_at_end(false).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn drift_closed_form() {
        let b = 1.0;
        let spec = DiffusionSpec::brownian_drift(0.0, b, 1.0).unwrap();
        let t = ScaleTable::new(spec).unwrap();
        for x in [0.1, 0.5, 1.0, 3.0, 10.0] {
            let cf = (1.0 - (-2.0 * b * x).exp()) / (2.0 * b);
            assert!((t.scale(x).unwrap() - cf).abs() < 1e-10 * cf.abs());
        }
        assert!((t.raw_at_end(true).unwrap() - 0.5).abs() < 1e-10);
        assert_eq!(t.raw_at_end(false).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn inverse_examples() {
        let t = ScaleTable::new(driftless()).unwrap();
        assert!((scale_inverse(&t, 0.7).unwrap() - 0.7).abs() < 1e-12);
        let t = ScaleTable::new(DiffusionSpec::brownian_drift(0.0, 1.0, 1.0).unwrap()).unwrap();
        let x = scale_inverse(&t, 0.25).unwrap();
        assert!((x - std::f64::consts::LN_2 / 2.0).abs() < 1e-10, "{x}");
        assert!(matches!(scale_inverse(&t, 0.6), Err(Error::NotBracketed { .. })));
    }

    #[test]
    fn table_contains_start_with_offset() {
        let spec = driftless().with_normalization(3.0, 2.0).unwrap();
        let t = ScaleTable::new(spec).unwrap();
        assert_eq!(t.scale(0.0).unwrap(), 3.0);
        assert_eq!(t.gamma(0.0).unwrap(), 0.0);
    }

    #[test]
    fn zero_volatility_rejected() {
        let spec = DiffusionSpec::new(Func::constant(0.0), Func::constant(0.0), 0.0, (-1.0, 1.0)).unwrap();
        assert!(matches!(ScaleTable::new(spec), Err(Error::PreconditionViolated(_))));
    }

    #[test]
    fn start_must_be_interior() {
        assert!(DiffusionSpec::new(Func::constant(0.0), Func::constant(1.0), 0.0, (0.0, 1.0)).is_err());
        assert!(driftless().with_normalization(0.0, 0.0).is_err());
    }

    #[test]
    fn bessel_lower_end_diverges() {
        let t = ScaleTable::new(DiffusionSpec::bessel(4.0, 1.0).unwrap()).unwrap();
        assert_eq!(t.raw_at_end(false).unwrap(), f64::NEG_INFINITY);
        assert!((t.raw_at_end(true).unwrap() - 0.5).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn strictly_increasing(b in -1.0f64..1.0, x1 in -3.0f64..3.0, dx in 0.01f64..2.0) {
            let t = ScaleTable::new(DiffusionSpec::brownian_drift(0.0, b, 1.3).unwrap()).unwrap();
            prop_assert!(t.scale(x1).unwrap() < t.scale(x1 + dx).unwrap());
        }

        #[test]
        fn affine_ratio_invariant(c in -5.0f64..5.0, d in 0.1f64..10.0, xs in proptest::array::uniform4(-2.0f64..2.0)) {
            prop_assume!((xs[2] - xs[3]).abs() > 0.05);
            let base = DiffusionSpec::brownian_drift(0.0, 0.4, 0.8).unwrap();
            let t1 = ScaleTable::new(base.clone()).unwrap();
            let t2 = ScaleTable::new(base.with_normalization(c, d).unwrap()).unwrap();
            let ratio = |t: &ScaleTable| {
                (t.scale(xs[0]).unwrap() - t.scale(xs[1]).unwrap())
                    / (t.scale(xs[2]).unwrap() - t.scale(xs[3]).unwrap())
            };
            prop_assert!((ratio(&t1) - ratio(&t2)).abs() <= 1e-10 * ratio(&t1).abs().max(1.0));
        }

        #[test]
        fn inverse_round_trip(x in -4.0f64..6.0) {
            let t = ScaleTable::new(DiffusionSpec::brownian_drift(0.0, 0.3, 1.0).unwrap()).unwrap();
            let u = t.scale(x).unwrap();
            let back = scale_inverse(&t, u).unwrap();
            prop_assert!((t.scale(back).unwrap() - u).abs() <= 1e-11 * u.abs().max(1.0));
        }
    }
}
