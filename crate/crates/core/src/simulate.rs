//! Path generation and stopped statistics.
//!
//! Brownian-driven models are simulated exactly at the grid and the maximum
//! over each step is drawn from the Brownian bridge law, so running maxima
//! carry no discretization bias. Crossings of a lower stop level between
//! nodes are decided with the bridge crossing probability against the level
//! set by the running maximum at the start of the step.
//!
//! Every path draws from its own ChaCha stream `(seed, path_index)`, so
//! results do not depend on how paths are scheduled across threads.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scale::DiffusionSpec;
use crate::transforms::StopRule;

#[derive(Debug, Clone)]
pub enum ProcessModel {
    /// `m exp(vol B_t - vol^2 t / 2)`.
    GbmMartingale { m: f64, vol: f64 },
    /// `y0 + b t + sigma B_t`.
    BrownianDrift { y0: f64, b: f64, sigma: f64 },
    /// Euler-Maruyama on the diffusion's state interval; no bridge correction.
    GenericDiffusion(DiffusionSpec),
}

impl ProcessModel {
    pub fn gbm(m: f64, vol: f64) -> Result<Self> {
        if !(m > 0.0 && vol > 0.0 && m.is_finite() && vol.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "lognormal martingale needs m > 0 and vol > 0, got m = {m}, vol = {vol}"
            )));
        }
        Ok(ProcessModel::GbmMartingale { m, vol })
    }

    pub fn brownian_drift(y0: f64, b: f64, sigma: f64) -> Result<Self> {
        if !(y0.is_finite() && b.is_finite() && sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::PreconditionViolated(format!(
                "Brownian model needs finite y0, b and sigma > 0, got ({y0}, {b}, {sigma})"
            )));
        }
        Ok(ProcessModel::BrownianDrift { y0, b, sigma })
    }

    pub fn start(&self) -> f64 {
        match self {
            ProcessModel::GbmMartingale { m, .. } => *m,
            ProcessModel::BrownianDrift { y0, .. } => *y0,
            ProcessModel::GenericDiffusion(spec) => spec.y0,
        }
    }
}

/// How the path moves between two nodes, for bridge computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bridge {
    /// No information between nodes.
    None,
    /// Brownian bridge in the value with variance `var` over the step.
    Linear { var: f64 },
    /// Brownian bridge in the log-value with variance `var` over the step.
    Log { var: f64 },
}

/// One step of a path, `(t - dt, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Step {
    pub index: usize,
    pub t_prev: f64,
    pub t: f64,
    pub prev: f64,
    pub value: f64,
    pub interval_max: f64,
    /// Uniform reserved for the crossing decision of this step.
    pub cross_u: f64,
    pub bridge: Bridge,
}

impl Step {
    /// Probability that the bridge between the two nodes dips to `level`,
    /// given both nodes lie above it.
    pub fn crossing_probability(&self, level: f64) -> f64 {
        if self.prev <= level || self.value <= level {
            return 1.0;
        }
        match self.bridge {
            Bridge::None => 0.0,
            Bridge::Linear { var } => (-2.0 * (self.prev - level) * (self.value - level) / var).exp(),
            Bridge::Log { var } => {
                if level <= 0.0 {
                    return 0.0;
                }
                let l = level.ln();
                (-2.0 * (self.prev.ln() - l) * (self.value.ln() - l) / var).exp()
            }
        }
    }

    pub fn crosses_below(&self, level: f64) -> bool {
        self.cross_u < self.crossing_probability(level)
    }
}

fn seeded_rng(seed: u64, path_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index);
    rng
}

/// Bridge maximum over a step from `a` to `b` with variance `var`.
#[inline]
fn bridge_max(a: f64, b: f64, var: f64, u: f64) -> f64 {
    let d = b - a;
    0.5 * (a + b + (d * d - 2.0 * var * (1.0 - u).ln()).sqrt())
}

/// Streams the steps of one path.
pub struct StepGenerator<'a> {
    model: &'a ProcessModel,
    dt: f64,
    n_steps: usize,
    k: usize,
    value: f64,
    rng: ChaCha8Rng,
}

impl<'a> StepGenerator<'a> {
    pub fn new(model: &'a ProcessModel, dt: f64, horizon: f64, seed: u64, path_index: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) || !(horizon >= dt) {
            return Err(Error::PreconditionViolated(format!(
                "need dt > 0 and horizon >= dt, got dt = {dt}, horizon = {horizon}"
            )));
        }
        let n = (horizon / dt).round();
        if n > u32::MAX as f64 {
            return Err(Error::PreconditionViolated(format!("{n} steps is too many")));
        }
        Ok(StepGenerator {
            model,
            dt,
            n_steps: n as usize,
            k: 0,
            value: model.start(),
            rng: seeded_rng(seed, path_index),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    fn advance(&mut self) -> Result<Step> {
        let z: f64 = self.rng.sample(StandardNormal);
        let u_max: f64 = self.rng.random();
        let cross_u: f64 = self.rng.random();
        let dt = self.dt;
        let prev = self.value;
        let t_prev = self.k as f64 * dt;
        let t = (self.k + 1) as f64 * dt;
        let (value, interval_max, bridge) = match self.model {
            ProcessModel::GbmMartingale { vol, .. } => {
                let var = vol * vol * dt;
                let a = prev.ln();
                let b = a - 0.5 * var + var.sqrt() * z;
                (b.exp(), bridge_max(a, b, var, u_max).exp(), Bridge::Log { var })
            }
            ProcessModel::BrownianDrift { b, sigma, .. } => {
                let var = sigma * sigma * dt;
                let next = prev + b * dt + var.sqrt() * z;
                (next, bridge_max(prev, next, var, u_max), Bridge::Linear { var })
            }
            ProcessModel::GenericDiffusion(spec) => {
                let next = prev + spec.mu.eval(prev) * dt + spec.sigma.eval(prev) * dt.sqrt() * z;
                if !spec.contains(next) || !next.is_finite() {
                    return Err(Error::DomainExit { time: t, value: next });
                }
                (next, prev.max(next), Bridge::None)
            }
        };
        self.k += 1;
        self.value = value;
        Ok(Step {
            index: self.k,
            t_prev,
            t,
            prev,
            value,
            interval_max: interval_max.max(prev).max(value),
            cross_u,
            bridge,
        })
    }
}

impl Iterator for StepGenerator<'_> {
    type Item = Result<Step>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.k >= self.n_steps {
            return None;
        }
        Some(self.advance())
    }
}

/// A stored trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Maximum over step `i`, i.e. over `(times[i], times[i + 1]]`.
    pub interval_max: Vec<f64>,
    /// Running maximum at each node, including bridge maxima.
    pub running_max: Vec<f64>,
    pub cross_u: Vec<f64>,
    pub bridge: Vec<Bridge>,
}

impl Path {
    /// A path from node values alone, with the larger endpoint as the step
    /// maximum and no bridge.
    pub fn from_values(dt: f64, values: Vec<f64>) -> Self {
        let n = values.len();
        let times = (0..n).map(|k| k as f64 * dt).collect();
        let interval_max: Vec<f64> = values.windows(2).map(|w| w[0].max(w[1])).collect();
        let mut running_max = Vec::with_capacity(n);
        let mut m = f64::NEG_INFINITY;
        for (i, v) in values.iter().enumerate() {
            m = m.max(*v);
            if i > 0 {
                m = m.max(interval_max[i - 1]);
            }
            running_max.push(m);
        }
        Path {
            times,
            values,
            interval_max,
            running_max,
            cross_u: vec![1.0; n.saturating_sub(1)],
            bridge: vec![Bridge::None; n.saturating_sub(1)],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn steps(&self) -> impl Iterator<Item = Step> + '_ {
        (0..self.len().saturating_sub(1)).map(move |i| Step {
            index: i + 1,
            t_prev: self.times[i],
            t: self.times[i + 1],
            prev: self.values[i],
            value: self.values[i + 1],
            interval_max: self.interval_max[i],
            cross_u: self.cross_u[i],
            bridge: self.bridge[i],
        })
    }
}

pub fn simulate_path(model: &ProcessModel, dt: f64, horizon: f64, seed: u64, path_index: u64) -> Result<Path> {
    let gen = StepGenerator::new(model, dt, horizon, seed, path_index)?;
    let n = gen.n_steps() + 1;
    let start = model.start();
    let mut path = Path {
        times: Vec::with_capacity(n),
        values: Vec::with_capacity(n),
        interval_max: Vec::with_capacity(n - 1),
        running_max: Vec::with_capacity(n),
        cross_u: Vec::with_capacity(n - 1),
        bridge: Vec::with_capacity(n - 1),
    };
    path.times.push(0.0);
    path.values.push(start);
    path.running_max.push(start);
    let mut m = start;
    for step in gen {
        let step = step?;
        m = m.max(step.interval_max);
        path.times.push(step.t);
        path.values.push(step.value);
        path.interval_max.push(step.interval_max);
        path.running_max.push(m);
        path.cross_u.push(step.cross_u);
        path.bridge.push(step.bridge);
    }
    Ok(path)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StopReason {
    RuleHit,
    TargetHit,
    HorizonEnd,
    AbsorbedAtEps,
}

impl StopReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            StopReason::RuleHit => "rule_hit",
            StopReason::TargetHit => "target_hit",
            StopReason::HorizonEnd => "horizon_end",
            StopReason::AbsorbedAtEps => "absorbed_at_eps",
        }
    }
}

/// What ends a path and from when it is watched.
#[derive(Debug, Clone, Default)]
pub struct StopSpec {
    /// Drawdown rule; [`StopRule::UpperTarget`] acts as a target.
    pub rule: Option<StopRule>,
    pub observe_from: f64,
    pub target: Option<f64>,
    pub eps_absorb: Option<f64>,
}

impl StopSpec {
    pub fn rule(rule: StopRule) -> Self {
        StopSpec {
            rule: Some(rule),
            ..StopSpec::default()
        }
    }

    pub fn with_target(mut self, k: f64) -> Self {
        self.target = Some(k);
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps_absorb = Some(eps);
        self
    }

    pub fn observe_from(mut self, t: f64) -> Self {
        self.observe_from = t;
        self
    }

    fn target_level(&self) -> Option<f64> {
        let from_rule = match self.rule {
            Some(StopRule::UpperTarget(k)) => Some(k),
            _ => None,
        };
        match (from_rule, self.target) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StoppedStats {
    /// Node at which the path stopped; `None` when it ran to the horizon.
    pub stop_index: Option<usize>,
    pub stop_time: f64,
    pub stop_reason: StopReason,
    pub value_at_stop: f64,
    pub ybar_at_stop: f64,
    /// Last time at the running maximum before the stop.
    pub g_last: f64,
    pub max_dd: f64,
    pub max_rdd: f64,
}

/// Consumes steps and decides when, and why, a path stops.
#[derive(Debug, Clone)]
pub struct StopTracker {
    spec: StopSpec,
    target: Option<f64>,
    ybar: f64,
    g_last: f64,
    max_dd: f64,
    max_rdd: f64,
    last_index: usize,
    last_time: f64,
    last_value: f64,
    reason: Option<StopReason>,
}

fn at_max_tolerance(ybar: f64) -> f64 {
    1e-12 * ybar.abs().max(1.0)
}

impl StopTracker {
    pub fn new(spec: StopSpec, start: f64) -> Self {
        let target = spec.target_level();
        let mut tr = StopTracker {
            spec,
            target,
            ybar: start,
            g_last: 0.0,
            max_dd: 0.0,
            max_rdd: 0.0,
            last_index: 0,
            last_time: 0.0,
            last_value: start,
            reason: None,
        };
        if tr.spec.observe_from <= 0.0 {
            if tr.rule_level(start).is_some_and(|l| start <= l) {
                tr.reason = Some(StopReason::RuleHit);
            } else if tr.target.is_some_and(|k| start >= k) {
                tr.reason = Some(StopReason::TargetHit);
            } else if tr.spec.eps_absorb.is_some_and(|e| start <= e) {
                tr.reason = Some(StopReason::AbsorbedAtEps);
            }
        }
        tr
    }

    fn rule_level(&self, ybar: f64) -> Option<f64> {
        match &self.spec.rule {
            None | Some(StopRule::UpperTarget(_)) => None,
            Some(rule) => {
                let l = rule.boundary(ybar);
                (!l.is_nan()).then_some(l)
            }
        }
    }

    pub fn is_stopped(&self) -> bool {
        self.reason.is_some()
    }

    pub fn ybar(&self) -> f64 {
        self.ybar
    }

    fn record_drawdown(&mut self, dd: f64) {
        self.max_dd = self.max_dd.max(dd);
        if self.ybar > 0.0 {
            self.max_rdd = self.max_rdd.max(dd / self.ybar);
        }
    }

    /// Feeds one step; returns `true` once the path has stopped.
    pub fn push(&mut self, step: &Step) -> bool {
        if self.reason.is_some() {
            return true;
        }
        let observing = step.t_prev >= self.spec.observe_from - 1e-9 * (step.t - step.t_prev);
        self.last_index = step.index;
        self.last_time = step.t;
        self.last_value = step.value;

        if observing {
            if let Some(l) = self.rule_level(self.ybar) {
                if step.value <= l || step.crosses_below(l) {
                    let dd = self.ybar - step.value.min(l);
                    self.record_drawdown(dd);
                    self.reason = Some(StopReason::RuleHit);
                    return true;
                }
            }
        }

        let tol = at_max_tolerance(self.ybar);
        if step.interval_max > self.ybar {
            self.ybar = step.interval_max;
            // A bridge maximum falls strictly inside the step.
            self.g_last = if step.value >= self.ybar - tol {
                step.t
            } else {
                0.5 * (step.t_prev + step.t)
            };
        } else if step.value >= self.ybar - tol {
            self.g_last = step.t;
        }

        if observing {
            self.record_drawdown(self.ybar - step.value);
            if self.target.is_some_and(|k| step.interval_max >= k) {
                self.reason = Some(StopReason::TargetHit);
            } else if self.spec.eps_absorb.is_some_and(|e| step.value <= e) {
                self.reason = Some(StopReason::AbsorbedAtEps);
            }
        }
        self.reason.is_some()
    }

    pub fn finish(&self) -> StoppedStats {
        StoppedStats {
            stop_index: self.reason.map(|_| self.last_index),
            stop_time: self.last_time,
            stop_reason: self.reason.unwrap_or(StopReason::HorizonEnd),
            value_at_stop: self.last_value,
            ybar_at_stop: self.ybar,
            g_last: self.g_last,
            max_dd: self.max_dd,
            max_rdd: self.max_rdd,
        }
    }
}

pub fn apply_stop_rule(path: &Path, spec: &StopSpec) -> StoppedStats {
    let start = path.values.first().copied().unwrap_or(f64::NAN);
    let mut tracker = StopTracker::new(spec.clone(), start);
    for step in path.steps() {
        if tracker.push(&step) {
            break;
        }
    }
    tracker.finish()
}

/// Simulates one path only as far as it takes to stop.
pub fn simulate_stopped(
    model: &ProcessModel,
    dt: f64,
    horizon: f64,
    seed: u64,
    path_index: u64,
    spec: &StopSpec,
) -> Result<StoppedStats> {
    let mut tracker = StopTracker::new(spec.clone(), model.start());
    if tracker.is_stopped() {
        return Ok(tracker.finish());
    }
    for step in StepGenerator::new(model, dt, horizon, seed, path_index)? {
        if tracker.push(&step?) {
            break;
        }
    }
    Ok(tracker.finish())
}

/// Stopped statistics for paths `0..n`, in path order.
pub fn simulate_many(
    model: &ProcessModel,
    dt: f64,
    horizon: f64,
    seed: u64,
    n: usize,
    spec: &StopSpec,
) -> Result<Vec<StoppedStats>> {
    (0..n as u64)
        .into_par_iter()
        .map(|i| simulate_stopped(model, dt, horizon, seed, i, spec))
        .collect()
}

/// Runs `f` on a pool of at most `threads` workers; `None` uses the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> T {
    match threads {
        Some(n) if n > 0 => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(f),
            Err(_) => f(),
        },
        _ => f(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::func::Func;
    use proptest::prelude::*;

    #[test]
    fn deterministic_paths() {
        let model = ProcessModel::gbm(1.0, 0.4).unwrap();
        let a = simulate_path(&model, 0.01, 1.0, 7, 3).unwrap();
        let b = simulate_path(&model, 0.01, 1.0, 7, 3).unwrap();
        assert_eq!(a, b);
        let c = simulate_path(&model, 0.01, 1.0, 7, 4).unwrap();
        assert_ne!(a.values, c.values);
        assert_eq!(a.len(), 101);
    }

    #[test]
    fn constant_generic_path() {
        let spec = DiffusionSpec::new(Func::constant(0.0), Func::constant(0.0), 2.0, (0.0, 5.0)).unwrap();
        let p = simulate_path(&ProcessModel::GenericDiffusion(spec), 0.1, 1.0, 1, 0).unwrap();
        assert!(p.values.iter().all(|&v| v == 2.0));
        assert!(p.running_max.iter().all(|&v| v == 2.0));
    }

    #[test]
    fn generic_domain_exit() {
        let spec = DiffusionSpec::new(Func::constant(-10.0), Func::constant(0.1), 0.5, (0.0, 1.0)).unwrap();
        let r = simulate_path(&ProcessModel::GenericDiffusion(spec), 0.1, 2.0, 1, 0);
        assert!(matches!(r, Err(Error::DomainExit { .. })));
    }

    #[test]
    fn path_invariants() {
        let model = ProcessModel::brownian_drift(0.0, 0.3, 1.0).unwrap();
        let p = simulate_path(&model, 0.05, 5.0, 11, 0).unwrap();
        for i in 0..p.len() {
            assert!(p.running_max[i] >= p.values[i]);
            if i > 0 {
                assert!(p.running_max[i] >= p.running_max[i - 1]);
                assert!(p.interval_max[i - 1] >= p.values[i].max(p.values[i - 1]));
            }
        }
    }

    #[test]
    fn gaussian_moments() {
        let model = ProcessModel::brownian_drift(0.0, 0.0, 1.0).unwrap();
        let n = 100_000;
        let finals: Vec<f64> = (0..n as u64)
            .into_par_iter()
            .map(|i| {
                StepGenerator::new(&model, 0.25, 1.0, 5, i)
                    .unwrap()
                    .last()
                    .unwrap()
                    .unwrap()
                    .value
            })
            .collect();
        let mean = finals.iter().sum::<f64>() / n as f64;
        let var = finals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 3.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn stats_on_fixed_values() {
        let p = Path::from_values(1.0, vec![1.0, 2.0, 1.5, 3.0, 1.0]);
        let s = apply_stop_rule(&p, &StopSpec::default());
        assert_eq!(s.max_dd, 2.0);
        assert!((s.max_rdd - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.g_last, 3.0);
        assert_eq!(s.stop_reason, StopReason::HorizonEnd);
        assert_eq!(s.stop_index, None);
        assert_eq!(s.ybar_at_stop, 3.0);
    }

    #[test]
    fn immediate_trigger() {
        let p = Path::from_values(1.0, vec![1.0, 2.0, 1.5]);
        let s = apply_stop_rule(&p, &StopSpec::rule(StopRule::DownfallTo(5.0)));
        assert_eq!(s.stop_index, Some(0));
        assert_eq!(s.stop_reason, StopReason::RuleHit);
        assert_eq!(s.max_dd, 0.0);
        assert_eq!(s.max_rdd, 0.0);
    }

    #[test]
    fn rule_target_and_eps() {
        let p = Path::from_values(1.0, vec![1.0, 2.0, 1.5, 3.0, 1.0]);
        let s = apply_stop_rule(&p, &StopSpec::rule(StopRule::FixedDrawdown(1.0)));
        assert_eq!(s.stop_reason, StopReason::RuleHit);
        assert_eq!(s.stop_index, Some(4));
        assert_eq!(s.ybar_at_stop, 3.0);
        let s = apply_stop_rule(&p, &StopSpec::default().with_target(2.5));
        assert_eq!((s.stop_reason, s.stop_index), (StopReason::TargetHit, Some(3)));
        let s = apply_stop_rule(&p, &StopSpec::rule(StopRule::UpperTarget(1.8)));
        assert_eq!((s.stop_reason, s.stop_index), (StopReason::TargetHit, Some(1)));
        let s = apply_stop_rule(&p, &StopSpec::default().with_eps(1.2).observe_from(1.0));
        assert_eq!((s.stop_reason, s.stop_index), (StopReason::AbsorbedAtEps, Some(4)));
        // watching starts at t = 2: only the drop from 3 counts
        let s = apply_stop_rule(&p, &StopSpec::rule(StopRule::FixedDrawdown(0.4)).observe_from(2.0));
        assert_eq!((s.stop_reason, s.stop_index), (StopReason::RuleHit, Some(4)));
    }

    #[test]
    fn streaming_matches_stored() {
        let model = ProcessModel::gbm(1.0, 0.8).unwrap();
        let spec = StopSpec::rule(StopRule::RelativeDrawdown(0.3)).with_target(2.0);
        for i in 0..50 {
            let p = simulate_path(&model, 0.01, 5.0, 99, i).unwrap();
            let a = apply_stop_rule(&p, &spec);
            let b = simulate_stopped(&model, 0.01, 5.0, 99, i, &spec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn thread_count_does_not_change_results() {
        let model = ProcessModel::brownian_drift(0.0, 0.0, 1.0).unwrap();
        let spec = StopSpec::rule(StopRule::FixedDrawdown(0.5)).with_target(1.0);
        let a = with_threads(Some(1), || simulate_many(&model, 0.01, 10.0, 3, 200, &spec)).unwrap();
        let b = with_threads(Some(3), || simulate_many(&model, 0.01, 10.0, 3, 200, &spec)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn crossing_probability_edges() {
        let step = Step {
            index: 1,
            t_prev: 0.0,
            t: 1.0,
            prev: 1.0,
            value: 1.0,
            interval_max: 1.0,
            cross_u: 0.5,
            bridge: Bridge::Linear { var: 1.0 },
        };
        assert!((step.crossing_probability(0.0) - (-2f64).exp()).abs() < 1e-15);
        assert_eq!(step.crossing_probability(1.0), 1.0);
        let log = Step {
            bridge: Bridge::Log { var: 1.0 },
            ..step
        };
        assert_eq!(log.crossing_probability(0.0), 0.0);
    }

    fn brute_force_max_dd(values: &[f64]) -> f64 {
        let mut best = 0.0f64;
        for i in 0..values.len() {
            for j in i..values.len() {
                best = best.max(values[i] - values[j]);
            }
        }
        best
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn max_dd_matches_brute_force(values in proptest::collection::vec(-5.0f64..5.0, 1..40)) {
            let p = Path::from_values(1.0, values.clone());
            let s = apply_stop_rule(&p, &StopSpec::default());
            prop_assert!((s.max_dd - brute_force_max_dd(&values)).abs() < 1e-12);
            prop_assert!(s.g_last <= s.stop_time);
        }

        #[test]
        fn running_max_monotone_under_refinement(seed in 0u64..1000) {
            let model = ProcessModel::gbm(1.0, 0.5).unwrap();
            let p = simulate_path(&model, 0.02, 1.0, seed, 0).unwrap();
            prop_assert!(p.running_max.windows(2).all(|w| w[1] >= w[0]));
            let s = apply_stop_rule(&p, &StopSpec::default());
            prop_assert!(s.ybar_at_stop >= 1.0 && s.max_dd >= 0.0);
        }
    }
}
