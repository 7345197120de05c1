//! Monte Carlo checks of the analytic laws.
//!
//! Per-path results are collected in path order and reduced sequentially with
//! compensated sums, so a report depends only on its inputs and seed.

use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;

use crate::analytics::{
    gbm_put_price, hedge_from, last_passage_cdf, mry_put_price, no_breach_probability, sup_survival, MarketState,
};
use crate::error::{Error, Result};
use crate::func::Func;
use crate::scale::{DiffusionSpec, ScaleTable};
use crate::simulate::{simulate_many, ProcessModel, StepGenerator, StopReason, StopSpec, StopTracker};
use crate::transforms::{Base, LambdaTransform, StopRule, TiltTable};

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}

/// Sample mean and its standard error.
pub fn mean_and_se(values: &[f64]) -> Result<(f64, f64)> {
    let n = values.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mean = compensated_sum(values.iter().copied()) / n as f64;
    if n == 1 {
        return Ok((mean, f64::NAN));
    }
    let ss = compensated_sum(values.iter().map(|v| (v - mean) * (v - mean)));
    Ok((mean, (ss / (n - 1) as f64 / n as f64).sqrt()))
}

/// Fraction of `stats` satisfying `pred`, with the binomial standard error.
pub fn estimate_probability<T>(stats: &[T], pred: impl Fn(&T) -> bool) -> Result<(f64, f64)> {
    let n = stats.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    if n < 2 {
        return Err(Error::PreconditionViolated("need at least two samples".into()));
    }
    let hits = stats.iter().filter(|s| pred(s)).count();
    let p = hits as f64 / n as f64;
    Ok((p, (p * (1.0 - p) / n as f64).sqrt()))
}

/// Kolmogorov-Smirnov distance between sorted `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::Empty);
    }
    let mut d = 0.0f64;
    for (i, &x) in samples.iter().enumerate() {
        let f = cdf(x);
        let above = (i + 1) as f64 / n as f64 - f;
        let below = f - i as f64 / n as f64;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// One compared quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub point: String,
    pub analytic: f64,
    pub empirical: f64,
    pub std_error: f64,
    pub ks_distance: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ReportRow {
    /// Passes when `|analytic - empirical| <= tolerance`.
    pub fn absolute(point: impl Into<String>, analytic: f64, empirical: f64, std_error: f64, tolerance: f64) -> Self {
        ReportRow {
            point: point.into(),
            analytic,
            empirical,
            std_error,
            ks_distance: None,
            tolerance,
            pass: (analytic - empirical).abs() <= tolerance,
        }
    }

    /// Passes when `|z| <= z_max`; the tolerance column holds `z_max * se`.
    pub fn z_bound(point: impl Into<String>, analytic: f64, empirical: f64, std_error: f64, z_max: f64) -> Self {
        ReportRow::absolute(point, analytic, empirical, std_error, z_max * std_error)
    }

    pub fn z_score(&self) -> f64 {
        if self.std_error > 0.0 {
            (self.empirical - self.analytic) / self.std_error
        } else if self.empirical == self.analytic {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub experiment: String,
    pub seed: u64,
    pub n_paths: usize,
    pub rows: Vec<ReportRow>,
    pub runtime_s: f64,
}

impl VerificationReport {
    pub fn pass(&self) -> bool {
        !self.rows.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{}: {} ({} paths, seed {}, {:.2}s)\n",
            self.experiment,
            if self.pass() { "PASS" } else { "FAIL" },
            self.n_paths,
            self.seed,
            self.runtime_s
        );
        for r in &self.rows {
            out.push_str(&format!(
                "  {:<24} analytic {:>12.6} empirical {:>12.6} se {:>10.2e} tol {:>10.2e} {}\n",
                r.point,
                r.analytic,
                r.empirical,
                r.std_error,
                r.tolerance,
                if r.pass { "ok" } else { "FAIL" }
            ));
        }
        out
    }
}

/// Simulation settings shared by the checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McSettings {
    pub n_paths: usize,
    pub dt: f64,
    pub horizon: f64,
    pub seed: u64,
}

/// The analytic base matching a simulated model: martingales use the
/// identity scale, drifted models their scale function.
pub fn base_for(model: &ProcessModel) -> Result<Base> {
    Ok(match model {
        ProcessModel::GbmMartingale { m, .. } => Base::Martingale { start: *m },
        ProcessModel::BrownianDrift { y0, b, .. } if *b == 0.0 => Base::Martingale { start: *y0 },
        ProcessModel::BrownianDrift { y0, b, sigma } => Base::Diffusion(Arc::new(ScaleTable::new(
            DiffusionSpec::brownian_drift(*y0, *b, *sigma)?,
        )?)),
        ProcessModel::GenericDiffusion(spec) => Base::Diffusion(Arc::new(ScaleTable::new(spec.clone())?)),
    })
}

fn finish(experiment: &str, mc: &McSettings, rows: Vec<ReportRow>, started: Instant) -> VerificationReport {
    VerificationReport {
        experiment: experiment.to_string(),
        seed: mc.seed,
        n_paths: mc.n_paths,
        rows,
        runtime_s: started.elapsed().as_secs_f64(),
    }
}

/// `m / running max` at absorption near zero against the uniform law.
pub fn check_doob(model: &ProcessModel, eps: f64, ks_bound: f64, mc: &McSettings) -> Result<VerificationReport> {
    let started = Instant::now();
    let m = model.start();
    if !(eps > 0.0 && eps < m) {
        return Err(Error::PreconditionViolated(format!(
            "absorption level {eps} must lie in (0, {m})"
        )));
    }
    let spec = StopSpec::default().with_eps(eps);
    let stats = simulate_many(model, mc.dt, mc.horizon, mc.seed, mc.n_paths, &spec)?;
    let mut ratios: Vec<f64> = stats.iter().map(|s| m / s.ybar_at_stop).collect();
    ratios.sort_by(f64::total_cmp);
    let d = ks_distance(&ratios, |u| u.clamp(0.0, 1.0))?;
    let (below_half, se) = estimate_probability(&ratios, |&u| u <= 0.5)?;
    let mut rows = vec![ReportRow {
        point: "ks_uniform".into(),
        analytic: 0.0,
        empirical: d,
        std_error: 0.0,
        ks_distance: Some(d),
        tolerance: ks_bound,
        pass: d <= ks_bound,
    }];
    rows.push(ReportRow::z_bound("p(ratio<=0.5)", 0.5, below_half, se, 4.0));
    Ok(finish("doob", mc, rows, started))
}

/// Compares the lognormal put `E[(k - M_t)^+]` with `k P[g_k <= t]` on one path
/// set. The last passage event is decided by running each path past `t`
/// until it either climbs back to `k` or is absorbed at `eps`.
pub fn check_identity_mry(
    model: &ProcessModel,
    k: f64,
    t: f64,
    eps: f64,
    oracle_tolerance: f64,
    mc: &McSettings,
) -> Result<VerificationReport> {
    let started = Instant::now();
    mry_put_price(k, model.start(), 0.0)?;
    let ProcessModel::GbmMartingale { m, vol } = *model else {
        return Err(Error::PreconditionViolated(
            "the put identity check needs the lognormal model".into(),
        ));
    };
    let steps_to_t = (t / mc.dt).round() as usize;
    if steps_to_t == 0 || ((steps_to_t as f64) * mc.dt - t).abs() > 1e-9 * t {
        return Err(Error::PreconditionViolated(format!(
            "t = {t} must be a multiple of dt = {}",
            mc.dt
        )));
    }
    let pairs: Vec<(f64, f64)> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut gen = StepGenerator::new(model, mc.dt, t + mc.horizon, mc.seed, i)?;
            let mut m_t = m;
            for _ in 0..steps_to_t {
                m_t = gen.next().expect("grid reaches t")?.value;
            }
            let mut tracker = StopTracker::new(StopSpec::default().with_target(k).with_eps(eps), m_t);
            if !tracker.is_stopped() {
                for step in gen.by_ref() {
                    if tracker.push(&step?) {
                        break;
                    }
                }
            }
            let returned = tracker.finish().stop_reason == StopReason::TargetHit;
            Ok(((k - m_t).max(0.0), if returned { 0.0 } else { k }))
        })
        .collect::<Result<_>>()?;
    let lhs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (l, se_l) = mean_and_se(&lhs)?;
    let (r, se_r) = mean_and_se(&rhs)?;
    let pooled = (se_l * se_l + se_r * se_r).sqrt();
    let oracle = gbm_put_price(m, vol, k, t)?;
    let rows = vec![
        ReportRow::z_bound("identity", r, l, pooled, 3.0),
        ReportRow::absolute("put_vs_oracle", oracle, l, se_l, oracle_tolerance),
    ];
    Ok(finish("mry_identity", mc, rows, started))
}

/// Which law a survival family compares.
#[derive(Debug, Clone, PartialEq)]
pub enum SurvivalQuery {
    /// `P[running max at the trigger > x]` on a grid of `x`.
    SupSurvival(Vec<f64>),
    /// `P[no trigger before reaching k]`.
    NoBreach(f64),
}

/// Empirical against analytic survival at time zero. Each point passes when
/// within `abs_tolerance`, or within 4 standard errors when that is `None`.
pub fn check_survival_family(
    model: &ProcessModel,
    rule: &StopRule,
    query: &SurvivalQuery,
    abs_tolerance: Option<f64>,
    mc: &McSettings,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let t = LambdaTransform::new(rule.clone(), base_for(model)?)?;
    let st = MarketState::at_start(model.start());
    let row = |point: String, analytic: f64, p: f64, se: f64| match abs_tolerance {
        Some(tol) => ReportRow::absolute(point, analytic, p, se, tol),
        None => ReportRow::z_bound(point, analytic, p, se, 4.0),
    };
    let rows = match query {
        SurvivalQuery::NoBreach(k) => {
            let spec = StopSpec::rule(rule.clone()).with_target(*k);
            let stats = simulate_many(model, mc.dt, mc.horizon, mc.seed, mc.n_paths, &spec)?;
            let (p, se) = estimate_probability(&stats, |s| s.stop_reason == StopReason::TargetHit)?;
            vec![row(format!("k={k}"), no_breach_probability(&t, &st, *k)?, p, se)]
        }
        SurvivalQuery::SupSurvival(grid) => {
            let top = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            // Paths reaching above the grid are settled; stop them there.
            let spec = StopSpec::rule(rule.clone()).with_target(top.max(st.ybar) + 1e-9);
            let stats = simulate_many(model, mc.dt, mc.horizon, mc.seed, mc.n_paths, &spec)?;
            let mut rows = Vec::with_capacity(grid.len());
            for &x in grid {
                let (p, se) = estimate_probability(&stats, |s| s.ybar_at_stop > x)?;
                rows.push(row(format!("x={x}"), sup_survival(&t, &st, x)?, p, se));
            }
            rows
        }
    };
    Ok(finish("survival", mc, rows, started))
}

/// Paths stopped at `T' = t_obs ∧ T_K ∧ T_lambda`: the share with no new
/// maximum between `T'` and the trigger against the average of the analytic
/// last passage probability at `T'`.
pub fn check_last_passage(
    model: &ProcessModel,
    rule: &StopRule,
    t_obs: f64,
    k: f64,
    mc: &McSettings,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let t = LambdaTransform::new(rule.clone(), base_for(model)?)?;
    let obs_steps = (t_obs / mc.dt).round() as usize;
    if obs_steps == 0 {
        return Err(Error::PreconditionViolated(format!(
            "observation time {t_obs} shorter than dt"
        )));
    }
    let pairs: Vec<(f64, f64)> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64)> {
            let mut gen = StepGenerator::new(model, mc.dt, t_obs + mc.horizon, mc.seed, i)?;
            let mut first = StopTracker::new(StopSpec::rule(rule.clone()).with_target(k), model.start());
            let mut value = model.start();
            for _ in 0..obs_steps {
                if first.is_stopped() {
                    break;
                }
                let step = gen.next().expect("grid reaches the observation time")?;
                value = step.value;
                first.push(&step);
            }
            let early = first.finish();
            match early.stop_reason {
                StopReason::RuleHit => return Ok((1.0, 1.0)),
                StopReason::TargetHit => return Ok((0.0, 0.0)),
                _ => {}
            }
            let ybar = first.ybar();
            let analytic = last_passage_cdf(&t, &MarketState::new(value, ybar)?)?;
            // Continue with the rule only, from the state at T'.
            let mut tracker = StopTracker::new(StopSpec::rule(rule.clone()), ybar);
            for step in gen.by_ref() {
                if tracker.push(&step?) {
                    break;
                }
            }
            let no_new_max = tracker.ybar() <= ybar;
            Ok((if no_new_max { 1.0 } else { 0.0 }, analytic))
        })
        .collect::<Result<_>>()?;
    let event: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let analytic: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let (e, se_e) = mean_and_se(&event)?;
    let (a, se_a) = mean_and_se(&analytic)?;
    let pooled = (se_e * se_e + se_a * se_a).sqrt();
    let rows = vec![ReportRow::z_bound(format!("t={t_obs}"), a, e, pooled, 3.0)];
    Ok(finish("last_passage", mc, rows, started))
}

/// Per-level state of the discretely rebalanced replicating portfolio.
#[derive(Debug, Clone, Copy)]
struct Hedger {
    stride: usize,
    ybar: f64,
    last: f64,
    phi: f64,
    portfolio: f64,
    error: Option<f64>,
}

/// Replicates the trigger claim `h(running max)` by trading the underlying at
/// each `dt` of `dt_ladder` along shared finest paths. The running maximum,
/// trigger and payoff are all read off the rebalancing grid.
pub fn check_hedge_replication(
    model: &ProcessModel,
    rule: &StopRule,
    h: &Func,
    dt_ladder: &[f64],
    min_ratio: f64,
    mc: &McSettings,
) -> Result<VerificationReport> {
    let started = Instant::now();
    let is_martingale = matches!(model, ProcessModel::GbmMartingale { .. })
        || matches!(model, ProcessModel::BrownianDrift { b, .. } if *b == 0.0);
    if !is_martingale {
        return Err(Error::PreconditionViolated(
            "replication is checked for martingale models".into(),
        ));
    }
    if dt_ladder.is_empty() {
        return Err(Error::Empty);
    }
    let fine = dt_ladder.iter().copied().fold(f64::INFINITY, f64::min);
    let mut strides = Vec::with_capacity(dt_ladder.len());
    for &dt in dt_ladder {
        let s = (dt / fine).round();
        if (s * fine - dt).abs() > 1e-9 * dt {
            return Err(Error::PreconditionViolated(format!(
                "dt {dt} is not a multiple of {fine}"
            )));
        }
        strides.push(s as usize);
    }
    let m = model.start();
    let t = LambdaTransform::martingale(rule.clone(), m)?;
    let anchors: Vec<f64> = (0..64).map(|i| m * (1.0 + 0.05 * i as f64)).collect();
    let table = TiltTable::new(&t, h.clone(), anchors)?;
    let price0 = table.eval(m)?;
    let coefficient = |ybar: f64| -> Result<f64> {
        let st = MarketState::at_start(ybar);
        hedge_from(&t, &st, h.eval(ybar), table.eval(ybar)?)
    };
    let phi0 = coefficient(m)?;

    let per_path: Vec<Vec<(f64, f64)>> = (0..mc.n_paths as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<(f64, f64)>> {
            let mut levels: Vec<Hedger> = strides
                .iter()
                .map(|&stride| Hedger {
                    stride,
                    ybar: m,
                    last: m,
                    phi: phi0,
                    portfolio: price0,
                    error: None,
                })
                .collect();
            let gen = StepGenerator::new(model, fine, mc.horizon, mc.seed, i)?;
            for step in gen {
                let step = step?;
                let value = step.value;
                for lv in levels
                    .iter_mut()
                    .filter(|lv| lv.error.is_none() && step.index % lv.stride == 0)
                {
                    lv.portfolio += lv.phi * (value - lv.last);
                    lv.last = value;
                    let grew = value > lv.ybar;
                    lv.ybar = lv.ybar.max(value);
                    if value <= t.boundary(lv.ybar)? {
                        lv.error = Some(lv.portfolio - h.eval(lv.ybar));
                    } else if grew {
                        lv.phi = coefficient(lv.ybar)?;
                    }
                }
                if levels.iter().all(|lv| lv.error.is_some()) {
                    break;
                }
            }
            // Untriggered at the horizon: compare with the claim's value there.
            for lv in levels.iter_mut().filter(|lv| lv.error.is_none()) {
                let st = MarketState::new(lv.last.min(lv.ybar), lv.ybar)?;
                let hl = table.eval(lv.ybar)?;
                let price = crate::analytics::cond_expectation_from(&t, &st, h.eval(lv.ybar), hl)?;
                lv.error = Some(lv.portfolio - price);
            }
            Ok(levels
                .iter()
                .map(|lv| (lv.error.unwrap_or(f64::NAN), lv.portfolio))
                .collect())
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut rms = Vec::with_capacity(strides.len());
    for (j, &dt) in dt_ladder.iter().enumerate() {
        let sq: Vec<f64> = per_path.iter().map(|p| p[j].0 * p[j].0).collect();
        let (ms, se_ms) = mean_and_se(&sq)?;
        let r = ms.sqrt();
        let se_r = if r > 0.0 { se_ms / (2.0 * r) } else { 0.0 };
        rms.push((dt, r, se_r));
        let finals: Vec<f64> = per_path.iter().map(|p| p[j].1).collect();
        let (mean, se) = mean_and_se(&finals)?;
        rows.push(ReportRow::z_bound(
            format!("mean_portfolio_dt={dt}"),
            price0,
            mean,
            se,
            3.0,
        ));
    }
    rms.sort_by(|a, b| b.0.total_cmp(&a.0));
    for w in rms.windows(2) {
        let (coarse, fine_) = (w[0], w[1]);
        let ratio = if fine_.1 > 0.0 {
            coarse.1 / fine_.1
        } else {
            f64::INFINITY
        };
        rows.push(ReportRow {
            point: format!("rms_ratio_dt={}/{}", coarse.0, fine_.0),
            analytic: min_ratio,
            empirical: ratio,
            std_error: 0.0,
            ks_distance: None,
            tolerance: 0.0,
            pass: ratio >= min_ratio || (coarse.1 == 0.0 && fine_.1 == 0.0),
        });
    }
    for (dt, r, se) in rms {
        rows.push(ReportRow {
            point: format!("rms_dt={dt}"),
            analytic: 0.0,
            empirical: r,
            std_error: se,
            ks_distance: None,
            tolerance: f64::INFINITY,
            pass: r.is_finite(),
        });
    }
    Ok(finish("hedge_replication", mc, rows, started))
}
