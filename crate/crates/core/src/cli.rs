//! Command line front end: `dist`, `price`, `simulate` and `verify`, each
//! writing one CSV table.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::analytics::{
    a_inf_survival, cond_expectation_sup, hedge_integrand, last_passage_cdf, lehoczky_survival_with, max_dd_cdf_lower,
    max_dd_cdf_upper, max_rdd_cdf_lower, max_rdd_cdf_upper, no_breach_probability, sup_survival, MarketState,
    SigmaState,
};
use crate::config::{config_error, RunConfig, KEYS};
use crate::error::{Error, Result};
use crate::simulate::{simulate_many, with_threads, StopSpec};
use crate::transforms::{Base, SigmaTransform, StopRule};
use crate::verify::{
    check_doob, check_hedge_replication, check_identity_mry, check_last_passage, check_survival_family, McSettings,
    SurvivalQuery, VerificationReport,
};

pub const DIST_HEADER: &str = "quantity,x,survival";
pub const PRICE_HEADER: &str = "y,ybar,price,hedge";
pub const SIMULATE_HEADER: &str = "path,stop_index,stop_time,stop_reason,ybar_at_stop,g_last,max_dd,max_rdd";
pub const VERIFY_HEADER: &str =
    "experiment,point,n_paths,analytic,empirical,std_error,z_score,ks_distance,tolerance,pass,seed,runtime_s";

/// Exit codes.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

const DEFAULT_N_PATHS: usize = 10_000;
const DEFAULT_DT: f64 = 0.01;
const DEFAULT_HORIZON: f64 = 100.0;

#[derive(Parser, Debug)]
#[command(
    name = "ddlaws",
    version,
    about = "Drawdown, running maximum and last passage laws with Monte Carlo checks"
)]
#[command(after_help = config_help())]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed override.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Worker thread cap; results do not depend on it.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// CSV destination, overriding `output.path`.
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Analytic survival curves over `experiment.grid`.
    Dist,
    /// Trigger claim price and hedge over `experiment.states`.
    Price,
    /// Stopped path statistics, one row per path.
    Simulate,
    /// Monte Carlo check of an analytic law; exit 1 on failure.
    Verify,
}

fn config_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Config keys:\n");
    for (key, what) in KEYS {
        let _ = writeln!(out, "  {key:<width$}  {what}");
    }
    out.push_str("\nExit codes: 0 success, 1 verification failure, 2 configuration error.");
    out
}

/// Fixed significant-digit formatting that parses back to the same value at 17 digits.
pub fn fmt_num(v: f64, precision: usize) -> String {
    if v.is_nan() {
        "NaN".into()
    } else if v.is_infinite() {
        if v > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{:.*e}", precision.saturating_sub(1), v)
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(true) => EXIT_OK,
        Ok(false) => EXIT_VERIFY_FAILED,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// `Ok(false)` only for a failed verification.
fn execute(cli: &Cli) -> Result<bool> {
    let path = cli.config.as_ref().ok_or_else(|| config_error("--config", "missing"))?;
    let mut cfg = RunConfig::load(path)?;
    if cli.seed.is_some() {
        cfg.experiment.seed = cli.seed;
    }
    let out = cli.out.clone().or_else(|| cfg.output.path.clone());
    let command = cli.command;
    let (csv, passed) = with_threads(cli.threads, || -> Result<(String, bool)> {
        match command {
            Command::Dist => Ok((dist(&cfg)?, true)),
            Command::Price => Ok((price(&cfg)?, true)),
            Command::Simulate => Ok((simulate(&cfg)?, true)),
            Command::Verify => {
                let report = verify(&cfg)?;
                eprint!("{}", report.summary());
                Ok((verify_csv(&report, cfg.output.precision), report.pass()))
            }
        }
    })?;
    match out {
        Some(p) => std::fs::write(&p, csv).map_err(|e| config_error("output.path", format!("{}: {e}", p.display())))?,
        None => print!("{csv}"),
    }
    Ok(passed)
}

fn state(cfg: &RunConfig) -> Result<MarketState> {
    let start = cfg.model.process.start();
    let y = cfg.experiment.y.unwrap_or(start);
    let ybar = cfg.experiment.ybar.unwrap_or(y.max(start));
    MarketState::new(y, ybar).map_err(|e| config_error("experiment.ybar", e))
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone().ok_or_else(|| config_error(key, "missing"))
}

fn dist(cfg: &RunConfig) -> Result<String> {
    let e = &cfg.experiment;
    let quantity = e.quantity.as_deref().unwrap_or("sup_survival");
    let grid = require(&e.grid, "experiment.grid")?;
    let p = cfg.output.precision;
    let base = &cfg.model.base;
    let mut csv = format!("{DIST_HEADER}\n");
    let mut row = |x: f64, v: f64| {
        let _ = writeln!(csv, "{quantity},{},{}", fmt_num(x, p), fmt_num(v, p));
    };
    match quantity {
        "sup_survival" | "last_passage" | "no_breach" => {
            let t = cfg.transform()?;
            let st = state(cfg)?;
            for &x in &grid {
                let v = match quantity {
                    "sup_survival" => sup_survival(&t, &st, x)?,
                    // survival of the last passage time past the current time
                    "last_passage" => 1.0 - last_passage_cdf(&t, &MarketState::new(x, st.ybar)?)?,
                    _ => no_breach_probability(&t, &st, x)?,
                };
                row(x, v);
            }
        }
        "max_dd_upper" | "max_rdd_upper" | "max_dd_lower" | "max_rdd_lower" => {
            let k = require(&e.k, "experiment.k")?;
            let st = state(cfg)?;
            let cdf = match quantity {
                "max_dd_upper" => max_dd_cdf_upper,
                "max_rdd_upper" => max_rdd_cdf_upper,
                "max_dd_lower" => max_dd_cdf_lower,
                _ => max_rdd_cdf_lower,
            };
            for &x in &grid {
                row(x, 1.0 - cdf(&st, k, x, base)?);
            }
        }
        "a_inf_survival" => {
            let f = require(&e.f, "experiment.f")?;
            let t = match e.support {
                Some(a) => SigmaTransform::with_support(f, a).map_err(|err| config_error("experiment.support", err))?,
                None => SigmaTransform::new(f),
            };
            let st = SigmaState::new(e.x0.unwrap_or(0.0), e.a0.unwrap_or(0.0))
                .map_err(|err| config_error("experiment.x0", err))?;
            for &x in &grid {
                row(x, a_inf_survival(&t, &st, x)?);
            }
        }
        _ => {
            let Some(StopRule::FixedDrawdown(c)) = cfg.rule else {
                return Err(config_error("rule.kind", "lehoczky needs fixed_drawdown"));
            };
            let t = cfg.transform()?;
            let st = MarketState::at_start(t.start());
            for &x in &grid {
                let v = match base {
                    Base::Diffusion(table) => lehoczky_survival_with(table, c, x)?,
                    Base::Martingale { .. } => sup_survival(&t, &st, x)?,
                };
                row(x, v);
            }
        }
    }
    Ok(csv)
}

fn price(cfg: &RunConfig) -> Result<String> {
    let t = cfg.transform()?;
    let h = require(&cfg.experiment.h, "experiment.h")?;
    let states = match &cfg.experiment.states {
        Some(s) => s.clone(),
        None => {
            let st = state(cfg)?;
            vec![(st.y, st.ybar)]
        }
    };
    let p = cfg.output.precision;
    let mut csv = format!("{PRICE_HEADER}\n");
    for (y, ybar) in states {
        let st = MarketState::new(y, ybar).map_err(|e| config_error("experiment.states", e))?;
        let price = cond_expectation_sup(&t, &st, &h)?;
        let hedge = hedge_integrand(&t, &st, &h)?;
        let _ = writeln!(
            csv,
            "{},{},{},{}",
            fmt_num(y, p),
            fmt_num(ybar, p),
            fmt_num(price, p),
            fmt_num(hedge, p)
        );
    }
    Ok(csv)
}

fn mc(cfg: &RunConfig) -> McSettings {
    let e = &cfg.experiment;
    McSettings {
        n_paths: e.n_paths.unwrap_or(DEFAULT_N_PATHS),
        dt: e.dt.unwrap_or(DEFAULT_DT),
        horizon: e.horizon.unwrap_or(DEFAULT_HORIZON),
        seed: e.seed.unwrap_or(0),
    }
}

fn simulate(cfg: &RunConfig) -> Result<String> {
    let e = &cfg.experiment;
    let mc = mc(cfg);
    let mut spec = StopSpec {
        rule: cfg.rule.clone(),
        ..StopSpec::default()
    };
    if let Some(k) = e.k {
        spec = spec.with_target(k);
    }
    if let Some(eps) = e.eps_absorb {
        spec = spec.with_eps(eps);
    }
    let stats = simulate_many(&cfg.model.process, mc.dt, mc.horizon, mc.seed, mc.n_paths, &spec)?;
    let p = cfg.output.precision;
    let mut csv = format!("{SIMULATE_HEADER}\n");
    for (i, s) in stats.iter().enumerate() {
        let _ = writeln!(
            csv,
            "{i},{},{},{},{},{},{},{}",
            s.stop_index.map(|v| v.to_string()).unwrap_or_default(),
            fmt_num(s.stop_time, p),
            s.stop_reason.as_str(),
            fmt_num(s.ybar_at_stop, p),
            fmt_num(s.g_last, p),
            fmt_num(s.max_dd, p),
            fmt_num(s.max_rdd, p),
        );
    }
    Ok(csv)
}

fn verify(cfg: &RunConfig) -> Result<VerificationReport> {
    let e = &cfg.experiment;
    let mc = mc(cfg);
    let model = &cfg.model.process;
    let check = require(&e.check, "experiment.check")?;
    let rule = || require(&cfg.rule, "rule.kind");
    match check.as_str() {
        "doob" => {
            let eps = e.eps_absorb.unwrap_or(1e-4 * model.start());
            check_doob(model, eps, e.ks_bound.unwrap_or(0.01), &mc)
        }
        "survival" => {
            let grid = require(&e.grid, "experiment.grid")?;
            check_survival_family(model, &rule()?, &SurvivalQuery::SupSurvival(grid), e.tolerance, &mc)
        }
        "no_breach" => {
            let k = require(&e.k, "experiment.k")?;
            check_survival_family(model, &rule()?, &SurvivalQuery::NoBreach(k), e.tolerance, &mc)
        }
        "mry" => {
            let k = require(&e.k, "experiment.k")?;
            let t = require(&e.t, "experiment.t")?;
            let eps = e.eps_absorb.unwrap_or(1e-4 * model.start());
            check_identity_mry(model, k, t, eps, e.tolerance.unwrap_or(0.005), &mc)
        }
        "last_passage" => {
            let k = require(&e.k, "experiment.k")?;
            let t = require(&e.t, "experiment.t")?;
            check_last_passage(model, &rule()?, t, k, &mc)
        }
        _ => {
            let h = require(&e.h, "experiment.h")?;
            let ladder = require(&e.dt_ladder, "experiment.dt_ladder")?;
            check_hedge_replication(model, &rule()?, &h, &ladder, e.min_ratio.unwrap_or(1.3), &mc)
        }
    }
    .map_err(|err| match err {
        Error::PreconditionViolated(m) => config_error(format!("experiment.check = {check}"), m),
        other => other,
    })
}

/// The report as CSV; `runtime_s` is the only column that varies between
/// identical runs.
pub fn verify_csv(report: &VerificationReport, precision: usize) -> String {
    let p = precision;
    let mut csv = format!("{VERIFY_HEADER}\n");
    for r in &report.rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            report.experiment,
            r.point,
            report.n_paths,
            fmt_num(r.analytic, p),
            fmt_num(r.empirical, p),
            fmt_num(r.std_error, p),
            fmt_num(r.z_score(), p),
            r.ks_distance.map(|d| fmt_num(d, p)).unwrap_or_default(),
            fmt_num(r.tolerance, p),
            r.pass,
            report.seed,
            fmt_num(report.runtime_s, p),
        );
    }
    csv
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_round_trip_at_full_precision() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 6.02e23, 0.0] {
            let s = fmt_num(v, 17);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits(), "{s}");
        }
        assert_eq!(fmt_num(f64::INFINITY, 17), "inf");
        assert_eq!(fmt_num(0.5, 3), "5.00e-1");
    }

    #[test]
    fn help_lists_every_key() {
        let help = config_help();
        for (key, _) in KEYS {
            assert!(help.contains(key), "{key}");
        }
    }
}
