//! Run configuration: a flat `key = value` file with `[model]`, `[rule]`,
//! `[experiment]` and `[output]` sections. Everything is validated at load
//! time, and every failure names the offending `section.key`.

use std::collections::BTreeSet;
use std::path::PathBuf;
use std::sync::Arc;

use ini::{Ini, ParseOption, Properties};

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::func::Func;
use crate::scale::{DiffusionSpec, ScaleTable};
use crate::simulate::ProcessModel;
use crate::transforms::{Base, LambdaTransform, StopRule};

/// Every recognised key with a one-line summary, as listed by `--help`.
pub const KEYS: &[(&str, &str)] = &[
    ("model.kind", "gbm | brownian | bessel | diffusion"),
    ("model.m", "gbm start value, > 0"),
    ("model.vol", "gbm volatility, > 0"),
    ("model.y0", "start value for brownian, bessel (> 0) and diffusion (inside [lo, hi])"),
    ("model.b", "brownian drift, finite"),
    ("model.sigma", "brownian volatility (> 0), or diffusion volatility expression in y, positive on (lo, hi)"),
    ("model.delta", "bessel dimension, > 0"),
    ("model.mu", "diffusion drift expression in y"),
    ("model.lo", "diffusion lower end (default -inf)"),
    ("model.hi", "diffusion upper end (default inf)"),
    ("model.norm_c", "scale offset c (default 0); results do not depend on it"),
    ("model.norm_d", "scale slope d > 0 (default 1); results do not depend on it"),
    ("rule.kind", "downfall | fixed_drawdown | relative_drawdown | upper_target | custom"),
    ("rule.level", "downfall floor below the start, or upper_target level above it"),
    ("rule.c", "fixed_drawdown size > 0, or relative_drawdown fraction in (0, 1)"),
    ("rule.lambda", "custom boundary expression in the running max, below it and non-decreasing"),
    ("experiment.quantity", "dist: sup_survival | last_passage | no_breach | max_dd_upper | max_rdd_upper | max_dd_lower | max_rdd_lower | a_inf_survival | lehoczky"),
    ("experiment.check", "verify: doob | survival | no_breach | mry | last_passage | hedge"),
    ("experiment.grid", "comma separated evaluation points (x, k or y by quantity)"),
    ("experiment.y", "current value (default the model start)"),
    ("experiment.ybar", "current running max, >= y (default max(y, start))"),
    ("experiment.states", "price: comma separated y:ybar pairs"),
    ("experiment.k", "target level: upper for no_breach, mry, last_passage and simulate; lower for max_*_lower"),
    ("experiment.h", "payoff expression in the running max"),
    ("experiment.f", "a_inf_survival hazard expression in a, positive"),
    ("experiment.support", "a_inf_survival support end (default inf)"),
    ("experiment.x0", "a_inf_survival current value, in [0, 1]"),
    ("experiment.a0", "a_inf_survival current finite-variation level, >= 0"),
    ("experiment.n_paths", "number of simulated paths, >= 2"),
    ("experiment.dt", "time step, > 0"),
    ("experiment.horizon", "simulation horizon, > 0"),
    ("experiment.eps_absorb", "absorption level below the start, > 0"),
    ("experiment.seed", "RNG seed (u64); --seed overrides"),
    ("experiment.t", "observation time for mry and last_passage, a multiple of dt"),
    ("experiment.ks_bound", "doob KS distance bound (default 0.01)"),
    ("experiment.tolerance", "absolute tolerance; survival checks fall back to 4 standard errors"),
    ("experiment.dt_ladder", "hedge: comma separated rebalancing steps, multiples of the finest"),
    ("experiment.min_ratio", "hedge: minimum RMS error ratio between ladder steps (default 1.3)"),
    ("output.path", "CSV destination (default stdout); --out overrides"),
    ("output.precision", "significant digits in CSV numbers, 1..=17 (default 17)"),
];

pub const QUANTITIES: &[&str] = &[
    "sup_survival",
    "last_passage",
    "no_breach",
    "max_dd_upper",
    "max_rdd_upper",
    "max_dd_lower",
    "max_rdd_lower",
    "a_inf_survival",
    "lehoczky",
];

pub const CHECKS: &[&str] = &["doob", "survival", "no_breach", "mry", "last_passage", "hedge"];

#[derive(Debug, Clone)]
pub struct ModelConfig {
    pub process: ProcessModel,
    /// Analytic counterpart, with the configured scale normalization.
    pub base: Base,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentConfig {
    pub quantity: Option<String>,
    pub check: Option<String>,
    pub grid: Option<Vec<f64>>,
    pub y: Option<f64>,
    pub ybar: Option<f64>,
    pub states: Option<Vec<(f64, f64)>>,
    pub k: Option<f64>,
    pub h: Option<Func>,
    pub f: Option<Func>,
    pub support: Option<f64>,
    pub x0: Option<f64>,
    pub a0: Option<f64>,
    pub n_paths: Option<usize>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub eps_absorb: Option<f64>,
    pub seed: Option<u64>,
    pub t: Option<f64>,
    pub ks_bound: Option<f64>,
    pub tolerance: Option<f64>,
    pub dt_ladder: Option<Vec<f64>>,
    pub min_ratio: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
    pub precision: usize,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub rule: Option<StopRule>,
    pub experiment: ExperimentConfig,
    pub output: OutputConfig,
}

pub fn config_error(key: impl Into<String>, message: impl std::fmt::Display) -> Error {
    Error::Config {
        key: key.into(),
        message: message.to_string(),
    }
}

/// Typed reads from one section, keyed as `section.key` in errors.
struct Section<'a> {
    name: &'static str,
    props: Option<&'a Properties>,
}

impl<'a> Section<'a> {
    fn key(&self, key: &str) -> String {
        format!("{}.{key}", self.name)
    }

    fn raw(&self, key: &str) -> Option<&'a str> {
        self.props.and_then(|p| p.get(key)).map(str::trim)
    }

    fn required(&self, key: &str) -> Result<&'a str> {
        self.raw(key).ok_or_else(|| config_error(self.key(key), "missing"))
    }

    fn number(&self, key: &str) -> Result<Option<f64>> {
        self.raw(key)
            .map(|v| parse_number(v).map_err(|m| config_error(self.key(key), m)))
            .transpose()
    }

    fn required_number(&self, key: &str) -> Result<f64> {
        let v = self.required(key)?;
        parse_number(v).map_err(|m| config_error(self.key(key), m))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        let Some(v) = self.raw(key) else { return Ok(None) };
        let items = v
            .split(',')
            .map(|s| parse_number(s.trim()))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|m| config_error(self.key(key), m))?;
        if items.is_empty() {
            return Err(config_error(self.key(key), "empty list"));
        }
        Ok(Some(items))
    }

    fn integer<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| config_error(self.key(key), format!("{v:?}: {e}")))
            })
            .transpose()
    }

    fn expr(&self, key: &str) -> Result<Option<Func>> {
        self.raw(key)
            .map(|v| {
                Expr::parse(v)
                    .map(Func::from_expr)
                    .map_err(|e| config_error(self.key(key), e))
            })
            .transpose()
    }

    fn at<T>(&self, key: &str, r: Result<T>) -> Result<T> {
        r.map_err(|e| config_error(self.key(key), e))
    }
}

fn parse_number(v: &str) -> std::result::Result<f64, String> {
    let x: f64 = v.parse().map_err(|_| format!("{v:?} is not a number"))?;
    if x.is_nan() {
        return Err("NaN is not allowed".into());
    }
    Ok(x)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let opt = ParseOption {
            enabled_quote: false,
            enabled_escape: false,
            ..ParseOption::default()
        };
        let ini = Ini::load_from_str_opt(text, opt).map_err(|e| config_error("<file>", e))?;
        reject_unknown(&ini)?;
        let section = |name: &'static str| Section {
            name,
            props: ini.section(Some(name)),
        };
        let model = load_model(&section("model"))?;
        let rule = load_rule(&section("rule"), &model)?;
        let experiment = load_experiment(&section("experiment"))?;
        let output = load_output(&section("output"))?;
        Ok(RunConfig {
            model,
            rule,
            experiment,
            output,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| config_error("--config", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// The configured rule on the model's base, or a `rule.kind` error.
    pub fn transform(&self) -> Result<LambdaTransform> {
        let rule = self.rule.clone().ok_or_else(|| config_error("rule.kind", "missing"))?;
        LambdaTransform::new(rule, self.model.base.clone()).map_err(|e| config_error("rule.kind", e))
    }
}

fn reject_unknown(ini: &Ini) -> Result<()> {
    let known: BTreeSet<&str> = KEYS.iter().map(|(k, _)| *k).collect();
    for (name, props) in ini.iter() {
        let Some(name) = name else {
            if let Some((key, _)) = props.iter().next() {
                return Err(config_error(key, "assignment outside a section"));
            }
            continue;
        };
        if !matches!(name, "model" | "rule" | "experiment" | "output") {
            return Err(config_error(format!("[{name}]"), "unknown section"));
        }
        for (key, _) in props.iter() {
            let full = format!("{name}.{key}");
            if !known.contains(full.as_str()) {
                return Err(config_error(full, "unknown key"));
            }
        }
    }
    Ok(())
}

fn load_model(s: &Section) -> Result<ModelConfig> {
    let kind = s.required("kind")?;
    // `table_key` names the key blamed when the scale cannot be built.
    let normalize = |spec: DiffusionSpec, table_key: &str| -> Result<Base> {
        let c = s.number("norm_c")?.unwrap_or(0.0);
        let d = s.number("norm_d")?.unwrap_or(1.0);
        let spec = s.at("norm_d", spec.with_normalization(c, d))?;
        Ok(Base::Diffusion(Arc::new(s.at(table_key, ScaleTable::new(spec))?)))
    };
    Ok(match kind {
        "gbm" => {
            let m = s.required_number("m")?;
            let vol = s.required_number("vol")?;
            ModelConfig {
                process: s.at("m", ProcessModel::gbm(m, vol))?,
                base: Base::Martingale { start: m },
            }
        }
        "brownian" => {
            let y0 = s.required_number("y0")?;
            let b = s.number("b")?.unwrap_or(0.0);
            let sigma = s.required_number("sigma")?;
            let process = s.at("sigma", ProcessModel::brownian_drift(y0, b, sigma))?;
            let base = if b == 0.0 && s.raw("norm_c").is_none() && s.raw("norm_d").is_none() {
                Base::Martingale { start: y0 }
            } else {
                normalize(s.at("sigma", DiffusionSpec::brownian_drift(y0, b, sigma))?, "sigma")?
            };
            ModelConfig { process, base }
        }
        "bessel" => {
            let delta = s.required_number("delta")?;
            let y0 = s.required_number("y0")?;
            if !(delta > 0.0) {
                return Err(config_error(
                    "model.delta",
                    format!("dimension must be positive, got {delta}"),
                ));
            }
            let spec = s.at("y0", DiffusionSpec::bessel(delta, y0))?;
            ModelConfig {
                base: normalize(spec.clone(), "delta")?,
                process: ProcessModel::GenericDiffusion(spec),
            }
        }
        "diffusion" => {
            let mu = s.expr("mu")?.ok_or_else(|| config_error("model.mu", "missing"))?;
            let sigma = s.expr("sigma")?.ok_or_else(|| config_error("model.sigma", "missing"))?;
            let y0 = s.required_number("y0")?;
            let lo = s.number("lo")?.unwrap_or(f64::NEG_INFINITY);
            let hi = s.number("hi")?.unwrap_or(f64::INFINITY);
            let spec = s.at("y0", DiffusionSpec::new(mu, sigma, y0, (lo, hi)))?;
            ModelConfig {
                base: normalize(spec.clone(), "sigma")?,
                process: ProcessModel::GenericDiffusion(spec),
            }
        }
        other => return Err(config_error("model.kind", format!("unknown model {other:?}"))),
    })
}

fn load_rule(s: &Section, model: &ModelConfig) -> Result<Option<StopRule>> {
    let Some(kind) = s.raw("kind") else {
        return Ok(None);
    };
    let (rule, key) = match kind {
        "downfall" => (StopRule::DownfallTo(s.required_number("level")?), "level"),
        "upper_target" => (StopRule::UpperTarget(s.required_number("level")?), "level"),
        "fixed_drawdown" => (StopRule::FixedDrawdown(s.required_number("c")?), "c"),
        "relative_drawdown" => (StopRule::RelativeDrawdown(s.required_number("c")?), "c"),
        "custom" => (
            StopRule::Custom(
                s.expr("lambda")?
                    .ok_or_else(|| config_error("rule.lambda", "missing"))?,
            ),
            "lambda",
        ),
        other => return Err(config_error("rule.kind", format!("unknown rule {other:?}"))),
    };
    if !matches!(rule, StopRule::UpperTarget(_)) {
        s.at(key, LambdaTransform::new(rule.clone(), model.base.clone()))?;
    }
    Ok(Some(rule))
}

fn load_experiment(s: &Section) -> Result<ExperimentConfig> {
    let quantity = s.raw("quantity").map(str::to_string);
    if let Some(q) = &quantity {
        if !QUANTITIES.contains(&q.as_str()) {
            return Err(config_error("experiment.quantity", format!("unknown quantity {q:?}")));
        }
    }
    let check = s.raw("check").map(str::to_string);
    if let Some(c) = &check {
        if !CHECKS.contains(&c.as_str()) {
            return Err(config_error("experiment.check", format!("unknown check {c:?}")));
        }
    }
    let states = s
        .raw("states")
        .map(|v| {
            v.split(',')
                .map(|pair| {
                    let (y, ybar) = pair
                        .split_once(':')
                        .ok_or_else(|| format!("{:?} is not a y:ybar pair", pair.trim()))?;
                    Ok((parse_number(y.trim())?, parse_number(ybar.trim())?))
                })
                .collect::<std::result::Result<Vec<_>, String>>()
        })
        .transpose()
        .map_err(|m| config_error("experiment.states", m))?;
    let positive = |key: &str, v: Option<f64>| -> Result<Option<f64>> {
        match v {
            Some(x) if !(x > 0.0) => Err(config_error(
                format!("experiment.{key}"),
                format!("must be positive, got {x}"),
            )),
            other => Ok(other),
        }
    };
    let n_paths: Option<usize> = s.integer("n_paths")?;
    if let Some(n) = n_paths {
        if n < 2 {
            return Err(config_error(
                "experiment.n_paths",
                format!("need at least 2 paths, got {n}"),
            ));
        }
    }
    Ok(ExperimentConfig {
        quantity,
        check,
        grid: s.list("grid")?,
        y: s.number("y")?,
        ybar: s.number("ybar")?,
        states,
        k: s.number("k")?,
        h: s.expr("h")?,
        f: s.expr("f")?,
        support: s.number("support")?,
        x0: s.number("x0")?,
        a0: s.number("a0")?,
        n_paths,
        dt: positive("dt", s.number("dt")?)?,
        horizon: positive("horizon", s.number("horizon")?)?,
        eps_absorb: positive("eps_absorb", s.number("eps_absorb")?)?,
        seed: s.integer("seed")?,
        t: positive("t", s.number("t")?)?,
        ks_bound: positive("ks_bound", s.number("ks_bound")?)?,
        tolerance: positive("tolerance", s.number("tolerance")?)?,
        dt_ladder: s.list("dt_ladder")?,
        min_ratio: s.number("min_ratio")?,
    })
}

fn load_output(s: &Section) -> Result<OutputConfig> {
    let precision = s.integer::<usize>("precision")?.unwrap_or(17);
    if !(1..=17).contains(&precision) {
        return Err(config_error(
            "output.precision",
            format!("must be in 1..=17, got {precision}"),
        ));
    }
    Ok(OutputConfig {
        path: s.raw("path").map(PathBuf::from),
        precision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key_of(text: &str) -> String {
        match RunConfig::parse(text) {
            Err(Error::Config { key, .. }) => key,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn loads_full_config() {
        let c = RunConfig::parse(
            "# comment\n[model]\nkind = gbm\nm = 1\nvol = 0.5\n[rule]\nkind = fixed_drawdown\nc = 0.5\n\
             [experiment]\ngrid = 1, 1.5, inf\nh = indicator(1.5, inf)\nstates = 1:1, 0.9:1.2\n[output]\nprecision = 12\n",
        )
        .unwrap();
        assert!(matches!(c.rule, Some(StopRule::FixedDrawdown(c)) if c == 0.5));
        assert_eq!(c.experiment.grid, Some(vec![1.0, 1.5, f64::INFINITY]));
        assert_eq!(c.experiment.states, Some(vec![(1.0, 1.0), (0.9, 1.2)]));
        assert_eq!(c.output.precision, 12);
        assert_eq!(c.experiment.h.unwrap().eval(2.0), 1.0);
    }

    #[test]
    fn errors_name_the_key() {
        assert_eq!(key_of("[model]\nkind = diffusion\nmu = 0\ny0 = 1\n"), "model.sigma");
        assert_eq!(key_of("[model]\nkind = gbm\nm = -1\nvol = 1\n"), "model.m");
        assert_eq!(key_of("[model]\nkind = gbm\nm = 1\nvol = x\n"), "model.vol");
        assert_eq!(
            key_of("[model]\nkind = gbm\nm = 1\nvol = 1\ncolour = red\n"),
            "model.colour"
        );
        assert_eq!(
            key_of("[model]\nkind = gbm\nm = 1\nvol = 1\n[rule]\nkind = downfall\nlevel = 2\n"),
            "rule.level"
        );
        assert_eq!(
            key_of("[model]\nkind = gbm\nm = 1\nvol = 1\n[experiment]\nh = y +\n"),
            "experiment.h"
        );
        assert_eq!(
            key_of("[model]\nkind = gbm\nm = 1\nvol = 1\n[experiment]\nquantity = nope\n"),
            "experiment.quantity"
        );
        assert_eq!(
            key_of("[model]\nkind = gbm\nm = 1\nvol = 1\n[output]\nprecision = 30\n"),
            "output.precision"
        );
        assert_eq!(key_of("[rule]\nkind = downfall\n"), "model.kind");
    }

    #[test]
    fn every_key_has_a_known_section() {
        for (key, _) in KEYS {
            let section = key.split('.').next().unwrap();
            assert!(matches!(section, "model" | "rule" | "experiment" | "output"), "{key}");
        }
    }
}
