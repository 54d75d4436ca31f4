//! Flat `key = value` experiment configuration.
//!
//! One experiment per file, `#` starts a comment. Recognized keys and
//! their defaults:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `experiment` | from the subcommand, else `simulate` | simulate, asclt, calibrate, diagnose, limit |
//! | `field` | `gaussian` | gaussian, chi, orderstat |
//! | `d`, `r` | 1, 1 | component count and rank for chi / orderstat |
//! | `family` | `independent` | independent, geometric, polynomial |
//! | `theta` | 0.5 | geometric parameter |
//! | `c`, `alpha` | 0.5, 1 | polynomial parameters |
//! | `trend` | `zero` | zero, constant(c), linear(c1,c2), sinusoid(c[,p1,p2]) |
//! | `lambda` | `point(1)` | point(p), twopoint(p1,p2,w), beta(a,b) |
//! | `shape` / `shapes` | required except for limit | `64x64`, or a comma list `16,32,64` |
//! | `tau`, `kappa` | | exceedance targets, κ ≥ τ > 0 |
//! | `x`, `y` | | Gumbel coordinates, x ≤ y, instead of targets |
//! | `replications` | 10000 | Monte Carlo replications (simulate, at least 100) |
//! | `seed` | 0 | master seed |
//! | `ratio_bound` | 4 | ASCLT aspect ratio cap |
//! | `epsilon` | 0.1 | rate exponent in the decay benchmarks |
//! | `dense_threshold` | 4096 | largest grid sampled by Cholesky |
//! | `comparability_bound` | 10 | PASS bound for tail comparability |
//! | `checkpoints` | full shape | nested ASCLT checkpoints |
//! | `paths` | 1 | independent ASCLT paths |
//! | `out` | `.` | output directory |
//! | `threads` | all cores | worker threads |

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::covgrid::{CovarianceModel, GridShape, DENSE_THRESHOLD};
use crate::diagnostics::DEFAULT_COMPARABILITY_BOUND;
use crate::error::{Error, Result};
use crate::estimators::{LevelRule, DEFAULT_RATIO_BOUND, MIN_REPLICATIONS};
use crate::fieldgen::{FieldKind, Trend};
use crate::levels::TailFunction;
use crate::missing::LambdaModel;

const KEYS: &[&str] = &[
    "experiment",
    "field",
    "d",
    "r",
    "family",
    "theta",
    "c",
    "alpha",
    "trend",
    "lambda",
    "shape",
    "shapes",
    "tau",
    "kappa",
    "x",
    "y",
    "replications",
    "seed",
    "ratio_bound",
    "epsilon",
    "dense_threshold",
    "comparability_bound",
    "checkpoints",
    "paths",
    "out",
    "threads",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Asclt,
    Calibrate,
    Diagnose,
    Limit,
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Asclt => "asclt",
            ExperimentKind::Calibrate => "calibrate",
            ExperimentKind::Diagnose => "diagnose",
            ExperimentKind::Limit => "limit",
        })
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "simulate" => ExperimentKind::Simulate,
            "asclt" => ExperimentKind::Asclt,
            "calibrate" => ExperimentKind::Calibrate,
            "diagnose" => ExperimentKind::Diagnose,
            "limit" => ExperimentKind::Limit,
            _ => return Err(invalid("experiment", format!("unknown experiment `{s}`"))),
        })
    }
}

/// Exceedance targets, given directly or as Gumbel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Targets {
    Exceedance { tau: f64, kappa: f64 },
    Gumbel { x: f64, y: f64 },
}

impl Targets {
    /// (τ, κ)
    pub fn tau_kappa(&self) -> (f64, f64) {
        match *self {
            Targets::Exceedance { tau, kappa } => (tau, kappa),
            Targets::Gumbel { x, y } => ((-y).exp(), (-x).exp()),
        }
    }

    /// (x, y) with x = −ln κ and y = −ln τ.
    pub fn gumbel(&self) -> (f64, f64) {
        match *self {
            Targets::Exceedance { tau, kappa } => (-kappa.ln(), -tau.ln()),
            Targets::Gumbel { x, y } => (x, y),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub field: FieldKind,
    pub model: CovarianceModel,
    pub trend: Trend,
    pub lambda: LambdaModel,
    pub shapes: Vec<GridShape>,
    pub targets: Targets,
    pub replications: u64,
    pub seed: u64,
    pub ratio_bound: f64,
    pub epsilon: f64,
    pub dense_threshold: usize,
    pub comparability_bound: f64,
    pub checkpoints: Vec<GridShape>,
    pub paths: u64,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

fn invalid(key: &str, message: impl Into<String>) -> Error {
    Error::InvalidValue { key: key.to_string(), message: message.into() }
}

fn shape_list(key: &str, s: &str) -> Result<Vec<GridShape>> {
    let shapes = s
        .split(',')
        .map(|p| p.trim().parse::<GridShape>().map_err(|e| invalid(key, e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    if shapes.is_empty() {
        return Err(invalid(key, "empty list"));
    }
    Ok(shapes)
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| invalid(key, format!("`{v}`: {e}"))),
        }
    }

    fn or<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        Ok(self.get(key)?.unwrap_or(default))
    }
}

fn tokenize(text: &str) -> Result<Entries> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(Error::Parse { line: line_no, message: format!("expected `key = value`, got `{content}`") });
        };
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() || value.is_empty() {
            return Err(Error::Parse { line: line_no, message: format!("expected `key = value`, got `{content}`") });
        }
        if !KEYS.contains(&key) {
            return Err(Error::UnknownKey { line: line_no, key: key.to_string() });
        }
        if let Some((first, _)) = map.get(key) {
            return Err(Error::Parse { line: line_no, message: format!("duplicate key `{key}` (first on line {first})") });
        }
        map.insert(key.to_string(), (line_no, value.to_string()));
    }
    Ok(Entries { map })
}

/// Parse a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_config_for(text, None)
}

/// Parse for a given subcommand; a conflicting `experiment` key is an error.
pub fn parse_config_for(text: &str, kind: Option<ExperimentKind>) -> Result<ExperimentConfig> {
    let e = tokenize(text)?;
    let experiment = match (e.get::<ExperimentKind>("experiment")?, kind) {
        (Some(a), Some(b)) if a != b => {
            return Err(invalid("experiment", format!("file says `{a}` but the subcommand is `{b}`")))
        }
        (Some(a), _) => a,
        (None, Some(b)) => b,
        (None, None) => ExperimentKind::Simulate,
    };

    let d: usize = e.or("d", 1)?;
    let r: usize = e.or("r", 1)?;
    let field = match e.raw("field").unwrap_or("gaussian") {
        "gaussian" => FieldKind::Gaussian,
        "chi" => {
            TailFunction::chi(d).map_err(|err| invalid("d", err.to_string()))?;
            FieldKind::Chi { d }
        }
        "orderstat" => {
            TailFunction::order_stat(d, r).map_err(|err| invalid("r", err.to_string()))?;
            FieldKind::OrderStat { d, r }
        }
        other => return Err(invalid("field", format!("expected gaussian, chi or orderstat, got `{other}`"))),
    };
    if !matches!(field, FieldKind::Chi { .. } | FieldKind::OrderStat { .. }) {
        for key in ["d", "r"] {
            if e.raw(key).is_some() {
                return Err(invalid(key, "only meaningful for chi or orderstat fields"));
            }
        }
    }
    if matches!(field, FieldKind::Chi { .. }) && e.raw("r").is_some() {
        return Err(invalid("r", "only meaningful for orderstat fields"));
    }

    let model = match e.raw("family").unwrap_or("independent") {
        "independent" => CovarianceModel::Independent,
        "geometric" => CovarianceModel::geometric(e.or("theta", 0.5)?).map_err(|err| invalid("theta", err.to_string()))?,
        "polynomial" => CovarianceModel::polynomial(e.or("c", 0.5)?, e.or("alpha", 1.0)?)
            .map_err(|err| invalid("c", err.to_string()))?,
        other => return Err(invalid("family", format!("expected independent, geometric or polynomial, got `{other}`"))),
    };

    let trend: Trend = e.or("trend", Trend::Zero)?;
    if !trend.is_zero() && field != FieldKind::Gaussian {
        return Err(invalid("trend", "trends apply to gaussian fields only"));
    }
    let lambda: LambdaModel = e.or("lambda", LambdaModel::Point { p: 1.0 })?;

    let shapes = match (e.raw("shape"), e.raw("shapes")) {
        (Some(_), Some(_)) => return Err(invalid("shapes", "give either `shape` or `shapes`, not both")),
        (Some(s), None) => shape_list("shape", s)?,
        (None, Some(s)) => shape_list("shapes", s)?,
        (None, None) if experiment == ExperimentKind::Limit => Vec::new(),
        (None, None) => return Err(invalid("shape", "missing")),
    };
    if e.raw("shape").is_some() && shapes.len() != 1 {
        return Err(invalid("shape", "use `shapes` for a list"));
    }

    let num = |key: &str| e.get::<f64>(key);
    let targets = match (num("tau")?, num("kappa")?, num("x")?, num("y")?) {
        (Some(tau), Some(kappa), None, None) => {
            if !(tau > 0.0 && tau.is_finite()) {
                return Err(invalid("tau", format!("need tau > 0, got {tau}")));
            }
            if !(kappa >= tau && kappa.is_finite()) {
                return Err(invalid("kappa", format!("need kappa >= tau, got kappa = {kappa}, tau = {tau}")));
            }
            Targets::Exceedance { tau, kappa }
        }
        (None, None, Some(x), Some(y)) => {
            if !(x.is_finite() && y.is_finite()) {
                return Err(invalid("x", "coordinates must be finite"));
            }
            if x > y {
                return Err(invalid("y", format!("need x <= y, got x = {x}, y = {y}")));
            }
            Targets::Gumbel { x, y }
        }
        (None, None, None, None) => return Err(invalid("tau", "give `tau` and `kappa`, or `x` and `y`")),
        _ => return Err(invalid("tau", "give exactly one pair: `tau` and `kappa`, or `x` and `y`")),
    };
    if matches!(targets, Targets::Gumbel { .. }) && field != FieldKind::Gaussian {
        return Err(invalid("x", "Gumbel coordinates apply to gaussian fields only"));
    }

    let replications: u64 = e.or("replications", 10_000)?;
    if experiment == ExperimentKind::Simulate && replications < MIN_REPLICATIONS {
        return Err(invalid("replications", format!("need at least {MIN_REPLICATIONS}, got {replications}")));
    }
    let ratio_bound: f64 = e.or("ratio_bound", DEFAULT_RATIO_BOUND)?;
    if !(ratio_bound >= 1.0) {
        return Err(invalid("ratio_bound", "must be at least 1"));
    }
    let epsilon: f64 = e.or("epsilon", 0.1)?;
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(invalid("epsilon", "must be positive"));
    }
    let comparability_bound: f64 = e.or("comparability_bound", DEFAULT_COMPARABILITY_BOUND)?;
    if !(comparability_bound >= 1.0) {
        return Err(invalid("comparability_bound", "must be at least 1"));
    }
    let checkpoints = match e.raw("checkpoints") {
        Some(s) => shape_list("checkpoints", s)?,
        None => Vec::new(),
    };
    if !checkpoints.is_empty() && experiment != ExperimentKind::Asclt {
        return Err(invalid("checkpoints", "only used by asclt"));
    }
    let paths: u64 = e.or("paths", 1)?;
    if paths == 0 {
        return Err(invalid("paths", "must be positive"));
    }
    let threads: Option<usize> = e.get("threads")?;
    if threads == Some(0) {
        return Err(invalid("threads", "must be positive"));
    }
    if matches!(experiment, ExperimentKind::Asclt) && shapes.len() != 1 {
        return Err(invalid("shape", "asclt takes a single shape"));
    }

    Ok(ExperimentConfig {
        experiment,
        field,
        model,
        trend,
        lambda,
        shapes,
        targets,
        replications,
        seed: e.or("seed", 0)?,
        ratio_bound,
        epsilon,
        dense_threshold: e.or("dense_threshold", DENSE_THRESHOLD)?,
        comparability_bound,
        checkpoints,
        paths,
        out: e.raw("out").map(PathBuf::from),
        threads,
    })
}

fn join(shapes: &[GridShape]) -> String {
    shapes.iter().map(|s| s.to_string()).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    /// Every result-affecting setting, defaults included, one `key = value`
    /// per line in key order. Output location and thread count are left out.
    pub fn canonical(&self) -> String {
        let mut m: BTreeMap<&str, String> = BTreeMap::new();
        m.insert("experiment", self.experiment.to_string());
        m.insert("field", self.field.to_string());
        m.insert("family", self.model.tag().to_string());
        m.insert("params", self.model.params());
        m.insert("trend", self.trend.to_string());
        m.insert("lambda", self.lambda.to_string());
        m.insert("shapes", join(&self.shapes));
        match self.targets {
            Targets::Exceedance { tau, kappa } => {
                m.insert("tau", tau.to_string());
                m.insert("kappa", kappa.to_string());
            }
            Targets::Gumbel { x, y } => {
                m.insert("x", x.to_string());
                m.insert("y", y.to_string());
            }
        }
        m.insert("replications", self.replications.to_string());
        m.insert("seed", self.seed.to_string());
        m.insert("ratio_bound", self.ratio_bound.to_string());
        m.insert("epsilon", self.epsilon.to_string());
        m.insert("dense_threshold", self.dense_threshold.to_string());
        m.insert("comparability_bound", self.comparability_bound.to_string());
        m.insert("checkpoints", join(&self.checkpoints));
        m.insert("paths", self.paths.to_string());
        m.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// SHA-256 of [`ExperimentConfig::canonical`], hex encoded.
    pub fn digest(&self) -> String {
        Sha256::digest(self.canonical().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Level rule for the ASCLT estimator. Trends need Gumbel levels.
    pub fn level_rule(&self) -> LevelRule {
        match (self.targets, self.trend.is_zero()) {
            (Targets::Exceedance { tau, kappa }, true) => {
                LevelRule::Calibrated { tailfn: self.field.tail_function(), tau, kappa }
            }
            (t, _) => {
                let (x, y) = t.gumbel();
                LevelRule::Gumbel { x, y }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "
# minimal simulate config
family = geometric
theta = 0.3
lambda = beta(1,1)
shape = 64x64
tau = 1
kappa = 2
replications = 20000
seed = 7
";

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Simulate);
        assert_eq!(c.field, FieldKind::Gaussian);
        assert_eq!(c.model, CovarianceModel::Geometric { theta: 0.3 });
        assert_eq!(c.trend, Trend::Zero);
        assert_eq!(c.lambda, LambdaModel::Beta { a: 1.0, b: 1.0 });
        assert_eq!(c.shapes, vec![GridShape::square(64).unwrap()]);
        assert_eq!(c.targets, Targets::Exceedance { tau: 1.0, kappa: 2.0 });
        assert_eq!((c.replications, c.seed, c.paths), (20_000, 7, 1));
        assert_eq!((c.ratio_bound, c.epsilon, c.comparability_bound), (4.0, 0.1, 10.0));
        assert_eq!(c.dense_threshold, 4096);
        assert!(c.checkpoints.is_empty() && c.out.is_none() && c.threads.is_none());
    }

    #[test]
    fn rejects_inverted_targets() {
        let e = parse_config("shape = 8\nkappa = 0.5\ntau = 1.0\n").unwrap_err();
        assert!(matches!(e, Error::InvalidValue { ref key, .. } if key == "kappa"), "{e}");
    }

    #[test]
    fn duplicate_and_unknown_keys() {
        let e = parse_config("shape = 8\ntau = 1\ntau = 2\n").unwrap_err();
        match e {
            Error::Parse { line, message } => {
                assert_eq!(line, 3);
                assert!(message.contains("tau"));
            }
            other => panic!("{other}"),
        }
        let e = parse_config("shape = 8\n\nsigma = 1\n").unwrap_err();
        assert_eq!(e, Error::UnknownKey { line: 3, key: "sigma".into() });
        let e = parse_config("shape 8\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn field_and_target_validation() {
        let base = "shape = 8\ntau = 1\nkappa = 1\n";
        assert!(parse_config(&format!("{base}field = chi\nd = 3\n")).is_ok());
        assert!(parse_config(&format!("{base}field = orderstat\nd = 3\nr = 4\n")).is_err());
        assert!(parse_config(&format!("{base}d = 3\n")).is_err());
        assert!(parse_config(&format!("{base}field = chi\ntrend = constant(1)\n")).is_err());
        assert!(parse_config(&format!("{base}replications = 10\n")).is_err());
        assert!(parse_config("shape = 8\nx = 1\ny = 0\n").is_err());
        assert!(parse_config("shape = 8\ntau = 1\n").is_err());
        assert!(parse_config("shape = 8\ntau = 1\nkappa = 2\nx = 0\ny = 1\n").is_err());
        assert!(parse_config("experiment = limit\nlambda = point(0.5)\ntau = 1\nkappa = 2\n").is_ok());
        assert!(parse_config(&format!("{base}family = geometric\ntheta = 1.5\n")).is_err());
    }

    #[test]
    fn experiment_key_must_match_subcommand() {
        let text = "experiment = asclt\nshape = 8\ntau = 1\nkappa = 1\n";
        assert!(parse_config_for(text, Some(ExperimentKind::Asclt)).is_ok());
        assert!(parse_config_for(text, Some(ExperimentKind::Simulate)).is_err());
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = parse_config(MINIMAL).unwrap();
        let reordered: String = MINIMAL.lines().rev().collect::<Vec<_>>().join("\n");
        let b = parse_config(&reordered).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_eq!(a.digest().len(), 64);
        let mut c = a.clone();
        c.seed = 8;
        assert_ne!(a.digest(), c.digest());
        c.seed = 7;
        c.out = Some("elsewhere".into());
        assert_eq!(a.digest(), c.digest());
    }
}
