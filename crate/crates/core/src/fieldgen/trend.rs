//! Deterministic trends m_i added to a Gaussian field and the choice of
//! the centering constant m_n^*.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use super::{FieldKind, FieldSample};
use crate::covgrid::GridShape;
use crate::error::{Error, Result};
use crate::levels::normalizing_constants;
use crate::missing::parse_call;
use crate::numeric::{bisect, CompensatedSum};

/// Trend families available from configuration. Indices are 1-based:
/// i1 in 1..=n1, i2 in 1..=n2.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Trend {
    Zero,
    Constant { c: f64 },
    /// c1·i1/n1 + c2·i2/n2
    Linear { c1: f64, c2: f64 },
    /// c·sin(2π(p1·i1/n1 + p2·i2/n2))
    Sinusoid { c: f64, p1: f64, p2: f64 },
}

impl Trend {
    pub fn value(&self, i1: usize, i2: usize, shape: GridShape) -> f64 {
        let x1 = i1 as f64 / shape.n1() as f64;
        let x2 = i2 as f64 / shape.n2() as f64;
        match *self {
            Trend::Zero => 0.0,
            Trend::Constant { c } => c,
            Trend::Linear { c1, c2 } => c1 * x1 + c2 * x2,
            Trend::Sinusoid { c, p1, p2 } => c * (2.0 * PI * (p1 * x1 + p2 * x2)).sin(),
        }
    }

    /// Trend evaluated over the grid, row-major.
    pub fn values(&self, shape: GridShape) -> Vec<f64> {
        let mut out = Vec::with_capacity(shape.cells());
        for i1 in 1..=shape.n1() {
            for i2 in 1..=shape.n2() {
                out.push(self.value(i1, i2, shape));
            }
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Trend::Zero)
    }
}

impl fmt::Display for Trend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trend::Zero => write!(f, "zero"),
            Trend::Constant { c } => write!(f, "constant({c})"),
            Trend::Linear { c1, c2 } => write!(f, "linear({c1},{c2})"),
            Trend::Sinusoid { c, p1, p2 } => write!(f, "sinusoid({c},{p1},{p2})"),
        }
    }
}

impl FromStr for Trend {
    type Err = Error;

    /// `sinusoid(c)` is shorthand for `sinusoid(c,1,0)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidValue { key: "trend".into(), message: format!("`{s}`: {m}") };
        let (name, args) = parse_call(s).ok_or_else(|| bad("malformed tag"))?;
        let t = match (name, args.as_slice()) {
            ("zero", []) => Trend::Zero,
            ("constant", [c]) => Trend::Constant { c: *c },
            ("linear", [c1, c2]) => Trend::Linear { c1: *c1, c2: *c2 },
            ("sinusoid", [c]) => Trend::Sinusoid { c: *c, p1: 1.0, p2: 0.0 },
            ("sinusoid", [c, p1, p2]) => Trend::Sinusoid { c: *c, p1: *p1, p2: *p2 },
            ("zero" | "constant" | "linear" | "sinusoid", _) => return Err(bad("wrong number of arguments")),
            _ => return Err(bad("expected zero, constant(c), linear(c1,c2) or sinusoid(c,p1,p2)")),
        };
        let finite = match t {
            Trend::Zero => true,
            Trend::Constant { c } => c.is_finite(),
            Trend::Linear { c1, c2 } => c1.is_finite() && c2.is_finite(),
            Trend::Sinusoid { c, p1, p2 } => c.is_finite() && p1.is_finite() && p2.is_finite(),
        };
        if !finite {
            return Err(bad("parameters must be finite"));
        }
        Ok(t)
    }
}

/// (1/N) Σ exp(a*(m_i − m*) − ½(m_i − m*)²).
pub fn center_sum(values: &[f64], a_star: f64, center: f64) -> f64 {
    let s: CompensatedSum = values
        .iter()
        .map(|&m| {
            let d = m - center;
            (a_star * d - 0.5 * d * d).exp()
        })
        .collect();
    s.value() / values.len() as f64
}

/// Outcome of [`solve_center`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CenterSolution {
    pub center: f64,
    /// Centering sum at `center`.
    pub sum: f64,
    /// The sum does not cross 1 on [−β, β]; `center` is the better endpoint.
    pub no_root: bool,
}

/// Residual bound on the centering sum for a solved center.
pub const CENTER_TOL: f64 = 1e-10;

/// m* in [−β, β] with centering sum equal to 1, by bisection on the
/// decreasing map m* ↦ sum. `values` are the trend over a rectangle of
/// `values.len() >= 3` cells.
pub fn solve_center(values: &[f64]) -> Result<CenterSolution> {
    let nc = normalizing_constants(values.len() as f64)?;
    let beta = values.iter().fold(0.0f64, |b, m| b.max(m.abs()));
    if !beta.is_finite() {
        return Err(Error::InvalidParameter { name: "trend", value: beta, reason: "must be bounded" });
    }
    let root = bisect(|c| center_sum(values, nc.a_star, c) - 1.0, -beta, beta, 1e-14);
    let sum = center_sum(values, nc.a_star, root.x);
    Ok(CenterSolution { center: root.x, sum, no_root: !root.converged || (sum - 1.0).abs() > CENTER_TOL })
}

/// Trend over one grid together with its centering constant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrendSpec {
    pub shape: GridShape,
    #[serde(skip)]
    pub values: Vec<f64>,
    /// m_n^*
    pub center: f64,
    /// β_n = max |m_i|
    pub beta: f64,
    pub no_root: bool,
}

impl TrendSpec {
    /// Trend with the center solved from the centering sum.
    pub fn solved(trend: &Trend, shape: GridShape) -> Result<Self> {
        Self::solved_from_values(shape, trend.values(shape))
    }

    pub fn solved_from_values(shape: GridShape, values: Vec<f64>) -> Result<Self> {
        check_len(shape, &values)?;
        let sol = solve_center(&values)?;
        let beta = max_abs(&values);
        Ok(TrendSpec { shape, values, center: sol.center, beta, no_root: sol.no_root })
    }

    /// Trend with a caller-chosen center.
    pub fn with_center(trend: &Trend, shape: GridShape, center: f64) -> Result<Self> {
        Self::from_values(shape, trend.values(shape), center)
    }

    pub fn from_values(shape: GridShape, values: Vec<f64>, center: f64) -> Result<Self> {
        check_len(shape, &values)?;
        let beta = max_abs(&values);
        if !beta.is_finite() || !center.is_finite() {
            return Err(Error::InvalidParameter { name: "trend", value: beta, reason: "must be finite" });
        }
        Ok(TrendSpec { shape, values, center, beta, no_root: false })
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

fn check_len(shape: GridShape, values: &[f64]) -> Result<()> {
    if values.len() != shape.cells() {
        return Err(Error::ShapeMismatch { left: shape.to_string(), right: format!("{} trend values", values.len()) });
    }
    Ok(())
}

fn max_abs(values: &[f64]) -> f64 {
    values.iter().fold(0.0f64, |b, m| b.max(m.abs()))
}

/// Conditions on a trend and its center for one grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendReport {
    pub beta: f64,
    pub center: f64,
    pub sum: f64,
    /// |sum − 1|
    pub deviation: f64,
    /// a_n (max m_i − m*)
    pub bounded_quantity: f64,
    /// β_n / √N, which should shrink along a growing grid sequence.
    pub beta_rate: f64,
    pub center_within_beta: bool,
    pub pass: bool,
}

pub fn validate_trend(spec: &TrendSpec, tol: f64) -> Result<TrendReport> {
    spec.shape.require_min(3)?;
    let nc = normalizing_constants(spec.shape.cells() as f64)?;
    let sum = center_sum(&spec.values, nc.a_star, spec.center);
    let deviation = (sum - 1.0).abs();
    let center_within_beta = spec.center.abs() <= spec.beta;
    Ok(TrendReport {
        beta: spec.beta,
        center: spec.center,
        sum,
        deviation,
        bounded_quantity: nc.a * (spec.max_value() - spec.center),
        beta_rate: spec.beta / (spec.shape.cells() as f64).sqrt(),
        center_within_beta,
        pass: deviation <= tol && center_within_beta,
    })
}

/// Z_i = Y_i + m_i for a Gaussian field.
pub fn apply_trend(field: &FieldSample, spec: &TrendSpec) -> Result<FieldSample> {
    if field.kind != FieldKind::Gaussian {
        return Err(Error::KindMismatch { expected: "gaussian", found: field.kind.to_string() });
    }
    if field.shape != spec.shape {
        return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: spec.shape.to_string() });
    }
    let values = field.values.iter().zip(&spec.values).map(|(y, m)| y + m).collect();
    Ok(FieldSample { shape: field.shape, values, kind: FieldKind::Trended, base: Some(field.values.clone()) })
}

/// The Gaussian draw underneath a trended field.
pub fn remove_trend(field: &FieldSample) -> Result<FieldSample> {
    match (&field.kind, &field.base) {
        (FieldKind::Trended, Some(base)) => {
            Ok(FieldSample { shape: field.shape, values: base.clone(), kind: FieldKind::Gaussian, base: None })
        }
        _ => Err(Error::KindMismatch { expected: "trended", found: field.kind.to_string() }),
    }
}
