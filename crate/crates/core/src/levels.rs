//! Tail functions, Gumbel normalizing constants, exact level calibration
//! and the limiting joint laws of complete and incomplete-sample maxima.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::covgrid::GridShape;
use crate::error::{Error, Result};
use crate::missing::{parse_call, LambdaModel};
use crate::numeric::{bisect, normal_cdf, normal_sf};

/// Marginal exceedance law of the field being maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TailFunction {
    Gaussian,
    /// Norm of `d` independent standard normals.
    Chi { d: usize },
    /// `r`-th largest of `d` independent standard normals.
    #[serde(rename = "orderstat")]
    OrderStat { d: usize, r: usize },
}

impl TailFunction {
    pub fn chi(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidParameter { name: "d", value: 0.0, reason: "must be at least 1" });
        }
        Ok(TailFunction::Chi { d })
    }

    pub fn order_stat(d: usize, r: usize) -> Result<Self> {
        if d == 0 || r == 0 || r > d {
            return Err(Error::InvalidRank { d, r });
        }
        Ok(TailFunction::OrderStat { d, r })
    }

    /// P(X > u).
    pub fn tail(&self, u: f64) -> f64 {
        match *self {
            TailFunction::Gaussian => normal_sf(u),
            TailFunction::Chi { d } => chi_sf(d, u),
            TailFunction::OrderStat { d, r } => order_stat_sf(d, r, u),
        }
    }

    /// Lower endpoint of the support, `None` meaning −∞.
    pub fn lower_endpoint(&self) -> Option<f64> {
        match self {
            TailFunction::Chi { .. } => Some(0.0),
            _ => None,
        }
    }
}

impl fmt::Display for TailFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TailFunction::Gaussian => write!(f, "gaussian"),
            TailFunction::Chi { d } => write!(f, "chi({d})"),
            TailFunction::OrderStat { d, r } => write!(f, "orderstat({d},{r})"),
        }
    }
}

impl FromStr for TailFunction {
    type Err = Error;

    /// `gaussian`, `chi(d)` or `orderstat(d,r)`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidValue { key: "tail".into(), message: format!("unrecognized tail `{s}`") };
        let (name, args) = parse_call(s).ok_or_else(bad)?;
        let int = |x: f64| if x >= 1.0 && x.fract() == 0.0 && x < 1e9 { Ok(x as usize) } else { Err(bad()) };
        match (name, args.as_slice()) {
            ("gaussian", []) => Ok(TailFunction::Gaussian),
            ("chi", [d]) => TailFunction::chi(int(*d)?),
            ("orderstat", [d, r]) => TailFunction::order_stat(int(*d)?, int(*r)?),
            _ => Err(bad()),
        }
    }
}

/// Regularized upper incomplete gamma Q(d/2, u²/2) for integer `d`, summed
/// in closed form.
fn chi_sf(d: usize, u: f64) -> f64 {
    if u <= 0.0 {
        return 1.0;
    }
    let x = 0.5 * u * u;
    let ex = (-x).exp();
    if d % 2 == 0 {
        // e^{-x} Σ_{j<d/2} x^j / j!
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..d / 2 {
            term *= x / j as f64;
            sum += term;
        }
        (ex * sum).min(1.0)
    } else {
        // erfc(√x) + e^{-x} Σ_{j=1}^{(d-1)/2} x^{j-1/2} / Γ(j+1/2)
        let base = libm::erfc(u / std::f64::consts::SQRT_2);
        let m = (d - 1) / 2;
        if m == 0 {
            return base;
        }
        let mut term = 2.0 * x.sqrt() / PI.sqrt();
        let mut sum = term;
        for j in 1..m {
            term *= x / (j as f64 + 0.5);
            sum += term;
        }
        (base + ex * sum).min(1.0)
    }
}

fn order_stat_sf(d: usize, r: usize, u: f64) -> f64 {
    // At least r of d copies exceed u; every term is nonnegative.
    let s = normal_sf(u);
    let c = normal_cdf(u);
    let mut binom = 1.0f64;
    let mut total = 0.0;
    for j in 0..=d {
        if j > 0 {
            binom = binom * (d - j + 1) as f64 / j as f64;
        }
        if j >= r {
            total += binom * s.powi(j as i32) * c.powi((d - j) as i32);
        }
    }
    total.min(1.0)
}

/// Gumbel normalization for a Gaussian maximum over `N` cells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalizingConstants {
    /// √(2 log N)
    pub a: f64,
    /// a − (log log N + log 4π) / (2a)
    pub b: f64,
    /// a − log log N / (2a), the trend-centering slope
    pub a_star: f64,
}

/// Normalizing constants at a (possibly non-integer) cell count `cells >= 3`.
pub fn normalizing_constants(cells: f64) -> Result<NormalizingConstants> {
    if !(cells >= 3.0) {
        return Err(Error::DegenerateSize(cells));
    }
    let log_n = cells.ln();
    let loglog = log_n.ln();
    let a = (2.0 * log_n).sqrt();
    let b = a - (loglog + (4.0 * PI).ln()) / (2.0 * a);
    let a_star = a - loglog / (2.0 * a);
    Ok(NormalizingConstants { a, b, a_star })
}

/// u = x / a + b on `shape`.
pub fn gumbel_level(x: f64, shape: GridShape) -> Result<f64> {
    let nc = normalizing_constants(shape.cells() as f64)?;
    Ok(x / nc.a + nc.b)
}

/// Relative accuracy of [`calibrate_level`].
pub const CALIBRATION_RTOL: f64 = 1e-10;

/// Level `u` with `cells · tail(u) = target`.
pub fn calibrate_level(tailfn: &TailFunction, cells: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < cells) {
        return Err(Error::TargetOutOfRange { target, cells });
    }
    let f = |u: f64| cells * tailfn.tail(u) - target;
    let mut lo = tailfn.lower_endpoint().unwrap_or(-8.0);
    while f(lo) <= 0.0 && lo > -64.0 {
        lo -= 8.0;
    }
    let mut hi = 8.0;
    while f(hi) > 0.0 && hi < 1e6 {
        hi *= 2.0;
    }
    let root = bisect(f, lo, hi, 0.0);
    // Bisection runs to adjacent floats; anything coarser is a bracket failure.
    if !root.converged || root.fx.abs() > CALIBRATION_RTOL * target {
        return Err(Error::TargetOutOfRange { target, cells });
    }
    Ok(root.x)
}

/// Levels `(u, v)` for one grid with their exceedance targets `(τ, κ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevelPlan {
    pub shape: GridShape,
    /// Level for the complete maximum.
    pub u: f64,
    /// Level for the incomplete maximum, v <= u.
    pub v: f64,
    pub tau: f64,
    pub kappa: f64,
    pub tailfn: TailFunction,
}

impl LevelPlan {
    /// Calibrate both levels exactly at this grid size.
    pub fn calibrated(tailfn: TailFunction, shape: GridShape, tau: f64, kappa: f64) -> Result<Self> {
        check_targets(kappa, tau)?;
        let cells = shape.cells() as f64;
        let u = calibrate_level(&tailfn, cells, tau)?;
        let v = calibrate_level(&tailfn, cells, kappa)?;
        Ok(LevelPlan { shape, u, v, tau, kappa, tailfn })
    }

    /// Gaussian Gumbel levels u = y/a + b, v = x/a + b with targets e^(−y), e^(−x).
    pub fn gumbel(shape: GridShape, x: f64, y: f64) -> Result<Self> {
        if x > y {
            return Err(Error::OrderViolation(format!("need x <= y, got x = {x}, y = {y}")));
        }
        Ok(LevelPlan {
            shape,
            u: gumbel_level(y, shape)?,
            v: gumbel_level(x, shape)?,
            tau: (-y).exp(),
            kappa: (-x).exp(),
            tailfn: TailFunction::Gaussian,
        })
    }

    /// Explicit levels; targets are recorded as the achieved N·tail values.
    pub fn from_levels(tailfn: TailFunction, shape: GridShape, u: f64, v: f64) -> Result<Self> {
        if v > u {
            return Err(Error::OrderViolation(format!("need v <= u, got v = {v}, u = {u}")));
        }
        let cells = shape.cells() as f64;
        Ok(LevelPlan { shape, u, v, tau: cells * tailfn.tail(u), kappa: cells * tailfn.tail(v), tailfn })
    }

    /// Achieved N·tail(u).
    pub fn achieved_tau(&self) -> f64 {
        self.shape.cells() as f64 * self.tailfn.tail(self.u)
    }

    /// Achieved N·tail(v).
    pub fn achieved_kappa(&self) -> f64 {
        self.shape.cells() as f64 * self.tailfn.tail(self.v)
    }
}

fn check_targets(kappa: f64, tau: f64) -> Result<()> {
    if !(tau > 0.0 && kappa >= tau && kappa.is_finite()) {
        return Err(Error::InvalidTargets { kappa, tau });
    }
    Ok(())
}

/// Quadrature tolerance for expectations over a Beta-distributed rate.
pub const LIMIT_QUAD_TOL: f64 = 1e-12;

/// E[exp(−λκ) exp(−(1−λ)τ)].
pub fn limit_value(lambda: &LambdaModel, kappa: f64, tau: f64) -> Result<f64> {
    check_targets(kappa, tau)?;
    Ok(lambda.expectation(|l| (-l * kappa - (1.0 - l) * tau).exp(), LIMIT_QUAD_TOL))
}

/// E[exp(−λ e^(−x)) exp(−(1−λ) e^(−y))], the Gumbel-coordinate form of [`limit_value`].
pub fn gumbel_joint_limit(lambda: &LambdaModel, x: f64, y: f64) -> Result<f64> {
    if x > y {
        return Err(Error::OrderViolation(format!("need x <= y, got x = {x}, y = {y}")));
    }
    limit_value(lambda, (-x).exp(), (-y).exp())
}
