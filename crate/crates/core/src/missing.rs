//! Random-rate missing observations: the law of the observation rate λ,
//! conditionally i.i.d. indicator masks, and the observed-field transform
//! that floors unobserved points at the lower end of the marginal support.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Bernoulli, Beta, Distribution};
use serde::Serialize;

use crate::covgrid::GridShape;
use crate::error::{Error, Result};
use crate::fieldgen::{FieldKind, FieldSample};
use crate::numeric::integrate;

/// Law of the limiting observation rate λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LambdaModel {
    Point { p: f64 },
    /// λ = p1 with probability w, p2 otherwise.
    #[serde(rename = "twopoint")]
    TwoPoint { p1: f64, p2: f64, w: f64 },
    Beta { a: f64, b: f64 },
}

fn unit(name: &'static str, v: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&v) {
        Ok(v)
    } else {
        Err(Error::InvalidParameter { name, value: v, reason: "must lie in [0, 1]" })
    }
}

impl LambdaModel {
    pub fn point(p: f64) -> Result<Self> {
        Ok(LambdaModel::Point { p: unit("p", p)? })
    }

    pub fn two_point(p1: f64, p2: f64, w: f64) -> Result<Self> {
        Ok(LambdaModel::TwoPoint { p1: unit("p1", p1)?, p2: unit("p2", p2)?, w: unit("w", w)? })
    }

    pub fn beta(a: f64, b: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter { name, value: v, reason: "must be positive" });
            }
        }
        Ok(LambdaModel::Beta { a, b })
    }

    pub fn mean(&self) -> f64 {
        match *self {
            LambdaModel::Point { p } => p,
            LambdaModel::TwoPoint { p1, p2, w } => w * p1 + (1.0 - w) * p2,
            LambdaModel::Beta { a, b } => a / (a + b),
        }
    }

    /// One draw of λ.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaModel::Point { p } => p,
            LambdaModel::TwoPoint { p1, p2, w } => {
                if rng.random::<f64>() < w {
                    p1
                } else {
                    p2
                }
            }
            LambdaModel::Beta { a, b } => Beta::new(a, b).expect("validated beta parameters").sample(rng),
        }
    }

    /// E[g(λ)]. Exact for atomic laws; for the Beta law, adaptive quadrature
    /// with absolute tolerance `tol`, after substituting away integrable
    /// endpoint singularities when a < 1 or b < 1.
    pub fn expectation<F: Fn(f64) -> f64>(&self, g: F, tol: f64) -> f64 {
        match *self {
            LambdaModel::Point { p } => g(p),
            LambdaModel::TwoPoint { p1, p2, w } => w * g(p1) + (1.0 - w) * g(p2),
            LambdaModel::Beta { a, b } => {
                let ln_beta = libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b);
                let norm = (-ln_beta).exp();
                let piece_tol = 0.25 * tol / norm.max(1e-300);
                let left = half_beta_integral(&|l| g(l), a, b, piece_tol);
                let right = half_beta_integral(&|m| g(1.0 - m), b, a, piece_tol);
                norm * (left + right)
            }
        }
    }

    /// Config tag such as `beta(2,2)`.
    pub fn tag(&self) -> String {
        self.to_string()
    }
}

/// ∫_0^{1/2} g(x) x^{p−1} (1−x)^{q−1} dx.
fn half_beta_integral(g: &dyn Fn(f64) -> f64, p: f64, q: f64, tol: f64) -> f64 {
    if p < 1.0 {
        // x = t^{1/p} turns x^{p−1} dx into dt / p.
        let inv = 1.0 / p;
        let upper = 0.5f64.powf(p);
        inv * integrate(
            |t| {
                let x = t.powf(inv);
                g(x) * (1.0 - x).powf(q - 1.0)
            },
            0.0,
            upper,
            tol * p,
        )
    } else {
        integrate(|x| g(x) * x.powf(p - 1.0) * (1.0 - x).powf(q - 1.0), 0.0, 0.5, tol)
    }
}

impl fmt::Display for LambdaModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaModel::Point { p } => write!(f, "point({p})"),
            LambdaModel::TwoPoint { p1, p2, w } => write!(f, "twopoint({p1},{p2},{w})"),
            LambdaModel::Beta { a, b } => write!(f, "beta({a},{b})"),
        }
    }
}

/// Split `name(a,b,...)` into the name and its numeric arguments.
pub(crate) fn parse_call(s: &str) -> Option<(&str, Vec<f64>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Some((s, Vec::new()));
    };
    let inner = s[open + 1..].strip_suffix(')')?;
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(|a| a.trim().parse::<f64>().ok()).collect::<Option<Vec<_>>>()?
    };
    Some((s[..open].trim(), args))
}

impl FromStr for LambdaModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = |m: &str| Error::InvalidValue { key: "lambda".into(), message: format!("`{s}`: {m}") };
        let (name, args) = parse_call(s).ok_or_else(|| bad("malformed tag"))?;
        match (name, args.as_slice()) {
            ("point", [p]) => LambdaModel::point(*p),
            ("twopoint", [p1, p2, w]) => LambdaModel::two_point(*p1, *p2, *w),
            ("beta", [a, b]) => LambdaModel::beta(*a, *b),
            ("point" | "twopoint" | "beta", _) => Err(bad("wrong number of arguments")),
            _ => Err(bad("expected point(p), twopoint(p1,p2,w) or beta(a,b)")),
        }
        .map_err(|e| match e {
            Error::InvalidParameter { .. } => bad(&e.to_string()),
            other => other,
        })
    }
}

pub fn sample_lambda<R: Rng + ?Sized>(model: &LambdaModel, rng: &mut R) -> f64 {
    model.sample(rng)
}

/// Observation indicators over a grid; `true` marks an observed point.
#[derive(Debug, Clone, PartialEq)]
pub struct MissingMask {
    shape: GridShape,
    bits: Vec<bool>,
    realized_lambda: f64,
}

impl MissingMask {
    pub fn from_bits(shape: GridShape, bits: Vec<bool>, realized_lambda: f64) -> Result<Self> {
        if bits.len() != shape.cells() {
            return Err(Error::ShapeMismatch { left: shape.to_string(), right: format!("{} bits", bits.len()) });
        }
        Ok(MissingMask { shape, bits, realized_lambda: check_lambda(realized_lambda)? })
    }

    pub fn all_observed(shape: GridShape) -> Self {
        MissingMask { shape, bits: vec![true; shape.cells()], realized_lambda: 1.0 }
    }

    pub fn none_observed(shape: GridShape) -> Self {
        MissingMask { shape, bits: vec![false; shape.cells()], realized_lambda: 0.0 }
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn realized_lambda(&self) -> f64 {
        self.realized_lambda
    }

    /// S_n, the number of observed points.
    pub fn observed_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }
}

fn check_lambda(l: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&l) {
        Ok(l)
    } else {
        Err(Error::LambdaOutOfRange(l))
    }
}

/// I.i.d. Bernoulli(λ) indicators on `shape`.
pub fn sample_mask<R: Rng + ?Sized>(lambda: f64, shape: GridShape, rng: &mut R) -> Result<MissingMask> {
    let lambda = check_lambda(lambda)?;
    let coin = Bernoulli::new(lambda).map_err(|_| Error::LambdaOutOfRange(lambda))?;
    let bits = (0..shape.cells()).map(|_| coin.sample(rng)).collect();
    Ok(MissingMask { shape, bits, realized_lambda: lambda })
}

/// S_n / N.
pub fn empirical_lambda(mask: &MissingMask) -> f64 {
    mask.observed_count() as f64 / mask.bits.len() as f64
}

/// A field value after the missing-observation transform. `Floor` stands
/// for the lower endpoint of the marginal support and orders below every
/// finite value, so maxima and level comparisons need no infinities.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub enum Observed {
    Floor,
    Value(f64),
}

impl Observed {
    /// True when the point lies at or below `level`; `Floor` always does.
    #[inline]
    pub fn at_most(self, level: f64) -> bool {
        match self {
            Observed::Floor => true,
            Observed::Value(x) => x <= level,
        }
    }

    /// Numeric value with `Floor` mapped to `floor`.
    pub fn resolve(self, floor: f64) -> f64 {
        match self {
            Observed::Floor => floor,
            Observed::Value(x) => x,
        }
    }
}

/// Field as seen through a missing-observation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedField {
    pub shape: GridShape,
    pub kind: FieldKind,
    pub values: Vec<Observed>,
}

impl ObservedField {
    /// Numeric view: the floor becomes the support's lower endpoint
    /// (0 for chi fields, −∞ otherwise).
    pub fn resolved(&self) -> Vec<f64> {
        let floor = self.kind.lower_endpoint().unwrap_or(f64::NEG_INFINITY);
        self.values.iter().map(|v| v.resolve(floor)).collect()
    }

    /// Maximum over the observed points, `Floor` if none is observed.
    pub fn max(&self) -> Observed {
        self.values.iter().copied().fold(Observed::Floor, |m, v| if v > m { v } else { m })
    }
}

/// (1 − ε_i) γ + ε_i ξ_i pointwise.
pub fn observed_transform(field: &FieldSample, mask: &MissingMask) -> Result<ObservedField> {
    if field.shape != mask.shape {
        return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: mask.shape.to_string() });
    }
    let values = field
        .values
        .iter()
        .zip(&mask.bits)
        .map(|(&x, &seen)| if seen { Observed::Value(x) } else { Observed::Floor })
        .collect();
    Ok(ObservedField { shape: field.shape, kind: field.kind, values })
}

/// Transform a single already-observed field again with the same mask.
pub fn reapply_mask(field: &ObservedField, mask: &MissingMask) -> Result<ObservedField> {
    if field.shape != mask.shape {
        return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: mask.shape.to_string() });
    }
    let values =
        field.values.iter().zip(&mask.bits).map(|(&v, &seen)| if seen { v } else { Observed::Floor }).collect();
    Ok(ObservedField { shape: field.shape, kind: field.kind, values })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn shape(n1: usize, n2: usize) -> GridShape {
        GridShape::new(n1, n2).unwrap()
    }

    #[test]
    fn lambda_parsing() {
        assert_eq!("point(0.7)".parse::<LambdaModel>().unwrap(), LambdaModel::Point { p: 0.7 });
        assert_eq!(
            "twopoint(0.2, 0.8, 0.5)".parse::<LambdaModel>().unwrap(),
            LambdaModel::TwoPoint { p1: 0.2, p2: 0.8, w: 0.5 }
        );
        assert_eq!("beta(2,2)".parse::<LambdaModel>().unwrap(), LambdaModel::Beta { a: 2.0, b: 2.0 });
        for bad in ["point(1.5)", "beta(0,1)", "uniform(0,1)", "point(0.1,0.2)", "point(x)", "beta(1,1"] {
            assert!(bad.parse::<LambdaModel>().is_err(), "{bad}");
        }
        let m = LambdaModel::two_point(0.2, 0.8, 0.5).unwrap();
        assert_eq!(m.tag().parse::<LambdaModel>().unwrap(), m);
    }

    #[test]
    fn lambda_means() {
        assert_eq!(LambdaModel::point(0.3).unwrap().mean(), 0.3);
        assert!((LambdaModel::two_point(0.2, 0.8, 0.25).unwrap().mean() - 0.65).abs() < 1e-15);
        assert!((LambdaModel::beta(2.0, 6.0).unwrap().mean() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn point_lambda_is_deterministic() {
        let m = LambdaModel::point(0.7).unwrap();
        let mut rng = derive_stream(3, 0);
        assert!((0..100).all(|_| m.sample(&mut rng) == 0.7));
    }

    #[test]
    fn two_point_arm_frequencies() {
        let m = LambdaModel::two_point(0.2, 0.8, 0.5).unwrap();
        let mut rng = derive_stream(11, 0);
        let n = 100_000;
        let mut low = 0usize;
        for _ in 0..n {
            let l = m.sample(&mut rng);
            assert!(l == 0.2 || l == 0.8);
            low += (l == 0.2) as usize;
        }
        let se = (0.25f64 / n as f64).sqrt();
        assert!((low as f64 / n as f64 - 0.5).abs() < 3.0 * se);
    }

    #[test]
    fn beta_sample_mean() {
        let m = LambdaModel::beta(2.0, 2.0).unwrap();
        let mut rng = derive_stream(12, 0);
        let n = 100_000;
        let draws: Vec<f64> = (0..n).map(|_| m.sample(&mut rng)).collect();
        assert!(draws.iter().all(|l| (0.0..=1.0).contains(l)));
        let mean = draws.iter().sum::<f64>() / n as f64;
        // Var Beta(2,2) = 1/20.
        let se = (0.05f64 / n as f64).sqrt();
        assert!((mean - 0.5).abs() < 3.0 * se, "{mean}");
    }

    #[test]
    fn beta_expectation_matches_moments() {
        for (a, b) in [(1.0, 1.0), (2.0, 5.0), (0.5, 0.5), (0.3, 2.0)] {
            let m = LambdaModel::beta(a, b).unwrap();
            let mean = m.expectation(|l| l, 1e-13);
            let second = m.expectation(|l| l * l, 1e-13);
            let var = a * b / ((a + b) * (a + b) * (a + b + 1.0));
            assert!((mean - a / (a + b)).abs() < 1e-10, "a={a} b={b} mean={mean}");
            assert!((second - (var + mean * mean)).abs() < 1e-10, "a={a} b={b}");
            assert!((m.expectation(|_| 1.0, 1e-13) - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn mask_degenerate_rates() {
        let s = shape(7, 9);
        let mut rng = derive_stream(5, 0);
        assert_eq!(sample_mask(0.0, s, &mut rng).unwrap().observed_count(), 0);
        assert_eq!(sample_mask(1.0, s, &mut rng).unwrap().observed_count(), 63);
        assert!(matches!(sample_mask(1.2, s, &mut rng), Err(Error::LambdaOutOfRange(_))));
        assert!(sample_mask(-0.1, s, &mut rng).is_err());
    }

    #[test]
    fn mask_rate_matches_binomial() {
        let s = shape(100, 100);
        let mut rng = derive_stream(6, 0);
        let m = sample_mask(0.3, s, &mut rng).unwrap();
        assert_eq!(m.realized_lambda(), 0.3);
        assert!((empirical_lambda(&m) - 0.3).abs() < 3.0 * (0.21f64 / 1e4).sqrt());
    }

    #[test]
    fn empirical_lambda_counts() {
        let s = shape(10, 10);
        assert_eq!(empirical_lambda(&MissingMask::all_observed(s)), 1.0);
        assert_eq!(empirical_lambda(&MissingMask::none_observed(s)), 0.0);
        let bits = (0..100).map(|i| i < 37).collect();
        assert_eq!(empirical_lambda(&MissingMask::from_bits(s, bits, 0.4).unwrap()), 0.37);
        assert!(MissingMask::from_bits(s, vec![true; 3], 0.4).is_err());
    }

    #[test]
    fn transform_branches() {
        let s = shape(2, 2);
        let f = FieldSample::new(s, vec![0.1, 3.0, -1.0, 0.0], FieldKind::Gaussian).unwrap();
        let all = observed_transform(&f, &MissingMask::all_observed(s)).unwrap();
        assert_eq!(all.resolved(), f.values);
        let none = observed_transform(&f, &MissingMask::none_observed(s)).unwrap();
        assert!(none.values.iter().all(|v| *v == Observed::Floor));
        assert_eq!(none.max(), Observed::Floor);
        assert!(none.max().at_most(-1e300));
        assert!(none.resolved().iter().all(|v| *v == f64::NEG_INFINITY));
    }

    #[test]
    fn chi_floor_is_zero() {
        let s = shape(1, 4);
        let f = FieldSample::new(s, vec![0.5, 1.5, 2.5, 0.1], FieldKind::Chi { d: 2 }).unwrap();
        let mask = MissingMask::from_bits(s, vec![true, false, true, false], 0.5).unwrap();
        let o = observed_transform(&f, &mask).unwrap();
        assert_eq!(o.resolved(), vec![0.5, 0.0, 2.5, 0.0]);
    }

    #[test]
    fn transform_shape_mismatch() {
        let f = FieldSample::new(shape(2, 2), vec![0.0; 4], FieldKind::Gaussian).unwrap();
        let e = observed_transform(&f, &MissingMask::all_observed(shape(4, 1)));
        assert!(matches!(e, Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn transform_is_idempotent() {
        let s = shape(8, 8);
        let mut rng = derive_stream(9, 0);
        let f = FieldSample::new(s, (0..64).map(|i| (i as f64).sin()).collect(), FieldKind::Gaussian).unwrap();
        let m = sample_mask(0.5, s, &mut rng).unwrap();
        let once = observed_transform(&f, &m).unwrap();
        assert_eq!(reapply_mask(&once, &m).unwrap(), once);
    }

    #[test]
    fn sentinel_orders_below_values() {
        assert!(Observed::Floor < Observed::Value(f64::MIN));
        assert!(Observed::Value(1.0) < Observed::Value(2.0));
    }
}
