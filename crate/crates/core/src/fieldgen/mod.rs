//! Sampling of standard Gaussian fields and the chi and order-statistic
//! fields built from independent copies of them.

mod spectral;
mod trend;

use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

pub use spectral::{SpectralSampler, NEGATIVE_MASS_TOL};
pub use trend::{
    apply_trend, center_sum, remove_trend, solve_center, validate_trend, CenterSolution, Trend, TrendReport,
    TrendSpec, CENTER_TOL,
};

use crate::covgrid::{build_covariance_matrix, CholeskyFactor, CovarianceModel, GridShape, DENSE_THRESHOLD};
use crate::error::{Error, Result};
use crate::levels::TailFunction;

/// What a [`FieldSample`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum FieldKind {
    Gaussian,
    Chi { d: usize },
    #[serde(rename = "orderstat")]
    OrderStat { d: usize, r: usize },
    /// Gaussian plus a deterministic trend.
    Trended,
}

impl FieldKind {
    pub fn lower_endpoint(&self) -> Option<f64> {
        match self {
            FieldKind::Chi { .. } => Some(0.0),
            _ => None,
        }
    }

    /// Marginal tail of the untrended field.
    pub fn tail_function(&self) -> TailFunction {
        match *self {
            FieldKind::Gaussian | FieldKind::Trended => TailFunction::Gaussian,
            FieldKind::Chi { d } => TailFunction::Chi { d },
            FieldKind::OrderStat { d, r } => TailFunction::OrderStat { d, r },
        }
    }
}

impl fmt::Display for FieldKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldKind::Gaussian => write!(f, "gaussian"),
            FieldKind::Chi { d } => write!(f, "chi({d})"),
            FieldKind::OrderStat { d, r } => write!(f, "orderstat({d},{r})"),
            FieldKind::Trended => write!(f, "trended"),
        }
    }
}

/// One realization on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSample {
    pub shape: GridShape,
    pub values: Vec<f64>,
    pub kind: FieldKind,
    /// Untrended draw, kept for trended fields only.
    base: Option<Vec<f64>>,
}

impl FieldSample {
    pub fn new(shape: GridShape, values: Vec<f64>, kind: FieldKind) -> Result<Self> {
        if values.len() != shape.cells() {
            return Err(Error::ShapeMismatch { left: shape.to_string(), right: format!("{} values", values.len()) });
        }
        match kind {
            FieldKind::Chi { .. } if values.iter().any(|&v| v < 0.0) => {
                return Err(Error::InvalidValue { key: "values".into(), message: "chi field must be nonnegative".into() })
            }
            FieldKind::OrderStat { d, r } if r == 0 || r > d => return Err(Error::InvalidRank { d, r }),
            _ => {}
        }
        Ok(FieldSample { shape, values, kind, base: None })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Debug, Clone)]
enum Backend {
    Independent,
    Dense(CholeskyFactor),
    Spectral(SpectralSampler),
}

/// Zero-mean unit-variance Gaussian field sampler for one model and grid.
///
/// Grids up to the dense threshold are sampled as `L z` with the Cholesky
/// factor `L`; larger grids go through circulant embedding. Independent
/// models skip both.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    model: CovarianceModel,
    shape: GridShape,
    backend: Backend,
}

impl GaussianSampler {
    pub fn new(model: CovarianceModel, shape: GridShape) -> Result<Self> {
        Self::with_threshold(model, shape, DENSE_THRESHOLD)
    }

    pub fn with_threshold(model: CovarianceModel, shape: GridShape, threshold: usize) -> Result<Self> {
        if model.is_independent() {
            return Ok(GaussianSampler { model, shape, backend: Backend::Independent });
        }
        if shape.cells() <= threshold {
            Self::dense(model, shape, threshold)
        } else {
            Self::spectral(model, shape)
        }
    }

    /// Force the Cholesky path.
    pub fn dense(model: CovarianceModel, shape: GridShape, threshold: usize) -> Result<Self> {
        let factor = build_covariance_matrix(&model, shape, threshold)?.cholesky()?;
        Ok(GaussianSampler { model, shape, backend: Backend::Dense(factor) })
    }

    /// Force the circulant-embedding path.
    pub fn spectral(model: CovarianceModel, shape: GridShape) -> Result<Self> {
        Ok(GaussianSampler { model, shape, backend: Backend::Spectral(SpectralSampler::new(&model, shape)?) })
    }

    pub fn model(&self) -> &CovarianceModel {
        &self.model
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn method(&self) -> &'static str {
        match self.backend {
            Backend::Independent => "independent",
            Backend::Dense(_) => "dense",
            Backend::Spectral(_) => "spectral",
        }
    }

    /// Overwrite `out` with one draw.
    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.shape.cells());
        match &self.backend {
            Backend::Independent => out.iter_mut().for_each(|o| *o = rng.sample(StandardNormal)),
            Backend::Dense(l) => {
                let z: Vec<f64> = (0..out.len()).map(|_| rng.sample(StandardNormal)).collect();
                l.mul_vec(&z, out);
            }
            Backend::Spectral(s) => s.fill(rng, out),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldSample {
        let mut values = vec![0.0; self.shape.cells()];
        self.fill(rng, &mut values);
        FieldSample { shape: self.shape, values, kind: FieldKind::Gaussian, base: None }
    }

    fn components<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Vec<Vec<f64>> {
        (0..d).map(|_| self.sample(rng).values).collect()
    }
}

/// One Gaussian draw; builds a sampler per call, so prefer
/// [`GaussianSampler`] when drawing repeatedly.
pub fn sample_gaussian_field<R: Rng + ?Sized>(model: &CovarianceModel, shape: GridShape, rng: &mut R) -> Result<FieldSample> {
    Ok(GaussianSampler::new(*model, shape)?.sample(rng))
}

/// Pointwise Euclidean norm of component fields.
pub fn chi_from_components(shape: GridShape, components: &[Vec<f64>]) -> Result<FieldSample> {
    let d = components.len();
    if d == 0 {
        return Err(Error::InvalidParameter { name: "d", value: 0.0, reason: "must be at least 1" });
    }
    let n = shape.cells();
    if components.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch { left: shape.to_string(), right: "component length".into() });
    }
    let values = (0..n).map(|i| components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt()).collect();
    Ok(FieldSample { shape, values, kind: FieldKind::Chi { d }, base: None })
}

/// Pointwise `r`-th largest of the component fields.
pub fn orderstat_from_components(shape: GridShape, components: &[Vec<f64>], r: usize) -> Result<FieldSample> {
    let d = components.len();
    if r == 0 || r > d {
        return Err(Error::InvalidRank { d, r });
    }
    let n = shape.cells();
    if components.iter().any(|c| c.len() != n) {
        return Err(Error::ShapeMismatch { left: shape.to_string(), right: "component length".into() });
    }
    let mut scratch = vec![0.0; d];
    let values = (0..n)
        .map(|i| {
            for (s, c) in scratch.iter_mut().zip(components) {
                *s = c[i];
            }
            let (_, nth, _) = scratch.select_nth_unstable_by(r - 1, |a, b| b.total_cmp(a));
            *nth
        })
        .collect();
    Ok(FieldSample { shape, values, kind: FieldKind::OrderStat { d, r }, base: None })
}

/// χ field from `d` independent copies drawn with `sampler`.
pub fn sample_chi_field<R: Rng + ?Sized>(sampler: &GaussianSampler, d: usize, rng: &mut R) -> Result<FieldSample> {
    if d == 0 {
        return Err(Error::InvalidParameter { name: "d", value: 0.0, reason: "must be at least 1" });
    }
    chi_from_components(sampler.shape, &sampler.components(d, rng))
}

/// Order-statistic field O^(r) from `d` independent copies.
pub fn sample_orderstat_field<R: Rng + ?Sized>(
    sampler: &GaussianSampler,
    d: usize,
    r: usize,
    rng: &mut R,
) -> Result<FieldSample> {
    if r == 0 || r > d {
        return Err(Error::InvalidRank { d, r });
    }
    orderstat_from_components(sampler.shape, &sampler.components(d, rng), r)
}

/// A sampler together with the pointwise functional applied to its copies.
#[derive(Debug, Clone)]
pub struct FieldGenerator {
    sampler: GaussianSampler,
    kind: FieldKind,
}

impl FieldGenerator {
    /// `kind` must be gaussian, chi or orderstat; trends are applied separately.
    pub fn new(sampler: GaussianSampler, kind: FieldKind) -> Result<Self> {
        match kind {
            FieldKind::Trended => Err(Error::KindMismatch { expected: "gaussian, chi or orderstat", found: kind.to_string() }),
            FieldKind::Chi { d: 0 } => Err(Error::InvalidParameter { name: "d", value: 0.0, reason: "must be at least 1" }),
            FieldKind::OrderStat { d, r } if r == 0 || r > d => Err(Error::InvalidRank { d, r }),
            _ => Ok(FieldGenerator { sampler, kind }),
        }
    }

    pub fn gaussian(sampler: GaussianSampler) -> Self {
        FieldGenerator { sampler, kind: FieldKind::Gaussian }
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn shape(&self) -> GridShape {
        self.sampler.shape
    }

    pub fn sampler(&self) -> &GaussianSampler {
        &self.sampler
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> FieldSample {
        match self.kind {
            FieldKind::Chi { d } => sample_chi_field(&self.sampler, d, rng).expect("validated kind"),
            FieldKind::OrderStat { d, r } => sample_orderstat_field(&self.sampler, d, r, rng).expect("validated kind"),
            _ => self.sampler.sample(rng),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::derive_stream;

    fn shape(n1: usize, n2: usize) -> GridShape {
        GridShape::new(n1, n2).unwrap()
    }

    #[test]
    fn independent_single_point_moments() {
        let s = GridShape::new(1, 1).unwrap();
        let sampler = GaussianSampler::new(CovarianceModel::Independent, s).unwrap();
        let mut rng = derive_stream(100, 0);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| sampler.sample(&mut rng).values[0]).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 * 10f64.powf(-2.5), "{mean}");
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn same_stream_same_field() {
        let g = CovarianceModel::geometric(0.4).unwrap();
        for sampler in [
            GaussianSampler::dense(g, shape(6, 5), 4096).unwrap(),
            GaussianSampler::spectral(g, shape(6, 5)).unwrap(),
            GaussianSampler::new(CovarianceModel::Independent, shape(6, 5)).unwrap(),
        ] {
            let a = sampler.sample(&mut derive_stream(5, 3));
            let b = sampler.sample(&mut derive_stream(5, 3));
            assert_eq!(a.values, b.values, "{}", sampler.method());
        }
    }

    #[test]
    fn dispatch_by_threshold() {
        let g = CovarianceModel::geometric(0.3).unwrap();
        assert_eq!(GaussianSampler::with_threshold(g, shape(8, 8), 64).unwrap().method(), "dense");
        assert_eq!(GaussianSampler::with_threshold(g, shape(8, 9), 64).unwrap().method(), "spectral");
        assert_eq!(GaussianSampler::new(CovarianceModel::Independent, shape(80, 80)).unwrap().method(), "independent");
    }

    #[test]
    fn embedding_is_clean_for_shipped_families() {
        for model in [
            CovarianceModel::geometric(0.5).unwrap(),
            CovarianceModel::geometric(0.9).unwrap(),
            CovarianceModel::polynomial(0.9, 2.0).unwrap(),
            CovarianceModel::polynomial(0.5, 0.5).unwrap(),
        ] {
            let s = SpectralSampler::new(&model, shape(32, 24)).unwrap();
            assert!(s.clipped_mass() <= NEGATIVE_MASS_TOL);
        }
    }

    #[test]
    fn chi_examples() {
        let s = shape(1, 1);
        let f = chi_from_components(s, &[vec![3.0], vec![4.0]]).unwrap();
        assert_eq!(f.values, vec![5.0]);
        let f = chi_from_components(s, &[vec![-1.5]]).unwrap();
        assert_eq!(f.values, vec![1.5]);
        assert!(chi_from_components(s, &[]).is_err());
    }

    #[test]
    fn chi_field_is_nonnegative_with_d_one() {
        let sampler = GaussianSampler::new(CovarianceModel::geometric(0.5).unwrap(), shape(5, 5)).unwrap();
        let f = sample_chi_field(&sampler, 1, &mut derive_stream(1, 1)).unwrap();
        assert!(f.values.iter().all(|&v| v >= 0.0));
        assert_eq!(f.kind, FieldKind::Chi { d: 1 });
    }

    #[test]
    fn chi_two_tail_frequency() {
        let sampler = GaussianSampler::new(CovarianceModel::Independent, shape(1, 1)).unwrap();
        let mut rng = derive_stream(77, 0);
        let n = 100_000;
        let hits = (0..n).filter(|_| sample_chi_field(&sampler, 2, &mut rng).unwrap().values[0] > 2.0).count();
        let p = (-2f64).exp();
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - p).abs() < 3.0 * se);
    }

    #[test]
    fn orderstat_examples() {
        let s = shape(1, 1);
        let comps = [vec![0.2], vec![-1.0], vec![0.5]];
        assert_eq!(orderstat_from_components(s, &comps, 2).unwrap().values, vec![0.2]);
        assert_eq!(orderstat_from_components(s, &comps, 1).unwrap().values, vec![0.5]);
        assert_eq!(orderstat_from_components(s, &comps, 3).unwrap().values, vec![-1.0]);
        assert!(matches!(orderstat_from_components(s, &comps, 4), Err(Error::InvalidRank { d: 3, r: 4 })));
        assert!(orderstat_from_components(s, &comps, 0).is_err());
    }

    #[test]
    fn orderstat_ranks_are_ordered() {
        let sampler = GaussianSampler::new(CovarianceModel::geometric(0.3).unwrap(), shape(4, 4)).unwrap();
        let comps = sampler.components(5, &mut derive_stream(8, 0));
        let fields: Vec<FieldSample> =
            (1..=5).map(|r| orderstat_from_components(shape(4, 4), &comps, r).unwrap()).collect();
        for w in fields.windows(2) {
            assert!(w[0].values.iter().zip(&w[1].values).all(|(a, b)| a >= b));
        }
    }

    #[test]
    fn generator_rejects_bad_kinds() {
        let sampler = GaussianSampler::new(CovarianceModel::Independent, shape(2, 2)).unwrap();
        assert!(FieldGenerator::new(sampler.clone(), FieldKind::Trended).is_err());
        assert!(FieldGenerator::new(sampler.clone(), FieldKind::OrderStat { d: 2, r: 3 }).is_err());
        assert!(FieldGenerator::new(sampler, FieldKind::Chi { d: 0 }).is_err());
    }

    #[test]
    fn trend_application() {
        let s = shape(4, 6);
        let sampler = GaussianSampler::new(CovarianceModel::Independent, s).unwrap();
        let f = sampler.sample(&mut derive_stream(2, 0));

        let zero = apply_trend(&f, &TrendSpec::with_center(&Trend::Zero, s, 0.0).unwrap()).unwrap();
        assert_eq!(zero.values, f.values);

        let c = apply_trend(&f, &TrendSpec::with_center(&Trend::Constant { c: 1.25 }, s, 0.0).unwrap()).unwrap();
        assert!(c.values.iter().zip(&f.values).all(|(z, y)| *z == y + 1.25));

        let t = Trend::Sinusoid { c: 0.7, p1: 1.0, p2: 0.0 };
        let z = apply_trend(&f, &TrendSpec::with_center(&t, s, 0.0).unwrap()).unwrap();
        for i1 in 0..4 {
            for i2 in 0..6 {
                let m = (2.0 * std::f64::consts::PI * (i1 + 1) as f64 / 4.0).sin() * 0.7;
                assert_eq!(z.values[s.index(i1, i2)], f.values[s.index(i1, i2)] + m);
            }
        }
        assert_eq!(z.kind, FieldKind::Trended);
        assert_eq!(remove_trend(&z).unwrap(), f);
        assert!(apply_trend(&z, &TrendSpec::with_center(&t, s, 0.0).unwrap()).is_err());
        assert!(remove_trend(&f).is_err());
    }
}
