//! Joint maxima events, Monte Carlo estimation of their probability, the
//! exact answer for independent fields, and the logarithmic-average
//! (ASCLT) estimator.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::covgrid::GridShape;
use crate::error::{Error, Result};
use crate::fieldgen::{apply_trend, FieldGenerator, FieldKind, FieldSample, Trend, TrendSpec};
use crate::levels::{calibrate_level, gumbel_level, limit_value, LevelPlan, TailFunction, LIMIT_QUAD_TOL};
use crate::missing::{observed_transform, sample_mask, LambdaModel, MissingMask, Observed};
use crate::numeric::harmonic;
use crate::rng::derive_stream;

/// Minimum replication count accepted by [`mc_joint_probability`].
pub const MIN_REPLICATIONS: u64 = 100;

/// Default cap on max(n1, n2) / min(n1, n2) for the ASCLT estimator.
pub const DEFAULT_RATIO_BOUND: f64 = 4.0;

/// Running maxima over the rectangles {1..k1} x {1..k2}, row-major.
pub fn prefix_max<T: PartialOrd + Copy>(shape: GridShape, values: &[T]) -> Vec<T> {
    assert_eq!(values.len(), shape.cells());
    let n2 = shape.n2();
    let mut out = values.to_vec();
    for i in 0..shape.n1() {
        for j in 0..n2 {
            let idx = i * n2 + j;
            let mut m = out[idx];
            if i > 0 && out[idx - n2] > m {
                m = out[idx - n2];
            }
            if j > 0 && out[idx - 1] > m {
                m = out[idx - 1];
            }
            out[idx] = m;
        }
    }
    out
}

/// Prefix maxima of a field and of its observed transform.
#[derive(Debug, Clone, PartialEq)]
pub struct PrefixMaxPair {
    pub shape: GridShape,
    pub complete: Vec<f64>,
    pub observed: Vec<Observed>,
}

impl PrefixMaxPair {
    pub fn new(field: &FieldSample, mask: &MissingMask) -> Result<Self> {
        let obs = observed_transform(field, mask)?;
        Ok(PrefixMaxPair {
            shape: field.shape,
            complete: prefix_max(field.shape, &field.values),
            observed: prefix_max(field.shape, &obs.values),
        })
    }

    /// Complete maximum over R_k, 1-based k.
    pub fn complete_at(&self, k1: usize, k2: usize) -> f64 {
        self.complete[self.shape.index(k1 - 1, k2 - 1)]
    }

    pub fn observed_at(&self, k1: usize, k2: usize) -> Observed {
        self.observed[self.shape.index(k1 - 1, k2 - 1)]
    }
}

/// {M ≤ u} ∩ {M̃ ≤ v}. With a trend the field is compared against the
/// levels shifted by the trend center; a Gaussian field gets the trend
/// added on the fly, a trended one is taken as is.
pub fn joint_event(field: &FieldSample, mask: &MissingMask, plan: &LevelPlan, trend: Option<&TrendSpec>) -> Result<bool> {
    if field.shape != mask.shape() {
        return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: mask.shape().to_string() });
    }
    if field.shape != plan.shape {
        return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: plan.shape.to_string() });
    }
    if plan.v > plan.u {
        return Err(Error::OrderViolation(format!("need v <= u, got v = {}, u = {}", plan.v, plan.u)));
    }
    let (u, v) = match trend {
        Some(t) => {
            if t.shape != field.shape {
                return Err(Error::ShapeMismatch { left: field.shape.to_string(), right: t.shape.to_string() });
            }
            (plan.u + t.center, plan.v + t.center)
        }
        None => (plan.u, plan.v),
    };
    let offsets = match trend {
        Some(t) if field.kind != FieldKind::Trended => Some(&t.values),
        _ => None,
    };
    let mut complete = f64::NEG_INFINITY;
    let mut observed = Observed::Floor;
    for (i, (&x, &seen)) in field.values.iter().zip(mask.bits()).enumerate() {
        let z = offsets.map_or(x, |m| x + m[i]);
        if z > complete {
            complete = z;
        }
        if seen && Observed::Value(z) > observed {
            observed = Observed::Value(z);
        }
    }
    Ok(complete <= u && observed.at_most(v))
}

/// Everything one Monte Carlo run of the joint probability needs.
#[derive(Debug, Clone)]
pub struct JointSetup {
    pub generator: FieldGenerator,
    pub lambda: LambdaModel,
    pub plan: LevelPlan,
    pub trend: Option<TrendSpec>,
    pub replications: u64,
    pub seed: u64,
    pub config_digest: String,
}

impl JointSetup {
    fn validate(&self) -> Result<()> {
        let shape = self.generator.shape();
        if self.plan.shape != shape {
            return Err(Error::ShapeMismatch { left: shape.to_string(), right: self.plan.shape.to_string() });
        }
        if let Some(t) = &self.trend {
            if self.generator.kind() != FieldKind::Gaussian {
                return Err(Error::KindMismatch { expected: "gaussian", found: self.generator.kind().to_string() });
            }
            if t.shape != shape {
                return Err(Error::ShapeMismatch { left: shape.to_string(), right: t.shape.to_string() });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub std_error: f64,
    pub replications: u64,
    pub target: f64,
    pub seed: u64,
    pub config_digest: String,
}

impl EstimateReport {
    pub fn abs_error(&self) -> f64 {
        (self.estimate - self.target).abs()
    }
}

/// Joint event for replication `index`. Each replication draws, from its
/// own stream, the field, then λ, then the mask.
pub fn replication_outcome(setup: &JointSetup, index: u64) -> Result<bool> {
    let mut rng = derive_stream(setup.seed, index);
    let field = setup.generator.sample(&mut rng);
    let lambda = setup.lambda.sample(&mut rng);
    let mask = sample_mask(lambda, field.shape, &mut rng)?;
    joint_event(&field, &mask, &setup.plan, setup.trend.as_ref())
}

/// Outcomes of replications `0..count`, in index order.
pub fn replication_outcomes(setup: &JointSetup, count: u64) -> Result<Vec<bool>> {
    setup.validate()?;
    (0..count).into_par_iter().map(|r| replication_outcome(setup, r)).collect()
}

/// Fraction of replications in which the joint event holds.
pub fn mc_joint_probability(setup: &JointSetup) -> Result<EstimateReport> {
    if setup.replications < MIN_REPLICATIONS {
        return Err(Error::TooFewReplications { min: MIN_REPLICATIONS, got: setup.replications });
    }
    setup.validate()?;
    let hits: u64 = (0..setup.replications)
        .into_par_iter()
        .map(|r| replication_outcome(setup, r).map(u64::from))
        .sum::<Result<u64>>()?;
    let n = setup.replications as f64;
    let p = hits as f64 / n;
    Ok(EstimateReport {
        estimate: p,
        std_error: (p * (1.0 - p) / n).sqrt(),
        replications: setup.replications,
        target: limit_value(&setup.lambda, setup.plan.kappa, setup.plan.tau)?,
        seed: setup.seed,
        config_digest: setup.config_digest.clone(),
    })
}

/// E_λ[(λ Φ(v) + (1−λ) Φ(u))^N] for an independent field.
pub fn exact_iid_joint(lambda: &LambdaModel, phi_u: f64, phi_v: f64, cells: u64) -> Result<f64> {
    for p in [phi_u, phi_v] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidParameter { name: "phi", value: p, reason: "must be a probability" });
        }
    }
    if phi_v > phi_u {
        return Err(Error::OrderViolation(format!("need phi_v <= phi_u, got {phi_v} > {phi_u}")));
    }
    exact_iid_joint_tails(lambda, 1.0 - phi_u, 1.0 - phi_v, cells)
}

/// [`exact_iid_joint`] in terms of the tails 1 − Φ, accurate when both
/// tails are tiny.
pub fn exact_iid_joint_tails(lambda: &LambdaModel, tail_u: f64, tail_v: f64, cells: u64) -> Result<f64> {
    for t in [tail_u, tail_v] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidParameter { name: "tail", value: t, reason: "must be a probability" });
        }
    }
    if tail_v < tail_u {
        return Err(Error::OrderViolation(format!("need tail_v >= tail_u, got {tail_v} < {tail_u}")));
    }
    if cells == 0 {
        return Err(Error::DegenerateSize(0.0));
    }
    let n = cells as f64;
    let at = |l: f64| {
        let q = l * tail_v + (1.0 - l) * tail_u;
        if q >= 1.0 {
            0.0
        } else {
            (n * (-q).ln_1p()).exp()
        }
    };
    Ok(match *lambda {
        LambdaModel::Point { p } => at(p),
        LambdaModel::TwoPoint { p1, p2, w } => w * at(p1) + (1.0 - w) * at(p2),
        LambdaModel::Beta { .. } => lambda.expectation(at, LIMIT_QUAD_TOL),
    })
}

/// (Σ_{k∈R_n} 1/(k1 k2), ln n1 · ln n2) = (H(n1) H(n2), ln n1 · ln n2).
pub fn weight_normalizer(shape: GridShape) -> Result<(f64, f64)> {
    shape.require_min(2)?;
    let (n1, n2) = (shape.n1(), shape.n2());
    Ok((harmonic(n1) * harmonic(n2), (n1 as f64).ln() * (n2 as f64).ln()))
}

/// How the per-k levels of the ASCLT sum are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LevelRule {
    /// N_k · tail(u_k) = τ and N_k · tail(v_k) = κ exactly.
    Calibrated { tailfn: TailFunction, tau: f64, kappa: f64 },
    /// Gaussian levels u_k = y/a_k + b_k, v_k = x/a_k + b_k.
    Gumbel { x: f64, y: f64 },
}

impl LevelRule {
    pub fn targets(&self) -> (f64, f64) {
        match *self {
            LevelRule::Calibrated { tau, kappa, .. } => (tau, kappa),
            LevelRule::Gumbel { x, y } => ((-y).exp(), (-x).exp()),
        }
    }

    /// Levels for a grid of `cells` points; `+∞` where the rule has no
    /// solution at this size, which makes that leg of the event vacuous.
    fn levels(&self, k: GridShape) -> Result<(f64, f64)> {
        let cells = k.cells() as f64;
        match *self {
            LevelRule::Calibrated { tailfn, tau, kappa } => {
                let level = |t: f64| if cells <= t { Ok(f64::INFINITY) } else { calibrate_level(&tailfn, cells, t) };
                Ok((level(tau)?, level(kappa)?))
            }
            LevelRule::Gumbel { x, y } => {
                if k.cells() < 3 {
                    Ok((f64::INFINITY, f64::INFINITY))
                } else {
                    Ok((gumbel_level(y, k)?, gumbel_level(x, k)?))
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct AscltSetup {
    pub generator: FieldGenerator,
    pub lambda: LambdaModel,
    pub rule: LevelRule,
    pub trend: Option<Trend>,
    pub ratio_bound: f64,
    /// Nested sub-rectangles at which partial estimates are reported.
    pub checkpoints: Vec<GridShape>,
    pub seed: u64,
}

/// Estimate restricted to a nested rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AscltPoint {
    pub shape: GridShape,
    pub estimate: f64,
    /// Limit of the joint probability.
    pub target: f64,
    /// H(n1) H(n2) / (ln n1 ln n2), the finite-size factor on the target.
    pub normalization: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AscltReport {
    pub path: u64,
    pub estimate: f64,
    pub target: f64,
    pub weight_sum: f64,
    pub log_product: f64,
    /// Rectangles R_k whose levels are vacuous (too few cells for the targets).
    pub vacuous: usize,
    pub ratio: f64,
    pub ratio_bound: f64,
    pub checkpoints: Vec<AscltPoint>,
}

/// Per-k levels and trend centers, computed once and shared by all paths.
#[derive(Debug, Clone)]
pub struct AscltPlan {
    setup: AscltSetup,
    shape: GridShape,
    u: Vec<f64>,
    v: Vec<f64>,
    trend: Option<Vec<f64>>,
    target: f64,
    vacuous: usize,
    ratio: f64,
}

fn shape_ratio(s: GridShape) -> f64 {
    s.n1().max(s.n2()) as f64 / s.n1().min(s.n2()) as f64
}

impl AscltPlan {
    pub fn new(setup: AscltSetup) -> Result<Self> {
        let shape = setup.generator.shape();
        shape.require_min(3)?;
        let ratio = shape_ratio(shape);
        if ratio > setup.ratio_bound {
            return Err(Error::RatioBound { n1: shape.n1(), n2: shape.n2(), bound: setup.ratio_bound });
        }
        for c in &setup.checkpoints {
            if c.n1() > shape.n1() || c.n2() > shape.n2() {
                return Err(Error::InvalidNesting { inner: c.to_string(), outer: shape.to_string() });
            }
            c.require_min(2)?;
        }
        let trend_values = match &setup.trend {
            Some(t) if !t.is_zero() => {
                if setup.generator.kind() != FieldKind::Gaussian {
                    return Err(Error::KindMismatch { expected: "gaussian", found: setup.generator.kind().to_string() });
                }
                Some(t.values(shape))
            }
            _ => None,
        };
        let (tau, kappa) = setup.rule.targets();
        let target = limit_value(&setup.lambda, kappa, tau)?;

        let (n1, n2) = (shape.n1(), shape.n2());
        let mut u = vec![0.0; shape.cells()];
        let mut v = vec![0.0; shape.cells()];
        let mut cache: HashMap<usize, (f64, f64)> = HashMap::new();
        let mut vacuous = 0;
        for k1 in 1..=n1 {
            for k2 in 1..=n2 {
                let idx = shape.index(k1 - 1, k2 - 1);
                let k = GridShape::new(k1, k2)?;
                let (mut uk, mut vk) = match cache.get(&(k1 * k2)) {
                    Some(&l) => l,
                    None => {
                        let l = setup.rule.levels(k)?;
                        cache.insert(k1 * k2, l);
                        l
                    }
                };
                if uk == f64::INFINITY {
                    vacuous += 1;
                }
                if let (Some(m), true) = (&trend_values, k.cells() >= 3) {
                    let sub: Vec<f64> = (0..k1).flat_map(|i| m[i * n2..i * n2 + k2].iter().copied()).collect();
                    let center = TrendSpec::solved_from_values(k, sub)?.center;
                    uk += center;
                    vk += center;
                }
                u[idx] = uk;
                v[idx] = vk;
            }
        }
        Ok(AscltPlan { setup, shape, u, v, trend: trend_values, target, vacuous, ratio })
    }

    pub fn shape(&self) -> GridShape {
        self.shape
    }

    pub fn target(&self) -> f64 {
        self.target
    }

    /// Levels (u_k, v_k) in force for R_k, trend center included.
    pub fn levels_at(&self, k1: usize, k2: usize) -> (f64, f64) {
        let idx = self.shape.index(k1 - 1, k2 - 1);
        (self.u[idx], self.v[idx])
    }

    /// Indicator of the joint event on every R_k for one realization.
    pub fn indicators(&self, field: &FieldSample, mask: &MissingMask) -> Result<Vec<bool>> {
        let field = match &self.trend {
            Some(m) => {
                let spec = TrendSpec::from_values(self.shape, m.clone(), 0.0)?;
                apply_trend(field, &spec)?
            }
            None => field.clone(),
        };
        let pm = PrefixMaxPair::new(&field, mask)?;
        Ok((0..self.shape.cells())
            .map(|i| pm.complete[i] <= self.u[i] && pm.observed[i].at_most(self.v[i]))
            .collect())
    }

    /// Log-average over the path drawn from stream `path`.
    pub fn estimate(&self, path: u64) -> Result<AscltReport> {
        let mut rng = derive_stream(self.setup.seed, path);
        let field = self.setup.generator.sample(&mut rng);
        let lambda = self.setup.lambda.sample(&mut rng);
        let mask = sample_mask(lambda, self.shape, &mut rng)?;
        let hits = self.indicators(&field, &mask)?;
        self.report(path, &hits)
    }

    /// Summarize indicators, including every checkpoint, via 2D prefix sums
    /// of the weighted indicators.
    pub fn report(&self, path: u64, hits: &[bool]) -> Result<AscltReport> {
        let (n1, n2) = (self.shape.n1(), self.shape.n2());
        let mut acc = vec![0.0; (n1 + 1) * (n2 + 1)];
        let at = |i: usize, j: usize| i * (n2 + 1) + j;
        for k1 in 1..=n1 {
            for k2 in 1..=n2 {
                let w = if hits[self.shape.index(k1 - 1, k2 - 1)] { 1.0 / (k1 * k2) as f64 } else { 0.0 };
                acc[at(k1, k2)] = w + acc[at(k1 - 1, k2)] + acc[at(k1, k2 - 1)] - acc[at(k1 - 1, k2 - 1)];
            }
        }
        let point = |s: GridShape| -> Result<AscltPoint> {
            let (w, l) = weight_normalizer(s)?;
            Ok(AscltPoint {
                shape: s,
                estimate: acc[at(s.n1(), s.n2())] / l,
                target: self.target,
                normalization: w / l,
            })
        };
        let checkpoints = self.setup.checkpoints.iter().map(|&s| point(s)).collect::<Result<Vec<_>>>()?;
        let (weight_sum, log_product) = weight_normalizer(self.shape)?;
        Ok(AscltReport {
            path,
            estimate: acc[at(n1, n2)] / log_product,
            target: self.target,
            weight_sum,
            log_product,
            vacuous: self.vacuous,
            ratio: self.ratio,
            ratio_bound: self.setup.ratio_bound,
            checkpoints,
        })
    }

    /// Σ_k w_k P_k / (ln n1 ln n2) for an independent untrended field,
    /// the exact mean of [`AscltPlan::estimate`].
    pub fn iid_expectation(&self) -> Result<f64> {
        if !self.setup.generator.sampler().model().is_independent() || self.trend.is_some() {
            return Err(Error::KindMismatch {
                expected: "independent untrended field",
                found: self.setup.generator.sampler().model().tag().to_string(),
            });
        }
        let tailfn = self.setup.generator.kind().tail_function();
        let mut total = 0.0;
        for k1 in 1..=self.shape.n1() {
            for k2 in 1..=self.shape.n2() {
                let (u, v) = self.levels_at(k1, k2);
                // A vacuous v above a finite u leaves observed cells bounded by u.
                let p = exact_iid_joint_tails(&self.setup.lambda, tailfn.tail(u), tailfn.tail(u.min(v)), (k1 * k2) as u64)?;
                total += p / (k1 * k2) as f64;
            }
        }
        Ok(total / weight_normalizer(self.shape)?.1)
    }
}

/// Single-path ASCLT estimate for `setup`.
pub fn asclt_estimate(setup: &AscltSetup, path: u64) -> Result<AscltReport> {
    AscltPlan::new(setup.clone())?.estimate(path)
}
