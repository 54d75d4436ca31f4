//! Computable surrogates for the mixing conditions: block partitions, the
//! anti-cluster sum through bivariate normal orthant probabilities,
//! normal-comparison bound sums, and tail comparability.
#![allow(clippy::excessive_precision)]

use std::f64::consts::PI;

use serde::Serialize;

use crate::covgrid::{CovarianceModel, GridShape};
use crate::error::{Error, Result};
use crate::levels::LevelPlan;
use crate::numeric::{normal_cdf, normal_sf, CompensatedSum};

/// Correlations below this magnitude are treated as zero in lag sums.
pub const LAG_TRUNCATION: f64 = 1e-14;

/// Default PASS bound for [`tail_comparability`].
pub const DEFAULT_COMPARABILITY_BOUND: f64 = 10.0;

/// Half-open index rectangle, 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Block {
    pub rows: (usize, usize),
    pub cols: (usize, usize),
}

impl Block {
    pub fn cells(&self) -> usize {
        (self.rows.1 - self.rows.0) * (self.cols.1 - self.cols.0)
    }

    pub fn contains(&self, i1: usize, i2: usize) -> bool {
        (self.rows.0..self.rows.1).contains(&i1) && (self.cols.0..self.cols.1).contains(&i2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartitionScheme {
    pub shape: GridShape,
    pub k1: usize,
    pub k2: usize,
    pub m1: usize,
    pub m2: usize,
    /// Block side lengths.
    pub b1: usize,
    pub b2: usize,
    pub blocks: Vec<Block>,
    /// Cells outside every block.
    pub remainder: usize,
    /// k_i m_i / n_i
    pub rate1: f64,
    pub rate2: f64,
}

/// k_i = ⌊√n_i⌋ blocks and gaps m_i = ⌊ln n_i⌋ per axis. When k_i does not
/// divide n_i the leftover rows (columns) are split between both ends.
pub fn make_partition(shape: GridShape) -> Result<PartitionScheme> {
    shape.require_min(9)?;
    let axis = |n: usize| {
        let k = (n as f64).sqrt().floor() as usize;
        let k = if (k + 1) * (k + 1) <= n { k + 1 } else if k * k > n { k - 1 } else { k };
        let m = (n as f64).ln().floor() as usize;
        let b = n / k;
        let offset = (n - k * b) / 2;
        (k, m, b, offset)
    };
    let (k1, m1, b1, o1) = axis(shape.n1());
    let (k2, m2, b2, o2) = axis(shape.n2());
    let mut blocks = Vec::with_capacity(k1 * k2);
    for s1 in 0..k1 {
        for s2 in 0..k2 {
            blocks.push(Block {
                rows: (o1 + s1 * b1, o1 + (s1 + 1) * b1),
                cols: (o2 + s2 * b2, o2 + (s2 + 1) * b2),
            });
        }
    }
    Ok(PartitionScheme {
        shape,
        k1,
        k2,
        m1,
        m2,
        b1,
        b2,
        blocks,
        remainder: shape.cells() - k1 * k2 * b1 * b2,
        rate1: (k1 * m1) as f64 / shape.n1() as f64,
        rate2: (k2 * m2) as f64 / shape.n2() as f64,
    })
}

// Gauss-Legendre abscissae and weights on [-1, 1], one half of each
// symmetric rule.
const GL6: [(f64, f64); 3] = [
    (0.9324695142031522, 0.1713244923791705),
    (0.6612093864662647, 0.3607615730481384),
    (0.2386191860831970, 0.4679139345726904),
];

const GL12: [(f64, f64); 6] = [
    (0.9815606342467191, 0.4717533638651177e-01),
    (0.9041172563704750, 0.1069393259953183),
    (0.7699026741943050, 0.1600783285433464),
    (0.5873179542866171, 0.2031674267230659),
    (0.3678314989981802, 0.2334925365383547),
    (0.1252334085114692, 0.2491470458134029),
];

const GL20: [(f64, f64); 10] = [
    (0.9931285991850949, 0.1761400713915212e-01),
    (0.9639719272779138, 0.4060142980038694e-01),
    (0.9122344282513259, 0.6267204833410906e-01),
    (0.8391169718222188, 0.8327674157670475e-01),
    (0.7463319064601508, 0.1019301198172404),
    (0.6360536807265150, 0.1181945319615184),
    (0.5108670019508271, 0.1316886384491766),
    (0.3737060887154196, 0.1420961093183821),
    (0.2277858511416451, 0.1491729864726037),
    (0.7652652113349733e-01, 0.1527533871307259),
];

/// P(X > h, Y > k) for a standard bivariate normal pair with correlation
/// `rho`, after Drezner–Wesolowsky as refined by Genz.
pub fn bvn_upper_orthant(h: f64, k: f64, rho: f64) -> Result<f64> {
    if !(rho.abs() < 1.0) {
        return Err(Error::CorrelationOutOfRange(rho));
    }
    if h.is_nan() || k.is_nan() {
        return Err(Error::InvalidParameter { name: "limit", value: f64::NAN, reason: "must not be NaN" });
    }
    Ok(bvnu(h, k, rho))
}

fn bvnu(h: f64, mut k: f64, r: f64) -> f64 {
    if h == f64::INFINITY || k == f64::INFINITY {
        return 0.0;
    }
    if h == f64::NEG_INFINITY {
        return if k == f64::NEG_INFINITY { 1.0 } else { normal_sf(k) };
    }
    if k == f64::NEG_INFINITY {
        return normal_sf(h);
    }
    if r == 0.0 {
        return normal_sf(h) * normal_sf(k);
    }
    let tp = 2.0 * PI;
    let rule: &[(f64, f64)] = if r.abs() < 0.3 {
        &GL6
    } else if r.abs() < 0.75 {
        &GL12
    } else {
        &GL20
    };
    let mut hk = h * k;
    if r.abs() < 0.925 {
        let hs = 0.5 * (h * h + k * k);
        let asr = 0.5 * r.asin();
        let mut s = 0.0;
        for &(x, w) in rule {
            for t in [1.0 - x, 1.0 + x] {
                let sn = (asr * t).sin();
                s += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
        }
        return (s * asr / tp + normal_sf(h) * normal_sf(k)).clamp(0.0, 1.0);
    }
    if r < 0.0 {
        k = -k;
        hk = -hk;
    }
    let mut bvn = 0.0;
    let as_ = (1.0 - r) * (1.0 + r);
    let mut a = as_.sqrt();
    let bs = (h - k) * (h - k);
    let c = (4.0 - hk) / 8.0;
    let d = (12.0 - hk) / 80.0;
    let asr = -0.5 * (bs / as_ + hk);
    if asr > -100.0 {
        bvn = a * asr.exp() * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_);
    }
    if hk > -100.0 {
        let b = bs.sqrt();
        let sp = tp.sqrt() * normal_sf(b / a);
        bvn -= (-0.5 * hk).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
    }
    a *= 0.5;
    let mut s = 0.0;
    for &(x, w) in rule {
        for t in [1.0 - x, 1.0 + x] {
            let xs = (a * t) * (a * t);
            let asr = -0.5 * (bs / xs + hk);
            if asr > -100.0 {
                let sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                let rs = (1.0 - xs).sqrt();
                let ep = (-0.5 * hk * xs / ((1.0 + rs) * (1.0 + rs))).exp() / rs;
                s += w * asr.exp() * (sp - ep);
            }
        }
    }
    bvn = (a * s - bvn) / tp;
    if r > 0.0 {
        bvn += normal_sf(h.max(k));
    } else if h >= k {
        bvn = -bvn;
    } else {
        let l = if h < 0.0 { normal_cdf(k) - normal_cdf(h) } else { normal_sf(h) - normal_sf(k) };
        bvn = l - bvn;
    }
    bvn.clamp(0.0, 1.0)
}

/// Visit every nonzero lag (l1, l2) with 0 ≤ l_i < len_i whose correlation
/// is at least [`LAG_TRUNCATION`] in magnitude, passing the correlation and
/// the number of signed lags it stands for. Returns the largest skipped
/// |ρ|. Relies on |ρ| being nonincreasing in each lag component.
fn for_each_lag<F: FnMut(usize, usize, f64, f64)>(model: &CovarianceModel, len1: usize, len2: usize, mut f: F) -> f64 {
    let signs = |l: usize| if l == 0 { 1.0 } else { 2.0 };
    let mut skipped: f64 = 0.0;
    for l1 in 0..len1 {
        let mut row_visited = 0;
        for l2 in 0..len2 {
            if l1 == 0 && l2 == 0 {
                continue;
            }
            let rho = model.covariance_at(l1 as i64, l2 as i64);
            if rho.abs() < LAG_TRUNCATION {
                skipped = skipped.max(rho.abs());
                break;
            }
            f(l1, l2, rho, signs(l1) * signs(l2));
            row_visited += 1;
        }
        if row_visited == 0 && l1 > 0 {
            break;
        }
    }
    skipped
}

/// Anti-cluster sum with its decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DprimeReport {
    /// k1 k2 Σ_{i≠j∈I} P(X_i > v, X_j > v) over one block I.
    pub value: f64,
    /// Part of `value` in excess of independent pairs.
    pub excess: f64,
    /// Ordered pairs in the block whose correlation was truncated to zero.
    pub truncated_pairs: f64,
    /// Bound on the error from truncation.
    pub truncation_bound: f64,
}

/// k1 k2 · max over blocks of the within-block double-exceedance sum at
/// level `plan.v`. All blocks have the same size, so by stationarity the
/// maximum is the common value.
pub fn dprime_sum(model: &CovarianceModel, plan: &LevelPlan, partition: &PartitionScheme) -> Result<DprimeReport> {
    if plan.shape != partition.shape {
        return Err(Error::ShapeMismatch { left: plan.shape.to_string(), right: partition.shape.to_string() });
    }
    let v = plan.v;
    let (b1, b2) = (partition.b1, partition.b2);
    let tail = normal_sf(v);
    let independent = tail * tail;
    let mut excess = CompensatedSum::new();
    let mut visited_pairs = 0.0;
    let mut err = None;
    let skipped = for_each_lag(model, b1, b2, |l1, l2, rho, signs| {
        let pairs = signs * ((b1 - l1) * (b2 - l2)) as f64;
        visited_pairs += pairs;
        match bvn_upper_orthant(v, v, rho) {
            Ok(p) => excess.add(pairs * (p - independent)),
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e);
    }
    let cells = (b1 * b2) as f64;
    let all_pairs = cells * (cells - 1.0);
    let truncated_pairs = all_pairs - visited_pairs;
    let blocks = (partition.k1 * partition.k2) as f64;
    let excess = blocks * excess.value();
    Ok(DprimeReport {
        value: blocks * all_pairs * independent + excess,
        excess,
        truncated_pairs,
        truncation_bound: blocks * truncated_pairs * orthant_shift_bound(skipped, v),
    })
}

/// Normal comparison bound on |P(X > v, Y > v; r) − P(X > v)²|.
fn orthant_shift_bound(rho: f64, v: f64) -> f64 {
    let r = rho.abs();
    r / (2.0 * PI * (1.0 - r * r).sqrt()) * (-v * v / (1.0 + r)).exp()
}

/// |r| exp(−(v_a² + v_b²) / (2(1 + |r|))), the normal comparison summand.
fn comparison_term(rho: f64, va: f64, vb: f64) -> f64 {
    let r = rho.abs();
    if r == 0.0 {
        return 0.0;
    }
    r * (-(va * va + vb * vb) / (2.0 * (1.0 + r))).exp()
}

/// Σ_{i≠j∈R_n} |r_ij| exp(−v² / (1 + |r_ij|)) at the plan's level `v`.
pub fn comparison_bound(model: &CovarianceModel, plan: &LevelPlan) -> f64 {
    let (n1, n2) = (plan.shape.n1(), plan.shape.n2());
    let v = plan.v;
    let mut s = CompensatedSum::new();
    for_each_lag(model, n1, n2, |l1, l2, rho, signs| {
        s.add(signs * ((n1 - l1) * (n2 - l2)) as f64 * comparison_term(rho, v, v));
    });
    s.value()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DstarReport {
    pub value: f64,
    /// (ln ln n1 · ln ln n2)^(−(1+ε)) at the outer shape.
    pub benchmark: f64,
    pub below_benchmark: bool,
}

/// k1 k2 Σ_{0≤j≤n, j≠0} |ρ_j| exp(−(v_k² + v_n²) / (2(1 + |ρ_j|))) with
/// k the inner and n the outer rectangle.
pub fn dstar_bound(model: &CovarianceModel, inner: &LevelPlan, outer: &LevelPlan, epsilon: f64) -> Result<DstarReport> {
    if inner.shape.cells() >= outer.shape.cells() {
        return Err(Error::InvalidNesting { inner: inner.shape.to_string(), outer: outer.shape.to_string() });
    }
    outer.shape.require_min(3)?;
    let (n1, n2) = (outer.shape.n1(), outer.shape.n2());
    let mut s = CompensatedSum::new();
    for_each_lag(model, n1 + 1, n2 + 1, |_, _, rho, _| s.add(comparison_term(rho, inner.v, outer.v)));
    let value = inner.shape.cells() as f64 * s.value();
    let ll = ((n1 as f64).ln().ln() * (n2 as f64).ln().ln()).powf(-(1.0 + epsilon));
    Ok(DstarReport { value, benchmark: ll, below_benchmark: value < ll })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailComparability {
    pub ratio: f64,
    pub bound: f64,
    pub pass: bool,
}

/// max/min of per-index tail probabilities, PASS when within `bound`.
pub fn tail_comparability(tails: &[f64], bound: f64) -> Result<TailComparability> {
    if tails.is_empty() {
        return Err(Error::InvalidValue { key: "tails".into(), message: "need at least one tail".into() });
    }
    let mut lo = f64::INFINITY;
    let mut hi: f64 = 0.0;
    for &t in tails {
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::DegenerateTail(t));
        }
        lo = lo.min(t);
        hi = hi.max(t);
    }
    let ratio = hi / lo;
    Ok(TailComparability { ratio, bound, pass: ratio <= bound })
}

/// One condition quantity along a shape ladder.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport {
    pub quantity: String,
    pub values: Vec<(GridShape, f64)>,
    /// Strictly decreasing along the ladder, or identically zero.
    pub decreasing: bool,
    pub tolerance: f64,
}

impl ConditionReport {
    pub fn new(quantity: &str, values: Vec<(GridShape, f64)>, tolerance: f64) -> Self {
        let all_zero = values.iter().all(|(_, v)| *v == 0.0);
        let decreasing = all_zero || values.windows(2).all(|w| w[1].1 < w[0].1);
        ConditionReport { quantity: quantity.to_string(), values, decreasing, tolerance }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levels::TailFunction;
    use crate::numeric::{integrate, normal_pdf};

    fn sq(n: usize) -> GridShape {
        GridShape::square(n).unwrap()
    }

    /// ∫_h^∞ φ(x) P(Y > k | X = x) dx.
    fn bvn_quadrature(h: f64, k: f64, rho: f64) -> f64 {
        let s = (1.0 - rho * rho).sqrt();
        let upper = h.max(0.0) + 40.0;
        integrate(|x| normal_pdf(x) * normal_sf((k - rho * x) / s), h, upper, 1e-15)
    }

    #[test]
    fn partition_examples() {
        let p = make_partition(sq(100)).unwrap();
        assert_eq!((p.k1, p.k2, p.m1, p.m2, p.blocks.len(), p.remainder), (10, 10, 4, 4, 100, 0));
        assert!(p.blocks.iter().all(|b| b.cells() == 100));
        let p = make_partition(sq(9)).unwrap();
        assert_eq!((p.k1, p.k2, p.m1, p.m2), (3, 3, 2, 2));
        assert!(matches!(make_partition(GridShape::new(8, 20).unwrap()), Err(Error::DegenerateShape { .. })));
    }

    #[test]
    fn partition_tiles_when_divisible() {
        let s = GridShape::new(16, 25).unwrap();
        let p = make_partition(s).unwrap();
        for i1 in 0..16 {
            for i2 in 0..25 {
                assert_eq!(p.blocks.iter().filter(|b| b.contains(i1, i2)).count(), 1);
            }
        }
        let p = make_partition(GridShape::new(19, 30).unwrap()).unwrap();
        assert_eq!((p.b1, p.b2), (4, 6));
        assert_eq!(p.remainder, 19 * 30 - 16 * 30);
        assert_eq!(p.blocks[0].rows.0, 1);
        assert_eq!(p.blocks.last().unwrap().rows.1, 17);
    }

    #[test]
    fn bvn_closed_forms() {
        assert!((bvn_upper_orthant(0.0, 0.0, 0.0).unwrap() - 0.25).abs() < 1e-15);
        assert!((bvn_upper_orthant(0.0, 0.0, 0.5).unwrap() - 1.0 / 3.0).abs() < 1e-12);
        for rho in [-0.99f64, -0.95, -0.9, -0.5, 0.2, 0.5, 0.9, 0.95, 0.99] {
            let want = 0.25 + rho.asin() / (2.0 * PI);
            assert!((bvn_upper_orthant(0.0, 0.0, rho).unwrap() - want).abs() < 1e-12, "{rho}");
        }
        assert!(matches!(bvn_upper_orthant(0.0, 0.0, 1.0), Err(Error::CorrelationOutOfRange(_))));
    }

    #[test]
    fn bvn_matches_quadrature() {
        for &(h, k, rho) in &[
            (1.0, 0.5, 0.3),
            (-1.0, 2.0, 0.8),
            (2.5, 2.5, 0.95),
            (-0.5, -1.5, -0.93),
            (1.5, -0.3, -0.97),
            (3.0, 3.2, 0.5),
            (-2.0, 1.0, -0.4),
        ] {
            let got = bvn_upper_orthant(h, k, rho).unwrap();
            let want = bvn_quadrature(h, k, rho);
            assert!((got - want).abs() < 1e-10, "{h} {k} {rho}: {got} {want}");
        }
    }

    #[test]
    fn bvn_monotone_on_diagonal() {
        for h in [-1.0, 0.0, 1.5, 3.0] {
            let vals: Vec<f64> = (-19..=19).map(|i| bvn_upper_orthant(h, h, i as f64 * 0.05).unwrap()).collect();
            assert!(vals.windows(2).all(|w| w[1] >= w[0]), "{h}");
        }
    }

    #[test]
    fn dprime_independent_closed_form() {
        let s = sq(100);
        let plan = LevelPlan::calibrated(TailFunction::Gaussian, s, 1.0, 1.0).unwrap();
        let p = make_partition(s).unwrap();
        let r = dprime_sum(&CovarianceModel::Independent, &plan, &p).unwrap();
        assert_eq!(r.excess, 0.0);
        assert!((r.value - 100.0 * 100.0 * 99.0 * 1e-8).abs() < 1e-12);
        assert!((r.value - 9.9e-3).abs() < 1e-12);
        assert_eq!(r.truncation_bound, 0.0);
    }

    #[test]
    fn dprime_vanishes_at_high_levels() {
        let s = sq(16);
        let g = CovarianceModel::geometric(0.5).unwrap();
        let p = make_partition(s).unwrap();
        let mut last = f64::INFINITY;
        for v in [2.0, 4.0, 8.0, 16.0, 38.0] {
            let plan = LevelPlan::from_levels(TailFunction::Gaussian, s, v, v).unwrap();
            let d = dprime_sum(&g, &plan, &p).unwrap().value;
            assert!(d < last);
            last = d;
        }
        assert!(last < 1e-300);
    }

    #[test]
    fn dprime_counts_pairs_exactly() {
        // brute-force pair loop over one block
        let s = sq(12);
        let g = CovarianceModel::polynomial(0.6, 1.5).unwrap();
        let plan = LevelPlan::calibrated(TailFunction::Gaussian, s, 1.0, 2.0).unwrap();
        let p = make_partition(s).unwrap();
        let b = p.blocks[0];
        let mut sum = 0.0;
        for i in 0..b.cells() {
            for j in 0..b.cells() {
                if i != j {
                    let (a1, a2) = (i / p.b2, i % p.b2);
                    let (c1, c2) = (j / p.b2, j % p.b2);
                    let rho = g.covariance_at(a1 as i64 - c1 as i64, a2 as i64 - c2 as i64);
                    sum += bvn_quadrature(plan.v, plan.v, rho);
                }
            }
        }
        let want = (p.k1 * p.k2) as f64 * sum;
        let got = dprime_sum(&g, &plan, &p).unwrap().value;
        assert!((got - want).abs() < 1e-10 * want, "{got} {want}");
    }

    #[test]
    fn comparison_bound_examples() {
        let s = sq(32);
        let plan = LevelPlan::calibrated(TailFunction::Gaussian, s, 1.0, 1.0).unwrap();
        assert_eq!(comparison_bound(&CovarianceModel::Independent, &plan), 0.0);
        let half = comparison_bound(&CovarianceModel::geometric(0.5).unwrap(), &plan);
        let quarter = comparison_bound(&CovarianceModel::geometric(0.25).unwrap(), &plan);
        assert!(half > 0.0 && half.is_finite());
        assert!(quarter < half);

        let small = sq(4);
        let g = CovarianceModel::geometric(0.5).unwrap();
        let plan = LevelPlan::from_levels(TailFunction::Gaussian, small, 1.0, 1.0).unwrap();
        let mut brute = 0.0;
        for i in 0..16i64 {
            for j in 0..16i64 {
                if i != j {
                    let r = g.covariance_at(i / 4 - j / 4, i % 4 - j % 4);
                    brute += r * (-1.0 / (1.0 + r)).exp();
                }
            }
        }
        assert!((comparison_bound(&g, &plan) - brute).abs() < 1e-12 * brute);
    }

    #[test]
    fn comparison_bound_shrinks_with_size() {
        let g = CovarianceModel::geometric(0.5).unwrap();
        let vals: Vec<f64> = [16, 32, 64, 128]
            .iter()
            .map(|&n| comparison_bound(&g, &LevelPlan::calibrated(TailFunction::Gaussian, sq(n), 1.0, 1.0).unwrap()))
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
    }

    #[test]
    fn dstar_examples() {
        let plan = |n| LevelPlan::calibrated(TailFunction::Gaussian, sq(n), 1.0, 1.0).unwrap();
        let r = dstar_bound(&CovarianceModel::Independent, &plan(8), &plan(64), 0.1).unwrap();
        assert_eq!(r.value, 0.0);
        let g = CovarianceModel::geometric(0.3).unwrap();
        let r = dstar_bound(&g, &plan(8), &plan(64), 0.1).unwrap();
        assert!(r.value > 0.0 && r.below_benchmark, "{r:?}");
        let vals: Vec<f64> = [32, 64, 128].iter().map(|&n| dstar_bound(&g, &plan(8), &plan(n), 0.1).unwrap().value).collect();
        assert!(vals.windows(2).all(|w| w[1] <= w[0]));
        assert!(matches!(dstar_bound(&g, &plan(64), &plan(8), 0.1), Err(Error::InvalidNesting { .. })));
    }

    #[test]
    fn tail_comparability_examples() {
        assert_eq!(tail_comparability(&[0.01; 5], 10.0).unwrap().ratio, 1.0);
        assert!(matches!(tail_comparability(&[0.5, 1.0], 10.0), Err(Error::DegenerateTail(_))));
        assert!(tail_comparability(&[], 10.0).is_err());
        let u = 3.0;
        let r = tail_comparability(&[normal_sf(u), normal_sf(u + 3.0)], 10.0).unwrap();
        assert!(!r.pass && r.ratio > 1e3);
    }
}
