//! Scalar numerics shared across the crate: the standard normal law,
//! bracketed root search, adaptive Gauss–Kronrod quadrature and
//! compensated summation.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// Upper tail 1 − Φ(u), evaluated through erfc so it stays accurate for large u.
#[inline]
pub fn normal_sf(u: f64) -> f64 {
    0.5 * libm::erfc(u * FRAC_1_SQRT_2)
}

/// Φ(u).
#[inline]
pub fn normal_cdf(u: f64) -> f64 {
    0.5 * libm::erfc(-u * FRAC_1_SQRT_2)
}

#[inline]
pub fn normal_pdf(u: f64) -> f64 {
    (-0.5 * u * u).exp() / (2.0 * PI).sqrt()
}

/// Result of a bracketed root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bracketed {
    pub x: f64,
    pub fx: f64,
    /// False when `f` did not change sign on the bracket; `x` is then the
    /// endpoint with the smaller residual.
    pub converged: bool,
}

/// Bisection on `[lo, hi]` down to adjacent floating point numbers.
///
/// Stops early once `|f(x)| <= abs_tol`. The returned point is whichever
/// evaluated abscissa had the smallest residual.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, abs_tol: f64) -> Bracketed {
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut fa = f(a);
    let fb = f(b);
    let mut best = if fa.abs() <= fb.abs() {
        Bracketed { x: a, fx: fa, converged: true }
    } else {
        Bracketed { x: b, fx: fb, converged: true }
    };
    if fa == 0.0 || fb == 0.0 || best.fx.abs() <= abs_tol {
        return best;
    }
    if fa.signum() == fb.signum() {
        best.converged = false;
        return best;
    }
    for _ in 0..2100 {
        let mid = a + 0.5 * (b - a);
        if mid <= a || mid >= b {
            break;
        }
        let fm = f(mid);
        if fm.abs() < best.fx.abs() {
            best = Bracketed { x: mid, fx: fm, converged: true };
        }
        if fm == 0.0 || fm.abs() <= abs_tol {
            break;
        }
        if fm.signum() == fa.signum() {
            a = mid;
            fa = fm;
        } else {
            b = mid;
        }
    }
    best
}

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = half * XGK[j];
        let s = f(center - dx) + f(center + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * half, ((kronrod - gauss) * half).abs())
}

/// Adaptive Gauss–Kronrod (7/15) quadrature of `f` over a finite interval.
///
/// Intervals are bisected until the Kronrod/Gauss discrepancy of each piece
/// falls below its share of `abs_tol`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64) -> f64 {
    fn recurse<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
        let (value, err) = gk15(f, a, b);
        if err <= tol || depth >= 60 || (b - a).abs() < 1e-300 {
            return value;
        }
        let mid = 0.5 * (a + b);
        recurse(f, a, mid, 0.5 * tol, depth + 1) + recurse(f, mid, b, 0.5 * tol, depth + 1)
    }
    if a == b {
        return 0.0;
    }
    recurse(&mut f, a, b, abs_tol, 0)
}

/// Neumaier-compensated running sum; order of `add` calls still matters,
/// so callers fold in a fixed order.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl std::iter::FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Harmonic number H(n) = Σ_{k=1}^n 1/k.
pub fn harmonic(n: usize) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).collect::<CompensatedSum>().value()
}

/// Dot product with four independent accumulators so the loop vectorizes.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let i = 4 * c;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = 0.0;
    for i in 4 * chunks..n {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_tail_symmetry_and_known_values() {
        assert_eq!(normal_sf(0.0), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054) - 0.975).abs() < 1e-15);
        for &u in &[-3.0, -1.0, 0.5, 2.0, 7.5] {
            assert!((normal_sf(u) + normal_cdf(u) - 1.0).abs() < 1e-15);
            assert_eq!(normal_sf(u), normal_cdf(-u));
        }
    }

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 0.0);
        assert!(r.converged);
        assert!((r.x - std::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn bisect_flags_missing_sign_change() {
        let r = bisect(|x| x * x + 1.0, -1.0, 2.0, 0.0);
        assert!(!r.converged);
        assert_eq!(r.x, -1.0);
    }

    #[test]
    fn bisect_returns_exact_endpoint_root() {
        let r = bisect(|x| x - 0.25, 0.25, 1.0, 0.0);
        assert_eq!(r.x, 0.25);
        assert!(r.converged);
    }

    #[test]
    fn quadrature_polynomial_and_gaussian() {
        let v = integrate(|x| x * x * x - x, 0.0, 2.0, 1e-13);
        assert!((v - 2.0).abs() < 1e-13);
        let g = integrate(normal_pdf, -12.0, 12.0, 1e-14);
        assert!((g - 1.0).abs() < 1e-13);
        let s = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, 1e-10);
        assert!((s - 2.0).abs() < 1e-8);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn harmonic_numbers() {
        assert_eq!(harmonic(1), 1.0);
        assert!((harmonic(2) - 1.5).abs() < 1e-16);
        assert!((harmonic(4) - 25.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn dot_matches_naive() {
        let a: Vec<f64> = (0..13).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..13).map(|i| 1.0 - i as f64).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }
}
