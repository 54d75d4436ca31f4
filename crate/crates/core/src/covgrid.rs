//! Grid geometry, stationary correlation families and the covariance
//! decay checks for Gaussian fields on a rectangle `{1..n1} x {1..n2}`.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numeric::dot;

/// Largest grid handled by the dense covariance path unless overridden.
pub const DENSE_THRESHOLD: usize = 4096;

/// Rectangle of `n1` rows by `n2` columns. Values on the grid are stored
/// row-major; index `(i1, i2)` is zero-based here even though the
/// mathematical indexing starts at 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct GridShape {
    n1: usize,
    n2: usize,
}

impl GridShape {
    pub fn new(n1: usize, n2: usize) -> Result<Self> {
        if n1 == 0 || n2 == 0 {
            return Err(Error::DegenerateShape { n1, n2, reason: "dimensions must be positive" });
        }
        if n1.checked_mul(n2).is_none() {
            return Err(Error::DegenerateShape { n1, n2, reason: "cell count overflows" });
        }
        Ok(Self { n1, n2 })
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn n1(&self) -> usize {
        self.n1
    }

    pub fn n2(&self) -> usize {
        self.n2
    }

    /// N = n1 * n2.
    pub fn cells(&self) -> usize {
        self.n1 * self.n2
    }

    #[inline]
    pub fn index(&self, i1: usize, i2: usize) -> usize {
        debug_assert!(i1 < self.n1 && i2 < self.n2);
        i1 * self.n2 + i2
    }

    /// Inverse of [`GridShape::index`].
    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx / self.n2, idx % self.n2)
    }

    pub fn min_dim(&self) -> usize {
        self.n1.min(self.n2)
    }

    pub(crate) fn require_min(&self, min: usize) -> Result<()> {
        if self.n1 < min || self.n2 < min {
            return Err(Error::DegenerateShape {
                n1: self.n1,
                n2: self.n2,
                reason: match min {
                    3 => "both dimensions must be at least 3",
                    9 => "both dimensions must be at least 9",
                    _ => "dimensions too small",
                },
            });
        }
        Ok(())
    }
}

impl fmt::Display for GridShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n1, self.n2)
    }
}

impl FromStr for GridShape {
    type Err = Error;

    /// Parses `"32x64"` (or a single `"32"` for a square grid).
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidValue { key: "shape".into(), message: format!("cannot parse `{s}` as N1xN2") };
        let s = s.trim();
        let (a, b) = match s.split_once(['x', 'X']) {
            Some((a, b)) => (a.trim(), b.trim()),
            None => (s, s),
        };
        let n1 = a.parse::<usize>().map_err(|_| bad())?;
        let n2 = b.parse::<usize>().map_err(|_| bad())?;
        GridShape::new(n1, n2)
    }
}

/// Stationary, isotropic-in-sign correlation families.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum CovarianceModel {
    Independent,
    /// r(j) = θ^(|j1| + |j2|), θ in [0, 1).
    Geometric { theta: f64 },
    /// r(j) = C (1 + j1² + j2²)^(−α/2) off the origin, C in (0, 1), α > 0.
    Polynomial { c: f64, alpha: f64 },
}

impl CovarianceModel {
    pub fn geometric(theta: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&theta) {
            return Err(Error::InvalidParameter { name: "theta", value: theta, reason: "must lie in [0, 1)" });
        }
        Ok(CovarianceModel::Geometric { theta })
    }

    pub fn polynomial(c: f64, alpha: f64) -> Result<Self> {
        if !(c > 0.0 && c < 1.0) {
            return Err(Error::InvalidParameter { name: "c", value: c, reason: "must lie in (0, 1)" });
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidParameter { name: "alpha", value: alpha, reason: "must be positive" });
        }
        Ok(CovarianceModel::Polynomial { c, alpha })
    }

    /// Config tag: `independent`, `geometric` or `polynomial`.
    pub fn tag(&self) -> &'static str {
        match self {
            CovarianceModel::Independent => "independent",
            CovarianceModel::Geometric { .. } => "geometric",
            CovarianceModel::Polynomial { .. } => "polynomial",
        }
    }

    /// Parameter string for result rows, e.g. `theta=0.5`.
    pub fn params(&self) -> String {
        match self {
            CovarianceModel::Independent => String::new(),
            CovarianceModel::Geometric { theta } => format!("theta={theta}"),
            CovarianceModel::Polynomial { c, alpha } => format!("c={c};alpha={alpha}"),
        }
    }

    /// Correlation at lag `(j1, j2)`.
    #[inline]
    pub fn covariance_at(&self, j1: i64, j2: i64) -> f64 {
        if j1 == 0 && j2 == 0 {
            return 1.0;
        }
        let (a1, a2) = (j1.unsigned_abs(), j2.unsigned_abs());
        match *self {
            CovarianceModel::Independent => 0.0,
            CovarianceModel::Geometric { theta } => theta.powi((a1 + a2).min(i32::MAX as u64) as i32),
            CovarianceModel::Polynomial { c, alpha } => {
                let (x1, x2) = (a1 as f64, a2 as f64);
                c * (1.0 + x1 * x1 + x2 * x2).powf(-0.5 * alpha)
            }
        }
    }

    /// sup_{j != 0} |r(j)|; attained at a unit lag for both decaying families.
    pub fn rho_bound(&self) -> f64 {
        self.covariance_at(1, 0).abs()
    }

    pub fn is_independent(&self) -> bool {
        match *self {
            CovarianceModel::Independent => true,
            CovarianceModel::Geometric { theta } => theta == 0.0,
            CovarianceModel::Polynomial { .. } => false,
        }
    }
}

/// Dense N x N covariance matrix of a field on a grid, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Cholesky factorization; succeeding is the positive definiteness
    /// witness for the model on this grid.
    pub fn cholesky(&self) -> Result<CholeskyFactor> {
        let n = self.n;
        let mut packed = vec![0.0; n * (n + 1) / 2];
        let offset = |i: usize| i * (i + 1) / 2;
        for i in 0..n {
            let oi = offset(i);
            for j in 0..=i {
                let oj = offset(j);
                let s = self.get(i, j) - dot(&packed[oi..oi + j], &packed[oj..oj + j]);
                if i == j {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { pivot: i, value: s });
                    }
                    packed[oi + i] = s.sqrt();
                } else {
                    packed[oi + j] = s / packed[oj + j];
                }
            }
        }
        Ok(CholeskyFactor { n, packed })
    }
}

/// Lower-triangular factor L with Σ = L Lᵀ, rows packed contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct CholeskyFactor {
    n: usize,
    packed: Vec<f64>,
}

impl CholeskyFactor {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let o = i * (i + 1) / 2;
        &self.packed[o..o + i + 1]
    }

    /// out = L z.
    pub fn mul_vec(&self, z: &[f64], out: &mut [f64]) {
        assert_eq!(z.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), &z[..=i]);
        }
    }
}

/// Dense covariance matrix of `model` on `shape`, refusing grids above `threshold` cells.
pub fn build_covariance_matrix(model: &CovarianceModel, shape: GridShape, threshold: usize) -> Result<CovarianceMatrix> {
    let n = shape.cells();
    if n > threshold {
        return Err(Error::ThresholdExceeded { cells: n, threshold });
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let (a1, a2) = shape.coords(i);
        data[i * n + i] = 1.0;
        for j in 0..i {
            let (b1, b2) = shape.coords(j);
            let r = model.covariance_at(a1 as i64 - b1 as i64, a2 as i64 - b2 as i64);
            data[i * n + j] = r;
            data[j * n + i] = r;
        }
    }
    Ok(CovarianceMatrix { n, data })
}

/// Decay quantities for one shape.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BermanRow {
    pub shape: GridShape,
    /// ρ_(n1,0) log n1
    pub row: f64,
    /// ρ_(0,n2) log n2
    pub col: f64,
    /// ρ_n log(n1 n2)
    pub joint: f64,
    /// row quantity against (log log n1)^−(1+ε)
    pub row_ratio: f64,
    pub col_ratio: f64,
    /// joint quantity against (log log n1 · log log n2)^−(1+ε)
    pub joint_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BermanReport {
    pub epsilon: f64,
    pub rows: Vec<BermanRow>,
    /// Every quantity is nonincreasing along the shape list and ends below
    /// where it started (or is identically zero).
    pub pass: bool,
}

/// Evaluate the covariance decay conditions along an increasing list of shapes.
pub fn berman_check(model: &CovarianceModel, shapes: &[GridShape], epsilon: f64) -> Result<BermanReport> {
    if shapes.is_empty() {
        return Err(Error::InvalidValue { key: "shapes".into(), message: "need at least one shape".into() });
    }
    let mut rows = Vec::with_capacity(shapes.len());
    for &shape in shapes {
        shape.require_min(3)?;
        let (n1, n2) = (shape.n1() as f64, shape.n2() as f64);
        let row = model.covariance_at(shape.n1() as i64, 0).abs() * n1.ln();
        let col = model.covariance_at(0, shape.n2() as i64).abs() * n2.ln();
        let joint = model.covariance_at(shape.n1() as i64, shape.n2() as i64).abs() * (n1 * n2).ln();
        let (ll1, ll2) = (n1.ln().ln(), n2.ln().ln());
        let p = 1.0 + epsilon;
        rows.push(BermanRow {
            shape,
            row,
            col,
            joint,
            row_ratio: row * ll1.powf(p),
            col_ratio: col * ll2.powf(p),
            joint_ratio: joint * (ll1 * ll2).powf(p),
        });
    }
    let series: [fn(&BermanRow) -> f64; 6] =
        [|r| r.row, |r| r.col, |r| r.joint, |r| r.row_ratio, |r| r.col_ratio, |r| r.joint_ratio];
    let pass = series.iter().all(|get| {
        let vals: Vec<f64> = rows.iter().map(get).collect();
        let nonincreasing = vals.windows(2).all(|w| w[1] <= w[0]);
        let all_zero = vals.iter().all(|&v| v == 0.0);
        nonincreasing && (all_zero || vals.len() == 1 || vals[vals.len() - 1] < vals[0])
    });
    Ok(BermanReport { epsilon, rows, pass })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_validation() {
        assert!(GridShape::new(0, 3).is_err());
        assert!(GridShape::new(usize::MAX, 2).is_err());
        let s: GridShape = "32x16".parse().unwrap();
        assert_eq!((s.n1(), s.n2(), s.cells()), (32, 16, 512));
        assert_eq!("7".parse::<GridShape>().unwrap(), GridShape::new(7, 7).unwrap());
        assert!("3by4".parse::<GridShape>().is_err());
        assert_eq!(s.coords(s.index(5, 9)), (5, 9));
    }

    #[test]
    fn covariance_examples() {
        let g = CovarianceModel::geometric(0.5).unwrap();
        assert_eq!(g.covariance_at(0, 0), 1.0);
        assert_eq!(g.covariance_at(1, 1), 0.25);
        let p = CovarianceModel::polynomial(0.9, 2.0).unwrap();
        assert!((p.covariance_at(1, 0) - 0.45).abs() < 1e-15);
        assert_eq!(CovarianceModel::Independent.covariance_at(3, -2), 0.0);
    }

    #[test]
    fn parameter_validation() {
        assert!(CovarianceModel::geometric(1.0).is_err());
        assert!(CovarianceModel::geometric(-0.1).is_err());
        assert!(CovarianceModel::polynomial(1.0, 1.0).is_err());
        assert!(CovarianceModel::polynomial(0.5, 0.0).is_err());
    }

    #[test]
    fn rho_bound_below_one() {
        assert_eq!(CovarianceModel::Independent.rho_bound(), 0.0);
        assert_eq!(CovarianceModel::geometric(0.7).unwrap().rho_bound(), 0.7);
        let p = CovarianceModel::polynomial(0.9, 1.0).unwrap();
        assert!((p.rho_bound() - 0.9 / 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn small_matrices() {
        let ind = build_covariance_matrix(&CovarianceModel::Independent, GridShape::new(2, 1).unwrap(), 4096).unwrap();
        assert_eq!(ind.data, vec![1.0, 0.0, 0.0, 1.0]);
        let g = CovarianceModel::geometric(0.5).unwrap();
        let m = build_covariance_matrix(&g, GridShape::new(1, 2).unwrap(), 4096).unwrap();
        assert_eq!(m.data, vec![1.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn two_by_two_geometric_matrix_by_lag_enumeration() {
        // Points (0,0),(0,1),(1,0),(1,1): lags by hand.
        let g = CovarianceModel::geometric(0.5).unwrap();
        let m = build_covariance_matrix(&g, GridShape::new(2, 2).unwrap(), 4096).unwrap();
        let expected = [
            [1.0, 0.5, 0.5, 0.25],
            [0.5, 1.0, 0.25, 0.5],
            [0.5, 0.25, 1.0, 0.5],
            [0.25, 0.5, 0.5, 1.0],
        ];
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(m.get(i, j), expected[i][j], "({i},{j})");
            }
        }
    }

    #[test]
    fn threshold_is_enforced() {
        let err = build_covariance_matrix(&CovarianceModel::Independent, GridShape::new(65, 64).unwrap(), 4096);
        assert!(matches!(err, Err(Error::ThresholdExceeded { cells: 4160, threshold: 4096 })));
    }

    #[test]
    fn cholesky_reconstructs() {
        let g = CovarianceModel::geometric(0.6).unwrap();
        let m = build_covariance_matrix(&g, GridShape::new(3, 4).unwrap(), 4096).unwrap();
        let l = m.cholesky().unwrap();
        for i in 0..12 {
            for j in 0..=i {
                let s = dot(&l.row(i)[..=j], l.row(j));
                assert!((s - m.get(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let m = CovarianceMatrix { n: 2, data: vec![1.0, 2.0, 2.0, 1.0] };
        assert!(matches!(m.cholesky(), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn berman_examples() {
        let shapes: Vec<GridShape> = [10, 100, 1000].iter().map(|&n| GridShape::square(n).unwrap()).collect();
        let ind = berman_check(&CovarianceModel::Independent, &shapes, 0.1).unwrap();
        assert!(ind.pass);
        assert!(ind.rows.iter().all(|r| r.row == 0.0 && r.joint_ratio == 0.0));

        let g = CovarianceModel::geometric(0.5).unwrap();
        let r = berman_check(&g, &[GridShape::square(100).unwrap()], 0.1).unwrap();
        let expected = 0.5f64.powi(100) * 100f64.ln();
        assert!((r.rows[0].row - expected).abs() <= 1e-12 * expected);
        assert!((r.rows[0].row - 3.6328e-30).abs() < 1e-34);
        assert!(berman_check(&g, &shapes, 0.1).unwrap().pass);

        let slow = CovarianceModel::polynomial(0.9, 1e-4).unwrap();
        let big = [GridShape::square(10).unwrap(), GridShape::square(1_000_000).unwrap()];
        assert!(!berman_check(&slow, &big, 0.1).unwrap().pass);
    }

    #[test]
    fn berman_rejects_small_shapes() {
        let e = berman_check(&CovarianceModel::Independent, &[GridShape::new(2, 5).unwrap()], 0.1);
        assert!(matches!(e, Err(Error::DegenerateShape { .. })));
        assert!(berman_check(&CovarianceModel::Independent, &[], 0.1).is_err());
    }
}
