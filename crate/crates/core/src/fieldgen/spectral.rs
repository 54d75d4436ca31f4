//! Circulant embedding of a stationary covariance on a doubled torus,
//! sampled through a 2D FFT.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::covgrid::{CovarianceModel, GridShape};
use crate::error::{Error, Result};

/// Negative eigenvalue mass, relative to total absolute mass, that is
/// clipped to zero. Anything above fails construction.
pub const NEGATIVE_MASS_TOL: f64 = 1e-8;

/// Torus sizes tried in order, as multiples of the grid dimensions.
const PADDINGS: [usize; 3] = [2, 4, 8];

#[derive(Clone)]
pub struct SpectralSampler {
    shape: GridShape,
    m1: usize,
    m2: usize,
    /// √(λ_k / M) on the torus frequency grid, row-major m1 x m2.
    scale: Vec<f64>,
    row_fft: Arc<dyn Fft<f64>>,
    col_fft: Arc<dyn Fft<f64>>,
    clipped_mass: f64,
}

impl std::fmt::Debug for SpectralSampler {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralSampler")
            .field("shape", &self.shape)
            .field("torus", &(self.m1, self.m2))
            .field("clipped_mass", &self.clipped_mass)
            .finish()
    }
}

fn fft2(buf: &mut [Complex64], m1: usize, m2: usize, row: &dyn Fft<f64>, col: &dyn Fft<f64>) {
    row.process(buf);
    let mut t = vec![Complex64::new(0.0, 0.0); m1 * m2];
    for i in 0..m1 {
        for j in 0..m2 {
            t[j * m1 + i] = buf[i * m2 + j];
        }
    }
    col.process(&mut t);
    for j in 0..m2 {
        for i in 0..m1 {
            buf[i * m2 + j] = t[j * m1 + i];
        }
    }
}

impl SpectralSampler {
    pub fn new(model: &CovarianceModel, shape: GridShape) -> Result<Self> {
        let mut worst = 0.0;
        for pad in PADDINGS {
            match Self::with_padding(model, shape, pad) {
                Ok(s) => return Ok(s),
                Err(Error::EmbeddingNotPsd { relative_mass }) => worst = relative_mass,
                Err(e) => return Err(e),
            }
        }
        Err(Error::EmbeddingNotPsd { relative_mass: worst })
    }

    fn with_padding(model: &CovarianceModel, shape: GridShape, pad: usize) -> Result<Self> {
        let (m1, m2) = (pad * shape.n1(), pad * shape.n2());
        let mut planner = FftPlanner::<f64>::new();
        let row_fft = planner.plan_fft_forward(m2);
        let col_fft = planner.plan_fft_forward(m1);

        let mut base = vec![Complex64::new(0.0, 0.0); m1 * m2];
        for a in 0..m1 {
            let l1 = a.min(m1 - a) as i64;
            for b in 0..m2 {
                let l2 = b.min(m2 - b) as i64;
                base[a * m2 + b] = Complex64::new(model.covariance_at(l1, l2), 0.0);
            }
        }
        fft2(&mut base, m1, m2, row_fft.as_ref(), col_fft.as_ref());

        let total: f64 = base.iter().map(|z| z.re.abs()).sum();
        let negative: f64 = base.iter().map(|z| (-z.re).max(0.0)).sum();
        let relative_mass = negative / total;
        if relative_mass > NEGATIVE_MASS_TOL {
            return Err(Error::EmbeddingNotPsd { relative_mass });
        }
        let m = (m1 * m2) as f64;
        let scale = base.iter().map(|z| (z.re.max(0.0) / m).sqrt()).collect();
        Ok(SpectralSampler { shape, m1, m2, scale, row_fft, col_fft, clipped_mass: relative_mass })
    }

    pub fn torus(&self) -> (usize, usize) {
        (self.m1, self.m2)
    }

    /// Relative negative spectral mass that was clipped.
    pub fn clipped_mass(&self) -> f64 {
        self.clipped_mass
    }

    pub fn fill<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        assert_eq!(out.len(), self.shape.cells());
        let mut buf: Vec<Complex64> = self
            .scale
            .iter()
            .map(|&s| {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                Complex64::new(s * re, s * im)
            })
            .collect();
        fft2(&mut buf, self.m1, self.m2, self.row_fft.as_ref(), self.col_fft.as_ref());
        let n2 = self.shape.n2();
        for (i1, row) in out.chunks_exact_mut(n2).enumerate() {
            for (i2, o) in row.iter_mut().enumerate() {
                *o = buf[i1 * self.m2 + i2].re;
            }
        }
    }
}
