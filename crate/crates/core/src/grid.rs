//! Uniform periodic grid on `[-L, L)` and the Fourier transform pair used
//! throughout the crate.
//!
//! The transform convention is
//!
//! ```text
//! f̂(k) = ∫ f(x) e^{+2πikx} dx,      f(x) = ∫ f̂(k) e^{-2πikx} dk,
//! ```
//!
//! with `k` in cycles per unit length. Note the **plus** sign in the forward
//! exponent: it is the opposite of the usual FFT library convention, so the
//! forward transform here is built on rustfft's *inverse* plan (and vice
//! versa). A consequence is that `∂ₓ` acts on transforms as multiplication by
//! `-2πik`; see [`crate::spectral::SpectralSymbol::multiplier`].

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

pub type C64 = Complex64;

struct GridData {
    half_width: f64,
    n: usize,
    dx: f64,
    points: Vec<f64>,
    freqs: Vec<f64>,
    weights: Vec<f64>,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

/// Uniform truncation of ℝ to `[-L, L)` with `n` points.
///
/// Cheap to clone; grids compare equal when `L` and `n` match.
#[derive(Clone)]
pub struct Grid1D(Arc<GridData>);

impl Grid1D {
    /// Builds a grid. `n` must be even and at least 8, `L` finite and positive.
    pub fn new(half_width: f64, n: usize) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "half width must be finite and positive, got {half_width}"
            )));
        }
        if n < 8 || n % 2 != 0 {
            return Err(Error::InvalidGrid(format!(
                "point count must be even and at least 8, got {n}"
            )));
        }
        let dx = 2.0 * half_width / n as f64;
        let points = (0..n).map(|j| -half_width + j as f64 * dx).collect();
        let dk = 1.0 / (2.0 * half_width);
        let freqs = (0..n)
            .map(|m| {
                let signed = if m < n / 2 { m as isize } else { m as isize - n as isize };
                signed as f64 * dk
            })
            .collect();
        let mut planner = FftPlanner::new();
        // Forward transform carries e^{+2πi mj/n}: that is rustfft's inverse.
        let fwd = planner.plan_fft_inverse(n);
        let inv = planner.plan_fft_forward(n);
        Ok(Self(Arc::new(GridData {
            half_width,
            n,
            dx,
            points,
            freqs,
            weights: vec![dx; n],
            fwd,
            inv,
        })))
    }

    pub fn half_width(&self) -> f64 {
        self.0.half_width
    }

    pub fn n(&self) -> usize {
        self.0.n
    }

    pub fn dx(&self) -> f64 {
        self.0.dx
    }

    /// Frequency spacing `1/(2L)`.
    pub fn dk(&self) -> f64 {
        1.0 / (2.0 * self.0.half_width)
    }

    /// Sample points `xⱼ = -L + jΔx`.
    pub fn points(&self) -> &[f64] {
        &self.0.points
    }

    /// Frequencies in standard DFT layout (non-negative first, then negative).
    pub fn freqs(&self) -> &[f64] {
        &self.0.freqs
    }

    /// Quadrature weights (all equal to `Δx`).
    pub fn weights(&self) -> &[f64] {
        &self.0.weights
    }

    /// Index of the grid point `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.0.n / 2
    }

    /// Index of the grid point closest to `x` under periodic wrapping.
    pub fn nearest_index(&self, x: f64) -> usize {
        let l = self.0.half_width;
        let wrapped = (x + l).rem_euclid(2.0 * l);
        ((wrapped / self.0.dx).round() as usize) % self.0.n
    }

    /// Samples a closed-form function on the grid.
    pub fn sample<F: Fn(f64) -> f64>(&self, f: F) -> Vec<C64> {
        self.points().iter().map(|&x| C64::new(f(x), 0.0)).collect()
    }

    /// In-place forward transform of one column of samples.
    pub fn forward_in_place(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.0.n);
        self.0.fwd.process(buf);
        // (-1)^m phase from placing the first sample at -L.
        let dx = self.0.dx;
        for (m, v) in buf.iter_mut().enumerate() {
            *v *= if m % 2 == 0 { dx } else { -dx };
        }
    }

    /// In-place inverse transform of one column of transform values.
    pub fn inverse_in_place(&self, buf: &mut [C64]) {
        debug_assert_eq!(buf.len(), self.0.n);
        for (m, v) in buf.iter_mut().enumerate() {
            if m % 2 == 1 {
                *v = -*v;
            }
        }
        self.0.inv.process(buf);
        let dk = self.dk();
        for v in buf.iter_mut() {
            *v *= dk;
        }
    }

    /// Forward transform of every contiguous length-`n` column in `data`.
    pub fn forward_columns(&self, data: &mut [C64]) {
        data.par_chunks_mut(self.0.n)
            .for_each(|col| self.forward_in_place(col));
    }

    /// Inverse transform of every contiguous length-`n` column in `data`.
    pub fn inverse_columns(&self, data: &mut [C64]) {
        data.par_chunks_mut(self.0.n)
            .for_each(|col| self.inverse_in_place(col));
    }

    /// Discrete `L²` norm `(Σ|fⱼ|²Δx)^{1/2}`.
    pub fn l2_norm(&self, f: &[C64]) -> f64 {
        (f.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.0.dx).sqrt()
    }

    /// Sum of `|f|²Δx` over the outermost tenth of the domain on each side,
    /// relative to the total. Flags solutions that have reached the periodic
    /// boundary.
    pub fn boundary_mass(&self, f: &[C64]) -> f64 {
        let total: f64 = f.iter().map(|v| v.norm_sqr()).sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge = (self.0.n / 10).max(1);
        let outer: f64 = f[..edge]
            .iter()
            .chain(&f[self.0.n - edge..])
            .map(|v| v.norm_sqr())
            .sum();
        outer / total
    }
}

impl PartialEq for Grid1D {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0)
            || (self.0.n == other.0.n && self.0.half_width == other.0.half_width)
    }
}

impl fmt::Debug for Grid1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid1D")
            .field("half_width", &self.0.half_width)
            .field("n", &self.0.n)
            .finish()
    }
}

/// Samples of a one-argument function on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub grid: Grid1D,
    pub values: Vec<C64>,
}

impl Field1D {
    pub fn new(grid: Grid1D, values: Vec<C64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidInput(format!(
                "field has {} samples, grid has {}",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn<F: Fn(f64) -> f64>(grid: &Grid1D, f: F) -> Self {
        Self {
            values: grid.sample(f),
            grid: grid.clone(),
        }
    }

    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            values: vec![C64::new(0.0, 0.0); grid.n()],
            grid: grid.clone(),
        }
    }

    pub fn l2_norm(&self) -> f64 {
        self.grid.l2_norm(&self.values)
    }

    /// `‖self − other‖ / ‖other‖` in the discrete `L²` norm.
    pub fn relative_l2_error(&self, reference: &Field1D) -> f64 {
        let diff: Vec<C64> = self
            .values
            .iter()
            .zip(&reference.values)
            .map(|(a, b)| a - b)
            .collect();
        let denom = reference.l2_norm();
        let num = self.grid.l2_norm(&diff);
        if denom == 0.0 {
            num
        } else {
            num / denom
        }
    }

    pub fn map(&self, f: impl Fn(C64) -> C64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }
}

/// `∫f e^{+2πikx}dx` transform of a field, sampled at the grid frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum1D {
    pub grid: Grid1D,
    pub values: Vec<C64>,
}

impl Spectrum1D {
    pub fn zeros(grid: &Grid1D) -> Self {
        Self {
            values: vec![C64::new(0.0, 0.0); grid.n()],
            grid: grid.clone(),
        }
    }
}

/// `f̂(kⱼ) ≈ ∫_{-L}^{L} f(x) e^{2πikⱼx} dx` by the Δx-weighted DFT.
pub fn dft_forward(f: &Field1D) -> Spectrum1D {
    let mut values = f.values.clone();
    f.grid.forward_in_place(&mut values);
    Spectrum1D {
        grid: f.grid.clone(),
        values,
    }
}

/// Inverse of [`dft_forward`].
pub fn dft_inverse(s: &Spectrum1D) -> Field1D {
    let mut values = s.values.clone();
    s.grid.inverse_in_place(&mut values);
    Field1D {
        grid: s.grid.clone(),
        values,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn rejects_bad_grids() {
        assert!(Grid1D::new(1.0, 7).is_err());
        assert!(Grid1D::new(1.0, 6).is_err());
        assert!(Grid1D::new(0.0, 16).is_err());
        assert!(Grid1D::new(f64::NAN, 16).is_err());
    }

    #[test]
    fn weights_sum_to_domain_length() {
        let g = Grid1D::new(3.7, 96).unwrap();
        let s: f64 = g.weights().iter().sum();
        assert!((s - 7.4).abs() < 1e-13);
        assert_eq!(g.points().len(), 96);
        assert_eq!(g.freqs().len(), 96);
        assert_eq!(g.freqs()[0], 0.0);
        assert_eq!(g.points()[g.origin_index()], 0.0);
    }

    #[test]
    fn gaussian_is_its_own_transform() {
        let g = Grid1D::new(20.0, 512).unwrap();
        let f = Field1D::from_fn(&g, |x| (-PI * x * x).exp());
        let fh = dft_forward(&f);
        for (k, v) in g.freqs().iter().zip(&fh.values) {
            let exact = (-PI * k * k).exp();
            assert!((v - exact).norm() < 1e-10, "k={k} got {v} want {exact}");
        }
    }

    #[test]
    fn zero_maps_to_zero() {
        let g = Grid1D::new(2.0, 16).unwrap();
        let fh = dft_forward(&Field1D::zeros(&g));
        assert!(fh.values.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn sign_convention_shifted_gaussian() {
        // f(x) = e^{-π(x-a)²}  ⇒  f̂(k) = e^{2πika} e^{-πk²}
        let g = Grid1D::new(10.0, 256).unwrap();
        let a = 1.3;
        let f = Field1D::from_fn(&g, |x| (-PI * (x - a).powi(2)).exp());
        let fh = dft_forward(&f);
        for (k, v) in g.freqs().iter().zip(&fh.values) {
            let exact = C64::from_polar((-PI * k * k).exp(), 2.0 * PI * k * a);
            assert!((v - exact).norm() < 1e-10);
        }
    }

    #[test]
    fn nearest_index_wraps() {
        let g = Grid1D::new(1.0, 8).unwrap();
        assert_eq!(g.nearest_index(0.0), 4);
        assert_eq!(g.nearest_index(-1.0), 0);
        assert_eq!(g.nearest_index(1.0), 0);
        assert_eq!(g.nearest_index(0.74), 7);
    }
}
