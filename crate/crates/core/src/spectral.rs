//! Constant-coefficient spectral symbols, exponential propagators and the
//! `Î(k,t)` filter.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, C64};

/// Branch switch for [`phi_integral`]: below this `|z|` the Taylor series is used.
pub const PHI_SERIES_EPS: f64 = 1e-6;

/// Number of terms kept in the `(e^{zt}-1)/z` series.
pub const PHI_SERIES_TERMS: usize = 5;

/// Largest admissible `Re d(2πik)·t` before `e^{d t}` is treated as overflow.
pub const PROPAGATOR_EXPONENT_CAP: f64 = 700.0;

/// The polynomial `d(∂ₓ) = Σ cⱼ ∂ₓʲ` with real coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSymbol {
    coeffs: Vec<f64>,
}

/// Result of checking a symbol against a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    /// `max_k Re d(2πik)` over the grid frequencies.
    pub max_real_part: f64,
    /// Whether `Re d(2πik) ≤ c₀` on every grid frequency (diffusive or
    /// dispersive).
    pub admissible: bool,
}

impl SpectralSymbol {
    /// Coefficients `c₀, c₁, …` of `1, ∂ₓ, ∂ₓ², …`. Trailing zeros are trimmed.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput(
                "symbol coefficients must be finite".into(),
            ));
        }
        let mut coeffs = coeffs;
        while coeffs.last() == Some(&0.0) {
            coeffs.pop();
        }
        Ok(Self { coeffs })
    }

    /// `∂ₓ² + 1`, the operator of both worked FKPP examples.
    pub fn fkpp() -> Self {
        Self {
            coeffs: vec![1.0, 0.0, 1.0],
        }
    }

    /// `∂ₓ²`.
    pub fn heat() -> Self {
        Self {
            coeffs: vec![0.0, 0.0, 1.0],
        }
    }

    pub fn zero() -> Self {
        Self { coeffs: Vec::new() }
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn constant_term(&self) -> f64 {
        self.coeffs.first().copied().unwrap_or(0.0)
    }

    /// `d(2πik) = Σ cⱼ (2πik)ʲ`, Horner form.
    pub fn eval(&self, k: f64) -> C64 {
        let z = C64::new(0.0, 2.0 * PI * k);
        self.coeffs
            .iter()
            .rev()
            .fold(C64::new(0.0, 0.0), |acc, &c| acc * z + c)
    }

    /// Fourier multiplier of `d(∂ₓ)` under the `e^{+2πikx}` forward convention.
    ///
    /// Since `∂ₓ` maps to `-2πik` there, this is `d(-2πik)`; it coincides with
    /// `d(2πik)` whenever the symbol has only even-degree terms.
    pub fn multiplier(&self, k: f64) -> C64 {
        self.eval(-k)
    }

    pub fn admissibility(&self, grid: &Grid1D) -> Admissibility {
        let max_real_part = grid
            .freqs()
            .iter()
            .map(|&k| self.eval(k).re)
            .fold(f64::NEG_INFINITY, f64::max);
        let c0 = self.constant_term();
        Admissibility {
            max_real_part,
            admissible: max_real_part <= c0 + 1e-12 * c0.abs().max(1.0),
        }
    }

    /// Multipliers `d(-2πik)` for every grid frequency.
    pub fn multipliers(&self, grid: &Grid1D) -> Vec<C64> {
        grid.freqs().iter().map(|&k| self.multiplier(k)).collect()
    }
}

/// `d(2πik)`.
pub fn symbol_eval(d: &SpectralSymbol, k: f64) -> C64 {
    d.eval(k)
}

/// `e^{d(2πik)t}`, refusing exponents that would overflow.
pub fn propagator(d: &SpectralSymbol, k: f64, t: f64) -> Result<C64> {
    exp_guarded(d.eval(k), k, t)
}

/// `e^{zt}` for a precomputed symbol value `z` (reported against frequency `k`).
pub fn exp_guarded(z: C64, k: f64, t: f64) -> Result<C64> {
    if t < 0.0 || !t.is_finite() {
        return Err(Error::InvalidInput(format!(
            "propagation time must be finite and non-negative, got {t}"
        )));
    }
    let exponent = z.re * t;
    if exponent > PROPAGATOR_EXPONENT_CAP {
        return Err(Error::InadmissibleSymbol { k, exponent });
    }
    Ok((z * t).exp())
}

/// `Î(k,t) = (e^{d(2πik)t} − 1)/d(2πik)`, with the removable singularity at
/// `d = 0` handled by its Taylor series.
pub fn phi_integral(d: &SpectralSymbol, k: f64, t: f64) -> C64 {
    phi_of(d.eval(k), t)
}

/// `(e^{zt} − 1)/z` for a precomputed `z`.
pub fn phi_of(z: C64, t: f64) -> C64 {
    if z.norm() < PHI_SERIES_EPS && (z * t).norm() <= 1.0 {
        phi_series(z, t)
    } else {
        expm1(z * t) / z
    }
}

/// `t + zt²/2! + z²t³/3! + …` truncated at [`PHI_SERIES_TERMS`] terms.
pub fn phi_series(z: C64, t: f64) -> C64 {
    let mut term = C64::new(t, 0.0);
    let mut sum = term;
    for j in 1..PHI_SERIES_TERMS {
        term *= z * t / (j as f64 + 1.0);
        sum += term;
    }
    sum
}

/// `(e^{zt} − 1)/z` evaluated directly, without the series branch.
pub fn phi_ratio(z: C64, t: f64) -> C64 {
    expm1(z * t) / z
}

/// `e^w − 1` without cancellation for small `|w|`.
pub fn expm1(w: C64) -> C64 {
    let (s, c) = w.im.sin_cos();
    let half = (0.5 * w.im).sin();
    C64::new(
        w.re.exp_m1() * c - 2.0 * half * half,
        w.re.exp() * s,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: C64, b: C64, tol: f64) -> bool {
        (a - b).norm() <= tol * b.norm().max(1.0)
    }

    #[test]
    fn fkpp_symbol_values() {
        let d = SpectralSymbol::fkpp();
        for k in [0.0, 0.1, -0.7, 3.2] {
            let want = C64::new(1.0 - 4.0 * PI * PI * k * k, 0.0);
            assert!(close(symbol_eval(&d, k), want, 1e-14));
        }
        assert_eq!(symbol_eval(&SpectralSymbol::heat(), 0.0), C64::new(0.0, 0.0));
    }

    #[test]
    fn dispersive_symbol_is_imaginary() {
        let d = SpectralSymbol::new(vec![0.0, 0.0, 0.0, -1.0]).unwrap();
        let k = 0.37;
        let v = symbol_eval(&d, k);
        assert!(v.re.abs() < 1e-15);
        assert!((v.im - 8.0 * PI.powi(3) * k.powi(3)).abs() < 1e-12);
        assert!(d.admissibility(&Grid1D::new(5.0, 64).unwrap()).admissible);
    }

    #[test]
    fn admissibility_flags_anti_diffusion() {
        let grid = Grid1D::new(5.0, 64).unwrap();
        assert!(SpectralSymbol::fkpp().admissibility(&grid).admissible);
        let bad = SpectralSymbol::new(vec![0.0, 0.0, -1.0]).unwrap();
        assert!(!bad.admissibility(&grid).admissible);
        // ∂ₓ⁴ has the wrong sign for N = 2.
        let bad4 = SpectralSymbol::new(vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        assert!(!bad4.admissibility(&grid).admissible);
        let good4 = SpectralSymbol::new(vec![0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(good4.admissibility(&grid).admissible);
    }

    #[test]
    fn multiplier_differentiates_under_plus_convention() {
        // ∂ₓ e^{-2πikx} = -2πik e^{-2πikx}
        let dx = SpectralSymbol::new(vec![0.0, 1.0]).unwrap();
        let k = 0.25;
        assert!(close(dx.multiplier(k), C64::new(0.0, -2.0 * PI * k), 1e-15));
    }

    #[test]
    fn propagator_basics() {
        let d = SpectralSymbol::fkpp();
        assert_eq!(propagator(&d, 0.3, 0.0).unwrap(), C64::new(1.0, 0.0));
        assert!(close(propagator(&d, 0.0, 1.0).unwrap(), C64::new(1f64.exp(), 0.0), 1e-15));
        let h = SpectralSymbol::heat();
        let v = propagator(&h, 0.4, 0.3).unwrap();
        assert!(v.im == 0.0 && v.re <= 1.0);
        assert!((v.re - (-4.0 * PI * PI * 0.16 * 0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn propagator_overflow_guard() {
        let d = SpectralSymbol::new(vec![1.0]).unwrap();
        assert!(matches!(
            propagator(&d, 0.0, 701.0),
            Err(Error::InadmissibleSymbol { .. })
        ));
        assert!(propagator(&d, 0.0, -1.0).is_err());
    }

    #[test]
    fn phi_limits() {
        assert_eq!(phi_of(C64::new(0.0, 0.0), 2.5), C64::new(2.5, 0.0));
        let v = phi_integral(&SpectralSymbol::fkpp(), 0.0, 1.0);
        assert!(close(v, C64::new(1f64.exp() - 1.0, 0.0), 1e-15));
    }

    #[test]
    fn phi_branches_agree_at_switch() {
        for arg in [0.0, 0.3, 1.7, 3.1] {
            let z = C64::from_polar(PHI_SERIES_EPS, arg);
            for t in [0.1, 1.0, 10.0] {
                let a = phi_series(z, t);
                let b = phi_ratio(z, t);
                assert!((a - b).norm() <= 1e-12 * a.norm(), "arg {arg} t {t}");
            }
        }
    }

    #[test]
    fn phi_continuous_across_switch() {
        let mut max_jump: f64 = 0.0;
        for arg in (0..32).map(|i| i as f64 * PI / 16.0) {
            for t in [0.5, 2.0, 20.0] {
                let below = phi_of(C64::from_polar(PHI_SERIES_EPS * (1.0 - 1e-12), arg), t);
                let above = phi_of(C64::from_polar(PHI_SERIES_EPS * (1.0 + 1e-12), arg), t);
                max_jump = max_jump.max((above - below).norm());
            }
        }
        assert!(max_jump < 1e-11, "jump {max_jump}");
    }

    proptest! {
        #[test]
        fn propagator_semigroup(k in -3.0f64..3.0, s in 0.0f64..1.0, t in 0.0f64..1.0) {
            let d = SpectralSymbol::new(vec![0.5, 0.2, 1.0, 0.0, -0.01]).unwrap();
            let lhs = propagator(&d, k, s + t).unwrap();
            let rhs = propagator(&d, k, s).unwrap() * propagator(&d, k, t).unwrap();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * lhs.norm().max(1e-300) + 1e-300);
        }
    }
}
