//! Solutions of evolution equations with nonlocal quadratic nonlinearities,
//! generated from linear flows.
//!
//! Given a target equation
//!
//! ```text
//! ∂ₜg = c + d(∂ₓ)g − ∫ g(x,z)(a(z,y) + b(z) g(z,y)) dz,      g(·,·;0) = g₀,
//! ```
//!
//! the solution is obtained without ever integrating the nonlinear equation:
//! evolve the linear *base* equation for `p` and *auxiliary* equation for `q'`
//! from `p(0) = g₀`, `q'(0) = 0`, then solve the linear Fredholm equation
//! `p = g + g ⋆ q'` at the time of interest. The finite-dimensional version
//! (`G = P Q⁻¹` for a linear frame flow) lives in [`matrix_riccati`].
//!
//! Module map:
//! - [`grid`], [`spectral`]: periodic grid, Fourier pair, symbols, propagators
//! - [`kernel`]: Nyström kernels, `⋆`, `det₂`, the relation solve
//! - [`matrix_riccati`]: frame flow, projection and direct matrix Riccati ODE
//! - [`flow`]: base/auxiliary evolution (closed-form and time-stepped)
//! - [`models`]: convolution FKPP, correlation FKPP and Burgers presets
//! - [`oracle`]: direct nonlinear integrators used for cross-checking

pub mod error;
pub mod flow;
pub mod grid;
pub mod kernel;
pub mod linalg;
pub mod matrix_riccati;
pub mod models;
pub mod oracle;
pub mod spectral;

pub use error::{Error, Result};
pub use grid::{dft_forward, dft_inverse, Field1D, Grid1D, Spectrum1D, C64};
pub use kernel::{det2, fredholm_solve, hs_norm, inverse_kernel, star, IdentityPlus, Kernel2D};
pub use spectral::{phi_integral, propagator, symbol_eval, SpectralSymbol};
