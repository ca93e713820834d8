//! Direct time integration of the nonlinear equations, for cross-checking.
//!
//! Nothing here calls into the flow or model code; only the grid transform
//! and symbol evaluation are shared.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Field1D, Grid1D, C64};
use crate::kernel::Kernel2D;
use crate::spectral::SpectralSymbol;

/// Norm growth relative to the initial data that aborts an oracle run.
pub const ORACLE_GROWTH_CAP: f64 = 1e8;

/// Largest `dt·max|λ|` accepted for explicit RK4 on a stencil operator.
pub const STENCIL_RK4_LIMIT: f64 = 2.5;

/// Accuracy order of the central-difference stencils.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StencilOrder {
    Second,
    Fourth,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvScheme {
    /// Method of lines: central differences for `d(∂ₓ)`, spectral convolution,
    /// classical RK4.
    Stencil(StencilOrder),
    /// Per-mode `∂ₜĝ = d ĝ − ĝ²` with integrating-factor RK4.
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvOracleOptions {
    pub scheme: ConvScheme,
    /// Drop the quadratic term.
    pub linear_only: bool,
}

impl Default for ConvOracleOptions {
    fn default() -> Self {
        Self {
            scheme: ConvScheme::Stencil(StencilOrder::Fourth),
            linear_only: false,
        }
    }
}

fn step_schedule(t: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::InvalidInput(format!("t must be non-negative, got {t}")));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if t == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((t / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t / steps as f64))
}

fn norm2(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn guard(t: f64, v: &[C64], norm0: f64) -> Result<()> {
    let growth = norm2(v) / norm0.max(f64::MIN_POSITIVE);
    if !growth.is_finite() || growth > ORACLE_GROWTH_CAP {
        return Err(Error::Instability { t, growth });
    }
    Ok(())
}

fn axpy(y: &[C64], a: f64, x: &[C64]) -> Vec<C64> {
    y.iter().zip(x).map(|(y, x)| y + x * a).collect()
}

fn scale_modes(v: &[C64], f: &[C64]) -> Vec<C64> {
    let n = f.len();
    v.iter().enumerate().map(|(i, x)| x * f[i % n]).collect()
}

/// Integrating-factor RK4 for `u' = Λu + N(t, u)` where `u` stacks columns of
/// length `lin.len()` and `Λ` is diagonal with entry `lin[i mod n]`.
fn lawson_rk4<F>(u0: Vec<C64>, lin: &[C64], t: f64, dt: f64, rhs: F) -> Result<Vec<C64>>
where
    F: Fn(f64, &[C64]) -> Vec<C64>,
{
    let (steps, h) = step_schedule(t, dt)?;
    let e_half: Vec<C64> = lin.iter().map(|z| (z * (0.5 * h)).exp()).collect();
    let e_full: Vec<C64> = lin.iter().map(|z| (z * h).exp()).collect();
    let norm0 = norm2(&u0);
    let mut u = u0;
    for s in 0..steps {
        let t0 = s as f64 * h;
        let k1 = rhs(t0, &u);
        let ua = scale_modes(&axpy(&u, 0.5 * h, &k1), &e_half);
        let k2 = rhs(t0 + 0.5 * h, &ua);
        let u_half = scale_modes(&u, &e_half);
        let ub = axpy(&u_half, 0.5 * h, &k2);
        let k3 = rhs(t0 + 0.5 * h, &ub);
        let uc = axpy(&scale_modes(&u, &e_full), h, &scale_modes(&k3, &e_half));
        let k4 = rhs(t0 + h, &uc);
        let k23: Vec<C64> = k2.iter().zip(&k3).map(|(a, b)| a + b).collect();
        let e1 = scale_modes(&k1, &e_full);
        let e23 = scale_modes(&k23, &e_half);
        let ef = scale_modes(&u, &e_full);
        u = (0..u.len())
            .map(|i| ef[i] + (e1[i] + e23[i] * 2.0 + k4[i]) * (h / 6.0))
            .collect();
        guard(t0 + h, &u, norm0)?;
    }
    Ok(u)
}

/// Classical RK4 for `u' = F(u)`.
fn rk4<F>(u0: Vec<C64>, t: f64, dt: f64, rhs: F) -> Result<Vec<C64>>
where
    F: Fn(&[C64]) -> Vec<C64>,
{
    let (steps, h) = step_schedule(t, dt)?;
    let norm0 = norm2(&u0);
    let mut u = u0;
    for s in 0..steps {
        let k1 = rhs(&u);
        let k2 = rhs(&axpy(&u, 0.5 * h, &k1));
        let k3 = rhs(&axpy(&u, 0.5 * h, &k2));
        let k4 = rhs(&axpy(&u, h, &k3));
        for i in 0..u.len() {
            u[i] += (k1[i] + (k2[i] + k3[i]) * 2.0 + k4[i]) * (h / 6.0);
        }
        guard((s + 1) as f64 * h, &u, norm0)?;
    }
    Ok(u)
}

/// Central-difference weights of `∂ₓʲ` by offset `-3..=3`, before the `Δx⁻ʲ` scaling.
fn derivative_stencil(order: usize, acc: StencilOrder) -> Option<[f64; 7]> {
    use StencilOrder::*;
    Some(match (order, acc) {
        (0, _) => [0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0],
        (1, Second) => [0.0, 0.0, -0.5, 0.0, 0.5, 0.0, 0.0],
        (2, Second) => [0.0, 0.0, 1.0, -2.0, 1.0, 0.0, 0.0],
        (3, Second) => [0.0, -0.5, 1.0, 0.0, -1.0, 0.5, 0.0],
        (4, Second) => [0.0, 1.0, -4.0, 6.0, -4.0, 1.0, 0.0],
        (1, Fourth) => [0.0, 1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0, 0.0],
        (2, Fourth) => [0.0, -1.0 / 12.0, 4.0 / 3.0, -2.5, 4.0 / 3.0, -1.0 / 12.0, 0.0],
        (3, Fourth) => [0.125, -1.0, 1.625, 0.0, -1.625, 1.0, -0.125],
        (4, Fourth) => [-1.0 / 6.0, 2.0, -6.5, 28.0 / 3.0, -6.5, 2.0, -1.0 / 6.0],
        _ => return None,
    })
}

/// Periodic stencil of `d(∂ₓ)`: weights for offsets `-3..=3`.
pub fn symbol_stencil(d: &SpectralSymbol, dx: f64, acc: StencilOrder) -> Result<[f64; 7]> {
    let mut out = [0.0; 7];
    for (j, &c) in d.coeffs().iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        let w = derivative_stencil(j, acc).ok_or_else(|| {
            Error::Unsupported(format!("stencil oracle supports derivatives up to order 4, got {j}"))
        })?;
        let s = c / dx.powi(j as i32);
        for (o, wo) in out.iter_mut().zip(w) {
            *o += s * wo;
        }
    }
    Ok(out)
}

/// Largest eigenvalue magnitude of the periodic stencil on an `n`-point grid.
pub fn stencil_spectral_radius(stencil: &[f64; 7], n: usize) -> f64 {
    (0..n)
        .map(|m| {
            let theta = 2.0 * std::f64::consts::PI * m as f64 / n as f64;
            stencil
                .iter()
                .enumerate()
                .map(|(i, &s)| C64::from_polar(s, (i as f64 - 3.0) * theta))
                .sum::<C64>()
                .norm()
        })
        .fold(0.0, f64::max)
}

fn apply_stencil(stencil: &[f64; 7], u: &[C64]) -> Vec<C64> {
    let n = u.len();
    (0..n)
        .map(|i| {
            stencil
                .iter()
                .enumerate()
                .filter(|(_, s)| **s != 0.0)
                .map(|(o, &s)| u[(i + n + o - 3) % n] * s)
                .sum()
        })
        .collect()
}

fn forward(grid: &Grid1D, u: &[C64]) -> Vec<C64> {
    let mut v = u.to_vec();
    grid.forward_in_place(&mut v);
    v
}

fn inverse(grid: &Grid1D, u: &[C64]) -> Vec<C64> {
    let mut v = u.to_vec();
    grid.inverse_in_place(&mut v);
    v
}

/// Integrates `∂ₜg = d(∂ₓ)g − g ∗ g` (periodic convolution) to time `t`.
pub fn direct_conv(
    d: &SpectralSymbol,
    g0: &Field1D,
    t: f64,
    dt: f64,
    opts: ConvOracleOptions,
) -> Result<Field1D> {
    let grid = &g0.grid;
    let values = match opts.scheme {
        ConvScheme::Stencil(acc) => {
            let stencil = symbol_stencil(d, grid.dx(), acc)?;
            let rho = stencil_spectral_radius(&stencil, grid.n());
            if dt * rho > STENCIL_RK4_LIMIT {
                return Err(Error::InvalidInput(format!(
                    "dt = {dt} exceeds the explicit RK4 limit {:.3e} for this stencil",
                    STENCIL_RK4_LIMIT / rho
                )));
            }
            rk4(g0.values.clone(), t, dt, |u| {
                let mut out = apply_stencil(&stencil, u);
                if !opts.linear_only {
                    let gh = forward(grid, u);
                    let sq: Vec<C64> = gh.iter().map(|v| v * v).collect();
                    for (o, c) in out.iter_mut().zip(inverse(grid, &sq)) {
                        *o -= c;
                    }
                }
                out
            })?
        }
        ConvScheme::Spectral => {
            let lin = d.multipliers(grid);
            let gh = lawson_rk4(forward(grid, &g0.values), &lin, t, dt, |_, u| {
                if opts.linear_only {
                    vec![C64::new(0.0, 0.0); u.len()]
                } else {
                    u.iter().map(|v| -v * v).collect()
                }
            })?;
            inverse(grid, &gh)
        }
    };
    Field1D::new(grid.clone(), values)
}

/// Integrates `∂ₜg = d(∂ₓ)g − ∫ g(x,z) b(z) g(z,y) dz` to time `t`,
/// spectrally in `x` with integrating-factor RK4.
pub fn direct_corr(
    d: &SpectralSymbol,
    b: &Field1D,
    g0: &Kernel2D,
    t: f64,
    dt: f64,
) -> Result<Kernel2D> {
    let grid = g0.grid().clone();
    if b.grid != grid {
        return Err(Error::GridMismatch);
    }
    let n = grid.n();
    let dx = grid.dx();
    // The quadrature only visits nodes where b is nonzero.
    let support: Vec<(usize, C64)> = b
        .values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.norm() != 0.0)
        .map(|(j, v)| (j, v * dx))
        .collect();
    let lin = d.multipliers(&grid);
    let mut u0 = g0.values().as_slice().to_vec();
    grid.forward_columns(&mut u0);

    let rhs = |_: f64, u: &[C64]| -> Vec<C64> {
        let mut g = u.to_vec();
        grid.inverse_columns(&mut g);
        let gm = DMatrix::from_column_slice(n, n, &g);
        let left = DMatrix::from_fn(n, support.len(), |i, s| gm[(i, support[s].0)] * support[s].1);
        let right = DMatrix::from_fn(support.len(), n, |s, j| gm[(support[s].0, j)]);
        let prod = left * right;
        let mut out: Vec<C64> = prod.as_slice().iter().map(|v| -v).collect();
        grid.forward_columns(&mut out);
        out
    };
    let mut u = lawson_rk4(u0, &lin, t, dt, rhs)?;
    grid.inverse_columns(&mut u);
    Kernel2D::new(grid, DMatrix::from_vec(n, n, u))
}

/// Integrates viscous Burgers `uₜ = uₓₓ − u uₓ` to time `t`, pseudo-spectrally
/// with 2/3-rule dealiasing of the product and integrating-factor RK4.
pub fn direct_burgers(u0: &Field1D, t: f64, dt: f64) -> Result<Field1D> {
    let grid = u0.grid.clone();
    let n = grid.n();
    let lin = SpectralSymbol::heat().multipliers(&grid);
    let ddx = SpectralSymbol::new(vec![0.0, 1.0])?.multipliers(&grid);
    let keep: Vec<bool> = (0..n).map(|m| 3 * m.min(n - m) < n).collect();
    let rhs = |_: f64, uh: &[C64]| -> Vec<C64> {
        let trunc: Vec<C64> = uh
            .iter()
            .zip(&keep)
            .map(|(v, &k)| if k { *v } else { C64::new(0.0, 0.0) })
            .collect();
        let u = inverse(&grid, &trunc);
        let sq: Vec<C64> = u.iter().map(|v| v * v).collect();
        let wh = forward(&grid, &sq);
        // −∂ₓ(u²/2)
        wh.iter()
            .zip(&ddx)
            .zip(&keep)
            .map(|((w, z), &k)| if k { -0.5 * z * w } else { C64::new(0.0, 0.0) })
            .collect()
    };
    let uh = lawson_rk4(forward(&grid, &u0.values), &lin, t, dt, rhs)?;
    Field1D::new(grid.clone(), inverse(&grid, &uh))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gaussian(grid: &Grid1D) -> Field1D {
        Field1D::from_fn(grid, |x| (-x * x).exp())
    }

    fn spectral() -> ConvOracleOptions {
        ConvOracleOptions {
            scheme: ConvScheme::Spectral,
            linear_only: false,
        }
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = Grid1D::new(8.0, 64).unwrap();
        let z = Field1D::zeros(&grid);
        for opts in [ConvOracleOptions::default(), spectral()] {
            let out = direct_conv(&SpectralSymbol::fkpp(), &z, 1.0, 1e-2, opts).unwrap();
            assert_eq!(out.l2_norm(), 0.0);
        }
        assert_eq!(direct_burgers(&z, 1.0, 1e-2).unwrap().l2_norm(), 0.0);
    }

    #[test]
    fn linear_stencil_matches_exact_propagation() {
        let grid = Grid1D::new(10.0, 512).unwrap();
        let g0 = gaussian(&grid);
        let opts = ConvOracleOptions {
            scheme: ConvScheme::Stencil(StencilOrder::Fourth),
            linear_only: true,
        };
        let d = SpectralSymbol::fkpp();
        let got = direct_conv(&d, &g0, 1.0, 2e-4, opts).unwrap();
        let mut gh = g0.values.clone();
        grid.forward_in_place(&mut gh);
        for (v, &k) in gh.iter_mut().zip(grid.freqs()) {
            *v *= d.multiplier(k).exp();
        }
        grid.inverse_in_place(&mut gh);
        let exact = Field1D::new(grid.clone(), gh).unwrap();
        let err = got.relative_l2_error(&exact);
        assert!(err < 1e-6, "{err}");
    }

    #[test]
    fn stencil_orders() {
        let grid = Grid1D::new(PI, 64).unwrap();
        let u: Vec<C64> = grid.points().iter().map(|&x| C64::new(x.sin(), 0.0)).collect();
        for (j, want) in [(1usize, f64::cos as fn(f64) -> f64), (3, |x: f64| -x.cos())] {
            let mut coeffs = vec![0.0; j + 1];
            coeffs[j] = 1.0;
            let d = SpectralSymbol::new(coeffs).unwrap();
            let err = |acc| {
                let s = symbol_stencil(&d, grid.dx(), acc).unwrap();
                apply_stencil(&s, &u)
                    .iter()
                    .zip(grid.points())
                    .map(|(v, &x)| (v.re - want(x)).abs())
                    .fold(0.0, f64::max)
            };
            assert!(err(StencilOrder::Fourth) < err(StencilOrder::Second) / 50.0);
        }
        let bad = SpectralSymbol::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, -1.0]).unwrap();
        assert!(matches!(
            symbol_stencil(&bad, 0.1, StencilOrder::Fourth),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn stencil_rejects_large_dt() {
        let grid = Grid1D::new(8.0, 128).unwrap();
        let r = direct_conv(&SpectralSymbol::fkpp(), &gaussian(&grid), 1.0, 0.1, ConvOracleOptions::default());
        assert!(matches!(r, Err(Error::InvalidInput(_))));
    }

    #[test]
    fn spectral_conv_converges_at_fourth_order() {
        let grid = Grid1D::new(8.0, 64).unwrap();
        let g0 = gaussian(&grid).map(|v| v * 3.0);
        let d = SpectralSymbol::fkpp();
        let reference = direct_conv(&d, &g0, 1.0, 1e-3, spectral()).unwrap();
        let e1 = direct_conv(&d, &g0, 1.0, 0.1, spectral()).unwrap().relative_l2_error(&reference);
        let e2 = direct_conv(&d, &g0, 1.0, 0.05, spectral()).unwrap().relative_l2_error(&reference);
        assert!((e1 / e2 - 16.0).abs() < 4.0, "{e1} {e2}");
    }

    #[test]
    fn corr_without_coupling_is_linear() {
        let grid = Grid1D::new(5.0, 32).unwrap();
        let g0 = Kernel2D::from_fn(&grid, |x, y| 1.0 / ((x + y).cosh() * y.cosh()));
        let d = SpectralSymbol::fkpp();
        let got = direct_corr(&d, &Field1D::zeros(&grid), &g0, 0.5, 1e-2).unwrap();
        let mut m = g0.values().clone();
        grid.forward_columns(m.as_mut_slice());
        for mut col in m.column_iter_mut() {
            for (v, &k) in col.iter_mut().zip(grid.freqs()) {
                *v *= (d.multiplier(k) * 0.5).exp();
            }
        }
        grid.inverse_columns(m.as_mut_slice());
        let exact = Kernel2D::new(grid.clone(), m).unwrap();
        assert!(got.relative_hs_error(&exact).unwrap() < 1e-8);
    }

    #[test]
    fn corr_converges_at_fourth_order() {
        let grid = Grid1D::new(5.0, 32).unwrap();
        let g0 = Kernel2D::from_fn(&grid, |x, y| 2.0 / ((x + y).cosh() * y.cosh()));
        let b = Field1D::from_fn(&grid, |x| (-x * x).exp());
        let d = SpectralSymbol::fkpp();
        let reference = direct_corr(&d, &b, &g0, 1.0, 1e-3).unwrap();
        let err = |dt| direct_corr(&d, &b, &g0, 1.0, dt).unwrap().relative_hs_error(&reference).unwrap();
        let (e1, e2) = (err(0.1), err(0.05));
        assert!((e1 / e2 - 16.0).abs() < 4.0, "{e1} {e2}");
    }

    #[test]
    fn burgers_conserves_mean() {
        let grid = Grid1D::new(5.0, 128).unwrap();
        let u0 = Field1D::from_fn(&grid, |x| (-x * x).exp() * (1.0 + x));
        let u = direct_burgers(&u0, 1.0, 1e-2).unwrap();
        let mean = |f: &Field1D| f.values.iter().map(|v| v.re).sum::<f64>() * grid.dx();
        assert!((mean(&u) - mean(&u0)).abs() < 1e-8);
    }

    #[test]
    fn burgers_converges_at_fourth_order() {
        let grid = Grid1D::new(5.0, 64).unwrap();
        let u0 = Field1D::from_fn(&grid, |x| 2.0 * (-x * x).exp());
        let reference = direct_burgers(&u0, 1.0, 1e-3).unwrap();
        let e1 = direct_burgers(&u0, 1.0, 0.1).unwrap().relative_l2_error(&reference);
        let e2 = direct_burgers(&u0, 1.0, 0.05).unwrap().relative_l2_error(&reference);
        assert!((e1 / e2 - 16.0).abs() < 4.0, "{e1} {e2}");
    }
}
