//! The three worked instances: convolution FKPP, correlation FKPP and Burgers.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::flow::{evolve_fast, riccati_solution, Coupling, FlowConfig, FlowState};
use crate::grid::{Field1D, Grid1D, C64};
use crate::kernel::{fredholm_solve, Kernel2D};
use crate::spectral::{exp_guarded, phi_of, SpectralSymbol};

/// Mesh intervals for the pole pre-scan of the convolution closed form.
pub const POLE_SCAN_INTERVALS: usize = 64;

/// `∂ₜg = d(∂ₓ)g − g ∗ g` for a one-argument profile (kernel `g(x − y)`).
#[derive(Debug, Clone, PartialEq)]
pub struct ConvModel {
    pub d: SpectralSymbol,
    pub g0: Field1D,
}

impl ConvModel {
    pub fn new(d: SpectralSymbol, g0: Field1D) -> Self {
        Self { d, g0 }
    }

    /// `d = ∂ₓ² + 1`, `g₀(x) = e^{−x²}` on `[-20, 20)` with 512 points.
    pub fn gaussian_preset() -> Result<Self> {
        let grid = Grid1D::new(20.0, 512)?;
        Ok(Self::new(
            SpectralSymbol::fkpp(),
            Field1D::from_fn(&grid, |x| (-x * x).exp()),
        ))
    }

    pub fn grid(&self) -> &Grid1D {
        &self.g0.grid
    }
}

/// `∂ₜg = d(∂ₓ)g − ∫ g(x,z) b(z) g(z,y) dz`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrModel {
    pub d: SpectralSymbol,
    pub b: Field1D,
    pub g0: Kernel2D,
}

impl CorrModel {
    pub fn new(d: SpectralSymbol, b: Field1D, g0: Kernel2D) -> Result<Self> {
        if b.grid != *g0.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { d, b, g0 })
    }

    /// `d = ∂ₓ² + 1`, `g₀ = sech(x+y)sech(y)`, `b` the centred Gaussian density
    /// with standard deviation `0.01`, on `[-10, 10)` with 256 points.
    pub fn sech_preset() -> Result<Self> {
        let grid = Grid1D::new(10.0, 256)?;
        let g0 = Kernel2D::from_fn(&grid, |x, y| 1.0 / ((x + y).cosh() * y.cosh()));
        Self::new(SpectralSymbol::fkpp(), gaussian_density(&grid, 0.01), g0)
    }

    pub fn grid(&self) -> &Grid1D {
        self.g0.grid()
    }

    fn b_samples(&self) -> Result<Vec<f64>> {
        if self.b.values.iter().any(|v| v.im != 0.0) {
            return Err(Error::InvalidInput("b must be real-valued".into()));
        }
        Ok(self.b.values.iter().map(|v| v.re).collect())
    }

    /// The flow configuration (`a = c = 0`, multiplicative `b`) at time `t`.
    pub fn flow_config(&self, t: f64) -> Result<FlowConfig> {
        Ok(FlowConfig::new(
            self.grid().clone(),
            self.d.clone(),
            Coupling::Samples(self.b_samples()?),
            t,
        ))
    }
}

/// `e^{−x²/2σ²}/(σ√(2π))` sampled on the grid.
pub fn gaussian_density(grid: &Grid1D, sigma: f64) -> Field1D {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    Field1D::from_fn(grid, |x| norm * (-x * x / (2.0 * sigma * sigma)).exp())
}

/// Initial heat-equation profile `q₀ > 0` generating a Burgers solution.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersModel {
    pub q0: Field1D,
}

impl BurgersModel {
    pub fn new(q0: Field1D) -> Result<Self> {
        check_positive(&q0)?;
        Ok(Self { q0 })
    }

    /// `q₀ = 1 + ε e^{−πx²}` on `[-10, 10)` with 256 points.
    pub fn bump_preset(eps: f64) -> Result<Self> {
        let grid = Grid1D::new(10.0, 256)?;
        Self::new(Field1D::from_fn(&grid, |x| 1.0 + eps * (-PI * x * x).exp()))
    }
}

fn check_positive(q: &Field1D) -> Result<()> {
    for (v, &x) in q.values.iter().zip(q.grid.points()) {
        if !(v.re > 0.0) || v.im != 0.0 {
            return Err(Error::NonPositiveQ { x, value: v.re });
        }
    }
    Ok(())
}

fn forward(f: &Field1D) -> Vec<C64> {
    let mut v = f.values.clone();
    f.grid.forward_in_place(&mut v);
    v
}

fn inverse(grid: &Grid1D, mut v: Vec<C64>) -> Field1D {
    grid.inverse_in_place(&mut v);
    Field1D {
        grid: grid.clone(),
        values: v,
    }
}

/// Scans `1 + Î(k,τ)ĝ₀(k)` over `τ ∈ [0, t]` for every mode and reports the
/// earliest zero as [`Error::PoleCrossing`].
///
/// Each mode is sampled on a mesh of [`POLE_SCAN_INTERVALS`] intervals; a sign
/// change of the real part is refined by bisection and accepted as a pole when
/// the full complex denominator is small there.
pub fn conv_pole_scan(m: &ConvModel, t: f64) -> Result<()> {
    if t <= 0.0 {
        return Ok(());
    }
    let grid = m.grid();
    let g0h = forward(&m.g0);
    let mut first: Option<(f64, f64)> = None;
    for ((&k, z), &gh) in grid.freqs().iter().zip(m.d.multipliers(grid)).zip(&g0h) {
        if gh == C64::new(0.0, 0.0) {
            continue;
        }
        let denom = |tau: f64| C64::new(1.0, 0.0) + phi_of(z, tau) * gh;
        let mut lo = 0.0;
        let mut d_lo = denom(0.0);
        for j in 1..=POLE_SCAN_INTERVALS {
            let hi = t * j as f64 / POLE_SCAN_INTERVALS as f64;
            let d_hi = denom(hi);
            if d_lo.re > 0.0 && d_hi.re <= 0.0 {
                let (mut a, mut b) = (lo, hi);
                for _ in 0..80 {
                    let mid = 0.5 * (a + b);
                    if denom(mid).re > 0.0 {
                        a = mid;
                    } else {
                        b = mid;
                    }
                }
                let tc = 0.5 * (a + b);
                let scale = 1.0 + (phi_of(z, tc) * gh).norm();
                if denom(tc).norm() <= 1e-6 * scale {
                    if first.map_or(true, |(_, t0)| tc < t0) {
                        first = Some((k, tc));
                    }
                    break;
                }
            }
            lo = hi;
            d_lo = d_hi;
        }
    }
    match first {
        Some((k, t_critical)) => Err(Error::PoleCrossing {
            k,
            t_critical,
            t_requested: t,
        }),
        None => Ok(()),
    }
}

/// `ĝ(k;t) = e^{dt}ĝ₀ / (1 + Î(k,t)ĝ₀)` at the grid frequencies.
pub fn conv_closed_form_spectrum(m: &ConvModel, t: f64) -> Result<Vec<C64>> {
    conv_pole_scan(m, t)?;
    let grid = m.grid();
    let g0h = forward(&m.g0);
    grid.freqs()
        .iter()
        .zip(m.d.multipliers(grid))
        .zip(&g0h)
        .map(|((&k, z), &gh)| {
            let e = exp_guarded(z, k, t)?;
            Ok(e * gh / (C64::new(1.0, 0.0) + phi_of(z, t) * gh))
        })
        .collect()
}

/// Closed-form solution profile `g(x;t)`.
pub fn conv_closed_form(m: &ConvModel, t: f64) -> Result<Field1D> {
    Ok(inverse(m.grid(), conv_closed_form_spectrum(m, t)?))
}

/// Max over modes of the central-difference residual of
/// `∂ₜĝ = d ĝ − ĝ²` for the closed form, relative to the largest right-hand side.
pub fn conv_mode_residual(m: &ConvModel, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && t - h >= 0.0) {
        return Err(Error::InvalidInput(format!("need 0 < h <= t, got h = {h}, t = {t}")));
    }
    let prev = conv_closed_form_spectrum(m, t - h)?;
    let mid = conv_closed_form_spectrum(m, t)?;
    let next = conv_closed_form_spectrum(m, t + h)?;
    let mults = m.d.multipliers(m.grid());
    let mut worst: f64 = 0.0;
    let mut scale: f64 = 0.0;
    for j in 0..mid.len() {
        let rhs = mults[j] * mid[j] - mid[j] * mid[j];
        let fd = (next[j] - prev[j]) / (2.0 * h);
        worst = worst.max((fd - rhs).norm());
        scale = scale.max(rhs.norm());
    }
    Ok(if scale == 0.0 { worst } else { worst / scale })
}

/// Flow state of the two-argument pipeline for `g₀(x − y)`, after the relation solve.
pub fn conv_pipeline_state(m: &ConvModel, t: f64) -> Result<FlowState> {
    let cfg = FlowConfig::new(m.grid().clone(), m.d.clone(), Coupling::One, t);
    let mut state = evolve_fast(&cfg, &Kernel2D::circulant(&m.g0))?;
    riccati_solution(&mut state)?;
    Ok(state)
}

/// `g(x, 0; t)` from the kernel pipeline.
pub fn conv_via_pipeline(m: &ConvModel, t: f64) -> Result<Field1D> {
    let state = conv_pipeline_state(m, t)?;
    let g = state.g.as_ref().expect("relation solved");
    Ok(g.column(m.grid().origin_index()))
}

/// Base and auxiliary kernels at time `t` in closed form.
pub fn corr_build(m: &CorrModel, t: f64) -> Result<(Kernel2D, Kernel2D)> {
    let state = evolve_fast(&m.flow_config(t)?, &m.g0)?;
    Ok((state.p, state.qprime))
}

/// The solution kernel `g(x, y; t)`.
pub fn corr_solve(m: &CorrModel, t: f64) -> Result<Kernel2D> {
    let (p, qprime) = corr_build(m, t)?;
    fredholm_solve(&p, &qprime).map_err(|e| match e {
        Error::PatchBreakdown { det2_abs, rcond, .. } => Error::PatchBreakdown {
            t: Some(t),
            det2_abs,
            rcond,
        },
        other => other,
    })
}

/// Heat solution `q`, `p = ∂ₓq` and `g = p/q` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct BurgersFields {
    pub q: Field1D,
    pub p: Field1D,
    pub g: Field1D,
}

pub fn burgers_fields(m: &BurgersModel, t: f64) -> Result<BurgersFields> {
    let grid = &m.q0.grid;
    let heat = SpectralSymbol::heat().multipliers(grid);
    let ddx = SpectralSymbol::new(vec![0.0, 1.0])?.multipliers(grid);
    let mut qh = forward(&m.q0);
    for ((v, z), &k) in qh.iter_mut().zip(&heat).zip(grid.freqs()) {
        *v *= exp_guarded(*z, k, t)?;
    }
    let ph: Vec<C64> = qh.iter().zip(&ddx).map(|(a, b)| a * b).collect();
    // Real input stays real; drop roundoff imaginary parts.
    let q = inverse(grid, qh).map(|v| C64::new(v.re, 0.0));
    let p = inverse(grid, ph).map(|v| C64::new(v.re, 0.0));
    check_positive(&q)?;
    let g = Field1D {
        grid: grid.clone(),
        values: p.values.iter().zip(&q.values).map(|(a, b)| a / b).collect(),
    };
    Ok(BurgersFields { q, p, g })
}

/// `u = −2∂ₓq/q`, the solution of `uₜ = uₓₓ − u uₓ` with `u₀ = −2∂ₓq₀/q₀`.
pub fn burgers_cole_hopf(m: &BurgersModel, t: f64) -> Result<Field1D> {
    Ok(burgers_fields(m, t)?.g.map(|v| -2.0 * v))
}

/// `‖(u(t+h) − u(t−h))/2h − (uₓₓ − u uₓ)‖ / ‖uₓₓ − u uₓ‖` for the
/// Cole–Hopf output, derivatives taken spectrally.
pub fn burgers_residual(m: &BurgersModel, t: f64, h: f64) -> Result<f64> {
    if !(h > 0.0 && t - h >= 0.0) {
        return Err(Error::InvalidInput(format!("need 0 < h <= t, got h = {h}, t = {t}")));
    }
    let grid = &m.q0.grid;
    let up = burgers_cole_hopf(m, t - h)?;
    let u = burgers_cole_hopf(m, t)?;
    let un = burgers_cole_hopf(m, t + h)?;
    let derivative = |d: SpectralSymbol| {
        let mut v = forward(&u);
        for (x, z) in v.iter_mut().zip(d.multipliers(grid)) {
            *x *= z;
        }
        inverse(grid, v)
    };
    let uxx = derivative(SpectralSymbol::heat());
    let ux = derivative(SpectralSymbol::new(vec![0.0, 1.0])?);
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..grid.n() {
        let rhs = uxx.values[i] - u.values[i] * ux.values[i];
        let fd = (un.values[i] - up.values[i]) / (2.0 * h);
        num += (fd - rhs).norm_sqr();
        den += rhs.norm_sqr();
    }
    Ok(if den == 0.0 { num.sqrt() } else { (num / den).sqrt() })
}
