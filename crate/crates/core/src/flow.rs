//! Base and auxiliary kernel flows and the Riccati relation solve.
//!
//! With `Q = id + Q'`, the linear system
//!
//! ```text
//! ∂ₜq' = a + a ⋆ q' + b p,        ∂ₜp = c + c ⋆ q' + d(∂ₓ) p,
//! p(0) = g₀,  q'(0) = 0
//! ```
//!
//! is evolved either in closed form (when `a = c = 0`, see [`evolve_fast`]) or
//! by an integrating-factor RK4 scheme ([`evolve_general`]). The solution of
//! `p = g + g ⋆ q'` then solves
//! `∂ₜg = c + d(∂ₓ)g − g ⋆ (a + b g)`.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Grid1D, C64};
use crate::kernel::{fredholm_solve_checked, hs_norm, star, Kernel2D, RelationFactor};
use crate::spectral::{exp_guarded, phi_of, SpectralSymbol};

/// Norm growth (relative to `‖g₀‖_HS`) that aborts a time-stepped flow.
pub const INSTABILITY_GROWTH: f64 = 1e8;

/// The coupling `b` between base and auxiliary equations.
#[derive(Debug, Clone, PartialEq)]
pub enum Coupling {
    Zero,
    /// `b ≡ 1`.
    One,
    /// Multiplication by `b(x)`, sampled on the grid.
    Samples(Vec<f64>),
    /// A constant-coefficient differential operator `b(∂ₓ)`.
    Symbol(SpectralSymbol),
}

/// A kernel-valued coefficient `a(x,y;t)` or `c(x,y;t)`.
#[derive(Clone)]
pub enum TimeKernel {
    Constant(Kernel2D),
    Varying(Arc<dyn Fn(f64) -> Kernel2D + Send + Sync>),
}

impl TimeKernel {
    pub fn at(&self, t: f64) -> Kernel2D {
        match self {
            TimeKernel::Constant(k) => k.clone(),
            TimeKernel::Varying(f) => f(t),
        }
    }
}

impl fmt::Debug for TimeKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TimeKernel::Constant(k) => f.debug_tuple("Constant").field(k).finish(),
            TimeKernel::Varying(_) => f.write_str("Varying(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub grid: Grid1D,
    pub d: SpectralSymbol,
    pub b: Coupling,
    pub a: Option<TimeKernel>,
    pub c: Option<TimeKernel>,
    pub t_final: f64,
    /// Step of the time-stepped path.
    pub dt: f64,
    /// Time-stepped path: record `det₂` every this many steps (and at the end).
    pub det2_stride: usize,
    /// Closed-form path: number of equally spaced `det₂` samples in `(0, t_final]`.
    pub fast_trace_points: usize,
}

impl FlowConfig {
    pub fn new(grid: Grid1D, d: SpectralSymbol, b: Coupling, t_final: f64) -> Self {
        Self {
            grid,
            d,
            b,
            a: None,
            c: None,
            t_final,
            dt: 1e-3,
            det2_stride: 1,
            fast_trace_points: 1,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_a(mut self, a: TimeKernel) -> Self {
        self.a = Some(a);
        self
    }

    pub fn with_c(mut self, c: TimeKernel) -> Self {
        self.c = Some(c);
        self
    }

    pub fn with_det2_stride(mut self, stride: usize) -> Self {
        self.det2_stride = stride;
        self
    }

    pub fn with_fast_trace_points(mut self, points: usize) -> Self {
        self.fast_trace_points = points;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let adm = self.d.admissibility(&self.grid);
        if !adm.admissible {
            return Err(Error::InvalidInput(format!(
                "symbol is neither diffusive nor dispersive on this grid: max Re d = {:.3e} exceeds c0 = {}",
                adm.max_real_part,
                self.d.constant_term()
            )));
        }
        if !(self.t_final.is_finite() && self.t_final >= 0.0) {
            return Err(Error::InvalidInput(format!(
                "t_final must be non-negative, got {}",
                self.t_final
            )));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.det2_stride == 0 || self.fast_trace_points == 0 {
            return Err(Error::InvalidInput(
                "det2 stride and trace points must be positive".into(),
            ));
        }
        if let Coupling::Samples(b) = &self.b {
            if b.len() != self.grid.n() {
                return Err(Error::InvalidInput(format!(
                    "b has {} samples, grid has {}",
                    b.len(),
                    self.grid.n()
                )));
            }
            if b.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput("b has non-finite samples".into()));
            }
        }
        for (name, k) in [("a", &self.a), ("c", &self.c)] {
            if let Some(k) = k {
                let k0 = k.at(0.0);
                if k0.grid() != &self.grid {
                    return Err(Error::GridMismatch);
                }
                if !k0.is_finite() {
                    return Err(Error::InvalidInput(format!("kernel {name} is not finite")));
                }
            }
        }
        Ok(())
    }
}

/// One point of the patch-health trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det2Sample {
    pub t: f64,
    pub det2: C64,
    pub qprime_hs: f64,
}

/// Diagnostics of the last relation solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelationDiagnostics {
    pub residual: f64,
    pub det2: C64,
    pub rcond: f64,
}

/// Kernels of one run at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowState {
    pub t: f64,
    pub p: Kernel2D,
    pub qprime: Kernel2D,
    pub g: Option<Kernel2D>,
    pub det2_trace: Vec<Det2Sample>,
    pub relation: Option<RelationDiagnostics>,
}

fn check_g0(cfg: &FlowConfig, g0: &Kernel2D) -> Result<()> {
    if g0.grid() != &cfg.grid {
        return Err(Error::GridMismatch);
    }
    if !g0.is_finite() {
        return Err(Error::InvalidInput("g0 is not finite".into()));
    }
    Ok(())
}

fn forward_kernel(grid: &Grid1D, k: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = k.clone();
    grid.forward_columns(m.as_mut_slice());
    m
}

fn inverse_kernel_columns(grid: &Grid1D, k: &DMatrix<C64>) -> DMatrix<C64> {
    let mut m = k.clone();
    grid.inverse_columns(m.as_mut_slice());
    m
}

/// Multiplies every column (a function of `x`) by a per-frequency factor.
fn scale_spectral_rows(m: &mut DMatrix<C64>, factors: &[C64]) {
    for mut col in m.column_iter_mut() {
        for (v, f) in col.iter_mut().zip(factors) {
            *v *= f;
        }
    }
}

/// `d(∂ₓ)k(x, y)`, applied pseudo-spectrally in the first argument.
pub fn apply_symbol(d: &SpectralSymbol, k: &Kernel2D) -> Kernel2D {
    let grid = k.grid();
    let mut m = forward_kernel(grid, k.values());
    scale_spectral_rows(&mut m, &d.multipliers(grid));
    grid.inverse_columns(m.as_mut_slice());
    Kernel2D::from_parts_unchecked(grid.clone(), m)
}

/// `b·k`: the coupling applied to a kernel in its first argument.
pub fn apply_coupling(b: &Coupling, k: &Kernel2D) -> Kernel2D {
    match b {
        Coupling::Zero => Kernel2D::zeros(k.grid()),
        Coupling::One => k.clone(),
        Coupling::Samples(s) => {
            let s: Vec<C64> = s.iter().map(|&v| C64::new(v, 0.0)).collect();
            k.scale_rows(&s)
        }
        Coupling::Symbol(sym) => apply_symbol(sym, k),
    }
}

fn exp_factors(grid: &Grid1D, mults: &[C64], t: f64) -> Result<Vec<C64>> {
    grid.freqs()
        .iter()
        .zip(mults)
        .map(|(&k, &z)| exp_guarded(z, k, t))
        .collect()
}

fn nearly_real(z: C64) -> bool {
    z.im.abs() <= 1e-8 * z.norm()
}

fn record_det2(trace: &mut Vec<Det2Sample>, t: f64, qprime: &Kernel2D) -> Result<()> {
    let f = RelationFactor::new(qprime);
    f.check(Some(t))?;
    // A real det₂ that changed sign passed through zero between samples.
    if let Some(prev) = trace.last() {
        let (a, b) = (prev.det2, f.det2());
        if nearly_real(a) && nearly_real(b) && a.re * b.re < 0.0 {
            return Err(Error::PatchBreakdown {
                t: Some(t),
                det2_abs: a.norm().min(b.norm()),
                rcond: f.rcond(),
            });
        }
    }
    trace.push(Det2Sample {
        t,
        det2: f.det2(),
        qprime_hs: f.hs_norm(),
    });
    Ok(())
}

/// Closed-form base and auxiliary kernels at time `t` (requires `a = c = 0`).
///
/// `p̂(k,y;t) = e^{d t} ĝ₀(k,y)` and `q'` is `b` applied to the `Î(k,t)`-filtered
/// initial data.
fn fast_kernels(cfg: &FlowConfig, g0_hat: &DMatrix<C64>, t: f64) -> Result<(Kernel2D, Kernel2D)> {
    let grid = &cfg.grid;
    let mults = cfg.d.multipliers(grid);
    let e = exp_factors(grid, &mults, t)?;
    let mut ph = g0_hat.clone();
    scale_spectral_rows(&mut ph, &e);
    let p = inverse_kernel_columns(grid, &ph);

    let qprime = match &cfg.b {
        Coupling::Zero => DMatrix::zeros(grid.n(), grid.n()),
        b => {
            let mut filt: Vec<C64> = mults.iter().map(|&z| phi_of(z, t)).collect();
            if let Coupling::Symbol(sym) = b {
                for (f, m) in filt.iter_mut().zip(sym.multipliers(grid)) {
                    *f *= m;
                }
            }
            let mut qh = g0_hat.clone();
            scale_spectral_rows(&mut qh, &filt);
            let q = inverse_kernel_columns(grid, &qh);
            match b {
                Coupling::Samples(s) => {
                    let s: Vec<C64> = s.iter().map(|&v| C64::new(v, 0.0)).collect();
                    Kernel2D::from_parts_unchecked(grid.clone(), q).scale_rows(&s).into_values()
                }
                _ => q,
            }
        }
    };
    Ok((
        Kernel2D::from_parts_unchecked(grid.clone(), p),
        Kernel2D::from_parts_unchecked(grid.clone(), qprime),
    ))
}

/// Base and auxiliary kernels at `cfg.t_final` in closed form.
///
/// Exact in time; requires `a = c = 0`. The `det₂` trace is sampled at
/// `cfg.fast_trace_points` equally spaced times and the call fails with
/// [`Error::PatchBreakdown`] at the first sample with `|det₂| < 1e-8`.
pub fn evolve_fast(cfg: &FlowConfig, g0: &Kernel2D) -> Result<FlowState> {
    cfg.validate()?;
    check_g0(cfg, g0)?;
    if cfg.a.is_some() || cfg.c.is_some() {
        return Err(Error::InvalidInput(
            "the closed-form path requires a = c = 0".into(),
        ));
    }
    let g0_hat = forward_kernel(&cfg.grid, g0.values());
    let mut trace = vec![Det2Sample {
        t: 0.0,
        det2: C64::new(1.0, 0.0),
        qprime_hs: 0.0,
    }];
    let m = cfg.fast_trace_points;
    if cfg.t_final > 0.0 {
        for j in 1..m {
            let t = cfg.t_final * j as f64 / m as f64;
            let (_, q) = fast_kernels(cfg, &g0_hat, t)?;
            record_det2(&mut trace, t, &q)?;
        }
    }
    let (p, qprime) = fast_kernels(cfg, &g0_hat, cfg.t_final)?;
    if cfg.t_final > 0.0 {
        record_det2(&mut trace, cfg.t_final, &qprime)?;
    }
    Ok(FlowState {
        t: cfg.t_final,
        p,
        qprime,
        g: None,
        det2_trace: trace,
        relation: None,
    })
}

/// Right-hand side of the (integrating-factor transformed) linear system.
struct GeneralRhs<'a> {
    cfg: &'a FlowConfig,
    b_mults: Option<Vec<C64>>,
    b_samples: Option<Vec<C64>>,
}

impl<'a> GeneralRhs<'a> {
    fn new(cfg: &'a FlowConfig) -> Self {
        let b_mults = match &cfg.b {
            Coupling::Symbol(s) => Some(s.multipliers(&cfg.grid)),
            _ => None,
        };
        let b_samples = match &cfg.b {
            Coupling::Samples(s) => Some(s.iter().map(|&v| C64::new(v, 0.0)).collect()),
            _ => None,
        };
        Self {
            cfg,
            b_mults,
            b_samples,
        }
    }

    /// Returns `(N_p̂, N_q')` for spectral `p̂` and physical `q'`.
    fn eval(&self, t: f64, ph: &DMatrix<C64>, q: &DMatrix<C64>) -> (Option<DMatrix<C64>>, DMatrix<C64>) {
        let grid = &self.cfg.grid;
        let n = grid.n();
        let w = grid.dx();
        let mut nq = match &self.cfg.b {
            Coupling::Zero => DMatrix::zeros(n, n),
            Coupling::One => inverse_kernel_columns(grid, ph),
            Coupling::Samples(_) => {
                let mut p = inverse_kernel_columns(grid, ph);
                let s = self.b_samples.as_ref().expect("samples cached");
                for mut col in p.column_iter_mut() {
                    for (v, f) in col.iter_mut().zip(s) {
                        *v *= f;
                    }
                }
                p
            }
            Coupling::Symbol(_) => {
                let mut m = ph.clone();
                scale_spectral_rows(&mut m, self.b_mults.as_ref().expect("multipliers cached"));
                grid.inverse_columns(m.as_mut_slice());
                m
            }
        };
        if let Some(a) = &self.cfg.a {
            let a = a.at(t);
            nq += a.values() + a.values() * q * C64::new(w, 0.0);
        }
        let nph = self.cfg.c.as_ref().map(|c| {
            let c = c.at(t);
            let src = c.values() + c.values() * q * C64::new(w, 0.0);
            forward_kernel(grid, &src)
        });
        (nph, nq)
    }
}

/// Integrates the base and auxiliary equations to `cfg.t_final` with
/// fixed-step RK4 in integrating-factor (Lawson) form: `d(∂ₓ)` is propagated
/// exactly per step in Fourier space, everything else is stepped.
///
/// `det₂` is checked every `cfg.det2_stride` steps; the first sample with
/// `|det₂| < 1e-8` aborts with [`Error::PatchBreakdown`].
pub fn evolve_general(cfg: &FlowConfig, g0: &Kernel2D) -> Result<FlowState> {
    cfg.validate()?;
    check_g0(cfg, g0)?;
    let grid = &cfg.grid;
    let n = grid.n();
    let steps = if cfg.t_final == 0.0 {
        0
    } else {
        ((cfg.t_final / cfg.dt) - 1e-9).ceil().max(1.0) as usize
    };
    let h = if steps == 0 { cfg.dt } else { cfg.t_final / steps as f64 };
    let mults = cfg.d.multipliers(grid);
    let e_half = exp_factors(grid, &mults, 0.5 * h)?;
    let e_full = exp_factors(grid, &mults, h)?;
    let rhs = GeneralRhs::new(cfg);

    let mut ph = forward_kernel(grid, g0.values());
    let mut q = DMatrix::<C64>::zeros(n, n);
    let norm0 = hs_norm(g0).max(f64::MIN_POSITIVE);
    let mut trace = vec![Det2Sample {
        t: 0.0,
        det2: C64::new(1.0, 0.0),
        qprime_hs: 0.0,
    }];

    let scaled = |m: &DMatrix<C64>, f: &[C64]| {
        let mut m = m.clone();
        scale_spectral_rows(&mut m, f);
        m
    };
    let hc = |x: f64| C64::new(x, 0.0);

    for s in 0..steps {
        let t = s as f64 * h;
        let (k1p, k1q) = rhs.eval(t, &ph, &q);

        let mut pa = ph.clone();
        if let Some(k) = &k1p {
            pa += k * hc(0.5 * h);
        }
        scale_spectral_rows(&mut pa, &e_half);
        let qa = &q + &k1q * hc(0.5 * h);
        let (k2p, k2q) = rhs.eval(t + 0.5 * h, &pa, &qa);

        let ph_half = scaled(&ph, &e_half);
        let mut pb = ph_half.clone();
        if let Some(k) = &k2p {
            pb += k * hc(0.5 * h);
        }
        let qb = &q + &k2q * hc(0.5 * h);
        let (k3p, k3q) = rhs.eval(t + 0.5 * h, &pb, &qb);

        let ph_full = scaled(&ph, &e_full);
        let mut pc = ph_full.clone();
        if let Some(k) = &k3p {
            pc += scaled(k, &e_half) * hc(h);
        }
        let qc = &q + &k3q * hc(h);
        let (k4p, k4q) = rhs.eval(t + h, &pc, &qc);

        let mut next_p = ph_full;
        if let (Some(k1), Some(k2), Some(k3), Some(k4)) = (k1p, k2p, k3p, k4p) {
            let incr = scaled(&k1, &e_full) + scaled(&(k2 + k3), &e_half) * hc(2.0) + k4;
            next_p += incr * hc(h / 6.0);
        }
        let next_q = &q + (k1q + (k2q + k3q) * hc(2.0) + k4q) * hc(h / 6.0);
        ph = next_p;
        q = next_q;

        let t_next = (s + 1) as f64 * h;
        // Parseval: Σ|p|²Δx = Σ|p̂|²Δk per column.
        let p_norm = (ph.iter().map(|v| v.norm_sqr()).sum::<f64>() * grid.dk() * grid.dx()).sqrt();
        let q_norm = q.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt() * grid.dx();
        let growth = (p_norm + q_norm) / norm0;
        if !growth.is_finite() || growth > INSTABILITY_GROWTH {
            return Err(Error::Instability { t: t_next, growth });
        }
        if (s + 1) % cfg.det2_stride == 0 || s + 1 == steps {
            let qk = Kernel2D::from_parts_unchecked(grid.clone(), q.clone());
            record_det2(&mut trace, t_next, &qk)?;
        }
    }

    Ok(FlowState {
        t: cfg.t_final,
        p: Kernel2D::from_parts_unchecked(grid.clone(), inverse_kernel_columns(grid, &ph)),
        qprime: Kernel2D::from_parts_unchecked(grid.clone(), q),
        g: None,
        det2_trace: trace,
        relation: None,
    })
}

/// Solves the Riccati relation `p = g + g ⋆ q'` for the state's kernels,
/// storing `g` and the solve diagnostics in the state.
pub fn riccati_solution(state: &mut FlowState) -> Result<Kernel2D> {
    let sol = fredholm_solve_checked(&state.p, &state.qprime).map_err(|e| match e {
        Error::PatchBreakdown { det2_abs, rcond, .. } => Error::PatchBreakdown {
            t: Some(state.t),
            det2_abs,
            rcond,
        },
        other => other,
    })?;
    state.relation = Some(RelationDiagnostics {
        residual: sol.residual,
        det2: sol.det2,
        rcond: sol.rcond,
    });
    state.g = Some(sol.g.clone());
    Ok(sol.g)
}

/// `c + d(∂ₓ)g − g ⋆ (a + b g)` at time `t`.
pub fn pde_rhs(cfg: &FlowConfig, g: &Kernel2D, t: f64) -> Result<Kernel2D> {
    let mut inner = apply_coupling(&cfg.b, g);
    if let Some(a) = &cfg.a {
        inner = inner.add(&a.at(t))?;
    }
    let mut rhs = apply_symbol(&cfg.d, g).sub(&star(g, &inner)?)?;
    if let Some(c) = &cfg.c {
        rhs = rhs.add(&c.at(t))?;
    }
    Ok(rhs)
}

/// `‖(g(t+h) − g(t−h))/2h − RHS(g(t))‖_HS / ‖RHS(g(t))‖_HS`.
///
/// Certifies that a generated `g` solves the nonlinear equation without
/// reference to any other solver.
pub fn pde_residual(
    g_prev: &Kernel2D,
    g_mid: &Kernel2D,
    g_next: &Kernel2D,
    h: f64,
    cfg: &FlowConfig,
    t: f64,
) -> Result<f64> {
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::InvalidInput(format!("h must be positive, got {h}")));
    }
    let dt = g_next.sub(g_prev)?.scale(C64::new(0.5 / h, 0.0));
    let rhs = pde_rhs(cfg, g_mid, t)?;
    let denom = hs_norm(&rhs);
    let num = hs_norm(&dt.sub(&rhs)?);
    Ok(if denom == 0.0 { num } else { num / denom })
}

/// Runs a configuration through the chosen path and the relation solve.
pub fn solve_at(cfg: &FlowConfig, g0: &Kernel2D, general: bool) -> Result<FlowState> {
    let mut state = if general {
        evolve_general(cfg, g0)?
    } else {
        evolve_fast(cfg, g0)?
    };
    riccati_solution(&mut state)?;
    Ok(state)
}
