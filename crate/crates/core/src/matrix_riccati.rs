//! Finite-dimensional frame flow and its projection onto the canonical chart.
//!
//! The linear system `∂ₜQ = AQ + BP`, `∂ₜP = CQ + DP` with `Q(0) = I`,
//! `P(0) = G₀` generates `G = PQ⁻¹`, which solves the matrix Riccati equation
//! `∂ₜG = C + DG − G(A + BG)` for as long as `Q` stays invertible.

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::C64;
use crate::linalg::DenseFactor;

/// Entry magnitude beyond which an integration is declared blown up.
pub const BLOWUP_CAP: f64 = 1e12;

/// Reciprocal condition number of `Q` below which projection is refused.
pub const PROJECT_RCOND_MIN: f64 = 1e-12;

pub type BlockFn = Arc<dyn Fn(f64) -> DMatrix<C64> + Send + Sync>;

/// Time-dependent blocks `A: k×k`, `B: k×m`, `C: m×k`, `D: m×m` with `m = n − k`.
#[derive(Clone)]
pub struct BlockSystem {
    k: usize,
    m: usize,
    a: BlockFn,
    b: BlockFn,
    c: BlockFn,
    d: BlockFn,
}

/// Blocks evaluated at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct Blocks {
    pub a: DMatrix<C64>,
    pub b: DMatrix<C64>,
    pub c: DMatrix<C64>,
    pub d: DMatrix<C64>,
}

impl BlockSystem {
    pub fn new(k: usize, m: usize, a: BlockFn, b: BlockFn, c: BlockFn, d: BlockFn) -> Result<Self> {
        if k == 0 || m == 0 {
            return Err(Error::InvalidInput(
                "block dimensions k and n-k must be positive".into(),
            ));
        }
        let sys = Self { k, m, a, b, c, d };
        sys.blocks(0.0)?;
        Ok(sys)
    }

    /// A system with constant blocks.
    pub fn constant(a: DMatrix<C64>, b: DMatrix<C64>, c: DMatrix<C64>, d: DMatrix<C64>) -> Result<Self> {
        let (k, m) = (a.nrows(), d.nrows());
        Self::new(
            k,
            m,
            Arc::new(move |_| a.clone()),
            Arc::new(move |_| b.clone()),
            Arc::new(move |_| c.clone()),
            Arc::new(move |_| d.clone()),
        )
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn blocks(&self, t: f64) -> Result<Blocks> {
        let blocks = Blocks {
            a: (self.a)(t),
            b: (self.b)(t),
            c: (self.c)(t),
            d: (self.d)(t),
        };
        let (k, m) = (self.k, self.m);
        let shapes = [
            ("A", &blocks.a, k, k),
            ("B", &blocks.b, k, m),
            ("C", &blocks.c, m, k),
            ("D", &blocks.d, m, m),
        ];
        for (name, mat, r, c) in shapes {
            if mat.shape() != (r, c) {
                return Err(Error::InvalidInput(format!(
                    "block {name} at t = {t} is {:?}, expected {r}x{c}",
                    mat.shape()
                )));
            }
        }
        Ok(blocks)
    }

    /// The full `n×n` generator `[[A, B], [C, D]]` at time `t`.
    pub fn generator(&self, t: f64) -> Result<DMatrix<C64>> {
        let bl = self.blocks(t)?;
        let (k, n) = (self.k, self.k + self.m);
        let mut g = DMatrix::zeros(n, n);
        g.view_mut((0, 0), (k, k)).copy_from(&bl.a);
        g.view_mut((0, k), (k, self.m)).copy_from(&bl.b);
        g.view_mut((k, 0), (self.m, k)).copy_from(&bl.c);
        g.view_mut((k, k), (self.m, self.m)).copy_from(&bl.d);
        Ok(g)
    }
}

/// Frame `(Q, P)` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameState {
    pub t: f64,
    pub q: DMatrix<C64>,
    pub p: DMatrix<C64>,
}

/// Chart coordinate `G` at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiState {
    pub t: f64,
    pub g: DMatrix<C64>,
}

/// A projected frame with the reciprocal condition number of its `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub state: RiccatiState,
    pub rcond: f64,
}

fn step_schedule(t_final: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidInput(format!("dt must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "t_final must be non-negative, got {t_final}"
        )));
    }
    if t_final == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((t_final / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, t_final / steps as f64))
}

fn check_g0(sys: &BlockSystem, g0: &DMatrix<C64>) -> Result<()> {
    if g0.shape() != (sys.m, sys.k) {
        return Err(Error::InvalidInput(format!(
            "G0 is {:?}, expected {}x{}",
            g0.shape(),
            sys.m,
            sys.k
        )));
    }
    Ok(())
}

fn out_of_range(m: &DMatrix<C64>) -> bool {
    m.iter()
        .any(|v| !v.re.is_finite() || !v.im.is_finite() || v.norm() > BLOWUP_CAP)
}

/// Classical RK4 on the linear frame flow from `Q(0) = I`, `P(0) = G₀`.
///
/// Returns every step, starting with the initial frame.
pub fn integrate_frame(sys: &BlockSystem, g0: &DMatrix<C64>, t_final: f64, dt: f64) -> Result<Vec<FrameState>> {
    check_g0(sys, g0)?;
    let (steps, h) = step_schedule(t_final, dt)?;
    let k = sys.k;
    let mut w = DMatrix::zeros(k + sys.m, k);
    w.view_mut((0, 0), (k, k)).fill_with_identity();
    w.view_mut((k, 0), (sys.m, k)).copy_from(g0);

    let split = |t: f64, w: &DMatrix<C64>| FrameState {
        t,
        q: w.rows(0, k).into_owned(),
        p: w.rows(k, sys.m).into_owned(),
    };
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(split(0.0, &w));
    for s in 0..steps {
        let t = s as f64 * h;
        let g1 = sys.generator(t)?;
        let gm = sys.generator(t + 0.5 * h)?;
        let g2 = sys.generator(t + h)?;
        let k1 = &g1 * &w;
        let k2 = &gm * (&w + &k1 * C64::new(0.5 * h, 0.0));
        let k3 = &gm * (&w + &k2 * C64::new(0.5 * h, 0.0));
        let k4 = &g2 * (&w + &k3 * C64::new(h, 0.0));
        let next = &w + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        if out_of_range(&next) {
            return Err(Error::BlowUp {
                t_last_good: t,
                t_estimate: t + 0.5 * h,
            });
        }
        w = next;
        traj.push(split((s + 1) as f64 * h, &w));
    }
    Ok(traj)
}

/// `G = P Q⁻¹` by a linear solve; refuses frames whose `Q` is numerically singular.
pub fn project(frame: &FrameState) -> Result<Projection> {
    let f = DenseFactor::new(frame.q.clone());
    let rcond = f.rcond();
    let breakdown = || Error::PatchBreakdown {
        t: Some(frame.t),
        det2_abs: frame.q.determinant().norm(),
        rcond,
    };
    if !(rcond >= PROJECT_RCOND_MIN) {
        return Err(breakdown());
    }
    let g = f.solve_right(&frame.p).ok_or_else(breakdown)?;
    Ok(Projection {
        state: RiccatiState { t: frame.t, g },
        rcond,
    })
}

fn riccati_rhs(bl: &Blocks, g: &DMatrix<C64>) -> DMatrix<C64> {
    &bl.c + &bl.d * g - g * (&bl.a + &bl.b * g)
}

/// Classical RK4 on `∂ₜG = C + DG − G(A + BG)`.
///
/// Stops with [`Error::BlowUp`] once an entry exceeds `1e12` or turns non-finite.
pub fn integrate_riccati_direct(
    sys: &BlockSystem,
    g0: &DMatrix<C64>,
    t_final: f64,
    dt: f64,
) -> Result<Vec<RiccatiState>> {
    check_g0(sys, g0)?;
    let (steps, h) = step_schedule(t_final, dt)?;
    let mut g = g0.clone();
    let mut traj = Vec::with_capacity(steps + 1);
    traj.push(RiccatiState { t: 0.0, g: g.clone() });
    let half = C64::new(0.5 * h, 0.0);
    for s in 0..steps {
        let t = s as f64 * h;
        let b1 = sys.blocks(t)?;
        let bm = sys.blocks(t + 0.5 * h)?;
        let b2 = sys.blocks(t + h)?;
        let k1 = riccati_rhs(&b1, &g);
        let k2 = riccati_rhs(&bm, &(&g + &k1 * half));
        let k3 = riccati_rhs(&bm, &(&g + &k2 * half));
        let k4 = riccati_rhs(&b2, &(&g + &k3 * C64::new(h, 0.0)));
        let next = &g + (k1 + (k2 + k3) * C64::new(2.0, 0.0) + k4) * C64::new(h / 6.0, 0.0);
        if out_of_range(&next) {
            return Err(Error::BlowUp {
                t_last_good: t,
                t_estimate: t + 0.5 * h,
            });
        }
        g = next;
        traj.push(RiccatiState {
            t: (s + 1) as f64 * h,
            g: g.clone(),
        });
    }
    Ok(traj)
}

/// `G(t)` for constant blocks via the matrix exponential of the generator.
pub fn exact_constant(sys: &BlockSystem, g0: &DMatrix<C64>, t: f64) -> Result<Projection> {
    check_g0(sys, g0)?;
    let k = sys.k;
    let mut w0 = DMatrix::zeros(k + sys.m, k);
    w0.view_mut((0, 0), (k, k)).fill_with_identity();
    w0.view_mut((k, 0), (sys.m, k)).copy_from(g0);
    let w = (sys.generator(0.0)? * C64::new(t, 0.0)).exp() * w0;
    project(&FrameState {
        t,
        q: w.rows(0, k).into_owned(),
        p: w.rows(k, sys.m).into_owned(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::frobenius;

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    fn scalar(x: f64) -> DMatrix<C64> {
        DMatrix::from_element(1, 1, c(x))
    }

    fn scalar_system(a: f64, b: f64, cc: f64, d: f64) -> BlockSystem {
        BlockSystem::constant(scalar(a), scalar(b), scalar(cc), scalar(d)).unwrap()
    }

    #[test]
    fn zero_field_keeps_initial_frame() {
        let z2 = DMatrix::<C64>::zeros(2, 2);
        let sys = BlockSystem::constant(z2.clone(), z2.clone(), z2.clone(), z2).unwrap();
        let g0 = DMatrix::from_fn(2, 2, |i, j| c(i as f64 - 0.5 * j as f64));
        let traj = integrate_frame(&sys, &g0, 1.0, 0.1).unwrap();
        let last = traj.last().unwrap();
        assert_eq!(last.q, DMatrix::identity(2, 2));
        assert_eq!(last.p, g0);
        assert_eq!(traj.len(), 11);
        assert!((last.t - 1.0).abs() < 1e-15);
    }

    #[test]
    fn shear_frame_is_linear_in_time() {
        // A = 0, B = I, C = D = 0: Q = I + tG₀, P = G₀.
        let sys = scalar_system(0.0, 1.0, 0.0, 0.0);
        let traj = integrate_frame(&sys, &scalar(0.7), 2.0, 0.25).unwrap();
        for f in &traj {
            assert!((f.q[(0, 0)] - c(1.0 + 0.7 * f.t)).norm() < 1e-14);
            assert_eq!(f.p[(0, 0)], c(0.7));
            let g = project(f).unwrap().state.g[(0, 0)];
            assert!((g - c(0.7 / (1.0 + 0.7 * f.t))).norm() < 1e-14);
        }
    }

    #[test]
    fn two_by_two_matches_closed_form_exponential() {
        let (a, b, cc, d) = (0.3, -1.1, 0.8, -0.4);
        let g0 = 0.25;
        let sys = scalar_system(a, b, cc, d);
        let t = 1.5;
        let traj = integrate_frame(&sys, &scalar(g0), t, 1e-3).unwrap();
        let last = traj.last().unwrap();
        // exp(tM) = e^{τt}(cosh(μt) I + sinh(μt)/μ (M − τI)), τ = tr/2, μ² = τ² − det.
        let tau = 0.5 * (a + d);
        let mu = C64::new(tau * tau - (a * d - b * cc), 0.0).sqrt();
        let e = (c(tau) * t).exp();
        let ch = (mu * t).cosh();
        let sh = (mu * t).sinh() / mu;
        let m = [[a - tau, b], [cc, d - tau]];
        let q = e * (ch + sh * (m[0][0] + m[0][1] * g0));
        let p = e * (ch * g0 + sh * (m[1][0] + m[1][1] * g0));
        assert!((last.q[(0, 0)] - q).norm() < 1e-10);
        assert!((last.p[(0, 0)] - p).norm() < 1e-10);
    }

    #[test]
    fn projection_at_start_is_exact() {
        let sys = scalar_system(0.1, 0.2, 0.3, 0.4);
        let traj = integrate_frame(&sys, &scalar(-0.6), 0.0, 0.1).unwrap();
        assert_eq!(traj.len(), 1);
        assert_eq!(project(&traj[0]).unwrap().state.g, scalar(-0.6));
    }

    #[test]
    fn near_singular_q_breaks_down() {
        let mut q = DMatrix::<C64>::identity(2, 2);
        q[(1, 1)] = c(1e-14);
        let frame = FrameState {
            t: 0.0,
            q,
            p: DMatrix::from_element(1, 2, c(1.0)),
        };
        assert!(matches!(project(&frame), Err(Error::PatchBreakdown { .. })));
    }

    #[test]
    fn scalar_riccati_blowup_detected() {
        // ∂ₜG = −G², G₀ = −1  ⇒  G = −1/(1 − t), pole at t = 1.
        let sys = scalar_system(0.0, 1.0, 0.0, 0.0);
        let dt = 1e-3;
        match integrate_riccati_direct(&sys, &scalar(-1.0), 2.0, dt) {
            Err(Error::BlowUp { t_last_good, t_estimate }) => {
                assert!((t_estimate - 1.0).abs() <= 2.0 * dt, "{t_last_good} {t_estimate}");
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
        let ok = integrate_riccati_direct(&sys, &scalar(0.5), 1.0, dt).unwrap();
        let g = ok.last().unwrap().g[(0, 0)];
        assert!((g - c(0.5 / 1.5)).norm() < 1e-12);
    }

    #[test]
    fn equilibrium_stays_put() {
        let sys = scalar_system(0.4, 2.0, 0.0, -0.3);
        let traj = integrate_riccati_direct(&sys, &scalar(0.0), 1.0, 0.1).unwrap();
        assert!(traj.iter().all(|s| s.g[(0, 0)] == c(0.0)));
    }

    #[test]
    fn shape_errors() {
        let bad = BlockSystem::constant(
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 3),
            DMatrix::zeros(2, 2),
            DMatrix::zeros(2, 2),
        );
        assert!(bad.is_err());
        let sys = scalar_system(0.0, 0.0, 0.0, 0.0);
        assert!(integrate_frame(&sys, &DMatrix::zeros(2, 1), 1.0, 0.1).is_err());
        assert!(integrate_frame(&sys, &scalar(0.0), 1.0, 0.0).is_err());
        assert!(integrate_riccati_direct(&sys, &scalar(0.0), -1.0, 0.1).is_err());
    }

    #[test]
    fn time_dependent_blocks_agree_with_direct() {
        let a: BlockFn = Arc::new(|t| DMatrix::from_fn(2, 2, |i, j| c(0.1 * (i + j) as f64 * t.cos())));
        let b: BlockFn = Arc::new(|t| DMatrix::from_fn(2, 1, |i, _| c(0.3 - 0.2 * i as f64 + 0.1 * t)));
        let cc: BlockFn = Arc::new(|t| DMatrix::from_fn(1, 2, |_, j| c(0.2 * (j as f64 + t).sin())));
        let d: BlockFn = Arc::new(|_| DMatrix::from_element(1, 1, c(-0.5)));
        let sys = BlockSystem::new(2, 1, a, b, cc, d).unwrap();
        let g0 = DMatrix::from_fn(1, 2, |_, j| c(0.4 - 0.3 * j as f64));
        let frames = integrate_frame(&sys, &g0, 1.0, 1e-2).unwrap();
        let direct = integrate_riccati_direct(&sys, &g0, 1.0, 1e-2).unwrap();
        for (f, r) in frames.iter().zip(&direct) {
            let g = project(f).unwrap().state.g;
            assert!(frobenius(&(g - &r.g)) < 1e-8);
        }
    }
}
