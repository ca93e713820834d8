//! Discretised Hilbert–Schmidt kernels.
//!
//! A kernel `k(x, y)` is stored as the sample matrix `K[i][j] = k(xᵢ, yⱼ)`
//! together with the grid; `x` runs down each column, so column `j` is the
//! contiguous slice of samples at fixed `y = yⱼ`. Operator action and
//! composition use the grid's quadrature weights (Nyström): the operator is
//! `K·diag(w)`, the `⋆` product is `G·diag(w)·H`, and `δ + q'` is represented
//! by the matrix `I + diag(w)·Q'` acting from the right.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::grid::{Field1D, Grid1D, C64};
use crate::linalg::{frobenius, DenseFactor};

/// Below this `|det₂|` the canonical coordinate patch is considered lost.
pub const DET2_BREAKDOWN: f64 = 1e-8;

/// Below this reciprocal condition number a relation solve is treated as singular.
pub const RCOND_BREAKDOWN: f64 = 1e-12;

/// Sampled two-point kernel on `grid × grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel2D {
    grid: Grid1D,
    values: DMatrix<C64>,
}

impl Kernel2D {
    pub fn new(grid: Grid1D, values: DMatrix<C64>) -> Result<Self> {
        let n = grid.n();
        if values.nrows() != n || values.ncols() != n {
            return Err(Error::InvalidInput(format!(
                "kernel is {}x{}, grid has {n} points",
                values.nrows(),
                values.ncols()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidInput("kernel has non-finite entries".into()));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &Grid1D) -> Self {
        let n = grid.n();
        Self {
            grid: grid.clone(),
            values: DMatrix::zeros(n, n),
        }
    }

    /// Samples `k(x, y)` on the grid.
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: &Grid1D, f: F) -> Self {
        let p = grid.points();
        let n = grid.n();
        Self {
            grid: grid.clone(),
            values: DMatrix::from_fn(n, n, |i, j| C64::new(f(p[i], p[j]), 0.0)),
        }
    }

    /// The translation-invariant kernel `k(x, y) = f(x − y)` with `x − y`
    /// wrapped into `[-L, L)`, built from samples of `f` on the grid.
    ///
    /// On the periodic grid `xᵢ − yⱼ ≡ x_{(i−j+n/2) mod n}`, so the result is
    /// exactly circulant.
    pub fn circulant(profile: &Field1D) -> Self {
        let n = profile.grid.n();
        let half = n / 2;
        let v = &profile.values;
        Self {
            grid: profile.grid.clone(),
            values: DMatrix::from_fn(n, n, |i, j| v[(i + n + half - j) % n]),
        }
    }

    pub(crate) fn from_parts_unchecked(grid: Grid1D, values: DMatrix<C64>) -> Self {
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn values(&self) -> &DMatrix<C64> {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut DMatrix<C64> {
        &mut self.values
    }

    pub fn into_values(self) -> DMatrix<C64> {
        self.values
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    /// Column `j`: samples `k(·, yⱼ)`.
    pub fn column(&self, j: usize) -> Field1D {
        Field1D {
            grid: self.grid.clone(),
            values: self.values.column(j).iter().copied().collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values
            .iter()
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: &self.values * alpha,
        }
    }

    pub fn add(&self, other: &Kernel2D) -> Result<Self> {
        check_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: &self.values + &other.values,
        })
    }

    pub fn sub(&self, other: &Kernel2D) -> Result<Self> {
        check_grid(&self.grid, &other.grid)?;
        Ok(Self {
            grid: self.grid.clone(),
            values: &self.values - &other.values,
        })
    }

    /// Multiplies row `i` by `b(xᵢ)`: the kernel of `b(x)·k(x, y)`.
    pub fn scale_rows(&self, b: &[C64]) -> Self {
        let mut values = self.values.clone();
        for mut col in values.column_iter_mut() {
            for (v, s) in col.iter_mut().zip(b) {
                *v *= s;
            }
        }
        Self {
            grid: self.grid.clone(),
            values,
        }
    }

    /// Applies the operator to a field: `(Kf)(x) = ∫ k(x,y) f(y) dy`.
    pub fn apply(&self, f: &Field1D) -> Result<Field1D> {
        check_grid(&self.grid, &f.grid)?;
        let w = self.grid.weights();
        let weighted: Vec<C64> = f.values.iter().zip(w).map(|(v, w)| v * *w).collect();
        let out = &self.values * nalgebra::DVector::from_vec(weighted);
        Ok(Field1D {
            grid: self.grid.clone(),
            values: out.iter().copied().collect(),
        })
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// `‖self − other‖_HS / ‖other‖_HS`.
    pub fn relative_hs_error(&self, reference: &Kernel2D) -> Result<f64> {
        let diff = self.sub(reference)?;
        let denom = hs_norm(reference);
        let num = hs_norm(&diff);
        Ok(if denom == 0.0 { num } else { num / denom })
    }

    /// Largest deviation from translation invariance, `max |k(xᵢ₊₁, yⱼ₊₁) − k(xᵢ, yⱼ)|`
    /// with periodic index wrap, relative to the largest entry.
    pub fn translation_deviation(&self) -> f64 {
        let n = self.n();
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let mut dev: f64 = 0.0;
        for j in 0..n {
            for i in 0..n {
                let shifted = self.values[((i + 1) % n, (j + 1) % n)];
                dev = dev.max((shifted - self.values[(i, j)]).norm());
            }
        }
        dev / scale
    }
}

fn check_grid(a: &Grid1D, b: &Grid1D) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::GridMismatch)
    }
}

/// `(g ⋆ h)(x, y) = ∫ g(x, z) h(z, y) dz`, by Nyström quadrature.
pub fn star(g: &Kernel2D, h: &Kernel2D) -> Result<Kernel2D> {
    check_grid(&g.grid, &h.grid)?;
    let weighted = g.scale_columns_by_weights();
    Ok(Kernel2D {
        grid: g.grid.clone(),
        values: weighted * &h.values,
    })
}

impl Kernel2D {
    fn scale_columns_by_weights(&self) -> DMatrix<C64> {
        let mut m = self.values.clone();
        for (mut col, w) in m.column_iter_mut().zip(self.grid.weights()) {
            col *= C64::new(*w, 0.0);
        }
        m
    }

    /// `diag(w)·K`: the matrix of the operator acting on weighted samples.
    fn weighted_rows(&self) -> DMatrix<C64> {
        let w = self.grid.weights();
        let mut m = self.values.clone();
        for mut col in m.column_iter_mut() {
            for (v, wi) in col.iter_mut().zip(w) {
                *v *= *wi;
            }
        }
        m
    }
}

/// `‖k‖_HS² = Σᵢ Σⱼ wᵢ wⱼ |k(xᵢ, xⱼ)|²`.
pub fn hs_norm(k: &Kernel2D) -> f64 {
    let w = k.grid.weights();
    let mut acc = 0.0;
    for (j, col) in k.values.column_iter().enumerate() {
        let mut c = 0.0;
        for (v, wi) in col.iter().zip(w) {
            c += wi * v.norm_sqr();
        }
        acc += w[j] * c;
    }
    acc.sqrt()
}

/// The kernel `δ(x − y) + q'(x, y)` of `Q = id + Q'`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityPlus {
    pub tail: Kernel2D,
}

impl IdentityPlus {
    pub fn new(tail: Kernel2D) -> Self {
        Self { tail }
    }

    pub fn identity(grid: &Grid1D) -> Self {
        Self {
            tail: Kernel2D::zeros(grid),
        }
    }

    /// `(Qf)(x) = f(x) + ∫ q'(x, y) f(y) dy`.
    pub fn apply(&self, f: &Field1D) -> Result<Field1D> {
        let mut out = self.tail.apply(f)?;
        for (o, v) in out.values.iter_mut().zip(&f.values) {
            *o += v;
        }
        Ok(out)
    }

    /// `g ⋆ (δ + q') = g + g ⋆ q'`.
    pub fn right_compose(&self, g: &Kernel2D) -> Result<Kernel2D> {
        star(g, &self.tail)?.add(g)
    }
}

/// `det₂(id + Q')` and the Hilbert–Schmidt norm of `q'`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Det2Report {
    pub det2: C64,
    pub hs_norm: f64,
}

/// Factorisation of `I + diag(w)·Q'`, shared by the relation solve, `det₂`
/// and the inverse kernel.
pub struct RelationFactor {
    grid: Grid1D,
    factor: DenseFactor,
    det2: C64,
    rcond: f64,
    hs_norm: f64,
}

impl RelationFactor {
    pub fn new(qprime: &Kernel2D) -> Self {
        let a = qprime.weighted_rows();
        let trace: C64 = a.diagonal().iter().sum();
        let n = a.nrows();
        let m = DMatrix::<C64>::identity(n, n) + a;
        let factor = DenseFactor::new(m);
        // det₂(I + A) = det(I + A)·e^{−tr A}, assembled in log form.
        let det2 = if factor.is_exactly_singular() {
            C64::new(0.0, 0.0)
        } else {
            (factor.log_det() - trace).exp()
        };
        let rcond = factor.rcond();
        Self {
            grid: qprime.grid.clone(),
            factor,
            det2,
            rcond,
            hs_norm: hs_norm(qprime),
        }
    }

    pub fn det2(&self) -> C64 {
        self.det2
    }

    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn hs_norm(&self) -> f64 {
        self.hs_norm
    }

    /// Whether the canonical chart is still usable.
    pub fn check(&self, t: Option<f64>) -> Result<()> {
        let det2_abs = self.det2.norm();
        if !(det2_abs >= DET2_BREAKDOWN) || !(self.rcond >= RCOND_BREAKDOWN) {
            return Err(Error::PatchBreakdown {
                t,
                det2_abs,
                rcond: self.rcond,
            });
        }
        Ok(())
    }

    /// Solves `p = g + g ⋆ q'` for `g`.
    pub fn solve(&self, p: &Kernel2D) -> Result<Kernel2D> {
        check_grid(&self.grid, &p.grid)?;
        self.check(None)?;
        let g = self
            .factor
            .solve_right(&p.values)
            .ok_or(Error::PatchBreakdown {
                t: None,
                det2_abs: self.det2.norm(),
                rcond: self.rcond,
            })?;
        Ok(Kernel2D {
            grid: self.grid.clone(),
            values: g,
        })
    }
}

/// `det₂(id + Q')` via `det(I + A)·e^{−tr A}` with `A = diag(w)·Q'`.
pub fn det2(qprime: &Kernel2D) -> Det2Report {
    let f = RelationFactor::new(qprime);
    Det2Report {
        det2: f.det2,
        hs_norm: f.hs_norm,
    }
}

/// Solution of the Riccati relation `p = g ⋆ (δ + q')`.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationSolution {
    pub g: Kernel2D,
    pub det2: C64,
    pub rcond: f64,
    pub qprime_hs: f64,
    /// `‖p − g ⋆ (δ + q')‖_HS / max(1, ‖p‖_HS)`.
    pub residual: f64,
}

/// Solves the Fredholm equation `p(x,y) = g(x,y) + ∫ g(x,z) q'(z,y) dz` for `g`.
///
/// One factorisation of `I + diag(w)·Q'` serves every row of `g`. Fails with
/// [`Error::PatchBreakdown`] when `|det₂| < 1e-8` or the system is numerically
/// singular.
pub fn fredholm_solve(p: &Kernel2D, qprime: &Kernel2D) -> Result<Kernel2D> {
    Ok(fredholm_solve_checked(p, qprime)?.g)
}

/// [`fredholm_solve`] plus its diagnostics.
pub fn fredholm_solve_checked(p: &Kernel2D, qprime: &Kernel2D) -> Result<RelationSolution> {
    check_grid(&p.grid, &qprime.grid)?;
    let factor = RelationFactor::new(qprime);
    let g = factor.solve(p)?;
    let residual = relation_residual(p, &g, qprime)?;
    Ok(RelationSolution {
        g,
        det2: factor.det2,
        rcond: factor.rcond,
        qprime_hs: factor.hs_norm,
        residual,
    })
}

/// `‖p − g ⋆ (δ + q')‖_HS / max(1, ‖p‖_HS)`.
pub fn relation_residual(p: &Kernel2D, g: &Kernel2D, qprime: &Kernel2D) -> Result<f64> {
    let recon = IdentityPlus::new(qprime.clone()).right_compose(g)?;
    let r = hs_norm(&p.sub(&recon)?);
    Ok(r / hs_norm(p).max(1.0))
}

/// Kernel `q̃'` of `(id + Q')⁻¹ = id + Q̃'`, so that `q' + q̃' + q' ⋆ q̃' = 0`.
///
/// This is the relation solve with right-hand side `−q'`.
pub fn inverse_kernel(qprime: &Kernel2D) -> Result<Kernel2D> {
    fredholm_solve(&qprime.scale(C64::new(-1.0, 0.0)), qprime)
}

/// Frobenius norm of the raw sample matrix (no quadrature weights).
pub fn sample_frobenius(k: &Kernel2D) -> f64 {
    frobenius(&k.values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn grid() -> Grid1D {
        Grid1D::new(3.0, 24).unwrap()
    }

    fn bumpy(grid: &Grid1D, a: f64, b: f64) -> Kernel2D {
        Kernel2D::from_fn(grid, |x, y| a * (-(x - 0.3 * y).powi(2)).exp() * (b * y).cos())
    }

    #[test]
    fn rejects_wrong_shape_and_nan() {
        let g = grid();
        assert!(Kernel2D::new(g.clone(), DMatrix::zeros(3, 3)).is_err());
        let mut m = DMatrix::zeros(24, 24);
        m[(0, 0)] = C64::new(f64::NAN, 0.0);
        assert!(Kernel2D::new(g, m).is_err());
    }

    #[test]
    fn star_rejects_grid_mismatch() {
        let a = Kernel2D::zeros(&grid());
        let b = Kernel2D::zeros(&Grid1D::new(3.0, 26).unwrap());
        assert_eq!(star(&a, &b), Err(Error::GridMismatch));
        assert!(fredholm_solve(&a, &b).is_err());
    }

    #[test]
    fn identity_plus_zero_is_identity() {
        let g = grid();
        let k = bumpy(&g, 1.0, 0.7);
        let id = IdentityPlus::identity(&g);
        assert_eq!(id.right_compose(&k).unwrap(), k);
        let f = k.column(3);
        assert_eq!(id.apply(&f).unwrap(), f);
    }

    #[test]
    fn star_of_gaussians() {
        let g = Grid1D::new(20.0, 512).unwrap();
        let a = Kernel2D::from_fn(&g, |x, y| (-PI * (x - y).powi(2)).exp());
        let c = star(&a, &a).unwrap();
        let p = g.points();
        let mut err: f64 = 0.0;
        // Away from the truncation edge the periodic wrap is invisible.
        for i in (128..384).step_by(7) {
            for j in (128..384).step_by(5) {
                let want = (-PI * (p[i] - p[j]).powi(2) / 2.0).exp() / 2f64.sqrt();
                err = err.max((c.values()[(i, j)] - want).norm());
            }
        }
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn hs_norm_of_separable_gaussian() {
        let g = Grid1D::new(10.0, 256).unwrap();
        let k = Kernel2D::from_fn(&g, |x, y| (-PI * (x * x + y * y)).exp());
        assert!((hs_norm(&k) - 0.5f64.sqrt()).abs() < 1e-12);
        assert_eq!(hs_norm(&Kernel2D::zeros(&g)), 0.0);
        let s = k.scale(C64::new(-3.0, 4.0));
        assert!((hs_norm(&s) - 5.0 * hs_norm(&k)).abs() < 1e-12);
    }

    #[test]
    fn zero_tail_has_unit_det2_and_trivial_solve() {
        let g = grid();
        let z = Kernel2D::zeros(&g);
        let r = det2(&z);
        assert_eq!(r.det2, C64::new(1.0, 0.0));
        assert_eq!(r.hs_norm, 0.0);
        let p = bumpy(&g, 1.0, 0.2);
        let sol = fredholm_solve(&p, &z).unwrap();
        assert!(sol.relative_hs_error(&p).unwrap() < 1e-15);
        assert_eq!(inverse_kernel(&z).unwrap(), z);
    }

    #[test]
    fn rank_one_det2_and_solve() {
        // q'(z, y) = u(z) v(y);  A = diag(w) Q' has tr A = s = Σ wᵢ uᵢ vᵢ.
        let g = grid();
        let p = g.points();
        let w = g.dx();
        let lambda = 0.8;
        let u: Vec<f64> = p.iter().map(|x| (-x * x).exp()).collect();
        let v: Vec<f64> = p.iter().map(|x| (1.0 + x).cos() * (-0.5 * x * x).exp()).collect();
        let q = Kernel2D::from_fn(&g, |x, y| {
            let i = g.nearest_index(x);
            let j = g.nearest_index(y);
            lambda * u[i] * v[j]
        });
        let s: f64 = (0..g.n()).map(|i| w * u[i] * v[i]).sum();
        let want = (1.0 + lambda * s) * (-lambda * s).exp();
        let got = det2(&q).det2;
        assert!((got - want).norm() < 1e-12, "{got} vs {want}");

        // Sherman–Morrison: g = p − (p⋆u) λ v / (1 + λ s)
        let pk = bumpy(&g, 1.3, 0.9);
        let sol = fredholm_solve(&pk, &q).unwrap();
        let n = g.n();
        let mut expect = pk.values().clone();
        for x in 0..n {
            let pu: C64 = (0..n).map(|z| pk.values()[(x, z)] * w * u[z]).sum();
            for y in 0..n {
                expect[(x, y)] -= pu * lambda * v[y] / (1.0 + lambda * s);
            }
        }
        let diff = frobenius(&(sol.values() - &expect));
        assert!(diff < 1e-12 * frobenius(&expect).max(1.0), "{diff}");
    }

    #[test]
    fn neumann_inverse_for_small_tail() {
        let g = grid();
        let base = bumpy(&g, 1.0, 0.4);
        let q = base.scale(C64::new(1e-3 / hs_norm(&base), 0.0));
        let inv = inverse_kernel(&q).unwrap();
        let approx = star(&q, &q).unwrap().sub(&q).unwrap();
        let err = hs_norm(&inv.sub(&approx).unwrap());
        assert!(err < 1e-8, "{err}");
        let back = inverse_kernel(&inv).unwrap();
        assert!(hs_norm(&back.sub(&q).unwrap()) < 1e-9);
        // q' + q̃' + q' ⋆ q̃' = 0
        let id = q.add(&inv).unwrap().add(&star(&q, &inv).unwrap()).unwrap();
        assert!(hs_norm(&id) < 1e-10);
    }

    #[test]
    fn breakdown_on_singular_chart() {
        // A rank-one tail with 1 + λs = 0 makes id + Q' singular.
        let g = grid();
        let p = g.points();
        let w = g.dx();
        let u: Vec<f64> = p.iter().map(|x| (-x * x).exp()).collect();
        let s: f64 = u.iter().map(|v| w * v * v).sum();
        let lambda = -1.0 / s;
        let q = Kernel2D::from_fn(&g, |x, y| {
            lambda * u[g.nearest_index(x)] * u[g.nearest_index(y)]
        });
        let r = det2(&q);
        assert!(r.det2.norm() < 1e-8);
        let err = fredholm_solve(&bumpy(&g, 1.0, 0.1), &q).unwrap_err();
        assert!(matches!(err, Error::PatchBreakdown { .. }));
    }

    #[test]
    fn circulant_is_translation_invariant() {
        let g = grid();
        let prof = Field1D::from_fn(&g, |x| (-(x - 0.4).powi(2)).exp());
        let k = Kernel2D::circulant(&prof);
        assert_eq!(k.translation_deviation(), 0.0);
        let origin = g.origin_index();
        for i in 0..g.n() {
            assert_eq!(k.values()[(i, origin)], prof.values[i]);
        }
    }
}
