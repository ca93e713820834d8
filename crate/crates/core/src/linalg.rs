//! Partial-pivoting LU with right-side solves, log-determinant and a 1-norm
//! condition estimate.

use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::grid::C64;

/// A factorised square matrix `M` (as `ΠM = LU`), reusable for many solves.
pub struct DenseFactor {
    lu: LU<C64, Dyn, Dyn>,
    l: DMatrix<C64>,
    u: DMatrix<C64>,
    norm1: f64,
    singular: bool,
}

impl DenseFactor {
    pub fn new(m: DMatrix<C64>) -> Self {
        assert!(m.is_square(), "DenseFactor needs a square matrix");
        let norm1 = one_norm(&m);
        let lu = m.lu();
        let l = lu.l();
        let u = lu.u();
        let singular = u.diagonal().iter().any(|d| *d == C64::new(0.0, 0.0));
        Self {
            lu,
            l,
            u,
            norm1,
            singular,
        }
    }

    pub fn dim(&self) -> usize {
        self.u.nrows()
    }

    pub fn is_exactly_singular(&self) -> bool {
        self.singular
    }

    /// `Σ log Uᵢᵢ` plus the permutation sign, i.e. a branch of `log det M`.
    pub fn log_det(&self) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for d in self.u.diagonal().iter() {
            acc += d.ln();
        }
        if self.lu.p().determinant::<f64>() < 0.0 {
            acc += C64::new(0.0, std::f64::consts::PI);
        }
        acc
    }

    /// Solves `M X = B`.
    pub fn solve(&self, b: &DMatrix<C64>) -> Option<DMatrix<C64>> {
        if self.singular {
            return None;
        }
        self.lu.solve(b)
    }

    /// Solves `Mᵀ X = B`.
    pub fn solve_transpose(&self, b: &DMatrix<C64>) -> Option<DMatrix<C64>> {
        if self.singular {
            return None;
        }
        // Mᵀ = Uᵀ Lᵀ Π
        let y = self.u.tr_solve_upper_triangular(b)?;
        let mut z = self.l.tr_solve_lower_triangular(&y)?;
        self.lu.p().inv_permute_rows(&mut z);
        Some(z)
    }

    /// Solves `X M = B` for `X` (every row of `B` is an independent right-hand side).
    pub fn solve_right(&self, b: &DMatrix<C64>) -> Option<DMatrix<C64>> {
        Some(self.solve_transpose(&b.transpose())?.transpose())
    }

    /// Reciprocal 1-norm condition number estimate (Hager–Higham).
    pub fn rcond(&self) -> f64 {
        if self.singular || self.norm1 == 0.0 {
            return 0.0;
        }
        match self.inverse_norm1_estimate() {
            Some(inv) if inv.is_finite() && inv > 0.0 => 1.0 / (self.norm1 * inv),
            _ => 0.0,
        }
    }

    fn inverse_norm1_estimate(&self) -> Option<f64> {
        let n = self.dim();
        let mut x = DMatrix::from_element(n, 1, C64::new(1.0 / n as f64, 0.0));
        let mut est = 0.0;
        for iter in 0..5 {
            let y = self.solve(&x)?;
            let ynorm: f64 = y.iter().map(|v| v.norm()).sum();
            if iter > 0 && ynorm <= est {
                break;
            }
            est = ynorm;
            let xi = y.map(|v| {
                let a = v.norm();
                if a == 0.0 {
                    C64::new(1.0, 0.0)
                } else {
                    v / a
                }
            });
            // z = M^{-H} ξ  ⇔  Mᵀ conj(z) = conj(ξ)
            let z = self.solve_transpose(&xi.map(|v| v.conj()))?.map(|v| v.conj());
            let (j, zmax) = z
                .iter()
                .enumerate()
                .map(|(i, v)| (i, v.norm()))
                .fold((0, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            let ztx: C64 = z.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
            if iter > 0 && zmax <= ztx.re {
                break;
            }
            x.fill(C64::new(0.0, 0.0));
            x[(j, 0)] = C64::new(1.0, 0.0);
        }
        // Higham's alternative estimate guards against the classic counterexamples.
        let alt = DMatrix::from_fn(n, 1, |i, _| {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            C64::new(sign * (1.0 + i as f64 / (n.max(2) - 1) as f64), 0.0)
        });
        let w = self.solve(&alt)?;
        let alt_est = 2.0 * w.iter().map(|v| v.norm()).sum::<f64>() / (3.0 * n as f64);
        Some(est.max(alt_est))
    }
}

/// Maximum absolute column sum.
pub fn one_norm(m: &DMatrix<C64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Frobenius norm.
pub fn frobenius(m: &DMatrix<C64>) -> f64 {
    m.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

pub fn column(v: &[C64]) -> DVector<C64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_matrix(n: usize, seed: u64) -> DMatrix<C64> {
        // Small LCG keeps this test free of RNG dependencies.
        let mut s = seed;
        let mut next = || {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((s >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        DMatrix::from_fn(n, n, |_, _| C64::new(next(), next()))
    }

    #[test]
    fn right_and_transpose_solves() {
        let m = sample_matrix(7, 3) + DMatrix::identity(7, 7) * C64::new(2.0, 0.0);
        let b = sample_matrix(7, 9);
        let f = DenseFactor::new(m.clone());
        let x = f.solve_right(&b).unwrap();
        assert!(frobenius(&(&x * &m - &b)) < 1e-12);
        let y = f.solve_transpose(&b).unwrap();
        assert!(frobenius(&(m.transpose() * &y - &b)) < 1e-12);
    }

    #[test]
    fn log_det_matches_determinant() {
        let m = sample_matrix(6, 5);
        let f = DenseFactor::new(m.clone());
        let det = m.determinant();
        let got = f.log_det().exp();
        assert!((got - det).norm() < 1e-12 * det.norm());
    }

    #[test]
    fn rcond_detects_near_singularity() {
        let mut m = DMatrix::<C64>::identity(4, 4);
        assert!((DenseFactor::new(m.clone()).rcond() - 1.0).abs() < 1e-14);
        m[(3, 3)] = C64::new(1e-14, 0.0);
        let r = DenseFactor::new(m).rcond();
        assert!(r < 1e-12 && r > 1e-16, "{r}");
        let z = DMatrix::<C64>::zeros(3, 3);
        assert_eq!(DenseFactor::new(z).rcond(), 0.0);
    }

    #[test]
    fn rcond_is_close_to_exact() {
        let m = sample_matrix(12, 17);
        let exact = 1.0 / (one_norm(&m) * one_norm(&m.clone().try_inverse().unwrap()));
        let est = DenseFactor::new(m).rcond();
        // The estimator never underestimates ‖M⁻¹‖ by more than a small factor.
        assert!(est >= exact * 0.999 && est <= exact * 10.0, "{est} vs {exact}");
    }
}
