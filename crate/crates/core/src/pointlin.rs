//! Pointwise numeric linear algebra.
//!
//! Everything geometric in this crate reduces, at a sample point, to small
//! dense problems: ranks and kernels of evaluated form matrices, restricted
//! bilinear forms, and affine solves for defining equations. This module
//! wraps nalgebra's SVD behind the small vocabulary the geometry layers
//! need, with uniform relative thresholds:
//!
//! - singular values count toward the rank when they exceed
//!   [`RANK_REL_TOL`] times the largest singular value;
//! - subspaces compare via principal angles with tolerance
//!   [`SUBSPACE_ANGLE_TOL`] (computed through sines, which stay accurate
//!   for the tiny angles we care about);
//! - affine solves accept a least-squares solution only when the residual
//!   is at most [`AFFINE_RESIDUAL_TOL`] `* (1 + |b|)`.

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Relative singular-value threshold for rank decisions.
pub const RANK_REL_TOL: f64 = 1e-8;

/// Principal-angle tolerance (radians) for subspace equality/inclusion.
pub const SUBSPACE_ANGLE_TOL: f64 = 1e-6;

/// Relative residual bound for accepting an affine solve.
pub const AFFINE_RESIDUAL_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// rank and kernel
// ---------------------------------------------------------------------------

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    m.clone().svd(false, false).singular_values.iter().copied().collect()
}

/// Numerical rank: singular values above `tol * max_singular_value`.
pub fn rank_of(m: &DMatrix<f64>, tol: f64) -> usize {
    let sv = singular_values(m);
    let max = sv.iter().cloned().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol * max).count()
}

/// Rank of an antisymmetric matrix, which must be even. If the SVD count
/// comes out odd, the smallest counted singular value is re-examined against
/// ten times the threshold: a value below it is dropped (rank rounds down to
/// even), and either way the result carries a marginal-rank warning instead
/// of silently rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AntisymmetricRank {
    pub rank: usize,
    pub marginal: bool,
}

pub fn antisymmetric_rank(m: &DMatrix<f64>, tol: f64) -> AntisymmetricRank {
    let mut sv = singular_values(m);
    sv.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let max = sv.first().copied().unwrap_or(0.0);
    if max == 0.0 {
        return AntisymmetricRank {
            rank: 0,
            marginal: false,
        };
    }
    let threshold = tol * max;
    let count = sv.iter().filter(|&&s| s > threshold).count();
    if count % 2 == 0 {
        return AntisymmetricRank {
            rank: count,
            marginal: false,
        };
    }
    let smallest_counted = sv[count - 1];
    if smallest_counted <= 10.0 * threshold {
        AntisymmetricRank {
            rank: count - 1,
            marginal: true,
        }
    } else {
        AntisymmetricRank {
            rank: count,
            marginal: true,
        }
    }
}

/// Orthonormal basis of the (right) kernel of `m`.
pub fn kernel_of(m: &DMatrix<f64>, tol: f64) -> Subspace {
    let ncols = m.ncols();
    // Pad with zero rows so the thin SVD still produces a complete V^T.
    let work = if m.nrows() < ncols {
        let mut padded = DMatrix::zeros(ncols, ncols);
        padded.view_mut((0, 0), (m.nrows(), ncols)).copy_from(m);
        padded
    } else {
        m.clone()
    };
    let svd = work.clone().svd(false, true);
    let v_t = svd.v_t.expect("SVD with v_t requested");
    let sv = &svd.singular_values;
    let max = sv.iter().cloned().fold(0.0, f64::max);
    let mut basis = Vec::new();
    for i in 0..v_t.nrows() {
        let s = if i < sv.len() { sv[i] } else { 0.0 };
        if max == 0.0 || s <= tol * max {
            basis.push(v_t.row(i).transpose());
        }
    }
    Subspace::from_orthonormal(ncols, basis)
}

/// Restriction of a bilinear form (given by its matrix) to a subspace:
/// `B^T M B` in the subspace's orthonormal basis.
pub fn restrict_bilinear(m: &DMatrix<f64>, sub: &Subspace) -> DMatrix<f64> {
    let b = sub.basis_matrix();
    &b.transpose() * m * &b
}

/// Solution of `A x = b`: a least-squares particular solution (accepted only
/// when the residual is small) together with the kernel of `A`.
#[derive(Debug, Clone)]
pub struct AffineSolution {
    pub particular: DVector<f64>,
    pub kernel: Subspace,
    pub residual: f64,
}

pub fn solve_affine(a: &DMatrix<f64>, b: &DVector<f64>, tol: f64) -> Result<AffineSolution> {
    assert_eq!(a.nrows(), b.len(), "rhs length must match row count");
    let svd = a.clone().svd(true, true);
    let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let eps = if max == 0.0 { 1.0 } else { tol * max };
    let particular = svd
        .solve(b, eps)
        .map_err(|e| Error::Invalid(format!("SVD solve failed: {e}")))?;
    let residual = (a * &particular - b).norm();
    let tolerance = AFFINE_RESIDUAL_TOL * (1.0 + b.norm());
    if residual > tolerance {
        return Err(Error::Inconsistent {
            residual,
            tolerance,
        });
    }
    Ok(AffineSolution {
        particular,
        kernel: kernel_of(a, tol),
        residual,
    })
}

// ---------------------------------------------------------------------------
// subspaces
// ---------------------------------------------------------------------------

/// A linear subspace of R^n carried as an orthonormal basis.
#[derive(Debug, Clone)]
pub struct Subspace {
    ambient: usize,
    basis: Vec<DVector<f64>>,
}

impl Subspace {
    /// Trusted constructor: callers guarantee the basis is orthonormal.
    pub(crate) fn from_orthonormal(ambient: usize, basis: Vec<DVector<f64>>) -> Subspace {
        Subspace { ambient, basis }
    }

    pub fn zero(ambient: usize) -> Subspace {
        Subspace {
            ambient,
            basis: Vec::new(),
        }
    }

    pub fn full(ambient: usize) -> Subspace {
        let basis = (0..ambient)
            .map(|i| DVector::from_fn(ambient, |j, _| if i == j { 1.0 } else { 0.0 }))
            .collect();
        Subspace { ambient, basis }
    }

    /// Span of arbitrary columns, orthonormalized by a rank-revealing SVD.
    pub fn spanned_by(ambient: usize, columns: &[DVector<f64>]) -> Subspace {
        if columns.is_empty() {
            return Subspace::zero(ambient);
        }
        let m = DMatrix::from_columns(columns);
        assert_eq!(m.nrows(), ambient);
        let svd = m.clone().svd(true, false);
        let u = svd.u.expect("SVD with u requested");
        let max = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let mut basis = Vec::new();
        if max > 0.0 {
            for i in 0..svd.singular_values.len().min(u.ncols()) {
                if svd.singular_values[i] > RANK_REL_TOL * max {
                    basis.push(u.column(i).clone_owned());
                }
            }
        }
        Subspace { ambient, basis }
    }

    pub fn ambient(&self) -> usize {
        self.ambient
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn basis(&self) -> &[DVector<f64>] {
        &self.basis
    }

    /// Basis as the columns of an `ambient x dim` matrix.
    pub fn basis_matrix(&self) -> DMatrix<f64> {
        if self.basis.is_empty() {
            DMatrix::zeros(self.ambient, 0)
        } else {
            DMatrix::from_columns(&self.basis)
        }
    }

    /// Orthogonal projection of `v` onto the subspace.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.ambient);
        for b in &self.basis {
            out += b * b.dot(v);
        }
        out
    }

    /// Sine of the largest principal angle from `self` into `other`
    /// (zero iff `self ⊆ other`). Returns 1 for comparisons that cannot
    /// close (e.g. `self` bigger than `other`).
    pub fn sin_max_angle_into(&self, other: &Subspace) -> f64 {
        assert_eq!(self.ambient, other.ambient, "ambient dimensions differ");
        if self.dim() == 0 {
            return 0.0;
        }
        if self.dim() > other.dim() {
            return 1.0;
        }
        let b_self = self.basis_matrix();
        let b_other = other.basis_matrix();
        let residual = &b_self - &b_other * (b_other.transpose() * &b_self);
        let sv = singular_values(&residual);
        sv.iter().cloned().fold(0.0, f64::max).min(1.0)
    }

    /// Largest principal angle between equal-rank comparisons; for unequal
    /// dimensions this is the largest angle in either direction.
    pub fn max_principal_angle(&self, other: &Subspace) -> f64 {
        let s = self
            .sin_max_angle_into(other)
            .max(other.sin_max_angle_into(self));
        s.clamp(0.0, 1.0).asin()
    }

    pub fn is_subspace_of(&self, other: &Subspace, angle_tol: f64) -> bool {
        self.dim() <= other.dim() && self.sin_max_angle_into(other) <= angle_tol.sin()
    }

    pub fn approx_eq(&self, other: &Subspace, angle_tol: f64) -> bool {
        self.dim() == other.dim() && self.is_subspace_of(other, angle_tol)
    }

    pub fn contains_vector(&self, v: &DVector<f64>, angle_tol: f64) -> bool {
        let n = v.norm();
        if n == 0.0 {
            return true;
        }
        (v - self.project(v)).norm() / n <= angle_tol.sin()
    }

    /// Sum of subspaces (orthonormalized union of the two bases).
    pub fn sum(&self, other: &Subspace) -> Subspace {
        assert_eq!(self.ambient, other.ambient, "ambient dimensions differ");
        let mut cols = self.basis.clone();
        cols.extend(other.basis.iter().cloned());
        Subspace::spanned_by(self.ambient, &cols)
    }

    /// Intersection, computed as the kernel of the stacked complement
    /// projectors `[(I - P_self); (I - P_other)]`.
    pub fn intersect(&self, other: &Subspace) -> Subspace {
        assert_eq!(self.ambient, other.ambient, "ambient dimensions differ");
        let n = self.ambient;
        let eye = DMatrix::<f64>::identity(n, n);
        let b1 = self.basis_matrix();
        let b2 = other.basis_matrix();
        let p1 = &eye - &b1 * b1.transpose();
        let p2 = &eye - &b2 * b2.transpose();
        let mut stacked = DMatrix::zeros(2 * n, n);
        stacked.view_mut((0, 0), (n, n)).copy_from(&p1);
        stacked.view_mut((n, 0), (n, n)).copy_from(&p2);
        kernel_of(&stacked, RANK_REL_TOL)
    }

    /// Image of the subspace under a linear map (matrix acting on basis
    /// vectors), orthonormalized; near-zero images drop out.
    pub fn map_through(&self, m: &DMatrix<f64>) -> Subspace {
        assert_eq!(m.ncols(), self.ambient);
        let cols: Vec<DVector<f64>> = self.basis.iter().map(|b| m * b).collect();
        Subspace::spanned_by(m.nrows(), &cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    #[test]
    fn rank_respects_relative_threshold() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-14]));
        assert_eq!(rank_of(&m, RANK_REL_TOL), 2);
        assert_eq!(rank_of(&DMatrix::zeros(3, 3), RANK_REL_TOL), 0);
    }

    #[test]
    fn kernel_of_row_covector() {
        // The kernel of dz as a row on a 3-dim chart: the span of the other
        // two coordinate directions.
        let eta = mat(1, 3, &[1.0, 0.0, 0.0]);
        let k = kernel_of(&eta, RANK_REL_TOL);
        assert_eq!(k.dim(), 2);
        for b in k.basis() {
            assert!(b[0].abs() < 1e-12);
        }
        let expected = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![0.0, 1.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
            ],
        );
        assert!(k.approx_eq(&expected, SUBSPACE_ANGLE_TOL));
    }

    #[test]
    fn kernel_of_wide_matrix_is_complete() {
        // 2x4 with rank 2: kernel must have dimension 2 even though the thin
        // SVD of the unpadded matrix would only expose two right vectors.
        let m = mat(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
        let k = kernel_of(&m, RANK_REL_TOL);
        assert_eq!(k.dim(), 2);
        for b in k.basis() {
            assert!((&m * b).norm() < 1e-12);
        }
    }

    #[test]
    fn antisymmetric_rank_flags_marginal_values() {
        // Clean case: one symplectic block.
        let clean = mat(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        assert_eq!(
            antisymmetric_rank(&clean, RANK_REL_TOL),
            AntisymmetricRank { rank: 2, marginal: false }
        );
        // A stray near-threshold singular value makes the count odd; it is
        // re-examined against 10x the threshold and dropped here...
        let mut m = DMatrix::zeros(3, 3);
        m[(0, 1)] = 1.0;
        m[(1, 0)] = -1.0;
        m[(2, 2)] = 3e-8;
        let r = antisymmetric_rank(&m, RANK_REL_TOL);
        assert_eq!(r, AntisymmetricRank { rank: 2, marginal: true });
        // ...but kept (still flagged) when it is decisively above it.
        m[(2, 2)] = 1e-3;
        let r = antisymmetric_rank(&m, RANK_REL_TOL);
        assert_eq!(r, AntisymmetricRank { rank: 3, marginal: true });
    }

    #[test]
    fn solve_affine_returns_particular_and_kernel() {
        // x + y = 2 on R^2: a particular solution plus a 1-dim kernel.
        let a = mat(1, 2, &[1.0, 1.0]);
        let b = DVector::from_vec(vec![2.0]);
        let sol = solve_affine(&a, &b, RANK_REL_TOL).unwrap();
        assert!((sol.particular[0] + sol.particular[1] - 2.0).abs() < 1e-12);
        assert_eq!(sol.kernel.dim(), 1);
        assert!(sol.kernel.contains_vector(
            &DVector::from_vec(vec![1.0, -1.0]),
            SUBSPACE_ANGLE_TOL
        ));
    }

    #[test]
    fn solve_affine_rejects_inconsistent_systems() {
        let a = mat(2, 2, &[1.0, 0.0, 0.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        match solve_affine(&a, &b, RANK_REL_TOL) {
            Err(Error::Inconsistent { residual, .. }) => {
                assert!((residual - 1.0).abs() < 1e-12)
            }
            other => panic!("expected inconsistency, got {other:?}"),
        }
    }

    #[test]
    fn restrict_bilinear_matches_hand_computation() {
        // Standard symplectic form on R^4 restricted to span{e1, e3}.
        let mut omega = DMatrix::zeros(4, 4);
        omega[(0, 1)] = 1.0;
        omega[(1, 0)] = -1.0;
        omega[(2, 3)] = 1.0;
        omega[(3, 2)] = -1.0;
        let sub = Subspace::spanned_by(
            4,
            &[
                DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0, 0.0]),
            ],
        );
        let r = restrict_bilinear(&omega, &sub);
        assert!(r.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn principal_angles_detect_equality_and_tilt() {
        let a = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![1.0, 1.0, 0.0]),
                DVector::from_vec(vec![1.0, -1.0, 0.0]),
            ],
        );
        let b = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0, 0.0]),
            ],
        );
        assert!(a.approx_eq(&b, SUBSPACE_ANGLE_TOL));
        let eps = 1e-4;
        let tilted = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0, eps]),
            ],
        );
        let angle = b.max_principal_angle(&tilted);
        assert!((angle - eps).abs() < 1e-6, "angle {angle}");
        assert!(!b.approx_eq(&tilted, SUBSPACE_ANGLE_TOL));
        assert!(b.approx_eq(&tilted, 1e-3));
    }

    #[test]
    fn sum_and_intersection() {
        let e1 = Subspace::spanned_by(3, &[DVector::from_vec(vec![1.0, 0.0, 0.0])]);
        let plane_a = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 1.0, 0.0]),
            ],
        );
        let plane_b = Subspace::spanned_by(
            3,
            &[
                DVector::from_vec(vec![1.0, 0.0, 0.0]),
                DVector::from_vec(vec![0.0, 0.0, 1.0]),
            ],
        );
        assert_eq!(plane_a.sum(&plane_b).dim(), 3);
        let inter = plane_a.intersect(&plane_b);
        assert!(inter.approx_eq(&e1, SUBSPACE_ANGLE_TOL));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn rank_plus_kernel_dim_is_column_count(
            data in proptest::collection::vec(-2.0f64..2.0, 12),
        ) {
            let m = DMatrix::from_row_slice(3, 4, &data);
            let rank = rank_of(&m, RANK_REL_TOL);
            let kernel = kernel_of(&m, RANK_REL_TOL);
            prop_assert_eq!(rank + kernel.dim(), 4);
            for b in kernel.basis() {
                prop_assert!((&m * b).norm() <= 1e-7 * (1.0 + m.norm()));
            }
        }

        #[test]
        fn restriction_preserves_antisymmetry(
            data in proptest::collection::vec(-1.0f64..1.0, 16),
            cols in proptest::collection::vec(-1.0f64..1.0, 8),
        ) {
            let raw = DMatrix::from_row_slice(4, 4, &data);
            let anti = (&raw - raw.transpose()) * 0.5;
            let sub = Subspace::spanned_by(4, &[
                DVector::from_column_slice(&cols[0..4]),
                DVector::from_column_slice(&cols[4..8]),
            ]);
            let r = restrict_bilinear(&anti, &sub);
            let asym = (&r + r.transpose()).norm();
            prop_assert!(asym <= 1e-12);
        }
    }
}
