//! The scaling cover of a hyperplane field.
//!
//! Over an `m`-dimensional chart carrying a defining 1-form `η`, the cover
//! lives on `M × (ℝ ∖ {0})` with fibre coordinate `s`. It carries the
//! 2-form `ω = ds ∧ η + s dη`, the 1-form `ϑ = s η`, and the fibre scaling
//! field `∇ = s ∂s`; these satisfy `ϑ = i_∇ ω` and `dϑ = ω`, and each
//! fibre dilation `h_λ : (y, s) ↦ (y, λs)` rescales `ω` by `λ` — for
//! negative `λ` as well, which is what makes the two fibre components one
//! structure. The kernel of `ω` corresponds exactly to the characteristic
//! directions of `η` downstairs: `Y − a s ∂s` lies in `ker ω` iff
//! `η(Y) = 0` and `i_Y dη = a η`. Rank bookkeeping follows: `η` has
//! restricted rank `2r` iff `ω` has constant rank `2(r+1)`.

use std::sync::Arc;

use nalgebra::DVector;

use crate::expr::{Chart, CoordDomain, Expr};
use crate::exterior::{DiffForm, SmoothMap, VecField};
use crate::pointlin::{antisymmetric_rank, kernel_of, Subspace, RANK_REL_TOL};
use crate::precontact::HyperplaneField;
use crate::{Error, Result};

/// Relative residual threshold for the structural identities on the cover.
pub const COVER_RESIDUAL_TOL: f64 = 1e-9;

/// The scaling cover of a hyperplane field, with its canonical forms.
#[derive(Clone, Debug)]
pub struct CoverBundle {
    field: HyperplaneField,
    rank: usize,
    total_chart: Arc<Chart>,
    s_index: usize,
    eta_lift: DiffForm,
    omega: DiffForm,
    theta: DiffForm,
    scaling_field: VecField,
}

impl CoverBundle {
    /// Build the cover of a rank-`2r` structure. Fails if the base chart
    /// already uses the fibre coordinate name `s`.
    pub fn new(field: HyperplaneField, rank: usize) -> Result<CoverBundle> {
        let base = field.chart().clone();
        let total = base.extended(&format!("{}_cover", base.name()), "s", CoordDomain::nonzero())?;
        let s_index = total.dim() - 1;
        let s = Expr::coord(&total, s_index);

        let eta_lift = field.eta().extend_to(&total)?;
        let ds = DiffForm::d_coord(&total, s_index);
        let omega = &ds.wedge(&eta_lift) + &eta_lift.exterior_d().scaled(&s);
        let theta = eta_lift.scaled(&s);
        let scaling_field = VecField::coordinate(&total, s_index).scaled(&s);

        Ok(CoverBundle {
            field,
            rank,
            total_chart: total,
            s_index,
            eta_lift,
            omega,
            theta,
            scaling_field,
        })
    }

    pub fn base_field(&self) -> &HyperplaneField {
        &self.field
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn base_chart(&self) -> &Arc<Chart> {
        self.field.chart()
    }

    pub fn total_chart(&self) -> &Arc<Chart> {
        &self.total_chart
    }

    pub fn s_index(&self) -> usize {
        self.s_index
    }

    /// The lifted defining form (still called `η`, now on the total chart).
    pub fn eta_lift(&self) -> &DiffForm {
        &self.eta_lift
    }

    /// `ω = ds ∧ η + s dη`.
    pub fn omega(&self) -> &DiffForm {
        &self.omega
    }

    /// `ϑ = s η`.
    pub fn theta(&self) -> &DiffForm {
        &self.theta
    }

    /// The fibre scaling field `∇ = s ∂s`.
    pub fn scaling_field(&self) -> &VecField {
        &self.scaling_field
    }

    /// Append the fibre coordinate to a base point.
    pub fn lift_point(&self, base_point: &[f64], s: f64) -> Result<Vec<f64>> {
        if s == 0.0 {
            return Err(Error::ZeroScaling);
        }
        let mut p = base_point.to_vec();
        p.push(s);
        Ok(p)
    }

    /// Split a total point into its base part and fibre coordinate.
    pub fn project_point(&self, total_point: &[f64]) -> (Vec<f64>, f64) {
        (
            total_point[..self.s_index].to_vec(),
            total_point[self.s_index],
        )
    }

    /// The fibre dilation `h_λ : (y, s) ↦ (y, λ s)`; `λ = 0` would collapse
    /// the fibre and is rejected.
    pub fn scaling_map(&self, lambda: f64) -> Result<SmoothMap> {
        if lambda == 0.0 {
            return Err(Error::ZeroScaling);
        }
        let chart = &self.total_chart;
        let mut comps: Vec<Expr> = (0..chart.dim()).map(|i| Expr::coord(chart, i)).collect();
        comps[self.s_index] =
            &Expr::constant(chart, lambda) * &Expr::coord(chart, self.s_index);
        SmoothMap::new(chart, chart, comps)
    }

    /// Largest coefficient residual of `h_λ^* ω − λ ω` over the points
    /// (equivariance of the cover form under fibre dilations).
    pub fn scaling_pullback_residual(&self, lambda: f64, points: &[Vec<f64>]) -> Result<f64> {
        let h = self.scaling_map(lambda)?;
        let pulled = self.omega.pullback(&h)?;
        let scaled = self
            .omega
            .scaled(&Expr::constant(&self.total_chart, lambda));
        (&pulled - &scaled).sup_coeff_at(points)
    }

    /// Check `s ∂H/∂s = H` (fibrewise degree-1 homogeneity) at the points.
    pub fn homogeneity_check(&self, hamiltonian: &Expr, points: &[Vec<f64>]) -> Result<()> {
        let residual_expr =
            (&self.scaling_field.apply(hamiltonian) - hamiltonian).fold();
        let mut worst = 0.0f64;
        for p in points {
            let r = residual_expr.evaluate(p).map_err(Error::from)?.abs();
            let scale = 1.0 + hamiltonian.evaluate(p).map_err(Error::from)?.abs();
            worst = worst.max(r / scale);
        }
        if worst > 1e-8 {
            return Err(Error::NotHomogeneous { residual: worst });
        }
        Ok(())
    }

    /// Pointwise kernel of `ω` as a subspace of the total tangent space.
    pub fn omega_kernel_at(&self, point: &[f64]) -> Result<Subspace> {
        Ok(kernel_of(&self.omega.matrix_at(point)?, RANK_REL_TOL))
    }

    /// Verify the structural identities of the cover at the sample points.
    pub fn verify(&self, points: &[Vec<f64>]) -> Result<CoverReport> {
        if points.is_empty() {
            return Err(Error::Invalid("no sample points supplied".into()));
        }
        let scale = self.omega.sup_coeff_at(points)?.max(1.0);
        let tol = COVER_RESIDUAL_TOL * scale;

        // dω = 0 holds symbolically (d² kills s dη against ds∧dη), but we
        // keep the numeric check so ill-formed inputs are caught too.
        let closed_ok = self.omega.exterior_d().sup_coeff_at(points)? <= tol;

        let contraction = self.omega.interior(&self.scaling_field)?;
        let theta_ok = (&contraction - &self.theta).sup_coeff_at(points)? <= tol;

        let d_theta_ok = (&self.theta.exterior_d() - &self.omega).sup_coeff_at(points)? <= tol;

        let expected_rank = 2 * (self.rank + 1);
        let mut rank_min = usize::MAX;
        let mut rank_max = 0;
        let mut marginal = 0;
        for p in points {
            let r = antisymmetric_rank(&self.omega.matrix_at(p)?, RANK_REL_TOL);
            rank_min = rank_min.min(r.rank);
            rank_max = rank_max.max(r.rank);
            if r.marginal {
                marginal += 1;
            }
        }

        Ok(CoverReport {
            total_dim: self.total_chart.dim(),
            expected_rank,
            rank_observed: (rank_min, rank_max),
            rank_ok: rank_min == expected_rank && rank_max == expected_rank,
            closed_ok,
            theta_is_contraction_ok: theta_ok,
            d_theta_is_omega_ok: d_theta_ok,
            points_checked: points.len(),
            marginal_rank_points: marginal,
        })
    }

    /// Check, point by point, that `ker ω` consists exactly of the fields
    /// `Y − a s ∂s` with `η(Y) = 0` and `i_Y dη = a η`.
    ///
    /// Forward: every kernel basis vector decomposes that way. Backward:
    /// every characteristic direction of the base, completed with the
    /// matching fibre component, lands in `ker ω`.
    pub fn characteristic_correspondence_check(
        &self,
        points: &[Vec<f64>],
    ) -> Result<CharacteristicReport> {
        let mut worst_forward = 0.0f64;
        let mut worst_backward = 0.0f64;
        let mut kernel_dims = (usize::MAX, 0usize);
        let d_eta = self.field.d_eta();

        for p in points {
            let (base_pt, s) = self.project_point(p);
            let kernel = self.omega_kernel_at(p)?;
            kernel_dims.0 = kernel_dims.0.min(kernel.dim());
            kernel_dims.1 = kernel_dims.1.max(kernel.dim());

            let eta_row = self.field.eta().row_at(&base_pt)?;
            let d_eta_matrix = d_eta.matrix_at(&base_pt)?;
            let scale = eta_row.amax().max(d_eta_matrix.amax()).max(1.0);

            // forward: each kernel vector splits as (Y, −a s)
            for x in kernel.basis() {
                let y = DVector::from_iterator(
                    base_pt.len(),
                    x.iter().take(self.s_index).cloned(),
                );
                let a = -x[self.s_index] / s;
                let eta_of_y = eta_row.dot(&y).abs();
                // with the convention dη(u, v) = uᵀ M v, the contraction
                // i_Y dη is the row Yᵀ M = (Mᵀ Y)ᵀ
                let contraction = d_eta_matrix.transpose() * &y;
                let residual = (&contraction - &eta_row * a).amax();
                worst_forward = worst_forward.max(eta_of_y / scale).max(residual / scale);
            }

            // backward: lift every characteristic direction of the base
            let theta_base = self.field.characteristic_subspace_at(&base_pt)?;
            for y in theta_base.basis() {
                let contraction = d_eta_matrix.transpose() * y;
                // a is the proportionality factor of i_Y dη against η
                let a = contraction.dot(&eta_row) / eta_row.dot(&eta_row);
                let mut x = DVector::zeros(self.total_chart.dim());
                for (i, v) in y.iter().enumerate() {
                    x[i] = *v;
                }
                x[self.s_index] = -a * s;
                let dist = (x.clone() - kernel.project(&x)).norm() / x.norm().max(1.0);
                worst_backward = worst_backward.max(dist);
            }
        }

        Ok(CharacteristicReport {
            kernel_dim_observed: kernel_dims,
            forward_residual: worst_forward,
            backward_residual: worst_backward,
            ok: worst_forward <= 1e-7 && worst_backward <= 1e-7,
        })
    }
}

/// Sampled verification record for the cover identities.
#[derive(Clone, Debug)]
pub struct CoverReport {
    pub total_dim: usize,
    /// `2(r + 1)` for base rank parameter `r`.
    pub expected_rank: usize,
    pub rank_observed: (usize, usize),
    pub rank_ok: bool,
    /// `dω = 0` at the samples.
    pub closed_ok: bool,
    /// `i_∇ ω = s η` at the samples.
    pub theta_is_contraction_ok: bool,
    /// `dϑ = ω` at the samples.
    pub d_theta_is_omega_ok: bool,
    pub points_checked: usize,
    pub marginal_rank_points: usize,
}

impl CoverReport {
    pub fn all_ok(&self) -> bool {
        self.rank_ok && self.closed_ok && self.theta_is_contraction_ok && self.d_theta_is_omega_ok
    }
}

/// Result of matching `ker ω` with the base characteristic directions.
#[derive(Clone, Debug)]
pub struct CharacteristicReport {
    pub kernel_dim_observed: (usize, usize),
    /// Worst violation of `η(Y) = 0` / `i_Y dη = a η` over kernel vectors.
    pub forward_residual: f64,
    /// Worst distance of a lifted characteristic direction from `ker ω`.
    pub backward_residual: f64,
    pub ok: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::precontact::darboux_model;
    use crate::sample::Sampler;
    use approx::assert_relative_eq;

    fn cover_of(m: usize, r: usize) -> CoverBundle {
        let (_, field) = darboux_model(m, r).unwrap();
        CoverBundle::new(field, r).unwrap()
    }

    fn samples(bundle: &CoverBundle, n: usize) -> Vec<Vec<f64>> {
        Sampler::default().points(bundle.total_chart(), n).unwrap()
    }

    #[test]
    fn cover_of_contact_model_is_symplectic() {
        let bundle = cover_of(3, 1);
        let pts = samples(&bundle, 40);
        let report = bundle.verify(&pts).unwrap();
        assert!(report.all_ok(), "{report:?}");
        assert_eq!(report.rank_observed, (4, 4));
        assert_eq!(report.total_dim, 4);
        // symplectic: trivial kernel everywhere
        for p in &pts {
            assert_eq!(bundle.omega_kernel_at(p).unwrap().dim(), 0);
        }
    }

    #[test]
    fn omega_matrix_matches_hand_expansion() {
        // ω = ds∧dz − p ds∧dq − s dp∧dq on (z, p, q, s)
        let bundle = cover_of(3, 1);
        let m = bundle.omega.matrix_at(&[0.3, 0.7, -0.2, 1.3]).unwrap();
        let p = 0.7;
        let s = 1.3;
        assert_relative_eq!(m[(0, 3)], -1.0);
        assert_relative_eq!(m[(3, 0)], 1.0);
        assert_relative_eq!(m[(2, 3)], p);
        assert_relative_eq!(m[(1, 2)], -s);
        assert_relative_eq!(m[(0, 1)], 0.0);
    }

    #[test]
    fn cover_of_precontact_model_is_presymplectic_of_expected_rank() {
        let bundle = cover_of(4, 1);
        let pts = samples(&bundle, 40);
        let report = bundle.verify(&pts).unwrap();
        assert!(report.all_ok(), "{report:?}");
        assert_eq!(report.total_dim, 5);
        assert_eq!(report.rank_observed, (4, 4)); // 2(r+1), one short of 5
    }

    #[test]
    fn fibre_dilations_rescale_omega_including_negative_factors() {
        let bundle = cover_of(3, 1);
        let pts = samples(&bundle, 25);
        for lambda in [2.0, 0.5, -1.0, -3.5] {
            let res = bundle.scaling_pullback_residual(lambda, &pts).unwrap();
            assert!(res <= 1e-12, "λ = {lambda}: residual {res}");
        }
        assert!(matches!(
            bundle.scaling_map(0.0),
            Err(Error::ZeroScaling)
        ));
    }

    #[test]
    fn lift_rejects_the_zero_fibre() {
        let bundle = cover_of(3, 1);
        assert!(matches!(
            bundle.lift_point(&[0.1, 0.2, 0.3], 0.0),
            Err(Error::ZeroScaling)
        ));
        let lifted = bundle.lift_point(&[0.1, 0.2, 0.3], -0.5).unwrap();
        assert_eq!(lifted, vec![0.1, 0.2, 0.3, -0.5]);
        let (base, s) = bundle.project_point(&lifted);
        assert_eq!(base, vec![0.1, 0.2, 0.3]);
        assert_eq!(s, -0.5);
    }

    #[test]
    fn kernel_matches_characteristic_directions() {
        // base with a spare direction: kernel of ω is one-dimensional and
        // projects onto the characteristic line span{∂u}
        let bundle = cover_of(4, 1);
        let pts = samples(&bundle, 30);
        let report = bundle.characteristic_correspondence_check(&pts).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.kernel_dim_observed, (1, 1));

        // and on a contact base the kernel is trivial on both sides
        let contact = cover_of(3, 1);
        let pts3 = samples(&contact, 30);
        let report3 = contact.characteristic_correspondence_check(&pts3).unwrap();
        assert!(report3.ok);
        assert_eq!(report3.kernel_dim_observed, (0, 0));
    }

    #[test]
    fn conformal_rescaling_couples_fibre_and_spare_direction() {
        // For η' = e^u (dz − p dq), the spare direction only enters the
        // kernel of ω together with a fibre component: ∂u − s ∂s.
        use crate::expr::parse;
        let chart = Chart::checked(
            "conformal",
            vec!["z".into(), "p".into(), "q".into(), "u".into()],
            vec![CoordDomain::Interval(-3.0, 3.0); 4],
        )
        .unwrap();
        let f = parse("exp(u)", &chart).unwrap();
        let p = parse("p", &chart).unwrap();
        let eta = DiffForm::one_form(
            &chart,
            vec![Expr::one(&chart), Expr::zero(&chart), -&p, Expr::zero(&chart)],
        )
        .scaled(&f);
        let bundle = CoverBundle::new(HyperplaneField::new(eta).unwrap(), 1).unwrap();
        let pts = samples(&bundle, 30);
        let report = bundle.characteristic_correspondence_check(&pts).unwrap();
        assert!(report.ok, "{report:?}");
        assert_eq!(report.kernel_dim_observed, (1, 1));
        // spot check at one point: s = 1 makes the kernel direction ∂u − ∂s
        let pt = vec![0.2, 0.5, -0.3, 0.4, 1.0];
        let kernel = bundle.omega_kernel_at(&pt).unwrap();
        let dir = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0, -1.0]);
        assert!(kernel.contains_vector(&dir, 1e-6));
    }

    #[test]
    fn homogeneity_check_accepts_linear_fibre_dependence() {
        let bundle = cover_of(3, 1);
        let chart = bundle.total_chart();
        let pts = samples(&bundle, 20);
        let good = crate::expr::parse("s*(p + z)", chart).unwrap();
        bundle.homogeneity_check(&good, &pts).unwrap();
        let bad = crate::expr::parse("s^2*p", chart).unwrap();
        assert!(matches!(
            bundle.homogeneity_check(&bad, &pts),
            Err(Error::NotHomogeneous { .. })
        ));
    }

    #[test]
    fn fibre_name_collision_is_rejected() {
        let chart = Chart::new("bad", &["z", "s"]);
        let eta = DiffForm::one_form(&chart, vec![Expr::one(&chart), Expr::zero(&chart)]);
        let field = HyperplaneField::new(eta).unwrap();
        assert!(matches!(
            CoverBundle::new(field, 0),
            Err(Error::CoordinateTaken(_))
        ));
    }
}
