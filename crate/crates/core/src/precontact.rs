//! Precontact and contact structures on a chart.
//!
//! A hyperplane field is presented by a defining 1-form `η`; the structure
//! is precontact of rank `2r` when the restriction of `dη` to the
//! hyperplane distribution `C = ker η` has constant rank `2r`. This module
//! checks that definition together with its two classical equivalents —
//! the volume-form conditions `η ∧ (dη)^r ≠ 0`, `η ∧ (dη)^{r+1} = 0`, and
//! the constancy of the characteristic distribution
//! `θ(η) = { v ∈ C : dη(v, ·) vanishes on C }` of dimension `m − 2r − 1` —
//! at a deterministic set of sample points. A structure is contact exactly
//! when the characteristic distribution is trivial, i.e. `m = 2r + 1`.
//!
//! The existence of adapted local coordinates is equivalent to the
//! constant-rank condition and is reported through it rather than checked
//! separately; [`darboux_model`] builds the model structures
//! `η = dz − Σ pᵢ dqⁱ` that realize every rank.

use std::sync::Arc;

use crate::expr::{Chart, CoordDomain, Expr};
use crate::exterior::DiffForm;
use crate::pointlin::{
    antisymmetric_rank, kernel_of, restrict_bilinear, rank_of, Subspace, RANK_REL_TOL,
};
use crate::{Error, Result};

/// Relative threshold on volume-form coefficients: `η ∧ (dη)^k` counts as
/// zero at a point when every coefficient is below this times the natural
/// scale `sup|η| · (sup|dη|)^k` of the product.
pub const VOLUME_REL_TOL: f64 = 1e-9;

/// A hyperplane distribution presented by a defining 1-form.
#[derive(Clone, Debug)]
pub struct HyperplaneField {
    eta: DiffForm,
    d_eta: DiffForm,
}

impl HyperplaneField {
    pub fn new(eta: DiffForm) -> Result<HyperplaneField> {
        if eta.degree() != 1 {
            return Err(Error::DegreeMismatch {
                context: format!("defining form must have degree 1, got {}", eta.degree()),
            });
        }
        if eta.is_structurally_zero() {
            return Err(Error::VanishingForm {
                context: "defining form is identically zero".into(),
            });
        }
        let d_eta = eta.exterior_d();
        Ok(HyperplaneField { eta, d_eta })
    }

    pub fn eta(&self) -> &DiffForm {
        &self.eta
    }

    pub fn d_eta(&self) -> &DiffForm {
        &self.d_eta
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.eta.chart()
    }

    pub fn dim(&self) -> usize {
        self.chart().dim()
    }

    /// The hyperplane `C_y = ker η(y)`. Fails where the form vanishes.
    pub fn kernel_at(&self, point: &[f64]) -> Result<Subspace> {
        let row = self.eta.row_at(point)?;
        if row.amax() <= 1e-12 {
            return Err(Error::VanishingForm {
                context: format!("defining form vanishes at {point:?}"),
            });
        }
        let m = nalgebra::DMatrix::from_rows(&[row.transpose()]);
        Ok(kernel_of(&m, RANK_REL_TOL))
    }

    /// Rank data of `dη` restricted to the hyperplane at a point.
    pub fn restricted_rank_at(&self, point: &[f64]) -> Result<crate::pointlin::AntisymmetricRank> {
        let c = self.kernel_at(point)?;
        let restricted = restrict_bilinear(&self.d_eta.matrix_at(point)?, &c);
        Ok(antisymmetric_rank(&restricted, RANK_REL_TOL))
    }

    /// Rank of `dη` on the whole tangent space (diagnostic; the defining
    /// rank always refers to the restriction).
    pub fn full_rank_at(&self, point: &[f64]) -> Result<crate::pointlin::AntisymmetricRank> {
        Ok(antisymmetric_rank(&self.d_eta.matrix_at(point)?, RANK_REL_TOL))
    }

    /// The characteristic subspace
    /// `θ(η)_y = { v ∈ C_y : dη(v, w) = 0 for all w ∈ C_y }`,
    /// returned in ambient coordinates.
    pub fn characteristic_subspace_at(&self, point: &[f64]) -> Result<Subspace> {
        let c = self.kernel_at(point)?;
        let restricted = restrict_bilinear(&self.d_eta.matrix_at(point)?, &c);
        let inner_kernel = kernel_of(&restricted, RANK_REL_TOL);
        Ok(inner_kernel.map_through(&c.basis_matrix()))
    }
}

/// Sampled verification record for one hyperplane field and rank claim.
#[derive(Clone, Debug)]
pub struct PrecontactReport {
    /// Ambient dimension `m`.
    pub dim: usize,
    /// Claimed rank parameter `r` (restricted rank `2r`).
    pub rank: usize,
    pub points_checked: usize,
    /// `(min, max)` of the restricted rank of `dη` over the samples.
    pub restricted_rank_observed: (usize, usize),
    /// Restricted rank equals `2r` at every sample (also certifies the
    /// existence of adapted local coordinates).
    pub restricted_rank_ok: bool,
    /// `η ∧ (dη)^r` nonzero at every sample.
    pub volume_nonzero_ok: bool,
    /// `η ∧ (dη)^{r+1}` zero at every sample.
    pub next_power_vanishes_ok: bool,
    /// `(min, max)` of `dim θ(η)` over the samples.
    pub characteristic_dim_observed: (usize, usize),
    /// `dim θ(η) = m − 2r − 1` at every sample.
    pub characteristic_dim_ok: bool,
    /// `(min, max)` of the unrestricted rank of `dη` (diagnostic only).
    pub full_rank_observed: (usize, usize),
    /// Number of samples where an antisymmetric rank decision was close to
    /// the threshold; a nonzero count warrants a second look at the input.
    pub marginal_rank_points: usize,
    /// All criteria hold at every sample.
    pub is_precontact: bool,
    /// Precontact with trivial characteristic distribution (`m = 2r + 1`).
    pub is_contact: bool,
    pub notes: Vec<String>,
}

/// Check the three rank criteria for `η` being precontact of rank `2r`
/// at the given sample points.
pub fn verify_precontact(
    field: &HyperplaneField,
    rank: usize,
    points: &[Vec<f64>],
) -> Result<PrecontactReport> {
    let m = field.dim();
    if 2 * rank + 1 > m {
        return Err(Error::RankMismatch {
            context: format!("rank parameter {rank} is impossible in dimension {m}"),
        });
    }
    if points.is_empty() {
        return Err(Error::Invalid("no sample points supplied".into()));
    }

    let eta = field.eta();
    let d_eta = field.d_eta();
    let volume = eta.wedge(&d_eta.wedge_power(rank));
    let next_power = eta.wedge(&d_eta.wedge_power(rank + 1));

    // Natural coefficient scales for the two volume conditions.
    let sup_eta = eta.sup_coeff_at(points)?;
    let sup_d_eta = d_eta.sup_coeff_at(points)?;
    let scale_r = sup_eta * sup_d_eta.powi(rank as i32);
    let scale_r1 = sup_eta * sup_d_eta.powi(rank as i32 + 1);

    let mut restricted_min = usize::MAX;
    let mut restricted_max = 0;
    let mut char_min = usize::MAX;
    let mut char_max = 0;
    let mut full_min = usize::MAX;
    let mut full_max = 0;
    let mut marginal = 0;
    let mut volume_nonzero_ok = true;
    let mut next_power_vanishes_ok = true;

    for p in points {
        let r = field.restricted_rank_at(p)?;
        restricted_min = restricted_min.min(r.rank);
        restricted_max = restricted_max.max(r.rank);
        if r.marginal {
            marginal += 1;
        }

        let f = field.full_rank_at(p)?;
        full_min = full_min.min(f.rank);
        full_max = full_max.max(f.rank);

        let theta = field.characteristic_subspace_at(p)?;
        char_min = char_min.min(theta.dim());
        char_max = char_max.max(theta.dim());

        let vol = volume.sup_coeff_at(std::slice::from_ref(p))?;
        if vol <= VOLUME_REL_TOL * scale_r {
            volume_nonzero_ok = false;
        }
        let next = next_power.sup_coeff_at(std::slice::from_ref(p))?;
        if next > VOLUME_REL_TOL * scale_r1 {
            next_power_vanishes_ok = false;
        }
    }

    let restricted_rank_ok = restricted_min == 2 * rank && restricted_max == 2 * rank;
    let char_target = m - 2 * rank - 1;
    let characteristic_dim_ok = char_min == char_target && char_max == char_target;
    let is_precontact =
        restricted_rank_ok && volume_nonzero_ok && next_power_vanishes_ok && characteristic_dim_ok;
    let is_contact = is_precontact && char_target == 0;

    let mut notes = vec![
        "adapted local coordinates exist iff the restricted rank is constant; \
         reported through that criterion rather than checked separately"
            .to_string(),
    ];
    if full_max > 2 * rank {
        notes.push(format!(
            "dη has unrestricted rank up to {full_max}; the defining rank \
             refers to its restriction to ker η"
        ));
    }
    if marginal > 0 {
        notes.push(format!(
            "{marginal} sample(s) produced near-threshold singular values in \
             rank decisions"
        ));
    }

    Ok(PrecontactReport {
        dim: m,
        rank,
        points_checked: points.len(),
        restricted_rank_observed: (restricted_min, restricted_max),
        restricted_rank_ok,
        volume_nonzero_ok,
        next_power_vanishes_ok,
        characteristic_dim_observed: (char_min, char_max),
        characteristic_dim_ok,
        full_rank_observed: (full_min, full_max),
        marginal_rank_points: marginal,
        is_precontact,
        is_contact,
        notes,
    })
}

/// Pointwise factor `f` with `candidate = f · reference`, by least squares
/// on the coefficient rows. Fails with the residual when the two forms are
/// not proportional at the point.
pub fn conformal_factor_at(
    reference: &DiffForm,
    candidate: &DiffForm,
    point: &[f64],
) -> Result<f64> {
    let a = reference.row_at(point)?;
    let b = candidate.row_at(point)?;
    let denom = a.dot(&a);
    if denom <= 1e-24 {
        return Err(Error::VanishingForm {
            context: format!("reference form vanishes at {point:?}"),
        });
    }
    let f = a.dot(&b) / denom;
    let residual = (&b - &a * f).norm();
    let tol = 1e-8 * (1.0 + b.norm());
    if residual > tol {
        return Err(Error::NotConformal { residual });
    }
    Ok(f)
}

/// The model structure `η = dz − Σ pᵢ dqⁱ` of rank `2r` on an
/// `m`-dimensional chart with coordinates `z, p₁…p_r, q¹…q^r, u¹…u^t`
/// (`t = m − 2r − 1` spare directions; single-letter names when unambiguous).
pub fn darboux_model(m: usize, rank: usize) -> Result<(Arc<Chart>, HyperplaneField)> {
    if 2 * rank + 1 > m {
        return Err(Error::DimensionMismatch {
            context: format!("dimension {m} cannot carry rank parameter {rank}"),
        });
    }
    let spare = m - 2 * rank - 1;
    let mut names: Vec<String> = vec!["z".into()];
    for i in 1..=rank {
        names.push(if rank == 1 { "p".into() } else { format!("p{i}") });
    }
    for i in 1..=rank {
        names.push(if rank == 1 { "q".into() } else { format!("q{i}") });
    }
    for j in 1..=spare {
        names.push(if spare == 1 { "u".into() } else { format!("u{j}") });
    }
    let domains = vec![CoordDomain::Interval(-3.0, 3.0); m];
    let chart = Chart::checked("darboux", names, domains).map_err(Error::from)?;

    let mut coeffs = vec![Expr::zero(&chart); m];
    coeffs[0] = Expr::one(&chart);
    for i in 1..=rank {
        // coefficient of dqⁱ is −pᵢ
        coeffs[rank + i] = -&Expr::coord(&chart, i);
    }
    let eta = DiffForm::one_form(&chart, coeffs);
    Ok((chart, HyperplaneField::new(eta)?))
}

/// Convenience: the unrestricted rank of an arbitrary 2-form at a point.
pub fn two_form_rank_at(form: &DiffForm, point: &[f64]) -> Result<usize> {
    Ok(rank_of(&form.matrix_at(point)?, RANK_REL_TOL))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse;
    use crate::sample::Sampler;
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn sample_box(chart: &Arc<Chart>) -> Vec<Vec<f64>> {
        // keep rank checks away from the p = 0 slice where nothing
        // degenerates but coefficients get small
        Sampler::default().points(chart, 40).unwrap()
    }

    #[test]
    fn three_dimensional_model_is_contact() {
        let (chart, field) = darboux_model(3, 1).unwrap();
        assert_eq!(chart.coords(), &["z", "p", "q"]);
        let report = verify_precontact(&field, 1, &sample_box(&chart)).unwrap();
        assert!(report.is_precontact);
        assert!(report.is_contact);
        assert_eq!(report.restricted_rank_observed, (2, 2));
        assert_eq!(report.characteristic_dim_observed, (0, 0));
        assert_eq!(report.full_rank_observed, (2, 2));
    }

    #[test]
    fn five_dimensional_model_is_contact_of_higher_rank() {
        let (chart, field) = darboux_model(5, 2).unwrap();
        assert_eq!(chart.coords(), &["z", "p1", "p2", "q1", "q2"]);
        let report = verify_precontact(&field, 2, &sample_box(&chart)).unwrap();
        assert!(report.is_precontact);
        assert!(report.is_contact);
        assert_eq!(report.restricted_rank_observed, (4, 4));
    }

    #[test]
    fn four_dimensional_model_is_precontact_but_not_contact() {
        let (chart, field) = darboux_model(4, 1).unwrap();
        assert_eq!(chart.coords(), &["z", "p", "q", "u"]);
        let report = verify_precontact(&field, 1, &sample_box(&chart)).unwrap();
        assert!(report.is_precontact);
        assert!(!report.is_contact);
        assert_eq!(report.characteristic_dim_observed, (1, 1));
        // the spare direction spans the characteristic distribution
        let theta = field
            .characteristic_subspace_at(&[0.1, 0.7, -0.3, 0.4])
            .unwrap();
        let du = DVector::from_vec(vec![0.0, 0.0, 0.0, 1.0]);
        assert!(theta.contains_vector(&du, 1e-6));
    }

    #[test]
    fn wrong_rank_claim_is_detected() {
        let (chart, field) = darboux_model(5, 2).unwrap();
        let report = verify_precontact(&field, 1, &sample_box(&chart)).unwrap();
        assert!(!report.is_precontact);
        assert!(!report.restricted_rank_ok);
        // η∧(dη)^2 does not vanish for the rank-4 structure
        assert!(!report.next_power_vanishes_ok);
    }

    #[test]
    fn conformal_rescaling_keeps_restricted_rank_but_not_full_rank() {
        // η' = e^u (dz − p dq) on a four-dimensional chart: still precontact
        // of restricted rank 2, while dη' has unrestricted rank 4.
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
            vec![
                Expr::one(&chart),
                Expr::zero(&chart),
                -&p,
                Expr::zero(&chart),
            ],
        )
        .scaled(&f);
        let field = HyperplaneField::new(eta).unwrap();
        let pts = sample_box(&chart);
        let report = verify_precontact(&field, 1, &pts).unwrap();
        assert!(report.is_precontact, "report: {report:?}");
        assert_eq!(report.restricted_rank_observed, (2, 2));
        assert_eq!(report.full_rank_observed, (4, 4));
        assert_eq!(report.characteristic_dim_observed, (1, 1));
        assert!(!report.is_contact);
        // the diagnostic note calls out the unrestricted rank
        assert!(report.notes.iter().any(|n| n.contains("unrestricted rank")));
    }

    #[test]
    fn conformal_factor_recovers_the_rescaling() {
        let (chart, field) = darboux_model(3, 1).unwrap();
        let f = parse("exp(z)", &chart).unwrap();
        let rescaled = field.eta().scaled(&f);
        let point = [0.4, 0.2, -0.7];
        let factor = conformal_factor_at(field.eta(), &rescaled, &point).unwrap();
        assert_relative_eq!(factor, (0.4f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn non_proportional_forms_are_rejected_with_residual() {
        let (chart, field) = darboux_model(3, 1).unwrap();
        let dq = DiffForm::d_coord(&chart, 2);
        let err = conformal_factor_at(field.eta(), &dq, &[0.0, 0.5, 0.0]).unwrap_err();
        assert!(matches!(err, Error::NotConformal { .. }));
    }

    #[test]
    fn impossible_rank_requests_are_rejected() {
        assert!(darboux_model(3, 2).is_err());
        let (chart, field) = darboux_model(3, 1).unwrap();
        assert!(verify_precontact(&field, 2, &sample_box(&chart)).is_err());
    }
}
