//! Submanifolds of a (pre)contact manifold and their reductions.
//!
//! A submanifold is described by constraint functions on a chart. This module
//! classifies such submanifolds (transversal / isotropic / coisotropic /
//! Legendrian, judged through their lifts to the scaling cover), attaches
//! moment maps to conformal group actions, analyses moment level sets, and
//! verifies candidate quotient data numerically: a proposed projection map
//! together with a reduced form either reproduces the restricted structure at
//! every sampled point or the report itemises where it fails.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cover::CoverBundle;
use crate::error::{Error, Result};
use crate::expr::{Chart, Expr};
use crate::exterior::{DiffForm, SmoothMap, VecField};
use crate::pointlin::{
    kernel_of, rank_of, restrict_bilinear, Subspace, RANK_REL_TOL, SUBSPACE_ANGLE_TOL,
};
use crate::precontact::{conformal_factor_at, HyperplaneField};
use crate::sample::Sampler;

/// A submanifold counts as transversal to the hyperplane field when the
/// Euclidean norm of the field's defining 1-form restricted to the tangent
/// space exceeds this. Strictly positive: a sampled check cannot certify an
/// exact inequality, so borderline points are reported as non-transversal.
pub const TRANSVERSALITY_THRESHOLD: f64 = 0.05;

/// Both the 1-form and its differential must vanish on the tangent space to
/// this relative precision for the submanifold to count as isotropic.
pub const ISOTROPY_TOL: f64 = 1e-8;

/// Residual bound for quotient verification: fibre alignment and the
/// pullback comparison of the reduced form.
pub const REDUCTION_TOL: f64 = 1e-8;

/// A point must satisfy every constraint to this absolute precision before
/// tangent-space computations are meaningful.
pub const ON_SUBMANIFOLD_TOL: f64 = 1e-9;

/// Structure constants must satisfy antisymmetry and the Jacobi identity to
/// this precision; they are algebra data, not measurements.
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Sampled residual bound for closure of the action: commutators of
/// generators must match their structure-constant combinations.
pub const CLOSURE_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// constraint submanifolds
// ---------------------------------------------------------------------------

/// A submanifold given as the joint zero set of constraint functions,
/// assumed independent (full-rank Jacobian) wherever it is evaluated.
#[derive(Clone)]
pub struct ConstraintSubmanifold {
    chart: Arc<Chart>,
    constraints: Vec<Expr>,
    gradients: Vec<Vec<Expr>>,
}

impl ConstraintSubmanifold {
    /// An empty constraint list describes the whole chart (codimension 0).
    pub fn new(chart: Arc<Chart>, constraints: Vec<Expr>) -> Result<ConstraintSubmanifold> {
        if constraints.len() >= chart.dim() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "{} constraints on a {}-dimensional chart leave no submanifold",
                    constraints.len(),
                    chart.dim()
                ),
            });
        }
        for c in &constraints {
            if c.chart().name() != chart.name() {
                return Err(Error::ChartMismatch {
                    expected: chart.name().to_string(),
                    got: c.chart().name().to_string(),
                });
            }
        }
        let gradients = constraints.iter().map(|c| c.gradient()).collect();
        Ok(ConstraintSubmanifold {
            chart,
            constraints,
            gradients,
        })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn constraints(&self) -> &[Expr] {
        &self.constraints
    }

    pub fn codim(&self) -> usize {
        self.constraints.len()
    }

    /// Check that `point` lies on the zero set to `tol`.
    pub fn contains(&self, point: &[f64], tol: f64) -> Result<()> {
        for c in &self.constraints {
            let v = c.evaluate(point)?;
            if v.abs() > tol {
                return Err(Error::OffSubmanifold {
                    constraint: format!("{c}"),
                    value: v,
                });
            }
        }
        Ok(())
    }

    /// Jacobian of the constraint functions, one row per constraint.
    pub fn jacobian_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.chart.dim();
        let k = self.constraints.len();
        let mut jac = DMatrix::zeros(k, n);
        for (i, row) in self.gradients.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                jac[(i, j)] = g.evaluate(point)?;
            }
        }
        Ok(jac)
    }

    /// Tangent space at a point of the zero set: the kernel of the constraint
    /// Jacobian. Fails if the point is off the set or the constraints are not
    /// independent there.
    pub fn tangent_space_at(&self, point: &[f64]) -> Result<Subspace> {
        self.contains(point, ON_SUBMANIFOLD_TOL)?;
        if self.constraints.is_empty() {
            return Ok(Subspace::full(self.chart.dim()));
        }
        let jac = self.jacobian_at(point)?;
        let rank = rank_of(&jac, RANK_REL_TOL);
        if rank < self.constraints.len() {
            return Err(Error::DegenerateConstraints {
                rank,
                expected: self.constraints.len(),
            });
        }
        Ok(kernel_of(&jac, RANK_REL_TOL))
    }

    /// Draw points on the zero set, avoiding the excluded loci.
    pub fn sample(
        &self,
        sampler: &Sampler,
        count: usize,
        excluded: &[Expr],
    ) -> Result<Vec<Vec<f64>>> {
        sampler.points_on(&self.chart, &self.constraints, count, excluded)
    }

    /// The same constraints read on a larger chart (the zero set times the
    /// extra factor); used to lift a base submanifold to the cover.
    pub fn lifted_to(&self, target: &Arc<Chart>) -> Result<ConstraintSubmanifold> {
        let lifted = self
            .constraints
            .iter()
            .map(|c| c.extend_to(target))
            .collect::<Result<Vec<_>>>()?;
        ConstraintSubmanifold::new(target.clone(), lifted)
    }
}

// ---------------------------------------------------------------------------
// pointwise classification
// ---------------------------------------------------------------------------

/// Pointwise classification of a submanifold of the base manifold.
#[derive(Clone, Debug)]
pub struct SubmanifoldFlags {
    /// Tangent space not contained in the hyperplane field: the norm of the
    /// restricted 1-form exceeds the threshold.
    pub transversal: bool,
    /// Both the 1-form and its differential vanish on the tangent space.
    pub isotropic: bool,
    /// On the cover, the symplectic orthogonal of the lifted tangent space
    /// lies inside the lifted tangent space plus the kernel of the 2-form.
    pub coisotropic: bool,
    /// Isotropic and coisotropic at once.
    pub legendrian: bool,
    /// Norm of the 1-form restricted to the tangent space (the quantity the
    /// transversality threshold is applied to).
    pub eta_norm_on_tangent: f64,
    /// Dimension of the kernel of the cover 2-form restricted to the lifted
    /// tangent space at the lift of the point.
    pub restricted_kernel_dim: usize,
}

/// Classify `sub` (a submanifold of the base) at a base point. Metric data
/// is taken at the point itself; cover-level data at its lift with scaling
/// coordinate 1.
pub fn classify_at(
    bundle: &CoverBundle,
    sub: &ConstraintSubmanifold,
    point: &[f64],
    transversality_threshold: f64,
) -> Result<SubmanifoldFlags> {
    let field = bundle.base_field();
    if sub.chart().name() != field.chart().name() {
        return Err(Error::ChartMismatch {
            expected: field.chart().name().to_string(),
            got: sub.chart().name().to_string(),
        });
    }
    let tn = sub.tangent_space_at(point)?;
    let b = tn.basis_matrix();

    let eta_row = field.eta().row_at(point)?;
    let eta_on_tn = b.transpose() * &eta_row;
    let eta_norm_on_tangent = eta_on_tn.norm();
    let transversal = eta_norm_on_tangent > transversality_threshold;

    let m_deta = field.d_eta().matrix_at(point)?;
    let deta_on_tn = b.transpose() * &m_deta * &b;
    let eta_scale = 1.0 + eta_row.amax();
    let deta_scale = 1.0 + m_deta.amax();
    let eta_vanishes = tn.dim() == 0 || eta_on_tn.amax() <= ISOTROPY_TOL * eta_scale;
    let deta_vanishes = tn.dim() == 0 || deta_on_tn.amax() <= ISOTROPY_TOL * deta_scale;
    let isotropic = eta_vanishes && deta_vanishes;

    let lifted = sub.lifted_to(bundle.total_chart())?;
    let x = bundle.lift_point(point, 1.0)?;
    let tn_lift = lifted.tangent_space_at(&x)?;
    let m_omega = bundle.omega().matrix_at(&x)?;
    let pairing_rows = tn_lift.basis_matrix().transpose() * &m_omega;
    let omega_orthogonal = kernel_of(&pairing_rows, RANK_REL_TOL);
    let enlarged = tn_lift.sum(&bundle.omega_kernel_at(&x)?);
    let coisotropic = omega_orthogonal.is_subspace_of(&enlarged, SUBSPACE_ANGLE_TOL);

    let restricted_kernel_dim = restricted_kernel_at(bundle, &lifted, &x)?.dim();

    Ok(SubmanifoldFlags {
        transversal,
        isotropic,
        coisotropic,
        legendrian: isotropic && coisotropic,
        eta_norm_on_tangent,
        restricted_kernel_dim,
    })
}

/// Aggregate classification over a batch of points on the submanifold.
#[derive(Clone, Debug)]
pub struct ClassificationReport {
    pub points_checked: usize,
    pub transversal_count: usize,
    pub isotropic_count: usize,
    pub coisotropic_count: usize,
    pub legendrian_count: usize,
    /// Observed range of the restricted-kernel dimension on the cover.
    pub kernel_dim_observed: (usize, usize),
    /// Whether that dimension (equivalently the restricted rank) was the
    /// same at every sampled point.
    pub constant_rank: bool,
    pub notes: Vec<String>,
}

/// Classify a submanifold at each of the given on-set base points and
/// tabulate the flags.
pub fn classify_submanifold(
    bundle: &CoverBundle,
    sub: &ConstraintSubmanifold,
    points: &[Vec<f64>],
    transversality_threshold: f64,
) -> Result<ClassificationReport> {
    if points.is_empty() {
        return Err(Error::Invalid(
            "classification needs at least one sample point".into(),
        ));
    }
    let mut transversal_count = 0;
    let mut isotropic_count = 0;
    let mut coisotropic_count = 0;
    let mut legendrian_count = 0;
    let mut dim_min = usize::MAX;
    let mut dim_max = 0;
    for p in points {
        let flags = classify_at(bundle, sub, p, transversality_threshold)?;
        transversal_count += flags.transversal as usize;
        isotropic_count += flags.isotropic as usize;
        coisotropic_count += flags.coisotropic as usize;
        legendrian_count += flags.legendrian as usize;
        dim_min = dim_min.min(flags.restricted_kernel_dim);
        dim_max = dim_max.max(flags.restricted_kernel_dim);
    }
    let constant_rank = dim_min == dim_max;
    let mut notes = Vec::new();
    if constant_rank {
        notes.push(format!(
            "restricted kernel dimension is {} at every sampled point",
            dim_min
        ));
    } else {
        notes.push(format!(
            "restricted kernel dimension varies between {} and {} across samples",
            dim_min, dim_max
        ));
    }
    Ok(ClassificationReport {
        points_checked: points.len(),
        transversal_count,
        isotropic_count,
        coisotropic_count,
        legendrian_count,
        kernel_dim_observed: (dim_min, dim_max),
        constant_rank,
        notes,
    })
}

/// Kernel of the cover 2-form restricted to the tangent space of a
/// submanifold of the total space, expressed in ambient coordinates.
pub fn restricted_kernel_at(
    bundle: &CoverBundle,
    sub: &ConstraintSubmanifold,
    point: &[f64],
) -> Result<Subspace> {
    if sub.chart().name() != bundle.total_chart().name() {
        return Err(Error::ChartMismatch {
            expected: bundle.total_chart().name().to_string(),
            got: sub.chart().name().to_string(),
        });
    }
    let tn = sub.tangent_space_at(point)?;
    let m = bundle.omega().matrix_at(point)?;
    let restricted = restrict_bilinear(&m, &tn);
    let small_kernel = kernel_of(&restricted, RANK_REL_TOL);
    Ok(small_kernel.map_through(&tn.basis_matrix()))
}

// ---------------------------------------------------------------------------
// conformal group actions
// ---------------------------------------------------------------------------

/// A finite-dimensional Lie algebra acting by conformal vector fields:
/// generators ξ_i on the base chart together with structure constants
/// c^l_{ij} for [ξ_i, ξ_j] = Σ_l c^l_{ij} ξ_l.
#[derive(Clone, Debug)]
pub struct ActionSpec {
    names: Vec<String>,
    fields: Vec<VecField>,
    /// structure[l][(i, j)] = c^l_{ij}.
    structure: Vec<DMatrix<f64>>,
}

impl ActionSpec {
    pub fn new(
        names: Vec<String>,
        fields: Vec<VecField>,
        structure: Vec<DMatrix<f64>>,
    ) -> Result<ActionSpec> {
        let k = fields.len();
        if k == 0 {
            return Err(Error::Invalid("an action needs at least one generator".into()));
        }
        if names.len() != k || structure.len() != k {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "action with {} generators has {} names and {} structure matrices",
                    k,
                    names.len(),
                    structure.len()
                ),
            });
        }
        let chart = fields[0].chart().name().to_string();
        for f in &fields[1..] {
            if f.chart().name() != chart {
                return Err(Error::ChartMismatch {
                    expected: chart,
                    got: f.chart().name().to_string(),
                });
            }
        }
        for (l, c) in structure.iter().enumerate() {
            if c.nrows() != k || c.ncols() != k {
                return Err(Error::DimensionMismatch {
                    context: format!(
                        "structure matrix {} is {}x{}, expected {}x{}",
                        l,
                        c.nrows(),
                        c.ncols(),
                        k,
                        k
                    ),
                });
            }
            let skew = c + c.transpose();
            if skew.amax() > STRUCTURE_TOL {
                return Err(Error::Invalid(format!(
                    "structure constants are not antisymmetric in the lower indices \
                     (worst violation {:.3e})",
                    skew.amax()
                )));
            }
        }
        // Jacobi identity: the cyclic sum of c^m_{ij} c^l_{mk} must vanish.
        for l in 0..k {
            for i in 0..k {
                for j in 0..k {
                    for kk in 0..k {
                        let mut total = 0.0;
                        for m in 0..k {
                            total += structure[m][(i, j)] * structure[l][(m, kk)]
                                + structure[m][(j, kk)] * structure[l][(m, i)]
                                + structure[m][(kk, i)] * structure[l][(m, j)];
                        }
                        if total.abs() > STRUCTURE_TOL {
                            return Err(Error::Invalid(format!(
                                "structure constants violate the Jacobi identity \
                                 at (l,i,j,k) = ({l},{i},{j},{kk}): residual {total:.3e}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(ActionSpec {
            names,
            fields,
            structure,
        })
    }

    /// Commuting generators: all structure constants zero.
    pub fn abelian(names: Vec<String>, fields: Vec<VecField>) -> Result<ActionSpec> {
        let k = fields.len();
        let structure = vec![DMatrix::zeros(k, k); k];
        ActionSpec::new(names, fields, structure)
    }

    pub fn dim(&self) -> usize {
        self.fields.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn fields(&self) -> &[VecField] {
        &self.fields
    }

    pub fn structure(&self) -> &[DMatrix<f64>] {
        &self.structure
    }

    /// All generators identically zero (the trivial action).
    pub fn is_trivial(&self) -> bool {
        self.fields
            .iter()
            .all(|f| f.components().iter().all(|c| c.is_zero()))
    }

    /// Conformal factor of generator `i` at a base point: the f with
    /// L_{ξ_i} η = f·η there.
    pub fn conformal_factor_at(
        &self,
        field: &HyperplaneField,
        i: usize,
        point: &[f64],
    ) -> Result<f64> {
        let lie = field.eta().lie_derivative(&self.fields[i]);
        conformal_factor_at(field.eta(), &lie, point)
    }

    /// Value of the lift of generator `i` at a point of the total space:
    /// ξ̂_i = ξ_i − f_i·s∂_s, the unique lift preserving the cover 2-form.
    pub fn lifted_field_at(
        &self,
        bundle: &CoverBundle,
        i: usize,
        total_point: &[f64],
    ) -> Result<DVector<f64>> {
        let (base, s) = bundle.project_point(total_point);
        let f = self.conformal_factor_at(bundle.base_field(), i, &base)?;
        let v = self.fields[i].value_at(&base)?;
        let n = bundle.total_chart().dim();
        let mut out = DVector::zeros(n);
        for (j, val) in v.iter().enumerate() {
            out[j] = *val;
        }
        out[bundle.s_index()] = -f * s;
        Ok(out)
    }

    /// Sampled validation against a hyperplane field: every generator must be
    /// conformal for the defining form, and commutators must close onto the
    /// declared structure constants.
    pub fn validate_on(&self, field: &HyperplaneField, points: &[Vec<f64>]) -> Result<()> {
        let k = self.dim();
        for i in 0..k {
            for p in points {
                self.conformal_factor_at(field, i, p)?;
            }
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let comm = self.fields[i].commutator(&self.fields[j]);
                let mut expected = VecField::zero(self.fields[i].chart());
                for (l, xi) in self.fields.iter().enumerate() {
                    let c = self.structure[l][(i, j)];
                    if c != 0.0 {
                        expected = &expected + &xi.scaled(&Expr::constant(xi.chart(), c));
                    }
                }
                for p in points {
                    let got = comm.value_at(p)?;
                    let want = expected.value_at(p)?;
                    let scale = 1.0 + got.amax().max(want.amax());
                    let residual = (&got - &want).amax();
                    if residual > CLOSURE_TOL * scale {
                        return Err(Error::Invalid(format!(
                            "action does not close: [{}, {}] deviates from its \
                             structure-constant combination by {:.3e} at a sample",
                            self.names[i], self.names[j], residual
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// moment maps
// ---------------------------------------------------------------------------

/// Moment map of a conformal action, expressed on the total chart of the
/// cover. The sign pairs each generator with the fundamental field of the
/// lifted flow, oriented so that dJ_i = i_{ξ̂_i} ω for the form-preserving
/// lift ξ̂_i = ξ_i − f_i·s∂_s; concretely J_i = −s·⟨η, ξ_i⟩.
#[derive(Clone)]
pub struct MomentMap {
    total_chart: Arc<Chart>,
    base_chart: Arc<Chart>,
    exprs: Vec<Expr>,
    gradients: Vec<Vec<Expr>>,
    /// ⟨η, ξ_i⟩ on the base chart; the zero level of J_i off s = 0.
    base_pairings: Vec<Expr>,
}

/// Build the moment map of `action` on the cover.
pub fn moment_map(bundle: &CoverBundle, action: &ActionSpec) -> Result<MomentMap> {
    let field = bundle.base_field();
    if action.fields()[0].chart().name() != field.chart().name() {
        return Err(Error::ChartMismatch {
            expected: field.chart().name().to_string(),
            got: action.fields()[0].chart().name().to_string(),
        });
    }
    let total = bundle.total_chart();
    let s = Expr::coord(total, bundle.s_index());
    let mut exprs = Vec::with_capacity(action.dim());
    let mut base_pairings = Vec::with_capacity(action.dim());
    for xi in action.fields() {
        let pairing = field.eta().interior(xi)?.coeff(&[]);
        let lifted = pairing.extend_to(total)?;
        exprs.push((-&(&s * &lifted)).fold());
        base_pairings.push(pairing);
    }
    let gradients = exprs.iter().map(|e| e.gradient()).collect();
    Ok(MomentMap {
        total_chart: total.clone(),
        base_chart: field.chart().clone(),
        exprs,
        gradients,
        base_pairings,
    })
}

impl MomentMap {
    pub fn dim(&self) -> usize {
        self.exprs.len()
    }

    pub fn exprs(&self) -> &[Expr] {
        &self.exprs
    }

    pub fn value_at(&self, total_point: &[f64]) -> Result<Vec<f64>> {
        self.exprs
            .iter()
            .map(|e| e.evaluate(total_point).map_err(Error::from))
            .collect()
    }

    /// Jacobian of the moment map, one row per algebra generator.
    pub fn jacobian_at(&self, total_point: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.total_chart.dim();
        let k = self.exprs.len();
        let mut jac = DMatrix::zeros(k, n);
        for (i, row) in self.gradients.iter().enumerate() {
            for (j, g) in row.iter().enumerate() {
                jac[(i, j)] = g.evaluate(total_point)?;
            }
        }
        Ok(jac)
    }

    /// The level set J = μ as a constraint submanifold of the total space.
    pub fn level_set(&self, mu: &[f64]) -> Result<ConstraintSubmanifold> {
        if mu.len() != self.exprs.len() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "level value has {} components for a {}-component moment map",
                    mu.len(),
                    self.exprs.len()
                ),
            });
        }
        let constraints = self
            .exprs
            .iter()
            .zip(mu)
            .map(|(e, m)| (e - &Expr::constant(&self.total_chart, *m)).fold())
            .collect();
        ConstraintSubmanifold::new(self.total_chart.clone(), constraints)
    }

    /// The shadow of the zero level on the base: since J_i = −s·⟨η, ξ_i⟩ and
    /// s never vanishes, the zero level projects onto the joint zero set of
    /// the pairings ⟨η, ξ_i⟩. Pairings that vanish identically impose no
    /// condition and are dropped.
    pub fn zero_level_base(&self) -> Result<ConstraintSubmanifold> {
        let constraints: Vec<Expr> = self
            .base_pairings
            .iter()
            .filter(|e| !e.fold().is_zero())
            .map(|e| e.fold())
            .collect();
        ConstraintSubmanifold::new(self.base_chart.clone(), constraints)
    }

    /// The saturation of the level μ under the scaling action: the union of
    /// the levels λμ over nonzero λ. For μ = 0 this is the zero level itself;
    /// otherwise it is cut out by the proportionality conditions
    /// J_iμ_j − J_jμ_i = 0 with the locus ⟨J, μ⟩ = 0 excluded.
    pub fn saturated_level(&self, mu: &[f64]) -> Result<(ConstraintSubmanifold, Vec<Expr>)> {
        if mu.iter().all(|m| *m == 0.0) {
            return Ok((self.level_set(mu)?, Vec::new()));
        }
        let k = self.exprs.len();
        let mut constraints = Vec::new();
        for i in 0..k {
            for j in (i + 1)..k {
                let cross = (&(&self.exprs[i] * &Expr::constant(&self.total_chart, mu[j]))
                    - &(&self.exprs[j] * &Expr::constant(&self.total_chart, mu[i])))
                    .fold();
                if !cross.is_zero() {
                    constraints.push(cross);
                }
            }
        }
        let mut pairing = Expr::zero(&self.total_chart);
        for (e, m) in self.exprs.iter().zip(mu) {
            if *m != 0.0 {
                pairing = &pairing + &(e * &Expr::constant(&self.total_chart, *m));
            }
        }
        let sub = ConstraintSubmanifold::new(self.total_chart.clone(), constraints)?;
        Ok((sub, vec![pairing.fold()]))
    }
}

/// The subspace of vectors whose pairing with every given vector under the
/// cover 2-form vanishes.
pub fn omega_orthogonal_at(
    bundle: &CoverBundle,
    vectors: &[DVector<f64>],
    total_point: &[f64],
) -> Result<Subspace> {
    let n = bundle.total_chart().dim();
    let m = bundle.omega().matrix_at(total_point)?;
    let span = Subspace::spanned_by(n, vectors);
    let rows = span.basis_matrix().transpose() * &m;
    Ok(kernel_of(&rows, RANK_REL_TOL))
}

/// Check that the kernel of the moment-map differential equals the
/// 2-form-orthogonal of the span of the lifted generators at a point.
pub fn moment_kernel_check(
    bundle: &CoverBundle,
    action: &ActionSpec,
    moment: &MomentMap,
    total_point: &[f64],
) -> Result<bool> {
    let jac = moment.jacobian_at(total_point)?;
    let ker = kernel_of(&jac, RANK_REL_TOL);
    let lifts = (0..action.dim())
        .map(|i| action.lifted_field_at(bundle, i, total_point))
        .collect::<Result<Vec<_>>>()?;
    let orth = omega_orthogonal_at(bundle, &lifts, total_point)?;
    Ok(ker.approx_eq(&orth, SUBSPACE_ANGLE_TOL))
}

/// The annihilator ideal of a momentum value: vectors v in the algebra with
/// ⟨μ, v⟩ = 0 and Σ_i c^l_{ij} v^i μ_l = 0 for every j.
pub fn g0mu(action: &ActionSpec, mu: &[f64]) -> Result<Subspace> {
    let k = action.dim();
    if mu.len() != k {
        return Err(Error::DimensionMismatch {
            context: format!(
                "momentum value has {} components for a {}-dimensional algebra",
                mu.len(),
                k
            ),
        });
    }
    let mut m = DMatrix::zeros(k + 1, k);
    for (i, v) in mu.iter().enumerate() {
        m[(0, i)] = *v;
    }
    for j in 0..k {
        for i in 0..k {
            let mut entry = 0.0;
            for (l, c) in action.structure().iter().enumerate() {
                entry += c[(i, j)] * mu[l];
            }
            m[(1 + j, i)] = entry;
        }
    }
    Ok(kernel_of(&m, RANK_REL_TOL))
}

// ---------------------------------------------------------------------------
// quotient verification
// ---------------------------------------------------------------------------

/// Base-level quotient data: a projection of the base submanifold together
/// with the reduced 1-form its image is claimed to carry.
#[derive(Clone)]
pub struct BaseQuotient {
    /// Projection from the base chart onto the reduced base chart.
    pub map: SmoothMap,
    /// Claimed reduced 1-form on the reduced base chart.
    pub eta0: DiffForm,
    /// The base submanifold the projection is restricted to.
    pub sub: ConstraintSubmanifold,
}

/// Candidate quotient of a submanifold of the cover: a projection map and
/// the reduced 2-form, optionally with matching base-level data.
#[derive(Clone)]
pub struct QuotientData {
    /// Projection from the total chart onto the reduced chart.
    pub map: SmoothMap,
    /// Claimed reduced 2-form on the reduced chart.
    pub omega0: DiffForm,
    pub base: Option<BaseQuotient>,
}

/// Outcome of checking candidate quotient data at sampled points.
#[derive(Clone, Debug)]
pub struct ReductionReport {
    pub points_checked: usize,
    /// Dimension of the reduced chart.
    pub reduced_dim: usize,
    /// The projection restricted to the tangent spaces has full rank
    /// (equal to the reduced dimension) at every sample.
    pub submersion_ok: bool,
    /// Every restricted-kernel vector is annihilated by the projection
    /// Jacobian: the degenerate directions point along the fibres.
    pub fibre_alignment_ok: bool,
    /// The pullback of the reduced form through the projection matches the
    /// cover 2-form on the tangent spaces.
    pub pullback_ok: bool,
    /// Base-level comparison (image of the hyperplane distribution equals
    /// the reduced distribution), when base data was supplied.
    pub base_distribution_ok: Option<bool>,
    pub max_fibre_residual: f64,
    pub max_pullback_residual: f64,
    /// One line per failed check, tagged with the sample index.
    pub failures: Vec<String>,
}

impl ReductionReport {
    pub fn all_ok(&self) -> bool {
        self.submersion_ok
            && self.fibre_alignment_ok
            && self.pullback_ok
            && self.base_distribution_ok.unwrap_or(true)
    }
}

/// Verify candidate quotient data for a submanifold of the cover at the given
/// on-set points of the total space: the projection must be a submersion of
/// the submanifold, kill exactly the degenerate directions, and pull the
/// reduced form back to the restriction of the cover form. When base-level
/// data is present, the image of the hyperplane distribution under the base
/// projection is compared with the kernel of the reduced 1-form.
pub fn verify_reduction(
    bundle: &CoverBundle,
    sub: &ConstraintSubmanifold,
    quotient: &QuotientData,
    points: &[Vec<f64>],
) -> Result<ReductionReport> {
    if points.is_empty() {
        return Err(Error::Invalid(
            "quotient verification needs at least one sample point".into(),
        ));
    }
    if sub.chart().name() != bundle.total_chart().name() {
        return Err(Error::ChartMismatch {
            expected: bundle.total_chart().name().to_string(),
            got: sub.chart().name().to_string(),
        });
    }
    let pulled = quotient.omega0.pullback(&quotient.map)?;
    let reduced_dim = quotient.map.target().dim();

    let mut submersion_ok = true;
    let mut fibre_alignment_ok = true;
    let mut pullback_ok = true;
    let mut base_distribution_ok: Option<bool> = quotient.base.as_ref().map(|_| true);
    let mut max_fibre_residual: f64 = 0.0;
    let mut max_pullback_residual: f64 = 0.0;
    let mut failures = Vec::new();

    for (idx, x) in points.iter().enumerate() {
        sub.contains(x, ON_SUBMANIFOLD_TOL)?;
        let tn = sub.tangent_space_at(x)?;
        let b = tn.basis_matrix();
        let jac = quotient.map.jacobian_at(x)?;

        let restricted_jac = &jac * &b;
        let rank = rank_of(&restricted_jac, RANK_REL_TOL);
        if rank != reduced_dim {
            submersion_ok = false;
            failures.push(format!(
                "sample {idx}: projection has rank {rank} on the tangent space, \
                 expected {reduced_dim}"
            ));
        }

        let kernel = restricted_kernel_at(bundle, sub, x)?;
        for v in kernel.basis() {
            let residual = (&jac * v).amax();
            max_fibre_residual = max_fibre_residual.max(residual);
            if residual > REDUCTION_TOL {
                fibre_alignment_ok = false;
                failures.push(format!(
                    "sample {idx}: a degenerate direction survives the projection \
                     (residual {residual:.3e})"
                ));
            }
        }

        let m_pull = pulled.matrix_at(x)?;
        let m_omega = bundle.omega().matrix_at(x)?;
        let diff = b.transpose() * (&m_pull - &m_omega) * &b;
        let scale = 1.0 + m_omega.amax();
        let residual = diff.amax() / scale;
        max_pullback_residual = max_pullback_residual.max(residual);
        if residual > REDUCTION_TOL {
            pullback_ok = false;
            failures.push(format!(
                "sample {idx}: pullback of the reduced form deviates from the cover \
                 form on the tangent space (relative residual {residual:.3e})"
            ));
        }

        if let Some(bq) = &quotient.base {
            let (y, _s) = bundle.project_point(x);
            let tn_base = bq.sub.tangent_space_at(&y)?;
            let c = bundle.base_field().kernel_at(&y)?;
            let c_tangent = c.intersect(&tn_base);
            let jac0 = bq.map.jacobian_at(&y)?;
            // Push the intersection forward by hand: the basis vectors are
            // unit length, so images below the Jacobian scale are zero for
            // our purposes (a relative-rank span would keep them).
            let jac_scale = 1.0 + jac0.amax();
            let image_vectors: Vec<DVector<f64>> = c_tangent
                .basis()
                .iter()
                .map(|v| &jac0 * v)
                .filter(|w| w.norm() > REDUCTION_TOL * jac_scale)
                .collect();
            let image = Subspace::spanned_by(jac0.nrows(), &image_vectors);
            let y0 = bq.map.eval(&y)?;
            let row0 = bq.eta0.row_at(&y0)?;
            let row_matrix = DMatrix::from_rows(&[row0.transpose()]);
            let c0 = kernel_of(&row_matrix, RANK_REL_TOL);
            if !image.approx_eq(&c0, SUBSPACE_ANGLE_TOL) {
                base_distribution_ok = Some(false);
                failures.push(format!(
                    "sample {idx}: image of the hyperplane distribution (dim {}) does \
                     not match the reduced distribution (dim {})",
                    image.dim(),
                    c0.dim()
                ));
            }
        }
    }

    Ok(ReductionReport {
        points_checked: points.len(),
        reduced_dim,
        submersion_ok,
        fibre_alignment_ok,
        pullback_ok,
        base_distribution_ok,
        max_fibre_residual,
        max_pullback_residual,
        failures,
    })
}

// ---------------------------------------------------------------------------
// end-to-end level-set reduction
// ---------------------------------------------------------------------------

/// Full level-set analysis for a conformal action: moment map, level set of
/// the requested momentum, sampled regularity and kernel identities, and —
/// when quotient data is supplied for the zero level — quotient verification.
#[derive(Clone, Debug)]
pub struct MwmReport {
    pub mu: Vec<f64>,
    /// All generators vanish identically; nothing to reduce.
    pub trivial_action: bool,
    /// Generators are conformal and close onto the structure constants at
    /// the sampled points.
    pub action_valid: bool,
    /// Dimension of the annihilator ideal of μ inside the algebra.
    pub g0mu_dim: usize,
    /// Codimension of the level set in the total space.
    pub level_codim: usize,
    pub points_checked: usize,
    /// The moment Jacobian kept full rank at every sampled level point
    /// (rank equal to the number of generators), and the level set's tangent
    /// space agreed with the Jacobian kernel — consistent with the level
    /// value being weakly regular. A sampled check cannot certify this.
    pub weak_regularity_ok: bool,
    /// ker(dJ) matched the 2-form-orthogonal of the lifted generators at
    /// every sampled point.
    pub moment_kernel_ok: bool,
    /// The kernel of the cover form restricted to the scaling-saturated
    /// level set matched the lifted annihilator ideal plus the kernel of the
    /// cover form at every sampled point.
    pub kernel_identity_ok: bool,
    /// For the zero level: how many sampled base points of the level shadow
    /// were transversal to the hyperplane field, out of how many.
    pub base_transversal: Option<(usize, usize)>,
    /// Nonzero momentum: the saturated level is an open subset and the
    /// reduced structure is the restriction of the original to it.
    pub open_dense_restriction: bool,
    pub reduction: Option<ReductionReport>,
    pub notes: Vec<String>,
}

impl MwmReport {
    pub fn all_ok(&self) -> bool {
        if self.trivial_action {
            return true;
        }
        self.action_valid
            && self.weak_regularity_ok
            && self.moment_kernel_ok
            && self.kernel_identity_ok
            && self.reduction.as_ref().map_or(true, |r| r.all_ok())
    }
}

/// Run the level-set reduction pipeline for `action` at momentum `mu`.
/// `excluded` lists total-chart loci to avoid while sampling level sets.
pub fn mwm_pipeline(
    bundle: &CoverBundle,
    action: &ActionSpec,
    mu: &[f64],
    quotient: Option<&QuotientData>,
    sampler: &Sampler,
    count: usize,
    excluded: &[Expr],
) -> Result<MwmReport> {
    if mu.len() != action.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "momentum has {} components for a {}-generator action",
                mu.len(),
                action.dim()
            ),
        });
    }
    let mut notes = Vec::new();

    if action.is_trivial() {
        notes.push(
            "the action is trivial: every point sits on the zero level and the \
             quotient is the identity"
                .to_string(),
        );
        return Ok(MwmReport {
            mu: mu.to_vec(),
            trivial_action: true,
            action_valid: true,
            g0mu_dim: action.dim(),
            level_codim: 0,
            points_checked: 0,
            weak_regularity_ok: true,
            moment_kernel_ok: true,
            kernel_identity_ok: true,
            base_transversal: None,
            open_dense_restriction: false,
            reduction: None,
            notes,
        });
    }

    let base_points = sampler.points(bundle.base_chart(), count.min(50))?;
    let action_valid = match action.validate_on(bundle.base_field(), &base_points) {
        Ok(()) => true,
        Err(e) => {
            notes.push(format!("action validation failed: {e}"));
            false
        }
    };

    let moment = moment_map(bundle, action)?;
    let g0 = g0mu(action, mu)?;
    let zero_level = mu.iter().all(|m| *m == 0.0);

    let level = moment.level_set(mu)?;
    let samples = level.sample(sampler, count, excluded)?;

    let k = action.dim();
    let mut weak_regularity_ok = true;
    let mut moment_kernel_ok = true;
    for x in &samples {
        let jac = moment.jacobian_at(x)?;
        let rank = rank_of(&jac, RANK_REL_TOL);
        let tangent = level.tangent_space_at(x)?;
        let jac_kernel = kernel_of(&jac, RANK_REL_TOL);
        if rank != k || !tangent.approx_eq(&jac_kernel, SUBSPACE_ANGLE_TOL) {
            weak_regularity_ok = false;
        }
        if !moment_kernel_check(bundle, action, &moment, x)? {
            moment_kernel_ok = false;
        }
    }
    notes.push(format!(
        "moment Jacobian kept rank {k} at {} sampled level points; consistent with \
         a weakly regular value (sampling cannot certify it)",
        samples.len()
    ));

    // Kernel identity on the scaling-saturated level set.
    let (saturated, saturation_excluded) = moment.saturated_level(mu)?;
    let mut ex: Vec<Expr> = excluded.to_vec();
    ex.extend(saturation_excluded);
    let saturated_samples = saturated.sample(sampler, count, &ex)?;
    let g0_basis = g0.basis();
    let mut kernel_identity_ok = true;
    for x in &saturated_samples {
        let mut expected_vectors: Vec<DVector<f64>> = Vec::new();
        for coeffs in g0_basis {
            let mut v = DVector::zeros(bundle.total_chart().dim());
            for i in 0..k {
                if coeffs[i] != 0.0 {
                    v += action.lifted_field_at(bundle, i, x)?.scale(coeffs[i]);
                }
            }
            expected_vectors.push(v);
        }
        let mut expected = Subspace::spanned_by(bundle.total_chart().dim(), &expected_vectors);
        expected = expected.sum(&bundle.omega_kernel_at(x)?);
        let observed = restricted_kernel_at(bundle, &saturated, x)?;
        if !observed.approx_eq(&expected, SUBSPACE_ANGLE_TOL) {
            kernel_identity_ok = false;
        }
    }

    let mut base_transversal = None;
    let mut open_dense_restriction = false;
    if zero_level {
        let shadow = moment.zero_level_base()?;
        if shadow.codim() == 0 {
            notes.push(
                "every pairing with the defining form vanishes identically; the zero \
                 level projects onto the whole base"
                    .to_string(),
            );
        } else {
            let base_excluded: Vec<Expr> = Vec::new();
            let shadow_points = shadow.sample(sampler, count, &base_excluded)?;
            let mut transversal = 0;
            for y in &shadow_points {
                let flags = classify_at(bundle, &shadow, y, TRANSVERSALITY_THRESHOLD)?;
                transversal += flags.transversal as usize;
            }
            base_transversal = Some((transversal, shadow_points.len()));
        }
    } else {
        open_dense_restriction = true;
        notes.push(format!(
            "nonzero momentum: the scaling-saturated level is an open subset \
             (codimension {}), and the reduced structures are the restrictions of \
             the originals to it; the annihilator ideal has dimension {}",
            saturated.codim(),
            g0.dim()
        ));
    }

    let reduction = match (quotient, zero_level) {
        (Some(q), true) => Some(verify_reduction(bundle, &level, q, &samples)?),
        (Some(_), false) => {
            notes.push(
                "quotient data ignored: nonzero levels reduce by restriction, not by \
                 projection"
                    .to_string(),
            );
            None
        }
        (None, _) => None,
    };

    Ok(MwmReport {
        mu: mu.to_vec(),
        trivial_action: false,
        action_valid,
        g0mu_dim: g0.dim(),
        level_codim: level.codim(),
        points_checked: samples.len(),
        weak_regularity_ok,
        moment_kernel_ok,
        kernel_identity_ok,
        base_transversal,
        open_dense_restriction,
        reduction,
        notes,
    })
}

// ---------------------------------------------------------------------------
