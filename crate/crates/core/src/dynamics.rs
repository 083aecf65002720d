//! Contact Hamiltonian dynamics: Reeb fields, Hamiltonian fields, the
//! Jacobi bracket, and fixed-step integration of the resulting flows.
//!
//! Conventions. A Hamiltonian `Ĥ` on the base generates the field `X_Ĥ`
//! cut out by
//!
//! ```text
//!     i_{X_Ĥ} η  = −Ĥ,        i_{X_Ĥ} dη = dĤ − R(Ĥ) η,
//! ```
//!
//! where `R` is the Reeb field (`i_R η = 1`, `i_R dη = 0`). On the model
//! chart `η = dz − Σ pᵢ dqⁱ` these equations have the closed-form solution
//!
//! ```text
//!     X_Ĥ = (∂Ĥ/∂pᵢ) ∂_{qⁱ} − (∂Ĥ/∂qⁱ + pᵢ ∂Ĥ/∂z) ∂_{pᵢ}
//!           + (pᵢ ∂Ĥ/∂pᵢ − Ĥ) ∂_z,
//! ```
//!
//! implemented symbolically by [`DarbouxDynamics`]; at arbitrary points of
//! arbitrary structures the same equations are solved numerically by
//! [`contact_field_at`]. Hamiltonian fields are conformal symmetries:
//! `L_{X_Ĥ} η = −R(Ĥ) η`.
//!
//! On the scaling cover, `Ĥ` lifts to the fibrewise-linear Hamiltonian
//! `H = −s Ĥ` whose field `X_H = X_Ĥ + R(Ĥ) s ∂s` satisfies
//! `i_{X_H} ω = −dH`; the Reeb field is recovered as the field of `H = s`.
//!
//! The Jacobi bracket is computed two independent ways — a coordinate
//! formula and the pairing `{F, G} = η([X_F, X_G])` through symbolic
//! commutators — and [`DarbouxDynamics::bracket_checked`] insists they
//! agree at sample points before returning either.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::cover::CoverBundle;
use crate::expr::{Chart, Expr};
use crate::exterior::{DiffForm, VecField};
use crate::pointlin::{solve_affine, AffineSolution, RANK_REL_TOL};
use crate::precontact::HyperplaneField;
use crate::sample::Sampler;
use crate::{Error, Result};

/// Maximum allowed relative disagreement between the two bracket routes.
pub const BRACKET_CROSS_TOL: f64 = 1e-7;

// ---------------------------------------------------------------------------
// model-chart layout
// ---------------------------------------------------------------------------

/// Positions of the model coordinates `z, pᵢ, qⁱ, uʲ` on a chart.
#[derive(Clone, Debug, PartialEq)]
pub struct DarbouxLayout {
    pub z: usize,
    /// `(pᵢ, qⁱ)` index pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Spare (characteristic) coordinate indices.
    pub spares: Vec<usize>,
}

impl DarbouxLayout {
    /// Recognize the model naming scheme: `z`, then `p`/`q` (or
    /// `p1…pk`/`q1…qk`), then optionally `u` (or `u1…ut`). Every chart
    /// coordinate must be accounted for.
    pub fn detect(chart: &Arc<Chart>) -> Result<DarbouxLayout> {
        let find = |name: &str| chart.index_of(name);
        let z = find("z").ok_or_else(|| {
            Error::Invalid(format!("chart `{}` has no coordinate `z`", chart.name()))
        })?;

        let mut pairs = Vec::new();
        if let (Some(p), Some(q)) = (find("p"), find("q")) {
            pairs.push((p, q));
        } else {
            for i in 1.. {
                match (find(&format!("p{i}")), find(&format!("q{i}"))) {
                    (Some(p), Some(q)) => pairs.push((p, q)),
                    (None, None) => break,
                    _ => {
                        return Err(Error::Invalid(format!(
                            "chart `{}` pairs p{i}/q{i} incompletely",
                            chart.name()
                        )))
                    }
                }
            }
        }

        let mut spares = Vec::new();
        if let Some(u) = find("u") {
            spares.push(u);
        } else {
            for j in 1.. {
                match find(&format!("u{j}")) {
                    Some(u) => spares.push(u),
                    None => break,
                }
            }
        }

        if 1 + 2 * pairs.len() + spares.len() != chart.dim() {
            return Err(Error::Invalid(format!(
                "chart `{}` does not follow the model naming scheme",
                chart.name()
            )));
        }
        Ok(DarbouxLayout { z, pairs, spares })
    }

    pub fn rank(&self) -> usize {
        self.pairs.len()
    }
}

// ---------------------------------------------------------------------------
// symbolic dynamics on the model chart
// ---------------------------------------------------------------------------

/// Symbolic dynamics for the model structure `η = dz − Σ pᵢ dqⁱ`.
#[derive(Clone, Debug)]
pub struct DarbouxDynamics {
    field: HyperplaneField,
    layout: DarbouxLayout,
}

impl DarbouxDynamics {
    /// Wrap a hyperplane field whose chart follows the model naming scheme
    /// and whose defining form is the model form (checked numerically at a
    /// deterministic sample).
    pub fn new(field: HyperplaneField) -> Result<DarbouxDynamics> {
        let chart = field.chart().clone();
        let layout = DarbouxLayout::detect(&chart)?;

        let mut coeffs = vec![Expr::zero(&chart); chart.dim()];
        coeffs[layout.z] = Expr::one(&chart);
        for &(p, q) in &layout.pairs {
            coeffs[q] = -&Expr::coord(&chart, p);
        }
        let model = DiffForm::one_form(&chart, coeffs);
        let diff = &model - field.eta();
        let points = Sampler::default().points(&chart, 16)?;
        let scale = field.eta().sup_coeff_at(&points)?.max(1.0);
        if diff.sup_coeff_at(&points)? > 1e-12 * scale {
            return Err(Error::Invalid(format!(
                "defining form on `{}` is not dz − Σ pᵢ dqⁱ; closed-form \
                 dynamics are only valid for the model form",
                chart.name()
            )));
        }
        Ok(DarbouxDynamics { field, layout })
    }

    pub fn chart(&self) -> &Arc<Chart> {
        self.field.chart()
    }

    pub fn field(&self) -> &HyperplaneField {
        &self.field
    }

    pub fn layout(&self) -> &DarbouxLayout {
        &self.layout
    }

    /// The Reeb field `∂_z`.
    pub fn reeb(&self) -> VecField {
        VecField::coordinate(self.chart(), self.layout.z)
    }

    fn reject_spare_dependence(&self, h: &Expr) -> Result<()> {
        for &u in &self.layout.spares {
            if h.depends_on(u) {
                return Err(Error::Invalid(format!(
                    "Hamiltonian depends on the characteristic coordinate \
                     `{}`, so its defining equations have no solution",
                    self.chart().coord(u)
                )));
            }
        }
        Ok(())
    }

    /// The closed-form Hamiltonian field of `Ĥ`.
    pub fn contact_field(&self, h: &Expr) -> Result<VecField> {
        let chart = self.chart();
        crate::expr::assert_same_chart(chart, h.chart());
        self.reject_spare_dependence(h)?;

        let mut comps = vec![Expr::zero(chart); chart.dim()];
        let h_z = h.differentiate(self.layout.z);
        // z-component: Σ pᵢ ∂Ĥ/∂pᵢ − Ĥ
        let mut z_comp = -h;
        for &(p, q) in &self.layout.pairs {
            let p_var = Expr::coord(chart, p);
            let h_p = h.differentiate(p);
            let h_q = h.differentiate(q);
            comps[q] = h_p.clone();
            comps[p] = -&(&h_q + &(&p_var * &h_z));
            z_comp = &z_comp + &(&p_var * &h_p);
        }
        comps[self.layout.z] = z_comp;
        Ok(VecField::new(chart, comps))
    }

    /// The factor `f = −∂Ĥ/∂z` in `L_{X_Ĥ} η = f η`.
    pub fn conformal_factor(&self, h: &Expr) -> Expr {
        (-&h.differentiate(self.layout.z)).fold()
    }

    /// Jacobi bracket by the coordinate formula
    /// `{F, G} = (F − Σ pᵢ F_{pᵢ}) G_z − (G − Σ pᵢ G_{pᵢ}) F_z
    ///           + Σ (F_{qⁱ} G_{pᵢ} − F_{pᵢ} G_{qⁱ})`.
    pub fn bracket(&self, f: &Expr, g: &Expr) -> Result<Expr> {
        let chart = self.chart();
        crate::expr::assert_same_chart(chart, f.chart());
        crate::expr::assert_same_chart(chart, g.chart());
        self.reject_spare_dependence(f)?;
        self.reject_spare_dependence(g)?;

        let f_z = f.differentiate(self.layout.z);
        let g_z = g.differentiate(self.layout.z);
        let mut f_red = f.clone(); // F − Σ pᵢ F_{pᵢ}
        let mut g_red = g.clone();
        let mut pair_sum = Expr::zero(chart);
        for &(p, q) in &self.layout.pairs {
            let p_var = Expr::coord(chart, p);
            f_red = &f_red - &(&p_var * &f.differentiate(p));
            g_red = &g_red - &(&p_var * &g.differentiate(p));
            let term = &(&f.differentiate(q) * &g.differentiate(p))
                - &(&f.differentiate(p) * &g.differentiate(q));
            pair_sum = &pair_sum + &term;
        }
        Ok((&(&(&f_red * &g_z) - &(&g_red * &f_z)) + &pair_sum).fold())
    }

    /// Jacobi bracket through the field pairing `{F, G} = η([X_F, X_G])`.
    pub fn bracket_via_fields(&self, f: &Expr, g: &Expr) -> Result<Expr> {
        let x_f = self.contact_field(f)?;
        let x_g = self.contact_field(g)?;
        let commutator = x_f.commutator(&x_g);
        let paired = self.field.eta().interior(&commutator)?;
        Ok(paired.coeff(&[]))
    }

    /// Compute the bracket both ways, insist the routes agree at the sample
    /// points, and return the coordinate-formula expression.
    pub fn bracket_checked(&self, f: &Expr, g: &Expr, points: &[Vec<f64>]) -> Result<Expr> {
        let direct = self.bracket(f, g)?;
        let via_fields = self.bracket_via_fields(f, g)?;
        for p in points {
            let a = direct.evaluate(p).map_err(Error::from)?;
            let b = via_fields.evaluate(p).map_err(Error::from)?;
            if (a - b).abs() > BRACKET_CROSS_TOL * (1.0 + a.abs().max(b.abs())) {
                return Err(Error::BracketCrossCheck {
                    formula: a,
                    commutator: b,
                });
            }
        }
        Ok(direct)
    }

    /// The fibrewise-linear lift `H = −s Ĥ` on the cover.
    pub fn lift_hamiltonian(&self, bundle: &CoverBundle, h: &Expr) -> Result<Expr> {
        self.check_bundle(bundle)?;
        let total = bundle.total_chart();
        let s = Expr::coord(total, bundle.s_index());
        Ok((-&(&s * &h.extend_to(total)?)).fold())
    }

    /// The lifted Hamiltonian field `X_H = X_Ĥ + R(Ĥ) s ∂s` on the cover.
    pub fn lift_field(&self, bundle: &CoverBundle, h: &Expr) -> Result<VecField> {
        self.check_bundle(bundle)?;
        let total = bundle.total_chart();
        let base_field = self.contact_field(h)?.extend_to(total)?;
        let r_of_h = h.differentiate(self.layout.z).extend_to(total)?;
        Ok(&base_field + &bundle.scaling_field().scaled(&r_of_h))
    }

    fn check_bundle(&self, bundle: &CoverBundle) -> Result<()> {
        if bundle.base_chart() != self.chart() {
            return Err(Error::ChartMismatch {
                expected: self.chart().name().to_string(),
                got: bundle.base_chart().name().to_string(),
            });
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// pointwise numeric dynamics (any structure)
// ---------------------------------------------------------------------------

/// Solve `i_R η = 1`, `i_R dη = 0` at a point. The particular solution has
/// minimum norm; the kernel collects the ambiguity (trivial for contact
/// structures).
pub fn reeb_at(field: &HyperplaneField, point: &[f64]) -> Result<AffineSolution> {
    let eta_row = field.eta().row_at(point)?;
    let m = field.d_eta().matrix_at(point)?;
    let dim = eta_row.len();
    let mut a = DMatrix::zeros(dim + 1, dim);
    a.row_mut(0).copy_from(&eta_row.transpose());
    a.view_mut((1, 0), (dim, dim)).copy_from(&m.transpose());
    let mut b = DVector::zeros(dim + 1);
    b[0] = 1.0;
    solve_affine(&a, &b, RANK_REL_TOL).map_err(|e| match e {
        Error::Inconsistent { residual, .. } => Error::NoReeb {
            context: format!("defining system inconsistent at {point:?} (residual {residual:.3e})"),
        },
        other => other,
    })
}

/// Solve the Hamiltonian field equations
/// `i_X η = −Ĥ`, `i_X dη = dĤ − R(Ĥ) η` at a point, with `R` the
/// minimum-norm Reeb solution there.
pub fn contact_field_at(
    field: &HyperplaneField,
    h: &Expr,
    point: &[f64],
) -> Result<AffineSolution> {
    let eta_row = field.eta().row_at(point)?;
    let m = field.d_eta().matrix_at(point)?;
    let dim = eta_row.len();

    let grad = DVector::from_iterator(
        dim,
        h.gradient()
            .iter()
            .map(|d| d.evaluate(point).map_err(Error::from))
            .collect::<Result<Vec<f64>>>()?,
    );
    let reeb = reeb_at(field, point)?.particular;
    let r_of_h = grad.dot(&reeb);

    let mut a = DMatrix::zeros(dim + 1, dim);
    a.row_mut(0).copy_from(&eta_row.transpose());
    a.view_mut((1, 0), (dim, dim)).copy_from(&m.transpose());
    let mut b = DVector::zeros(dim + 1);
    b[0] = -h.evaluate(point).map_err(Error::from)?;
    b.rows_mut(1, dim).copy_from(&(&grad - &eta_row * r_of_h));
    solve_affine(&a, &b, RANK_REL_TOL)
}

/// Solve `i_X ω = −dH` at a point of a (pre)symplectic chart. With the
/// convention `ω(u, v) = uᵀ M v` this is the linear system `M X = ∇H`;
/// the kernel of the solution is `ker ω`.
pub fn presymplectic_field_at(omega: &DiffForm, h: &Expr, point: &[f64]) -> Result<AffineSolution> {
    let m = omega.matrix_at(point)?;
    let grad = DVector::from_iterator(
        h.chart().dim(),
        h.gradient()
            .iter()
            .map(|d| d.evaluate(point).map_err(Error::from))
            .collect::<Result<Vec<f64>>>()?,
    );
    solve_affine(&m, &grad, RANK_REL_TOL)
}

// ---------------------------------------------------------------------------
// flows
// ---------------------------------------------------------------------------

/// A fixed-step integral curve record.
#[derive(Clone, Debug)]
pub struct Trajectory {
    chart: Arc<Chart>,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn end_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has at least the start state")
    }

    /// Render as CSV: header `t,<coords…>`, one row per step, every value
    /// printed with 17 significant digits so files round-trip exactly.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for c in self.chart.coords() {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for (t, state) in self.times.iter().zip(&self.states) {
            out.push_str(&format!("{t:.16e}"));
            for v in state {
                out.push_str(&format!(",{v:.16e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Integrate `ẋ = X(x)` with the classical fourth-order Runge-Kutta
/// scheme at fixed step `t_end / steps`, recording every node. Fails when
/// the state leaves the chart domain or stops being finite.
pub fn flow(field: &VecField, start: &[f64], t_end: f64, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::Invalid("flow needs at least one step".into()));
    }
    let chart = field.chart().clone();
    if start.len() != chart.dim() {
        return Err(Error::DimensionMismatch {
            context: format!(
                "start point has {} coordinates, chart `{}` has {}",
                start.len(),
                chart.name(),
                chart.dim()
            ),
        });
    }
    let check = |state: &[f64], time: f64| -> Result<()> {
        if state.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { time });
        }
        if let Some((i, value)) = chart.first_escape(state) {
            return Err(Error::DomainEscape {
                time,
                coord: chart.coord(i).to_string(),
                value,
            });
        }
        Ok(())
    };

    check(start, 0.0)?;
    let h = t_end / steps as f64;
    let dim = chart.dim();
    // overflow inside a stage evaluation is the same failure as an
    // overflowing state: report it as the trajectory going non-finite
    let eval = |state: &DVector<f64>, time: f64| -> Result<DVector<f64>> {
        field.value_at(state.as_slice()).map_err(|e| match e {
            Error::Expr(crate::expr::ExprError::NonFinite { .. }) => Error::NonFinite { time },
            other => other,
        })
    };

    let mut x = DVector::from_column_slice(start);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    times.push(0.0);
    states.push(start.to_vec());

    for n in 0..steps {
        let t_mid = (n as f64 + 0.5) * h;
        let k1 = eval(&x, n as f64 * h)?;
        let k2 = eval(&(&x + &k1 * (h / 2.0)), t_mid)?;
        let k3 = eval(&(&x + &k2 * (h / 2.0)), t_mid)?;
        let k4 = eval(&(&x + &k3 * h), (n + 1) as f64 * h)?;
        x += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        let t = (n + 1) as f64 * h;
        let state: Vec<f64> = (0..dim).map(|i| x[i]).collect();
        check(&state, t)?;
        times.push(t);
        states.push(state);
    }

    Ok(Trajectory {
        chart,
        times,
        states,
    })
}

/// Observed convergence order from three step-halved runs to the same end
/// time (`log₂` of successive end-state differences). Meaningless when the
/// scheme is exact for the field, in which case an error is returned.
pub fn observed_order(field: &VecField, start: &[f64], t_end: f64, steps: usize) -> Result<f64> {
    let coarse = flow(field, start, t_end, steps)?;
    let medium = flow(field, start, t_end, steps * 2)?;
    let fine = flow(field, start, t_end, steps * 4)?;
    let diff = |a: &[f64], b: &[f64]| -> f64 {
        a.iter()
            .zip(b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    };
    let e1 = diff(coarse.end_state(), medium.end_state());
    let e2 = diff(medium.end_state(), fine.end_state());
    if e1 <= f64::EPSILON || e2 <= f64::EPSILON {
        return Err(Error::Invalid(
            "step halving produced no measurable difference; the scheme is \
             exact for this field at these steps"
                .into(),
        ));
    }
    Ok((e1 / e2).log2())
}

/// Worst defect of the trajectory against the field, measured by central
/// differences at the interior nodes (an `O(h²)` consistency diagnostic,
/// independent of the integrator's own arithmetic).
pub fn evolution_residual(field: &VecField, traj: &Trajectory) -> Result<f64> {
    let mut worst = 0.0f64;
    for i in 1..traj.len().saturating_sub(1) {
        let dt = traj.times[i + 1] - traj.times[i - 1];
        let value = field.value_at(&traj.states[i])?;
        for j in 0..traj.chart.dim() {
            let slope = (traj.states[i + 1][j] - traj.states[i - 1][j]) / dt;
            worst = worst.max((slope - value[j]).abs());
        }
    }
    Ok(worst)
}
