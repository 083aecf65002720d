//! Symbolic exterior calculus: differential forms, vector fields, and
//! smooth maps over a fixed chart.
//!
//! A [`DiffForm`] of degree `k` is stored as a sum of terms
//! `a_I dx^{i_1} ∧ … ∧ dx^{i_k}` keyed by strictly increasing
//! multi-indices `I`; every constructor sorts indices, tracks the
//! permutation sign, merges duplicates, and drops terms whose coefficient
//! folds to the literal zero. On top of that representation the module
//! provides the exterior derivative, wedge products, interior products,
//! Lie derivatives (via the Cartan formula), pullbacks along
//! [`SmoothMap`]s, and pointwise evaluation into `nalgebra` vectors and
//! matrices for the rank computations downstream.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::expr::{assert_same_chart, Chart, Expr};
use crate::{Error, Result};

/// Sort a multi-index into strictly increasing order, returning the
/// permutation sign, or `None` when an index repeats (the term is zero).
fn normalize_index(mut idx: Vec<usize>) -> Option<(Vec<usize>, f64)> {
    let mut sign = 1.0;
    // insertion sort, counting swaps
    for i in 1..idx.len() {
        let mut j = i;
        while j > 0 && idx[j - 1] > idx[j] {
            idx.swap(j - 1, j);
            sign = -sign;
            j -= 1;
        }
    }
    if idx.windows(2).any(|w| w[0] == w[1]) {
        return None;
    }
    Some((idx, sign))
}

/// A differential form with symbolic coefficients.
#[derive(Clone, PartialEq)]
pub struct DiffForm {
    chart: Arc<Chart>,
    degree: usize,
    coeffs: BTreeMap<Vec<usize>, Expr>,
}

impl DiffForm {
    /// The zero form of the given degree.
    pub fn zero(chart: &Arc<Chart>, degree: usize) -> DiffForm {
        DiffForm {
            chart: chart.clone(),
            degree,
            coeffs: BTreeMap::new(),
        }
    }

    /// A degree-0 form (an ordinary function).
    pub fn function(f: &Expr) -> DiffForm {
        DiffForm::from_terms(f.chart(), 0, vec![(Vec::new(), f.clone())])
    }

    /// The coordinate 1-form `dx^i`.
    pub fn d_coord(chart: &Arc<Chart>, i: usize) -> DiffForm {
        assert!(i < chart.dim(), "coordinate index out of range");
        DiffForm::from_terms(chart, 1, vec![(vec![i], Expr::one(chart))])
    }

    /// A 1-form from its full coefficient list, one per coordinate.
    pub fn one_form(chart: &Arc<Chart>, coeffs: Vec<Expr>) -> DiffForm {
        assert_eq!(coeffs.len(), chart.dim(), "one coefficient per coordinate");
        DiffForm::from_terms(
            chart,
            1,
            coeffs.into_iter().enumerate().map(|(i, a)| (vec![i], a)).collect(),
        )
    }

    /// Build a form from raw terms, normalizing index order and signs and
    /// dropping terms that fold to zero.
    pub fn from_terms(
        chart: &Arc<Chart>,
        degree: usize,
        terms: Vec<(Vec<usize>, Expr)>,
    ) -> DiffForm {
        let mut coeffs: BTreeMap<Vec<usize>, Expr> = BTreeMap::new();
        for (idx, a) in terms {
            assert_eq!(idx.len(), degree, "multi-index length must match degree");
            assert_same_chart(chart, a.chart());
            assert!(
                idx.iter().all(|&i| i < chart.dim()),
                "coordinate index out of range"
            );
            let Some((idx, sign)) = normalize_index(idx) else {
                continue;
            };
            let signed = (if sign < 0.0 { -&a } else { a }).fold();
            let folded = match coeffs.remove(&idx) {
                // exact structural cancellation, which constant folding
                // alone cannot see (e.g. `p + (−p)`)
                Some(prev) if prev == (-&signed).fold() => continue,
                Some(prev) => (&prev + &signed).fold(),
                None => signed,
            };
            if !folded.is_zero() {
                coeffs.insert(idx, folded);
            }
        }
        DiffForm {
            chart: chart.clone(),
            degree,
            coeffs,
        }
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Coefficient of `dx^I` (zero when absent). The index must be strictly
    /// increasing.
    pub fn coeff(&self, idx: &[usize]) -> Expr {
        self.coeffs
            .get(idx)
            .cloned()
            .unwrap_or_else(|| Expr::zero(&self.chart))
    }

    /// The stored (index, coefficient) terms, in index order.
    pub fn terms(&self) -> impl Iterator<Item = (&[usize], &Expr)> {
        self.coeffs.iter().map(|(i, a)| (i.as_slice(), a))
    }

    /// True when every coefficient folded away symbolically. A `false`
    /// answer does not preclude vanishing at specific points.
    pub fn is_structurally_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    fn combine(&self, other: &DiffForm, sign: f64) -> DiffForm {
        assert_same_chart(&self.chart, &other.chart);
        assert_eq!(self.degree, other.degree, "cannot add forms of different degree");
        let mut terms: Vec<(Vec<usize>, Expr)> = self
            .coeffs
            .iter()
            .map(|(i, a)| (i.clone(), a.clone()))
            .collect();
        for (i, a) in &other.coeffs {
            terms.push((i.clone(), if sign < 0.0 { -a } else { a.clone() }));
        }
        DiffForm::from_terms(&self.chart, self.degree, terms)
    }

    /// Multiply every coefficient by a function.
    pub fn scaled(&self, f: &Expr) -> DiffForm {
        assert_same_chart(&self.chart, f.chart());
        DiffForm::from_terms(
            &self.chart,
            self.degree,
            self.coeffs
                .iter()
                .map(|(i, a)| (i.clone(), f * a))
                .collect(),
        )
    }

    /// Exterior derivative.
    pub fn exterior_d(&self) -> DiffForm {
        let mut terms = Vec::new();
        for (idx, a) in &self.coeffs {
            for j in 0..self.chart.dim() {
                let da = a.differentiate(j);
                if da.is_zero() {
                    continue;
                }
                let mut new_idx = Vec::with_capacity(idx.len() + 1);
                new_idx.push(j);
                new_idx.extend_from_slice(idx);
                terms.push((new_idx, da));
            }
        }
        DiffForm::from_terms(&self.chart, self.degree + 1, terms)
    }

    /// Wedge product.
    pub fn wedge(&self, other: &DiffForm) -> DiffForm {
        assert_same_chart(&self.chart, &other.chart);
        let mut terms = Vec::new();
        for (i, a) in &self.coeffs {
            for (j, b) in &other.coeffs {
                let mut idx = Vec::with_capacity(i.len() + j.len());
                idx.extend_from_slice(i);
                idx.extend_from_slice(j);
                terms.push((idx, a * b));
            }
        }
        DiffForm::from_terms(&self.chart, self.degree + other.degree, terms)
    }

    /// `k`-fold wedge power; `k = 0` gives the constant function 1.
    pub fn wedge_power(&self, k: usize) -> DiffForm {
        let mut out = DiffForm::function(&Expr::one(&self.chart));
        for _ in 0..k {
            out = out.wedge(self);
        }
        out
    }

    /// Interior product `i_X`. Fails on degree 0, where contraction is not
    /// defined.
    pub fn interior(&self, x: &VecField) -> Result<DiffForm> {
        assert_same_chart(&self.chart, x.chart());
        if self.degree == 0 {
            return Err(Error::DegreeMismatch {
                context: "interior product of a degree-0 form".into(),
            });
        }
        let mut terms = Vec::new();
        for (idx, a) in &self.coeffs {
            for (slot, &i) in idx.iter().enumerate() {
                let comp = x.component(i);
                if comp.is_zero() {
                    continue;
                }
                let coeff = (a * comp).fold();
                let signed = if slot % 2 == 1 { -&coeff } else { coeff };
                let rest: Vec<usize> = idx
                    .iter()
                    .enumerate()
                    .filter(|&(s, _)| s != slot)
                    .map(|(_, &v)| v)
                    .collect();
                terms.push((rest, signed));
            }
        }
        Ok(DiffForm::from_terms(&self.chart, self.degree - 1, terms))
    }

    /// Lie derivative along `x` via the Cartan formula
    /// `L_X = i_X ∘ d + d ∘ i_X`; on functions it is the directional
    /// derivative.
    pub fn lie_derivative(&self, x: &VecField) -> DiffForm {
        if self.degree == 0 {
            let f = self.coeff(&[]);
            return DiffForm::function(&x.apply(&f));
        }
        let d_then_i = self
            .exterior_d()
            .interior(x)
            .expect("d raises the degree above zero");
        let i_then_d = self
            .interior(x)
            .expect("degree checked above")
            .exterior_d();
        &d_then_i + &i_then_d
    }

    /// Pullback along `map`; the form must live on the map's target chart.
    pub fn pullback(&self, map: &SmoothMap) -> Result<DiffForm> {
        if self.chart != *map.target() {
            return Err(Error::ChartMismatch {
                expected: self.chart.name().to_string(),
                got: map.target().name().to_string(),
            });
        }
        let src = map.source();
        let mut out = DiffForm::zero(src, self.degree);
        for (idx, a) in &self.coeffs {
            let pulled_coeff = a.compose(map.components()).fold();
            let mut term = DiffForm::function(&pulled_coeff);
            for &i in idx {
                term = term.wedge(&map.component_differential(i));
            }
            out = &out + &term;
        }
        Ok(out)
    }

    /// Re-express the form on a chart that extends this one by extra
    /// coordinates (matching coordinates keep their names).
    pub fn extend_to(&self, target: &Arc<Chart>) -> Result<DiffForm> {
        let mut terms = Vec::new();
        for (idx, a) in &self.coeffs {
            let new_idx = idx
                .iter()
                .map(|&i| {
                    target.index_of(self.chart.coord(i)).ok_or_else(|| {
                        Error::ChartMismatch {
                            expected: self.chart.name().to_string(),
                            got: target.name().to_string(),
                        }
                    })
                })
                .collect::<Result<Vec<usize>>>()?;
            terms.push((new_idx, a.extend_to(target)?));
        }
        Ok(DiffForm::from_terms(target, self.degree, terms))
    }

    /// Evaluate the form at a point on `k` vectors.
    pub fn value_at(&self, point: &[f64], vectors: &[DVector<f64>]) -> Result<f64> {
        if vectors.len() != self.degree {
            return Err(Error::DegreeMismatch {
                context: format!(
                    "degree-{} form applied to {} vectors",
                    self.degree,
                    vectors.len()
                ),
            });
        }
        let k = self.degree;
        let mut total = 0.0;
        for (idx, a) in &self.coeffs {
            let coeff = a.evaluate(point).map_err(Error::from)?;
            if k == 0 {
                total += coeff;
                continue;
            }
            let minor = DMatrix::from_fn(k, k, |r, c| vectors[c][idx[r]]);
            total += coeff * minor.determinant();
        }
        Ok(total)
    }

    /// Coefficient row of a 1-form at a point.
    pub fn row_at(&self, point: &[f64]) -> Result<DVector<f64>> {
        if self.degree != 1 {
            return Err(Error::DegreeMismatch {
                context: format!("row of a degree-{} form", self.degree),
            });
        }
        let mut row = DVector::zeros(self.chart.dim());
        for (idx, a) in &self.coeffs {
            row[idx[0]] = a.evaluate(point).map_err(Error::from)?;
        }
        Ok(row)
    }

    /// Antisymmetric coefficient matrix of a 2-form at a point, so that
    /// `ω(u, v) = uᵀ M v`.
    pub fn matrix_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        if self.degree != 2 {
            return Err(Error::DegreeMismatch {
                context: format!("matrix of a degree-{} form", self.degree),
            });
        }
        let n = self.chart.dim();
        let mut m = DMatrix::zeros(n, n);
        for (idx, a) in &self.coeffs {
            let v = a.evaluate(point).map_err(Error::from)?;
            m[(idx[0], idx[1])] = v;
            m[(idx[1], idx[0])] = -v;
        }
        Ok(m)
    }

    /// Largest coefficient magnitude over the given points; the scale
    /// reference for "vanishes identically" decisions.
    pub fn sup_coeff_at(&self, points: &[Vec<f64>]) -> Result<f64> {
        let mut sup: f64 = 0.0;
        for p in points {
            for (_, a) in self.coeffs.iter() {
                sup = sup.max(a.evaluate(p).map_err(Error::from)?.abs());
            }
        }
        Ok(sup)
    }
}

impl fmt::Debug for DiffForm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.coeffs.is_empty() {
            return write!(f, "0");
        }
        let mut first = true;
        for (idx, a) in &self.coeffs {
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({a})")?;
            for &i in idx {
                write!(f, " d{}", self.chart.coord(i))?;
            }
        }
        Ok(())
    }
}

impl std::ops::Add for &DiffForm {
    type Output = DiffForm;
    fn add(self, rhs: &DiffForm) -> DiffForm {
        self.combine(rhs, 1.0)
    }
}

impl std::ops::Sub for &DiffForm {
    type Output = DiffForm;
    fn sub(self, rhs: &DiffForm) -> DiffForm {
        self.combine(rhs, -1.0)
    }
}

impl std::ops::Neg for &DiffForm {
    type Output = DiffForm;
    fn neg(self) -> DiffForm {
        DiffForm::zero(&self.chart, self.degree).combine(self, -1.0)
    }
}

// ---------------------------------------------------------------------------
// vector fields
// ---------------------------------------------------------------------------

/// A vector field with symbolic components, one per chart coordinate.
#[derive(Clone, PartialEq)]
pub struct VecField {
    chart: Arc<Chart>,
    components: Vec<Expr>,
}

impl VecField {
    pub fn new(chart: &Arc<Chart>, components: Vec<Expr>) -> VecField {
        assert_eq!(components.len(), chart.dim(), "one component per coordinate");
        for c in &components {
            assert_same_chart(chart, c.chart());
        }
        VecField {
            chart: chart.clone(),
            components: components.into_iter().map(|c| c.fold()).collect(),
        }
    }

    pub fn zero(chart: &Arc<Chart>) -> VecField {
        VecField::new(chart, vec![Expr::zero(chart); chart.dim()])
    }

    /// The coordinate field `∂/∂x^i`.
    pub fn coordinate(chart: &Arc<Chart>, i: usize) -> VecField {
        assert!(i < chart.dim(), "coordinate index out of range");
        let mut comps = vec![Expr::zero(chart); chart.dim()];
        comps[i] = Expr::one(chart);
        VecField::new(chart, comps)
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    pub fn component(&self, i: usize) -> &Expr {
        &self.components[i]
    }

    pub fn scaled(&self, f: &Expr) -> VecField {
        assert_same_chart(&self.chart, f.chart());
        VecField::new(
            &self.chart,
            self.components.iter().map(|c| f * c).collect(),
        )
    }

    /// Directional derivative `X(f) = Σ X^i ∂f/∂x^i`.
    pub fn apply(&self, f: &Expr) -> Expr {
        assert_same_chart(&self.chart, f.chart());
        let mut out = Expr::zero(&self.chart);
        for (i, comp) in self.components.iter().enumerate() {
            if comp.is_zero() {
                continue;
            }
            let df = f.differentiate(i);
            if df.is_zero() {
                continue;
            }
            out = &out + &(comp * &df);
        }
        out.fold()
    }

    /// Lie bracket `[X, Y]^i = X(Y^i) − Y(X^i)`.
    pub fn commutator(&self, other: &VecField) -> VecField {
        assert_same_chart(&self.chart, &other.chart);
        let comps = (0..self.chart.dim())
            .map(|i| (&self.apply(&other.components[i]) - &other.apply(&self.components[i])).fold())
            .collect();
        VecField::new(&self.chart, comps)
    }

    /// Re-express the field on an extending chart; new coordinates get
    /// zero components.
    pub fn extend_to(&self, target: &Arc<Chart>) -> Result<VecField> {
        let mut comps = vec![Expr::zero(target); target.dim()];
        for (i, c) in self.components.iter().enumerate() {
            let j = target
                .index_of(self.chart.coord(i))
                .ok_or_else(|| Error::ChartMismatch {
                    expected: self.chart.name().to_string(),
                    got: target.name().to_string(),
                })?;
            comps[j] = c.extend_to(target)?;
        }
        Ok(VecField::new(target, comps))
    }

    pub fn value_at(&self, point: &[f64]) -> Result<DVector<f64>> {
        let mut v = DVector::zeros(self.chart.dim());
        for (i, c) in self.components.iter().enumerate() {
            v[i] = c.evaluate(point).map_err(Error::from)?;
        }
        Ok(v)
    }
}

impl fmt::Debug for VecField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (i, c) in self.components.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            write!(f, "({c}) ∂{}", self.chart.coord(i))?;
        }
        if first {
            write!(f, "0")?;
        }
        Ok(())
    }
}

impl std::ops::Add for &VecField {
    type Output = VecField;
    fn add(self, rhs: &VecField) -> VecField {
        assert_same_chart(&self.chart, &rhs.chart);
        VecField::new(
            &self.chart,
            self.components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }
}

impl std::ops::Sub for &VecField {
    type Output = VecField;
    fn sub(self, rhs: &VecField) -> VecField {
        assert_same_chart(&self.chart, &rhs.chart);
        VecField::new(
            &self.chart,
            self.components
                .iter()
                .zip(&rhs.components)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }
}

impl std::ops::Neg for &VecField {
    type Output = VecField;
    fn neg(self) -> VecField {
        VecField::new(&self.chart, self.components.iter().map(|c| -c).collect())
    }
}

// ---------------------------------------------------------------------------
// smooth maps
// ---------------------------------------------------------------------------

/// A smooth map between charts, given by one source-chart expression per
/// target coordinate.
#[derive(Clone, Debug)]
pub struct SmoothMap {
    source: Arc<Chart>,
    target: Arc<Chart>,
    components: Vec<Expr>,
}

impl SmoothMap {
    pub fn new(
        source: &Arc<Chart>,
        target: &Arc<Chart>,
        components: Vec<Expr>,
    ) -> Result<SmoothMap> {
        if components.len() != target.dim() {
            return Err(Error::DimensionMismatch {
                context: format!(
                    "map into `{}` needs {} components, got {}",
                    target.name(),
                    target.dim(),
                    components.len()
                ),
            });
        }
        for c in &components {
            if c.chart() != source {
                return Err(Error::ChartMismatch {
                    expected: source.name().to_string(),
                    got: c.chart().name().to_string(),
                });
            }
        }
        Ok(SmoothMap {
            source: source.clone(),
            target: target.clone(),
            components: components.into_iter().map(|c| c.fold()).collect(),
        })
    }

    pub fn source(&self) -> &Arc<Chart> {
        &self.source
    }

    pub fn target(&self) -> &Arc<Chart> {
        &self.target
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// The differential `dφ^i` of one component, as a 1-form on the source.
    pub fn component_differential(&self, i: usize) -> DiffForm {
        DiffForm::function(&self.components[i]).exterior_d()
    }

    pub fn eval(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.components
            .iter()
            .map(|c| c.evaluate(point).map_err(Error::from))
            .collect()
    }

    /// Jacobian matrix at a point (target dim × source dim).
    pub fn jacobian_at(&self, point: &[f64]) -> Result<DMatrix<f64>> {
        let mut m = DMatrix::zeros(self.target.dim(), self.source.dim());
        for (r, c) in self.components.iter().enumerate() {
            for j in 0..self.source.dim() {
                m[(r, j)] = c.differentiate(j).evaluate(point).map_err(Error::from)?;
            }
        }
        Ok(m)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, CoordDomain};
    use crate::sample::Sampler;
    use approx::assert_relative_eq;

    fn darboux_chart() -> Arc<Chart> {
        Chart::new("darboux", &["z", "p", "q"])
    }

    /// η = dz − p dq on the three-dimensional model.
    fn eta(chart: &Arc<Chart>) -> DiffForm {
        let p = parse("p", chart).unwrap();
        DiffForm::one_form(
            chart,
            vec![Expr::one(chart), Expr::zero(chart), -&p],
        )
    }

    #[test]
    fn index_normalization_tracks_permutation_sign() {
        assert_eq!(normalize_index(vec![2, 1]), Some((vec![1, 2], -1.0)));
        assert_eq!(normalize_index(vec![0, 1, 2]), Some((vec![0, 1, 2], 1.0)));
        assert_eq!(normalize_index(vec![2, 0, 1]), Some((vec![0, 1, 2], 1.0)));
        assert_eq!(normalize_index(vec![1, 1]), None);
    }

    #[test]
    fn exterior_derivative_of_p_dq() {
        // d(p dq) = dp ∧ dq
        let chart = darboux_chart();
        let p = parse("p", &chart).unwrap();
        let form = DiffForm::from_terms(&chart, 1, vec![(vec![2], p)]);
        let d = form.exterior_d();
        let expected = DiffForm::from_terms(
            &chart,
            2,
            vec![(vec![1, 2], Expr::one(&chart))],
        );
        assert_eq!(d, expected);
    }

    #[test]
    fn d_squared_is_zero() {
        let chart = darboux_chart();
        let f = parse("z*p*q + sin(p)*exp(q)", &chart).unwrap();
        let ddf = DiffForm::function(&f).exterior_d().exterior_d();
        assert!(ddf.is_structurally_zero(), "d² f = {ddf:?}");
    }

    #[test]
    fn wedge_is_graded_anticommutative_on_one_forms() {
        let chart = darboux_chart();
        let a = eta(&chart);
        let b = DiffForm::d_coord(&chart, 1);
        let ab = a.wedge(&b);
        let ba = b.wedge(&a);
        assert_eq!(ab, -&ba);
        assert!(a.wedge(&a).is_structurally_zero());
    }

    #[test]
    fn volume_normalization_of_eta_wedge_d_eta() {
        // η ∧ dη = −dz ∧ dp ∧ dq
        let chart = darboux_chart();
        let eta = eta(&chart);
        let vol = eta.wedge(&eta.exterior_d());
        let expected = DiffForm::from_terms(
            &chart,
            3,
            vec![(vec![0, 1, 2], -&Expr::one(&chart))],
        );
        assert_eq!(vol, expected);
        // and the next power is identically zero in three dimensions
        assert!(eta
            .wedge(&eta.exterior_d().wedge_power(2))
            .is_structurally_zero());
    }

    #[test]
    fn interior_product_contracts_scaling_field() {
        // On the cover chart, i_{s ∂s}(ds∧η + s dη) = s η.
        let chart = Chart::new("total", &["z", "p", "q"])
            .extended("total", "s", CoordDomain::nonzero())
            .unwrap();
        let s = parse("s", &chart).unwrap();
        let p = parse("p", &chart).unwrap();
        let eta = DiffForm::one_form(
            &chart,
            vec![Expr::one(&chart), Expr::zero(&chart), -&p, Expr::zero(&chart)],
        );
        let ds = DiffForm::d_coord(&chart, 3);
        let omega = &ds.wedge(&eta) + &eta.exterior_d().scaled(&s);
        let scaling = VecField::coordinate(&chart, 3).scaled(&s);
        let contracted = omega.interior(&scaling).unwrap();
        let diff = &contracted - &eta.scaled(&s);
        let pts = Sampler::default().points(&chart, 25).unwrap();
        assert!(diff.sup_coeff_at(&pts).unwrap() <= 1e-12, "residual {diff:?}");
    }

    #[test]
    fn interior_product_of_function_is_rejected() {
        let chart = darboux_chart();
        let f = DiffForm::function(&parse("z", &chart).unwrap());
        let x = VecField::coordinate(&chart, 0);
        assert!(matches!(
            f.interior(&x),
            Err(Error::DegreeMismatch { .. })
        ));
    }

    #[test]
    fn lie_derivative_along_translation_kills_eta() {
        let chart = darboux_chart();
        let eta = eta(&chart);
        let dq = VecField::coordinate(&chart, 2);
        assert!(eta.lie_derivative(&dq).is_structurally_zero());
    }

    #[test]
    fn lie_derivative_along_contracting_symmetry_scales_eta() {
        // For X = ∂q − p ∂p − z ∂z, L_X(dz − p dq) = −(dz − p dq).
        let chart = darboux_chart();
        let eta = eta(&chart);
        let x = VecField::new(
            &chart,
            vec![
                -&parse("z", &chart).unwrap(),
                -&parse("p", &chart).unwrap(),
                Expr::one(&chart),
            ],
        );
        let lie = eta.lie_derivative(&x);
        let diff = &lie + &eta;
        let pts = Sampler::default().points(&chart, 25).unwrap();
        assert!(diff.sup_coeff_at(&pts).unwrap() <= 1e-12, "L_X η + η = {diff:?}");
    }

    #[test]
    fn lie_derivative_of_function_is_directional_derivative() {
        let chart = darboux_chart();
        let f = parse("z^2 + p*q", &chart).unwrap();
        let x = VecField::new(
            &chart,
            vec![
                parse("p", &chart).unwrap(),
                Expr::zero(&chart),
                Expr::one(&chart),
            ],
        );
        let lie = DiffForm::function(&f).lie_derivative(&x);
        // X(f) = p·2z + 1·p = 2zp + p
        let expected = parse("p*2*z + p", &chart).unwrap();
        let pts = Sampler::default().points(&chart, 20).unwrap();
        for pt in &pts {
            assert_relative_eq!(
                lie.coeff(&[]).evaluate(pt).unwrap(),
                expected.evaluate(pt).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn commutator_matches_hand_computation() {
        // [z ∂z, ∂z] = −∂z
        let chart = Chart::new("line", &["z"]);
        let z = parse("z", &chart).unwrap();
        let x = VecField::coordinate(&chart, 0).scaled(&z);
        let y = VecField::coordinate(&chart, 0);
        let bracket = x.commutator(&y);
        assert_eq!(bracket, -&y);
    }

    #[test]
    fn pullback_of_area_form_matches_hand_expansion() {
        // Under (z, q, s) ↦ (z e^q, s e^{−q}), the pullback of ds'∧dz'
        // expands to ds∧dz + z ds∧dq − s dq∧dz.
        let src = Chart::new("reduced_total", &["z", "q", "s"])
            .with_domain("s", CoordDomain::nonzero());
        let tgt = Chart::new("base", &["zb", "sb"])
            .with_domain("sb", CoordDomain::nonzero());
        let map = SmoothMap::new(
            &src,
            &tgt,
            vec![
                parse("z*exp(q)", &src).unwrap(),
                parse("s*exp(-1*q)", &src).unwrap(),
            ],
        )
        .unwrap();
        let omega0 = DiffForm::d_coord(&tgt, 1).wedge(&DiffForm::d_coord(&tgt, 0));
        let pulled = omega0.pullback(&map).unwrap();

        let z = parse("z", &src).unwrap();
        let s = parse("s", &src).unwrap();
        let expected = DiffForm::from_terms(
            &src,
            2,
            vec![
                (vec![2, 0], Expr::one(&src)), // ds∧dz
                (vec![2, 1], z),               // z ds∧dq
                (vec![1, 0], -&s),             // −s dq∧dz
            ],
        );
        let pts = Sampler::default().points(&src, 25).unwrap();
        for pt in &pts {
            let a = pulled.matrix_at(pt).unwrap();
            let b = expected.matrix_at(pt).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-12, epsilon = 1e-12);
        }
    }

    #[test]
    fn pullback_requires_matching_target_chart() {
        let src = Chart::new("a", &["x"]);
        let tgt = Chart::new("b", &["y"]);
        let other = Chart::new("c", &["w"]);
        let map = SmoothMap::new(&src, &tgt, vec![parse("x", &src).unwrap()]).unwrap();
        let form = DiffForm::d_coord(&other, 0);
        assert!(matches!(
            form.pullback(&map),
            Err(Error::ChartMismatch { .. })
        ));
    }

    #[test]
    fn value_at_evaluates_determinant_minors() {
        let chart = darboux_chart();
        let eta = eta(&chart);
        let d_eta = eta.exterior_d(); // −dp∧dq
        let point = [0.3, 0.7, -0.2];
        let u = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let v = DVector::from_vec(vec![0.0, 0.0, 1.0]);
        // (−dp∧dq)(∂p, ∂q) = −1
        assert_relative_eq!(d_eta.value_at(&point, &[u.clone(), v.clone()]).unwrap(), -1.0);
        // antisymmetry
        assert_relative_eq!(d_eta.value_at(&point, &[v, u]).unwrap(), 1.0);
    }

    #[test]
    fn matrix_and_row_reject_wrong_degrees() {
        let chart = darboux_chart();
        let eta = eta(&chart);
        assert!(eta.matrix_at(&[0.0, 0.0, 0.0]).is_err());
        assert!(eta.exterior_d().row_at(&[0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn extension_to_cover_chart_preserves_values() {
        let chart = darboux_chart();
        let eta3 = eta(&chart);
        let total = chart.extended("total", "s", CoordDomain::nonzero()).unwrap();
        let eta4 = eta3.extend_to(&total).unwrap();
        assert_eq!(eta4.degree(), 1);
        let row = eta4.row_at(&[0.5, 0.25, -0.5, 1.0]).unwrap();
        assert_relative_eq!(row[0], 1.0);
        assert_relative_eq!(row[2], -0.25);
        assert_relative_eq!(row[3], 0.0);
    }

    #[test]
    fn jacobian_matches_component_gradients() {
        let src = Chart::new("plane", &["x", "y"]);
        let tgt = Chart::new("image", &["u"]);
        let map = SmoothMap::new(&src, &tgt, vec![parse("x*y^2", &src).unwrap()]).unwrap();
        let j = map.jacobian_at(&[0.5, -0.4]).unwrap();
        assert_relative_eq!(j[(0, 0)], 0.16, max_relative = 1e-12);
        assert_relative_eq!(j[(0, 1)], 2.0 * 0.5 * -0.4, max_relative = 1e-12);
    }
}
