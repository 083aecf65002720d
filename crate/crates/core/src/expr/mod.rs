//! Symbolic scalar expressions over a named coordinate chart.
//!
//! Expressions are immutable trees shared through [`Arc`], so cloning and
//! subtree reuse are cheap and thread-safe. The node set is deliberately
//! small: constants, chart coordinates, the four arithmetic operations,
//! powers with *rational* exponents, unary negation, and `sin`, `cos`,
//! `exp`, `log`.
//!
//! Printing is precedence-aware and round-trips: parsing the `Display`
//! output of any expression yields a structurally equal tree.

mod parser;

pub use parser::parse;

use std::fmt;
use std::sync::Arc;
use thiserror::Error;

// ---------------------------------------------------------------------------
// charts
// ---------------------------------------------------------------------------

/// Admissible values of one coordinate.
///
/// `Interval` bounds are used both for sampling and for trajectory domain
/// checks. `Nonzero` marks a scaling coordinate ranging over the nonzero
/// reals; `max_abs` only bounds *sampling*, membership merely requires a
/// (numerically) nonzero value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoordDomain {
    Interval(f64, f64),
    Nonzero { max_abs: f64 },
}

impl CoordDomain {
    pub const DEFAULT_NONZERO_MAX_ABS: f64 = 1.5;

    pub fn nonzero() -> Self {
        CoordDomain::Nonzero {
            max_abs: Self::DEFAULT_NONZERO_MAX_ABS,
        }
    }

    /// Membership test with a little slack on interval endpoints so that
    /// integrated trajectories are not rejected for roundoff.
    pub fn contains(&self, v: f64) -> bool {
        const SLACK: f64 = 1e-9;
        match *self {
            CoordDomain::Interval(lo, hi) => v >= lo - SLACK && v <= hi + SLACK,
            CoordDomain::Nonzero { .. } => v.abs() > 1e-12,
        }
    }
}

/// A named chart: an ordered list of coordinate names with per-coordinate
/// domains. Points are plain `&[f64]` slices ordered like `coords`.
#[derive(Debug)]
pub struct Chart {
    name: String,
    coords: Vec<String>,
    domains: Vec<CoordDomain>,
}

impl PartialEq for Chart {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.coords == other.coords
    }
}

impl Chart {
    /// Build a chart with the default `[-1, 1]` domain on every coordinate.
    ///
    /// Panics on empty or duplicate coordinate names (programmer error);
    /// loader-facing code should use [`Chart::checked`].
    pub fn new(name: &str, coords: &[&str]) -> Arc<Chart> {
        let domains = vec![CoordDomain::Interval(-1.0, 1.0); coords.len()];
        Self::checked(
            name,
            coords.iter().map(|c| c.to_string()).collect(),
            domains,
        )
        .expect("invalid chart")
    }

    /// Validating constructor used when chart data comes from files.
    pub fn checked(
        name: &str,
        coords: Vec<String>,
        domains: Vec<CoordDomain>,
    ) -> Result<Arc<Chart>, ExprError> {
        if coords.is_empty() {
            return Err(ExprError::Chart("chart has no coordinates".into()));
        }
        if coords.len() != domains.len() {
            return Err(ExprError::Chart(format!(
                "{} coordinates but {} domains",
                coords.len(),
                domains.len()
            )));
        }
        for (i, c) in coords.iter().enumerate() {
            if c.is_empty() {
                return Err(ExprError::Chart("empty coordinate name".into()));
            }
            if coords[..i].contains(c) {
                return Err(ExprError::Chart(format!("duplicate coordinate `{c}`")));
            }
        }
        Ok(Arc::new(Chart {
            name: name.to_string(),
            coords,
            domains,
        }))
    }

    /// Same chart with one coordinate's domain replaced.
    pub fn with_domain(self: &Arc<Self>, coord: &str, domain: CoordDomain) -> Arc<Chart> {
        let idx = self
            .index_of(coord)
            .unwrap_or_else(|| panic!("no coordinate `{coord}` on chart `{}`", self.name));
        let mut domains = self.domains.clone();
        domains[idx] = domain;
        Arc::new(Chart {
            name: self.name.clone(),
            coords: self.coords.clone(),
            domains,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[String] {
        &self.coords
    }

    pub fn coord(&self, i: usize) -> &str {
        &self.coords[i]
    }

    pub fn index_of(&self, coord: &str) -> Option<usize> {
        self.coords.iter().position(|c| c == coord)
    }

    pub fn domain(&self, i: usize) -> CoordDomain {
        self.domains[i]
    }

    /// Append one coordinate, producing a new chart (used to build total
    /// spaces of scaling covers). Fails if the name is already taken.
    pub fn extended(
        self: &Arc<Self>,
        name: &str,
        coord: &str,
        domain: CoordDomain,
    ) -> crate::Result<Arc<Chart>> {
        if self.index_of(coord).is_some() {
            return Err(crate::Error::CoordinateTaken(coord.to_string()));
        }
        let mut coords = self.coords.clone();
        coords.push(coord.to_string());
        let mut domains = self.domains.clone();
        domains.push(domain);
        Ok(Arc::new(Chart {
            name: name.to_string(),
            coords,
            domains,
        }))
    }

    /// First coordinate (index, value) violating its domain, if any.
    pub fn first_escape(&self, point: &[f64]) -> Option<(usize, f64)> {
        self.domains
            .iter()
            .zip(point)
            .enumerate()
            .find(|(_, (d, v))| !d.contains(**v))
            .map(|(i, (_, v))| (i, *v))
    }
}

/// Panic helper: geometric code composes expressions on one chart, so a
/// mismatch is a programming error rather than a runtime condition.
pub(crate) fn assert_same_chart(a: &Arc<Chart>, b: &Arc<Chart>) {
    assert!(
        a == b,
        "chart mismatch: `{}` vs `{}`",
        a.name(),
        b.name()
    );
}

// ---------------------------------------------------------------------------
// rational exponents
// ---------------------------------------------------------------------------

/// Reduced rational number with positive denominator; the only exponent type
/// allowed in power nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Ratio {
    num: i64,
    den: i64,
}

impl Ratio {
    pub fn new(num: i64, den: i64) -> Ratio {
        assert!(den != 0, "zero denominator");
        let g = gcd(num.unsigned_abs(), den.unsigned_abs()).max(1) as i64;
        let (mut num, mut den) = (num / g, den / g);
        if den < 0 {
            num = -num;
            den = -den;
        }
        Ratio { num, den }
    }

    pub fn integer(n: i64) -> Ratio {
        Ratio { num: n, den: 1 }
    }

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_one(&self) -> bool {
        self.num == 1 && self.den == 1
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    fn minus_one(&self) -> Ratio {
        Ratio::new(self.num - self.den, self.den)
    }
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl fmt::Display for Ratio {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_integer() {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

// ---------------------------------------------------------------------------
// expression trees
// ---------------------------------------------------------------------------

#[derive(Debug, PartialEq)]
pub(crate) enum Node {
    Const(f64),
    Var(usize),
    Add(Arc<Node>, Arc<Node>),
    Sub(Arc<Node>, Arc<Node>),
    Mul(Arc<Node>, Arc<Node>),
    Div(Arc<Node>, Arc<Node>),
    Pow(Arc<Node>, Ratio),
    Neg(Arc<Node>),
    Sin(Arc<Node>),
    Cos(Arc<Node>),
    Exp(Arc<Node>),
    Log(Arc<Node>),
}

/// A scalar expression bound to a chart.
#[derive(Clone)]
pub struct Expr {
    chart: Arc<Chart>,
    root: Arc<Node>,
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.chart == other.chart && self.root == other.root
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({} on {})", self, self.chart.name())
    }
}

/// Errors from parsing and evaluation. Domain failures carry the offending
/// subtree rendered back to source form.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExprError {
    #[error("syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("unknown coordinate `{0}`")]
    UnknownCoordinate(String),

    #[error("invalid chart: {0}")]
    Chart(String),

    #[error("division by zero while evaluating `{subtree}`")]
    DivisionByZero { subtree: String },

    #[error("log of non-positive value {value:e} while evaluating `{subtree}`")]
    LogDomain { value: f64, subtree: String },

    #[error("power of negative or zero base {base:e} outside its domain while evaluating `{subtree}`")]
    PowDomain { base: f64, subtree: String },

    #[error("non-finite value while evaluating `{subtree}`")]
    NonFinite { subtree: String },

    #[error("point has {got} coordinates, chart `{chart}` has {expected}")]
    PointDimension {
        chart: String,
        expected: usize,
        got: usize,
    },
}

impl Expr {
    fn wrap(chart: &Arc<Chart>, root: Arc<Node>) -> Expr {
        Expr {
            chart: chart.clone(),
            root,
        }
    }

    pub fn constant(chart: &Arc<Chart>, value: f64) -> Expr {
        Expr::wrap(chart, Arc::new(Node::Const(value)))
    }

    pub fn zero(chart: &Arc<Chart>) -> Expr {
        Expr::constant(chart, 0.0)
    }

    pub fn one(chart: &Arc<Chart>) -> Expr {
        Expr::constant(chart, 1.0)
    }

    /// Coordinate expression by name.
    pub fn var(chart: &Arc<Chart>, coord: &str) -> Result<Expr, ExprError> {
        chart
            .index_of(coord)
            .map(|i| Expr::wrap(chart, Arc::new(Node::Var(i))))
            .ok_or_else(|| ExprError::UnknownCoordinate(coord.to_string()))
    }

    /// Coordinate expression by index (panics out of range).
    pub fn coord(chart: &Arc<Chart>, index: usize) -> Expr {
        assert!(index < chart.dim(), "coordinate index out of range");
        Expr::wrap(chart, Arc::new(Node::Var(index)))
    }

    pub fn chart(&self) -> &Arc<Chart> {
        &self.chart
    }

    pub fn sin(&self) -> Expr {
        Expr::wrap(&self.chart, Arc::new(Node::Sin(self.root.clone())))
    }

    pub fn cos(&self) -> Expr {
        Expr::wrap(&self.chart, Arc::new(Node::Cos(self.root.clone())))
    }

    pub fn exp(&self) -> Expr {
        Expr::wrap(&self.chart, Arc::new(Node::Exp(self.root.clone())))
    }

    pub fn log(&self) -> Expr {
        Expr::wrap(&self.chart, Arc::new(Node::Log(self.root.clone())))
    }

    /// Power with rational exponent `num/den`.
    pub fn pow(&self, num: i64, den: i64) -> Expr {
        Expr::wrap(
            &self.chart,
            Arc::new(Node::Pow(self.root.clone(), Ratio::new(num, den))),
        )
    }

    /// The constant value, if this is a bare constant node.
    pub fn as_const(&self) -> Option<f64> {
        match *self.root {
            Node::Const(c) => Some(c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(*self.root, Node::Const(c) if c == 0.0)
    }

    /// Whether the tree mentions coordinate `index` at all.
    pub fn depends_on(&self, index: usize) -> bool {
        fn walk(n: &Node, index: usize) -> bool {
            match n {
                Node::Const(_) => false,
                Node::Var(i) => *i == index,
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) => {
                    walk(a, index) || walk(b, index)
                }
                Node::Pow(a, _)
                | Node::Neg(a)
                | Node::Sin(a)
                | Node::Cos(a)
                | Node::Exp(a)
                | Node::Log(a) => walk(a, index),
            }
        }
        walk(&self.root, index)
    }

    // -- evaluation ---------------------------------------------------------

    /// Evaluate at a point (slice ordered like the chart coordinates).
    pub fn evaluate(&self, point: &[f64]) -> Result<f64, ExprError> {
        if point.len() != self.chart.dim() {
            return Err(ExprError::PointDimension {
                chart: self.chart.name().to_string(),
                expected: self.chart.dim(),
                got: point.len(),
            });
        }
        eval_node(&self.root, point, &self.chart)
    }

    // -- differentiation ----------------------------------------------------

    /// Partial derivative with respect to the coordinate at `index`,
    /// constant-folded after the product/chain rules run.
    pub fn differentiate(&self, index: usize) -> Expr {
        assert!(index < self.chart.dim(), "coordinate index out of range");
        let d = diff_node(&self.root, index);
        Expr::wrap(&self.chart, fold_node(&d))
    }

    /// Partial derivative by coordinate name.
    pub fn differentiate_name(&self, coord: &str) -> Result<Expr, ExprError> {
        let idx = self
            .chart
            .index_of(coord)
            .ok_or_else(|| ExprError::UnknownCoordinate(coord.to_string()))?;
        Ok(self.differentiate(idx))
    }

    /// All partial derivatives, in chart order.
    pub fn gradient(&self) -> Vec<Expr> {
        (0..self.chart.dim()).map(|i| self.differentiate(i)).collect()
    }

    /// Constant-fold the whole tree.
    pub fn fold(&self) -> Expr {
        Expr::wrap(&self.chart, fold_node(&self.root))
    }

    // -- structural substitution --------------------------------------------

    /// Substitute each coordinate of this expression's chart by the given
    /// expression over another chart: the composition `self ∘ components`.
    ///
    /// `components[i]` replaces coordinate `i`; all must share one chart.
    pub fn compose(&self, components: &[Expr]) -> Expr {
        assert_eq!(
            components.len(),
            self.chart.dim(),
            "need one component per coordinate of `{}`",
            self.chart.name()
        );
        let source = components[0].chart();
        for c in components {
            assert_same_chart(source, c.chart());
        }
        let roots: Vec<Arc<Node>> = components.iter().map(|c| c.root.clone()).collect();
        Expr::wrap(source, subst_node(&self.root, &roots))
    }

    /// Reinterpret the expression on a chart that contains all coordinates
    /// this one uses (matched by name), e.g. lifting base-chart data to a
    /// cover's total chart.
    pub fn extend_to(&self, target: &Arc<Chart>) -> crate::Result<Expr> {
        let mut map = Vec::with_capacity(self.chart.dim());
        for c in self.chart.coords() {
            let idx = target.index_of(c).ok_or_else(|| crate::Error::ChartMismatch {
                expected: format!("chart containing `{c}`"),
                got: target.name().to_string(),
            })?;
            map.push(idx);
        }
        fn remap(n: &Node, map: &[usize]) -> Arc<Node> {
            match n {
                Node::Const(c) => Arc::new(Node::Const(*c)),
                Node::Var(i) => Arc::new(Node::Var(map[*i])),
                Node::Add(a, b) => Arc::new(Node::Add(remap(a, map), remap(b, map))),
                Node::Sub(a, b) => Arc::new(Node::Sub(remap(a, map), remap(b, map))),
                Node::Mul(a, b) => Arc::new(Node::Mul(remap(a, map), remap(b, map))),
                Node::Div(a, b) => Arc::new(Node::Div(remap(a, map), remap(b, map))),
                Node::Pow(a, r) => Arc::new(Node::Pow(remap(a, map), *r)),
                Node::Neg(a) => Arc::new(Node::Neg(remap(a, map))),
                Node::Sin(a) => Arc::new(Node::Sin(remap(a, map))),
                Node::Cos(a) => Arc::new(Node::Cos(remap(a, map))),
                Node::Exp(a) => Arc::new(Node::Exp(remap(a, map))),
                Node::Log(a) => Arc::new(Node::Log(remap(a, map))),
            }
        }
        Ok(Expr::wrap(target, remap(&self.root, &map)))
    }

    pub(crate) fn from_root(chart: &Arc<Chart>, root: Arc<Node>) -> Expr {
        Expr::wrap(chart, root)
    }
}

// ---------------------------------------------------------------------------
// operators
// ---------------------------------------------------------------------------

macro_rules! binary_op {
    ($trait:ident, $method:ident, $node:ident) => {
        impl std::ops::$trait for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                assert_same_chart(&self.chart, &rhs.chart);
                Expr::wrap(
                    &self.chart,
                    Arc::new(Node::$node(self.root.clone(), rhs.root.clone())),
                )
            }
        }
        impl std::ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                std::ops::$trait::$method(&self, &rhs)
            }
        }
    };
}

binary_op!(Add, add, Add);
binary_op!(Sub, sub, Sub);
binary_op!(Mul, mul, Mul);
binary_op!(Div, div, Div);

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::wrap(&self.chart, Arc::new(Node::Neg(self.root.clone())))
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        -&self
    }
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

fn render(node: &Node, chart: &Chart) -> String {
    let mut s = String::new();
    print_node(node, chart, &mut s);
    s
}

fn eval_node(node: &Node, p: &[f64], chart: &Chart) -> Result<f64, ExprError> {
    let v = match node {
        Node::Const(c) => *c,
        Node::Var(i) => p[*i],
        Node::Add(a, b) => eval_node(a, p, chart)? + eval_node(b, p, chart)?,
        Node::Sub(a, b) => eval_node(a, p, chart)? - eval_node(b, p, chart)?,
        Node::Mul(a, b) => eval_node(a, p, chart)? * eval_node(b, p, chart)?,
        Node::Div(a, b) => {
            let den = eval_node(b, p, chart)?;
            if den == 0.0 {
                return Err(ExprError::DivisionByZero {
                    subtree: render(node, chart),
                });
            }
            eval_node(a, p, chart)? / den
        }
        Node::Pow(a, r) => {
            let base = eval_node(a, p, chart)?;
            if r.is_integer() {
                if base == 0.0 && r.num() < 0 {
                    return Err(ExprError::PowDomain {
                        base,
                        subtree: render(node, chart),
                    });
                }
                let n = r.num();
                if n.abs() <= i32::MAX as i64 {
                    base.powi(n as i32)
                } else {
                    base.powf(n as f64)
                }
            } else {
                if base < 0.0 || (base == 0.0 && r.num() < 0) {
                    return Err(ExprError::PowDomain {
                        base,
                        subtree: render(node, chart),
                    });
                }
                base.powf(r.as_f64())
            }
        }
        Node::Neg(a) => -eval_node(a, p, chart)?,
        Node::Sin(a) => eval_node(a, p, chart)?.sin(),
        Node::Cos(a) => eval_node(a, p, chart)?.cos(),
        Node::Exp(a) => eval_node(a, p, chart)?.exp(),
        Node::Log(a) => {
            let v = eval_node(a, p, chart)?;
            if v <= 0.0 {
                return Err(ExprError::LogDomain {
                    value: v,
                    subtree: render(node, chart),
                });
            }
            v.ln()
        }
    };
    if v.is_finite() {
        Ok(v)
    } else {
        Err(ExprError::NonFinite {
            subtree: render(node, chart),
        })
    }
}

// ---------------------------------------------------------------------------
// differentiation
// ---------------------------------------------------------------------------

fn diff_node(node: &Node, i: usize) -> Arc<Node> {
    use Node::*;
    match node {
        Const(_) => Arc::new(Const(0.0)),
        Var(j) => Arc::new(Const(if *j == i { 1.0 } else { 0.0 })),
        Add(a, b) => Arc::new(Add(diff_node(a, i), diff_node(b, i))),
        Sub(a, b) => Arc::new(Sub(diff_node(a, i), diff_node(b, i))),
        Mul(a, b) => Arc::new(Add(
            Arc::new(Mul(diff_node(a, i), b.clone())),
            Arc::new(Mul(a.clone(), diff_node(b, i))),
        )),
        Div(a, b) => Arc::new(Div(
            Arc::new(Sub(
                Arc::new(Mul(diff_node(a, i), b.clone())),
                Arc::new(Mul(a.clone(), diff_node(b, i))),
            )),
            Arc::new(Pow(b.clone(), Ratio::integer(2))),
        )),
        Pow(a, r) => Arc::new(Mul(
            Arc::new(Mul(
                Arc::new(Const(r.as_f64())),
                Arc::new(Pow(a.clone(), r.minus_one())),
            )),
            diff_node(a, i),
        )),
        Neg(a) => Arc::new(Neg(diff_node(a, i))),
        Sin(a) => Arc::new(Mul(Arc::new(Cos(a.clone())), diff_node(a, i))),
        Cos(a) => Arc::new(Neg(Arc::new(Mul(Arc::new(Sin(a.clone())), diff_node(a, i))))),
        Exp(a) => Arc::new(Mul(Arc::new(Exp(a.clone())), diff_node(a, i))),
        Log(a) => Arc::new(Div(diff_node(a, i), a.clone())),
    }
}

// ---------------------------------------------------------------------------
// constant folding
// ---------------------------------------------------------------------------

fn const_of(n: &Node) -> Option<f64> {
    match n {
        Node::Const(c) => Some(*c),
        _ => None,
    }
}

/// Fold constants bottom-up. Only folds when the result is finite, and never
/// folds operations outside their numeric domain (e.g. `log` of a
/// non-positive constant stays symbolic so evaluation reports it properly).
fn fold_node(node: &Node) -> Arc<Node> {
    use Node::*;
    match node {
        Const(c) => Arc::new(Const(*c)),
        Var(i) => Arc::new(Var(*i)),
        Add(a, b) => {
            let (a, b) = (fold_node(a), fold_node(b));
            match (const_of(&a), const_of(&b)) {
                (Some(x), Some(y)) if (x + y).is_finite() => Arc::new(Const(x + y)),
                (Some(x), _) if x == 0.0 => b,
                (_, Some(y)) if y == 0.0 => a,
                _ => Arc::new(Add(a, b)),
            }
        }
        Sub(a, b) => {
            let (a, b) = (fold_node(a), fold_node(b));
            match (const_of(&a), const_of(&b)) {
                (Some(x), Some(y)) if (x - y).is_finite() => Arc::new(Const(x - y)),
                (_, Some(y)) if y == 0.0 => a,
                (Some(x), _) if x == 0.0 => fold_node(&Neg(b)),
                _ => Arc::new(Sub(a, b)),
            }
        }
        Mul(a, b) => {
            let (a, b) = (fold_node(a), fold_node(b));
            match (const_of(&a), const_of(&b)) {
                (Some(x), Some(y)) if (x * y).is_finite() => Arc::new(Const(x * y)),
                (Some(x), _) if x == 0.0 => Arc::new(Const(0.0)),
                (_, Some(y)) if y == 0.0 => Arc::new(Const(0.0)),
                (Some(x), _) if x == 1.0 => b,
                (_, Some(y)) if y == 1.0 => a,
                (Some(x), _) if x == -1.0 => fold_node(&Neg(b)),
                (_, Some(y)) if y == -1.0 => fold_node(&Neg(a)),
                _ => Arc::new(Mul(a, b)),
            }
        }
        Div(a, b) => {
            let (a, b) = (fold_node(a), fold_node(b));
            match (const_of(&a), const_of(&b)) {
                (Some(x), Some(y)) if y != 0.0 && (x / y).is_finite() => Arc::new(Const(x / y)),
                (Some(x), _) if x == 0.0 => Arc::new(Const(0.0)),
                (_, Some(y)) if y == 1.0 => a,
                _ => Arc::new(Div(a, b)),
            }
        }
        Pow(a, r) => {
            let a = fold_node(a);
            if r.is_zero() {
                return Arc::new(Const(1.0));
            }
            if r.is_one() {
                return a;
            }
            if let Some(x) = const_of(&a) {
                let ok_domain = if r.is_integer() {
                    x != 0.0 || r.num() > 0
                } else {
                    x > 0.0 || (x == 0.0 && r.num() > 0)
                };
                if ok_domain {
                    let v = if r.is_integer() && r.num().abs() <= i32::MAX as i64 {
                        x.powi(r.num() as i32)
                    } else {
                        x.powf(r.as_f64())
                    };
                    if v.is_finite() {
                        return Arc::new(Const(v));
                    }
                }
            }
            Arc::new(Pow(a, *r))
        }
        Neg(a) => {
            let a = fold_node(a);
            match &*a {
                Node::Const(c) => Arc::new(Const(-*c)),
                Node::Neg(inner) => inner.clone(),
                _ => Arc::new(Neg(a)),
            }
        }
        Sin(a) => fold_unary(fold_node(a), Sin, |x| Some(x.sin())),
        Cos(a) => fold_unary(fold_node(a), Cos, |x| Some(x.cos())),
        Exp(a) => fold_unary(fold_node(a), Exp, |x| Some(x.exp())),
        Log(a) => fold_unary(fold_node(a), Log, |x| if x > 0.0 { Some(x.ln()) } else { None }),
    }
}

fn fold_unary(
    a: Arc<Node>,
    ctor: fn(Arc<Node>) -> Node,
    f: fn(f64) -> Option<f64>,
) -> Arc<Node> {
    if let Some(x) = const_of(&a) {
        if let Some(v) = f(x) {
            if v.is_finite() {
                return Arc::new(Node::Const(v));
            }
        }
    }
    Arc::new(ctor(a))
}

// ---------------------------------------------------------------------------
// substitution
// ---------------------------------------------------------------------------

fn subst_node(node: &Node, repl: &[Arc<Node>]) -> Arc<Node> {
    use Node::*;
    match node {
        Const(c) => Arc::new(Const(*c)),
        Var(i) => repl[*i].clone(),
        Add(a, b) => Arc::new(Add(subst_node(a, repl), subst_node(b, repl))),
        Sub(a, b) => Arc::new(Sub(subst_node(a, repl), subst_node(b, repl))),
        Mul(a, b) => Arc::new(Mul(subst_node(a, repl), subst_node(b, repl))),
        Div(a, b) => Arc::new(Div(subst_node(a, repl), subst_node(b, repl))),
        Pow(a, r) => Arc::new(Pow(subst_node(a, repl), *r)),
        Neg(a) => Arc::new(Neg(subst_node(a, repl))),
        Sin(a) => Arc::new(Sin(subst_node(a, repl))),
        Cos(a) => Arc::new(Cos(subst_node(a, repl))),
        Exp(a) => Arc::new(Exp(subst_node(a, repl))),
        Log(a) => Arc::new(Log(subst_node(a, repl))),
    }
}

// ---------------------------------------------------------------------------
// printing
// ---------------------------------------------------------------------------

/// Printed precedence, used to decide parenthesization. Mirrors the parser
/// grammar: sum (1) < product (2) < unary minus (3) < power (5) < atom (6).
fn print_prec(n: &Node) -> u8 {
    match n {
        Node::Add(..) | Node::Sub(..) => 1,
        Node::Mul(..) | Node::Div(..) => 2,
        Node::Neg(_) => 3,
        Node::Const(c) if *c < 0.0 => 3,
        Node::Pow(..) => 5,
        _ => 6,
    }
}

fn print_child(n: &Node, chart: &Chart, out: &mut String, needs_paren: bool) {
    if needs_paren {
        out.push('(');
        print_node(n, chart, out);
        out.push(')');
    } else {
        print_node(n, chart, out);
    }
}

fn print_node(n: &Node, chart: &Chart, out: &mut String) {
    use std::fmt::Write;
    match n {
        Node::Const(c) => {
            let _ = write!(out, "{c}");
        }
        Node::Var(i) => out.push_str(chart.coord(*i)),
        Node::Add(a, b) => {
            print_child(a, chart, out, print_prec(a) < 1);
            out.push_str(" + ");
            print_child(b, chart, out, print_prec(b) <= 1);
        }
        Node::Sub(a, b) => {
            print_child(a, chart, out, print_prec(a) < 1);
            out.push_str(" - ");
            print_child(b, chart, out, print_prec(b) <= 1);
        }
        Node::Mul(a, b) => {
            print_child(a, chart, out, print_prec(a) < 2);
            out.push('*');
            print_child(b, chart, out, print_prec(b) <= 2);
        }
        Node::Div(a, b) => {
            print_child(a, chart, out, print_prec(a) < 2);
            out.push('/');
            print_child(b, chart, out, print_prec(b) <= 2);
        }
        Node::Neg(a) => {
            out.push('-');
            // A bare constant after `-` would be re-lexed as a negative
            // literal; parenthesize so the tree round-trips.
            let paren = print_prec(a) <= 3 || matches!(**a, Node::Const(_));
            print_child(a, chart, out, paren);
        }
        Node::Pow(a, r) => {
            print_child(a, chart, out, print_prec(a) < 6);
            out.push('^');
            if r.is_integer() && r.num() >= 0 {
                let _ = write!(out, "{}", r.num());
            } else {
                let _ = write!(out, "({r})");
            }
        }
        Node::Sin(a) => print_call("sin", a, chart, out),
        Node::Cos(a) => print_call("cos", a, chart, out),
        Node::Exp(a) => print_call("exp", a, chart, out),
        Node::Log(a) => print_call("log", a, chart, out),
    }
}

fn print_call(name: &str, a: &Node, chart: &Chart, out: &mut String) {
    out.push_str(name);
    out.push('(');
    print_node(a, chart, out);
    out.push(')');
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut s = String::new();
        print_node(&self.root, &self.chart, &mut s);
        f.write_str(&s)
    }
}

#[cfg(test)]
mod tests;
