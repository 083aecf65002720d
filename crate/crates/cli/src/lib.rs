//! Scene-driven command layer over the core toolkit.
//!
//! A *scene* is a JSON document (schema 1) that declares a chart, named
//! differential forms, vector fields, scalar functions, a hyperplane field
//! with a claimed rank, submanifolds, group actions, quotient data, and a
//! sampling plan. Commands load a scene, run the requested computation, and
//! emit a deterministic JSON report whose `assertions` array decides the
//! process exit code.
//!
//! Exit code contract:
//! * `0` — every assertion in the produced report passed,
//! * `1` — at least one assertion failed (the report is still emitted),
//! * `2` — the scene failed validation (parse errors, unresolved names,
//!   malformed expressions, bad flags),
//! * `3` — an I/O error prevented reading inputs or writing artifacts.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::Deserialize;
use serde_json::{json, Map, Value};

use contactred_core::cover::CoverBundle;
use contactred_core::dynamics::{flow, DarbouxDynamics};
use contactred_core::expr::{parse, Chart, CoordDomain, Expr};
use contactred_core::exterior::{DiffForm, SmoothMap, VecField};
use contactred_core::precontact::{verify_precontact, HyperplaneField};
use contactred_core::reduction::{
    classify_submanifold, moment_map, mwm_pipeline, verify_reduction, ActionSpec, BaseQuotient,
    ConstraintSubmanifold, MomentMap, QuotientData, TRANSVERSALITY_THRESHOLD,
};
use contactred_core::sample::Sampler;

/// Environment variable that overrides the seed declared in a scene.
pub const SEED_ENV: &str = "CONTACTRED_SEED";

/// Tolerance for comparing computed moment components against expected ones.
const MOMENT_MATCH_TOL: f64 = 1e-10;

/// Tolerance for fibrewise homogeneity of moment components.
const HOMOGENEITY_TOL: f64 = 1e-9;

/// Tolerance for the pairwise equivariance residual of a moment map.
const EQUIVARIANCE_TOL: f64 = 1e-9;

/// Fibre weights used when probing moment homogeneity.
const HOMOGENEITY_WEIGHTS: [f64; 3] = [-2.0, 0.5, 3.0];

/// Errors surfaced by the command layer, tagged by exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// Scene validation failure: exit code 2.
    #[error("scene error: {0}")]
    Scene(String),
    /// Computation failure while running a command: exit code 1.
    #[error("computation error: {0}")]
    Compute(#[from] contactred_core::Error),
    /// Filesystem failure: exit code 3.
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    /// Process exit code mandated for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Scene(_) => 2,
            CliError::Compute(_) => 1,
            CliError::Io(_) => 3,
        }
    }
}

/// Shorthand for command-layer results.
pub type CliResult<T> = Result<T, CliError>;

// ---------------------------------------------------------------------------
// Scene schema (version 1)
// ---------------------------------------------------------------------------

/// Coordinate domain declaration inside a chart spec.
#[derive(Debug, Clone, Deserialize)]
pub enum DomainSpec {
    /// Closed interval `[lo, hi]`.
    #[serde(rename = "interval")]
    Interval([f64; 2]),
    /// Symmetric punctured interval `[-max, max] \ {0}`.
    #[serde(rename = "nonzero")]
    Nonzero(f64),
}

/// Chart declaration: name, coordinate names, and per-coordinate domains.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChartSpec {
    pub name: String,
    pub coords: Vec<String>,
    pub domains: Vec<DomainSpec>,
}

/// A differential form given degree-by-degree as `"z^q": "coeff"` entries.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FormSpec {
    pub degree: usize,
    pub terms: BTreeMap<String, String>,
}

/// Hyperplane field declaration: defining form name plus the claimed rank.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperplaneSpec {
    pub form: String,
    pub rank: usize,
}

/// Group action declaration: generator names plus optional structure
/// constants `c[l][i][j]` (omitted means abelian).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionSceneSpec {
    pub fields: Vec<String>,
    #[serde(default)]
    pub structure: Option<Vec<Vec<Vec<f64>>>>,
}

/// Base-level quotient data attached to a cover-level quotient.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseQuotientSpec {
    pub reduced_chart: ChartSpec,
    pub map: Vec<String>,
    pub reduced_form: FormSpec,
    pub submanifold: String,
}

/// Quotient declaration: projection off the cover chart and the reduced form
/// it should pull back to, with optional base-level shadow data.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuotientSpec {
    pub reduced_chart: ChartSpec,
    pub map: Vec<String>,
    pub reduced_form: FormSpec,
    #[serde(default)]
    pub base: Option<BaseQuotientSpec>,
}

/// Sampling plan: how many points, which seed, per-coordinate boxes, and
/// excluded loci (`skip points where |expr| < 0.05`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingSpec {
    pub count: usize,
    pub seed: u64,
    #[serde(default)]
    pub boxes: BTreeMap<String, [f64; 2]>,
    #[serde(default)]
    pub excluded: Vec<String>,
}

/// Declared expectations a command turns into report assertions.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExpectSpec {
    pub contact: Option<bool>,
    pub precontact: Option<bool>,
    pub characteristic_dim: Option<usize>,
    pub cover_rank: Option<usize>,
    pub constant_rank: Option<bool>,
    pub restricted_kernel_dim: Option<usize>,
    pub coisotropic: Option<bool>,
    pub isotropic: Option<bool>,
    pub legendrian: Option<bool>,
    pub moment: Option<Vec<String>>,
    pub g0mu_dim: Option<usize>,
    pub open_dense_restriction: Option<bool>,
    pub reduction_pass: Option<bool>,
    pub max_pullback_residual: Option<f64>,
}

/// Top-level scene document.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scene {
    pub schema: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub chart: ChartSpec,
    #[serde(default)]
    pub forms: BTreeMap<String, FormSpec>,
    #[serde(default)]
    pub fields: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub functions: BTreeMap<String, String>,
    pub hyperplane_field: HyperplaneSpec,
    #[serde(default)]
    pub submanifolds: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub actions: BTreeMap<String, ActionSceneSpec>,
    #[serde(default)]
    pub quotients: BTreeMap<String, QuotientSpec>,
    pub sampling: SamplingSpec,
    #[serde(default)]
    pub expect: ExpectSpec,
}

// ---------------------------------------------------------------------------
// Scene -> core objects
// ---------------------------------------------------------------------------

/// A scene resolved into live core objects, ready to run commands against.
pub struct BuiltScene {
    pub name: String,
    pub chart: Arc<Chart>,
    pub field: HyperplaneField,
    pub rank: usize,
    pub bundle: CoverBundle,
    pub forms: BTreeMap<String, DiffForm>,
    pub fields: BTreeMap<String, VecField>,
    pub functions: BTreeMap<String, Expr>,
    pub submanifolds: BTreeMap<String, ConstraintSubmanifold>,
    pub actions: BTreeMap<String, ActionSpec>,
    pub quotients: BTreeMap<String, QuotientData>,
    pub sampler: Sampler,
    pub count: usize,
    pub excluded: Vec<String>,
    pub expect: ExpectSpec,
    pub seed: u64,
}

fn scene_err(msg: impl Into<String>) -> CliError {
    CliError::Scene(msg.into())
}

fn eval(expr: &Expr, point: &[f64]) -> CliResult<f64> {
    expr.evaluate(point)
        .map_err(|e| CliError::Compute(e.into()))
}

fn build_chart(spec: &ChartSpec) -> CliResult<Arc<Chart>> {
    if spec.coords.len() != spec.domains.len() {
        return Err(scene_err(format!(
            "chart '{}' declares {} coordinates but {} domains",
            spec.name,
            spec.coords.len(),
            spec.domains.len()
        )));
    }
    let domains = spec
        .domains
        .iter()
        .map(|d| match d {
            DomainSpec::Interval([lo, hi]) => CoordDomain::Interval(*lo, *hi),
            DomainSpec::Nonzero(max_abs) => CoordDomain::Nonzero { max_abs: *max_abs },
        })
        .collect();
    Chart::checked(&spec.name, spec.coords.clone(), domains)
        .map_err(|e| scene_err(format!("chart '{}': {e}", spec.name)))
}

fn parse_on(src: &str, chart: &Arc<Chart>, context: &str) -> CliResult<Expr> {
    parse(src, chart).map_err(|e| scene_err(format!("{context}: cannot parse '{src}': {e}")))
}

fn build_form(name: &str, spec: &FormSpec, chart: &Arc<Chart>) -> CliResult<DiffForm> {
    let mut terms = Vec::new();
    for (key, coeff) in &spec.terms {
        let mut indices = Vec::new();
        for part in key.split('^') {
            let part = part.trim();
            let idx = chart
                .coords()
                .iter()
                .position(|c| c == part)
                .ok_or_else(|| {
                    scene_err(format!(
                        "form '{name}': unknown coordinate '{part}' in term key '{key}'"
                    ))
                })?;
            indices.push(idx);
        }
        if indices.len() != spec.degree {
            return Err(scene_err(format!(
                "form '{name}': term '{key}' has {} factors but the declared degree is {}",
                indices.len(),
                spec.degree
            )));
        }
        let mut sorted = indices.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != indices.len() {
            return Err(scene_err(format!(
                "form '{name}': term '{key}' repeats a coordinate"
            )));
        }
        let expr = parse_on(coeff, chart, &format!("form '{name}', term '{key}'"))?;
        terms.push((indices, expr));
    }
    Ok(DiffForm::from_terms(chart, spec.degree, terms))
}

/// Resolve a parsed scene into core objects, validating every name and
/// expression. All failures map to exit code 2.
pub fn build_scene(scene: &Scene) -> CliResult<BuiltScene> {
    if scene.schema != 1 {
        return Err(scene_err(format!(
            "unsupported schema version {} (this build understands 1)",
            scene.schema
        )));
    }
    let chart = build_chart(&scene.chart)?;

    let mut forms = BTreeMap::new();
    for (name, spec) in &scene.forms {
        forms.insert(name.clone(), build_form(name, spec, &chart)?);
    }

    let eta = forms
        .get(&scene.hyperplane_field.form)
        .ok_or_else(|| {
            scene_err(format!(
                "hyperplane field references unknown form '{}'",
                scene.hyperplane_field.form
            ))
        })?
        .clone();
    if eta.degree() != 1 {
        return Err(scene_err(format!(
            "hyperplane field form '{}' must be a 1-form, found degree {}",
            scene.hyperplane_field.form,
            eta.degree()
        )));
    }
    let rank = scene.hyperplane_field.rank;
    if 2 * rank + 1 > chart.dim() {
        return Err(scene_err(format!(
            "claimed rank {rank} needs dimension >= {}, chart has {}",
            2 * rank + 1,
            chart.dim()
        )));
    }
    let field = HyperplaneField::new(eta).map_err(|e| scene_err(format!("hyperplane field: {e}")))?;
    let bundle = CoverBundle::new(field.clone(), rank)
        .map_err(|e| scene_err(format!("scaling cover: {e}")))?;

    let mut fields = BTreeMap::new();
    for (name, comps) in &scene.fields {
        if comps.len() != chart.dim() {
            return Err(scene_err(format!(
                "field '{name}' has {} components, chart has dimension {}",
                comps.len(),
                chart.dim()
            )));
        }
        let exprs = comps
            .iter()
            .map(|c| parse_on(c, &chart, &format!("field '{name}'")))
            .collect::<CliResult<Vec<_>>>()?;
        fields.insert(name.clone(), VecField::new(&chart, exprs));
    }

    let mut functions = BTreeMap::new();
    for (name, src) in &scene.functions {
        functions.insert(
            name.clone(),
            parse_on(src, &chart, &format!("function '{name}'"))?,
        );
    }

    let mut submanifolds = BTreeMap::new();
    for (name, constraints) in &scene.submanifolds {
        let exprs = constraints
            .iter()
            .map(|c| parse_on(c, &chart, &format!("submanifold '{name}'")))
            .collect::<CliResult<Vec<_>>>()?;
        let sub = ConstraintSubmanifold::new(chart.clone(), exprs)
            .map_err(|e| scene_err(format!("submanifold '{name}': {e}")))?;
        submanifolds.insert(name.clone(), sub);
    }

    let mut actions = BTreeMap::new();
    for (name, spec) in &scene.actions {
        let mut generator_fields = Vec::new();
        for field_name in &spec.fields {
            let field = fields.get(field_name).ok_or_else(|| {
                scene_err(format!(
                    "action '{name}' references unknown field '{field_name}'"
                ))
            })?;
            generator_fields.push(field.clone());
        }
        let k = spec.fields.len();
        let action = match &spec.structure {
            None => ActionSpec::abelian(spec.fields.clone(), generator_fields),
            Some(raw) => {
                if raw.len() != k || raw.iter().any(|m| m.len() != k || m.iter().any(|r| r.len() != k)) {
                    return Err(scene_err(format!(
                        "action '{name}': structure constants must form a {k}x{k}x{k} array"
                    )));
                }
                let mut matrices = Vec::with_capacity(k);
                for level in raw {
                    let mut m = nalgebra::DMatrix::zeros(k, k);
                    for (i, row) in level.iter().enumerate() {
                        for (j, value) in row.iter().enumerate() {
                            m[(i, j)] = *value;
                        }
                    }
                    matrices.push(m);
                }
                ActionSpec::new(spec.fields.clone(), generator_fields, matrices)
            }
        }
        .map_err(|e| scene_err(format!("action '{name}': {e}")))?;
        actions.insert(name.clone(), action);
    }

    let mut quotients = BTreeMap::new();
    for (name, spec) in &scene.quotients {
        let reduced_chart = build_chart(&spec.reduced_chart)?;
        let components = spec
            .map
            .iter()
            .map(|c| parse_on(c, bundle.total_chart(), &format!("quotient '{name}' map")))
            .collect::<CliResult<Vec<_>>>()?;
        let map = SmoothMap::new(bundle.total_chart(), &reduced_chart, components)
            .map_err(|e| scene_err(format!("quotient '{name}': {e}")))?;
        let omega0 = build_form(
            &format!("{name}.reduced_form"),
            &spec.reduced_form,
            &reduced_chart,
        )?;
        if omega0.degree() != 2 {
            return Err(scene_err(format!(
                "quotient '{name}': reduced form must be a 2-form"
            )));
        }
        let base = match &spec.base {
            None => None,
            Some(base_spec) => {
                let base_chart = build_chart(&base_spec.reduced_chart)?;
                let base_components = base_spec
                    .map
                    .iter()
                    .map(|c| parse_on(c, &chart, &format!("quotient '{name}' base map")))
                    .collect::<CliResult<Vec<_>>>()?;
                let base_map = SmoothMap::new(&chart, &base_chart, base_components)
                    .map_err(|e| scene_err(format!("quotient '{name}' base: {e}")))?;
                let eta0 = build_form(
                    &format!("{name}.base.reduced_form"),
                    &base_spec.reduced_form,
                    &base_chart,
                )?;
                if eta0.degree() != 1 {
                    return Err(scene_err(format!(
                        "quotient '{name}': base reduced form must be a 1-form"
                    )));
                }
                let sub = submanifolds
                    .get(&base_spec.submanifold)
                    .ok_or_else(|| {
                        scene_err(format!(
                            "quotient '{name}' base references unknown submanifold '{}'",
                            base_spec.submanifold
                        ))
                    })?
                    .clone();
                Some(BaseQuotient {
                    map: base_map,
                    eta0,
                    sub,
                })
            }
        };
        quotients.insert(
            name.clone(),
            QuotientData {
                map,
                omega0,
                base,
            },
        );
    }

    // Excluded loci must parse on the base chart; they are re-parsed on the
    // cover chart on demand (base coordinate names stay valid there).
    for (i, src) in scene.sampling.excluded.iter().enumerate() {
        parse_on(src, &chart, &format!("sampling.excluded[{i}]"))?;
    }

    let seed = std::env::var(SEED_ENV)
        .ok()
        .map(|raw| {
            raw.parse::<u64>()
                .map_err(|_| scene_err(format!("{SEED_ENV} must be an unsigned integer, got '{raw}'")))
        })
        .transpose()?
        .unwrap_or(scene.sampling.seed);

    let mut sampler = Sampler::new(seed);
    for (coord, [lo, hi]) in &scene.sampling.boxes {
        if !chart.coords().iter().any(|c| c == coord) {
            return Err(scene_err(format!(
                "sampling box references unknown coordinate '{coord}'"
            )));
        }
        sampler = sampler.with_box(coord, *lo, *hi);
    }

    Ok(BuiltScene {
        name: scene.name.clone(),
        chart,
        field,
        rank,
        bundle,
        forms,
        fields,
        functions,
        submanifolds,
        actions,
        quotients,
        sampler,
        count: scene.sampling.count,
        excluded: scene.sampling.excluded.clone(),
        expect: scene.expect.clone(),
        seed,
    })
}

/// Parse a scene document from a JSON string.
pub fn parse_scene(source: &str) -> CliResult<Scene> {
    serde_json::from_str(source).map_err(|e| scene_err(format!("invalid scene JSON: {e}")))
}

/// Load and resolve a scene from disk.
pub fn load_scene(path: &Path) -> CliResult<BuiltScene> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read {}: {e}", path.display())))?;
    let scene = parse_scene(&source)?;
    build_scene(&scene)
}

impl BuiltScene {
    fn excluded_on(&self, chart: &Arc<Chart>) -> CliResult<Vec<Expr>> {
        self.excluded
            .iter()
            .map(|src| parse_on(src, chart, "sampling.excluded"))
            .collect()
    }

    /// Sample admissible base-chart points per the scene's plan.
    pub fn base_points(&self) -> CliResult<Vec<Vec<f64>>> {
        let excluded = self.excluded_on(&self.chart)?;
        Ok(self
            .sampler
            .points_excluding(&self.chart, self.count, &excluded)?)
    }

    /// Sample admissible cover-chart points per the scene's plan.
    pub fn cover_points(&self) -> CliResult<Vec<Vec<f64>>> {
        let total = self.bundle.total_chart();
        let excluded = self.excluded_on(total)?;
        Ok(self.sampler.points_excluding(total, self.count, &excluded)?)
    }

    fn function_named(&self, name: &str) -> CliResult<&Expr> {
        self.functions
            .get(name)
            .ok_or_else(|| scene_err(format!("unknown function '{name}'")))
    }

    fn submanifold_named(&self, name: &str) -> CliResult<&ConstraintSubmanifold> {
        self.submanifolds
            .get(name)
            .ok_or_else(|| scene_err(format!("unknown submanifold '{name}'")))
    }

    fn action_named(&self, name: &str) -> CliResult<&ActionSpec> {
        self.actions
            .get(name)
            .ok_or_else(|| scene_err(format!("unknown action '{name}'")))
    }

    fn quotient_named(&self, name: &str) -> CliResult<&QuotientData> {
        self.quotients
            .get(name)
            .ok_or_else(|| scene_err(format!("unknown quotient '{name}'")))
    }
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One named pass/fail check inside a report.
#[derive(Debug, Clone)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Assertion {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

/// Report produced by every command: deterministic JSON plus the verdict.
pub struct Report {
    pub command: String,
    pub scene: String,
    pub seed: u64,
    pub results: Value,
    pub assertions: Vec<Assertion>,
}

impl Report {
    /// True when every assertion passed.
    pub fn passed(&self) -> bool {
        self.assertions.iter().all(|a| a.passed)
    }

    /// Serialize to a JSON value. Keys are emitted in sorted order, so equal
    /// inputs produce byte-identical documents. `timestamp` (seconds since
    /// the Unix epoch) is attached only when requested.
    pub fn to_json(&self, with_timestamp: bool) -> Value {
        let mut map = Map::new();
        map.insert("command".into(), json!(self.command));
        map.insert("scene".into(), json!(self.scene));
        map.insert("schema".into(), json!(1));
        map.insert("seed".into(), json!(self.seed));
        map.insert("results".into(), self.results.clone());
        map.insert(
            "assertions".into(),
            Value::Array(
                self.assertions
                    .iter()
                    .map(|a| {
                        json!({
                            "name": a.name,
                            "passed": a.passed,
                            "detail": a.detail,
                        })
                    })
                    .collect(),
            ),
        );
        map.insert("passed".into(), json!(self.passed()));
        if with_timestamp {
            let now = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            map.insert("timestamp".into(), json!(now));
        }
        Value::Object(map)
    }

    /// Pretty-printed JSON document (trailing newline included).
    pub fn render(&self, with_timestamp: bool) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_json(with_timestamp))
            .expect("report serialization cannot fail");
        out.push('\n');
        out
    }
}

fn expect_eq<T: PartialEq + std::fmt::Debug>(
    assertions: &mut Vec<Assertion>,
    name: &str,
    expected: &Option<T>,
    actual: T,
) {
    if let Some(want) = expected {
        assertions.push(Assertion::new(
            name,
            *want == actual,
            format!("expected {want:?}, measured {actual:?}"),
        ));
    }
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

/// `check`: measure the hyperplane field's rank, verify the structure class
/// against the claimed rank, and validate the scaling cover on top of it.
pub fn run_check(scene: &BuiltScene) -> CliResult<Report> {
    let base_points = scene.base_points()?;
    let report = verify_precontact(&scene.field, scene.rank, &base_points)?;

    let cover_points = scene.cover_points()?;
    let cover = scene.bundle.verify(&cover_points)?;
    let correspondence = scene.bundle.characteristic_correspondence_check(&cover_points)?;

    let mut assertions = vec![
        Assertion::new(
            "precontact_structure",
            report.is_precontact,
            format!(
                "restricted rank observed {:?} against claimed 2r = {}",
                report.restricted_rank_observed,
                2 * scene.rank
            ),
        ),
        Assertion::new(
            "cover_form",
            cover.all_ok(),
            format!(
                "cover rank observed {:?}, expected {}",
                cover.rank_observed, cover.expected_rank
            ),
        ),
        Assertion::new(
            "characteristic_correspondence",
            correspondence.ok,
            format!(
                "kernel dims observed {:?}, residuals {:.3e}/{:.3e}",
                correspondence.kernel_dim_observed,
                correspondence.forward_residual,
                correspondence.backward_residual
            ),
        ),
    ];
    let expect = &scene.expect;
    expect_eq(&mut assertions, "expect.contact", &expect.contact, report.is_contact);
    expect_eq(
        &mut assertions,
        "expect.precontact",
        &expect.precontact,
        report.is_precontact,
    );
    expect_eq(
        &mut assertions,
        "expect.characteristic_dim",
        &expect.characteristic_dim,
        report.characteristic_dim_observed.0,
    );
    expect_eq(
        &mut assertions,
        "expect.cover_rank",
        &expect.cover_rank,
        cover.rank_observed.0,
    );

    let results = json!({
        "dim": scene.chart.dim(),
        "claimed_rank": scene.rank,
        "points_checked": base_points.len(),
        "restricted_rank_observed": [report.restricted_rank_observed.0, report.restricted_rank_observed.1],
        "restricted_rank_ok": report.restricted_rank_ok,
        "volume_nonzero_ok": report.volume_nonzero_ok,
        "next_power_vanishes_ok": report.next_power_vanishes_ok,
        "characteristic_dim_observed": [report.characteristic_dim_observed.0, report.characteristic_dim_observed.1],
        "full_rank_observed": [report.full_rank_observed.0, report.full_rank_observed.1],
        "is_precontact": report.is_precontact,
        "is_contact": report.is_contact,
        "marginal_rank_points": report.marginal_rank_points,
        "cover": {
            "expected_rank": cover.expected_rank,
            "rank_observed": [cover.rank_observed.0, cover.rank_observed.1],
            "closed_ok": cover.closed_ok,
            "theta_is_contraction_ok": cover.theta_is_contraction_ok,
            "d_theta_is_omega_ok": cover.d_theta_is_omega_ok,
        },
        "correspondence": {
            "kernel_dim_observed": [correspondence.kernel_dim_observed.0, correspondence.kernel_dim_observed.1],
            "forward_residual": correspondence.forward_residual,
            "backward_residual": correspondence.backward_residual,
        },
        "notes": report.notes,
    });

    Ok(Report {
        command: "check".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

fn dynamics_for(scene: &BuiltScene) -> CliResult<DarbouxDynamics> {
    DarbouxDynamics::new(scene.field.clone()).map_err(CliError::from)
}

/// `reeb`: produce the Reeb field symbolically and verify its defining
/// equations at the sampled points.
pub fn run_reeb(scene: &BuiltScene) -> CliResult<Report> {
    let dynamics = dynamics_for(scene)?;
    let reeb = dynamics.reeb();
    let points = scene.base_points()?;

    let eta = scene.field.eta();
    let d_eta = scene.field.d_eta();
    let mut max_pairing = 0.0f64;
    let mut max_contraction = 0.0f64;
    for x in &points {
        let r = reeb.value_at(x)?;
        let pairing = eta.row_at(x)?.dot(&r);
        max_pairing = max_pairing.max((pairing - 1.0).abs());
        let contraction = (d_eta.matrix_at(x)? * &r).amax();
        max_contraction = max_contraction.max(contraction);
    }

    let assertions = vec![
        Assertion::new(
            "reeb_pairing",
            max_pairing <= 1e-9,
            format!("max |eta(R) - 1| = {max_pairing:.3e} (tol 1e-9)"),
        ),
        Assertion::new(
            "reeb_contraction",
            max_contraction <= 1e-9,
            format!("max |i_R d_eta| = {max_contraction:.3e} (tol 1e-9)"),
        ),
    ];

    let results = json!({
        "components": reeb.components().iter().map(|e| format!("{e}")).collect::<Vec<_>>(),
        "points_checked": points.len(),
        "max_pairing_residual": max_pairing,
        "max_contraction_residual": max_contraction,
    });

    Ok(Report {
        command: "reeb".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

/// Options accepted by [`run_evolve`].
pub struct EvolveOptions {
    pub hamiltonian: String,
    pub t0: f64,
    pub t1: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
}

/// `evolve`: integrate the contact Hamiltonian field and return the
/// trajectory as CSV text alongside the verdict report.
pub fn run_evolve(scene: &BuiltScene, opts: &EvolveOptions) -> CliResult<(Report, String)> {
    if opts.x0.len() != scene.chart.dim() {
        return Err(scene_err(format!(
            "--x0 has {} entries, chart has dimension {}",
            opts.x0.len(),
            scene.chart.dim()
        )));
    }
    if !(opts.dt.is_finite() && opts.dt > 0.0) {
        return Err(scene_err("--dt must be positive".to_string()));
    }
    let span = opts.t1 - opts.t0;
    if span == 0.0 || !span.is_finite() {
        return Err(scene_err("--t0 and --t1 must bound a nonempty interval".to_string()));
    }
    let steps = (span.abs() / opts.dt).round().max(1.0) as usize;

    let dynamics = dynamics_for(scene)?;
    let hamiltonian = scene.function_named(&opts.hamiltonian)?;
    let field = dynamics.contact_field(hamiltonian)?;
    let trajectory = flow(&field, &opts.x0, span, steps)?;

    // Check the evolution law d/dt H = -R(H) H along the computed path via
    // central differences of the sampled energy.
    let rate = dynamics.conformal_factor(hamiltonian);
    let times = trajectory.times();
    let states = trajectory.states();
    let mut residual = 0.0f64;
    for i in 1..times.len().saturating_sub(1) {
        let dt_span = times[i + 1] - times[i - 1];
        let slope = (eval(hamiltonian, &states[i + 1])? - eval(hamiltonian, &states[i - 1])?)
            / dt_span;
        let expected = eval(&rate, &states[i])? * eval(hamiltonian, &states[i])?;
        residual = residual.max((slope - expected).abs());
    }

    let mut csv = String::from("t");
    for coord in scene.chart.coords() {
        csv.push(',');
        csv.push_str(coord);
    }
    csv.push('\n');
    for (t, state) in trajectory.times().iter().zip(trajectory.states()) {
        csv.push_str(&format!("{:.16e}", opts.t0 + t));
        for value in state {
            csv.push_str(&format!(",{value:.16e}"));
        }
        csv.push('\n');
    }

    let end = trajectory.end_state().to_vec();
    let assertions = vec![
        Assertion::new(
            "trajectory_finite",
            end.iter().all(|v| v.is_finite()),
            format!("end state {end:?}"),
        ),
        Assertion::new(
            "energy_evolution_law",
            residual <= 1e-5,
            format!("max |dH/dt + R(H) H| = {residual:.3e} (tol 1e-5)"),
        ),
    ];

    let results = json!({
        "hamiltonian": opts.hamiltonian,
        "t0": opts.t0,
        "t1": opts.t1,
        "dt": opts.dt,
        "steps": steps,
        "x0": opts.x0,
        "end_state": end,
        "evolution_residual": residual,
        "conformal_rate": format!("{rate}"),
    });

    Ok((
        Report {
            command: "evolve".into(),
            scene: scene.name.clone(),
            seed: scene.seed,
            results,
            assertions,
        },
        csv,
    ))
}

/// `bracket`: compute the Jacobi bracket of two named functions through the
/// algebraic route and cross-check it against the commutator route.
pub fn run_bracket(scene: &BuiltScene, f: &str, h: &str, points: usize) -> CliResult<Report> {
    let dynamics = dynamics_for(scene)?;
    let f_expr = scene.function_named(f)?;
    let h_expr = scene.function_named(h)?;
    let excluded = scene.excluded_on(&scene.chart)?;
    let sample = scene
        .sampler
        .points_excluding(&scene.chart, points, &excluded)?;

    let algebraic = dynamics.bracket(f_expr, h_expr)?;
    let via_fields = dynamics.bracket_via_fields(f_expr, h_expr)?;
    let mut max_deviation = 0.0f64;
    for x in &sample {
        let a = eval(&algebraic, x)?;
        let b = eval(&via_fields, x)?;
        let deviation = (a - b).abs() / (1.0 + a.abs().max(b.abs()));
        max_deviation = max_deviation.max(deviation);
    }
    let tolerance = contactred_core::dynamics::BRACKET_CROSS_TOL;

    let assertions = vec![Assertion::new(
        "bracket_routes_agree",
        max_deviation <= tolerance,
        format!(
            "max relative deviation {max_deviation:.3e} between the algebraic and commutator routes (tol {tolerance:.1e})"
        ),
    )];

    let results = json!({
        "f": f,
        "h": h,
        "bracket": format!("{algebraic}"),
        "points_checked": sample.len(),
        "max_deviation": max_deviation,
        "tolerance": tolerance,
    });

    Ok(Report {
        command: "bracket".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

/// `classify`: classify a named submanifold at sampled on-submanifold points
/// and record per-sample flags for downstream consumers.
pub fn run_classify(scene: &BuiltScene, submanifold: &str) -> CliResult<Report> {
    let sub = scene.submanifold_named(submanifold)?;
    let excluded = scene.excluded_on(&scene.chart)?;
    let points = sub.sample(&scene.sampler, scene.count, &excluded)?;
    let report = classify_submanifold(&scene.bundle, sub, &points, TRANSVERSALITY_THRESHOLD)?;

    let lifted = sub.lifted_to(scene.bundle.total_chart())?;
    let mut samples = Vec::with_capacity(points.len());
    for y in &points {
        let flags = contactred_core::reduction::classify_at(
            &scene.bundle,
            sub,
            y,
            TRANSVERSALITY_THRESHOLD,
        )?;
        let x = scene.bundle.lift_point(y, 1.0)?;
        let kernel =
            contactred_core::reduction::restricted_kernel_at(&scene.bundle, &lifted, &x)?;
        samples.push(json!({
            "point": y,
            "transversal": flags.transversal,
            "isotropic": flags.isotropic,
            "coisotropic": flags.coisotropic,
            "legendrian": flags.legendrian,
            "eta_norm_on_tangent": flags.eta_norm_on_tangent,
            "restricted_kernel_dim": kernel.dim(),
            "restricted_kernel_basis": kernel
                .basis()
                .iter()
                .map(|v| v.iter().copied().collect::<Vec<f64>>())
                .collect::<Vec<_>>(),
        }));
    }

    let mut assertions = vec![Assertion::new(
        "classification_complete",
        report.points_checked == points.len(),
        format!("classified {} of {} samples", report.points_checked, points.len()),
    )];
    let expect = &scene.expect;
    expect_eq(
        &mut assertions,
        "expect.constant_rank",
        &expect.constant_rank,
        report.constant_rank,
    );
    expect_eq(
        &mut assertions,
        "expect.restricted_kernel_dim",
        &expect.restricted_kernel_dim,
        report.kernel_dim_observed.0,
    );
    if let Some(want) = expect.coisotropic {
        let all = report.coisotropic_count == report.points_checked;
        let none = report.coisotropic_count == 0;
        assertions.push(Assertion::new(
            "expect.coisotropic",
            if want { all } else { none },
            format!(
                "coisotropic at {} of {} samples",
                report.coisotropic_count, report.points_checked
            ),
        ));
    }
    if let Some(want) = expect.isotropic {
        let all = report.isotropic_count == report.points_checked;
        let none = report.isotropic_count == 0;
        assertions.push(Assertion::new(
            "expect.isotropic",
            if want { all } else { none },
            format!(
                "isotropic at {} of {} samples",
                report.isotropic_count, report.points_checked
            ),
        ));
    }
    if let Some(want) = expect.legendrian {
        let all = report.legendrian_count == report.points_checked;
        let none = report.legendrian_count == 0;
        assertions.push(Assertion::new(
            "expect.legendrian",
            if want { all } else { none },
            format!(
                "legendrian at {} of {} samples",
                report.legendrian_count, report.points_checked
            ),
        ));
    }

    let results = json!({
        "submanifold": submanifold,
        "codim": sub.codim(),
        "points_checked": report.points_checked,
        "transversal_count": report.transversal_count,
        "isotropic_count": report.isotropic_count,
        "coisotropic_count": report.coisotropic_count,
        "legendrian_count": report.legendrian_count,
        "kernel_dim_observed": [report.kernel_dim_observed.0, report.kernel_dim_observed.1],
        "constant_rank": report.constant_rank,
        "transversality_threshold": TRANSVERSALITY_THRESHOLD,
        "notes": report.notes,
        "samples": samples,
    });

    Ok(Report {
        command: "classify".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

fn moment_for(scene: &BuiltScene, action: &ActionSpec) -> CliResult<MomentMap> {
    moment_map(&scene.bundle, action).map_err(CliError::from)
}

/// `moment`: compute the moment map of a named action and verify fibrewise
/// homogeneity, the kernel identity, and pairwise equivariance at samples.
pub fn run_moment(scene: &BuiltScene, action_name: &str) -> CliResult<Report> {
    let action = scene.action_named(action_name)?;
    let moment = moment_for(scene, action)?;
    let points = scene.cover_points()?;
    let k = action.dim();
    let s_index = scene.bundle.s_index();

    let mut max_homogeneity = 0.0f64;
    let mut max_kernel_angle = 0.0f64;
    let mut max_equivariance = 0.0f64;
    for x in &points {
        let base_value = moment.value_at(x)?;
        for lambda in HOMOGENEITY_WEIGHTS {
            let mut scaled = x.clone();
            scaled[s_index] *= lambda;
            let scaled_value = moment.value_at(&scaled)?;
            for i in 0..k {
                let expected = lambda * base_value[i];
                let deviation = (scaled_value[i] - expected).abs();
                max_homogeneity = max_homogeneity.max(deviation / (1.0 + expected.abs()));
            }
        }

        let jac = moment.jacobian_at(x)?;
        let kernel = contactred_core::pointlin::kernel_of(&jac, contactred_core::pointlin::RANK_REL_TOL);
        let mut lifts = Vec::with_capacity(k);
        for i in 0..k {
            lifts.push(action.lifted_field_at(&scene.bundle, i, x)?);
        }
        let span = contactred_core::pointlin::Subspace::spanned_by(x.len(), &lifts);
        let m = scene.bundle.omega().matrix_at(x)?;
        let rows = span.basis_matrix().transpose() * &m;
        let orth = contactred_core::pointlin::kernel_of(&rows, contactred_core::pointlin::RANK_REL_TOL);
        if kernel.dim() == orth.dim() {
            max_kernel_angle = max_kernel_angle.max(kernel.max_principal_angle(&orth));
        } else {
            max_kernel_angle = f64::INFINITY;
        }

        for i in 0..k {
            for j in 0..k {
                let derivative = jac.row(j).transpose().dot(&lifts[i]);
                let mut expected = 0.0;
                for l in 0..k {
                    expected += action.structure()[l][(i, j)] * base_value[l];
                }
                let deviation = (derivative - expected).abs() / (1.0 + expected.abs());
                max_equivariance = max_equivariance.max(deviation);
            }
        }
    }

    let mut assertions = vec![
        Assertion::new(
            "moment_homogeneity",
            max_homogeneity <= HOMOGENEITY_TOL,
            format!(
                "max relative deviation {max_homogeneity:.3e} over fibre weights {HOMOGENEITY_WEIGHTS:?} (tol {HOMOGENEITY_TOL:.1e})"
            ),
        ),
        Assertion::new(
            "moment_kernel_identity",
            max_kernel_angle <= contactred_core::pointlin::SUBSPACE_ANGLE_TOL,
            format!(
                "max principal angle {max_kernel_angle:.3e} between ker dJ and the omega-orthogonal of the lifted generators"
            ),
        ),
        Assertion::new(
            "moment_equivariance",
            max_equivariance <= EQUIVARIANCE_TOL,
            format!(
                "max relative deviation {max_equivariance:.3e} of lifted-generator derivatives from the structure constants"
            ),
        ),
    ];

    if let Some(expected_exprs) = &scene.expect.moment {
        if expected_exprs.len() != k {
            return Err(scene_err(format!(
                "expect.moment has {} entries, action '{action_name}' has {k} generators",
                expected_exprs.len()
            )));
        }
        let mut max_match = 0.0f64;
        for (i, src) in expected_exprs.iter().enumerate() {
            let expected = parse_on(src, scene.bundle.total_chart(), "expect.moment")?;
            for x in &points {
                let want = eval(&expected, x)?;
                let got = moment.value_at(x)?[i];
                max_match = max_match.max((want - got).abs());
            }
        }
        assertions.push(Assertion::new(
            "expect.moment",
            max_match <= MOMENT_MATCH_TOL,
            format!("max deviation {max_match:.3e} from the declared components (tol {MOMENT_MATCH_TOL:.1e})"),
        ));
    }

    let results = json!({
        "action": action_name,
        "generators": action.names(),
        "components": moment.exprs().iter().map(|e| format!("{e}")).collect::<Vec<_>>(),
        "points_checked": points.len(),
        "max_homogeneity_deviation": max_homogeneity,
        "max_kernel_principal_angle": max_kernel_angle,
        "max_equivariance_deviation": max_equivariance,
    });

    Ok(Report {
        command: "moment".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

/// `reduce`: verify declared quotient data against a named submanifold on the
/// cover.
pub fn run_reduce(scene: &BuiltScene, submanifold: &str, quotient: &str) -> CliResult<Report> {
    let sub = scene.submanifold_named(submanifold)?;
    let quotient_data = scene.quotient_named(quotient)?;
    let lifted = sub.lifted_to(scene.bundle.total_chart())?;
    let excluded = scene.excluded_on(scene.bundle.total_chart())?;
    let points = lifted.sample(&scene.sampler, scene.count, &excluded)?;
    let report = verify_reduction(&scene.bundle, &lifted, quotient_data, &points)?;

    let mut assertions = vec![
        Assertion::new(
            "submersion",
            report.submersion_ok,
            format!("projection keeps rank {} on the level set", report.reduced_dim),
        ),
        Assertion::new(
            "fibre_alignment",
            report.fibre_alignment_ok,
            format!("max fibre residual {:.3e}", report.max_fibre_residual),
        ),
        Assertion::new(
            "pullback_matches",
            report.pullback_ok,
            format!("max pullback residual {:.3e}", report.max_pullback_residual),
        ),
    ];
    if let Some(base_ok) = report.base_distribution_ok {
        assertions.push(Assertion::new(
            "base_distribution",
            base_ok,
            "pushed-forward characteristic directions match the reduced kernel".to_string(),
        ));
    }
    if let Some(max_allowed) = scene.expect.max_pullback_residual {
        assertions.push(Assertion::new(
            "expect.max_pullback_residual",
            report.max_pullback_residual <= max_allowed,
            format!(
                "measured {:.3e}, allowed {max_allowed:.3e}",
                report.max_pullback_residual
            ),
        ));
    }
    expect_eq(
        &mut assertions,
        "expect.reduction_pass",
        &scene.expect.reduction_pass,
        report.all_ok(),
    );

    let results = json!({
        "submanifold": submanifold,
        "quotient": quotient,
        "points_checked": report.points_checked,
        "reduced_dim": report.reduced_dim,
        "submersion_ok": report.submersion_ok,
        "fibre_alignment_ok": report.fibre_alignment_ok,
        "pullback_ok": report.pullback_ok,
        "base_distribution_ok": report.base_distribution_ok,
        "max_fibre_residual": report.max_fibre_residual,
        "max_pullback_residual": report.max_pullback_residual,
        "failures": report.failures,
    });

    Ok(Report {
        command: "reduce".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

/// `mwm`: run the full reduction pipeline for a named action at momentum
/// value `mu`, optionally verifying declared quotient data at zero level.
pub fn run_mwm(
    scene: &BuiltScene,
    action_name: &str,
    mu: &[f64],
    quotient: Option<&str>,
) -> CliResult<Report> {
    let action = scene.action_named(action_name)?;
    // With no explicit --quotient, a scene that declares exactly one quotient
    // gets it verified automatically at zero level.
    let quotient_data = match quotient {
        Some(name) => Some(scene.quotient_named(name)?),
        None if scene.quotients.len() == 1 => scene.quotients.values().next(),
        None => None,
    };
    let excluded = scene.excluded_on(scene.bundle.total_chart())?;
    let report = mwm_pipeline(
        &scene.bundle,
        action,
        mu,
        quotient_data,
        &scene.sampler,
        scene.count,
        &excluded,
    )?;

    let mut assertions = vec![
        Assertion::new(
            "action_valid",
            report.action_valid,
            "generators are conformal and close under the declared brackets".to_string(),
        ),
        Assertion::new(
            "weak_regularity",
            report.weak_regularity_ok,
            "moment Jacobian kept full rank with matching level tangents at samples".to_string(),
        ),
        Assertion::new(
            "moment_kernel",
            report.moment_kernel_ok,
            "ker dJ equals the omega-orthogonal of the lifted generators at samples".to_string(),
        ),
        Assertion::new(
            "kernel_identity",
            report.kernel_identity_ok,
            "restricted kernel matches the isotropy directions plus the cover kernel".to_string(),
        ),
    ];
    if let Some(reduction) = &report.reduction {
        assertions.push(Assertion::new(
            "reduction",
            reduction.all_ok(),
            format!(
                "max pullback residual {:.3e}, max fibre residual {:.3e}",
                reduction.max_pullback_residual, reduction.max_fibre_residual
            ),
        ));
        if let Some(max_allowed) = scene.expect.max_pullback_residual {
            assertions.push(Assertion::new(
                "expect.max_pullback_residual",
                reduction.max_pullback_residual <= max_allowed,
                format!(
                    "measured {:.3e}, allowed {max_allowed:.3e}",
                    reduction.max_pullback_residual
                ),
            ));
        }
    }
    let expect = &scene.expect;
    expect_eq(&mut assertions, "expect.g0mu_dim", &expect.g0mu_dim, report.g0mu_dim);
    expect_eq(
        &mut assertions,
        "expect.open_dense_restriction",
        &expect.open_dense_restriction,
        report.open_dense_restriction,
    );
    if let Some(want) = expect.reduction_pass {
        let got = report.reduction.as_ref().map(|r| r.all_ok()).unwrap_or(false);
        assertions.push(Assertion::new(
            "expect.reduction_pass",
            want == got,
            format!("expected {want}, measured {got}"),
        ));
    }

    let results = json!({
        "action": action_name,
        "mu": report.mu,
        "trivial_action": report.trivial_action,
        "action_valid": report.action_valid,
        "g0mu_dim": report.g0mu_dim,
        "level_codim": report.level_codim,
        "points_checked": report.points_checked,
        "weak_regularity_ok": report.weak_regularity_ok,
        "moment_kernel_ok": report.moment_kernel_ok,
        "kernel_identity_ok": report.kernel_identity_ok,
        "base_transversal": report.base_transversal.map(|(a, b)| json!([a, b])),
        "open_dense_restriction": report.open_dense_restriction,
        "reduction": report.reduction.as_ref().map(|r| json!({
            "points_checked": r.points_checked,
            "reduced_dim": r.reduced_dim,
            "submersion_ok": r.submersion_ok,
            "fibre_alignment_ok": r.fibre_alignment_ok,
            "pullback_ok": r.pullback_ok,
            "base_distribution_ok": r.base_distribution_ok,
            "max_fibre_residual": r.max_fibre_residual,
            "max_pullback_residual": r.max_pullback_residual,
            "failures": r.failures,
        })),
        "notes": report.notes,
    });

    Ok(Report {
        command: "mwm".into(),
        scene: scene.name.clone(),
        seed: scene.seed,
        results,
        assertions,
    })
}

/// `darboux`: generate a scene document for the Darboux model of dimension
/// `m` with rank `r` (coordinates `z, p1.., q1..` plus slack directions).
pub fn generate_darboux_scene(m: usize, r: usize) -> CliResult<Value> {
    if 2 * r + 1 > m {
        return Err(scene_err(format!(
            "rank {r} requires dimension >= {}, got {m}",
            2 * r + 1
        )));
    }
    let (chart, field) = contactred_core::precontact::darboux_model(m, r)?;
    let mut terms = Map::new();
    let eta = field.eta();
    for i in 0..chart.dim() {
        let coeff = eta.coeff(&[i]);
        if !coeff.is_zero() {
            terms.insert(chart.coord(i).to_string(), json!(format!("{coeff}")));
        }
    }
    let domains: Vec<Value> = (0..m).map(|_| json!({"interval": [-3.0, 3.0]})).collect();
    let name = format!("darboux-m{m}-r{r}");
    Ok(json!({
        "schema": 1,
        "name": name,
        "description": format!(
            "Darboux model on a {m}-dimensional chart with rank {r}: eta = dz - sum p_i dq_i"
        ),
        "chart": {
            "name": name,
            "coords": chart.coords(),
            "domains": domains,
        },
        "forms": {
            "eta": {"degree": 1, "terms": Value::Object(terms)},
        },
        "hyperplane_field": {"form": "eta", "rank": r},
        "sampling": {"count": 200, "seed": 42},
        "expect": {
            "precontact": true,
            "contact": m == 2 * r + 1,
            "characteristic_dim": m - 2 * r - 1,
        },
    }))
}
