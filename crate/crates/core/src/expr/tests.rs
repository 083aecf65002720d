use super::*;
use proptest::prelude::*;

fn chart_zpq() -> Arc<Chart> {
    Chart::new("darboux3", &["z", "p", "q"])
}

fn xy() -> Arc<Chart> {
    Chart::new("plane", &["x", "y"])
}

#[test]
fn parse_builds_expected_tree() {
    let c = chart_zpq();
    let e = parse("z - p*q", &c).unwrap();
    let expected = Expr::var(&c, "z").unwrap()
        - Expr::var(&c, "p").unwrap() * Expr::var(&c, "q").unwrap();
    assert_eq!(e, expected);
}

#[test]
fn parse_precedence_and_parens() {
    let c = xy();
    let e = parse("(x + y)*x", &c).unwrap();
    let x = Expr::var(&c, "x").unwrap();
    let y = Expr::var(&c, "y").unwrap();
    assert_eq!(e, (x.clone() + y) * x);
}

#[test]
fn parse_errors_carry_byte_offsets() {
    let c = xy();
    match parse("x + (y * ", &c) {
        Err(ExprError::Syntax { offset, .. }) => assert_eq!(offset, 9),
        other => panic!("expected syntax error, got {other:?}"),
    }
    match parse("x + foo", &c) {
        Err(ExprError::UnknownIdentifier { name, offset }) => {
            assert_eq!(name, "foo");
            assert_eq!(offset, 4);
        }
        other => panic!("expected unknown identifier, got {other:?}"),
    }
}

#[test]
fn rational_exponents() {
    let c = xy();
    let e = parse("x^(1/2)", &c).unwrap();
    assert_eq!(e, Expr::var(&c, "x").unwrap().pow(1, 2));
    // Short decimals convert exactly.
    assert_eq!(parse("x^0.5", &c).unwrap(), Expr::var(&c, "x").unwrap().pow(1, 2));
    assert_eq!(
        parse("x^(-3/2)", &c).unwrap(),
        Expr::var(&c, "x").unwrap().pow(-3, 2)
    );
    // General symbolic exponents are rejected.
    assert!(matches!(parse("x^y", &c), Err(ExprError::Syntax { .. })));
}

#[test]
fn ratio_normalizes() {
    assert_eq!(Ratio::new(2, 4), Ratio::new(1, 2));
    assert_eq!(Ratio::new(3, -6), Ratio::new(-1, 2));
    assert_eq!(Ratio::new(-2, -4), Ratio::new(1, 2));
    assert!(Ratio::new(4, 2).is_integer());
}

#[test]
fn differentiate_product_folds() {
    let c = chart_zpq();
    let e = parse("z - p*q", &c).unwrap();
    let dq = e.differentiate_name("q").unwrap();
    assert_eq!(dq, parse("-p", &c).unwrap());
    let dz = e.differentiate_name("z").unwrap();
    assert_eq!(dz, Expr::one(&c));
}

#[test]
fn differentiate_trig_identity_pointwise() {
    // d/dq (sin^2 q + cos^2 q) has no symbolic cancellation pass, but must
    // evaluate to zero everywhere.
    let c = chart_zpq();
    let e = parse("sin(q)^2 + cos(q)^2", &c).unwrap();
    let d = e.differentiate_name("q").unwrap();
    for i in 0..20 {
        let q = -1.0 + 0.1 * i as f64;
        let v = d.evaluate(&[0.0, 0.0, q]).unwrap();
        assert!(v.abs() <= 1e-12, "residual {v:e} at q={q}");
    }
}

#[test]
fn evaluate_domain_errors_name_subtree() {
    let c = chart_zpq();
    let e = parse("q/p", &c).unwrap();
    match e.evaluate(&[0.0, 0.0, 1.0]) {
        Err(ExprError::DivisionByZero { subtree }) => assert_eq!(subtree, "q/p"),
        other => panic!("expected division error, got {other:?}"),
    }
    let e = parse("log(z)", &c).unwrap();
    assert!(matches!(
        e.evaluate(&[-1.0, 0.0, 0.0]),
        Err(ExprError::LogDomain { .. })
    ));
    let e = parse("p^(1/2)", &c).unwrap();
    assert!(matches!(
        e.evaluate(&[0.0, -1.0, 0.0]),
        Err(ExprError::PowDomain { .. })
    ));
    let e = parse("p^(-2)", &c).unwrap();
    assert!(matches!(
        e.evaluate(&[0.0, 0.0, 0.0]),
        Err(ExprError::PowDomain { .. })
    ));
}

#[test]
fn evaluation_is_pure() {
    let c = xy();
    let e = parse("sin(x*y) + exp(x - y^2)/(2 + x^2)", &c).unwrap();
    let p = [0.3, -0.7];
    let a = e.evaluate(&p).unwrap();
    let b = e.evaluate(&p).unwrap();
    assert_eq!(a.to_bits(), b.to_bits());
}

#[test]
fn folding_rules() {
    let c = xy();
    let x = Expr::var(&c, "x").unwrap();
    let zero = Expr::zero(&c);
    let one = Expr::one(&c);
    assert_eq!((x.clone() + zero.clone()).fold(), x);
    assert_eq!((x.clone() * zero.clone()).fold(), zero);
    assert_eq!((x.clone() * one.clone()).fold(), x);
    assert_eq!((zero.clone() - x.clone()).fold(), -x.clone());
    assert_eq!((-Expr::constant(&c, 2.5)).fold(), Expr::constant(&c, -2.5));
    assert_eq!(x.pow(1, 1).fold(), x);
    assert_eq!(x.pow(0, 1).fold(), one);
}

#[test]
fn compose_substitutes_components() {
    // f(z,p,q) = z - p*q pulled back along (z,p,q) = (u^2, v, u+v).
    let c = chart_zpq();
    let uv = Chart::new("uv", &["u", "v"]);
    let f = parse("z - p*q", &c).unwrap();
    let comps = [
        parse("u^2", &uv).unwrap(),
        parse("v", &uv).unwrap(),
        parse("u + v", &uv).unwrap(),
    ];
    let g = f.compose(&comps);
    let (u, v) = (0.4, -0.9);
    let got = g.evaluate(&[u, v]).unwrap();
    assert!((got - (u * u - v * (u + v))).abs() < 1e-15);
}

#[test]
fn extend_to_larger_chart() {
    let c = chart_zpq();
    let total = c.extended("cover", "s", CoordDomain::nonzero()).unwrap();
    let f = parse("z - p*q", &c).unwrap();
    let lifted = f.extend_to(&total).unwrap();
    assert!((lifted.evaluate(&[1.0, 2.0, 3.0, 9.0]).unwrap() - (1.0 - 6.0)).abs() < 1e-15);
    assert!(!lifted.depends_on(3));
}

#[test]
fn display_round_trips_handpicked() {
    let c = xy();
    let x = Expr::var(&c, "x").unwrap();
    let y = Expr::var(&c, "y").unwrap();
    let cases = vec![
        -(x.clone() * y.clone()),
        (-&x) * y.clone(),
        x.clone() - (y.clone() - x.clone()),
        x.clone() / (y.clone() / x.clone()),
        (x.clone() + y.clone()).pow(-3, 2),
        -Expr::constant(&c, 2.5),
        Expr::constant(&c, -2.5),
        x.clone() + Expr::constant(&c, -0.25),
        (x.clone() * y.clone()).sin().pow(2, 1),
        x.clone() - (-&y),
    ];
    for e in cases {
        let printed = e.to_string();
        let back = parse(&printed, &c).unwrap_or_else(|err| {
            panic!("reparse of `{printed}` failed: {err}");
        });
        assert_eq!(back, e, "round trip changed `{printed}`");
    }
}

// Random tree strategy for the round-trip property.
fn arb_expr(chart: Arc<Chart>) -> impl Strategy<Value = Expr> {
    let leaf_chart = chart.clone();
    let leaf = prop_oneof![
        (-4i32..=4).prop_map(move |k| Expr::constant(&leaf_chart, k as f64 / 2.0)),
        {
            let c = chart.clone();
            (0..c.dim()).prop_map(move |i| Expr::coord(&c, i))
        },
    ];
    leaf.prop_recursive(4, 48, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a + b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a - b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a * b),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a / b),
            inner.clone().prop_map(|a| -a),
            inner.clone().prop_map(|a| a.sin()),
            inner.clone().prop_map(|a| a.cos()),
            inner.clone().prop_map(|a| a.exp()),
            inner.clone().prop_map(|a| a.log()),
            (inner, -3i64..=3, 1i64..=3).prop_map(|(a, n, d)| a.pow(n, d)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn display_round_trips(e in arb_expr(xy())) {
        let printed = e.to_string();
        let back = parse(&printed, &xy()).expect("printed form must reparse");
        prop_assert_eq!(back, e);
    }

    #[test]
    fn derivative_matches_finite_differences(
        x in -0.9f64..0.9,
        y in -0.9f64..0.9,
    ) {
        let c = xy();
        let exprs = [
            parse("sin(x)*y + x^3", &c).unwrap(),
            parse("exp(0.3*x*y) - y^2/(x + 3)", &c).unwrap(),
            parse("cos(x - y)*(x + 2)^(1/2)", &c).unwrap(),
        ];
        let h = 1e-5;
        for e in &exprs {
            for (i, _) in ["x", "y"].iter().enumerate() {
                let d = e.differentiate(i).evaluate(&[x, y]).unwrap();
                let mut hi = [x, y];
                let mut lo = [x, y];
                hi[i] += h;
                lo[i] -= h;
                let fd = (e.evaluate(&hi).unwrap() - e.evaluate(&lo).unwrap()) / (2.0 * h);
                prop_assert!((d - fd).abs() <= 1e-6 * (1.0 + d.abs()),
                    "symbolic {d} vs fd {fd}");
            }
        }
    }
}
