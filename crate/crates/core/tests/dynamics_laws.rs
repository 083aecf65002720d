//! Dynamics laws at seeded sample points: the closed-form contact Hamiltonian
//! field against the pointwise linear solver, agreement of the two bracket
//! routes on random quadratics, antisymmetry and the Jacobi identity, the
//! conformal rescaling along Hamiltonian flows, energy decay, the lifted
//! field's defining equation on the cover, and the integrator's order.

use std::sync::Arc;

use contactred_core::cover::CoverBundle;
use contactred_core::dynamics::{contact_field_at, flow, observed_order, DarbouxDynamics};
use contactred_core::expr::{Chart, Expr};
use contactred_core::precontact::darboux_model;
use contactred_core::sample::Sampler;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// A random polynomial of total degree at most two with coefficients in
/// [-1, 1].
fn random_quadratic(chart: &Arc<Chart>, rng: &mut ChaCha8Rng) -> Expr {
    let mut e = Expr::constant(chart, rng.gen_range(-1.0..1.0));
    for i in 0..chart.dim() {
        let xi = Expr::coord(chart, i);
        e = &e + &(&Expr::constant(chart, rng.gen_range(-1.0..1.0)) * &xi);
        for j in i..chart.dim() {
            let xj = Expr::coord(chart, j);
            let c = Expr::constant(chart, rng.gen_range(-1.0..1.0));
            e = &e + &(&(&c * &xi) * &xj);
        }
    }
    e.fold()
}

fn models() -> Vec<(&'static str, DarbouxDynamics)> {
    let (_c3, f3) = darboux_model(3, 1).unwrap();
    let (_c5, f5) = darboux_model(5, 2).unwrap();
    vec![
        ("darboux3", DarbouxDynamics::new(f3).unwrap()),
        ("darboux5", DarbouxDynamics::new(f5).unwrap()),
    ]
}

#[test]
fn closed_form_field_matches_pointwise_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(301);
    for (name, dyn_model) in models() {
        let chart = dyn_model.chart().clone();
        let sampler = Sampler::new(307);
        let points = sampler.points(&chart, 100).unwrap();
        for _ in 0..10 {
            let h = random_quadratic(&chart, &mut rng);
            let closed = dyn_model.contact_field(&h).unwrap();
            for p in &points {
                let direct = closed.value_at(p).unwrap();
                let solved = contact_field_at(dyn_model.field(), &h, p).unwrap().particular;
                let scale = 1.0 + direct.amax();
                assert!(
                    (&direct - &solved).amax() <= 1e-8 * scale,
                    "{name}: field mismatch {:.3e} at {p:?}",
                    (&direct - &solved).amax()
                );
            }
        }
    }
}

#[test]
fn bracket_routes_agree_on_random_quadratics() {
    let mut rng = ChaCha8Rng::seed_from_u64(311);
    for (_name, dyn_model) in models() {
        let chart = dyn_model.chart().clone();
        let sampler = Sampler::new(313);
        let points = sampler.points(&chart, 100).unwrap();
        for _ in 0..10 {
            let f = random_quadratic(&chart, &mut rng);
            let g = random_quadratic(&chart, &mut rng);
            // errors out if the two evaluation routes deviate at any point
            dyn_model.bracket_checked(&f, &g, &points).unwrap();
        }
    }
}

#[test]
fn bracket_is_antisymmetric_and_satisfies_jacobi() {
    let mut rng = ChaCha8Rng::seed_from_u64(317);
    for (name, dyn_model) in models() {
        let chart = dyn_model.chart().clone();
        let sampler = Sampler::new(331);
        let points = sampler.points(&chart, 50).unwrap();
        for _ in 0..5 {
            let f = random_quadratic(&chart, &mut rng);
            let g = random_quadratic(&chart, &mut rng);
            let h = random_quadratic(&chart, &mut rng);

            let fg = dyn_model.bracket(&f, &g).unwrap();
            let gf = dyn_model.bracket(&g, &f).unwrap();
            let anti = &fg + &gf;

            let f_gh = dyn_model.bracket(&f, &dyn_model.bracket(&g, &h).unwrap()).unwrap();
            let g_hf = dyn_model.bracket(&g, &dyn_model.bracket(&h, &f).unwrap()).unwrap();
            let h_fg = dyn_model.bracket(&h, &fg).unwrap();
            let jacobi = &(&f_gh + &g_hf) + &h_fg;

            for p in &points {
                let a = anti.evaluate(p).unwrap();
                let scale = 1.0 + fg.evaluate(p).unwrap().abs();
                assert!(
                    a.abs() <= 1e-6 * scale,
                    "{name}: antisymmetry residual {a:.3e} at {p:?}"
                );
                let j = jacobi.evaluate(p).unwrap();
                let scale = 1.0
                    + f_gh.evaluate(p).unwrap().abs()
                    + g_hf.evaluate(p).unwrap().abs()
                    + h_fg.evaluate(p).unwrap().abs();
                assert!(
                    j.abs() <= 1e-6 * scale,
                    "{name}: Jacobi residual {j:.3e} at {p:?}"
                );
            }
        }
    }
}

#[test]
fn hamiltonian_flow_rescales_the_form_conformally() {
    let mut rng = ChaCha8Rng::seed_from_u64(337);
    for (name, dyn_model) in models() {
        let chart = dyn_model.chart().clone();
        let eta = dyn_model.field().eta().clone();
        let sampler = Sampler::new(347);
        let points = sampler.points(&chart, 100).unwrap();
        for _ in 0..5 {
            let h = random_quadratic(&chart, &mut rng);
            let x = dyn_model.contact_field(&h).unwrap();
            let lie = eta.lie_derivative(&x);
            let factor = dyn_model.conformal_factor(&h);
            let expected = eta.scaled(&factor);
            let diff = &lie - &expected;
            let sup = diff.sup_coeff_at(&points).unwrap();
            assert!(
                sup <= 1e-9,
                "{name}: Lie derivative deviates from the conformal rescaling by {sup:.3e}"
            );
        }
    }
}

#[test]
fn energy_decays_at_the_conformal_rate_along_flows() {
    let (chart, field) = darboux_model(3, 1).unwrap();
    let dyn_model = DarbouxDynamics::new(field).unwrap();
    let h = contactred_core::expr::parse("sin(q) * p + 0.5 * z * z", &chart).unwrap();
    let x = dyn_model.contact_field(&h).unwrap();
    let rate = dyn_model.conformal_factor(&h); // -dH/dz

    let steps = 1000usize;
    let t_end = 1.0;
    let dt = t_end / steps as f64;
    let traj = flow(&x, &[0.4, 0.8, -0.3], t_end, steps).unwrap();
    let states = traj.states();
    for i in 1..states.len() - 1 {
        let h_prev = h.evaluate(&states[i - 1]).unwrap();
        let h_here = h.evaluate(&states[i]).unwrap();
        let h_next = h.evaluate(&states[i + 1]).unwrap();
        let derivative = (h_next - h_prev) / (2.0 * dt);
        // dH/dt = rate * H along the flow of the Hamiltonian field
        let expected = rate.evaluate(&states[i]).unwrap() * h_here;
        assert!(
            (derivative - expected).abs() <= 1e-5 * (1.0 + expected.abs()),
            "energy defect {:.3e} at step {i}",
            (derivative - expected).abs()
        );
    }
}

#[test]
fn lifted_field_solves_the_cover_equation() {
    let mut rng = ChaCha8Rng::seed_from_u64(353);
    let (chart, field) = darboux_model(3, 1).unwrap();
    let dyn_model = DarbouxDynamics::new(field.clone()).unwrap();
    let bundle = CoverBundle::new(field, 1).unwrap();
    let omega = bundle.omega().clone();
    let sampler = Sampler::new(359);
    let points = sampler.points(bundle.total_chart(), 100).unwrap();
    for _ in 0..5 {
        let h = random_quadratic(&chart, &mut rng);
        let lifted_h = dyn_model.lift_hamiltonian(&bundle, &h).unwrap();
        let lifted_x = dyn_model.lift_field(&bundle, &h).unwrap();
        let grad = lifted_h.gradient();
        for p in &points {
            // the defining equation reads M x = grad H for the antisymmetric
            // matrix M of the cover form
            let m = omega.matrix_at(p).unwrap();
            let x_val = lifted_x.value_at(p).unwrap();
            let lhs = &m * &x_val;
            let mut rhs = nalgebra::DVector::zeros(grad.len());
            for (i, g) in grad.iter().enumerate() {
                rhs[i] = g.evaluate(p).unwrap();
            }
            let residual = (&lhs - &rhs).amax();
            assert!(
                residual <= 1e-8 * (1.0 + rhs.amax()),
                "cover equation residual {residual:.3e} at {p:?}"
            );
        }
    }
}

#[test]
fn integrator_shows_fourth_order_convergence() {
    let (chart, field) = darboux_model(3, 1).unwrap();
    let dyn_model = DarbouxDynamics::new(field).unwrap();
    let h = contactred_core::expr::parse("p * q", &chart).unwrap();
    let x = dyn_model.contact_field(&h).unwrap();
    let order = observed_order(&x, &[0.5, 0.7, 0.6], 1.0, 8).unwrap();
    assert!(
        (order - 4.0).abs() <= 0.3,
        "observed convergence order {order}"
    );
    let _ = chart;
}
