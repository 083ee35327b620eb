use nalgebra::DVector;
use proptest::prelude::*;

use kinoplan::atlas::{Chart, Cut};
use kinoplan::dynamics::{five_bar, forward_dynamics, four_bar, Action, CirclePendulum, MultibodySystem};
use kinoplan::integrator::{self, IntegratorConfig};
use kinoplan::manifold::{self, ConstraintSystem, Sphere, State, ETA_F};

fn pendulum() -> CirclePendulum {
    CirclePendulum {
        mass: 1.0,
        length: 1.0,
        gravity: 9.81,
        tau_max: 6.0,
    }
}

fn sphere_state(q: &[f64], v: &[f64]) -> Option<State> {
    let q = DVector::from_column_slice(q);
    if q.norm() < 1e-3 {
        return None;
    }
    let q = q.normalize();
    let v = DVector::from_column_slice(v);
    let v = &v - &q * q.dot(&v);
    Some(State::new(q.as_slice(), v.as_slice()))
}

/// Projects a random configuration of a linkage onto its state manifold.
fn linkage_state(mech: &dyn MultibodySystem, q: &[f64], v: &[f64]) -> Option<State> {
    manifold::project_to_manifold(mech, &State::new(q, v)).ok()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn basis_is_orthonormal_kernel(q in prop::collection::vec(-1.0..1.0f64, 3), v in prop::collection::vec(-2.0..2.0f64, 3)) {
        let sphere = Sphere { dim: 3 };
        let Some(x) = sphere_state(&q, &v) else { return Ok(()) };
        let u = manifold::tangent_basis(&sphere, &x).unwrap();
        let u = u.matrix();
        prop_assert!((u.tr_mul(u) - nalgebra::DMatrix::identity(4, 4)).amax() <= 1e-10);
        prop_assert!((manifold::eval_f_jacobian(&sphere, &x).unwrap() * u).amax() <= 1e-8);
    }

    #[test]
    fn chart_round_trip(theta in -3.1..3.1f64, omega in -3.0..3.0f64, y in prop::collection::vec(-0.3..0.3f64, 2)) {
        let p = pendulum();
        let chart = Chart::new(&p, 0, p.state_at(theta, omega), 1.0).unwrap();
        let y = DVector::from_vec(y);
        let x = chart.lift(&p, &y).unwrap();
        prop_assert!(manifold::residual_norm(&p, &x).unwrap() <= ETA_F);
        prop_assert!((chart.coords(&x) - &y).amax() <= 10.0 * ETA_F);
    }

    #[test]
    fn cut_midpoint_is_on_the_boundary(y in prop::collection::vec(-2.0..2.0f64, 4)) {
        let cut = Cut { y: DVector::from_vec(y), neighbor: 1 };
        prop_assert!(cut.violation(&(&cut.y * 0.5)).abs() <= 1e-12);
        prop_assert!(cut.violation(&DVector::zeros(4)) <= 0.0);
    }

    #[test]
    fn cuts_only_shrink_the_polytope(
        cuts in prop::collection::vec(prop::collection::vec(-1.5..1.5f64, 2), 1..6),
        probes in prop::collection::vec(prop::collection::vec(-1.0..1.0f64, 2), 20),
    ) {
        let p = pendulum();
        let mut chart = Chart::new(&p, 0, p.state_at(0.0, 0.0), 1.0).unwrap();
        for (k, c) in cuts.into_iter().enumerate() {
            let before: Vec<bool> = probes.iter().map(|y| chart.in_polytope(&DVector::from_column_slice(y))).collect();
            chart.cuts.push(Cut { y: DVector::from_vec(c), neighbor: k + 1 });
            for (y, was_in) in probes.iter().zip(before) {
                if chart.in_polytope(&DVector::from_column_slice(y)) {
                    prop_assert!(was_in);
                }
            }
        }
    }

    #[test]
    fn mass_matrix_is_spd(q in prop::collection::vec(-3.0..3.0f64, 5)) {
        let fb = four_bar();
        let fv = five_bar();
        for (mech, n) in [(&fb as &dyn MultibodySystem, 4), (&fv as &dyn MultibodySystem, 5)] {
            let m = mech.mass_matrix(&DVector::from_column_slice(&q[..n]));
            prop_assert!((&m - m.transpose()).amax() == 0.0);
            prop_assert!(m.cholesky().is_some());
        }
    }

    #[test]
    fn vector_field_is_tangent(
        q in prop::collection::vec(-3.0..3.0f64, 5),
        v in prop::collection::vec(-2.0..2.0f64, 5),
        u in prop::collection::vec(-0.1..0.1f64, 2),
    ) {
        let mech = five_bar();
        let Some(x) = linkage_state(&mech, &q, &v) else { return Ok(()) };
        let jac = manifold::eval_f_jacobian(&mech, &x).unwrap();
        let Ok(g) = forward_dynamics(&mech, &x, &Action::from_slice(&u)) else { return Ok(()) };
        let scale = g.amax().max(1.0) * jac.amax().max(1.0);
        prop_assert!((jac * g).amax() <= 1e-9 * scale);
    }

    #[test]
    fn integrator_round_trip(theta in -2.5..2.5f64, omega in -2.0..2.0f64, h in 1e-3..2e-2f64) {
        let p = pendulum();
        let cfg = IntegratorConfig::default();
        let x0 = p.state_at(theta, omega);
        let chart = Chart::new(&p, 0, x0.clone(), 1.0).unwrap();
        let u = Action::zeros(1);
        let (x1, _, _) = integrator::step(&p, &chart, &x0, &chart.coords(&x0), &u, h, &cfg).unwrap();
        let (back, _, _) = integrator::step(&p, &chart, &x1, &chart.coords(&x1), &u, -h, &cfg).unwrap();
        prop_assert!(back.distance(&x0) <= 1e-9);
        prop_assert!(manifold::residual_norm(&p, &x1).unwrap() <= ETA_F);
    }
}

#[test]
fn sphere_states_stay_on_the_sphere_under_projection() {
    let sphere = Sphere { dim: 3 };
    let x = State::new(&[0.3, -1.2, 0.5], &[1.0, 0.2, -0.4]);
    let p = manifold::project_to_manifold(&sphere, &x).unwrap();
    assert!(manifold::residual_norm(&sphere, &p).unwrap() <= ETA_F);
    assert_eq!(sphere.d_x(), 4);
}
