use std::f64::consts::PI;

use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kinoplan::atlas::{random_in_ball, Atlas, AtlasParams, Chart, Cut, TreeId};
use kinoplan::dynamics::{builtin_problem, four_bar, CirclePendulum};
use kinoplan::manifold::State;
use kinoplan::planner::Planner;
use kinoplan::world::{out_of_workspace, Aabb, World};

fn pendulum() -> CirclePendulum {
    CirclePendulum {
        mass: 1.0,
        length: 1.0,
        gravity: 9.81,
        tau_max: 6.0,
    }
}

fn params(rho_s: f64) -> AtlasParams {
    AtlasParams {
        rho_s,
        rho: rho_s / 2.0,
        epsilon: 0.1,
        cos_alpha: 0.1,
    }
}

/// Brute-force forward kinematics of the four-bar link endpoints.
fn four_bar_endpoints(q: &[f64]) -> Vec<Vector2<f64>> {
    let mech = four_bar();
    let mut theta: f64 = 0.0;
    let mut origin = Vector2::zeros();
    let mut out = Vec::new();
    for (i, joint) in mech.joints.iter().enumerate() {
        let (s, c) = theta.sin_cos();
        let place = Vector2::new(joint.placement[0], joint.placement[1]);
        if joint.parent.is_some() {
            origin += Vector2::new(c * place.x - s * place.y, s * place.x + c * place.y);
        } else {
            origin = place;
        }
        theta += joint.angle + q[i];
        let l = mech.links[i].length;
        out.push(origin);
        out.push(origin + Vector2::new(theta.cos(), theta.sin()) * l);
    }
    out
}

#[test]
fn workspace_test_matches_brute_force() {
    let mech = four_bar();
    let world = World {
        workspace: Some(Aabb {
            min: [-1.2, -1.0],
            max: [1.5, 1.1],
        }),
        joint_limits: vec![None, Some([-5.0, 5.0])],
        ..World::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut outside = 0;
    for _ in 0..1000 {
        let q: Vec<f64> = (0..4).map(|_| rng.random_range(-6.0..6.0)).collect();
        let x = State::new(&q, &[0.0; 4]);
        let ws = world.workspace.unwrap();
        let inside = |p: &Vector2<f64>| p.x >= ws.min[0] && p.x <= ws.max[0] && p.y >= ws.min[1] && p.y <= ws.max[1];
        let expected = q[1] <= -5.0 || q[1] >= 5.0 || !four_bar_endpoints(&q).iter().all(inside);
        assert_eq!(out_of_workspace(&world, &mech, &x), expected, "q = {q:?}");
        outside += expected as usize;
    }
    assert!(outside > 100 && outside < 900);
}

#[test]
fn samples_are_uniform_in_the_chart_ball() {
    let p = pendulum();
    let x0 = p.state_at(0.3, 0.0);
    let mut atlas = Atlas::init(&p, params(1.0), &x0, &p.state_at(3.0, 0.0)).unwrap();
    atlas.note_node(0, TreeId::Start);
    let chart = atlas.chart(0).clone();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 200_000;
    let mut mean = DVector::zeros(2);
    let mut mean_sq = 0.0;
    for _ in 0..n {
        let (x, c) = atlas.sample(TreeId::Start, &mut rng);
        assert_eq!(c, 0);
        let y = chart.coords(&State(x));
        mean += &y / n as f64;
        mean_sq += y.norm_squared() / n as f64;
    }
    // Uniform in the unit disk: E[y] = 0, E[|y|²] = d / (d + 2) = 1/2.
    assert!(mean.norm() < 0.01, "{mean}");
    assert!((mean_sq - 0.5).abs() < 0.01, "{mean_sq}");
}

#[test]
fn polytope_acceptance_matches_volume_ratio() {
    let p = pendulum();
    let rho_s = 1.0;
    let mut chart = Chart::new(&p, 0, p.state_at(0.0, 0.0), rho_s).unwrap();
    let sides = 8;
    let inradius = rho_s / 10.0;
    for k in 0..sides {
        let a = 2.0 * PI * k as f64 / sides as f64;
        chart.cuts.push(Cut {
            y: DVector::from_vec(vec![a.cos(), a.sin()]) * (2.0 * inradius),
            neighbor: k + 1,
        });
    }
    let expected = sides as f64 * inradius * inradius * (PI / sides as f64).tan() / (PI * rho_s * rho_s);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let n = 1_000_000;
    let hits = (0..n)
        .filter(|_| chart.in_polytope(&random_in_ball(&mut rng, 2, rho_s)))
        .count();
    let rate = hits as f64 / n as f64;
    assert!((rate / expected - 1.0).abs() <= 0.05, "rate {rate}, expected {expected}");
}

#[test]
fn parallel_and_sequential_runs_agree() {
    for name in ["pendulum", "fourbar"] {
        let prob = builtin_problem(name).unwrap().into_problem().unwrap();
        let run = |parallel: bool| {
            let mut params = prob.params.clone();
            params.parallel = parallel;
            let mut planner = Planner::new(prob.mech(), &prob.world, &prob.start, &prob.goal, params, prob.integrator).unwrap();
            let sol = planner.run().unwrap();
            (sol.trajectory, sol.stats.samples, planner.atlas().len())
        };
        assert_eq!(run(true), run(false), "{name}");
    }
}

