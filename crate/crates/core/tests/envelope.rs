use std::f64::consts::PI;

use cyma_core::envelope::{
    envelope_obstacle_oracle, envelope_obstacle_oracle_with_stats, envelope_penalized,
    orthogonality_defect, EnvelopeOptions,
};
use cyma_core::geometry::{build_metric, HermitianField, MetricSpec, ScalarField, TorusGrid};
use cyma_core::Error;

fn obstacle(g: &TorusGrid) -> ScalarField {
    ScalarField::from_fn(g, |x| 0.2 * (2.0 * PI * x[0]).cos()).unwrap()
}

#[test]
fn penalized_envelope_on_the_curve_benchmark() {
    let g = TorusGrid::new(1, 64).unwrap();
    let w = HermitianField::identity(&g);
    let ob = obstacle(&g);
    let r = envelope_penalized(&w, &ob, &EnvelopeOptions::default()).unwrap();
    assert!(r.failure.is_none());
    assert_eq!(r.lambda_trace.len(), 11);
    assert!(r.min_sandwich_slack() >= -1e-8);
    assert!(r.orthogonality_defect < 1e-4);
    // P <= g up to the penalization offset log(sup (1 + dd^c g)) / lambda,
    // which the discrete contact edge exceeds by well under 0.1%.
    let lambda = r.lambda_trace.last().unwrap().lambda;
    let c = (1.0f64 + 0.2 * 2.0 * PI * PI).ln() * 1.001;
    let excess = (&r.p - &ob).max();
    assert!(
        excess <= c / lambda + 1e-9,
        "{excess:e} vs {:e}",
        c / lambda
    );
    // Contact around the minimum of g at x = 1/2, free region around x = 0.
    let row = |ix: usize| g.flat_index(&[ix, 0]);
    assert!(r.contact_mask[row(32)] && !r.contact_mask[row(0)]);
    let oracle = envelope_obstacle_oracle(&w, &ob).unwrap();
    let width = (r.upper_constant + oracle.sup_norm() + r.inf_g.abs() + lambda.ln()) / lambda;
    assert!(r.p.sup_distance(&oracle).unwrap() < width);
}

#[test]
fn oracle_stops_on_complementarity() {
    let g = TorusGrid::new(1, 64).unwrap();
    let w = HermitianField::identity(&g);
    let ob = obstacle(&g);
    let s = envelope_obstacle_oracle_with_stats(&w, &ob).unwrap();
    assert!(s.complementarity <= 1e-8, "{}", s.complementarity);
    assert!((&s.u - &ob).max() <= 1e-12);
    // The oracle's contact set is the interval around x = 1/2 where g is convex enough.
    let contact: Vec<usize> = (0..64)
        .filter(|&i| ob.values()[i * 64] - s.u.values()[i * 64] <= 1e-10)
        .collect();
    assert!(contact.contains(&32) && !contact.contains(&0));
}

#[test]
fn psh_obstacles_are_fixed_points() {
    let g = TorusGrid::new(1, 32).unwrap();
    let w = HermitianField::identity(&g);
    let gentle = ScalarField::from_fn(&g, |x| 0.01 * (2.0 * PI * x[1]).sin()).unwrap();
    let p = envelope_obstacle_oracle(&w, &gentle).unwrap();
    assert!(p.sup_distance(&gentle).unwrap() < 1e-12);
    assert!(orthogonality_defect(&w, &gentle, &gentle, 1e-6).unwrap() == 0.0);
}

#[test]
fn envelope_on_a_hermitian_surface_runs() {
    let g = TorusGrid::new(2, 8).unwrap();
    let w = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.1 }).unwrap();
    let ob = ScalarField::from_fn(&g, |x| 0.05 * (2.0 * PI * x[0]).cos()).unwrap();
    let opts = EnvelopeOptions {
        schedule: vec![10.0, 20.0, 40.0, 80.0],
        ..EnvelopeOptions::default()
    };
    let r = envelope_penalized(&w, &ob, &opts).unwrap();
    assert!(r.failure.is_none());
    assert!(r.min_sandwich_slack() >= -1e-8);
    assert!(matches!(
        envelope_obstacle_oracle(&w, &ob),
        Err(Error::UnsupportedSpec(_))
    ));
}

#[test]
fn schedule_must_increase() {
    let g = TorusGrid::new(1, 16).unwrap();
    let w = HermitianField::identity(&g);
    let opts = EnvelopeOptions {
        schedule: vec![20.0, 10.0],
        ..EnvelopeOptions::default()
    };
    assert!(envelope_penalized(&w, &obstacle(&g), &opts).is_err());
}
