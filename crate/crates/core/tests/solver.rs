use std::f64::consts::PI;

use cyma_core::geometry::{build_metric, HermitianField, MetricSpec, ScalarField, TorusGrid};
use cyma_core::ma::ma_density;
use cyma_core::solver::{
    continuity_path, lambda_path, log_lp_norm, newton_solve, solve, solve_calabi, solve_degenerate,
    solve_singular, DensitySpec, KltDensitySpec, MaProblem, Normalization, SolverSettings,
};
use cyma_core::Error;

fn cos(grid: &TorusGrid, axis: usize, c: f64, a: f64) -> ScalarField {
    ScalarField::from_fn(grid, |x| c + a * (2.0 * PI * x[axis]).cos()).unwrap()
}

fn curve(res: usize) -> (TorusGrid, HermitianField) {
    let g = TorusGrid::new(1, res).unwrap();
    let w = HermitianField::identity(&g);
    (g, w)
}

#[test]
fn trivial_problem_needs_no_iterations() {
    let (g, w) = curve(64);
    let p = MaProblem::new(&w, 1.0, DensitySpec::Smooth(ScalarField::zeros(&g))).unwrap();
    let s = newton_solve(&p, None).unwrap();
    assert_eq!(s.iterations, 0);
    assert_eq!(s.phi.sup_norm(), 0.0);
    assert_eq!(p.normalization, Normalization::None);
}

#[test]
fn small_perturbation_follows_linearization() {
    // (1 + Delta phi / 2) = e^{phi + f}: to first order phi = -f / (1 + 2 pi^2) for f = a cos.
    let (g, w) = curve(64);
    let a = 1e-3;
    let s = newton_solve(
        &MaProblem::new(&w, 1.0, DensitySpec::Smooth(cos(&g, 0, 0.0, a))).unwrap(),
        None,
    )
    .unwrap();
    let first_order = -a / (1.0 + 2.0 * PI * PI);
    assert!((first_order + 4.8218e-5).abs() < 1e-8);
    assert!((s.phi.values()[0] - first_order).abs() < 1e-6);
    assert!(
        (s.phi.values()[0] + 4.8447e-5).abs() < 1e-8,
        "{}",
        s.phi.values()[0]
    );
}

#[test]
fn negative_lambda_is_rejected() {
    let (g, w) = curve(16);
    let r = MaProblem::new(&w, -1.0, DensitySpec::Smooth(ScalarField::zeros(&g)));
    assert!(matches!(r, Err(Error::UnsupportedSpec(_))));
}

#[test]
fn density_with_zero_or_negative_mass() {
    let (g, _) = curve(16);
    assert!(matches!(
        DensitySpec::from_values(&ScalarField::constant(&g, -1.0)),
        Err(Error::Infeasible(_))
    ));
    assert!(matches!(
        DensitySpec::from_values(&cos(&g, 0, 0.5, 1.0)),
        Err(Error::Positivity(_))
    ));
}

#[test]
fn calabi_closed_form_at_res_128() {
    let (g, w) = curve(128);
    let f = DensitySpec::from_values(&cos(&g, 0, 1.0, 0.3)).unwrap();
    let s = solve_calabi(&w, &f, 2.0, &SolverSettings::default()).unwrap();
    let k = -0.0151982;
    assert!((-0.3 / (2.0 * PI * PI) - k).abs() < 1e-7);
    assert!((s.c - 1.0).abs() < 1e-8);
    assert!(s.phi.sup_distance(&cos(&g, 0, k, k)).unwrap() < 1e-7);
    assert!(s.phi.max().abs() < 1e-15);
}

#[test]
fn solve_dispatches_on_lambda() {
    let (g, w) = curve(32);
    let f = DensitySpec::from_values(&cos(&g, 0, 1.0, 0.3)).unwrap();
    let p = MaProblem::new(&w, 0.0, f).unwrap();
    assert_eq!(p.normalization, Normalization::SupZero);
    assert!((solve(&p).unwrap().c - 1.0).abs() < 1e-8);
}

#[test]
fn solutions_satisfy_the_equation_pointwise() {
    let g = TorusGrid::new(2, 16).unwrap();
    let w = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.2 }).unwrap();
    let log_f = ScalarField::from_fn(&g, |x| 0.3 * (2.0 * PI * (x[0] + x[3])).sin()).unwrap();
    let s = newton_solve(
        &MaProblem::new(&w, 2.0, DensitySpec::Smooth(log_f.clone())).unwrap(),
        None,
    )
    .unwrap();
    let ratio = ma_density(&w, &s.phi).unwrap().values;
    let worst = (0..g.len())
        .map(|i| (ratio.values()[i].ln() - 2.0 * s.phi.values()[i] - log_f.values()[i]).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    assert!(s.positivity_margin > 0.0);
}

#[test]
fn continuity_path_matches_direct_solve_and_refines() {
    let (g, w) = curve(64);
    let f = cos(&g, 0, 0.0, 0.5);
    let path = continuity_path(&w, &f, &[0.0, 0.5, 1.0], &SolverSettings::default()).unwrap();
    let osc: Vec<f64> = path.solutions.iter().map(|s| s.diagnostics.osc).collect();
    assert!(osc.windows(2).all(|p| p[1] >= p[0]), "{osc:?}");
    assert!(path.solutions.iter().all(|s| s.residual <= 1e-9));
    let direct = newton_solve(
        &MaProblem::new(&w, 1.0, DensitySpec::Smooth(f)).unwrap(),
        None,
    )
    .unwrap();
    assert!(path.last().unwrap().phi.sup_distance(&direct.phi).unwrap() < 1e-9);

    // With a tight Newton budget a single step to t = 1 fails and is bisected.
    let strong = cos(&g, 0, 0.0, 2.0);
    let budget = SolverSettings {
        tol: 1e-9,
        max_newton: 4,
    };
    assert!(continuity_path(
        &w,
        &strong,
        &[0.0, 1.0],
        &SolverSettings {
            max_newton: 1,
            ..budget
        }
    )
    .is_err());
    let coarse = continuity_path(&w, &strong, &[0.0, 1.0], &budget).unwrap();
    assert!(coarse.refinements > 0, "no refinement");
    assert_eq!(coarse.schedule.len(), coarse.solutions.len());
    assert!(coarse.schedule.windows(2).all(|p| p[1] > p[0]));
    let direct = newton_solve(
        &MaProblem::new(&w, 1.0, DensitySpec::Smooth(strong)).unwrap(),
        None,
    )
    .unwrap();
    let gap = coarse
        .last()
        .unwrap()
        .phi
        .sup_distance(&direct.phi)
        .unwrap();
    assert!(gap < 1e-9, "{gap}");
}

#[test]
fn continuity_schedule_must_span_unit_interval() {
    let (g, w) = curve(16);
    let f = ScalarField::zeros(&g);
    for bad in [vec![0.0, 0.5], vec![0.2, 1.0], vec![0.0, 0.6, 0.4, 1.0]] {
        assert!(matches!(
            continuity_path(&w, &f, &bad, &SolverSettings::default()),
            Err(Error::UnsupportedSpec(_))
        ));
    }
}

#[test]
fn hermitian_calabi_constant_matches_lambda_path() {
    let g = TorusGrid::new(2, 16).unwrap();
    let w = build_metric(&g, &MetricSpec::HermitianNonkahler { epsilon: 0.1 }).unwrap();
    let f = DensitySpec::from_values(&cos(&g, 0, 1.0, 0.3)).unwrap();
    let settings = SolverSettings::default();
    let s = solve_calabi(&w, &f, 2.0, &settings).unwrap();
    let lp = lambda_path(&w, &f, &[4, 8, 16, 32], &settings).unwrap();
    assert!((s.c - lp.c).abs() < 1e-6, "{} vs {}", s.c, lp.c);
    // The Kahler mass-ratio formula gives exactly 1 for this density.
    assert!((s.c - 1.0).abs() > 1e-6, "{}", s.c);
    assert_eq!(lp.path.schedule, vec![0.25, 0.125, 0.0625, 0.03125]);
}

#[test]
fn degenerate_constant_density_closed_form() {
    let (g, w) = curve(64);
    let theta = build_metric(&g, &MetricSpec::Degenerate { amplitude: 1.0 }).unwrap();
    let f = DensitySpec::from_values(&ScalarField::constant(&g, 1.0)).unwrap();
    let eps: Vec<f64> = (1..=6).map(|j| 0.5f64.powi(j)).collect();
    let path = solve_degenerate(&theta, &w, &f, &eps, &SolverSettings::default()).unwrap();
    for (e, c) in path.schedule.iter().zip(&path.constants) {
        assert!((c - (1.0 + e)).abs() < 1e-10, "eps {e}: c {c}");
    }
}

#[test]
fn degenerate_rejects_bad_inputs() {
    let (g, w) = curve(16);
    let theta = build_metric(&g, &MetricSpec::Degenerate { amplitude: 1.0 }).unwrap();
    let f = DensitySpec::from_values(&ScalarField::constant(&g, 1.0)).unwrap();
    let s = SolverSettings::default();
    assert!(matches!(
        solve_degenerate(&theta, &w, &f, &[0.1, 0.2], &s),
        Err(Error::UnsupportedSpec(_))
    ));
    let negative = theta.scale(-1.0);
    assert!(matches!(
        solve_degenerate(&negative, &w, &f, &[0.5], &s),
        Err(Error::Positivity(_))
    ));
    let zero = theta.scale(0.0);
    assert!(matches!(
        solve_degenerate(&zero, &w, &f, &[0.5], &s),
        Err(Error::Infeasible(_))
    ));
}

#[test]
fn klt_density_gates_and_singular_path() {
    let (g, w) = curve(64);
    let h = g.spacing(0);
    let klt = KltDensitySpec::new(&g, vec![vec![0.5 + 0.5 * h, 0.5]], vec![-0.5], 0.0).unwrap();
    assert!(matches!(
        solve_singular(&w, &klt, &[h], 2.0, &SolverSettings::singular()),
        Err(Error::KltViolation(_))
    ));
    let norms: Vec<f64> = [4.0 * h, 2.0 * h, h]
        .iter()
        .map(|d| log_lp_norm(&klt.with_delta(*d).log_density().unwrap(), 1.5))
        .collect();
    assert!(norms.iter().all(|v| v.is_finite() && *v < 2.0), "{norms:?}");
    let path = solve_singular(
        &w,
        &klt,
        &[4.0 * h, 2.0 * h, h],
        1.5,
        &SolverSettings::singular(),
    )
    .unwrap();
    assert_eq!(path.solutions.len(), 3);
    assert!(path
        .solutions
        .iter()
        .all(|s| s.residual <= 1e-6 && s.phi.max().abs() < 1e-15));
    assert_eq!(path.warm_start, vec![None, Some(0), Some(1)]);
}

#[test]
fn iteration_cap_is_reported() {
    let (g, w) = curve(32);
    let p = MaProblem::new(&w, 1.0, DensitySpec::Smooth(cos(&g, 0, 0.0, 1.0)))
        .unwrap()
        .with_max_newton(1);
    assert!(matches!(
        newton_solve(&p, None),
        Err(Error::IterationLimit { .. })
    ));
}
