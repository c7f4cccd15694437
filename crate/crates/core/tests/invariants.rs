use degenwave_core::hum::{hum_apply, HUMProblem};
use degenwave_core::spectral::{project, synthesize};
use degenwave_core::wave::{solve_leapfrog, solve_spectral, DataPair, Forcing, SolveOptions};
use degenwave_core::weight::{multiplier_factor, multiplier_floor, weight};
use degenwave_core::{assemble_operator, compute_eigs, constants, Grid, WeightParams};
use proptest::prelude::*;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn multiplier_stays_above_floor(
        alpha in 0.05f64..1.95,
        eps in 0.0f64..0.119,
        x in -1.0f64..1.0,
        y in -1.0f64..1.0,
    ) {
        let p = WeightParams::unit_square(alpha, eps).unwrap();
        let m = multiplier_factor(&p, &[x, y]).unwrap();
        prop_assert!(m >= multiplier_floor(alpha) - 1e-12);
    }

    #[test]
    fn weight_is_radial_and_positive_away_from_origin(
        alpha in 0.05f64..1.95,
        eps in 0.01f64..0.119,
        r in 0.001f64..1.0,
        t in 0.0f64..std::f64::consts::TAU,
    ) {
        let p = WeightParams::unit_square(alpha, eps).unwrap();
        let a = weight(&p, &[r, 0.0]);
        let b = weight(&p, &[r * t.cos(), r * t.sin()]);
        prop_assert!(a > 0.0);
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn operator_is_symmetric_positive(
        alpha in 0.2f64..1.8,
        eps in 0.0f64..0.11,
        u in prop::collection::vec(-1.0f64..1.0, 49),
        v in prop::collection::vec(-1.0f64..1.0, 49),
    ) {
        let grid = Grid::new(2, 7, 1.0).unwrap();
        let op = assemble_operator(&grid, &WeightParams::unit_square(alpha, eps).unwrap()).unwrap();
        let (au, av) = (op.apply(&u), op.apply(&v));
        let scale = dot(&au, &au).sqrt() * dot(&v, &v).sqrt();
        prop_assert!((dot(&au, &v) - dot(&u, &av)).abs() <= 1e-12 * scale);
        prop_assert!(op.energy_form(&u) > 0.0);
    }

    #[test]
    fn lift_and_adjoint_are_transposes(
        phi in prop::collection::vec(-1.0f64..1.0, 49),
        u in prop::collection::vec(-1.0f64..1.0, 28),
    ) {
        let grid = Grid::new(2, 7, 1.0).unwrap();
        let op = assemble_operator(&grid, &WeightParams::unit_square(1.0, 0.1).unwrap()).unwrap();
        prop_assume!(u.len() == grid.boundary_nodes().len());
        let lhs = grid.cell_volume() * dot(&op.boundary_lift(&u).unwrap(), &phi);
        let rhs = grid.face_measure() * dot(&u, &op.lift_adjoint(&phi));
        prop_assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs().max(rhs.abs()).max(1e-30));
    }

    #[test]
    fn spectral_energy_is_conserved(
        coeffs in prop::collection::vec(-1.0f64..1.0, 8),
        vel in prop::collection::vec(-1.0f64..1.0, 8),
        horizon in 0.1f64..5.0,
    ) {
        let grid = Grid::new(2, 9, 1.0).unwrap();
        let op = assemble_operator(&grid, &WeightParams::unit_square(0.7, 0.05).unwrap()).unwrap();
        let basis = compute_eigs(&op, 8).unwrap();
        let data = DataPair::new(synthesize(&basis, &coeffs), synthesize(&basis, &vel));
        let sol = solve_spectral(&op, &basis, &data, &Forcing::Zero, horizon, 50, SolveOptions::default()).unwrap();
        prop_assert!(sol.energy.max_relative_drift() < 1e-10);
        prop_assert!(project(&basis, &data.displacement).iter().zip(&coeffs).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}

#[test]
fn leapfrog_energy_drift_shrinks_with_the_step() {
    let grid = Grid::new(2, 15, 1.0).unwrap();
    let op = assemble_operator(&grid, &WeightParams::unit_square(1.0, 0.1).unwrap()).unwrap();
    let basis = compute_eigs(&op, 3).unwrap();
    let data = DataPair::new(basis.vector(2).to_vec(), vec![0.0; op.size()]);
    let drift = |dt: f64| {
        solve_leapfrog(&op, &data, &Forcing::Zero, 2.0, dt, SolveOptions::default())
            .unwrap()
            .energy
            .max_relative_drift()
    };
    let (coarse, fine) = (drift(0.02), drift(0.01));
    assert!(fine < coarse);
    assert!(coarse < 1e-2);
}

#[test]
fn gramian_is_linear_and_symmetric() {
    let grid = Grid::new(2, 9, 1.0).unwrap();
    let params = WeightParams::unit_square(1.0, 0.1).unwrap();
    let op = assemble_operator(&grid, &params).unwrap();
    let basis = compute_eigs(&op, 81).unwrap();
    let t = 1.1 * constants(&params, &grid).unwrap().t_star;
    let data = DataPair::new(basis.vector(0).to_vec(), vec![0.0; op.size()]);
    let problem = HUMProblem::new(&op, &basis, &data, t, 0.9).unwrap();
    let k = problem.modes();
    let x: Vec<f64> = (0..2 * k).map(|i| ((i * 7 + 3) % 11) as f64 / 11.0 - 0.5).collect();
    let y: Vec<f64> = (0..2 * k).map(|i| ((i * 5 + 1) % 13) as f64 / 13.0 - 0.5).collect();
    let (lx, ly) = (problem.apply_modal(&x), problem.apply_modal(&y));
    let asym = (dot(&lx, &y) - dot(&x, &ly)).abs() / dot(&lx, &y).abs();
    assert!(asym < 1e-8, "asymmetry {asym}");
    let sum: Vec<f64> = x.iter().zip(&y).map(|(a, b)| 2.0 * a - b).collect();
    let ls = problem.apply_modal(&sum);
    for i in 0..2 * k {
        assert!((ls[i] - (2.0 * lx[i] - ly[i])).abs() < 1e-10 * (1.0 + lx[i].abs()));
    }
    let sigma = DataPair::new(basis.vector(1).to_vec(), vec![0.0; op.size()]);
    assert!(hum_apply(&problem, &sigma).is_ok());
}
