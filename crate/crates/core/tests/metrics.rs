use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phrom::bench::metrics::{project, reconstruct, relative_error};
use phrom::bench::{
    build_linear_msd, compute_metrics, energy_balance_error, energy_balance_series, LinearMsdConfig,
};
use phrom::embed::{DeflatedPod, Embedding, LinearEmbedding};
use phrom::integrate::{simulate_fom, NewtonConfig, NewtonStats, TimeGrid, Trajectory};
use phrom::numerics::thin_svd;
use phrom::ph::{InputSignal, PhSystem, SplitHamiltonian};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn fake_trajectory(grid: TimeGrid, states: DMatrix<f64>, outputs: DMatrix<f64>) -> Trajectory {
    Trajectory {
        grid,
        states,
        outputs,
        nonconverged_steps: Vec::new(),
        newton: NewtonStats::default(),
    }
}

#[test]
fn relative_error_matches_explicit_sums() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let a = random(&mut rng, 7, 12);
    let b = random(&mut rng, 7, 12);
    let (mut num, mut den) = (0.0, 0.0);
    for j in 1..12 {
        for i in 0..7 {
            num += (a[(i, j)] - b[(i, j)]).powi(2);
            den += a[(i, j)].powi(2);
        }
    }
    let expected = (num / den).sqrt();
    assert!((relative_error(&a, &b) - expected).abs() <= 1e-14 * expected);

    // the initial column never contributes
    let mut b2 = b.clone();
    b2.column_mut(0).fill(1e6);
    assert_eq!(relative_error(&a, &b2), relative_error(&a, &b));
    assert_eq!(relative_error(&a, &a), 0.0);
}

#[test]
fn in_span_states_have_zero_projection_error() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 15;
    let mut b = DMatrix::zeros(n, 1);
    b[(2, 0)] = 1.0;
    let basis = thin_svd(&random(&mut rng, n, 4)).unwrap().u;
    let coeffs = random(&mut rng, 4, 30);
    let x = &basis * coeffs + &b * random(&mut rng, 1, 30);
    let pod = DeflatedPod::new(&x, &b).unwrap();
    let emb = Embedding::Linear(pod.linear_embedding(5).unwrap());
    let err = relative_error(&x, &project(&emb, &x).unwrap());
    assert!(err <= 1e-12, "{err}");
}

#[test]
fn exact_reduction_has_equal_reduction_and_projection_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let (n, r, np) = (10, 4, 21);
    let grid = TimeGrid::new(0.0, 2.0, np - 1).unwrap();
    let x = random(&mut rng, n, np);
    let emb = Embedding::Linear(
        LinearEmbedding::orthonormal(thin_svd(&random(&mut rng, n, r)).unwrap().u).unwrap(),
    );
    let mut reduced = DMatrix::zeros(r, np);
    for i in 0..np {
        reduced
            .column_mut(i)
            .copy_from(&emb.reduce(&x.column(i).into_owned()).unwrap());
    }
    let y = random(&mut rng, 1, np);
    let fom = fake_trajectory(grid, x.clone(), y.clone());
    let rom = fake_trajectory(grid, reduced.clone(), y);
    let m = compute_metrics(&fom, &rom, &emb).unwrap();
    assert!((m.e_x_red - m.e_x_proj).abs() <= 1e-14);
    assert_eq!(m.e_y, 0.0);
    assert!(m.e_x_lowerbound.is_none());
    assert!((reconstruct(&emb, &reduced).unwrap() - project(&emb, &x).unwrap()).amax() <= 1e-14);
}

#[test]
fn metrics_reject_mismatched_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(24);
    let emb = Embedding::Linear(
        LinearEmbedding::orthonormal(thin_svd(&random(&mut rng, 6, 2)).unwrap().u).unwrap(),
    );
    let fom = fake_trajectory(
        TimeGrid::new(0.0, 1.0, 10).unwrap(),
        random(&mut rng, 6, 11),
        random(&mut rng, 1, 11),
    );
    let rom = fake_trajectory(
        TimeGrid::new(0.0, 1.0, 5).unwrap(),
        random(&mut rng, 2, 6),
        random(&mut rng, 1, 6),
    );
    assert!(compute_metrics(&fom, &rom, &emb).is_err());
}

#[test]
fn lossless_system_conserves_energy() {
    // R = 0 and no input: GL6 preserves the quadratic Hamiltonian.
    let n = 6;
    let mut rng = ChaCha8Rng::seed_from_u64(25);
    let a = random(&mut rng, n, n);
    let l = random(&mut rng, n, n);
    let q = &l * l.transpose() + DMatrix::identity(n, n);
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    let x0 = DVector::from_fn(n, |i, _| 0.3 * (i as f64 + 1.0));
    let sys = PhSystem::new(
        &a - a.transpose(),
        DMatrix::zeros(n, n),
        b,
        SplitHamiltonian::quadratic(q).unwrap(),
        x0,
    )
    .unwrap();
    let input = InputSignal::zero(1);
    let grid = TimeGrid::from_step(0.0, 20.0, 0.1).unwrap();
    let traj = simulate_fom(&sys, &input, grid, NewtonConfig::new(1e-13, 20).unwrap()).unwrap();
    let series = energy_balance_series(&sys, &traj, &input).unwrap();
    let worst = series.iter().fold(0.0_f64, |m, v| m.max(*v));
    assert!(worst <= 1e-10, "{worst}");
}

fn linear_energy_error(dt: f64) -> f64 {
    let sys = build_linear_msd(&LinearMsdConfig::uniform(5, 2.0, 1.0, 1.0)).unwrap();
    let input = InputSignal::sine(1, 0.1, 1.0);
    let grid = TimeGrid::from_step(0.0, 10.0, dt).unwrap();
    let traj = simulate_fom(&sys, &input, grid, NewtonConfig::new(1e-13, 20).unwrap()).unwrap();
    energy_balance_error(&sys, &traj, &input, 10.0).unwrap()
}

#[test]
fn energy_balance_error_is_second_order_in_dt() {
    // GL6 is exact to far below the trapezoidal quadrature error.
    let ratio = linear_energy_error(0.1) / linear_energy_error(0.05);
    assert!((3.5..=4.5).contains(&ratio), "{ratio}");
}

#[test]
fn energy_balance_error_needs_a_grid_point() {
    let sys = build_linear_msd(&LinearMsdConfig::uniform(2, 1.0, 1.0, 1.0)).unwrap();
    let input = InputSignal::constant(1, 0.1);
    let grid = TimeGrid::new(0.0, 1.0, 10).unwrap();
    let traj = simulate_fom(&sys, &input, grid, NewtonConfig::default()).unwrap();
    assert!(energy_balance_error(&sys, &traj, &input, 0.55).is_err());
    assert!(energy_balance_error(&sys, &traj, &input, 2.0).is_err());
    assert_eq!(energy_balance_error(&sys, &traj, &input, 0.0).unwrap(), 0.0);
    let series = energy_balance_series(&sys, &traj, &input).unwrap();
    assert_eq!(
        energy_balance_error(&sys, &traj, &input, 0.5).unwrap(),
        series[5]
    );
}
