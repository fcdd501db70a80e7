use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use phrom::bench::metrics::{project, reconstruct, relative_error};
use phrom::deim::DeimModel;
use phrom::embed::{DeflatedPod, Embedding};
use phrom::numerics::{kron, kron_square, kron_square_jacobian, pseudo_inverse, thin_svd};
use phrom::ph::{PhSystem, Potential, QuarticPotential, SplitHamiltonian};
use phrom::rom::{gmg_reduction, GmgContext};

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Random `J − R` with `J` skew and `R` positive semidefinite of rank `n/2`.
fn random_context(rng: &mut ChaCha8Rng, n: usize) -> GmgContext {
    let a = random(rng, n, n);
    let c = random(rng, n, n / 2);
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    let h = SplitHamiltonian::quadratic(DMatrix::identity(n, n)).unwrap();
    let sys = PhSystem::new_unchecked(
        &a - a.transpose(),
        &c * c.transpose(),
        b,
        h,
        DVector::zeros(n),
    )
    .unwrap();
    GmgContext::new(&sys).unwrap()
}

/// Snapshots on a curved manifold plus the port direction `e_0`.
fn curved_snapshots(rng: &mut ChaCha8Rng, n: usize, cols: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    let basis = thin_svd(&random(rng, n, 3)).unwrap().u;
    let mut x = DMatrix::zeros(n, cols);
    for j in 0..cols {
        let t = j as f64 / cols as f64;
        let c = DVector::from_column_slice(&[t, (3.0 * t).sin(), t * t]);
        x.column_mut(j).copy_from(&(&basis * c));
        x[(0, j)] += 0.5 * t;
    }
    x += random(rng, n, cols) * 1e-3;
    let mut b = DMatrix::zeros(n, 1);
    b[(0, 0)] = 1.0;
    (x, b)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn gmg_reduction_is_a_left_inverse(seed in any::<u64>(), n in 4usize..16, r_frac in 0.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ctx = random_context(&mut rng, n);
        let r = 1 + ((n - 1) as f64 * r_frac) as usize;
        let v = random(&mut rng, n, r);
        let w = gmg_reduction(&v, &ctx).unwrap();
        let defect = (w.tr_mul(&v) - DMatrix::<f64>::identity(r, r)).amax();
        prop_assert!(defect <= 1e-9, "defect {defect:e}");
    }

    #[test]
    fn pseudo_inverse_satisfies_penrose(seed in any::<u64>(), rows in 1usize..9, cols in 1usize..9, rank in 1usize..9) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = rank.min(rows).min(cols);
        let a = random(&mut rng, rows, k) * random(&mut rng, k, cols);
        let p = pseudo_inverse(&a).unwrap();
        let scale = 1.0 + a.norm() * p.norm();
        prop_assert!((&a * &p * &a - &a).amax() <= 1e-10 * scale * a.amax().max(1.0));
        prop_assert!((&p * &a * &p - &p).amax() <= 1e-10 * scale * p.amax().max(1.0));
        let ap = &a * &p;
        let pa = &p * &a;
        prop_assert!((&ap - ap.transpose()).amax() <= 1e-10 * scale);
        prop_assert!((&pa - pa.transpose()).amax() <= 1e-10 * scale);
    }

    #[test]
    fn kron_matches_nalgebra(a in prop::collection::vec(-10.0f64..10.0, 1..6), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DVector::from_vec(a);
        let b = DVector::from_fn(a.len(), |_, _| rng.random_range(-10.0..10.0));
        prop_assert_eq!(kron(&a, &b).unwrap(), a.kronecker(&b));
        prop_assert_eq!(kron_square(&a), a.kronecker(&a));
    }

    #[test]
    fn kron_square_jacobian_is_its_derivative(z in prop::collection::vec(-2.0f64..2.0, 1..6)) {
        let z = DVector::from_vec(z);
        let d = kron_square_jacobian(&z);
        let h = 1e-6;
        for i in 0..z.len() {
            let mut p = z.clone();
            let mut m = z.clone();
            p[i] += h;
            m[i] -= h;
            let fd = (kron_square(&p) - kron_square(&m)) / (2.0 * h);
            prop_assert!((d.column(i) - fd).amax() <= 1e-8);
        }
    }

    #[test]
    fn deim_gradient_is_the_gradient_of_deim_energy(seed in any::<u64>(), d in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 12;
        let l = random(&mut rng, n, n);
        let q = &l * l.transpose() / n as f64;
        let pot = QuarticPotential { dim: n, active: n, coeff: 0.8 };
        let h = SplitHamiltonian::new(q, Arc::new(pot), DVector::zeros(n)).unwrap();
        let basis = thin_svd(&random(&mut rng, n, d)).unwrap().u;
        let deim = DeimModel::from_basis(&h, basis).unwrap();
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let g = deim.grad(&x);
        let step = 1e-5;
        let fd = DVector::from_fn(n, |i, _| {
            let mut p = x.clone();
            let mut m = x.clone();
            p[i] += step;
            m[i] -= step;
            (deim.value(&p) - deim.value(&m)) / (2.0 * step)
        });
        prop_assert!((&g - &fd).norm() <= 1e-6 * (1.0 + g.norm()), "{:e}", (&g - &fd).norm());
    }

    #[test]
    fn deim_with_full_basis_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 8;
        let pot = QuarticPotential { dim: n, active: 5, coeff: 1.0 };
        let h = SplitHamiltonian::new(DMatrix::identity(n, n), Arc::new(pot.clone()), DVector::zeros(n)).unwrap();
        let basis = thin_svd(&random(&mut rng, n, n)).unwrap().u;
        let deim = DeimModel::from_basis(&h, basis).unwrap();
        let x = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        prop_assert!((deim.grad(&x) - &x - pot.gradient(&x)).amax() <= 1e-10);
    }

    #[test]
    fn projection_error_bounds(seed in any::<u64>(), r in 2usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x, b) = curved_snapshots(&mut rng, 14, 40);
        let pod = DeflatedPod::new(&x, &b).unwrap();

        // Orthonormal [B, V̄]: φ(ρ(x)) is the best approximation in the span,
        // so no reduced trajectory can beat it.
        let lin = Embedding::Linear(pod.linear_embedding(r).unwrap());
        let e_proj = relative_error(&x, &project(&lin, &x).unwrap());
        let reduced = random(&mut rng, r, x.ncols());
        let e_red = relative_error(&x, &reconstruct(&lin, &reduced).unwrap());
        prop_assert!(e_proj <= e_red + 1e-12);

        // Larger bases never project worse.
        let bigger = Embedding::Linear(pod.linear_embedding(r + 1).unwrap());
        prop_assert!(relative_error(&x, &project(&bigger, &x).unwrap()) <= e_proj + 1e-12);

        // The quadratic correction lives in span(B, V̄₁, V̄₂), bounded by its best approximation.
        let quad = pod.quadratic_embedding(&x, r, 1, 1e-6).unwrap();
        let v = quad.basis().clone();
        let best = &v * (pseudo_inverse(&v).unwrap() * &x);
        let e_lower = relative_error(&x, &best);
        let e_qproj = relative_error(&x, &project(&Embedding::Quadratic(quad), &x).unwrap());
        prop_assert!(e_lower <= e_qproj + 1e-12, "{e_lower} > {e_qproj}");
    }
}
