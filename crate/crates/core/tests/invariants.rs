//! Property-style invariants for the shared kernels.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use riccati_rank_core::linalg::{
    op_norm, principal_angles, qr_positive, solve, svd, sym_eig, symmetrize, Matrix, Vector,
    TOL_SOLVE, TOL_SVD,
};

fn gaussian(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix {
    let mut m = Matrix::zeros(r, c);
    for j in 0..c {
        for i in 0..r {
            m[(i, j)] = rng.sample(StandardNormal);
        }
    }
    m
}

#[test]
fn sym_eig_round_trips_for_every_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for &d in &[2usize, 5, 10, 30] {
        for _ in 0..100 {
            let z = symmetrize(&gaussian(&mut rng, d, d));
            let s = sym_eig(&z).unwrap();
            let recon = &s.vectors
                * Matrix::from_diagonal(&Vector::from_vec(s.values.clone()))
                * s.vectors.transpose();
            let rel = op_norm(&(&z - recon)) / op_norm(&z);
            assert!(rel <= 1e-12, "d={d}: roundtrip {rel:.3e}");
            assert!(s.values.windows(2).all(|w| w[0].abs() >= w[1].abs()));
        }
    }
}

fn matrix_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim, 1..=max_dim).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |entries| Matrix::from_vec(r, c, entries))
    })
}

fn square_strategy(max_dim: usize) -> impl Strategy<Value = Matrix> {
    (1..=max_dim).prop_flat_map(|d| {
        prop::collection::vec(-10.0f64..10.0, d * d)
            .prop_map(move |entries| Matrix::from_vec(d, d, entries))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn svd_reconstruction_and_ordering(z in matrix_strategy(6)) {
        let f = svd(&z).unwrap();
        prop_assert!(f.singulars.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(f.singulars.iter().all(|&s| s >= 0.0));
        let recon = &f.left
            * Matrix::from_diagonal(&Vector::from_vec(f.singulars.clone()))
            * f.right.transpose();
        let scale = op_norm(&z);
        prop_assert!(op_norm(&(&z - recon)) <= TOL_SVD * scale.max(1e-12));
    }

    #[test]
    fn qr_factors_are_reproducible_and_valid(z in square_strategy(6)) {
        match (qr_positive(&z), qr_positive(&z)) {
            (Ok((q1, r1)), Ok((q2, r2))) => {
                prop_assert_eq!(q1.as_slice(), q2.as_slice());
                prop_assert_eq!(r1.as_slice(), r2.as_slice());
                let k = r1.nrows().min(r1.ncols());
                prop_assert!((0..k).all(|j| r1[(j, j)] > 0.0));
                prop_assert!(op_norm(&(&q1 * &r1 - &z)) <= 1e-10 * op_norm(&z).max(1.0));
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "qr determinism broke"),
        }
    }

    #[test]
    fn principal_angles_are_symmetric(seed in 0u64..5000, d in 2usize..7, ka in 1usize..4, kb in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ka = ka.min(d);
        let kb = kb.min(d);
        let wa = qr_positive(&gaussian(&mut rng, d, ka)).unwrap().0;
        let wb = qr_positive(&gaussian(&mut rng, d, kb)).unwrap().0;
        let ab = principal_angles(&wa, &wb).unwrap();
        let ba = principal_angles(&wb, &wa).unwrap();
        prop_assert_eq!(ab.len(), ba.len());
        for (x, y) in ab.iter().zip(ba.iter()) {
            prop_assert!((x - y).abs() <= 1e-12, "asymmetry {} vs {}", x, y);
            prop_assert!((0.0..=std::f64::consts::FRAC_PI_2 + 1e-12).contains(x));
        }
        prop_assert!(ab.windows(2).all(|w| w[0] <= w[1] + 1e-15));
    }

    #[test]
    fn solve_residual_is_small_when_accepted(z in square_strategy(6), cols in 1usize..4) {
        let d = z.nrows();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let b = gaussian(&mut rng, d, cols);
        if let Ok(x) = solve(&z, &b) {
            let resid = op_norm(&(&z * &x - &b));
            let bound = TOL_SOLVE * op_norm(&z) * op_norm(&x) + 1e-12;
            prop_assert!(resid <= bound, "residual {resid:.3e} bound {bound:.3e}");
        }
    }
}
