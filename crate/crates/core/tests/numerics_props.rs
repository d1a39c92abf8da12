use gpsysid_core::numerics::{cholesky, cholesky_default, expm, logdet, solve_general, solve_spd, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn to_na(a: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice())
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

/// Q·diag(eigs)·Qᵀ with a random orthogonal Q from nalgebra's QR.
fn spd_with_spectrum(eigs: &[f64], rng: &mut ChaCha8Rng) -> Matrix {
    let n = eigs.len();
    let g = to_na(&random_matrix(n, n, rng));
    let q = g.qr().q();
    let a = &q * DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(eigs)) * q.transpose();
    let mut m = Matrix::from_fn(n, n, |i, j| a[(i, j)]);
    m.symmetrize();
    m
}

fn rel_frobenius(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).powi(2)).sum();
    let norm: f64 = b.as_slice().iter().map(|x| x * x).sum();
    (diff / norm).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cholesky_reconstructs(n in 1usize..60, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_matrix(n, n, &mut rng);
        let mut a = g.matmul(&g.transpose()).unwrap();
        a.add_diagonal(n as f64 * 1e-3);
        let f = cholesky(&a, &[0.0]).unwrap();
        prop_assert!(rel_frobenius(&f.reconstruct(), &a) <= 1e-8);
        let l = f.lower();
        for i in 0..n {
            prop_assert!(l[(i, i)] > 0.0);
            for j in i + 1..n {
                prop_assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn solve_residual_tracks_conditioning(n in 2usize..30, log_cond in 0.0f64..8.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eigs: Vec<f64> = (0..n).map(|i| 10f64.powf(-log_cond * i as f64 / (n - 1) as f64)).collect();
        let a = spd_with_spectrum(&eigs, &mut rng);
        let b = random_matrix(n, 2, &mut rng);
        let f = cholesky(&a, &[0.0]).unwrap();
        let x = solve_spd(&f, &b).unwrap();
        let r = a.matmul(&x).unwrap().sub(&b).unwrap();
        let scale = a.norm_one() * x.norm_one() + b.norm_one();
        prop_assert!(r.norm_one() / scale <= 1e-12, "residual {}", r.norm_one() / scale);
    }

    #[test]
    fn expm_inverse_pair(n in 1usize..8, norm in 0.0f64..5.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_matrix(n, n, &mut rng);
        let a = g.scaled(norm / g.norm_one().max(1e-300));
        let prod = expm(&a).unwrap().matmul(&expm(&a.scaled(-1.0)).unwrap()).unwrap();
        let err = prod.sub(&Matrix::identity(n)).unwrap().max_abs();
        prop_assert!(err <= 1e-10, "‖e^A e^-A − I‖ = {err}");
    }

    #[test]
    fn logdet_matches_eigenvalues(n in 1usize..25, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let eigs: Vec<f64> = (0..n).map(|_| 10f64.powf(rng.random_range(-3.0..3.0))).collect();
        let a = spd_with_spectrum(&eigs, &mut rng);
        let oracle: f64 = to_na(&a).symmetric_eigenvalues().iter().map(|v| v.ln()).sum();
        let got = logdet(&cholesky(&a, &[0.0]).unwrap());
        prop_assert!((got - oracle).abs() <= 1e-9 * oracle.abs().max(1.0), "{got} vs {oracle}");
    }

    #[test]
    fn general_solve_residual(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut a = random_matrix(10, 10, &mut rng);
        a.add_diagonal(3.0);
        let b = random_matrix(10, 1, &mut rng);
        let x = solve_general(&a, &b).unwrap();
        let r = a.matmul(&x).unwrap().sub(&b).unwrap();
        prop_assert!(r.max_abs() <= 1e-12 * (1.0 + a.norm_one() * x.max_abs()));
    }
}

#[test]
fn cholesky_reconstructs_size_200() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = random_matrix(200, 200, &mut rng);
    let mut a = g.matmul(&g.transpose()).unwrap();
    a.add_diagonal(1.0);
    let f = cholesky_default(&a).unwrap();
    assert_eq!(f.jitter_used(), 0.0);
    assert!(rel_frobenius(&f.reconstruct(), &a) <= 1e-8);
}

#[test]
fn rank_deficient_gram_factorizes_with_jitter() {
    // Rank one, so singular.
    let v = [1.0, 2.0, 2.0, -0.5];
    let a = Matrix::from_fn(4, 4, |i, j| v[i] * v[j]);
    let f = cholesky_default(&a).unwrap();
    assert!(f.jitter_used() > 0.0);
    let mut shifted = a.clone();
    shifted.add_diagonal(f.jitter_used());
    assert!(rel_frobenius(&f.reconstruct(), &shifted) <= 1e-8);
}

/// Truncated Taylor series with scaling and squaring, done in nalgebra.
fn expm_series_oracle(a: &Matrix) -> DMatrix<f64> {
    let a = to_na(a);
    let n = a.nrows();
    let norm = a.abs().row_sum().max();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = &a / 2f64.powi(squarings);
    let mut term = DMatrix::<f64>::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / k as f64;
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

#[test]
fn companion_expm_matches_series() {
    // Feedback matrices of the Matérn 3/2 and 5/2 state-space forms.
    for (l, dt) in [(0.5, 0.1), (1.0, 0.7), (2.0, 3.0), (0.3, 1.5)] {
        let lam: f64 = 3f64.sqrt() / l;
        let f32 = Matrix::from_rows(&[[0.0, 1.0], [-lam * lam, -2.0 * lam]]).unwrap();
        let lam5: f64 = 5f64.sqrt() / l;
        let f52 = Matrix::from_rows(&[
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [-lam5.powi(3), -3.0 * lam5 * lam5, -3.0 * lam5],
        ])
        .unwrap();
        for f in [f32, f52] {
            let a = f.scaled(dt);
            let got = expm(&a).unwrap();
            let oracle = expm_series_oracle(&a);
            let scale = oracle.abs().max().max(1.0);
            for i in 0..a.rows() {
                for j in 0..a.cols() {
                    assert!(
                        (got[(i, j)] - oracle[(i, j)]).abs() <= 1e-9 * scale,
                        "ℓ={l} dt={dt} ({i},{j}): {} vs {}",
                        got[(i, j)],
                        oracle[(i, j)]
                    );
                }
            }
        }
    }
}
