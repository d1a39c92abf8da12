use gpsysid_core::gp::{self, Dataset, MeanFunction};
use gpsysid_core::kernels::{Kernel, KernelFamily};
use gpsysid_core::numerics::{expm, Matrix};
use gpsysid_core::temporal::{kalman_regress, matern_to_ss, run_smoother};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

struct Instance {
    times: Vec<f64>,
    y: Vec<f64>,
    test: Vec<f64>,
}

fn instance(seed: u64, n: usize, m: usize) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut times: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..10.0)).collect();
    times.sort_by(f64::total_cmp);
    times.dedup();
    let y = times
        .iter()
        .map(|t| (1.3 * t).sin() + 0.3 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let test = (0..m).map(|_| rng.random_range(-1.0..11.0)).collect();
    Instance { times, y, test }
}

#[test]
fn kalman_matches_exact_gp_all_matern() {
    for family in KernelFamily::MATERN {
        for seed in 0..3 {
            let inst = instance(seed, 200, 50);
            let (s, l, noise) = (1.1, 0.9, 0.09);
            let kernel = Kernel::new(family, s, l).unwrap();
            let data = Dataset::from_scalar(&inst.times, inst.y.clone(), noise).unwrap();
            let exact = gp::fit(&data, kernel, MeanFunction::Zero).unwrap();
            let post = exact.predict(&Matrix::column(&inst.test), false).unwrap();
            let (exact_nll, _) = gp::nll(&data, kernel, MeanFunction::Zero).unwrap();

            let kf = kalman_regress(&kernel, &inst.times, &inst.y, noise, &inst.test).unwrap();
            let var = post.variances();
            for i in 0..inst.test.len() {
                assert!((kf.mean[i] - post.mean[i]).abs() <= 1e-6 * s, "{family} mean");
                assert!((kf.variance[i] - var[i]).abs() <= 1e-6 * s * s, "{family} var");
            }
            assert!((kf.nll - exact_nll).abs() <= 1e-6, "{family} nll {} vs {}", kf.nll, exact_nll);
        }
    }
}

#[test]
fn matern32_kernel_matching_at_fixed_lags() {
    let kernel = Kernel::new(KernelFamily::Matern32, 1.0, 1.0).unwrap();
    let sde = matern_to_ss(&kernel).unwrap();
    for tau in [0.1, 0.5, 1.0, 2.0] {
        // C·P∞·expm(Aᵀτ)·Cᵀ computed explicitly here.
        let phi = expm(&sde.drift.scaled(tau)).unwrap();
        let m = sde.stationary_cov.matmul(&phi.transpose()).unwrap();
        let cov = m[(0, 0)];
        let k = kernel.eval(&[0.0], &[tau]).unwrap();
        assert!((cov - k).abs() < 1e-8, "tau {tau}: {cov} vs {k}");
    }
}

#[test]
fn smoothed_variance_not_above_filtered() {
    for family in KernelFamily::MATERN {
        let inst = instance(11, 120, 0);
        let kernel = Kernel::new(family, 0.8, 0.6).unwrap();
        let sde = matern_to_ss(&kernel).unwrap();
        let (run, _) = run_smoother(&sde, &inst.times, &inst.y, 0.05, &[]).unwrap();
        for (f, s) in run.filtered.iter().zip(&run.smoothed) {
            assert!(s.cov[(0, 0)] <= f.cov[(0, 0)] + 1e-12);
            assert!(s.cov.asymmetry() <= 1e-10 && f.cov.asymmetry() <= 1e-10);
            for i in 0..s.cov.rows() {
                assert!(s.cov[(i, i)] >= 0.0 && f.cov[(i, i)] >= 0.0);
            }
        }
    }
}
