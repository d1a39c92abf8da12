use gpsysid_core::lag::{embed, fit_lag_model, metrics, records_from};
use gpsysid_core::{
    synth, Dataset, EvalMode, GpFitOptions, HyperVector, Kernel, KernelFamily, LagFitOptions, LagSpec, Matrix,
    MeanFunction, TrainedGP,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
}

fn fir_series(n: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = (0..n).map(|k| if k == 0 { 0.0 } else { 0.8 * u[k - 1] }).collect();
    (u, y)
}

#[test]
fn noiseless_fir_is_learned() {
    let (u, y) = fir_series(101, 1);
    let train = records_from(&y, Some(&u));
    let opts = LagFitOptions::new(GpFitOptions::optimized(KernelFamily::SquaredExponential));
    let (model, _) = fit_lag_model(&train, LagSpec::nfir(1).unwrap(), &opts).unwrap();

    let (u, y) = fir_series(51, 2);
    let test = records_from(&y, Some(&u));
    let m = model.evaluate(&test, EvalMode::OneStep).unwrap();
    assert_eq!(m.count, 50);
    assert!(m.rmse <= 1e-3 * std_dev(&y[1..]), "rmse {} vs std {}", m.rmse, std_dev(&y[1..]));
}

#[test]
fn narx_one_step_on_linear_system() {
    let s = synth::linear_arx(400, 0.9, 0.5, 0.05, 21);
    let u = s.u.unwrap();
    let records = records_from(&s.y, Some(&u));
    let opts = LagFitOptions::new(GpFitOptions::optimized(KernelFamily::SquaredExponential));
    let (model, fit) = fit_lag_model(&records[..300], LagSpec::narx(1, 1).unwrap(), &opts).unwrap();
    assert!(fit.unwrap().nll.is_finite());
    let m = model.evaluate(&records[299..], EvalMode::OneStep).unwrap();
    assert!(m.rmse <= 0.1, "rmse {}", m.rmse);
    assert!(m.coverage95 >= 0.8, "coverage {}", m.coverage95);
}

#[test]
fn nfir_free_run_equals_one_step() {
    let s = synth::linear_arx(120, 0.0, 1.5, 0.05, 3);
    let u = s.u.unwrap();
    let records = records_from(&s.y, Some(&u));
    let opts = LagFitOptions::new(GpFitOptions::fixed(
        KernelFamily::Matern52,
        HyperVector::from_natural(1.0, 1.0, 0.05),
    ));
    let (model, _) = fit_lag_model(&records, LagSpec::nfir(3).unwrap(), &opts).unwrap();
    let (one, t1) = model.predictions(&records, EvalMode::OneStep).unwrap();
    let (free, t2) = model.predictions(&records, EvalMode::FreeRun).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(one, free);
}

#[test]
fn noe_free_run_reproduces_linear_step_response() {
    // Noise-free training data from the ARX system, then a step input.
    let s = synth::linear_arx(300, 0.8, 0.4, 0.0, 8);
    let u = s.u.unwrap();
    let records = records_from(&s.y, Some(&u));
    let opts = LagFitOptions::new(GpFitOptions::optimized(KernelFamily::SquaredExponential));
    let (model, _) = fit_lag_model(&records, LagSpec::narx(1, 1).unwrap(), &opts).unwrap();
    let step = vec![1.0; 80];
    let sim = model.simulate_noe(&step, &[0.0], 79).unwrap();
    let steady = 0.4 / (1.0 - 0.8);
    let mut y = 0.0;
    for (h, (mean, _)) in sim.iter().enumerate() {
        y = 0.8 * y + 0.4;
        assert!((mean - y).abs() <= 0.05 * steady, "step {h}: {mean} vs {y}");
    }
}

#[test]
fn training_rows_are_interpolated() {
    let s = synth::logistic_narx(80, 3.2, 0.0, 5);
    let u = s.u.unwrap();
    let records = records_from(&s.y, Some(&u));
    let spec = LagSpec::narx(2, 1).unwrap();
    let opts = LagFitOptions::new(GpFitOptions::fixed(
        KernelFamily::Matern52,
        HyperVector::from_natural(0.5, 0.5, 1e-6),
    ));
    let (model, _) = fit_lag_model(&records, spec, &opts).unwrap();
    let (preds, truth) = model.predictions(&records, EvalMode::OneStep).unwrap();
    for ((m, v), t) in preds.iter().zip(&truth) {
        assert!((m - t).abs() <= 1e-4, "{m} vs {t}");
        assert!(*v <= model.prior_variance() + model.noise_variance());
    }
}

#[test]
fn row_order_does_not_matter() {
    let s = synth::linear_arx(100, 0.7, 0.6, 0.1, 12);
    let u = s.u.unwrap();
    let data = embed(&records_from(&s.y, Some(&u)), LagSpec::narx(2, 2).unwrap()).unwrap();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(0));
    let d = data.input_dim();
    let rows: Vec<f64> = order.iter().flat_map(|&i| data.inputs().row(i).to_vec()).collect();
    let targets: Vec<f64> = order.iter().map(|&i| data.targets()[i]).collect();
    let shuffled = Dataset::new(Matrix::from_vec(data.len(), d, rows).unwrap(), targets, 0.01).unwrap();

    let k = Kernel::new(KernelFamily::Matern32, 1.3, 0.9).unwrap();
    let a = TrainedGP::fit(&data.with_noise_variance(0.01).unwrap(), k, MeanFunction::Zero).unwrap();
    let b = TrainedGP::fit(&shuffled, k, MeanFunction::Zero).unwrap();
    let zs = Matrix::from_fn(15, d, |i, j| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
    let pa = a.predict(&zs, false).unwrap();
    let pb = b.predict(&zs, false).unwrap();
    for i in 0..15 {
        assert!((pa.mean[i] - pb.mean[i]).abs() <= 1e-10);
        assert!((pa.variances()[i] - pb.variances()[i]).abs() <= 1e-10);
    }
}

/// Data drawn from the model class itself: y_k = f(u_{k−1}) + ε with f a
/// GP draw.
fn well_specified(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
    let k = Kernel::new(KernelFamily::SquaredExponential, 1.0, 0.7).unwrap();
    let f = synth::latent_draw(&k, &u, &mut rng).unwrap();
    let y = (0..n)
        .map(|i| if i == 0 { 0.0 } else { f[i - 1] + 0.1 * synth::normal(&mut rng) })
        .collect();
    (u, y)
}

#[test]
fn predictive_bands_are_calibrated() {
    let mut total = 0.0;
    for seed in 0..20 {
        let (u, y) = well_specified(100 + seed, 201);
        let records = records_from(&y, Some(&u));
        let opts = LagFitOptions::new(GpFitOptions::optimized(KernelFamily::SquaredExponential));
        let (model, _) = fit_lag_model(&records[..101], LagSpec::nfir(1).unwrap(), &opts).unwrap();
        let m = model.evaluate(&records[100..], EvalMode::OneStep).unwrap();
        total += m.coverage95;
    }
    let coverage = total / 20.0;
    assert!((0.85..=0.99).contains(&coverage), "mean coverage {coverage}");
}

#[test]
fn constant_predictor_rmse_approaches_noise_level() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let truth: Vec<f64> = (0..20000).map(|_| 2.0 + 0.3 * synth::normal(&mut rng)).collect();
    let preds = vec![(2.0, 0.0); truth.len()];
    let m = metrics(&preds, &truth, 0.09);
    assert!((m.rmse - 0.3).abs() < 0.01);
    assert!((m.coverage95 - 0.95).abs() < 0.01);
}

proptest! {
    #[test]
    fn embedding_bookkeeping(n in 0usize..4, m in 0usize..4, len in 1usize..30, seed in any::<u64>()) {
        prop_assume!(n + m > 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let u: Vec<f64> = (0..len).map(|_| rng.random()).collect();
        let spec = LagSpec::new(n, m).unwrap();
        let p = n.max(m);
        let result = embed(&records_from(&y, Some(&u)), spec);
        if len <= p {
            prop_assert!(result.is_err());
            return Ok(());
        }
        let data = result.unwrap();
        prop_assert_eq!(data.len(), len - p);
        prop_assert_eq!(data.input_dim(), n + m);
        for (row, k) in (p..len).enumerate() {
            prop_assert_eq!(data.targets()[row], y[k]);
            let z = data.inputs().row(row);
            for i in 0..n {
                prop_assert_eq!(z[i], y[k - 1 - i]);
            }
            for j in 0..m {
                prop_assert_eq!(z[n + j], u[k - 1 - j]);
            }
        }
    }
}
