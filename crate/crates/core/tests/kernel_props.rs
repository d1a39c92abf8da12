use gpsysid_core::{Kernel, KernelFamily, Matrix};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop::sample::select(KernelFamily::ALL.to_vec())
}

fn kernel() -> impl Strategy<Value = Kernel> {
    (family(), 0.1f64..5.0, 0.05f64..5.0).prop_map(|(f, s, l)| Kernel::new(f, s, l).unwrap())
}

/// Closed forms written out independently of the library.
fn oracle(kernel: &Kernel, r: f64) -> f64 {
    let s2 = kernel.magnitude().powi(2);
    let l = kernel.lengthscale();
    match kernel.family {
        KernelFamily::SquaredExponential => s2 * (-r * r / (2.0 * l * l)).exp(),
        KernelFamily::Matern12 => s2 * (-r / l).exp(),
        KernelFamily::Matern32 => {
            let a = 3f64.sqrt() * r / l;
            s2 * (1.0 + a) * (-a).exp()
        }
        KernelFamily::Matern52 => {
            let a = 5f64.sqrt() * r / l;
            s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
        }
    }
}

fn points(dim: usize, max: usize) -> impl Strategy<Value = Matrix> {
    (1..=max).prop_flat_map(move |n| {
        prop::collection::vec(-3.0f64..3.0, n * dim)
            .prop_map(move |v| Matrix::from_vec(n, dim, v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matches_closed_form(k in kernel(), a in prop::collection::vec(-3.0f64..3.0, 3), b in prop::collection::vec(-3.0f64..3.0, 3)) {
        let r = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let got = k.eval(&a, &b).unwrap();
        let want = oracle(&k, r);
        prop_assert!((got - want).abs() <= 1e-12 * k.variance(), "{got} vs {want}");
    }

    #[test]
    fn stationary_and_symmetric(k in kernel(), a in prop::collection::vec(-3.0f64..3.0, 2), b in prop::collection::vec(-3.0f64..3.0, 2), shift in prop::collection::vec(-10.0f64..10.0, 2)) {
        let ab = k.eval(&a, &b).unwrap();
        prop_assert_eq!(ab, k.eval(&b, &a).unwrap());
        let a2: Vec<f64> = a.iter().zip(&shift).map(|(x, c)| x + c).collect();
        let b2: Vec<f64> = b.iter().zip(&shift).map(|(x, c)| x + c).collect();
        prop_assert!((k.eval(&a2, &b2).unwrap() - ab).abs() <= 1e-12 * k.variance());
    }

    #[test]
    fn bounded_and_decaying(k in kernel(), r1 in 0.0f64..20.0, dr in 0.0f64..20.0) {
        let v1 = k.eval_distance(r1);
        let v2 = k.eval_distance(r1 + dr);
        prop_assert!(v1 <= k.variance() && v2 >= 0.0);
        prop_assert!(v2 <= v1, "k({}) = {v2} > k({r1}) = {v1}", r1 + dr);
        prop_assert_eq!(k.eval_distance(0.0), k.variance());
    }

    #[test]
    fn gram_is_positive_semidefinite(k in kernel(), z in points(2, 50)) {
        let g = k.gram_symmetric(&z);
        let n = z.rows();
        let mut m = DMatrix::from_row_slice(n, n, g.as_slice());
        for i in 0..n {
            m[(i, i)] += 1e-10 * k.variance();
        }
        prop_assert!(m.cholesky().is_some());
    }

    #[test]
    fn gram_agrees_with_pointwise_eval(k in kernel(), za in points(3, 6), zb in points(3, 6)) {
        let g = k.gram(&za, &zb).unwrap();
        for i in 0..za.rows() {
            for j in 0..zb.rows() {
                prop_assert_eq!(g[(i, j)], k.eval(za.row(i), zb.row(j)).unwrap());
            }
        }
        let sym = k.gram_symmetric(&za);
        let full = k.gram(&za, &za).unwrap();
        for (a, b) in sym.as_slice().iter().zip(full.as_slice()) {
            prop_assert!((a - b).abs() <= 1e-14 * k.variance());
        }
    }

    #[test]
    fn log_hyper_gradients_match_finite_differences(k in kernel(), za in points(2, 5), zb in points(2, 5)) {
        let [d_mag, d_len] = k.grad_log_hyper(&za, &zb).unwrap();
        let h = 1e-6;
        let at = |ds: f64, dl: f64| {
            Kernel::new(k.family, k.magnitude() * ds.exp(), k.lengthscale() * dl.exp())
                .unwrap()
                .gram(&za, &zb)
                .unwrap()
        };
        let (mp, mm) = (at(h, 0.0), at(-h, 0.0));
        let (lp, lm) = (at(0.0, h), at(0.0, -h));
        let g = k.gram(&za, &zb).unwrap();
        for idx in 0..g.as_slice().len() {
            let fd_mag = (mp.as_slice()[idx] - mm.as_slice()[idx]) / (2.0 * h);
            let fd_len = (lp.as_slice()[idx] - lm.as_slice()[idx]) / (2.0 * h);
            let floor = 1e-6 * k.variance();
            prop_assert!((d_mag.as_slice()[idx] - fd_mag).abs() <= 1e-5 * fd_mag.abs().max(floor));
            prop_assert!((d_len.as_slice()[idx] - fd_len).abs() <= 1e-5 * fd_len.abs().max(floor),
                "{:?} ∂/∂log ℓ {} vs {}", k.family, d_len.as_slice()[idx], fd_len);
            // ∂K/∂log s = 2K exactly.
            prop_assert!((d_mag.as_slice()[idx] - 2.0 * g.as_slice()[idx]).abs() <= 1e-14 * k.variance());
        }
    }
}
