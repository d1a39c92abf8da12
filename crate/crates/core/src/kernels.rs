//! Stationary isotropic covariance functions.
//!
//! All families share the magnitude `s` (so `k(z, z) = s²`) and a single
//! lengthscale `ℓ` applied to the Euclidean distance between inputs.
//! Gradients are taken with respect to the logarithms of the
//! hyperparameters so that optimization is unconstrained.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

const SQRT3: f64 = 1.732_050_807_568_877_2;
const SQRT5: f64 = 2.236_067_977_499_79;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelFamily {
    #[serde(alias = "se")]
    SquaredExponential,
    Matern12,
    Matern32,
    Matern52,
}

impl KernelFamily {
    pub const ALL: [KernelFamily; 4] = [
        KernelFamily::SquaredExponential,
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    pub const MATERN: [KernelFamily; 3] = [
        KernelFamily::Matern12,
        KernelFamily::Matern32,
        KernelFamily::Matern52,
    ];

    /// Smoothness ν for the Matérn families, `None` for the squared exponential.
    pub fn smoothness(self) -> Option<f64> {
        match self {
            KernelFamily::SquaredExponential => None,
            KernelFamily::Matern12 => Some(0.5),
            KernelFamily::Matern32 => Some(1.5),
            KernelFamily::Matern52 => Some(2.5),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::SquaredExponential => "se",
            KernelFamily::Matern12 => "matern12",
            KernelFamily::Matern32 => "matern32",
            KernelFamily::Matern52 => "matern52",
        }
    }
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['_', '-'], "").as_str() {
            "se" | "squaredexponential" | "rbf" => Ok(KernelFamily::SquaredExponential),
            "matern12" => Ok(KernelFamily::Matern12),
            "matern32" => Ok(KernelFamily::Matern32),
            "matern52" => Ok(KernelFamily::Matern52),
            _ => Err(Error::InvalidArgument(format!("unknown kernel family `{s}`"))),
        }
    }
}

/// Log-hyperparameters in the fixed order (log s, log ℓ, log σ_n).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperVector(pub [f64; 3]);

impl HyperVector {
    pub const LEN: usize = 3;

    pub fn from_natural(magnitude: f64, lengthscale: f64, noise_std: f64) -> Self {
        HyperVector([magnitude.ln(), lengthscale.ln(), noise_std.ln()])
    }

    pub fn magnitude(&self) -> f64 {
        self.0[0].exp()
    }

    pub fn lengthscale(&self) -> f64 {
        self.0[1].exp()
    }

    pub fn noise_std(&self) -> f64 {
        self.0[2].exp()
    }

    pub fn noise_variance(&self) -> f64 {
        (2.0 * self.0[2]).exp()
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn kernel(&self, family: KernelFamily) -> Result<Kernel> {
        Kernel::new(family, self.magnitude(), self.lengthscale())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Kernel {
    pub family: KernelFamily,
    magnitude: f64,
    lengthscale: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, magnitude: f64, lengthscale: f64) -> Result<Self> {
        if !(magnitude > 0.0 && magnitude.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel magnitude must be positive and finite, got {magnitude}"
            )));
        }
        if !(lengthscale > 0.0 && lengthscale.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "kernel lengthscale must be positive and finite, got {lengthscale}"
            )));
        }
        Ok(Kernel {
            family,
            magnitude,
            lengthscale,
        })
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    /// s², the prior variance at any input.
    pub fn variance(&self) -> f64 {
        self.magnitude * self.magnitude
    }

    pub fn with_noise(&self, noise_std: f64) -> HyperVector {
        HyperVector::from_natural(self.magnitude, self.lengthscale, noise_std)
    }

    /// Covariance as a function of the distance r = ‖z − z′‖.
    pub fn eval_distance(&self, r: f64) -> f64 {
        let s2 = self.variance();
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => s2 * (-0.5 * (r / l) * (r / l)).exp(),
            KernelFamily::Matern12 => s2 * (-r / l).exp(),
            KernelFamily::Matern32 => {
                let a = SQRT3 * r / l;
                s2 * (1.0 + a) * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = SQRT5 * r / l;
                s2 * (1.0 + a + a * a / 3.0) * (-a).exp()
            }
        }
    }

    /// ∂k/∂log ℓ as a function of distance.
    fn dlog_lengthscale_distance(&self, r: f64) -> f64 {
        let s2 = self.variance();
        let l = self.lengthscale;
        match self.family {
            KernelFamily::SquaredExponential => {
                let q = (r / l) * (r / l);
                s2 * (-0.5 * q).exp() * q
            }
            KernelFamily::Matern12 => {
                let a = r / l;
                s2 * (-a).exp() * a
            }
            KernelFamily::Matern32 => {
                let a = SQRT3 * r / l;
                s2 * a * a * (-a).exp()
            }
            KernelFamily::Matern52 => {
                let a = SQRT5 * r / l;
                s2 * a * a * (1.0 + a) / 3.0 * (-a).exp()
            }
        }
    }

    pub fn eval(&self, z: &[f64], z_prime: &[f64]) -> Result<f64> {
        if z.len() != z_prime.len() {
            return Err(Error::DimensionMismatch {
                context: "Kernel::eval",
                expected: z.len(),
                found: z_prime.len(),
            });
        }
        Ok(self.eval_distance(distance(z, z_prime)))
    }

    /// Cross-covariance matrix between the rows of `za` and `zb`.
    pub fn gram(&self, za: &Matrix, zb: &Matrix) -> Result<Matrix> {
        check_dims(za, zb, "Kernel::gram")?;
        Ok(Matrix::from_fn(za.rows(), zb.rows(), |i, j| {
            self.eval_distance(distance(za.row(i), zb.row(j)))
        }))
    }

    /// Gram matrix of a point set with itself, filled from the lower triangle.
    pub fn gram_symmetric(&self, z: &Matrix) -> Matrix {
        let n = z.rows();
        let mut k = Matrix::zeros(n, n);
        for i in 0..n {
            for j in 0..i {
                let v = self.eval_distance(distance(z.row(i), z.row(j)));
                k[(i, j)] = v;
                k[(j, i)] = v;
            }
            k[(i, i)] = self.variance();
        }
        k
    }

    /// Analytic (∂K/∂log s, ∂K/∂log ℓ).
    pub fn grad_log_hyper(&self, za: &Matrix, zb: &Matrix) -> Result<[Matrix; 2]> {
        check_dims(za, zb, "Kernel::grad_log_hyper")?;
        let mut d_mag = Matrix::zeros(za.rows(), zb.rows());
        let mut d_len = Matrix::zeros(za.rows(), zb.rows());
        for i in 0..za.rows() {
            for j in 0..zb.rows() {
                let r = distance(za.row(i), zb.row(j));
                d_mag[(i, j)] = 2.0 * self.eval_distance(r);
                d_len[(i, j)] = self.dlog_lengthscale_distance(r);
            }
        }
        Ok([d_mag, d_len])
    }
}

fn check_dims(za: &Matrix, zb: &Matrix, context: &'static str) -> Result<()> {
    if za.cols() != zb.cols() {
        return Err(Error::DimensionMismatch {
            context,
            expected: za.cols(),
            found: zb.cols(),
        });
    }
    Ok(())
}

/// Euclidean distance.
pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_distance_gives_variance() {
        for family in KernelFamily::ALL {
            let k = Kernel::new(family, 1.7, 0.3).unwrap();
            let z = [0.4, -2.0];
            assert_eq!(k.eval(&z, &z).unwrap(), 1.7 * 1.7);
        }
    }

    #[test]
    fn closed_form_values() {
        let se = Kernel::new(KernelFamily::SquaredExponential, 1.0, 1.0).unwrap();
        let v = se.eval(&[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 0.367879).abs() < 1e-6);

        let m12 = Kernel::new(KernelFamily::Matern12, 2.0, 1.0).unwrap();
        let v = m12.eval(&[0.0], &[1.0]).unwrap();
        assert!((v - 4.0 * (-1.0f64).exp()).abs() < 1e-15);
        assert!((v - 1.471518).abs() < 1e-6);
    }

    #[test]
    fn gram_small_cases() {
        let k = Kernel::new(KernelFamily::SquaredExponential, 1.5, 0.7).unwrap();
        let one = Matrix::from_rows(&[[0.2]]).unwrap();
        assert_eq!(k.gram(&one, &one).unwrap()[(0, 0)], 2.25);
        let two = Matrix::from_rows(&[[0.2], [0.2]]).unwrap();
        let g = k.gram(&two, &two).unwrap();
        assert_eq!(g.as_slice(), &[2.25; 4]);
    }

    #[test]
    fn dimension_mismatch() {
        let k = Kernel::new(KernelFamily::Matern32, 1.0, 1.0).unwrap();
        assert!(k.eval(&[1.0], &[1.0, 2.0]).is_err());
        assert!(k.gram(&Matrix::zeros(2, 1), &Matrix::zeros(2, 2)).is_err());
        assert!(k
            .grad_log_hyper(&Matrix::zeros(2, 1), &Matrix::zeros(2, 2))
            .is_err());
    }

    #[test]
    fn magnitude_gradient_is_twice_gram() {
        let z = Matrix::from_rows(&[[0.0], [0.3], [1.1]]).unwrap();
        for family in KernelFamily::ALL {
            let k = Kernel::new(family, 0.8, 0.5).unwrap();
            let [dm, _] = k.grad_log_hyper(&z, &z).unwrap();
            assert_eq!(dm, k.gram(&z, &z).unwrap().scaled(2.0));
        }
    }

    #[test]
    fn lengthscale_gradient_vanishes_at_zero_distance() {
        let z = Matrix::from_rows(&[[0.3, 0.1]]).unwrap();
        for family in KernelFamily::ALL {
            let k = Kernel::new(family, 1.0, 2.0).unwrap();
            let [_, dl] = k.grad_log_hyper(&z, &z).unwrap();
            assert_eq!(dl[(0, 0)], 0.0);
        }
    }

    #[test]
    fn invalid_hyperparameters() {
        assert!(Kernel::new(KernelFamily::Matern12, 0.0, 1.0).is_err());
        assert!(Kernel::new(KernelFamily::Matern12, 1.0, -1.0).is_err());
        assert!(Kernel::new(KernelFamily::Matern12, f64::NAN, 1.0).is_err());
    }

    #[test]
    fn family_names_round_trip() {
        for family in KernelFamily::ALL {
            assert_eq!(family.name().parse::<KernelFamily>().unwrap(), family);
        }
        assert!("periodic".parse::<KernelFamily>().is_err());
    }
}
