//! Reduced-rank dynamics: f(z) = Σᵢ cᵢ·φᵢ(z) with Dirichlet Laplace
//! eigenfunctions φᵢ on a rectangle and a Gaussian prior on c.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::{observe_with, regressor, Measurement, StateSpaceModel, StateTrajectory};
use crate::error::{Error, Result};
use crate::kernels::{Kernel, KernelFamily};
use crate::numerics::{cholesky_default, dot, Matrix};
use crate::temporal::gamma_half_integer;

/// Tensor-product sine basis on `[lower, upper]` per dimension.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineBasis {
    lower: Vec<f64>,
    upper: Vec<f64>,
    counts: Vec<usize>,
    /// One multi-index (1-based frequencies) per basis function.
    indices: Vec<Vec<usize>>,
}

pub fn make_sine_basis(bounds: &[(f64, f64)], counts: &[usize]) -> Result<SineBasis> {
    if bounds.is_empty() || bounds.len() != counts.len() {
        return Err(Error::InvalidDomain(format!(
            "{} bounds for {} count entries",
            bounds.len(),
            counts.len()
        )));
    }
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidDomain(format!("dimension {i}: [{lo}, {hi}]")));
        }
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::InvalidDomain(format!("dimension {i} has no basis functions")));
    }
    let mut indices = vec![vec![]];
    for &c in counts {
        indices = indices
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (1..=c).map(move |j| {
                    let mut v = prefix.clone();
                    v.push(j);
                    v
                })
            })
            .collect();
    }
    Ok(SineBasis {
        lower: bounds.iter().map(|b| b.0).collect(),
        upper: bounds.iter().map(|b| b.1).collect(),
        counts: counts.to_vec(),
        indices,
    })
}

impl SineBasis {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn bounds(&self) -> Vec<(f64, f64)> {
        self.lower.iter().copied().zip(self.upper.iter().copied()).collect()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        z.len() == self.dim()
            && z.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    /// All basis functions at `z`; points outside the rectangle are rejected.
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "SineBasis::eval",
                expected: self.dim(),
                found: z.len(),
            });
        }
        for (d, v) in z.iter().enumerate() {
            let (lo, hi) = (self.lower[d], self.upper[d]);
            if !(*v >= lo && *v <= hi) {
                return Err(Error::StateOutsideDomain {
                    dim: d,
                    value: *v,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        // Per-dimension factors, then products over multi-indices.
        let factors: Vec<Vec<f64>> = (0..self.dim())
            .map(|d| {
                let width = self.upper[d] - self.lower[d];
                let scale = (2.0 / width).sqrt();
                let x = (z[d] - self.lower[d]) / width;
                (1..=self.counts[d])
                    .map(|j| scale * (j as f64 * PI * x).sin())
                    .collect()
            })
            .collect();
        Ok(self
            .indices
            .iter()
            .map(|idx| idx.iter().enumerate().map(|(d, &j)| factors[d][j - 1]).product())
            .collect())
    }

    /// Square root of the Laplacian eigenvalue of each basis function.
    pub fn frequencies(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|idx| {
                idx.iter()
                    .enumerate()
                    .map(|(d, &j)| (j as f64 * PI / (self.upper[d] - self.lower[d])).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Coefficient prior variances S(√λᵢ) from the kernel's spectral density,
    /// which makes the expansion approximate the kernel's GP.
    pub fn spectral_prior(&self, kernel: &Kernel) -> Vec<f64> {
        self.frequencies()
            .into_iter()
            .map(|w| spectral_density(kernel, w, self.dim()))
            .collect()
    }
}

/// Spectral density of an isotropic kernel in `dim` dimensions at angular
/// frequency magnitude `w`.
pub fn spectral_density(kernel: &Kernel, w: f64, dim: usize) -> f64 {
    let s2 = kernel.variance();
    let l = kernel.lengthscale();
    let d = dim as f64;
    match kernel.family {
        KernelFamily::SquaredExponential => {
            s2 * (2.0 * PI * l * l).powf(d / 2.0) * (-0.5 * w * w * l * l).exp()
        }
        family => {
            let nu = family.smoothness().unwrap_or(0.5);
            let lam2 = 2.0 * nu / (l * l);
            let log_c = s2.ln() + d * 2f64.ln() + (d / 2.0) * PI.ln()
                + gamma_half_integer(nu + d / 2.0).ln()
                - gamma_half_integer(nu).ln()
                + nu * lam2.ln();
            (log_c - (nu + d / 2.0) * (lam2 + w * w).ln()).exp()
        }
    }
}

/// Basis-expansion dynamics with a Gaussian posterior over the coefficients
/// of each state dimension.
#[derive(Clone, Debug)]
pub struct BasisModel {
    pub basis: SineBasis,
    pub coeff_mean: Vec<Vec<f64>>,
    pub coeff_cov: Vec<Matrix>,
    pub process_noise_var: f64,
    pub uses_input: bool,
    pub measurement: Measurement,
    pub meas_noise_var: Option<f64>,
}

impl BasisModel {
    /// Attaches a known linear measurement y = c·x + ε.
    pub fn with_linear_measurement(mut self, c: Vec<f64>, noise_var: f64) -> Result<Self> {
        if c.len() != self.coeff_mean.len() {
            return Err(Error::DimensionMismatch {
                context: "BasisModel::with_linear_measurement",
                expected: self.coeff_mean.len(),
                found: c.len(),
            });
        }
        if !(noise_var > 0.0) {
            return Err(Error::InvalidArgument("measurement noise must be positive".into()));
        }
        self.measurement = Measurement::Linear(c);
        self.meas_noise_var = Some(noise_var);
        Ok(self)
    }

    /// Predictive mean and latent variance of each state dimension at a
    /// basis-domain point z = (x, u).
    pub fn predict(&self, z: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let phi = self.basis.eval(z)?;
        let mut mean = Vec::with_capacity(self.coeff_mean.len());
        let mut var = Vec::with_capacity(self.coeff_mean.len());
        for (mu, cov) in self.coeff_mean.iter().zip(&self.coeff_cov) {
            mean.push(dot(&phi, mu));
            var.push(dot(&phi, &cov.matvec(&phi)?).max(0.0));
        }
        Ok((mean, var))
    }

    pub fn snapshot(&self) -> BasisSnapshot {
        BasisSnapshot {
            basis: self.basis.clone(),
            coeff_mean: self.coeff_mean.clone(),
            coeff_cov: self.coeff_cov.clone(),
            process_noise_var: self.process_noise_var,
            uses_input: self.uses_input,
            linear_measurement: match &self.measurement {
                Measurement::Linear(c) => Some(c.clone()),
                _ => None,
            },
            meas_noise_var: self.meas_noise_var,
        }
    }
}

/// Serializable form of a [`BasisModel`] with a linear or absent
/// measurement channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BasisSnapshot {
    pub basis: SineBasis,
    pub coeff_mean: Vec<Vec<f64>>,
    pub coeff_cov: Vec<Matrix>,
    pub process_noise_var: f64,
    pub uses_input: bool,
    pub linear_measurement: Option<Vec<f64>>,
    pub meas_noise_var: Option<f64>,
}

impl BasisSnapshot {
    pub fn restore(&self) -> BasisModel {
        BasisModel {
            basis: self.basis.clone(),
            coeff_mean: self.coeff_mean.clone(),
            coeff_cov: self.coeff_cov.clone(),
            process_noise_var: self.process_noise_var,
            uses_input: self.uses_input,
            measurement: match &self.linear_measurement {
                Some(c) => Measurement::Linear(c.clone()),
                None => Measurement::None,
            },
            meas_noise_var: self.meas_noise_var,
        }
    }
}

impl StateSpaceModel for BasisModel {
    fn state_dim(&self) -> usize {
        self.coeff_mean.len()
    }

    fn uses_input(&self) -> bool {
        self.uses_input
    }

    fn dynamics(&self, x: &[f64], u: Option<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        self.predict(&regressor(x, u, self.uses_input)?)
    }

    fn process_noise_var(&self) -> Vec<f64> {
        vec![self.process_noise_var; self.state_dim()]
    }

    fn observe(&self, x: &[f64]) -> Option<Result<(f64, f64)>> {
        observe_with(&self.measurement, x)
    }

    fn meas_noise_var(&self) -> Option<f64> {
        self.meas_noise_var
    }
}

/// Conjugate posterior of the coefficients given observed transitions:
/// A = ΦᵀΦ + σ²Λ⁻¹, mean A⁻¹Φᵀt, covariance σ²A⁻¹.
pub fn fit_basis_gpss_observed(
    traj: &StateTrajectory,
    basis: &SineBasis,
    prior_var: &[f64],
    noise_var: f64,
) -> Result<BasisModel> {
    if traj.is_empty() {
        return Err(Error::SequenceTooShort { needed: 1, found: 0 });
    }
    let s = basis.len();
    if prior_var.len() != s {
        return Err(Error::DimensionMismatch {
            context: "fit_basis_gpss_observed prior variances",
            expected: s,
            found: prior_var.len(),
        });
    }
    if prior_var.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::InvalidArgument("prior variances must be positive".into()));
    }
    if !(noise_var > 0.0 && noise_var.is_finite()) {
        return Err(Error::InvalidArgument("noise variance must be positive".into()));
    }
    let z = traj.transition_inputs();
    if z.cols() != basis.dim() {
        return Err(Error::DimensionMismatch {
            context: "fit_basis_gpss_observed basis dimension",
            expected: z.cols(),
            found: basis.dim(),
        });
    }
    let n = traj.len();
    let mut phi = Matrix::zeros(n, s);
    for k in 0..n {
        phi.row_mut(k).copy_from_slice(&basis.eval(z.row(k))?);
    }

    let mut a = Matrix::zeros(s, s);
    for k in 0..n {
        let row = phi.row(k);
        for i in 0..s {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in 0..=i {
                a[(i, j)] += ri * row[j];
            }
        }
    }
    for i in 0..s {
        for j in 0..i {
            a[(j, i)] = a[(i, j)];
        }
        a[(i, i)] += noise_var / prior_var[i];
    }
    let chol = cholesky_default(&a)?;
    let mut cov = chol.inverse().scaled(noise_var);
    cov.symmetrize();

    let phi_t = phi.transpose();
    let mut coeff_mean = Vec::with_capacity(traj.state_dim());
    let mut coeff_cov = Vec::with_capacity(traj.state_dim());
    for j in 0..traj.state_dim() {
        let rhs = phi_t.matvec(&traj.transition_targets(j))?;
        coeff_mean.push(chol.solve_vec(&rhs)?);
        coeff_cov.push(cov.clone());
    }
    Ok(BasisModel {
        basis: basis.clone(),
        coeff_mean,
        coeff_cov,
        process_noise_var: noise_var,
        uses_input: traj.inputs().is_some(),
        measurement: Measurement::None,
        meas_noise_var: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        let l = 3.0;
        let b = make_sine_basis(&[(0.0, l)], &[4]).unwrap();
        let v = b.eval(&[l / 2.0]).unwrap();
        assert!((v[0] - (2.0 / l).sqrt()).abs() < 1e-14);
        let z = 0.7;
        for (i, vi) in b.eval(&[z]).unwrap().iter().enumerate() {
            let expect = (2.0 / l).sqrt() * ((i + 1) as f64 * PI * z / l).sin();
            assert!((vi - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn vanishes_at_corners() {
        let b = make_sine_basis(&[(-1.0, 2.0), (0.5, 1.5)], &[3, 4]).unwrap();
        assert_eq!(b.len(), 12);
        for corner in [[-1.0, 0.5], [-1.0, 1.5], [2.0, 0.5], [2.0, 1.5]] {
            for v in b.eval(&corner).unwrap() {
                assert!(v.abs() < 1e-14);
            }
        }
    }

    #[test]
    fn invalid_domains() {
        assert!(matches!(make_sine_basis(&[(1.0, 1.0)], &[2]), Err(Error::InvalidDomain(_))));
        assert!(matches!(make_sine_basis(&[(0.0, f64::INFINITY)], &[2]), Err(Error::InvalidDomain(_))));
        assert!(matches!(make_sine_basis(&[(0.0, 1.0)], &[0]), Err(Error::InvalidDomain(_))));
        assert!(matches!(make_sine_basis(&[], &[]), Err(Error::InvalidDomain(_))));
        let b = make_sine_basis(&[(0.0, 1.0)], &[2]).unwrap();
        assert!(matches!(b.eval(&[1.5]), Err(Error::StateOutsideDomain { .. })));
    }

    fn traj(x: &[f64]) -> StateTrajectory {
        StateTrajectory::new(Matrix::column(x), None, None).unwrap()
    }

    #[test]
    fn zero_targets_zero_mean() {
        let b = make_sine_basis(&[(-2.0, 2.0)], &[6]).unwrap();
        let t = traj(&[0.3, 0.0, 0.0, 0.0]);
        let m = fit_basis_gpss_observed(&t, &b, &[1.0; 6], 0.1).unwrap();
        assert!(m.coeff_mean[0].iter().all(|c| c.abs() < 1e-15));
    }

    #[test]
    fn scalar_conjugate_update() {
        let b = make_sine_basis(&[(0.0, 2.0)], &[1]).unwrap();
        let (z1, t1, pv, nv) = (0.6, 0.9, 1.7, 0.2);
        let m = fit_basis_gpss_observed(&traj(&[z1, t1]), &b, &[pv], nv).unwrap();
        let phi = b.eval(&[z1]).unwrap()[0];
        let expect = pv * phi * t1 / (pv * phi * phi + nv);
        assert!((m.coeff_mean[0][0] - expect).abs() < 1e-12);
    }

    #[test]
    fn outside_domain_and_empty() {
        let b = make_sine_basis(&[(0.0, 1.0)], &[3]).unwrap();
        assert!(matches!(
            fit_basis_gpss_observed(&traj(&[0.5, 2.0, 0.5]), &b, &[1.0; 3], 0.1),
            Err(Error::StateOutsideDomain { .. })
        ));
        assert!(matches!(
            fit_basis_gpss_observed(&traj(&[0.5]), &b, &[1.0; 3], 0.1),
            Err(Error::SequenceTooShort { .. })
        ));
    }

    #[test]
    fn spectral_density_integrates_to_variance() {
        // k(0) = (1/2π)·∫S(ω)dω in one dimension.
        for family in KernelFamily::ALL {
            let k = Kernel::new(family, 1.3, 0.7).unwrap();
            let (h, m) = (0.01, 400_000);
            let mut total = spectral_density(&k, 0.0, 1) * h;
            for i in 1..m {
                total += 2.0 * spectral_density(&k, i as f64 * h, 1) * h;
            }
            let rel = (total / (2.0 * PI) - k.variance()).abs() / k.variance();
            // Matérn-1/2 tails decay as ω⁻², so its truncation error dominates.
            let tol = if family == KernelFamily::Matern12 { 1e-3 } else { 1e-6 };
            assert!(rel < tol, "{family}: {rel}");
        }
    }

    #[test]
    fn prior_decays_with_frequency() {
        let b = make_sine_basis(&[(-3.0, 3.0)], &[20]).unwrap();
        let k = Kernel::new(KernelFamily::Matern32, 1.0, 1.0).unwrap();
        let p = b.spectral_prior(&k);
        assert!(p.windows(2).all(|w| w[1] < w[0]));
    }
}
