//! Online learning of the diagonal deformation covariance Psi.
//!
//! A log-normalized gain column q is treated as a distorted observation
//! q = z + e of a valid pattern z, with e ~ N(0, Psi) and z under the fixed
//! GMM prior. With everything diagonal, the per-component posterior moments
//! are elementwise:
//!
//!   z_k = mu_k + S_k/(S_k+Psi) (q - mu_k)
//!   R_k = S_k - S_k^2/(S_k+Psi) + z_k^2          (diagonal only)
//!
//! aggregated over components with the Psi-inflated responsibilities, and the
//! M-step is Psi = mean_n diag(q q^T - q z^T - z q^T + R). Each iteration can
//! only raise the marginal likelihood sum_n log sum_k pi_k N(q | mu_k,
//! S_k + Psi); the M-step value is a responsibility-weighted average of
//! (q - z_k)^2 + posterior variance, so it stays nonnegative up to round-off.

use ndarray::{Array1, ArrayView1};

use crate::error::{Error, Result};
use crate::gmm::{responsibilities_with_uncertainty, GmmPrior, LogNormalizedColumns};

/// Diagonal covariance of the log-domain deformation, entries >= 0.
#[derive(Debug, Clone, PartialEq)]
pub struct UncertaintyDiag {
    psi: Array1<f64>,
}

impl UncertaintyDiag {
    pub fn new(psi: Array1<f64>) -> Result<Self> {
        if psi.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidArgument(
                "uncertainty diagonal must be finite and nonnegative".into(),
            ));
        }
        Ok(Self { psi })
    }

    pub fn zeros(d: usize) -> Self {
        Self { psi: Array1::zeros(d) }
    }

    pub fn values(&self) -> ArrayView1<'_, f64> {
        self.psi.view()
    }

    pub fn dim(&self) -> usize {
        self.psi.len()
    }

    pub fn is_zero(&self) -> bool {
        self.psi.iter().all(|&p| p == 0.0)
    }

    pub fn mean(&self) -> f64 {
        if self.psi.is_empty() {
            0.0
        } else {
            self.psi.sum() / self.psi.len() as f64
        }
    }
}

/// Aggregated posterior sufficient statistics for one observation column.
#[derive(Debug, Clone)]
pub struct PosteriorStats {
    /// Posterior mean of the valid pattern, sum_k gamma_k z_k.
    pub z_hat: Array1<f64>,
    /// Diagonal of the posterior second moment, sum_k gamma_k R_k.
    pub r_hat: Array1<f64>,
    /// Component responsibilities under Sigma_k + Psi.
    pub gamma: Vec<f64>,
}

/// Posterior moments of the valid pattern given one observation.
pub fn posterior_stats(
    q: ArrayView1<f64>,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<PosteriorStats> {
    let d = model.dim();
    if q.len() != d || psi.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "q has dim {}, model dim {}, psi dim {}",
            q.len(),
            d,
            psi.dim()
        )));
    }
    let gamma = responsibilities_with_uncertainty(q, model, psi)?;
    let mut z_hat = Array1::zeros(d);
    let mut r_hat = Array1::zeros(d);
    for (k, &g) in gamma.iter().enumerate() {
        for i in 0..d {
            let s = model.variances[[k, i]];
            let shrink = s / (s + psi.values()[i]);
            let z = model.means[[k, i]] + shrink * (q[i] - model.means[[k, i]]);
            let var = s - s * shrink;
            z_hat[i] += g * z;
            r_hat[i] += g * (var + z * z);
        }
    }
    Ok(PosteriorStats { z_hat, r_hat, gamma })
}

/// Default Psi initialization: coordinatewise sample variance of the
/// observations minus the mean prior variance, clamped to >= 1e-6.
pub fn default_psi_init(q: &LogNormalizedColumns, model: &GmmPrior) -> UncertaintyDiag {
    let d = q.dim();
    let n = q.num_columns().max(1);
    let mut psi = Array1::zeros(d);
    for i in 0..d {
        let row = q.values.row(i);
        let mean = row.sum() / n as f64;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        let prior_var = model.variances.column(i).sum() / model.k() as f64;
        psi[i] = (var - prior_var).max(1e-6);
    }
    UncertaintyDiag { psi }
}

/// Learns Psi by EM with the GMM prior held fixed.
///
/// Stops after `max_iters` iterations or when the largest relative change of
/// any Psi entry falls below 1e-6. M-step entries that round off negative are
/// clamped to 1e-10.
pub fn learn_psi_em(
    q: &LogNormalizedColumns,
    model: &GmmPrior,
    max_iters: usize,
    psi_init: Option<UncertaintyDiag>,
) -> Result<UncertaintyDiag> {
    let d = model.dim();
    let n = q.num_columns();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    if q.dim() != d {
        return Err(Error::ShapeMismatch(format!(
            "observations have dim {}, model dim {}",
            q.dim(),
            d
        )));
    }
    let mut psi = match psi_init {
        Some(p) => {
            if p.dim() != d {
                return Err(Error::ShapeMismatch(format!(
                    "psi_init has dim {}, model dim {}",
                    p.dim(),
                    d
                )));
            }
            p
        }
        None => default_psi_init(q, model),
    };

    for _ in 0..max_iters {
        let mut acc = Array1::<f64>::zeros(d);
        for col in q.values.axis_iter(ndarray::Axis(1)) {
            let stats = posterior_stats(col, model, &psi)?;
            for i in 0..d {
                acc[i] += col[i] * col[i] - 2.0 * col[i] * stats.z_hat[i] + stats.r_hat[i];
            }
        }
        let next = UncertaintyDiag {
            psi: acc.mapv(|v| (v / n as f64).max(1e-10)),
        };
        let max_rel = psi
            .psi
            .iter()
            .zip(next.psi.iter())
            .map(|(old, new)| (new - old).abs() / old.abs().max(1e-12))
            .fold(0.0, f64::max);
        psi = next;
        if max_rel < 1e-6 {
            break;
        }
    }
    Ok(psi)
}

/// Marginal log-likelihood of the observations under Sigma_k + Psi, the
/// quantity the EM iterations may never decrease.
pub fn marginal_log_likelihood(
    q: &LogNormalizedColumns,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<f64> {
    crate::gmm::data_log_likelihood(q, model, psi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn single_component(mu: Vec<f64>, var: Vec<f64>) -> GmmPrior {
        let d = mu.len();
        GmmPrior {
            weights: vec![1.0],
            means: Array2::from_shape_vec((1, d), mu).unwrap(),
            variances: Array2::from_shape_vec((1, d), var).unwrap(),
        }
    }

    #[test]
    fn zero_psi_collapses_posterior_on_observation() {
        let model = single_component(vec![-1.0, -2.0], vec![0.5, 1.5]);
        let q = array![-0.2, -3.0];
        let stats = posterior_stats(q.view(), &model, &UncertaintyDiag::zeros(2)).unwrap();
        for i in 0..2 {
            assert!((stats.z_hat[i] - q[i]).abs() < 1e-12);
            assert!((stats.r_hat[i] - q[i] * q[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn scalar_posterior_matches_hand_values() {
        // K=1, d=1, mu=0, Sigma=1, Psi=1, q=2: z = 1, R = 0.5 + 1 = 1.5
        let model = single_component(vec![0.0], vec![1.0]);
        let psi = UncertaintyDiag::new(array![1.0]).unwrap();
        let q = array![2.0];
        let stats = posterior_stats(q.view(), &model, &psi).unwrap();
        assert!((stats.z_hat[0] - 1.0).abs() < 1e-15);
        assert!((stats.r_hat[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn huge_psi_pulls_posterior_to_prior_mean() {
        let model = single_component(vec![-1.5, -0.5], vec![1.0, 2.0]);
        let psi = UncertaintyDiag::new(array![1e12, 1e12]).unwrap();
        let q = array![-4.0, -6.0];
        let stats = posterior_stats(q.view(), &model, &psi).unwrap();
        assert!((stats.z_hat[0] - (-1.5)).abs() < 1e-9);
        assert!((stats.z_hat[1] - (-0.5)).abs() < 1e-9);
    }

    #[test]
    fn posterior_mean_lies_between_observation_and_prior_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..50 {
            let mu = -rng.gen_range(0.0..3.0);
            let s = rng.gen_range(0.1..2.0);
            let p = rng.gen_range(0.0..3.0);
            let q = -rng.gen_range(0.0..5.0);
            let model = single_component(vec![mu], vec![s]);
            let psi = UncertaintyDiag::new(array![p]).unwrap();
            let stats = posterior_stats(array![q].view(), &model, &psi).unwrap();
            let lo = mu.min(q) - 1e-12;
            let hi = mu.max(q) + 1e-12;
            assert!(stats.z_hat[0] >= lo && stats.z_hat[0] <= hi);
        }
    }

    #[test]
    fn single_m_step_matches_hand_computation() {
        // K=1, d=2, mu=0, Sigma=I, Psi_prev=I, one column q=(2,0):
        // z = q/2 = (1,0); R = (0.5+1, 0.5+0); Psi = (4-4+1.5, 0.5)
        let model = single_component(vec![0.0, 0.0], vec![1.0, 1.0]);
        let q = LogNormalizedColumns {
            values: Array2::from_shape_vec((2, 1), vec![2.0, 0.0]).unwrap(),
        };
        let init = UncertaintyDiag::new(array![1.0, 1.0]).unwrap();
        let psi = learn_psi_em(&q, &model, 1, Some(init)).unwrap();
        assert_eq!(psi.values()[0], 1.5);
        assert_eq!(psi.values()[1], 0.5);
    }

    #[test]
    fn empty_observations_are_an_error() {
        let model = single_component(vec![0.0], vec![1.0]);
        let q = LogNormalizedColumns { values: Array2::zeros((1, 0)) };
        assert!(matches!(learn_psi_em(&q, &model, 5, None), Err(Error::EmptyInput)));
    }

    #[test]
    fn marginal_likelihood_is_nondecreasing_across_iterations() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let d = 3;
        let n = 200;
        let model = GmmPrior {
            weights: vec![0.5, 0.5],
            means: Array2::from_shape_fn((2, d), |_| -rng.gen_range(0.2..2.0)),
            variances: Array2::from_shape_fn((2, d), |_| rng.gen_range(0.2..1.0)),
        };
        let noise = Normal::new(0.0, 0.8).unwrap();
        let mut vals = Array2::zeros((d, n));
        for j in 0..n {
            let k = if rng.gen::<f64>() < 0.5 { 0 } else { 1 };
            for i in 0..d {
                let z = model.means[[k, i]]
                    + model.variances[[k, i]].sqrt() * noise.sample(&mut rng) / 0.8;
                vals[[i, j]] = z + noise.sample(&mut rng);
            }
        }
        let q = LogNormalizedColumns { values: vals };
        let mut psi = default_psi_init(&q, &model);
        let mut prev = marginal_log_likelihood(&q, &model, &psi).unwrap();
        for _ in 0..25 {
            psi = learn_psi_em(&q, &model, 1, Some(psi)).unwrap();
            let ll = marginal_log_likelihood(&q, &model, &psi).unwrap();
            assert!(ll >= prev - 1e-8, "likelihood fell: {prev} -> {ll}");
            prev = ll;
        }
        assert!(psi.values().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn undistorted_prior_samples_give_small_psi() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = 4;
        let n = 5000;
        let model = GmmPrior {
            weights: vec![0.4, 0.6],
            means: Array2::from_shape_fn((2, d), |_| -rng.gen_range(0.2..2.5)),
            variances: Array2::from_shape_fn((2, d), |_| rng.gen_range(0.3..1.2)),
        };
        let std_norm = Normal::new(0.0, 1.0).unwrap();
        let mut vals = Array2::zeros((d, n));
        for j in 0..n {
            let k = if rng.gen::<f64>() < model.weights[0] { 0 } else { 1 };
            for i in 0..d {
                vals[[i, j]] = model.means[[k, i]]
                    + model.variances[[k, i]].sqrt() * std_norm.sample(&mut rng);
            }
        }
        let q = LogNormalizedColumns { values: vals };
        let psi = learn_psi_em(&q, &model, 100, None).unwrap();
        let mean_prior_var = model.variances.sum() / (2 * d) as f64;
        for i in 0..d {
            assert!(
                psi.values()[i] <= 0.10 * mean_prior_var,
                "coordinate {i}: psi {} vs 10% of mean prior var {}",
                psi.values()[i],
                0.10 * mean_prior_var
            );
        }
    }

    #[test]
    fn known_noise_variance_is_recovered_within_20_percent() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let d = 5;
        let n = 5000;
        let model = GmmPrior {
            weights: vec![0.3, 0.7],
            means: Array2::from_shape_fn((2, d), |_| -rng.gen_range(0.2..2.0)),
            variances: Array2::from_shape_fn((2, d), |_| rng.gen_range(0.2..0.8)),
        };
        let sigma2: Vec<f64> = (0..d).map(|_| rng.gen_range(0.4..1.6)).collect();
        let std_norm = Normal::new(0.0, 1.0).unwrap();
        let mut vals = Array2::zeros((d, n));
        for j in 0..n {
            let k = if rng.gen::<f64>() < model.weights[0] { 0 } else { 1 };
            for i in 0..d {
                let z = model.means[[k, i]]
                    + model.variances[[k, i]].sqrt() * std_norm.sample(&mut rng);
                vals[[i, j]] = z + sigma2[i].sqrt() * std_norm.sample(&mut rng);
            }
        }
        let q = LogNormalizedColumns { values: vals };
        let psi = learn_psi_em(&q, &model, 200, None).unwrap();
        for i in 0..d {
            let rel = (psi.values()[i] - sigma2[i]).abs() / sigma2[i];
            assert!(rel < 0.20, "coordinate {i}: learned {} true {} rel {rel}", psi.values()[i], sigma2[i]);
        }
    }
}
