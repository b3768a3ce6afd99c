//! MMSE estimate of a valid log-gain pattern from a distorted observation.
//!
//! Under the observation model q = x + e with x drawn from the GMM prior and
//! e ~ N(0, Psi), the posterior mean is
//!
//!   f(q) = sum_k gamma_k [ mu_k + S_k/(S_k + Psi) (q - mu_k) ]
//!
//! with gamma computed against the Psi-inflated covariances S_k + Psi. All
//! algebra is elementwise because every covariance involved is diagonal.
//! At Psi = 0 the shrinkage factor is the identity and f(q) = q; as Psi
//! grows the estimate moves toward the responsibility-weighted prior means.

use ndarray::{Array1, ArrayView1};

use crate::error::Result;
use crate::gmm::{responsibilities_with_uncertainty, GmmPrior};
use crate::uncertainty::UncertaintyDiag;

/// Posterior mean E[x | q] under the GMM prior and deformation covariance.
pub fn mmse_estimate(
    q: ArrayView1<f64>,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<Array1<f64>> {
    let gamma = responsibilities_with_uncertainty(q, model, psi)?;
    let d = model.dim();
    let mut estimate = Array1::zeros(d);
    for (k, &g) in gamma.iter().enumerate() {
        for i in 0..d {
            let s = model.variances[[k, i]];
            let shrink = s / (s + psi.values()[i]);
            estimate[i] += g * (model.means[[k, i]] + shrink * (q[i] - model.means[[k, i]]));
        }
    }
    Ok(estimate)
}
