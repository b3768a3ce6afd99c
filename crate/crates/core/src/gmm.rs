//! Diagonal-covariance GMM priors over log-normalized gain columns.
//!
//! Gain columns are normalized to unit Euclidean norm and logged, so every
//! training value is <= 0 and the trained component means stay nonpositive
//! (enforced against round-off after each M-step; the gradient splits
//! downstream require it). Densities and responsibilities are evaluated in
//! the log domain, optionally with the deformation covariance Psi added to
//! each component's variance.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::uncertainty::UncertaintyDiag;

/// Floor for component variances.
pub const COVARIANCE_FLOOR: f64 = 1e-6;
/// Floor for mixture weights (renormalized after flooring).
pub const WEIGHT_FLOOR: f64 = 1e-8;
/// Floor applied to gain entries before normalization and log.
pub const GAIN_FLOOR: f64 = 1e-8;

/// K-component diagonal GMM with nonpositive means.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmPrior {
    /// Mixture weights, sum to 1.
    pub weights: Vec<f64>,
    /// Component means, K x d, every entry <= 0.
    pub means: Array2<f64>,
    /// Component variances (diagonal), K x d, every entry >= COVARIANCE_FLOOR.
    pub variances: Array2<f64>,
}

impl GmmPrior {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::InvalidModel("gmm has no components".into()));
        }
        if self.means.nrows() != k || self.variances.nrows() != k
            || self.means.ncols() != self.variances.ncols()
        {
            return Err(Error::InvalidModel("gmm parameter shapes disagree".into()));
        }
        let wsum: f64 = self.weights.iter().sum();
        if (wsum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return Err(Error::InvalidModel(format!("gmm weights sum to {wsum}")));
        }
        if self.means.iter().any(|m| !m.is_finite() || *m > 0.0) {
            return Err(Error::PositivePriorMean);
        }
        if self.variances.iter().any(|v| !v.is_finite() || *v <= 0.0) {
            return Err(Error::InvalidModel("gmm variances must be positive".into()));
        }
        Ok(())
    }
}

/// Log-normalized gain columns, d x N, every entry <= 0. Each column is
/// log(g / ||g||_2) for a floored nonnegative gain column g.
#[derive(Debug, Clone, PartialEq)]
pub struct LogNormalizedColumns {
    pub values: Array2<f64>,
}

impl LogNormalizedColumns {
    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    pub fn num_columns(&self) -> usize {
        self.values.ncols()
    }
}

/// Floors each column's entries at `floor`, normalizes to unit l2 norm and
/// takes the logarithm. Flooring removes zeros, so the result is finite.
pub fn log_normalize_columns(gains: ArrayView2<f64>, floor: f64) -> LogNormalizedColumns {
    let mut values = Array2::zeros(gains.raw_dim());
    for (j, col) in gains.axis_iter(ndarray::Axis(1)).enumerate() {
        let floored: Vec<f64> = col.iter().map(|&x| x.max(floor)).collect();
        let norm = floored.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (i, &x) in floored.iter().enumerate() {
            // round-off can push log(x/norm) a few ulp above zero
            values[[i, j]] = (x / norm).ln().min(0.0);
        }
    }
    LogNormalizedColumns { values }
}

/// Log density of a diagonal Gaussian.
fn log_gauss_diag(x: ArrayView1<f64>, mean: ArrayView1<f64>, var: ArrayView1<f64>) -> f64 {
    let mut acc = 0.0;
    for ((xi, mi), vi) in x.iter().zip(mean.iter()).zip(var.iter()) {
        let d = xi - mi;
        acc += (2.0 * std::f64::consts::PI * vi).ln() + d * d / vi;
    }
    -0.5 * acc
}

/// Per-component log joint densities log(pi_k) + log N(x | mu_k, Sigma_k + Psi).
pub(crate) fn component_log_joint(
    x: ArrayView1<f64>,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<Vec<f64>> {
    if x.len() != model.dim() || psi.dim() != model.dim() {
        return Err(Error::ShapeMismatch(format!(
            "x has dim {}, model dim {}, psi dim {}",
            x.len(),
            model.dim(),
            psi.dim()
        )));
    }
    Ok((0..model.k())
        .map(|k| {
            let var = &model.variances.row(k) + &psi.values();
            model.weights[k].max(f64::MIN_POSITIVE).ln()
                + log_gauss_diag(x, model.means.row(k), var.view())
        })
        .collect())
}

fn log_sum_exp(terms: &[f64]) -> f64 {
    let m = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + terms.iter().map(|t| (t - m).exp()).sum::<f64>().ln()
}

/// log sum_k pi_k N(x | mu_k, Sigma_k + Psi), computed via log-sum-exp.
pub fn gmm_log_density(x: ArrayView1<f64>, model: &GmmPrior, psi: &UncertaintyDiag) -> Result<f64> {
    Ok(log_sum_exp(&component_log_joint(x, model, psi)?))
}

/// Posterior component responsibilities under the Psi-inflated covariances.
/// Nonnegative, sum to 1.
pub fn responsibilities_with_uncertainty(
    x: ArrayView1<f64>,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<Vec<f64>> {
    let logs = component_log_joint(x, model, psi)?;
    let lse = log_sum_exp(&logs);
    Ok(logs.iter().map(|l| (l - lse).exp()).collect())
}

/// Total log-likelihood of all columns under the Psi-inflated model.
pub fn data_log_likelihood(
    data: &LogNormalizedColumns,
    model: &GmmPrior,
    psi: &UncertaintyDiag,
) -> Result<f64> {
    let mut total = 0.0;
    for col in data.values.axis_iter(ndarray::Axis(1)) {
        total += gmm_log_density(col, model, psi)?;
    }
    Ok(total)
}

/// k-means++-style seeded selection of `k` distinct data columns.
fn seed_means(data: &ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = data.ncols();
    let mut chosen = Vec::with_capacity(k);
    let first = rng.gen_range(0..n);
    chosen.push(first);
    let dist2 = |a: usize, b: usize| -> f64 {
        data.column(a)
            .iter()
            .zip(data.column(b).iter())
            .map(|(x, y)| (x - y) * (x - y))
            .sum()
    };
    let mut d2: Vec<f64> = (0..n).map(|j| dist2(j, first)).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut picked = n - 1;
            for (j, &w) in d2.iter().enumerate() {
                if r < w {
                    picked = j;
                    break;
                }
                r -= w;
            }
            picked
        } else {
            // identical remaining columns: take any not yet chosen
            (0..n).find(|j| !chosen.contains(j)).unwrap_or(0)
        };
        chosen.push(idx);
        for j in 0..n {
            d2[j] = d2[j].min(dist2(j, idx));
        }
    }
    chosen
}

/// Fits a diagonal GMM to the columns of `data` with standard EM.
///
/// Means are initialized by seeded k-means++-style selection of data
/// columns; variances start at the global per-coordinate variance. After
/// each M-step the means are clamped to <= 0 and the variances floored.
pub fn fit_gmm_em(
    data: &LogNormalizedColumns,
    k: usize,
    max_iters: usize,
    rng_seed: u64,
) -> Result<GmmPrior> {
    let d = data.dim();
    let n = data.num_columns();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    if n < k {
        return Err(Error::TooFewSamples { needed: k, got: n });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let view = data.values.view();
    let seeds = seed_means(&view, k, &mut rng);
    let mut means = Array2::zeros((k, d));
    for (ki, &j) in seeds.iter().enumerate() {
        means.row_mut(ki).assign(&data.values.column(j));
    }

    let mut global_var = vec![0.0f64; d];
    for i in 0..d {
        let row = data.values.row(i);
        let mean = row.sum() / n as f64;
        global_var[i] =
            (row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64).max(COVARIANCE_FLOOR);
    }
    let mut variances = Array2::from_shape_fn((k, d), |(_, i)| global_var[i]);
    let mut weights = vec![1.0 / k as f64; k];

    let zero_psi = UncertaintyDiag::zeros(d);
    let mut resp = Array2::zeros((k, n));
    for _ in 0..max_iters {
        // E-step
        let model = GmmPrior {
            weights: weights.clone(),
            means: means.clone(),
            variances: variances.clone(),
        };
        for (j, col) in data.values.axis_iter(ndarray::Axis(1)).enumerate() {
            let g = responsibilities_with_uncertainty(col, &model, &zero_psi)?;
            for (ki, &gk) in g.iter().enumerate() {
                resp[[ki, j]] = gk;
            }
        }

        // M-step
        for ki in 0..k {
            let nk: f64 = resp.row(ki).sum();
            let nk_safe = nk.max(1e-12);
            weights[ki] = nk / n as f64;
            for i in 0..d {
                let mut m = 0.0;
                for j in 0..n {
                    m += resp[[ki, j]] * data.values[[i, j]];
                }
                // nonpositive in exact arithmetic on <= 0 data
                means[[ki, i]] = (m / nk_safe).min(0.0);
            }
            for i in 0..d {
                let mut v = 0.0;
                for j in 0..n {
                    let dlt = data.values[[i, j]] - means[[ki, i]];
                    v += resp[[ki, j]] * dlt * dlt;
                }
                variances[[ki, i]] = (v / nk_safe).max(COVARIANCE_FLOOR);
            }
        }
        let wsum: f64 = weights.iter().map(|w| w.max(WEIGHT_FLOOR)).sum();
        for w in weights.iter_mut() {
            *w = w.max(WEIGHT_FLOOR) / wsum;
        }
    }

    let model = GmmPrior { weights, means, variances };
    model.validate()?;
    Ok(model)
}
