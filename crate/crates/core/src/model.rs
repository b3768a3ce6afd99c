//! Trained source models and their on-disk format.
//!
//! A model file is one versioned JSON document: framing metadata, the basis
//! matrix (row-major), the gains-prior GMM, the floors the model was trained
//! with and the RNG seed. Serialization order is fixed by the struct, so the
//! same model always produces the same bytes.

use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gmm::GmmPrior;
use crate::nmf::BasisMatrix;
use crate::spectral::FrameParams;

pub const MODEL_FILE_VERSION: u32 = 1;

/// Numerical floors a model was trained with.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    pub epsilon_floor: f64,
    pub gain_floor: f64,
    pub covariance_floor: f64,
}

impl Default for Floors {
    fn default() -> Self {
        Self {
            epsilon_floor: crate::nmf::EPSILON_FLOOR,
            gain_floor: crate::gmm::GAIN_FLOOR,
            covariance_floor: crate::gmm::COVARIANCE_FLOOR,
        }
    }
}

/// A trained source: basis plus gains-prior GMM plus training metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceModel {
    pub basis: BasisMatrix,
    pub prior: GmmPrior,
    pub rank: usize,
    pub frame: FrameParams,
    pub floors: Floors,
    pub seed: u64,
}

impl SourceModel {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.basis.values.nrows() != self.frame.freq_bins() {
            return Err(Error::InvalidModel(format!(
                "basis has {} rows, framing implies {}",
                self.basis.values.nrows(),
                self.frame.freq_bins()
            )));
        }
        if self.basis.rank() != self.rank || self.prior.dim() != self.rank {
            return Err(Error::InvalidModel(format!(
                "rank {} vs basis columns {} vs prior dim {}",
                self.rank,
                self.basis.rank(),
                self.prior.dim()
            )));
        }
        if self.basis.values.iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidModel("basis entries must be nonnegative".into()));
        }
        for r in 0..self.rank {
            let norm: f64 = self.basis.values.column(r).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidModel(format!(
                    "basis column {r} has norm {norm}, expected 1"
                )));
            }
        }
        self.prior.validate()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = ModelFile::from(self);
        let json = serde_json::to_string_pretty(&file)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: ModelFile = serde_json::from_str(&text)?;
        file.into_model()
    }
}

#[derive(Serialize, Deserialize)]
struct GmmFile {
    k: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    rank: usize,
    frame_params: FrameParams,
    /// Row-major F x rank.
    basis: Vec<f64>,
    gmm: GmmFile,
    floors: Floors,
    seed: u64,
}

impl From<&SourceModel> for ModelFile {
    fn from(m: &SourceModel) -> Self {
        ModelFile {
            version: MODEL_FILE_VERSION,
            rank: m.rank,
            frame_params: m.frame,
            basis: m.basis.values.iter().cloned().collect(),
            gmm: GmmFile {
                k: m.prior.k(),
                weights: m.prior.weights.clone(),
                means: m.prior.means.rows().into_iter().map(|r| r.to_vec()).collect(),
                variances: m.prior.variances.rows().into_iter().map(|r| r.to_vec()).collect(),
            },
            floors: m.floors,
            seed: m.seed,
        }
    }
}

impl ModelFile {
    fn into_model(self) -> Result<SourceModel> {
        if self.version != MODEL_FILE_VERSION {
            return Err(Error::InvalidModel(format!(
                "unsupported model version {} (expected {MODEL_FILE_VERSION})",
                self.version
            )));
        }
        let bins = self.frame_params.freq_bins();
        if self.basis.len() != bins * self.rank {
            return Err(Error::InvalidModel(format!(
                "basis array has {} entries, expected {} x {}",
                self.basis.len(),
                bins,
                self.rank
            )));
        }
        let basis = Array2::from_shape_vec((bins, self.rank), self.basis)
            .map_err(|e| Error::InvalidModel(e.to_string()))?;
        if self.gmm.weights.len() != self.gmm.k
            || self.gmm.means.len() != self.gmm.k
            || self.gmm.variances.len() != self.gmm.k
        {
            return Err(Error::InvalidModel("gmm arrays disagree with k".into()));
        }
        let flatten = |rows: Vec<Vec<f64>>| -> Result<Array2<f64>> {
            if rows.iter().any(|r| r.len() != self.rank) {
                return Err(Error::InvalidModel("gmm row length != rank".into()));
            }
            Array2::from_shape_vec(
                (self.gmm.k, self.rank),
                rows.into_iter().flatten().collect(),
            )
            .map_err(|e| Error::InvalidModel(e.to_string()))
        };
        let model = SourceModel {
            basis: BasisMatrix { values: basis },
            prior: GmmPrior {
                weights: self.gmm.weights,
                means: flatten(self.gmm.means)?,
                variances: flatten(self.gmm.variances)?,
            },
            rank: self.rank,
            frame: self.frame_params,
            floors: self.floors,
            seed: self.seed,
        };
        model.validate()?;
        Ok(model)
    }
}
