//! Single-channel audio source separation with IS-NMF whose gains solution
//! is guided by MMSE estimates under GMM priors, with the deformation
//! covariance learned online from the observed mixture.
//!
//! Pipeline: train a basis and a gains-prior GMM per source from clean
//! audio; at separation time decompose the mixture spectrogram against the
//! concatenated bases, learn how far each source's gains are from its prior
//! (the diagonal covariance Psi), then rerun the gains updates with the
//! MMSE penalty and reconstruct through Wiener-style spectral masks.

pub mod audio;
pub mod config;
pub mod error;
pub mod gmm;
pub mod metrics;
pub mod mmse;
pub mod model;
pub mod nmf;
pub mod regnmf;
pub mod separation;
pub mod spectral;
pub mod uncertainty;

pub use audio::AudioSignal;
pub use config::{PriorMode, ToolConfig};
pub use error::{Error, Result};
pub use gmm::{GmmPrior, LogNormalizedColumns};
pub use model::SourceModel;
pub use nmf::{BasisMatrix, GainsMatrix, NmfConfig};
pub use regnmf::{BlockPrior, GradientSplit, PriorSpec};
pub use separation::SeparationResult;
pub use spectral::{ComplexSpectrogram, FrameParams, PowerSpectrogram};
pub use uncertainty::UncertaintyDiag;
