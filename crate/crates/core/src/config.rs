//! Pipeline configuration: every tunable in one place, with the documented
//! defaults (480/192/512 framing at 16 kHz, rank 128, K = 16, alpha = 1,
//! lambda = 1e-4) and a flat key=value file format.

use std::path::Path;

use crate::error::{Error, Result};
use crate::spectral::FrameParams;

/// Which prior regularizes the separation-stage gains solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorMode {
    None,
    Sparse,
    Mmse,
}

impl std::str::FromStr for PriorMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(PriorMode::None),
            "sparse" => Ok(PriorMode::Sparse),
            "mmse" => Ok(PriorMode::Mmse),
            other => Err(Error::InvalidArgument(format!(
                "unknown prior mode '{other}' (expected none|sparse|mmse)"
            ))),
        }
    }
}

impl std::fmt::Display for PriorMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PriorMode::None => "none",
            PriorMode::Sparse => "sparse",
            PriorMode::Mmse => "mmse",
        })
    }
}

/// All tunables of the toolkit.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolConfig {
    pub frame: FrameParams,
    /// Basis vectors per source.
    pub rank: usize,
    /// Training-stage alternating update count.
    pub train_iters: usize,
    /// Gains-only iterations before uncertainty learning.
    pub noprior_iters: usize,
    /// Regularized gains iterations after uncertainty learning.
    pub regularized_iters: usize,
    /// GMM component count.
    pub gmm_k: usize,
    /// GMM EM iterations.
    pub gmm_iters: usize,
    /// Psi EM iterations.
    pub psi_iters: usize,
    /// MMSE penalty weights per source.
    pub alpha_a: f64,
    pub alpha_b: f64,
    /// Sparsity weight for the sparse baseline.
    pub lambda: f64,
    /// Floor for spectrogram/model entries.
    pub epsilon_floor: f64,
    /// Floor for gain entries before normalization/log.
    pub gain_floor: f64,
    pub rng_seed: u64,
    pub prior_mode: PriorMode,
    /// Re-learn Psi every this many regularized iterations (0 = learn once).
    pub relearn_psi_every: usize,
}

impl Default for ToolConfig {
    fn default() -> Self {
        Self {
            frame: FrameParams {
                frame_length: crate::spectral::DEFAULT_FRAME_LENGTH,
                hop: crate::spectral::DEFAULT_HOP,
                fft_size: crate::spectral::DEFAULT_FFT_SIZE,
                sample_rate_hz: 16000,
            },
            rank: 128,
            train_iters: 200,
            noprior_iters: 200,
            regularized_iters: 200,
            gmm_k: 16,
            gmm_iters: 100,
            psi_iters: 50,
            alpha_a: 1.0,
            alpha_b: 1.0,
            lambda: 1e-4,
            epsilon_floor: crate::nmf::EPSILON_FLOOR,
            gain_floor: crate::gmm::GAIN_FLOOR,
            rng_seed: 0,
            prior_mode: PriorMode::Mmse,
            relearn_psi_every: 0,
        }
    }
}

impl ToolConfig {
    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.rank == 0 {
            return Err(Error::InvalidArgument("rank must be positive".into()));
        }
        if self.gmm_k == 0 {
            return Err(Error::InvalidArgument("gmm-k must be positive".into()));
        }
        if self.train_iters == 0 {
            return Err(Error::InvalidArgument("train-iters must be positive".into()));
        }
        if self.epsilon_floor <= 0.0 || self.gain_floor <= 0.0 {
            return Err(Error::InvalidArgument("floors must be positive".into()));
        }
        for (name, v) in [
            ("alpha-a", self.alpha_a),
            ("alpha-b", self.alpha_b),
            ("lambda", self.lambda),
        ] {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::InvalidArgument(format!("{name} must be >= 0")));
            }
        }
        Ok(())
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
            value.parse().map_err(|_| {
                Error::InvalidArgument(format!("invalid value '{value}' for {key}"))
            })
        }
        match key {
            "frame-length" => self.frame.frame_length = parse(key, value)?,
            "hop" => self.frame.hop = parse(key, value)?,
            "fft-size" => self.frame.fft_size = parse(key, value)?,
            "sample-rate" => self.frame.sample_rate_hz = parse(key, value)?,
            "rank" => self.rank = parse(key, value)?,
            "train-iters" => self.train_iters = parse(key, value)?,
            "noprior-iters" => self.noprior_iters = parse(key, value)?,
            "regularized-iters" => self.regularized_iters = parse(key, value)?,
            "gmm-k" => self.gmm_k = parse(key, value)?,
            "gmm-iters" => self.gmm_iters = parse(key, value)?,
            "psi-iters" => self.psi_iters = parse(key, value)?,
            "alpha-a" => self.alpha_a = parse(key, value)?,
            "alpha-b" => self.alpha_b = parse(key, value)?,
            "lambda" => self.lambda = parse(key, value)?,
            "epsilon-floor" => self.epsilon_floor = parse(key, value)?,
            "gain-floor" => self.gain_floor = parse(key, value)?,
            "seed" => self.rng_seed = parse(key, value)?,
            "prior" => self.prior_mode = parse(key, value)?,
            "relearn-psi-every" => self.relearn_psi_every = parse(key, value)?,
            other => {
                return Err(Error::InvalidArgument(format!("unknown config key '{other}'")))
            }
        }
        Ok(())
    }

    /// Loads settings from a flat key=value file on top of `self`. Blank
    /// lines and lines starting with '#' are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)?;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "{}:{}: expected key=value, got '{line}'",
                    path.display(),
                    lineno + 1
                ))
            })?;
            self.set(key.trim(), value.trim())?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        let cfg = ToolConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.rank, 128);
        assert_eq!(cfg.gmm_k, 16);
        assert_eq!(cfg.alpha_a, 1.0);
        assert_eq!(cfg.lambda, 1e-4);
        assert_eq!(cfg.frame.freq_bins(), 257);
    }

    #[test]
    fn key_value_file_overrides_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("unmix.conf");
        std::fs::write(&path, "# comment\nrank = 16\ngmm-k=4\nprior=sparse\n\n").unwrap();
        let mut cfg = ToolConfig::default();
        cfg.apply_file(&path).unwrap();
        assert_eq!(cfg.rank, 16);
        assert_eq!(cfg.gmm_k, 4);
        assert_eq!(cfg.prior_mode, PriorMode::Sparse);
    }

    #[test]
    fn unknown_key_is_an_error() {
        let mut cfg = ToolConfig::default();
        assert!(cfg.set("no-such-key", "1").is_err());
    }

    #[test]
    fn invalid_settings_fail_validation() {
        let mut cfg = ToolConfig::default();
        cfg.rank = 0;
        assert!(cfg.validate().is_err());
        let mut cfg = ToolConfig::default();
        cfg.frame.hop = cfg.frame.frame_length;
        assert!(cfg.validate().is_err());
    }
}
