//! End-to-end two-source separation.
//!
//! Training factorizes each source's clean spectrogram and fits a GMM over
//! its log-normalized gain columns. Separation decomposes the mixture
//! spectrogram against the concatenated bases without a prior, learns each
//! source's deformation covariance Psi from its own gains block, then
//! continues with the MMSE-regularized updates warm-started from the
//! no-prior solution. Psi is learned once and held fixed by default;
//! re-learning every few iterations is available but off. Source estimates
//! come from Wiener-style masks applied to the mixture STFT, so the two
//! estimates always sum back to the mixture.

use ndarray::{Array2, Axis};

use crate::audio::AudioSignal;
use crate::config::{PriorMode, ToolConfig};
use crate::error::{Error, Result};
use crate::gmm::{fit_gmm_em, log_normalize_columns};
use crate::model::{Floors, SourceModel};
use crate::nmf::{
    decompose_fixed_basis, factorize, init_gains, is_divergence, BasisMatrix, GainsMatrix,
    NmfConfig,
};
use crate::regnmf::{
    regularized_cost, regularized_update_gains, sparse_update_gains, BlockPrior, PriorSpec,
};
use crate::spectral::{istft, power_spectrogram, stft, PowerSpectrogram};
use crate::uncertainty::{learn_psi_em, UncertaintyDiag};

/// Per-run diagnostics.
#[derive(Debug, Clone, Default)]
pub struct Diagnostics {
    /// Objective value after each gains iteration (IS divergence plus the
    /// active penalties). For mmse runs this covers the regularized stage.
    pub cost_trace: Vec<f64>,
    pub noprior_iters: usize,
    pub regularized_iters: usize,
}

/// Output of `separate`.
#[derive(Debug, Clone)]
pub struct SeparationResult {
    pub source_a: AudioSignal,
    pub source_b: AudioSignal,
    /// Spectral masks, F x T, complementary wherever the model has energy.
    pub mask_a: Array2<f64>,
    pub mask_b: Array2<f64>,
    /// Final stacked gains (block 0 = source A, block 1 = source B).
    pub gains: GainsMatrix,
    pub psi_a: Option<UncertaintyDiag>,
    pub psi_b: Option<UncertaintyDiag>,
    pub diagnostics: Diagnostics,
}

fn check_rate(signal: &AudioSignal, cfg: &ToolConfig) -> Result<()> {
    if signal.sample_rate_hz() != cfg.frame.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            left: signal.sample_rate_hz(),
            right: cfg.frame.sample_rate_hz,
        });
    }
    Ok(())
}

/// Summary of a training run.
#[derive(Debug, Clone, Copy)]
pub struct TrainingReport {
    pub final_divergence: f64,
    pub training_frames: usize,
}

/// Trains a source model from clean audio: concatenated power spectrogram,
/// IS-NMF factorization, GMM prior on the log-normalized gains.
pub fn train_source_model(training_audio: &[AudioSignal], cfg: &ToolConfig) -> Result<SourceModel> {
    train_source_model_report(training_audio, cfg).map(|(model, _)| model)
}

/// As `train_source_model`, also reporting the final training divergence.
pub fn train_source_model_report(
    training_audio: &[AudioSignal],
    cfg: &ToolConfig,
) -> Result<(SourceModel, TrainingReport)> {
    cfg.validate()?;
    if training_audio.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut spectrograms = Vec::with_capacity(training_audio.len());
    for signal in training_audio {
        check_rate(signal, cfg)?;
        let spec = stft(signal, cfg.frame)?;
        spectrograms.push(power_spectrogram(&spec).values);
    }
    let views: Vec<_> = spectrograms.iter().map(|s| s.view()).collect();
    let v = ndarray::concatenate(Axis(1), &views)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;

    if v.ncols() < cfg.gmm_k {
        return Err(Error::TooFewSamples { needed: cfg.gmm_k, got: v.ncols() });
    }

    let nmf_cfg = NmfConfig {
        rank: cfg.rank,
        max_iters: cfg.train_iters,
        epsilon_floor: cfg.epsilon_floor,
        rng_seed: cfg.rng_seed,
    };
    let (basis, gains) = factorize(v.view(), &nmf_cfg)?;
    let final_divergence = is_divergence(v.view(), &basis, &gains, cfg.epsilon_floor)?;
    let q = log_normalize_columns(gains.values.view(), cfg.gain_floor);
    let prior = fit_gmm_em(&q, cfg.gmm_k, cfg.gmm_iters, cfg.rng_seed)?;

    let model = SourceModel {
        basis,
        prior,
        rank: cfg.rank,
        frame: cfg.frame,
        floors: Floors {
            epsilon_floor: cfg.epsilon_floor,
            gain_floor: cfg.gain_floor,
            covariance_floor: crate::gmm::COVARIANCE_FLOOR,
        },
        seed: cfg.rng_seed,
    };
    model.validate()?;
    Ok((model, TrainingReport { final_divergence, training_frames: v.ncols() }))
}

fn check_models(model_a: &SourceModel, model_b: &SourceModel, cfg: &ToolConfig) -> Result<()> {
    model_a.validate()?;
    model_b.validate()?;
    if model_a.frame != model_b.frame {
        return Err(Error::InvalidModel(
            "source models were trained with different framing".into(),
        ));
    }
    if model_a.frame.sample_rate_hz != cfg.frame.sample_rate_hz {
        return Err(Error::SampleRateMismatch {
            left: model_a.frame.sample_rate_hz,
            right: cfg.frame.sample_rate_hz,
        });
    }
    Ok(())
}

fn concat_bases(model_a: &SourceModel, model_b: &SourceModel) -> Result<BasisMatrix> {
    let values = ndarray::concatenate(
        Axis(1),
        &[model_a.basis.values.view(), model_b.basis.values.view()],
    )
    .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    Ok(BasisMatrix { values })
}

/// No-prior decomposition of the mixture followed by per-source Psi learning
/// against each source's own prior.
pub fn learn_uncertainties_stage(
    y: &PowerSpectrogram,
    model_a: &SourceModel,
    model_b: &SourceModel,
    cfg: &ToolConfig,
) -> Result<(GainsMatrix, UncertaintyDiag, UncertaintyDiag)> {
    let b_train = concat_bases(model_a, model_b)?;
    let blocks = [model_a.rank, model_b.rank];
    let nmf_cfg = NmfConfig {
        rank: model_a.rank + model_b.rank,
        max_iters: cfg.noprior_iters,
        epsilon_floor: cfg.epsilon_floor,
        rng_seed: cfg.rng_seed,
    };
    let gains = decompose_fixed_basis(y.values.view(), &b_train, &blocks, &nmf_cfg)?;
    let (psi_a, psi_b) = learn_uncertainties_from_gains(&gains, model_a, model_b, cfg)?;
    Ok((gains, psi_a, psi_b))
}

fn learn_uncertainties_from_gains(
    gains: &GainsMatrix,
    model_a: &SourceModel,
    model_b: &SourceModel,
    cfg: &ToolConfig,
) -> Result<(UncertaintyDiag, UncertaintyDiag)> {
    let block_a = gains.values.slice(ndarray::s![gains.block_rows(0), ..]);
    let block_b = gains.values.slice(ndarray::s![gains.block_rows(1), ..]);
    let q_a = log_normalize_columns(block_a, cfg.gain_floor);
    let q_b = log_normalize_columns(block_b, cfg.gain_floor);
    let psi_a = learn_psi_em(&q_a, &model_a.prior, cfg.psi_iters, None)?;
    let psi_b = learn_psi_em(&q_b, &model_b.prior, cfg.psi_iters, None)?;
    Ok((psi_a, psi_b))
}

/// Separates a two-source mixture. The prior mode selects the separation-
/// stage objective; every mode runs the same total number of gains
/// iterations so results are comparable across modes.
pub fn separate(
    mixture: &AudioSignal,
    model_a: &SourceModel,
    model_b: &SourceModel,
    prior_mode: PriorMode,
    cfg: &ToolConfig,
) -> Result<SeparationResult> {
    cfg.validate()?;
    check_rate(mixture, cfg)?;
    check_models(model_a, model_b, cfg)?;

    let spec = stft(mixture, model_a.frame)?;
    let psd = power_spectrogram(&spec);
    let b_train = concat_bases(model_a, model_b)?;
    let blocks = vec![model_a.rank, model_b.rank];
    let rank = model_a.rank + model_b.rank;

    let mut diagnostics = Diagnostics::default();
    let mut psi_a = None;
    let mut psi_b = None;

    let gains = match prior_mode {
        PriorMode::None | PriorMode::Sparse => {
            let lambda = if prior_mode == PriorMode::Sparse { cfg.lambda } else { 0.0 };
            let total = cfg.noprior_iters + cfg.regularized_iters;
            diagnostics.noprior_iters = total;
            let mut g = GainsMatrix::with_blocks(
                init_gains(rank, psd.values.ncols(), cfg.rng_seed),
                blocks.clone(),
            )?;
            for _ in 0..total {
                g = sparse_update_gains(psd.values.view(), &b_train, &g, lambda, cfg.epsilon_floor)?;
                let cost = is_divergence(psd.values.view(), &b_train, &g, cfg.epsilon_floor)?
                    + lambda * g.values.sum();
                diagnostics.cost_trace.push(cost);
            }
            g
        }
        PriorMode::Mmse => {
            let (mut g, pa, pb) = learn_uncertainties_stage(&psd, model_a, model_b, cfg)?;
            diagnostics.noprior_iters = cfg.noprior_iters;
            diagnostics.regularized_iters = cfg.regularized_iters;
            let mut prior = PriorSpec {
                blocks: vec![
                    BlockPrior::Mmse {
                        model: model_a.prior.clone(),
                        psi: pa.clone(),
                        alpha: cfg.alpha_a,
                    },
                    BlockPrior::Mmse {
                        model: model_b.prior.clone(),
                        psi: pb.clone(),
                        alpha: cfg.alpha_b,
                    },
                ],
            };
            psi_a = Some(pa);
            psi_b = Some(pb);
            for it in 0..cfg.regularized_iters {
                if cfg.relearn_psi_every > 0 && it > 0 && it % cfg.relearn_psi_every == 0 {
                    let (pa, pb) = learn_uncertainties_from_gains(&g, model_a, model_b, cfg)?;
                    prior = PriorSpec {
                        blocks: vec![
                            BlockPrior::Mmse {
                                model: model_a.prior.clone(),
                                psi: pa.clone(),
                                alpha: cfg.alpha_a,
                            },
                            BlockPrior::Mmse {
                                model: model_b.prior.clone(),
                                psi: pb.clone(),
                                alpha: cfg.alpha_b,
                            },
                        ],
                    };
                    psi_a = Some(pa);
                    psi_b = Some(pb);
                }
                g = regularized_update_gains(
                    psd.values.view(),
                    &b_train,
                    &g,
                    &prior,
                    cfg.epsilon_floor,
                )?;
                diagnostics
                    .cost_trace
                    .push(regularized_cost(psd.values.view(), &b_train, &g, &prior, cfg.epsilon_floor)?);
            }
            g
        }
    };

    // per-source model spectrograms and Wiener-style masks
    let g_a = gains.values.slice(ndarray::s![gains.block_rows(0), ..]);
    let g_b = gains.values.slice(ndarray::s![gains.block_rows(1), ..]);
    let s_a = model_a.basis.values.dot(&g_a);
    let s_b = model_b.basis.values.dot(&g_b);

    let (f_bins, t_frames) = (s_a.nrows(), s_a.ncols());
    let mut mask_a = Array2::zeros((f_bins, t_frames));
    let mut mask_b = Array2::zeros((f_bins, t_frames));
    for fi in 0..f_bins {
        for ti in 0..t_frames {
            let denom = s_a[[fi, ti]] + s_b[[fi, ti]];
            if denom > crate::spectral::POWER_FLOOR {
                mask_a[[fi, ti]] = s_a[[fi, ti]] / denom;
                mask_b[[fi, ti]] = s_b[[fi, ti]] / denom;
            } else {
                mask_a[[fi, ti]] = 0.5;
                mask_b[[fi, ti]] = 0.5;
            }
        }
    }

    let mut spec_a = spec.clone();
    let mut spec_b = spec;
    spec_a.values.zip_mut_with(&mask_a, |z, &m| *z *= m);
    spec_b.values.zip_mut_with(&mask_b, |z, &m| *z *= m);

    let truncate = |sig: AudioSignal| -> Result<AudioSignal> {
        AudioSignal::new(sig.samples()[..mixture.len()].to_vec(), sig.sample_rate_hz())
    };
    let source_a = truncate(istft(&spec_a)?)?;
    let source_b = truncate(istft(&spec_b)?)?;

    Ok(SeparationResult {
        source_a,
        source_b,
        mask_a,
        mask_b,
        gains,
        psi_a,
        psi_b,
        diagnostics,
    })
}

/// Mixes b into a at the requested level: returns a + c*b with c chosen so
/// that 10 log10(P_a / P_cb) = smr_db, powers measured as mean squared
/// amplitude over the whole signal. b is looped or truncated to a's length.
pub fn mix_at_smr(a: &AudioSignal, b: &AudioSignal, smr_db: f64) -> Result<AudioSignal> {
    if a.sample_rate_hz() != b.sample_rate_hz() {
        return Err(Error::SampleRateMismatch {
            left: a.sample_rate_hz(),
            right: b.sample_rate_hz(),
        });
    }
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let looped: Vec<f64> = (0..a.len()).map(|i| b.samples()[i % b.len()]).collect();
    let p_b = looped.iter().map(|x| x * x).sum::<f64>() / looped.len() as f64;
    if p_b <= 0.0 {
        return Err(Error::SilentMixInput);
    }
    let p_a = a.power();
    let c = (p_a / (p_b * 10f64.powf(smr_db / 10.0))).sqrt();
    let mixed: Vec<f64> = a
        .samples()
        .iter()
        .zip(looped.iter())
        .map(|(x, y)| x + c * y)
        .collect();
    AudioSignal::new(mixed, a.sample_rate_hz())
}
