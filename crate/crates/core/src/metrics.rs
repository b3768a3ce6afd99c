//! SNR and SIR evaluation of separated signals.
//!
//! SNR is the plain energy ratio 10 log10(sum s^2 / sum (s - s_hat)^2). SIR
//! follows the simplest BSS-eval variant: the estimate is projected onto the
//! target reference with a time-invariant scalar, the residual is projected
//! onto the interferer reference orthogonalized against the target, and the
//! ratio of the two projection energies is reported. Infinite ratios are
//! capped at 300 dB.

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Cap applied to unbounded ratios.
pub const DB_CAP: f64 = 300.0;

/// Evaluation summary for one estimated signal.
#[derive(Debug, Clone, Copy)]
pub struct EvalReport {
    pub snr_db: f64,
    pub sir_db: f64,
    /// Number of samples compared (inputs truncated to the shortest).
    pub compared_len: usize,
    /// Alignment applied before comparison; always 0 for this scalar variant.
    pub alignment_offset: isize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// 10 log10(sum s^2 / sum (s - s_hat)^2), inputs truncated to equal length.
pub fn snr_db(reference: &AudioSignal, estimate: &AudioSignal) -> Result<f64> {
    let n = reference.len().min(estimate.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let s = &reference.samples()[..n];
    let e = &estimate.samples()[..n];
    let signal = dot(s, s);
    if signal <= 0.0 {
        return Err(Error::SilentReference);
    }
    let noise: f64 = s.iter().zip(e).map(|(x, y)| (x - y) * (x - y)).sum();
    if noise <= 0.0 {
        return Ok(DB_CAP);
    }
    Ok((10.0 * (signal / noise).log10()).min(DB_CAP))
}

/// Target-projection SIR: energy of the estimate's target component over the
/// energy of its interference component.
pub fn sir_db(
    estimate: &AudioSignal,
    target_ref: &AudioSignal,
    interferer_ref: &AudioSignal,
) -> Result<f64> {
    let n = estimate.len().min(target_ref.len()).min(interferer_ref.len());
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let e = &estimate.samples()[..n];
    let t = &target_ref.samples()[..n];
    let i = &interferer_ref.samples()[..n];

    let tt = dot(t, t);
    let ii = dot(i, i);
    if tt <= 0.0 || ii <= 0.0 {
        return Err(Error::SilentReference);
    }
    let ti = dot(t, i);
    // collinear references leave no direction to attribute interference to
    if ti * ti >= (1.0 - 1e-12) * tt * ii {
        return Err(Error::CollinearReferences);
    }

    let ct = dot(e, t) / tt;
    let target_energy = ct * ct * tt;

    // residual after removing the target component
    let residual: Vec<f64> = e.iter().zip(t).map(|(x, y)| x - ct * y).collect();
    // interferer direction orthogonalized against the target
    let proj = ti / tt;
    let i_perp: Vec<f64> = i.iter().zip(t).map(|(x, y)| x - proj * y).collect();
    let ipp = dot(&i_perp, &i_perp);
    let ci = dot(&residual, &i_perp) / ipp;
    let interference_energy = ci * ci * ipp;

    if interference_energy <= 0.0 {
        return Ok(DB_CAP);
    }
    if target_energy <= 0.0 {
        return Ok(-DB_CAP);
    }
    Ok((10.0 * (target_energy / interference_energy).log10()).clamp(-DB_CAP, DB_CAP))
}

/// Convenience wrapper producing a full report.
pub fn evaluate(
    estimate: &AudioSignal,
    target_ref: &AudioSignal,
    interferer_ref: &AudioSignal,
) -> Result<EvalReport> {
    let n = estimate.len().min(target_ref.len()).min(interferer_ref.len());
    Ok(EvalReport {
        snr_db: snr_db(target_ref, estimate)?,
        sir_db: sir_db(estimate, target_ref, interferer_ref)?,
        compared_len: n,
        alignment_offset: 0,
    })
}
