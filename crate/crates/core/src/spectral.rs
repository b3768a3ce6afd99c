//! STFT analysis/synthesis and power spectrograms.
//!
//! Analysis windows each frame with a Hamming window and keeps the one-sided
//! spectrum (F = fft_size/2 + 1 bins). The signal is zero-padded at the tail
//! so the last partial frame is complete, giving the deterministic frame
//! count T = ceil((len - frame_length)/hop) + 1.
//!
//! Synthesis is weighted overlap-add: each inverse frame is windowed again
//! and the accumulated signal is divided per sample by the accumulated
//! squared window. The Hamming window is nonzero everywhere, so
//! reconstruction is exact wherever at least one frame covers a sample; a
//! vanishing denominator is reported as an error instead of silently
//! emitting garbage.

use ndarray::{Array1, Array2};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioSignal;
use crate::error::{Error, Result};

/// Default analysis parameters: 480-sample Hamming window with 60% overlap
/// (hop 192) and a 512-point FFT, i.e. 257 one-sided bins at 16 kHz.
pub const DEFAULT_FRAME_LENGTH: usize = 480;
pub const DEFAULT_HOP: usize = 192;
pub const DEFAULT_FFT_SIZE: usize = 512;

/// Floor applied by consumers before dividing by spectrogram entries.
pub const POWER_FLOOR: f64 = 1e-12;

/// Framing metadata shared by complex and power spectrograms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct FrameParams {
    pub frame_length: usize,
    pub hop: usize,
    pub fft_size: usize,
    pub sample_rate_hz: u32,
}

impl FrameParams {
    pub fn validate(&self) -> Result<()> {
        if self.hop == 0 {
            return Err(Error::InvalidArgument("hop must be >= 1".into()));
        }
        if self.hop >= self.frame_length {
            return Err(Error::InvalidArgument(format!(
                "hop ({}) must be smaller than frame length ({})",
                self.hop, self.frame_length
            )));
        }
        if self.frame_length > self.fft_size {
            return Err(Error::InvalidArgument(format!(
                "frame length ({}) must not exceed fft size ({})",
                self.frame_length, self.fft_size
            )));
        }
        if self.sample_rate_hz == 0 {
            return Err(Error::InvalidArgument("sample rate must be positive".into()));
        }
        Ok(())
    }

    /// One-sided bin count F = fft_size/2 + 1.
    pub fn freq_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Frame count for a signal of `len` samples (tail zero-padded).
    pub fn num_frames(&self, len: usize) -> usize {
        if len <= self.frame_length {
            1
        } else {
            (len - self.frame_length).div_ceil(self.hop) + 1
        }
    }
}

/// One-sided complex STFT, F x T.
#[derive(Debug, Clone)]
pub struct ComplexSpectrogram {
    pub values: Array2<Complex64>,
    pub frame: FrameParams,
}

/// Squared-magnitude spectrogram, F x T, everywhere >= 0.
#[derive(Debug, Clone)]
pub struct PowerSpectrogram {
    pub values: Array2<f64>,
    pub frame: FrameParams,
}

/// Symmetric Hamming window of the given length.
pub fn hamming_window(len: usize) -> Array1<f64> {
    if len == 1 {
        return Array1::ones(1);
    }
    Array1::from_iter((0..len).map(|n| {
        0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (len - 1) as f64).cos()
    }))
}

/// Forward STFT of a signal. Column t holds the one-sided FFT of the
/// Hamming-windowed frame starting at t * hop.
pub fn stft(signal: &AudioSignal, frame: FrameParams) -> Result<ComplexSpectrogram> {
    frame.validate()?;
    if signal.is_empty() {
        return Err(Error::EmptyInput);
    }

    let window = hamming_window(frame.frame_length);
    let bins = frame.freq_bins();
    let num_frames = frame.num_frames(signal.len());
    let samples = signal.samples();

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(frame.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); frame.fft_size];

    let mut values = Array2::zeros((bins, num_frames));
    for t in 0..num_frames {
        let start = t * frame.hop;
        for i in 0..frame.fft_size {
            let x = if i < frame.frame_length && start + i < samples.len() {
                samples[start + i] * window[i]
            } else {
                0.0
            };
            buf[i] = Complex64::new(x, 0.0);
        }
        fft.process(&mut buf);
        for (f, v) in buf.iter().take(bins).enumerate() {
            values[[f, t]] = *v;
        }
    }

    Ok(ComplexSpectrogram { values, frame })
}

/// Inverse STFT by weighted overlap-add. The output covers the full synthesis
/// grid, (T-1) * hop + frame_length samples; callers that know the original
/// signal length truncate.
pub fn istft(spec: &ComplexSpectrogram) -> Result<AudioSignal> {
    spec.frame.validate()?;
    let bins = spec.frame.freq_bins();
    if spec.values.nrows() != bins {
        return Err(Error::ShapeMismatch(format!(
            "spectrogram has {} rows, framing implies {}",
            spec.values.nrows(),
            bins
        )));
    }
    let num_frames = spec.values.ncols();
    if num_frames == 0 {
        return Err(Error::EmptyInput);
    }

    let window = hamming_window(spec.frame.frame_length);
    let out_len = (num_frames - 1) * spec.frame.hop + spec.frame.frame_length;
    let mut acc = vec![0.0f64; out_len];
    let mut wsq = vec![0.0f64; out_len];

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(spec.frame.fft_size);
    let mut buf = vec![Complex64::new(0.0, 0.0); spec.frame.fft_size];

    for t in 0..num_frames {
        for f in 0..bins {
            buf[f] = spec.values[[f, t]];
        }
        // Conjugate symmetry for the negative frequencies (DC and Nyquist
        // excluded).
        for f in 1..bins - 1 {
            buf[spec.frame.fft_size - f] = buf[f].conj();
        }
        ifft.process(&mut buf);

        let start = t * spec.frame.hop;
        let scale = 1.0 / spec.frame.fft_size as f64;
        for i in 0..spec.frame.frame_length {
            acc[start + i] += buf[i].re * scale * window[i];
            wsq[start + i] += window[i] * window[i];
        }
    }

    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        if wsq[i] <= 1e-12 {
            return Err(Error::WindowNotInvertible);
        }
        out.push(acc[i] / wsq[i]);
    }
    AudioSignal::new(out, spec.frame.sample_rate_hz)
}

/// Elementwise squared magnitude |X(f,t)|^2.
pub fn power_spectrogram(spec: &ComplexSpectrogram) -> PowerSpectrogram {
    PowerSpectrogram {
        values: spec.values.mapv(|z| z.norm_sqr()),
        frame: spec.frame,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn default_frame() -> FrameParams {
        FrameParams {
            frame_length: DEFAULT_FRAME_LENGTH,
            hop: DEFAULT_HOP,
            fft_size: DEFAULT_FFT_SIZE,
            sample_rate_hz: 16000,
        }
    }

    fn noise_signal(len: usize, seed: u64) -> AudioSignal {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        AudioSignal::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
    }

    /// Brute-force DFT of a single windowed frame, independent of rustfft.
    fn dft_frame(frame_samples: &[f64], fft_size: usize) -> Vec<Complex64> {
        let bins = fft_size / 2 + 1;
        (0..bins)
            .map(|k| {
                let mut acc = Complex64::new(0.0, 0.0);
                for (n, &x) in frame_samples.iter().enumerate() {
                    let phi = -2.0 * std::f64::consts::PI * (k * n) as f64 / fft_size as f64;
                    acc += Complex64::new(x * phi.cos(), x * phi.sin());
                }
                acc
            })
            .collect()
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let sig = AudioSignal::new(vec![0.0; 16000], 16000).unwrap();
        let spec = stft(&sig, default_frame()).unwrap();
        assert!(spec.values.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn default_framing_has_257_rows() {
        let sig = noise_signal(480, 1);
        let spec = stft(&sig, default_frame()).unwrap();
        assert_eq!(spec.values.nrows(), 257);
        assert_eq!(spec.values.ncols(), 1);
    }

    #[test]
    fn frame_count_matches_padding_rule() {
        let frame = default_frame();
        // T = ceil((len - frame_length)/hop) + 1
        assert_eq!(stft(&noise_signal(481, 2), frame).unwrap().values.ncols(), 2);
        assert_eq!(stft(&noise_signal(672, 2), frame).unwrap().values.ncols(), 2);
        assert_eq!(stft(&noise_signal(673, 2), frame).unwrap().values.ncols(), 3);
        // shorter than one frame: single zero-padded frame
        assert_eq!(stft(&noise_signal(100, 2), frame).unwrap().values.ncols(), 1);
    }

    #[test]
    fn empty_signal_is_an_error() {
        let sig = AudioSignal::new(vec![], 16000).unwrap();
        assert!(matches!(stft(&sig, default_frame()), Err(Error::EmptyInput)));
    }

    #[test]
    fn sinusoid_peaks_at_its_bin() {
        let frame = default_frame();
        // bin-center frequency: k * fs / fft_size with k = 40
        let k = 40usize;
        let f_hz = k as f64 * 16000.0 / frame.fft_size as f64;
        let n = 16000;
        let sig = AudioSignal::new(
            (0..n)
                .map(|i| (2.0 * std::f64::consts::PI * f_hz * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap();
        let spec = stft(&sig, frame).unwrap();
        let interior = 1..spec.values.ncols() - 1;
        for t in interior {
            let col = spec.values.column(t);
            let (argmax, _) = col
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
                .unwrap();
            assert_eq!(argmax, k, "frame {t} peaks at bin {argmax}, expected {k}");
        }
    }

    #[test]
    fn stft_matches_brute_force_dft_of_one_frame() {
        let frame = default_frame();
        let sig = noise_signal(4000, 7);
        let spec = stft(&sig, frame).unwrap();
        let window = hamming_window(frame.frame_length);
        let t = 3usize;
        let start = t * frame.hop;
        let windowed: Vec<f64> = (0..frame.frame_length)
            .map(|i| sig.samples()[start + i] * window[i])
            .collect();
        let oracle = dft_frame(&windowed, frame.fft_size);
        for (f, expect) in oracle.iter().enumerate() {
            let got = spec.values[[f, t]];
            assert!(
                (got - expect).norm() < 1e-9,
                "bin {f}: {got} vs oracle {expect}"
            );
        }
    }

    #[test]
    fn round_trip_reconstructs_interior_of_noise() {
        let frame = default_frame();
        let sig = noise_signal(16000, 3);
        let spec = stft(&sig, frame).unwrap();
        let back = istft(&spec).unwrap();
        assert!(back.len() >= sig.len());
        let lo = frame.frame_length;
        let hi = sig.len() - frame.frame_length;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            let d = back.samples()[i] - sig.samples()[i];
            num += d * d;
            den += sig.samples()[i] * sig.samples()[i];
        }
        let rel = (num / den).sqrt();
        assert!(rel < 1e-6, "interior relative error {rel}");
    }

    #[test]
    fn round_trip_preserves_sinusoid_amplitude() {
        let frame = default_frame();
        let n = 8000;
        let sig = AudioSignal::new(
            (0..n)
                .map(|i| 0.7 * (2.0 * std::f64::consts::PI * 441.0 * i as f64 / 16000.0).sin())
                .collect(),
            16000,
        )
        .unwrap();
        let back = istft(&stft(&sig, frame).unwrap()).unwrap();
        let lo = frame.frame_length;
        let hi = sig.len() - frame.frame_length;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in lo..hi {
            let d = back.samples()[i] - sig.samples()[i];
            num += d * d;
            den += sig.samples()[i] * sig.samples()[i];
        }
        assert!((num / den).sqrt() < 1e-6);
    }

    #[test]
    fn zero_spectrogram_inverts_to_zero_signal() {
        let frame = default_frame();
        let spec = ComplexSpectrogram {
            values: Array2::zeros((frame.freq_bins(), 5)),
            frame,
        };
        let sig = istft(&spec).unwrap();
        assert!(sig.samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn power_of_3_plus_4i_is_25() {
        let frame = default_frame();
        let mut values = Array2::zeros((frame.freq_bins(), 1));
        values[[0, 0]] = Complex64::new(3.0, 4.0);
        let spec = ComplexSpectrogram { values, frame };
        let p = power_spectrogram(&spec);
        assert_eq!(p.values[[0, 0]], 25.0);
        assert!(p.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn parseval_tracks_frame_energy() {
        // One-sided Parseval: sum(wx^2) = (|X_0|^2 + 2*sum_mid |X_k|^2 + |X_Nyq|^2)/N
        let frame = default_frame();
        let sig = noise_signal(4000, 11);
        let spec = stft(&sig, frame).unwrap();
        let window = hamming_window(frame.frame_length);
        let t = 2usize;
        let start = t * frame.hop;
        let frame_energy: f64 = (0..frame.frame_length)
            .map(|i| {
                let wx = sig.samples()[start + i] * window[i];
                wx * wx
            })
            .sum();
        let bins = frame.freq_bins();
        let mut spec_energy = spec.values[[0, t]].norm_sqr() + spec.values[[bins - 1, t]].norm_sqr();
        for f in 1..bins - 1 {
            spec_energy += 2.0 * spec.values[[f, t]].norm_sqr();
        }
        spec_energy /= frame.fft_size as f64;
        let rel = (spec_energy - frame_energy).abs() / frame_energy;
        assert!(rel < 1e-6, "Parseval relative error {rel}");
    }

    #[test]
    fn stft_is_linear() {
        let frame = default_frame();
        let a = noise_signal(3000, 21);
        let b = noise_signal(3000, 22);
        let sum = AudioSignal::new(
            a.samples().iter().zip(b.samples()).map(|(x, y)| x + y).collect(),
            16000,
        )
        .unwrap();
        let sa = stft(&a, frame).unwrap();
        let sb = stft(&b, frame).unwrap();
        let ss = stft(&sum, frame).unwrap();
        for ((x, y), z) in sa.values.iter().zip(sb.values.iter()).zip(ss.values.iter()) {
            assert!((x + y - z).norm() < 1e-9);
        }
    }
}
