//! Property tests for the invariants that hold over whole input families.

use ndarray::{Array1, Array2};
use proptest::prelude::*;
use unmix::gmm::{log_normalize_columns, GmmPrior};
use unmix::nmf::{is_divergence, update_basis, update_gains, BasisMatrix, GainsMatrix, EPSILON_FLOOR};
use unmix::spectral::{power_spectrogram, stft, FrameParams};
use unmix::uncertainty::UncertaintyDiag;
use unmix::AudioSignal;

fn small_frame() -> FrameParams {
    FrameParams { frame_length: 32, hop: 12, fft_size: 32, sample_rate_hz: 16000 }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stft_linearity(
        a in prop::collection::vec(-1.0f64..1.0, 96..200),
        b in prop::collection::vec(-1.0f64..1.0, 96..200),
    ) {
        let n = a.len().min(b.len());
        let frame = small_frame();
        let sa = stft(&AudioSignal::new(a[..n].to_vec(), 16000).unwrap(), frame).unwrap();
        let sb = stft(&AudioSignal::new(b[..n].to_vec(), 16000).unwrap(), frame).unwrap();
        let sum: Vec<f64> = a[..n].iter().zip(&b[..n]).map(|(x, y)| x + y).collect();
        let ss = stft(&AudioSignal::new(sum, 16000).unwrap(), frame).unwrap();
        for ((x, y), z) in sa.values.iter().zip(sb.values.iter()).zip(ss.values.iter()) {
            prop_assert!((x + y - z).norm() < 1e-9);
        }
    }

    #[test]
    fn power_spectrogram_is_nonnegative(
        samples in prop::collection::vec(-1.0f64..1.0, 64..256),
    ) {
        let spec = stft(&AudioSignal::new(samples, 16000).unwrap(), small_frame()).unwrap();
        let p = power_spectrogram(&spec);
        prop_assert!(p.values.iter().all(|&v| v >= 0.0 && v.is_finite()));
    }

    #[test]
    fn nmf_updates_preserve_nonnegativity_and_cost(
        seed in 0u64..10_000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = Array2::from_shape_fn((6, 5), |_| rng.gen_range(0.0..2.0));
        let b = BasisMatrix { values: Array2::from_shape_fn((6, 3), |_| rng.gen_range(0.05..1.0)) };
        let g = GainsMatrix::new(Array2::from_shape_fn((3, 5), |_| rng.gen_range(0.05..1.0)));
        let before = is_divergence(v.view(), &b, &g, EPSILON_FLOOR).unwrap();
        let b2 = update_basis(v.view(), &b, &g, EPSILON_FLOOR).unwrap();
        let mid = is_divergence(v.view(), &b2, &g, EPSILON_FLOOR).unwrap();
        let g2 = update_gains(v.view(), &b2, &g, EPSILON_FLOOR).unwrap();
        let after = is_divergence(v.view(), &b2, &g2, EPSILON_FLOOR).unwrap();
        prop_assert!(b2.values.iter().all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert!(g2.values.iter().all(|&x| x >= 0.0 && x.is_finite()));
        prop_assert!(mid <= before + 1e-10);
        prop_assert!(after <= mid + 1e-10);
    }

    #[test]
    fn log_normalized_columns_exponentiate_to_unit_norm(
        entries in prop::collection::vec(0.0f64..5.0, 12),
    ) {
        let g = Array2::from_shape_vec((4, 3), entries).unwrap();
        let q = log_normalize_columns(g.view(), 1e-8);
        prop_assert!(q.values.iter().all(|&v| v <= 0.0 && v.is_finite()));
        for col in q.values.columns() {
            let norm: f64 = col.iter().map(|x| x.exp().powi(2)).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn responsibilities_sum_to_one(
        seed in 0u64..10_000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let k = rng.gen_range(1..5);
        let d = rng.gen_range(1..5);
        let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.1..1.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|x| *x /= s);
        let model = GmmPrior {
            weights: w,
            means: Array2::from_shape_fn((k, d), |_| -rng.gen_range(0.0..3.0)),
            variances: Array2::from_shape_fn((k, d), |_| rng.gen_range(0.1..2.0)),
        };
        let psi = UncertaintyDiag::new(Array1::from_shape_fn(d, |_| rng.gen_range(0.0..2.0))).unwrap();
        let x = Array1::from_shape_fn(d, |_| -rng.gen_range(0.0..30.0));
        let gamma = unmix::gmm::responsibilities_with_uncertainty(x.view(), &model, &psi).unwrap();
        prop_assert!((gamma.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(gamma.iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn mix_at_smr_hits_requested_ratio(
        smr_db in -20.0f64..20.0,
        seed in 0u64..1000,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..512).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = AudioSignal::new(a, 16000).unwrap();
        let b = AudioSignal::new(b, 16000).unwrap();
        let mixed = unmix::separation::mix_at_smr(&a, &b, smr_db).unwrap();
        let back: Vec<f64> = mixed.samples().iter().zip(a.samples()).map(|(m, x)| m - x).collect();
        let p_b = back.iter().map(|x| x * x).sum::<f64>() / back.len() as f64;
        let measured = 10.0 * (a.power() / p_b).log10();
        prop_assert!((measured - smr_db).abs() < 1e-9);
    }
}
