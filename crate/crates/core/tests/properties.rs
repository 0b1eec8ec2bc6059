//! Randomized property checks over the numeric substrate.

use proptest::prelude::*;

use spectformer_core::numerics::fft::{dft2_oracle, irfft2, rfft2, spectrum_energy};
use spectformer_core::numerics::rng::Rng;
use spectformer_core::numerics::tensor::Tensor;
use spectformer_core::training::topk_indices;

fn random_grid64(h: usize, w: usize, c: usize, seed: u64) -> Tensor<f64> {
    Rng::seeded(seed).normal_tensor(&[h, w, c], 0.0, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn round_trip_identity_f64(h in 1usize..10, w in 1usize..10, c in 1usize..4, seed in 0u64..1000) {
        let x = random_grid64(h, w, c, seed);
        let back = irfft2(&rfft2(&x).unwrap()).unwrap();
        for (a, b) in x.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn round_trip_identity_f32(exp_h in 1u32..4, exp_w in 1u32..4, seed in 0u64..1000) {
        let (h, w) = (1usize << exp_h, 1usize << exp_w);
        let x: Tensor<f32> = Rng::seeded(seed).normal_tensor(&[h, w, 2], 0.0, 1.0).unwrap();
        let back = irfft2(&rfft2(&x).unwrap()).unwrap();
        for (a, b) in x.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn fast_path_matches_oracle(exp_h in 1u32..4, exp_w in 1u32..4, c in 1usize..3, seed in 0u64..1000) {
        let (h, w) = (1usize << exp_h, 1usize << exp_w);
        let x = random_grid64(h, w, c, seed);
        let fast = rfft2(&x).unwrap();
        let slow = dft2_oracle(&x).unwrap();
        for i in 0..fast.coeffs.numel() {
            prop_assert!((fast.coeffs.re[i] - slow.coeffs.re[i]).abs() < 1e-12);
            prop_assert!((fast.coeffs.im[i] - slow.coeffs.im[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn parseval_holds(h in 1usize..9, w in 1usize..9, seed in 0u64..1000) {
        let x = random_grid64(h, w, 2, seed);
        let spatial: f64 = x.data().iter().map(|&v| v * v).sum();
        let freq = spectrum_energy(&rfft2(&x).unwrap()) / (h * w) as f64;
        prop_assert!((spatial - freq).abs() / spatial.max(1e-12) < 1e-9);
    }

    #[test]
    fn top1_subset_of_top5(logits in prop::collection::vec(-10.0f64..10.0, 1..20)) {
        let top1 = topk_indices(&logits, 1);
        let top5 = topk_indices(&logits, 5);
        prop_assert!(top5.contains(&top1[0]));
        prop_assert!(top5.len() <= 5 && top5.len() <= logits.len());
    }
}
