//! Property tests for the algebraic invariants of the kernels.

use proptest::prelude::*;

use lipnet::linalg::{self, Matrix};
use lipnet::robustness::{certified_radius, margin, NormOrder};
use lipnet::rng::Pcg32;

fn small_matrix() -> impl Strategy<Value = Matrix> {
    ((1usize..8), (1usize..8)).prop_flat_map(|(rows, cols)| {
        proptest::collection::vec(-10.0f64..10.0, rows * cols)
            .prop_map(move |data| Matrix::from_vec(rows, cols, data).unwrap())
    })
}

proptest! {
    /// Positive scaling moves through the spectral norm exactly.
    #[test]
    fn spectral_norm_is_positively_homogeneous(m in small_matrix(), factor in 0.0f64..50.0) {
        let base = linalg::svd_oracle(&m).unwrap()[0];
        let mut scaled = m.clone();
        scaled.scale(factor);
        let scaled_norm = linalg::svd_oracle(&scaled).unwrap()[0];
        let expected = factor * base;
        prop_assert!(
            (scaled_norm - expected).abs() <= 1e-10 * expected.max(1e-12),
            "norm {scaled_norm} vs {expected}"
        );
    }

    /// The top singular value does not care about transposition.
    #[test]
    fn spectral_norm_is_transpose_invariant(m in small_matrix(), seed in 0u64..1000) {
        let mut rng_a = Pcg32::new(seed);
        let mut rng_b = Pcg32::new(seed.wrapping_add(1));
        let a = linalg::spectral_norm(&m, &mut rng_a).value;
        let b = linalg::spectral_norm(&m.transpose(), &mut rng_b).value;
        prop_assert!(
            (a - b).abs() <= 1e-8 * a.max(1e-12),
            "s_max(m) = {a}, s_max(m^T) = {b}"
        );
    }

    /// Every singular value reported by the oracle is non-negative and the
    /// squares sum to the squared Frobenius norm.
    #[test]
    fn svd_oracle_satisfies_frobenius_identity(m in small_matrix()) {
        let singular = linalg::svd_oracle(&m).unwrap();
        prop_assert!(singular.iter().all(|&s| s >= 0.0));
        prop_assert!(singular.windows(2).all(|w| w[0] >= w[1]));
        let sum_sq: f64 = singular.iter().map(|s| s * s).sum();
        let fro_sq = m.frobenius_norm().powi(2);
        prop_assert!((sum_sq - fro_sq).abs() <= 1e-9 * fro_sq.max(1e-12));
    }

    /// Adding a constant to every logit leaves the margin unchanged.
    #[test]
    fn margin_is_shift_invariant(
        logits in proptest::collection::vec(-100.0f64..100.0, 2..10),
        shift in -1000.0f64..1000.0,
        class_pick in 0usize..10,
    ) {
        let class = class_pick % logits.len();
        let base = margin(&logits, class).unwrap();
        let shifted: Vec<f64> = logits.iter().map(|v| v + shift).collect();
        let moved = margin(&shifted, class).unwrap();
        prop_assert!((base - moved).abs() <= 1e-9 * base.max(1.0));
    }

    /// The certified radius scales as 1 / L at fixed margin.
    #[test]
    fn certified_radius_scales_inversely(
        margin_value in 0.0f64..100.0,
        lipschitz in 0.01f64..1000.0,
        scale in 1.0f64..100.0,
    ) {
        for norm in [NormOrder::L2, NormOrder::LInf] {
            let base = certified_radius(margin_value, lipschitz, norm).unwrap();
            let scaled = certified_radius(margin_value, lipschitz * scale, norm).unwrap();
            prop_assert!((scaled * scale - base).abs() <= 1e-9 * base.max(1e-12));
        }
    }

    /// Identical seeds replay identical Gaussian matrices.
    #[test]
    fn gaussian_sampling_replays(seed in 0u64..10_000, rows in 1usize..6, cols in 1usize..6) {
        let a = linalg::sample_gaussian_matrix(rows, cols, 1.0, &mut Pcg32::new(seed)).unwrap();
        let b = linalg::sample_gaussian_matrix(rows, cols, 1.0, &mut Pcg32::new(seed)).unwrap();
        prop_assert_eq!(a, b);
    }
}
