//! Property tests for the numeric kernels.

use proptest::prelude::*;

use rfbmode::attack::{apply_signed_update, AttackConfig, ParamBounds};
use rfbmode::classifier::bce_loss;
use rfbmode::recon::{envelope, log_compress, map_to_pixels, ReconParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn envelope_dominates_the_signal(
        line in prop::collection::vec(-1e3f64..1e3, 16..300),
    ) {
        let env = envelope(&line).unwrap();
        let max_abs = line.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
        for (e, x) in env.iter().zip(&line) {
            prop_assert!(*e >= x.abs() - 1e-9 * max_abs);
        }
    }

    #[test]
    fn compressed_values_stay_in_window(
        amp in prop::collection::vec(0f64..1e6, 1..200),
        alpha_l in -20f64..20.0,
        width in 1f64..60.0,
    ) {
        let alpha_u = alpha_l + width;
        let out = log_compress(&amp, alpha_l, alpha_u).unwrap();
        for d in &out {
            prop_assert!(*d >= alpha_l && *d <= alpha_u);
        }
        let px = map_to_pixels(&out, alpha_l, alpha_u);
        prop_assert_eq!(px.len(), out.len());
    }

    #[test]
    fn pixel_map_is_monotone(
        a in 0f64..1.0,
        b in 0f64..1.0,
    ) {
        let (alpha_l, alpha_u) = (10.0, 55.0);
        let lo = alpha_l + a.min(b) * (alpha_u - alpha_l);
        let hi = alpha_l + a.max(b) * (alpha_u - alpha_l);
        let px = map_to_pixels(&[lo, hi], alpha_l, alpha_u);
        prop_assert!(px[0] <= px[1]);
    }

    #[test]
    fn bce_is_non_negative(p in 0f64..=1.0, label in 0u8..=1) {
        prop_assert!(bce_loss(p, label) >= 0.0);
    }

    #[test]
    fn signed_updates_stay_in_the_box(
        beta in 0.5f64..=1.3,
        alpha_l in 5f64..=15.0,
        alpha_u in 50f64..=60.0,
        g in prop::array::uniform3(-10f64..10.0),
        steps in 1usize..30,
    ) {
        let bounds = ParamBounds::default();
        let lrs = AttackConfig::default().lrs;
        let mut p = ReconParams { beta, alpha_l, alpha_u };
        for _ in 0..steps {
            p = apply_signed_update(&p, &g, &lrs, &bounds);
            prop_assert!(bounds.contains(&p));
        }
    }
}
