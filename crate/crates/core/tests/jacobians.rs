mod common;

use common::fd::worst_block_error;

use proptest::prelude::*;

#[test]
fn analytic_blocks_match_central_differences_for_every_model() {
    for (name, sys) in common::systems() {
        for (k, s) in common::random_states(&sys, 100, 0.1, 11).iter().enumerate() {
            let e = worst_block_error(&sys, s);
            assert!(e <= 1e-5, "{name} sample {k}: relative error {e:.3e}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn nine_bus_jacobian_matches_differences(dx in prop::collection::vec(-0.2f64..0.2, 8)) {
        let sys = augsync::cases::nine_bus();
        let base = common::base_state(&sys);
        if let Some(s) = common::perturbed(&sys, &base, &dx) {
            prop_assert!(worst_block_error(&sys, &s) <= 1e-5);
        }
    }

    #[test]
    fn flux_decay_jacobian_matches_differences(dx in prop::collection::vec(-0.5f64..0.5, 3)) {
        let sys = augsync::cases::smib_flux_decay();
        let base = common::base_state(&sys);
        if let Some(s) = common::perturbed(&sys, &base, &dx) {
            prop_assert!(worst_block_error(&sys, &s) <= 1e-5);
        }
    }
}
