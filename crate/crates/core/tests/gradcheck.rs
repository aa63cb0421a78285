mod common;

use common::gradcheck_suite;

#[test]
fn analytic_gradients_match_finite_differences() {
    for seed in 0..5 {
        for case in gradcheck_suite(seed) {
            assert!(
                case.error < case.tolerance,
                "{} seed {seed}: relative error {:.3e} >= {:.0e}",
                case.name,
                case.error,
                case.tolerance
            );
        }
    }
}
