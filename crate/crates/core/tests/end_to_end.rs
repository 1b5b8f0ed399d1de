mod common;

use common::gradcheck::{end_to_end, END_TO_END_TOLERANCE};

#[test]
fn toy_generator_objective_matches_finite_differences() {
    for seed in 0..3 {
        let err = end_to_end(seed, 24);
        assert!(err < END_TO_END_TOLERANCE, "seed {seed}: relative error {err:e}");
    }
}
