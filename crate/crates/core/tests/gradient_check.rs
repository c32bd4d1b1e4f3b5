mod common;

use strength_init::{RngStream, StreamPurpose};

#[test]
fn backprop_matches_central_differences() {
    let mut rng = RngStream::new(StreamPurpose::Weights, 77, 0, 0);
    for seed in 0..20 {
        let sizes = common::random_arch(&mut rng, 200);
        let (worst, n) = common::gradient_check(&sizes, 6, seed);
        assert!(n <= 200);
        assert!(worst < 1e-5, "{sizes:?}: relative error {worst:e}");
    }
}

#[test]
fn ten_parameter_network() {
    let (worst, n) = common::gradient_check(&[4, 2], 4, 5);
    assert_eq!(n, 10);
    assert!(worst < 1e-5, "relative error {worst:e}");
}
