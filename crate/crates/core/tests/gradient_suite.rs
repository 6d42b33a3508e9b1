//! Full-size finite-difference sweep over every loss: 50 randomized
//! instances per loss, all coordinates probed, strict tolerance.

use mmcl_core::losses::LossKind;
use mmcl_core::verify_gradient;

#[test]
fn fifty_trials_per_loss_stay_within_tolerance() {
    let tolerance = 1e-5;
    for kind in LossKind::ALL {
        let report = verify_gradient(kind, 50, 0xfeed_beef, tolerance).unwrap();
        println!(
            "{}: max rel {:.3e} (abs {:.3e}) after {} resamples",
            kind.name(),
            report.max_rel_error,
            report.max_abs_error,
            report.resamples
        );
        assert!(
            report.passed,
            "{}: max rel error {} at trial {} coordinate {:?}",
            kind.name(),
            report.max_rel_error,
            report.worst_trial,
            report.worst_coordinate
        );
    }
}
