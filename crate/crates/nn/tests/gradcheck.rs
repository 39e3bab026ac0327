use rrforge_nn::gradcheck::{op_suite, OpCheck};

fn suite() -> Vec<OpCheck> {
    (0..5).flat_map(|seed| op_suite(seed).unwrap()).collect()
}

fn worst(checks: &[OpCheck], prefix: &str) -> f64 {
    let errs: Vec<f64> = checks.iter().filter(|c| c.op.starts_with(prefix)).map(|c| c.worst).collect();
    assert_eq!(errs.len() % 5, 0, "{prefix}");
    assert!(!errs.is_empty(), "{prefix}");
    errs.into_iter().fold(0.0, f64::max)
}

#[test]
fn every_operation_matches_central_differences() {
    let checks = suite();
    for prefix in ["conv1d", "batch_norm", "leaky_relu", "dense", "concat", "smooth_l1", "network"] {
        let w = worst(&checks, prefix);
        assert!(w < 1e-4, "{prefix}: {w}");
    }
    assert_eq!(checks.len(), 5 * 11);
}
