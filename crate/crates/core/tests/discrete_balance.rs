mod common;

use common::{balance_error, composite, stationarity_error, tv, System};

#[test]
fn rescaled_swap_satisfies_detailed_balance_entrywise() {
    let sys = System::new();
    let (abs, rel, moved) = balance_error(&sys);
    assert!(abs <= 1e-8, "{abs:e}");
    assert!(rel <= 1e-8, "{rel:e}");
    assert!(moved > 100, "only {moved} states can move");
}

#[test]
fn composite_kernel_leaves_the_product_target_invariant() {
    let sys = System::new();
    let d = stationarity_error(&sys);
    assert!(d < 1e-6, "TV distance {d:e}");

    // a perturbed distribution is visibly moved, so the check has teeth
    let pi = sys.stationary();
    let mut skew: Vec<f64> = pi
        .iter()
        .enumerate()
        .map(|(s, &v)| if sys.coords(s).0 < sys.cold.len() / 2 { 2.0 * v } else { v })
        .collect();
    let z: f64 = skew.iter().sum();
    skew.iter_mut().for_each(|v| *v /= z);
    assert!(tv(&composite(&sys, &skew, 3), &skew) > 1e-4);
}
