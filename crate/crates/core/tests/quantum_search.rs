use bellpost::inequalities::catalog;
use bellpost::quantum::{ghz_state, optimize_settings, OptimizerConfig};
use std::time::Instant;

#[test]
fn optimizer_reaches_quantum_values() {
    let s2 = std::f64::consts::SQRT_2;
    for (name, n, q) in [
        ("chsh", 2, 2.0 * s2),
        ("mermin", 3, 4.0),
        ("svetlichny", 3, 4.0 * s2),
    ] {
        let f = catalog::<f64>(name, n).unwrap();
        let t = Instant::now();
        let r = optimize_settings(&f, &ghz_state(n).unwrap(), &OptimizerConfig::default()).unwrap();
        println!(
            "{name}: {} (err {:e}) in {:?}, evals {}",
            r.value,
            q - r.value,
            t.elapsed(),
            r.evaluations
        );
        assert!((r.value - q).abs() < 1e-6);
        assert!(r.value <= f.constant_c() + 1e-12);
    }
}
