use std::f64::consts::PI;

use rsmote::oracles::{
    allen_cahn_reference, burgers_point, load_or_build, reference_grid, validate_oracle, CacheStatus, SolverId,
};

fn with_cache<R>(f: impl FnOnce() -> R) -> R {
    let dir = tempfile::tempdir().unwrap();
    std::env::set_var("PINN_ORACLE_CACHE", dir.path());
    f()
}

#[test]
fn burgers_validation_passes() {
    let report = validate_oracle(SolverId::BurgersColeHopf).unwrap();
    for c in &report.checks {
        println!("{}: {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold);
    }
    assert!(report.passed());
}

#[test]
fn allen_cahn_validation_passes() {
    with_cache(|| {
        let report = validate_oracle(SolverId::AllenCahnMol).unwrap();
        for c in &report.checks {
            println!("{}: {:.3e} (threshold {:.1e})", c.name, c.value, c.threshold);
        }
        assert!(report.passed());

        let xs: Vec<f64> = (0..=40).map(|i| -1.0 + i as f64 * 0.05).collect();
        let zeros = vec![0.0; xs.len()];
        let init = allen_cahn_reference(&xs, &zeros).unwrap();
        for (x, u) in xs.iter().zip(&init) {
            assert!((u - x * x * (PI * x).cos()).abs() < 1e-6, "x={x}");
        }
        for &t in &[0.0, 0.3, 0.77, 1.0] {
            let ends = allen_cahn_reference(&[-1.0, 1.0], &[t, t]).unwrap();
            assert!(ends.iter().all(|u| (u + 1.0).abs() < 1e-12));
        }
        let grid = reference_grid(SolverId::AllenCahnMol).unwrap();
        assert!(grid.values().iter().all(|u| u.abs() <= 1.01));
    });
}

#[test]
fn burgers_center_and_initial_slice() {
    for &t in &[0.05, 0.25, 0.5, 1.0] {
        assert!(burgers_point(0.0, t).unwrap().abs() < 1e-10);
    }
    for &x in &[-0.9, -0.3, 0.2, 0.65] {
        assert_eq!(burgers_point(x, 0.0).unwrap(), -(PI * x).sin());
    }
}

#[test]
fn oracle_cache_build_then_hit() {
    let dir = tempfile::tempdir().unwrap();
    let (_, first) = load_or_build(SolverId::BurgersColeHopf, 64, dir.path()).unwrap();
    let (_, second) = load_or_build(SolverId::BurgersColeHopf, 64, dir.path()).unwrap();
    assert_eq!((first, second), (CacheStatus::Built, CacheStatus::Hit));
}
