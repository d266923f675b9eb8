use num_complex::Complex64;

use resonant::engine::{StepControl, System};
use resonant::families::CoefficientFamily;
use resonant::manifold::{spectrum_period, track_manifold, ManifoldPoint, RECURRENCE_THRESHOLD};

fn point() -> ManifoldPoint {
    ManifoldPoint::new(Complex64::new(0.1, 0.0), Complex64::new(1.0, 0.0), Complex64::new(0.3, 0.0)).unwrap()
}

#[test]
fn period_is_stable_under_denser_sampling() {
    let f = CoefficientFamily::from_name("cubic_conformal", None).unwrap();
    let sys = System::auto(&f, 32).unwrap();
    let period = |every: usize, refine: bool| {
        let track = track_manifold(&sys, f.weight(), &point(), 35.0, StepControl::fixed(1e-2, every)).unwrap();
        let dynamics: Option<&dyn resonant::engine::Dynamics> = if refine { Some(&sys) } else { None };
        spectrum_period(&track.trajectory, f.weight(), dynamics, RECURRENCE_THRESHOLD)
            .unwrap()
            .period()
            .unwrap()
    };
    for refine in [true, false] {
        let (coarse, fine) = (period(20, refine), period(10, refine));
        assert!((coarse - fine).abs() <= 1e-4 * fine, "refine={refine}: {coarse} vs {fine}");
    }
}

/// The Szegő coefficients lie outside the solvable class, so the same
/// initial data leave the manifold. With `a = 0.1` the departure is mild:
/// the relative fit residual oscillates with peaks near 6e-4.
#[test]
fn szego_control_leaves_the_manifold() {
    let f = CoefficientFamily::from_name("cubic_szego", None).unwrap();
    let sys = System::auto(&f, 48).unwrap();
    let track = track_manifold(&sys, f.weight(), &point(), 20.0, StepControl::fixed(1e-2, 10)).unwrap();
    assert!(!track.passed(1e-6));
    assert!(track.max_residual() > 1e-4, "{}", track.max_residual());
}
