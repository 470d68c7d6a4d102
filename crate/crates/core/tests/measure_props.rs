//! Property tests for the measure representations: monotone right-continuous
//! ball masses, profile/ball-mass agreement, and restriction consistency.

use proptest::prelude::*;
use wolffkit::measure::Measure;

fn atomic_measure() -> impl Strategy<Value = Measure> {
    (
        prop::collection::vec(
            (prop::collection::vec(-3.0f64..3.0, 3), 0.0f64..2.0),
            1..8,
        ),
    )
        .prop_map(|(atoms,)| {
            let (points, weights): (Vec<_>, Vec<_>) = atoms.into_iter().unzip();
            Measure::atomic(points, weights).unwrap()
        })
}

fn radial_measure() -> impl Strategy<Value = Measure> {
    (
        prop::collection::vec((0.01f64..2.0, 0.0f64..1.0), 1..6),
    )
        .prop_map(|(steps,)| {
            let mut radii: Vec<f64> = steps.iter().map(|(r, _)| *r).collect();
            radii.sort_by(f64::total_cmp);
            let mut acc = 0.0;
            let cumulative: Vec<f64> = steps
                .iter()
                .map(|(_, d)| {
                    acc += d;
                    acc
                })
                .collect();
            Measure::radial(vec![0.0; 3], radii, cumulative).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ball_mass_monotone_and_exhaustive(mu in atomic_measure(),
                                         x in prop::collection::vec(-2.0f64..2.0, 3),
                                         mut radii in prop::collection::vec(0.0f64..12.0, 6)) {
        radii.sort_by(f64::total_cmp);
        let mut prev = 0.0;
        for &r in &radii {
            let m = mu.ball_mass(&x, r);
            prop_assert!(m >= prev);
            prev = m;
        }
        // exhaustion: a huge ball sees the whole mass
        let total = mu.ball_mass(&x, 1e6);
        prop_assert!((total - mu.total_mass()).abs() <= 1e-12 * mu.total_mass().max(1e-300));
    }

    #[test]
    fn ball_mass_right_continuous_at_breakpoints(mu in atomic_measure(),
                                                 x in prop::collection::vec(-2.0f64..2.0, 3)) {
        for (r, v) in mu.distance_profile(&x).unwrap() {
            // value at the breakpoint equals the profile (closed balls)
            prop_assert_eq!(mu.ball_mass(&x, r), v);
            // approaching from the right changes nothing up to the next atom
            let eps = 1e-9 * (1.0 + r);
            prop_assert!(mu.ball_mass(&x, r + eps) >= v);
        }
    }

    #[test]
    fn restrict_mass_equals_ball_mass(mu in atomic_measure(),
                                      x in prop::collection::vec(-2.0f64..2.0, 3),
                                      t in 0.01f64..6.0) {
        let restricted = mu.restrict(&x, t).unwrap();
        prop_assert_eq!(restricted.total_mass(), mu.ball_mass(&x, t));
        // restriction never grows anywhere
        let y = [0.3, -0.2, 0.1];
        for &rho in &[0.5, 1.0, 3.0] {
            prop_assert!(restricted.ball_mass(&y, rho) <= mu.ball_mass(&y, rho) + 1e-15);
        }
    }

    #[test]
    fn radial_profile_matches_ball_mass(mu in radial_measure(), rho in 0.0f64..3.0) {
        let center = [0.0; 3];
        let profile = mu.profile(&center).unwrap();
        prop_assert!((profile.eval(rho) - mu.ball_mass(&center, rho)).abs() <= 1e-12);
        prop_assert!((profile.total() - mu.total_mass()).abs() <= 1e-12);
    }

    #[test]
    fn radial_restrict_concentric(mu in radial_measure(), t in 0.05f64..3.0) {
        let center = vec![0.0; 3];
        let restricted = mu.restrict(&center, t).unwrap();
        prop_assert!((restricted.total_mass() - mu.ball_mass(&center, t)).abs() <= 1e-12);
    }
}
