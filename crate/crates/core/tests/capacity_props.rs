//! Structural properties of the capacity estimator: weak duality,
//! monotonicity, subadditivity, refinement behavior, near-additivity for
//! far-separated sets, and small-scale comparability of the Riesz and
//! Bessel kernels.

use wolffkit::capacity::{
    bessel_capacity, bessel_kernel, riesz_capacity, riesz_kernel_constant, CapacityBudget,
    CompactSet,
};

fn budget() -> CapacityBudget {
    CapacityBudget::default()
}

#[test]
fn monotone_in_the_set() {
    let small = CompactSet::ball(vec![0.0; 3], 1.0);
    let large = CompactSet::ball(vec![0.0; 3], 1.2);
    let e_small = riesz_capacity(&small, 1.0, 2.0, 12, &budget()).unwrap();
    let e_large = riesz_capacity(&large, 1.0, 2.0, 12, &budget()).unwrap();
    assert!(
        e_small.upper <= e_large.upper * 1.05,
        "{} vs {}",
        e_small.upper,
        e_large.upper
    );
}

#[test]
fn subadditive_on_unions() {
    let b1 = CompactSet::ball(vec![0.0; 3], 1.0);
    let b2 = CompactSet::ball(vec![1.5, 0.0, 0.0], 1.0);
    let union = CompactSet::UnionOfBalls {
        balls: vec![(vec![0.0; 3], 1.0), (vec![1.5, 0.0, 0.0], 1.0)],
    };
    let e1 = riesz_capacity(&b1, 1.0, 2.0, 12, &budget()).unwrap();
    let e2 = riesz_capacity(&b2, 1.0, 2.0, 12, &budget()).unwrap();
    let eu = riesz_capacity(&union, 1.0, 2.0, 12, &budget()).unwrap();
    assert!(
        eu.upper <= (e1.upper + e2.upper) * 1.05,
        "union {} vs sum {}",
        eu.upper,
        e1.upper + e2.upper
    );
}

#[test]
fn refinement_never_inflates_the_upper_bound() {
    let ball = CompactSet::ball(vec![0.0; 3], 1.0);
    let coarse = riesz_capacity(&ball, 1.0, 2.0, 12, &budget()).unwrap();
    let fine = riesz_capacity(&ball, 1.0, 2.0, 16, &budget()).unwrap();
    assert!(
        fine.upper <= coarse.upper * 1.10,
        "fine {} vs coarse {}",
        fine.upper,
        coarse.upper
    );
    assert!(fine.lower <= fine.upper && coarse.lower <= coarse.upper);
}

#[test]
fn far_separated_balls_nearly_additive() {
    // two balls 100 radii apart: estimate within 15% of the sum of parts
    let r = 0.5;
    let b1 = CompactSet::ball(vec![0.0; 3], r);
    let b2 = CompactSet::ball(vec![100.0 * r, 0.0, 0.0], r);
    let union = CompactSet::UnionOfBalls {
        balls: vec![(vec![0.0; 3], r), (vec![100.0 * r, 0.0, 0.0], r)],
    };
    let e1 = riesz_capacity(&b1, 1.0, 2.0, 10, &budget()).unwrap();
    let e2 = riesz_capacity(&b2, 1.0, 2.0, 10, &budget()).unwrap();
    // disjoint components get one lattice each at this resolution
    let eu = riesz_capacity(&union, 1.0, 2.0, 10, &budget()).unwrap();
    let sum = e1.upper + e2.upper;
    assert!(
        (eu.upper / sum - 1.0).abs() < 0.15,
        "union {} vs sum {sum}",
        eu.upper
    );
}

#[test]
fn bessel_matches_riesz_at_small_scales() {
    // kernel-level: G_alpha(x) / (c |x|^(alpha-N)) -> 1 for small |x|
    for &(n, alpha) in &[(3usize, 1.0f64), (3, 2.0)] {
        let c = riesz_kernel_constant(n, alpha);
        for &z in &[0.01, 0.02] {
            let ratio = bessel_kernel(n, alpha, z) / (c * z.powf(alpha - n as f64));
            assert!((ratio - 1.0).abs() < 0.05, "kernel ratio {ratio} at z={z}");
        }
    }
    // capacity-level: small balls see only the matching local kernel
    let small = CompactSet::ball(vec![0.0; 3], 0.05);
    let er = riesz_capacity(&small, 1.0, 2.0, 10, &budget()).unwrap();
    let eb = bessel_capacity(&small, 1.0, 2.0, 10, &budget()).unwrap();
    let ratio = eb.upper / er.upper;
    assert!(
        (1.0 / 3.0..=3.0).contains(&ratio),
        "bessel/riesz capacity ratio {ratio}"
    );
    assert!(eb.lower <= eb.upper);
}

#[test]
fn zero_capacity_trend_for_shrinking_balls() {
    // upper bound decreases toward zero under shrinking radius (N - ap > 0)
    let mut prev = f64::INFINITY;
    for &r in &[1.0, 0.3, 0.1] {
        let e = riesz_capacity(&CompactSet::ball(vec![0.0; 3], r), 1.0, 2.0, 10, &budget()).unwrap();
        assert!(e.upper < prev);
        prev = e.upper;
    }
}
