//! Euclidean helpers: distances, ball volumes, sphere areas and spherical
//! cap fractions in general dimension N (2 ≤ N ≤ 6 throughout the toolkit).

use crate::special::ln_gamma;

pub const MAX_DIM: usize = 6;

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Volume of the unit ball in dimension `n`: pi^(n/2) / Gamma(n/2 + 1).
pub fn unit_ball_volume(n: usize) -> f64 {
    let nf = n as f64;
    ((nf / 2.0) * std::f64::consts::PI.ln() - ln_gamma(nf / 2.0 + 1.0)).exp()
}

/// Surface area of the unit sphere S^{n-1} in R^n: 2 pi^(n/2) / Gamma(n/2).
pub fn unit_sphere_area(n: usize) -> f64 {
    let nf = n as f64;
    (std::f64::consts::LN_2 + (nf / 2.0) * std::f64::consts::PI.ln() - ln_gamma(nf / 2.0)).exp()
}

/// Fraction of the sphere of radius `s` centered at the origin that lies
/// inside the closed ball B_rho(x) with |x| = d. Used to evaluate ball
/// masses of rotationally invariant measures away from their center.
///
/// The cap is { z : |z| = s, |z - x| <= rho }, cut at the polar angle
/// theta* with cos(theta*) = (s^2 + d^2 - rho^2) / (2 s d).
pub fn sphere_cap_fraction(n: usize, s: f64, d: f64, rho: f64) -> f64 {
    if s <= 0.0 {
        // degenerate sphere: a point at the origin
        return if d <= rho { 1.0 } else { 0.0 };
    }
    if d == 0.0 {
        return if s <= rho { 1.0 } else { 0.0 };
    }
    let c = (s * s + d * d - rho * rho) / (2.0 * s * d);
    if c <= -1.0 {
        return 1.0;
    }
    if c >= 1.0 {
        return 0.0;
    }
    match n {
        1 => {
            // S^0 = two points at +-s; the cap keeps the one facing x,
            // plus the far one when rho >= d + s (handled by c <= -1).
            0.5
        }
        2 => c.acos() / std::f64::consts::PI,
        3 => (1.0 - c) / 2.0,
        _ => {
            // fraction = int_c^1 (1-u^2)^((n-3)/2) du / int_{-1}^1 (...) du;
            // substitute u = sin(t) to keep the integrand smooth at u = 1
            let e = n as f64 - 2.0;
            let f = |t: f64| t.cos().powf(e);
            let half_pi = std::f64::consts::FRAC_PI_2;
            gauss_legendre_32(c.asin(), half_pi, f) / gauss_legendre_32(-half_pi, half_pi, f)
        }
    }
}

/// 32-point Gauss-Legendre on [a, b].
pub fn gauss_legendre_32(a: f64, b: f64, f: impl Fn(f64) -> f64) -> f64 {
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut acc = 0.0;
    for (&x, &w) in GL32_NODES.iter().zip(GL32_WEIGHTS.iter()) {
        acc += w * (f(mid + half * x) + f(mid - half * x));
    }
    acc * half
}

// Abscissas/weights for the positive half of the 32-point Gauss-Legendre
// rule on [-1, 1] (Abramowitz & Stegun 25.4.30).
const GL32_NODES: [f64; 16] = [
    0.048_307_665_687_738_32,
    0.144_471_961_582_796_5,
    0.239_287_362_252_137_07,
    0.331_868_602_282_127_65,
    0.421_351_276_130_635_3,
    0.506_899_908_932_229_4,
    0.587_715_757_240_762_3,
    0.663_044_266_930_215_2,
    0.732_182_118_740_289_7,
    0.794_483_795_967_942_4,
    0.849_367_613_732_569_97,
    0.896_321_155_766_052_1,
    0.934_906_075_937_739_7,
    0.964_762_255_587_506_4,
    0.985_611_511_545_268_3,
    0.997_263_861_849_481_6,
];
const GL32_WEIGHTS: [f64; 16] = [
    0.096_540_088_514_727_8,
    0.095_638_720_079_274_86,
    0.093_844_399_080_804_57,
    0.091_173_878_695_763_88,
    0.087_652_093_004_403_81,
    0.083_311_924_226_946_76,
    0.078_193_895_787_070_3,
    0.072_345_794_108_848_51,
    0.065_822_222_776_361_85,
    0.058_684_093_478_535_55,
    0.050_998_059_262_376_18,
    0.042_835_898_022_226_68,
    0.034_273_862_913_021_43,
    0.025_392_065_309_262_06,
    0.016_274_394_730_905_67,
    0.007_018_610_009_470_097,
];

/// Deterministic low-discrepancy points in the unit cube (Halton sequence,
/// prime bases per axis); used by the seeded condition samplers.
pub fn halton(index: usize, dim: usize) -> Vec<f64> {
    const PRIMES: [usize; 6] = [2, 3, 5, 7, 11, 13];
    (0..dim).map(|d| radical_inverse(index + 1, PRIMES[d])).collect()
}

fn radical_inverse(mut i: usize, base: usize) -> f64 {
    let inv = 1.0 / base as f64;
    let mut x = 0.0;
    let mut scale = inv;
    while i > 0 {
        x += (i % base) as f64 * scale;
        i /= base;
        scale *= inv;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ball_volumes_match_known_values() {
        assert!((unit_ball_volume(2) - std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_ball_volume(3) - 4.0 / 3.0 * std::f64::consts::PI).abs() < 1e-12);
        assert!((unit_sphere_area(3) - 4.0 * std::f64::consts::PI).abs() < 1e-12);
        // sphere area = d/dr of ball volume at r=1, i.e. N * V_N
        for n in 2..=6 {
            assert!((unit_sphere_area(n) - n as f64 * unit_ball_volume(n)).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_fraction_limits() {
        for n in 2..=6 {
            // ball far away misses the sphere
            assert_eq!(sphere_cap_fraction(n, 1.0, 10.0, 1.0), 0.0);
            // huge ball swallows the sphere
            assert_eq!(sphere_cap_fraction(n, 1.0, 2.0, 10.0), 1.0);
            // half-space case: d^2 = s^2 + rho^2 gives cos(theta*) ... not 1/2;
            // instead check rho = d with s small: plane through origin ~ half
            let f = sphere_cap_fraction(n, 1e-9, 1.0, 1.0);
            assert!((f - 0.5).abs() < 1e-6, "n={n} f={f}");
        }
    }

    #[test]
    fn cap_fraction_n3_closed_form() {
        // N=3: fraction = (1 - cos theta*)/2
        let (s, d, rho) = (1.0, 1.5, 1.2);
        let c = (s * s + d * d - rho * rho) / (2.0 * s * d);
        assert!((sphere_cap_fraction(3, s, d, rho) - (1.0 - c) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn halton_in_unit_cube() {
        for i in 0..100 {
            let p = halton(i, 3);
            assert!(p.iter().all(|&x| (0.0..1.0).contains(&x)));
        }
        // distinct consecutive points
        assert_ne!(halton(0, 2), halton(1, 2));
    }

    #[test]
    fn gauss_legendre_exact_on_polynomials() {
        let v = gauss_legendre_32(0.0, 2.0, |x| 3.0 * x * x);
        assert!((v - 8.0).abs() < 1e-12);
    }
}
