//! Radial mass profiles: the function rho -> mu(B_rho(x)) for a fixed
//! measure and base point, stored as a nondecreasing piecewise-linear
//! function with jumps. Every potential in this crate is an integral of
//! m(rho)^gamma * rho^(-delta-1), so a profile plus the pair (gamma, delta)
//! is enough to evaluate it in closed form segment by segment.
//!
//! Representation: pairs (r_i, v_i) with r_i nondecreasing and v_i
//! nondecreasing; m(rho) = 0 for rho < r_0, linear interpolation between
//! consecutive pairs with distinct radii, and a repeated radius encodes a
//! jump (the later value wins, so m is right-continuous, matching closed
//! balls). Beyond the last pair m is constant.

use crate::geom::gauss_legendre_32;

#[derive(Debug, Clone, PartialEq)]
pub struct MassProfile {
    radii: Vec<f64>,
    values: Vec<f64>,
}

/// Tolerance for the adaptive refinement of non-power segments.
const SEGMENT_REL_TOL: f64 = 1e-13;
const SEGMENT_MAX_DEPTH: u32 = 14;

impl MassProfile {
    /// Build from (radius, cumulative mass) pairs. Radii must be
    /// nonnegative and nondecreasing, values nonnegative and nondecreasing.
    pub fn new(radii: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(radii.len(), values.len());
        debug_assert!(radii.windows(2).all(|w| w[0] <= w[1]));
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1] + 1e-12 * w[0].abs()));
        debug_assert!(radii.iter().all(|&r| r >= 0.0));
        debug_assert!(values.iter().all(|&v| v >= 0.0));
        MassProfile { radii, values }
    }

    /// Pure step profile: mass jumps to `values[i]` at `radii[i]`.
    pub fn step(radii: Vec<f64>, values: Vec<f64>) -> Self {
        // encode each jump as a repeated radius
        let mut r = Vec::with_capacity(radii.len() * 2);
        let mut v = Vec::with_capacity(radii.len() * 2);
        let mut prev = 0.0;
        for (ri, vi) in radii.into_iter().zip(values) {
            r.push(ri);
            v.push(prev);
            r.push(ri);
            v.push(vi);
            prev = vi;
        }
        MassProfile::new(r, v)
    }

    pub fn empty() -> Self {
        MassProfile { radii: vec![], values: vec![] }
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0.0
    }

    pub fn total(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Largest radius carrying information; m is constant beyond it.
    pub fn support_radius(&self) -> f64 {
        self.radii.last().copied().unwrap_or(0.0)
    }

    /// The (breakpoint, cumulative mass) pairs, jumps collapsed to their
    /// right value.
    pub fn pairs(&self) -> Vec<(f64, f64)> {
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (&r, &v) in self.radii.iter().zip(&self.values) {
            match out.last_mut() {
                Some(last) if last.0 == r => last.1 = v,
                _ => out.push((r, v)),
            }
        }
        out
    }

    /// m(rho) with right-continuous jumps.
    pub fn eval(&self, rho: f64) -> f64 {
        let n = self.radii.len();
        if n == 0 || rho < self.radii[0] {
            return 0.0;
        }
        if rho >= self.radii[n - 1] {
            return self.values[n - 1];
        }
        // last index with radius <= rho
        let mut i = match self.radii.partition_point(|&r| r <= rho) {
            0 => return 0.0,
            k => k - 1,
        };
        // collapse repeated radii to the right value
        while i + 1 < n && self.radii[i + 1] == self.radii[i] {
            i += 1;
        }
        if i + 1 == n {
            return self.values[i];
        }
        let (r0, r1) = (self.radii[i], self.radii[i + 1]);
        let (v0, v1) = (self.values[i], self.values[i + 1]);
        if r1 == r0 {
            v1
        } else {
            v0 + (v1 - v0) * (rho - r0) / (r1 - r0)
        }
    }

    /// int_0^R m(rho)^gamma rho^(-delta-1) drho, gamma > 0, delta > 0.
    /// Returns +inf when the integral genuinely diverges (mass at the base
    /// point with a divergent head, or R = inf with delta <= 0).
    pub fn integrate_power(&self, gamma: f64, delta: f64, trunc: f64) -> f64 {
        self.integrate_power_between(gamma, delta, 0.0, trunc)
    }

    /// Same integrand over [from, trunc), accumulated segment by segment so
    /// the result is monotone in the profile masses with no cancellation.
    pub fn integrate_power_between(&self, gamma: f64, delta: f64, from: f64, trunc: f64) -> f64 {
        debug_assert!(gamma > 0.0 && delta > 0.0 && from >= 0.0);
        let n = self.radii.len();
        if n == 0 || trunc <= from {
            return 0.0;
        }
        let mut acc = 0.0;
        for i in 0..n - 1 {
            let (lo, hi) = (self.radii[i], self.radii[i + 1]);
            if lo >= trunc {
                break;
            }
            if hi == lo || hi <= from {
                continue;
            }
            let lo_c = lo.max(from);
            let hi_c = hi.min(trunc);
            let (m_lo_full, m_hi_full) = (self.values[i], self.values[i + 1]);
            let clip = |r: f64| m_lo_full + (m_hi_full - m_lo_full) * (r - lo) / (hi - lo);
            let m_lo = if lo_c == lo { m_lo_full } else { clip(lo_c) };
            let m_hi = if hi_c == hi { m_hi_full } else { clip(hi_c) };
            acc += segment_integral(gamma, delta, lo_c, hi_c, m_lo, m_hi);
            if !acc.is_finite() {
                return f64::INFINITY;
            }
        }
        // constant tail beyond the last breakpoint
        let r_last = self.radii[n - 1];
        let total = self.values[n - 1];
        if total > 0.0 && trunc > r_last.max(from) {
            let start = r_last.max(from);
            if start == 0.0 {
                return f64::INFINITY;
            }
            acc += total.powf(gamma) * power_integral(start, trunc, -delta - 1.0);
        }
        acc
    }

    /// sup over 0 < t < trunc of m(t)/t^e with e = N - alpha > 0.
    pub fn sup_ratio(&self, e: f64, trunc: f64) -> f64 {
        debug_assert!(e > 0.0);
        let n = self.radii.len();
        if n == 0 || trunc <= 0.0 {
            return 0.0;
        }
        let mut best: f64 = 0.0;
        let ratio = |m: f64, t: f64| if m == 0.0 { 0.0 } else { m / t.powf(e) };
        for i in 0..n {
            let r = self.radii[i];
            let v = self.values[i];
            if v == 0.0 {
                continue;
            }
            if r == 0.0 {
                // positive mass at arbitrarily small t
                return f64::INFINITY;
            }
            if r < trunc {
                best = best.max(ratio(v, r));
            }
        }
        // linear pieces can peak in the interior when e < 1
        if e < 1.0 {
            for i in 0..n.saturating_sub(1) {
                let (lo, hi) = (self.radii[i], self.radii[i + 1]);
                if hi == lo || lo >= trunc {
                    continue;
                }
                let (v0, v1) = (self.values[i], self.values[i + 1]);
                let b = (v1 - v0) / (hi - lo);
                if b <= 0.0 {
                    continue;
                }
                let a = v0 - b * lo; // m(t) = a + b t
                // d/dt (a + b t) t^-e = 0  =>  t* = a e / (b (1 - e))
                let t_star = a * e / (b * (1.0 - e));
                if t_star > lo && t_star < hi.min(trunc) {
                    best = best.max(ratio(self.eval(t_star), t_star));
                }
            }
        }
        // left limit at the truncation radius
        if trunc.is_finite() {
            let m = self.eval(trunc);
            if m > 0.0 {
                best = best.max(ratio(m, trunc));
            }
        }
        best
    }

    /// Scale all masses by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> MassProfile {
        MassProfile {
            radii: self.radii.clone(),
            values: self.values.iter().map(|v| v * factor).collect(),
        }
    }
}

/// int over [lo, hi) of m(rho)^gamma rho^(-delta-1), m linear from m_lo to m_hi.
fn segment_integral(gamma: f64, delta: f64, lo: f64, hi: f64, m_lo: f64, m_hi: f64) -> f64 {
    if m_hi == 0.0 {
        return 0.0;
    }
    if m_lo == m_hi {
        return m_lo.powf(gamma) * power_integral(lo, hi, -delta - 1.0);
    }
    let slope = (m_hi - m_lo) / (hi - lo);
    if lo == 0.0 {
        if m_lo > 0.0 {
            return f64::INFINITY; // divergent head: positive mass at the base point
        }
        // m = slope * rho exactly: a pure power
        return slope.powf(gamma) * power_integral(0.0, hi, gamma - delta - 1.0);
    }
    let f = |rho: f64| (m_lo + slope * (rho - lo)).powf(gamma) * rho.powf(-delta - 1.0);
    adaptive_gl(&f, lo, hi, SEGMENT_MAX_DEPTH)
}

/// int_a^b rho^e drho for 0 <= a < b <= inf; +inf when divergent.
pub fn power_integral(a: f64, b: f64, e: f64) -> f64 {
    debug_assert!(a >= 0.0 && b > a);
    if e == -1.0 {
        return if a == 0.0 || b.is_infinite() { f64::INFINITY } else { (b / a).ln() };
    }
    let k = e + 1.0;
    if b.is_infinite() {
        return if k < 0.0 { -a.powf(k) / k } else { f64::INFINITY };
    }
    if a == 0.0 {
        return if k > 0.0 { b.powf(k) / k } else { f64::INFINITY };
    }
    (b.powf(k) - a.powf(k)) / k
}

fn adaptive_gl(f: &impl Fn(f64) -> f64, a: f64, b: f64, depth: u32) -> f64 {
    let whole = gauss_legendre_32(a, b, f);
    let mid = 0.5 * (a + b);
    let halves = gauss_legendre_32(a, mid, f) + gauss_legendre_32(mid, b, f);
    if depth == 0 || (halves - whole).abs() <= SEGMENT_REL_TOL * halves.abs().max(1e-300) {
        halves
    } else {
        adaptive_gl(f, a, mid, depth - 1) + adaptive_gl(f, mid, b, depth - 1)
    }
}
