//! Nonnegative Radon measures in three concrete representations, with the
//! ball-mass query mu(B_rho(x)) as the central operation. Everything else
//! in the toolkit is driven by the radial profile rho -> mu(B_rho(x)).
//!
//! Representations:
//! - atomic: weighted points; ball masses are exact.
//! - radial: a center plus the cumulative function m(r) = mu(B_r(center))
//!   given as nondecreasing (breakpoint, mass) pairs, linearly interpolated;
//!   a repeated breakpoint encodes a jump (mass on a sphere). The first
//!   pair jumps from zero, so a single pair (0, w) is an atom at the center.
//! - grid_density: nonnegative cell densities on a uniform grid; ball
//!   masses count interior cells fully and weight boundary cells by a
//!   subsampled volume fraction.
//!
//! Balls are closed everywhere, which makes ball_mass right-continuous in
//! rho and puts boundary atoms inside.

use crate::error::{Result, WolffError};
use crate::geom::{self, dist};
use crate::grid::GridSpec;
use crate::profile::MassProfile;
use serde::{Deserialize, Serialize};

/// Subdivision factor per axis when estimating the inside-fraction of a
/// cell that straddles a ball boundary.
const OVERLAP_SUBSAMPLES: usize = 6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Measure {
    Atomic {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    Radial {
        center: Vec<f64>,
        breakpoints: Vec<f64>,
        cumulative_mass: Vec<f64>,
    },
    #[serde(rename = "grid")]
    GridDensity {
        origin: Vec<f64>,
        spacing: Vec<f64>,
        shape: Vec<usize>,
        cells: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedMeasure {
    pub pos: Measure,
    pub neg: Measure,
}

impl Measure {
    pub fn atomic(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(WolffError::InvalidMeasure("points/weights length mismatch".into()));
        }
        if let Some(d) = points.first().map(|p| p.len()) {
            if d == 0 || d > geom::MAX_DIM || points.iter().any(|p| p.len() != d) {
                return Err(WolffError::InvalidMeasure("inconsistent point dimension".into()));
            }
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(WolffError::InvalidMeasure("weights must be finite and >= 0".into()));
        }
        Ok(Measure::Atomic { points, weights })
    }

    pub fn dirac(point: Vec<f64>, weight: f64) -> Result<Self> {
        Measure::atomic(vec![point], vec![weight])
    }

    /// Empty measure of the given dimension.
    pub fn zero(dim: usize) -> Self {
        Measure::Atomic { points: vec![vec![0.0; dim]], weights: vec![0.0] }
    }

    pub fn radial(center: Vec<f64>, breakpoints: Vec<f64>, cumulative_mass: Vec<f64>) -> Result<Self> {
        if breakpoints.len() != cumulative_mass.len() || breakpoints.is_empty() {
            return Err(WolffError::InvalidMeasure("breakpoints/cumulative_mass mismatch or empty".into()));
        }
        if center.is_empty() || center.len() > geom::MAX_DIM {
            return Err(WolffError::InvalidMeasure("bad center dimension".into()));
        }
        if breakpoints.windows(2).any(|w| w[0] > w[1]) || breakpoints[0] < 0.0 {
            return Err(WolffError::InvalidMeasure("breakpoints must be nonnegative and nondecreasing".into()));
        }
        if cumulative_mass.windows(2).any(|w| w[0] > w[1]) || cumulative_mass[0] < 0.0 {
            return Err(WolffError::InvalidMeasure("cumulative mass must be nonnegative and nondecreasing".into()));
        }
        if cumulative_mass.iter().any(|m| !m.is_finite()) {
            return Err(WolffError::InvalidMeasure("cumulative mass must be finite".into()));
        }
        Ok(Measure::Radial { center, breakpoints, cumulative_mass })
    }

    pub fn grid_density(grid: GridSpec, cells: Vec<f64>) -> Result<Self> {
        if cells.len() != grid.len() {
            return Err(WolffError::InvalidMeasure("cell count does not match grid shape".into()));
        }
        if cells.iter().any(|&c| !(c >= 0.0) || !c.is_finite()) {
            return Err(WolffError::InvalidMeasure("densities must be finite and >= 0".into()));
        }
        Ok(Measure::GridDensity {
            origin: grid.origin,
            spacing: grid.spacing,
            shape: grid.shape,
            cells,
        })
    }

    /// Radially mollified point mass: total `mass` spread over B_h(center)
    /// with the bump profile (1 - (r/h)^2)^4, represented as a radial
    /// measure with `resolution` linear pieces. Exact cumulative values at
    /// the sampled radii.
    pub fn radial_bump(center: Vec<f64>, h: f64, mass: f64, resolution: usize) -> Result<Self> {
        if !(h > 0.0) || !(mass >= 0.0) {
            return Err(WolffError::InvalidMeasure("bump needs h > 0 and mass >= 0".into()));
        }
        let n_dim = center.len();
        let k = resolution.max(8);
        let full = bump_radial_cdf(1.0, n_dim);
        let mut breaks = Vec::with_capacity(k);
        let mut cum = Vec::with_capacity(k);
        for i in 1..=k {
            let t = i as f64 / k as f64;
            breaks.push(t * h);
            cum.push(mass * bump_radial_cdf(t, n_dim) / full);
        }
        Measure::radial(center, breaks, cum)
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Atomic { points, .. } => points.first().map_or(0, |p| p.len()),
            Measure::Radial { center, .. } => center.len(),
            Measure::GridDensity { origin, .. } => origin.len(),
        }
    }

    pub fn grid(&self) -> Option<GridSpec> {
        match self {
            Measure::GridDensity { origin, spacing, shape, .. } => Some(GridSpec {
                origin: origin.clone(),
                spacing: spacing.clone(),
                shape: shape.clone(),
            }),
            _ => None,
        }
    }

    pub fn total_mass(&self) -> f64 {
        match self {
            Measure::Atomic { weights, .. } => weights.iter().sum(),
            Measure::Radial { cumulative_mass, .. } => *cumulative_mass.last().unwrap_or(&0.0),
            Measure::GridDensity { cells, .. } => {
                let vol = self.grid().map_or(0.0, |g| g.cell_volume());
                cells.iter().sum::<f64>() * vol
            }
        }
    }

    /// Smallest known enclosing sphere of the support: (center, radius).
    /// None for the zero measure.
    pub fn support_bound(&self) -> Option<(Vec<f64>, f64)> {
        match self {
            Measure::Atomic { points, weights } => {
                let live: Vec<&Vec<f64>> = points
                    .iter()
                    .zip(weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(p, _)| p)
                    .collect();
                let first = live.first()?;
                let d = first.len();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for p in &live {
                    for a in 0..d {
                        lo[a] = lo[a].min(p[a]);
                        hi[a] = hi[a].max(p[a]);
                    }
                }
                let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
                let radius = live.iter().map(|p| dist(p, &center)).fold(0.0, f64::max);
                Some((center, radius))
            }
            Measure::Radial { center, breakpoints, cumulative_mass } => {
                if *cumulative_mass.last().unwrap_or(&0.0) == 0.0 {
                    return None;
                }
                Some((center.clone(), *breakpoints.last().unwrap()))
            }
            Measure::GridDensity { cells, .. } => {
                let grid = self.grid()?;
                let d = grid.dim();
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                let mut any = false;
                for (i, &c) in cells.iter().enumerate() {
                    if c > 0.0 {
                        any = true;
                        let idx = grid.unflatten(i);
                        for a in 0..d {
                            let cell_lo = grid.origin[a] + idx[a] as f64 * grid.spacing[a];
                            lo[a] = lo[a].min(cell_lo);
                            hi[a] = hi[a].max(cell_lo + grid.spacing[a]);
                        }
                    }
                }
                if !any {
                    return None;
                }
                let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
                let radius = lo
                    .iter()
                    .zip(&hi)
                    .map(|(l, h)| (h - l) * 0.5)
                    .map(|e| e * e)
                    .sum::<f64>()
                    .sqrt();
                Some((center, radius))
            }
        }
    }

    /// mu(closed ball B_rho(x)).
    pub fn ball_mass(&self, x: &[f64], rho: f64) -> f64 {
        debug_assert!(rho >= 0.0);
        match self {
            Measure::Atomic { points, weights } => {
                // sum in distance order, matching the profile's running sum
                // bit for bit
                let mut hits: Vec<(f64, f64)> = points
                    .iter()
                    .zip(weights)
                    .filter(|(p, &w)| w > 0.0 && dist(p, x) <= rho)
                    .map(|(p, &w)| (dist(p, x), w))
                    .collect();
                hits.sort_by(|a, b| a.0.total_cmp(&b.0));
                hits.iter().map(|(_, w)| w).sum()
            }
            Measure::Radial { center, .. } => {
                if x == center.as_slice() {
                    self.center_profile().eval(rho)
                } else {
                    self.radial_offcenter_ball_mass(dist(x, center), rho)
                }
            }
            Measure::GridDensity { cells, .. } => {
                let grid = self.grid().unwrap();
                let vol = grid.cell_volume();
                let mut acc = 0.0;
                for (i, &c) in cells.iter().enumerate() {
                    if c == 0.0 {
                        continue;
                    }
                    acc += c * vol * cell_ball_fraction(&grid, i, x, rho);
                }
                acc
            }
        }
    }

    /// The step/piecewise-linear profile rho -> mu(B_rho(x)) where it is
    /// available in closed form: atomic measures anywhere, radial measures
    /// at their center. Grid densities and off-center radial measures must
    /// go through the quadrature path.
    pub fn profile(&self, x: &[f64]) -> Result<MassProfile> {
        match self {
            Measure::Atomic { points, weights } => {
                let mut pairs: Vec<(f64, f64)> = points
                    .iter()
                    .zip(weights)
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(p, &w)| (dist(p, x), w))
                    .collect();
                if pairs.is_empty() {
                    return Ok(MassProfile::empty());
                }
                pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
                // merge equal distances, accumulate mass
                let mut radii = Vec::with_capacity(pairs.len());
                let mut cum = Vec::with_capacity(pairs.len());
                let mut running = 0.0;
                for (r, w) in pairs {
                    running += w;
                    if radii.last() == Some(&r) {
                        *cum.last_mut().unwrap() = running;
                    } else {
                        radii.push(r);
                        cum.push(running);
                    }
                }
                Ok(MassProfile::step(radii, cum))
            }
            Measure::Radial { center, .. } => {
                if x == center.as_slice() {
                    Ok(self.center_profile())
                } else {
                    Err(WolffError::Unsupported(
                        "radial measure profile away from its center".into(),
                    ))
                }
            }
            Measure::GridDensity { .. } => Err(WolffError::Unsupported(
                "grid density has no closed-form profile; use the quadrature path".into(),
            )),
        }
    }

    /// The sorted (breakpoint, cumulative mass) pairs of rho -> mu(B_rho(x)).
    pub fn distance_profile(&self, x: &[f64]) -> Result<Vec<(f64, f64)>> {
        Ok(self.profile(x)?.pairs())
    }

    fn center_profile(&self) -> MassProfile {
        match self {
            Measure::Radial { breakpoints, cumulative_mass, .. } => {
                if cumulative_mass.first().copied().unwrap_or(0.0) > 0.0 {
                    // encode the initial jump from zero
                    let mut r = Vec::with_capacity(breakpoints.len() + 1);
                    let mut v = Vec::with_capacity(breakpoints.len() + 1);
                    r.push(breakpoints[0]);
                    v.push(0.0);
                    r.extend_from_slice(breakpoints);
                    v.extend_from_slice(cumulative_mass);
                    MassProfile::new(r, v)
                } else {
                    MassProfile::new(breakpoints.clone(), cumulative_mass.clone())
                }
            }
            _ => unreachable!("center_profile is only called on radial measures"),
        }
    }

    /// Ball mass of a radial measure about a point at distance d from its
    /// center: integrate the shell masses against the sphere cap fraction.
    fn radial_offcenter_ball_mass(&self, d: f64, rho: f64) -> f64 {
        let n = self.dim();
        let profile = self.center_profile();
        let mut acc = 0.0;
        let pairs = profile.pairs();
        let mut prev: Option<(f64, f64)> = None;
        for &(r, v) in &pairs {
            match prev {
                Some((pr, pv)) => {
                    if r > pr && v > pv {
                        // linear shell band on [pr, r]
                        let rate = (v - pv) / (r - pr);
                        acc += shell_band_mass(n, pr, r, rate, d, rho);
                    }
                }
                None => {
                    // jump at the first pair: mass on the sphere of radius r
                    if v > 0.0 {
                        acc += v * geom::sphere_cap_fraction(n, r, d, rho);
                    }
                }
            }
            prev = Some((r, v));
        }
        acc
    }

    /// chi_{B_t(center)} mu.
    pub fn restrict(&self, center: &[f64], t: f64) -> Result<Measure> {
        if !(t > 0.0) {
            return Err(WolffError::invalid_param("t", "restriction radius must be positive"));
        }
        match self {
            Measure::Atomic { points, weights } => {
                // keep atoms ordered by distance from the restriction center
                // so total_mass sums in the same order as ball_mass
                let mut kept: Vec<(f64, Vec<f64>, f64)> = points
                    .iter()
                    .zip(weights)
                    .filter(|(p, &w)| w > 0.0 && dist(p, center) <= t)
                    .map(|(p, &w)| (dist(p, center), p.clone(), w))
                    .collect();
                if kept.is_empty() {
                    return Ok(Measure::zero(self.dim()));
                }
                kept.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (pts, ws) = kept.into_iter().map(|(_, p, w)| (p, w)).unzip();
                Measure::atomic(pts, ws)
            }
            Measure::Radial { center: c, breakpoints, cumulative_mass } => {
                if center != c.as_slice() {
                    return Err(WolffError::Unsupported(
                        "restricting a radial measure to a non-concentric ball".into(),
                    ));
                }
                let m_t = self.ball_mass(center, t);
                let mut br = Vec::new();
                let mut cm = Vec::new();
                for (&b, &m) in breakpoints.iter().zip(cumulative_mass) {
                    if b <= t {
                        br.push(b);
                        cm.push(m.min(m_t));
                    }
                }
                if br.last() != Some(&t) {
                    br.push(t);
                    cm.push(m_t);
                }
                Measure::radial(c.clone(), br, cm)
            }
            Measure::GridDensity { cells, .. } => {
                let grid = self.grid().unwrap();
                let new_cells: Vec<f64> = cells
                    .iter()
                    .enumerate()
                    .map(|(i, &cv)| {
                        if cv == 0.0 {
                            0.0
                        } else {
                            cv * cell_ball_fraction(&grid, i, center, t)
                        }
                    })
                    .collect();
                Measure::grid_density(grid, new_cells)
            }
        }
    }

    /// Mollification phi_h * mu sampled on `grid`: a grid density whose
    /// bump per source atom/cell/shell is normalized on the target lattice,
    /// so total mass is preserved to rounding.
    pub fn mollify(&self, bandwidth: f64, grid: &GridSpec) -> Result<Measure> {
        if !(bandwidth > 0.0) {
            return Err(WolffError::invalid_param("bandwidth", "must be positive"));
        }
        if grid.dim() != self.dim() {
            return Err(WolffError::invalid_param("grid", "dimension mismatch with measure"));
        }
        if grid.spacing.iter().any(|&s| s > bandwidth) {
            return Err(WolffError::UnderResolved(format!(
                "grid spacing {:?} exceeds bandwidth {bandwidth}",
                grid.spacing
            )));
        }
        if let Some((c, r)) = self.support_bound() {
            let margin: Vec<f64> = (0..grid.dim())
                .map(|a| {
                    let lo = grid.origin[a];
                    let hi = grid.origin[a] + grid.spacing[a] * grid.shape[a] as f64;
                    (c[a] - r - bandwidth - lo).min(hi - (c[a] + r + bandwidth))
                })
                .collect();
            if margin.iter().any(|&m| m < -1e-12) {
                return Err(WolffError::invalid_param(
                    "grid",
                    "grid must cover the support expanded by the bandwidth",
                ));
            }
        }
        let mut cells = vec![0.0; grid.len()];
        match self {
            Measure::Atomic { points, weights } => {
                for (p, &w) in points.iter().zip(weights) {
                    if w > 0.0 {
                        deposit_bump(grid, &mut cells, p, bandwidth, w);
                    }
                }
            }
            Measure::GridDensity { cells: src, .. } => {
                let src_grid = self.grid().unwrap();
                let vol = src_grid.cell_volume();
                for (i, &c) in src.iter().enumerate() {
                    if c > 0.0 {
                        deposit_bump(grid, &mut cells, &src_grid.cell_center(i), bandwidth, c * vol);
                    }
                }
            }
            Measure::Radial { center, .. } => {
                let profile = self.center_profile();
                deposit_radial_bump(grid, &mut cells, center, &profile, bandwidth, self.dim());
            }
        }
        Measure::grid_density(grid.clone(), cells)
    }

    /// Scale all masses by a nonnegative factor.
    pub fn scaled(&self, factor: f64) -> Measure {
        assert!(factor >= 0.0);
        match self.clone() {
            Measure::Atomic { points, weights } => Measure::Atomic {
                points,
                weights: weights.into_iter().map(|w| w * factor).collect(),
            },
            Measure::Radial { center, breakpoints, cumulative_mass } => Measure::Radial {
                center,
                breakpoints,
                cumulative_mass: cumulative_mass.into_iter().map(|m| m * factor).collect(),
            },
            Measure::GridDensity { origin, spacing, shape, cells } => Measure::GridDensity {
                origin,
                spacing,
                shape,
                cells: cells.into_iter().map(|c| c * factor).collect(),
            },
        }
    }

    /// Source particles (point, mass) for the bulk field evaluator.
    pub fn particles(&self) -> Vec<(Vec<f64>, f64)> {
        match self {
            Measure::Atomic { points, weights } => points
                .iter()
                .zip(weights)
                .filter(|(_, &w)| w > 0.0)
                .map(|(p, &w)| (p.clone(), w))
                .collect(),
            Measure::GridDensity { cells, .. } => {
                let grid = self.grid().unwrap();
                let vol = grid.cell_volume();
                cells
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c > 0.0)
                    .map(|(i, &c)| (grid.cell_center(i), c * vol))
                    .collect()
            }
            Measure::Radial { .. } => Vec::new(),
        }
    }
}

impl SignedMeasure {
    pub fn new(pos: Measure, neg: Measure) -> Result<Self> {
        if pos.dim() != neg.dim() {
            return Err(WolffError::InvalidMeasure("pos/neg dimension mismatch".into()));
        }
        Ok(SignedMeasure { pos, neg })
    }

    pub fn total_variation(&self) -> f64 {
        self.pos.total_mass() + self.neg.total_mass()
    }

    /// |mu| = pos + neg, merged into one nonnegative measure. Supported when
    /// the two parts share a representation that can be concatenated.
    pub fn abs(&self) -> Result<Measure> {
        match (&self.pos, &self.neg) {
            (p, n) if n.total_mass() == 0.0 => Ok(p.clone()),
            (p, n) if p.total_mass() == 0.0 => Ok(n.clone()),
            (
                Measure::Atomic { points: p1, weights: w1 },
                Measure::Atomic { points: p2, weights: w2 },
            ) => {
                let mut pts = p1.clone();
                pts.extend_from_slice(p2);
                let mut ws = w1.clone();
                ws.extend_from_slice(w2);
                Measure::atomic(pts, ws)
            }
            (
                Measure::GridDensity { origin, spacing, shape, cells: c1 },
                Measure::GridDensity { origin: o2, spacing: s2, shape: sh2, cells: c2 },
            ) if origin == o2 && spacing == s2 && shape == sh2 => Measure::grid_density(
                GridSpec { origin: origin.clone(), spacing: spacing.clone(), shape: shape.clone() },
                c1.iter().zip(c2).map(|(a, b)| a + b).collect(),
            ),
            _ => Err(WolffError::Unsupported(
                "|mu| for mixed representations; convert one part first".into(),
            )),
        }
    }
}

/// Fraction of cell `flat` inside the closed ball B_rho(x): 1 for cells
/// whose far corner is inside, 0 for cells the ball misses, subsampled
/// midpoint fraction for straddling cells.
fn cell_ball_fraction(grid: &GridSpec, flat: usize, x: &[f64], rho: f64) -> f64 {
    let idx = grid.unflatten(flat);
    let d = grid.dim();
    let mut near = 0.0;
    let mut far = 0.0;
    for a in 0..d {
        let lo = grid.origin[a] + idx[a] as f64 * grid.spacing[a];
        let hi = lo + grid.spacing[a];
        let n = if x[a] < lo {
            lo - x[a]
        } else if x[a] > hi {
            x[a] - hi
        } else {
            0.0
        };
        let f = (x[a] - lo).abs().max((x[a] - hi).abs());
        near += n * n;
        far += f * f;
    }
    if far.sqrt() <= rho {
        return 1.0;
    }
    if near.sqrt() > rho {
        return 0.0;
    }
    let k = OVERLAP_SUBSAMPLES;
    let total = k.pow(d as u32);
    let mut inside = 0usize;
    let mut sub = vec![0usize; d];
    for _ in 0..total {
        let mut acc = 0.0;
        for a in 0..d {
            let lo = grid.origin[a] + idx[a] as f64 * grid.spacing[a];
            let c = lo + (sub[a] as f64 + 0.5) * grid.spacing[a] / k as f64;
            acc += (c - x[a]) * (c - x[a]);
        }
        if acc.sqrt() <= rho {
            inside += 1;
        }
        // odometer increment
        for a in (0..d).rev() {
            sub[a] += 1;
            if sub[a] < k {
                break;
            }
            sub[a] = 0;
        }
    }
    inside as f64 / total as f64
}

/// The compactly supported bump (1 - t^2)^4 on [0, 1]; radial CDF
/// int_0^t (1-s^2)^4 s^(N-1) ds in closed form.
fn bump_radial_cdf(t: f64, n_dim: usize) -> f64 {
    let t = t.clamp(0.0, 1.0);
    let n = n_dim as f64;
    // (1-s^2)^4 = sum_k binom(4,k) (-1)^k s^(2k)
    const BINOM: [f64; 5] = [1.0, -4.0, 6.0, -4.0, 1.0];
    (0..5).map(|k| BINOM[k] * t.powf(2.0 * k as f64 + n) / (2.0 * k as f64 + n)).sum()
}

fn bump_value(t2: f64) -> f64 {
    // t2 = (|z|/h)^2
    if t2 >= 1.0 {
        0.0
    } else {
        let u = 1.0 - t2;
        u * u * u * u
    }
}

/// Add a mass-`w` bump centered at `p` to the target cells; the bump is
/// normalized by its own lattice sum so the deposited mass is exactly `w`.
fn deposit_bump(grid: &GridSpec, cells: &mut [f64], p: &[f64], h: f64, w: f64) {
    let d = grid.dim();
    // index window per axis
    let mut lo = vec![0usize; d];
    let mut hi = vec![0usize; d];
    for a in 0..d {
        let i_lo = ((p[a] - h - grid.origin[a]) / grid.spacing[a]).floor().max(0.0) as usize;
        let i_hi = (((p[a] + h - grid.origin[a]) / grid.spacing[a]).ceil() as usize)
            .min(grid.shape[a]);
        lo[a] = i_lo.min(grid.shape[a]);
        hi[a] = i_hi;
    }
    if (0..d).any(|a| lo[a] >= hi[a]) {
        return;
    }
    let mut hits: Vec<(usize, f64)> = Vec::new();
    let mut idx = lo.clone();
    let h2 = h * h;
    'outer: loop {
        let mut t2 = 0.0;
        for a in 0..d {
            let c = grid.origin[a] + (idx[a] as f64 + 0.5) * grid.spacing[a];
            t2 += (c - p[a]) * (c - p[a]);
        }
        let v = bump_value(t2 / h2);
        if v > 0.0 {
            hits.push((grid.flatten(&idx), v));
        }
        for a in (0..d).rev() {
            idx[a] += 1;
            if idx[a] < hi[a] {
                continue 'outer;
            }
            idx[a] = lo[a];
            if a == 0 {
                break 'outer;
            }
        }
    }
    // the lattice sum replaces the continuum normalization constant, so each
    // bump integrates to exactly w on this grid
    let vol = grid.cell_volume();
    let sum: f64 = hits.iter().map(|(_, v)| v).sum::<f64>() * vol;
    if sum <= 0.0 {
        return;
    }
    for (flat, v) in hits {
        cells[flat] += w * v / sum;
    }
}

/// Mollify a radial measure: spherical shells against the bump, averaged
/// over directions by Gauss quadrature.
fn deposit_radial_bump(
    grid: &GridSpec,
    cells: &mut [f64],
    center: &[f64],
    profile: &MassProfile,
    h: f64,
    n_dim: usize,
) {
    let pairs = profile.pairs();
    // spherical mean of the bump over the shell of radius s at center
    // distance d, via theta with weight sin^(n-2); smooth for all n >= 2
    let shell_avg = |s: f64, d: f64| -> f64 {
        if s == 0.0 {
            return bump_value(d * d / (h * h));
        }
        let e = n_dim as f64 - 2.0;
        let f = |th: f64| {
            let t2 = (d * d + s * s - 2.0 * d * s * th.cos()) / (h * h);
            bump_value(t2) * th.sin().powf(e)
        };
        // split at the bump's support edge if it crosses the shell
        let mut cuts = vec![0.0, std::f64::consts::PI];
        if d > 0.0 {
            let u_star = (d * d + s * s - h * h) / (2.0 * d * s);
            if u_star > -1.0 && u_star < 1.0 {
                cuts.insert(1, u_star.acos());
            }
        }
        let mut acc = 0.0;
        for w in cuts.windows(2) {
            acc += geom::gauss_legendre_32(w[0], w[1], f);
        }
        let norm = geom::gauss_legendre_32(0.0, std::f64::consts::PI, |th: f64| th.sin().powf(e));
        acc / norm
    };
    // each shell piece deposits like an atom: raw values then per-piece scaling
    let mut prev: Option<(f64, f64)> = None;
    let mut pieces: Vec<(f64, f64)> = Vec::new(); // (shell radius, mass)
    for &(r, v) in &pairs {
        match prev {
            None => {
                if v > 0.0 {
                    pieces.push((r, v));
                }
            }
            Some((pr, pv)) => {
                if v > pv {
                    // distribute the band mass over a few sampled shells
                    let band = v - pv;
                    let k = 4;
                    for j in 0..k {
                        let s = pr + (j as f64 + 0.5) * (r - pr) / k as f64;
                        pieces.push((s, band / k as f64));
                    }
                }
            }
        }
        prev = Some((r, v));
    }
    let vol = grid.cell_volume();
    for (s, w) in pieces {
        let mut hits: Vec<(usize, f64)> = Vec::new();
        for flat in 0..grid.len() {
            let c = grid.cell_center(flat);
            let d = dist(&c, center);
            if d > s + h || d < s - h {
                continue;
            }
            let v = shell_avg(s, d);
            if v > 0.0 {
                hits.push((flat, v));
            }
        }
        let sum: f64 = hits.iter().map(|(_, v)| v).sum::<f64>() * vol;
        if sum > 0.0 {
            for (flat, v) in hits {
                cells[flat] += w * v / sum;
            }
        }
    }
}

/// Mass of the band of shells [r0, r1] with linear rate dm/ds = `rate`
/// inside B_rho(x) at center distance d.
fn shell_band_mass(n: usize, r0: f64, r1: f64, rate: f64, d: f64, rho: f64) -> f64 {
    // integrand rate * capfrac(s); kinks where the cap degenerates
    let mut cuts = vec![r0, r1];
    for c in [(d - rho).abs(), d + rho, (rho - d).abs()] {
        if c > r0 && c < r1 {
            cuts.push(c);
        }
    }
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut acc = 0.0;
    for w in cuts.windows(2) {
        acc += geom::gauss_legendre_32(w[0], w[1], |s| {
            rate * geom::sphere_cap_fraction(n, s, d, rho)
        });
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dirac3(w: f64) -> Measure {
        Measure::dirac(vec![0.0, 0.0, 0.0], w).unwrap()
    }

    #[test]
    fn ball_mass_atomic() {
        let m = dirac3(1.0);
        assert_eq!(m.ball_mass(&[0.0, 0.0, 0.0], 1.0), 1.0);
        assert_eq!(m.ball_mass(&[3.0, 0.0, 0.0], 1.0), 0.0);
        // atom on the boundary of a closed ball counts
        assert_eq!(m.ball_mass(&[1.0, 0.0, 0.0], 1.0), 1.0);
        // rho = 0 at the atom
        assert_eq!(m.ball_mass(&[0.0, 0.0, 0.0], 0.0), 1.0);
    }

    #[test]
    fn ball_mass_radial_lookup() {
        // m(r) = min(r, 1) in N = 3
        let m = Measure::radial(vec![0.0; 3], vec![0.0, 1.0], vec![0.0, 1.0]).unwrap();
        assert!((m.ball_mass(&[0.0; 3], 0.5) - 0.5).abs() < 1e-15);
        assert!((m.ball_mass(&[0.0; 3], 2.0) - 1.0).abs() < 1e-15);
        assert_eq!(m.total_mass(), 1.0);
    }

    #[test]
    fn distance_profile_examples() {
        // two atoms at distances 1 and 2 with weights 0.5, 0.25
        let m = Measure::atomic(
            vec![vec![1.0, 0.0], vec![2.0, 0.0]],
            vec![0.5, 0.25],
        )
        .unwrap();
        let prof = m.distance_profile(&[0.0, 0.0]).unwrap();
        assert_eq!(prof, vec![(1.0, 0.5), (2.0, 0.75)]);
        // atom at x itself
        let d = Measure::dirac(vec![0.5, 0.5], 2.0).unwrap();
        assert_eq!(d.distance_profile(&[0.5, 0.5]).unwrap(), vec![(0.0, 2.0)]);
        // empty
        let z = Measure::zero(2);
        assert_eq!(z.distance_profile(&[0.0, 0.0]).unwrap(), vec![]);
    }

    #[test]
    fn distance_profile_matches_ball_mass_at_breakpoints() {
        let m = Measure::atomic(
            vec![vec![0.3, 0.1, 0.0], vec![-1.0, 0.4, 0.2], vec![0.9, -0.5, 0.1]],
            vec![0.2, 0.5, 1.3],
        )
        .unwrap();
        let x = [0.05, -0.02, 0.6];
        for (r, v) in m.distance_profile(&x).unwrap() {
            assert_eq!(m.ball_mass(&x, r), v);
        }
    }

    #[test]
    fn restrict_atomic_and_grid() {
        let d = dirac3(1.0);
        let same = d.restrict(&[0.0; 3], 1.0).unwrap();
        assert_eq!(same.total_mass(), 1.0);
        let gone = d.restrict(&[5.0, 0.0, 0.0], 1.0).unwrap();
        assert_eq!(gone.total_mass(), 0.0);

        // uniform density on B_2 restricted to B_1: mass ratio (1/2)^N
        let grid = GridSpec::cube(&[0.0; 3], 2.2, 44).unwrap();
        let cells: Vec<f64> = (0..grid.len())
            .map(|i| if geom::norm(&grid.cell_center(i)) <= 2.0 { 1.0 } else { 0.0 })
            .collect();
        let mu = Measure::grid_density(grid, cells).unwrap();
        let inner = mu.restrict(&[0.0; 3], 1.0).unwrap();
        // compare against exact ball volumes (the grid boundary of B_2 is
        // itself jagged, so compare both to analytic volumes)
        let v1 = geom::unit_ball_volume(3);
        let ratio = inner.total_mass() / mu.total_mass();
        assert!(
            (ratio - 0.125).abs() < 1e-3,
            "ratio {ratio} vs 0.125, masses {} {}",
            inner.total_mass(),
            mu.total_mass()
        );
        assert!((mu.total_mass() - v1 * 8.0).abs() / (v1 * 8.0) < 2e-2);
    }

    #[test]
    fn restrict_then_total_mass_equals_ball_mass_atomic() {
        let m = Measure::atomic(
            vec![vec![0.0, 0.0], vec![1.5, 0.0], vec![0.0, 3.0]],
            vec![1.0, 2.0, 4.0],
        )
        .unwrap();
        for &t in &[0.5, 1.5, 2.0, 3.5] {
            let r = m.restrict(&[0.0, 0.0], t).unwrap();
            assert_eq!(r.total_mass(), m.ball_mass(&[0.0, 0.0], t));
        }
    }

    #[test]
    fn mollify_unit_mass() {
        let d = dirac3(1.0);
        let grid = GridSpec::cube(&[0.0; 3], 0.3, 24).unwrap();
        let rho = d.mollify(0.1, &grid).unwrap();
        assert!((rho.total_mass() - 1.0).abs() < 1e-6);
        // zero measure stays zero
        let z = Measure::zero(3).mollify(0.1, &grid).unwrap();
        assert_eq!(z.total_mass(), 0.0);
    }

    #[test]
    fn mollify_two_separated_bumps() {
        let m = Measure::atomic(
            vec![vec![-0.5, 0.0, 0.0], vec![0.5, 0.0, 0.0]],
            vec![1.0, 1.0],
        )
        .unwrap();
        let grid = GridSpec::cube(&[0.0; 3], 0.75, 48).unwrap();
        let rho = m.mollify(0.05, &grid).unwrap();
        assert!((rho.total_mass() - 2.0).abs() < 1e-6);
        // each half carries one unit
        let left = rho.ball_mass(&[-0.5, 0.0, 0.0], 0.2);
        assert!((left - 1.0).abs() < 1e-6, "left bump mass {left}");
    }

    #[test]
    fn mollify_rejects_coarse_grid() {
        let d = dirac3(1.0);
        let grid = GridSpec::cube(&[0.0; 3], 1.0, 4).unwrap(); // spacing 0.5
        assert!(matches!(d.mollify(0.1, &grid), Err(WolffError::UnderResolved(_))));
    }

    #[test]
    fn mollify_commutes_with_weight_scaling() {
        let m = Measure::atomic(vec![vec![0.1, -0.05, 0.0]], vec![0.7]).unwrap();
        let grid = GridSpec::cube(&[0.0; 3], 0.4, 20).unwrap();
        let a = m.mollify(0.08, &grid).unwrap();
        // power-of-two factor: scaling is exact in floating point
        let b = m.scaled(4.0).mollify(0.08, &grid).unwrap();
        if let (Measure::GridDensity { cells: ca, .. }, Measure::GridDensity { cells: cb, .. }) =
            (&a, &b)
        {
            for (x, y) in ca.iter().zip(cb) {
                assert_eq!(*y, *x * 4.0);
            }
        } else {
            panic!("mollify must return grid densities");
        }
    }

    #[test]
    fn radial_offcenter_ball_mass_against_atoms() {
        // shell of mass 1 on the sphere of radius 1 (N=3): compare the cap
        // formula against a dense atomic sampling of the sphere
        let shell = Measure::radial(vec![0.0; 3], vec![1.0], vec![1.0]).unwrap();
        let k = 400;
        let mut pts = Vec::new();
        // Fibonacci sphere
        let phi = std::f64::consts::PI * (3.0 - 5.0_f64.sqrt());
        for i in 0..k {
            let y = 1.0 - 2.0 * (i as f64 + 0.5) / k as f64;
            let r = (1.0 - y * y).sqrt();
            let th = phi * i as f64;
            pts.push(vec![r * th.cos(), y, r * th.sin()]);
        }
        let atoms = Measure::atomic(pts, vec![1.0 / k as f64; k]).unwrap();
        let x = [1.3, 0.2, -0.4];
        for &rho in &[0.5, 0.9, 1.4, 2.0] {
            let a = shell.ball_mass(&x, rho);
            let b = atoms.ball_mass(&x, rho);
            assert!((a - b).abs() < 0.02, "rho={rho}: cap {a} vs sampled {b}");
        }
    }

    #[test]
    fn radial_bump_mass_and_support() {
        let m = Measure::radial_bump(vec![0.0; 3], 0.1, 2.5, 64).unwrap();
        assert!((m.total_mass() - 2.5).abs() < 1e-12);
        let (c, r) = m.support_bound().unwrap();
        assert_eq!(c, vec![0.0; 3]);
        assert!((r - 0.1).abs() < 1e-12);
        // cumulative mass at half the bandwidth matches the closed form
        let expect = 2.5 * bump_radial_cdf(0.5, 3) / bump_radial_cdf(1.0, 3);
        assert!((m.ball_mass(&[0.0; 3], 0.05) - expect).abs() < 1e-4);
    }

    #[test]
    fn signed_measure_total_variation() {
        let p = dirac3(2.0);
        let n = Measure::dirac(vec![1.0, 0.0, 0.0], 0.5).unwrap();
        let s = SignedMeasure::new(p, n).unwrap();
        assert_eq!(s.total_variation(), 2.5);
        let a = s.abs().unwrap();
        assert_eq!(a.total_mass(), 2.5);
    }

    #[test]
    fn serde_round_trip() {
        let m = Measure::atomic(vec![vec![1.0, 2.0]], vec![0.5]).unwrap();
        let s = serde_json::to_string(&m).unwrap();
        assert!(s.contains("\"kind\":\"atomic\""));
        let back: Measure = serde_json::from_str(&s).unwrap();
        assert_eq!(m, back);
        let g = Measure::grid_density(
            GridSpec::cube(&[0.0, 0.0], 1.0, 2).unwrap(),
            vec![1.0, 0.0, 0.0, 2.0],
        )
        .unwrap();
        let s = serde_json::to_string(&g).unwrap();
        assert!(s.contains("\"kind\":\"grid\""));
        assert_eq!(g, serde_json::from_str::<Measure>(&s).unwrap());
    }
}
