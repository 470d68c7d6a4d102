//! Radial bench for the model quasilinear problem
//!
//! ```text
//! -div(|grad u|^(p-2) grad u) = u^q1 |grad u|^q2 + mu   in B_Rdom,
//! u = 0 on the boundary,  mu >= 0 radial.
//! ```
//!
//! The radial reduction is exact: with m(s) = nu(B_s),
//! |u'(r)|^(p-2) u'(r) = -m(r)/(sigma_{N-1} r^(N-1)), so the linear solve
//! is pure quadrature over the mass profile and the derivative comes from
//! the closed-form flux relation, never from differencing u. The Picard
//! loop feeds u^q1 |u'|^q2 back as a radial density and watches the
//! invariant-tube envelopes built from Riesz/Wolff potentials of mu.

use crate::error::{Result, WolffError};
use crate::geom;
use crate::measure::Measure;
use crate::potential::{evaluate, PotentialSpec, QuadratureConfig, Truncation};
use crate::wolff_system::SolveStatus;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialProblem {
    pub n_dim: usize,
    pub p: f64,
    pub q1: f64,
    pub q2: f64,
    pub mu: Measure,
    pub r_dom: f64,
}

impl RadialProblem {
    pub fn new(n_dim: usize, p: f64, q1: f64, q2: f64, mu: Measure, r_dom: f64) -> Result<Self> {
        let n = n_dim as f64;
        let p_low = (3.0 * n - 2.0) / (2.0 * n - 1.0);
        if !(p > p_low && p < n) {
            return Err(WolffError::invalid_param(
                "p",
                format!("need (3N-2)/(2N-1) = {p_low} < p < N = {n}"),
            ));
        }
        if !(q1 >= 0.0) || !(q1 + q2 > p - 1.0) {
            return Err(WolffError::invalid_param("q1", "need q1 >= 0 and q1 + q2 > p - 1"));
        }
        let q2_max = n * (p - 1.0) / (n - 1.0);
        if !(q2 > 0.0 && q2 < q2_max) {
            return Err(WolffError::invalid_param(
                "q2",
                format!("need 0 < q2 < N(p-1)/(N-1) = {q2_max}"),
            ));
        }
        if !(r_dom > 0.0) {
            return Err(WolffError::invalid_param("r_dom", "domain radius must be positive"));
        }
        radial_center(&mu)?;
        Ok(RadialProblem { n_dim, p, q1, q2, mu, r_dom })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialSolution {
    pub r_nodes: Vec<f64>,
    pub u: Vec<f64>,
    /// signed radial derivative (<= 0 for nonnegative data)
    pub du: Vec<f64>,
    pub picard_iters: usize,
    pub in_tube: bool,
    pub status: SolveStatus,
}

impl RadialSolution {
    /// Jointly rescale (u, du); used by the homogeneity checks of the
    /// envelope fitter.
    pub fn scaled(&self, factor: f64) -> RadialSolution {
        RadialSolution {
            r_nodes: self.r_nodes.clone(),
            u: self.u.iter().map(|x| x * factor).collect(),
            du: self.du.iter().map(|x| x * factor).collect(),
            picard_iters: self.picard_iters,
            in_tube: self.in_tube,
            status: self.status,
        }
    }
}

/// The measure's center, when it is radial (or atomic concentrated at one
/// point, which is the same thing).
fn radial_center(mu: &Measure) -> Result<Vec<f64>> {
    match mu {
        Measure::Radial { center, .. } => Ok(center.clone()),
        Measure::Atomic { points, weights } => {
            let live: Vec<&Vec<f64>> =
                points.iter().zip(weights).filter(|(_, &w)| w > 0.0).map(|(p, _)| p).collect();
            match live.first() {
                None => Ok(vec![0.0; mu.dim()]),
                Some(first) => {
                    if live.iter().all(|p| p == first) {
                        Ok((*first).clone())
                    } else {
                        Err(WolffError::Unsupported(
                            "atomic measure is not concentrated at a single point".into(),
                        ))
                    }
                }
            }
        }
        Measure::GridDensity { .. } => Err(WolffError::Unsupported(
            "the radial bench wants radial measures; project grid densities first".into(),
        )),
    }
}

/// Default radial nodes: log-spaced accumulating at zero, merged with the
/// measure's breakpoints and the boundary.
pub fn default_radial_nodes(mu: &Measure, r_dom: f64, count: usize) -> Vec<f64> {
    let lo = r_dom * 1e-6;
    let k = count.max(32);
    let mut nodes: Vec<f64> =
        (0..=k).map(|i| lo * (r_dom / lo).powf(i as f64 / k as f64)).collect();
    if let Measure::Radial { breakpoints, .. } = mu {
        nodes.extend(breakpoints.iter().copied().filter(|&b| b > 0.0 && b < r_dom));
    }
    nodes.push(r_dom);
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    nodes
}

/// Exact radial solve of -div(|u'|^(p-2) u' e_r) = nu with u(r_dom) = 0:
/// u(r) = int_r^Rdom shell-flux^(1/(p-1)), evaluated on `nodes`.
pub fn solve_linear_radial_on(
    nu: &Measure,
    p: f64,
    n_dim: usize,
    r_dom: f64,
    nodes: &[f64],
) -> Result<RadialSolution> {
    if !(p > 1.0) || n_dim < 2 {
        return Err(WolffError::invalid_param("p", "need p > 1 and N >= 2"));
    }
    let center = radial_center(nu)?;
    let profile = nu.profile(&center)?;
    let n = n_dim as f64;
    let sigma = geom::unit_sphere_area(n_dim);
    let gamma = 1.0 / (p - 1.0);
    let delta = (n - p) / (p - 1.0);
    if !(delta > 0.0) {
        return Err(WolffError::invalid_param("p", "radial reduction needs p < N"));
    }
    let scale = sigma.powf(-gamma);
    // accumulate from the boundary in, segment by segment: monotone in the
    // profile masses and exact on step profiles
    let mut u = vec![0.0; nodes.len()];
    let mut acc = 0.0;
    for i in (0..nodes.len().saturating_sub(1)).rev() {
        if nodes[i] < r_dom {
            let hi = nodes[i + 1].min(r_dom);
            acc += scale * profile.integrate_power_between(gamma, delta, nodes[i], hi);
        }
        u[i] = acc;
    }
    if let Some(last) = nodes.last() {
        if *last >= r_dom {
            // boundary value is exactly zero by construction
        } else {
            // nodes end inside the domain: add the remaining stretch
            let extra = scale * profile.integrate_power_between(gamma, delta, *last, r_dom);
            for x in u.iter_mut() {
                *x += extra;
            }
        }
    }
    let du: Vec<f64> = nodes
        .iter()
        .map(|&r| {
            if r <= 0.0 {
                0.0
            } else {
                let m = profile.eval(r);
                if m == 0.0 {
                    0.0
                } else {
                    -(m / (sigma * r.powf(n - 1.0))).powf(gamma)
                }
            }
        })
        .collect();
    Ok(RadialSolution {
        r_nodes: nodes.to_vec(),
        u,
        du,
        picard_iters: 1,
        in_tube: true,
        status: SolveStatus::Converged,
    })
}

/// Linear solve on the default node set.
pub fn solve_linear_radial(nu: &Measure, p: f64, n_dim: usize, r_dom: f64) -> Result<RadialSolution> {
    let nodes = default_radial_nodes(nu, r_dom, 240);
    solve_linear_radial_on(nu, p, n_dim, r_dom, &nodes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TubeEnvelope {
    pub e_u: Vec<f64>,
    pub e_du: Vec<f64>,
}

/// Invariant-tube envelopes at the nodes: Riesz form for p <= 2, Wolff form
/// for p > 2, both truncated at twice the domain diameter.
pub fn tube_envelope(
    prob: &RadialProblem,
    lambda_cap: f64,
    nodes: &[f64],
    quad: &QuadratureConfig,
) -> Result<TubeEnvelope> {
    let trunc = Truncation::Finite(4.0 * prob.r_dom);
    let center = radial_center(&prob.mu)?;
    let gamma = 1.0 / (prob.p - 1.0);
    let eval_at = |spec: &PotentialSpec, r: f64| -> Result<f64> {
        let mut x = center.clone();
        x[0] += r;
        evaluate(&prob.mu, spec, &x, quad)
    };
    let (spec_u, spec_du, pow): (PotentialSpec, PotentialSpec, f64) = if prob.p <= 2.0 {
        (
            PotentialSpec::riesz(prob.n_dim, prob.p, trunc)?,
            PotentialSpec::riesz(prob.n_dim, 1.0, trunc)?,
            gamma,
        )
    } else {
        (
            PotentialSpec::wolff(prob.n_dim, 1.0, prob.p, trunc)?,
            PotentialSpec::wolff(prob.n_dim, 1.0 / prob.p, prob.p, trunc)?,
            1.0,
        )
    };
    let mut e_u = Vec::with_capacity(nodes.len());
    let mut e_du = Vec::with_capacity(nodes.len());
    for &r in nodes {
        e_u.push(lambda_cap * eval_at(&spec_u, r)?.powf(pow));
        e_du.push(lambda_cap * eval_at(&spec_du, r)?.powf(pow));
    }
    Ok(TubeEnvelope { e_u, e_du })
}

/// Picard iteration: u_{k+1} solves the linear problem with data
/// u_k^q1 |u_k'|^q2 dx + mu, watching the tube envelopes. Stops on relative
/// sup change <= tol, tube escape (status Diverged), or max_iter.
pub fn picard_solve(
    prob: &RadialProblem,
    lambda_cap: f64,
    max_iter: usize,
) -> Result<RadialSolution> {
    let quad = QuadratureConfig::default();
    let nodes = default_radial_nodes(&prob.mu, prob.r_dom, 240);
    let envelope = tube_envelope(prob, lambda_cap, &nodes, &quad)?;
    let tol = 1e-8;
    let sigma = geom::unit_sphere_area(prob.n_dim);
    let n = prob.n_dim as f64;
    let center = radial_center(&prob.mu)?;
    let mu_profile = prob.mu.profile(&center)?;
    let mut sol = solve_linear_radial_on(&prob.mu, prob.p, prob.n_dim, prob.r_dom, &nodes)?;
    let mut iters = 1;
    let in_tube_now = |s: &RadialSolution| -> bool {
        s.u.iter().zip(&envelope.e_u).all(|(&u, &e)| u <= e * (1.0 + 1e-12))
            && s.du.iter().zip(&envelope.e_du).all(|(&d, &e)| d.abs() <= e * (1.0 + 1e-12))
    };
    if !in_tube_now(&sol) {
        sol.in_tube = false;
        sol.status = SolveStatus::Diverged;
        sol.picard_iters = iters;
        return Ok(sol);
    }
    for _ in 0..max_iter {
        iters += 1;
        // nonlinear density g = u^q1 |u'|^q2 as a radial cumulative on nodes
        let g: Vec<f64> = sol
            .u
            .iter()
            .zip(&sol.du)
            .map(|(&u, &d)| {
                let fu = if prob.q1 == 0.0 { 1.0 } else { u.powf(prob.q1) };
                let fd = if prob.q2 == 0.0 { 1.0 } else { d.abs().powf(prob.q2) };
                if fu == 0.0 || fd == 0.0 {
                    0.0
                } else {
                    fu * fd
                }
            })
            .collect();
        let mut cumulative = Vec::with_capacity(nodes.len());
        let mut acc = sigma * nodes[0].powf(n) / n * g[0];
        cumulative.push(acc + mu_profile.eval(nodes[0]));
        for i in 1..nodes.len() {
            let (a, b) = (nodes[i - 1], nodes[i]);
            acc += 0.5 * (g[i - 1] * a.powf(n - 1.0) + g[i] * b.powf(n - 1.0)) * (b - a) * sigma;
            cumulative.push(acc + mu_profile.eval(nodes[i]));
        }
        let nu = Measure::radial(center.clone(), nodes.clone(), cumulative)?;
        let next = solve_linear_radial_on(&nu, prob.p, prob.n_dim, prob.r_dom, &nodes)?;
        let sup: f64 = next.u.iter().fold(0.0f64, |m, &x| m.max(x));
        let change = next
            .u
            .iter()
            .zip(&sol.u)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / sup.max(f64::MIN_POSITIVE);
        let ok = in_tube_now(&next);
        sol = next;
        sol.picard_iters = iters;
        if !ok {
            sol.in_tube = false;
            sol.status = SolveStatus::Diverged;
            return Ok(sol);
        }
        sol.in_tube = true;
        if change <= tol {
            sol.status = SolveStatus::Converged;
            return Ok(sol);
        }
        sol.status = SolveStatus::MaxIter;
    }
    Ok(sol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    /// sup u / W^{2 diam}_{1,p}[mu]
    pub c_up: f64,
    /// sup W^{d/4}_{1,p}[mu] / u over interior nodes
    pub c_low: f64,
    /// sup |u'| / (I^{2 diam}_1[mu])^(1/(p-1))
    pub c_grad: f64,
    pub samples: usize,
}

/// Fit the pointwise envelope constants of a converged radial solution.
/// All three must come out finite for data in the solvability regime.
pub fn verify_pointwise_bounds(
    sol: &RadialSolution,
    mu: &Measure,
    p: f64,
    n_dim: usize,
    r_dom: f64,
) -> Result<BoundsReport> {
    let quad = QuadratureConfig::default();
    let center = radial_center(mu)?;
    let trunc = 4.0 * r_dom; // twice the domain diameter
    let spec_w = PotentialSpec::wolff(n_dim, 1.0, p, Truncation::Finite(trunc))?;
    let spec_i1 = PotentialSpec::riesz(n_dim, 1.0, Truncation::Finite(trunc))?;
    let gamma = 1.0 / (p - 1.0);
    let sup_u = sol.u.iter().fold(0.0f64, |m, &x| m.max(x));
    let floor = 1e-12 * sup_u;
    // subsample the nodes: the sups are stable and the off-center potential
    // evaluations dominate the cost
    let stride = (sol.r_nodes.len() / 96).max(1);
    let mut c_up: f64 = 0.0;
    let mut c_low: f64 = 0.0;
    let mut c_grad: f64 = 0.0;
    let mut samples = 0;
    for (i, &r) in sol.r_nodes.iter().enumerate().step_by(stride) {
        let mut x = center.clone();
        x[0] += r;
        samples += 1;
        let w = evaluate(mu, &spec_w, &x, &quad)?;
        if w.is_finite() && w > floor.max(f64::MIN_POSITIVE) {
            c_up = c_up.max(sol.u[i] / w);
        }
        let d_boundary = r_dom - r;
        if sol.u[i] > floor && d_boundary > 0.0 {
            let spec_loc =
                PotentialSpec::wolff(n_dim, 1.0, p, Truncation::Finite(d_boundary / 4.0))?;
            let w_loc = evaluate(mu, &spec_loc, &x, &quad)?;
            if w_loc.is_finite() {
                c_low = c_low.max(w_loc / sol.u[i]);
            }
        }
        let i1 = evaluate(mu, &spec_i1, &x, &quad)?;
        let denom = i1.powf(gamma);
        if denom.is_finite() && denom > f64::MIN_POSITIVE {
            c_grad = c_grad.max(sol.du[i].abs() / denom);
        }
    }
    Ok(BoundsReport { c_up, c_low, c_grad, samples })
}
