//! Monotone iteration for the coupled nonlinear Wolff integral system
//!
//! ```text
//! U = W_{alpha,p}[U^q1 V^q2] + eps W_{alpha,p}[mu]
//! V = W_{beta,p} [U^q1 V^q2] + eps W_{beta,p} [mu]
//! ```
//!
//! starting from the eps-scaled forcing (U0 = eps W_alpha[mu]); successive
//! substitution is pointwise nondecreasing, stays inside the a-priori tube
//! U_m <= 2 eps W_alpha[mu] for small eps, and either converges in sup norm
//! or escapes the tube, which is declared divergence. Grid geometry is
//! frozen once per measure/grid pair, so threshold bisection reuses the
//! expensive distance binning across all its runs.

use crate::criteria::ParamSet;
use crate::error::{Result, WolffError};
use crate::field::{power_product, Field, SampleSet};
use crate::grid::GridSpec;
use crate::measure::Measure;
use crate::potential::{GridFieldEvaluator, QuadratureConfig, StationarySolver};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub params: ParamSet,
    pub epsilon: f64,
    pub grid: GridSpec,
    pub tol: f64,
    pub max_iter: usize,
    pub blowup_factor: f64,
    pub quad: QuadratureConfig,
}

impl SystemConfig {
    pub fn new(params: ParamSet, epsilon: f64, grid: GridSpec) -> Result<Self> {
        let cfg = SystemConfig {
            params,
            epsilon,
            grid,
            tol: 1e-8,
            max_iter: 200,
            blowup_factor: 10.0,
            quad: QuadratureConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.epsilon > 0.0) {
            return Err(WolffError::invalid_param("epsilon", "must be positive"));
        }
        if !(self.tol > 0.0) {
            return Err(WolffError::invalid_param("tol", "must be positive"));
        }
        if !(self.blowup_factor > 2.0) {
            return Err(WolffError::invalid_param(
                "blowup_factor",
                "must exceed 2 (the a-priori tube height)",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    Diverged,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterStats {
    pub iter: usize,
    pub sup_u: f64,
    pub sup_v: f64,
    pub change_u: f64,
    pub change_v: f64,
    pub in_tube: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemSolution {
    pub u: Field,
    pub v: Field,
    pub iterations: usize,
    pub residual: f64,
    pub status: SolveStatus,
    pub in_tube: bool,
    pub trace: Vec<IterStats>,
}

/// Frozen geometry for one (measure, grid) pair: the stationary solver
/// plus the unscaled forcing potentials W_alpha[mu], W_beta[mu].
pub struct SystemWorkspace {
    cfg: SystemConfig,
    solver: StationarySolver,
    cell_volume: f64,
    base_u: Vec<f64>,
    base_v: Vec<f64>,
}

impl SystemWorkspace {
    pub fn new(mu: &Measure, cfg: &SystemConfig) -> Result<Self> {
        cfg.validate()?;
        let grid = &cfg.grid;
        if mu.total_mass() > 0.0 {
            if matches!(mu, Measure::Atomic { .. }) {
                return Err(WolffError::invalid_param(
                    "mu",
                    "atoms make the product field non-integrable at grid nodes; mollify first",
                ));
            }
            let (sc, sr) = mu.support_bound().expect("nonzero measure");
            for a in 0..grid.dim() {
                let lo = grid.origin[a];
                let hi = grid.origin[a] + grid.spacing[a] * grid.shape[a] as f64;
                let margin = (sc[a] - sr - lo).min(hi - (sc[a] + sr));
                if margin < 2.0 * (2.0 * sr) - 1e-12 {
                    return Err(WolffError::invalid_param(
                        "grid",
                        "grid must cover the support with margin >= 2 support diameters",
                    ));
                }
            }
        }
        let centers = grid.centers();
        let solver = StationarySolver::new(
            &centers,
            &centers,
            &cfg.quad,
            grid.half_diagonal(),
            cfg.params.radius.value(),
            grid.dim(),
        )?;
        let pairs = Self::spec_pairs(&cfg.params)?;
        // forcing: evaluate W[mu] through the same solver when mu lives on
        // this grid, otherwise through the generic grid evaluator
        let (base_u, base_v) = if mu.total_mass() == 0.0 {
            (vec![0.0; centers.len()], vec![0.0; centers.len()])
        } else if mu.grid().as_ref() == Some(grid) {
            let masses: Vec<f64> = match mu {
                Measure::GridDensity { cells, .. } => {
                    cells.iter().map(|c| c * grid.cell_volume()).collect()
                }
                _ => unreachable!(),
            };
            let mut out = solver.apply(&masses, &pairs);
            let v = out.pop().unwrap();
            let u = out.pop().unwrap();
            (u, v)
        } else {
            let spec_a = cfg.params.wolff_alpha()?;
            let spec_b = cfg.params.wolff_beta()?;
            let extent = centers
                .iter()
                .map(|x| grid.far_corner_distance(x))
                .fold(0.0f64, f64::max);
            let eu = GridFieldEvaluator::new(mu, &spec_a, &cfg.quad, extent, grid.half_diagonal())?;
            let ev = GridFieldEvaluator::new(mu, &spec_b, &cfg.quad, extent, grid.half_diagonal())?;
            (eu.eval_many(&centers), ev.eval_many(&centers))
        };
        Ok(SystemWorkspace {
            cfg: cfg.clone(),
            solver,
            cell_volume: grid.cell_volume(),
            base_u,
            base_v,
        })
    }

    fn spec_pairs(params: &ParamSet) -> Result<[(f64, f64); 2]> {
        let a = params.wolff_alpha()?.gamma_delta();
        let b = params.wolff_beta()?.gamma_delta();
        Ok([a, b])
    }

    /// One monotone run at the given epsilon.
    pub fn run(&self, epsilon: f64, max_iter: usize, tol: f64) -> Result<SystemSolution> {
        let params = &self.cfg.params;
        let samples = SampleSet::Grid { grid: self.cfg.grid.clone() };
        let fu: Vec<f64> = self.base_u.iter().map(|w| epsilon * w).collect();
        let fv: Vec<f64> = self.base_v.iter().map(|w| epsilon * w).collect();
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |a, &b| a.max(b));
        if sup(&fu) == 0.0 {
            // zero forcing: the zero fixed point
            return Ok(SystemSolution {
                u: Field::new(samples.clone(), fu)?,
                v: Field::new(samples, fv)?,
                iterations: 1,
                residual: 0.0,
                status: SolveStatus::Converged,
                in_tube: true,
                trace: vec![IterStats {
                    iter: 0,
                    sup_u: 0.0,
                    sup_v: 0.0,
                    change_u: 0.0,
                    change_v: 0.0,
                    in_tube: true,
                }],
            });
        }
        let escape_u = self.cfg.blowup_factor * sup(&fu);
        let pairs = Self::spec_pairs(params)?;
        let mut u = fu.clone();
        let mut v = fv.clone();
        let mut trace = Vec::new();
        let mut status = SolveStatus::MaxIter;
        let mut residual = f64::INFINITY;
        let mut in_tube = true;
        let mut iterations = 0;
        for m in 0..max_iter {
            iterations = m + 1;
            // product density -> cell masses
            let masses: Vec<f64> = u
                .iter()
                .zip(&v)
                .map(|(&a, &b)| {
                    let fa = if params.q1 == 0.0 { 1.0 } else { a.powf(params.q1) };
                    let fb = if params.q2 == 0.0 { 1.0 } else { b.powf(params.q2) };
                    if fa == 0.0 || fb == 0.0 {
                        0.0
                    } else {
                        fa * fb * self.cell_volume
                    }
                })
                .collect();
            let mut w = self.solver.apply(&masses, &pairs);
            let wv = w.pop().unwrap();
            let wu = w.pop().unwrap();
            let next_u: Vec<f64> = wu.iter().zip(&fu).map(|(a, b)| a + b).collect();
            let next_v: Vec<f64> = wv.iter().zip(&fv).map(|(a, b)| a + b).collect();
            for (a, b) in next_u.iter().zip(&u) {
                assert!(a >= b, "monotonicity violated: {a} < {b}");
            }
            for (a, b) in next_v.iter().zip(&v) {
                assert!(a >= b, "monotonicity violated: {a} < {b}");
            }
            let change_u = sup_diff(&next_u, &u) / sup(&next_u).max(f64::MIN_POSITIVE);
            let change_v = sup_diff(&next_v, &v) / sup(&next_v).max(f64::MIN_POSITIVE);
            in_tube = tube_ok(&next_u, &fu) && tube_ok(&next_v, &fv);
            trace.push(IterStats {
                iter: m,
                sup_u: sup(&next_u),
                sup_v: sup(&next_v),
                change_u,
                change_v,
                in_tube,
            });
            u = next_u;
            v = next_v;
            if sup(&u) > escape_u {
                status = SolveStatus::Diverged;
                residual = change_u.max(change_v);
                break;
            }
            if change_u.max(change_v) <= tol {
                status = SolveStatus::Converged;
                residual = change_u.max(change_v);
                break;
            }
        }
        Ok(SystemSolution {
            u: Field::new(samples.clone(), u)?,
            v: Field::new(samples, v)?,
            iterations,
            residual,
            status,
            in_tube,
            trace,
        })
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
}

/// U <= 2 * forcing pointwise, with 1% slack for discretization.
fn tube_ok(field: &[f64], forcing: &[f64]) -> bool {
    field
        .iter()
        .zip(forcing)
        .all(|(&x, &f)| x <= 2.0 * f * 1.01 + 1e-300)
}

/// Solve the system by monotone iteration on the configured grid. The
/// measure must carry no atoms (mollify first); zero measures return the
/// zero fixed point immediately.
pub fn solve_system(mu: &Measure, cfg: &SystemConfig) -> Result<SystemSolution> {
    SystemWorkspace::new(mu, cfg)?.run(cfg.epsilon, cfg.max_iter, cfg.tol)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residual_u: f64,
    pub residual_v: f64,
    pub pass: bool,
}

/// Recompute both right-hand sides with the product density resampled on a
/// 2x finer grid and report sup-norm relative residuals of the fixed-point
/// identity; pass threshold 5e-2 (discretization-limited).
pub fn verify_solution(sol: &SystemSolution, mu: &Measure, cfg: &SystemConfig) -> Result<ResidualReport> {
    if sol.status != SolveStatus::Converged {
        return Err(WolffError::invalid_param("sol", "verify_solution wants a converged solution"));
    }
    if mu.total_mass() == 0.0 {
        return Ok(ResidualReport { residual_u: 0.0, residual_v: 0.0, pass: true });
    }
    let grid = &cfg.grid;
    let fine = grid.refined();
    let fine_centers = fine.centers();
    let interp_u: Vec<f64> =
        fine_centers.iter().map(|x| grid.interpolate(&sol.u.values, x)).collect();
    let interp_v: Vec<f64> =
        fine_centers.iter().map(|x| grid.interpolate(&sol.v.values, x)).collect();
    let fine_samples = SampleSet::Grid { grid: fine.clone() };
    let uf = Field::new(fine_samples.clone(), interp_u)?;
    let vf = Field::new(fine_samples, interp_v)?;
    let gf = power_product(&uf, &vf, cfg.params.q1, cfg.params.q2)?;
    let g_measure = gf.as_measure()?;

    let spec_a = cfg.params.wolff_alpha()?;
    let spec_b = cfg.params.wolff_beta()?;
    let pairs = [spec_a.gamma_delta(), spec_b.gamma_delta()];
    let centers = grid.centers();
    let extent = centers
        .iter()
        .map(|x| fine.far_corner_distance(x))
        .fold(0.0f64, f64::max);
    let quad = &cfg.quad;
    // one binning pass per source set covers both orders
    let e = GridFieldEvaluator::new(&g_measure, &spec_a, quad, extent, fine.half_diagonal())?;
    let w_nl = e.eval_many_pairs(&centers, &pairs);
    let em = GridFieldEvaluator::new(mu, &spec_a, quad, extent, grid.half_diagonal())?;
    let w_mu = em.eval_many_pairs(&centers, &pairs);
    let combine = |k: usize| -> Vec<f64> {
        w_nl[k]
            .iter()
            .zip(&w_mu[k])
            .map(|(a, b)| a + cfg.epsilon * b)
            .collect()
    };
    let rhs_u = combine(0);
    let rhs_v = combine(1);
    let rel_sup = |vals: &[f64], rhs: &[f64]| -> f64 {
        let denom = vals.iter().fold(0.0f64, |a, &b| a.max(b)).max(f64::MIN_POSITIVE);
        vals.iter()
            .zip(rhs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max)
            / denom
    };
    let residual_u = rel_sup(&sol.u.values, &rhs_u);
    let residual_v = rel_sup(&sol.v.values, &rhs_v);
    Ok(ResidualReport { residual_u, residual_v, pass: residual_u.max(residual_v) <= 5e-2 })
}

/// Bisect the solvability threshold in eps between a converging and a
/// diverging bracket, to 5% relative width. Geometry and forcing are
/// computed once and shared by every bisection run.
pub fn epsilon_threshold(
    mu: &Measure,
    cfg: &SystemConfig,
    bracket: (f64, f64),
) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = bracket;
    if !(lo > 0.0 && hi > lo) {
        return Err(WolffError::InvalidBracket("need 0 < lo < hi".into()));
    }
    let ws = SystemWorkspace::new(mu, cfg)?;
    let run = |eps: f64| -> Result<SolveStatus> {
        Ok(ws.run(eps, cfg.max_iter, cfg.tol)?.status)
    };
    if run(lo)? == SolveStatus::Diverged {
        return Err(WolffError::InvalidBracket(format!("lower end {lo} already diverges")));
    }
    if run(hi)? != SolveStatus::Diverged {
        return Err(WolffError::InvalidBracket(format!("upper end {hi} does not diverge")));
    }
    while hi / lo > 1.05 {
        let mid = (lo * hi).sqrt();
        if run(mid)? == SolveStatus::Diverged {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok((lo, hi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::Truncation;

    fn bench_params() -> ParamSet {
        ParamSet::new(3, 2.0, 1.0, 1.0, 1.0, 0.5, Truncation::Infinite).unwrap()
    }

    // spacing pinned to the bandwidth: box half-extent 0.05 * res keeps the
    // support margin requirement satisfiable at res >= 18
    fn bench_measure_and_grid(mass: f64, res: usize) -> (Measure, GridSpec) {
        let h = 0.1;
        let grid = GridSpec::cube(&[0.0; 3], 0.05 * res as f64, res).unwrap();
        let mu = Measure::dirac(vec![0.0; 3], mass)
            .unwrap()
            .mollify(h, &grid)
            .unwrap();
        (mu, grid)
    }

    #[test]
    fn zero_measure_fixed_point() {
        let (_, grid) = bench_measure_and_grid(1.0, 18);
        let cfg = SystemConfig::new(bench_params(), 1e-3, grid).unwrap();
        let sol = solve_system(&Measure::zero(3), &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged);
        assert_eq!(sol.iterations, 1);
        assert!(sol.u.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn atoms_are_rejected() {
        let (_, grid) = bench_measure_and_grid(1.0, 18);
        let cfg = SystemConfig::new(bench_params(), 1e-3, grid).unwrap();
        assert!(solve_system(&Measure::dirac(vec![0.0; 3], 1.0).unwrap(), &cfg).is_err());
    }

    #[test]
    fn small_eps_converges_in_tube() {
        let (mu, grid) = bench_measure_and_grid(1.0, 18);
        let cfg = SystemConfig::new(bench_params(), 1e-3, grid).unwrap();
        let sol = solve_system(&mu, &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Converged, "trace: {:?}", sol.trace.last());
        assert!(sol.in_tube);
        assert!(sol.residual <= 3.0 * cfg.tol);
    }

    #[test]
    fn large_eps_diverges() {
        let (mu, grid) = bench_measure_and_grid(1.0, 18);
        let cfg = SystemConfig::new(bench_params(), 1e3, grid).unwrap();
        let sol = solve_system(&mu, &cfg).unwrap();
        assert_eq!(sol.status, SolveStatus::Diverged);
    }

    #[test]
    fn trajectory_invariance_under_joint_rescaling() {
        // (mu, eps) -> (lambda mu, eps lambda^(-1/(p-1))) leaves the system
        // identical, so the solve returns the same fields
        let (mu, grid) = bench_measure_and_grid(1.0, 18);
        let lam = 2.0f64;
        let p = bench_params().p;
        let eps = 1e-3;
        let cfg1 = SystemConfig::new(bench_params(), eps, grid.clone()).unwrap();
        let cfg2 =
            SystemConfig::new(bench_params(), eps * lam.powf(-1.0 / (p - 1.0)), grid).unwrap();
        let s1 = solve_system(&mu, &cfg1).unwrap();
        let s2 = solve_system(&mu.scaled(lam), &cfg2).unwrap();
        assert_eq!(s1.status, s2.status);
        for (a, b) in s1.u.values.iter().zip(&s2.u.values) {
            assert!((a - b).abs() <= 1e-12 * a.max(1e-300), "{a} vs {b}");
        }
    }

    #[test]
    fn verify_solution_detects_perturbation() {
        let (mu, grid) = bench_measure_and_grid(1.0, 18);
        let cfg = SystemConfig::new(bench_params(), 1e-3, grid).unwrap();
        let sol = solve_system(&mu, &cfg).unwrap();
        let rep = verify_solution(&sol, &mu, &cfg).unwrap();
        assert!(rep.pass, "honest residuals: {rep:?}");
        let mut bad = sol.clone();
        bad.u = bad.u.scaled(1.5);
        let rep_bad = verify_solution(&bad, &mu, &cfg).unwrap();
        assert!(rep_bad.residual_u > 0.2, "detector missed the perturbation: {rep_bad:?}");
    }

    #[test]
    fn threshold_bracket_validation() {
        let (mu, grid) = bench_measure_and_grid(1.0, 18);
        let mut cfg = SystemConfig::new(bench_params(), 1.0, grid).unwrap();
        cfg.max_iter = 40;
        // zero measure converges everywhere: invalid bracket
        assert!(matches!(
            epsilon_threshold(&Measure::zero(3), &cfg, (1e-3, 1e2)),
            Err(WolffError::InvalidBracket(_))
        ));
        // honest bracket on the bench measure
        let (lo, hi) = epsilon_threshold(&mu, &cfg, (1e-3, 1e2)).unwrap();
        assert!(lo < hi && hi / lo <= 1.05 + 1e-9, "bracket ({lo}, {hi})");
    }
}
