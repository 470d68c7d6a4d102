//! Command-line driver: reproducible, file-based workflows over the
//! toolkit. Every run is fully determined by its flags (the seed covers
//! all sampling), and artifacts are written with full float precision so
//! identical configurations produce byte-identical files.
//!
//! Exit codes: 0 success, 1 malformed config (message names the offending
//! field), 2 parameter-invariant violation, 3 numerical flag raised
//! (blowup suspected, unreliable refinement, divergence, tube escape).

pub mod plot;

use clap::{Args, Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::sync::Once;
use wolffkit::capacity::{self, CapacityBudget, CompactSet};
use wolffkit::criteria::{self, CapKernel, CheckConfig, IteratedKind, OuterOrder, Verdict};
use wolffkit::error::WolffError;
use wolffkit::grid::GridSpec;
use wolffkit::io;
use wolffkit::potential::{self, PotentialSpec, QuadratureConfig, Truncation};
use wolffkit::radial_pde::{self, RadialProblem};
use wolffkit::wolff_system::{self, SolveStatus, SystemConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INVARIANT: i32 = 2;
pub const EXIT_FLAGGED: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "wolffkit", version, about = "nonlinear potential theory toolkit")]
struct Cli {
    /// cap the worker thread count (env WOLFFKIT_THREADS as fallback)
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate a potential of a measure at a point
    Potential(PotentialArgs),
    /// Two-sided variational capacity estimate of a compact set
    Capacity(CapacityArgs),
    /// Run one of the equivalent-condition checkers
    Check(CheckArgs),
    /// Solve the coupled nonlinear Wolff integral system
    SolveSystem(SolveSystemArgs),
    /// Radial quasilinear PDE bench with pointwise-bound fitting
    Pde(PdeArgs),
    /// Summarize previously written artifacts
    Report(ReportArgs),
}

#[derive(Args, Debug)]
struct PotentialArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    p: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    #[arg(long = "N")]
    n_dim: usize,
    #[arg(long = "R", default_value = "inf")]
    radius: String,
    #[arg(long)]
    measure: PathBuf,
    /// evaluation point, comma-separated coordinates
    #[arg(long)]
    at: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CapacityArgs {
    #[arg(long)]
    kind: String,
    #[arg(long)]
    alpha: f64,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    set: PathBuf,
    #[arg(long, default_value_t = 12)]
    grid: usize,
    #[arg(long, default_value_t = 220)]
    budget: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[arg(long)]
    condition: String,
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// outer order for the pointwise check: alpha or beta
    #[arg(long, default_value = "alpha")]
    eta: String,
    /// potential family for the pointwise check: wolff or riesz
    #[arg(long, default_value = "wolff")]
    kind: String,
    #[arg(long)]
    out: Option<PathBuf>,
    /// also write an SVG scatter of the per-sample ratios
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct SolveSystemArgs {
    #[arg(long)]
    measure: PathBuf,
    #[arg(long)]
    params: PathBuf,
    #[arg(long)]
    epsilon: f64,
    #[arg(long, default_value_t = 20)]
    grid: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PdeArgs {
    #[arg(long = "N")]
    n_dim: usize,
    #[arg(long)]
    p: f64,
    #[arg(long)]
    q1: f64,
    #[arg(long)]
    q2: f64,
    #[arg(long)]
    measure: PathBuf,
    #[arg(long = "Rdom")]
    r_dom: f64,
    #[arg(long, default_value_t = 10.0)]
    lambda: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    plot: bool,
}

static THREAD_INIT: Once = Once::new();

fn init_threads(cap: Option<usize>) {
    let n = cap.or_else(|| {
        std::env::var("WOLFFKIT_THREADS").ok().and_then(|s| s.parse().ok())
    });
    if let Some(n) = n {
        THREAD_INIT.call_once(|| {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        });
    }
}

/// Run the CLI on the given argv (excluding the program name handled by
/// clap); returns the process exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            // help/version are successful exits
            let is_help = matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            );
            eprint!("{e}");
            return if is_help { EXIT_OK } else { EXIT_CONFIG };
        }
    };
    init_threads(cli.threads);
    let result = match cli.command {
        Command::Potential(a) => cmd_potential(a),
        Command::Capacity(a) => cmd_capacity(a),
        Command::Check(a) => cmd_check(a),
        Command::SolveSystem(a) => cmd_solve_system(a),
        Command::Pde(a) => cmd_pde(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                WolffError::Config { .. } | WolffError::Io(_) | WolffError::Json(_) => EXIT_CONFIG,
                _ => EXIT_INVARIANT,
            }
        }
    }
}

fn parse_point(s: &str) -> Result<Vec<f64>, WolffError> {
    s.split(',')
        .map(|t| {
            io::parse_f64(t).ok_or_else(|| WolffError::Config {
                field: "at".into(),
                reason: format!("bad coordinate `{t}`"),
            })
        })
        .collect()
}

fn ensure_out(dir: &Path) -> Result<(), WolffError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), WolffError> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn cmd_potential(a: PotentialArgs) -> Result<i32, WolffError> {
    let radius = Truncation::from_value(io::parse_f64(&a.radius).ok_or_else(|| {
        WolffError::Config { field: "R".into(), reason: format!("bad radius `{}`", a.radius) }
    })?);
    let mu = io::load_measure(&a.measure)?;
    let x = parse_point(&a.at)?;
    let quad = QuadratureConfig::default();
    let value = match a.kind.as_str() {
        "wolff" => {
            let p = a.p.ok_or_else(|| WolffError::Config {
                field: "p".into(),
                reason: "wolff potentials need --p".into(),
            })?;
            let spec = PotentialSpec::wolff(a.n_dim, a.alpha, p, radius)?;
            potential::wolff(&mu, &spec, &x, &quad)?
        }
        "riesz" => {
            let spec = PotentialSpec::riesz(a.n_dim, a.alpha, radius)?;
            potential::riesz(&mu, &spec, &x, &quad)?
        }
        "ell" => potential::ell(&mu, a.alpha, a.s, radius, &x, &quad)?,
        "frac_maximal" => potential::frac_maximal(&mu, a.alpha, radius, &x)?,
        other => {
            return Err(WolffError::Config {
                field: "kind".into(),
                reason: format!("unknown potential kind `{other}`"),
            })
        }
    };
    println!("{value}");
    if let Some(dir) = a.out {
        ensure_out(&dir)?;
        let payload = serde_json::json!({
            "kind": a.kind,
            "alpha": a.alpha,
            "p": a.p,
            "s": a.s,
            "N": a.n_dim,
            "R": a.radius,
            "at": x,
            "value": value,
        });
        write_json(&dir.join("potential.json"), &payload)?;
    }
    Ok(EXIT_OK)
}

fn cmd_capacity(a: CapacityArgs) -> Result<i32, WolffError> {
    let text = std::fs::read_to_string(&a.set)?;
    let set: CompactSet = serde_json::from_str(&text)?;
    let budget = CapacityBudget { max_iter: a.budget, ..CapacityBudget::default() };
    let est = match a.kind.as_str() {
        "riesz" => capacity::riesz_capacity(&set, a.alpha, a.p, a.grid, &budget)?,
        "bessel" => capacity::bessel_capacity(&set, a.alpha, a.p, a.grid, &budget)?,
        other => {
            return Err(WolffError::Config {
                field: "kind".into(),
                reason: format!("unknown capacity kind `{other}`"),
            })
        }
    };
    let payload = serde_json::json!({
        "lower": est.lower,
        "upper": est.upper,
        "gap": est.gap,
        "iterations": est.iterations,
    });
    println!("{}", serde_json::to_string(&payload)?);
    if let Some(dir) = a.out {
        ensure_out(&dir)?;
        write_json(&dir.join("capacity.json"), &payload)?;
    }
    Ok(if est.infeasible { EXIT_FLAGGED } else { EXIT_OK })
}

fn samples_csv(report: &criteria::ConditionReport) -> String {
    let dim = report.witness.location.len();
    let mut out = String::new();
    for a in 0..dim {
        out.push_str(&format!("x{a},"));
    }
    out.push_str("scale,ratio\n");
    for s in &report.per_sample {
        for c in &s.location {
            out.push_str(&io::fmt_f64(*c));
            out.push(',');
        }
        out.push_str(&io::fmt_f64(s.scale));
        out.push(',');
        out.push_str(&io::fmt_f64(s.ratio));
        out.push('\n');
    }
    out
}

fn cmd_check(a: CheckArgs) -> Result<i32, WolffError> {
    let mu = io::load_measure(&a.measure)?;
    let params = io::params_from_text(&std::fs::read_to_string(&a.params)?)?;
    let cfg = CheckConfig { seed: a.seed, ..CheckConfig::default() };
    let eta = match a.eta.as_str() {
        "alpha" => OuterOrder::Alpha,
        "beta" => OuterOrder::Beta,
        other => {
            return Err(WolffError::Config {
                field: "eta".into(),
                reason: format!("expected alpha|beta, got `{other}`"),
            })
        }
    };
    let kind = match a.kind.as_str() {
        "wolff" => IteratedKind::Wolff,
        "riesz" => IteratedKind::Riesz,
        other => {
            return Err(WolffError::Config {
                field: "kind".into(),
                reason: format!("expected wolff|riesz, got `{other}`"),
            })
        }
    };
    // `product` writes a different report shape
    if a.condition == "product" {
        let rep = criteria::check_product_comparability(&mu, &params, &cfg)?;
        println!("{}", serde_json::to_string(&rep)?);
        if let Some(dir) = &a.out {
            ensure_out(dir)?;
            write_json(&dir.join("report.json"), &rep)?;
        }
        return Ok(if rep.stable { EXIT_OK } else { EXIT_FLAGGED });
    }
    let report = match a.condition.as_str() {
        "growth" => criteria::check_growth(&mu, &params, &cfg)?,
        "ball" => criteria::check_ball_testing(&mu, &params, &cfg)?,
        "pointwise" => criteria::check_pointwise_iterated(&mu, &params, eta, kind, &cfg)?,
        "capacity" => {
            let kernel = match params.radius {
                Truncation::Infinite => CapKernel::Riesz,
                Truncation::Finite(_) => CapKernel::Bessel,
            };
            criteria::check_capacity_lipschitz(&mu, &params, kernel, &cfg)?
        }
        other => {
            return Err(WolffError::Config {
                field: "condition".into(),
                reason: format!("unknown condition `{other}`"),
            })
        }
    };
    println!("{}", serde_json::to_string(&report_summary(&report))?);
    if let Some(dir) = &a.out {
        ensure_out(dir)?;
        write_json(&dir.join("report.json"), &report)?;
        std::fs::write(dir.join("samples.csv"), samples_csv(&report))?;
        if a.plot {
            let pts: Vec<(f64, f64)> =
                report.per_sample.iter().map(|s| (s.scale, s.ratio)).collect();
            std::fs::write(
                dir.join("plot.svg"),
                plot::ratio_scatter_svg(&pts, &format!("{:?}", report.condition)),
            )?;
        }
    }
    let flagged = report.verdict == Verdict::BlowupSuspected || report.unreliable;
    Ok(if flagged { EXIT_FLAGGED } else { EXIT_OK })
}

fn report_summary(r: &criteria::ConditionReport) -> serde_json::Value {
    serde_json::json!({
        "condition": format!("{:?}", r.condition),
        "best_constant": r.best_constant,
        "samples": r.samples,
        "verdict": format!("{:?}", r.verdict),
        "unreliable": r.unreliable,
    })
}

fn cmd_solve_system(a: SolveSystemArgs) -> Result<i32, WolffError> {
    let mu = io::load_measure(&a.measure)?;
    let params = io::params_from_text(&std::fs::read_to_string(&a.params)?)?;
    let (center, r_s) = mu.support_bound().ok_or_else(|| {
        WolffError::InvalidMeasure("cannot size a grid around the zero measure".into())
    })?;
    let grid = GridSpec::cube(&center, 5.0 * r_s, a.grid)?;
    let cfg = SystemConfig::new(params, a.epsilon, grid)?;
    let sol = wolff_system::solve_system(&mu, &cfg)?;
    ensure_out(&a.out)?;
    io::save_field_csv(&a.out.join("U.csv"), &sol.u)?;
    io::save_field_csv(&a.out.join("V.csv"), &sol.v)?;
    write_json(&a.out.join("trace.json"), &sol.trace)?;
    let summary = serde_json::json!({
        "status": format!("{:?}", sol.status),
        "iterations": sol.iterations,
        "residual": sol.residual,
        "in_tube": sol.in_tube,
        "sup_u": sol.u.sup(),
        "sup_v": sol.v.sup(),
    });
    println!("{}", serde_json::to_string(&summary)?);
    write_json(&a.out.join("summary.json"), &summary)?;
    Ok(match sol.status {
        SolveStatus::Converged => EXIT_OK,
        _ => EXIT_FLAGGED,
    })
}

fn cmd_pde(a: PdeArgs) -> Result<i32, WolffError> {
    let mu = io::load_measure(&a.measure)?;
    let prob = RadialProblem::new(a.n_dim, a.p, a.q1, a.q2, mu.clone(), a.r_dom)?;
    let sol = radial_pde::picard_solve(&prob, a.lambda, a.max_iter)?;
    let bounds = if sol.status == SolveStatus::Converged {
        Some(radial_pde::verify_pointwise_bounds(&sol, &mu, a.p, a.n_dim, a.r_dom)?)
    } else {
        None
    };
    if let Some(dir) = &a.out {
        ensure_out(dir)?;
        let mut csv = String::from("r,u,du\n");
        for i in 0..sol.r_nodes.len() {
            csv.push_str(&format!(
                "{},{},{}\n",
                io::fmt_f64(sol.r_nodes[i]),
                io::fmt_f64(sol.u[i]),
                io::fmt_f64(sol.du[i])
            ));
        }
        std::fs::write(dir.join("solution.csv"), csv)?;
        let payload = serde_json::json!({
            "status": format!("{:?}", sol.status),
            "picard_iters": sol.picard_iters,
            "in_tube": sol.in_tube,
            "c_up": bounds.as_ref().map(|b| b.c_up),
            "c_low": bounds.as_ref().map(|b| b.c_low),
            "c_grad": bounds.as_ref().map(|b| b.c_grad),
        });
        write_json(&dir.join("bounds.json"), &payload)?;
        if a.plot {
            let u_series: Vec<(f64, f64)> =
                sol.r_nodes.iter().copied().zip(sol.u.iter().copied()).collect();
            let du_series: Vec<(f64, f64)> =
                sol.r_nodes.iter().copied().zip(sol.du.iter().map(|d| d.abs())).collect();
            std::fs::write(
                dir.join("plot.svg"),
                plot::profile_svg(&[("u", u_series), ("|du|", du_series)], "radial solution"),
            )?;
        }
    }
    let summary = serde_json::json!({
        "status": format!("{:?}", sol.status),
        "picard_iters": sol.picard_iters,
        "in_tube": sol.in_tube,
        "c_up": bounds.as_ref().map(|b| b.c_up),
        "c_low": bounds.as_ref().map(|b| b.c_low),
        "c_grad": bounds.as_ref().map(|b| b.c_grad),
    });
    println!("{}", serde_json::to_string(&summary)?);
    Ok(match sol.status {
        SolveStatus::Converged => EXIT_OK,
        _ => EXIT_FLAGGED,
    })
}

fn cmd_report(a: ReportArgs) -> Result<i32, WolffError> {
    let mut entries: Vec<(String, serde_json::Value)> = Vec::new();
    let mut names: Vec<PathBuf> = std::fs::read_dir(&a.dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map_or(false, |x| x == "json"))
        .collect();
    names.sort();
    for path in names {
        let text = std::fs::read_to_string(&path)?;
        if let Ok(v) = serde_json::from_str::<serde_json::Value>(&text) {
            entries.push((
                path.file_name().unwrap().to_string_lossy().into_owned(),
                v,
            ));
        }
    }
    let summary = serde_json::json!({
        "artifacts": entries.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        "contents": entries.iter().map(|(n, v)| serde_json::json!({"file": n, "data": v})).collect::<Vec<_>>(),
    });
    println!("{}", serde_json::to_string(&serde_json::json!({
        "artifacts": entries.len(),
    }))?);
    if let Some(dir) = &a.out {
        ensure_out(dir)?;
        write_json(&dir.join("summary.json"), &summary)?;
        if a.plot {
            // scatter all per-sample ratios found in condition reports
            let mut pts: Vec<(f64, f64)> = Vec::new();
            for (_, v) in &entries {
                if let Some(samples) = v.get("per_sample").and_then(|s| s.as_array()) {
                    for s in samples {
                        let scale = s.get("scale").and_then(|x| x.as_f64());
                        let ratio = s.get("ratio").and_then(|x| x.as_f64());
                        if let (Some(a), Some(b)) = (scale, ratio) {
                            pts.push((a, b));
                        }
                    }
                }
            }
            std::fs::write(dir.join("plot.svg"), plot::ratio_scatter_svg(&pts, "ratios"))?;
        }
    }
    Ok(EXIT_OK)
}
