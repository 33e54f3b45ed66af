use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{self, BackwardConfig, Format, RunConfig};
use super::output::{self, write_all_atomic};
use super::CliError;
use crate::engine::{self, EngineConfig, ReachResult, SystemSpec};
use crate::error::ReachError;
use crate::linalg::{self, Matrix, Vector};
use crate::oracle::{self, DirectionSample};
use crate::zonotope::Zonotope;

/// Files produced by `reach`, plus the run itself.
#[derive(Debug)]
pub struct ReachOutcome {
    pub result: ReachResult,
    pub files: Vec<PathBuf>,
}

pub fn run_reach(path: &Path) -> Result<ReachOutcome, CliError> {
    let cfg: RunConfig = config::load(path)?;
    let engine_cfg = cfg.engine.to_engine_config()?;
    let sys = cfg.system.to_system(engine_cfg.tolerances.rank)?;
    let projections = cfg.outputs.projections(sys.dim())?;
    let result = engine::reach_under(&sys, &engine_cfg)?;

    let dir = &cfg.outputs.dir;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let needs_sets = cfg.outputs.wants(Format::Json) || cfg.outputs.wants(Format::Svg);
    let sets: Vec<Zonotope> = if needs_sets { result.lambda_sets().collect() } else { Vec::new() };
    if cfg.outputs.wants(Format::Json) {
        files.push((dir.join("lambda_sets.json"), output::lambda_sets_json(result.tau, sys.horizon(), &sets)));
    }
    if cfg.outputs.wants(Format::Csv) {
        files.push((dir.join("metrics.csv"), output::metrics_csv(&result, None)));
    }
    if cfg.outputs.wants(Format::Svg) && sys.dim() >= 2 {
        for dims in projections {
            let svg = output::render_svg(&sets, dims, cfg.outputs.overlay_closed_form)?;
            files.push((dir.join(format!("tube_x{}_x{}.svg", dims[0] + 1, dims[1] + 1)), svg));
        }
    }
    write_all_atomic(&files).map_err(|e| CliError::Io(dir.clone(), e))?;
    Ok(ReachOutcome {
        result,
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}

#[derive(Debug)]
pub struct BackwardOutcome {
    pub set: Zonotope,
    /// `(point, inside)` for every query point.
    pub membership: Vec<(Vector, bool)>,
    pub files: Vec<PathBuf>,
}

/// Slack used when classifying query points.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

pub fn run_backward(path: &Path) -> Result<BackwardOutcome, CliError> {
    let cfg: BackwardConfig = config::load(path)?;
    let engine_cfg = cfg.engine.to_engine_config()?;
    let problem = cfg.system.to_problem()?;
    let n = problem.a.nrows();
    let queries = cfg.query_points(n)?;
    let projections = cfg.outputs.projections(n)?;
    let set = engine::backward_reach_under(&problem.a, &problem.target, &problem.u, problem.horizon, &engine_cfg)?;
    let membership: Vec<(Vector, bool)> = queries
        .into_iter()
        .map(|q| {
            let inside = set.contains(&q, MEMBERSHIP_TOL);
            (q, inside)
        })
        .collect();

    let dir = &cfg.outputs.dir;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    if cfg.outputs.wants(Format::Json) {
        files.push((dir.join("backward_set.json"), format!("{}\n", set.to_json())));
    }
    if cfg.outputs.wants(Format::Csv) && !membership.is_empty() {
        let mut csv: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        csv.push("inside".into());
        let mut text = csv.join(",") + "\n";
        for (p, inside) in &membership {
            let coords: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            text.push_str(&format!("{},{}\n", coords.join(","), inside));
        }
        files.push((dir.join("membership.csv"), text));
    }
    if cfg.outputs.wants(Format::Svg) && n >= 2 {
        for dims in projections {
            let svg = output::render_svg(std::slice::from_ref(&set), dims, cfg.outputs.overlay_closed_form)?;
            files.push((dir.join(format!("backward_x{}_x{}.svg", dims[0] + 1, dims[1] + 1)), svg));
        }
    }
    write_all_atomic(&files).map_err(|e| CliError::Io(dir.clone(), e))?;
    Ok(BackwardOutcome {
        set,
        membership,
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceRow {
    pub steps: usize,
    pub tau: f64,
    pub gap: f64,
}

#[derive(Debug)]
pub struct ConvergenceOutcome {
    pub rows: Vec<ConvergenceRow>,
    /// Least-squares slope of `log gap` against `log τ`; `None` for fewer
    /// than two rows.
    pub slope: Option<f64>,
    pub files: Vec<PathBuf>,
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / m, ly.iter().sum::<f64>() / m);
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Gap at `t = T` between `Λ_N` and the exact reachable set, for one `N`
/// with the convergence schedule.
pub fn convergence_gap(sys: &SystemSpec, base: &EngineConfig, steps: usize, dirs: &DirectionSample) -> Result<(ReachResult, f64), ReachError> {
    let (eps_h, eps_u) = engine::eps_schedule(steps);
    let cfg = EngineConfig {
        steps,
        eps_h,
        eps_u,
        convergence_schedule: true,
        ..base.clone()
    };
    let result = engine::reach_under(sys, &cfg)?;
    let gap = oracle::hausdorff_gap_estimate(&result.lambda(steps), sys, sys.horizon(), dirs);
    Ok((result, gap))
}

pub fn run_converge(path: &Path, step_list: &[usize]) -> Result<ConvergenceOutcome, CliError> {
    let cfg: RunConfig = config::load(path)?;
    if step_list.is_empty() || step_list.contains(&0) {
        return Err(ReachError::InvalidConfig("--N needs positive step counts".into()).into());
    }
    let base = cfg.engine.to_engine_config_with_steps(step_list[0])?;
    let sys = cfg.system.to_system(base.tolerances.rank)?;
    let dirs = DirectionSample::new(sys.dim(), oracle::DEFAULT_RANDOM_DIRECTIONS, cfg.seed.unwrap_or(0));

    let dir = &cfg.outputs.dir;
    let mut files: Vec<(PathBuf, String)> = Vec::new();
    let mut rows = Vec::with_capacity(step_list.len());
    for &steps in step_list {
        let (result, gap) = convergence_gap(&sys, &base, steps, &dirs)?;
        if cfg.outputs.wants(Format::Csv) {
            let gaps: Vec<f64> = (0..=steps)
                .map(|i| oracle::hausdorff_gap_estimate(&result.lambda(i), &sys, i as f64 * result.tau, &dirs))
                .collect();
            files.push((dir.join(format!("metrics_N{steps}.csv")), output::metrics_csv(&result, Some(&gaps))));
        }
        rows.push(ConvergenceRow {
            steps,
            tau: result.tau,
            gap,
        });
    }
    let taus: Vec<f64> = rows.iter().map(|r| r.tau).collect();
    let gaps: Vec<f64> = rows.iter().map(|r| r.gap).collect();
    let slope = log_log_slope(&taus, &gaps);

    let mut table = String::from("N,tau,gap,slope\n");
    for (k, r) in rows.iter().enumerate() {
        let local = (k > 0)
            .then(|| log_log_slope(&taus[k - 1..=k], &gaps[k - 1..=k]))
            .flatten()
            .map(|s| format!("{s:.6}"))
            .unwrap_or_default();
        table.push_str(&format!("{},{:.17e},{:.17e},{}\n", r.steps, r.tau, r.gap, local));
    }
    files.push((dir.join("convergence.csv"), table));
    let summary = serde_json::json!({
        "N": rows.iter().map(|r| r.steps).collect::<Vec<_>>(),
        "tau": taus,
        "gap": gaps,
        "fitted_slope": slope,
    });
    files.push((dir.join("convergence.json"), format!("{summary:#}\n")));
    write_all_atomic(&files).map_err(|e| CliError::Io(dir.clone(), e))?;
    Ok(ConvergenceOutcome {
        rows,
        slope,
        files: files.into_iter().map(|(p, _)| p).collect(),
    })
}

/// Fixed settings of the random benchmark: `X₀ = U = B∞ⁿ`, `T = 1`,
/// `ε_h = ε_u = 0.8`.
pub const BENCH_EPS: f64 = 0.8;
pub const BENCH_HORIZON: f64 = 1.0;

fn bench_seed(seed: u64, n: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(n as u64)
}

/// Uniform(0,1) matrix divided by its max norm, redrawn until
/// `∫₀^{T/N} e^{sA} ds` is invertible. Returns the matrix and the number of
/// rejected draws.
pub fn random_normalized_matrix(n: usize, steps: usize, seed: u64) -> (Matrix, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(bench_seed(seed, n));
    let tau = BENCH_HORIZON / steps as f64;
    let tol = linalg::Tolerances::default();
    let mut rejected = 0;
    loop {
        let a = Matrix::from_fn(n, n, |_, _| rng.random::<f64>());
        let norm = linalg::inf_norm(&a);
        if norm == 0.0 {
            rejected += 1;
            continue;
        }
        let a = a / norm;
        if linalg::integral_invertible(&a, tau, tol.eig_band(&a)) {
            return (a, rejected);
        }
        rejected += 1;
    }
}

pub fn bench_problem(n: usize, steps: usize, seed: u64) -> (SystemSpec, EngineConfig, usize) {
    let (a, rejected) = random_normalized_matrix(n, steps, seed);
    let sys = SystemSpec::new(a, Zonotope::unit_box(n), Zonotope::unit_box(n), BENCH_HORIZON, linalg::DEFAULT_TOL_RANK)
        .expect("unit boxes are full-dimensional");
    (sys, EngineConfig::new(steps, BENCH_EPS, BENCH_EPS), rejected)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub steps: usize,
    pub wall_seconds: f64,
    pub gen_count: usize,
    pub max_kappa: u32,
    pub rejected: usize,
}

#[derive(Debug)]
pub struct BenchOutcome {
    pub rows: Vec<BenchRow>,
    /// `(n, error)` for draws whose selector search failed.
    pub failures: Vec<(usize, ReachError)>,
    pub file: PathBuf,
}

pub fn run_random_bench(ns: &[usize], steps: usize, seed: u64, runs: usize, out: &Path) -> Result<BenchOutcome, CliError> {
    if ns.is_empty() || ns.contains(&0) || steps == 0 || runs == 0 {
        return Err(ReachError::InvalidConfig("--n entries, --N and --runs must be positive".into()).into());
    }
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for &n in ns {
        let (sys, cfg, rejected) = bench_problem(n, steps, seed);
        let mut total = 0.0;
        let mut last = None;
        let mut failed = None;
        for _ in 0..runs {
            let start = Instant::now();
            match engine::reach_under(&sys, &cfg) {
                Ok(res) => {
                    total += start.elapsed().as_secs_f64();
                    last = Some(res);
                }
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        match (failed, last) {
            (Some(e), _) => failures.push((n, e)),
            (None, Some(res)) => rows.push(BenchRow {
                n,
                steps,
                wall_seconds: total / runs as f64,
                gen_count: res.lambda_gen_count(steps),
                max_kappa: res.steps.iter().filter_map(|s| s.kappa()).max().unwrap_or(0),
                rejected,
            }),
            (None, None) => unreachable!("runs >= 1"),
        }
    }
    let mut text = String::from("n,N,wall_s,gen_count,max_kappa,rejected\n");
    for r in &rows {
        text.push_str(&format!(
            "{},{},{:.6},{},{},{}\n",
            r.n, r.steps, r.wall_seconds, r.gen_count, r.max_kappa, r.rejected
        ));
    }
    output::write_atomic(out, &text).map_err(|e| CliError::Io(out.to_path_buf(), e))?;
    Ok(BenchOutcome {
        rows,
        failures,
        file: out.to_path_buf(),
    })
}

pub fn run_plot(sets_path: &Path, dims: [usize; 2], out: &Path, overlay: bool) -> Result<(), CliError> {
    let doc: output::SetsDocument = config::load(sets_path)?;
    let sets = doc.into_zonotopes()?;
    if dims[0] == 0 || dims[1] == 0 || dims[0] == dims[1] {
        return Err(ReachError::InvalidConfig(format!("--dims {},{} is invalid", dims[0], dims[1])).into());
    }
    let svg = output::render_svg(&sets, [dims[0] - 1, dims[1] - 1], overlay)?;
    output::write_atomic(out, &svg).map_err(|e| CliError::Io(out.to_path_buf(), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let xs = [0.1, 0.05, 0.025];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(1.2)).collect();
        assert!((log_log_slope(&xs, &ys).unwrap() - 1.2).abs() < 1e-12);
        assert_eq!(log_log_slope(&[0.1], &[0.2]), None);
    }

    #[test]
    fn random_matrices_are_normalized_and_reproducible() {
        let (a, _) = random_normalized_matrix(5, 100, 7);
        assert!((linalg::inf_norm(&a) - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&x| x >= 0.0));
        let (b, _) = random_normalized_matrix(5, 100, 7);
        assert_eq!(a, b);
        let (c, _) = random_normalized_matrix(5, 100, 8);
        assert_ne!(a, c);
    }
}
