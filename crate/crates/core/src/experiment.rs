//! Synthetic sweep harness: generate a sparse-CP ground truth, sweep
//! Bernoulli sampling rates, average trials, and fit the log-log error
//! slope.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sampling::{derive_seed, observe_gaussian, sample_bernoulli_mask};
use crate::solver::{solve, Bounds, SolveResult, SolverConfig};
use crate::tensor::{cp_reconstruct, nnz, CpFactors, Tensor3};
use crate::theory;

// Seed stream tags.
const TAG_TRUTH: u64 = 0;
const TAG_MASK: u64 = 1;
const TAG_NOISE: u64 = 2;
const TAG_INIT: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum LambdaPolicy {
    Fixed(f64),
    /// Derive lambda from the theory constants for the instance.
    Theory,
    /// Run the sweep per candidate and keep the lambda minimizing the sum of
    /// log-errors across the grid.
    Grid(Vec<f64>),
}

/// Solver knobs shared by every trial of a sweep; rank, bounds and seeds are
/// filled in per trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    /// Initial penalty; `None` picks `1/sigma^2`, matching the weight of the
    /// data term so the splitting stays well conditioned.
    pub rho0: Option<f64>,
    pub eta: f64,
    pub delta1_stop: f64,
    pub delta2_stop: f64,
    pub t_max: usize,
    pub inner_iters: usize,
    pub inner_tol: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            rho0: None,
            // The residual-balancing rule tends to shrink rho while the
            // factors are still in flux; a gentle eta keeps it stable.
            eta: 1.01,
            delta1_stop: 1e-3,
            delta2_stop: 1e-3,
            t_max: 400,
            inner_iters: 15,
            inner_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    /// `||C*||_0 = round(fraction * n3 * F)`, at least 1 for fraction > 0.
    pub sparsity_fraction: f64,
    /// Bounds used when generating the true factors.
    pub true_bounds: (f64, f64, f64),
    pub sigma: f64,
    pub gamma_grid: Vec<f64>,
    pub trials: usize,
    pub solver: SolverSettings,
    pub lambda_policy: LambdaPolicy,
    /// Random initializations per trial; the fit with the lowest final
    /// objective wins. The factorization is nonconvex and single runs land
    /// in bad basins often enough to distort sweep means.
    pub restarts: usize,
    pub master_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity_fraction > 0.0 && self.sparsity_fraction <= 1.0) {
            return Err(Error::InvalidParameter(
                "sparsity_fraction must be in (0, 1]".into(),
            ));
        }
        if self.trials == 0 {
            return Err(Error::InvalidParameter("trials must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.gamma_grid.is_empty() {
            return Err(Error::InvalidParameter("gamma grid is empty".into()));
        }
        for &g in &self.gamma_grid {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::InvalidParameter(format!(
                    "gamma {} out of (0, 1]",
                    g
                )));
            }
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if self.rank == 0 {
            return Err(Error::InvalidParameter("rank must be positive".into()));
        }
        Ok(())
    }

    /// Default grid: 8 log-spaced gamma values in [0.1, 0.9].
    pub fn default_gamma_grid() -> Vec<f64> {
        log_spaced(0.1, 0.9, 8)
    }
}

pub fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| (llo + (lhi - llo) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub gamma: f64,
    pub mean_err: f64,
    pub std_error: f64,
    pub trials_used: usize,
    /// Set when more than half the trials hit t_max without converging.
    pub flagged: bool,
}

/// Instance constants carried along for the report's theory-bound column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundInfo {
    pub dims: (usize, usize, usize),
    pub rank: usize,
    pub c_nnz: usize,
    pub sigma: f64,
    pub x_max: f64,
    pub beta: f64,
}

impl BoundInfo {
    pub fn bound_at(&self, gamma: f64) -> Result<f64> {
        let n = self.dims.0 * self.dims.1 * self.dims.2;
        let m = ((gamma * n as f64).round() as usize).clamp(1, n);
        theory::error_bound_rhs(
            self.dims.0,
            self.dims.1,
            self.dims.2,
            self.rank,
            self.c_nnz,
            m,
            self.sigma,
            self.x_max,
            self.beta,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub fitted_slope: f64,
    pub fit_range: (f64, f64),
    pub lambda_used: f64,
    pub bound_info: BoundInfo,
}

/// Draws the true factors with standard normal entries clamped to the
/// configured bounds; C keeps exactly `k = round(fraction * n3 * F)` entries
/// (chosen uniformly without replacement) and zeroes the rest.
pub fn generate_synthetic(config: &ExperimentConfig, seed: u64) -> Result<(Tensor3, CpFactors)> {
    config.validate()?;
    let (n1, n2, n3) = config.dims;
    let (a_max, b_max, c_max) = config.true_bounds;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = StandardNormal;
    let mut draw = |rows: usize, bound: f64| {
        Array2::from_shape_fn((rows, config.rank), |_| {
            let v: f64 = normal.sample(&mut rng);
            v.clamp(-bound, bound)
        })
    };
    let a = draw(n1, a_max);
    let b = draw(n2, b_max);
    let mut c = draw(n3, c_max);

    let cells = n3 * config.rank;
    let k = ((config.sparsity_fraction * cells as f64).round() as usize)
        .max(1)
        .min(cells);
    // Partial Fisher-Yates over cell indices: first k entries are the support.
    let mut order: Vec<usize> = (0..cells).collect();
    for i in 0..k {
        let j = i + rng.random_range(0..cells - i);
        order.swap(i, j);
    }
    let keep: std::collections::HashSet<usize> = order[..k].iter().cloned().collect();
    for (idx, v) in c.iter_mut().enumerate() {
        if !keep.contains(&idx) {
            *v = 0.0;
        }
    }
    let factors = CpFactors::new(a, b, c)?;
    let truth = cp_reconstruct(&factors);
    Ok((truth, factors))
}

struct TrialOutcome {
    err: f64,
    converged: bool,
}

fn run_trial(
    config: &ExperimentConfig,
    truth: &Tensor3,
    bounds: Bounds,
    lambda: f64,
    gamma_idx: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let gamma = config.gamma_grid[gamma_idx];
    let mask_seed = derive_seed(
        config.master_seed,
        &[TAG_MASK, gamma_idx as u64, trial as u64],
    );
    let noise_seed = derive_seed(
        config.master_seed,
        &[TAG_NOISE, gamma_idx as u64, trial as u64],
    );
    let mask = sample_bernoulli_mask(truth.dims(), gamma, mask_seed)?;
    let obs = observe_gaussian(truth, &mask, config.sigma, noise_seed)?;
    let mut solver_config = SolverConfig::new(config.rank, bounds);
    solver_config.lambda_reg = lambda;
    solver_config.rho0 = config
        .solver
        .rho0
        .unwrap_or(1.0 / (config.sigma * config.sigma));
    solver_config.eta = config.solver.eta;
    solver_config.delta1_stop = config.solver.delta1_stop;
    solver_config.delta2_stop = config.solver.delta2_stop;
    solver_config.t_max = config.solver.t_max;
    solver_config.inner_iters = config.solver.inner_iters;
    solver_config.inner_tol = config.solver.inner_tol;
    let mut best: Option<(f64, SolveResult)> = None;
    for restart in 0..config.restarts {
        solver_config.seed = derive_seed(
            config.master_seed,
            &[TAG_INIT, gamma_idx as u64, trial as u64, restart as u64],
        );
        let result = solve(&obs, &solver_config)?;
        let objective = result
            .history
            .last()
            .map(|rec| rec.objective)
            .unwrap_or(f64::INFINITY);
        if best.as_ref().map(|(o, _)| objective < *o).unwrap_or(true) {
            best = Some((objective, result));
        }
    }
    let (_, result) = best.expect("at least one restart");
    let n = (truth.dims().0 * truth.dims().1 * truth.dims().2) as f64;
    let d = result.x_hat.frobenius_distance(truth);
    Ok(TrialOutcome {
        err: d * d / n,
        converged: result.converged,
    })
}

fn sweep_rows(
    config: &ExperimentConfig,
    truth: &Tensor3,
    bounds: Bounds,
    lambda: f64,
) -> Result<Vec<SweepRow>> {
    let tasks: Vec<(usize, usize)> = (0..config.gamma_grid.len())
        .flat_map(|g| (0..config.trials).map(move |t| (g, t)))
        .collect();
    // Ordered collect keeps the reduction deterministic regardless of the
    // rayon schedule.
    let outcomes: Vec<Result<TrialOutcome>> = tasks
        .par_iter()
        .map(|&(g, t)| run_trial(config, truth, bounds, lambda, g, t))
        .collect();

    let mut rows = Vec::with_capacity(config.gamma_grid.len());
    for (g, &gamma) in config.gamma_grid.iter().enumerate() {
        let mut errs = Vec::with_capacity(config.trials);
        let mut converged = 0usize;
        for t in 0..config.trials {
            let outcome = outcomes[g * config.trials + t].as_ref().map_err(|e| {
                Error::InvalidParameter(format!("trial (gamma {}, {}) failed: {}", gamma, t, e))
            })?;
            errs.push(outcome.err);
            if outcome.converged {
                converged += 1;
            }
        }
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let std_error = if errs.len() > 1 {
            let var = errs.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / (n - 1.0);
            (var / n).sqrt()
        } else {
            0.0
        };
        rows.push(SweepRow {
            gamma,
            mean_err: mean,
            std_error,
            trials_used: errs.len(),
            flagged: converged * 2 < config.trials,
        });
    }
    Ok(rows)
}

/// Runs the full sweep: one ground truth per sweep, per-trial derived seeds,
/// solver bounds set to twice the true bounds (and `X_max = 2 ||X*||_inf`).
pub fn run_sweep(config: &ExperimentConfig) -> Result<SweepResult> {
    config.validate()?;
    let truth_seed = derive_seed(config.master_seed, &[TAG_TRUTH]);
    let (truth, true_factors) = generate_synthetic(config, truth_seed)?;
    // Solver boxes: twice the realized factor magnitudes. Generous clamp
    // bounds would blow up the (box-scaled) random initialization without
    // admitting any additional ground truths.
    let mat_max = |m: &Array2<f64>| m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let bounds = Bounds {
        a_max: 2.0 * mat_max(&true_factors.a),
        b_max: 2.0 * mat_max(&true_factors.b),
        c_max: 2.0 * mat_max(&true_factors.c),
        x_max: 2.0 * truth.max_abs(),
    };

    let lambdas: Vec<f64> = match &config.lambda_policy {
        LambdaPolicy::Fixed(v) => vec![*v],
        LambdaPolicy::Theory => {
            let n_max = config
                .dims
                .0
                .max(config.dims.1)
                .max(config.dims.2)
                .max(config.rank);
            let beta = theory::compute_beta(
                config.rank,
                bounds.a_max,
                bounds.b_max,
                bounds.c_max,
                bounds.x_max,
                n_max,
            )?;
            let q_d = theory::compute_qd_gaussian(bounds.x_max, config.sigma);
            vec![theory::compute_lambda(beta, q_d, n_max)]
        }
        LambdaPolicy::Grid(values) => {
            if values.is_empty() {
                return Err(Error::InvalidParameter("empty lambda grid".into()));
            }
            values.clone()
        }
    };

    let mut best: Option<(f64, Vec<SweepRow>, f64)> = None;
    for &lambda in &lambdas {
        let rows = sweep_rows(config, &truth, bounds, lambda)?;
        let score: f64 = rows.iter().map(|r| r.mean_err.max(1e-300).ln()).sum();
        if best.as_ref().map(|(s, _, _)| score < *s).unwrap_or(true) {
            best = Some((score, rows, lambda));
        }
    }
    let (_, rows, lambda_used) = best.unwrap();

    // Slope over the upper half of the grid.
    let start = rows.len() / 2;
    let points: Vec<(f64, f64)> = rows[start..]
        .iter()
        .map(|r| (r.gamma.ln(), r.mean_err.max(1e-300).ln()))
        .collect();
    let fitted_slope = fit_slope(&points)?;
    let fit_range = (rows[start].gamma, rows[rows.len() - 1].gamma);

    let n_max = config
        .dims
        .0
        .max(config.dims.1)
        .max(config.dims.2)
        .max(config.rank);
    let beta = theory::compute_beta(
        config.rank,
        bounds.a_max,
        bounds.b_max,
        bounds.c_max,
        bounds.x_max,
        n_max,
    )?;
    Ok(SweepResult {
        rows,
        fitted_slope,
        fit_range,
        lambda_used,
        bound_info: BoundInfo {
            dims: config.dims,
            rank: config.rank,
            c_nnz: nnz(&true_factors.c),
            sigma: config.sigma,
            x_max: bounds.x_max,
            beta,
        },
    })
}

/// Ordinary least-squares slope of `y` on `x` over `(x, y)` points.
pub fn fit_slope(points: &[(f64, f64)]) -> Result<f64> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return Err(Error::InvalidParameter(
            "slope fit needs at least 2 points".into(),
        ));
    }
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidParameter(
            "slope fit needs distinct abscissae".into(),
        ));
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    Ok(sxy / sxx)
}

/// Statistical monotonicity check: mean error non-increasing in gamma, with
/// at most one adjacent inversion that stays within one standard error.
pub fn errors_monotone(rows: &[SweepRow]) -> bool {
    let mut inversions = 0;
    for w in rows.windows(2) {
        if w[1].mean_err > w[0].mean_err {
            let slack = w[0].std_error.max(w[1].std_error);
            if w[1].mean_err - w[0].mean_err > slack {
                return false;
            }
            inversions += 1;
        }
    }
    inversions <= 1
}

pub fn emit_csv(result: &SweepResult, path: &Path) -> Result<()> {
    let mut out = String::from("gamma,log10_gamma,mean_err,log10_mean_err,stderr,trials\n");
    for r in &result.rows {
        writeln!(
            out,
            "{:?},{:?},{:?},{:?},{:?},{}",
            r.gamma,
            r.gamma.log10(),
            r.mean_err,
            r.mean_err.max(1e-300).log10(),
            r.std_error,
            r.trials_used
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses a CSV produced by [`emit_csv`]; returns (gamma, mean_err, stderr,
/// trials) rows.
pub fn parse_csv(path: &Path) -> Result<Vec<(f64, f64, f64, usize)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let ctx = path.display().to_string();
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse(&ctx, "empty CSV"))?;
    if header != "gamma,log10_gamma,mean_err,log10_mean_err,stderr,trials" {
        return Err(Error::parse(&ctx, "unexpected CSV header"));
    }
    let mut rows = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 6 {
            return Err(Error::parse(&ctx, format!("bad CSV row {:?}", line)));
        }
        let parse = |s: &str| -> Result<f64> {
            s.parse()
                .map_err(|e| Error::parse(&ctx, format!("bad number {:?}: {}", s, e)))
        };
        rows.push((
            parse(parts[0])?,
            parse(parts[2])?,
            parse(parts[4])?,
            parts[5]
                .parse()
                .map_err(|e| Error::parse(&ctx, format!("bad trial count: {}", e)))?,
        ));
    }
    Ok(rows)
}

pub fn emit_report(result: &SweepResult, path: &Path) -> Result<()> {
    let mut out = String::new();
    let bi = &result.bound_info;
    writeln!(out, "sweep report").expect("string write");
    writeln!(
        out,
        "dims = {}x{}x{}  F = {}  nnz(C*) = {}  sigma = {}",
        bi.dims.0, bi.dims.1, bi.dims.2, bi.rank, bi.c_nnz, bi.sigma
    )
    .expect("string write");
    writeln!(out, "lambda = {}", result.lambda_used).expect("string write");
    writeln!(
        out,
        "fitted slope = {:.6} over gamma in [{:.6}, {:.6}]",
        result.fitted_slope, result.fit_range.0, result.fit_range.1
    )
    .expect("string write");
    writeln!(out).expect("string write");
    writeln!(
        out,
        "gamma      mean_err      stderr        theory_bound  flags"
    )
    .expect("string write");
    for r in &result.rows {
        let bound = bi.bound_at(r.gamma)?;
        writeln!(
            out,
            "{:<10.6} {:<13.6e} {:<13.6e} {:<13.6e} {}",
            r.gamma,
            r.mean_err,
            r.std_error,
            bound,
            if r.flagged { "FLAGGED" } else { "" }
        )
        .expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Parses an [`ExperimentConfig`] from `key = value` pairs.
pub fn config_from_key_values(kv: &[(String, String)], ctx: &str) -> Result<ExperimentConfig> {
    let mut dims = (0usize, 0usize, 0usize);
    let mut rank = 0usize;
    let mut sparsity_fraction = 0.2;
    let mut true_bounds = (1.0, 1.0, 10.0);
    let mut sigma = 0.25;
    let mut gamma_grid = ExperimentConfig::default_gamma_grid();
    let mut trials = 10usize;
    let mut solver = SolverSettings::default();
    let mut lambda_policy = LambdaPolicy::Fixed(0.0);
    let mut restarts = 1usize;
    let mut master_seed = 0u64;

    let bad = |key: &str, v: &str| Error::parse(ctx, format!("bad value for {}: {:?}", key, v));
    for (key, value) in kv {
        match key.as_str() {
            "n1" => dims.0 = value.parse().map_err(|_| bad(key, value))?,
            "n2" => dims.1 = value.parse().map_err(|_| bad(key, value))?,
            "n3" => dims.2 = value.parse().map_err(|_| bad(key, value))?,
            "F" | "rank" => rank = value.parse().map_err(|_| bad(key, value))?,
            "sparsity_fraction" => {
                sparsity_fraction = value.parse().map_err(|_| bad(key, value))?
            }
            "a_max" => true_bounds.0 = value.parse().map_err(|_| bad(key, value))?,
            "b_max" => true_bounds.1 = value.parse().map_err(|_| bad(key, value))?,
            "c_max" => true_bounds.2 = value.parse().map_err(|_| bad(key, value))?,
            "sigma" => sigma = value.parse().map_err(|_| bad(key, value))?,
            "trials" => trials = value.parse().map_err(|_| bad(key, value))?,
            "restarts" => restarts = value.parse().map_err(|_| bad(key, value))?,
            "master_seed" | "seed" => master_seed = value.parse().map_err(|_| bad(key, value))?,
            "gamma_grid" => {
                gamma_grid = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad(key, value)))
                    .collect::<Result<_>>()?
            }
            "rho0" => {
                solver.rho0 = if *value == "auto" {
                    None
                } else {
                    Some(value.parse().map_err(|_| bad(key, value))?)
                }
            }
            "eta" => solver.eta = value.parse().map_err(|_| bad(key, value))?,
            "delta1_stop" => solver.delta1_stop = value.parse().map_err(|_| bad(key, value))?,
            "delta2_stop" => solver.delta2_stop = value.parse().map_err(|_| bad(key, value))?,
            "t_max" => solver.t_max = value.parse().map_err(|_| bad(key, value))?,
            "inner_iters" => solver.inner_iters = value.parse().map_err(|_| bad(key, value))?,
            "inner_tol" => solver.inner_tol = value.parse().map_err(|_| bad(key, value))?,
            "lambda_policy" => {
                lambda_policy = if *value == "theory" {
                    LambdaPolicy::Theory
                } else if let Some(v) = value.strip_prefix("fixed:") {
                    LambdaPolicy::Fixed(v.trim().parse().map_err(|_| bad(key, value))?)
                } else if let Some(v) = value.strip_prefix("grid:") {
                    LambdaPolicy::Grid(
                        v.split(',')
                            .map(|s| s.trim().parse().map_err(|_| bad(key, value)))
                            .collect::<Result<_>>()?,
                    )
                } else {
                    return Err(bad(key, value));
                }
            }
            _ => return Err(Error::parse(ctx, format!("unknown config key {:?}", key))),
        }
    }
    if dims.0 == 0 || dims.1 == 0 || dims.2 == 0 || rank == 0 {
        return Err(Error::parse(ctx, "n1, n2, n3 and F are required"));
    }
    let config = ExperimentConfig {
        dims,
        rank,
        sparsity_fraction,
        true_bounds,
        sigma,
        gamma_grid,
        trials,
        solver,
        lambda_policy,
        restarts,
        master_seed,
    };
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dims: (6, 6, 8),
            rank: 2,
            sparsity_fraction: 0.25,
            true_bounds: (1.0, 1.0, 2.0),
            sigma: 0.1,
            gamma_grid: vec![0.4, 0.6, 0.8, 1.0],
            trials: 2,
            solver: SolverSettings {
                t_max: 150,
                ..SolverSettings::default()
            },
            lambda_policy: LambdaPolicy::Fixed(0.0),
            restarts: 1,
            master_seed: 42,
        }
    }

    #[test]
    fn synthetic_respects_bounds_and_sparsity() {
        let config = small_config();
        for seed in 0..100 {
            let (_, f) = generate_synthetic(&config, seed).unwrap();
            assert!(f.a.iter().all(|v| v.abs() <= config.true_bounds.0));
            assert!(f.b.iter().all(|v| v.abs() <= config.true_bounds.1));
            assert!(f.c.iter().all(|v| v.abs() <= config.true_bounds.2));
            let k = (0.25 * (8 * 2) as f64).round() as usize;
            assert_eq!(nnz(&f.c), k);
        }
    }

    #[test]
    fn synthetic_full_fraction_keeps_everything() {
        let mut config = small_config();
        config.sparsity_fraction = 1.0;
        let (_, f) = generate_synthetic(&config, 3).unwrap();
        // Standard normal draws are almost surely nonzero before masking.
        assert_eq!(nnz(&f.c), 8 * 2);
    }

    #[test]
    fn reference_scale_sparsity_level() {
        let mut config = small_config();
        config.dims = (30, 30, 50);
        config.rank = 5;
        config.sparsity_fraction = 0.2;
        let (_, f) = generate_synthetic(&config, 1).unwrap();
        assert_eq!(nnz(&f.c), 50);
    }

    #[test]
    fn fit_slope_exact_lines() {
        let points: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -(i as f64) + 3.0)).collect();
        assert!((fit_slope(&points).unwrap() + 1.0).abs() < 1e-12);
        let steep: Vec<(f64, f64)> = (0..10).map(|i| (i as f64, -2.0 * i as f64)).collect();
        assert!((fit_slope(&steep).unwrap() + 2.0).abs() < 1e-12);
        assert!(fit_slope(&[(1.0, 2.0)]).is_err());
        assert!(fit_slope(&[(1.0, 2.0), (1.0, 3.0)]).is_err());
    }

    #[test]
    fn fit_slope_noisy_planted_line() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let planted = -1.37;
        let points: Vec<(f64, f64)> = (0..100)
            .map(|i| {
                let x = i as f64 / 10.0;
                (
                    x,
                    planted * x + 0.5 + 0.01 * (rng.random::<f64>() * 2.0 - 1.0),
                )
            })
            .collect();
        let slope = fit_slope(&points).unwrap();
        assert!((slope - planted).abs() < 0.02, "slope {}", slope);
    }

    #[test]
    fn sweep_deterministic_and_monotone() {
        let config = small_config();
        let r1 = run_sweep(&config).unwrap();
        let r2 = run_sweep(&config).unwrap();
        assert_eq!(r1, r2);
        assert!(errors_monotone(&r1.rows), "rows: {:?}", r1.rows);
        for w in r1.rows.windows(2) {
            assert!(w[0].gamma < w[1].gamma);
        }
    }

    #[test]
    fn csv_roundtrip_and_report() {
        let config = small_config();
        let result = run_sweep(&config).unwrap();
        let dir = tempdir().unwrap();
        let csv = dir.path().join("out.csv");
        emit_csv(&result, &csv).unwrap();
        let rows = parse_csv(&csv).unwrap();
        assert_eq!(rows.len(), result.rows.len());
        for (parsed, row) in rows.iter().zip(&result.rows) {
            assert_eq!(parsed.0, row.gamma);
            assert_eq!(parsed.1, row.mean_err);
            assert_eq!(parsed.2, row.std_error);
            assert_eq!(parsed.3, row.trials_used);
        }
        let report = dir.path().join("report.txt");
        emit_report(&result, &report).unwrap();
        let text = std::fs::read_to_string(&report).unwrap();
        assert!(text.contains(&format!("{:.6}", result.fitted_slope)));
        assert!(text.contains("theory_bound"));
    }

    #[test]
    fn empty_rows_header_only() {
        let result = SweepResult {
            rows: vec![],
            fitted_slope: 0.0,
            fit_range: (0.0, 0.0),
            lambda_used: 0.0,
            bound_info: BoundInfo {
                dims: (2, 2, 2),
                rank: 1,
                c_nnz: 0,
                sigma: 1.0,
                x_max: 1.0,
                beta: 1.0,
            },
        };
        let dir = tempdir().unwrap();
        let csv = dir.path().join("empty.csv");
        emit_csv(&result, &csv).unwrap();
        let text = std::fs::read_to_string(&csv).unwrap();
        assert_eq!(
            text,
            "gamma,log10_gamma,mean_err,log10_mean_err,stderr,trials\n"
        );
        assert!(parse_csv(&csv).unwrap().is_empty());
    }

    #[test]
    fn config_parsing() {
        let kv = crate::fileio::parse_key_values(
            "n1 = 6\nn2 = 6\nn3 = 8\nF = 2\nsigma = 0.1\ntrials = 3\n\
             gamma_grid = 0.2, 0.5, 0.9\nlambda_policy = grid: 0.1, 1.0\nmaster_seed = 7\n",
            "test",
        )
        .unwrap();
        let config = config_from_key_values(&kv, "test").unwrap();
        assert_eq!(config.dims, (6, 6, 8));
        assert_eq!(config.gamma_grid, vec![0.2, 0.5, 0.9]);
        assert_eq!(config.lambda_policy, LambdaPolicy::Grid(vec![0.1, 1.0]));
        assert_eq!(config.trials, 3);

        let missing = crate::fileio::parse_key_values("n1 = 2\n", "test").unwrap();
        assert!(config_from_key_values(&missing, "test").is_err());
    }

    #[test]
    fn log_spaced_grid() {
        let g = ExperimentConfig::default_gamma_grid();
        assert_eq!(g.len(), 8);
        assert!((g[0] - 0.1).abs() < 1e-12);
        assert!((g[7] - 0.9).abs() < 1e-12);
        for w in g.windows(2) {
            assert!(w[0] < w[1]);
        }
    }
}
