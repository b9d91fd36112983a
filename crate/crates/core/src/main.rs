use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use sparsecp::error::Result;
use sparsecp::experiment::{self, LambdaPolicy};
use sparsecp::fileio;
use sparsecp::sampling::derive_seed;
use sparsecp::solver::{solve, Bounds, SolverConfig};
use sparsecp::theory::{self, TheoryParams};
use sparsecp::Error;

#[derive(Parser)]
#[command(
    name = "sparsecp",
    about = "Sparse-CP tensor completion toolkit",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the ADMM solver on an observations file.
    Solve {
        /// Observations file (`n1 n2 n3 sigma` header, then `i j k y` lines).
        #[arg(long)]
        obs: PathBuf,
        /// Solver configuration (`key = value` lines: rank, a_max, b_max,
        /// c_max, x_max, lambda, rho0, eta, delta1_stop, delta2_stop, t_max,
        /// inner_iters, inner_tol, seed).
        #[arg(long)]
        config: PathBuf,
        /// Output file for the recovered tensor.
        #[arg(long)]
        out_xhat: Option<PathBuf>,
        /// Output files for the recovered factors.
        #[arg(long)]
        out_a: Option<PathBuf>,
        #[arg(long)]
        out_b: Option<PathBuf>,
        #[arg(long)]
        out_c: Option<PathBuf>,
        /// Per-iteration history CSV (`t,delta1,delta2,objective,rho`).
        #[arg(long)]
        history: Option<PathBuf>,
    },
    /// Print the derived constants and error bound for a problem instance.
    Bound {
        #[arg(long)]
        n1: usize,
        #[arg(long)]
        n2: usize,
        #[arg(long)]
        n3: usize,
        #[arg(long = "rank")]
        rank: usize,
        /// Number of nonzeros allowed in the sparse factor.
        #[arg(long)]
        c_nnz: usize,
        /// Sample count for the error bound.
        #[arg(long)]
        m: usize,
        #[arg(long)]
        sigma: f64,
        #[arg(long, default_value_t = 1.0)]
        a_max: f64,
        #[arg(long, default_value_t = 1.0)]
        b_max: f64,
        #[arg(long, default_value_t = 1.0)]
        c_max: f64,
        #[arg(long)]
        x_max: f64,
    },
    /// Run a sampling-rate sweep on synthetic data and fit the error slope.
    Sweep {
        /// Experiment configuration (`key = value` lines; see README).
        #[arg(long)]
        config: PathBuf,
        /// Results CSV output path.
        #[arg(long)]
        out: PathBuf,
        /// Plain-text report output path.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Worker threads for trials (defaults to the rayon default).
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Generate a synthetic ground truth and (optionally) observations.
    Generate {
        /// Experiment configuration (same format as `sweep`).
        #[arg(long)]
        config: PathBuf,
        /// Observation rate; when set, also writes observations.
        #[arg(long)]
        gamma: Option<f64>,
        #[arg(long)]
        out_tensor: Option<PathBuf>,
        #[arg(long)]
        out_a: Option<PathBuf>,
        #[arg(long)]
        out_b: Option<PathBuf>,
        #[arg(long)]
        out_c: Option<PathBuf>,
        #[arg(long)]
        out_obs: Option<PathBuf>,
    },
}

fn solver_config_from_file(path: &std::path::Path) -> Result<SolverConfig> {
    let kv = fileio::read_key_values(path)?;
    let ctx = path.display().to_string();
    let bad = |key: &str, v: &str| Error::parse(&ctx, format!("bad value for {}: {:?}", key, v));
    let mut rank = 0usize;
    let mut bounds = Bounds {
        a_max: 0.0,
        b_max: 0.0,
        c_max: 0.0,
        x_max: 0.0,
    };
    let mut config = SolverConfig::new(1, bounds);
    for (key, value) in &kv {
        match key.as_str() {
            "rank" | "F" => rank = value.parse().map_err(|_| bad(key, value))?,
            "a_max" => bounds.a_max = value.parse().map_err(|_| bad(key, value))?,
            "b_max" => bounds.b_max = value.parse().map_err(|_| bad(key, value))?,
            "c_max" => bounds.c_max = value.parse().map_err(|_| bad(key, value))?,
            "x_max" => bounds.x_max = value.parse().map_err(|_| bad(key, value))?,
            "lambda" => config.lambda_reg = value.parse().map_err(|_| bad(key, value))?,
            "rho0" => config.rho0 = value.parse().map_err(|_| bad(key, value))?,
            "eta" => config.eta = value.parse().map_err(|_| bad(key, value))?,
            "delta1_stop" => config.delta1_stop = value.parse().map_err(|_| bad(key, value))?,
            "delta2_stop" => config.delta2_stop = value.parse().map_err(|_| bad(key, value))?,
            "t_max" => config.t_max = value.parse().map_err(|_| bad(key, value))?,
            "inner_iters" => config.inner_iters = value.parse().map_err(|_| bad(key, value))?,
            "inner_tol" => config.inner_tol = value.parse().map_err(|_| bad(key, value))?,
            "seed" => config.seed = value.parse().map_err(|_| bad(key, value))?,
            _ => return Err(Error::parse(&ctx, format!("unknown solver key {:?}", key))),
        }
    }
    if rank == 0 {
        return Err(Error::parse(&ctx, "rank is required"));
    }
    config.rank = rank;
    config.bounds = bounds;
    config.validate()?;
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve {
            obs,
            config,
            out_xhat,
            out_a,
            out_b,
            out_c,
            history,
        } => {
            let observations = fileio::read_observations(&obs)?;
            let solver_config = solver_config_from_file(&config)?;
            let result = solve(&observations, &solver_config)?;
            if let Some(path) = out_xhat {
                fileio::write_tensor(&path, &result.x_hat)?;
            }
            if let Some(path) = out_a {
                fileio::write_factor(&path, &result.factors.a)?;
            }
            if let Some(path) = out_b {
                fileio::write_factor(&path, &result.factors.b)?;
            }
            if let Some(path) = out_c {
                fileio::write_factor(&path, &result.factors.c)?;
            }
            if let Some(path) = history {
                fileio::write_history_csv(&path, &result.history)?;
            }
            println!("iterations = {}", result.iterations);
            println!("converged = {}", result.converged);
            if let Some(last) = result.history.last() {
                println!("delta1 = {:?}", last.delta1);
                println!("delta2 = {:?}", last.delta2);
                println!("objective = {:?}", last.objective);
                println!("rho = {:?}", last.rho);
            }
            println!("c_nnz = {}", sparsecp::tensor::nnz(&result.factors.c));
            Ok(())
        }
        Command::Bound {
            n1,
            n2,
            n3,
            rank,
            c_nnz,
            m,
            sigma,
            a_max,
            b_max,
            c_max,
            x_max,
        } => {
            let params =
                TheoryParams::for_gaussian(n1, n2, n3, rank, a_max, b_max, c_max, x_max, sigma)?;
            let pen = theory::penalty(n1, n2, n3, rank, c_nnz, params.beta)?;
            let dof = theory::degrees_of_freedom(n1, n2, rank, c_nnz);
            let rhs =
                theory::error_bound_rhs(n1, n2, n3, rank, c_nnz, m, sigma, x_max, params.beta)?;
            println!("n_max = {}", params.n_max);
            println!("beta = {:?}", params.beta);
            println!("l_lev = {}", params.l_lev);
            println!("l_loc = {}", params.l_loc);
            println!("q_d = {:?}", params.q_d);
            println!("lambda_min = {:?}", params.lambda_min);
            println!("lambda_choice = {:?}", params.lambda_choice);
            println!("pen_bits = {:?}", pen);
            println!("dof = {}", dof);
            println!("error_bound_rhs = {:?}", rhs);
            Ok(())
        }
        Command::Sweep {
            config,
            out,
            report,
            parallel,
        } => {
            if let Some(threads) = parallel {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .map_err(|e| Error::InvalidParameter(format!("thread pool: {}", e)))?;
            }
            let kv = fileio::read_key_values(&config)?;
            let experiment_config =
                experiment::config_from_key_values(&kv, &config.display().to_string())?;
            let result = experiment::run_sweep(&experiment_config)?;
            experiment::emit_csv(&result, &out)?;
            if let Some(path) = report {
                experiment::emit_report(&result, &path)?;
            }
            println!("lambda_used = {:?}", result.lambda_used);
            println!("fitted_slope = {:?}", result.fitted_slope);
            println!(
                "fit_range = [{:?}, {:?}]",
                result.fit_range.0, result.fit_range.1
            );
            Ok(())
        }
        Command::Generate {
            config,
            gamma,
            out_tensor,
            out_a,
            out_b,
            out_c,
            out_obs,
        } => {
            let kv = fileio::read_key_values(&config)?;
            let mut experiment_config =
                experiment::config_from_key_values(&kv, &config.display().to_string())?;
            // Generation only uses the truth stream; policy is irrelevant.
            experiment_config.lambda_policy = LambdaPolicy::Fixed(0.0);
            let truth_seed = derive_seed(experiment_config.master_seed, &[0]);
            let (truth, factors) = experiment::generate_synthetic(&experiment_config, truth_seed)?;
            if let Some(path) = out_tensor {
                fileio::write_tensor(&path, &truth)?;
            }
            if let Some(path) = out_a {
                fileio::write_factor(&path, &factors.a)?;
            }
            if let Some(path) = out_b {
                fileio::write_factor(&path, &factors.b)?;
            }
            if let Some(path) = out_c {
                fileio::write_factor(&path, &factors.c)?;
            }
            if let Some(path) = out_obs {
                let g = gamma.ok_or_else(|| {
                    Error::InvalidParameter("--gamma is required with --out-obs".into())
                })?;
                let mask_seed = derive_seed(experiment_config.master_seed, &[1, 0, 0]);
                let noise_seed = derive_seed(experiment_config.master_seed, &[2, 0, 0]);
                let mask = sparsecp::sample_bernoulli_mask(truth.dims(), g, mask_seed)?;
                let obs =
                    sparsecp::observe_gaussian(&truth, &mask, experiment_config.sigma, noise_seed)?;
                fileio::write_observations(&path, &obs)?;
                println!("samples = {}", obs.values.len());
            }
            println!("nnz_c = {}", sparsecp::tensor::nnz(&factors.c));
            println!("x_max_true = {:?}", truth.max_abs());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
