//! `fogcomp` command-line front end.
//!
//! Exit codes: 0 on success, 1 when the instance is infeasible, 2 on any
//! other error (bad arguments, unreadable files, solver failures).

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fogcomp::bench::{self, generate_instance, parse_override, read_instance};
use fogcomp::fit::{fit_comparison_models, read_samples};
use fogcomp::jcora::{self, Solution};
use fogcomp::model::{self, Instance, Mode};
use fogcomp::oracle::{grid_solve, GridSpec};
use fogcomp::recompress::{solve_ext, ExtAlgorithm};
use fogcomp::Error;

#[derive(Parser)]
#[command(
    name = "fogcomp",
    version,
    about = "Min-max energy/delay optimizer for compressed offloading"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the power-law workload model (and the linear and exponential
    /// alternatives) to `omega y` samples.
    Fit { samples: PathBuf },
    /// Exact min-max solve without fog recompression.
    Solve {
        instance: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
    },
    /// Solve with fog recompression enabled.
    SolveExt {
        instance: PathBuf,
        #[arg(long, value_enum)]
        algo: ExtChoice,
        #[arg(long, default_value_t = 1e-3)]
        epsilon: f64,
        /// PLA segments.
        #[arg(long, default_value_t = 9)]
        segments: usize,
        /// OSTS multiplier step (normalized units).
        #[arg(long, default_value_t = 5e-3)]
        lambda_step: f64,
        /// IUTS iteration cap.
        #[arg(long, default_value_t = 500)]
        iters: usize,
    },
    /// Brute-force grid search (at most 3 users).
    Oracle {
        instance: PathBuf,
        /// Points per axis.
        #[arg(long, default_value_t = 60)]
        grid: usize,
        /// Nested refinement levels.
        #[arg(long, default_value_t = 2)]
        levels: usize,
    },
    /// Generate a random instance file.
    Gen {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        k: usize,
        /// Scenario override, repeatable: `--set b_in=2.4e6`.
        #[arg(long = "set", value_name = "KEY=VAL")]
        overrides: Vec<String>,
        /// Output file; stdout when omitted.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run a sweep file and write `runs.csv` and `aggregate.csv`.
    Sweep {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall time per run (makes the CSV non-reproducible).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExtChoice {
    Pla,
    Osts,
    Iuts,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<Error>() {
                Some(Error::Infeasible(_)) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn load(path: &Path) -> Result<Instance> {
    read_instance(path).with_context(|| format!("reading instance {}", path.display()))
}

fn run(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Fit { samples } => {
            let s = read_samples(&samples).with_context(|| format!("reading samples {}", samples.display()))?;
            let r = fit_comparison_models(&s)?;
            let p = &r.power_law;
            println!("samples = {}", s.len());
            println!(
                "power_law: gamma1 = {:.6e}, gamma2 = {:.6}, gamma3 = {:.6}, rmse = {:.6e}",
                p.gamma1, p.gamma2, p.gamma3, r.rmse_power_law
            );
            println!(
                "linear: slope = {:.6e}, intercept = {:.6e}, rmse = {:.6e}",
                r.linear.slope, r.linear.intercept, r.rmse_linear
            );
            println!(
                "exponential: eps1 = {:.6e}, eps2 = {:.6}, rmse = {:.6e}",
                r.exponential.eps1(),
                r.exponential.eps2,
                r.rmse_exponential
            );
            println!("best = {:?}", r.best());
        }
        Command::Solve { instance, epsilon } => {
            let inst = load(&instance)?;
            let sol = jcora::solve(&inst, epsilon)?;
            print_solution(&inst, &sol);
        }
        Command::SolveExt {
            instance,
            algo,
            epsilon,
            segments,
            lambda_step,
            iters,
        } => {
            let inst = load(&instance)?;
            let ExtAlgorithm::Iuts { step, .. } = ExtAlgorithm::IUTS_DEFAULT else {
                unreachable!()
            };
            let algo = match algo {
                ExtChoice::Pla => ExtAlgorithm::Pla { segments },
                ExtChoice::Osts => ExtAlgorithm::Osts {
                    delta_lambda: lambda_step,
                },
                ExtChoice::Iuts => ExtAlgorithm::Iuts { max_iters: iters, step },
            };
            let sol = solve_ext(&inst, epsilon, algo)?;
            print_solution(&inst, &sol);
        }
        Command::Oracle { instance, grid, levels } => {
            let inst = load(&instance)?;
            let res = grid_solve(
                &inst,
                &GridSpec {
                    points: grid,
                    levels,
                    ..GridSpec::default()
                },
            )?;
            if !res.eta.is_finite() {
                eprintln!("no feasible grid point");
                return Ok(ExitCode::from(1));
            }
            println!("eta = {:.9}", res.eta);
            for (k, (m, d)) in res.modes.iter().zip(&res.decisions).enumerate() {
                let cost = model::wedc(d, &inst.users[k], &inst.config);
                println!("user {k}: mode = {}, cost = {cost:.9}", mode_name(*m));
            }
        }
        Command::Gen {
            seed,
            k,
            overrides,
            out,
        } => {
            let ov = overrides
                .iter()
                .map(|s| parse_override(s))
                .collect::<fogcomp::Result<Vec<_>>>()?;
            let inst = generate_instance(seed, k, &ov)?;
            match out {
                Some(path) => bench::write_instance(&inst, &path)?,
                None => print!("{}", bench::instance_to_toml(&inst)?),
            }
        }
        Command::Sweep { spec, out, timing } => {
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let records = bench::sweep(&spec, &out, timing)?;
            let failed: Vec<_> = records.iter().filter(|r| r.eta.is_nan()).collect();
            for r in &failed {
                eprintln!("{} seed {} param {}: {}", r.algo, r.seed, r.param, r.note);
            }
            let failed = failed.len();
            println!(
                "{} runs written to {} ({failed} with errors)",
                records.len(),
                out.display()
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Local => "local",
        Mode::Fog => "fog",
        Mode::Cloud => "cloud",
        Mode::CloudRecompressed => "cloud-recompressed",
    }
}

fn print_solution(inst: &Instance, sol: &Solution) {
    println!("eta_star = {:.9}", sol.eta_star);
    println!("lower_bound = {:.9}", sol.lower_bound);
    println!("max_cost = {:.9}", sol.max_cost(inst));
    println!("iterations = {}", sol.iterations);
    println!("fog_total_hz = {:.6e}", sol.fog_total);
    println!("backhaul_total_bps = {:.6e}", sol.backhaul_total);
    for (k, (d, u)) in sol.decisions.iter().zip(&inst.users).enumerate() {
        println!(
            "user {k}: mode = {}, cost = {:.9}, omega_u = {:.4}, omega_f = {:.4}, f_u = {:.4e}, f_f = {:.4e}, p = {:.4e}, rho = {:.4e}, d = {:.4e}",
            mode_name(d.mode),
            model::wedc(d, u, &inst.config),
            d.omega_u,
            d.omega_f,
            d.f_u,
            d.f_f,
            d.p,
            d.rho,
            d.d
        );
    }
}
