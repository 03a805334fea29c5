//! Command-line front end for the stable system identification experiments.

use std::path::PathBuf;

use anyhow::{Context, Result, bail};
use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use riemann_sqp::harness::{
    ExperimentConfig, ExperimentOutcome, InstanceFile, gradcheck_instance, run_experiment,
    run_sweep,
};
use riemann_sqp::qp::reference::{random_instance, solve_by_enumeration};
use riemann_sqp::qp::{QpStatus, solve_qp};
use riemann_sqp::solver::gradient_check;

#[derive(Parser)]
#[command(name = "identify", about = "Stable linear system identification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment from a JSON config (all fields optional; defaults
    /// reproduce the reference protocol).
    Run {
        /// Path to an experiment config JSON, or to a saved instance.json.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Re-run an experiment from its persisted instance file.
        #[arg(long)]
        instance: Option<PathBuf>,
        /// Output directory for report, traces, and eigenvalue tables.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Instance seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Verify analytic gradients against finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        directions: usize,
    },
    /// Compare the quadratic subproblem solver against the active-set
    /// enumeration reference on random instances.
    QpOracle {
        /// Upper bound of 6 on the sampled dimension applies regardless.
        #[arg(long, default_value_t = 6)]
        dim: usize,
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a multi-seed sweep and summarize per-variant outcomes.
    Sweep {
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig> {
    match path {
        None => Ok(ExperimentConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .with_context(|| format!("reading config {}", p.display()))?;
            Ok(serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?)
        }
    }
}

fn print_experiment(outcome: &ExperimentOutcome) {
    println!(
        "instance: seed {} n {} dt {} N {} snr {:?}",
        outcome.report.instance.seed,
        outcome.report.instance.n,
        outcome.report.instance.dt,
        outcome.report.instance.num_samples,
        outcome.report.instance.snr_db,
    );
    let truth = &outcome.report.instance.true_eigenvalues;
    if let Some((re, im)) = truth.first() {
        println!("true leading eigenvalue: {re:.4} + {im:.4}i");
    }
    println!(
        "{:<12} {:>10} {:>10} {:>10} {:>8} {:>9} {:>9} {:>8}",
        "variant", "cost", "residual", "maxviol", "stable", "RelErr1", "RelErr2", "time[s]"
    );
    for v in &outcome.report.variants {
        if let Some(err) = &v.error {
            println!("{:<12} FAILED after {} iterations: {err}", v.variant.name(), v.iterations);
            continue;
        }
        println!(
            "{:<12} {:>10.3e} {:>10.3e} {:>10.3e} {:>8} {:>9.3e} {:>9.3e} {:>8.2}",
            v.variant.name(),
            v.final_cost.unwrap_or(f64::NAN),
            v.final_residual.unwrap_or(f64::NAN),
            v.final_max_violation.unwrap_or(f64::NAN),
            v.stable.map(|s| if s { "yes" } else { "NO" }).unwrap_or("?"),
            v.rel_errors.first().copied().unwrap_or(f64::NAN),
            v.rel_errors.get(1).copied().unwrap_or(f64::NAN),
            v.wall_time_s,
        );
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            instance,
            out,
            seed,
        } => {
            let mut cfg = if let Some(instance_path) = instance {
                let text = std::fs::read_to_string(&instance_path)
                    .with_context(|| format!("reading {}", instance_path.display()))?;
                let file: InstanceFile = serde_json::from_str(&text)?;
                file.config
            } else {
                load_config(config.as_ref())?
            };
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            if let Some(out) = out {
                cfg.output_dir = Some(out);
            }
            let outcome = run_experiment(&cfg)?;
            print_experiment(&outcome);
            if let Some(dir) = &cfg.output_dir {
                println!("outputs written to {}", dir.display());
            }
            Ok(())
        }
        Command::Gradcheck { n, seed, directions } => {
            let (problem, point) = gradcheck_instance(n, seed)?;
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
            let report = gradient_check(&problem, &point, directions, 1e-5, &mut rng)?;
            println!(
                "objective  max relative error: {:.3e}",
                report.objective_max_rel_err
            );
            println!(
                "constraint max relative error: {:.3e}",
                report.constraint_max_rel_err
            );
            if report.objective_max_rel_err > 1e-6 || report.constraint_max_rel_err > 1e-6 {
                bail!("gradient check failed the 1e-6 relative tolerance");
            }
            println!("gradient check passed ({} directions)", report.directions);
            Ok(())
        }
        Command::QpOracle { dim, trials, seed } => {
            if dim > 6 {
                bail!("enumeration reference is limited to dimension 6");
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut worst_primal = 0.0f64;
            let mut worst_dual = 0.0f64;
            let mut solved = 0usize;
            let mut infeasible = 0usize;
            for trial in 0..trials {
                let qp = random_instance(&mut rng, true);
                let reference = solve_by_enumeration(&qp)?;
                let sol = solve_qp(&qp)?;
                match reference {
                    None => {
                        if sol.status != QpStatus::Infeasible {
                            bail!("trial {trial}: reference infeasible, solver said {:?}", sol.status);
                        }
                        infeasible += 1;
                    }
                    Some(r) => {
                        if sol.status != QpStatus::Solved {
                            bail!("trial {trial}: reference solved, solver said {:?}", sol.status);
                        }
                        let pg = (&sol.z - &r.z).amax() / (1.0 + r.z.amax());
                        let dual_scale = 1.0
                            + r.ineq_mult.amax().max(if r.eq_mult.is_empty() {
                                0.0
                            } else {
                                r.eq_mult.amax()
                            });
                        let dg = (&sol.ineq_mult - &r.ineq_mult)
                            .amax()
                            .max((&sol.eq_mult - &r.eq_mult).amax())
                            / dual_scale;
                        worst_primal = worst_primal.max(pg);
                        worst_dual = worst_dual.max(dg);
                        solved += 1;
                    }
                }
            }
            println!(
                "{trials} trials: {solved} solved, {infeasible} infeasible; worst scaled gaps: primal {worst_primal:.3e}, dual {worst_dual:.3e}"
            );
            if worst_primal > 1e-8 || worst_dual > 1e-8 {
                bail!("oracle agreement exceeded the 1e-8 tolerance");
            }
            Ok(())
        }
        Command::Sweep { seeds, config, out } => {
            let mut cfg = load_config(config.as_ref())?;
            if let Some(out) = out {
                cfg.output_dir = Some(out);
            }
            let (report, outcomes) = run_sweep(&cfg, seeds)?;
            println!(
                "{:<12} {:>5} {:>7} {:>7} {:>9} {:>10} {:>9}",
                "variant", "runs", "stable", "feasib", "failures", "medRelErr1", "elastic"
            );
            for s in &report.summaries {
                println!(
                    "{:<12} {:>5} {:>7} {:>7} {:>9} {:>10.3e} {:>9}",
                    s.variant.name(),
                    s.runs,
                    s.stable_count,
                    s.feasible_count,
                    s.failures,
                    s.median_rel_err_1.unwrap_or(f64::NAN),
                    s.elastic_iterations_total,
                );
            }
            let total_time: f64 = outcomes
                .iter()
                .flat_map(|o| o.report.variants.iter().map(|v| v.wall_time_s))
                .sum();
            println!("total solver wall time: {total_time:.1} s");
            if let Some(dir) = &cfg.output_dir {
                println!("outputs written to {}", dir.display());
            }
            Ok(())
        }
    }
}
