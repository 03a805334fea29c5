//! Experiment runner: builds a synthetic identification instance from a
//! seed, runs the requested modeling/algorithm variants on identical data
//! from an identical starting triple, and emits reports, traces, and
//! eigenvalue tables.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ProductPoint;
use crate::model::{
    BoxMargins, ConstraintSpec, EigReport, EnloProblem, RnloProblem, Trajectory, add_noise,
    assemble_a, random_initial_point, random_stable_triple, random_unit_box_vector,
    sample_index_sets, scale_trajectory, simulate_true, sorted_eigenvalues, spectral_abscissa,
};
use crate::solver::{Problem, SolverConfig, SolverTrace, kkt_residual, solve};

/// The four modeling/algorithm pairs an experiment can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "RNLO-eRSQO")]
    RnloErsqo,
    #[serde(rename = "RNLO-RSQO")]
    RnloRsqo,
    #[serde(rename = "ENLO")]
    Enlo,
    #[serde(rename = "UCRO")]
    Ucro,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::RnloErsqo,
        Variant::RnloRsqo,
        Variant::Enlo,
        Variant::Ucro,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::RnloErsqo => "RNLO-eRSQO",
            Variant::RnloRsqo => "RNLO-RSQO",
            Variant::Enlo => "ENLO",
            Variant::Ucro => "UCRO",
        }
    }

    pub fn file_stem(&self) -> &'static str {
        match self {
            Variant::RnloErsqo => "rnlo_ersqo",
            Variant::RnloRsqo => "rnlo_rsqo",
            Variant::Enlo => "enlo",
            Variant::Ucro => "ucro",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Full description of one experiment. The defaults reproduce the reference
/// protocol: `n = 10`, `dt = 0.02`, 39 samples, 20 dB noise, ten 1-box and
/// five 2-box constraints, and the default solver parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub n: usize,
    pub dt: f64,
    pub num_samples: usize,
    /// Signal-to-noise ratio in dB; `null` disables noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub one_box_count: usize,
    pub two_box_count: usize,
    pub margins: BoxMargins,
    pub solver: SolverConfig,
    pub variants: Vec<Variant>,
    /// When set, reports and traces are written here.
    pub output_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 10,
            dt: 0.02,
            num_samples: 39,
            snr_db: Some(20.0),
            seed: 0,
            one_box_count: 10,
            two_box_count: 5,
            margins: BoxMargins::default(),
            solver: SolverConfig::default(),
            variants: Variant::ALL.to_vec(),
            output_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::InvalidConfig("n must be at least 1".into()));
        }
        if self.num_samples < 2 {
            return Err(Error::InvalidConfig("need at least 2 samples".into()));
        }
        if !(self.dt > 0.0) {
            return Err(Error::InvalidConfig("dt must be positive".into()));
        }
        self.solver.validate()
    }
}

/// One concrete instance: the noisy scaled data, the prior-knowledge
/// specification generated around the true system, and the shared starting
/// triple.
#[derive(Debug, Clone)]
pub struct Instance {
    pub a_true: DMatrix<f64>,
    pub trajectory: Trajectory,
    pub spec: ConstraintSpec,
    pub initial: ProductPoint,
}

/// Builds the instance for a config, deterministically from its seed: draw
/// the true triple, simulate the exact discretization, add noise, scale by
/// the noisy initial state norm, sample the constraint index sets, and draw
/// the starting triple.
pub fn build_instance(config: &ExperimentConfig) -> Result<Instance> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let truth = random_stable_triple(config.n, &mut rng);
    let a_true = assemble_a(&truth);
    let x0 = random_unit_box_vector(config.n, &mut rng);
    let traj = simulate_true(&a_true, &x0, config.dt, config.num_samples)?;
    let traj = add_noise(&traj, config.snr_db, &mut rng);
    let traj = scale_trajectory(&traj)?;
    let (one_idx, two_idx) = sample_index_sets(
        config.n,
        config.one_box_count,
        config.two_box_count,
        &mut rng,
    )?;
    let spec = ConstraintSpec::around_matrix(&a_true, &one_idx, &two_idx, &config.margins, &mut rng)?;
    let initial = random_initial_point(config.n, &mut rng);
    Ok(Instance {
        a_true,
        trajectory: traj,
        spec,
        initial,
    })
}

/// Per-variant results. The violation is measured against the instance's
/// constraint specification even for the unconstrained variant, which never
/// saw it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    /// Failure message when the variant aborted; the other fields then
    /// describe the last completed iterate, if any.
    pub error: Option<String>,
    pub iterations: usize,
    pub elastic_iterations: usize,
    pub final_cost: Option<f64>,
    pub final_residual: Option<f64>,
    pub final_max_violation: Option<f64>,
    pub spectral_abscissa: Option<f64>,
    pub stable: Option<bool>,
    pub eigenvalues: Vec<(f64, f64)>,
    pub rel_errors: Vec<f64>,
    pub trace_file: Option<String>,
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Instance metadata serialized alongside the results.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub seed: u64,
    pub n: usize,
    pub dt: f64,
    pub num_samples: usize,
    pub snr_db: Option<f64>,
    pub true_eigenvalues: Vec<(f64, f64)>,
    pub constraints: ConstraintSpec,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub instance: InstanceMeta,
    pub variants: Vec<VariantReport>,
}

/// A finished experiment: the serializable report plus the full traces.
#[derive(Debug)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub traces: Vec<(Variant, SolverTrace)>,
    pub instance: Instance,
    pub config: ExperimentConfig,
}

fn run_variant<P: Problem>(
    problem: &P,
    start: P::Point,
    solver_config: &SolverConfig,
    final_matrix: impl Fn(&P::Point) -> DMatrix<f64>,
    spec: &ConstraintSpec,
    a_true: &DMatrix<f64>,
    variant: Variant,
) -> (VariantReport, SolverTrace) {
    let started = std::time::Instant::now();
    let (state, trace, error) = match solve(problem, start, solver_config) {
        Ok(out) => (Some(out.state), out.trace, None),
        Err(failure) => (None, failure.trace, Some(failure.error.to_string())),
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let mut report = VariantReport {
        variant,
        error,
        iterations: trace.records.len(),
        elastic_iterations: trace.records.iter().filter(|r| r.elastic).count(),
        final_cost: trace.records.last().map(|r| r.cost),
        final_residual: trace.records.last().map(|r| r.kkt_residual),
        final_max_violation: None,
        spectral_abscissa: None,
        stable: None,
        eigenvalues: vec![],
        rel_errors: vec![],
        trace_file: None,
        wall_time_s,
    };
    if let Some(state) = state {
        let a_final = final_matrix(&state.x);
        report.final_max_violation = spec
            .values_at_matrix(&a_final)
            .ok()
            .map(|v| v.max_violation());
        let abscissa = spectral_abscissa(&a_final);
        report.spectral_abscissa = Some(abscissa);
        report.stable = Some(abscissa < 0.0);
        match EigReport::new(&a_final, a_true) {
            Ok(eig) => {
                report.eigenvalues = eig.eigenvalues;
                report.rel_errors = eig.rel_errors;
            }
            Err(e) => {
                report.error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    (report, trace)
}

/// Runs each requested variant on one shared instance. Every variant starts
/// from the same triple (the flat-space variant from its assembled matrix)
/// and consumes the same noisy scaled trajectory. A variant failure is
/// recorded in its report; the remaining variants still run. When
/// `output_dir` is set the outputs are written there as well.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let instance = build_instance(config)?;
    let mut variants = Vec::new();
    let mut traces = Vec::new();

    for &variant in &config.variants {
        let (mut report, trace) = match variant {
            Variant::RnloErsqo | Variant::RnloRsqo => {
                let solver_config = SolverConfig {
                    elastic_enabled: variant == Variant::RnloErsqo,
                    ..config.solver.clone()
                };
                let problem =
                    RnloProblem::new(instance.trajectory.clone(), instance.spec.clone())?;
                run_variant(
                    &problem,
                    instance.initial.clone(),
                    &solver_config,
                    assemble_a,
                    &instance.spec,
                    &instance.a_true,
                    variant,
                )
            }
            Variant::Enlo => {
                let problem =
                    EnloProblem::new(instance.trajectory.clone(), instance.spec.clone())?;
                run_variant(
                    &problem,
                    assemble_a(&instance.initial),
                    &config.solver,
                    Clone::clone,
                    &instance.spec,
                    &instance.a_true,
                    variant,
                )
            }
            Variant::Ucro => {
                let problem = RnloProblem::unconstrained(instance.trajectory.clone());
                run_variant(
                    &problem,
                    instance.initial.clone(),
                    &config.solver,
                    assemble_a,
                    &instance.spec,
                    &instance.a_true,
                    variant,
                )
            }
        };
        report.trace_file = Some(format!("trace_{}.csv", variant.file_stem()));
        variants.push(report);
        traces.push((variant, trace));
    }

    let report = ExperimentReport {
        instance: InstanceMeta {
            seed: config.seed,
            n: config.n,
            dt: config.dt,
            num_samples: config.num_samples,
            snr_db: config.snr_db,
            true_eigenvalues: sorted_eigenvalues(&instance.a_true)
                .iter()
                .map(|ev| (ev.re, ev.im))
                .collect(),
            constraints: instance.spec.clone(),
        },
        variants,
    };
    let outcome = ExperimentOutcome {
        report,
        traces,
        instance,
        config: config.clone(),
    };
    if let Some(dir) = &config.output_dir {
        emit_report(&outcome, dir)?;
    }
    Ok(outcome)
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Serialized form of `instance.json`: enough to regenerate the experiment
/// bit for bit (the full config, which embeds the seed) next to the derived
/// truth for inspection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceFile {
    pub config: ExperimentConfig,
    pub true_a: Vec<Vec<f64>>,
    pub true_eigenvalues: Vec<(f64, f64)>,
    pub constraints: ConstraintSpec,
}

/// Writes `report.json`, `instance.json`, and per-variant
/// `trace_<variant>.csv` and `eigs_<variant>.csv` files into `dir`.
pub fn emit_report(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let report_path = dir.join("report.json");
    let json = serde_json::to_string_pretty(&outcome.report)?;
    fs::write(&report_path, json).map_err(io_err(&report_path))?;

    let instance_path = dir.join("instance.json");
    let n = outcome.instance.a_true.nrows();
    let true_a: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| outcome.instance.a_true[(i, j)]).collect())
        .collect();
    let instance_file = InstanceFile {
        config: ExperimentConfig {
            output_dir: None,
            ..outcome.config.clone()
        },
        true_a,
        true_eigenvalues: outcome.report.instance.true_eigenvalues.clone(),
        constraints: outcome.instance.spec.clone(),
    };
    fs::write(
        &instance_path,
        serde_json::to_string_pretty(&instance_file)?,
    )
    .map_err(io_err(&instance_path))?;

    for ((variant, trace), report) in outcome.traces.iter().zip(&outcome.report.variants) {
        let trace_path = dir.join(format!("trace_{}.csv", variant.file_stem()));
        let mut buf = Vec::new();
        trace.to_csv(&mut buf).map_err(io_err(&trace_path))?;
        fs::write(&trace_path, buf).map_err(io_err(&trace_path))?;

        let eig_path = dir.join(format!("eigs_{}.csv", variant.file_stem()));
        let mut buf = Vec::new();
        writeln!(buf, "re,im").map_err(io_err(&eig_path))?;
        for (re, im) in &report.eigenvalues {
            writeln!(buf, "{re},{im}").map_err(io_err(&eig_path))?;
        }
        fs::write(&eig_path, buf).map_err(io_err(&eig_path))?;
    }
    Ok(())
}

/// The per-variant convergence scalar reported in traces and plots: the full
/// KKT residual for the constrained formulations (the flat-space one uses
/// the same formula over its trivial chart), which collapses to the
/// Riemannian gradient norm for the unconstrained variant, whose constraint
/// sets are empty and whose multipliers are absent.
pub fn residual_for_variant<P: Problem>(
    problem: &P,
    x: &P::Point,
    ineq_mult: &nalgebra::DVector<f64>,
    eq_mult: &nalgebra::DVector<f64>,
) -> Result<f64> {
    kkt_residual(problem, x, ineq_mult, eq_mult)
}

/// Builds a well-scaled constrained instance for finite-difference gradient
/// verification at the given dimension: moderate sampling interval, unscaled
/// noisy data, a handful of box constraints of both kinds, and a random
/// evaluation point.
pub fn gradcheck_instance(n: usize, seed: u64) -> Result<(RnloProblem, ProductPoint)> {
    if n < 2 {
        return Err(Error::InvalidConfig(
            "gradient check needs n >= 2 for a nonempty index pool".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let truth = random_stable_triple(n, &mut rng);
    let a_true = assemble_a(&truth);
    let x0 = random_unit_box_vector(n, &mut rng);
    let traj = simulate_true(&a_true, &x0, 0.1, 12)?;
    let traj = add_noise(&traj, Some(20.0), &mut rng);
    let (one_count, two_count) = if n <= 2 { (2, 1) } else { (3, 2) };
    let (one_idx, two_idx) = sample_index_sets(n, one_count, two_count, &mut rng)?;
    let spec =
        ConstraintSpec::around_matrix(&a_true, &one_idx, &two_idx, &BoxMargins::default(), &mut rng)?;
    let problem = RnloProblem::new(traj, spec)?;
    let point = random_stable_triple(n, &mut rng);
    Ok((problem, point))
}

/// Aggregates of a multi-seed sweep, per variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepVariantSummary {
    pub variant: Variant,
    pub runs: usize,
    pub failures: usize,
    pub stable_count: usize,
    pub unstable_count: usize,
    /// Runs whose final iterate satisfies all constraints within `1e-6`.
    pub feasible_count: usize,
    pub median_rel_err_1: Option<f64>,
    pub median_rel_err_2: Option<f64>,
    pub median_rel_err_3: Option<f64>,
    pub elastic_iterations_total: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepReport {
    pub base_seed: u64,
    pub num_seeds: usize,
    pub summaries: Vec<SweepVariantSummary>,
}

/// Tolerance used to call a final iterate feasible in sweep summaries.
pub const SWEEP_FEASIBILITY_TOL: f64 = 1e-6;

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[mid]
    } else {
        0.5 * (values[mid - 1] + values[mid])
    })
}

/// Runs `num_seeds` experiments with seeds `base_seed .. base_seed +
/// num_seeds` and aggregates the per-variant outcomes. Per-seed outputs land
/// in `seed_<k>/` subdirectories when the config carries an output
/// directory.
pub fn run_sweep(
    base: &ExperimentConfig,
    num_seeds: usize,
) -> Result<(SweepReport, Vec<ExperimentOutcome>)> {
    let mut outcomes = Vec::with_capacity(num_seeds);
    for k in 0..num_seeds {
        let config = ExperimentConfig {
            seed: base.seed + k as u64,
            output_dir: base
                .output_dir
                .as_ref()
                .map(|d| d.join(format!("seed_{}", base.seed + k as u64))),
            ..base.clone()
        };
        outcomes.push(run_experiment(&config)?);
    }

    let mut summaries = Vec::new();
    for &variant in &base.variants {
        let mut rel1 = Vec::new();
        let mut rel2 = Vec::new();
        let mut rel3 = Vec::new();
        let mut summary = SweepVariantSummary {
            variant,
            runs: 0,
            failures: 0,
            stable_count: 0,
            unstable_count: 0,
            feasible_count: 0,
            median_rel_err_1: None,
            median_rel_err_2: None,
            median_rel_err_3: None,
            elastic_iterations_total: 0,
        };
        for outcome in &outcomes {
            let Some(r) = outcome.report.variants.iter().find(|r| r.variant == variant) else {
                continue;
            };
            summary.runs += 1;
            summary.elastic_iterations_total += r.elastic_iterations;
            if r.error.is_some() {
                summary.failures += 1;
            }
            match r.stable {
                Some(true) => summary.stable_count += 1,
                Some(false) => summary.unstable_count += 1,
                None => {}
            }
            if let Some(v) = r.final_max_violation {
                if v <= SWEEP_FEASIBILITY_TOL {
                    summary.feasible_count += 1;
                }
            }
            if r.rel_errors.len() >= 3 {
                rel1.push(r.rel_errors[0]);
                rel2.push(r.rel_errors[1]);
                rel3.push(r.rel_errors[2]);
            }
        }
        summary.median_rel_err_1 = median(&mut rel1);
        summary.median_rel_err_2 = median(&mut rel2);
        summary.median_rel_err_3 = median(&mut rel3);
        summaries.push(summary);
    }

    let report = SweepReport {
        base_seed: base.seed,
        num_seeds,
        summaries,
    };
    if let Some(dir) = &base.output_dir {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join("sweep_summary.json");
        fs::write(&path, serde_json::to_string_pretty(&report)?).map_err(io_err(&path))?;
    }
    Ok((report, outcomes))
}
