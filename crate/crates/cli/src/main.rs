use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dsheaf::reproduce;
use dsheaf::runner::{self, RunArgs, RunReport};

/// Opinion dynamics on cellular discourse sheaves: diffusion, forced
/// equilibria, expression-map learning, joint flows, and trajectory analysis.
#[derive(Parser)]
#[command(name = "dsheaf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonRunArgs {
    /// Integration horizon.
    #[arg(long)]
    t_max: Option<f64>,
    /// Keep every n-th trajectory sample in the CSV.
    #[arg(long)]
    stride: Option<usize>,
    /// Relative local error tolerance of the integrator.
    #[arg(long)]
    rel_tol: Option<f64>,
    /// Absolute local error tolerance of the integrator.
    #[arg(long)]
    abs_tol: Option<f64>,
    /// Velocity norm below which the flow counts as settled.
    #[arg(long)]
    velocity_tol: Option<f64>,
    /// Directory for trajectory/model/report artifacts (defaults to the
    /// input's directory).
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl CommonRunArgs {
    fn to_run_args(&self) -> RunArgs {
        RunArgs {
            t_max: self.t_max,
            stride: self.stride,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            velocity_tol: self.velocity_tol,
            out_dir: self.out_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Load a model file and report its structure.
    Validate { model: PathBuf },
    /// Unconstrained sheaf diffusion toward the section projection.
    Diffuse {
        model: PathBuf,
        /// Opinion update rate.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Forced equilibrium of the free opinions under the clamped directions.
    Poisson {
        model: PathBuf,
        /// Opinion update rate for the verification flow.
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Learn the adapting expression maps against the fixed opinions.
    Learn {
        model: PathBuf,
        /// Structure update rate.
        #[arg(long)]
        beta: Option<f64>,
        /// Ridge penalty; selects the regularized variant.
        #[arg(long)]
        lambda: Option<f64>,
        /// Interpret the [adapting] section as listing frozen incidences.
        #[arg(long)]
        frozen: bool,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Constrained joint evolution of opinions and expression maps.
    Joint {
        model: PathBuf,
        /// Opinion update rate.
        #[arg(long)]
        alpha: Option<f64>,
        /// Structure update rate.
        #[arg(long)]
        beta: Option<f64>,
        /// Opinion pull-back penalty; selects the regularized variant.
        #[arg(long)]
        lambda: Option<f64>,
        /// Structure pull-back penalty; selects the regularized variant.
        #[arg(long)]
        mu: Option<f64>,
        /// Compile the adaptation set from a policy table in this model file.
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Let every restriction map adapt (overrides [adapting]/[policy]).
        #[arg(long)]
        all_adapting: bool,
        /// Abort when the map Frobenius norm exceeds this ceiling.
        #[arg(long)]
        map_ceiling: Option<f64>,
        /// Abort when the free opinion norm exceeds this ceiling.
        #[arg(long)]
        opinion_ceiling: Option<f64>,
        /// Comma-separated vertices whose conservation blocks go into the CSV.
        #[arg(long)]
        audit_vertices: Option<String>,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Post-process a joint trajectory CSV: gaps, stagnation bounds, regimes.
    Analyze {
        trajectory: PathBuf,
        /// Opinion update rate used to produce the trajectory.
        #[arg(long)]
        alpha: Option<f64>,
        /// Structure update rate used to produce the trajectory.
        #[arg(long)]
        beta: Option<f64>,
        /// Displacement tolerance for the regime thresholds.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run a joint flow and audit the per-vertex conservation matrices.
    Audit {
        model: PathBuf,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        beta: Option<f64>,
        /// Comma-separated vertices to audit (default: all).
        #[arg(long)]
        vertices: Option<String>,
        /// Let every restriction map adapt (overrides [adapting]/[policy]).
        #[arg(long)]
        all_adapting: bool,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Fan independent joint runs over an alpha x beta grid.
    Sweep {
        model: PathBuf,
        /// Comma-separated opinion rates.
        #[arg(long)]
        alphas: String,
        /// Comma-separated structure rates.
        #[arg(long)]
        betas: String,
        /// Worker threads (default: available parallelism).
        #[arg(long)]
        jobs: Option<usize>,
        #[command(flatten)]
        run: CommonRunArgs,
    },
    /// Reproduce the bundled worked examples and print a pass/fail matrix.
    ReproducePaper {
        /// Loosen every comparison tolerance to at least this value.
        #[arg(long)]
        tol: Option<f64>,
        /// Also run the seeded randomized property battery.
        #[arg(long)]
        with_property_suite: bool,
        /// Seed for the property battery.
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Instance-count scale for the property battery.
        #[arg(long, default_value_t = 0.25)]
        suite_scale: f64,
    },
}

fn finish(report: RunReport) -> ExitCode {
    print!("{}", report.render());
    ExitCode::from(report.exit_code as u8)
}

fn fail(err: discourse_sheaf::SheafError) -> ExitCode {
    eprintln!("error: {err}");
    let code = match err {
        discourse_sheaf::SheafError::NonConvergence { .. } => runner::EXIT_NO_CONVERGENCE,
        discourse_sheaf::SheafError::DivergenceCeiling { .. } => runner::EXIT_DIVERGENCE,
        _ => runner::EXIT_VALIDATION,
    };
    ExitCode::from(code as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Validate { model } => runner::run_validate(&model),
        Command::Diffuse { model, alpha, run } => {
            runner::run_diffuse(&model, alpha, &run.to_run_args())
        }
        Command::Poisson { model, alpha, run } => {
            runner::run_poisson(&model, alpha, &run.to_run_args())
        }
        Command::Learn {
            model,
            beta,
            lambda,
            frozen,
            run,
        } => runner::run_learn(&model, beta, lambda, frozen, &run.to_run_args()),
        Command::Joint {
            model,
            alpha,
            beta,
            lambda,
            mu,
            policy,
            all_adapting,
            map_ceiling,
            opinion_ceiling,
            audit_vertices,
            run,
        } => runner::run_joint(
            &model,
            &runner::JointFlags {
                alpha,
                beta,
                lambda,
                mu,
                policy,
                all_adapting,
                map_ceiling,
                opinion_ceiling,
                audit_vertices,
            },
            &run.to_run_args(),
        ),
        Command::Analyze {
            trajectory,
            alpha,
            beta,
            epsilon,
            out_dir,
        } => runner::run_analyze(&trajectory, alpha, beta, epsilon, out_dir),
        Command::Audit {
            model,
            alpha,
            beta,
            vertices,
            all_adapting,
            run,
        } => runner::run_audit(
            &model,
            alpha,
            beta,
            vertices,
            all_adapting,
            &run.to_run_args(),
        ),
        Command::Sweep {
            model,
            alphas,
            betas,
            jobs,
            run,
        } => runner::run_sweep(&model, &alphas, &betas, jobs, &run.to_run_args()),
        Command::ReproducePaper {
            tol,
            with_property_suite,
            seed,
            suite_scale,
        } => {
            let mut checks = reproduce::run_reproduction(tol);
            if with_property_suite {
                for outcome in discourse_sheaf::suite::run_battery(seed, suite_scale) {
                    checks.push(reproduce::Check {
                        key: format!("property: {}", outcome.name),
                        passed: outcome.result.is_ok(),
                        detail: match outcome.result {
                            Ok(()) => format!("{} instances", outcome.instances),
                            Err(message) => message,
                        },
                    });
                }
            }
            print!("{}", reproduce::render_matrix(&checks));
            return if checks.iter().all(|c| c.passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            };
        }
    };
    match result {
        Ok(report) => finish(report),
        Err(err) => fail(err),
    }
}
