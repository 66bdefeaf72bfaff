//! Per-mode run orchestration: load, validate, simulate, write artifacts,
//! and assemble the run report.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use discourse_sheaf::diffusion::{diffuse, project_global_sections};
use discourse_sheaf::error::{Result, SheafError};
use discourse_sheaf::graph::VertexId;
use discourse_sheaf::joint::{
    classify_edges, conservation_audit, equilibrium_residuals, regularized_joint_flow, Ceilings,
    JointOutcome, JointProblem,
};
use discourse_sheaf::learning::{
    build_discrepancy_system, learning_flow, learning_limit, regularized_learning,
    regularized_learning_flow, AdaptationSpec,
};
use discourse_sheaf::model::{load_model, render_model, ModelDocument};
use discourse_sheaf::ode::{OdeOptions, OdeOutcome};
use discourse_sheaf::sheaf::Cochain0;
use discourse_sheaf::stubborn::{
    build_free_sheaf, constrained_diffuse, solve_poisson, StubbornSpec,
};
use discourse_sheaf::timescale::{
    check_opinion_stagnation, check_structural_stagnation, regime_thresholds,
};

use crate::csvio;

/// Exit codes: `0` success, `2` validation failure, `3` no convergence before
/// the horizon, `4` divergence ceiling.
pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NO_CONVERGENCE: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

/// One echoed parameter; defaulted values are marked in the report.
#[derive(Debug, Clone)]
pub struct EchoEntry {
    pub name: &'static str,
    pub value: String,
    pub defaulted: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub mode: &'static str,
    pub input: String,
    pub echo: Vec<EchoEntry>,
    pub body: Vec<String>,
    pub status: String,
    pub exit_code: i32,
    pub wall_ms: f64,
    pub artifacts: Vec<PathBuf>,
}

impl RunReport {
    fn new(mode: &'static str, input: &Path) -> Self {
        Self {
            mode,
            input: input.display().to_string(),
            echo: Vec::new(),
            body: Vec::new(),
            status: String::new(),
            exit_code: EXIT_OK,
            wall_ms: 0.0,
            artifacts: Vec::new(),
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "dsheaf run report");
        let _ = writeln!(out, "mode: {}", self.mode);
        let _ = writeln!(out, "input: {}", self.input);
        if !self.echo.is_empty() {
            let _ = writeln!(out, "parameters:");
            for entry in &self.echo {
                let suffix = if entry.defaulted { " (default)" } else { "" };
                let _ = writeln!(out, "  {} = {}{}", entry.name, entry.value, suffix);
            }
        }
        let _ = writeln!(out, "status: {}", self.status);
        for line in &self.body {
            let _ = writeln!(out, "{line}");
        }
        for artifact in &self.artifacts {
            let _ = writeln!(out, "wrote: {}", artifact.display());
        }
        let _ = writeln!(out, "wall-clock: {:.1} ms", self.wall_ms);
        let _ = writeln!(out, "exit-code: {}", self.exit_code);
        out
    }
}

/// Numeric flag with its default, for echoing.
pub fn resolve(
    name: &'static str,
    value: Option<f64>,
    default: f64,
    echo: &mut Vec<EchoEntry>,
) -> f64 {
    let resolved = value.unwrap_or(default);
    echo.push(EchoEntry {
        name,
        value: format!("{resolved}"),
        defaulted: value.is_none(),
    });
    resolved
}

fn resolve_usize(
    name: &'static str,
    value: Option<usize>,
    default: usize,
    echo: &mut Vec<EchoEntry>,
) -> usize {
    let resolved = value.unwrap_or(default);
    echo.push(EchoEntry {
        name,
        value: format!("{resolved}"),
        defaulted: value.is_none(),
    });
    resolved
}

/// Shared run flags.
#[derive(Debug, Clone, Default)]
pub struct RunArgs {
    pub t_max: Option<f64>,
    pub stride: Option<usize>,
    pub rel_tol: Option<f64>,
    pub abs_tol: Option<f64>,
    pub velocity_tol: Option<f64>,
    pub out_dir: Option<PathBuf>,
}

struct Resolved {
    opts: OdeOptions<f64>,
    stride: usize,
    out_dir: PathBuf,
}

fn resolve_run(
    input: &Path,
    args: &RunArgs,
    default_t_max: f64,
    default_velocity_tol: f64,
    consecutive: usize,
    echo: &mut Vec<EchoEntry>,
) -> Resolved {
    let t_max = resolve("t-max", args.t_max, default_t_max, echo);
    let rel_tol = resolve("rel-tol", args.rel_tol, 1e-8, echo);
    let abs_tol = resolve("abs-tol", args.abs_tol, 1e-10, echo);
    let velocity_tol = resolve(
        "velocity-tol",
        args.velocity_tol,
        default_velocity_tol,
        echo,
    );
    let stride = resolve_usize("stride", args.stride, 1, echo);
    let out_dir = args
        .out_dir
        .clone()
        .unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());
    echo.push(EchoEntry {
        name: "out-dir",
        value: out_dir.display().to_string(),
        defaulted: args.out_dir.is_none(),
    });
    Resolved {
        opts: OdeOptions {
            rel_tol,
            abs_tol,
            t_max,
            velocity_tol,
            consecutive_required: consecutive,
            ..Default::default()
        },
        stride,
        out_dir,
    }
}

struct ArtifactBase {
    dir: PathBuf,
    prefix: String,
}

impl ArtifactBase {
    fn path(&self, kind: &str) -> PathBuf {
        self.dir.join(format!("{}.{kind}", self.prefix))
    }
}

fn artifact_base(input: &Path, mode: &str, out_dir: &Path) -> ArtifactBase {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into());
    ArtifactBase {
        dir: out_dir.to_path_buf(),
        prefix: format!("{stem}.{mode}"),
    }
}

fn write_artifact(report: &mut RunReport, path: PathBuf, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&path, contents)?;
    report.artifacts.push(path);
    Ok(())
}

fn require_cochain0(doc: &ModelDocument) -> Result<Cochain0<f64>> {
    doc.cochain0.clone().ok_or_else(|| SheafError::Format {
        line: 1,
        reason: "model has no [cochain0] section".into(),
    })
}

fn stubborn_or_empty(doc: &ModelDocument) -> StubbornSpec<f64> {
    doc.stubborn
        .clone()
        .unwrap_or_else(|| StubbornSpec::empty(&doc.sheaf))
}

/// Adaptation set for joint-style runs: explicit [adapting] wins, otherwise a
/// policy table (from the model or a separate file) is compiled. When both
/// are present they must agree.
fn resolve_adaptation(
    doc: &ModelDocument,
    spec: &StubbornSpec<f64>,
    policy_path: Option<&Path>,
    all_adapting: bool,
) -> Result<AdaptationSpec> {
    if all_adapting {
        return Ok(AdaptationSpec::all(doc.sheaf.graph()));
    }
    let policy = match policy_path {
        Some(path) => {
            let policy_doc = load_model(path)?;
            policy_doc.policy.ok_or_else(|| SheafError::Format {
                line: 1,
                reason: format!("{} has no [policy] section", path.display()),
            })?
        }
        None => match (&doc.policy, &doc.adapting) {
            (Some(policy), _) => policy.clone(),
            (None, Some(adapting)) => return Ok(adapting.clone()),
            (None, None) => {
                return Err(SheafError::Format {
                    line: 1,
                    reason: "model has neither [adapting] nor [policy]; pass --all-adapting to evolve every map".into(),
                })
            }
        },
    };
    let compiled = policy.compile(doc.sheaf.graph(), spec)?;
    if let Some(adapting) = &doc.adapting {
        classify_edges(doc.sheaf.graph(), spec, adapting, Some(&policy))?;
    }
    Ok(compiled)
}

fn status_from_ode(outcome: &OdeOutcome<f64>) -> (String, i32) {
    match outcome {
        OdeOutcome::Converged { time } => (format!("converged at t = {time:.6}"), EXIT_OK),
        OdeOutcome::ReachedHorizon { residual_velocity } => (
            format!("horizon reached with residual velocity {residual_velocity:.3e}"),
            EXIT_NO_CONVERGENCE,
        ),
        OdeOutcome::GuardStop { time, reason } => (
            format!("aborted at t = {time:.6}: {reason}"),
            EXIT_DIVERGENCE,
        ),
        OdeOutcome::StepBudgetExhausted { time } => (
            format!("step budget exhausted at t = {time:.6}"),
            EXIT_NO_CONVERGENCE,
        ),
    }
}

fn status_from_joint(outcome: &JointOutcome<f64>, problem: &JointProblem<f64>) -> (String, i32) {
    match outcome {
        JointOutcome::Converged { time } => (format!("converged at t = {time:.6}"), EXIT_OK),
        JointOutcome::ReachedHorizon { residual_velocity } => (
            format!("horizon reached with residual velocity {residual_velocity:.3e}"),
            EXIT_NO_CONVERGENCE,
        ),
        JointOutcome::DivergenceCeiling {
            time,
            quantity,
            value,
            ceiling,
            asymmetric_edges,
        } => {
            let graph = problem.sheaf().graph();
            let labels: Vec<&str> = asymmetric_edges
                .iter()
                .map(|&e| graph.edge_label(e))
                .collect();
            (
                format!(
                    "divergence ceiling at t = {time:.6}: {quantity} = {value:.3e} > {ceiling:.3e}; \
                     bounded trajectories are only guaranteed with symmetric adaptation \
                     (asymmetric edges: {labels:?})"
                ),
                EXIT_DIVERGENCE,
            )
        }
        JointOutcome::StepBudgetExhausted { time } => (
            format!("step budget exhausted at t = {time:.6}"),
            EXIT_NO_CONVERGENCE,
        ),
    }
}

pub fn run_validate(input: &Path) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("validate", input);
    let doc = load_model(input)?;
    let graph = doc.sheaf.graph();
    report.body.push(format!(
        "graph: {} vertices, {} edges, connected: {}",
        graph.vertex_count(),
        graph.edge_count(),
        graph.is_connected()
    ));
    report.body.push(format!(
        "cochain spaces: dim C0 = {}, dim C1 = {}",
        doc.sheaf.total_vertex_dim(),
        doc.sheaf.total_edge_dim()
    ));
    if let Some(x) = &doc.cochain0 {
        let energy = doc.sheaf.disagreement_energy(x)?;
        report
            .body
            .push(format!("cochain0: present, energy {energy}"));
    }
    if let Some(spec) = &doc.stubborn {
        let dims: Vec<String> = graph
            .vertices()
            .filter(|&v| spec.is_stubborn(v))
            .map(|v| format!("{}:{}", graph.vertex_label(v), spec.stubborn_dim(v)))
            .collect();
        report.body.push(format!(
            "stubborn: {} clamped directions ({})",
            spec.total_stubborn_dim(),
            dims.join(", ")
        ));
    }
    let spec = stubborn_or_empty(&doc);
    if let Some(adapting) = &doc.adapting {
        let classes = classify_edges(graph, &spec, adapting, doc.policy.as_ref())?;
        report.body.push(format!(
            "adaptation: {} incidences; edges both-free {}, both-stubborn {}, mixed {}; symmetric {}, asymmetric {}",
            adapting.len(),
            classes.both_free.len(),
            classes.both_stubborn.len(),
            classes.mixed.len(),
            classes.symmetric.len(),
            classes.asymmetric.len()
        ));
    } else if let Some(policy) = &doc.policy {
        let compiled = policy.compile(graph, &spec)?;
        report.body.push(format!(
            "policy: compiles to {} adapting incidences",
            compiled.len()
        ));
    }
    report.status = "valid".into();
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

pub fn run_diffuse(input: &Path, alpha: Option<f64>, args: &RunArgs) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("diffuse", input);
    let alpha = resolve("alpha", alpha, 1.0, &mut report.echo);
    let resolved = resolve_run(input, args, 200.0, 1e-10, 1, &mut report.echo);
    let doc = load_model(input)?;
    let x0 = require_cochain0(&doc)?;

    let run = diffuse(&doc.sheaf, &x0, alpha, &resolved.opts)?;
    let projected = project_global_sections(&doc.sheaf, &x0)?;
    let limit_gap = (run.final_state().to_flat() - projected.to_flat()).norm();
    let (status, exit) = status_from_ode(&run.outcome);
    report.status = status;
    report.exit_code = exit;
    report.body.push(format!(
        "energy: initial {}, final {}",
        run.energies.first().unwrap(),
        run.energies.last().unwrap()
    ));
    report
        .body
        .push(format!("distance to section projection: {limit_gap:.3e}"));

    let base = artifact_base(input, "diffuse", &resolved.out_dir);
    let norms: Vec<Vec<f64>> = {
        let graph = doc.sheaf.graph();
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 1 + graph.vertex_count()];
        for (i, state) in run.states.iter().enumerate() {
            columns[0].push(run.energies[i]);
            for v in graph.vertices() {
                columns[1 + v.0].push(state.block(v).norm());
            }
        }
        columns
    };
    let mut header = vec!["psi".to_string()];
    header.extend(
        doc.sheaf
            .graph()
            .vertices()
            .map(|v| format!("x_{}", doc.sheaf.graph().vertex_label(v))),
    );
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv = csvio::render_scalar_trajectory(&header_refs, &run.times, &norms, resolved.stride);
    write_artifact(&mut report, base.path("trajectory.csv"), &csv)?;

    let final_doc = ModelDocument {
        cochain0: Some(run.final_state().clone()),
        ..doc
    };
    write_artifact(
        &mut report,
        base.path("final.model"),
        &render_model(&final_doc),
    )?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

pub fn run_poisson(input: &Path, alpha: Option<f64>, args: &RunArgs) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("poisson", input);
    let alpha = resolve("alpha", alpha, 1.0, &mut report.echo);
    let resolved = resolve_run(input, args, 200.0, 1e-10, 1, &mut report.echo);
    let doc = load_model(input)?;
    let x0 = require_cochain0(&doc)?;
    let spec = doc.stubborn.clone().ok_or_else(|| SheafError::Format {
        line: 1,
        reason: "poisson mode needs a [stubborn ...] section".into(),
    })?;

    let (_, blocks) = build_free_sheaf(&doc.sheaf, &spec)?;
    let u = spec.stacked_values();
    let y0 = blocks.project_free(&x0.to_flat());
    let solution = solve_poisson(&blocks, &u, &y0)?;
    let x_inf = doc
        .sheaf
        .cochain0_from_flat(&blocks.assemble_state(&u, &solution.y))?;
    let energy = doc.sheaf.disagreement_energy(&x_inf)?;
    report.body.push(format!(
        "closed form: energy {energy}, Poisson residual {:.3e}, route spread {:.3e}",
        solution.residual, solution.route_spread
    ));
    let dx = doc.sheaf.coboundary(&x_inf)?;
    let graph = doc.sheaf.graph();
    report.body.push("equilibrium residuals:".into());
    for e in graph.edges() {
        report.body.push(format!(
            "  {}  |dx| = {:.6e}",
            graph.edge_label(e),
            dx.block(e).norm()
        ));
    }

    let run = constrained_diffuse(&doc.sheaf, &blocks, &u, &y0, alpha, &resolved.opts)?;
    let flow_gap = (run.final_free_state() - &solution.y).norm();
    let (status, exit) = status_from_ode(&run.outcome);
    report.status = status;
    report.exit_code = exit;
    report
        .body
        .push(format!("flow limit vs closed form: {flow_gap:.3e}"));

    let base = artifact_base(input, "poisson", &resolved.out_dir);
    let columns: Vec<Vec<f64>> = {
        let mut cols: Vec<Vec<f64>> = vec![Vec::new(); 1 + graph.vertex_count()];
        for (i, y) in run.free_states.iter().enumerate() {
            cols[0].push(run.energies[i]);
            let x = doc
                .sheaf
                .cochain0_from_flat(&blocks.assemble_state(&u, y))
                .expect("state conforms");
            for v in graph.vertices() {
                cols[1 + v.0].push(x.block(v).norm());
            }
        }
        cols
    };
    let mut header = vec!["psi".to_string()];
    header.extend(
        graph
            .vertices()
            .map(|v| format!("x_{}", graph.vertex_label(v))),
    );
    let header_refs: Vec<&str> = header.iter().map(String::as_str).collect();
    let csv = csvio::render_scalar_trajectory(&header_refs, &run.times, &columns, resolved.stride);
    write_artifact(&mut report, base.path("trajectory.csv"), &csv)?;

    let final_doc = ModelDocument {
        cochain0: Some(x_inf),
        ..doc
    };
    write_artifact(
        &mut report,
        base.path("final.model"),
        &render_model(&final_doc),
    )?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

pub fn run_learn(
    input: &Path,
    beta: Option<f64>,
    lambda: Option<f64>,
    frozen_listed: bool,
    args: &RunArgs,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("learn", input);
    let beta = resolve("beta", beta, 1.0, &mut report.echo);
    if let Some(lambda) = lambda {
        report.echo.push(EchoEntry {
            name: "lambda",
            value: format!("{lambda}"),
            defaulted: false,
        });
    }
    report.echo.push(EchoEntry {
        name: "frozen-listed",
        value: format!("{frozen_listed}"),
        defaulted: !frozen_listed,
    });
    let resolved = resolve_run(input, args, 400.0, 1e-10, 1, &mut report.echo);
    let doc = load_model(input)?;
    let x = require_cochain0(&doc)?;
    let listed = doc.adapting.clone().ok_or_else(|| SheafError::Format {
        line: 1,
        reason: "learn mode needs an [adapting] section".into(),
    })?;
    let adapt = if frozen_listed {
        listed.inverted(doc.sheaf.graph())
    } else {
        listed
    };

    let sys = build_discrepancy_system(&doc.sheaf, &x, &adapt)?;
    let rho0 = sys.current_maps(&doc.sheaf);
    let initial = sys.discrepancy(&sys.flatten(&rho0)?).norm_squared();
    let (limit_maps, run) = match lambda {
        None => {
            let limit = learning_limit(&sys, &rho0)?;
            let run = learning_flow(&sys, &rho0, beta, &resolved.opts)?;
            report.body.push(format!(
                "closed form: residual {:.6e}, consistent: {}, route spread {:.3e}",
                limit.residual, limit.consistent, limit.route_spread
            ));
            let gap = (run.final_state() - &limit.rho_flat).norm();
            report
                .body
                .push(format!("flow limit vs closed form: {gap:.3e}"));
            (limit.rho, run)
        }
        Some(lambda) => {
            let ridge = regularized_learning(&sys, &rho0, lambda)?;
            let run = regularized_learning_flow(&sys, &rho0, lambda, beta, &resolved.opts)?;
            let gap = (run.final_state() - sys.flatten(&ridge)?).norm();
            report
                .body
                .push(format!("ridge solve: flow limit vs closed form {gap:.3e}"));
            (ridge, run)
        }
    };
    let learned = sys.apply_maps(&doc.sheaf, &limit_maps)?;
    let final_sq = learned.coboundary(&x)?.norm_squared();
    report.body.push(format!(
        "discrepancy squared: initial {initial}, final {final_sq}"
    ));
    let (status, exit) = status_from_ode(&run.outcome);
    report.status = status;
    report.exit_code = exit;

    let base = artifact_base(input, "learn", &resolved.out_dir);
    let columns = vec![run.energies.clone()];
    let csv = csvio::render_scalar_trajectory(
        &["discrepancy_energy"],
        &run.times,
        &columns,
        resolved.stride,
    );
    write_artifact(&mut report, base.path("trajectory.csv"), &csv)?;
    let final_doc = ModelDocument {
        sheaf: learned,
        ..doc
    };
    write_artifact(
        &mut report,
        base.path("final.model"),
        &render_model(&final_doc),
    )?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

pub struct JointFlags {
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub policy: Option<PathBuf>,
    pub all_adapting: bool,
    pub map_ceiling: Option<f64>,
    pub opinion_ceiling: Option<f64>,
    pub audit_vertices: Option<String>,
}

fn parse_vertex_list(doc: &ModelDocument, list: &str) -> Result<Vec<VertexId>> {
    list.split(',')
        .filter(|s| !s.is_empty())
        .map(|label| {
            doc.sheaf
                .graph()
                .vertex_by_label(label.trim())
                .ok_or_else(|| SheafError::Format {
                    line: 1,
                    reason: format!("unknown vertex {label:?} in vertex list"),
                })
        })
        .collect()
}

pub fn run_joint(input: &Path, flags: &JointFlags, args: &RunArgs) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("joint", input);
    let alpha = resolve("alpha", flags.alpha, 1.0, &mut report.echo);
    let beta = resolve("beta", flags.beta, 1.0, &mut report.echo);
    let regularized = flags.lambda.is_some() || flags.mu.is_some();
    let (lambda, mu) = if regularized {
        (
            resolve("lambda", flags.lambda, 1e-3, &mut report.echo),
            resolve("mu", flags.mu, 1e-3, &mut report.echo),
        )
    } else {
        (0.0, 0.0)
    };
    let resolved = resolve_run(input, args, 500.0, 1e-9, 3, &mut report.echo);
    let doc = load_model(input)?;
    let x0 = require_cochain0(&doc)?;
    let spec = stubborn_or_empty(&doc);
    report.echo.push(EchoEntry {
        name: "all-adapting",
        value: format!("{}", flags.all_adapting),
        defaulted: !flags.all_adapting,
    });
    let adapt = resolve_adaptation(&doc, &spec, flags.policy.as_deref(), flags.all_adapting)?;
    let problem = JointProblem::new(&doc.sheaf, &spec, &adapt, alpha, beta)?;

    let classes = classify_edges(doc.sheaf.graph(), &spec, &adapt, None)?;
    report.body.push(format!(
        "edges: both-free {}, both-stubborn {}, mixed {}; symmetric {}, asymmetric {}",
        classes.both_free.len(),
        classes.both_stubborn.len(),
        classes.mixed.len(),
        classes.symmetric.len(),
        classes.asymmetric.len()
    ));

    let audited: Vec<VertexId> = match &flags.audit_vertices {
        Some(list) => parse_vertex_list(&doc, list)?,
        None => Vec::new(),
    };

    let run = if regularized {
        let reg = regularized_joint_flow(&problem, &x0, lambda, mu, &resolved.opts)?;
        report.body.push(format!(
            "regularized objective: initial {}, final {}",
            reg.objective.first().unwrap(),
            reg.objective.last().unwrap()
        ));
        report.body.push(format!(
            "a-priori bounds: opinion {:.6} (cap {:.6}), maps {:.6} (cap {:.6}), hold: {}",
            reg.opinion_displacement.last().unwrap(),
            reg.opinion_bound,
            reg.map_displacement.last().unwrap(),
            reg.map_bound,
            reg.bounds_hold()
        ));
        report.body.push(format!(
            "stationarity residuals: opinions {:.3e}, maps {:.3e}",
            reg.opinion_residual, reg.map_residual
        ));
        reg.run
    } else {
        let ceilings = match (flags.map_ceiling, flags.opinion_ceiling) {
            (None, None) => None,
            (m, y) => {
                let defaults = Ceilings::from_initial(
                    problem.maps_frobenius(&problem.initial_maps_flat()),
                    problem.free_coordinates(&x0)?.norm(),
                );
                Some(Ceilings {
                    map_fro: m.unwrap_or(defaults.map_fro),
                    free_norm: y.unwrap_or(defaults.free_norm),
                })
            }
        };
        problem.flow(&x0, &resolved.opts, ceilings)?
    };

    let (status, exit) = status_from_joint(&run.outcome, &problem);
    report.status = status;
    report.exit_code = exit;
    report.body.push(format!(
        "energy: initial {}, final {}",
        run.psi.first().unwrap(),
        run.psi.last().unwrap()
    ));
    report.body.push(format!(
        "map norm: initial {}, final {}",
        run.map_fro.first().unwrap(),
        run.map_fro.last().unwrap()
    ));
    report.body.push("final edge classification:".into());
    for entry in equilibrium_residuals(&problem, run.final_free(), run.final_maps(), None) {
        report.body.push(format!(
            "  {}  |dx| = {:.6e}  {}",
            doc.sheaf.graph().edge_label(entry.edge),
            entry.residual,
            entry.class.name()
        ));
    }
    if !audited.is_empty() {
        let audit = conservation_audit(&problem, &run, Some(&audited), None);
        for entry in &audit.entries {
            let label = doc.sheaf.graph().vertex_label(entry.vertex);
            match &entry.reason {
                Some(reason) => report
                    .body
                    .push(format!("  conservation {label}: non-applicable ({reason})")),
                None => report.body.push(format!(
                    "  conservation {label}: drift {:.3e} (tolerance {:.3e})",
                    entry.max_drift, audit.tolerance
                )),
            }
        }
    }

    if run.len() >= 2 {
        if let Ok(bound) = check_structural_stagnation(&problem, &run) {
            if bound.applicable {
                report.body.push(format!(
                    "structural stagnation: observed {:.6}, bound {:.6}, premise verified: {}",
                    bound.observed, bound.bound, bound.premise_holds
                ));
            }
        }
        if let Ok(bound) = check_opinion_stagnation(&problem, &run) {
            if bound.applicable {
                report.body.push(format!(
                    "opinion stagnation: observed {:.6}, bound {:.6}, premise verified: {}",
                    bound.observed, bound.bound, bound.premise_holds
                ));
            }
        }
    }

    let base = artifact_base(input, "joint", &resolved.out_dir);
    if run.len() >= 2 {
        let csv = csvio::render_joint_trajectory(&problem, &run, &audited, resolved.stride)?;
        write_artifact(&mut report, base.path("trajectory.csv"), &csv)?;
    }
    let final_state = run.state(&problem, run.len() - 1);
    let final_doc = ModelDocument {
        sheaf: problem.sheaf_at(run.final_maps()),
        cochain0: Some(final_state.opinions(&problem)),
        ..doc
    };
    write_artifact(
        &mut report,
        base.path("final.model"),
        &render_model(&final_doc),
    )?;
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

pub fn run_audit(
    input: &Path,
    alpha: Option<f64>,
    beta: Option<f64>,
    vertices: Option<String>,
    all_adapting: bool,
    args: &RunArgs,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("audit", input);
    let alpha = resolve("alpha", alpha, 1.0, &mut report.echo);
    let beta = resolve("beta", beta, 1.0, &mut report.echo);
    report.echo.push(EchoEntry {
        name: "all-adapting",
        value: format!("{all_adapting}"),
        defaulted: !all_adapting,
    });
    let resolved = resolve_run(input, args, 50.0, 1e-11, 3, &mut report.echo);
    let doc = load_model(input)?;
    let x0 = require_cochain0(&doc)?;
    let spec = stubborn_or_empty(&doc);
    let adapt = resolve_adaptation(&doc, &spec, None, all_adapting)?;
    let problem = JointProblem::new(&doc.sheaf, &spec, &adapt, alpha, beta)?;
    let run = problem.flow(&x0, &resolved.opts, None)?;
    let audited = match vertices {
        Some(list) => Some(parse_vertex_list(&doc, &list)?),
        None => None,
    };
    let audit = conservation_audit(&problem, &run, audited.as_deref(), None);
    let (status, exit) = status_from_joint(&run.outcome, &problem);
    report.status = status;
    report.exit_code = exit;
    report
        .body
        .push(format!("conservation tolerance: {:.3e}", audit.tolerance));
    let graph = doc.sheaf.graph();
    for entry in &audit.entries {
        let label = graph.vertex_label(entry.vertex);
        match &entry.reason {
            Some(reason) => report
                .body
                .push(format!("{label}: non-applicable ({reason})")),
            None => {
                let eigs: Vec<String> = entry
                    .initial_eigenvalues
                    .iter()
                    .map(|v| format!("{v:.4}"))
                    .collect();
                report.body.push(format!(
                    "{label}: drift {:.3e}; eigenvalues [{}]; opinion persists: {}, maps persist: {}",
                    entry.max_drift,
                    eigs.join(", "),
                    entry.opinion_persists,
                    entry.maps_persist
                ));
            }
        }
    }
    report.body.push(format!(
        "all applicable vertices within tolerance: {}",
        audit.all_within_tolerance()
    ));

    let base = artifact_base(input, "audit", &resolved.out_dir);
    if run.len() >= 2 {
        let all: Vec<VertexId> = audit
            .entries
            .iter()
            .filter(|entry| entry.applicable)
            .map(|entry| entry.vertex)
            .collect();
        let csv = csvio::render_joint_trajectory(&problem, &run, &all, resolved.stride)?;
        write_artifact(&mut report, base.path("trajectory.csv"), &csv)?;
    }
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

pub fn run_analyze(
    input: &Path,
    alpha: Option<f64>,
    beta: Option<f64>,
    epsilon: Option<f64>,
    out_dir: Option<PathBuf>,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("analyze", input);
    let alpha = resolve("alpha", alpha, 1.0, &mut report.echo);
    let beta = resolve("beta", beta, 1.0, &mut report.echo);
    let epsilon = resolve("epsilon", epsilon, 0.1, &mut report.echo);
    let out_dir =
        out_dir.unwrap_or_else(|| input.parent().map(Path::to_path_buf).unwrap_or_default());

    let table = csvio::load_trajectory(input)?;
    let times = table.dense_column("t")?;
    if times.len() < 2 {
        return Err(SheafError::TooFewSamples {
            needed: 2,
            got: times.len(),
        });
    }
    let psi = table.dense_column("psi")?;
    let delta_fro = table.dense_column("delta_fro")?;
    let delta_disp = table.dense_column("delta_disp")?;
    let x_disp = table.dense_column("x_disp")?;
    let ratios_lambda = table
        .column("ratio_lambda")
        .ok_or_else(|| SheafError::Format {
            line: 1,
            reason: "missing ratio_lambda column".into(),
        })?;
    let ratios_mu = table.column("ratio_mu").ok_or_else(|| SheafError::Format {
        line: 1,
        reason: "missing ratio_mu column".into(),
    })?;

    // Opinion norm from the per-vertex columns.
    let vertex_columns: Vec<usize> = table
        .header
        .iter()
        .enumerate()
        .filter(|(_, h)| h.starts_with("x_") && h.as_str() != "x_disp")
        .map(|(i, _)| i)
        .collect();
    let b_x = table
        .rows
        .iter()
        .map(|row| {
            vertex_columns
                .iter()
                .map(|&i| row[i].unwrap_or(0.0).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0_f64, f64::max);
    let b_delta = delta_fro.iter().copied().fold(0.0_f64, f64::max);
    let initial_mismatch = (2.0 * psi[0]).sqrt();
    let horizon = *times.last().unwrap();

    let fold_min = |ratios: &[Option<f64>]| {
        ratios
            .iter()
            .flatten()
            .copied()
            .fold(None, |acc: Option<f64>, r| {
                Some(acc.map_or(r, |a| a.min(r)))
            })
    };
    let lambda_eff = fold_min(&ratios_lambda);
    let mu_eff = fold_min(&ratios_mu);
    report.body.push(format!(
        "window: T = {horizon}, samples = {}, B_x = {b_x}, B_delta = {b_delta}, |d0 x0| = {initial_mismatch}",
        times.len()
    ));
    report.body.push(format!(
        "effective gaps: lambda {:?}, mu {:?}",
        lambda_eff, mu_eff
    ));

    let decay_ok = |rate: f64| {
        times.iter().zip(&psi).all(|(&t, &p)| {
            let envelope = initial_mismatch * (-rate * t).exp();
            (2.0 * p).sqrt() <= envelope * (1.0 + 1e-7) + 1e-12
        })
    };
    match lambda_eff {
        Some(gap) if gap > 0.0 && alpha > 0.0 => {
            let rate = alpha * gap;
            let bound = beta * b_x * initial_mismatch / rate * (-(-rate * horizon).exp_m1());
            let observed = *delta_disp.last().unwrap();
            report.body.push(format!(
                "structural stagnation: observed {observed:.6}, bound {bound:.6}, premise verified: {}",
                decay_ok(rate)
            ));
        }
        _ => report
            .body
            .push("structural stagnation: inapplicable (no positive opinion gap)".into()),
    }
    match mu_eff {
        Some(gap) if gap > 0.0 && beta > 0.0 => {
            let rate = beta * gap;
            let bound = alpha * b_delta * initial_mismatch / rate * (-(-rate * horizon).exp_m1());
            let observed = *x_disp.last().unwrap();
            report.body.push(format!(
                "opinion stagnation: observed {observed:.6}, bound {bound:.6}, premise verified: {}",
                decay_ok(rate)
            ));
        }
        _ => report
            .body
            .push("opinion stagnation: inapplicable (no positive structure gap)".into()),
    }
    if let (Some(lambda), Some(mu)) = (lambda_eff, mu_eff) {
        if lambda > 0.0 && mu > 0.0 && initial_mismatch > 0.0 {
            let thresholds =
                regime_thresholds(epsilon, lambda, mu, b_x, b_delta, initial_mismatch)?;
            report.body.push(format!(
                "regime thresholds at epsilon {epsilon}: rho- = {:.6e}, rho+ = {:.6e}, ordered: {}",
                thresholds.rho_minus, thresholds.rho_plus, thresholds.ordered
            ));
        }
    }

    // Flat ratio CSV.
    let mut flat = String::from("t,ratio_lambda,ratio_mu,psi\n");
    for i in 0..times.len() {
        let _ = write!(flat, "{}", times[i]);
        flat.push(',');
        if let Some(r) = ratios_lambda[i] {
            let _ = write!(flat, "{r}");
        }
        flat.push(',');
        if let Some(r) = ratios_mu[i] {
            let _ = write!(flat, "{r}");
        }
        flat.push(',');
        let _ = write!(flat, "{}", psi[i]);
        flat.push('\n');
    }
    let base = artifact_base(input, "analyze", &out_dir);
    write_artifact(&mut report, base.path("gaps.csv"), &flat)?;
    report.status = "analyzed".into();
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}

/// Fans independent joint runs over an `alpha x beta` grid across a worker
/// pool; each job is fully isolated and writes its own artifacts.
pub fn run_sweep(
    input: &Path,
    alphas: &str,
    betas: &str,
    jobs: Option<usize>,
    args: &RunArgs,
) -> Result<RunReport> {
    let start = Instant::now();
    let mut report = RunReport::new("sweep", input);
    let parse_list = |name: &'static str, list: &str| -> Result<Vec<f64>> {
        list.split(',')
            .filter(|s| !s.is_empty())
            .map(|tok| {
                tok.trim().parse::<f64>().map_err(|_| SheafError::Format {
                    line: 1,
                    reason: format!("{name}: not a number: {tok:?}"),
                })
            })
            .collect()
    };
    let alphas = parse_list("alphas", alphas)?;
    let betas = parse_list("betas", betas)?;
    report.echo.push(EchoEntry {
        name: "alphas",
        value: format!("{alphas:?}"),
        defaulted: false,
    });
    report.echo.push(EchoEntry {
        name: "betas",
        value: format!("{betas:?}"),
        defaulted: false,
    });
    let resolved = resolve_run(input, args, 100.0, 1e-9, 3, &mut report.echo);
    let workers = jobs.unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    });
    report.echo.push(EchoEntry {
        name: "jobs",
        value: format!("{workers}"),
        defaulted: jobs.is_none(),
    });

    let doc = load_model(input)?;
    let x0 = require_cochain0(&doc)?;
    let spec = stubborn_or_empty(&doc);
    let adapt = resolve_adaptation(&doc, &spec, None, false)?;

    let grid: Vec<(f64, f64)> = alphas
        .iter()
        .flat_map(|&a| betas.iter().map(move |&b| (a, b)))
        .collect();
    type SweepRow = (f64, f64, String, f64, f64);
    let results = std::sync::Mutex::new(Vec::<SweepRow>::new());
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..workers.min(grid.len().max(1)) {
            scope.spawn(|| loop {
                let idx = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if idx >= grid.len() {
                    break;
                }
                let (alpha, beta) = grid[idx];
                let outcome = (|| -> Result<(String, f64, f64)> {
                    let problem = JointProblem::new(&doc.sheaf, &spec, &adapt, alpha, beta)?;
                    let run = problem.flow(&x0, &resolved.opts, None)?;
                    let (status, _) = status_from_joint(&run.outcome, &problem);
                    let base = artifact_base(input, "sweep", &resolved.out_dir);
                    if run.len() >= 2 {
                        let csv =
                            csvio::render_joint_trajectory(&problem, &run, &[], resolved.stride)?;
                        let path = base.path(&format!("a{alpha}_b{beta}.trajectory.csv"));
                        if let Some(parent) = path.parent() {
                            if !parent.as_os_str().is_empty() {
                                std::fs::create_dir_all(parent)?;
                            }
                        }
                        std::fs::write(path, csv)?;
                    }
                    Ok((
                        status,
                        *run.psi.last().unwrap(),
                        *run.map_fro.last().unwrap(),
                    ))
                })();
                let row = match outcome {
                    Ok((status, psi, fro)) => (alpha, beta, status, psi, fro),
                    Err(err) => (alpha, beta, format!("error: {err}"), f64::NAN, f64::NAN),
                };
                results.lock().expect("worker poisoned").push(row);
            });
        }
    });
    let mut rows = results.into_inner().expect("workers joined");
    rows.sort_by(|a, b| (a.0, a.1).partial_cmp(&(b.0, b.1)).expect("finite grid"));
    let mut summary = String::from("alpha,beta,status,final_psi,final_delta_fro\n");
    for (alpha, beta, status, psi, fro) in &rows {
        let _ = writeln!(summary, "{alpha},{beta},\"{status}\",{psi},{fro}");
        report.body.push(format!(
            "alpha {alpha}, beta {beta}: {status}; final psi {psi}"
        ));
    }
    let base = artifact_base(input, "sweep", &resolved.out_dir);
    write_artifact(&mut report, base.path("summary.csv"), &summary)?;
    report.status = format!("{} jobs finished", rows.len());
    report.wall_ms = start.elapsed().as_secs_f64() * 1e3;
    let rendered = report.render();
    write_artifact(&mut report, base.path("report.txt"), &rendered)?;
    Ok(report)
}
