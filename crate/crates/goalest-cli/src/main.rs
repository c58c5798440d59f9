//! Study harness for two-level goal-oriented error estimation.
//!
//! Three commands mirror the verification and convergence studies of the
//! underlying library:
//!
//! * `verify-adjoint` sweeps the nonlinearity parameter for the linear QoI
//!   and checks the adjoint verification identity `(eta1 + eta_rl)/E_h = 1`;
//! * `verify-eta2` checks the exactness `eta2/E_h = 1` for the nonlinear
//!   QoIs and traces the scalar mean-value equation over `[0, 1]`;
//! * `study` runs uniform-refinement or adaptive convergence histories and
//!   emits per-cycle rows.
//!
//! Every command writes `report.csv` and `report.json` into `--out`; study
//! cycles additionally write `mesh_cycle_<k>.vtk`. Exit codes: 0 success,
//! 2 verification failure, 3 solver failure.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use goalest::assembly;
use goalest::estimator::{run_estimation_pass, EstimateReport, EstimationOptions};
use goalest::localize::{adaptive_cycle, EstimatorChoice};
use goalest::mesh::generate_initial_mesh;
use goalest::problem::{
    manufactured_problem, singular_problem, ProblemDefinition, QoI, ALPHA_SWEEP,
};
use goalest::solver::SolverSettings;
use goalest::space::{restrict, CoefficientVector, FunctionSpace, Order};
use goalest::vtk::write_vtk;

mod config;
mod csv;

use config::{Mode, ProblemKind, StudyConfig};

#[derive(Parser)]
#[command(
    name = "goalest",
    about = "Goal-oriented error estimation studies",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Adjoint verification table over the nonlinearity sweep (linear QoI).
    VerifyAdjoint(CommonArgs),
    /// Exactness check of the corrected estimate for nonlinear QoIs.
    VerifyEta2(CommonArgs),
    /// Uniform or adaptive convergence study.
    Study(CommonArgs),
}

#[derive(Args, Clone, Default)]
struct CommonArgs {
    /// Plain-text key=value config file; explicit flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Problem instance: manufactured | singular.
    #[arg(long)]
    problem: Option<String>,
    /// Quantity of interest: j1 | j2 | j3 | j4.
    #[arg(long)]
    qoi: Option<String>,
    /// Nonlinearity parameter.
    #[arg(long)]
    alpha: Option<f64>,
    /// Number of study cycles (meshes).
    #[arg(long)]
    cycles: Option<usize>,
    /// Estimate driving adaptation: eta1 | eta2.
    #[arg(long)]
    estimator: Option<String>,
    /// Study mode: uniform | adapt.
    #[arg(long)]
    mode: Option<String>,
    /// Requested element-count growth per adaptive cycle.
    #[arg(long = "target-factor")]
    target_factor: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print solver iteration histories.
    #[arg(long)]
    verbose: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::VerifyAdjoint(args) => prepare(args).and_then(|c| cmd_verify_adjoint(&c)),
        Command::VerifyEta2(args) => prepare(args).and_then(|c| cmd_verify_eta2(&c)),
        Command::Study(args) => prepare(args).and_then(|c| cmd_study(&c)),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            let solver_failure = matches!(
                e.downcast_ref::<goalest::Error>(),
                Some(
                    goalest::Error::LinearSolveFailure { .. }
                        | goalest::Error::Factorization(_)
                        | goalest::Error::NewtonDivergence { .. }
                        | goalest::Error::NewtonMaxIterations { .. }
                        | goalest::Error::ThetaSolve(_)
                )
            );
            ExitCode::from(if solver_failure { 3 } else { 1 })
        }
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn prepare(args: &CommonArgs) -> AnyResult<StudyConfig> {
    let config = StudyConfig::resolve(args)?;
    std::fs::create_dir_all(&config.out)?;
    Ok(config)
}

fn problem_for(config: &StudyConfig) -> ProblemDefinition {
    match config.problem {
        ProblemKind::Manufactured => manufactured_problem(config.alpha),
        ProblemKind::Singular => singular_problem(),
    }
}

/// Verification sweep: one row per nonlinearity value, rightmost column
/// the verification effectivity. Returns false (exit 2) when any row
/// fails `|I_v - 1| <= 1e-6`.
fn cmd_verify_adjoint(config: &StudyConfig) -> AnyResult<bool> {
    if config.qoi != QoI::J1 {
        return Err("verify-adjoint requires the linear QoI j1".into());
    }
    let settings = SolverSettings::default();
    let mesh = Arc::new(generate_initial_mesh());
    let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
    let fine = FunctionSpace::new(mesh.clone(), Order::P2);

    // The singular problem has a fixed nonlinearity, so only the
    // manufactured problem sweeps it.
    let alphas: Vec<f64> = if config.alpha_explicit || config.problem == ProblemKind::Singular {
        vec![config.alpha]
    } else {
        ALPHA_SWEEP.to_vec()
    };

    let mut csv = csv::CsvWriter::create(&config.out.join("report.csv"), csv::REPORT_HEADER)?;
    let mut rows = Vec::new();
    let mut all_pass = true;
    println!(
        "{:>10} {:>13} {:>13} {:>13} {:>13} {:>10} {:>10}",
        "alpha", "erl_norm", "E_h", "eta1", "eta_rl", "eta1/E_h", "I_v"
    );
    for &alpha in &alphas {
        let problem = match config.problem {
            ProblemKind::Manufactured => manufactured_problem(alpha),
            ProblemKind::Singular => singular_problem(),
        };
        let started = Instant::now();
        let pass = run_estimation_pass(
            &coarse,
            &fine,
            &problem,
            QoI::J1,
            EstimationOptions { with_eta2: true },
            &settings,
        )?;
        let wall = started.elapsed().as_secs_f64();
        let r = &pass.report;
        let i_v = r.i_v;
        let e_h = r.e_h.unwrap_or(f64::NAN);
        let row_pass = i_v.map(|v| (v - 1.0).abs() <= 1e-6).unwrap_or(false);
        all_pass &= row_pass;
        println!(
            "{:>10.1e} {:>13.4e} {:>13.4e} {:>13.4e} {:>13.4e} {:>10.4e} {:>10} {}",
            alpha,
            r.erl_norm.unwrap_or(f64::NAN),
            e_h,
            r.eta1,
            r.eta_rl.unwrap_or(f64::NAN),
            r.eta1 / e_h,
            i_v.map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "indeterminate".into()),
            if row_pass { "" } else { "FAIL" }
        );
        if config.verbose {
            print_histories(&pass);
        }
        csv.write_report_row(0, r, wall)?;
        rows.push(r.clone());
    }
    write_json(&config.out, config, &rows, &[])?;
    Ok(all_pass)
}

/// Exactness table for the corrected estimate on the nonlinear QoIs, with
/// the scalar equation traced at ten evenly spaced points.
fn cmd_verify_eta2(config: &StudyConfig) -> AnyResult<bool> {
    let settings = SolverSettings::default();
    let mesh = Arc::new(generate_initial_mesh());
    let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
    let fine = FunctionSpace::new(mesh.clone(), Order::P2);
    let problem = problem_for(config);

    let qois: Vec<QoI> = if config.qoi_explicit {
        if config.qoi == QoI::J1 {
            return Err("verify-eta2 requires a nonlinear QoI (j2, j3, j4)".into());
        }
        vec![config.qoi]
    } else {
        vec![QoI::J2, QoI::J3, QoI::J4]
    };

    let mut csv = csv::CsvWriter::create(&config.out.join("report.csv"), csv::REPORT_HEADER)?;
    let mut rows = Vec::new();
    let mut traces = Vec::new();
    let mut all_pass = true;
    println!(
        "{:>4} {:>13} {:>13} {:>13} {:>13} {:>13} {:>13}",
        "qoi", "E_h", "eta1", "eta2", "eta1/E_h", "eta2/E_h", "theta*"
    );
    for &qoi in &qois {
        let started = Instant::now();
        let pass = run_estimation_pass(
            &coarse,
            &fine,
            &problem,
            qoi,
            EstimationOptions { with_eta2: true },
            &settings,
        )?;
        let wall = started.elapsed().as_secs_f64();
        let r = &pass.report;
        let e_h = r.e_h.unwrap();
        let eta2 = r.eta2.unwrap();
        let ratio = eta2 / e_h;
        let row_pass = (ratio - 1.0).abs() <= 1e-6;
        all_pass &= row_pass;
        println!(
            "{:>4} {:>13.4e} {:>13.4e} {:>13.4e} {:>13.4e} {:>13.10} {:>13.6} {}",
            qoi.label(),
            e_h,
            r.eta1,
            eta2,
            r.eta1 / e_h,
            ratio,
            r.theta_star.unwrap(),
            if row_pass { "" } else { "FAIL" }
        );

        // Trace the scalar mean-value equation f(theta) over [0, 1].
        let u_fine = pass.fine_solution.as_ref().unwrap();
        let mut direction = u_fine.clone();
        direction.axpy(-1.0, &pass.prolonged);
        let mut trace = Vec::new();
        for k in 0..10 {
            let theta = k as f64 / 9.0;
            let line = assembly::qoi_along_line(&fine, qoi, &pass.prolonged, &direction, theta)?;
            trace.push((theta, e_h - line.first));
        }
        if config.verbose {
            println!("  f(theta) trace:");
            for (theta, f) in &trace {
                println!("    f({theta:.3}) = {f:+.6e}");
            }
            print_histories(&pass);
        }
        traces.push(ThetaTrace {
            qoi: qoi.label().to_string(),
            theta_star: r.theta_star.unwrap(),
            points: trace,
        });
        csv.write_report_row(0, r, wall)?;
        rows.push(r.clone());
    }
    write_json(&config.out, config, &rows, &traces)?;
    Ok(all_pass)
}

/// Convergence study: per-cycle estimation on uniformly refined meshes or
/// on meshes adapted by the localized estimates. Writes one CSV row and one
/// VTK snapshot per cycle; partial histories survive failures because rows
/// are flushed as they are produced.
fn cmd_study(config: &StudyConfig) -> AnyResult<bool> {
    let settings = SolverSettings::default();
    let problem = problem_for(config);
    let qoi = config.qoi;
    let mut csv = csv::CsvWriter::create(&config.out.join("report.csv"), csv::REPORT_HEADER)?;
    let mut rows: Vec<EstimateReport> = Vec::new();
    let mut mesh = Arc::new(generate_initial_mesh());

    println!(
        "study: problem={} qoi={} alpha={:.1e} mode={} estimator={} cycles={}",
        config.problem.label(),
        qoi.label(),
        problem.alpha,
        config.mode.label(),
        match config.estimator {
            EstimatorChoice::Eta1 => "eta1",
            EstimatorChoice::Eta2 => "eta2",
        },
        config.cycles
    );

    for cycle in 0..config.cycles {
        let started = Instant::now();
        match config.mode {
            Mode::Uniform => {
                let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
                let fine = FunctionSpace::new(mesh.clone(), Order::P2);
                let pass = run_estimation_pass(
                    &coarse,
                    &fine,
                    &problem,
                    qoi,
                    EstimationOptions { with_eta2: true },
                    &settings,
                )?;
                let wall = started.elapsed().as_secs_f64();
                report_cycle(cycle, &pass.report, wall);
                if config.verbose {
                    print_histories(&pass);
                }
                csv.write_report_row(cycle, &pass.report, wall)?;
                let nodal = vertex_field(&coarse, &pass.coarse_solution);
                let adjoint_nodal = restrict(&fine, &coarse, &pass.adjoint)?;
                write_vtk(
                    &config.out.join(format!("mesh_cycle_{cycle}.vtk")),
                    &mesh,
                    &[("u", &nodal), ("adjoint", &adjoint_nodal.values)],
                    &[],
                )?;
                rows.push(pass.report);
                if cycle + 1 < config.cycles {
                    mesh = Arc::new(mesh.uniform_refine()?);
                }
            }
            Mode::Adapt => {
                let out = adaptive_cycle(
                    &mesh,
                    &problem,
                    qoi,
                    config.estimator,
                    config.target_factor,
                    &settings,
                )?;
                let wall = started.elapsed().as_secs_f64();
                report_cycle(cycle, &out.report, wall);
                if config.verbose {
                    print_histories(&out.pass);
                }
                csv.write_report_row(cycle, &out.report, wall)?;
                let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
                let nodal = vertex_field(&coarse, &out.pass.coarse_solution);
                write_vtk(
                    &config.out.join(format!("mesh_cycle_{cycle}.vtk")),
                    &mesh,
                    &[("u", &nodal), ("indicator_vertex", &out.indicators.vertex)],
                    &[
                        ("indicator", &out.indicators.element),
                        ("target_size", &out.size_field.targets),
                    ],
                )?;
                rows.push(out.report);
                if cycle + 1 < config.cycles {
                    mesh = Arc::new(out.adapted_mesh);
                }
            }
        }
    }
    write_json(&config.out, config, &rows, &[])?;
    Ok(true)
}

fn report_cycle(cycle: usize, r: &EstimateReport, wall: f64) {
    println!(
        "cycle {cycle}: n_el={} dofs={} J={:.10e} E={} eta1={:.4e} eta2={} ({:.2}s)",
        r.n_elements,
        r.coarse_dofs,
        r.j_coarse,
        r.e_exact
            .map(|e| format!("{e:.4e}"))
            .unwrap_or_else(|| "-".into()),
        r.eta1,
        r.eta2
            .map(|e| format!("{e:.4e}"))
            .unwrap_or_else(|| "-".into()),
        wall
    );
}

fn print_histories(pass: &goalest::estimator::EstimationPass) {
    let fmt = |h: &[f64]| {
        h.iter()
            .map(|r| format!("{r:.3e}"))
            .collect::<Vec<_>>()
            .join(" ")
    };
    println!(
        "  coarse newton |R|: {}",
        fmt(&pass.coarse_residual_history)
    );
    if let Some(h) = &pass.fine_residual_history {
        println!("  fine newton |R|:   {}", fmt(h));
    }
    if let Some(trace) = &pass.theta_trace {
        let s = trace
            .iter()
            .map(|(t, f)| format!("({t:.6}, {f:+.3e})"))
            .collect::<Vec<_>>()
            .join(" ");
        println!("  theta iterates:    {s}");
    }
}

/// Vertex block of a coarse solution, for VTK point data.
fn vertex_field(coarse: &FunctionSpace, u: &CoefficientVector) -> Vec<f64> {
    u.values[..coarse.mesh().n_vertices()].to_vec()
}

#[derive(serde::Serialize)]
struct ThetaTrace {
    qoi: String,
    theta_star: f64,
    points: Vec<(f64, f64)>,
}

fn write_json(
    out: &Path,
    config: &StudyConfig,
    rows: &[EstimateReport],
    traces: &[ThetaTrace],
) -> AnyResult<()> {
    #[derive(serde::Serialize)]
    struct Report<'a> {
        config: &'a StudyConfig,
        rows: &'a [EstimateReport],
        #[serde(skip_serializing_if = "<[_]>::is_empty")]
        theta_traces: &'a [ThetaTrace],
    }
    let report = Report {
        config,
        rows,
        theta_traces: traces,
    };
    let mut file = std::fs::File::create(out.join("report.json"))?;
    serde_json::to_writer_pretty(&mut file, &report)?;
    file.flush()?;
    Ok(())
}
