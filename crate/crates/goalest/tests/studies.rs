//! Study-level integration tests: convergence trends and adaptive-drive
//! comparisons that exercise the whole pipeline end to end.

mod common;

use std::sync::Arc;

use common::{initial_spaces, rel_err};
use goalest::assembly::qoi_value;
use goalest::estimator::{run_estimation_pass, EstimationOptions};
use goalest::localize::{adaptive_cycle, EstimatorChoice};
use goalest::mesh::generate_initial_mesh;
use goalest::problem::{manufactured_problem, singular_problem, ExactSolution, QoI};
use goalest::solver::{newton_primal, SolverSettings};
use goalest::space::{CoefficientVector, FunctionSpace, Order};

/// Runs an adaptive history and returns `(|E|, coarse dofs)` per cycle.
fn adaptive_history(
    problem: &goalest::problem::ProblemDefinition,
    qoi: QoI,
    choice: EstimatorChoice,
    cycles: usize,
) -> Vec<(f64, usize)> {
    let settings = SolverSettings::default();
    let mut mesh = Arc::new(generate_initial_mesh());
    let mut history = Vec::new();
    for cycle in 0..cycles {
        let out = adaptive_cycle(&mesh, problem, qoi, choice, 2.0, &settings).unwrap();
        history.push((out.report.e_exact.unwrap().abs(), out.report.coarse_dofs));
        if cycle + 1 < cycles {
            mesh = Arc::new(out.adapted_mesh);
        }
    }
    history
}

#[test]
fn manufactured_j2_both_drives_decrease_monotonically() {
    let problem = manufactured_problem(1e-2);
    for choice in [EstimatorChoice::Eta1, EstimatorChoice::Eta2] {
        let history = adaptive_history(&problem, QoI::J2, choice, 5);
        for pair in history.windows(2) {
            assert!(
                pair[1].0 < pair[0].0,
                "{choice:?}: error increased: {history:?}"
            );
        }
    }
}

#[test]
fn manufactured_j3_adaptive_beats_uniform_at_comparable_dofs() {
    let settings = SolverSettings::default();
    let problem = manufactured_problem(1e-2);
    let adaptive = adaptive_history(&problem, QoI::J3, EstimatorChoice::Eta2, 5);
    let (final_error, final_dofs) = *adaptive.last().unwrap();

    // Uniform history of coarse QoI errors.
    let reference = problem.reference.get(QoI::J3).unwrap();
    let mut mesh = Arc::new(generate_initial_mesh());
    let mut uniform = Vec::new();
    for level in 0..4 {
        let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
        let u = newton_primal(
            &coarse,
            &problem,
            &CoefficientVector::zeros(&coarse),
            &settings,
        )
        .unwrap()
        .solution;
        uniform.push((
            (reference - qoi_value(&coarse, QoI::J3, &u).unwrap()).abs(),
            coarse.dof_count(),
        ));
        if level < 3 {
            mesh = Arc::new(mesh.uniform_refine().unwrap());
        }
    }
    // Comparable dof count: the nearest uniform level in log distance.
    let (uniform_error, uniform_dofs) = uniform
        .iter()
        .min_by(|a, b| {
            let da = (a.1 as f64 / final_dofs as f64).ln().abs();
            let db = (b.1 as f64 / final_dofs as f64).ln().abs();
            da.partial_cmp(&db).unwrap()
        })
        .copied()
        .unwrap();
    assert!(
        final_error < uniform_error,
        "adaptive {final_error:.3e} at {final_dofs} dofs vs uniform {uniform_error:.3e} at {uniform_dofs} dofs"
    );
}

#[test]
fn singular_j2_drives_agree_within_a_factor_of_two() {
    let problem = singular_problem();
    let eta1 = adaptive_history(&problem, QoI::J2, EstimatorChoice::Eta1, 5);
    let eta2 = adaptive_history(&problem, QoI::J2, EstimatorChoice::Eta2, 5);
    let (e1, _) = *eta1.last().unwrap();
    let (e2, _) = *eta2.last().unwrap();
    let ratio = (e1 / e2).max(e2 / e1);
    assert!(
        ratio <= 2.0,
        "final errors {e1:.3e} vs {e2:.3e}, ratio {ratio:.2}"
    );
}

#[test]
fn singular_j1_uniform_sequence_converges_to_the_reference() {
    let settings = SolverSettings::default();
    let problem = singular_problem();
    let reference = problem.reference.get(QoI::J1).unwrap();
    let mut mesh = Arc::new(generate_initial_mesh());
    let mut errors = Vec::new();
    for level in 0..4 {
        let coarse = FunctionSpace::new(mesh.clone(), Order::P1);
        let u = newton_primal(
            &coarse,
            &problem,
            &CoefficientVector::zeros(&coarse),
            &settings,
        )
        .unwrap()
        .solution;
        errors.push((reference - qoi_value(&coarse, QoI::J1, &u).unwrap()).abs());
        if level < 3 {
            mesh = Arc::new(mesh.uniform_refine().unwrap());
        }
    }
    for pair in errors.windows(2) {
        assert!(pair[1] < pair[0], "not monotone: {errors:?}");
    }
    // The finest level sits within one percent of the reference.
    assert!(
        errors[3] <= 1e-2 * reference.abs(),
        "finest error {:.3e}",
        errors[3]
    );
}

#[test]
fn interpolated_exact_qoi_converges_at_second_order_or_better() {
    // Fine-space interpolation of the exact solution: QoI errors against
    // the closed forms must decay with rate >= 2 under uniform refinement.
    let problem = manufactured_problem(0.0);
    let exact = ExactSolution;
    let mut mesh = Arc::new(generate_initial_mesh());
    let mut errors: Vec<[f64; 2]> = Vec::new();
    for level in 0..3 {
        let fine = FunctionSpace::new(mesh.clone(), Order::P2);
        let u = CoefficientVector::interpolate(&fine, |x, y| exact.value(x, y));
        let e = [QoI::J1, QoI::J3].map(|qoi| {
            rel_err(
                qoi_value(&fine, qoi, &u).unwrap(),
                problem.reference.get(qoi).unwrap(),
            )
        });
        errors.push(e);
        if level < 2 {
            mesh = Arc::new(mesh.uniform_refine().unwrap());
        }
    }
    for k in 0..2 {
        let rate = (errors[1][k] / errors[2][k]).log2();
        assert!(
            rate >= 2.0,
            "qoi {k}: errors {errors:?}, last rate {rate:.2}"
        );
    }
}

#[test]
fn newton_iteration_counts_are_informational_but_finite() {
    // The nonlinear solve iteration counts on the initial mesh, recorded as
    // study metadata: zero extra iterations for the linear problem, a
    // moderate count for the nonlinear ones.
    let settings = SolverSettings::default();
    let (_, coarse, fine) = initial_spaces();
    for (alpha, max_expected) in [(0.0, 1), (1e-2, 30), (1e-1, 40)] {
        let problem = manufactured_problem(alpha);
        let pass = run_estimation_pass(
            &coarse,
            &fine,
            &problem,
            QoI::J1,
            EstimationOptions::default(),
            &settings,
        )
        .unwrap();
        assert!(
            pass.report.coarse_newton_iterations <= max_expected,
            "alpha {alpha}: {} iterations",
            pass.report.coarse_newton_iterations
        );
        assert!(pass.report.fine_newton_iterations.unwrap() <= max_expected);
    }
}
