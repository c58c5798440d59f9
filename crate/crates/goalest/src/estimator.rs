//! The two-level estimation pipeline: traditional adjoint-weighted residual
//! estimate `eta1`, the residual linearization error and the adjoint
//! verification effectivity built from it, and the linearization-error-free
//! estimate `eta2`.
//!
//! With `R(u) = N(u; .) - L(.)` and `u_Hh` the prolonged converged coarse
//! solution:
//!
//! * `eta1 = -z . R(u_Hh)` with `J(u_Hh)^T z = dJ/du|_{u_Hh}`;
//! * `E_RL = -R(u_Hh) - J(u_Hh) e_h` is the Taylor remainder of the
//!   residual expansion, computable once the fine solution is known;
//! * for a linear QoI, `(eta1 - z . E_RL) / E_h = 1` exactly, which
//!   verifies the adjoint implementation against primal-only data;
//! * `eta2 = -z** . R(u_Hh)`, where `z*` solves the modified adjoint with
//!   the QoI gradient at the mean-value state `u* = u_Hh + theta* e_h` and
//!   `z**` absorbs `E_RL` through a least-squares rank-one correction,
//!   reproduces `E_h` to solver tolerance for any QoI.

use serde::Serialize;

use crate::assembly::{self, SparseMatrix};
use crate::problem::{ProblemDefinition, QoI};
use crate::solver::{self, LuSolver, SolverSettings, ThetaFlag, ThetaResult};
use crate::space::{prolong, CoefficientVector, FunctionSpace};
use crate::{Error, Result};

/// Relative threshold under which `E_h` is considered numerically
/// indeterminate for the verification effectivity.
const INDETERMINATE_EH_REL: f64 = 1e-14;

/// Relative threshold under which effectivity denominators are flagged.
const UNRELIABLE_EH_REL: f64 = 1e-12;

/// Degenerate-denominator guard for the least-squares correction.
const EXACT_COARSE_RESIDUAL2: f64 = 1e-28;

/// Fine-space operator state at the prolonged coarse solution: residual,
/// Jacobian, and its factorization, shared by every adjoint solve of a
/// pass.
pub struct FineOperator<'a> {
    pub fine: &'a FunctionSpace,
    pub problem: &'a ProblemDefinition,
    pub u_prolonged: &'a CoefficientVector,
    pub residual: CoefficientVector,
    pub jacobian: SparseMatrix,
    lu: LuSolver,
}

impl<'a> FineOperator<'a> {
    pub fn new(
        fine: &'a FunctionSpace,
        problem: &'a ProblemDefinition,
        u_prolonged: &'a CoefficientVector,
    ) -> Result<Self> {
        let residual = assembly::assemble_residual(fine, problem, u_prolonged)?;
        let jacobian = assembly::assemble_jacobian(fine, problem, u_prolonged)?;
        let lu = LuSolver::new(&jacobian)?;
        Ok(FineOperator {
            fine,
            problem,
            u_prolonged,
            residual,
            jacobian,
            lu,
        })
    }

    /// Solves the adjoint system `J^T z = rhs`.
    pub fn adjoint_solve(&self, rhs: &[f64], settings: &SolverSettings) -> Result<Vec<f64>> {
        self.lu.solve(rhs, true, settings)
    }

    pub fn lu(&self) -> &LuSolver {
        &self.lu
    }
}

/// Traditional adjoint-weighted residual estimate and its adjoint solution.
#[derive(Debug, Clone)]
pub struct Eta1Result {
    pub eta1: f64,
    pub adjoint: CoefficientVector,
}

pub fn compute_eta1(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    u_prolonged: &CoefficientVector,
    qoi: QoI,
    settings: &SolverSettings,
) -> Result<Eta1Result> {
    let op = FineOperator::new(fine, problem, u_prolonged)?;
    compute_eta1_with(&op, qoi, settings)
}

pub fn compute_eta1_with(
    op: &FineOperator,
    qoi: QoI,
    settings: &SolverSettings,
) -> Result<Eta1Result> {
    let gradient = assembly::assemble_qoi(op.fine, qoi, op.u_prolonged)?.gradient;
    let z = op.adjoint_solve(&gradient.values, settings)?;
    let adjoint = CoefficientVector { values: z };
    let eta1 = -adjoint.dot(&op.residual);
    Ok(Eta1Result { eta1, adjoint })
}

/// Residual linearization error `E_RL = -R(u_Hh) - J(u_Hh) (u_h - u_Hh)`,
/// the higher-order remainder of the residual Taylor expansion about the
/// prolonged coarse solution. Dirichlet entries are zero.
pub fn residual_linearization_error(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    u_prolonged: &CoefficientVector,
    u_fine: &CoefficientVector,
) -> Result<CoefficientVector> {
    let op = FineOperator::new(fine, problem, u_prolonged)?;
    Ok(residual_linearization_error_with(&op, u_fine))
}

pub fn residual_linearization_error_with(
    op: &FineOperator,
    u_fine: &CoefficientVector,
) -> CoefficientVector {
    let mut e = u_fine.clone();
    e.axpy(-1.0, op.u_prolonged);
    let je = op.jacobian.matvec(&e.values);
    let values = op
        .residual
        .values
        .iter()
        .zip(&je)
        .map(|(r, je)| -r - je)
        .collect();
    CoefficientVector { values }
}

/// Adjoint verification data for a linear QoI.
#[derive(Debug, Clone, Serialize)]
pub struct AdjointVerification {
    pub e_h: f64,
    pub eta1: f64,
    /// `-z . E_RL`, the estimate correction from residual linearization.
    pub eta_rl: f64,
    pub erl_norm: f64,
    /// `(eta1 + eta_rl) / E_h`; `None` when `E_h` is indeterminate.
    pub i_v: Option<f64>,
    pub indeterminate: bool,
}

impl AdjointVerification {
    pub fn passes(&self, tol: f64) -> bool {
        match self.i_v {
            Some(i_v) => (i_v - 1.0).abs() <= tol,
            None => false,
        }
    }
}

/// Runs the adjoint verification identity for a linear QoI: solves the
/// adjoint, computes the residual linearization error from primal data
/// only, and forms the effectivity `(eta1 + eta_rl) / E_h`, which must be
/// one if the adjoint implementation is correct.
pub fn verify_adjoint(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    u_prolonged: &CoefficientVector,
    u_fine: &CoefficientVector,
    qoi: QoI,
    settings: &SolverSettings,
) -> Result<AdjointVerification> {
    if !qoi.is_linear() {
        return Err(Error::ThetaSolve(format!(
            "adjoint verification requires a linear QoI, got {}",
            qoi.label()
        )));
    }
    let op = FineOperator::new(fine, problem, u_prolonged)?;
    let eta1 = compute_eta1_with(&op, qoi, settings)?;
    verification_from_adjoint(&op, &eta1.adjoint, u_fine, qoi)
}

/// Forms the verification data from a given adjoint vector. Exposed so a
/// deliberately corrupted adjoint can be shown to fail the check.
pub fn verification_from_adjoint(
    op: &FineOperator,
    adjoint: &CoefficientVector,
    u_fine: &CoefficientVector,
    qoi: QoI,
) -> Result<AdjointVerification> {
    let erl = residual_linearization_error_with(op, u_fine);
    let e_h = qoi_gap(op.fine, qoi, u_fine, op.u_prolonged)?;
    let j_fine = assembly::qoi_value(op.fine, qoi, u_fine)?;
    let eta1 = -adjoint.dot(&op.residual);
    let eta_rl = -adjoint.dot(&erl);
    let indeterminate = e_h.abs() < INDETERMINATE_EH_REL * j_fine.abs();
    Ok(AdjointVerification {
        e_h,
        eta1,
        eta_rl,
        erl_norm: erl.norm2(),
        i_v: if indeterminate {
            None
        } else {
            Some((eta1 + eta_rl) / e_h)
        },
        indeterminate,
    })
}

/// The linearization-error-free estimate and its ingredients.
#[derive(Debug, Clone)]
pub struct Eta2Result {
    pub eta2: f64,
    /// Diagnostic variant `-z* . R(u_Hh)` that omits the residual
    /// linearization correction; not used for adaptation.
    pub eta2_nores: f64,
    /// Modified adjoint solution `z*`.
    pub modified_adjoint: CoefficientVector,
    /// Corrected weight `z**` whose residual pairing is exact.
    pub corrected_adjoint: CoefficientVector,
    pub theta: ThetaResult,
    pub erl_norm: f64,
    /// Set when `||R(u_Hh)||^2` is degenerate and the correction is skipped
    /// (the coarse solution already solves the fine problem).
    pub exact_coarse: bool,
}

pub fn compute_eta2(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    u_prolonged: &CoefficientVector,
    u_fine: &CoefficientVector,
    qoi: QoI,
    settings: &SolverSettings,
) -> Result<Eta2Result> {
    let op = FineOperator::new(fine, problem, u_prolonged)?;
    compute_eta2_with(&op, u_fine, qoi, settings)
}

pub fn compute_eta2_with(
    op: &FineOperator,
    u_fine: &CoefficientVector,
    qoi: QoI,
    settings: &SolverSettings,
) -> Result<Eta2Result> {
    let mut e_h = u_fine.clone();
    e_h.axpy(-1.0, op.u_prolonged);
    let e_h_qoi = qoi_gap(op.fine, qoi, u_fine, op.u_prolonged)?;

    let theta = solver::solve_theta(op.fine, qoi, e_h_qoi, op.u_prolonged, &e_h, settings)?;
    let gradient_at_star = assembly::assemble_qoi(op.fine, qoi, &theta.u_star)?.gradient;
    let z_star = CoefficientVector {
        values: op.adjoint_solve(&gradient_at_star.values, settings)?,
    };

    let erl = residual_linearization_error_with(op, u_fine);
    let residual_norm2 = op.residual.dot(&op.residual);
    let exact_coarse = residual_norm2 < EXACT_COARSE_RESIDUAL2;
    let corrected = if exact_coarse {
        z_star.clone()
    } else {
        let mut z = z_star.clone();
        z.axpy(z_star.dot(&erl) / residual_norm2, &op.residual);
        z
    };
    let eta2 = -corrected.dot(&op.residual);
    let eta2_nores = -z_star.dot(&op.residual);
    Ok(Eta2Result {
        eta2,
        eta2_nores,
        modified_adjoint: z_star,
        corrected_adjoint: corrected,
        theta,
        erl_norm: erl.norm2(),
        exact_coarse,
    })
}

/// `J(u_fine) - J(u_prolonged)`, both evaluated on the fine space.
fn qoi_gap(
    fine: &FunctionSpace,
    qoi: QoI,
    u_fine: &CoefficientVector,
    u_prolonged: &CoefficientVector,
) -> Result<f64> {
    Ok(assembly::qoi_value(fine, qoi, u_fine)? - assembly::qoi_value(fine, qoi, u_prolonged)?)
}

/// Whether eta2 (and hence the fine nonlinear solve) is wanted.
#[derive(Debug, Clone, Copy)]
pub struct EstimationOptions {
    pub with_eta2: bool,
}

impl Default for EstimationOptions {
    fn default() -> Self {
        EstimationOptions { with_eta2: true }
    }
}

/// Every scalar of one estimation pass. Serialized as one JSON object or
/// one CSV row by the study harness.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub qoi: String,
    pub alpha: f64,
    pub n_elements: usize,
    pub coarse_dofs: usize,
    pub fine_dofs: usize,
    pub coarse_newton_iterations: usize,
    pub fine_newton_iterations: Option<usize>,
    /// Coarse-space QoI value `J^H(u^H)`.
    pub j_coarse: f64,
    /// Fine-space QoI value `J^h(u^h)`.
    pub j_fine: Option<f64>,
    /// Two-level QoI error `J^h(u^h) - J^h(u_Hh)`.
    pub e_h: Option<f64>,
    /// Error against the exact/reference value, when available.
    pub e_exact: Option<f64>,
    pub eta1: f64,
    pub eta2: Option<f64>,
    pub eta2_nores: Option<f64>,
    pub eta_rl: Option<f64>,
    pub erl_norm: Option<f64>,
    pub theta_star: Option<f64>,
    pub i_v: Option<f64>,
    /// QoI linearization gap `E_h - dJ/du|_{u_Hh} . e_h` (diagnostic).
    pub qoi_linearization_gap: Option<f64>,
    pub eff_eta1_vs_eh: Option<f64>,
    pub eff_eta2_vs_eh: Option<f64>,
    pub eff_eta1_vs_exact: Option<f64>,
    pub eff_eta2_vs_exact: Option<f64>,
    /// Corrected functional `J^H(u^H) + eta1`.
    pub corrected_eta1: f64,
    pub corrected_eta2: Option<f64>,
    /// `|J_ref - corrected|` when a reference value exists.
    pub corrected_eta1_error: Option<f64>,
    pub corrected_eta2_error: Option<f64>,
    pub uncorrected_error: Option<f64>,
    pub linear_qoi: bool,
    pub exact_coarse: bool,
    /// Set when `|E_h|` is too small relative to `J^h(u^h)` for the
    /// effectivities against it to be meaningful.
    pub unreliable_denominator: bool,
}

/// All state produced by one pass, for localization and export.
pub struct EstimationPass {
    pub report: EstimateReport,
    pub coarse_solution: CoefficientVector,
    pub prolonged: CoefficientVector,
    pub fine_solution: Option<CoefficientVector>,
    /// Traditional adjoint `z`.
    pub adjoint: CoefficientVector,
    /// Modified adjoint `z*`.
    pub modified_adjoint: Option<CoefficientVector>,
    /// Corrected weight `z**`.
    pub corrected_adjoint: Option<CoefficientVector>,
    /// Per-iteration residual norms of the Newton solves and the iterates
    /// of the scalar mean-value solve (diagnostics channel).
    pub coarse_residual_history: Vec<f64>,
    pub fine_residual_history: Option<Vec<f64>>,
    pub theta_trace: Option<Vec<(f64, f64)>>,
}

/// Runs one full estimation pass: coarse Newton solve, prolongation, the
/// optional fine Newton solve, eta1, and when requested the linearization
/// machinery and eta2.
pub fn run_estimation_pass(
    coarse: &FunctionSpace,
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    qoi: QoI,
    options: EstimationOptions,
    settings: &SolverSettings,
) -> Result<EstimationPass> {
    if !coarse.same_mesh(fine) {
        return Err(Error::MeshMismatch);
    }
    let coarse_run =
        solver::newton_primal(coarse, problem, &CoefficientVector::zeros(coarse), settings)?;
    let u_coarse = coarse_run.solution;
    let u_prolonged = prolong(coarse, fine, &u_coarse)?;
    let j_coarse = assembly::qoi_value(coarse, qoi, &u_coarse)?;

    let op = FineOperator::new(fine, problem, &u_prolonged)?;
    let eta1_out = compute_eta1_with(&op, qoi, settings)?;
    let gradient_at_prolonged = assembly::assemble_qoi(fine, qoi, &u_prolonged)?.gradient;

    let reference = problem.reference.get(qoi);
    let e_exact = reference.map(|j| j - j_coarse);
    let corrected_eta1 = j_coarse + eta1_out.eta1;

    let mut report = EstimateReport {
        qoi: qoi.label().to_string(),
        alpha: problem.alpha,
        n_elements: coarse.mesh().n_triangles(),
        coarse_dofs: coarse.dof_count(),
        fine_dofs: fine.dof_count(),
        coarse_newton_iterations: coarse_run.iterations,
        fine_newton_iterations: None,
        j_coarse,
        j_fine: None,
        e_h: None,
        e_exact,
        eta1: eta1_out.eta1,
        eta2: None,
        eta2_nores: None,
        eta_rl: None,
        erl_norm: None,
        theta_star: None,
        i_v: None,
        qoi_linearization_gap: None,
        eff_eta1_vs_eh: None,
        eff_eta2_vs_eh: None,
        eff_eta1_vs_exact: e_exact.map(|e| eta1_out.eta1 / e),
        eff_eta2_vs_exact: None,
        corrected_eta1,
        corrected_eta2: None,
        corrected_eta1_error: reference.map(|j| (j - corrected_eta1).abs()),
        corrected_eta2_error: None,
        uncorrected_error: e_exact.map(f64::abs),
        linear_qoi: qoi.is_linear(),
        exact_coarse: false,
        unreliable_denominator: false,
    };

    if !options.with_eta2 {
        return Ok(EstimationPass {
            report,
            coarse_solution: u_coarse,
            prolonged: u_prolonged,
            fine_solution: None,
            adjoint: eta1_out.adjoint,
            modified_adjoint: None,
            corrected_adjoint: None,
            coarse_residual_history: coarse_run.residual_norms,
            fine_residual_history: None,
            theta_trace: None,
        });
    }

    let fine_run = solver::newton_primal(fine, problem, &u_prolonged, settings)?;
    let u_fine = fine_run.solution;
    let j_fine = assembly::qoi_value(fine, qoi, &u_fine)?;
    let e_h = qoi_gap(fine, qoi, &u_fine, &u_prolonged)?;

    let eta2_out = compute_eta2_with(&op, &u_fine, qoi, settings)?;
    let erl = residual_linearization_error_with(&op, &u_fine);
    let eta_rl = -eta1_out.adjoint.dot(&erl);

    let mut e = u_fine.clone();
    e.axpy(-1.0, &u_prolonged);
    let qoi_linearization_gap = e_h - gradient_at_prolonged.dot(&e);

    report.fine_newton_iterations = Some(fine_run.iterations);
    report.j_fine = Some(j_fine);
    report.e_h = Some(e_h);
    report.eta2 = Some(eta2_out.eta2);
    report.eta2_nores = Some(eta2_out.eta2_nores);
    report.eta_rl = Some(eta_rl);
    report.erl_norm = Some(eta2_out.erl_norm);
    report.theta_star = Some(eta2_out.theta.theta);
    report.qoi_linearization_gap = Some(qoi_linearization_gap);
    report.linear_qoi = report.linear_qoi || eta2_out.theta.flag == ThetaFlag::LinearQoi;
    report.exact_coarse = eta2_out.exact_coarse;
    report.unreliable_denominator = e_h.abs() < UNRELIABLE_EH_REL * j_fine.abs();
    report.eff_eta1_vs_eh = Some(eta1_out.eta1 / e_h);
    report.eff_eta2_vs_eh = Some(eta2_out.eta2 / e_h);
    let corrected_eta2 = j_coarse + eta2_out.eta2;
    report.corrected_eta2 = Some(corrected_eta2);
    report.corrected_eta2_error = reference.map(|j| (j - corrected_eta2).abs());
    report.eff_eta2_vs_exact = e_exact.map(|e| eta2_out.eta2 / e);
    if qoi.is_linear() {
        let verification = verification_from_adjoint(&op, &eta1_out.adjoint, &u_fine, qoi)?;
        report.i_v = verification.i_v;
    }

    Ok(EstimationPass {
        report,
        coarse_solution: u_coarse,
        prolonged: u_prolonged,
        fine_solution: Some(u_fine),
        adjoint: eta1_out.adjoint,
        modified_adjoint: Some(eta2_out.modified_adjoint),
        corrected_adjoint: Some(eta2_out.corrected_adjoint),
        coarse_residual_history: coarse_run.residual_norms,
        fine_residual_history: Some(fine_run.residual_norms),
        theta_trace: Some(eta2_out.theta.trace),
    })
}
