//! Concrete problem instances for the nonlinear Poisson model
//! `-div((1 + alpha u^2) grad u) = f`, the four quantities of interest,
//! and exact or reference QoI values.

use serde::Serialize;

/// Quantity-of-interest identifiers.
///
/// `J1` integrates `u` over the whole domain and is linear. `J2`..`J4`
/// integrate over the L-shaped subdomain: `u^3` (cubic), `grad u . grad u`
/// (quadratic), and `sqrt(grad u . grad u)` (non-polynomial).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum QoI {
    J1,
    J2,
    J3,
    J4,
}

impl QoI {
    pub const ALL: [QoI; 4] = [QoI::J1, QoI::J2, QoI::J3, QoI::J4];

    pub fn is_linear(self) -> bool {
        self == QoI::J1
    }

    pub fn is_quadratic(self) -> bool {
        self == QoI::J3
    }

    /// Whether the integral is restricted to the subdomain.
    pub fn subdomain_only(self) -> bool {
        self != QoI::J1
    }

    pub fn label(self) -> &'static str {
        match self {
            QoI::J1 => "j1",
            QoI::J2 => "j2",
            QoI::J3 => "j3",
            QoI::J4 => "j4",
        }
    }

    pub fn parse(s: &str) -> Option<QoI> {
        match s.to_ascii_lowercase().as_str() {
            "j1" => Some(QoI::J1),
            "j2" => Some(QoI::J2),
            "j3" => Some(QoI::J3),
            "j4" => Some(QoI::J4),
            _ => None,
        }
    }
}

/// Exact or reference values of the QoIs for a problem instance.
///
/// For the manufactured solution J1..J3 have closed forms; J4 was obtained
/// by adaptive numerical quadrature. For the constant-forcing problem the
/// values are references from a resolved computation and carry roughly
/// nine significant digits.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct ReferenceValues {
    pub j1: Option<f64>,
    pub j2: Option<f64>,
    pub j3: Option<f64>,
    pub j4: Option<f64>,
}

impl ReferenceValues {
    pub fn get(&self, qoi: QoI) -> Option<f64> {
        match qoi {
            QoI::J1 => self.j1,
            QoI::J2 => self.j2,
            QoI::J3 => self.j3,
            QoI::J4 => self.j4,
        }
    }
}

/// Forcing term of the model problem.
#[derive(Debug, Clone, Copy)]
pub enum Forcing {
    /// Forcing obtained by substituting the manufactured solution into the
    /// strong form; depends on the nonlinearity parameter.
    Manufactured,
    Constant(f64),
}

/// A complete instance of the model problem.
#[derive(Debug, Clone)]
pub struct ProblemDefinition {
    /// Nonlinearity parameter, `>= 0`.
    pub alpha: f64,
    pub forcing: Forcing,
    /// Exact solution, present in the manufactured case.
    pub exact: Option<ExactSolution>,
    pub reference: ReferenceValues,
}

impl ProblemDefinition {
    pub fn forcing_at(&self, x: f64, y: f64) -> f64 {
        match self.forcing {
            Forcing::Constant(c) => c,
            Forcing::Manufactured => manufactured_forcing(self.alpha, x, y),
        }
    }
}

/// The manufactured solution `u = sin(2 pi x) sin(2 pi y) exp(5/2 (x+y))`,
/// which vanishes on every line `x, y in {-1, -1/2, 1/2, 1}` and hence on
/// the whole domain boundary.
#[derive(Debug, Clone, Copy)]
pub struct ExactSolution;

impl ExactSolution {
    pub fn value(&self, x: f64, y: f64) -> f64 {
        factor(x).0 * factor(y).0
    }

    pub fn gradient(&self, x: f64, y: f64) -> [f64; 2] {
        let (fx, dfx, _) = factor(x);
        let (fy, dfy, _) = factor(y);
        [dfx * fy, fx * dfy]
    }

    pub fn laplacian(&self, x: f64, y: f64) -> f64 {
        let (fx, _, ddfx) = factor(x);
        let (fy, _, ddfy) = factor(y);
        ddfx * fy + fx * ddfy
    }
}

/// One tensor factor `g(s) = sin(2 pi s) exp(5/2 s)` with first and second
/// derivatives.
fn factor(s: f64) -> (f64, f64, f64) {
    use std::f64::consts::PI;
    let w = 2.0 * PI;
    let e = (2.5 * s).exp();
    let sin = (w * s).sin();
    let cos = (w * s).cos();
    let g = sin * e;
    let dg = (w * cos + 2.5 * sin) * e;
    let ddg = ((6.25 - w * w) * sin + 5.0 * w * cos) * e;
    (g, dg, ddg)
}

/// Closed-form forcing for the manufactured case:
/// `f = -(1 + alpha u^2) lap(u) - 2 alpha u (grad u . grad u)`.
pub fn manufactured_forcing(alpha: f64, x: f64, y: f64) -> f64 {
    let exact = ExactSolution;
    let u = exact.value(x, y);
    let g = exact.gradient(x, y);
    let lap = exact.laplacian(x, y);
    -(1.0 + alpha * u * u) * lap - 2.0 * alpha * u * (g[0] * g[0] + g[1] * g[1])
}

/// Exact manufactured QoI values. J1..J3 are closed forms, J4 numerical.
pub fn manufactured_reference() -> ReferenceValues {
    ReferenceValues {
        j1: Some(manufactured_j1_closed_form()),
        j2: Some(manufactured_j2_closed_form()),
        j3: Some(manufactured_j3_closed_form()),
        j4: Some(5.67945022),
    }
}

pub fn manufactured_j1_closed_form() -> f64 {
    use std::f64::consts::PI;
    let e25 = (2.5f64).exp();
    let e5 = (5.0f64).exp();
    64.0 * PI * PI * (e25 - 1.0).powi(2) * (e5 + e25 + 1.0) / (e5 * (16.0 * PI * PI + 25.0).powi(2))
}

pub fn manufactured_j2_closed_form() -> f64 {
    use std::f64::consts::PI;
    let p2 = PI * PI;
    let num = 65536.0 * p2.powi(3) * ((15.0f64).exp() + (11.25f64).exp() + (3.75f64).exp() + 1.0);
    let den = 9.0 * (7.5f64).exp() * (256.0 * p2 * p2 + 4000.0 * p2 + 5625.0).powi(2);
    num / den
}

pub fn manufactured_j3_closed_form() -> f64 {
    use std::f64::consts::PI;
    let e25 = (2.5f64).exp();
    let e5 = (5.0f64).exp();
    32.0 * PI.powi(4) * (e25 - 1.0).powi(2) * (e5 + e25 + 1.0)
        / (25.0 * e5 * (16.0 * PI * PI + 25.0))
}

/// The manufactured-solution problem instance.
pub fn manufactured_problem(alpha: f64) -> ProblemDefinition {
    assert!(alpha >= 0.0, "nonlinearity parameter must be non-negative");
    ProblemDefinition {
        alpha,
        forcing: Forcing::Manufactured,
        exact: Some(ExactSolution),
        reference: manufactured_reference(),
    }
}

/// Constant forcing `f = 100` with `alpha = 1e-2`. The interior corners of
/// the domain produce gradient singularities; no exact solution exists and
/// QoI values are references from a resolved computation.
pub fn singular_problem() -> ProblemDefinition {
    ProblemDefinition {
        alpha: 1e-2,
        forcing: Forcing::Constant(100.0),
        exact: None,
        reference: ReferenceValues {
            j1: Some(6.540644835),
            j2: Some(1.238067612e1),
            j3: Some(1.596007278e2),
            j4: Some(9.391778787),
        },
    }
}

/// The nonlinearity sweep used by the verification studies.
pub const ALPHA_SWEEP: [f64; 5] = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{Dual2, Scalar};

    #[test]
    fn manufactured_solution_vanishes_on_the_boundary() {
        let exact = ExactSolution;
        // Sample 50 points around the outer square and the hole.
        for k in 0..50 {
            let s = -1.0 + 2.0 * (k as f64) / 49.0;
            for p in [
                [s, -1.0],
                [s, 1.0],
                [-1.0, s],
                [1.0, s],
                [s.clamp(-0.5, 0.5), 0.5],
                [s.clamp(-0.5, 0.5), -0.5],
                [0.5, s.clamp(-0.5, 0.5)],
                [-0.5, s.clamp(-0.5, 0.5)],
            ] {
                assert!(
                    exact.value(p[0], p[1]).abs() <= 1e-12,
                    "u({p:?}) = {}",
                    exact.value(p[0], p[1])
                );
            }
        }
    }

    /// Second-order AD oracle for the strong form: evaluates
    /// `-(d/dx)[(1+alpha u^2) u_x] - (d/dy)[(1+alpha u^2) u_y]` with
    /// univariate Taylor arithmetic applied directly to
    /// `u = sin(2 pi x) sin(2 pi y) exp(5/2 (x+y))`, never touching the
    /// hand-derived derivatives in `factor`.
    fn strong_form_oracle(alpha: f64, x: f64, y: f64) -> f64 {
        use std::f64::consts::PI;
        // u along a coordinate line as a Dual2 in the swept variable.
        let u_sweep = |t: Dual2, other: f64| -> Dual2 {
            let swept = t.scale(2.0 * PI).sin() * t.scale(2.5).exp();
            swept.scale((2.0 * PI * other).sin() * (2.5 * other).exp())
        };
        // d/ds [(1 + alpha u^2) u_s] = 2 alpha u u_s^2 + (1 + alpha u^2) u_ss
        let flux_div = |u: Dual2| {
            2.0 * alpha * u.value * u.first * u.first + (1.0 + alpha * u.value * u.value) * u.second
        };
        let ux = u_sweep(Dual2::variable(x), y);
        let uy = u_sweep(Dual2::variable(y), x);
        -(flux_div(ux) + flux_div(uy))
    }

    #[test]
    fn closed_form_forcing_matches_ad_oracle() {
        for (alpha, x, y) in [
            (0.0, 0.3, 0.2),
            (1e-2, 0.3, 0.2),
            (1e-2, -0.7, 0.6),
            (1e-1, 0.8, -0.9),
        ] {
            let f = manufactured_forcing(alpha, x, y);
            let oracle = strong_form_oracle(alpha, x, y);
            assert!(
                (f - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                "alpha={alpha}, ({x},{y}): closed {f} oracle {oracle}"
            );
        }
    }

    #[test]
    fn forcing_at_alpha_zero_is_negative_laplacian() {
        let exact = ExactSolution;
        let (x, y) = (0.3, 0.2);
        let f = manufactured_forcing(0.0, x, y);
        assert!((f + exact.laplacian(x, y)).abs() <= 1e-12 * f.abs().max(1.0));
    }

    #[test]
    fn closed_forms_reproduce_reported_digits() {
        // Twelve significant digits of the reported values.
        let j1 = manufactured_j1_closed_form();
        let j2 = manufactured_j2_closed_form();
        let j3 = manufactured_j3_closed_form();
        assert!((j1 - 2.57052599061823).abs() <= 1e-12 * j1.abs());
        assert!((j2 - 2.64090163593838).abs() <= 1e-12 * j2.abs());
        assert!((j3 - 9.28106693871883e1).abs() <= 1e-12 * j3.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let exact = ExactSolution;
        let h = 1e-6;
        for (x, y) in [(0.31, 0.17), (-0.62, 0.83), (0.77, -0.9)] {
            let g = exact.gradient(x, y);
            let fdx = (exact.value(x + h, y) - exact.value(x - h, y)) / (2.0 * h);
            let fdy = (exact.value(x, y + h) - exact.value(x, y - h)) / (2.0 * h);
            assert!((g[0] - fdx).abs() <= 1e-6 * fdx.abs().max(1.0));
            assert!((g[1] - fdy).abs() <= 1e-6 * fdy.abs().max(1.0));
        }
    }
}
