//! Forward-mode differentiation scalars.
//!
//! [`Dual`] carries a value and a fixed-size array of partials with respect
//! to the active element-local dofs (at most 6 for scalar P2) and is used
//! for element Jacobians and QoI gradients. [`Dual2`] carries univariate
//! first and second derivatives and is used for directional second
//! derivatives of QoIs along a line in coefficient space, which is all the
//! scalar mean-value solve needs; the QoI Hessian is never assembled.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::space::MAX_LOCAL_DOFS;

/// Common scalar interface so integrands can be written once and evaluated
/// with plain values, element-dof duals, or line duals.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn value(self) -> f64;
    fn scale(self, s: f64) -> Self;
    fn sqrt(self) -> Self;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn value(self) -> f64 {
        self
    }
    fn scale(self, s: f64) -> Self {
        self * s
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Value plus partials with respect to up to `MAX_LOCAL_DOFS` seeds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub grad: [f64; MAX_LOCAL_DOFS],
}

impl Dual {
    pub fn constant(value: f64) -> Self {
        Dual {
            value,
            grad: [0.0; MAX_LOCAL_DOFS],
        }
    }

    /// Seed `i`: value with unit partial in slot `i`.
    pub fn seed(value: f64, i: usize) -> Self {
        let mut grad = [0.0; MAX_LOCAL_DOFS];
        grad[i] = 1.0;
        Dual { value, grad }
    }
}

/// Lifts element-local coefficients into seeded duals: seed `i` has the
/// coefficient value and the `i`-th unit derivative direction.
pub fn lift_element_dofs(coeffs: &[f64]) -> [Dual; MAX_LOCAL_DOFS] {
    debug_assert!(coeffs.len() <= MAX_LOCAL_DOFS);
    let mut out = [Dual::constant(0.0); MAX_LOCAL_DOFS];
    for (i, &c) in coeffs.iter().enumerate() {
        out[i] = Dual::seed(c, i);
    }
    out
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, rhs: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(&rhs.grad) {
            *g += r;
        }
        Dual {
            value: self.value + rhs.value,
            grad,
        }
    }
}

impl Sub for Dual {
    type Output = Dual;
    fn sub(self, rhs: Dual) -> Dual {
        let mut grad = self.grad;
        for (g, r) in grad.iter_mut().zip(&rhs.grad) {
            *g -= r;
        }
        Dual {
            value: self.value - rhs.value,
            grad,
        }
    }
}

impl Mul for Dual {
    type Output = Dual;
    fn mul(self, rhs: Dual) -> Dual {
        let mut grad = [0.0; MAX_LOCAL_DOFS];
        for (g, (a, b)) in grad.iter_mut().zip(self.grad.iter().zip(&rhs.grad)) {
            *g = a * rhs.value + self.value * b;
        }
        Dual {
            value: self.value * rhs.value,
            grad,
        }
    }
}

impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        let mut grad = self.grad;
        for g in grad.iter_mut() {
            *g = -*g;
        }
        Dual {
            value: -self.value,
            grad,
        }
    }
}

impl Div for Dual {
    type Output = Dual;
    fn div(self, rhs: Dual) -> Dual {
        let inv = 1.0 / rhs.value;
        let mut grad = [0.0; MAX_LOCAL_DOFS];
        for (g, (a, b)) in grad.iter_mut().zip(self.grad.iter().zip(&rhs.grad)) {
            *g = (a - self.value * inv * b) * inv;
        }
        Dual {
            value: self.value * inv,
            grad,
        }
    }
}

impl Scalar for Dual {
    fn from_f64(x: f64) -> Self {
        Dual::constant(x)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn scale(self, s: f64) -> Self {
        let mut grad = self.grad;
        for g in grad.iter_mut() {
            *g *= s;
        }
        Dual {
            value: self.value * s,
            grad,
        }
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        let d = 0.5 / r;
        let mut grad = self.grad;
        for g in grad.iter_mut() {
            *g *= d;
        }
        Dual { value: r, grad }
    }
}

/// Univariate Taylor arithmetic through second order: value, d/dt, d2/dt2.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual2 {
    pub value: f64,
    pub first: f64,
    pub second: f64,
}

impl Dual2 {
    pub fn constant(value: f64) -> Self {
        Dual2 {
            value,
            first: 0.0,
            second: 0.0,
        }
    }

    /// The line parameter itself: value `t`, unit first derivative.
    pub fn variable(t: f64) -> Self {
        Dual2 {
            value: t,
            first: 1.0,
            second: 0.0,
        }
    }

    /// A quantity varying linearly along the line, `base + t * slope`.
    pub fn linear(base: f64, slope: f64, t: f64) -> Self {
        Dual2 {
            value: base + t * slope,
            first: slope,
            second: 0.0,
        }
    }

    pub fn is_finite(self) -> bool {
        self.value.is_finite() && self.first.is_finite() && self.second.is_finite()
    }

    pub fn sin(self) -> Dual2 {
        let (s, c) = self.value.sin_cos();
        Dual2 {
            value: s,
            first: self.first * c,
            second: self.second * c - self.first * self.first * s,
        }
    }

    pub fn exp(self) -> Dual2 {
        let e = self.value.exp();
        Dual2 {
            value: e,
            first: self.first * e,
            second: (self.second + self.first * self.first) * e,
        }
    }
}

impl Add for Dual2 {
    type Output = Dual2;
    fn add(self, rhs: Dual2) -> Dual2 {
        Dual2 {
            value: self.value + rhs.value,
            first: self.first + rhs.first,
            second: self.second + rhs.second,
        }
    }
}

impl Sub for Dual2 {
    type Output = Dual2;
    fn sub(self, rhs: Dual2) -> Dual2 {
        Dual2 {
            value: self.value - rhs.value,
            first: self.first - rhs.first,
            second: self.second - rhs.second,
        }
    }
}

impl Mul for Dual2 {
    type Output = Dual2;
    fn mul(self, rhs: Dual2) -> Dual2 {
        Dual2 {
            value: self.value * rhs.value,
            first: self.first * rhs.value + self.value * rhs.first,
            second: self.second * rhs.value
                + 2.0 * self.first * rhs.first
                + self.value * rhs.second,
        }
    }
}

impl Neg for Dual2 {
    type Output = Dual2;
    fn neg(self) -> Dual2 {
        Dual2 {
            value: -self.value,
            first: -self.first,
            second: -self.second,
        }
    }
}

impl Scalar for Dual2 {
    fn from_f64(x: f64) -> Self {
        Dual2::constant(x)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn scale(self, s: f64) -> Self {
        Dual2 {
            value: self.value * s,
            first: self.first * s,
            second: self.second * s,
        }
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        let first = 0.5 * self.first / r;
        let second = 0.5 * self.second / r - 0.25 * self.first * self.first / (r * r * r);
        Dual2 {
            value: r,
            first,
            second,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_seed_has_unit_partial() {
        let seeds = lift_element_dofs(&[3.0]);
        assert_eq!(seeds[0].value, 3.0);
        assert_eq!(seeds[0].grad[0], 1.0);
        assert!(seeds[0].grad[1..].iter().all(|&g| g == 0.0));
    }

    #[test]
    fn square_derivative() {
        let x = Dual::seed(2.0, 0);
        let y = x * x;
        assert_eq!(y.value, 4.0);
        assert_eq!(y.grad[0], 4.0);
    }

    #[test]
    fn product_rule() {
        let seeds = lift_element_dofs(&[2.0, 5.0]);
        let p = seeds[0] * seeds[1];
        assert_eq!(p.value, 10.0);
        assert_eq!(p.grad[0], 5.0);
        assert_eq!(p.grad[1], 2.0);
    }

    #[test]
    fn division_and_sqrt_agree_with_finite_differences() {
        let h = 1e-7;
        let f = |x: f64| (x * x + 1.0).sqrt() / (x + 3.0);
        let fd = (f(2.0 + h) - f(2.0 - h)) / (2.0 * h);
        let x = Dual::seed(2.0, 0);
        let y = (x * x + Dual::constant(1.0)).sqrt() / (x + Dual::constant(3.0));
        assert!((y.value - f(2.0)).abs() <= 1e-15);
        assert!((y.grad[0] - fd).abs() <= 1e-8 * fd.abs());
    }

    #[test]
    fn dual2_quadratic_form() {
        // J(t) = sum (b_i + t e_i)^2 has d2J/dt2 = 2 ||e||^2 at any t.
        let base = [1.0, -2.0, 0.5];
        let e = [0.3, 0.7, -1.1];
        let t = 0.37;
        let mut j = Dual2::constant(0.0);
        for (b, s) in base.iter().zip(&e) {
            let u = Dual2::linear(*b, *s, t);
            j = j + u * u;
        }
        let norm2: f64 = e.iter().map(|v| v * v).sum();
        assert!((j.second - 2.0 * norm2).abs() <= 1e-14);
    }

    #[test]
    fn dual2_linear_function_has_zero_second_derivative() {
        let u = Dual2::linear(4.0, 2.5, 0.8);
        let j = u.scale(3.0) + Dual2::constant(1.0);
        assert_eq!(j.second, 0.0);
    }

    #[test]
    fn dual2_sqrt_taylor() {
        // f(t) = sqrt(a + b t), checked against hand derivatives.
        let (a, b, t) = (2.0, 0.6, 0.25);
        let u = Dual2::linear(a, b, t);
        let s = u.sqrt();
        let v = (a + b * t).sqrt();
        assert!((s.value - v).abs() <= 1e-15);
        assert!((s.first - 0.5 * b / v).abs() <= 1e-15);
        assert!((s.second - (-0.25 * b * b / (v * v * v))).abs() <= 1e-15);
    }
}
