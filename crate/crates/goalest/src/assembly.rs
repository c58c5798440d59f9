//! Assembly of the nonlinear Poisson residual, its Jacobian, QoI values and
//! gradients, and the vertex-localized weighted variational residual.
//!
//! All integrals use the single degree-6 quadrature rule so that residual,
//! Jacobian, QoI, and localization terms are mutually consistent: the
//! partition-of-unity and Galerkin-orthogonality identities then hold at the
//! level of quadrature sums, up to floating-point roundoff.
//!
//! Sign convention: the algebraic residual is `R_i(u) = N(u; phi_i) - L(phi_i)`
//! so the primal problem reads `R(u) = 0` and the variational residual of the
//! localization is `-R` paired with the weight.

use crate::dual::{lift_element_dofs, Dual, Dual2, Scalar};
use crate::mesh::Region;
use crate::problem::{ProblemDefinition, QoI};
use crate::space::{CoefficientVector, FunctionSpace, QuadratureRule, MAX_LOCAL_DOFS};
use crate::{Error, Result};

/// Regularization length for the J4 integrand: `sqrt(grad u . grad u + eps^2)`.
/// Keeps the directional second derivative finite at isolated critical
/// points of the solution gradient.
pub const J4_REGULARIZATION: f64 = 1e-12;

/// Square compressed-row matrix with a symmetric sparsity pattern.
/// Dirichlet rows and columns are eliminated to identity during assembly.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Builds the zero matrix with the coupling pattern of a space: one
    /// entry per pair of dofs sharing an element, plus every diagonal.
    pub fn zeros_from_pattern(space: &FunctionSpace) -> Self {
        let n = space.dof_count();
        let mut cols: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
        for t in 0..space.mesh().n_triangles() {
            let dofs = space.element_dofs(t);
            for &i in dofs {
                for &j in dofs {
                    cols[i].push(j);
                }
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for c in cols.iter_mut() {
            c.sort_unstable();
            c.dedup();
            col_idx.extend_from_slice(c);
            row_ptr.push(col_idx.len());
        }
        let values = vec![0.0; col_idx.len()];
        SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Builds a matrix from raw compressed-row parts. Column indices must
    /// be sorted within each row.
    pub fn from_raw(n: usize, row_ptr: Vec<usize>, col_idx: Vec<usize>, values: Vec<f64>) -> Self {
        assert_eq!(row_ptr.len(), n + 1);
        assert_eq!(col_idx.len(), values.len());
        debug_assert!((0..n).all(|r| col_idx[row_ptr[r]..row_ptr[r + 1]]
            .windows(2)
            .all(|w| w[0] < w[1])));
        SparseMatrix {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn add(&mut self, r: usize, c: usize, v: f64) {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k] += v,
            Err(_) => panic!("entry ({r},{c}) outside sparsity pattern"),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let lo = self.row_ptr[r];
        let hi = self.row_ptr[r + 1];
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (r, yr) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[k] * x[self.col_idx[k]];
            }
            *yr = acc;
        }
        y
    }

    pub fn matvec_transpose(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for (r, &xr) in x.iter().enumerate() {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                y[self.col_idx[k]] += self.values[k] * xr;
            }
        }
        y
    }

    /// Frobenius norm of the difference with another matrix of identical
    /// pattern.
    pub fn frobenius_diff(&self, other: &SparseMatrix) -> f64 {
        debug_assert_eq!(self.col_idx, other.col_idx);
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `A - A^T`, zero for symmetric values.
    pub fn asymmetry_norm(&self) -> f64 {
        let mut acc = 0.0;
        for r in 0..self.n {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let d = self.values[k] - self.get(c, r);
                acc += d * d;
            }
        }
        acc.sqrt()
    }
}

/// The nonlinear flux coefficient `1 + alpha u^2`, generic over the scalar.
fn flux_coefficient<T: Scalar>(alpha: f64, u: T) -> T {
    (u * u).scale(alpha) + T::from_f64(1.0)
}

/// QoI integrand at a quadrature point, generic over the scalar type.
fn qoi_integrand<T: Scalar>(qoi: QoI, u: T, grad: [T; 2]) -> T {
    match qoi {
        QoI::J1 => u,
        QoI::J2 => u * u * u,
        QoI::J3 => grad[0] * grad[0] + grad[1] * grad[1],
        QoI::J4 => {
            let g = grad[0] * grad[0] + grad[1] * grad[1];
            (g + T::from_f64(J4_REGULARIZATION * J4_REGULARIZATION)).sqrt()
        }
    }
}

/// Interpolates value and gradient from lifted local coefficients at one
/// quadrature point.
fn interpolate_at<T: Scalar>(
    local: &[T],
    shapes: &[f64; MAX_LOCAL_DOFS],
    grads: &[[f64; 2]; MAX_LOCAL_DOFS],
) -> (T, [T; 2]) {
    let mut u = T::from_f64(0.0);
    let mut g = [T::from_f64(0.0); 2];
    for (k, c) in local.iter().enumerate() {
        u = u + c.scale(shapes[k]);
        g[0] = g[0] + c.scale(grads[k][0]);
        g[1] = g[1] + c.scale(grads[k][1]);
    }
    (u, g)
}

/// Assembles the residual `R_i(u) = N(u; phi_i) - L(phi_i)` with entries at
/// Dirichlet dofs forced to zero.
pub fn assemble_residual(
    space: &FunctionSpace,
    problem: &ProblemDefinition,
    u: &CoefficientVector,
) -> Result<CoefficientVector> {
    check_coeffs(space, u)?;
    let rule = QuadratureRule::degree6();
    let nloc = space.local_dof_count();
    let mut res = vec![0.0; space.dof_count()];

    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];
    for t in 0..space.mesh().n_triangles() {
        let dofs = space.element_dofs(t);
        let mut local = [0.0; MAX_LOCAL_DOFS];
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = u.values[d];
        }
        let area = space.mesh().signed_area(t);
        let mut elem = [0.0; MAX_LOCAL_DOFS];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            space.shape_values(*bary, &mut shapes);
            space.shape_gradients(t, *bary, &mut grads);
            let (uv, ug) = interpolate_at(&local[..nloc], &shapes, &grads);
            let coeff = flux_coefficient(problem.alpha, uv);
            let p = space.physical_point(t, *bary);
            let f = problem.forcing_at(p[0], p[1]);
            let scale = w * area;
            for i in 0..nloc {
                elem[i] +=
                    scale * (coeff * (ug[0] * grads[i][0] + ug[1] * grads[i][1]) - f * shapes[i]);
            }
        }
        for (k, &d) in dofs.iter().enumerate() {
            res[d] += elem[k];
        }
    }
    for d in space.dirichlet_dofs() {
        res[d] = 0.0;
    }
    Ok(CoefficientVector { values: res })
}

/// Assembles the exact tangent of [`assemble_residual`] at `u` via
/// element-level forward-mode differentiation, with Dirichlet rows and
/// columns eliminated to the identity.
pub fn assemble_jacobian(
    space: &FunctionSpace,
    problem: &ProblemDefinition,
    u: &CoefficientVector,
) -> Result<SparseMatrix> {
    check_coeffs(space, u)?;
    let rule = QuadratureRule::degree6();
    let nloc = space.local_dof_count();
    let mut mat = SparseMatrix::zeros_from_pattern(space);

    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];
    for t in 0..space.mesh().n_triangles() {
        let dofs = space.element_dofs(t);
        let mut local = [0.0; MAX_LOCAL_DOFS];
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = u.values[d];
        }
        let seeds = lift_element_dofs(&local[..nloc]);
        let area = space.mesh().signed_area(t);
        let mut elem = [Dual::constant(0.0); MAX_LOCAL_DOFS];
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            space.shape_values(*bary, &mut shapes);
            space.shape_gradients(t, *bary, &mut grads);
            let (uv, ug) = interpolate_at(&seeds[..nloc], &shapes, &grads);
            let coeff = flux_coefficient(problem.alpha, uv);
            let scale = w * area;
            for i in 0..nloc {
                let term = coeff * (ug[0].scale(grads[i][0]) + ug[1].scale(grads[i][1]));
                elem[i] = elem[i] + term.scale(scale);
            }
        }
        for (i, &di) in dofs.iter().enumerate() {
            if space.is_dirichlet(di) {
                continue;
            }
            for (j, &dj) in dofs.iter().enumerate() {
                if space.is_dirichlet(dj) {
                    continue;
                }
                mat.add(di, dj, elem[i].grad[j]);
            }
        }
    }
    for d in space.dirichlet_dofs() {
        mat.add(d, d, 1.0);
    }
    Ok(mat)
}

/// QoI value, gradient, and a count of quadrature points where the J4
/// integrand sits below its regularization floor.
#[derive(Debug, Clone)]
pub struct QoiAssembly {
    pub value: f64,
    pub gradient: CoefficientVector,
    pub near_singular_points: usize,
}

/// Assembles a QoI value and its gradient with respect to the nodal
/// coefficients. Gradient entries at Dirichlet dofs are zeroed; the adjoint
/// problem carries homogeneous Dirichlet conditions.
pub fn assemble_qoi(space: &FunctionSpace, qoi: QoI, u: &CoefficientVector) -> Result<QoiAssembly> {
    check_coeffs(space, u)?;
    let rule = QuadratureRule::degree6();
    let nloc = space.local_dof_count();
    let mut value = 0.0;
    let mut gradient = vec![0.0; space.dof_count()];
    let mut near_singular = 0usize;

    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];
    for t in 0..space.mesh().n_triangles() {
        if qoi.subdomain_only() && space.mesh().region(t) != Region::InSubdomain {
            continue;
        }
        let dofs = space.element_dofs(t);
        let mut local = [0.0; MAX_LOCAL_DOFS];
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = u.values[d];
        }
        let seeds = lift_element_dofs(&local[..nloc]);
        let area = space.mesh().signed_area(t);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            space.shape_values(*bary, &mut shapes);
            space.shape_gradients(t, *bary, &mut grads);
            let (uv, ug) = interpolate_at(&seeds[..nloc], &shapes, &grads);
            if qoi == QoI::J4 {
                let g2 = ug[0].value * ug[0].value + ug[1].value * ug[1].value;
                if g2 < J4_REGULARIZATION * J4_REGULARIZATION {
                    near_singular += 1;
                }
            }
            let integrand = qoi_integrand(qoi, uv, ug).scale(w * area);
            if !integrand.value.is_finite() {
                return Err(Error::NonFinite(format!(
                    "QoI {} integrand on triangle {t}",
                    qoi.label()
                )));
            }
            value += integrand.value;
            for (k, &d) in dofs.iter().enumerate() {
                gradient[d] += integrand.grad[k];
            }
        }
    }
    for d in space.dirichlet_dofs() {
        gradient[d] = 0.0;
    }
    Ok(QoiAssembly {
        value,
        gradient: CoefficientVector { values: gradient },
        near_singular_points: near_singular,
    })
}

/// QoI value only.
pub fn qoi_value(space: &FunctionSpace, qoi: QoI, u: &CoefficientVector) -> Result<f64> {
    check_coeffs(space, u)?;
    let rule = QuadratureRule::degree6();
    let nloc = space.local_dof_count();
    let mut value = 0.0;
    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];
    for t in 0..space.mesh().n_triangles() {
        if qoi.subdomain_only() && space.mesh().region(t) != Region::InSubdomain {
            continue;
        }
        let dofs = space.element_dofs(t);
        let mut local = [0.0; MAX_LOCAL_DOFS];
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = u.values[d];
        }
        let area = space.mesh().signed_area(t);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            space.shape_values(*bary, &mut shapes);
            space.shape_gradients(t, *bary, &mut grads);
            let (uv, ug) = interpolate_at(&local[..nloc], &shapes, &grads);
            value += qoi_integrand(qoi, uv, ug) * w * area;
        }
    }
    Ok(value)
}

/// Evaluates `J(base + theta * direction)` together with its first and
/// second derivatives in `theta`, by univariate Taylor arithmetic through
/// the same integrand as [`assemble_qoi`]. The second derivative equals the
/// Hessian quadratic form `direction^T H direction` by the chain rule; the
/// Hessian itself is never formed.
pub fn qoi_along_line(
    space: &FunctionSpace,
    qoi: QoI,
    base: &CoefficientVector,
    direction: &CoefficientVector,
    theta: f64,
) -> Result<Dual2> {
    check_coeffs(space, base)?;
    check_coeffs(space, direction)?;
    let rule = QuadratureRule::degree6();
    let nloc = space.local_dof_count();
    let mut total = Dual2::constant(0.0);
    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];
    for t in 0..space.mesh().n_triangles() {
        if qoi.subdomain_only() && space.mesh().region(t) != Region::InSubdomain {
            continue;
        }
        let dofs = space.element_dofs(t);
        let mut local = [Dual2::constant(0.0); MAX_LOCAL_DOFS];
        for (k, &d) in dofs.iter().enumerate() {
            local[k] = Dual2::linear(base.values[d], direction.values[d], theta);
        }
        let area = space.mesh().signed_area(t);
        for (bary, w) in rule.points.iter().zip(&rule.weights) {
            space.shape_values(*bary, &mut shapes);
            space.shape_gradients(t, *bary, &mut grads);
            let (uv, ug) = interpolate_at(&local[..nloc], &shapes, &grads);
            let integrand = qoi_integrand(qoi, uv, ug).scale(w * area);
            if !integrand.is_finite() {
                return Err(Error::NonFinite(format!(
                    "QoI {} second directional derivative on triangle {t}",
                    qoi.label()
                )));
            }
            total = total + integrand;
        }
    }
    Ok(total)
}

/// Localized weighted variational residual at one mesh vertex:
/// `L(w phi^i) - N(u; w phi^i)` where `w` is a fine-space weight function
/// and `phi^i` the P1 hat at the vertex. Only elements in the vertex star
/// contribute. Summing over all vertices reproduces the adjoint-weighted
/// pairing `-w . R(u)` because the hats partition unity.
pub fn weighted_variational_residual(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    u: &CoefficientVector,
    weight: &CoefficientVector,
    vertex: usize,
) -> Result<f64> {
    check_coeffs(fine, u)?;
    check_coeffs(fine, weight)?;
    if vertex >= fine.mesh().n_vertices() {
        return Err(Error::IndexOutOfRange(format!("vertex {vertex}")));
    }
    let mut total = 0.0;
    for &t in fine.mesh().vertex_star(vertex) {
        let local_slot = fine
            .mesh()
            .triangle(t)
            .iter()
            .position(|&v| v == vertex)
            .unwrap();
        let contributions = element_localized_contributions(fine, problem, t, u, weight);
        total += contributions[local_slot];
    }
    Ok(total)
}

/// Per-element vertex contributions `L(w phi) - N(u; w phi)` for the three
/// P1 hats of the element, shared by the single-vertex probe above and the
/// full localization sweep.
pub fn element_localized_contributions(
    fine: &FunctionSpace,
    problem: &ProblemDefinition,
    t: usize,
    u: &CoefficientVector,
    weight: &CoefficientVector,
) -> [f64; 3] {
    let rule = QuadratureRule::degree6();
    let nloc = fine.local_dof_count();
    let mut shapes = [0.0; MAX_LOCAL_DOFS];
    let mut grads = [[0.0; 2]; MAX_LOCAL_DOFS];

    let dofs = fine.element_dofs(t);
    let mut u_local = [0.0; MAX_LOCAL_DOFS];
    let mut w_local = [0.0; MAX_LOCAL_DOFS];
    for (k, &d) in dofs.iter().enumerate() {
        u_local[k] = u.values[d];
        w_local[k] = weight.values[d];
    }
    let area = fine.mesh().signed_area(t);
    let grad_l = fine.barycentric_gradients(t);
    let mut out = [0.0; 3];
    for (bary, w) in rule.points.iter().zip(&rule.weights) {
        fine.shape_values(*bary, &mut shapes);
        fine.shape_gradients(t, *bary, &mut grads);
        let (uv, ug) = interpolate_at(&u_local[..nloc], &shapes, &grads);
        let (wv, wg) = interpolate_at(&w_local[..nloc], &shapes, &grads);
        let coeff = flux_coefficient(problem.alpha, uv);
        let p = fine.physical_point(t, *bary);
        let f = problem.forcing_at(p[0], p[1]);
        let scale = w * area;
        for (slot, hat_grad) in grad_l.iter().enumerate() {
            let hat = bary[slot];
            // grad(w phi) = phi grad w + w grad phi
            let prod_grad = [
                hat * wg[0] + wv * hat_grad[0],
                hat * wg[1] + wv * hat_grad[1],
            ];
            let n_term = coeff * (ug[0] * prod_grad[0] + ug[1] * prod_grad[1]);
            let l_term = f * wv * hat;
            out[slot] += scale * (l_term - n_term);
        }
    }
    out
}

fn check_coeffs(space: &FunctionSpace, u: &CoefficientVector) -> Result<()> {
    if u.len() != space.dof_count() {
        return Err(Error::SpaceMismatch {
            expected: space.dof_count(),
            got: u.len(),
        });
    }
    Ok(())
}
